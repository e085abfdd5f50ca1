//! Corpus ingestion, vocabulary construction and sentence encoding.
//!
//! Input files hold one sentence per line with whitespace separated tokens.
//! Blank lines are not sentences; they mark document boundaries, which the
//! state-carryover evaluation uses.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const START_MARK: &str = "<s>";
pub const END_MARK: &str = "</s>";
pub const UNKNOWN_MARK: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    /// First sentence of an article.
    pub starts_document: bool,
}

impl Sentence {
    pub fn new<I, T>(tokens: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        Sentence {
            tokens: tokens.into_iter().map(Into::into).collect(),
            starts_document: false,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Parse already-decoded text. Never fails; see [`load_corpus`] for files.
pub fn parse_corpus(text: &str, lowercase: bool) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut new_document = true;
    for line in text.lines() {
        if let Some(s) = parse_line(line, lowercase, &mut new_document) {
            out.push(s);
        }
    }
    out
}

fn parse_line(line: &str, lowercase: bool, new_document: &mut bool) -> Option<Sentence> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect();
    if tokens.is_empty() {
        *new_document = true;
        return None;
    }
    let s = Sentence {
        tokens,
        starts_document: *new_document,
    };
    *new_document = false;
    Some(s)
}

/// Read a UTF-8 corpus file, one sentence per non-blank line.
pub fn load_corpus(path: impl AsRef<Path>, lowercase: bool) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut new_document = true;
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(raw).map_err(|_| Error::Decode {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        if let Some(s) = parse_line(line, lowercase, &mut new_document) {
            out.push(s);
        }
    }
    Ok(out)
}

pub fn token_count(sentences: &[Sentence]) -> usize {
    sentences.iter().map(Sentence::len).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Sentence>,
    pub validation: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

impl CorpusSplit {
    pub fn token_counts(&self) -> (usize, usize, usize) {
        (
            token_count(&self.train),
            token_count(&self.validation),
            token_count(&self.test),
        )
    }
}

/// Greedy split on sentence boundaries: the training part takes whole
/// sentences until it holds at least `n_train` tokens, validation likewise,
/// and the remainder is the test part.
pub fn split_corpus(sentences: &[Sentence], n_train: usize, n_valid: usize) -> Result<CorpusSplit> {
    let total = token_count(sentences);
    if n_train + n_valid > total {
        return Err(Error::Bounds {
            requested: n_train + n_valid,
            available: total,
        });
    }
    let take = |from: usize, budget: usize| -> usize {
        let mut acc = 0;
        let mut end = from;
        while acc < budget && end < sentences.len() {
            acc += sentences[end].len();
            end += 1;
        }
        end
    };
    let train_end = take(0, n_train);
    let valid_end = take(train_end, n_valid);
    let part = |range: std::ops::Range<usize>| -> Vec<Sentence> {
        let mut v = sentences[range].to_vec();
        if let Some(first) = v.first_mut() {
            first.starts_document = true;
        }
        v
    };
    Ok(CorpusSplit {
        train: part(0..train_end),
        validation: part(train_end..valid_end),
        test: part(valid_end..sentences.len()),
    })
}

/// Word list with training frequencies and the three marks.
///
/// Words are ordered by descending frequency with lexicographic tie
/// breaking; frequency-based class assignment relies on that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    frequencies: Vec<u64>,
    index: HashMap<String, usize>,
    start: usize,
    end: usize,
    unknown: usize,
}

impl Vocabulary {
    fn from_entries(mut entries: Vec<(String, u64)>) -> Result<Self> {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_ordered(entries)
    }

    fn from_ordered(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (w, _)) in entries.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word `{w}`")));
            }
        }
        let find = |mark: &str| {
            index
                .get(mark)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("vocabulary lacks the `{mark}` mark")))
        };
        let (start, end, unknown) = (find(START_MARK)?, find(END_MARK)?, find(UNKNOWN_MARK)?);
        let (words, frequencies) = entries.into_iter().unzip();
        Ok(Vocabulary {
            words,
            frequencies,
            index,
            start,
            end,
            unknown,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.frequencies[index]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn unknown(&self) -> usize {
        self.unknown
    }

    pub fn is_mark(&self, index: usize) -> bool {
        index == self.start || index == self.end || index == self.unknown
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (w, f)) in self.words.iter().zip(&self.frequencies).enumerate() {
            let _ = writeln!(out, "{w}\t{i}\t{f}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::InvalidArgument(format!("vocabulary line {}: `{line}`", n + 1));
            let mut cols = line.split('\t');
            let word = cols.next().ok_or_else(bad)?;
            let index: usize = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            let freq: u64 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            if index != entries.len() {
                return Err(bad());
            }
            entries.push((word.to_string(), freq));
        }
        Self::from_ordered(entries)
    }

    /// SHA-256 of the TSV export, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_tsv().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Build a vocabulary from the training sentences. Words seen fewer than
/// `min_count` times are folded into the unknown mark.
pub fn build_vocabulary(train: &[Sentence], min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in train {
        for t in &s.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut unknown = 0;
    let mut entries = Vec::with_capacity(counts.len() + 3);
    for (w, c) in counts {
        if c < min_count || w == START_MARK || w == END_MARK || w == UNKNOWN_MARK {
            unknown += c;
        } else {
            entries.push((w.to_string(), c));
        }
    }
    entries.push((START_MARK.to_string(), 0));
    entries.push((END_MARK.to_string(), train.len() as u64));
    entries.push((UNKNOWN_MARK.to_string(), unknown));
    Vocabulary::from_entries(entries)
}

/// `[start] + tokens + [end]`, with out-of-vocabulary tokens mapped to unknown.
pub fn encode(sentence: &Sentence, vocab: &Vocabulary) -> Vec<usize> {
    let mut out = Vec::with_capacity(sentence.len() + 2);
    out.push(vocab.start());
    out.extend(sentence.tokens.iter().map(|t| vocab.index_of(t).unwrap_or(vocab.unknown())));
    out.push(vocab.end());
    out
}

/// Inverse of [`encode`] for in-vocabulary sentences; boundary marks are dropped.
pub fn decode(ids: &[usize], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .filter(|&&i| i != vocab.start() && i != vocab.end())
        .map(|&i| vocab.word(i).to_string())
        .collect()
}

/// An encoded sentence plus its document-start flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub starts_document: bool,
}

pub fn encode_all(sentences: &[Sentence], vocab: &Vocabulary) -> Vec<Encoded> {
    sentences
        .iter()
        .map(|s| Encoded {
            ids: encode(s, vocab),
            starts_document: s.starts_document,
        })
        .collect()
}

/// Reverse the token order of every sentence, keeping sentence order.
pub fn reverse_sentences(sentences: &[Sentence]) -> Vec<Sentence> {
    sentences
        .iter()
        .map(|s| Sentence {
            tokens: s.tokens.iter().rev().cloned().collect(),
            starts_document: s.starts_document,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(spec: &[&[&str]]) -> Vec<Sentence> {
        spec.iter().map(|s| Sentence::new(s.iter().copied())).collect()
    }

    fn tokens(s: &[Sentence]) -> Vec<Vec<String>> {
        s.iter().map(|s| s.tokens.clone()).collect()
    }

    #[test]
    fn parse_drops_blank_lines_and_lowercases() {
        let s = parse_corpus("The cat sat\n\ndog ran", true);
        assert_eq!(tokens(&s), vec![vec!["the", "cat", "sat"], vec!["dog", "ran"]]);
        assert!(s[0].starts_document && s[1].starts_document);
        assert!(parse_corpus("", true).is_empty());
        let s = parse_corpus("A b\nC d\n", false);
        assert_eq!(s[0].tokens, vec!["A", "b"]);
        assert!(s[0].starts_document && !s[1].starts_document);
    }

    #[test]
    fn load_reports_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.txt");
        let err = load_corpus(&missing, true).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("missing.txt"));

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, b"fine line\nbad \xff byte\n").unwrap();
        match load_corpus(&bad, true).unwrap_err() {
            Error::Decode { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }

        let good = dir.path().join("good.txt");
        std::fs::write(&good, "The cat sat\n\ndog ran").unwrap();
        assert_eq!(load_corpus(&good, true).unwrap().len(), 2);
    }

    #[test]
    fn split_on_exact_boundaries() {
        let s = sents(&[&["a", "b"][..]; 6]);
        let split = split_corpus(&s, 4, 2).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (2, 1, 3)
        );
    }

    #[test]
    fn split_rounds_up_to_sentence_end() {
        // enumerate every feasible (n_train, n_valid) against a brute-force
        // prefix search for the first boundary holding at least n tokens
        let s = sents(&[&["a", "b"], &["c"], &["d", "e", "f"], &["g", "h"], &["i"]]);
        let total = token_count(&s);
        let first_boundary = |from: usize, need: usize| -> usize {
            (from..=s.len())
                .find(|&end| token_count(&s[from..end]) >= need)
                .unwrap_or(s.len())
        };
        for n_train in 0..=total {
            for n_valid in 0..=(total - n_train) {
                let split = split_corpus(&s, n_train, n_valid).unwrap();
                let te = first_boundary(0, n_train);
                let ve = first_boundary(te, n_valid);
                assert_eq!(split.train.len(), te);
                assert_eq!(split.validation.len(), ve - te);
                assert_eq!(split.test.len(), s.len() - ve);
            }
        }
        let two = sents(&[&["a", "b"][..]; 4]);
        let split = split_corpus(&two, 3, 0).unwrap();
        assert_eq!(token_count(&split.train), 4);
    }

    #[test]
    fn split_rejects_oversized_request() {
        let s = sents(&[&["a", "b"][..]; 2]);
        assert!(matches!(split_corpus(&s, 3, 2), Err(Error::Bounds { .. })));
    }

    #[test]
    fn vocabulary_examples() {
        let v = build_vocabulary(&sents(&[&["a", "b", "a"]]), 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.frequency(v.index_of("a").unwrap()), 2);
        assert_eq!(v.frequency(v.index_of("b").unwrap()), 1);
        assert_eq!(v.word(0), "a");

        let v = build_vocabulary(&sents(&[&["a", "b", "a"]]), 2).unwrap();
        assert!(v.index_of("b").is_none());
        assert_eq!(v.frequency(v.unknown()), 1);

        let v = build_vocabulary(&sents(&[&["b", "a"]]), 1).unwrap();
        assert!(v.index_of("a").unwrap() < v.index_of("b").unwrap());

        assert!(build_vocabulary(&[], 1).is_err());
        assert!(build_vocabulary(&sents(&[&["a"]]), 0).is_err());
    }

    #[test]
    fn encode_examples() {
        let v = build_vocabulary(&sents(&[&["a", "b"]]), 1).unwrap();
        let ids = encode(&Sentence::new(["a", "b"]), &v);
        assert_eq!(ids, vec![v.start(), v.index_of("a").unwrap(), v.index_of("b").unwrap(), v.end()]);
        assert_eq!(encode(&Sentence::new(["z"]), &v), vec![v.start(), v.unknown(), v.end()]);
        assert_eq!(encode(&Sentence::new(Vec::<String>::new()), &v), vec![v.start(), v.end()]);
    }

    #[test]
    fn tsv_round_trip_preserves_hash() {
        let v = build_vocabulary(&sents(&[&["x", "y", "x", "z"], &["y"]]), 1).unwrap();
        let back = Vocabulary::from_tsv(&v.to_tsv()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.hash(), v.hash());
        assert_eq!(v.hash().len(), 64);
    }

    #[test]
    fn reverse_examples() {
        let s = sents(&[&["a", "b", "c"], &["d"]]);
        let r = reverse_sentences(&s);
        assert_eq!(tokens(&r), vec![vec!["c", "b", "a"], vec!["d"]]);
        assert_eq!(reverse_sentences(&r), s);
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
        prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 0..6), 1..12)
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(c in arb_corpus()) {
            let s: Vec<Sentence> = c.iter().map(|t| Sentence::new(t.clone())).collect();
            let v = build_vocabulary(&s, 1).unwrap();
            for sent in &s {
                let ids = encode(sent, &v);
                prop_assert_eq!(ids.len(), sent.len() + 2);
                prop_assert_eq!(&decode(&ids, &v), &sent.tokens);
            }
        }

        #[test]
        fn split_conserves_tokens(c in arb_corpus(), a in 0usize..40, b in 0usize..40) {
            let s: Vec<Sentence> = c.iter().map(|t| Sentence::new(t.clone())).collect();
            let total = token_count(&s);
            if a + b <= total {
                let split = split_corpus(&s, a, b).unwrap();
                let (x, y, z) = split.token_counts();
                prop_assert_eq!(x + y + z, total);
                prop_assert!(x >= a);
            }
        }

        #[test]
        fn vocabulary_is_deterministic(c in arb_corpus()) {
            let s: Vec<Sentence> = c.iter().map(|t| Sentence::new(t.clone())).collect();
            let mut rev = s.clone();
            rev.reverse();
            let (a, b) = (build_vocabulary(&s, 1).unwrap(), build_vocabulary(&rev, 1).unwrap());
            prop_assert_eq!(a.words(), b.words());
            let v = build_vocabulary(&s, 1).unwrap();
            for w in v.frequencies().windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn reversal_preserves_multiset(c in arb_corpus()) {
            let s: Vec<Sentence> = c.iter().map(|t| Sentence::new(t.clone())).collect();
            for (a, b) in s.iter().zip(reverse_sentences(&s)) {
                let mut x = a.tokens.clone();
                let mut y = b.tokens.clone();
                x.sort();
                y.sort();
                prop_assert_eq!(x, y);
            }
        }
    }
}
