//! Generated corpora for tests, benchmarks and surrogate experiments.

use crate::corpus::Sentence;
use crate::numerics::SeededRng;

fn word(i: usize) -> String {
    format!("w{i}")
}

/// Cumulative Zipf weights `1 / rank^exponent`.
fn zipf_cdf(k: usize, exponent: f64) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=k)
        .map(|r| {
            acc += 1.0 / (r as f64).powf(exponent);
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut SeededRng) -> usize {
    let u = rng.unit() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Independent Zipf-distributed words, sentence lengths uniform in
/// `[mean_len / 2, 3 * mean_len / 2]`.
pub fn zipf_corpus(k: usize, sentences: usize, mean_len: usize, exponent: f64, rng: &mut SeededRng) -> Vec<Sentence> {
    let cdf = zipf_cdf(k, exponent);
    let lo = (mean_len / 2).max(1);
    let hi = (3 * mean_len / 2).max(lo);
    (0..sentences)
        .map(|i| {
            let n = lo + rng.below(hi - lo + 1);
            let mut s = Sentence::new((0..n).map(|_| word(draw(&cdf, rng))));
            s.starts_document = i == 0;
            s
        })
        .collect()
}

/// First-order Markov text: every word has `fanout` likely successors drawn
/// from a table seeded by `topic`, so different topics share the vocabulary
/// but not the transitions.
pub fn topical_corpus(k: usize, topic: u64, sentences: usize, mean_len: usize, fanout: usize, rng: &mut SeededRng) -> Vec<Sentence> {
    let mut table_rng = SeededRng::new(topic).fork(0x0074_6f70_6963);
    let successors: Vec<Vec<usize>> = (0..=k).map(|_| (0..fanout).map(|_| table_rng.below(k)).collect()).collect();
    let lo = (mean_len / 2).max(1);
    let hi = (3 * mean_len / 2).max(lo);
    (0..sentences)
        .map(|i| {
            let n = lo + rng.below(hi - lo + 1);
            let mut prev = k;
            let tokens: Vec<String> = (0..n)
                .map(|_| {
                    // one draw in ten ignores the table
                    let w = if rng.unit() < 0.1 { rng.below(k) } else { successors[prev][rng.below(fanout)] };
                    prev = w;
                    word(w)
                })
                .collect();
            let mut s = Sentence::new(tokens);
            s.starts_document = i == 0;
            s
        })
        .collect()
}

/// Documents that each reuse a handful of their own words: a model trained
/// on all documents cannot predict which, a cache can.
pub fn repetitive_corpus(k: usize, documents: usize, sentences_per_doc: usize, mean_len: usize, topic_words: usize, rng: &mut SeededRng) -> Vec<Sentence> {
    let mut out = Vec::with_capacity(documents * sentences_per_doc);
    for _ in 0..documents {
        let topic: Vec<usize> = (0..topic_words).map(|_| rng.below(k)).collect();
        for j in 0..sentences_per_doc {
            let n = (mean_len / 2).max(1) + rng.below(mean_len + 1);
            let tokens: Vec<String> = (0..n)
                .map(|_| if rng.unit() < 0.8 { word(topic[rng.below(topic_words)]) } else { word(rng.below(k)) })
                .collect();
            let mut s = Sentence::new(tokens);
            s.starts_document = j == 0;
            out.push(s);
        }
    }
    out
}
