//! Perplexity, throughput and reversed-order scoring.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::caching::{CacheConfig, CacheState, CarryoverState};
use crate::corpus::{encode_all, reverse_sentences, Encoded, Sentence, Vocabulary};
use crate::error::{Error, Result};
use crate::models::Network;
use crate::numerics::Scalar;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub cache: Option<CacheConfig>,
    pub carryover: bool,
}

impl EvalOptions {
    fn sequential(&self) -> bool {
        self.cache.is_some() || self.carryover
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Scored tokens: every word plus the end mark of each sentence.
    pub tokens: usize,
    pub log2_prob: f64,
    pub ppl: f64,
    /// Absent when nothing was scored or no time was measured.
    pub words_per_s: Option<f64>,
    pub sentence_log2: Vec<f64>,
}

impl EvalReport {
    /// Builds a report from per-sentence natural-log totals.
    pub fn from_sentence_logs(sentence_ln: &[f64], tokens: usize, seconds: f64) -> Result<Self> {
        if tokens == 0 {
            return Err(Error::Empty("evaluation tokens"));
        }
        let sentence_log2: Vec<f64> = sentence_ln.iter().map(|l| l / std::f64::consts::LN_2).collect();
        let log2_prob: f64 = sentence_log2.iter().sum();
        Ok(EvalReport {
            tokens,
            log2_prob,
            ppl: perplexity_from_log2(log2_prob, tokens),
            words_per_s: throughput(tokens, seconds),
            sentence_log2,
        })
    }

    pub fn tsv_header() -> &'static str {
        "label\ttokens\tlog2_prob\tppl\twords_per_s"
    }

    pub fn tsv_row(&self, label: &str) -> String {
        let wps = self.words_per_s.map_or(String::new(), |w| format!("{w:.1}"));
        format!("{label}\t{}\t{:.6}\t{:.4}\t{wps}", self.tokens, self.log2_prob, self.ppl)
    }

    pub fn table(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{label}");
        let _ = writeln!(s, "  tokens      {}", self.tokens);
        let _ = writeln!(s, "  log2 prob   {:.4}", self.log2_prob);
        let _ = writeln!(s, "  perplexity  {:.4}", self.ppl);
        if let Some(w) = self.words_per_s {
            let _ = writeln!(s, "  words/s     {w:.1}");
        }
        s
    }
}

/// `2^(−Σ log2 P / T)`.
pub fn perplexity_from_log2(log2_prob: f64, tokens: usize) -> f64 {
    (-log2_prob / tokens as f64).exp2()
}

/// Tokens per second; `None` for zero tokens or unmeasurable time.
pub fn throughput(tokens: usize, seconds: f64) -> Option<f64> {
    (tokens > 0 && seconds > 0.0).then(|| tokens as f64 / seconds)
}

fn scored_tokens(sentences: &[Encoded]) -> usize {
    sentences.iter().map(|s| s.ids.len().saturating_sub(1)).sum()
}

/// Natural-log totals per sentence, scored in corpus order with caches and
/// carryover as configured.
pub fn sentence_log_probs<S: Scalar>(net: &Network<S>, sentences: &[Encoded], opts: &EvalOptions) -> Result<Vec<f64>> {
    if !opts.sequential() {
        let totals: Vec<Result<f64>> = sentences
            .par_iter()
            .map(|s| net.score_sentence(&s.ids, &net.initial_state()).map(|r| r.total().as_f64()))
            .collect();
        return totals.into_iter().collect();
    }
    let zero = net.initial_state();
    let mut carry = CarryoverState::new();
    let mut cache = opts.cache.map(CacheState::new).transpose()?;
    let mut out = Vec::with_capacity(sentences.len());
    for s in sentences {
        if s.starts_document {
            carry.reset();
            if let Some(c) = &mut cache {
                c.cache.clear();
            }
        }
        let init = if opts.carryover { carry.carryover_initial_state(s.starts_document, &zero) } else { zero.clone() };
        let total = match &mut cache {
            None => {
                let r = net.score_sentence(&s.ids, &init)?;
                carry.store(r.final_state.clone());
                r.total().as_f64()
            }
            Some(c) => {
                let ids = &s.ids;
                if ids.len() < 2 {
                    return Err(Error::InvalidArgument("an encoded sentence needs at least the two boundary marks".into()));
                }
                let tape = net.core.forward(&ids[..ids.len() - 1], &init)?;
                let mut total = 0.0;
                for t in 0..tape.len() {
                    let w = ids[t + 1];
                    if w >= net.spec.vocab_size {
                        return Err(Error::IndexOutOfRange {
                            what: "vocabulary",
                            index: w,
                            size: net.spec.vocab_size,
                        });
                    }
                    let (lp, in_class) = net.structure.log_prob_factors(&net.output, tape.hidden(t), tape.input(t), w);
                    let leaf = net.structure.leaf_node(w);
                    total += c.score(w, lp.as_f64(), leaf, in_class.as_f64());
                    c.observe(w, leaf);
                }
                carry.store(tape.final_state(&init));
                total
            }
        };
        out.push(total);
    }
    Ok(out)
}

/// Perplexity over `sentences`; the start mark is conditioned on, every
/// following token including the end mark is scored.
pub fn perplexity<S: Scalar>(net: &Network<S>, sentences: &[Encoded], opts: &EvalOptions) -> Result<EvalReport> {
    if sentences.is_empty() {
        return Err(Error::Empty("evaluation sentences"));
    }
    let start = Instant::now();
    let totals = sentence_log_probs(net, sentences, opts)?;
    let secs = start.elapsed().as_secs_f64();
    EvalReport::from_sentence_logs(&totals, scored_tokens(sentences), secs)
}

/// Scores reversed test text with a model trained on reversed sentences.
pub fn evaluate_reversed<S: Scalar>(net: &Network<S>, vocab: &Vocabulary, test: &[Sentence], opts: &EvalOptions) -> Result<EvalReport> {
    if vocab.len() != net.spec.vocab_size {
        return Err(Error::shape("evaluate_reversed", format!("model vocabulary {}", net.spec.vocab_size), format!("vocabulary of {}", vocab.len())));
    }
    perplexity(net, &encode_all(&reverse_sentences(test), vocab), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, ModelSpec};
    use crate::output::OutputStrategy;

    fn spec(arch: Architecture, k: usize) -> ModelSpec {
        ModelSpec {
            architecture: arch,
            vocab_size: k,
            embedding: 3,
            hidden: 4,
            order: 3,
            direct: false,
            bias: true,
            peepholes: true,
        }
    }

    fn enc(ids: &[usize], doc: bool) -> Encoded {
        Encoded {
            ids: ids.to_vec(),
            starts_document: doc,
        }
    }

    #[test]
    fn uniform_model_has_vocabulary_perplexity() {
        let net = Network::<f64>::zeros(spec(Architecture::Lstm, 10), OutputStrategy::Full { vocab_size: 10 }).unwrap();
        let data = vec![enc(&[0, 3, 4, 5, 1], true), enc(&[0, 9, 1], false)];
        let r = perplexity(&net, &data, &EvalOptions::default()).unwrap();
        assert_eq!(r.tokens, 6);
        assert!((r.ppl - 10.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_model_has_unit_perplexity() {
        // a bias of +60 on the end mark row makes it certain
        let mut net = Network::<f64>::zeros(spec(Architecture::Rnn, 4), OutputStrategy::Full { vocab_size: 4 }).unwrap();
        net.output.bias.as_mut().unwrap()[1] = 60.0;
        let r = perplexity(&net, &vec![enc(&[0, 1], true); 5], &EvalOptions::default()).unwrap();
        assert!((r.ppl - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let net = Network::<f64>::zeros(spec(Architecture::Rnn, 4), OutputStrategy::Full { vocab_size: 4 }).unwrap();
        assert!(perplexity(&net, &[], &EvalOptions::default()).is_err());
        assert!(EvalReport::from_sentence_logs(&[], 0, 1.0).is_err());
    }

    #[test]
    fn throughput_omitted_without_tokens() {
        assert_eq!(throughput(0, 1.0), None);
        assert_eq!(throughput(10, 2.0), Some(5.0));
    }

    #[test]
    fn product_and_log_sum_forms_agree() {
        let mut rng = crate::numerics::SeededRng::new(2);
        let probs: Vec<f64> = (0..1000).map(|_| rng.uniform(0.01, 1.0)).collect();
        let product_form = probs.iter().map(|p| p.powf(-1.0 / 1000.0)).product::<f64>();
        let log2: f64 = probs.iter().map(|p| p.log2()).sum();
        let log_form = perplexity_from_log2(log2, 1000);
        assert!((product_form - log_form).abs() / log_form < 1e-9);
    }

    #[test]
    fn parallel_and_sequential_paths_agree() {
        let mut rng = crate::numerics::SeededRng::new(4);
        let net = Network::<f64>::new(spec(Architecture::Lstm, 8), OutputStrategy::Full { vocab_size: 8 }, &mut rng).unwrap();
        let data: Vec<Encoded> = (0..6).map(|i| enc(&[0, 2 + i % 5, 3, 1], i % 3 == 0)).collect();
        let par = perplexity(&net, &data, &EvalOptions::default()).unwrap();
        let cache = CacheConfig {
            lambda: 1.0,
            length: 5,
            decay: crate::caching::Decay::Constant,
            unit: crate::caching::CacheUnit::Word,
        };
        let seq = perplexity(&net, &data, &EvalOptions { cache: Some(cache), carryover: false }).unwrap();
        assert_eq!(par.log2_prob.to_bits(), seq.log2_prob.to_bits());
        assert_eq!(par.sentence_log2, seq.sentence_log2);
    }

    #[test]
    fn carryover_changes_only_continuing_sentences() {
        let mut rng = crate::numerics::SeededRng::new(6);
        let net = Network::<f64>::new(spec(Architecture::Rnn, 8), OutputStrategy::Full { vocab_size: 8 }, &mut rng).unwrap();
        let data = vec![enc(&[0, 2, 3, 1], true), enc(&[0, 4, 1], false), enc(&[0, 4, 1], true)];
        let plain = perplexity(&net, &data, &EvalOptions::default()).unwrap();
        let carried = perplexity(&net, &data, &EvalOptions { cache: None, carryover: true }).unwrap();
        assert_eq!(plain.sentence_log2[0], carried.sentence_log2[0]);
        assert_ne!(plain.sentence_log2[1], carried.sentence_log2[1]);
        assert_eq!(plain.sentence_log2[2], carried.sentence_log2[2]);
    }
}
