mod common;

use common::*;
use nnlm::corpus::{build_vocabulary, encode_all, Encoded, Sentence};
use nnlm::evaluation::{perplexity, EvalOptions};
use nnlm::models::{Architecture, ParameterSet};
use nnlm::Network;
use nnlm::numerics::SeededRng;
use nnlm::output::OutputStrategy;
use nnlm::synthetic::topical_corpus;
use nnlm::training::{
    context_gradient, dynamic_evaluate, train, update_parameters, DynamicConfig, OutputGradient, ProposalDistribution, SamplingConfig,
    Trainer, TrainingConfig,
};

fn total_nll(net: &Network, data: &[Encoded]) -> f64 {
    data.iter().map(|s| net.sentence_nll(&s.ids, &net.initial_state()).unwrap()).sum()
}

fn toy_data(seed: u64) -> (Vec<Encoded>, Vec<Encoded>, usize) {
    let mut rng = SeededRng::new(seed);
    let train = topical_corpus(30, 1, 60, 8, 2, &mut rng);
    let valid = topical_corpus(30, 1, 15, 8, 2, &mut rng);
    let vocab = build_vocabulary(&train, 1).unwrap();
    (encode_all(&train, &vocab), encode_all(&valid, &vocab), vocab.len())
}

#[test]
fn first_epoch_lowers_training_loss() {
    for seed in 0..4 {
        for arch in ARCHITECTURES {
            let (train_set, valid_set, k) = toy_data(seed);
            let mut rng = SeededRng::new(seed + 100);
            let mut net = Network::new(spec(arch, k, 8, 12, false, true, true), OutputStrategy::Full { vocab_size: k }, &mut rng).unwrap();
            let before = total_nll(&net, &train_set);
            let cfg = TrainingConfig { seed, ..Default::default() };
            Trainer::new(cfg, None).unwrap().train_epoch(&mut net, &train_set, &valid_set).unwrap();
            let after = total_nll(&net, &train_set);
            assert!(after < before, "{arch} seed {seed}: {after} >= {before}");
        }
    }
}

#[test]
fn repeated_sentence_is_memorised() {
    // nine words plus three marks: k = 12
    let sentence = Sentence::new(["a", "b", "c", "d", "e", "f", "g", "h", "i"]);
    let corpus = vec![sentence; 50];
    let vocab = build_vocabulary(&corpus, 1).unwrap();
    assert_eq!(vocab.len(), 12);
    let data = encode_all(&corpus, &vocab);
    for arch in ARCHITECTURES {
        let mut rng = SeededRng::new(5);
        let mut net = Network::new(spec(arch, 12, 10, 20, false, true, true), OutputStrategy::Full { vocab_size: 12 }, &mut rng).unwrap();
        let cfg = TrainingConfig {
            max_epochs: 20,
            ..Default::default()
        };
        let summary = train(&mut net, &data, &data[..5], &cfg, None, |_| {}).unwrap();
        assert!(summary.reports.len() <= 20);
        assert!(summary.best_valid_ppl < 3.0, "{arch}: {:?}", summary.reports.iter().map(|r| r.valid_ppl).collect::<Vec<_>>());
    }
}

#[test]
fn identical_seed_gives_identical_reports() {
    let (train_set, valid_set, k) = toy_data(3);
    let run = || {
        let mut rng = SeededRng::new(11);
        let mut net = Network::new(spec(Architecture::Lstm, k, 6, 8, true, true, true), OutputStrategy::Full { vocab_size: k }, &mut rng).unwrap();
        let cfg = TrainingConfig {
            max_epochs: 3,
            seed: 42,
            ..Default::default()
        };
        let s = train(&mut net, &train_set, &valid_set, &cfg, None, |_| {}).unwrap();
        let key: Vec<(f64, f64, f64, usize)> = s.reports.iter().map(|r| (r.train_nll, r.valid_ppl, r.learning_rate, r.clip_events)).collect();
        (key, net)
    };
    let (a, na) = run();
    let (b, nb) = run();
    assert_eq!(a, b);
    assert_eq!(na, nb);
}

#[test]
fn schedule_halves_rate_and_stops() {
    let (train_set, valid_set, k) = toy_data(8);
    let mut rng = SeededRng::new(1);
    let mut net = Network::new(spec(Architecture::Rnn, k, 6, 8, false, true, false), OutputStrategy::Full { vocab_size: k }, &mut rng).unwrap();
    let cfg = TrainingConfig {
        min_improvement: 1e9,
        ..Default::default()
    };
    // only the first epoch improves: the rate halves after each later one until patience runs out
    let s = train(&mut net, &train_set, &valid_set, &cfg, None, |_| {}).unwrap();
    let rates: Vec<f64> = s.reports.iter().map(|r| r.learning_rate).collect();
    assert_eq!(rates, vec![0.1, 0.1, 0.05, 0.025]);
    let best = s.reports.iter().map(|r| r.valid_ppl).fold(f64::INFINITY, f64::min);
    assert_eq!(s.best_valid_ppl, best);
    // the restored parameters are the best epoch's
    let ppl = perplexity(&net, &valid_set, &EvalOptions::default()).unwrap().ppl;
    assert_eq!(ppl, best);
}

#[test]
fn decay_alone_shrinks_matrices_by_exact_factor() {
    let mut rng = SeededRng::new(3);
    let mut net = random_network(spec(Architecture::Lstm, 10, 4, 5, true, true, true), OutputStrategy::Full { vocab_size: 10 }, 0.5, &mut rng);
    let before: Vec<(nnlm::models::SlotKind, f64)> = net.slots().iter().map(|s| (s.kind, nnlm::numerics::sum_squares(s.data))).collect();
    let beta = 0.01;
    let zero = net.zero_gradients();
    update_parameters(&mut net, &zero, 0.3, beta).unwrap();
    for ((kind, b), s) in before.iter().zip(net.slots()) {
        let a = nnlm::numerics::sum_squares(s.data);
        let want = if *kind == nnlm::models::SlotKind::Matrix { b * (1.0 - beta) * (1.0 - beta) } else { *b };
        assert!((a - want).abs() <= 1e-12 * want.max(1.0), "{}", s.name);
    }
}

fn is_fixture(seed: u64) -> (Network, Vec<usize>, usize, ProposalDistribution) {
    let k = 20;
    let mut rng = SeededRng::new(seed);
    let net = random_network(spec(Architecture::Fnn, k, 4, 6, true, true, false), OutputStrategy::Full { vocab_size: k }, 1.0, &mut rng);
    let counts: Vec<u64> = (0..k as u64).map(|i| 40 / (i + 1)).collect();
    (net, vec![3, 7], 11, ProposalDistribution::unigram(&counts).unwrap())
}

fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn exhaustive_uniform_draws_give_exact_gradient() {
    let (net, ctx, target, _) = is_fixture(1);
    let q = ProposalDistribution::uniform(20).unwrap();
    let all: Vec<usize> = (0..20).collect();
    let (exact, _) = context_gradient(&net, &ctx, target, OutputGradient::Exact).unwrap();
    let (est, o) = context_gradient(&net, &ctx, target, OutputGradient::Draws { q: &q, samples: &all }).unwrap();
    assert_eq!(o.samples, 20);
    let (e, s) = (exact.to_flat(), est.to_flat());
    let worst = e.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn sampled_gradient_is_close_at_5000_draws() {
    let (net, ctx, target, q) = is_fixture(2);
    let exact = context_gradient(&net, &ctx, target, OutputGradient::Exact).unwrap().0.to_flat();
    let mut rng = SeededRng::new(77);
    let errs: Vec<f64> = (0..20)
        .map(|_| {
            let cfg = SamplingConfig::fixed(5000);
            let g = context_gradient(&net, &ctx, target, OutputGradient::Sampled { q: &q, rng: &mut rng, config: &cfg }).unwrap().0;
            relative_l2(&g.to_flat(), &exact)
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean < 0.05, "mean {mean}");
    assert!(median(errs) < 0.05);
}

#[test]
fn sampled_gradient_error_shrinks_with_draws() {
    let (net, ctx, target, q) = is_fixture(3);
    let exact = context_gradient(&net, &ctx, target, OutputGradient::Exact).unwrap().0.to_flat();
    let mut rng = SeededRng::new(5);
    let medians: Vec<f64> = [10, 100, 1000, 5000]
        .iter()
        .map(|&n| {
            let cfg = SamplingConfig::fixed(n);
            median(
                (0..50)
                    .map(|_| {
                        let g = context_gradient(&net, &ctx, target, OutputGradient::Sampled { q: &q, rng: &mut rng, config: &cfg }).unwrap().0;
                        relative_l2(&g.to_flat(), &exact)
                    })
                    .collect(),
            )
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn adaptive_sampling_stops_on_ess_or_falls_back() {
    let (net, ctx, target, q) = is_fixture(4);
    let mut rng = SeededRng::new(6);
    let cfg = SamplingConfig {
        block_size: 10,
        min_ess: 5.0,
        max_samples: 1000,
    };
    let (_, o) = context_gradient(&net, &ctx, target, OutputGradient::Sampled { q: &q, rng: &mut rng, config: &cfg }).unwrap();
    assert!(!o.exact && o.ess >= 5.0 && o.samples % 10 == 0);
    // an unreachable effective sample size forces the exact fallback
    let cfg = SamplingConfig {
        block_size: 10,
        min_ess: 1e9,
        max_samples: 50,
    };
    let (g, o) = context_gradient(&net, &ctx, target, OutputGradient::Sampled { q: &q, rng: &mut rng, config: &cfg }).unwrap();
    assert!(o.exact && o.samples == 60);
    let exact = context_gradient(&net, &ctx, target, OutputGradient::Exact).unwrap().0;
    assert_eq!(g, exact);
}

#[test]
fn sampled_training_learns() {
    let (train_set, valid_set, k) = toy_data(2);
    let mut rng = SeededRng::new(3);
    let mut net = Network::new(spec(Architecture::Fnn, k, 8, 12, false, true, false), OutputStrategy::Full { vocab_size: k }, &mut rng).unwrap();
    let before = perplexity(&net, &valid_set, &EvalOptions::default()).unwrap().ppl;
    let counts = vec![1u64; k];
    let cfg = TrainingConfig {
        max_epochs: 5,
        sampling: Some(SamplingConfig {
            block_size: 20,
            min_ess: 5.0,
            max_samples: 200,
        }),
        ..Default::default()
    };
    let s = train(&mut net, &train_set, &valid_set, &cfg, Some(ProposalDistribution::unigram(&counts).unwrap()), |_| {}).unwrap();
    assert!(s.best_valid_ppl < before, "{} vs {before}", s.best_valid_ppl);
}

#[test]
fn dynamic_with_zero_rate_equals_static() {
    let (train_set, _, k) = toy_data(4);
    let mut rng = SeededRng::new(9);
    let net = Network::new(spec(Architecture::Lstm, k, 6, 8, false, false, true), OutputStrategy::Full { vocab_size: k }, &mut rng).unwrap();
    let stat = perplexity(&net, &train_set, &EvalOptions::default()).unwrap();
    let mut copy = net.clone();
    let dynr = dynamic_evaluate(
        &mut copy,
        &train_set,
        &DynamicConfig {
            learning_rate: 0.0,
            l2: 0.0,
            clip: None,
        },
    )
    .unwrap();
    assert_eq!(dynr.ppl.to_bits(), stat.ppl.to_bits());
    assert_eq!(copy, net);
}

#[test]
fn dynamic_adapts_to_repeats_without_leaking() {
    let k = 15;
    let mut rng = SeededRng::new(12);
    let net = Network::new(spec(Architecture::Rnn, k, 6, 10, false, true, false), OutputStrategy::Full { vocab_size: k }, &mut rng).unwrap();
    let s = Encoded {
        ids: vec![0, 4, 9, 2, 13, 6, 1],
        starts_document: true,
    };
    let stream = vec![s.clone(); 6];
    let r = dynamic_evaluate(&mut net.clone(), &stream, &DynamicConfig::default()).unwrap();
    assert!(r.sentence_log2.windows(2).all(|w| w[1] > w[0]), "{:?}", r.sentence_log2);
    // first sentence is scored before any update, however large
    let big = DynamicConfig {
        learning_rate: 50.0,
        ..Default::default()
    };
    let r2 = dynamic_evaluate(&mut net.clone(), &stream, &big).unwrap();
    let first = net.score_sentence(&s.ids, &net.initial_state()).unwrap().total() / std::f64::consts::LN_2;
    assert_eq!(r2.sentence_log2[0], first);
}
