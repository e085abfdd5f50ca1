#![allow(dead_code)]

use nnlm::models::{Architecture, ModelSpec, Network, ParameterSet};
use nnlm::numerics::SeededRng;
use nnlm::output::{assign_uniform_random, hierarchy_uniform_random, OutputStrategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    Full,
    Class,
    Hierarchical,
}

pub fn spec(arch: Architecture, k: usize, m: usize, nh: usize, direct: bool, bias: bool, peepholes: bool) -> ModelSpec {
    ModelSpec {
        architecture: arch,
        vocab_size: k,
        embedding: m,
        hidden: nh,
        order: 3,
        direct,
        bias,
        peepholes,
    }
}

pub fn strategy(kind: OutputKind, k: usize, rng: &mut SeededRng) -> OutputStrategy {
    match kind {
        OutputKind::Full => OutputStrategy::Full { vocab_size: k },
        OutputKind::Class => OutputStrategy::Class(assign_uniform_random(k, 4, rng).unwrap()),
        OutputKind::Hierarchical => OutputStrategy::Hierarchical(hierarchy_uniform_random(k, 2, rng).unwrap()),
    }
}

/// Network with every parameter uniform in `[-scale, scale]`.
pub fn random_network(spec: ModelSpec, strategy: OutputStrategy, scale: f64, rng: &mut SeededRng) -> Network<f64> {
    let mut net = Network::<f64>::zeros(spec, strategy).unwrap();
    for s in net.slots_mut() {
        rng.fill_uniform(s.data, scale);
    }
    net
}

/// `[start, w.., end]` with `len` random words from `2..k`.
pub fn random_sentence(k: usize, len: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut ids = vec![0];
    ids.extend((0..len).map(|_| 2 + rng.below(k - 2)));
    ids.push(1);
    ids
}

pub const ARCHITECTURES: [Architecture; 3] = [Architecture::Fnn, Architecture::Rnn, Architecture::Lstm];
pub const OUTPUTS: [OutputKind; 3] = [OutputKind::Full, OutputKind::Class, OutputKind::Hierarchical];

/// Every architecture and toggle combination, peepholes only for the LSTM.
pub fn all_specs(k: usize, m: usize, nh: usize) -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for arch in ARCHITECTURES {
        let peeps: &[bool] = if arch == Architecture::Lstm { &[true, false] } else { &[false] };
        for &p in peeps {
            for direct in [false, true] {
                for bias in [false, true] {
                    out.push(spec(arch, k, m, nh, direct, bias, p));
                }
            }
        }
    }
    out
}

/// Worst entry-wise disagreement between the analytic gradient and central
/// differences of the sentence NLL, over every parameter. The relative error
/// uses `max(|a|, |n|, floor)` as denominator.
pub fn gradient_check(net: &Network<f64>, ids: &[usize], h: f64, floor: f64) -> (f64, String) {
    let init = net.initial_state();
    let mut grads = net.zero_gradients();
    net.sentence_gradient(ids, &init, &mut grads).unwrap();
    let analytic = grads.to_flat();
    let names: Vec<(&'static str, usize)> = grads.slots().iter().map(|s| (s.name, s.data.len())).collect();

    let mut probe = net.clone();
    let mut worst = (0.0, String::new());
    let mut flat = 0;
    for (si, (name, len)) in names.iter().enumerate() {
        for j in 0..*len {
            let orig = probe.slots()[si].data[j];
            probe.slots_mut()[si].data[j] = orig + h;
            let up = probe.sentence_nll(ids, &init).unwrap();
            probe.slots_mut()[si].data[j] = orig - h;
            let down = probe.sentence_nll(ids, &init).unwrap();
            probe.slots_mut()[si].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{j}] analytic {a:e} numeric {numeric:e}"));
            }
            flat += 1;
        }
    }
    worst
}

pub fn describe(spec: &ModelSpec, out: OutputKind) -> String {
    format!(
        "{} direct={} bias={} peepholes={} output={out:?}",
        spec.architecture, spec.direct, spec.bias, spec.peepholes
    )
}
