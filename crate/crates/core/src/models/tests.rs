use super::*;
use crate::numerics::Matrix;
use crate::output::assign_uniform_random;

fn spec(arch: Architecture, k: usize, m: usize, nh: usize) -> ModelSpec {
    ModelSpec {
        architecture: arch,
        vocab_size: k,
        embedding: m,
        hidden: nh,
        order: 3,
        direct: true,
        bias: true,
        peepholes: true,
    }
}

fn randomize<P: ParameterSet<f64>>(p: &mut P, seed: u64, range: f64) {
    let mut rng = SeededRng::new(seed);
    for s in p.slots_mut() {
        for v in s.data.iter_mut() {
            *v = rng.uniform(-range, range);
        }
    }
}

fn naive_matvec(m: &Matrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c) * x[c]).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn fnn_matches_straight_line_formula() {
    let sp = spec(Architecture::Fnn, 9, 4, 6);
    let mut net = Network::<f64>::zeros(sp, OutputStrategy::Full { vocab_size: 9 }).unwrap();
    randomize(&mut net, 17, 0.5);
    let Core::Fnn(p) = &net.core else { unreachable!() };
    let context = [3, 7];
    let step = p.step(&context).unwrap();
    let y = net.full_scores(&step.h, &step.x).unwrap();

    let x: Vec<f64> = context.iter().flat_map(|&w| p.embedding.row(w).to_vec()).collect();
    let a = add(&naive_matvec(&p.hidden, &x), p.bias.as_ref().unwrap());
    let h: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
    let o = &net.output;
    let expect = add(
        &add(&naive_matvec(&o.weights, &h), &naive_matvec(o.direct.as_ref().unwrap(), &x)),
        o.bias.as_ref().unwrap(),
    );
    for (a, b) in y.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
}

#[test]
fn zero_parameters_give_zero_scores() {
    for arch in [Architecture::Fnn, Architecture::Rnn, Architecture::Lstm] {
        let mut sp = spec(arch, 6, 3, 4);
        sp.direct = false;
        sp.bias = false;
        let net = Network::<f64>::zeros(sp.clone(), OutputStrategy::Full { vocab_size: 6 }).unwrap();
        let tape = net.core.forward(&[0, 2, 4], &net.initial_state()).unwrap();
        for t in 0..tape.len() {
            assert!(tape.hidden(t).iter().all(|&v| v == 0.0));
            let y = net.full_scores(tape.hidden(t), tape.input(t)).unwrap();
            assert!(y.iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn index_out_of_range_is_an_error() {
    let net = Network::<f64>::zeros(spec(Architecture::Fnn, 6, 3, 4), OutputStrategy::Full { vocab_size: 6 }).unwrap();
    let Core::Fnn(p) = &net.core else { unreachable!() };
    assert!(p.step(&[1, 6]).is_err());
    assert!(p.step(&[1]).is_err());
    assert!(net.score_sentence(&[0, 9, 1], &net.initial_state()).is_err());
}

#[test]
fn rnn_without_recurrence_equals_bigram_fnn() {
    let k = 10;
    let mut rsp = spec(Architecture::Rnn, k, 4, 5);
    let mut fsp = rsp.clone();
    fsp.architecture = Architecture::Fnn;
    fsp.order = 2;
    rsp.peepholes = false;
    let mut rnn = Network::<f64>::zeros(rsp, OutputStrategy::Full { vocab_size: k }).unwrap();
    randomize(&mut rnn, 3, 0.7);
    let mut fnn = Network::<f64>::zeros(fsp, OutputStrategy::Full { vocab_size: k }).unwrap();
    let Core::Rnn(r) = &mut rnn.core else { unreachable!() };
    r.recurrent.fill(0.0);
    let Core::Fnn(f) = &mut fnn.core else { unreachable!() };
    f.embedding = r.embedding.clone();
    f.hidden = r.input.clone();
    f.bias = r.bias.clone();
    fnn.output = rnn.output.clone();

    let ids = [0, 4, 7, 7, 2, 1];
    let a = rnn.score_sentence(&ids, &rnn.initial_state()).unwrap();
    let b = fnn.score_sentence(&ids, &fnn.initial_state()).unwrap();
    assert_eq!(a.log_probs, b.log_probs);
}

#[test]
fn rnn_two_steps_without_input() {
    let mut sp = spec(Architecture::Rnn, 5, 2, 3);
    sp.bias = false;
    sp.direct = false;
    let mut net = Network::<f64>::zeros(sp, OutputStrategy::Full { vocab_size: 5 }).unwrap();
    randomize(&mut net, 8, 0.9);
    let Core::Rnn(p) = &mut net.core else { unreachable!() };
    p.input.fill(0.0);
    let s0 = vec![0.3, -0.2, 0.5];
    let tape = net
        .core
        .forward(&[1, 2], &HiddenState { s: s0.clone(), c: vec![] })
        .unwrap();
    let Core::Rnn(p) = &net.core else { unreachable!() };
    let f = |v: Vec<f64>| v.into_iter().map(f64::tanh).collect::<Vec<_>>();
    let s2 = f(naive_matvec(&p.recurrent, &f(naive_matvec(&p.recurrent, &s0))));
    for (a, b) in tape.hidden(1).iter().zip(&s2) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn lstm_zero_parameters() {
    let mut sp = spec(Architecture::Lstm, 5, 2, 3);
    sp.bias = false;
    sp.direct = false;
    let net = Network::<f64>::zeros(sp, OutputStrategy::Full { vocab_size: 5 }).unwrap();
    let Core::Lstm(p) = &net.core else { unreachable!() };
    let prev = HiddenState {
        s: vec![0.4, -1.0, 2.0],
        c: vec![1.0, -2.0, 0.5],
    };
    let st = p.step(3, &prev).unwrap();
    assert!(st.i.iter().chain(&st.f).chain(&st.o).all(|&v| v == 0.5));
    assert!(st.g.iter().all(|&v| v == 0.0));
    for j in 0..3 {
        assert_eq!(st.c[j], 0.5 * prev.c[j]);
        assert_eq!(st.s[j], 0.5 * (0.5 * prev.c[j]).tanh());
    }
    let zero = p.step(3, &HiddenState::zeros(&net.spec)).unwrap();
    assert!(zero.s.iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_matches_straight_line_formula() {
    let sp = spec(Architecture::Lstm, 7, 3, 4);
    let mut net = Network::<f64>::zeros(sp, OutputStrategy::Full { vocab_size: 7 }).unwrap();
    randomize(&mut net, 99, 0.6);
    let Core::Lstm(p) = &net.core else { unreachable!() };
    let prev = HiddenState {
        s: vec![0.1, -0.3, 0.2, 0.0],
        c: vec![0.5, -0.4, 0.9, -1.2],
    };
    let st = p.step(5, &prev).unwrap();

    let x = p.embedding.row(5).to_vec();
    let pre = |g: &Gate<f64>, cell: &[f64]| {
        let mut a = add(&naive_matvec(&g.input, &x), &naive_matvec(&g.recurrent, &prev.s));
        a = add(&a, &naive_matvec(g.peephole.as_ref().unwrap(), cell));
        add(&a, g.bias.as_ref().unwrap())
    };
    let i: Vec<f64> = pre(&p.input_gate, &prev.c).into_iter().map(sig).collect();
    let f: Vec<f64> = pre(&p.forget_gate, &prev.c).into_iter().map(sig).collect();
    let g: Vec<f64> = pre(&p.candidate, &prev.c).into_iter().map(f64::tanh).collect();
    let c: Vec<f64> = (0..4).map(|j| f[j] * prev.c[j] + i[j] * g[j]).collect();
    let o: Vec<f64> = pre(&p.output_gate, &c).into_iter().map(sig).collect();
    let s: Vec<f64> = (0..4).map(|j| o[j] * c[j].tanh()).collect();
    for j in 0..4 {
        assert!((st.c[j] - c[j]).abs() < 1e-14);
        assert!((st.s[j] - s[j]).abs() < 1e-14);
    }
}

#[test]
fn lstm_saturated_gates_carry_memory() {
    let mut sp = spec(Architecture::Lstm, 6, 3, 5);
    sp.direct = false;
    let mut net = Network::<f64>::zeros(sp, OutputStrategy::Full { vocab_size: 6 }).unwrap();
    randomize(&mut net, 5, 0.1);
    let Core::Lstm(p) = &mut net.core else { unreachable!() };
    p.forget_gate.bias.as_mut().unwrap().fill(50.0);
    p.input_gate.bias.as_mut().unwrap().fill(-50.0);
    let init = HiddenState {
        s: vec![0.0; 5],
        c: vec![0.7, -0.3, 1.5, -2.0, 0.05],
    };
    let words: Vec<usize> = (0..100).map(|t| (t * 7 + 3) % 6).collect();
    let tape = net.core.forward(&words, &init).unwrap();
    let last = tape.final_state(&init);
    let drift = last.c.iter().zip(&init.c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-6, "{drift}");
    let single = tape.final_state(&init);
    assert_eq!(single.c.len(), 5);
}

#[test]
fn forward_is_bit_deterministic() {
    let k = 12;
    let mut rng = SeededRng::new(4);
    let strategy = OutputStrategy::Class(assign_uniform_random(k, 3, &mut rng).unwrap());
    let net = Network::<f64>::new(spec(Architecture::Lstm, k, 4, 5), strategy, &mut rng).unwrap();
    let ids = [0, 3, 9, 11, 2, 1];
    let a = net.score_sentence(&ids, &net.initial_state()).unwrap();
    let b = net.score_sentence(&ids, &net.initial_state()).unwrap();
    assert_eq!(a, b);
    let mut g = net.zero_gradients();
    let c = net.sentence_gradient(&ids, &net.initial_state(), &mut g).unwrap();
    assert_eq!(a.log_probs, c.log_probs);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let sp = spec(Architecture::Lstm, 8, 3, 4);
    let mut rng = SeededRng::new(1);
    let net = Network::<f64>::new(sp, OutputStrategy::Full { vocab_size: 8 }, &mut rng).unwrap();
    let tape = net.core.forward(&[0, 5, 6], &net.initial_state()).unwrap();
    let mut g = net.core.zeros_like();
    let zeros = vec![vec![0.0; 4]; 3];
    let zx = vec![vec![0.0; 3]; 3];
    net.core.backward(&tape, &zeros, &zx, &mut g).unwrap();
    assert_eq!(g.squared_norm(), 0.0);
    assert!(net.core.backward(&tape, &zeros[..2], &zx, &mut g).is_err());
}

#[test]
fn output_bias_gradient_is_softmax_minus_onehot() {
    let mut sp = spec(Architecture::Rnn, 6, 3, 6);
    sp.direct = false;
    let mut net = Network::<f64>::zeros(sp, OutputStrategy::Full { vocab_size: 6 }).unwrap();
    randomize(&mut net, 21, 0.5);
    net.output.weights = Matrix::identity(6);
    let ids = [0, 4];
    let mut g = net.zero_gradients();
    net.sentence_gradient(&ids, &net.initial_state(), &mut g).unwrap();
    let tape = net.core.forward(&ids[..1], &net.initial_state()).unwrap();
    let y = net.full_scores(tape.hidden(0), tape.input(0)).unwrap();
    let mut expect = crate::numerics::softmax(&y);
    expect[4] -= 1.0;
    for (a, b) in g.output.bias.as_ref().unwrap().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn birnn_shapes_and_symmetry() {
    let mut sp = spec(Architecture::Lstm, 9, 3, 4);
    sp.direct = false;
    let mut rng = SeededRng::new(12);
    let fwd = Core::<f64>::random(&sp, &mut rng).unwrap();
    let bwd = Core::<f64>::random(&sp, &mut rng).unwrap();
    for t in 1..6 {
        let words: Vec<usize> = (0..t).map(|i| i % 9).collect();
        assert_eq!(birnn_encode(&fwd, &bwd, &words).unwrap().len(), 8);
    }
    let pal = [2, 5, 7, 5, 2];
    let e = birnn_encode(&fwd, &fwd, &pal).unwrap();
    assert_eq!(e[..4], e[4..]);
    let z = Core::<f64>::zeros(&sp);
    assert_eq!(birnn_encode(&z, &z, &pal).unwrap(), vec![0.0; 8]);
    assert!(birnn_encode(&fwd, &bwd, &[]).is_err());

    let mut fsp = sp.clone();
    fsp.architecture = Architecture::Fnn;
    let fnn = Core::<f64>::zeros(&fsp);
    assert!(birnn_encode(&fnn, &fnn, &pal).is_err());
    let mut wide = sp.clone();
    wide.hidden = 5;
    assert!(birnn_encode(&fwd, &Core::<f64>::zeros(&wide), &pal).is_err());
}

#[test]
fn f32_network_tracks_f64() {
    let mut rng = SeededRng::new(2);
    let net = Network::<f64>::new(spec(Architecture::Lstm, 10, 4, 6), OutputStrategy::Full { vocab_size: 10 }, &mut rng).unwrap();
    let small: Network<f32> = net.cast();
    let ids = [0, 3, 4, 5, 1];
    let a = net.score_sentence(&ids, &net.initial_state()).unwrap().total();
    let b = small.score_sentence(&ids, &small.initial_state()).unwrap().total();
    assert!((a - b as f64).abs() < 1e-4);
}
