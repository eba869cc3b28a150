use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grama::arma::{run_recurrences, GraphContext};
use grama::graph::{batch_graphs, Graph, Targets};
use grama::lift::GraphSequence;
use grama::nn::Linear;
use grama::selector::{ArmaCoefficients, BlockCoefficients, SelectorMode};
use grama::ssm::{arma_direct, build_ssm, initial_state, ssm_unroll};
use grama::tensor::{ParamSet, Tape, Tensor};

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn ring(n: usize, width: usize, rng: &mut ChaCha8Rng) -> Graph {
    let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::new(n, edges, random_tensor(rng, n, width), Targets::None).unwrap()
}

/// Runs the tape recurrence on random inputs and checks every node/channel
/// trajectory against the scalar ARMA recurrence and its state-space unroll,
/// driven by the residuals the graph backbone produced. Returns the largest
/// deviation.
fn max_deviation(seed: u64, p: usize, q: usize, len: usize, steps: usize, members: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let parts: Vec<Graph> = (0..members).map(|k| ring(4 + k, d, &mut rng)).collect();
    let g = batch_graphs(&parts).unwrap();
    let n = g.num_nodes();
    let ctx = GraphContext::new(&g);

    let mut params = ParamSet::new();
    let backbone = Linear::new(&mut params, &mut rng, "backbone", d, d);
    let tape = Tape::new();
    let states: Vec<_> = (0..len).map(|_| tape.constant(random_tensor(&mut rng, n, d))).collect();
    let residuals: Vec<_> = (0..len).map(|_| tape.constant(random_tensor(&mut rng, n, d))).collect();
    let input = GraphSequence::new(states.clone(), residuals.clone(), 0).unwrap();
    let phi = random_tensor(&mut rng, members, p).map(|v| v / p as f64);
    let theta = random_tensor(&mut rng, members, q);
    let coeffs = BlockCoefficients { phi: tape.constant(phi.clone()), theta: tape.constant(theta.clone()) };
    let (new_f, new_d) = run_recurrences(&tape, &params, &input, &coeffs, &backbone, &ctx, steps).unwrap();
    assert_eq!((new_f.len(), new_d.len()), (steps, steps));

    let seg = Rc::new(g.segments());
    let mut worst: f64 = 0.0;
    for m in 0..members {
        let c = ArmaCoefficients::new(phi.row(m).to_vec(), theta.row(m).to_vec(), SelectorMode::Naive).unwrap();
        let ssm = build_ssm(&c);
        for node in seg.range(m) {
            for ch in 0..d {
                let at = |v: &grama::tensor::Var| v.value().get(node, ch);
                let f_hist: Vec<f64> = states.iter().map(at).collect();
                let d_hist: Vec<f64> = residuals.iter().map(at).collect();
                let deltas: Vec<f64> = new_d.iter().map(at).collect();
                let got: Vec<f64> = new_f.iter().map(at).collect();
                let direct = arma_direct(&c, &f_hist, &d_hist, &deltas).unwrap();
                let x0 = initial_state(&c, &f_hist, &d_hist).unwrap();
                let unrolled = ssm_unroll(&ssm, &x0, &deltas).unwrap();
                for t in 0..steps {
                    worst = worst.max((got[t] - direct[t]).abs()).max((got[t] - unrolled[t]).abs());
                }
            }
        }
    }
    worst
}

#[test]
fn tape_recurrence_matches_scalar_arma_and_ssm() {
    assert!(max_deviation(0, 2, 2, 2, 2, 1) < 1e-12);
    assert!(max_deviation(1, 3, 1, 4, 5, 3) < 1e-12);
}

#[test]
fn residuals_come_from_previous_state() {
    // With p = q = 1 and zero coefficients, f_t = delta_t = gnn(f_{t-1}).
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = ring(5, 2, &mut rng);
    let ctx = GraphContext::new(&g);
    let mut params = ParamSet::new();
    let backbone = Linear::new(&mut params, &mut rng, "b", 2, 2);
    let tape = Tape::new();
    let x = tape.constant(random_tensor(&mut rng, 5, 2));
    let input = GraphSequence::new(vec![x], vec![tape.constant(Tensor::zeros(5, 2))], 0).unwrap();
    let zero = BlockCoefficients { phi: tape.constant(Tensor::zeros(1, 1)), theta: tape.constant(Tensor::zeros(1, 1)) };
    let (f, d) = run_recurrences(&tape, &params, &input, &zero, &backbone, &ctx, 3).unwrap();
    let mut prev = x;
    for t in 0..3 {
        let expected = backbone.forward(&tape, &params, prev.apply_operator(&ctx.adjacency).unwrap()).unwrap();
        assert!(d[t].value().max_abs_diff(&expected.value()) < 1e-15);
        assert!(f[t].value().max_abs_diff(&d[t].value()) < 1e-15);
        prev = f[t];
    }
}

#[test]
fn short_window_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = ring(4, 2, &mut rng);
    let ctx = GraphContext::new(&g);
    let mut params = ParamSet::new();
    let backbone = Linear::new(&mut params, &mut rng, "b", 2, 2);
    let tape = Tape::new();
    let x = tape.constant(random_tensor(&mut rng, 4, 2));
    let input = GraphSequence::new(vec![x], vec![x], 0).unwrap();
    let coeffs = BlockCoefficients { phi: tape.constant(Tensor::zeros(1, 3)), theta: tape.constant(Tensor::zeros(1, 1)) };
    assert!(matches!(
        run_recurrences(&tape, &params, &input, &coeffs, &backbone, &ctx, 1),
        Err(grama::Error::InsufficientHistory { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn recurrence_agrees_for_any_order(seed in 0u64..1000, p in 1usize..5, q in 1usize..5, extra in 0usize..3, steps in 1usize..6, members in 1usize..4) {
        let len = p.max(q) + extra;
        prop_assert!(max_deviation(seed, p, q, len, steps, members) < 1e-12);
    }
}
