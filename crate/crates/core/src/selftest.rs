//! Fast invariant checks run by `grama selftest`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arma::{GramaModel, ModelConfig, TaskLevel};
use crate::datasets::{diameter, eccentricities, gen_property, oracle_distances, PropertySpec, PropertyTask, SplitCounts};
use crate::graph::{batch_graphs, permute_graph, Graph, Targets};
use crate::selector::{ArmaCoefficients, SelectorMode};
use crate::ssm::{build_ssm, check_equivalence, propagation_horizon, spectral_radius, Horizon};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.3) {
                edges.push((u, v));
            }
        }
    }
    let feats = Tensor::matrix(n, c, (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
    Graph::new(n, edges, feats, Targets::None).expect("valid random graph")
}

fn equivalence(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let p = [1, 2, 4, 8][k % 4];
        let phi: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0) / p as f64).collect();
        let theta: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = ArmaCoefficients::new(phi, theta, SelectorMode::Naive).expect("p >= 1");
        let hist: Vec<f64> = (0..2 * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let deltas: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(check_equivalence(&c, &hist[..p], &hist[p..], &deltas).unwrap_or(f64::INFINITY));
    }
    check("arma-ssm equivalence", worst < 1e-9, format!("max deviation {worst:.2e}"))
}

fn stability(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = rng.gen_range(1..=8);
        let raw: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = raw.iter().map(|v| v.abs()).sum();
        let budget = rng.gen_range(0.0..=1.0);
        let phi: Vec<f64> = raw.iter().map(|v| v / s * budget).collect();
        worst = worst.max(spectral_radius(&phi));
    }
    let counter = spectral_radius(&[0.8, 0.5]);
    check(
        "stability sufficiency",
        worst <= 1.0 + 1e-9 && (counter - 1.212).abs() < 1e-3,
        format!("max radius {worst:.12}, counter-case {counter:.5}"),
    )
}

fn horizon() -> Check {
    let h = |a: f64| propagation_horizon(&build_ssm(&ArmaCoefficients::new(vec![a], vec![0.0], SelectorMode::Naive).expect("valid")), 1e-16);
    let hs = [h(0.5), h(0.9), h(0.99)];
    let ok = matches!(hs, [Horizon::Finite(54), Horizon::Finite(b), Horizon::Finite(c)] if 54 < b && b < c);
    check("propagation horizon", ok, format!("{} / {} / {}", hs[0], hs[1], hs[2]))
}

fn equivariance(rng: &mut ChaCha8Rng) -> Check {
    let cfg = ModelConfig {
        hidden: 8,
        ..ModelConfig::new(2, 1, TaskLevel::Node)
    };
    let model = GramaModel::new(cfg, 0).expect("valid config");
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let g = random_graph(rng, 10, 2);
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(rng);
        let a = model.predict(&g).expect("forward");
        let b = model.predict(&permute_graph(&g, &perm).expect("bijection")).expect("forward");
        worst = worst.max(b.max_abs_diff(&a.permute_rows(&perm)));
    }
    check("permutation equivariance", worst < 1e-9, format!("max deviation {worst:.2e}"))
}

fn batching(rng: &mut ChaCha8Rng) -> Check {
    let cfg = ModelConfig {
        hidden: 8,
        ..ModelConfig::new(2, 1, TaskLevel::Graph)
    };
    let model = GramaModel::new(cfg, 1).expect("valid config");
    let gs = [random_graph(rng, 6, 2), random_graph(rng, 9, 2)];
    let batched = model.predict(&batch_graphs(&gs).expect("same widths")).expect("forward");
    let mut worst: f64 = 0.0;
    for (i, g) in gs.iter().enumerate() {
        let alone = model.predict(g).expect("forward");
        worst = worst.max((alone.data()[0] - batched.data()[i]).abs());
    }
    check("batching", worst < 1e-12, format!("max deviation {worst:.2e}"))
}

fn normalization(rng: &mut ChaCha8Rng) -> Check {
    let cfg = ModelConfig {
        hidden: 8,
        ..ModelConfig::new(2, 1, TaskLevel::Node)
    };
    let model = GramaModel::new(cfg, 2).expect("valid config");
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let trace = model.coefficient_trace(&random_graph(rng, 8, 2)).expect("forward");
        for c in trace.iter().flatten() {
            worst = worst
                .max((c.phi.iter().sum::<f64>() - 1.0).abs())
                .max((c.theta.iter().sum::<f64>() - 1.0).abs());
        }
    }
    check("coefficient normalization", worst < 1e-12, format!("max |sum - 1| {worst:.2e}"))
}

fn gradients(rng: &mut ChaCha8Rng) -> Check {
    let cfg = ModelConfig {
        hidden: 4,
        activation: crate::tensor::Activation::Tanh,
        ..ModelConfig::new(2, 1, TaskLevel::Node)
    };
    let mut model = GramaModel::new(cfg, 3).expect("valid config");
    let g = random_graph(rng, 6, 2);
    let g = g.clone().with_targets(Targets::Node(Tensor::filled(6, 1, 0.3))).expect("shapes match");
    let loss_at = |m: &GramaModel| -> f64 {
        let tape = Tape::new();
        m.loss(&tape, &g).expect("loss").value().data()[0]
    };
    let tape = Tape::new();
    let loss = model.loss(&tape, &g).expect("loss");
    let grads = tape.backward(loss).expect("scalar loss");
    let ids: Vec<_> = model.params().ids().collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let id = *ids.choose(rng).expect("parameters exist");
        let k = rng.gen_range(0..model.params().get(id).numel());
        let analytic = grads.get(id).map_or(0.0, |t| t.data()[k]);
        let h = 1e-5;
        let orig = model.params().get(id).data()[k];
        model.params_mut().get_mut(id).data_mut()[k] = orig + h;
        let up = loss_at(&model);
        model.params_mut().get_mut(id).data_mut()[k] = orig - h;
        let down = loss_at(&model);
        model.params_mut().get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    check("gradient check", worst < 1e-5, format!("max relative error {worst:.2e}"))
}

fn oracle() -> Check {
    let spec = PropertySpec {
        counts: SplitCounts { train: 25, val: 0, test: 0 },
        ..PropertySpec::new(PropertyTask::Eccentricity, 5)
    };
    let ok = match gen_property(&spec) {
        Ok(ds) => ds.train.iter().all(|g| match oracle_distances(g) {
            Ok(d) => {
                let symmetric = (0..d.len()).all(|i| d[i][i] == 0 && (0..d.len()).all(|j| d[i][j] == d[j][i]));
                symmetric && diameter(&d) == *eccentricities(&d).iter().max().unwrap_or(&0)
            }
            Err(_) => false,
        }),
        Err(_) => false,
    };
    check("dataset oracle", ok, "25 property graphs".into())
}

/// Run every check with a fixed seed.
pub fn run() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let spectral = {
        let a = spectral_radius(&[1.0]);
        let b = spectral_radius(&[0.5, 0.3]);
        check(
            "spectral radius",
            (a - 1.0).abs() < 1e-12 && (b - 0.85208).abs() < 1e-5,
            format!("[1] -> {a:.6}, [0.5, 0.3] -> {b:.6}"),
        )
    };
    vec![
        equivalence(&mut rng),
        stability(&mut rng),
        spectral,
        horizon(),
        gradients(&mut rng),
        equivariance(&mut rng),
        batching(&mut rng),
        normalization(&mut rng),
        oracle(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
