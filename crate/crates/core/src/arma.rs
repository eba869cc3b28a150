//! The ARMA recurrence over graph sequences, GRAMA blocks, deep stacking and
//! the readout head. A depth-matched plain GCN stack shares the encoder and
//! readout for comparison.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorError};
use crate::graph::{normalized_adjacency, Graph, Targets};
use crate::lift::{apply_nonlinearity, GraphSequence, LiftEncoders};
use crate::nn::{Linear, Mlp};
use crate::selector::{ArmaCoefficients, BlockCoefficients, BlockSelector, SelectorMode};
use crate::tensor::{Activation, NodeOperator, ParamSet, Segments, Tape, Tensor, Var};

fn weighted_sum<'t>(window: &[Var<'t>], coeffs: Var<'t>, seg: &Rc<Segments>, op: &'static str) -> Result<Var<'t>> {
    let order = coeffs.cols();
    if window.len() < order {
        return Err(Error::InsufficientHistory {
            op,
            needed: order,
            available: window.len(),
        });
    }
    let newest = window.len() - 1;
    let mut acc: Option<Var<'t>> = None;
    for i in 0..order {
        let term = window[newest - i].segment_scale(coeffs.slice(1, i, 1)?, seg)?;
        acc = Some(match acc {
            Some(a) => a.add(term)?,
            None => term,
        });
    }
    Ok(acc.expect("order >= 1"))
}

/// `sum_i phi_i * f[-i]` over the window (oldest first); `phi` is `G x p` in
/// lag order, one row per member graph.
pub fn ar_step<'t>(states: &[Var<'t>], phi: Var<'t>, seg: &Rc<Segments>) -> Result<Var<'t>> {
    weighted_sum(states, phi, seg, "ar_step")
}

/// `sum_j theta_j * delta[-j]` over the window (oldest first).
pub fn ma_step<'t>(residuals: &[Var<'t>], theta: Var<'t>, seg: &Rc<Segments>) -> Result<Var<'t>> {
    weighted_sum(residuals, theta, seg, "ma_step")
}

/// Linear GCN backbone: `A_hat f W + b`.
pub fn gnn_residual<'t>(
    tape: &'t Tape,
    params: &ParamSet,
    f_prev: Var<'t>,
    adjacency: &Rc<dyn NodeOperator>,
    backbone: &Linear,
) -> Result<Var<'t>> {
    Ok(backbone.forward(tape, params, f_prev.apply_operator(adjacency)?)?)
}

/// Shared context of one forward pass over a (possibly batched) graph.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub adjacency: Rc<dyn NodeOperator>,
    pub segments: Rc<Segments>,
}

impl GraphContext {
    pub fn new(g: &Graph) -> Self {
        GraphContext {
            adjacency: normalized_adjacency(g).into_operator(),
            segments: Rc::new(g.segments()),
        }
    }
}

/// One ARMA step on rolling windows: returns `(f_new, delta_new)` with
/// `delta_new = gnn(f[-1])` and `f_new = AR + MA + delta_new`.
pub fn recurrence_step<'t>(
    tape: &'t Tape,
    params: &ParamSet,
    states: &[Var<'t>],
    residuals: &[Var<'t>],
    coeffs: &BlockCoefficients<'t>,
    backbone: &Linear,
    ctx: &GraphContext,
) -> Result<(Var<'t>, Var<'t>)> {
    let f_prev = *states.last().ok_or(Error::InsufficientHistory {
        op: "recurrence_step",
        needed: 1,
        available: 0,
    })?;
    let ar = ar_step(states, coeffs.phi, &ctx.segments)?;
    let ma = ma_step(residuals, coeffs.theta, &ctx.segments)?;
    let delta = gnn_residual(tape, params, f_prev, &ctx.adjacency, backbone)?;
    let f = ar.add(ma)?.add(delta)?;
    Ok((f, delta))
}

/// `steps` recurrences with fixed coefficients, windows seeded by `input`.
/// Returns the collected states and residuals before any nonlinearity.
pub fn run_recurrences<'t>(
    tape: &'t Tape,
    params: &ParamSet,
    input: &GraphSequence<'t>,
    coeffs: &BlockCoefficients<'t>,
    backbone: &Linear,
    ctx: &GraphContext,
    steps: usize,
) -> Result<(Vec<Var<'t>>, Vec<Var<'t>>)> {
    if steps == 0 {
        return Err(Error::Config("a block needs at least one recurrence".into()));
    }
    let mut states = input.states.clone();
    let mut residuals = input.residuals.clone();
    for _ in 0..steps {
        let (f, d) = recurrence_step(tape, params, &states, &residuals, coeffs, backbone, ctx)?;
        states.push(f);
        residuals.push(d);
    }
    let start = input.len();
    Ok((states.split_off(start), residuals.split_off(start)))
}

/// Parameters of one block: its own backbone and coefficient selector.
#[derive(Clone, Debug, PartialEq)]
pub struct GramaBlock {
    pub backbone: Linear,
    pub selector: BlockSelector,
}

impl GramaBlock {
    /// Coefficients from `input`, `steps` recurrences, then `act` on both
    /// collected sequences.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamSet,
        input: &GraphSequence<'t>,
        ctx: &GraphContext,
        steps: usize,
        act: Activation,
        project: bool,
    ) -> Result<(GraphSequence<'t>, BlockCoefficients<'t>)> {
        let coeffs = self.selector.coefficients(tape, params, input, &ctx.segments, project)?;
        let (states, residuals) = run_recurrences(tape, params, input, &coeffs, &self.backbone, ctx, steps)?;
        let raw = GraphSequence::new(states, residuals, input.stage + 1)?;
        Ok((apply_nonlinearity(&raw, act), coeffs))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// GRAMA blocks over a GCN backbone.
    Grama,
    /// Plain GCN layers, `S * L` of them.
    Gcn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskLevel {
    Node,
    Graph,
}

macro_rules! lowercase_enum_text {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!("unknown {} '{other}'", stringify!($ty).to_lowercase())),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($ty::$variant => $text,)+
                })
            }
        }
    };
}

lowercase_enum_text!(Architecture { Grama => "grama", Gcn => "gcn" });
lowercase_enum_text!(TaskLevel { Node => "node", Graph => "graph" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub level: TaskLevel,
    /// Input feature width `c`.
    pub in_dim: usize,
    /// Output width `o`.
    pub out_dim: usize,
    /// Hidden width `d`.
    pub hidden: usize,
    /// Sequence length `L`; every block runs `L` recurrences.
    pub seq_len: usize,
    /// Number of blocks `S`.
    pub blocks: usize,
    pub p: usize,
    pub q: usize,
    pub activation: Activation,
    pub selector: SelectorMode,
    pub heads: usize,
    pub stability_projection: bool,
}

impl ModelConfig {
    pub fn new(in_dim: usize, out_dim: usize, level: TaskLevel) -> Self {
        ModelConfig {
            architecture: Architecture::Grama,
            level,
            in_dim,
            out_dim,
            hidden: 32,
            seq_len: 2,
            blocks: 2,
            p: 2,
            q: 2,
            activation: Activation::Relu,
            selector: SelectorMode::Selective,
            heads: 2,
            stability_projection: false,
        }
    }

    /// Recurrences per block; fixed to the sequence length.
    pub fn recurrences(&self) -> usize {
        self.seq_len
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden == 0 {
            return fail("in_dim, out_dim and hidden must be positive".into());
        }
        if self.seq_len == 0 || self.blocks == 0 {
            return fail("seq_len and blocks must be >= 1".into());
        }
        if self.architecture == Architecture::Grama {
            if self.p == 0 || self.q == 0 || self.p > self.seq_len || self.q > self.seq_len {
                return fail(format!(
                    "need 1 <= p, q <= L (p = {}, q = {}, L = {})",
                    self.p, self.q, self.seq_len
                ));
            }
            if self.selector == SelectorMode::Selective
                && (self.heads == 0 || !self.hidden.is_multiple_of(self.heads))
            {
                return fail(format!("hidden {} not divisible by {} heads", self.hidden, self.heads));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Grama(Vec<GramaBlock>),
    Gcn(Vec<Linear>),
}

/// A full model: lift, blocks (or GCN layers), readout.
#[derive(Clone, Debug)]
pub struct GramaModel {
    config: ModelConfig,
    params: ParamSet,
    encoders: LiftEncoders,
    body: Body,
    readout: Mlp,
}

/// Output of a forward pass.
pub struct Forward<'t> {
    /// `n x o` for node tasks, `G x o` for graph tasks.
    pub prediction: Var<'t>,
    /// Per-block coefficients (empty for the GCN baseline).
    pub coefficients: Vec<BlockCoefficients<'t>>,
}

impl GramaModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let (d, act) = (config.hidden, config.activation);
        let (encoders, body) = match config.architecture {
            Architecture::Grama => {
                let encoders = LiftEncoders::new(&mut params, &mut rng, config.seq_len, config.in_dim, d, act);
                let mut blocks = Vec::with_capacity(config.blocks);
                for s in 0..config.blocks {
                    let backbone = Linear::new(&mut params, &mut rng, &format!("block.{s}.gcn"), d, d);
                    let name = format!("block.{s}.select");
                    let selector = match config.selector {
                        SelectorMode::Naive => BlockSelector::naive(&mut params, &name, config.p, config.q),
                        SelectorMode::Selective => BlockSelector::selective(
                            &mut params,
                            &mut rng,
                            &name,
                            config.p,
                            config.q,
                            d,
                            config.heads,
                        )?,
                    };
                    blocks.push(GramaBlock { backbone, selector });
                }
                (encoders, Body::Grama(blocks))
            }
            Architecture::Gcn => {
                let encoders = LiftEncoders::new(&mut params, &mut rng, 1, config.in_dim, d, act);
                let layers = (0..config.blocks * config.recurrences())
                    .map(|k| Linear::new(&mut params, &mut rng, &format!("gcn.{k}"), d, d))
                    .collect();
                (encoders, Body::Gcn(layers))
            }
        };
        let readout = Mlp::new(&mut params, &mut rng, "readout", (d, d, config.out_dim), act);
        Ok(GramaModel {
            config,
            params,
            encoders,
            body,
            readout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn blocks(&self) -> &[GramaBlock] {
        match &self.body {
            Body::Grama(b) => b,
            Body::Gcn(_) => &[],
        }
    }

    pub fn encoders(&self) -> &LiftEncoders {
        &self.encoders
    }

    /// Final hidden state before the readout (`n x d`).
    pub fn embed<'t>(
        &self,
        tape: &'t Tape,
        g: &Graph,
        ctx: &GraphContext,
    ) -> Result<(Var<'t>, Vec<BlockCoefficients<'t>>)> {
        let params = &self.params;
        let mut seq = self.encoders.lift(tape, params, g)?;
        match &self.body {
            Body::Grama(blocks) => {
                let mut coeffs = Vec::with_capacity(blocks.len());
                for block in blocks {
                    let (next, c) = block.forward(
                        tape,
                        params,
                        &seq,
                        ctx,
                        self.config.recurrences(),
                        self.config.activation,
                        self.config.stability_projection,
                    )?;
                    seq = next;
                    coeffs.push(c);
                }
                Ok((seq.last_state(), coeffs))
            }
            Body::Gcn(layers) => {
                let mut h = seq.last_state();
                for layer in layers {
                    h = gnn_residual(tape, params, h, &ctx.adjacency, layer)?.activate(self.config.activation);
                }
                Ok((h, Vec::new()))
            }
        }
    }

    pub fn forward_with<'t>(&self, tape: &'t Tape, g: &Graph, ctx: &GraphContext) -> Result<Forward<'t>> {
        let (h, coefficients) = self.embed(tape, g, ctx)?;
        let pooled = match self.config.level {
            TaskLevel::Node => h,
            TaskLevel::Graph => h.segment_mean(&ctx.segments)?,
        };
        let prediction = self.readout.forward(tape, &self.params, pooled)?;
        Ok(Forward {
            prediction,
            coefficients,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, g: &Graph) -> Result<Forward<'t>> {
        self.forward_with(tape, g, &GraphContext::new(g))
    }

    pub fn predict(&self, g: &Graph) -> Result<Tensor> {
        let tape = Tape::new();
        let out = self.forward(&tape, g)?;
        let value = (*out.prediction.value()).clone();
        Ok(value)
    }

    /// Target tensor matching this model's task level.
    pub fn targets_for<'g>(&self, g: &'g Graph) -> Result<&'g Tensor> {
        match (self.config.level, g.targets()) {
            (TaskLevel::Node, Targets::Node(t)) | (TaskLevel::Graph, Targets::Graph(t)) => {
                if t.cols() != self.config.out_dim {
                    return Err(TensorError::ShapeMismatch {
                        op: "targets",
                        left: vec![t.rows(), self.config.out_dim],
                        right: t.shape().to_vec(),
                    }
                    .into());
                }
                Ok(t)
            }
            (level, other) => Err(Error::Dataset(format!(
                "{level}-level model cannot use targets {:?}",
                match other {
                    Targets::None => "none",
                    Targets::Node(_) => "node",
                    Targets::Graph(_) => "graph",
                }
            ))),
        }
    }

    /// Mean squared error against the graph's targets, on the tape.
    pub fn loss_with<'t>(&self, tape: &'t Tape, g: &Graph, ctx: &GraphContext) -> Result<(Var<'t>, Forward<'t>)> {
        let target = tape.constant(self.targets_for(g)?.clone());
        let out = self.forward_with(tape, g, ctx)?;
        Ok((out.prediction.mse(target)?, out))
    }

    pub fn loss<'t>(&self, tape: &'t Tape, g: &Graph) -> Result<Var<'t>> {
        Ok(self.loss_with(tape, g, &GraphContext::new(g))?.0)
    }

    /// Coefficients of every block for every member graph of `g`.
    pub fn coefficient_trace(&self, g: &Graph) -> Result<Vec<Vec<ArmaCoefficients>>> {
        let tape = Tape::new();
        let out = self.forward(&tape, g)?;
        Ok(out
            .coefficients
            .iter()
            .map(|c| c.all(self.config.selector))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{batch_graphs, permute_graph};
    use crate::tensor::ParamId;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn one(tape: &Tape, v: f64) -> Var<'_> {
        tape.constant(Tensor::scalar(v))
    }

    fn row<'t>(tape: &'t Tape, v: &[f64]) -> Var<'t> {
        tape.constant(Tensor::from_rows(&[v.to_vec()]))
    }

    fn single() -> Rc<Segments> {
        Rc::new(Segments::single(1))
    }

    #[test]
    fn ar_step_examples() {
        let tape = Tape::new();
        let seg = single();
        let states = [one(&tape, 1.0), one(&tape, 3.0)];
        let newest = ar_step(&states, row(&tape, &[1.0, 0.0]), &seg).unwrap();
        assert_eq!(newest.value().data(), &[3.0]);
        let zero = ar_step(&states, row(&tape, &[0.0, 0.0]), &seg).unwrap();
        assert_eq!(zero.value().data(), &[0.0]);
        let mix = ar_step(&states, row(&tape, &[0.5, 0.5]), &seg).unwrap();
        assert!((mix.value().data()[0] - 2.0).abs() < 1e-15);
        assert!(matches!(
            ar_step(&states[..1], row(&tape, &[0.5, 0.5]), &seg),
            Err(Error::InsufficientHistory { needed: 2, available: 1, .. })
        ));
    }

    #[test]
    fn ma_step_examples() {
        let tape = Tape::new();
        let seg = single();
        let res = [one(&tape, 4.0), one(&tape, 5.0)];
        assert_eq!(ma_step(&res, row(&tape, &[0.0, 0.0]), &seg).unwrap().value().data(), &[0.0]);
        assert_eq!(ma_step(&res, row(&tape, &[1.0, 0.0]), &seg).unwrap().value().data(), &[5.0]);
        let v = ma_step(&res[1..], row(&tape, &[0.2]), &seg).unwrap().value().data()[0];
        assert!((v - 1.0).abs() < 1e-15);
        assert!(ma_step(&res[1..], row(&tape, &[0.2, 0.1]), &seg).is_err());
    }

    fn linear_with(params: &mut ParamSet, w: Tensor, b: Tensor) -> Linear {
        Linear {
            weight: params.add("w", w),
            bias: params.add("b", b),
        }
    }

    fn plain_graph(n: usize, edges: Vec<(usize, usize)>, feats: Vec<f64>) -> Graph {
        let c = feats.len() / n;
        Graph::new(n, edges, Tensor::matrix(n, c, feats), Targets::None).unwrap()
    }

    #[test]
    fn gnn_residual_examples() {
        let mut params = ParamSet::new();
        let ident = linear_with(&mut params, Tensor::identity(1), Tensor::zeros(1, 1));
        let zero = linear_with(&mut params, Tensor::zeros(1, 1), Tensor::zeros(1, 1));
        let tape = Tape::new();

        let iso = plain_graph(1, vec![], vec![3.0]);
        let ctx = GraphContext::new(&iso);
        let f = tape.constant(iso.features().clone());
        assert_eq!(gnn_residual(&tape, &params, f, &ctx.adjacency, &ident).unwrap().value().data(), &[3.0]);

        let pair = plain_graph(2, vec![(0, 1)], vec![1.0, 3.0]);
        let ctx = GraphContext::new(&pair);
        let f = tape.constant(pair.features().clone());
        let out = gnn_residual(&tape, &params, f, &ctx.adjacency, &ident).unwrap().value();
        assert!(out.data().iter().all(|v| (v - 2.0).abs() < 1e-15));
        let out = gnn_residual(&tape, &params, f, &ctx.adjacency, &zero).unwrap().value();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recurrence_step_examples() {
        let mut params = ParamSet::new();
        let zero = linear_with(&mut params, Tensor::zeros(1, 1), Tensor::zeros(1, 1));
        let ident = linear_with(&mut params, Tensor::identity(1), Tensor::zeros(1, 1));
        let tape = Tape::new();
        let iso = plain_graph(1, vec![], vec![0.0]);
        let ctx = GraphContext::new(&iso);

        // Pure copy.
        let states = [one(&tape, 7.0), one(&tape, 2.5)];
        let residuals = [one(&tape, 1.0), one(&tape, -4.0)];
        let copy = BlockCoefficients {
            phi: row(&tape, &[1.0, 0.0]),
            theta: row(&tape, &[0.0, 0.0]),
        };
        let (f, _) = recurrence_step(&tape, &params, &states, &residuals, &copy, &zero, &ctx).unwrap();
        assert_eq!(f.value().data(), &[2.5]);

        // All-zero coefficients, identity backbone on an isolated node.
        let states = [one(&tape, 2.0)];
        let residuals = [one(&tape, 9.0)];
        let none = BlockCoefficients {
            phi: row(&tape, &[0.0]),
            theta: row(&tape, &[0.0]),
        };
        let (f, d) = recurrence_step(&tape, &params, &states, &residuals, &none, &ident, &ctx).unwrap();
        assert_eq!(f.value().data(), &[2.0]);
        assert_eq!(d.value().data(), &[2.0]);
    }

    fn config(level: TaskLevel, selector: SelectorMode) -> ModelConfig {
        ModelConfig {
            hidden: 8,
            selector,
            ..ModelConfig::new(2, 3, level)
        }
    }

    fn random_graph(rng: &mut impl Rng, n: usize, c: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(0.3) {
                    edges.push((u, v));
                }
            }
        }
        let feats = (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        plain_graph(n, edges, feats)
    }

    #[test]
    fn block_identity_recurrence_with_relu() {
        let mut params = ParamSet::new();
        let backbone = linear_with(&mut params, Tensor::zeros(2, 2), Tensor::zeros(1, 2));
        let phi = params.add("phi", Tensor::from_rows(&[vec![1.0]]));
        let theta = params.add("theta", Tensor::zeros(1, 1));
        let block = GramaBlock {
            backbone,
            selector: BlockSelector::Naive { phi, theta },
        };
        let g = plain_graph(2, vec![(0, 1)], vec![0.0; 4]);
        let ctx = GraphContext::new(&g);
        let tape = Tape::new();
        let last = tape.constant(Tensor::from_rows(&[vec![0.5, 2.0], vec![1.0, 0.0]]));
        let input = GraphSequence::new(vec![last], vec![tape.constant(Tensor::zeros(2, 2))], 0).unwrap();
        let (out, _) = block.forward(&tape, &params, &input, &ctx, 1, Activation::Relu, false).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(*out.states[0].value(), *last.value());

        let two = GraphSequence::new(vec![last, last], vec![input.residuals[0]; 2], 0).unwrap();
        let (out, _) = block.forward(&tape, &params, &two, &ctx, 2, Activation::Relu, false).unwrap();
        assert_eq!((out.states.len(), out.residuals.len()), (2, 2));
    }

    #[test]
    fn block_is_linear_before_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        let backbone = Linear {
            weight: params.add("w", crate::nn::uniform_fan_in(&mut rng, 3, 3, 3)),
            bias: params.add("b", Tensor::zeros(1, 3)),
        };
        let g = random_graph(&mut rng, 6, 3);
        let ctx = GraphContext::new(&g);
        let tape = Tape::new();
        let coeffs = BlockCoefficients {
            phi: row(&tape, &[0.4, -0.3]),
            theta: row(&tape, &[0.7, 0.2]),
        };
        let rand_seq = |rng: &mut ChaCha8Rng| -> Vec<Tensor> {
            (0..2)
                .map(|_| Tensor::matrix(6, 3, (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()))
                .collect()
        };
        let (fa, da, fb, db) = (rand_seq(&mut rng), rand_seq(&mut rng), rand_seq(&mut rng), rand_seq(&mut rng));
        let run = |f: &[Tensor], d: &[Tensor]| -> Vec<Tensor> {
            let seq = GraphSequence::new(
                f.iter().map(|t| tape.constant(t.clone())).collect(),
                d.iter().map(|t| tape.constant(t.clone())).collect(),
                0,
            )
            .unwrap();
            let (s, r) = run_recurrences(&tape, &params, &seq, &coeffs, &backbone, &ctx, 2).unwrap();
            s.iter().chain(&r).map(|v| (*v.value()).clone()).collect()
        };
        let combine = |x: &[Tensor], y: &[Tensor], a: f64, b: f64| -> Vec<Tensor> {
            x.iter()
                .zip(y)
                .map(|(u, v)| {
                    Tensor::matrix(6, 3, u.data().iter().zip(v.data()).map(|(p, q)| a * p + b * q).collect())
                })
                .collect()
        };
        let base_a = run(&fa, &da);
        let base_b = run(&fb, &db);
        // Homogeneity and additivity hold for the affine-free map.
        let scaled = run(&combine(&fa, &fa, 2.0, 0.0), &combine(&da, &da, 2.0, 0.0));
        for (s, a) in scaled.iter().zip(&base_a) {
            assert!(s.max_abs_diff(&a.map(|v| 2.0 * v)) < 1e-10);
        }
        let summed = run(&combine(&fa, &fb, 1.0, 1.0), &combine(&da, &db, 1.0, 1.0));
        for ((s, a), b) in summed.iter().zip(&base_a).zip(&base_b) {
            let expect = Tensor::matrix(6, 3, a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect());
            assert!(s.max_abs_diff(&expect) < 1e-10);
        }
    }

    #[test]
    fn degenerate_single_step_model_shapes() {
        let cfg = ModelConfig {
            seq_len: 1,
            blocks: 1,
            p: 1,
            q: 1,
            ..config(TaskLevel::Node, SelectorMode::Selective)
        };
        let model = GramaModel::new(cfg, 0).unwrap();
        let g = plain_graph(4, vec![(0, 1), (1, 2)], vec![0.1; 8]);
        assert_eq!(model.predict(&g).unwrap().shape(), &[4, 3]);
        let graph_model = GramaModel::new(config(TaskLevel::Graph, SelectorMode::Naive), 0).unwrap();
        assert_eq!(graph_model.predict(&g).unwrap().shape(), &[1, 3]);
    }

    #[test]
    fn config_rejects_orders_beyond_length() {
        let cfg = ModelConfig {
            p: 3,
            ..config(TaskLevel::Node, SelectorMode::Naive)
        };
        assert!(matches!(GramaModel::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = GramaModel::new(config(TaskLevel::Node, SelectorMode::Selective), 4).unwrap();
        let b = GramaModel::new(config(TaskLevel::Node, SelectorMode::Selective), 4).unwrap();
        assert_eq!(a.params().to_snapshot(), b.params().to_snapshot());
    }

    #[test]
    fn blocks_have_distinct_parameters() {
        let m = GramaModel::new(config(TaskLevel::Node, SelectorMode::Naive), 0).unwrap();
        let ids: Vec<ParamId> = m
            .blocks()
            .iter()
            .flat_map(|b| match &b.selector {
                BlockSelector::Naive { phi, theta } => vec![b.backbone.weight, *phi, *theta],
                _ => unreachable!(),
            })
            .collect();
        let mut dedup = ids.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), ids.len());
    }

    #[test]
    fn node_outputs_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for arch in [Architecture::Grama, Architecture::Gcn] {
            let cfg = ModelConfig {
                architecture: arch,
                ..config(TaskLevel::Node, SelectorMode::Selective)
            };
            let model = GramaModel::new(cfg, 1).unwrap();
            for _ in 0..5 {
                let g = random_graph(&mut rng, 9, 2);
                let mut perm: Vec<usize> = (0..9).collect();
                perm.shuffle(&mut rng);
                let out = model.predict(&g).unwrap();
                let out_p = model.predict(&permute_graph(&g, &perm).unwrap()).unwrap();
                assert!(out_p.max_abs_diff(&out.permute_rows(&perm)) < 1e-9);
            }
        }
    }

    #[test]
    fn batched_equals_separate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for level in [TaskLevel::Node, TaskLevel::Graph] {
            let model = GramaModel::new(config(level, SelectorMode::Selective), 3).unwrap();
            let gs = [random_graph(&mut rng, 5, 2), random_graph(&mut rng, 7, 2)];
            let batched = model.predict(&batch_graphs(&gs).unwrap()).unwrap();
            let mut offset = 0;
            for g in &gs {
                let alone = model.predict(g).unwrap();
                for r in 0..alone.rows() {
                    for (a, b) in alone.row(r).iter().zip(batched.row(offset + r)) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
                offset += alone.rows();
            }
            let trace = model.coefficient_trace(&batch_graphs(&gs).unwrap()).unwrap();
            let first = model.coefficient_trace(&gs[0]).unwrap();
            for (block, single) in trace.iter().zip(&first) {
                assert_eq!(block.len(), 2);
                assert!(block[0].phi.iter().zip(&single[0].phi).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn selective_coefficients_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = GramaModel::new(config(TaskLevel::Node, SelectorMode::Selective), 5).unwrap();
        let g = random_graph(&mut rng, 6, 2);
        for block in model.coefficient_trace(&g).unwrap() {
            for c in block {
                assert!((c.phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!((c.theta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_requires_matching_targets() {
        let model = GramaModel::new(config(TaskLevel::Node, SelectorMode::Naive), 0).unwrap();
        let g = plain_graph(2, vec![(0, 1)], vec![0.0; 4]);
        let tape = Tape::new();
        assert!(matches!(model.loss(&tape, &g), Err(Error::Dataset(_))));
        let g = g.with_targets(Targets::Node(Tensor::zeros(2, 3))).unwrap();
        let l = model.loss(&tape, &g).unwrap();
        assert!(l.value().is_scalar());
    }
}
