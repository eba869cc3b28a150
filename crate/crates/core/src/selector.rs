//! ARMA coefficient selection per block: free parameters (naive) or
//! softmax-free attention over the mean-pooled input sequences (selective).

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorError};
use crate::lift::GraphSequence;
use crate::nn::uniform_fan_in;
use crate::tensor::{ParamId, ParamSet, Segments, Tape, Tensor, Var};

/// Below this absolute row sum, normalization falls back to uniform weights.
pub const DEGENERATE_SUM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    Naive,
    Selective,
}

impl FromStr for SelectorMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "naive" => Ok(SelectorMode::Naive),
            "selective" => Ok(SelectorMode::Selective),
            other => Err(format!("unknown selector mode '{other}'")),
        }
    }
}

impl fmt::Display for SelectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectorMode::Naive => "naive",
            SelectorMode::Selective => "selective",
        })
    }
}

/// AR and MA coefficients of one graph in one block. `phi[0]` weights the
/// newest state, `theta[0]` the newest residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmaCoefficients {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mode: SelectorMode,
}

impl ArmaCoefficients {
    pub fn new(phi: Vec<f64>, theta: Vec<f64>, mode: SelectorMode) -> Result<Self> {
        if phi.is_empty() || theta.is_empty() {
            return Err(Error::Config(format!(
                "ARMA orders must be >= 1 (p = {}, q = {})",
                phi.len(),
                theta.len()
            )));
        }
        Ok(ArmaCoefficients { phi, theta, mode })
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }
}

/// Per-graph coefficients on the tape: `phi` is `G x p`, `theta` is `G x q`,
/// both in lag order (column 0 = lag 1).
#[derive(Clone, Copy, Debug)]
pub struct BlockCoefficients<'t> {
    pub phi: Var<'t>,
    pub theta: Var<'t>,
}

impl BlockCoefficients<'_> {
    pub fn p(&self) -> usize {
        self.phi.cols()
    }

    pub fn q(&self) -> usize {
        self.theta.cols()
    }

    /// Values for member graph `g`.
    pub fn for_graph(&self, g: usize, mode: SelectorMode) -> ArmaCoefficients {
        ArmaCoefficients {
            phi: self.phi.value().row(g).to_vec(),
            theta: self.theta.value().row(g).to_vec(),
            mode,
        }
    }

    pub fn all(&self, mode: SelectorMode) -> Vec<ArmaCoefficients> {
        (0..self.phi.rows()).map(|g| self.for_graph(g, mode)).collect()
    }
}

/// Mean over nodes, per member graph: each `n x d` element becomes `G x d`.
pub fn pool_sequence<'t>(seq: &[Var<'t>], seg: &Rc<Segments>) -> Result<Vec<Var<'t>>> {
    Ok(seq
        .iter()
        .map(|v| v.segment_mean(seg))
        .collect::<std::result::Result<_, _>>()?)
}

/// Query/key projections of one multi-head score module.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionScorer {
    pub query: ParamId,
    pub key: ParamId,
    pub heads: usize,
    pub dim: usize,
}

impl AttentionScorer {
    pub fn new(params: &mut ParamSet, rng: &mut impl Rng, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "hidden width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(AttentionScorer {
            query: params.add(format!("{name}.query"), uniform_fan_in(rng, dim, dim, dim)),
            key: params.add(format!("{name}.key"), uniform_fan_in(rng, dim, dim, dim)),
            heads,
            dim,
        })
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Full `L x L` score matrix for one graph's pooled sequence (`L x d`):
    /// per-head `Q K^T / sqrt(d/H)`, averaged over heads, then `tanh`.
    pub fn scores<'t>(&self, tape: &'t Tape, params: &ParamSet, pooled: Var<'t>) -> Result<Var<'t>> {
        let q = pooled.matmul(tape.param(params, self.query))?;
        let k = pooled.matmul(tape.param(params, self.key))?;
        let hd = self.head_dim();
        let mut acc: Option<Var<'t>> = None;
        for h in 0..self.heads {
            let qh = q.slice(1, h * hd, hd)?;
            let kh = k.slice(1, h * hd, hd)?;
            let s = qh.matmul(kh.transpose())?.scale(1.0 / (hd as f64).sqrt());
            acc = Some(match acc {
                Some(a) => a.add(s)?,
                None => s,
            });
        }
        Ok(acc.expect("heads >= 1").scale(1.0 / self.heads as f64).tanh())
    }

    /// Last row of [`AttentionScorer::scores`] for every member graph at
    /// once. `pooled[k]` is `G x d`; the result is `G x L`.
    pub fn last_row<'t>(&self, tape: &'t Tape, params: &ParamSet, pooled: &[Var<'t>]) -> Result<Var<'t>> {
        let last = *pooled.last().ok_or(TensorError::InvalidArgument {
            op: "attention_scores",
            detail: "empty sequence".into(),
        })?;
        let wk = tape.param(params, self.key);
        let q = last.matmul(tape.param(params, self.query))?;
        let hd = self.head_dim();
        let scale = hd as f64 / (hd as f64).sqrt() / self.heads as f64;
        let mut cols = Vec::with_capacity(pooled.len());
        for p in pooled {
            let prod = q.mul(p.matmul(wk)?)?;
            let mut acc: Option<Var<'t>> = None;
            for h in 0..self.heads {
                let s = prod.slice(1, h * hd, hd)?.mean_axis(1)?;
                acc = Some(match acc {
                    Some(a) => a.add(s)?,
                    None => s,
                });
            }
            cols.push(acc.expect("heads >= 1").scale(scale));
        }
        Ok(tape.concat(&cols, 1)?.tanh())
    }
}

/// Take the last `order` entries of each score row (sequence order, oldest
/// first) and divide by their sum, falling back to uniform weights when the
/// sum is degenerate.
pub fn extract_normalize<'t>(rows: Var<'t>, order: usize) -> Result<Var<'t>> {
    let len = rows.cols();
    if order == 0 || order > len {
        return Err(TensorError::InvalidArgument {
            op: "extract_normalize",
            detail: format!("order {order} outside 1..={len}"),
        }
        .into());
    }
    Ok(rows.slice(1, len - order, order)?.sum_normalize_rows(DEGENERATE_SUM))
}

/// Reverse columns: sequence order (oldest first) to lag order (lag 1 first).
pub fn to_lag_order<'t>(window: Var<'t>) -> Result<Var<'t>> {
    let p = window.cols();
    let cols = (0..p)
        .rev()
        .map(|j| window.slice(1, j, 1))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(window.tape().concat(&cols, 1)?)
}

/// `phi / max(1, sum |phi|)`.
pub fn stability_projection(phi: &[f64]) -> Vec<f64> {
    let s = phi.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    phi.iter().map(|v| v / s).collect()
}

/// Coefficient source for one block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockSelector {
    Naive { phi: ParamId, theta: ParamId },
    Selective { ar: AttentionScorer, ma: AttentionScorer, p: usize, q: usize },
}

impl BlockSelector {
    pub fn naive(params: &mut ParamSet, name: &str, p: usize, q: usize) -> Self {
        // Sum phi = 1 puts a root of the AR polynomial on the unit circle.
        BlockSelector::Naive {
            phi: params.add(format!("{name}.phi"), Tensor::filled(1, p, 1.0 / p as f64)),
            theta: params.add(format!("{name}.theta"), Tensor::zeros(1, q)),
        }
    }

    pub fn selective(
        params: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        p: usize,
        q: usize,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        Ok(BlockSelector::Selective {
            ar: AttentionScorer::new(params, rng, &format!("{name}.ar"), dim, heads)?,
            ma: AttentionScorer::new(params, rng, &format!("{name}.ma"), dim, heads)?,
            p,
            q,
        })
    }

    pub fn mode(&self) -> SelectorMode {
        match self {
            BlockSelector::Naive { .. } => SelectorMode::Naive,
            BlockSelector::Selective { .. } => SelectorMode::Selective,
        }
    }

    /// Coefficients for every member graph, computed from the block input.
    pub fn coefficients<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamSet,
        input: &GraphSequence<'t>,
        seg: &Rc<Segments>,
        project: bool,
    ) -> Result<BlockCoefficients<'t>> {
        let groups = seg.count();
        let (phi, theta) = match self {
            BlockSelector::Naive { phi, theta } => (
                tape.param(params, *phi).repeat_rows(groups)?,
                tape.param(params, *theta).repeat_rows(groups)?,
            ),
            BlockSelector::Selective { ar, ma, p, q } => {
                if *p > input.len() || *q > input.len() {
                    return Err(Error::InsufficientHistory {
                        op: "selective_coefficients",
                        needed: (*p).max(*q),
                        available: input.len(),
                    });
                }
                let pooled_f = pool_sequence(&input.states, seg)?;
                let pooled_d = pool_sequence(&input.residuals, seg)?;
                let ar_rows = ar.last_row(tape, params, &pooled_f)?;
                let ma_rows = ma.last_row(tape, params, &pooled_d)?;
                (
                    to_lag_order(extract_normalize(ar_rows, *p)?)?,
                    to_lag_order(extract_normalize(ma_rows, *q)?)?,
                )
            }
        };
        let phi = if project { phi.l1_project_rows() } else { phi };
        Ok(BlockCoefficients { phi, theta })
    }
}
