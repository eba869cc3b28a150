//! C ABI for grama: coefficient analysis, graph construction and model
//! inference behind opaque handles.
//!
//! Every fallible function returns a [`GramaStatus`]; on failure the message
//! is available from [`grama_last_error`] on the same thread. Handles are
//! created by `*_new`/`*_load` functions and released with the matching
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use grama::datasets::read_dataset;
use grama::harness::{load_model, read_record};
use grama::ssm::{build_ssm, propagation_horizon, Horizon, StabilityReport};
use grama::{Activation, Architecture, ArmaCoefficients, Error, Graph, ModelConfig, SelectorMode, TaskLevel};
use grama::{Targets, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramaStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 2,
    /// The graph is malformed (edges, features, sizes).
    Graph = 3,
    /// Tensor shapes did not line up.
    Shape = 4,
    /// A configuration, dataset or run directory could not be used.
    Config = 5,
    /// Reading a file failed.
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Prediction granularity, stored as `uint32_t` in [`GramaModelOptions`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramaLevel {
    Node = 0,
    Graph = 1,
}

/// Nonlinearity, stored as `uint32_t` in [`GramaModelOptions`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramaActivation {
    Relu = 0,
    Elu = 1,
    Gelu = 2,
    Tanh = 3,
}

/// Stability summary of autoregressive coefficients.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GramaStability {
    pub spectral_radius: f64,
    /// Sum of absolute coefficients.
    pub lagrange_bound: f64,
    /// `lagrange_bound <= 1`.
    pub sufficient_stable: bool,
    /// `spectral_radius <= 1` up to round-off.
    pub stable: bool,
}

/// Architecture of a freshly initialized model.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramaModelOptions {
    pub in_dim: usize,
    pub out_dim: usize,
    /// A [`GramaLevel`] value.
    pub level: u32,
    pub hidden: usize,
    pub seq_len: usize,
    pub blocks: usize,
    pub p: usize,
    pub q: usize,
    pub heads: usize,
    /// A [`GramaActivation`] value.
    pub activation: u32,
    /// Attention-selected coefficients; otherwise learned constants.
    pub selective: bool,
    pub stability_projection: bool,
    /// Plain GCN stack instead of ARMA blocks.
    pub gcn_baseline: bool,
}

/// Opaque graph handle.
pub struct GramaGraph {
    inner: Graph,
}

/// Opaque model handle.
pub struct GramaModel {
    inner: grama::GramaModel,
}

struct Failure {
    status: GramaStatus,
    message: String,
}

impl Failure {
    fn new(status: GramaStatus, message: impl Into<String>) -> Self {
        Failure { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Tensor(_) => GramaStatus::Shape,
            Error::Graph(_) => GramaStatus::Graph,
            Error::InsufficientHistory { .. } => GramaStatus::InvalidArgument,
            Error::Io(_) => GramaStatus::Io,
            _ => GramaStatus::Config,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<grama::GraphError> for Failure {
    fn from(e: grama::GraphError) -> Self {
        Error::from(e).into()
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GramaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GramaStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            GramaStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure::new(GramaStatus::NullPointer, format!("{name} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::new(GramaStatus::InvalidArgument, message)
}

/// View `len` values at `data`; an empty slice may come with a null pointer.
unsafe fn view<'a, T>(data: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn out_ref<'a, T>(out: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    out.as_mut().ok_or_else(|| null(name))
}

unsafe fn path_arg(s: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if s.is_null() {
        return Err(null(name));
    }
    let text = CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))?;
    Ok(PathBuf::from(text))
}

fn coefficients(phi: &[f64], theta: &[f64]) -> Result<ArmaCoefficients, Failure> {
    if phi.iter().chain(theta).any(|v| !v.is_finite()) {
        return Err(invalid("coefficients must be finite"));
    }
    Ok(ArmaCoefficients::new(phi.to_vec(), theta.to_vec(), SelectorMode::Naive)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grama_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn grama_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Spectral radius of the companion matrix of `phi[0..p]` (lag order).
///
/// # Safety
/// `phi` must point to `p` doubles and `out` to writable memory.
#[no_mangle]
pub unsafe extern "C" fn grama_spectral_radius(phi: *const f64, p: usize, out: *mut f64) -> GramaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let c = coefficients(view(phi, p, "phi")?, &[0.0])?;
        *out = grama::spectral_radius(&c.phi);
        Ok(())
    })
}

/// Stability summary of `phi[0..p]`.
///
/// # Safety
/// `phi` must point to `p` doubles and `out` to a writable struct.
#[no_mangle]
pub unsafe extern "C" fn grama_stability_report(phi: *const f64, p: usize, out: *mut GramaStability) -> GramaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let c = coefficients(view(phi, p, "phi")?, &[0.0])?;
        let r = StabilityReport::new(&c.phi);
        *out = GramaStability {
            spectral_radius: r.spectral_radius,
            lagrange_bound: r.lagrange_bound,
            sufficient_stable: r.sufficient_stable,
            stable: r.stable,
        };
        Ok(())
    })
}

/// Smallest number of steps after which an input's influence on the output
/// stays below `eps`. Sets `*infinite` (and leaves `*steps` at 0) when the
/// influence never decays below `eps` within the search cap.
///
/// # Safety
/// `phi`/`theta` must point to `p`/`q` doubles; `steps` and `infinite` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn grama_propagation_horizon(
    phi: *const f64,
    p: usize,
    theta: *const f64,
    q: usize,
    eps: f64,
    steps: *mut u64,
    infinite: *mut bool,
) -> GramaStatus {
    guard(|| {
        let steps = out_ref(steps, "steps")?;
        let infinite = out_ref(infinite, "infinite")?;
        if eps.is_nan() || eps <= 0.0 {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        let c = coefficients(view(phi, p, "phi")?, view(theta, q, "theta")?)?;
        match propagation_horizon(&build_ssm(&c), eps) {
            Horizon::Finite(k) => {
                *steps = k as u64;
                *infinite = false;
            }
            Horizon::Infinite => {
                *steps = 0;
                *infinite = true;
            }
        }
        Ok(())
    })
}

/// Build an undirected graph with `n` nodes, `m` edges given as
/// `edges[2k], edges[2k+1]`, and row-major `n x width` node features.
///
/// # Safety
/// `edges` must point to `2 m` values, `features` to `n * width` doubles and
/// `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn grama_graph_new(
    n: usize,
    edges: *const usize,
    m: usize,
    features: *const f64,
    width: usize,
    out: *mut *mut GramaGraph,
) -> GramaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        if width == 0 {
            return Err(invalid("feature width must be positive"));
        }
        let len = m.checked_mul(2).ok_or_else(|| invalid("edge count overflows"))?;
        let flat = view(edges, len, "edges")?;
        let feat_len = n.checked_mul(width).ok_or_else(|| invalid("feature size overflows"))?;
        let feats = view(features, feat_len, "features")?;
        let pairs = flat.chunks_exact(2).map(|e| (e[0], e[1])).collect();
        let g = Graph::new(n, pairs, Tensor::matrix(n, width, feats.to_vec()), Targets::None)?;
        *out = Box::into_raw(Box::new(GramaGraph { inner: g }));
        Ok(())
    })
}

/// Disjoint union of `count` graphs; graph-level models predict one row per
/// member.
///
/// # Safety
/// `graphs` must point to `count` valid graph handles.
#[no_mangle]
pub unsafe extern "C" fn grama_graph_batch(
    graphs: *const *const GramaGraph,
    count: usize,
    out: *mut *mut GramaGraph,
) -> GramaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let handles = view(graphs, count, "graphs")?;
        let members = handles
            .iter()
            .map(|h| h.as_ref().map(|g| g.inner.clone()).ok_or_else(|| null("graph handle")))
            .collect::<Result<Vec<_>, _>>()?;
        let g = grama::graph::batch_graphs(&members)?;
        *out = Box::into_raw(Box::new(GramaGraph { inner: g }));
        Ok(())
    })
}

/// Node count of a graph, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn grama_graph_num_nodes(graph: *const GramaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_nodes())
}

/// Release a graph. Null is ignored.
///
/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grama_graph_free(graph: *mut GramaGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Default options: hidden 32, two blocks of two recurrences, p = q = 2,
/// ReLU, selective coefficients with two heads, node level.
#[no_mangle]
pub extern "C" fn grama_model_options_default(in_dim: usize, out_dim: usize) -> GramaModelOptions {
    let c = ModelConfig::new(in_dim, out_dim, TaskLevel::Node);
    GramaModelOptions {
        in_dim,
        out_dim,
        level: GramaLevel::Node as u32,
        hidden: c.hidden,
        seq_len: c.seq_len,
        blocks: c.blocks,
        p: c.p,
        q: c.q,
        heads: c.heads,
        activation: GramaActivation::Relu as u32,
        selective: c.selector == SelectorMode::Selective,
        stability_projection: c.stability_projection,
        gcn_baseline: false,
    }
}

fn model_config(o: &GramaModelOptions) -> Result<ModelConfig, Failure> {
    let level = match o.level {
        0 => TaskLevel::Node,
        1 => TaskLevel::Graph,
        other => return Err(invalid(format!("unknown level {other}"))),
    };
    let activation = match o.activation {
        0 => Activation::Relu,
        1 => Activation::Elu,
        2 => Activation::Gelu,
        3 => Activation::Tanh,
        other => return Err(invalid(format!("unknown activation {other}"))),
    };
    Ok(ModelConfig {
        architecture: if o.gcn_baseline { Architecture::Gcn } else { Architecture::Grama },
        level,
        in_dim: o.in_dim,
        out_dim: o.out_dim,
        hidden: o.hidden,
        seq_len: o.seq_len,
        blocks: o.blocks,
        p: o.p,
        q: o.q,
        activation,
        selector: if o.selective { SelectorMode::Selective } else { SelectorMode::Naive },
        heads: o.heads,
        stability_projection: o.stability_projection,
    })
}

/// Initialize a model with deterministic parameters drawn from `seed`.
///
/// # Safety
/// `options` must point to a valid struct and `out` to a writable slot.
#[no_mangle]
pub unsafe extern "C" fn grama_model_new(
    options: *const GramaModelOptions,
    seed: u64,
    out: *mut *mut GramaModel,
) -> GramaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let options = options.as_ref().ok_or_else(|| null("options"))?;
        let model = grama::GramaModel::new(model_config(options)?, seed)?;
        *out = Box::into_raw(Box::new(GramaModel { inner: model }));
        Ok(())
    })
}

/// Load the trained model of a run directory written by `grama train`.
/// `data_dir` may be null to use the dataset recorded in the run.
///
/// # Safety
/// `run_dir` must be a NUL-terminated string, `data_dir` null or one, and
/// `out` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn grama_model_load(
    run_dir: *const c_char,
    data_dir: *const c_char,
    out: *mut *mut GramaModel,
) -> GramaStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let run = path_arg(run_dir, "run_dir")?;
        let data = if data_dir.is_null() {
            read_record(&run)?
                .data_dir
                .ok_or_else(|| Failure::new(GramaStatus::Config, "run has no recorded dataset directory"))?
        } else {
            path_arg(data_dir, "data_dir")?
        };
        let ds = read_dataset(&data)?;
        let model = load_model(&run, &ds)?;
        *out = Box::into_raw(Box::new(GramaModel { inner: model }));
        Ok(())
    })
}

fn output_shape(model: &grama::GramaModel, graph: &Graph) -> (usize, usize) {
    let c = model.config();
    let rows = match c.level {
        TaskLevel::Node => graph.num_nodes(),
        TaskLevel::Graph => graph.num_members(),
    };
    (rows, c.out_dim)
}

/// Number of doubles `grama_model_predict` writes for `graph`.
///
/// # Safety
/// `model` and `graph` must be valid handles and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn grama_model_output_len(
    model: *const GramaModel,
    graph: *const GramaGraph,
    len: *mut usize,
) -> GramaStatus {
    guard(|| {
        let len = out_ref(len, "len")?;
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let graph = graph.as_ref().ok_or_else(|| null("graph"))?;
        let (r, c) = output_shape(&model.inner, &graph.inner);
        *len = r * c;
        Ok(())
    })
}

/// Row-major predictions for `graph` into `out[0..len]`; `len` must equal
/// `grama_model_output_len`.
///
/// # Safety
/// `model` and `graph` must be valid handles and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn grama_model_predict(
    model: *const GramaModel,
    graph: *const GramaGraph,
    out: *mut f64,
    len: usize,
) -> GramaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let graph = graph.as_ref().ok_or_else(|| null("graph"))?;
        let (r, c) = output_shape(&model.inner, &graph.inner);
        if len != r * c {
            return Err(invalid(format!("output buffer holds {len} values, prediction needs {}", r * c)));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let pred = model.inner.predict(&graph.inner)?;
        slice::from_raw_parts_mut(out, len).copy_from_slice(pred.data());
        Ok(())
    })
}

/// Number of scalar parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn grama_model_num_params(model: *const GramaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.params().num_scalars())
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grama_model_free(model: *mut GramaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
