//! Run configuration, training with early stopping, evaluation and run
//! artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arma::{Architecture, GraphContext, GramaModel, ModelConfig, TaskLevel};
use crate::datasets::{Dataset, DatasetSpec};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Graph, Targets};
use crate::kv::{render, KeyValues};
use crate::selector::SelectorMode;
use crate::ssm::StabilityReport;
use crate::tensor::{Activation, Adam, AdamConfig, ParamSnapshot, Tape, Tensor};

/// Graphs per forward pass when evaluating.
const EVAL_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean squared error pooled over every target entry of the split.
    Mse,
    /// `log10` of the pooled MSE; `-inf` for a perfect fit.
    Log10Mse,
}

impl Metric {
    /// Metric reported for a task.
    pub fn for_spec(spec: &DatasetSpec) -> Metric {
        if spec.is_transfer() {
            Metric::Mse
        } else {
            Metric::Log10Mse
        }
    }

    pub fn check(self, spec: &DatasetSpec) -> Result<()> {
        if self == Metric::for_spec(spec) {
            Ok(())
        } else {
            Err(Error::MetricMismatch {
                metric: self.to_string(),
                task: spec.task_name(),
            })
        }
    }

    pub fn from_mse(self, mse: f64) -> f64 {
        match self {
            Metric::Mse => mse,
            Metric::Log10Mse => {
                if mse == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    mse.log10()
                }
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Mse => "mse",
            Metric::Log10Mse => "log10_mse",
        })
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mse" => Ok(Metric::Mse),
            "log10_mse" => Ok(Metric::Log10Mse),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

/// Formats a metric value; non-finite values become `-inf`, `inf`, `nan`.
pub fn format_metric(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:?}")
    }
}

/// Serializes an `f64` as a JSON number, or as a string sentinel when it is
/// not finite.
pub mod metric_value {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::format_metric(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad metric value '{other}'"))),
            },
        }
    }
}

/// Flat run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramaConfig {
    /// Expected dataset task (`transfer`, `diameter`, ...); checked if set.
    pub task: Option<String>,
    pub model: Architecture,
    pub seq_len: usize,
    pub blocks: usize,
    pub p: usize,
    pub q: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub selector: SelectorMode,
    pub stability_projection: bool,
    pub heads: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Graphs per step; `None` picks full batch for transfer, 32 otherwise.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for GramaConfig {
    fn default() -> Self {
        GramaConfig {
            task: None,
            model: Architecture::Grama,
            seq_len: 2,
            blocks: 2,
            p: 2,
            q: 2,
            hidden: 32,
            activation: Activation::Relu,
            selector: SelectorMode::Selective,
            stability_projection: false,
            heads: 2,
            lr: 1e-3,
            weight_decay: 0.0,
            epochs: 500,
            patience: 100,
            batch_size: None,
            seed: 0,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "task",
    "model",
    "backbone",
    "seq_len",
    "blocks",
    "p",
    "q",
    "hidden",
    "activation",
    "selector",
    "stability_projection",
    "heads",
    "lr",
    "weight_decay",
    "epochs",
    "patience",
    "batch_size",
    "seed",
];

impl GramaConfig {
    /// Parse `key=value` text; omitted `p` and `q` default to `seq_len`.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.check_known(CONFIG_KEYS)?;
        if let Some(b) = kv.get_str("backbone") {
            if b != "gcn" {
                return Err(Error::Config(format!("unsupported backbone '{b}' (only gcn)")));
            }
        }
        let d = GramaConfig::default();
        let seq_len = kv.get_or("seq_len", d.seq_len)?;
        let cfg = GramaConfig {
            task: kv.get("task")?,
            model: kv.get_or("model", d.model)?,
            seq_len,
            blocks: kv.get_or("blocks", d.blocks)?,
            p: kv.get_or("p", seq_len)?,
            q: kv.get_or("q", seq_len)?,
            hidden: kv.get_or("hidden", d.hidden)?,
            activation: kv.get_or("activation", d.activation)?,
            selector: kv.get_or("selector", d.selector)?,
            stability_projection: kv.get_or("stability_projection", d.stability_projection)?,
            heads: kv.get_or("heads", d.heads)?,
            lr: kv.get_or("lr", d.lr)?,
            weight_decay: kv.get_or("weight_decay", d.weight_decay)?,
            epochs: kv.get_or("epochs", d.epochs)?,
            patience: kv.get_or("patience", d.patience)?,
            batch_size: kv.get("batch_size")?,
            seed: kv.get_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(&str, String)> = Vec::new();
        if let Some(t) = &self.task {
            pairs.push(("task", t.clone()));
        }
        pairs.extend([
            ("model", self.model.to_string()),
            ("backbone", "gcn".into()),
            ("seq_len", self.seq_len.to_string()),
            ("blocks", self.blocks.to_string()),
            ("p", self.p.to_string()),
            ("q", self.q.to_string()),
            ("hidden", self.hidden.to_string()),
            ("activation", self.activation.to_string()),
            ("selector", self.selector.to_string()),
            ("stability_projection", self.stability_projection.to_string()),
            ("heads", self.heads.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("epochs", self.epochs.to_string()),
            ("patience", self.patience.to_string()),
        ]);
        if let Some(b) = self.batch_size {
            pairs.push(("batch_size", b.to_string()));
        }
        pairs.push(("seed", self.seed.to_string()));
        render(&pairs)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lr, self.weight_decay].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Config("lr and weight_decay must be non-negative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Model shape for `ds`: widths from the first training graph, level from
    /// its targets.
    pub fn model_config(&self, ds: &Dataset) -> Result<ModelConfig> {
        if let Some(task) = &self.task {
            if *task != ds.spec.task_name() {
                return Err(Error::Config(format!(
                    "config is for task '{task}' but the dataset is '{}'",
                    ds.spec.task_name()
                )));
            }
        }
        let first = ds
            .train
            .first()
            .ok_or_else(|| Error::Dataset("training split is empty".into()))?;
        let (level, out_dim) = match first.targets() {
            Targets::Node(t) => (TaskLevel::Node, t.cols()),
            Targets::Graph(t) => (TaskLevel::Graph, t.cols()),
            Targets::None => return Err(Error::Dataset("training graphs carry no targets".into())),
        };
        let cfg = ModelConfig {
            architecture: self.model,
            level,
            in_dim: first.feature_width(),
            out_dim,
            hidden: self.hidden,
            seq_len: self.seq_len,
            blocks: self.blocks,
            p: self.p,
            q: self.q,
            activation: self.activation,
            selector: self.selector,
            heads: self.heads,
            stability_projection: self.stability_projection,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn effective_batch_size(&self, spec: &DatasetSpec, train_len: usize) -> usize {
        self.batch_size
            .unwrap_or(if spec.is_transfer() { train_len.max(1) } else { 32 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub metric: Metric,
    #[serde(with = "metric_value")]
    pub test_metric: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub config: GramaConfig,
    pub dataset_hash: Option<String>,
    pub data_dir: Option<PathBuf>,
    #[serde(skip)]
    pub history: Vec<EpochRecord>,
}

impl RunRecord {
    /// `epoch,train_loss,val_loss` with full-precision values.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.history {
            out.push_str(&format!("{},{:?},{:?}\n", e.epoch, e.train_loss, e.val_loss));
        }
        out
    }
}

/// Trained model (best-validation parameters) with its record.
pub struct TrainOutcome {
    pub model: GramaModel,
    pub record: RunRecord,
}

/// Pooled squared error and entry count of `model` on `graphs`.
fn squared_error(model: &GramaModel, graphs: &[Graph]) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut count = 0;
    for chunk in graphs.chunks(EVAL_CHUNK) {
        let g = batch_graphs(chunk)?;
        let pred = model.predict(&g)?;
        let target = model.targets_for(&g)?;
        sum += pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += target.numel();
    }
    Ok((sum, count))
}

/// Pooled MSE over every target entry of `graphs`.
pub fn mse(model: &GramaModel, graphs: &[Graph]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty split".into()));
    }
    let (sum, count) = squared_error(model, graphs)?;
    Ok(sum / count as f64)
}

pub fn evaluate(model: &GramaModel, graphs: &[Graph], metric: Metric) -> Result<f64> {
    Ok(metric.from_mse(mse(model, graphs)?))
}

/// Stability reports of every block's coefficients on `g` (first member).
pub fn coefficient_report(model: &GramaModel, g: &Graph) -> String {
    if model.config().architecture == Architecture::Gcn {
        return "no ARMA coefficients (plain GCN)".into();
    }
    match model.coefficient_trace(g) {
        Ok(trace) => trace
            .iter()
            .enumerate()
            .map(|(s, block)| format!("block {s}: {}", StabilityReport::new(&block[0].phi)))
            .collect::<Vec<_>>()
            .join("; "),
        Err(e) => format!("unavailable ({e})"),
    }
}

/// Batches of `size` graphs, each with its prepared operator context.
struct Batch {
    graph: Graph,
    ctx: GraphContext,
}

fn make_batches(graphs: &[Graph], order: &[usize], size: usize) -> Result<Vec<Batch>> {
    order
        .chunks(size)
        .map(|idx| {
            let members: Vec<Graph> = idx.iter().map(|&i| graphs[i].clone()).collect();
            let graph = batch_graphs(&members)?;
            let ctx = GraphContext::new(&graph);
            Ok(Batch { graph, ctx })
        })
        .collect()
}

/// Adam on MSE with early stopping on validation loss. The returned model
/// holds the parameters of the best validation epoch.
pub fn train(config: &GramaConfig, ds: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    if ds.val.is_empty() || ds.test.is_empty() {
        return Err(Error::Dataset("validation and test splits must be non-empty".into()));
    }
    let start = Instant::now();
    let model_cfg = config.model_config(ds)?;
    let mut model = GramaModel::new(model_cfg, config.seed)?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let batch_size = config.effective_batch_size(&ds.spec, ds.train.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..ds.train.len()).collect();
    let full_batch = batch_size >= ds.train.len();
    let fixed = if full_batch {
        Some(make_batches(&ds.train, &order, batch_size)?)
    } else {
        None
    };

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<ParamSnapshot>)> = None;
    for epoch in 1..=config.epochs {
        let shuffled;
        let batches = match &fixed {
            Some(b) => b,
            None => {
                order.shuffle(&mut shuffle_rng);
                shuffled = make_batches(&ds.train, &order, batch_size)?;
                &shuffled
            }
        };
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in batches {
            let tape = Tape::new();
            let (loss, _) = model.loss_with(&tape, &batch.graph, &batch.ctx)?;
            let value = loss.value().data()[0];
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: value,
                    report: coefficient_report(&model, &batch.graph),
                });
            }
            let entries = model.targets_for(&batch.graph)?.numel();
            sum += value * entries as f64;
            count += entries;
            let grads = tape.backward(loss)?;
            let params = model.params_mut();
            params.set_grads(&grads);
            params.fill_missing_grads();
            adam.step(params)?;
        }
        let train_loss = sum / count as f64;
        let val_loss = mse(&model, &ds.val)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: val_loss,
                report: coefficient_report(&model, &ds.val[0]),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().is_none_or(|(_, b, _)| val_loss < *b);
        if improved {
            best = Some((epoch, val_loss, model.params().to_snapshot()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |(e, _, _)| *e);
        if epoch - best_epoch > config.patience {
            break;
        }
    }
    let (best_epoch, best_val_loss, snapshot) = best.expect("at least one epoch runs");
    model.params_mut().load_snapshot(&snapshot)?;
    let metric = Metric::for_spec(&ds.spec);
    let test_metric = evaluate(&model, &ds.test, metric)?;
    let record = RunRecord {
        task: ds.spec.task_name(),
        metric,
        test_metric,
        best_epoch,
        best_val_loss,
        epochs_run: history.len(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        seed: config.seed,
        config: config.clone(),
        dataset_hash: None,
        data_dir: None,
        history,
    };
    Ok(TrainOutcome { model, record })
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const RESULT_FILE: &str = "result.json";
pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_FILE: &str = "config.txt";

/// Write `metrics.csv`, `result.json`, `params.json` and `config.txt`.
pub fn write_run(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(METRICS_FILE), outcome.record.metrics_csv())?;
    fs::write(
        dir.join(RESULT_FILE),
        serde_json::to_string_pretty(&outcome.record)? + "\n",
    )?;
    fs::write(
        dir.join(PARAMS_FILE),
        serde_json::to_string(&outcome.model.params().to_snapshot())? + "\n",
    )?;
    fs::write(dir.join(CONFIG_FILE), outcome.record.config.to_text())?;
    Ok(())
}

pub fn read_record(dir: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(dir.join(RESULT_FILE))
        .map_err(|e| Error::Config(format!("{}: {e}", dir.join(RESULT_FILE).display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuild the trained model stored in a run directory.
pub fn load_model(dir: &Path, ds: &Dataset) -> Result<GramaModel> {
    let record = read_record(dir)?;
    let mut model = GramaModel::new(record.config.model_config(ds)?, record.config.seed)?;
    let snapshot: Vec<ParamSnapshot> = serde_json::from_str(&fs::read_to_string(dir.join(PARAMS_FILE))?)?;
    model.params_mut().load_snapshot(&snapshot)?;
    Ok(model)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Predictions of the training-target mean, for baselines.
pub fn constant_mean_mse(train: &[Graph], eval: &[Graph]) -> Result<f64> {
    let collect = |gs: &[Graph]| -> Vec<f64> {
        gs.iter()
            .filter_map(|g| g.targets().tensor())
            .flat_map(|t: &Tensor| t.data().to_vec())
            .collect()
    };
    let (tr, ev) = (collect(train), collect(eval));
    if tr.is_empty() || ev.is_empty() {
        return Err(Error::Dataset("no targets for the constant baseline".into()));
    }
    let mean = tr.iter().sum::<f64>() / tr.len() as f64;
    Ok(ev.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ev.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_transfer, SplitCounts, Topology, TransferSpec};

    fn tiny_transfer(train: usize) -> Dataset {
        gen_transfer(&TransferSpec {
            counts: SplitCounts { train, val: 8, test: 8 },
            ..TransferSpec::new(Topology::Line, 3, 1)
        })
        .unwrap()
    }

    fn quick() -> GramaConfig {
        GramaConfig {
            hidden: 8,
            epochs: 5,
            lr: 1e-2,
            ..GramaConfig::default()
        }
    }

    #[test]
    fn config_text_round_trip_and_defaults() {
        let cfg = GramaConfig::parse("seq_len=3\nselector=naive\nbatch_size=4\n").unwrap();
        assert_eq!((cfg.p, cfg.q), (3, 3));
        assert_eq!(GramaConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(GramaConfig::parse("backbone=gat\n").is_err());
        assert!(GramaConfig::parse("learning_rate=1\n").is_err());
        assert!(GramaConfig::parse("epochs=0\n").is_err());
    }

    #[test]
    fn metric_rules() {
        assert_eq!(Metric::Log10Mse.from_mse(0.0), f64::NEG_INFINITY);
        assert_eq!(format_metric(f64::NEG_INFINITY), "-inf");
        assert!((Metric::Log10Mse.from_mse(0.01) + 2.0).abs() < 1e-15);
        let ds = tiny_transfer(2);
        assert!(Metric::Mse.check(&ds.spec).is_ok());
        assert!(matches!(Metric::Log10Mse.check(&ds.spec), Err(Error::MetricMismatch { .. })));
    }

    #[test]
    fn lr_zero_keeps_loss_constant() {
        let ds = tiny_transfer(6);
        let cfg = GramaConfig { lr: 0.0, ..quick() };
        let out = train(&cfg, &ds).unwrap();
        let first = out.record.history[0];
        for e in &out.record.history {
            assert_eq!(e.train_loss, first.train_loss);
            assert_eq!(e.val_loss, first.val_loss);
        }
    }

    #[test]
    fn patience_zero_stops_after_first_non_improving_epoch() {
        let ds = tiny_transfer(6);
        // With lr = 0 the second epoch cannot improve.
        let cfg = GramaConfig { lr: 0.0, patience: 0, ..quick() };
        let out = train(&cfg, &ds).unwrap();
        assert_eq!((out.record.best_epoch, out.record.epochs_run), (1, 2));
    }

    #[test]
    fn same_seed_same_metrics() {
        let ds = tiny_transfer(6);
        let a = train(&quick(), &ds).unwrap().record;
        let b = train(&quick(), &ds).unwrap().record;
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert_eq!(a.test_metric, b.test_metric);
    }

    #[test]
    fn record_round_trips_with_sentinel() {
        let ds = tiny_transfer(4);
        let mut rec = train(&quick(), &ds).unwrap().record;
        rec.test_metric = f64::NEG_INFINITY;
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.contains("\"-inf\""));
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.test_metric, f64::NEG_INFINITY);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
