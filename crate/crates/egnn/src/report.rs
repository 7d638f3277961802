//! Text formats for training reports, evaluation metrics and summaries.
//!
//! A report is `key=value` lines in a fixed order followed by a blank line,
//! the line `[epochs]` and a tab-separated table:
//!
//! ```text
//! format=egnn-report-v1
//! variant=EGNN(A)
//! task=node-classification
//! metric=accuracy
//! layer=attn
//! layers=2
//! hidden=64
//! norm=ds
//! edge_encoding=directed
//! adaptive_edges=true
//! weighted_loss=false
//! dropout=0.6
//! weight_decay=0.0005
//! learning_rate=0.005
//! window=100
//! max_epochs=2000
//! batch_size=32
//! seed=0
//! dataset_fingerprint=<16 hex digits>
//! model_fingerprint=<16 hex digits>
//! epochs_run=<count>
//! best_epoch=<index>
//! best_val_loss=<float>
//! stopped_early=<bool>
//! test_metric=<float>
//!
//! [epochs]
//! epoch	train_loss	val_loss	train_metric	val_metric
//! 0	...
//! ```
//!
//! `edge_encoding` is `none` for graph tasks. Floats use the shortest form
//! that parses back to the same value (`NaN` allowed). The epoch table is
//! also written on its own as `curves.tsv`.
//!
//! A metrics file has the same `key=value` form with the keys of
//! [`METRICS_SCHEMA`]; its losses are unweighted.

use egnn_core::data::TaskKind;
use egnn_core::train::{EpochRecord, GraphEval, MetricKind, ModelConfig, NodeEval, TrainOutcome};

use crate::error::{Error, Result};
use crate::variant::Variant;

pub const REPORT_FORMAT: &str = "egnn-report-v1";
pub const METRICS_FORMAT: &str = "egnn-metrics-v1";
pub const CURVES_HEADER: &str = "epoch\ttrain_loss\tval_loss\ttrain_metric\tval_metric";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Task,
    Metric,
    Bool,
    Uint,
    Float,
    Hex,
}

pub const REPORT_SCHEMA: &[(&str, FieldKind)] = &[
    ("format", FieldKind::Text),
    ("variant", FieldKind::Text),
    ("task", FieldKind::Task),
    ("metric", FieldKind::Metric),
    ("layer", FieldKind::Text),
    ("layers", FieldKind::Uint),
    ("hidden", FieldKind::Uint),
    ("norm", FieldKind::Text),
    ("edge_encoding", FieldKind::Text),
    ("adaptive_edges", FieldKind::Bool),
    ("weighted_loss", FieldKind::Bool),
    ("dropout", FieldKind::Float),
    ("weight_decay", FieldKind::Float),
    ("learning_rate", FieldKind::Float),
    ("window", FieldKind::Uint),
    ("max_epochs", FieldKind::Uint),
    ("batch_size", FieldKind::Uint),
    ("seed", FieldKind::Uint),
    ("dataset_fingerprint", FieldKind::Hex),
    ("model_fingerprint", FieldKind::Hex),
    ("epochs_run", FieldKind::Uint),
    ("best_epoch", FieldKind::Uint),
    ("best_val_loss", FieldKind::Float),
    ("stopped_early", FieldKind::Bool),
    ("test_metric", FieldKind::Float),
];

pub const METRICS_SCHEMA: &[(&str, FieldKind)] = &[
    ("format", FieldKind::Text),
    ("task", FieldKind::Task),
    ("metric", FieldKind::Metric),
    ("dataset_fingerprint", FieldKind::Hex),
    ("model_fingerprint", FieldKind::Hex),
    ("train_loss", FieldKind::Float),
    ("val_loss", FieldKind::Float),
    ("test_loss", FieldKind::Float),
    ("train_metric", FieldKind::Float),
    ("val_metric", FieldKind::Float),
    ("test_metric", FieldKind::Float),
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_hex(v: u64) -> String {
    format!("{v:016x}")
}

fn metric_from_str(s: &str) -> Option<MetricKind> {
    [MetricKind::Accuracy, MetricKind::RocAuc, MetricKind::Rmse]
        .into_iter()
        .find(|m| m.as_str() == s)
}

pub fn render_curves(epochs: &[EpochRecord]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for e in epochs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.epoch,
            fmt_f64(e.train_loss),
            fmt_f64(e.val_loss),
            fmt_f64(e.train_metric),
            fmt_f64(e.val_metric)
        ));
    }
    out
}

pub fn render_report(outcome: &TrainOutcome, config: &ModelConfig, dataset_fingerprint: u64) -> String {
    let r = &outcome.report;
    let encoding = if r.task == TaskKind::NodeClassification {
        config.edge_encoding.as_str()
    } else {
        "none"
    };
    let fields: Vec<(&str, String)> = vec![
        ("format", REPORT_FORMAT.into()),
        ("variant", Variant::of(config).name()),
        ("task", r.task.as_str().into()),
        ("metric", r.metric.as_str().into()),
        ("layer", config.layer_kind.as_str().into()),
        ("layers", config.layers.to_string()),
        ("hidden", config.hidden_dim.to_string()),
        ("norm", config.normalization.as_str().into()),
        ("edge_encoding", encoding.into()),
        ("adaptive_edges", config.edge_adaptive.to_string()),
        ("weighted_loss", config.weighted_loss.to_string()),
        ("dropout", fmt_f64(config.dropout_rate)),
        ("weight_decay", fmt_f64(config.weight_decay)),
        ("learning_rate", fmt_f64(config.learning_rate)),
        ("window", config.early_stop_window.to_string()),
        ("max_epochs", config.max_epochs.to_string()),
        ("batch_size", config.batch_size.to_string()),
        ("seed", config.seed.to_string()),
        ("dataset_fingerprint", fmt_hex(dataset_fingerprint)),
        ("model_fingerprint", fmt_hex(outcome.model.fingerprint())),
        ("epochs_run", r.epochs_run().to_string()),
        ("best_epoch", r.best_epoch.to_string()),
        ("best_val_loss", fmt_f64(r.best_val_loss)),
        ("stopped_early", r.stopped_early.to_string()),
        ("test_metric", fmt_f64(r.test_metric)),
    ];
    let mut out = render_fields(&fields);
    out.push_str("\n[epochs]\n");
    out.push_str(&render_curves(&r.epochs));
    out
}

fn render_fields(fields: &[(&str, String)]) -> String {
    fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Losses and metrics on every split, as recomputed by `egnn eval`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

impl From<NodeEval> for SplitMetrics {
    fn from(e: NodeEval) -> Self {
        SplitMetrics {
            train_loss: e.train_loss,
            val_loss: e.val_loss,
            test_loss: e.test_loss,
            train_metric: e.train_accuracy,
            val_metric: e.val_accuracy,
            test_metric: e.test_accuracy,
        }
    }
}

impl From<GraphEval> for SplitMetrics {
    fn from(e: GraphEval) -> Self {
        SplitMetrics {
            train_loss: e.train_loss,
            val_loss: e.val_loss,
            test_loss: e.test_loss,
            train_metric: e.train_metric,
            val_metric: e.val_metric,
            test_metric: e.test_metric,
        }
    }
}

pub fn render_metrics(task: TaskKind, m: &SplitMetrics, dataset_fingerprint: u64, model_fingerprint: u64) -> String {
    render_fields(&[
        ("format", METRICS_FORMAT.into()),
        ("task", task.as_str().into()),
        ("metric", MetricKind::for_task(task).as_str().into()),
        ("dataset_fingerprint", fmt_hex(dataset_fingerprint)),
        ("model_fingerprint", fmt_hex(model_fingerprint)),
        ("train_loss", fmt_f64(m.train_loss)),
        ("val_loss", fmt_f64(m.val_loss)),
        ("test_loss", fmt_f64(m.test_loss)),
        ("train_metric", fmt_f64(m.train_metric)),
        ("val_metric", fmt_f64(m.val_metric)),
        ("test_metric", fmt_f64(m.test_metric)),
    ])
}

/// Parsed `key=value` section, schema-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields(Vec<(String, String)>);

impl Fields {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn uint(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }
}

fn schema_err(what: &'static str, message: impl Into<String>) -> Error {
    Error::format(what, message)
}

fn check_fields(
    what: &'static str,
    lines: &[&str],
    schema: &[(&str, FieldKind)],
    format: &str,
) -> Result<Fields> {
    if lines.len() != schema.len() {
        return Err(schema_err(
            what,
            format!("expected {} fields, found {}", schema.len(), lines.len()),
        ));
    }
    let mut out = Vec::with_capacity(schema.len());
    for (k, (line, &(key, kind))) in lines.iter().zip(schema).enumerate() {
        let (found, value) = line
            .split_once('=')
            .ok_or_else(|| schema_err(what, format!("line {}: expected key=value", k + 1)))?;
        if found != key {
            return Err(schema_err(
                what,
                format!("line {}: expected key `{key}`, found `{found}`", k + 1),
            ));
        }
        let ok = match kind {
            FieldKind::Text => !value.is_empty() && !value.contains('\t'),
            FieldKind::Task => value.parse::<TaskKind>().is_ok(),
            FieldKind::Metric => metric_from_str(value).is_some(),
            FieldKind::Bool => value == "true" || value == "false",
            FieldKind::Uint => value.parse::<u64>().is_ok(),
            FieldKind::Float => value.parse::<f64>().is_ok(),
            FieldKind::Hex => value.len() == 16 && u64::from_str_radix(value, 16).is_ok(),
        };
        if !ok {
            return Err(schema_err(what, format!("`{key}` has invalid value `{value}`")));
        }
        out.push((key.to_string(), value.to_string()));
    }
    let fields = Fields(out);
    if fields.get("format") != Some(format) {
        return Err(schema_err(what, format!("format must be `{format}`")));
    }
    if let (Some(task), Some(metric)) = (fields.get("task"), fields.get("metric")) {
        let task: TaskKind = task.parse().expect("checked");
        if MetricKind::for_task(task).as_str() != metric {
            return Err(schema_err(what, format!("metric `{metric}` does not fit task `{}`", task.as_str())));
        }
    }
    Ok(fields)
}

pub fn parse_metrics(text: &str) -> Result<Fields> {
    let lines: Vec<&str> = text.lines().collect();
    check_fields("metrics file", &lines, METRICS_SCHEMA, METRICS_FORMAT)
}

pub fn parse_curves(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVES_HEADER) {
        return Err(schema_err("curves", "missing header row"));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || schema_err("curves", format!("row {}: malformed", k + 1));
        if cols.len() != 5 {
            return Err(bad());
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad());
        let epoch: usize = cols[0].parse().map_err(|_| bad())?;
        if epoch != k {
            return Err(schema_err("curves", format!("row {}: epoch {epoch} out of sequence", k + 1)));
        }
        out.push(EpochRecord {
            epoch,
            train_loss: f(1)?,
            val_loss: f(2)?,
            train_metric: f(3)?,
            val_metric: f(4)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub fields: Fields,
    pub epochs: Vec<EpochRecord>,
}

pub fn parse_report(text: &str) -> Result<ParsedReport> {
    let (head, table) = text
        .split_once("\n\n[epochs]\n")
        .ok_or_else(|| schema_err("report", "missing [epochs] section"))?;
    let lines: Vec<&str> = head.lines().collect();
    let fields = check_fields("report", &lines, REPORT_SCHEMA, REPORT_FORMAT)?;
    let epochs = parse_curves(table)?;
    let run = fields.uint("epochs_run").expect("checked");
    if run != epochs.len() as u64 {
        return Err(schema_err("report", "epochs_run disagrees with the epoch table"));
    }
    if fields.uint("best_epoch").expect("checked") >= run.max(1) {
        return Err(schema_err("report", "best_epoch beyond the last epoch"));
    }
    Ok(ParsedReport { fields, epochs })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// One run of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub variant: String,
    pub seed: u64,
    pub outcome: std::result::Result<RunResult, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunResult {
    pub test_metric: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

pub const RUNS_HEADER: &str = "variant\tseed\tstatus\ttest_metric\tbest_epoch\tepochs_run\tmessage";
pub const SUMMARY_HEADER: &str = "variant\tmetric\truns\tfailed\tmean\tstd\tmean_pm_std";

pub fn render_runs(runs: &[RunRecord]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in runs {
        match &r.outcome {
            Ok(x) => out.push_str(&format!(
                "{}\t{}\tok\t{}\t{}\t{}\t\n",
                r.variant,
                r.seed,
                fmt_f64(x.test_metric),
                x.best_epoch,
                x.epochs_run
            )),
            Err(msg) => out.push_str(&format!(
                "{}\t{}\tfailed\t\t\t\t{}\n",
                r.variant,
                r.seed,
                msg.replace(['\t', '\n'], " ")
            )),
        }
    }
    out
}

/// One row per variant in first-appearance order, aggregating successful runs.
pub fn render_summary(metric: MetricKind, runs: &[RunRecord]) -> String {
    let mut order: Vec<&str> = Vec::new();
    for r in runs {
        if !order.contains(&r.variant.as_str()) {
            order.push(&r.variant);
        }
    }
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for v in order {
        let cell: Vec<&RunRecord> = runs.iter().filter(|r| r.variant == v).collect();
        let ok: Vec<f64> = cell
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|x| x.test_metric))
            .collect();
        let (mean, std) = mean_std(&ok);
        let pm = match metric {
            MetricKind::Accuracy | MetricKind::RocAuc => {
                format!("{:.1}±{:.1}%", 100.0 * mean, 100.0 * std)
            }
            MetricKind::Rmse => format!("{mean:.4}±{std:.4}"),
        };
        out.push_str(&format!(
            "{v}\t{}\t{}\t{}\t{}\t{}\t{pm}\n",
            metric.as_str(),
            ok.len(),
            cell.len() - ok.len(),
            fmt_f64(mean),
            fmt_f64(std)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use egnn_core::model::{init_params, Architecture};
    use egnn_core::train::TrainReport;

    fn outcome() -> TrainOutcome {
        let config = ModelConfig::citation();
        let arch: Architecture = config.architecture(TaskKind::NodeClassification, 3, 3, 2);
        TrainOutcome {
            report: TrainReport {
                task: TaskKind::NodeClassification,
                metric: MetricKind::Accuracy,
                epochs: (0..3)
                    .map(|e| EpochRecord {
                        epoch: e,
                        train_loss: 1.0 / (e as f64 + 1.0),
                        val_loss: 0.1 + 1e-17 * e as f64,
                        train_metric: 0.5,
                        val_metric: f64::NAN,
                    })
                    .collect(),
                best_epoch: 1,
                best_val_loss: 0.1,
                stopped_early: false,
                test_metric: 2.0 / 3.0,
                wall_clock_secs: Some(1.5),
            },
            model: init_params(&arch, 0).unwrap(),
        }
    }

    #[test]
    fn report_parses_and_round_trips_floats() {
        let o = outcome();
        let text = render_report(&o, &ModelConfig::citation(), 0xabc);
        let parsed = parse_report(&text).unwrap();
        assert_eq!(parsed.fields.f64("test_metric"), Some(2.0 / 3.0));
        assert_eq!(parsed.fields.get("variant"), Some("EGNN(A)"));
        assert_eq!(parsed.fields.get("dataset_fingerprint"), Some("0000000000000abc"));
        assert_eq!(parsed.epochs.len(), 3);
        assert_eq!(parsed.epochs[2].train_loss, 1.0 / 3.0);
        assert!(parsed.epochs[0].val_metric.is_nan());
        assert!(!text.contains("1.5"), "wall clock must stay out of the report");
    }

    #[test]
    fn schema_violations_are_caught() {
        let text = render_report(&outcome(), &ModelConfig::citation(), 1);
        assert!(parse_report(&text.replace("seed=0", "seed=-1")).is_err());
        assert!(parse_report(&text.replace("metric=accuracy", "metric=rmse")).is_err());
        assert!(parse_report(&text.replace("epochs_run=3", "epochs_run=4")).is_err());
        let m = render_metrics(
            TaskKind::GraphRegression,
            &SplitMetrics {
                train_loss: 1.0,
                val_loss: 2.0,
                test_loss: 3.0,
                train_metric: 0.1,
                val_metric: 0.2,
                test_metric: 0.3,
            },
            5,
            6,
        );
        let f = parse_metrics(&m).unwrap();
        assert_eq!(f.f64("test_metric"), Some(0.3));
        assert!(parse_metrics(&m.replace("test_loss", "tst_loss")).is_err());
        assert!(parse_metrics(&m.replace("=0000000000000005", "=5")).is_err());
        assert!(parse_metrics(&format!("{m}extra=1\n")).is_err());
    }

    #[test]
    fn summary_aggregates_successful_runs() {
        let run = |v: &str, seed, m: Option<f64>| RunRecord {
            variant: v.into(),
            seed,
            outcome: m
                .map(|test_metric| RunResult {
                    test_metric,
                    best_epoch: 0,
                    epochs_run: 1,
                })
                .ok_or_else(|| "boom\tbad".to_string()),
        };
        let runs = vec![
            run("EGNN(C)", 0, Some(0.8)),
            run("EGNN(C)", 1, Some(0.9)),
            run("EGNN(C)-M", 0, None),
            run("EGNN(C)-M", 1, Some(0.7)),
        ];
        let s = render_summary(MetricKind::Accuracy, &runs);
        let rows: Vec<Vec<&str>> = s.lines().skip(1).map(|l| l.split('\t').collect()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][0], "EGNN(C)");
        assert_eq!(rows[0][2], "2");
        let mean: f64 = rows[0][4].parse().unwrap();
        assert!((mean - 0.85).abs() < 1e-15);
        let std: f64 = rows[0][5].parse().unwrap();
        assert!((std - 0.1f64 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((rows[1][2], rows[1][3]), ("1", "1"));
        assert_eq!(rows[1][5], "0.0");
        let r = render_runs(&runs);
        assert!(r.lines().nth(3).unwrap().ends_with("boom bad"));
    }
}
