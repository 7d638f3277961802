//! The `egnn` command line.
//!
//! ```text
//! egnn preprocess (--content F --cites F | --graphs F) --out BUNDLE
//! egnn train --bundle BUNDLE --out DIR [--repeat N]
//! egnn eval --model MODEL --bundle BUNDLE [--out METRICS]
//! egnn ablate --bundle BUNDLE --out DIR [--variants ... | --grid-* ...]
//! ```
//!
//! `train` writes `report.txt`, `curves.tsv` and `model.bin` into its output
//! directory, or one `seed-<s>/` directory per run plus `runs.tsv` and
//! `summary.tsv` when `--repeat` exceeds 1. Run `k` uses seed `seed + k` on
//! the bundle's split. `ablate` writes `runs.tsv`, `summary.tsv` and
//! `cells/<variant>/seed-<s>/{report.txt,curves.tsv}`. File formats are
//! described in [`crate::report`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use egnn_core::data::{EdgeEncoding, SplitFractions, TaskKind};
use egnn_core::layers::LayerKind;
use egnn_core::model::ModelState;
use egnn_core::train::{
    evaluate_graph_model, evaluate_node_model, train_graph_model, train_node_model, MetricKind, ModelConfig,
    TrainOutcome,
};
use egnn_core::NormScheme;

use crate::bundle::{Bundle, BundleData};
use crate::citation::{load_citation, CitesOrder};
use crate::error::{Error, Result};
use crate::model_file::{load_model, save_model};
use crate::molecular::{parse_graph_records, records_to_graphs};
use crate::report::{
    fmt_hex, render_curves, render_metrics, render_report, render_runs, render_summary, RunRecord, RunResult,
    SplitMetrics,
};
use crate::variant::{parse_labelled, Variant, TABLE_VARIANTS};

#[derive(Debug, Parser)]
#[command(name = "egnn", version, about = "Graph neural networks with multi-dimensional edge features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, encode, normalize and split a dataset into a bundle
    Preprocess(PreprocessArgs),
    /// Train on a bundle and write reports and models
    Train(TrainArgs),
    /// Recompute metrics of a saved model on its bundle
    Eval(EvalArgs),
    /// Train a set of variants and tabulate their test metrics
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Attn,
    Conv,
}

impl From<LayerArg> for LayerKind {
    fn from(v: LayerArg) -> Self {
        match v {
            LayerArg::Attn => LayerKind::Attention,
            LayerArg::Conv => LayerKind::Convolution,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Row,
    Sym,
    Ds,
}

impl From<NormArg> for NormScheme {
    fn from(v: NormArg) -> Self {
        match v {
            NormArg::Row => NormScheme::Row,
            NormArg::Sym => NormScheme::Sym,
            NormArg::Ds => NormScheme::Ds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Directed,
    Undirected,
}

impl From<EncodingArg> for EdgeEncoding {
    fn from(v: EncodingArg) -> Self {
        match v {
            EncodingArg::Directed => EdgeEncoding::Directed,
            EncodingArg::Undirected => EdgeEncoding::Undirected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    /// 5% train, 15% validation, 80% test
    Sparse,
    /// 60% train, 20% validation, 20% test
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CitesOrderArg {
    CitedFirst,
    CitingFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["content", "graphs"])))]
pub struct PreprocessArgs {
    /// Citation content file: `<id> <features...> <label>` per line
    #[arg(long, requires = "cites")]
    pub content: Option<PathBuf>,
    /// Citation cites file: two node ids per line
    #[arg(long, requires = "content")]
    pub cites: Option<PathBuf>,
    /// Molecular graphs as JSON lines or a JSON array
    #[arg(long, conflicts_with_all = ["content", "cites"])]
    pub graphs: Option<PathBuf>,
    /// Citation edge encoding: three directed channels or one undirected
    #[arg(long, value_enum, default_value_t = EncodingArg::Directed, conflicts_with = "graphs")]
    pub edge_encoding: EncodingArg,
    /// Edge normalization applied after inserting self-loops
    #[arg(long, value_enum, default_value_t = NormArg::Ds)]
    pub norm: NormArg,
    /// Citation split fractions (molecular sets use 80/10/10)
    #[arg(long, value_enum, default_value_t = SplitArg::Sparse, conflicts_with = "graphs")]
    pub split: SplitArg,
    /// Seed of the random split
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Meaning of a cites line `A B`: cited-first reads it as B cites A
    #[arg(long, value_enum, default_value_t = CitesOrderArg::CitedFirst, conflicts_with = "graphs")]
    pub cites_order: CitesOrderArg,
    /// Bundle file to write
    #[arg(long)]
    pub out: PathBuf,
}

/// Hyperparameters shared by `train` and `ablate`. Unset values follow the
/// bundle's task: citation defaults for node tasks, molecular otherwise.
#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    /// Base seed for initialization and dropout
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adam learning rate [default: 0.005 citation, 0.0005 molecular]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Dropout rate on inputs and attention [default: 0.6 citation, 0 molecular]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// L2 weight decay [default: 0.0005 citation, 0.0001 molecular]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Output dimension of each hidden layer [default: 64 citation, 16 molecular]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Early-stopping window in epochs [default: 100 citation, 200 molecular]
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of EGNN layers
    #[arg(long, default_value_t = 2)]
    pub num_layers: usize,
    /// Upper bound on training epochs
    #[arg(long, default_value_t = 2000)]
    pub max_epochs: usize,
    /// Graphs per minibatch for molecular tasks
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

impl HyperArgs {
    pub fn config(&self, task: TaskKind) -> ModelConfig {
        let mut c = if task == TaskKind::NodeClassification {
            ModelConfig::citation()
        } else {
            ModelConfig::molecular()
        };
        c.seed = self.seed;
        c.learning_rate = self.lr.unwrap_or(c.learning_rate);
        c.dropout_rate = self.dropout.unwrap_or(c.dropout_rate);
        c.weight_decay = self.weight_decay.unwrap_or(c.weight_decay);
        c.hidden_dim = self.hidden.unwrap_or(c.hidden_dim);
        c.early_stop_window = self.window.unwrap_or(c.early_stop_window);
        c.layers = self.num_layers;
        c.max_epochs = self.max_epochs;
        c.batch_size = self.batch_size;
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Bundle written by `egnn preprocess`
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Layer type: attention EGNN(A) or convolution EGNN(C)
    #[arg(long, value_enum, default_value_t = LayerArg::Attn)]
    pub layer: LayerArg,
    /// Edge normalization [default: the bundle's]
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Citation edge encoding [default: the bundle's]
    #[arg(long, value_enum)]
    pub edge_encoding: Option<EncodingArg>,
    /// Feed every layer the input edges instead of the previous attention
    #[arg(long)]
    pub no_adaptive_edges: bool,
    /// Weight the loss by inverse training-class frequency
    #[arg(long)]
    pub weighted_loss: bool,
    /// Number of runs, with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model written by `egnn train`
    #[arg(long)]
    pub model: PathBuf,
    /// The bundle the model was trained on
    #[arg(long)]
    pub bundle: PathBuf,
    /// Metrics file to write (also printed)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Bundle written by `egnn preprocess`
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated variant names such as EGNN(A)-A-D-M* [default: every row of the citation results table]
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["grid_layer", "grid_norm", "grid_edge_encoding", "grid_adaptive", "grid_weighted"])]
    pub variants: Option<Vec<String>>,
    /// Grid axis: layer types [default: attn]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub grid_layer: Option<Vec<LayerArg>>,
    /// Grid axis: normalizations [default: ds]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub grid_norm: Option<Vec<NormArg>>,
    /// Grid axis: edge encodings [default: directed]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub grid_edge_encoding: Option<Vec<EncodingArg>>,
    /// Grid axis: edge adaptiveness [default: on]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub grid_adaptive: Option<Vec<Switch>>,
    /// Grid axis: weighted loss [default: off]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub grid_weighted: Option<Vec<Switch>>,
    /// Runs per cell, with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 20)]
    pub repeat: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::parse_from(args))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let norm: NormScheme = a.norm.into();
    let bundle = if let Some(path) = &a.graphs {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let records = parse_graph_records(&text, &name)?;
        let (task, raw) = records_to_graphs(&records, &name)?;
        Bundle::from_graphs(task, raw, norm, a.seed)?
    } else {
        let (content, cites) = match (&a.content, &a.cites) {
            (Some(c), Some(e)) => (c, e),
            _ => return Err(Error::Usage("--content and --cites go together".into())),
        };
        let order = match a.cites_order {
            CitesOrderArg::CitedFirst => CitesOrder::CitedFirst,
            CitesOrderArg::CitingFirst => CitesOrder::CitingFirst,
        };
        let graph = load_citation(content, cites, order)?;
        if graph.dropped_edges > 0 {
            eprintln!("warning: dropped {} cites lines naming unknown ids", graph.dropped_edges);
        }
        let fractions = match a.split {
            SplitArg::Sparse => SplitFractions::SPARSE,
            SplitArg::Dense => SplitFractions::DENSE,
        };
        Bundle::from_citation(&graph, a.edge_encoding.into(), norm, fractions, a.seed)?
    };
    bundle.write(&a.out)?;
    println!("{}", describe(&bundle));
    println!("wrote {}", a.out.display());
    Ok(())
}

fn describe(b: &Bundle) -> String {
    match &b.data {
        BundleData::Node {
            features,
            class_count,
            edges,
            e0,
            masks,
            ..
        } => {
            let (tr, va, te) = masks.counts();
            format!(
                "{}: {} nodes, {} features, {} classes, {} edges, P={}, split {tr}/{va}/{te}, fingerprint {}",
                TaskKind::NodeClassification.as_str(),
                features.rows(),
                features.cols(),
                class_count,
                edges.len(),
                e0.channel_count(),
                fmt_hex(b.fingerprint())
            )
        }
        BundleData::Graph { graphs, e0, masks } => {
            let (tr, va, te) = masks.counts();
            format!(
                "{}: {} graphs, P={}, split {tr}/{va}/{te}, fingerprint {}",
                b.task().as_str(),
                graphs.len(),
                e0.first().map_or(0, |e| e.channel_count()),
                fmt_hex(b.fingerprint())
            )
        }
    }
}

/// The bundle's data under one normalization and encoding.
pub enum TaskData {
    Node(egnn_core::data::GraphDataset),
    Graph(egnn_core::data::GraphBatch),
}

impl TaskData {
    pub fn build(bundle: &Bundle, norm: NormScheme, encoding: EdgeEncoding) -> Result<Self> {
        Ok(match bundle.task() {
            TaskKind::NodeClassification => TaskData::Node(bundle.node_dataset(norm, encoding)?),
            _ => TaskData::Graph(bundle.graph_batch(norm)?),
        })
    }

    pub fn train(&self, config: &ModelConfig) -> Result<TrainOutcome> {
        Ok(match self {
            TaskData::Node(d) => train_node_model(d, config)?,
            TaskData::Graph(b) => train_graph_model(b, config)?,
        })
    }

    pub fn evaluate(&self, model: &ModelState) -> Result<SplitMetrics> {
        Ok(match self {
            TaskData::Node(d) => evaluate_node_model(model, d, None)?.into(),
            TaskData::Graph(b) => evaluate_graph_model(model, b)?.into(),
        })
    }
}

/// Rejects settings that do not apply to the bundle's task.
fn check_config(bundle: &Bundle, config: &ModelConfig, encoding_given: bool) -> Result<()> {
    config.validate()?;
    if bundle.task() != TaskKind::NodeClassification {
        if config.weighted_loss {
            return Err(Error::Usage("weighted loss applies to node classification only".into()));
        }
        if encoding_given {
            return Err(Error::Usage("edge encoding applies to citation bundles only".into()));
        }
    }
    Ok(())
}

/// Files of one finished run.
struct RunFiles {
    report: String,
    curves: String,
}

fn train_once(data: &TaskData, config: &ModelConfig, fingerprint: u64) -> Result<(TrainOutcome, RunFiles, f64)> {
    let start = Instant::now();
    let mut outcome = data.train(config)?;
    let secs = start.elapsed().as_secs_f64();
    outcome.report.wall_clock_secs = Some(secs);
    outcome.model.dataset_fingerprint = fingerprint;
    let files = RunFiles {
        report: render_report(&outcome, config, fingerprint),
        curves: render_curves(&outcome.report.epochs),
    };
    Ok((outcome, files, secs))
}

fn print_run(label: &str, config: &ModelConfig, outcome: &TrainOutcome, secs: f64) {
    let r = &outcome.report;
    println!(
        "{label} seed {}: test {} = {} (best epoch {}, {} epochs, {secs:.2}s)",
        config.seed,
        r.metric.as_str(),
        r.test_metric,
        r.best_epoch,
        r.epochs_run()
    );
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    if a.repeat == 0 {
        return Err(Error::Usage("--repeat must be at least 1".into()));
    }
    let bundle = Bundle::read(&a.bundle)?;
    let fingerprint = bundle.fingerprint();
    let mut config = a.hyper.config(bundle.task());
    config.layer_kind = a.layer.into();
    config.normalization = a.norm.map_or(bundle.meta.norm, Into::into);
    config.edge_encoding = a
        .edge_encoding
        .map(Into::into)
        .or(bundle.meta.encoding)
        .unwrap_or(EdgeEncoding::Directed);
    config.edge_adaptive = !a.no_adaptive_edges;
    config.weighted_loss = a.weighted_loss;
    check_config(&bundle, &config, a.edge_encoding.is_some())?;
    let data = TaskData::build(&bundle, config.normalization, config.edge_encoding)?;
    create_dir(&a.out)?;
    let label = Variant::of(&config).name();

    if a.repeat == 1 {
        let (outcome, files, secs) = train_once(&data, &config, fingerprint)?;
        write_file(&a.out.join("report.txt"), &files.report)?;
        write_file(&a.out.join("curves.tsv"), &files.curves)?;
        save_model(&outcome.model, &a.out.join("model.bin"))?;
        print_run(&label, &config, &outcome, secs);
        return Ok(());
    }

    let mut runs = Vec::with_capacity(a.repeat);
    for k in 0..a.repeat {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(k as u64);
        let (outcome, files, secs) = train_once(&data, &c, fingerprint)?;
        let dir = a.out.join(format!("seed-{}", c.seed));
        create_dir(&dir)?;
        write_file(&dir.join("report.txt"), &files.report)?;
        write_file(&dir.join("curves.tsv"), &files.curves)?;
        save_model(&outcome.model, &dir.join("model.bin"))?;
        print_run(&label, &c, &outcome, secs);
        runs.push(RunRecord {
            variant: label.clone(),
            seed: c.seed,
            outcome: Ok(result_of(&outcome)),
        });
    }
    let metric = MetricKind::for_task(bundle.task());
    let summary = render_summary(metric, &runs);
    write_file(&a.out.join("runs.tsv"), &render_runs(&runs))?;
    write_file(&a.out.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn result_of(outcome: &TrainOutcome) -> RunResult {
    RunResult {
        test_metric: outcome.report.test_metric,
        best_epoch: outcome.report.best_epoch,
        epochs_run: outcome.report.epochs_run(),
    }
}

/// The encoding a node model was trained with, read off its channel count.
fn model_encoding(model: &ModelState) -> Result<EdgeEncoding> {
    [EdgeEncoding::Directed, EdgeEncoding::Undirected]
        .into_iter()
        .find(|e| e.channel_count() == model.arch.channels)
        .ok_or_else(|| Error::Usage(format!("model has {} edge channels", model.arch.channels)))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let bundle = Bundle::read(&a.bundle)?;
    let fingerprint = bundle.fingerprint();
    if model.dataset_fingerprint != fingerprint {
        return Err(Error::Fingerprint {
            what: "dataset bundle",
            expected: model.dataset_fingerprint,
            found: fingerprint,
        });
    }
    if model.arch.task != bundle.task() {
        return Err(Error::Usage(format!(
            "model task {} differs from bundle task {}",
            model.arch.task.as_str(),
            bundle.task().as_str()
        )));
    }
    let encoding = match bundle.task() {
        TaskKind::NodeClassification => model_encoding(&model)?,
        _ => EdgeEncoding::Directed,
    };
    let data = TaskData::build(&bundle, model.arch.attention_norm, encoding)?;
    let metrics = data.evaluate(&model)?;
    let text = render_metrics(bundle.task(), &metrics, fingerprint, model.fingerprint());
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn on(s: Switch) -> bool {
    s == Switch::On
}

/// Requested cells as (label, variant), duplicates removed.
pub fn ablation_cells(a: &AblateArgs) -> Result<Vec<(String, Variant)>> {
    let grid_given = a.grid_layer.is_some()
        || a.grid_norm.is_some()
        || a.grid_edge_encoding.is_some()
        || a.grid_adaptive.is_some()
        || a.grid_weighted.is_some();
    let mut cells: Vec<(String, Variant)> = Vec::new();
    let mut push = |cell: (String, Variant)| {
        if !cells.iter().any(|(l, _)| *l == cell.0) {
            cells.push(cell);
        }
    };
    if let Some(names) = &a.variants {
        for n in names {
            push(parse_labelled(n)?);
        }
    } else if grid_given {
        let layers = a.grid_layer.clone().unwrap_or(vec![LayerArg::Attn]);
        let norms = a.grid_norm.clone().unwrap_or(vec![NormArg::Ds]);
        let encs = a.grid_edge_encoding.clone().unwrap_or(vec![EncodingArg::Directed]);
        let adapt = a.grid_adaptive.clone().unwrap_or(vec![Switch::On]);
        let weighted = a.grid_weighted.clone().unwrap_or(vec![Switch::Off]);
        for &l in &layers {
            for &n in &norms {
                for &e in &encs {
                    for &ad in &adapt {
                        for &w in &weighted {
                            let v = Variant {
                                layer_kind: l.into(),
                                normalization: n.into(),
                                edge_encoding: e.into(),
                                edge_adaptive: on(ad) || l == LayerArg::Conv,
                                weighted_loss: on(w),
                            };
                            push((v.name(), v));
                        }
                    }
                }
            }
        }
    } else {
        for n in TABLE_VARIANTS {
            push(parse_labelled(n)?);
        }
    }
    if cells.is_empty() {
        return Err(Error::Usage("no variants requested".into()));
    }
    Ok(cells)
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    if a.repeat == 0 {
        return Err(Error::Usage("--repeat must be at least 1".into()));
    }
    let bundle = Bundle::read(&a.bundle)?;
    let fingerprint = bundle.fingerprint();
    let cells = ablation_cells(a)?;
    create_dir(&a.out)?;
    let base = a.hyper.config(bundle.task());
    let mut runs = Vec::new();
    for (label, variant) in &cells {
        let mut config = base.clone();
        variant.apply(&mut config);
        let prepared = check_config(&bundle, &config, variant.edge_encoding != EdgeEncoding::Directed)
            .and_then(|_| TaskData::build(&bundle, config.normalization, config.edge_encoding));
        for k in 0..a.repeat {
            let mut c = config.clone();
            c.seed = base.seed.wrapping_add(k as u64);
            let result = match &prepared {
                Ok(data) => train_once(data, &c, fingerprint).and_then(|(outcome, files, secs)| {
                    let dir = a.out.join("cells").join(variant.slug()).join(format!("seed-{}", c.seed));
                    create_dir(&dir)?;
                    write_file(&dir.join("report.txt"), &files.report)?;
                    write_file(&dir.join("curves.tsv"), &files.curves)?;
                    print_run(label, &c, &outcome, secs);
                    Ok(result_of(&outcome))
                }),
                Err(e) => Err(Error::Usage(e.to_string())),
            };
            if let Err(e) = &result {
                eprintln!("{label} seed {}: failed: {e}", c.seed);
            }
            runs.push(RunRecord {
                variant: label.clone(),
                seed: c.seed,
                outcome: result.map_err(|e| e.to_string()),
            });
        }
    }
    let summary = render_summary(MetricKind::for_task(bundle.task()), &runs);
    write_file(&a.out.join("runs.tsv"), &render_runs(&runs))?;
    write_file(&a.out.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}
