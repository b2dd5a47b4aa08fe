use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use report_kg::classifier::{count_parameters, GraphClassifier};
use report_kg::config::{generator_spec_from_text, generator_spec_to_text, set_generator_key, RunConfig};
use report_kg::corpus::{base_id, split_corpus, Corpus};
use report_kg::embedding::EmbeddingTable;
use report_kg::export::{export_graph, ExportFormat, ExportOptions};
use report_kg::extract::Report;
use report_kg::generator::{generate_corpus, GeneratorSpec};
use report_kg::graph::AblationConfig;
use report_kg::labels::LABEL_NAMES;
use report_kg::metrics::EvalReport;
use report_kg::ontology::Ontology;
use report_kg::pipeline::{Pipeline, Sample};
use report_kg::sample;
use report_kg::tensor::rng::stream;
use report_kg::tensor::Checkpoint;
use report_kg::trainer::{benchmark_inference, evaluate_samples, init_model, train_with, EpochRecord, TrainConfig};
use report_kg::vkd::{evaluate_image_only, train_vkd, Mode, SyntheticImager, VkdConfig, VkdSample};

use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "report-kg", version, about = "Ontology-grounded report graphs for multi-label classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic labelled corpus.
    Generate(GenerateArgs),
    /// Build the report graph of every report in a corpus.
    BuildGraph(BuildGraphArgs),
    /// Train a graph classifier.
    Train(TrainArgs),
    /// Score a trained classifier on a corpus.
    Evaluate(EvaluateArgs),
    /// Print label probabilities for a single report.
    Classify(ClassifyArgs),
    /// Train the image branch, with or without distillation from report graphs.
    Distill(DistillArgs),
    /// Measure inference throughput of model presets.
    Benchmark(BenchmarkArgs),
    /// Collect (parameter count, macro-AUC) rows from training runs.
    PlotData(PlotDataArgs),
    /// Render one report graph as DOT or JSON.
    ExportGraph(ExportGraphArgs),
}

#[derive(Args, Debug)]
pub struct Resources {
    /// Ontology TSV; defaults to the bundled chest radiograph ontology.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    /// Concept embedding file; defaults to the bundled table.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Threads used for forward and backward passes.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Generator spec file (`key = value` lines).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub n_reports: Option<usize>,
    /// Render every report in every language.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    /// Corpus file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub resources: Resources,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_global: bool,
    #[arg(long)]
    pub no_sentence: bool,
    #[arg(long)]
    pub no_concept_edges: bool,
    /// Leave global-node edges out of the DOT files.
    #[arg(long)]
    pub omit_global_edges: bool,
    #[arg(long, default_value_t = 1)]
    pub relation_hops: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub resources: Resources,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub resources: Resources,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Which part of the corpus to score: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Directory for `eval.txt` and `eval.tsv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub resources: Resources,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Report text.
    #[arg(long, conflicts_with = "report_file")]
    pub text: Option<String>,
    /// File holding the report text.
    #[arg(long)]
    pub report_file: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    pub lang: String,
}

#[derive(Args, Debug)]
pub struct DistillArgs {
    #[command(flatten)]
    pub resources: Resources,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    /// `image_only` trains the baseline; `vkd` trains both and compares them.
    #[arg(long, default_value = "vkd")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub resources: Resources,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated presets: small, large.
    #[arg(long, default_value = "small,large")]
    pub presets: String,
    /// Use only the first N reports.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotDataArgs {
    /// Output directories of `train` runs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportGraphArgs {
    #[command(flatten)]
    pub resources: Resources,
    /// Corpus holding the report; use with --id.
    #[arg(long, requires = "id")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
    /// Report text, as an alternative to --corpus/--id.
    #[arg(long, conflicts_with = "corpus")]
    pub text: Option<String>,
    #[arg(long, default_value = "en")]
    pub lang: String,
    #[arg(long, default_value = "dot")]
    pub format: String,
    #[arg(long)]
    pub omit_global_edges: bool,
    #[arg(long, default_value = "full")]
    pub ablation: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::Distill(a) => distill(a),
        Command::Benchmark(a) => benchmark(a),
        Command::PlotData(a) => plot_data(a),
        Command::ExportGraph(a) => export(a),
    }
}

fn load_ontology(path: Option<&Path>) -> Result<Ontology> {
    match path {
        None => Ok(sample::ontology()),
        Some(p) => Ontology::load(p).with_context(|| format!("loading ontology {}", p.display())),
    }
}

fn load_embeddings(path: Option<&Path>) -> Result<EmbeddingTable> {
    match path {
        None => Ok(sample::embeddings()),
        Some(p) => EmbeddingTable::load(p).with_context(|| format!("loading embeddings {}", p.display())),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn split_override(item: &str) -> Result<(&str, &str)> {
    item.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {item:?}")).into())
}

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    for item in &args.overrides {
        let (k, v) = split_override(item)?;
        cfg.set(k, v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    eprint!("effective configuration:\n{}", cfg.to_text());
    Ok(cfg)
}

fn epoch_records(records: &[EpochRecord]) -> (String, String) {
    let mut metrics = String::new();
    let mut timing = String::new();
    for r in records {
        let _ = writeln!(
            metrics,
            "epoch={}\ttrain_loss={}\tval_macro_auc={}",
            r.epoch, r.train_loss, r.val_macro_auc
        );
        let _ = writeln!(timing, "epoch={}\tseconds={:.3}", r.epoch, r.wall_time);
    }
    (metrics, timing)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let o = load_ontology(a.ontology.as_deref())?;
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            generator_spec_from_text(&text)?
        }
        None => GeneratorSpec::default(),
    };
    for item in &a.overrides {
        let (k, v) = split_override(item)?;
        set_generator_key(&mut spec, k, v)?;
    }
    if let Some(n) = a.n_reports {
        spec.n_reports = n;
    }
    if a.parallel {
        spec.parallel = true;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    eprint!("generator spec:\n{}", generator_spec_to_text(&spec));
    let corpus = generate_corpus(&o, &spec)?;
    corpus.save(&a.out)?;
    println!("wrote {} reports to {}", corpus.len(), a.out.display());
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn build_graph(a: BuildGraphArgs) -> Result<()> {
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let corpus = load_corpus(&a.corpus)?;
    let ablation = AblationConfig {
        use_global: !a.no_global,
        use_sentence: !a.no_sentence,
        use_concept_edges: !a.no_concept_edges,
        relation_hops: a.relation_hops,
    };
    let p = Pipeline::new(&o, &e, ablation);
    let opts = ExportOptions {
        omit_global_edges: a.omit_global_edges,
        ..ExportOptions::default()
    };
    create_dir(&a.out)?;
    let mut index = String::from("id\tnodes\tedges\n");
    for r in corpus.iter() {
        let g = p.graph(r)?;
        let stem = file_stem(&r.id);
        let lang_opts = ExportOptions {
            language: r.language.clone(),
            ..opts.clone()
        };
        write(&a.out.join(format!("{stem}.dot")), &export_graph(&g, &o, ExportFormat::Dot, &lang_opts))?;
        write(&a.out.join(format!("{stem}.json")), &export_graph(&g, &o, ExportFormat::Json, &lang_opts))?;
        let _ = writeln!(index, "{}\t{}\t{}", r.id, g.node_count(), g.edge_count());
    }
    write(&a.out.join("index.tsv"), &index)?;
    println!("wrote {} graphs to {}", corpus.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.config)?;
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let corpus = load_corpus(&a.corpus)?;
    let split = split_corpus(&corpus, cfg.split, cfg.seed)?;
    let p = Pipeline::new(&o, &e, cfg.ablation_config());
    let (tr, va, te) = (p.samples(&split.train)?, p.samples(&split.val)?, p.samples(&split.test)?);
    eprintln!("{} train, {} val, {} test reports", tr.len(), va.len(), te.len());
    create_dir(&a.out)?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;

    let tc = TrainConfig::from(&cfg);
    let outcome = train_with(&tc, &tr, &va, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val macro-AUC {:.4}  {:.1}s",
            r.epoch, r.train_loss, r.val_macro_auc, r.wall_time
        )
    })?;
    let (metrics, timing) = epoch_records(&outcome.records);
    write(&a.out.join("metrics.tsv"), &metrics)?;
    write(&a.out.join("timing.tsv"), &timing)?;

    let mut ckpt = outcome.model.to_checkpoint();
    record_data_meta(&mut ckpt, &cfg);
    ckpt.save(a.out.join("model.ckpt"))?;

    let report = evaluate_samples(&outcome.model, &te, cfg.threshold, cfg.workers)?;
    write(&a.out.join("eval.txt"), &report.to_table())?;
    write(&a.out.join("eval.tsv"), &report.to_records())?;
    let params = count_parameters(&outcome.model.gat, &outcome.model.mlp);
    write(
        &a.out.join("summary.tsv"),
        &format!(
            "param_count={params}\tn_layers={}\thidden={}\tbest_epoch={}\tval_macro_auc={}\ttest_macro_auc={}\n",
            cfg.n_layers, cfg.hidden, outcome.best_epoch, outcome.best_val_auc, report.macro_auc
        ),
    )?;
    print!("{}", report.to_table());
    println!("best epoch {} of {}", outcome.best_epoch, outcome.records.len());
    Ok(())
}

/// Stores what is needed to rebuild graphs and splits from a checkpoint alone.
fn record_data_meta(ckpt: &mut Checkpoint, cfg: &RunConfig) {
    ckpt.set_meta("ablation", &cfg.ablation);
    ckpt.set_meta("relation_hops", cfg.relation_hops);
    ckpt.set_meta("split", format!("{},{},{}", cfg.split[0], cfg.split[1], cfg.split[2]));
    ckpt.set_meta("seed", cfg.seed);
    ckpt.set_meta("threshold", cfg.threshold);
}

/// Run settings recovered from checkpoint metadata.
fn config_from_checkpoint(ckpt: &Checkpoint) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for key in ["ablation", "relation_hops", "split", "seed", "threshold"] {
        if let Some(v) = ckpt.meta(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = GraphClassifier::from_checkpoint(&ckpt)?;
    let mut cfg = config_from_checkpoint(&ckpt)?;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let corpus = load_corpus(&a.corpus)?;
    let part = match a.split.as_str() {
        "all" => corpus,
        name => {
            let s = split_corpus(&corpus, cfg.split, cfg.seed)?;
            match name {
                "train" => s.train,
                "val" => s.val,
                "test" => s.test,
                other => bail!(UsageError(format!("unknown split {other:?} (expected train, val, test or all)"))),
            }
        }
    };
    let samples = Pipeline::new(&o, &e, cfg.ablation_config()).samples(&part)?;
    let report = evaluate_samples(&model, &samples, cfg.threshold, a.workers)?;
    print!("{}", report.to_table());
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write(&dir.join("eval.txt"), &report.to_table())?;
        write(&dir.join("eval.tsv"), &report.to_records())?;
    }
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let text = match (&a.text, &a.report_file) {
        (Some(t), None) => t.clone(),
        (None, Some(p)) => fs::read_to_string(p).with_context(|| format!("reading report {}", p.display()))?,
        _ => bail!(UsageError("pass exactly one of --text and --report-file".into())),
    };
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = GraphClassifier::from_checkpoint(&ckpt)?;
    let cfg = config_from_checkpoint(&ckpt)?;
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let report = Report {
        id: "input".into(),
        language: a.lang,
        text,
        labels: None,
    };
    let g = Pipeline::new(&o, &e, cfg.ablation_config()).graph(&report)?;
    let pred = model.classify_report(&g, &mut stream(0, &[]), false)?;
    for (name, p) in LABEL_NAMES.iter().zip(&pred.probabilities) {
        println!("{name}\t{p:.6}");
    }
    Ok(())
}

fn vkd_samples(samples: Vec<Sample>, imager: &SyntheticImager) -> Vec<VkdSample> {
    samples
        .into_iter()
        .map(|s| VkdSample {
            image: imager.image(&s.labels, base_id(&s.id)),
            id: s.id,
            graph: s.graph,
            labels: s.labels,
        })
        .collect()
}

fn comparison_block(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = format!("{:<12}  {:>7}  {:>9}  {:>6}  {:>6}\n", "model", "AUC", "precision", "recall", "F1");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name:<12}  {:>7.4}  {:>9.4}  {:>6.4}  {:>6.4}",
            r.macro_auc, r.precision, r.recall, r.f1
        );
    }
    out
}

fn distill(a: DistillArgs) -> Result<()> {
    let mode: Mode = a.mode.parse().map_err(|e: report_kg::Error| UsageError(e.to_string()))?;
    let cfg = resolve_config(&a.config)?;
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let corpus = load_corpus(&a.corpus)?;
    let split = split_corpus(&corpus, cfg.split, cfg.seed)?;
    let p = Pipeline::new(&o, &e, cfg.ablation_config());
    let imager = SyntheticImager::new(cfg.image_dim, cfg.image_signal, cfg.image_noise, cfg.seed);
    let tr = vkd_samples(p.samples(&split.train)?, &imager);
    let va = vkd_samples(p.samples(&split.val)?, &imager);
    let te = vkd_samples(p.samples(&split.test)?, &imager);
    create_dir(&a.out)?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;

    let vc = VkdConfig::from(&cfg);
    let modes: &[(Mode, &str)] = match mode {
        Mode::ImageOnly => &[(Mode::ImageOnly, "image_only")],
        Mode::Distilled => &[(Mode::ImageOnly, "image_only"), (Mode::Distilled, "vkd")],
    };
    let mut reports = Vec::new();
    for &(m, name) in modes {
        eprintln!("training {name}");
        let outcome = train_vkd(&vc, m, &tr, &va)?;
        let (metrics, timing) = epoch_records(&outcome.records);
        write(&a.out.join(format!("metrics_{name}.tsv")), &metrics)?;
        write(&a.out.join(format!("timing_{name}.tsv")), &timing)?;
        let mut ckpt = outcome.model.to_checkpoint();
        record_data_meta(&mut ckpt, &cfg);
        ckpt.save(a.out.join(format!("{name}.ckpt")))?;
        let report = evaluate_image_only(&outcome.model, &te, cfg.n_samples, cfg.threshold)?;
        write(&a.out.join(format!("eval_{name}.tsv")), &report.to_records())?;
        reports.push((name, report));
    }
    let rows: Vec<(&str, &EvalReport)> = reports.iter().map(|(n, r)| (*n, r)).collect();
    let block = comparison_block(&rows);
    write(&a.out.join("comparison.txt"), &block)?;
    print!("{block}");
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let mut corpus = load_corpus(&a.corpus)?;
    if let Some(n) = a.limit {
        corpus = Corpus::new(corpus.iter().take(n).cloned().collect());
    }
    let p = Pipeline::new(&o, &e, AblationConfig::FULL);
    let mut out = String::from("preset\tparam_count\treports_per_second\n");
    for name in a.presets.split(',').map(str::trim) {
        let mut cfg = match name {
            "small" => RunConfig::small(),
            "large" => RunConfig::large(),
            other => bail!(UsageError(format!("unknown preset {other:?} (expected small or large)"))),
        };
        cfg.seed = a.seed;
        let model = init_model(&TrainConfig::from(&cfg), e.dim());
        let rate = benchmark_inference(&model, &p, &corpus, a.repetitions)?;
        let params = count_parameters(&model.gat, &model.mlp);
        let _ = writeln!(out, "{name}\t{params}\t{rate:.3}");
    }
    print!("{out}");
    if let Some(path) = &a.out {
        write(path, &out)?;
    }
    Ok(())
}

fn summary_field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split('\t').find_map(|f| f.strip_prefix(key)?.strip_prefix('='))
}

fn plot_data(a: PlotDataArgs) -> Result<()> {
    let mut rows = Vec::new();
    for dir in &a.runs {
        let path = dir.join("summary.tsv");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let line = text.lines().next().unwrap_or("");
        let params: u64 = summary_field(line, "param_count")
            .and_then(|v| v.parse().ok())
            .with_context(|| format!("{}: no param_count", path.display()))?;
        let auc: f64 = summary_field(line, "test_macro_auc")
            .and_then(|v| v.parse().ok())
            .with_context(|| format!("{}: no test_macro_auc", path.display()))?;
        rows.push((params, auc));
    }
    rows.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    println!("param_count\tmacro_auc");
    for (p, auc) in rows {
        println!("{p}\t{auc}");
    }
    Ok(())
}

fn export(a: ExportGraphArgs) -> Result<()> {
    let format: ExportFormat = a.format.parse().map_err(UsageError)?;
    let o = load_ontology(a.resources.ontology.as_deref())?;
    let e = load_embeddings(a.resources.embeddings.as_deref())?;
    let report = match (&a.corpus, &a.id, &a.text) {
        (Some(path), Some(id), None) => load_corpus(path)?
            .iter()
            .find(|r| &r.id == id)
            .cloned()
            .with_context(|| format!("no report {id:?} in {}", path.display()))?,
        (None, None, Some(text)) => Report {
            id: "input".into(),
            language: a.lang.clone(),
            text: text.clone(),
            labels: None,
        },
        _ => bail!(UsageError("pass either --corpus with --id, or --text".into())),
    };
    let mut ablation = report_kg::config::ablation_by_name(&a.ablation).map_err(|e| UsageError(e.to_string()))?;
    ablation.relation_hops = 1;
    let g = Pipeline::new(&o, &e, ablation).graph(&report)?;
    let opts = ExportOptions {
        omit_global_edges: a.omit_global_edges,
        language: report.language.clone(),
    };
    let text = export_graph(&g, &o, format, &opts);
    match &a.out {
        Some(path) => write(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
