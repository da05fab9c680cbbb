//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 I/O
//! error. Diagnostics go to stderr; data goes only to the files named by
//! flags.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pudroid::classifier::{FeaturesPerSplit, ForestParams, Learner, LinearParams, TrainConfig, TreeParams};
use pudroid::eval::{
    generate_synthetic, pca_project, protocol_rq1, protocol_rq2, protocol_rq3, protocol_rq4, write_report, Corpus,
    ExperimentConfig, SyntheticSpec,
};
use pudroid::ingest::{
    build_dataset, dataset_from_json, dataset_to_json_with_config, DatasetManifest, Group, IpResolverMap, ManifestRow,
};
use pudroid::pu::{clean_and_retrain, ContaminantMode, PuConfig, RescaleConfig};
use pudroid::select::{compute_thresholds, count_occurrences, project_dataset, select_features, threshold_rule};
use pudroid::feature::PuDataset;
use pudroid::Error;

pub const SEED_ENV: &str = "PUDROID_SEED";

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pudroid", version, about = "Find and remove mislabeled apps in malware datasets")]
struct Cli {
    /// Worker threads for parallel stages; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Vectorize the apps listed in a manifest into a dataset file.
    Ingest(IngestArgs),
    /// Drop features that occur too rarely in both groups.
    SelectFeatures(SelectArgs),
    /// Detect contaminants in the unlabeled group and retrain.
    Clean(CleanArgs),
    /// Run a contamination experiment on labeled data.
    Experiment(ExperimentArgs),
    /// Project a dataset onto its first two principal components.
    Pca(PcaArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Manifest CSV with columns app_id,path,group.
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    manifest: Option<PathBuf>,

    /// Host to IP map (two-column TSV) for resolving URL features.
    #[arg(long, requires = "manifest")]
    ipmap: Option<PathBuf>,

    /// Dataset JSON written by `ingest` or `select-features`.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    ipmap: Option<PathBuf>,
    /// Output dataset JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Base occurrence threshold for the labeled group.
    #[arg(long, default_value_t = pudroid::select::DEFAULT_ETA)]
    eta: f64,
    /// Use this labeled-group threshold instead of the derived one.
    #[arg(long)]
    tm_override: Option<usize>,
    /// Use this unlabeled-group threshold instead of the derived one.
    #[arg(long)]
    tb_override: Option<usize>,
    /// Output dataset JSON restricted to the kept features.
    #[arg(long)]
    out: PathBuf,
    /// Also write the kept feature names, one per line.
    #[arg(long)]
    feature_list: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value = "forest")]
    learner: Learner,
    #[arg(long, default_value_t = LinearParams::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = LinearParams::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = LinearParams::default().l2)]
    l2: f64,
    #[arg(long, default_value_t = TreeParams::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = TreeParams::default().min_leaf)]
    min_leaf: usize,
    #[arg(long, default_value_t = ForestParams::default().n_trees)]
    n_trees: usize,
    /// `sqrt` or a count.
    #[arg(long, default_value = "sqrt")]
    features_per_split: FeaturesPerSplit,
    /// Grow forest trees on the full training set instead of bootstrap samples.
    #[arg(long)]
    no_bootstrap: bool,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            learner: self.learner,
            linear: LinearParams { learning_rate: self.learning_rate, epochs: self.epochs, l2: self.l2 },
            tree: TreeParams { max_depth: self.max_depth, min_leaf: self.min_leaf },
            forest: ForestParams {
                n_trees: self.n_trees,
                features_per_split: self.features_per_split,
                bootstrap: !self.no_bootstrap,
            },
        }
    }
}

#[derive(Debug, Args)]
struct PuArgs {
    /// Fraction of all samples held out to estimate the label frequency.
    #[arg(long, default_value_t = PuConfig::default().split_fraction)]
    split_fraction: f64,
    /// Rescale scores when their mean over held-out labeled apps is below this.
    #[arg(long, default_value_t = RescaleConfig::default().trigger)]
    rescale_trigger: f64,
    /// Mean score the rescaling aims for.
    #[arg(long, default_value_t = RescaleConfig::default().target)]
    rescale_target: f64,
    /// Drop detected contaminants instead of moving them to the labeled group.
    #[arg(long)]
    discard: bool,
}

impl PuArgs {
    fn config(&self, train: TrainConfig) -> PuConfig {
        PuConfig {
            train,
            split_fraction: self.split_fraction,
            rescale: RescaleConfig { trigger: self.rescale_trigger, target: self.rescale_target },
            mode: if self.discard { ContaminantMode::Discard } else { ContaminantMode::Relabel },
        }
    }
}

#[derive(Debug, Args)]
struct CleanArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    pu: PuArgs,
    /// Falls back to the PUDROID_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Result JSON: contaminant ids, diagnostics, configuration.
    #[arg(long)]
    out: PathBuf,
    /// Write the cleaned groups as a manifest (requires --manifest input).
    #[arg(long)]
    cleaned_manifest: Option<PathBuf>,
    /// Write the cleaned dataset JSON.
    #[arg(long)]
    cleaned_dataset: Option<PathBuf>,
    /// Write the final classifier.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Rq1,
    Rq2,
    Rq3,
    Rq4,
}

#[derive(Debug, Args)]
struct GeneratorArgs {
    /// Generator settings as `key = value` lines; flags below override them.
    #[arg(long, conflicts_with = "dataset")]
    spec: Option<PathBuf>,
    /// Labeled dataset JSON (every sample with ground truth) instead of generated data.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    n_positive: Option<usize>,
    #[arg(long)]
    n_negative: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    signal_features: Option<usize>,
    #[arg(long)]
    flip_noise: Option<f64>,
    #[arg(long)]
    label_frequency: Option<f64>,
    #[arg(long)]
    n_families: Option<usize>,
    /// Generator seed; defaults to --seed.
    #[arg(long)]
    generator_seed: Option<u64>,
}

impl GeneratorArgs {
    fn spec(&self, seed: u64) -> pudroid::Result<SyntheticSpec> {
        let mut spec = match &self.spec {
            Some(path) => SyntheticSpec::from_path(path)?,
            None => SyntheticSpec { seed, ..SyntheticSpec::default() },
        };
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut spec.n_positive, self.n_positive);
        set(&mut spec.n_negative, self.n_negative);
        set(&mut spec.dimension, self.dimension);
        set(&mut spec.signal_features, self.signal_features);
        set(&mut spec.n_families, self.n_families);
        if let Some(v) = self.flip_noise {
            spec.flip_noise = v;
        }
        if let Some(v) = self.label_frequency {
            spec.label_frequency_c = v;
        }
        if let Some(v) = self.generator_seed {
            spec.seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// RQ2 contamination ratios.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    ratios: Vec<f64>,
    /// RQ4 benign-to-malware ratio in the malicious group.
    #[arg(long, default_value_t = 8.0)]
    ratio: f64,
    /// RQ1 malware moved per iteration.
    #[arg(long, default_value_t = 100)]
    step: usize,
    /// RQ1 iterations after the clean condition.
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// RQ3 family to hold out; all families when omitted.
    #[arg(long)]
    holdout_family: Option<usize>,
    /// Learners to run, comma separated; each protocol has its own default set.
    #[arg(long, value_delimiter = ',')]
    learners: Option<Vec<Learner>>,
    /// Fraction of each class held out for testing.
    #[arg(long, default_value_t = ExperimentConfig::default().test_fraction)]
    test_fraction: f64,
    /// RQ4 share of training benign apps moved into the malicious group.
    #[arg(long, default_value_t = ExperimentConfig::default().reverse_share)]
    reverse_share: f64,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    pu: PuArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PcaArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output CSV with columns id,x,y,group.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let outcome = configure_threads(cli.threads).and_then(|()| dispatch(cli.command));
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_io() { EXIT_IO } else { EXIT_DATA }
        }
    }
}

fn configure_threads(threads: Option<usize>) -> CliResult {
    match threads {
        None => Ok(()),
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}"))),
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::SelectFeatures(args) => select(args),
        Command::Clean(args) => clean(args),
        Command::Experiment(args) => experiment(args),
        Command::Pca(args) => pca(args),
    }
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(value) => value
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{value}`"))),
        Err(_) => Ok(0),
    }
}

fn write(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::Run(Error::io(path, e)))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Run(Error::io(path, e)))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn load_ipmap(path: Option<&Path>) -> CliResult<IpResolverMap> {
    Ok(match path {
        Some(p) => IpResolverMap::from_path(p)?,
        None => IpResolverMap::new(),
    })
}

struct Loaded {
    dataset: PuDataset,
    manifest: Option<DatasetManifest>,
    description: Value,
}

fn load_input(input: &InputArgs) -> CliResult<Loaded> {
    if let Some(path) = &input.dataset {
        return Ok(Loaded {
            dataset: dataset_from_json(&read(path)?)?,
            manifest: None,
            description: json!({ "dataset": display(path) }),
        });
    }
    let path = input.manifest.as_ref().ok_or_else(|| Failure::Usage("one of --manifest or --dataset is required".into()))?;
    let manifest = DatasetManifest::from_path(path)?;
    let dataset = build_dataset(&manifest, &load_ipmap(input.ipmap.as_deref())?)?;
    Ok(Loaded {
        dataset,
        manifest: Some(manifest),
        description: json!({
            "manifest": display(path),
            "ipmap": input.ipmap.as_deref().map(display),
        }),
    })
}

fn ingest(args: IngestArgs) -> CliResult {
    let manifest = DatasetManifest::from_path(&args.manifest)?;
    let ds = build_dataset(&manifest, &load_ipmap(args.ipmap.as_deref())?)?;
    let config = json!({
        "command": "ingest",
        "manifest": display(&args.manifest),
        "ipmap": args.ipmap.as_deref().map(display),
    });
    write(&args.out, &dataset_to_json_with_config(&ds, &config)?)?;
    eprintln!(
        "ingest: {} labeled, {} unlabeled, {} features",
        ds.positives().len(),
        ds.unlabeled().len(),
        ds.dimension()
    );
    Ok(())
}

fn select(args: SelectArgs) -> CliResult {
    let loaded = load_input(&args.input)?;
    let ds = &loaded.dataset;
    let mut th = compute_thresholds(ds, args.eta)?;
    if let Some(tm) = args.tm_override {
        th.tm = tm;
    }
    if let Some(tb) = args.tb_override {
        th.tb = tb;
    }
    let counts = count_occurrences(ds);
    let kept = select_features(&counts, &th);
    let projected = project_dataset(ds, &kept)?;
    let config = json!({
        "command": "select-features",
        "input": loaded.description,
        "eta": args.eta,
        "tm": th.tm,
        "tb": th.tb,
        "tm_override": args.tm_override,
        "tb_override": args.tb_override,
        "threshold_rule": threshold_rule(),
        "features_before": ds.dimension(),
        "features_after": projected.dimension(),
    });
    write(&args.out, &dataset_to_json_with_config(&projected, &config)?)?;
    if let Some(path) = &args.feature_list {
        let names: String = projected.space().features().iter().map(|f| format!("{}\n", f.name)).collect();
        write(path, &names)?;
    }
    eprintln!(
        "select-features: kept {} of {} features (tm = {}, tb = {})",
        projected.dimension(),
        ds.dimension(),
        th.tm,
        th.tb
    );
    Ok(())
}

fn clean(args: CleanArgs) -> CliResult {
    let seed = resolve_seed(args.seed)?;
    let cfg = args.pu.config(args.train.config(seed));
    if args.cleaned_manifest.is_some() && args.input.manifest.is_none() {
        return Err(Failure::Usage("--cleaned-manifest needs --manifest input".into()));
    }
    let loaded = load_input(&args.input)?;
    let result = clean_and_retrain(&loaded.dataset, &cfg, seed)?;
    write(&args.out, &result.to_json(&cfg, seed, &loaded.description)?)?;

    if let (Some(path), Some(manifest)) = (&args.cleaned_manifest, &loaded.manifest) {
        write(path, &cleaned_manifest(manifest, &result.cleaned)?.to_csv()?)?;
    }
    if let Some(path) = &args.cleaned_dataset {
        let config = json!({
            "command": "clean",
            "input": loaded.description,
            "config": cfg,
            "seed": seed,
        });
        write(path, &dataset_to_json_with_config(&result.cleaned, &config)?)?;
    }
    if let Some(path) = &args.model_out {
        write(path, &result.final_model.to_json()?)?;
    }
    eprintln!(
        "clean: {} contaminants flagged among {} unlabeled (e = {:.4}, rescale = {:.4})",
        result.contaminant_ids.len(),
        loaded.dataset.unlabeled().len(),
        result.diagnostics.e,
        result.diagnostics.rescale
    );
    Ok(())
}

/// The original manifest rows with groups taken from `cleaned`; rows whose
/// app was discarded are dropped. Paths are made absolute so the manifest
/// can live anywhere.
fn cleaned_manifest(original: &DatasetManifest, cleaned: &PuDataset) -> pudroid::Result<DatasetManifest> {
    let positives: BTreeSet<&str> = cleaned.positives().iter().map(|s| s.id.as_str()).collect();
    let unlabeled: BTreeSet<&str> = cleaned.unlabeled().iter().map(|s| s.id.as_str()).collect();
    let rows = original
        .rows
        .iter()
        .filter_map(|row| {
            let group = if positives.contains(row.app_id.as_str()) {
                Group::Positive
            } else if unlabeled.contains(row.app_id.as_str()) {
                Group::Unlabeled
            } else {
                return None;
            };
            let path = fs::canonicalize(&row.path).unwrap_or_else(|_| row.path.clone());
            Some(ManifestRow { app_id: row.app_id.clone(), path, group })
        })
        .collect();
    DatasetManifest::new(rows)
}

fn experiment(args: ExperimentArgs) -> CliResult {
    let seed = resolve_seed(args.seed)?;
    let cfg = ExperimentConfig {
        pu: args.pu.config(args.train.config(seed)),
        learners: args.learners.clone(),
        test_fraction: args.test_fraction,
        reverse_share: args.reverse_share,
    };
    let (corpus, source) = match &args.generator.dataset {
        Some(path) => {
            let ds = dataset_from_json(&read(path)?)?;
            (Corpus::from_dataset(&ds)?, json!({ "dataset": display(path) }))
        }
        None => {
            let spec = args.generator.spec(seed)?;
            let data = generate_synthetic(&spec)?;
            (Corpus::from_synthetic(&data)?, json!({ "generator": spec }))
        }
    };
    let mut report = match args.protocol {
        ProtocolArg::Rq1 => protocol_rq1(&corpus, args.step, args.iterations, &cfg, seed)?,
        ProtocolArg::Rq2 => protocol_rq2(&corpus, &args.ratios, &cfg, seed)?,
        ProtocolArg::Rq3 => protocol_rq3(&corpus, args.holdout_family, &cfg, seed)?,
        ProtocolArg::Rq4 => protocol_rq4(&corpus, args.ratio, &cfg, seed)?,
    };
    if let Value::Object(map) = &mut report.config {
        map.insert("data".into(), source);
    }
    write_report(&report, &args.out)?;
    eprintln!("experiment: {} rows written to {}", report.rows.len(), args.out.display());
    Ok(())
}

fn pca(args: PcaArgs) -> CliResult {
    let loaded = load_input(&args.input)?;
    let projection = pca_project(&loaded.dataset)?;
    if projection.degenerate {
        eprintln!("pca: data has no variance; all coordinates are 0");
    }
    write(&args.out, &projection.to_csv()?)?;
    eprintln!(
        "pca: {} rows, explained variance {:.6} / {:.6}",
        projection.rows.len(),
        projection.explained_variance[0],
        projection.explained_variance[1]
    );
    Ok(())
}
