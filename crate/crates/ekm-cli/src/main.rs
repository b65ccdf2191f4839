//! `ekm` command line: evolve kernels, run the cross-validation protocol
//! and the k-NN baseline, build comparison reports, and classify new
//! points with saved models.
//!
//! All verbs accept `--config FILE` with simple `key = value` lines whose
//! keys mirror the long flag names; explicit flags override the file.
//! Progress goes to stderr, machine-readable output to files.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ekm::baseline::{run_knn_baseline, BaselineConfig};
use ekm::coevo::{coevolve_observed, select_final, CoevoConfig};
use ekm::data::{load_csv, Dataset, LabelColumn};
use ekm::experiment::{run_ekm_experiment_with_model, ProtocolConfig};
use ekm::gp::GpConfig;
use ekm::model::Classifier;
use ekm::report::{
    build_row, emit_report, load_baseline_json, load_experiment_json, write_baseline_json,
    write_experiment_json, ReportFormat,
};

#[derive(Parser)]
#[command(name = "ekm", version, about = "GP-evolved kernels for nearest-neighbor classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one co-evolution on a whole dataset and save the final model.
    Evolve(EvolveArgs),
    /// Full cross-validation protocol (several runs per fold, best kept).
    Crossval(CrossvalArgs),
    /// Grid-searched Euclidean k-NN baseline under the same fold plan.
    Baseline(BaselineArgs),
    /// Combine saved EKM and baseline reports into comparison tables.
    Report(ReportArgs),
    /// Classify points from a CSV file with a saved model.
    Predict(PredictArgs),
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// key = value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataOpts {
    /// Dataset CSV path
    #[arg(long)]
    data: Option<PathBuf>,
    /// Which column holds the class label
    #[arg(long, value_enum)]
    label_column: Option<LabelColumnArg>,
    /// The CSV has no header row
    #[arg(long)]
    no_header: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelColumnArg {
    First,
    Last,
}

#[derive(Args, Clone)]
struct EvoOpts {
    /// GP population size
    #[arg(long)]
    population: Option<usize>,
    /// Number of generations
    #[arg(long)]
    generations: Option<usize>,
    /// Tournament size
    #[arg(long)]
    tournament: Option<usize>,
    #[arg(long)]
    prob_crossover: Option<f64>,
    #[arg(long)]
    prob_standard_mutation: Option<f64>,
    #[arg(long)]
    prob_swap_mutation: Option<f64>,
    #[arg(long)]
    prob_shrink_mutation: Option<f64>,
    #[arg(long)]
    init_depth_min: Option<usize>,
    #[arg(long)]
    init_depth_max: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Prototype subset size
    #[arg(long)]
    prototypes: Option<usize>,
    /// Fitness-case subset size
    #[arg(long)]
    fitness_cases: Option<usize>,
    #[arg(long)]
    lambda_p: Option<usize>,
    #[arg(long)]
    lambda_s: Option<usize>,
    #[arg(long)]
    rho_p: Option<f64>,
    #[arg(long)]
    rho_s: Option<f64>,
    /// Min-max scale features (fit on the training fold)
    #[arg(long)]
    scale: bool,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    evo: EvoOpts,
    /// RNG seed for this run
    #[arg(long)]
    seed: Option<u64>,
    /// Where to save the model
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    data: DataOpts,
    #[command(flatten)]
    evo: EvoOpts,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    runs_per_fold: Option<usize>,
    #[arg(long)]
    keep_best: Option<usize>,
    /// Output directory for the report and model files
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    data: DataOpts,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Directory holding *_ekm.json and *_baseline.json files
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// csv, markdown, or both
    #[arg(long, default_value = "both")]
    format: String,
    /// Significance level of the paired t-test
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Saved model file
    #[arg(long)]
    model: PathBuf,
    /// CSV of feature rows (no label column)
    #[arg(long)]
    input: PathBuf,
    /// The input CSV has no header row
    #[arg(long)]
    no_header: bool,
    /// Write predicted labels here (one per line); stdout if omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

/// `key = value` file with `#` comments; keys match the long flag names
/// (`-` and `_` are interchangeable).
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .with_context(|| format!("{}:{}: expected key = value", path.display(), lineno + 1))?;
                map.insert(key.trim().replace('-', "_"), value.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}': cannot parse '{raw}': {e}"),
            },
        }
    }
}

fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

fn load_dataset(opts: &DataOpts, file: &FileConfig) -> Result<Dataset> {
    let path = match (&opts.data, file.get::<PathBuf>("data")?) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p,
        (None, None) => bail!("--data is required (flag or config file)"),
    };
    let label_column = match opts.label_column {
        Some(LabelColumnArg::First) => LabelColumn::First,
        Some(LabelColumnArg::Last) => LabelColumn::Last,
        None => match file.get::<String>("label_column")?.as_deref() {
            Some("first") => LabelColumn::First,
            Some("last") | None => LabelColumn::Last,
            Some(other) => bail!("config key 'label_column': unknown value '{other}'"),
        },
    };
    let has_header = !(opts.no_header || file.get::<bool>("no_header")?.unwrap_or(false));
    Ok(load_csv(&path, label_column, has_header)?)
}

fn build_coevo(evo: &EvoOpts, file: &FileConfig, seed: u64) -> Result<CoevoConfig> {
    let gp_defaults = GpConfig::default();
    let co_defaults = CoevoConfig::default();
    let gp = GpConfig {
        population_size: pick(evo.population, file.get("population")?, gp_defaults.population_size),
        generations: pick(evo.generations, file.get("generations")?, gp_defaults.generations),
        tournament_size: pick(evo.tournament, file.get("tournament")?, gp_defaults.tournament_size),
        prob_crossover: pick(
            evo.prob_crossover,
            file.get("prob_crossover")?,
            gp_defaults.prob_crossover,
        ),
        prob_standard_mutation: pick(
            evo.prob_standard_mutation,
            file.get("prob_standard_mutation")?,
            gp_defaults.prob_standard_mutation,
        ),
        prob_swap_mutation: pick(
            evo.prob_swap_mutation,
            file.get("prob_swap_mutation")?,
            gp_defaults.prob_swap_mutation,
        ),
        prob_shrink_mutation: pick(
            evo.prob_shrink_mutation,
            file.get("prob_shrink_mutation")?,
            gp_defaults.prob_shrink_mutation,
        ),
        init_depth_range: (
            pick(evo.init_depth_min, file.get("init_depth_min")?, gp_defaults.init_depth_range.0),
            pick(evo.init_depth_max, file.get("init_depth_max")?, gp_defaults.init_depth_range.1),
        ),
        max_depth: pick(evo.max_depth, file.get("max_depth")?, gp_defaults.max_depth),
        rng_seed: seed,
    };
    Ok(CoevoConfig {
        prototype_size: pick(evo.prototypes, file.get("prototypes")?, co_defaults.prototype_size),
        fitness_case_size: pick(
            evo.fitness_cases,
            file.get("fitness_cases")?,
            co_defaults.fitness_case_size,
        ),
        lambda_p: pick(evo.lambda_p, file.get("lambda_p")?, co_defaults.lambda_p),
        lambda_s: pick(evo.lambda_s, file.get("lambda_s")?, co_defaults.lambda_s),
        rho_p: pick(evo.rho_p, file.get("rho_p")?, co_defaults.rho_p),
        rho_s: pick(evo.rho_s, file.get("rho_s")?, co_defaults.rho_s),
        gp,
    })
}

fn scale_flag(evo: &EvoOpts, file: &FileConfig) -> Result<bool> {
    Ok(evo.scale || file.get::<bool>("scale")?.unwrap_or(false))
}

fn cmd_evolve(args: EvolveArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dataset = load_dataset(&args.data, &file)?;
    let seed = pick(args.seed, file.get("seed")?, 0);
    let coevo = build_coevo(&args.evo, &file, seed)?;
    let scale = scale_flag(&args.evo, &file)?;

    let mut train = dataset.clone();
    let scaling = if scale {
        let params = ekm::data::scale_fit(&train.examples);
        train.examples = ekm::data::scale_apply(&params, &train.examples);
        Some(params)
    } else {
        None
    };

    eprintln!(
        "evolving on {} ({} examples, d = {}), seed {seed}",
        dataset.name,
        dataset.len(),
        dataset.dimension
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = coevolve_observed(&train, &coevo, &mut rng, |entry| {
        eprintln!(
            "gen {:4}  best F {:10.4}  size {:4}  train 1-NN error {:.4}",
            entry.generation, entry.best_fitness, entry.best_size, entry.train_error
        );
    })?;
    let chosen = select_final(&trace);
    eprintln!(
        "final model from generation {} (train error {:.4}): {}",
        chosen.generation,
        chosen.train_error,
        chosen.best_kernel.format()
    );

    let classifier = Classifier::new(
        dataset.name.clone(),
        dataset.dimension,
        dataset.label_names.clone(),
        chosen.best_kernel.clone(),
        chosen.prototype_subset.gather(&train),
        scaling,
    )?;
    classifier.save(&args.out)?;
    eprintln!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_crossval(args: CrossvalArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dataset = load_dataset(&args.data, &file)?;
    let master_seed = pick(args.master_seed, file.get("master_seed")?, 0);
    let config = ProtocolConfig {
        folds: pick(args.folds, file.get("folds")?, 10),
        runs_per_fold: pick(args.runs_per_fold, file.get("runs_per_fold")?, 10),
        keep_best: pick(args.keep_best, file.get("keep_best")?, 5),
        scale_features: scale_flag(&args.evo, &file)?,
        master_seed,
        coevo: build_coevo(&args.evo, &file, master_seed)?,
    };
    let outdir = pick(args.outdir, file.get("outdir")?, PathBuf::from("out"));
    fs::create_dir_all(&outdir)?;

    eprintln!(
        "cross-validation on {}: {} folds x {} runs (keep {}), master seed {}",
        dataset.name, config.folds, config.runs_per_fold, config.keep_best, master_seed
    );
    let (report, model) = run_ekm_experiment_with_model(&dataset, &config)?;
    for f in &report.folds {
        eprintln!(
            "fold {:2}: kept test error {:.4} (train {:.4})",
            f.fold, f.test_error, f.train_error
        );
    }
    eprintln!(
        "best-half test error {:.4}, mean kernel size {:.1}",
        report.test_error, report.mean_kernel_size
    );

    let report_path = outdir.join(format!("{}_ekm.json", dataset.name));
    write_experiment_json(&report, &report_path)?;
    let model_path = outdir.join(format!("{}_model.json", dataset.name));
    model.save(&model_path)?;
    eprintln!("wrote {} and {}", report_path.display(), model_path.display());
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let dataset = load_dataset(&args.data, &file)?;
    let config = BaselineConfig {
        folds: pick(args.folds, file.get("folds")?, 10),
        neighbor_grid: vec![1, 3, 5],
        master_seed: pick(args.master_seed, file.get("master_seed")?, 0),
    };
    let outdir = pick(args.outdir, file.get("outdir")?, PathBuf::from("out"));
    fs::create_dir_all(&outdir)?;

    let report = run_knn_baseline(&dataset, &config)?;
    for cell in &report.cells {
        eprintln!(
            "k = {}, scaling {:3}: test error {:.4} (train {:.4})",
            cell.k,
            if cell.scaled { "yes" } else { "no" },
            cell.mean_test_error,
            cell.mean_train_error
        );
    }
    let best = report.best_cell();
    eprintln!(
        "best: k = {}, scaling {} at test error {:.4}",
        best.k,
        if best.scaled { "yes" } else { "no" },
        best.mean_test_error
    );

    let path = outdir.join(format!("{}_baseline.json", dataset.name));
    write_baseline_json(&report, &path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let outdir = pick(args.outdir, file.get("outdir")?, PathBuf::from("out"));
    let alpha = pick(args.alpha, file.get("alpha")?, 0.05);
    let formats = match args.format.as_str() {
        "csv" => vec![ReportFormat::Csv],
        "markdown" | "md" => vec![ReportFormat::Markdown],
        "both" => vec![ReportFormat::Csv, ReportFormat::Markdown],
        other => bail!("unknown report format '{other}' (expected csv, markdown, or both)"),
    };

    let mut names = Vec::new();
    for entry in fs::read_dir(&outdir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_ekm.json") {
            names.push(stem.to_string());
        }
    }
    names.sort();
    if names.is_empty() {
        bail!("no *_ekm.json reports found in {}", outdir.display());
    }

    let mut rows = Vec::new();
    for name in &names {
        let ekm_report = load_experiment_json(outdir.join(format!("{name}_ekm.json")))?;
        let baseline_path = outdir.join(format!("{name}_baseline.json"));
        if !baseline_path.exists() {
            bail!(
                "missing {} (run the baseline verb for '{name}' first)",
                baseline_path.display()
            );
        }
        let baseline_report = load_baseline_json(&baseline_path)?;
        rows.push(build_row(&ekm_report, &baseline_report, alpha)?);
    }
    let written = emit_report(&rows, &outdir, &formats)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let classifier = Classifier::load(&args.model)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(!args.no_header)
        .trim(csv::Trim::All)
        .from_path(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;

    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut features = Vec::with_capacity(record.len());
        for (col_idx, field) in record.iter().enumerate() {
            let v: f64 = field.parse().with_context(|| {
                format!("non-numeric cell '{field}' at row {}, column {}", row_idx + 1, col_idx + 1)
            })?;
            features.push(v);
        }
        labels.push(classifier.predict_label(&features)?.to_string());
    }

    let text = labels.join("\n") + "\n";
    match &args.output {
        Some(path) => {
            fs::write(path, text)?;
            eprintln!("wrote {} predictions to {}", labels.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(args) => cmd_evolve(args),
        Command::Crossval(args) => cmd_crossval(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Report(args) => cmd_report(args),
        Command::Predict(args) => cmd_predict(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
