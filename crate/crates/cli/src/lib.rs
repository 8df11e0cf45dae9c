//! The `semantify` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags or
//! configuration values rejected before any work is done).

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use semantify_core::artifact::ModelArtifact;
use semantify_core::cluster_semantifier::sweep;
use semantify_core::corpus::{
    corpus_stats, load_blocklist, load_corpus, prune_partially_ontologized, split_folds, top_predicate_subset,
    CorpusStats, FoldSplit, N_FOLDS,
};
use semantify_core::evaluation::{cross_validate, MethodConfig};
use semantify_core::kmeans::{elbow_select, inertia_curve, KMeansConfig};
use semantify_core::synthetic::{planted_corpus, PlantedConfig};
use semantify_core::vectorizer::{SparseVector, TfidfModel};
use semantify_core::{Corpus, CorpusError, KMeansError, SemantifyError};
use semantify_service::jobs::TrainOptions;
use semantify_service::{ActiveModel, ServeConfig};

pub mod plot;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<SemantifyError> for CliError {
    fn from(e: SemantifyError) -> Self {
        let usage = matches!(
            e,
            SemantifyError::Config(_)
                | SemantifyError::ZeroThreshold
                | SemantifyError::InfeasibleNegatives { .. }
                | SemantifyError::Corpus(CorpusError::InfeasibleSplit(_))
                | SemantifyError::KMeans(
                    KMeansError::ZeroK
                        | KMeansError::TooManyClusters { .. }
                        | KMeansError::ShortCurve(_)
                        | KMeansError::UnsortedGrid
                )
        );
        if usage {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        SemantifyError::from(e).into()
    }
}

impl From<KMeansError> for CliError {
    fn from(e: KMeansError) -> Self {
        SemantifyError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "semantify", version, about = "Semantify bioassay descriptions with statement sets")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cluster,
    Labeler,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Statements-per-assay statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Drop non-ontologized statements (and blocklisted predicates).
        #[arg(long)]
        pruned: bool,
        /// Predicate blocklist, one per line; implies --pruned.
        #[arg(long)]
        blocklist: Option<PathBuf>,
        /// Report the statements covered by the n most frequent predicates.
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Fit a model on a whole corpus and write the artifact.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Three-fold cross validation.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        folds: FoldFlags,
        /// Omit wall-clock latency from the report.
        #[arg(long)]
        no_timing: bool,
    },
    /// Cross-validated grid over cluster counts and label thresholds.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_grid, default_value = "50:600:50")]
        k: Grid,
        #[arg(long, value_parser = parse_grid, default_value = "1:5")]
        thresholds: Grid,
        #[command(flatten)]
        kmeans: KMeansFlags,
        #[command(flatten)]
        folds: FoldFlags,
    },
    /// Inertia curve over a k grid and its elbow.
    Elbow {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_grid, default_value = "1:20")]
        k: Grid,
        #[command(flatten)]
        kmeans: KMeansFlags,
        /// Write the curve as an SVG file.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Semantify one text with a trained artifact; one JSON line per statement.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text_file: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the curation service.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted group structure.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        groups: usize,
        #[arg(long, default_value_t = 100)]
        per_group: usize,
        #[arg(long, default_value_t = 1900)]
        universe: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    #[arg(long, value_enum, default_value_t = MethodArg::Cluster)]
    pub method: MethodArg,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Random negatives per training assay.
    #[arg(long)]
    pub rf: Option<usize>,
    /// Minimum member count (cluster) or probability cutoff (labeler).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

impl ModelFlags {
    pub fn config(&self) -> Result<MethodConfig, CliError> {
        let name = match self.method {
            MethodArg::Cluster => "cluster",
            MethodArg::Labeler => "labeler",
        };
        TrainOptions {
            k: self.k,
            threshold: self.threshold,
            seed: Some(self.seed),
            max_iter: self.max_iter,
            tol: self.tol,
            restarts: self.restarts,
            rf_count: self.rf,
            epochs: self.epochs,
            lr: self.lr,
        }
        .into_config(name)
        .map_err(CliError::Usage)
    }
}

#[derive(Debug, Args)]
pub struct KMeansFlags {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl KMeansFlags {
    fn config(&self) -> Result<KMeansConfig, CliError> {
        let d = KMeansConfig::default();
        let config = KMeansConfig {
            seed: self.seed,
            restarts: self.restarts.unwrap_or(d.restarts),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            ..d
        };
        if config.restarts == 0 {
            return Err(CliError::Usage("--restarts must be at least 1".into()));
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct FoldFlags {
    /// Seed of the fold shuffle; defaults to --seed.
    #[arg(long)]
    pub folds_seed: Option<u64>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
}

pub const DEFAULT_TRAIN_SIZE: usize = 600;
pub const DEFAULT_TEST_SIZE: usize = 300;

/// Train/test sizes for a corpus of `n` assays. Unset sizes default to
/// 600/300 when that fits, otherwise to a quarter of the corpus for testing
/// and up to 600 of the rest for training.
pub fn resolve_sizes(n: usize, train: Option<usize>, test: Option<usize>) -> (usize, usize) {
    let fits = |tr: usize, te: usize| N_FOLDS * te <= n && tr + te <= n;
    let test = test.unwrap_or(if fits(train.unwrap_or(DEFAULT_TRAIN_SIZE), DEFAULT_TEST_SIZE) {
        DEFAULT_TEST_SIZE
    } else {
        (n / 4).max(1)
    });
    let train = train.unwrap_or_else(|| DEFAULT_TRAIN_SIZE.min(n.saturating_sub(test)));
    (train, test)
}

impl FoldFlags {
    fn split(&self, corpus: &Corpus, seed: u64) -> Result<FoldSplit, CliError> {
        let (train, test) = resolve_sizes(corpus.len(), self.train_size, self.test_size);
        Ok(split_folds(corpus, train, test, self.folds_seed.unwrap_or(seed))?)
    }
}

/// A parsed range flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<usize>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    parse_range(s).map(Grid)
}

/// Parses `start:stop:step`, `start:stop` (step 1) or a single value. The
/// stop value is included when the step lands on it.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| format!("invalid number {p:?} in range {s:?}"));
    let (start, stop, step) = match parts.as_slice() {
        [a] => (num(a)?, num(a)?, 1),
        [a, b] => (num(a)?, num(b)?, 1),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err(format!("expected start:stop:step, got {s:?}")),
    };
    if step == 0 {
        return Err("range step must be positive".into());
    }
    if start > stop {
        return Err(format!("range start {start} exceeds stop {stop}"));
    }
    Ok((start..=stop).step_by(step).collect())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = e.print();
            } else {
                let _ = write!(out, "{e}");
            }
            return e.exit_code();
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load(path: &Path) -> Result<Corpus, CliError> {
    load_corpus(path).map_err(|e| CliError::Runtime(e.to_string()))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

#[derive(Serialize)]
struct StatsReport {
    original: CorpusStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pruned: Option<CorpusStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_n: Option<TopN>,
}

#[derive(Serialize)]
struct TopN {
    n: usize,
    unique_statements: usize,
    percent: f64,
}

#[derive(Serialize)]
struct ElbowReport {
    k_star: usize,
    curve: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct CurvePoint {
    k: usize,
    inertia: f64,
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let json = cli.format == Format::Json;
    match &cli.command {
        Command::Stats {
            corpus,
            pruned,
            blocklist,
            top_n,
        } => {
            let corpus = load(corpus)?;
            let original = corpus_stats(&corpus)?;
            let pruned_corpus = if *pruned || blocklist.is_some() {
                let blocked = match blocklist {
                    Some(p) => load_blocklist(p).map_err(|e| CliError::Runtime(e.to_string()))?,
                    None => Default::default(),
                };
                Some(prune_partially_ontologized(&corpus, &blocked))
            } else {
                None
            };
            let pruned = pruned_corpus.as_ref().map(corpus_stats).transpose()?;
            let base = pruned_corpus.as_ref().unwrap_or(&corpus);
            let top_n = top_n.map(|n| {
                let unique = top_predicate_subset(base, n).statement_universe().len();
                let total = base.statement_universe().len();
                TopN {
                    n,
                    unique_statements: unique,
                    percent: if total == 0 { 0.0 } else { 100.0 * unique as f64 / total as f64 },
                }
            });
            let report = StatsReport { original, pruned, top_n };
            if json {
                return emit_json(out, &report);
            }
            writeln!(out, "{:<10} {:>6} {:>6} {:>6} {:>8}", "corpus", "avg", "min", "max", "unique")?;
            let rows = std::iter::once(("original", &report.original)).chain(report.pruned.as_ref().map(|p| ("pruned", p)));
            for (name, s) in rows {
                writeln!(
                    out,
                    "{:<10} {:>6} {:>6} {:>6} {:>8}",
                    name,
                    s.avg_rounded(),
                    s.min,
                    s.max,
                    s.total_unique
                )?;
            }
            if let Some(t) = &report.top_n {
                writeln!(out, "top {}: {} ({:.1})", t.n, t.unique_statements, t.percent)?;
            }
            Ok(())
        }
        Command::Train { corpus, model, out: path } => {
            let config = model.config()?;
            let corpus = load(corpus)?;
            let artifact = ModelArtifact::train(&corpus, &config)?;
            artifact.save(path)?;
            if json {
                emit_json(
                    out,
                    &serde_json::json!({"artifact": path, "method": config.name(), "provenance": artifact.provenance}),
                )
            } else {
                writeln!(
                    out,
                    "trained {} on {} assays -> {}",
                    config.name(),
                    artifact.provenance.n_train,
                    path.display()
                )?;
                Ok(())
            }
        }
        Command::Evaluate {
            corpus,
            model,
            folds,
            no_timing,
        } => {
            let config = model.config()?;
            let corpus = load(corpus)?;
            let split = folds.split(&corpus, model.seed)?;
            let mut report = cross_validate(&corpus, &config, &split)?;
            if *no_timing {
                report = report.without_timing();
            }
            if json {
                emit_json(out, &report)
            } else {
                write!(out, "{}", report.to_table())?;
                Ok(())
            }
        }
        Command::Sweep {
            corpus,
            k,
            thresholds,
            kmeans,
            folds,
        } => {
            let (k, thresholds) = (&k.0, &thresholds.0);
            if thresholds.contains(&0) {
                return Err(CliError::Usage("thresholds must be at least 1".into()));
            }
            if k.contains(&0) {
                return Err(CliError::Usage("cluster counts must be at least 1".into()));
            }
            let base = kmeans.config()?;
            let corpus = load(corpus)?;
            let split = folds.split(&corpus, base.seed)?;
            let grid = sweep(&corpus, &split, k, thresholds, &base)?;
            if json {
                emit_json(out, &grid)
            } else {
                write!(out, "{}", grid.to_table())?;
                if let Some((k, t, m)) = grid.best() {
                    writeln!(out, "best: k={k} threshold={t} F1={:.4}", m.f1)?;
                }
                Ok(())
            }
        }
        Command::Elbow { corpus, k, kmeans, plot } => {
            let k = &k.0;
            if k.len() < 3 {
                return Err(CliError::Usage(format!("elbow needs at least 3 grid points, got {}", k.len())));
            }
            if k.contains(&0) {
                return Err(CliError::Usage("cluster counts must be at least 1".into()));
            }
            let base = kmeans.config()?;
            let corpus = load(corpus)?;
            let texts: Vec<&str> = corpus.assays().iter().map(|a| a.text.as_str()).collect();
            let tfidf = TfidfModel::fit(&texts).map_err(SemantifyError::from)?;
            let vectors: Vec<SparseVector> = texts.iter().map(|t| tfidf.transform(t)).collect();
            let curve = inertia_curve(&vectors, k, &base)?;
            let k_star = elbow_select(&curve)?;
            if let Some(path) = plot {
                std::fs::write(path, plot::inertia_svg(&curve, k_star))?;
            }
            let report = ElbowReport {
                k_star,
                curve: curve.iter().map(|&(k, inertia)| CurvePoint { k, inertia }).collect(),
            };
            if json {
                return emit_json(out, &report);
            }
            writeln!(out, "{:>5} {:>14}", "k", "inertia")?;
            for p in &report.curve {
                let mark = if p.k == k_star { "  <- elbow" } else { "" };
                writeln!(out, "{:>5} {:>14.6}{mark}", p.k, p.inertia)?;
            }
            writeln!(out, "k* = {k_star}")?;
            Ok(())
        }
        Command::Predict {
            model,
            text_file,
            threshold,
        } => {
            let artifact = ModelArtifact::load(model).map_err(|e| CliError::Runtime(e.to_string()))?;
            let text = std::fs::read_to_string(text_file)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", text_file.display())))?;
            let active = ActiveModel::from_artifact(artifact, Some(model.clone()))?;
            let statements = active.predict(&text, *threshold).map_err(|e| CliError::Usage(e.message))?;
            for s in &statements {
                if json {
                    let line = serde_json::to_string(s).map_err(|e| CliError::Runtime(e.to_string()))?;
                    writeln!(out, "{line}")?;
                } else {
                    let weight = match (s.count, s.score) {
                        (Some(c), _) => format!("count {c}"),
                        (_, Some(p)) => format!("p {p:.3}"),
                        _ => String::new(),
                    };
                    writeln!(out, "{}  {} -> {}  {weight}", s.statement_id, s.predicate, s.value)?;
                }
            }
            Ok(())
        }
        Command::Serve {
            model,
            data_dir,
            bind,
            static_dir,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime
                .block_on(semantify_service::run(ServeConfig {
                    bind: *bind,
                    data_dir: data_dir.clone(),
                    model: model.clone(),
                    static_dir: static_dir.clone(),
                }))
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
        Command::Generate {
            out: path,
            groups,
            per_group,
            universe,
            seed,
        } => {
            if *groups == 0 || *per_group == 0 {
                return Err(CliError::Usage("--groups and --per-group must be positive".into()));
            }
            let d = PlantedConfig::default();
            if *universe < d.max_statements {
                return Err(CliError::Usage(format!("--universe must be at least {}", d.max_statements)));
            }
            let corpus = planted_corpus(&PlantedConfig {
                groups: *groups,
                per_group: *per_group,
                universe: *universe,
                seed: *seed,
                ..d
            });
            corpus.write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            writeln!(out, "wrote {} assays to {}", corpus.len(), path.display())?;
            Ok(())
        }
    }
}
