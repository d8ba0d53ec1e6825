//! `convoarg`: command-line front end for the argument-graph pipeline.
//!
//! Exit status is 0 on success, 2 when input or configuration is invalid and
//! 3 when a stage fails on valid input.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use log::info;

use convoarg::analysis::{self, ablation_csv};
use convoarg::features::{aggregate_graph_features, FeatureSelector};
use convoarg::ingest::{parse_corpus, Conversation};
use convoarg::io;
use convoarg::labeling::{balance_dataset, cumulative_approval, flag_top_users, label_examples, Dataset, Provenance};
use convoarg::learners::{train, Hyperparams, ModelKind, TrainedModel};
use convoarg::metrics::centralities;
use convoarg::pipeline::{self, RunConfig};
use convoarg::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "convoarg", version, about = "Find appreciated users from the argument structure of threaded conversations")]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Emit log records as JSON lines on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize JSONL posts into canonical order.
    Ingest {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build argument graphs from canonical posts.
    Graph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-post centralities from graphs.
    Centrality {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate per-user features for every conversation, from saved graphs
    /// and centralities or directly from canonical posts.
    Features {
        #[arg(long, requires = "centrality", conflicts_with = "input", required_unless_present = "input")]
        graphs: Option<PathBuf>,
        #[arg(long, requires = "graphs")]
        centrality: Option<PathBuf>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach top-user labels from corpus-wide approval.
    Label {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-user approval totals.
        #[arg(long)]
        approvals: Option<PathBuf>,
    },
    /// Draw a class-balanced sample of labeled rows.
    Balance {
        #[arg(long = "in")]
        input: PathBuf,
        /// Even sample size; defaults to twice the smaller class.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on labeled rows.
    Train {
        #[arg(long, value_parser = parse_kind)]
        kind: ModelKind,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model on labeled rows.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[arg(long, value_parser = parse_kind)]
        kind: ModelKind,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Exploratory analyses over labeled rows.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Generate a synthetic corpus with planted top users.
    Synth {
        /// JSON config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run every stage from a JSON run config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score users of new conversations with a trained model.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Label users by approval with this fraction and report against it.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Principal components of the selected features.
    Pca {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "full")]
        features: String,
        /// Number of components; defaults to all.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Recursive feature elimination with random forests.
    Rfe {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Cross-validated accuracy per feature regime and classifier.
    Ablation {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Feature set: minimal, reduced, full, or a comma list.
    #[arg(long, default_value = "full")]
    features: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON hyperparameters; missing fields keep their defaults.
    #[arg(long)]
    hyperparams: Option<PathBuf>,
    /// Number of forest trees.
    #[arg(long)]
    trees: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write a CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Failure with the exit status it maps to.
enum Failure {
    Invalid(anyhow::Error),
    Stage(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Stage(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Invalid(e) | Failure::Stage(e) => e,
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn invalid(self, what: &str) -> Outcome<T>;
    fn stage(self, what: &str) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self, what: &str) -> Outcome<T> {
        self.map_err(|e| Failure::Invalid(e.into().context(what.to_string())))
    }
    fn stage(self, what: &str) -> Outcome<T> {
        self.map_err(|e| Failure::Stage(e.into().context(what.to_string())))
    }
}

fn init_logging(quiet: bool, json: bool) {
    let mut b = env_logger::Builder::new();
    b.filter_level(if quiet { log::LevelFilter::Error } else { log::LevelFilter::Info });
    b.parse_env("CONVOARG_LOG");
    if json {
        b.format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().to_string(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    b.init();
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .invalid(&format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).stage(&format!("cannot create {}", parent.display()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .stage(&format!("cannot create {}", path.display()))
}

fn write_with<F>(path: &Path, fill: F) -> Outcome
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    let mut w = create(path)?;
    fill(&mut w).stage(&format!("writing {}", path.display()))?;
    w.flush().stage(&format!("writing {}", path.display()))
}

fn read_conversations(paths: &[PathBuf]) -> Outcome<Vec<Conversation>> {
    let mut all = Vec::new();
    for p in paths {
        let lines: Vec<String> = open(p)?
            .lines()
            .collect::<Result<_, _>>()
            .invalid(&format!("reading {}", p.display()))?;
        all.extend(parse_corpus(lines).invalid(&format!("{}", p.display()))?);
    }
    Ok(all)
}

fn selector(names: &str) -> Outcome<FeatureSelector> {
    FeatureSelector::parse(names).invalid("feature set")
}

fn read_dataset(path: &Path, sel: FeatureSelector) -> Outcome<Dataset> {
    let examples = io::read_labeled(open(path)?).invalid(&format!("{}", path.display()))?;
    Ok(Dataset::new(examples, sel, Provenance::Evaluation))
}

fn hyperparams(args: &ModelArgs) -> Outcome<Hyperparams> {
    let mut hp = match &args.hyperparams {
        Some(p) => {
            let text = fs::read_to_string(p).invalid(&format!("reading {}", p.display()))?;
            serde_json::from_str(&text).invalid(&format!("{}", p.display()))?
        }
        None => Hyperparams::default(),
    };
    hp.seed = args.seed;
    if let Some(t) = args.trees {
        hp.forest_trees = t;
    }
    hp.validate().invalid("hyperparameters")?;
    Ok(hp)
}

fn emit_report<T: serde::Serialize>(value: &T, csv: Option<String>, args: &ReportArgs) -> Outcome {
    match &args.report {
        Some(p) => write_with(p, |w| Ok(io::write_json_pretty(value, w)?))?,
        None => {
            let stdout = std::io::stdout();
            io::write_json_pretty(value, stdout.lock()).stage("writing report")?;
        }
    }
    if let (Some(p), Some(text)) = (&args.csv, csv) {
        write_with(p, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Ingest { inputs, out } => {
            let conversations = read_conversations(&inputs)?;
            info!("{} conversations", conversations.len());
            write_with(&out, |w| {
                for c in &conversations {
                    c.write_jsonl(&mut *w)?;
                }
                Ok(())
            })
        }
        Command::Graph { input, out } => {
            let conversations = read_conversations(&[input])?;
            let artifacts = pipeline::extract(&conversations).stage("graph")?;
            let graphs: Vec<_> = artifacts.into_iter().map(|a| a.graph).collect();
            write_with(&out, |w| Ok(io::write_graphs(&graphs, w)?))
        }
        Command::Centrality { input, out } => {
            let graphs = io::read_graphs(open(&input)?).invalid(&format!("{}", input.display()))?;
            let scores: Vec<_> = graphs.iter().map(centralities).collect();
            let rows: Vec<_> = graphs.iter().zip(&scores).collect();
            write_with(&out, |w| Ok(io::write_centralities(&rows, w)?))
        }
        Command::Features {
            graphs,
            centrality,
            input,
            out,
        } => {
            let rows = match (graphs, centrality, input) {
                (Some(graphs), Some(centrality), _) => {
                    let graphs = io::read_graphs(open(&graphs)?).invalid(&format!("{}", graphs.display()))?;
                    let scores = io::read_centralities(open(&centrality)?, &graphs).invalid(&format!("{}", centrality.display()))?;
                    let mut rows = Vec::new();
                    for (g, c) in graphs.iter().zip(&scores) {
                        let users = aggregate_graph_features(g, c).stage("features")?;
                        rows.extend(users.into_values().map(|u| (g.conversation_id.clone(), u)));
                    }
                    rows
                }
                (_, _, Some(input)) => {
                    let conversations = read_conversations(&[input])?;
                    pipeline::feature_rows(&pipeline::extract(&conversations).stage("features")?)
                }
                _ => return Err(Failure::Invalid(anyhow::anyhow!("features needs --graphs with --centrality, or --in"))),
            };
            write_with(&out, |w| Ok(io::write_features(&rows, w)?))
        }
        Command::Label {
            posts,
            features,
            fraction,
            out,
            approvals,
        } => {
            let conversations = read_conversations(&[posts])?;
            let rows = io::read_features(open(&features)?).invalid(&format!("{}", features.display()))?;
            let totals = cumulative_approval(conversations.iter().flat_map(|c| c.posts()));
            let top = flag_top_users(totals.values(), fraction).invalid("label")?;
            let examples = label_examples(&rows, &top);
            write_with(&out, |w| Ok(io::write_labeled(&examples, w)?))?;
            if let Some(p) = approvals {
                write_with(&p, |w| Ok(io::write_approvals(&totals, &top, w)?))?;
            }
            Ok(())
        }
        Command::Balance { input, size, seed, out } => {
            let data = read_dataset(&input, FeatureSelector::full())?;
            let pos = data.positives();
            let size = size.unwrap_or(2 * pos.min(data.len() - pos));
            let balanced = balance_dataset(&data.examples, size, seed, FeatureSelector::full()).invalid("balance")?;
            write_with(&out, |w| Ok(io::write_labeled(&balanced.examples, w)?))
        }
        Command::Train { kind, model, input, out } => {
            let sel = selector(&model.features)?;
            let hp = hyperparams(&model)?;
            let data = read_dataset(&input, sel.clone())?;
            let mut trained = train(kind, &data.samples(), &hp).stage("train")?;
            trained.selector.name = sel.name.clone();
            info!("trained {kind} on {} examples", data.len());
            write_with(&out, |w| {
                w.write_all(trained.to_json().as_bytes())?;
                w.write_all(b"\n")?;
                Ok(())
            })
        }
        Command::Eval { model, input, report } => {
            let text = fs::read_to_string(&model).invalid(&format!("reading {}", model.display()))?;
            let trained = TrainedModel::from_json(&text).invalid(&format!("{}", model.display()))?;
            let sel = pipeline::model_selector(&trained).invalid("model")?;
            let data = read_dataset(&input, sel)?;
            let r = analysis::evaluate(&trained, &data.samples()).stage("evaluate")?;
            emit_report(&r, Some(r.to_csv()), &report)
        }
        Command::Cv {
            kind,
            model,
            input,
            k,
            report,
        } => {
            let sel = selector(&model.features)?;
            let hp = hyperparams(&model)?;
            let data = read_dataset(&input, sel)?;
            let r = analysis::cross_validate(kind, &data.samples(), &hp, k, model.seed).stage("cross-validation")?;
            emit_report(&r, Some(r.to_csv()), &report)
        }
        Command::Analyze { what } => analyze(what),
        Command::Synth { config, seed, out, truth } => {
            let mut cfg: SynthConfig = match &config {
                Some(p) => {
                    let text = fs::read_to_string(p).invalid(&format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).invalid(&format!("{}", p.display()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let corpus = synth::generate(&cfg).invalid("synth")?;
            info!("{} conversations, {} planted top users", corpus.conversations.len(), corpus.ground_truth_top.len());
            write_with(&out, |w| Ok(corpus.write_jsonl(w)?))?;
            if let Some(p) = truth {
                let t = corpus.truth(cfg.seed);
                write_with(&p, |w| Ok(io::write_json_pretty(&t, w)?))?;
            }
            Ok(())
        }
        Command::Run { config } => {
            let text = fs::read_to_string(&config).invalid(&format!("reading {}", config.display()))?;
            let mut cfg: RunConfig = serde_json::from_str(&text).invalid(&format!("{}", config.display()))?;
            // relative paths in the config resolve against its directory
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
            cfg.inputs = cfg.inputs.iter().map(|p| resolve(p)).collect();
            cfg.truth = cfg.truth.as_deref().map(resolve);
            cfg.out_dir = resolve(&cfg.out_dir);
            let outcome = pipeline::run_detect(&cfg).map_err(|e| {
                let invalid = e.is_validation();
                let err = anyhow!(e);
                if invalid {
                    Failure::Invalid(err)
                } else {
                    Failure::Stage(err)
                }
            })?;
            let u = &outcome.report.users;
            info!(
                "holdout users {}: recall {}, precision {}, flagged {:.3}",
                outcome.report.n_holdout_users, u.recall, u.precision, u.flagged_fraction
            );
            Ok(())
        }
        Command::Detect {
            model,
            inputs,
            out,
            fraction,
            report,
        } => {
            let text = fs::read_to_string(&model).invalid(&format!("reading {}", model.display()))?;
            let trained = TrainedModel::from_json(&text).invalid(&format!("{}", model.display()))?;
            let conversations = read_conversations(&inputs)?;
            let artifacts = pipeline::extract(&conversations).stage("features")?;
            let rows = pipeline::feature_rows(&artifacts);
            let top = match fraction {
                Some(f) => {
                    let totals = cumulative_approval(conversations.iter().flat_map(|c| c.posts()));
                    flag_top_users(totals.values(), f).invalid("label")?
                }
                None => Default::default(),
            };
            let examples = label_examples(&rows, &top);
            let detections = pipeline::detect_users(&trained, &examples, fraction.is_some()).stage("detect")?;
            let flagged = detections.iter().filter(|d| d.flagged).count();
            info!("flagged {flagged} of {} users", detections.len());
            write_with(&out, |w| Ok(pipeline::write_detections(&detections, None, w)?))?;
            if fraction.is_some() {
                let r = pipeline::user_report(&detections, &|d| d.is_top == Some(true));
                let args = ReportArgs { report, csv: None };
                emit_report(&r, None, &args)?;
            }
            Ok(())
        }
    }
}

fn analyze(what: Analysis) -> Outcome {
    match what {
        Analysis::Pca {
            input,
            features,
            k,
            report,
        } => {
            let sel = selector(&features)?;
            let data = read_dataset(&input, sel)?;
            let samples = data.samples();
            let k = k.unwrap_or(samples.n_features());
            let r = analysis::pca(&samples, k).stage("pca")?;
            emit_report(&r, Some(r.to_csv()), &report)
        }
        Analysis::Rfe { input, model, k, report } => {
            let hp = hyperparams(&model)?;
            let sel = selector(&model.features)?;
            let data = read_dataset(&input, sel)?;
            let r = analysis::rfe(&data.samples(), &hp, k, model.seed).stage("rfe")?;
            emit_report(&r, Some(r.to_csv()), &report)
        }
        Analysis::Ablation { input, model, k, report } => {
            let hp = hyperparams(&model)?;
            let data = read_dataset(&input, FeatureSelector::full())?;
            let rows = analysis::ablation_study(&data, &hp, k, model.seed).stage("ablation")?;
            emit_report(&rows, Some(ablation_csv(&rows)), &report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.quiet, cli.json_logs);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
