//! `vlnprep`: reproducible data-side pipeline for vision-and-language
//! navigation experiments. Every stochastic subcommand takes an explicit
//! `--seed`; rerunning with identical inputs and flags produces
//! byte-identical outputs.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::RunManifest;
use vlnprep::cartography::{
    classify_regions, compute_map, load_dynamics, load_points, save_points, save_selection,
    select_subset, PointsFile, SelectionManifest, SelectionPolicy,
};
use vlnprep::corpus::{load_dataset, save_dataset, subsample};
use vlnprep::envgraph::{load_graph, EnvironmentGraph};
use vlnprep::metrics::{
    delta_sr, evaluate, load_episodes, load_report, report_to_csv, save_report, sra,
};
use vlnprep::noising::{empty_language, mismatch, shuffle_dataset, MismatchMode, ShuffleMode};
use vlnprep::uogen::{
    annotate_dataset, load_detections, load_model, save_model, UoConfig, UoModel,
};

#[derive(Parser)]
#[command(
    name = "vlnprep",
    version = concat!(env!("CARGO_PKG_VERSION"), " (file format 1)"),
    about = "Deterministic dataset transforms, synthetic annotation, and navigation metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shuffle instruction words and/or sentences
    Noise(NoiseArgs),
    /// Reassign instructions to wrong trajectories
    Mismatch(MismatchArgs),
    /// Blank instruction text for a fraction of trajectories
    EmptyLang(EmptyLangArgs),
    /// Keep a uniform subset of samples
    Subsample(SubsampleArgs),
    /// Unigram+object synthetic annotation
    #[command(subcommand)]
    Uo(UoCommand),
    /// Navigation metrics over predicted vs reference paths
    Eval(EvalArgs),
    /// Success-rate agreement between two evaluation reports
    Sra(SraArgs),
    /// Training-dynamics maps and data selection
    #[command(subcommand)]
    Carto(CartoCommand),
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)] // kebab-cased to the sf-* flag values
enum NoiseMode {
    SfWord,
    SfSent,
    SfWordSent,
    SfAll,
}

impl From<NoiseMode> for ShuffleMode {
    fn from(mode: NoiseMode) -> Self {
        match mode {
            NoiseMode::SfWord => ShuffleMode::SfWord,
            NoiseMode::SfSent => ShuffleMode::SfSent,
            NoiseMode::SfWordSent => ShuffleMode::SfWordSent,
            NoiseMode::SfAll => ShuffleMode::SfAll,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MismatchKind {
    Block,
    Random,
}

#[derive(Args)]
struct NoiseArgs {
    /// Shuffle mode
    #[arg(long, value_enum)]
    mode: NoiseMode,
    #[arg(long)]
    seed: u64,
    /// Input dataset
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MismatchArgs {
    #[arg(long, value_enum)]
    mode: MismatchKind,
    #[arg(long)]
    seed: u64,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EmptyLangArgs {
    /// Fraction of trajectories that keep their text
    #[arg(long)]
    keep: f64,
    #[arg(long)]
    seed: u64,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SubsampleArgs {
    /// Number of samples to keep
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum UoCommand {
    /// Fit the unigram and length models from a dataset
    Train(UoTrainArgs),
    /// Generate synthetic annotations for every trajectory
    Generate(UoGenerateArgs),
}

#[derive(Args)]
struct UoTrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON array of detector label strings
    #[arg(long)]
    labels: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct UoGenerateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Instructions generated per trajectory
    #[arg(long)]
    per_traj: usize,
    /// Donor dataset mixed in via random mismatch (per-traj extra instructions)
    #[arg(long)]
    mix: Option<PathBuf>,
    /// Ablation: shuffle every word of the generated instructions
    #[arg(long)]
    shuffle_objects: bool,
    /// Ablation: sample all words from the unigram, no detector labels
    #[arg(long)]
    no_detector: bool,
    /// Objects sampled per window
    #[arg(long, default_value_t = 3)]
    a: usize,
    /// Panoramas per window
    #[arg(long, default_value_t = 2)]
    b: usize,
    /// Detections used per panorama
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
#[command(subcommand_negates_reqs = true)]
struct EvalArgs {
    #[command(subcommand)]
    sub: Option<EvalSub>,
    /// Directory of graph JSON files
    #[arg(long, required = true)]
    graphs: Option<PathBuf>,
    #[arg(long, required = true)]
    episodes: Option<PathBuf>,
    /// Dataset providing instruction texts for the breakdown bins
    #[arg(long, required = true)]
    dataset: Option<PathBuf>,
    /// Success threshold in meters
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
    /// Instruction word-count bin width for the breakdown
    #[arg(long, default_value_t = 10)]
    bin_width: usize,
    /// Write the report as a flat CSV table instead of JSON
    #[arg(long)]
    csv: bool,
    #[arg(short, long, required = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalSub {
    /// Cell-wise SR difference between two reports
    Delta(EvalDeltaArgs),
}

#[derive(Args)]
struct EvalDeltaArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SraArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Subcommand)]
enum CartoCommand {
    /// Confidence/variability per sample from a dynamics log
    Map(CartoMapArgs),
    /// Label easy/ambiguous/hard regions
    Classify(CartoClassifyArgs),
    /// Select sample ids under a data-editing policy
    Select(CartoSelectArgs),
    /// Export points as CSV (and optionally an SVG scatter)
    Export(CartoExportArgs),
}

#[derive(Args)]
struct CartoMapArgs {
    #[arg(long)]
    dynamics: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CartoClassifyArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    mu_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma_quantile: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    #[value(alias = "cut_amb")]
    CutAmb,
    #[value(alias = "top_amb")]
    TopAmb,
    #[value(alias = "top_conf")]
    TopConf,
}

impl From<PolicyArg> for SelectionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Random => SelectionPolicy::Random,
            PolicyArg::CutAmb => SelectionPolicy::CutAmbiguous,
            PolicyArg::TopAmb => SelectionPolicy::TopAmbiguous,
            PolicyArg::TopConf => SelectionPolicy::TopConfident,
        }
    }
}

#[derive(Args)]
struct CartoSelectArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    #[arg(long)]
    fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CartoExportArgs {
    #[arg(long)]
    points: PathBuf,
    /// CSV output path
    #[arg(short, long)]
    output: PathBuf,
    /// Also write an SVG scatter here
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn main() {
    configure_threads();
    let cli = Cli::parse();
    if let Err(error) = run(cli.command) {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

/// VLNPREP_THREADS caps the rayon pool; unset means the rayon default.
fn configure_threads() {
    if let Ok(value) = std::env::var("VLNPREP_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Noise(args) => {
            let dataset = load_dataset(&args.input)?;
            let mut out = shuffle_dataset(&dataset, ShuffleMode::from(args.mode), args.seed);
            RunManifest::new("noise")
                .seed(args.seed)
                .input("dataset", &args.input)?
                .apply(&mut out.metadata);
            save_dataset(&out, &args.output)?;
            Ok(())
        }
        Command::Mismatch(args) => {
            let dataset = load_dataset(&args.input)?;
            let mode = match args.mode {
                MismatchKind::Block => MismatchMode::Block,
                MismatchKind::Random => MismatchMode::Random,
            };
            let mut out = mismatch(&dataset, mode, args.seed)?;
            RunManifest::new("mismatch")
                .seed(args.seed)
                .input("dataset", &args.input)?
                .apply(&mut out.metadata);
            save_dataset(&out, &args.output)?;
            Ok(())
        }
        Command::EmptyLang(args) => {
            let dataset = load_dataset(&args.input)?;
            let mut out = empty_language(&dataset, args.keep, args.seed)?;
            RunManifest::new("empty-lang")
                .seed(args.seed)
                .input("dataset", &args.input)?
                .apply(&mut out.metadata);
            save_dataset(&out, &args.output)?;
            Ok(())
        }
        Command::Subsample(args) => {
            let dataset = load_dataset(&args.input)?;
            let mut out = subsample(&dataset, args.n, args.seed)?;
            RunManifest::new("subsample")
                .seed(args.seed)
                .input("dataset", &args.input)?
                .apply(&mut out.metadata);
            save_dataset(&out, &args.output)?;
            Ok(())
        }
        Command::Uo(UoCommand::Train(args)) => {
            let dataset = load_dataset(&args.dataset)?;
            let labels = load_labels(&args.labels)?;
            let mut model = UoModel::train(&dataset, &labels)?;
            RunManifest::new("uo train")
                .input("dataset", &args.dataset)?
                .input("labels", &args.labels)?
                .apply(&mut model.metadata);
            save_model(&model, &args.output)?;
            Ok(())
        }
        Command::Uo(UoCommand::Generate(args)) => {
            let dataset = load_dataset(&args.dataset)?;
            let detections = load_detections(&args.detections)?;
            let model = load_model(&args.model)?;
            let donor = args.mix.as_ref().map(load_dataset).transpose()?;
            let config = UoConfig {
                a: args.a,
                b: args.b,
                k: args.k,
                shuffle_objects: args.shuffle_objects,
                no_detector: args.no_detector,
            };
            let mut out = annotate_dataset(
                &dataset,
                &detections,
                &model.unigram,
                &model.lengths,
                &config,
                args.per_traj,
                donor.as_ref(),
                args.seed,
            )?;
            let mut manifest = RunManifest::new("uo generate")
                .seed(args.seed)
                .input("dataset", &args.dataset)?
                .input("detections", &args.detections)?
                .input("model", &args.model)?;
            if let Some(mix) = &args.mix {
                manifest = manifest.input("mix", mix)?;
            }
            manifest.apply(&mut out.metadata);
            save_dataset(&out, &args.output)?;
            Ok(())
        }
        Command::Eval(args) => run_eval(args),
        Command::Sra(args) => {
            let a = load_report(&args.a)?;
            let b = load_report(&args.b)?;
            println!("{:.3}", sra(&a, &b)?);
            Ok(())
        }
        Command::Carto(CartoCommand::Map(args)) => {
            let log = load_dynamics(&args.dynamics)?;
            let points = compute_map(&log)?;
            let mut file = PointsFile {
                metadata: BTreeMap::new(),
                points,
            };
            RunManifest::new("carto map")
                .input("dynamics", &args.dynamics)?
                .apply(&mut file.metadata);
            save_points(&file, &args.output)?;
            Ok(())
        }
        Command::Carto(CartoCommand::Classify(args)) => {
            let mut file = load_points(&args.points)?;
            classify_regions(&mut file.points, args.mu_threshold, args.sigma_quantile)?;
            file.metadata.clear();
            RunManifest::new("carto classify")
                .input("points", &args.points)?
                .apply(&mut file.metadata);
            save_points(&file, &args.output)?;
            Ok(())
        }
        Command::Carto(CartoCommand::Select(args)) => {
            let file = load_points(&args.points)?;
            let policy = SelectionPolicy::from(args.policy);
            let chosen = select_subset(&file.points, policy, args.fraction, args.seed)?;
            let mut manifest_out = SelectionManifest {
                metadata: BTreeMap::new(),
                policy: policy.name().to_string(),
                fraction: args.fraction,
                seed: args.seed,
                sample_ids: chosen.into_iter().collect(),
            };
            RunManifest::new("carto select")
                .seed(args.seed)
                .input("points", &args.points)?
                .apply(&mut manifest_out.metadata);
            save_selection(&manifest_out, &args.output)?;
            Ok(())
        }
        Command::Carto(CartoCommand::Export(args)) => {
            let file = load_points(&args.points)?;
            let manifest = RunManifest::new("carto export").input("points", &args.points)?;
            let csv = format!(
                "{}{}",
                manifest.comment_block(),
                vlnprep::cartography::points_to_csv(&file.points)
            );
            std::fs::write(&args.output, csv)
                .with_context(|| format!("writing {}", args.output.display()))?;
            if let Some(svg_path) = &args.svg {
                let svg = vlnprep::cartography::points_to_svg(&file.points);
                let svg = match svg.find('\n') {
                    Some(pos) => format!(
                        "{}\n  <metadata>{}</metadata>{}",
                        &svg[..pos],
                        manifest
                            .entries()
                            .iter()
                            .map(|(k, v)| format!("{k}={v}"))
                            .collect::<Vec<_>>()
                            .join("; "),
                        &svg[pos..]
                    ),
                    None => svg,
                };
                std::fs::write(svg_path, svg)
                    .with_context(|| format!("writing {}", svg_path.display()))?;
            }
            Ok(())
        }
    }
}

fn run_eval(args: EvalArgs) -> Result<()> {
    if let Some(EvalSub::Delta(delta)) = args.sub {
        let a = load_report(&delta.a)?;
        let b = load_report(&delta.b)?;
        let mut matrix = delta_sr(&a, &b)?;
        RunManifest::new("eval delta")
            .input("a", &delta.a)?
            .input("b", &delta.b)?
            .apply(&mut matrix.metadata);
        let body = serde_json::to_string_pretty(&matrix)?;
        std::fs::write(&delta.output, body + "\n")
            .with_context(|| format!("writing {}", delta.output.display()))?;
        return Ok(());
    }
    // subcommand_negates_reqs guarantees these are present here.
    let graphs_dir = args.graphs.expect("required by clap");
    let episodes_path = args.episodes.expect("required by clap");
    let dataset_path = args.dataset.expect("required by clap");
    let output = args.output.expect("required by clap");

    let graphs = load_graph_dir(&graphs_dir)?;
    let episodes = load_episodes(&episodes_path)?;
    let dataset = load_dataset(&dataset_path)?;
    let mut report = evaluate(&graphs, &episodes, &dataset, args.threshold, args.bin_width)?;

    let mut manifest = RunManifest::new("eval")
        .input("episodes", &episodes_path)?
        .input("dataset", &dataset_path)?;
    let mut graph_files: Vec<PathBuf> = graph_json_files(&graphs_dir)?;
    graph_files.sort();
    for file in &graph_files {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        manifest = manifest.input(&format!("graphs/{name}"), file)?;
    }
    manifest.apply(&mut report.metadata);

    println!(
        "SR {:.1}  SPL {:.1}  nDTW {:.1}  ({} episodes)",
        report.aggregates.sr,
        report.aggregates.spl,
        report.aggregates.ndtw,
        report.episodes.len()
    );

    if args.csv {
        let csv = format!(
            "{}# aggregates: sr={} spl={} ndtw={}\n{}",
            manifest.comment_block(),
            report.aggregates.sr,
            report.aggregates.spl,
            report.aggregates.ndtw,
            report_to_csv(&report)
        );
        std::fs::write(&output, csv).with_context(|| format!("writing {}", output.display()))?;
    } else {
        save_report(&report, &output)?;
    }
    Ok(())
}

fn graph_json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in
        std::fs::read_dir(dir).with_context(|| format!("reading graph dir {}", dir.display()))?
    {
        let path = entry?.path();
        if path.extension().map(|e| e == "json").unwrap_or(false) {
            files.push(path);
        }
    }
    if files.is_empty() {
        bail!("no .json graph files in {}", dir.display());
    }
    Ok(files)
}

fn load_graph_dir(dir: &Path) -> Result<BTreeMap<String, EnvironmentGraph>> {
    let mut graphs = BTreeMap::new();
    let mut files = graph_json_files(dir)?;
    files.sort();
    for file in files {
        let graph = load_graph(&file)?;
        let scan = graph.scan().to_string();
        if graphs.insert(scan.clone(), graph).is_some() {
            bail!("scan `{scan}` appears in more than one graph file");
        }
    }
    Ok(graphs)
}

fn load_labels(path: &Path) -> Result<BTreeSet<String>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels `{}`", path.display()))?;
    let labels: Vec<String> = serde_json::from_str(&raw).with_context(|| {
        format!(
            "parsing labels `{}` (expected a JSON array of strings)",
            path.display()
        )
    })?;
    Ok(labels.into_iter().collect())
}
