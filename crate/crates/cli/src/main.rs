use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::filter::LevelFilter;

use critmem::datasets::{generate_synthetic, header_path, write_dataset, SyntheticKind, SyntheticTaskSpec};
use critmem::harness::{tables, Harness, RunConfig, RunReport, Stages};
use critmem::prompts::render_transcript;
use critmem::StrategyKind;

#[derive(Parser)]
#[command(name = "critmem", version, about = "Critique-memory experiment harness")]
struct Cli {
    /// Repeat for more logging (info, debug, trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build indexes and critique memories.
    Train(ConfigArg),
    /// Train if needed, then score every configured strategy.
    Eval(ConfigArg),
    /// Run the suggestibility probes.
    Probe(ConfigArg),
    /// Train, evaluate and probe, then write the report and tables.
    Run(ConfigArg),
    /// Rebuild the report from stored artifacts, or render saved reports.
    Report(ReportArgs),
    /// Print the prompt a strategy would send for one test instance.
    DumpPrompt(DumpArgs),
    /// Write a synthetic dataset as JSONL plus header.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run config; only cached artifacts are read.
    #[arg(long, conflicts_with = "input")]
    config: Option<PathBuf>,
    /// Saved report.json files, rendered together.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    strategy: StrategyKind,
    #[arg(long)]
    instance: String,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Print the message list as JSON instead of a transcript.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    kind: SyntheticKind,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated labels overriding the defaults.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Records file; the header is written next to it.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        2 => LevelFilter::DEBUG,
        _ => LevelFilter::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether the command completed without recorded failures.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Train(a) => stage(&a.config, Stages::TRAIN, None),
        Command::Eval(a) => stage(&a.config, Stages::EVAL, Some("eval")),
        Command::Probe(a) => stage(&a.config, Stages::PROBE, Some("probe")),
        Command::Run(a) => stage(&a.config, Stages::ALL, Some("")),
        Command::Report(a) => report(a),
        Command::DumpPrompt(a) => dump_prompt(a),
        Command::Generate(a) => generate(a),
    }
}

fn harness(config: &Path) -> Result<Harness> {
    let config = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    Ok(Harness::new(config)?)
}

fn stage(config: &Path, stages: Stages, prefix: Option<&str>) -> Result<bool> {
    let h = harness(config)?;
    let report = if stages == Stages::ALL {
        h.run()?
    } else {
        h.execute(stages)?
    };
    if let Some(prefix) = prefix {
        write_outputs(&h.config().output_dir, prefix, &report)?;
    }
    let meter = h.meter();
    eprintln!(
        "{} cells, {} probe rows, {} failures; {} calls, {} tokens",
        report.cells.len(),
        report.suggestibility.len(),
        report.failures.len(),
        meter.calls,
        meter.total.total()
    );
    Ok(summarize_failures(&report))
}

fn summarize_failures(report: &RunReport) -> bool {
    for f in &report.failures {
        let user = f.user.as_deref().unwrap_or("-");
        eprintln!("failed: {} user {user} [{}]: {}", f.dataset, f.stage, f.message);
    }
    report.failures.is_empty()
}

fn write_outputs(dir: &Path, prefix: &str, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = |base: &str| {
        if prefix.is_empty() {
            dir.join(base)
        } else {
            dir.join(format!("{prefix}-{base}"))
        }
    };
    let tables = tables::render_all(std::slice::from_ref(report));
    fs::write(name("report.json"), report.to_json())?;
    fs::write(name("tables.txt"), &tables)?;
    print!("{tables}");
    Ok(())
}

fn report(args: ReportArgs) -> Result<bool> {
    if let Some(config) = args.config {
        let h = harness(&config)?;
        let report = h.report()?;
        write_outputs(&h.config().output_dir, "", &report)?;
        return Ok(summarize_failures(&report));
    }
    if args.input.is_empty() {
        bail!("report needs --config or --input");
    }
    let mut reports = Vec::new();
    for path in &args.input {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: RunReport =
            serde_json::from_str(&text).with_context(|| format!("decoding report {}", path.display()))?;
        reports.push(report);
    }
    print!("{}", tables::render_all(&reports));
    Ok(reports.iter().all(|r| r.failures.is_empty()))
}

fn dump_prompt(args: DumpArgs) -> Result<bool> {
    let h = harness(&args.config)?;
    let prompt = h.dump_prompt(
        args.dataset.as_deref(),
        &args.instance,
        args.strategy,
        args.fraction,
        args.k,
    )?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&prompt.messages)?);
    } else {
        if !prompt.retrieved_ids.is_empty() {
            println!("# retrieved: {}", prompt.retrieved_ids.join(", "));
        }
        print!("{}", render_transcript(&prompt.messages));
    }
    Ok(true)
}

fn generate(args: GenerateArgs) -> Result<bool> {
    let mut spec = SyntheticTaskSpec::new(args.kind, args.size, args.seed);
    spec.labels = args.labels;
    let dataset = generate_synthetic(&spec)?;
    write_dataset(&args.out, &dataset)?;
    eprintln!(
        "wrote {} ({} train, {} test) and {}",
        args.out.display(),
        dataset.train.len(),
        dataset.test.len(),
        header_path(&args.out).display()
    );
    Ok(true)
}
