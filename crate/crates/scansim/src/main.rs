//! scansim: deterministic shelf-scanning flywheel simulator.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use scansim::callnum::parse_call_number;
use scansim::catalog::{generate_catalog, Catalog};
use scansim::config::{ConfigError, RunConfig};
use scansim::curation::curate_dataset;
use scansim::flywheel::{run_flywheel_with, write_report_csv, write_report_json, FlywheelReport};
use scansim::recognizer::{evaluate, EvalSet, RecognizerModel, Task};
use scansim::scanner::{read_raw_jsonl, write_raw_jsonl};
use scansim::world::build_world;

#[derive(Parser)]
#[command(name = "scansim", version, about = "library shelf-scanning flywheel simulator")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (fallback: $SCANSIM_OUT, then config, then ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate catalog.jsonl and world.json.
    Gen,
    /// Run the full flywheel loop and write reports and datasets.
    Run,
    /// Curate an existing raw dataset against a catalog.
    Curate {
        /// Raw dataset (JSON Lines).
        #[arg(long)]
        raw: PathBuf,
        /// Catalog (JSON Lines, as written by `gen`).
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Evaluate a recognizer model file on an eval-set file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        evalset: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Print the summary of an existing run and refresh its CSV.
    Report,
}

enum CliError {
    /// Bad input or configuration; exit 2.
    Input(String),
    /// Failure while running; exit 3.
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    };
    std::process::exit(code);
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Input("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("SCANSIM_OUT").map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let dir = root.join(cfg.run_id());
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn io_runtime<T>(r: std::io::Result<T>, what: &str) -> Result<T, CliError> {
    r.map_err(|e| CliError::Runtime(format!("{what}: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Gen => cmd_gen(&cli),
        Cmd::Run => cmd_run(&cli),
        Cmd::Curate { raw, catalog } => cmd_curate(&cli, raw, catalog),
        Cmd::Eval {
            model,
            evalset,
            trials,
        } => cmd_eval(&cli, model, evalset, *trials),
        Cmd::Report => cmd_report(&cli),
    }
}

fn build_artifacts(cfg: &RunConfig) -> Result<(Catalog, scansim::world::ShelfWorld), CliError> {
    let seed = cfg.seed.expect("validated");
    let catalog = generate_catalog(&cfg.catalog, seed)
        .map_err(|e| CliError::Runtime(format!("catalog generation: {e}")))?;
    let world = build_world(&catalog, &cfg.world, seed)
        .map_err(|e| CliError::Runtime(format!("world construction: {e}")))?;
    Ok((catalog, world))
}

fn cmd_gen(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let dir = run_dir(cli, &cfg)?;
    let (catalog, world) = build_artifacts(&cfg)?;

    let f = io_runtime(File::create(dir.join("catalog.jsonl")), "catalog.jsonl")?;
    catalog
        .write_jsonl(std::io::BufWriter::new(f))
        .map_err(|e| CliError::Runtime(format!("catalog.jsonl: {e}")))?;

    let body = serde_json::to_string_pretty(&world).expect("world serializes");
    io_runtime(
        std::fs::write(dir.join("world.json"), body + "\n"),
        "world.json",
    )?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let dir = run_dir(cli, &cfg)?;
    let (_, world) = build_artifacts(&cfg)?;
    let seed = cfg.seed.expect("validated");

    let raw_dir = dir.join("raw");
    let curated_dir = dir.join("curated");
    io_runtime(std::fs::create_dir_all(&raw_dir), "raw dir")?;
    io_runtime(std::fs::create_dir_all(&curated_dir), "curated dir")?;

    let mut last_t = 0usize;
    let result = run_flywheel_with(
        &world,
        &cfg.recognizer,
        &cfg.deployment,
        &cfg.curation,
        &cfg.flywheel,
        seed,
        |t, raw, curated| {
            last_t = t;
            let mut f = File::create(raw_dir.join(format!("iter_{t}.jsonl")))?;
            write_raw_jsonl(raw, &mut f)?;
            let mut f = File::create(curated_dir.join(format!("iter_{t}.jsonl")))?;
            write_raw_jsonl(&curated.accepted, &mut f)?;
            let rejected: Vec<_> = curated.rejected.iter().map(|(ex, _)| ex.clone()).collect();
            let mut f = File::create(curated_dir.join(format!("rejected_{t}.jsonl")))?;
            write_raw_jsonl(&rejected, &mut f)?;
            Ok(())
        },
    );
    let (report, _) = result.map_err(|e| {
        CliError::Runtime(format!("flywheel failed at iteration {}: {e}", last_t + 1))
    })?;

    write_report_json(&report, &dir.join("report.json"))
        .map_err(|e| CliError::Runtime(format!("report.json: {e}")))?;
    write_report_csv(&report, &dir.join("report.csv"))
        .map_err(|e| CliError::Runtime(format!("report.csv: {e}")))?;
    print_summary(&report);
    println!("{}", dir.display());
    Ok(())
}

fn cmd_curate(cli: &Cli, raw_path: &Path, catalog_path: &Path) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let dir = run_dir(cli, &cfg)?;

    let f = File::open(catalog_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", catalog_path.display())))?;
    let catalog = Catalog::read_jsonl(BufReader::new(f))
        .map_err(|e| CliError::Input(format!("{}: {e}", catalog_path.display())))?;
    let f = File::open(raw_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", raw_path.display())))?;
    let raw = read_raw_jsonl(BufReader::new(f))
        .map_err(|(line, msg)| CliError::Input(format!("{}:{line}: {msg}", raw_path.display())))?;

    // stand-alone curation has no world: infer each window's section from
    // its first parseable predicted call number
    let mut sections = std::collections::BTreeMap::new();
    for ex in &raw {
        let section = ex
            .predicted
            .iter()
            .filter_map(|l| parse_call_number(&l.call_number).ok())
            .find_map(|cn| catalog.section_of(&cn).map(|s| s.id.clone()));
        if let Some(section) = section {
            sections.insert(ex.observation.window.key(), section);
        }
    }
    let out = curate_dataset(&raw, &catalog, &sections, &cfg.curation)
        .map_err(|e| CliError::Runtime(format!("curation: {e}")))?;

    let mut f = io_runtime(File::create(dir.join("curated.jsonl")), "curated.jsonl")?;
    io_runtime(write_raw_jsonl(&out.accepted, &mut f), "curated.jsonl")?;
    let rejected: Vec<_> = out.rejected.iter().map(|(ex, _)| ex.clone()).collect();
    let mut f = io_runtime(File::create(dir.join("rejected.jsonl")), "rejected.jsonl")?;
    io_runtime(write_raw_jsonl(&rejected, &mut f), "rejected.jsonl")?;
    let body = serde_json::to_string_pretty(&out.report).expect("report serializes");
    io_runtime(
        std::fs::write(dir.join("curation_report.json"), body + "\n"),
        "curation_report.json",
    )?;
    println!(
        "raw {} accepted {} rejected {} ratio {:.3}",
        out.report.raw, out.report.accepted, out.report.rejected, out.report.acceptance_ratio
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, model_path: &Path, evalset_path: &Path, trials: usize) -> Result<(), CliError> {
    if trials < 1 {
        return Err(CliError::Input("--trials must be >= 1".into()));
    }
    let cfg = load_config(cli)?;
    let dir = run_dir(cli, &cfg)?;
    let read = |p: &Path| -> Result<String, CliError> {
        std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
    };
    let model: RecognizerModel = serde_json::from_str(&read(model_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let evalset: EvalSet = serde_json::from_str(&read(evalset_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", evalset_path.display())))?;
    if evalset.is_empty() {
        return Err(CliError::Input("eval set is empty".into()));
    }
    let result = evaluate(&model, &evalset, cfg.seed.expect("validated"), trials)
        .map_err(|e| CliError::Runtime(format!("evaluation: {e}")))?;
    let task = match evalset.task() {
        Task::Shelf => "shelf",
        Task::OcrEn => "ocr_en",
        Task::OcrZh => "ocr_zh",
    };
    let line = format!(
        "{{\"task\":\"{task}\",\"mean\":{:.6},\"stderr\":{:.6}}}",
        result.mean, result.stderr
    );
    println!("{line}");
    io_runtime(std::fs::write(dir.join("eval.json"), line + "\n"), "eval.json")?;
    Ok(())
}

fn cmd_report(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let dir = run_dir(cli, &cfg)?;
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("{}: {e} (run `scansim run` first)", path.display())))?;
    let report: FlywheelReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    write_report_csv(&report, &dir.join("report.csv"))
        .map_err(|e| CliError::Runtime(format!("report.csv: {e}")))?;
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &FlywheelReport) {
    let acc = |r: &Option<scansim::recognizer::EvalResult>| {
        r.as_ref()
            .map(|e| format!("{:.3}", e.mean))
            .unwrap_or_else(|| "-".into())
    };
    println!("t  raw  accepted  |D|  shelf  ocr_en  ocr_zh  interventions");
    for row in &report.rows {
        println!(
            "{:<2} {:<4} {:<9} {:<4} {:<6} {:<7} {:<7} {}",
            row.t,
            row.images_raw,
            row.images_accepted,
            row.dataset_size,
            acc(&row.eval.shelf),
            acc(&row.eval.ocr_en),
            acc(&row.eval.ocr_zh),
            row.interventions,
        );
    }
    println!(
        "totals: shelves {} images {} interventions {} hours_saved {:.2}",
        report.totals.shelves,
        report.totals.images,
        report.totals.interventions,
        report.totals.hours_saved
    );
}
