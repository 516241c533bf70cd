//! Batch command-line driver: dataset generation, training, inference, and
//! evaluation, each replayable from its emitted config.

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use simpcnn::dataset::{self, Dataset};
use simpcnn::metrics;
use simpcnn::network::{build_model, load_checkpoint, save_checkpoint, train, TrainConfig};
use simpcnn::simp::Preset;
use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "simpcnn", version, about = "Topology-optimization surrogate toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 1 (the default) keeps all outputs bitwise reproducible
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// key=value file supplying defaults that explicit flags override
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print progress notes to stderr (repeat for more)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an optimized-topology dataset over a volume-fraction sweep
    GenData(GenDataArgs),
    /// Train the surrogate on a dataset directory
    Train(TrainArgs),
    /// Predict one topology from a volume fraction or an input image
    Infer(InferArgs),
    /// Score a checkpoint against solver ground truth
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// mid-load | cantilever-center | cantilever-end
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    vf_start: Option<f64>,
    #[arg(long)]
    vf_end: Option<f64>,
    #[arg(long)]
    vf_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep going when individual solves fail; exit 2 if any did
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by gen-data
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    adaptive_n: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the trained model
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Encoder channel widths as c1,c2,c3
    #[arg(long)]
    widths: Option<String>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Synthesize the input image at this volume fraction
    #[arg(long)]
    vf: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Read the input image from a file instead (PGM or 8-bit PNG)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output prediction image path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// mid-load | cantilever-center | cantilever-end
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated volume fractions, e.g. 0.1,0.25,0.5
    #[arg(long)]
    vf_list: Option<String>,
    /// Output CSV path
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for input|prediction|target strips, one per V_f
    #[arg(long)]
    triptych: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail (exit 1) if any V_err exceeds this percentage
    #[arg(long)]
    max_verr: Option<f64>,
    /// Fail (exit 1) if any C_err exceeds this percentage
    #[arg(long)]
    max_cerr: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not failures; everything else is usage.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = load_config(cli.config.as_deref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("rayon pool already initialized")?;
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args, &cfg, cli.threads, cli.verbose),
        Command::Train(args) => cmd_train(args, &cfg, cli.threads, cli.verbose),
        Command::Infer(args) => cmd_infer(args, &cfg, cli.threads),
        Command::Eval(args) => cmd_eval(args, &cfg, cli.threads, cli.verbose),
    }
}

/// Parses a key=value config file; '#' starts a comment line.
fn load_config(path: Option<&Path>) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    let Some(path) = path else {
        return Ok(map);
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag value, else config-file value, else the built-in default.
fn resolve<T>(flag: Option<T>, cfg: &HashMap<String, String>, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(v) => Ok(v),
        None => match cfg.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("config key {key}={raw}: {e}")),
            None => Ok(default),
        },
    }
}

/// Flag value or config-file value; required.
fn resolve_required<T>(flag: Option<T>, cfg: &HashMap<String, String>, key: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(v) => Ok(v),
        None => match cfg.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("config key {key}={raw}: {e}")),
            None => bail!("missing required --{}", key.replace('_', "-")),
        },
    }
}

fn parse_problem(name: &str) -> Result<Preset> {
    match name {
        "mid-load" => Ok(Preset::MidLoad),
        "cantilever-center" => Ok(Preset::CantileverCenterLoad),
        "cantilever-end" => Ok(Preset::CantileverEndLoad),
        other => bail!("unknown problem {other:?} (mid-load, cantilever-center, cantilever-end)"),
    }
}

fn problem_name(p: Preset) -> &'static str {
    match p {
        Preset::MidLoad => "mid-load",
        Preset::CantileverCenterLoad => "cantilever-center",
        Preset::CantileverEndLoad => "cantilever-end",
        Preset::Custom => "custom",
    }
}

fn parse_widths(raw: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> = raw
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .with_context(|| format!("widths {raw:?} must be three comma-separated integers"))?;
    let [c1, c2, c3] = parts[..] else {
        bail!("widths {raw:?} must have exactly three entries");
    };
    Ok((c1, c2, c3))
}

fn parse_vf_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| anyhow!("vf-list entry {p:?}: {e}"))
        })
        .collect()
}

fn cmd_gen_data(
    args: GenDataArgs,
    cfg: &HashMap<String, String>,
    threads: usize,
    verbose: u8,
) -> Result<u8> {
    let problem_raw = resolve(args.problem, cfg, "problem", "mid-load".to_string())?;
    let problem = parse_problem(&problem_raw)?;
    let nx = resolve(args.nx, cfg, "nx", 100)?;
    let ny = resolve(args.ny, cfg, "ny", 100)?;
    let vf_start = resolve(args.vf_start, cfg, "vf_start", 0.01)?;
    let vf_end = resolve(args.vf_end, cfg, "vf_end", 0.95)?;
    let vf_step = resolve(args.vf_step, cfg, "vf_step", 0.01)?;
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let out: PathBuf = resolve_required(args.out, cfg, "out")?;
    let allow_partial = args.allow_partial || cfg.get("allow_partial").map(String::as_str) == Some("true");

    println!(
        "{}",
        serde_json::json!({
            "command": "gen-data",
            "problem": problem_name(problem),
            "nx": nx, "ny": ny,
            "vf_start": vf_start, "vf_end": vf_end, "vf_step": vf_step,
            "seed": seed,
            "out": out.display().to_string(),
            "allow_partial": allow_partial,
            "threads": threads,
        })
    );

    let outcome = dataset::generate_dataset(problem, nx, ny, vf_start, vf_end, vf_step, seed)?;
    for failure in &outcome.failures {
        let mut msg = failure.error.to_string();
        let mut cause = std::error::Error::source(&failure.error);
        while let Some(c) = cause {
            msg.push_str(&format!(": {c}"));
            cause = c.source();
        }
        eprintln!("vf {:.4} failed: {msg}", failure.volfrac);
    }
    if !outcome.failures.is_empty() && !allow_partial {
        bail!(
            "{} of {} solves failed; rerun with --allow-partial to keep the rest",
            outcome.failures.len(),
            outcome.failures.len() + outcome.dataset.samples.len()
        );
    }
    dataset::write_dataset(&outcome.dataset, &out)?;
    if verbose > 0 {
        eprintln!(
            "wrote {} sample pairs to {}",
            outcome.dataset.samples.len(),
            out.display()
        );
    }
    Ok(if outcome.failures.is_empty() { 0 } else { 2 })
}

fn cmd_train(
    args: TrainArgs,
    cfg: &HashMap<String, String>,
    threads: usize,
    verbose: u8,
) -> Result<u8> {
    let data: PathBuf = resolve_required(args.data, cfg, "data")?;
    let adaptive_n = resolve(args.adaptive_n, cfg, "adaptive_n", 0)?;
    let epochs = resolve(args.epochs, cfg, "epochs", 2000)?;
    let batch = resolve(args.batch, cfg, "batch", 32)?;
    let lr = resolve(args.lr, cfg, "lr", 1e-3)?;
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let checkpoint: PathBuf = resolve_required(args.checkpoint, cfg, "checkpoint")?;
    let widths_raw = resolve(args.widths, cfg, "widths", "128,256,512".to_string())?;
    let widths = parse_widths(&widths_raw)?;

    println!(
        "{}",
        serde_json::json!({
            "command": "train",
            "data": data.display().to_string(),
            "adaptive_n": adaptive_n,
            "epochs": epochs, "batch": batch, "lr": lr, "seed": seed,
            "checkpoint": checkpoint.display().to_string(),
            "widths": format!("{},{},{}", widths.0, widths.1, widths.2),
            "threads": threads,
        })
    );

    let ds = dataset::load_dataset(&data)?;
    if ds.nx != ds.ny {
        bail!("training needs square images, {} holds {}x{}", data.display(), ds.nx, ds.ny);
    }
    let (inputs, targets) = dataset::pack_tensors(&ds);
    let mut model = build_model(adaptive_n, ds.nx, widths, seed)?;
    if verbose > 0 {
        eprintln!("{}", model.summary());
        eprintln!("training on {} samples", ds.samples.len());
    }
    let log = train(
        &mut model,
        &inputs,
        &targets,
        &TrainConfig {
            epochs,
            batch_size: batch,
            lr,
            seed,
            shuffle: true,
        },
    )?;
    save_checkpoint(&model, None, &checkpoint)?;
    let loss_csv = checkpoint.with_extension("loss.csv");
    log.write_csv(&loss_csv)?;
    if let (Some(first), Some(last)) = (log.epoch_losses.first(), log.epoch_losses.last()) {
        println!("epochs {} first-loss {first} final-loss {last}", log.epoch_losses.len());
    } else {
        println!("epochs 0");
    }
    if verbose > 0 {
        eprintln!(
            "checkpoint {} loss-log {}",
            checkpoint.display(),
            loss_csv.display()
        );
    }
    Ok(0)
}

fn cmd_infer(args: InferArgs, cfg: &HashMap<String, String>, threads: usize) -> Result<u8> {
    let checkpoint: PathBuf = resolve_required(args.checkpoint, cfg, "checkpoint")?;
    let vf = resolve(args.vf, cfg, "vf", f64::NAN)?;
    let vf = vf.is_finite().then_some(vf);
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let input: Option<PathBuf> = match args.input {
        some @ Some(_) => some,
        None => cfg.get("input").map(PathBuf::from),
    };
    let out: PathBuf = resolve_required(args.out, cfg, "out")?;
    if vf.is_some() == input.is_some() {
        bail!("give exactly one of --vf or --input");
    }

    println!(
        "{}",
        serde_json::json!({
            "command": "infer",
            "checkpoint": checkpoint.display().to_string(),
            "vf": vf,
            "seed": seed,
            "input": input.as_ref().map(|p| p.display().to_string()),
            "out": out.display().to_string(),
            "threads": threads,
        })
    );

    let (model, _) = load_checkpoint(&checkpoint)?;
    let field = match (vf, input) {
        (Some(vf), None) => {
            let side = model
                .input_side()
                .ok_or_else(|| anyhow!("model does not expose a square input image"))?;
            dataset::gen_input_image(vf, side, side, seed)?
        }
        (None, Some(path)) => dataset::read_field_image(&path)?,
        _ => unreachable!("exclusivity checked above"),
    };
    let pred = model.predict(&dataset::field_to_tensor(&field))?;
    let pred_field = dataset::field_from_tensor(&pred, 0)?;
    dataset::write_field_pgm(&out, &pred_field)?;
    println!("prediction {}x{} mean {:.4} -> {}", pred_field.nx, pred_field.ny, pred_field.mean(), out.display());
    Ok(0)
}

fn cmd_eval(
    args: EvalArgs,
    cfg: &HashMap<String, String>,
    threads: usize,
    verbose: u8,
) -> Result<u8> {
    let checkpoint: PathBuf = resolve_required(args.checkpoint, cfg, "checkpoint")?;
    let data: PathBuf = resolve_required(args.data, cfg, "data")?;
    let problem_raw = resolve(args.problem, cfg, "problem", "mid-load".to_string())?;
    let problem = parse_problem(&problem_raw)?;
    let vf_raw: String = resolve_required(args.vf_list, cfg, "vf_list")?;
    let vfs = parse_vf_list(&vf_raw)?;
    let report: PathBuf = resolve_required(args.report, cfg, "report")?;
    let triptych_dir: Option<PathBuf> = match args.triptych {
        some @ Some(_) => some,
        None => cfg.get("triptych").map(PathBuf::from),
    };
    let seed = resolve(args.seed, cfg, "seed", 0)?;
    let max_verr = resolve(args.max_verr, cfg, "max_verr", f64::NAN)?;
    let max_verr = max_verr.is_finite().then_some(max_verr);
    let max_cerr = resolve(args.max_cerr, cfg, "max_cerr", f64::NAN)?;
    let max_cerr = max_cerr.is_finite().then_some(max_cerr);

    println!(
        "{}",
        serde_json::json!({
            "command": "eval",
            "checkpoint": checkpoint.display().to_string(),
            "data": data.display().to_string(),
            "problem": problem_name(problem),
            "vf_list": vf_raw,
            "report": report.display().to_string(),
            "triptych": triptych_dir.as_ref().map(|p| p.display().to_string()),
            "seed": seed,
            "max_verr": max_verr,
            "max_cerr": max_cerr,
            "threads": threads,
        })
    );

    let (model, _) = load_checkpoint(&checkpoint)?;
    let ds: Dataset = dataset::load_dataset(&data)?;
    let tag = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    let pairs =
        metrics::evaluate_model_with_images(&model, problem, &vfs, Some(&ds), seed, &tag)?;
    let records: Vec<_> = pairs.iter().map(|(r, _)| r.clone()).collect();
    metrics::write_report(&records, &report)?;

    if let Some(dir) = &triptych_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        for (record, images) in &pairs {
            let name = format!("triptych_vf_{:04}.pgm", (record.volfrac * 10_000.0).round());
            dataset::write_field_pgm(&dir.join(name), &metrics::triptych(images))?;
        }
    }

    let mut failed = false;
    for r in &records {
        let v_ok = max_verr.is_none_or(|m| r.v_err <= m);
        let c_ok = max_cerr.is_none_or(|m| r.c_err <= m);
        failed |= !(v_ok && c_ok);
        println!(
            "vf {:.4}: v_err {:.3}% c_err {:.3}%{}",
            r.volfrac,
            r.v_err,
            r.c_err,
            if v_ok && c_ok { "" } else { "  FAIL" }
        );
    }
    if verbose > 0 {
        if let Some(reference) = metrics::reference_for(problem) {
            eprintln!("published 100x100 reference (vf, v_err%, c_err%):");
            for (vf, v, c) in reference {
                eprintln!("  {vf:.2}  {v}  {c}");
            }
        }
    }
    if failed {
        println!("FAIL: errors above configured thresholds");
        return Ok(1);
    }
    println!("report -> {}", report.display());
    Ok(0)
}
