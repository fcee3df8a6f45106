use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use proactive_ft::fpe::{train_fpe, Fpe, FpeSample};
use proactive_ft::gan::{train_gan, GanModel};
use proactive_ft::harness::{
    collect_fpe_dataset, evaluate_trace, from_jsonl, gradient_suite, load_checkpoint, run_closed_loop, save_checkpoint,
    to_jsonl, Checkpoint, ExperimentConfig, LiveCluster, Models, Phase, Timing, TraceRecord,
};
use proactive_ft::metrics::{any_fault, detection_metrics, DetectionReport, RunReport};

#[derive(Parser)]
#[command(name = "proactive-ft", version, about = "Fault prediction and preemptive migration on a simulated edge cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the baseline scheduler alone and write its trace and report.
    Simulate(Common),
    /// Record encoder training samples from a run without preemption.
    Collect(Common),
    /// Train the fault encoder on collected samples (collecting first if none exist).
    TrainFpe(Common),
    /// Train the migration generator and discriminator against the co-simulator.
    TrainGan(Common),
    /// Closed-loop run with the trained models.
    Run(Common),
    /// Recompute the report of a written trace.
    Evaluate(Common),
    /// Finite-difference check of every gradient.
    GradCheck(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for every input and output file.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Interval count for the command's phase.
    #[arg(long)]
    intervals: Option<usize>,
    /// Mean task arrivals per interval.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Run the baseline without the models.
    #[arg(long)]
    no_preemption: bool,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

const DATASET: &str = "dataset.jsonl";
const FPE_CHECKPOINT: &str = "fpe.json";
const MODEL_CHECKPOINT: &str = "model.json";
const TRACE: &str = "trace.jsonl";

fn config(c: &Common, phase: Option<Phase>) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(l) = c.lambda {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Failure::Usage(format!("--lambda must be a non-negative number, got {l}")));
        }
        cfg.lambda = l;
    }
    if let Some(n) = c.intervals {
        if n == 0 {
            return Err(Failure::Usage("--intervals must be positive".into()));
        }
        match phase {
            Some(Phase::Collect) => cfg.fpe_intervals = n,
            Some(Phase::TrainGan) => cfg.gan_intervals = n,
            Some(Phase::Evaluate) => cfg.eval_intervals = n,
            None => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read(dir: &Path, name: &str) -> anyhow::Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
}

fn simulate(c: &Common) -> Outcome {
    let cfg = config(c, Some(Phase::Evaluate))?;
    let out = run_closed_loop(&cfg, None, cfg.eval_intervals)?;
    write(&c.out, TRACE, &to_jsonl(&out.trace)?)?;
    write(&c.out, "report.json", &json(&out.report)?)?;
    println!("{} intervals, SLO violations {:.4}, energy {:.4} kWh", out.report.intervals, out.report.slo_violation_fraction, out.report.energy_kwh);
    Ok(())
}

fn collect(c: &Common) -> Outcome {
    let cfg = config(c, Some(Phase::Collect))?;
    let (samples, _) = collect_fpe_dataset(&cfg)?;
    write(&c.out, DATASET, &to_jsonl(&samples)?)?;
    let faulty = samples.iter().filter(|s| any_fault(&s.labels)).count();
    println!("{} samples, {faulty} with a fault", samples.len());
    Ok(())
}

fn train_encoder(c: &Common) -> Outcome {
    let cfg = config(c, Some(Phase::Collect))?;
    let samples: Vec<FpeSample> = if c.out.join(DATASET).exists() {
        from_jsonl(&read(&c.out, DATASET)?)?
    } else {
        collect_fpe_dataset(&cfg)?.0
    };
    let mut fpe = Fpe::new(cfg.fpe_config(), cfg.seed)?;
    let (protos, report) = train_fpe(&mut fpe, &samples, &cfg.fpe_train_config())?;
    save_checkpoint(&c.out.join(FPE_CHECKPOINT), &Checkpoint::new(Some(&fpe), Some(&protos), None, None))?;
    write(&c.out, "fpe_report.json", &json(&report)?)?;
    println!("{} epochs, best {}, {} prototype updates", report.epochs_run, report.best_epoch, report.prototype_updates);
    Ok(())
}

fn train_pair(c: &Common) -> Outcome {
    let cfg = config(c, Some(Phase::TrainGan))?;
    let ckpt = load_checkpoint(&c.out.join(FPE_CHECKPOINT)).context("train-fpe must run first")?;
    let fpe = ckpt.fpe()?.ok_or_else(|| anyhow!("{FPE_CHECKPOINT} holds no encoder"))?;
    let mut gan = GanModel::new(cfg.gan_config(), cfg.seed)?;
    let report = train_gan(&fpe, &mut gan, &mut LiveCluster::new(&cfg, Phase::TrainGan)?, &cfg.gan_train_config())?;
    let model = Checkpoint::new(Some(&fpe), ckpt.prototypes.as_ref(), Some(&gan), None);
    save_checkpoint(&c.out.join(MODEL_CHECKPOINT), &model)?;
    write(&c.out, "gan_report.json", &json(&report)?)?;
    println!("{} intervals trained, {} skipped", report.decisions.len(), report.skipped);
    Ok(())
}

fn run(c: &Common) -> Outcome {
    let cfg = config(c, Some(Phase::Evaluate))?;
    let out = if c.no_preemption {
        run_closed_loop(&cfg, None, cfg.eval_intervals)?
    } else {
        let ckpt = load_checkpoint(&c.out.join(MODEL_CHECKPOINT)).context("train-gan must run first")?;
        let fpe = ckpt.fpe()?.ok_or_else(|| anyhow!("{MODEL_CHECKPOINT} holds no encoder"))?;
        let gan = ckpt.gan()?.ok_or_else(|| anyhow!("{MODEL_CHECKPOINT} holds no GAN"))?;
        run_closed_loop(&cfg, Some(Models { fpe: &fpe, gan: &gan }), cfg.eval_intervals)?
    };
    write(&c.out, TRACE, &to_jsonl(&out.trace)?)?;
    write(&c.out, "report.json", &json(&out.report)?)?;
    write(&c.out, "timing.json", &json(&out.timing)?)?;
    println!(
        "{} intervals, SLO violations {:.4}, energy {:.4} kWh, {} migrations",
        out.report.intervals, out.report.slo_violation_fraction, out.report.energy_kwh, out.report.migration_count
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    report: RunReport,
    /// Interval-level fault prediction against the labels, when the trace holds decisions.
    detection: Option<DetectionReport>,
}

fn evaluate(c: &Common) -> Outcome {
    let cfg = config(c, None)?;
    let trace: Vec<TraceRecord> = from_jsonl(&read(&c.out, TRACE)?)?;
    let mut report = evaluate_trace(&trace, &cfg.hosts())?;
    if c.out.join("timing.json").exists() {
        let timing: Timing = serde_json::from_str(&read(&c.out, "timing.json")?)?;
        report.overhead_ratio = timing.overhead_ratio();
    }
    let (pred, truth): (Vec<bool>, Vec<bool>) = trace
        .iter()
        .filter_map(|t| t.decision.as_ref().map(|d| (d.fault_predicted, any_fault(&t.record.labels))))
        .unzip();
    let detection = if pred.is_empty() { None } else { Some(detection_metrics(&pred, &truth)?) };
    let text = json(&Evaluation { report, detection })?;
    write(&c.out, "evaluation.json", &text)?;
    print!("{text}");
    Ok(())
}

fn grad_check(c: &Common) -> Outcome {
    let cfg = config(c, None)?;
    let suite = gradient_suite(cfg.seed)?;
    let mut failed = 0;
    for e in &suite {
        let ok = e.report.passed();
        failed += usize::from(!ok);
        println!("{} {:<36} max rel error {:.2e}", if ok { "ok  " } else { "FAIL" }, e.name, e.report.max_rel_error);
    }
    if failed > 0 {
        return Err(Failure::Data(anyhow!("{failed} of {} gradient checks failed", suite.len())));
    }
    println!("{} checks passed", suite.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Collect(c) => collect(c),
        Command::TrainFpe(c) => train_encoder(c),
        Command::TrainGan(c) => train_pair(c),
        Command::Run(c) => run(c),
        Command::Evaluate(c) => evaluate(c),
        Command::GradCheck(c) => grad_check(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
