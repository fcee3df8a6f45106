//! Acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported but only change the exit status when
//! `ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proactive_ft::fpe::{detect_sequence, train_fpe, Fpe, FpeConfig, FpeTrainConfig};
use proactive_ft::gan::{infer, select_schedule, train_gan, DecisionRecord, GanModel};
use proactive_ft::harness::synthetic::{synthetic_fpe_dataset, SyntheticConfig};
use proactive_ft::harness::{
    collect_fpe_dataset, gan_stream, gradient_suite, run_closed_loop, Driver, ExperimentConfig, LiveCluster, Models,
    Phase,
};
use proactive_ft::metrics::{any_fault, classification_accuracy, detection_metrics, improvement_ratio};
use proactive_ft::sim::{cosimulate, qos_score, FaultRates, MetricsWindow, Schedule, NUM_FEATURES};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gradients() -> Result<Outcome> {
    let start = Instant::now();
    let suite = gradient_suite(0)?;
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = suite.iter().filter(|e| !e.report.passed()).map(|e| e.name).collect();
    let worst = suite.iter().map(|e| e.report.max_rel_error).fold(0.0, f64::max);
    Ok(outcome(
        failed.is_empty() && secs < 60.0,
        format!("{} checks, worst rel error {worst:.2e}, {secs:.1}s, failed {failed:?}", suite.len()),
    ))
}

fn ratio_arithmetic() -> Result<Outcome> {
    let mut records = Vec::new();
    for i in 0..38u64 {
        let d = if i < 30 { [0.4, 0.6] } else { [0.7, 0.3] };
        records.push(DecisionRecord::new(i, d, true, 1));
    }
    // intervals without a predicted fault are not candidates
    for i in 38..50u64 {
        records.push(DecisionRecord::new(i, [0.1, 0.9], false, 0));
    }
    let r = improvement_ratio(&records).context("no candidates")?;
    let rounded = (r * 1e4).round() / 1e4;
    Ok(outcome(rounded == 0.7895, format!("ratio {r:.6}")))
}

fn cosim_equivalence() -> Result<Outcome> {
    let cfg = ExperimentConfig { faults: FaultRates::heavy(), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut driver = Driver::new(&cfg, Phase::Evaluate)?;
    let mut checked = 0;
    let mut mismatches = 0;
    while checked < 100 {
        let p = driver.begin()?;
        let hosts: Vec<usize> = (0..p.baseline.len()).map(|_| rng.random_range(0..cfg.m)).collect();
        let schedule = p.baseline.with_hosts(&hosts)?;
        let w = rng.random_range(0.0..=1.0);
        let snapshot = driver.state.snapshot(&p.arrivals);
        let predicted = cosimulate(&snapshot, &schedule, 1, w)?;
        let record = driver.finish(&schedule, &p.arrivals)?;
        let live = qos_score(&[record], driver.state.env(), w);
        mismatches += usize::from(predicted.to_bits() != live.to_bits());
        checked += 1;
    }
    Ok(outcome(mismatches == 0, format!("{checked} pairs, {mismatches} mismatches")))
}

struct EncoderRun {
    f1: f64,
    accuracy: f64,
    /// Per class: mean distance to own prototype and to the others.
    geometry: Vec<(f64, f64)>,
    epochs: usize,
    secs: f64,
}

fn synthetic_encoder() -> Result<EncoderRun> {
    let start = Instant::now();
    let data = synthetic_fpe_dataset(&SyntheticConfig { seed: 7, ..Default::default() })?;
    let (train, test) = data.split_at(data.len() * 8 / 10);
    let mut model = Fpe::new(FpeConfig::default(), 7)?;
    let (protos, report) = train_fpe(&mut model, train, &FpeTrainConfig { seed: 7, ..Default::default() })?;
    let out = detect_sequence(&model, test)?;
    let pred: Vec<bool> = out.iter().map(|o| o.any_detected()).collect();
    let truth: Vec<bool> = test.iter().map(|s| any_fault(&s.labels)).collect();
    let f1 = detection_metrics(&pred, &truth)?.f1;
    let labels: Vec<_> = test.iter().map(|s| s.labels.clone()).collect();
    let classes: Vec<Vec<u8>> =
        out.iter().map(|o| (0..o.m()).map(|i| protos.classify(o.embeddings.row_slice(i))).collect()).collect();
    let accuracy = classification_accuracy(&classes, &labels)?.unwrap_or(0.0);

    let mut sums = vec![(0.0, 0.0, 0usize); protos.classes()];
    for (o, s) in out.iter().zip(test) {
        for (i, &label) in s.labels.0.iter().enumerate() {
            if label == 0 {
                continue;
            }
            let c = usize::from(label - 1);
            let d = protos.distances(o.embeddings.row_slice(i));
            let other: f64 = d.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| v).sum::<f64>() / (d.len() - 1) as f64;
            sums[c].0 += d[c];
            sums[c].1 += other;
            sums[c].2 += 1;
        }
    }
    let geometry = sums.iter().map(|&(own, other, n)| (own / n.max(1) as f64, other / n.max(1) as f64)).collect();
    Ok(EncoderRun { f1, accuracy, geometry, epochs: report.epochs_run, secs: start.elapsed().as_secs_f64() })
}

fn encoder_training(run: &EncoderRun) -> Outcome {
    outcome(
        run.f1 >= 0.90 && run.accuracy >= 0.90 && run.epochs <= 200 && run.secs < 600.0,
        format!("F1 {:.4}, accuracy {:.4}, {} epochs, {:.1}s", run.f1, run.accuracy, run.epochs, run.secs),
    )
}

fn prototype_geometry(run: &EncoderRun) -> Outcome {
    let pass = !run.geometry.is_empty() && run.geometry.iter().all(|(own, other)| own < other);
    let parts: Vec<String> =
        run.geometry.iter().enumerate().map(|(c, (own, other))| format!("class {} {own:.3}<{other:.3}", c + 1)).collect();
    outcome(pass, parts.join(", "))
}

struct Trained {
    cfg: ExperimentConfig,
    fpe: Fpe,
    gan: GanModel,
}

fn train_system(cfg: &ExperimentConfig) -> Result<Trained> {
    let (samples, _) = collect_fpe_dataset(cfg)?;
    let mut fpe = Fpe::new(cfg.fpe_config(), cfg.seed)?;
    train_fpe(&mut fpe, &samples, &cfg.fpe_train_config())?;
    let mut gan = GanModel::new(cfg.gan_config(), cfg.seed)?;
    train_gan(&fpe, &mut gan, &mut LiveCluster::new(cfg, Phase::TrainGan)?, &cfg.gan_train_config())?;
    Ok(Trained { cfg: cfg.clone(), fpe, gan })
}

fn fidelity(t: &Trained) -> Result<Outcome> {
    // a longer held-out stream, scanned until 100 intervals carry an active fault
    let cfg = ExperimentConfig { eval_intervals: 1000, ..t.cfg.clone() };
    let horizon = cfg.gan_train_config().horizon;
    let mut carry = t.fpe.zero_carry(cfg.m);
    let (mut agree, mut seen, mut migrated) = (0, 0, 0);
    for item in gan_stream(&cfg, Phase::Evaluate)? {
        let it = item?;
        let inf = infer(&t.fpe, &t.gan, &it.window, &it.schedule, &carry, it.interval)?;
        carry = inf.next_carry.clone();
        let faulty = it.snapshot.state.env().faults.severities(cfg.m, it.interval).iter().any(|s| s.iter().any(|v| *v > 0.0));
        if !faulty {
            continue;
        }
        let sim_s = cosimulate(&it.snapshot, &it.schedule, horizon, cfg.qos_weight)?;
        let sim_n = cosimulate(&it.snapshot, &inf.candidate, horizon, cfg.qos_weight)?;
        agree += usize::from((inf.record.d[1] >= inf.record.d[0]) == (sim_n >= sim_s));
        migrated += usize::from(inf.candidate != it.schedule);
        seen += 1;
        if seen == 100 {
            break;
        }
    }
    ensure!(seen == 100, "only {seen} fault intervals in the held-out stream");
    Ok(outcome(agree >= 80, format!("{agree}/{seen} agree, {migrated} candidates migrate")))
}

fn end_to_end(systems: &[Trained]) -> Result<Outcome> {
    let (mut slo_b, mut slo_p, mut e_b, mut e_p) = (0.0, 0.0, 0.0, 0.0);
    for t in systems {
        let base = run_closed_loop(&t.cfg, None, 100)?.report;
        let ours = run_closed_loop(&t.cfg, Some(Models { fpe: &t.fpe, gan: &t.gan }), 100)?.report;
        slo_b += base.slo_violation_fraction;
        slo_p += ours.slo_violation_fraction;
        e_b += base.energy_kwh;
        e_p += ours.energy_kwh;
    }
    let n = systems.len() as f64;
    let (slo_b, slo_p) = (slo_b / n, slo_p / n);
    let energy = e_p / e_b;
    Ok(outcome(
        slo_p <= slo_b && energy <= 1.02,
        format!("SLO {slo_p:.4} vs baseline {slo_b:.4}, energy ratio {energy:.4} over {} seeds", systems.len()),
    ))
}

fn cli_determinism() -> Result<Outcome> {
    let bin = env!("CARGO_BIN_EXE_proactive-ft");
    let root = tempfile::tempdir()?;
    let config = root.path().join("small.toml");
    std::fs::write(
        &config,
        "seed = 3\nfpe_intervals = 40\ngan_intervals = 30\neval_intervals = 15\n\n[fpe_train]\nmax_epochs = 4\n",
    )?;
    let steps: [&[&str]; 8] = [
        &["simulate"],
        &["collect"],
        &["train-fpe"],
        &["train-gan"],
        &["run"],
        &["evaluate"],
        &["run", "--no-preemption", "--lambda", "8"],
        &["grad-check"],
    ];
    let mut dirs = Vec::new();
    for copy in ["a", "b"] {
        let out = root.path().join(copy);
        for args in steps {
            let status = Command::new(bin)
                .args(args)
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .stdout(std::process::Stdio::null())
                .status()?;
            ensure!(status.success(), "{args:?} exited with {status}");
        }
        dirs.push(out);
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])?
        .map(|e| Ok(e?.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_>>()?;
    names.sort();
    // wall-clock times are the only intended difference
    names.retain(|n| n != "timing.json" && n != "evaluation.json");
    let differing: Vec<&String> = names.iter().filter(|n| !same_file(&dirs[0], &dirs[1], n)).collect();
    let eval_same = same_report(&dirs[0], &dirs[1])?;
    Ok(outcome(
        differing.is_empty() && eval_same,
        format!("{} files compared, differing {differing:?}", names.len() + 1),
    ))
}

fn same_file(a: &Path, b: &Path, name: &str) -> bool {
    matches!((std::fs::read(a.join(name)), std::fs::read(b.join(name))), (Ok(x), Ok(y)) if x == y)
}

/// evaluation.json folds in the timing-based overhead, so everything else must match.
fn same_report(a: &Path, b: &Path) -> Result<bool> {
    let load = |d: &Path| -> Result<serde_json::Value> {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("evaluation.json"))?)?;
        v["report"]["overhead_ratio"] = serde_json::Value::Null;
        Ok(v)
    };
    Ok(load(a)? == load(b)?)
}

fn invariants() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mask_bad, mut flagged, mut clear) = (0, 0, 0);
    for pass in 0..1000u64 {
        let m = rng.random_range(2..7);
        let k = rng.random_range(1..4);
        let cfg = FpeConfig { k, n: NUM_FEATURES, ..Default::default() };
        let fpe = Fpe::new(cfg, pass)?;
        let data = (0..k * m * NUM_FEATURES).map(|_| rng.random_range(0.0..1.0)).collect();
        let window = MetricsWindow::from_data(k, m, NUM_FEATURES, data)?;
        let tasks = rng.random_range(0..2 * m);
        let mut s = Schedule::new(m);
        for t in 0..tasks as u64 {
            let host = rng.random_range(0..m);
            let current = if rng.random_bool(0.5) { Some(rng.random_range(0..m)) } else { None };
            s.push(proactive_ft::sim::Assignment { task_id: t, current, host })?;
        }
        let (out, _) = fpe.detect(&window, &s, &fpe.zero_carry(m))?;
        for i in 0..m {
            let zero = out.fault_embedding.row_slice(i).iter().all(|v| *v == 0.0);
            let below = out.scores.at(i, 1) < out.scores.at(i, 0);
            mask_bad += usize::from(zero != below);
            if below {
                clear += 1;
            } else {
                flagged += 1;
            }
        }
    }
    let s = Schedule::new(2);
    let mut n = Schedule::new(2);
    n.push(proactive_ft::sim::Assignment { task_id: 0, current: None, host: 1 })?;
    let mut select_bad = 0;
    for i in 0..1000 {
        let a = rng.random_range(0.0..1.0);
        // every fourth draw sits exactly on the boundary
        let b = if i % 4 == 0 { a } else { rng.random_range(0.0..1.0) };
        let picked = select_schedule([a, b], &s, &n);
        select_bad += usize::from((picked == n) != (b >= a));
    }
    Ok(outcome(
        mask_bad == 0 && select_bad == 0 && flagged > 0 && clear > 0,
        format!("masking errors {mask_bad} ({flagged} flagged, {clear} clear rows), selection errors {select_bad}"),
    ))
}

fn sensitivity() -> Result<Outcome> {
    let mut rows = Vec::new();
    for lambda in [1.0, 5.0, 10.0, 15.0] {
        let t = train_system(&ExperimentConfig { lambda, ..Default::default() })?;
        let out = run_closed_loop(&t.cfg, Some(Models { fpe: &t.fpe, gan: &t.gan }), t.cfg.eval_intervals)?;
        let (pred, truth): (Vec<bool>, Vec<bool>) = out
            .trace
            .iter()
            .filter_map(|r| r.decision.as_ref().map(|d| (d.fault_predicted, any_fault(&r.record.labels))))
            .unzip();
        let f1 = detection_metrics(&pred, &truth)?.f1;
        rows.push((lambda, f1, out.report.slo_violation_fraction));
    }
    let f1_ok = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    let slo_ok = rows.windows(2).all(|w| w[1].2 >= w[0].2);
    let detail: Vec<String> = rows.iter().map(|(l, f, s)| format!("λ={l} F1 {f:.3} SLO {s:.4}")).collect();
    Ok(outcome(f1_ok && slo_ok, detail.join("; ")))
}

fn report(id: usize, name: &str, result: Result<Outcome>, failures: &mut usize) {
    match result {
        Ok(o) => {
            *failures += usize::from(!o.pass);
            println!("criterion {id:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        }
        Err(e) => {
            *failures += 1;
            println!("criterion {id:>2} FAIL {name}: error {e:#}");
        }
    }
}

fn main() {
    let start = Instant::now();
    let mut failures = 0;
    report(1, "gradient suite", gradients(), &mut failures);
    report(2, "improvement ratio arithmetic", ratio_arithmetic(), &mut failures);
    report(3, "co-simulation equivalence", cosim_equivalence(), &mut failures);
    match synthetic_encoder() {
        Ok(run) => {
            report(4, "encoder training", Ok(encoder_training(&run)), &mut failures);
            report(5, "prototype geometry", Ok(prototype_geometry(&run)), &mut failures);
        }
        Err(e) => {
            let msg = format!("{e:#}");
            report(4, "encoder training", Err(anyhow::anyhow!(msg.clone())), &mut failures);
            report(5, "prototype geometry", Err(anyhow::anyhow!(msg)), &mut failures);
        }
    }
    let systems: Result<Vec<Trained>> = (0..5u64)
        .map(|seed| train_system(&ExperimentConfig { seed, faults: FaultRates::heavy(), ..Default::default() }))
        .collect();
    match systems {
        Ok(systems) => {
            report(6, "discriminator fidelity", fidelity(&systems[0]), &mut failures);
            report(7, "end-to-end benefit", end_to_end(&systems), &mut failures);
        }
        Err(e) => {
            let msg = format!("{e:#}");
            report(6, "discriminator fidelity", Err(anyhow::anyhow!(msg.clone())), &mut failures);
            report(7, "end-to-end benefit", Err(anyhow::anyhow!(msg)), &mut failures);
        }
    }
    report(8, "CLI determinism", cli_determinism(), &mut failures);
    report(9, "masking and selection", invariants(), &mut failures);
    report(10, "load sensitivity", sensitivity(), &mut failures);
    println!("{} of 10 criteria passed in {:.0}s", 10 - failures, start.elapsed().as_secs_f64());
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
