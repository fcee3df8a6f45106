use std::process::Command;

use proactive_ft::fpe::{train_fpe, Fpe};
use proactive_ft::gan::{train_gan, GanModel, Replay};
use proactive_ft::harness::{
    collect_fpe_dataset, gan_stream, load_checkpoint, run_closed_loop, save_checkpoint, Checkpoint, ExperimentConfig,
    Models, Phase,
};
use proactive_ft::sim::FaultRates;

fn small(m: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { m, fpe_intervals: 60, gan_intervals: 40, eval_intervals: 30, faults: FaultRates::heavy(), ..Default::default() };
    cfg.fpe_train.max_epochs = 5;
    cfg
}

fn trained(cfg: &ExperimentConfig) -> (Fpe, GanModel) {
    let (samples, _) = collect_fpe_dataset(cfg).unwrap();
    let mut fpe = Fpe::new(cfg.fpe_config(), cfg.seed).unwrap();
    train_fpe(&mut fpe, &samples, &cfg.fpe_train_config()).unwrap();
    let mut gan = GanModel::new(cfg.gan_config(), cfg.seed).unwrap();
    let mut stream = Replay(gan_stream(cfg, Phase::TrainGan).unwrap());
    train_gan(&fpe, &mut gan, &mut stream, &cfg.gan_train_config()).unwrap();
    (fpe, gan)
}

#[test]
fn closed_loop_is_reproducible_and_executable() {
    let cfg = small(6);
    let (fpe, gan) = trained(&cfg);
    let a = run_closed_loop(&cfg, Some(Models { fpe: &fpe, gan: &gan }), cfg.eval_intervals).unwrap();
    let b = run_closed_loop(&cfg, Some(Models { fpe: &fpe, gan: &gan }), cfg.eval_intervals).unwrap();
    assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    for t in &a.trace {
        let mut ids: Vec<u64> = t.schedule.rows().iter().map(|r| r.task_id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), t.schedule.len());
        for row in t.schedule.one_hot_rows() {
            assert_eq!(row.iter().filter(|v| **v == 1).count(), 1);
            assert_eq!(row.len(), cfg.m);
        }
        let d = t.decision.as_ref().unwrap();
        assert_eq!(d.chose_new, d.d[1] >= d.d[0]);
    }
}

#[test]
fn checkpoint_trained_on_eight_hosts_runs_on_sixteen() {
    let cfg = small(8);
    let (fpe, gan) = trained(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &Checkpoint::new(Some(&fpe), None, Some(&gan), None)).unwrap();
    let ckpt = load_checkpoint(&path).unwrap();
    let (fpe2, gan2) = (ckpt.fpe().unwrap().unwrap(), ckpt.gan().unwrap().unwrap());
    assert_eq!(Checkpoint::new(Some(&fpe2), None, Some(&gan2), None).to_json().unwrap(), ckpt.to_json().unwrap());

    let large = ExperimentConfig { m: 16, ..cfg };
    let out = run_closed_loop(&large, Some(Models { fpe: &fpe2, gan: &gan2 }), 10).unwrap();
    assert_eq!(out.trace.len(), 10);
    assert!(out.trace.iter().all(|t| t.schedule.m() == 16));
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_proactive-ft"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap()
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["launch"]), 1);
    assert_eq!(cli(&["simulate", "--intervals", "0", "--out", out]), 1);
    assert_eq!(cli(&["simulate", "--lambda", "-2", "--out", out]), 1);
    assert_eq!(cli(&["simulate", "--seed", "abc", "--out", out]), 1);
    // inputs that are missing or malformed are data errors
    assert_eq!(cli(&["train-gan", "--out", out]), 2);
    assert_eq!(cli(&["evaluate", "--out", out]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "m = \"many\"\n").unwrap();
    assert_eq!(cli(&["simulate", "--config", bad.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(cli(&["simulate", "--intervals", "3", "--out", out]), 0);
    std::fs::write(dir.path().join("trace.jsonl"), "{not json\n").unwrap();
    assert_eq!(cli(&["evaluate", "--out", out]), 2);
}

#[test]
fn cli_simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(cli(&["simulate", "--intervals", "12", "--seed", "4", "--lambda", "7", "--out", d.to_str().unwrap()]), 0);
    }
    for name in ["trace.jsonl", "report.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}
