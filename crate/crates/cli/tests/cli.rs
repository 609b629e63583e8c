#![allow(clippy::field_reassign_with_default)]
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use privml_cli::config::{DataConfig, ModelConfig};
use privml_cli::{cmd_audit, params_file, AuditQuery, AuditReport, AuditTarget, RunConfig};
use privml_core::accountant::MomentLedger;
use privml_core::data::BlobConfig;
use privml_core::nn::{predict, KernelMode, ModelSpec};
use privml_core::Tensor;
use serde_json::Value;

fn privml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privml")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut c = RunConfig::default();
    c.model = ModelConfig::Mlp { hidden: vec![8] };
    c.data = DataConfig::Synthetic {
        blobs: BlobConfig {
            examples: 600,
            dim: 5,
            classes: 2,
            separation: 3.0,
            seed: 4,
        },
        test_examples: 200,
    };
    c.privacy.lot_size = 60;
    c.epochs = 3;
    c.output = dir.join("run");
    let path = dir.join("config.json");
    std::fs::write(&path, c.canonical()).unwrap();
    path
}

fn metrics(dir: &Path) -> Vec<Value> {
    std::fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn without_wall_clock(mut m: Vec<Value>) -> Vec<Value> {
    for v in &mut m {
        v.as_object_mut().unwrap().remove("wall_seconds");
    }
    m
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn config_round_trips_through_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    // Compact, differently ordered, optional fields omitted.
    let mut v: Value = serde_json::from_str(&RunConfig::default().canonical()).unwrap();
    v.as_object_mut().unwrap().remove("micro_batch");
    let compact = dir.path().join("compact.json");
    std::fs::write(&compact, v.to_string()).unwrap();
    let out = privml(&["config", "--config", s(&compact)]);
    assert!(out.status.success());
    let canonical = String::from_utf8(out.stdout).unwrap();
    assert_eq!(canonical, RunConfig::parse(&v.to_string()).unwrap().canonical());
    let again = dir.path().join("canonical.json");
    std::fs::write(&again, &canonical).unwrap();
    let out = privml(&["config", "--config", s(&again)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), canonical);
    let out = privml(&["config", "--config", s(&again), "--epochs", "3", "--no-dp", "--transport", "tcp"]);
    let c = RunConfig::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!((c.epochs, c.dp, c.oblivious), (3, false, true));
}

#[test]
fn same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = privml(&["train", "--config", s(&cfg), "--seed", "7", "--output", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ma, mb) = (metrics(&a), metrics(&b));
    assert_eq!(ma.len(), 3);
    assert_eq!(without_wall_clock(ma.clone()), without_wall_clock(mb));
    for (i, m) in ma.iter().enumerate() {
        assert_eq!(m["epoch"], i + 1);
        assert!(m["epsilon_spent"].as_f64().unwrap() <= 4.0);
        for k in ["loss", "test_accuracy", "wall_seconds"] {
            assert!(m[k].is_number());
        }
    }
    assert_eq!(std::fs::read(a.join("params.bin")).unwrap(), std::fs::read(b.join("params.bin")).unwrap());
    let ledger: Value = serde_json::from_str(&std::fs::read_to_string(a.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["steps"], 30);
    assert_eq!(ledger["epsilon_spent"], ma[2]["epsilon_spent"]);
}

#[test]
fn no_dp_reports_infinite_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = privml(&["train", "--config", s(&cfg), "--no-dp"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for m in metrics(&dir.path().join("run")) {
        assert_eq!(m["epsilon_spent"], "inf");
    }
}

#[test]
fn default_run_completes_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("default");
    let o = privml(&["train", "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert_eq!(m.len(), 10);
    assert!(m.windows(2).all(|w| w[0]["epoch"].as_u64() < w[1]["epoch"].as_u64()));
    let last = &m[9];
    assert!(last["epsilon_spent"].as_f64().unwrap() <= 4.0);
    assert!(last["test_accuracy"].as_f64().unwrap() > 0.8);
}

#[test]
fn infeasible_budget_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = privml(&["train", "--config", s(&cfg), "--epsilon", "0.001"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn bad_lot_split_is_rejected() {
    let o = privml(&["train", "--lot-size", "601"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("multiple"));
}

fn audit_json(args: &[&str]) -> Value {
    let mut all = vec!["audit", "--json"];
    all.extend_from_slice(args);
    let o = privml(&all);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn audit_matches_library_bit_for_bit() {
    let v = audit_json(&["--q", "0.01", "--sigma", "4", "--steps", "10000", "--delta", "1e-5"]);
    let lib = cmd_audit(&AuditQuery {
        q: 0.01,
        sigma: 4.0,
        steps: 10_000,
        target: AuditTarget::Delta(1e-5),
        lambda_max: 32,
    })
    .unwrap();
    let AuditReport::Epsilon {
        moments_epsilon,
        linear_epsilon,
        ratio,
        ..
    } = lib
    else {
        panic!()
    };
    let direct = MomentLedger::new(0.01, 4.0, 32).unwrap().with_steps(10_000).eps_for_delta(1e-5).unwrap();
    assert_eq!(moments_epsilon.to_bits(), direct.to_bits());
    assert_eq!(v["moments_epsilon"].as_f64().unwrap().to_bits(), moments_epsilon.to_bits());
    assert_eq!(v["linear_epsilon"].as_f64().unwrap().to_bits(), linear_epsilon.to_bits());
    assert_eq!(v["ratio"].as_f64().unwrap().to_bits(), ratio.to_bits());
    assert!(moments_epsilon <= linear_epsilon);
}

#[test]
fn audit_floor_and_ordering() {
    let v = audit_json(&["--q", "0", "--sigma", "2", "--steps", "100", "--delta", "1e-5"]);
    let floor = -(1e-5f64).ln() / 32.0;
    assert!((v["moments_epsilon"].as_f64().unwrap() - floor).abs() <= 1e-12 * floor);
    for (q, sigma, steps) in [("0.1", "1", "100"), ("0.001", "4", "10000"), ("0.05", "1.5", "1000")] {
        let v = audit_json(&["--q", q, "--sigma", sigma, "--steps", steps, "--delta", "1e-5"]);
        assert!(v["moments_epsilon"].as_f64().unwrap() <= v["linear_epsilon"].as_f64().unwrap());
    }
    let v = audit_json(&["--q", "0.01", "--sigma", "4", "--steps", "10000", "--epsilon", "1"]);
    assert!(v["moments_delta"].as_f64().unwrap() <= v["linear_delta"].as_f64().unwrap());
    let text = privml(&["audit", "--q", "0.01", "--sigma", "4", "--steps", "10", "--delta", "1e-5"]);
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.contains("accounting model: poisson-approx"));
    assert!(text.contains("moments accountant epsilon"));
    assert!(!privml(&["audit", "--q", "2", "--sigma", "1", "--steps", "1", "--delta", "1e-5"]).status.success());
    assert!(!privml(&["audit", "--q", "0.1", "--sigma", "1", "--steps", "1", "--delta", "1.5"]).status.success());
}

fn trained(dir: &Path) -> (PathBuf, ModelSpec) {
    let cfg = small_config(dir);
    let o = privml(&["train", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.join("run");
    let spec: ModelSpec = serde_json::from_str(&std::fs::read_to_string(run.join("model.json")).unwrap()).unwrap();
    (run, spec)
}

fn read_probs(path: &Path) -> Vec<Vec<f32>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn write_rows(path: &Path, rows: &[Vec<f32>]) {
    let text: String = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn predict_matches_library_and_is_batch_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let (run, spec) = trained(dir.path());
    let params = params_file::decode(&std::fs::read(run.join("params.bin")).unwrap(), &spec).unwrap();
    let cfg = RunConfig::load(&dir.path().join("config.json")).unwrap();
    let data = cfg.load_data().unwrap();
    let rows: Vec<Vec<f32>> = (0..32).map(|i| data.test.example(i).0.to_vec()).collect();
    let input = dir.path().join("in.csv");
    let output = dir.path().join("out.csv");
    write_rows(&input, &rows);
    let predict_cli = |input: &Path, output: &Path| {
        let o = privml(&[
            "predict",
            "--model",
            s(&run.join("model.json")),
            "--params",
            s(&run.join("params.bin")),
            "--input",
            s(input),
            "--output",
            s(output),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_probs(output)
    };
    let batch = predict_cli(&input, &output);
    let x = Tensor::new(vec![32, 5], rows.concat()).unwrap();
    let lib = predict(&spec, &params, &x, KernelMode::Oblivious).unwrap();
    for (r, row) in batch.iter().enumerate() {
        assert_eq!(row.as_slice(), lib.row(r));
    }
    let one_in = dir.path().join("one.csv");
    let one_out = dir.path().join("one_out.csv");
    write_rows(&one_in, &rows[5..6]);
    assert_eq!(predict_cli(&one_in, &one_out)[0], batch[5]);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let empty_out = dir.path().join("empty_out.csv");
    assert!(predict_cli(&empty, &empty_out).is_empty());
    assert_eq!(std::fs::read(&empty_out).unwrap().len(), 0);

    write_rows(&input, &[vec![1.0, 2.0, 3.0]]);
    let o = privml(&[
        "predict",
        "--model",
        s(&run.join("model.json")),
        "--params",
        s(&run.join("params.bin")),
        "--input",
        s(&input),
        "--output",
        s(&output),
    ]);
    assert!(!o.status.success());
}

#[test]
fn tcp_transport_matches_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("loop");
    let b = dir.path().join("tcp");
    assert!(privml(&["train", "--config", s(&cfg), "--output", s(&a)]).status.success());
    assert!(privml(&["train", "--config", s(&cfg), "--output", s(&b), "--transport", "tcp"]).status.success());
    assert_eq!(std::fs::read(a.join("params.bin")).unwrap(), std::fs::read(b.join("params.bin")).unwrap());
}

#[test]
fn separate_provider_processes() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_config(dir.path());
    let mut children = Vec::new();
    let mut addrs = Vec::new();
    for id in 0..3 {
        let mut child = Command::new(env!("CARGO_BIN_EXE_privml"))
            .args(["serve", "--config", s(&base), "--provider-id", &id.to_string()])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        addrs.push(line.trim().strip_prefix("listening on ").unwrap().to_string());
        children.push(child);
    }
    let mut c = RunConfig::load(&base).unwrap();
    c.providers.transport = privml_federation::TransportKind::Tcp;
    c.providers.addresses = Some(addrs);
    c.output = dir.path().join("remote");
    let remote_cfg = dir.path().join("remote.json");
    std::fs::write(&remote_cfg, c.canonical()).unwrap();
    let o = privml(&["train", "--config", s(&remote_cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for mut ch in children {
        assert!(ch.wait().unwrap().success());
    }
    let local = dir.path().join("local");
    assert!(privml(&["train", "--config", s(&base), "--output", s(&local)]).status.success());
    assert_eq!(
        std::fs::read(local.join("params.bin")).unwrap(),
        std::fs::read(c.output.join("params.bin")).unwrap()
    );
}
