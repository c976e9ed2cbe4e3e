use std::path::Path;
use std::process::{Command, Output};

fn fxlstm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxlstm"))
        .current_dir(dir)
        .env_remove("FXLSTM_SEED")
        .args(args)
        .output()
        .expect("spawn fxlstm")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fxlstm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup(dir: &Path) {
    ok(dir, &["--seed", "5", "--out", "d.csv", "gen-data", "--subjects", "2", "--steps", "3"]);
    ok(dir, &["--seed", "5", "--out", "m.json", "gen-model"]);
}

#[test]
fn gen_data_is_seeded_and_has_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    ok(dir.path(), &["--seed", "5", "--out", "e.csv", "gen-data", "--subjects", "2", "--steps", "3"]);
    let a = std::fs::read(dir.path().join("d.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("e.csv")).unwrap());
    assert!(a.starts_with(b"step_id,sample_idx,gx,gy,gz,mag,label\n"));
    let meta = fxlstm::synth::load_meta(&dir.path().join("d.csv.meta.json")).unwrap();
    assert_eq!(meta.channels.len(), 4);
    assert_eq!(meta.spec.seed, 5);
}

#[test]
fn quantize_reports_bits_and_writes_sram() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let s = ok(
        dir.path(),
        &["--format", "json", "--out", "q.json", "quantize", "--model", "m.json", "--preset", "7", "--sram", "s.hex"],
    );
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["parameters"], 2462);
    assert_eq!(v["parameter_bits"], 19696);
    let hex = std::fs::read_to_string(dir.path().join("s.hex")).unwrap();
    assert_eq!(hex.lines().count(), 102);
    // Quantized model reloads and is a fixed point of quantization.
    let q = fxlstm::model_io::load_model(&dir.path().join("q.json")).unwrap();
    assert_eq!(q.metadata["param_format"], "FxP(8,6)");
}

#[test]
fn simulate_matches_software_and_reports_timing() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let s = ok(
        dir.path(),
        &["--out", "sim.csv", "simulate", "--model", "m.json", "--data", "d.csv", "--max-windows", "3", "--check"],
    );
    assert!(s.contains("latency: 0.9624 ms"), "{s}");
    assert!(s.contains("margin: 4.05x"), "{s}");
    assert!(s.contains("mismatches: 0"), "{s}");
    let sim = std::fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    assert_eq!(sim.lines().count(), 4);
    assert!(sim.lines().skip(1).all(|l| l.ends_with(",9624")));

    ok(dir.path(), &["--out", "p.csv", "infer", "--model", "m.json", "--data", "d.csv", "--max-windows", "3"]);
    let sw = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    for (a, b) in sw.lines().zip(sim.lines()).skip(1) {
        assert_eq!(a.split(',').nth(4), b.split(',').nth(4));
    }
}

#[test]
fn validate_sw_sim_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let s = ok(
        dir.path(),
        &[
            "--format", "json", "--out", "v.csv", "validate", "--model", "m.json", "--data", "d.csv", "--max-windows",
            "2", "--preset", "5",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["exact"], true);
    let csv = std::fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert!(csv.starts_with("component,max,avg,count\ngate_preact,0,0,"), "{csv}");
}

#[test]
fn golden_pack_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    // Produce a golden pack from full-precision inference.
    ok(
        dir.path(),
        &["--out", "fp.csv", "infer", "--model", "m.json", "--data", "d.csv", "--max-windows", "4", "--full-precision"],
    );
    let mut rd = csv::Reader::from_path(dir.path().join("fp.csv")).unwrap();
    let rows: Vec<fxlstm::reports::GoldenRow> = rd
        .records()
        .map(|r| {
            let r = r.unwrap();
            fxlstm::reports::GoldenRow {
                window_id: r[0].parse().unwrap(),
                logit_normal: r[5].parse().unwrap(),
                logit_abnormal: r[6].parse().unwrap(),
                cls: r[4].to_string(),
            }
        })
        .collect();
    let mut buf = Vec::new();
    fxlstm::reports::write_golden(&mut buf, &rows).unwrap();
    std::fs::write(dir.path().join("g.csv"), &buf).unwrap();
    let base = ["--out", "v.csv", "validate", "--model", "m.json", "--data", "d.csv", "--max-windows", "4", "--golden"];
    ok(dir.path(), &[&base[..], &["g.csv"]].concat());

    let mut bad = rows;
    bad[1].logit_normal += 1e-3;
    let mut buf = Vec::new();
    fxlstm::reports::write_golden(&mut buf, &bad).unwrap();
    std::fs::write(dir.path().join("bad.csv"), &buf).unwrap();
    let out = fxlstm(dir.path(), &[&base[..], &["bad.csv"]].concat());
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn trace_has_one_row_per_cycle() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    ok(dir.path(), &["--out", "t.csv", "trace", "--model", "m.json", "--data", "d.csv"]);
    let t = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 9625);
    assert_eq!(lines[0], "cycle,phase,sram_addr,writes,overflow_count");
    assert!(lines[1].starts_with("0,lstm t=0 cell=0 gate=i,0,pre_i[0],"));
    assert!(lines[9624].starts_with("9623,fc2 store,,cls="));
}

#[test]
fn sweep_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let args = |out: &'static str, workers: &'static str| {
        vec![
            "--workers", workers, "--out", out, "sweep", "--bench", "m.json:d.csv", "--max-windows", "3", "--params",
            "FxP(10,8);FxP(8,4)", "--ops", "FxP(13,9);FxP(11,8)",
        ]
    };
    ok(dir.path(), &args("a.csv", "1"));
    ok(dir.path(), &args("b.csv", "3"));
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn act_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(dir.path(), &["act-table", "--kind", "sigmoid", "--lo", "-1", "--hi", "1", "--step", "0.5"]);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "x,approx,quantized,exact,abs_error");
    assert_eq!(lines.len(), 6);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let code = |args: &[&str]| fxlstm(dir.path(), args).status.code();
    assert_eq!(code(&["infer", "--bogus"]), Some(2));
    assert_eq!(code(&["quantize", "--preset", "9"]), Some(2));
    assert_eq!(code(&["quantize", "--preset", "1", "--param", "FxP(10,8)"]), Some(2));
    assert_eq!(code(&["infer", "--model", "missing.json"]), Some(5));

    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    v["tensors"]["fc1.b"].as_array_mut().unwrap().pop();
    std::fs::write(dir.path().join("short.json"), v.to_string()).unwrap();
    let out = fxlstm(dir.path(), &["infer", "--model", "short.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fc1.b"));

    std::fs::write(dir.path().join("bad.csv"), "step_id,sample_idx,gx,gy,gz,mag,label\n1,1,0,0,0,0,normal\n").unwrap();
    assert_eq!(code(&["infer", "--model", "m.json", "--data", "bad.csv"]), Some(3));
}
