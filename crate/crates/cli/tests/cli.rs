use std::path::Path;
use std::process::{Command, Output};

fn advqec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advqec"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ADVQEC_CONFIG")
        .output()
        .expect("spawn advqec")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&advqec(&["gen-data", "--mode", "rep-code", "--n", "1000", "--seed", "1", "--out", out], dir.path()));
    }
    let a = std::fs::read(dir.path().join("a/dataset.synd")).unwrap();
    let b = std::fs::read(dir.path().join("b/dataset.synd")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 1001);

    let m = json(&dir.path().join("a/gen-data.manifest.json"));
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config"]["n"], 1000);
    assert_eq!(m["outputs"][0], "dataset.synd");
    assert!(m["version"].is_string() && m["stage_seed"].is_u64());
}

#[test]
fn attack_without_decoder_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = advqec(&["attack", "--data", "x.synd", "--actor", "a.json"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--decoder") && err.contains("Usage"), "{err}");
}

#[test]
fn flags_override_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 5\nn = 300\np = 0.1\nepochs = 7\n").unwrap();
    ok(&advqec(&["gen-data", "--config", "run.toml", "--n", "200", "--out", "o"], dir.path()));
    let cfg = &json(&dir.path().join("o/gen-data.manifest.json"))["config"];
    assert_eq!(cfg["n"], 200); // flag
    assert_eq!(cfg["seed"], 5); // file
    assert_eq!(cfg["p"], 0.1); // file
    assert_eq!(cfg["epochs"], 7); // file
    assert_eq!(cfg["q"], 0.05); // default
    assert_eq!(cfg["out"], "o");

    // the config path may also come from the environment
    let out = Command::new(env!("CARGO_BIN_EXE_advqec"))
        .args(["gen-data", "--out", "e"])
        .current_dir(dir.path())
        .env("ADVQEC_CONFIG", "run.toml")
        .output()
        .unwrap();
    ok(&out);
    let m = json(&dir.path().join("e/gen-data.manifest.json"));
    assert_eq!(m["config"]["n"], 300);
    assert!(m["inputs"]["config"]["sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn failures_print_one_machine_parsable_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = advqec(&["gen-data", "--p", "0.9", "--out", "o"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=config msg="), "{err}");

    let out = advqec(&["train-decoder", "--data", "missing.synd", "--out", "o"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=io"));

    std::fs::write(dir.path().join("bad.toml"), "nonsense = 1\n").unwrap();
    let out = advqec(&["gen-data", "--config", "bad.toml"], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=config"));
}

#[test]
fn checkpoint_version_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&advqec(&["gen-data", "--n", "400", "--out", "data"], d));
    ok(&advqec(&["train-decoder", "--data", "data/dataset.synd", "--epochs", "1", "--hidden-dim", "4", "--mlp-hidden", "4", "--out", "dec"], d));
    let text = std::fs::read_to_string(d.join("dec/decoder.json")).unwrap();
    std::fs::write(d.join("v2.json"), text.replace("\"version\":1", "\"version\":2")).unwrap();
    let out = advqec(&["bayes", "--data", "data/dataset.synd", "--decoder", "v2.json", "--out", "b"], d);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success());
    assert!(err.starts_with("error: kind=checkpoint") && err.contains("version"), "{err}");
}

#[test]
fn import_01_maps_columns_to_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dets = "00000000\n10000001\n01000000\n00110000\n";
    std::fs::write(d.join("dets.01"), dets.repeat(25)).unwrap();
    std::fs::write(d.join("obs.01"), "0\n1\n0\n0\n".repeat(25)).unwrap();
    let stdout = ok(&advqec(&["import-01", "--dets", "dets.01", "--obs", "obs.01", "--out", "imp"], d));
    assert!(stdout.contains("100 records (4 nodes x 2 rounds)"), "{stdout}");
    let text = std::fs::read_to_string(d.join("imp/dataset.synd")).unwrap();
    assert!(text.starts_with("synd v1 ns=4 t=2"));
    // detector d lands at (d mod 4, d div 4): column 7 is node 3, round 1
    assert!(text.lines().nth(2).unwrap().starts_with("10000001"));
}

#[test]
fn full_pipeline_halves_the_attack_success_rate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "seed = 3\nn = 3000\nepisodes = 1000\n").unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "run.toml"];
        all.extend_from_slice(args);
        ok(&advqec(&all, d))
    };
    run(&["gen-data", "--out", "data"]);
    run(&["train-decoder", "--data", "data/dataset.synd", "--out", "dec"]);
    run(&["train-adversary", "--data", "data/dataset.synd", "--decoder", "dec/decoder.json", "--out", "adv"]);
    run(&["attack", "--data", "data/dataset.synd", "--decoder", "dec/decoder.json", "--actor", "adv/actor.json", "--out", "before"]);
    run(&["harden", "--data", "data/dataset.synd", "--decoder", "dec/decoder.json", "--actor", "adv/actor.json", "--out", "hard"]);
    run(&["attack", "--data", "data/dataset.synd", "--decoder", "hard/decoder.json", "--actor", "adv/actor.json", "--out", "after"]);
    run(&["compare", "--before", "before/attack.json", "--after", "after/attack.json", "--out", "cmp"]);

    let summary = json(&d.join("cmp/compare.json"));
    let ratio = summary["ratio"].as_f64().expect("defined ratio");
    assert!(ratio <= 0.5, "ASR ratio {ratio}");
    for key in ["asr_before", "asr_after", "argmax_before", "argmax_after", "heatmap_delta"] {
        assert!(!summary[key].is_null(), "missing {key}");
    }

    let curves = std::fs::read_to_string(d.join("hard/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 11);
    assert!(curves.starts_with("epoch,loss,test_accuracy\n"));
    let svg = std::fs::read_to_string(d.join("before/heatmap.svg")).unwrap();
    assert!(svg.contains("Node") && svg.contains("Time"));

    // every output directory carries a manifest whose input digests match
    let m = json(&d.join("hard/harden.manifest.json"));
    let digest = m["inputs"]["decoder"]["sha256"].as_str().unwrap().to_string();
    let again = Command::new("sha256sum").arg(d.join("dec/decoder.json")).output();
    if let Ok(out) = again {
        assert!(String::from_utf8_lossy(&out.stdout).starts_with(&digest));
    }
    let ckpt = json(&d.join("hard/decoder.json"));
    assert_eq!(ckpt["provenance"]["actor"], "adv/actor.json");
}
