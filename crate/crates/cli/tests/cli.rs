use std::path::Path;
use std::process::{Command, Output};

fn prosodid(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prosodid"));
    cmd.args(args).env_remove("PROSODID_CACHE").env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Last stderr line parsed as the error record.
fn error_record(o: &Output) -> serde_json::Value {
    let err = stderr(o);
    let line = err.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not a json record ({e}): {err}"))
}

/// Ten short recordings, two speakers per dialect, and fast classifiers.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = format!(
        r#"corpus = "{corpus}"
out = "{out}"
seed = 5
folds = 2
repeats = 1

[synth]
speakers_per_dialect = 2
recordings_per_speaker = 1
recording_secs = 3.0

[hyperparams.knn]
k = 3

[hyperparams.rf]
n_trees = 5

[hyperparams.crf]
max_iter = 15

[hyperparams.lstm]
hidden = 4
epochs = 2
"#,
        corpus = dir.join("corpus").display(),
        out = dir.join("out").display()
    );
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn synth_and_extract(dir: &Path) -> String {
    let cfg = small_config(dir);
    let cfg = cfg.to_str().unwrap().to_string();
    let corpus = dir.join("corpus");
    let o = prosodid(&["synth", "--config", &cfg, "--out", corpus.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = prosodid(&["extract", "--config", &cfg], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    cfg
}

fn json_line(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).lines().last().unwrap()).unwrap()
}

#[test]
fn synth_default_table_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = prosodid(&["synth", "--seed", "9", "--out", d.path().to_str().unwrap()], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        let v = json_line(&o);
        assert_eq!((v["dialects"].as_u64(), v["speakers"].as_u64(), v["recordings"].as_u64()), (Some(5), Some(20), Some(60)));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 121);
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn synth_with_one_speaker_warns_about_folds() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "[synth]\nspeakers_per_dialect = 1\nrecordings_per_speaker = 1\nrecording_secs = 2.0\n").unwrap();
    let out = d.path().join("corpus");
    let o = prosodid(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("1 speakers for 4 folds"), "{}", stderr(&o));
}

#[test]
fn extract_uses_the_cache_and_rekeys_on_frame_changes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = synth_and_extract(d.path());
    let o = prosodid(&["extract", "--config", &cfg], &[]);
    assert!(o.status.success());
    let v = json_line(&o);
    assert_eq!((v["cache_hits"].as_u64(), v["computed"].as_u64()), (Some(10), Some(0)));

    let text = std::fs::read_to_string(&cfg).unwrap() + "\n[extract.front_end.frame]\nwindow_len = 0.03\nhop = 0.01\nsample_rate = 8000\n";
    let cfg2 = d.path().join("cfg2.toml");
    std::fs::write(&cfg2, text).unwrap();
    let o = prosodid(&["extract", "--config", cfg2.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json_line(&o)["computed"].as_u64(), Some(10));
}

#[test]
fn corrupt_wav_fails_only_that_recording() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let corpus = d.path().join("corpus");
    assert!(prosodid(&["synth", "--config", cfg.to_str().unwrap(), "--out", corpus.to_str().unwrap()], &[])
        .status
        .success());
    let victim = corpus.join("d2_s1_r0.wav");
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..1001]).unwrap();
    let o = prosodid(&["extract", "--config", cfg.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let v = json_line(&o);
    assert_eq!((v["computed"].as_u64(), v["failed"].as_u64()), (Some(9), Some(1)));
    let rec = error_record(&o);
    assert_eq!(rec["command"], "extract");
    assert_eq!(rec["failures"][0]["recording"], "d2_s1_r0");
}

#[test]
fn sweep_is_deterministic_and_reproducible_from_the_echoed_config() {
    let d = tempfile::tempdir().unwrap();
    let cfg = synth_and_extract(d.path());
    let out = d.path().join("out");
    let args = ["sweep", "--config", &cfg, "--combo", "EN,F0,ST", "--classifier", "crf", "--context", "on", "--tier", "word"];
    let o = prosodid(&args, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best overall crf: EN+F0+ST over words, context on"), "{}", stdout(&o));
    let first = std::fs::read(out.join("report.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    // two splits plus the aggregate
    assert_eq!(text.lines().count(), 1 + 3);

    let o = prosodid(&args, &[]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("report.csv")).unwrap(), first);

    // the echoed config carries the flag overrides
    let echoed = out.join("config.toml");
    let again = d.path().join("again");
    let o = prosodid(&["sweep", "--config", echoed.to_str().unwrap(), "--out", again.to_str().unwrap()], &[("PROSODID_CACHE", &out.join("cache"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(again.join("report.csv")).unwrap(), first);

    // report re-renders the same summary
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    std::fs::remove_file(out.join("summary.json")).unwrap();
    let o = prosodid(&["report", out.join("report.csv").to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("summary.json")).unwrap(), summary);
}

#[test]
fn full_grid_report_shape() {
    let d = tempfile::tempdir().unwrap();
    let cfg = synth_and_extract(d.path());
    let o = prosodid(&["sweep", "--config", &cfg], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(d.path().join("out/report.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let aggregates = rows.iter().filter(|r| r.contains(",mean,mean,")).count();
    assert_eq!(aggregates, 300);
    assert_eq!(rows.len(), 300 * 2 + 300);
    let out = stdout(&o);
    for kind in ["knn", "svm", "rf", "crf", "lstm"] {
        assert!(out.contains(&format!("best {kind}: ")), "{out}");
    }
}

#[test]
fn sweep_without_cache_fails_with_a_record() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let corpus = d.path().join("corpus");
    assert!(prosodid(&["synth", "--config", cfg.to_str().unwrap(), "--out", corpus.to_str().unwrap()], &[])
        .status
        .success());
    let o = prosodid(&["sweep", "--config", cfg.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    let rec = error_record(&o);
    assert_eq!(rec["command"], "sweep");
    assert!(rec["message"].as_str().unwrap().contains("feature cache missing"), "{rec}");
}

#[test]
fn cache_location_follows_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let cache = d.path().join("elsewhere");
    let corpus = d.path().join("corpus");
    assert!(prosodid(&["synth", "--config", cfg.to_str().unwrap(), "--out", corpus.to_str().unwrap()], &[])
        .status
        .success());
    let o = prosodid(&["extract", "--config", cfg.to_str().unwrap()], &[("PROSODID_CACHE", &cache)]);
    assert!(o.status.success());
    assert!(cache.read_dir().unwrap().count() > 10);
    assert!(!d.path().join("out/cache").exists());
}

#[test]
fn bad_input_gives_one_line_records() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "folds = 4\nfoldz = 3\n").unwrap();
    let o = prosodid(&["extract", "--config", cfg.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(error_record(&o)["message"].as_str().unwrap().contains("unknown field"));

    let o = prosodid(&["sweep", "--classifier", "perceptron"], &[]);
    assert!(!o.status.success());
    assert_eq!(error_record(&o)["error"], "usage");

    let o = prosodid(&["sweep", "--combo", "EN,PITCH"], &[]);
    assert!(!o.status.success());
    assert!(error_record(&o)["message"].as_str().unwrap().contains("PITCH"));
}

#[test]
fn syllabify_writes_tiers() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let corpus = d.path().join("corpus");
    assert!(prosodid(&["synth", "--config", cfg.to_str().unwrap(), "--out", corpus.to_str().unwrap()], &[])
        .status
        .success());
    let wav = corpus.join("d1_s0_r0.wav");
    let out = d.path().join("syl");
    let o = prosodid(&["syllabify", "--out", out.to_str().unwrap(), wav.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("d1_s0_r0.syllables.tsv")).unwrap();
    let n = text.lines().count();
    // about four syllables per second over three seconds of speech
    assert!((5..30).contains(&n), "{n}");
    assert!(text.lines().all(|l| l.split('\t').nth(2) == Some("syllable")));
}
