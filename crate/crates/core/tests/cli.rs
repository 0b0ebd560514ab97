use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn twinfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinfuse"))
        .args(args)
        .env("TWINFUSE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_BANK: [&str; 4] = ["--set", "ear.n_orientations=2", "--set", "ear.n_scales=2"];

struct Cohort {
    _dir: tempfile::TempDir,
    cohort: String,
    manifest: String,
    store: String,
}

fn small_cohort(pairs: &str) -> Cohort {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort").display().to_string();
    let manifest = dir.path().join("cohort/manifest.csv").display().to_string();
    let store = dir.path().join("store").display().to_string();
    let o = twinfuse(&["synth", "--seed", "3", "--pairs", pairs, "--out", &cohort]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    Cohort {
        _dir: dir,
        cohort,
        manifest,
        store,
    }
}

fn stage(c: &Cohort, cmd: &[&str]) -> Output {
    let mut args: Vec<&str> = cmd.to_vec();
    args.extend(["--manifest", &c.manifest, "--store", &c.store]);
    args.extend(SMALL_BANK);
    twinfuse(&args)
}

#[test]
fn help_documents_every_command() {
    let o = twinfuse(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["synth", "extract", "match", "evaluate"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    for (cmd, flags) in [
        (
            "synth",
            &["--seed", "--pairs", "--out", "--twin-gap", "--config"][..],
        ),
        ("extract", &["--modality", "--config"][..]),
        ("match", &["--config", "--store"][..]),
        (
            "evaluate",
            &["--w-speech", "--w-ear", "--normalization", "--out"][..],
        ),
    ] {
        let o = twinfuse(&[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&twinfuse(&["synth", "--pairs", "0"])), 2);
    assert_eq!(code(&twinfuse(&["extract", "--bogus"])), 2);
    assert_eq!(code(&twinfuse(&["frobnicate"])), 2);
    assert_eq!(code(&twinfuse(&["extract", "--modality", "nose"])), 2);
    assert_eq!(code(&twinfuse(&["evaluate", "--w-speech", "0.5"])), 2);
    assert_eq!(
        code(&twinfuse(&["evaluate", "--normalization", "zscore"])),
        2
    );
    assert_eq!(code(&twinfuse(&["match", "--set", "speech.nope=1"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "speech.n_ceps = thirteen\n").unwrap();
    assert_eq!(
        code(&twinfuse(&["match", "--config", cfg.to_str().unwrap()])),
        2
    );
    let missing = dir.path().join("absent.cfg");
    assert_eq!(
        code(&twinfuse(&["match", "--config", missing.to_str().unwrap()])),
        2
    );
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = small_cohort("2");
    let b = small_cohort("2");
    let manifest = fs::read_to_string(&a.manifest).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 4);
    for entry in fs::read_dir(Path::new(&a.cohort).join("audio")).unwrap() {
        let p = entry.unwrap().path();
        let other = Path::new(&b.cohort)
            .join("audio")
            .join(p.file_name().unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap());
    }
    assert_eq!(manifest, fs::read_to_string(&b.manifest).unwrap());
}

#[test]
fn missing_audio_names_the_path() {
    let c = small_cohort("2");
    // parsing the manifest already checks that every file exists
    let victim = Path::new(&c.cohort).join("audio/s000a_test.wav");
    fs::remove_file(&victim).unwrap();
    let o = stage(&c, &["extract", "--modality", "speech"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("s000a_test.wav"), "{}", stderr(&o));
}

#[test]
fn corrupt_audio_names_the_path() {
    let c = small_cohort("2");
    let victim = Path::new(&c.cohort).join("audio/s001b_train2.wav");
    fs::write(&victim, b"not a wav file").unwrap();
    let o = stage(&c, &["extract", "--modality", "speech"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("s001b_train2.wav"), "{}", stderr(&o));
}

#[test]
fn full_pipeline_small_cohort() {
    let c = small_cohort("3");
    let o = stage(&c, &["match"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("s000a_speech_train1"), "{}", stderr(&o));

    let o = stage(&c, &["extract"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(
        out.contains("18 MFCC entries") && out.contains("12 feature vectors"),
        "{out}"
    );

    assert_eq!(code(&stage(&c, &["match"])), 0);
    let speech = Path::new(&c.store).join("score_matrix/speech.feat");
    let first = fs::read(&speech).unwrap();
    assert_eq!(code(&stage(&c, &["match"])), 0);
    assert_eq!(first, fs::read(&speech).unwrap(), "match is not idempotent");

    let o = stage(&c, &["evaluate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert_eq!(table.lines().count(), 8, "{table}");
    let reports = Path::new(&c.store).join("reports");
    for f in [
        "cmc_speech.csv",
        "cmc_ear.csv",
        "cmc_fused.csv",
        "rank_table.txt",
        "rank_table.csv",
    ] {
        assert!(reports.join(f).exists(), "{f} missing");
    }
    for f in ["cmc_speech.csv", "cmc_ear.csv", "cmc_fused.csv"] {
        let text = fs::read_to_string(reports.join(f)).unwrap();
        assert!(text.trim_end().ends_with(",100.0000"), "{f}: {text}");
    }
    assert_eq!(
        fs::read_to_string(reports.join("rank_table.txt")).unwrap(),
        table
    );

    // dropping a pair from the manifest invalidates the stored matrices
    let text = fs::read_to_string(&c.manifest).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("s002")).collect();
    fs::write(&c.manifest, kept.join("\n") + "\n").unwrap();
    let o = stage(&c, &["evaluate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("identit"), "{}", stderr(&o));
}
