use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ultrasonic_backdoor::dsp::TriggerParams;
use ultrasonic_backdoor::eval::Calibration;
use ultrasonic_backdoor::experiment::Experiment;
use ultrasonic_backdoor::forge::init_trigger;
use ultrasonic_backdoor::io::{read_artifact, read_trace, Artifact, ExperimentManifest};

const BIN: &str = env!("CARGO_BIN_EXE_usbd");

fn usbd(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "usbd failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path, max_epoch: usize) -> PathBuf {
    let m = serde_json::json!({
        "seed": 21,
        "data": {
            "source": "synthetic",
            "speakers": 3,
            "attack_per_speaker": 1,
            "enroll_per_speaker": 2,
            "test_per_speaker": 3,
            "duration_s": 1.5
        },
        "geometry": {"segments": 2, "freqs_per_segment": 2, "segment_len_s": 0.5},
        "optim": {"max_epoch": max_epoch, "draws_per_epoch": 1, "nes_samples": 2, "channel_sim": {"mode": "off"}},
        "trigger_probes": 2,
        "defenses": [],
        "out_dir": "out"
    });
    let p = dir.join("manifest.json");
    std::fs::write(&p, serde_json::to_string_pretty(&m).unwrap()).unwrap();
    p
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push((p.clone(), std::fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn calibrate_separates_synthetic_speakers() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), 0);
    let out = dir.path().join("cal");
    ok(&usbd(&["calibrate", "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let c: Artifact<Calibration> = read_artifact(&out.join("calibration.json"), "calibration").unwrap();
    assert_eq!(c.body.eer, 0.0);
    assert_eq!(c.stamp.seed, 21);
    assert_eq!(c.stamp.manifest_hash.len(), 64);
}

#[test]
fn zero_epochs_writes_the_initial_trigger() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), 0);
    let out = dir.path().join("o");
    ok(&usbd(&["optimize", "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let t: Artifact<TriggerParams> = read_artifact(&out.join("trigger-1.json"), "trigger").unwrap();

    let mut man = ExperimentManifest::load(&m).unwrap();
    man.out_dir = out.clone();
    let exp = Experiment::new(man, 16_000).unwrap();
    let cfg = exp.optim_for(1);
    let expected = init_trigger(&exp.speakers[&1].attack, exp.manifest.geometry, cfg.min_freq_hz, cfg.seed).unwrap();
    assert_eq!(t.body, expected);
    assert_eq!(t.stamp.manifest_hash, exp.hash);
}

#[test]
fn runs_are_reproducible_and_leave_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), 2);
    let corpus_out = dir.path().join("c");
    ok(&usbd(&["corpus", "--manifest", m.to_str().unwrap(), "--out", corpus_out.to_str().unwrap()]));
    let generated = corpus_out.join("corpus").join("manifest.json");
    assert!(generated.exists());

    let before = files_under(&corpus_out.join("corpus"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        ok(&usbd(&["run", "--manifest", generated.to_str().unwrap(), "--out", o.to_str().unwrap()]));
    }
    assert_eq!(files_under(&corpus_out.join("corpus")), before);

    for name in ["trigger-1.json", "trace-1.jsonl", "enrollment.json", "report.txt", "report.jsonl"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let (stamp, victim, records) = read_trace(&a.join("trace-1.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!((stamp.seed, victim), (21, 1));
    for f in ["trigger-1.wav", "ultrasound-1.wav", "calibration.json"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let report = std::fs::read_to_string(a.join("report.txt")).unwrap();
    assert!(report.starts_with("# manifest "));
}

#[test]
fn bad_inputs_fail_with_a_stage_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "no_such_field": true}"#).unwrap();
    let out = usbd(&["optimize", "--manifest", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error:"), "{err}");
    assert!(err.contains("no_such_field"), "{err}");

    let m = manifest(dir.path(), 0);
    let out = usbd(&["optimize", "--manifest", m.to_str().unwrap(), "--scorer", "cmd:/nonexistent/model"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scorer"), "{err}");

    let o = dir.path().join("empty");
    let out = usbd(&["evaluate", "--manifest", m.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("load trigger"));
}
