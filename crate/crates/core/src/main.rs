use std::collections::BTreeMap;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ultrasonic_backdoor::dsp::{ssb_modulate, synthesize_trigger, TriggerParams};
use ultrasonic_backdoor::eval::{evaluate, Calibration, DefenseSpec, EvalReport, SpeakerId, Threshold};
use ultrasonic_backdoor::experiment::{EnrolledPrint, Experiment};
use ultrasonic_backdoor::forge::{prune_sparsify, ChannelSim, DEFAULT_PRUNE_FLOOR};
use ultrasonic_backdoor::io::{
    read_artifact, write_artifact, write_stamped_text, write_trace, write_wav, Artifact, DataSource,
    ExperimentManifest, SpeakerFiles,
};
use ultrasonic_backdoor::oracle::{protocol, BuiltinEmbedder, ScorerHandle, BUILTIN_RATE};
use ultrasonic_backdoor::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "usbd", version, about = "Ultrasonic enrollment backdoor simulator")]
struct Cli {
    /// Experiment manifest (JSON). Built-in defaults when omitted.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides the manifest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `builtin` or `cmd:<argv>`.
    #[arg(long, global = true)]
    scorer: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    channel_sim: Option<OnOff>,
    /// Recognition-time defense, e.g. `median:5` or `vad:-25`. Repeatable;
    /// replaces the manifest list.
    #[arg(long = "defense", global = true)]
    defenses: Vec<DefenseSpec>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic corpus as WAV files plus a manifest that points at them.
    Corpus,
    /// Generate a trigger for every victim.
    Optimize,
    /// Render trigger WAVs and their modulated ultrasound.
    Synthesize,
    /// Enroll all speakers, poisoning the victims' enrollment with their triggers.
    EnrollAttack,
    /// Compute the EER threshold on clean enrollments.
    Calibrate,
    /// Score genuine and trigger probes across tasks and defenses.
    Evaluate,
    /// optimize, synthesize, enroll-attack, calibrate and evaluate in sequence.
    Run,
    /// Serve the builtin embedder over the line-delimited JSON protocol on stdin/stdout.
    ServeBuiltin,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn load_manifest(cli: &Cli) -> Result<ExperimentManifest> {
    let mut m = match &cli.manifest {
        Some(p) => ExperimentManifest::load(p)?,
        None => ExperimentManifest::default(),
    };
    if let Some(s) = cli.seed {
        m.seed = s;
    }
    if let Some(s) = &cli.scorer {
        m.scorer = s.clone();
    }
    if let Some(o) = &cli.out {
        m.out_dir = o.clone();
    }
    match cli.channel_sim {
        Some(OnOff::Off) => m.optim.channel_sim = ChannelSim::Off,
        Some(OnOff::On) if m.optim.channel_sim == ChannelSim::Off => m.optim.channel_sim = ChannelSim::On,
        _ => {}
    }
    if !cli.defenses.is_empty() {
        m.defenses = cli.defenses.clone();
    }
    m.validate()?;
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::ServeBuiltin = cli.command {
        let embedder = BuiltinEmbedder::new();
        let stdin = io::stdin();
        return protocol::serve(
            BufReader::new(stdin.lock()),
            io::stdout().lock(),
            embedder.dim(),
            BUILTIN_RATE,
            |clip| embedder.embedding(clip),
        );
    }
    let manifest = load_manifest(&cli)?;
    let scorer = ScorerHandle::from_descriptor(&manifest.scorer).map_err(|e| e.in_stage("scorer"))?;
    let exp = Experiment::new(manifest, scorer.expected_rate())?;
    let out = exp.manifest.out_dir.clone();
    match cli.command {
        Command::Corpus => write_corpus(&exp, &out),
        Command::Optimize => optimize_all(&exp, &scorer, &out),
        Command::Synthesize => synthesize_all(&exp, &out),
        Command::EnrollAttack => enroll_attack(&exp, &scorer, &out).map(drop),
        Command::Calibrate => calibrate(&exp, &scorer, &out).map(drop),
        Command::Evaluate => evaluate_stage(&exp, &scorer, &out),
        Command::Run => {
            optimize_all(&exp, &scorer, &out)?;
            synthesize_all(&exp, &out)?;
            enroll_attack(&exp, &scorer, &out)?;
            if exp.manifest.threshold.is_none() {
                calibrate(&exp, &scorer, &out)?;
            }
            evaluate_stage(&exp, &scorer, &out)
        }
        Command::ServeBuiltin => unreachable!(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn trigger_path(out: &Path, victim: SpeakerId) -> PathBuf {
    out.join(format!("trigger-{victim}.json"))
}

fn check_stamp<T>(exp: &Experiment, a: &Artifact<T>, what: &Path) {
    if a.stamp.manifest_hash != exp.hash {
        eprintln!(
            "warning: {} was produced by manifest {}, current is {}",
            what.display(),
            a.stamp.manifest_hash,
            exp.hash
        );
    }
}

fn load_triggers(exp: &Experiment, out: &Path) -> Result<BTreeMap<SpeakerId, TriggerParams>> {
    exp.manifest
        .victim_ids()
        .into_iter()
        .map(|v| {
            let p = trigger_path(out, v);
            let a: Artifact<TriggerParams> = read_artifact(&p, "trigger").map_err(|e| e.in_stage("load trigger"))?;
            check_stamp(exp, &a, &p);
            Ok((v, a.body))
        })
        .collect()
}

fn write_corpus(exp: &Experiment, out: &Path) -> Result<()> {
    let dir = out.join("corpus");
    let mut speakers = Vec::new();
    for (id, audio) in &exp.speakers {
        let save = |role: &str, clips: &[ultrasonic_backdoor::AudioClip]| -> Result<Vec<PathBuf>> {
            clips
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let rel = PathBuf::from(format!("{id}/{role}-{i:02}.wav"));
                    ensure_dir(&dir.join(id.to_string()))?;
                    write_wav(dir.join(&rel), c)?;
                    Ok(rel)
                })
                .collect()
        };
        speakers.push(SpeakerFiles {
            id: *id,
            attack: save("attack", &audio.attack)?,
            enroll: save("enroll", &audio.enroll)?,
            test: save("test", &audio.test)?,
        });
    }
    let manifest = ExperimentManifest {
        data: DataSource::Files { speakers },
        ..exp.manifest.clone()
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    eprintln!("wrote {} speakers to {}", exp.speakers.len(), dir.display());
    Ok(())
}

fn optimize_all(exp: &Experiment, scorer: &ScorerHandle, out: &Path) -> Result<()> {
    let stamp = exp.stamp();
    for v in exp.manifest.victim_ids() {
        eprintln!("optimizing trigger for speaker {v}");
        let trace_file = out.join(format!("trace-{v}.jsonl"));
        let outcome = match exp.forge(v, scorer) {
            Ok(o) => o,
            Err(aborted) => {
                write_trace(&trace_file, &stamp, v, &aborted.trace)?;
                return Err(aborted.into());
            }
        };
        write_trace(&trace_file, &stamp, v, &outcome.trace)?;
        write_artifact(&trigger_path(out, v), &Artifact::new("trigger", &stamp, &outcome.params))?;
        let (_, active) = prune_sparsify(&outcome.params, DEFAULT_PRUNE_FLOOR);
        if let Some(last) = outcome.trace.last() {
            eprintln!(
                "  {} epochs, J {:.3}, S_victim {:.3}, S_tuner {:.3}, {} active of {}, {} queries",
                outcome.trace.len(),
                last.j,
                last.s_victim,
                last.s_tuner,
                active,
                outcome.params.dim(),
                scorer.query_count()
            );
        }
    }
    Ok(())
}

fn synthesize_all(exp: &Experiment, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    for (v, params) in load_triggers(exp, out)? {
        let p = synthesize_trigger(&params, exp.rate)?;
        write_wav(&out.join(format!("trigger-{v}.wav")), &p)?;
        let u = ssb_modulate(&p, &exp.manifest.channel).map_err(|e| e.in_stage("synthesize"))?;
        write_wav(&out.join(format!("ultrasound-{v}.wav")), &u)?;
    }
    Ok(())
}

fn enroll_attack(exp: &Experiment, scorer: &ScorerHandle, out: &Path) -> Result<BTreeMap<SpeakerId, EnrolledPrint>> {
    let triggers = load_triggers(exp, out)?;
    let enrolled = exp.enroll_attack(&triggers, scorer).map_err(|e| e.in_stage("enroll-attack"))?;
    write_artifact(&out.join("enrollment.json"), &Artifact::new("enrollment", &exp.stamp(), &enrolled))?;
    Ok(enrolled)
}

fn calibrate(exp: &Experiment, scorer: &ScorerHandle, out: &Path) -> Result<Calibration> {
    let c = exp.calibrate(scorer).map_err(|e| e.in_stage("calibrate"))?;
    write_artifact(&out.join("calibration.json"), &Artifact::new("calibration", &exp.stamp(), c))?;
    eprintln!("theta {:.4} at EER {:.2}%", c.theta, c.eer * 100.0);
    Ok(c)
}

fn evaluate_stage(exp: &Experiment, scorer: &ScorerHandle, out: &Path) -> Result<()> {
    let triggers = load_triggers(exp, out)?;
    let epath = out.join("enrollment.json");
    let enrolled: Artifact<BTreeMap<SpeakerId, EnrolledPrint>> =
        read_artifact(&epath, "enrollment").map_err(|e| e.in_stage("load enrollment"))?;
    check_stamp(exp, &enrolled, &epath);
    let threshold = match exp.manifest.threshold {
        Some(v) => Threshold::fixed(v),
        None => {
            let cpath = out.join("calibration.json");
            let c: Artifact<Calibration> =
                read_artifact(&cpath, "calibration").map_err(|e| e.in_stage("load calibration"))?;
            check_stamp(exp, &c, &cpath);
            Threshold {
                value: c.body.theta,
                source: "calibrated".into(),
                eer: Some(c.body.eer),
            }
        }
    };
    let cfg = exp
        .eval_config(&enrolled.body, &triggers, Some(threshold))
        .map_err(|e| e.in_stage("evaluate"))?;
    let report: EvalReport = evaluate(&cfg, scorer).map_err(|e| e.in_stage("evaluate"))?;
    let stamp = exp.stamp();
    let header = serde_json::to_string(&Artifact::new("report", &stamp, ()))?;
    write_stamped_text(&out.join("report.txt"), &stamp, &report.to_table())?;
    let jsonl = format!("{header}\n{}", report.to_jsonl()?);
    std::fs::write(out.join("report.jsonl"), jsonl).map_err(|e| Error::Io {
        path: out.join("report.jsonl"),
        source: e,
    })?;
    print!("{}", report.to_table());
    Ok(())
}
