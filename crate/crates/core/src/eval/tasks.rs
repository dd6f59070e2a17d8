use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::defense::{apply_defense, DefenseSpec};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::oracle::{cosine_score, ScorerHandle, Voiceprint};

pub type SpeakerId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    /// Verification against a claimed identity.
    Sv,
    /// Close-set identification.
    Csi,
    /// Open-set identification.
    Osi,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Sv, Task::Csi, Task::Osi];

    fn needs_threshold(self) -> bool {
        !matches!(self, Task::Csi)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Sv => "SV",
            Task::Csi => "CSI",
            Task::Osi => "OSI",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SV" => Ok(Task::Sv),
            "CSI" => Ok(Task::Csi),
            "OSI" => Ok(Task::Osi),
            _ => Err(Error::invalid(format!("unknown task `{s}`"))),
        }
    }
}

/// Decision threshold together with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// e.g. `"calibrated"` or `"fixed"`.
    pub source: String,
    pub eer: Option<f64>,
}

impl Threshold {
    pub fn fixed(value: f64) -> Self {
        Self {
            value,
            source: "fixed".into(),
            eer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accepted: bool,
    /// Claimed identity for SV, best match for CSI/OSI.
    pub identity: Option<SpeakerId>,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalConfig {
    pub tasks: Vec<Task>,
    pub threshold: Option<Threshold>,
    pub enrolled: BTreeMap<SpeakerId, Voiceprint>,
    /// Held-out genuine probes keyed by their true speaker.
    pub genuine: BTreeMap<SpeakerId, Vec<AudioClip>>,
    /// Adversary trigger probes keyed by the targeted victim.
    pub adversary: BTreeMap<SpeakerId, Vec<AudioClip>>,
    /// Applied to probes only; an undefended row is always included.
    pub defenses: Vec<DefenseSpec>,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::invalid("no evaluation tasks"));
        }
        for t in &self.tasks {
            if t.needs_threshold() && self.threshold.is_none() {
                return Err(Error::invalid(format!("{t} requires a threshold")));
            }
            if *t == Task::Csi && self.enrolled.len() < 2 {
                return Err(Error::invalid("CSI requires at least two enrolled speakers"));
            }
        }
        let empty = |m: &BTreeMap<SpeakerId, Vec<AudioClip>>| m.values().all(|v| v.is_empty());
        if empty(&self.genuine) || empty(&self.adversary) {
            return Err(Error::invalid("evaluation needs genuine and adversary probes"));
        }
        for id in self.genuine.keys().chain(self.adversary.keys()) {
            if !self.enrolled.contains_key(id) {
                return Err(Error::invalid(format!("probe speaker {id} is not enrolled")));
            }
        }
        for d in &self.defenses {
            d.validate()?;
        }
        Ok(())
    }
}

fn best_match(probe: &Voiceprint, enrolled: &BTreeMap<SpeakerId, Voiceprint>) -> Result<(SpeakerId, f64)> {
    let mut best: Option<(SpeakerId, f64)> = None;
    // Strict comparison in ascending id order keeps the lowest id on ties.
    for (id, vp) in enrolled {
        let s = cosine_score(probe, vp)?;
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((*id, s));
        }
    }
    best.ok_or_else(|| Error::invalid("no enrolled speakers"))
}

pub fn decide(
    task: Task,
    probe: &Voiceprint,
    claimed: Option<SpeakerId>,
    enrolled: &BTreeMap<SpeakerId, Voiceprint>,
    theta: Option<f64>,
) -> Result<Decision> {
    let need_theta = || theta.ok_or_else(|| Error::invalid(format!("{task} requires a threshold")));
    match task {
        Task::Sv => {
            let id = claimed.ok_or_else(|| Error::invalid("SV requires a claimed identity"))?;
            let vp = enrolled
                .get(&id)
                .ok_or_else(|| Error::invalid(format!("unknown claimed speaker {id}")))?;
            let score = cosine_score(probe, vp)?;
            Ok(Decision {
                accepted: score >= need_theta()?,
                identity: Some(id),
                score,
            })
        }
        Task::Csi => {
            let (id, score) = best_match(probe, enrolled)?;
            Ok(Decision {
                accepted: true,
                identity: Some(id),
                score,
            })
        }
        Task::Osi => {
            let theta = need_theta()?;
            let (id, score) = best_match(probe, enrolled)?;
            let accepted = score >= theta;
            Ok(Decision {
                accepted,
                identity: accepted.then_some(id),
                score,
            })
        }
    }
}

/// Whether `probe` is recognised as `target` under `task`.
fn recognised_as(
    task: Task,
    probe: &Voiceprint,
    target: SpeakerId,
    enrolled: &BTreeMap<SpeakerId, Voiceprint>,
    theta: Option<f64>,
) -> Result<bool> {
    let d = decide(task, probe, Some(target), enrolled, theta)?;
    Ok(d.accepted && d.identity == Some(target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: Task,
    pub defense: String,
    /// Percent of genuine probes recognised as their speaker.
    pub acc: f64,
    /// Percent of adversary probes recognised as the targeted victim.
    pub asr: f64,
    pub theta: Option<f64>,
    pub eer: Option<f64>,
    pub genuine_n: usize,
    pub adversary_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub theta_source: Option<String>,
}

impl EvalReport {
    pub fn row(&self, task: Task, defense: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.task == task && r.defense == defense)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_table(&self) -> String {
        let fmt_opt = |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |x| format!("{:.4}", x * scale));
        let mut s = format!(
            "{:<5} {:>7} {:>7} {:>8} {:>8}  {}\n",
            "task", "ACC%", "ASR%", "theta", "EER%", "defense"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<5} {:>7.1} {:>7.1} {:>8} {:>8}  {}\n",
                r.task.to_string(),
                r.acc,
                r.asr,
                fmt_opt(r.theta, 1.0),
                r.eer.map_or("-".to_string(), |e| format!("{:.2}", e * 100.0)),
                r.defense
            ));
        }
        if let Some(src) = &self.theta_source {
            s.push_str(&format!("threshold source: {src}\n"));
        }
        s
    }
}

fn embed_all(
    probes: &BTreeMap<SpeakerId, Vec<AudioClip>>,
    defense: Option<&DefenseSpec>,
    scorer: &ScorerHandle,
) -> Result<Vec<(SpeakerId, Voiceprint)>> {
    let flat: Vec<(SpeakerId, &AudioClip)> = probes
        .iter()
        .flat_map(|(id, clips)| clips.iter().map(move |c| (*id, c)))
        .collect();
    flat.par_iter()
        .map(|(id, clip)| {
            let x = match defense {
                Some(d) => apply_defense(clip, d)?,
                None => (*clip).clone(),
            };
            Ok((*id, scorer.embed(&x)?))
        })
        .collect()
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

/// Scores every task against every defense setting, undefended first.
pub fn evaluate(cfg: &EvalConfig, scorer: &ScorerHandle) -> Result<EvalReport> {
    cfg.validate()?;
    let theta = cfg.threshold.as_ref().map(|t| t.value);
    let eer = cfg.threshold.as_ref().and_then(|t| t.eer);
    let settings: Vec<Option<&DefenseSpec>> =
        std::iter::once(None).chain(cfg.defenses.iter().map(Some)).collect();
    let mut rows = Vec::new();
    for defense in settings {
        let label = defense.map_or("none".to_string(), |d| d.to_string());
        let genuine = embed_all(&cfg.genuine, defense, scorer)
            .map_err(|e| e.in_stage(&format!("embed genuine ({label})")))?;
        let adversary = embed_all(&cfg.adversary, defense, scorer)
            .map_err(|e| e.in_stage(&format!("embed adversary ({label})")))?;
        for &task in &cfg.tasks {
            let count = |set: &[(SpeakerId, Voiceprint)]| -> Result<usize> {
                let mut hits = 0;
                for (id, vp) in set {
                    if recognised_as(task, vp, *id, &cfg.enrolled, theta)? {
                        hits += 1;
                    }
                }
                Ok(hits)
            };
            rows.push(EvalRow {
                task,
                defense: label.clone(),
                acc: percent(count(&genuine)?, genuine.len()),
                asr: percent(count(&adversary)?, adversary.len()),
                theta: task.needs_threshold().then_some(theta).flatten(),
                eer: task.needs_threshold().then_some(eer).flatten(),
                genuine_n: genuine.len(),
                adversary_n: adversary.len(),
            });
        }
    }
    Ok(EvalReport {
        rows,
        theta_source: cfg.threshold.as_ref().map(|t| t.source.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vp(v: &[f64]) -> Voiceprint {
        Voiceprint::new(v.to_vec()).unwrap()
    }

    fn enrolled() -> BTreeMap<SpeakerId, Voiceprint> {
        BTreeMap::from([(1, vp(&[1.0, 0.0])), (2, vp(&[0.0, 1.0]))])
    }

    #[test]
    fn sv_accepts_at_threshold() {
        // cos = 0.70 against speaker 1
        let probe = vp(&[0.7, (1.0f64 - 0.49).sqrt()]);
        let d = decide(Task::Sv, &probe, Some(1), &enrolled(), Some(0.688)).unwrap();
        assert!(d.accepted);
        assert!((d.score - 0.7).abs() < 1e-12);
        assert!(decide(Task::Sv, &probe, Some(9), &enrolled(), Some(0.5)).is_err());
    }

    #[test]
    fn csi_argmax_and_ties() {
        let probe = vp(&[0.9, 0.3]);
        assert_eq!(decide(Task::Csi, &probe, None, &enrolled(), None).unwrap().identity, Some(1));
        let tie = vp(&[1.0, 1.0]);
        assert_eq!(decide(Task::Csi, &tie, None, &enrolled(), None).unwrap().identity, Some(1));
    }

    #[test]
    fn osi_rejects_below_threshold() {
        let probe = vp(&[0.6, 0.8]);
        let d = decide(Task::Osi, &probe, None, &enrolled(), Some(0.9)).unwrap();
        assert!(!d.accepted);
        assert_eq!(d.identity, None);
    }
}
