//! Recognition-stage evaluation: thresholds, SV/CSI/OSI decisions,
//! attack success and accuracy, defenses and detection features.

mod defense;
mod lipread;
mod tasks;
mod threshold;

use std::collections::BTreeMap;

pub use defense::{apply_defense, median_filter, DefenseSpec, VAD_FRAME_S};
pub use lipread::{lipread_features, LipReadFeatures, MAX_LAG_S, SUB_BAND_HZ};
pub use tasks::{decide, evaluate, Decision, EvalConfig, EvalReport, EvalRow, SpeakerId, Task, Threshold};
pub use threshold::{calibrate_threshold, Calibration};

use crate::error::Result;
use crate::oracle::{cosine_score, Voiceprint};

/// Genuine (probe vs own enrollment) and impostor (probe vs every other
/// enrollment) score lists.
pub fn trial_scores(
    enrolled: &BTreeMap<SpeakerId, Voiceprint>,
    probes: &BTreeMap<SpeakerId, Vec<Voiceprint>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (pid, list) in probes {
        for p in list {
            for (eid, e) in enrolled {
                let s = cosine_score(p, e)?;
                if pid == eid {
                    genuine.push(s);
                } else {
                    impostor.push(s);
                }
            }
        }
    }
    Ok((genuine, impostor))
}
