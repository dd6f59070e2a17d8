use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub theta: f64,
    /// Equal error rate as a fraction in [0, 1].
    pub eer: f64,
}

/// Finds the threshold at which the false-accept rate (impostor ≥ θ)
/// equals the false-reject rate (genuine < θ).
///
/// Operating points are evaluated at every distinct score and at the
/// midpoints between them. The crossing is interpolated linearly between
/// adjacent points; a plateau where both rates agree resolves to its centre.
pub fn calibrate_threshold(genuine: &[f64], impostor: &[f64]) -> Result<Calibration> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::invalid("calibration needs genuine and impostor scores"));
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return Err(Error::invalid("calibration scores must be finite"));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_unstable_by(f64::total_cmp);
    im.sort_unstable_by(f64::total_cmp);

    let mut all: Vec<f64> = g.iter().chain(&im).copied().collect();
    all.sort_unstable_by(f64::total_cmp);
    all.dedup();
    let span = (all[all.len() - 1] - all[0]).max(1e-6);
    let mut cands = Vec::with_capacity(2 * all.len() + 1);
    cands.push(all[0] - span);
    for w in all.windows(2) {
        cands.push(w[0]);
        cands.push(0.5 * (w[0] + w[1]));
    }
    cands.push(all[all.len() - 1]);
    cands.push(all[all.len() - 1] + span);

    let rates = |t: f64| {
        let far = (im.len() - im.partition_point(|s| *s < t)) as f64 / im.len() as f64;
        let frr = g.partition_point(|s| *s < t) as f64 / g.len() as f64;
        (far, frr)
    };
    let pts: Vec<(f64, f64, f64)> = cands
        .iter()
        .map(|&t| {
            let (far, frr) = rates(t);
            (t, far, frr)
        })
        .collect();
    let diff = |p: &(f64, f64, f64)| p.1 - p.2;

    let k = pts
        .iter()
        .position(|p| diff(p) <= 0.0)
        .expect("the last candidate rejects every genuine score");
    if diff(&pts[k]) == 0.0 {
        let end = k + pts[k..].iter().take_while(|p| diff(p) == 0.0).count() - 1;
        return Ok(Calibration {
            theta: 0.5 * (pts[k].0 + pts[end].0),
            eer: pts[k].1,
        });
    }
    let (a, b) = (pts[k - 1], pts[k]);
    let (da, db) = (diff(&a), diff(&b));
    let u = da / (da - db);
    Ok(Calibration {
        theta: a.0 + u * (b.0 - a.0),
        eer: a.1 + u * (b.1 - a.1),
    })
}
