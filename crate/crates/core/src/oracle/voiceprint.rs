use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit-norm speaker embedding, tagged with the backend that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VoiceprintRepr", into = "VoiceprintRepr")]
pub struct Voiceprint {
    vec: Vec<f64>,
    origin: String,
}

pub const RAW_ORIGIN: &str = "raw";

impl Voiceprint {
    /// L2-normalises `raw`. Fails on empty, zero or non-finite input.
    pub fn from_raw(raw: Vec<f64>, origin: impl Into<String>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::invalid("empty embedding"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite embedding entry"));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("zero embedding cannot be normalised"));
        }
        Ok(Self {
            vec: raw.into_iter().map(|v| v / norm).collect(),
            origin: origin.into(),
        })
    }

    /// Normalised voiceprint with the neutral `raw` origin.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        Self::from_raw(raw, RAW_ORIGIN)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vec
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    /// Normalised arithmetic mean of several voiceprints from one backend.
    pub fn mean(prints: &[Voiceprint]) -> Result<Self> {
        let first = prints
            .first()
            .ok_or_else(|| Error::invalid("cannot average zero voiceprints"))?;
        let mut acc = vec![0.0; first.dim()];
        for p in prints {
            check_pair(first, p)?;
            for (a, v) in acc.iter_mut().zip(&p.vec) {
                *a += v;
            }
        }
        Self::from_raw(acc, first.origin.clone())
    }
}

fn check_pair(a: &Voiceprint, b: &Voiceprint) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.origin != b.origin {
        return Err(Error::invalid(format!(
            "voiceprints from different backends ({} vs {})",
            a.origin, b.origin
        )));
    }
    Ok(())
}

/// Cosine similarity of two unit voiceprints, in `[-1, 1]`.
pub fn cosine_score(a: &Voiceprint, b: &Voiceprint) -> Result<f64> {
    check_pair(a, b)?;
    let dot: f64 = a.vec.iter().zip(&b.vec).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[derive(Serialize, Deserialize)]
struct VoiceprintRepr {
    origin: String,
    embedding: Vec<f64>,
}

impl From<Voiceprint> for VoiceprintRepr {
    fn from(v: Voiceprint) -> Self {
        Self {
            origin: v.origin,
            embedding: v.vec,
        }
    }
}

impl TryFrom<VoiceprintRepr> for Voiceprint {
    type Error = Error;

    fn try_from(r: VoiceprintRepr) -> Result<Self> {
        Voiceprint::from_raw(r.embedding, r.origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let a = Voiceprint::new(vec![1.0, 0.0]).unwrap();
        let b = Voiceprint::new(vec![0.0, 3.0]).unwrap();
        let c = Voiceprint::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(cosine_score(&a, &a).unwrap(), 1.0);
        assert_eq!(cosine_score(&a, &b).unwrap(), 0.0);
        assert!((cosine_score(&a, &c).unwrap() - 0.707_106_78).abs() < 1e-8);
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = Voiceprint::new(vec![1.0, 0.0]).unwrap();
        let b = Voiceprint::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_score(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
        let c = Voiceprint::from_raw(vec![1.0, 0.0], "other").unwrap();
        assert!(cosine_score(&a, &c).is_err());
    }

    #[test]
    fn unit_norm_and_bad_input() {
        let v = Voiceprint::new(vec![3.0, 4.0]).unwrap();
        let n: f64 = v.as_slice().iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(Voiceprint::new(vec![0.0, 0.0]).is_err());
        assert!(Voiceprint::new(vec![f64::NAN]).is_err());
        assert!(Voiceprint::mean(&[]).is_err());
    }
}
