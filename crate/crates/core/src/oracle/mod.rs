//! The black-box scorer boundary. Every embedding the attack sees comes
//! through a [`ScorerHandle`], which counts queries so the black-box budget
//! can be audited.

mod external;
pub mod protocol;
mod voiceprint;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use crate::audio::AudioClip;
use crate::corpus::{SpeakerProfile, UtteranceSpec};
use crate::error::{Error, Result};
use crate::features::{MfccConfig, MfccExtractor};

pub use external::ExternalScorer;
pub use voiceprint::{cosine_score, Voiceprint, RAW_ORIGIN};

/// Rate the built-in embedder expects.
pub const BUILTIN_RATE: u32 = 16_000;
pub const BUILTIN_ORIGIN: &str = "builtin";

/// Per-dimension centre and scale of pooled statistics over a background
/// population, applied before length normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Background speakers: ids far from the ones experiments use.
const BACKGROUND_FIRST_ID: u64 = 1_000_000;
const BACKGROUND_SPEAKERS: u64 = 32;
const BACKGROUND_PER_SPEAKER: usize = 2;
const BACKGROUND_SEED: u64 = 0xb6_0001;

impl BackgroundStats {
    /// Mean and standard deviation of raw pooled statistics over `clips`.
    pub fn estimate(embedder: &BuiltinEmbedder, clips: &[AudioClip]) -> Result<Self> {
        if clips.len() < 2 {
            return Err(Error::invalid("background estimate needs at least two clips"));
        }
        let raws = clips
            .iter()
            .map(|c| embedder.raw_embedding(c))
            .collect::<Result<Vec<_>>>()?;
        let dim = raws[0].len();
        let n = raws.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|k| raws.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale = (0..dim)
            .map(|k| {
                let var = raws.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0);
                var.sqrt().max(1e-6)
            })
            .collect();
        Ok(Self { mean, scale })
    }

    /// Statistics of the bundled synthetic background population, computed
    /// once per process.
    pub fn synthetic() -> &'static BackgroundStats {
        static STATS: OnceLock<BackgroundStats> = OnceLock::new();
        STATS.get_or_init(|| {
            let spec = UtteranceSpec::with_duration(4.0);
            let clips: Vec<AudioClip> = (0..BACKGROUND_SPEAKERS)
                .flat_map(|i| {
                    let profile = SpeakerProfile::generate(BACKGROUND_FIRST_ID + i);
                    let spec = &spec;
                    (0..BACKGROUND_PER_SPEAKER).map(move |j| {
                        profile
                            .utterance(spec, BACKGROUND_SEED + j as u64)
                            .expect("background utterance spec is valid")
                    })
                })
                .collect();
            BackgroundStats::estimate(&BuiltinEmbedder::raw(), &clips)
                .expect("background clips are long enough")
        })
    }

    fn apply(&self, raw: &mut [f64]) {
        for ((v, m), s) in raw.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// Training-free statistics pooler over MFCCs: the per-coefficient mean
/// (the offset removed by cepstral mean normalisation) followed by the
/// per-coefficient standard deviation of the normalised cepstra, each
/// dimension standardised against background statistics.
#[derive(Debug, Clone)]
pub struct BuiltinEmbedder {
    extractor: MfccExtractor,
    background: Option<BackgroundStats>,
}

impl BuiltinEmbedder {
    /// Pooler standardised against [`BackgroundStats::synthetic`].
    pub fn new() -> Self {
        Self::with_background(Some(BackgroundStats::synthetic().clone()))
    }

    /// Pooler without background standardisation.
    pub fn raw() -> Self {
        Self::with_background(None)
    }

    pub fn with_background(background: Option<BackgroundStats>) -> Self {
        Self {
            extractor: MfccExtractor::new(MfccConfig::default(), BUILTIN_RATE)
                .expect("default MFCC configuration is valid"),
            background,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.extractor.config().num_coeffs
    }

    /// Pooled statistics before background standardisation.
    pub fn raw_embedding(&self, x: &AudioClip) -> Result<Vec<f64>> {
        let feats = self.extractor.extract(x)?;
        let mut v = feats.cmn_offset.clone();
        v.extend(feats.coeff_std());
        Ok(v)
    }

    /// Standardised statistics, ready for length normalisation.
    pub fn embedding(&self, x: &AudioClip) -> Result<Vec<f64>> {
        let mut v = self.raw_embedding(x)?;
        if let Some(bg) = &self.background {
            bg.apply(&mut v);
        }
        Ok(v)
    }
}

impl Default for BuiltinEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug)]
pub enum Backend {
    Builtin(BuiltinEmbedder),
    External(ExternalScorer),
}

/// A scorer backend plus a running count of embedding queries.
#[derive(Debug)]
pub struct ScorerHandle {
    backend: Backend,
    queries: AtomicU64,
}

impl ScorerHandle {
    pub fn builtin() -> Self {
        Self {
            backend: Backend::Builtin(BuiltinEmbedder::new()),
            queries: AtomicU64::new(0),
        }
    }

    /// Spawns `argv` and performs the protocol handshake.
    pub fn external(argv: &[String]) -> Result<Self> {
        Ok(Self {
            backend: Backend::External(ExternalScorer::spawn(argv)?),
            queries: AtomicU64::new(0),
        })
    }

    /// Parses `builtin` or `cmd:<argv...>` (whitespace separated).
    pub fn from_descriptor(desc: &str) -> Result<Self> {
        let desc = desc.trim();
        if desc == "builtin" {
            return Ok(Self::builtin());
        }
        match desc.strip_prefix("cmd:") {
            Some(rest) => {
                let argv: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                Self::external(&argv)
            }
            None => Err(Error::invalid(format!(
                "unknown scorer `{desc}` (expected `builtin` or `cmd:<argv>`)"
            ))),
        }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn expected_rate(&self) -> u32 {
        match &self.backend {
            Backend::Builtin(_) => BUILTIN_RATE,
            Backend::External(e) => e.rate(),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.backend {
            Backend::Builtin(b) => b.dim(),
            Backend::External(e) => e.dim(),
        }
    }

    pub fn origin(&self) -> String {
        match &self.backend {
            Backend::Builtin(_) => BUILTIN_ORIGIN.to_string(),
            Backend::External(e) => e.origin().to_string(),
        }
    }

    /// Number of embedding queries issued so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    pub fn embed(&self, x: &AudioClip) -> Result<Voiceprint> {
        let rate = self.expected_rate();
        if x.sample_rate() != rate {
            return Err(Error::RateMismatch {
                left: x.sample_rate(),
                right: rate,
            });
        }
        self.queries.fetch_add(1, Ordering::SeqCst);
        match &self.backend {
            Backend::Builtin(b) => Voiceprint::from_raw(b.embedding(x)?, BUILTIN_ORIGIN),
            Backend::External(e) => e.embed(x),
        }
    }

    /// Normalised mean of the embeddings of `samples`.
    pub fn enroll(&self, samples: &[AudioClip]) -> Result<Voiceprint> {
        if samples.is_empty() {
            return Err(Error::invalid("enrollment needs at least one sample"));
        }
        let prints = samples
            .iter()
            .map(|s| self.embed(s))
            .collect::<Result<Vec<_>>>()?;
        Voiceprint::mean(&prints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SpeakerProfile, UtteranceSpec};

    fn utterance(speaker: u64, seed: u64) -> AudioClip {
        SpeakerProfile::generate(speaker)
            .utterance(&UtteranceSpec::with_duration(2.0), seed)
            .unwrap()
    }

    #[test]
    fn embedding_is_deterministic_and_counted() {
        let s = ScorerHandle::builtin();
        let x = utterance(0, 1);
        let a = s.embed(&x).unwrap();
        let b = s.embed(&x).unwrap();
        assert_eq!(cosine_score(&a, &b).unwrap(), 1.0);
        assert_eq!(a.dim(), 40);
        assert_eq!(s.query_count(), 2);
    }

    #[test]
    fn wrong_rate_and_short_clip() {
        let s = ScorerHandle::builtin();
        let x = AudioClip::silence(8000, 8000).unwrap();
        assert!(matches!(s.embed(&x), Err(Error::RateMismatch { .. })));
        let y = AudioClip::silence(100, 16000).unwrap();
        assert!(matches!(s.embed(&y), Err(Error::TooShort { .. })));
    }

    #[test]
    fn gain_invariance_over_seeded_clips() {
        let s = ScorerHandle::builtin();
        for seed in 0..20 {
            let x = utterance(seed % 4, 100 + seed);
            let a = s.embed(&x).unwrap();
            let b = s.embed(&x.scaled(0.5)).unwrap();
            assert!(cosine_score(&a, &b).unwrap() >= 0.999, "seed {seed}");
        }
    }

    #[test]
    fn speakers_separate_on_a_small_corpus() {
        let s = ScorerHandle::builtin();
        let a: Vec<Voiceprint> = (0..10).map(|i| s.embed(&utterance(0, i)).unwrap()).collect();
        let b: Vec<Voiceprint> = (0..10).map(|i| s.embed(&utterance(1, 50 + i)).unwrap()).collect();
        let mean_pair = |x: &[Voiceprint], y: &[Voiceprint], same: bool| {
            let mut acc = 0.0;
            let mut n = 0;
            for (i, p) in x.iter().enumerate() {
                for (j, q) in y.iter().enumerate() {
                    if same && i >= j {
                        continue;
                    }
                    acc += cosine_score(p, q).unwrap();
                    n += 1;
                }
            }
            acc / n as f64
        };
        let aa = mean_pair(&a, &a, true);
        let bb = mean_pair(&b, &b, true);
        let ab = mean_pair(&a, &b, false);
        assert!(ab < aa && ab < bb, "aa {aa} bb {bb} ab {ab}");
    }

    #[test]
    fn enrollment_averages() {
        let s = ScorerHandle::builtin();
        let x = utterance(2, 7);
        let single = s.enroll(std::slice::from_ref(&x)).unwrap();
        assert!((cosine_score(&single, &s.embed(&x).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        let triple = s.enroll(&[x.clone(), x.clone(), x.clone()]).unwrap();
        assert!((cosine_score(&triple, &single).unwrap() - 1.0).abs() < 1e-12);
        assert!(s.enroll(&[]).is_err());

        let clips: Vec<AudioClip> = (0..3).map(|i| utterance(2, 20 + i)).collect();
        let prints: Vec<Voiceprint> = clips.iter().map(|c| s.embed(c).unwrap()).collect();
        let enrolled = s.enroll(&clips).unwrap();
        let mut min_pair = f64::INFINITY;
        for i in 0..3 {
            for j in i + 1..3 {
                min_pair = min_pair.min(cosine_score(&prints[i], &prints[j]).unwrap());
            }
        }
        for p in &prints {
            assert!(cosine_score(&enrolled, p).unwrap() >= min_pair);
        }
    }

    #[test]
    fn descriptor_parsing() {
        assert!(matches!(
            ScorerHandle::from_descriptor("builtin").unwrap().backend(),
            Backend::Builtin(_)
        ));
        assert!(ScorerHandle::from_descriptor("neural").is_err());
        assert!(matches!(
            ScorerHandle::from_descriptor("cmd:/nonexistent/scorer-binary"),
            Err(Error::ScorerUnreachable(_))
        ));
    }
}
