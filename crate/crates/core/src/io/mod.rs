//! Files: WAV audio, experiment manifests and stamped artifacts.

pub mod artifact;
pub mod manifest;
pub mod wav;

pub use artifact::{read_artifact, read_trace, write_artifact, write_stamped_text, write_trace, Artifact, Stamp};
pub use manifest::{DataSource, ExperimentManifest, RirSource, SpeakerFiles};
pub use wav::{read_wav, write_wav};
