//! Trigger optimisation: augmented loss, NES gradient estimation, Adam
//! updates and the generation loop.

mod adam;
mod config;
mod loss;
mod nes;
mod optimize;

pub use adam::{adam_step, AdamState};
pub use config::{AugmentSpace, ChannelSim, LossWeights, OptimConfig};
pub use loss::{loss_eval, trigger_alone, trigger_probes, AugmentDraw, CapturePath, LossRefs, LossSetup, LossTerms};
pub use nes::{nes_gradient, nes_gradient_with};
pub use optimize::{
    init_trigger, optimize, prune_sparsify, ForgeAborted, ForgeOutcome, ForgeSpec, TraceRecord,
    TriggerGeometry, DEFAULT_PRUNE_FLOOR,
};
