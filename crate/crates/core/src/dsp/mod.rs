//! Waveform-level building blocks: trigger synthesis, the ultrasound channel,
//! placement and mixing, reverberation, and pre-compensation.

pub mod channel;
pub mod fir;
pub mod placement;
pub mod precomp;
pub mod resample;
pub mod spectrum;
pub mod trigger;

pub use channel::{
    attenuate, dsb_modulate, nonlinear_demodulate, ssb_modulate, transmit, ChannelConfig,
    BASEBAND_LIMIT_HZ,
};
pub use placement::{
    mix, rir_convolve, shift_place, synthetic_rir, synthetic_rir_bank, MixOutput, ROOM_RT60_S,
};
pub use precomp::{precompensate, ResponseTable};
pub use resample::{resample, Resampler};
pub use trigger::{
    synthesize_trigger, synthesize_trigger_with_ramp, TriggerBasis, TriggerParams,
    MAX_TRIGGER_FREQ_HZ,
};
