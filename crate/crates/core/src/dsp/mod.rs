//! Spectral analysis, features, fusion and enhancement backends.

mod enhance;
mod features;
mod mask;
mod stft;

pub use enhance::{
    count_parameters, enhance, Enhanced, EnhancerKind, EnhancerSpec, MediaWindow, ModelTier,
    REFERENCE_WINDOW_S,
};
pub use features::{
    audio_features, concat_fuse, deinterleave, lip_activity, visual_features, FeatureMap,
};
pub use mask::{
    apply_mask, noise_profile_from_quietest, oracle_mask, spectral_subtraction,
    spectral_subtraction_gain, ORACLE_EPS, OVERSUBTRACTION, SUBTRACTION_FLOOR,
};
pub use stft::{istft, stft, Spectrogram, StftConfig, WindowPair};
