//! Tacton specifications, synthesis and waveform utilities.

mod resample;
mod spec;
mod synth;
mod waveform;

pub use resample::downsample;
pub use spec::{
    validate, validate_with_gain, Breakpoint, TactonSpec, ValidationReport, DEFAULT_DEVICE_GAIN_G, DEVICE_BAND_HZ,
    MAX_MODEL_DURATION_S, PULSE_SLOT_S,
};
pub use synth::{interpolate, render, render_pipeline, slot_boundary, synthesize};
pub use waveform::{
    sidecar_path, zero_pad, Units, Waveform, WaveformSidecar, CAPTURE_RATE_HZ, MODEL_INPUT_LEN, PIPELINE_RATE_HZ,
};
