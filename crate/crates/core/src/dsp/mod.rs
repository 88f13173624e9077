//! Mechanoreceptive signal processing: receptor-band filters, STFT and
//! spectrogram stacks.

pub mod filter;
pub mod resample;
pub mod spectrogram;
pub mod stft;

pub use filter::{FilterKind, Sos};
pub use resample::SincResampler;
pub use spectrogram::{
    channel_filter, mechano_spectrograms, Channel, ChannelSet, SpectrogramSidecar, SpectrogramStack, N_FRAMES,
};
pub use stft::{stft, Stft, N_BINS};
