use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::filter::{FilterKind, Sos};
use super::stft::{stft_samples, HOP_LEN, N_BINS, WINDOW_LEN};
use crate::tacton::{zero_pad, Waveform, MODEL_INPUT_LEN, PIPELINE_RATE_HZ};
use crate::{Error, Result};

/// Order of each Butterworth section used by the receptor filters.
pub const CHANNEL_FILTER_ORDER: usize = 4;
/// Time frames produced for a model-length input.
pub const N_FRAMES: usize = 1 + MODEL_INPUT_LEN / HOP_LEN;

/// Spectral sensitivity band of a mechanoreceptor population, or the raw
/// signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// No filtering.
    Unfiltered,
    /// Meissner corpuscles, 3-100 Hz.
    Ra1,
    /// Pacinian corpuscles, 40-500 Hz. The upper edge is Nyquist at 1 kHz, so
    /// this is a 40 Hz highpass.
    Ra2,
    /// Merkel disks, lowpass 5 Hz.
    Sa1,
    /// Ruffini endings, 15-400 Hz.
    Sa2,
}

impl Channel {
    pub const RECEPTORS: [Channel; 4] = [Channel::Ra1, Channel::Ra2, Channel::Sa1, Channel::Sa2];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Unfiltered => "unfiltered",
            Channel::Ra1 => "ra1",
            Channel::Ra2 => "ra2",
            Channel::Sa1 => "sa1",
            Channel::Sa2 => "sa2",
        }
    }

    /// Filter cascade at `sample_rate`; `None` for the unfiltered channel.
    pub fn filter(self, sample_rate: f64) -> Option<Sos> {
        let hp = |fc| Sos::butterworth(FilterKind::Highpass, CHANNEL_FILTER_ORDER, fc, sample_rate);
        let lp = |fc| Sos::butterworth(FilterKind::Lowpass, CHANNEL_FILTER_ORDER, fc, sample_rate);
        let sos = match self {
            Channel::Unfiltered => return None,
            Channel::Ra1 => hp(3.0).and_then(|h| Ok(h.then(lp(100.0)?))),
            Channel::Ra2 => hp(40.0),
            Channel::Sa1 => lp(5.0),
            Channel::Sa2 => hp(15.0).and_then(|h| Ok(h.then(lp(400.0)?))),
        };
        Some(sos.expect("receptor band edges are valid at 1 kHz"))
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unfiltered" | "raw" | "none" => Ok(Channel::Unfiltered),
            "ra1" => Ok(Channel::Ra1),
            "ra2" => Ok(Channel::Ra2),
            "sa1" => Ok(Channel::Sa1),
            "sa2" => Ok(Channel::Sa2),
            other => Err(Error::Config(format!("unknown channel {other:?}"))),
        }
    }
}

/// Either the single unfiltered channel or an ordered, non-empty subsequence
/// of RA1, RA2, SA1, SA2.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Channel>", into = "Vec<Channel>")]
pub struct ChannelSet(Vec<Channel>);

impl ChannelSet {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("channel set is empty".into()));
        }
        if channels.contains(&Channel::Unfiltered) {
            if channels.len() != 1 {
                return Err(Error::Config(
                    "the unfiltered channel cannot be combined with receptor channels".into(),
                ));
            }
            return Ok(Self(channels));
        }
        if channels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "receptor channels must be distinct and ordered ra1, ra2, sa1, sa2".into(),
            ));
        }
        Ok(Self(channels))
    }

    pub fn single() -> Self {
        Self(vec![Channel::Unfiltered])
    }

    pub fn two_channel() -> Self {
        Self(vec![Channel::Ra1, Channel::Ra2])
    }

    pub fn four_channel() -> Self {
        Self(Channel::RECEPTORS.to_vec())
    }

    pub fn channels(&self) -> &[Channel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<Channel>> for ChannelSet {
    type Error = Error;

    fn try_from(v: Vec<Channel>) -> Result<Self> {
        ChannelSet::new(v)
    }
}

impl From<ChannelSet> for Vec<Channel> {
    fn from(c: ChannelSet) -> Self {
        c.0
    }
}

impl FromStr for ChannelSet {
    type Err = Error;

    /// Parses a comma-separated list such as `ra1,ra2`.
    fn from_str(s: &str) -> Result<Self> {
        let mut v = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Channel::from_str)
            .collect::<Result<Vec<_>>>()?;
        v.sort();
        ChannelSet::new(v)
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|c| c.name()).collect();
        f.write_str(&names.join(","))
    }
}

/// Stack of linear-magnitude spectrograms, C-order `(channel, freq, time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramStack {
    channels: ChannelSet,
    bins: usize,
    frames: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramSidecar {
    pub channels: ChannelSet,
    pub shape: [usize; 3],
    pub window_s: f64,
    pub hop_s: f64,
}

impl SpectrogramStack {
    pub fn channels(&self) -> &ChannelSet {
        &self.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels.len(), self.bins, self.frames]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.bins * self.frames;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Frequency of bin `k` in Hz.
    pub fn bin_hz(k: usize) -> f64 {
        k as f64 * PIPELINE_RATE_HZ as f64 / WINDOW_LEN as f64
    }

    pub fn sidecar(&self) -> SpectrogramSidecar {
        SpectrogramSidecar {
            channels: self.channels.clone(),
            shape: self.shape(),
            window_s: WINDOW_LEN as f64 / PIPELINE_RATE_HZ as f64,
            hop_s: HOP_LEN as f64 / PIPELINE_RATE_HZ as f64,
        }
    }

    /// Little-endian f32 values plus `path.with_extension("json")` sidecar.
    pub fn write_f32(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = path.with_extension("json");
        fs::write(&side, serde_json::to_vec_pretty(&self.sidecar())?).map_err(|e| Error::io(side, e))
    }

    pub fn read_f32(path: &Path) -> Result<SpectrogramStack> {
        let side = path.with_extension("json");
        let meta: SpectrogramSidecar = serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let n: usize = meta.shape.iter().product();
        if meta.shape[0] != meta.channels.len() || bytes.len() != n * 4 {
            return Err(Error::Data(format!(
                "{}: payload does not match shape {:?}",
                path.display(),
                meta.shape
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(SpectrogramStack {
            channels: meta.channels,
            bins: meta.shape[1],
            frames: meta.shape[2],
            data,
        })
    }

    /// Averages `factor_f x factor_t` cells, for compact previews.
    pub fn preview(&self, max_bins: usize, max_frames: usize) -> (Vec<usize>, Vec<f64>) {
        let fb = self.bins.div_ceil(max_bins.max(1));
        let ft = self.frames.div_ceil(max_frames.max(1));
        let ob = self.bins.div_ceil(fb);
        let of = self.frames.div_ceil(ft);
        let mut out = Vec::with_capacity(self.channels.len() * ob * of);
        for c in 0..self.channels.len() {
            let plane = self.channel(c);
            for b in 0..ob {
                for t in 0..of {
                    let mut acc = 0.0;
                    let mut cnt = 0;
                    for bb in b * fb..((b + 1) * fb).min(self.bins) {
                        for tt in t * ft..((t + 1) * ft).min(self.frames) {
                            acc += plane[bb * self.frames + tt];
                            cnt += 1;
                        }
                    }
                    out.push(acc / cnt as f64);
                }
            }
        }
        (vec![self.channels.len(), ob, of], out)
    }
}

fn require_pipeline_rate(w: &Waveform) -> Result<()> {
    if w.sample_rate() != PIPELINE_RATE_HZ {
        return Err(Error::SampleRate {
            expected: PIPELINE_RATE_HZ,
            actual: w.sample_rate(),
        });
    }
    Ok(())
}

/// Zero-phase receptor-band filtering of a 1 kHz waveform.
pub fn channel_filter(w: &Waveform, ch: Channel) -> Result<Waveform> {
    require_pipeline_rate(w)?;
    match ch.filter(PIPELINE_RATE_HZ as f64) {
        None => Ok(w.clone()),
        Some(sos) => w.with_samples(sos.filtfilt(w.samples())),
    }
}

/// Pads to the model length, filters per channel and takes STFT magnitudes.
pub fn mechano_spectrograms(w: &Waveform, channels: &ChannelSet) -> Result<SpectrogramStack> {
    require_pipeline_rate(w)?;
    let padded = zero_pad(w, MODEL_INPUT_LEN)?;
    let mut data = Vec::with_capacity(channels.len() * N_BINS * N_FRAMES);
    for &ch in channels.channels() {
        let filtered = channel_filter(&padded, ch)?;
        let s = stft_samples(filtered.samples());
        debug_assert_eq!((s.bins, s.frames), (N_BINS, N_FRAMES));
        data.extend(s.data.iter().map(|c| c.norm()));
    }
    Ok(SpectrogramStack {
        channels: channels.clone(),
        bins: N_BINS,
        frames: N_FRAMES,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tacton::Units;
    use std::f64::consts::PI;

    fn tone(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n).map(|k| (2.0 * PI * freq * k as f64 / 1000.0).sin()).collect(),
            1000,
            Units::G,
        )
        .unwrap()
    }

    fn mid_rms(w: &Waveform) -> f64 {
        let s = &w.samples()[1000..w.len() - 1000];
        (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt()
    }

    #[test]
    fn channel_set_parsing() {
        assert_eq!("ra2,ra1".parse::<ChannelSet>().unwrap(), ChannelSet::two_channel());
        assert_eq!("unfiltered".parse::<ChannelSet>().unwrap(), ChannelSet::single());
        assert!("ra1,unfiltered".parse::<ChannelSet>().is_err());
        assert!("ra1,ra1".parse::<ChannelSet>().is_err());
        assert!("".parse::<ChannelSet>().is_err());
        assert!(ChannelSet::new(vec![Channel::Ra2, Channel::Ra1]).is_err());
        assert_eq!(ChannelSet::four_channel().to_string(), "ra1,ra2,sa1,sa2");
    }

    #[test]
    fn zero_in_zero_out() {
        for ch in Channel::RECEPTORS {
            let y = channel_filter(&Waveform::zeros(3000, 1000, Units::G), ch).unwrap();
            assert!(y.samples().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn passband_and_stopband() {
        let x = tone(60.0, 6000);
        let ra1 = channel_filter(&x, Channel::Ra1).unwrap();
        assert!(mid_rms(&ra1) >= 0.7 * mid_rms(&x));
        let sa1 = channel_filter(&x, Channel::Sa1).unwrap();
        assert!(mid_rms(&sa1) <= 0.01 * mid_rms(&x));
        let ra2 = channel_filter(&tone(200.0, 6000), Channel::Ra2).unwrap();
        assert!(mid_rms(&ra2) >= 0.7 * mid_rms(&tone(200.0, 6000)));
    }

    #[test]
    fn filter_requires_1khz() {
        let w = Waveform::zeros(100, 10_000, Units::G);
        assert!(matches!(
            channel_filter(&w, Channel::Ra1),
            Err(Error::SampleRate { .. })
        ));
    }

    #[test]
    fn stack_shapes() {
        let w = tone(100.0, 2000);
        for (set, c) in [
            (ChannelSet::two_channel(), 2),
            (ChannelSet::single(), 1),
            (ChannelSet::four_channel(), 4),
        ] {
            let s = mechano_spectrograms(&w, &set).unwrap();
            assert_eq!(s.shape(), [c, 251, 121]);
            assert!(s.data().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn over_length_rejected() {
        let w = Waveform::zeros(6001, 1000, Units::G);
        assert!(matches!(
            mechano_spectrograms(&w, &ChannelSet::two_channel()),
            Err(Error::TooLong { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.f32");
        let s = mechano_spectrograms(&tone(80.0, 500), &ChannelSet::two_channel()).unwrap();
        s.write_f32(&p).unwrap();
        let back = SpectrogramStack::read_f32(&p).unwrap();
        assert_eq!(back.shape(), [2, 251, 121]);
        assert_eq!(back.channels(), &ChannelSet::two_channel());
        for (a, b) in back.data().iter().zip(s.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 2 * 251 * 121 * 4);
        let side: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("s.json")).unwrap()).unwrap();
        assert_eq!(side["channels"], serde_json::json!(["ra1", "ra2"]));
        assert_eq!(side["window_s"], 0.5);
        assert_eq!(side["hop_s"], 0.05);
    }

    #[test]
    fn preview_is_bounded() {
        let s = mechano_spectrograms(&tone(100.0, 6000), &ChannelSet::two_channel()).unwrap();
        let (shape, v) = s.preview(64, 64);
        assert!(shape[1] <= 64 && shape[2] <= 64);
        assert_eq!(v.len(), shape.iter().product::<usize>());
    }
}
