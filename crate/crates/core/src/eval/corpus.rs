//! Seeded synthetic corpora over the three Tacton families, labelled by the
//! synthetic oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::oracle::render_and_label;
use crate::model::RatingTriple;
use crate::tacton::{Breakpoint, TactonSpec, Waveform};
use crate::Result;

/// Family names and their relative weights (sinusoidal, rhythmic, complex).
pub const FAMILY_WEIGHTS: [(&str, usize); 3] = [("sinusoidal", 54), ("rhythmic", 60), ("complex", 40)];

pub const SINE_CARRIERS_HZ: [f64; 3] = [80.0, 155.0, 230.0];
pub const SINE_ENVELOPES_HZ: [f64; 3] = [0.0, 4.0, 8.0];
pub const SINE_DURATIONS_S: [f64; 3] = [0.3, 1.0, 2.0];
pub const AMPLITUDES: [f64; 2] = [0.5, 1.0];
pub const RHYTHM_CARRIERS_HZ: [f64; 3] = [80.0, 150.0, 230.0];
pub const COMPLEX_DURATION_S: (f64, f64) = (0.43, 5.38);

/// Every rhythmic Tacton lasts this many 31.25 ms slots (2 s).
pub const RHYTHM_SLOTS: usize = 64;

/// Ten repeating pulse units varying note length and evenness; each is
/// tiled to [`RHYTHM_SLOTS`].
pub const RHYTHMS: [&str; 10] = [
    "1111000011110000",
    "1100110011001100",
    "1111111100000000",
    "10",
    "1111001100000000",
    "1110111011100000",
    "11111111111100001111000000000000",
    "10101010111111111010101011111111",
    "1100110011110000",
    "1111111100001111000011000000000011111111000011110000110000000000",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    /// Shared by items rendered from the same spec; see [`spec_key`].
    pub tacton_id: String,
    pub spec: TactonSpec,
    /// 1 kHz acceleration in G.
    pub waveform: Waveform,
    pub ratings: RatingTriple,
}

/// Largest-remainder apportionment of `n` over [`FAMILY_WEIGHTS`]; ties
/// go to the earlier family.
pub fn family_counts(n: usize) -> [usize; 3] {
    let total: usize = FAMILY_WEIGHTS.iter().map(|f| f.1).sum();
    let mut counts = FAMILY_WEIGHTS.map(|f| n * f.1 / total);
    let rem = FAMILY_WEIGHTS.map(|f| n * f.1 % total);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(missing) {
        counts[k] += 1;
    }
    counts
}

pub fn sinusoidal_grid() -> Vec<TactonSpec> {
    let mut out = Vec::with_capacity(54);
    for &carrier_freq in &SINE_CARRIERS_HZ {
        for &envelope_freq in &SINE_ENVELOPES_HZ {
            for &duration in &SINE_DURATIONS_S {
                for &amplitude in &AMPLITUDES {
                    out.push(TactonSpec::Sinusoidal {
                        amplitude,
                        carrier_freq,
                        envelope_freq,
                        duration,
                    });
                }
            }
        }
    }
    out
}

pub fn rhythmic_grid() -> Vec<TactonSpec> {
    let mut out = Vec::with_capacity(60);
    for pattern in RHYTHMS {
        let pulses: Vec<u8> = pattern.bytes().cycle().take(RHYTHM_SLOTS).map(|b| b - b'0').collect();
        for &carrier_freq in &RHYTHM_CARRIERS_HZ {
            for &amplitude in &AMPLITUDES {
                out.push(TactonSpec::Rhythmic {
                    amplitude,
                    carrier_freq,
                    pulses: pulses.clone(),
                });
            }
        }
    }
    out
}

/// Piecewise-linear envelope and frequency tracks with 3 to 8 breakpoints.
pub fn random_complex(rng: &mut impl Rng) -> TactonSpec {
    let duration = rng.random_range(COMPLEX_DURATION_S.0..=COMPLEX_DURATION_S.1);
    let mut track = |lo: f64, hi: f64| {
        let k = rng.random_range(3..=8);
        let mut times: Vec<f64> = (0..k - 2).map(|_| rng.random_range(0.0..duration)).collect();
        times.push(0.0);
        times.push(duration);
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
            .into_iter()
            .map(|t| Breakpoint(t, rng.random_range(lo..=hi)))
            .collect::<Vec<_>>()
    };
    let envelope_track = track(0.0, 1.0);
    let frequency_track = track(SINE_CARRIERS_HZ[0], SINE_CARRIERS_HZ[2]);
    TactonSpec::Complex {
        envelope_track,
        frequency_track,
        duration,
    }
}

/// Content hash of a spec's JSON form. Grid families repeat specs once `n`
/// exceeds the grid, and splits must keep such repeats together.
pub fn spec_key(spec: &TactonSpec) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(spec)?);
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

fn stream(seed: u64, tag: &str, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(Sha256::digest(format!("{seed}/{tag}/{i}").as_bytes()).into())
}

/// Specs only, in corpus order: sinusoidal, then rhythmic, then complex.
/// Grid families cycle through a seeded permutation of their grid.
pub fn corpus_specs(n: usize, seed: u64) -> Vec<TactonSpec> {
    let [ns, nr, nc] = family_counts(n);
    let mut out = Vec::with_capacity(n);
    for (grid, count, tag) in [(sinusoidal_grid(), ns, "sinusoidal"), (rhythmic_grid(), nr, "rhythmic")] {
        let mut perm = grid;
        perm.shuffle(&mut stream(seed, tag, 0));
        out.extend(perm.iter().cycle().take(count).cloned());
    }
    out.extend((0..nc).map(|i| random_complex(&mut stream(seed, "complex", i))));
    out
}

/// Renders and labels `n` specs in parallel. Output is identical for a
/// given `(n, seed)` regardless of thread count.
pub fn generate_corpus(n: usize, seed: u64) -> Result<Vec<CorpusItem>> {
    corpus_specs(n, seed)
        .into_par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let (waveform, ratings) = render_and_label(&spec)?;
            Ok(CorpusItem {
                id: format!("{}{i:05}", &spec.family()[..3]),
                tacton_id: spec_key(&spec)?,
                spec,
                waveform,
                ratings,
            })
        })
        .collect()
}
