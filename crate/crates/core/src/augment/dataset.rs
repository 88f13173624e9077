use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{augment_record, AugmentConfig, AugmentMethod};
use crate::tacton::Waveform;
use crate::{Error, Result};

/// One line of the provenance manifest. Originals carry method `"original"`
/// and no parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub out_id: String,
    pub src_id: String,
    pub method: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub seed_path: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AugmentedDataset {
    pub records: Vec<(String, Waveform)>,
    pub manifest: Vec<ProvenanceEntry>,
}

/// `n * (7 * repetitions + 1)`.
pub fn expected_output_count(n: usize, repetitions: usize) -> usize {
    n * (AugmentMethod::ALL.len() * repetitions + 1)
}

pub fn seed_path(seed: u64, src_id: &str, method: AugmentMethod, rep: usize) -> String {
    format!("{seed}/{src_id}/{method}/{rep}")
}

/// Random stream keyed by a seed path, independent of scheduling.
pub fn derive_rng(path: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(path.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Keeps each original and adds `7 * repetitions` augmented variants per
/// record. Output order is: original, then repetition-major, method-minor.
pub fn augment_dataset(records: &[(String, Waveform)], cfg: &AugmentConfig) -> Result<AugmentedDataset> {
    if records.is_empty() {
        return Err(Error::Data("no records to augment".into()));
    }
    cfg.validate()?;
    let per_record: Vec<Vec<((String, Waveform), ProvenanceEntry)>> = records
        .par_iter()
        .map(|(id, w)| {
            let mut out = Vec::with_capacity(AugmentMethod::ALL.len() * cfg.repetitions + 1);
            out.push((
                (id.clone(), w.clone()),
                ProvenanceEntry {
                    out_id: id.clone(),
                    src_id: id.clone(),
                    method: "original".into(),
                    a: None,
                    b: None,
                    c: None,
                    seed_path: None,
                },
            ));
            for rep in 0..cfg.repetitions {
                for method in AugmentMethod::ALL {
                    let path = seed_path(cfg.rng_seed, id, method, rep);
                    let mut rng = derive_rng(&path);
                    let aug = augment_record(w, method, cfg, &mut rng)?;
                    let out_id = format!("{id}__{}_r{rep}", method.name().replace('+', ""));
                    out.push((
                        (out_id.clone(), aug.waveform),
                        ProvenanceEntry {
                            out_id,
                            src_id: id.clone(),
                            method: method.name().into(),
                            a: aug.params.a,
                            b: aug.params.b,
                            c: aug.params.c,
                            seed_path: Some(path),
                        },
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let total = expected_output_count(records.len(), cfg.repetitions);
    let mut out = AugmentedDataset {
        records: Vec::with_capacity(total),
        manifest: Vec::with_capacity(total),
    };
    for (rec, prov) in per_record.into_iter().flatten() {
        out.records.push(rec);
        out.manifest.push(prov);
    }
    debug_assert_eq!(out.records.len(), total);
    Ok(out)
}

pub fn write_provenance(path: &Path, entries: &[ProvenanceEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_provenance(path: &Path) -> Result<Vec<ProvenanceEntry>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
