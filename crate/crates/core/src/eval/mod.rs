//! Metrics, cross-validation splits, the synthetic rating oracle, the
//! linear baseline and dataset manifests.

mod baseline;
mod corpus;
mod features;
mod manifest;
mod metrics;
mod oracle;
mod split;

pub use baseline::{LinearBaseline, RIDGE_FALLBACK};
pub use corpus::{
    corpus_specs, family_counts, generate_corpus, random_complex, rhythmic_grid, sinusoidal_grid, spec_key, CorpusItem,
    FAMILY_WEIGHTS, RHYTHMS, RHYTHM_SLOTS,
};
pub use features::{baseline_features, modulation_depth, spectral_centroid, FEATURE_NAMES, N_FEATURES};
pub use manifest::{
    aggregate_labels, load_samples, read_manifest, resolve, write_manifest, LabelAggregation, ManifestRecord, Source,
};
pub use metrics::{mean_predictor, rmse_dims, within_sd, Averages, DimMetrics, Metrics, PerDim};
pub use oracle::{oracle_features, oracle_ratings, render_and_label, synthetic_oracle, OracleFeatures, ORACLE_VERSION};
pub use split::{group_kfold_split, kfold_split};
