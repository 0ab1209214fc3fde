//! Tabular plumbing: schemas, per-site datasets, CSV ingestion,
//! deterministic partitioning/splitting and a synthetic generator.

mod csv_io;
mod dataset;
mod federation;
mod partition;
mod schema;
mod synth;

pub use csv_io::{load_csv, load_csv_with, write_csv, IngestOptions, IngestReport, RowFilter};
pub use dataset::{Column, SiteDataset, SplitTag};
pub use federation::{FederationConfig, SiteWeights, WeightsMode, COHORT_SITE_PROPORTIONS};
pub use partition::{
    largest_remainder_sizes, partition_sites, split_counts, split_train_valid_test,
};
pub use schema::{Schema, VariableKind, VariableSpec};
pub use synth::{generate_synthetic, FeaturePlan};
