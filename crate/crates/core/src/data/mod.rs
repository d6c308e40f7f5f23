//! Patient records, dataset files, normalization, splitting, batching and
//! synthetic cohort generation.
//!
//! Cases are addressed by their index in [`Dataset::cases`]; ids are unique
//! per dataset and only used for diagnostics and export.

mod io;
mod prep;
pub mod synthetic;
mod types;

pub use io::{load_dataset, save_dataset, write_dataset};
pub use prep::{
    fit_normalization, make_batches, normalize, split_folds, split_folds_stratified, split_holdout, Split, STD_FLOOR,
};
pub(crate) use prep::split_validation;
pub use synthetic::{
    generate_synthetic, DecayProfile, PlantedWeights, SyntheticManifest, SyntheticSpec,
};
pub use types::{Dataset, Normalization, PatientCase};
