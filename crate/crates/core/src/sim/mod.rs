//! Synthetic hysteresis data: Bouc-Wen and Menegotto-Pinto models,
//! excitation synthesis, normalisation and dataset assembly.

mod boucwen;
mod dataset;
mod excitation;
mod gmp;
mod io;
mod mdof;
mod normalize;

pub use boucwen::{simulate_boucwen, BoucWenParams, BoucWenSpring, DIVERGENCE_LIMIT};
pub use dataset::{build_dataset, sample_seed, CaseKind, Dataset, Sample, Split, SplitName};
pub use excitation::{gen_excitation, ExcitationSpec};
pub use gmp::{gmp_case, gmp_stress, GmpMaterial, GmpParams};
pub use io::{import_csv, load_dataset, read_manifest, save_dataset, Manifest, SplitSizes, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
pub use mdof::MdofSystem;
pub use normalize::{denormalize, minmax_normalize, ChannelRange, NormalizationRecord};
