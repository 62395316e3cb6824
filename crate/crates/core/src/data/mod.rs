//! Dataset container: a JSON manifest plus one directory of raw
//! little-endian binary32 arrays per sample. Also deterministic splits,
//! min-max normalization and the synthetic Poisson generator.

mod format;
mod normalize;
mod split;
mod synthetic;

pub use format::{read_manifest, read_sample, write_manifest, write_sample, Dataset, DatasetManifest, GridInfo, Sample, FORMAT_VERSION};
pub use normalize::{normalize_fields, NormRecord};
pub use split::{split_dataset, Split, SplitSpec};
pub use synthetic::{gen_synthetic, load_profile, solve_poisson, PoissonSolution, SynthConfig};
