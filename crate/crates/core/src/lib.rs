//! Border-core instance segmentation for large volumetric particle images.
//!
//! The crate is organised bottom-up:
//!
//! * [`volume`] dense 3D containers plus the chunked on-disk block store,
//! * [`preprocess`] intensity z-scoring and particle-size resampling,
//! * [`morph`] binary morphology, distance transforms, component labelling
//!   and the seeded watershed,
//! * [`bordercore`] instance ⇄ border-core conversion (in memory and streamed),
//! * [`infer`] the chunk/patch sliding-window harness around a [`infer::PatchPredictor`],
//! * [`classical`] the threshold + watershed baseline and the geodesic splitter,
//! * [`augment`] touching-particle augmentation and training-pair export,
//! * [`metrics`] voxel/match/instance F1 and merger/splitter analysis,
//! * [`synth`] synthetic particle phantoms with exact ground truth.
//!
//! Voxels are linearised x-fastest everywhere: `index = x + nx * (y + ny * z)`.

pub mod augment;
pub mod bordercore;
pub mod classical;
pub mod error;
pub mod infer;
pub mod metrics;
pub mod morph;
pub mod preprocess;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{
    DType, LabelVolume, Mask, ScalarVolume, SemanticVolume, Volume, VolumeKind, VolumeMeta,
};
