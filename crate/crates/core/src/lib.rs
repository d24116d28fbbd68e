//! Positively scale-invariant flatness analysis for ReLU multilayer
//! perceptrons.
//!
//! Rescaling a hidden ReLU node's incoming weights by `c > 0` and its
//! outgoing weights by `1 / c` leaves the network function unchanged, yet
//! moves the weights arbitrarily far. Weight-space flatness measures are not
//! invariant under these moves; measures taken over basis-path values are.
//!
//! The crate provides:
//!
//! - [`net`]: bias-free ReLU MLPs, softmax cross-entropy and backprop.
//! - [`paths`]: path values, skeleton weights, basis paths and the
//!   reconstruction of every path value from basis values.
//! - [`psi`]: positively scaling transformations, canonical representatives
//!   and the projection from basis values back to weights.
//! - [`flatness`]: ε-, trace- and expected-flatness over either space, the
//!   basis-value flatness bound and a PAC-Bayes report.
//! - [`landscape`]: random-direction loss slices and their export.
//! - [`train`]: datasets and SGD for producing minima.
//! - [`oracle`]: brute-force references used by tests.
//! - [`verify`]: the invariant suites behind `psiflat verify`.
//!
//! ```
//! use psiflat::{apply_scaling, extract_basis, Mlp, ScalingVector};
//!
//! let net = Mlp::new(vec![2, 1, 2], vec![vec![1.0, 2.0], vec![1.0, 3.0]])?;
//! let scaled = apply_scaling(&net, &ScalingVector::new(vec![4.0])?)?;
//! assert_eq!(scaled.predict(&[1.0, 1.0])?, vec![3.0, 9.0]);
//! assert_eq!(extract_basis(&scaled)?.values, extract_basis(&net)?.values);
//! # Ok::<(), psiflat::Error>(())
//! ```

pub mod checkpoint;
pub mod counterexample;
pub mod error;
pub mod flatness;
pub mod landscape;
pub mod net;
pub mod objective;
pub mod oracle;
pub mod paths;
pub mod psi;
pub mod rng;
pub mod train;
pub mod verify;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use error::{Error, Result};
pub use flatness::{
    eps_flatness, expected_flatness, pac_bayes_bound, psi_bound, trace_flatness, FlatnessConfig,
    FlatnessReport, Measure, PacBayesConfig, PsiBound, PsiBoundInputs, SearchConfig, TraceMode,
};
pub use landscape::{evaluate_grid, export_grid, sample_directions, ExportFormat, LandscapeConfig, LandscapeGrid};
pub use net::{ActivationRecord, Dataset, InitConfig, Mlp};
pub use objective::{FnObjective, Objective, PsiObjective, Space, WeightObjective};
pub use paths::{
    extract_basis, output_via_paths, path_value, reconstruct_nonbasis, select_skeleton,
    BasisKind, BasisPathSet, PathVector, SkeletonAssignment,
};
pub use psi::{apply_scaling, canonicalize, project_values_to_weights, CanonicalForm, PsiChart, ScalingVector};
pub use train::{make_dataset, sgd_train, DatasetSpec, TrainConfig, TrainRecord};
