//! Two-stage cascaded channel estimation for RIS-aided mmWave MIMO systems
//! where the base-station/RIS link is far-field and the RIS/user links sit in
//! the radiating near field of an extremely large surface.
//!
//! The crate is organized around the estimation pipeline:
//!
//! * [`channel`] — steering vectors, sensing dictionaries, and the random
//!   scenario sampler that produces ground-truth channels.
//! * [`pilots`] — RIS training patterns and noisy observation synthesis.
//! * [`sparse`] — greedy sparse recovery (OMP, simultaneous OMP, look-ahead
//!   OMP) and regularized least-squares utilities.
//! * [`stage1`] — typical-user initialization: user-side support recovery,
//!   virtual users, BS angle estimation, reference-path polar recovery, and
//!   common-operator initialization.
//! * [`stage2`] — bilinear alternating-least-squares refinement across all
//!   virtual users and final cascaded-channel reconstruction.
//! * [`metrics`] — NMSE evaluation, pilot-overhead formulas, and operation
//!   counters.
//! * [`estimator`] — glue that runs the full pipeline on one realization.
//! * [`harness`] — configuration, presets, the Monte-Carlo experiment driver,
//!   and CSV/JSON result emission.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod pilots;
pub mod rng;
pub mod sparse;
pub mod stage1;
pub mod stage2;
pub use channel::{
    AngularDictionary, ChannelSet, DictionarySet, FarFieldPath, NearFieldPath, PolarDictionary,
    SamplingMode, SystemConfig,
};
pub use error::Error;
pub use estimator::{EstimatorConfig, SideInfo, TrialEstimate, VariantKind};
pub use harness::{ExperimentSpec, OutputFormat, ResultRow, SweepParam, VariantSpec};
pub use metrics::{MetricsReport, NmseMode, OpCounters, OverheadConstants};
pub use pilots::{ObservationSet, TrainingPattern, TrainingScheme};
pub use sparse::{RowSparseSolution, SparseSolution};
pub use stage1::{BsAngles, Stage1Result, VirtualUserSet};
pub use stage2::{AlsState, CommonOperator, FinalEstimates};


/// Complex scalar used throughout the crate.
pub type Cplx = num_complex::Complex64;

/// Complex dense matrix.
pub type CMat = nalgebra::DMatrix<Cplx>;

/// Complex dense column vector.
pub type CVec = nalgebra::DVector<Cplx>;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
