//! Motion retargeting from human skeleton trajectories to humanoid motor
//! trajectories through small shared latent spaces.
//!
//! One 2-D latent space is learned per body part (left arm, right arm,
//! spine). Two Gaussian-process mappings leave each latent space: one into
//! the human joint-position space, one into the robot motor-angle space.
//! Both are fit jointly, and the latent locations themselves are tied to the
//! human poses through a smooth radial-basis map (a "back constraint"), so a
//! new human pose can be dropped into the latent space with a single matrix
//! product and carried over to the robot through the GP mean.
//!
//! On top of retargeting, the crate distills several demonstrations of an
//! exercise into one ideal latent trajectory (Gaussian mixture over time and
//! latent coordinates, then regression on time), and adapts the pose-to-latent
//! map to a new subject from a short recording so that differently
//! proportioned people land in the same latent region.
//!
//! # Modules
//!
//! - [`kernels`]: squared-exponential kernel, Gram matrices, analytic
//!   gradients, jitter policy.
//! - [`optimize`]: gradient ascent with backtracking line search, shared by
//!   model training and patient adaptation.
//! - [`motion`]: pose and sequence containers, body-part partition, phase
//!   resampling, skeleton normalization, CSV formats.
//! - [`gplvm`]: the shared two-output GP latent variable model: training,
//!   projection, prediction, posterior sampling, JSON persistence.
//! - [`trajectory`]: Gaussian-mixture fit over (time, latent) tuples and
//!   regression of latent coordinates on time; ideal-trajectory extraction.
//! - [`adaptation`]: patient-specific refit of the pose-to-latent map against
//!   an ideal latent trajectory, with an anchor to the therapist map.
//! - [`evaluation`]: RMSE in motor degrees, range-normalized RMSE,
//!   sampled-posterior evaluation.
//! - [`synth`]: deterministic synthetic exercise generator with a 12-joint
//!   forward-kinematic skeleton, 13 motors, and injectable execution errors.
//! - [`pipeline`]: file-level orchestration used by the CLI binary.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example generate_dataset
//! cargo run --example train_and_retarget
//! cargo run --example posterior_samples
//! cargo run --example ideal_trajectory
//! cargo run --example adapt_patient
//! cargo run --example gradient_check
//! ```

pub mod adaptation;
pub mod error;
pub mod evaluation;
pub mod gplvm;
pub mod kernels;
pub mod motion;
pub mod optimize;
pub mod pipeline;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};

/// Latent dimensionality of every per-part model.
///
/// Two is deliberate: large enough for closed periodic movements, small
/// enough that mixture fits over (time, latent) tuples stay well conditioned
/// with a handful of demonstrations.
pub const LATENT_DIM: usize = 2;
