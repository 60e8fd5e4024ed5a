//! Patient-specific back-constraint adaptation.
//!
//! A trained model projects poses through `h(y; W)`. A patient moves
//! differently from the demonstrator, so their frames land in the wrong
//! region of the latent space. Adaptation refits only the projection
//! weights so the patient's own recording of an exercise lands on that
//! exercise's ideal latent path, leaving the GP mappings untouched:
//!
//! ```text
//! L(W_P) = -1/(2 sa2). sum_t ||h(y_t; W_P) - x*_t||^2
//!          - lambda ||W_P - W||_F^2
//! ```
//!
//! with `sa2` the alignment variance and `lambda` anchoring the adapted
//! weights to the trained ones. Both terms are quadratic in `W_P`, so the
//! shared gradient-ascent optimizer converges to the unique maximum.
//!
//! The target path `x*` must already be resampled to the patient's frame
//! count; [`adapt`] rejects length mismatches rather than guessing an
//! alignment.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gplvm::serialize::matrix_checksum;
use crate::gplvm::{BackConstraintMap, SharedGplvmModel};
use crate::optimize::{self, AscentConfig};
use crate::LATENT_DIM;

/// Bump when the profile schema changes shape or meaning.
pub const PROFILE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// `sa2`: how tightly projected frames are pulled onto the target path.
    pub alignment_variance: f64,
    /// `lambda`: how strongly the adapted weights stay near the trained ones.
    pub regularization: f64,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub initial_step: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            alignment_variance: 0.01,
            regularization: 1e-3,
            max_iters: 200,
            grad_tolerance: 1e-5,
            initial_step: 1e-3,
        }
    }
}

impl AdaptConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alignment_variance.is_finite() && self.alignment_variance > 0.0) {
            return Err(Error::InvalidInput(
                "alignment_variance must be finite and > 0".into(),
            ));
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(Error::InvalidInput(
                "regularization must be finite and >= 0".into(),
            ));
        }
        self.ascent_config().validate()
    }

    fn ascent_config(&self) -> AscentConfig {
        AscentConfig {
            max_iters: self.max_iters,
            grad_tolerance: self.grad_tolerance,
            initial_step: self.initial_step,
            ..AscentConfig::default()
        }
    }
}

/// Objective and gradient at weights `w_flat` (row-major N x q).
///
/// `b` holds the patient frames' back-constraint features against the
/// model centers (T x N), `target` the aligned latent path (T x q), `w0`
/// the trained weights. Exposed so gradient checks can drive the exact
/// surface [`adapt`] climbs.
pub fn adaptation_objective(
    b: &DMatrix<f64>,
    target: &DMatrix<f64>,
    w0: &DMatrix<f64>,
    cfg: &AdaptConfig,
    w_flat: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = w0.nrows();
    let q = w0.ncols();
    if w_flat.len() != n * q {
        return Err(Error::InvalidInput(format!(
            "weight vector has length {}, expected {}",
            w_flat.len(),
            n * q
        )));
    }
    let w = DMatrix::from_row_slice(n, q, w_flat);
    let resid = b * &w - target;
    let drift = &w - w0;
    let sa2 = cfg.alignment_variance;
    let value = -resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * sa2)
        - cfg.regularization * drift.iter().map(|d| d * d).sum::<f64>();

    let grad_m = b.transpose() * resid * (-1.0 / sa2) - drift * (2.0 * cfg.regularization);
    let mut grad = Vec::with_capacity(n * q);
    for i in 0..n {
        for j in 0..q {
            grad.push(grad_m[(i, j)]);
        }
    }
    Ok((value, grad))
}

/// One part's adaptation result: the refitted projection weights, the
/// checksum of the base model block they adapt, and how the fit went.
#[derive(Clone, Debug)]
pub struct PartAdaptation {
    part: String,
    base_checksum: String,
    weights: DMatrix<f64>,
    initial_objective: f64,
    final_objective: f64,
    iterations: usize,
    grad_norm: f64,
    stop: String,
}

impl PartAdaptation {
    pub fn part(&self) -> &str {
        &self.part
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn initial_objective(&self) -> f64 {
        self.initial_objective
    }

    pub fn final_objective(&self) -> f64 {
        self.final_objective
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    pub fn stop(&self) -> &str {
        &self.stop
    }
}

#[derive(Serialize, Deserialize)]
struct PartAdaptationFile {
    part: String,
    base_checksum: String,
    weights: Vec<Vec<f64>>,
    initial_objective: f64,
    final_objective: f64,
    iterations: usize,
    grad_norm: f64,
    stop: String,
}

impl Serialize for PartAdaptation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PartAdaptationFile {
            part: self.part.clone(),
            base_checksum: self.base_checksum.clone(),
            weights: (0..self.weights.nrows())
                .map(|i| self.weights.row(i).iter().copied().collect())
                .collect(),
            initial_objective: self.initial_objective,
            final_objective: self.final_objective,
            iterations: self.iterations,
            grad_norm: self.grad_norm,
            stop: self.stop.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartAdaptation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = PartAdaptationFile::deserialize(d)?;
        if f.weights.is_empty() {
            return Err(serde::de::Error::custom("adaptation has no weight rows"));
        }
        if f.weights.iter().any(|r| r.len() != LATENT_DIM) {
            return Err(serde::de::Error::custom(format!(
                "adaptation weights must have {LATENT_DIM} columns"
            )));
        }
        let flat: Vec<f64> = f.weights.iter().flatten().copied().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("adaptation weights are non-finite"));
        }
        Ok(PartAdaptation {
            part: f.part,
            base_checksum: f.base_checksum,
            weights: DMatrix::from_row_slice(f.weights.len(), LATENT_DIM, &flat),
            initial_objective: f.initial_objective,
            final_objective: f.final_objective,
            iterations: f.iterations,
            grad_norm: f.grad_norm,
            stop: f.stop,
        })
    }
}

/// Per-patient adaptation bundle: one [`PartAdaptation`] per adapted part,
/// tagged with the exercise the target paths came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatientProfile {
    version: u32,
    exercise: String,
    parts: Vec<PartAdaptation>,
}

impl PatientProfile {
    pub fn new(exercise: impl Into<String>, parts: Vec<PartAdaptation>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("profile has no adapted parts".into()));
        }
        Ok(Self {
            version: PROFILE_FORMAT_VERSION,
            exercise: exercise.into(),
            parts,
        })
    }

    pub fn exercise(&self) -> &str {
        &self.exercise
    }

    pub fn parts(&self) -> &[PartAdaptation] {
        &self.parts
    }

    pub fn part_named(&self, name: &str) -> Option<&PartAdaptation> {
        self.parts.iter().find(|p| p.part == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("profile schema serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let profile: PatientProfile = serde_json::from_str(json)
            .map_err(|e| Error::Parse(format!("patient profile: {e}")))?;
        if profile.version != PROFILE_FORMAT_VERSION {
            return Err(Error::Compatibility(format!(
                "patient profile has format version {}, this build reads {PROFILE_FORMAT_VERSION}",
                profile.version
            )));
        }
        Ok(profile)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_json(&json).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Refit one part's projection weights so the patient sequence lands on
/// the target latent path.
///
/// `patient` holds the normalized human part rows (T x D_part), `target`
/// the aligned ideal latent path (T x q).
pub fn adapt(
    model: &SharedGplvmModel,
    patient: &DMatrix<f64>,
    target: &DMatrix<f64>,
    cfg: &AdaptConfig,
) -> Result<PartAdaptation> {
    cfg.validate()?;
    let t = patient.nrows();
    if target.nrows() != t {
        return Err(Error::InvalidInput(format!(
            "patient sequence has {t} frames but the target path has {}; resample the \
             target to the patient length first",
            target.nrows()
        )));
    }
    if t < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 patient frames, got {t}"
        )));
    }
    if target.ncols() != LATENT_DIM {
        return Err(Error::InvalidInput(format!(
            "target path has dim {}, latent dim is {LATENT_DIM}",
            target.ncols()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("target path has non-finite values".into()));
    }

    // Feature validation (pose dim, finiteness) happens here.
    let b = model.bc().features(patient)?;
    let w0 = model.bc().weights();

    let flat0: Vec<f64> = (0..w0.nrows())
        .flat_map(|i| w0.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    let res = optimize::maximize(
        |w| adaptation_objective(&b, target, w0, cfg, w),
        &flat0,
        &cfg.ascent_config(),
    )?;

    let weights = DMatrix::from_row_slice(w0.nrows(), LATENT_DIM, &res.x);
    Ok(PartAdaptation {
        part: model.part_name().to_string(),
        base_checksum: matrix_checksum(model.bc().centers()),
        weights,
        initial_objective: res.trace[0],
        final_objective: res.value,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        stop: res.stop.to_string(),
    })
}

/// The adapted projection map for one part: the base model's centers and
/// width with the profile's weights.
///
/// Fails with an invalid-state error when the profile has no adaptation
/// for the model's part, and an incompatibility error when the profile was
/// adapted from a different base model.
pub fn adapted_bc(
    profile: &PatientProfile,
    model: &SharedGplvmModel,
) -> Result<BackConstraintMap> {
    let part = profile.part_named(model.part_name()).ok_or_else(|| {
        Error::State(format!(
            "patient profile has no adaptation for part '{}'",
            model.part_name()
        ))
    })?;
    let current = matrix_checksum(model.bc().centers());
    if part.base_checksum != current {
        return Err(Error::Compatibility(format!(
            "patient profile for part '{}' was adapted from a different base model",
            model.part_name()
        )));
    }
    model.bc().with_weights(part.weights.clone())
}

/// Project a patient's (normalized) part sequence through their adapted
/// map.
pub fn project_patient(
    profile: &PatientProfile,
    model: &SharedGplvmModel,
    poses: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    adapted_bc(profile, model)?.project_seq(poses)
}
