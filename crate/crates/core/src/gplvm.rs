//! Shared Gaussian-process latent variable model with back constraints.
//!
//! Per body part, one 2-D latent space feeds two GP mappings: latent ->
//! human joint coordinates and latent -> robot motor angles. The latent
//! location of training frame `n` is not free: it is tied to the human pose
//! through a radial-basis map ([`BackConstraintMap`])
//!
//! ```text
//! x_n = h(y_n; W) = sum_m W[m, :] * exp(-bc_width/2 * ||y_n - y_m||^2)
//! ```
//!
//! whose centers are the training poses themselves. Training
//! ([`train::train`]) maximizes the product of the two GP marginal
//! likelihoods over `W` and both kernel hyperparameter triples; the smooth
//! map then projects unseen poses into the latent space with one feature
//! product, and [`SharedGplvmModel::predict`] carries latent points into
//! either observation space through the GP posterior mean.
//!
//! Both GPs are zero-mean on the raw training data (no centering): far from
//! the data the posterior mean reverts to zero and the variance to
//! signal + noise variance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{self, GramFactor, RbfHyperparams};
use crate::motion::{merge_parts, split_by_part, BodyPartPartition, MotionSequence};

pub mod serialize;
pub mod train;

pub use train::{train, TrainConfig, TrainReport};

/// Which observation space a prediction targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    /// Human joint coordinates (normalized skeleton units).
    Human,
    /// Robot motor angles (degrees).
    Robot,
}

/// Smooth pose-to-latent map `x = h(y; W)`: RBF features against the
/// training poses, linearly combined by `W` (one row per center).
#[derive(Clone, Debug, PartialEq)]
pub struct BackConstraintMap {
    centers: DMatrix<f64>,
    width: f64,
    weights: DMatrix<f64>,
}

impl BackConstraintMap {
    pub fn new(centers: DMatrix<f64>, width: f64, weights: DMatrix<f64>) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(Error::InvalidInput("back constraint: no centers".into()));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "back constraint width must be finite and > 0, got {width}"
            )));
        }
        if weights.nrows() != centers.nrows() {
            return Err(Error::InvalidInput(format!(
                "back constraint: {} weight rows for {} centers",
                weights.nrows(),
                centers.nrows()
            )));
        }
        if centers.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "back constraint: non-finite centers or weights".into(),
            ));
        }
        Ok(Self {
            centers,
            width,
            weights,
        })
    }

    /// Same centers and width, different weights. Used by patient
    /// adaptation, which refits only `W`.
    pub fn with_weights(&self, weights: DMatrix<f64>) -> Result<Self> {
        Self::new(self.centers.clone(), self.width, weights)
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Feature matrix of query poses against the centers:
    /// `B[(t, m)] = exp(-width/2 * ||y_t - c_m||^2)`, so projected latents
    /// are `B * W`.
    pub fn features(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if ys.ncols() != self.centers.ncols() {
            return Err(Error::InvalidInput(format!(
                "back constraint: pose dim {} != center dim {}",
                ys.ncols(),
                self.centers.ncols()
            )));
        }
        if ys.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "back constraint: non-finite query pose".into(),
            ));
        }
        let n = self.centers.nrows();
        Ok(DMatrix::from_fn(ys.nrows(), n, |t, m| {
            let mut d2 = 0.0;
            for c in 0..ys.ncols() {
                let d = ys[(t, c)] - self.centers[(m, c)];
                d2 += d * d;
            }
            (-0.5 * self.width * d2).exp()
        }))
    }

    /// Project one pose-part vector into the latent space.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let ys = DMatrix::from_row_slice(1, y.len(), y);
        let x = self.project_seq(&ys)?;
        Ok(x.row(0).iter().copied().collect())
    }

    /// Project a stack of pose-part rows; returns T x q latent locations.
    pub fn project_seq(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.features(ys)? * &self.weights)
    }
}

/// `ln p(data | K)` for a zero-mean GP with `D` independent output
/// dimensions sharing the Gram matrix `K`:
///
/// ```text
/// -(D*N/2) ln 2pi - (D/2) ln|K| - 1/2 tr(K^-1 data dataT)
/// ```
///
/// The log-determinant comes off the Cholesky diagonal and the trace from
/// triangular solves; `K` is factorized as given (no jitter is added here).
pub fn log_marginal(data: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    if k.nrows() != k.ncols() {
        return Err(Error::InvalidInput(format!(
            "log_marginal: K must be square, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if data.nrows() != k.nrows() {
        return Err(Error::InvalidInput(format!(
            "log_marginal: {} data rows for {}x{} K",
            data.nrows(),
            k.nrows(),
            k.ncols()
        )));
    }
    let chol = nalgebra::Cholesky::new(k.clone()).ok_or_else(|| {
        Error::Numerical("log_marginal: Gram matrix is not positive definite".into())
    })?;
    Ok(log_marginal_chol(data, &chol))
}

pub(crate) fn log_marginal_chol(
    data: &DMatrix<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> f64 {
    let n = data.nrows() as f64;
    let d = data.ncols() as f64;
    let l = chol.l();
    let log_det = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let alpha = chol.solve(data);
    let quad: f64 = data.iter().zip(alpha.iter()).map(|(a, b)| a * b).sum();
    -0.5 * (d * n * (2.0 * std::f64::consts::PI).ln() + d * log_det + quad)
}

struct SpaceCache {
    gram: GramFactor,
    /// `K^-1 * data`; posterior means are `k_star^T * alpha`.
    alpha: DMatrix<f64>,
}

/// A trained per-body-part model: back-constraint map, both observation
///-space training blocks, kernel hyperparameters, and cached factorizations
/// of the two Gram matrices at the training latents.
pub struct SharedGplvmModel {
    part_name: String,
    bc: BackConstraintMap,
    train_z: DMatrix<f64>,
    hyper_y: RbfHyperparams,
    hyper_z: RbfHyperparams,
    latent: DMatrix<f64>,
    cache_y: SpaceCache,
    cache_z: SpaceCache,
}

impl std::fmt::Debug for SharedGplvmModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedGplvmModel")
            .field("part", &self.part_name)
            .field("n_train", &self.latent.nrows())
            .field("hyper_y", &self.hyper_y)
            .field("hyper_z", &self.hyper_z)
            .finish_non_exhaustive()
    }
}

impl SharedGplvmModel {
    /// Build a model from its persisted parts and recompute the caches.
    /// The training human poses are the back-constraint centers.
    pub fn assemble(
        part_name: impl Into<String>,
        bc: BackConstraintMap,
        train_z: DMatrix<f64>,
        hyper_y: RbfHyperparams,
        hyper_z: RbfHyperparams,
    ) -> Result<Self> {
        let n = bc.centers().nrows();
        if train_z.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "robot training block has {} rows for {n} poses",
                train_z.nrows()
            )));
        }
        if train_z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "robot training block contains non-finite values".into(),
            ));
        }
        let latent = bc.project_seq(bc.centers())?;
        let gram_y = kernels::gram_factorized(&latent, &hyper_y)?;
        let gram_z = kernels::gram_factorized(&latent, &hyper_z)?;
        let alpha_y = gram_y.chol.solve(bc.centers());
        let alpha_z = gram_z.chol.solve(&train_z);
        Ok(Self {
            part_name: part_name.into(),
            bc,
            train_z,
            hyper_y,
            hyper_z,
            latent,
            cache_y: SpaceCache {
                gram: gram_y,
                alpha: alpha_y,
            },
            cache_z: SpaceCache {
                gram: gram_z,
                alpha: alpha_z,
            },
        })
    }

    pub fn part_name(&self) -> &str {
        &self.part_name
    }

    pub fn n_train(&self) -> usize {
        self.latent.nrows()
    }

    pub fn bc(&self) -> &BackConstraintMap {
        &self.bc
    }

    /// Training latent locations, `h(train_y; W)` by construction.
    pub fn latent(&self) -> &DMatrix<f64> {
        &self.latent
    }

    pub fn hyper(&self, space: Space) -> &RbfHyperparams {
        match space {
            Space::Human => &self.hyper_y,
            Space::Robot => &self.hyper_z,
        }
    }

    pub fn train_data(&self, space: Space) -> &DMatrix<f64> {
        match space {
            Space::Human => self.bc.centers(),
            Space::Robot => &self.train_z,
        }
    }

    fn cache(&self, space: Space) -> &SpaceCache {
        match space {
            Space::Human => &self.cache_y,
            Space::Robot => &self.cache_z,
        }
    }

    /// `ln p(Y|X) + ln p(Z|X)` at the trained parameters.
    pub fn joint_log_marginal(&self) -> f64 {
        log_marginal_chol(self.bc.centers(), &self.cache_y.gram.chol)
            + log_marginal_chol(&self.train_z, &self.cache_z.gram.chol)
    }

    /// Project a pose-part vector through the back-constraint map.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.bc.project(y)
    }

    fn query_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.latent.ncols() {
            return Err(Error::InvalidInput(format!(
                "latent query has dim {}, model latent dim is {}",
                x.len(),
                self.latent.ncols()
            )));
        }
        Ok(DMatrix::from_row_slice(1, x.len(), x))
    }

    /// GP posterior mean at one latent point.
    pub fn predict(&self, x: &[f64], space: Space) -> Result<Vec<f64>> {
        let xq = self.query_matrix(x)?;
        let out = self.predict_seq(&xq, space)?;
        Ok(out.row(0).iter().copied().collect())
    }

    /// Posterior mean at a stack of latent rows; returns T x D.
    pub fn predict_seq(&self, xq: &DMatrix<f64>, space: Space) -> Result<DMatrix<f64>> {
        let cache = self.cache(space);
        let ks = kernels::cross(&self.latent, xq, self.hyper(space))?;
        Ok(ks.transpose() * &cache.alpha)
    }

    /// Posterior variance at one latent point. Every output dimension of a
    /// space shares one kernel, so they share this variance. Tiny negative
    /// values from rounding (>= -1e-10) clamp to zero; anything lower is a
    /// numerical error.
    pub fn predict_var(&self, x: &[f64], space: Space) -> Result<f64> {
        let xq = self.query_matrix(x)?;
        let h = self.hyper(space);
        let cache = self.cache(space);
        let ks = kernels::cross(&self.latent, &xq, h)?;
        let solved = cache.gram.chol.solve(&ks);
        let explained: f64 = ks.iter().zip(solved.iter()).map(|(a, b)| a * b).sum();
        let v = h.signal_variance() + h.noise_variance() - explained;
        if v < -1e-10 {
            return Err(Error::Numerical(format!(
                "negative predictive variance {v:.3e}"
            )));
        }
        Ok(v.max(0.0))
    }

    /// Draw one trajectory from the joint posterior over the query rows.
    ///
    /// The posterior covariance over the T queries (including observation
    /// noise on its diagonal) is factorized once; each output dimension then
    /// takes `mean + L * xi` with fresh standard-normal draws, dimension by
    /// dimension in column order, so results are deterministic per rng
    /// stream.
    pub fn sample_sequence<R: Rng>(
        &self,
        xq: &DMatrix<f64>,
        space: Space,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        if xq.ncols() != self.latent.ncols() {
            return Err(Error::InvalidInput(format!(
                "latent query has dim {}, model latent dim is {}",
                xq.ncols(),
                self.latent.ncols()
            )));
        }
        let h = self.hyper(space);
        let cache = self.cache(space);
        let t = xq.nrows();

        let ks = kernels::cross(&self.latent, xq, h)?;
        let mean = ks.transpose() * &cache.alpha;

        let mut cov = kernels::cross(xq, xq, h)?;
        let noise = h.noise_variance();
        for i in 0..t {
            cov[(i, i)] += noise;
        }
        cov -= ks.transpose() * cache.gram.chol.solve(&ks);
        // The subtraction can leave rounding asymmetry; factorization
        // assumes exact symmetry.
        for i in 0..t {
            for j in (i + 1)..t {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        let (_, chol, _) = kernels::cholesky_with_escalation(
            &cov,
            h.signal_variance(),
            "posterior covariance",
        )?;
        let l = chol.l();

        let d_out = cache.alpha.ncols();
        let mut out = DMatrix::zeros(t, d_out);
        for d in 0..d_out {
            let xi = DVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
            let col = &l * xi;
            for i in 0..t {
                out[(i, d)] = mean[(i, d)] + col[i];
            }
        }
        Ok(out)
    }

    /// Project every frame of a (normalized) human part sequence and carry
    /// it to the robot part space through the posterior mean.
    pub fn retarget(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        let x = self.bc.project_seq(seq.data())?;
        let z = self.predict_seq(&x, Space::Robot)?;
        MotionSequence::new(seq.timestamps().to_vec(), z)
    }
}

/// One trained model per body part plus the partition that routes pose and
/// motor columns to them.
pub struct ModelSet {
    partition: BodyPartPartition,
    models: Vec<SharedGplvmModel>,
}

impl std::fmt::Debug for ModelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.models.iter()).finish()
    }
}

impl ModelSet {
    /// Models must line up with the partition parts by name and order.
    pub fn new(partition: BodyPartPartition, models: Vec<SharedGplvmModel>) -> Result<Self> {
        if models.len() != partition.parts().len() {
            return Err(Error::InvalidInput(format!(
                "{} models for {} partition parts",
                models.len(),
                partition.parts().len()
            )));
        }
        for (part, model) in partition.parts().iter().zip(&models) {
            if part.name != model.part_name() {
                return Err(Error::InvalidInput(format!(
                    "model for part '{}' does not match partition part '{}'",
                    model.part_name(),
                    part.name
                )));
            }
        }
        Ok(Self { partition, models })
    }

    pub fn partition(&self) -> &BodyPartPartition {
        &self.partition
    }

    pub fn models(&self) -> &[SharedGplvmModel] {
        &self.models
    }

    pub fn model_named(&self, name: &str) -> Option<&SharedGplvmModel> {
        self.models.iter().find(|m| m.part_name() == name)
    }

    /// Retarget a full normalized human sequence to a full robot sequence,
    /// part by part.
    pub fn retarget_sequence(&self, human: &MotionSequence) -> Result<MotionSequence> {
        let parts = split_by_part(human, &self.partition)?;
        let retargeted: Vec<MotionSequence> = self
            .models
            .iter()
            .zip(&parts)
            .map(|(m, p)| m.retarget(p))
            .collect::<Result<_>>()?;
        merge_parts(&retargeted, &self.partition)
    }

    /// Per-part latent trajectories of a full normalized human sequence,
    /// in partition order.
    pub fn project_sequence(&self, human: &MotionSequence) -> Result<Vec<DMatrix<f64>>> {
        let parts = split_by_part(human, &self.partition)?;
        self.models
            .iter()
            .zip(&parts)
            .map(|(m, p)| m.bc().project_seq(p.data()))
            .collect()
    }
}
