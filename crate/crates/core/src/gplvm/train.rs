//! Joint training of the shared model: gradient ascent on
//! `ln p(Y|X) + ln p(Z|X)` over the back-constraint weights and both
//! log-hyperparameter triples, with `X = B W` always implied by the
//! current weights.
//!
//! The parameter vector is `[W row-major (N*q), ln hyper_Y (3),
//! ln hyper_Z (3)]`. Working in log space keeps every variance and width
//! positive without constraints, and the chain through `X = B W` turns
//! per-latent gradients into weight gradients with one product
//! (`dL/dW = B^T dL/dX`, `B` symmetric).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, RbfHyperparams};
use crate::optimize::{self, AscentConfig, StopReason};
use crate::LATENT_DIM;

use super::{log_marginal_chol, BackConstraintMap, SharedGplvmModel};

/// Knobs for [`train`]. Defaults fit a few dozen frames in well under a
/// second per part.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Base seed for restart perturbations.
    pub seed: u64,
    /// Optimization starts; the first uses the deterministic init, later
    /// ones perturb it. Best final objective wins.
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub initial_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 1,
            max_iters: 300,
            grad_tolerance: 1e-4,
            initial_step: 1e-3,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be >= 1".into()));
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

/// What the optimizer did, kept for logs and reports.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
    /// Objective after each accepted step of the winning restart
    /// (non-decreasing, starts at the initial objective).
    pub trace: Vec<f64>,
    pub best_restart: usize,
    pub restarts: usize,
}

/// Joint objective and gradient at a packed parameter vector.
///
/// `b` is the back-constraint feature matrix of the training poses against
/// themselves (N x N), `params` is `[W row-major, ln hyper_Y, ln hyper_Z]`.
/// Exposed so gradient checks can drive the exact surface the trainer
/// climbs.
pub fn joint_objective(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = y.nrows();
    let q = LATENT_DIM;
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "feature matrix is {}x{}, expected {n}x{n}",
            b.nrows(),
            b.ncols()
        )));
    }
    if z.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "robot block has {} rows for {n} poses",
            z.nrows()
        )));
    }
    let expect = n * q + 6;
    if params.len() != expect {
        return Err(Error::InvalidInput(format!(
            "parameter vector has length {}, expected {expect}",
            params.len()
        )));
    }

    let w = DMatrix::from_row_slice(n, q, &params[..n * q]);
    let hy = RbfHyperparams::from_log([params[n * q], params[n * q + 1], params[n * q + 2]])?;
    let hz =
        RbfHyperparams::from_log([params[n * q + 3], params[n * q + 4], params[n * q + 5]])?;
    let x = b * &w;

    let (val_y, grad_hy, dldx_y) = space_term(y, &x, &hy)?;
    let (val_z, grad_hz, dldx_z) = space_term(z, &x, &hz)?;

    let dldw = b.transpose() * (dldx_y + dldx_z);
    let mut grad = Vec::with_capacity(expect);
    for i in 0..n {
        for j in 0..q {
            grad.push(dldw[(i, j)]);
        }
    }
    grad.extend_from_slice(&grad_hy);
    grad.extend_from_slice(&grad_hz);
    Ok((val_y + val_z, grad))
}

/// One space's log marginal plus its gradients: the three log-hyper
/// partials and `dL/dX`.
fn space_term(
    data: &DMatrix<f64>,
    x: &DMatrix<f64>,
    h: &RbfHyperparams,
) -> Result<(f64, [f64; 3], DMatrix<f64>)> {
    let n = x.nrows();
    let d_out = data.ncols() as f64;
    let gf = kernels::gram_factorized(x, h)?;
    let value = log_marginal_chol(data, &gf.chol);

    // dL/dK = 1/2 (alpha alpha^T - D K^-1), symmetric.
    let alpha = gf.chol.solve(data);
    let kinv = gf.chol.inverse();
    let a = (&alpha * alpha.transpose() - kinv * d_out) * 0.5;

    let dks = kernels::grad_gram_hyper(x, h)?;
    let mut grad_h = [0.0; 3];
    for (g, dk) in grad_h.iter_mut().zip(dks.iter()) {
        *g = a.iter().zip(dk.iter()).map(|(ai, ki)| ai * ki).sum();
    }

    // Row n of K depends on x_n; with symmetric dL/dK the column
    // contribution doubles the row one.
    let layers = kernels::grad_gram_inputs(x, h)?;
    let mut dldx = DMatrix::zeros(n, x.ncols());
    for (d, layer) in layers.iter().enumerate() {
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[(i, j)] * layer[(i, j)];
            }
            dldx[(i, d)] = 2.0 * s;
        }
    }
    Ok((value, grad_h, dldx))
}

/// Median of the squared pairwise row distances; the back-constraint width
/// is its reciprocal, so features see O(1) exponents at typical pose
/// separations.
fn median_squared_distance(y: &DMatrix<f64>) -> Result<f64> {
    let n = y.nrows();
    let mut d2s = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for c in 0..y.ncols() {
                let d = y[(i, c)] - y[(j, c)];
                d2 += d * d;
            }
            d2s.push(d2);
        }
    }
    d2s.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = d2s.len() / 2;
    let median = if d2s.len() % 2 == 1 {
        d2s[mid]
    } else {
        0.5 * (d2s[mid - 1] + d2s[mid])
    };
    if median < 1e-12 {
        return Err(Error::InvalidInput(
            "training poses are nearly identical; cannot set back-constraint width".into(),
        ));
    }
    Ok(median)
}

/// Mean per-column population variance.
fn data_variance(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows() as f64;
    let mut acc = 0.0;
    for c in 0..m.ncols() {
        let col = m.column(c);
        let mean = col.sum() / n;
        acc += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    }
    acc / m.ncols() as f64
}

/// Column-standardized concatenation `[Y Z]`: one row per frame holding the
/// pose in both spaces with every coordinate on unit scale, so meters and
/// degrees weigh alike. Near-constant columns are left centered rather than
/// blown up.
fn joint_standardized(y: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let mut out = DMatrix::zeros(n, y.ncols() + z.ncols());
    for (off, src) in [(0, y), (y.ncols(), z)] {
        for c in 0..src.ncols() {
            let mean = src.column(c).sum() / n as f64;
            let var = src
                .column(c)
                .iter()
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let std = var.sqrt().max(1e-9);
            for r in 0..n {
                out[(r, off + c)] = (src[(r, c)] - mean) / std;
            }
        }
    }
    out
}

/// Top-two principal-component scores of `y`, each standardized to unit
/// variance. Seeds the latent space with the dominant pose structure.
fn pca_scores(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = y.nrows();
    let d = y.ncols();
    let mut centered = y.clone();
    for c in 0..d {
        let mean = centered.column(c).sum() / n as f64;
        for r in 0..n {
            centered[(r, c)] -= mean;
        }
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });

    let mut scores = DMatrix::zeros(n, LATENT_DIM);
    for (k, &idx) in order.iter().take(LATENT_DIM).enumerate() {
        let v = eig.eigenvectors.column(idx);
        for r in 0..n {
            let mut s = 0.0;
            for c in 0..d {
                s += centered[(r, c)] * v[c];
            }
            scores[(r, k)] = s;
        }
        let mean = scores.column(k).sum() / n as f64;
        let var = scores
            .column(k)
            .iter()
            .map(|s| (s - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt().max(1e-12);
        for r in 0..n {
            scores[(r, k)] = (scores[(r, k)] - mean) / std;
        }
    }
    Ok(scores)
}

/// Ridge fit of the initial weights so the back-constrained latents start
/// at the standardized PCA scores: `(B + r I) W0 = scores`.
fn initial_weights(b: &DMatrix<f64>, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let mut reg = b.clone();
    for i in 0..n {
        reg[(i, i)] += 1e-4;
    }
    let chol = nalgebra::Cholesky::new(reg).ok_or_else(|| {
        Error::Numerical("back-constraint feature matrix failed to factorize".into())
    })?;
    Ok(chol.solve(scores))
}

fn pack(w: &DMatrix<f64>, log_y: [f64; 3], log_z: [f64; 3]) -> Vec<f64> {
    let mut p = Vec::with_capacity(w.len() + 6);
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            p.push(w[(i, j)]);
        }
    }
    p.extend_from_slice(&log_y);
    p.extend_from_slice(&log_z);
    p
}

/// Train one body part's shared model from paired sequences: `y` holds the
/// (normalized) human part rows, `z` the robot part rows, one row per
/// frame, frames aligned.
pub fn train(
    part_name: &str,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<(SharedGplvmModel, TrainReport)> {
    cfg.validate()?;
    let n = y.nrows();
    if z.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "unpaired training data: {} human frames vs {} robot frames",
            n,
            z.nrows()
        )));
    }
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 paired frames to train, got {n}"
        )));
    }
    if y.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "training data contains non-finite values".into(),
        ));
    }
    let var_y = data_variance(y);
    let var_z = data_variance(z);
    if var_y <= 0.0 || var_z <= 0.0 {
        return Err(Error::InvalidInput(
            "training data has zero variance in one space".into(),
        ));
    }

    let width = 1.0 / median_squared_distance(y)?;
    let bc_probe = BackConstraintMap::new(y.clone(), width, DMatrix::zeros(n, LATENT_DIM))?;
    let b = bc_probe.features(y)?;

    // Initialize the latents from the joint data, not the human view alone:
    // poses that differ mainly on the robot side (the same lean with a
    // different head attitude, say) must start apart in latent space or the
    // ascent has to untangle crossed trajectories later.
    let scores = pca_scores(&joint_standardized(y, z))?;
    let w0 = initial_weights(&b, &scores)?;
    let log_y0 = RbfHyperparams::new(var_y, 1.0, 0.01 * var_y)?.to_log();
    let log_z0 = RbfHyperparams::new(var_z, 1.0, 0.01 * var_z)?.to_log();

    let ascent = cfg.ascent_config();
    let mut best: Option<(usize, optimize::AscentResult)> = None;
    for r in 0..cfg.restarts {
        let p0 = if r == 0 {
            pack(&w0, log_y0, log_z0)
        } else {
            // Golden-ratio stride keeps restart streams disjoint for any
            // base seed.
            let mut rng = ChaCha12Rng::seed_from_u64(
                cfg.seed.wrapping_add(r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let mut w = w0.clone();
            for v in w.iter_mut() {
                *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
            }
            let jig = |l: [f64; 3], rng: &mut ChaCha12Rng| {
                [
                    l[0] + 0.1 * rng.sample::<f64, _>(StandardNormal),
                    l[1] + 0.1 * rng.sample::<f64, _>(StandardNormal),
                    l[2] + 0.1 * rng.sample::<f64, _>(StandardNormal),
                ]
            };
            let ly = jig(log_y0, &mut rng);
            let lz = jig(log_z0, &mut rng);
            pack(&w, ly, lz)
        };
        let res = optimize::maximize(|p| joint_objective(y, z, &b, p), &p0, &ascent)?;
        let better = match &best {
            None => true,
            Some((_, cur)) => res.value > cur.value,
        };
        if better {
            best = Some((r, res));
        }
    }
    let (best_restart, res) = best.expect("restarts >= 1");

    let nq = n * LATENT_DIM;
    let w = DMatrix::from_row_slice(n, LATENT_DIM, &res.x[..nq]);
    let hy = RbfHyperparams::from_log([res.x[nq], res.x[nq + 1], res.x[nq + 2]])?;
    let hz = RbfHyperparams::from_log([res.x[nq + 3], res.x[nq + 4], res.x[nq + 5]])?;
    let bc = BackConstraintMap::new(y.clone(), width, w)?;
    let model = SharedGplvmModel::assemble(part_name, bc, z.clone(), hy, hz)?;
    let report = TrainReport {
        initial_objective: res.trace[0],
        final_objective: res.value,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        stop: res.stop,
        trace: res.trace,
        best_restart,
        restarts: cfg.restarts,
    };
    Ok((model, report))
}
