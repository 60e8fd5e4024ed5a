//! Squared-exponential kernel with analytic gradients.
//!
//! Everything downstream (model training, prediction, posterior sampling)
//! goes through the two entry points here: [`gram_factorized`] for a
//! training-input Gram matrix with a guaranteed Cholesky factor, and
//! [`cross`] for kernel blocks between two point sets.
//!
//! Hyperparameters are stored as logs. Optimizers step the log values
//! directly, which keeps signal variance, inverse width and noise variance
//! structurally positive without bound constraints.
//!
//! Jitter policy: every Gram diagonal carries `jitter_factor * signal_variance`
//! on top of the noise variance, starting at [`BASE_JITTER_FACTOR`]. If the
//! Cholesky factorization fails, the factor escalates tenfold per attempt up
//! to [`MAX_JITTER_FACTOR`]; only then does the operation give up with a
//! numerical error. Analytic gradients assume the base factor. An escalated
//! factor perturbs the gradient by at most 1e-4 * signal_variance on the
//! diagonal, which the line search in `optimize` absorbs.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Initial ratio of diagonal jitter to signal variance.
pub const BASE_JITTER_FACTOR: f64 = 1e-8;

/// Largest jitter ratio tried before a factorization is declared failed.
pub const MAX_JITTER_FACTOR: f64 = 1e-4;

/// Hyperparameters of the squared-exponential kernel
///
/// ```text
/// k(a, b) = sv * exp(-iw/2 * ||a - b||^2) + [a == b] * (noise + jitter)
/// ```
///
/// stored as `(ln sv, ln iw, ln noise)`. All three are finite, so the
/// plain-space values are always strictly positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfHyperparams {
    log_signal_variance: f64,
    log_inverse_width: f64,
    log_noise_variance: f64,
}

impl RbfHyperparams {
    /// Build from plain-space values. Each must be finite and strictly
    /// positive; a zero would have no logarithm and would break the
    /// log-space optimizer contract.
    pub fn new(signal_variance: f64, inverse_width: f64, noise_variance: f64) -> Result<Self> {
        for (name, v) in [
            ("signal_variance", signal_variance),
            ("inverse_width", inverse_width),
            ("noise_variance", noise_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "kernel {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            log_signal_variance: signal_variance.ln(),
            log_inverse_width: inverse_width.ln(),
            log_noise_variance: noise_variance.ln(),
        })
    }

    /// Build from log-space values `[ln sv, ln iw, ln noise]`.
    pub fn from_log(log: [f64; 3]) -> Result<Self> {
        if log.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "log-space kernel parameters must be finite, got {log:?}"
            )));
        }
        Ok(Self {
            log_signal_variance: log[0],
            log_inverse_width: log[1],
            log_noise_variance: log[2],
        })
    }

    pub fn to_log(self) -> [f64; 3] {
        [
            self.log_signal_variance,
            self.log_inverse_width,
            self.log_noise_variance,
        ]
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn inverse_width(&self) -> f64 {
        self.log_inverse_width.exp()
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }
}

fn validate_points(name: &str, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "{name}: point matrix must be non-empty, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name}: point matrix contains non-finite values"
        )));
    }
    Ok(())
}

/// Noise-free kernel block between row-point sets: `out[(i, j)] = sv * exp(-iw/2 ||x_i - s_j||^2)`.
///
/// `(i, j)` and `(j, i)` of a self-block are computed from the same
/// floating-point terms, so the result is bitwise symmetric without an
/// explicit mirroring pass.
fn rbf_block(x: &DMatrix<f64>, s: &DMatrix<f64>, h: &RbfHyperparams) -> DMatrix<f64> {
    let sv = h.signal_variance();
    let iw = h.inverse_width();
    DMatrix::from_fn(x.nrows(), s.nrows(), |i, j| {
        let mut d2 = 0.0;
        for c in 0..x.ncols() {
            let d = x[(i, c)] - s[(j, c)];
            d2 += d * d;
        }
        sv * (-0.5 * iw * d2).exp()
    })
}

/// Kernel block between two point sets, rows as points. No noise or jitter
/// is added, even where a row of `x` coincides with a row of `s`.
pub fn cross(x: &DMatrix<f64>, s: &DMatrix<f64>, h: &RbfHyperparams) -> Result<DMatrix<f64>> {
    validate_points("cross(x)", x)?;
    validate_points("cross(s)", s)?;
    if x.ncols() != s.ncols() {
        return Err(Error::InvalidInput(format!(
            "cross: point dimensionality mismatch, {} vs {}",
            x.ncols(),
            s.ncols()
        )));
    }
    Ok(rbf_block(x, s, h))
}

/// Gram matrix plus its Cholesky factor and the jitter that made the
/// factorization succeed.
pub struct GramFactor {
    /// `sv * E + (noise + jitter) * I`, symmetric.
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    /// Absolute jitter on the diagonal (`factor * signal_variance`).
    pub jitter: f64,
}

impl GramFactor {
    /// `ln det K`, read off the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

/// Add `jitter_factor * scale` to the diagonal of `base`, escalating the
/// factor tenfold from [`BASE_JITTER_FACTOR`] to [`MAX_JITTER_FACTOR`] until
/// the Cholesky factorization succeeds.
///
/// `base` must already contain every diagonal term except the jitter.
/// Returns the factor (matrix, Cholesky, absolute jitter used).
pub(crate) fn cholesky_with_escalation(
    base: &DMatrix<f64>,
    scale: f64,
    context: &str,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>, f64)> {
    // Exact powers of ten; accumulating `factor *= 10.0` would drift.
    const LADDER: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
    for factor in LADDER {
        let jitter = factor * scale;
        let mut k = base.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k.clone()) {
            return Ok((k, chol, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "{context}: Cholesky failed up to jitter {MAX_JITTER_FACTOR:.1e} * scale (scale {scale:.3e})"
    )))
}

/// Training Gram matrix `K = sv * E + (noise + jitter) * I` with its Cholesky
/// factor. Fails with a numerical error only after jitter escalation is
/// exhausted.
pub fn gram_factorized(x: &DMatrix<f64>, h: &RbfHyperparams) -> Result<GramFactor> {
    validate_points("gram", x)?;
    let mut base = rbf_block(x, x, h);
    let noise = h.noise_variance();
    for i in 0..base.nrows() {
        base[(i, i)] += noise;
    }
    let (matrix, chol, jitter) = cholesky_with_escalation(&base, h.signal_variance(), "gram")?;
    Ok(GramFactor {
        matrix,
        chol,
        jitter,
    })
}

/// Training Gram matrix alone. Same contract as [`gram_factorized`]: the
/// returned matrix is the one that factorized, so its diagonal reflects any
/// escalated jitter.
pub fn gram(x: &DMatrix<f64>, h: &RbfHyperparams) -> Result<DMatrix<f64>> {
    gram_factorized(x, h).map(|g| g.matrix)
}

/// Derivatives of the Gram matrix with respect to the log hyperparameters,
/// in the order `[d/d ln sv, d/d ln iw, d/d ln noise]`.
///
/// The jitter term is differentiated at the base factor; see the module
/// docs for why an escalated factor is tolerated.
pub fn grad_gram_hyper(x: &DMatrix<f64>, h: &RbfHyperparams) -> Result<[DMatrix<f64>; 3]> {
    validate_points("grad_gram_hyper", x)?;
    let n = x.nrows();
    let sv = h.signal_variance();
    let iw = h.inverse_width();
    let noise = h.noise_variance();

    // d K / d ln sv = sv * E + base_jitter_factor * sv * I: every term of K
    // proportional to sv survives.
    let mut d_sv = rbf_block(x, x, h);
    for i in 0..n {
        d_sv[(i, i)] += BASE_JITTER_FACTOR * sv;
    }

    let d_iw = DMatrix::from_fn(n, n, |i, j| {
        let mut d2 = 0.0;
        for c in 0..x.ncols() {
            let d = x[(i, c)] - x[(j, c)];
            d2 += d * d;
        }
        let half = 0.5 * iw * d2;
        -half * sv * (-half).exp()
    });

    let d_noise = DMatrix::from_diagonal_element(n, n, noise);
    Ok([d_sv, d_iw, d_noise])
}

/// Derivatives of the Gram matrix with respect to the input points, one
/// layer per input dimension:
///
/// ```text
/// layer[d][(i, j)] = d K_ij / d x_{i,d} = -iw * (x_{i,d} - x_{j,d}) * sv * E_ij
/// ```
///
/// The derivative is taken with respect to the row point, so each layer is
/// antisymmetric (`layer[(j, i)] = -layer[(i, j)]`) and has a zero diagonal.
/// For a symmetric sensitivity matrix `A = dL/dK`, the chain rule collapses
/// to `dL/dx_{n,d} = 2 * sum_j A[(n, j)] * layer[d][(n, j)]`; see
/// `gplvm::train` for the use.
pub fn grad_gram_inputs(x: &DMatrix<f64>, h: &RbfHyperparams) -> Result<Vec<DMatrix<f64>>> {
    validate_points("grad_gram_inputs", x)?;
    let n = x.nrows();
    let q = x.ncols();
    let iw = h.inverse_width();
    let e = rbf_block(x, x, h);
    let mut layers = Vec::with_capacity(q);
    for d in 0..q {
        layers.push(DMatrix::from_fn(n, n, |i, j| {
            -iw * (x[(i, d)] - x[(j, d)]) * e[(i, j)]
        }));
    }
    Ok(layers)
}
