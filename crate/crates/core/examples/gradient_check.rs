//! Checks the two analytic gradients the optimizers climb against central
//! finite differences: the joint log marginal of the shared model (latent
//! projection weights plus both kernels' log hyperparameters) and the
//! patient-adaptation objective.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use latent_motion::adaptation::{adaptation_objective, AdaptConfig};
use latent_motion::gplvm::train::joint_objective;
use latent_motion::gplvm::BackConstraintMap;
use latent_motion::{Result, LATENT_DIM};

fn randn(rng: &mut ChaCha12Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let v: f64 = rng.sample(StandardNormal);
        v * scale
    })
}

/// Max relative error between an analytic gradient and its central
/// finite-difference estimate at step 1e-5.
fn check<F>(f: F, params: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, analytic) = f(params)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let mut plus = params.to_vec();
        let mut minus = params.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fd = (f(&plus)?.0 - f(&minus)?.0) / (2.0 * h);
        let rel = (analytic[i] - fd).abs() / fd.abs().max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn main() -> Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let n = 6;
    let q = LATENT_DIM;
    let y = randn(&mut rng, n, 4, 1.0);
    let z = randn(&mut rng, n, 3, 1.0);

    // Median-squared-distance width, the same heuristic training uses.
    let mut d2: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (y.row(i) - y.row(j)).norm_squared())
        .collect();
    d2.sort_by(f64::total_cmp);
    let width = 1.0 / d2[d2.len() / 2];
    let bc = BackConstraintMap::new(y.clone(), width, DMatrix::zeros(n, q))?;
    let b = bc.features(&y)?;

    // Packed parameters: projection weights row-major, then both kernels'
    // log hyperparameters.
    let mut params: Vec<f64> = randn(&mut rng, n, q, 0.5).transpose().iter().copied().collect();
    for _ in 0..2 {
        params.push(0.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)); // ln signal
        params.push(0.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)); // ln inv width
        params.push((0.01f64).ln() + 0.1 * rng.sample::<f64, _>(StandardNormal)); // ln noise
    }
    let joint_err = check(|p| joint_objective(&y, &z, &b, p), &params)?;
    println!(
        "joint log marginal: {} parameters, max relative gradient error {:.2e}",
        params.len(),
        joint_err,
    );

    let t = 8;
    let patient = randn(&mut rng, t, 4, 1.0);
    let b_patient = bc.features(&patient)?;
    let target = randn(&mut rng, t, q, 1.0);
    let w0 = randn(&mut rng, n, q, 0.5);
    let cfg = AdaptConfig::default();
    let w_flat: Vec<f64> = randn(&mut rng, n, q, 0.5).transpose().iter().copied().collect();
    let adapt_err = check(
        |w| adaptation_objective(&b_patient, &target, &w0, &cfg, w),
        &w_flat,
    )?;
    println!(
        "adaptation objective: {} weights, max relative gradient error {:.2e}",
        w_flat.len(),
        adapt_err,
    );

    println!(
        "both within 1e-4: {}",
        joint_err < 1e-4 && adapt_err < 1e-4
    );
    Ok(())
}
