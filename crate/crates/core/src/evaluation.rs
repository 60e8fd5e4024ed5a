//! Retargeting quality metrics.
//!
//! Three layers: plain RMSE over aligned sequences, per-motor RMSE
//! normalized by how much each motor actually moves in a reference
//! recording (so a stiff motor's small errors are not drowned out by a
//! sweeping one's amplitude), and a sampled protocol that scores posterior
//! draws instead of just the predictive mean.
//!
//! The core metrics are strict about alignment; [`evaluate`] resamples a
//! prediction to the ground truth's frame count by phase first, so reports
//! compare like with like.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gplvm::{ModelSet, Space};
use crate::motion::{merge_parts, split_by_part, MotionSequence, MOTOR_NAMES};

/// Reference motors with standard deviation below this (degrees) carry no
/// signal and are excluded from normalized scores.
const DEGENERATE_STD: f64 = 1e-6;

fn check_aligned(a: &MotionSequence, b: &MotionSequence) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "sequences have {} and {} frames; resample to a common length first",
            a.len(),
            b.len()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "sequences have dim {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Root-mean-square difference over all frames and columns. For robot
/// sequences this is in degrees.
pub fn rmse(a: &MotionSequence, b: &MotionSequence) -> Result<f64> {
    check_aligned(a, b)?;
    let n = (a.len() * a.dim()) as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / n).sqrt())
}

/// RMSE per column.
pub fn per_motor_rmse(a: &MotionSequence, b: &MotionSequence) -> Result<Vec<f64>> {
    check_aligned(a, b)?;
    let t = a.len() as f64;
    Ok((0..a.dim())
        .map(|c| {
            let sum: f64 = (0..a.len())
                .map(|i| {
                    let d = a.data()[(i, c)] - b.data()[(i, c)];
                    d * d
                })
                .sum();
            (sum / t).sqrt()
        })
        .collect())
}

/// Mean over motors of `rmse_motor / reference_std_motor`, skipping motors
/// whose reference standard deviation is below `1e-6`. Returns the mean
/// ratio and the skipped column indices.
pub fn normalized_rmse(
    a: &MotionSequence,
    b: &MotionSequence,
    reference: &MotionSequence,
) -> Result<(f64, Vec<usize>)> {
    check_aligned(a, b)?;
    if reference.dim() != a.dim() {
        return Err(Error::InvalidInput(format!(
            "reference has dim {}, sequences have dim {}",
            reference.dim(),
            a.dim()
        )));
    }
    let per_motor = per_motor_rmse(a, b)?;
    let t = reference.len() as f64;
    let mut excluded = Vec::new();
    let mut acc = 0.0;
    let mut used = 0usize;
    for c in 0..reference.dim() {
        let col = reference.data().column(c);
        let mean = col.sum() / t;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        let std = var.sqrt();
        if std < DEGENERATE_STD {
            excluded.push(c);
        } else {
            acc += per_motor[c] / std;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidInput(
            "every reference motor is degenerate (std < 1e-6); nothing to normalize by".into(),
        ));
    }
    Ok((acc / used as f64, excluded))
}

/// Mean and sample standard deviation of RMSE over posterior draws.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SampledStats {
    pub mean: f64,
    pub std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Score posterior draws at explicit latent sequences, one per body part
/// in partition order (the form adaptation produces: latents may come from
/// an adapted pose-to-latent map rather than the model's own).
///
/// Draws `n_samples` full robot sequences from the per-part joint
/// posteriors, RMSEs each against the ground truth. One seeded stream
/// (parts in partition order within a draw) makes results bit-reproducible
/// per seed. Sample standard deviation uses the n-1 denominator; it is 0
/// for a single sample.
pub fn sampled_eval_at(
    set: &ModelSet,
    latents: &[nalgebra::DMatrix<f64>],
    timestamps: &[f64],
    truth: &MotionSequence,
    n_samples: usize,
    seed: u64,
) -> Result<SampledStats> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be >= 1".into()));
    }
    if latents.len() != set.models().len() {
        return Err(Error::InvalidInput(format!(
            "{} latent sequences for a {}-part model set",
            latents.len(),
            set.models().len()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let sampled: Vec<MotionSequence> = set
            .models()
            .iter()
            .zip(latents)
            .map(|(m, x)| {
                let z = m.sample_sequence(x, Space::Robot, &mut rng)?;
                MotionSequence::new(timestamps.to_vec(), z)
            })
            .collect::<Result<_>>()?;
        let merged = merge_parts(&sampled, set.partition())?;
        let aligned = if merged.len() == truth.len() {
            merged
        } else {
            merged.resample_phase(truth.len())?
        };
        scores.push(rmse(&aligned, truth)?);
    }

    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = if scores.len() > 1 {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SampledStats {
        mean,
        std,
        n_samples,
        seed,
    })
}

/// [`sampled_eval_at`] with latents taken from the model set's own
/// pose-to-latent maps applied to a normalized human sequence.
pub fn sampled_eval(
    set: &ModelSet,
    human: &MotionSequence,
    truth: &MotionSequence,
    n_samples: usize,
    seed: u64,
) -> Result<SampledStats> {
    let parts = split_by_part(human, set.partition())?;
    let latents: Vec<_> = set
        .models()
        .iter()
        .zip(&parts)
        .map(|(m, p)| m.bc().project_seq(p.data()))
        .collect::<Result<_>>()?;
    sampled_eval_at(set, &latents, human.timestamps(), truth, n_samples, seed)
}

/// One evaluation's results, ready for JSON and a plain-text table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    /// What was scored (an exercise or file label).
    pub label: String,
    pub frames: usize,
    /// True when the prediction was phase-resampled to the truth's length.
    pub resampled: bool,
    pub rmse_deg: f64,
    pub normalized_rmse: f64,
    /// Motor names excluded from the normalized score.
    pub excluded_motors: Vec<String>,
    pub sampled: Option<SampledStats>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report schema serializes");
        s.push('\n');
        s
    }

    /// Aligned fixed-width table, one row per report.
    pub fn text_table(reports: &[EvalReport]) -> String {
        let mut label_w = "exercise".len();
        for r in reports {
            label_w = label_w.max(r.label.len());
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<label_w$}  {:>6}  {:>9}  {:>10}  {:>12}  {:>11}\n",
            "exercise", "frames", "rmse_deg", "normalized", "sampled_mean", "sampled_std"
        ));
        for r in reports {
            let (sm, ss) = match &r.sampled {
                Some(s) => (format!("{:.3}", s.mean), format!("{:.3}", s.std)),
                None => ("-".to_string(), "-".to_string()),
            };
            out.push_str(&format!(
                "{:<label_w$}  {:>6}  {:>9.3}  {:>10.3}  {:>12}  {:>11}\n",
                r.label, r.frames, r.rmse_deg, r.normalized_rmse, sm, ss
            ));
            if !r.excluded_motors.is_empty() {
                out.push_str(&format!(
                    "{:<label_w$}  excluded from normalization: {}\n",
                    "",
                    r.excluded_motors.join(", ")
                ));
            }
        }
        out
    }
}

/// Score a robot prediction against ground truth, phase-resampling the
/// prediction to the truth's length when they differ. Pass a model set to
/// add sampled scores (drawn at the normalized human sequence's latents).
pub fn evaluate(
    prediction: &MotionSequence,
    truth: &MotionSequence,
    label: &str,
    sampled_input: Option<(&ModelSet, &MotionSequence, usize, u64)>,
) -> Result<EvalReport> {
    let aligned;
    let resampled = prediction.len() != truth.len();
    let pred = if resampled {
        aligned = prediction.resample_phase(truth.len())?;
        &aligned
    } else {
        prediction
    };
    let rmse_deg = rmse(pred, truth)?;
    let (norm, excluded_idx) = normalized_rmse(pred, truth, truth)?;
    let excluded_motors = excluded_idx
        .iter()
        .map(|&c| {
            MOTOR_NAMES
                .get(c)
                .map(|n| n.to_string())
                .unwrap_or_else(|| format!("column {c}"))
        })
        .collect();
    let sampled = match sampled_input {
        Some((set, human, n, seed)) => Some(sampled_eval(set, human, truth, n, seed)?),
        None => None,
    };
    Ok(EvalReport {
        label: label.to_string(),
        frames: truth.len(),
        resampled,
        rmse_deg,
        normalized_rmse: norm,
        excluded_motors,
        sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gplvm::{BackConstraintMap, SharedGplvmModel};
    use crate::kernels::RbfHyperparams;
    use crate::motion::{BodyPart, BodyPartPartition, HUMAN_DIM, JOINT_COUNT, MOTOR_COUNT};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn seq(rows: &[Vec<f64>]) -> MotionSequence {
        let ts: Vec<f64> = (0..rows.len()).map(|i| i as f64).collect();
        MotionSequence::from_rows(ts, rows).unwrap()
    }

    #[test]
    fn identical_sequences_score_zero() {
        let a = seq(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let (n, excluded) = normalized_rmse(&a, &a, &a).unwrap();
        assert_eq!(n, 0.0);
        assert!(excluded.is_empty());
    }

    #[test]
    fn constant_offset_scores_the_offset() {
        let a = seq(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let b = seq(&[vec![4.0, 5.0], vec![6.0, 7.0], vec![8.0, 9.0]]);
        assert!(close(rmse(&a, &b).unwrap(), 3.0, 1e-15));
    }

    #[test]
    fn hand_case_two_frames_two_motors() {
        // Differences {0, 0, 3, 4}: sqrt(25/4) = 2.5.
        let a = seq(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let b = seq(&[vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert!(close(rmse(&a, &b).unwrap(), 2.5, 1e-15));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = seq(&[vec![0.0], vec![1.0]]);
        let b = seq(&[vec![0.0], vec![1.0], vec![2.0]]);
        assert!(matches!(rmse(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sinusoid_normalization_matches_closed_form() {
        // T samples over exactly one period (endpoint excluded): the
        // discrete population std of A*sin is exactly A/sqrt(2).
        let t_count = 40;
        let amp0 = 10.0;
        let amp1 = 25.0;
        let delta = 2.0;
        let mut ra = Vec::new();
        let mut rb = Vec::new();
        for i in 0..t_count {
            let th = i as f64 / t_count as f64 * std::f64::consts::TAU;
            ra.push(vec![amp0 * th.sin(), amp1 * th.cos()]);
            rb.push(vec![amp0 * th.sin() + delta, amp1 * th.cos()]);
        }
        let a = seq(&ra);
        let b = seq(&rb);
        let per = per_motor_rmse(&a, &b).unwrap();
        assert!(close(per[0], delta, 1e-12));
        assert!(close(per[1], 0.0, 1e-12));

        let (norm, excluded) = normalized_rmse(&b, &a, &a).unwrap();
        let want = (delta / (amp0 / 2.0f64.sqrt())) / 2.0;
        assert!(close(norm, want, 1e-12), "{norm} vs {want}");
        assert!(excluded.is_empty());
    }

    #[test]
    fn degenerate_motors_are_excluded_and_reported() {
        let mut ra = Vec::new();
        let mut rb = Vec::new();
        for i in 0..20 {
            let th = i as f64 / 20.0 * std::f64::consts::TAU;
            // Motor 1 never moves in the reference.
            ra.push(vec![5.0 * th.sin(), 7.0]);
            rb.push(vec![5.0 * th.sin() + 1.0, 7.0 + 3.0]);
        }
        let a = seq(&ra);
        let b = seq(&rb);
        let (norm, excluded) = normalized_rmse(&b, &a, &a).unwrap();
        assert_eq!(excluded, vec![1]);
        assert!(close(norm, 1.0 / (5.0 / 2.0f64.sqrt()), 1e-12));

        let flat = seq(&vec![vec![1.0, 2.0]; 5]);
        assert!(matches!(
            normalized_rmse(&flat, &flat, &flat),
            Err(Error::InvalidInput(_))
        ));
    }

    /// Single-part model set over the whole body, cheap to build by hand.
    fn whole_body_set(noise: f64) -> ModelSet {
        let partition = BodyPartPartition::new(vec![BodyPart {
            name: "all".into(),
            joints: (0..JOINT_COUNT).collect(),
            motors: (0..MOTOR_COUNT).collect(),
        }])
        .unwrap();
        let n = 6;
        let centers = DMatrix::from_fn(n, HUMAN_DIM, |i, j| {
            ((i * 31 + j * 7) as f64 * 0.43).sin() * 0.4
        });
        let weights = DMatrix::from_fn(n, 2, |i, j| ((i * 2 + j) as f64 * 0.9).cos() * 0.5);
        let train_z = DMatrix::from_fn(n, MOTOR_COUNT, |i, j| {
            ((i * 17 + j * 5) as f64 * 0.77).sin() * 30.0
        });
        let bc = BackConstraintMap::new(centers, 1.0, weights).unwrap();
        let hy = RbfHyperparams::new(1.0, 1.0, noise).unwrap();
        let hz = RbfHyperparams::new(900.0, 1.0, noise * 900.0).unwrap();
        let model = SharedGplvmModel::assemble("all", bc, train_z, hy, hz).unwrap();
        ModelSet::new(partition, vec![model]).unwrap()
    }

    fn centers_as_sequence(set: &ModelSet) -> MotionSequence {
        let centers = set.models()[0].bc().centers();
        let rows: Vec<Vec<f64>> = (0..centers.nrows())
            .map(|i| centers.row(i).iter().copied().collect())
            .collect();
        seq(&rows)
    }

    #[test]
    fn sampled_eval_is_reproducible_per_seed() {
        let set = whole_body_set(0.01);
        let human = centers_as_sequence(&set);
        let truth = set.retarget_sequence(&human).unwrap();
        let a = sampled_eval(&set, &human, &truth, 5, 11).unwrap();
        let b = sampled_eval(&set, &human, &truth, 5, 11).unwrap();
        let c = sampled_eval(&set, &human, &truth, 5, 12).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std, b.std);
        assert_ne!(a.mean, c.mean);
        assert!(a.std >= 0.0);
    }

    #[test]
    fn vanishing_posterior_variance_collapses_the_spread() {
        let set = whole_body_set(1e-10);
        let human = centers_as_sequence(&set);
        let truth = set.retarget_sequence(&human).unwrap();
        let stats = sampled_eval(&set, &human, &truth, 6, 3).unwrap();
        // Residual spread comes only from factorization jitter.
        assert!(stats.mean < 1e-2, "mean {}", stats.mean);
        assert!(stats.std < 1e-2, "std {}", stats.std);
    }

    #[test]
    fn report_resamples_to_the_truth_length() {
        let set = whole_body_set(0.01);
        let human = centers_as_sequence(&set);
        let truth = set.retarget_sequence(&human).unwrap();
        let pred = set.retarget_sequence(&human).unwrap();
        let longer = pred.resample_phase(11).unwrap();
        let report = evaluate(&longer, &truth, "check", None).unwrap();
        assert!(report.resampled);
        assert_eq!(report.frames, truth.len());
        // Endpoints survive resampling verbatim; interior points come back
        // through two interpolations, so the score is small but not zero.
        assert!(report.rmse_deg < 2.0, "rmse {}", report.rmse_deg);

        let exact = evaluate(&pred, &truth, "check", None).unwrap();
        assert!(!exact.resampled);
        assert_eq!(exact.rmse_deg, 0.0);
    }

    #[test]
    fn report_renders_json_and_table() {
        let r = EvalReport {
            label: "arm-raise".into(),
            frames: 100,
            resampled: false,
            rmse_deg: 2.3456,
            normalized_rmse: 0.1234,
            excluded_motors: vec!["head_pan".into()],
            sampled: Some(SampledStats {
                mean: 2.5,
                std: 0.125,
                n_samples: 10,
                seed: 42,
            }),
        };
        let json = r.to_json();
        let parsed: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.rmse_deg, r.rmse_deg);
        assert_eq!(parsed.sampled.unwrap().n_samples, 10);

        let table = EvalReport::text_table(std::slice::from_ref(&r));
        assert!(table.contains("arm-raise"));
        assert!(table.contains("exercise"));
        assert!(table.contains("head_pan"));
        let header_len = table.lines().next().unwrap().len();
        let row_len = table.lines().nth(1).unwrap().len();
        assert_eq!(header_len, row_len);
    }

    proptest! {
        #[test]
        fn rmse_behaves_like_a_metric(
            rows_a in proptest::collection::vec(
                proptest::collection::vec(-90.0f64..90.0, 3), 2..8),
            rows_b_delta in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 3), 8),
            rows_c_delta in proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 3), 8),
        ) {
            let t = rows_a.len();
            let add = |base: &[Vec<f64>], delta: &[Vec<f64>]| -> Vec<Vec<f64>> {
                base.iter()
                    .zip(delta)
                    .map(|(r, d)| r.iter().zip(d).map(|(x, y)| x + y).collect())
                    .collect()
            };
            let a = seq(&rows_a);
            let b = seq(&add(&rows_a, &rows_b_delta[..t]));
            let c = seq(&add(&rows_a, &rows_c_delta[..t]));

            let ab = rmse(&a, &b).unwrap();
            let ba = rmse(&b, &a).unwrap();
            let ac = rmse(&a, &c).unwrap();
            let bc = rmse(&b, &c).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
