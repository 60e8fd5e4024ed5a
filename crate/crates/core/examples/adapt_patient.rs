//! Adapts the pose-to-latent map to a patient who executes the exercise
//! with a reduced arm arc. Only the projection weights move; the GP
//! mappings stay those of the therapist's model. After adaptation the
//! patient's frames land on the ideal latent path instead of beside it.

use nalgebra::DMatrix;

use latent_motion::adaptation::{adapt, project_patient, AdaptConfig, PatientProfile};
use latent_motion::gplvm::{train, TrainConfig};
use latent_motion::motion::{normalize, split_by_part, BodyPartPartition, MotionSequence};
use latent_motion::synth::{generate_exercise, ErrorKind, ErrorSpec, SynthConfig};
use latent_motion::trajectory::{ideal_trajectory, GmmConfig};
use latent_motion::Result;

fn stack(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(rows, mats[0].ncols());
    let mut r = 0;
    for m in mats {
        out.rows_mut(r, m.nrows()).copy_from(m);
        r += m.nrows();
    }
    out
}

/// Mean per-frame Euclidean distance between two equally long latent paths.
fn mean_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|t| (a.row(t) - b.row(t)).norm())
        .sum::<f64>()
        / a.nrows() as f64
}

fn main() -> Result<()> {
    let synth = SynthConfig {
        frames: 60,
        seed: 9,
        ..SynthConfig::default()
    };
    let data = generate_exercise(&synth, "arm-raise", 3, None)?;
    let partition = BodyPartPartition::default_three();

    let frames = 20;
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    for d in 0..3 {
        let human = normalize(&data.human[d])?.resample_phase(frames)?;
        let robot = data.robot[d].resample_phase(frames)?;
        ys.push(split_by_part(&human, &partition)?[0].data().clone());
        zs.push(split_by_part(&robot, &partition)?[0].data().clone());
    }
    let cfg = TrainConfig {
        seed: 9,
        max_iters: 150,
        ..TrainConfig::default()
    };
    let (model, _) = train("left-arm", &stack(&ys), &stack(&zs), &cfg)?;

    // Ideal latent path from the therapist's demonstrations.
    let latents: Vec<DMatrix<f64>> = data
        .human
        .iter()
        .map(|h| {
            let part = &split_by_part(&normalize(h)?, &partition)?[0];
            model.bc().project_seq(part.data())
        })
        .collect::<Result<_>>()?;
    let gmm_cfg = GmmConfig {
        n_components: 4,
        seed: 9,
        ..GmmConfig::default()
    };
    let ideal = ideal_trajectory(&latents, &gmm_cfg, 40)?;

    // The patient raises the arm through 60% of the arc.
    let shallow = ErrorSpec::new(ErrorKind::AmplitudeScale(0.6), "left-arm")?;
    let patient_data = generate_exercise(&synth, "arm-raise", 1, Some(&shallow))?;
    let patient_human = normalize(&patient_data.human[0])?;
    let patient = split_by_part(&patient_human, &partition)?[0].data().clone();

    // Resample the ideal path to the patient's frame count, then refit.
    let target = MotionSequence::new(ideal.phases().to_vec(), ideal.means_matrix())?
        .resample_phase(patient.nrows())?
        .data()
        .clone();
    let adapt_cfg = AdaptConfig {
        max_iters: 600,
        ..AdaptConfig::default()
    };
    let result = adapt(&model, &patient, &target, &adapt_cfg)?;
    println!(
        "adaptation: objective {:.2} -> {:.2} in {} iterations ({})",
        result.initial_objective(),
        result.final_objective(),
        result.iterations(),
        result.stop(),
    );

    let before = model.bc().project_seq(&patient)?;
    let profile = PatientProfile::new("arm-raise", vec![result])?;
    let after = project_patient(&profile, &model, &patient)?;
    let d_before = mean_distance(&before, &target);
    let d_after = mean_distance(&after, &target);
    println!("mean latent distance to the ideal path:");
    println!("  before adaptation: {:.4}", d_before);
    println!(
        "  after adaptation:  {:.4} ({:.0}% closer)",
        d_after,
        100.0 * (1.0 - d_after / d_before),
    );
    Ok(())
}
