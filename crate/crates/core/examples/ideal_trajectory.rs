//! Distills several imperfect demonstrations into one ideal movement: each
//! demonstration is projected into the latent space, the pooled (phase,
//! latent) tuples are fit with a Gaussian mixture, and regression on phase
//! yields a single latent path whose robot rendering is compared against
//! the exercise's noise-free reference form.

use nalgebra::DMatrix;

use latent_motion::evaluation::normalized_rmse;
use latent_motion::gplvm::{train, Space, TrainConfig};
use latent_motion::motion::{normalize, split_by_part, BodyPartPartition, MotionSequence};
use latent_motion::synth::{generate_exercise, nominal_exercise, SynthConfig};
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

fn main() -> Result<()> {
    let synth = SynthConfig {
        frames: 60,
        seed: 7,
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
        seed: 7,
        max_iters: 150,
        ..TrainConfig::default()
    };
    let (model, _) = train("left-arm", &stack(&ys), &stack(&zs), &cfg)?;

    // Latent path of each full-length demonstration, jitter, noise and all.
    let latents: Vec<DMatrix<f64>> = data
        .human
        .iter()
        .map(|h| {
            let norm = normalize(h)?;
            let part = &split_by_part(&norm, &partition)?[0];
            model.bc().project_seq(part.data())
        })
        .collect::<Result<_>>()?;

    let gmm_cfg = GmmConfig {
        n_components: 4,
        seed: 7,
        ..GmmConfig::default()
    };
    let t_out = 40;
    let ideal = ideal_trajectory(&latents, &gmm_cfg, t_out)?;
    println!(
        "mixture: {} components over {} pooled tuples, weights {:?}",
        ideal.gmm().k(),
        latents.iter().map(|l| l.nrows()).sum::<usize>(),
        ideal
            .gmm()
            .weights()
            .iter()
            .map(|w| (w * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
    );
    println!(
        "ideal latent path: {} steps, first {:?}, mid {:?}",
        ideal.len(),
        ideal.mean(0),
        ideal.mean(t_out / 2),
    );

    // Render the path through the robot-side GP and compare against the
    // noise-free waveform table the demos were executions of.
    let robot_ideal = model.predict_seq(&ideal.means_matrix(), Space::Robot)?;
    let (_, nominal_robot) = nominal_exercise(&synth, "arm-raise")?;
    let nominal_part = split_by_part(&nominal_robot, &partition)?[0].resample_phase(t_out)?;

    let predicted = MotionSequence::new(nominal_part.timestamps().to_vec(), robot_ideal)?;
    let (norm, _) = normalized_rmse(&predicted, &nominal_part, &nominal_part)?;
    println!("ideal vs reference form, range-normalized RMSE: {:.3}", norm);
    Ok(())
}
