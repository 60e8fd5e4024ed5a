//! Trains one shared latent model per body part on three demonstrations of
//! an exercise, then retargets a held-out human recording to robot motor
//! angles and scores it against the noise-free ground truth.

use nalgebra::DMatrix;
use std::time::Instant;

use latent_motion::evaluation::{normalized_rmse, rmse};
use latent_motion::gplvm::{train, ModelSet, TrainConfig};
use latent_motion::motion::{normalize, split_by_part, BodyPartPartition, MOTOR_NAMES};
use latent_motion::synth::{generate_exercise, SynthConfig};
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
        seed: 3,
        ..SynthConfig::default()
    };
    // Four takes: three to train on, the last held out.
    let data = generate_exercise(&synth, "arm-raise", 4, None)?;
    let partition = BodyPartPartition::default_three();

    let frames = 20;
    let n_parts = partition.parts().len();
    let mut ys: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); n_parts];
    let mut zs: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); n_parts];
    for d in 0..3 {
        let human = normalize(&data.human[d])?.resample_phase(frames)?;
        let robot = data.robot[d].resample_phase(frames)?;
        for (p, seq) in split_by_part(&human, &partition)?.into_iter().enumerate() {
            ys[p].push(seq.data().clone());
        }
        for (p, seq) in split_by_part(&robot, &partition)?.into_iter().enumerate() {
            zs[p].push(seq.data().clone());
        }
    }

    let cfg = TrainConfig {
        seed: 3,
        max_iters: 150,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let mut models = Vec::with_capacity(n_parts);
    for (p, part) in partition.parts().iter().enumerate() {
        let (model, report) = train(&part.name, &stack(&ys[p]), &stack(&zs[p]), &cfg)?;
        println!(
            "{:<9} objective {:>10.2} -> {:>10.2} in {} iterations ({:?})",
            part.name,
            report.initial_objective,
            report.final_objective,
            report.iterations,
            report.stop,
        );
        models.push(model);
    }
    println!("trained {} parts in {:.1} s", n_parts, start.elapsed().as_secs_f64());

    let set = ModelSet::new(partition, models)?;
    let holdout_human = normalize(&data.human[3])?;
    let predicted = set.retarget_sequence(&holdout_human)?;
    let truth = &data.clean_robot[3];

    let (norm, excluded) = normalized_rmse(&predicted, truth, truth)?;
    println!("held-out retarget RMSE: {:.2} deg", rmse(&predicted, truth)?);
    println!(
        "range-normalized RMSE: {:.3}{}",
        norm,
        if excluded.is_empty() {
            String::new()
        } else {
            format!(
                " (motors excluded for near-zero range: {})",
                excluded
                    .iter()
                    .map(|&m| MOTOR_NAMES[m])
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        }
    );
    Ok(())
}
