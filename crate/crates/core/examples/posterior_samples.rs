//! Draws motor trajectories from a trained model's posterior instead of
//! taking only the mean. The spread across draws is the model's own
//! uncertainty about the retargeting, and it grows off the training
//! manifold: a far-away latent point reverts to the prior variance.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use latent_motion::gplvm::{train, Space, TrainConfig};
use latent_motion::motion::{normalize, split_by_part, BodyPartPartition};
use latent_motion::synth::{generate_exercise, SynthConfig};
use latent_motion::Result;

fn main() -> Result<()> {
    let synth = SynthConfig {
        frames: 60,
        seed: 5,
        ..SynthConfig::default()
    };
    let data = generate_exercise(&synth, "arm-raise", 4, None)?;
    let partition = BodyPartPartition::default_three();

    // One part is enough here; train the left arm on three takes.
    let frames = 20;
    let mut y_rows: Vec<f64> = Vec::new();
    let mut z_rows: Vec<f64> = Vec::new();
    let mut dims = (0, 0);
    for d in 0..3 {
        let human = normalize(&data.human[d])?.resample_phase(frames)?;
        let robot = data.robot[d].resample_phase(frames)?;
        let hp = &split_by_part(&human, &partition)?[0];
        let rp = &split_by_part(&robot, &partition)?[0];
        dims = (hp.dim(), rp.dim());
        y_rows.extend(hp.data().row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        z_rows.extend(rp.data().row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
    }
    let y = DMatrix::from_row_slice(3 * frames, dims.0, &y_rows);
    let z = DMatrix::from_row_slice(3 * frames, dims.1, &z_rows);

    let cfg = TrainConfig {
        seed: 5,
        max_iters: 150,
        ..TrainConfig::default()
    };
    let (model, _) = train("left-arm", &y, &z, &cfg)?;

    // Project the held-out take and sample five motor trajectories along it.
    let holdout = normalize(&data.human[3])?;
    let part_poses = &split_by_part(&holdout, &partition)?[0];
    let xq = model.bc().project_seq(part_poses.data())?;
    let mean = model.predict_seq(&xq, Space::Robot)?;

    let mut rng = ChaCha12Rng::seed_from_u64(42);
    println!("draw  RMS deviation from posterior mean (deg)");
    for draw in 0..5 {
        let sample = model.sample_sequence(&xq, Space::Robot, &mut rng)?;
        let dev = (&sample - &mean).iter().map(|v| v * v).sum::<f64>()
            / (sample.nrows() * sample.ncols()) as f64;
        println!("{:>4}  {:.3}", draw, dev.sqrt());
    }

    let on_manifold = xq.row(0).iter().copied().collect::<Vec<_>>();
    let far = vec![50.0, -50.0];
    let h = model.hyper(Space::Robot);
    println!(
        "posterior variance on the trajectory: {:.4} deg^2",
        model.predict_var(&on_manifold, Space::Robot)?
    );
    println!(
        "posterior variance far off-manifold:  {:.4} deg^2 (prior: {:.4})",
        model.predict_var(&far, Space::Robot)?,
        h.signal_variance() + h.noise_variance(),
    );
    Ok(())
}
