//! Writes the synthetic exercise corpus to disk: per exercise, three
//! training demonstrations, one held-out take, and a noise-free reference
//! sidecar, then the same takes again with the left arm moving through a
//! reduced arc (a typical patient execution error).

use latent_motion::pipeline::{cmd_synth, PipelineConfig};
use latent_motion::synth::{generate_exercise, ErrorKind, ErrorSpec, SynthConfig};
use latent_motion::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("latent-motion-dataset");
    let cfg = PipelineConfig {
        data_dir: dir.clone(),
        ..PipelineConfig::default()
    };
    let synth = SynthConfig::default();

    let correct = cmd_synth(&cfg, &synth, None)?;
    let shallow = ErrorSpec::new(ErrorKind::AmplitudeScale(0.6), "left-arm")?;
    let erred = cmd_synth(&cfg, &synth, Some(&shallow))?;

    println!("dataset directory: {}", dir.display());
    println!("correct executions ({} files):", correct.len());
    for p in &correct {
        println!("  {}", p.file_name().unwrap().to_string_lossy());
    }
    println!("amplitude-0.6 executions ({} files):", erred.len());
    for p in &erred {
        println!("  {}", p.file_name().unwrap().to_string_lossy());
    }

    // The error only reaches the named part: regenerate one demo in memory
    // and show that spine motors match the correct variant bit for bit
    // while the left shoulder arc shrinks.
    let clean = generate_exercise(&synth, "arm-raise", 1, None)?;
    let bent = generate_exercise(&synth, "arm-raise", 1, Some(&shallow))?;
    let motor_range = |seq: &latent_motion::motion::MotionSequence, m: usize| {
        let col = seq.data().column(m);
        col.max() - col.min()
    };
    println!(
        "trunk_pitch range, correct vs erred: {:.2} vs {:.2} deg (identical draws)",
        motor_range(&clean.robot[0], 0),
        motor_range(&bent.robot[0], 0),
    );
    println!(
        "l_shoulder_pitch range, correct vs erred: {:.2} vs {:.2} deg",
        motor_range(&clean.robot[0], 5),
        motor_range(&bent.robot[0], 5),
    );
    Ok(())
}
