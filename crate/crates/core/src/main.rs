//! Command-line pipeline: generate data, train, retarget, distill an
//! ideal trajectory, adapt to a patient, evaluate.
//!
//! Configuration comes from defaults, then an optional `--config` JSON
//! file, then flags; later sources win. All randomness flows from one
//! seed, and rerunning any command with identical inputs and seed writes
//! byte-identical outputs. Failures print a single line to stderr,
//! `error: <slug>: <message>`, and exit with the slug's code (3-9; clap
//! usage errors keep exit code 2).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use latent_motion::error::Result;
use latent_motion::evaluation::EvalReport;
use latent_motion::pipeline::{
    self, cmd_adapt, cmd_eval, cmd_ideal, cmd_retarget, cmd_synth, cmd_train, error_spec_for,
    PipelineConfig,
};
use latent_motion::synth::SynthConfig;

#[derive(Parser)]
#[command(
    name = "latent-motion",
    version,
    about = "Human-to-robot motion retargeting through shared latent spaces"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Model JSON path (output of `train`, input everywhere else).
    #[arg(long, global = true, value_name = "PATH")]
    model: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic exercise datasets: per exercise, three training
    /// demo CSV pairs, one held-out pair, and a ground-truth sidecar.
    Synth {
        /// Output directory (default: config data_dir).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Execution error to inject: none, amplitude (swing scaled to
        /// 0.6), freeze (part holds its offset pose), tilt (constant 20
        /// degree displacement).
        #[arg(long, default_value = "none")]
        error: String,
        /// Body part the error applies to.
        #[arg(long, default_value = "left-arm", value_name = "PART")]
        part: String,
    },
    /// Train one model per body part on every correct demo pair in the
    /// data directory and write the model set JSON.
    Train {
        /// Data directory to scan (default: config data_dir).
        data_dir: Option<PathBuf>,
        /// Model output path (default: --model, then config model_file).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Retarget a human recording to a robot motor CSV.
    Retarget {
        /// Human CSV to retarget.
        input: PathBuf,
        /// Robot CSV output path (default: reports/<input-stem>-robot.csv).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Distill demonstration CSVs into an ideal trajectory: a robot CSV
    /// plus a latent file written next to it.
    Ideal {
        /// Human demonstration CSVs of one exercise.
        #[arg(required = true)]
        demos: Vec<PathBuf>,
        /// Robot CSV output path (default: reports/ideal.csv); the latent
        /// file lands beside it with extension latent.json.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Mixture components for the distillation.
        #[arg(long, value_name = "INT")]
        gmm_k: Option<usize>,
    },
    /// Adapt the pose-to-latent maps to a patient recording and write a
    /// patient profile JSON.
    Adapt {
        /// Patient human CSV.
        patient: PathBuf,
        /// Ideal latent file from `ideal`.
        ideal: PathBuf,
        /// Profile output path (default: profiles/<patient-stem>-profile.json).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Score a robot prediction CSV against a ground-truth robot CSV;
    /// prints a text table and writes a JSON report.
    Eval {
        /// Prediction robot CSV.
        prediction: PathBuf,
        /// Ground-truth robot CSV.
        truth: PathBuf,
        /// Human CSV the prediction came from; with --model this enables
        /// sampled-posterior statistics.
        human: Option<PathBuf>,
        /// Posterior draws for sampled statistics.
        #[arg(long, value_name = "INT")]
        samples: Option<usize>,
        /// Report JSON output path (default: reports/<prediction-stem>-eval.json).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(model) = &cli.model {
        cfg.model_file = model.clone();
    }
    Ok(cfg)
}

fn stem_of(path: &std::path::Path, fallback: &str) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Synth { out, error, part } => {
            if let Some(dir) = out {
                cfg.data_dir = dir;
            }
            let spec = error_spec_for(&error, &part)?;
            let synth_cfg = SynthConfig {
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            let written = cmd_synth(&cfg, &synth_cfg, spec.as_ref())?;
            for path in &written {
                println!("wrote {}", path.display());
            }
        }
        Cmd::Train { data_dir, out } => {
            if let Some(dir) = data_dir {
                cfg.data_dir = dir;
            }
            let model_out = out.unwrap_or_else(|| cfg.model_file.clone());
            let (set, reports) = cmd_train(&cfg, &model_out)?;
            for (model, report) in set.models().iter().zip(&reports) {
                println!(
                    "part {}: {} frames, objective {:.3} -> {:.3} in {} iterations ({})",
                    model.part_name(),
                    model.n_train(),
                    report.initial_objective,
                    report.final_objective,
                    report.iterations,
                    report.stop
                );
            }
            println!("wrote {}", model_out.display());
        }
        Cmd::Retarget { input, out } => {
            let out = out.unwrap_or_else(|| {
                cfg.report_dir
                    .join(format!("{}-robot.csv", stem_of(&input, "retargeted")))
            });
            let robot = cmd_retarget(&cfg.model_file, &input, &out)?;
            println!("retargeted {} frames", robot.len());
            println!("wrote {}", out.display());
        }
        Cmd::Ideal { demos, out, gmm_k } => {
            if let Some(k) = gmm_k {
                cfg.gmm_k = k;
            }
            let out = out.unwrap_or_else(|| cfg.report_dir.join("ideal.csv"));
            let (robot, _) = cmd_ideal(&cfg, &cfg.model_file.clone(), &demos, &out)?;
            println!(
                "distilled {} demonstrations into {} frames",
                demos.len(),
                robot.len()
            );
            println!("wrote {}", out.display());
            println!("wrote {}", pipeline::latent_path_for(&out).display());
        }
        Cmd::Adapt {
            patient,
            ideal,
            out,
        } => {
            let out = out.unwrap_or_else(|| {
                cfg.profile_dir
                    .join(format!("{}-profile.json", stem_of(&patient, "patient")))
            });
            let profile = cmd_adapt(&cfg, &cfg.model_file.clone(), &patient, &ideal, &out)?;
            for part in profile.parts() {
                println!(
                    "part {}: objective {:.3} -> {:.3} in {} iterations",
                    part.part(),
                    part.initial_objective(),
                    part.final_objective(),
                    part.iterations()
                );
            }
            println!("wrote {}", out.display());
        }
        Cmd::Eval {
            prediction,
            truth,
            human,
            samples,
            out,
        } => {
            if let Some(n) = samples {
                cfg.samples = n;
            }
            let out = out.unwrap_or_else(|| {
                cfg.report_dir
                    .join(format!("{}-eval.json", stem_of(&prediction, "prediction")))
            });
            let sampled = human.as_deref().map(|h| (cfg.model_file.as_path(), h));
            let report = cmd_eval(&cfg, &prediction, &truth, sampled, &out)?;
            print!("{}", EvalReport::text_table(std::slice::from_ref(&report)));
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.slug(), e.detail());
            let code = u8::try_from(e.exit_code()).unwrap_or(1);
            ExitCode::from(code)
        }
    }
}
