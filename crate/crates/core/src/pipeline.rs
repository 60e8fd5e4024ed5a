//! File-level orchestration behind the CLI binary.
//!
//! Each `cmd_*` function is one subcommand's work: resolve and validate
//! every input first, then compute, then write outputs. Nothing is written
//! until the inputs have been read and checked, so a failing command
//! leaves no partial files behind. All randomness flows from
//! [`PipelineConfig::seed`].
//!
//! Dataset layout written by [`cmd_synth`] and consumed by [`cmd_train`],
//! under the data directory:
//!
//! ```text
//! {exercise}-{variant}-demo{k}-human.csv     k in 0..3, training demos
//! {exercise}-{variant}-demo{k}-robot.csv
//! {exercise}-{variant}-holdout-human.csv     one extra demo, never trained on
//! {exercise}-{variant}-holdout-robot.csv
//! {exercise}-{variant}-truth.json            noise-free ground truth sidecar
//! ```
//!
//! `variant` is `correct` for clean executions or the error slug
//! (`amplitude`, `freeze`, `tilt`). Training reads only
//! `*-correct-demo*` pairs; error variants exist to play the patient.
//! The sidecar's sequence lists line up with demo order, holdout last.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt, AdaptConfig, PatientProfile};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::gplvm::train::{train, TrainConfig, TrainReport};
use crate::gplvm::ModelSet;
use crate::motion::csvio::{read_human_csv, read_robot_csv, write_robot_csv};
use crate::motion::{normalize, split_by_part, MotionSequence};
use crate::synth::{generate_exercise, write_sidecar, ErrorKind, ErrorSpec, SynthConfig, EXERCISE_IDS};
use crate::trajectory::{ideal_trajectory, GmmConfig, IdealTrajectory};
use crate::{gplvm::Space, LATENT_DIM};

pub const IDEAL_FORMAT_VERSION: u32 = 1;

/// Training demonstrations per exercise variant; one more is generated and
/// written as the held-out pair.
pub const TRAIN_DEMOS: usize = 3;

/// Everything a command run needs beyond its own file arguments. Loadable
/// from JSON (missing fields keep their defaults); CLI flags override
/// loaded values.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub model_file: PathBuf,
    pub profile_dir: PathBuf,
    pub report_dir: PathBuf,
    pub train: TrainConfig,
    /// Mixture components for ideal-trajectory distillation.
    pub gmm_k: usize,
    pub adapt: AdaptConfig,
    /// Master seed; command randomness derives from it.
    pub seed: u64,
    /// Posterior draws for sampled evaluation.
    pub samples: usize,
    /// Each training demo is phase-resampled to this many frames before
    /// model fitting, bounding Gram sizes independently of recording rate.
    pub frames_per_demo: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            model_file: PathBuf::from("model.json"),
            profile_dir: PathBuf::from("profiles"),
            report_dir: PathBuf::from("reports"),
            train: TrainConfig::default(),
            gmm_k: 6,
            adapt: AdaptConfig::default(),
            seed: 0,
            samples: 10,
            frames_per_demo: 25,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gmm_k == 0 {
            return Err(Error::InvalidInput("gmm_k must be >= 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidInput("samples must be >= 1".into()));
        }
        if self.frames_per_demo < 2 {
            return Err(Error::InvalidInput(format!(
                "frames_per_demo must be >= 2, got {}",
                self.frames_per_demo
            )));
        }
        Ok(())
    }
}

fn annotate_io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| annotate_io(parent, e))?;
        }
    }
    Ok(())
}

/// CLI error slug for a spec, and the slug-to-spec mapping used by
/// `--error`. Magnitudes are fixed: amplitude scales to 0.6 of the
/// demonstrated swing, tilt displaces by 20 degrees.
pub fn error_spec_for(slug: &str, part: &str) -> Result<Option<ErrorSpec>> {
    match slug {
        "none" => Ok(None),
        "amplitude" => Ok(Some(ErrorSpec::new(ErrorKind::AmplitudeScale(0.6), part)?)),
        "freeze" => Ok(Some(ErrorSpec::new(ErrorKind::JointFreeze, part)?)),
        "tilt" => Ok(Some(ErrorSpec::new(ErrorKind::AxisTilt(20.0), part)?)),
        other => Err(Error::InvalidInput(format!(
            "unknown error kind {other:?}; expected none, amplitude, freeze, or tilt"
        ))),
    }
}

pub fn variant_slug(error: Option<&ErrorSpec>) -> &'static str {
    match error.map(|e| &e.kind) {
        None => "correct",
        Some(ErrorKind::AmplitudeScale(_)) => "amplitude",
        Some(ErrorKind::JointFreeze) => "freeze",
        Some(ErrorKind::AxisTilt(_)) => "tilt",
    }
}

/// Generate every exercise (3 training demos + 1 holdout each) into the
/// data directory. Returns the written paths in sorted order.
pub fn cmd_synth(
    cfg: &PipelineConfig,
    synth_cfg: &SynthConfig,
    error: Option<&ErrorSpec>,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let variant = variant_slug(error);

    // Generate everything before touching the filesystem.
    let datasets = EXERCISE_IDS
        .iter()
        .map(|ex| generate_exercise(synth_cfg, ex, TRAIN_DEMOS + 1, error))
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(&cfg.data_dir).map_err(|e| annotate_io(&cfg.data_dir, e))?;
    let mut written = Vec::new();
    for ds in &datasets {
        for d in 0..=TRAIN_DEMOS {
            let tag = if d == TRAIN_DEMOS {
                "holdout".to_string()
            } else {
                format!("demo{d}")
            };
            let human = cfg
                .data_dir
                .join(format!("{}-{variant}-{tag}-human.csv", ds.exercise));
            let robot = cfg
                .data_dir
                .join(format!("{}-{variant}-{tag}-robot.csv", ds.exercise));
            crate::motion::csvio::write_human_csv(&human, &ds.human[d])?;
            write_robot_csv(&robot, &ds.robot[d])?;
            written.push(human);
            written.push(robot);
        }
        let sidecar = cfg
            .data_dir
            .join(format!("{}-{variant}-truth.json", ds.exercise));
        write_sidecar(&sidecar, ds)?;
        written.push(sidecar);
    }
    written.sort();
    Ok(written)
}

fn stack_rows(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = mats.iter().map(|m| m.nrows()).sum();
    let cols = mats[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for m in mats {
        out.rows_mut(at, m.nrows()).copy_from(m);
        at += m.nrows();
    }
    out
}

/// The training pairs found in a data directory: sorted
/// `*-correct-demo*-human.csv` files and their robot partners.
fn training_pairs(data_dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let entries = std::fs::read_dir(data_dir).map_err(|e| annotate_io(data_dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| annotate_io(data_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with("-human.csv") && name.contains("-correct-demo") {
            names.push(name);
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no training pairs (*-correct-demo*-human.csv) in {}",
            data_dir.display()
        )));
    }
    names
        .into_iter()
        .map(|human_name| {
            let robot_name = human_name.replace("-human.csv", "-robot.csv");
            let human = data_dir.join(&human_name);
            let robot = data_dir.join(&robot_name);
            if !robot.exists() {
                return Err(Error::InvalidInput(format!(
                    "{} has no robot partner {}",
                    human.display(),
                    robot.display()
                )));
            }
            Ok((human, robot))
        })
        .collect()
}

/// Train one model per body part on every correct training pair in the
/// data directory and write the model set to `out`. Parts train on
/// separate threads; results are collected in partition order, so the
/// output does not depend on scheduling.
pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<(ModelSet, Vec<TrainReport>)> {
    cfg.validate()?;
    let pairs = training_pairs(&cfg.data_dir)?;
    let partition = crate::motion::BodyPartPartition::default_three();

    let n_parts = partition.parts().len();
    let mut per_part_y: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); n_parts];
    let mut per_part_z: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); n_parts];
    for (human_path, robot_path) in &pairs {
        let human = normalize(&read_human_csv(human_path)?)?.resample_phase(cfg.frames_per_demo)?;
        let robot = read_robot_csv(robot_path)?.resample_phase(cfg.frames_per_demo)?;
        for (p, seq) in split_by_part(&human, &partition)?.into_iter().enumerate() {
            per_part_y[p].push(seq.data().clone());
        }
        for (p, seq) in split_by_part(&robot, &partition)?.into_iter().enumerate() {
            per_part_z[p].push(seq.data().clone());
        }
    }

    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train
    };
    let results: Vec<Result<_>> = std::thread::scope(|scope| {
        let handles: Vec<_> = partition
            .parts()
            .iter()
            .enumerate()
            .map(|(p, part)| {
                let y = stack_rows(&per_part_y[p]);
                let z = stack_rows(&per_part_z[p]);
                let name = part.name.clone();
                scope.spawn(move || train(&name, &y, &z, &train_cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let mut models = Vec::with_capacity(n_parts);
    let mut reports = Vec::with_capacity(n_parts);
    for r in results {
        let (model, report) = r?;
        models.push(model);
        reports.push(report);
    }

    let set = ModelSet::new(partition, models)?;
    ensure_parent(out)?;
    set.save(out)?;
    Ok((set, reports))
}

/// Retarget a human recording through a trained model set; writes the
/// robot CSV to `out` and returns the sequence.
pub fn cmd_retarget(model_path: &Path, input: &Path, out: &Path) -> Result<MotionSequence> {
    let set = ModelSet::load(model_path)?;
    let human = normalize(&read_human_csv(input)?)?;
    let robot = set.retarget_sequence(&human)?;
    ensure_parent(out)?;
    write_robot_csv(out, &robot)?;
    Ok(robot)
}

#[derive(Debug, Serialize, Deserialize)]
struct IdealPartFile {
    part: String,
    trajectory: IdealTrajectory,
}

/// Distilled ideal trajectory for every body part, with provenance label.
#[derive(Debug, Serialize, Deserialize)]
pub struct IdealFile {
    version: u32,
    label: String,
    parts: Vec<IdealPartFile>,
}

impl IdealFile {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn part_named(&self, name: &str) -> Option<&IdealTrajectory> {
        self.parts
            .iter()
            .find(|p| p.part == name)
            .map(|p| &p.trajectory)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let mut text = serde_json::to_string_pretty(self).expect("ideal schema serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| annotate_io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| annotate_io(path, e))?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if file.version != IDEAL_FORMAT_VERSION {
            return Err(Error::Compatibility(format!(
                "{}: ideal-trajectory format version {} unsupported (this build reads {})",
                path.display(),
                file.version,
                IDEAL_FORMAT_VERSION
            )));
        }
        Ok(file)
    }
}

/// Distill demonstrations into one ideal latent trajectory per body part,
/// then drive the robot mappings with it. Writes the robot CSV to `out`
/// and the latent file next to it (extension `latent.json`); returns both.
///
/// Output timestamps are the trajectory phases (0 to 1); the output length
/// matches the first demonstration.
pub fn cmd_ideal(
    cfg: &PipelineConfig,
    model_path: &Path,
    demo_paths: &[PathBuf],
    out: &Path,
) -> Result<(MotionSequence, IdealFile)> {
    cfg.validate()?;
    if demo_paths.is_empty() {
        return Err(Error::InvalidInput("no demonstration files given".into()));
    }
    let set = ModelSet::load(model_path)?;
    let mut per_part_latents: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); set.models().len()];
    let mut t_out = 0;
    for path in demo_paths {
        let human = normalize(&read_human_csv(path)?)?;
        if t_out == 0 {
            t_out = human.len();
        }
        for (p, latent) in set.project_sequence(&human)?.into_iter().enumerate() {
            per_part_latents[p].push(latent);
        }
    }

    let gmm_cfg = GmmConfig {
        n_components: cfg.gmm_k,
        seed: cfg.seed,
        ..GmmConfig::default()
    };
    let label = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ideal".to_string());

    let mut parts = Vec::with_capacity(set.models().len());
    let mut robot_parts = Vec::with_capacity(set.models().len());
    for (model, latents) in set.models().iter().zip(&per_part_latents) {
        let traj = ideal_trajectory(latents, &gmm_cfg, t_out)?;
        let robot_data = model.predict_seq(&traj.means_matrix(), Space::Robot)?;
        robot_parts.push(MotionSequence::new(traj.phases().to_vec(), robot_data)?);
        parts.push(IdealPartFile {
            part: model.part_name().to_string(),
            trajectory: traj,
        });
    }
    let robot = crate::motion::merge_parts(&robot_parts, set.partition())?;
    let file = IdealFile {
        version: IDEAL_FORMAT_VERSION,
        label,
        parts,
    };

    ensure_parent(out)?;
    write_robot_csv(out, &robot)?;
    file.save(&latent_path_for(out))?;
    Ok((robot, file))
}

/// Where [`cmd_ideal`] puts the latent file for a robot CSV path.
pub fn latent_path_for(out: &Path) -> PathBuf {
    out.with_extension("latent.json")
}

/// Resample an ideal part trajectory's mean path to `frames` rows.
fn target_path(traj: &IdealTrajectory, frames: usize) -> Result<DMatrix<f64>> {
    let seq = MotionSequence::new(traj.phases().to_vec(), traj.means_matrix())?;
    if seq.len() == frames {
        return Ok(seq.data().clone());
    }
    Ok(seq.resample_phase(frames)?.data().clone())
}

/// Adapt the pose-to-latent map of every body part to a patient recording
/// against an ideal latent trajectory; writes the profile JSON to `out`.
pub fn cmd_adapt(
    cfg: &PipelineConfig,
    model_path: &Path,
    patient_csv: &Path,
    ideal_path: &Path,
    out: &Path,
) -> Result<PatientProfile> {
    cfg.validate()?;
    let set = ModelSet::load(model_path)?;
    let ideal = IdealFile::load(ideal_path)?;
    let human = normalize(&read_human_csv(patient_csv)?)?;
    let parts = split_by_part(&human, set.partition())?;

    let mut adaptations = Vec::with_capacity(set.models().len());
    for (model, part_seq) in set.models().iter().zip(&parts) {
        let traj = ideal.part_named(model.part_name()).ok_or_else(|| {
            Error::Compatibility(format!(
                "{}: no ideal trajectory for part '{}'",
                ideal_path.display(),
                model.part_name()
            ))
        })?;
        if traj.means_matrix().ncols() != LATENT_DIM {
            return Err(Error::Compatibility(format!(
                "{}: part '{}' trajectory is {}-dimensional, model latents are {LATENT_DIM}",
                ideal_path.display(),
                model.part_name(),
                traj.means_matrix().ncols()
            )));
        }
        let target = target_path(traj, human.len())?;
        adaptations.push(adapt(model, part_seq.data(), &target, &cfg.adapt)?);
    }
    let profile = PatientProfile::new(ideal.label(), adaptations)?;
    ensure_parent(out)?;
    profile.save(out)?;
    Ok(profile)
}

/// Score a robot prediction against ground truth. With a model and the
/// human recording the prediction came from, adds sampled-posterior
/// statistics. Writes the report JSON to `out`; the text table is the
/// caller's to print.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    prediction_csv: &Path,
    truth_csv: &Path,
    sampled: Option<(&Path, &Path)>,
    out: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    let prediction = read_robot_csv(prediction_csv)?;
    let truth = read_robot_csv(truth_csv)?;
    let label = prediction_csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "prediction".to_string());

    let loaded = match sampled {
        Some((model_path, human_csv)) => Some((
            ModelSet::load(model_path)?,
            normalize(&read_human_csv(human_csv)?)?,
        )),
        None => None,
    };
    let report = evaluate(
        &prediction,
        &truth,
        &label,
        loaded
            .as_ref()
            .map(|(set, human)| (set, human, cfg.samples, cfg.seed)),
    )?;
    ensure_parent(out)?;
    std::fs::write(out, report.to_json()).map_err(|e| annotate_io(out, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::rmse;
    use crate::synth::read_sidecar;

    fn fast_cfg(root: &Path) -> PipelineConfig {
        PipelineConfig {
            data_dir: root.join("data"),
            model_file: root.join("model.json"),
            profile_dir: root.join("profiles"),
            report_dir: root.join("reports"),
            train: TrainConfig {
                max_iters: 40,
                ..TrainConfig::default()
            },
            gmm_k: 4,
            frames_per_demo: 12,
            ..PipelineConfig::default()
        }
    }

    fn small_synth(seed: u64) -> SynthConfig {
        SynthConfig {
            frames: 30,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn config_file_round_trip_with_partial_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 7, "gmm_k": 3, "train": {"restarts": 2}}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.gmm_k, 3);
        assert_eq!(cfg.train.restarts, 2);
        // Unset fields keep defaults.
        assert_eq!(cfg.samples, 10);
        assert_eq!(cfg.train.max_iters, TrainConfig::default().max_iters);

        std::fs::write(&path, r#"{"gmm_k": 0}"#).unwrap();
        assert!(matches!(
            PipelineConfig::load(&path),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn synth_writes_the_documented_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_cfg(dir.path());
        let written = cmd_synth(&cfg, &small_synth(1), None).unwrap();
        // 3 exercises x (4 demo pairs + sidecar).
        assert_eq!(written.len(), 3 * 9);
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"arm-raise-correct-demo0-human.csv".to_string()));
        assert!(names.contains(&"arm-raise-correct-holdout-robot.csv".to_string()));
        assert!(names.contains(&"side-bend-correct-truth.json".to_string()));

        let sidecar = read_sidecar(&cfg.data_dir.join("arm-raise-correct-truth.json")).unwrap();
        assert_eq!(sidecar.clean_robot.len(), TRAIN_DEMOS + 1);

        let spec = error_spec_for("tilt", "right-arm").unwrap().unwrap();
        let with_err = cmd_synth(&cfg, &small_synth(1), Some(&spec)).unwrap();
        assert!(with_err[0]
            .file_name()
            .unwrap()
            .to_string_lossy()
            .contains("-tilt-"));
    }

    #[test]
    fn error_slug_mapping_is_total() {
        assert!(error_spec_for("none", "left-arm").unwrap().is_none());
        let amp = error_spec_for("amplitude", "left-arm").unwrap().unwrap();
        assert_eq!(amp.kind, ErrorKind::AmplitudeScale(0.6));
        let tilt = error_spec_for("tilt", "spine").unwrap().unwrap();
        assert_eq!(tilt.kind, ErrorKind::AxisTilt(20.0));
        assert!(error_spec_for("freeze", "spine").unwrap().is_some());
        assert!(error_spec_for("wobble", "spine").is_err());
        for (spec, slug) in [
            (None, "correct"),
            (Some(amp), "amplitude"),
            (Some(tilt), "tilt"),
        ] {
            assert_eq!(variant_slug(spec.as_ref()), slug);
        }
    }

    #[test]
    fn train_requires_pairs_and_reports_missing_partners() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_cfg(dir.path());
        std::fs::create_dir_all(&cfg.data_dir).unwrap();
        let err = cmd_train(&cfg, &cfg.model_file.clone()).unwrap_err();
        assert!(err.to_string().contains("no training pairs"), "{err}");

        // A human file without its robot partner is an error, not a skip.
        let written = cmd_synth(&cfg, &small_synth(3), None).unwrap();
        for p in &written {
            let name = p.file_name().unwrap().to_string_lossy();
            if name == "arm-raise-correct-demo1-robot.csv" {
                std::fs::remove_file(p).unwrap();
            }
        }
        let err = cmd_train(&cfg, &cfg.model_file.clone()).unwrap_err();
        assert!(err.to_string().contains("demo1-robot.csv"), "{err}");
    }

    /// One slow end-to-end pass shared by the file-level commands: synth,
    /// train, retarget, ideal, adapt, eval, exercising every artifact the
    /// CLI can produce against each other.
    #[test]
    fn full_pipeline_produces_consistent_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_cfg(dir.path());
        cmd_synth(&cfg, &small_synth(5), None).unwrap();

        let (set, reports) = cmd_train(&cfg, &cfg.model_file.clone()).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.final_objective >= r.initial_objective);
        }
        let reloaded = ModelSet::load(&cfg.model_file).unwrap();
        assert_eq!(reloaded.models().len(), set.models().len());

        // Retarget the held-out demo.
        let holdout_human = cfg.data_dir.join("arm-raise-correct-holdout-human.csv");
        let holdout_robot = cfg.data_dir.join("arm-raise-correct-holdout-robot.csv");
        let out_robot = cfg.report_dir.join("holdout-retargeted.csv");
        let robot = cmd_retarget(&cfg.model_file, &holdout_human, &out_robot).unwrap();
        assert!(out_robot.exists());
        let truth = read_robot_csv(&holdout_robot).unwrap();
        let err_deg = rmse(&robot, &truth).unwrap();
        assert!(err_deg < 30.0, "retarget rmse {err_deg}");

        // Ideal trajectory from the three training demos.
        let demos: Vec<PathBuf> = (0..3)
            .map(|d| cfg.data_dir.join(format!("arm-raise-correct-demo{d}-human.csv")))
            .collect();
        let ideal_csv = cfg.report_dir.join("arm-raise-ideal.csv");
        let (ideal_robot, ideal_file) = cmd_ideal(&cfg, &cfg.model_file, &demos, &ideal_csv).unwrap();
        assert_eq!(ideal_robot.len(), 30);
        assert_eq!(ideal_file.label(), "arm-raise-ideal");
        assert!(ideal_file.part_named("left-arm").is_some());
        assert!(latent_path_for(&ideal_csv).exists());
        let reload = IdealFile::load(&latent_path_for(&ideal_csv)).unwrap();
        assert!(reload.part_named("spine").is_some());

        // Adapt a patient recording (reuse a training demo as an aligned
        // patient) and check the profile lands on disk.
        let profile_path = cfg.profile_dir.join("patient.json");
        let profile = cmd_adapt(
            &cfg,
            &cfg.model_file,
            &demos[0],
            &latent_path_for(&ideal_csv),
            &profile_path,
        )
        .unwrap();
        assert_eq!(profile.parts().len(), 3);
        assert!(profile_path.exists());
        let back = PatientProfile::load(&profile_path).unwrap();
        assert_eq!(back.exercise(), "arm-raise-ideal");

        // Evaluate the retargeted holdout, with sampling.
        let report_path = cfg.report_dir.join("holdout-eval.json");
        let report = cmd_eval(
            &cfg,
            &out_robot,
            &holdout_robot,
            Some((&cfg.model_file.clone(), &holdout_human)),
            &report_path,
        )
        .unwrap();
        assert_eq!(report.label, "holdout-retargeted");
        assert!(report.sampled.is_some());
        assert!(report_path.exists());
        let text = std::fs::read_to_string(&report_path).unwrap();
        let parsed: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.rmse_deg, report.rmse_deg);

        // Determinism: rerunning train and retarget reproduces files
        // byte for byte.
        let first_model = std::fs::read(&cfg.model_file).unwrap();
        cmd_train(&cfg, &cfg.model_file.clone()).unwrap();
        assert_eq!(std::fs::read(&cfg.model_file).unwrap(), first_model);
        let first_robot = std::fs::read(&out_robot).unwrap();
        cmd_retarget(&cfg.model_file, &holdout_human, &out_robot).unwrap();
        assert_eq!(std::fs::read(&out_robot).unwrap(), first_robot);
    }

    #[test]
    fn ideal_version_gate_rejects_future_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ideal.latent.json");
        std::fs::write(
            &path,
            r#"{"version": 99, "label": "x", "parts": []}"#,
        )
        .unwrap();
        let err = IdealFile::load(&path).unwrap_err();
        assert!(matches!(err, Error::Compatibility(_)), "{err}");
        assert!(err.to_string().contains("99"), "{err}");
    }
}
