//! Synthetic paired human/robot exercise data.
//!
//! A toy articulated skeleton gives exact ground truth that real capture
//! hardware cannot: every human frame is the forward kinematics of a known
//! motor frame. Motor waveforms per exercise drive the chain, seeded
//! Gaussian noise is layered on both views afterwards, and controlled
//! execution errors (too-small amplitude, a frozen part, a constant tilt)
//! can be injected into the waveform parameters before kinematics runs.
//!
//! Kinematic conventions, fixed here:
//!
//! - World frame: x forward, y left, z up; spine base at the origin.
//! - All rotations are right-handed about the named axis; `Rz`, `Ry`, `Rx`
//!   below mean rotation about z, y, x.
//! - Trunk: `R_trunk = Rz(trunk_yaw) * Ry(trunk_pitch) * Rx(trunk_roll)`,
//!   applied to everything above the spine base. Spine mid sits one lower
//!   torso link above the base, the neck one upper torso link above that.
//! - Head: `R_trunk * Rz(head_pan) * Ry(head_tilt)` applied to the head
//!   link vector `(head_forward, 0, head)`. The forward component models a
//!   face-front marker; without it, pan would only move the marker through
//!   second-order terms and would be unrecoverable from positions.
//! - Shoulders: neck position offset by `±shoulder_offset` along the
//!   trunk-rotated y axis (+ left, - right).
//! - Arms hang along -z at rest. Left upper arm:
//!   `R_trunk * Ry(shoulder_pitch) * Rx(shoulder_roll) * Rz(arm_yaw)`; the
//!   right side negates the roll and yaw angles so positive shoulder_roll
//!   abducts (moves the arm away from the torso) on both sides. The elbow
//!   motor flexes the forearm about the local y axis.
//! - Hips: offsets `±hip_offset` along the trunk-rotated y axis, so the
//!   pelvis markers ride the lower torso segment. That keeps trunk yaw and
//!   roll first-order visible at the hips; world-fixed hips would leave yaw
//!   observable only through products of small angles.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{
    BodyPartPartition, HumanPose, MotionSequence, MotorRanges, RobotPose, HUMAN_DIM, MOTOR_COUNT,
};

/// Demo-to-demo execution variability: per-motor amplitude scale std
/// (relative), phase shift std (radians), offset shift std (degrees).
/// Drawn once per demonstration before any error is applied.
const AMP_JITTER_STD: f64 = 0.04;
const PHASE_JITTER_STD: f64 = 0.08;
const OFFSET_JITTER_STD: f64 = 0.5;

/// Skeleton link lengths in meters. All must be positive and finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkLengths {
    pub torso_lower: f64,
    pub torso_upper: f64,
    /// Up component of the head link (neck to crown).
    pub head: f64,
    /// Forward component of the head link (face-front marker).
    pub head_forward: f64,
    pub shoulder_offset: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hip_offset: f64,
}

impl Default for LinkLengths {
    fn default() -> Self {
        Self {
            torso_lower: 0.25,
            torso_upper: 0.25,
            head: 0.12,
            head_forward: 0.09,
            shoulder_offset: 0.20,
            upper_arm: 0.28,
            forearm: 0.26,
            hip_offset: 0.12,
        }
    }
}

impl LinkLengths {
    fn validate(&self) -> Result<()> {
        let named = [
            ("torso_lower", self.torso_lower),
            ("torso_upper", self.torso_upper),
            ("head", self.head),
            ("head_forward", self.head_forward),
            ("shoulder_offset", self.shoulder_offset),
            ("upper_arm", self.upper_arm),
            ("forearm", self.forearm),
            ("hip_offset", self.hip_offset),
        ];
        for (name, v) in named {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "link length {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Generator configuration: geometry, motor limits, body-part assignment,
/// timing, noise levels, and the seed all randomness flows from.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub links: LinkLengths,
    pub ranges: MotorRanges,
    pub partition: BodyPartPartition,
    /// Frames per demonstration, at least 2.
    pub frames: usize,
    /// Seconds between frames.
    pub dt: f64,
    /// Std of Gaussian noise on human joint positions, meters.
    pub human_noise_std: f64,
    /// Std of Gaussian noise on motor angles, degrees.
    pub robot_noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            links: LinkLengths::default(),
            ranges: MotorRanges::default(),
            partition: BodyPartPartition::default_three(),
            frames: 100,
            dt: 1.0 / 30.0,
            human_noise_std: 0.01,
            robot_noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.links.validate()?;
        if self.frames < 2 {
            return Err(Error::InvalidInput(format!(
                "frames must be >= 2, got {}",
                self.frames
            )));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        for (name, v) in [
            ("human_noise_std", self.human_noise_std),
            ("robot_noise_std", self.robot_noise_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One injectable execution error, applied to every motor of one body part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "magnitude", rename_all = "kebab-case")]
pub enum ErrorKind {
    /// Waveform amplitudes multiplied by this factor in (0, 1]; the part
    /// moves through a smaller arc around the same center.
    AmplitudeScale(f64),
    /// Amplitudes zeroed; the part holds its offset pose.
    JointFreeze,
    /// Constant offset in degrees, [0, 45], added to the part's motors; the
    /// motion shape is intact but displaced.
    AxisTilt(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    #[serde(flatten)]
    pub kind: ErrorKind,
    /// Body-part name from the generator's partition.
    pub part: String,
}

impl ErrorSpec {
    pub fn new(kind: ErrorKind, part: impl Into<String>) -> Result<Self> {
        let spec = Self {
            kind,
            part: part.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ErrorKind::AmplitudeScale(s) => {
                if !s.is_finite() || s <= 0.0 || s > 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "amplitude scale must be in (0, 1], got {s}"
                    )));
                }
            }
            ErrorKind::JointFreeze => {}
            ErrorKind::AxisTilt(deg) => {
                if !deg.is_finite() || !(0.0..=45.0).contains(&deg) {
                    return Err(Error::InvalidInput(format!(
                        "axis tilt must be in [0, 45] degrees, got {deg}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Exact, deterministic forward kinematics. Angles must lie within the
/// configured motor ranges.
pub fn forward_kinematics(z: &RobotPose, cfg: &SynthConfig) -> Result<HumanPose> {
    cfg.validate()?;
    z.check_ranges(&cfg.ranges)?;
    let l = &cfg.links;
    let m = |i: usize| z.angle(i);

    let r_trunk = rot_z(m(2)) * rot_y(m(0)) * rot_x(m(1));
    let spine_base = Vector3::zeros();
    let spine_mid = r_trunk * Vector3::new(0.0, 0.0, l.torso_lower);
    let neck = spine_mid + r_trunk * Vector3::new(0.0, 0.0, l.torso_upper);
    let r_head = r_trunk * rot_z(m(3)) * rot_y(m(4));
    let head = neck + r_head * Vector3::new(l.head_forward, 0.0, l.head);

    // side = +1 for the left arm, -1 for the right; roll and yaw angles are
    // mirrored so both arms share one sign convention.
    let arm = |pitch: f64, roll: f64, yaw: f64, elbow: f64, side: f64| {
        let shoulder = neck + r_trunk * Vector3::new(0.0, side * l.shoulder_offset, 0.0);
        let r_upper = r_trunk * rot_y(pitch) * rot_x(side * roll) * rot_z(side * yaw);
        let elbow_p = shoulder + r_upper * Vector3::new(0.0, 0.0, -l.upper_arm);
        let r_fore = r_upper * rot_y(elbow);
        let wrist = elbow_p + r_fore * Vector3::new(0.0, 0.0, -l.forearm);
        (shoulder, elbow_p, wrist)
    };
    let (l_shoulder, l_elbow, l_wrist) = arm(m(5), m(6), m(7), m(8), 1.0);
    let (r_shoulder, r_elbow, r_wrist) = arm(m(9), m(10), m(11), m(12), -1.0);

    let l_hip = r_trunk * Vector3::new(0.0, l.hip_offset, 0.0);
    let r_hip = r_trunk * Vector3::new(0.0, -l.hip_offset, 0.0);

    let joints = [
        spine_base, spine_mid, neck, head, l_shoulder, l_elbow, l_wrist, r_shoulder, r_elbow,
        r_wrist, l_hip, r_hip,
    ];
    let mut coords = [0.0; HUMAN_DIM];
    for (j, p) in joints.iter().enumerate() {
        coords[3 * j] = p.x;
        coords[3 * j + 1] = p.y;
        coords[3 * j + 2] = p.z;
    }
    HumanPose::new(coords)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
enum WaveShape {
    Sine,
    /// Linear sweep from `offset - amp` to `offset + amp` over the take;
    /// frequency and phase are ignored.
    Ramp,
}

#[derive(Clone, Copy, Debug)]
struct MotorWave {
    shape: WaveShape,
    /// Degrees.
    offset: f64,
    /// Degrees; half the peak-to-peak swing.
    amp: f64,
    /// Radians, sine shapes only.
    phase: f64,
}

impl MotorWave {
    const fn sine(offset: f64, amp: f64, phase: f64) -> Self {
        Self {
            shape: WaveShape::Sine,
            offset,
            amp,
            phase,
        }
    }

    const fn ramp(offset: f64, amp: f64) -> Self {
        Self {
            shape: WaveShape::Ramp,
            offset,
            amp,
            phase: 0.0,
        }
    }

    /// Angle at time `t` seconds, `progress` in [0, 1] across the take.
    fn value(&self, freq: f64, t: f64, progress: f64) -> f64 {
        match self.shape {
            WaveShape::Sine => {
                self.offset + self.amp * (std::f64::consts::TAU * freq * t + self.phase).sin()
            }
            WaveShape::Ramp => self.offset + self.amp * (2.0 * progress - 1.0),
        }
    }
}

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;
const PI: f64 = std::f64::consts::PI;
const QUARTER_PI: f64 = std::f64::consts::FRAC_PI_4;

/// Built-in exercise identifiers.
pub const EXERCISE_IDS: [&str; 3] = ["arm-raise", "side-bend", "reach-forward"];

/// Waveform table per exercise: base frequency in Hz and one wave per
/// motor, indexed like the motor order. Every motor gets a non-degenerate
/// amplitude so no motor is flat in ground truth.
///
/// The three exercises are built around distinct base postures (offsets):
/// arm-raise upright, side-bend leaning back with the head up, reach-forward
/// pitched forward looking down with elbows high. One shared 2D latent space
/// per body part has to hold all three movement loops, so the loops must
/// stay apart in pose space wherever their motor values disagree; loops that
/// cross would force one latent point to explain two different poses.
fn exercise_table(exercise_id: &str) -> Result<(f64, [MotorWave; MOTOR_COUNT])> {
    let table = match exercise_id {
        "arm-raise" => (
            0.30,
            [
                MotorWave::sine(0.0, 8.0, 0.0),         // trunk_pitch
                MotorWave::sine(0.0, 6.0, HALF_PI),     // trunk_roll
                MotorWave::sine(0.0, 10.0, PI),         // trunk_yaw
                MotorWave::sine(0.0, 12.0, QUARTER_PI), // head_pan
                MotorWave::sine(0.0, 10.0, HALF_PI),    // head_tilt
                MotorWave::sine(-10.0, 38.0, 0.0),      // l_shoulder_pitch
                MotorWave::sine(8.0, 12.0, HALF_PI),    // l_shoulder_roll
                MotorWave::sine(0.0, 10.0, QUARTER_PI), // l_arm_yaw
                MotorWave::sine(18.0, 12.0, 0.0),       // l_elbow
                MotorWave::sine(-10.0, 38.0, 0.0),      // r_shoulder_pitch
                MotorWave::sine(8.0, 12.0, HALF_PI),    // r_shoulder_roll
                MotorWave::sine(0.0, 10.0, QUARTER_PI), // r_arm_yaw
                MotorWave::sine(18.0, 12.0, 0.0),       // r_elbow
            ],
        ),
        "side-bend" => (
            0.30,
            [
                MotorWave::sine(-14.0, 8.0, HALF_PI),
                MotorWave::sine(0.0, 25.0, 0.0),
                MotorWave::sine(14.0, 10.0, HALF_PI),
                MotorWave::sine(0.0, 12.0, 0.0),
                MotorWave::sine(-2.0, 9.0, PI),
                MotorWave::sine(5.0, 12.0, PI),
                MotorWave::sine(20.0, 18.0, 0.0),
                MotorWave::sine(0.0, 8.0, HALF_PI),
                MotorWave::sine(32.0, 12.0, PI),
                MotorWave::sine(5.0, 12.0, 0.0),
                MotorWave::sine(20.0, 18.0, PI),
                MotorWave::sine(0.0, 8.0, -HALF_PI),
                MotorWave::sine(32.0, 12.0, 0.0),
            ],
        ),
        "reach-forward" => (
            0.30,
            [
                MotorWave::ramp(14.0, 10.0),
                MotorWave::sine(0.0, 6.0, 0.0),
                MotorWave::ramp(-14.0, 12.0),
                MotorWave::sine(0.0, 14.0, HALF_PI),
                MotorWave::ramp(-4.0, 9.0),
                MotorWave::ramp(-50.0, 25.0),
                MotorWave::sine(5.0, 9.0, 0.0),
                MotorWave::sine(0.0, 10.0, HALF_PI),
                MotorWave::sine(45.0, 15.0, 0.0),
                MotorWave::ramp(-50.0, 25.0),
                MotorWave::sine(5.0, 9.0, PI),
                MotorWave::sine(0.0, 10.0, -HALF_PI),
                MotorWave::sine(45.0, 15.0, HALF_PI),
            ],
        ),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown exercise {other:?}; available: {}",
                EXERCISE_IDS.join(", ")
            )))
        }
    };
    Ok(table)
}

/// One generated batch: noisy sequences as a capture system would see
/// them, plus the exact noise-free versions.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub exercise: String,
    pub error: Option<ErrorSpec>,
    pub seed: u64,
    pub human: Vec<MotionSequence>,
    pub robot: Vec<MotionSequence>,
    pub clean_human: Vec<MotionSequence>,
    pub clean_robot: Vec<MotionSequence>,
}

fn demo_rng(seed: u64, exercise_id: &str, demo: usize) -> ChaCha12Rng {
    // Stable per-(seed, exercise, demo) stream; exercises get disjoint
    // streams through the id bytes, demos through a golden-ratio stride.
    let mut k = 0u64;
    for b in exercise_id.bytes() {
        k = k.wrapping_mul(257).wrapping_add(b as u64);
    }
    let mixed = seed
        .wrapping_add(k)
        .wrapping_add(demo as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha12Rng::seed_from_u64(mixed)
}

/// Generate `n_demos` demonstrations of one exercise.
///
/// Per demo, in this order: draw per-motor execution jitter (amplitude
/// scale, phase shift, offset shift), apply the error spec to the jittered
/// waveform parameters, run the waveforms through forward kinematics, then
/// add observation noise. The jitter and noise draw order never depends on
/// the error spec, so the correct and error variants of the same seed are
/// bit-identical everywhere the error does not reach.
pub fn generate_exercise(
    cfg: &SynthConfig,
    exercise_id: &str,
    n_demos: usize,
    error: Option<&ErrorSpec>,
) -> Result<SynthDataset> {
    cfg.validate()?;
    if n_demos == 0 {
        return Err(Error::InvalidInput("n_demos must be >= 1".into()));
    }
    let (freq, waves) = exercise_table(exercise_id)?;
    let error_motors: Vec<usize> = match error {
        Some(spec) => {
            spec.validate()?;
            let (_, part) = cfg.partition.part_named(&spec.part).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "error spec names unknown body part {:?}; partition has: {}",
                    spec.part,
                    cfg.partition
                        .parts()
                        .iter()
                        .map(|p| p.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })?;
            part.motors.clone()
        }
        None => Vec::new(),
    };

    let amp_jitter = Normal::new(1.0, AMP_JITTER_STD).expect("const std");
    let phase_jitter = Normal::new(0.0, PHASE_JITTER_STD).expect("const std");
    let offset_jitter = Normal::new(0.0, OFFSET_JITTER_STD).expect("const std");

    let mut human = Vec::with_capacity(n_demos);
    let mut robot = Vec::with_capacity(n_demos);
    let mut clean_human = Vec::with_capacity(n_demos);
    let mut clean_robot = Vec::with_capacity(n_demos);

    for demo in 0..n_demos {
        let mut rng = demo_rng(cfg.seed, exercise_id, demo);

        // Jitter first, in fixed motor order, before the error touches
        // anything.
        let mut params: Vec<MotorWave> = (0..MOTOR_COUNT)
            .map(|m| {
                let mut w = waves[m];
                w.amp *= amp_jitter.sample(&mut rng);
                w.phase += phase_jitter.sample(&mut rng);
                w.offset += offset_jitter.sample(&mut rng);
                w
            })
            .collect();
        for &m in &error_motors {
            match error.expect("motors only set with a spec").kind {
                ErrorKind::AmplitudeScale(s) => params[m].amp *= s,
                ErrorKind::JointFreeze => params[m].amp = 0.0,
                ErrorKind::AxisTilt(deg) => params[m].offset += deg,
            }
        }

        let timestamps: Vec<f64> = (0..cfg.frames).map(|i| i as f64 * cfg.dt).collect();
        let mut rows_z = Vec::with_capacity(cfg.frames);
        let mut rows_y = Vec::with_capacity(cfg.frames);
        for i in 0..cfg.frames {
            let t = timestamps[i];
            let progress = i as f64 / (cfg.frames - 1) as f64;
            let mut angles = [0.0; MOTOR_COUNT];
            for m in 0..MOTOR_COUNT {
                angles[m] = params[m].value(freq, t, progress);
            }
            let pose = RobotPose::new(angles)?;
            let y = forward_kinematics(&pose, cfg)?;
            rows_z.push(pose.as_slice().to_vec());
            rows_y.push(y.as_slice().to_vec());
        }
        let clean_z = MotionSequence::from_rows(timestamps.clone(), &rows_z)?;
        let clean_y = MotionSequence::from_rows(timestamps.clone(), &rows_y)?;

        // Observation noise, row-major draw order: all human coordinates,
        // then all motor angles.
        let h_noise = Normal::new(0.0, cfg.human_noise_std)
            .map_err(|e| Error::InvalidInput(format!("human noise: {e}")))?;
        let z_noise = Normal::new(0.0, cfg.robot_noise_std)
            .map_err(|e| Error::InvalidInput(format!("robot noise: {e}")))?;
        let noisy_y: Vec<Vec<f64>> = rows_y
            .iter()
            .map(|r| r.iter().map(|v| v + h_noise.sample(&mut rng)).collect())
            .collect();
        let noisy_z: Vec<Vec<f64>> = rows_z
            .iter()
            .map(|r| r.iter().map(|v| v + z_noise.sample(&mut rng)).collect())
            .collect();

        human.push(MotionSequence::from_rows(timestamps.clone(), &noisy_y)?);
        robot.push(MotionSequence::from_rows(timestamps, &noisy_z)?);
        clean_human.push(clean_y);
        clean_robot.push(clean_z);
    }

    Ok(SynthDataset {
        exercise: exercise_id.to_string(),
        error: error.cloned(),
        seed: cfg.seed,
        human,
        robot,
        clean_human,
        clean_robot,
    })
}

/// The exercise's reference form: the waveform table evaluated with no
/// execution jitter and no observation noise. This is what every
/// generated demo is a noisy, jittered execution of. Returns the paired
/// (human, robot) sequences.
pub fn nominal_exercise(
    cfg: &SynthConfig,
    exercise_id: &str,
) -> Result<(MotionSequence, MotionSequence)> {
    cfg.validate()?;
    let (freq, waves) = exercise_table(exercise_id)?;
    let timestamps: Vec<f64> = (0..cfg.frames).map(|i| i as f64 * cfg.dt).collect();
    let mut rows_z = Vec::with_capacity(cfg.frames);
    let mut rows_y = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let t = timestamps[i];
        let progress = i as f64 / (cfg.frames - 1) as f64;
        let mut angles = [0.0; MOTOR_COUNT];
        for m in 0..MOTOR_COUNT {
            angles[m] = waves[m].value(freq, t, progress);
        }
        let pose = RobotPose::new(angles)?;
        let y = forward_kinematics(&pose, cfg)?;
        rows_z.push(pose.as_slice().to_vec());
        rows_y.push(y.as_slice().to_vec());
    }
    Ok((
        MotionSequence::from_rows(timestamps.clone(), &rows_y)?,
        MotionSequence::from_rows(timestamps, &rows_z)?,
    ))
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    timestamps: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl SequenceFile {
    fn from_seq(seq: &MotionSequence) -> Self {
        Self {
            timestamps: seq.timestamps().to_vec(),
            rows: (0..seq.len()).map(|i| seq.frame(i)).collect(),
        }
    }

    fn to_seq(&self) -> Result<MotionSequence> {
        MotionSequence::from_rows(self.timestamps.clone(), &self.rows)
    }
}

/// Ground-truth sidecar schema: what the noisy CSVs were generated from.
#[derive(Serialize, Deserialize)]
struct SidecarFile {
    exercise: String,
    seed: u64,
    error: Option<ErrorSpec>,
    clean_human: Vec<SequenceFile>,
    clean_robot: Vec<SequenceFile>,
}

/// Write the noise-free ground truth of a dataset as JSON.
pub fn write_sidecar(path: &Path, dataset: &SynthDataset) -> Result<()> {
    let file = SidecarFile {
        exercise: dataset.exercise.clone(),
        seed: dataset.seed,
        error: dataset.error.clone(),
        clean_human: dataset.clean_human.iter().map(SequenceFile::from_seq).collect(),
        clean_robot: dataset.clean_robot.iter().map(SequenceFile::from_seq).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("sidecar schema serializes");
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Ground truth read back from a sidecar: exercise id, error spec, seed,
/// clean human and robot sequences.
#[derive(Debug)]
pub struct SidecarData {
    pub exercise: String,
    pub seed: u64,
    pub error: Option<ErrorSpec>,
    pub clean_human: Vec<MotionSequence>,
    pub clean_robot: Vec<MotionSequence>,
}

pub fn read_sidecar(path: &Path) -> Result<SidecarData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let file: SidecarFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if let Some(spec) = &file.error {
        spec.validate()?;
    }
    let clean_human = file
        .clean_human
        .iter()
        .map(SequenceFile::to_seq)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let clean_robot = file
        .clean_robot
        .iter()
        .map(SequenceFile::to_seq)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(SidecarData {
        exercise: file.exercise,
        seed: file.seed,
        error: file.error,
        clean_human,
        clean_robot,
    })
}
