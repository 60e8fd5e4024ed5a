//! Pose and sequence data model, body-part partitioning, skeleton
//! normalization, phase resampling, and the CSV exchange formats.
//!
//! Conventions fixed here and relied on by every other module:
//!
//! - Human skeleton: 12 joints, each a 3-D position in meters, flattened to a
//!   36-dim row in the order of [`JOINT_NAMES`]. Joint `j` occupies flat
//!   columns `3j .. 3j+3`.
//! - Robot: 13 motor angles in degrees, order of [`MOTOR_NAMES`].
//! - Default body-part partition: left arm (joints 4-6), right arm (joints
//!   7-9), spine (joints 0-3 and both hips 10-11). Motors: trunk and head
//!   (0-4) belong to the spine, 5-8 to the left arm, 9-12 to the right arm.
//! - Sequences store one frame per row with strictly increasing timestamps
//!   in seconds; a normalized phase in [0, 1] is derivable from any sequence.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub mod csvio;

pub const JOINT_COUNT: usize = 12;
pub const HUMAN_DIM: usize = 3 * JOINT_COUNT;
pub const MOTOR_COUNT: usize = 13;

/// Skeleton joint order. Index into this array is the joint index used by
/// partitions; flat human vectors store x, y, z per joint in this order.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "spine_base",
    "spine_mid",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_hip",
    "r_hip",
];

/// Motor order. Trunk pitch/roll/yaw, head pan/tilt, then four motors per
/// arm (shoulder pitch, shoulder roll, arm yaw, elbow flex).
pub const MOTOR_NAMES: [&str; MOTOR_COUNT] = [
    "trunk_pitch",
    "trunk_roll",
    "trunk_yaw",
    "head_pan",
    "head_tilt",
    "l_shoulder_pitch",
    "l_shoulder_roll",
    "l_arm_yaw",
    "l_elbow",
    "r_shoulder_pitch",
    "r_shoulder_roll",
    "r_arm_yaw",
    "r_elbow",
];

fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name}: entry {i} is not finite"
        )));
    }
    Ok(())
}

/// One human skeleton frame: 12 joint positions in meters, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanPose {
    coords: [f64; HUMAN_DIM],
}

impl HumanPose {
    pub fn new(coords: [f64; HUMAN_DIM]) -> Result<Self> {
        ensure_finite("HumanPose", &coords)?;
        Ok(Self { coords })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let coords: [f64; HUMAN_DIM] = v.try_into().map_err(|_| {
            Error::InvalidInput(format!(
                "HumanPose needs {HUMAN_DIM} coordinates, got {}",
                v.len()
            ))
        })?;
        Self::new(coords)
    }

    pub fn joint(&self, j: usize) -> [f64; 3] {
        [
            self.coords[3 * j],
            self.coords[3 * j + 1],
            self.coords[3 * j + 2],
        ]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }
}

/// One robot frame: 13 motor angles in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotPose {
    angles: [f64; MOTOR_COUNT],
}

impl RobotPose {
    pub fn new(angles: [f64; MOTOR_COUNT]) -> Result<Self> {
        ensure_finite("RobotPose", &angles)?;
        Ok(Self { angles })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let angles: [f64; MOTOR_COUNT] = v.try_into().map_err(|_| {
            Error::InvalidInput(format!(
                "RobotPose needs {MOTOR_COUNT} angles, got {}",
                v.len()
            ))
        })?;
        Self::new(angles)
    }

    pub fn angle(&self, m: usize) -> f64 {
        self.angles[m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    /// Every angle within its configured range.
    pub fn check_ranges(&self, ranges: &MotorRanges) -> Result<()> {
        for (m, &a) in self.angles.iter().enumerate() {
            if !ranges.contains(m, a) {
                return Err(Error::InvalidInput(format!(
                    "motor {m} ({}) angle {a} outside range [{}, {}]",
                    MOTOR_NAMES[m],
                    ranges.min(m),
                    ranges.max(m)
                )));
            }
        }
        Ok(())
    }
}

/// Per-motor angle limits in degrees. The default is a symmetric 360-degree
/// span per motor; real deployments narrow this per motor via configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct MotorRanges {
    min: [f64; MOTOR_COUNT],
    max: [f64; MOTOR_COUNT],
}

impl Default for MotorRanges {
    fn default() -> Self {
        Self {
            min: [-180.0; MOTOR_COUNT],
            max: [180.0; MOTOR_COUNT],
        }
    }
}

impl MotorRanges {
    pub fn new(min: [f64; MOTOR_COUNT], max: [f64; MOTOR_COUNT]) -> Result<Self> {
        ensure_finite("MotorRanges(min)", &min)?;
        ensure_finite("MotorRanges(max)", &max)?;
        for m in 0..MOTOR_COUNT {
            if min[m] >= max[m] {
                return Err(Error::InvalidInput(format!(
                    "motor {m}: min {} must be below max {}",
                    min[m], max[m]
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn min(&self, m: usize) -> f64 {
        self.min[m]
    }

    pub fn max(&self, m: usize) -> f64 {
        self.max[m]
    }

    pub fn width(&self, m: usize) -> f64 {
        self.max[m] - self.min[m]
    }

    /// Average span across motors; the yardstick for "percent of motor
    /// range" error statements.
    pub fn mean_width(&self) -> f64 {
        (0..MOTOR_COUNT).map(|m| self.width(m)).sum::<f64>() / MOTOR_COUNT as f64
    }

    pub fn contains(&self, m: usize, angle: f64) -> bool {
        angle.is_finite() && angle >= self.min[m] && angle <= self.max[m]
    }
}

/// A named group of joints and motors treated as one retargeting unit.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyPart {
    pub name: String,
    pub joints: Vec<usize>,
    pub motors: Vec<usize>,
}

impl BodyPart {
    /// Flat human columns covered by this part, in joint order.
    pub fn human_columns(&self) -> Vec<usize> {
        self.joints
            .iter()
            .flat_map(|&j| (3 * j)..(3 * j + 3))
            .collect()
    }

    pub fn robot_columns(&self) -> Vec<usize> {
        self.motors.clone()
    }
}

/// Ordered body-part decomposition of the skeleton and motor set.
///
/// Joint sets must be disjoint and in range; motor sets must be disjoint and
/// together cover all 13 motors (a robot pose cannot have undriven motors).
#[derive(Clone, Debug, PartialEq)]
pub struct BodyPartPartition {
    parts: Vec<BodyPart>,
}

impl BodyPartPartition {
    pub fn new(parts: Vec<BodyPart>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("partition has no parts".into()));
        }
        let mut seen_joints = BTreeSet::new();
        let mut seen_motors = BTreeSet::new();
        for p in &parts {
            if p.joints.is_empty() && p.motors.is_empty() {
                return Err(Error::InvalidInput(format!("part {} is empty", p.name)));
            }
            for &j in &p.joints {
                if j >= JOINT_COUNT {
                    return Err(Error::InvalidInput(format!(
                        "part {}: joint index {j} out of range",
                        p.name
                    )));
                }
                if !seen_joints.insert(j) {
                    return Err(Error::InvalidInput(format!(
                        "joint {j} assigned to more than one part"
                    )));
                }
            }
            for &m in &p.motors {
                if m >= MOTOR_COUNT {
                    return Err(Error::InvalidInput(format!(
                        "part {}: motor index {m} out of range",
                        p.name
                    )));
                }
                if !seen_motors.insert(m) {
                    return Err(Error::InvalidInput(format!(
                        "motor {m} assigned to more than one part"
                    )));
                }
            }
        }
        if seen_motors.len() != MOTOR_COUNT {
            return Err(Error::InvalidInput(format!(
                "partition drives {} of {MOTOR_COUNT} motors; every motor must belong to a part",
                seen_motors.len()
            )));
        }
        Ok(Self { parts })
    }

    /// The standard three-part split: left arm, right arm, spine (trunk,
    /// head and hips).
    pub fn default_three() -> Self {
        Self::new(vec![
            BodyPart {
                name: "left-arm".into(),
                joints: vec![4, 5, 6],
                motors: vec![5, 6, 7, 8],
            },
            BodyPart {
                name: "right-arm".into(),
                joints: vec![7, 8, 9],
                motors: vec![9, 10, 11, 12],
            },
            BodyPart {
                name: "spine".into(),
                joints: vec![0, 1, 2, 3, 10, 11],
                motors: vec![0, 1, 2, 3, 4],
            },
        ])
        .expect("default partition is valid")
    }

    pub fn parts(&self) -> &[BodyPart] {
        &self.parts
    }

    pub fn part_named(&self, name: &str) -> Option<(usize, &BodyPart)> {
        self.parts
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
    }
}

/// A motion recording: one frame per row, strictly increasing timestamps in
/// seconds. Width 36 for human sequences, 13 for robot sequences, and the
/// part width for split sub-sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    timestamps: Vec<f64>,
    data: DMatrix<f64>,
}

impl MotionSequence {
    pub fn new(timestamps: Vec<f64>, data: DMatrix<f64>) -> Result<Self> {
        if timestamps.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "sequence needs at least 2 frames, got {}",
                timestamps.len()
            )));
        }
        if timestamps.len() != data.nrows() {
            return Err(Error::InvalidInput(format!(
                "timestamp count {} != frame count {}",
                timestamps.len(),
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidInput("sequence has zero-width frames".into()));
        }
        ensure_finite("timestamps", &timestamps)?;
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!(
                    "timestamps must strictly increase, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "sequence data contains non-finite values".into(),
            ));
        }
        Ok(Self { timestamps, data })
    }

    pub fn from_rows(timestamps: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("sequence has no frames".into()));
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("ragged frame rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(timestamps, DMatrix::from_row_slice(rows.len(), width, &flat))
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires >= 2 frames
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn frame(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn human_frame(&self, i: usize) -> Result<HumanPose> {
        HumanPose::from_slice(&self.frame(i))
    }

    pub fn robot_frame(&self, i: usize) -> Result<RobotPose> {
        RobotPose::from_slice(&self.frame(i))
    }

    /// Normalized phase per frame: 0 at the first timestamp, 1 at the last.
    pub fn phases(&self) -> Vec<f64> {
        let t0 = self.timestamps[0];
        let span = self.timestamps[self.len() - 1] - t0;
        self.timestamps.iter().map(|t| (t - t0) / span).collect()
    }

    /// Linear interpolation at `n` uniformly spaced phases. First and last
    /// frames are copied verbatim; timestamps keep the original span.
    pub fn resample_phase(&self, n: usize) -> Result<MotionSequence> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "resample_phase needs n >= 2, got {n}"
            )));
        }
        let phases = self.phases();
        let t0 = self.timestamps[0];
        let span = self.timestamps[self.len() - 1] - t0;
        let mut out = DMatrix::zeros(n, self.dim());
        let mut out_t = Vec::with_capacity(n);
        for i in 0..n {
            let p = i as f64 / (n - 1) as f64;
            out_t.push(t0 + p * span);
            if i == 0 {
                out.set_row(0, &self.data.row(0));
                continue;
            }
            if i == n - 1 {
                out.set_row(n - 1, &self.data.row(self.len() - 1));
                continue;
            }
            // First input phase strictly greater than p; p < 1 here, so
            // seg is a valid interior segment index.
            let hi = phases.partition_point(|&ph| ph <= p).min(self.len() - 1);
            let lo = hi - 1;
            let w = (p - phases[lo]) / (phases[hi] - phases[lo]);
            for c in 0..self.dim() {
                let a = self.data[(lo, c)];
                let b = self.data[(hi, c)];
                out[(i, c)] = a + (b - a) * w;
            }
        }
        MotionSequence::new(out_t, out)
    }

    fn select_columns(&self, cols: &[usize]) -> MotionSequence {
        let data = DMatrix::from_fn(self.len(), cols.len(), |i, k| self.data[(i, cols[k])]);
        MotionSequence {
            timestamps: self.timestamps.clone(),
            data,
        }
    }
}

/// Subject-invariant skeleton normalization: per frame, translate the root
/// joint (spine base) to the origin; then divide every coordinate by the
/// subject's mean torso length over the sequence. Torso length is the spine
/// path `|spine_mid - spine_base| + |neck - spine_mid|`.
///
/// Idempotent to rounding: a normalized sequence has mean torso length 1.
pub fn normalize(seq: &MotionSequence) -> Result<MotionSequence> {
    if seq.dim() != HUMAN_DIM {
        return Err(Error::InvalidInput(format!(
            "normalize expects {HUMAN_DIM}-dim human frames, got {}",
            seq.dim()
        )));
    }
    let t = seq.len();
    let d = seq.data();
    let mut mean_torso = 0.0;
    for i in 0..t {
        let seg = |a: usize, b: usize| -> f64 {
            let mut s = 0.0;
            for c in 0..3 {
                let diff = d[(i, 3 * b + c)] - d[(i, 3 * a + c)];
                s += diff * diff;
            }
            s.sqrt()
        };
        mean_torso += seg(0, 1) + seg(1, 2);
    }
    mean_torso /= t as f64;
    if mean_torso < 1e-6 {
        return Err(Error::InvalidInput(format!(
            "degenerate torso length {mean_torso:.3e} m; cannot normalize"
        )));
    }
    let mut out = DMatrix::zeros(t, HUMAN_DIM);
    for i in 0..t {
        let root = [d[(i, 0)], d[(i, 1)], d[(i, 2)]];
        for j in 0..JOINT_COUNT {
            for c in 0..3 {
                out[(i, 3 * j + c)] = (d[(i, 3 * j + c)] - root[c]) / mean_torso;
            }
        }
    }
    MotionSequence::new(seq.timestamps().to_vec(), out)
}

fn columns_for(part: &BodyPart, dim: usize) -> Result<Vec<usize>> {
    match dim {
        HUMAN_DIM => Ok(part.human_columns()),
        MOTOR_COUNT => Ok(part.robot_columns()),
        other => Err(Error::InvalidInput(format!(
            "cannot partition {other}-dim frames; expected {HUMAN_DIM} (human) or {MOTOR_COUNT} (robot)"
        ))),
    }
}

/// Project a full human or robot sequence onto each body part, preserving
/// column order within a part. The sequence kind is inferred from its width.
pub fn split_by_part(
    seq: &MotionSequence,
    partition: &BodyPartPartition,
) -> Result<Vec<MotionSequence>> {
    partition
        .parts()
        .iter()
        .map(|p| {
            let cols = columns_for(p, seq.dim())?;
            if cols.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "part {} selects no columns of a {}-dim sequence",
                    p.name,
                    seq.dim()
                )));
            }
            Ok(seq.select_columns(&cols))
        })
        .collect()
}

/// Reassemble a full sequence from per-part sub-sequences produced by
/// [`split_by_part`] (same partition, same order). The partition must cover
/// every column of the reassembled width.
pub fn merge_parts(
    parts: &[MotionSequence],
    partition: &BodyPartPartition,
) -> Result<MotionSequence> {
    if parts.len() != partition.parts().len() {
        return Err(Error::InvalidInput(format!(
            "{} sub-sequences for a {}-part partition",
            parts.len(),
            partition.parts().len()
        )));
    }
    let total: usize = parts.iter().map(|s| s.dim()).sum();
    if total != HUMAN_DIM && total != MOTOR_COUNT {
        return Err(Error::InvalidInput(format!(
            "part widths sum to {total}; expected {HUMAN_DIM} (human) or {MOTOR_COUNT} (robot)"
        )));
    }
    let len = parts[0].len();
    let ts = parts[0].timestamps();
    for (s, p) in parts.iter().zip(partition.parts()) {
        if s.len() != len || s.timestamps() != ts {
            return Err(Error::InvalidInput(format!(
                "part {} timestamps disagree with the first part",
                p.name
            )));
        }
    }
    let mut out = DMatrix::zeros(len, total);
    let mut assigned = vec![false; total];
    for (s, p) in parts.iter().zip(partition.parts()) {
        let cols = columns_for(p, total)?;
        if cols.len() != s.dim() {
            return Err(Error::InvalidInput(format!(
                "part {} is {}-dim but its index set selects {} columns",
                p.name,
                s.dim(),
                cols.len()
            )));
        }
        for (local, &global) in cols.iter().enumerate() {
            assigned[global] = true;
            for i in 0..len {
                out[(i, global)] = s.data()[(i, local)];
            }
        }
    }
    if let Some(missing) = assigned.iter().position(|&a| !a) {
        return Err(Error::InvalidInput(format!(
            "partition leaves column {missing} unassigned; cannot merge"
        )));
    }
    MotionSequence::new(ts.to_vec(), out)
}
