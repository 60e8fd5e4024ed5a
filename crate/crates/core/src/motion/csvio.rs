//! CSV exchange format for motion sequences.
//!
//! One frame per row. Human files: 37 columns (`time` + 36 joint
//! coordinates, `<joint>_x/_y/_z` per joint). Robot files: 14 columns
//! (`time` + 13 motor names). A header row naming every column is required;
//! UTF-8; `.` decimal separator.
//!
//! Floats are written with the shortest representation that parses back to
//! the identical bits, so write -> read round-trips are exact and output
//! files are byte-stable across runs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::{MotionSequence, HUMAN_DIM, JOINT_NAMES, MOTOR_COUNT, MOTOR_NAMES};

/// `time,<joint>_x,<joint>_y,<joint>_z,...` for the 12 joints.
pub fn human_header() -> Vec<String> {
    let mut h = vec!["time".to_string()];
    for j in JOINT_NAMES {
        for axis in ["x", "y", "z"] {
            h.push(format!("{j}_{axis}"));
        }
    }
    h
}

/// `time,<motor>,...` for the 13 motors.
pub fn robot_header() -> Vec<String> {
    let mut h = vec!["time".to_string()];
    h.extend(MOTOR_NAMES.iter().map(|m| m.to_string()));
    h
}

fn read_csv(path: &Path, expected_header: &[String]) -> Result<MotionSequence> {
    let file = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{file}: {e}")))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{file}: header row: {e}")))?;
    if headers.len() != expected_header.len() {
        return Err(Error::Parse(format!(
            "{file}: expected {} columns, header has {}",
            expected_header.len(),
            headers.len()
        )));
    }
    for (c, (got, want)) in headers.iter().zip(expected_header).enumerate() {
        if got != want {
            return Err(Error::Parse(format!(
                "{file}: header column {} is {got:?}, expected {want:?}",
                c + 1
            )));
        }
    }

    let mut timestamps = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    // Row numbers in messages are 1-based file lines; the header is line 1.
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse(format!("{file}: row {line}: {e}")))?;
        if record.len() != expected_header.len() {
            return Err(Error::Parse(format!(
                "{file}: row {line} has {} fields, expected {}",
                record.len(),
                expected_header.len()
            )));
        }
        let mut parsed = Vec::with_capacity(record.len());
        for (c, fieldtext) in record.iter().enumerate() {
            let v: f64 = fieldtext.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{file}: row {line}, column {} ({}): {fieldtext:?} is not a number",
                    c + 1,
                    expected_header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "{file}: row {line}, column {} ({}): non-finite value",
                    c + 1,
                    expected_header[c]
                )));
            }
            parsed.push(v);
        }
        if let Some(&prev) = timestamps.last() {
            if parsed[0] <= prev {
                return Err(Error::Parse(format!(
                    "{file}: row {line}, column 1 (time): {} does not increase past {prev}",
                    parsed[0]
                )));
            }
        }
        timestamps.push(parsed[0]);
        rows.push(parsed[1..].to_vec());
    }
    if rows.len() < 2 {
        return Err(Error::Parse(format!(
            "{file}: need at least 2 data rows, found {}",
            rows.len()
        )));
    }
    MotionSequence::from_rows(timestamps, &rows)
}

fn render_csv(header: &[String], seq: &MotionSequence) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..seq.len() {
        // f64 Display prints the shortest string that round-trips.
        let _ = write!(out, "{}", seq.timestamps()[i]);
        for c in 0..seq.dim() {
            let _ = write!(out, ",{}", seq.data()[(i, c)]);
        }
        out.push('\n');
    }
    out
}

fn check_dim(kind: &str, seq: &MotionSequence, want: usize) -> Result<()> {
    if seq.dim() != want {
        return Err(Error::InvalidInput(format!(
            "{kind} CSV needs {want}-dim frames, sequence has {}",
            seq.dim()
        )));
    }
    Ok(())
}

pub fn read_human_csv(path: &Path) -> Result<MotionSequence> {
    read_csv(path, &human_header())
}

pub fn read_robot_csv(path: &Path) -> Result<MotionSequence> {
    read_csv(path, &robot_header())
}

pub fn write_human_csv(path: &Path, seq: &MotionSequence) -> Result<()> {
    check_dim("human", seq, HUMAN_DIM)?;
    std::fs::write(path, render_csv(&human_header(), seq))?;
    Ok(())
}

pub fn write_robot_csv(path: &Path, seq: &MotionSequence) -> Result<()> {
    check_dim("robot", seq, MOTOR_COUNT)?;
    std::fs::write(path, render_csv(&robot_header(), seq))?;
    Ok(())
}
