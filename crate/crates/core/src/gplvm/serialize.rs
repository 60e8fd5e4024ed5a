//! Model persistence: a [`ModelSet`] round-trips through one JSON file.
//!
//! The file stores, per part, everything [`SharedGplvmModel::assemble`]
//! needs: centers (the human training block), back-constraint width and
//! weights, both log-hyperparameter triples, and the robot training block.
//! Caches are rebuilt on load from those exact numbers, so a loaded model
//! predicts bit-identically to the one that was saved (JSON carries f64 in
//! shortest round-trip form).
//!
//! SHA-256 checksums over both training blocks catch hand-edited or
//! truncated files before a model is rebuilt from them.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::RbfHyperparams;
use crate::motion::{BodyPart, BodyPartPartition};
use crate::LATENT_DIM;

use super::{BackConstraintMap, ModelSet, SharedGplvmModel, Space};

/// Bump when the schema below changes shape or meaning.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PartSchemaFile {
    name: String,
    joints: Vec<usize>,
    motors: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PartModelFile {
    part: String,
    n: usize,
    q: usize,
    bc_width: f64,
    centers: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    log_hyper_human: [f64; 3],
    log_hyper_robot: [f64; 3],
    train_robot: Vec<Vec<f64>>,
    checksum_human: String,
    checksum_robot: String,
}

#[derive(Serialize, Deserialize)]
struct ModelSetFile {
    version: u32,
    partition: Vec<PartSchemaFile>,
    parts: Vec<PartModelFile>,
}

/// SHA-256 over dimensions and row-major little-endian entry bytes.
pub(crate) fn matrix_checksum(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            h.update(m[(i, j)].to_le_bytes());
        }
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Parse(format!("model file: {what} is empty")));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("model file: {what} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn part_to_file(model: &SharedGplvmModel) -> PartModelFile {
    let centers = model.bc().centers();
    let train_z = model.train_data(Space::Robot);
    PartModelFile {
        part: model.part_name().to_string(),
        n: model.n_train(),
        q: model.bc().latent_dim(),
        bc_width: model.bc().width(),
        centers: matrix_rows(centers),
        weights: matrix_rows(model.bc().weights()),
        log_hyper_human: model.hyper(Space::Human).to_log(),
        log_hyper_robot: model.hyper(Space::Robot).to_log(),
        train_robot: matrix_rows(train_z),
        checksum_human: matrix_checksum(centers),
        checksum_robot: matrix_checksum(train_z),
    }
}

fn part_from_file(file: &PartModelFile) -> Result<SharedGplvmModel> {
    if file.q != LATENT_DIM {
        return Err(Error::Compatibility(format!(
            "model for part '{}' has latent dim {}, this build uses {LATENT_DIM}",
            file.part, file.q
        )));
    }
    let centers = rows_matrix(&file.centers, "centers")?;
    let weights = rows_matrix(&file.weights, "weights")?;
    let train_z = rows_matrix(&file.train_robot, "robot training block")?;
    if centers.nrows() != file.n || weights.nrows() != file.n || train_z.nrows() != file.n {
        return Err(Error::Parse(format!(
            "model for part '{}' declares {} frames but stores {}/{}/{} rows",
            file.part,
            file.n,
            centers.nrows(),
            weights.nrows(),
            train_z.nrows()
        )));
    }
    if matrix_checksum(&centers) != file.checksum_human {
        return Err(Error::Parse(format!(
            "model for part '{}': human training block fails its checksum",
            file.part
        )));
    }
    if matrix_checksum(&train_z) != file.checksum_robot {
        return Err(Error::Parse(format!(
            "model for part '{}': robot training block fails its checksum",
            file.part
        )));
    }
    let bc = BackConstraintMap::new(centers, file.bc_width, weights)?;
    let hy = RbfHyperparams::from_log(file.log_hyper_human)?;
    let hz = RbfHyperparams::from_log(file.log_hyper_robot)?;
    SharedGplvmModel::assemble(file.part.clone(), bc, train_z, hy, hz)
}

impl ModelSet {
    /// Serialize to pretty JSON. The output is deterministic for a given
    /// model set, so re-saving an unchanged set rewrites identical bytes.
    pub fn to_json(&self) -> String {
        let file = ModelSetFile {
            version: MODEL_FORMAT_VERSION,
            partition: self
                .partition
                .parts()
                .iter()
                .map(|p| PartSchemaFile {
                    name: p.name.clone(),
                    joints: p.joints.clone(),
                    motors: p.motors.clone(),
                })
                .collect(),
            parts: self.models.iter().map(part_to_file).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model schema serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json();
        std::fs::write(path, json).map_err(|e| annotate_io(path, e))?;
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: ModelSetFile = serde_json::from_str(json)
            .map_err(|e| Error::Parse(format!("model file: {e}")))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Compatibility(format!(
                "model file has format version {}, this build reads {MODEL_FORMAT_VERSION}",
                file.version
            )));
        }
        let partition = BodyPartPartition::new(
            file.partition
                .iter()
                .map(|p| BodyPart {
                    name: p.name.clone(),
                    joints: p.joints.clone(),
                    motors: p.motors.clone(),
                })
                .collect(),
        )?;
        let models: Vec<SharedGplvmModel> =
            file.parts.iter().map(part_from_file).collect::<Result<_>>()?;
        ModelSet::new(partition, models)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| annotate_io(path, e))?;
        Self::from_json(&json).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn annotate_io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}
