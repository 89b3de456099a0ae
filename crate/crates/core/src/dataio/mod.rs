//! Readers and writers for every on-disk artifact.
//!
//! Directory conventions:
//!
//! ```text
//! annotations/*.json
//! predictions/*.jsonl
//! reconstruction/{cameras,images,points3D}.txt   (+ optional frames.txt)
//! objects/<layer>/{layer.json, tracks.csv, *.png}
//! sequences/<id>/{manifest.json, tracks.bin | tracks.csv, frames/...}
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::model::ModelError;

mod annotations;
mod colmap;
mod layers;
mod predictions;
mod sequence;

pub use annotations::{load_annotations, parse_annotations, save_annotations};
pub use colmap::{
    load_reconstruction, write_reconstruction, Camera, Frame, Observation, ReconstructionBundle,
};
pub use layers::{load_object_layers, write_object_layer};
pub use predictions::{load_predictions, parse_predictions, save_predictions};
pub use sequence::{
    read_sequence, write_sequence, Provenance, SequenceRecord, TableEncoding, TrackRow,
    TrackSample, TRACK_MAGIC, TRACK_VERSION,
};

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: sequence {sequence_id}: {field}: {message}")]
    Schema {
        path: PathBuf,
        sequence_id: String,
        field: String,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error("predictions missing for sequence {sequence_id}, point {point_id}{}", frame.map(|f| format!(", frame {f}")).unwrap_or_default())]
    MissingPrediction {
        sequence_id: String,
        point_id: String,
        frame: Option<u32>,
    },
    #[error("image {image}: observation references unknown 3D point {point_id}")]
    DanglingPoint { image: String, point_id: u64 },
    #[error("{path}: {source}")]
    Geometry {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
    #[error("{path}: bad magic {found:?}, expected \"KEPC\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported version {found}, expected {expected}")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated payload: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl DataIoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        DataIoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        DataIoError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, DataIoError> {
    std::fs::read_to_string(path).map_err(|e| DataIoError::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), DataIoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DataIoError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| DataIoError::io(path, e))
}

/// Files in `dir` with the given extension, sorted by name.
pub(crate) fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, DataIoError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| DataIoError::io(dir, e))? {
        let path = entry.map_err(|e| DataIoError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
