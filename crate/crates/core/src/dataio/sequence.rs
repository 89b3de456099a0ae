//! Synthesized sequence records: `manifest.json` plus a track table.
//!
//! The binary table is little-endian:
//!
//! ```text
//! b"KEPC" | version u32 | point count u32 | frame count u32 |
//! per point, per frame: x f32 | y f32 | visible u8 | in_view u8
//! ```
//!
//! Scene points come first, then object points, in manifest order. The CSV
//! table carries the same rows as `point,frame,x,y,visible,in_view`.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{read_to_string, write_file, DataIoError};
use crate::model::ImageSpace;

pub const TRACK_MAGIC: [u8; 4] = *b"KEPC";
pub const TRACK_VERSION: u32 = 1;
const MANIFEST_FORMAT: &str = "kepic-sequence";
const ROW_BYTES: usize = 10;
const HEADER_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackSample {
    pub x: f32,
    pub y: f32,
    pub visible: bool,
    pub in_view: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub point_id: String,
    pub samples: Vec<TrackSample>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Index of the window's first frame in the source video.
    pub source_start: usize,
    /// Source frame names the output frames were drawn from, in output order.
    pub source_frames: Vec<String>,
    pub loop_augmented: bool,
    pub object_count: usize,
    pub object_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub sequence_id: String,
    pub frames: Vec<String>,
    pub space: ImageSpace,
    pub scene_tracks: Vec<TrackRow>,
    pub object_tracks: Vec<TrackRow>,
    pub provenance: Provenance,
}

impl SequenceRecord {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn all_tracks(&self) -> impl Iterator<Item = &TrackRow> {
        self.scene_tracks.iter().chain(&self.object_tracks)
    }

    /// Every track must have one sample per frame.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.frames.len();
        match self.all_tracks().find(|t| t.samples.len() != n) {
            Some(t) => Err(format!(
                "track {} has {} samples for {n} frames",
                t.point_id,
                t.samples.len()
            )),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableEncoding {
    #[default]
    Binary,
    Csv,
}

impl TableEncoding {
    fn file_name(self) -> &'static str {
        match self {
            TableEncoding::Binary => "tracks.bin",
            TableEncoding::Csv => "tracks.csv",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    sequence_id: String,
    width: u32,
    height: u32,
    frames: Vec<String>,
    scene_points: Vec<String>,
    object_points: Vec<String>,
    track_table: String,
    encoding: TableEncoding,
    provenance: Provenance,
}

pub fn write_sequence(
    record: &SequenceRecord,
    dir: &Path,
    encoding: TableEncoding,
) -> Result<(), DataIoError> {
    record.validate().map_err(|m| DataIoError::format(dir, m))?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: TRACK_VERSION,
        sequence_id: record.sequence_id.clone(),
        width: record.space.width,
        height: record.space.height,
        frames: record.frames.clone(),
        scene_points: record
            .scene_tracks
            .iter()
            .map(|t| t.point_id.clone())
            .collect(),
        object_points: record
            .object_tracks
            .iter()
            .map(|t| t.point_id.clone())
            .collect(),
        track_table: encoding.file_name().into(),
        encoding,
        provenance: record.provenance.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    write_file(&dir.join("manifest.json"), json + "\n")?;
    let table_path = dir.join(encoding.file_name());
    match encoding {
        TableEncoding::Binary => write_file(&table_path, encode_binary(record)),
        TableEncoding::Csv => write_file(&table_path, encode_csv(record)),
    }
}

fn encode_binary(record: &SequenceRecord) -> Vec<u8> {
    let points = record.scene_tracks.len() + record.object_tracks.len();
    let frames = record.frames.len();
    let mut out = Vec::with_capacity(HEADER_BYTES + points * frames * ROW_BYTES);
    out.extend_from_slice(&TRACK_MAGIC);
    out.write_u32::<LittleEndian>(TRACK_VERSION).unwrap();
    out.write_u32::<LittleEndian>(points as u32).unwrap();
    out.write_u32::<LittleEndian>(frames as u32).unwrap();
    for s in record.all_tracks().flat_map(|t| &t.samples) {
        out.write_f32::<LittleEndian>(s.x).unwrap();
        out.write_f32::<LittleEndian>(s.y).unwrap();
        out.push(s.visible as u8);
        out.push(s.in_view as u8);
    }
    out
}

fn encode_csv(record: &SequenceRecord) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["point", "frame", "x", "y", "visible", "in_view"])
        .unwrap();
    for (p, t) in record.all_tracks().enumerate() {
        for (f, s) in t.samples.iter().enumerate() {
            w.write_record([
                p.to_string(),
                f.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                (s.visible as u8).to_string(),
                (s.in_view as u8).to_string(),
            ])
            .unwrap();
        }
    }
    w.into_inner().expect("in-memory csv")
}

fn flag(path: &Path, v: u8) -> Result<bool, DataIoError> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(DataIoError::format(
            path,
            format!("flag byte {v} is not 0 or 1"),
        )),
    }
}

/// Decodes a binary track table into `points` rows of `frames` samples.
fn decode_binary(
    path: &Path,
    bytes: &[u8],
    points: usize,
    frames: usize,
) -> Result<Vec<Vec<TrackSample>>, DataIoError> {
    if bytes.len() < HEADER_BYTES {
        return Err(DataIoError::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_BYTES,
            found: bytes.len(),
        });
    }
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).unwrap();
    if magic != TRACK_MAGIC {
        return Err(DataIoError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    let version = r.read_u32::<LittleEndian>().unwrap();
    if version != TRACK_VERSION {
        return Err(DataIoError::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: TRACK_VERSION,
        });
    }
    let n_points = r.read_u32::<LittleEndian>().unwrap() as usize;
    let n_frames = r.read_u32::<LittleEndian>().unwrap() as usize;
    if (n_points, n_frames) != (points, frames) {
        return Err(DataIoError::format(
            path,
            format!(
                "table holds {n_points} points x {n_frames} frames, manifest declares {points} x {frames}"
            ),
        ));
    }
    let expected = HEADER_BYTES + n_points * n_frames * ROW_BYTES;
    if bytes.len() != expected {
        return Err(DataIoError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let mut rows = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let mut samples = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let x = r.read_f32::<LittleEndian>().unwrap();
            let y = r.read_f32::<LittleEndian>().unwrap();
            let visible = flag(path, r.read_u8().unwrap())?;
            let in_view = flag(path, r.read_u8().unwrap())?;
            samples.push(TrackSample {
                x,
                y,
                visible,
                in_view,
            });
        }
        rows.push(samples);
    }
    Ok(rows)
}

fn decode_csv(
    path: &Path,
    text: &str,
    points: usize,
    frames: usize,
) -> Result<Vec<Vec<TrackSample>>, DataIoError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DataIoError::format(path, e.to_string()))?;
    if header != vec!["point", "frame", "x", "y", "visible", "in_view"] {
        return Err(DataIoError::parse(path, 1, "unexpected header"));
    }
    let mut rows = vec![Vec::with_capacity(frames); points];
    let mut expected = (0usize, 0usize);
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataIoError::parse(path, line, e.to_string()))?;
        if rec.len() != 6 {
            return Err(DataIoError::parse(path, line, "expected 6 fields"));
        }
        let num = |k: usize| -> Result<u64, DataIoError> {
            rec[k].parse().map_err(|_| {
                DataIoError::parse(path, line, format!("invalid integer {:?}", &rec[k]))
            })
        };
        let float = |k: usize| -> Result<f32, DataIoError> {
            rec[k].parse().map_err(|_| {
                DataIoError::parse(path, line, format!("invalid number {:?}", &rec[k]))
            })
        };
        let (p, f) = (num(0)? as usize, num(1)? as usize);
        if (p, f) != expected || p >= points {
            return Err(DataIoError::parse(
                path,
                line,
                format!(
                    "expected row for point {}, frame {}",
                    expected.0, expected.1
                ),
            ));
        }
        let byte = |k: usize| -> Result<bool, DataIoError> {
            let v = num(k)?;
            u8::try_from(v)
                .map_err(|_| DataIoError::parse(path, line, "flag out of range"))
                .and_then(|b| flag(path, b))
        };
        rows[p].push(TrackSample {
            x: float(2)?,
            y: float(3)?,
            visible: byte(4)?,
            in_view: byte(5)?,
        });
        expected = if f + 1 == frames {
            (p + 1, 0)
        } else {
            (p, f + 1)
        };
    }
    if points > 0 && frames > 0 && expected != (points, 0) {
        return Err(DataIoError::format(path, "track table ends early"));
    }
    Ok(rows)
}

pub fn read_sequence(dir: &Path) -> Result<SequenceRecord, DataIoError> {
    let manifest_path = dir.join("manifest.json");
    let text = read_to_string(&manifest_path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let m: Manifest = serde_path_to_error::deserialize(&mut de).map_err(|e| DataIoError::Json {
        path: manifest_path.clone(),
        message: format!("{}: {}", e.path(), e.inner()),
    })?;
    if m.format != MANIFEST_FORMAT {
        return Err(DataIoError::format(
            &manifest_path,
            format!("unknown format {:?}", m.format),
        ));
    }
    if m.version != TRACK_VERSION {
        return Err(DataIoError::VersionMismatch {
            path: manifest_path,
            found: m.version,
            expected: TRACK_VERSION,
        });
    }
    if m.track_table != m.encoding.file_name() {
        return Err(DataIoError::format(
            &manifest_path,
            format!("track table {:?} does not match encoding", m.track_table),
        ));
    }
    let space = ImageSpace::new(m.width, m.height)
        .map_err(|e| DataIoError::format(&manifest_path, e.to_string()))?;
    let points = m.scene_points.len() + m.object_points.len();
    let frames = m.frames.len();
    let table_path = dir.join(&m.track_table);
    let mut rows = match m.encoding {
        TableEncoding::Binary => {
            let bytes = std::fs::read(&table_path).map_err(|e| DataIoError::io(&table_path, e))?;
            decode_binary(&table_path, &bytes, points, frames)?
        }
        TableEncoding::Csv => {
            decode_csv(&table_path, &read_to_string(&table_path)?, points, frames)?
        }
    }
    .into_iter();
    let mut take = |ids: Vec<String>| -> Vec<TrackRow> {
        ids.into_iter()
            .map(|point_id| TrackRow {
                point_id,
                samples: rows.next().expect("row count checked"),
            })
            .collect()
    };
    let scene_tracks = take(m.scene_points);
    let object_tracks = take(m.object_points);
    Ok(SequenceRecord {
        sequence_id: m.sequence_id,
        frames: m.frames,
        space,
        scene_tracks,
        object_tracks,
        provenance: m.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(points: usize, frames: usize) -> SequenceRecord {
        let row = |p: usize| TrackRow {
            point_id: p.to_string(),
            samples: (0..frames)
                .map(|f| TrackSample {
                    x: p as f32 * 0.37 + f as f32 / 3.0,
                    y: -(f as f32) * 1.1e-3,
                    visible: !(p + f).is_multiple_of(3),
                    in_view: !(p + f).is_multiple_of(5),
                })
                .collect(),
        };
        SequenceRecord {
            sequence_id: "seq".into(),
            frames: (0..frames).map(|f| format!("f{f}.jpg")).collect(),
            space: ImageSpace::new(456, 256).unwrap(),
            scene_tracks: (0..points).map(row).collect(),
            object_tracks: (points..points + 2).map(row).collect(),
            provenance: Provenance {
                source_start: 16,
                source_frames: vec!["a".into()],
                loop_augmented: true,
                object_count: 1,
                object_ids: vec!["obj".into()],
            },
        }
    }

    #[test]
    fn both_encodings_round_trip() {
        for enc in [TableEncoding::Binary, TableEncoding::Csv] {
            let dir = tempfile::tempdir().unwrap();
            let r = record(5, 24);
            write_sequence(&r, dir.path(), enc).unwrap();
            assert_eq!(read_sequence(dir.path()).unwrap(), r);
        }
    }

    #[test]
    fn empty_record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record(0, 24);
        r.object_tracks.clear();
        write_sequence(&r, dir.path(), TableEncoding::Binary).unwrap();
        assert_eq!(read_sequence(dir.path()).unwrap(), r);
        let len = std::fs::metadata(dir.path().join("tracks.bin"))
            .unwrap()
            .len();
        assert_eq!(len, 16);
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_binary(&record(1, 2));
        assert_eq!(&bytes[..4], b"KEPC");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 3 * 2 * 10);
        // Point 0, frame 0: x = 0.0, y = -0.0, visible = 0, in_view = 0.
        assert_eq!(&bytes[16..20], &0f32.to_le_bytes());
        assert_eq!(&bytes[24..26], &[0, 0]);
    }

    fn corrupt(f: impl FnOnce(&mut Vec<u8>)) -> DataIoError {
        let dir = tempfile::tempdir().unwrap();
        write_sequence(&record(2, 4), dir.path(), TableEncoding::Binary).unwrap();
        let path = dir.path().join("tracks.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        f(&mut bytes);
        std::fs::write(&path, bytes).unwrap();
        read_sequence(dir.path()).unwrap_err()
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        assert!(matches!(
            corrupt(|b| b[0] = b'X'),
            DataIoError::BadMagic { .. }
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(matches!(
            corrupt(|b| b[4] = 2),
            DataIoError::VersionMismatch { found: 2, .. }
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        assert!(matches!(
            corrupt(|b| {
                b.pop();
            }),
            DataIoError::Truncated { .. }
        ));
    }

    #[test]
    fn non_boolean_flag_is_rejected() {
        assert!(matches!(corrupt(|b| b[24] = 7), DataIoError::Format { .. }));
    }

    #[test]
    fn misaligned_record_is_not_written() {
        let mut r = record(1, 3);
        r.scene_tracks[0].samples.pop();
        let dir = tempfile::tempdir().unwrap();
        assert!(write_sequence(&r, dir.path(), TableEncoding::Binary).is_err());
    }
}
