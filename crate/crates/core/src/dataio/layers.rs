//! Pre-rendered object layers.
//!
//! Each layer lives in its own directory:
//!
//! ```text
//! layer.json   {"object_id": "obj_03", "frames": ["rgba_00.png", ...], "tracks": "tracks.csv"}
//! tracks.csv   point_id,frame,x,y,visible
//! rgba_NN.png  one RGBA image per frame; alpha marks object coverage
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use super::{read_to_string, write_file, DataIoError};
use crate::kepic::{AlphaMask, ObjectLayer, ObjectTrack};
use crate::model::Pixel;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerManifest {
    object_id: String,
    frames: Vec<String>,
    tracks: String,
}

fn load_layer(dir: &Path) -> Result<ObjectLayer, DataIoError> {
    let manifest_path = dir.join("layer.json");
    let text = read_to_string(&manifest_path)?;
    let m: LayerManifest = serde_json::from_str(&text).map_err(|e| DataIoError::Json {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let mut frames = Vec::with_capacity(m.frames.len());
    let mut alpha = Vec::with_capacity(m.frames.len());
    for name in &m.frames {
        let path = dir.join(name);
        let img = image::open(&path)
            .map_err(|source| DataIoError::Image {
                path: path.clone(),
                source,
            })?
            .to_rgba8();
        alpha.push(AlphaMask::new(
            img.width(),
            img.height(),
            img.pixels().map(|p| p.0[3]).collect(),
        ));
        frames.push(path);
    }
    let tracks_path = dir.join(&m.tracks);
    let tracks = parse_tracks(&tracks_path, &read_to_string(&tracks_path)?, frames.len())?;
    Ok(ObjectLayer {
        object_id: m.object_id,
        frames,
        alpha,
        tracks,
    })
}

fn parse_tracks(path: &Path, text: &str, frames: usize) -> Result<Vec<ObjectTrack>, DataIoError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DataIoError::format(path, e.to_string()))?;
    if header != vec!["point_id", "frame", "x", "y", "visible"] {
        return Err(DataIoError::parse(
            path,
            1,
            "expected header point_id,frame,x,y,visible",
        ));
    }
    let mut by_point: BTreeMap<String, Vec<Option<(Pixel, bool)>>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataIoError::parse(path, line, e.to_string()))?;
        let bad = |what: &str| DataIoError::parse(path, line, format!("invalid {what}"));
        let frame: usize = rec[1].parse().map_err(|_| bad("frame"))?;
        let x: f64 = rec[2].parse().map_err(|_| bad("x"))?;
        let y: f64 = rec[3].parse().map_err(|_| bad("y"))?;
        let visible = match &rec[4] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("visible flag")),
        };
        if frame >= frames || !x.is_finite() || !y.is_finite() {
            return Err(bad("row"));
        }
        let id = rec[0].to_string();
        let slots = by_point.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            vec![None; frames]
        });
        if slots[frame].replace((Pixel::new(x, y), visible)).is_some() {
            return Err(DataIoError::parse(
                path,
                line,
                "duplicate (point, frame) row",
            ));
        }
    }
    order
        .into_iter()
        .map(|id| {
            let samples = by_point
                .remove(&id)
                .unwrap()
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| {
                    DataIoError::format(path, format!("point {id} is missing frames"))
                })?;
            Ok(ObjectTrack {
                point_id: id,
                samples,
            })
        })
        .collect()
}

/// Loads every layer directory under `dir`, in name order.
pub fn load_object_layers(dir: &Path) -> Result<Vec<ObjectLayer>, DataIoError> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| DataIoError::io(dir, e))? {
        let path = entry.map_err(|e| DataIoError::io(dir, e))?.path();
        if path.join("layer.json").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_layer(d)).collect()
}

/// Writes a layer as flat-colored RGBA frames plus its track table.
pub fn write_object_layer(
    dir: &Path,
    layer: &ObjectLayer,
    color: [u8; 3],
) -> Result<(), DataIoError> {
    let mut names = Vec::new();
    for (i, mask) in layer.alpha.iter().enumerate() {
        let name = format!("rgba_{i:02}.png");
        let path = dir.join(&name);
        let img = RgbaImage::from_fn(mask.width(), mask.height(), |x, y| {
            let a = mask.raw(x, y);
            Rgba([color[0], color[1], color[2], a])
        });
        std::fs::create_dir_all(dir).map_err(|e| DataIoError::io(dir, e))?;
        img.save(&path)
            .map_err(|source| DataIoError::Image { path, source })?;
        names.push(name);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["point_id", "frame", "x", "y", "visible"])
        .unwrap();
    for t in &layer.tracks {
        for (f, (p, v)) in t.samples.iter().enumerate() {
            w.write_record([
                t.point_id.clone(),
                f.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                (*v as u8).to_string(),
            ])
            .unwrap();
        }
    }
    write_file(&dir.join("tracks.csv"), w.into_inner().unwrap())?;
    let manifest = LayerManifest {
        object_id: layer.object_id.clone(),
        frames: names,
        tracks: "tracks.csv".into(),
    };
    write_file(
        &dir.join("layer.json"),
        serde_json::to_string_pretty(&manifest).unwrap() + "\n",
    )
}
