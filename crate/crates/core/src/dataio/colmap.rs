//! COLMAP text reconstructions: `cameras.txt`, `images.txt`, `points3D.txt`.
//!
//! Only undistorted `PINHOLE` and `SIMPLE_PINHOLE` cameras are accepted. An
//! optional `frames.txt` lists every video frame name in temporal order,
//! including frames that were never registered; without it the registered
//! images sorted by name define the order.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{read_to_string, write_file, DataIoError};
use crate::geometry::{CameraIntrinsics, CameraPose, ScenePoint3D};
use crate::model::{ImageSpace, Pixel};

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub camera_id: u32,
    pub space: ImageSpace,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pixel: Pixel,
    pub point3d_id: Option<u64>,
}

/// One registered image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image_id: u32,
    pub name: String,
    pub camera_id: u32,
    pub pose: CameraPose,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconstructionBundle {
    pub cameras: BTreeMap<u32, Camera>,
    /// Registered images, in file order.
    pub frames: Vec<Frame>,
    pub points: BTreeMap<u64, ScenePoint3D>,
    /// Full video frame order when known.
    pub frame_order: Option<Vec<String>>,
}

impl ReconstructionBundle {
    pub fn frame_by_name(&self, name: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.name == name)
    }

    /// Temporal frame order: `frame_order` when present, otherwise the
    /// registered images sorted by name.
    pub fn ordered_frame_names(&self) -> Vec<String> {
        match &self.frame_order {
            Some(order) => order.clone(),
            None => {
                let mut names: Vec<String> = self.frames.iter().map(|f| f.name.clone()).collect();
                names.sort();
                names
            }
        }
    }

    /// Checks that frame names are unique and every observation points at
    /// a known 3D point and a known camera.
    pub fn validate(&self) -> Result<(), DataIoError> {
        let mut names = HashSet::new();
        for f in &self.frames {
            if !names.insert(f.name.as_str()) {
                return Err(DataIoError::format(
                    Path::new("images.txt"),
                    format!("duplicate image name {}", f.name),
                ));
            }
            if !self.cameras.contains_key(&f.camera_id) {
                return Err(DataIoError::format(
                    Path::new("images.txt"),
                    format!("image {} references unknown camera {}", f.name, f.camera_id),
                ));
            }
            for obs in &f.observations {
                if let Some(id) = obs.point3d_id {
                    if !self.points.contains_key(&id) {
                        return Err(DataIoError::DanglingPoint {
                            image: f.name.clone(),
                            point_id: id,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Non-comment lines with their 1-based line numbers. Blank lines are kept
/// because an image without observations has an empty second line.
fn content_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l))
        .collect()
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    tokens: &[&str],
    index: usize,
    name: &str,
) -> Result<T, DataIoError> {
    let tok = tokens
        .get(index)
        .ok_or_else(|| DataIoError::parse(path, line, format!("missing {name}")))?;
    tok.parse()
        .map_err(|_| DataIoError::parse(path, line, format!("invalid {name} {tok:?}")))
}

fn finite(path: &Path, line: usize, v: f64, name: &str) -> Result<f64, DataIoError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DataIoError::parse(path, line, format!("non-finite {name}")))
    }
}

fn parse_cameras(path: &Path, text: &str) -> Result<BTreeMap<u32, Camera>, DataIoError> {
    let mut cameras = BTreeMap::new();
    for (line, l) in content_lines(text) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        let camera_id: u32 = field(path, line, &t, 0, "CAMERA_ID")?;
        let model = *t
            .get(1)
            .ok_or_else(|| DataIoError::parse(path, line, "missing MODEL"))?;
        let width: u32 = field(path, line, &t, 2, "WIDTH")?;
        let height: u32 = field(path, line, &t, 3, "HEIGHT")?;
        let params = t[4..]
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        DataIoError::parse(path, line, format!("invalid parameter {p:?}"))
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let (fx, fy, cx, cy) = match (model, params.as_slice()) {
            ("PINHOLE", &[fx, fy, cx, cy]) => (fx, fy, cx, cy),
            ("SIMPLE_PINHOLE", &[f, cx, cy]) => (f, f, cx, cy),
            ("PINHOLE" | "SIMPLE_PINHOLE", _) => {
                return Err(DataIoError::parse(
                    path,
                    line,
                    format!("{model} has the wrong number of parameters"),
                ))
            }
            _ => {
                return Err(DataIoError::parse(
                    path,
                    line,
                    format!("unsupported camera model {model}; undistort to PINHOLE first"),
                ))
            }
        };
        let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy)
            .map_err(|e| DataIoError::parse(path, line, e.to_string()))?;
        let space = ImageSpace::new(width, height)
            .map_err(|e| DataIoError::parse(path, line, e.to_string()))?;
        if cameras
            .insert(
                camera_id,
                Camera {
                    camera_id,
                    space,
                    intrinsics,
                },
            )
            .is_some()
        {
            return Err(DataIoError::parse(
                path,
                line,
                format!("duplicate camera {camera_id}"),
            ));
        }
    }
    Ok(cameras)
}

fn parse_images(path: &Path, text: &str) -> Result<Vec<Frame>, DataIoError> {
    let lines = content_lines(text);
    let mut frames = Vec::new();
    let mut ids = HashSet::new();
    let mut i = 0;
    while i < lines.len() {
        let (line, l) = lines[i];
        i += 1;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        if t.len() != 10 {
            return Err(DataIoError::parse(
                path,
                line,
                format!("expected 10 fields in image header, found {}", t.len()),
            ));
        }
        let image_id: u32 = field(path, line, &t, 0, "IMAGE_ID")?;
        let mut q = [0.0; 4];
        for (k, v) in q.iter_mut().enumerate() {
            *v = finite(
                path,
                line,
                field(path, line, &t, 1 + k, "quaternion")?,
                "quaternion",
            )?;
        }
        let mut tr = [0.0; 3];
        for (k, v) in tr.iter_mut().enumerate() {
            *v = finite(
                path,
                line,
                field(path, line, &t, 5 + k, "translation")?,
                "translation",
            )?;
        }
        let camera_id: u32 = field(path, line, &t, 8, "CAMERA_ID")?;
        let name = t[9].to_string();
        let pose =
            CameraPose::from_wxyz(q[0], q[1], q[2], q[3], Vector3::from(tr)).map_err(|source| {
                DataIoError::Geometry {
                    path: path.to_path_buf(),
                    source,
                }
            })?;
        // The observation line may be empty or, at end of file, absent.
        let mut observations = Vec::new();
        if let Some(&(oline, ol)) = lines.get(i) {
            i += 1;
            let o: Vec<&str> = ol.split_whitespace().collect();
            if !o.len().is_multiple_of(3) {
                return Err(DataIoError::parse(
                    path,
                    oline,
                    "observations must be X Y POINT3D_ID triples",
                ));
            }
            for c in o.chunks(3) {
                let x = finite(path, oline, field(path, oline, c, 0, "X")?, "X")?;
                let y = finite(path, oline, field(path, oline, c, 1, "Y")?, "Y")?;
                let id: i64 = field(path, oline, c, 2, "POINT3D_ID")?;
                let point3d_id = match id {
                    -1 => None,
                    id if id >= 0 => Some(id as u64),
                    _ => {
                        return Err(DataIoError::parse(
                            path,
                            oline,
                            format!("invalid POINT3D_ID {id}"),
                        ))
                    }
                };
                observations.push(Observation {
                    pixel: Pixel::new(x, y),
                    point3d_id,
                });
            }
        }
        if !ids.insert(image_id) {
            return Err(DataIoError::parse(
                path,
                line,
                format!("duplicate image {image_id}"),
            ));
        }
        frames.push(Frame {
            image_id,
            name,
            camera_id,
            pose,
            observations,
        });
    }
    Ok(frames)
}

fn parse_points(path: &Path, text: &str) -> Result<BTreeMap<u64, ScenePoint3D>, DataIoError> {
    let mut points = BTreeMap::new();
    for (line, l) in content_lines(text) {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        if t.len() < 8 || !(t.len() - 8).is_multiple_of(2) {
            return Err(DataIoError::parse(
                path,
                line,
                format!(
                    "expected POINT3D_ID X Y Z R G B ERROR followed by (IMAGE_ID, POINT2D_IDX) pairs, found {} fields",
                    t.len()
                ),
            ));
        }
        let point_id: u64 = field(path, line, &t, 0, "POINT3D_ID")?;
        let mut xyz = [0.0; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            *v = finite(
                path,
                line,
                field(path, line, &t, 1 + k, "coordinate")?,
                "coordinate",
            )?;
        }
        let color = [
            field(path, line, &t, 4, "R")?,
            field(path, line, &t, 5, "G")?,
            field(path, line, &t, 6, "B")?,
        ];
        let reprojection_error: f64 =
            finite(path, line, field(path, line, &t, 7, "ERROR")?, "ERROR")?;
        if reprojection_error < 0.0 {
            return Err(DataIoError::parse(
                path,
                line,
                "negative reprojection error",
            ));
        }
        let track = t[8..]
            .chunks(2)
            .map(|c| {
                Ok((
                    field(path, line, c, 0, "IMAGE_ID")?,
                    field(path, line, c, 1, "POINT2D_IDX")?,
                ))
            })
            .collect::<Result<Vec<(u32, u32)>, DataIoError>>()?;
        let point = ScenePoint3D {
            point_id,
            position: Point3::from(xyz),
            reprojection_error,
            track,
            color: Some(color),
        };
        if points.insert(point_id, point).is_some() {
            return Err(DataIoError::parse(
                path,
                line,
                format!("duplicate point {point_id}"),
            ));
        }
    }
    Ok(points)
}

pub fn load_reconstruction(dir: &Path) -> Result<ReconstructionBundle, DataIoError> {
    let cameras_path = dir.join("cameras.txt");
    let images_path = dir.join("images.txt");
    let points_path = dir.join("points3D.txt");
    let cameras = parse_cameras(&cameras_path, &read_to_string(&cameras_path)?)?;
    let frames = parse_images(&images_path, &read_to_string(&images_path)?)?;
    let points = parse_points(&points_path, &read_to_string(&points_path)?)?;
    let order_path = dir.join("frames.txt");
    let frame_order = if order_path.exists() {
        Some(
            read_to_string(&order_path)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    } else {
        None
    };
    let bundle = ReconstructionBundle {
        cameras,
        frames,
        points,
        frame_order,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_reconstruction(dir: &Path, bundle: &ReconstructionBundle) -> Result<(), DataIoError> {
    let mut cameras = String::from("# CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    for c in bundle.cameras.values() {
        let k = &c.intrinsics;
        writeln!(
            cameras,
            "{} PINHOLE {} {} {} {} {} {}",
            c.camera_id, c.space.width, c.space.height, k.fx, k.fy, k.cx, k.cy
        )
        .unwrap();
    }
    let mut images = String::from(
        "# IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n# POINTS2D[] as (X, Y, POINT3D_ID)\n",
    );
    for f in &bundle.frames {
        let [w, x, y, z] = f.pose.wxyz();
        let t = f.pose.translation;
        writeln!(
            images,
            "{} {w} {x} {y} {z} {} {} {} {} {}",
            f.image_id, t.x, t.y, t.z, f.camera_id, f.name
        )
        .unwrap();
        let obs: Vec<String> = f
            .observations
            .iter()
            .map(|o| {
                let id = o.point3d_id.map_or(-1i64, |id| id as i64);
                format!("{} {} {id}", o.pixel.x, o.pixel.y)
            })
            .collect();
        images.push_str(&obs.join(" "));
        images.push('\n');
    }
    let mut points =
        String::from("# POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    for p in bundle.points.values() {
        let [r, g, b] = p.color.unwrap_or([0, 0, 0]);
        write!(
            points,
            "{} {} {} {} {r} {g} {b} {}",
            p.point_id, p.position.x, p.position.y, p.position.z, p.reprojection_error
        )
        .unwrap();
        for (image, idx) in &p.track {
            write!(points, " {image} {idx}").unwrap();
        }
        points.push('\n');
    }
    write_file(&dir.join("cameras.txt"), cameras)?;
    write_file(&dir.join("images.txt"), images)?;
    write_file(&dir.join("points3D.txt"), points)?;
    if let Some(order) = &bundle.frame_order {
        write_file(&dir.join("frames.txt"), order.join("\n") + "\n")?;
    }
    Ok(())
}
