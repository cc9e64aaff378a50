//! File formats: JSON calibration, binary and CSV point clouds, PNG and
//! run-length JSON instance masks. Writers replace their target atomically.
//!
//! Binary clouds are little-endian `f32` records. The field list lives in a
//! sidecar `<cloud>.json` (`{"fields": ["x", "y", "z", ...]}`); without one
//! the seven-field layout `x, y, z, rcs, v_r, v_r_comp, time` is assumed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CalibratedFrame, Calibration, InstanceMask, RadarPoint};

pub const DEFAULT_FIELDS: [&str; 7] = ["x", "y", "z", "rcs", "v_r", "v_r_comp", "time"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: parse error at {location}: {message}", path.display())]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Validation { path: PathBuf, message: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, location: impl Into<String>, message: impl ToString) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            location: location.into(),
            message: message.to_string(),
        }
    }

    fn invalid(path: &Path, message: impl ToString) -> Self {
        Self::Validation {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// True for failures of the file system rather than of the content.
    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(|e| IoError::io(path, e))?;
        w.flush().map_err(|e| IoError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let location = e.path().to_string();
        IoError::parse(path, location, e.into_inner())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibFile {
    image_width: u32,
    image_height: u32,
    intrinsic: [f64; 9],
    extrinsic: [f64; 16],
}

pub fn read_calibration(path: &Path) -> Result<Calibration, IoError> {
    let file: CalibFile = parse_json(path, &read_bytes(path)?)?;
    let k = Matrix3::from_row_slice(&file.intrinsic);
    let e = Matrix4::from_row_slice(&file.extrinsic);
    Calibration::new(file.image_width, file.image_height, k, e).map_err(|e| IoError::invalid(path, e))
}

pub fn write_calibration(path: &Path, calib: &Calibration) -> Result<(), IoError> {
    let k = calib.intrinsic();
    let e = calib.extrinsic();
    let file = CalibFile {
        image_width: calib.image_width(),
        image_height: calib.image_height(),
        intrinsic: std::array::from_fn(|i| k[(i / 3, i % 3)]),
        extrinsic: std::array::from_fn(|i| e[(i / 4, i % 4)]),
    };
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &file)?;
        writeln!(w)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Binary,
    Csv,
}

impl CloudFormat {
    /// `.csv` files are CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    fields: Vec<String>,
}

pub fn sidecar_path(cloud: &Path) -> PathBuf {
    let mut s = cloud.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Point cloud contents: attribute names after x, y, z, and the points.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    pub schema: Vec<String>,
    pub points: Vec<RadarPoint>,
}

/// Splits a field list into the positions of x, y, z and the attribute names
/// in file order.
fn field_layout(path: &Path, fields: &[String]) -> Result<([usize; 3], Vec<(usize, String)>), IoError> {
    let find = |name: &str| {
        fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| IoError::invalid(path, format!("field list lacks `{name}`")))
    };
    let xyz = [find("x")?, find("y")?, find("z")?];
    let attrs = fields
        .iter()
        .enumerate()
        .filter(|(i, _)| !xyz.contains(i))
        .map(|(i, f)| (i, f.clone()))
        .collect();
    Ok((xyz, attrs))
}

fn build_point(values: &[f64], xyz: [usize; 3], attrs: &[(usize, String)]) -> RadarPoint {
    RadarPoint::new(
        values[xyz[0]],
        values[xyz[1]],
        values[xyz[2]],
        attrs.iter().map(|(i, _)| values[*i]).collect(),
    )
}

pub fn read_cloud(path: &Path) -> Result<Cloud, IoError> {
    match CloudFormat::from_path(path) {
        CloudFormat::Binary => read_binary_cloud(path),
        CloudFormat::Csv => read_csv_cloud(path),
    }
}

fn read_binary_cloud(path: &Path) -> Result<Cloud, IoError> {
    let side = sidecar_path(path);
    let fields: Vec<String> = if side.exists() {
        parse_json::<Sidecar>(&side, &read_bytes(&side)?)?.fields
    } else {
        DEFAULT_FIELDS.iter().map(|s| s.to_string()).collect()
    };
    let (xyz, attrs) = field_layout(&side, &fields)?;
    let bytes = read_bytes(path)?;
    let stride = 4 * fields.len();
    if bytes.len() % stride != 0 {
        let offset = bytes.len() - bytes.len() % stride;
        return Err(IoError::parse(
            path,
            format!("byte {offset}"),
            format!("{} bytes is not a whole number of {stride}-byte records", bytes.len()),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / stride);
    let mut values = vec![0.0; fields.len()];
    for (r, record) in bytes.chunks_exact(stride).enumerate() {
        for (k, raw) in record.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(raw.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(IoError::parse(path, format!("byte {}", r * stride + 4 * k), "non-finite value"));
            }
            values[k] = v as f64;
        }
        points.push(build_point(&values, xyz, &attrs));
    }
    Ok(Cloud {
        schema: attrs.into_iter().map(|(_, f)| f).collect(),
        points,
    })
}

fn read_csv_cloud(path: &Path) -> Result<Cloud, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let csv_err = |e: csv::Error| {
        let location = e.position().map_or("header".to_string(), |p| format!("line {}", p.line()));
        IoError::parse(path, location, e)
    };
    let fields: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let (xyz, attrs) = field_layout(path, &fields)?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(IoError::parse(path, format!("line {line}"), format!("`{s}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>, _>>()?;
        points.push(build_point(&values, xyz, &attrs));
    }
    Ok(Cloud {
        schema: attrs.into_iter().map(|(_, f)| f).collect(),
        points,
    })
}

/// Writes x, y, z followed by the attributes. Binary output also writes the
/// sidecar field list and stores values as `f32`.
pub fn write_cloud(path: &Path, schema: &[String], points: &[RadarPoint]) -> Result<(), IoError> {
    write_cloud_as(path, CloudFormat::from_path(path), schema, points)
}

/// [`write_cloud`] with the format chosen by the caller.
pub fn write_cloud_as(path: &Path, format: CloudFormat, schema: &[String], points: &[RadarPoint]) -> Result<(), IoError> {
    let mut fields = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    fields.extend(schema.iter().cloned());
    match format {
        CloudFormat::Binary => {
            write_atomic(path, |w| {
                for p in points {
                    for v in [p.x, p.y, p.z].iter().chain(&p.attrs) {
                        w.write_all(&(*v as f32).to_le_bytes())?;
                    }
                }
                Ok(())
            })?;
            write_atomic(&sidecar_path(path), |w| {
                serde_json::to_writer(&mut *w, &Sidecar { fields })?;
                writeln!(w)
            })
        }
        CloudFormat::Csv => write_atomic(path, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(&fields)?;
            for p in points {
                out.write_record([p.x, p.y, p.z].iter().chain(&p.attrs).map(|v| v.to_string()))?;
            }
            out.flush()
        }),
    }
}

/// Calibration plus cloud, validated together.
pub fn load_frame(calib_path: &Path, cloud_path: &Path) -> Result<CalibratedFrame, IoError> {
    let calib = read_calibration(calib_path)?;
    let cloud = read_cloud(cloud_path)?;
    CalibratedFrame::new(calib, cloud.schema, cloud.points).map_err(|e| IoError::invalid(cloud_path, e))
}

/// Writes the frame's points; the calibration is not part of a cloud file.
pub fn write_frame(cloud_path: &Path, frame: &CalibratedFrame) -> Result<(), IoError> {
    write_cloud(cloud_path, frame.schema(), frame.points())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskRle {
    instance_id: u32,
    /// `[start, length]` runs over row-major pixel indices.
    runs: Vec<[u64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskFile {
    image_width: u32,
    image_height: u32,
    instances: Vec<MaskRle>,
}

/// Reads instance masks from a label PNG (`.png`) or run-length JSON and
/// checks them against the frame size. Output is sorted by instance id.
pub fn read_masks(path: &Path, frame_dims: (u32, u32)) -> Result<Vec<InstanceMask>, IoError> {
    let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let masks = if is_png { read_png_masks(path)? } else { read_json_masks(path)? };
    for m in &masks {
        if m.dims() != frame_dims {
            return Err(IoError::invalid(
                path,
                format!("mask {} is {:?}, calibration says {:?}", m.instance_id(), m.dims(), frame_dims),
            ));
        }
    }
    Ok(masks)
}

fn read_json_masks(path: &Path) -> Result<Vec<InstanceMask>, IoError> {
    let file: MaskFile = parse_json(path, &read_bytes(path)?)?;
    let n = file.image_width as u64 * file.image_height as u64;
    let mut seen = std::collections::BTreeSet::new();
    let mut masks = Vec::with_capacity(file.instances.len());
    for (k, inst) in file.instances.iter().enumerate() {
        if !seen.insert(inst.instance_id) {
            return Err(IoError::invalid(path, format!("instance id {} repeats", inst.instance_id)));
        }
        let mut pixels = vec![false; n as usize];
        for (r, &[start, len]) in inst.runs.iter().enumerate() {
            if start.checked_add(len).is_none_or(|end| end > n) {
                return Err(IoError::parse(path, format!("instances[{k}].runs[{r}]"), "run leaves the image"));
            }
            pixels[start as usize..(start + len) as usize].fill(true);
        }
        masks.push(
            InstanceMask::new(inst.instance_id, file.image_width, file.image_height, pixels)
                .map_err(|e| IoError::invalid(path, e))?,
        );
    }
    masks.sort_by_key(|m| m.instance_id());
    Ok(masks)
}

fn read_png_masks(path: &Path) -> Result<Vec<InstanceMask>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| IoError::parse(path, "header", e))?;
    let size = reader.output_buffer_size().ok_or_else(|| IoError::invalid(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| IoError::parse(path, "image data", e))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(IoError::invalid(path, format!("expected a grayscale label image, got {:?}", info.color_type)));
    }
    let (w, h) = (info.width, info.height);
    let wide = info.bit_depth == png::BitDepth::Sixteen;
    let mut labels: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
    for row in 0..h as usize {
        let line = &buf[row * info.line_size..(row + 1) * info.line_size];
        for col in 0..w as usize {
            let id = if wide {
                u16::from_be_bytes([line[2 * col], line[2 * col + 1]]) as u32
            } else {
                line[col] as u32
            };
            if id > 0 {
                labels.entry(id).or_insert_with(|| vec![false; (w * h) as usize])[row * w as usize + col] = true;
            }
        }
    }
    labels
        .into_iter()
        .map(|(id, pixels)| InstanceMask::new(id, w, h, pixels).map_err(|e| IoError::invalid(path, e)))
        .collect()
}

/// Label PNG, 8-bit when every id fits, 16-bit otherwise. Overlapping masks
/// cannot be represented; the larger id wins.
pub fn write_masks_png(path: &Path, masks: &[InstanceMask], dims: (u32, u32)) -> Result<(), IoError> {
    let (w, h) = dims;
    let mut labels = vec![0u32; (w * h) as usize];
    let mut sorted: Vec<&InstanceMask> = masks.iter().collect();
    sorted.sort_by_key(|m| m.instance_id());
    for m in sorted {
        if m.dims() != dims {
            return Err(IoError::invalid(path, format!("mask {} has the wrong size", m.instance_id())));
        }
        if m.instance_id() > u16::MAX as u32 {
            return Err(IoError::invalid(path, format!("instance id {} exceeds 16 bits", m.instance_id())));
        }
        for (l, &p) in labels.iter_mut().zip(m.pixels()) {
            if p {
                *l = m.instance_id();
            }
        }
    }
    let wide = labels.iter().any(|&l| l > 255);
    write_atomic(path, |out| {
        let mut enc = png::Encoder::new(out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(if wide { png::BitDepth::Sixteen } else { png::BitDepth::Eight });
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        let data: Vec<u8> = if wide {
            labels.iter().flat_map(|&l| (l as u16).to_be_bytes()).collect()
        } else {
            labels.iter().map(|&l| l as u8).collect()
        };
        writer.write_image_data(&data).map_err(std::io::Error::other)?;
        writer.finish().map_err(std::io::Error::other)
    })
}

pub fn write_masks_json(path: &Path, masks: &[InstanceMask], dims: (u32, u32)) -> Result<(), IoError> {
    let instances = masks
        .iter()
        .map(|m| {
            let mut runs: Vec<[u64; 2]> = Vec::new();
            for (i, &p) in m.pixels().iter().enumerate() {
                if !p {
                    continue;
                }
                match runs.last_mut() {
                    Some(run) if run[0] + run[1] == i as u64 => run[1] += 1,
                    _ => runs.push([i as u64, 1]),
                }
            }
            MaskRle {
                instance_id: m.instance_id(),
                runs,
            }
        })
        .collect();
    let file = MaskFile {
        image_width: dims.0,
        image_height: dims.1,
        instances,
    };
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &file)?;
        writeln!(w)
    })
}
