//! The `.rvf` field container: a 4-byte magic, a version, a JSON header,
//! and a flat little-endian f32 payload.
//!
//! Layout: `"RVSF"` | u32 version | u32 header length | header JSON bytes |
//! payload. All integers little-endian. One format carries both real motion
//! series (space-major, then time) and complex phasor planes (interleaved
//! re/im, one singleton grid axis as the plane normal); the header's
//! `payload` tag tells them apart. Values are stored in f32 and widened to
//! f64 in memory, so write-read-write is byte-stable.

use std::io::Read;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RvfError};
use crate::io::write_atomic;
use crate::spectral::ComplexPlaneField;
use crate::wavefield::grid::{Axis, GridSpec, MotionSeries};

pub const MAGIC: [u8; 4] = *b"RVSF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    RealMotion,
    ComplexPhasor,
}

/// Where a field came from; entirely informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tool: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RvfHeader {
    pub grid: GridSpec,
    pub sensor_axis: Axis,
    pub units: String,
    pub payload: PayloadKind,
    /// Only meaningful for phasor payloads.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weak_signal: Option<bool>,
    pub provenance: Provenance,
}

/// Either kind of field a container can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Motion(MotionSeries),
    Phasor(ComplexPlaneField),
}

fn expected_elements(header: &RvfHeader) -> usize {
    let voxels = header.grid.voxel_count();
    match header.payload {
        PayloadKind::RealMotion => voxels * header.grid.nt,
        PayloadKind::ComplexPhasor => voxels * 2,
    }
}

/// The single axis of length 1, required for phasor payloads.
fn singleton_axis(grid: &GridSpec) -> std::result::Result<Axis, RvfError> {
    let dims = [grid.nx, grid.ny, grid.nz];
    let singles: Vec<Axis> = [Axis::X, Axis::Y, Axis::Z]
        .into_iter()
        .filter(|a| dims[a.index()] == 1)
        .collect();
    match singles.as_slice() {
        [axis] => Ok(*axis),
        _ => Err(RvfError::Header(format!(
            "phasor payload needs exactly one singleton grid axis, dims are {dims:?}"
        ))),
    }
}

pub fn write_field(path: &Path, data: &FieldData, provenance: Provenance) -> Result<()> {
    let (header, payload): (RvfHeader, Vec<f32>) = match data {
        FieldData::Motion(series) => {
            series.validate()?;
            let header = RvfHeader {
                grid: series.grid.clone(),
                sensor_axis: series.sensor_axis,
                units: series.unit.clone(),
                payload: PayloadKind::RealMotion,
                weak_signal: None,
                provenance,
            };
            (header, series.samples.iter().map(|&v| v as f32).collect())
        }
        FieldData::Phasor(field) => {
            field.validate()?;
            // Rebuild the 3D grid with the normal axis collapsed to 1.
            let mut dims = [1usize; 3];
            dims[field.axes[0].index()] = field.width;
            dims[field.axes[1].index()] = field.height;
            let mut spacing = [1.0f64; 3];
            spacing[field.axes[0].index()] = field.spacing_m[0];
            spacing[field.axes[1].index()] = field.spacing_m[1];
            spacing[field.normal.index()] = 1.0;
            let grid = GridSpec {
                nx: dims[0],
                ny: dims[1],
                nz: dims[2],
                spacing_m: spacing,
                nt: 1,
                dt: 1.0,
                f0_hz: field.f0_hz,
            };
            let header = RvfHeader {
                grid,
                sensor_axis: field.sensor_axis,
                units: "m/s".into(),
                payload: PayloadKind::ComplexPhasor,
                weak_signal: Some(field.weak_signal),
                provenance,
            };
            let mut payload = Vec::with_capacity(field.values.len() * 2);
            // Payload follows the grid's spatial order; with axes in x-y-z
            // order the plane's first-axis-major layout already matches.
            for z in &field.values {
                payload.push(z.re as f32);
                payload.push(z.im as f32);
            }
            (header, payload)
        }
    };

    let header_json = serde_json::to_vec(&header)
        .map_err(|e| RvfError::Header(format!("header serialization: {e}")))?;
    let mut bytes =
        Vec::with_capacity(12 + header_json.len() + payload.len() * 4);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in &payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_field(path: &Path) -> Result<(FieldData, RvfHeader)> {
    let mut file = std::fs::File::open(path).map_err(RvfError::Io)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(RvfError::Io)?;
    parse_field(&bytes)
}

fn parse_field(bytes: &[u8]) -> Result<(FieldData, RvfHeader)> {
    if bytes.len() < 12 {
        return Err(RvfError::Header(format!(
            "file is {} bytes, shorter than any valid container",
            bytes.len()
        ))
        .into());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("sliced 4 bytes");
    if magic != MAGIC {
        return Err(RvfError::BadMagic(magic).into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("sliced 4 bytes"));
    if version != FORMAT_VERSION {
        return Err(RvfError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        }
        .into());
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("sliced 4 bytes")) as usize;
    if 12 + header_len > bytes.len() {
        return Err(RvfError::Header(format!(
            "declared header length {header_len} overruns the {}-byte file",
            bytes.len()
        ))
        .into());
    }
    let header: RvfHeader = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| RvfError::Header(e.to_string()))?;

    let expected = expected_elements(&header);
    let payload_bytes = &bytes[12 + header_len..];
    if payload_bytes.len() != expected * 4 {
        return Err(RvfError::SizeMismatch {
            expected,
            actual: payload_bytes.len() / 4,
        }
        .into());
    }
    let mut values = Vec::with_capacity(expected);
    for (i, chunk) in payload_bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunked 4 bytes")) as f64;
        if !v.is_finite() {
            return Err(RvfError::NonFinitePayload { index: i }.into());
        }
        values.push(v);
    }

    let data = match header.payload {
        PayloadKind::RealMotion => {
            header.grid.validate()?;
            let series = MotionSeries {
                grid: header.grid.clone(),
                sensor_axis: header.sensor_axis,
                unit: header.units.clone(),
                samples: values,
            };
            series.validate()?;
            FieldData::Motion(series)
        }
        PayloadKind::ComplexPhasor => {
            let normal = singleton_axis(&header.grid)?;
            let axes = match normal {
                Axis::X => [Axis::Y, Axis::Z],
                Axis::Y => [Axis::X, Axis::Z],
                Axis::Z => [Axis::X, Axis::Y],
            };
            let dims = [header.grid.nx, header.grid.ny, header.grid.nz];
            let field = ComplexPlaneField {
                axes,
                normal,
                sensor_axis: header.sensor_axis,
                width: dims[axes[0].index()],
                height: dims[axes[1].index()],
                spacing_m: [
                    header.grid.spacing_m[axes[0].index()],
                    header.grid.spacing_m[axes[1].index()],
                ],
                f0_hz: header.grid.f0_hz,
                values: values
                    .chunks_exact(2)
                    .map(|p| Complex64::new(p[0], p[1]))
                    .collect(),
                weak_signal: header.weak_signal.unwrap_or(false),
            };
            field.validate()?;
            FieldData::Phasor(field)
        }
    };
    Ok((data, header))
}
