//! Speed-map exports: CSV for review and diffing, 16-bit PGM for a quick
//! look. Both carry enough to reconstruct the estimates; the PGM needs its
//! sidecar JSON for the linear scale.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result, RvfError};
use crate::io::write_atomic;
use crate::pipeline::{SwsCell, SwsMap};
use crate::wavefield::grid::Axis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Csv,
    Pgm16,
}

const CSV_HEADER: &str = "x_m,z_m,sws,valid,residual";

/// Pixel 0 is reserved for invalid windows; valid speeds map linearly onto
/// 1..=65535 with the range recorded in the sidecar.
const PGM_MAX: u16 = 65535;

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

pub fn write_map(map: &SwsMap, path: &Path, format: MapFormat) -> Result<()> {
    match format {
        MapFormat::Csv => write_csv(map, path),
        MapFormat::Pgm16 => write_pgm16(map, path),
    }
}

fn write_csv(map: &SwsMap, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(32 * map.cells.len() + 32);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (iu, &u) in map.centers_u_m.iter().enumerate() {
        for (iv, &v) in map.centers_v_m.iter().enumerate() {
            let cell = map.cell(iu, iv);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(u),
                fmt_f64(v),
                fmt_f64(cell.sws_mps),
                u8::from(cell.valid),
                fmt_f64(cell.rmse),
            );
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Rebuild a map from its CSV export. The file does not carry the plane
/// axes or the drive frequency, so those come back as x/z and NaN; rows may
/// be in any order but must cover the full center lattice exactly once.
pub fn read_map_csv(path: &Path) -> Result<SwsMap> {
    let text = std::fs::read_to_string(path).map_err(RvfError::Io)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Validation(format!(
                "map CSV must start with `{CSV_HEADER}`, got {other:?}"
            )))
        }
    }

    struct Row {
        u: f64,
        v: f64,
        cell: SwsCell,
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Validation(format!(
                "map CSV row {} has {} fields, expected 5",
                n + 2,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| {
                Error::Validation(format!("map CSV row {}: bad {what} `{s}`", n + 2))
            })
        };
        let u = parse(fields[0], "x_m")?;
        let v = parse(fields[1], "z_m")?;
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::Validation(format!(
                "map CSV row {}: non-finite window center",
                n + 2
            )));
        }
        let sws = parse(fields[2], "sws")?;
        let valid = match fields[3].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Validation(format!(
                    "map CSV row {}: valid flag must be 0 or 1, got `{other}`",
                    n + 2
                )))
            }
        };
        let rmse = parse(fields[4], "residual")?;
        rows.push(Row {
            u,
            v,
            cell: SwsCell {
                sws_mps: sws,
                k_rad_per_m: f64::NAN,
                rmse,
                valid,
            },
        });
    }

    let mut centers_u: Vec<f64> = rows.iter().map(|r| r.u).collect();
    centers_u.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
    centers_u.dedup();
    let mut centers_v: Vec<f64> = rows.iter().map(|r| r.v).collect();
    centers_v.sort_by(|a, b| a.partial_cmp(b).expect("finite centers"));
    centers_v.dedup();

    let (nu, nv) = (centers_u.len(), centers_v.len());
    if rows.len() != nu * nv {
        return Err(Error::Validation(format!(
            "map CSV has {} rows but its centers span a {nu}×{nv} lattice",
            rows.len()
        )));
    }
    let mut cells: Vec<Option<SwsCell>> = vec![None; nu * nv];
    for row in rows {
        let iu = centers_u.iter().position(|&c| c == row.u).expect("from list");
        let iv = centers_v.iter().position(|&c| c == row.v).expect("from list");
        let slot = &mut cells[iu * nv + iv];
        if slot.is_some() {
            return Err(Error::Validation(format!(
                "map CSV repeats window center ({}, {})",
                row.u, row.v
            )));
        }
        *slot = Some(row.cell);
    }
    let cells: Vec<SwsCell> = cells
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Validation("map CSV does not cover its center lattice".into()))?;

    Ok(SwsMap {
        axes: [Axis::X, Axis::Z],
        f0_hz: f64::NAN,
        centers_u_m: centers_u,
        centers_v_m: centers_v,
        cells,
    })
}

/// Scale metadata stored next to a PGM export.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

pub fn sidecar_path(pgm_path: &Path) -> PathBuf {
    let mut os = pgm_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn write_pgm16(map: &SwsMap, path: &Path) -> Result<()> {
    let valid: Vec<f64> = map
        .cells
        .iter()
        .filter(|c| c.valid)
        .map(|c| c.sws_mps)
        .collect();
    let min = valid.iter().copied().fold(f64::INFINITY, f64::min);
    let max = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if valid.is_empty() {
        PgmScale { min: 0.0, max: 0.0 }
    } else {
        PgmScale { min, max }
    };
    let range = scale.max - scale.min;

    let (w, h) = (map.nu(), map.nv());
    let mut bytes = format!("P5\n{w} {h}\n{PGM_MAX}\n").into_bytes();
    // PGM scan lines run top to bottom; v indexes rows.
    for iv in 0..h {
        for iu in 0..w {
            let cell = map.cell(iu, iv);
            let pixel: u16 = if !cell.valid {
                0
            } else if range > 0.0 {
                let t = (cell.sws_mps - scale.min) / range;
                1 + (t * (PGM_MAX - 1) as f64).round() as u16
            } else {
                1
            };
            bytes.extend_from_slice(&pixel.to_be_bytes());
        }
    }
    write_atomic(path, &bytes)?;
    let sidecar = serde_json::to_vec_pretty(&scale)
        .map_err(|e| Error::Validation(format!("sidecar serialization: {e}")))?;
    write_atomic(&sidecar_path(path), &sidecar)
}

/// Recover speeds from a PGM export and its sidecar; invalid pixels come
/// back as NaN.
pub fn read_pgm16(path: &Path) -> Result<(Vec<Vec<f64>>, PgmScale)> {
    let bytes = std::fs::read(path).map_err(RvfError::Io)?;
    let header_err = |msg: &str| Error::Validation(format!("PGM: {msg}"));
    // Tokenize the header byte-wise; the binary payload right behind it need
    // not be valid text.
    fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> &'a [u8] {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        &bytes[start..*pos]
    }
    let mut pos = 0usize;
    if next_token(&bytes, &mut pos) != b"P5" {
        return Err(header_err("not a P5 file"));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = std::str::from_utf8(next_token(&bytes, &mut pos))
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| header_err("bad dimensions"))?;
    }
    let [w, h, maxval] = dims;
    if maxval != PGM_MAX as usize {
        return Err(header_err("expected 16-bit maxval"));
    }
    let data_start = bytes.len() - 2 * w * h;
    let scale: PgmScale = serde_json::from_slice(
        &std::fs::read(sidecar_path(path)).map_err(RvfError::Io)?,
    )
    .map_err(|e| Error::Validation(format!("sidecar: {e}")))?;
    let range = scale.max - scale.min;
    let mut out = vec![vec![f64::NAN; w]; h];
    for iv in 0..h {
        for iu in 0..w {
            let o = data_start + 2 * (iv * w + iu);
            let pixel = u16::from_be_bytes([bytes[o], bytes[o + 1]]);
            if pixel > 0 {
                out[iv][iu] =
                    scale.min + (pixel - 1) as f64 / (PGM_MAX - 1) as f64 * range;
            }
        }
    }
    Ok((out, scale))
}
