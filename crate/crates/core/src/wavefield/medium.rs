//! Per-voxel true shear wave speed maps and two-region phantom geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavefield::grid::GridSpec;

/// Per-voxel ground-truth shear wave speed plus integer region labels.
///
/// Voxel order matches [`GridSpec::spatial_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct MediumMap {
    pub grid: GridSpec,
    /// True SWS in m/s per voxel.
    pub sws: Vec<f64>,
    /// Region id per voxel. Region 0 is the background by convention.
    pub region_label: Vec<u32>,
}

impl MediumMap {
    /// Homogeneous medium: a single region 0 at the given speed.
    pub fn homogeneous(grid: GridSpec, sws_mps: f64) -> Result<Self> {
        if !(sws_mps > 0.0) {
            return Err(Error::Validation(format!("sws must be positive, got {sws_mps}")));
        }
        let n = grid.voxel_count();
        Ok(MediumMap {
            grid,
            sws: vec![sws_mps; n],
            region_label: vec![0; n],
        })
    }

    /// Distinct region ids present in the map, ascending.
    pub fn regions(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.region_label.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// The (single) speed of a region. All voxels of one region share one speed.
    pub fn region_sws(&self, region: u32) -> Option<f64> {
        self.region_label
            .iter()
            .position(|&r| r == region)
            .map(|i| self.sws[i])
    }

    pub fn voxel_fraction(&self, region: u32) -> f64 {
        let hits = self.region_label.iter().filter(|&&r| r == region).count();
        hits as f64 / self.region_label.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.grid.voxel_count();
        if self.sws.len() != n || self.region_label.len() != n {
            return Err(Error::Validation(format!(
                "medium arrays hold {}/{} values, grid implies {}",
                self.sws.len(),
                self.region_label.len(),
                n
            )));
        }
        if let Some(i) = self.sws.iter().position(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::Validation(format!(
                "sws must be positive everywhere; voxel {i} holds {}",
                self.sws[i]
            )));
        }
        Ok(())
    }
}

/// Inclusion geometry for [`make_two_region_medium`]. All coordinates are in
/// meters relative to the grid origin (voxel (0,0,0) center).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InclusionShape {
    Sphere {
        center_m: [f64; 3],
        radius_m: f64,
    },
    /// Finite cylinder of total length `length_m` centered at `center_m`,
    /// oriented along `axis`.
    Cylinder {
        center_m: [f64; 3],
        axis: [f64; 3],
        radius_m: f64,
        length_m: f64,
    },
    /// Branching y-shaped tube: a trunk capsule from `trunk_start_m` to
    /// `junction_m` splitting into two straight branches of length
    /// `branch_length_m` that open symmetrically by `branch_angle_rad` around
    /// the trunk direction, inside the plane spanned by the trunk direction
    /// and `branch_plane_normal`'s complement.
    YTube {
        trunk_start_m: [f64; 3],
        junction_m: [f64; 3],
        branch_length_m: f64,
        branch_angle_rad: f64,
        branch_plane_normal: [f64; 3],
        radius_m: f64,
    },
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> Result<[f64; 3]> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Validation("cannot normalize a zero vector".into()));
    }
    Ok(scale(a, 1.0 / n))
}

/// Squared distance from `p` to the segment `a..b`.
fn dist2_to_segment(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = add(a, scale(ab, t));
    let d = sub(p, q);
    dot(d, d)
}

impl InclusionShape {
    fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            InclusionShape::Sphere { center_m, radius_m } => {
                let d = sub(p, *center_m);
                dot(d, d) <= radius_m * radius_m
            }
            InclusionShape::Cylinder {
                center_m,
                axis,
                radius_m,
                length_m,
            } => {
                // axis is normalized during validation
                let d = sub(p, *center_m);
                let along = dot(d, *axis);
                if along.abs() > length_m / 2.0 {
                    return false;
                }
                let radial = sub(d, scale(*axis, along));
                dot(radial, radial) <= radius_m * radius_m
            }
            InclusionShape::YTube {
                trunk_start_m,
                junction_m,
                branch_length_m,
                branch_angle_rad,
                branch_plane_normal,
                radius_m,
            } => {
                let r2 = radius_m * radius_m;
                if dist2_to_segment(p, *trunk_start_m, *junction_m) <= r2 {
                    return true;
                }
                let trunk_dir = match normalize(sub(*junction_m, *trunk_start_m)) {
                    Ok(d) => d,
                    Err(_) => return false,
                };
                let normal = match normalize(*branch_plane_normal) {
                    Ok(n) => n,
                    Err(_) => return false,
                };
                let side = normalize(cross(normal, trunk_dir)).unwrap_or([0.0; 3]);
                for sign in [-1.0, 1.0] {
                    let dir = add(
                        scale(trunk_dir, branch_angle_rad.cos()),
                        scale(side, sign * branch_angle_rad.sin()),
                    );
                    let end = add(*junction_m, scale(dir, *branch_length_m));
                    if dist2_to_segment(p, *junction_m, end) <= r2 {
                        return true;
                    }
                }
                false
            }
        }
    }

    /// Axis-aligned bounding box, used for the fits-inside-grid check.
    fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            InclusionShape::Sphere { center_m, radius_m } => (
                sub(*center_m, [*radius_m; 3]),
                add(*center_m, [*radius_m; 3]),
            ),
            InclusionShape::Cylinder {
                center_m,
                axis,
                radius_m,
                length_m,
            } => {
                // Per-axis extent of a finite cylinder: |l/2 * a_i| + r * sqrt(1 - a_i^2).
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for i in 0..3 {
                    let a = axis[i].clamp(-1.0, 1.0);
                    let e = (length_m / 2.0) * a.abs() + radius_m * (1.0 - a * a).max(0.0).sqrt();
                    lo[i] = center_m[i] - e;
                    hi[i] = center_m[i] + e;
                }
                (lo, hi)
            }
            InclusionShape::YTube {
                trunk_start_m,
                junction_m,
                branch_length_m,
                branch_angle_rad,
                branch_plane_normal,
                radius_m,
            } => {
                let mut pts = vec![*trunk_start_m, *junction_m];
                if let (Ok(trunk_dir), Ok(normal)) = (
                    normalize(sub(*junction_m, *trunk_start_m)),
                    normalize(*branch_plane_normal),
                ) {
                    let side = normalize(cross(normal, trunk_dir)).unwrap_or([0.0; 3]);
                    for sign in [-1.0, 1.0] {
                        let dir = add(
                            scale(trunk_dir, branch_angle_rad.cos()),
                            scale(side, sign * branch_angle_rad.sin()),
                        );
                        pts.push(add(*junction_m, scale(dir, *branch_length_m)));
                    }
                }
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for p in pts {
                    for i in 0..3 {
                        lo[i] = lo[i].min(p[i] - radius_m);
                        hi[i] = hi[i].max(p[i] + radius_m);
                    }
                }
                (lo, hi)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let radius = match self {
            InclusionShape::Sphere { radius_m, .. } => *radius_m,
            InclusionShape::Cylinder {
                radius_m,
                length_m,
                axis,
                ..
            } => {
                if !(norm(*axis) > 0.0) {
                    return Err(Error::Validation("cylinder axis is a zero vector".into()));
                }
                if *length_m < 0.0 {
                    return Err(Error::Validation("cylinder length must be >= 0".into()));
                }
                *radius_m
            }
            InclusionShape::YTube {
                radius_m,
                branch_length_m,
                ..
            } => {
                if *branch_length_m < 0.0 {
                    return Err(Error::Validation("branch length must be >= 0".into()));
                }
                *radius_m
            }
        };
        if radius < 0.0 {
            return Err(Error::Validation("radius must be >= 0".into()));
        }
        Ok(())
    }

    /// Normalize direction vectors in place so `contains` can assume unit axes.
    fn normalized(mut self) -> Result<Self> {
        if let InclusionShape::Cylinder { axis, .. } = &mut self {
            *axis = normalize(*axis)?;
        }
        Ok(self)
    }
}

/// Labels a two-region medium: region 0 background at `background_sws`,
/// region 1 the inclusion at `inclusion_sws`. A degenerate (zero-volume)
/// inclusion yields an all-background map.
pub fn make_two_region_medium(
    grid: &GridSpec,
    background_sws: f64,
    inclusion_sws: f64,
    shape: InclusionShape,
) -> Result<MediumMap> {
    grid.validate()?;
    if !(background_sws > 0.0) || !(inclusion_sws > 0.0) {
        return Err(Error::Validation(format!(
            "region speeds must be positive, got {background_sws} and {inclusion_sws}"
        )));
    }
    shape.validate()?;
    let shape = shape.normalized()?;

    // Inclusion must fit inside the grid (boundary contact allowed).
    let (lo, hi) = shape.bounding_box();
    let extent = grid.extent_m();
    let tol = 1e-9;
    for i in 0..3 {
        // Singleton axes hold a single plane of the 3D medium; the inclusion
        // is only required to fit along axes the grid actually resolves.
        let n = [grid.nx, grid.ny, grid.nz][i];
        if n == 1 {
            continue;
        }
        if lo[i] < -tol || hi[i] > extent[i] + tol {
            return Err(Error::Geometry(format!(
                "inclusion spans [{:.6}, {:.6}] m on axis {i}, grid extent is [0, {:.6}] m",
                lo[i], hi[i], extent[i]
            )));
        }
    }

    let mut medium = MediumMap::homogeneous(grid.clone(), background_sws)?;
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            for iz in 0..grid.nz {
                let p = grid.position(ix, iy, iz);
                if shape.contains(p) {
                    let s = grid.spatial_index(ix, iy, iz);
                    medium.sws[s] = inclusion_sws;
                    medium.region_label[s] = 1;
                }
            }
        }
    }
    Ok(medium)
}
