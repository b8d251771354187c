//! Inflow/outflow partition of boundary-face x ordinate pairs and the
//! minimum admissible observation time.
//!
//! A pair (face, ordinate) is outflow when nu . v > 0, inflow when
//! nu . v < 0; pairs with |nu . v| below the tolerance are tangential and
//! belong to neither side (their flux vanishes).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::velocity::VelocitySet;

/// One (boundary face, ordinate) pair together with the flux weight nu . v.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub face: usize,
    pub ordinate: usize,
    pub nu_dot_v: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryPartition {
    pub gamma_plus: Vec<PartitionEntry>,
    pub gamma_minus: Vec<PartitionEntry>,
    /// Tolerance used to exclude tangential pairs.
    pub tol: f64,
}

/// Default tangential tolerance relative to the largest speed.
pub fn default_tangential_tol(vset: &VelocitySet) -> f64 {
    1e-12 * vset.v_max_speed
}

pub fn classify_boundary(
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    tol: f64,
) -> Result<BoundaryPartition> {
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::Config(format!(
            "tangential tolerance must be nonnegative and finite, got {tol}"
        )));
    }
    let mut gamma_plus = Vec::new();
    let mut gamma_minus = Vec::new();
    for (face_id, face) in mesh.boundary_faces.iter().enumerate() {
        for (j, v) in vset.ordinates.iter().enumerate() {
            let d = face.normal[0] * v[0] + face.normal[1] * v[1];
            if d > tol {
                gamma_plus.push(PartitionEntry {
                    face: face_id,
                    ordinate: j,
                    nu_dot_v: d,
                });
            } else if d < -tol {
                gamma_minus.push(PartitionEntry {
                    face: face_id,
                    ordinate: j,
                    nu_dot_v: d,
                });
            }
        }
    }
    Ok(BoundaryPartition {
        gamma_plus,
        gamma_minus,
        tol,
    })
}

/// Extrema of v . x over the closed rectangle times the ordinate set.
///
/// v . x is linear in x, so the extrema over the closed rectangle are
/// attained at corners; enumerating corner x ordinate pairs is exact.
pub fn vx_extrema(mesh: &SpatialMesh, vset: &VelocitySet) -> (f64, f64) {
    let corners = mesh.corners();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in &vset.ordinates {
        for c in &corners {
            let d = v[0] * c[0] + v[1] * c[1];
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    (lo, hi)
}

/// Minimum admissible observation time.
///
/// Returns (max v.x - min v.x) / D where D is `beta` when given and the
/// smallest squared ordinate speed otherwise. A `beta` outside
/// (0, min |v|^2) is rejected.
pub fn min_observation_time(
    mesh: &SpatialMesh,
    vset: &VelocitySet,
    beta: Option<f64>,
) -> Result<f64> {
    let min_sq = vset.min_speed_sq();
    let denom = match beta {
        Some(b) => {
            if !(b > 0.0 && b < min_sq) {
                return Err(Error::Domain(format!(
                    "weight slope beta must lie in (0, min |v|^2) = (0, {min_sq}), got {b}"
                )));
            }
            b
        }
        None => min_sq,
    };
    let (lo, hi) = vx_extrema(mesh, vset);
    Ok((hi - lo) / denom)
}
