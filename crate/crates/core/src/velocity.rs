//! Discrete ordinate set on a velocity annulus {v : v0 <= |v| <= v1}.
//!
//! The quadrature is the product of an angular midpoint rule (equispaced
//! angles) and a radial midpoint rule on the speed interval. Weights carry
//! the 2-D annulus measure, so an isotropic integrand integrates exactly.
//! When v0 == v1 the annulus degenerates to a circle and the weights carry
//! its arc-length measure 2*pi*v0 instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VelocitySet {
    /// Ordinate velocity vectors.
    pub ordinates: Vec<[f64; 2]>,
    /// Strictly positive quadrature weights, one per ordinate.
    pub weights: Vec<f64>,
    pub v_min_speed: f64,
    pub v_max_speed: f64,
    /// Total measure carried by the weights.
    pub measure: f64,
}

impl VelocitySet {
    pub fn len(&self) -> usize {
        self.ordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinates.is_empty()
    }

    pub fn speed(&self, j: usize) -> f64 {
        let [vx, vy] = self.ordinates[j];
        vx.hypot(vy)
    }

    /// Smallest squared speed among the ordinates.
    pub fn min_speed_sq(&self) -> f64 {
        (0..self.len())
            .map(|j| {
                let [vx, vy] = self.ordinates[j];
                vx * vx + vy * vy
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Snap near-zero components produced by cos/sin at multiples of pi/2 so
/// axis-aligned ordinates have exact zero tangential components.
fn snap(x: f64, scale: f64) -> f64 {
    if x.abs() < 1e-14 * scale {
        0.0
    } else {
        x
    }
}

/// Build the discrete ordinate set.
///
/// `n_angles` equispaced directions (starting at angle 0) times `n_speeds`
/// radial shells with midpoint speeds.
pub fn build_velocity_set(
    v0: f64,
    v1: f64,
    n_angles: usize,
    n_speeds: usize,
) -> Result<VelocitySet> {
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!(
            "minimum speed must be strictly positive (zero velocity excluded), got v0 = {v0}"
        )));
    }
    if v0 > v1 {
        return Err(Error::Config(format!(
            "speed interval is empty: v0 = {v0} > v1 = {v1}"
        )));
    }
    if n_angles < 4 {
        return Err(Error::Config(format!(
            "need at least 4 angles, got {n_angles}"
        )));
    }
    if n_speeds == 0 {
        return Err(Error::Config("need at least one speed shell".into()));
    }

    let dtheta = 2.0 * std::f64::consts::PI / n_angles as f64;
    let degenerate = v0 == v1;
    let n_shells = if degenerate { 1 } else { n_speeds };

    let mut ordinates = Vec::with_capacity(n_shells * n_angles);
    let mut weights = Vec::with_capacity(n_shells * n_angles);
    for k in 0..n_shells {
        let (speed, radial_weight) = if degenerate {
            // Circle of radius v0: arc-length measure per angular increment.
            (v0, v0)
        } else {
            let lo = v0 + (v1 - v0) * k as f64 / n_speeds as f64;
            let hi = v0 + (v1 - v0) * (k + 1) as f64 / n_speeds as f64;
            (0.5 * (lo + hi), 0.5 * (hi * hi - lo * lo))
        };
        for a in 0..n_angles {
            let theta = dtheta * a as f64;
            ordinates.push([
                snap(speed * theta.cos(), speed),
                snap(speed * theta.sin(), speed),
            ]);
            weights.push(radial_weight * dtheta);
        }
    }

    let measure = weights.iter().sum();
    Ok(VelocitySet {
        ordinates,
        weights,
        v_min_speed: v0,
        v_max_speed: v1,
        measure,
    })
}
