//! Volumes of geodesic balls.

use std::f64::consts::PI;

use super::{semigroup::cell_integral, unit_sphere_area, ModelSpace};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureSpec};

impl ModelSpace {
    /// Volume of the geodesic ball of radius `r`.
    ///
    /// On the sphere radii beyond `πR` give the total volume; on the torus
    /// balls that no longer inject are measured by quadrature over the
    /// fundamental cell.
    pub fn ball_volume(&self, r: f64, q: &QuadratureSpec) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("ball radius must be positive and finite, got {r}")));
        }
        let n = self.dim();
        let euclid = |r: f64| unit_sphere_area(n - 1) * r.powi(n as i32) / n as f64;
        match self {
            ModelSpace::Euclidean { .. } => Ok(euclid(r)),
            ModelSpace::Hyperbolic3 => {
                if r < 1e-2 {
                    // sinh 2r - 2r = (2r)^3/6 + (2r)^5/120 + (2r)^7/5040 + ...
                    let x = 2.0 * r;
                    let x3 = x * x * x;
                    Ok(PI * x3 * (1.0 / 6.0 + x * x / 120.0 + x * x * x * x / 5040.0))
                } else {
                    Ok(PI * ((2.0 * r).sinh() - 2.0 * r))
                }
            }
            ModelSpace::Sphere { n, radius } => {
                let th = (r / radius).min(PI);
                let area = unit_sphere_area(n - 1) * radius.powi(*n as i32);
                match n {
                    2 => Ok(area * (1.0 - th.cos())),
                    3 => Ok(area * 0.5 * (th - th.sin() * th.cos())),
                    _ => {
                        let k = *n as i32 - 1;
                        let v = integrate(|u| u.sin().powi(k), 0.0, th, &[], 0.0, 1e-3 * q.tol, q.max_subdivisions)?;
                        Ok(area * v.value)
                    }
                }
            }
            ModelSpace::Torus { periods } => {
                let half_min = 0.5 * periods.iter().copied().fold(f64::INFINITY, f64::min);
                let total: f64 = periods.iter().product();
                if r <= half_min {
                    return Ok(euclid(r));
                }
                if r >= self.diameter().expect("torus is compact") {
                    return Ok(total);
                }
                if n == 1 {
                    return Ok((2.0 * r).min(total));
                }
                let inside = |w: &[f64]| -> f64 {
                    let d2: f64 = w.iter().map(|x| x * x).sum();
                    if d2 < r * r {
                        1.0
                    } else {
                        0.0
                    }
                };
                let origin = vec![0.0; n];
                let v = cell_integral(periods, &inside, Some(r), &origin, q)?;
                Ok(v.value)
            }
        }
    }
}
