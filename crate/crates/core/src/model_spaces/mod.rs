//! Model manifolds with exactly known heat kernels.
//!
//! Four families are provided: flat Euclidean space, round spheres, flat
//! rectangular tori and three-dimensional hyperbolic space. Each carries its
//! dimension, Ricci lower bound, distance structure and volume element; the
//! heat kernel itself lives in [`kernel`], volumes in [`volume`] and the heat
//! semigroup acting on observables in [`semigroup`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub mod kernel;
pub mod semigroup;
pub mod volume;

pub use kernel::KernelEval;
pub use semigroup::{semigroup_apply, Observable};

/// Below this distance (in units of the space scale) radial formulas switch
/// to their Taylor expansions at the pole.
pub(crate) const POLE_EPS: f64 = 1e-7;

/// A model manifold.
///
/// Constructed through [`ModelSpace::euclidean`], [`ModelSpace::sphere`],
/// [`ModelSpace::torus`], [`ModelSpace::hyperbolic3`] or by parsing the
/// compact text form (`euclidean:2`, `sphere:2:1`, `torus:1,1`,
/// `hyperbolic3`), all of which validate their parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpace {
    Euclidean { n: usize },
    /// Round sphere of dimension `n >= 2` and radius `radius`.
    Sphere { n: usize, radius: f64 },
    /// Flat torus R^n / (L_1 Z x ... x L_n Z).
    Torus { periods: Vec<f64> },
    /// Hyperbolic space of dimension 3 and sectional curvature -1.
    Hyperbolic3,
}

/// A point relative to a reference point: a geodesic distance on the
/// radially symmetric models, or a displacement vector on the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum Offset {
    Radial(f64),
    Displacement(Vec<f64>),
}

impl From<f64> for Offset {
    fn from(r: f64) -> Self {
        Offset::Radial(r)
    }
}

impl From<Vec<f64>> for Offset {
    fn from(v: Vec<f64>) -> Self {
        Offset::Displacement(v)
    }
}

impl From<&[f64]> for Offset {
    fn from(v: &[f64]) -> Self {
        Offset::Displacement(v.to_vec())
    }
}

/// Surface area of the unit sphere S^k in R^(k+1).
pub fn unit_sphere_area(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * unit_sphere_area(k - 2),
    }
}

impl ModelSpace {
    pub fn euclidean(n: usize) -> Result<Self> {
        let s = ModelSpace::Euclidean { n };
        s.validate()?;
        Ok(s)
    }

    pub fn sphere(n: usize, radius: f64) -> Result<Self> {
        let s = ModelSpace::Sphere { n, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn torus(periods: Vec<f64>) -> Result<Self> {
        let s = ModelSpace::Torus { periods };
        s.validate()?;
        Ok(s)
    }

    pub fn hyperbolic3() -> Self {
        ModelSpace::Hyperbolic3
    }

    /// Sphere of dimension `n` whose radius is chosen so that its total
    /// volume is one.
    pub fn unit_volume_sphere(n: usize) -> Result<Self> {
        let radius = unit_sphere_area(n).powf(-1.0 / n as f64);
        ModelSpace::sphere(n, radius)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpace::Euclidean { n } if *n == 0 || *n > 16 => {
                Err(Error::domain(format!("euclidean dimension must be in 1..=16, got {n}")))
            }
            ModelSpace::Sphere { n, .. } if *n < 2 || *n > 16 => Err(Error::domain(format!(
                "sphere dimension must be in 2..=16, got {n} (use a torus for the circle)"
            ))),
            ModelSpace::Sphere { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => {
                Err(Error::domain(format!("sphere radius must be positive, got {radius}")))
            }
            ModelSpace::Torus { periods } if periods.is_empty() || periods.len() > 3 => Err(Error::domain(format!(
                "torus dimension must be in 1..=3, got {}",
                periods.len()
            ))),
            ModelSpace::Torus { periods } if periods.iter().any(|l| !(*l > 0.0 && l.is_finite())) => {
                Err(Error::domain(format!("torus periods must be positive, got {periods:?}")))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpace::Euclidean { n } | ModelSpace::Sphere { n, .. } => *n,
            ModelSpace::Torus { periods } => periods.len(),
            ModelSpace::Hyperbolic3 => 3,
        }
    }

    /// Lower bound of the Ricci curvature (attained: the models are Einstein).
    pub fn rho(&self) -> f64 {
        match self {
            ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. } => 0.0,
            ModelSpace::Sphere { n, radius } => (*n as f64 - 1.0) / (radius * radius),
            ModelSpace::Hyperbolic3 => -2.0,
        }
    }

    /// Diameter, finite exactly for the compact models.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            ModelSpace::Sphere { radius, .. } => Some(std::f64::consts::PI * radius),
            ModelSpace::Torus { periods } => Some(0.5 * periods.iter().map(|l| l * l).sum::<f64>().sqrt()),
            _ => None,
        }
    }

    pub fn is_compact(&self) -> bool {
        self.diameter().is_some()
    }

    /// True when the kernel depends on the distance only.
    pub fn is_radial(&self) -> bool {
        !matches!(self, ModelSpace::Torus { periods } if periods.len() > 1)
    }

    /// Total volume of compact models.
    pub fn total_volume(&self) -> Option<f64> {
        match self {
            ModelSpace::Sphere { n, radius } => Some(unit_sphere_area(*n) * radius.powi(*n as i32)),
            ModelSpace::Torus { periods } => Some(periods.iter().product()),
            _ => None,
        }
    }

    /// Length scale used for step sizes and pole thresholds.
    pub fn scale(&self) -> f64 {
        match self {
            ModelSpace::Sphere { radius, .. } => *radius,
            ModelSpace::Torus { periods } => periods.iter().copied().fold(f64::INFINITY, f64::min),
            _ => 1.0,
        }
    }

    /// Largest radius on which functions of the distance are smooth away
    /// from the base point: the diameter on the sphere, the injectivity
    /// radius on the torus, unbounded otherwise.
    pub fn radial_limit(&self) -> f64 {
        match self {
            ModelSpace::Sphere { radius, .. } => std::f64::consts::PI * radius,
            ModelSpace::Torus { periods } => 0.5 * periods.iter().copied().fold(f64::INFINITY, f64::min),
            _ => f64::INFINITY,
        }
    }

    /// Reduces a torus displacement to the minimal image in `[-L/2, L/2]^n`.
    pub fn reduce(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            ModelSpace::Torus { periods } => {
                if v.len() != periods.len() {
                    return Err(Error::domain(format!(
                        "displacement has dimension {} but the torus has dimension {}",
                        v.len(),
                        periods.len()
                    )));
                }
                Ok(v.iter().zip(periods).map(|(x, l)| x - l * (x / l).round()).collect())
            }
            _ => Err(Error::domain("displacements only apply to the torus")),
        }
    }

    /// Distance from the reference point to `at`.
    pub fn distance(&self, at: &Offset) -> Result<f64> {
        match at {
            Offset::Radial(r) => Ok(r.abs()),
            Offset::Displacement(v) => match self {
                ModelSpace::Torus { .. } => Ok(norm(&self.reduce(v)?)),
                _ => Ok(norm(v)),
            },
        }
    }

    /// Geodesic-sphere geometry at radius `r`: returns `(r c(r), r^2 c'(r))`
    /// where `c` is the mean curvature of the distance sphere divided by
    /// `n - 1`, i.e. `1/r`, `cot(r/R)/R` or `coth r`.
    pub(crate) fn curvature_pieces(&self, r: f64) -> (f64, f64) {
        match self {
            ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. } => (1.0, -1.0),
            ModelSpace::Sphere { radius, .. } => {
                let th = r / radius;
                if th.abs() < 1e-4 {
                    let t2 = th * th;
                    (1.0 - t2 / 3.0 - t2 * t2 / 45.0, -(1.0 + t2 / 3.0 + t2 * t2 / 15.0))
                } else {
                    let s = th.sin();
                    (th * th.cos() / s, -(th * th) / (s * s))
                }
            }
            ModelSpace::Hyperbolic3 => {
                if r.abs() < 1e-4 {
                    let r2 = r * r;
                    (1.0 + r2 / 3.0 - r2 * r2 / 45.0, -(1.0 - r2 / 3.0 + r2 * r2 / 15.0))
                } else {
                    let s = r.sinh();
                    (r / r.tanh(), -(r * r) / (s * s))
                }
            }
        }
    }

    /// Pole-safe evaluation of `c(r) f'(r)` and `c'(r) f'(r)^2` for a smooth
    /// radial function with derivatives `f1, f2` and optionally `f3` at `r`.
    ///
    /// At the base point (and at the antipode of a sphere) `c` is singular
    /// while `f'` vanishes; the products are then evaluated from the Taylor
    /// expansion of `f'` when `series` is true, and rejected otherwise.
    pub(crate) fn drift_products(&self, r: f64, f1: f64, f2: f64, f3: Option<f64>, series: bool) -> Result<(f64, f64)> {
        let scale = self.scale();
        let eps = POLE_EPS * scale;
        if r.abs() < eps {
            if !series {
                return Err(Error::Pole { r });
            }
            // f'(r)/r = f''(r) - r f'''(r)/2 + O(r^2)
            let q = f2 - 0.5 * r * f3.unwrap_or(0.0);
            let (rc, r2dc) = self.curvature_pieces(r);
            return Ok((rc * q, r2dc * q * q));
        }
        if let ModelSpace::Sphere { radius, .. } = self {
            let u = std::f64::consts::PI * radius - r;
            if u.abs() < eps {
                if !series {
                    return Err(Error::Pole { r });
                }
                // f'(r)/u = -(f''(r) + u f'''(r)/2) + O(u^2), u = pi R - r
                let q = -(f2 + 0.5 * u * f3.unwrap_or(0.0));
                let (uc, u2dc) = self.curvature_pieces(u);
                // c(r) = -c(u), c'(r) = c'(u)
                return Ok((-uc * q, u2dc * q * q));
            }
        }
        let (rc, r2dc) = self.curvature_pieces(r);
        Ok((rc / r * f1, r2dc / (r * r) * f1 * f1))
    }

    /// Density of the Riemannian measure in geodesic polar coordinates,
    /// including the area of the unit direction sphere.
    pub fn surface_density(&self, r: f64) -> f64 {
        let n = self.dim();
        let area = unit_sphere_area(n - 1);
        let jac = match self {
            ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. } => r,
            ModelSpace::Sphere { radius, .. } => radius * (r / radius).sin(),
            ModelSpace::Hyperbolic3 => r.sinh(),
        };
        area * jac.powi(n as i32 - 1)
    }

    /// Distance between two points at distances `a` and `rho` from a common
    /// base point whose geodesics make angle `phi`, with the half-angle form
    /// of the law of cosines for accuracy at small separations.
    pub(crate) fn triangle_side(&self, a: f64, rho: f64, phi: f64) -> f64 {
        let h = (0.5 * phi).sin();
        let h2 = h * h;
        match self {
            ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. } => {
                let d2 = (rho - a).powi(2) + 4.0 * rho * a * h2;
                d2.max(0.0).sqrt()
            }
            ModelSpace::Sphere { radius, .. } => {
                let sa = (0.5 * (rho - a) / radius).sin();
                let s = sa * sa + (rho / radius).sin() * (a / radius).sin() * h2;
                2.0 * radius * s.clamp(0.0, 1.0).sqrt().asin()
            }
            ModelSpace::Hyperbolic3 => {
                let sa = (0.5 * (rho - a)).sinh();
                let s = sa * sa + rho.sinh() * a.sinh() * h2;
                2.0 * s.max(0.0).sqrt().asinh()
            }
        }
    }

    /// Angle `phi` in `(0, pi)` at which [`triangle_side`](Self::triangle_side)
    /// equals `d`, if any.
    pub(crate) fn triangle_angle(&self, a: f64, rho: f64, d: f64) -> Option<f64> {
        let ratio = match self {
            ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. } => {
                let den = 4.0 * rho * a;
                (d * d - (rho - a).powi(2)) / den
            }
            ModelSpace::Sphere { radius, .. } => {
                let sd = (0.5 * d / radius).sin();
                let sa = (0.5 * (rho - a) / radius).sin();
                let den = (rho / radius).sin() * (a / radius).sin();
                (sd * sd - sa * sa) / den
            }
            ModelSpace::Hyperbolic3 => {
                let sd = (0.5 * d).sinh();
                let sa = (0.5 * (rho - a)).sinh();
                (sd * sd - sa * sa) / (rho.sinh() * a.sinh())
            }
        };
        (ratio > 0.0 && ratio < 1.0).then(|| 2.0 * ratio.sqrt().asin())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl fmt::Display for ModelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpace::Euclidean { n } => write!(f, "euclidean:{n}"),
            ModelSpace::Sphere { n, radius } => write!(f, "sphere:{n}:{radius}"),
            ModelSpace::Torus { periods } => {
                write!(f, "torus:")?;
                for (i, l) in periods.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                Ok(())
            }
            ModelSpace::Hyperbolic3 => write!(f, "hyperbolic3"),
        }
    }
}

fn parse_positive(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid {what} '{s}'")))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{what} must be positive and finite, got '{s}'")));
    }
    Ok(v)
}

fn parse_dim(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Config(format!("invalid dimension '{s}'")))
}

impl FromStr for ModelSpace {
    type Err = Error;

    /// Parses `euclidean:<n>`, `sphere:<n>[:<R>]`, `torus:<L1>[,<L2>...]`
    /// or `hyperbolic3`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k.trim(), Some(r)),
            None => (s, None),
        };
        let space = match (kind.to_ascii_lowercase().as_str(), rest) {
            ("euclidean", Some(n)) => ModelSpace::Euclidean { n: parse_dim(n)? },
            ("sphere", Some(rest)) => {
                let (n, radius) = match rest.split_once(':') {
                    Some((n, r)) => (parse_dim(n)?, parse_positive(r, "sphere radius")?),
                    None => (parse_dim(rest)?, 1.0),
                };
                ModelSpace::Sphere { n, radius }
            }
            ("torus", Some(list)) => {
                let periods = list
                    .split(',')
                    .map(|l| parse_positive(l, "torus period"))
                    .collect::<Result<Vec<_>>>()?;
                ModelSpace::Torus { periods }
            }
            ("hyperbolic3", None) => ModelSpace::Hyperbolic3,
            ("hyperbolic", Some(n)) if parse_dim(n)? == 3 => ModelSpace::Hyperbolic3,
            _ => return Err(Error::Config(format!("unrecognised space '{s}'"))),
        };
        space.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(space)
    }
}

impl Serialize for ModelSpace {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rho_and_diameter_follow_the_model() {
        let s = ModelSpace::sphere(3, 2.0).unwrap();
        assert_eq!(s.rho(), 0.5);
        assert_eq!(s.diameter(), Some(2.0 * PI));
        assert_eq!(ModelSpace::hyperbolic3().rho(), -2.0);
        assert_eq!(ModelSpace::hyperbolic3().dim(), 3);
        assert!(ModelSpace::euclidean(4).unwrap().diameter().is_none());
        let t = ModelSpace::torus(vec![1.0, 1.0]).unwrap();
        assert_eq!(t.rho(), 0.0);
        assert!((t.diameter().unwrap() - 0.5 * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ModelSpace::euclidean(0).is_err());
        assert!(ModelSpace::sphere(1, 1.0).is_err());
        assert!(ModelSpace::sphere(2, -1.0).is_err());
        assert!(ModelSpace::torus(vec![]).is_err());
        assert!(ModelSpace::torus(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn parse_and_display() {
        for s in ["euclidean:2", "sphere:2:1", "sphere:3:0.25", "torus:1,1", "torus:0.5", "hyperbolic3"] {
            let m: ModelSpace = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("sphere:2".parse::<ModelSpace>().unwrap(), ModelSpace::sphere(2, 1.0).unwrap());
        assert_eq!("hyperbolic:3".parse::<ModelSpace>().unwrap(), ModelSpace::Hyperbolic3);
        for bad in ["", "euclid:2", "sphere:x", "torus:1,,2", "torus:1,-1", "hyperbolic:2", "sphere:2:nan"] {
            assert!(bad.parse::<ModelSpace>().is_err(), "{bad}");
        }
    }

    #[test]
    fn unit_sphere_areas() {
        assert!((unit_sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_sphere_area(4) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn unit_volume_sphere_has_rho_four_pi() {
        let s = ModelSpace::unit_volume_sphere(2).unwrap();
        assert!((s.total_volume().unwrap() - 1.0).abs() < 1e-14);
        assert!((s.rho() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn torus_reduction_is_minimal_image() {
        let t = ModelSpace::torus(vec![1.0, 2.0]).unwrap();
        let v = t.reduce(&[0.75, -2.6]).unwrap();
        assert!((v[0] + 0.25).abs() < 1e-15 && (v[1] + 0.6).abs() < 1e-15);
        assert!((t.distance(&Offset::Displacement(vec![0.9, 0.0])).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn triangle_side_matches_law_of_cosines() {
        let cases = [
            ModelSpace::euclidean(3).unwrap(),
            ModelSpace::sphere(2, 1.5).unwrap(),
            ModelSpace::Hyperbolic3,
        ];
        for s in &cases {
            for &(a, rho, phi) in &[(0.3, 0.7, 0.4), (1.0, 0.2, 2.5), (0.5, 0.5, 1e-3)] {
                let d = s.triangle_side(a, rho, phi);
                let expect = match s {
                    ModelSpace::Sphere { radius: big_r, .. } => {
                        let c = (a / big_r).cos() * (rho / big_r).cos()
                            + (a / big_r).sin() * (rho / big_r).sin() * phi.cos();
                        big_r * c.acos()
                    }
                    ModelSpace::Hyperbolic3 => {
                        (a.cosh() * rho.cosh() - a.sinh() * rho.sinh() * phi.cos()).acosh()
                    }
                    _ => (a * a + rho * rho - 2.0 * a * rho * phi.cos()).sqrt(),
                };
                assert!((d - expect).abs() < 1e-7, "{s}: {d} vs {expect}");
                if let Some(back) = s.triangle_angle(a, rho, d) {
                    assert!((back - phi).abs() < 1e-6, "{s}: {back} vs {phi}");
                }
            }
        }
    }

    #[test]
    fn drift_products_are_continuous_through_the_pole() {
        // f = cos(r) on the unit 2-sphere: c f' = -cos r at every r.
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        for &r in &[0.0, 1e-9, 1e-3, 1.0, PI - 1e-9, PI] {
            let (cf1, _) = s.drift_products(r, -r.sin(), -r.cos(), Some(r.sin()), true).unwrap();
            assert!((cf1 + r.cos()).abs() < 1e-8, "r={r}: {cf1}");
        }
        assert!(matches!(s.drift_products(0.0, 0.0, -1.0, None, false), Err(Error::Pole { .. })));
    }
}
