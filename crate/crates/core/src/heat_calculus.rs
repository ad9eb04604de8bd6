//! Δ, Γ and Γ₂ for functions of the distance to a base point.
//!
//! Γ₂ is evaluated from the bracket `½[ΔΓ(f) − 2Γ(f, Δf)]` written out in
//! polar coordinates: for `f = f(r)` with mean-curvature drift `D = (n−1)c`,
//!
//! ```text
//! Δf        = f'' + D f'
//! ΔΓ(f)     = 2f''² + 2f'f''' + 2D f'f''
//! Γ(f, Δf)  = f'(f''' + D'f' + D f'')
//! ```
//!
//! so no Hessian norm or Ricci term enters explicitly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model_spaces::{ModelSpace, Offset};
use crate::quadrature::QuadratureSpec;

/// Value and radial derivatives of a function at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: Option<f64>,
    pub f4: Option<f64>,
}

impl Jet {
    pub fn order2(f: f64, f1: f64, f2: f64) -> Self {
        Jet { f, f1, f2, f3: None, f4: None }
    }

    pub fn order4(f: f64, f1: f64, f2: f64, f3: f64, f4: f64) -> Self {
        Jet { f, f1, f2, f3: Some(f3), f4: Some(f4) }
    }
}

type JetFn<'a> = Box<dyn Fn(f64) -> Result<Jet> + Sync + 'a>;

/// A smooth function of the distance with analytic derivatives up to `order`.
pub struct RadialFunction<'a> {
    name: String,
    eval: JetFn<'a>,
    order: usize,
    r_min: f64,
    r_max: f64,
    pole_series: bool,
}

impl<'a> RadialFunction<'a> {
    /// `eval` must return derivatives up to `order` (2 or 4; order 3 is
    /// accepted as well) on `[0, r_max]`.
    pub fn new(name: impl Into<String>, order: usize, r_max: f64, eval: impl Fn(f64) -> Result<Jet> + Sync + 'a) -> Self {
        RadialFunction { name: name.into(), eval: Box::new(eval), order, r_min: 0.0, r_max, pole_series: true }
    }

    /// Restricts the domain to `[r_min, r_max]`, for functions that are not
    /// smooth at the base point.
    pub fn with_min_radius(mut self, r_min: f64) -> Self {
        self.r_min = r_min;
        self
    }

    /// Disables the Taylor fallback at poles; evaluation there then fails
    /// with [`Error::Pole`].
    pub fn without_pole_series(mut self) -> Self {
        self.pole_series = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn jet(&self, r: f64) -> Result<Jet> {
        if !(r >= self.r_min - 1e-15 && r <= self.r_max * (1.0 + 1e-12)) {
            return Err(Error::domain(format!(
                "{}: radius {r} outside [{}, {}]",
                self.name, self.r_min, self.r_max
            )));
        }
        (self.eval)(r)
    }

    /// Largest relative disagreement between the declared derivatives and
    /// central differences of the next lower order, at `samples` random
    /// interior radii.
    pub fn consistency(&self, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = self.r_max.min(1e3) - self.r_min;
        let h = 1e-4 * span.max(1e-3);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let r = self.r_min + 2.0 * h + rng.gen::<f64>() * (span - 4.0 * h);
            let (jp, jm, j0) = (self.jet(r + h)?, self.jet(r - h)?, self.jet(r)?);
            let mut pairs = vec![((jp.f - jm.f) / (2.0 * h), j0.f1), ((jp.f1 - jm.f1) / (2.0 * h), j0.f2)];
            if let Some(c) = j0.f3 {
                pairs.push(((jp.f2 - jm.f2) / (2.0 * h), c));
            }
            if let (Some(a), Some(b), Some(c)) = (jp.f3, jm.f3, j0.f4) {
                pairs.push(((a - b) / (2.0 * h), c));
            }
            for (fd, exact) in pairs {
                let scale = 1.0 + exact.abs() + j0.f.abs();
                worst = worst.max((fd - exact).abs() / scale);
            }
        }
        Ok(worst)
    }
}

/// Δf, Γ(f) and Γ₂(f) at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorValues {
    pub laplacian: f64,
    pub gamma: f64,
    pub gamma2: f64,
    /// True when the third derivative came from finite differences.
    pub finite_difference: bool,
}

fn check_radius(space: &ModelSpace, r: f64) -> Result<()> {
    let lim = space.radial_limit();
    if !(r >= 0.0) || r > lim * (1.0 + 1e-12) {
        return Err(Error::domain(format!("radius {r} outside the radial chart [0, {lim}] of {space}")));
    }
    Ok(())
}

fn drift_factor(space: &ModelSpace) -> f64 {
    space.dim() as f64 - 1.0
}

/// Radial Laplacian `f'' + (n−1)c(r) f'`.
pub fn laplacian_radial(space: &ModelSpace, f: &RadialFunction<'_>, r: f64) -> Result<f64> {
    check_radius(space, r)?;
    if f.order < 2 {
        return Err(Error::InsufficientDerivatives { needed: 2, available: f.order });
    }
    let j = f.jet(r)?;
    let (c_f1, _) = space.drift_products(r, j.f1, j.f2, j.f3, f.pole_series)?;
    Ok(j.f2 + drift_factor(space) * c_f1)
}

/// `Γ(f) = f'²`.
pub fn gamma(space: &ModelSpace, f: &RadialFunction<'_>, r: f64) -> Result<f64> {
    check_radius(space, r)?;
    if f.order < 1 {
        return Err(Error::InsufficientDerivatives { needed: 1, available: f.order });
    }
    let j = f.jet(r)?;
    Ok(j.f1 * j.f1)
}

/// Third derivative by central differences of `f''`, reflecting through the
/// poles where the stencil leaves the chart.
fn third_derivative_fd(space: &ModelSpace, f: &RadialFunction<'_>, r: f64) -> Result<f64> {
    let h = (1e-3 * space.scale()).max(1e-4).min(0.25 * (f.r_max - f.r_min));
    let lim = space.radial_limit();
    let reflect = |x: f64| -> f64 {
        let mut x = x;
        if x < 0.0 {
            x = -x;
        }
        if let ModelSpace::Sphere { .. } = space {
            if x > lim {
                x = 2.0 * lim - x;
            }
        }
        x
    };
    let (mut a, mut b) = (reflect(r + h), reflect(r - h));
    // One-sided stencil when the domain excludes the pole.
    if a > f.r_max || b < f.r_min || (r + h > lim && !matches!(space, ModelSpace::Sphere { .. })) {
        if r - 2.0 * h >= f.r_min {
            a = r;
            b = r - 2.0 * h;
        } else {
            a = r + 2.0 * h;
            b = r;
        }
        return Ok((f.jet(a)?.f2 - f.jet(b)?.f2) / (a - b));
    }
    let (fa, fb) = (f.jet(a)?.f2, f.jet(b)?.f2);
    // f'' is even through both poles, so the reflected values stand in for
    // the ones outside the chart.
    Ok((fa - fb) / (2.0 * h))
}

/// Δf, Γ(f) and Γ₂(f) through the bracket form.
pub fn operators(space: &ModelSpace, f: &RadialFunction<'_>, r: f64) -> Result<OperatorValues> {
    check_radius(space, r)?;
    if f.order < 2 {
        return Err(Error::InsufficientDerivatives { needed: 2, available: f.order });
    }
    let j = f.jet(r)?;
    let (f3, finite_difference) = match j.f3 {
        Some(v) => (v, false),
        None => (third_derivative_fd(space, f, r)?, true),
    };
    let dn = drift_factor(space);
    let (c_f1, dc_f1sq) = space.drift_products(r, j.f1, j.f2, Some(f3), f.pole_series)?;
    let d_f1 = dn * c_f1;
    let dp_f1sq = dn * dc_f1sq;
    let laplacian = j.f2 + d_f1;
    let gamma = j.f1 * j.f1;
    let lap_gamma = 2.0 * j.f2 * j.f2 + 2.0 * j.f1 * f3 + 2.0 * d_f1 * j.f2;
    let gamma_f_lap = j.f1 * f3 + dp_f1sq + d_f1 * j.f2;
    let gamma2 = 0.5 * lap_gamma - gamma_f_lap;
    Ok(OperatorValues { laplacian, gamma, gamma2, finite_difference })
}

/// Γ₂(f) through the bracket form.
pub fn gamma2(space: &ModelSpace, f: &RadialFunction<'_>, r: f64) -> Result<f64> {
    Ok(operators(space, f, r)?.gamma2)
}

/// `Γ(ln p_t)`, `Δ ln p_t` and `Δp_t/p_t` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogKernelOps {
    pub gamma: f64,
    pub log_laplacian: f64,
    pub laplacian_ratio: f64,
    /// Estimated absolute error inherited from the kernel evaluation.
    pub precision: f64,
}

pub fn log_kernel_ops(space: &ModelSpace, t: f64, r: f64, q: &QuadratureSpec) -> Result<LogKernelOps> {
    log_kernel_ops_at(space, &Offset::Radial(r), t, q)
}

pub fn log_kernel_ops_at(space: &ModelSpace, at: &Offset, t: f64, q: &QuadratureSpec) -> Result<LogKernelOps> {
    let k = space.kernel_at(at, t, q)?;
    Ok(LogKernelOps {
        gamma: k.grad_log_sq,
        log_laplacian: k.laplacian_ratio - k.grad_log_sq,
        laplacian_ratio: k.laplacian_ratio,
        precision: k.precision,
    })
}

/// The fixed suite of test functions used by curvature-dimension checks.
pub mod suite {
    use super::*;

    pub fn constant(c: f64, r_max: f64) -> RadialFunction<'static> {
        RadialFunction::new("constant", 4, r_max, move |_| Ok(Jet::order4(c, 0.0, 0.0, 0.0, 0.0)))
    }

    pub fn r_squared(r_max: f64) -> RadialFunction<'static> {
        RadialFunction::new("r2", 4, r_max, |r| Ok(Jet::order4(r * r, 2.0 * r, 2.0, 0.0, 0.0)))
    }

    pub fn half_r_squared(r_max: f64) -> RadialFunction<'static> {
        RadialFunction::new("half_r2", 4, r_max, |r| Ok(Jet::order4(0.5 * r * r, r, 1.0, 0.0, 0.0)))
    }

    /// The distance itself; affine along a line, smooth only away from the
    /// base point.
    pub fn distance(r_min: f64, r_max: f64) -> RadialFunction<'static> {
        RadialFunction::new("distance", 4, r_max, |r| Ok(Jet::order4(r, 1.0, 0.0, 0.0, 0.0))).with_min_radius(r_min)
    }

    /// `cos(r/s)`; on the sphere of radius `s` this is a first eigenfunction.
    pub fn cosine(s: f64, r_max: f64) -> RadialFunction<'static> {
        RadialFunction::new("cos", 4, r_max, move |r| {
            let (sn, cs) = (r / s).sin_cos();
            Ok(Jet::order4(cs, -sn / s, -cs / (s * s), sn / (s * s * s), cs / (s * s * s * s)))
        })
    }

    /// Gaussian bump `exp(−r²/2σ²)`.
    pub fn bump(sigma: f64, r_max: f64) -> RadialFunction<'static> {
        RadialFunction::new("bump", 4, r_max, move |r| {
            let s2 = sigma * sigma;
            let u = r / s2;
            let e = (-0.5 * r * r / s2).exp();
            Ok(Jet::order4(
                e,
                -u * e,
                (u * u - 1.0 / s2) * e,
                (3.0 * u / s2 - u * u * u) * e,
                (u.powi(4) - 6.0 * u * u / s2 + 3.0 / (s2 * s2)) * e,
            ))
        })
    }

    /// `ln p_t` as a function of the distance; third derivative by finite
    /// differences.
    pub fn log_kernel<'a>(space: &'a ModelSpace, t: f64, q: &'a QuadratureSpec) -> RadialFunction<'a> {
        let r_max = space.radial_limit().min(10.0 * t.sqrt().max(space.scale()));
        RadialFunction::new(format!("log_kernel(t={t})"), 2, r_max, move |r| {
            let k = space.kernel(r, t, q)?;
            Ok(Jet::order2(k.log_value, k.log_r, k.log_rr))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn laplacian_examples() {
        let e3 = ModelSpace::euclidean(3).unwrap();
        let f = suite::r_squared(10.0);
        for r in [0.0, 0.5, 3.0] {
            assert!((laplacian_radial(&e3, &f, r).unwrap() - 6.0).abs() < 1e-14);
        }
        let s2 = ModelSpace::sphere(2, 1.0).unwrap();
        let c = suite::cosine(1.0, PI);
        for th in [0.0, 0.7, 2.0, PI] {
            let lap = laplacian_radial(&s2, &c, th).unwrap();
            assert!((lap + 2.0 * th.cos()).abs() < 1e-12, "θ={th}: {lap}");
        }
        let h = ModelSpace::Hyperbolic3;
        let d = suite::distance(0.1, 10.0);
        assert!((laplacian_radial(&h, &d, 1.0).unwrap() - 2.0 / 1f64.tanh()).abs() < 1e-14);
    }

    #[test]
    fn pole_without_series_is_an_error() {
        let e2 = ModelSpace::euclidean(2).unwrap();
        let f = suite::r_squared(1.0).without_pole_series();
        assert!(matches!(laplacian_radial(&e2, &f, 0.0), Err(Error::Pole { .. })));
        assert!(laplacian_radial(&e2, &f, 0.5).is_ok());
    }

    #[test]
    fn gamma2_needs_two_derivatives() {
        let e2 = ModelSpace::euclidean(2).unwrap();
        let f = RadialFunction::new("lipschitz", 1, 1.0, |r| Ok(Jet::order2(r, 1.0, f64::NAN)));
        assert!(matches!(gamma2(&e2, &f, 0.5), Err(Error::InsufficientDerivatives { needed: 2, available: 1 })));
    }

    #[test]
    fn half_r2_is_tight_in_flat_space() {
        let e2 = ModelSpace::euclidean(2).unwrap();
        let f = suite::half_r_squared(5.0);
        for r in [0.0, 0.3, 4.0] {
            let o = operators(&e2, &f, r).unwrap();
            assert!((o.gamma2 - 2.0).abs() < 1e-14);
            assert!((o.laplacian.powi(2) / 2.0 - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn fd_third_derivative_matches_analytic() {
        let s = ModelSpace::sphere(3, 1.0).unwrap();
        let exact = suite::bump(0.6, PI);
        let fd = RadialFunction::new("bump2", 2, PI, |r| {
            let j = suite::bump(0.6, PI).jet(r)?;
            Ok(Jet::order2(j.f, j.f1, j.f2))
        });
        for r in [0.0, 1e-9, 0.4, 2.0, PI - 1e-9, PI] {
            let a = operators(&s, &exact, r).unwrap();
            let b = operators(&s, &fd, r).unwrap();
            assert!(b.finite_difference && !a.finite_difference);
            assert!((a.gamma2 - b.gamma2).abs() < 1e-8, "r={r}: {} vs {}", a.gamma2, b.gamma2);
        }
    }

    #[test]
    fn log_kernel_ops_identity_is_exact() {
        let q = QuadratureSpec::default();
        let e2 = ModelSpace::euclidean(2).unwrap();
        let o = log_kernel_ops(&e2, 1.0, 2.0, &q).unwrap();
        assert!((o.gamma - 1.0).abs() < 1e-15);
        assert!((o.log_laplacian + 1.0).abs() < 1e-15);
        assert!((o.laplacian_ratio - o.gamma - o.log_laplacian).abs() < 1e-15);
    }

    #[test]
    fn suite_jets_are_consistent() {
        for f in [suite::r_squared(3.0), suite::cosine(0.7, 3.0), suite::bump(0.5, 3.0), suite::distance(0.1, 3.0)] {
            let c = f.consistency(5, 7).unwrap();
            assert!(c < 1e-6, "{}: {c}", f.name());
        }
    }
}
