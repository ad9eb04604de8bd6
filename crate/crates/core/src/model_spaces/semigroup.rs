//! The heat semigroup `P_t g(x) = ∫ p_t(x, y) g(y) dμ(y)` by quadrature.

use std::f64::consts::PI;

use super::{unit_sphere_area, ModelSpace, Offset};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, periodic_trapezoid, Integral, QuadratureSpec};

type Eval<'a> = Box<dyn Fn(&Offset) -> f64 + Sync + 'a>;

/// A bounded, piecewise continuous function on a model space, described
/// relative to a center point.
///
/// On the radial models the function is evaluated at [`Offset::Radial`]
/// distances from the center; on the torus at minimal-image
/// [`Offset::Displacement`]s.
pub struct Observable<'a> {
    eval: Eval<'a>,
    jump: Option<f64>,
    width: Option<f64>,
}

impl<'a> Observable<'a> {
    /// A function of the distance to the center.
    pub fn radial(f: impl Fn(f64) -> f64 + Sync + 'a) -> Self {
        Observable {
            eval: Box::new(move |at: &Offset| match at {
                Offset::Radial(r) => f(*r),
                Offset::Displacement(v) => f(super::norm(v)),
            }),
            jump: None,
            width: None,
        }
    }

    /// A function of the offset from the center.
    pub fn general(f: impl Fn(&Offset) -> f64 + Sync + 'a) -> Self {
        Observable { eval: Box::new(f), jump: None, width: None }
    }

    pub fn constant(c: f64) -> Self {
        Observable::radial(move |_| c)
    }

    /// Indicator of the open ball of radius `radius` about the center.
    pub fn ball_indicator(radius: f64) -> Self {
        Observable::radial(move |r| if r < radius { 1.0 } else { 0.0 }).with_jump(radius)
    }

    /// Declares a discontinuity on the sphere of radius `radius` about the center.
    pub fn with_jump(mut self, radius: f64) -> Self {
        self.jump = Some(radius);
        self
    }

    /// Declares the smallest length scale on which the function varies.
    pub fn with_width(mut self, width: f64) -> Self {
        self.width = Some(width);
        self
    }

    pub fn eval(&self, at: &Offset) -> f64 {
        (self.eval)(at)
    }
}

/// Applies the heat semigroup at time `t` to `g` and evaluates the result at
/// the point `x`, given as an offset from the center of `g`.
pub fn semigroup_apply(space: &ModelSpace, g: &Observable<'_>, x: &Offset, t: f64, q: &QuadratureSpec) -> Result<Integral> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("semigroup time must be positive and finite, got {t}")));
    }
    match space {
        ModelSpace::Torus { periods } => torus_apply(space, periods, g, x, t, q),
        _ => radial_apply(space, g, space.distance(x)?, t, q),
    }
}

fn abs_floor(q: &QuadratureSpec) -> f64 {
    1e-8 * q.tol
}

/// Radius beyond which the kernel mass is below e^-46 relative.
fn kernel_reach(space: &ModelSpace, t: f64) -> f64 {
    let spread = (4.0 * t * 46.0).sqrt() + 2.0 * (space.dim() as f64 * t).sqrt();
    match space {
        ModelSpace::Sphere { radius, .. } => PI * radius,
        ModelSpace::Hyperbolic3 => 2.0 * t + spread,
        _ => spread,
    }
}

fn radial_apply(space: &ModelSpace, g: &Observable<'_>, a: f64, t: f64, q: &QuadratureSpec) -> Result<Integral> {
    let n = space.dim();
    let rho_max = kernel_reach(space, t);
    let kernel_density = |rho: f64| -> f64 {
        match space.kernel(rho, t, q) {
            Ok(k) => k.value * space.surface_density(rho),
            Err(_) => f64::NAN,
        }
    };
    let sigma = (2.0 * t).sqrt();
    let mut breaks = vec![sigma, 2.0 * sigma, 4.0 * sigma];
    if let ModelSpace::Hyperbolic3 = space {
        breaks.push(2.0 * t);
    }

    let scale = space.scale();
    if a <= 1e-14 * scale {
        if let Some(rj) = g.jump {
            breaks.push(rj);
        }
        return integrate(
            |rho| kernel_density(rho) * g.eval(&Offset::Radial(rho)),
            0.0,
            rho_max,
            &breaks,
            abs_floor(q),
            q.tol,
            q.max_subdivisions,
        );
    }

    breaks.push(a);
    if let Some(rj) = g.jump {
        breaks.push((a - rj).abs());
        breaks.push(a + rj);
        if let ModelSpace::Sphere { radius, .. } = space {
            breaks.push(2.0 * PI * radius - a - rj);
        }
    }
    if let Some(w) = g.width {
        for k in [-2.0, -1.0, 1.0, 2.0] {
            breaks.push(a + k * w);
        }
    }
    let inner_tol = 0.1 * q.tol;
    let angular = |rho: f64| -> f64 {
        if n == 1 {
            let d1 = (rho - a).abs();
            return 0.5 * (g.eval(&Offset::Radial(d1)) + g.eval(&Offset::Radial(rho + a)));
        }
        let mut phi_breaks = Vec::new();
        if let Some(rj) = g.jump {
            phi_breaks.extend(space.triangle_angle(a, rho, rj));
        }
        if let Some(w) = g.width {
            let d0 = (rho - a).abs();
            phi_breaks.extend(space.triangle_angle(a, rho, d0 + w));
            phi_breaks.extend(space.triangle_angle(a, rho, d0 + 3.0 * w));
        }
        let norm = unit_sphere_area(n - 2) / unit_sphere_area(n - 1);
        let f = |phi: f64| {
            let d = space.triangle_side(a, rho, phi);
            g.eval(&Offset::Radial(d)) * phi.sin().powi(n as i32 - 2)
        };
        match integrate(f, 0.0, PI, &phi_breaks, abs_floor(q), inner_tol, q.max_subdivisions) {
            Ok(i) => norm * i.value,
            // Rounding noise in the observable can stall the inner rule on
            // tiny values; a tight bound still serves the outer integral,
            // which checks its own convergence.
            Err(Error::QuadratureFailure { estimate, error_bound })
                if estimate.is_finite() && error_bound <= 1e-6 * estimate.abs() =>
            {
                norm * estimate
            }
            Err(_) => f64::NAN,
        }
    };
    integrate(
        |rho| {
            let kd = kernel_density(rho);
            if kd == 0.0 {
                0.0
            } else {
                kd * angular(rho)
            }
        },
        0.0,
        rho_max,
        &breaks,
        abs_floor(q),
        q.tol,
        q.max_subdivisions,
    )
}

fn torus_apply(
    space: &ModelSpace,
    periods: &[f64],
    g: &Observable<'_>,
    x: &Offset,
    t: f64,
    q: &QuadratureSpec,
) -> Result<Integral> {
    let dim = periods.len();
    let xv = match x {
        Offset::Radial(r) => {
            let mut v = vec![0.0; dim];
            v[0] = *r;
            v
        }
        Offset::Displacement(v) => v.clone(),
    };
    let xv = space.reduce(&xv)?;
    let integrand = |w: &[f64]| -> f64 {
        let diff: Vec<f64> = xv.iter().zip(w).map(|(a, b)| a - b).collect();
        match space.kernel_at(&Offset::Displacement(diff), t, q) {
            Ok(k) => k.value * g.eval(&Offset::Displacement(w.to_vec())),
            Err(_) => f64::NAN,
        }
    };
    match g.jump {
        Some(rj) => cell_integral(periods, &integrand, Some(rj), &xv, q),
        None => {
            // Node spacing of one width already leaves an aliasing error
            // near exp(-4π²); the doubling step confirms it.
            let width = g.width.map_or(t.sqrt(), |w| w.min(t.sqrt()));
            let min_points: Vec<usize> = periods.iter().map(|l| (l / width).ceil() as usize).collect();
            let max_nodes = 1 << 24;
            let origin: Vec<f64> = periods.iter().map(|l| -0.5 * l).collect();
            periodic_trapezoid(integrand, &origin, periods, &min_points, max_nodes, q.tol, abs_floor(q))
        }
    }
}

/// Nested adaptive quadrature over the centered cell `∏[-L_i/2, L_i/2]`,
/// with breakpoints on the sphere of radius `jump` about the origin and at
/// the coordinates of `peak`.
pub(crate) fn cell_integral(
    periods: &[f64],
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    jump: Option<f64>,
    peak: &[f64],
    q: &QuadratureSpec,
) -> Result<Integral> {
    let mut prefix = [0.0f64; 3];
    let mut evaluations = 0usize;
    let out = nested(periods, &mut prefix, 0, f, jump, peak, q, &mut evaluations)?;
    Ok(Integral { evaluations, ..out })
}

#[allow(clippy::too_many_arguments)]
fn nested(
    periods: &[f64],
    prefix: &mut [f64; 3],
    k: usize,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    jump: Option<f64>,
    peak: &[f64],
    q: &QuadratureSpec,
    evaluations: &mut usize,
) -> Result<Integral> {
    let dim = periods.len();
    let h = 0.5 * periods[k];
    let mut breaks = vec![peak[k]];
    if let Some(r) = jump {
        let used: f64 = prefix[..k].iter().map(|w| w * w).sum();
        let rem = r * r - used;
        if rem > 0.0 {
            breaks.push(rem.sqrt());
            breaks.push(-rem.sqrt());
        }
    }
    let tol = q.tol * if k + 1 < dim { 1.0 } else { 0.1 };
    let cell = std::cell::RefCell::new((*prefix, 0usize));
    let result = integrate(
        |x| {
            let mut state = cell.borrow_mut();
            state.0[k] = x;
            if k + 1 == dim {
                state.1 += 1;
                f(&state.0[..dim])
            } else {
                let mut p = state.0;
                let mut ev = 0;
                drop(state);
                let v = nested(periods, &mut p, k + 1, f, jump, peak, q, &mut ev).map_or(f64::NAN, |i| i.value);
                cell.borrow_mut().1 += ev;
                v
            }
        },
        -h,
        h,
        &breaks,
        abs_floor(q),
        tol,
        q.max_subdivisions,
    );
    *evaluations += cell.borrow().1;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn mass_is_conserved() {
        let spaces = [
            ModelSpace::euclidean(1).unwrap(),
            ModelSpace::euclidean(3).unwrap(),
            ModelSpace::sphere(2, 1.0).unwrap(),
            ModelSpace::Hyperbolic3,
            ModelSpace::torus(vec![1.0, 1.0]).unwrap(),
        ];
        let one = Observable::constant(1.0);
        for s in &spaces {
            for &t in &[0.05, 1.0] {
                let v = semigroup_apply(s, &one, &Offset::Radial(0.3), t, &q()).unwrap();
                assert!((v.value - 1.0).abs() < 1e-8, "{s} t={t}: {}", v.value);
            }
        }
    }

    #[test]
    fn gaussian_second_moment() {
        let s = ModelSpace::euclidean(1).unwrap();
        let g = Observable::radial(|y| y * y);
        for &t in &[0.1, 1.0, 3.0] {
            let v = semigroup_apply(&s, &g, &Offset::Radial(0.0), t, &q()).unwrap();
            assert!((v.value - 2.0 * t).abs() < 1e-9 * t);
        }
    }

    #[test]
    fn half_sphere_at_equilibrium() {
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        let g = Observable::ball_indicator(PI / 2.0);
        let v = semigroup_apply(&s, &g, &Offset::Radial(0.0), 30.0, &q()).unwrap();
        assert!((v.value - 0.5).abs() < 1e-9);
        let off = semigroup_apply(&s, &g, &Offset::Radial(1.0), 30.0, &q()).unwrap();
        assert!((off.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn displaced_indicator_on_the_line() {
        // P_t 1_{[-1,1]}(a) = (erf((1-a)/2√t) + erf((1+a)/2√t)) / 2
        let s = ModelSpace::euclidean(1).unwrap();
        let g = Observable::ball_indicator(1.0);
        let v = semigroup_apply(&s, &g, &Offset::Radial(0.5), 0.25, &q()).unwrap();
        // erf(0.5) = 0.5204998778130465, erf(1.5) = 0.9661051464753108
        let expect = 0.5 * (0.520_499_877_813_046_5 + 0.966_105_146_475_310_8);
        assert!((v.value - expect).abs() < 1e-9, "{}", v.value);
    }

    #[test]
    fn rejects_nonpositive_time() {
        let s = ModelSpace::euclidean(2).unwrap();
        assert!(semigroup_apply(&s, &Observable::constant(1.0), &Offset::Radial(0.0), 0.0, &q()).is_err());
    }
}
