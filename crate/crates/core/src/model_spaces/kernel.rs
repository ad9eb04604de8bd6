//! Heat kernels of the model spaces with radial and time derivatives.

use std::f64::consts::PI;

use super::{ModelSpace, Offset};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Floor applied to kernel values before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Heat kernel `p_t` at one point together with its derivatives.
///
/// Radial derivatives are taken along the unit-speed geodesic from the base
/// point; on a torus with `n > 1` they are directional derivatives along the
/// displacement. The log-derivative fields are computed directly in log form
/// so they stay accurate where `value` underflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub log_value: f64,
    pub d_r: f64,
    pub d_rr: f64,
    /// Time derivative; equals the Laplacian of the kernel.
    pub d_t: f64,
    /// First radial derivative of `ln p_t`.
    pub log_r: f64,
    /// Second radial derivative of `ln p_t`.
    pub log_rr: f64,
    /// `Γ(ln p_t) = |∇ ln p_t|²`.
    pub grad_log_sq: f64,
    /// `Δp_t / p_t` from spatial derivatives.
    pub laplacian_ratio: f64,
    /// `∂_t p_t / p_t`.
    pub time_ratio: f64,
    /// Estimated absolute error of the log-derivative ratios.
    pub precision: f64,
    /// Set when a small-time approximation replaced the exact series.
    pub approximate: bool,
}

impl KernelEval {
    /// `Δ ln p_t`, by the identity `Δ ln p = Δp/p − Γ(ln p)`.
    pub fn log_laplacian(&self) -> f64 {
        self.laplacian_ratio - self.grad_log_sq
    }

    /// `|∂_t p/p − Δp/p|`.
    pub fn heat_residual(&self) -> f64 {
        (self.time_ratio - self.laplacian_ratio).abs()
    }

    /// Magnitude against which [`heat_residual`](Self::heat_residual) is
    /// measured: the size of the individual terms, floored by the estimated
    /// rounding error.
    pub fn residual_scale(&self) -> f64 {
        self.time_ratio.abs() + self.log_rr.abs() + self.grad_log_sq + self.precision / f64::EPSILON.sqrt()
    }

    pub fn heat_residual_ok(&self, pde_tol: f64) -> bool {
        self.heat_residual() <= pde_tol * self.residual_scale()
    }

    fn from_log_parts(log_value: f64, log_r: f64, log_rr: f64, grad_log_sq: f64, laplacian_ratio: f64, time_ratio: f64) -> Self {
        let value = log_value.exp();
        let terms = log_rr.abs() + log_r * log_r + time_ratio.abs() + laplacian_ratio.abs();
        KernelEval {
            value,
            log_value,
            d_r: value * log_r,
            d_rr: value * (log_rr + log_r * log_r),
            d_t: value * time_ratio,
            log_r,
            log_rr,
            grad_log_sq,
            laplacian_ratio,
            time_ratio,
            precision: 16.0 * f64::EPSILON * terms,
            approximate: false,
        }
    }
}

impl ModelSpace {
    /// Heat kernel at geodesic distance `r` and time `t`.
    ///
    /// On the torus `r` is read as the displacement `(r, 0, ..., 0)`.
    pub fn kernel(&self, r: f64, t: f64, q: &QuadratureSpec) -> Result<KernelEval> {
        self.kernel_at(&Offset::Radial(r), t, q)
    }

    /// Heat kernel at an arbitrary offset from the base point.
    pub fn kernel_at(&self, at: &Offset, t: f64, q: &QuadratureSpec) -> Result<KernelEval> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("kernel time must be positive and finite, got {t}")));
        }
        if let ModelSpace::Torus { periods } = self {
            let v = match at {
                Offset::Radial(r) => {
                    let mut v = vec![0.0; periods.len()];
                    v[0] = *r;
                    v
                }
                Offset::Displacement(v) => v.clone(),
            };
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("kernel displacement must be finite"));
            }
            return torus_kernel(periods, &self.reduce(&v)?, t);
        }
        let r = self.distance(at)?;
        if !r.is_finite() {
            return Err(Error::domain("kernel distance must be finite"));
        }
        match self {
            ModelSpace::Euclidean { n } => Ok(euclidean_kernel(*n, r, t)),
            ModelSpace::Hyperbolic3 => Ok(hyperbolic_kernel(r, t)),
            ModelSpace::Sphere { n, radius } => {
                let diam = PI * radius;
                if r > diam * (1.0 + 1e-12) {
                    return Err(Error::domain(format!("distance {r} exceeds the sphere diameter {diam}")));
                }
                let r = r.min(diam);
                let tau = t / (radius * radius);
                if tau >= q.small_time {
                    return sphere_series(self, *n, *radius, r, t, q);
                }
                // Small times: the series is still exact near the pole but
                // loses digits to cancellation further out.
                let approx = sphere_small_time(self, *n, *radius, r, t);
                if tau * (q.max_terms * q.max_terms) as f64 >= 64.0 {
                    if let Ok(k) = sphere_series(self, *n, *radius, r, t, q) {
                        if k.precision < approx.precision {
                            return Ok(k);
                        }
                    }
                }
                Ok(approx)
            }
            ModelSpace::Torus { .. } => unreachable!(),
        }
    }
}

fn euclidean_kernel(n: usize, r: f64, t: f64) -> KernelEval {
    let nf = n as f64;
    let log_value = -0.5 * nf * (4.0 * PI * t).ln() - r * r / (4.0 * t);
    let log_r = -r / (2.0 * t);
    let log_rr = -1.0 / (2.0 * t);
    let grad = log_r * log_r;
    // (n - 1) log_r / r = -(n - 1) / 2t, free of the pole
    let lap = log_rr + grad - (nf - 1.0) / (2.0 * t);
    let time = -nf / (2.0 * t) + r * r / (4.0 * t * t);
    KernelEval::from_log_parts(log_value, log_r, log_rr, grad, lap, time)
}

/// `ln(r / sinh r)`.
fn log_r_over_sinh(r: f64) -> f64 {
    if r < 1e-4 {
        -r * r / 6.0
    } else {
        r.ln() - r - (-(-2.0 * r).exp()).ln_1p() + std::f64::consts::LN_2
    }
}

fn hyperbolic_kernel(r: f64, t: f64) -> KernelEval {
    let log_value = -1.5 * (4.0 * PI * t).ln() + log_r_over_sinh(r) - t - r * r / (4.0 * t);
    let (a1, a2, a3) = if r < 0.05 {
        let r2 = r * r;
        (
            r * (-1.0 / 3.0 + r2 * (1.0 / 45.0 + r2 * (-2.0 / 945.0 + r2 / 4725.0))),
            -1.0 / 3.0 + r2 * (1.0 / 15.0 + r2 * (-2.0 / 189.0 + r2 / 675.0)),
            r * (2.0 / 15.0 + r2 * (-8.0 / 189.0 + r2 * 6.0 / 675.0)),
        )
    } else {
        let s = r.sinh();
        let csch2 = 1.0 / (s * s);
        let coth = 1.0 / r.tanh();
        (
            1.0 / r - coth,
            -1.0 / (r * r) + csch2,
            2.0 / (r * r * r) - 2.0 * csch2 * coth,
        )
    };
    let log_r = a1 - r / (2.0 * t);
    let log_rr = a2 - 1.0 / (2.0 * t);
    let log_rrr = a3;
    let grad = log_r * log_r;
    let (c_f1, _) = ModelSpace::Hyperbolic3
        .drift_products(r, log_r, log_rr, Some(log_rrr), true)
        .expect("series fallback enabled");
    let lap = log_rr + grad + 2.0 * c_f1;
    let time = -1.5 / t - 1.0 + r * r / (4.0 * t * t);
    KernelEval::from_log_parts(log_value, log_r, log_rr, grad, lap, time)
}

/// Leading term of the small-time expansion on the sphere.
fn sphere_small_time(space: &ModelSpace, n: usize, big_r: f64, r: f64, t: f64) -> KernelEval {
    let nf = n as f64;
    let th = r / big_r;
    let half = 0.5 * (nf - 1.0);
    // h = ((n-1)/2) ln(θ / sin θ) and its r-derivatives
    let (h, h1, h2) = if th < 0.05 {
        let t2 = th * th;
        (
            half * t2 * (1.0 / 6.0 + t2 * (1.0 / 180.0 + t2 / 2835.0)),
            half * th * (1.0 / 3.0 + t2 * (1.0 / 45.0 + t2 * (2.0 / 945.0 + t2 / 4725.0))) / big_r,
            half * (1.0 / 3.0 + t2 * (1.0 / 15.0 + t2 * (2.0 / 189.0 + t2 / 675.0))) / (big_r * big_r),
        )
    } else {
        let s = th.sin().max(f64::MIN_POSITIVE);
        (
            half * (th / s).ln(),
            half * (1.0 / th - th.cos() / s) / big_r,
            half * (-1.0 / (th * th) + 1.0 / (s * s)) / (big_r * big_r),
        )
    };
    let log_value = -0.5 * nf * (4.0 * PI * t).ln() - r * r / (4.0 * t) + h;
    let log_r = -r / (2.0 * t) + h1;
    let log_rr = -1.0 / (2.0 * t) + h2;
    let grad = log_r * log_r;
    let lap = match space.drift_products(r, log_r, log_rr, None, true) {
        Ok((c_f1, _)) => log_rr + grad + (nf - 1.0) * c_f1,
        Err(_) => f64::NAN,
    };
    let time = -nf / (2.0 * t) + r * r / (4.0 * t * t);
    let mut k = KernelEval::from_log_parts(log_value, log_r, log_rr, grad, lap, time);
    k.approximate = true;
    k.precision = (t / (big_r * big_r)) * (1.0 + time.abs());
    k
}

fn sphere_series(space: &ModelSpace, n: usize, big_r: f64, r: f64, t: f64, q: &QuadratureSpec) -> Result<KernelEval> {
    let nf = n as f64;
    let lam = 0.5 * (nf - 1.0);
    let th = r / big_r;
    let (x, s) = (th.cos(), th.sin());
    let vol = super::unit_sphere_area(n) * big_r.powi(n as i32);
    let tau = t / (big_r * big_r);

    // Gegenbauer polynomials C_l^μ(x) for μ = λ, λ + 1, λ + 2.
    let mut c0 = [0.0f64; 3];
    let mut c1 = [0.0f64; 3];
    let mu = [lam, lam + 1.0, lam + 2.0];
    let gegen = |l: usize, m: usize, prev: &[f64; 3], prev2: &[f64; 3]| -> f64 {
        match l {
            0 => 1.0,
            1 => 2.0 * mu[m] * x,
            _ => {
                let lf = l as f64;
                (2.0 * (lf + mu[m] - 1.0) * x * prev[m] - (lf + 2.0 * mu[m] - 2.0) * prev2[m]) / lf
            }
        }
    };
    // Previous values indexed by degree for each μ: we store C_{l-1}, C_{l-2}.
    let (mut s0, mut s1, mut s2, mut st) = (0.0, 0.0, 0.0, 0.0);
    let mut weight_sum = 0.0;
    let mut value_weight = 0.0;
    let mut c_at_one = 1.0; // C_l^λ(1)
    let mut prev_bound = f64::INFINITY;
    let tol = 1e-3 * q.tol;
    // The μ = λ+1 sequence lags by one degree and μ = λ+2 by two.
    let mut deg = [0usize; 3];
    for l in 0..q.max_terms {
        let lf = l as f64;
        let ev = lf * (lf + nf - 1.0);
        let a = (2.0 * lf + nf - 1.0) / (nf - 1.0) * (-ev * tau).exp() / vol;

        let mut current = [0.0; 3];
        for m in 0..3 {
            if l >= m {
                let v = gegen(deg[m], m, &c0, &c1);
                current[m] = v;
                deg[m] += 1;
            }
        }
        for m in 0..3 {
            if l >= m {
                c1[m] = c0[m];
                c0[m] = current[m];
            }
        }
        let g = current[0];
        let g1 = if l >= 1 { 2.0 * lam * current[1] } else { 0.0 };
        let g2 = if l >= 2 { 4.0 * lam * (lam + 1.0) * current[2] } else { 0.0 };
        s0 += a * g;
        s1 += a * g1;
        s2 += a * g2;
        st -= ev / (big_r * big_r) * a * g;

        if l > 0 {
            c_at_one *= (lf + nf - 2.0) / lf;
        }
        let bound = a * c_at_one * (1.0 + ev).powi(2);
        weight_sum += bound;
        value_weight += a * c_at_one;
        let floor = 64.0 * f64::EPSILON * weight_sum;
        if l >= 2 && bound < 0.5 * prev_bound && 2.0 * bound <= tol * s0.abs().max(floor) {
            return Ok(sphere_assemble(space, n, big_r, th, x, s, [s0, s1, s2, st], value_weight, weight_sum));
        }
        prev_bound = bound;
    }
    Err(Error::TruncationFailure {
        terms: q.max_terms,
        achieved: prev_bound / s0.abs().max(f64::MIN_POSITIVE),
        requested: tol,
    })
}

#[allow(clippy::too_many_arguments)]
fn sphere_assemble(
    space: &ModelSpace,
    n: usize,
    big_r: f64,
    th: f64,
    x: f64,
    s: f64,
    sums: [f64; 4],
    value_weight: f64,
    weight_sum: f64,
) -> KernelEval {
    let [s0, s1, s2, st] = sums;
    let nf = n as f64;
    let r = th * big_r;
    let r2 = big_r * big_r;
    // Rounding in the value is set by the plain weights, in the
    // derivatives by the eigenvalue-weighted ones.
    let floor = 64.0 * f64::EPSILON * value_weight;
    if s0 <= floor {
        // Cancellation ate every significant digit (far tail at small t).
        let mut k = KernelEval::from_log_parts(floor.ln(), 0.0, 0.0, 0.0, 0.0, 0.0);
        k.precision = f64::INFINITY;
        return k;
    }
    let log_r = -s * s1 / (big_r * s0);
    let ratio_rr = (s * s * s2 - x * s1) / (r2 * s0);
    let log_rr = ratio_rr - log_r * log_r;
    let grad = log_r * log_r;
    let (c_f1, _) = space
        .drift_products(r, log_r, log_rr, None, true)
        .expect("series fallback enabled");
    let lap = log_rr + grad + (nf - 1.0) * c_f1;
    let time = st / s0;
    let mut k = KernelEval::from_log_parts(s0.ln(), log_r, log_rr, grad, lap, time);
    k.value = s0;
    k.d_r = s0 * log_r;
    k.d_rr = s0 * ratio_rr;
    k.d_t = st;
    k.precision += 16.0 * f64::EPSILON * weight_sum / s0 * (1.0 + 1.0 / r2);
    k
}

/// Per-axis wrapped Gaussian: `(ln q, q'/q, q''/q, precision)`.
fn wrapped_1d(x: f64, l: f64, t: f64) -> (f64, f64, f64, f64) {
    if t / (l * l) >= 0.1 {
        wrapped_fourier(x, l, t)
    } else {
        wrapped_images(x, l, t)
    }
}

/// Fourier form q = (1/L)(1 + 2 Σ e^{-ω²t} cos ωx), ω = 2πk/L.
fn wrapped_fourier(x: f64, l: f64, t: f64) -> (f64, f64, f64, f64) {
    let m = (l * (46.0 / (4.0 * PI * PI * t)).sqrt()).ceil() as usize + 1;
    let (mut q, mut q1, mut q2) = (1.0, 0.0, 0.0);
    for k in 1..=m {
        let w = 2.0 * PI * k as f64 / l;
        let e = (-w * w * t).exp();
        let (sn, cs) = (w * x).sin_cos();
        q += 2.0 * e * cs;
        q1 -= 2.0 * w * e * sn;
        q2 -= 2.0 * w * w * e * cs;
    }
    let scale = 4.0 * PI * PI / (l * l);
    (q.ln() - l.ln(), q1 / q, q2 / q, 8.0 * f64::EPSILON * scale)
}

/// Image sum in log-sum-exp form.
fn wrapped_images(x: f64, l: f64, t: f64) -> (f64, f64, f64, f64) {
    let k = ((4.0 * t * 46.0).sqrt() / l + 0.5).ceil() as i64 + 1;
    let mut m = f64::NEG_INFINITY;
    for j in -k..=k {
        let y = x + j as f64 * l;
        m = m.max(-y * y / (4.0 * t));
    }
    let (mut w_sum, mut w1, mut w2, mut abs1) = (0.0, 0.0, 0.0, 0.0);
    for j in -k..=k {
        let y = x + j as f64 * l;
        let w = (-y * y / (4.0 * t) - m).exp();
        let d1 = -y / (2.0 * t);
        w_sum += w;
        w1 += w * d1;
        w2 += w * (d1 * d1 - 1.0 / (2.0 * t));
        abs1 += w * (d1 * d1 + 1.0 / (2.0 * t));
    }
    let lnq = -0.5 * (4.0 * PI * t).ln() + m + w_sum.ln();
    (lnq, w1 / w_sum, w2 / w_sum, 8.0 * f64::EPSILON * abs1 / w_sum)
}

fn torus_kernel(periods: &[f64], v: &[f64], t: f64) -> Result<KernelEval> {
    let r = super::norm(v);
    let mut dir = vec![0.0; v.len()];
    if r > 0.0 {
        for (d, x) in dir.iter_mut().zip(v) {
            *d = x / r;
        }
    } else {
        dir[0] = 1.0;
    }
    let (mut log_value, mut log_r, mut log_rr, mut grad, mut lap, mut precision) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((x, l), e) in v.iter().zip(periods).zip(&dir) {
        let (lnq, g1, g2, prec) = wrapped_1d(*x, *l, t);
        log_value += lnq;
        log_r += e * g1;
        log_rr += e * e * (g2 - g1 * g1);
        grad += g1 * g1;
        lap += g2;
        precision += prec;
    }
    let mut k = KernelEval::from_log_parts(log_value, log_r, log_rr, grad, lap, lap);
    k.precision += precision;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn euclidean_normalisation_at_origin() {
        let k = ModelSpace::euclidean(2).unwrap().kernel(0.0, 1.0, &q()).unwrap();
        assert!((k.value - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!((k.log_laplacian() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_tends_to_uniform() {
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        for r in [0.0, 1.0, PI] {
            let k = s.kernel(r, 50.0, &q()).unwrap();
            assert!((k.value - 1.0 / (4.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn sphere_series_derivatives_are_consistent() {
        for (n, big_r) in [(2, 1.0), (3, 1.0), (4, 0.7)] {
            let s = ModelSpace::sphere(n, big_r).unwrap();
            for &t in &[0.03, 0.2, 1.0] {
                for &r in &[0.0, 0.3, 1.1, 2.0] {
                    let r = r * big_r;
                    let k = s.kernel(r, t * big_r * big_r, &q()).unwrap();
                    assert!(!k.approximate);
                    assert!(k.heat_residual_ok(1e-8), "n={n} t={t} r={r}: {k:?}");
                    if r > 0.0 {
                        let h = 1e-5 * big_r;
                        let kp = s.kernel(r + h, t * big_r * big_r, &q()).unwrap().value;
                        let km = s.kernel(r - h, t * big_r * big_r, &q()).unwrap().value;
                        let fd = (kp - km) / (2.0 * h);
                        assert!((fd - k.d_r).abs() <= 1e-6 * k.value.max(k.d_r.abs()), "{fd} vs {}", k.d_r);
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_small_time_is_flagged() {
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        // Near the pole the series keeps full precision.
        let near = s.kernel(0.1, 0.001, &q()).unwrap();
        assert!(!near.approximate);
        let e = ModelSpace::euclidean(2).unwrap().kernel(0.1, 0.001, &q()).unwrap();
        assert!((near.value / e.value - 1.0).abs() < 1e-2);
        // In the far tail it cancels to nothing and the approximation takes over.
        let far = s.kernel(1.5, 0.001, &q()).unwrap();
        assert!(far.approximate);
        assert!(far.log_value < -500.0);
    }

    #[test]
    fn sphere_rejects_beyond_diameter() {
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        assert!(s.kernel(3.5, 1.0, &q()).is_err());
        assert!(s.kernel(0.5, 0.0, &q()).is_err());
    }

    #[test]
    fn truncation_failure_reports_tail() {
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        let tight = QuadratureSpec { max_terms: 64, small_time: 0.0, ..q() };
        match s.kernel(0.5, 1e-3, &tight) {
            Err(Error::TruncationFailure { terms, achieved, .. }) => {
                assert_eq!(terms, 64);
                assert!(achieved > 0.0);
            }
            other => panic!("expected truncation failure, got {other:?}"),
        }
    }

    #[test]
    fn hyperbolic_heat_equation_holds() {
        for &t in &[0.01, 0.5, 3.0] {
            for &r in &[0.0, 1e-6, 1e-3, 0.5, 4.0, 15.0] {
                let k = ModelSpace::Hyperbolic3.kernel(r, t, &q()).unwrap();
                assert!(k.heat_residual_ok(1e-10), "t={t} r={r}: {k:?}");
            }
        }
    }

    #[test]
    fn wrapped_forms_agree_at_switch() {
        let l = 1.3;
        let t = 0.1 * l * l;
        for &x in &[0.0, 0.2, 0.65] {
            let four = wrapped_fourier(x, l, t);
            let img = wrapped_images(x, l, t);
            assert!((four.0 - img.0).abs() < 1e-12);
            assert!((four.1 - img.1).abs() < 1e-11);
            assert!((four.2 - img.2).abs() < 1e-10);
        }
    }
}
