//! Numerical integration used throughout the engines.
//!
//! Three rules are provided:
//!
//! * [`integrate`]: globally adaptive 21-point Gauss-Kronrod with user
//!   breakpoints, for smooth or piecewise smooth integrands;
//! * [`tanh_sinh`]: double-exponential rule for integrable endpoint
//!   singularities; the integrand receives the distances to both endpoints
//!   so that `(b - x)^(-0.8)`-type factors can be evaluated without
//!   cancellation;
//! * [`periodic_trapezoid`]: tensor trapezoid rule on a periodic cell with
//!   successive doubling, spectrally accurate for smooth periodic integrands.
//!
//! [`QuadratureSpec`] carries the tolerance and truncation policy shared by
//! every module.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances, truncation limits and grid sizes for all numerical work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Relative tolerance for quadratures and series truncation.
    pub tol: f64,
    /// Relative tolerance on the heat-equation residual of kernel evaluations.
    pub pde_tol: f64,
    /// Maximum number of spectral terms for series kernels.
    pub max_terms: usize,
    /// Radial grid size for check sweeps.
    pub r_points: usize,
    /// Time grid size for check sweeps.
    pub t_points: usize,
    /// Maximum number of subintervals for adaptive Gauss-Kronrod.
    pub max_subdivisions: usize,
    /// Global knob scaling both the analytic (1e-8) and the finite-difference
    /// (1e-4) check tolerances.
    pub tolerance_scale: f64,
    /// Below this value of t/R^2 sphere kernels fall back to the
    /// near-Euclidean approximation wherever it beats the rounding error of
    /// the spectral series.
    pub small_time: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            tol: 1e-9,
            pde_tol: 1e-8,
            max_terms: 4096,
            r_points: 200,
            t_points: 20,
            max_subdivisions: 4000,
            tolerance_scale: 1.0,
            small_time: 0.02,
        }
    }
}

impl QuadratureSpec {
    /// Check tolerance for quantities computed from analytic derivatives.
    pub fn analytic_tol(&self) -> f64 {
        1e-8 * self.tolerance_scale
    }

    /// Check tolerance for quantities that go through finite differences.
    pub fn fd_tol(&self) -> f64 {
        1e-4 * self.tolerance_scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::Config(format!("tol must lie in (0, 1e-2], got {}", self.tol)));
        }
        if !(self.pde_tol > 0.0 && self.pde_tol.is_finite()) {
            return Err(Error::Config(format!("pde_tol must be positive, got {}", self.pde_tol)));
        }
        if self.max_terms < 64 {
            return Err(Error::Config(format!("max_terms must be at least 64, got {}", self.max_terms)));
        }
        if self.r_points < 2 || self.t_points < 2 {
            return Err(Error::Config("grid sizes must be at least 2".into()));
        }
        if self.max_subdivisions < 10 {
            return Err(Error::Config("max_subdivisions must be at least 10".into()));
        }
        if !(self.tolerance_scale > 0.0 && self.tolerance_scale.is_finite()) {
            return Err(Error::Config("tolerance_scale must be positive".into()));
        }
        if !(self.small_time >= 0.0 && self.small_time.is_finite()) {
            return Err(Error::Config("small_time must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of a numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = err.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > err {
            err = min_err;
        }
    }
    err
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let error = rescale_error((res_k - res_g) * half, res_abs * half.abs(), res_asc * half.abs());
    Segment { a, b, value, error }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// `breaks` are interior points where the integrand has kinks or jumps;
/// points outside `(a, b)` are ignored. Converges when the summed error
/// estimate is below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F>(f: F, a: f64, b: f64, breaks: &[f64], abs_tol: f64, rel_tol: f64, limit: usize) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&p| p > lo && p < hi).collect();
    points.sort_by(|x, y| x.total_cmp(y));
    points.dedup();
    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(lo);
    edges.extend(points);
    edges.push(hi);

    let mut segments: Vec<Segment> = edges.windows(2).map(|w| kronrod21(&f, w[0], w[1])).collect();
    let mut evaluations = 21 * segments.len();
    let limit = limit.max(segments.len() + 1);
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::QuadratureFailure { estimate: total, error_bound: f64::INFINITY });
        }
        // Relative accuracy below a few hundred ulps is not attainable.
        if err <= abs_tol.max(rel_tol.max(200.0 * f64::EPSILON) * total.abs()) {
            return Ok(Integral { value: sign * total, error: err, evaluations });
        }
        if segments.len() >= limit {
            return Err(Error::QuadratureFailure { estimate: sign * total, error_bound: err });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval exhausted at machine resolution.
            return Err(Error::QuadratureFailure { estimate: sign * total, error_bound: err });
        }
        segments.push(kronrod21(&f, seg.a, mid));
        segments.push(kronrod21(&f, mid, seg.b));
        evaluations += 42;
    }
}

/// Tanh-sinh (double exponential) quadrature over `[a, b]`.
///
/// The integrand is called as `f(x, x - a, b - x)` with both distances
/// computed without cancellation, so that endpoint singularities can be
/// evaluated in terms of the distance.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Integral>
where
    F: Fn(f64, f64, f64) -> f64,
{
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if !(a < b && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("tanh-sinh needs finite a < b, got [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    // Contribution of the symmetric node pair at parameter t >= 0.
    let pair = |t: f64| -> f64 {
        let y = half_pi * t.sinh();
        let cosh_y = y.cosh();
        let w = half_pi * t.cosh() / (cosh_y * cosh_y);
        if w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        // 1 - tanh(y), accurate for large y.
        let comp = 2.0 / (1.0 + (2.0 * y).exp());
        let dist = half * comp;
        if dist <= 0.0 {
            return 0.0;
        }
        let far = 2.0 * half - dist;
        let right = f(b - dist, far, dist);
        let left = if t == 0.0 { 0.0 } else { f(a + dist, dist, far) };
        w * (right + left)
    };
    let t_max = 6.5;
    let mut h = 1.0;
    let mut sum = pair(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        sum += pair(k as f64 * h);
        k += 1;
    }
    let mut evaluations = 2 * k;
    let mut estimate = half * h * sum;
    for _level in 0..12 {
        h *= 0.5;
        let mut added = 0.0;
        let mut j = 1;
        while (j as f64) * h <= t_max {
            added += pair(j as f64 * h);
            j += 2;
        }
        evaluations += j;
        sum += added;
        let next = half * h * sum;
        let diff = (next - estimate).abs();
        estimate = next;
        if !estimate.is_finite() {
            break;
        }
        if diff <= rel_tol * estimate.abs() || diff == 0.0 {
            return Ok(Integral { value: estimate, error: diff, evaluations });
        }
    }
    Err(Error::QuadratureFailure { estimate, error_bound: f64::NAN })
}

/// Tensor trapezoid rule over the periodic cell `origin + [0, L_1) x ... x [0, L_n)`.
///
/// Starts at `min_points[i]` nodes on axis `i` (rounded up to powers of two)
/// and doubles every axis until two successive estimates agree to `rel_tol`
/// (with `abs_tol` as floor), failing once the grid would exceed
/// `max_nodes`. Rows are summed in parallel and combined in a fixed order so
/// results are reproducible.
pub fn periodic_trapezoid<F>(
    f: F,
    origin: &[f64],
    periods: &[f64],
    min_points: &[usize],
    max_nodes: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = periods.len();
    if dim == 0 || dim != origin.len() || dim != min_points.len() {
        return Err(Error::domain("periodic_trapezoid: dimension mismatch"));
    }
    let cell: f64 = periods.iter().product();
    let mut points: Vec<usize> = min_points.iter().map(|m| (*m).max(4).next_power_of_two()).collect();
    let mut previous: Option<f64> = None;
    let mut evaluations = 0usize;
    loop {
        let total_nodes: usize = points.iter().product();
        let inner = total_nodes / points[0];
        let rows: Vec<f64> = (0..points[0])
            .into_par_iter()
            .map(|i0| {
                let mut x = vec![0.0; dim];
                x[0] = origin[0] + periods[0] * i0 as f64 / points[0] as f64;
                let mut acc = 0.0;
                for flat in 0..inner {
                    let mut rem = flat;
                    for ax in (1..dim).rev() {
                        let idx = rem % points[ax];
                        rem /= points[ax];
                        x[ax] = origin[ax] + periods[ax] * idx as f64 / points[ax] as f64;
                    }
                    acc += f(&x);
                }
                acc
            })
            .collect();
        evaluations += total_nodes;
        let value = rows.iter().sum::<f64>() * cell / total_nodes as f64;
        if !value.is_finite() {
            return Err(Error::QuadratureFailure { estimate: value, error_bound: f64::INFINITY });
        }
        if let Some(prev) = previous {
            let diff = (value - prev).abs();
            if diff <= abs_tol.max(rel_tol * value.abs()) {
                return Ok(Integral { value, error: diff, evaluations });
            }
        }
        if total_nodes << dim > max_nodes {
            let error_bound = previous.map_or(f64::INFINITY, |p| (value - p).abs());
            return Err(Error::QuadratureFailure { estimate: value, error_bound });
        }
        previous = Some(value);
        for p in points.iter_mut() {
            *p *= 2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_polynomials_exactly() {
        let r = integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, &[], 1e-14, 1e-14, 100).unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_handle_jumps() {
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let r = integrate(step, 0.0, 1.0, &[0.3], 1e-14, 1e-12, 100).unwrap();
        assert!((r.value - 0.3).abs() < 1e-14);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let r = integrate(|x| x.exp(), 1.0, 0.0, &[], 1e-14, 1e-14, 100).unwrap();
        assert!((r.value + (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn reports_failure_with_estimate() {
        let err = integrate(|x| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, &[], 0.0, 1e-15, 12).unwrap_err();
        assert!(matches!(err, Error::QuadratureFailure { estimate, .. } if estimate > 0.0));
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // int_0^1 u^{-0.8} du = 5, with the singularity evaluated through the distance.
        let r = tanh_sinh(|_, da, _| da.powf(-0.8), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 5.0).abs() < 1e-9, "{}", r.value);
        let r = tanh_sinh(|_, _, db| db.powf(-0.8), 0.0, 2.0, 1e-12).unwrap();
        assert!((r.value - 5.0 * 2f64.powf(0.2)).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn trapezoid_is_spectral_on_periodic_gaussian_sums() {
        // Mean of exp(cos x) over a period is I0(1).
        let r = periodic_trapezoid(|x| x[0].cos().exp(), &[0.0], &[2.0 * std::f64::consts::PI], &[4], 1 << 12, 1e-14, 0.0).unwrap();
        let i0_1 = 1.266_065_877_752_008_4;
        assert!((r.value / (2.0 * std::f64::consts::PI) - i0_1).abs() < 1e-14);
        let r2 = periodic_trapezoid(
            |x| (x[0].cos() + x[1].sin()).exp(),
            &[0.0, 0.0],
            &[2.0 * std::f64::consts::PI; 2],
            &[4, 4],
            1 << 20,
            1e-13,
            0.0,
        )
        .unwrap();
        let expect = (2.0 * std::f64::consts::PI * i0_1).powi(2);
        assert!((r2.value - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn spec_validation() {
        let mut q = QuadratureSpec::default();
        q.validate().unwrap();
        q.tol = 0.5;
        assert!(q.validate().is_err());
        q = QuadratureSpec { max_terms: 10, ..Default::default() };
        assert!(q.validate().is_err());
    }
}
