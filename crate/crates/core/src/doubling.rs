//! Exponential integrability of the distance function and the resulting
//! volume doubling constant.
//!
//! For `λ > 0` and `f = −d(·, x)` the log-moment
//! `ψ(λ, t) = (1/λ) ln P_t(e^{λf})` decays no faster than
//! `−λ G(1/(λ²t))`, which integrates to `Φ(λ, t) = λ² ∫₀ᵗ G(1/(λ²τ)) dτ`.
//! Choosing `λ = 1/r`, `t = Ar²` bounds the heat mass of a ball from
//! below by a dimensional constant, and chaining that with the parabolic
//! Harnack inequality gives on-diagonal bounds and doubling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::check::{linspace, logspace, probe_offsets, CheckBuilder, CheckReport};
use crate::error::{Error, Result};
use crate::model_spaces::{semigroup_apply, ModelSpace, Observable, Offset};
use crate::quadrature::{integrate, QuadratureSpec};

/// Relative width at which the bisection for `A` stops.
pub const A_REL_WIDTH: f64 = 1e-6;

/// `G(s) = ½(√(1+ns/2) − 1) + (n/8) s ln(1 + 2/(√(1+ns/2) − 1))`.
pub fn g_value(n: usize, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let h = 0.5 * n as f64 * s;
    // √(1+h) − 1 without cancellation
    let w = h / ((1.0 + h).sqrt() + 1.0);
    0.5 * w + 0.25 * h * (2.0 / w).ln_1p()
}

/// `2v G(1/v²)`, the integrand of `I(A)` after `u = v²`, written so that it
/// stays finite at `v = 0` where it tends to `√(2n)`.
fn i_integrand(n: usize, v: f64) -> f64 {
    let half_n = 0.5 * n as f64;
    let a = (v * v + half_n).sqrt();
    let vw = half_n / (a + v);
    if v == 0.0 {
        return vw + a;
    }
    let x = 4.0 * v * (v + a) / n as f64;
    vw + 0.25 * n as f64 * x.ln_1p() / v
}

/// Adaptive quadrature confirmed by a second pass at a hundredfold tighter
/// tolerance.
fn verified<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], q: &QuadratureSpec) -> Result<f64> {
    let coarse = integrate(&f, a, b, breaks, 0.0, q.tol, q.max_subdivisions)?;
    let fine = integrate(&f, a, b, breaks, 0.0, 1e-2 * q.tol, q.max_subdivisions)?;
    if (fine.value - coarse.value).abs() > q.tol * fine.value.abs() {
        return Err(Error::QuadratureFailure { estimate: fine.value, error_bound: (fine.value - coarse.value).abs() });
    }
    Ok(fine.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GProfile {
    pub n: usize,
}

impl GProfile {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        Ok(GProfile { n })
    }

    pub fn eval(&self, s: f64) -> f64 {
        g_value(self.n, s)
    }

    /// `I(A) = ∫_{1/A}^∞ G(t)/t² dt = ∫₀^A G(1/u) du`, integrated in
    /// `v = √u` with a break where `n/(2v²) = 1`.
    pub fn tail_integral(&self, a: f64, q: &QuadratureSpec) -> Result<f64> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("I(A) needs finite A >= 0, got {a}")));
        }
        if a == 0.0 {
            return Ok(0.0);
        }
        let n = self.n;
        verified(|v| i_integrand(n, v), 0.0, a.sqrt(), &[(0.5 * n as f64).sqrt()], q)
    }
}

/// The maximizer over `τ` of [`ine3_rhs`]: `(t/2)(√(1 + n/(2λ²t)) − 1)`.
pub fn tau_opt(n: usize, lambda: f64, t: f64) -> Result<f64> {
    check_lambda_t(lambda, t)?;
    let h = n as f64 / (2.0 * lambda * lambda * t);
    Ok(0.5 * t * h / ((1.0 + h).sqrt() + 1.0))
}

/// Lower bound on `∂ψ/∂t` for a free parameter `τ > 0`:
/// `−(λ/t)(τ + (n/(8λ²)) ln(1 + t/τ))`.
pub fn ine3_rhs(n: usize, lambda: f64, t: f64, tau: f64) -> f64 {
    -(lambda / t) * (tau + n as f64 / (8.0 * lambda * lambda) * (t / tau).ln_1p())
}

fn check_lambda_t(lambda: f64, t: f64) -> Result<()> {
    if !(lambda != 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be nonzero and finite, got {lambda}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

/// `Φ(λ, t) = λ² ∫₀ᵗ G(1/(λ²τ)) dτ`, integrated in `u = √τ`.
pub fn phi_lambda(n: usize, lambda: f64, t: f64, q: &QuadratureSpec) -> Result<f64> {
    check_lambda_t(lambda, t)?;
    let l2 = lambda * lambda;
    let f = |u: f64| {
        if u == 0.0 {
            return 2.0 * lambda.abs() * (0.5 * n as f64).sqrt();
        }
        l2 * 2.0 * u * g_value(n, 1.0 / (l2 * u * u))
    };
    let brk = (0.5 * n as f64).sqrt() / lambda.abs();
    verified(f, 0.0, t.sqrt(), &[brk], q)
}

/// `−ln((1 + e⁻¹)/2)`: the largest `I(A)` for which `e^{−I(A)} − e^{−1}`
/// is still at least `K`.
pub fn integrability_threshold() -> f64 {
    -(0.5 * (1.0 + (-1.0f64).exp())).ln()
}

/// `K = (1 − e⁻¹)/2`.
pub fn ball_mass_constant() -> f64 {
    0.5 * (1.0 - (-1.0f64).exp())
}

/// One step of the constant chain, kept for the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditStep {
    pub name: String,
    pub formula: String,
    pub value: f64,
}

/// Every constant of the doubling argument in dimension `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingConstants {
    pub n: usize,
    /// Time scale: the largest `A` with `I(A) ≤ −ln((1+e⁻¹)/2)`.
    pub a: f64,
    /// `I(A)` at the returned `A`.
    pub i_of_a: f64,
    /// Lower bound on `P_{Ar²}(1_{B(x,r)})(x)`.
    pub k: f64,
    /// Lower bound on `P_{r²}(1_{B(x,r)})(x)`: `K A^{n/2}`.
    pub k_harnack: f64,
    /// Lower bound on `p(x,x,2r²) μ(B(x,r))`: `(K A^{n/2})²`.
    pub k_star: f64,
    /// Upper bound on `p(x,x,r²) μ(B(x,r))`: `2^{n/2} e^{1/4}`.
    pub c_n: f64,
    /// Bound on `p(x,x,2r²)/p(x,x,4r²)`: `2^{n/2}`.
    pub bridge: f64,
    /// `C(n) · bridge`.
    pub c_star: f64,
    /// Doubling constant `C* / K*`.
    pub c_star_star: f64,
    /// `C**(n) / 2ⁿ`, the gap to the sharp constant for nonnegative Ricci curvature.
    pub ratio_to_sharp: f64,
}

impl DoublingConstants {
    /// Derives all constants for dimension `n`; `A` by bisection.
    pub fn derive(n: usize, q: &QuadratureSpec) -> Result<Self> {
        let a = find_a(n, q)?;
        let i_of_a = GProfile::new(n)?.tail_integral(a, q)?;
        let half = 0.5 * n as f64;
        let k = ball_mass_constant();
        let k_harnack = k * a.powf(half);
        let k_star = k_harnack * k_harnack;
        let c_n = 2f64.powf(half) * 0.25f64.exp();
        let bridge = 2f64.powf(half);
        let c_star = c_n * bridge;
        let c_star_star = c_star / k_star;
        Ok(DoublingConstants {
            n,
            a,
            i_of_a,
            k,
            k_harnack,
            k_star,
            c_n,
            bridge,
            c_star,
            c_star_star,
            ratio_to_sharp: c_star_star / 2f64.powi(n as i32),
        })
    }

    /// The chain `K → K A^{n/2} → K* → C(n) → C**(n)` with the step that
    /// produced each constant.
    pub fn audit_trail(&self) -> Vec<AuditStep> {
        let step = |name: &str, formula: &str, value: f64| AuditStep { name: name.into(), formula: formula.into(), value };
        vec![
            step("A", "largest A with I(A) <= -ln((1 + e^-1)/2), bisection", self.a),
            step("K", "(1 - e^-1)/2 <= P_{A r^2}(1_B)(x)", self.k),
            step("K_harnack", "K A^{n/2}: Harnack from time A r^2 to r^2 at d = 0", self.k_harnack),
            step("K_star", "(K A^{n/2})^2: P_{r^2}(1_B)(x)^2 <= p(x,x,2r^2) mu(B)", self.k_star),
            step("C_n", "2^{n/2} e^{1/4}: Harnack from t to 2t with d <= sqrt(t)", self.c_n),
            step("bridge", "2^{n/2}: p(x,x,2r^2) <= 2^{n/2} p(x,x,4r^2)", self.bridge),
            step("C_star", "C_n * bridge", self.c_star),
            step("C_star_star", "C_star / K_star", self.c_star_star),
        ]
    }
}

/// The largest `A ∈ (0, 1)` with `I(A) ≤ −ln((1+e⁻¹)/2)`, by bisection to
/// relative width [`A_REL_WIDTH`].
pub fn find_a(n: usize, q: &QuadratureSpec) -> Result<f64> {
    let g = GProfile::new(n)?;
    let target = integrability_threshold();
    let (mut lo, mut hi) = (0.0, 1.0);
    let f_hi = g.tail_integral(hi, q)? - target;
    if f_hi <= 0.0 {
        return Err(Error::BracketFailure { lo, hi, f_lo: -target, f_hi });
    }
    while lo == 0.0 || hi - lo > A_REL_WIDTH * lo {
        let mid = 0.5 * (lo + hi);
        if g.tail_integral(mid, q)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn constants_table(nmax: usize, q: &QuadratureSpec) -> Result<Vec<DoublingConstants>> {
    (1..=nmax).into_par_iter().map(|n| DoublingConstants::derive(n, q)).collect()
}

/// `ψ(λ, t)` and `P_t f` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Psi {
    pub lambda: f64,
    pub t: f64,
    pub psi: f64,
    pub mean_f: f64,
}

/// `ψ(λ, t)(y) = (1/λ) ln P_t(e^{λf})(y)` with `f = −d(·, x)`, where `at` is
/// the offset of `y` from `x`. Fails if Jensen's inequality
/// `λ(ψ − P_t f) ≥ 0` is violated beyond the quadrature tolerance.
pub fn psi(space: &ModelSpace, lambda: f64, t: f64, at: &Offset, q: &QuadratureSpec) -> Result<Psi> {
    check_lambda_t(lambda, t)?;
    let expo = Observable::radial(move |r| (-lambda * r).exp());
    let dist = Observable::radial(|r| -r);
    let m = semigroup_apply(space, &expo, at, t, q)?;
    let mean_f = semigroup_apply(space, &dist, at, t, q)?.value;
    let psi = m.value.ln() / lambda;
    let gap = lambda * (psi - mean_f);
    let slop = 10.0 * q.tol * (1.0 + lambda.abs() * (psi.abs() + mean_f.abs()));
    if !(gap >= -slop) {
        return Err(Error::QuadratureFailure { estimate: gap, error_bound: slop });
    }
    Ok(Psi { lambda, t, psi, mean_f })
}

fn require_flat_model(space: &ModelSpace) -> Result<()> {
    match space {
        ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. } => Ok(()),
        _ => Err(Error::domain(format!("{space} is not a flat model"))),
    }
}

fn origin(space: &ModelSpace) -> Offset {
    match space {
        ModelSpace::Torus { periods } => Offset::Displacement(vec![0.0; periods.len()]),
        _ => Offset::Radial(0.0),
    }
}

/// Radii for the flat-model sweeps: several decades on Euclidean space, up
/// past the diameter on a torus.
pub fn default_r_grid(space: &ModelSpace) -> Vec<f64> {
    match space {
        ModelSpace::Torus { periods } => {
            let lmin = periods.iter().copied().fold(f64::INFINITY, f64::min);
            let diam = space.diameter().expect("torus is compact");
            logspace(0.02 * lmin, 1.5 * diam, 12)
        }
        _ => logspace(1e-2, 1e2, 9),
    }
}

fn heat_ball_mass(space: &ModelSpace, r: f64, t: f64, q: &QuadratureSpec) -> Result<f64> {
    Ok(semigroup_apply(space, &Observable::ball_indicator(r), &origin(space), t, q)?.value)
}

/// `P_{Ar²}(1_{B(x,r)})(x) ≥ K` over `r_grid`. The spread of the mass over
/// the grid is reported as `mass_spread`; on Euclidean space it vanishes.
pub fn ball_mass_check(space: &ModelSpace, r_grid: &[f64], q: &QuadratureSpec) -> CheckReport {
    let mut b = CheckBuilder::new("ball_mass_lower_bound", &["r"], q.analytic_tol())
        .space(space)
        .param("slack_scale", "K")
        .grid(format!("{} radii in [{:e}, {:e}]", r_grid.len(), r_grid[0], r_grid[r_grid.len() - 1]));
    let mut run = || -> Result<()> {
        require_flat_model(space)?;
        let c = DoublingConstants::derive(space.dim(), q)?;
        b.set_param("A", c.a);
        b.set_param("K", c.k);
        let masses: Vec<f64> = r_grid.par_iter().map(|&r| heat_ball_mass(space, r, c.a * r * r, q)).collect::<Result<_>>()?;
        let (lo, hi) = masses.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        b.set_param("mass_spread", hi - lo);
        for (&r, &m) in r_grid.iter().zip(&masses) {
            b.record(&[r], c.k, m, c.k);
        }
        Ok(())
    };
    match run() {
        Ok(()) => b.finish(),
        Err(e) => b.failed(&e),
    }
}

fn separation(space: &ModelSpace, a: &Offset, b: &Offset) -> Result<f64> {
    match (a, b) {
        (Offset::Displacement(u), Offset::Displacement(v)) => {
            let diff: Vec<f64> = u.iter().zip(v).map(|(x, y)| x - y).collect();
            space.distance(&Offset::Displacement(diff))
        }
        (Offset::Radial(u), Offset::Radial(v)) => Ok((u - v).abs()),
        _ => Err(Error::domain("mixed offset kinds")),
    }
}

/// `p(x,a,s) ≤ p(x,b,t) (t/s)^{n/2} exp(d(a,b)²/(4(t−s)))` in log form, for
/// `a`, `b` on a common geodesic or diagonal through the pole.
pub fn classic_harnack_check(space: &ModelSpace, q: &QuadratureSpec) -> CheckReport {
    let s2 = space.scale().powi(2);
    let mut b = CheckBuilder::new("classic_harnack", &["s", "t", "ra", "rb", "d"], q.analytic_tol())
        .space(space)
        .param("slack_scale", "1 (log form)")
        .grid("s in {0.01, 0.05, 0.2, 1} x scale^2; t/s in {1.001, 1.5, 3, 10}; 8 x 8 probe pairs");
    let n = space.dim() as f64;
    let mut configs = Vec::new();
    for s in [0.01, 0.05, 0.2, 1.0] {
        for ratio in [1.001, 1.5, 3.0, 10.0] {
            configs.push((s * s2, ratio * s * s2));
        }
    }
    let rows: Result<Vec<Vec<_>>> = configs
        .par_iter()
        .map(|&(s, t)| {
            require_flat_model(space)?;
            let reach = space.diameter().unwrap_or(6.0 * t.sqrt());
            let probes = probe_offsets(space, reach, 8);
            let mut out = Vec::new();
            for (ra, a) in &probes {
                let la = space.kernel_at(a, s, q)?.log_value;
                for (rb, bo) in &probes {
                    let d = separation(space, a, bo)?;
                    let rhs = space.kernel_at(bo, t, q)?.log_value + 0.5 * n * (t / s).ln() + d * d / (4.0 * (t - s));
                    out.push(([s, t, *ra, *rb, d], la, rhs));
                }
            }
            Ok(out)
        })
        .collect();
    match rows {
        Ok(rows) => {
            for (c, lhs, rhs) in rows.into_iter().flatten() {
                b.record(&c, lhs, rhs, 1.0);
            }
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

/// Three inequalities per radius, indexed by `kind`:
/// 0: `P_{r²}(1_B)(x)² ≤ p(x,x,2r²) μ(B)`;
/// 1: `p(x,x,2r²) μ(B) ≥ K*`;
/// 2: `p(x,x,r²) μ(B) ≤ C(n)`.
pub fn on_diagonal_bounds_check(space: &ModelSpace, r_grid: &[f64], q: &QuadratureSpec) -> CheckReport {
    let mut b = CheckBuilder::new("on_diagonal_bounds", &["r", "kind"], q.analytic_tol())
        .space(space)
        .param("slack_scale", "the larger side")
        .grid(format!("{} radii x 3 inequalities", r_grid.len()));
    let run = |b: &mut CheckBuilder| -> Result<()> {
        require_flat_model(space)?;
        let c = DoublingConstants::derive(space.dim(), q)?;
        b.set_param("K_star", c.k_star);
        b.set_param("C_n", c.c_n);
        let x = origin(space);
        let rows: Vec<_> = r_grid
            .par_iter()
            .map(|&r| {
                let mass = heat_ball_mass(space, r, r * r, q)?;
                let vol = space.ball_volume(r, q)?;
                let p2 = space.kernel_at(&x, 2.0 * r * r, q)?.value;
                let p1 = space.kernel_at(&x, r * r, q)?.value;
                Ok((r, mass, vol, p1, p2))
            })
            .collect::<Result<_>>()?;
        for (r, mass, vol, p1, p2) in rows {
            let (lhs, rhs) = (mass * mass, p2 * vol);
            b.record(&[r, 0.0], lhs, rhs, rhs);
            b.record(&[r, 1.0], c.k_star, p2 * vol, p2 * vol);
            b.record(&[r, 2.0], p1 * vol, c.c_n, c.c_n);
        }
        Ok(())
    };
    match run(&mut b) {
        Ok(()) => b.finish(),
        Err(e) => b.failed(&e),
    }
}

/// `μ(B(x,2r)) ≤ C**(n) μ(B(x,r))` over `r_grid`. Reports the constant
/// chain and the range of the measured ratio divided by `2ⁿ`.
pub fn doubling_check(space: &ModelSpace, r_grid: &[f64], q: &QuadratureSpec) -> CheckReport {
    let mut b = CheckBuilder::new("volume_doubling", &["r"], q.analytic_tol())
        .space(space)
        .param("slack_scale", "C**(n)")
        .grid(format!("{} radii in [{:e}, {:e}]", r_grid.len(), r_grid[0], r_grid[r_grid.len() - 1]));
    let run = |b: &mut CheckBuilder| -> Result<()> {
        require_flat_model(space)?;
        let c = DoublingConstants::derive(space.dim(), q)?;
        b.set_param("audit_trail", c.audit_trail());
        b.set_param("C_star_star_over_2n", c.ratio_to_sharp);
        let sharp = 2f64.powi(space.dim() as i32);
        let ratios: Vec<(f64, f64)> = r_grid
            .par_iter()
            .map(|&r| Ok((r, space.ball_volume(2.0 * r, q)? / space.ball_volume(r, q)?)))
            .collect::<Result<_>>()?;
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v / sharp), hi.max(v / sharp)));
        b.set_param("ratio_over_2n_min", lo);
        b.set_param("ratio_over_2n_max", hi);
        for (r, ratio) in ratios {
            b.record(&[r], ratio, c.c_star_star, c.c_star_star);
        }
        Ok(())
    };
    match run(&mut b) {
        Ok(()) => b.finish(),
        Err(e) => b.failed(&e),
    }
}

/// `Φ(1/r, Ar²) = I(A)` for every `r`; slack is minus the relative deviation.
pub fn phi_scale_invariance_check(n: usize, radii: &[f64], q: &QuadratureSpec) -> CheckReport {
    let mut b = CheckBuilder::new("phi_scale_invariance", &["r"], 1e-8)
        .param("n", n)
        .param("slack_scale", "I(A), slack = -|Phi(1/r, A r^2) - I(A)|")
        .grid(format!("r in {radii:?}"));
    let run = |b: &mut CheckBuilder| -> Result<()> {
        let a = find_a(n, q)?;
        let i = GProfile::new(n)?.tail_integral(a, q)?;
        b.set_param("A", a);
        b.set_param("I_of_A", i);
        for &r in radii {
            let phi = phi_lambda(n, 1.0 / r, a * r * r, q)?;
            b.record_slack(&[r], phi, i, -(phi - i).abs() / i);
        }
        Ok(())
    };
    match run(&mut b) {
        Ok(()) => b.finish(),
        Err(e) => b.failed(&e),
    }
}

/// The bound on `∂ψ/∂t` is largest at `τ₀`: compares against `τ₀(1 ± δ)`
/// at `samples` random `(n, λ, t)`.
pub fn tau_opt_check(samples: usize, seed: u64) -> CheckReport {
    let mut b = CheckBuilder::new("tau_opt_maximizes", &["n", "lambda", "t", "delta"], 1e-13)
        .param("seed", seed)
        .param("slack_scale", "|rhs(tau0)|")
        .grid(format!("{samples} draws: n in 1..=10, ln lambda in [ln 0.1, ln 10], ln t in [ln 1e-2, ln 1e2]; delta in +-{{1e-2, 1e-1}}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let n = rng.gen_range(1..=10usize);
        let lambda = rng.gen_range(0.1f64.ln()..10f64.ln()).exp();
        let t = rng.gen_range(1e-2f64.ln()..1e2f64.ln()).exp();
        let tau0 = tau_opt(n, lambda, t).expect("valid draw");
        let best = ine3_rhs(n, lambda, t, tau0);
        for delta in [-1e-1, -1e-2, 1e-2, 1e-1] {
            let other = ine3_rhs(n, lambda, t, tau0 * (1.0 + delta));
            b.record(&[n as f64, lambda, t, delta], other, best, best.abs());
        }
    }
    b.finish()
}

/// `0 ≤ λψ(λ,t)(x) + Φ(λ,t)` at the base point, where `f(x) = 0`.
pub fn psi_chain_check(space: &ModelSpace, q: &QuadratureSpec) -> CheckReport {
    let tol = 10.0 * q.tol;
    let mut b = CheckBuilder::new("psi_chain", &["lambda", "t"], tol)
        .space(space)
        .param("slack_scale", "1 + |lambda psi| + Phi")
        .grid("lambda in {0.5, 1, 2, 5}; t in {0.1, 1, 10}");
    let n = space.dim();
    let mut configs = Vec::new();
    for lambda in [0.5, 1.0, 2.0, 5.0] {
        for t in [0.1, 1.0, 10.0] {
            configs.push((lambda, t));
        }
    }
    let rows: Result<Vec<_>> = configs
        .par_iter()
        .map(|&(lambda, t)| {
            require_flat_model(space)?;
            let p = psi(space, lambda, t, &origin(space), q)?;
            let phi = phi_lambda(n, lambda, t, q)?;
            Ok((lambda, t, lambda * p.psi, phi))
        })
        .collect();
    match rows {
        Ok(rows) => {
            for (lambda, t, lpsi, phi) in rows {
                b.record(&[lambda, t], -phi, lpsi, 1.0 + lpsi.abs() + phi);
            }
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

/// `I` strictly increasing in `A` (kind 0) and `A*(n)` strictly decreasing
/// in `n` (kind 1).
pub fn monotone_constants_check(nmax: usize, q: &QuadratureSpec) -> CheckReport {
    let mut b = CheckBuilder::new("monotone_constants", &["n", "a", "kind"], 0.0)
        .param("slack_scale", "1, strict")
        .grid(format!("I on 20 points of [0.01, 1] for n in {{1, {nmax}}}; A*(n) for n in 1..={nmax}"));
    let run = |b: &mut CheckBuilder| -> Result<()> {
        let grid = linspace(0.01, 1.0, 20);
        for n in [1, nmax] {
            let g = GProfile::new(n)?;
            let vals: Vec<f64> = grid.iter().map(|&a| g.tail_integral(a, q)).collect::<Result<_>>()?;
            for k in 1..grid.len() {
                b.record(&[n as f64, grid[k], 0.0], vals[k - 1], vals[k], 1.0);
            }
        }
        let a: Vec<f64> = (1..=nmax).into_par_iter().map(|n| find_a(n, q)).collect::<Result<_>>()?;
        for n in 2..=nmax {
            b.record(&[n as f64, a[n - 1], 1.0], a[n - 1], a[n - 2], a[n - 2]);
        }
        Ok(())
    };
    match run(&mut b) {
        Ok(()) => b.finish_strict(),
        Err(e) => b.failed(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_limits() {
        assert_eq!(g_value(3, 0.0), 0.0);
        assert!(g_value(3, 1e-12) < 1e-9);
        for n in 1..=6 {
            let s: f64 = 1e6;
            let ratio = g_value(n, s) / s.sqrt() / (0.5 * n as f64).sqrt();
            assert!((ratio - 1.0).abs() < 1e-2, "n={n}: {ratio}");
        }
    }

    #[test]
    fn integrand_limit_at_zero() {
        for n in 1..=5 {
            let at0 = i_integrand(n, 0.0);
            assert!((at0 - (2.0 * n as f64).sqrt()).abs() < 1e-14);
            assert!((i_integrand(n, 1e-9) - at0).abs() < 1e-6);
            let v: f64 = 0.3;
            let direct = 2.0 * v * g_value(n, 1.0 / (v * v));
            assert!((i_integrand(n, v) - direct).abs() < 1e-13 * direct);
        }
    }

    #[test]
    fn constants_are_ordered() {
        let q = QuadratureSpec::default();
        let c = DoublingConstants::derive(2, &q).unwrap();
        assert!(c.a > 0.0 && c.a < 1.0);
        assert!(c.k_star < c.k_harnack && c.k_harnack < c.k);
        assert!(c.c_star_star >= 4.0);
        assert_eq!(c.audit_trail().len(), 8);
    }
}
