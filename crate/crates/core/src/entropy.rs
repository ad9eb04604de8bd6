//! Pointwise and integrated heat-kernel entropies.
//!
//! `W_t = tΓ(ln p_t) − 2tΔp_t/p_t − ln p_t − (n/2) ln t` and its `p_t`
//! average `𝒲_t`, the bound `n + (n/2) ln 4π` for nonnegative curvature,
//! the monotonicity of `P_t(p_{T−t} W_{T−t})` and its limit as `t → T`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::check::{linspace, logspace, probe_offsets, CheckBuilder, CheckReport};
use crate::error::{Error, Result};
use crate::model_spaces::{semigroup_apply, KernelEval, ModelSpace, Observable, Offset};
use crate::quadrature::QuadratureSpec;

/// `n + (n/2) ln 4π`, the Euclidean value of `W_t`.
pub fn euclidean_entropy(n: usize) -> f64 {
    let n = n as f64;
    n + 0.5 * n * (4.0 * PI).ln()
}

/// `W_t` from one kernel evaluation.
pub fn entropy_value(k: &KernelEval, t: f64, n: usize) -> f64 {
    t * k.grad_log_sq - 2.0 * t * k.laplacian_ratio - k.log_value - 0.5 * n as f64 * t.ln()
}

/// `W_t` along a set of probe points, and `𝒲_t` on compact models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyField {
    pub t: f64,
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    /// Largest kernel precision estimate among the points, scaled by `t`.
    pub precision: f64,
    pub w_integral: Option<f64>,
}

pub fn entropy_pointwise(space: &ModelSpace, t: f64, r_points: usize, q: &QuadratureSpec) -> Result<EntropyField> {
    let n = space.dim();
    let reach = space.diameter().unwrap_or(10.0 * t.sqrt());
    let probes = probe_offsets(space, reach, r_points);
    let mut field = EntropyField { t, r: Vec::new(), w: Vec::new(), precision: 0.0, w_integral: None };
    for (r, x) in &probes {
        let k = space.kernel_at(x, t, q)?;
        field.r.push(*r);
        field.w.push(entropy_value(&k, t, n));
        field.precision = field.precision.max(3.0 * t * k.precision);
    }
    if space.is_compact() {
        field.w_integral = Some(perelman_entropy_at(space, t, q)?);
    }
    Ok(field)
}

fn require_flat(space: &ModelSpace) -> Result<()> {
    if space.rho() != 0.0 {
        return Err(Error::domain(format!("{space} does not have zero curvature bound")));
    }
    Ok(())
}

fn require_torus(space: &ModelSpace) -> Result<()> {
    match space {
        ModelSpace::Torus { .. } => Ok(()),
        _ => Err(Error::domain(format!("{space} is not a torus"))),
    }
}

/// On Euclidean space `W_t` equals `n + (n/2) ln 4π` at every point.
pub fn entropy_constancy_check(space: &ModelSpace, r_points: usize, t_points: usize, q: &QuadratureSpec) -> CheckReport {
    let tol = q.analytic_tol();
    let mut b = CheckBuilder::new("entropy_constancy", &["t", "r"], tol)
        .space(space)
        .param("slack_scale", "1, slack = -|W - (n + n/2 ln 4pi)|")
        .grid(format!("t log [1e-2, 10] x {t_points}; r uniform [0, 10 sqrt(t)] x {r_points}"));
    let n = match space {
        ModelSpace::Euclidean { n } => *n,
        _ => return b.failed(&Error::domain(format!("{space} is not Euclidean"))),
    };
    let target = euclidean_entropy(n);
    b.set_param("target", target);
    for t in logspace(1e-2, 10.0, t_points) {
        for r in linspace(0.0, 10.0 * t.sqrt(), r_points) {
            match space.kernel(r, t, q) {
                Ok(k) => {
                    let w = entropy_value(&k, t, n);
                    b.record_slack(&[t, r], w, target, -(w - target).abs());
                }
                Err(e) => return b.failed(&e),
            }
        }
    }
    b.finish()
}

/// `W_t ≤ n + (n/2) ln 4π` on a zero-curvature model.
pub fn ni_bound_check(space: &ModelSpace, t_grid: &[f64], r_points: usize, q: &QuadratureSpec) -> CheckReport {
    let tol = 1e-6 * q.tolerance_scale;
    let b = CheckBuilder::new("ni_bound", &["t", "r"], tol).space(space);
    if let Err(e) = require_flat(space) {
        return b.failed(&e);
    }
    let n = space.dim();
    let bound = euclidean_entropy(n);
    let mut b = b.param("bound", bound).param("slack_scale", 1.0).grid(format!(
        "t log [{:e}, {:e}] x {}; {r_points} probes up to the diameter or 10 sqrt(t)",
        t_grid.first().copied().unwrap_or(0.0),
        t_grid.last().copied().unwrap_or(0.0),
        t_grid.len()
    ));
    let fields: Result<Vec<Vec<(f64, f64, f64, f64)>>> = t_grid
        .par_iter()
        .map(|&t| {
            let reach = space.diameter().unwrap_or(10.0 * t.sqrt());
            probe_offsets(space, reach, r_points)
                .iter()
                .map(|(r, x)| {
                    let k = space.kernel_at(x, t, q)?;
                    Ok((t, *r, entropy_value(&k, t, n), 3.0 * t * k.precision))
                })
                .collect()
        })
        .collect();
    match fields {
        Ok(rows) => {
            for (t, r, w, prec) in rows.into_iter().flatten() {
                if prec > 0.1 * tol {
                    b.exclude();
                } else {
                    b.record(&[t, r], w, bound, 1.0);
                }
            }
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

/// `𝒲_t = t∫p_t Γ(ln p_t) dμ − ∫p_t ln p_t dμ − (n/2) ln t`.
pub fn perelman_entropy_at(space: &ModelSpace, t: f64, q: &QuadratureSpec) -> Result<f64> {
    if !space.is_compact() {
        return Err(Error::domain(format!("{space} is not compact")));
    }
    let n = space.dim() as f64;
    let g = Observable::general(move |w| match space.kernel_at(w, t, q) {
        Ok(k) => t * k.grad_log_sq - k.log_value,
        Err(_) => f64::NAN,
    })
    .with_width(t.sqrt());
    let v = semigroup_apply(space, &g, &Offset::Radial(0.0), t, q)?;
    Ok(v.value - 0.5 * n * t.ln())
}

pub fn perelman_entropy(space: &ModelSpace, t_grid: &[f64], q: &QuadratureSpec) -> Result<Vec<f64>> {
    require_flat(space)?;
    t_grid.par_iter().map(|&t| perelman_entropy_at(space, t, q)).collect()
}

/// `𝒲_t ≤ n + (n/2) ln 4π` at every grid time.
pub fn perelman_bound_check(space: &ModelSpace, t_grid: &[f64], q: &QuadratureSpec) -> CheckReport {
    let tol = 1e-6 * q.tolerance_scale;
    let bound = euclidean_entropy(space.dim());
    let mut b = CheckBuilder::new("perelman_bound", &["t"], tol)
        .space(space)
        .param("bound", bound)
        .param("slack_scale", 1.0)
        .grid(format!("{} log-spaced times", t_grid.len()));
    match perelman_entropy(space, t_grid, q) {
        Ok(values) => {
            for (t, w) in t_grid.iter().zip(values) {
                b.record(&[*t], w, bound, 1.0);
            }
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

/// `𝒲` is nonincreasing: centered differences `𝒲(t_{k+1}) − 𝒲(t_{k−1})`
/// stay below `1e-5 |𝒲(t_k)| + 1e-7`. Slack is measured in units of that
/// allowance, so the tolerance is one allowance.
pub fn perelman_monotonicity_check(space: &ModelSpace, t_grid: &[f64], q: &QuadratureSpec) -> CheckReport {
    let mut b = CheckBuilder::new("perelman_monotonicity", &["t"], 1.0)
        .space(space)
        .param("slack_scale", "1e-5 |W(t_k)| + 1e-7")
        .grid(format!("centered differences on {} log-spaced times", t_grid.len()));
    match perelman_entropy(space, t_grid, q) {
        Ok(v) => {
            b.set_param("values", &v);
            for k in 1..v.len().saturating_sub(1) {
                let allowance = 1e-5 * v[k].abs() + 1e-7;
                b.record(&[t_grid[k]], v[k + 1] - v[k - 1], 0.0, allowance);
            }
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

/// Observable `w ↦ p_τ(w) W_τ(w)` about the pole.
fn weighted_entropy<'a>(space: &'a ModelSpace, tau: f64, q: &'a QuadratureSpec) -> Observable<'a> {
    let n = space.dim();
    Observable::general(move |w| match space.kernel_at(w, tau, q) {
        Ok(k) => k.value * entropy_value(&k, tau, n),
        Err(_) => f64::NAN,
    })
    .with_width(tau.sqrt())
}

/// `P_t(p_{T−t} W_{T−t})(x)` with `x` at `r_base` from the pole, and
/// `p_T(x)`, `W_T(x)`.
pub fn propagated_entropy(space: &ModelSpace, horizon: f64, t: f64, r_base: f64, q: &QuadratureSpec) -> Result<(f64, f64, f64)> {
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::domain(format!("need 0 <= t < T, got t = {t}, T = {horizon}")));
    }
    let x = Offset::Radial(r_base);
    let kt = space.kernel_at(&x, horizon, q)?;
    let wt = entropy_value(&kt, horizon, space.dim());
    let lhs = if t == 0.0 {
        kt.value * wt
    } else {
        semigroup_apply(space, &weighted_entropy(space, horizon - t, q), &x, t, q)?.value
    };
    Ok((lhs, kt.value, wt))
}

/// `p_T W_T ≤ P_t(p_{T−t} W_{T−t})` at the given times.
pub fn monotonicity_prop_check(space: &ModelSpace, horizon: f64, t_grid: &[f64], r_base: f64, q: &QuadratureSpec) -> CheckReport {
    let tol = 1e-6 * q.tolerance_scale;
    let b = CheckBuilder::new("entropy_monotonicity", &["T", "t", "r_base"], tol)
        .space(space)
        .param("slack_scale", "p_T (1 + |W_T|)")
        .grid(format!("T = {horizon}, t in {t_grid:?}, r_base = {r_base}"));
    if let Err(e) = require_flat(space).and_then(|_| require_torus(space)) {
        return b.failed(&e);
    }
    let mut b = b;
    let rows: Result<Vec<_>> = t_grid.par_iter().map(|&t| Ok((t, propagated_entropy(space, horizon, t, r_base, q)?))).collect();
    match rows {
        Ok(rows) => {
            for (t, (lhs, pt, wt)) in rows {
                b.record(&[horizon, t, r_base], pt * wt, lhs, pt * (1.0 + wt.abs()));
            }
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

/// Richardson extrapolation of `values[k]` sampled at `h_k = h_0 / 2^k`
/// assuming an expansion in integer powers of `h`. Returns the table's
/// last diagonal.
pub fn richardson(values: &[f64]) -> Vec<f64> {
    let mut table = values.to_vec();
    let mut diag = vec![values.last().copied().unwrap_or(f64::NAN)];
    for j in 1..values.len() {
        let f = 2f64.powi(j as i32);
        for i in (j..values.len()).rev() {
            table[i] = (f * table[i] - table[i - 1]) / (f - 1.0);
        }
        diag.push(table[values.len() - 1]);
    }
    diag
}

/// The limit of `P_t(p_{T−t} W_{T−t})/p_T` as `t → T`, extrapolated from
/// `T − t = τ_0 2^{−k}` with `τ_0 = min(T/4, (L_min/2)²/64)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub gaps: Vec<f64>,
    pub sequence: Vec<f64>,
    pub limit: f64,
    pub spread: f64,
    pub monotone: bool,
}

pub fn limit_sequence(space: &ModelSpace, horizon: f64, r_base: f64, levels: usize, q: &QuadratureSpec) -> Result<LimitEstimate> {
    require_torus(space)?;
    // Start where the images of the pole weigh less than e^-16, so the
    // sequence sits in its asymptotic regime.
    let half = 0.5 * space.scale();
    let tau0 = (0.25 * horizon).min(half * half / 64.0);
    let gaps: Vec<f64> = (0..levels).map(|k| tau0 / 2f64.powi(k as i32)).collect();
    let sequence: Vec<f64> = gaps
        .par_iter()
        .map(|&tau| {
            let (lhs, pt, _) = propagated_entropy(space, horizon, horizon - tau, r_base, q)?;
            Ok(lhs / pt)
        })
        .collect::<Result<_>>()?;
    let diag = richardson(&sequence);
    let limit = diag[diag.len() - 1];
    let spread = if diag.len() > 1 { (diag[diag.len() - 1] - diag[diag.len() - 2]).abs() } else { f64::INFINITY };
    let slack = 1e-9 * (1.0 + limit.abs());
    let monotone = sequence.windows(2).all(|w| w[1] >= w[0] - slack) || sequence.windows(2).all(|w| w[1] <= w[0] + slack);
    if !(spread <= 1e-4 * (1.0 + limit.abs())) {
        return Err(Error::ExtrapolationUnstable { sequence });
    }
    Ok(LimitEstimate { gaps, sequence, limit, spread, monotone })
}

/// Extrapolated limit within `1e-3` of `n + (n/2) ln 4π`.
pub fn limit_lemma_check(space: &ModelSpace, horizon: f64, r_base: f64, q: &QuadratureSpec) -> CheckReport {
    let tol = 1e-3;
    let target = euclidean_entropy(space.dim());
    let mut b = CheckBuilder::new("entropy_limit", &["T"], tol)
        .space(space)
        .param("target", target)
        .param("r_base", r_base)
        .param("slack_scale", "1, slack = -|limit - target|")
        .grid(format!("T - t = min(T/4, (L_min/2)^2/64) * 2^-k, k = 0..6, T = {horizon}"));
    match limit_sequence(space, horizon, r_base, 7, q) {
        Ok(est) => {
            b.set_param("sequence", &est.sequence);
            b.set_param("monotone", est.monotone);
            b.set_param("spread", est.spread);
            b.record_slack(&[horizon], est.limit, target, -(est.limit - target).abs());
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_value() {
        assert!((euclidean_entropy(2) - 4.531024246969290).abs() < 1e-14);
    }

    #[test]
    fn richardson_removes_linear_and_quadratic_terms() {
        let f = |h: f64| 3.0 + 2.0 * h - 5.0 * h * h;
        let vals: Vec<f64> = (0..4).map(|k| f(0.5 / 2f64.powi(k))).collect();
        let d = richardson(&vals);
        assert!((d[3] - 3.0).abs() < 1e-13);
        assert!((d[2] - 3.0).abs() < 1e-13);
        assert!((d[0] - 3.0).abs() > 1e-3);
    }

    #[test]
    fn requirements_are_enforced() {
        let q = QuadratureSpec::default();
        let s = ModelSpace::sphere(2, 1.0).unwrap();
        assert!(perelman_entropy(&s, &[0.1], &q).is_err());
        assert_eq!(ni_bound_check(&s, &[0.1], 5, &q).verdict, crate::Verdict::Fail);
        assert!(limit_sequence(&ModelSpace::euclidean(1).unwrap(), 1.0, 0.0, 3, &q).is_err());
    }
}
