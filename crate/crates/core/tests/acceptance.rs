//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use heatbound::doubling::{self, DoublingConstants, GProfile};
use heatbound::liyau::{self, Normalization, ProfileFamily};
use heatbound::run::{self, Format, RunConfig, Suite};
use heatbound::{entropy, identities};
use heatbound::{CheckReport, ModelSpace, QuadratureSpec, Verdict};

/// Collects the reasons a criterion failed.
#[derive(Default)]
struct Findings(Vec<String>);

impl Findings {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    /// The check passed and its worst slack is at least `floor`.
    fn check(&mut self, r: &CheckReport, floor: f64) {
        let space = r.params.get("space").and_then(|v| v.as_str()).unwrap_or("-");
        self.require(r.verdict == Verdict::Pass && r.min_slack >= floor, || {
            format!("{} on {space}: {:?} with min_slack {:e} (floor {floor:e})", r.name, r.verdict, r.min_slack)
        });
    }
}

fn space(s: &str) -> ModelSpace {
    s.parse().expect("valid model")
}

fn slack_column(r: &CheckReport) -> impl Iterator<Item = f64> + '_ {
    r.trace.rows.iter().map(|row| *row.last().expect("slack column"))
}

fn euclidean_equality(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    let q = QuadratureSpec { r_points: 200, t_points: 20, ..q.clone() };
    for n in 1..=3 {
        let s = ModelSpace::euclidean(n).unwrap();
        let li = liyau::family_liyau_check(&s, ProfileFamily::Power(1.0), &liyau::default_time_grid(&s, &q), q.r_points, &q, None);
        let worst = slack_column(&li).fold(0.0f64, |m, v| m.max(v.abs()));
        f.require(li.trace.rows.len() == 4000, || format!("n = {n}: Li-Yau grid has {} points", li.trace.rows.len()));
        f.require(li.verdict == Verdict::Pass && worst <= 1e-8, || format!("n = {n}: Li-Yau |residual| {worst:e}"));
        let w = entropy::entropy_constancy_check(&s, 200, 20, &q);
        let worst = slack_column(&w).fold(0.0f64, |m, v| m.max(v.abs()));
        f.require(w.trace.rows.len() == 4000, || format!("n = {n}: entropy grid has {} points", w.trace.rows.len()));
        f.require(w.verdict == Verdict::Pass && worst <= 1e-8, || format!("n = {n}: entropy |residual| {worst:e}"));
    }
    f
}

fn flat_torus(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    for name in ["torus:1", "torus:1,1"] {
        let s = space(name);
        let s2 = s.scale().powi(2);
        let grid = heatbound::check::logspace(0.01 * s2, 10.0 * s2, q.t_points);
        for alpha in [0.75, 1.0, 2.0] {
            let r = liyau::family_liyau_check(&s, ProfileFamily::Power(alpha), &liyau::default_time_grid(&s, q), q.r_points, q, None);
            f.check(&r, -1e-5);
        }
        f.check(&entropy::ni_bound_check(&s, &grid, q.r_points, q), -1e-5);
        f.check(&entropy::perelman_bound_check(&s, &grid, q), -1e-5);
        f.check(&entropy::perelman_monotonicity_check(&s, &grid, q), -1e-5);
        for horizon in [0.2, 0.5, 1.0] {
            let big_t = horizon * s2;
            let ts: Vec<f64> = [0.0, 0.2, 0.5, 0.8].iter().map(|x| x * big_t).collect();
            f.check(&entropy::monotonicity_prop_check(&s, big_t, &ts, 0.0, q), -1e-5);
        }
        f.check(&doubling::classic_harnack_check(&s, q), -1e-5);
    }
    f
}

fn round_sphere(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    let s = space("sphere:2:1");
    for r in [
        liyau::bakry_qian_check(&s, q),
        liyau::positive_rho_harnack_check(&s, q),
        liyau::kernel_two_sided_bounds_check(&s, Normalization::MeasureRescaled, q),
        liyau::kernel_two_sided_bounds_check(&s, Normalization::MetricRescaled, q),
        liyau::curvature_bound_check(2),
        liyau::volume_bound_check(&s),
    ] {
        f.check(&r, -1e-4);
    }
    f
}

fn negative_control(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    let s = ModelSpace::Hyperbolic3;
    let forced = liyau::family_liyau_expected_fail(&s, ProfileFamily::Power(1.0), 0.0, (1e-3, 10.0), (1e-3, 20.0), q);
    f.require(forced.verdict == Verdict::ExpectedFailConfirmed && forced.min_slack < -1e-3, || {
        format!("forced rho = 0: {:?} with min_slack {:e}", forced.verdict, forced.min_slack)
    });
    f.require(s.rho() == -2.0, || format!("hyperbolic rho is {}", s.rho()));
    for alpha in [0.75, 1.0, 2.0] {
        let r = liyau::family_liyau_check(&s, ProfileFamily::Power(alpha), &liyau::default_time_grid(&s, q), q.r_points, q, None);
        f.check(&r, -r.tolerance);
    }
    f
}

/// Illinois false position on `I(A) = θ`, sharing nothing with the bisection.
fn illinois_root(n: usize, theta: f64, q: &QuadratureSpec) -> f64 {
    let g = GProfile::new(n).unwrap();
    let h = |a: f64| g.tail_integral(a, q).unwrap() - theta;
    let (mut a, mut b) = (1e-4, 1.0);
    let (mut fa, mut fb) = (h(a), h(b));
    assert!(fa < 0.0 && fb > 0.0, "bracket");
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = h(c);
        if fc == 0.0 || (b - a).abs() < 1e-14 * c {
            return c;
        }
        if (fc < 0.0) == (fa < 0.0) {
            (a, fa) = (c, fc);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            (b, fb) = (c, fc);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

fn constants_pipeline(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    let theta = -((1.0 + (-1f64).exp()) / 2.0).ln();
    let lib_theta = doubling::integrability_threshold();
    f.require((lib_theta - theta).abs() <= 1e-15, || format!("threshold {lib_theta} vs {theta}"));
    f.require((theta - 0.37989f64).abs() <= 5e-6, || format!("threshold {theta} is not 0.37989 to five figures"));
    for n in 1..=3 {
        f.check(&doubling::phi_scale_invariance_check(n, &[1e-3, 1e-2, 1.0, 1e2, 1e3], q), -1e-8);
        let c = DoublingConstants::derive(n, q).unwrap();
        f.require((c.i_of_a - theta).abs() <= 1e-6, || format!("n = {n}: I(A) - threshold = {:e}", c.i_of_a - theta));
        let other = illinois_root(n, theta, q);
        f.require((c.a - other).abs() <= 1e-6 * other, || format!("n = {n}: bisection {} vs false position {other}", c.a));
    }
    for name in ["euclidean:1", "euclidean:2", "euclidean:3", "torus:1", "torus:1,1"] {
        let s = space(name);
        let r = doubling::ball_mass_check(&s, &doubling::default_r_grid(&s), q);
        f.check(&r, -r.tolerance);
        if let ModelSpace::Euclidean { .. } = s {
            let spread = r.params["mass_spread"].as_f64().unwrap_or(f64::INFINITY);
            f.require(spread <= 1e-8, || format!("{name}: ball mass varies by {spread:e} over r"));
        }
    }
    f
}

fn doubling_end_to_end(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    for name in ["euclidean:1", "euclidean:2", "euclidean:3", "torus:1", "torus:1,2"] {
        let s = space(name);
        let r = doubling::doubling_check(&s, &doubling::default_r_grid(&s), q);
        f.check(&r, -r.tolerance);
        let trail: Vec<&str> = r.params["audit_trail"]
            .as_array()
            .map(|steps| steps.iter().filter_map(|s| s["name"].as_str()).collect())
            .unwrap_or_default();
        for step in ["K", "K_harnack", "K_star", "C_n", "C_star_star"] {
            f.require(trail.contains(&step), || format!("{name}: audit trail lacks {step}"));
        }
        if let ModelSpace::Euclidean { .. } = s {
            let lo = r.params["ratio_over_2n_min"].as_f64().unwrap();
            let hi = r.params["ratio_over_2n_max"].as_f64().unwrap();
            f.require((lo - 1.0).abs() <= 1e-10 && (hi - 1.0).abs() <= 1e-10, || format!("{name}: ratio / 2^n in [{lo}, {hi}]"));
        }
    }
    f
}

fn identity_suite(q: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    for name in ["torus:1", "torus:1,1", "torus:1,2"] {
        let s = space(name);
        let s2 = s.scale().powi(2);
        let x = heatbound::check::probe_offsets(&s, 0.4 * s.scale(), 2).pop().unwrap().1;
        let r = liyau::bakry_ledoux_identity_check(&s, 0.5 * s2, 0.3 * s2, &x, q);
        f.check(&r, -10.0 * q.tol);
    }
    for name in ["torus:1", "torus:1,2", "sphere:2:1", "sphere:3:2", "sphere:5:1"] {
        let s = space(name);
        f.check(&identities::semigroup_property_check(&s, q), f64::NEG_INFINITY);
        f.check(&identities::mass_check(&s, q), f64::NEG_INFINITY);
    }
    f
}

fn determinism(_: &QuadratureSpec) -> Findings {
    let mut f = Findings::default();
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        spaces: ["euclidean:2", "torus:1", "sphere:2:1", "hyperbolic3"].map(space).to_vec(),
        suites: Suite::ALL.to_vec(),
        quadrature: QuadratureSpec { r_points: 24, t_points: 6, ..QuadratureSpec::default() },
        output: dir.path().to_path_buf(),
        formats: vec![Format::Json],
        ..Default::default()
    };
    let once = || -> Vec<u8> {
        let report = run::run(&config).unwrap();
        run::emit(&report, &config.output, &config.formats).unwrap();
        std::fs::read(dir.path().join("report.json")).unwrap()
    };
    let (a, b) = (once(), once());
    f.require(!a.is_empty() && a == b, || format!("reports differ ({} vs {} bytes)", a.len(), b.len()));
    f
}

type Criterion = (&'static str, Duration, fn(&QuadratureSpec) -> Findings);

fn main() -> ExitCode {
    let q = QuadratureSpec::default();
    let criteria: [Criterion; 8] = [
        ("Euclidean Li-Yau equality and entropy constancy", Duration::from_secs(5), euclidean_equality),
        ("zero-curvature suite on tori", Duration::from_secs(120), flat_torus),
        ("positive-curvature suite on the unit sphere", Duration::from_secs(120), round_sphere),
        ("hyperbolic negative control", Duration::from_secs(60), negative_control),
        ("constants pipeline", Duration::from_secs(30), constants_pipeline),
        ("volume doubling end to end", Duration::from_secs(30), doubling_end_to_end),
        ("identity suite", Duration::MAX, identity_suite),
        ("byte-identical reports", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (i, (title, limit, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut findings = run(&q);
        let elapsed = start.elapsed();
        findings.require(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"));
        let verdict = if findings.0.is_empty() { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {}: {title} ({elapsed:.2?})", i + 1);
        for why in &findings.0 {
            println!("    {why}");
        }
        failed += usize::from(!findings.0.is_empty());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
