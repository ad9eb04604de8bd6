//! Run configuration, suite orchestration and report emission.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::check::{linspace, logspace, probe_offsets, CheckBuilder, CheckReport, Verdict};
use crate::doubling::{self, DoublingConstants};
use crate::entropy;
use crate::error::{Error, Result};
use crate::heat_calculus::suite as functions;
use crate::identities;
use crate::liyau::{self, Normalization, ProfileFamily};
use crate::model_spaces::ModelSpace;
use crate::quadrature::QuadratureSpec;

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Cd,
    Liyau,
    Entropy,
    Doubling,
    Constants,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Cd, Suite::Liyau, Suite::Entropy, Suite::Doubling, Suite::Constants];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Cd => "cd",
            Suite::Liyau => "liyau",
            Suite::Entropy => "entropy",
            Suite::Doubling => "doubling",
            Suite::Constants => "constants",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}; expected one of cd, liyau, entropy, doubling, constants")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown format {other:?}; expected json or csv"))),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("heatbound-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json]
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spaces: Vec<ModelSpace>,
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Seed for randomly drawn spot points.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spaces: Vec::new(),
            suites: Vec::new(),
            quadrature: QuadratureSpec::default(),
            output: default_output(),
            formats: default_formats(),
            seed: DEFAULT_SEED,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        if self.suites.is_empty() {
            return Err(Error::Config("no suite selected".into()));
        }
        if self.spaces.is_empty() {
            return Err(Error::Config("no space selected".into()));
        }
        for s in &self.spaces {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub expected_fail_confirmed: usize,
    pub inconclusive: usize,
}

impl Summary {
    pub fn tally(checks: &[CheckReport]) -> Self {
        let mut s = Summary::default();
        for c in checks {
            match c.verdict {
                Verdict::Pass => s.pass += 1,
                Verdict::Fail => s.fail += 1,
                Verdict::ExpectedFailConfirmed => s.expected_fail_confirmed += 1,
                Verdict::Inconclusive => s.inconclusive += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
}

/// Everything a run produced. The wall time is kept out of the JSON so that
/// identical configurations give identical documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: Meta,
    pub checks: Vec<CheckReport>,
    pub summary: Summary,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// 0 when nothing failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail > 0 {
            1
        } else {
            0
        }
    }
}

/// One entry of the check catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub suite: Suite,
    pub name: &'static str,
    pub applies_to: &'static str,
}

/// Every check the suites can emit.
pub fn catalog() -> Vec<CatalogEntry> {
    let e = |suite, name, applies_to| CatalogEntry { suite, name, applies_to };
    vec![
        e(Suite::Cd, "cd", "all models; test functions r^2, cos, bump, distance, ln p_t"),
        e(Suite::Cd, "semigroup_property", "all models"),
        e(Suite::Cd, "mass_conservation", "all models"),
        e(Suite::Cd, "heat_equation_residual", "all models"),
        e(Suite::Cd, "kernel_fd_cross_check", "all models"),
        e(Suite::Cd, "log_chain_identity", "models with a radial kernel"),
        e(Suite::Cd, "euclidean_log_laplacian", "euclidean"),
        e(Suite::Liyau, "family_liyau", "all models; power 0.75, 1, 2 and exponential 1 profiles"),
        e(Suite::Liyau, "family_liyau_expected_fail", "negatively curved models, curvature forced to 0"),
        e(Suite::Liyau, "alpha_optimality", "flat models"),
        e(Suite::Liyau, "profile_consistency", "all models"),
        e(Suite::Liyau, "bakry_qian", "sphere"),
        e(Suite::Liyau, "positive_rho_harnack", "sphere"),
        e(Suite::Liyau, "kernel_two_sided_bounds", "sphere, both unit-volume normalizations"),
        e(Suite::Liyau, "kernel_lower_bound_two_time", "sphere"),
        e(Suite::Liyau, "unit_volume_curvature_bound", "sphere"),
        e(Suite::Liyau, "volume_bound", "sphere"),
        e(Suite::Liyau, "phi_nonnegative", "compact models"),
        e(Suite::Liyau, "bakry_ledoux_identity", "compact models"),
        e(Suite::Entropy, "entropy_constancy", "euclidean"),
        e(Suite::Entropy, "ni_bound", "torus"),
        e(Suite::Entropy, "perelman_bound", "torus"),
        e(Suite::Entropy, "perelman_monotonicity", "torus"),
        e(Suite::Entropy, "entropy_monotonicity", "torus, three horizons"),
        e(Suite::Entropy, "entropy_limit", "torus"),
        e(Suite::Doubling, "ball_mass_lower_bound", "euclidean, torus"),
        e(Suite::Doubling, "classic_harnack", "euclidean, torus"),
        e(Suite::Doubling, "on_diagonal_bounds", "euclidean, torus"),
        e(Suite::Doubling, "volume_doubling", "euclidean, torus"),
        e(Suite::Doubling, "psi_chain", "euclidean"),
        e(Suite::Doubling, "phi_scale_invariance", "euclidean, torus"),
        e(Suite::Constants, "constants_table", "dimensions 1..=8, independent of the spaces"),
        e(Suite::Constants, "monotone_constants", "dimensions 1..=10"),
        e(Suite::Constants, "tau_opt_maximizes", "seeded random draws"),
    ]
}

type Task<'a> = Box<dyn Fn() -> CheckReport + Send + Sync + 'a>;

fn flat(space: &ModelSpace) -> bool {
    matches!(space, ModelSpace::Euclidean { .. } | ModelSpace::Torus { .. })
}

fn cd_tasks<'a>(space: &'a ModelSpace, q: &'a QuadratureSpec) -> Vec<Task<'a>> {
    let s = space.scale();
    let r_max = space.radial_limit().min(3.0 * s);
    // Stay clear of the antipode and the cut locus, where the test
    // functions are not smooth functions on the manifold.
    let hi = 0.98 * r_max;
    let grid = linspace(0.0, hi, q.r_points);
    let mut out: Vec<Task<'a>> = vec![
        Box::new(move || liyau::cd_check(space, &functions::r_squared(r_max), &linspace(0.0, hi, q.r_points), q)),
        Box::new(move || liyau::cd_check(space, &functions::cosine(s, r_max), &linspace(0.0, hi, q.r_points), q)),
        Box::new(move || liyau::cd_check(space, &functions::bump(0.5 * s, r_max), &linspace(0.0, hi, q.r_points), q)),
        Box::new(move || {
            let r_min = 0.05 * s;
            liyau::cd_check(space, &functions::distance(r_min, r_max), &linspace(r_min, hi, q.r_points), q)
        }),
    ];
    if space.is_radial() {
        out.push(Box::new(move || liyau::cd_check(space, &functions::log_kernel(space, 0.3 * s * s, q), &grid, q)));
    }
    out.push(Box::new(move || identities::semigroup_property_check(space, q)));
    out.push(Box::new(move || identities::mass_check(space, q)));
    out.push(Box::new(move || identities::heat_equation_check(space, q)));
    out.push(Box::new(move || identities::kernel_fd_check(space, q)));
    out.push(Box::new(move || identities::log_chain_identity_check(space, q)));
    if let ModelSpace::Euclidean { .. } = space {
        out.push(Box::new(move || identities::euclidean_log_laplacian_check(space, q.r_points, q.t_points, q)));
    }
    out
}

const ALPHAS: [f64; 6] = [0.6, 0.75, 1.0, 1.5, 2.0, 3.0];

fn liyau_tasks<'a>(space: &'a ModelSpace, q: &'a QuadratureSpec) -> Vec<Task<'a>> {
    let families = [ProfileFamily::Power(0.75), ProfileFamily::Power(1.0), ProfileFamily::Power(2.0), ProfileFamily::Exponential(1.0)];
    let mut out: Vec<Task<'a>> = families
        .into_iter()
        .map(|fam| -> Task<'a> {
            Box::new(move || liyau::family_liyau_check(space, fam, &liyau::default_time_grid(space, q), q.r_points, q, None))
        })
        .collect();
    let n = space.dim();
    let rho = space.rho();
    if rho < 0.0 {
        out.push(Box::new(move || {
            liyau::family_liyau_expected_fail(space, ProfileFamily::Power(1.0), 0.0, (1e-3, 10.0), (1e-3, 20.0), q)
        }));
    }
    if flat(space) {
        out.push(Box::new(move || liyau::alpha_optimality_check(n, 1.0, &ALPHAS)));
    }
    out.push(Box::new(move || liyau::profile_consistency_check(&ALPHAS, &[0.1, 1.0, 10.0], rho, n)));
    if let ModelSpace::Sphere { .. } = space {
        out.push(Box::new(move || liyau::bakry_qian_check(space, q)));
        out.push(Box::new(move || liyau::positive_rho_harnack_check(space, q)));
        out.push(Box::new(move || liyau::kernel_two_sided_bounds_check(space, Normalization::MeasureRescaled, q)));
        out.push(Box::new(move || liyau::kernel_two_sided_bounds_check(space, Normalization::MetricRescaled, q)));
        out.push(Box::new(move || liyau::two_time_lower_bound_check(space, q)));
        out.push(Box::new(move || liyau::curvature_bound_check(n)));
        out.push(Box::new(move || liyau::volume_bound_check(space)));
    }
    if space.is_compact() {
        let s2 = space.scale().powi(2);
        out.push(Box::new(move || liyau::phi_check(space, s2, q)));
        out.push(Box::new(move || {
            let x = probe_offsets(space, 0.4 * space.scale(), 2).pop().expect("two probes").1;
            liyau::bakry_ledoux_identity_check(space, 0.5 * s2, 0.3 * s2, &x, q)
        }));
    }
    out
}

fn entropy_tasks<'a>(space: &'a ModelSpace, q: &'a QuadratureSpec) -> Vec<Task<'a>> {
    let s2 = space.scale().powi(2);
    match space {
        ModelSpace::Euclidean { .. } => vec![Box::new(move || entropy::entropy_constancy_check(space, q.r_points, q.t_points, q))],
        ModelSpace::Torus { .. } => {
            let grid = move || -> Vec<f64> { logspace(0.01 * s2, 10.0 * s2, q.t_points) };
            let mut out: Vec<Task<'a>> = vec![
                Box::new(move || entropy::ni_bound_check(space, &grid(), q.r_points, q)),
                Box::new(move || entropy::perelman_bound_check(space, &grid(), q)),
                Box::new(move || entropy::perelman_monotonicity_check(space, &grid(), q)),
            ];
            for horizon in [0.2, 0.5, 1.0] {
                let big_t = horizon * s2;
                out.push(Box::new(move || {
                    let ts: Vec<f64> = [0.0, 0.2, 0.5, 0.8].iter().map(|f| f * big_t).collect();
                    entropy::monotonicity_prop_check(space, big_t, &ts, 0.0, q)
                }));
            }
            out.push(Box::new(move || entropy::limit_lemma_check(space, 0.5 * s2, 0.0, q)));
            out
        }
        _ => Vec::new(),
    }
}

fn doubling_tasks<'a>(space: &'a ModelSpace, q: &'a QuadratureSpec) -> Vec<Task<'a>> {
    if !flat(space) {
        return Vec::new();
    }
    let mut out: Vec<Task<'a>> = vec![
        Box::new(move || doubling::ball_mass_check(space, &doubling::default_r_grid(space), q)),
        Box::new(move || doubling::classic_harnack_check(space, q)),
        Box::new(move || doubling::on_diagonal_bounds_check(space, &doubling::default_r_grid(space), q)),
        Box::new(move || doubling::doubling_check(space, &doubling::default_r_grid(space), q)),
        Box::new(move || doubling::phi_scale_invariance_check(space.dim(), &[1e-2, 1.0, 1e2], q)),
    ];
    if let ModelSpace::Euclidean { .. } = space {
        out.push(Box::new(move || doubling::psi_chain_check(space, q)));
    }
    out
}

/// Dimensions covered by the constants table.
pub const TABLE_NMAX: usize = 8;

/// The constants for `n = 1..=nmax` as a check: each row must satisfy
/// `I(A) = −ln((1+e⁻¹)/2)` to `1e-6`.
pub fn constants_table_check(nmax: usize, q: &QuadratureSpec) -> CheckReport {
    let theta = doubling::integrability_threshold();
    let mut b = CheckBuilder::new("constants_table", &["n", "A", "K", "K_star", "C_n", "C_star_star", "C_star_star_over_2n"], 1e-6)
        .param("threshold", theta)
        .param("slack_scale", "1, slack = -|I(A) - threshold|")
        .grid(format!("n in 1..={nmax}"));
    match doubling::constants_table(nmax, q) {
        Ok(rows) => {
            for c in &rows {
                b.record_slack(&[c.n as f64, c.a, c.k, c.k_star, c.c_n, c.c_star_star, c.ratio_to_sharp], c.i_of_a, theta, -(c.i_of_a - theta).abs());
            }
            b.set_param("table", &rows);
            b.finish()
        }
        Err(e) => b.failed(&e),
    }
}

fn constants_tasks<'a>(q: &'a QuadratureSpec, seed: u64) -> Vec<Task<'a>> {
    vec![
        Box::new(move || constants_table_check(TABLE_NMAX, q)),
        Box::new(move || doubling::monotone_constants_check(10, q)),
        Box::new(move || doubling::tau_opt_check(20, seed)),
    ]
}

/// The checks a configuration selects, in report order.
fn tasks<'a>(config: &'a RunConfig) -> Vec<Task<'a>> {
    let q = &config.quadrature;
    let mut suites = config.suites.clone();
    suites.sort();
    suites.dedup();
    let mut out = Vec::new();
    for space in &config.spaces {
        for suite in &suites {
            out.extend(match suite {
                Suite::Cd => cd_tasks(space, q),
                Suite::Liyau => liyau_tasks(space, q),
                Suite::Entropy => entropy_tasks(space, q),
                Suite::Doubling => doubling_tasks(space, q),
                Suite::Constants => Vec::new(),
            });
        }
    }
    if suites.contains(&Suite::Constants) {
        out.extend(constants_tasks(q, config.seed));
    }
    out
}

/// Runs every selected check. Check failures are recorded in the report;
/// only an invalid configuration is an error.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let checks: Vec<CheckReport> = tasks(config).par_iter().map(|t| t()).collect();
    let summary = Summary::tally(&checks);
    let mut versions = BTreeMap::new();
    versions.insert("heatbound".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("report_schema".to_string(), "1".to_string());
    Ok(RunReport { meta: Meta { config: config.clone(), versions }, checks, summary, wall_time: start.elapsed() })
}

fn file_stem(index: usize, check: &CheckReport) -> String {
    let space = check.params.get("space").and_then(|v| v.as_str()).unwrap_or("global");
    let raw = format!("{index:03}_{}_{space}", check.name);
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Writes `report.json` and one CSV per check under `dir`; returns the
/// paths written.
pub fn emit(report: &RunReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&Format::Json) {
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()?)?;
        written.push(path);
    }
    if formats.contains(&Format::Csv) {
        let csv_dir = dir.join("csv");
        std::fs::create_dir_all(&csv_dir)?;
        for (i, c) in report.checks.iter().enumerate() {
            let path = csv_dir.join(format!("{}.csv", file_stem(i, c)));
            std::fs::write(&path, c.trace.to_csv())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// The constants table as fixed-width text.
pub fn format_constants(rows: &[DoublingConstants]) -> String {
    let mut out = format!(
        "{:>2}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12}  {:>12}\n",
        "n", "A", "K", "K*", "C(n)", "C**(n)", "C**/2^n"
    );
    for c in rows {
        out.push_str(&format!(
            "{:>2}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}\n",
            c.n, c.a, c.k, c.k_star, c.c_n, c.c_star_star, c.ratio_to_sharp
        ));
    }
    out
}

/// One line per check with the slack rounded to six digits.
pub fn format_summary(report: &RunReport) -> String {
    let mut out = String::new();
    for c in &report.checks {
        let space = c.params.get("space").and_then(|v| v.as_str()).unwrap_or("-");
        out.push_str(&format!(
            "{:<24} {:<30} {:<24} min_slack={:.5e} tol={:.1e}\n",
            c.verdict.as_str(),
            c.name,
            space,
            c.min_slack,
            c.tolerance
        ));
    }
    let s = &report.summary;
    out.push_str(&format!(
        "pass {}  fail {}  expected_fail_confirmed {}  inconclusive {}\n",
        s.pass, s.fail, s.expected_fail_confirmed, s.inconclusive
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = RunConfig { spaces: vec![ModelSpace::euclidean(2).unwrap()], suites: vec![Suite::Liyau], ..Default::default() };
        assert!(c.validate().is_ok());
        c.suites.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.suites.push(Suite::Cd);
        c.quadrature.tol = 0.5;
        assert!(c.validate().is_err());
        c.quadrature.tol = 1e-9;
        c.quadrature.max_terms = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn catalog_names_are_unique_per_suite() {
        let cat = catalog();
        let mut seen = std::collections::BTreeSet::new();
        for e in &cat {
            assert!(seen.insert((e.suite, e.name)), "{e:?}");
        }
    }
}
