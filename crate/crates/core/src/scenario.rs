//! Experiment configs in physical units, their normalization, N-sweeps and
//! the validation battery.
//!
//! A config is a TOML file:
//!
//! ```toml
//! name = "single_cell"
//!
//! [cell]
//! bandwidth_mhz = 10.0
//! uc_grant_mhz = 2.5      # one frequency unit
//! interval_s = 120.0      # T in wall-clock time
//! slots = 120             # slots per interval
//! r_high = 2.4            # bps/Hz
//! low_degradation = 0.45  # or r_low = 1.32
//! area_ratio = 9.0        # |A_l| / |A_h|
//! bc_cap_fraction = 0.6
//! users = 200
//!
//! [catalog]
//! files = 2000
//! zipf_exponent = 1.0
//! size_min_mb = 160.0
//! size_max_mb = 634.0
//! theta_min_s = 0.6
//! theta_max_s = 6.0
//!
//! [pricing]
//! unicast_price = 2.6
//!
//! [sweep]
//! users = [0, 100, 200]
//! schedulers = ["suboptimal", "none"]
//!
//! [simulation]
//! trials = 200
//! seed = 1
//! ```

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{unicast_rate, RateModel};
use crate::demand::{
    DelayThreshold, FileCatalog, FileSpec, ThetaEstimation, ZipfParams, DEFAULT_THETA_SAMPLES,
};
use crate::optimizer::{self, CellConfig};
use crate::oracle;
use crate::payoff::{simulate_revenue, SimulationSetup};
use crate::scheduler::{self, SchedulerKind};
use crate::seeding::{self, Domain};
use crate::{Error, Execution, Result};

/// Largest normalized file size the default size unit produces.
pub const DEFAULT_MAX_NORMALIZED_SIZE: f64 = 0.99;

fn default_uc_grant() -> f64 {
    2.5
}
fn default_interval() -> f64 {
    120.0
}
fn default_slots() -> u32 {
    120
}
fn default_bc_cap() -> f64 {
    0.6
}
fn default_theta_samples() -> usize {
    DEFAULT_THETA_SAMPLES
}
fn default_one() -> u64 {
    1
}
fn default_trials() -> usize {
    200
}
fn default_schedulers() -> Vec<SchedulerKind> {
    vec![SchedulerKind::Suboptimal]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub bandwidth_mhz: f64,
    #[serde(default = "default_uc_grant")]
    pub uc_grant_mhz: f64,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    #[serde(default = "default_slots")]
    pub slots: u32,
    pub r_high: f64,
    #[serde(default)]
    pub r_low: Option<f64>,
    /// Fractional loss of the low region relative to `r_high`.
    #[serde(default)]
    pub low_degradation: Option<f64>,
    pub area_ratio: f64,
    #[serde(default = "default_bc_cap")]
    pub bc_cap_fraction: f64,
    #[serde(default)]
    pub users: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    pub files: usize,
    pub zipf_exponent: f64,
    pub size_min_mb: f64,
    pub size_max_mb: f64,
    pub theta_min_s: f64,
    pub theta_max_s: f64,
    /// Size unit in MB; defaults to `size_max_mb / 0.99`.
    #[serde(default)]
    pub size_unit_mb: Option<f64>,
    #[serde(default = "default_theta_samples")]
    pub theta_samples: usize,
    /// Seed for file sizes and tolerance estimates.
    #[serde(default = "default_one")]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSpec {
    pub unicast_price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// User counts; empty means just `cell.users`.
    #[serde(default)]
    pub users: Vec<u64>,
    #[serde(default = "default_schedulers")]
    pub schedulers: Vec<SchedulerKind>,
    /// Zipf exponents; empty means just the catalog's.
    #[serde(default)]
    pub zipf_exponents: Vec<f64>,
    /// Catalog sizes; empty means just the catalog's.
    #[serde(default)]
    pub catalog_sizes: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            users: Vec::new(),
            schedulers: default_schedulers(),
            zipf_exponents: Vec::new(),
            catalog_sizes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_one")]
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 1,
        }
    }
}

/// Small-instance settings for [`run_validation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    pub files: usize,
    pub seed: u64,
    pub users: u64,
    pub grid_points: usize,
    pub trials: usize,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        Self {
            files: 8,
            seed: 42,
            users: 100,
            grid_points: oracle::GRID_POINTS,
            trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub cell: CellSpec,
    pub catalog: CatalogSpec,
    pub pricing: PricingSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub validation: ValidationSpec,
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    require(v > 0.0 && v.is_finite(), || {
        format!("{name} must be positive, got {v}")
    })
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cell;
        positive("cell.bandwidth_mhz", c.bandwidth_mhz)?;
        positive("cell.uc_grant_mhz", c.uc_grant_mhz)?;
        positive("cell.interval_s", c.interval_s)?;
        require(c.slots > 0, || "cell.slots must be positive".into())?;
        positive("cell.r_high", c.r_high)?;
        require(c.area_ratio >= 0.0 && c.area_ratio.is_finite(), || {
            format!("cell.area_ratio must be non-negative, got {}", c.area_ratio)
        })?;
        require(c.bc_cap_fraction > 0.0 && c.bc_cap_fraction <= 1.0, || {
            format!(
                "cell.bc_cap_fraction must lie in (0, 1], got {}",
                c.bc_cap_fraction
            )
        })?;
        match (c.r_low, c.low_degradation) {
            (Some(r), None) => require(r > 0.0 && r <= c.r_high, || {
                format!("cell.r_low must lie in (0, r_high], got {r}")
            })?,
            (None, Some(d)) => require((0.0..1.0).contains(&d), || {
                format!("cell.low_degradation must lie in [0, 1), got {d}")
            })?,
            _ => {
                return Err(Error::Config(
                    "set exactly one of cell.r_low and cell.low_degradation".into(),
                ))
            }
        }

        let k = &self.catalog;
        require(k.files >= 1, || "catalog.files must be at least 1".into())?;
        positive("catalog.zipf_exponent", k.zipf_exponent)?;
        positive("catalog.size_min_mb", k.size_min_mb)?;
        positive("catalog.theta_min_s", k.theta_min_s)?;
        require(k.size_min_mb <= k.size_max_mb, || {
            "catalog size range is empty".into()
        })?;
        require(
            k.theta_min_s <= k.theta_max_s && k.theta_max_s.is_finite(),
            || "catalog theta range is empty".into(),
        )?;
        if let Some(u) = k.size_unit_mb {
            positive("catalog.size_unit_mb", u)?;
        }
        require(k.theta_samples >= 1, || {
            "catalog.theta_samples must be at least 1".into()
        })?;

        positive("pricing.unicast_price", self.pricing.unicast_price)?;

        let s = &self.sweep;
        require(!s.schedulers.is_empty(), || {
            "sweep.schedulers must not be empty".into()
        })?;
        for &g in &s.zipf_exponents {
            positive("sweep.zipf_exponents entry", g)?;
        }
        require(s.catalog_sizes.iter().all(|&m| m >= 1), || {
            "sweep.catalog_sizes entries must be at least 1".into()
        })?;
        require(self.simulation.trials >= 1, || {
            "simulation.trials must be at least 1".into()
        })?;

        let v = &self.validation;
        require(
            (1..=scheduler::MAX_BRUTE_FORCE_FILES).contains(&v.files),
            || {
                format!(
                    "validation.files must lie in 1..={}, got {}",
                    scheduler::MAX_BRUTE_FORCE_FILES,
                    v.files
                )
            },
        )?;
        require(v.grid_points >= 2, || {
            "validation.grid_points must be at least 2".into()
        })?;
        require(v.trials >= 1, || {
            "validation.trials must be at least 1".into()
        })?;
        Ok(())
    }

    /// Sweep user counts, ascending and deduplicated.
    pub fn sweep_users(&self) -> Vec<u64> {
        let mut n = if self.sweep.users.is_empty() {
            vec![self.cell.users]
        } else {
            self.sweep.users.clone()
        };
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn zipf_exponents(&self) -> Vec<f64> {
        if self.sweep.zipf_exponents.is_empty() {
            vec![self.catalog.zipf_exponent]
        } else {
            self.sweep.zipf_exponents.clone()
        }
    }

    pub fn catalog_sizes(&self) -> Vec<usize> {
        if self.sweep.catalog_sizes.is_empty() {
            vec![self.catalog.files]
        } else {
            self.sweep.catalog_sizes.clone()
        }
    }
}

/// Physical meaning of one normalized unit of each quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationScheme {
    /// Bandwidth of one frequency unit.
    pub frequency_unit_mhz: f64,
    /// Length of one slot.
    pub slot_s: f64,
    /// Size of one size unit (1 MB = 10^6 bytes).
    pub size_unit_mb: f64,
    /// Normalized rate per bps/Hz of spectral efficiency: size units per
    /// slot per frequency unit.
    pub rate_per_bps_hz: f64,
}

impl NormalizationScheme {
    pub fn bandwidth_to_mhz(&self, units: f64) -> f64 {
        units * self.frequency_unit_mhz
    }

    pub fn bandwidth_from_mhz(&self, mhz: f64) -> f64 {
        mhz / self.frequency_unit_mhz
    }

    pub fn size_from_mb(&self, mb: f64) -> f64 {
        mb / self.size_unit_mb
    }

    pub fn time_from_s(&self, s: f64) -> f64 {
        s / self.slot_s
    }

    pub fn rate_from_bps_hz(&self, r: f64) -> f64 {
        r * self.rate_per_bps_hz
    }
}

/// A spec in normalized units. `files` covers the largest catalog any sweep
/// variant needs; smaller variants use a prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized {
    pub scheme: NormalizationScheme,
    pub cell: CellConfig,
    pub rates: RateModel,
    pub files: Vec<FileSpec>,
    pub zipf: ZipfParams,
    pub theta: ThetaEstimation,
}

fn draw_files(
    count: usize,
    seed: u64,
    size_mb: (f64, f64),
    theta_s: (f64, f64),
    scheme: &NormalizationScheme,
) -> Result<Vec<FileSpec>> {
    use rand::Rng;
    let mut rng = seeding::stream(seed, Domain::FileSizes, 0);
    let delay = DelayThreshold::new(scheme.time_from_s(theta_s.0), scheme.time_from_s(theta_s.1))?;
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let mb = size_mb.0 + (size_mb.1 - size_mb.0) * u;
            FileSpec::new(scheme.size_from_mb(mb), delay)
        })
        .collect()
}

fn normalize_with(spec: &ExperimentSpec, files: usize, seed: u64) -> Result<Normalized> {
    spec.validate()?;
    let c = &spec.cell;
    let k = &spec.catalog;
    let size_unit = k
        .size_unit_mb
        .unwrap_or(k.size_max_mb / DEFAULT_MAX_NORMALIZED_SIZE);
    let slot_s = c.interval_s / c.slots as f64;
    let scheme = NormalizationScheme {
        frequency_unit_mhz: c.uc_grant_mhz,
        slot_s,
        size_unit_mb: size_unit,
        rate_per_bps_hz: c.uc_grant_mhz * slot_s / (8.0 * size_unit),
    };
    let f_max = scheme.size_from_mb(k.size_max_mb);
    require(f_max < 1.0, || {
        format!(
            "largest file normalizes to {f_max}; choose a size unit above {} MB",
            k.size_max_mb
        )
    })?;

    let r_low = c
        .r_low
        .unwrap_or_else(|| c.r_high * (1.0 - c.low_degradation.unwrap_or(0.0)));
    let rates = RateModel::from_area_ratio(
        scheme.rate_from_bps_hz(c.r_high),
        scheme.rate_from_bps_hz(r_low),
        c.area_ratio,
    )?;
    let cell = CellConfig {
        bandwidth: scheme.bandwidth_from_mhz(c.bandwidth_mhz),
        slots: c.slots as f64,
        users: c.users,
        unicast_price: spec.pricing.unicast_price,
        unicast_rate: unicast_rate(&rates),
        broadcast_rate: rates.r_low,
        bc_cap_fraction: c.bc_cap_fraction,
    };
    cell.validate()?;
    let files = draw_files(
        files,
        seed,
        (k.size_min_mb, k.size_max_mb),
        (k.theta_min_s, k.theta_max_s),
        &scheme,
    )?;
    Ok(Normalized {
        scheme,
        cell,
        rates,
        files,
        zipf: ZipfParams::new(k.zipf_exponent, k.files)?,
        theta: ThetaEstimation {
            samples: k.theta_samples,
            seed,
        },
    })
}

/// Maps a physical spec to normalized units.
///
/// One frequency unit is the unicast grant, one slot is
/// `interval_s / slots`, and one size unit is `size_unit_mb` (default: the
/// largest file over 0.99). Rates become size units per slot per frequency
/// unit, thresholds become slots. The analytic broadcast rate is the
/// large-audience limit `r_low`.
pub fn normalize(spec: &ExperimentSpec) -> Result<Normalized> {
    let largest = spec
        .catalog_sizes()
        .into_iter()
        .max()
        .unwrap_or(0)
        .max(spec.catalog.files);
    normalize_with(spec, largest, spec.catalog.seed)
}

impl Normalized {
    /// Builds the catalog over all of `self.files` with the spec's Zipf
    /// exponent.
    pub fn build_catalog(&self, exec: Execution) -> Result<FileCatalog> {
        let zipf = ZipfParams::new(self.zipf.exponent, self.files.len())?;
        FileCatalog::build(&self.files, &zipf, &self.rates, self.theta, exec)
    }
}

/// One row of sweep output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub zipf_exponent: f64,
    pub files: usize,
    #[serde(rename = "scheduler_variant")]
    pub scheduler: SchedulerKind,
    #[serde(rename = "N")]
    pub users: u64,
    #[serde(rename = "W_b_star")]
    pub w_b_star: Option<f64>,
    #[serde(rename = "P_b_star")]
    pub p_b_star: Option<f64>,
    #[serde(rename = "L")]
    pub lower_bound: Option<f64>,
    #[serde(rename = "R_analytic")]
    pub gain_analytic: Option<f64>,
    #[serde(rename = "W_b_exact")]
    pub w_b_exact: Option<f64>,
    #[serde(rename = "P_b_exact")]
    pub p_b_exact: Option<f64>,
    #[serde(rename = "L_exact")]
    pub lower_bound_exact: Option<f64>,
    #[serde(rename = "L0_mc_mean")]
    pub l0_mc_mean: Option<f64>,
    #[serde(rename = "L0_mc_stderr")]
    pub l0_mc_stderr: Option<f64>,
    pub gain_mc: Option<f64>,
    pub bc_user_fraction: Option<f64>,
    pub payoff_guarantee_violations: Option<u64>,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sweep {
    pub scenario: String,
    pub scheme: NormalizationScheme,
    pub cell: CellConfig,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One `(…, N, metric, value)` line per numeric cell, for plotting.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "zipf_exponent",
            "files",
            "scheduler_variant",
            "N",
            "metric",
            "value",
        ])?;
        for r in &self.rows {
            let metrics = [
                ("W_b_star", r.w_b_star),
                ("P_b_star", r.p_b_star),
                ("L", r.lower_bound),
                ("R_analytic", r.gain_analytic),
                ("W_b_exact", r.w_b_exact),
                ("P_b_exact", r.p_b_exact),
                ("L_exact", r.lower_bound_exact),
                ("L0_mc_mean", r.l0_mc_mean),
                ("L0_mc_stderr", r.l0_mc_stderr),
                ("gain_mc", r.gain_mc),
                ("bc_user_fraction", r.bc_user_fraction),
            ];
            for (name, value) in metrics {
                if let Some(v) = value {
                    w.write_record([
                        r.scenario.clone(),
                        r.zipf_exponent.to_string(),
                        r.files.to_string(),
                        r.scheduler.to_string(),
                        r.users.to_string(),
                        name.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Rows of one variant, ascending in N.
    pub fn series(
        &self,
        zipf_exponent: f64,
        files: usize,
        scheduler: SchedulerKind,
    ) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.zipf_exponent == zipf_exponent && r.files == files && r.scheduler == scheduler
            })
            .collect()
    }
}

struct PointContext<'a> {
    scenario: &'a str,
    catalog: &'a FileCatalog,
    zipf_exponent: f64,
    cell: CellConfig,
    rates: &'a RateModel,
    kind: SchedulerKind,
    trials: usize,
    seed: u64,
    exec: Execution,
}

fn sweep_point(ctx: &PointContext<'_>) -> SweepRow {
    let cell = &ctx.cell;
    let mut row = SweepRow {
        scenario: ctx.scenario.to_string(),
        zipf_exponent: ctx.zipf_exponent,
        files: ctx.catalog.len(),
        scheduler: ctx.kind,
        users: cell.users,
        w_b_star: None,
        p_b_star: None,
        lower_bound: None,
        gain_analytic: None,
        w_b_exact: None,
        p_b_exact: None,
        lower_bound_exact: None,
        l0_mc_mean: None,
        l0_mc_stderr: None,
        gain_mc: None,
        bc_user_fraction: None,
        payoff_guarantee_violations: None,
        error: String::new(),
    };
    let mut errors = Vec::new();
    let mut note = |what: &str, e: Error| errors.push(format!("{what}: {e}"));

    match scheduler::schedule_for(ctx.kind, ctx.catalog, cell) {
        Err(e) => note("schedule", e),
        Ok(ranked) => {
            let schedule = &ranked.schedule;
            let s = optimizer::s_star(ctx.catalog, schedule);
            let w_b = optimizer::closed_form_wb(ctx.catalog, cell);
            row.w_b_star = Some(w_b);
            match optimizer::closed_form_pb(ctx.catalog, cell, s) {
                Err(e) => note("price", e),
                Ok(p_b) => {
                    row.p_b_star = Some(p_b);
                    let l = if cell.users == 0 {
                        Ok(cell.unicast_only_revenue())
                    } else {
                        optimizer::lower_bound_revenue(ctx.catalog, cell, p_b, w_b, schedule)
                    };
                    match l {
                        Ok(l) => row.lower_bound = Some(l),
                        Err(e) => note("bound", e),
                    }
                    let setup = SimulationSetup {
                        catalog: ctx.catalog,
                        cell,
                        rates: ctx.rates,
                        broadcast_price: p_b,
                        broadcast_bandwidth: w_b,
                        schedule,
                    };
                    match simulate_revenue(setup, ctx.trials, ctx.seed, ctx.exec) {
                        Ok(rep) => {
                            row.l0_mc_mean = Some(rep.revenue_mean);
                            row.l0_mc_stderr = Some(rep.revenue_stderr);
                            row.gain_mc = Some(rep.revenue_mean / cell.unicast_only_revenue());
                            row.bc_user_fraction = Some(rep.bc_user_fraction);
                            row.payoff_guarantee_violations = Some(rep.payoff_guarantee_violations);
                        }
                        Err(e) => note("simulation", e),
                    }
                }
            }
            match optimizer::revenue_gain(ctx.catalog, cell, s, schedule) {
                Ok(r) => row.gain_analytic = Some(r),
                Err(e) => note("gain", e),
            }
        }
    }
    match optimizer::joint_optimize(ctx.catalog, cell) {
        Ok(r) => {
            row.w_b_exact = Some(r.w_b_star);
            row.p_b_exact = Some(r.p_b_star);
            row.lower_bound_exact = Some(r.lower_bound_revenue);
        }
        Err(e) => note("joint", e),
    }
    row.error = errors.join("; ");
    row
}

/// Evaluates every (Zipf exponent, catalog size, scheduler, N) point.
///
/// Per point: the scheduler's order, closed-form `W_b*` and `P_b*` for that
/// order, the bound there, the analytic gain, the joint optimum, and a
/// Monte Carlo revenue estimate at the closed-form design. All points share
/// the simulation seed. A failing point keeps its row with the error text.
/// Rows are ordered by variant in config order, then by N.
pub fn run_sweep(spec: &ExperimentSpec, exec: Execution) -> Result<Sweep> {
    let norm = normalize(spec)?;
    let base = norm.build_catalog(exec)?;
    let mut catalogs = Vec::new();
    for gamma in spec.zipf_exponents() {
        for m in spec.catalog_sizes() {
            catalogs.push((gamma, base.reweighted(&ZipfParams::new(gamma, m)?)?));
        }
    }
    let users = spec.sweep_users();
    let mut points = Vec::new();
    for (gamma, catalog) in &catalogs {
        for &kind in &spec.sweep.schedulers {
            for &n in &users {
                points.push(PointContext {
                    scenario: &spec.name,
                    catalog,
                    zipf_exponent: *gamma,
                    cell: norm.cell.with_users(n),
                    rates: &norm.rates,
                    kind,
                    trials: spec.simulation.trials,
                    seed: spec.simulation.seed,
                    exec,
                });
            }
        }
    }
    let rows = exec.map_range(points.len(), |i| sweep_point(&points[i]));
    for r in rows.iter().filter(|r| !r.error.is_empty()) {
        log::warn!(
            "sweep point gamma={} M={} {} N={} failed: {}",
            r.zipf_exponent,
            r.files,
            r.scheduler,
            r.users,
            r.error
        );
    }
    Ok(Sweep {
        scenario: spec.name.clone(),
        scheme: norm.scheme,
        cell: norm.cell,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    /// The compared quantity, e.g. a distance or a margin.
    pub measured: Option<f64>,
    /// Largest acceptable `measured`.
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub files: usize,
    pub users: u64,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "validation of {} (M={}, N={}, seed={})",
            self.scenario, self.files, self.users, self.seed
        )?;
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIPPED",
            };
            write!(f, "[{status:7}] {}", c.name)?;
            if let (Some(m), Some(t)) = (c.measured, c.threshold) {
                write!(f, "  measured={m:.6e} threshold={t:.6e}")?;
            }
            if !c.detail.is_empty() {
                write!(f, "  {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn judged(name: &str, measured: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: if measured <= threshold {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        measured: Some(measured),
        threshold: Some(threshold),
        detail,
    }
}

fn from_error(name: &str, e: Error) -> CheckResult {
    CheckResult {
        name: name.into(),
        status: match e {
            Error::Precondition(_) => CheckStatus::Skipped,
            _ => CheckStatus::Fail,
        },
        measured: None,
        threshold: None,
        detail: e.to_string(),
    }
}

fn check(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| from_error(name, e))
}

/// Runs the oracle battery on a small instance built from `spec` with the
/// `[validation]` overrides. Only config errors are returned as `Err`;
/// failed checks are report entries.
pub fn run_validation(spec: &ExperimentSpec, exec: Execution) -> Result<ValidationReport> {
    let v = &spec.validation;
    let mut small = spec.clone();
    small.catalog.files = v.files;
    small.sweep.catalog_sizes.clear();
    let norm = normalize_with(&small, v.files, v.seed)?;
    let cell = norm.cell.with_users(v.users);
    let mut report = ValidationReport {
        scenario: spec.name.clone(),
        files: v.files,
        users: v.users,
        seed: v.seed,
        checks: Vec::new(),
    };
    let catalog = match norm.build_catalog(exec) {
        Ok(c) => c,
        Err(e) => {
            report.checks.push(from_error("catalog", e));
            return Ok(report);
        }
    };
    let p_u = cell.unicast_price;
    let points = v.grid_points;
    let opt = scheduler::optimal_schedule(&catalog, &cell);
    let w_cf = optimizer::closed_form_wb(&catalog, &cell);

    let c = &catalog;
    report.checks.push(check("smith_vs_permutations", || {
        let opt = opt
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let p_b = opt.broadcast_price;
        let smith = scheduler::smith_schedule(c, p_u, p_b)?;
        let cost = scheduler::smith_cost(smith.order(), c, p_u, p_b)?;
        let (_, best) = scheduler::brute_force_smith(c, p_u, p_b, exec)?;
        Ok(judged(
            "smith_vs_permutations",
            cost - best,
            0.0,
            format!("Smith cost {cost} vs minimum {best} over all orders"),
        ))
    }));
    report.checks.push(check("schedule_fixed_point", || {
        let opt = opt
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(CheckResult {
            name: "schedule_fixed_point".into(),
            status: if opt.converged {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            measured: Some(opt.iterations as f64),
            threshold: None,
            detail: format!("{} iteration(s)", opt.iterations),
        })
    }));

    let grid_checks = |name: &str, analytic: f64, grid: oracle::GridMax, closed_form: bool| {
        let (distance, allowed) = if closed_form {
            (
                (analytic - grid.argmax).abs(),
                2.0 * grid.step + 0.05 * grid.argmax.abs(),
            )
        } else {
            ((analytic - grid.argmax).abs(), grid.step)
        };
        judged(
            name,
            distance,
            allowed,
            format!("analytic {analytic} vs grid argmax {}", grid.argmax),
        )
    };
    report.checks.push(check("exact_wb_vs_grid", || {
        let opt = opt
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let p_b = opt.broadcast_price;
        let exact = optimizer::exact_wb_given_pb(c, &cell, p_b, &opt.schedule);
        let grid = oracle::grid_argmax_wb(c, &cell, p_b, &opt.schedule, points);
        Ok(grid_checks("exact_wb_vs_grid", exact, grid, false))
    }));
    report.checks.push(check("exact_pb_vs_grid", || {
        let opt = opt
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let exact = optimizer::exact_pb_given_wb(c, &cell, w_cf, &opt.schedule)?;
        let grid = oracle::grid_argmax_pb(c, &cell, w_cf, &opt.schedule, points);
        Ok(grid_checks("exact_pb_vs_grid", exact, grid, false))
    }));
    report.checks.push(check("closed_form_wb_vs_grid", || {
        let opt = opt
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let grid = oracle::grid_argmax_wb(c, &cell, opt.broadcast_price, &opt.schedule, points);
        Ok(grid_checks("closed_form_wb_vs_grid", w_cf, grid, true))
    }));
    report.checks.push(check("closed_form_pb_vs_grid", || {
        let opt = opt
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let grid = oracle::grid_argmax_pb(c, &cell, w_cf, &opt.schedule, points);
        Ok(grid_checks(
            "closed_form_pb_vs_grid",
            opt.broadcast_price,
            grid,
            true,
        ))
    }));
    report.checks.push(check("joint_fixed_point", || {
        let r = optimizer::joint_optimize(c, &cell)?;
        let rw =
            (r.w_b_star - optimizer::exact_wb_given_pb(c, &cell, r.p_b_star, &r.schedule)).abs();
        let rp =
            (r.p_b_star - optimizer::exact_pb_given_wb(c, &cell, r.w_b_star, &r.schedule)?).abs();
        let gap = r.closed_form.lower_bound_revenue - r.lower_bound_revenue;
        let mut out = judged(
            "joint_fixed_point",
            rw.max(rp),
            1e-9,
            format!(
                "L {} vs closed-form L {} after {} iteration(s)",
                r.lower_bound_revenue, r.closed_form.lower_bound_revenue, r.iterations
            ),
        );
        if gap > 0.0 {
            out.status = CheckStatus::Fail;
        }
        Ok(out)
    }));

    let sim = opt
        .as_ref()
        .map_err(|e| Error::Precondition(e.to_string()))
        .and_then(|opt| {
            let setup = SimulationSetup {
                catalog: c,
                cell: &cell,
                rates: &norm.rates,
                broadcast_price: opt.broadcast_price,
                broadcast_bandwidth: w_cf,
                schedule: &opt.schedule,
            };
            Ok((
                simulate_revenue(setup, v.trials, spec.simulation.seed, exec)?,
                opt,
            ))
        });
    report.checks.push(check("lower_bound_validity", || {
        let (rep, opt) = sim
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        let l = optimizer::lower_bound_revenue(c, &cell, opt.broadcast_price, w_cf, &opt.schedule)?;
        Ok(judged(
            "lower_bound_validity",
            l - rep.revenue_mean,
            3.0 * rep.revenue_stderr,
            format!(
                "MC revenue {} +- {} vs bound {l}",
                rep.revenue_mean, rep.revenue_stderr
            ),
        ))
    }));
    report.checks.push(check("payoff_guarantee", || {
        let (rep, _) = sim
            .as_ref()
            .map_err(|e| Error::Precondition(e.to_string()))?;
        Ok(judged(
            "payoff_guarantee",
            rep.payoff_guarantee_violations as f64,
            0.0,
            format!("{} trials", rep.trials),
        ))
    }));
    Ok(report)
}
