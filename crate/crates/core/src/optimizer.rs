//! Revenue lower bound and its maximizers over broadcast bandwidth `W_b` and
//! broadcast price `P_b`.
//!
//! With `S = sum s_i theta_i f_i p_i` and `Q = sum s_i theta_i f_i^2 p_i` for
//! a fixed schedule, the bound reads
//!
//! ```text
//! L(W_b, P_b) = P_b N (F - r_u / (W_b r_b) * (S - (P_u - P_b) Q)) + P_u (W - W_b) T
//! ```
//!
//! It is concave along each coordinate, which gives closed-form coordinate
//! maximizers; [`joint_optimize`] alternates them together with the Smith
//! order for the current price.

use serde::{Deserialize, Serialize};

use crate::demand::FileCatalog;
use crate::numeric::compensated_sum;
use crate::scheduler::{self, Schedule};
use crate::{Error, Result};

/// Normalized cell parameters seen by the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    /// Total frequency units `W`.
    pub bandwidth: f64,
    /// Slots per interval `T`.
    pub slots: f64,
    /// Users `N`.
    pub users: u64,
    /// Unicast price `P_u` per size unit.
    pub unicast_price: f64,
    /// Average unicast rate `r_u`.
    pub unicast_rate: f64,
    /// Average broadcast rate `r_b`.
    pub broadcast_rate: f64,
    /// Largest share `beta` of `W` that broadcast may take.
    pub bc_cap_fraction: f64,
}

impl CellConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("slots", self.slots),
            ("unicast price", self.unicast_price),
            ("unicast rate", self.unicast_rate),
            ("broadcast rate", self.broadcast_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.bc_cap_fraction > 0.0 && self.bc_cap_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "broadcast cap fraction must lie in (0, 1], got {}",
                self.bc_cap_fraction
            )));
        }
        Ok(())
    }

    pub fn with_users(self, users: u64) -> Self {
        Self { users, ..self }
    }

    /// Largest broadcast bandwidth, `beta W`.
    pub fn bc_cap(&self) -> f64 {
        self.bc_cap_fraction * self.bandwidth
    }

    /// Revenue of the same cell with unicast only, `P_u W T`.
    pub fn unicast_only_revenue(&self) -> f64 {
        self.unicast_price * self.bandwidth * self.slots
    }

    fn n(&self) -> f64 {
        self.users as f64
    }
}

/// Requires `(P_u - P_b) f_i < 1` for every file.
pub fn check_small_files(catalog: &FileCatalog, p_u: f64, p_b: f64) -> Result<()> {
    let offending: Vec<usize> = catalog
        .sizes()
        .iter()
        .enumerate()
        .filter(|(_, &f)| !((p_u - p_b) * f < 1.0))
        .map(|(i, _)| i + 1)
        .collect();
    if offending.is_empty() {
        return Ok(());
    }
    let shown = offending
        .iter()
        .take(10)
        .map(|i| i.to_string())
        .collect::<Vec<_>>();
    Err(Error::Precondition(format!(
        "(P_u - P_b) f_i >= 1 with P_u - P_b = {} for {} file(s): {}{}",
        p_u - p_b,
        offending.len(),
        shown.join(", "),
        if offending.len() > 10 { ", ..." } else { "" }
    )))
}

/// Smallest price with `(P_u - P_b) f_i < 1` for every file, or 0.
///
/// Below it the bound no longer holds, so the exact price step searches
/// `[floor, P_u]`.
pub fn admissible_price_floor(catalog: &FileCatalog, p_u: f64) -> f64 {
    let f_max = catalog.max_size();
    let mut p = (p_u - 1.0 / f_max).max(0.0);
    while !((p_u - p) * f_max < 1.0) {
        p = p.next_up();
    }
    p
}

fn check_schedule(catalog: &FileCatalog, schedule: &Schedule) -> Result<()> {
    if schedule.len() != catalog.len() {
        return Err(Error::InvalidParameter(format!(
            "schedule covers {} files, catalog has {}",
            schedule.len(),
            catalog.len()
        )));
    }
    Ok(())
}

fn weighted_sum(catalog: &FileCatalog, schedule: &Schedule, g: impl Fn(f64) -> f64) -> f64 {
    compensated_sum(
        itertools::izip!(
            schedule.completion(),
            catalog.theta(),
            catalog.sizes(),
            catalog.popularity()
        )
        .map(|(s, t, f, p)| s * t * p * g(*f)),
    )
}

/// `S* = sum s_i theta_i f_i p_i`.
pub fn s_star(catalog: &FileCatalog, schedule: &Schedule) -> f64 {
    weighted_sum(catalog, schedule, |f| f)
}

/// `sum s_i theta_i f_i^2 p_i`.
pub fn size_weighted_sum(catalog: &FileCatalog, schedule: &Schedule) -> f64 {
    weighted_sum(catalog, schedule, |f| f * f)
}

/// `sum s_i theta_i f_i p_i (1 - (P_u - P_b) f_i)`.
fn delay_cost(catalog: &FileCatalog, schedule: &Schedule, p_u: f64, p_b: f64) -> f64 {
    weighted_sum(catalog, schedule, |f| f * (1.0 - (p_u - p_b) * f))
}

/// The bound's expression without its hypotheses. A zero broadcast term
/// (`P_b N = 0`) is dropped; otherwise `W_b = 0` gives `-inf`.
pub fn lower_bound_expression(
    catalog: &FileCatalog,
    cell: &CellConfig,
    p_b: f64,
    w_b: f64,
    schedule: &Schedule,
) -> f64 {
    let uc = cell.unicast_price * (cell.bandwidth - w_b) * cell.slots;
    if p_b * cell.n() == 0.0 {
        return uc;
    }
    if w_b <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let ratio = cell.unicast_rate / (w_b * cell.broadcast_rate);
    let cost = delay_cost(catalog, schedule, cell.unicast_price, p_b);
    p_b * cell.n() * (catalog.mean_size() - ratio * cost) + uc
}

/// Lower bound `L` on expected revenue at `(W_b, P_b)` for a schedule.
pub fn lower_bound_revenue(
    catalog: &FileCatalog,
    cell: &CellConfig,
    p_b: f64,
    w_b: f64,
    schedule: &Schedule,
) -> Result<f64> {
    cell.validate()?;
    check_schedule(catalog, schedule)?;
    if !(0.0..=cell.unicast_price).contains(&p_b) {
        return Err(Error::InvalidParameter(format!(
            "broadcast price {p_b} outside [0, {}]",
            cell.unicast_price
        )));
    }
    if !(0.0..=cell.bandwidth).contains(&w_b) {
        return Err(Error::InvalidParameter(format!(
            "broadcast bandwidth {w_b} outside [0, {}]",
            cell.bandwidth
        )));
    }
    check_small_files(catalog, cell.unicast_price, p_b)?;
    if w_b == 0.0 && p_b * cell.n() > 0.0 {
        return Err(Error::InvalidParameter(
            "broadcast bandwidth must be positive when broadcast earns revenue".into(),
        ));
    }
    Ok(lower_bound_expression(catalog, cell, p_b, w_b, schedule))
}

/// `min(N F / (4 P_u T), beta W)`.
pub fn closed_form_wb(catalog: &FileCatalog, cell: &CellConfig) -> f64 {
    let raw = cell.n() * catalog.mean_size() / (4.0 * cell.unicast_price * cell.slots);
    raw.min(cell.bc_cap())
}

/// `N r_b F^2 / (4 P_u T r_u S*)`, the demand term shared by the price and
/// the gain.
fn demand_term(catalog: &FileCatalog, cell: &CellConfig, s_star: f64) -> f64 {
    let f = catalog.mean_size();
    cell.n() * cell.broadcast_rate * f * f
        / (4.0 * cell.unicast_price * cell.slots * cell.unicast_rate * s_star)
}

fn check_s_star(s_star: f64) -> Result<()> {
    if s_star > 0.0 && s_star.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "S* must be positive, got {s_star}"
        )))
    }
}

/// `min((m + P_u) / 2, P_u)` with `m` the demand term.
pub fn closed_form_pb(catalog: &FileCatalog, cell: &CellConfig, s_star: f64) -> Result<f64> {
    check_s_star(s_star)?;
    let p_u = cell.unicast_price;
    Ok((0.5 * (demand_term(catalog, cell, s_star) + p_u)).min(p_u))
}

/// Maximizer of `L` over `W_b` at fixed price and schedule, projected onto
/// `[0, beta W]`.
pub fn exact_wb_given_pb(
    catalog: &FileCatalog,
    cell: &CellConfig,
    p_b: f64,
    schedule: &Schedule,
) -> f64 {
    let cost = delay_cost(catalog, schedule, cell.unicast_price, p_b);
    let sq = p_b * cell.n() * cell.unicast_rate * cost
        / (cell.unicast_price * cell.slots * cell.broadcast_rate);
    sq.max(0.0).sqrt().clamp(0.0, cell.bc_cap())
}

/// Maximizer of `L` over `P_b` at fixed bandwidth and schedule, projected
/// onto the admissible prices `[admissible_price_floor, P_u]`. With no
/// broadcast bandwidth every positive price gives an unbounded loss, so the
/// result is the floor.
pub fn exact_pb_given_wb(
    catalog: &FileCatalog,
    cell: &CellConfig,
    w_b: f64,
    schedule: &Schedule,
) -> Result<f64> {
    let q = size_weighted_sum(catalog, schedule);
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "degenerate size-weighted sum {q}"
        )));
    }
    let floor = admissible_price_floor(catalog, cell.unicast_price);
    if w_b <= 0.0 {
        return Ok(floor);
    }
    let s = s_star(catalog, schedule);
    let shift =
        (catalog.mean_size() * w_b * cell.broadcast_rate / cell.unicast_rate - s) / (2.0 * q);
    Ok((0.5 * cell.unicast_price + shift).clamp(floor, cell.unicast_price))
}

/// `0.5 + sum s_i theta_i p_i / S*`.
pub fn g_factor(catalog: &FileCatalog, schedule: &Schedule, s_star: f64) -> Result<f64> {
    check_s_star(s_star)?;
    Ok(0.5 + weighted_sum(catalog, schedule, |_| 1.0) / s_star)
}

/// Approximate revenue gain over unicast only:
/// `1 + N F / (2 W T) (min(m / P_u, 1) + 1 - G / P_u)`.
pub fn revenue_gain(
    catalog: &FileCatalog,
    cell: &CellConfig,
    s_star: f64,
    schedule: &Schedule,
) -> Result<f64> {
    cell.validate()?;
    check_schedule(catalog, schedule)?;
    let g = g_factor(catalog, schedule, s_star)?;
    let p_u = cell.unicast_price;
    let saturation = (demand_term(catalog, cell, s_star) / p_u).min(1.0);
    let scale = cell.n() * catalog.mean_size() / (2.0 * cell.bandwidth * cell.slots);
    Ok(1.0 + scale * (saturation + 1.0 - g / p_u))
}

/// Stopping rule for [`joint_optimize_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub iteration: usize,
    pub w_b: f64,
    pub p_b: f64,
    pub lower_bound: f64,
}

/// The one-shot closed-form design.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedFormPoint {
    pub w_b: f64,
    pub p_b: f64,
    pub s_star: f64,
    pub lower_bound_revenue: f64,
    pub gain: f64,
    pub schedule: Schedule,
    pub schedule_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub users: u64,
    pub w_b_star: f64,
    pub p_b_star: f64,
    pub schedule: Schedule,
    pub s_star: f64,
    pub g: f64,
    pub lower_bound_revenue: f64,
    pub gain: f64,
    pub closed_form: ClosedFormPoint,
    pub iterations: usize,
    pub trace: Vec<Iterate>,
}

/// Closed-form design: fixed-point order, its price and the bandwidth
/// `min(N F / (4 P_u T), beta W)`.
pub fn closed_form_point(catalog: &FileCatalog, cell: &CellConfig) -> Result<ClosedFormPoint> {
    let opt = scheduler::optimal_schedule(catalog, cell)?;
    let w_b = closed_form_wb(catalog, cell);
    let p_b = opt.broadcast_price;
    let l = if cell.users == 0 {
        cell.unicast_only_revenue()
    } else {
        lower_bound_revenue(catalog, cell, p_b, w_b, &opt.schedule)?
    };
    Ok(ClosedFormPoint {
        w_b,
        p_b,
        s_star: opt.s_star,
        lower_bound_revenue: l,
        gain: revenue_gain(catalog, cell, opt.s_star, &opt.schedule)?,
        schedule: opt.schedule,
        schedule_converged: opt.converged,
    })
}

pub fn joint_optimize(catalog: &FileCatalog, cell: &CellConfig) -> Result<OptimizationResult> {
    joint_optimize_with(catalog, cell, JointOptions::default())
}

/// Coordinate ascent on `L` from the closed-form design: Smith order at the
/// current price, then the bandwidth step, then the price step. Stops once
/// the order is stable and both coordinate maximizers reproduce the current
/// point within `tolerance`.
///
/// Prices stay within the admissible range, where every file's delay term
/// is non-negative. Each step then maximizes `L` along its coordinate, so
/// the trace of `L` is non-decreasing and the result is never below the
/// closed-form design.
pub fn joint_optimize_with(
    catalog: &FileCatalog,
    cell: &CellConfig,
    options: JointOptions,
) -> Result<OptimizationResult> {
    cell.validate()?;
    let start = closed_form_point(catalog, cell)?;
    let p_u = cell.unicast_price;

    if cell.users == 0 {
        let schedule = start.schedule.clone();
        let s = s_star(catalog, &schedule);
        return Ok(OptimizationResult {
            users: 0,
            w_b_star: 0.0,
            p_b_star: 0.5 * p_u,
            g: g_factor(catalog, &schedule, s)?,
            s_star: s,
            schedule,
            lower_bound_revenue: cell.unicast_only_revenue(),
            gain: 1.0,
            iterations: 0,
            trace: vec![Iterate {
                iteration: 0,
                w_b: 0.0,
                p_b: 0.5 * p_u,
                lower_bound: cell.unicast_only_revenue(),
            }],
            closed_form: start,
        });
    }

    let (mut w, mut p) = (start.w_b, start.p_b);
    let mut schedule = start.schedule.clone();
    let mut trace = vec![Iterate {
        iteration: 0,
        w_b: w,
        p_b: p,
        lower_bound: start.lower_bound_revenue,
    }];
    for iteration in 1..=options.max_iterations {
        if p > 0.0 {
            schedule = scheduler::smith_order_unchecked(catalog, p_u, p);
        }
        w = exact_wb_given_pb(catalog, cell, p, &schedule);
        p = exact_pb_given_wb(catalog, cell, w, &schedule)?;
        let l = lower_bound_expression(catalog, cell, p, w, &schedule);
        trace.push(Iterate {
            iteration,
            w_b: w,
            p_b: p,
            lower_bound: l,
        });

        let w_residual = (w - exact_wb_given_pb(catalog, cell, p, &schedule)).abs();
        let p_residual = (p - exact_pb_given_wb(catalog, cell, w, &schedule)?).abs();
        let order_stable = p == 0.0
            || scheduler::smith_order_unchecked(catalog, p_u, p).order() == schedule.order();
        if w_residual <= options.tolerance && p_residual <= options.tolerance && order_stable {
            let s = s_star(catalog, &schedule);
            return Ok(OptimizationResult {
                users: cell.users,
                w_b_star: w,
                p_b_star: p,
                g: g_factor(catalog, &schedule, s)?,
                gain: revenue_gain(catalog, cell, s, &schedule)?,
                s_star: s,
                schedule,
                lower_bound_revenue: l,
                iterations: iteration,
                trace,
                closed_form: start,
            });
        }
    }
    Err(Error::Convergence {
        iterations: options.max_iterations,
        trace,
    })
}
