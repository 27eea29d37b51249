//! User payoffs, the broadcast/unicast selection policy and a Monte Carlo
//! estimate of the operator's revenue under that policy.
//!
//! Units are normalized: sizes in size units, rates in size units per slot
//! per frequency unit, delays in slots.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::channel::{broadcast_rate, sample_user_rate, RateModel};
use crate::demand::{FileCatalog, RequestSampler};
use crate::numeric::compensated_sum;
use crate::optimizer::CellConfig;
use crate::scheduler::Schedule;
use crate::seeding::{self, Domain};
use crate::{Error, Execution, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    pub unicast: f64,
    pub broadcast: f64,
}

impl PricePair {
    pub fn new(unicast: f64, broadcast: f64) -> Result<Self> {
        if !(0.0 <= broadcast && broadcast <= unicast && unicast.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prices must satisfy 0 <= P_b <= P_u, got P_b={broadcast}, P_u={unicast}"
            )));
        }
        Ok(Self { unicast, broadcast })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    Unicast,
    Broadcast,
}

/// `ln((1 + f) / (f / r - theta)) - P_u f`.
pub fn unicast_payoff(size: f64, threshold: f64, rate: f64, price: f64) -> Result<f64> {
    let excess = size / rate - threshold;
    if !(rate > 0.0 && excess > 0.0) {
        return Err(Error::Domain(format!(
            "unicast delay {} does not exceed threshold {threshold}",
            size / rate
        )));
    }
    Ok(((1.0 + size) / excess).ln() - price * size)
}

/// `ln((1 + f) / (s / (W_b r_b) - theta)) - P_b f`.
pub fn broadcast_payoff(
    size: f64,
    threshold: f64,
    rate: f64,
    completion: f64,
    bandwidth: f64,
    price: f64,
) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "broadcast bandwidth must be positive, got {bandwidth}"
        )));
    }
    let delay = completion / (bandwidth * rate);
    let excess = delay - threshold;
    if !(excess > 0.0) {
        return Err(Error::Domain(format!(
            "broadcast delay {delay} does not exceed threshold {threshold}"
        )));
    }
    Ok(((1.0 + size) / excess).ln() - price * size)
}

/// Users who gain from broadcast still get unicast while unicast capacity
/// lasts; users who would lose never get broadcast.
pub fn select_service(unicast: f64, broadcast: f64, uc_capacity_available: bool) -> Service {
    if !(broadcast >= unicast) || uc_capacity_available {
        Service::Unicast
    } else {
        Service::Broadcast
    }
}

/// Everything a revenue simulation needs besides trial count and seed.
#[derive(Clone, Copy, Debug)]
pub struct SimulationSetup<'a> {
    pub catalog: &'a FileCatalog,
    pub cell: &'a CellConfig,
    pub rates: &'a RateModel,
    pub broadcast_price: f64,
    pub broadcast_bandwidth: f64,
    pub schedule: &'a Schedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub revenue_mean: f64,
    pub revenue_stderr: f64,
    pub bc_user_fraction: f64,
    pub payoff_guarantee_violations: u64,
    pub trials: usize,
    pub seed: u64,
    pub users: u64,
    pub broadcast_bandwidth: f64,
    pub broadcast_price: f64,
    /// `P_u (W - W_b) T`, identical in every trial.
    pub uc_revenue: f64,
    pub bc_revenue_mean: f64,
    /// Mean realized payoff per user under the policy.
    pub mean_policy_payoff: f64,
    /// Mean payoff per user had everyone been served by unicast.
    pub mean_unicast_payoff: f64,
    /// Users whose unicast payoff is negative, over all trials.
    pub negative_unicast_payoff_users: u64,
    /// Trials in which total unicast demand fit within unicast capacity.
    pub undersubscribed_trials: usize,
    /// Mean count of scheduled files that nobody requested.
    pub mean_unrequested_files: f64,
    /// Mean count of files actually broadcast.
    pub mean_broadcast_files: f64,
}

#[derive(Clone, Debug, Default)]
struct TrialOutcome {
    bc_revenue: f64,
    bc_users: u64,
    violations: u64,
    policy_payoff: f64,
    unicast_payoff: f64,
    negative_unicast: u64,
    undersubscribed: bool,
    unrequested_files: usize,
    broadcast_files: usize,
}

struct Prepared<'a> {
    setup: SimulationSetup<'a>,
    prices: PricePair,
    sampler: RequestSampler,
    /// Rank of each file in popularity order.
    popularity_rank: Vec<usize>,
    uc_capacity: f64,
    bc_rate: f64,
}

struct User {
    file: usize,
    rate: f64,
    threshold: f64,
}

impl Prepared<'_> {
    fn run(&self, seed: u64, trial: usize) -> Result<TrialOutcome> {
        let SimulationSetup {
            catalog,
            cell,
            rates,
            schedule,
            broadcast_bandwidth: w_b,
            ..
        } = self.setup;
        let delays = catalog.delays().expect("checked in simulate_revenue");
        let mut rng = seeding::stream(seed, Domain::Trial, trial as u64);
        let mut users: Vec<User> = (0..cell.users)
            .map(|_| {
                let file = self.sampler.sample(&mut rng);
                let rate = sample_user_rate(rates, &mut rng);
                let threshold = delays[file].sample(&mut rng);
                User {
                    file,
                    rate,
                    threshold,
                }
            })
            .collect();
        // Stable: users of the same file keep their draw order.
        users.sort_by_key(|u| self.popularity_rank[u.file]);

        let mut out = TrialOutcome::default();
        let mut uc_used = 0.0;
        let mut uc_demand = 0.0;
        let mut requested = HashSet::new();
        let mut broadcast = HashSet::new();
        let mut policy = Vec::with_capacity(users.len());
        let mut baseline = Vec::with_capacity(users.len());
        for u in &users {
            let f = catalog.sizes()[u.file];
            requested.insert(u.file);
            let uc = unicast_payoff(f, u.threshold, u.rate, self.prices.unicast)?;
            let need = (f / u.rate).ceil();
            uc_demand += need;
            let capacity_left = uc_used + need <= self.uc_capacity;
            let service = if w_b > 0.0 {
                let bc = broadcast_payoff(
                    f,
                    u.threshold,
                    self.bc_rate,
                    schedule.completion()[u.file],
                    w_b,
                    self.prices.broadcast,
                )?;
                (select_service(uc, bc, capacity_left), bc)
            } else {
                (Service::Unicast, f64::NEG_INFINITY)
            };
            let realized = match service {
                (Service::Unicast, _) => {
                    uc_used = (uc_used + need).min(self.uc_capacity);
                    uc
                }
                (Service::Broadcast, bc) => {
                    out.bc_users += 1;
                    out.bc_revenue += self.prices.broadcast * f;
                    broadcast.insert(u.file);
                    bc
                }
            };
            if realized < uc {
                out.violations += 1;
            }
            if uc < 0.0 {
                out.negative_unicast += 1;
            }
            policy.push(realized);
            baseline.push(uc);
        }
        out.policy_payoff = compensated_sum(policy);
        out.unicast_payoff = compensated_sum(baseline);
        out.undersubscribed = cell.users > 0 && uc_demand < self.uc_capacity;
        out.unrequested_files = catalog.len() - requested.len();
        out.broadcast_files = broadcast.len();
        Ok(out)
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of revenue under the selection policy.
///
/// Each trial draws every user's file, position and delay threshold, then
/// serves users in popularity order. A user needs `ceil(f / r)` slots of one
/// frequency unit on unicast; unicast capacity is `(W - W_b) T`. Broadcast
/// runs at the rate for all `N` users of the trial, and broadcast users pay
/// `P_b f` for their file.
///
/// Trials are independent streams of the master seed and are summed in
/// trial order, so the report is the same for either [`Execution`].
pub fn simulate_revenue(
    setup: SimulationSetup<'_>,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<SimulationReport> {
    let SimulationSetup {
        catalog,
        cell,
        rates,
        schedule,
        broadcast_bandwidth: w_b,
        broadcast_price,
    } = setup;
    cell.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "at least one trial is required".into(),
        ));
    }
    if catalog.delays().is_none() {
        return Err(Error::InvalidParameter(
            "catalog has no per-user delay distributions to sample".into(),
        ));
    }
    if schedule.len() != catalog.len() {
        return Err(Error::InvalidParameter(
            "schedule does not cover the catalog".into(),
        ));
    }
    if !(0.0..=cell.bandwidth).contains(&w_b) {
        return Err(Error::InvalidParameter(format!(
            "broadcast bandwidth {w_b} outside [0, {}]",
            cell.bandwidth
        )));
    }
    let prices = PricePair::new(cell.unicast_price, broadcast_price)?;
    let mut popularity_rank = vec![0; catalog.len()];
    for (rank, i) in crate::scheduler::order_by_weight(catalog.popularity())
        .into_iter()
        .enumerate()
    {
        popularity_rank[i] = rank;
    }
    let prepared = Prepared {
        setup,
        prices,
        sampler: RequestSampler::new(catalog),
        popularity_rank,
        uc_capacity: (cell.bandwidth - w_b) * cell.slots,
        bc_rate: broadcast_rate(rates, cell.users),
    };
    let outcomes = exec.try_map_range(trials, |t| prepared.run(seed, t))?;

    let uc_revenue = cell.unicast_price * (cell.bandwidth - w_b) * cell.slots;
    let bc: Vec<f64> = outcomes.iter().map(|o| o.bc_revenue).collect();
    let (bc_mean, stderr) = mean_and_stderr(&bc);
    let total_users = cell.users as f64 * trials as f64;
    let per_user = |x: f64| {
        if total_users > 0.0 {
            x / total_users
        } else {
            0.0
        }
    };
    let undersubscribed = outcomes.iter().filter(|o| o.undersubscribed).count();
    if undersubscribed > 0 {
        log::warn!(
            "unicast demand fit within capacity in {undersubscribed} of {trials} trials; \
             revenue still charges the full unicast capacity"
        );
    }
    let bc_users: u64 = outcomes.iter().map(|o| o.bc_users).sum();
    Ok(SimulationReport {
        revenue_mean: uc_revenue + bc_mean,
        revenue_stderr: stderr,
        bc_user_fraction: per_user(bc_users as f64),
        payoff_guarantee_violations: outcomes.iter().map(|o| o.violations).sum(),
        trials,
        seed,
        users: cell.users,
        broadcast_bandwidth: w_b,
        broadcast_price,
        uc_revenue,
        bc_revenue_mean: bc_mean,
        mean_policy_payoff: per_user(compensated_sum(outcomes.iter().map(|o| o.policy_payoff))),
        mean_unicast_payoff: per_user(compensated_sum(outcomes.iter().map(|o| o.unicast_payoff))),
        negative_unicast_payoff_users: outcomes.iter().map(|o| o.negative_unicast).sum(),
        undersubscribed_trials: undersubscribed,
        mean_unrequested_files: outcomes
            .iter()
            .map(|o| o.unrequested_files as f64)
            .sum::<f64>()
            / trials as f64,
        mean_broadcast_files: outcomes
            .iter()
            .map(|o| o.broadcast_files as f64)
            .sum::<f64>()
            / trials as f64,
    })
}
