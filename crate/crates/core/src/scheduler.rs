//! Broadcast queue ordering.
//!
//! Files are broadcast back to back in one queue; a file's completion size
//! `s_i` is the total size sent up to and including it. File indices in this
//! API are 0-based; exported tables use 1-based indices.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use itertools::Itertools;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::demand::FileCatalog;
use crate::optimizer::{self, CellConfig};
use crate::{Error, Execution, Result};

/// Default cap on fixed-point iterations of [`optimal_schedule`].
pub const DEFAULT_SCHEDULE_ITERATIONS: usize = 1000;

/// Largest catalog accepted by the permutation oracle.
pub const MAX_BRUTE_FORCE_FILES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    order: Vec<usize>,
    completion: Vec<f64>,
}

impl Schedule {
    pub fn new(order: Vec<usize>, sizes: &[f64]) -> Result<Self> {
        let completion = cumulative_sizes(&order, sizes)?;
        Ok(Self { order, completion })
    }

    /// File indices in broadcast order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Completion size `s_i`, indexed by file.
    pub fn completion(&self) -> &[f64] {
        &self.completion
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Writes `position, file, f_i, s_i, weight` (1-based position and file).
    pub fn write_csv<W: Write>(
        &self,
        catalog: &FileCatalog,
        weights: &[f64],
        out: W,
    ) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            position: usize,
            file: usize,
            f_i: f64,
            s_i: f64,
            weight: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for (pos, &i) in self.order.iter().enumerate() {
            w.serialize(Row {
                position: pos + 1,
                file: i + 1,
                f_i: catalog.sizes()[i],
                s_i: self.completion[i],
                weight: weights[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Serialize for Schedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let order: Vec<usize> = self.order.iter().map(|i| i + 1).collect();
        let mut st = serializer.serialize_struct("Schedule", 2)?;
        st.serialize_field("order", &order)?;
        st.serialize_field("completion_by_file", &self.completion)?;
        st.end()
    }
}

fn check_permutation(order: &[usize], m: usize) -> Result<()> {
    if order.len() != m {
        return Err(Error::InvalidPermutation(format!(
            "order has {} entries for {m} files",
            order.len()
        )));
    }
    let mut seen = vec![false; m];
    for &i in order {
        if i >= m {
            return Err(Error::InvalidPermutation(format!(
                "file index {i} out of range"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidPermutation(format!(
                "file index {i} appears twice"
            )));
        }
    }
    Ok(())
}

/// Completion sizes indexed by file: `s_i` is the sum of sizes scheduled up
/// to and including file `i`.
pub fn cumulative_sizes(order: &[usize], sizes: &[f64]) -> Result<Vec<f64>> {
    check_permutation(order, sizes.len())?;
    let mut s = vec![0.0; sizes.len()];
    let mut acc = 0.0;
    for &i in order {
        acc += sizes[i];
        s[i] = acc;
    }
    Ok(s)
}

/// Completion sizes that leave out the file's own size.
#[cfg(test)]
pub(crate) fn cumulative_sizes_exclusive(order: &[usize], sizes: &[f64]) -> Result<Vec<f64>> {
    let mut s = cumulative_sizes(order, sizes)?;
    for (si, f) in s.iter_mut().zip(sizes) {
        *si -= f;
    }
    Ok(s)
}

/// Indices sorted by descending weight, ties by ascending index.
pub fn order_by_weight(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order
}

/// `theta_i p_i (1 - P_u f_i / 2)`.
pub fn suboptimal_weights(catalog: &FileCatalog, p_u: f64) -> Vec<f64> {
    itertools::izip!(catalog.theta(), catalog.popularity(), catalog.sizes())
        .map(|(t, p, f)| t * p * (1.0 - p_u * f / 2.0))
        .collect()
}

pub fn suboptimal_schedule(catalog: &FileCatalog, p_u: f64) -> Schedule {
    let order = order_by_weight(&suboptimal_weights(catalog, p_u));
    Schedule::new(order, catalog.sizes()).expect("sorted indices form a permutation")
}

/// Most popular first, the baseline without a scheduler.
pub fn popularity_schedule(catalog: &FileCatalog) -> Schedule {
    let order = order_by_weight(catalog.popularity());
    Schedule::new(order, catalog.sizes()).expect("sorted indices form a permutation")
}

fn smith_ratios(catalog: &FileCatalog, p_u: f64, p_b: f64) -> Vec<f64> {
    itertools::izip!(catalog.theta(), catalog.popularity(), catalog.sizes())
        .map(|(t, p, f)| t * p * (1.0 - (p_u - p_b) * f))
        .collect()
}

/// Smith ratio `c_i / f_i = theta_i p_i (1 - (P_u - P_b) f_i)`.
pub fn smith_weights(catalog: &FileCatalog, p_u: f64, p_b: f64) -> Result<Vec<f64>> {
    optimizer::check_small_files(catalog, p_u, p_b)?;
    Ok(smith_ratios(catalog, p_u, p_b))
}

/// Smith order without the small-file check. The exchange argument holds
/// for weights of either sign, so this still minimizes [`smith_cost`]'s
/// expression; only the revenue bound built on it needs the check.
pub(crate) fn smith_order_unchecked(catalog: &FileCatalog, p_u: f64, p_b: f64) -> Schedule {
    let order = order_by_weight(&smith_ratios(catalog, p_u, p_b));
    Schedule::new(order, catalog.sizes()).expect("sorted indices form a permutation")
}

pub fn smith_schedule(catalog: &FileCatalog, p_u: f64, p_b: f64) -> Result<Schedule> {
    let order = order_by_weight(&smith_weights(catalog, p_u, p_b)?);
    Schedule::new(order, catalog.sizes())
}

fn cost_of(order: &[usize], catalog: &FileCatalog, p_u: f64, p_b: f64) -> f64 {
    let (f, p, th) = (catalog.sizes(), catalog.popularity(), catalog.theta());
    let mut s = 0.0;
    let mut cost = 0.0;
    for &i in order {
        s += f[i];
        cost += s * th[i] * f[i] * p[i] * (1.0 - (p_u - p_b) * f[i]);
    }
    cost
}

/// `sum s_i theta_i f_i p_i (1 - (P_u - P_b) f_i)` for the given order.
pub fn smith_cost(order: &[usize], catalog: &FileCatalog, p_u: f64, p_b: f64) -> Result<f64> {
    check_permutation(order, catalog.len())?;
    optimizer::check_small_files(catalog, p_u, p_b)?;
    Ok(cost_of(order, catalog, p_u, p_b))
}

/// Minimum of `cost` over all permutations of `0..m`, returning the
/// lexicographically first minimizer. Work is split on the first element.
pub fn brute_force_min<F>(m: usize, exec: Execution, cost: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(&[usize]) -> f64 + Sync + Send,
{
    if m == 0 || m > MAX_BRUTE_FORCE_FILES {
        return Err(Error::InvalidParameter(format!(
            "permutation oracle supports 1..={MAX_BRUTE_FORCE_FILES} files, got {m}"
        )));
    }
    let per_head = exec.map_range(m, |head| {
        let rest: Vec<usize> = (0..m).filter(|&i| i != head).collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut order = Vec::with_capacity(m);
        for tail in rest.iter().copied().permutations(rest.len()) {
            order.clear();
            order.push(head);
            order.extend(tail);
            let c = cost(&order);
            if best.as_ref().is_none_or(|(_, b)| c < *b) {
                best = Some((order.clone(), c));
            }
        }
        best.expect("at least one permutation")
    });
    Ok(per_head
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("m >= 1"))
}

/// Exhaustive minimum of [`smith_cost`].
pub fn brute_force_smith(
    catalog: &FileCatalog,
    p_u: f64,
    p_b: f64,
    exec: Execution,
) -> Result<(Vec<usize>, f64)> {
    optimizer::check_small_files(catalog, p_u, p_b)?;
    brute_force_min(catalog.len(), exec, |o| cost_of(o, catalog, p_u, p_b))
}

/// Outcome of the price/order fixed point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalSchedule {
    pub schedule: Schedule,
    pub s_star: f64,
    /// Broadcast price implied by `s_star`.
    pub broadcast_price: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates between the closed-form broadcast price for the current order
/// and the Smith order for that price, starting from the suboptimal order.
///
/// Stops when the order repeats. On a cycle or after `max_iterations`, the
/// visited order with the largest lower bound is returned with
/// `converged = false`.
pub fn optimal_schedule_with(
    catalog: &FileCatalog,
    cell: &CellConfig,
    max_iterations: usize,
) -> Result<OptimalSchedule> {
    cell.validate()?;
    let p_u = cell.unicast_price;
    let w_b = optimizer::closed_form_wb(catalog, cell);
    let mut order = suboptimal_schedule(catalog, p_u).order;
    let mut seen = HashSet::new();
    let mut best: Option<(f64, OptimalSchedule)> = None;
    for iteration in 1..=max_iterations.max(1) {
        let schedule = Schedule::new(order, catalog.sizes())?;
        let s_star = optimizer::s_star(catalog, &schedule);
        let p_b = optimizer::closed_form_pb(catalog, cell, s_star)?;
        let next = smith_schedule(catalog, p_u, p_b)?.order;
        let stable = next == schedule.order;
        let candidate = OptimalSchedule {
            schedule,
            s_star,
            broadcast_price: p_b,
            iterations: iteration,
            converged: stable,
        };
        if stable {
            return Ok(candidate);
        }
        let l = optimizer::lower_bound_revenue(catalog, cell, p_b, w_b, &candidate.schedule)?;
        if best.as_ref().is_none_or(|(b, _)| l > *b) {
            best = Some((l, candidate));
        }
        if !seen.insert(next.clone()) {
            log::warn!("schedule fixed point cycles after {iteration} iterations");
            break;
        }
        order = next;
    }
    let (_, mut out) = best.expect("at least one iteration ran");
    out.converged = false;
    Ok(out)
}

pub fn optimal_schedule(catalog: &FileCatalog, cell: &CellConfig) -> Result<OptimalSchedule> {
    optimal_schedule_with(catalog, cell, DEFAULT_SCHEDULE_ITERATIONS)
}

/// Which broadcast order an experiment uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Optimal,
    Suboptimal,
    /// No scheduler: most popular first.
    None,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [Self::Optimal, Self::Suboptimal, Self::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Suboptimal => "suboptimal",
            Self::None => "none",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scheduler {s:?}; expected optimal, suboptimal or none"
                ))
            })
    }
}

/// A schedule together with the per-file weights it was sorted by.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedSchedule {
    pub schedule: Schedule,
    pub weights: Vec<f64>,
}

/// Builds the schedule of the given kind for `cell`.
pub fn schedule_for(
    kind: SchedulerKind,
    catalog: &FileCatalog,
    cell: &CellConfig,
) -> Result<RankedSchedule> {
    let p_u = cell.unicast_price;
    Ok(match kind {
        SchedulerKind::Suboptimal => RankedSchedule {
            schedule: suboptimal_schedule(catalog, p_u),
            weights: suboptimal_weights(catalog, p_u),
        },
        SchedulerKind::None => RankedSchedule {
            schedule: popularity_schedule(catalog),
            weights: catalog.popularity().to_vec(),
        },
        SchedulerKind::Optimal => {
            let opt = optimal_schedule(catalog, cell)?;
            if !opt.converged {
                log::warn!(
                    "optimal schedule did not reach a fixed point; using the best order seen"
                );
            }
            RankedSchedule {
                weights: smith_weights(catalog, p_u, opt.broadcast_price)?,
                schedule: opt.schedule,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(f: &[f64], p: &[f64], theta: &[f64]) -> FileCatalog {
        FileCatalog::from_columns(f.to_vec(), p.to_vec(), theta.to_vec()).unwrap()
    }

    fn cell(n: u64) -> CellConfig {
        CellConfig {
            bandwidth: 4.0,
            slots: 120.0,
            users: n,
            unicast_price: 2.6,
            unicast_rate: 1.428,
            broadcast_rate: 1.32,
            bc_cap_fraction: 1.0,
        }
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(cumulative_sizes(&[0], &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(
            cumulative_sizes(&[1, 0], &[3.0, 5.0]).unwrap(),
            vec![8.0, 5.0]
        );
        assert_eq!(
            cumulative_sizes(&[0, 1, 2], &[1.0; 3]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(
            cumulative_sizes_exclusive(&[1, 0], &[3.0, 5.0]).unwrap(),
            vec![5.0, 0.0]
        );
    }

    #[test]
    fn cumulative_rejects_bad_permutations() {
        for bad in [&[0, 0][..], &[0][..], &[0, 2][..], &[0, 1, 2][..]] {
            let err = cumulative_sizes(bad, &[1.0, 1.0]).unwrap_err();
            assert!(matches!(err, Error::InvalidPermutation(_)), "{bad:?}");
        }
    }

    #[test]
    fn suboptimal_examples() {
        let c = catalog(&[0.1, 0.1], &[0.6, 0.4], &[1.0, 1.0]);
        let w = suboptimal_weights(&c, 2.0);
        approx::assert_abs_diff_eq!(w[0], 0.54, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(w[1], 0.36, epsilon = 1e-15);
        assert_eq!(suboptimal_schedule(&c, 2.0).order(), &[0, 1]);

        let c = catalog(&[0.1, 0.1], &[0.5, 0.5], &[1.0, 2.0]);
        assert_eq!(suboptimal_schedule(&c, 2.0).order(), &[1, 0]);

        let c = catalog(&[0.3; 5], &[0.2; 5], &[1.5; 5]);
        assert_eq!(suboptimal_schedule(&c, 2.0).order(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn smith_cost_two_files() {
        // c = theta f p = [3, 1] with bracket 1 at P_b = P_u.
        let c = catalog(&[1.0, 2.0], &[0.75, 0.25], &[4.0, 2.0]);
        assert_eq!(smith_cost(&[0, 1], &c, 2.6, 2.6).unwrap(), 6.0);
        assert_eq!(smith_cost(&[1, 0], &c, 2.6, 2.6).unwrap(), 11.0);
        assert_eq!(smith_schedule(&c, 2.6, 2.6).unwrap().order(), &[0, 1]);
    }

    #[test]
    fn smith_cost_single_file() {
        let c = catalog(&[0.5], &[1.0], &[2.0]);
        let cost = smith_cost(&[0], &c, 1.0, 0.5).unwrap();
        assert_eq!(cost, 0.5 * 2.0 * 0.5 * 1.0 * (1.0 - 0.5 * 0.5));
    }

    #[test]
    fn smith_rejects_large_files() {
        let c = catalog(&[0.6, 0.1], &[0.5, 0.5], &[1.0, 1.0]);
        assert!(matches!(
            smith_cost(&[0, 1], &c, 2.0, 0.0),
            Err(Error::Precondition(_))
        ));
        assert!(smith_weights(&c, 2.0, 0.0).is_err());
    }

    #[test]
    fn smith_weights_reduce_to_theta_p_at_full_price() {
        let c = catalog(&[0.3, 0.7], &[0.6, 0.4], &[1.3, 2.1]);
        let w = smith_weights(&c, 2.6, 2.6).unwrap();
        assert_eq!(w, vec![1.3 * 0.6, 2.1 * 0.4]);
    }

    #[test]
    fn optimal_equal_sizes_converges_immediately() {
        let c = catalog(&[0.2; 4], &[0.4, 0.3, 0.2, 0.1], &[1.0, 2.0, 0.5, 3.0]);
        let opt = optimal_schedule(&c, &cell(50)).unwrap();
        assert!(opt.converged);
        assert_eq!(opt.iterations, 1);
        assert_eq!(opt.schedule.order(), suboptimal_schedule(&c, 2.6).order());
        assert_eq!(
            opt.schedule.order(),
            &order_by_weight(&[0.4, 0.6, 0.1, 0.3])
        );
    }

    #[test]
    fn brute_force_bounds() {
        assert!(brute_force_min(0, Execution::Sequential, |_| 0.0).is_err());
        assert!(brute_force_min(11, Execution::Sequential, |_| 0.0).is_err());
        let (o, c) = brute_force_min(3, Execution::Sequential, |_| 1.0).unwrap();
        assert_eq!((o, c), (vec![0, 1, 2], 1.0));
    }

    #[test]
    fn scheduler_kind_round_trips() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.as_str().parse::<SchedulerKind>().unwrap(), k);
        }
        assert!("fifo".parse::<SchedulerKind>().is_err());
    }

    #[test]
    fn schedule_csv_is_one_based() {
        let c = catalog(&[1.0, 2.0], &[0.75, 0.25], &[4.0, 2.0]);
        let s = Schedule::new(vec![1, 0], c.sizes()).unwrap();
        let mut out = Vec::new();
        s.write_csv(&c, &[0.5, 0.25], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "position,file,f_i,s_i,weight\n1,2,2.0,2.0,0.25\n2,1,1.0,3.0,0.5\n"
        );
    }

    fn random_catalog(max_m: usize) -> impl Strategy<Value = FileCatalog> {
        (1..=max_m).prop_flat_map(|m| {
            (
                proptest::collection::vec(0.01..0.3f64, m),
                proptest::collection::vec(0.01..1.0f64, m),
                proptest::collection::vec(0.1..5.0f64, m),
            )
                .prop_map(|(f, w, theta)| {
                    let total: f64 = w.iter().sum();
                    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
                    let rest: f64 = p[1..].iter().sum();
                    p[0] = 1.0 - rest;
                    FileCatalog::from_columns(f, p, theta).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn adjacent_swaps_never_help(c in random_catalog(30), pb_frac in 0.5..=1.0f64) {
            let p_u = 2.6;
            let p_b = p_u * pb_frac;
            let order = smith_schedule(&c, p_u, p_b).unwrap().order().to_vec();
            let base = smith_cost(&order, &c, p_u, p_b).unwrap();
            for k in 0..order.len().saturating_sub(1) {
                let mut o = order.clone();
                o.swap(k, k + 1);
                let swapped = smith_cost(&o, &c, p_u, p_b).unwrap();
                prop_assert!(swapped >= base * (1.0 - 1e-12), "swap {k}: {swapped} < {base}");
            }
        }

        #[test]
        fn suboptimal_invariant_to_theta_scale(c in random_catalog(30), scale in 1e-3..1e3f64) {
            let scaled = FileCatalog::from_columns(
                c.sizes().to_vec(),
                c.popularity().to_vec(),
                c.theta().iter().map(|t| t * scale).collect(),
            ).unwrap();
            let a = suboptimal_schedule(&c, 2.6);
            let b = suboptimal_schedule(&scaled, 2.6);
            prop_assert_eq!(a.order(), b.order());
        }

        #[test]
        fn schedule_completion_invariants(c in random_catalog(30), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order: Vec<usize> = (0..c.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let s = Schedule::new(order.clone(), c.sizes()).unwrap();
            let along: Vec<f64> = order.iter().map(|&i| s.completion()[i]).collect();
            prop_assert!(along.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(along[0], c.sizes()[order[0]]);
            let total: f64 = order.iter().map(|&i| c.sizes()[i]).sum();
            prop_assert_eq!(*along.last().unwrap(), total);
        }

        #[test]
        fn optimal_fixed_point_is_self_consistent(c in random_catalog(40), n in 1u64..400) {
            let cell = cell(n);
            let opt = optimal_schedule(&c, &cell).unwrap();
            if opt.converged {
                let p_b = optimizer::closed_form_pb(&c, &cell, opt.s_star).unwrap();
                let resorted = smith_schedule(&c, cell.unicast_price, p_b).unwrap();
                prop_assert_eq!(resorted.order(), opt.schedule.order());
            }
            let w_b = optimizer::closed_form_wb(&c, &cell);
            let sub = suboptimal_schedule(&c, cell.unicast_price);
            let l_opt = optimizer::lower_bound_revenue(&c, &cell, opt.broadcast_price, w_b, &opt.schedule).unwrap();
            let l_sub = optimizer::lower_bound_revenue(&c, &cell, opt.broadcast_price, w_b, &sub).unwrap();
            prop_assert!(l_opt >= l_sub - 1e-12 * l_sub.abs());
        }
    }
}
