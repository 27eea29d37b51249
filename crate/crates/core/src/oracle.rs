//! Grid searches over the revenue bound, used to check the analytic
//! maximizers at run time.

use serde::Serialize;

use crate::demand::FileCatalog;
use crate::optimizer::{admissible_price_floor, lower_bound_expression, CellConfig};
use crate::scheduler::Schedule;

/// Default points per axis.
pub const GRID_POINTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridMax {
    pub argmax: f64,
    pub value: f64,
    pub step: f64,
}

/// Best of `points` evenly spaced samples of `f` on `[lo, hi]`; the first
/// one wins ties.
pub fn grid_argmax(lo: f64, hi: f64, points: usize, f: impl Fn(f64) -> f64) -> GridMax {
    assert!(points >= 2, "a grid needs at least two points");
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = GridMax {
        argmax: lo,
        value: f64::NEG_INFINITY,
        step,
    };
    for k in 0..points {
        let x = if k + 1 == points {
            hi
        } else {
            lo + step * k as f64
        };
        let v = f(x);
        if v > best.value {
            best.argmax = x;
            best.value = v;
        }
    }
    best
}

/// Grid maximizer of the bound over `W_b` in `[0, beta W]`.
pub fn grid_argmax_wb(
    catalog: &FileCatalog,
    cell: &CellConfig,
    p_b: f64,
    schedule: &Schedule,
    points: usize,
) -> GridMax {
    grid_argmax(0.0, cell.bc_cap(), points, |w| {
        lower_bound_expression(catalog, cell, p_b, w, schedule)
    })
}

/// Grid maximizer of the bound over admissible prices `P_b`.
pub fn grid_argmax_pb(
    catalog: &FileCatalog,
    cell: &CellConfig,
    w_b: f64,
    schedule: &Schedule,
    points: usize,
) -> GridMax {
    let floor = admissible_price_floor(catalog, cell.unicast_price);
    grid_argmax(floor, cell.unicast_price, points, |p| {
        lower_bound_expression(catalog, cell, p, w_b, schedule)
    })
}
