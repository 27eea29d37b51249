//! Two-region spectral-efficiency model.
//!
//! A cell is split into a high-efficiency inner region and a low-efficiency
//! outer region. Unicast adapts to each user; broadcast must serve the worst
//! user among its audience, so its average efficiency falls toward `r_low`
//! as the audience grows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    /// Spectral efficiency in the high region.
    pub r_high: f64,
    /// Spectral efficiency in the low region.
    pub r_low: f64,
    /// Probability that a user sits in the high region.
    pub prob_high: f64,
}

impl RateModel {
    pub fn new(r_high: f64, r_low: f64, prob_high: f64) -> Result<Self> {
        if !(r_low > 0.0 && r_low <= r_high && r_high.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rates must satisfy 0 < r_low <= r_high, got r_low={r_low}, r_high={r_high}"
            )));
        }
        if !(0.0..=1.0).contains(&prob_high) {
            return Err(Error::InvalidParameter(format!(
                "prob_high must lie in [0, 1], got {prob_high}"
            )));
        }
        Ok(Self {
            r_high,
            r_low,
            prob_high,
        })
    }

    /// Builds the model from the low/high area ratio `|A_l| / |A_h|`.
    pub fn from_area_ratio(r_high: f64, r_low: f64, area_ratio: f64) -> Result<Self> {
        if !(area_ratio >= 0.0 && area_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "area ratio must be finite and non-negative, got {area_ratio}"
            )));
        }
        Self::new(r_high, r_low, prob_high_from_area_ratio(area_ratio))
    }

    /// Every rate a user can be assigned, i.e. the support of
    /// [`sample_user_rate`].
    pub fn support(&self) -> impl Iterator<Item = f64> + '_ {
        let high = (self.prob_high > 0.0).then_some(self.r_high);
        let low = (self.prob_high < 1.0).then_some(self.r_low);
        high.into_iter().chain(low)
    }
}

/// `1 / (1 + rho)` for an area ratio `rho = |A_l| / |A_h|`.
pub fn prob_high_from_area_ratio(area_ratio: f64) -> f64 {
    1.0 / (1.0 + area_ratio)
}

/// Average unicast efficiency.
pub fn unicast_rate(model: &RateModel) -> f64 {
    model.r_low + (model.r_high - model.r_low) * model.prob_high
}

/// Average broadcast efficiency for an audience of `n_broadcast` users.
///
/// The broadcast runs at the high rate only when every listener is in the
/// high region. With no listeners this is `r_high`.
pub fn broadcast_rate(model: &RateModel, n_broadcast: u64) -> f64 {
    let all_high = model.prob_high.powf(n_broadcast as f64);
    model.r_low + (model.r_high - model.r_low) * all_high
}

/// Draws one user's unicast efficiency.
pub fn sample_user_rate<R: Rng + ?Sized>(model: &RateModel, rng: &mut R) -> f64 {
    if rng.random_bool(model.prob_high) {
        model.r_high
    } else {
        model.r_low
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lte() -> RateModel {
        RateModel::new(2.4, 1.32, 0.1).unwrap()
    }

    #[test]
    fn unicast_examples() {
        assert_eq!(unicast_rate(&RateModel::new(2.4, 2.4, 0.37).unwrap()), 2.4);
        assert_abs_diff_eq!(unicast_rate(&lte()), 1.428, epsilon = 1e-12);
        assert_eq!(unicast_rate(&RateModel::new(2.0, 1.0, 1.0).unwrap()), 2.0);
    }

    #[test]
    fn broadcast_examples() {
        let m = lte();
        assert_eq!(broadcast_rate(&m, 1), unicast_rate(&m));
        assert_abs_diff_eq!(broadcast_rate(&m, 3), 1.32108, epsilon = 1e-12);
        assert_abs_diff_eq!(broadcast_rate(&m, 1_000_000), 1.32, epsilon = 1e-12);
        assert_eq!(broadcast_rate(&m, 0), m.r_high);
    }

    #[test]
    fn area_ratio_nine_gives_one_tenth() {
        let m = RateModel::from_area_ratio(2.4, 1.32, 9.0).unwrap();
        assert_abs_diff_eq!(m.prob_high, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(RateModel::new(1.0, 2.0, 0.5).is_err());
        assert!(RateModel::new(1.0, 0.0, 0.5).is_err());
        assert!(RateModel::new(2.0, 1.0, 1.5).is_err());
        assert!(RateModel::from_area_ratio(2.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn sampling_degenerate_and_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let always = RateModel::new(2.0, 1.0, 1.0).unwrap();
        let never = RateModel::new(2.0, 1.0, 0.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_user_rate(&always, &mut rng), 2.0);
            assert_eq!(sample_user_rate(&never, &mut rng), 1.0);
        }
        let m = lte();
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_user_rate(&m, &mut rng) == m.r_high)
            .count() as f64;
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        assert!((hits - 0.1 * n as f64).abs() <= 3.0 * sigma, "hits={hits}");
    }

    fn models() -> impl Strategy<Value = RateModel> {
        (0.1..10.0f64, 0.0..1.0f64, 0.0..=1.0f64)
            .prop_map(|(rh, frac, q)| RateModel::new(rh, rh * (1.0 - frac).max(1e-3), q).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn broadcast_rate_monotone_to_low(m in models(), n in 1u64..10_000) {
            let r_u = unicast_rate(&m);
            let a = broadcast_rate(&m, n);
            let b = broadcast_rate(&m, n + 1);
            prop_assert!(b <= a);
            if (m.r_high - m.r_low) * m.prob_high.powf(n as f64) * (1.0 - m.prob_high) > 1e-9 * m.r_high {
                prop_assert!(b < a);
            }
            prop_assert!(a <= r_u && a >= m.r_low);
            if m.prob_high < 1.0 {
                prop_assert!((broadcast_rate(&m, 1 << 40) - m.r_low).abs() <= 1e-12 * m.r_high);
            }
        }

        #[test]
        fn unicast_rate_is_affine(m in models()) {
            let r_u = unicast_rate(&m);
            prop_assert_eq!(r_u, m.r_low + (m.r_high - m.r_low) * m.prob_high);
            prop_assert!(m.r_low <= r_u && r_u <= m.r_high);
        }
    }
}
