//! Content demand: Zipf popularity over a finite catalog and the per-file
//! aggregate delay tolerance.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_user_rate, RateModel};
use crate::numeric::compensated_sum;
use crate::seeding::{self, Domain};
use crate::{Error, Execution, Result};

/// Default number of Monte Carlo draws per file for the delay tolerance.
pub const DEFAULT_THETA_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZipfParams {
    pub exponent: f64,
    pub files: usize,
}

impl ZipfParams {
    pub fn new(exponent: f64, files: usize) -> Result<Self> {
        let params = Self { exponent, files };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Zipf exponent must be positive, got {}",
                self.exponent
            )));
        }
        if self.files == 0 {
            return Err(Error::InvalidParameter(
                "catalog must hold at least one file".into(),
            ));
        }
        Ok(())
    }
}

/// `p_i = i^-gamma / H` for `i = 1..=M`.
pub fn zipf_pmf(params: &ZipfParams) -> Result<Vec<f64>> {
    params.validate()?;
    let weights: Vec<f64> = (1..=params.files)
        .map(|i| (i as f64).powf(-params.exponent))
        .collect();
    let h = compensated_sum(weights.iter().copied());
    Ok(weights.into_iter().map(|w| w / h).collect())
}

/// Per-user delay threshold for one file, uniform on `[lo, hi]`.
///
/// `lo == hi` is a point mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayThreshold {
    pub lo: f64,
    pub hi: f64,
}

impl DelayThreshold {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delay threshold bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(value: f64) -> Result<Self> {
        Self::new(value, value)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * rng.random::<f64>()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileSpec {
    pub size: f64,
    pub delay: DelayThreshold,
}

impl FileSpec {
    pub fn new(size: f64, delay: DelayThreshold) -> Result<Self> {
        if !(size > 0.0 && size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "file size must be positive, got {size}"
            )));
        }
        Ok(Self { size, delay })
    }

    /// Checks that every reachable (rate, threshold) pair makes the file
    /// delay-sensitive: `f / r > theta + 1`.
    fn check_delay_sensitive(&self, rates: &RateModel) -> Result<()> {
        let r_max = rates.support().fold(0.0, f64::max);
        if self.size / r_max > self.delay.hi + 1.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "size {} at rate {} is not delay-sensitive for thresholds up to {} (need f/r > theta + 1)",
                self.size, r_max, self.delay.hi
            )))
        }
    }
}

fn estimate_theta(
    file: &FileSpec,
    rates: &RateModel,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "at least one sample is required".into(),
        ));
    }
    let mut terms = Vec::with_capacity(samples);
    for draw in 0..samples {
        let r = sample_user_rate(rates, rng);
        let t = file.delay.sample(rng);
        if file.size / r <= t + 1.0 {
            return Err(Error::Precondition(format!(
                "draw {draw}: f={}, r={r}, theta={t} violates f/r > theta + 1",
                file.size
            )));
        }
        terms.push(1.0 / (file.size - r * t));
    }
    Ok(compensated_sum(terms) / samples as f64)
}

/// Monte Carlo estimate of `E[1 / (f - r * theta)]` over user position and
/// delay threshold.
pub fn aggregate_delay_tolerance(
    file: &FileSpec,
    rates: &RateModel,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = seeding::stream(seed, Domain::DelayTolerance, 0);
    estimate_theta(file, rates, samples, &mut rng)
}

/// Alternative tolerance `E[1 / (f / r - theta)]`, kept for sensitivity
/// checks against the default form.
#[cfg(test)]
pub(crate) fn aggregate_delay_tolerance_time_form(
    file: &FileSpec,
    rates: &RateModel,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = seeding::stream(seed, Domain::DelayTolerance, 0);
    let terms = (0..samples).map(|_| {
        let r = sample_user_rate(rates, &mut rng);
        let t = file.delay.sample(&mut rng);
        1.0 / (file.size / r - t)
    });
    compensated_sum(terms.collect::<Vec<_>>()) / samples as f64
}

/// Settings for the Monte Carlo tolerance estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimation {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ThetaEstimation {
    fn default() -> Self {
        Self {
            samples: DEFAULT_THETA_SAMPLES,
            seed: 0,
        }
    }
}

/// Files with their popularity and aggregate delay tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct FileCatalog {
    sizes: Vec<f64>,
    popularity: Vec<f64>,
    theta: Vec<f64>,
    delays: Option<Vec<DelayThreshold>>,
    mean_size: f64,
}

impl FileCatalog {
    /// Builds a catalog, estimating each file's tolerance on its own random
    /// stream (`stream = file index`), so the result does not depend on
    /// `exec` and a prefix of a larger catalog reproduces a smaller one.
    pub fn build(
        files: &[FileSpec],
        zipf: &ZipfParams,
        rates: &RateModel,
        estimation: ThetaEstimation,
        exec: Execution,
    ) -> Result<Self> {
        if files.len() != zipf.files {
            return Err(Error::InvalidParameter(format!(
                "{} file specs for a catalog of {}",
                files.len(),
                zipf.files
            )));
        }
        for (i, file) in files.iter().enumerate() {
            file.check_delay_sensitive(rates)
                .map_err(|e| Error::Precondition(format!("file {}: {e}", i + 1)))?;
        }
        let popularity = zipf_pmf(zipf)?;
        let theta = exec.try_map_range(files.len(), |i| {
            let mut rng = seeding::stream(estimation.seed, Domain::DelayTolerance, i as u64);
            estimate_theta(&files[i], rates, estimation.samples, &mut rng)
        })?;
        let mut catalog =
            Self::from_columns(files.iter().map(|f| f.size).collect(), popularity, theta)?;
        catalog.delays = Some(files.iter().map(|f| f.delay).collect());
        Ok(catalog)
    }

    /// Builds a catalog from precomputed columns. Such a catalog carries no
    /// per-user delay distributions and cannot be simulated.
    pub fn from_columns(sizes: Vec<f64>, popularity: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let m = sizes.len();
        if m == 0 {
            return Err(Error::InvalidParameter(
                "catalog must hold at least one file".into(),
            ));
        }
        if popularity.len() != m || theta.len() != m {
            return Err(Error::InvalidParameter(format!(
                "column lengths differ: sizes {m}, popularity {}, theta {}",
                popularity.len(),
                theta.len()
            )));
        }
        if let Some(i) = sizes.iter().position(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "file {} has size {}",
                i + 1,
                sizes[i]
            )));
        }
        if let Some(i) = theta.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "file {} has tolerance {}",
                i + 1,
                theta[i]
            )));
        }
        if popularity.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter(
                "popularity must be non-negative".into(),
            ));
        }
        let total = compensated_sum(popularity.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "popularity sums to {total}, not 1"
            )));
        }
        let mean_size = compensated_sum(sizes.iter().zip(&popularity).map(|(f, p)| f * p));
        Ok(Self {
            sizes,
            popularity,
            theta,
            delays: None,
            mean_size,
        })
    }

    /// The first `zipf.files` files re-weighted by a new Zipf law. Sizes,
    /// tolerances and delay distributions are kept.
    pub fn reweighted(&self, zipf: &ZipfParams) -> Result<Self> {
        if zipf.files > self.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot take {} files from a catalog of {}",
                zipf.files,
                self.len()
            )));
        }
        let m = zipf.files;
        let mut catalog = Self::from_columns(
            self.sizes[..m].to_vec(),
            zipf_pmf(zipf)?,
            self.theta[..m].to_vec(),
        )?;
        catalog.delays = self.delays.as_ref().map(|d| d[..m].to_vec());
        Ok(catalog)
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn delays(&self) -> Option<&[DelayThreshold]> {
        self.delays.as_deref()
    }

    /// Mean requested size `F = sum f_i p_i`.
    pub fn mean_size(&self) -> f64 {
        self.mean_size
    }

    pub fn max_size(&self) -> f64 {
        self.sizes.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `i, f_i, p_i, theta_i` with 1-based `i`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            i: usize,
            f_i: f64,
            p_i: f64,
            theta_i: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for i in 0..self.len() {
            w.serialize(Row {
                i: i + 1,
                f_i: self.sizes[i],
                p_i: self.popularity[i],
                theta_i: self.theta[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws file indices (0-based) from a catalog's popularity.
#[derive(Clone, Debug)]
pub struct RequestSampler {
    alias: WeightedAliasIndex<f64>,
}

impl RequestSampler {
    pub fn new(catalog: &FileCatalog) -> Self {
        let alias = WeightedAliasIndex::new(catalog.popularity.clone())
            .expect("catalog popularity is a validated pmf");
        Self { alias }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }
}

/// Request counts `n_i` for `users` independent requests.
pub fn sample_requests(catalog: &FileCatalog, users: u64, seed: u64) -> Vec<u64> {
    let mut counts = vec![0u64; catalog.len()];
    if users == 0 {
        return counts;
    }
    let sampler = RequestSampler::new(catalog);
    let mut rng = seeding::stream(seed, Domain::Requests, 0);
    for _ in 0..users {
        counts[sampler.sample(&mut rng)] += 1;
    }
    counts
}
