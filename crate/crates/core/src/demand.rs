//! Periodic demand: a truncated Negative Binomial law per period index.
//!
//! For `x < M` the mass is `Γ(x+n)/(Γ(n) x!) q^n (1-q)^x` with
//! `q = n/(n+δ)`; the residual tail mass sits on `M`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// Negative Binomial parameters for one period index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    /// Target number of successes (any positive real).
    pub n: f64,
    /// Untruncated mean.
    pub mean: f64,
}

impl NbParams {
    pub fn success_prob(&self) -> f64 {
        self.n / (self.n + self.mean)
    }
}

/// Fitted weekday parameters (Monday first), rounded to one decimal.
pub const WEEKDAY_PARAMS: [NbParams; 7] = [
    NbParams { n: 3.5, mean: 5.7 },
    NbParams { n: 11.0, mean: 6.9 },
    NbParams { n: 7.2, mean: 6.5 },
    NbParams { n: 11.1, mean: 6.2 },
    NbParams { n: 5.9, mean: 5.8 },
    NbParams { n: 5.5, mean: 3.3 },
    NbParams { n: 2.2, mean: 3.4 },
];

/// Untruncated weekday demand moments `(mean, variance)` of the fitted laws.
///
/// `WEEKDAY_PARAMS` is these moments converted to `(n, mean)` and rounded; the rounding
/// moves truncated moments by up to 0.13, so the default model is built from
/// the moments directly.
pub const WEEKDAY_MOMENTS: [(f64, f64); 7] =
    [(5.66, 14.82), (6.92, 11.28), (6.50, 12.39), (6.17, 9.60), (5.82, 11.52), (3.33, 5.35), (3.43, 8.78)];

impl NbParams {
    /// Matches an untruncated mean and variance (`variance > mean`).
    pub fn from_moments(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0 && variance > mean) {
            return Err(Error::InvalidParameter(format!("negative binomial needs variance > mean > 0 (mean={mean}, variance={variance})")));
        }
        Ok(Self { n: mean * mean / (variance - mean), mean })
    }
}

/// Weekday parameters recovered from `WEEKDAY_MOMENTS`.
pub fn weekday_fit() -> Vec<NbParams> {
    WEEKDAY_MOMENTS.iter().map(|&(m, v)| NbParams::from_moments(m, v).expect("fitted moments are overdispersed")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DemandKind {
    NegativeBinomial(Vec<NbParams>),
    /// Point mass at `value` in every period; used for closed-form tests.
    PointMass {
        period: usize,
        value: usize,
    },
}

/// Moments of the truncated law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// Variance over mean (index of dispersion).
    pub dispersion: f64,
}

#[derive(Debug, Clone)]
pub struct PeriodicDemandModel {
    kind: DemandKind,
    truncation: usize,
    pmf: Vec<Vec<f64>>,
    cdf: Vec<Vec<f64>>,
}

impl PeriodicDemandModel {
    pub fn negative_binomial(params: Vec<NbParams>, truncation: usize) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidParameter("demand period must be at least 1".into()));
        }
        if truncation == 0 {
            return Err(Error::InvalidParameter("demand truncation M must be at least 1".into()));
        }
        for (tau, p) in params.iter().enumerate() {
            if !(p.n > 0.0 && p.n.is_finite() && p.mean > 0.0 && p.mean.is_finite()) {
                return Err(Error::InvalidParameter(format!("period {tau}: need n > 0 and mean > 0, got n={}, mean={}", p.n, p.mean)));
            }
        }
        let pmf = params.iter().map(|p| truncated_nb_pmf(*p, truncation)).collect();
        Ok(Self::from_pmf(DemandKind::NegativeBinomial(params), truncation, pmf))
    }

    /// The seven-weekday model with the fitted (unrounded) parameters.
    pub fn weekday(truncation: usize) -> Self {
        Self::negative_binomial(weekday_fit(), truncation).expect("table parameters are valid")
    }

    /// The seven-weekday model with the rounded parameters.
    pub fn weekday_rounded(truncation: usize) -> Self {
        Self::negative_binomial(WEEKDAY_PARAMS.to_vec(), truncation).expect("table parameters are valid")
    }

    /// Fitted parameters with both `n` and the mean doubled (doubles mean and variance).
    pub fn weekday_doubled(truncation: usize) -> Self {
        let params = weekday_fit().iter().map(|p| NbParams { n: 2.0 * p.n, mean: 2.0 * p.mean }).collect();
        Self::negative_binomial(params, truncation).expect("table parameters are valid")
    }

    pub fn point_mass(period: usize, value: usize, truncation: usize) -> Result<Self> {
        if period == 0 || truncation == 0 || value > truncation {
            return Err(Error::InvalidParameter(format!(
                "point mass needs period >= 1 and value <= M (period={period}, value={value}, M={truncation})"
            )));
        }
        let mut row = vec![0.0; truncation + 1];
        row[value] = 1.0;
        Ok(Self::from_pmf(DemandKind::PointMass { period, value }, truncation, vec![row; period]))
    }

    fn from_pmf(kind: DemandKind, truncation: usize, pmf: Vec<Vec<f64>>) -> Self {
        let cdf = pmf
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                let mut c: Vec<f64> = row
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                *c.last_mut().unwrap() = 1.0;
                c
            })
            .collect();
        Self { kind, truncation, pmf, cdf }
    }

    pub fn kind(&self) -> &DemandKind {
        &self.kind
    }

    /// Number of period indices (γ).
    pub fn period(&self) -> usize {
        self.pmf.len()
    }

    /// Largest demand value (M).
    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn pmf(&self, tau: usize, x: usize) -> Result<f64> {
        if tau >= self.period() || x > self.truncation {
            return domain(format!("pmf({tau}, {x}) outside period 0..{} / support 0..={}", self.period(), self.truncation));
        }
        Ok(self.pmf[tau][x])
    }

    /// Whole mass row for period `tau` (panics if out of range).
    pub fn row(&self, tau: usize) -> &[f64] {
        &self.pmf[tau]
    }

    pub fn cdf_row(&self, tau: usize) -> &[f64] {
        &self.cdf[tau]
    }

    /// Inversion sampler: the smallest `x` with `F(x) > u`.
    pub fn sample(&self, tau: usize, u: f64) -> usize {
        let c = &self.cdf[tau];
        c.partition_point(|&f| f <= u).min(self.truncation)
    }

    pub fn effective_moments(&self, tau: usize) -> Moments {
        let row = &self.pmf[tau];
        let mean: f64 = row.iter().enumerate().map(|(x, p)| x as f64 * p).sum();
        let variance: f64 = row.iter().enumerate().map(|(x, p)| (x as f64 - mean).powi(2) * p).sum();
        Moments { mean, variance, dispersion: variance / mean }
    }
}

fn truncated_nb_pmf(p: NbParams, truncation: usize) -> Vec<f64> {
    let q = p.success_prob();
    let ln_q = q.ln();
    let ln_1mq = (1.0 - q).ln();
    let ln_gn = ln_gamma(p.n);
    let mut row: Vec<f64> = (0..truncation)
        .map(|x| {
            let xf = x as f64;
            (ln_gamma(xf + p.n) - ln_gn - ln_gamma(xf + 1.0) + p.n * ln_q + xf * ln_1mq).exp()
        })
        .collect();
    let head: f64 = row.iter().sum();
    row.push((1.0 - head).max(0.0));
    row
}
