//! Order-size-dependent remaining shelf-life of delivered units.
//!
//! Each unit of an order of size `z` independently has remaining shelf-life
//! `k ∈ {1..m}` with probability `p_k(z)`, where the log-odds against `k = 1`
//! are affine in `z`. The delivery vector is therefore Multinomial(z, p(z)).
//!
//! Vectors indexed by shelf-life are stored ascending: index `k - 1` holds
//! category `k`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShelfLifeModel {
    /// Multinomial logit; `intercepts[k-2]`, `slopes[k-2]` belong to category `k ∈ {2..m}`.
    Logit { intercepts: Vec<f64>, slopes: Vec<f64> },
    /// Every unit arrives with the maximum shelf-life `m`.
    Deterministic { m: usize },
}

impl ShelfLifeModel {
    pub fn logit(intercepts: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if intercepts.is_empty() || intercepts.len() != slopes.len() {
            return Err(Error::InvalidParameter(format!(
                "logit needs m-1 >= 1 intercepts and as many slopes (got {} and {})",
                intercepts.len(),
                slopes.len()
            )));
        }
        if intercepts.iter().chain(&slopes).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("logit coefficients must be finite".into()));
        }
        Ok(Self::Logit { intercepts, slopes })
    }

    /// Order-size-independent logit (all slopes zero).
    pub fn exogenous(intercepts: Vec<f64>) -> Result<Self> {
        let slopes = vec![0.0; intercepts.len()];
        Self::logit(intercepts, slopes)
    }

    pub fn deterministic(m: usize) -> Self {
        assert!(m >= 2, "maximum shelf-life must be at least 2");
        Self::Deterministic { m }
    }

    pub fn max_shelf_life(&self) -> usize {
        match self {
            Self::Logit { intercepts, .. } => intercepts.len() + 1,
            Self::Deterministic { m } => *m,
        }
    }

    pub fn is_exogenous(&self) -> bool {
        match self {
            Self::Logit { slopes, .. } => slopes.iter().all(|&s| s == 0.0),
            Self::Deterministic { .. } => true,
        }
    }

    /// `p_k(z)` for `k = 1..m` (ascending).
    pub fn probabilities(&self, z: usize) -> Vec<f64> {
        match self {
            Self::Logit { intercepts, slopes } => {
                let zf = z as f64;
                let mut expo = Vec::with_capacity(intercepts.len() + 1);
                expo.push(0.0);
                expo.extend(intercepts.iter().zip(slopes).map(|(c0, c1)| c0 + c1 * zf));
                let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = expo.iter().map(|e| (e - top).exp()).collect();
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            Self::Deterministic { m } => {
                let mut p = vec![0.0; *m];
                p[m - 1] = 1.0;
                p
            }
        }
    }

    /// Whether category `k` (1-based) can ever receive units.
    pub fn category_possible(&self, k: usize) -> bool {
        match self {
            Self::Logit { .. } => true,
            Self::Deterministic { m } => k == *m,
        }
    }

    /// Multinomial mass of delivery `y` for an order of size `z`.
    pub fn delivery_pmf(&self, z: usize, y: &DeliveryVector) -> Result<f64> {
        let m = self.max_shelf_life();
        if y.counts.len() != m {
            return domain(format!("delivery vector has {} categories, model has {m}", y.counts.len()));
        }
        if y.total() != z {
            return domain(format!("delivery counts sum to {}, order size is {z}", y.total()));
        }
        Ok(multinomial_pmf(z, &y.counts, &self.probabilities(z)))
    }

    /// Inverts the first `z` uniforms against `p(z)`, scanning categories from
    /// the freshest (`m`) down to `1`.
    pub fn sample_delivery(&self, z: usize, uniforms: &[f64]) -> Result<DeliveryVector> {
        if uniforms.len() < z {
            return domain(format!("need {z} uniforms for an order of {z}, got {}", uniforms.len()));
        }
        let p = self.probabilities(z);
        let cum = descending_cumulative(&p);
        let mut counts = vec![0u32; p.len()];
        for &u in &uniforms[..z] {
            counts[invert_descending(&cum, u)] += 1;
        }
        Ok(DeliveryVector { counts })
    }

    /// All deliveries of positive probability for order size `z`.
    pub fn support(&self, z: usize) -> Vec<(DeliveryVector, f64)> {
        let p = self.probabilities(z);
        let m = p.len();
        let mut out = Vec::new();
        let mut counts = vec![0u32; m];
        compositions(z, m, 0, &mut counts, &mut |c| {
            let prob = multinomial_pmf(z, c, &p);
            if prob > 0.0 {
                out.push((DeliveryVector { counts: c.to_vec() }, prob));
            }
        });
        out
    }

    /// Number of outcomes `support(z)` would visit before filtering zeros.
    pub fn support_size(&self, z: usize) -> usize {
        match self {
            Self::Deterministic { .. } => 1,
            Self::Logit { .. } => binomial(z + self.max_shelf_life() - 1, self.max_shelf_life() - 1),
        }
    }
}

/// Remaining shelf-life counts of one delivery, ascending by shelf-life.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeliveryVector {
    pub counts: Vec<u32>,
}

impl DeliveryVector {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// Builds from `(y_m, ..., y_1)`.
    pub fn from_freshest_first(y: &[u32]) -> Self {
        Self { counts: y.iter().rev().cloned().collect() }
    }

    pub fn zeros(m: usize) -> Self {
        Self { counts: vec![0; m] }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Units with remaining shelf-life `k` (1-based).
    pub fn get(&self, k: usize) -> u32 {
        self.counts[k - 1]
    }
}

/// Cumulative sums of `p` visited in the order `m, m-1, ..., 1`.
pub(crate) fn descending_cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum: Vec<f64> = p
        .iter()
        .rev()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    *cum.last_mut().unwrap() = f64::INFINITY;
    cum
}

/// Category index (ascending, 0-based) for uniform `u` given `descending_cumulative` output.
#[inline]
pub(crate) fn invert_descending(cum: &[f64], u: f64) -> usize {
    let m = cum.len();
    let mut j = 0;
    while u >= cum[j] {
        j += 1;
    }
    m - 1 - j
}

/// Precomputed inversion tables for every order size `0..=max_order`.
#[derive(Debug, Clone)]
pub struct DeliverySampler {
    cum: Vec<Vec<f64>>,
    m: usize,
}

impl DeliverySampler {
    pub fn new(model: &ShelfLifeModel, max_order: usize) -> Self {
        let cum = (0..=max_order).map(|z| descending_cumulative(&model.probabilities(z))).collect();
        Self { cum, m: model.max_shelf_life() }
    }

    /// Writes counts (ascending shelf-life) of the delivery for order `z` into `out`.
    #[inline]
    pub fn sample_into(&self, z: usize, uniforms: &[f64], out: &mut [u32]) {
        out[..self.m].iter_mut().for_each(|c| *c = 0);
        let cum = &self.cum[z];
        for &u in &uniforms[..z] {
            out[invert_descending(cum, u)] += 1;
        }
    }
}

pub(crate) fn multinomial_pmf(z: usize, counts: &[u32], p: &[f64]) -> f64 {
    if z == 0 {
        return 1.0;
    }
    let mut ln = ln_gamma(z as f64 + 1.0);
    for (&c, &pk) in counts.iter().zip(p) {
        if c == 0 {
            continue;
        }
        if pk <= 0.0 {
            return 0.0;
        }
        ln += c as f64 * pk.ln() - ln_gamma(c as f64 + 1.0);
    }
    ln.exp()
}

fn compositions(rest: usize, m: usize, i: usize, buf: &mut [u32], f: &mut impl FnMut(&[u32])) {
    if i == m - 1 {
        buf[i] = rest as u32;
        f(buf);
        return;
    }
    for c in 0..=rest {
        buf[i] = c as u32;
        compositions(rest - c, m, i + 1, buf, f);
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
