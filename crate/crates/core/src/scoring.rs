//! Conformal p-values, a sliding one-sample Kolmogorov-Smirnov test against
//! the uniform law, and unification of the test significance into `[0, 1]`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Floor applied to a significance before taking its logarithm.
pub const SIGNIFICANCE_FLOOR: f64 = 1e-300;

/// Series terms below this magnitude end the summation.
const SERIES_TOLERANCE: f64 = 1e-10;

/// Below this `λ` the alternating series converges slowly; the dual theta
/// series is used instead.
const DUAL_SERIES_BELOW: f64 = 1.18;

/// Fraction of reference scores at least as large as `a`.
pub fn p_value<F: Scalar>(a: F, reference: &[F]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::DegenerateGroup("p-value against an empty reference".into()));
    }
    let at_least = reference.iter().filter(|&&r| r >= a).count();
    Ok(at_least as f64 / reference.len() as f64)
}

/// Leave-one-out p-value of every reference score, in input order.
pub fn loo_p_values<F: Scalar>(reference: &[F]) -> Result<Vec<f64>> {
    let n = reference.len();
    if n < 2 {
        return Err(Error::DegenerateGroup(format!(
            "leave-one-out p-values need at least 2 scores, got {n}"
        )));
    }
    let mut sorted = reference.to_vec();
    sorted.sort_by(scalar::cmp);
    let rest = (n - 1) as f64;
    Ok(reference
        .iter()
        .map(|a| {
            let below = sorted.partition_point(|s| s < a);
            // `n - below` counts a itself once
            (n - below - 1) as f64 / rest
        })
        .collect())
}

/// Ring of the most recent p-values.
#[derive(Clone, Debug)]
pub struct PValueWindow {
    ring: VecDeque<f64>,
    capacity: usize,
}

impl PValueWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("ks_window", "must be at least 1"));
        }
        Ok(Self {
            ring: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn push(&mut self, p: f64) {
        debug_assert!((0.0..=1.0).contains(&p));
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        self.ring.push_back(p);
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.ring.iter().copied()
    }

    /// `D` of the current contents; `None` while empty.
    pub fn statistic(&self) -> Option<f64> {
        let values: Vec<f64> = self.values().collect();
        ks_statistic(&values)
    }
}

/// `sup_p |F_n(p) - p|` for the empirical CDF of `values` against U(0, 1).
pub fn ks_statistic(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let above = (i + 1) as f64 / n - p;
            let below = p - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Some(d.clamp(0.0, 1.0))
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^(k-1) exp(-2 k² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < DUAL_SERIES_BELOW {
        // 1 - (√(2π)/λ) Σ exp(-(2k-1)² π² / (8 λ²))
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1.. {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * c).exp();
            cdf += term;
            if term <= SERIES_TOLERANCE * cdf {
                break;
            }
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1.. {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < SERIES_TOLERANCE {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic two-sided significance of `D` over `n` samples, with the
/// Stephens small-sample correction `λ = (√n + 0.12 + 0.11/√n) D`.
pub fn ks_significance(d: f64, n: usize) -> f64 {
    let sn = (n.max(1) as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// Running moments of regularized significances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Unifier {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Unifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation of the regularized values seen.
    pub fn std_dev(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }

    pub fn regularize(significance: f64) -> f64 {
        -significance.max(SIGNIFICANCE_FLOOR).ln()
    }

    /// Final score of `significance` against the current moments.
    pub fn transform(&self, significance: f64) -> f64 {
        let sd = self.std_dev();
        if sd == 0.0 {
            return 0.0;
        }
        let z = (Self::regularize(significance) - self.mean) / (sd * std::f64::consts::SQRT_2);
        scalar::erf(z).clamp(0.0, 1.0)
    }

    /// Absorb `significance` into the moments, then transform it.
    pub fn unify(&mut self, significance: f64) -> f64 {
        let reg = Self::regularize(significance);
        self.count += 1;
        let delta = reg - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (reg - self.mean);
        self.transform(significance)
    }
}

/// One scored point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreStep {
    pub p_value: f64,
    pub significance: f64,
    pub final_score: f64,
    /// Whether a K-S test ran at this step.
    pub tested: bool,
}

/// p-value ring, K-S test every `test_period` steps, and unifier.
///
/// Between tests the last significance and final score are held; the
/// unifier only absorbs tested significances.
#[derive(Clone, Debug)]
pub struct Scorer {
    window: PValueWindow,
    test_period: usize,
    unifier: Unifier,
    steps: u64,
    significance: f64,
    final_score: f64,
    bootstrapped: bool,
}

impl Scorer {
    pub fn new(ks_window: usize, test_period: usize) -> Result<Self> {
        if test_period == 0 {
            return Err(Error::config("test_period", "must be at least 1"));
        }
        Ok(Self {
            window: PValueWindow::new(ks_window)?,
            test_period,
            unifier: Unifier::new(),
            steps: 0,
            significance: 1.0,
            final_score: 0.0,
            bootstrapped: false,
        })
    }

    /// Seed the ring with the leave-one-out p-values of the first group.
    pub fn bootstrap<F: Scalar>(&mut self, reference: &[F]) -> Result<()> {
        for p in loo_p_values(reference)? {
            self.window.push(p);
        }
        self.bootstrapped = true;
        Ok(())
    }

    pub fn is_bootstrapped(&self) -> bool {
        self.bootstrapped
    }

    pub fn window(&self) -> &PValueWindow {
        &self.window
    }

    pub fn unifier(&self) -> &Unifier {
        &self.unifier
    }

    pub fn test_period(&self) -> usize {
        self.test_period
    }

    pub fn step<F: Scalar>(&mut self, a: F, reference: &[F]) -> Result<ScoreStep> {
        if !self.bootstrapped {
            return Err(Error::Contract("scorer used before bootstrap".into()));
        }
        let p = p_value(a, reference)?;
        self.window.push(p);
        let tested = self.steps % self.test_period as u64 == 0;
        self.steps += 1;
        if tested {
            let d = self.window.statistic().unwrap_or(0.0);
            self.significance = ks_significance(d, self.window.len());
            self.final_score = self.unifier.unify(self.significance);
        }
        Ok(ScoreStep {
            p_value: p,
            significance: self.significance,
            final_score: self.final_score,
            tested,
        })
    }
}
