//! Synthetic streams and independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use streamad_io::DatasetBundle;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(&mut r)).collect()
}

/// N(0, 1) noise with `shift` added from position `at` (1-based) on.
pub fn level_shift(seed: u64, n: usize, at: usize, shift: f64) -> Vec<f64> {
    gaussian(seed, n)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i + 1 >= at { v + shift } else { v })
        .collect()
}

/// Write `timestamp,value,is_anomaly` with integer timestamps `1..=n`.
pub fn write_csv(dir: &Path, name: &str, values: &[f64], anomalies: &[i64]) -> PathBuf {
    let mut s = String::from("timestamp,value,is_anomaly\n");
    for (i, v) in values.iter().enumerate() {
        let t = i as i64 + 1;
        let _ = writeln!(s, "{t},{v},{}", u8::from(anomalies.contains(&t)));
    }
    let path = dir.join(format!("{name}.csv"));
    std::fs::write(&path, s).unwrap();
    path
}

fn segment(start: usize, len: usize) -> std::ops::Range<usize> {
    start..start + len
}

fn labels(segments: &[std::ops::Range<usize>]) -> Vec<i64> {
    segments.iter().flat_map(|s| s.clone()).map(|i| i as i64 + 1).collect()
}

/// Length of every series in [`nab_style_corpus`].
pub const CORPUS_LENGTH: usize = 4000;

/// Ten labeled series in the spirit of a real-world benchmark: seasonality,
/// trends, regime changes and heavy tails, with anomalous segments labeled
/// point by point. Normal behavior drifts in several series, so a detector
/// frozen on its warm-up data is at a disadvantage there.
pub fn nab_style_corpus(seed: u64) -> Vec<DatasetBundle> {
    let n = CORPUS_LENGTH;
    let mut out = Vec::new();
    let mut r = rng(seed);
    let noise = |sd: f64| Normal::new(0.0, sd).unwrap();

    // seasonal signal with an amplitude burst and a noise burst
    let (a, b) = (segment(1500, 10), segment(3000, 20));
    let v: Vec<f64> = (0..n)
        .map(|i| {
            let mut x = 10.0 * (2.0 * PI * i as f64 / 100.0).sin() + noise(1.0).sample(&mut r);
            if a.contains(&i) {
                x += 8.0;
            }
            if b.contains(&i) {
                x += noise(5.0).sample(&mut r);
            }
            x
        })
        .collect();
    out.push(DatasetBundle::from_values("seasonal_bursts", &v, labels(&[a, b])));

    // persistent level shift after an early spike
    let (a, b) = (segment(1200, 5), segment(2200, 10));
    let v: Vec<f64> = (0..n)
        .map(|i| {
            let mut x = noise(1.0).sample(&mut r);
            if a.contains(&i) {
                x += 6.0;
            }
            if i >= b.start {
                x += 4.0;
            }
            x
        })
        .collect();
    out.push(DatasetBundle::from_values("level_shift", &v, labels(&[a, b])));

    // upward trend with dips
    let (a, b) = (segment(1800, 10), segment(3300, 10));
    let v: Vec<f64> = (0..n)
        .map(|i| {
            let mut x = 0.005 * i as f64 + noise(1.0).sample(&mut r);
            if a.contains(&i) || b.contains(&i) {
                x -= 6.0;
            }
            x
        })
        .collect();
    out.push(DatasetBundle::from_values("trend_dips", &v, labels(&[a, b])));

    // variance increases for good
    let (a, b) = (segment(1000, 5), segment(2500, 20));
    let v: Vec<f64> = (0..n)
        .map(|i| {
            let sd = if i >= b.start { 3.0 } else { 1.0 };
            let mut x = noise(sd).sample(&mut r);
            if a.contains(&i) {
                x += 6.0;
            }
            x
        })
        .collect();
    out.push(DatasetBundle::from_values("variance_change", &v, labels(&[a, b])));

    // machine cycle with a stuck sensor and an overdriven stretch
    let (a, b) = (segment(2000, 60), segment(3200, 50));
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let saw = 5.0 * ((i % 50) as f64 / 50.0);
        let x = if a.contains(&i) {
            v[a.start - 1]
        } else if b.contains(&i) {
            2.0 * saw + noise(0.5).sample(&mut r)
        } else {
            saw + noise(0.5).sample(&mut r)
        };
        v.push(x);
    }
    out.push(DatasetBundle::from_values("machine_cycle", &v, labels(&[a, b])));

    // slowly wandering AR(1) process with spikes
    let (a, b) = (segment(1500, 5), segment(3000, 5));
    let mut level = 0.0;
    let v: Vec<f64> = (0..n)
        .map(|i| {
            level = 0.99 * level + noise(0.3).sample(&mut r);
            let mut x = level + noise(0.2).sample(&mut r);
            if a.contains(&i) || b.contains(&i) {
                x += 10.0;
            }
            x
        })
        .collect();
    out.push(DatasetBundle::from_values("wandering", &v, labels(&[a, b])));

    // period shortens for a while, later a phase jump
    let (a, b) = (segment(2000, 150), segment(3200, 30));
    let mut phase = 0.0;
    let v: Vec<f64> = (0..n)
        .map(|i| {
            phase += 2.0 * PI / if a.contains(&i) { 40.0 } else { 100.0 };
            if i == b.start {
                phase += PI;
            }
            5.0 * phase.sin() + noise(0.5).sample(&mut r)
        })
        .collect();
    out.push(DatasetBundle::from_values("frequency_change", &v, labels(&[a, b])));

    // daily cycle whose amplitude grows, with dropouts
    let (a, b) = (segment(1700, 30), segment(3100, 30));
    let v: Vec<f64> = (0..n)
        .map(|i| {
            if a.contains(&i) || b.contains(&i) {
                return 0.0;
            }
            let amp = 5.0 + 5.0 * i as f64 / n as f64;
            20.0 + amp * (2.0 * PI * i as f64 / 288.0).sin() + noise(1.0).sample(&mut r)
        })
        .collect();
    out.push(DatasetBundle::from_values("growing_cycle", &v, labels(&[a, b])));

    // two-state regime switching with stretches at an unseen level
    let (a, b) = (segment(1400, 20), segment(2900, 20));
    let mut high = false;
    let v: Vec<f64> = (0..n)
        .map(|i| {
            if r.random::<f64>() < 1.0 / 200.0 {
                high = !high;
            }
            let base = if a.contains(&i) || b.contains(&i) {
                2.5
            } else if high {
                5.0
            } else {
                0.0
            };
            base + noise(0.3).sample(&mut r)
        })
        .collect();
    out.push(DatasetBundle::from_values("regime_switch", &v, labels(&[a, b])));

    // heavy-tailed noise with temporary level shifts
    let (a, b) = (segment(2000, 40), segment(3500, 40));
    let t3 = StudentT::new(3.0).unwrap();
    let v: Vec<f64> = (0..n)
        .map(|i| {
            let mut x = t3.sample(&mut r);
            if a.contains(&i) || b.contains(&i) {
                x += 5.0;
            }
            x
        })
        .collect();
    out.push(DatasetBundle::from_values("heavy_tails", &v, labels(&[a, b])));

    out
}

/// Kolmogorov distribution function `P(K ≤ x)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        let s: f64 = (1..200)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * PI * PI / (8.0 * x * x)).exp()
            })
            .sum();
        (2.0 * PI).sqrt() / x * s
    } else {
        let s: f64 = (1..200)
            .map(|k| {
                let k = k as f64;
                let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum();
        1.0 - 2.0 * s
    }
}

/// One-sample K-S distance of `samples` from `cdf`, by direct evaluation at
/// each sample from both sides.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Whether a one-sample K-S test at level 0.01 accepts `samples ~ cdf`.
pub fn ks_accepts(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (bool, f64) {
    let d = ks_distance(samples, cdf);
    let sn = (samples.len() as f64).sqrt();
    let p = 1.0 - kolmogorov_cdf((sn + 0.12 + 0.11 / sn) * d);
    (p > 0.01, p)
}
