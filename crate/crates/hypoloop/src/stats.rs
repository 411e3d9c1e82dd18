//! Sample statistics used by the loop checks: two-sample and weighted
//! Kolmogorov–Smirnov, energy distance with a permutation test, weighted
//! least squares and moment summaries.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolated quantile, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov statistic with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let ones_a = vec![1.0; a.len()];
    let ones_b = vec![1.0; b.len()];
    let statistic = weighted_ks(a, &ones_a, b, &ones_b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let sq = ne.sqrt();
    KsResult {
        statistic,
        p_value: kolmogorov_tail((sq + 0.12 + 0.11 / sq) * statistic),
    }
}

/// `sup |F_a - F_b|` for weighted empirical distributions (weights need not
/// be normalized).
pub fn weighted_ks(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let mut pa: Vec<(f64, f64)> = a.iter().copied().zip(wa.iter().copied()).collect();
    let mut pb: Vec<(f64, f64)> = b.iter().copied().zip(wb.iter().copied()).collect();
    pa.sort_by(|x, y| x.0.total_cmp(&y.0));
    pb.sort_by(|x, y| x.0.total_cmp(&y.0));
    let ta: f64 = wa.iter().sum();
    let tb: f64 = wb.iter().sum();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < pa.len() || j < pb.len() {
        let x = match (pa.get(i), pb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < pa.len() && pa[i].0 <= x {
            fa += pa[i].1;
            i += 1;
        }
        while j < pb.len() && pb[j].0 <= x {
            fb += pb[j].1;
            j += 1;
        }
        d = d.max((fa / ta - fb / tb).abs());
    }
    d
}

/// Sum of Euclidean distances between every pair `(x, y)` with `x` in `a`,
/// `y` in `b`.
fn cross_distance_sum(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        }
    }
    s
}

/// Energy distance `2 E|X-Y| - E|X-X'| - E|Y-Y'|`, unbiased (U-statistic)
/// form, so it can be slightly negative when the laws agree.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    2.0 * cross_distance_sum(a, b) / (na * nb)
        - cross_distance_sum(a, a) / (na * (na - 1.0))
        - cross_distance_sum(b, b) / (nb * (nb - 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    /// Sample sizes used in the permutation test.
    pub n_a: usize,
    pub n_b: usize,
}

/// Energy distance on the full samples plus a permutation p-value computed
/// on at most `max_per_side` points from each sample (evenly strided).
pub fn energy_test(a: &[Vec<f64>], b: &[Vec<f64>], permutations: usize, max_per_side: usize, seed: u64) -> EnergyTest {
    let statistic = energy_distance(a, b);
    let thin = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        if s.len() <= max_per_side {
            s.to_vec()
        } else {
            (0..max_per_side).map(|i| s[i * s.len() / max_per_side].clone()).collect()
        }
    };
    let (ta, tb) = (thin(a), thin(b));
    let pooled: Vec<&Vec<f64>> = ta.iter().chain(&tb).collect();
    let n = pooled.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = pooled[i].iter().zip(pooled[j]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let na = ta.len();
    let stat_for = |labels: &[usize]| -> f64 {
        let (ia, ib) = labels.split_at(na);
        let (fa, fb) = (ia.len() as f64, ib.len() as f64);
        let block = |x: &[usize], y: &[usize]| -> f64 { x.iter().map(|&i| y.iter().map(|&j| dist[i * n + j]).sum::<f64>()).sum() };
        2.0 * block(ia, ib) / (fa * fb) - block(ia, ia) / (fa * fa) - block(ib, ib) / (fb * fb)
    };
    let mut labels: Vec<usize> = (0..n).collect();
    let observed = stat_for(&labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if stat_for(&labels) >= observed {
            exceed += 1;
        }
    }
    EnergyTest {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
        n_a: na,
        n_b: tb.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares; `slope_se` from the residual variance (zero when
/// only two points).
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LinearFit {
        slope,
        intercept,
        slope_se,
    }
}

/// Weighted least squares with known standard errors on `y`; the slope
/// standard error propagates those errors.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], se: &[f64]) -> LinearFit {
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, w)| w * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, b), w)| w * (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    LinearFit {
        slope,
        intercept: my - slope * mx,
        slope_se: (1.0 / sxx).sqrt(),
    }
}

/// Excess kurtosis of a weighted sample (weights need not be normalized).
pub fn weighted_excess_kurtosis(xs: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let m = xs.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let m2 = xs.iter().zip(w).map(|(x, w)| w * (x - m).powi(2)).sum::<f64>() / sw;
    let m4 = xs.iter().zip(w).map(|(x, w)| w * (x - m).powi(4)).sum::<f64>() / sw;
    m4 / (m2 * m2) - 3.0
}

/// Kish effective sample size.
pub fn effective_sample_size(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    s * s / s2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;
    use std::f64::consts::PI;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut s = NormalStream::new(seed, 0);
        (0..n).map(|_| s.next()).collect()
    }

    #[test]
    fn ks_known_values() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert_eq!(r.statistic, 1.0);
        let r = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        // interleaved: F_a - F_b peaks at 1/4
        let r = ks_two_sample(&[1.0, 3.0, 5.0, 7.0], &[2.0, 4.0, 6.0, 8.0]);
        assert!((r.statistic - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.36) ~ 0.049, P(K > 1.63) ~ 0.0098
        assert!((kolmogorov_tail(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_tail(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn weighted_ks_matches_duplication() {
        let a = [0.1, 0.5, 0.9];
        let wa = [2.0, 1.0, 1.0];
        let b = [0.1, 0.1, 0.5, 0.9];
        let wb = [1.0; 4];
        assert!(weighted_ks(&a, &wa, &b, &wb) < 1e-15);
    }

    #[test]
    fn energy_null_and_shift() {
        let a: Vec<Vec<f64>> = normals(300, 1).into_iter().map(|x| vec![x]).collect();
        let b: Vec<Vec<f64>> = normals(300, 2).into_iter().map(|x| vec![x]).collect();
        let c: Vec<Vec<f64>> = normals(300, 3).into_iter().map(|x| vec![x + 1.0]).collect();
        let null = energy_test(&a, &b, 200, 300, 9);
        let alt = energy_test(&a, &c, 200, 300, 9);
        assert!(null.p_value > 0.01);
        assert!(alt.p_value < 0.01);
        assert!(alt.statistic > null.statistic);
        let self_sum = cross_distance_sum(&a, &a);
        let n = a.len() as f64;
        assert!((energy_distance(&a, &a) + 2.0 * self_sum / (n * n * (n - 1.0))).abs() < 1e-12);
    }

    #[test]
    fn energy_distance_of_shifted_normals() {
        // X - Y ~ N(1, 2), X - X' ~ N(0, 2)
        let s = 2f64.sqrt();
        let e_abs = s * (2.0 / PI).sqrt() * (-0.25f64).exp() + (1.0 - 2.0 * Normal::standard().cdf(-1.0 / s));
        let exact = 2.0 * e_abs - 2.0 * 2.0 / PI.sqrt();
        let a: Vec<Vec<f64>> = normals(3000, 11).into_iter().map(|x| vec![x]).collect();
        let b: Vec<Vec<f64>> = normals(3000, 12).into_iter().map(|x| vec![x + 1.0]).collect();
        let e = energy_distance(&a, &b);
        assert!((e - exact).abs() < 0.03, "{e} vs {exact}");
    }

    #[test]
    fn fits() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
        let g = weighted_linear_fit(&x, &y, &[1.0, 1.0, 1.0, 1.0]);
        assert!((g.slope - 2.0).abs() < 1e-12);
        // unit errors at x = 0..3: Sxx = 5
        assert!((g.slope_se - (1.0f64 / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn moments() {
        let xs = normals(100_000, 4);
        let w = vec![1.0; xs.len()];
        assert!(weighted_excess_kurtosis(&xs, &w).abs() < 0.1);
        assert_eq!(effective_sample_size(&w), xs.len() as f64);
        assert!((quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25) - 2.0).abs() < 1e-15);
        assert!((variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
    }
}
