//! Loops: rescaled paths conditioned (by rejection) to end near their start,
//! plus on-diagonal density estimates, heat-kernel slope fits, loop-law
//! comparisons, the fourth-moment tightness check, the `sqrt(eps)` collapse
//! and the reweighted Brownian bridge that describes the Example's limit.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use hypoloop_core::nilpotent::NilpotentSystem;

use crate::error::{Error, Result};
use crate::model::SdeModel;
use crate::rng::NormalStream;
use crate::simulate::{simulate_filtered, simulate_paths, SimConfig};
use crate::stats::{
    effective_sample_size, energy_test, ks_two_sample, linear_fit, normal_quantile, weighted_excess_kurtosis,
    weighted_ks, weighted_linear_fit, EnergyTest, KsResult,
};

/// Below this acceptance rate rejection conditioning is refused.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct LoopEnsemble {
    pub times: Vec<f64>,
    /// `paths[p][t]` is the rescaled state of accepted path `p` at `times[t]`.
    pub paths: Vec<Vec<Vec<f64>>>,
    /// Rescaled terminal states of the accepted paths.
    pub terminals: Vec<Vec<f64>>,
    pub radius: f64,
    pub acceptance_rate: f64,
    pub eps: f64,
    pub simulated: usize,
    pub config: SimConfig,
}

impl LoopEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.terminals.first().map_or(0, Vec::len)
    }

    pub fn coordinate_at(&self, t: usize, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[t][k]).collect()
    }

    /// Each loop flattened over all times and coordinates.
    pub fn flattened(&self) -> Vec<Vec<f64>> {
        self.paths.iter().map(|p| p.iter().flatten().copied().collect()).collect()
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() < 1e-9)
    }

    /// The same loops observed only at `times`, each of which must have
    /// been recorded.
    pub fn restrict(&self, times: &[f64]) -> Result<LoopEnsemble> {
        let idx = times
            .iter()
            .map(|&t| self.time_index(t).ok_or_else(|| Error::Config(format!("time {t} was not recorded"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(LoopEnsemble {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            paths: self.paths.iter().map(|p| idx.iter().map(|&i| p[i].clone()).collect()).collect(),
            ..self.clone()
        })
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Simulates `config.paths` paths, rescales them by
/// `x -> delta_eps^{-1}(theta(x) - theta(x0))` and keeps those whose
/// terminal value lies within `radius` of the origin.
pub fn sample_loops(
    model: &SdeModel,
    config: &SimConfig,
    radius: f64,
    times: &[f64],
    min_accepted: usize,
) -> Result<LoopEnsemble> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("acceptance radius must be positive, got {radius}")));
    }
    let rescaler = model.rescaler(config.eps)?;
    let ens = simulate_filtered(model, config, times, |p| {
        let end = rescaler.apply(&p.terminal);
        if norm(&end) > radius {
            return false;
        }
        for x in p.trajectory.iter_mut() {
            *x = rescaler.apply(x);
        }
        p.terminal = end;
        true
    })?;
    let mut paths = Vec::with_capacity(ens.paths.len());
    let mut terminals = Vec::with_capacity(ens.paths.len());
    for p in ens.paths {
        paths.push(p.trajectory);
        terminals.push(p.terminal);
    }
    let rate = paths.len() as f64 / config.paths as f64;
    let budget = |rate: f64| ((min_accepted.max(1) as f64 / rate.max(1e-12)) * 1.2).ceil() as usize;
    if rate < MIN_ACCEPTANCE_RATE {
        let d = model.dim() as f64;
        let grow = (MIN_ACCEPTANCE_RATE * 10.0 / rate.max(1.0 / config.paths as f64)).powf(1.0 / d);
        return Err(Error::RadiusTooSmall {
            rate,
            radius,
            suggested_radius: radius * grow,
            suggested_paths: budget(rate.max(1.0 / config.paths as f64)),
        });
    }
    if paths.len() < min_accepted {
        return Err(Error::TooFewAccepted {
            accepted: paths.len(),
            required: min_accepted,
            suggested_paths: budget(rate),
        });
    }
    Ok(LoopEnsemble {
        times: ens.record_times.clone(),
        paths,
        terminals,
        radius,
        acceptance_rate: rate,
        eps: config.eps,
        simulated: config.paths,
        config: config.clone(),
    })
}

/// Loops of the limiting nilpotent diffusion (run at unit scale).
pub fn sample_limit_loops(
    sys: &NilpotentSystem,
    config: &SimConfig,
    radius: f64,
    times: &[f64],
    min_accepted: usize,
) -> Result<LoopEnsemble> {
    let model = SdeModel::nilpotent(sys)?;
    sample_loops(&model, &config.clone().with_eps(1.0), radius, times, min_accepted)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    pub radius: f64,
    /// `None` when no sample fell in the ball.
    pub std_error: Option<f64>,
    pub hits: usize,
    pub n: usize,
    pub kind: &'static str,
}

impl DensityEstimate {
    pub fn is_usable(&self) -> bool {
        self.std_error.is_some()
    }

    /// One-sided lower confidence bound at the given level.
    pub fn lower_bound(&self, level: f64) -> f64 {
        match self.std_error {
            Some(se) => self.value - normal_quantile(level) * se,
            None => f64::NEG_INFINITY,
        }
    }
}

/// Volume of the Euclidean ball of radius `r` in `d` dimensions.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0) * r.powi(d as i32)
}

/// Ball-fraction estimate of the density at the origin:
/// `#{|x| <= r} / n / vol(B_r)` with a binomial standard error.
pub fn density_at_zero(samples: &[Vec<f64>], radius: f64) -> Result<DensityEstimate> {
    if samples.len() < 1000 {
        return Err(Error::Config(format!("density estimate needs at least 1000 samples, got {}", samples.len())));
    }
    if !(radius > 0.0) {
        return Err(Error::Config("density radius must be positive".into()));
    }
    let d = samples[0].len();
    let n = samples.len();
    let hits = samples.iter().filter(|x| norm(x) <= radius).count();
    let vol = ball_volume(d, radius);
    let p = hits as f64 / n as f64;
    Ok(DensityEstimate {
        value: p / vol,
        radius,
        std_error: (hits > 0).then(|| (p * (1.0 - p) / n as f64).sqrt() / vol),
        hits,
        n,
        kind: "ball-fraction",
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatPoint {
    pub eps: f64,
    /// Ball radius in the original coordinates.
    pub ball_radius: f64,
    pub density: DensityEstimate,
    /// `eps^{Q/2} p(eps, 0, 0)`, when weights are known.
    pub scaled: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatSlopeReport {
    pub points: Vec<HeatPoint>,
    pub slope: f64,
    pub slope_se: f64,
    pub ci: (f64, f64),
    /// `Q / 2` from the model's weights.
    pub expected: Option<f64>,
}

impl HeatSlopeReport {
    pub fn within(&self, tol: f64) -> Option<bool> {
        self.expected.map(|q| (self.slope - q).abs() <= tol)
    }
}

/// Fits `log p(eps, 0, 0)` against `log(1/eps)`. The density is a ball
/// fraction on unrescaled terminal states `x_1 - x0` with ball radius
/// `radius * eps^{w_max/2}`; the slope CI uses the delta-method errors of
/// each `log p`.
pub fn heat_kernel_slope(model: &SdeModel, eps_grid: &[f64], config: &SimConfig, radius: f64) -> Result<HeatSlopeReport> {
    if eps_grid.len() < 3 {
        return Err(Error::Config("heat-kernel slope needs at least 3 values of eps".into()));
    }
    let lo = eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eps_grid.iter().cloned().fold(0.0, f64::max);
    if !(hi / lo >= 10.0 - 1e-9) {
        return Err(Error::Config("eps grid must span at least one decade".into()));
    }
    let w_max = model.weights().map_or(1, |w| w.max());
    let q = model.weights().map(|w| w.homogeneous_dimension());
    let mut points = Vec::with_capacity(eps_grid.len());
    let mut unusable = Vec::new();
    for (i, &eps) in eps_grid.iter().enumerate() {
        let cfg = config.clone().with_eps(eps).with_seed(config.master_seed.wrapping_add(i as u64));
        let ens = simulate_paths(model, &cfg, &[])?;
        let x0 = model.base_point();
        let samples: Vec<Vec<f64>> = ens
            .paths
            .iter()
            .map(|p| p.terminal.iter().zip(x0).map(|(a, b)| a - b).collect())
            .collect();
        let h = radius * eps.powf(f64::from(w_max) / 2.0);
        let density = density_at_zero(&samples, h)?;
        if !density.is_usable() {
            unusable.push(eps);
        }
        let scaled = q.and_then(|q| {
            density
                .std_error
                .map(|se| (density.value * eps.powf(f64::from(q) / 2.0), se * eps.powf(f64::from(q) / 2.0)))
        });
        points.push(HeatPoint {
            eps,
            ball_radius: h,
            density,
            scaled,
        });
    }
    if !unusable.is_empty() {
        return Err(Error::UnusableDensity(unusable));
    }
    let x: Vec<f64> = points.iter().map(|p| (1.0 / p.eps).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.density.value.ln()).collect();
    let se: Vec<f64> = points
        .iter()
        .map(|p| p.density.std_error.expect("checked usable") / p.density.value)
        .collect();
    let fit = weighted_linear_fit(&x, &y, &se);
    let z = normal_quantile(0.975);
    Ok(HeatSlopeReport {
        points,
        slope: fit.slope,
        slope_se: fit.slope_se,
        ci: (fit.slope - z * fit.slope_se, fit.slope + z * fit.slope_se),
        expected: q.map(|q| f64::from(q) / 2.0),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalKs {
    pub time: f64,
    pub coordinate: usize,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopComparison {
    pub marginals: Vec<MarginalKs>,
    pub energy: EnergyTest,
}

impl LoopComparison {
    pub fn max_ks(&self) -> f64 {
        self.marginals.iter().map(|m| m.ks.statistic).fold(0.0, f64::max)
    }
}

/// Per-time, per-coordinate KS statistics and a joint energy distance with a
/// 200-permutation p-value (computed on at most 1000 loops per side).
pub fn compare_loop_laws(a: &LoopEnsemble, b: &LoopEnsemble, seed: u64) -> Result<LoopComparison> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-9) {
        return Err(Error::Config("loop ensembles were recorded at different times".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::Config("loop ensembles have different dimensions".into()));
    }
    let mut marginals = Vec::new();
    for (t, &time) in a.times.iter().enumerate() {
        for k in 0..a.dim() {
            marginals.push(MarginalKs {
                time,
                coordinate: k,
                ks: ks_two_sample(&a.coordinate_at(t, k), &b.coordinate_at(t, k)),
            });
        }
    }
    Ok(LoopComparison {
        marginals,
        energy: energy_test(&a.flattened(), &b.flattened(), 200, 1000, seed),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TightnessEntry {
    pub eps: f64,
    /// `(lag, E|x_{t+lag} - x_t|^4)`, pooled over start times.
    pub moments: Vec<(f64, f64)>,
    pub exponent: f64,
    /// `max_lag E|...|^4 / lag^2`.
    pub prefactor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TightnessReport {
    pub entries: Vec<TightnessEntry>,
    pub min_exponent: f64,
    pub sup_prefactor: f64,
    pub threshold: f64,
}

impl TightnessReport {
    pub fn passed(&self) -> bool {
        self.min_exponent >= self.threshold
    }
}

/// Fourth moments of loop increments over lags in `[min_lag, max_lag]`
/// (lags are differences of recorded times) and the fitted log-log exponent.
pub fn tightness_moment_check(ensembles: &[&LoopEnsemble], min_lag: f64, max_lag: f64) -> TightnessReport {
    let mut entries = Vec::new();
    for e in ensembles {
        let mut lags: Vec<(f64, f64, usize)> = Vec::new();
        for i in 0..e.times.len() {
            for j in i + 1..e.times.len() {
                let lag = e.times[j] - e.times[i];
                if lag < min_lag - 1e-12 || lag > max_lag + 1e-12 {
                    continue;
                }
                let m4: f64 = e
                    .paths
                    .iter()
                    .map(|p| p[j].iter().zip(&p[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().powi(2))
                    .sum::<f64>()
                    / e.paths.len() as f64;
                match lags.iter_mut().find(|l| (l.0 - lag).abs() < 1e-9) {
                    Some(l) => {
                        l.1 += m4;
                        l.2 += 1;
                    }
                    None => lags.push((lag, m4, 1)),
                }
            }
        }
        lags.sort_by(|a, b| a.0.total_cmp(&b.0));
        let moments: Vec<(f64, f64)> = lags.iter().map(|l| (l.0, l.1 / l.2 as f64)).collect();
        let prefactor = moments.iter().map(|(l, m)| m / (l * l)).fold(0.0, f64::max);
        let exponent = if moments.iter().all(|(_, m)| *m == 0.0) {
            f64::INFINITY
        } else if moments.len() < 2 {
            f64::NAN
        } else {
            let x: Vec<f64> = moments.iter().map(|(l, _)| l.ln()).collect();
            let y: Vec<f64> = moments.iter().map(|(_, m)| m.ln()).collect();
            linear_fit(&x, &y).slope
        };
        entries.push(TightnessEntry {
            eps: e.eps,
            moments,
            exponent,
            prefactor,
        });
    }
    TightnessReport {
        min_exponent: entries.iter().map(|e| e.exponent).fold(f64::INFINITY, f64::min),
        sup_prefactor: entries.iter().map(|e| e.prefactor).fold(0.0, f64::max),
        entries,
        threshold: 1.7,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseCoordinate {
    pub coordinate: usize,
    pub weight: u32,
    /// `(eps, Var[eps^{-1/2} (delta_eps x~)_k at t = 1/2])`.
    pub variances: Vec<(f64, f64)>,
    pub exponent: f64,
    /// `w_k - 1`.
    pub expected: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseReport {
    /// True when every weight is 1 (elliptic at the base point).
    pub vacuous: bool,
    pub coordinates: Vec<CollapseCoordinate>,
}

impl CollapseReport {
    pub fn passed(&self) -> bool {
        self.vacuous || self.coordinates.iter().all(|c| c.passed)
    }
}

/// Tolerance on fitted collapse exponents.
pub const COLLAPSE_TOLERANCE: f64 = 0.3;

/// Applies `tau_eps = eps^{-1/2} delta_eps` to loops already rescaled by
/// `delta_eps^{-1}` and fits the variance at `t = 1/2` against `eps`.
/// Weight-1 coordinates must keep an `O(1)` variance (exponent within the
/// tolerance of 0); the others must decay at least like `eps^{w_k - 1}`.
pub fn collapse_from_loops(loops: &[&LoopEnsemble], weights: &[u32]) -> Result<CollapseReport> {
    let vacuous = weights.iter().all(|&w| w == 1);
    let mut coordinates = Vec::new();
    if vacuous {
        return Ok(CollapseReport { vacuous, coordinates });
    }
    if loops.len() < 2 {
        return Err(Error::Config("collapse fit needs at least two values of eps".into()));
    }
    for (k, &w) in weights.iter().enumerate() {
        let mut variances = Vec::new();
        for l in loops {
            let t = l
                .time_index(0.5)
                .ok_or_else(|| Error::Config("loops must be recorded at t = 1/2".into()))?;
            let f = l.eps.powf((f64::from(w) - 1.0) / 2.0);
            let xs: Vec<f64> = l.coordinate_at(t, k).iter().map(|v| v * f).collect();
            variances.push((l.eps, crate::stats::variance(&xs)));
        }
        let x: Vec<f64> = variances.iter().map(|(e, _)| e.ln()).collect();
        let y: Vec<f64> = variances.iter().map(|(_, v)| v.ln()).collect();
        let exponent = linear_fit(&x, &y).slope;
        let expected = f64::from(w) - 1.0;
        let passed = if w == 1 {
            exponent.abs() <= COLLAPSE_TOLERANCE
        } else {
            exponent >= expected - COLLAPSE_TOLERANCE
        };
        coordinates.push(CollapseCoordinate {
            coordinate: k,
            weight: w,
            variances,
            exponent,
            expected,
            passed,
        });
    }
    Ok(CollapseReport { vacuous, coordinates })
}

/// Samples loops at each `eps` (times `{1/2, 1}`) and runs
/// [`collapse_from_loops`].
pub fn sqrt_eps_collapse(
    model: &SdeModel,
    eps_grid: &[f64],
    config: &SimConfig,
    radius: f64,
    min_accepted: usize,
) -> Result<CollapseReport> {
    let weights = model
        .weights()
        .ok_or_else(|| Error::Config("collapse check needs a chart with weights".into()))?
        .as_slice()
        .to_vec();
    if weights.iter().all(|&w| w == 1) {
        return Ok(CollapseReport {
            vacuous: true,
            coordinates: Vec::new(),
        });
    }
    let loops = eps_grid
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let cfg = config.clone().with_eps(eps).with_seed(config.master_seed.wrapping_add(i as u64));
            sample_loops(model, &cfg, radius, &[0.5], min_accepted)
        })
        .collect::<Result<Vec<_>>>()?;
    collapse_from_loops(&loops.iter().collect::<Vec<_>>(), &weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeOracle {
    pub times: Vec<f64>,
    /// `values[s][t]`: bridge `s` at `times[t]`.
    pub values: Vec<Vec<f64>>,
    /// Self-normalized weights `(int w^4)^{-1/2}`.
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl BridgeOracle {
    pub fn at(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[t]).collect()
    }
}

/// Exact Brownian bridges on a grid of `steps` intervals (`W_t - t W_1`),
/// weighted by `(int_0^1 w_s^4 ds)^{-1/2}` (trapezoidal rule) and
/// self-normalized. The weighted law is the first coordinate of the
/// Example's limiting loop.
pub fn reweighted_bridges(n: usize, steps: usize, times: &[f64], seed: u64) -> Result<BridgeOracle> {
    if steps == 0 || n == 0 {
        return Err(Error::Config("bridge oracle needs at least one sample and one step".into()));
    }
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| {
            if (0.0..=1.0).contains(&t) {
                Ok((t * steps as f64).round() as usize)
            } else {
                Err(Error::Config(format!("time {t} outside [0, 1]")))
            }
        })
        .collect::<Result<_>>()?;
    let mut rng = NormalStream::new(seed, 0);
    let dt = 1.0 / steps as f64;
    let sq = dt.sqrt();
    let mut values = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut w = vec![0.0; steps + 1];
    for _ in 0..n {
        for k in 1..=steps {
            w[k] = w[k - 1] + sq * rng.next();
        }
        let w1 = w[steps];
        let bridge = |k: usize| w[k] - (k as f64 * dt) * w1;
        let mut int4 = 0.0;
        for k in 0..=steps {
            let b = bridge(k);
            let c = if k == 0 || k == steps { 0.5 } else { 1.0 };
            int4 += c * b.powi(4) * dt;
        }
        values.push(idx.iter().map(|&k| bridge(k)).collect::<Vec<f64>>());
        weights.push(int4.powf(-0.5));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|x| *x /= total);
    let ess = effective_sample_size(&weights);
    if ess < 100.0 {
        return Err(Error::LowEffectiveSampleSize(ess));
    }
    Ok(BridgeOracle {
        times: idx.iter().map(|&k| k as f64 * dt).collect(),
        values,
        weights,
        ess,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeReport {
    pub n: usize,
    pub ess: f64,
    /// Weighted vs unweighted KS at `t = 1/2`.
    pub ks: f64,
    /// Share of weight permutations reaching the observed KS.
    pub p_value: f64,
    pub permutations: usize,
    pub excess_kurtosis: f64,
    pub kurtosis_ci: (f64, f64),
    /// Weighted KS against an externally sampled law, when supplied.
    pub cross_check_ks: Option<f64>,
}

/// Runs the bridge oracle and its non-Gaussianity summaries. `reference`
/// is an optional sample of the Example limit loop's first coordinate at
/// `t = 1/2` (for instance from [`sample_limit_loops`]).
pub fn reweighted_bridge_oracle(
    n: usize,
    steps: usize,
    seed: u64,
    permutations: usize,
    bootstrap: usize,
    reference: Option<&[f64]>,
) -> Result<BridgeReport> {
    if n < 10_000 {
        return Err(Error::Config(format!("bridge oracle needs at least 10^4 samples, got {n}")));
    }
    let oracle = reweighted_bridges(n, steps, &[0.5], seed)?;
    let mid = oracle.at(0);
    let ones = vec![1.0; n];
    let ks = weighted_ks(&mid, &oracle.weights, &mid, &ones);

    // permutation null: weights unrelated to the path
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mid[a].total_cmp(&mid[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| mid[i]).collect();
    let mut w: Vec<f64> = order.iter().map(|&i| oracle.weights[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut exceed = 0;
    for _ in 0..permutations {
        w.shuffle(&mut rng);
        if sorted_weighted_vs_plain(&sorted, &w) >= ks {
            exceed += 1;
        }
    }

    let excess_kurtosis = weighted_excess_kurtosis(&mid, &oracle.weights);
    let mut boots = Vec::with_capacity(bootstrap);
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for _ in 0..bootstrap {
        for i in 0..n {
            let j = (rng.next_u64() % n as u64) as usize;
            xs[i] = mid[j];
            ws[i] = oracle.weights[j];
        }
        boots.push(weighted_excess_kurtosis(&xs, &ws));
    }
    let kurtosis_ci = if boots.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (crate::stats::quantile(&boots, 0.025), crate::stats::quantile(&boots, 0.975))
    };
    let cross_check_ks = reference.map(|r| weighted_ks(&mid, &oracle.weights, r, &vec![1.0; r.len()]));
    Ok(BridgeReport {
        n,
        ess: oracle.ess,
        ks,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
        excess_kurtosis,
        kurtosis_ci,
        cross_check_ks,
    })
}

/// KS between the weighted and the plain empirical law of values already
/// sorted ascending (distinct values assumed).
fn sorted_weighted_vs_plain(sorted: &[f64], w: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let total: f64 = w.iter().sum();
    let mut fw = 0.0;
    let mut d: f64 = 0.0;
    for (i, wi) in w.iter().enumerate() {
        fw += wi;
        d = d.max((fw / total - (i + 1) as f64 / n).abs());
    }
    d
}

/// Plain two-sample KS on a coordinate at a time, as a convenience for
/// reports.
pub fn marginal_ks(a: &LoopEnsemble, b: &[f64], t: usize, k: usize) -> KsResult {
    ks_two_sample(&a.coordinate_at(t, k), b)
}
