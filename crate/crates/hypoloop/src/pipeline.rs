//! The analyses behind each command, returning reports that name every
//! check they ran.

use std::fmt::Write as _;

use hypoloop_core::chart::{construct_adapted, validate_adapted, AdaptedChart, Validation};
use hypoloop_core::grading::{build_graded_structure, check_drift_in_span, BracketTable, GradedStructure};
use hypoloop_core::map::PolyMap;
use hypoloop_core::nilpotent::{
    check_bracket_flag, check_cascade, check_convergence_to_nilpotent, check_homogeneity,
    check_strong_hormander_everywhere, default_sqrt_eps_grid, nilpotentize, NilpotentSystem,
};
use hypoloop_core::syntax::{format_list, VarNames};
use hypoloop_core::{Rational, DEFAULT_MAX_DEGREE, DEFAULT_MAX_DEPTH};

use crate::error::{Error, Result};
use crate::io::{EnsembleTable, Report};
use crate::loops::{
    collapse_from_loops, compare_loop_laws, density_at_zero, heat_kernel_slope, reweighted_bridge_oracle,
    sample_limit_loops, sample_loops, tightness_moment_check, CollapseReport, HeatSlopeReport, LoopComparison,
    LoopEnsemble, TightnessReport,
};
use crate::model::SdeModel;
use crate::modelfile::ModelFile;
use crate::rng::NormalStream;
use crate::simulate::{malliavin_covariance, simulate_paths, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Options {
    pub max_depth: usize,
    pub max_degree: u32,
    /// Degree cap for chart corrections; the step `N` when unset.
    pub max_correction_degree: Option<u32>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_depth: DEFAULT_MAX_DEPTH,
            max_degree: DEFAULT_MAX_DEGREE,
            max_correction_degree: None,
        }
    }
}

/// Deterministic numeric sample points: the origin, then pseudo-random
/// points in `[-3, 3]^d`.
pub fn sample_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = NormalStream::new(seed, u64::MAX);
    let mut pts = vec![vec![0.0; dim]];
    while pts.len() < count {
        pts.push((0..dim).map(|_| 6.0 * s.uniform() - 3.0).collect());
    }
    pts
}

pub fn structure(mf: &ModelFile, opts: &Options) -> Result<(GradedStructure, BracketTable)> {
    Ok(build_graded_structure(&mf.generators, &mf.base_point, opts.max_depth)?)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Flag, step, weights and homogeneous dimension at the base point.
pub fn analyze(mf: &ModelFile, opts: &Options) -> Result<Report> {
    let mut r = Report::new(format!("analyze {}", mf.name));
    let (s, table) = match structure(mf, opts) {
        Ok(v) => v,
        Err(Error::Core(hypoloop_core::Error::HormanderFailure { flag })) => {
            r.check(
                "grading.build_graded_structure",
                false,
                format!("strong Hörmander condition fails up to depth {}: flag ({})", flag.len(), join(&flag)),
            );
            return Ok(r);
        }
        Err(e) => return Err(e),
    };
    r.check(
        "grading.build_graded_structure",
        true,
        format!(
            "d = ({}), N = {}, weights ({}), Q = {}",
            join(s.dims()),
            s.step(),
            join(s.weights().as_slice()),
            s.homogeneous_dimension()
        ),
    );
    let q_flag = s.homogeneous_dimension_from_flag();
    r.check(
        "grading.homogeneous_dimension_identity",
        q_flag == s.homogeneous_dimension(),
        format!("sum of weights {} vs sum n (d_n - d_(n-1)) {}", s.homogeneous_dimension(), q_flag),
    );
    if let Some(x0) = &mf.drift {
        let pts = sample_points(mf.dim, 16, 7);
        let rep = check_drift_in_span(x0, &mf.generators, &mf.base_point, &pts)?;
        r.check(
            "grading.check_drift_in_span",
            rep.passed(),
            if rep.passed() {
                format!("base point and {} sample points", rep.points_checked)
            } else {
                format!("base point ok: {}, failing sample points {:?}", rep.base_point_ok, rep.failing_points)
            },
        );
    }
    let mut brackets = String::from("depth,bracket,field\n");
    for e in table.up_to_depth(s.step()) {
        let _ = writeln!(
            brackets,
            "{},{},\"{}\"",
            e.depth,
            e.expr,
            format_list(e.field.components(), &mf.variables)
        );
    }
    r.block("flag", s.to_csv());
    r.block("brackets", brackets);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartMode {
    Validate,
    Construct,
}

/// The model's chart, or the translation `x - x0` when it has none.
pub fn given_chart(mf: &ModelFile) -> Result<PolyMap> {
    match &mf.chart {
        Some(c) => Ok(c.clone()),
        None => {
            let id: Vec<Vec<Rational>> = (0..mf.dim)
                .map(|i| (0..mf.dim).map(|j| Rational::from_integer(i64::from(i == j).into())).collect())
                .collect();
            Ok(PolyMap::affine(&id, &mf.base_point)?)
        }
    }
}

fn chart_blocks(r: &mut Report, mf: &ModelFile, chart: &AdaptedChart) {
    let theta = chart.theta();
    r.block("theta", format_list(theta.components(), &mf.variables));
    if let Some(inv) = theta.inverse() {
        r.block("inverse", format_list(inv, &VarNames::y(mf.dim)));
    }
    r.block("certificate", chart.certificate().to_csv());
}

pub fn chart(mf: &ModelFile, mode: ChartMode, opts: &Options) -> Result<(Report, Option<AdaptedChart>)> {
    let (s, _) = structure(mf, opts)?;
    match mode {
        ChartMode::Validate => {
            let mut r = Report::new(format!("chart --validate {}", mf.name));
            if mf.chart.is_none() {
                r.note("no [chart] section; validating the identity chart centred at the base point");
            }
            match validate_adapted(&given_chart(mf)?, &mf.generators, &s)? {
                Validation::Adapted(c) => {
                    r.check(
                        "chart.validate_adapted",
                        true,
                        format!("{} operator values certified", c.certificate().entries.len()),
                    );
                    chart_blocks(&mut r, mf, &c);
                    Ok((r, Some(c)))
                }
                Validation::Violated(v) => {
                    r.check("chart.validate_adapted", false, v.to_string());
                    Ok((r, None))
                }
            }
        }
        ChartMode::Construct => {
            let mut r = Report::new(format!("chart --construct {}", mf.name));
            let degree = opts.max_correction_degree.unwrap_or(s.step() as u32);
            let c = construct_adapted(&mf.generators, &s, degree)?;
            r.check("chart.construct_adapted", true, format!("correction degree <= {degree}"));
            let again = validate_adapted(c.theta(), &mf.generators, &s)?;
            r.check(
                "chart.validate_adapted",
                again.is_adapted(),
                again.violation().map(|v| v.to_string()).unwrap_or_default(),
            );
            chart_blocks(&mut r, mf, &c);
            Ok((r, Some(c)))
        }
    }
}

/// The model's chart when it certifies, otherwise an error naming the
/// violation; without a chart one is constructed.
pub fn resolve_chart(mf: &ModelFile, opts: &Options) -> Result<AdaptedChart> {
    let mode = if mf.chart.is_some() { ChartMode::Validate } else { ChartMode::Construct };
    let (r, c) = chart(mf, mode, opts)?;
    c.ok_or_else(|| Error::CheckFailed {
        check: "chart.validate_adapted".into(),
        detail: r.checks.first().map(|c| c.detail.clone()).unwrap_or_default(),
    })
}

pub struct NilpotentOutput {
    pub report: Report,
    pub system: NilpotentSystem,
    pub chart: AdaptedChart,
}

pub fn nilpotent(mf: &ModelFile, opts: &Options) -> Result<NilpotentOutput> {
    let chart = resolve_chart(mf, opts)?;
    let sys = nilpotentize(&mf.generators, &chart, opts.max_degree)?;
    let mut r = Report::new(format!("nilpotent {}", mf.name));
    let y = VarNames::y(mf.dim);

    let hom = check_homogeneity(&sys);
    let bad: Vec<usize> = hom.iter().filter(|h| !h.passed()).map(|h| h.field + 1).collect();
    let spots: usize = hom.iter().map(|h| h.spot_checks).sum();
    r.check(
        "nilpotent.check_homogeneity",
        bad.is_empty(),
        if bad.is_empty() { format!("{spots} exact spot checks") } else { format!("fields {bad:?} not of degree 1") },
    );
    let cas = check_cascade(&sys);
    let bad: Vec<String> = cas
        .iter()
        .flat_map(|c| c.offending.iter().map(move |(k, _, why)| format!("X~{} component {}: {why}", c.field + 1, k + 1)))
        .collect();
    r.check("nilpotent.check_cascade", bad.is_empty(), bad.join("; "));
    let flag = check_bracket_flag(&sys)?;
    let bad: Vec<String> = flag
        .iter()
        .filter(|l| !l.passed())
        .map(|l| format!("n={} rank {} expected {}", l.n, l.rank, l.expected))
        .collect();
    r.check("nilpotent.check_bracket_flag", bad.is_empty(), bad.join("; "));
    let pts = sample_points(mf.dim, 12, 3);
    let h = check_strong_hormander_everywhere(&sys, &pts)?;
    r.check(
        "nilpotent.check_strong_hormander_everywhere",
        h.passed(),
        if h.passed() { format!("rank {} at {} points", mf.dim, pts.len()) } else { format!("failing points {:?}", h.failing_points) },
    );
    let conv = check_convergence_to_nilpotent(&mf.generators, &chart, &default_sqrt_eps_grid(), opts.max_degree)?;
    let worst = conv.iter().filter_map(|c| c.min_exponent()).min();
    r.check(
        "nilpotent.check_convergence_to_nilpotent",
        conv.iter().all(|c| c.passed()),
        match worst {
            Some(e) => format!("residual vanishes like eps^({e}/2) or faster"),
            None => "residual identically zero".into(),
        },
    );
    if mf.drift.is_some() {
        r.note("the drift X0 enters at order eps and does not survive in the limit");
    }
    let mut fields = String::new();
    for (l, f) in mf.labels.iter().zip(sys.fields()) {
        let _ = writeln!(fields, "{l}~ = {}", format_list(f.components(), &y));
    }
    let _ = writeln!(fields, "X0~ = {}", format_list(sys.drift_tilde().components(), &y));
    r.block("limit fields", fields);
    Ok(NilpotentOutput {
        report: r,
        system: sys,
        chart,
    })
}

/// The model pushed into the chart (adapted coordinates, base point 0).
pub fn adapted_model(mf: &ModelFile, chart: &AdaptedChart, opts: &Options) -> Result<SdeModel> {
    SdeModel::adapted(mf.name.clone(), &mf.generators, mf.drift.as_ref(), chart, opts.max_degree)
}

/// The model in its own coordinates with the chart attached for rescaling.
pub fn original_model(mf: &ModelFile, chart: &AdaptedChart) -> Result<SdeModel> {
    SdeModel::polynomial(mf.name.clone(), &mf.generators, mf.drift.as_ref(), mf.base_point_f64())?
        .with_chart(chart.theta(), chart.structure().weights().clone())
}

/// Simulates in the model's own coordinates, or in adapted coordinates
/// with `v` and the rescaled Malliavin matrix when `malliavin` is set.
pub fn simulate(mf: &ModelFile, cfg: &SimConfig, times: &[f64], malliavin: bool, opts: &Options) -> Result<(Report, EnsembleTable)> {
    let mut r = Report::new(format!("simulate {}", mf.name));
    let mut times = times.to_vec();
    if !times.iter().any(|t| (t - 1.0).abs() < 1e-12) {
        times.push(1.0);
    }
    let times = &times[..];
    let ens = if malliavin {
        let chart = resolve_chart(mf, opts)?;
        let m = adapted_model(mf, &chart, opts)?;
        malliavin_covariance(&m, cfg, times)?
    } else {
        let m = SdeModel::polynomial(mf.name.clone(), &mf.generators, mf.drift.as_ref(), mf.base_point_f64())?;
        simulate_paths(&m, cfg, times)?
    };
    r.check(
        "simulate.overflow_guard",
        true,
        format!("{} of {} paths flagged", ens.flagged.len(), cfg.paths),
    );
    if malliavin {
        r.check(
            "simulate.malliavin_psd",
            ens.paths.iter().all(|p| p.lambda_min.is_some_and(|l| l >= 0.0)),
            format!("largest eigenvalue clip {:e}", ens.max_clip()),
        );
    }
    r.stat("paths_kept", ens.paths.len() as f64, None, Some(cfg.paths));
    Ok((r, EnsembleTable::from_ensemble(&ens)))
}

pub struct HeatOutput {
    pub report: Report,
    pub slope: HeatSlopeReport,
    /// Ball-fraction estimate of the limit density at 0 and its 99% lower
    /// confidence bound.
    pub limit_density: (f64, f64),
}

/// Heat-kernel slope in the model's own coordinates plus positivity of the
/// limit density at the origin. `tolerance` bounds `|slope - Q/2|`.
pub fn heat_slope(mf: &ModelFile, eps: &[f64], cfg: &SimConfig, radius: f64, tolerance: f64, opts: &Options) -> Result<HeatOutput> {
    let nil = nilpotent(mf, opts)?;
    let model = original_model(mf, &nil.chart)?;
    let slope = heat_kernel_slope(&model, eps, cfg, radius)?;
    let q = f64::from(nil.chart.structure().homogeneous_dimension());
    let mut r = Report::new(format!("heat-slope {}", mf.name));
    r.check(
        "loops.heat_kernel_slope",
        (slope.slope - q / 2.0).abs() <= tolerance,
        format!(
            "slope {:.4} (95% CI {:.4}..{:.4}), Q/2 = {}, tolerance {tolerance}",
            slope.slope, slope.ci.0, slope.ci.1, q / 2.0
        ),
    );
    let limit = simulate_paths(
        &SdeModel::nilpotent(&nil.system)?,
        &cfg.clone().with_eps(1.0).with_seed(cfg.master_seed.wrapping_add(1000)),
        &[],
    )?;
    let d = density_at_zero(&limit.terminals(), 0.1)?;
    let lower = d.lower_bound(0.99);
    r.check(
        "loops.density_at_zero",
        lower > 0.0,
        format!("limit density at 0: {:.4} (99% lower bound {:.4})", d.value, lower),
    );
    for p in &slope.points {
        r.stat(format!("p_hat(eps={})", p.eps), p.density.value, p.density.std_error, Some(p.density.n));
        if let Some((v, se)) = p.scaled {
            r.stat(format!("eps^(Q/2)*p_hat(eps={})", p.eps), v, Some(se), Some(p.density.n));
        }
    }
    r.stat("slope", slope.slope, Some(slope.slope_se), Some(slope.points.len()));
    r.stat("q_bar(0)", d.value, d.std_error, Some(d.n));
    Ok(HeatOutput {
        report: r,
        slope,
        limit_density: (d.value, lower),
    })
}

/// Times at which loops are compared.
pub const COMPARE_TIMES: [f64; 3] = [0.25, 0.5, 0.75];

pub struct LoopsOutput {
    pub report: Report,
    /// Loops at each eps on the grid `k/64`.
    pub loops: Vec<LoopEnsemble>,
    pub limit: LoopEnsemble,
    /// Each eps against the limit, at [`COMPARE_TIMES`].
    pub comparisons: Vec<LoopComparison>,
    pub tightness: TightnessReport,
    pub collapse: CollapseReport,
}

/// Lag range for the fourth-moment fit. Short lags keep the `(1 - h)^2`
/// factor of a bridge from bending the log-log line.
pub const TIGHTNESS_LAGS: (f64, f64) = (1.0 / 64.0, 1.0 / 16.0);

/// Energy-test p-value above which an ensemble counts as indistinguishable
/// from the limit.
pub const NULL_LEVEL: f64 = 0.05;

pub fn loop_times() -> Vec<f64> {
    (0..=64).map(|k| f64::from(k) / 64.0).collect()
}

/// Loops at each eps and for the limit, their comparison, the tightness
/// check at the smallest eps and the `sqrt(eps)` collapse.
pub fn loops(
    mf: &ModelFile,
    eps: &[f64],
    cfg: &SimConfig,
    limit_paths: usize,
    radius: f64,
    min_accepted: usize,
    opts: &Options,
) -> Result<LoopsOutput> {
    if eps.is_empty() {
        return Err(Error::Config("at least one eps is required".into()));
    }
    let nil = nilpotent(mf, opts)?;
    let model = adapted_model(mf, &nil.chart, opts)?;
    let times = loop_times();
    let loops = eps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let c = cfg.clone().with_eps(e).with_seed(cfg.master_seed.wrapping_add(i as u64));
            sample_loops(&model, &c, radius, &times, min_accepted)
        })
        .collect::<Result<Vec<_>>>()?;
    let limit_cfg = cfg.clone().with_paths(limit_paths).with_seed(cfg.master_seed.wrapping_add(1000));
    let limit = sample_limit_loops(&nil.system, &limit_cfg, radius, &times, min_accepted)?;
    let limit_c = limit.restrict(&COMPARE_TIMES)?;
    let comparisons = loops
        .iter()
        .map(|l| compare_loop_laws(&l.restrict(&COMPARE_TIMES)?, &limit_c, cfg.master_seed))
        .collect::<Result<Vec<_>>>()?;

    let mut r = Report::new(format!("loops {}", mf.name));
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    let energies: Vec<f64> = order.iter().map(|&i| comparisons[i].energy.statistic).collect();
    // a pair where neither ensemble is distinguishable from the limit
    // carries no ordering information (e.g. an exactly homogeneous model)
    let monotone = order.windows(2).all(|w| {
        let (a, b) = (&comparisons[w[0]].energy, &comparisons[w[1]].energy);
        b.statistic < a.statistic || (a.p_value > NULL_LEVEL && b.p_value > NULL_LEVEL)
    });
    r.check(
        "loops.compare_loop_laws",
        monotone,
        format!(
            "energy distance to the limit for decreasing eps: {} (p-values {})",
            energies.iter().map(|e| format!("{e:.5}")).collect::<Vec<_>>().join(", "),
            order.iter().map(|&i| format!("{:.3}", comparisons[i].energy.p_value)).collect::<Vec<_>>().join(", ")
        ),
    );
    let last = *order.last().expect("non-empty");
    let tightness = tightness_moment_check(&[&loops[last]], TIGHTNESS_LAGS.0, TIGHTNESS_LAGS.1);
    r.check(
        "loops.tightness_moment_check",
        tightness.passed(),
        format!(
            "exponent {:.3} at eps = {} (threshold {}), prefactor {:.3}",
            tightness.min_exponent, eps[last], tightness.threshold, tightness.sup_prefactor
        ),
    );
    let weights = nil.chart.structure().weights().as_slice().to_vec();
    let collapse = if eps.len() >= 2 {
        let c = collapse_from_loops(&loops.iter().collect::<Vec<_>>(), &weights)?;
        let detail = if c.vacuous {
            "vacuous: elliptic at the base point".to_string()
        } else {
            c.coordinates
                .iter()
                .map(|k| format!("coordinate {} exponent {:.3} (w-1 = {})", k.coordinate + 1, k.exponent, k.expected))
                .collect::<Vec<_>>()
                .join("; ")
        };
        r.check("loops.sqrt_eps_collapse", c.passed(), detail);
        c
    } else {
        r.note("loops.sqrt_eps_collapse skipped: needs at least two eps values");
        CollapseReport {
            vacuous: false,
            coordinates: Vec::new(),
        }
    };

    for (l, c) in loops.iter().zip(&comparisons) {
        r.stat(format!("acceptance_rate(eps={})", l.eps), l.acceptance_rate, None, Some(l.simulated));
        r.stat(format!("energy(eps={})", l.eps), c.energy.statistic, None, Some(l.len()));
        r.stat(format!("energy_p(eps={})", l.eps), c.energy.p_value, None, Some(c.energy.permutations));
        r.stat(format!("max_ks(eps={})", l.eps), c.max_ks(), None, Some(l.len()));
        for m in &c.marginals {
            r.long.push((l.eps, m.time, m.coordinate + 1, "ks".into(), m.ks.statistic));
        }
        for (t, &time) in l.times.iter().enumerate() {
            if COMPARE_TIMES.iter().any(|s| (s - time).abs() < 1e-9) {
                for k in 0..l.dim() {
                    r.long.push((l.eps, time, k + 1, "variance".into(), crate::stats::variance(&l.coordinate_at(t, k))));
                }
            }
        }
    }
    r.stat("acceptance_rate(limit)", limit.acceptance_rate, None, Some(limit.simulated));
    Ok(LoopsOutput {
        report: r,
        loops,
        limit,
        comparisons,
        tightness,
        collapse,
    })
}

/// Reweighted-bridge oracle; `reference` is a sample of the limit loop's
/// first coordinate at `t = 1/2`.
pub fn oracle_bridge(n: usize, steps: usize, seed: u64, reference: Option<&[f64]>) -> Result<Report> {
    let b = reweighted_bridge_oracle(n, steps, seed, 200, 200, reference)?;
    let mut r = Report::new("oracle-bridge");
    r.check(
        "loops.reweighted_bridge_oracle",
        b.ks > 0.02 && b.p_value < 0.01,
        format!("weighted vs plain bridge KS {:.4}, permutation p {:.4}, ESS {:.0}", b.ks, b.p_value, b.ess),
    );
    match b.cross_check_ks {
        Some(ks) => r.check(
            "loops.reweighted_bridge_cross_check",
            ks <= 0.05,
            format!("KS {ks:.4} against {} conditioned limit loops", reference.map_or(0, <[f64]>::len)),
        ),
        None => r.note("cross-check against conditioned limit loops skipped"),
    }
    r.stat("ks_weighted_vs_plain", b.ks, None, Some(n));
    r.stat("p_value", b.p_value, None, Some(b.permutations));
    r.stat("ess", b.ess, None, Some(n));
    r.stat("excess_kurtosis", b.excess_kurtosis, None, Some(n));
    r.stat("excess_kurtosis_ci_low", b.kurtosis_ci.0, None, None);
    r.stat("excess_kurtosis_ci_high", b.kurtosis_ci.1, None, None);
    if let Some(ks) = b.cross_check_ks {
        r.stat("ks_cross_check", ks, None, reference.map(<[f64]>::len));
    }
    Ok(r)
}
