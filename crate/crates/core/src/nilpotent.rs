//! Nilpotent approximations `X~_i = (theta_* X_i)^{(1)}` and the structural
//! checks they must pass: homogeneity, cascade form, the bracket flag at the
//! origin, and the Hörmander condition away from it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{Signed, Zero};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::chart::AdaptedChart;
use crate::error::{check_dim, Result};
use crate::field::{ito_drift_correction, PolyVectorField};
use crate::grading::{BracketTable, GradedStructure};
use crate::linalg::{self, NUMERIC_RANK_TOL};
use crate::map::{pushforward, PolyMap};
use crate::poly::Monomial;
use crate::weights::{exact_dilate, exact_inverse_dilation, graded_truncate, weighted_terms, Weights};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NilpotentSystem {
    fields: Vec<PolyVectorField>,
    drift_tilde: PolyVectorField,
    structure: GradedStructure,
    chart: PolyMap,
}

impl NilpotentSystem {
    /// Assembles a system from already-truncated fields; the Itô drift
    /// `1/2 sum (J X~_i) X~_i` is recomputed.
    pub fn new(fields: Vec<PolyVectorField>, structure: GradedStructure, chart: PolyMap) -> Result<Self> {
        let d = structure.dim();
        for f in &fields {
            check_dim(d, f.dim())?;
        }
        let drift_tilde = ito_drift_correction(&PolyVectorField::zero(d), &fields)?;
        Ok(NilpotentSystem {
            fields,
            drift_tilde,
            structure,
            chart,
        })
    }

    pub fn fields(&self) -> &[PolyVectorField] {
        &self.fields
    }

    pub fn drift_tilde(&self) -> &PolyVectorField {
        &self.drift_tilde
    }

    pub fn structure(&self) -> &GradedStructure {
        &self.structure
    }

    pub fn weights(&self) -> &Weights {
        self.structure.weights()
    }

    /// The chart the approximation was taken in.
    pub fn chart(&self) -> &PolyMap {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }
}

/// Pushes the generators through the chart and keeps the weight-1 part.
pub fn nilpotentize(
    generators: &[PolyVectorField],
    chart: &AdaptedChart,
    max_degree: u32,
) -> Result<NilpotentSystem> {
    let weights = chart.structure().weights();
    let fields = generators
        .iter()
        .map(|x| graded_truncate(&pushforward(chart.theta(), x, max_degree)?, 1, weights))
        .collect::<Result<Vec<_>>>()?;
    NilpotentSystem::new(fields, chart.structure().clone(), chart.theta().clone())
}

/// Deterministic small rational sample points in `[-4, 4]^d`.
pub fn rational_sample_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<Rational>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let num = (rng.next_u32() % 65) as i64 - 32;
                    let den = (rng.next_u32() % 8) as i64 + 1;
                    Rational::new(num.into(), den.into())
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomogeneityResult {
    pub field: usize,
    /// `(component, monomial)` terms whose weight is not 1.
    pub bad_terms: Vec<(usize, Monomial, i64)>,
    /// Number of exact spot checks of `(delta_eps^{-1})_* X = eps^{-1/2} X`
    /// that failed.
    pub spot_failures: usize,
    pub spot_checks: usize,
}

impl HomogeneityResult {
    pub fn passed(&self) -> bool {
        self.bad_terms.is_empty() && self.spot_failures == 0
    }
}

/// Per-monomial weight check plus exact spot checks at `eps in {1/4, 1/9}`
/// on 20 rational points.
pub fn check_homogeneity(sys: &NilpotentSystem) -> Vec<HomogeneityResult> {
    let weights = sys.weights();
    let scales = [Rational::new(1.into(), 2.into()), Rational::new(1.into(), 3.into())];
    let points = rational_sample_points(sys.dim(), 20, 0x5eed_0001);
    sys.fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let bad_terms = weighted_terms(f, weights)
                .filter(|(_, _, _, w)| *w != 1)
                .map(|(k, m, _, w)| (k, m.clone(), w))
                .collect();
            let mut spot_failures = 0;
            let mut spot_checks = 0;
            for s in &scales {
                for p in &points {
                    spot_checks += 1;
                    // delta^{-1}(X(delta p)) vs s^{-1} X(p)
                    let dp = exact_dilate(weights, s, p);
                    let lhs: Vec<Rational> = f
                        .eval(&dp)
                        .expect("dimension checked")
                        .iter()
                        .zip(weights.as_slice())
                        .map(|(v, &w)| v / num_traits::pow(s.clone(), w as usize))
                        .collect();
                    let rhs: Vec<Rational> = f.eval(p).expect("dimension checked").iter().map(|v| v / s).collect();
                    if lhs != rhs {
                        spot_failures += 1;
                    }
                }
            }
            HomogeneityResult {
                field: i,
                bad_terms,
                spot_failures,
                spot_checks,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CascadeResult {
    pub field: usize,
    /// `(component, monomial, reason)`.
    pub offending: Vec<(usize, Monomial, String)>,
}

impl CascadeResult {
    pub fn passed(&self) -> bool {
        self.offending.is_empty()
    }
}

/// Component `k` may not contain variables of weight `>= w_k` and must be
/// affine in the variables of weight `w_k - 1`.
pub fn check_cascade(sys: &NilpotentSystem) -> Vec<CascadeResult> {
    let w = sys.weights().as_slice();
    sys.fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut offending = Vec::new();
            for (k, c) in f.components().iter().enumerate() {
                for (m, _) in c.terms() {
                    let e = m.exponents();
                    if let Some(j) = (0..e.len()).find(|&j| e[j] > 0 && w[j] >= w[k]) {
                        offending.push((k, m.clone(), format!("depends on y{} of weight {} >= {}", j + 1, w[j], w[k])));
                        continue;
                    }
                    let top: u32 = (0..e.len()).filter(|&j| w[j] + 1 == w[k]).map(|j| e[j]).sum();
                    if top > 1 {
                        offending.push((k, m.clone(), format!("degree {top} in weight-{} variables", w[k] - 1)));
                    }
                }
            }
            CascadeResult { field: i, offending }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualTerm {
    pub component: usize,
    pub monomial: Monomial,
    /// `p` such that the coefficient scales like `eps^{p/2}`; `None` when
    /// the measured ratio is not an integer power.
    pub exponent: Option<i32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergenceReport {
    pub field: usize,
    pub residual: Vec<ResidualTerm>,
}

impl ConvergenceReport {
    pub fn min_exponent(&self) -> Option<i32> {
        self.residual.iter().filter_map(|t| t.exponent).min()
    }

    pub fn passed(&self) -> bool {
        self.residual.iter().all(|t| matches!(t.exponent, Some(p) if p >= 1))
    }
}

/// Smallest integer `p` in `[-64, 64]` with `base^p == ratio`, exactly.
fn exact_log(ratio: &Rational, base: &Rational) -> Option<i32> {
    if !ratio.is_positive() {
        return None;
    }
    (-64..=64).find(|&p: &i32| {
        let b = if p >= 0 {
            num_traits::pow(base.clone(), p as usize)
        } else {
            num_traits::pow(base.recip(), (-p) as usize)
        };
        &b == ratio
    })
}

/// Computes `sqrt(eps) (delta_eps^{-1})_* (theta_* X_i) - X~_i` exactly for
/// `eps = s^2` over the given `s` values and measures how each residual
/// coefficient scales. At least two scales are needed to measure exponents.
pub fn check_convergence_to_nilpotent(
    generators: &[PolyVectorField],
    chart: &AdaptedChart,
    sqrt_eps: &[Rational],
    max_degree: u32,
) -> Result<Vec<ConvergenceReport>> {
    let weights = chart.structure().weights();
    let mut out = Vec::new();
    for (i, x) in generators.iter().enumerate() {
        let pushed = pushforward(chart.theta(), x, max_degree)?;
        let tilde = graded_truncate(&pushed, 1, weights)?;
        let mut residuals = Vec::with_capacity(sqrt_eps.len());
        for s in sqrt_eps {
            let dil = exact_inverse_dilation(weights, s)?;
            let scaled = pushforward(&dil, &pushed, max_degree)?.scale(s);
            residuals.push(scaled.sub(&tilde)?);
        }
        let mut terms: Vec<(usize, Monomial)> = Vec::new();
        for r in &residuals {
            for (k, c) in r.components().iter().enumerate() {
                for (m, _) in c.terms() {
                    if !terms.iter().any(|(kk, mm)| *kk == k && mm == m) {
                        terms.push((k, m.clone()));
                    }
                }
            }
        }
        let residual = terms
            .into_iter()
            .map(|(k, m)| {
                let coeffs: Vec<Rational> = residuals.iter().map(|r| r.component(k).coefficient(&m)).collect();
                let exponent = if sqrt_eps.len() < 2 || coeffs.iter().any(Zero::is_zero) {
                    None
                } else {
                    let mut ps = coeffs.windows(2).zip(sqrt_eps.windows(2)).map(|(c, s)| exact_log(&(&c[0] / &c[1]), &(&s[0] / &s[1])));
                    let first = ps.next().flatten();
                    if ps.all(|p| p == first) {
                        first
                    } else {
                        None
                    }
                };
                ResidualTerm {
                    component: k,
                    monomial: m,
                    exponent,
                }
            })
            .collect();
        out.push(ConvergenceReport { field: i, residual });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagLevel {
    pub n: usize,
    pub expected: usize,
    pub rank: usize,
    /// All bracket values of depth `<= n` vanish beyond coordinate `d_n`.
    pub aligned: bool,
}

impl FlagLevel {
    pub fn passed(&self) -> bool {
        self.rank == self.expected && self.aligned
    }
}

/// Exact rank and alignment of the nilpotent bracket values at the origin,
/// level by level.
pub fn check_bracket_flag(sys: &NilpotentSystem) -> Result<Vec<FlagLevel>> {
    let big_n = sys.structure.step();
    let d = sys.dim();
    let origin = vec![Rational::zero(); d];
    let table = BracketTable::up_to(&sys.fields, big_n)?;
    (1..=big_n)
        .map(|n| {
            let vals = table.values_at(n, &origin)?;
            let dn = sys.structure.d(n);
            Ok(FlagLevel {
                n,
                expected: dn,
                rank: linalg::rank(&vals),
                aligned: vals.iter().all(|v| v[dn..].iter().all(Zero::is_zero)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HormanderReport {
    pub ranks: Vec<usize>,
    pub failing_points: Vec<usize>,
}

impl HormanderReport {
    pub fn passed(&self) -> bool {
        self.failing_points.is_empty()
    }
}

/// Numeric rank of all brackets up to the step at each point.
pub fn check_strong_hormander_everywhere(sys: &NilpotentSystem, points: &[Vec<f64>]) -> Result<HormanderReport> {
    let d = sys.dim();
    let table = BracketTable::up_to(&sys.fields, sys.structure.step())?;
    let mut ranks = Vec::with_capacity(points.len());
    let mut failing_points = Vec::new();
    for (i, p) in points.iter().enumerate() {
        check_dim(d, p.len())?;
        let vals = table.values_at_f64(table.max_depth(), p);
        let r = if vals.is_empty() { 0 } else { linalg::numeric_rank(&vals, NUMERIC_RANK_TOL) };
        if r != d {
            failing_points.push(i);
        }
        ranks.push(r);
    }
    Ok(HormanderReport { ranks, failing_points })
}

/// `sqrt(eps)` values `1/2, 1/3, 1/5` used by the convergence check.
pub fn default_sqrt_eps_grid() -> Vec<Rational> {
    vec![
        Rational::new(1.into(), 2.into()),
        Rational::new(1.into(), 3.into()),
        Rational::new(1.into(), 5.into()),
    ]
}
