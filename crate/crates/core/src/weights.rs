//! Graded weights, graded truncation and the anisotropic dilation.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{Float, Zero};

use crate::error::{check_dim, Error, Result};
use crate::field::PolyVectorField;
use crate::map::PolyMap;
use crate::poly::Monomial;
use crate::Rational;

/// Coordinate weights `w_1 <= ... <= w_d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Weights(Vec<u32>);

impl Weights {
    pub fn new(w: Vec<u32>) -> Result<Self> {
        if w.is_empty() || w.contains(&0) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        Ok(Weights(w))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn max(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(1)
    }

    /// Homogeneous dimension `sum_k w_k`.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Weight of the monomial field `y^alpha d/dy^k`: `w_k - sum_j alpha_j w_j`.
    pub fn monomial_weight(&self, m: &Monomial, k: usize) -> i64 {
        i64::from(self.0[k]) - m.weighted_degree(&self.0)
    }

    /// `delta_eps(p)`: coordinate `k` scaled by `eps^{w_k/2}`.
    pub fn dilate(&self, p: &[f64], eps: f64) -> Result<Vec<f64>> {
        Ok(Dilation::new(self.clone(), eps)?.apply(p))
    }

    pub fn dilate_inverse(&self, p: &[f64], eps: f64) -> Result<Vec<f64>> {
        Ok(Dilation::new(self.clone(), eps)?.apply_inverse(p))
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.0.iter().map(|w| format!("{w}")).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Graded order of a field: the largest weight among its monomial terms,
/// `NegInfinity` for the zero field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GradedWeight {
    NegInfinity,
    Finite(i64),
}

impl fmt::Display for GradedWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradedWeight::NegInfinity => f.write_str("-inf"),
            GradedWeight::Finite(w) => write!(f, "{w}"),
        }
    }
}

pub fn graded_weight(x: &PolyVectorField, weights: &Weights) -> Result<GradedWeight> {
    check_dim(x.dim(), weights.dim())?;
    let mut best = GradedWeight::NegInfinity;
    for (k, c) in x.components().iter().enumerate() {
        for (m, _) in c.terms() {
            best = best.max(GradedWeight::Finite(weights.monomial_weight(m, k)));
        }
    }
    Ok(best)
}

/// `X^{(n)}`: the monomial terms of weight at least `n`.
pub fn graded_truncate(x: &PolyVectorField, n: i64, weights: &Weights) -> Result<PolyVectorField> {
    check_dim(x.dim(), weights.dim())?;
    let comps = x
        .components()
        .iter()
        .enumerate()
        .map(|(k, c)| c.filter_terms(|m, _| weights.monomial_weight(m, k) >= n))
        .collect();
    PolyVectorField::new(comps)
}

/// Every monomial term as `(component, monomial, coefficient, weight)`.
pub fn weighted_terms<'a>(
    x: &'a PolyVectorField,
    weights: &'a Weights,
) -> impl Iterator<Item = (usize, &'a Monomial, &'a Rational, i64)> + 'a {
    x.components().iter().enumerate().flat_map(move |(k, c)| {
        c.terms().map(move |(m, v)| (k, m, v, weights.monomial_weight(m, k)))
    })
}

/// Numeric anisotropic dilation `delta_eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dilation {
    weights: Weights,
    eps: f64,
    factors: Vec<f64>,
}

impl Dilation {
    pub fn new(weights: Weights, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidScale(format!("eps must be positive and finite, got {eps}")));
        }
        let factors = weights
            .as_slice()
            .iter()
            .map(|&w| Float::powf(eps, f64::from(w) / 2.0))
            .collect();
        Ok(Dilation { weights, eps, factors })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Per-coordinate factors `eps^{w_k/2}`.
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.factors).map(|(x, f)| x * f).collect()
    }

    pub fn apply_inverse(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.factors).map(|(x, f)| x / f).collect()
    }

    /// `delta_eps ∘ delta_eps' = delta_{eps eps'}`.
    pub fn compose(&self, other: &Dilation) -> Result<Dilation> {
        if self.weights != other.weights {
            return Err(Error::InvalidArgument("dilations with different weights".into()));
        }
        Dilation::new(self.weights.clone(), self.eps * other.eps)
    }
}

/// The exact linear map `delta_eps^{-1}` for `eps = s^2`, `s` rational, as a
/// [`PolyMap`] with inverse `delta_eps`.
pub fn exact_inverse_dilation(weights: &Weights, s: &Rational) -> Result<PolyMap> {
    if *s <= Rational::zero() {
        return Err(Error::InvalidScale("sqrt(eps) must be positive".into()));
    }
    let d = weights.dim();
    let a: Vec<Vec<Rational>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        num_traits::pow(s.recip(), weights.0[i] as usize)
                    } else {
                        Rational::zero()
                    }
                })
                .collect()
        })
        .collect();
    PolyMap::affine(&a, &alloc::vec![Rational::zero(); d])
}

/// Exact evaluation of `delta_eps(p)` for `eps = s^2`.
pub fn exact_dilate(weights: &Weights, s: &Rational, p: &[Rational]) -> Vec<Rational> {
    p.iter()
        .zip(weights.as_slice())
        .map(|(x, &w)| x * num_traits::pow(s.clone(), w as usize))
        .collect()
}
