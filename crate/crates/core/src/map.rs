//! Polynomial maps with (optional) polynomial inverses, and pushforwards of
//! vector fields along them.

use alloc::vec::Vec;

use num_traits::Zero;

use crate::error::{check_dim, Error, Result};
use crate::field::PolyVectorField;
use crate::linalg;
use crate::poly::Polynomial;
use crate::Rational;

/// Default cap on the total degree of composition results.
pub const DEFAULT_MAX_DEGREE: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMap {
    components: Vec<Polynomial>,
    inverse: Option<Vec<Polynomial>>,
}

impl PolyMap {
    /// A map without a known inverse.
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let dim = components.len();
        for c in &components {
            check_dim(dim, c.dim())?;
        }
        Ok(PolyMap {
            components,
            inverse: None,
        })
    }

    /// A map together with its inverse; both compositions are checked to be
    /// exactly the identity.
    pub fn with_inverse(components: Vec<Polynomial>, inverse: Vec<Polynomial>) -> Result<Self> {
        let dim = components.len();
        check_dim(dim, inverse.len())?;
        for c in components.iter().chain(&inverse) {
            check_dim(dim, c.dim())?;
        }
        let forward_then_back = compose_lists(&inverse, &components)?;
        let back_then_forward = compose_lists(&components, &inverse)?;
        let id = identity_components(dim);
        if forward_then_back != id || back_then_forward != id {
            return Err(Error::InverseMismatch);
        }
        Ok(PolyMap {
            components,
            inverse: Some(inverse),
        })
    }

    pub fn identity(dim: usize) -> Self {
        PolyMap {
            components: identity_components(dim),
            inverse: Some(identity_components(dim)),
        }
    }

    /// `y = A (x - x0)` with inverse `x = x0 + A^{-1} y`; `a` is row-major.
    pub fn affine(a: &[Vec<Rational>], x0: &[Rational]) -> Result<Self> {
        let dim = x0.len();
        check_dim(dim, a.len())?;
        let a_inv = linalg::inverse(a).ok_or_else(|| Error::InvalidArgument("singular linear part".into()))?;
        let vars: Vec<Polynomial> = (0..dim).map(|i| Polynomial::var(dim, i)).collect();
        let shifted: Vec<Polynomial> = vars
            .iter()
            .zip(x0)
            .map(|(v, c)| v - &Polynomial::constant(dim, c.clone()))
            .collect();
        let forward = linear_combination(a, &shifted);
        let mut inverse = linear_combination(&a_inv, &vars);
        for (p, c) in inverse.iter_mut().zip(x0) {
            *p += &Polynomial::constant(dim, c.clone());
        }
        Ok(PolyMap {
            components: forward,
            inverse: Some(inverse),
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn inverse(&self) -> Option<&[Polynomial]> {
        self.inverse.as_deref()
    }

    /// The inverse as a map of its own.
    pub fn inverted(&self) -> Result<PolyMap> {
        let inv = self.inverse.clone().ok_or(Error::MissingInverse)?;
        Ok(PolyMap {
            components: inv,
            inverse: Some(self.components.clone()),
        })
    }

    pub fn eval(&self, point: &[Rational]) -> Result<Vec<Rational>> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }

    /// Row-major Jacobian `J[k][j] = d phi^k / d x^j`.
    pub fn jacobian(&self) -> Vec<Vec<Polynomial>> {
        let dim = self.dim();
        self.components
            .iter()
            .map(|c| (0..dim).map(|j| c.partial(j)).collect())
            .collect()
    }

    pub fn jacobian_at(&self, point: &[Rational]) -> Result<Vec<Vec<Rational>>> {
        self.jacobian()
            .iter()
            .map(|row| row.iter().map(|p| p.eval(point)).collect())
            .collect()
    }

    /// `self ∘ inner`, inverse composed in the opposite order when both exist.
    pub fn then_after(&self, inner: &PolyMap) -> Result<PolyMap> {
        check_dim(self.dim(), inner.dim())?;
        let components = compose_lists(&self.components, &inner.components)?;
        let inverse = match (&inner.inverse, &self.inverse) {
            (Some(a), Some(b)) => Some(compose_lists(a, b)?),
            _ => None,
        };
        Ok(PolyMap { components, inverse })
    }
}

fn identity_components(dim: usize) -> Vec<Polynomial> {
    (0..dim).map(|i| Polynomial::var(dim, i)).collect()
}

fn linear_combination(a: &[Vec<Rational>], vars: &[Polynomial]) -> Vec<Polynomial> {
    let dim = vars.first().map_or(0, Polynomial::dim);
    a.iter()
        .map(|row| {
            let mut p = Polynomial::zero(dim);
            for (c, v) in row.iter().zip(vars) {
                if !c.is_zero() {
                    p += &v.scale(c);
                }
            }
            p
        })
        .collect()
}

/// `outer ∘ inner` component-wise.
pub(crate) fn compose_lists(outer: &[Polynomial], inner: &[Polynomial]) -> Result<Vec<Polynomial>> {
    outer.iter().map(|p| p.compose(inner)).collect()
}

/// `(J phi . X) ∘ phi^{-1}`, computed exactly. Fails with
/// [`Error::DegreeOverflow`] when the result could exceed `max_degree`.
pub fn pushforward(phi: &PolyMap, x: &PolyVectorField, max_degree: u32) -> Result<PolyVectorField> {
    check_dim(phi.dim(), x.dim())?;
    let inv = phi.inverse.as_ref().ok_or(Error::MissingInverse)?;
    let jac = phi.jacobian();
    let mut out = Vec::with_capacity(phi.dim());
    for row in &jac {
        let mut acc = Polynomial::zero(phi.dim());
        for (djk, xj) in row.iter().zip(x.components()) {
            if !djk.is_zero() && !xj.is_zero() {
                acc += &(djk * xj);
            }
        }
        let bound = acc.composed_degree_bound(inv);
        if bound > max_degree {
            return Err(Error::DegreeOverflow {
                degree: bound,
                max: max_degree,
            });
        }
        out.push(acc.compose(inv)?);
    }
    PolyVectorField::new(out)
}

/// Lower-triangular maps `y_k = x_k + P_k(x_1, ..., x_{k-1})` always have a
/// polynomial inverse; this builds it by forward substitution.
pub fn triangular(corrections: Vec<Polynomial>) -> Result<PolyMap> {
    let dim = corrections.len();
    let mut components = Vec::with_capacity(dim);
    let mut inverse: Vec<Polynomial> = Vec::with_capacity(dim);
    for (k, p) in corrections.iter().enumerate() {
        check_dim(dim, p.dim())?;
        if p.terms().any(|(m, _)| m.exponents()[k..].iter().any(|&e| e > 0)) {
            return Err(Error::InvalidArgument(
                "triangular correction depends on a later variable".into(),
            ));
        }
        components.push(&Polynomial::var(dim, k) + p);
        // x_k = y_k - P_k(x_1..x_{k-1}) with x_j already expressed in y
        let mut subs: Vec<Polynomial> = inverse.clone();
        for j in k..dim {
            subs.push(Polynomial::var(dim, j));
        }
        let back = p.compose(&subs)?;
        inverse.push(&Polynomial::var(dim, k) - &back);
    }
    Ok(PolyMap {
        components,
        inverse: Some(inverse),
    })
}
