//! Polynomial vector fields `X = sum_k X^k d/dy^k` and the operations the
//! graded analysis is built from.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{check_dim, Error, Result};
use crate::poly::Polynomial;
use crate::syntax::{format_list, VarNames};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolyVectorField {
    components: Vec<Polynomial>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("vector field needs at least one component".into()));
        }
        for c in &components {
            check_dim(dim, c.dim())?;
        }
        Ok(PolyVectorField { components })
    }

    pub fn zero(dim: usize) -> Self {
        PolyVectorField {
            components: (0..dim).map(|_| Polynomial::zero(dim)).collect(),
        }
    }

    /// The constant field `d/dy^{index+1}`.
    pub fn coordinate(dim: usize, index: usize) -> Self {
        let mut f = Self::zero(dim);
        f.components[index] = Polynomial::one(dim);
        f
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Polynomial {
        &self.components[k]
    }

    pub fn into_components(self) -> Vec<Polynomial> {
        self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn degree(&self) -> Option<u32> {
        self.components.iter().filter_map(Polynomial::degree).max()
    }

    /// Directional derivative `X g = sum_k X^k dg/dy^k`.
    pub fn derivative_of(&self, g: &Polynomial) -> Result<Polynomial> {
        check_dim(self.dim(), g.dim())?;
        let mut out = Polynomial::zero(g.dim());
        for (k, xk) in self.components.iter().enumerate() {
            if xk.is_zero() {
                continue;
            }
            let dg = g.partial(k);
            if !dg.is_zero() {
                out += &(xk * &dg);
            }
        }
        Ok(out)
    }

    /// `(J_self) * other`, i.e. the covariant derivative of `self` along
    /// `other` for the flat connection.
    pub fn derivative_along(&self, other: &PolyVectorField) -> Result<PolyVectorField> {
        check_dim(self.dim(), other.dim())?;
        let components = self
            .components
            .iter()
            .map(|c| other.derivative_of(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolyVectorField { components })
    }

    pub fn eval(&self, point: &[Rational]) -> Result<Vec<Rational>> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }

    pub fn eval_f64(&self, point: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval_f64(point)).collect()
    }

    pub fn scale(&self, c: &Rational) -> PolyVectorField {
        PolyVectorField {
            components: self.components.iter().map(|p| p.scale(c)).collect(),
        }
    }

    /// Multiplies every component by the scalar polynomial `f`.
    pub fn mul_scalar(&self, f: &Polynomial) -> Result<PolyVectorField> {
        check_dim(self.dim(), f.dim())?;
        Ok(PolyVectorField {
            components: self.components.iter().map(|p| p * f).collect(),
        })
    }

    pub fn add(&self, other: &PolyVectorField) -> Result<PolyVectorField> {
        check_dim(self.dim(), other.dim())?;
        Ok(PolyVectorField {
            components: self.components.iter().zip(&other.components).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &PolyVectorField) -> Result<PolyVectorField> {
        check_dim(self.dim(), other.dim())?;
        Ok(PolyVectorField {
            components: self.components.iter().zip(&other.components).map(|(a, b)| a - b).collect(),
        })
    }

    /// Applies `f` component-wise.
    pub fn map_components<F>(&self, f: F) -> PolyVectorField
    where
        F: FnMut(&Polynomial) -> Polynomial,
    {
        PolyVectorField {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn display_with<'a>(&'a self, names: &'a VarNames) -> FieldDisplay<'a> {
        FieldDisplay { field: self, names }
    }
}

pub struct FieldDisplay<'a> {
    field: &'a PolyVectorField,
    names: &'a VarNames,
}

impl fmt::Display for FieldDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_list(&self.field.components, self.names))
    }
}

impl fmt::Display for PolyVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_list(&self.components, &VarNames::x(self.dim())))
    }
}

/// `[X, Y] = (JY) X - (JX) Y`.
pub fn lie_bracket(x: &PolyVectorField, y: &PolyVectorField) -> Result<PolyVectorField> {
    check_dim(x.dim(), y.dim())?;
    y.derivative_along(x)?.sub(&x.derivative_along(y)?)
}

/// Itô form of the drift, `X0 + 1/2 sum_i (J X_i) X_i`.
pub fn ito_drift_correction(x0: &PolyVectorField, diffusion: &[PolyVectorField]) -> Result<PolyVectorField> {
    let half = Rational::new(1.into(), 2.into());
    let mut acc = PolyVectorField::zero(x0.dim());
    for xi in diffusion {
        check_dim(x0.dim(), xi.dim())?;
        acc = acc.add(&xi.derivative_along(xi)?)?;
    }
    x0.add(&acc.scale(&half))
}

/// `Y1(Y2(...(Yn g)...))`. An empty list returns `g`.
pub fn apply_operator(ops: &[PolyVectorField], g: &Polynomial) -> Result<Polynomial> {
    let mut acc = g.clone();
    for y in ops.iter().rev() {
        acc = y.derivative_of(&acc)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_field, parse_polynomial};

    fn example() -> (PolyVectorField, PolyVectorField) {
        (
            parse_field("[1, x1]", 2).unwrap(),
            parse_field("[x1, 0]", 2).unwrap(),
        )
    }

    fn heisenberg() -> (PolyVectorField, PolyVectorField) {
        (
            parse_field("[1, 0, -1/2*x2]", 3).unwrap(),
            parse_field("[0, 1, 1/2*x1]", 3).unwrap(),
        )
    }

    #[test]
    fn example_brackets() {
        let (x1, x2) = example();
        let b = lie_bracket(&x1, &x2).unwrap();
        assert_eq!(b, parse_field("[1, -x1]", 2).unwrap());
        let bb = lie_bracket(&x1, &b).unwrap();
        assert_eq!(bb, parse_field("[0, -2]", 2).unwrap());
    }

    #[test]
    fn self_bracket_vanishes() {
        let (x1, x2) = example();
        assert!(lie_bracket(&x1, &x1).unwrap().is_zero());
        assert!(lie_bracket(&x2, &x2).unwrap().is_zero());
    }

    #[test]
    fn heisenberg_bracket() {
        let (x1, x2) = heisenberg();
        assert_eq!(
            lie_bracket(&x1, &x2).unwrap(),
            PolyVectorField::coordinate(3, 2)
        );
    }

    #[test]
    fn bracket_dimension_mismatch() {
        let (x1, _) = example();
        let (h1, _) = heisenberg();
        assert_eq!(
            lie_bracket(&x1, &h1),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        );
    }

    #[test]
    fn ito_corrections() {
        let e: Vec<_> = (0..3).map(|i| PolyVectorField::coordinate(3, i)).collect();
        assert!(ito_drift_correction(&PolyVectorField::zero(3), &e).unwrap().is_zero());

        let (h1, h2) = heisenberg();
        assert!(ito_drift_correction(&PolyVectorField::zero(3), &[h1, h2]).unwrap().is_zero());

        let (x1, x2) = example();
        // only X2 = x1 d1 is listed, as in the one-step product rule check
        let c = ito_drift_correction(&PolyVectorField::zero(2), core::slice::from_ref(&x2)).unwrap();
        assert_eq!(c, parse_field("[1/2*x1, 0]", 2).unwrap());
        // the full Example drift adds 1/2 (J X1) X1 = 1/2 d2
        let full = ito_drift_correction(&PolyVectorField::zero(2), &[x1, x2]).unwrap();
        assert_eq!(full, parse_field("[1/2*x1, 1/2]", 2).unwrap());
    }

    #[test]
    fn operators() {
        let (x1, _) = example();
        let g = parse_polynomial("x2", 2).unwrap();
        let v = apply_operator(&[x1.clone(), x1.clone()], &g).unwrap();
        assert_eq!(v.eval(&[Rational::from_integer(0.into()), Rational::from_integer(0.into())]).unwrap(), Rational::from_integer(1.into()));

        assert_eq!(apply_operator(&[], &g).unwrap(), g);

        let h = parse_polynomial("x1*x2", 2).unwrap();
        let d1 = PolyVectorField::coordinate(2, 0);
        assert_eq!(apply_operator(&[d1], &h).unwrap(), parse_polynomial("x2", 2).unwrap());
    }
}
