//! Floating-point evaluators for polynomials, fields and maps, with
//! derivatives precomputed symbolically.

use alloc::vec::Vec;

use num_traits::Float;

use crate::field::PolyVectorField;
use crate::map::PolyMap;
use crate::poly::{rational_to_f64, Polynomial};

/// A polynomial flattened to `(coefficient, [(var, exponent)])` terms.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let terms = p
            .terms()
            .map(|(m, c)| {
                let factors = m
                    .exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(j, &e)| (j, e as i32))
                    .collect();
                (rational_to_f64(c), factors)
            })
            .collect();
        CompiledPoly { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(j, e) in factors {
                t *= if e == 1 { x[j] } else { Float::powi(x[j], e) };
            }
            acc += t;
        }
        acc
    }
}

/// A vector field with its Jacobian and, optionally, the second derivatives
/// of every component.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledField {
    dim: usize,
    components: Vec<CompiledPoly>,
    /// Row-major `d x d`: entry `k * d + j` is `d X^k / d x_j`.
    jacobian: Vec<CompiledPoly>,
    /// Entry `(k * d + j) * d + l` is `d^2 X^k / d x_j d x_l`.
    hessian: Option<Vec<CompiledPoly>>,
}

impl CompiledField {
    pub fn new(x: &PolyVectorField) -> Self {
        let d = x.dim();
        let components = x.components().iter().map(CompiledPoly::new).collect();
        let jacobian = x
            .components()
            .iter()
            .flat_map(|c| (0..d).map(move |j| CompiledPoly::new(&c.partial(j))))
            .collect();
        CompiledField {
            dim: d,
            components,
            jacobian,
            hessian: None,
        }
    }

    pub fn with_hessian(x: &PolyVectorField) -> Self {
        let d = x.dim();
        let mut f = CompiledField::new(x);
        let mut h = Vec::with_capacity(d * d * d);
        for c in x.components() {
            for j in 0..d {
                let cj = c.partial(j);
                for l in 0..d {
                    h.push(CompiledPoly::new(&cj.partial(l)));
                }
            }
        }
        f.hessian = Some(h);
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.jacobian) {
            *o = if c.is_zero() { 0.0 } else { c.eval(x) };
        }
    }

    /// Panics when built without [`CompiledField::with_hessian`].
    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        let h = self.hessian.as_ref().expect("compiled without second derivatives");
        for (o, c) in out.iter_mut().zip(h) {
            *o = if c.is_zero() { 0.0 } else { c.eval(x) };
        }
    }
}

/// A polynomial map evaluated in floating point, with its inverse when known.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledMap {
    forward: Vec<CompiledPoly>,
    inverse: Option<Vec<CompiledPoly>>,
}

impl CompiledMap {
    pub fn new(phi: &PolyMap) -> Self {
        CompiledMap {
            forward: phi.components().iter().map(CompiledPoly::new).collect(),
            inverse: phi.inverse().map(|inv| inv.iter().map(CompiledPoly::new).collect()),
        }
    }

    pub fn dim(&self) -> usize {
        self.forward.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.forward.iter().map(|c| c.eval(x)).collect()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.forward) {
            *o = c.eval(x);
        }
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.inverse.as_ref().map(|inv| inv.iter().map(|c| c.eval(y)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_field, parse_polynomial};
    use alloc::vec;

    #[test]
    fn matches_exact_evaluation() {
        let f = parse_field("[x1^2*x2 - 3, 1/2*x1 + x2^3]", 2).unwrap();
        let c = CompiledField::with_hessian(&f);
        let x = [0.5, -2.0];
        assert_eq!(c.eval(&x), vec![0.25 * -2.0 - 3.0, 0.25 - 8.0]);
        let mut j = [0.0; 4];
        c.jacobian_into(&x, &mut j);
        assert_eq!(j, [2.0 * 0.5 * -2.0, 0.25, 0.5, 3.0 * 4.0]);
        let mut h = [0.0; 8];
        c.hessian_into(&x, &mut h);
        // component 1: d11 = 2 x2, d12 = d21 = 2 x1, d22 = 0
        assert_eq!(&h[..4], &[-4.0, 1.0, 1.0, 0.0]);
        // component 2: d22 = 6 x2
        assert_eq!(&h[4..], &[0.0, 0.0, 0.0, -12.0]);
    }

    #[test]
    fn compiled_map_inverse() {
        let theta = PolyMap::with_inverse(
            vec![parse_polynomial("x1", 2).unwrap(), parse_polynomial("x2 - 1/2*x1^2", 2).unwrap()],
            vec![parse_polynomial("y1", 2).unwrap(), parse_polynomial("y2 + 1/2*y1^2", 2).unwrap()],
        )
        .unwrap();
        let m = CompiledMap::new(&theta);
        let y = m.apply(&[2.0, 3.0]);
        assert_eq!(y, vec![2.0, 1.0]);
        assert_eq!(m.apply_inverse(&y).unwrap(), vec![2.0, 3.0]);
    }
}
