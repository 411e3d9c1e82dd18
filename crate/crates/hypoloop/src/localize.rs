//! Bounded models built from an adapted chart: the pushed fields are cut off
//! outside a ball and replaced by the coordinate fields, so the diffusion is
//! globally defined and non-degenerate while agreeing with the original model
//! near the base point.

use std::sync::Arc;

use hypoloop_core::chart::AdaptedChart;
use hypoloop_core::compiled::CompiledField;
use hypoloop_core::field::PolyVectorField;
use hypoloop_core::map::pushforward;

use crate::error::{Error, Result};
use crate::model::{FieldEval, SdeModel};

/// `6t^5 - 15t^4 + 10t^3` on `[0, 1]` with its first two derivatives; C2
/// where it meets the constants 0 and 1.
fn smoothstep(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let t2 = t * t;
        (
            t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
            30.0 * t2 * (t - 1.0) * (t - 1.0),
            60.0 * t * (2.0 * t - 1.0) * (t - 1.0),
        )
    }
}

/// A radial function of `|z|`: `chi` (1 inside `r1`, 0 outside `r2`) or its
/// complement `rho = 1 - chi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialCutoff {
    r1: f64,
    r2: f64,
    complement: bool,
}

impl RadialCutoff {
    pub fn chi(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
            return Err(Error::Config(format!("cutoff radii must satisfy 0 < r1 < r2, got {r1}, {r2}")));
        }
        Ok(RadialCutoff { r1, r2, complement: false })
    }

    pub fn rho(r1: f64, r2: f64) -> Result<Self> {
        Ok(RadialCutoff {
            complement: true,
            ..RadialCutoff::chi(r1, r2)?
        })
    }

    /// Value and derivatives in `r`.
    fn profile(&self, r: f64) -> (f64, f64, f64) {
        let w = self.r2 - self.r1;
        let (s, s1, s2) = smoothstep((r - self.r1) / w);
        if self.complement {
            (s, s1 / w, s2 / (w * w))
        } else {
            (1.0 - s, -s1 / w, -s2 / (w * w))
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.profile(norm(z)).0
    }

    /// Value, gradient and row-major Hessian at `z`.
    pub fn derivatives(&self, z: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = z.len();
        let r = norm(z);
        let (g, g1, g2) = self.profile(r);
        if g1 == 0.0 && g2 == 0.0 {
            grad.fill(0.0);
            hess.fill(0.0);
            return g;
        }
        // r > r1 > 0 here
        for j in 0..d {
            grad[j] = g1 * z[j] / r;
            for l in 0..d {
                let zz = z[j] * z[l] / (r * r);
                let delta = if j == l { 1.0 } else { 0.0 };
                hess[j * d + l] = g2 * zz + g1 * (delta - zz) / r;
            }
        }
        g
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
enum Inner {
    Poly(CompiledField),
    Basis(usize),
}

/// `c(z) Y(z)` for a radial cutoff `c` and a polynomial field or a
/// coordinate vector `Y`.
#[derive(Clone, Debug)]
pub struct CutoffField {
    dim: usize,
    cutoff: RadialCutoff,
    inner: Inner,
}

impl CutoffField {
    pub fn polynomial(cutoff: RadialCutoff, field: &PolyVectorField) -> Self {
        CutoffField {
            dim: field.dim(),
            cutoff,
            inner: Inner::Poly(CompiledField::with_hessian(field)),
        }
    }

    pub fn basis(cutoff: RadialCutoff, dim: usize, k: usize) -> Self {
        CutoffField {
            dim,
            cutoff,
            inner: Inner::Basis(k),
        }
    }

    fn inner_parts(&self, x: &[f64], y: &mut [f64], jy: &mut [f64], hy: Option<&mut [f64]>) {
        match &self.inner {
            Inner::Poly(f) => {
                f.eval_into(x, y);
                f.jacobian_into(x, jy);
                if let Some(h) = hy {
                    f.hessian_into(x, h);
                }
            }
            Inner::Basis(k) => {
                y.fill(0.0);
                y[*k] = 1.0;
                jy.fill(0.0);
                if let Some(h) = hy {
                    h.fill(0.0);
                }
            }
        }
    }
}

impl FieldEval for CutoffField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let c = self.cutoff.value(x);
        match &self.inner {
            Inner::Poly(f) => {
                if c == 0.0 {
                    out.fill(0.0);
                } else {
                    f.eval_into(x, out);
                    out.iter_mut().for_each(|v| *v *= c);
                }
            }
            Inner::Basis(k) => {
                out.fill(0.0);
                out[*k] = c;
            }
        }
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let c = self.cutoff.derivatives(x, &mut grad, &mut hess);
        let mut y = vec![0.0; d];
        let mut jy = vec![0.0; d * d];
        self.inner_parts(x, &mut y, &mut jy, None);
        for k in 0..d {
            for j in 0..d {
                out[k * d + j] = grad[j] * y[k] + c * jy[k * d + j];
            }
        }
    }

    fn hessian_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        let d = self.dim;
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let c = self.cutoff.derivatives(x, &mut grad, &mut hess);
        let mut y = vec![0.0; d];
        let mut jy = vec![0.0; d * d];
        let mut hy = vec![0.0; d * d * d];
        self.inner_parts(x, &mut y, &mut jy, Some(&mut hy));
        for k in 0..d {
            for j in 0..d {
                for l in 0..d {
                    out[(k * d + j) * d + l] = hess[j * d + l] * y[k]
                        + grad[j] * jy[k * d + l]
                        + grad[l] * jy[k * d + j]
                        + c * hy[(k * d + j) * d + l];
                }
            }
        }
        true
    }
}

/// Itô drift `X_0 + 1/2 sum_j (J X_j) X_j` of arbitrary evaluators; its
/// Jacobian needs the second derivatives of the diffusion fields.
#[derive(Clone, Debug)]
pub struct ItoDrift {
    dim: usize,
    drift: Arc<dyn FieldEval>,
    diffusion: Vec<Arc<dyn FieldEval>>,
}

impl ItoDrift {
    pub fn new(drift: Arc<dyn FieldEval>, diffusion: Vec<Arc<dyn FieldEval>>) -> Self {
        ItoDrift {
            dim: drift.dim(),
            drift,
            diffusion,
        }
    }
}

impl FieldEval for ItoDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        self.drift.eval_into(x, out);
        let mut v = vec![0.0; d];
        let mut j = vec![0.0; d * d];
        for f in &self.diffusion {
            f.eval_into(x, &mut v);
            f.jacobian_into(x, &mut j);
            for k in 0..d {
                out[k] += 0.5 * (0..d).map(|i| j[k * d + i] * v[i]).sum::<f64>();
            }
        }
    }

    /// Panics if a diffusion field cannot provide second derivatives.
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        self.drift.jacobian_into(x, out);
        let mut v = vec![0.0; d];
        let mut j = vec![0.0; d * d];
        let mut h = vec![0.0; d * d * d];
        for f in &self.diffusion {
            f.eval_into(x, &mut v);
            f.jacobian_into(x, &mut j);
            assert!(f.hessian_into(x, &mut h), "Itô drift Jacobian needs second derivatives");
            for k in 0..d {
                for l in 0..d {
                    let mut acc = 0.0;
                    for i in 0..d {
                        acc += h[(k * d + i) * d + l] * v[i] + j[k * d + i] * j[i * d + l];
                    }
                    out[k * d + l] += 0.5 * acc;
                }
            }
        }
    }
}

/// The bounded model in adapted coordinates: `chi * theta_* X_i` for the
/// generators and the drift, plus `rho * e_k` for every coordinate.
pub fn localize_model(
    generators: &[PolyVectorField],
    drift: Option<&PolyVectorField>,
    chart: &AdaptedChart,
    r1: f64,
    r2: f64,
    max_degree: u32,
) -> Result<SdeModel> {
    let theta = chart.theta();
    let d = theta.dim();
    let chi = RadialCutoff::chi(r1, r2)?;
    let rho = RadialCutoff::rho(r1, r2)?;
    let mut diffusion: Vec<Arc<dyn FieldEval>> = Vec::with_capacity(generators.len() + d);
    for g in generators {
        diffusion.push(Arc::new(CutoffField::polynomial(chi, &pushforward(theta, g, max_degree)?)));
    }
    for k in 0..d {
        diffusion.push(Arc::new(CutoffField::basis(rho, d, k)));
    }
    let x0 = match drift {
        Some(x0) => pushforward(theta, x0, max_degree)?,
        None => PolyVectorField::zero(d),
    };
    let drift: Arc<dyn FieldEval> = Arc::new(CutoffField::polynomial(chi, &x0));
    let ito = Arc::new(ItoDrift::new(drift, diffusion.clone()));
    let model = SdeModel::from_parts("localized", diffusion, ito, vec![0.0; d])?;
    model.with_weights(chart.structure().weights().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypoloop_core::chart::construct_adapted;
    use hypoloop_core::grading::build_graded_structure;
    use hypoloop_core::syntax::parse_field;
    use hypoloop_core::Rational;
    use num_traits::Zero;

    fn example_chart() -> (Vec<PolyVectorField>, AdaptedChart) {
        let gens = vec![parse_field("[1, x1]", 2).unwrap(), parse_field("[x1, 0]", 2).unwrap()];
        let (s, _) = build_graded_structure(&gens, &[Rational::zero(), Rational::zero()], 8).unwrap();
        let chart = construct_adapted(&gens, &s, 3).unwrap();
        (gens, chart)
    }

    fn fd_check(f: &dyn FieldEval, x: &[f64]) {
        let d = f.dim();
        let mut j = vec![0.0; d * d];
        f.jacobian_into(x, &mut j);
        let h = 1e-6;
        for l in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[l] += h;
            xm[l] -= h;
            let mut fp = vec![0.0; d];
            let mut fm = vec![0.0; d];
            f.eval_into(&xp, &mut fp);
            f.eval_into(&xm, &mut fm);
            for k in 0..d {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                assert!((fd - j[k * d + l]).abs() <= 1e-6 * (1.0 + fd.abs()), "k={k} l={l}: {fd} vs {}", j[k * d + l]);
            }
        }
    }

    #[test]
    fn cutoff_profiles() {
        let chi = RadialCutoff::chi(1.0, 2.0).unwrap();
        let rho = RadialCutoff::rho(1.0, 2.0).unwrap();
        assert_eq!(chi.value(&[0.5, 0.5]), 1.0);
        assert_eq!(chi.value(&[3.0, 0.0]), 0.0);
        assert_eq!(rho.value(&[0.0, 0.9]), 0.0);
        assert!((chi.value(&[1.5, 0.0]) - 0.5).abs() < 1e-15);
        for z in [[0.3, 0.2], [1.2, 0.4], [0.0, 1.9], [2.5, 1.0]] {
            assert!((chi.value(&z) + rho.value(&z) - 1.0).abs() < 1e-15);
        }
        assert!(RadialCutoff::chi(0.0, 1.0).is_err());
        assert!(RadialCutoff::chi(2.0, 1.0).is_err());
    }

    #[test]
    fn localized_fields_inside_and_outside() {
        let (gens, chart) = example_chart();
        let m = localize_model(&gens, None, &chart, 1.0, 2.0, 16).unwrap();
        assert_eq!(m.num_noises(), 4);
        let pushed: Vec<_> = gens.iter().map(|g| pushforward(chart.theta(), g, 16).unwrap()).collect();
        let mut out = [0.0; 2];
        for z in [[0.3, -0.4], [0.0, 0.99], [-0.7, 0.1]] {
            for (i, p) in pushed.iter().enumerate() {
                m.diffusion()[i].eval_into(&z, &mut out);
                let exact = p.eval_f64(&z);
                assert!((out[0] - exact[0]).abs() <= 1e-12 && (out[1] - exact[1]).abs() <= 1e-12);
            }
            for k in 0..2 {
                m.diffusion()[2 + k].eval_into(&z, &mut out);
                assert_eq!(out, [0.0, 0.0]);
            }
        }
        for z in [[2.5, 0.0], [-3.0, 4.0]] {
            for i in 0..2 {
                m.diffusion()[i].eval_into(&z, &mut out);
                assert_eq!(out, [0.0, 0.0]);
            }
            for k in 0..2 {
                m.diffusion()[2 + k].eval_into(&z, &mut out);
                let mut e = [0.0; 2];
                e[k] = 1.0;
                assert_eq!(out, e);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (gens, chart) = example_chart();
        let m = localize_model(&gens, Some(&parse_field("[x2, 1]", 2).unwrap()), &chart, 1.0, 2.0, 16).unwrap();
        for z in [[1.3, -0.4], [0.2, 1.5], [-1.1, -0.9], [0.3, 0.1]] {
            for f in m.diffusion() {
                fd_check(f.as_ref(), &z);
            }
            fd_check(m.drift().as_ref(), &z);
        }
    }
}
