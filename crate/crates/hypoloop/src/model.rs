//! Double-precision SDE models: diffusion fields, the Itô drift, the base
//! point and, when known, the chart and weights used to rescale paths.

use std::fmt;
use std::sync::Arc;

use hypoloop_core::chart::AdaptedChart;
use hypoloop_core::compiled::{CompiledField, CompiledMap};
use hypoloop_core::field::{ito_drift_correction, PolyVectorField};
use hypoloop_core::map::{pushforward, PolyMap};
use hypoloop_core::nilpotent::NilpotentSystem;
use hypoloop_core::weights::{Dilation, Weights};

use crate::error::{Error, Result};

/// A vector field evaluated in floating point, with its Jacobian.
pub trait FieldEval: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Row-major `d x d`, entry `k * d + j` is `d X^k / d x_j`.
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]);

    /// Entry `(k * d + j) * d + l`. Returns `false` when second derivatives
    /// are unavailable.
    fn hessian_into(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

impl FieldEval for CompiledField {
    fn dim(&self) -> usize {
        CompiledField::dim(self)
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        CompiledField::eval_into(self, x, out)
    }

    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        CompiledField::jacobian_into(self, x, out)
    }

    fn hessian_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        if !self.has_hessian() {
            return false;
        }
        CompiledField::hessian_into(self, x, out);
        true
    }
}

/// `dx = sqrt(eps) sum X_i(x) dB^i + eps X0_ito(x) dt`, started at the base
/// point.
#[derive(Clone, Debug)]
pub struct SdeModel {
    label: String,
    dim: usize,
    diffusion: Vec<Arc<dyn FieldEval>>,
    drift: Arc<dyn FieldEval>,
    base_point: Vec<f64>,
    chart: Option<CompiledMap>,
    weights: Option<Weights>,
}

impl SdeModel {
    /// A model from arbitrary evaluators. `drift` is the Itô drift.
    pub fn from_parts(
        label: impl Into<String>,
        diffusion: Vec<Arc<dyn FieldEval>>,
        drift: Arc<dyn FieldEval>,
        base_point: Vec<f64>,
    ) -> Result<Self> {
        let dim = base_point.len();
        if dim == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        if drift.dim() != dim || diffusion.iter().any(|f| f.dim() != dim) {
            return Err(Error::Config("field dimensions disagree with the base point".into()));
        }
        Ok(SdeModel {
            label: label.into(),
            dim,
            diffusion,
            drift,
            base_point,
            chart: None,
            weights: None,
        })
    }

    /// Polynomial model in the given coordinates. `drift` is the
    /// Stratonovich drift `X_0`; the Itô correction is added exactly.
    pub fn polynomial(
        label: impl Into<String>,
        generators: &[PolyVectorField],
        drift: Option<&PolyVectorField>,
        base_point: Vec<f64>,
    ) -> Result<Self> {
        let d = base_point.len();
        let zero = PolyVectorField::zero(d.max(1));
        let ito = ito_drift_correction(drift.unwrap_or(&zero), generators)?;
        let diffusion = generators
            .iter()
            .map(|g| Arc::new(CompiledField::new(g)) as Arc<dyn FieldEval>)
            .collect();
        SdeModel::from_parts(label, diffusion, Arc::new(CompiledField::new(&ito)), base_point)
    }

    /// The polynomial model pushed into the adapted chart: base point at the
    /// origin, weights attached, so paths can be rescaled and Malliavin
    /// matrices computed.
    pub fn adapted(
        label: impl Into<String>,
        generators: &[PolyVectorField],
        drift: Option<&PolyVectorField>,
        chart: &AdaptedChart,
        max_degree: u32,
    ) -> Result<Self> {
        let theta = chart.theta();
        let pushed = generators
            .iter()
            .map(|g| pushforward(theta, g, max_degree))
            .collect::<hypoloop_core::Result<Vec<_>>>()?;
        let pushed_drift = drift.map(|x0| pushforward(theta, x0, max_degree)).transpose()?;
        let mut model = SdeModel::polynomial(label, &pushed, pushed_drift.as_ref(), vec![0.0; theta.dim()])?;
        model.weights = Some(chart.structure().weights().clone());
        Ok(model)
    }

    /// The limiting system `dx = sum X~_i dB^i + X0~_ito dt` from the origin;
    /// simulate it at `eps = 1`.
    pub fn nilpotent(sys: &NilpotentSystem) -> Result<Self> {
        let diffusion = sys
            .fields()
            .iter()
            .map(|g| Arc::new(CompiledField::new(g)) as Arc<dyn FieldEval>)
            .collect();
        let drift = Arc::new(CompiledField::new(sys.drift_tilde()));
        let mut model = SdeModel::from_parts("nilpotent limit", diffusion, drift, vec![0.0; sys.dim()])?;
        model.weights = Some(sys.weights().clone());
        Ok(model)
    }

    /// Attaches the chart from state coordinates to adapted coordinates and
    /// its weights, for models simulated in the original coordinates.
    pub fn with_chart(mut self, theta: &PolyMap, weights: Weights) -> Result<Self> {
        if theta.dim() != self.dim || weights.dim() != self.dim {
            return Err(Error::Config("chart dimension differs from the model".into()));
        }
        self.chart = Some(CompiledMap::new(theta));
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Weights) -> Result<Self> {
        if weights.dim() != self.dim {
            return Err(Error::Config("weights dimension differs from the model".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_noises(&self) -> usize {
        self.diffusion.len()
    }

    pub fn diffusion(&self) -> &[Arc<dyn FieldEval>] {
        &self.diffusion
    }

    pub fn drift(&self) -> &Arc<dyn FieldEval> {
        &self.drift
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn chart(&self) -> Option<&CompiledMap> {
        self.chart.as_ref()
    }

    pub fn weights(&self) -> Option<&Weights> {
        self.weights.as_ref()
    }

    /// True when states are already adapted coordinates centred at the base
    /// point (weights known, no chart to apply).
    pub fn is_adapted(&self) -> bool {
        self.weights.is_some() && self.chart.is_none()
    }

    /// `theta(x) - theta(x0)`, or `x - x0` when the model is adapted.
    pub fn to_chart(&self, x: &[f64]) -> Vec<f64> {
        match &self.chart {
            Some(c) => {
                let y = c.apply(x);
                let y0 = c.apply(&self.base_point);
                y.iter().zip(&y0).map(|(a, b)| a - b).collect()
            }
            None => x.iter().zip(&self.base_point).map(|(a, b)| a - b).collect(),
        }
    }

    /// Builds the `sigma_eps` rescaling `x -> delta_eps^{-1}(theta(x) - theta(x0))`.
    pub fn rescaler(&self, eps: f64) -> Result<Rescaler<'_>> {
        let weights = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Config(format!("model '{}' has no weights; rescaling needs a chart", self.label)))?;
        Ok(Rescaler {
            model: self,
            dilation: Dilation::new(weights.clone(), eps)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Rescaler<'a> {
    model: &'a SdeModel,
    dilation: Dilation,
}

impl Rescaler<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.dilation.apply_inverse(&self.model.to_chart(x))
    }
}
