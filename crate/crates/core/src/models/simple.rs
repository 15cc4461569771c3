//! Squared-error objectives: an MLP autoencoder and a learned location.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{
    check_sample, squared_distance, FlatParams, LossKind, MlpSpec, MlpTrace, Objective,
    ParamLayout, Rng,
};

/// Deterministic autoencoder, `loss = 0.5 * |f(x) - x|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    spec: MlpSpec,
    layout: Arc<ParamLayout>,
}

impl Autoencoder {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        if spec.input_dim() != spec.output_dim() {
            return Err(Error::shape(
                "autoencoder output width",
                spec.input_dim(),
                spec.output_dim(),
            ));
        }
        let layout = Arc::new(spec.layout(0));
        Ok(Autoencoder { spec, layout })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn init_params(&self, rng: &mut Rng) -> FlatParams {
        FlatParams::from_values(self.layout.clone(), self.spec.init_params(rng))
            .expect("layout matches init")
    }

    pub fn reconstruction_score(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        Ok(2.0 * self.loss(params, x, &[])?)
    }
}

impl Objective for Autoencoder {
    fn kind(&self) -> LossKind {
        LossKind::Mse
    }

    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    fn loss(&self, params: &[f64], x: &[f64], noise: &[f64]) -> Result<f64> {
        check_sample(self, params, x, noise)?;
        let out = self.spec.forward(params, x)?;
        let l = 0.5 * squared_distance(&out, x);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: "autoencoder loss",
                sample: 0,
            });
        }
        Ok(l)
    }

    fn accumulate_gradient(
        &self,
        params: &[f64],
        x: &[f64],
        noise: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        check_sample(self, params, x, noise)?;
        let mut trace = MlpTrace::default();
        self.spec.forward_trace(params, x, &mut trace)?;
        let residual: Vec<f64> = trace
            .output()
            .iter()
            .zip(x)
            .map(|(o, xi)| scale * (o - xi))
            .collect();
        let l = 0.5 * squared_distance(trace.output(), x);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: "autoencoder loss",
                sample: 0,
            });
        }
        self.spec.backward(params, &trace, &residual, grad, None)?;
        Ok(l)
    }

    fn describe(&self) -> String {
        format!("mse-autoencoder|{}", self.spec.describe())
    }
}

/// A single learned point `theta` in feature space, `loss = 0.5 * |theta - x|^2`.
///
/// Closed-form gradients make it the reference model for hand-checked
/// influence values and for leave-one-out comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    dim: usize,
    layout: Arc<ParamLayout>,
}

impl Centroid {
    pub fn new(dim: usize) -> Self {
        Centroid {
            dim,
            layout: Arc::new(ParamLayout::vector(dim)),
        }
    }

    pub fn params(&self, theta: Vec<f64>) -> Result<FlatParams> {
        FlatParams::from_values(self.layout.clone(), theta)
    }
}

impl Objective for Centroid {
    fn kind(&self) -> LossKind {
        LossKind::Mse
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    fn loss(&self, params: &[f64], x: &[f64], noise: &[f64]) -> Result<f64> {
        check_sample(self, params, x, noise)?;
        Ok(0.5 * squared_distance(params, x))
    }

    fn accumulate_gradient(
        &self,
        params: &[f64],
        x: &[f64],
        noise: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        check_sample(self, params, x, noise)?;
        for ((g, t), xi) in grad.iter_mut().zip(params).zip(x) {
            *g += scale * (t - xi);
        }
        Ok(0.5 * squared_distance(params, x))
    }

    fn describe(&self) -> String {
        format!("centroid|dim={}", self.dim)
    }
}
