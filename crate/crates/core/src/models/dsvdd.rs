//! Deep-SVDD: a bias-free-output encoder trained to pull normal samples
//! towards a fixed center `c`. The per-sample loss `|f(x) - c|^2` doubles as
//! the plain anomaly score.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{
    check_sample, squared_distance, Activation, DenseMatrix, FlatParams, LossKind, MlpSpec,
    MlpTrace, Objective, ParamLayout, Rng,
};

/// Coordinates of the center closer to zero than this are pushed out to it.
pub const CENTER_MIN_ABS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DsvddModel {
    encoder: MlpSpec,
    center: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl DsvddModel {
    /// The encoder's output layer bias is removed regardless of `encoder`'s setting.
    pub fn new(encoder: MlpSpec, center: Vec<f64>) -> Result<Self> {
        let encoder = encoder.without_final_bias();
        if center.len() != encoder.output_dim() {
            return Err(Error::shape("center dimension", encoder.output_dim(), center.len()));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "DSVDD center",
                sample: 0,
            });
        }
        let layout = Arc::new(encoder.layout(0));
        Ok(DsvddModel {
            encoder,
            center,
            layout,
        })
    }

    /// Encoder `input -> hidden... -> latent` with tanh hidden layers, no output bias.
    pub fn encoder_spec(input_dim: usize, hidden: &[usize], latent_dim: usize) -> Result<MlpSpec> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(latent_dim);
        Ok(MlpSpec::new(&widths, Activation::Tanh)?.without_final_bias())
    }

    pub fn encoder(&self) -> &MlpSpec {
        &self.encoder
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn init_params(encoder: &MlpSpec, rng: &mut Rng) -> FlatParams {
        let encoder = encoder.clone().without_final_bias();
        FlatParams::from_values(Arc::new(encoder.layout(0)), encoder.init_params(rng))
            .expect("layout matches init")
    }

    /// Plain Deep-SVDD anomaly score; identical to the training loss.
    pub fn score(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.loss(params, x, &[])
    }
}

/// Mean encoder output over `train` at `params`, with near-zero coordinates
/// pushed to `+-CENTER_MIN_ABS` (sign-preserving, `+` for exact zeros).
pub fn dsvdd_center_init(encoder: &MlpSpec, params: &[f64], train: &DenseMatrix) -> Result<Vec<f64>> {
    if train.rows() == 0 {
        return Err(Error::Input(String::from(
            "cannot initialize the DSVDD center from an empty training set",
        )));
    }
    let encoder = encoder.clone().without_final_bias();
    if train.cols() != encoder.input_dim() {
        return Err(Error::shape("training columns", encoder.input_dim(), train.cols()));
    }
    let mut center = vec![0.0; encoder.output_dim()];
    let mut trace = MlpTrace::default();
    for row in train.iter_rows() {
        encoder.forward_trace(params, row, &mut trace)?;
        for (c, v) in center.iter_mut().zip(trace.output()) {
            *c += v;
        }
    }
    let n = train.rows() as f64;
    for c in &mut center {
        *c /= n;
        if c.abs() < CENTER_MIN_ABS {
            *c = if *c < 0.0 { -CENTER_MIN_ABS } else { CENTER_MIN_ABS };
        }
    }
    Ok(center)
}

impl Objective for DsvddModel {
    fn kind(&self) -> LossKind {
        LossKind::Dsvdd
    }

    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    fn loss(&self, params: &[f64], x: &[f64], noise: &[f64]) -> Result<f64> {
        check_sample(self, params, x, noise)?;
        let out = self.encoder.forward(params, x)?;
        let l = squared_distance(&out, &self.center);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: "DSVDD loss",
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
        self.encoder.forward_trace(params, x, &mut trace)?;
        let out = trace.output();
        let loss = squared_distance(out, &self.center);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "DSVDD loss",
                sample: 0,
            });
        }
        let d_out: Vec<f64> = out
            .iter()
            .zip(&self.center)
            .map(|(o, c)| 2.0 * scale * (o - c))
            .collect();
        self.encoder.backward(params, &trace, &d_out, grad, None)?;
        Ok(loss)
    }

    fn describe(&self) -> String {
        let center: Vec<String> = self
            .center
            .iter()
            .map(|c| format!("{:016x}", c.to_bits()))
            .collect();
        format!("dsvdd|enc={}|center={}", self.encoder.describe(), center.join(","))
    }
}
