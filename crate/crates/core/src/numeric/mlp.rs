//! Fully-connected networks over flat parameter vectors.
//!
//! Parameters of layer `k` are stored as the row-major weight matrix
//! `(out_k, in_k)` followed by the bias vector `out_k` (when the layer has
//! one). Forward passes record post-activation values so that the backward
//! pass can run without recomputation. Gradients are *accumulated* into the
//! caller's buffer, which lets composite models (a VAE decoder evaluated on
//! several latent draws) sum contributions in place.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::matrix::{axpy, DenseMatrix};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer widths and activations of an MLP. The output layer is always linear.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    widths: Vec<usize>,
    hidden: Vec<Activation>,
    final_bias: bool,
}

impl MlpSpec {
    /// MLP with the same activation on every hidden layer.
    pub fn new(widths: &[usize], hidden: Activation) -> Result<Self> {
        let n_hidden = widths.len().saturating_sub(2);
        Self::with_activations(widths, vec![hidden; n_hidden], true)
    }

    pub fn with_activations(
        widths: &[usize],
        hidden: Vec<Activation>,
        final_bias: bool,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 widths, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config(String::from("MLP widths must all be >= 1")));
        }
        if hidden.len() != widths.len() - 2 {
            return Err(Error::shape(
                "hidden activation count",
                widths.len() - 2,
                hidden.len(),
            ));
        }
        Ok(MlpSpec {
            widths: widths.to_vec(),
            hidden,
            final_bias,
        })
    }

    /// Drops the bias of the output layer.
    pub fn without_final_bias(mut self) -> Self {
        self.final_bias = false;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden_activations(&self) -> &[Activation] {
        &self.hidden
    }

    pub fn has_final_bias(&self) -> bool {
        self.final_bias
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn has_bias(&self, layer: usize) -> bool {
        layer + 1 < self.num_layers() || self.final_bias
    }

    fn activation(&self, layer: usize) -> Activation {
        self.hidden.get(layer).copied().unwrap_or(Activation::Identity)
    }

    pub fn param_count(&self) -> usize {
        (0..self.num_layers())
            .map(|k| {
                let (i, o) = (self.widths[k], self.widths[k + 1]);
                i * o + if self.has_bias(k) { o } else { 0 }
            })
            .sum()
    }

    /// Layout of this network's parameters, with layer indices starting at `first_layer`.
    pub fn layout(&self, first_layer: usize) -> ParamLayout {
        let mut segments = Vec::new();
        let mut offset = 0;
        for k in 0..self.num_layers() {
            let (i, o) = (self.widths[k], self.widths[k + 1]);
            segments.push(ParamSegment {
                layer: first_layer + k,
                kind: ParamKind::Weight,
                rows: o,
                cols: i,
                offset,
            });
            offset += i * o;
            if self.has_bias(k) {
                segments.push(ParamSegment {
                    layer: first_layer + k,
                    kind: ParamKind::Bias,
                    rows: o,
                    cols: 1,
                    offset,
                });
                offset += o;
            }
        }
        ParamLayout {
            segments,
            total: offset,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for k in 0..self.num_layers() {
            let (i, o) = (self.widths[k], self.widths[k + 1]);
            let limit = libm::sqrt(6.0 / (i + o) as f64);
            out.extend((0..i * o).map(|_| rng.uniform_range(-limit, limit)));
            if self.has_bias(k) {
                out.extend(core::iter::repeat_n(0.0, o));
            }
        }
        out
    }

    /// Stable textual description, used for fingerprints.
    pub fn describe(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(|w| format!("{w}")).collect();
        let acts: Vec<&str> = self.hidden.iter().map(|a| a.name()).collect();
        format!(
            "mlp[{}|{}|final_bias={}]",
            widths.join("-"),
            acts.join(","),
            self.final_bias
        )
    }

    /// Forward pass on one sample; `trace` receives every layer's output.
    pub fn forward_trace(&self, params: &[f64], input: &[f64], trace: &mut MlpTrace) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape("MLP parameter count", self.param_count(), params.len()));
        }
        if input.len() != self.input_dim() {
            return Err(Error::shape("MLP input width", self.input_dim(), input.len()));
        }
        trace.outputs.resize(self.num_layers() + 1, Vec::new());
        trace.outputs[0].clear();
        trace.outputs[0].extend_from_slice(input);
        let mut offset = 0;
        for k in 0..self.num_layers() {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            let weights = &params[offset..offset + n_in * n_out];
            offset += n_in * n_out;
            let bias = if self.has_bias(k) {
                let b = &params[offset..offset + n_out];
                offset += n_out;
                Some(b)
            } else {
                None
            };
            let act = self.activation(k);
            let (prev, rest) = trace.outputs.split_at_mut(k + 1);
            let x = &prev[k];
            let y = &mut rest[0];
            y.clear();
            y.extend(weights.chunks_exact(n_in).enumerate().map(|(r, w_row)| {
                let z = super::matrix::dot(w_row, x) + bias.map_or(0.0, |b| b[r]);
                act.apply(z)
            }));
        }
        Ok(())
    }

    /// Output for one sample.
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = MlpTrace::default();
        self.forward_trace(params, input, &mut trace)?;
        Ok(trace.take_output())
    }

    /// Reverse pass. Adds `dL/dparams` to `grad` and, when requested, writes
    /// `dL/dinput` into `d_input`. `d_output` is `dL/d(network output)`.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &MlpTrace,
        d_output: &[f64],
        grad: &mut [f64],
        d_input: Option<&mut [f64]>,
    ) -> Result<()> {
        if grad.len() != self.param_count() {
            return Err(Error::shape("MLP gradient buffer", self.param_count(), grad.len()));
        }
        if d_output.len() != self.output_dim() {
            return Err(Error::shape("MLP output gradient", self.output_dim(), d_output.len()));
        }
        if trace.outputs.len() != self.num_layers() + 1 {
            return Err(Error::shape("MLP trace depth", self.num_layers() + 1, trace.outputs.len()));
        }
        // Segment offsets, walked from the last layer backwards.
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut offset = 0;
        for k in 0..self.num_layers() {
            let (i, o) = (self.widths[k], self.widths[k + 1]);
            offsets.push(offset);
            offset += i * o + if self.has_bias(k) { o } else { 0 };
        }

        let mut delta: Vec<f64> = d_output.to_vec();
        let mut d_prev: Vec<f64> = Vec::new();
        let mut d_input = d_input;
        for k in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            let act = self.activation(k);
            let out = &trace.outputs[k + 1];
            for (d, &a) in delta.iter_mut().zip(out) {
                *d *= act.derivative_from_output(a);
            }
            let x = &trace.outputs[k];
            let w_off = offsets[k];
            {
                let g_w = &mut grad[w_off..w_off + n_in * n_out];
                for (r, g_row) in g_w.chunks_exact_mut(n_in).enumerate() {
                    if delta[r] != 0.0 {
                        axpy(delta[r], x, g_row);
                    }
                }
            }
            if self.has_bias(k) {
                let b_off = w_off + n_in * n_out;
                axpy(1.0, &delta, &mut grad[b_off..b_off + n_out]);
            }
            let need_prev = k > 0 || d_input.is_some();
            if need_prev {
                let weights = &params[w_off..w_off + n_in * n_out];
                d_prev.clear();
                d_prev.resize(n_in, 0.0);
                for (r, w_row) in weights.chunks_exact(n_in).enumerate() {
                    if delta[r] != 0.0 {
                        axpy(delta[r], w_row, &mut d_prev);
                    }
                }
                if k == 0 {
                    if let Some(dst) = d_input.take() {
                        if dst.len() != n_in {
                            return Err(Error::shape("MLP input gradient", n_in, dst.len()));
                        }
                        dst.copy_from_slice(&d_prev);
                    }
                } else {
                    core::mem::swap(&mut delta, &mut d_prev);
                }
            }
        }
        Ok(())
    }
}

/// Per-layer outputs recorded by [`MlpSpec::forward_trace`].
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    outputs: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map_or(&[], |v| v.as_slice())
    }

    fn take_output(mut self) -> Vec<f64> {
        self.outputs.pop().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamSegment {
    pub layer: usize,
    pub kind: ParamKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamSegment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered description of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ParamLayout {
    segments: Vec<ParamSegment>,
    total: usize,
}

impl ParamLayout {
    /// Layout holding one unnamed vector of `len` values.
    pub fn vector(len: usize) -> Self {
        ParamLayout {
            segments: vec![ParamSegment {
                layer: 0,
                kind: ParamKind::Bias,
                rows: len,
                cols: 1,
                offset: 0,
            }],
            total: len,
        }
    }

    /// `self` followed by `other`, offsets shifted.
    pub fn concat(&self, other: &ParamLayout) -> ParamLayout {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().map(|s| ParamSegment {
            offset: s.offset + self.total,
            ..*s
        }));
        ParamLayout {
            segments,
            total: self.total + other.total,
        }
    }

    pub fn segments(&self) -> &[ParamSegment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .segments
            .iter()
            .map(|s| {
                let k = match s.kind {
                    ParamKind::Weight => 'W',
                    ParamKind::Bias => 'b',
                };
                format!("{}{}:{}x{}", k, s.layer, s.rows, s.cols)
            })
            .collect();
        parts.join(",")
    }
}

/// Parameter (or gradient) vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl FlatParams {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let n = layout.total_len();
        FlatParams {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::shape("flat parameter length", layout.total_len(), values.len()));
        }
        Ok(FlatParams { layout, values })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &FlatParams) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    /// Splits into one matrix per layout segment (biases as column vectors).
    pub fn unflatten(&self) -> Vec<(ParamSegment, DenseMatrix)> {
        self.layout
            .segments()
            .iter()
            .map(|s| {
                let data = self.values[s.offset..s.offset + s.len()].to_vec();
                let m = DenseMatrix::from_vec(s.rows, s.cols, data)
                    .unwrap_or_else(|_| DenseMatrix::zeros(s.rows, s.cols));
                (*s, m)
            })
            .collect()
    }

    /// Inverse of [`FlatParams::unflatten`].
    pub fn flatten(layout: Arc<ParamLayout>, blocks: &[(ParamSegment, DenseMatrix)]) -> Result<Self> {
        if blocks.len() != layout.segments().len() {
            return Err(Error::shape("segment count", layout.segments().len(), blocks.len()));
        }
        let mut values = vec![0.0; layout.total_len()];
        for (expected, (seg, m)) in layout.segments().iter().zip(blocks) {
            if expected != seg || m.rows() != seg.rows || m.cols() != seg.cols {
                return Err(Error::shape("segment shape", expected.len(), m.rows() * m.cols()));
            }
            values[seg.offset..seg.offset + seg.len()].copy_from_slice(m.as_slice());
        }
        FlatParams::from_values(layout, values)
    }
}

/// Exact inner product of two gradients over the full flattened vectors.
pub fn grad_dot(a: &FlatParams, b: &FlatParams) -> Result<f64> {
    if !a.same_layout(b) {
        return Err(Error::shape("gradient layouts", a.len(), b.len()));
    }
    Ok(super::matrix::dot(&a.values, &b.values))
}

/// Applies the network to every row of `batch`.
pub fn mlp_forward(spec: &MlpSpec, params: &FlatParams, batch: &DenseMatrix) -> Result<DenseMatrix> {
    if batch.cols() != spec.input_dim() {
        return Err(Error::shape("batch columns vs MLP input", spec.input_dim(), batch.cols()));
    }
    let mut out = DenseMatrix::zeros(batch.rows(), spec.output_dim());
    let mut trace = MlpTrace::default();
    for (i, row) in batch.iter_rows().enumerate() {
        spec.forward_trace(params.values(), row, &mut trace)?;
        if trace.output().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "MLP output",
                sample: i,
            });
        }
        out.row_mut(i).copy_from_slice(trace.output());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_for(spec: &MlpSpec, values: Vec<f64>) -> FlatParams {
        FlatParams::from_values(Arc::new(spec.layout(0)), values).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(&[3], Activation::Tanh).is_err());
        assert!(MlpSpec::new(&[3, 0, 2], Activation::Tanh).is_err());
        let s = MlpSpec::new(&[3, 4, 2], Activation::Tanh).unwrap();
        assert_eq!(s.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        let nb = s.clone().without_final_bias();
        assert_eq!(nb.param_count(), 3 * 4 + 4 + 4 * 2);
        assert_eq!(nb.layout(0).total_len(), nb.param_count());
    }

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(&[2, 2], Activation::Tanh).unwrap();
        let p = params_for(&spec, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let batch = DenseMatrix::from_rows(&[[0.3, -1.7]]).unwrap();
        let out = mlp_forward(&spec, &p, &batch).unwrap();
        assert_eq!(out.as_slice(), &[0.3, -1.7]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(&[3, 5, 2], Activation::Tanh).unwrap();
        let p = FlatParams::zeros(Arc::new(spec.layout(0)));
        let batch = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]]).unwrap();
        let out = mlp_forward(&spec, &p, &batch).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_two_one_hand_evaluation() {
        // h1 = tanh(0.5*1 - 0.25*1 + 0.1), h2 = tanh(-0.3*1 + 0.8*1 - 0.2)
        // y  = 1.5*h1 - 0.7*h2 + 0.05
        let spec = MlpSpec::new(&[2, 2, 1], Activation::Tanh).unwrap();
        let p = params_for(&spec, vec![0.5, -0.25, -0.3, 0.8, 0.1, -0.2, 1.5, -0.7, 0.05]);
        let out = mlp_forward(&spec, &p, &DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        let h1 = libm::tanh(0.35);
        let h2 = libm::tanh(0.3);
        let expected = 1.5 * h1 - 0.7 * h2 + 0.05;
        assert!((out.get(0, 0) - expected).abs() < 1e-15);
        // frozen value of the same chain
        assert!((out.get(0, 0) - 0.350_644_487_788_384_6).abs() < 1e-9, "{}", out.get(0, 0));
    }

    #[test]
    fn dimension_mismatch_names_dims() {
        let spec = MlpSpec::new(&[3, 1], Activation::Tanh).unwrap();
        let p = FlatParams::zeros(Arc::new(spec.layout(0)));
        let err = mlp_forward(&spec, &p, &DenseMatrix::zeros(1, 2)).unwrap_err();
        assert_eq!(err, Error::shape("batch columns vs MLP input", 3, 2));
    }

    #[test]
    fn flatten_unflatten_identity() {
        let spec = MlpSpec::new(&[3, 4, 2], Activation::Relu).unwrap().without_final_bias();
        let layout = Arc::new(spec.layout(0));
        let values = spec.init_params(&mut Rng::new(5));
        let p = FlatParams::from_values(layout.clone(), values).unwrap();
        let blocks = p.unflatten();
        let q = FlatParams::flatten(layout, &blocks).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn grad_dot_examples() {
        let layout = Arc::new(ParamLayout::vector(2));
        let a = FlatParams::from_values(layout.clone(), vec![1.0, 2.0]).unwrap();
        let b = FlatParams::from_values(layout.clone(), vec![3.0, -1.0]).unwrap();
        assert_eq!(grad_dot(&a, &b).unwrap(), 1.0);
        assert_eq!(grad_dot(&FlatParams::zeros(layout), &b).unwrap(), 0.0);
        assert_eq!(grad_dot(&a, &a).unwrap(), 5.0);
        let other = FlatParams::zeros(Arc::new(ParamLayout::vector(3)));
        assert!(grad_dot(&a, &other).is_err());
    }

    #[test]
    fn init_is_glorot_bounded_and_seeded() {
        let spec = MlpSpec::new(&[6, 32, 8], Activation::Tanh).unwrap();
        let a = spec.init_params(&mut Rng::new(1));
        let b = spec.init_params(&mut Rng::new(1));
        assert_eq!(a, b);
        let limit = libm::sqrt(6.0 / 38.0);
        assert!(a[..6 * 32].iter().all(|w| w.abs() <= limit));
        assert!(a[6 * 32..6 * 32 + 32].iter().all(|&v| v == 0.0));
    }
}
