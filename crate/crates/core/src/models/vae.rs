//! Variational autoencoder with a diagonal-Gaussian encoder, a standard-normal
//! prior, and a unit-variance Gaussian decoder.
//!
//! The encoder maps `x` to `2 * latent_dim` outputs: the posterior mean
//! followed by the log-variance. The per-sample loss averages the squared
//! reconstruction error over `mc_samples` reparameterized latent draws and adds
//! the closed-form KL divergence to the prior:
//!
//! ```text
//! loss(x) = 1/l * sum_s 0.5 * |x - dec(mu + sigma * eps_s)|^2 + KL(N(mu, sigma^2) || N(0, I))
//! ```

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{
    check_sample, squared_distance, FlatParams, LossKind, MlpSpec, MlpTrace, Objective,
    ParamLayout, Rng,
};

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder: MlpSpec,
    decoder: MlpSpec,
    latent_dim: usize,
    mc_samples: usize,
    layout: Arc<ParamLayout>,
}

/// `0.5 * sum_j (mu_j^2 + sigma_j^2 - 1 - ln sigma_j^2)`, the KL divergence
/// from `N(mu, diag(sigma^2))` to the standard normal.
pub fn kl_diag_gaussian(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::shape("KL mean/scale length", mu.len(), sigma.len()));
    }
    let mut total = 0.0;
    for (&m, &s) in mu.iter().zip(sigma) {
        if s.is_nan() || s <= 0.0 {
            return Err(Error::Domain(format!("KL scale must be > 0, got {s}")));
        }
        let var = s * s;
        total += m * m + var - 1.0 - libm::log(var);
    }
    Ok(0.5 * total)
}

impl VaeModel {
    pub fn new(encoder: MlpSpec, decoder: MlpSpec, mc_samples: usize) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim {
            return Err(Error::shape(
                "encoder output width (2 x latent)",
                2 * latent_dim,
                encoder.output_dim(),
            ));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "decoder output width",
                encoder.input_dim(),
                decoder.output_dim(),
            ));
        }
        if mc_samples == 0 {
            return Err(Error::Config(String::from(
                "Monte-Carlo sample count l must be >= 1",
            )));
        }
        let layout = encoder.layout(0).concat(&decoder.layout(encoder.num_layers()));
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim,
            mc_samples,
            layout: Arc::new(layout),
        })
    }

    /// Symmetric VAE: `input -> hidden... -> 2*latent` and `latent -> reversed hidden... -> input`.
    pub fn symmetric(
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        mc_samples: usize,
        activation: crate::numeric::Activation,
    ) -> Result<Self> {
        let mut enc = vec![input_dim];
        enc.extend_from_slice(hidden);
        enc.push(2 * latent_dim);
        let mut dec = vec![latent_dim];
        dec.extend(hidden.iter().rev());
        dec.push(input_dim);
        VaeModel::new(
            MlpSpec::new(&enc, activation)?,
            MlpSpec::new(&dec, activation)?,
            mc_samples,
        )
    }

    pub fn encoder(&self) -> &MlpSpec {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpSpec {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    /// Same architecture with a different number of Monte-Carlo draws.
    pub fn with_mc_samples(&self, mc_samples: usize) -> Result<Self> {
        VaeModel::new(self.encoder.clone(), self.decoder.clone(), mc_samples)
    }

    pub fn init_params(&self, rng: &mut Rng) -> FlatParams {
        let mut values = self.encoder.init_params(rng);
        values.extend(self.decoder.init_params(rng));
        FlatParams::from_values(self.layout.clone(), values).expect("layout matches init")
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        params.split_at(self.encoder.param_count())
    }

    fn encode_raw(&self, params: &[f64], x: &[f64], trace: &mut MlpTrace) -> Result<()> {
        let (enc, _) = self.split(params);
        self.encoder.forward_trace(enc, x, trace)?;
        if trace.output().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "VAE encoder output",
                sample: 0,
            });
        }
        Ok(())
    }

    /// Posterior mean and standard deviation for `x`.
    pub fn encode(&self, params: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_sample(self, params, x, &vec![0.0; self.noise_len()])?;
        let mut trace = MlpTrace::default();
        self.encode_raw(params, x, &mut trace)?;
        let (mu, logvar) = trace.output().split_at(self.latent_dim);
        let sigma = logvar.iter().map(|h| libm::exp(0.5 * h)).collect();
        Ok((mu.to_vec(), sigma))
    }

    /// Decoder output for a latent vector.
    pub fn decode(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let (_, dec) = self.split(params);
        self.decoder.forward(dec, z)
    }

    /// Loss with fresh reparameterization noise from `rng`.
    pub fn sampled_loss(&self, params: &[f64], x: &[f64], rng: &mut Rng) -> Result<f64> {
        let noise = self.draw_noise(rng);
        self.loss(params, x, &noise)
    }

    /// `|x - dec(mu(x))|^2`, decoding the posterior mean without sampling.
    pub fn reconstruction_score(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        let (mu, _) = self.encode(params, x)?;
        let recon = self.decode(params, &mu)?;
        let s = squared_distance(x, &recon);
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: "reconstruction score",
                sample: 0,
            });
        }
        Ok(s)
    }
}

impl Objective for VaeModel {
    fn kind(&self) -> LossKind {
        LossKind::VaeElbo
    }

    fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    fn noise_len(&self) -> usize {
        self.mc_samples * self.latent_dim
    }

    fn loss(&self, params: &[f64], x: &[f64], noise: &[f64]) -> Result<f64> {
        check_sample(self, params, x, noise)?;
        let mut trace = MlpTrace::default();
        self.encode_raw(params, x, &mut trace)?;
        let (mu, logvar) = trace.output().split_at(self.latent_dim);
        let sigma: Vec<f64> = logvar.iter().map(|h| libm::exp(0.5 * h)).collect();
        let kl = kl_diag_gaussian(mu, &sigma)?;
        let (_, dec) = self.split(params);
        let mut z = vec![0.0; self.latent_dim];
        let mut dec_trace = MlpTrace::default();
        let mut recon = 0.0;
        for eps in noise.chunks_exact(self.latent_dim) {
            for j in 0..self.latent_dim {
                z[j] = mu[j] + sigma[j] * eps[j];
            }
            self.decoder.forward_trace(dec, &z, &mut dec_trace)?;
            recon += 0.5 * squared_distance(x, dec_trace.output());
        }
        let loss = recon / self.mc_samples as f64 + kl;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "VAE loss",
                sample: 0,
            });
        }
        Ok(loss)
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
        if grad.len() != params.len() {
            return Err(Error::shape("gradient buffer", params.len(), grad.len()));
        }
        let latent = self.latent_dim;
        let mut enc_trace = MlpTrace::default();
        self.encode_raw(params, x, &mut enc_trace)?;
        let (mu, logvar) = enc_trace.output().split_at(latent);
        let sigma: Vec<f64> = logvar.iter().map(|h| libm::exp(0.5 * h)).collect();
        let kl = kl_diag_gaussian(mu, &sigma)?;

        // d(loss)/d(encoder output), already multiplied by `scale`.
        let mut d_enc = vec![0.0; 2 * latent];
        for j in 0..latent {
            d_enc[j] = scale * mu[j];
            d_enc[latent + j] = scale * 0.5 * (sigma[j] * sigma[j] - 1.0);
        }

        let n_enc = self.encoder.param_count();
        let (enc_params, dec_params) = self.split(params);
        let (enc_grad, dec_grad) = grad.split_at_mut(n_enc);
        let per_draw = scale / self.mc_samples as f64;
        let mut z = vec![0.0; latent];
        let mut d_z = vec![0.0; latent];
        let mut residual = vec![0.0; x.len()];
        let mut dec_trace = MlpTrace::default();
        let mut recon = 0.0;
        for eps in noise.chunks_exact(latent) {
            for j in 0..latent {
                z[j] = mu[j] + sigma[j] * eps[j];
            }
            self.decoder.forward_trace(dec_params, &z, &mut dec_trace)?;
            for ((r, &out), &xi) in residual.iter_mut().zip(dec_trace.output()).zip(x) {
                *r = out - xi;
            }
            recon += 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
            residual.iter_mut().for_each(|r| *r *= per_draw);
            self.decoder
                .backward(dec_params, &dec_trace, &residual, dec_grad, Some(&mut d_z))?;
            for j in 0..latent {
                d_enc[j] += d_z[j];
                // dz/dh = 0.5 * sigma * eps
                d_enc[latent + j] += d_z[j] * 0.5 * sigma[j] * eps[j];
            }
        }
        self.encoder
            .backward(enc_params, &enc_trace, &d_enc, enc_grad, None)?;
        let loss = recon / self.mc_samples as f64 + kl;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "VAE loss",
                sample: 0,
            });
        }
        Ok(loss)
    }

    fn describe(&self) -> String {
        format!(
            "vae|enc={}|dec={}|latent={}|l={}",
            self.encoder.describe(),
            self.decoder.describe(),
            self.latent_dim,
            self.mc_samples
        )
    }
}
