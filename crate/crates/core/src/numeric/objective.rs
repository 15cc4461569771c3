use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use sha2::{Digest, Sha256};

use super::mlp::{FlatParams, ParamLayout};
use super::rng::Rng;
use crate::error::{Error, Result};

/// Which per-sample loss a model is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    VaeElbo,
    Dsvdd,
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::VaeElbo => "vae-elbo",
            LossKind::Dsvdd => "dsvdd",
            LossKind::Mse => "mse",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vae-elbo" | "vae" => Ok(LossKind::VaeElbo),
            "dsvdd" => Ok(LossKind::Dsvdd),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Config(format!("unknown loss descriptor `{other}`"))),
        }
    }
}

/// A differentiable per-sample loss over a flat parameter vector.
///
/// Stochastic losses (the VAE ELBO) take their standard-normal draws as an
/// explicit `noise` slice of length [`Objective::noise_len`], so the same
/// draws can be replayed across a gradient check or across checkpoints.
pub trait Objective: Sync + Send {
    fn kind(&self) -> LossKind;

    fn input_dim(&self) -> usize;

    fn layout(&self) -> &Arc<ParamLayout>;

    fn noise_len(&self) -> usize {
        0
    }

    fn loss(&self, params: &[f64], x: &[f64], noise: &[f64]) -> Result<f64>;

    /// Adds `scale * dloss/dparams` into `grad` and returns the loss.
    fn accumulate_gradient(
        &self,
        params: &[f64],
        x: &[f64],
        noise: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64>;

    /// Stable description of architecture and loss, hashed into checkpoint fingerprints.
    fn describe(&self) -> String;

    fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.describe().as_bytes());
        h.update(b"|");
        h.update(self.layout().describe().as_bytes());
        h.finalize().into()
    }

    /// Fresh noise for one loss evaluation.
    fn draw_noise(&self, rng: &mut Rng) -> Vec<f64> {
        let mut noise = vec![0.0; self.noise_len()];
        rng.fill_standard_normal(&mut noise);
        noise
    }
}

pub(crate) fn check_sample<O: Objective + ?Sized>(
    obj: &O,
    params: &[f64],
    x: &[f64],
    noise: &[f64],
) -> Result<()> {
    if params.len() != obj.layout().total_len() {
        return Err(Error::shape("parameter count", obj.layout().total_len(), params.len()));
    }
    if x.len() != obj.input_dim() {
        return Err(Error::shape("sample dimension", obj.input_dim(), x.len()));
    }
    if noise.len() != obj.noise_len() {
        return Err(Error::shape("noise length", obj.noise_len(), noise.len()));
    }
    Ok(())
}

/// Gradient of the per-sample loss with respect to every parameter.
pub fn per_sample_gradient<O: Objective + ?Sized>(
    obj: &O,
    params: &FlatParams,
    sample: &[f64],
    noise: &[f64],
) -> Result<FlatParams> {
    if params.layout().as_ref() != obj.layout().as_ref() {
        return Err(Error::shape(
            "parameter layout",
            obj.layout().total_len(),
            params.len(),
        ));
    }
    let mut grad = FlatParams::zeros(params.layout().clone());
    obj.accumulate_gradient(params.values(), sample, noise, 1.0, grad.values_mut())?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_kind_parse() {
        assert_eq!("vae-elbo".parse::<LossKind>().unwrap(), LossKind::VaeElbo);
        assert_eq!(" DSVDD ".parse::<LossKind>().unwrap(), LossKind::Dsvdd);
        assert_eq!("mse".parse::<LossKind>().unwrap(), LossKind::Mse);
        assert!(matches!("hinge".parse::<LossKind>(), Err(Error::Config(_))));
    }
}
