//! Gaussian VAE with a diagonal-Gaussian encoder and a unit-variance
//! Gaussian decoder, trained on the negative ELBO with one reparameterised
//! sample per datapoint.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::netcore::{Adam, DenseNet};
use crate::numerics::{Mat, Rng};

/// How the reconstruction term is scaled during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReconScale {
    /// Plain squared error `‖x − μ_θ(z)‖²`.
    #[default]
    Paper,
    /// The full `−log N(x | μ_θ(z), I)`: `½‖x − μ_θ(z)‖² + (d/2)·ln 2π`.
    Exact,
}

impl ReconScale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ReconScale::Paper),
            "exact" => Ok(ReconScale::Exact),
            other => Err(Error::Usage(format!("unknown recon_scale `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReconScale::Paper => "paper",
            ReconScale::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    latent_dim: usize,
    input_dim: usize,
}

/// Batch-mean loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub loss: f64,
    pub recon: f64,
    pub latent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl VaeGrads {
    pub fn scale(&mut self, w: f64) {
        for g in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            *g *= w;
        }
    }

    pub fn add(&mut self, other: &VaeGrads) {
        for (a, b) in self.encoder.iter_mut().zip(&other.encoder) {
            *a += b;
        }
        for (a, b) in self.decoder.iter_mut().zip(&other.decoder) {
            *a += b;
        }
    }
}

/// One Adam state per network of a [`VaeModel`].
#[derive(Debug, Clone)]
pub struct VaeOptimizer {
    pub encoder: Adam,
    pub decoder: Adam,
}

impl VaeOptimizer {
    pub fn new(vae: &VaeModel, lr: f64) -> Self {
        VaeOptimizer {
            encoder: Adam::new(vae.encoder.num_params(), lr),
            decoder: Adam::new(vae.decoder.num_params(), lr),
        }
    }

    pub fn step(&mut self, vae: &mut VaeModel, grads: &VaeGrads) -> Result<()> {
        self.encoder.step(vae.encoder.params_mut(), &grads.encoder)?;
        self.decoder.step(vae.decoder.params_mut(), &grads.decoder)
    }
}

impl VaeModel {
    /// Encoder `[input, hidden..., 2·latent]`, decoder `[latent, hidden reversed..., input]`.
    pub fn new(input_dim: usize, hidden: &[usize], latent_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut enc = vec![input_dim];
        enc.extend_from_slice(hidden);
        enc.push(2 * latent_dim);
        let mut dec = vec![latent_dim];
        dec.extend(hidden.iter().rev());
        dec.push(input_dim);
        let encoder = DenseNet::new(&enc, rng)?;
        let decoder = DenseNet::new(&dec, rng)?;
        VaeModel::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: DenseNet, decoder: DenseNet) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        let input_dim = encoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim {
            return Err(Error::shape(format!(
                "encoder emits {} values but the latent space has {latent_dim} dimensions",
                encoder.output_dim()
            )));
        }
        if decoder.output_dim() != input_dim {
            return Err(Error::shape("decoder output width differs from encoder input width"));
        }
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim,
            input_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    /// Posterior means and log standard deviations, one row per input.
    pub fn encode(&self, x: &Mat) -> Result<(Mat, Mat)> {
        let h = self.encoder.predict_batch(x)?;
        Ok(split_posterior(&h, self.latent_dim))
    }

    pub fn decode(&self, z: &Mat) -> Result<Mat> {
        self.decoder.predict_batch(z)
    }

    /// Loss and gradients with fresh noise for every datapoint.
    pub fn elbo_loss_and_grads(
        &self,
        batch: &Mat,
        rng: &mut Rng,
        scale: ReconScale,
    ) -> Result<(ElboTerms, VaeGrads)> {
        let mut noise = Mat::zeros(batch.rows(), self.latent_dim);
        rng.fill_standard_normal(noise.as_mut_slice());
        self.elbo_with_noise(batch, &noise, scale)
    }

    /// Loss and gradients for a fixed reparameterisation noise `ε`
    /// (one row per datapoint). Gradients are for the batch-mean loss.
    pub fn elbo_with_noise(&self, batch: &Mat, noise: &Mat, scale: ReconScale) -> Result<(ElboTerms, VaeGrads)> {
        let n = batch.rows();
        if n == 0 {
            return Err(Error::domain("empty VAE batch"));
        }
        if noise.rows() != n || noise.cols() != self.latent_dim {
            return Err(Error::shape("noise must be batch × latent"));
        }
        let latent = self.latent_dim;
        let enc_cache = self.encoder.forward_batch(batch)?;
        let (mu, log_sigma) = split_posterior(enc_cache.output(), latent);
        let mut z = Mat::zeros(n, latent);
        let mut sigma = Mat::zeros(n, latent);
        for r in 0..n {
            for j in 0..latent {
                let s = log_sigma.get(r, j).exp();
                sigma.set(r, j, s);
                z.set(r, j, mu.get(r, j) + s * noise.get(r, j));
            }
        }
        let dec_cache = self.decoder.forward_batch(&z)?;
        let recon_out = dec_cache.output();

        let inv_n = 1.0 / n as f64;
        let (recon_coef, grad_coef) = match scale {
            ReconScale::Paper => (1.0, 2.0),
            ReconScale::Exact => (0.5, 1.0),
        };
        let mut recon_total = 0.0;
        let mut grad_recon = Mat::zeros(n, self.input_dim);
        for r in 0..n {
            let xr = batch.row(r);
            let gr = grad_recon.row_mut(r);
            let mut sq = 0.0;
            for ((g, &x), &m) in gr.iter_mut().zip(xr).zip(recon_out.row(r)) {
                let d = m - x;
                sq += d * d;
                *g = grad_coef * d * inv_n;
            }
            recon_total += recon_coef * sq;
        }
        if scale == ReconScale::Exact {
            recon_total += n as f64 * 0.5 * self.input_dim as f64 * (2.0 * PI).ln();
        }

        let mut latent_total = 0.0;
        for r in 0..n {
            for j in 0..latent {
                let m = mu.get(r, j);
                let ls = log_sigma.get(r, j);
                let s = sigma.get(r, j);
                latent_total += -0.5 * (1.0 + 2.0 * ls - m * m - s * s);
            }
        }
        let recon = recon_total * inv_n;
        let kl = latent_total * inv_n;
        if !recon.is_finite() {
            return Err(Error::Numeric(format!("reconstruction term diverged ({recon})")));
        }
        if !kl.is_finite() {
            return Err(Error::Numeric(format!("latent (KL) term diverged ({kl})")));
        }

        let dec_back = self.decoder.backward_with_input(&dec_cache, &grad_recon)?;
        let grad_z = dec_back.input_grad.expect("decoder input gradient requested");
        let mut grad_h = Mat::zeros(n, 2 * latent);
        for r in 0..n {
            for j in 0..latent {
                let gz = grad_z.get(r, j);
                let m = mu.get(r, j);
                let s = sigma.get(r, j);
                // z = μ + σ ε, σ = exp(ℓ); KL' wrt μ is μ, wrt ℓ is σ² − 1
                grad_h.set(r, j, gz + m * inv_n);
                grad_h.set(r, latent + j, gz * s * noise.get(r, j) + (s * s - 1.0) * inv_n);
            }
        }
        let enc_grads = self.encoder.backward(&enc_cache, &grad_h)?;
        Ok((
            ElboTerms {
                loss: recon + kl,
                recon,
                latent: kl,
            },
            VaeGrads {
                encoder: enc_grads,
                decoder: dec_back.grads,
            },
        ))
    }

    /// Decodes one draw from the prior, clamped to `[0, 1]`.
    pub fn sample(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let z = Mat::from_vec(1, self.latent_dim, rng.standard_normal_vec(self.latent_dim))?;
        let mut out = self.decode(&z)?.into_vec();
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// `n` prior samples as rows, clamped to `[0, 1]`.
    pub fn sample_batch(&self, n: usize, rng: &mut Rng) -> Result<Mat> {
        let z = Mat::from_vec(n, self.latent_dim, rng.standard_normal_vec(n * self.latent_dim))?;
        let mut out = self.decode(&z)?;
        for v in out.as_mut_slice() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }
}

pub(crate) fn split_posterior(h: &Mat, latent: usize) -> (Mat, Mat) {
    let n = h.rows();
    let mut mu = Mat::zeros(n, latent);
    let mut log_sigma = Mat::zeros(n, latent);
    for r in 0..n {
        let row = h.row(r);
        mu.row_mut(r).copy_from_slice(&row[..latent]);
        log_sigma.row_mut(r).copy_from_slice(&row[latent..2 * latent]);
    }
    (mu, log_sigma)
}
