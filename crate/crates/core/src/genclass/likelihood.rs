//! Importance-sampling estimate of `log p(x)` under a trained VAE, with the
//! encoder posterior as proposal.

use crate::error::{Error, Result};
use crate::numerics::{diag_gaussian_log_density, gaussian_log_density, log_sum_exp, Mat, Rng};

use super::vae::VaeModel;

pub const SIGMA_FLOOR: f64 = 1e-6;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEstimate {
    pub log_likelihood: f64,
    /// Posterior scale components that fell below [`SIGMA_FLOOR`].
    pub clamped: usize,
}

/// `log (1/S) Σ_s p(x|z_s) p(z_s) / q(z_s|x)` with `z_s ~ q(z|x)`.
pub fn importance_log_likelihood(vae: &VaeModel, x: &[f64], samples: usize, rng: &mut Rng) -> Result<LikelihoodEstimate> {
    if samples < 1 {
        return Err(Error::domain("importance sampling needs at least one sample"));
    }
    let latent = vae.latent_dim();
    let mut remaining = samples;
    let post = Posterior::new(vae, x)?;
    let mut terms = Vec::with_capacity(samples);
    while remaining > 0 {
        let m = remaining.min(CHUNK);
        let mut eps = Mat::zeros(m, latent);
        rng.fill_standard_normal(eps.as_mut_slice());
        post.log_weights(vae, x, &eps, &mut terms)?;
        remaining -= m;
    }
    Ok(LikelihoodEstimate {
        log_likelihood: log_sum_exp(&terms)? - (samples as f64).ln(),
        clamped: post.clamped,
    })
}

/// Same estimate for caller-supplied noise `ε` (one row per sample).
pub fn importance_log_likelihood_with_noise(vae: &VaeModel, x: &[f64], noise: &Mat) -> Result<LikelihoodEstimate> {
    if noise.rows() < 1 {
        return Err(Error::domain("importance sampling needs at least one sample"));
    }
    if noise.cols() != vae.latent_dim() {
        return Err(Error::shape("noise width must equal the latent dimension"));
    }
    let post = Posterior::new(vae, x)?;
    let mut terms = Vec::with_capacity(noise.rows());
    post.log_weights(vae, x, noise, &mut terms)?;
    Ok(LikelihoodEstimate {
        log_likelihood: log_sum_exp(&terms)? - (noise.rows() as f64).ln(),
        clamped: post.clamped,
    })
}

struct Posterior {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    var: Vec<f64>,
    clamped: usize,
}

impl Posterior {
    fn new(vae: &VaeModel, x: &[f64]) -> Result<Self> {
        if x.len() != vae.input_dim() {
            return Err(Error::shape(format!(
                "input has {} values, model expects {}",
                x.len(),
                vae.input_dim()
            )));
        }
        let xm = Mat::from_vec(1, x.len(), x.to_vec())?;
        let (mu, log_sigma) = vae.encode(&xm)?;
        let mut clamped = 0;
        let sigma: Vec<f64> = log_sigma
            .as_slice()
            .iter()
            .map(|&l| {
                let s = l.exp();
                if s < SIGMA_FLOOR {
                    clamped += 1;
                    SIGMA_FLOOR
                } else {
                    s
                }
            })
            .collect();
        let var = sigma.iter().map(|s| s * s).collect();
        Ok(Posterior {
            mu: mu.into_vec(),
            sigma,
            var,
            clamped,
        })
    }

    fn log_weights(&self, vae: &VaeModel, x: &[f64], eps: &Mat, out: &mut Vec<f64>) -> Result<()> {
        let latent = self.mu.len();
        let mut z = Mat::zeros(eps.rows(), latent);
        for r in 0..eps.rows() {
            for j in 0..latent {
                z.set(r, j, self.mu[j] + self.sigma[j] * eps.get(r, j));
            }
        }
        let means = vae.decode(&z)?;
        let zero = vec![0.0; latent];
        for r in 0..eps.rows() {
            let zr = z.row(r);
            let w = gaussian_log_density(x, means.row(r), 1.0)? + gaussian_log_density(zr, &zero, 1.0)?
                - diag_gaussian_log_density(zr, &self.mu, &self.var)?;
            out.push(w);
        }
        Ok(())
    }
}
