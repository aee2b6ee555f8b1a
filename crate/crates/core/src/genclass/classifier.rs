use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};

use super::likelihood::importance_log_likelihood;
use super::vae::{ElboTerms, ReconScale, VaeModel, VaeOptimizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    #[default]
    Uniform,
    Counted,
}

impl PriorMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PriorMode::Uniform),
            "counted" => Ok(PriorMode::Counted),
            other => Err(Error::Usage(format!("unknown prior_mode `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PriorMode::Uniform => "uniform",
            PriorMode::Counted => "counted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub lr: f64,
    pub sub_batch: usize,
    pub recon_scale: ReconScale,
    pub prior_mode: PriorMode,
    /// Size of the class universe, used by the uniform prior.
    pub num_classes: usize,
    pub seed: u64,
}

impl GcConfig {
    /// Per-class VAE used on MNIST: 85-85 hidden, latent 5, sub-batches of 64.
    pub fn mnist(seed: u64) -> Self {
        GcConfig {
            input_dim: 784,
            hidden: vec![85, 85],
            latent_dim: 5,
            lr: 0.001,
            sub_batch: 64,
            recon_scale: ReconScale::Paper,
            prior_mode: PriorMode::Uniform,
            num_classes: 10,
            seed,
        }
    }
}

/// One VAE with its optimizer, noise stream and pending samples.
#[derive(Debug, Clone)]
pub struct ClassTrainer {
    pub model: VaeModel,
    optimizer: VaeOptimizer,
    noise: Rng,
    buffer: Vec<f64>,
    sub_batch: usize,
    updates_done: u64,
    last_terms: Option<ElboTerms>,
}

impl ClassTrainer {
    pub fn new(config: &GcConfig, class: usize) -> Result<Self> {
        let mut init = Rng::named(config.seed, "vae-init", &[class as u64]);
        let model = VaeModel::new(config.input_dim, &config.hidden, config.latent_dim, &mut init)?;
        Ok(ClassTrainer::from_model(model, config, class))
    }

    pub fn from_model(model: VaeModel, config: &GcConfig, class: usize) -> Self {
        ClassTrainer {
            optimizer: VaeOptimizer::new(&model, config.lr),
            model,
            noise: Rng::named(config.seed, "vae-noise", &[class as u64]),
            buffer: Vec::with_capacity(config.sub_batch * config.input_dim),
            sub_batch: config.sub_batch,
            updates_done: 0,
            last_terms: None,
        }
    }

    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn pending(&self) -> usize {
        self.buffer.len() / self.model.input_dim()
    }

    pub fn last_terms(&self) -> Option<ElboTerms> {
        self.last_terms
    }

    /// Buffers `x`; takes one optimizer step once a full sub-batch is pending.
    pub fn push(&mut self, x: &[f64], scale: ReconScale) -> Result<bool> {
        if x.len() != self.model.input_dim() {
            return Err(Error::shape(format!(
                "sample has {} values, model expects {}",
                x.len(),
                self.model.input_dim()
            )));
        }
        self.buffer.extend_from_slice(x);
        if self.pending() < self.sub_batch {
            return Ok(false);
        }
        let batch = Mat::from_vec(self.sub_batch, self.model.input_dim(), std::mem::take(&mut self.buffer))?;
        let (terms, grads) = self.model.elbo_loss_and_grads(&batch, &mut self.noise, scale)?;
        self.optimizer.step(&mut self.model, &grads)?;
        self.buffer = batch.into_vec();
        self.buffer.clear();
        self.updates_done += 1;
        self.last_terms = Some(terms);
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// `(class, score)` in ascending class order.
    pub scores: Vec<(usize, f64)>,
    pub clamped: usize,
}

/// One VAE per class plus observation counts; predicts with Bayes' rule.
#[derive(Debug, Clone)]
pub struct GenerativeClassifier {
    config: GcConfig,
    trainers: BTreeMap<usize, ClassTrainer>,
    counts: BTreeMap<usize, u64>,
}

impl GenerativeClassifier {
    pub fn new(config: GcConfig) -> Result<Self> {
        if config.sub_batch == 0 {
            return Err(Error::Usage("sub_batch must be at least 1".into()));
        }
        Ok(GenerativeClassifier {
            config,
            trainers: BTreeMap::new(),
            counts: BTreeMap::new(),
        })
    }

    pub(crate) fn from_parts(config: GcConfig, models: BTreeMap<usize, VaeModel>, counts: BTreeMap<usize, u64>) -> Self {
        let trainers = models
            .into_iter()
            .map(|(y, m)| (y, ClassTrainer::from_model(m, &config, y)))
            .collect();
        GenerativeClassifier {
            config,
            trainers,
            counts,
        }
    }

    pub fn config(&self) -> &GcConfig {
        &self.config
    }

    pub fn set_prior_mode(&mut self, mode: PriorMode) {
        self.config.prior_mode = mode;
    }

    pub fn classes(&self) -> Vec<usize> {
        self.trainers.keys().copied().collect()
    }

    pub fn model(&self, class: usize) -> Option<&VaeModel> {
        self.trainers.get(&class).map(|t| &t.model)
    }

    pub fn trainer(&self, class: usize) -> Option<&ClassTrainer> {
        self.trainers.get(&class)
    }

    pub fn count(&self, class: usize) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    pub fn total_updates(&self) -> u64 {
        self.trainers.values().map(|t| t.updates_done).sum()
    }

    /// Routes one labelled sample to its class trainer.
    pub fn observe(&mut self, x: &[f64], y: usize) -> Result<()> {
        *self.counts.entry(y).or_insert(0) += 1;
        if !self.trainers.contains_key(&y) {
            self.trainers.insert(y, ClassTrainer::new(&self.config, y)?);
        }
        let scale = self.config.recon_scale;
        self.trainers.get_mut(&y).expect("inserted above").push(x, scale)?;
        Ok(())
    }

    pub fn class_log_prior(&self, y: usize) -> Result<f64> {
        match self.config.prior_mode {
            PriorMode::Uniform => {
                if self.config.num_classes == 0 {
                    return Err(Error::domain("uniform prior over zero classes"));
                }
                Ok(-(self.config.num_classes as f64).ln())
            }
            PriorMode::Counted => {
                let n = self.count(y);
                if n == 0 {
                    return Err(Error::domain(format!("class {y} has never been observed")));
                }
                let total: u64 = self.counts.values().sum();
                Ok((n as f64 / total as f64).ln())
            }
        }
    }

    /// Bayes-rule prediction with a caller-chosen random stream per class.
    pub fn classify_with<F>(&self, x: &[f64], samples: usize, mut rng_for: F) -> Result<Prediction>
    where
        F: FnMut(usize) -> Rng,
    {
        if self.trainers.is_empty() {
            return Err(Error::protocol("generative classifier has no class models"));
        }
        let mut scores = Vec::with_capacity(self.trainers.len());
        let mut clamped = 0;
        let mut best: Option<(usize, f64)> = None;
        for (&y, trainer) in &self.trainers {
            let mut rng = rng_for(y);
            let est = importance_log_likelihood(&trainer.model, x, samples, &mut rng)?;
            clamped += est.clamped;
            let score = match self.config.prior_mode {
                PriorMode::Uniform => est.log_likelihood,
                PriorMode::Counted => est.log_likelihood + self.class_log_prior(y)?,
            };
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((y, score));
            }
            scores.push((y, score));
        }
        let class = best.expect("at least one model").0;
        Ok(Prediction {
            class,
            scores,
            clamped,
        })
    }

    /// Prediction for test item `index`, using the stream `("is-eval", class, index)`.
    pub fn classify(&self, x: &[f64], samples: usize, seed: u64, index: u64) -> Result<Prediction> {
        self.classify_with(x, samples, |y| Rng::named(seed, "is-eval", &[y as u64, index]))
    }
}
