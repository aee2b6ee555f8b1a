use crate::error::{Error, Result};
use crate::genclass::{ReconScale, VaeModel, VaeOptimizer};
use crate::netcore::{batch_cross_entropy, ActiveSet, Adam, DenseNet};
use crate::numerics::Rng;
use crate::stream::{Benchmark, Dataset, Method, StreamEvent};

use super::learner::Learner;
use super::softmax::{argmax, base_net, BaselineParams, BatchBuffer};

/// Weights `(current, replay)` when `n` tasks have been seen, the current
/// one included.
pub fn replay_weights(n: usize) -> (f64, f64) {
    let n = n.max(1) as f64;
    (1.0 / n, 1.0 - 1.0 / n)
}

#[derive(Debug, Clone)]
pub struct FrozenModels {
    pub classifier: DenseNet,
    pub generator: VaeModel,
    /// Classes the frozen classifier may assign to replayed inputs.
    pub classes: ActiveSet,
}

/// Deep generative replay: a classifier and a VAE generator trained side by
/// side, both rehearsing on samples from their copies at the last boundary.
pub struct DgrLearner {
    pub classifier: DenseNet,
    adam: Adam,
    pub generator: VaeModel,
    gen_opt: VaeOptimizer,
    pub frozen: Option<FrozenModels>,
    pub tasks_seen: usize,
    pub seen: ActiveSet,
    batch: BatchBuffer,
    batch_size: usize,
    replay_rng: Rng,
    noise_rng: Rng,
    steps: u64,
}

impl DgrLearner {
    pub fn new(params: &BaselineParams, bench: &Benchmark, input_dim: usize, seed: u64) -> Result<Self> {
        let classifier = base_net(input_dim, &params.hidden, bench.num_classes(), seed)?;
        let generator = VaeModel::new(
            input_dim,
            &params.dgr_hidden,
            params.dgr_latent,
            &mut Rng::named(seed, "dgr-generator-init", &[]),
        )?;
        Ok(DgrLearner {
            adam: Adam::new(classifier.num_params(), params.lr),
            classifier,
            gen_opt: VaeOptimizer::new(&generator, params.lr),
            generator,
            frozen: None,
            tasks_seen: 0,
            seen: ActiveSet::new(),
            batch: BatchBuffer::default(),
            batch_size: bench.batch_size,
            replay_rng: Rng::named(seed, "dgr-replay", &[]),
            noise_rng: Rng::named(seed, "dgr-noise", &[]),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn step(&mut self) -> Result<()> {
        if self.batch.len() == 0 {
            return Ok(());
        }
        let (x, labels) = self.batch.take(self.classifier.input_dim())?;
        self.seen.extend(labels.iter().copied());
        let (w_cur, w_rep) = replay_weights(self.tasks_seen + 1);

        let cache = self.classifier.forward_batch(&x)?;
        let (_, grad_out) = batch_cross_entropy(cache.output(), &labels, &self.seen, w_cur)?;
        let mut cls_grads = self.classifier.backward(&cache, &grad_out)?;
        let (_, mut gen_grads) = self.generator.elbo_loss_and_grads(&x, &mut self.noise_rng, ReconScale::Paper)?;
        gen_grads.scale(w_cur);

        if let Some(frozen) = &self.frozen {
            let xr = frozen.generator.sample_batch(x.rows(), &mut self.replay_rng)?;
            let logits = frozen.classifier.predict_batch(&xr)?;
            let yr: Vec<usize> = (0..xr.rows())
                .map(|r| frozen.classes.argmax(logits.row(r)).ok_or_else(|| Error::protocol("no classes to replay")))
                .collect::<Result<_>>()?;
            let cache = self.classifier.forward_batch(&xr)?;
            // Labels come from the old classes only, but the loss spans every
            // class seen so far so replay also suppresses the current ones.
            let (_, grad_out) = batch_cross_entropy(cache.output(), &yr, &self.seen, w_rep)?;
            for (a, b) in cls_grads.iter_mut().zip(self.classifier.backward(&cache, &grad_out)?) {
                *a += b;
            }
            let (_, mut g) = self.generator.elbo_loss_and_grads(&xr, &mut self.noise_rng, ReconScale::Paper)?;
            g.scale(w_rep);
            gen_grads.add(&g);
        }
        self.adam.step(self.classifier.params_mut(), &cls_grads)?;
        self.gen_opt.step(&mut self.generator, &gen_grads)?;
        self.steps += 1;
        Ok(())
    }

    pub fn task_boundary(&mut self) -> Result<()> {
        self.step()?;
        self.frozen = Some(FrozenModels {
            classifier: self.classifier.clone(),
            generator: self.generator.clone(),
            classes: self.seen.clone(),
        });
        self.tasks_seen += 1;
        Ok(())
    }
}

impl Learner for DgrLearner {
    fn method(&self) -> Method {
        Method::Dgr
    }

    fn observe(&mut self, event: &StreamEvent<'_>, _train: &Dataset) -> Result<()> {
        match *event {
            StreamEvent::Sample { x, y, task_id, .. } => {
                if task_id.is_none() {
                    return Err(Error::protocol("dgr needs task boundaries"));
                }
                self.batch.push(x, y);
                if self.batch.len() == self.batch_size {
                    self.step()?;
                }
                Ok(())
            }
            StreamEvent::TaskEnd { .. } => self.task_boundary(),
        }
    }

    fn predict(&self, x: &[f64], _test_index: usize) -> Result<usize> {
        Ok(argmax(&self.classifier.predict(x)?))
    }
}
