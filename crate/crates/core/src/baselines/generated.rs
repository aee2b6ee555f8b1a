use crate::error::{Error, Result};
use crate::genclass::{GcConfig, GenerativeClassifier};
use crate::netcore::{batch_cross_entropy, ActiveSet, Adam, DenseNet};
use crate::numerics::{Mat, Rng};
use crate::stream::{Dataset, Method, StreamEvent};

use super::learner::Learner;
use super::softmax::{argmax, base_net, BaselineParams};

/// `n` classes drawn uniformly from `classes`.
pub fn draw_classes(n: usize, classes: &[usize], rng: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| classes[rng.below(classes.len())]).collect()
}

/// Trains the base network on mini-batches sampled entirely from the
/// per-class VAEs of `gc`: each row picks a class uniformly, then decodes
/// one prior draw of that class's model.
pub fn train_on_generated(
    gc: &GenerativeClassifier,
    params: &BaselineParams,
    iterations: usize,
    batch_size: usize,
    seed: u64,
) -> Result<DenseNet> {
    let classes = gc.classes();
    if classes.is_empty() {
        return Err(Error::protocol("no class models to sample from"));
    }
    let num_classes = gc.config().num_classes;
    let dim = gc.config().input_dim;
    let mut net = base_net(dim, &params.hidden, num_classes, seed)?;
    let mut adam = Adam::new(net.num_params(), params.lr);
    let active = ActiveSet::all(num_classes);
    let mut class_rng = Rng::named(seed, "gen-disc-class", &[]);
    let mut sample_rngs: Vec<Rng> = (0..num_classes)
        .map(|c| Rng::named(seed, "gen-disc-sample", &[c as u64]))
        .collect();
    for _ in 0..iterations {
        let labels = draw_classes(batch_size, &classes, &mut class_rng);
        let mut x = Mat::zeros(batch_size, dim);
        for &c in &classes {
            let rows: Vec<usize> = (0..batch_size).filter(|&r| labels[r] == c).collect();
            if rows.is_empty() {
                continue;
            }
            let model = gc.model(c).expect("listed class has a model");
            let samples = model.sample_batch(rows.len(), &mut sample_rngs[c])?;
            for (k, &r) in rows.iter().enumerate() {
                x.row_mut(r).copy_from_slice(samples.row(k));
            }
        }
        let cache = net.forward_batch(&x)?;
        let (_, grad_out) = batch_cross_entropy(cache.output(), &labels, &active, 1.0)?;
        let grads = net.backward(&cache, &grad_out)?;
        adam.step(net.params_mut(), &grads)?;
    }
    Ok(net)
}

/// Learns per-class VAEs from the stream like the generative classifier,
/// then at `prepare` trains a softmax network on their samples only.
pub struct GeneratedLearner {
    pub gc: GenerativeClassifier,
    params: BaselineParams,
    iterations: usize,
    batch_size: usize,
    seed: u64,
    net: Option<DenseNet>,
}

impl GeneratedLearner {
    pub fn new(config: GcConfig, params: BaselineParams, iterations: usize, batch_size: usize) -> Result<Self> {
        let seed = config.seed;
        Ok(GeneratedLearner {
            gc: GenerativeClassifier::new(config)?,
            params,
            iterations,
            batch_size,
            seed,
            net: None,
        })
    }
}

impl Learner for GeneratedLearner {
    fn method(&self) -> Method {
        Method::GenerativeDiscriminative
    }

    fn observe(&mut self, event: &StreamEvent<'_>, _train: &Dataset) -> Result<()> {
        if let StreamEvent::Sample { x, y, .. } = *event {
            self.net = None;
            self.gc.observe(x, y)?;
        }
        Ok(())
    }

    fn prepare(&mut self) -> Result<()> {
        if self.net.is_none() {
            self.net = Some(train_on_generated(&self.gc, &self.params, self.iterations, self.batch_size, self.seed)?);
        }
        Ok(())
    }

    fn predict(&self, x: &[f64], _test_index: usize) -> Result<usize> {
        let net = self.net.as_ref().ok_or_else(|| Error::protocol("prepare() must run before predict"))?;
        Ok(argmax(&net.predict(x)?))
    }
}
