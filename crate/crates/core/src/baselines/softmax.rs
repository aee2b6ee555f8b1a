use std::collections::BTreeSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::netcore::{batch_cross_entropy, ActiveSet, Adam, DenseNet};
use crate::numerics::{Mat, Rng};
use crate::stream::{Benchmark, Dataset, Method, StreamEvent};

use super::cwr::{CwrHead, CwrVariant};
use super::learner::Learner;
use super::reg::{estimate_fisher, EwcState, OmegaCap, SiState};

/// Hyperparameters shared by the discriminative baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub ewc_lambda: f64,
    /// Cap on the number of task samples in the Fisher estimate.
    pub fisher_n: Option<usize>,
    pub si_lambda: f64,
    pub si_xi: f64,
    pub ar1_lambda: f64,
    pub ar1_omega_max: f64,
    pub omega_cap: OmegaCap,
    pub dgr_hidden: Vec<usize>,
    pub dgr_latent: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            hidden: vec![400, 400],
            lr: 0.001,
            ewc_lambda: 1e6,
            fisher_n: None,
            si_lambda: 1e3,
            si_xi: 0.1,
            ar1_lambda: 10.0,
            ar1_omega_max: 0.01,
            omega_cap: OmegaCap::Min,
            dgr_hidden: vec![400, 400],
            dgr_latent: 100,
        }
    }
}

/// Which outputs take part in the training softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveMode {
    /// Every class seen so far.
    Expanding,
    /// Only the classes of the current task.
    CurrentTask,
    AllClasses,
}

pub(crate) fn base_net(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<DenseNet> {
    let mut widths = vec![input_dim];
    widths.extend_from_slice(hidden);
    widths.push(classes);
    DenseNet::new(&widths, &mut Rng::named(seed, "net-init", &[]))
}

/// Highest logit over all outputs; ties go to the lowest class.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Mini-batch buffer filled one event at a time.
#[derive(Debug, Clone, Default)]
pub(crate) struct BatchBuffer {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl BatchBuffer {
    pub fn push(&mut self, x: &[f64], y: usize) {
        self.x.extend_from_slice(x);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn take(&mut self, dim: usize) -> Result<(Mat, Vec<usize>)> {
        let y = std::mem::take(&mut self.y);
        let x = Mat::from_vec(y.len(), dim, std::mem::take(&mut self.x))?;
        Ok((x, y))
    }
}

/// The base softmax network with every regularisation or head scheme that
/// operates on it.
pub struct SoftmaxLearner {
    method: Method,
    pub net: DenseNet,
    adam: Adam,
    mode: ActiveMode,
    tasks: Vec<Vec<usize>>,
    num_classes: usize,
    pub seen: ActiveSet,
    batch: BatchBuffer,
    batch_size: usize,
    current_task: Option<usize>,
    task_samples: BTreeSet<usize>,
    tasks_finished: usize,
    pub ewc: Option<EwcState>,
    fisher_n: Option<usize>,
    pub si: Option<SiState>,
    pub cwr: Option<CwrHead>,
    freeze_hidden_after_first: bool,
    eval_net: Option<DenseNet>,
    seed: u64,
    steps: u64,
    last_loss: Option<f64>,
}

impl SoftmaxLearner {
    pub fn new(method: Method, params: &BaselineParams, bench: &Benchmark, input_dim: usize, seed: u64) -> Result<Self> {
        let num_classes = bench.num_classes();
        let net = base_net(input_dim, &params.hidden, num_classes, seed)?;
        let hidden = 0..net.layer_range(net.num_layers() - 1).start;
        let head_in = *params.hidden.last().unwrap_or(&input_dim);
        let mode = match method {
            Method::None | Method::Ewc | Method::Si => ActiveMode::Expanding,
            Method::Joint => ActiveMode::AllClasses,
            Method::LabelsTrick | Method::Cwr | Method::CwrPlus | Method::Ar1 => ActiveMode::CurrentTask,
            other => {
                return Err(Error::Usage(format!("{} is not a softmax baseline", other.as_str())));
            }
        };
        let ewc = (method == Method::Ewc).then(|| EwcState::new(params.ewc_lambda));
        let si = match method {
            Method::Si => Some(SiState::new(net.params(), 0..net.num_params(), params.si_lambda, params.si_xi)?),
            Method::Ar1 => Some(
                SiState::new(net.params(), hidden, params.ar1_lambda, params.si_xi)?
                    .with_cap(params.ar1_omega_max, params.omega_cap),
            ),
            _ => None,
        };
        let cwr = match method {
            Method::Cwr => Some(CwrHead::new(CwrVariant::Cwr, num_classes, head_in)),
            Method::CwrPlus | Method::Ar1 => Some(CwrHead::new(CwrVariant::CwrPlus, num_classes, head_in)),
            _ => None,
        };
        Ok(SoftmaxLearner {
            method,
            adam: Adam::new(net.num_params(), params.lr),
            net,
            mode,
            tasks: bench.tasks.clone(),
            num_classes,
            seen: ActiveSet::new(),
            batch: BatchBuffer::default(),
            batch_size: bench.batch_size,
            current_task: None,
            task_samples: BTreeSet::new(),
            tasks_finished: 0,
            ewc,
            fisher_n: params.fisher_n,
            si,
            cwr,
            freeze_hidden_after_first: matches!(method, Method::Cwr | Method::CwrPlus),
            eval_net: None,
            seed,
            steps: 0,
            last_loss: None,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Cross-entropy of the most recent step.
    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn mode(&self) -> ActiveMode {
        self.mode
    }

    fn head_range(&self) -> Range<usize> {
        self.net.layer_range(self.net.num_layers() - 1)
    }

    fn hidden_frozen(&self) -> bool {
        self.freeze_hidden_after_first && self.tasks_finished > 0
    }

    fn begin_task(&mut self, t: usize) -> Result<()> {
        if t >= self.tasks.len() {
            return Err(Error::protocol(format!("task {t} is not part of the benchmark")));
        }
        self.current_task = Some(t);
        if let Some(head) = &self.cwr {
            let range = self.head_range();
            let mut rng = Rng::named(self.seed, "cwr-head", &[t as u64]);
            head.task_start(&mut self.net.params_mut()[range.clone()], &mut rng)?;
            self.adam.reset_range(range);
        }
        Ok(())
    }

    fn training_active(&mut self, labels: &[usize]) -> Result<ActiveSet> {
        self.seen.extend(labels.iter().copied());
        match self.mode {
            ActiveMode::Expanding => Ok(self.seen.clone()),
            ActiveMode::AllClasses => Ok(ActiveSet::all(self.num_classes)),
            ActiveMode::CurrentTask => {
                let t = self
                    .current_task
                    .ok_or_else(|| Error::protocol(format!("{} needs task identities", self.method.as_str())))?;
                let active: ActiveSet = self.tasks[t].iter().copied().collect();
                if let Some(y) = labels.iter().find(|&&y| !active.contains(y)) {
                    return Err(Error::protocol(format!("label {y} is outside task {t}")));
                }
                Ok(active)
            }
        }
    }

    fn train_step(&mut self) -> Result<()> {
        if self.batch.len() == 0 {
            return Ok(());
        }
        let (x, labels) = self.batch.take(self.net.input_dim())?;
        let active = self.training_active(&labels)?;
        let cache = self.net.forward_batch(&x)?;
        let (loss, grad_out) = batch_cross_entropy(cache.output(), &labels, &active, 1.0)?;
        let mut grads = self.net.backward(&cache, &grad_out)?;
        if let Some(ewc) = &self.ewc {
            let (_, g) = ewc.penalty(self.net.params())?;
            for (a, b) in grads.iter_mut().zip(g) {
                *a += ewc.lambda * b;
            }
        }
        if let Some(si) = &self.si {
            let (_, g) = si.penalty(self.net.params());
            for (a, b) in grads.iter_mut().zip(g) {
                *a += si.lambda * b;
            }
        }
        let frozen = if self.hidden_frozen() {
            let hidden = 0..self.head_range().start;
            grads[hidden.clone()].fill(0.0);
            Some(self.net.params()[hidden].to_vec())
        } else {
            None
        };
        let before = self.si.is_some().then(|| self.net.params().to_vec());
        self.adam.step(self.net.params_mut(), &grads)?;
        if let Some(saved) = frozen {
            // Adam momentum would otherwise keep moving frozen weights.
            self.net.params_mut()[..saved.len()].copy_from_slice(&saved);
        }
        if let (Some(si), Some(before)) = (&mut self.si, before) {
            si.accumulate(&before, self.net.params(), &grads);
        }
        self.steps += 1;
        self.last_loss = Some(loss);
        Ok(())
    }

    fn end_task(&mut self, t: usize, train: &Dataset) -> Result<()> {
        self.train_step()?;
        if self.ewc.is_some() {
            let mut indices: Vec<usize> = self.task_samples.iter().copied().collect();
            if let Some(cap) = self.fisher_n.filter(|&n| n < indices.len()) {
                Rng::named(self.seed, "fisher", &[t as u64]).shuffle(&mut indices);
                indices.truncate(cap);
                indices.sort_unstable();
            }
            let fisher = estimate_fisher(&self.net, &train.gather(&indices), &self.seen)?;
            let theta = self.net.params().to_vec();
            self.ewc.as_mut().expect("checked").add_anchor(theta, fisher)?;
        }
        if let Some(si) = &mut self.si {
            si.consolidate(self.net.params());
        }
        if self.cwr.is_some() {
            let range = self.head_range();
            let task_classes = self.tasks[t].clone();
            let seen = self.seen.to_vec();
            let head = self.cwr.as_mut().expect("checked");
            head.task_end(&mut self.net.params_mut()[range], &task_classes, &seen)?;
        }
        self.task_samples.clear();
        self.tasks_finished += 1;
        Ok(())
    }
}

impl Learner for SoftmaxLearner {
    fn method(&self) -> Method {
        self.method
    }

    fn observe(&mut self, event: &StreamEvent<'_>, train: &Dataset) -> Result<()> {
        self.eval_net = None;
        match *event {
            StreamEvent::Sample { x, y, index, task_id } => {
                if let Some(t) = task_id {
                    if self.current_task != Some(t) {
                        self.train_step()?;
                        self.begin_task(t)?;
                    }
                }
                if self.ewc.is_some() {
                    self.task_samples.insert(index);
                }
                self.batch.push(x, y);
                if self.batch.len() == self.batch_size {
                    self.train_step()?;
                }
                Ok(())
            }
            StreamEvent::TaskEnd { task_id } => self.end_task(task_id, train),
        }
    }

    fn prepare(&mut self) -> Result<()> {
        if let Some(head) = &self.cwr {
            let mut net = self.net.clone();
            let range = net.layer_range(net.num_layers() - 1);
            net.params_mut()[range].copy_from_slice(&head.cw);
            self.eval_net = Some(net);
        }
        Ok(())
    }

    fn predict(&self, x: &[f64], _test_index: usize) -> Result<usize> {
        let net = match (&self.cwr, &self.eval_net) {
            (None, _) => &self.net,
            (Some(_), Some(net)) => net,
            (Some(_), None) => return Err(Error::protocol("prepare() must run before predict")),
        };
        Ok(argmax(&net.predict(x)?))
    }
}
