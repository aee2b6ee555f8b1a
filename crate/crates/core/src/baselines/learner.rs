use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::genclass::{GcConfig, GenerativeClassifier};
use crate::slda::{BiasConvention, LinearRule, SldaPhase, SldaState};
use crate::stream::{Dataset, Method, Stream, StreamEvent};

/// Anything that learns from a class-incremental stream and then predicts
/// over all classes.
pub trait Learner: Send + Sync {
    fn method(&self) -> Method;

    fn observe(&mut self, event: &StreamEvent<'_>, train: &Dataset) -> Result<()>;

    /// Called once the stream (or a prefix) has been consumed and before
    /// any `predict`.
    fn prepare(&mut self) -> Result<()> {
        Ok(())
    }

    fn predict(&self, x: &[f64], test_index: usize) -> Result<usize>;

    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Feeds every event to `learner`; `on_task_end` runs after each boundary
/// has been observed.
pub fn run_stream<F>(learner: &mut dyn Learner, stream: Stream<'_>, train: &Dataset, mut on_task_end: F) -> Result<()>
where
    F: FnMut(usize, &mut dyn Learner) -> Result<()>,
{
    for event in stream {
        learner.observe(&event, train)?;
        if let StreamEvent::TaskEnd { task_id } = event {
            on_task_end(task_id, learner)?;
        }
    }
    learner.prepare()
}

/// The generative classifier as a stream learner.
pub struct GcLearner {
    pub gc: GenerativeClassifier,
    samples: usize,
    eval_seed: u64,
    clamps: AtomicU64,
}

impl GcLearner {
    pub fn new(config: GcConfig, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::domain("importance sampling needs S ≥ 1"));
        }
        let eval_seed = config.seed;
        Ok(GcLearner {
            gc: GenerativeClassifier::new(config)?,
            samples,
            eval_seed,
            clamps: AtomicU64::new(0),
        })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn set_samples(&mut self, samples: usize) -> Result<()> {
        if samples == 0 {
            return Err(Error::domain("importance sampling needs S ≥ 1"));
        }
        self.samples = samples;
        Ok(())
    }

    pub fn sigma_clamps(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }
}

impl Learner for GcLearner {
    fn method(&self) -> Method {
        Method::GenerativeClassifier
    }

    fn observe(&mut self, event: &StreamEvent<'_>, _train: &Dataset) -> Result<()> {
        match *event {
            StreamEvent::Sample { x, y, .. } => self.gc.observe(x, y),
            StreamEvent::TaskEnd { .. } => Ok(()),
        }
    }

    fn predict(&self, x: &[f64], test_index: usize) -> Result<usize> {
        let p = self.gc.classify(x, self.samples, self.eval_seed, test_index as u64)?;
        if p.clamped > 0 {
            self.clamps.fetch_add(p.clamped as u64, Ordering::Relaxed);
        }
        Ok(p.class)
    }

    fn warnings(&self) -> Vec<String> {
        match self.sigma_clamps() {
            0 => Vec::new(),
            n => vec![format!("posterior sigma floor applied {n} times")],
        }
    }
}

/// Streaming LDA. The shared covariance starts from a shrinkage estimate
/// over the distinct samples of the first task, or of the first
/// `init_events` events when the stream carries no task boundaries.
pub struct SldaLearner {
    pub state: SldaState,
    first_task: BTreeSet<usize>,
    init_events: usize,
    events: usize,
    rule: Option<LinearRule>,
}

impl SldaLearner {
    pub fn new(dim: usize, eps: f64, bias: BiasConvention, init_events: usize) -> Result<Self> {
        Ok(SldaLearner {
            state: SldaState::new(dim, eps, bias)?,
            first_task: BTreeSet::new(),
            init_events,
            events: 0,
            rule: None,
        })
    }

    fn initialise(&mut self, train: &Dataset) -> Result<()> {
        let batch: Vec<(&[f64], usize)> = self.first_task.iter().map(|&i| (train.input(i), train.label(i))).collect();
        self.state.init_covariance(&batch)?;
        self.first_task.clear();
        Ok(())
    }
}

impl Learner for SldaLearner {
    fn method(&self) -> Method {
        Method::Slda
    }

    fn observe(&mut self, event: &StreamEvent<'_>, train: &Dataset) -> Result<()> {
        self.rule = None;
        match *event {
            StreamEvent::Sample { x, y, index, task_id } => {
                self.events += 1;
                if self.state.phase() == SldaPhase::Streaming {
                    return self.state.update(x, y);
                }
                self.state.update_mean(x, y)?;
                self.first_task.insert(index);
                if task_id.is_none() && self.events >= self.init_events {
                    self.initialise(train)?;
                }
                Ok(())
            }
            StreamEvent::TaskEnd { .. } => {
                if self.state.phase() == SldaPhase::CollectingFirstTask {
                    self.initialise(train)?;
                }
                Ok(())
            }
        }
    }

    fn prepare(&mut self) -> Result<()> {
        if self.state.phase() == SldaPhase::CollectingFirstTask {
            return Err(Error::protocol("SLDA covariance was never initialised"));
        }
        self.rule = Some(self.state.build_rule()?);
        Ok(())
    }

    fn predict(&self, x: &[f64], _test_index: usize) -> Result<usize> {
        let rule = self.rule.as_ref().ok_or_else(|| Error::protocol("prepare() must run before predict"))?;
        Ok(rule.predict(x))
    }
}
