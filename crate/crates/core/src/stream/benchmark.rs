use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    TaskBasedBatch,
    TaskBasedStreaming,
    TaskFree,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::TaskBasedBatch, Protocol::TaskBasedStreaming, Protocol::TaskFree];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "task_based_batch" => Ok(Protocol::TaskBasedBatch),
            "task_based_streaming" => Ok(Protocol::TaskBasedStreaming),
            "task_free" => Ok(Protocol::TaskFree),
            other => Err(Error::Usage(format!("unknown protocol `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::TaskBasedBatch => "task_based_batch",
            Protocol::TaskBasedStreaming => "task_based_streaming",
            Protocol::TaskFree => "task_free",
        }
    }

    pub fn is_task_based(self) -> bool {
        self != Protocol::TaskFree
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Uniform draws with replacement from the task's samples.
    #[default]
    WithReplacement,
    /// Reshuffled passes over the task's samples.
    Epochs,
}

impl Sampling {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "with_replacement" => Ok(Sampling::WithReplacement),
            "epochs" => Ok(Sampling::Epochs),
            other => Err(Error::Usage(format!("unknown sampling `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sampling::WithReplacement => "with_replacement",
            Sampling::Epochs => "epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub name: String,
    pub tasks: Vec<Vec<usize>>,
    pub iterations_per_task: usize,
    pub batch_size: usize,
    pub protocol: Protocol,
    pub sampling: Sampling,
}

impl Benchmark {
    /// Five tasks of two digits each, 2000 iterations of 128 per task.
    pub fn split_mnist() -> Self {
        Benchmark {
            name: "split_mnist".into(),
            tasks: (0..5).map(|t| vec![2 * t, 2 * t + 1]).collect(),
            iterations_per_task: 2000,
            batch_size: 128,
            protocol: Protocol::TaskBasedBatch,
            sampling: Sampling::WithReplacement,
        }
    }

    pub fn classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.tasks.iter().flatten().copied().collect();
        c.sort_unstable();
        c
    }

    pub fn num_classes(&self) -> usize {
        self.tasks.iter().map(Vec::len).sum()
    }

    pub fn task_of(&self, class: usize) -> Option<usize> {
        self.tasks.iter().position(|t| t.contains(&class))
    }

    pub fn events_per_task(&self) -> usize {
        self.iterations_per_task * self.batch_size
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations_per_task * self.tasks.len()
    }

    /// Disjoint non-empty tasks covering `0..num_classes` of the dataset.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.tasks.is_empty() || self.tasks.iter().any(Vec::is_empty) {
            return Err(Error::Usage("every task needs at least one class".into()));
        }
        if self.batch_size == 0 || self.iterations_per_task == 0 {
            return Err(Error::Usage("batch size and iterations must be positive".into()));
        }
        let classes = self.classes();
        if classes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Usage("task partition cells overlap".into()));
        }
        if classes != (0..data.num_classes()).collect::<Vec<_>>() {
            return Err(Error::Usage(format!(
                "tasks cover classes {classes:?}, dataset has {}",
                data.num_classes()
            )));
        }
        let counts = data.class_counts();
        if let Some(c) = classes.iter().find(|&&c| counts[c] == 0) {
            return Err(Error::protocol(format!("class {c} has no samples")));
        }
        Ok(())
    }

    /// Single task holding every class, with the total iteration budget.
    pub fn joint(&self) -> Benchmark {
        Benchmark {
            name: self.name.clone(),
            tasks: vec![self.classes()],
            iterations_per_task: self.total_iterations(),
            batch_size: self.batch_size,
            protocol: Protocol::TaskBasedBatch,
            sampling: self.sampling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamEvent<'a> {
    Sample {
        x: &'a [f64],
        y: usize,
        /// Row of the training set this sample came from.
        index: usize,
        task_id: Option<usize>,
    },
    TaskEnd {
        task_id: usize,
    },
}

/// Lazily generated class-incremental stream.
pub struct Stream<'a> {
    data: &'a Dataset,
    bench: Benchmark,
    seed: u64,
    task: usize,
    emitted: usize,
    pool: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
    done: bool,
}

pub fn make_stream<'a>(data: &'a Dataset, bench: &Benchmark, seed: u64) -> Result<Stream<'a>> {
    bench.validate(data)?;
    let mut s = Stream {
        data,
        bench: bench.clone(),
        seed,
        task: 0,
        emitted: 0,
        pool: Vec::new(),
        order: Vec::new(),
        cursor: 0,
        rng: Rng::new(seed, 0),
        done: false,
    };
    s.start_task(0);
    Ok(s)
}

impl<'a> Stream<'a> {
    fn start_task(&mut self, t: usize) {
        self.task = t;
        self.emitted = 0;
        self.pool = self.data.indices_of(&self.bench.tasks[t]);
        self.rng = Rng::named(self.seed, "stream", &[t as u64]);
        self.order.clear();
        self.cursor = 0;
    }

    fn draw(&mut self) -> usize {
        match self.bench.sampling {
            Sampling::WithReplacement => self.pool[self.rng.below(self.pool.len())],
            Sampling::Epochs => {
                if self.cursor == self.order.len() {
                    self.order = self.pool.clone();
                    self.rng.shuffle(&mut self.order);
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            }
        }
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.bench
    }

    /// Sample events not yet emitted plus pending boundaries.
    pub fn remaining(&self) -> usize {
        if self.done {
            return 0;
        }
        let per_task = self.bench.events_per_task();
        let tasks_left = self.bench.tasks.len() - self.task;
        let boundaries = if self.bench.protocol.is_task_based() { tasks_left } else { 0 };
        per_task * tasks_left - self.emitted + boundaries
    }
}

impl<'a> Iterator for Stream<'a> {
    type Item = StreamEvent<'a>;

    fn next(&mut self) -> Option<StreamEvent<'a>> {
        loop {
            if self.done {
                return None;
            }
            if self.emitted < self.bench.events_per_task() {
                self.emitted += 1;
                let index = self.draw();
                let task_id = self.bench.protocol.is_task_based().then_some(self.task);
                return Some(StreamEvent::Sample {
                    x: self.data.input(index),
                    y: self.data.label(index),
                    index,
                    task_id,
                });
            }
            let finished = self.task;
            if finished + 1 < self.bench.tasks.len() {
                self.start_task(finished + 1);
            } else {
                self.done = true;
            }
            if self.bench.protocol.is_task_based() {
                return Some(StreamEvent::TaskEnd { task_id: finished });
            }
        }
    }
}
