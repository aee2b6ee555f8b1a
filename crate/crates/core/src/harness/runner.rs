use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::baselines::{run_stream, DgrLearner, GcLearner, GeneratedLearner, Learner, SldaLearner, SoftmaxLearner};
use crate::error::{Error, Result};
use crate::genclass::save_classifier;
use crate::numerics::Rng;
use crate::stream::{
    aggregate_runs, evaluate_on, evaluation_indices, load_mnist_dir, locate_mnist, make_block_patterns, make_stream,
    CompatibilityMatrix, Dataset, Method, Split,
};

use super::config::ExperimentConfig;
use super::result::{RunResult, SeedResult};

/// Train and test sets for the configured benchmark.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match cfg.benchmark.as_str() {
        "split_mnist" => load_mnist_dir(&locate_mnist()?),
        "split_patterns" => {
            let mut rng = Rng::named(0, "patterns", &[]);
            let train = make_block_patterns(10, 10, 500, Split::Train, &mut rng)?;
            let test = make_block_patterns(10, 10, 200, Split::Test, &mut rng)?;
            Ok((train, test))
        }
        other => Err(Error::Usage(format!("unknown benchmark `{other}`"))),
    }
}

enum Trained {
    Gc(GcLearner),
    Other(Box<dyn Learner>),
}

impl Trained {
    fn get(&self) -> &dyn Learner {
        match self {
            Trained::Gc(l) => l,
            Trained::Other(l) => l.as_ref(),
        }
    }

    fn get_mut(&mut self) -> &mut dyn Learner {
        match self {
            Trained::Gc(l) => l,
            Trained::Other(l) => l.as_mut(),
        }
    }
}

fn build(cfg: &ExperimentConfig, seed: u64, train: &Dataset) -> Result<Trained> {
    let bench = cfg.bench()?;
    let dim = train.dim();
    let classes = bench.num_classes();
    let params = cfg.baseline_params();
    Ok(match cfg.method {
        Method::GenerativeClassifier => Trained::Gc(GcLearner::new(cfg.gc_config(dim, classes, seed), cfg.samples)?),
        Method::GenerativeDiscriminative => Trained::Other(Box::new(GeneratedLearner::new(
            cfg.gc_config(dim, classes, seed),
            params,
            bench.total_iterations(),
            bench.batch_size,
        )?)),
        Method::Slda => Trained::Other(Box::new(SldaLearner::new(
            dim,
            cfg.slda_eps,
            cfg.slda_bias,
            bench.events_per_task(),
        )?)),
        Method::Dgr => Trained::Other(Box::new(DgrLearner::new(&params, &bench, dim, seed)?)),
        Method::Joint => Trained::Other(Box::new(SoftmaxLearner::new(Method::Joint, &params, &bench.joint(), dim, seed)?)),
        m => Trained::Other(Box::new(SoftmaxLearner::new(m, &params, &bench, dim, seed)?)),
    })
}

/// One training run and its evaluation. `model_dir` receives the per-class
/// VAEs when the method has them.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, train: &Dataset, test: &Dataset, model_dir: Option<&Path>) -> Result<SeedResult> {
    let start = Instant::now();
    let bench = cfg.bench()?;
    let stream_bench = if cfg.method == Method::Joint { bench.joint() } else { bench.clone() };
    let mut learner = build(cfg, seed, train)?;
    let indices = evaluation_indices(test, cfg.eval_subsample, &mut Rng::named(seed, "eval-subsample", &[]))?;
    let mut trace = Vec::new();
    let stream = make_stream(train, &stream_bench, seed)?;
    run_stream(learner.get_mut(), stream, train, |task, l| {
        if cfg.trace {
            l.prepare()?;
            let l: &dyn Learner = l;
            let ev = evaluate_on(|x, i| l.predict(x, i), test, &indices)?;
            info!("{} seed {seed} task {task}: {:.4}", cfg.method.as_str(), ev.accuracy);
            trace.push(ev.accuracy);
        }
        Ok(())
    })?;
    let ev = evaluate_on(|x, i| learner.get().predict(x, i), test, &indices)?;
    let last = bench.tasks.last().expect("validated benchmark").clone();
    let mut sample_sweep = Vec::new();
    if let Trained::Gc(gc) = &mut learner {
        for &s in &cfg.sample_sweep {
            gc.set_samples(s)?;
            let e = if s == cfg.samples {
                ev.accuracy
            } else {
                evaluate_on(|x, i| gc.predict(x, i), test, &indices)?.accuracy
            };
            sample_sweep.push((s, e));
        }
        if let Some(dir) = model_dir {
            save_classifier(&gc.gc, &dir.join(format!("seed-{seed}")))?;
        }
    }
    let result = SeedResult {
        seed,
        accuracy: ev.accuracy,
        last_task_fraction: ev.fraction_predicted_in(&last),
        wallclock_s: start.elapsed().as_secs_f64(),
        trace,
        sample_sweep,
        warnings: learner.get().warnings(),
    };
    info!("{} seed {seed}: accuracy {:.4}", cfg.method.as_str(), result.accuracy);
    Ok(result)
}

/// All seeds of `cfg` on the given data, in parallel; results sorted by seed.
pub fn run_with_data(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset, model_dir: Option<&Path>) -> Result<RunResult> {
    cfg.validate()?;
    let bench = cfg.bench()?;
    CompatibilityMatrix::default().check(cfg.method, bench.protocol)?;
    bench.validate(train)?;
    let mut seeds: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, train, test, model_dir))
        .collect::<Result<_>>()?;
    seeds.sort_by_key(|s| s.seed);
    let acc: Vec<f64> = seeds.iter().map(|s| s.accuracy).collect();
    let (mean, sem) = aggregate_runs(&acc)?;
    Ok(RunResult {
        config_hash: cfg.hash(),
        method: cfg.method,
        benchmark: cfg.benchmark.clone(),
        seeds,
        mean,
        sem,
    })
}

/// Checks compatibility, loads the data and runs every seed.
pub fn run(cfg: &ExperimentConfig, model_dir: Option<&Path>) -> Result<RunResult> {
    CompatibilityMatrix::default().check(cfg.method, cfg.protocol)?;
    let (train, test) = load_data(cfg)?;
    run_with_data(cfg, &train, &test, model_dir)
}
