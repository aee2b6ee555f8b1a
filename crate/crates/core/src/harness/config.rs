use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{BaselineParams, OmegaCap};
use crate::error::{Error, Result};
use crate::genclass::{GcConfig, PriorMode, ReconScale};
use crate::slda::BiasConvention;
use crate::stream::{Benchmark, Method, Protocol, Sampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Paper,
    /// 200 iterations per task, S = 100, 2000 test points.
    Ci,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "ci" => Ok(Profile::Ci),
            other => Err(Error::Usage(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub benchmark: String,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,

    pub protocol: Protocol,
    pub sampling: Sampling,
    pub iterations_per_task: usize,
    pub batch_size: usize,
    pub eval_subsample: Option<usize>,

    pub samples: usize,
    /// Extra importance-sample counts evaluated on the same trained models.
    pub sample_sweep: Vec<usize>,
    /// Evaluate after every task as well as at the end.
    pub trace: bool,
    pub lr: f64,
    pub gc_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub sub_batch: usize,
    pub prior_mode: PriorMode,
    pub recon_scale: ReconScale,
    pub hidden: Vec<usize>,
    pub ewc_lambda: f64,
    pub fisher_n: Option<usize>,
    pub si_lambda: f64,
    pub si_xi: f64,
    pub ar1_lambda: f64,
    pub omega_max: f64,
    pub omega_cap: OmegaCap,
    pub dgr_hidden: Vec<usize>,
    pub dgr_latent: usize,
    pub slda_eps: f64,
    pub slda_bias: BiasConvention,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let b = BaselineParams::default();
        let gc = GcConfig::mnist(0);
        ExperimentConfig {
            method: Method::GenerativeClassifier,
            benchmark: "split_mnist".into(),
            seeds: (0..10).collect(),
            out: None,
            protocol: Protocol::TaskBasedBatch,
            sampling: Sampling::WithReplacement,
            iterations_per_task: 2000,
            batch_size: 128,
            eval_subsample: None,
            samples: 1000,
            sample_sweep: Vec::new(),
            trace: false,
            lr: gc.lr,
            gc_hidden: gc.hidden,
            latent_dim: gc.latent_dim,
            sub_batch: gc.sub_batch,
            prior_mode: gc.prior_mode,
            recon_scale: gc.recon_scale,
            hidden: b.hidden,
            ewc_lambda: b.ewc_lambda,
            fisher_n: b.fisher_n,
            si_lambda: b.si_lambda,
            si_xi: b.si_xi,
            ar1_lambda: b.ar1_lambda,
            omega_max: b.ar1_omega_max,
            omega_cap: b.omega_cap,
            dgr_hidden: b.dgr_hidden,
            dgr_latent: b.dgr_latent,
            slda_eps: 1e-4,
            slda_bias: BiasConvention::Standard,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Usage(format!("`{key}` expects a number, got `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), ToString::to_string)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Usage(format!("`{key}` expects true or false, got `{v}`"))),
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut c = ExperimentConfig::default();
        c.apply_profile(profile);
        c
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Paper => {
                let d = ExperimentConfig::default();
                self.iterations_per_task = d.iterations_per_task;
                self.samples = d.samples;
                self.eval_subsample = d.eval_subsample;
            }
            Profile::Ci => {
                self.iterations_per_task = 200;
                self.samples = 100;
                self.eval_subsample = Some(2000);
            }
        }
    }

    /// Section-qualified keys in canonical order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![
            ("method".into(), self.method.as_str().into()),
            ("benchmark".into(), self.benchmark.clone()),
            ("seeds".into(), join(&self.seeds)),
            ("benchmark.protocol".into(), self.protocol.as_str().into()),
            ("benchmark.sampling".into(), self.sampling.as_str().into()),
            ("benchmark.iterations_per_task".into(), self.iterations_per_task.to_string()),
            ("benchmark.batch_size".into(), self.batch_size.to_string()),
            ("benchmark.eval_subsample".into(), opt(&self.eval_subsample)),
            ("method.samples".into(), self.samples.to_string()),
            ("method.sample_sweep".into(), join(&self.sample_sweep)),
            ("method.trace".into(), self.trace.to_string()),
            ("method.lr".into(), self.lr.to_string()),
            ("method.gc_hidden".into(), join(&self.gc_hidden)),
            ("method.latent_dim".into(), self.latent_dim.to_string()),
            ("method.sub_batch".into(), self.sub_batch.to_string()),
            ("method.prior_mode".into(), self.prior_mode.as_str().into()),
            ("method.recon_scale".into(), self.recon_scale.as_str().into()),
            ("method.hidden".into(), join(&self.hidden)),
            ("method.ewc_lambda".into(), self.ewc_lambda.to_string()),
            ("method.fisher_n".into(), opt(&self.fisher_n)),
            ("method.si_lambda".into(), self.si_lambda.to_string()),
            ("method.si_xi".into(), self.si_xi.to_string()),
            ("method.ar1_lambda".into(), self.ar1_lambda.to_string()),
            ("method.omega_max".into(), self.omega_max.to_string()),
            ("method.omega_cap".into(), self.omega_cap.as_str().into()),
            ("method.dgr_hidden".into(), join(&self.dgr_hidden)),
            ("method.dgr_latent".into(), self.dgr_latent.to_string()),
            ("method.slda_eps".into(), self.slda_eps.to_string()),
            ("method.slda_bias".into(), self.slda_bias.as_str().into()),
        ];
        e.sort();
        e
    }

    /// Sets one key. Unqualified names are looked up in every section.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bare = key.rsplit('.').next().unwrap_or(key);
        let top_level = !key.contains('.');
        match bare {
            "method" if top_level => self.method = Method::parse(v)?,
            "benchmark" if top_level => {
                if !BENCHMARKS.contains(&v) {
                    return Err(Error::Usage(format!("unknown benchmark `{v}`")));
                }
                self.benchmark = v.into();
            }
            "seeds" => {
                self.seeds = parse_list(key, v)?;
                if self.seeds.is_empty() {
                    return Err(Error::Usage("`seeds` must list at least one seed".into()));
                }
            }
            "out" => self.out = Some(PathBuf::from(v)),
            "protocol" => self.protocol = Protocol::parse(v)?,
            "sampling" => self.sampling = Sampling::parse(v)?,
            "iterations_per_task" => self.iterations_per_task = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "eval_subsample" => self.eval_subsample = parse_opt(key, v)?,
            "samples" => self.samples = parse_num(key, v)?,
            "sample_sweep" => self.sample_sweep = parse_list(key, v)?,
            "trace" => self.trace = parse_bool(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "gc_hidden" => self.gc_hidden = parse_list(key, v)?,
            "latent_dim" => self.latent_dim = parse_num(key, v)?,
            "sub_batch" => self.sub_batch = parse_num(key, v)?,
            "prior_mode" => self.prior_mode = PriorMode::parse(v)?,
            "recon_scale" => self.recon_scale = ReconScale::parse(v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "ewc_lambda" => self.ewc_lambda = parse_num(key, v)?,
            "fisher_n" => self.fisher_n = parse_opt(key, v)?,
            "si_lambda" => self.si_lambda = parse_num(key, v)?,
            "si_xi" => self.si_xi = parse_num(key, v)?,
            "ar1_lambda" => self.ar1_lambda = parse_num(key, v)?,
            "omega_max" => self.omega_max = parse_num(key, v)?,
            "omega_cap" => self.omega_cap = OmegaCap::parse(v)?,
            "dgr_hidden" => self.dgr_hidden = parse_list(key, v)?,
            "dgr_latent" => self.dgr_latent = parse_num(key, v)?,
            "slda_eps" => self.slda_eps = parse_num(key, v)?,
            "slda_bias" => self.slda_bias = BiasConvention::parse(v)?,
            _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines under optional `[section]` headers; `#`
    /// starts a comment. A `profile` key is applied before everything else.
    pub fn parse(text: &str, base: Profile) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["method", "benchmark", ""].contains(&section.as_str()) {
                    return Err(Error::Usage(format!("line {}: unknown section [{section}]", n + 1)));
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            pairs.push((key, v.trim().to_string()));
        }
        let mut profile = base;
        if let Some((_, v)) = pairs.iter().find(|(k, _)| k == "profile") {
            profile = Profile::parse(v)?;
        }
        let mut cfg = ExperimentConfig::for_profile(profile);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: Profile) -> Result<Self> {
        ExperimentConfig::parse(&fs::read_to_string(path)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Usage("at least one seed is required".into()));
        }
        if self.iterations_per_task == 0 || self.batch_size == 0 {
            return Err(Error::Usage("iterations and batch size must be positive".into()));
        }
        if self.samples == 0 || self.sample_sweep.contains(&0) {
            return Err(Error::Usage("importance sample counts must be positive".into()));
        }
        if self.sub_batch == 0 || self.latent_dim == 0 {
            return Err(Error::Usage("sub_batch and latent_dim must be positive".into()));
        }
        Ok(())
    }

    /// `key = value` lines grouped by section; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut top = String::new();
        let mut bench = String::from("[benchmark]\n");
        let mut method = String::from("[method]\n");
        for (k, v) in self.entries() {
            match k.split_once('.') {
                Some(("benchmark", key)) => bench.push_str(&format!("{key} = {v}\n")),
                Some((_, key)) => method.push_str(&format!("{key} = {v}\n")),
                None => top.push_str(&format!("{k} = {v}\n")),
            }
        }
        if let Some(out) = &self.out {
            top.push_str(&format!("out = {}\n", out.display()));
        }
        format!("{top}\n{bench}\n{method}")
    }

    /// FNV-1a over the canonical entries; the output directory is excluded.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in self.entries() {
            for b in k.bytes().chain([b'=']).chain(v.bytes()).chain([b'\n']) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    pub fn bench(&self) -> Result<Benchmark> {
        let (tasks, name) = match self.benchmark.as_str() {
            "split_mnist" | "split_patterns" => ((0..5).map(|t| vec![2 * t, 2 * t + 1]).collect(), self.benchmark.clone()),
            other => return Err(Error::Usage(format!("unknown benchmark `{other}`"))),
        };
        Ok(Benchmark {
            name,
            tasks,
            iterations_per_task: self.iterations_per_task,
            batch_size: self.batch_size,
            protocol: self.protocol,
            sampling: self.sampling,
        })
    }

    pub fn gc_config(&self, input_dim: usize, num_classes: usize, seed: u64) -> GcConfig {
        GcConfig {
            input_dim,
            hidden: self.gc_hidden.clone(),
            latent_dim: self.latent_dim,
            lr: self.lr,
            sub_batch: self.sub_batch,
            recon_scale: self.recon_scale,
            prior_mode: self.prior_mode,
            num_classes,
            seed,
        }
    }

    pub fn baseline_params(&self) -> BaselineParams {
        BaselineParams {
            hidden: self.hidden.clone(),
            lr: self.lr,
            ewc_lambda: self.ewc_lambda,
            fisher_n: self.fisher_n,
            si_lambda: self.si_lambda,
            si_xi: self.si_xi,
            ar1_lambda: self.ar1_lambda,
            ar1_omega_max: self.omega_max,
            omega_cap: self.omega_cap,
            dgr_hidden: self.dgr_hidden.clone(),
            dgr_latent: self.dgr_latent,
        }
    }
}

pub const BENCHMARKS: [&str; 2] = ["split_mnist", "split_patterns"];
