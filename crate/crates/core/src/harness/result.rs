use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stream::{aggregate_runs, Method};

pub const CSV_HEADER: &str = "method,benchmark,seed,accuracy,wallclock_s,config_hash";
pub const SAMPLES_CSV_HEADER: &str = "method,benchmark,seed,samples,accuracy,config_hash";

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    /// Share of test predictions that fall in the last task's classes.
    pub last_task_fraction: f64,
    pub wallclock_s: f64,
    /// Accuracy after each task, when tracing is on.
    pub trace: Vec<f64>,
    /// `(S, accuracy)` for every importance-sample count evaluated.
    pub sample_sweep: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config_hash: String,
    pub method: Method,
    pub benchmark: String,
    /// Sorted by seed.
    pub seeds: Vec<SeedResult>,
    pub mean: f64,
    pub sem: f64,
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Manifest(format!("`{key}` is not a number: `{v}`")))
}

impl RunResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.accuracy).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.seeds
            .iter()
            .flat_map(|s| s.warnings.iter().map(move |w| format!("seed {}: {w}", s.seed)))
            .collect()
    }

    /// Mean and SEM over seeds for every importance-sample count, ascending.
    pub fn sample_curve(&self) -> Result<Vec<(usize, f64, f64)>> {
        let mut by_s: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for s in &self.seeds {
            for &(n, a) in &s.sample_sweep {
                by_s.entry(n).or_default().push(a);
            }
        }
        by_s.into_iter()
            .map(|(n, a)| aggregate_runs(&a).map(|(m, e)| (n, m, e)))
            .collect()
    }

    /// One row per seed.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for s in &self.seeds {
            out.push_str(&format!(
                "{},{},{},{},{:.3},{}\n",
                self.method.as_str(),
                self.benchmark,
                s.seed,
                s.accuracy,
                s.wallclock_s,
                self.config_hash
            ));
        }
        out
    }

    pub fn samples_csv(&self) -> String {
        let mut out = format!("{SAMPLES_CSV_HEADER}\n");
        for s in &self.seeds {
            for &(n, a) in &s.sample_sweep {
                out.push_str(&format!(
                    "{},{},{},{n},{a},{}\n",
                    self.method.as_str(),
                    self.benchmark,
                    s.seed,
                    self.config_hash
                ));
            }
        }
        out
    }

    /// Structured `key = value` record.
    pub fn to_record(&self) -> String {
        let mut out = String::from("format = genclass-result-1\n");
        out.push_str(&format!("config_hash = {}\n", self.config_hash));
        out.push_str(&format!("method = {}\n", self.method.as_str()));
        out.push_str(&format!("benchmark = {}\n", self.benchmark));
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.seed.to_string()).collect();
        out.push_str(&format!("seeds = {}\n", seeds.join(",")));
        out.push_str(&format!("mean = {}\n", self.mean));
        out.push_str(&format!("sem = {}\n", self.sem));
        for s in &self.seeds {
            let k = s.seed;
            out.push_str(&format!("accuracy.{k} = {}\n", s.accuracy));
            out.push_str(&format!("last_task_fraction.{k} = {}\n", s.last_task_fraction));
            out.push_str(&format!("wallclock_s.{k} = {}\n", s.wallclock_s));
            out.push_str(&format!("trace.{k} = {}\n", floats(&s.trace)));
            let sweep: Vec<String> = s.sample_sweep.iter().map(|(n, a)| format!("{n}:{a}")).collect();
            out.push_str(&format!("sample_sweep.{k} = {}\n", sweep.join(",")));
            for w in &s.warnings {
                out.push_str(&format!("warning.{k} = {w}\n"));
            }
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut warnings: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .or_else(|| line.split_once('=').map(|(k, v)| (k.trim_end(), v.trim_start())))
                .ok_or_else(|| Error::Manifest(format!("bad result line `{line}`")))?;
            if let Some(seed) = k.strip_prefix("warning.") {
                let seed = seed.parse().map_err(|_| Error::Manifest(format!("bad warning key `{k}`")))?;
                warnings.entry(seed).or_default().push(v.to_string());
            } else {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Manifest(format!("result record lacks `{k}`")));
        if get("format")? != "genclass-result-1" {
            return Err(Error::Manifest("unsupported result format".into()));
        }
        let mut seeds = Vec::new();
        for s in get("seeds")?.split(',') {
            let seed: u64 = s.trim().parse().map_err(|_| Error::Manifest(format!("bad seed `{s}`")))?;
            let key = |name: &str| format!("{name}.{seed}");
            let trace = get(&key("trace"))?;
            let sweep = get(&key("sample_sweep"))?;
            seeds.push(SeedResult {
                seed,
                accuracy: parse_f64("accuracy", get(&key("accuracy"))?)?,
                last_task_fraction: parse_f64("last_task_fraction", get(&key("last_task_fraction"))?)?,
                wallclock_s: parse_f64("wallclock_s", get(&key("wallclock_s"))?)?,
                trace: if trace.is_empty() {
                    Vec::new()
                } else {
                    trace.split(',').map(|v| parse_f64("trace", v)).collect::<Result<_>>()?
                },
                sample_sweep: if sweep.is_empty() {
                    Vec::new()
                } else {
                    sweep
                        .split(',')
                        .map(|p| {
                            let (n, a) = p
                                .split_once(':')
                                .ok_or_else(|| Error::Manifest(format!("bad sample sweep entry `{p}`")))?;
                            let n = n.parse().map_err(|_| Error::Manifest(format!("bad sample count `{n}`")))?;
                            Ok((n, parse_f64("sample_sweep", a)?))
                        })
                        .collect::<Result<_>>()?
                },
                warnings: warnings.remove(&seed).unwrap_or_default(),
            });
        }
        Ok(RunResult {
            config_hash: get("config_hash")?.clone(),
            method: Method::parse(get("method")?).map_err(|e| Error::Manifest(e.to_string()))?,
            benchmark: get("benchmark")?.clone(),
            mean: parse_f64("mean", get("mean")?)?,
            sem: parse_f64("sem", get("sem")?)?,
            seeds,
        })
    }

    /// Writes `result.txt`, `results.csv` and, with a sample sweep, `samples.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("result.txt"), self.to_record())?;
        fs::write(dir.join("results.csv"), self.to_csv())?;
        if self.seeds.iter().any(|s| !s.sample_sweep.is_empty()) {
            fs::write(dir.join("samples.csv"), self.samples_csv())?;
        }
        Ok(())
    }

    /// Reads `result.txt` from a result directory (or the file itself).
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join("result.txt") } else { path.to_path_buf() };
        let text = fs::read_to_string(&file)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", file.display())))?;
        RunResult::from_record(&text)
    }
}

/// The CSV with the wall-clock column blanked, for reproducibility checks.
pub fn mask_wallclock(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() == 6 && f[4] != "wallclock_s" {
                f[4] = "-";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
