use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stream::{Dataset, Method};

use super::config::ExperimentConfig;
use super::runner::run_with_data;

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub accuracy: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    /// Index of the best point; ties go to the lower index.
    pub best: usize,
    pub best_config: ExperimentConfig,
}

fn decades(zero: bool, from: i32, to: i32) -> Vec<String> {
    let mut v: Vec<String> = if zero { vec!["0".into()] } else { Vec::new() };
    v.extend((from..=to).map(|k| format!("1e{k}").parse::<f64>().expect("literal").to_string()));
    v
}

/// The hyperparameter ranges searched for each method.
pub fn default_grid(method: Method) -> Result<Vec<GridAxis>> {
    let axis = |key: &str, values| GridAxis { key: key.into(), values };
    match method {
        Method::Ewc => Ok(vec![axis("ewc_lambda", decades(true, -1, 7))]),
        Method::Si => Ok(vec![axis("si_lambda", decades(true, -3, 9))]),
        Method::Ar1 => Ok(vec![
            axis("ar1_lambda", decades(true, -3, 9)),
            axis("omega_max", decades(false, -4, 2)),
        ]),
        other => Err(Error::Usage(format!("{} has no hyperparameter grid", other.as_str()))),
    }
}

/// `key=v1,v2;key2=v3` into axes.
pub fn parse_grid(spec: &str) -> Result<Vec<GridAxis>> {
    let axes: Vec<GridAxis> = spec
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("grid axis `{part}` needs key=values")))?;
            let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if values.is_empty() {
                return Err(Error::Usage(format!("grid axis `{}` has no values", k.trim())));
            }
            Ok(GridAxis {
                key: k.trim().into(),
                values,
            })
        })
        .collect::<Result<_>>()?;
    if axes.is_empty() {
        return Err(Error::Usage("empty grid".into()));
    }
    Ok(axes)
}

/// Cartesian product, first axis varying slowest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

/// Scores every grid point with `score` and keeps the best.
pub fn sweep_with<F>(base: &ExperimentConfig, axes: &[GridAxis], score: F) -> Result<SweepOutcome>
where
    F: Fn(&ExperimentConfig) -> Result<f64> + Sync,
{
    let points = grid_points(axes);
    if axes.is_empty() || points.is_empty() {
        return Err(Error::Usage("empty grid".into()));
    }
    let configs: Vec<ExperimentConfig> = points
        .iter()
        .map(|assign| {
            let mut c = base.clone();
            c.seeds = vec![base.seeds[0]];
            for (k, v) in assign {
                c.set(k, v)?;
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = configs.par_iter().map(&score).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let points = points
        .into_iter()
        .zip(&configs)
        .zip(&scores)
        .enumerate()
        .map(|(index, ((assignments, c), &accuracy))| SweepPoint {
            index,
            assignments,
            accuracy,
            config_hash: c.hash(),
        })
        .collect();
    Ok(SweepOutcome {
        points,
        best,
        best_config: configs[best].clone(),
    })
}

/// Runs each grid point with the first seed only.
pub fn sweep(base: &ExperimentConfig, axes: &[GridAxis], train: &Dataset, test: &Dataset) -> Result<SweepOutcome> {
    sweep_with(base, axes, |c| Ok(run_with_data(c, train, test, None)?.mean))
}

impl SweepOutcome {
    /// CSV: index, one column per axis, accuracy, config hash, best flag.
    pub fn table(&self) -> String {
        let keys: Vec<&str> = self.points[0].assignments.iter().map(|(k, _)| k.as_str()).collect();
        let mut out = format!("index,{},accuracy,config_hash,best\n", keys.join(","));
        for p in &self.points {
            let vals: Vec<&str> = p.assignments.iter().map(|(_, v)| v.as_str()).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.index,
                vals.join(","),
                p.accuracy,
                p.config_hash,
                p.index == self.best
            ));
        }
        out
    }
}
