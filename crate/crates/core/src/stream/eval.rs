use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::benchmark::Protocol;
use super::dataset::Dataset;

/// Predictions over a test set or a subsample of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `(test index, predicted class)` in ascending index order.
    pub predictions: Vec<(usize, usize)>,
}

impl Evaluation {
    /// Fraction of predictions that fall in `classes`.
    pub fn fraction_predicted_in(&self, classes: &[usize]) -> f64 {
        let hits = self.predictions.iter().filter(|(_, p)| classes.contains(p)).count();
        hits as f64 / self.predictions.len() as f64
    }
}

/// Evaluation indices: everything, or a stratified draw without replacement.
pub fn evaluation_indices(test: &Dataset, subsample: Option<usize>, rng: &mut Rng) -> Result<Vec<usize>> {
    match subsample {
        Some(n) if n < test.len() => test.stratified_indices(n, rng),
        _ => Ok((0..test.len()).collect()),
    }
}

/// Runs `predict(x, test_index)` over the chosen indices in parallel; results
/// do not depend on scheduling.
pub fn evaluate_accuracy<F>(predict: F, test: &Dataset, subsample: Option<usize>, rng: &mut Rng) -> Result<Evaluation>
where
    F: Fn(&[f64], usize) -> Result<usize> + Sync,
{
    if test.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    let indices = evaluation_indices(test, subsample, rng)?;
    evaluate_on(predict, test, &indices)
}

pub fn evaluate_on<F>(predict: F, test: &Dataset, indices: &[usize]) -> Result<Evaluation>
where
    F: Fn(&[f64], usize) -> Result<usize> + Sync,
{
    if indices.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    let predictions: Vec<(usize, usize)> = indices
        .par_iter()
        .map(|&i| predict(test.input(i), i).map(|p| (i, p)))
        .collect::<Result<_>>()?;
    let correct = predictions.iter().filter(|(i, p)| test.label(*i) == *p).count();
    Ok(Evaluation {
        accuracy: correct as f64 / predictions.len() as f64,
        predictions,
    })
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::domain("no runs to aggregate"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt() / n.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    None,
    Joint,
    LabelsTrick,
    Cwr,
    CwrPlus,
    Ar1,
    Ewc,
    Si,
    Dgr,
    Slda,
    GenerativeClassifier,
    GenerativeDiscriminative,
}

impl Method {
    /// Display order used in comparison tables.
    pub const ALL: [Method; 12] = [
        Method::None,
        Method::Joint,
        Method::Ewc,
        Method::Si,
        Method::LabelsTrick,
        Method::Cwr,
        Method::CwrPlus,
        Method::Ar1,
        Method::Slda,
        Method::Dgr,
        Method::GenerativeDiscriminative,
        Method::GenerativeClassifier,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method `{s}`")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Joint => "joint",
            Method::LabelsTrick => "labels_trick",
            Method::Cwr => "cwr",
            Method::CwrPlus => "cwr_plus",
            Method::Ar1 => "ar1",
            Method::Ewc => "ewc",
            Method::Si => "si",
            Method::Dgr => "dgr",
            Method::Slda => "slda",
            Method::GenerativeClassifier => "generative_classifier",
            Method::GenerativeDiscriminative => "generative_discriminative",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::None => "None",
            Method::Joint => "Joint",
            Method::LabelsTrick => "Labels trick",
            Method::Cwr => "CWR",
            Method::CwrPlus => "CWR+",
            Method::Ar1 => "AR1",
            Method::Ewc => "EWC",
            Method::Si => "SI",
            Method::Dgr => "DGR",
            Method::Slda => "SLDA",
            Method::GenerativeClassifier => "Generative classifier",
            Method::GenerativeDiscriminative => "Classifier on generated samples",
        }
    }

    pub fn rank(self) -> usize {
        Method::ALL.iter().position(|&m| m == self).expect("listed")
    }
}

/// Which protocols each method may run under.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityMatrix {
    allowed: BTreeMap<Method, Vec<Protocol>>,
}

impl Default for CompatibilityMatrix {
    fn default() -> Self {
        use Protocol::*;
        let task_based = vec![TaskBasedBatch, TaskBasedStreaming];
        let all = Protocol::ALL.to_vec();
        let allowed = [
            (Method::None, all.clone()),
            (Method::Joint, vec![TaskBasedBatch]),
            (Method::Ewc, vec![TaskBasedBatch]),
            (Method::Si, task_based.clone()),
            (Method::LabelsTrick, task_based.clone()),
            (Method::Cwr, task_based.clone()),
            (Method::CwrPlus, task_based.clone()),
            (Method::Ar1, task_based.clone()),
            (Method::Dgr, task_based),
            (Method::Slda, all.clone()),
            (Method::GenerativeClassifier, all.clone()),
            (Method::GenerativeDiscriminative, all),
        ]
        .into_iter()
        .collect();
        CompatibilityMatrix { allowed }
    }
}

impl CompatibilityMatrix {
    pub fn supports(&self, method: Method, protocol: Protocol) -> bool {
        self.allowed.get(&method).is_some_and(|p| p.contains(&protocol))
    }

    pub fn check(&self, method: Method, protocol: Protocol) -> Result<()> {
        if self.supports(method, protocol) {
            Ok(())
        } else {
            Err(Error::protocol(format!(
                "{} does not support the {} protocol",
                method.as_str(),
                protocol.as_str()
            )))
        }
    }
}
