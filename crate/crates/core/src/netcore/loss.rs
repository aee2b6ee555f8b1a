use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::numerics::Mat;

/// Output units that take part in the softmax normalisation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveSet {
    classes: BTreeSet<usize>,
}

impl ActiveSet {
    pub fn new() -> Self {
        ActiveSet::default()
    }

    pub fn all(n: usize) -> Self {
        (0..n).collect()
    }

    pub fn insert(&mut self, class: usize) -> bool {
        self.classes.insert(class)
    }

    pub fn extend<I: IntoIterator<Item = usize>>(&mut self, classes: I) {
        self.classes.extend(classes);
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.contains(&class)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn is_subset(&self, other: &ActiveSet) -> bool {
        self.classes.is_subset(&other.classes)
    }

    /// Highest-scoring active class; ties go to the lowest id.
    pub fn argmax(&self, scores: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for c in self.iter() {
            let s = scores[c];
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c)
    }
}

impl FromIterator<usize> for ActiveSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        ActiveSet {
            classes: iter.into_iter().collect(),
        }
    }
}

/// Softmax over the active outputs; inactive entries are 0.
pub fn masked_softmax(logits: &[f64], active: &ActiveSet) -> Result<Vec<f64>> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &active.to_vec(), &mut out)?;
    Ok(out)
}

fn softmax_into(logits: &[f64], active: &[usize], out: &mut [f64]) -> Result<()> {
    if active.is_empty() {
        return Err(Error::protocol("softmax over an empty active set"));
    }
    if let Some(&c) = active.iter().find(|&&c| c >= logits.len()) {
        return Err(Error::shape(format!(
            "active class {c} outside {} outputs",
            logits.len()
        )));
    }
    let max = active.iter().map(|&c| logits[c]).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    out.fill(0.0);
    for &c in active {
        let e = (logits[c] - max).exp();
        out[c] = e;
        sum += e;
    }
    for &c in active {
        out[c] /= sum;
    }
    Ok(())
}

/// `-log softmax_active(logits)[y]` and its gradient w.r.t. the logits.
pub fn masked_cross_entropy(logits: &[f64], y: usize, active: &ActiveSet) -> Result<(f64, Vec<f64>)> {
    if !active.contains(y) {
        return Err(Error::protocol(format!("label {y} is not an active class")));
    }
    let mut p = masked_softmax(logits, active)?;
    let loss = -p[y].ln();
    p[y] -= 1.0;
    Ok((loss, p))
}

/// Mean masked cross-entropy over a batch, with the gradient scaled by
/// `weight / batch` so that it can be fed straight into a backward pass.
/// The returned loss is the unweighted batch mean.
pub fn batch_cross_entropy(
    logits: &Mat,
    labels: &[usize],
    active: &ActiveSet,
    weight: f64,
) -> Result<(f64, Mat)> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("one label per logit row is required"));
    }
    let act = active.to_vec();
    let n = logits.rows();
    let mut grad = Mat::zeros(n, logits.cols());
    let mut total = 0.0;
    let scale = weight / n as f64;
    for (r, &y) in labels.iter().enumerate() {
        if !active.contains(y) {
            return Err(Error::protocol(format!("label {y} is not an active class")));
        }
        let g = grad.row_mut(r);
        softmax_into(logits.row(r), &act, g)?;
        total -= g[y].ln();
        g[y] -= 1.0;
        for &c in &act {
            g[c] *= scale;
        }
    }
    Ok((total / n as f64, grad))
}
