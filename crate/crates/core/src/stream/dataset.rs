use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Labelled inputs stored as rows of one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Mat,
    labels: Vec<usize>,
    split: Split,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Mat, labels: Vec<usize>, split: Split, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::domain(format!("label {bad} outside 0..{num_classes}")));
        }
        if !inputs.is_finite() {
            return Err(Error::Numeric("dataset contains non-finite inputs".into()));
        }
        Ok(Dataset {
            inputs,
            labels,
            split,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &Mat {
        &self.inputs
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn indices_of(&self, classes: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Rows `indices` stacked into a matrix, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Mat {
        Mat::stack(self.dim(), indices.iter().map(|&i| self.input(i))).expect("rows share the dataset width")
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
            num_classes: self.num_classes,
        }
    }

    /// `n` indices drawn without replacement with per-class quotas
    /// proportional to class frequency (largest remainder), sorted.
    pub fn stratified_indices(&self, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if n > self.len() {
            return Err(Error::domain(format!("cannot draw {n} of {} items", self.len())));
        }
        let counts = self.class_counts();
        let total = self.len() as f64;
        let mut quotas: Vec<(usize, f64)> = counts
            .iter()
            .map(|&c| {
                let exact = n as f64 * c as f64 / total;
                (exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let mut assigned: usize = quotas.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
        // n ≤ len guarantees the remaining quota fits somewhere
        for &c in order.iter().cycle() {
            if assigned >= n {
                break;
            }
            if quotas[c].0 < counts[c] {
                quotas[c].0 += 1;
                assigned += 1;
            }
        }
        let mut out = Vec::with_capacity(n);
        for (c, q) in quotas.iter().enumerate() {
            let mut pool = self.indices_of(&[c]);
            rng.shuffle(&mut pool);
            out.extend_from_slice(&pool[..q.0]);
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Binary container: magic `GCDS`, `u32` version, `u64` rows, cols,
    /// classes, `u8` split; then `f64` inputs and `u32` labels, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(33 + self.inputs.as_slice().len() * 8 + self.len() * 4);
        out.extend_from_slice(b"GCDS");
        out.extend_from_slice(&1u32.to_le_bytes());
        for v in [self.len(), self.dim(), self.num_classes] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.push(match self.split {
            Split::Train => 0,
            Split::Test => 1,
        });
        for v in self.inputs.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(b"GCDS") {
            return Err(Error::format(0, "missing GCDS magic"));
        }
        let u32_at = |o: usize| {
            bytes
                .get(o..o + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::format(o, "truncated header"))
        };
        let u64_at = |o: usize| {
            bytes
                .get(o..o + 8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
                .ok_or_else(|| Error::format(o, "truncated header"))
        };
        if u32_at(4)? != 1 {
            return Err(Error::format(4, "unsupported dataset version"));
        }
        let (rows, cols, classes) = (u64_at(8)?, u64_at(16)?, u64_at(24)?);
        let split = match bytes.get(32) {
            Some(0) => Split::Train,
            Some(1) => Split::Test,
            _ => return Err(Error::format(32, "bad split tag")),
        };
        let body = 33;
        let need = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(rows * 4))
            .ok_or_else(|| Error::format(8, "dataset size overflows"))?;
        if bytes.len() != body + need {
            return Err(Error::format(body, format!("expected {need} payload bytes, found {}", bytes.len() - body)));
        }
        let data: Vec<f64> = bytes[body..body + rows * cols * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels = bytes[body + rows * cols * 8..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        Dataset::new(Mat::from_vec(rows, cols, data)?, labels, split, classes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::from_bytes(&fs::read(path)?)
    }
}

/// Class `c` is drawn from `N(m_c, I)` where `m_c` is `±mean_scale` on axis
/// `c mod d` (sign flips every `d` classes). Samples are clamped to
/// `[−B, B]`, `B = mean_scale + 5`, then mapped affinely onto `[0, 1]`.
pub fn make_synthetic_gaussian(
    d: usize,
    classes: usize,
    mean_scale: f64,
    n_per_class: usize,
    split: Split,
    rng: &mut Rng,
) -> Result<Dataset> {
    if d == 0 || classes == 0 {
        return Err(Error::domain("synthetic data needs d ≥ 1 and at least one class"));
    }
    let bound = mean_scale.abs() + 5.0;
    let mut data = Vec::with_capacity(classes * n_per_class * d);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for i in 0..classes * n_per_class {
        let c = i % classes;
        let sign = if (c / d) % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..d {
            let mean = if j == c % d { sign * mean_scale } else { 0.0 };
            let v = (mean + rng.standard_normal()).clamp(-bound, bound);
            data.push((v + bound) / (2.0 * bound));
        }
        labels.push(c);
    }
    Dataset::new(Mat::from_vec(labels.len(), d, data)?, labels, split, classes)
}

/// Class `c` of `classes` lights up pixels `c·block..(c+1)·block` at 0.85
/// against a 0.15 background, with `N(0, 0.05²)` noise clamped to `[0, 1]`.
pub fn make_block_patterns(classes: usize, block: usize, n_per_class: usize, split: Split, rng: &mut Rng) -> Result<Dataset> {
    if classes == 0 || block == 0 {
        return Err(Error::domain("block patterns need at least one class and pixel"));
    }
    let d = classes * block;
    let mut data = Vec::with_capacity(classes * n_per_class * d);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for i in 0..classes * n_per_class {
        let c = i % classes;
        for j in 0..d {
            let base = if j / block == c { 0.85 } else { 0.15 };
            data.push((base + 0.05 * rng.standard_normal()).clamp(0.0, 1.0));
        }
        labels.push(c);
    }
    Dataset::new(Mat::from_vec(labels.len(), d, data)?, labels, split, classes)
}
