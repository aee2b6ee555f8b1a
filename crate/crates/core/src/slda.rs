//! Streaming linear discriminant analysis: running class means, one shared
//! covariance initialised by OAS shrinkage on a first batch and then updated
//! one sample at a time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{gemm, Cholesky, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasConvention {
    /// `b_c = −½ μ_cᵀ Λ μ_c`
    #[default]
    Standard,
    /// `b_c = μ_cᵀ Λ μ_c`
    PaperLiteral,
}

impl BiasConvention {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(BiasConvention::Standard),
            "paper_literal" => Ok(BiasConvention::PaperLiteral),
            other => Err(Error::Usage(format!("unknown slda_bias `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasConvention::Standard => "standard",
            BiasConvention::PaperLiteral => "paper_literal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SldaPhase {
    CollectingFirstTask,
    Streaming,
}

/// Weights and biases of the current decision rule.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRule {
    pub classes: Vec<usize>,
    pub weights: Mat,
    pub biases: Vec<f64>,
}

impl LinearRule {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes.len())
            .map(|i| {
                let w = self.weights.row(i);
                w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.biases[i]
            })
            .collect()
    }

    /// Highest score; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let scores = self.scores(x);
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        self.classes[best]
    }
}

#[derive(Debug, Clone)]
pub struct SldaState {
    dim: usize,
    eps: f64,
    bias: BiasConvention,
    mu: BTreeMap<usize, Vec<f64>>,
    n: BTreeMap<usize, u64>,
    /// `t·Σ`, upper triangle only.
    scatter: Mat,
    t: u64,
    phase: SldaPhase,
    rule: Option<LinearRule>,
}

impl SldaState {
    pub fn new(dim: usize, eps: f64, bias: BiasConvention) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        Ok(SldaState {
            dim,
            eps,
            bias,
            mu: BTreeMap::new(),
            n: BTreeMap::new(),
            scatter: Mat::zeros(dim, dim),
            t: 0,
            phase: SldaPhase::CollectingFirstTask,
            rule: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phase(&self) -> SldaPhase {
        self.phase
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn mean(&self, y: usize) -> Option<&[f64]> {
        self.mu.get(&y).map(Vec::as_slice)
    }

    pub fn count(&self, y: usize) -> u64 {
        self.n.get(&y).copied().unwrap_or(0)
    }

    pub fn classes(&self) -> Vec<usize> {
        self.n.iter().filter(|(_, &n)| n > 0).map(|(&y, _)| y).collect()
    }

    /// The shared covariance `Σ`.
    pub fn sigma(&self) -> Mat {
        let mut s = Mat::zeros(self.dim, self.dim);
        if self.t == 0 {
            return s;
        }
        let inv = 1.0 / self.t as f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.scatter.get(i, j) * inv;
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::shape(format!("sample has {} features, expected {}", x.len(), self.dim)));
        }
        Ok(())
    }

    pub fn update_mean(&mut self, x: &[f64], y: usize) -> Result<()> {
        self.check_dim(x)?;
        let n = self.n.entry(y).or_insert(0);
        let mu = self.mu.entry(y).or_insert_with(|| vec![0.0; x.len()]);
        let nf = *n as f64;
        for (m, &v) in mu.iter_mut().zip(x) {
            *m = (nf * *m + v) / (nf + 1.0);
        }
        *n += 1;
        self.rule = None;
        Ok(())
    }

    /// Sets `Σ` to the OAS estimate of the within-class covariance of `batch`
    /// and switches to streaming.
    pub fn init_covariance(&mut self, batch: &[(&[f64], usize)]) -> Result<()> {
        if self.phase != SldaPhase::CollectingFirstTask {
            return Err(Error::protocol("covariance already initialised"));
        }
        if batch.len() < 2 {
            return Err(Error::domain("covariance initialisation needs at least two samples"));
        }
        for (x, _) in batch {
            self.check_dim(x)?;
        }
        let sigma = oas_covariance(batch, self.dim)?;
        self.t = batch.len() as u64;
        let tf = self.t as f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.scatter.set(i, j, if j >= i { tf * sigma.get(i, j) } else { 0.0 });
            }
        }
        self.phase = SldaPhase::Streaming;
        self.rule = None;
        Ok(())
    }

    /// One streaming sample: covariance from the current mean of `y`, then
    /// the mean. A class seen for the first time gets its mean first.
    pub fn update(&mut self, x: &[f64], y: usize) -> Result<()> {
        if self.count(y) == 0 {
            self.update_mean(x, y)?;
            return self.update_covariance(x, y);
        }
        self.update_covariance(x, y)?;
        self.update_mean(x, y)
    }

    /// `Σ ← (tΣ + t/(t+1)·(x−μ_y)(x−μ_y)ᵀ)/(t+1)`, `t ← t+1`. Means are untouched.
    pub fn update_covariance(&mut self, x: &[f64], y: usize) -> Result<()> {
        if self.phase != SldaPhase::Streaming {
            return Err(Error::protocol("covariance update before initialisation"));
        }
        self.check_dim(x)?;
        let mu = self
            .mu
            .get(&y)
            .ok_or_else(|| Error::protocol(format!("class {y} has no mean yet")))?;
        let tf = self.t as f64;
        let w = tf / (tf + 1.0);
        let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
        let n = self.dim;
        let data = self.scatter.as_mut_slice();
        for i in 0..n {
            let di = w * d[i];
            if di == 0.0 {
                continue;
            }
            let row = &mut data[i * n + i..(i + 1) * n];
            for (s, &dj) in row.iter_mut().zip(&d[i..]) {
                *s += di * dj;
            }
        }
        self.t += 1;
        self.rule = None;
        Ok(())
    }

    /// Current rule, rebuilt if any update happened since the last call.
    pub fn rule(&mut self) -> Result<&LinearRule> {
        if self.rule.is_none() {
            self.rule = Some(self.build_rule()?);
        }
        Ok(self.rule.as_ref().expect("built above"))
    }

    /// Builds the rule from scratch without touching the cache.
    pub fn build_rule(&self) -> Result<LinearRule> {
        if self.phase != SldaPhase::Streaming {
            return Err(Error::protocol("prediction before covariance initialisation"));
        }
        let classes = self.classes();
        if classes.is_empty() {
            return Err(Error::protocol("no class has been observed"));
        }
        let mut a = self.sigma();
        for v in a.as_mut_slice() {
            *v *= 1.0 - self.eps;
        }
        for i in 0..self.dim {
            a.set(i, i, a.get(i, i) + self.eps);
        }
        let chol = Cholesky::factor(&a).map_err(|e| Error::Internal(format!("shrunk covariance not invertible: {e}")))?;
        let mut weights = Mat::zeros(classes.len(), self.dim);
        let mut biases = Vec::with_capacity(classes.len());
        for (i, y) in classes.iter().enumerate() {
            let mu = &self.mu[y];
            let w = chol.solve(mu)?;
            let quad: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
            biases.push(match self.bias {
                BiasConvention::Standard => -0.5 * quad,
                BiasConvention::PaperLiteral => quad,
            });
            weights.row_mut(i).copy_from_slice(&w);
        }
        Ok(LinearRule {
            classes,
            weights,
            biases,
        })
    }

    pub fn predict(&mut self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.rule()?.predict(x))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let classes: Vec<usize> = self.n.keys().copied().collect();
        let mut m = String::new();
        m.push_str("format = genclass-slda-1\n");
        m.push_str(&format!("dim = {}\n", self.dim));
        m.push_str(&format!("eps = {}\n", self.eps));
        m.push_str(&format!("bias = {}\n", self.bias.as_str()));
        m.push_str(&format!("t = {}\n", self.t));
        m.push_str(&format!(
            "phase = {}\n",
            match self.phase {
                SldaPhase::CollectingFirstTask => "collecting",
                SldaPhase::Streaming => "streaming",
            }
        ));
        m.push_str(&format!(
            "classes = {}\n",
            classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        ));
        for y in &classes {
            m.push_str(&format!("count.{y} = {}\n", self.n[y]));
        }
        let mut bin = Vec::with_capacity(8 * (classes.len() + self.dim) * self.dim);
        for y in &classes {
            for v in &self.mu[y] {
                bin.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in self.scatter.as_slice() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("slda.bin"), bin)?;
        fs::write(dir.join("manifest.txt"), m)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.txt"))
            .map_err(|e| Error::Manifest(format!("cannot read SLDA manifest: {e}")))?;
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Manifest(format!("missing key `{k}`")));
        let bad = |k: &str| Error::Manifest(format!("malformed value for `{k}`"));
        if get("format")? != "genclass-slda-1" {
            return Err(Error::Manifest("not an SLDA state".into()));
        }
        let dim: usize = get("dim")?.parse().map_err(|_| bad("dim"))?;
        let eps: f64 = get("eps")?.parse().map_err(|_| bad("eps"))?;
        let bias = BiasConvention::parse(get("bias")?).map_err(|_| bad("bias"))?;
        let mut state = SldaState::new(dim, eps, bias)?;
        state.t = get("t")?.parse().map_err(|_| bad("t"))?;
        state.phase = match get("phase")? {
            "collecting" => SldaPhase::CollectingFirstTask,
            "streaming" => SldaPhase::Streaming,
            _ => return Err(bad("phase")),
        };
        let classes: Vec<usize> = match get("classes")? {
            "" => Vec::new(),
            s => s
                .split(',')
                .map(|c| c.trim().parse().map_err(|_| bad("classes")))
                .collect::<Result<_>>()?,
        };
        let bytes = fs::read(dir.join("slda.bin"))?;
        let need = 8 * (classes.len() + dim) * dim;
        if bytes.len() != need {
            return Err(Error::format(bytes.len().min(need), format!("expected {need} bytes of SLDA state")));
        }
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for y in classes {
            let n = get(&format!("count.{y}"))?.parse().map_err(|_| bad("count"))?;
            state.n.insert(y, n);
            state.mu.insert(y, vals.by_ref().take(dim).collect());
        }
        for (dst, v) in state.scatter.as_mut_slice().iter_mut().zip(vals) {
            *dst = v;
        }
        Ok(state)
    }
}

/// OAS shrinkage of the within-class sample covariance (divisor `n`).
pub fn oas_covariance(batch: &[(&[f64], usize)], dim: usize) -> Result<Mat> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::domain("OAS needs at least two samples"));
    }
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (x, y) in batch {
        let e = sums.entry(*y).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, v) in e.0.iter_mut().zip(x.iter()) {
            *s += v;
        }
        e.1 += 1;
    }
    let means: BTreeMap<usize, Vec<f64>> = sums
        .into_iter()
        .map(|(y, (s, c))| (y, s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    let mut centered = Mat::zeros(n, dim);
    for (r, (x, y)) in batch.iter().enumerate() {
        let mu = &means[y];
        for ((dst, v), m) in centered.row_mut(r).iter_mut().zip(x.iter()).zip(mu) {
            *dst = v - m;
        }
    }
    let ct = centered.transpose();
    let mut s = Mat::zeros(dim, dim);
    gemm(ct.as_slice(), centered.as_slice(), s.as_mut_slice(), dim, n, dim);
    for v in s.as_mut_slice() {
        *v /= n as f64;
    }
    let d = dim as f64;
    let tr = s.trace();
    let rho = oas_shrinkage(&s, n);
    let target = rho * tr / d;
    for v in s.as_mut_slice() {
        *v *= 1.0 - rho;
    }
    for i in 0..dim {
        s.set(i, i, s.get(i, i) + target);
    }
    Ok(s)
}

/// OAS shrinkage intensity `ρ` for an empirical covariance `s` of `n` samples.
pub fn oas_shrinkage(s: &Mat, n: usize) -> f64 {
    let d = s.rows() as f64;
    let nf = n as f64;
    let tr = s.trace();
    let tr_s2: f64 = s.as_slice().iter().map(|v| v * v).sum();
    let num = (1.0 - 2.0 / d) * tr_s2 + tr * tr;
    let den = (nf + 1.0 - 2.0 / d) * (tr_s2 - tr * tr / d);
    if den <= 0.0 {
        1.0
    } else {
        (num / den).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn gaussian_samples(rng: &mut Rng, n: usize, mean: &[f64], scale: &[f64]) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| mean.iter().zip(scale).map(|(m, s)| m + s * rng.standard_normal()).collect())
            .collect()
    }

    fn as_batch(xs: &[Vec<f64>], y: usize) -> Vec<(&[f64], usize)> {
        xs.iter().map(|x| (x.as_slice(), y)).collect()
    }

    #[test]
    fn running_mean_examples() {
        let mut s = SldaState::new(2, 1e-4, BiasConvention::Standard).unwrap();
        s.update_mean(&[1.0, 0.0], 4).unwrap();
        assert_eq!(s.mean(4).unwrap(), &[1.0, 0.0]);
        assert_eq!(s.count(4), 1);
        s.update_mean(&[3.0, 0.0], 4).unwrap();
        assert_eq!(s.mean(4).unwrap(), &[2.0, 0.0]);
        assert_eq!(s.count(4), 2);
        assert!(matches!(s.update_mean(&[1.0], 4), Err(Error::Shape(_))));
    }

    #[test]
    fn streaming_mean_equals_batch_mean() {
        let mut rng = Rng::new(1, 1);
        let xs = gaussian_samples(&mut rng, 200, &[1.0, -2.0, 0.5], &[1.0, 2.0, 3.0]);
        let mut s = SldaState::new(3, 1e-4, BiasConvention::Standard).unwrap();
        for x in &xs {
            s.update_mean(x, 0).unwrap();
        }
        for j in 0..3 {
            let batch: f64 = xs.iter().map(|x| x[j]).sum::<f64>() / 200.0;
            assert!((s.mean(0).unwrap()[j] - batch).abs() < 1e-10);
        }
    }

    /// OAS written independently with scalar loops.
    fn oas_oracle(xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = xs.len();
        let d = xs[0].len();
        let mut mean = vec![0.0; d];
        for x in xs {
            for j in 0..d {
                mean[j] += x[j] / n as f64;
            }
        }
        let mut s = vec![vec![0.0; d]; d];
        for x in xs {
            for i in 0..d {
                for j in 0..d {
                    s[i][j] += (x[i] - mean[i]) * (x[j] - mean[j]) / n as f64;
                }
            }
        }
        let tr: f64 = (0..d).map(|i| s[i][i]).sum();
        let mut tr2 = 0.0;
        for i in 0..d {
            for j in 0..d {
                tr2 += s[i][j] * s[j][i];
            }
        }
        let df = d as f64;
        let rho = (((1.0 - 2.0 / df) * tr2 + tr * tr) / ((n as f64 + 1.0 - 2.0 / df) * (tr2 - tr * tr / df))).min(1.0);
        let mut out = s.clone();
        for i in 0..d {
            for j in 0..d {
                out[i][j] = (1.0 - rho) * s[i][j] + if i == j { rho * tr / df } else { 0.0 };
            }
        }
        out
    }

    #[test]
    fn oas_matches_scalar_oracle() {
        let mut rng = Rng::new(2, 2);
        let xs = gaussian_samples(&mut rng, 20, &[0.0, 1.0, 2.0], &[1.0, 0.5, 2.0]);
        let got = oas_covariance(&as_batch(&xs, 0), 3).unwrap();
        let want = oas_oracle(&xs);
        for i in 0..3 {
            for j in 0..3 {
                assert!((got.get(i, j) - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oas_centers_each_class_separately() {
        let mut rng = Rng::new(3, 3);
        let a = gaussian_samples(&mut rng, 15, &[5.0, 5.0], &[1.0, 1.0]);
        let b = gaussian_samples(&mut rng, 15, &[-5.0, 0.0], &[1.0, 1.0]);
        let mut batch = as_batch(&a, 0);
        batch.extend(as_batch(&b, 1));
        let pooled = oas_covariance(&batch, 2).unwrap();
        // a single global centring would see a variance near 25 in the first coordinate
        assert!(pooled.get(0, 0) < 3.0);
    }

    #[test]
    fn oas_large_n_is_close_to_sample_covariance() {
        let mut rng = Rng::new(4, 4);
        let xs = gaussian_samples(&mut rng, 20_000, &[0.0; 3], &[1.0, 2.0, 0.5]);
        let got = oas_covariance(&as_batch(&xs, 0), 3).unwrap();
        assert!((got.get(0, 0) - 1.0).abs() < 0.05);
        assert!((got.get(1, 1) - 4.0).abs() < 0.15);
        assert!((got.get(2, 2) - 0.25).abs() < 0.02);
    }

    #[test]
    fn oas_two_samples_shrinks_heavily() {
        let mut rng = Rng::new(5, 5);
        let xs = gaussian_samples(&mut rng, 2, &[0.0; 50], &[1.0; 50]);
        let batch = as_batch(&xs, 0);
        let got = oas_covariance(&batch, 50).unwrap();
        // centred pair is rank one, so tr(S²) = tr(S)² and ρ = 1.96 / (2.96 · 0.98)
        let rho = 1.96 / (2.96 * 0.98);
        let mu = got.trace() / 50.0;
        let mut raw = Mat::zeros(50, 50);
        for i in 0..50 {
            for j in 0..50 {
                let di = (xs[0][i] - xs[1][i]) / 2.0;
                let dj = (xs[0][j] - xs[1][j]) / 2.0;
                raw.set(i, j, di * dj);
            }
        }
        assert!((oas_shrinkage(&raw, 2) - rho).abs() < 1e-12);
        let dist = |m: &Mat| {
            let mut acc = 0.0;
            for i in 0..50 {
                for j in 0..50 {
                    let t = if i == j { mu } else { 0.0 };
                    acc += (m.get(i, j) - t).powi(2);
                }
            }
            acc.sqrt()
        };
        assert!((dist(&got) - (1.0 - rho) * dist(&raw)).abs() < 1e-9 * dist(&raw));
    }

    #[test]
    fn oas_large_n_shrinks_little() {
        let mut rng = Rng::new(5, 6);
        let xs = gaussian_samples(&mut rng, 5000, &[0.0; 4], &[1.0, 2.0, 3.0, 0.5]);
        let mut raw = Mat::zeros(4, 4);
        let mut mean = [0.0; 4];
        for x in &xs {
            for j in 0..4 {
                mean[j] += x[j] / 5000.0;
            }
        }
        for x in &xs {
            for i in 0..4 {
                for j in 0..4 {
                    raw.set(i, j, raw.get(i, j) + (x[i] - mean[i]) * (x[j] - mean[j]) / 5000.0);
                }
            }
        }
        assert!(oas_shrinkage(&raw, 5000) < 0.01);
    }

    #[test]
    fn init_needs_two_samples() {
        let mut s = SldaState::new(2, 1e-4, BiasConvention::Standard).unwrap();
        assert!(matches!(s.init_covariance(&[(&[1.0, 2.0], 0)]), Err(Error::Domain(_))));
    }

    fn streaming_state(sigma: &[f64], t: u64) -> SldaState {
        let d = (sigma.len() as f64).sqrt() as usize;
        let mut s = SldaState::new(d, 1e-4, BiasConvention::Standard).unwrap();
        s.phase = SldaPhase::Streaming;
        s.t = t;
        for i in 0..d {
            for j in i..d {
                s.scatter.set(i, j, t as f64 * sigma[i * d + j]);
            }
        }
        s
    }

    #[test]
    fn update_at_the_mean_only_rescales() {
        let mut s = streaming_state(&[2.0, 0.5, 0.5, 1.0], 3);
        s.update_mean(&[1.0, 1.0], 0).unwrap();
        s.update_covariance(&[1.0, 1.0], 0).unwrap();
        let sig = s.sigma();
        let want = [1.5, 0.375, 0.375, 0.75];
        for (g, w) in sig.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_hand_trace() {
        let mut s = streaming_state(&[0.0; 4], 1);
        s.update_mean(&[0.0, 0.0], 0).unwrap();
        s.update_covariance(&[2.0, 0.0], 0).unwrap();
        assert_eq!(s.sigma().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.t(), 2);
    }

    #[test]
    fn unknown_class_covariance_update_is_protocol_error() {
        let mut s = streaming_state(&[1.0, 0.0, 0.0, 1.0], 2);
        assert!(matches!(s.update_covariance(&[1.0, 1.0], 7), Err(Error::Protocol(_))));
    }

    #[test]
    fn stream_matches_scalar_recurrence() {
        let d = 4;
        let mut rng = Rng::new(6, 6);
        let init: Vec<Vec<f64>> = gaussian_samples(&mut rng, 10, &[0.0; 4], &[1.0; 4]);
        let mut s = SldaState::new(d, 1e-4, BiasConvention::Standard).unwrap();
        let mut batch = as_batch(&init, 0);
        for x in &init {
            s.update_mean(x, 0).unwrap();
        }
        batch.truncate(10);
        s.init_covariance(&batch).unwrap();

        let mut sigma: Vec<Vec<f64>> = (0..d).map(|i| s.sigma().row(i).to_vec()).collect();
        let mut means: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
        means.insert(0, (s.mean(0).unwrap().to_vec(), 10.0));
        let mut t = 10.0;
        for k in 0..500 {
            let y = k % 3;
            let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.standard_normal() + y as f64).collect();
            s.update(&x, y).unwrap();

            let fresh = !means.contains_key(&y);
            if fresh {
                means.insert(y, (x.clone(), 1.0));
            }
            let mu = means[&y].0.clone();
            for i in 0..d {
                for j in 0..d {
                    let delta = t / (t + 1.0) * (x[i] - mu[i]) * (x[j] - mu[j]);
                    sigma[i][j] = (t * sigma[i][j] + delta) / (t + 1.0);
                }
            }
            t += 1.0;
            if !fresh {
                let (m, n) = means.get_mut(&y).unwrap();
                for i in 0..d {
                    m[i] = (*n * m[i] + x[i]) / (*n + 1.0);
                }
                *n += 1.0;
            }
        }
        let got = s.sigma();
        for i in 0..d {
            for j in 0..d {
                assert!((got.get(i, j) - sigma[i][j]).abs() < 1e-9);
            }
        }
        for (y, (m, _)) in &means {
            for (a, b) in s.mean(*y).unwrap().iter().zip(m) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        use nalgebra::DMatrix;
        let d = 5;
        let mut rng = Rng::new(7, 7);
        let init = gaussian_samples(&mut rng, 3, &[0.0; 5], &[1.0; 5]);
        let mut s = SldaState::new(d, 1e-4, BiasConvention::Standard).unwrap();
        for x in &init {
            s.update_mean(x, 0).unwrap();
        }
        s.init_covariance(&as_batch(&init, 0)).unwrap();
        for k in 0..300 {
            let x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            s.update(&x, k % 4).unwrap();
            if k % 50 == 0 {
                let sig = s.sigma();
                let m = DMatrix::from_row_slice(d, d, sig.as_slice());
                assert!((m.clone() - m.transpose()).abs().max() < 1e-9);
                assert!(m.symmetric_eigenvalues().min() >= -1e-9);
            }
        }
    }

    #[test]
    fn one_class_predicts_itself() {
        let mut s = streaming_state(&[1.0, 0.0, 0.0, 1.0], 5);
        s.update_mean(&[0.3, 0.3], 8).unwrap();
        assert_eq!(s.predict(&[-4.0, 9.0]).unwrap(), 8);
    }

    #[test]
    fn symmetric_classes_split_at_the_bisector() {
        let mut s = streaming_state(&[1.0, 0.0, 0.0, 1.0], 5);
        s.update_mean(&[-1.0, 2.0], 0).unwrap();
        s.update_mean(&[1.0, -2.0], 1).unwrap();
        assert_eq!(s.predict(&[0.9, -1.8]).unwrap(), 1);
        assert_eq!(s.predict(&[-0.9, 1.8]).unwrap(), 0);
    }

    #[test]
    fn prediction_before_init_is_protocol_error() {
        let mut s = SldaState::new(2, 1e-4, BiasConvention::Standard).unwrap();
        s.update_mean(&[0.0, 0.0], 0).unwrap();
        assert!(matches!(s.predict(&[0.0, 0.0]), Err(Error::Protocol(_))));
    }

    #[test]
    fn paper_literal_bias_flips_sign_and_scale() {
        let mut a = streaming_state(&[2.0, 0.3, 0.3, 1.0], 5);
        a.update_mean(&[1.0, 2.0], 0).unwrap();
        let mut b = a.clone();
        b.bias = BiasConvention::PaperLiteral;
        let ra = a.rule().unwrap().clone();
        let rb = b.rule().unwrap().clone();
        assert_eq!(ra.weights, rb.weights);
        assert!((rb.biases[0] + 2.0 * ra.biases[0]).abs() < 1e-12);
    }

    /// Closed-form LDA from batch statistics, solved with explicit 2×2 inverse.
    fn batch_lda(a: &[Vec<f64>], b: &[Vec<f64>], eps: f64) -> impl Fn(&[f64]) -> usize {
        let mean = |xs: &[Vec<f64>]| {
            let n = xs.len() as f64;
            [xs.iter().map(|x| x[0]).sum::<f64>() / n, xs.iter().map(|x| x[1]).sum::<f64>() / n]
        };
        let (ma, mb) = (mean(a), mean(b));
        let mut s = [[0.0; 2]; 2];
        for (xs, m) in [(a, ma), (b, mb)] {
            for x in xs {
                for i in 0..2 {
                    for j in 0..2 {
                        s[i][j] += (x[i] - m[i]) * (x[j] - m[j]);
                    }
                }
            }
        }
        let n = (a.len() + b.len()) as f64;
        let c = [
            [(1.0 - eps) * s[0][0] / n + eps, (1.0 - eps) * s[0][1] / n],
            [(1.0 - eps) * s[1][0] / n, (1.0 - eps) * s[1][1] / n + eps],
        ];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let inv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        let lin = move |m: [f64; 2]| {
            let w = [inv[0][0] * m[0] + inv[0][1] * m[1], inv[1][0] * m[0] + inv[1][1] * m[1]];
            (w, -0.5 * (w[0] * m[0] + w[1] * m[1]))
        };
        let (wa, ba) = lin(ma);
        let (wb, bb) = lin(mb);
        move |x: &[f64]| {
            let sa = wa[0] * x[0] + wa[1] * x[1] + ba;
            let sb = wb[0] * x[0] + wb[1] * x[1] + bb;
            if sb > sa {
                1
            } else {
                0
            }
        }
    }

    #[test]
    fn agrees_with_batch_lda_on_grid() {
        let mut rng = Rng::new(8, 8);
        let a = gaussian_samples(&mut rng, 500, &[-1.0, 0.5], &[1.0, 0.6]);
        let b = gaussian_samples(&mut rng, 500, &[1.2, -0.3], &[1.0, 0.6]);
        let mut s = SldaState::new(2, 1e-4, BiasConvention::Standard).unwrap();
        let mut init = as_batch(&a[..20], 0);
        init.extend(as_batch(&b[..20], 1));
        for (x, y) in &init {
            s.update_mean(x, *y).unwrap();
        }
        s.init_covariance(&init).unwrap();
        for k in 20..500 {
            s.update(&a[k], 0).unwrap();
            s.update(&b[k], 1).unwrap();
        }
        let oracle = batch_lda(&a, &b, 1e-4);
        let mut agree = 0;
        let mut total = 0;
        for i in 0..41 {
            for j in 0..41 {
                let x = [-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64];
                total += 1;
                if s.predict(&x).unwrap() == oracle(&x) {
                    agree += 1;
                }
            }
        }
        assert!(agree as f64 / total as f64 >= 0.99, "{agree}/{total}");
    }

    #[test]
    fn cached_and_fresh_rules_agree() {
        let mut rng = Rng::new(9, 9);
        let mut s = streaming_state(&[1.0, 0.2, 0.2, 1.5], 4);
        for y in 0..3 {
            s.update_mean(&[rng.standard_normal(), rng.standard_normal()], y).unwrap();
        }
        let cached = s.rule().unwrap().clone();
        let fresh = s.build_rule().unwrap();
        for _ in 0..100 {
            let x = [3.0 * rng.standard_normal(), 3.0 * rng.standard_normal()];
            assert_eq!(cached.predict(&x), fresh.predict(&x));
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let mut rng = Rng::new(10, 10);
        let xs = gaussian_samples(&mut rng, 10, &[0.0; 3], &[1.0; 3]);
        let mut s = SldaState::new(3, 1e-4, BiasConvention::PaperLiteral).unwrap();
        for (i, x) in xs.iter().enumerate() {
            s.update_mean(x, i % 2).unwrap();
        }
        let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 2)).collect();
        s.init_covariance(&batch).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let mut back = SldaState::load(dir.path()).unwrap();
        assert_eq!(back.sigma(), s.sigma());
        assert_eq!(back.mean(1), s.mean(1));
        assert_eq!(back.t(), s.t());
        assert_eq!(back.rule().unwrap(), s.rule().unwrap());
    }
}
