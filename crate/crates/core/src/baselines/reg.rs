use std::ops::Range;

use crate::error::{Error, Result};
use crate::netcore::{masked_softmax, ActiveSet, DenseNet};
use crate::numerics::Mat;

const FISHER_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct EwcAnchor {
    pub theta_hat: Vec<f64>,
    pub fisher: Vec<f64>,
}

/// One quadratic anchor per finished task.
#[derive(Debug, Clone, PartialEq)]
pub struct EwcState {
    pub anchors: Vec<EwcAnchor>,
    pub lambda: f64,
}

impl EwcState {
    pub fn new(lambda: f64) -> Self {
        EwcState {
            anchors: Vec::new(),
            lambda,
        }
    }

    pub fn add_anchor(&mut self, theta_hat: Vec<f64>, fisher: Vec<f64>) -> Result<()> {
        if theta_hat.len() != fisher.len() {
            return Err(Error::shape("fisher and anchor lengths differ"));
        }
        if let Some(i) = fisher.iter().position(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::Numeric(format!("fisher entry {i} is {}", fisher[i])));
        }
        self.anchors.push(EwcAnchor { theta_hat, fisher });
        Ok(())
    }

    /// `Σ_k ½ Σ_i F_i (θ_i − θ̂_i)²` and its gradient, before `λ`.
    pub fn penalty(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for a in &self.anchors {
            if a.theta_hat.len() != theta.len() {
                return Err(Error::shape("anchor length differs from the parameter vector"));
            }
            for i in 0..theta.len() {
                let d = theta[i] - a.theta_hat[i];
                loss += 0.5 * a.fisher[i] * d * d;
                grad[i] += a.fisher[i] * d;
            }
        }
        Ok((loss, grad))
    }
}

/// Diagonal Fisher `mean_x Σ_c p(c|x) (∂ log p(c|x)/∂θ)²` with the
/// model's own softmax over `active`.
pub fn estimate_fisher(net: &DenseNet, inputs: &Mat, active: &ActiveSet) -> Result<Vec<f64>> {
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::domain("fisher estimate over an empty task set"));
    }
    let act = active.to_vec();
    let outputs = net.output_dim();
    let mut fisher = vec![0.0; net.num_params()];
    for start in (0..n).step_by(FISHER_CHUNK) {
        let end = (start + FISHER_CHUNK).min(n);
        let chunk = Mat::stack(inputs.cols(), (start..end).map(|r| inputs.row(r)))?;
        let cache = net.forward_batch(&chunk)?;
        let probs: Vec<Vec<f64>> = (0..chunk.rows())
            .map(|r| masked_softmax(cache.output().row(r), active))
            .collect::<Result<_>>()?;
        for &c in &act {
            let mut grad_out = Mat::zeros(chunk.rows(), outputs);
            let mut weights = Vec::with_capacity(chunk.rows());
            for (r, p) in probs.iter().enumerate() {
                let g = grad_out.row_mut(r);
                for &j in &act {
                    g[j] = -p[j];
                }
                g[c] += 1.0;
                weights.push(p[c] / n as f64);
            }
            let sq = net.weighted_squared_grads(&cache, &grad_out, &weights)?;
            for (f, s) in fisher.iter_mut().zip(sq) {
                *f += s;
            }
        }
    }
    Ok(fisher)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaCap {
    /// `min(Ω, Ω_max)`.
    #[default]
    Min,
    /// `max(Ω, Ω_max)`, as the formula is printed.
    Max,
}

impl OmegaCap {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(OmegaCap::Min),
            "max" => Ok(OmegaCap::Max),
            other => Err(Error::Usage(format!("unknown omega cap `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OmegaCap::Min => "min",
            OmegaCap::Max => "max",
        }
    }
}

/// Path-integral importance over the parameters in `range`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiState {
    pub omega_running: Vec<f64>,
    pub big_omega: Vec<f64>,
    pub theta_task_start: Vec<f64>,
    pub theta_prev_task: Vec<f64>,
    pub xi: f64,
    pub lambda: f64,
    pub omega_max: Option<f64>,
    pub cap: OmegaCap,
    range: Range<usize>,
    consolidations: usize,
}

impl SiState {
    pub fn new(theta0: &[f64], range: Range<usize>, lambda: f64, xi: f64) -> Result<Self> {
        if range.end > theta0.len() || range.start > range.end {
            return Err(Error::shape("SI range outside the parameter vector"));
        }
        let start = theta0[range.clone()].to_vec();
        let n = range.len();
        Ok(SiState {
            omega_running: vec![0.0; n],
            big_omega: vec![0.0; n],
            theta_task_start: start.clone(),
            theta_prev_task: start,
            xi,
            lambda,
            omega_max: None,
            cap: OmegaCap::Min,
            range,
            consolidations: 0,
        })
    }

    pub fn with_cap(mut self, omega_max: f64, cap: OmegaCap) -> Self {
        self.omega_max = Some(omega_max);
        self.cap = cap;
        self
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn consolidations(&self) -> usize {
        self.consolidations
    }

    /// `ω += (θ_after − θ_before)·(−g)` with `g` the full-loss gradient.
    pub fn accumulate(&mut self, before: &[f64], after: &[f64], grad: &[f64]) {
        let r = self.range.clone();
        for ((w, (b, a)), g) in self
            .omega_running
            .iter_mut()
            .zip(before[r.clone()].iter().zip(&after[r.clone()]))
            .zip(&grad[r])
        {
            *w += (a - b) * -g;
        }
    }

    pub fn consolidate(&mut self, theta_end: &[f64]) {
        let end = &theta_end[self.range.clone()];
        for i in 0..end.len() {
            let delta = end[i] - self.theta_task_start[i];
            self.big_omega[i] += self.omega_running[i].max(0.0) / (delta * delta + self.xi);
        }
        self.omega_running.fill(0.0);
        self.theta_task_start.copy_from_slice(end);
        self.theta_prev_task.copy_from_slice(end);
        self.consolidations += 1;
    }

    pub fn effective_omega(&self, i: usize) -> f64 {
        let o = self.big_omega[i];
        match (self.omega_max, self.cap) {
            (None, _) => o,
            (Some(m), OmegaCap::Min) => o.min(m),
            (Some(m), OmegaCap::Max) => o.max(m),
        }
    }

    /// `Σ Ω̃ (θ − θ̂)²` and its gradient over the full parameter vector, before `λ`.
    pub fn penalty(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; theta.len()];
        if self.consolidations == 0 {
            return (0.0, grad);
        }
        let mut loss = 0.0;
        for (i, p) in self.range.clone().enumerate() {
            let d = theta[p] - self.theta_prev_task[i];
            let o = self.effective_omega(i);
            loss += o * d * d;
            grad[p] = 2.0 * o * d;
        }
        (loss, grad)
    }
}
