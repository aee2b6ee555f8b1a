use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwrVariant {
    Cwr,
    CwrPlus,
}

/// Consolidated output layer. The temporary weights `tw` are the live output
/// layer of the network being trained and are passed in as a slice laid out
/// like a dense layer: `outputs × inputs` weights, then `outputs` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CwrHead {
    pub cw: Vec<f64>,
    pub variant: CwrVariant,
    outputs: usize,
    inputs: usize,
}

impl CwrHead {
    pub fn new(variant: CwrVariant, outputs: usize, inputs: usize) -> Self {
        CwrHead {
            cw: vec![0.0; outputs * inputs + outputs],
            variant,
            outputs,
            inputs,
        }
    }

    fn check(&self, tw: &[f64]) -> Result<()> {
        if tw.len() != self.cw.len() {
            return Err(Error::shape(format!("head has {} params, tw has {}", self.cw.len(), tw.len())));
        }
        Ok(())
    }

    /// CWR redraws `tw` (Glorot-uniform, zero bias); CWR+ zeroes it.
    pub fn task_start(&self, tw: &mut [f64], rng: &mut Rng) -> Result<()> {
        self.check(tw)?;
        let nw = self.outputs * self.inputs;
        match self.variant {
            CwrVariant::Cwr => {
                let limit = (6.0 / (self.inputs + self.outputs) as f64).sqrt();
                for w in &mut tw[..nw] {
                    *w = rng.uniform_range(-limit, limit);
                }
                tw[nw..].fill(0.0);
            }
            CwrVariant::CwrPlus => tw.fill(0.0),
        }
        Ok(())
    }

    /// Copies the rows of `task_classes` from `tw` into `cw`. CWR+ first
    /// subtracts the mean row over `classes_seen` from `tw`, and the mean
    /// bias from its biases.
    pub fn task_end(&mut self, tw: &mut [f64], task_classes: &[usize], classes_seen: &[usize]) -> Result<()> {
        self.check(tw)?;
        let (o, d) = (self.outputs, self.inputs);
        if let Some(&c) = task_classes.iter().chain(classes_seen).find(|&&c| c >= o) {
            return Err(Error::shape(format!("class {c} outside a head of {o} outputs")));
        }
        let nw = o * d;
        if self.variant == CwrVariant::CwrPlus && !classes_seen.is_empty() {
            let k = classes_seen.len() as f64;
            let mut mean_row = vec![0.0; d];
            let mut mean_bias = 0.0;
            for &c in classes_seen {
                for (m, w) in mean_row.iter_mut().zip(&tw[c * d..(c + 1) * d]) {
                    *m += w / k;
                }
                mean_bias += tw[nw + c] / k;
            }
            for &c in classes_seen {
                for (w, m) in tw[c * d..(c + 1) * d].iter_mut().zip(&mean_row) {
                    *w -= m;
                }
                tw[nw + c] -= mean_bias;
            }
        }
        for &c in task_classes {
            self.cw[c * d..(c + 1) * d].copy_from_slice(&tw[c * d..(c + 1) * d]);
            self.cw[nw + c] = tw[nw + c];
        }
        Ok(())
    }
}
