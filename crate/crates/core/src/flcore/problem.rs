use rand::seq::SliceRandom;

use crate::base::{EpochDataset, Sample, Stream};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::models::{Arch, LossSpec, Model, ParamVector};

/// Weighted empirical risk `sum_m (n_m / n) * L_m(f; S_m)` over the agents'
/// epoch datasets.
///
/// Each local loss carries the ridge term once, and the weights sum to one,
/// so the objective equals the centralized ridge objective on the
/// concatenated samples.
#[derive(Debug, Clone)]
pub struct FLProblem {
    datasets: Vec<EpochDataset>,
    loss: LossSpec,
    arch: Arch,
    total: usize,
    shared_dim: Option<usize>,
}

impl FLProblem {
    pub fn new(datasets: Vec<EpochDataset>, loss: LossSpec, arch: Arch) -> Result<Self> {
        if datasets.is_empty() {
            return Err(invalid("FL problem needs at least one agent"));
        }
        if let Some(d) = datasets.iter().find(|d| d.is_empty()) {
            return Err(invalid(format!("agent {} has an empty dataset", d.agent)));
        }
        loss.validate()?;
        let context_len = arch.context_len();
        for d in &datasets {
            for s in &d.samples {
                if s.context.len() != context_len || s.action >= arch.arms() {
                    return Err(invalid(format!(
                        "agent {} holds a sample that does not fit the model architecture",
                        d.agent
                    )));
                }
            }
        }
        let total = datasets.iter().map(EpochDataset::len).sum();
        Ok(Self {
            datasets,
            loss,
            arch,
            total,
            shared_dim: None,
        })
    }

    /// Declare that the first `shared_dim` parameters are shared across
    /// agents and the rest are private (personalized routines only).
    pub fn with_split(mut self, shared_dim: usize) -> Result<Self> {
        if shared_dim > self.arch.param_count() {
            return Err(invalid(format!(
                "shared block of {shared_dim} exceeds the {} model parameters",
                self.arch.param_count()
            )));
        }
        self.shared_dim = Some(shared_dim);
        Ok(self)
    }

    pub fn shared_dim(&self) -> Option<usize> {
        self.shared_dim
    }

    pub fn datasets(&self) -> &[EpochDataset] {
        &self.datasets
    }

    pub fn agents(&self) -> usize {
        self.datasets.len()
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    /// Total sample count `n`.
    pub fn total_samples(&self) -> usize {
        self.total
    }

    /// `n_m / n` for agent position `m`.
    pub fn weight(&self, m: usize) -> f64 {
        self.datasets[m].len() as f64 / self.total as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.agents()).map(|m| self.weight(m)).collect()
    }

    pub fn global_loss(&self, model: &Model) -> Result<f64> {
        let mut total = 0.0;
        for (m, d) in self.datasets.iter().enumerate() {
            total += self.weight(m) * model.batch_loss(&self.loss, &d.samples)?;
        }
        Ok(total)
    }

    /// Full-batch gradient of the global objective.
    pub fn global_gradient(&self, model: &Model) -> Result<ParamVector> {
        let mut grad = ParamVector::zeros(model.params().len());
        for (m, d) in self.datasets.iter().enumerate() {
            let g = model.batch_gradient(&self.loss, &d.samples)?;
            linalg::axpy(self.weight(m), &g, &mut grad);
        }
        Ok(grad)
    }
}

/// Mini-batch order for one agent: a shuffled pass over the dataset,
/// reshuffled whenever it is exhausted. Batches never straddle two passes.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    stream: Stream,
}

impl BatchSampler {
    pub fn new(batch_size: usize, stream: Stream) -> Self {
        Self {
            batch_size: batch_size.max(1),
            order: Vec::new(),
            cursor: 0,
            stream,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Indices of the next batch, or `None` for a full batch (which draws no
    /// randomness).
    pub fn next_batch(&mut self, n: usize) -> Option<Vec<usize>> {
        if self.batch_size >= n {
            return None;
        }
        if self.order.len() != n || self.cursor + self.batch_size > n {
            self.order = (0..n).collect();
            self.order.shuffle(&mut self.stream);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        Some(batch)
    }

    /// Gradient of `model` on the next batch drawn from `data`.
    pub fn next_gradient(&mut self, model: &Model, loss: &LossSpec, data: &[Sample]) -> Result<ParamVector> {
        if data.is_empty() {
            return Err(invalid("agent dataset is empty"));
        }
        match self.next_batch(data.len()) {
            None => model.batch_gradient(loss, data),
            Some(idx) => model.gradient_over(loss, idx.iter().map(|&i| &data[i])),
        }
    }
}

/// One SGD step on a mini-batch of the agent's data.
pub fn local_gradient_step(
    model: &mut Model,
    loss: &LossSpec,
    data: &[Sample],
    lr: f64,
    sampler: &mut BatchSampler,
) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(invalid("learning rate must be finite and nonnegative"));
    }
    let grad = sampler.next_gradient(model, loss, data)?;
    linalg::axpy(-lr, &grad, model.params_mut());
    Ok(())
}
