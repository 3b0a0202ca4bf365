//! Reward models `f_w(x, a)`: a linear model over a known feature map and a
//! two-layer rectifier MLP that scores every arm from the context.
//!
//! Every model keeps its parameters in one flat vector, which is the view
//! the FL routines operate on.

mod checkpoint;
mod feature;
mod mlp;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use feature::FeatureMap;
pub use mlp::MlpArch;

use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{rng_stream, Sample};
use crate::error::{invalid, Result};
use crate::linalg;

/// Flat parameter vector of a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Model architecture descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Arch {
    Linear { feature_map: FeatureMap },
    Mlp(MlpArch),
}

impl Arch {
    pub fn param_count(&self) -> usize {
        match self {
            Arch::Linear { feature_map } => feature_map.dim(),
            Arch::Mlp(mlp) => mlp.param_count(),
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            Arch::Linear { feature_map } => feature_map.arms(),
            Arch::Mlp(mlp) => mlp.arms,
        }
    }

    pub fn context_len(&self) -> usize {
        match self {
            Arch::Linear { feature_map } => feature_map.context_len(),
            Arch::Mlp(mlp) => mlp.input_dim,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Arch::Linear { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Quadratic,
    QuadraticRidge,
}

/// Per-sample loss `(f_w(x, a) - r)^2`, plus `lambda * ||w||^2` for the ridge family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    pub lambda: f64,
}

impl LossSpec {
    pub fn quadratic() -> Self {
        Self {
            family: LossFamily::Quadratic,
            lambda: 0.0,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        Self {
            family: LossFamily::QuadraticRidge,
            lambda,
        }
    }

    /// Effective ridge strength (zero for the plain quadratic family).
    pub fn ridge_strength(&self) -> f64 {
        match self.family {
            LossFamily::Quadratic => 0.0,
            LossFamily::QuadraticRidge => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid("ridge lambda must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// A reward model: architecture plus flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Arch,
    params: ParamVector,
}

impl Model {
    /// Linear model `<w, phi(x, a)>`.
    pub fn linear(feature_map: FeatureMap, weights: Vec<f64>) -> Result<Self> {
        Self::unflatten(Arch::Linear { feature_map }, weights.into())
    }

    /// Rebuild a model from its flat parameters.
    pub fn unflatten(arch: Arch, params: ParamVector) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(invalid(format!(
                "parameter vector has length {}, architecture needs {}",
                params.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Arch) -> Self {
        Self {
            arch,
            params: ParamVector::zeros(arch.param_count()),
        }
    }

    pub fn flatten(&self) -> ParamVector {
        self.params.clone()
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn arms(&self) -> usize {
        self.arch.arms()
    }

    fn check_context(&self, context: &[f64]) -> Result<()> {
        if context.len() != self.arch.context_len() {
            return Err(invalid(format!(
                "context has length {}, model expects {}",
                context.len(),
                self.arch.context_len()
            )));
        }
        Ok(())
    }

    fn check_sample(&self, context: &[f64], action: usize) -> Result<()> {
        self.check_context(context)?;
        if action >= self.arms() {
            return Err(invalid(format!(
                "action {action} out of range for {} arms",
                self.arms()
            )));
        }
        Ok(())
    }

    /// Estimated reward of `action` under `context`.
    pub fn predict(&self, context: &[f64], action: usize) -> Result<f64> {
        self.check_sample(context, action)?;
        Ok(match &self.arch {
            Arch::Linear { feature_map } => feature_map.inner(&self.params, context, action),
            Arch::Mlp(mlp) => mlp.forward(&self.params, context).output[action],
        })
    }

    /// Estimated rewards of every arm under `context`.
    pub fn predict_all(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.check_context(context)?;
        Ok(match &self.arch {
            Arch::Linear { feature_map } => (0..feature_map.arms())
                .map(|a| feature_map.inner(&self.params, context, a))
                .collect(),
            Arch::Mlp(mlp) => mlp.forward(&self.params, context).output,
        })
    }

    /// Mean per-sample squared error plus the ridge term counted once.
    pub fn batch_loss(&self, loss: &LossSpec, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(invalid("batch is empty"));
        }
        let mut total = 0.0;
        for s in batch {
            let residual = self.predict(&s.context, s.action)? - s.reward;
            total += residual * residual;
        }
        Ok(total / batch.len() as f64 + loss.ridge_strength() * linalg::norm_sq(&self.params))
    }

    /// Exact gradient of [`Model::batch_loss`] with respect to the flat parameters.
    pub fn batch_gradient(&self, loss: &LossSpec, batch: &[Sample]) -> Result<ParamVector> {
        self.gradient_over(loss, batch.iter())
    }

    /// [`Model::batch_gradient`] over any collection of borrowed samples.
    pub fn gradient_over<'a, I>(&self, loss: &LossSpec, batch: I) -> Result<ParamVector>
    where
        I: ExactSizeIterator<Item = &'a Sample> + Clone,
    {
        if batch.len() == 0 {
            return Err(invalid("batch is empty"));
        }
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        match &self.arch {
            Arch::Linear { feature_map } => {
                for s in batch {
                    self.check_sample(&s.context, s.action)?;
                    let residual = feature_map.inner(&self.params, &s.context, s.action) - s.reward;
                    feature_map.accumulate(&mut grad, &s.context, s.action, 2.0 * residual / n);
                }
            }
            Arch::Mlp(mlp) => {
                for s in batch {
                    self.check_sample(&s.context, s.action)?;
                    mlp.accumulate_gradient(&self.params, s, 2.0 / n, &mut grad);
                }
            }
        }
        let lambda = loss.ridge_strength();
        if lambda != 0.0 {
            linalg::axpy(2.0 * lambda, &self.params, &mut grad);
        }
        Ok(grad.into())
    }
}

/// Initial model for `arch`.
///
/// Linear models start at zero. MLP weight matrices are drawn uniformly from
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` out of the `"model/init"` stream;
/// biases start at zero.
pub fn init_model(arch: Arch, seed: u64) -> Model {
    let mut model = Model::zeros(arch);
    if let Arch::Mlp(mlp) = arch {
        let mut stream = rng_stream(seed, "model/init");
        let params = model.params_mut();
        for (range, fan_in) in mlp.weight_ranges() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = stream.gen_range(-bound..=bound);
            }
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_map() -> FeatureMap {
        FeatureMap::Provided { feature_dim: 3, arms: 1 }
    }

    #[test]
    fn linear_prediction_examples() {
        let m = Model::linear(linear_map(), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.predict(&[1.0, 0.0, 0.0], 0).unwrap(), 1.0);
        let zero = init_model(Arch::Linear { feature_map: linear_map() }, 3);
        assert!(zero.params().iter().all(|&w| w == 0.0));
        assert_eq!(zero.predict(&[0.3, -0.2, 0.9], 0).unwrap(), 0.0);
        assert!(m.predict(&[1.0, 0.0], 0).is_err());
        assert!(m.predict(&[1.0, 0.0, 0.0], 1).is_err());
    }

    #[test]
    fn mlp_with_zero_head_predicts_zero() {
        let arch = MlpArch { input_dim: 4, hidden: 8, arms: 3 };
        let mut m = init_model(Arch::Mlp(arch), 11);
        for r in arch.head_ranges() {
            m.params_mut()[r].iter_mut().for_each(|p| *p = 0.0);
        }
        assert_eq!(m.predict_all(&[0.1, 0.5, -0.3, 0.2]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn loss_examples() {
        let zero = Model::zeros(Arch::Linear { feature_map: linear_map() });
        let s = |r: f64| Sample { context: vec![1.0, 0.0, 0.0], action: 0, reward: r };
        assert_eq!(zero.batch_loss(&LossSpec::quadratic(), &[s(1.0)]).unwrap(), 1.0);
        assert_eq!(zero.batch_loss(&LossSpec::ridge(2.0), &[s(0.0)]).unwrap(), 0.0);
        let fit = Model::linear(linear_map(), vec![0.5, 0.0, 0.0]).unwrap();
        assert_eq!(fit.batch_loss(&LossSpec::quadratic(), &[s(0.5)]).unwrap(), 0.0);
        assert!(zero.batch_loss(&LossSpec::quadratic(), &[]).is_err());
        assert!(zero.batch_gradient(&LossSpec::quadratic(), &[]).is_err());
    }

    #[test]
    fn ridge_counted_once() {
        let m = Model::linear(linear_map(), vec![1.0, 1.0, 0.0]).unwrap();
        let batch: Vec<Sample> = (0..4)
            .map(|_| Sample { context: vec![0.0, 0.0, 1.0], action: 0, reward: 0.0 })
            .collect();
        assert!((m.batch_loss(&LossSpec::ridge(0.5), &batch).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flatten_layout_and_validation() {
        let m = Model::linear(linear_map(), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.flatten().len(), 3);
        assert!(Model::unflatten(*m.arch(), vec![1.0].into()).is_err());
    }

    #[test]
    fn mlp_init_is_seeded_and_bounded() {
        let arch = MlpArch { input_dim: 9, hidden: 16, arms: 4 };
        let a = init_model(Arch::Mlp(arch), 5);
        let b = init_model(Arch::Mlp(arch), 5);
        assert_eq!(a, b);
        assert_ne!(a, init_model(Arch::Mlp(arch), 6));
        for (range, fan_in) in arch.weight_ranges() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            assert!(a.params()[range].iter().all(|w| w.abs() <= bound));
        }
        for range in arch.bias_ranges() {
            assert!(a.params()[range].iter().all(|&w| w == 0.0));
        }
    }
}
