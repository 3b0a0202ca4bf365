use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Known feature mapping `phi(x, a)` for linear reward models.
///
/// Both layouts make `phi(x, a)` a copy of a contiguous slice placed at a
/// fixed offset, so inner products and gradient accumulation never build the
/// feature vector explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FeatureMap {
    /// `phi(x, a)` has `arms` blocks of length `context_dim`; block `a` holds
    /// the context, all other blocks are zero.
    ConcatOnehot { context_dim: usize, arms: usize },
    /// The context already stores one feature row per arm, row-major
    /// (`arms * feature_dim` entries) and `phi(x, a)` is row `a`.
    Provided { feature_dim: usize, arms: usize },
}

impl FeatureMap {
    /// Output dimension `d`.
    pub fn dim(&self) -> usize {
        match *self {
            FeatureMap::ConcatOnehot { context_dim, arms } => context_dim * arms,
            FeatureMap::Provided { feature_dim, .. } => feature_dim,
        }
    }

    pub fn arms(&self) -> usize {
        match *self {
            FeatureMap::ConcatOnehot { arms, .. } | FeatureMap::Provided { arms, .. } => arms,
        }
    }

    /// Expected length of the raw context vector.
    pub fn context_len(&self) -> usize {
        match *self {
            FeatureMap::ConcatOnehot { context_dim, .. } => context_dim,
            FeatureMap::Provided { feature_dim, arms } => feature_dim * arms,
        }
    }

    pub fn check(&self, context: &[f64], action: usize) -> Result<()> {
        if context.len() != self.context_len() {
            return Err(invalid(format!(
                "context has length {}, feature map expects {}",
                context.len(),
                self.context_len()
            )));
        }
        if action >= self.arms() {
            return Err(invalid(format!(
                "action {action} out of range for {} arms",
                self.arms()
            )));
        }
        Ok(())
    }

    /// `(offset in phi, slice of the context)` for the nonzero part of `phi(x, a)`.
    pub(crate) fn block<'a>(&self, context: &'a [f64], action: usize) -> (usize, &'a [f64]) {
        match *self {
            FeatureMap::ConcatOnehot { context_dim, .. } => (action * context_dim, context),
            FeatureMap::Provided { feature_dim, .. } => (
                0,
                &context[action * feature_dim..(action + 1) * feature_dim],
            ),
        }
    }

    /// Materialise `phi(x, a)`.
    pub fn feature(&self, context: &[f64], action: usize) -> Result<Vec<f64>> {
        self.check(context, action)?;
        let mut phi = vec![0.0; self.dim()];
        let (offset, part) = self.block(context, action);
        phi[offset..offset + part.len()].copy_from_slice(part);
        Ok(phi)
    }

    /// `<weights, phi(x, a)>`; inputs must already be checked.
    pub(crate) fn inner(&self, weights: &[f64], context: &[f64], action: usize) -> f64 {
        let (offset, part) = self.block(context, action);
        crate::linalg::dot(&weights[offset..offset + part.len()], part)
    }

    /// `out += coef * phi(x, a)`; inputs must already be checked.
    pub(crate) fn accumulate(&self, out: &mut [f64], context: &[f64], action: usize, coef: f64) {
        let (offset, part) = self.block(context, action);
        crate::linalg::axpy(coef, part, &mut out[offset..offset + part.len()]);
    }
}
