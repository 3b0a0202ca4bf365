use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::base::Sample;
use crate::linalg;

/// Two-layer rectifier network mapping a context to one score per arm.
///
/// Flat parameter layout:
/// `[W1 (input-major: W1[j * hidden + k]) | b1 | W2 (arm-major: W2[a * hidden + k]) | b2]`.
/// Input-major `W1` lets the forward and backward passes skip zero context
/// entries, which keeps sparse multi-label contexts cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub arms: usize,
}

fn default_hidden() -> usize {
    256
}

pub(crate) struct Forward {
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
}

impl MlpArch {
    fn w1(&self) -> Range<usize> {
        0..self.input_dim * self.hidden
    }

    fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden
    }

    fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.arms * self.hidden
    }

    fn b2(&self) -> Range<usize> {
        let s = self.w2().end;
        s..s + self.arms
    }

    pub fn param_count(&self) -> usize {
        self.b2().end
    }

    /// Weight-matrix ranges in the flat vector with their fan-in.
    pub fn weight_ranges(&self) -> [(Range<usize>, usize); 2] {
        [(self.w1(), self.input_dim), (self.w2(), self.hidden)]
    }

    pub fn bias_ranges(&self) -> [Range<usize>; 2] {
        [self.b1(), self.b2()]
    }

    /// Output layer (weights and bias).
    pub fn head_ranges(&self) -> [Range<usize>; 2] {
        [self.w2(), self.b2()]
    }

    pub(crate) fn forward(&self, params: &[f64], x: &[f64]) -> Forward {
        let h = self.hidden;
        let w1 = &params[self.w1()];
        let mut pre = params[self.b1()].to_vec();
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                linalg::axpy(xj, &w1[j * h..(j + 1) * h], &mut pre);
            }
        }
        let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let w2 = &params[self.w2()];
        let output = params[self.b2()]
            .iter()
            .enumerate()
            .map(|(a, &b)| b + linalg::dot(&w2[a * h..(a + 1) * h], &act))
            .collect();
        Forward { pre, output }
    }

    /// Add `d/dparams [coef/2 * (f(x)_a - r)^2]` to `grad`.
    pub(crate) fn accumulate_gradient(&self, params: &[f64], s: &Sample, coef: f64, grad: &mut [f64]) {
        let h = self.hidden;
        let fwd = self.forward(params, &s.context);
        let g = coef * (fwd.output[s.action] - s.reward);
        if g == 0.0 {
            return;
        }
        let a = s.action;
        let w2_start = self.w2().start;
        let w2_row = &params[w2_start + a * h..w2_start + (a + 1) * h];
        grad[self.b2().start + a] += g;
        let mut dpre = vec![0.0; h];
        for k in 0..h {
            if fwd.pre[k] > 0.0 {
                grad[w2_start + a * h + k] += g * fwd.pre[k];
                dpre[k] = g * w2_row[k];
            }
        }
        linalg::axpy(1.0, &dpre, &mut grad[self.b1()]);
        for (j, &xj) in s.context.iter().enumerate() {
            if xj != 0.0 {
                linalg::axpy(xj, &dpre, &mut grad[j * h..(j + 1) * h]);
            }
        }
    }
}
