use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EnvKind, EnvSpec, OracleInfo, Step};
use crate::base::{rng_stream, AgentId, Stream};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::models::FeatureMap;

/// Realizable linear world.
///
/// Contexts are unit vectors `x = [u / sqrt(2), 1 / sqrt(2)]` where `u` lies
/// on the unit sphere (the constant last coordinate acts as an intercept),
/// and `phi(x, a)` places `x` in arm `a`'s block. Agent `m`'s unit-norm-bounded
/// parameter is `[w_shared, w_private_m]` and its expected reward is
/// `0.5 + 0.4 * <w, phi(x, a)>`, which lies in `[0.1, 0.9]`. Realized rewards
/// add Gaussian noise and are clipped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    context_dim: usize,
    arms: usize,
    noise_std: f64,
    shared: Vec<f64>,
    private: Vec<Vec<f64>>,
    /// Per-agent direction added to `u` before normalisation.
    skew: Vec<Vec<f64>>,
    personalized: bool,
}

/// Uniform draw from the radius-`radius` ball in `R^dim`.
fn uniform_ball(stream: &mut Stream, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(stream)).collect();
    let n = linalg::norm(&v);
    let r = radius * stream.gen::<f64>().powf(1.0 / dim as f64);
    linalg::scale(r / n, &mut v);
    v
}

fn unit_vector(stream: &mut Stream, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(stream)).collect();
    let n = linalg::norm(&v);
    if n > 0.0 {
        linalg::scale(1.0 / n, &mut v);
    }
    v
}

impl SyntheticEnv {
    pub fn new(spec: &EnvSpec, seed: u64) -> Result<Self> {
        let context_dim = spec.context_dim.ok_or_else(|| invalid("synthetic environment needs context_dim"))?;
        let arms = spec.arms.ok_or_else(|| invalid("synthetic environment needs arms"))?;
        if context_dim < 1 || arms < 1 || spec.agents < 1 {
            return Err(invalid("context_dim, arms and agents must be at least 1"));
        }
        if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
            return Err(invalid("noise_std must be finite and nonnegative"));
        }
        if !(spec.context_skew >= 0.0 && spec.context_skew.is_finite()) {
            return Err(invalid("context_skew must be finite and nonnegative"));
        }
        let dim = context_dim * arms;
        let (personalized, shared_dim) = match spec.kind {
            EnvKind::SyntheticLinear => {
                if spec.shared_dim.is_some_and(|s| s != dim) {
                    return Err(invalid("a shared linear environment has no private parameters"));
                }
                (false, dim)
            }
            EnvKind::SyntheticPersonalized => {
                let s = spec.shared_dim.ok_or_else(|| invalid("personalized environment needs shared_dim"))?;
                if s > dim {
                    return Err(invalid(format!(
                        "shared_dim {s} exceeds the {dim} parameters of the feature map"
                    )));
                }
                (true, s)
            }
            EnvKind::MultilabelDataset => return Err(invalid("not a synthetic environment kind")),
        };
        let private_dim = dim - shared_dim;
        let shared_radius = (shared_dim as f64 / dim as f64).sqrt();
        let private_radius = (private_dim as f64 / dim as f64).sqrt();
        let shared = uniform_ball(&mut rng_stream(seed, "env/omega"), shared_dim, shared_radius);
        let private = (0..spec.agents)
            .map(|m| uniform_ball(&mut rng_stream(seed, &format!("env/omega/agent/{m}")), private_dim, private_radius))
            .collect();
        let skew = (0..spec.agents)
            .map(|m| {
                let mut h = unit_vector(&mut rng_stream(seed, &format!("env/skew/agent/{m}")), context_dim - 1);
                linalg::scale(spec.context_skew, &mut h);
                h
            })
            .collect();
        Ok(Self {
            context_dim,
            arms,
            noise_std: spec.noise_std,
            shared,
            private,
            skew,
            personalized,
        })
    }

    /// Replace the true parameters (e.g. to give agents equal private blocks).
    pub fn with_parameters(mut self, shared: Vec<f64>, private: Vec<Vec<f64>>) -> Result<Self> {
        let dim = self.feature_map().dim();
        if private.len() != self.private.len() || private.iter().any(|p| shared.len() + p.len() != dim) {
            return Err(invalid("parameter blocks do not match the environment"));
        }
        self.shared = shared;
        self.private = private;
        Ok(self)
    }

    pub fn agents(&self) -> usize {
        self.private.len()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::ConcatOnehot {
            context_dim: self.context_dim,
            arms: self.arms,
        }
    }

    pub fn shared_dim(&self) -> Option<usize> {
        self.personalized.then_some(self.shared.len())
    }

    pub fn is_personalized(&self) -> bool {
        self.personalized
    }

    /// Agent `m`'s unit-ball parameter `[shared, private_m]`.
    pub fn omega(&self, agent: AgentId) -> Vec<f64> {
        let mut w = self.shared.clone();
        w.extend_from_slice(&self.private[agent.index()]);
        w
    }

    /// Coefficients `theta_m` with `mu_m(x, a) = <theta_m, phi(x, a)>` exactly.
    pub fn true_parameter(&self, agent: AgentId) -> Vec<f64> {
        let mut theta = self.omega(agent);
        linalg::scale(0.4, &mut theta);
        let intercept = 0.5 * std::f64::consts::SQRT_2;
        let d = self.context_dim;
        let bias_value = if d == 1 { 0.5 } else { intercept };
        for a in 0..self.arms {
            theta[a * d + d - 1] += bias_value;
        }
        theta
    }

    /// Feature map over the stacked parameter `[shared, private_1, ..., private_M]`:
    /// agent `m`'s private coordinates land in block `m`, other blocks are zero.
    pub fn expanded_feature(&self, agent: AgentId, context: &[f64], action: usize) -> Result<Vec<f64>> {
        let phi = self.feature_map().feature(context, action)?;
        let s = self.shared.len();
        let p = phi.len() - s;
        let mut out = vec![0.0; s + self.agents() * p];
        out[..s].copy_from_slice(&phi[..s]);
        let off = s + agent.index() * p;
        out[off..off + p].copy_from_slice(&phi[s..]);
        Ok(out)
    }

    /// Stacked true coefficients matching [`SyntheticEnv::expanded_feature`].
    pub fn true_expanded_parameter(&self) -> Vec<f64> {
        let s = self.shared.len();
        let mut out = self.true_parameter(AgentId(0))[..s].to_vec();
        for m in 0..self.agents() {
            out.extend_from_slice(&self.true_parameter(AgentId(m))[s..]);
        }
        out
    }

    fn context(&self, agent: AgentId, stream: &mut Stream) -> Vec<f64> {
        let d = self.context_dim;
        if d == 1 {
            return vec![1.0];
        }
        let scale = 1.0 / ((d - 1) as f64).sqrt();
        let mut u: Vec<f64> = self.skew[agent.index()]
            .iter()
            .map(|h| {
                let z: f64 = StandardNormal.sample(stream);
                scale * z + h
            })
            .collect();
        let n = linalg::norm(&u);
        if n == 0.0 {
            u[0] = 1.0;
        } else {
            linalg::scale(1.0 / n, &mut u);
        }
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let mut x: Vec<f64> = u.into_iter().map(|v| v * c).collect();
        x.push(c);
        x
    }

    /// Expected rewards of every arm for `agent` under `context`.
    pub fn expected_rewards(&self, agent: AgentId, context: &[f64]) -> Vec<f64> {
        let w = self.omega(agent);
        let map = self.feature_map();
        (0..self.arms)
            .map(|a| 0.5 + 0.4 * map.inner(&w, context, a))
            .collect()
    }

    pub(crate) fn step(&self, agent: AgentId, stream: &mut Stream) -> Step {
        let context = self.context(agent, stream);
        let expected = self.expected_rewards(agent, &context);
        let realized = expected
            .iter()
            .map(|&mu| {
                if self.noise_std == 0.0 {
                    mu
                } else {
                    let z: f64 = StandardNormal.sample(stream);
                    (mu + self.noise_std * z).clamp(0.0, 1.0)
                }
            })
            .collect();
        Step::new(context, realized, OracleInfo::new(expected))
    }
}
