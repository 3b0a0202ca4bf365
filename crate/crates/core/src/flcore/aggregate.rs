use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::base::{AgentId, Stream};
use crate::error::{invalid, Result};
use crate::models::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    WeightedMean,
    CoordinateMedian,
    CoordinateTrimmedMean,
    GaussianNoisedMean,
}

/// How the server combines agent updates.
///
/// The median and trimmed mean ignore sample counts and treat every agent
/// equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorSpec {
    pub kind: AggregatorKind,
    /// Fraction trimmed from each end per coordinate, in `[0, 0.5)`.
    #[serde(default)]
    pub trim_fraction: f64,
    /// Standard deviation of the Gaussian privacy noise.
    #[serde(default)]
    pub noise_std: f64,
    /// Noise each agent's update instead of the aggregate.
    #[serde(default)]
    pub per_client_noise: bool,
}

impl Default for AggregatorSpec {
    fn default() -> Self {
        Self::of(AggregatorKind::WeightedMean)
    }
}

impl AggregatorSpec {
    pub fn of(kind: AggregatorKind) -> Self {
        Self {
            kind,
            trim_fraction: 0.0,
            noise_std: 0.0,
            per_client_noise: false,
        }
    }

    pub fn trimmed(trim_fraction: f64) -> Self {
        Self {
            trim_fraction,
            ..Self::of(AggregatorKind::CoordinateTrimmedMean)
        }
    }

    pub fn noised(noise_std: f64) -> Self {
        Self {
            noise_std,
            ..Self::of(AggregatorKind::GaussianNoisedMean)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(invalid("trim fraction must lie in [0, 0.5)"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise std must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// One agent's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub agent: AgentId,
    pub delta: ParamVector,
    pub sample_count: usize,
}

fn add_noise(values: &mut [f64], std: f64, stream: &mut Stream) -> Result<()> {
    if std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, std).map_err(|e| invalid(e.to_string()))?;
    for v in values {
        *v += normal.sample(stream);
    }
    Ok(())
}

fn weighted_mean(updates: &[Update], dim: usize) -> Result<Vec<f64>> {
    let total: usize = updates.iter().map(|u| u.sample_count).sum();
    if total == 0 {
        return Err(invalid("updates carry no samples"));
    }
    let mut out = vec![0.0; dim];
    for u in updates {
        let w = u.sample_count as f64 / total as f64;
        crate::linalg::axpy(w, &u.delta, &mut out);
    }
    Ok(out)
}

fn per_coordinate(updates: &[Update], dim: usize, reduce: impl Fn(&mut [f64]) -> f64) -> Vec<f64> {
    let mut column = vec![0.0; updates.len()];
    (0..dim)
        .map(|j| {
            for (c, u) in column.iter_mut().zip(updates) {
                *c = u.delta[j];
            }
            column.sort_unstable_by(f64::total_cmp);
            reduce(&mut column)
        })
        .collect()
}

/// Combine the agents' updates into one server step.
pub fn aggregate(spec: &AggregatorSpec, updates: &[Update], stream: &mut Stream) -> Result<ParamVector> {
    spec.validate()?;
    let first = updates.first().ok_or_else(|| invalid("no updates to aggregate"))?;
    let dim = first.delta.len();
    if updates.iter().any(|u| u.delta.len() != dim) {
        return Err(invalid("update dimensions differ"));
    }
    let m = updates.len();
    let out = match spec.kind {
        AggregatorKind::WeightedMean => weighted_mean(updates, dim)?,
        AggregatorKind::CoordinateMedian => per_coordinate(updates, dim, |col| {
            let mid = col.len() / 2;
            if col.len() % 2 == 1 {
                col[mid]
            } else {
                0.5 * (col[mid - 1] + col[mid])
            }
        }),
        AggregatorKind::CoordinateTrimmedMean => {
            let trim = (spec.trim_fraction * m as f64).floor() as usize;
            if 2 * trim >= m {
                return Err(invalid(format!("trimming {trim} from each end leaves nothing of {m} updates")));
            }
            let kept = (m - 2 * trim) as f64;
            per_coordinate(updates, dim, |col| col[trim..m - trim].iter().sum::<f64>() / kept)
        }
        AggregatorKind::GaussianNoisedMean => {
            if spec.per_client_noise {
                let mut noised = updates.to_vec();
                for u in &mut noised {
                    add_noise(&mut u.delta, spec.noise_std, stream)?;
                }
                weighted_mean(&noised, dim)?
            } else {
                let mut mean = weighted_mean(updates, dim)?;
                add_noise(&mut mean, spec.noise_std, stream)?;
                mean
            }
        }
    };
    Ok(out.into())
}
