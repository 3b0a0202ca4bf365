use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochMode {
    /// `tau^l = base^l`, with per-epoch lengths clamped to `cap`.
    Exponential,
    /// Every epoch lasts `base` global steps (clamped to `cap`).
    Fixed,
}

/// Epoch boundaries `tau^1 < tau^2 < ...` on the global clock.
///
/// Epoch `l` covers global steps `tau^{l-1} + 1 ..= tau^l` with `tau^0 = 0`.
/// In exponential mode the uncapped boundaries are `tau^l = base^l`, so the
/// first epoch lasts `base` steps and epoch `l >= 2` lasts
/// `base^{l-1} * (base - 1)` steps. A finite `cap` clamps every epoch length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub mode: EpochMode,
    pub base: u64,
    /// `None` means uncapped.
    pub cap: Option<u64>,
}

impl Default for EpochSchedule {
    fn default() -> Self {
        Self {
            mode: EpochMode::Exponential,
            base: 2,
            cap: Some(4096),
        }
    }
}

impl EpochSchedule {
    pub fn exponential(base: u64, cap: Option<u64>) -> Self {
        Self {
            mode: EpochMode::Exponential,
            base,
            cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            EpochMode::Exponential if self.base < 2 => {
                Err(invalid("exponential epoch base must be at least 2"))
            }
            EpochMode::Fixed if self.base < 1 => Err(invalid("fixed epoch length must be positive")),
            _ => match self.cap {
                Some(0) => Err(invalid("epoch cap must be positive")),
                _ => Ok(()),
            },
        }
    }

    /// Number of global steps in epoch `l` (1-based).
    pub fn epoch_length(&self, l: usize) -> Result<u64> {
        if l < 1 {
            return Err(invalid("epoch index starts at 1"));
        }
        self.validate()?;
        let raw = match self.mode {
            EpochMode::Fixed => self.base,
            EpochMode::Exponential => {
                let pow = self.base.saturating_pow((l - 1) as u32);
                if l == 1 {
                    self.base
                } else {
                    pow.saturating_mul(self.base - 1)
                }
            }
        };
        Ok(match self.cap {
            Some(cap) => raw.min(cap),
            None => raw,
        })
    }

    /// Global time step `tau^l` at which epoch `l` ends.
    pub fn epoch_end(&self, l: usize) -> Result<u64> {
        if l < 1 {
            return Err(invalid("epoch index starts at 1"));
        }
        let mut end = 0u64;
        for k in 1..=l {
            end = end.saturating_add(self.epoch_length(k)?);
        }
        Ok(end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GammaMode {
    /// The same gamma in every epoch.
    Constant { value: f64 },
    /// `gamma^l = sqrt(sum_m E_m K_m / (sum_m E_m * eps))` where `eps` is an
    /// excess-risk proxy; by default `eps = scale / sum_m E_m`.
    Theoretical { excess_risk_scale: f64 },
}

/// IGW learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSchedule {
    #[serde(flatten)]
    pub mode: GammaMode,
}

impl Default for GammaSchedule {
    fn default() -> Self {
        Self::constant(7000.0)
    }
}

impl GammaSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            mode: GammaMode::Constant { value },
        }
    }

    pub fn theoretical(excess_risk_scale: f64) -> Self {
        Self {
            mode: GammaMode::Theoretical { excess_risk_scale },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            GammaMode::Constant { value } if !(value.is_finite() && value > 0.0) => {
                Err(invalid("constant gamma must be positive and finite"))
            }
            GammaMode::Theoretical { excess_risk_scale } if !(excess_risk_scale.is_finite() && excess_risk_scale > 0.0) => {
                Err(invalid("excess-risk scale must be positive and finite"))
            }
            _ => Ok(()),
        }
    }

    /// Default excess-risk proxy `scale / sum_m E_m` for the theoretical mode.
    pub fn default_excess_risk(&self, prev_epoch_lengths: &[u64]) -> Option<f64> {
        match self.mode {
            GammaMode::Constant { .. } => None,
            GammaMode::Theoretical { excess_risk_scale } => {
                let total: u64 = prev_epoch_lengths.iter().sum();
                Some(excess_risk_scale / total.max(1) as f64)
            }
        }
    }

    /// Learning rate for epoch `l`.
    ///
    /// `prev_epoch_lengths[m]` is agent `m`'s local length of epoch `l - 1`
    /// and `arm_counts[m]` its number of arms.
    pub fn gamma_for_epoch(
        &self,
        l: usize,
        prev_epoch_lengths: &[u64],
        arm_counts: &[usize],
        excess_risk_proxy: f64,
    ) -> Result<f64> {
        if l < 1 {
            return Err(invalid("epoch index starts at 1"));
        }
        self.validate()?;
        match self.mode {
            GammaMode::Constant { value } => Ok(value),
            GammaMode::Theoretical { .. } => {
                if l < 2 {
                    return Err(invalid("theoretical gamma is defined from epoch 2 on"));
                }
                if !(excess_risk_proxy.is_finite() && excess_risk_proxy > 0.0) {
                    return Err(invalid("excess-risk proxy must be positive"));
                }
                if prev_epoch_lengths.is_empty() || prev_epoch_lengths.len() != arm_counts.len() {
                    return Err(invalid("need one epoch length and arm count per agent"));
                }
                if prev_epoch_lengths.contains(&0) || arm_counts.contains(&0) {
                    return Err(invalid("epoch lengths and arm counts must be positive"));
                }
                let weighted_arms: f64 = prev_epoch_lengths
                    .iter()
                    .zip(arm_counts)
                    .map(|(&e, &k)| e as f64 * k as f64)
                    .sum();
                let total: f64 = prev_epoch_lengths.iter().map(|&e| e as f64).sum();
                Ok((weighted_arms / (total * excess_risk_proxy)).sqrt())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_boundaries() {
        let s = EpochSchedule::exponential(2, None);
        assert_eq!(s.epoch_end(1).unwrap(), 2);
        assert_eq!(s.epoch_end(3).unwrap(), 8);
        for l in 1..20 {
            assert_eq!(s.epoch_end(l).unwrap(), 1u64 << l);
        }
    }

    #[test]
    fn capped_schedule_matches_summed_lengths() {
        let s = EpochSchedule::exponential(2, Some(4096));
        // Oracle: uncapped lengths 2, 2, 4, ..., 2^{l-1}, clamped at 4096, summed.
        let mut lengths = vec![2u64];
        for l in 2..=20u32 {
            lengths.push((1u64 << (l - 1)).min(4096));
        }
        assert_eq!(s.epoch_length(20).unwrap(), 4096);
        let tau19: u64 = lengths[..19].iter().sum();
        let tau20: u64 = lengths.iter().sum();
        assert_eq!(s.epoch_end(19).unwrap(), tau19);
        assert_eq!(s.epoch_end(20).unwrap(), tau20);
        assert_eq!(tau20, tau19 + 4096);
        assert_eq!(tau20, 36864);
    }

    #[test]
    fn epoch_zero_is_invalid() {
        let s = EpochSchedule::default();
        assert!(s.epoch_end(0).is_err());
        assert!(s.epoch_length(0).is_err());
    }

    #[test]
    fn boundaries_strictly_increase_and_respect_cap() {
        for s in [
            EpochSchedule::exponential(2, Some(100)),
            EpochSchedule::exponential(3, None),
            EpochSchedule { mode: EpochMode::Fixed, base: 7, cap: Some(5) },
        ] {
            let mut prev = 0;
            for l in 1..30 {
                let end = s.epoch_end(l).unwrap();
                assert!(end > prev);
                if let Some(cap) = s.cap {
                    assert!(end - prev <= cap);
                }
                prev = end;
            }
        }
    }

    #[test]
    fn constant_gamma() {
        let g = GammaSchedule::constant(7000.0);
        assert_eq!(g.gamma_for_epoch(3, &[10], &[5], 1.0).unwrap(), 7000.0);
    }

    #[test]
    fn theoretical_gamma_examples() {
        let g = GammaSchedule::theoretical(1.0);
        let gamma = g.gamma_for_epoch(2, &[100], &[10], 0.1).unwrap();
        assert!((gamma - 10.0).abs() < 1e-12);
        let gamma = g.gamma_for_epoch(4, &[3, 9, 27], &[6, 6, 6], 6.0).unwrap();
        assert!((gamma - 1.0).abs() < 1e-12);
        assert!(g.gamma_for_epoch(2, &[100], &[10], 0.0).is_err());
        assert!(g.gamma_for_epoch(1, &[100], &[10], 0.1).is_err());
    }

    #[test]
    fn theoretical_gamma_matches_independent_evaluation() {
        let g = GammaSchedule::theoretical(2.0);
        let lengths = [17u64, 4, 250];
        let arms = [3usize, 11, 5];
        let eps = g.default_excess_risk(&lengths).unwrap();
        assert!((eps - 2.0 / 271.0).abs() < 1e-15);
        let got = g.gamma_for_epoch(5, &lengths, &arms, eps).unwrap();
        let num = 17.0 * 3.0 + 4.0 * 11.0 + 250.0 * 5.0;
        let expected = (num / (271.0 * eps)).sqrt();
        assert!(((got - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn theoretical_gamma_nondecreasing_with_shrinking_risk() {
        let g = GammaSchedule::theoretical(1.0);
        let mut prev = 0.0;
        for l in 2..15usize {
            let lengths = [1u64 << l, 1u64 << l];
            let eps = g.default_excess_risk(&lengths).unwrap();
            let gamma = g.gamma_for_epoch(l, &lengths, &[4, 4], eps).unwrap();
            assert!(gamma > 0.0 && gamma >= prev);
            prev = gamma;
        }
    }
}
