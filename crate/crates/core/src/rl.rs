//! Reference advantage estimators and the clipped surrogate objective.
//!
//! These are plain scalar implementations meant for comparison tooling and
//! tests; nothing here touches a policy or an optimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("group normalisation needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} must be finite (index {index})")]
    NonFinite { what: &'static str, index: usize },
    #[error("importance ratio at index {index} must be positive, got {value}")]
    NonPositiveRatio { index: usize, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfUnitRange { name: &'static str, value: f64 },
    #[error("invalid clip range: {0}")]
    InvalidClip(String),
    #[error("empty input")]
    Empty,
}

fn check_finite(what: &'static str, xs: &[f64]) -> Result<(), RlError> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(RlError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Per-trajectory (GRPO) or per-step (GAE) advantages. Always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdvantageVector(Vec<f64>);

impl AdvantageVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Repeats each trajectory-level value over that trajectory's tokens.
    pub fn broadcast(&self, token_counts: &[usize]) -> Result<Vec<Vec<f64>>, RlError> {
        if token_counts.len() != self.0.len() {
            return Err(RlError::LengthMismatch {
                what: "token_counts",
                expected: self.0.len(),
                found: token_counts.len(),
            });
        }
        Ok(self.0.iter().zip(token_counts).map(|(&a, &n)| vec![a; n]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub advantages: AdvantageVector,
    /// Set when every reward in the group was equal; the advantages are then
    /// all zero.
    pub degenerate: bool,
}

/// Group-normalised advantages `(R_i - mean) / std` with the population
/// standard deviation.
pub fn grpo_advantages(rewards: &[f64]) -> Result<GroupAdvantages, RlError> {
    if rewards.len() < 2 {
        return Err(RlError::GroupTooSmall(rewards.len()));
    }
    check_finite("rewards", rewards)?;
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 || rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(GroupAdvantages {
            advantages: AdvantageVector(vec![0.0; rewards.len()]),
            degenerate: true,
        });
    }
    Ok(GroupAdvantages {
        advantages: AdvantageVector(rewards.iter().map(|r| (r - mean) / std).collect()),
        degenerate: false,
    })
}

/// Generalized advantage estimation by the backward recursion
/// `A_t = delta_t + gamma * lambda * A_{t+1}` with
/// `delta_t = r_t + gamma * V_{t+1} - V_t`.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap
/// value of the state after the final step (0 for a terminal state).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<AdvantageVector, RlError> {
    if values.len() != rewards.len() + 1 {
        return Err(RlError::LengthMismatch {
            what: "values",
            expected: rewards.len() + 1,
            found: values.len(),
        });
    }
    for (name, value) in [("gamma", gamma), ("lambda", lambda)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(RlError::OutOfUnitRange { name, value });
        }
    }
    check_finite("rewards", rewards)?;
    check_finite("values", values)?;
    let mut out = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        out[t] = running;
    }
    check_finite("advantages", &out)?;
    Ok(AdvantageVector(out))
}

/// Asymmetric clip range `[1 - eps_low, 1 + eps_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_high: 0.28,
        }
    }
}

impl ClipConfig {
    pub fn symmetric(eps: f64) -> Self {
        Self {
            eps_low: eps,
            eps_high: eps,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.eps_low >= 0.0 && self.eps_high >= 0.0) {
            return Err(RlError::InvalidClip(format!(
                "eps_low and eps_high must be non-negative, got {} / {}",
                self.eps_low, self.eps_high
            )));
        }
        if 1.0 - self.eps_low <= 0.0 {
            return Err(RlError::InvalidClip(format!(
                "1 - eps_low must be positive, got eps_low = {}",
                self.eps_low
            )));
        }
        Ok(())
    }
}

/// Mean of `min(r * A, clip(r, 1 - eps_low, 1 + eps_high) * A)`.
pub fn clipped_surrogate(ratios: &[f64], advantages: &[f64], cfg: &ClipConfig) -> Result<f64, RlError> {
    cfg.validate()?;
    if ratios.len() != advantages.len() {
        return Err(RlError::LengthMismatch {
            what: "advantages",
            expected: ratios.len(),
            found: advantages.len(),
        });
    }
    if ratios.is_empty() {
        return Err(RlError::Empty);
    }
    check_finite("ratios", ratios)?;
    check_finite("advantages", advantages)?;
    if let Some(index) = ratios.iter().position(|&r| r <= 0.0) {
        return Err(RlError::NonPositiveRatio {
            index,
            value: ratios[index],
        });
    }
    let (lo, hi) = (1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(lo, hi) * a))
        .sum();
    Ok(total / ratios.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit sum `sum_l (gamma lambda)^l delta_{t+l}`, computed forward.
    fn gae_double_sum(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
        let n = rewards.len();
        let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * values[t + 1] - values[t]).collect();
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut w = 1.0;
                for d in &delta[t..] {
                    acc += w * d;
                    w *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn grpo_examples() {
        let a = grpo_advantages(&[1.0, 0.0]).unwrap();
        assert!(!a.degenerate);
        assert_eq!(a.advantages.values(), &[1.0, -1.0]);

        let a = grpo_advantages(&[1.0; 4]).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.advantages.values(), &[0.0; 4]);

        // mean 1/4, population std sqrt(3)/4
        let a = grpo_advantages(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let std = 3f64.sqrt() / 4.0;
        let expect = [0.75 / std, -0.25 / std, -0.25 / std, -0.25 / std];
        for (got, want) in a.advantages.values().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((a.advantages.values()[0] - 1.7321).abs() < 5e-5);
        assert!((a.advantages.values()[1] + 0.5774).abs() < 5e-5);

        assert_eq!(grpo_advantages(&[1.0]), Err(RlError::GroupTooSmall(1)));
        assert!(matches!(
            grpo_advantages(&[1.0, f64::NAN]),
            Err(RlError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn broadcast_gives_identical_token_advantages() {
        let a = grpo_advantages(&[1.0, 0.0, 0.0]).unwrap().advantages;
        let tokens = a.broadcast(&[3, 5, 1]).unwrap();
        for (row, &v) in tokens.iter().zip(a.values()) {
            assert!(row.iter().all(|&x| x == v));
        }
        assert_eq!(tokens[1].len(), 5);
        assert!(a.broadcast(&[1]).is_err());
    }

    #[test]
    fn gae_examples() {
        let a = gae(&[0.0, 0.0, 1.0], &[0.0; 4], 1.0, 1.0).unwrap();
        assert_eq!(a.values(), &[1.0, 1.0, 1.0]);

        let rewards = [0.3, -1.0, 2.0];
        let values = [0.5, 0.1, -0.4, 0.7];
        let a = gae(&rewards, &values, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert_eq!(a.values()[t], rewards[t] + 0.9 * values[t + 1] - values[t]);
        }

        let a = gae(&[0.0, 1.0], &[0.5, 0.2, 0.0], 0.9, 0.95).unwrap();
        let b = gae_double_sum(&[0.0, 1.0], &[0.5, 0.2, 0.0], 0.9, 0.95);
        for (x, y) in a.values().iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // delta_1 = 1 - 0.2 = 0.8; delta_0 = 0.9 * 0.2 - 0.5 = -0.32
        assert!((a.values()[1] - 0.8).abs() < 1e-12);
        assert!((a.values()[0] - (-0.32 + 0.855 * 0.8)).abs() < 1e-12);

        assert!(matches!(
            gae(&[1.0], &[0.0], 1.0, 1.0),
            Err(RlError::LengthMismatch { .. })
        ));
        assert!(matches!(
            gae(&[1.0], &[0.0, 0.0], 1.1, 1.0),
            Err(RlError::OutOfUnitRange { name: "gamma", .. })
        ));
    }

    #[test]
    fn surrogate_examples() {
        let cfg = ClipConfig::default();
        assert_eq!(clipped_surrogate(&[1.0], &[1.0], &cfg), Ok(1.0));
        assert_eq!(clipped_surrogate(&[2.0], &[1.0], &cfg), Ok(1.28));
        assert_eq!(clipped_surrogate(&[0.5], &[-1.0], &cfg), Ok(-0.8));
        assert_eq!(
            clipped_surrogate(&[2.0, 1.0, 0.5], &[1.0, 1.0, -1.0], &cfg).unwrap(),
            (1.28 + 1.0 - 0.8) / 3.0
        );
        assert!(matches!(
            clipped_surrogate(&[0.0], &[1.0], &cfg),
            Err(RlError::NonPositiveRatio { .. })
        ));
        assert!(matches!(
            clipped_surrogate(&[1.0, 1.0], &[1.0], &cfg),
            Err(RlError::LengthMismatch { .. })
        ));
        assert!(ClipConfig::symmetric(1.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn grpo_is_standardised(rewards in proptest::collection::vec(-10.0f64..10.0, 2..32)) {
            let out = grpo_advantages(&rewards).unwrap();
            prop_assume!(!out.degenerate);
            let v = out.advantages.values();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-9);
        }

        #[test]
        fn gae_matches_double_sum(
            rewards in proptest::collection::vec(-1.0f64..1.0, 1..64),
            seed_values in proptest::collection::vec(-1.0f64..1.0, 65),
            gamma in 0.0f64..=1.0, lambda in 0.0f64..=1.0,
        ) {
            let values = &seed_values[..rewards.len() + 1];
            let a = gae(&rewards, values, gamma, lambda).unwrap();
            let b = gae_double_sum(&rewards, values, gamma, lambda);
            for (x, y) in a.values().iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn shrinking_eps_never_raises_clipped_positive_gains(
            eps_hi in 0.0f64..1.0, shrink in 0.0f64..1.0, adv in 0.01f64..5.0, excess in 0.0f64..3.0,
        ) {
            let ratio = 1.0 + eps_hi + excess + 1e-9;
            let wide = ClipConfig { eps_low: 0.2, eps_high: eps_hi };
            let narrow = ClipConfig { eps_low: 0.2, eps_high: eps_hi * shrink };
            let w = clipped_surrogate(&[ratio], &[adv], &wide).unwrap();
            let n = clipped_surrogate(&[ratio], &[adv], &narrow).unwrap();
            prop_assert!(n <= w);
        }
    }
}
