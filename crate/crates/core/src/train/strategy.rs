//! Staged training strategies: which epochs run with augmentation and with
//! the uncertainty loss.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// The four training strategies. `&` marks a resumed stage, `+` simultaneous
/// use: the baseline, baseline with augmentation from scratch, baseline
/// resumed with the uncertainty predictor at the uncertainty epoch, and the
/// latter with augmentation added at the augmentation epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingStrategy {
    #[serde(rename = "B")]
    Baseline,
    #[serde(rename = "B+D")]
    BaselineAug,
    #[serde(rename = "B&U")]
    BaselineUnc,
    #[serde(rename = "B&U&(U+D)")]
    BaselineUncAug,
}

pub const STRATEGY_NAMES: [&str; 4] = ["B", "B+D", "B&U", "B&U&(U+D)"];

impl FromStr for TrainingStrategy {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "B" | "b" => Ok(TrainingStrategy::Baseline),
            "B+D" | "bd" => Ok(TrainingStrategy::BaselineAug),
            "B&U" | "bu" => Ok(TrainingStrategy::BaselineUnc),
            "B&U&(U+D)" | "bud" => Ok(TrainingStrategy::BaselineUncAug),
            other => Err(TrainError::UnknownStrategy(other.to_string())),
        }
    }
}

impl fmt::Display for TrainingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TrainingStrategy::Baseline => "B",
            TrainingStrategy::BaselineAug => "B+D",
            TrainingStrategy::BaselineUnc => "B&U",
            TrainingStrategy::BaselineUncAug => "B&U&(U+D)",
        };
        write!(f, "{name}")
    }
}

/// Epoch thresholds for the staged strategies. The literal values come from
/// 200-epoch full-scale runs; `scale` rescales them proportionally to the
/// requested epoch count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScheduleConfig {
    pub uncertainty_epoch: usize,
    pub augment_epoch: usize,
    /// The epoch count the literal thresholds were calibrated for.
    pub reference_epochs: usize,
    pub scale: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            uncertainty_epoch: 20,
            augment_epoch: 80,
            reference_epochs: 200,
            scale: false,
        }
    }
}

impl ScheduleConfig {
    fn threshold(&self, literal: usize, total_epochs: usize) -> usize {
        if self.scale {
            ((literal as f64 / self.reference_epochs as f64) * total_epochs as f64).round()
                as usize
        } else {
            literal
        }
    }
}

/// Flags active during one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub augment_on: bool,
    pub uncertainty_on: bool,
}

impl TrainingStrategy {
    /// Flag schedule: the baseline never enables either; augmentation-from-
    /// scratch enables augmentation at epoch 0; the resumed-uncertainty
    /// strategy enables the uncertainty loss at the uncertainty epoch; the
    /// combined strategy additionally enables augmentation at the
    /// augmentation epoch.
    pub fn flags_at(&self, epoch: usize, total_epochs: usize, schedule: &ScheduleConfig) -> Flags {
        let unc_at = schedule.threshold(schedule.uncertainty_epoch, total_epochs);
        let aug_at = schedule.threshold(schedule.augment_epoch, total_epochs);
        match self {
            TrainingStrategy::Baseline => Flags { augment_on: false, uncertainty_on: false },
            TrainingStrategy::BaselineAug => Flags { augment_on: true, uncertainty_on: false },
            TrainingStrategy::BaselineUnc => {
                Flags { augment_on: false, uncertainty_on: epoch >= unc_at }
            }
            TrainingStrategy::BaselineUncAug => Flags {
                augment_on: epoch >= aug_at,
                uncertainty_on: epoch >= unc_at,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_never_raises_flags() {
        let s = ScheduleConfig::default();
        for epoch in 0..200 {
            let f = TrainingStrategy::Baseline.flags_at(epoch, 200, &s);
            assert!(!f.augment_on && !f.uncertainty_on);
        }
    }

    #[test]
    fn augmented_baseline_starts_at_epoch_zero() {
        let s = ScheduleConfig::default();
        let f = TrainingStrategy::BaselineAug.flags_at(0, 200, &s);
        assert!(f.augment_on && !f.uncertainty_on);
    }

    #[test]
    fn resumed_uncertainty_activates_at_twenty() {
        let s = ScheduleConfig::default();
        for epoch in 0..25 {
            let f = TrainingStrategy::BaselineUnc.flags_at(epoch, 25, &s);
            assert_eq!(f.uncertainty_on, epoch >= 20, "epoch {epoch}");
            assert!(!f.augment_on);
        }
    }

    #[test]
    fn combined_strategy_flips_augment_at_eighty() {
        let s = ScheduleConfig::default();
        let mut first_unc = None;
        let mut first_aug = None;
        for epoch in 0..100 {
            let f = TrainingStrategy::BaselineUncAug.flags_at(epoch, 100, &s);
            if f.uncertainty_on && first_unc.is_none() {
                first_unc = Some(epoch);
            }
            if f.augment_on && first_aug.is_none() {
                first_aug = Some(epoch);
            }
        }
        assert_eq!(first_unc, Some(20));
        assert_eq!(first_aug, Some(80));
    }

    #[test]
    fn scaled_schedule_is_proportional() {
        let s = ScheduleConfig { scale: true, ..ScheduleConfig::default() };
        // 40 epochs: 20/200 -> 4, 80/200 -> 16.
        let f = TrainingStrategy::BaselineUncAug.flags_at(3, 40, &s);
        assert!(!f.uncertainty_on);
        let f = TrainingStrategy::BaselineUncAug.flags_at(4, 40, &s);
        assert!(f.uncertainty_on && !f.augment_on);
        let f = TrainingStrategy::BaselineUncAug.flags_at(16, 40, &s);
        assert!(f.augment_on);
    }

    #[test]
    fn names_and_aliases_parse() {
        for (name, alias, expect) in [
            ("B", "b", TrainingStrategy::Baseline),
            ("B+D", "bd", TrainingStrategy::BaselineAug),
            ("B&U", "bu", TrainingStrategy::BaselineUnc),
            ("B&U&(U+D)", "bud", TrainingStrategy::BaselineUncAug),
        ] {
            assert_eq!(name.parse::<TrainingStrategy>().unwrap(), expect);
            assert_eq!(alias.parse::<TrainingStrategy>().unwrap(), expect);
            assert_eq!(expect.to_string(), name);
        }
        assert!(matches!(
            "B&X".parse::<TrainingStrategy>(),
            Err(TrainError::UnknownStrategy(_))
        ));
    }
}
