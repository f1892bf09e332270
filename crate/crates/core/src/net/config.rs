use ecg_unc_autodiff::{conv1d_output_len, Conv1dSpec};
use serde::{Deserialize, Serialize};

use super::NetError;

pub const STAGE_COUNT: usize = 7;

/// Rational multiplier applied to every stage width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthScale {
    pub num: usize,
    pub den: usize,
}

impl WidthScale {
    pub const ONE: WidthScale = WidthScale { num: 1, den: 1 };

    pub fn new(num: usize, den: usize) -> Self {
        WidthScale { num, den }
    }

    fn apply(&self, channels: usize) -> Option<usize> {
        let scaled = channels * self.num;
        (self.den > 0 && scaled.is_multiple_of(self.den)).then_some(scaled / self.den)
    }
}

/// Hyper-parameters of the residual bottleneck network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub blocks_per_stage: Vec<usize>,
    pub stage_channels: Vec<usize>,
    pub kernel_size: usize,
    pub groups: usize,
    pub dropout_p: f64,
    pub se_reduction: usize,
    pub num_classes: usize,
    pub input_leads: usize,
    pub input_length: usize,
    pub width_scale: WidthScale,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl NetworkConfig {
    /// Full-size network: 7 stages of 2,2,2,3,3,4,4 blocks on 12 x 5000 input.
    pub fn paper() -> Self {
        NetworkConfig {
            blocks_per_stage: vec![2, 2, 2, 3, 3, 4, 4],
            stage_channels: vec![64, 160, 160, 400, 400, 1024, 1024],
            kernel_size: 16,
            groups: 16,
            dropout_p: 0.1,
            se_reduction: 4,
            num_classes: 9,
            input_leads: 12,
            input_length: 5000,
            width_scale: WidthScale::ONE,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }

    /// Laptop-sized variant: quarter width, one block per stage, 1000-sample input.
    pub fn desk() -> Self {
        NetworkConfig {
            blocks_per_stage: vec![1; STAGE_COUNT],
            groups: 4,
            input_length: 1000,
            width_scale: WidthScale::new(1, 4),
            ..Self::paper()
        }
    }

    pub fn scaled_channels(&self) -> Result<Vec<usize>, NetError> {
        self.stage_channels
            .iter()
            .enumerate()
            .map(|(stage, &c)| {
                self.width_scale
                    .apply(c)
                    .filter(|&s| s > 0)
                    .ok_or_else(|| NetError::InvalidConfig {
                        stage: Some(stage + 1),
                        reason: format!(
                            "width {c} scaled by {}/{} is not a positive integer",
                            self.width_scale.num, self.width_scale.den
                        ),
                    })
            })
            .collect()
    }

    /// Inner width of a bottleneck: half the stage width, rounded to a multiple of `groups`.
    pub fn bottleneck_width(&self, channels: usize) -> usize {
        let half = channels / 2;
        let g = self.groups.max(1);
        (((half + g / 2) / g) * g).max(g)
    }

    pub fn se_width(&self, channels: usize) -> usize {
        channels / self.se_reduction
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let invalid = |stage: Option<usize>, reason: String| Err(NetError::InvalidConfig { stage, reason });
        if self.blocks_per_stage.len() != STAGE_COUNT || self.stage_channels.len() != STAGE_COUNT {
            return invalid(
                None,
                format!(
                    "expected {STAGE_COUNT} stages, got {} block counts and {} widths",
                    self.blocks_per_stage.len(),
                    self.stage_channels.len()
                ),
            );
        }
        if self.kernel_size == 0 || self.groups == 0 || self.se_reduction == 0 {
            return invalid(None, "kernel_size, groups and se_reduction must be positive".into());
        }
        if self.num_classes < 2 || self.input_leads == 0 || self.input_length == 0 {
            return invalid(
                None,
                "need at least 2 classes, 1 lead and a positive input length".into(),
            );
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return invalid(None, format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if !(self.bn_epsilon > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return invalid(None, "bn_epsilon must be positive and bn_momentum in [0, 1]".into());
        }
        let channels = self.scaled_channels()?;
        for (stage, (&c, &blocks)) in channels.iter().zip(&self.blocks_per_stage).enumerate() {
            let stage = Some(stage + 1);
            if blocks == 0 {
                return invalid(stage, "stage has no blocks".into());
            }
            if c % self.groups != 0 {
                return invalid(stage, format!("width {c} not divisible by groups {}", self.groups));
            }
            if c % self.se_reduction != 0 {
                return invalid(
                    stage,
                    format!("width {c} not divisible by se_reduction {}", self.se_reduction),
                );
            }
        }
        let lengths = self.stage_output_shapes()?;
        if lengths.last().map(|s| s.1) == Some(0) {
            return invalid(Some(STAGE_COUNT), "input too short for seven halvings".into());
        }
        Ok(())
    }

    /// `(channels, length)` after each stage, computed without building weights.
    pub fn stage_output_shapes(&self) -> Result<Vec<(usize, usize)>, NetError> {
        let channels = self.scaled_channels()?;
        let down = Conv1dSpec::same(self.kernel_size, 2, 1);
        let mut len = self.input_length;
        let mut shapes = Vec::with_capacity(STAGE_COUNT);
        for (stage, &c) in channels.iter().enumerate() {
            len = conv1d_output_len(len, self.kernel_size, &down).ok_or_else(|| NetError::InvalidConfig {
                stage: Some(stage + 1),
                reason: format!("length {len} too short for kernel {}", self.kernel_size),
            })?;
            if len == 0 {
                return Err(NetError::InvalidConfig {
                    stage: Some(stage + 1),
                    reason: "length collapsed to zero".into(),
                });
            }
            shapes.push((c, len));
        }
        Ok(shapes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shapes_match_table() {
        let shapes = NetworkConfig::paper().stage_output_shapes().unwrap();
        assert_eq!(
            shapes,
            vec![
                (64, 2500),
                (160, 1250),
                (160, 625),
                (400, 312),
                (400, 156),
                (1024, 78),
                (1024, 39)
            ]
        );
    }

    #[test]
    fn quarter_width_single_block_shapes() {
        let cfg = NetworkConfig {
            width_scale: WidthScale::new(1, 4),
            blocks_per_stage: vec![1; 7],
            input_length: 1000,
            groups: 4,
            ..NetworkConfig::paper()
        };
        cfg.validate().unwrap();
        let shapes = cfg.stage_output_shapes().unwrap();
        assert_eq!(shapes.last(), Some(&(256, 7)));
    }

    #[test]
    fn divisibility_errors_name_the_stage() {
        let cfg = NetworkConfig {
            width_scale: WidthScale::new(1, 4),
            ..NetworkConfig::paper()
        };
        match cfg.validate().unwrap_err() {
            NetError::InvalidConfig { stage, reason } => {
                assert_eq!(stage, Some(2));
                assert!(reason.contains("groups"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let cfg = NetworkConfig {
            blocks_per_stage: vec![1; 6],
            ..NetworkConfig::paper()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bottleneck_widths_are_group_multiples() {
        let cfg = NetworkConfig::paper();
        assert_eq!(cfg.bottleneck_width(64), 32);
        assert_eq!(cfg.bottleneck_width(160), 80);
        assert_eq!(cfg.bottleneck_width(400), 208);
        assert_eq!(cfg.bottleneck_width(1024), 512);
        cfg.validate().unwrap();
        NetworkConfig::desk().validate().unwrap();
    }
}
