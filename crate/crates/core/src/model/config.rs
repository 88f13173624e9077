use serde::{Deserialize, Serialize};

use crate::autodiff::Dtype;
use crate::dsp::ChannelSet;
use crate::tacton::MODEL_INPUT_LEN;
use crate::{Error, Result};

/// How the recurrent stream is reduced before the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GruOutput {
    /// Last hidden state of the last layer, `gru_hidden` features.
    FinalState,
    /// Every hidden state of the last layer, `steps * gru_hidden` features.
    Flatten,
}

/// One stage of bottleneck residual blocks. The first block of the stage
/// applies `stride` in its 3x3 convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    pub mid: usize,
    pub out: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetSpec {
    pub stem_channels: usize,
    pub stages: Vec<StageSpec>,
}

impl ResNetSpec {
    /// Convolution layers on the main path: stem plus three per block.
    pub fn conv_layers(&self) -> usize {
        1 + 3 * self.stages.iter().map(|s| s.blocks).sum::<usize>()
    }

    pub fn out_channels(&self) -> usize {
        self.stages.last().map_or(self.stem_channels, |s| s.out)
    }

    /// Three stages of one block each (10 conv layers).
    pub fn desk() -> Self {
        Self {
            stem_channels: 16,
            stages: vec![
                StageSpec {
                    blocks: 1,
                    mid: 8,
                    out: 32,
                    stride: 1,
                },
                StageSpec {
                    blocks: 1,
                    mid: 16,
                    out: 64,
                    stride: 2,
                },
                StageSpec {
                    blocks: 1,
                    mid: 32,
                    out: 128,
                    stride: 2,
                },
            ],
        }
    }

    /// Four bottleneck stages of 3, 8, 37 and 3 blocks (154 conv layers).
    pub fn reference() -> Self {
        Self {
            stem_channels: 64,
            stages: vec![
                StageSpec {
                    blocks: 3,
                    mid: 64,
                    out: 256,
                    stride: 1,
                },
                StageSpec {
                    blocks: 8,
                    mid: 128,
                    out: 512,
                    stride: 2,
                },
                StageSpec {
                    blocks: 37,
                    mid: 256,
                    out: 1024,
                    stride: 2,
                },
                StageSpec {
                    blocks: 3,
                    mid: 512,
                    out: 2048,
                    stride: 2,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VibNetConfig {
    pub gru_layers: usize,
    pub gru_hidden: usize,
    pub gru_output: GruOutput,
    /// Waveform samples per recurrent step.
    pub seq_frame: usize,
    /// Padded waveform length the model is sized for.
    pub input_len: usize,
    pub resnet: ResNetSpec,
    /// Hidden widths of the fused head; a final linear map to 3 outputs follows.
    pub head_dims: Vec<usize>,
    pub dropout_p: f64,
    pub channels: ChannelSet,
    pub precision: Dtype,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub seed: u64,
}

impl Default for VibNetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl VibNetConfig {
    pub fn desk() -> Self {
        Self {
            gru_layers: 2,
            gru_hidden: 32,
            gru_output: GruOutput::FinalState,
            seq_frame: 10,
            input_len: MODEL_INPUT_LEN,
            resnet: ResNetSpec::desk(),
            head_dims: vec![128, 128, 16],
            // 0.5 underfits with a few hundred training records.
            dropout_p: 0.2,
            channels: ChannelSet::two_channel(),
            precision: Dtype::F32,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            seed: 7,
        }
    }

    pub fn reference() -> Self {
        Self {
            gru_hidden: 1024,
            resnet: ResNetSpec::reference(),
            head_dims: vec![1024, 128, 16],
            dropout_p: 0.5,
            ..Self::desk()
        }
    }

    /// Smallest useful network, for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            gru_layers: 2,
            gru_hidden: 4,
            resnet: ResNetSpec {
                stem_channels: 4,
                stages: vec![
                    StageSpec {
                        blocks: 1,
                        mid: 2,
                        out: 4,
                        stride: 1,
                    },
                    StageSpec {
                        blocks: 1,
                        mid: 2,
                        out: 6,
                        stride: 2,
                    },
                    StageSpec {
                        blocks: 1,
                        mid: 3,
                        out: 8,
                        stride: 1,
                    },
                ],
            },
            head_dims: vec![8, 4, 16],
            precision: Dtype::F64,
            ..Self::desk()
        }
    }

    pub fn input_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn steps(&self) -> usize {
        self.input_len / self.seq_frame
    }

    pub fn gru_features(&self) -> usize {
        match self.gru_output {
            GruOutput::FinalState => self.gru_hidden,
            GruOutput::Flatten => self.steps() * self.gru_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.gru_layers == 0 || self.gru_hidden == 0 {
            bad.push("gru_layers and gru_hidden must be at least 1".to_string());
        }
        if self.seq_frame == 0 || self.input_len == 0 || self.input_len % self.seq_frame != 0 {
            bad.push(format!(
                "seq_frame {} must divide input_len {}",
                self.seq_frame, self.input_len
            ));
        }
        if self.resnet.stem_channels == 0 {
            bad.push("stem_channels must be at least 1".into());
        }
        for (i, s) in self.resnet.stages.iter().enumerate() {
            if s.blocks == 0 || s.mid == 0 || s.out == 0 || s.stride == 0 {
                bad.push(format!("stage {i} has a zero dimension"));
            }
        }
        if self.head_dims.contains(&0) {
            bad.push("head_dims must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            bad.push(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if ![1, 2, 4].contains(&self.input_channels()) {
            bad.push(format!("input_channels {} not in {{1, 2, 4}}", self.input_channels()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            bad.push("batchnorm momentum must be in [0, 1] and eps positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}
