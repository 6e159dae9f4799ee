//! Layer tables for the two supported backbones.
//!
//! Tensor names follow the torchvision `state_dict` naming of the same
//! models, and descriptors are emitted in `state_dict` order, so an exporter
//! can copy parameters across without a renaming table.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvSpec};

/// Supported backbone architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    MobileNetV3Small,
    ResNet34,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::MobileNetV3Small, Architecture::ResNet34];

    pub fn id(self) -> &'static str {
        match self {
            Architecture::MobileNetV3Small => "mobilenet_v3_small",
            Architecture::ResNet34 => "resnet34",
        }
    }

    /// Batch-norm epsilon the pretrained weights were trained with.
    pub fn bn_epsilon(self) -> f32 {
        match self {
            Architecture::MobileNetV3Small => 1e-3,
            Architecture::ResNet34 => 1e-5,
        }
    }

    pub(crate) fn describe(self) -> Vec<NodeDesc> {
        match self {
            Architecture::MobileNetV3Small => mobilenet_v3_small(),
            Architecture::ResNet34 => resnet34(),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mobilenet_v3_small" | "mobilenet" => Ok(Architecture::MobileNetV3Small),
            "resnet34" | "resnet" => Ok(Architecture::ResNet34),
            other => Err(Error::usage(format!(
                "unknown architecture `{other}` (expected mobilenet_v3_small or resnet34)"
            ))),
        }
    }
}

/// A convolution, optionally followed by batch norm and an activation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvDesc {
    pub conv: String,
    pub bn: Option<String>,
    pub spec: ConvSpec,
    pub bias: bool,
    pub act: Option<Activation>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SqueezeDesc {
    pub name: String,
    pub channels: usize,
    pub squeeze: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NodeDesc {
    Conv(ConvDesc),
    MaxPool {
        name: String,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Two 3x3 convolutions plus a shortcut; ReLU after the addition.
    BasicBlock {
        name: String,
        conv1: ConvDesc,
        conv2: ConvDesc,
        downsample: Option<ConvDesc>,
    },
    /// Expand (1x1) -> depthwise -> optional squeeze-excite -> project (1x1).
    InvertedResidual {
        name: String,
        expand: Option<ConvDesc>,
        depthwise: ConvDesc,
        se: Option<SqueezeDesc>,
        project: ConvDesc,
        residual: bool,
    },
    GlobalAvgPool {
        name: String,
    },
    Linear {
        name: String,
        in_features: usize,
        out_features: usize,
        act: Option<Activation>,
    },
}

/// Parameter tensors a descriptor list needs, in `state_dict` order.
pub(crate) fn tensor_shapes(nodes: &[NodeDesc]) -> Vec<(String, Vec<usize>)> {
    fn conv(out: &mut Vec<(String, Vec<usize>)>, c: &ConvDesc) {
        out.push((format!("{}.weight", c.conv), c.spec.weight_shape().to_vec()));
        if c.bias {
            out.push((format!("{}.bias", c.conv), vec![c.spec.out_channels]));
        }
        if let Some(bn) = &c.bn {
            for field in ["weight", "bias", "running_mean", "running_var"] {
                out.push((format!("{bn}.{field}"), vec![c.spec.out_channels]));
            }
        }
    }
    let mut out = Vec::new();
    for node in nodes {
        match node {
            NodeDesc::Conv(c) => conv(&mut out, c),
            NodeDesc::BasicBlock {
                conv1,
                conv2,
                downsample,
                ..
            } => {
                conv(&mut out, conv1);
                conv(&mut out, conv2);
                if let Some(d) = downsample {
                    conv(&mut out, d);
                }
            }
            NodeDesc::InvertedResidual {
                expand,
                depthwise,
                se,
                project,
                ..
            } => {
                if let Some(e) = expand {
                    conv(&mut out, e);
                }
                conv(&mut out, depthwise);
                if let Some(se) = se {
                    out.push((format!("{}.fc1.weight", se.name), vec![se.squeeze, se.channels, 1, 1]));
                    out.push((format!("{}.fc1.bias", se.name), vec![se.squeeze]));
                    out.push((format!("{}.fc2.weight", se.name), vec![se.channels, se.squeeze, 1, 1]));
                    out.push((format!("{}.fc2.bias", se.name), vec![se.channels]));
                }
                conv(&mut out, project);
            }
            NodeDesc::Linear {
                name,
                in_features,
                out_features,
                ..
            } => {
                out.push((format!("{name}.weight"), vec![*out_features, *in_features]));
                out.push((format!("{name}.bias"), vec![*out_features]));
            }
            NodeDesc::MaxPool { .. } | NodeDesc::GlobalAvgPool { .. } => {}
        }
    }
    out
}

/// Rounds `v` to a multiple of `divisor`, never dropping more than 10%.
fn make_divisible(v: usize, divisor: usize) -> usize {
    let rounded = ((v + divisor / 2) / divisor * divisor).max(divisor);
    if (rounded as f64) < 0.9 * v as f64 {
        rounded + divisor
    } else {
        rounded
    }
}

fn conv_bn(prefix: &str, spec: ConvSpec, act: Option<Activation>) -> ConvDesc {
    ConvDesc {
        conv: format!("{prefix}.0"),
        bn: Some(format!("{prefix}.1")),
        spec,
        bias: false,
        act,
    }
}

/// One inverted-residual row: input channels, kernel, expanded channels,
/// output channels, squeeze-excite, activation, stride.
struct Bneck(usize, usize, usize, usize, bool, Activation, usize);

/// MobileNetV3-Small, Howard et al. 2019 ("Searching for MobileNetV3"),
/// Table 2. Input resolution noted per row at 224x224.
const MOBILENET_V3_SMALL_BNECKS: [Bneck; 11] = {
    use Activation::{HardSwish as HS, Relu as RE};
    [
        Bneck(16, 3, 16, 16, true, RE, 2),    // 112^2 x 16, bneck 3x3
        Bneck(16, 3, 72, 24, false, RE, 2),   // 56^2 x 16, bneck 3x3
        Bneck(24, 3, 88, 24, false, RE, 1),   // 28^2 x 24, bneck 3x3
        Bneck(24, 5, 96, 40, true, HS, 2),    // 28^2 x 24, bneck 5x5
        Bneck(40, 5, 240, 40, true, HS, 1),   // 14^2 x 40, bneck 5x5
        Bneck(40, 5, 240, 40, true, HS, 1),   // 14^2 x 40, bneck 5x5
        Bneck(40, 5, 120, 48, true, HS, 1),   // 14^2 x 40, bneck 5x5
        Bneck(48, 5, 144, 48, true, HS, 1),   // 14^2 x 48, bneck 5x5
        Bneck(48, 5, 288, 96, true, HS, 2),   // 14^2 x 48, bneck 5x5
        Bneck(96, 5, 576, 96, true, HS, 1),   // 7^2 x 96, bneck 5x5
        Bneck(96, 5, 576, 96, true, HS, 1),   // 7^2 x 96, bneck 5x5
    ]
};

fn mobilenet_v3_small() -> Vec<NodeDesc> {
    let mut nodes = Vec::new();
    // 224^2 x 3, conv2d 3x3, 16, HS, s2
    nodes.push(NodeDesc::Conv(conv_bn(
        "features.0",
        ConvSpec::new(3, 16, 3, 2, 1),
        Some(Activation::HardSwish),
    )));
    for (i, &Bneck(cin, k, exp, cout, se, act, stride)) in MOBILENET_V3_SMALL_BNECKS.iter().enumerate() {
        let name = format!("features.{}", i + 1);
        let mut j = 0;
        let mut next = || {
            let p = format!("{name}.block.{j}");
            j += 1;
            p
        };
        let expand = (exp != cin).then(|| conv_bn(&next(), ConvSpec::new(cin, exp, 1, 1, 0), Some(act)));
        let depthwise = conv_bn(
            &next(),
            ConvSpec::new(exp, exp, k, stride, (k - 1) / 2).with_groups(exp),
            Some(act),
        );
        let se = se.then(|| SqueezeDesc {
            name: next(),
            channels: exp,
            squeeze: make_divisible(exp / 4, 8),
        });
        let project = conv_bn(&next(), ConvSpec::new(exp, cout, 1, 1, 0), None);
        nodes.push(NodeDesc::InvertedResidual {
            residual: stride == 1 && cin == cout,
            name,
            expand,
            depthwise,
            se,
            project,
        });
    }
    // 7^2 x 96, conv2d 1x1, 576, SE-free, HS
    nodes.push(NodeDesc::Conv(conv_bn(
        "features.12",
        ConvSpec::new(96, 576, 1, 1, 0),
        Some(Activation::HardSwish),
    )));
    // 7^2 x 576, pool 7x7
    nodes.push(NodeDesc::GlobalAvgPool { name: "avgpool".into() });
    // 1^2 x 576, 1024 with HS; dropout is the identity at inference
    nodes.push(NodeDesc::Linear {
        name: "classifier.0".into(),
        in_features: 576,
        out_features: 1024,
        act: Some(Activation::HardSwish),
    });
    // 1^2 x 1024, 1000-way ImageNet classifier
    nodes.push(NodeDesc::Linear {
        name: "classifier.3".into(),
        in_features: 1024,
        out_features: 1000,
        act: None,
    });
    nodes
}

/// ResNet34 stages, He et al. 2016 ("Deep Residual Learning for Image
/// Recognition"), Table 1, 34-layer column: (blocks, width, first stride).
const RESNET34_STAGES: [(usize, usize, usize); 4] = [
    (3, 64, 1),  // conv2_x: [3x3, 64] x 3, 56x56
    (4, 128, 2), // conv3_x: [3x3, 128] x 4, 28x28
    (6, 256, 2), // conv4_x: [3x3, 256] x 6, 14x14
    (3, 512, 2), // conv5_x: [3x3, 512] x 3, 7x7
];

fn resnet34() -> Vec<NodeDesc> {
    let plain = |conv: String, bn: String, spec: ConvSpec, act: Option<Activation>| ConvDesc {
        conv,
        bn: Some(bn),
        spec,
        bias: false,
        act,
    };
    let mut nodes = Vec::new();
    // conv1: 7x7, 64, stride 2
    nodes.push(NodeDesc::Conv(plain(
        "conv1".into(),
        "bn1".into(),
        ConvSpec::new(3, 64, 7, 2, 3),
        Some(Activation::Relu),
    )));
    // 3x3 max pool, stride 2
    nodes.push(NodeDesc::MaxPool {
        name: "maxpool".into(),
        kernel: 3,
        stride: 2,
        padding: 1,
    });
    let mut cin = 64;
    for (stage, &(blocks, width, first_stride)) in RESNET34_STAGES.iter().enumerate() {
        for b in 0..blocks {
            let name = format!("layer{}.{b}", stage + 1);
            let stride = if b == 0 { first_stride } else { 1 };
            let conv1 = plain(
                format!("{name}.conv1"),
                format!("{name}.bn1"),
                ConvSpec::new(cin, width, 3, stride, 1),
                Some(Activation::Relu),
            );
            let conv2 = plain(
                format!("{name}.conv2"),
                format!("{name}.bn2"),
                ConvSpec::new(width, width, 3, 1, 1),
                None,
            );
            let downsample = (stride != 1 || cin != width).then(|| {
                plain(
                    format!("{name}.downsample.0"),
                    format!("{name}.downsample.1"),
                    ConvSpec::new(cin, width, 1, stride, 0),
                    None,
                )
            });
            nodes.push(NodeDesc::BasicBlock {
                name,
                conv1,
                conv2,
                downsample,
            });
            cin = width;
        }
    }
    nodes.push(NodeDesc::GlobalAvgPool { name: "avgpool".into() });
    // 1000-d fc
    nodes.push(NodeDesc::Linear {
        name: "fc".into(),
        in_features: 512,
        out_features: 1000,
        act: None,
    });
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squeeze_widths() {
        let widths: Vec<usize> = [16, 96, 240, 120, 144, 288, 576]
            .iter()
            .map(|&c| make_divisible(c / 4, 8))
            .collect();
        assert_eq!(widths, [8, 24, 64, 32, 40, 72, 144]);
    }

    #[test]
    fn parse_ids() {
        for arch in Architecture::ALL {
            assert_eq!(arch.id().parse::<Architecture>().unwrap(), arch);
        }
        assert!("vgg16".parse::<Architecture>().is_err());
    }

    #[test]
    fn resnet_has_sixteen_blocks_three_downsamples() {
        let nodes = resnet34();
        let blocks: Vec<_> = nodes
            .iter()
            .filter_map(|n| match n {
                NodeDesc::BasicBlock { downsample, .. } => Some(downsample.is_some()),
                _ => None,
            })
            .collect();
        assert_eq!(blocks.len(), 16);
        assert_eq!(blocks.iter().filter(|d| **d).count(), 3);
    }
}
