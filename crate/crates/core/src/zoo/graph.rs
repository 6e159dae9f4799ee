use crate::error::{Error, Result};
use crate::nn::{
    conv2d, fold_batchnorm, global_avg_pool, linear, max_pool2d, Activation, ConvSpec, MacCount,
};
use crate::tensor::Tensor;
use crate::weights::WeightStore;
use crate::zoo::arch::{tensor_shapes, ConvDesc, NodeDesc, SqueezeDesc};
use crate::zoo::macs::{
    conv_aux_ops, linear_aux_ops, squeeze_aux_ops, LayerKind, MacReport, MacRow,
};
use crate::zoo::Architecture;

/// Input shape accepted by [`ModelGraph::forward`].
pub const INPUT_SHAPE: [usize; 3] = [3, 224, 224];
/// Width of the backbone output the head consumes.
pub const FEATURE_DIM: usize = 1000;
/// Number of head outputs: no calculus, calculus.
pub const NUM_CLASSES: usize = 2;
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

#[derive(Debug, Clone)]
struct BoundConv {
    desc: ConvDesc,
    weight: Tensor,
    bias: Option<Tensor>,
}

impl BoundConv {
    fn bind(desc: &ConvDesc, store: &WeightStore, bn_eps: f32) -> Result<Self> {
        let weight = require_shape(store, &format!("{}.weight", desc.conv), &desc.spec.weight_shape())?;
        let bias = if desc.bias {
            Some(require_shape(store, &format!("{}.bias", desc.conv), &[desc.spec.out_channels])?)
        } else {
            None
        };
        let (weight, bias) = match &desc.bn {
            Some(bn) => {
                let c = [desc.spec.out_channels];
                let gamma = require_shape(store, &format!("{bn}.weight"), &c)?;
                let beta = require_shape(store, &format!("{bn}.bias"), &c)?;
                let mean = require_shape(store, &format!("{bn}.running_mean"), &c)?;
                let var = require_shape(store, &format!("{bn}.running_var"), &c)?;
                let (w, b) = fold_batchnorm(
                    weight,
                    bias,
                    gamma.data(),
                    beta.data(),
                    mean.data(),
                    var.data(),
                    bn_eps,
                )?;
                (w, Some(b))
            }
            None => (weight.clone(), bias.cloned()),
        };
        Ok(BoundConv {
            desc: desc.clone(),
            weight,
            bias,
        })
    }

    fn forward(&self, x: &Tensor, trace: &mut Trace<'_>) -> Result<Tensor> {
        let (mut y, macs) = conv2d(x, &self.weight, self.bias.as_ref(), &self.desc.spec)?;
        if let Some(act) = self.desc.act {
            act.apply_in_place(y.data_mut());
        }
        trace.push(&self.desc.conv, LayerKind::Conv, macs, conv_aux_ops(&self.desc, y.len()));
        Ok(y)
    }
}

#[derive(Debug, Clone)]
struct BoundSqueeze {
    desc: SqueezeDesc,
    fc1: (Tensor, Tensor),
    fc2: (Tensor, Tensor),
}

impl BoundSqueeze {
    fn specs(&self) -> (ConvSpec, ConvSpec) {
        (
            ConvSpec::new(self.desc.channels, self.desc.squeeze, 1, 1, 0),
            ConvSpec::new(self.desc.squeeze, self.desc.channels, 1, 1, 0),
        )
    }

    fn bind(desc: &SqueezeDesc, store: &WeightStore) -> Result<Self> {
        let (c, s) = (desc.channels, desc.squeeze);
        let get = |suffix: &str, shape: &[usize]| {
            require_shape(store, &format!("{}.{suffix}", desc.name), shape).cloned()
        };
        Ok(BoundSqueeze {
            desc: desc.clone(),
            fc1: (get("fc1.weight", &[s, c, 1, 1])?, get("fc1.bias", &[s])?),
            fc2: (get("fc2.weight", &[c, s, 1, 1])?, get("fc2.bias", &[c])?),
        })
    }

    fn forward(&self, mut x: Tensor, trace: &mut Trace<'_>) -> Result<Tensor> {
        let (c, h, w) = x.chw()?;
        let (spec1, spec2) = self.specs();
        let pooled = global_avg_pool(&x)?;
        let (mut hidden, m1) = conv2d(&pooled, &self.fc1.0, Some(&self.fc1.1), &spec1)?;
        Activation::Relu.apply_in_place(hidden.data_mut());
        let (mut scale, m2) = conv2d(&hidden, &self.fc2.0, Some(&self.fc2.1), &spec2)?;
        Activation::HardSigmoid.apply_in_place(scale.data_mut());
        for (plane, &s) in x.data_mut().chunks_exact_mut(h * w).zip(scale.data()) {
            plane.iter_mut().for_each(|v| *v *= s);
        }
        trace.push(
            &self.desc.name,
            LayerKind::SqueezeExcite,
            m1 + m2,
            squeeze_aux_ops(c, self.desc.squeeze, h * w),
        );
        Ok(x)
    }
}

#[derive(Debug, Clone)]
struct BoundLinear {
    name: String,
    weight: Tensor,
    bias: Tensor,
    act: Option<Activation>,
}

impl BoundLinear {
    fn bind(name: &str, in_features: usize, out_features: usize, act: Option<Activation>, store: &WeightStore) -> Result<Self> {
        Ok(BoundLinear {
            name: name.to_string(),
            weight: require_shape(store, &format!("{name}.weight"), &[out_features, in_features])?.clone(),
            bias: require_shape(store, &format!("{name}.bias"), &[out_features])?.clone(),
            act,
        })
    }

    fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    fn forward(&self, x: &Tensor, trace: &mut Trace<'_>) -> Result<Tensor> {
        let (mut y, macs) = linear(x, &self.weight, &self.bias)?;
        if let Some(act) = self.act {
            act.apply_in_place(y.data_mut());
        }
        trace.push(&self.name, LayerKind::Linear, macs, linear_aux_ops(self.out_features(), self.act));
        Ok(y)
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Node {
    Conv(BoundConv),
    MaxPool {
        name: String,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BasicBlock {
        conv1: BoundConv,
        conv2: BoundConv,
        downsample: Option<BoundConv>,
    },
    InvertedResidual {
        expand: Option<BoundConv>,
        depthwise: BoundConv,
        se: Option<BoundSqueeze>,
        project: BoundConv,
        residual: bool,
    },
    GlobalAvgPool {
        name: String,
    },
    Linear(BoundLinear),
}

/// Collects per-layer cost rows during a forward pass when requested.
struct Trace<'a>(Option<&'a mut Vec<MacRow>>);

impl Trace<'_> {
    fn push(&mut self, name: &str, kind: LayerKind, macs: MacCount, aux_ops: u64) {
        if let Some(rows) = self.0.as_deref_mut() {
            rows.push(MacRow {
                name: name.to_string(),
                kind,
                macs,
                aux_ops,
            });
        }
    }
}

fn require_shape<'s>(store: &'s WeightStore, name: &str, shape: &[usize]) -> Result<&'s Tensor> {
    let t = store.require(name)?;
    if t.shape() != shape {
        return Err(Error::shape(format!(
            "`{name}` has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

fn add_in_place(acc: &mut Tensor, other: &Tensor) -> Result<()> {
    if acc.shape() != other.shape() {
        return Err(Error::shape(format!(
            "residual shapes differ: {:?} vs {:?}",
            acc.shape(),
            other.shape()
        )));
    }
    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
    Ok(())
}

/// An executable backbone plus the appended 2-way head.
///
/// Batch norm is folded into the convolutions at build time. The graph is
/// immutable after construction; concurrent [`forward`](Self::forward) calls
/// each own their activations.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    arch: Architecture,
    nodes: Vec<Node>,
    head: Option<BoundLinear>,
    backbone_params: usize,
}

impl ModelGraph {
    /// Builds the backbone and binds the head from `head.weight` / `head.bias`.
    pub fn build(arch: Architecture, weights: &WeightStore) -> Result<Self> {
        let mut model = ModelGraph::build_backbone(arch, weights)?;
        model.head = Some(BoundLinear::bind("head", FEATURE_DIM, NUM_CLASSES, None, weights)?);
        Ok(model)
    }

    /// Builds the backbone only; the head can be bound later with
    /// [`bind_head`](Self::bind_head).
    pub fn build_backbone(arch: Architecture, weights: &WeightStore) -> Result<Self> {
        let eps = arch.bn_epsilon();
        let descs = arch.describe();
        let backbone_params = tensor_shapes(&descs)
            .iter()
            .filter(|(name, _)| !name.ends_with(".running_mean") && !name.ends_with(".running_var"))
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum();
        let conv = |d: &ConvDesc| BoundConv::bind(d, weights, eps);
        let mut nodes = Vec::with_capacity(descs.len());
        for desc in &descs {
            nodes.push(match desc {
                NodeDesc::Conv(d) => Node::Conv(conv(d)?),
                NodeDesc::MaxPool {
                    name,
                    kernel,
                    stride,
                    padding,
                } => Node::MaxPool {
                    name: name.clone(),
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                NodeDesc::BasicBlock {
                    conv1,
                    conv2,
                    downsample,
                    ..
                } => Node::BasicBlock {
                    conv1: conv(conv1)?,
                    conv2: conv(conv2)?,
                    downsample: downsample.as_ref().map(conv).transpose()?,
                },
                NodeDesc::InvertedResidual {
                    expand,
                    depthwise,
                    se,
                    project,
                    residual,
                    ..
                } => Node::InvertedResidual {
                    expand: expand.as_ref().map(conv).transpose()?,
                    depthwise: conv(depthwise)?,
                    se: se.as_ref().map(|s| BoundSqueeze::bind(s, weights)).transpose()?,
                    project: conv(project)?,
                    residual: *residual,
                },
                NodeDesc::GlobalAvgPool { name } => Node::GlobalAvgPool { name: name.clone() },
                NodeDesc::Linear {
                    name,
                    in_features,
                    out_features,
                    act,
                } => Node::Linear(BoundLinear::bind(name, *in_features, *out_features, *act, weights)?),
            });
        }
        let model = ModelGraph {
            arch,
            nodes,
            head: None,
            backbone_params,
        };
        let feature_len = model.static_rows(INPUT_SHAPE, &mut Vec::new())?;
        if feature_len != FEATURE_DIM {
            return Err(Error::shape(format!(
                "backbone emits {feature_len} features, expected {FEATURE_DIM}"
            )));
        }
        Ok(model)
    }

    /// Binds a `2 x 1000` head.
    pub fn bind_head(&mut self, weight: Tensor, bias: Tensor) -> Result<()> {
        if weight.shape() != [NUM_CLASSES, FEATURE_DIM] {
            return Err(Error::shape(format!(
                "head weight has shape {:?}, expected [{NUM_CLASSES}, {FEATURE_DIM}]",
                weight.shape()
            )));
        }
        if bias.shape() != [NUM_CLASSES] {
            return Err(Error::shape(format!(
                "head bias has shape {:?}, expected [{NUM_CLASSES}]",
                bias.shape()
            )));
        }
        self.head = Some(BoundLinear {
            name: "head".into(),
            weight,
            bias,
            act: None,
        });
        Ok(())
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    /// Trainable scalars of the backbone (batch-norm running statistics
    /// excluded).
    pub fn backbone_parameter_count(&self) -> usize {
        self.backbone_params
    }

    pub fn head_parameter_count(&self) -> usize {
        self.head.as_ref().map_or(0, |h| h.weight.len() + h.bias.len())
    }

    fn check_input(input: &Tensor) -> Result<()> {
        if input.shape() != INPUT_SHAPE {
            return Err(Error::shape(format!(
                "model input must be {INPUT_SHAPE:?}, got {:?}",
                input.shape()
            )));
        }
        if !input.is_finite() {
            return Err(Error::Domain("model input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Backbone output (the 1000 ImageNet logits) for one `3 x 224 x 224`
    /// input.
    pub fn features(&self, input: &Tensor) -> Result<Tensor> {
        Self::check_input(input)?;
        self.run_backbone(input.clone(), &mut Trace(None))
    }

    /// Raw head logits `[no_calculus, calculus]` for one input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_traced_inner(input, &mut Trace(None))
    }

    /// [`forward`](Self::forward) that also returns the cost rows recorded
    /// from the kernels as they ran.
    pub fn forward_traced(&self, input: &Tensor) -> Result<(Tensor, MacReport)> {
        let mut rows = Vec::new();
        let logits = self.forward_traced_inner(input, &mut Trace(Some(&mut rows)))?;
        Ok((
            logits,
            MacReport {
                arch: self.arch,
                input_shape: INPUT_SHAPE,
                rows,
            },
        ))
    }

    fn forward_traced_inner(&self, input: &Tensor, trace: &mut Trace<'_>) -> Result<Tensor> {
        Self::check_input(input)?;
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::MissingWeight(HEAD_WEIGHT.into()))?;
        let features = self.run_backbone(input.clone(), trace)?;
        head.forward(&features, trace)
    }

    fn run_backbone(&self, mut x: Tensor, trace: &mut Trace<'_>) -> Result<Tensor> {
        for node in &self.nodes {
            x = match node {
                Node::Conv(c) => c.forward(&x, trace)?,
                Node::MaxPool {
                    name,
                    kernel,
                    stride,
                    padding,
                } => {
                    let y = max_pool2d(&x, *kernel, *stride, *padding)?;
                    trace.push(name, LayerKind::Pool, MacCount::ZERO, x.len() as u64);
                    y
                }
                Node::BasicBlock {
                    conv1,
                    conv2,
                    downsample,
                } => {
                    let h = conv1.forward(&x, trace)?;
                    let mut y = conv2.forward(&h, trace)?;
                    let shortcut = match downsample {
                        Some(d) => d.forward(&x, trace)?,
                        None => x,
                    };
                    add_in_place(&mut y, &shortcut)?;
                    Activation::Relu.apply_in_place(y.data_mut());
                    // post-addition ReLU
                    if let Some(rows) = trace.0.as_deref_mut() {
                        let conv2_row = rows.iter_mut().rev().find(|r| r.name == conv2.desc.conv);
                        if let Some(r) = conv2_row {
                            r.aux_ops += y.len() as u64;
                        }
                    }
                    y
                }
                Node::InvertedResidual {
                    expand,
                    depthwise,
                    se,
                    project,
                    residual,
                } => {
                    let mut h = match expand {
                        Some(e) => e.forward(&x, trace)?,
                        None => x.clone(),
                    };
                    h = depthwise.forward(&h, trace)?;
                    if let Some(se) = se {
                        h = se.forward(h, trace)?;
                    }
                    let mut y = project.forward(&h, trace)?;
                    if *residual {
                        add_in_place(&mut y, &x)?;
                    }
                    y
                }
                Node::GlobalAvgPool { name } => {
                    let y = global_avg_pool(&x)?;
                    trace.push(name, LayerKind::Pool, MacCount::ZERO, x.len() as u64);
                    y
                }
                Node::Linear(l) => l.forward(&x, trace)?,
            };
        }
        Ok(x)
    }

    /// Static cost report for a `3 x H x W` input. No tensor arithmetic is
    /// performed; shapes are propagated through the layer descriptors.
    pub fn count_macs(&self, input_shape: [usize; 3]) -> Result<MacReport> {
        let mut rows = Vec::new();
        self.static_rows(input_shape, &mut rows)?;
        if let Some(head) = &self.head {
            let (m, n) = (head.out_features(), head.in_features());
            rows.push(MacRow {
                name: head.name.clone(),
                kind: LayerKind::Linear,
                macs: MacCount((m * n) as u64),
                aux_ops: linear_aux_ops(m, head.act),
            });
        }
        Ok(MacReport {
            arch: self.arch,
            input_shape,
            rows,
        })
    }

    /// Appends backbone rows; returns the backbone output length.
    fn static_rows(&self, input_shape: [usize; 3], rows: &mut Vec<MacRow>) -> Result<usize> {
        fn conv(c: &BoundConv, shape: &mut [usize; 3], rows: &mut Vec<MacRow>) -> Result<()> {
            let spec = &c.desc.spec;
            if shape[0] != spec.in_channels {
                return Err(Error::shape(format!(
                    "`{}` expects {} input channels, previous layer emits {}",
                    c.desc.conv, spec.in_channels, shape[0]
                )));
            }
            let (oh, ow) = spec.output_hw(shape[1], shape[2])?;
            let macs = spec.macs(shape[1], shape[2])?;
            *shape = [spec.out_channels, oh, ow];
            rows.push(MacRow {
                name: c.desc.conv.clone(),
                kind: LayerKind::Conv,
                macs,
                aux_ops: conv_aux_ops(&c.desc, shape.iter().product()),
            });
            Ok(())
        }

        let mut shape = input_shape;
        let mut flat: Option<usize> = None;
        for node in &self.nodes {
            match node {
                Node::Conv(c) => conv(c, &mut shape, rows)?,
                Node::MaxPool {
                    name,
                    kernel,
                    stride,
                    padding,
                } => {
                    let [c, h, w] = shape;
                    if h + 2 * padding < *kernel || w + 2 * padding < *kernel {
                        return Err(Error::shape(format!("`{name}`: input {h}x{w} too small")));
                    }
                    rows.push(MacRow {
                        name: name.clone(),
                        kind: LayerKind::Pool,
                        macs: MacCount::ZERO,
                        aux_ops: (c * h * w) as u64,
                    });
                    shape = [
                        c,
                        (h + 2 * padding - kernel) / stride + 1,
                        (w + 2 * padding - kernel) / stride + 1,
                    ];
                }
                Node::BasicBlock {
                    conv1,
                    conv2,
                    downsample,
                } => {
                    let mut inner = shape;
                    conv(conv1, &mut inner, rows)?;
                    conv(conv2, &mut inner, rows)?;
                    if let Some(last) = rows.last_mut() {
                        last.aux_ops += inner.iter().product::<usize>() as u64;
                    }
                    let mut skip = shape;
                    if let Some(d) = downsample {
                        conv(d, &mut skip, rows)?;
                    }
                    if skip != inner {
                        return Err(Error::shape(format!(
                            "`{}`: shortcut {skip:?} does not match residual branch {inner:?}",
                            conv1.desc.conv
                        )));
                    }
                    shape = inner;
                }
                Node::InvertedResidual {
                    expand,
                    depthwise,
                    se,
                    project,
                    residual,
                } => {
                    let mut inner = shape;
                    if let Some(e) = expand {
                        conv(e, &mut inner, rows)?;
                    }
                    conv(depthwise, &mut inner, rows)?;
                    if let Some(se) = se {
                        let [c, h, w] = inner;
                        let (s1, s2) = se.specs();
                        if c != se.desc.channels {
                            return Err(Error::shape(format!("`{}`: channel mismatch", se.desc.name)));
                        }
                        rows.push(MacRow {
                            name: se.desc.name.clone(),
                            kind: LayerKind::SqueezeExcite,
                            macs: s1.macs(1, 1)? + s2.macs(1, 1)?,
                            aux_ops: squeeze_aux_ops(c, se.desc.squeeze, h * w),
                        });
                    }
                    conv(project, &mut inner, rows)?;
                    if *residual && inner != shape {
                        return Err(Error::shape(format!(
                            "`{}`: residual shape {inner:?} differs from input {shape:?}",
                            project.desc.conv
                        )));
                    }
                    shape = inner;
                }
                Node::GlobalAvgPool { name } => {
                    let [c, h, w] = shape;
                    if h * w == 0 {
                        return Err(Error::shape(format!("`{name}`: empty plane")));
                    }
                    rows.push(MacRow {
                        name: name.clone(),
                        kind: LayerKind::Pool,
                        macs: MacCount::ZERO,
                        aux_ops: (c * h * w) as u64,
                    });
                    shape = [c, 1, 1];
                }
                Node::Linear(l) => {
                    let n = flat.unwrap_or(shape.iter().product());
                    if n != l.in_features() {
                        return Err(Error::shape(format!(
                            "`{}` expects {} inputs, previous layer emits {n}",
                            l.name,
                            l.in_features()
                        )));
                    }
                    rows.push(MacRow {
                        name: l.name.clone(),
                        kind: LayerKind::Linear,
                        macs: MacCount((l.in_features() * l.out_features()) as u64),
                        aux_ops: linear_aux_ops(l.out_features(), l.act),
                    });
                    flat = Some(l.out_features());
                }
            }
        }
        Ok(flat.unwrap_or(shape.iter().product()))
    }
}

/// Parameter names and shapes `build` expects for `arch`, in file order,
/// head included.
pub fn required_tensors(arch: Architecture) -> Vec<(String, Vec<usize>)> {
    let mut shapes = tensor_shapes(&arch.describe());
    shapes.push((HEAD_WEIGHT.into(), vec![NUM_CLASSES, FEATURE_DIM]));
    shapes.push((HEAD_BIAS.into(), vec![NUM_CLASSES]));
    shapes
}
