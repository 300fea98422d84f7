//! Network topology: spindle blocks, feature-fusion modules, the softmax
//! feature fusion module, the pixel-shuffle upsampler, and the assembled
//! super-resolution network.
//!
//! The topology is written once, against [`Exec`](crate::exec::Exec), so the
//! same code drives both the recording (training) and eager (inference)
//! executors. [`parameter_layout`] is the single source of truth for
//! parameter names, shapes, initialization, and per-layer cost accounting;
//! the forward builders resolve parameters by the same names.

pub mod weights;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::{EagerExec, Exec};
use crate::num::Scalar;
use crate::tensor::{ConvSpec, Shape, TensorBase};
use weights::WeightStoreBase;

/// Feature width of the backbone (head output, block input/output).
pub const BACKBONE_WIDTH: usize = 48;
/// Width after the dimension-extension conv inside a spindle block.
pub const EXTENDED_WIDTH: usize = 64;
/// Channels per exploration branch (four branches × 16 = 64).
pub const GROUP_WIDTH: usize = 16;
/// Feature width used by the residual-baseline variant.
pub const BASELINE_WIDTH: usize = 64;
/// RGB in, RGB out.
pub const IMAGE_CHANNELS: usize = 3;
/// Initial PReLU negative-half slope.
pub const PRELU_SLOPE: f64 = 0.25;

/// Which body the network uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Spindle blocks with softmax feature fusion over module outputs.
    Full,
    /// Spindle blocks, but the last module output feeds the tail directly
    /// (no softmax feature fusion).
    NoSffm,
    /// Plain residual blocks (two 3×3 convs, width 64) instead of spindle
    /// blocks; fusion retained. Used for parameter-ratio comparisons.
    ResidualBaseline,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSffm => "no_sffm",
            Variant::ResidualBaseline => "residual_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_sffm" | "no-sffm" => Ok(Variant::NoSffm),
            "residual_baseline" | "residual-baseline" => Ok(Variant::ResidualBaseline),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}; expected full, no_sffm, or residual_baseline"
            ))),
        }
    }
}

/// Declarative description of one network configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    /// Blocks per module (B).
    pub blocks: usize,
    /// Module count (M).
    pub modules: usize,
    /// Upscaling factor, one of 2/3/4.
    pub scale: usize,
    /// Replace the 3×3 convs inside spindle blocks with depthwise convs.
    pub depthwise: bool,
    pub variant: Variant,
}

impl NetworkSpec {
    pub fn new(blocks: usize, modules: usize, scale: usize) -> Self {
        NetworkSpec {
            blocks,
            modules,
            scale,
            depthwise: false,
            variant: Variant::Full,
        }
    }

    /// Named configurations accepted by the command line.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "lffn" => Ok(NetworkSpec::new(4, 15, 4)),
            "lffn-s" => Ok(NetworkSpec::new(4, 4, 4).with_depthwise(true)),
            "lffn-nf" => Ok(NetworkSpec::new(4, 15, 4).with_variant(Variant::NoSffm)),
            "lffn-ns" => Ok(NetworkSpec::new(4, 15, 4).with_variant(Variant::ResidualBaseline)),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected lffn, lffn-s, lffn-nf, or lffn-ns"
            ))),
        }
    }

    pub fn with_scale(mut self, scale: usize) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_depthwise(mut self, depthwise: bool) -> Self {
        self.depthwise = depthwise;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.modules == 0 {
            return Err(Error::Config(format!(
                "blocks and modules must be positive (got B={}, M={})",
                self.blocks, self.modules
            )));
        }
        if !matches!(self.scale, 2..=4) {
            return Err(Error::Config(format!(
                "scale must be 2, 3, or 4 (got {})",
                self.scale
            )));
        }
        if self.depthwise && self.variant == Variant::ResidualBaseline {
            return Err(Error::Config(
                "depthwise applies to spindle-block convs; the residual baseline has none"
                    .to_string(),
            ));
        }
        Ok(())
    }

    /// Backbone feature width: 48, or 64 for the residual baseline.
    pub fn backbone_width(&self) -> usize {
        match self.variant {
            Variant::ResidualBaseline => BASELINE_WIDTH,
            _ => BACKBONE_WIDTH,
        }
    }

    /// Whether the softmax feature fusion module is present.
    pub fn has_fusion(&self) -> bool {
        self.variant != Variant::NoSffm
    }

    /// Per-stage shuffle factors of the upsampler.
    pub fn upsample_stages(&self) -> &'static [usize] {
        match self.scale {
            2 => &[2],
            3 => &[3],
            4 => &[2, 2],
            _ => &[], // rejected by validate()
        }
    }
}

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitKind {
    /// Zero-mean normal with variance 2 / fan_in.
    HeNormal { fan_in: usize },
    Zero,
    Constant(f64),
}

/// One named parameter tensor of the network.
#[derive(Clone, Debug)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Shape,
    pub init: InitKind,
}

impl ParamInfo {
    pub fn numel(&self) -> usize {
        self.shape.numel()
    }
}

/// Work performed by a layer, for multiply-accumulate accounting.
#[derive(Clone, Debug)]
pub enum LayerCost {
    /// Convolution running at `res_scale` × the network's input resolution
    /// (upsampler stages after the first shuffle run on enlarged maps).
    Conv { spec: ConvSpec, res_scale: usize },
    /// Per-image dense map (fusion attention), spatial-size independent.
    Dense {
        in_features: usize,
        out_features: usize,
    },
    /// No multiplies (activations, shuffles).
    Free,
}

/// One layer: its parameters plus its cost model.
#[derive(Clone, Debug)]
pub struct LayerInfo {
    pub name: String,
    pub params: Vec<ParamInfo>,
    pub cost: LayerCost,
}

impl LayerInfo {
    pub fn param_count(&self) -> u64 {
        self.params.iter().map(|p| p.numel() as u64).sum()
    }
}

fn conv_layer(name: String, spec: ConvSpec, res_scale: usize) -> LayerInfo {
    let (kh, kw) = spec.kernel;
    let fan_in = spec.in_channels / spec.groups * kh * kw;
    let mut params = vec![ParamInfo {
        name: format!("{name}.weight"),
        shape: spec.weight_shape(),
        init: InitKind::HeNormal { fan_in },
    }];
    if spec.bias {
        params.push(ParamInfo {
            name: format!("{name}.bias"),
            shape: Shape::new(1, spec.out_channels, 1, 1),
            init: InitKind::Zero,
        });
    }
    LayerInfo {
        name,
        params,
        cost: LayerCost::Conv { spec, res_scale },
    }
}

fn prelu_layer(name: String, channels: usize) -> LayerInfo {
    let alpha = ParamInfo {
        name: format!("{name}.alpha"),
        shape: Shape::new(1, channels, 1, 1),
        init: InitKind::Constant(PRELU_SLOPE),
    };
    LayerInfo {
        name,
        params: vec![alpha],
        cost: LayerCost::Free,
    }
}

fn dense_layer(name: String, in_features: usize, out_features: usize) -> LayerInfo {
    let weight = ParamInfo {
        name: format!("{name}.weight"),
        shape: Shape::new(out_features, in_features, 1, 1),
        init: InitKind::HeNormal { fan_in: in_features },
    };
    LayerInfo {
        name,
        params: vec![weight],
        cost: LayerCost::Dense {
            in_features,
            out_features,
        },
    }
}

/// 3×3 conv used inside spindle-block branches.
fn branch_conv_spec(spec: &NetworkSpec) -> ConvSpec {
    if spec.depthwise {
        ConvSpec::depthwise(GROUP_WIDTH, 3, 1)
    } else {
        ConvSpec::new(GROUP_WIDTH, GROUP_WIDTH, 3, 1)
    }
}

/// Branch `b` of a spindle block: depths 1/2/3 of conv+PReLU for the three
/// nonlinear branches, one conv without activation for the linear branch.
pub(crate) fn branch_depth(b: usize) -> usize {
    if b == 3 {
        1
    } else {
        b + 1
    }
}

/// Parallel branches inside a spindle block: depths 1/2/3 of conv+PReLU
/// plus one linear conv.
pub const BRANCHES: usize = 4;

fn block_layout(spec: &NetworkSpec, prefix: &str, layers: &mut Vec<LayerInfo>) {
    match spec.variant {
        Variant::ResidualBaseline => {
            let w = BASELINE_WIDTH;
            layers.push(conv_layer(
                format!("{prefix}.conv.0"),
                ConvSpec::new(w, w, 3, 1),
                1,
            ));
            layers.push(prelu_layer(format!("{prefix}.prelu"), w));
            layers.push(conv_layer(
                format!("{prefix}.conv.1"),
                ConvSpec::new(w, w, 3, 1),
                1,
            ));
        }
        _ => {
            layers.push(conv_layer(
                format!("{prefix}.extend"),
                ConvSpec::new(BACKBONE_WIDTH, EXTENDED_WIDTH, 1, 0),
                1,
            ));
            let conv = branch_conv_spec(spec);
            for b in 0..BRANCHES {
                for j in 0..branch_depth(b) {
                    layers.push(conv_layer(format!("{prefix}.branch.{b}.conv.{j}"), conv, 1));
                    if b != 3 {
                        layers.push(prelu_layer(
                            format!("{prefix}.branch.{b}.prelu.{j}"),
                            GROUP_WIDTH,
                        ));
                    }
                }
            }
            layers.push(conv_layer(
                format!("{prefix}.refine"),
                ConvSpec::new(EXTENDED_WIDTH, BACKBONE_WIDTH, 1, 0),
                1,
            ));
        }
    }
}

/// Every parameter of the network, in forward order, with shapes,
/// initialization, and cost model. Single source of truth shared by
/// initialization, store validation, and the efficiency analyzer.
pub fn parameter_layout(spec: &NetworkSpec) -> Result<Vec<LayerInfo>> {
    spec.validate()?;
    let w = spec.backbone_width();
    let mut layers = Vec::new();
    layers.push(conv_layer(
        "head".to_string(),
        ConvSpec::new(IMAGE_CHANNELS, w, 3, 1),
        1,
    ));
    for d in 0..spec.modules {
        for k in 0..spec.blocks {
            block_layout(spec, &format!("module.{d}.block.{k}"), &mut layers);
        }
        layers.push(conv_layer(
            format!("module.{d}.fuse"),
            ConvSpec::new(spec.blocks * w, w, 1, 0),
            1,
        ));
    }
    if spec.has_fusion() {
        for i in 0..spec.modules {
            layers.push(dense_layer(format!("sffm.level.{i}"), w, w));
        }
    }
    layers.push(conv_layer(
        "fuse".to_string(),
        ConvSpec::new(w, w, 1, 0),
        1,
    ));
    for (s, &r) in spec.upsample_stages().iter().enumerate() {
        // The first stage reads the low-resolution map; for scale 4 the
        // second stage reads the once-shuffled (2×) map.
        let res_scale = if s == 0 { 1 } else { 2 };
        layers.push(conv_layer(
            format!("up.{s}"),
            ConvSpec::new(w, w * r * r, 1, 0),
            res_scale,
        ));
    }
    layers.push(conv_layer(
        "last".to_string(),
        ConvSpec::new(w, IMAGE_CHANNELS, 1, 0),
        spec.scale,
    ));
    Ok(layers)
}

/// Builds a freshly initialized weight store: He-normal conv/dense weights
/// (variance 2/fan_in), zero biases, PReLU slopes 0.25. Deterministic per
/// seed — the draw order is the layout order.
pub fn init_weights<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<WeightStoreBase<T>> {
    let layout = parameter_layout(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStoreBase::new();
    for layer in &layout {
        for p in &layer.params {
            let tensor = match p.init {
                InitKind::HeNormal { fan_in } => {
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std).map_err(|e| {
                        Error::Config(format!("bad init distribution for {}: {e}", p.name))
                    })?;
                    let data: Vec<T> = (0..p.numel())
                        .map(|_| T::from_f64(normal.sample(&mut rng)))
                        .collect();
                    TensorBase::from_vec(p.shape, data)?
                }
                InitKind::Zero => TensorBase::zeros(p.shape),
                InitKind::Constant(c) => TensorBase::filled(p.shape, T::from_f64(c)),
            };
            store.insert(p.name.clone(), tensor)?;
        }
    }
    Ok(store)
}

/// Result handles of one forward pass.
pub struct ForwardOutput<R> {
    /// The super-resolved RGB output.
    pub sr: R,
    /// Softmax fusion weights, shape (N, M·C, 1, 1), level-major —
    /// `None` when the variant has no fusion module.
    pub fusion_weights: Option<R>,
}

fn forward_block<T: Scalar, E: Exec<T>>(
    spec: &NetworkSpec,
    exec: &mut E,
    x: &E::Ref,
    name: &str,
) -> Result<E::Ref> {
    match spec.variant {
        Variant::ResidualBaseline => {
            let w = BASELINE_WIDTH;
            let conv = ConvSpec::new(w, w, 3, 1);
            let c0 = exec.conv(x, &format!("{name}.conv.0"), &conv)?;
            let a = exec.prelu(&c0, &format!("{name}.prelu"))?;
            let c1 = exec.conv(&a, &format!("{name}.conv.1"), &conv)?;
            exec.add(&c1, x)
        }
        _ => {
            let extended = exec.conv(
                x,
                &format!("{name}.extend"),
                &ConvSpec::new(BACKBONE_WIDTH, EXTENDED_WIDTH, 1, 0),
            )?;
            let conv = branch_conv_spec(spec);
            let mut parts = Vec::with_capacity(BRANCHES);
            for b in 0..BRANCHES {
                let mut cur = exec.slice(&extended, b * GROUP_WIDTH, GROUP_WIDTH)?;
                for j in 0..branch_depth(b) {
                    cur = exec.conv(&cur, &format!("{name}.branch.{b}.conv.{j}"), &conv)?;
                    if b != 3 {
                        cur = exec.prelu(&cur, &format!("{name}.branch.{b}.prelu.{j}"))?;
                    }
                }
                parts.push(cur);
            }
            let cat = exec.concat(&parts)?;
            let refined = exec.conv(
                &cat,
                &format!("{name}.refine"),
                &ConvSpec::new(EXTENDED_WIDTH, BACKBONE_WIDTH, 1, 0),
            )?;
            exec.add(&refined, x)
        }
    }
}

fn forward_module<T: Scalar, E: Exec<T>>(
    spec: &NetworkSpec,
    exec: &mut E,
    x: &E::Ref,
    d: usize,
) -> Result<E::Ref> {
    let w = spec.backbone_width();
    let mut cur = x.clone();
    let mut outputs = Vec::with_capacity(spec.blocks);
    for k in 0..spec.blocks {
        cur = forward_block(spec, exec, &cur, &format!("module.{d}.block.{k}"))?;
        outputs.push(cur.clone());
    }
    let cat = exec.concat(&outputs)?;
    let fused = exec.conv(
        &cat,
        &format!("module.{d}.fuse"),
        &ConvSpec::new(spec.blocks * w, w, 1, 0),
    )?;
    exec.add(&fused, x)
}

/// Softmax feature fusion over the module outputs. Returns the fused map
/// and the (N, M·C, 1, 1) weight tensor.
fn forward_fusion<T: Scalar, E: Exec<T>>(
    spec: &NetworkSpec,
    exec: &mut E,
    levels: &[E::Ref],
) -> Result<(E::Ref, E::Ref)> {
    let c = spec.backbone_width();
    let mut scores = Vec::with_capacity(levels.len());
    for (i, level) in levels.iter().enumerate() {
        let pooled = exec.global_avg_pool(level)?;
        scores.push(exec.dense(&pooled, &format!("sffm.level.{i}"))?);
    }
    let stacked = exec.concat(&scores)?;
    let weights = exec.softmax_levels(&stacked, levels.len())?;
    let mut acc: Option<E::Ref> = None;
    for (i, level) in levels.iter().enumerate() {
        let w_i = exec.slice(&weights, i * c, c)?;
        let scaled = exec.scale_channels(level, &w_i)?;
        acc = Some(match acc {
            None => scaled,
            Some(prev) => exec.add(&prev, &scaled)?,
        });
    }
    Ok((acc.expect("levels is non-empty"), weights))
}

/// Pixel-shuffle upsampler: per stage, a 1×1 conv w→w·r² (no activation)
/// followed by a shuffle.
fn forward_upsampler<T: Scalar, E: Exec<T>>(
    spec: &NetworkSpec,
    exec: &mut E,
    x: &E::Ref,
) -> Result<E::Ref> {
    let w = spec.backbone_width();
    let mut y = x.clone();
    for (s, &r) in spec.upsample_stages().iter().enumerate() {
        let expanded = exec.conv(
            &y,
            &format!("up.{s}"),
            &ConvSpec::new(w, w * r * r, 1, 0),
        )?;
        y = exec.pixel_shuffle(&expanded, r)?;
    }
    Ok(y)
}

/// One full forward pass. `input` must be an RGB tensor (C = 3).
pub fn forward<T: Scalar, E: Exec<T>>(
    spec: &NetworkSpec,
    exec: &mut E,
    input: &E::Ref,
) -> Result<ForwardOutput<E::Ref>> {
    spec.validate()?;
    let in_shape = exec.value(input).shape();
    if in_shape.c != IMAGE_CHANNELS {
        return Err(Error::shape(
            "forward",
            format!("input must have 3 channels, got {}", in_shape.c),
        ));
    }
    let w = spec.backbone_width();
    let head = exec.conv(input, "head", &ConvSpec::new(IMAGE_CHANNELS, w, 3, 1))?;

    let mut cur = head.clone();
    let mut levels = Vec::with_capacity(if spec.has_fusion() { spec.modules } else { 0 });
    for d in 0..spec.modules {
        cur = forward_module(spec, exec, &cur, d)?;
        if spec.has_fusion() {
            levels.push(cur.clone());
        }
    }

    let (body, fusion_weights) = if spec.has_fusion() {
        let (fused, weights) = forward_fusion(spec, exec, &levels)?;
        (fused, Some(weights))
    } else {
        (cur, None)
    };

    let fused = exec.conv(&body, "fuse", &ConvSpec::new(w, w, 1, 0))?;
    let skip = exec.add(&fused, &head)?;
    let up = forward_upsampler(spec, exec, &skip)?;
    let sr = exec.conv(&up, "last", &ConvSpec::new(w, IMAGE_CHANNELS, 1, 0))?;
    Ok(ForwardOutput { sr, fusion_weights })
}

/// A spec paired with a weight store whose names and shapes have been
/// validated against the spec's layout.
pub struct NetworkBase<T: Scalar> {
    spec: NetworkSpec,
    store: WeightStoreBase<T>,
}

impl<T: Scalar> NetworkBase<T> {
    /// Freshly initialized network.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let store = init_weights(&spec, seed)?;
        Ok(NetworkBase { spec, store })
    }

    /// Wraps an existing store, checking it holds exactly the layout's
    /// parameters with the right shapes.
    pub fn with_store(spec: NetworkSpec, store: WeightStoreBase<T>) -> Result<Self> {
        let layout = parameter_layout(&spec)?;
        let mut expected = 0usize;
        for layer in &layout {
            for p in &layer.params {
                expected += 1;
                let tensor = store.get(&p.name).map_err(|_| {
                    Error::Container(format!("weight store is missing {:?}", p.name))
                })?;
                let got = tensor.shape();
                if got != p.shape {
                    return Err(Error::Container(format!(
                        "parameter {:?} has shape {got}, expected {}",
                        p.name, p.shape
                    )));
                }
            }
        }
        if store.len() != expected {
            let known: std::collections::HashSet<&str> = layout
                .iter()
                .flat_map(|l| l.params.iter().map(|p| p.name.as_str()))
                .collect();
            let stray = store
                .names()
                .find(|n| !known.contains(n))
                .unwrap_or("<unknown>");
            return Err(Error::Container(format!(
                "weight store holds {} parameters, layout expects {expected} (e.g. stray entry {stray:?})",
                store.len()
            )));
        }
        Ok(NetworkBase { spec, store })
    }

    /// Reconstructs the spec from a store's names and shapes, then wraps it.
    pub fn from_store(store: WeightStoreBase<T>) -> Result<Self> {
        let spec = infer_spec(&store)?;
        NetworkBase::with_store(spec, store)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn store(&self) -> &WeightStoreBase<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut WeightStoreBase<T> {
        &mut self.store
    }

    pub fn into_store(self) -> WeightStoreBase<T> {
        self.store
    }

    /// Eager forward pass; returns the super-resolved RGB tensor.
    pub fn super_resolve(&self, input: &TensorBase<T>) -> Result<TensorBase<T>> {
        let mut exec = EagerExec::new(&self.store);
        let x = exec.input(input.clone())?;
        let out = forward(&self.spec, &mut exec, &x)?;
        Ok(unwrap_rc(out.sr))
    }

    /// Eager forward pass; returns the (N, M·C, 1, 1) fusion weights.
    /// Errors when the variant has no fusion module.
    pub fn fusion_weights(&self, input: &TensorBase<T>) -> Result<TensorBase<T>> {
        let mut exec = EagerExec::new(&self.store);
        let x = exec.input(input.clone())?;
        let out = forward(&self.spec, &mut exec, &x)?;
        match out.fusion_weights {
            Some(w) => Ok(unwrap_rc(w)),
            None => Err(Error::Config(format!(
                "variant {:?} has no fusion module",
                self.spec.variant.as_str()
            ))),
        }
    }
}

fn unwrap_rc<T: Clone>(rc: std::rc::Rc<T>) -> T {
    std::rc::Rc::try_unwrap(rc).unwrap_or_else(|shared| (*shared).clone())
}

/// Reconstructs a [`NetworkSpec`] from the parameter names and shapes of a
/// store produced by [`init_weights`] / training.
pub fn infer_spec<T: Scalar>(store: &WeightStoreBase<T>) -> Result<NetworkSpec> {
    let variant = if store.contains("module.0.block.0.conv.0.weight") {
        Variant::ResidualBaseline
    } else if store.contains("sffm.level.0.weight") {
        Variant::Full
    } else {
        Variant::NoSffm
    };

    let mut modules = 0usize;
    let mut blocks = 0usize;
    for name in store.names() {
        if let Some(rest) = name.strip_prefix("module.") {
            let mut parts = rest.split('.');
            if let Some(d) = parts.next().and_then(|s| s.parse::<usize>().ok()) {
                modules = modules.max(d + 1);
            }
            if let (Some("block"), Some(k)) = (
                parts.next(),
                parts.next().and_then(|s| s.parse::<usize>().ok()),
            ) {
                blocks = blocks.max(k + 1);
            }
        }
    }
    if modules == 0 || blocks == 0 {
        return Err(Error::Container(
            "store holds no module/block parameters; not a network checkpoint".to_string(),
        ));
    }

    let depthwise = if variant == Variant::ResidualBaseline {
        false
    } else {
        let w = store.get("module.0.block.0.branch.0.conv.0.weight")?;
        w.shape().c == 1
    };

    let mut stages = Vec::new();
    for s in 0.. {
        match store.get(&format!("up.{s}.weight")) {
            Ok(w) => {
                let shape = w.shape();
                let ratio = shape.n / shape.c;
                let r = (ratio as f64).sqrt().round() as usize;
                if r * r != ratio {
                    return Err(Error::Container(format!(
                        "up.{s}.weight expands {}→{}, not a square shuffle factor",
                        shape.c, shape.n
                    )));
                }
                stages.push(r);
            }
            Err(_) => break,
        }
    }
    let scale = match stages.as_slice() {
        [2] => 2,
        [3] => 3,
        [2, 2] => 4,
        other => {
            return Err(Error::Container(format!(
                "unrecognized upsampler stages {other:?}"
            )));
        }
    };

    let spec = NetworkSpec {
        blocks,
        modules,
        scale,
        depthwise,
        variant,
    };
    spec.validate()?;
    Ok(spec)
}
