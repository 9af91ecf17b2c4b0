//! Neutral layer-list description of a neural network.
//!
//! Shapes are always three element arrays with unused trailing dims fixed
//! to 1. The layout convention is `(n, 1, 1)` for flat tensors,
//! `(length, channels, 1)` for 1-d feature maps and `(height, width, channels)`
//! for 2-d feature maps.

use serde::{Deserialize, Serialize};

pub type Dims = [u64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv1d,
    Conv2d,
    MaxPool1d,
    MaxPool2d,
    AvgPool1d,
    AvgPool2d,
    Flatten,
    Activation,
    BatchNorm,
    Input,
}

impl LayerKind {
    pub const ALL: [LayerKind; 11] = [
        LayerKind::Dense,
        LayerKind::Conv1d,
        LayerKind::Conv2d,
        LayerKind::MaxPool1d,
        LayerKind::MaxPool2d,
        LayerKind::AvgPool1d,
        LayerKind::AvgPool2d,
        LayerKind::Flatten,
        LayerKind::Activation,
        LayerKind::BatchNorm,
        LayerKind::Input,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    /// Layers that perform multiply-accumulates (and therefore carry weights).
    pub fn is_mac(self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::Conv1d | LayerKind::Conv2d)
    }

    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv1d | LayerKind::Conv2d)
    }

    pub fn is_pool(self) -> bool {
        matches!(
            self,
            LayerKind::MaxPool1d | LayerKind::MaxPool2d | LayerKind::AvgPool1d | LayerKind::AvgPool2d
        )
    }

    fn spatial_rank(self) -> Option<usize> {
        match self {
            LayerKind::Conv1d | LayerKind::MaxPool1d | LayerKind::AvgPool1d => Some(1),
            LayerKind::Conv2d | LayerKind::MaxPool2d | LayerKind::AvgPool2d => Some(2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    None,
    Same,
    Valid,
}

impl Padding {
    pub const ALL: [Padding; 3] = [Padding::None, Padding::Same, Padding::Valid];

    pub fn code(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Linear,
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softmax,
    ];

    pub fn code(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_shape: Dims,
    pub out_shape: Dims,
    /// Units for dense layers, filters for convolutions, channel count otherwise.
    pub units: u64,
    /// Taps per spatial dim (pool size for pooling layers).
    pub kernel_size: u64,
    pub stride: u64,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub activation: Activation,
    /// Reuse factor actually used for this layer, when reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse_factor: Option<u64>,
}

impl LayerSpec {
    /// Multiply-accumulate geometry `(fan_in, fan_out)` of a MAC layer.
    ///
    /// Dense: `(in, units)`. Convolutions: fan-in is `channels * kernel^rank`
    /// and fan-out is `filters * output positions`.
    pub fn mac_geometry(&self) -> Option<(u64, u64)> {
        match self.kind {
            LayerKind::Dense => Some((self.in_shape[0], self.units)),
            LayerKind::Conv1d => Some((
                self.in_shape[1] * self.kernel_size,
                self.units * self.out_shape[0],
            )),
            LayerKind::Conv2d => Some((
                self.in_shape[2] * self.kernel_size * self.kernel_size,
                self.units * self.out_shape[0] * self.out_shape[1],
            )),
            _ => None,
        }
    }

    /// Trainable plus stored parameters, counted the way Keras reports model size.
    pub fn param_count(&self) -> u64 {
        match self.kind {
            LayerKind::Dense => self.in_shape[0] * self.units + self.units,
            LayerKind::Conv1d => self.units * self.in_shape[1] * self.kernel_size + self.units,
            LayerKind::Conv2d => {
                self.units * self.in_shape[2] * self.kernel_size * self.kernel_size + self.units
            }
            LayerKind::BatchNorm => 4 * channels_of(self.out_shape),
            _ => 0,
        }
    }

    pub fn out_elements(&self) -> u64 {
        self.out_shape.iter().product()
    }

    /// Output shape implied by the layer kind and hyperparameters, or `None`
    /// when the input geometry cannot host this layer.
    pub fn expected_out_shape(&self) -> Option<Dims> {
        let [a, b, c] = self.in_shape;
        match self.kind {
            LayerKind::Dense => (b == 1 && c == 1).then_some([self.units, 1, 1]),
            LayerKind::Conv1d => {
                let len = window_out(a, self.kernel_size, self.stride, self.padding)?;
                (c == 1).then_some([len, self.units, 1])
            }
            LayerKind::Conv2d => {
                let h = window_out(a, self.kernel_size, self.stride, self.padding)?;
                let w = window_out(b, self.kernel_size, self.stride, self.padding)?;
                Some([h, w, self.units])
            }
            LayerKind::MaxPool1d | LayerKind::AvgPool1d => {
                let len = window_out(a, self.kernel_size, self.stride, self.padding)?;
                (c == 1).then_some([len, b, 1])
            }
            LayerKind::MaxPool2d | LayerKind::AvgPool2d => {
                let h = window_out(a, self.kernel_size, self.stride, self.padding)?;
                let w = window_out(b, self.kernel_size, self.stride, self.padding)?;
                Some([h, w, c])
            }
            LayerKind::Flatten => Some([a * b * c, 1, 1]),
            LayerKind::Activation | LayerKind::BatchNorm | LayerKind::Input => Some(self.in_shape),
        }
    }

    pub fn spatial_rank(&self) -> Option<usize> {
        self.kind.spatial_rank()
    }
}

/// Output length of a sliding window. `Padding::None` behaves like `Valid`.
pub fn window_out(len: u64, kernel: u64, stride: u64, padding: Padding) -> Option<u64> {
    if kernel == 0 || stride == 0 {
        return None;
    }
    match padding {
        Padding::Same => Some(len.div_ceil(stride)),
        Padding::Valid | Padding::None => {
            if len < kernel {
                None
            } else {
                Some((len - kernel) / stride + 1)
            }
        }
    }
}

/// Channel count under the shape layout convention.
pub fn channels_of(shape: Dims) -> u64 {
    if shape[2] > 1 {
        shape[2]
    } else if shape[1] > 1 {
        shape[1]
    } else {
        shape[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArchitecture {
    #[serde(default)]
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl NetworkArchitecture {
    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn mac_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().filter(|l| l.kind.is_mac())
    }

    pub fn family(&self) -> Family {
        if self.layers.iter().any(|l| matches!(l.kind, LayerKind::Conv2d)) {
            Family::Conv2d
        } else if self.layers.iter().any(|l| matches!(l.kind, LayerKind::Conv1d)) {
            Family::Conv1d
        } else {
            Family::Dense
        }
    }
}

/// Coarse architecture family used for generation and grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dense,
    Conv1d,
    Conv2d,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Dense, Family::Conv1d, Family::Conv2d];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Dense => "dense",
            Family::Conv1d => "conv1d",
            Family::Conv2d => "conv2d",
        }
    }
}

/// Chains layers while tracking the running shape.
#[derive(Debug, Clone)]
pub struct ArchBuilder {
    layers: Vec<LayerSpec>,
    shape: Dims,
}

impl ArchBuilder {
    /// Flat input of `n` features.
    pub fn flat(n: u64) -> Self {
        Self::with_input([n, 1, 1])
    }

    /// 1-d input of `length` positions and `channels` channels.
    pub fn seq(length: u64, channels: u64) -> Self {
        Self::with_input([length, channels, 1])
    }

    /// 2-d input image.
    pub fn image(height: u64, width: u64, channels: u64) -> Self {
        Self::with_input([height, width, channels])
    }

    fn with_input(shape: Dims) -> Self {
        let input = LayerSpec {
            kind: LayerKind::Input,
            in_shape: shape,
            out_shape: shape,
            units: channels_of(shape),
            kernel_size: 1,
            stride: 1,
            padding: Padding::None,
            activation: Activation::Linear,
            reuse_factor: None,
        };
        Self { layers: vec![input], shape }
    }

    pub fn shape(&self) -> Dims {
        self.shape
    }

    fn push(self, layer: LayerSpec) -> Self {
        let kind = layer.kind;
        let shape = self.shape;
        self.try_push(layer)
            .unwrap_or_else(|| panic!("layer {kind:?} does not fit input {shape:?}"))
    }

    /// Appends `layer`, overwriting its shapes from the running shape.
    /// Returns `None` when the layer cannot consume the current shape.
    pub fn try_push(mut self, mut layer: LayerSpec) -> Option<Self> {
        layer.in_shape = self.shape;
        let out = layer.expected_out_shape()?;
        if out.contains(&0) {
            return None;
        }
        layer.out_shape = out;
        self.shape = out;
        self.layers.push(layer);
        Some(self)
    }

    /// Blank layer of `kind`; hyperparameters are filled in by the caller.
    pub fn blank(kind: LayerKind, units: u64) -> LayerSpec {
        Self::base(kind, units)
    }

    fn base(kind: LayerKind, units: u64) -> LayerSpec {
        LayerSpec {
            kind,
            in_shape: [1, 1, 1],
            out_shape: [1, 1, 1],
            units,
            kernel_size: 1,
            stride: 1,
            padding: Padding::None,
            activation: Activation::Linear,
            reuse_factor: None,
        }
    }

    pub fn dense(self, units: u64, activation: Activation) -> Self {
        let mut l = Self::base(LayerKind::Dense, units);
        l.activation = activation;
        self.push(l)
    }

    pub fn conv1d(self, filters: u64, kernel: u64, stride: u64, padding: Padding, activation: Activation) -> Self {
        let mut l = Self::base(LayerKind::Conv1d, filters);
        l.kernel_size = kernel;
        l.stride = stride;
        l.padding = padding;
        l.activation = activation;
        self.push(l)
    }

    pub fn conv2d(self, filters: u64, kernel: u64, stride: u64, padding: Padding, activation: Activation) -> Self {
        let mut l = Self::base(LayerKind::Conv2d, filters);
        l.kernel_size = kernel;
        l.stride = stride;
        l.padding = padding;
        l.activation = activation;
        self.push(l)
    }

    /// Pooling with window and stride equal to `size`.
    pub fn pool(self, kind: LayerKind, size: u64) -> Self {
        assert!(kind.is_pool(), "{kind:?} is not a pooling layer");
        let mut l = Self::base(kind, channels_of(self.shape));
        l.kernel_size = size;
        l.stride = size;
        l.padding = Padding::Valid;
        self.push(l)
    }

    pub fn flatten(self) -> Self {
        let n = self.shape.iter().product();
        self.push(Self::base(LayerKind::Flatten, n))
    }

    pub fn activation(self, activation: Activation) -> Self {
        let mut l = Self::base(LayerKind::Activation, channels_of(self.shape));
        l.activation = activation;
        self.push(l)
    }

    pub fn batchnorm(self) -> Self {
        let l = Self::base(LayerKind::BatchNorm, channels_of(self.shape));
        self.push(l)
    }

    pub fn build(self, name: impl Into<String>) -> NetworkArchitecture {
        NetworkArchitecture { name: name.into(), layers: self.layers }
    }
}
