//! Declarative layer stacks and the four canonical architectures.
//!
//! Every architecture can be built at full paper width (`width_div = 1`) or
//! narrowed by an integer divisor, which keeps layer count, strides and
//! pooling positions intact while dividing feature-map and hidden-unit
//! counts. Output widths that carry meaning (RGB, CMYK, real/fake, printer
//! count) are never divided.

use std::fmt;

use super::NnError;

/// Slope used by every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f32 = 0.2;

/// Smallest feature-map count a divided architecture may shrink to.
pub const MIN_SCALED_MAPS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    MaxPool2x2,
    FullyConnected,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    None,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::None => x,
        }
    }

    /// Derivative expressed in terms of the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f32, y: f32) -> f32 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::None => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub stride: usize,
    /// Feature maps for convolutions, units for fully-connected layers.
    pub out: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn conv(maps: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Conv3x3,
            stride,
            out: maps,
            activation: Activation::None,
            batch_norm: false,
        }
    }

    pub fn max_pool() -> Self {
        Self {
            kind: LayerKind::MaxPool2x2,
            stride: 2,
            out: 0,
            activation: Activation::None,
            batch_norm: false,
        }
    }

    pub fn fc(units: usize) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            stride: 1,
            out: units,
            activation: Activation::None,
            batch_norm: false,
        }
    }

    pub fn softmax() -> Self {
        Self {
            kind: LayerKind::Softmax,
            stride: 1,
            out: 0,
            activation: Activation::None,
            batch_norm: false,
        }
    }

    pub fn act(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn bn(mut self) -> Self {
        self.batch_norm = true;
        self
    }

    pub fn has_weights(&self) -> bool {
        matches!(self.kind, LayerKind::Conv3x3 | LayerKind::FullyConnected)
    }

    /// Output (channels, height, width) given the input shape.
    pub fn output_shape(&self, input: (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        let (c, h, w) = input;
        if self.stride == 0 {
            return None;
        }
        match self.kind {
            LayerKind::Conv3x3 => {
                if self.out == 0 || h == 0 || w == 0 {
                    return None;
                }
                Some((self.out, (h - 1) / self.stride + 1, (w - 1) / self.stride + 1))
            }
            LayerKind::MaxPool2x2 => {
                if h < 2 || w < 2 {
                    return None;
                }
                Some((c, h / 2, w / 2))
            }
            LayerKind::FullyConnected => {
                if self.out == 0 {
                    return None;
                }
                Some((self.out, 1, 1))
            }
            LayerKind::Softmax => Some((c, h, w)),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LayerKind::Conv3x3 => write!(
                f,
                "Conv3x3, stride={}, feature maps={}",
                self.stride, self.out
            )?,
            LayerKind::MaxPool2x2 => write!(f, "MaxPool2x2, stride={}", self.stride)?,
            LayerKind::FullyConnected => write!(f, "FC{}", self.out)?,
            LayerKind::Softmax => write!(f, "Softmax")?,
        }
        if self.batch_norm {
            write!(f, " +BN")?;
        }
        match self.activation {
            Activation::Relu => write!(f, " +ReLU"),
            Activation::LeakyRelu => write!(f, " +LeakyReLU"),
            Activation::Tanh => write!(f, " +Tanh"),
            Activation::None => Ok(()),
        }
    }
}

/// Ordered layer stack with a fixed input shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    /// (channels, height, width)
    pub input_dims: (usize, usize, usize),
}

fn scaled(maps: usize, div: usize) -> usize {
    if div <= 1 {
        maps
    } else {
        (maps / div).max(MIN_SCALED_MAPS)
    }
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, input_dims: (usize, usize, usize)) -> Result<Self, NnError> {
        let spec = Self { layers, input_dims };
        spec.shape_chain()?;
        Ok(spec)
    }

    /// Input shape followed by the output shape of every layer.
    pub fn shape_chain(&self) -> Result<Vec<(usize, usize, usize)>, NnError> {
        let mut chain = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input_dims;
        chain.push(cur);
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kind == LayerKind::Softmax && (cur.1 != 1 || cur.2 != 1) {
                return Err(NnError::InvalidLayer {
                    layer: i,
                    reason: "softmax needs a flat input".into(),
                });
            }
            cur = layer.output_shape(cur).ok_or_else(|| NnError::InvalidLayer {
                layer: i,
                reason: format!("{layer} cannot consume {cur:?}"),
            })?;
            chain.push(cur);
        }
        Ok(chain)
    }

    pub fn output_dims(&self) -> (usize, usize, usize) {
        self.shape_chain()
            .map(|c| *c.last().expect("chain holds the input"))
            .unwrap_or((0, 0, 0))
    }

    /// Index one past the last layer that is not a trailing softmax.
    pub fn logits_end(&self) -> usize {
        match self.layers.last() {
            Some(l) if l.kind == LayerKind::Softmax => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Fully convolutional refiner. Strides are all 1 and the last layer
    /// emits 3 maps so that the output can be compared with the input image.
    pub fn refiner(width_div: usize) -> Self {
        let m64 = scaled(64, width_div);
        let m16 = scaled(16, width_div);
        let mut layers = Vec::with_capacity(8);
        for _ in 0..6 {
            layers.push(LayerSpec::conv(m64, 1).act(Activation::Relu));
        }
        layers.push(LayerSpec::conv(m16, 1).act(Activation::Relu));
        layers.push(LayerSpec::conv(3, 1).act(Activation::Tanh));
        Self {
            layers,
            input_dims: (3, 64, 64),
        }
    }

    pub fn discriminator(width_div: usize) -> Self {
        let m64 = scaled(64, width_div);
        let m128 = scaled(128, width_div);
        let m256 = scaled(256, width_div);
        let l = Activation::LeakyRelu;
        Self {
            layers: vec![
                LayerSpec::conv(m64, 1).act(l),
                LayerSpec::conv(m64, 2).act(l),
                LayerSpec::conv(m128, 1).act(l),
                LayerSpec::conv(m128, 2).act(l),
                LayerSpec::conv(m256, 1).act(l),
                LayerSpec::conv(m256, 2).act(l),
                LayerSpec::fc(2),
            ],
            input_dims: (3, 64, 64),
        }
    }

    /// Halftone color decomposition network: RGB block to C, M, Y, K planes.
    pub fn hcd(width_div: usize) -> Self {
        let m64 = scaled(64, width_div);
        let mut layers = Vec::with_capacity(8);
        for _ in 0..7 {
            layers.push(LayerSpec::conv(m64, 1).bn().act(Activation::Relu));
        }
        layers.push(LayerSpec::conv(4, 1).bn());
        Self {
            layers,
            input_dims: (3, 64, 64),
        }
    }

    /// Printer identification network with `n_printers` softmax outputs.
    pub fn pi(n_printers: usize, width_div: usize) -> Self {
        let m64 = scaled(64, width_div);
        let m128 = scaled(128, width_div);
        let m256 = scaled(256, width_div);
        let fc = scaled(4096, width_div);
        let conv = |maps| LayerSpec::conv(maps, 1).bn().act(Activation::Relu);
        let mut layers = Vec::with_capacity(20);
        for _ in 0..9 {
            layers.push(conv(m64));
        }
        layers.push(LayerSpec::max_pool());
        layers.push(conv(m128));
        layers.push(conv(m128));
        layers.push(LayerSpec::max_pool());
        layers.push(conv(m256));
        layers.push(conv(m256));
        layers.push(LayerSpec::max_pool());
        layers.push(LayerSpec::fc(fc).act(Activation::Relu));
        layers.push(LayerSpec::fc(fc).act(Activation::Relu));
        layers.push(LayerSpec::fc(n_printers));
        layers.push(LayerSpec::softmax());
        Self {
            layers,
            input_dims: (3, 64, 64),
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (c, h, w) = self.input_dims;
        writeln!(f, "input {c}x{h}x{w}")?;
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(f, "({}) {l}", i + 1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_shape_chain() {
        let spec = NetworkSpec::pi(8, 1);
        let chain = spec.shape_chain().unwrap();
        assert_eq!(spec.layers.len(), 20);
        // pools sit at listing positions 10, 13 and 16
        assert_eq!(chain[10], (64, 32, 32));
        assert_eq!(chain[13], (128, 16, 16));
        assert_eq!(chain[16], (256, 8, 8));
        assert_eq!(chain[17], (4096, 1, 1));
        assert_eq!(chain[18], (4096, 1, 1));
        assert_eq!(chain[19], (8, 1, 1));
        assert_eq!(chain[20], (8, 1, 1));
    }

    #[test]
    fn discriminator_shape_chain() {
        let chain = NetworkSpec::discriminator(1).shape_chain().unwrap();
        assert_eq!(chain[6], (256, 8, 8));
        assert_eq!(*chain.last().unwrap(), (2, 1, 1));
    }

    #[test]
    fn refiner_and_hcd_keep_resolution() {
        assert_eq!(NetworkSpec::refiner(1).output_dims(), (3, 64, 64));
        assert_eq!(NetworkSpec::hcd(1).output_dims(), (4, 64, 64));
        assert_eq!(NetworkSpec::hcd(8).output_dims(), (4, 64, 64));
    }

    #[test]
    fn divided_widths_keep_semantic_outputs() {
        let pi = NetworkSpec::pi(4, 8);
        assert_eq!(pi.layers[0].out, 8);
        assert_eq!(pi.layers[16].out, 512);
        assert_eq!(pi.output_dims(), (4, 1, 1));
        assert_eq!(NetworkSpec::refiner(8).layers[6].out, MIN_SCALED_MAPS);
    }

    #[test]
    fn listing_format() {
        let d = NetworkSpec::discriminator(1);
        assert_eq!(d.layers[1].to_string(), "Conv3x3, stride=2, feature maps=64 +LeakyReLU");
        assert_eq!(d.layers[6].to_string(), "FC2");
    }

    #[test]
    fn rejects_inconsistent_chain() {
        let r = NetworkSpec::new(vec![LayerSpec::conv(4, 1), LayerSpec::softmax()], (3, 8, 8));
        assert!(matches!(r, Err(NnError::InvalidLayer { layer: 1, .. })));
    }
}
