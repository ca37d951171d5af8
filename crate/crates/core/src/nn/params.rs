use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerKind, NetworkSpec};
use super::tensor::{Dims, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
    BnMean,
    BnVar,
}

impl ParamKind {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamKind::BnMean | ParamKind::BnVar)
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
            ParamKind::BnScale => "bn_scale",
            ParamKind::BnShift => "bn_shift",
            ParamKind::BnMean => "bn_running_mean",
            ParamKind::BnVar => "bn_running_var",
        }
    }

    const ALL: [ParamKind; 6] = [
        ParamKind::Weight,
        ParamKind::Bias,
        ParamKind::BnScale,
        ParamKind::BnShift,
        ParamKind::BnMean,
        ParamKind::BnVar,
    ];
}

/// Identifies one parameter tensor: zero-based layer index plus role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey {
    pub layer: usize,
    pub kind: ParamKind,
}

impl ParamKey {
    pub fn new(layer: usize, kind: ParamKind) -> Self {
        Self { layer, kind }
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer{}.{}", self.layer, self.kind.name())
    }
}

impl FromStr for ParamKey {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NnError::BadParamName(s.to_string());
        let rest = s.strip_prefix("layer").ok_or_else(bad)?;
        let (idx, kind) = rest.split_once('.').ok_or_else(bad)?;
        let layer = idx.parse().map_err(|_| bad())?;
        let kind = ParamKind::ALL
            .into_iter()
            .find(|k| k.name() == kind)
            .ok_or_else(bad)?;
        Ok(ParamKey { layer, kind })
    }
}

/// Ordered map of named tensors. Used for weights, gradients and optimizer moments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<ParamKey, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor> {
        self.entries.get(&key)
    }

    pub fn get_mut(&mut self, key: ParamKey) -> Option<&mut Tensor> {
        self.entries.get_mut(&key)
    }

    pub fn insert(&mut self, key: ParamKey, t: Tensor) -> Option<Tensor> {
        self.entries.insert(key, t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&ParamKey, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn keys(&self) -> impl Iterator<Item = &ParamKey> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zero tensors with the same keys and dims as `self`.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, t)| (*k, Tensor::zeros(t.dims())))
                .collect(),
        }
    }

    /// Entries belonging to layer `layer`.
    pub fn layer(&self, layer: usize) -> impl Iterator<Item = (&ParamKey, &Tensor)> {
        self.entries.range(
            ParamKey::new(layer, ParamKind::Weight)..=ParamKey::new(layer, ParamKind::BnVar),
        )
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.values().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    pub(crate) fn require(&self, key: ParamKey) -> Result<&Tensor, NnError> {
        self.entries.get(&key).ok_or(NnError::MissingParam(key))
    }
}

/// Weights of one network plus the seed they were initialized from.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub entries: ParamSet,
    pub rng_seed: u64,
}

/// Expected dims of every parameter tensor of `spec`.
pub fn expected_param_dims(spec: &NetworkSpec) -> Result<Vec<(ParamKey, Dims)>, NnError> {
    let chain = spec.shape_chain()?;
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let (ci, hi, wi) = chain[i];
        match layer.kind {
            LayerKind::Conv3x3 => {
                out.push((
                    ParamKey::new(i, ParamKind::Weight),
                    Dims::new(layer.out, ci, 3, 3),
                ));
                out.push((ParamKey::new(i, ParamKind::Bias), Dims::new(1, layer.out, 1, 1)));
            }
            LayerKind::FullyConnected => {
                out.push((
                    ParamKey::new(i, ParamKind::Weight),
                    Dims::new(layer.out, ci * hi * wi, 1, 1),
                ));
                out.push((ParamKey::new(i, ParamKind::Bias), Dims::new(1, layer.out, 1, 1)));
            }
            LayerKind::MaxPool2x2 | LayerKind::Softmax => {}
        }
        if layer.batch_norm && layer.has_weights() {
            let d = Dims::new(1, layer.out, 1, 1);
            for kind in [
                ParamKind::BnScale,
                ParamKind::BnShift,
                ParamKind::BnMean,
                ParamKind::BnVar,
            ] {
                out.push((ParamKey::new(i, kind), d));
            }
        }
    }
    Ok(out)
}

impl NetworkParams {
    /// Checks that every tensor `spec` needs is present with the right dims
    /// and that nothing else is.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<(), NnError> {
        let expected = expected_param_dims(spec)?;
        for (key, dims) in &expected {
            let t = self.entries.require(*key)?;
            if t.dims() != *dims {
                return Err(NnError::ParamShape {
                    key: *key,
                    expected: *dims,
                    found: t.dims(),
                });
            }
        }
        if self.entries.len() != expected.len() {
            let extra = self
                .entries
                .keys()
                .find(|k| !expected.iter().any(|(e, _)| e == *k))
                .copied();
            if let Some(key) = extra {
                return Err(NnError::UnexpectedParam(key));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: ParamKey) -> Option<&Tensor> {
        self.entries.get(key)
    }
}

/// Glorot-uniform bound for a layer with the given fan-in and fan-out.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f32 {
    (6.0 / (fan_in + fan_out) as f64).sqrt() as f32
}

/// Xavier-uniform weights, zero biases, identity batch-norm.
pub fn xavier_init(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams, NnError> {
    let chain = spec.shape_chain()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = ParamSet::new();
    for (key, dims) in expected_param_dims(spec)? {
        let t = match key.kind {
            ParamKind::Weight => {
                let layer = &spec.layers[key.layer];
                let (fan_in, fan_out) = match layer.kind {
                    LayerKind::Conv3x3 => (chain[key.layer].0 * 9, layer.out * 9),
                    _ => (dims.c, dims.n),
                };
                let a = xavier_bound(fan_in, fan_out);
                let data = (0..dims.len()).map(|_| rng.gen_range(-a..=a)).collect();
                Tensor::from_vec(dims, data)?
            }
            ParamKind::Bias | ParamKind::BnShift | ParamKind::BnMean => Tensor::zeros(dims),
            ParamKind::BnScale | ParamKind::BnVar => Tensor::filled(dims, 1.0),
        };
        entries.insert(key, t);
    }
    Ok(NetworkParams {
        entries,
        rng_seed: seed,
    })
}
