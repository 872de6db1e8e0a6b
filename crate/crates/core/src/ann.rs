//! Architectures, activations, flat parameter layout and realization functions.
//!
//! Parameter vectors are stored flat, in exactly the order used throughout the
//! crate's formulas. For a shallow network with input dimension `d` and width
//! `H` the 1-based layout is
//!
//! | slot              | flat index (1-based) |
//! |-------------------|----------------------|
//! | `weight(i, j)`    | `(i-1)d + j`         |
//! | `inner_bias(i)`   | `dH + i`             |
//! | `outer_weight(i)` | `dH + H + i`         |
//! | `outer_bias`      | `dH + 2H + 1`        |
//!
//! Deep networks with layer dimensions `(l_0, ..., l_L)` store, layer by layer,
//! the row-major weight matrix followed by the bias vector.
//!
//! Public accessors take 1-based indices; storage is an ordinary 0-based `Vec`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar activation together with the derivative used in backpropagation.
pub trait Activation {
    fn value(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
}

/// The family `x -> (max{min{x, c}, 0})^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivationRepr", into = "ActivationRepr")]
pub enum ActivationKind {
    Relu,
    Repu { k: u32 },
    ClippedRelu { c: f64 },
    ClippedRepu { k: u32, c: f64 },
}

impl Default for ActivationKind {
    fn default() -> Self {
        ActivationKind::Relu
    }
}

impl ActivationKind {
    /// Canonical constructor: `c = +inf` folds onto the unclipped variants and
    /// `k = 1` onto the ReLU variants.
    pub fn general(k: u32, c: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("activation power k must be >= 1".into()));
        }
        if c.is_nan() || c <= 0.0 {
            return Err(Error::InvalidArgument(format!("clipping level must be positive, got {c}")));
        }
        Ok(match (k, c.is_infinite()) {
            (1, true) => ActivationKind::Relu,
            (k, true) => ActivationKind::Repu { k },
            (1, false) => ActivationKind::ClippedRelu { c },
            (k, false) => ActivationKind::ClippedRepu { k, c },
        })
    }

    pub fn power(&self) -> u32 {
        match *self {
            ActivationKind::Relu | ActivationKind::ClippedRelu { .. } => 1,
            ActivationKind::Repu { k } | ActivationKind::ClippedRepu { k, .. } => k,
        }
    }

    pub fn clip(&self) -> f64 {
        match *self {
            ActivationKind::Relu | ActivationKind::Repu { .. } => f64::INFINITY,
            ActivationKind::ClippedRelu { c } | ActivationKind::ClippedRepu { c, .. } => c,
        }
    }

    /// An open interval on which the activation is constant.
    pub fn flat_interval(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, 0.0)
    }

    /// Bias given to padding neurons by the embeddings. Every member of the
    /// family vanishes on `(-inf, 0)`; the value is pinned for determinism.
    pub fn flat_representative(&self) -> f64 {
        -1.0
    }

    /// Positive homogeneity degree, when the activation has one.
    pub fn homogeneity(&self) -> Option<u32> {
        match *self {
            ActivationKind::Relu => Some(1),
            ActivationKind::Repu { k } => Some(k),
            _ => None,
        }
    }
}

impl Activation for ActivationKind {
    #[inline]
    fn value(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Repu { k } => {
                if x > 0.0 {
                    x.powi(k as i32)
                } else {
                    0.0
                }
            }
            ActivationKind::ClippedRelu { c } => x.min(c).max(0.0),
            ActivationKind::ClippedRepu { k, c } => x.min(c).max(0.0).powi(k as i32),
        }
    }

    /// Left-derivative convention: the derivative at every kink is taken
    /// from the left, so `sigma'(0) = 0` and `sigma'(c) = 0` for clipped variants.
    #[inline]
    fn deriv(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Repu { k } => {
                if x > 0.0 {
                    k as f64 * x.powi(k as i32 - 1)
                } else {
                    0.0
                }
            }
            ActivationKind::ClippedRelu { c } => {
                if x > 0.0 && x < c {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::ClippedRepu { k, c } => {
                if x > 0.0 && x < c {
                    k as f64 * x.powi(k as i32 - 1)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivationRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
}

impl TryFrom<ActivationRepr> for ActivationKind {
    type Error = String;

    fn try_from(r: ActivationRepr) -> std::result::Result<Self, String> {
        let c = r.c.unwrap_or(f64::INFINITY);
        let k = r.k.unwrap_or(1);
        let expect_clip = matches!(r.kind.as_str(), "clipped_relu" | "clipped_repu");
        match r.kind.as_str() {
            "relu" | "repu" | "clipped_relu" | "clipped_repu" => {}
            other => return Err(format!("unknown activation kind `{other}`")),
        }
        if expect_clip && r.c.is_none() {
            return Err(format!("activation `{}` requires `c`", r.kind));
        }
        if r.kind.ends_with("relu") && k != 1 {
            return Err(format!("activation `{}` has k = 1", r.kind));
        }
        ActivationKind::general(k, c).map_err(|e| e.to_string())
    }
}

impl From<ActivationKind> for ActivationRepr {
    fn from(a: ActivationKind) -> Self {
        match a {
            ActivationKind::Relu => ActivationRepr {
                kind: "relu".into(),
                k: None,
                c: None,
            },
            ActivationKind::Repu { k } => ActivationRepr {
                kind: "repu".into(),
                k: Some(k),
                c: None,
            },
            ActivationKind::ClippedRelu { c } => ActivationRepr {
                kind: "clipped_relu".into(),
                k: None,
                c: Some(c),
            },
            ActivationKind::ClippedRepu { k, c } => ActivationRepr {
                kind: "clipped_repu".into(),
                k: Some(k),
                c: Some(c),
            },
        }
    }
}

/// One hidden layer of `width` neurons on inputs of dimension `d`, scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShallowArch {
    pub d: usize,
    pub width: usize,
    #[serde(default)]
    pub activation: ActivationKind,
}

impl ShallowArch {
    pub fn new(d: usize, width: usize, activation: ActivationKind) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArch("input dimension must be positive".into()));
        }
        Ok(ShallowArch { d, width, activation })
    }

    pub fn relu(d: usize, width: usize) -> Self {
        ShallowArch {
            d,
            width,
            activation: ActivationKind::Relu,
        }
    }

    pub fn param_count(&self) -> usize {
        self.d * self.width + 2 * self.width + 1
    }

    fn check_neuron(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.width {
            return Err(Error::IndexOutOfRange {
                what: "neuron",
                index: i,
                max: self.width,
            });
        }
        Ok(())
    }

    /// 0-based flat position of `weight(i, j)`.
    pub fn weight_index(&self, i: usize, j: usize) -> Result<usize> {
        self.check_neuron(i)?;
        if j == 0 || j > self.d {
            return Err(Error::IndexOutOfRange {
                what: "input coordinate",
                index: j,
                max: self.d,
            });
        }
        Ok((i - 1) * self.d + j - 1)
    }

    pub fn inner_bias_index(&self, i: usize) -> Result<usize> {
        self.check_neuron(i)?;
        Ok(self.d * self.width + i - 1)
    }

    pub fn outer_weight_index(&self, i: usize) -> Result<usize> {
        self.check_neuron(i)?;
        Ok(self.d * self.width + self.width + i - 1)
    }

    pub fn outer_bias_index(&self) -> usize {
        self.d * self.width + 2 * self.width
    }

    /// The `d + 1` flat positions feeding neuron `i`: its weights then its bias.
    pub fn neuron_inner_indices(&self, i: usize) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.d + 1);
        for j in 1..=self.d {
            idx.push(self.weight_index(i, j)?);
        }
        idx.push(self.inner_bias_index(i)?);
        Ok(idx)
    }

    /// Index range of the first-layer parameters (weights and inner biases).
    pub fn first_layer_len(&self) -> usize {
        self.d * self.width + self.width
    }
}

/// Fully connected network with layer dimensions `dims = (l_0, ..., l_L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepArch {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub activation: ActivationKind,
}

impl DeepArch {
    pub fn new(dims: Vec<usize>, activation: ActivationKind) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArch("need at least one affine layer (L >= 1)".into()));
        }
        if dims.iter().any(|&l| l == 0) {
            return Err(Error::InvalidArch("layer dimensions must be positive".into()));
        }
        Ok(DeepArch { dims, activation })
    }

    pub fn relu(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, ActivationKind::Relu)
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// 0-based offset of layer `k` (1-based) in the flat vector.
    pub fn layer_offset(&self, k: usize) -> usize {
        self.dims[..k].windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn check_layer(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.depth() {
            return Err(Error::IndexOutOfRange {
                what: "layer",
                index: k,
                max: self.depth(),
            });
        }
        Ok(())
    }

    pub fn weight_index(&self, k: usize, i: usize, j: usize) -> Result<usize> {
        self.check_layer(k)?;
        let (rows, cols) = (self.dims[k], self.dims[k - 1]);
        if i == 0 || i > rows {
            return Err(Error::IndexOutOfRange {
                what: "row",
                index: i,
                max: rows,
            });
        }
        if j == 0 || j > cols {
            return Err(Error::IndexOutOfRange {
                what: "column",
                index: j,
                max: cols,
            });
        }
        Ok(self.layer_offset(k) + (i - 1) * cols + j - 1)
    }

    pub fn bias_index(&self, k: usize, i: usize) -> Result<usize> {
        self.check_layer(k)?;
        let (rows, cols) = (self.dims[k], self.dims[k - 1]);
        if i == 0 || i > rows {
            return Err(Error::IndexOutOfRange {
                what: "row",
                index: i,
                max: rows,
            });
        }
        Ok(self.layer_offset(k) + rows * cols + i - 1)
    }

    /// Borrow the weight matrix (row-major) and bias of layer `k` (1-based).
    pub fn layer<'a>(&self, values: &'a [f64], k: usize) -> (&'a [f64], &'a [f64]) {
        let off = self.layer_offset(k);
        let (rows, cols) = (self.dims[k], self.dims[k - 1]);
        let w = &values[off..off + rows * cols];
        let b = &values[off + rows * cols..off + rows * cols + rows];
        (w, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    Shallow(ShallowArch),
    Deep(DeepArch),
}

impl Arch {
    pub fn param_count(&self) -> usize {
        match self {
            Arch::Shallow(s) => s.param_count(),
            Arch::Deep(d) => d.param_count(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Arch::Shallow(s) => s.d,
            Arch::Deep(d) => d.input_dim(),
        }
    }

    pub fn activation(&self) -> ActivationKind {
        match self {
            Arch::Shallow(s) => s.activation,
            Arch::Deep(d) => d.activation,
        }
    }
}

/// Flat parameter array tagged with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr")]
pub struct ParamVector {
    pub arch: Arch,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRepr {
    arch: Arch,
    values: Vec<f64>,
}

impl TryFrom<ParamRepr> for ParamVector {
    type Error = String;

    fn try_from(r: ParamRepr) -> std::result::Result<Self, String> {
        ParamVector::new(r.arch, r.values).map_err(|e| e.to_string())
    }
}

impl ParamVector {
    pub fn new(arch: Arch, values: Vec<f64>) -> Result<Self> {
        let n = arch.param_count();
        if values.len() != n {
            return Err(Error::dim("parameter vector", n, values.len()));
        }
        Ok(ParamVector { arch, values })
    }

    pub fn zeros(arch: Arch) -> Self {
        let n = arch.param_count();
        ParamVector {
            arch,
            values: vec![0.0; n],
        }
    }

    pub fn shallow(arch: ShallowArch, values: Vec<f64>) -> Result<Self> {
        Self::new(Arch::Shallow(arch), values)
    }

    pub fn deep(arch: DeepArch, values: Vec<f64>) -> Result<Self> {
        Self::new(Arch::Deep(arch), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shallow_arch(&self) -> Result<&ShallowArch> {
        match &self.arch {
            Arch::Shallow(s) => Ok(s),
            Arch::Deep(_) => Err(Error::InvalidArch("expected a shallow network".into())),
        }
    }

    pub fn deep_arch(&self) -> Result<&DeepArch> {
        match &self.arch {
            Arch::Deep(d) => Ok(d),
            Arch::Shallow(_) => Err(Error::InvalidArch("expected a deep network".into())),
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.values[self.shallow_arch()?.weight_index(i, j)?])
    }

    pub fn set_weight(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let idx = self.shallow_arch()?.weight_index(i, j)?;
        self.values[idx] = v;
        Ok(())
    }

    pub fn inner_bias(&self, i: usize) -> Result<f64> {
        Ok(self.values[self.shallow_arch()?.inner_bias_index(i)?])
    }

    pub fn set_inner_bias(&mut self, i: usize, v: f64) -> Result<()> {
        let idx = self.shallow_arch()?.inner_bias_index(i)?;
        self.values[idx] = v;
        Ok(())
    }

    pub fn outer_weight(&self, i: usize) -> Result<f64> {
        Ok(self.values[self.shallow_arch()?.outer_weight_index(i)?])
    }

    pub fn set_outer_weight(&mut self, i: usize, v: f64) -> Result<()> {
        let idx = self.shallow_arch()?.outer_weight_index(i)?;
        self.values[idx] = v;
        Ok(())
    }

    pub fn outer_bias(&self) -> Result<f64> {
        Ok(self.values[self.shallow_arch()?.outer_bias_index()])
    }

    pub fn set_outer_bias(&mut self, v: f64) -> Result<()> {
        let idx = self.shallow_arch()?.outer_bias_index();
        self.values[idx] = v;
        Ok(())
    }

    /// Scalar realization; deep networks must have output dimension 1.
    pub fn realize(&self, x: &[f64]) -> Result<f64> {
        match &self.arch {
            Arch::Shallow(s) => realize_shallow(s, &self.values, x),
            Arch::Deep(d) => {
                if d.output_dim() != 1 {
                    return Err(Error::dim("scalar output", 1, d.output_dim()));
                }
                Ok(realize_deep(d, &self.values, x)?[0])
            }
        }
    }

    /// Little-endian IEEE-754 dump of the values.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(arch: Arch, bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(Error::InvalidArgument("byte length not a multiple of 8".into()));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(arch, values)
    }
}

/// Borrowed, sliced view of a shallow parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct ShallowView<'a> {
    pub d: usize,
    pub width: usize,
    /// `width x d`, row `i` holds the weights of neuron `i + 1`.
    pub weights: &'a [f64],
    pub inner_bias: &'a [f64],
    pub outer_weight: &'a [f64],
    pub outer_bias: f64,
}

impl<'a> ShallowView<'a> {
    pub fn new(arch: &ShallowArch, values: &'a [f64]) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::dim("parameter vector", arch.param_count(), values.len()));
        }
        let (d, h) = (arch.d, arch.width);
        Ok(ShallowView {
            d,
            width: h,
            weights: &values[..d * h],
            inner_bias: &values[d * h..d * h + h],
            outer_weight: &values[d * h + h..d * h + 2 * h],
            outer_bias: values[d * h + 2 * h],
        })
    }

    /// Pre-activation of neuron `i` (0-based).
    #[inline]
    pub fn preactivation(&self, i: usize, x: &[f64]) -> f64 {
        let row = &self.weights[i * self.d..(i + 1) * self.d];
        let mut z = self.inner_bias[i];
        for (w, xj) in row.iter().zip(x) {
            z += w * xj;
        }
        z
    }

    #[inline]
    pub fn eval<A: Activation>(&self, act: &A, x: &[f64]) -> f64 {
        let mut out = self.outer_bias;
        for i in 0..self.width {
            out += self.outer_weight[i] * act.value(self.preactivation(i, x));
        }
        out
    }
}

pub fn realize_shallow(arch: &ShallowArch, values: &[f64], x: &[f64]) -> Result<f64> {
    if x.len() != arch.d {
        return Err(Error::dim("input point", arch.d, x.len()));
    }
    let view = ShallowView::new(arch, values)?;
    Ok(view.eval(&arch.activation, x))
}

pub fn realize_deep(arch: &DeepArch, values: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if values.len() != arch.param_count() {
        return Err(Error::dim("parameter vector", arch.param_count(), values.len()));
    }
    if x.len() != arch.input_dim() {
        return Err(Error::dim("input point", arch.input_dim(), x.len()));
    }
    Ok(deep_forward(arch, &arch.activation, values, x).pop().unwrap())
}

/// Pre-activations `A_k(...)` of every layer `k = 1..=L`; the last entry is the output.
pub(crate) fn deep_forward<A: Activation>(arch: &DeepArch, act: &A, values: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    deep_forward_partial(arch, act, values, x, arch.depth())
}

/// Pre-activations of layers `1..=upto`.
pub(crate) fn deep_forward_partial<A: Activation>(arch: &DeepArch, act: &A, values: &[f64], x: &[f64], upto: usize) -> Vec<Vec<f64>> {
    let depth = upto;
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut input: Vec<f64> = x.to_vec();
    for k in 1..=depth {
        let (w, b) = arch.layer(values, k);
        let cols = arch.dims[k - 1];
        let z: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(i, bi)| {
                let row = &w[i * cols..(i + 1) * cols];
                row.iter().zip(&input).fold(*bi, |acc, (wij, xj)| acc + wij * xj)
            })
            .collect();
        if k < depth {
            input = z.iter().map(|&t| act.value(t)).collect();
        }
        pre.push(z);
    }
    pre
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(ShallowArch::relu(1, 1).param_count(), 4);
        assert_eq!(ShallowArch::relu(3, 5).param_count(), 26);
        assert_eq!(ShallowArch::relu(2, 0).param_count(), 1);
        assert_eq!(DeepArch::relu(vec![1, 2, 1]).unwrap().param_count(), 7);
    }

    #[test]
    fn shallow_examples() {
        let arch = ShallowArch::relu(1, 1);
        let th = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(realize_shallow(&arch, &th, &[2.0]).unwrap(), 2.0);
        assert_eq!(realize_shallow(&arch, &th, &[-3.0]).unwrap(), 0.0);
        let c = ShallowArch::relu(3, 0);
        assert_eq!(realize_shallow(&c, &[4.25], &[1.0, -2.0, 7.0]).unwrap(), 4.25);
        assert!(matches!(
            realize_shallow(&arch, &th, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn deep_examples() {
        let arch = DeepArch::relu(vec![1, 1, 1]).unwrap();
        // w1, b1, w2, b2
        let th = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(realize_deep(&arch, &th, &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(realize_deep(&arch, &th, &[-2.0]).unwrap(), vec![0.0]);
        let arch = DeepArch::relu(vec![2, 1, 1]).unwrap();
        let th = [1.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(realize_deep(&arch, &th, &[1.0, 1.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn deep_index_layout() {
        let arch = DeepArch::relu(vec![2, 3, 1]).unwrap();
        assert_eq!(arch.weight_index(1, 1, 1).unwrap(), 0);
        assert_eq!(arch.weight_index(1, 2, 1).unwrap(), 2);
        assert_eq!(arch.bias_index(1, 1).unwrap(), 6);
        assert_eq!(arch.weight_index(2, 1, 3).unwrap(), 11);
        assert_eq!(arch.bias_index(2, 1).unwrap(), 12);
        assert!(arch.bias_index(3, 1).is_err());
    }

    #[test]
    fn activation_family() {
        let clipped = ActivationKind::general(1, 2.0).unwrap();
        assert_eq!(clipped.value(3.0), 2.0);
        assert_eq!(clipped.deriv(3.0), 0.0);
        assert_eq!(clipped.deriv(1.0), 1.0);
        assert_eq!(ActivationKind::general(1, f64::INFINITY).unwrap(), ActivationKind::Relu);
        assert_eq!(ActivationKind::general(3, f64::INFINITY).unwrap(), ActivationKind::Repu { k: 3 });
        let repu = ActivationKind::Repu { k: 2 };
        assert_eq!(repu.value(3.0), 9.0);
        assert_eq!(repu.deriv(3.0), 6.0);
        assert_eq!(ActivationKind::Relu.deriv(0.0), 0.0);
        for act in [ActivationKind::Relu, repu, clipped, ActivationKind::general(2, 0.5).unwrap()] {
            let (lo, _) = act.flat_interval();
            assert!(lo.is_infinite());
            for x in [-5.0, -1.0, -1e-9] {
                assert_eq!(act.value(x), 0.0);
            }
            assert_eq!(act.value(act.flat_representative()), 0.0);
        }
    }

    #[test]
    fn activation_json_canonicalizes() {
        let a: ActivationKind = serde_json::from_str(r#"{"kind":"clipped_repu","k":1,"c":2.0}"#).unwrap();
        assert_eq!(a, ActivationKind::ClippedRelu { c: 2.0 });
        let a: ActivationKind = serde_json::from_str(r#"{"kind":"repu","k":2}"#).unwrap();
        assert_eq!(a, ActivationKind::Repu { k: 2 });
        assert!(serde_json::from_str::<ActivationKind>(r#"{"kind":"tanh"}"#).is_err());
        assert!(serde_json::from_str::<ActivationKind>(r#"{"kind":"clipped_relu"}"#).is_err());
    }

    #[test]
    fn param_vector_json() {
        let p = ParamVector::shallow(ShallowArch::relu(1, 1), vec![1.0, 0.0, 1.0, 0.1]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ParamVector = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        let bad = r#"{"arch":{"kind":"shallow","d":1,"width":1},"values":[1,2]}"#;
        assert!(serde_json::from_str::<ParamVector>(bad).is_err());
    }
}
