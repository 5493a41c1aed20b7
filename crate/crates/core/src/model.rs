//! Fully connected scorer `f` with posterior output `η̂ = σ(f(x))`.
//!
//! Layers are stored as `(out × in)` weight matrices plus a bias vector.
//! Hidden layers apply a smooth activation; the output layer is affine and
//! feeds the logistic function. Gradients are exact (hand-written backprop).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are kept inside `[EPS_CLAMP, 1 - EPS_CLAMP]` so every log
/// downstream stays finite.
pub const EPS_CLAMP: f64 = 1e-7;

const CHECKPOINT_MAGIC: &str = "pu-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Softsign,
    Tanh,
    Logistic,
}

impl Activation {
    fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Softsign => t / (1.0 + t.abs()),
            Activation::Tanh => t.tanh(),
            Activation::Logistic => sigmoid(t),
        }
    }

    fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Softsign => {
                let s = 1.0 + t.abs();
                1.0 / (s * s)
            }
            Activation::Tanh => {
                let th = t.tanh();
                1.0 - th * th
            }
            Activation::Logistic => {
                let s = sigmoid(t);
                s * (1.0 - s)
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Softsign => "softsign",
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softsign" => Ok(Activation::Softsign),
            "tanh" => Ok(Activation::Tanh),
            "logistic" => Ok(Activation::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Increasing logistic function, evaluated without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_eta(eta: f64) -> f64 {
    eta.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            weights: Array2::zeros((n_out, n_in)),
            bias: Array1::zeros(n_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_out(), self.n_in())
    }

    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights (row-major) then bias, as contiguous mutable slices.
    pub fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn slices(&self) -> [&[f64]; 2] {
        [
            self.weights.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }
}

/// Parameters of the scorer. Shapes run `d → h_1 → … → 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Gradient of a scalar objective with respect to every parameter; same
/// layout as [`PredictorParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &PredictorParams) -> Self {
        Self {
            layers: params.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.slices().iter().all(|s| s.iter().all(|v| v.is_finite())))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

/// Activations recorded by [`PredictorParams::forward`] for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer: `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Array2<f64>>,
    eta: Array1<f64>,
}

impl ForwardCache {
    pub fn eta(&self) -> &Array1<f64> {
        &self.eta
    }

    pub fn batch_size(&self) -> usize {
        self.eta.len()
    }
}

impl PredictorParams {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a predictor needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.n_out() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} but {} outputs",
                    layer.bias.len(),
                    layer.n_out()
                )));
            }
            if !layer.weights.is_standard_layout() || !layer.bias.is_standard_layout() {
                return Err(Error::Shape(format!("layer {i}: non-contiguous storage")));
            }
            if layer.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidArgument(format!("layer {i}: non-finite parameter")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].n_out(),
                    i + 1,
                    pair[1].n_in()
                )));
            }
        }
        let last = layers.last().expect("non-empty");
        if last.n_out() != 1 {
            return Err(Error::Shape(format!(
                "final layer must output one score, got {}",
                last.n_out()
            )));
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    /// `[d, h_1, …, 1]`
    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::n_out))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    /// Overwrites every parameter from a vector laid out like [`Self::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut rest = flat;
        for layer in &mut self.layers {
            for dst in layer.slices_mut() {
                let (head, tail) = rest.split_at(dst.len());
                dst.copy_from_slice(head);
                rest = tail;
            }
        }
        Ok(())
    }

    /// Raw scores `f(x)` for every row.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let mut a = x.to_owned();
        let n_layers = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            if i + 1 < n_layers {
                z.mapv_inplace(|t| self.activation.apply(t));
            }
            a = z;
        }
        Ok(a.index_axis_move(Axis(1), 0))
    }

    /// Clamped posteriors without keeping the cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.scores(x)?.mapv(|t| clamp_eta(sigmoid(t))))
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            let next = if i + 1 < n_layers {
                z.mapv(|t| self.activation.apply(t))
            } else {
                z.clone()
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        let eta = a.index_axis_move(Axis(1), 0).mapv(|t| clamp_eta(sigmoid(t)));
        let cache = ForwardCache {
            inputs,
            pre,
            eta: eta.clone(),
        };
        Ok((eta, cache))
    }

    /// Back-propagates `∂L/∂η̂` through the logistic output and every layer,
    /// with `∂η̂/∂f = η̂(1 − η̂)`.
    pub fn backward(&self, cache: &ForwardCache, dl_deta: ArrayView1<f64>) -> Result<Gradients> {
        self.check_cache(cache)?;
        if dl_deta.len() != cache.batch_size() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries for a batch of {}",
                dl_deta.len(),
                cache.batch_size()
            )));
        }
        let dl_df: Array1<f64> = dl_deta
            .iter()
            .zip(cache.eta.iter())
            .map(|(g, e)| g * e * (1.0 - e))
            .collect();
        let mut delta = dl_df.insert_axis(Axis(1));

        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let weights = delta.t().dot(&cache.inputs[i]);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&layer.weights);
                let act = self.activation;
                back.zip_mut_with(&cache.pre[i - 1], |b, &z| *b *= act.derivative(z));
                delta = back;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let consistent = cache.inputs.len() == self.layers.len()
            && cache.pre.len() == self.layers.len()
            && self.layers.iter().zip(&cache.inputs).zip(&cache.pre).all(|((l, a), z)| {
                a.ncols() == l.n_in()
                    && z.ncols() == l.n_out()
                    && a.nrows() == cache.batch_size()
                    && z.nrows() == cache.batch_size()
            });
        if consistent {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "forward cache does not match a model of shape {:?}",
                self.shape()
            )))
        }
    }

    /// Text checkpoint: a magic line, the activation, the shape, then for each
    /// layer its weight rows followed by its bias, whitespace separated.
    /// Values use Rust's shortest round-trip float formatting.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "activation {}", self.activation)?;
        let shape: Vec<String> = self.shape().iter().map(usize::to_string).collect();
        writeln!(w, "shape {}", shape.join(" "))?;
        for layer in &self.layers {
            for row in layer.weights.rows() {
                write_values(&mut w, row.iter())?;
            }
            write_values(&mut w, layer.bias.iter())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self> {
        let mut offset = 0u64;
        let mut all = Vec::new();
        for l in r.lines() {
            let line = l.map_err(|e| Error::parse(offset, e.to_string()))?;
            let at = offset;
            offset += line.len() as u64 + 1;
            all.push((at, line));
        }
        let mut lines = all.into_iter();
        let mut next = |what: &str| -> Result<(u64, String)> {
            lines
                .next()
                .ok_or_else(|| Error::parse(offset, format!("missing {what}")))
        };

        let (at, magic) = next("magic line")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(Error::parse(at, "not a checkpoint file"));
        }
        let (at, act) = next("activation line")?;
        let activation = act
            .strip_prefix("activation ")
            .ok_or_else(|| Error::parse(at, "expected `activation <name>`"))?
            .trim()
            .parse()?;
        let (at, shape_line) = next("shape line")?;
        let shape: Vec<usize> = shape_line
            .strip_prefix("shape ")
            .ok_or_else(|| Error::parse(at, "expected `shape <dims>`"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::parse(at, format!("bad dimension {t:?}"))))
            .collect::<Result<_>>()?;
        if shape.len() < 2 {
            return Err(Error::parse(at, "shape needs at least two dimensions"));
        }

        let mut layers = Vec::with_capacity(shape.len() - 1);
        for dims in shape.windows(2) {
            let (n_in, n_out) = (dims[0], dims[1]);
            let mut layer = Layer::zeros(n_out, n_in);
            for mut row in layer.weights.rows_mut() {
                let (at, line) = next("weight row")?;
                parse_values(at, &line, row.as_slice_mut().expect("standard layout"))?;
            }
            let (at, line) = next("bias row")?;
            parse_values(at, &line, layer.bias.as_slice_mut().expect("standard layout"))?;
            layers.push(layer);
        }
        PredictorParams::new(layers, activation)
    }
}

/// Random initial parameters: weights `N(0, 1)/√fan_in`, biases zero.
pub fn init_params(shape: &[usize], activation: Activation, seed: u64) -> Result<PredictorParams> {
    if shape.len() < 2 {
        return Err(Error::Shape(format!(
            "shape {shape:?} needs an input and an output dimension"
        )));
    }
    if shape.last() != Some(&1) {
        return Err(Error::Shape(format!("shape {shape:?} must end with 1")));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("shape {shape:?} has a zero dimension")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = shape
        .windows(2)
        .map(|dims| {
            let (n_in, n_out) = (dims[0], dims[1]);
            let scale = 1.0 / (n_in as f64).sqrt();
            let mut layer = Layer::zeros(n_out, n_in);
            layer.weights.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
            layer
        })
        .collect();
    PredictorParams::new(layers, activation)
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(Layer::len).sum());
    for layer in layers {
        for s in layer.slices() {
            out.extend_from_slice(s);
        }
    }
    out
}

fn write_values<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    w.write_all(b"\n")
}

fn parse_values(at: u64, line: &str, dst: &mut [f64]) -> Result<()> {
    let n = dst.len();
    let mut tokens = line.split_whitespace();
    for slot in dst.iter_mut() {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::parse(at, format!("expected {n} values")))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::parse(at, format!("bad number {tok:?}")))?;
    }
    if tokens.next().is_some() {
        return Err(Error::parse(at, format!("more than {n} values on the line")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn logistic(w: f64, b: f64) -> PredictorParams {
        PredictorParams::new(
            vec![Layer {
                weights: array![[w]],
                bias: array![b],
            }],
            Activation::Softsign,
        )
        .unwrap()
    }

    #[test]
    fn zero_model_predicts_one_half() {
        let p = init_params(&[3, 1], Activation::Softsign, 0).unwrap();
        let mut p0 = p.clone();
        p0.set_flat(&vec![0.0; p.n_params()]).unwrap();
        let (eta, _) = p0.forward(array![[1.0, -2.0, 5.0], [0.0, 0.0, 0.0]].view()).unwrap();
        assert_eq!(eta.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn score_two_gives_closed_form_posterior() {
        let (eta, _) = logistic(2.0, 0.0).forward(array![[1.0]].view()).unwrap();
        assert!((eta[0] - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn forward_is_repeatable_and_matches_predict() {
        let p = init_params(&[4, 5, 3, 1], Activation::Tanh, 9).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let (a, cache) = p.forward(x.view()).unwrap();
        let (b, _) = p.forward(x.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.eta(), &a);
        assert_eq!(p.predict(x.view()).unwrap(), a);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn outputs_stay_clamped() {
        let (eta, _) = logistic(1.0, 0.0).forward(array![[1e3], [-1e3]].view()).unwrap();
        assert_eq!(eta[0], 1.0 - EPS_CLAMP);
        assert_eq!(eta[1], EPS_CLAMP);
    }

    #[test]
    fn sigmoid_is_increasing() {
        let ts: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.05).collect();
        for w in ts.windows(2) {
            assert!(sigmoid(w[0]) < sigmoid(w[1]), "{} vs {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = init_params(&[3, 4, 1], Activation::Softsign, 1).unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5]];
        let (_, cache) = p.forward(x.view()).unwrap();
        let g = p.backward(&cache, Array1::zeros(2).view()).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_dimensional_logistic_gradient() {
        let p = logistic(0.0, 0.0);
        let (_, cache) = p.forward(array![[1.0]].view()).unwrap();
        let g = p.backward(&cache, array![1.0].view()).unwrap();
        assert_eq!(g.layers[0].weights[[0, 0]], 0.25);
        assert_eq!(g.layers[0].bias[0], 0.25);
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let small = init_params(&[2, 1], Activation::Softsign, 0).unwrap();
        let big = init_params(&[2, 3, 1], Activation::Softsign, 0).unwrap();
        let (_, cache) = small.forward(array![[1.0, 2.0]].view()).unwrap();
        assert!(big.backward(&cache, array![1.0].view()).is_err());
        assert!(small.backward(&cache, array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn shape_errors() {
        let p = init_params(&[2, 1], Activation::Softsign, 0).unwrap();
        assert!(p.forward(array![[1.0, 2.0, 3.0]].view()).is_err());
        assert!(init_params(&[], Activation::Softsign, 0).is_err());
        assert!(init_params(&[3], Activation::Softsign, 0).is_err());
        assert!(init_params(&[3, 2], Activation::Softsign, 0).is_err());
        let bad = vec![Layer::zeros(3, 2), Layer::zeros(1, 4)];
        assert!(PredictorParams::new(bad, Activation::Softsign).is_err());
    }

    #[test]
    fn init_structure_and_determinism() {
        let p = init_params(&[2, 1], Activation::Softsign, 42).unwrap();
        assert_eq!(p.layers().len(), 1);
        assert_eq!(p.layers()[0].weights.dim(), (1, 2));
        assert_eq!(p.layers()[0].bias, array![0.0]);
        assert_eq!(p, init_params(&[2, 1], Activation::Softsign, 42).unwrap());

        let mlp = init_params(&[784, 300, 1], Activation::Softsign, 3).unwrap();
        assert_eq!(mlp.layers()[0].weights.dim(), (300, 784));
        assert_eq!(mlp.layers()[1].weights.dim(), (1, 300));
        assert_eq!(mlp.shape(), vec![784, 300, 1]);
        let w = &mlp.layers()[0].weights;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var * 784.0 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let p = init_params(&[3, 4, 2, 1], Activation::Tanh, 17).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let back = PredictorParams::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(PredictorParams::read_checkpoint(&b"hello\n"[..]).is_err());
        let text = format!("{CHECKPOINT_MAGIC}\nactivation softsign\nshape 2 1\n1 2\n");
        let err = PredictorParams::read_checkpoint(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("bias"), "{err}");
    }
}
