//! Dense networks and teacher sources.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Layer specs for an MLP with the given hidden widths and identity output.
pub fn mlp_spec(
    in_dim: usize,
    hidden: &[usize],
    out_dim: usize,
    activation: Activation,
) -> Vec<LayerSpec> {
    let mut dims = vec![in_dim];
    dims.extend_from_slice(hidden);
    dims.push(out_dim);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last { Activation::Identity } else { activation };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    for (i, l) in spec.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::invalid("layer", alloc::format!("layer {i} has a zero dimension")));
        }
    }
    for (i, pair) in spec.windows(2).enumerate() {
        if pair[0].out_dim != pair[1].in_dim {
            return Err(Error::LayerMismatch {
                index: i + 1,
                expected: pair[1].in_dim,
                actual: pair[0].out_dim,
            });
        }
    }
    Ok(())
}

/// Stack of dense layers. Parameters are stored per layer as a weight
/// matrix `[in × out]` followed by a bias vector `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<Tensor>,
}

impl Network {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        validate_spec(&layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len() * 2);
        for l in &layers {
            let limit = libm::sqrt(6.0 / (l.in_dim + l.out_dim) as f64);
            let w = (0..l.in_dim * l.out_dim)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            params.push(Tensor::matrix(l.in_dim, l.out_dim, w)?);
            params.push(Tensor::vector(vec![0.0; l.out_dim]));
        }
        Ok(Self { layers, params })
    }

    /// Rebuilds a network from its spec and flat parameter vector.
    pub fn from_flat(layers: Vec<LayerSpec>, flat: &[f64]) -> Result<Self> {
        validate_spec(&layers)?;
        let expected: usize = layers.iter().map(LayerSpec::param_count).sum();
        if flat.len() != expected {
            return Err(Error::invalid(
                "params",
                alloc::format!("expected {expected} values, got {}", flat.len()),
            ));
        }
        let mut params = Vec::with_capacity(layers.len() * 2);
        let mut at = 0;
        for l in &layers {
            let w = flat[at..at + l.in_dim * l.out_dim].to_vec();
            at += w.len();
            let b = flat[at..at + l.out_dim].to_vec();
            at += b.len();
            params.push(Tensor::matrix(l.in_dim, l.out_dim, w)?);
            params.push(Tensor::vector(b));
        }
        Ok(Self { layers, params })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Inserts the parameters into `g` as trainable leaves.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.param(p.clone())).collect()
    }

    /// Builds the forward pass for `x: [batch × in_dim]` over bound params.
    pub fn forward_bound(&self, g: &mut Graph, bound: &[Var], x: Var) -> Result<Var> {
        let width = g.value(x).cols();
        if g.value(x).shape().len() != 2 || width != self.in_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: g.value(x).shape().to_vec(),
                right: vec![0, self.in_dim()],
            });
        }
        let mut h = x;
        for (l, wb) in self.layers.iter().zip(bound.chunks(2)) {
            let z = g.matmul(h, wb[0])?;
            let z = g.add(z, wb[1])?;
            h = match l.activation {
                Activation::Relu => g.relu(z),
                Activation::Tanh => g.tanh(z),
                Activation::Identity => z,
            };
        }
        Ok(h)
    }

    /// Logits for a batch, without gradients. Runs the same graph operations
    /// as training so values agree bit for bit.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound: Vec<Var> = self.params.iter().map(|p| g.constant(p.clone())).collect();
        let x = g.constant(batch.clone());
        let out = self.forward_bound(&mut g, &bound, x)?;
        let mut t = g.value(out).clone();
        t.zero_grad();
        Ok(t)
    }

    /// Adds the graph gradients of `bound` into the parameter grads.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(bound) {
            for (dst, src) in p.grad_mut().iter_mut().zip(g.grad(v)) {
                *dst += src;
            }
        }
    }
}

/// Exact-match lookup from input rows to teacher outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTable {
    in_dim: usize,
    out_dim: usize,
    entries: BTreeMap<Vec<u64>, Vec<f64>>,
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

impl TeacherTable {
    /// Builds a table from matching `[n × in]` inputs and `[n × out]`
    /// outputs. Repeated inputs must map to identical outputs.
    pub fn from_rows(inputs: &Tensor, outputs: &Tensor) -> Result<Self> {
        if inputs.rows() != outputs.rows() {
            return Err(Error::ShapeMismatch {
                op: "teacher_table",
                left: inputs.shape().to_vec(),
                right: outputs.shape().to_vec(),
            });
        }
        let mut entries = BTreeMap::new();
        for r in 0..inputs.rows() {
            let out = outputs.row(r).to_vec();
            if let Some(prev) = entries.insert(row_key(inputs.row(r)), out.clone()) {
                if prev != out {
                    return Err(Error::invalid(
                        "teacher_table",
                        alloc::format!("row {r} repeats an input with a different output"),
                    ));
                }
            }
        }
        Ok(Self {
            in_dim: inputs.cols(),
            out_dim: outputs.cols(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn lookup(&self, batch: &Tensor) -> Result<Tensor> {
        if batch.cols() != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "teacher_table",
                left: batch.shape().to_vec(),
                right: vec![0, self.in_dim],
            });
        }
        let mut data = Vec::with_capacity(batch.rows() * self.out_dim);
        for r in 0..batch.rows() {
            let out = self
                .entries
                .get(&row_key(batch.row(r)))
                .ok_or(Error::MissingTableEntry(r))?;
            data.extend_from_slice(out);
        }
        Tensor::matrix(batch.rows(), self.out_dim, data)
    }
}

/// Where teacher outputs come from: a trained network or a sampled
/// function table.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSource {
    Network(Network),
    Table(TeacherTable),
}

impl TeacherSource {
    /// Teacher outputs for a batch. The result is a plain tensor; it never
    /// takes part in a backward pass.
    pub fn teacher_logits(&self, batch: &Tensor) -> Result<Tensor> {
        match self {
            TeacherSource::Network(net) => net.predict(batch),
            TeacherSource::Table(table) => table.lookup(batch),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            TeacherSource::Network(net) => net.out_dim(),
            TeacherSource::Table(t) => t.out_dim(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = mlp_spec(2, &[4], 1, Activation::Relu);
        let a = Network::init(spec.clone(), 7).unwrap();
        let b = Network::init(spec, 7).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn init_respects_glorot_bounds_and_zero_bias() {
        let net = Network::init(mlp_spec(3, &[5], 2, Activation::Tanh), 1).unwrap();
        let limit = libm::sqrt(6.0 / 8.0);
        assert!(net.params()[0].data().iter().all(|w| w.abs() <= limit));
        assert!(net.params()[1].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn param_count_for_regression_student() {
        let spec = mlp_spec(1, &[128, 128], 1, Activation::Tanh);
        let net = Network::init(spec, 0).unwrap();
        // 1·128+128 + 128·128+128 + 128·1+1
        assert_eq!(net.param_count(), 16_897);
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert_eq!(Network::init(vec![], 0), Err(Error::EmptyNetwork));
    }

    #[test]
    fn mismatched_layers_name_the_pair() {
        let spec = vec![
            LayerSpec::new(2, 4, Activation::Relu),
            LayerSpec::new(3, 1, Activation::Identity),
        ];
        assert_eq!(
            Network::init(spec, 0),
            Err(Error::LayerMismatch {
                index: 1,
                expected: 3,
                actual: 4
            })
        );
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = mlp_spec(3, &[4], 2, Activation::Relu);
        let net = Network::from_flat(spec.clone(), &vec![0.0; 3 * 4 + 4 + 4 * 2 + 2]).unwrap();
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        assert!(net.predict(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = vec![LayerSpec::new(2, 2, Activation::Identity)];
        let net = Network::from_flat(spec, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = Tensor::matrix(1, 2, vec![3.0, -1.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn forward_shape_and_width_check() {
        let net = Network::init(mlp_spec(3, &[4], 2, Activation::Relu), 3).unwrap();
        let x = Tensor::matrix(5, 3, vec![0.1; 15]).unwrap();
        assert_eq!(net.predict(&x).unwrap().shape(), &[5, 2]);
        let bad = Tensor::matrix(5, 2, vec![0.1; 10]).unwrap();
        assert!(net.predict(&bad).is_err());
    }

    #[test]
    fn table_lookup_and_missing_entry() {
        let inputs = Tensor::matrix(2, 1, vec![0.25, 0.5]).unwrap();
        let outputs = Tensor::matrix(2, 1, vec![0.3, -0.1]).unwrap();
        let src = TeacherSource::Table(TeacherTable::from_rows(&inputs, &outputs).unwrap());
        let q = Tensor::matrix(1, 1, vec![0.25]).unwrap();
        assert_eq!(src.teacher_logits(&q).unwrap().data(), &[0.3]);
        let miss = Tensor::matrix(2, 1, vec![0.5, 0.75]).unwrap();
        assert_eq!(src.teacher_logits(&miss), Err(Error::MissingTableEntry(1)));
    }

    #[test]
    fn network_teacher_delegates_to_predict() {
        let net = Network::init(mlp_spec(2, &[3], 2, Activation::Relu), 9).unwrap();
        let x = Tensor::matrix(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let src = TeacherSource::Network(net.clone());
        assert_eq!(src.teacher_logits(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn graph_forward_matches_predict_bitwise() {
        let net = Network::init(mlp_spec(2, &[8, 8], 3, Activation::Tanh), 4).unwrap();
        let x = Tensor::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 1.5, -2.0]).unwrap();
        let mut g = Graph::new();
        let bound = net.bind(&mut g);
        let xv = g.constant(x.clone());
        let out = net.forward_bound(&mut g, &bound, xv).unwrap();
        assert_eq!(g.value(out).data(), net.predict(&x).unwrap().data());
    }
}
