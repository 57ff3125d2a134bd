//! Directed acyclic computation graph with stable layer names.
//!
//! Nodes are stored in topological order (enforced by the builder: a node may
//! only consume previously added nodes). Every node has a unique name, either
//! assigned explicitly or generated as `<kind>_<index>` with zero-based
//! per-kind counters; the first `flatten` is named bare `flatten`.

use std::collections::HashMap;

use ndarray::IxDyn;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::init;
use super::layers::*;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown layer '{0}'; valid layers: {1}")]
    UnknownLayer(String, String),
    #[error("input shape {got:?} does not match graph input {want:?}")]
    InputShape { got: Vec<usize>, want: Vec<usize> },
}

#[derive(Debug, Clone)]
pub enum LayerKind<F: Scalar> {
    Input,
    Conv2d(Conv2d<F>),
    DepthwiseConv2d(DepthwiseConv2d<F>),
    Dense(Dense<F>),
    BatchNorm(BatchNorm<F>),
    Relu,
    Softmax,
    MaxPool { pool: usize, stride: usize, padding: Padding },
    AvgPool { pool: usize, stride: usize },
    GlobalAvgPool,
    Upsample { factor: usize },
    Dropout { rate: f64 },
    Flatten,
    Reshape { per_sample: Vec<usize> },
    Add,
    Concat,
}

impl<F: Scalar> LayerKind<F> {
    fn kind_key(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv2d(_) => "conv2d",
            LayerKind::DepthwiseConv2d(_) => "depthwise_conv2d",
            LayerKind::Dense(_) => "dense",
            LayerKind::BatchNorm(_) => "batch_norm",
            LayerKind::Relu => "activation",
            LayerKind::Softmax => "softmax",
            LayerKind::MaxPool { .. } => "max_pooling",
            LayerKind::AvgPool { .. } => "average_pooling",
            LayerKind::GlobalAvgPool => "global_average_pooling",
            LayerKind::Upsample { .. } => "up_sampling",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Reshape { .. } => "reshape",
            LayerKind::Add => "add",
            LayerKind::Concat => "concatenate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node<F: Scalar> {
    pub name: String,
    pub kind: LayerKind<F>,
    pub inputs: Vec<usize>,
    /// Per-sample output shape (batch axis excluded), fixed at build time.
    pub out_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Graph<F: Scalar> {
    pub nodes: Vec<Node<F>>,
    pub input_shape: Vec<usize>,
    pub output: usize,
    names: HashMap<String, usize>,
}

/// Activations for every node of one forward pass (training mode also keeps
/// layer caches needed by backward).
pub struct ForwardPass<F: Scalar> {
    pub activations: Vec<Tensor<F>>,
    caches: Vec<Cache<F>>,
}

impl<F: Scalar> ForwardPass<F> {
    pub fn output<'a>(&'a self, graph: &Graph<F>) -> &'a Tensor<F> {
        &self.activations[graph.output]
    }
}

pub enum Mode<'r> {
    Train(&'r mut ChaCha8Rng),
    Infer,
}

impl<F: Scalar> Graph<F> {
    pub fn node_id(&self, name: &str) -> Option<usize> {
        self.names.get(name).copied()
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    pub fn out_shape_of(&self, name: &str) -> Option<&[usize]> {
        self.node_id(name).map(|i| self.nodes[i].out_shape.as_slice())
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(), GraphError> {
        let got = &x.shape()[1..];
        if got != self.input_shape.as_slice() {
            return Err(GraphError::InputShape {
                got: got.to_vec(),
                want: self.input_shape.clone(),
            });
        }
        Ok(())
    }

    /// Forward pass through every node. Training mode applies dropout, uses
    /// batch statistics in batch-norm layers (updating their moving averages)
    /// and records caches for [`Graph::backward`].
    pub fn forward(&mut self, x: &Tensor<F>, mode: Mode) -> Result<ForwardPass<F>, GraphError> {
        self.check_input(x)?;
        let mut rng = match mode {
            Mode::Train(r) => Some(r),
            Mode::Infer => None,
        };
        let mut activations: Vec<Tensor<F>> = Vec::with_capacity(self.nodes.len());
        let mut caches: Vec<Cache<F>> = Vec::with_capacity(self.nodes.len());
        for id in 0..self.nodes.len() {
            let inputs_idx = self.nodes[id].inputs.clone();
            let ins: Vec<&Tensor<F>> = inputs_idx.iter().map(|&i| &activations[i]).collect();
            let (y, cache) = match &mut self.nodes[id].kind {
                LayerKind::Input => (x.clone(), Cache::None),
                LayerKind::Conv2d(l) => (l.forward(ins[0]), Cache::None),
                LayerKind::DepthwiseConv2d(l) => (l.forward(ins[0]), Cache::None),
                LayerKind::Dense(l) => (l.forward(ins[0]), Cache::None),
                LayerKind::BatchNorm(l) => match &mut rng {
                    Some(_) => l.forward_train(ins[0]),
                    None => (l.forward_infer(ins[0]), Cache::None),
                },
                LayerKind::Relu => (relu_forward(ins[0]), Cache::None),
                LayerKind::Softmax => (softmax_forward(ins[0]), Cache::None),
                LayerKind::MaxPool { pool, stride, padding } => {
                    max_pool_forward(ins[0], *pool, *stride, *padding)
                }
                LayerKind::AvgPool { pool, stride } => {
                    (avg_pool_forward(ins[0], *pool, *stride), Cache::None)
                }
                LayerKind::GlobalAvgPool => (global_avg_pool_forward(ins[0]), Cache::None),
                LayerKind::Upsample { factor } => (upsample_forward(ins[0], *factor), Cache::None),
                LayerKind::Dropout { rate } => match &mut rng {
                    Some(r) => dropout_forward(ins[0], *rate, r),
                    None => (ins[0].clone(), Cache::None),
                },
                LayerKind::Flatten => (flatten_forward(ins[0]), Cache::None),
                LayerKind::Reshape { per_sample } => {
                    (reshape_forward(ins[0], per_sample), Cache::None)
                }
                LayerKind::Add => {
                    let mut acc = ins[0].clone();
                    for t in &ins[1..] {
                        acc += *t;
                    }
                    (acc, Cache::None)
                }
                LayerKind::Concat => (concat_forward(&ins), Cache::None),
            };
            activations.push(y);
            caches.push(cache);
        }
        Ok(ForwardPass { activations, caches })
    }

    /// Inference-only forward returning the output tensor.
    pub fn infer(&mut self, x: &Tensor<F>) -> Result<Tensor<F>, GraphError> {
        let pass = self.forward(x, Mode::Infer)?;
        Ok(pass.activations[self.output].clone())
    }

    /// Reverse pass: accumulates parameter gradients from `d_out`, the loss
    /// gradient w.r.t. the graph output of `pass`.
    pub fn backward(&mut self, pass: &ForwardPass<F>, d_out: Tensor<F>) {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<F>>> = (0..n).map(|_| None).collect();
        grads[self.output] = Some(d_out);
        for id in (0..n).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let inputs_idx = self.nodes[id].inputs.clone();
            let ins: Vec<&Tensor<F>> = inputs_idx.iter().map(|&i| &pass.activations[i]).collect();
            let input_grads: Vec<Tensor<F>> = match &mut self.nodes[id].kind {
                LayerKind::Input => Vec::new(),
                LayerKind::Conv2d(l) => vec![l.backward(ins[0], &dy)],
                LayerKind::DepthwiseConv2d(l) => vec![l.backward(ins[0], &dy)],
                LayerKind::Dense(l) => vec![l.backward(ins[0], &dy)],
                LayerKind::BatchNorm(l) => vec![l.backward(&pass.caches[id], &dy)],
                LayerKind::Relu => vec![relu_backward(ins[0], &dy)],
                LayerKind::Softmax => vec![softmax_backward(&pass.activations[id], &dy)],
                LayerKind::MaxPool { .. } => {
                    vec![max_pool_backward(ins[0].shape(), &pass.caches[id], &dy)]
                }
                LayerKind::AvgPool { pool, stride } => {
                    vec![avg_pool_backward(ins[0].shape(), *pool, *stride, &dy)]
                }
                LayerKind::GlobalAvgPool => vec![global_avg_pool_backward(ins[0].shape(), &dy)],
                LayerKind::Upsample { factor } => vec![upsample_backward(*factor, &dy)],
                LayerKind::Dropout { .. } => match &pass.caches[id] {
                    Cache::Dropout { .. } => vec![dropout_backward(&pass.caches[id], &dy)],
                    _ => vec![dy.clone()],
                },
                LayerKind::Flatten | LayerKind::Reshape { .. } => {
                    vec![dy
                        .view()
                        .into_shape_with_order(ins[0].raw_dim())
                        .expect("reshape grads")
                        .to_owned()]
                }
                LayerKind::Add => inputs_idx.iter().map(|_| dy.clone()).collect(),
                LayerKind::Concat => concat_backward(&ins, &dy),
            };
            for (&src, g) in inputs_idx.iter().zip(input_grads) {
                match &mut grads[src] {
                    Some(acc) => *acc += &g,
                    slot => *slot = Some(g),
                }
            }
        }
    }

    /// Visit every parameter tensor (trainable and moving statistics) as
    /// `(name, tensor)` in deterministic node order.
    pub fn visit_params(&self, mut f: impl FnMut(String, &Tensor<F>)) {
        for node in &self.nodes {
            match &node.kind {
                LayerKind::Conv2d(l) => {
                    f(format!("{}.kernel", node.name), &l.kernel.value);
                    if let Some(b) = &l.bias {
                        f(format!("{}.bias", node.name), &b.value);
                    }
                }
                LayerKind::DepthwiseConv2d(l) => {
                    f(format!("{}.kernel", node.name), &l.kernel.value);
                    if let Some(b) = &l.bias {
                        f(format!("{}.bias", node.name), &b.value);
                    }
                }
                LayerKind::Dense(l) => {
                    f(format!("{}.kernel", node.name), &l.weight.value);
                    f(format!("{}.bias", node.name), &l.bias.value);
                }
                LayerKind::BatchNorm(l) => {
                    f(format!("{}.gamma", node.name), &l.gamma.value);
                    f(format!("{}.beta", node.name), &l.beta.value);
                    f(format!("{}.moving_mean", node.name), &l.moving_mean.clone().into_dyn());
                    f(format!("{}.moving_var", node.name), &l.moving_var.clone().into_dyn());
                }
                _ => {}
            }
        }
    }

    /// Visit every trainable parameter as `(name, value, grad)`.
    pub fn visit_trainables(&mut self, mut f: impl FnMut(String, &mut Tensor<F>, &mut Tensor<F>)) {
        for node in &mut self.nodes {
            match &mut node.kind {
                LayerKind::Conv2d(l) => {
                    f(format!("{}.kernel", node.name), &mut l.kernel.value, &mut l.kernel.grad);
                    if let Some(b) = &mut l.bias {
                        f(format!("{}.bias", node.name), &mut b.value, &mut b.grad);
                    }
                }
                LayerKind::DepthwiseConv2d(l) => {
                    f(format!("{}.kernel", node.name), &mut l.kernel.value, &mut l.kernel.grad);
                    if let Some(b) = &mut l.bias {
                        f(format!("{}.bias", node.name), &mut b.value, &mut b.grad);
                    }
                }
                LayerKind::Dense(l) => {
                    f(format!("{}.kernel", node.name), &mut l.weight.value, &mut l.weight.grad);
                    f(format!("{}.bias", node.name), &mut l.bias.value, &mut l.bias.grad);
                }
                LayerKind::BatchNorm(l) => {
                    f(format!("{}.gamma", node.name), &mut l.gamma.value, &mut l.gamma.grad);
                    f(format!("{}.beta", node.name), &mut l.beta.value, &mut l.beta.grad);
                }
                _ => {}
            }
        }
    }

    /// Overwrite a stored parameter by name (used by checkpoint loading).
    /// Moving statistics are addressable too. Returns false on unknown name
    /// or shape mismatch.
    pub fn set_param(&mut self, name: &str, value: Tensor<F>) -> bool {
        let Some((node_name, field)) = name.rsplit_once('.') else {
            return false;
        };
        let Some(&id) = self.names.get(node_name) else {
            return false;
        };
        fn put<F: Scalar>(p: &mut Param<F>, v: Tensor<F>) -> bool {
            if p.value.shape() != v.shape() {
                return false;
            }
            p.value = v;
            true
        }
        match (&mut self.nodes[id].kind, field) {
            (LayerKind::Conv2d(l), "kernel") => put(&mut l.kernel, value),
            (LayerKind::Conv2d(l), "bias") => l.bias.as_mut().is_some_and(|b| put(b, value)),
            (LayerKind::DepthwiseConv2d(l), "kernel") => put(&mut l.kernel, value),
            (LayerKind::DepthwiseConv2d(l), "bias") => {
                l.bias.as_mut().is_some_and(|b| put(b, value))
            }
            (LayerKind::Dense(l), "kernel") => put(&mut l.weight, value),
            (LayerKind::Dense(l), "bias") => put(&mut l.bias, value),
            (LayerKind::BatchNorm(l), "gamma") => put(&mut l.gamma, value),
            (LayerKind::BatchNorm(l), "beta") => put(&mut l.beta, value),
            (LayerKind::BatchNorm(l), "moving_mean") => {
                match value.into_dimensionality::<ndarray::Ix1>() {
                    Ok(v) if v.len() == l.moving_mean.len() => {
                        l.moving_mean = v;
                        true
                    }
                    _ => false,
                }
            }
            (LayerKind::BatchNorm(l), "moving_var") => {
                match value.into_dimensionality::<ndarray::Ix1>() {
                    Ok(v) if v.len() == l.moving_var.len() => {
                        l.moving_var = v;
                        true
                    }
                    _ => false,
                }
            }
            _ => false,
        }
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        for node in &self.nodes {
            match &node.kind {
                LayerKind::Conv2d(l) => {
                    count += l.kernel.len() + l.bias.as_ref().map_or(0, Param::len)
                }
                LayerKind::DepthwiseConv2d(l) => {
                    count += l.kernel.len() + l.bias.as_ref().map_or(0, Param::len)
                }
                LayerKind::Dense(l) => count += l.weight.len() + l.bias.len(),
                LayerKind::BatchNorm(l) => count += l.gamma.len() + l.beta.len(),
                _ => {}
            }
        }
        count
    }

    pub fn zero_grads(&mut self) {
        self.visit_trainables(|_, _, g| g.fill(F::zero()));
    }
}

/// Incremental graph constructor with shape inference and name assignment.
pub struct GraphBuilder<F: Scalar> {
    nodes: Vec<Node<F>>,
    names: HashMap<String, usize>,
    counters: HashMap<&'static str, usize>,
    rng: ChaCha8Rng,
}

/// Handle to a node added to a [`GraphBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

impl<F: Scalar> GraphBuilder<F> {
    /// `input_shape` is the per-sample shape (e.g. `[96, 96, 1]` for images,
    /// `[d]` for vectors); `init_seed` drives weight initialization.
    pub fn new(input_shape: &[usize], init_seed: u64) -> (Self, NodeId) {
        let mut b = Self {
            nodes: Vec::new(),
            names: HashMap::new(),
            counters: HashMap::new(),
            rng: init::init_rng(init_seed),
        };
        let id = b.push(LayerKind::Input, &[], input_shape.to_vec(), None);
        (b, id)
    }

    fn auto_name(&mut self, key: &'static str) -> String {
        let n = self.counters.entry(key).or_insert(0);
        let name = if key == "flatten" && *n == 0 {
            key.to_string()
        } else {
            format!("{key}_{n}")
        };
        *n += 1;
        name
    }

    fn push(
        &mut self,
        kind: LayerKind<F>,
        inputs: &[NodeId],
        out_shape: Vec<usize>,
        name: Option<&str>,
    ) -> NodeId {
        let name = match name {
            Some(s) => s.to_string(),
            None => self.auto_name(kind.kind_key()),
        };
        assert!(
            !self.names.contains_key(&name),
            "duplicate layer name '{name}'"
        );
        let id = self.nodes.len();
        self.names.insert(name.clone(), id);
        self.nodes.push(Node {
            name,
            kind,
            inputs: inputs.iter().map(|n| n.0).collect(),
            out_shape,
        });
        NodeId(id)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].out_shape
    }

    fn hwc(&self, id: NodeId) -> (usize, usize, usize) {
        let s = self.shape(id);
        assert_eq!(s.len(), 3, "expected HWC node, got shape {s:?}");
        (s[0], s[1], s[2])
    }

    pub fn conv(
        &mut self,
        x: NodeId,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
        name: Option<&str>,
    ) -> NodeId {
        let (h, w, c) = self.hwc(x);
        let fan_in = kernel * kernel * c;
        let k = init::fan_in_uniform(&mut self.rng, &[kernel, kernel, c, filters], fan_in);
        let layer = Conv2d {
            kernel: Param::new(k),
            bias: bias.then(|| Param::new(Tensor::zeros(IxDyn(&[filters])))),
            stride,
            padding,
        };
        let (oh, _) = padding.resolve(h, kernel, stride);
        let (ow, _) = padding.resolve(w, kernel, stride);
        self.push(LayerKind::Conv2d(layer), &[x], vec![oh, ow, filters], name)
    }

    pub fn depthwise(
        &mut self,
        x: NodeId,
        kernel: usize,
        stride: usize,
        padding: Padding,
        name: Option<&str>,
    ) -> NodeId {
        let (h, w, c) = self.hwc(x);
        let fan_in = kernel * kernel;
        let k = init::fan_in_uniform(&mut self.rng, &[kernel, kernel, c], fan_in);
        let layer = DepthwiseConv2d {
            kernel: Param::new(k),
            bias: None,
            stride,
            padding,
        };
        let (oh, _) = padding.resolve(h, kernel, stride);
        let (ow, _) = padding.resolve(w, kernel, stride);
        self.push(
            LayerKind::DepthwiseConv2d(layer),
            &[x],
            vec![oh, ow, c],
            name,
        )
    }

    pub fn dense(&mut self, x: NodeId, units: usize, name: Option<&str>) -> NodeId {
        let s = self.shape(x);
        assert_eq!(s.len(), 1, "dense expects flattened input, got {s:?}");
        let d_in = s[0];
        let w = init::fan_in_uniform(&mut self.rng, &[d_in, units], d_in);
        let layer = Dense {
            weight: Param::new(w),
            bias: Param::new(Tensor::zeros(IxDyn(&[units]))),
        };
        self.push(LayerKind::Dense(layer), &[x], vec![units], name)
    }

    pub fn batch_norm(&mut self, x: NodeId, name: Option<&str>) -> NodeId {
        let c = *self.shape(x).last().unwrap();
        let shape = self.shape(x).to_vec();
        self.push(LayerKind::BatchNorm(BatchNorm::new(c)), &[x], shape, name)
    }

    pub fn relu(&mut self, x: NodeId, name: Option<&str>) -> NodeId {
        let shape = self.shape(x).to_vec();
        self.push(LayerKind::Relu, &[x], shape, name)
    }

    pub fn softmax(&mut self, x: NodeId, name: Option<&str>) -> NodeId {
        let shape = self.shape(x).to_vec();
        self.push(LayerKind::Softmax, &[x], shape, name)
    }

    pub fn max_pool(
        &mut self,
        x: NodeId,
        pool: usize,
        stride: usize,
        padding: Padding,
        name: Option<&str>,
    ) -> NodeId {
        let (h, w, c) = self.hwc(x);
        let (oh, _) = padding.resolve(h, pool, stride);
        let (ow, _) = padding.resolve(w, pool, stride);
        self.push(
            LayerKind::MaxPool { pool, stride, padding },
            &[x],
            vec![oh, ow, c],
            name,
        )
    }

    pub fn avg_pool(&mut self, x: NodeId, pool: usize, stride: usize, name: Option<&str>) -> NodeId {
        let (h, w, c) = self.hwc(x);
        let (oh, _) = Padding::Valid.resolve(h, pool, stride);
        let (ow, _) = Padding::Valid.resolve(w, pool, stride);
        self.push(LayerKind::AvgPool { pool, stride }, &[x], vec![oh, ow, c], name)
    }

    pub fn global_avg_pool(&mut self, x: NodeId, name: Option<&str>) -> NodeId {
        let (_, _, c) = self.hwc(x);
        self.push(LayerKind::GlobalAvgPool, &[x], vec![c], name)
    }

    pub fn upsample(&mut self, x: NodeId, factor: usize, name: Option<&str>) -> NodeId {
        let (h, w, c) = self.hwc(x);
        self.push(
            LayerKind::Upsample { factor },
            &[x],
            vec![h * factor, w * factor, c],
            name,
        )
    }

    pub fn dropout(&mut self, x: NodeId, rate: f64, name: Option<&str>) -> NodeId {
        let shape = self.shape(x).to_vec();
        self.push(LayerKind::Dropout { rate }, &[x], shape, name)
    }

    pub fn flatten(&mut self, x: NodeId, name: Option<&str>) -> NodeId {
        let d: usize = self.shape(x).iter().product();
        self.push(LayerKind::Flatten, &[x], vec![d], name)
    }

    pub fn reshape(&mut self, x: NodeId, per_sample: &[usize], name: Option<&str>) -> NodeId {
        let d: usize = self.shape(x).iter().product();
        assert_eq!(d, per_sample.iter().product::<usize>(), "reshape size mismatch");
        self.push(
            LayerKind::Reshape { per_sample: per_sample.to_vec() },
            &[x],
            per_sample.to_vec(),
            name,
        )
    }

    pub fn add(&mut self, xs: &[NodeId], name: Option<&str>) -> NodeId {
        let shape = self.shape(xs[0]).to_vec();
        for x in xs {
            assert_eq!(self.shape(*x), shape.as_slice(), "add shape mismatch");
        }
        self.push(LayerKind::Add, xs, shape, name)
    }

    pub fn concat(&mut self, xs: &[NodeId], name: Option<&str>) -> NodeId {
        let mut shape = self.shape(xs[0]).to_vec();
        let last = shape.len() - 1;
        for x in &xs[1..] {
            let s = self.shape(*x);
            assert_eq!(s[..last], shape[..last], "concat leading dims mismatch");
        }
        shape[last] = xs.iter().map(|x| *self.shape(*x).last().unwrap()).sum();
        self.push(LayerKind::Concat, xs, shape, name)
    }

    pub fn finish(self, output: NodeId) -> Graph<F> {
        let input_shape = self.nodes[0].out_shape.clone();
        Graph {
            nodes: self.nodes,
            input_shape,
            output: output.0,
            names: self.names,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_classifier() -> Graph<f64> {
        let (mut b, x) = GraphBuilder::<f64>::new(&[6, 6, 1], 9);
        let c = b.conv(x, 2, 3, 1, Padding::Same, true, None);
        let r = b.relu(c, None);
        let p = b.max_pool(r, 2, 2, Padding::Valid, None);
        let f = b.flatten(p, None);
        let d = b.dense(f, 3, None);
        let s = b.softmax(d, None);
        b.finish(s)
    }

    #[test]
    fn names_are_zero_indexed_and_flatten_bare() {
        let g = tiny_classifier();
        let names = g.layer_names();
        assert_eq!(
            names,
            vec![
                "input_0",
                "conv2d_0",
                "activation_0",
                "max_pooling_0",
                "flatten",
                "dense_0",
                "softmax_0"
            ]
        );
    }

    #[test]
    fn forward_shapes_and_softmax_sum() {
        let mut g = tiny_classifier();
        let x = Tensor::from_elem(IxDyn(&[4, 6, 6, 1]), 0.5f64);
        let y = g.infer(&x).unwrap();
        assert_eq!(y.shape(), &[4, 3]);
        for i in 0..4 {
            let s: f64 = y.slice(ndarray::s![i, ..]).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn input_shape_mismatch_is_error() {
        let mut g = tiny_classifier();
        let x = Tensor::from_elem(IxDyn(&[1, 5, 5, 1]), 0.0f64);
        assert!(g.infer(&x).is_err());
    }

    #[test]
    fn infer_is_deterministic_with_dropout_present() {
        let (mut b, x) = GraphBuilder::<f64>::new(&[4], 3);
        let d = b.dropout(x, 0.5, None);
        let dn = b.dense(d, 2, None);
        let mut g = b.finish(dn);
        let x = Tensor::from_elem(IxDyn(&[2, 4]), 1.0f64);
        let y1 = g.infer(&x).unwrap();
        let y2 = g.infer(&x).unwrap();
        assert_eq!(y1, y2);
        // but training mode does mask
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = g.forward(&x, Mode::Train(&mut rng)).unwrap();
        assert_ne!(p.activations[1], x);
    }

    #[test]
    fn set_param_validates_names_and_shapes() {
        let mut g = tiny_classifier();
        assert!(!g.set_param("nope.kernel", Tensor::zeros(IxDyn(&[1]))));
        assert!(!g.set_param("conv2d_0.kernel", Tensor::zeros(IxDyn(&[1]))));
        assert!(g.set_param("conv2d_0.kernel", Tensor::zeros(IxDyn(&[3, 3, 1, 2]))));
    }

    #[test]
    fn param_count_matches_manual() {
        let g = tiny_classifier();
        // conv 3*3*1*2 + bias 2 + dense 18*3 + bias 3
        assert_eq!(g.param_count(), 18 + 2 + 2 * 9 * 3 + 3);
    }
}
