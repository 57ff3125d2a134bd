//! Finite-difference verification of analytic gradients.
//!
//! Every loss evaluation reruns the training-mode forward pass with a freshly
//! seeded RNG so stochastic layers (dropout) see identical masks, keeping the
//! loss a deterministic function of the parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Mode};
use super::layers::Tensor;
use super::loss::{self, Loss};
use crate::scalar::Scalar;

/// Target specification for the checked loss.
pub enum CheckTarget<'a, F: Scalar> {
    Classes(&'a [usize]),
    Tensor { target: &'a Tensor<F>, loss: Loss },
}

#[derive(Debug, Clone)]
pub struct CoordReport {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<CoordReport>,
    pub max_rel_err: f64,
}

const FORWARD_SEED: u64 = 0x5eed_f0f0;

fn loss_value<F: Scalar>(graph: &mut Graph<F>, x: &Tensor<F>, target: &CheckTarget<F>) -> F {
    let mut rng = ChaCha8Rng::seed_from_u64(FORWARD_SEED);
    let pass = graph.forward(x, Mode::Train(&mut rng)).expect("forward");
    let out = pass.output(graph);
    match target {
        CheckTarget::Classes(t) => loss::cross_entropy(out, t).0,
        CheckTarget::Tensor { target, loss } => match loss {
            Loss::Mse => loss::mse(out, target).0,
            Loss::Mae => loss::mae(out, target).0,
            Loss::CategoricalCrossEntropy => panic!("tensor target with cross-entropy"),
        },
    }
}

fn param_layout<F: Scalar>(graph: &mut Graph<F>) -> Vec<(String, usize)> {
    let mut layout = Vec::new();
    graph.visit_trainables(|name, value, _| layout.push((name, value.len())));
    layout
}

fn read_param<F: Scalar>(graph: &mut Graph<F>, param: &str, index: usize) -> F {
    let mut out = F::zero();
    graph.visit_trainables(|name, value, _| {
        if name == param {
            out = *value.iter().nth(index).unwrap();
        }
    });
    out
}

fn write_param<F: Scalar>(graph: &mut Graph<F>, param: &str, index: usize, v: F) {
    graph.visit_trainables(|name, value, _| {
        if name == param {
            *value.iter_mut().nth(index).unwrap() = v;
        }
    });
}

fn read_grad<F: Scalar>(graph: &mut Graph<F>, param: &str, index: usize) -> F {
    let mut out = F::zero();
    graph.visit_trainables(|name, _, grad| {
        if name == param {
            out = *grad.iter().nth(index).unwrap();
        }
    });
    out
}

/// Compare analytic gradients against central finite differences on
/// `n_coords` randomly sampled parameter coordinates.
pub fn check_gradients<F: Scalar>(
    graph: &mut Graph<F>,
    x: &Tensor<F>,
    target: CheckTarget<F>,
    n_coords: usize,
    sample_seed: u64,
    h: f64,
) -> GradCheckReport {
    // analytic pass
    graph.zero_grads();
    let mut rng = ChaCha8Rng::seed_from_u64(FORWARD_SEED);
    let pass = graph.forward(x, Mode::Train(&mut rng)).expect("forward");
    let out = pass.output(graph);
    let grad_out = match &target {
        CheckTarget::Classes(t) => loss::cross_entropy(out, t).1,
        CheckTarget::Tensor { target, loss } => match loss {
            Loss::Mse => loss::mse(out, target).1,
            Loss::Mae => loss::mae(out, target).1,
            Loss::CategoricalCrossEntropy => panic!("tensor target with cross-entropy"),
        },
    };
    graph.backward(&pass, grad_out);
    drop(pass);

    let layout = param_layout(graph);
    let total: usize = layout.iter().map(|(_, n)| n).sum();
    assert!(total > 0, "graph has no trainable parameters");
    let mut pick = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut coords = Vec::with_capacity(n_coords);
    for _ in 0..n_coords {
        let mut flat = pick.random_range(0..total);
        let mut chosen = None;
        for (name, n) in &layout {
            if flat < *n {
                chosen = Some((name.clone(), flat));
                break;
            }
            flat -= n;
        }
        let (param, index) = chosen.unwrap();
        let analytic = read_grad(graph, &param, index).as_f64();
        let orig = read_param(graph, &param, index);
        let hh = F::fd(h);
        write_param(graph, &param, index, orig + hh);
        let lp = loss_value(graph, x, &target).as_f64();
        write_param(graph, &param, index, orig - hh);
        let lm = loss_value(graph, x, &target).as_f64();
        write_param(graph, &param, index, orig);
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel_err = (analytic - numeric).abs() / denom;
        coords.push(CoordReport { param, index, analytic, numeric, rel_err });
    }
    let max_rel_err = coords.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    GradCheckReport { coords, max_rel_err }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::GraphBuilder;
    use crate::nn::layers::Padding;
    use ndarray::IxDyn;

    #[test]
    fn dense_softmax_gradients_match_fd() {
        let (mut b, x) = GraphBuilder::<f64>::new(&[5], 21);
        let d1 = b.dense(x, 6, None);
        let r = b.relu(d1, None);
        let d2 = b.dense(r, 3, None);
        let s = b.softmax(d2, None);
        let mut g = b.finish(s);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_shape_fn(IxDyn(&[4, 5]), |_| rng.random_range(-1.0..1.0));
        let report = check_gradients(&mut g, &x, CheckTarget::Classes(&[0, 1, 2, 0]), 12, 7, 1e-6);
        assert!(report.max_rel_err < 1e-6, "{report:#?}");
    }

    #[test]
    fn conv_bn_pool_gradients_match_fd() {
        let (mut b, x) = GraphBuilder::<f64>::new(&[6, 6, 1], 22);
        let c = b.conv(x, 3, 3, 1, Padding::Same, false, None);
        let bn = b.batch_norm(c, None);
        let r = b.relu(bn, None);
        let p = b.max_pool(r, 2, 2, Padding::Valid, None);
        let f = b.flatten(p, None);
        let d = b.dense(f, 2, None);
        let s = b.softmax(d, None);
        let mut g = b.finish(s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_shape_fn(IxDyn(&[3, 6, 6, 1]), |_| rng.random_range(-1.0..1.0));
        let report = check_gradients(&mut g, &x, CheckTarget::Classes(&[1, 0, 1]), 15, 8, 1e-6);
        assert!(report.max_rel_err < 1e-5, "{report:#?}");
    }

    #[test]
    fn mse_decoder_gradients_match_fd() {
        let (mut b, x) = GraphBuilder::<f64>::new(&[4, 4, 1], 23);
        let c = b.conv(x, 2, 3, 1, Padding::Same, true, None);
        let r = b.relu(c, None);
        let p = b.max_pool(r, 2, 2, Padding::Valid, None);
        let u = b.upsample(p, 2, None);
        let o = b.conv(u, 1, 3, 1, Padding::Same, true, None);
        let mut g = b.finish(o);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_shape_fn(IxDyn(&[2, 4, 4, 1]), |_| rng.random_range(-1.0..1.0));
        let t = Tensor::from_shape_fn(IxDyn(&[2, 4, 4, 1]), |_| rng.random_range(-1.0..1.0));
        let report = check_gradients(
            &mut g,
            &x,
            CheckTarget::Tensor { target: &t, loss: Loss::Mse },
            12,
            9,
            1e-6,
        );
        assert!(report.max_rel_err < 1e-6, "{report:#?}");
    }
}
