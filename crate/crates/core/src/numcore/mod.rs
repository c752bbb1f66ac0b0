//! Dense `f64` tensors with a small reverse-mode differentiation graph.
//!
//! The op set is closed: matmul, add, elementwise multiply, concat, slice,
//! reshape, sigmoid, tanh, softmax, log-softmax, log, mean, sum, constant
//! scaling and stop-gradient. Every forward value is checked for
//! finiteness; a NaN or infinity aborts evaluation with
//! [`NumError::NonFinite`] instead of propagating.

mod gradcheck;
mod graph;
mod tensor;

use thiserror::Error;

pub use gradcheck::{
    compare_gradients, finite_difference, grad_check, GradCheckReport, ParamCheck, FD_STEP,
};
pub use graph::{Gradients, Graph, NodeId, NodeLabel, ParamGroup};
pub(crate) use graph::sigmoid;
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("shape mismatch at {node}: {detail}")]
    ShapeMismatch { node: NodeLabel, detail: String },
    #[error("missing input '{0}'")]
    MissingInput(String),
    #[error("numeric overflow: non-finite value at {node}")]
    NonFinite { node: NodeLabel },
    #[error("backward called before forward_eval for this output")]
    BackwardBeforeForward,
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_graph(x: f64) -> (Graph, NodeId) {
        let mut g = Graph::new();
        let grp = g.add_group("x");
        let xn = g.param(grp, Tensor::scalar(x));
        let y = g.mul(xn, xn);
        (g, y)
    }

    #[test]
    fn square_forward_and_grad() {
        let (mut g, y) = square_graph(3.0);
        assert_eq!(g.forward_eval(&[], y).unwrap().item(), 9.0);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.group(0)[0].item(), 6.0);
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let grp = g.add_group("xy");
        let x = g.param(grp, Tensor::scalar(2.0));
        let y = g.param(grp, Tensor::scalar(5.0));
        let p = g.mul(x, y);
        assert_eq!(g.forward_eval(&[], p).unwrap().item(), 10.0);
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.group(0)[0].item(), 5.0);
        assert_eq!(grads.group(0)[1].item(), 2.0);
    }

    #[test]
    fn softmax_and_sigmoid_midpoints() {
        let mut g = Graph::new();
        let x = g.input("x");
        let s = g.softmax(x);
        let z = g.input("z");
        let sg = g.sigmoid(z);
        let xv = Tensor::vector(vec![0.0, 0.0]);
        let zv = Tensor::scalar(0.0);
        assert_eq!(g.forward_eval(&[("x", &xv)], s).unwrap().values(), &[0.5, 0.5]);
        assert_eq!(g.forward_eval(&[("z", &zv)], sg).unwrap().item(), 0.5);
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let (g, y) = square_graph(1.0);
        assert_eq!(g.backward(y), Err(NumError::BackwardBeforeForward));
    }

    #[test]
    fn backward_after_param_edit_is_usage_error() {
        let (mut g, y) = square_graph(1.0);
        g.forward_eval(&[], y).unwrap();
        g.groups_mut()[0].tensors[0] = Tensor::scalar(2.0);
        assert_eq!(g.backward(y), Err(NumError::BackwardBeforeForward));
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut g = Graph::new();
        let grp = g.add_group("w");
        let w = g.param(grp, Tensor::vector(vec![1.0, 2.0]));
        let t = g.tanh(w);
        g.forward_eval(&[], t).unwrap();
        assert!(matches!(g.backward(t), Err(NumError::NonScalarOutput(_))));
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let c = g.add(a, b);
        let av = Tensor::vector(vec![1.0, 2.0]);
        let bv = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let err = g.forward_eval(&[("a", &av), ("b", &bv)], c).unwrap_err();
        match err {
            NumError::ShapeMismatch { node, .. } => {
                assert_eq!(node.id, c.index());
                assert_eq!(node.op, "add");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_input_reported() {
        let mut g = Graph::new();
        let a = g.input("a");
        let s = g.sum(a);
        assert_eq!(
            g.forward_eval(&[], s),
            Err(NumError::MissingInput("a".into()))
        );
    }

    #[test]
    fn log_of_zero_is_overflow() {
        let mut g = Graph::new();
        let a = g.input("a");
        let l = g.log(a);
        let av = Tensor::vector(vec![1.0, 0.0]);
        let err = g.forward_eval(&[("a", &av)], l).unwrap_err();
        assert!(matches!(err, NumError::NonFinite { node } if node.op == "log"));
    }

    #[test]
    fn unreachable_param_gets_exact_zero() {
        let mut g = Graph::new();
        let used = g.add_group("used");
        let unused = g.add_group("unused");
        let x = g.param(used, Tensor::vector(vec![0.3, -0.7]));
        let _w = g.param(unused, Tensor::vector(vec![1.0, 2.0, 3.0]));
        let t = g.tanh(x);
        let s = g.sum(t);
        g.forward_eval(&[], s).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.group(unused)[0].values().iter().all(|&v| v == 0.0));
        assert_eq!(grads.group(unused)[0].shape(), &[3]);
    }

    #[test]
    fn stop_gradient_blocks_backward() {
        let mut g = Graph::new();
        let grp = g.add_group("x");
        let x = g.param(grp, Tensor::scalar(1.5));
        let blocked = g.stop_gradient(x);
        let y = g.mul(blocked, blocked);
        assert_eq!(g.forward_eval(&[], y).unwrap().item(), 2.25);
        assert_eq!(g.backward(y).unwrap().group(0)[0].item(), 0.0);
    }

    #[test]
    fn square_passes_grad_check() {
        let (mut g, y) = square_graph(3.0);
        let report = grad_check(&mut g, &[], y, 1e-6).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_sigmoid_rule_fails_grad_check() {
        let mut g = Graph::new();
        let grp = g.add_group("x");
        let x = g.param(grp, Tensor::vector(vec![0.4, -1.2, 0.9]));
        let s = g.sigmoid(x);
        let out = g.sum(s);
        g.forward_eval(&[], out).unwrap();
        // Wrong derivative: s instead of s(1 - s).
        let wrong: Vec<f64> = g.value(s).unwrap().values().to_vec();
        let mut analytic = Gradients::zeros_like(g.groups());
        analytic.groups[0][0] = Tensor::vector(wrong);
        let report = compare_gradients(&mut g, &[], out, &analytic, 1e-6).unwrap();
        assert!(!report.passed());
    }

    /// Builds a graph exercising every op on parameters drawn from [-2, 2].
    fn all_ops_graph(rng: &mut ChaCha8Rng) -> (Graph, NodeId) {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let mut g = Graph::new();
        let grp = g.add_group("p");
        let w = g.param(grp, Tensor::matrix(3, 4, draw(12)).unwrap());
        let x = g.param(grp, Tensor::vector(draw(4)));
        let m = g.param(grp, Tensor::matrix(4, 2, draw(8)).unwrap());
        let b = g.param(grp, Tensor::vector(draw(3)));
        let c = g.param(grp, Tensor::vector(draw(2)));
        let wx = g.matmul(w, x);
        let h = g.add(wx, b);
        let t = g.tanh(h);
        let s = g.sigmoid(h);
        let ts = g.mul(t, s);
        let cat = g.concat(&[ts, c], 0);
        let sl = g.slice(cat, 0, 1, 4);
        let sm = g.softmax(sl);
        let lg = g.log(sm);
        let wm = g.matmul(w, m);
        let wm_rows = g.slice(wm, 0, 0, 2);
        let wm_cols = g.concat(&[wm_rows, wm_rows], 1);
        let lsm = g.log_softmax(wm_cols);
        let a1 = g.mean(lg);
        let a2 = g.sum(lsm);
        let a2s = g.scale(a2, 0.1);
        let total = g.add(a1, a2s);
        (g, total)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut g, out) = all_ops_graph(&mut rng);
            let report = grad_check(&mut g, &[], out, 1e-6).unwrap();
            assert!(report.passed(), "seed {seed}: worst {}", report.worst());
        }
    }

    proptest! {
        #[test]
        fn forward_is_bit_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut g, out) = all_ops_graph(&mut rng);
            let first = g.forward_eval(&[], out).unwrap();
            let second = g.forward_eval(&[], out).unwrap();
            prop_assert_eq!(first.item().to_bits(), second.item().to_bits());
        }

        #[test]
        fn tensor_shape_product_matches_len(r in 1usize..5, c in 1usize..5) {
            let t = Tensor::matrix(r, c, vec![0.5; r * c]).unwrap();
            prop_assert_eq!(t.shape().iter().product::<usize>(), t.len());
            prop_assert!(Tensor::matrix(r, c, vec![0.5; r * c + 1]).is_err());
        }
    }
}
