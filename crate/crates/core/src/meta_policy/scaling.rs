use serde::{Deserialize, Serialize};

use super::MetaError;
use crate::numcore::{Gradients, ParamGroup, Tensor};

/// Multiply every group's gradient by its scaling factor.
pub fn scale_gradients(grads: &Gradients, lambdas: &[f64]) -> Result<Gradients, MetaError> {
    if lambdas.len() != grads.n_groups() {
        return Err(MetaError::GroupMismatch {
            expected: grads.n_groups(),
            got: lambdas.len(),
        });
    }
    if let Some(&bad) = lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(MetaError::NonPositiveLambda(bad));
    }
    Ok(Gradients {
        groups: grads
            .groups
            .iter()
            .zip(lambdas)
            .map(|(group, &l)| group.iter().map(|t| t.map(|v| l * v)).collect())
            .collect(),
    })
}

/// `θ ← θ − α g′` for every parameter; nothing is written when any result
/// would be non-finite.
pub fn scaled_sgd_step(params: &mut [ParamGroup], grads: &Gradients, lr: f64) -> Result<(), MetaError> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(MetaError::NonPositiveLearningRate(lr));
    }
    if params.len() != grads.n_groups() {
        return Err(MetaError::GroupMismatch {
            expected: params.len(),
            got: grads.n_groups(),
        });
    }
    let mut updated: Vec<Vec<Tensor>> = Vec::with_capacity(params.len());
    for (group, g) in params.iter().zip(&grads.groups) {
        let mut tensors = Vec::with_capacity(group.tensors.len());
        for (t, gt) in group.tensors.iter().zip(g) {
            let values: Vec<f64> = t
                .values()
                .iter()
                .zip(gt.values())
                .map(|(p, d)| p - lr * d)
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(MetaError::NonFiniteUpdate);
            }
            tensors.push(Tensor::new(t.shape().to_vec(), values).expect("shape preserved"));
        }
        updated.push(tensors);
    }
    for (group, tensors) in params.iter_mut().zip(updated) {
        group.tensors = tensors;
    }
    Ok(())
}

/// `lr0 · γ^epoch`.
pub fn lr_schedule(lr0: f64, gamma: f64, epoch: u32) -> f64 {
    lr0 * gamma.powi(epoch as i32)
}

/// A smooth, increasing map of the loss value.
pub trait LossTransform {
    fn value(&self, loss: f64) -> f64;
    fn derivative(&self, loss: f64) -> f64;
}

/// `φ(L) = c·L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTransform(pub f64);

impl LossTransform for LinearTransform {
    fn value(&self, loss: f64) -> f64 {
        self.0 * loss
    }

    fn derivative(&self, _loss: f64) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformStep {
    pub params: Vec<f64>,
    /// `∇_θ φ(L) = φ′(L) ∇_θ L`.
    pub gradient: Vec<f64>,
    pub loss: f64,
}

/// One gradient step on the transformed surface `φ ∘ L`.
///
/// `loss_fn` returns the loss and its gradient at `params`.
pub fn reference_transform_step(
    loss_fn: impl Fn(&[f64]) -> (f64, Vec<f64>),
    phi: &dyn LossTransform,
    params: &[f64],
    lr: f64,
) -> Result<TransformStep, MetaError> {
    if !(lr > 0.0) {
        return Err(MetaError::NonPositiveLearningRate(lr));
    }
    let (loss, grad) = loss_fn(params);
    let slope = phi.derivative(loss);
    if !(slope > 0.0) {
        return Err(MetaError::NonPositiveDerivative(slope));
    }
    let gradient: Vec<f64> = grad.iter().map(|g| slope * g).collect();
    let next: Vec<f64> = params.iter().zip(&gradient).map(|(p, g)| p - lr * g).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(MetaError::NonFiniteUpdate);
    }
    Ok(TransformStep {
        params: next,
        gradient,
        loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grads(values: &[&[f64]]) -> Gradients {
        Gradients {
            groups: values.iter().map(|v| vec![Tensor::vector(v.to_vec())]).collect(),
        }
    }

    fn group(values: &[f64]) -> ParamGroup {
        ParamGroup {
            name: "g".into(),
            group_index: 0,
            tensors: vec![Tensor::vector(values.to_vec())],
        }
    }

    #[test]
    fn scaling_examples() {
        let g = grads(&[&[1.0], &[4.0]]);
        assert_eq!(scale_gradients(&g, &[1.0, 1.0]).unwrap(), g);
        assert_eq!(scale_gradients(&g, &[2.0, 0.5]).unwrap(), grads(&[&[2.0], &[2.0]]));
        assert_eq!(
            scale_gradients(&g, &[1.0]),
            Err(MetaError::GroupMismatch { expected: 2, got: 1 })
        );
        assert_eq!(scale_gradients(&g, &[1.0, 0.0]), Err(MetaError::NonPositiveLambda(0.0)));
        assert!(scale_gradients(&g, &[1.0, -2.0]).is_err());
    }

    #[test]
    fn sgd_step_examples() {
        let mut p = vec![group(&[1.0])];
        scaled_sgd_step(&mut p, &grads(&[&[2.0]]), 0.1).unwrap();
        assert!((p[0].tensors[0].values()[0] - 0.8).abs() < 1e-15);
        let before = p.clone();
        scaled_sgd_step(&mut p, &grads(&[&[0.0]]), 0.1).unwrap();
        assert_eq!(p, before);
        assert!(scaled_sgd_step(&mut p, &grads(&[&[1.0]]), 0.0).is_err());
        assert_eq!(
            scaled_sgd_step(&mut p, &grads(&[&[f64::MAX]]), 1e10),
            Err(MetaError::NonFiniteUpdate)
        );
        assert_eq!(p, before);
    }

    /// On L = θ², a step is θ ← θ(1 − 2αλ).
    #[test]
    fn scaling_changes_stability() {
        let run = |lambda: f64| {
            let mut theta = vec![group(&[1.0])];
            let mut path = Vec::new();
            for _ in 0..6 {
                let t = theta[0].tensors[0].values()[0];
                let g = scale_gradients(&grads(&[&[2.0 * t]]), &[lambda]).unwrap();
                scaled_sgd_step(&mut theta, &g, 1.0).unwrap();
                path.push(theta[0].tensors[0].values()[0]);
            }
            path
        };
        assert_eq!(run(0.25), vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]);
        assert_eq!(run(1.0), vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0.3, 1.0, 17), 0.3);
        assert!((lr_schedule(0.1, 0.5, 3) - 0.0125).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for e in 0..50 {
            let lr = lr_schedule(0.2, 0.93, e);
            assert!(lr <= last);
            last = lr;
        }
    }

    struct Broken;
    impl LossTransform for Broken {
        fn value(&self, l: f64) -> f64 {
            -l
        }
        fn derivative(&self, _: f64) -> f64 {
            -1.0
        }
    }

    #[test]
    fn transform_step_identity_and_errors() {
        let f = |p: &[f64]| (p[0] * p[0], vec![2.0 * p[0]]);
        let step = reference_transform_step(f, &LinearTransform(1.0), &[3.0], 0.1).unwrap();
        assert_eq!(step.params, vec![3.0 - 0.1 * 6.0]);
        assert!(matches!(
            reference_transform_step(f, &Broken, &[3.0], 0.1),
            Err(MetaError::NonPositiveDerivative(_))
        ));
    }

    proptest! {
        #[test]
        fn positive_scaling_preserves_direction(
            a in proptest::collection::vec(-5.0f64..5.0, 1..6),
            b in proptest::collection::vec(-5.0f64..5.0, 1..6),
            la in 0.01f64..20.0,
            lb in 0.01f64..20.0,
        ) {
            let g = grads(&[&a, &b]);
            let s = scale_gradients(&g, &[la, lb]).unwrap();
            for (orig, scaled) in g.groups.iter().zip(&s.groups) {
                let (o, sc) = (orig[0].values(), scaled[0].values());
                for (x, y) in o.iter().zip(sc) {
                    prop_assert!(x.signum() == y.signum() || *x == 0.0);
                }
                let dot: f64 = o.iter().zip(sc).map(|(x, y)| x * y).sum();
                let no: f64 = o.iter().map(|x| x * x).sum::<f64>().sqrt();
                let ns: f64 = sc.iter().map(|x| x * x).sum::<f64>().sqrt();
                if no > 0.0 {
                    prop_assert!((dot / (no * ns) - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
