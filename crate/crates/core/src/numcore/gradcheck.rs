use serde::Serialize;

use super::{Gradients, Graph, NodeId, NumError};

/// Finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub group: String,
    pub group_index: usize,
    pub slot: usize,
    /// `max|g_ad - g_fd| / max(1e-12, max|g_fd|)` over the tensor's elements.
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// Central finite-difference gradient of the scalar `output`, one
/// parameter element at a time. Parameter values are restored afterwards.
pub fn finite_difference(
    graph: &mut Graph,
    inputs: &[(&str, &super::Tensor)],
    output: NodeId,
    step: f64,
) -> Result<Gradients, NumError> {
    let mut fd = Gradients::zeros_like(graph.groups());
    for g in 0..graph.groups().len() {
        for s in 0..graph.groups()[g].tensors.len() {
            for e in 0..graph.groups()[g].tensors[s].len() {
                let original = graph.groups()[g].tensors[s].values()[e];
                graph.groups_mut()[g].tensors[s].values_mut()[e] = original + step;
                let plus = graph.forward_eval(inputs, output)?.item();
                graph.groups_mut()[g].tensors[s].values_mut()[e] = original - step;
                let minus = graph.forward_eval(inputs, output)?.item();
                graph.groups_mut()[g].tensors[s].values_mut()[e] = original;
                fd.groups[g][s].values_mut()[e] = (plus - minus) / (2.0 * step);
            }
        }
    }
    Ok(fd)
}

/// Compare supplied analytic gradients against central differences.
pub fn compare_gradients(
    graph: &mut Graph,
    inputs: &[(&str, &super::Tensor)],
    output: NodeId,
    analytic: &Gradients,
    tolerance: f64,
) -> Result<GradCheckReport, NumError> {
    let fd = finite_difference(graph, inputs, output, FD_STEP)?;
    let mut params = Vec::new();
    for (g, group) in graph.groups().iter().enumerate() {
        for s in 0..group.tensors.len() {
            let numeric = &fd.groups[g][s];
            let ad = &analytic.groups[g][s];
            let diff = ad
                .values()
                .iter()
                .zip(numeric.values())
                .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
            params.push(ParamCheck {
                group: group.name.clone(),
                group_index: group.group_index,
                slot: s,
                max_rel_error: diff / numeric.max_abs().max(1e-12),
            });
        }
    }
    Ok(GradCheckReport { tolerance, params })
}

/// Check reverse-mode gradients of `output` against central differences.
pub fn grad_check(
    graph: &mut Graph,
    inputs: &[(&str, &super::Tensor)],
    output: NodeId,
    tolerance: f64,
) -> Result<GradCheckReport, NumError> {
    graph.forward_eval(inputs, output)?;
    let analytic = graph.backward(output)?;
    compare_gradients(graph, inputs, output, &analytic, tolerance)
}
