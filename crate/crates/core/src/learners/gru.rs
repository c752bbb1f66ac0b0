use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, LearnerError};
use crate::numcore::{sigmoid, Graph, NodeId, Tensor};

/// Gate and candidate weights of one GRU cell, each `[H, H + D]` over the
/// concatenation `[h_prev, x_t]`. The cell has no bias terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruCellParams {
    #[serde(rename = "W_G1")]
    pub w_g1: Tensor,
    #[serde(rename = "W_G2")]
    pub w_g2: Tensor,
    #[serde(rename = "W")]
    pub w: Tensor,
    pub hidden: usize,
    pub input: usize,
}

impl GruCellParams {
    pub fn random(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let cols = hidden + input;
        GruCellParams {
            w_g1: glorot(rng, hidden, cols),
            w_g2: glorot(rng, hidden, cols),
            w: glorot(rng, hidden, cols),
            hidden,
            input,
        }
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        let shape = [hidden, hidden + input];
        GruCellParams {
            w_g1: Tensor::zeros(&shape),
            w_g2: Tensor::zeros(&shape),
            w: Tensor::zeros(&shape),
            hidden,
            input,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let shape = [self.hidden, self.hidden + self.input];
        for (name, t) in [("W_G1", &self.w_g1), ("W_G2", &self.w_g2), ("W", &self.w)] {
            if t.shape() != shape {
                return Err(LearnerError::Dimension(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Intermediate values of one cell update.
#[derive(Clone, Debug, PartialEq)]
pub struct GruStep {
    pub update_gate: Vec<f64>,
    pub reset_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub hidden: Vec<f64>,
}

fn matvec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    let cols = m.shape()[1];
    m.values()
        .chunks(cols)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Direct evaluation of one cell update:
///
/// ```text
/// G1 = σ(W_G1·[h, x])        G2 = σ(W_G2·[h, x])
/// h̃  = tanh(W·[G2 * h, x])   h' = (1 - G1) * h + G1 * h̃
/// ```
pub fn gru_step(cell: &GruCellParams, h_prev: &[f64], x_t: &[f64]) -> Result<GruStep, LearnerError> {
    cell.validate()?;
    if h_prev.len() != cell.hidden || x_t.len() != cell.input {
        return Err(LearnerError::Dimension(format!(
            "cell expects h[{}], x[{}], got h[{}], x[{}]",
            cell.hidden,
            cell.input,
            h_prev.len(),
            x_t.len()
        )));
    }
    let joined: Vec<f64> = h_prev.iter().chain(x_t).copied().collect();
    let update_gate: Vec<f64> = matvec(&cell.w_g1, &joined).into_iter().map(sigmoid).collect();
    let reset_gate: Vec<f64> = matvec(&cell.w_g2, &joined).into_iter().map(sigmoid).collect();
    let gated: Vec<f64> = reset_gate
        .iter()
        .zip(h_prev)
        .map(|(r, h)| r * h)
        .chain(x_t.iter().copied())
        .collect();
    let candidate: Vec<f64> = matvec(&cell.w, &gated).into_iter().map(f64::tanh).collect();
    let hidden = h_prev
        .iter()
        .zip(&update_gate)
        .zip(&candidate)
        .map(|((h, z), c)| (1.0 - z) * h + z * c)
        .collect();
    Ok(GruStep {
        update_gate,
        reset_gate,
        candidate,
        hidden,
    })
}

/// Cell weights registered as graph parameters (one group per cell).
#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    w_g1: NodeId,
    w_g2: NodeId,
    w: NodeId,
    hidden: usize,
    pub group: usize,
}

impl GruCell {
    pub fn register(g: &mut Graph, name: &str, params: GruCellParams) -> Self {
        let group = g.add_group(name);
        let hidden = params.hidden;
        GruCell {
            w_g1: g.param(group, params.w_g1),
            w_g2: g.param(group, params.w_g2),
            w: g.param(group, params.w),
            hidden,
            group,
        }
    }

    /// Graph form of [`gru_step`].
    pub fn step(&self, g: &mut Graph, h_prev: NodeId, x_t: NodeId) -> NodeId {
        let joined = g.concat(&[h_prev, x_t], 0);
        let z_pre = g.matmul(self.w_g1, joined);
        let z = g.sigmoid(z_pre);
        let r_pre = g.matmul(self.w_g2, joined);
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h_prev);
        let gated = g.concat(&[rh, x_t], 0);
        let c_pre = g.matmul(self.w, gated);
        let candidate = g.tanh(c_pre);
        // (1 - z) * h + z * c  ==  h + z * (c - h)
        let delta = g.sub(candidate, h_prev);
        let moved = g.mul(z, delta);
        g.add(h_prev, moved)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
}
