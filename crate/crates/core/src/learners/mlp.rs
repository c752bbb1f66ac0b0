use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot, LearnerError};
use crate::numcore::{Graph, NodeId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

/// Fully connected network shape: input width, hidden widths, output width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self, LearnerError> {
        let spec = MlpSpec {
            layer_widths,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.layer_widths.len() < 3 {
            return Err(LearnerError::Spec(format!(
                "an MLP needs input, at least one hidden and an output width, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(LearnerError::Spec("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }
}

/// Layer parameter nodes of an MLP inside a graph, one group per layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(NodeId, NodeId)>,
    groups: Vec<usize>,
    activation: Activation,
    activate_output: bool,
}

impl Mlp {
    /// Add the network's parameters to `g` with seeded scaled-uniform weights
    /// and zero biases.
    pub fn build(
        g: &mut Graph,
        spec: &MlpSpec,
        prefix: &str,
        activate_output: bool,
        rng: &mut impl Rng,
    ) -> Result<Self, LearnerError> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut groups = Vec::new();
        for (i, pair) in spec.layer_widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let group = g.add_group(format!("{prefix}.layer{i}"));
            let w = g.param(group, glorot(rng, fan_out, fan_in));
            let b = g.param(group, Tensor::zeros(&[fan_out]));
            layers.push((w, b));
            groups.push(group);
        }
        Ok(Mlp {
            layers,
            groups,
            activation: spec.activation,
            activate_output,
        })
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// Hidden layers are activated; the last layer only when the network was
    /// built as an encoder.
    pub fn apply(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wx = g.matmul(w, h);
            h = g.add(wx, b);
            if i < last || self.activate_output {
                h = activate(g, self.activation, h);
            }
        }
        h
    }
}

pub(crate) fn activate(g: &mut Graph, activation: Activation, x: NodeId) -> NodeId {
    match activation {
        Activation::Sigmoid => g.sigmoid(x),
        Activation::Tanh => g.tanh(x),
    }
}
