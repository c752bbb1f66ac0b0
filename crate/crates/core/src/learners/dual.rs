//! Dual encoder with a bidirectional-GRU affinity decoder.
//!
//! The semantic feature vector is cut into `chunk_size` blocks; each block is
//! encoded by the same MLP and the encoded blocks form the GRU input
//! sequence. The attribute encoding seeds the initial hidden state of both
//! GRU directions. That seed passes through `stop_gradient` and then gets a
//! decoder-owned trainable offset, so the state is trainable inside the
//! decoder while the attribute encoder receives no gradient through it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::{GruCell, GruCellParams};
use super::mlp::{activate, Activation, Mlp, MlpSpec};
use super::{glorot, LearnerError};
use crate::numcore::{Graph, NodeId, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttributeEncoderSpec {
    Mlp(MlpSpec),
    /// One 1-D convolution (valid padding, stride 1) followed by a dense
    /// projection to `output`.
    Conv1d {
        input: usize,
        kernel: usize,
        channels: usize,
        output: usize,
        activation: Activation,
    },
}

impl AttributeEncoderSpec {
    pub fn input_width(&self) -> usize {
        match self {
            AttributeEncoderSpec::Mlp(spec) => spec.input_width(),
            AttributeEncoderSpec::Conv1d { input, .. } => *input,
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            AttributeEncoderSpec::Mlp(spec) => spec.output_width(),
            AttributeEncoderSpec::Conv1d { output, .. } => *output,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualEncoderSpec {
    pub semantic_encoder: MlpSpec,
    pub attribute_encoder: AttributeEncoderSpec,
    pub chunk_size: usize,
    pub attribute_trainable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruShape {
    pub hidden: usize,
    pub input: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityDecoderSpec {
    /// Shape shared by the forward and backward cells.
    pub gru: GruShape,
    /// Width of the decoder state produced from the concatenated `2H` outputs.
    pub output_linear: usize,
    /// Number of scores produced by the head.
    pub head: usize,
    /// Pass the attribute encoding through `stop_gradient` before it seeds
    /// the GRU state. Turning this off is only useful as a control.
    #[serde(default = "default_true")]
    pub block_encoder_gradient: bool,
}

fn default_true() -> bool {
    true
}

enum AttributeEncoder {
    Mlp(Mlp),
    Conv {
        kernel_w: NodeId,
        kernel_b: NodeId,
        proj_w: NodeId,
        proj_b: NodeId,
        kernel: usize,
        input: usize,
        activation: Activation,
    },
}

/// Parameter nodes of a dual-encoder / affinity-decoder network.
pub struct DualAffinityNet {
    encoder: DualEncoderSpec,
    decoder: AffinityDecoderSpec,
    semantic: Mlp,
    attribute: AttributeEncoder,
    attribute_group: Vec<usize>,
    forward_cell: GruCell,
    backward_cell: GruCell,
    offset: NodeId,
    offset_group: usize,
    out_w: NodeId,
    out_b: NodeId,
    head_w: NodeId,
    head_b: NodeId,
}

impl DualAffinityNet {
    pub fn build(
        g: &mut Graph,
        encoder: &DualEncoderSpec,
        decoder: &AffinityDecoderSpec,
        rng: &mut impl Rng,
    ) -> Result<Self, LearnerError> {
        encoder.semantic_encoder.validate()?;
        if encoder.chunk_size == 0 || encoder.semantic_encoder.input_width() != encoder.chunk_size {
            return Err(LearnerError::Spec(format!(
                "semantic encoder input width {} must equal chunk_size {}",
                encoder.semantic_encoder.input_width(),
                encoder.chunk_size
            )));
        }
        let h = decoder.gru.hidden;
        if encoder.attribute_encoder.output_width() != h {
            return Err(LearnerError::Spec(format!(
                "attribute encoding width {} must equal GRU hidden size {h}",
                encoder.attribute_encoder.output_width()
            )));
        }
        if encoder.semantic_encoder.output_width() != decoder.gru.input {
            return Err(LearnerError::Spec(format!(
                "semantic encoding width {} must equal GRU input size {}",
                encoder.semantic_encoder.output_width(),
                decoder.gru.input
            )));
        }
        if decoder.output_linear == 0 || decoder.head == 0 {
            return Err(LearnerError::Spec("decoder widths must be positive".into()));
        }

        let semantic = Mlp::build(g, &encoder.semantic_encoder, "semantic", true, rng)?;
        let (attribute, attribute_group) = match &encoder.attribute_encoder {
            AttributeEncoderSpec::Mlp(spec) => {
                let mlp = Mlp::build(g, spec, "attribute", true, rng)?;
                let groups = mlp.groups().to_vec();
                (AttributeEncoder::Mlp(mlp), groups)
            }
            &AttributeEncoderSpec::Conv1d {
                input,
                kernel,
                channels,
                output,
                activation,
            } => {
                if kernel == 0 || kernel > input || channels == 0 {
                    return Err(LearnerError::Spec(format!(
                        "invalid conv encoder: input {input}, kernel {kernel}, channels {channels}"
                    )));
                }
                let positions = input - kernel + 1;
                let group = g.add_group("attribute.conv");
                let kernel_w = g.param(group, glorot(rng, channels, kernel));
                let kernel_b = g.param(group, Tensor::zeros(&[channels]));
                let proj_w = g.param(group, glorot(rng, output, channels * positions));
                let proj_b = g.param(group, Tensor::zeros(&[output]));
                (
                    AttributeEncoder::Conv {
                        kernel_w,
                        kernel_b,
                        proj_w,
                        proj_b,
                        kernel,
                        input,
                        activation,
                    },
                    vec![group],
                )
            }
        };
        let d = decoder.gru.input;
        let forward_cell = GruCell::register(g, "decoder.gru_forward", GruCellParams::random(h, d, rng));
        let backward_cell =
            GruCell::register(g, "decoder.gru_backward", GruCellParams::random(h, d, rng));
        let offset_group = g.add_group("decoder.initial_offset");
        let offset = g.param(offset_group, Tensor::zeros(&[h]));
        let out_group = g.add_group("decoder.output_linear");
        let out_w = g.param(out_group, glorot(rng, decoder.output_linear, 2 * h));
        let out_b = g.param(out_group, Tensor::zeros(&[decoder.output_linear]));
        let head_group = g.add_group("decoder.head");
        let head_w = g.param(head_group, glorot(rng, decoder.head, decoder.output_linear));
        let head_b = g.param(head_group, Tensor::zeros(&[decoder.head]));
        Ok(DualAffinityNet {
            encoder: encoder.clone(),
            decoder: decoder.clone(),
            semantic,
            attribute,
            attribute_group,
            forward_cell,
            backward_cell,
            offset,
            offset_group,
            out_w,
            out_b,
            head_w,
            head_b,
        })
    }

    pub fn attribute_groups(&self) -> &[usize] {
        &self.attribute_group
    }

    pub fn offset_group(&self) -> usize {
        self.offset_group
    }

    pub fn gru_groups(&self) -> [usize; 2] {
        [self.forward_cell.group, self.backward_cell.group]
    }

    /// Encode a semantic vector of `semantic_len` values and an attribute
    /// vector into the GRU input sequence and the initial-state encoding.
    pub fn dual_encode(
        &self,
        g: &mut Graph,
        semantic: NodeId,
        semantic_len: usize,
        attributes: NodeId,
    ) -> Result<(Vec<NodeId>, NodeId), LearnerError> {
        let chunk = self.encoder.chunk_size;
        if semantic_len == 0 || !semantic_len.is_multiple_of(chunk) {
            return Err(LearnerError::Dimension(format!(
                "semantic length {semantic_len} is not divisible by chunk size {chunk}"
            )));
        }
        let seq = (0..semantic_len / chunk)
            .map(|i| {
                let block = g.slice(semantic, 0, i * chunk, (i + 1) * chunk);
                self.semantic.apply(g, block)
            })
            .collect();
        let mut encoded = match &self.attribute {
            AttributeEncoder::Mlp(mlp) => mlp.apply(g, attributes),
            AttributeEncoder::Conv {
                kernel_w,
                kernel_b,
                proj_w,
                proj_b,
                kernel,
                input,
                activation,
            } => {
                let windows: Vec<NodeId> = (0..=input - kernel)
                    .map(|p| {
                        let window = g.slice(attributes, 0, p, p + kernel);
                        let conv = g.matmul(*kernel_w, window);
                        let conv = g.add(conv, *kernel_b);
                        activate(g, *activation, conv)
                    })
                    .collect();
                let features = g.concat(&windows, 0);
                let proj = g.matmul(*proj_w, features);
                let proj = g.add(proj, *proj_b);
                activate(g, *activation, proj)
            }
        };
        if !self.encoder.attribute_trainable {
            encoded = g.stop_gradient(encoded);
        }
        Ok((seq, encoded))
    }

    /// Run both GRU directions from the shared initial state and map the
    /// concatenated final states through the output layer and head.
    pub fn affinity_decode(
        &self,
        g: &mut Graph,
        seq: &[NodeId],
        attribute_enc: NodeId,
    ) -> Result<NodeId, LearnerError> {
        if seq.is_empty() {
            return Err(LearnerError::Dimension("empty semantic sequence".into()));
        }
        let seed = if self.decoder.block_encoder_gradient {
            g.stop_gradient(attribute_enc)
        } else {
            attribute_enc
        };
        let h0 = g.add(seed, self.offset);
        let mut forward = h0;
        for &x in seq {
            forward = self.forward_cell.step(g, forward, x);
        }
        let mut backward = h0;
        for &x in seq.iter().rev() {
            backward = self.backward_cell.step(g, backward, x);
        }
        let affinity = g.concat(&[forward, backward], 0);
        let state = g.matmul(self.out_w, affinity);
        let state = g.add(state, self.out_b);
        let score = g.matmul(self.head_w, state);
        Ok(g.add(score, self.head_b))
    }

    pub fn score(
        &self,
        g: &mut Graph,
        semantic: NodeId,
        semantic_len: usize,
        attributes: NodeId,
    ) -> Result<NodeId, LearnerError> {
        let (seq, enc) = self.dual_encode(g, semantic, semantic_len, attributes)?;
        self.affinity_decode(g, &seq, enc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn specs(trainable: bool, block: bool, conv: bool) -> (DualEncoderSpec, AffinityDecoderSpec) {
        let attribute_encoder = if conv {
            AttributeEncoderSpec::Conv1d {
                input: 5,
                kernel: 3,
                channels: 2,
                output: 3,
                activation: Activation::Tanh,
            }
        } else {
            AttributeEncoderSpec::Mlp(MlpSpec::new(vec![5, 4, 3], Activation::Tanh).unwrap())
        };
        (
            DualEncoderSpec {
                semantic_encoder: MlpSpec::new(vec![4, 3, 2], Activation::Tanh).unwrap(),
                attribute_encoder,
                chunk_size: 4,
                attribute_trainable: trainable,
            },
            AffinityDecoderSpec {
                gru: GruShape { hidden: 3, input: 2 },
                output_linear: 3,
                head: 1,
                block_encoder_gradient: block,
            },
        )
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        Tensor::vector((0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
    }

    struct Built {
        g: Graph,
        net: DualAffinityNet,
        out: NodeId,
        sem: Tensor,
        attr: Tensor,
    }

    fn build(seed: u64, trainable: bool, block: bool, conv: bool) -> Built {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc, dec) = specs(trainable, block, conv);
        let mut g = Graph::new();
        let net = DualAffinityNet::build(&mut g, &enc, &dec, &mut rng).unwrap();
        let s = g.input("semantic");
        let a = g.input("attributes");
        let score = net.score(&mut g, s, 12, a).unwrap();
        let out = g.sum(score);
        let sem = random_vec(&mut rng, 12);
        let attr = random_vec(&mut rng, 5);
        Built { g, net, out, sem, attr }
    }

    #[test]
    fn chunking_produces_one_step_per_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (enc, dec) = specs(true, true, false);
        let mut g = Graph::new();
        let net = DualAffinityNet::build(&mut g, &enc, &dec, &mut rng).unwrap();
        let s = g.input("semantic");
        let a = g.input("attributes");
        let (seq, _) = net.dual_encode(&mut g, s, 12, a).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(matches!(
            net.dual_encode(&mut g, s, 10, a),
            Err(LearnerError::Dimension(_))
        ));
        let block = [0.3, -1.0, 0.5, 2.0];
        let sem = Tensor::vector(block.iter().cycle().take(12).copied().collect());
        let attr = Tensor::vector(vec![0.0; 5]);
        let inputs = [("semantic", &sem), ("attributes", &attr)];
        let first = g.forward_eval(&inputs, seq[0]).unwrap();
        let third = g.forward_eval(&inputs, seq[2]).unwrap();
        assert_eq!(first, third);
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (enc, dec) = specs(true, true, false);
        let mut g = Graph::new();
        let net = DualAffinityNet::build(&mut g, &enc, &dec, &mut rng).unwrap();
        let a = g.input("a");
        assert!(net.affinity_decode(&mut g, &[], a).is_err());
    }

    #[test]
    fn mismatched_widths_rejected() {
        let (mut enc, dec) = specs(true, true, false);
        enc.chunk_size = 3;
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(DualAffinityNet::build(&mut g, &enc, &dec, &mut rng).is_err());
    }

    #[test]
    fn stop_gradient_blocks_attribute_encoder() {
        for conv in [false, true] {
            let mut b = build(11, true, true, conv);
            let inputs = [("semantic", &b.sem), ("attributes", &b.attr)];
            b.g.forward_eval(&inputs, b.out).unwrap();
            let grads = b.g.backward(b.out).unwrap();
            for &grp in b.net.attribute_groups() {
                assert!(grads.flat_group(grp).iter().all(|&v| v == 0.0));
            }
            let offset = grads.flat_group(b.net.offset_group());
            assert!(offset.iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn removing_stop_gradient_reaches_encoder() {
        let mut b = build(11, true, false, false);
        let inputs = [("semantic", &b.sem), ("attributes", &b.attr)];
        b.g.forward_eval(&inputs, b.out).unwrap();
        let grads = b.g.backward(b.out).unwrap();
        let touched = b
            .net
            .attribute_groups()
            .iter()
            .flat_map(|&grp| grads.flat_group(grp))
            .any(|v| v != 0.0);
        assert!(touched);
    }

    #[test]
    fn frozen_attribute_encoder_gets_zero_gradient() {
        let mut b = build(5, false, false, false);
        let inputs = [("semantic", &b.sem), ("attributes", &b.attr)];
        b.g.forward_eval(&inputs, b.out).unwrap();
        let grads = b.g.backward(b.out).unwrap();
        for &grp in b.net.attribute_groups() {
            assert!(grads.flat_group(grp).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn offset_gradient_matches_finite_differences() {
        let mut b = build(2, true, true, false);
        let inputs = [("semantic", &b.sem), ("attributes", &b.attr)];
        let report = grad_check(&mut b.g, &inputs, b.out, 1e-6).unwrap();
        // Attribute-encoder weights still move the forward value, but the
        // stop-gradient hides that from backward by design.
        for p in report.params.iter().filter(|p| !p.group.starts_with("attribute")) {
            assert!(p.max_rel_error <= 1e-6, "{p:?}");
        }
        let offset = report
            .params
            .iter()
            .find(|p| p.group == "decoder.initial_offset")
            .unwrap();
        assert!(offset.max_rel_error <= 1e-6);
    }

    #[test]
    fn whole_network_gradients_check() {
        for seed in 0..5 {
            for conv in [false, true] {
                let mut b = build(seed, true, false, conv);
                let inputs = [("semantic", &b.sem), ("attributes", &b.attr)];
                let report = grad_check(&mut b.g, &inputs, b.out, 1e-6).unwrap();
                assert!(report.passed(), "seed {seed} conv {conv}: {}", report.worst());
            }
        }
    }

    #[test]
    fn zero_gru_single_step_uses_bias_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut enc, dec) = specs(true, true, false);
        enc.semantic_encoder = MlpSpec::new(vec![4, 3, 2], Activation::Tanh).unwrap();
        let mut g = Graph::new();
        let net = DualAffinityNet::build(&mut g, &enc, &dec, &mut rng).unwrap();
        let [fwd, bwd] = net.gru_groups();
        for grp in [fwd, bwd] {
            for t in &mut g.groups_mut()[grp].tensors {
                *t = Tensor::zeros(t.shape());
            }
        }
        let out_group = g.groups().iter().position(|p| p.name == "decoder.output_linear").unwrap();
        let head_group = g.groups().iter().position(|p| p.name == "decoder.head").unwrap();
        g.groups_mut()[out_group].tensors[1] = Tensor::vector(vec![0.5, -1.0, 2.0]);
        g.groups_mut()[head_group].tensors[0] = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        g.groups_mut()[head_group].tensors[1] = Tensor::vector(vec![0.25]);

        let s = g.input("semantic");
        let a = g.input("attributes");
        let (seq, enc_node) = net.dual_encode(&mut g, s, 4, a).unwrap();
        let score = net.affinity_decode(&mut g, &seq, enc_node).unwrap();
        let sem = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);
        let attr = Tensor::vector(vec![1.0, -1.0, 0.5, 0.0, 2.0]);
        let inputs = [("semantic", &sem), ("attributes", &attr)];
        let h0 = g.forward_eval(&inputs, enc_node).unwrap();
        let value = g.forward_eval(&inputs, score).unwrap().item();

        // h_1 = 0.5 h_0 in both directions.
        let half: Vec<f64> = h0.values().iter().map(|v| 0.5 * v).collect();
        let affinity: Vec<f64> = half.iter().chain(&half).copied().collect();
        let out_w = g.groups()[out_group].tensors[0].clone();
        let state: Vec<f64> = out_w
            .values()
            .chunks(6)
            .zip([0.5, -1.0, 2.0])
            .map(|(row, b)| row.iter().zip(&affinity).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect();
        let expected = state[0] + 2.0 * state[1] + 3.0 * state[2] + 0.25;
        assert!((value - expected).abs() < 1e-12);
    }
}
