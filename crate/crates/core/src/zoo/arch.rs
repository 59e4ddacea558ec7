//! The four desk-scale architectures: three CNNs with deliberately different
//! depths, kernel sizes and pooling styles, plus one convolution-free MLP.
//! Weight init is He-uniform from a seeded stream, so the same seed always
//! produces the same untrained model.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layer::LayerOp;
use crate::model::ClassifierModel;
use crate::rng::derive_seed;
use crate::tensor::Tensor;

pub const ZOO_ARCH_IDS: [&str; 4] = ["cnn-a", "cnn-b", "cnn-c", "mlp-d"];

/// Builds an untrained, seeded model of one of the zoo architectures.
pub fn build_architecture(
    arch_id: &str,
    input_shape: [usize; 3],
    class_count: usize,
    seed: u64,
) -> Result<ClassifierModel> {
    if class_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {class_count}"
        )));
    }
    let mut b = ArchBuilder::new(input_shape, seed);
    match arch_id {
        "cnn-a" => {
            b.conv(6, 3, 1, 1)?;
            b.relu();
            b.maxpool(2, 2)?;
            b.conv(12, 3, 1, 1)?;
            b.relu();
            b.maxpool(2, 2)?;
            b.flatten();
            b.dense(48)?;
            b.relu();
            b.head(class_count)?;
        }
        "cnn-b" => {
            b.conv(4, 5, 1, 2)?;
            b.relu();
            b.avgpool(2, 2)?;
            b.conv(8, 3, 1, 1)?;
            b.relu();
            b.avgpool(2, 2)?;
            b.conv(16, 3, 1, 1)?;
            b.relu();
            b.avgpool(2, 2)?;
            b.flatten();
            b.head(class_count)?;
        }
        "cnn-c" => {
            b.conv(14, 5, 1, 2)?;
            b.relu();
            b.maxpool(4, 4)?;
            b.flatten();
            b.dense(64)?;
            b.relu();
            b.head(class_count)?;
        }
        "mlp-d" => {
            b.flatten();
            b.dense(256)?;
            b.relu();
            b.dense(96)?;
            b.relu();
            b.head(class_count)?;
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown architecture id '{other}' (expected one of {ZOO_ARCH_IDS:?})"
            )))
        }
    }
    ClassifierModel::new(arch_id, b.layers, input_shape)
}

struct ArchBuilder {
    layers: Vec<LayerOp>,
    shape: Vec<usize>,
    rng: ChaCha8Rng,
}

impl ArchBuilder {
    fn new(input_shape: [usize; 3], seed: u64) -> Self {
        ArchBuilder {
            layers: Vec::new(),
            shape: input_shape.to_vec(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x41524348, 0)),
        }
    }

    fn he_uniform(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        let limit = (6.0 / fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| self.rng.gen_range(-limit..limit)).collect();
        Tensor::from_vec(shape, data).expect("init values are finite")
    }

    fn push(&mut self, layer: LayerOp) -> Result<()> {
        self.shape = layer.output_shape(&self.shape)?;
        self.layers.push(layer);
        Ok(())
    }

    fn conv(&mut self, out_c: usize, k: usize, stride: usize, pad: usize) -> Result<()> {
        let in_c = self.shape[0];
        let weight = self.he_uniform(vec![out_c, in_c, k, k], in_c * k * k);
        self.push(LayerOp::Conv2d {
            weight,
            bias: Tensor::zeros(vec![out_c]),
            stride,
            pad,
        })
    }

    fn dense(&mut self, out: usize) -> Result<()> {
        let inp = self.shape[0];
        let weight = self.he_uniform(vec![out, inp], inp);
        self.push(LayerOp::Dense {
            weight,
            bias: Tensor::zeros(vec![out]),
        })
    }

    /// Classifier head. Inputs are raw pixels, so activations run at pixel
    /// scale; shrinking the head init keeps the initial logits inside the
    /// informative softmax range instead of hard saturation.
    fn head(&mut self, out: usize) -> Result<()> {
        let inp = self.shape[0];
        let weight = self.he_uniform(vec![out, inp], inp).scale(1.0 / 64.0);
        self.push(LayerOp::Dense {
            weight,
            bias: Tensor::zeros(vec![out]),
        })
    }

    fn relu(&mut self) {
        self.layers.push(LayerOp::Relu);
    }

    fn maxpool(&mut self, kernel: usize, stride: usize) -> Result<()> {
        self.push(LayerOp::MaxPool2d { kernel, stride })
    }

    fn avgpool(&mut self, kernel: usize, stride: usize) -> Result<()> {
        self.push(LayerOp::AvgPool2d { kernel, stride })
    }

    fn flatten(&mut self) {
        let n: usize = self.shape.iter().product();
        self.layers.push(LayerOp::Flatten);
        self.shape = vec![n];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: [usize; 3] = [1, 32, 32];

    #[test]
    fn architectures_are_pairwise_distinct() {
        let models: Vec<_> = ZOO_ARCH_IDS
            .iter()
            .map(|id| build_architecture(id, SHAPE, 10, 0).unwrap())
            .collect();
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                let a: Vec<_> = models[i].layers().iter().map(|l| l.kind_name()).collect();
                let b: Vec<_> = models[j].layers().iter().map(|l| l.kind_name()).collect();
                assert!(
                    a != b || models[i].layers().len() != models[j].layers().len(),
                    "{} and {} share a layer sequence",
                    models[i].arch_id(),
                    models[j].arch_id()
                );
            }
        }
    }

    #[test]
    fn cnn_a_differs_from_cnn_b_in_layer_count() {
        let a = build_architecture("cnn-a", SHAPE, 10, 0).unwrap();
        let b = build_architecture("cnn-b", SHAPE, 10, 0).unwrap();
        assert_ne!(a.layers().len(), b.layers().len());
    }

    #[test]
    fn mlp_d_has_no_convolutions() {
        let m = build_architecture("mlp-d", SHAPE, 10, 0).unwrap();
        assert!(m
            .layers()
            .iter()
            .all(|l| !matches!(l, LayerOp::Conv2d { .. })));
    }

    #[test]
    fn unknown_id_is_rejected() {
        assert!(build_architecture("resnet-50", SHAPE, 10, 0).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_architecture("cnn-a", SHAPE, 10, 42).unwrap();
        let b = build_architecture("cnn-a", SHAPE, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = build_architecture("cnn-a", SHAPE, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_shapes_check_out() {
        for id in ZOO_ARCH_IDS {
            let m = build_architecture(id, SHAPE, 10, 1).unwrap();
            let x = Tensor::zeros(vec![1, 32, 32]);
            let (logits, feature, _) = m.forward(&x).unwrap();
            assert_eq!(logits.len(), 10, "{id}");
            assert_eq!(feature.len(), m.feature_dim(), "{id}");
        }
    }
}
