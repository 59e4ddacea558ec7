//! Shared fixtures for the pipeline benchmarks.

use logitcal::model::ClassifierModel;
use logitcal::tensor::Tensor;
use logitcal::zoo::build_architecture;

pub fn bench_model(arch: &str) -> ClassifierModel {
    build_architecture(arch, [1, 32, 32], 10, 0xB35C).unwrap()
}

pub fn bench_image() -> Tensor {
    Tensor::from_vec(
        vec![1, 32, 32],
        (0..1024).map(|i| ((i * 29 + 7) % 256) as f32).collect(),
    )
    .unwrap()
}
