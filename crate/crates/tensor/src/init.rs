use rand::Rng;

use crate::tensor::Tensor;

/// Inverted dropout mask: survivors scaled by `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Tensor {
    let keep = 1.0 - p;
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}
