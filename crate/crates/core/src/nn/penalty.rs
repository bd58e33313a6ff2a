use crate::Scalar;

use super::Tensor;

/// `lambda * sum(w^2)` over the given weight tensors and its gradient `2 lambda w`.
pub fn l2_penalty<T: Scalar>(params: &[&Tensor<T>], lambda: T) -> (T, Vec<Tensor<T>>) {
    let penalty = lambda * params.iter().map(|p| p.sum_of_squares()).sum::<T>();
    let two_lambda = lambda + lambda;
    let grads = params
        .iter()
        .map(|p| {
            let mut g = (*p).clone();
            g.scale(two_lambda);
            g
        })
        .collect();
    (penalty, grads)
}
