use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
        }
    }

    pub fn forward<T: Scalar>(self, z: &[T]) -> Vec<T> {
        z.iter().map(|&v| self.apply(v)).collect()
    }

    /// Gradient with respect to the pre-activation given the forward output.
    pub fn backward<T: Scalar>(self, output: &[T], upstream: &[T]) -> Vec<T> {
        output.iter().zip(upstream).map(|(&a, &g)| g * self.derivative_from_output(a)).collect()
    }

    pub(crate) fn apply_in_place<T: Scalar>(self, values: &mut [T]) {
        if self != Activation::Linear {
            for v in values {
                *v = self.apply(*v);
            }
        }
    }

    pub(crate) fn mask_in_place<T: Scalar>(self, output: &[T], grad: &mut [T]) {
        if self != Activation::Linear {
            for (g, &a) in grad.iter_mut().zip(output) {
                *g *= self.derivative_from_output(a);
            }
        }
    }
}
