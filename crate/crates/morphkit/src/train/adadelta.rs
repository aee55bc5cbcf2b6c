//! Adadelta: per-coordinate step sizes from decaying accumulators of
//! squared gradients and squared updates.

use crate::autodiff::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaParams {
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdadeltaParams {
    fn default() -> Self {
        AdadeltaParams {
            lr: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
        }
    }
}

/// Optimizer state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdadeltaSlot {
    pub accum_grad: Tensor,
    pub accum_update: Tensor,
}

impl AdadeltaSlot {
    pub fn new(shape: &[usize]) -> AdadeltaSlot {
        AdadeltaSlot {
            accum_grad: Tensor::zeros(shape),
            accum_update: Tensor::zeros(shape),
        }
    }
}

/// One in-place update:
/// `E[g^2] <- rho E[g^2] + (1-rho) g^2`,
/// `dx = -sqrt(E[dx^2]+eps)/sqrt(E[g^2]+eps) * g`,
/// `E[dx^2] <- rho E[dx^2] + (1-rho) dx^2`,
/// `x <- x + lr * dx`.
pub fn adadelta_update(
    param: &mut Tensor,
    grad: &Tensor,
    slot: &mut AdadeltaSlot,
    hp: &AdadeltaParams,
) {
    debug_assert_eq!(param.shape(), grad.shape());
    let rho = hp.rho;
    for i in 0..param.len() {
        let g = grad.data()[i];
        let eg = &mut slot.accum_grad.data_mut()[i];
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let rms_g = (*eg + hp.epsilon).sqrt();
        let eu = &mut slot.accum_update.data_mut()[i];
        let rms_u = (*eu + hp.epsilon).sqrt();
        let dx = -(rms_u / rms_g) * g;
        *eu = rho * *eu + (1.0 - rho) * dx * dx;
        param.data_mut()[i] += hp.lr * dx;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameter_unchanged_and_decays_state() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        let mut slot = AdadeltaSlot::new(&[2]);
        slot.accum_grad.data_mut()[0] = 0.5;
        let g = Tensor::zeros(&[2]);
        let hp = AdadeltaParams::default();
        adadelta_update(&mut p, &g, &mut slot, &hp);
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert!((slot.accum_grad.data()[0] - 0.475).abs() < 1e-12, "state decays by rho");
    }

    #[test]
    fn constant_gradient_step_magnitude_stabilizes() {
        let mut p = Tensor::vector(vec![0.0]);
        let mut slot = AdadeltaSlot::new(&[1]);
        let g = Tensor::vector(vec![0.3]);
        let hp = AdadeltaParams::default();
        let mut deltas = Vec::new();
        let mut prev = p.data()[0];
        for _ in 0..500 {
            adadelta_update(&mut p, &g, &mut slot, &hp);
            deltas.push((p.data()[0] - prev).abs());
            prev = p.data()[0];
        }
        // After the warmup the per-step magnitude settles: the relative
        // change between consecutive late steps is tiny.
        let late = &deltas[400..];
        for w in late.windows(2) {
            assert!((w[1] - w[0]).abs() / w[0] < 1e-3);
        }
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let run = || {
            let mut p = Tensor::vector(vec![0.4, -0.1]);
            let mut slot = AdadeltaSlot::new(&[2]);
            let g = Tensor::vector(vec![0.2, 0.9]);
            adadelta_update(&mut p, &g, &mut slot, &AdadeltaParams::default());
            p.data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
