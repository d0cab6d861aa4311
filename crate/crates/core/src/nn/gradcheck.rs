use rand::seq::index::sample;
use rand::Rng;

use super::{Gradients, ModelParams};

/// Denominator floor for [`relative_error`], so that entries where both
/// gradients vanish compare by absolute difference instead of blowing up.
///
/// A central difference with step `h` on a loss of size `L` carries roundoff
/// of roughly `1e-16 * L / h`, about `3e-11` for `L = 1.5` and `h = 1e-5`.
/// Gradient entries much smaller than this floor are dominated by that noise.
pub const GRAD_CHECK_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    diff / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Largest relative error between `loss_fn`'s analytic gradients and central
/// finite differences with step `h`, over at most `max_params` randomly
/// chosen parameters (all of them when the model is smaller).
pub fn grad_check<F, R>(params: &ModelParams, loss_fn: F, h: f64, max_params: usize, rng: &mut R) -> f64
where
    F: Fn(&ModelParams) -> (f64, Gradients),
    R: Rng + ?Sized,
{
    let (_, analytic) = loss_fn(params);
    let total = params.param_count();
    let chosen: Vec<usize> = if total <= max_params {
        (0..total).collect()
    } else {
        sample(rng, total, max_params).into_vec()
    };
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for k in chosen {
        let original = probe.param(k);
        probe.set_param(k, original + h);
        let plus = loss_fn(&probe).0;
        probe.set_param(k, original - h);
        let minus = loss_fn(&probe).0;
        probe.set_param(k, original);
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic.get(k), numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mse_loss, softmax_ce_loss, Activation, Tensor2};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = ModelParams::init(&[4, 3], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let x = inputs(&mut rng, 5, 4);
        let y = inputs(&mut rng, 5, 3);
        let err = grad_check(
            &net,
            |p| {
                let trace = p.forward_trace(&x).unwrap();
                let (l, g) = mse_loss(trace.output(), &y).unwrap();
                (l, p.backward(&trace, &g).unwrap().0)
            },
            1e-4,
            usize::MAX,
            &mut rng,
        );
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn two_layer_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = ModelParams::init(&[4, 6, 3], Activation::LeakyRelu, Activation::Identity, &mut rng).unwrap();
        let x = inputs(&mut rng, 4, 4);
        let labels = [0, 2, 1, 2];
        let err = grad_check(
            &net,
            |p| {
                let trace = p.forward_trace(&x).unwrap();
                let (l, g) = softmax_ce_loss(trace.output(), &labels).unwrap();
                (l, p.backward(&trace, &g).unwrap().0)
            },
            1e-4,
            usize::MAX,
            &mut rng,
        );
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = ModelParams::init(&[3, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let err = grad_check(&net, |p| (4.0, Gradients::zeros_like(p)), 1e-4, usize::MAX, &mut rng);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let net = ModelParams::init(&[3, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let x = inputs(&mut rng, 2, 3);
        let y = inputs(&mut rng, 2, 2);
        let err = grad_check(
            &net,
            |p| {
                let trace = p.forward_trace(&x).unwrap();
                let (l, g) = mse_loss(trace.output(), &y).unwrap();
                let mut grads = p.backward(&trace, &g).unwrap().0;
                grads.scale(1.1);
                (l, grads)
            },
            1e-4,
            usize::MAX,
            &mut rng,
        );
        assert!(err > 0.05);
    }

    #[test]
    fn subsamples_large_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net = ModelParams::init(&[30, 20], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let x = inputs(&mut rng, 3, 30);
        let y = inputs(&mut rng, 3, 20);
        let err = grad_check(
            &net,
            |p| {
                let trace = p.forward_trace(&x).unwrap();
                let (l, g) = mse_loss(trace.output(), &y).unwrap();
                (l, p.backward(&trace, &g).unwrap().0)
            },
            1e-4,
            25,
            &mut rng,
        );
        assert!(err < 1e-6);
    }
}
