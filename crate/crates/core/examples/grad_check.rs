//! Analytic gradients of every loss against central finite differences.
//!
//!     cargo run --example grad_check

use binplay::codes::CodeLayout;
use binplay::nn::{
    distill_loss, grad_check, latent_reg_batch, mse_loss, softmax_ce_loss, softmax_rows, Activation, Gradients,
    ModelParams, Tensor2,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type LossFn = fn(&Tensor2, &Tensor2) -> binplay::Result<(f64, Tensor2)>;

fn wrap(x: &Tensor2, target: &Tensor2, loss: LossFn) -> impl Fn(&ModelParams) -> (f64, Gradients) {
    let (x, target) = (x.clone(), target.clone());
    move |p: &ModelParams| {
        let trace = p.forward_trace(&x).expect("forward");
        let (value, grad) = loss(trace.output(), &target).expect("loss");
        (value, p.backward(&trace, &grad).expect("backward").0)
    }
}

fn ce(logits: &Tensor2, onehot: &Tensor2) -> binplay::Result<(f64, Tensor2)> {
    let labels: Vec<usize> = onehot
        .rows()
        .into_iter()
        .map(|r| r.iter().position(|&v| v == 1.0).unwrap_or(0))
        .collect();
    softmax_ce_loss(logits, &labels)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layout = CodeLayout::uniform(4, &[3, 5], 4, 3).expect("layout");
    let n = layout.len();
    let codes = Array2::from_shape_fn((3, n), |(r, c)| layout.full_code(1, r as u64 + 1).unwrap().to_f64()[c]);
    let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
    let classes = Array2::from_shape_fn((3, 4), |(r, c)| f64::from(u8::from(c == r)));
    let teacher = softmax_rows(&Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0)));
    let pixels = Array2::from_shape_fn((3, 5), |_| rng.random_range(0.0..1.0));

    let cases: [(&str, &[usize], Activation, &Tensor2, LossFn); 4] = [
        ("latent regularizer", &[5, 7, n], Activation::Identity, &codes, latent_reg_batch),
        ("reconstruction", &[5, 6, 5], Activation::Logistic, &pixels, mse_loss),
        ("cross-entropy", &[5, 6, 6, 4], Activation::Identity, &classes, ce),
        ("distillation", &[5, 4], Activation::Identity, &teacher, distill_loss),
    ];
    for (name, widths, output, target, loss) in cases {
        let net = ModelParams::init(widths, Activation::LeakyRelu, output, &mut rng).expect("init");
        let worst = grad_check(&net, wrap(&x, target, loss), 1e-5, 200, &mut rng);
        println!("{name:>20}: {widths:?} max relative error {worst:.2e}");
    }
}
