//! Central finite-difference gradient oracle and the backward-op check suite.
//!
//! The oracle stays independent of every analytic backward path: it only
//! calls forward functions.

use crate::error::Result;
use crate::ops::activation::*;
use crate::ops::batch_norm::*;
use crate::ops::conv::*;
use crate::ops::loss::*;
use crate::rng::normal_at;
use crate::tensor::Tensor;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h over a flat slice.
pub fn finite_diff_gradient_slice<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Tensor-shaped wrapper around [`finite_diff_gradient_slice`].
pub fn finite_diff_gradient<F>(mut f: F, input: &Tensor, h: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let (n, hh, w, c) = input.shape();
    let grad = finite_diff_gradient_slice(
        |data| {
            let t = Tensor::from_vec(n, hh, w, c, data.to_vec()).expect("probe shape");
            f(&t)
        },
        input.data(),
        h,
    );
    Tensor::from_vec(n, hh, w, c, grad).expect("gradient shape")
}

/// Elementwise |a - b| / max(|a| + |b|, 1), maximized over the slice. The
/// floor makes the comparison absolute for vanishing gradients.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b).abs() / (a.abs() + b.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub op: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.tolerance
    }
}

const FD_H: f64 = 1e-6;
const TOL: f64 = 1e-5;
const TOL_PIECEWISE: f64 = 1e-6;

fn random_tensor(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    let data = (0..n * h * w * c)
        .map(|i| normal_at(seed, i as u64))
        .collect();
    Tensor::from_vec(n, h, w, c, data).unwrap()
}

/// Random values kept away from the activation kink at zero.
fn random_tensor_off_kink(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    let data = (0..n * h * w * c)
        .map(|i| {
            let v = normal_at(seed, i as u64);
            let v = if v.abs() < 0.05 { v + 0.1 * v.signum() } else { v };
            if v == 0.0 {
                0.1
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(n, h, w, c, data).unwrap()
}

fn projected_sum(t: &Tensor, projection: &Tensor) -> f64 {
    t.data()
        .iter()
        .zip(projection.data())
        .map(|(&a, &b)| a * b)
        .sum()
}

fn check_conv(seed: u64) -> GradCheckReport {
    let input = random_tensor(2, 6, 5, 3, seed);
    let kernel = ConvKernel::new(
        3,
        3,
        4,
        (0..3 * 3 * 3 * 4).map(|i| normal_at(seed ^ 1, i as u64)).collect(),
        (0..4).map(|i| normal_at(seed ^ 2, i as u64)).collect(),
    )
    .unwrap();
    let projection = random_tensor(2, 6, 5, 4, seed ^ 3);

    let (grad_in, grad_p) = conv2d_backward(&input, &kernel, &projection).unwrap();

    let fd_in = finite_diff_gradient(
        |x| projected_sum(&conv2d_forward(x, &kernel).unwrap(), &projection),
        &input,
        FD_H,
    );
    let mut worst = max_rel_error(grad_in.data(), fd_in.data());

    let fd_w = finite_diff_gradient_slice(
        |w| {
            let k = ConvKernel::new(3, 3, 4, w.to_vec(), kernel.biases.clone()).unwrap();
            projected_sum(&conv2d_forward(&input, &k).unwrap(), &projection)
        },
        &kernel.weights,
        FD_H,
    );
    worst = worst.max(max_rel_error(&grad_p.weights, &fd_w));

    let fd_b = finite_diff_gradient_slice(
        |b| {
            let k = ConvKernel::new(3, 3, 4, kernel.weights.clone(), b.to_vec()).unwrap();
            projected_sum(&conv2d_forward(&input, &k).unwrap(), &projection)
        },
        &kernel.biases,
        FD_H,
    );
    worst = worst.max(max_rel_error(&grad_p.biases, &fd_b));

    GradCheckReport {
        op: "conv2d",
        max_rel_err: worst,
        // Linear op: finite differences are near-exact.
        tolerance: TOL_PIECEWISE,
    }
}

fn check_relu(seed: u64) -> GradCheckReport {
    let input = random_tensor_off_kink(2, 8, 8, 4, seed);
    let projection = random_tensor(2, 8, 8, 4, seed ^ 1);
    let analytic = relu_backward(&input, &projection).unwrap();
    let fd = finite_diff_gradient(
        |x| projected_sum(&relu_forward(x), &projection),
        &input,
        FD_H,
    );
    GradCheckReport {
        op: "relu",
        max_rel_err: max_rel_error(analytic.data(), fd.data()),
        tolerance: TOL_PIECEWISE,
    }
}

fn check_leaky_relu(seed: u64) -> GradCheckReport {
    let alpha = 0.2;
    let input = random_tensor_off_kink(2, 8, 8, 4, seed);
    let projection = random_tensor(2, 8, 8, 4, seed ^ 1);
    let analytic = leaky_relu_backward(&input, alpha, &projection).unwrap();
    let fd = finite_diff_gradient(
        |x| projected_sum(&leaky_relu_forward(x, alpha).unwrap(), &projection),
        &input,
        FD_H,
    );
    GradCheckReport {
        op: "leaky_relu",
        max_rel_err: max_rel_error(analytic.data(), fd.data()),
        tolerance: TOL_PIECEWISE,
    }
}

fn check_batch_norm(seed: u64) -> GradCheckReport {
    let input = random_tensor(2, 4, 4, 3, seed);
    let projection = random_tensor(2, 4, 4, 3, seed ^ 1);
    let mut params = BatchNormState::identity(3);
    // Non-trivial affine part so gamma/beta gradients are exercised.
    params.gamma = vec![1.3, 0.7, -0.4];
    params.beta = vec![0.1, -0.2, 0.05];

    let fwd = batch_norm_forward(&input, &params, BnMode::Train).unwrap();
    let cache = fwd.cache.unwrap();
    let (grad_in, grad_affine) =
        batch_norm_backward(&input, &params, &cache, &projection).unwrap();

    let run = |x: &Tensor, p: &BatchNormState| {
        projected_sum(
            &batch_norm_forward(x, p, BnMode::Train).unwrap().output,
            &projection,
        )
    };

    let fd_in = finite_diff_gradient(|x| run(x, &params), &input, FD_H);
    let mut worst = max_rel_error(grad_in.data(), fd_in.data());

    let fd_gamma = finite_diff_gradient_slice(
        |g| {
            let mut p = params.clone();
            p.gamma = g.to_vec();
            run(&input, &p)
        },
        &params.gamma,
        FD_H,
    );
    worst = worst.max(max_rel_error(&grad_affine.gamma, &fd_gamma));

    let fd_beta = finite_diff_gradient_slice(
        |b| {
            let mut p = params.clone();
            p.beta = b.to_vec();
            run(&input, &p)
        },
        &params.beta,
        FD_H,
    );
    worst = worst.max(max_rel_error(&grad_affine.beta, &fd_beta));

    GradCheckReport {
        op: "batch_norm",
        max_rel_err: worst,
        tolerance: TOL,
    }
}

fn check_l2_loss(seed: u64) -> GradCheckReport {
    let pred = random_tensor(1, 8, 8, 3, seed);
    let target = random_tensor(1, 8, 8, 3, seed ^ 1);
    let analytic = l2_loss_grad(&pred, &target).unwrap();
    let fd = finite_diff_gradient(|p| l2_loss(p, &target).unwrap(), &pred, FD_H);
    GradCheckReport {
        op: "l2_loss",
        max_rel_err: max_rel_error(analytic.data(), fd.data()),
        tolerance: TOL,
    }
}

/// Runs the finite-difference check for every backward op on seeded random
/// tensors. All reports must pass for a healthy build.
pub fn run_gradcheck_suite(seed: u64) -> Vec<GradCheckReport> {
    vec![
        check_conv(seed),
        check_relu(seed.wrapping_add(1)),
        check_leaky_relu(seed.wrapping_add(2)),
        check_batch_norm(seed.wrapping_add(3)),
        check_l2_loss(seed.wrapping_add(4)),
    ]
}

/// Convenience used by tests and the CLI: error if any op fails.
pub fn assert_gradcheck(seed: u64) -> Result<Vec<GradCheckReport>> {
    let reports = run_gradcheck_suite(seed);
    for r in &reports {
        if !r.passed() {
            return Err(crate::error::Error::NonFinite(format!(
                "gradient check failed for {}: max rel err {:e} >= {:e}",
                r.op, r.max_rel_err, r.tolerance
            )));
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_two_x() {
        let x = Tensor::hwc(2, 2, 1, vec![1.0; 4]).unwrap();
        let g = finite_diff_gradient(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-6);
        for &v in g.data() {
            assert!((v - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::hwc(1, 3, 1, vec![0.3, -0.2, 0.9]).unwrap();
        let coef = [2.0, -4.0, 0.5];
        let g = finite_diff_gradient(
            |t| t.data().iter().zip(&coef).map(|(v, c)| v * c).sum(),
            &x,
            1e-6,
        );
        for (a, b) in g.data().iter().zip(&coef) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn suite_passes_on_all_ops() {
        for r in run_gradcheck_suite(2024) {
            assert!(r.passed(), "{} failed: {:e}", r.op, r.max_rel_err);
        }
    }

    #[test]
    fn suite_is_seed_reproducible() {
        let a = run_gradcheck_suite(7);
        let b = run_gradcheck_suite(7);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.max_rel_err, y.max_rel_err);
        }
    }

    #[test]
    fn corrupted_backward_is_caught() {
        // A broken analytic gradient (sign flip) must trip the check.
        let x = Tensor::hwc(2, 2, 2, (0..8).map(|i| 1.0 + i as f64).collect()).unwrap();
        let fd = finite_diff_gradient(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-6);
        let corrupted: Vec<f64> = fd.data().iter().map(|v| -v).collect();
        assert!(max_rel_error(&corrupted, fd.data()) > 0.5);
    }
}
