//! Central-difference gradient oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::ops::{Padding, PoolParams};
use crate::tensor::Tensor;

/// Relative error between an analytic and a numeric derivative, with the
/// denominator floored at 1e-12.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares reverse-mode gradients against central differences.
///
/// `f` records a scalar-valued function of `inputs` on a fresh tape and
/// returns the root. Every element of every input is perturbed by `±h`.
/// Returns the largest relative error over all elements.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a, f64>, &[Var]) -> Result<Var>,
{
    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t)).collect();
        let root = f(&mut tape, &vars)?;
        let grads = tape.backward(root)?;
        vars.iter()
            .zip(inputs)
            .map(|(&v, t)| grads.get(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
            .collect()
    };

    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t)).collect();
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root)[0])
    };

    let mut work = inputs.to_vec();
    let mut worst = 0.0f64;
    for (which, grad) in analytic.iter().enumerate() {
        for (i, &g) in grad.iter().enumerate() {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[which].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(g, numeric));
        }
    }
    Ok(worst)
}

/// Single-input convenience wrapper around [`finite_diff_check`].
pub fn finite_diff_check_one<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a, f64>, Var) -> Result<Var>,
{
    finite_diff_check(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)
}

/// Worst relative error seen for one layer type over a batch of random cases.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerReport {
    pub layer: &'static str,
    pub cases: usize,
    pub worst: f64,
}

pub const SUITE_LAYERS: [&str; 5] = ["conv2d", "maxpool2d", "relu", "affine", "softmax_xent"];

/// Step for the piecewise-linear layers; central differences are exact
/// there up to rounding, so a large step keeps rounding error small.
const LINEAR_STEP: f64 = 1e-3;
const SMOOTH_STEP: f64 = 1e-5;

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Values at least `gap` apart so no max-pool window holds a near tie.
fn distinct(rng: &mut ChaCha8Rng, shape: Vec<usize>, gap: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let data = order.iter().map(|&k| (k as f64 - n as f64 / 2.0) * gap).collect();
    Tensor::new(shape, data).expect("sized")
}

/// Values kept clear of zero so no ReLU input sits on the kink.
fn off_kink(rng: &mut ChaCha8Rng, shape: Vec<usize>, margin: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(margin..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// `Σ r ⊙ y`: a scalar whose gradient with respect to `y` is `r`.
fn project<'a>(tape: &mut Tape<'a, f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = tape.constant_owned(r.clone());
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn check_conv(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, c, o) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (t, f) = (rng.gen_range(3..=6), rng.gen_range(3..=6));
    let (kt, kf) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let pad = Padding::new(rng.gen_range(0..=1), rng.gen_range(0..=1));
    let x = uniform(rng, vec![n, c, t, f], -1.0, 1.0);
    let w = uniform(rng, vec![o, c, kt, kf], -1.0, 1.0);
    let b = uniform(rng, vec![o], -1.0, 1.0);
    let (ot, of) = (t + 2 * pad.time - kt + 1, f + 2 * pad.freq - kf + 1);
    let r = uniform(rng, vec![n, o, ot, of], -1.0, 1.0);
    finite_diff_check(
        |tape, v| {
            let y = tape.conv2d(v[0], v[1], v[2], pad)?;
            project(tape, y, &r)
        },
        &[x, w, b],
        LINEAR_STEP,
    )
}

fn check_pool(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, c) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
    let (pt, pf) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (t, f) = (rng.gen_range(pt..=pt * 3 + 1), rng.gen_range(pf..=pf * 3 + 1));
    let pool = PoolParams::new(pt, pf);
    let x = distinct(rng, vec![n, c, t, f], 0.05);
    let r = uniform(rng, vec![n, c, t / pt, f / pf], -1.0, 1.0);
    finite_diff_check(
        |tape, v| {
            let y = tape.maxpool2d(v[0], pool)?;
            project(tape, y, &r)
        },
        &[x],
        LINEAR_STEP,
    )
}

fn check_relu(rng: &mut ChaCha8Rng) -> Result<f64> {
    let shape = vec![rng.gen_range(1..=3), rng.gen_range(1..=8)];
    let x = off_kink(rng, shape.clone(), 10.0 * LINEAR_STEP);
    let r = uniform(rng, shape, -1.0, 1.0);
    finite_diff_check(
        |tape, v| {
            let y = tape.relu(v[0]);
            project(tape, y, &r)
        },
        &[x],
        LINEAR_STEP,
    )
}

fn check_affine(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, i, o) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=5));
    let x = uniform(rng, vec![n, i], -1.0, 1.0);
    let w = uniform(rng, vec![i, o], -1.0, 1.0);
    let b = uniform(rng, vec![o], -1.0, 1.0);
    let r = uniform(rng, vec![n, o], -1.0, 1.0);
    finite_diff_check(
        |tape, v| {
            let y = tape.affine(v[0], v[1], v[2])?;
            project(tape, y, &r)
        },
        &[x, w, b],
        LINEAR_STEP,
    )
}

fn check_softmax(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, k) = (rng.gen_range(1..=4), rng.gen_range(2..=6));
    let logits = uniform(rng, vec![n, k], -3.0, 3.0);
    let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    finite_diff_check(|tape, v| tape.softmax_xent(v[0], &targets), &[logits], SMOOTH_STEP)
}

/// Finite-difference check of every differentiable layer over `cases`
/// random configurations each, in double precision.
pub fn run_suite(cases: usize, seed: u64) -> Result<Vec<LayerReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks: [fn(&mut ChaCha8Rng) -> Result<f64>; 5] = [check_conv, check_pool, check_relu, check_affine, check_softmax];
    SUITE_LAYERS
        .iter()
        .zip(checks)
        .map(|(&layer, check)| {
            let mut worst = 0.0f64;
            for _ in 0..cases {
                worst = worst.max(check(&mut rng)?);
            }
            Ok(LayerReport { layer, cases, worst })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_matches_closed_form() {
        let x = Tensor::scalar(3.0);
        let err = finite_diff_check_one(|t, v| t.mul(v, v), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu at exactly zero: analytic 0, numeric 0.5
        let x = Tensor::new([1], vec![0.0]).unwrap();
        let err = finite_diff_check_one(|t, v| Ok(t.relu(v)), &x, 1e-5).unwrap();
        assert!(err > 0.5);
    }

    #[test]
    fn suite_smoke() {
        for r in run_suite(3, 5).unwrap() {
            assert!(r.worst < 1e-4, "{r:?}");
        }
    }
}
