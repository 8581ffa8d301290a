//! Affine, ReLU and softmax cross-entropy kernels.

use crate::error::{Error, Result};
use crate::tensor::{dims2, Element};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffineGeometry {
    pub rows: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl AffineGeometry {
    pub fn new(input: &[usize], weight: &[usize], bias: &[usize]) -> Result<Self> {
        let (rows, inputs) = dims2(input, "affine input")?;
        let (w_in, outputs) = dims2(weight, "affine weight")?;
        if w_in != inputs {
            return Err(Error::dim("affine inner dimension", w_in, inputs));
        }
        if bias != [outputs] {
            return Err(Error::dim("affine bias", outputs, bias.iter().product()));
        }
        Ok(Self { rows, inputs, outputs })
    }
}

/// `x·W + b`
pub fn affine_forward<T: Element>(g: &AffineGeometry, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (n, d, h) = (g.rows, g.inputs, g.outputs);
    let mut y: Vec<T> = (0..n).flat_map(|_| b.iter().copied()).collect();
    T::gemm(n, d, h, T::ONE, x, (d as isize, 1), w, (h as isize, 1), T::ONE, &mut y, (h as isize, 1));
    y
}

pub struct AffineGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn affine_backward<T: Element>(g: &AffineGeometry, x: &[T], w: &[T], dy: &[T], want_input: bool) -> AffineGrads<T> {
    let (n, d, h) = (g.rows, g.inputs, g.outputs);
    let mut weight = vec![T::ZERO; d * h];
    // dW = xᵀ · dY
    T::gemm(d, n, h, T::ONE, x, (1, d as isize), dy, (h as isize, 1), T::ZERO, &mut weight, (h as isize, 1));
    let mut bias = vec![T::ZERO; h];
    for row in dy.chunks(h) {
        bias.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
    }
    let input = want_input.then(|| {
        let mut dx = vec![T::ZERO; n * d];
        // dX = dY · Wᵀ
        T::gemm(n, h, d, T::ONE, dy, (h as isize, 1), w, (1, h as isize), T::ZERO, &mut dx, (d as isize, 1));
        dx
    });
    AffineGrads { input, weight, bias }
}

/// NaN passes through so that corrupt inputs surface as a non-finite loss.
pub fn relu_forward<T: Element>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v < T::ZERO { T::ZERO } else { v }).collect()
}

/// Passes `dy` where the input was strictly positive; zero at and below zero.
pub fn relu_backward<T: Element>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &d)| if v > T::ZERO { d } else { T::ZERO })
        .collect()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Element>(logits: &[T], classes: usize) -> Vec<T> {
    let mut probs = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let max = row.iter().copied().fold(row[0], |a, b| if b > a { b } else { a });
        let start = probs.len();
        let mut total = T::ZERO;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            probs.push(e);
        }
        probs[start..].iter_mut().for_each(|p| *p = *p / total);
    }
    probs
}

/// Mean negative log-likelihood of `targets` under the row softmax of
/// `logits` (`rows×classes`). Returns the loss and the probabilities.
pub fn softmax_xent_forward<T: Element>(logits: &[T], classes: usize, targets: &[usize]) -> Result<(T, Vec<T>)> {
    let rows = logits.len() / classes;
    if targets.len() != rows {
        return Err(Error::dim("softmax targets", rows, targets.len()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::Index {
            what: "softmax classes",
            index: bad,
            len: classes,
        });
    }
    let mut total = T::ZERO;
    for (row, &t) in logits.chunks(classes).zip(targets) {
        let (arg, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, row[0]), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        // log-sum-exp as max + ln(1 + Σ_{j≠argmax} e^(v_j−max)), exact for confident rows
        let rest: T = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != arg)
            .map(|(_, &v)| (v - max).exp())
            .sum();
        total += rest.ln_1p() + (max - row[t]);
    }
    let probs = softmax_rows(logits, classes);
    Ok((total / T::from_f64(rows as f64), probs))
}

/// `(softmax − onehot) / N`, scaled by the upstream scalar gradient.
pub fn softmax_xent_backward<T: Element>(probs: &[T], classes: usize, targets: &[usize], upstream: T) -> Vec<T> {
    let scale = upstream / T::from_f64(targets.len() as f64);
    let mut g: Vec<T> = probs.iter().map(|&p| p * scale).collect();
    for (row, &t) in g.chunks_mut(classes).zip(targets) {
        row[t] -= scale;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_plus_bias() {
        let g = AffineGeometry::new(&[1, 2], &[2, 2], &[2]).unwrap();
        assert_eq!(affine_forward(&g, &[1.0f64, 2.0], &[1.0, 0.0, 0.0, 1.0], &[1.0, 1.0]), vec![2.0, 3.0]);
    }

    #[test]
    fn affine_zero_weight_yields_bias() {
        let g = AffineGeometry::new(&[3, 2], &[2, 2], &[2]).unwrap();
        let y = affine_forward(&g, &[1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.0; 4], &[0.5, -1.0]);
        assert_eq!(y, vec![0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn affine_mismatch() {
        assert!(matches!(AffineGeometry::new(&[3, 4], &[5, 2], &[2]), Err(Error::Dimension { .. })));
        assert!(AffineGeometry::new(&[3, 4096], &[4096, 2048], &[2048]).is_ok());
    }

    #[test]
    fn relu_values_and_gradient() {
        assert_eq!(relu_forward(&[-1.0f32, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&[-1.0f32, 0.0, 2.0], &[5.0, 5.0, 5.0]), vec![0.0, 0.0, 5.0]);
    }

    #[test]
    fn uniform_two_class() {
        let (loss, probs) = softmax_xent_forward(&[0.0f64, 0.0], 2, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softmax_xent_backward(&probs, 2, &[0], 1.0), vec![-0.5, 0.5]);
    }

    #[test]
    fn confident_logits_stay_accurate() {
        // log1p(exp(-20)) evaluated to 40 digits: 2.0611536203143807032e-9
        let (loss, _) = softmax_xent_forward(&[10.0f64, -10.0], 2, &[0]).unwrap();
        assert!((loss - 2.061_153_620_314_380_7e-9).abs() < 1e-22);
    }

    #[test]
    fn target_out_of_range() {
        assert!(matches!(softmax_xent_forward(&[0.0f32, 0.0], 2, &[2]), Err(Error::Index { .. })));
    }
}
