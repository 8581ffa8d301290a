//! Dense row-major tensors and the scalar types they can hold.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use crate::error::{Error, Result};

/// Scalar element of a [`Tensor`]. Implemented for `f32` (training) and
/// `f64` (gradient checking and reference comparisons).
pub trait Element:
    Copy
    + Default
    + Debug
    + Display
    + PartialOrd
    + Send
    + Sync
    + Sum
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    /// `C <- alpha * A·B + beta * C` for strided row/column layouts.
    ///
    /// `a` is `m×k`, `b` is `k×n`, `c` is `m×n`; strides are in elements.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );
}

fn extent(rows: usize, cols: usize, strides: (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * strides.0 as usize + (cols - 1) * strides.1 as usize + 1
}

macro_rules! impl_element {
    ($t:ty, $gemm:path) => {
        impl Element for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn ln_1p(self) -> Self {
                <$t>::ln_1p(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                assert!(a.len() >= extent(m, k, a_strides), "gemm: lhs too short");
                assert!(b.len() >= extent(k, n, b_strides), "gemm: rhs too short");
                assert!(c.len() >= extent(m, n, c_strides), "gemm: output too short");
                assert!(a_strides.0 >= 0 && a_strides.1 >= 0);
                assert!(b_strides.0 >= 0 && b_strides.1 >= 0);
                assert!(c_strides.0 >= 0 && c_strides.1 >= 0);
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    )
                }
            }
        }
    };
}

impl_element!(f32, matrixmultiply::sgemm);
impl_element!(f64, matrixmultiply::dgemm);

/// Dense n-dimensional array with an optional gradient slot of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if let Some(axis) = shape.iter().position(|&d| d == 0) {
            return Err(Error::contract(format!("axis {axis} of shape {shape:?} is zero")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("data length", numel, data.len()));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![T::ZERO; numel],
            grad: None,
        }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: (0..numel).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Adds `g` into the gradient slot, creating it on first use.
    pub fn accumulate_grad(&mut self, g: &[T]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::dim("gradient length", self.data.len(), g.len()));
        }
        match &mut self.grad {
            Some(slot) => slot.iter_mut().zip(g).for_each(|(s, &v)| *s += v),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Values (mutable) and gradient side by side.
    pub fn data_and_grad(&mut self) -> (&mut [T], Option<&[T]>) {
        (&mut self.data, self.grad.as_deref())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::dim("reshape element count", self.data.len(), numel));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::from_f64(v.to_f64())).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .map_or(true, |g| g.iter().all(|v| v.is_finite()))
    }
}

/// Unpacks a rank-4 shape as `(N, C, T, F)`.
pub(crate) fn dims4(shape: &[usize], what: &str) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [n, c, t, f] => Ok((*n, *c, *t, *f)),
        _ => Err(Error::dim(format!("{what} rank"), 4, shape.len())),
    }
}

pub(crate) fn dims2(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::dim(format!("{what} rank"), 2, shape.len())),
    }
}
