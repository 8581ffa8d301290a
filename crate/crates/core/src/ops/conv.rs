//! Stride-1 2-D cross-correlation over `N×C×T×F` inputs.
//!
//! Two forward paths exist: [`forward`] lowers each sample to a column
//! matrix and runs one GEMM, [`forward_direct`] is the plain nested-loop
//! definition. The direct path is the reference the fast one is tested against.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{dims4, Element};

/// Samples per work unit in the backward pass. Partial weight gradients are
/// reduced in chunk order, so results do not depend on the thread count.
const SAMPLE_CHUNK: usize = 8;

/// Zero padding applied to each side of the time and frequency axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Padding {
    pub time: usize,
    pub freq: usize,
}

impl Padding {
    pub const NONE: Padding = Padding { time: 0, freq: 0 };
    pub const SAME3: Padding = Padding { time: 1, freq: 1 };

    pub fn new(time: usize, freq: usize) -> Self {
        Self { time, freq }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_maps: usize,
    pub in_t: usize,
    pub in_f: usize,
    pub out_maps: usize,
    pub k_t: usize,
    pub k_f: usize,
    pub pad: Padding,
    pub out_t: usize,
    pub out_f: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernels: &[usize], pad: Padding) -> Result<Self> {
        let (batch, in_maps, in_t, in_f) = dims4(input, "conv input")?;
        let (out_maps, k_in, k_t, k_f) = dims4(kernels, "conv kernels")?;
        if k_in != in_maps {
            return Err(Error::dim("conv input channels", k_in, in_maps));
        }
        let padded_t = in_t + 2 * pad.time;
        let padded_f = in_f + 2 * pad.freq;
        if padded_t < k_t {
            return Err(Error::infeasible(
                "conv2d",
                format!("padded time extent {padded_t} is smaller than kernel height {k_t}"),
            ));
        }
        if padded_f < k_f {
            return Err(Error::infeasible(
                "conv2d",
                format!("padded frequency extent {padded_f} is smaller than kernel width {k_f}"),
            ));
        }
        Ok(Self {
            batch,
            in_maps,
            in_t,
            in_f,
            out_maps,
            k_t,
            k_f,
            pad,
            out_t: padded_t - k_t + 1,
            out_f: padded_f - k_f + 1,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_maps, self.out_t, self.out_f]
    }

    /// Rows of the column matrix: `C·kT·kF`.
    fn patch(&self) -> usize {
        self.in_maps * self.k_t * self.k_f
    }

    /// Columns of the column matrix: `T'·F'`.
    fn positions(&self) -> usize {
        self.out_t * self.out_f
    }

    fn in_sample(&self) -> usize {
        self.in_maps * self.in_t * self.in_f
    }

    fn out_sample(&self) -> usize {
        self.out_maps * self.positions()
    }
}

/// Lowers one `C×T×F` sample into a `(C·kT·kF) × (T'·F')` column matrix.
fn im2col<T: Element>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.in_maps {
        let plane = &x[c * g.in_t * g.in_f..(c + 1) * g.in_t * g.in_f];
        for i in 0..g.k_t {
            for j in 0..g.k_f {
                let dst = &mut cols[row * p..(row + 1) * p];
                for ot in 0..g.out_t {
                    let out_row = &mut dst[ot * g.out_f..(ot + 1) * g.out_f];
                    let it = (ot + i) as isize - g.pad.time as isize;
                    if it < 0 || it >= g.in_t as isize {
                        out_row.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[it as usize * g.in_f..(it as usize + 1) * g.in_f];
                    for (of, v) in out_row.iter_mut().enumerate() {
                        let f = (of + j) as isize - g.pad.freq as isize;
                        *v = if f < 0 || f >= g.in_f as isize {
                            T::ZERO
                        } else {
                            src[f as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a column-matrix gradient back onto one input sample.
fn col2im<T: Element>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.in_maps {
        let plane = &mut dx[c * g.in_t * g.in_f..(c + 1) * g.in_t * g.in_f];
        for i in 0..g.k_t {
            for j in 0..g.k_f {
                let src = &cols[row * p..(row + 1) * p];
                for ot in 0..g.out_t {
                    let it = (ot + i) as isize - g.pad.time as isize;
                    if it < 0 || it >= g.in_t as isize {
                        continue;
                    }
                    let dst = &mut plane[it as usize * g.in_f..(it as usize + 1) * g.in_f];
                    for of in 0..g.out_f {
                        let f = (of + j) as isize - g.pad.freq as isize;
                        if f >= 0 && f < g.in_f as isize {
                            dst[f as usize] += src[ot * g.out_f + of];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// im2col + GEMM forward pass.
pub fn forward<T: Element>(g: &ConvGeometry, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (k, p, o) = (g.patch(), g.positions(), g.out_maps);
    let mut out = vec![T::ZERO; g.batch * g.out_sample()];
    out.par_chunks_mut(g.out_sample())
        .zip(x.par_chunks(g.in_sample()))
        .for_each_init(
            || vec![T::ZERO; k * p],
            |cols, (y, xs)| {
                im2col(g, xs, cols);
                T::gemm(o, k, p, T::ONE, w, (k as isize, 1), cols, (p as isize, 1), T::ZERO, y, (p as isize, 1));
                for (map, &bias) in y.chunks_mut(p).zip(b) {
                    map.iter_mut().for_each(|v| *v += bias);
                }
            },
        );
    out
}

/// Reference forward pass: the textbook loop nest, no lowering.
pub fn forward_direct<T: Element>(g: &ConvGeometry, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; g.batch * g.out_sample()];
    for n in 0..g.batch {
        for o in 0..g.out_maps {
            for ot in 0..g.out_t {
                for of in 0..g.out_f {
                    let mut acc = b[o];
                    for c in 0..g.in_maps {
                        for i in 0..g.k_t {
                            let it = (ot + i) as isize - g.pad.time as isize;
                            if it < 0 || it >= g.in_t as isize {
                                continue;
                            }
                            for j in 0..g.k_f {
                                let f = (of + j) as isize - g.pad.freq as isize;
                                if f < 0 || f >= g.in_f as isize {
                                    continue;
                                }
                                let xi = ((n * g.in_maps + c) * g.in_t + it as usize) * g.in_f + f as usize;
                                let wi = ((o * g.in_maps + c) * g.k_t + i) * g.k_f + j;
                                acc += x[xi] * w[wi];
                            }
                        }
                    }
                    out[((n * g.out_maps + o) * g.out_t + ot) * g.out_f + of] = acc;
                }
            }
        }
    }
    out
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernels: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of the loss with respect to input, kernels and bias given the
/// output gradient `dy`. The input gradient is skipped when not requested.
pub fn backward<T: Element>(g: &ConvGeometry, x: &[T], w: &[T], dy: &[T], want_input: bool) -> ConvGrads<T> {
    let (k, p, o) = (g.patch(), g.positions(), g.out_maps);
    let mut dx = if want_input {
        vec![T::ZERO; g.batch * g.in_sample()]
    } else {
        Vec::new()
    };

    let chunk_in = SAMPLE_CHUNK * g.in_sample();
    let chunk_out = SAMPLE_CHUNK * g.out_sample();
    let dx_chunks: Vec<Option<&mut [T]>> = if want_input {
        dx.chunks_mut(chunk_in).map(Some).collect()
    } else {
        (0..g.batch.div_ceil(SAMPLE_CHUNK)).map(|_| None).collect()
    };

    let partials: Vec<(Vec<T>, Vec<T>)> = dx_chunks
        .into_par_iter()
        .zip(x.par_chunks(chunk_in))
        .zip(dy.par_chunks(chunk_out))
        .map(|((mut dx_chunk, xs), dys)| {
            let mut dw = vec![T::ZERO; o * k];
            let mut db = vec![T::ZERO; o];
            let mut cols = vec![T::ZERO; k * p];
            let mut dcols = if want_input { vec![T::ZERO; k * p] } else { Vec::new() };
            for (s, (xn, dyn_)) in xs.chunks(g.in_sample()).zip(dys.chunks(g.out_sample())).enumerate() {
                im2col(g, xn, &mut cols);
                // dW += dY · colsᵀ
                T::gemm(o, p, k, T::ONE, dyn_, (p as isize, 1), &cols, (1, p as isize), T::ONE, &mut dw, (k as isize, 1));
                for (acc, map) in db.iter_mut().zip(dyn_.chunks(p)) {
                    *acc += map.iter().copied().sum::<T>();
                }
                if let Some(dxc) = dx_chunk.as_deref_mut() {
                    // dcols = Wᵀ · dY
                    T::gemm(k, o, p, T::ONE, w, (1, k as isize), dyn_, (p as isize, 1), T::ZERO, &mut dcols, (p as isize, 1));
                    col2im(g, &dcols, &mut dxc[s * g.in_sample()..(s + 1) * g.in_sample()]);
                }
            }
            (dw, db)
        })
        .collect();

    let mut kernels = vec![T::ZERO; o * k];
    let mut bias = vec![T::ZERO; o];
    for (dw, db) in partials {
        kernels.iter_mut().zip(dw).for_each(|(a, v)| *a += v);
        bias.iter_mut().zip(db).for_each(|(a, v)| *a += v);
    }
    ConvGrads {
        input: want_input.then_some(dx),
        kernels,
        bias,
    }
}
