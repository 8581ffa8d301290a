//! Non-overlapping max pooling (stride equals window size).

use crate::error::{Error, Result};
use crate::tensor::{dims4, Element};

/// Pool window in (time, frequency). Stride always equals the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolParams {
    pub time: usize,
    pub freq: usize,
}

impl PoolParams {
    pub fn new(time: usize, freq: usize) -> Self {
        Self { time, freq }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub batch: usize,
    pub maps: usize,
    pub in_t: usize,
    pub in_f: usize,
    pub pool: PoolParams,
    pub out_t: usize,
    pub out_f: usize,
}

impl PoolGeometry {
    pub fn new(input: &[usize], pool: PoolParams) -> Result<Self> {
        let (batch, maps, in_t, in_f) = dims4(input, "pool input")?;
        if pool.time == 0 || pool.freq == 0 {
            return Err(Error::contract("pool window extents must be positive"));
        }
        let out_t = in_t / pool.time;
        let out_f = in_f / pool.freq;
        if out_t == 0 {
            return Err(Error::infeasible(
                "maxpool2d",
                format!("pool time {} exceeds input time extent {in_t}", pool.time),
            ));
        }
        if out_f == 0 {
            return Err(Error::infeasible(
                "maxpool2d",
                format!("pool frequency {} exceeds input frequency extent {in_f}", pool.freq),
            ));
        }
        Ok(Self {
            batch,
            maps,
            in_t,
            in_f,
            pool,
            out_t,
            out_f,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.maps, self.out_t, self.out_f]
    }
}

/// Returns pooled values and, per output element, the flat input index of
/// its maximum. Ties go to the first element in scan order; a NaN wins
/// over any number.
pub fn forward<T: Element>(g: &PoolGeometry, x: &[T]) -> (Vec<T>, Vec<usize>) {
    let planes = g.batch * g.maps;
    let n_out = planes * g.out_t * g.out_f;
    let mut out = Vec::with_capacity(n_out);
    let mut argmax = Vec::with_capacity(n_out);
    for plane in 0..planes {
        let base = plane * g.in_t * g.in_f;
        for ot in 0..g.out_t {
            for of in 0..g.out_f {
                let mut best_idx = base + ot * g.pool.time * g.in_f + of * g.pool.freq;
                let mut best = x[best_idx];
                for i in 0..g.pool.time {
                    let row = base + (ot * g.pool.time + i) * g.in_f + of * g.pool.freq;
                    for (j, &v) in x[row..row + g.pool.freq].iter().enumerate() {
                        #[allow(clippy::eq_op)]
                        let nan = v != v && best == best;
                        if v > best || nan {
                            best = v;
                            best_idx = row + j;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

pub fn backward<T: Element>(g: &PoolGeometry, argmax: &[usize], dy: &[T]) -> Vec<T> {
    let mut dx = vec![T::ZERO; g.batch * g.maps * g.in_t * g.in_f];
    for (&idx, &d) in argmax.iter().zip(dy) {
        dx[idx] += d;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_window() {
        let g = PoolGeometry::new(&[1, 1, 2, 2], PoolParams::new(2, 2)).unwrap();
        let (y, arg) = forward(&g, &[1.0f32, 2.0, 3.0, 4.0]);
        assert_eq!(y, vec![4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn floor_division_drops_remainder() {
        let g = PoolGeometry::new(&[1, 1, 4, 9], PoolParams::new(1, 3)).unwrap();
        assert_eq!(g.output_shape(), [1, 1, 4, 3]);
        let g = PoolGeometry::new(&[1, 1, 17, 4], PoolParams::new(2, 1)).unwrap();
        assert_eq!(g.output_shape(), [1, 1, 8, 4]);
    }

    #[test]
    fn ties_go_to_first_in_scan_order() {
        let g = PoolGeometry::new(&[1, 1, 2, 2], PoolParams::new(2, 2)).unwrap();
        let (_, arg) = forward(&g, &[5.0f64, 5.0, 5.0, 5.0]);
        assert_eq!(arg, vec![0]);
        let dx = backward(&g, &arg, &[1.0f64]);
        assert_eq!(dx, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn oversized_window_is_infeasible() {
        assert!(matches!(
            PoolGeometry::new(&[1, 1, 1, 8], PoolParams::new(2, 2)),
            Err(Error::InfeasibleGeometry { .. })
        ));
    }
}
