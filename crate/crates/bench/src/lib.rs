//! Criterion benchmarks for the convolution kernels and a full training update.
