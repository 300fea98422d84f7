//! Numeric kernels: forward and backward implementations for every
//! operation the graph can record.
//!
//! Kernels are pure functions over tensors — no graph bookkeeping — so the
//! test suite can drive them directly against the oracles in [`crate::check`].
//! All reductions use fixed lane structures, making results independent of
//! call context (bit-identical across runs on a fixed build).

pub mod conv;
pub mod dense;
pub mod elementwise;
pub mod pool;
pub mod shuffle;

pub use conv::{conv2d, conv2d_backward, ConvGrads};
pub use dense::{dense, dense_backward};
pub use elementwise::{
    add, l1_loss, l1_loss_backward, prelu, prelu_backward, scale_channels,
    scale_channels_backward, sum_all,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, softmax_levels, softmax_levels_backward,
    softmax_slice,
};
pub use shuffle::{concat_channels, pixel_shuffle, pixel_unshuffle, slice_channels};

use crate::num::Scalar;

/// `y += a·x` over slices. Element-wise, so the accumulation order question
/// never arises; autovectorizes cleanly.
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

const LANES: usize = 8;

/// Dot product with a fixed 8-lane accumulator layout and a fixed reduction
/// tree: deterministic for given inputs, yet wide enough to vectorize.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let whole = a.len() / LANES * LANES;
    for (ca, cb) in a[..whole].chunks_exact(LANES).zip(b[..whole].chunks_exact(LANES)) {
        for j in 0..LANES {
            acc[j] += ca[j] * cb[j];
        }
    }
    for i in whole..a.len() {
        acc[i - whole] += a[i] * b[i];
    }
    reduce_lanes(&acc)
}

/// Slice sum with the same fixed lane structure as [`dot`].
pub(crate) fn sum_slice<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let whole = a.len() / LANES * LANES;
    for ca in a[..whole].chunks_exact(LANES) {
        for j in 0..LANES {
            acc[j] += ca[j];
        }
    }
    for i in whole..a.len() {
        acc[i - whole] += a[i];
    }
    reduce_lanes(&acc)
}

fn reduce_lanes<T: Scalar>(acc: &[T; LANES]) -> T {
    let s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    s0 + s1
}
