//! LFFN: a lightweight feature-fusion super-resolution network, built on a
//! self-contained NCHW tensor engine with reverse-mode automatic
//! differentiation.
//!
//! The crate is organized in layers:
//!
//! * [`tensor`] — dense 4-D tensors and convolution descriptors,
//! * [`graph`] — the Wengert tape recording forward ops and replaying them
//!   in reverse for gradients,
//! * [`exec`] — a small executor abstraction so the network topology is
//!   written once and runs either on the tape (training) or eagerly
//!   (inference, intermediates dropped as they go dead),
//! * [`net`] — the spindle-block architecture, softmax feature fusion,
//!   sub-pixel upsampling, weight container and initialization,
//! * [`imaging`] — PNG I/O, antialiased bicubic resampling, Y-channel
//!   PSNR/SSIM,
//! * [`train`] — patch sampling, L1 loss, Adam, adjustable gradient
//!   clipping, the learning-rate schedule,
//! * [`analysis`] — parameter and Mult-Adds accounting plus fusion-weight
//!   extraction,
//! * [`check`] — independent oracles (loop convolution, finite
//!   differences) shared by the test suite and the `selftest` command.
//!
//! All numeric kernels are generic over [`Scalar`] (`f32` / `f64`); the
//! concrete aliases below pin the production types to `f32`, while `f64`
//! instantiations back the finite-difference gradient checks.

pub mod analysis;
pub mod check;
pub mod error;
pub mod exec;
pub mod graph;
pub mod imaging;
pub mod net;
pub mod num;
pub mod ops;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use num::Scalar;

/// Production tensor: NCHW row-major `f32`.
pub type Tensor = tensor::TensorBase<f32>;
/// Production tape.
pub type Graph = graph::GraphBase<f32>;
/// Production weight container.
pub type WeightStore = net::weights::WeightStoreBase<f32>;
/// Production network (spec + validated weights).
pub type Network = net::NetworkBase<f32>;
