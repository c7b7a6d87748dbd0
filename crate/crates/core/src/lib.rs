//! Emulation of a broadcast-and-weight photonic multiply-accumulate
//! accelerator, the massive-MIMO uplink detectors that run on it, and the
//! analytic power and latency models for the hardware.

pub mod cost;
pub mod error;
pub mod inverse;
pub mod matrix;
pub mod mimo;
pub mod photonic;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, ExactArithmetic, MatMul, C64};
pub use photonic::{HardwareConfig, PhotonicArithmetic};
