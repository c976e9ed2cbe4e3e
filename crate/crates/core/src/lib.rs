//! Fixed-point LSTM gait classifier and a cycle-accurate model of its
//! accelerator.
//!
//! * [`fxp`]: saturating two's-complement formats and the multiply /
//!   wide-add / requantize contract of the datapath.
//! * [`activation`]: piecewise-quadratic sigmoid and tanh in `FxP(18,13)`.
//! * [`net`]: the network in fixed-point and real arithmetic.
//! * [`sim`]: SRAM image, counter-driven schedule and port handshake of the
//!   accelerator, bit-exact against [`net`].
//! * [`dse`]: bit-width sweeps, configuration selection and validation
//!   reports.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activation;
pub mod config;
pub mod dse;
pub mod fxp;
pub mod net;
pub mod sim;

pub use config::{BitWidthConfig, FcInput};
pub use fxp::{FxpFormat, FxpValue, RoundingMode};
