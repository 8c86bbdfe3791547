//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! Build a computation by calling op methods on a [`Tape`]; each op records
//! its output value and enough saved state to run its backward rule.
//! [`Tape::backward`] walks the tape in reverse from a scalar loss.
//!
//! ```
//! use tagasc::autodiff::Tape;
//! use tagasc::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.var(Tensor::vector(vec![1.0, -2.0]));
//! let y = tape.sum_squares(x);
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[2.0, -4.0]);
//! ```

mod gradcheck;
pub(crate) mod kernels;
mod ops;
mod tape;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use ops::{conv_out_len, BatchNormState, Target, BN_EPS, BN_MOMENTUM};
pub use tape::{CustomBackward, Gradients, Mode, Padding, Tape, Var};
