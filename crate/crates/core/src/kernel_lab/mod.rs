//! Heat kernels, quadrature and allowed-word combinatorics.

pub mod kernel;
pub mod oracle;
pub mod quadrature;
pub mod words;

pub use kernel::{kernel_eval, kernel_l1_mass, HeatKernel, Kernel};
pub use words::{allowed_words, Word};
