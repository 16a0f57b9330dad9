//! Numerical laboratory for two-user Gaussian multiple-access channels:
//! constellation-constrained capacity regions, inter-user rotation
//! optimization, concentric-ring geometry of PSK sum alphabets, sum-trellis
//! coded-modulation analysis, and orthogonal space-time block code pairs
//! for the two-user MIMO MAC.

pub mod capacity;
pub mod error;
pub mod mimo;
pub mod psk;
pub mod quadrature;
pub mod rotation;
pub mod signal;
pub mod trellis;

pub use error::{GmacError, Result};
