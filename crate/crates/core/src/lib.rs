//! Error-rate analysis of bit-interleaved convolutionally coded OFDM over
//! quasi-static frequency-selective fading with tone interference.
//!
//! Two analytical estimates are provided. [`method1`] evaluates a truncated
//! union bound per channel realization, which yields ensemble averages and
//! outage BER. [`method2`] averages the pairwise error probabilities over a
//! Rayleigh fading model with a known tone correlation matrix. The
//! [`simulator`] runs the full transmit/receive chain as a reference.

pub mod channel;
pub mod code;
pub mod error;
pub mod experiment;
pub mod interference;
pub mod method1;
pub mod method2;
pub mod modem;
pub mod simulator;
pub mod system;

pub use error::{Error, Result};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Gaussian tail probability `Q(x)`; saturates to 0 or 1 beyond `|x| > 38`.
pub fn q_function(x: f64) -> f64 {
    if x > 38.0 {
        0.0
    } else if x < -38.0 {
        1.0
    } else {
        0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
    }
}

/// Circularly symmetric complex Gaussian sample with `E|z|^2 = var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}
