//! Fixtures shared by the unit tests.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral_core::{GridSpec, SpectralField};

/// Random divergence-free 2D field with modes `|m_j| < kmax`.
pub fn random_divfree(g: &GridSpec, kmax: i64, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = SpectralField::zeros_with(g, 1).into_coeffs();
    for p in 1..g.len() {
        let idx = g.unravel(p);
        if (0..g.d).all(|a| g.modes()[idx[a]].abs() < kmax) {
            c[0][p] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let psi = SpectralField::from_coeffs(g, c).real_part();
    psi.perp_grad().unwrap()
}

/// `∇^⊥ exp(−|x|²/(2s²))` in 2D.
pub fn gaussian_vortex(g: &GridSpec, s: f64) -> SpectralField {
    let psi = SpectralField::from_fn(g, 1, |x| vec![(-(x[0] * x[0] + x[1] * x[1]) / (2.0 * s * s)).exp()]);
    psi.perp_grad().unwrap()
}
