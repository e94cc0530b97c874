//! Grids, vector fields, Fourier multipliers, projection calculus, norms and the
//! physical ↔ similarity coordinate maps.

pub mod field;
pub mod grid;
pub mod ssnf;

use num_complex::Complex64;

pub use field::{Coeffs, SpectralField};
pub use grid::{make_grid, make_scenario_grid, scenario_alpha_range, smooth_step, GridSpec};

use crate::error::{Error, Result};

/// Fractional Laplacian `Λ^α = −(−Δ)^{α/2}`: multiplies every coefficient by `−|k|^α`.
pub fn fractional_laplacian(u: &SpectralField, alpha: f64) -> Result<SpectralField> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("fractional_laplacian input"));
    }
    let km = u.grid().kmag();
    let sym: Vec<f64> = km.iter().map(|&k| -k.powf(alpha)).collect();
    Ok(u.map_coeffs(|_, p, v| v * sym[p]))
}

/// Leray projector `v − k(k·v)/|k|²`; modes with vanishing derivative wavenumber
/// (the zero mode and pure-Nyquist modes) pass through unchanged.
pub fn leray_project(u: &SpectralField) -> SpectralField {
    let g = u.grid().clone();
    let d = g.d;
    let k2 = g.kd2();
    let c = u.coeffs();
    let mut out = c.clone();
    let mut kv = [0.0f64; 3];
    for p in 0..g.len() {
        if k2[p] == 0.0 {
            continue;
        }
        for (a, k) in kv.iter_mut().enumerate().take(d) {
            *k = g.kd(a)[p];
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for a in 0..d {
            dot += c[a][p] * kv[a];
        }
        let s = dot / k2[p];
        for a in 0..d {
            out[a][p] = c[a][p] - s * kv[a];
        }
    }
    SpectralField::from_coeffs(&g, out).with_divfree(true)
}

/// Which norms to evaluate.
#[derive(Clone, Debug)]
pub struct NormRequest {
    pub hdot: Vec<f64>,
    pub lp: Vec<f64>,
    pub w1p: Vec<f64>,
    /// Integrability exponent of the composite V′ norm.
    pub p0: f64,
}

impl NormRequest {
    /// Only the composite V′ norm (and its ingredients).
    pub fn vprime(p0: f64) -> Self {
        NormRequest {
            hdot: vec![],
            lp: vec![],
            w1p: vec![],
            p0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub hdot: Vec<(f64, f64)>,
    pub lp: Vec<(f64, f64)>,
    pub w1p: Vec<(f64, f64)>,
    /// `l2 + w1p(p0) + hdot(max(α/2, 1))`.
    pub vprime: f64,
}

impl NormReport {
    pub fn hdot(&self, s: f64) -> Option<f64> {
        self.hdot.iter().find(|(k, _)| *k == s).map(|(_, v)| *v)
    }
    pub fn lp(&self, p: f64) -> Option<f64> {
        self.lp.iter().find(|(k, _)| *k == p).map(|(_, v)| *v)
    }
    pub fn w1p(&self, p: f64) -> Option<f64> {
        self.w1p.iter().find(|(k, _)| *k == p).map(|(_, v)| *v)
    }
}

/// Homogeneous Sobolev norm `‖U‖_{Ḣ^s}` by Plancherel.
pub fn hdot_norm(u: &SpectralField, s: f64) -> f64 {
    let g = u.grid();
    let km = g.kmag();
    let mut acc = 0.0;
    for c in u.coeffs() {
        for (p, v) in c.iter().enumerate() {
            if km[p] > 0.0 {
                acc += km[p].powf(2.0 * s) * v.norm_sqr();
            }
        }
    }
    (acc * g.volume()).sqrt()
}

fn lp_of_magnitude(mag: &[f64], p: f64, cell: f64) -> f64 {
    let s: f64 = mag.iter().map(|m| m.powf(p)).sum();
    (s * cell).powf(1.0 / p)
}

/// `‖U‖_{L^p}` by trapezoidal quadrature of the pointwise Euclidean magnitude.
pub fn lp_norm(u: &SpectralField, p: f64) -> f64 {
    lp_of_magnitude(&u.pointwise_magnitude(), p, u.grid().cell())
}

/// `‖U‖_{W^{1,p}} = ‖U‖_{L^p} + ‖∇U‖_{L^p}` (Frobenius magnitude of the gradient).
pub fn w1p_norm(u: &SpectralField, p: f64) -> f64 {
    let g = u.grid();
    let mut mag2 = vec![0.0; g.len()];
    for a in 0..g.d {
        let du = u.deriv(a);
        for c in du.complex_samples() {
            for (m, v) in mag2.iter_mut().zip(c.iter()) {
                *m += v.norm_sqr();
            }
        }
    }
    let mag: Vec<f64> = mag2.iter().map(|v| v.sqrt()).collect();
    lp_norm(u, p) + lp_of_magnitude(&mag, p, g.cell())
}

/// The composite V′ norm.
pub fn vprime_norm(u: &SpectralField, p0: f64) -> f64 {
    let s = (u.grid().alpha / 2.0).max(1.0);
    u.norm_l2() + w1p_norm(u, p0) + hdot_norm(u, s)
}

/// Evaluate the requested norms.
pub fn norms(u: &SpectralField, req: &NormRequest) -> Result<NormReport> {
    for &p in req.lp.iter().chain(req.w1p.iter()).chain(std::iter::once(&req.p0)) {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("L^p exponent {p} < 1")));
        }
    }
    let l2 = u.norm_l2();
    let s_v = (u.grid().alpha / 2.0).max(1.0);
    let w1p_p0 = w1p_norm(u, req.p0);
    Ok(NormReport {
        l2,
        hdot: req.hdot.iter().map(|&s| (s, hdot_norm(u, s))).collect(),
        lp: req.lp.iter().map(|&p| (p, lp_norm(u, p))).collect(),
        w1p: req.w1p.iter().map(|&p| (p, w1p_norm(u, p))).collect(),
        vprime: l2 + w1p_p0 + hdot_norm(u, s_v),
    })
}

/// Apply a dense `n × n` complex matrix along one axis of a flattened array:
/// `out[.., i, ..] = Σ_j mat[i][j] data[.., j, ..]`.
pub fn apply_along_axis(grid: &GridSpec, data: &[Complex64], axis: usize, mat: &[Vec<Complex64>]) -> Vec<Complex64> {
    let n = grid.n;
    let stride = n.pow((grid.d - 1 - axis) as u32);
    let block = stride * n;
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for b in (0..data.len()).step_by(block) {
        for s in 0..stride {
            let base = b + s;
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[base + j * stride];
            }
            for (i, row) in mat.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, v) in row.iter().zip(line.iter()) {
                    acc += m * v;
                }
                out[base + i * stride] = acc;
            }
        }
    }
    out
}

/// Evaluate the trigonometric interpolant of `u` at the dilated points `s·x`
/// (all axes scaled by `s`). Points that land outside the box are set to zero
/// (fields are treated as compactly supported, not periodic). Returns complex
/// samples per component.
pub fn sample_dilated(u: &SpectralField, s: f64) -> Vec<Vec<Complex64>> {
    let g = u.grid();
    let n = g.n;
    let dk = g.dk();
    let mat: Vec<Vec<Complex64>> = g
        .x()
        .iter()
        .map(|&x| {
            if (s * x).abs() >= g.l {
                return vec![Complex64::new(0.0, 0.0); n];
            }
            (0..n)
                .map(|j| {
                    let m = g.modes()[j];
                    let ph = dk * m as f64 * s * x;
                    if j == n / 2 {
                        // Nyquist: the real interpolant uses the cosine.
                        Complex64::new(ph.cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, ph)
                    }
                })
                .collect()
        })
        .collect();
    u.coeffs()
        .iter()
        .map(|c| {
            let mut data = c.clone();
            for a in 0..g.d {
                data = apply_along_axis(g, &data, a, &mat);
            }
            data
        })
        .collect()
}

/// Direction of [`similarity_map`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `U(ξ) = t^w u(t^{1/α} ξ)`.
    ToSimilarity,
    /// `u(x) = t^{−w} U(x / t^{1/α})`.
    ToPhysical,
}

/// Amplitude weight exponent of the similarity change of variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    /// `1 − 1/α` (velocity).
    Velocity,
    /// `2 − 1/α` (forcing).
    Forcing,
    Custom(f64),
}

impl Weight {
    pub fn exponent(self, alpha: f64) -> f64 {
        match self {
            Weight::Velocity => 1.0 - 1.0 / alpha,
            Weight::Forcing => 2.0 - 1.0 / alpha,
            Weight::Custom(w) => w,
        }
    }
}

/// Diagnostics attached to a similarity map.
#[derive(Clone, Debug)]
pub struct ResampleReport {
    /// Fraction of spectral energy of the output outside the 2/3 band.
    pub tail_fraction: f64,
    /// Largest magnitude outside the core relative to the maximum.
    pub boundary_ratio: f64,
    /// Set when the dilated support approaches the box boundary.
    pub truncation_warning: bool,
}

/// Physical ↔ similarity coordinate map at time `t` by trigonometric resampling.
pub fn similarity_map(
    u: &SpectralField,
    t: f64,
    dir: Direction,
    weight: Weight,
) -> Result<(SpectralField, ResampleReport)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time t = {t} must be positive")));
    }
    let g = u.grid().clone();
    let lam = t.powf(1.0 / g.alpha);
    let w = weight.exponent(g.alpha);
    let (s, amp) = match dir {
        Direction::ToSimilarity => (lam, t.powf(w)),
        Direction::ToPhysical => (1.0 / lam, t.powf(-w)),
    };
    let out = if s == 1.0 {
        u.scale(amp)
    } else {
        let samples = sample_dilated(u, s);
        SpectralField::from_complex_samples(&g, samples).scale(amp)
    };
    let mask = g.dealias_mask();
    let (mut tot, mut tail) = (0.0, 0.0);
    for c in out.coeffs() {
        for (p, v) in c.iter().enumerate() {
            tot += v.norm_sqr();
            if !mask[p] {
                tail += v.norm_sqr();
            }
        }
    }
    let boundary_ratio = out.outside_core_ratio();
    let report = ResampleReport {
        tail_fraction: if tot > 0.0 { tail / tot } else { 0.0 },
        boundary_ratio,
        truncation_warning: boundary_ratio > 1e-6,
    };
    Ok((out, report))
}

/// Exponent of the norm law `‖u‖_{L^p_x} = ‖U‖_{L^p_ξ} t^{e}` for velocities.
pub fn norm_law_exponent(d: usize, alpha: f64, p: f64) -> f64 {
    (p + d as f64 - alpha * p) / (alpha * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sin_field(n: usize) -> SpectralField {
        let g = make_grid(2, n, PI, 1.5, false).unwrap();
        SpectralField::from_fn(&g, 2, |x| vec![x[0].sin(), 0.0])
    }

    #[test]
    fn l2_of_sine() {
        let u = sin_field(32);
        assert!((u.norm_l2() - PI * 2f64.sqrt()).abs() < 1e-12);
        assert!((u.norm_l2_quadrature() - PI * 2f64.sqrt()).abs() < 1e-12);
        for s in [0.5, 1.0, 2.7] {
            assert!((hdot_norm(&u, s) - u.norm_l2()).abs() < 1e-12);
        }
        let l4 = lp_norm(&u, 4.0);
        assert!((l4 - (1.5 * PI * PI).powf(0.25)).abs() < 1e-12);
        assert!((l4 - 1.96155).abs() < 1e-5);
    }

    #[test]
    fn fractional_laplacian_modes() {
        let g = make_grid(2, 16, PI, 1.5, false).unwrap();
        let u = SpectralField::from_fn(&g, 2, |x| vec![x[1].sin(), 0.0]);
        let v = fractional_laplacian(&u, 1.5).unwrap();
        assert!(v.add(&u).norm_l2() < 1e-13);
        let w = SpectralField::from_fn(&g, 2, |x| vec![(3.0 * x[0] + 4.0 * x[1]).cos(), 0.0]);
        let lw = fractional_laplacian(&w, 2.0).unwrap();
        assert!(lw.add(&w.scale(25.0)).norm_l2() < 1e-11);
    }

    #[test]
    fn leray_examples() {
        let g = make_grid(2, 16, PI, 1.5, false).unwrap();
        let grad = SpectralField::from_fn(&g, 1, |x| vec![x[0].cos()]).gradient();
        assert!(leray_project(&grad).norm_l2() < 1e-13);
        // Single mode k = (1, 1) with coefficient (1, 0).
        let mut c = SpectralField::zeros(&g).into_coeffs();
        let p = g.ravel(&[1, 1]);
        c[0][p] = Complex64::new(1.0, 0.0);
        let u = SpectralField::from_coeffs(&g, c);
        let pu = leray_project(&u);
        assert!((pu.coeffs()[0][p] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((pu.coeffs()[1][p] - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn similarity_identity_and_norm_ratio() {
        let g = make_grid(2, 128, 10.0, 1.5, false).unwrap();
        let u = SpectralField::from_fn(&g, 2, |x| {
            let e = (-(x[0] * x[0] + x[1] * x[1]) / 0.4).exp();
            vec![-x[1] * e, x[0] * e]
        });
        let (same, _) = similarity_map(&u, 1.0, Direction::ToSimilarity, Weight::Velocity).unwrap();
        assert!(same.sub(&u).norm_l2() < 1e-14);
        let t = std::f64::consts::E;
        let (phys, rep) = similarity_map(&u, t, Direction::ToPhysical, Weight::Velocity).unwrap();
        assert!(!rep.truncation_warning);
        let ratio = phys.norm_l2() / u.norm_l2();
        assert!((ratio - (1.0f64 / 3.0).exp()).abs() < 1e-6, "{ratio}");
        let (back, _) = similarity_map(&phys, t, Direction::ToSimilarity, Weight::Velocity).unwrap();
        assert!(back.sub(&u).norm_l2() < 1e-10 * u.norm_l2());
        assert!(similarity_map(&u, 0.0, Direction::ToPhysical, Weight::Velocity).is_err());
    }
}
