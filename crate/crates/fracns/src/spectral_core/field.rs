//! Vector fields with synchronized real-space and Fourier representations.
//!
//! Fourier coefficients are the canonical representation. A field constructed from
//! real samples keeps those samples verbatim so that binary round trips are bit-exact.
//! Complex-valued fields (eigenfunctions) are stored the same way; a field is real
//! exactly when its coefficients are conjugate-symmetric.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use super::grid::GridSpec;
use crate::error::{Error, Result};

pub type Coeffs = Vec<Vec<Complex64>>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Coeffs,
    samples: Option<Arc<Vec<Vec<f64>>>>,
    divfree: OnceLock<bool>,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("ncomp", &self.coeffs.len())
            .finish()
    }
}

impl SpectralField {
    /// Zero vector field with `d` components.
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::zeros_with(grid, grid.d)
    }

    /// Zero field with `ncomp` components (1 for scalar fields such as vorticity).
    pub fn zeros_with(grid: &GridSpec, ncomp: usize) -> Self {
        Self::from_coeffs(grid, vec![vec![ZERO; grid.len()]; ncomp])
    }

    pub fn from_coeffs(grid: &GridSpec, coeffs: Coeffs) -> Self {
        debug_assert!(coeffs.iter().all(|c| c.len() == grid.len()));
        SpectralField {
            grid: grid.clone(),
            coeffs,
            samples: None,
            divfree: OnceLock::new(),
        }
    }

    /// Build from real samples (row-major, one array per component). The samples are
    /// retained exactly.
    pub fn from_samples(grid: &GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument("sample array length does not match grid".into()));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field samples"));
        }
        let coeffs = comps
            .iter()
            .map(|c| {
                let mut buf: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                grid.forward(&mut buf);
                buf
            })
            .collect();
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
            samples: Some(Arc::new(comps)),
            divfree: OnceLock::new(),
        })
    }

    pub fn from_complex_samples(grid: &GridSpec, comps: Vec<Vec<Complex64>>) -> Self {
        let coeffs = comps
            .into_iter()
            .map(|mut c| {
                grid.forward(&mut c);
                c
            })
            .collect();
        Self::from_coeffs(grid, coeffs)
    }

    /// Build from a closure evaluated at every grid point.
    pub fn from_fn<F: Fn(&[f64]) -> Vec<f64>>(grid: &GridSpec, ncomp: usize, f: F) -> Self {
        let mut comps = vec![vec![0.0; grid.len()]; ncomp];
        for p in 0..grid.len() {
            let c = grid.coords(p);
            let v = f(&c[..grid.d]);
            for (i, comp) in comps.iter_mut().enumerate() {
                comp[p] = v[i];
            }
        }
        Self::from_samples(grid, comps).expect("closure produced non-finite values")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &Coeffs {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Coeffs {
        self.coeffs
    }

    /// Complex real-space samples of every component.
    pub fn complex_samples(&self) -> Vec<Vec<Complex64>> {
        self.coeffs
            .iter()
            .map(|c| {
                let mut buf = c.clone();
                self.grid.inverse(&mut buf);
                buf
            })
            .collect()
    }

    /// Real-space samples (real part for complex fields). Returns the original samples
    /// verbatim when the field was built from them.
    pub fn components(&self) -> Vec<Vec<f64>> {
        if let Some(s) = &self.samples {
            return (**s).clone();
        }
        self.complex_samples()
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.re).collect())
            .collect()
    }

    /// Mark the field as divergence-free (set by the projector).
    pub fn with_divfree(self, flag: bool) -> Self {
        let f = SpectralField {
            grid: self.grid,
            coeffs: self.coeffs,
            samples: self.samples,
            divfree: OnceLock::new(),
        };
        let _ = f.divfree.set(flag);
        f
    }

    /// Cached divergence-free status, evaluated against the default tolerance.
    pub fn is_divfree(&self) -> bool {
        *self.divfree.get_or_init(|| self.divergence_ratio() <= 1e-10)
    }

    /// `max_k |k . c(k)| / max_k |c(k)|` (0 for the zero field), with the
    /// derivative wavenumbers of the discrete divergence.
    pub fn divergence_ratio(&self) -> f64 {
        let g = &self.grid;
        let mut dmax: f64 = 0.0;
        let mut cmax: f64 = 0.0;
        for p in 0..g.len() {
            let mut s = ZERO;
            for a in 0..self.ncomp().min(g.d) {
                s += self.coeffs[a][p] * g.kd(a)[p];
                cmax = cmax.max(self.coeffs[a][p].norm());
            }
            dmax = dmax.max(s.norm());
        }
        if cmax == 0.0 {
            0.0
        } else {
            dmax / cmax
        }
    }

    fn zip_map(&self, o: &SpectralField, f: impl Fn(Complex64, Complex64) -> Complex64) -> SpectralField {
        assert!(self.grid == o.grid, "grid mismatch");
        assert_eq!(self.ncomp(), o.ncomp(), "component mismatch");
        let coeffs = self
            .coeffs
            .iter()
            .zip(o.coeffs.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        SpectralField::from_coeffs(&self.grid, coeffs)
    }

    pub fn map_coeffs(&self, f: impl Fn(usize, usize, Complex64) -> Complex64) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(a, c)| c.iter().enumerate().map(|(p, &v)| f(a, p, v)).collect())
            .collect();
        SpectralField::from_coeffs(&self.grid, coeffs)
    }

    pub fn add(&self, o: &SpectralField) -> SpectralField {
        self.zip_map(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &SpectralField) -> SpectralField {
        self.zip_map(o, |a, b| a - b)
    }

    /// `self + s * o`.
    pub fn axpy(&self, s: f64, o: &SpectralField) -> SpectralField {
        self.zip_map(o, |a, b| a + b * s)
    }

    pub fn axpy_c(&self, s: Complex64, o: &SpectralField) -> SpectralField {
        self.zip_map(o, |a, b| a + b * s)
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        self.map_coeffs(|_, _, v| v * s)
    }

    pub fn scale_c(&self, s: Complex64) -> SpectralField {
        self.map_coeffs(|_, _, v| v * s)
    }

    /// Hermitian inner product `∫ conj(self) . o`.
    pub fn inner(&self, o: &SpectralField) -> Complex64 {
        assert!(self.grid == o.grid, "grid mismatch");
        let mut s = ZERO;
        for (a, b) in self.coeffs.iter().zip(o.coeffs.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                s += x.conj() * y;
            }
        }
        s * self.grid.volume()
    }

    /// Spectral (Plancherel) L² norm.
    pub fn norm_l2(&self) -> f64 {
        let s: f64 = self.coeffs.iter().flatten().map(|v| v.norm_sqr()).sum();
        (s * self.grid.volume()).sqrt()
    }

    /// L² norm by trapezoidal quadrature of the real-space samples.
    pub fn norm_l2_quadrature(&self) -> f64 {
        let s: f64 = self.complex_samples().iter().flatten().map(|v| v.norm_sqr()).sum();
        (s * self.grid.cell()).sqrt()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Complex conjugate field.
    pub fn conj(&self) -> SpectralField {
        let g = &self.grid;
        self.map_coeffs(|a, p, _| self.coeffs[a][g.negate_mode(p)].conj())
    }

    /// Real part `(f + conj f) / 2`.
    pub fn real_part(&self) -> SpectralField {
        let g = &self.grid;
        self.map_coeffs(|a, p, v| (v + self.coeffs[a][g.negate_mode(p)].conj()) * 0.5)
    }

    /// Imaginary part `(f - conj f) / (2i)`.
    pub fn imag_part(&self) -> SpectralField {
        let g = &self.grid;
        let half_i = Complex64::new(0.0, -0.5);
        self.map_coeffs(|a, p, v| (v - self.coeffs[a][g.negate_mode(p)].conj()) * half_i)
    }

    /// `re + i im` from two real fields.
    pub fn complexify(re: &SpectralField, im: &SpectralField) -> SpectralField {
        re.axpy_c(Complex64::new(0.0, 1.0), im)
    }

    /// Maximal violation of conjugate symmetry relative to the largest coefficient.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let g = &self.grid;
        let m = self.max_abs_coeff();
        if m == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for c in &self.coeffs {
            for p in 0..g.len() {
                worst = worst.max((c[p] - c[g.negate_mode(p)].conj()).norm());
            }
        }
        worst / m
    }

    /// Fourier resampling onto another resolution of the same box: shared modes are
    /// copied, the rest (including both Nyquist planes) are zero.
    pub fn resample(&self, target: &GridSpec) -> Result<SpectralField> {
        let src = &self.grid;
        if src.d != target.d || src.l != target.l || src.alpha != target.alpha {
            return Err(Error::GridMismatch);
        }
        let keep = (src.n.min(target.n) / 2) as i64;
        let index = |m: i64, n: usize| if m >= 0 { m as usize } else { (n as i64 + m) as usize };
        let mut coeffs = vec![vec![ZERO; target.len()]; self.coeffs.len()];
        'modes: for p in 0..target.len() {
            let idx = target.unravel(p);
            let mut sidx = [0usize; 3];
            for a in 0..target.d {
                let m = target.modes()[idx[a]];
                if m.abs() >= keep {
                    continue 'modes;
                }
                sidx[a] = index(m, src.n);
            }
            let q = src.ravel(&sidx[..src.d]);
            for (dst, c) in coeffs.iter_mut().zip(self.coeffs.iter()) {
                dst[p] = c[q];
            }
        }
        Ok(SpectralField::from_coeffs(target, coeffs))
    }

    /// Zero the mean (k = 0) mode.
    pub fn without_mean(&self) -> SpectralField {
        self.map_coeffs(|_, p, v| if p == 0 { ZERO } else { v })
    }

    /// Component `i` as a scalar field.
    pub fn component(&self, i: usize) -> SpectralField {
        SpectralField::from_coeffs(&self.grid, vec![self.coeffs[i].clone()])
    }

    /// Partial derivative of every component along `axis` (Nyquist zeroed).
    pub fn deriv(&self, axis: usize) -> SpectralField {
        let kd = self.grid.kd(axis);
        self.map_coeffs(|_, p, v| Complex64::new(-v.im, v.re) * kd[p])
    }

    /// Divergence (scalar field).
    pub fn divergence(&self) -> SpectralField {
        let g = &self.grid;
        let mut out = vec![ZERO; g.len()];
        for a in 0..g.d {
            let kd = g.kd(a);
            for (p, o) in out.iter_mut().enumerate() {
                let v = self.coeffs[a][p];
                *o += Complex64::new(-v.im, v.re) * kd[p];
            }
        }
        SpectralField::from_coeffs(g, vec![out])
    }

    /// Gradient of a scalar field, as a vector field.
    pub fn gradient(&self) -> SpectralField {
        assert_eq!(self.ncomp(), 1);
        let g = &self.grid;
        let coeffs = (0..g.d)
            .map(|a| {
                let kd = g.kd(a);
                self.coeffs[0]
                    .iter()
                    .enumerate()
                    .map(|(p, v)| Complex64::new(-v.im, v.re) * kd[p])
                    .collect()
            })
            .collect();
        SpectralField::from_coeffs(g, coeffs)
    }

    /// 2D scalar curl `∂₁U₂ − ∂₂U₁`.
    pub fn curl2d(&self) -> Result<SpectralField> {
        let g = &self.grid;
        if g.d != 2 || self.ncomp() != 2 {
            return Err(Error::InvalidArgument("curl2d needs a 2D vector field".into()));
        }
        let out = (0..g.len())
            .map(|p| {
                let w = self.coeffs[1][p] * g.kd(0)[p] - self.coeffs[0][p] * g.kd(1)[p];
                Complex64::new(-w.im, w.re)
            })
            .collect();
        Ok(SpectralField::from_coeffs(g, vec![out]))
    }

    /// 2D perpendicular gradient `∇^⊥ψ = (−∂₂ψ, ∂₁ψ)` of a scalar stream function.
    pub fn perp_grad(&self) -> Result<SpectralField> {
        let g = &self.grid;
        if g.d != 2 || self.ncomp() != 1 {
            return Err(Error::InvalidArgument("perp_grad needs a 2D scalar field".into()));
        }
        let c = &self.coeffs[0];
        let u1 = (0..g.len())
            .map(|p| {
                let v = c[p] * (-g.kd(1)[p]);
                Complex64::new(-v.im, v.re)
            })
            .collect();
        let u2 = (0..g.len())
            .map(|p| {
                let v = c[p] * g.kd(0)[p];
                Complex64::new(-v.im, v.re)
            })
            .collect();
        Ok(SpectralField::from_coeffs(g, vec![u1, u2]))
    }

    /// 2D inverse curl `∇^⊥Δ⁻¹ω`; requires zero mean vorticity.
    pub fn inv_curl2d(&self) -> Result<SpectralField> {
        let g = &self.grid;
        if g.d != 2 || self.ncomp() != 1 {
            return Err(Error::InvalidArgument("inv_curl2d needs a 2D scalar field".into()));
        }
        let scale = self.max_abs_coeff().max(f64::MIN_POSITIVE);
        if self.coeffs[0][0].norm() > 1e-12 * scale {
            return Err(Error::InvalidArgument(
                "nonzero mean vorticity: inverse curl undefined on the zero mode".into(),
            ));
        }
        let k2 = g.kd2();
        let psi: Vec<Complex64> = (0..g.len())
            .map(|p| if p == 0 || k2[p] == 0.0 { ZERO } else { -self.coeffs[0][p] / k2[p] })
            .collect();
        SpectralField::from_coeffs(g, vec![psi]).perp_grad()
    }

    /// Pointwise Euclidean magnitude of the complex samples.
    pub fn pointwise_magnitude(&self) -> Vec<f64> {
        let s = self.complex_samples();
        let mut out = vec![0.0; self.grid.len()];
        for c in &s {
            for (o, v) in out.iter_mut().zip(c.iter()) {
                *o += v.norm_sqr();
            }
        }
        out.iter_mut().for_each(|v| *v = v.sqrt());
        out
    }

    /// Largest magnitude outside the core `[-L/2, L/2]^d`, relative to the global maximum.
    pub fn outside_core_ratio(&self) -> f64 {
        let mag = self.pointwise_magnitude();
        let gmax = mag.iter().cloned().fold(0.0, f64::max);
        if gmax == 0.0 {
            return 0.0;
        }
        let mut omax: f64 = 0.0;
        for (p, &m) in mag.iter().enumerate() {
            if !self.grid.in_core(p) {
                omax = omax.max(m);
            }
        }
        omax / gmax
    }
}
