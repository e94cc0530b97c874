//! Periodic box discretization `[-L, L)^d` with cached wavenumbers, FFT plans,
//! the smooth coordinate window used by the drift term and the absorbing layer.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// C-infinity transition: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

struct Cache {
    /// Grid coordinate per axis index.
    x: Vec<f64>,
    /// Signed mode number per FFT index.
    m: Vec<i64>,
    /// Wavenumber per axis for every flattened point.
    kvec: Vec<Vec<f64>>,
    /// Same as `kvec` with the Nyquist entries zeroed (odd derivatives).
    kder: Vec<Vec<f64>>,
    kmag: Vec<f64>,
    kmag2: Vec<f64>,
    /// Squared magnitude of the Nyquist-zeroed wavenumber (projection, Poisson).
    kd2: Vec<f64>,
    /// (-1)^{sum m}: shifts FFT phases to origin-centred coefficients.
    parity: Vec<f64>,
    /// 2/3-rule mask.
    dealias_mask: Vec<bool>,
    /// Window coefficient `s(x)` along one axis (= x on the core).
    window1d: Vec<f64>,
    /// Absorbing-layer profile over all points (0 on the core).
    sponge: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Discretization of the truncated domain.
#[derive(Clone)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub l: f64,
    pub alpha: f64,
    pub dealias: bool,
    cache: Arc<Cache>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("l", &self.l)
            .field("alpha", &self.alpha)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, o: &Self) -> bool {
        self.d == o.d
            && self.n == o.n
            && self.l.to_bits() == o.l.to_bits()
            && self.alpha.to_bits() == o.alpha.to_bits()
            && self.dealias == o.dealias
    }
}

/// Admissible fractional orders for the non-uniqueness scenario: `(1/2 + d/4, 1 + d/2)`.
pub fn scenario_alpha_range(d: usize) -> (f64, f64) {
    (0.5 + d as f64 / 4.0, 1.0 + d as f64 / 2.0)
}

/// Build a grid. Accepts any `alpha` in `(0, 1 + d/2)`; use [`make_scenario_grid`]
/// to additionally enforce the scenario range.
pub fn make_grid(d: usize, n: usize, l: f64, alpha: f64, dealias: bool) -> Result<GridSpec> {
    if d != 2 && d != 3 {
        return Err(Error::InvalidGrid(format!("dimension {d} not in {{2, 3}}")));
    }
    if n < 8 || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 8")));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidGrid(format!("half-width L = {l} must be positive")));
    }
    let amax = 1.0 + d as f64 / 2.0;
    if !(alpha > 0.0) || alpha >= amax || !alpha.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "alpha = {alpha} outside (0, {amax})"
        )));
    }
    Ok(GridSpec {
        d,
        n,
        l,
        alpha,
        dealias,
        cache: Arc::new(build_cache(d, n, l)),
    })
}

/// Build a grid and require `alpha` inside the scenario range `(1/2 + d/4, 1 + d/2)`.
pub fn make_scenario_grid(d: usize, n: usize, l: f64, alpha: f64, dealias: bool) -> Result<GridSpec> {
    let (lo, hi) = scenario_alpha_range(d);
    if !(alpha > lo && alpha < hi) {
        return Err(Error::InvalidGrid(format!(
            "alpha = {alpha} outside the admissible scenario range ({lo}, {hi})"
        )));
    }
    make_grid(d, n, l, alpha, dealias)
}

fn build_cache(d: usize, n: usize, l: f64) -> Cache {
    let h = 2.0 * l / n as f64;
    let x: Vec<f64> = (0..n).map(|i| -l + i as f64 * h).collect();
    let m: Vec<i64> = (0..n)
        .map(|i| if i < n / 2 { i as i64 } else { i as i64 - n as i64 })
        .collect();
    let dk = PI / l;
    let total = n.pow(d as u32);
    let mut kvec = vec![vec![0.0; total]; d];
    let mut kder = vec![vec![0.0; total]; d];
    let mut kmag2 = vec![0.0; total];
    let mut kd2 = vec![0.0; total];
    let mut parity = vec![1.0; total];
    let mut dealias_mask = vec![true; total];
    let cut = (n / 3) as i64;
    for p in 0..total {
        let mut rem = p;
        let mut msum = 0i64;
        for a in (0..d).rev() {
            let i = rem % n;
            rem /= n;
            let k = dk * m[i] as f64;
            kvec[a][p] = k;
            kder[a][p] = if i == n / 2 { 0.0 } else { k };
            kmag2[p] += k * k;
            kd2[p] += kder[a][p] * kder[a][p];
            msum += m[i];
            if m[i].abs() > cut {
                dealias_mask[p] = false;
            }
        }
        if msum.rem_euclid(2) == 1 {
            parity[p] = -1.0;
        }
    }
    let kmag = kmag2.iter().map(|v| v.sqrt()).collect();
    let taper = |r: f64| 1.0 - smooth_step((r - 0.5 * l) / (0.5 * l));
    let window1d = x.iter().map(|&xi| xi * taper(xi.abs())).collect();
    // Absorbing layer: zero on the core |x_j| <= L/2, full strength beyond 0.75 L.
    let ramp = |r: f64| smooth_step((r - 0.5 * l) / (0.25 * l));
    let mut sponge = vec![0.0; total];
    for (p, s) in sponge.iter_mut().enumerate() {
        let mut rem = p;
        let mut keep = 1.0;
        for _ in 0..d {
            let i = rem % n;
            rem /= n;
            keep *= 1.0 - ramp(x[i].abs());
        }
        *s = 1.0 - keep;
    }
    let mut planner = FftPlanner::new();
    Cache {
        fwd: planner.plan_fft_forward(n),
        inv: planner.plan_fft_inverse(n),
        x,
        m,
        kvec,
        kder,
        kmag,
        kmag2,
        kd2,
        parity,
        dealias_mask,
        window1d,
        sponge,
    }
}

impl GridSpec {
    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Lattice spacing of wavenumbers, `pi / L`.
    pub fn dk(&self) -> f64 {
        PI / self.l
    }

    /// Box volume `(2L)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.l).powi(self.d as i32)
    }

    /// Quadrature weight `h^d`.
    pub fn cell(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn x(&self) -> &[f64] {
        &self.cache.x
    }

    pub fn modes(&self) -> &[i64] {
        &self.cache.m
    }

    pub fn k(&self, axis: usize) -> &[f64] {
        &self.cache.kvec[axis]
    }

    /// Wavenumbers with the Nyquist mode zeroed, for odd derivatives.
    pub fn kd(&self, axis: usize) -> &[f64] {
        &self.cache.kder[axis]
    }

    pub fn kmag(&self) -> &[f64] {
        &self.cache.kmag
    }

    pub fn kmag2(&self) -> &[f64] {
        &self.cache.kmag2
    }

    /// `|k|²` built from Nyquist-zeroed wavenumbers; used by the projector and
    /// Poisson inversions so that they agree with the discrete divergence.
    pub fn kd2(&self) -> &[f64] {
        &self.cache.kd2
    }

    pub fn dealias_mask(&self) -> &[bool] {
        &self.cache.dealias_mask
    }

    /// Window coefficient along one axis: equals the coordinate on `[-L/2, L/2]`,
    /// tapers smoothly to zero at `±L`.
    pub fn window1d(&self) -> &[f64] {
        &self.cache.window1d
    }

    /// Absorbing-layer profile in `[0, 1]`, zero on the core.
    pub fn sponge(&self) -> &[f64] {
        &self.cache.sponge
    }

    /// Multi-index of a flattened point (row-major, last axis fastest).
    pub fn unravel(&self, p: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = p;
        for a in (0..self.d).rev() {
            out[a] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.d).fold(0, |acc, &i| acc * self.n + i)
    }

    /// Coordinates of a flattened point.
    pub fn coords(&self, p: usize) -> [f64; 3] {
        let idx = self.unravel(p);
        let mut c = [0.0; 3];
        for a in 0..self.d {
            c[a] = self.cache.x[idx[a]];
        }
        c
    }

    /// True if `|x_j| <= L/2` on every axis.
    pub fn in_core(&self, p: usize) -> bool {
        let c = self.coords(p);
        (0..self.d).all(|a| c[a].abs() <= 0.5 * self.l + 1e-12)
    }

    /// Flattened index of the point reflected through the origin, `x -> -x`.
    pub fn reflect(&self, p: usize) -> usize {
        let idx = self.unravel(p);
        let mut r = [0usize; 3];
        for a in 0..self.d {
            r[a] = (self.n - idx[a]) % self.n;
        }
        self.ravel(&r[..self.d])
    }

    /// Flattened index of the mode `-m` for the mode stored at `p`.
    pub fn negate_mode(&self, p: usize) -> usize {
        self.reflect(p)
    }

    pub fn same_as(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Forward transform: samples -> origin-centred Fourier-series coefficients,
    /// `u(x) = sum_k c_k exp(i k.x)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
        let s = 1.0 / self.len() as f64;
        for (v, &p) in data.iter_mut().zip(self.cache.parity.iter()) {
            *v *= s * p;
        }
    }

    /// Inverse of [`GridSpec::forward`].
    pub fn inverse(&self, data: &mut [Complex64]) {
        for (v, &p) in data.iter_mut().zip(self.cache.parity.iter()) {
            *v *= p;
        }
        self.transform(data, true);
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.cache.inv } else { &self.cache.fwd };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Last axis is contiguous.
        plan.process_with_scratch(data, &mut scratch);
        let total = data.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..self.d - 1 {
            let stride = n.pow((self.d - 1 - axis) as u32);
            let block = stride * n;
            // Gather lines along `axis` into contiguous rows.
            let mut row = 0;
            for b in (0..total).step_by(block) {
                for s in 0..stride {
                    let base = b + s;
                    let dst = &mut buf[row * n..(row + 1) * n];
                    for (i, v) in dst.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    row += 1;
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            let mut row = 0;
            for b in (0..total).step_by(block) {
                for s in 0..stride {
                    let base = b + s;
                    let src = &buf[row * n..(row + 1) * n];
                    for (i, v) in src.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                    row += 1;
                }
            }
        }
    }
}
