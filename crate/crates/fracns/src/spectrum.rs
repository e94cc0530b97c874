//! Matrix-free spectral analysis of `L_Ū`: Ritz values of the time-`t₀` flow map,
//! the growth bound `w₀`, shift-invert refinement of eigenpairs, β-continuation and
//! the search for a weakly unstable background.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::background::{make_background, FlowFamily};
use crate::error::{Error, Result};
use crate::operators::{project_phase, LinearizedOperator, OperatorOptions};
use crate::semigroups::flow_map;
use crate::spectral_core::{GridSpec, SpectralField};

/// Residual reached by [`refine_eigenpair`] by default; the construction identities
/// downstream inherit this level.
pub const REFINE_TOL: f64 = 1e-9;

/// Distance of the shift-invert shift from the current eigenvalue estimate.
const SHIFT_OFFSET: f64 = 1e-3;
const GMRES_RESTART: usize = 200;

/// Krylov parameters of the flow-map eigensolver.
#[derive(Clone, Copy, Debug)]
pub struct KrylovConfig {
    /// Flow-map horizon `t₀`.
    pub t0: f64,
    /// Time step of the flow-map evaluation.
    pub dt: f64,
    /// Krylov subspace dimension per cycle.
    pub dim: usize,
    /// Number of leading Ritz values that must converge.
    pub wanted: usize,
    /// Relative Ritz residual target (against `|λ_max|`).
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            t0: 1.0,
            dt: 0.01,
            dim: 24,
            wanted: 2,
            tol: 1e-9,
            max_restarts: 8,
            seed: 7,
        }
    }
}

/// A Ritz value of `e^{t₀L}` with its (complex) Ritz vector.
#[derive(Clone, Debug)]
pub struct RitzPair {
    pub lambda: Complex64,
    pub vector: SpectralField,
    /// `‖e^{t₀L}x − λx‖` for the unit Ritz vector `x`.
    pub residual: f64,
}

impl RitzPair {
    /// `(1/t₀) log λ` (principal branch).
    pub fn rate(&self, t0: f64) -> Complex64 {
        self.lambda.ln() / t0
    }
}

/// Result of [`flow_map_spectrum`].
#[derive(Clone, Debug)]
pub struct FlowSpectrum {
    pub t0: f64,
    pub ritz: Vec<RitzPair>,
    pub restarts: usize,
    pub converged: bool,
}

/// Random zero-mean divergence-free start vector with a smooth spectrum.
pub fn random_phase_field(grid: &GridSpec, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = grid.kmag();
    let coeffs = (0..grid.d)
        .map(|_| {
            (0..grid.len())
                .map(|p| {
                    let w = (-0.5 * km[p] * km[p]).exp();
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w
                })
                .collect()
        })
        .collect();
    let f = SpectralField::from_coeffs(grid, coeffs).real_part();
    let f = project_phase(&f);
    let n = f.norm_l2();
    f.scale(1.0 / n)
}

fn real_inner(a: &SpectralField, b: &SpectralField) -> f64 {
    a.inner(b).re
}

/// Order Ritz values: by modulus, then by larger `Re log λ`, then smaller `|Im λ|`.
fn ritz_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm()
        .partial_cmp(&a.norm())
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.im.abs().partial_cmp(&b.im.abs()).unwrap_or(std::cmp::Ordering::Equal))
}

/// Eigenvector of a small complex matrix for an (approximate) eigenvalue, by inverse
/// iteration with a tiny shift.
fn small_eigvec(h: &DMatrix<Complex64>, mu: Complex64) -> DVector<Complex64> {
    let m = h.nrows();
    let scale = h.norm().max(1e-300);
    let shift = mu + Complex64::new(1e-12 * scale, 1e-12 * scale);
    let a = h - DMatrix::<Complex64>::identity(m, m) * shift;
    let lu = a.lu();
    let mut y = DVector::<Complex64>::from_fn(m, |i, _| Complex64::new(1.0 / (1.0 + i as f64), 0.3));
    for _ in 0..3 {
        if let Some(z) = lu.solve(&y) {
            let nz = z.norm();
            if nz == 0.0 || !nz.is_finite() {
                break;
            }
            y = z / Complex64::new(nz, 0.0);
        }
    }
    y
}

/// Leading Ritz pairs of the flow map `e^{t₀L}` by restarted Arnoldi.
///
/// Ritz values come in exact conjugate pairs (the Hessenberg matrix is real). Krylov
/// breakdown (an invariant subspace) ends the cycle early; a fresh random seed is used
/// only when the start vector itself vanishes under the flow.
pub fn flow_map_spectrum(opr: &LinearizedOperator, cfg: &KrylovConfig) -> Result<FlowSpectrum> {
    if !(cfg.t0 > 0.0) || cfg.dim < 2 || cfg.wanted == 0 {
        return Err(Error::InvalidArgument(format!(
            "need t0 > 0, dim >= 2, wanted >= 1 (got {}, {}, {})",
            cfg.t0, cfg.dim, cfg.wanted
        )));
    }
    let g = opr.grid();
    let mut start = random_phase_field(g, cfg.seed);
    let mut seed = cfg.seed;
    let mut last: Option<FlowSpectrum> = None;
    for restart in 0..=cfg.max_restarts {
        let mut basis: Vec<SpectralField> = vec![start.clone()];
        let m = cfg.dim;
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let mut used = m;
        for j in 0..m {
            let mut w = flow_map(opr, &basis[j], cfg.t0, cfg.dt)?;
            // Modified Gram–Schmidt, twice.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = real_inner(v, &w);
                    h[(i, j)] += c;
                    w = w.axpy(-c, v);
                }
            }
            let nw = w.norm_l2();
            h[(j + 1, j)] = nw;
            let scale = h.column(j).norm();
            if nw <= 1e-13 * scale.max(1e-300) {
                used = j + 1;
                break;
            }
            basis.push(w.scale(1.0 / nw));
        }
        if used == 1 && h[(0, 0)] == 0.0 && h[(1, 0)] == 0.0 {
            seed = seed.wrapping_add(0x9E37_79B9);
            start = random_phase_field(g, seed);
            continue;
        }
        let hm = h.view((0, 0), (used, used)).into_owned();
        let beta = h[(used, used - 1)];
        let eig = hm.complex_eigenvalues();
        let mut lams: Vec<Complex64> = eig.iter().cloned().collect();
        lams.sort_by(ritz_order);
        let hc = hm.map(|v| Complex64::new(v, 0.0));
        let lmax = lams.first().map(|l| l.norm()).unwrap_or(0.0).max(1e-300);
        let mut ritz = Vec::new();
        for &lam in lams.iter().take(cfg.wanted.max(2).min(used)) {
            let y = small_eigvec(&hc, lam);
            let mut x = SpectralField::zeros(g);
            for (i, v) in basis.iter().take(used).enumerate() {
                x = x.axpy_c(y[i], v);
            }
            let nx = x.norm_l2();
            let x = x.scale(1.0 / nx);
            let residual = beta * y[used - 1].norm() / nx;
            ritz.push(RitzPair {
                lambda: lam,
                vector: x,
                residual,
            });
        }
        let converged = ritz.iter().take(cfg.wanted).all(|r| r.residual <= cfg.tol * lmax);
        let spec = FlowSpectrum {
            t0: cfg.t0,
            ritz,
            restarts: restart,
            converged,
        };
        if converged || used < m {
            return Ok(spec);
        }
        // Restart from the combination of the wanted Ritz vectors (real and imaginary parts).
        let mut v = SpectralField::zeros(g);
        for r in spec.ritz.iter().take(cfg.wanted) {
            v = v.add(&r.vector.real_part()).add(&r.vector.imag_part());
        }
        let nv = v.norm_l2();
        if nv > 0.0 {
            start = project_phase(&v.scale(1.0 / nv));
        }
        last = Some(spec);
    }
    Ok(last.expect("at least one Arnoldi cycle"))
}

/// `w₀ ≈ (1/t₀) log |λ_max(e^{t₀L})|`.
pub fn growth_bound(opr: &LinearizedOperator, cfg: &KrylovConfig) -> Result<f64> {
    let s = flow_map_spectrum(opr, cfg)?;
    let lam = s
        .ritz
        .first()
        .ok_or_else(|| Error::NoConvergence("no Ritz values".into()))?
        .lambda;
    Ok(lam.norm().ln() / cfg.t0)
}

/// A (complex) eigenpair `L_h η = zη` of the discrete operator.
#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub z: Complex64,
    /// Complex field, `‖η‖ = 1`, phase fixed so that `Re η ⟂ Im η` and `‖Re η‖ ≥ ‖Im η‖`.
    pub eta: SpectralField,
    /// `‖L_hη − zη‖ / ‖η‖`.
    pub residual: f64,
    /// Flow-map horizon the initial guess came from.
    pub t0: f64,
    pub converged: bool,
}

impl Eigenpair {
    pub fn re_eta(&self) -> SpectralField {
        self.eta.real_part()
    }

    pub fn im_eta(&self) -> SpectralField {
        self.eta.imag_part()
    }

    /// The complex-conjugate pair `(z̄, η̄)`.
    pub fn conjugate(&self) -> Eigenpair {
        Eigenpair {
            z: self.z.conj(),
            eta: self.eta.conj(),
            ..self.clone()
        }
    }
}

/// `‖Lη − zη‖ / ‖η‖`.
pub fn eigen_residual(opr: &LinearizedOperator, z: Complex64, eta: &SpectralField) -> f64 {
    let r = opr.apply_full(eta).axpy_c(-z, eta);
    r.norm_l2() / eta.norm_l2()
}

/// Normalize and fix the phase of an eigenvector: unit norm, real and imaginary parts
/// orthogonal with the real part the larger.
pub fn normalize_eigvec(eta: &SpectralField) -> SpectralField {
    let e = eta.scale(1.0 / eta.norm_l2());
    let (re, im) = (e.real_part(), e.imag_part());
    let a = re.inner(&re).re;
    let b = im.inner(&im).re;
    let c = re.inner(&im).re;
    // Rotating by e^{iφ}: maximize ‖Re‖² = ((a+b) + (a−b)cos2φ + 2c sin2φ)/2 … with the
    // sign convention Re(e^{iφ}η) = cosφ Re η − sinφ Im η.
    let phi = 0.5 * (-2.0 * c).atan2(a - b);
    let r = e.scale_c(Complex64::from_polar(1.0, phi));
    let (re, im) = (r.real_part(), r.imag_part());
    if re.norm_l2() < im.norm_l2() {
        r.scale_c(Complex64::new(0.0, -1.0))
    } else {
        r
    }
}

/// Restarted GMRES with right diagonal preconditioning for `(L − σ)x = b`.
fn gmres_shifted(
    opr: &LinearizedOperator,
    sigma: Complex64,
    b: &SpectralField,
    x0: &SpectralField,
    tol: f64,
    restart: usize,
    max_cycles: usize,
) -> (SpectralField, f64) {
    let diag = opr.diag();
    // A σ close to the diagonal's (real) range makes `diag − σ` nearly vanish on a ring
    // of wavenumbers; the preconditioner's shift is then moved right of that range.
    let dmin = diag.iter().map(|&d| (Complex64::new(d, 0.0) - sigma).norm()).fold(f64::INFINITY, f64::min);
    let dmax = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ps = if dmin < 1.0 { Complex64::new(sigma.re.max(dmax + 1.0), sigma.im) } else { sigma };
    let precond = |v: &SpectralField| v.map_coeffs(|_, p, c| c / (Complex64::new(diag[p], 0.0) - ps));
    let op = |v: &SpectralField| opr.apply_full(v).axpy_c(-sigma, v);
    let bn = b.norm_l2().max(1e-300);
    let mut x = x0.clone();
    let mut rel = f64::INFINITY;
    let mut cycle_start = f64::INFINITY;
    for _ in 0..max_cycles {
        let r = b.sub(&op(&x));
        let beta = r.norm_l2();
        rel = beta / bn;
        // A full restart cycle that gained less than 10% means GMRES has stagnated.
        if rel <= tol || rel > 0.9 * cycle_start {
            break;
        }
        cycle_start = rel;
        let mut v = vec![r.scale(1.0 / beta)];
        let mut z = Vec::with_capacity(restart);
        let mut h = DMatrix::<Complex64>::zeros(restart + 1, restart);
        let mut cs: Vec<(Complex64, Complex64)> = Vec::with_capacity(restart);
        let mut g = DVector::<Complex64>::zeros(restart + 1);
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            let zk = precond(&v[k]);
            let mut w = op(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let c = vi.inner(&w);
                h[(i, k)] = c;
                w = w.axpy_c(-c, vi);
            }
            for (i, vi) in v.iter().enumerate() {
                let c = vi.inner(&w);
                h[(i, k)] += c;
                w = w.axpy_c(-c, vi);
            }
            let hn = w.norm_l2();
            h[(k + 1, k)] = Complex64::new(hn, 0.0);
            for (i, &(c, s)) in cs.iter().enumerate() {
                let t = c.conj() * h[(i, k)] + s.conj() * h[(i + 1, k)];
                h[(i + 1, k)] = -s * h[(i, k)] + c * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let (a, bb) = (h[(k, k)], h[(k + 1, k)]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if den == 0.0 {
                (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
            } else {
                (a / den, bb / den)
            };
            h[(k, k)] = c.conj() * a + s.conj() * bb;
            h[(k + 1, k)] = Complex64::new(0.0, 0.0);
            g[k + 1] = -s * g[k];
            g[k] = c.conj() * g[k];
            cs.push((c, s));
            k_used = k + 1;
            rel = g[k + 1].norm() / bn;
            if rel <= tol || hn == 0.0 {
                break;
            }
            v.push(w.scale(1.0 / hn));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (yi, zi) in y.iter().zip(z.iter()) {
            x = x.axpy_c(*yi, zi);
        }
        if rel <= tol {
            break;
        }
    }
    (x, rel)
}

/// Refine an eigenpair guess of `L_h` by shift-and-invert iteration; each solve is
/// preconditioned GMRES with the diagonal part of the operator.
pub fn refine_eigenpair(
    opr: &LinearizedOperator,
    z_guess: Complex64,
    eta_guess: &SpectralField,
    tol: f64,
    max_iter: usize,
) -> Result<Eigenpair> {
    opr.grid().same_as(eta_guess.grid())?;
    let mut eta = normalize_eigvec(&project_phase(eta_guess));
    let rayleigh = |e: &SpectralField| e.inner(&opr.apply_full(e)) / e.inner(e);
    let mut z = z_guess;
    let mut res = eigen_residual(opr, z, &eta);
    if res > tol {
        let zr = rayleigh(&eta);
        let rr = eigen_residual(opr, zr, &eta);
        if rr < res {
            z = zr;
            res = rr;
        }
    }
    let mut best = (z, eta.clone(), res);
    let mut it = 0;
    while res > tol && it < max_iter {
        it += 1;
        // A fixed offset keeps the shifted system well conditioned for GMRES while the
        // inverse iteration still contracts by |z − σ| / gap per step.
        let sigma = z + Complex64::new(SHIFT_OFFSET, 0.0);
        // Inexact inverse iteration: the solve only has to beat the current residual.
        let solve_tol = (1e-2 * res).clamp(1e-13, 1e-6);
        let (x, _) = gmres_shifted(opr, sigma, &eta, &eta.scale_c(1.0 / (z - sigma)), solve_tol, GMRES_RESTART, 30);
        eta = normalize_eigvec(&project_phase(&x));
        z = rayleigh(&eta);
        let prev = res;
        res = eigen_residual(opr, z, &eta);
        if !res.is_finite() {
            break;
        }
        if res < best.2 {
            best = (z, eta.clone(), res);
        }
        // Stagnation: the inexact solves no longer improve the pair.
        if res > 0.5 * prev {
            break;
        }
    }
    let (z, eta, residual) = best;
    Ok(Eigenpair {
        z,
        eta,
        residual,
        t0: 0.0,
        converged: residual <= tol,
    })
}

/// Leading eigenpair: Arnoldi on the flow map, then refinement on `L_h`.
pub fn leading_eigenpair(opr: &LinearizedOperator, cfg: &KrylovConfig, tol: f64) -> Result<Eigenpair> {
    let s = flow_map_spectrum(opr, cfg)?;
    leading_from_spectrum(opr, &s, tol)
}

/// Refine the leading Ritz pair of an already computed flow-map spectrum.
pub fn leading_from_spectrum(opr: &LinearizedOperator, s: &FlowSpectrum, tol: f64) -> Result<Eigenpair> {
    let r = s
        .ritz
        .first()
        .ok_or_else(|| Error::NoConvergence("no Ritz values".into()))?;
    let mut e = refine_eigenpair(opr, r.rate(s.t0), &r.vector, tol, 12)?;
    e.t0 = s.t0;
    // Prefer the member of the conjugate pair with Im z ≥ 0.
    if e.z.im < 0.0 {
        e = Eigenpair {
            eta: normalize_eigvec(&e.eta.conj()),
            z: e.z.conj(),
            ..e
        };
    }
    Ok(e)
}

/// `w₀(β)` over a grid of β for the family `L_{βg} = P_α + βL′_g`.
#[derive(Clone, Debug)]
pub struct GrowthCurve {
    pub betas: Vec<f64>,
    pub w0: Vec<f64>,
    pub found_eigs: Vec<Option<Eigenpair>>,
    /// Per-β solver failure messages (the curve is returned regardless).
    pub failures: Vec<Option<String>>,
}

impl GrowthCurve {
    /// `max_i |w₀(β_{i+1}) − w₀(β_i)|`, the empirical modulus of continuity.
    pub fn max_jump(&self) -> f64 {
        self.w0.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }

    /// First interval on which `w₀` changes sign from negative to non-negative.
    pub fn bracket_zero(&self) -> Option<(f64, f64)> {
        (0..self.betas.len().saturating_sub(1))
            .find(|&i| self.w0[i] < 0.0 && self.w0[i + 1] >= 0.0)
            .map(|i| (self.betas[i], self.betas[i + 1]))
    }
}

fn scaled_operator(g: &SpectralField, beta: f64, opts: OperatorOptions) -> Result<LinearizedOperator> {
    LinearizedOperator::new(&g.scale(beta), opts)
}

/// Growth bound along `β ↦ L_{βg}`.
pub fn beta_sweep(
    g: &SpectralField,
    betas: &[f64],
    cfg: &KrylovConfig,
    opts: OperatorOptions,
    refine: bool,
) -> Result<GrowthCurve> {
    if betas.windows(2).any(|w| !(w[1] > w[0])) || betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(Error::InvalidArgument("beta grid must be strictly increasing within [0, 1]".into()));
    }
    let mut curve = GrowthCurve {
        betas: betas.to_vec(),
        w0: Vec::with_capacity(betas.len()),
        found_eigs: Vec::with_capacity(betas.len()),
        failures: Vec::with_capacity(betas.len()),
    };
    for &beta in betas {
        let res = scaled_operator(g, beta, opts).and_then(|op| {
            let w = growth_bound(&op, cfg)?;
            let e = if refine { Some(leading_eigenpair(&op, cfg, 1e-8)?) } else { None };
            Ok((w, e))
        });
        match res {
            Ok((w, e)) => {
                curve.w0.push(w);
                curve.found_eigs.push(e);
                curve.failures.push(None);
            }
            Err(err) => {
                curve.w0.push(f64::NAN);
                curve.found_eigs.push(None);
                curve.failures.push(Some(err.to_string()));
            }
        }
    }
    Ok(curve)
}

/// Outcome of [`unstable_search`].
#[derive(Clone, Debug)]
pub enum SearchOutcome {
    Found {
        family: FlowFamily,
        beta: f64,
        ubar: SpectralField,
        eig: Eigenpair,
        growth: f64,
        curve: GrowthCurve,
    },
    /// No sampled family member is unstable at β = 1.
    Failure { report: Vec<(FlowFamily, f64)> },
}

/// Scan family members for an unstable `L_g`, then locate `β` with
/// `0 < w₀(L_{βg}) < a_max`. Returns `Ū = βg` with its refined leading eigenpair.
///
/// The coarse β grid (`sweep_points` intervals) brackets the crossing; inside the
/// bracket a safeguarded false-position iteration (Illinois variant) on the Arnoldi
/// growth bound aims at `a_max/2`. `w₀(β)` is only piecewise smooth (the leading
/// branch can change), so every step keeps a sign bracket.
pub fn unstable_search(
    families: &[FlowFamily],
    grid: &GridSpec,
    a_max: f64,
    cfg: &KrylovConfig,
    opts: OperatorOptions,
    sweep_points: usize,
) -> Result<SearchOutcome> {
    if !(a_max > 0.0) || sweep_points == 0 {
        return Err(Error::InvalidArgument("need a_max > 0 and at least one sweep interval".into()));
    }
    let growth = |s: &FlowSpectrum| -> Result<f64> {
        let r = s.ritz.first().ok_or_else(|| Error::NoConvergence("no Ritz values".into()))?;
        Ok(r.lambda.norm().ln() / s.t0)
    };
    let target = 0.5 * a_max;
    let mut report = Vec::new();
    for fam in families {
        let g = make_background(fam, grid)?;
        let op1 = scaled_operator(&g, 1.0, opts)?;
        let s1 = flow_map_spectrum(&op1, cfg)?;
        let w1 = growth(&s1)?;
        report.push((fam.clone(), w1));
        if !(w1 > 0.0) {
            continue;
        }
        let betas: Vec<f64> = (0..sweep_points).map(|i| i as f64 / sweep_points as f64).collect();
        let mut curve = beta_sweep(&g, &betas, cfg, opts, false)?;
        curve.betas.push(1.0);
        curve.w0.push(w1);
        curve.found_eigs.push(None);
        curve.failures.push(None);
        let Some(i) = (0..curve.betas.len() - 1).rev().find(|&i| curve.w0[i] < 0.0) else {
            continue;
        };
        // (β, w₀ − target) at both ends of the bracket.
        let (mut lo, mut flo) = (curve.betas[i], curve.w0[i] - target);
        let (mut hi, mut fhi) = (curve.betas[i + 1], curve.w0[i + 1] - target);
        let mut best = (w1 < a_max).then_some((1.0, op1, s1));
        let mut side = 0i32;
        for _ in 0..40 {
            if best.is_some() {
                break;
            }
            let width = hi - lo;
            let mid = if fhi != flo { lo - flo * width / (fhi - flo) } else { 0.5 * (lo + hi) };
            let mid = mid.clamp(lo + 0.05 * width, hi - 0.05 * width);
            let op = scaled_operator(&g, mid, opts)?;
            let s = flow_map_spectrum(&op, cfg)?;
            let w = growth(&s)?;
            if w > 0.0 && w < a_max {
                best = Some((mid, op, s));
            } else if w - target > 0.0 {
                hi = mid;
                fhi = w - target;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            } else {
                lo = mid;
                flo = w - target;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            }
        }
        let Some((beta, op, s)) = best else {
            continue;
        };
        let w = growth(&s)?;
        let eig = leading_from_spectrum(&op, &s, REFINE_TOL)?;
        return Ok(SearchOutcome::Found {
            family: fam.clone(),
            beta,
            ubar: g.scale(beta),
            eig,
            growth: w,
            curve,
        });
    }
    Ok(SearchOutcome::Failure { report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroups::palpha_decay_rate;
    use crate::spectral_core::make_grid;

    fn small_grid() -> GridSpec {
        make_grid(2, 32, 8.0, 1.5, false).unwrap()
    }

    #[test]
    fn palpha_spectrum_respects_contraction() {
        let g = small_grid();
        let op = LinearizedOperator::drift_diffusion(&g, OperatorOptions::default()).unwrap();
        let cfg = KrylovConfig {
            dt: 0.02,
            dim: 16,
            ..KrylovConfig::default()
        };
        let s = flow_map_spectrum(&op, &cfg).unwrap();
        let bound = (-palpha_decay_rate(2, 1.5) * cfg.t0).exp() * 1.05;
        assert!(s.ritz.iter().all(|r| r.lambda.norm() <= bound));
    }

    #[test]
    fn k1_is_power_iteration_step() {
        let g = small_grid();
        let op = LinearizedOperator::drift_diffusion(&g, OperatorOptions::default()).unwrap();
        let cfg = KrylovConfig {
            dt: 0.05,
            dim: 2,
            wanted: 1,
            max_restarts: 0,
            ..KrylovConfig::default()
        };
        let s = flow_map_spectrum(&op, &cfg).unwrap();
        assert!(s.ritz[0].lambda.norm() > 0.0);
    }

    #[test]
    fn exact_pair_is_fixed_point_and_conjugates() {
        let g = small_grid();
        let op = LinearizedOperator::drift_diffusion(&g, OperatorOptions::default()).unwrap();
        let cfg = KrylovConfig {
            dt: 0.02,
            dim: 16,
            ..KrylovConfig::default()
        };
        let e = leading_eigenpair(&op, &cfg, 1e-10).unwrap();
        assert!(e.residual <= 1e-10, "{}", e.residual);
        let again = refine_eigenpair(&op, e.z, &e.eta, 1e-10, 5).unwrap();
        assert_eq!(again.z, e.z);
        let c = e.conjugate();
        assert!(eigen_residual(&op, c.z, &c.eta) <= 1e-10);
    }
}
