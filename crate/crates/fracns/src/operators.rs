//! Bilinear advection operators, the drift-diffusion generator `P_α`, the
//! linearization `L_Ū = P_α + L′_Ū`, and the 2D vorticity conjugation.
//!
//! Quadratic products use the skew-symmetric form `½[u·∇v + ∇·(u⊗v)]`, which equals
//! `u·∇v` for divergence-free `u` and makes the discrete transport term exactly
//! energy-neutral. All operator outputs live in the zero-mean divergence-free phase
//! space: they are Leray-projected and their mean mode is removed.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral_core::{leray_project, GridSpec, SpectralField};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Default absorbing-layer strength.
pub const DEFAULT_SPONGE: f64 = 4.0;

/// Largest admissible magnitude of a background outside the core, relative to its
/// maximum (spectral derivatives of compactly supported samples ring slightly).
pub const SUPPORT_TOL: f64 = 1e-6;

/// Leray projection followed by removal of the mean mode.
pub fn project_phase(u: &SpectralField) -> SpectralField {
    leray_project(u).without_mean().with_divfree(true)
}

fn masked(u: &SpectralField) -> SpectralField {
    let mask = u.grid().dealias_mask();
    u.map_coeffs(|_, p, v| if mask[p] { v } else { ZERO })
}

fn to_real(grid: &GridSpec, c: &[Complex64]) -> Vec<Complex64> {
    let mut buf = c.to_vec();
    grid.inverse(&mut buf);
    buf
}

fn to_spec(grid: &GridSpec, mut buf: Vec<Complex64>) -> Vec<Complex64> {
    grid.forward(&mut buf);
    buf
}

fn i_times(v: Complex64) -> Complex64 {
    Complex64::new(-v.im, v.re)
}

/// Real-space samples of a field and of its gradient `∂_j u_i` (index `i * d + j`).
struct Sampled {
    u: Vec<Vec<Complex64>>,
    grad: Vec<Vec<Complex64>>,
}

fn sample_with_gradient(u: &SpectralField) -> Sampled {
    let g = u.grid();
    let d = g.d;
    let mut grad = Vec::with_capacity(u.ncomp() * d);
    for c in u.coeffs() {
        for j in 0..d {
            let kd = g.kd(j);
            let dc: Vec<Complex64> = c.iter().enumerate().map(|(p, &v)| i_times(v) * kd[p]).collect();
            grad.push(to_real(g, &dc));
        }
    }
    Sampled {
        u: u.coeffs().iter().map(|c| to_real(g, c)).collect(),
        grad,
    }
}

/// Unprojected skew-symmetric transport `S(u, v) = ½[u·∇v + ∇·(u⊗v)]`.
/// `u` must be a d-vector field; `v` may have any number of components.
pub fn skew_transport(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.grid().same_as(v.grid())?;
    let g = u.grid().clone();
    let d = g.d;
    if u.ncomp() != d {
        return Err(Error::InvalidArgument("transporting field must have d components".into()));
    }
    let (u, v) = if g.dealias { (masked(u), masked(v)) } else { (u.clone(), v.clone()) };
    let us: Vec<Vec<Complex64>> = u.coeffs().iter().map(|c| to_real(&g, c)).collect();
    let vs = sample_with_gradient(&v);
    let npts = g.len();
    let mut out = Vec::with_capacity(v.ncomp());
    for i in 0..v.ncomp() {
        let mut conv = vec![ZERO; npts];
        for j in 0..d {
            let gr = &vs.grad[i * d + j];
            for p in 0..npts {
                conv[p] += us[j][p] * gr[p];
            }
        }
        let mut acc = to_spec(&g, conv);
        for j in 0..d {
            let prod: Vec<Complex64> = (0..npts).map(|p| us[j][p] * vs.u[i][p]).collect();
            let ph = to_spec(&g, prod);
            let kd = g.kd(j);
            for p in 0..npts {
                acc[p] += i_times(ph[p]) * kd[p];
            }
        }
        for a in acc.iter_mut() {
            *a *= 0.5;
        }
        out.push(acc);
    }
    let mut r = SpectralField::from_coeffs(&g, out);
    if g.dealias {
        r = masked(&r);
    }
    Ok(r)
}

/// `B(U, V) = −P(U·∇V)`.
pub fn advect_project(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    if v.ncomp() != v.grid().d {
        return Err(Error::InvalidArgument("advected field must be a vector field".into()));
    }
    Ok(project_phase(&skew_transport(u, v)?).scale(-1.0).with_divfree(true))
}

/// `B̃(U, V) = B(U, V) + B(V, U)`.
pub fn bilinear_sym(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    Ok(advect_project(u, v)?.add(&advect_project(v, u)?).with_divfree(true))
}

/// Which part of the linearization [`LinearizedOperator::apply`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpMode {
    /// `L_Ū = P_α + L′_Ū`.
    Full,
    /// `P_α` only.
    DriftDiffusion,
    /// `L′_Ū` only.
    Advective,
    /// `Curl ∘ L_Ū ∘ Curl⁻¹` acting on 2D vorticity.
    VorticityConjugated,
}

/// Tunable parts of the truncated operator.
#[derive(Clone, Copy, Debug)]
pub struct OperatorOptions {
    /// Coefficient of the fractional Laplacian.
    pub nu: f64,
    /// Absorbing-layer strength outside the core.
    pub sponge: f64,
    pub mode: OpMode,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            nu: 1.0,
            sponge: DEFAULT_SPONGE,
            mode: OpMode::Full,
        }
    }
}

/// The linearization of the similarity-variable equation around a background `Ū`.
///
/// The unbounded coefficient ξ of the drift is replaced by the windowed coefficient
/// `s(ξ_j)` (identity on the core), and an absorbing layer `−σ(ξ)U` acts outside the
/// core. Both vanish identically on the core `[-L/2, L/2]^d`.
#[derive(Clone)]
pub struct LinearizedOperator {
    grid: GridSpec,
    background: SpectralField,
    opts: OperatorOptions,
    diag: Vec<f64>,
    /// Samples of Ū and of ∂_jŪ_i; `None` when Ū ≡ 0.
    bg: Option<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)>,
    /// Dealiased background samples (when the grid dealiases products).
    bg_masked: Option<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)>,
    drift_coeff: Vec<Vec<f64>>,
    sponge_profile: Vec<f64>,
}

impl std::fmt::Debug for LinearizedOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearizedOperator")
            .field("grid", &self.grid)
            .field("opts", &self.opts)
            .finish()
    }
}

impl LinearizedOperator {
    pub fn new(background: &SpectralField, opts: OperatorOptions) -> Result<Self> {
        let grid = background.grid().clone();
        if background.ncomp() != grid.d {
            return Err(Error::InvalidArgument("background must be a vector field".into()));
        }
        let scale = background.max_abs_coeff();
        if scale > 0.0 && background.divergence_ratio() > 1e-10 {
            return Err(Error::InvalidArgument("background is not divergence-free".into()));
        }
        if scale > 0.0 && background.outside_core_ratio() > SUPPORT_TOL {
            return Err(Error::SupportBreach("background extends outside the window identity region".into()));
        }
        let a = grid.alpha;
        let diag = grid
            .kmag()
            .iter()
            .enumerate()
            .map(|(p, &k)| if p == 0 { 0.0 } else { (a - 1.0) / a - opts.nu * k.powf(a) })
            .collect();
        let bg = if scale > 0.0 {
            let s = sample_with_gradient(background);
            Some((s.u, s.grad))
        } else {
            None
        };
        let bg_masked = if scale > 0.0 && grid.dealias {
            let s = sample_with_gradient(&masked(background));
            Some((s.u, s.grad))
        } else {
            None
        };
        let mut drift_coeff = vec![vec![0.0; grid.len()]; grid.d];
        for p in 0..grid.len() {
            let idx = grid.unravel(p);
            for (j, dc) in drift_coeff.iter_mut().enumerate() {
                dc[p] = grid.window1d()[idx[j]];
            }
        }
        let sponge_profile = grid.sponge().iter().map(|s| s * opts.sponge).collect();
        Ok(LinearizedOperator {
            grid,
            background: background.clone(),
            opts,
            diag,
            bg,
            bg_masked,
            drift_coeff,
            sponge_profile,
        })
    }

    /// Operator around the zero background (`L = P_α`).
    pub fn drift_diffusion(grid: &GridSpec, opts: OperatorOptions) -> Result<Self> {
        Self::new(&SpectralField::zeros(grid), opts)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn background(&self) -> &SpectralField {
        &self.background
    }

    pub fn options(&self) -> &OperatorOptions {
        &self.opts
    }

    /// Same background and grid with different options.
    pub fn with_options(&self, opts: OperatorOptions) -> Result<Self> {
        Self::new(&self.background, opts)
    }

    /// Diagonal (stiff) part `(α−1)/α − ν|k|^α`, zero on the mean mode.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Non-diagonal part: windowed drift, absorbing layer and `weight · L′_Ū U`.
    /// With `weight = 1` the sum `diag ⊙ U + nonstiff(U, 1)` equals `L_Ū U`.
    pub fn nonstiff(&self, u: &SpectralField, drift: bool, weight: f64) -> SpectralField {
        let g = &self.grid;
        let d = g.d;
        let npts = g.len();
        let u0 = u.without_mean();
        let s = sample_with_gradient(&u0);
        let inv_a = 1.0 / g.alpha;
        let mut acc: Vec<Vec<Complex64>> = vec![vec![ZERO; npts]; d];
        if drift {
            for i in 0..d {
                let a = &mut acc[i];
                for j in 0..d {
                    let gr = &s.grad[i * d + j];
                    let c = &self.drift_coeff[j];
                    for p in 0..npts {
                        a[p] += gr[p] * (c[p] * inv_a);
                    }
                }
                let ui = &s.u[i];
                for p in 0..npts {
                    a[p] -= ui[p] * self.sponge_profile[p];
                }
            }
        }
        let mut out: Vec<Vec<Complex64>> = acc.into_iter().map(|a| to_spec(g, a)).collect();
        if weight != 0.0 {
            if let Some((bu, bgrad)) = if g.dealias { &self.bg_masked } else { &self.bg } {
                let (su, sgrad) = if g.dealias {
                    let m = sample_with_gradient(&masked(&u0));
                    (m.u, m.grad)
                } else {
                    (s.u, s.grad)
                };
                // −½[Ū·∇U + U·∇Ū + ∇·(Ū⊗U + U⊗Ū)], times `weight`.
                let hw = -0.5 * weight;
                let mut adv: Vec<Vec<Complex64>> = Vec::with_capacity(d);
                for i in 0..d {
                    let mut conv = vec![ZERO; npts];
                    for j in 0..d {
                        let gu = &sgrad[i * d + j];
                        let gb = &bgrad[i * d + j];
                        for p in 0..npts {
                            conv[p] += bu[j][p] * gu[p] + su[j][p] * gb[p];
                        }
                    }
                    adv.push(to_spec(g, conv));
                }
                for i in 0..d {
                    for j in i..d {
                        let prod: Vec<Complex64> =
                            (0..npts).map(|p| bu[j][p] * su[i][p] + su[j][p] * bu[i][p]).collect();
                        let t = to_spec(g, prod);
                        let (ki, kj) = (g.kd(i), g.kd(j));
                        for p in 0..npts {
                            adv[i][p] += i_times(t[p]) * kj[p];
                            if j != i {
                                adv[j][p] += i_times(t[p]) * ki[p];
                            }
                        }
                    }
                }
                let mask = g.dealias_mask();
                for i in 0..d {
                    for p in 0..npts {
                        if !g.dealias || mask[p] {
                            out[i][p] += adv[i][p] * hw;
                        }
                    }
                }
            }
        }
        project_phase(&SpectralField::from_coeffs(g, out))
    }

    /// Diagonal part applied to the phase-space component of `u` (gradient parts are
    /// annihilated, so that every operator acts as `Π L Π`).
    fn apply_diag(&self, u: &SpectralField) -> SpectralField {
        project_phase(u).map_coeffs(|_, p, v| v * self.diag[p])
    }

    /// `P_α U = ((α−1)/α)U + (1/α)ξ·∇U + νΛ^α U` (windowed, with absorbing layer).
    pub fn apply_palpha(&self, u: &SpectralField) -> SpectralField {
        self.apply_diag(u).add(&self.nonstiff(u, true, 0.0))
    }

    /// `L′_Ū U = −P(Ū·∇U + U·∇Ū)`.
    pub fn apply_advective(&self, u: &SpectralField) -> SpectralField {
        self.nonstiff(u, false, 1.0)
    }

    /// `L_Ū U`.
    pub fn apply_full(&self, u: &SpectralField) -> SpectralField {
        self.apply_diag(u).add(&self.nonstiff(u, true, 1.0))
    }

    /// `P_α U + weight · L′_Ū U`, the generator of the weighted linear flow.
    pub fn apply_weighted(&self, u: &SpectralField, weight: f64) -> SpectralField {
        self.apply_diag(u).add(&self.nonstiff(u, true, weight))
    }

    /// Apply according to the configured mode.
    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        self.grid.same_as(u.grid())?;
        Ok(match self.opts.mode {
            OpMode::Full => self.apply_full(u),
            OpMode::DriftDiffusion => self.apply_palpha(u),
            OpMode::Advective => self.apply_advective(u),
            OpMode::VorticityConjugated => {
                let v = u.inv_curl2d()?;
                self.apply_full(&v).curl2d()?
            }
        })
    }

    /// Relative support breach of a field: largest magnitude outside the core over
    /// the maximum.
    pub fn support_breach(&self, u: &SpectralField) -> f64 {
        u.outside_core_ratio()
    }
}

/// `P_α U` with default options.
pub fn apply_palpha(u: &SpectralField) -> Result<SpectralField> {
    Ok(LinearizedOperator::drift_diffusion(u.grid(), OperatorOptions::default())?.apply_palpha(u))
}

/// `L_Ū U`.
pub fn apply_l(opr: &LinearizedOperator, u: &SpectralField) -> Result<SpectralField> {
    opr.grid().same_as(u.grid())?;
    Ok(opr.apply_full(u))
}

/// Pieces of the conjugated advective operator in 2D vorticity form.
#[derive(Clone, Debug)]
pub struct VorticitySplit {
    /// `𝕂ω = −(Curl⁻¹ω)·∇ Curl g`.
    pub k_part: SpectralField,
    /// `𝕄ω = −g·∇ω` (skew-adjoint).
    pub m_part: SpectralField,
    /// `Curl L′_g Curl⁻¹ ω` computed directly.
    pub conjugated: SpectralField,
}

/// 2D vorticity conjugation of `L′_g` and its split into `𝕂 + 𝕄` (`𝕊 = 0` in 2D).
pub fn vorticity_conjugate(g: &SpectralField, w: &SpectralField) -> Result<VorticitySplit> {
    let grid = g.grid();
    grid.same_as(w.grid())?;
    if grid.d != 2 || w.ncomp() != 1 {
        return Err(Error::InvalidArgument("vorticity conjugation needs d = 2 and scalar input".into()));
    }
    let u = w.inv_curl2d()?;
    let wg = g.curl2d()?;
    let k_part = skew_transport(&u, &wg)?.scale(-1.0);
    let m_part = skew_transport(g, w)?.scale(-1.0);
    let lp = bilinear_sym(g, &u)?;
    let conjugated = lp.curl2d()?;
    Ok(VorticitySplit {
        k_part,
        m_part,
        conjugated,
    })
}
