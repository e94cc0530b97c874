//! Compactly supported background flows `g`, the scaled profile `Ū = βg`, the
//! forcing `F₀` that makes `Ū` a steady state, and forcing-decay diagnostics.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operators::{advect_project, project_phase, LinearizedOperator, OperatorOptions, SUPPORT_TOL};
use crate::spectral_core::{smooth_step, GridSpec, SpectralField};
use crate::util::loglog_slope;

/// Shape of the background family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    /// 2D stream-function bump `ψ = A₀ φ(r/R) [(1 − mix) + mix (r/R)^m cos(mθ)]`.
    Bump2d,
    /// 3D swirl `∇ × (ψ e₃)` with `ψ = A₀ φ(|ξ|/R) [(1 − mix) + mix (r/R)^m cos(mθ)]`,
    /// `r` the distance to the ξ₃-axis.
    Swirl3d,
}

impl FamilyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bump2d" => Ok(FamilyKind::Bump2d),
            "swirl3d" => Ok(FamilyKind::Swirl3d),
            _ => Err(Error::Config(format!("unknown family kind '{s}' (expected bump2d or swirl3d)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Bump2d => "bump2d",
            FamilyKind::Swirl3d => "swirl3d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FamilyKind::Bump2d => 2,
            FamilyKind::Swirl3d => 3,
        }
    }
}

/// Radial profile `φ(ρ)`, `ρ = r/R`, with `φ(0) = 1` and `φ = 0` for `ρ ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialProfile {
    /// `exp(1 − 1/(1 − ρ²))`.
    Bump,
    /// `exp(−ρ²/(2w²))·(1 − smooth_step((ρ − c)/(1 − c)))`: numerically much better
    /// resolved than the plain bump at the same grid size.
    GaussianCutoff { width: f64, cutoff: f64 },
}

impl RadialProfile {
    pub fn eval(self, rho: f64) -> f64 {
        if rho >= 1.0 {
            return 0.0;
        }
        match self {
            RadialProfile::Bump => bump_profile(rho),
            RadialProfile::GaussianCutoff { width, cutoff } => {
                (-rho * rho / (2.0 * width * width)).exp() * (1.0 - smooth_step((rho - cutoff) / (1.0 - cutoff)))
            }
        }
    }
}

impl Default for RadialProfile {
    fn default() -> Self {
        RadialProfile::GaussianCutoff {
            width: 1.0 / 6.0,
            cutoff: 0.7,
        }
    }
}

/// Parameterized compactly supported background family.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowFamily {
    pub kind: FamilyKind,
    /// Angular symmetry order (≥ 2).
    pub m: u32,
    /// Support radius `R`.
    pub radius: f64,
    /// Amplitude `A₀` of the stream function.
    pub amplitude: f64,
    /// Weight of the `m`-fold harmonic against the axisymmetric part, in `[0, 1]`.
    pub mix: f64,
    pub profile: RadialProfile,
}

impl Default for FlowFamily {
    fn default() -> Self {
        FlowFamily {
            kind: FamilyKind::Bump2d,
            m: 2,
            radius: 2.0,
            amplitude: 1.0,
            mix: 0.0,
            profile: RadialProfile::default(),
        }
    }
}

/// Radial profile `φ(ρ) = exp(1 − 1/(1 − ρ²))` for `ρ < 1`, zero otherwise (`φ(0) = 1`).
pub fn bump_profile(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - rho * rho)).exp()
    }
}

impl FlowFamily {
    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if grid.d != self.kind.dim() {
            return Err(Error::InvalidArgument(format!(
                "family {} needs d = {}, grid has d = {}",
                self.kind.name(),
                self.kind.dim(),
                grid.d
            )));
        }
        if self.m < 2 {
            return Err(Error::InvalidArgument(format!("symmetry order m = {} must be >= 2", self.m)));
        }
        if !(self.radius > 0.0) || self.radius > grid.l / 4.0 * (1.0 + 1e-12) {
            return Err(Error::SupportBreach(format!(
                "support radius {} must lie in (0, L/4 = {}]",
                self.radius,
                grid.l / 4.0
            )));
        }
        if let RadialProfile::GaussianCutoff { width, cutoff } = self.profile {
            if !(width > 0.0) || !(0.0..1.0).contains(&cutoff) {
                return Err(Error::InvalidArgument(format!(
                    "profile width {width} must be > 0 and cutoff {cutoff} in [0, 1)"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.mix) || !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("mix must lie in [0, 1] and amplitude be finite".into()));
        }
        Ok(())
    }

    /// Stream function value at `x`.
    pub fn stream(&self, x: &[f64]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let full2 = if self.kind == FamilyKind::Swirl3d { r2 + x[2] * x[2] } else { r2 };
        let rho = full2.sqrt() / self.radius;
        if rho >= 1.0 {
            return 0.0;
        }
        let r = r2.sqrt() / self.radius;
        let theta = x[1].atan2(x[0]);
        let harmonic = r.powi(self.m as i32) * (self.m as f64 * theta).cos();
        self.amplitude * self.profile.eval(rho) * ((1.0 - self.mix) + self.mix * harmonic)
    }
}

/// Generate the background velocity `g` of a family on `grid`.
pub fn make_background(family: &FlowFamily, grid: &GridSpec) -> Result<SpectralField> {
    family.validate(grid)?;
    let psi = SpectralField::from_fn(grid, 1, |x| vec![family.stream(x)]);
    let u = match family.kind {
        FamilyKind::Bump2d => psi.perp_grad()?,
        FamilyKind::Swirl3d => {
            // ∇ × (ψ e₃) = (∂₂ψ, −∂₁ψ, 0)
            let d1 = psi.deriv(0);
            let d2 = psi.deriv(1);
            let zero = SpectralField::zeros_with(grid, 1);
            let c = vec![
                d2.coeffs()[0].clone(),
                d1.scale(-1.0).coeffs()[0].clone(),
                zero.coeffs()[0].clone(),
            ];
            SpectralField::from_coeffs(grid, c)
        }
    };
    let u = u.without_mean().with_divfree(true);
    let breach = u.outside_core_ratio();
    if breach > SUPPORT_TOL {
        return Err(Error::SupportBreach(format!(
            "background leaks outside the box core (ratio {breach:.3e}); refine the grid or shrink R"
        )));
    }
    Ok(u)
}

/// Relative change of `u` under the rotation by `2π/m` about the ξ₃ (or only) axis.
/// For `m ∈ {1, 2, 4}` the rotation maps grid points onto grid points and the check
/// is an exact permutation of samples; otherwise the trigonometric interpolant is
/// evaluated at the rotated core points (accurate to the spectral truncation level).
pub fn rotation_asymmetry(u: &SpectralField, m: u32) -> f64 {
    let g = u.grid();
    let th = 2.0 * PI / m as f64;
    let (c, s) = (th.cos(), th.sin());
    let samples = u.components();
    let lattice = matches!(m, 1 | 2 | 4);
    let stride = if lattice { 1 } else { (g.n / 16).max(1) };
    let refl = |i: usize| (g.n - i) % g.n;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in 0..g.len() {
        let idx = g.unravel(p);
        if (0..g.d).any(|a| idx[a] % stride != 0) || !g.in_core(p) {
            continue;
        }
        // u is invariant iff u(Rx) = R u(x).
        let vr: Vec<f64> = if lattice {
            let mut j = idx;
            match m {
                2 => {
                    j[0] = refl(idx[0]);
                    j[1] = refl(idx[1]);
                }
                4 => {
                    j[0] = refl(idx[1]);
                    j[1] = idx[0];
                }
                _ => {}
            }
            let q = g.ravel(&j[..g.d]);
            (0..g.d).map(|a| samples[a][q]).collect()
        } else {
            let x = g.coords(p);
            let mut xr = x;
            xr[0] = c * x[0] - s * x[1];
            xr[1] = s * x[0] + c * x[1];
            eval_at(u, &xr[..g.d])
        };
        let mut ru = [samples[0][p], samples[1][p], 0.0];
        let tmp = c * ru[0] - s * ru[1];
        ru[1] = s * ru[0] + c * ru[1];
        ru[0] = tmp;
        if g.d == 3 {
            ru[2] = samples[2][p];
        }
        for a in 0..g.d {
            num += (vr[a] - ru[a]).powi(2);
            den += ru[a].powi(2);
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Evaluate the trigonometric interpolant of `u` at an arbitrary point.
pub fn eval_at(u: &SpectralField, x: &[f64]) -> Vec<f64> {
    let g = u.grid();
    let dk = g.dk();
    let phases: Vec<Vec<num_complex::Complex64>> = (0..g.d)
        .map(|a| {
            g.modes()
                .iter()
                .map(|&m| {
                    if m.unsigned_abs() as usize == g.n / 2 {
                        // Nyquist: the real interpolant uses the cosine.
                        num_complex::Complex64::new((dk * m as f64 * x[a]).cos(), 0.0)
                    } else {
                        num_complex::Complex64::from_polar(1.0, dk * m as f64 * x[a])
                    }
                })
                .collect()
        })
        .collect();
    u.coeffs()
        .iter()
        .map(|c| {
            let mut s = num_complex::Complex64::new(0.0, 0.0);
            for (p, v) in c.iter().enumerate() {
                let idx = g.unravel(p);
                let mut ph = phases[0][idx[0]];
                for a in 1..g.d {
                    ph *= phases[a][idx[a]];
                }
                s += v * ph;
            }
            s.re
        })
        .collect()
}

/// `F₀ = −P_αŪ − B(Ū,Ū)` with `B(U,V) = −Π S(U,V)`: the forcing that makes `Ū` a
/// steady state of the similarity equation `∂_τU = P_αU + B(U,U) + F`.
pub fn forcing_f0(ubar: &SpectralField, nu: f64) -> Result<SpectralField> {
    let opts = OperatorOptions {
        nu,
        ..OperatorOptions::default()
    };
    let op = LinearizedOperator::drift_diffusion(ubar.grid(), opts)?;
    let breach = op.support_breach(ubar);
    if breach > SUPPORT_TOL {
        return Err(Error::SupportBreach(format!("background outside the identity region (ratio {breach:.3e})")));
    }
    let b = advect_project(ubar, ubar)?;
    Ok(project_phase(&op.apply_palpha(ubar).add(&b).scale(-1.0)))
}

/// Exponent `(2 + d − 4α)/(2α)` of `‖f₀(t)‖_{L²} ~ t^{…}` near `t = 0`.
pub fn forcing_decay_target(d: usize, alpha: f64) -> f64 {
    (2.0 + d as f64 - 4.0 * alpha) / (2.0 * alpha)
}

/// Least-squares log-log slope of a sampled profile `t ↦ ‖f(t)‖_{L²}`.
pub fn forcing_decay_exponent(times: &[f64], norms: &[f64]) -> Result<f64> {
    if times.len() != norms.len() || times.len() < 2 {
        return Err(Error::InvalidArgument("need at least two aligned (t, norm) samples".into()));
    }
    if times.iter().chain(norms.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("forcing profile requires positive finite times and norms".into()));
    }
    Ok(loglog_slope(times, norms))
}
