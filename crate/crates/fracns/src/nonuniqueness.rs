//! Two distinct solutions sharing one forcing: the linear mode `U_ℓ = Re(e^{zτ}η)`,
//! the pair `U₁ = Ū − ½U_ℓ`, `U₂ = Ū + ½U_ℓ`, residual checks, the Duhamel/Picard
//! solver for the perturbation equation and the physical-frame export.
//!
//! The similarity equation is `∂_τU = P_αU + H·B(U,U) + H⁻¹F` (with `H ≡ 1` in the
//! deterministic case), `B(U,V) = −Π S(U,V)`. With `U_ℓ` solving
//! `∂_τU_ℓ = P_αU_ℓ + H·L′_ŪU_ℓ` the shared forcing is
//! `F = H(−P_αŪ − H·B(Ū,Ū) − ¼H·B(U_ℓ,U_ℓ))`.
//!
//! Trajectories are streamed: per-τ scalar tables are kept for every grid point and
//! `U_ℓ` snapshots at a configurable stride. `U₁`, `U₂` and `F` are reconstructed from
//! `Ū`, `U_ℓ` and `H`, so only one forcing ever exists.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{advect_project, bilinear_sym, project_phase, LinearizedOperator, OperatorOptions};
use crate::semigroups::{flow_map, DiagStepper, HProfile, Scheme};
use crate::spectral_core::{make_grid, ssnf, vprime_norm, GridSpec, SpectralField};
use crate::spectrum::{eigen_residual, Eigenpair};
use crate::util::fmt17;

/// Eigenpairs with a larger residual are refused by the pair builders.
pub const MAX_EIG_RESIDUAL: f64 = 1e-6;

/// `U_ℓ(τ) = Re(e^{zτ}η)`.
pub fn linear_mode(eig: &Eigenpair, tau: f64) -> SpectralField {
    eig.eta.scale_c((eig.z * tau).exp()).real_part()
}

/// `∂_τU_ℓ(τ) = Re(z e^{zτ}η)`.
pub fn linear_mode_derivative(eig: &Eigenpair, tau: f64) -> SpectralField {
    eig.eta.scale_c(eig.z * (eig.z * tau).exp()).real_part()
}

/// Uniform τ-grid `[τ_min, T₀]` and snapshot stride of a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairConfig {
    pub tau_min: f64,
    pub t0: f64,
    pub steps: usize,
    /// Store `U_ℓ` snapshots every `record_stride` steps (and at both ends).
    pub record_stride: usize,
    /// Exponent used for the `V′` weighted norm table.
    pub p0: f64,
    /// Weight rate `a₁` of the `e^{−a₁τ}‖·‖_{V′}` table.
    pub a1: f64,
    /// Largest substep of the weighted linear flow (used when `H ≢ 1`).
    pub flow_dt: f64,
}

impl PairConfig {
    pub fn dtau(&self) -> f64 {
        (self.t0 - self.tau_min) / self.steps as f64
    }

    pub fn tau(&self, j: usize) -> f64 {
        if j == self.steps {
            self.t0
        } else {
            self.tau_min + j as f64 * self.dtau()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t0 > self.tau_min) || self.steps == 0 || self.record_stride == 0 || !(self.flow_dt > 0.0) {
            return Err(Error::InvalidArgument("pair grid needs tau_min < T0, steps >= 1, stride >= 1".into()));
        }
        Ok(())
    }
}

/// Per-τ diagnostics of a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BundleRow {
    pub tau: f64,
    pub h: f64,
    pub norm_u1: f64,
    pub norm_u2: f64,
    /// `‖U₂ − U₁‖` computed from the two constructed fields.
    pub norm_diff: f64,
    pub norm_ul: f64,
    pub norm_f: f64,
    /// Absolute residual norms of the two solutions.
    pub res1: f64,
    pub res2: f64,
    /// `e^{(2+d−2α)τ/(2α)}‖U₁ − Ū‖`.
    pub trace: f64,
    /// `e^{−a₁τ}‖U_ℓ‖_{V′}`.
    pub weighted: f64,
}

/// Stored `U_ℓ` sample with its time derivative.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub index: usize,
    pub tau: f64,
    pub h: f64,
    pub ul: SpectralField,
    pub dul: SpectralField,
}

/// Everything describing one constructed pair.
#[derive(Clone, Debug)]
pub struct ScenarioBundle {
    pub ubar: SpectralField,
    pub eig: Eigenpair,
    pub opts: OperatorOptions,
    pub cfg: PairConfig,
    pub gamma: f64,
    pub seed: Option<u64>,
    pub rows: Vec<BundleRow>,
    pub snapshots: Vec<Snapshot>,
}

/// Residual `∂_τU − P_αU − H·B(U,U) − H⁻¹F` of one state.
pub fn state_residual(
    opr: &LinearizedOperator,
    u: &SpectralField,
    du: &SpectralField,
    f: &SpectralField,
    h: f64,
) -> Result<SpectralField> {
    let rhs = opr
        .apply_palpha(u)
        .add(&advect_project(u, u)?.scale(h))
        .add(&f.scale(1.0 / h));
    Ok(du.sub(&rhs))
}

/// Precomputed parts of the shared forcing.
struct ForcingParts {
    pa_ubar: SpectralField,
    b_ubar: SpectralField,
}

impl ForcingParts {
    fn new(opr: &LinearizedOperator) -> Result<Self> {
        let ubar = opr.background();
        Ok(ForcingParts {
            pa_ubar: opr.apply_palpha(ubar),
            b_ubar: advect_project(ubar, ubar)?,
        })
    }

    /// `F = H(−P_αŪ − H·B(Ū,Ū) − ¼H·B(U_ℓ,U_ℓ))`.
    fn forcing(&self, ul: &SpectralField, h: f64) -> Result<SpectralField> {
        let b_ll = advect_project(ul, ul)?;
        let inner = self
            .pa_ubar
            .add(&self.b_ubar.scale(h))
            .add(&b_ll.scale(0.25 * h))
            .scale(-1.0);
        Ok(project_phase(&inner).scale(h))
    }
}

/// Forcing of a state of the scenario (exposed for verification and export).
pub fn shared_forcing(opr: &LinearizedOperator, ul: &SpectralField, h: f64) -> Result<SpectralField> {
    ForcingParts::new(opr)?.forcing(ul, h)
}

/// Residuals of both solutions at one τ, sharing one forcing.
struct PointEval {
    row: BundleRow,
}

fn evaluate_point(
    opr: &LinearizedOperator,
    parts: &ForcingParts,
    cfg: &PairConfig,
    tau: f64,
    h: f64,
    ul: &SpectralField,
    dul: &SpectralField,
) -> Result<PointEval> {
    let ubar = opr.background();
    let g = opr.grid();
    let f = parts.forcing(ul, h)?;
    let half = ul.scale(0.5);
    let u1 = ubar.sub(&half);
    let u2 = ubar.add(&half);
    let du1 = dul.scale(-0.5);
    let du2 = dul.scale(0.5);
    let r1 = state_residual(opr, &u1, &du1, &f, h)?;
    let r2 = state_residual(opr, &u2, &du2, &f, h)?;
    let decay = crate::semigroups::palpha_decay_rate(g.d, g.alpha);
    let row = BundleRow {
        tau,
        h,
        norm_u1: u1.norm_l2(),
        norm_u2: u2.norm_l2(),
        norm_diff: u2.sub(&u1).norm_l2(),
        norm_ul: ul.norm_l2(),
        norm_f: f.norm_l2(),
        res1: r1.norm_l2(),
        res2: r2.norm_l2(),
        trace: (decay * tau).exp() * u1.sub(ubar).norm_l2(),
        weighted: (-cfg.a1 * tau).exp() * vprime_norm(ul, cfg.p0),
    };
    if !row.res1.is_finite() || !row.res2.is_finite() || !row.norm_f.is_finite() {
        return Err(Error::NonFinite("pair residual"));
    }
    Ok(PointEval { row })
}

/// Shared construction path. With `H ≡ 1` the linear mode is the closed form
/// `Re(e^{zτ}η)`; otherwise it is integrated from `τ_min` with the weighted flow
/// (IF-RK4 with substeps of at most `flow_dt`, `H` sampled at half steps).
pub fn build_pair(
    opr: &LinearizedOperator,
    eig: &Eigenpair,
    h_profile: &HProfile,
    cfg: &PairConfig,
) -> Result<ScenarioBundle> {
    cfg.validate()?;
    opr.grid().same_as(eig.eta.grid())?;
    // A zero eigenvector is admissible: the pair degenerates to U₁ = U₂ = Ū.
    let res = if eig.eta.max_abs_coeff() == 0.0 {
        0.0
    } else {
        eigen_residual(opr, eig.z, &eig.eta)
    };
    if !(res <= MAX_EIG_RESIDUAL) {
        return Err(Error::Invariant(format!(
            "eigenpair residual {res:.3e} exceeds {MAX_EIG_RESIDUAL:e}; the cancellation identity would fail"
        )));
    }
    let parts = ForcingParts::new(opr)?;
    let dt = cfg.dtau();
    let closed_form = h_profile.is_identically_one();
    let sub = (dt / cfg.flow_dt - 1e-9).ceil().max(1.0) as usize;
    let stepper = DiagStepper::new(opr.diag(), dt / sub as f64, Scheme::IfRk4, true);
    let nfun = |v: &SpectralField, t: f64| -> Result<SpectralField> { Ok(opr.nonstiff(v, true, h_profile.at(t)?)) };
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let mut snapshots = Vec::new();
    let mut ul = linear_mode(eig, cfg.tau_min);
    for j in 0..=cfg.steps {
        let tau = cfg.tau(j);
        let h = h_profile.at(tau)?;
        if j > 0 {
            ul = if closed_form {
                linear_mode(eig, tau)
            } else {
                let t_start = cfg.tau(j - 1);
                let mut v = ul;
                for k in 0..sub {
                    v = project_phase(&stepper.step(&v, t_start + k as f64 * stepper.dt(), &nfun)?);
                }
                v
            };
        }
        let dul = if closed_form {
            linear_mode_derivative(eig, tau)
        } else {
            opr.apply_weighted(&ul, h)
        };
        let p = evaluate_point(opr, &parts, cfg, tau, h, &ul, &dul)?;
        rows.push(p.row);
        if j % cfg.record_stride == 0 || j == cfg.steps {
            snapshots.push(Snapshot {
                index: j,
                tau,
                h,
                ul: ul.clone(),
                dul,
            });
        }
    }
    Ok(ScenarioBundle {
        ubar: opr.background().clone(),
        eig: eig.clone(),
        opts: *opr.options(),
        cfg: *cfg,
        gamma: 0.0,
        seed: None,
        rows,
        snapshots,
    })
}

/// Deterministic pair (`H ≡ 1`).
pub fn build_pair_deterministic(opr: &LinearizedOperator, eig: &Eigenpair, cfg: &PairConfig) -> Result<ScenarioBundle> {
    build_pair(opr, eig, &HProfile::Constant(1.0), cfg)
}

/// Stochastic pair: `H` from the Brownian path (which must contain `e^τ` at every
/// half step of the τ-grid). `γ = 0` takes exactly the deterministic code path.
pub fn build_pair_stochastic(
    opr: &LinearizedOperator,
    eig: &Eigenpair,
    path: &crate::stochastic::BrownianPath,
    cfg: &PairConfig,
) -> Result<ScenarioBundle> {
    let h = crate::stochastic::scenario_h_profile(path, cfg.tau_min, cfg.dtau(), cfg.steps)?;
    let mut b = build_pair(opr, eig, &h, cfg)?;
    b.gamma = path.gamma;
    b.seed = Some(path.seed);
    Ok(b)
}

/// Derivative source for [`residual`].
pub enum Derivative<'a> {
    /// Known time derivatives at every sample.
    Exact(&'a [SpectralField]),
    /// Second-order centered differences (one-sided second order at the ends).
    CenteredFd,
}

/// Per-τ residual norms `‖∂_τU − P_αU − H·B(U,U) − H⁻¹F‖` of a sampled trajectory on
/// a uniform grid.
pub fn residual(
    opr: &LinearizedOperator,
    taus: &[f64],
    u: &[SpectralField],
    f: &[SpectralField],
    h: &[f64],
    deriv: Derivative<'_>,
) -> Result<Vec<f64>> {
    let n = taus.len();
    if u.len() != n || f.len() != n || h.len() != n {
        return Err(Error::InvalidArgument("residual inputs are not aligned".into()));
    }
    let fd = |j: usize| -> Result<SpectralField> {
        if n < 3 {
            return Err(Error::InvalidArgument("finite differences need >= 3 samples".into()));
        }
        let dt = taus[1] - taus[0];
        Ok(if j == 0 {
            u[0].scale(-3.0).add(&u[1].scale(4.0)).sub(&u[2]).scale(0.5 / dt)
        } else if j == n - 1 {
            u[n - 1].scale(3.0).sub(&u[n - 2].scale(4.0)).add(&u[n - 3]).scale(0.5 / dt)
        } else {
            u[j + 1].sub(&u[j - 1]).scale(0.5 / dt)
        })
    };
    (0..n)
        .map(|j| {
            let du = match &deriv {
                Derivative::Exact(d) => d
                    .get(j)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument("derivative list too short".into()))?,
                Derivative::CenteredFd => fd(j)?,
            };
            Ok(state_residual(opr, &u[j], &du, &f[j], h[j])?.norm_l2())
        })
        .collect()
}

impl ScenarioBundle {
    pub fn taus(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.tau).collect()
    }

    /// Largest `‖R_i(τ)‖ / ‖F(τ)‖` over both solutions and the grid.
    pub fn max_rel_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.res1.max(r.res2) / r.norm_f)
            .fold(0.0, f64::max)
    }

    /// Largest `|‖U₂−U₁‖ − ‖U_ℓ‖| / ‖U_ℓ‖`.
    pub fn difference_identity_error(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.norm_ul > 0.0)
            .map(|r| (r.norm_diff - r.norm_ul).abs() / r.norm_ul)
            .fold(0.0, f64::max)
    }

    /// Vanishing-trace ratio `trace(τ_min)/trace(T₀)` and whether the trace decreases
    /// monotonically toward `τ_min`.
    pub fn trace_ratio(&self) -> (f64, bool) {
        let first = self.rows.first().map(|r| r.trace).unwrap_or(0.0);
        let last = self.rows.last().map(|r| r.trace).unwrap_or(0.0);
        let mono = self.rows.windows(2).all(|w| w[0].trace <= w[1].trace * (1.0 + 1e-12));
        (if last > 0.0 { first / last } else { 0.0 }, mono)
    }

    /// Exponential rate of `‖U₂ − U₁‖(τ)`; see [`fit_growth_rate`].
    pub fn growth_rate(&self) -> f64 {
        let taus = self.taus();
        let norms: Vec<f64> = self.rows.iter().map(|r| r.norm_diff).collect();
        fit_growth_rate(&taus, &norms, self.eig.z.im)
    }
}

/// Least-squares rate `a` of `log n(τ) ≈ c + aτ + Σ_k (p_k cos 2kωτ + q_k sin 2kωτ)`.
/// For `n(τ) = e^{aτ}‖Re(e^{iωτ}η)‖` the periodic factor is a smooth function of
/// `2ωτ`, so a few harmonics remove it from the slope; with `ω = 0` this is a plain
/// linear fit.
pub fn fit_growth_rate(taus: &[f64], norms: &[f64], omega: f64) -> f64 {
    let harmonics = if omega.abs() > 1e-12 { 6 } else { 0 };
    let cols = 2 + 2 * harmonics;
    let pts: Vec<(f64, f64)> = taus
        .iter()
        .zip(norms.iter())
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let m = pts.len();
    let tmid = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let a = DMatrix::from_fn(m, cols, |i, c| {
        let t = pts[i].0;
        match c {
            0 => 1.0,
            1 => t - tmid,
            _ => {
                let k = ((c - 2) / 2 + 1) as f64;
                let arg = 2.0 * k * omega * t;
                if (c - 2) % 2 == 0 {
                    arg.cos()
                } else {
                    arg.sin()
                }
            }
        }
    });
    let b = DVector::from_iterator(m, pts.iter().map(|p| p.1));
    let sol = a.svd(true, true).solve(&b, 1e-14).expect("SVD solve");
    sol[1]
}

// ---------------------------------------------------------------------------
// Physical frame

/// Norm tables in the physical frame `t = e^τ`, `x = t^{1/α}ξ`:
/// `u(t,x) = t^{1/α−1}U(τ, ξ)` and `f(t,x) = t^{1/α−2}F(τ, ξ)`.
#[derive(Clone, Debug)]
pub struct PhysicalProfiles {
    pub t: Vec<f64>,
    pub norm_u1: Vec<f64>,
    pub norm_u2: Vec<f64>,
    pub norm_f: Vec<f64>,
}

impl PhysicalProfiles {
    /// Smallest `|‖u₁(t)‖ − ‖u₂(t)‖|` over the exported window.
    pub fn min_gap(&self) -> f64 {
        self.norm_u1
            .iter()
            .zip(self.norm_u2.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Log-log slope of `‖f(t)‖_{L²}`.
    pub fn forcing_exponent(&self) -> Result<f64> {
        crate::background::forcing_decay_exponent(&self.t, &self.norm_f)
    }
}

/// Physical-frame norms from the scaling laws `‖u(t)‖ = t^{(2+d−2α)/(2α)}‖U(τ)‖` and
/// `‖f(t)‖ = t^{(2+d−4α)/(2α)}‖F(τ)‖`. The box rescales with `t^{1/α}`, so no
/// resampling (and no support truncation) is involved.
pub fn to_physical(bundle: &ScenarioBundle) -> PhysicalProfiles {
    let g = bundle.ubar.grid();
    let eu = crate::spectral_core::norm_law_exponent(g.d, g.alpha, 2.0);
    let ef = crate::background::forcing_decay_target(g.d, g.alpha);
    let mut p = PhysicalProfiles {
        t: Vec::new(),
        norm_u1: Vec::new(),
        norm_u2: Vec::new(),
        norm_f: Vec::new(),
    };
    for r in &bundle.rows {
        let t = r.tau.exp();
        p.t.push(t);
        p.norm_u1.push(t.powf(eu) * r.norm_u1);
        p.norm_u2.push(t.powf(eu) * r.norm_u2);
        p.norm_f.push(t.powf(ef) * r.norm_f);
    }
    p
}

/// [`to_physical`] for a stored bundle: reads `meta.txt` and `norms.csv`.
pub fn physical_from_dir(dir: &Path) -> Result<PhysicalProfiles> {
    let meta = parse_meta(&fs::read_to_string(dir.join("meta.txt"))?)?;
    let d = meta_f64(&meta, "d")? as usize;
    let alpha = meta_f64(&meta, "alpha")?;
    let eu = crate::spectral_core::norm_law_exponent(d, alpha, 2.0);
    let ef = crate::background::forcing_decay_target(d, alpha);
    let text = fs::read_to_string(dir.join("norms.csv"))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Format { file: "norms.csv".into(), offset: 0, msg: format!("missing column `{name}`") })
    };
    let (ct, c1, c2, cf) = (col("tau")?, col("norm_u1")?, col("norm_u2")?, col("norm_f")?);
    let mut p = PhysicalProfiles { t: Vec::new(), norm_u1: Vec::new(), norm_u2: Vec::new(), norm_f: Vec::new() };
    for (i, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format { file: "norms.csv".into(), offset: i as u64 + 1, msg: "bad number".into() })?;
        let t = cells[ct].exp();
        p.t.push(t);
        p.norm_u1.push(t.powf(eu) * cells[c1]);
        p.norm_u2.push(t.powf(eu) * cells[c2]);
        p.norm_f.push(t.powf(ef) * cells[cf]);
    }
    Ok(p)
}

// ---------------------------------------------------------------------------
// Persistence

fn meta_line(out: &mut String, k: &str, v: impl std::fmt::Display) {
    let _ = writeln!(out, "{k}={v}");
}

/// Parsed `key=value` metadata.
pub fn parse_meta(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("malformed metadata line `{l}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn meta_get<'a>(meta: &'a [(String, String)], k: &str) -> Result<&'a str> {
    meta.iter()
        .find(|(key, _)| key == k)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Config(format!("missing metadata key `{k}`")))
}

fn meta_f64(meta: &[(String, String)], k: &str) -> Result<f64> {
    let v = meta_get(meta, k)?;
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("metadata key `{k}`: bad number `{v}`")))
}

fn snap_name(index: usize, what: &str) -> String {
    format!("snap_{index:06}_{what}.ssnf")
}

fn csv_rows(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.into_iter().map(fmt17).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Write the bundle directory: `meta.txt`, SSNF fields (background, eigenvector real
/// and imaginary parts, `U_ℓ` and `∂_τU_ℓ` snapshots), `norms.csv`, `residuals.csv`,
/// `physical_profiles.csv` and `snapshot_residuals.csv`.
pub fn write_bundle(bundle: &ScenarioBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let g = bundle.ubar.grid();
    let mut meta = String::new();
    meta_line(&mut meta, "d", g.d);
    meta_line(&mut meta, "n", g.n);
    meta_line(&mut meta, "L", fmt17(g.l));
    meta_line(&mut meta, "alpha", fmt17(g.alpha));
    meta_line(&mut meta, "dealias", g.dealias);
    meta_line(&mut meta, "nu", fmt17(bundle.opts.nu));
    meta_line(&mut meta, "sponge", fmt17(bundle.opts.sponge));
    meta_line(&mut meta, "z_re", fmt17(bundle.eig.z.re));
    meta_line(&mut meta, "z_im", fmt17(bundle.eig.z.im));
    meta_line(&mut meta, "eig_residual", fmt17(bundle.eig.residual));
    meta_line(&mut meta, "tau_min", fmt17(bundle.cfg.tau_min));
    meta_line(&mut meta, "T0", fmt17(bundle.cfg.t0));
    meta_line(&mut meta, "steps", bundle.cfg.steps);
    meta_line(&mut meta, "record_stride", bundle.cfg.record_stride);
    meta_line(&mut meta, "p0", fmt17(bundle.cfg.p0));
    meta_line(&mut meta, "a1", fmt17(bundle.cfg.a1));
    meta_line(&mut meta, "flow_dt", fmt17(bundle.cfg.flow_dt));
    meta_line(&mut meta, "gamma", fmt17(bundle.gamma));
    meta_line(
        &mut meta,
        "seed",
        bundle.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
    );
    fs::write(dir.join("meta.txt"), meta)?;
    ssnf::write_field(&dir.join("ubar.ssnf"), &bundle.ubar)?;
    ssnf::write_field(&dir.join("eta_re.ssnf"), &bundle.eig.re_eta())?;
    ssnf::write_field(&dir.join("eta_im.ssnf"), &bundle.eig.im_eta())?;
    let mut snaps = String::from("index,tau,h\n");
    for s in &bundle.snapshots {
        ssnf::write_field(&dir.join(snap_name(s.index, "ul")), &s.ul)?;
        ssnf::write_field(&dir.join(snap_name(s.index, "dul")), &s.dul)?;
        let _ = writeln!(snaps, "{},{},{}", s.index, fmt17(s.tau), fmt17(s.h));
    }
    fs::write(dir.join("snapshots.csv"), snaps)?;
    fs::write(
        dir.join("norms.csv"),
        csv_rows(
            "tau,h,norm_u1,norm_u2,norm_diff,norm_ul,norm_f,trace,weighted",
            bundle.rows.iter().map(|r| {
                vec![r.tau, r.h, r.norm_u1, r.norm_u2, r.norm_diff, r.norm_ul, r.norm_f, r.trace, r.weighted]
            }),
        ),
    )?;
    fs::write(
        dir.join("residuals.csv"),
        csv_rows(
            "tau,res1,res2,rel1,rel2",
            bundle
                .rows
                .iter()
                .map(|r| vec![r.tau, r.res1, r.res2, r.res1 / r.norm_f, r.res2 / r.norm_f]),
        ),
    )?;
    let phys = to_physical(bundle);
    fs::write(
        dir.join("physical_profiles.csv"),
        csv_rows(
            "t,norm_u1,norm_u2,gap,norm_f",
            (0..phys.t.len()).map(|i| {
                vec![
                    phys.t[i],
                    phys.norm_u1[i],
                    phys.norm_u2[i],
                    (phys.norm_u1[i] - phys.norm_u2[i]).abs(),
                    phys.norm_f[i],
                ]
            }),
        ),
    )?;
    let table = snapshot_residual_table(dir)?;
    fs::write(dir.join("snapshot_residuals.csv"), table)?;
    Ok(())
}

/// Data re-read from a bundle directory.
#[derive(Clone, Debug)]
pub struct StoredBundle {
    pub dir: PathBuf,
    pub meta: Vec<(String, String)>,
    pub grid: GridSpec,
    pub ubar: SpectralField,
    pub opts: OperatorOptions,
    /// `(index, τ, H)` of every snapshot.
    pub snapshots: Vec<(usize, f64, f64)>,
}

fn parse_f64_field(v: &str, file: &str, line: usize) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Format {
        file: file.to_string(),
        offset: line as u64,
        msg: format!("bad number `{v}`"),
    })
}

pub fn read_bundle(dir: &Path) -> Result<StoredBundle> {
    let meta = parse_meta(&fs::read_to_string(dir.join("meta.txt"))?)?;
    let d: usize = meta_get(&meta, "d")?
        .parse()
        .map_err(|_| Error::Config("bad d".into()))?;
    let n: usize = meta_get(&meta, "n")?
        .parse()
        .map_err(|_| Error::Config("bad n".into()))?;
    let dealias = meta_get(&meta, "dealias")? == "true";
    let grid = make_grid(d, n, meta_f64(&meta, "L")?, meta_f64(&meta, "alpha")?, dealias)?;
    let ubar = ssnf::read_field(&dir.join("ubar.ssnf"), Some(&grid))?;
    let opts = OperatorOptions {
        nu: meta_f64(&meta, "nu")?,
        sponge: meta_f64(&meta, "sponge")?,
        ..OperatorOptions::default()
    };
    let name = dir.join("snapshots.csv").display().to_string();
    let text = fs::read_to_string(dir.join("snapshots.csv"))?;
    let mut snapshots = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format {
                file: name.clone(),
                offset: i as u64,
                msg: "expected index,tau,h".into(),
            });
        }
        let idx = parts[0].parse::<usize>().map_err(|_| Error::Format {
            file: name.clone(),
            offset: i as u64,
            msg: "bad index".into(),
        })?;
        snapshots.push((idx, parse_f64_field(parts[1], &name, i)?, parse_f64_field(parts[2], &name, i)?));
    }
    Ok(StoredBundle {
        dir: dir.to_path_buf(),
        meta,
        grid,
        ubar,
        opts,
        snapshots,
    })
}

/// Residual table of the stored snapshots, computed from the stored fields only.
/// Used at build time and by verification, so both produce identical bytes.
pub fn snapshot_residual_table(dir: &Path) -> Result<String> {
    let sb = read_bundle(dir)?;
    let opr = LinearizedOperator::new(&sb.ubar, sb.opts)?;
    let parts = ForcingParts::new(&opr)?;
    let mut out = String::from("index,tau,h,res1,res2,norm_f\n");
    for &(idx, tau, h) in &sb.snapshots {
        let ul = ssnf::read_field(&dir.join(snap_name(idx, "ul")), Some(&sb.grid))?;
        let dul = ssnf::read_field(&dir.join(snap_name(idx, "dul")), Some(&sb.grid))?;
        let f = parts.forcing(&ul, h)?;
        let half = ul.scale(0.5);
        let r1 = state_residual(&opr, &sb.ubar.sub(&half), &dul.scale(-0.5), &f, h)?.norm_l2();
        let r2 = state_residual(&opr, &sb.ubar.add(&half), &dul.scale(0.5), &f, h)?.norm_l2();
        let _ = writeln!(
            out,
            "{idx},{},{},{},{},{}",
            fmt17(tau),
            fmt17(h),
            fmt17(r1),
            fmt17(r2),
            fmt17(f.norm_l2())
        );
    }
    Ok(out)
}

/// Outcome of re-checking a stored bundle.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub identical: bool,
    pub max_rel_residual: f64,
    pub table: String,
}

/// Re-run the residual checks of a bundle directory without rebuilding it.
pub fn verify_bundle(dir: &Path) -> Result<VerifyReport> {
    let table = snapshot_residual_table(dir)?;
    let stored = fs::read_to_string(dir.join("snapshot_residuals.csv"))?;
    let mut max_rel: f64 = 0.0;
    for line in table.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(3).filter_map(|s| s.parse().ok()).collect();
        if v.len() == 3 && v[2] > 0.0 {
            max_rel = max_rel.max(v[0].max(v[1]) / v[2]);
        }
    }
    Ok(VerifyReport {
        identical: stored == table,
        max_rel_residual: max_rel,
        table,
    })
}

// ---------------------------------------------------------------------------
// Picard / Duhamel solver for the perturbation equation
//   ∂_τU = L U + H·B(U,U) + B̃(U,Ũ) + F̃,   U(τ) → 0 as τ → −∞.

/// Rates of the weighted spaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardRates {
    pub delta0: f64,
    pub eps: f64,
    pub a0: f64,
    pub a1: f64,
}

/// `δ₀ = min{(2+d−2α)/(4α), 1 − (p₀+d)/(αp₀), ε₀}`, `ε = δ₀/2`, `a₁ = a₀ + ε/2`.
pub fn picard_rates(d: usize, alpha: f64, p0: f64, eps0: f64, a0: f64) -> Result<PicardRates> {
    let df = d as f64;
    let delta0 = ((2.0 + df - 2.0 * alpha) / (4.0 * alpha))
        .min(1.0 - (p0 + df) / (alpha * p0))
        .min(eps0);
    if !(delta0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta0 = {delta0} must be positive (check p0 = {p0}, eps0 = {eps0})"
        )));
    }
    let eps = delta0 / 2.0;
    Ok(PicardRates {
        delta0,
        eps,
        a0,
        a1: a0 + eps / 2.0,
    })
}

/// Data of the perturbation equation on a uniform τ-grid.
#[derive(Clone, Debug)]
pub struct PicardProblem {
    pub taus: Vec<f64>,
    pub utilde: Vec<SpectralField>,
    pub ftilde: Vec<SpectralField>,
    pub h: Vec<f64>,
}

impl PicardProblem {
    fn validate(&self) -> Result<()> {
        let n = self.taus.len();
        if n < 2 || self.utilde.len() != n || self.ftilde.len() != n || self.h.len() != n {
            return Err(Error::InvalidArgument("Picard data are not aligned with the τ-grid".into()));
        }
        let dt = self.taus[1] - self.taus[0];
        if self
            .taus
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) || !(w[1] > w[0]))
        {
            return Err(Error::InvalidArgument("Picard τ-grid must be uniform and increasing".into()));
        }
        Ok(())
    }

    fn truncated(&self, len: usize) -> PicardProblem {
        PicardProblem {
            taus: self.taus[..len].to_vec(),
            utilde: self.utilde[..len].to_vec(),
            ftilde: self.ftilde[..len].to_vec(),
            h: self.h[..len].to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_shrinks: usize,
    /// Fraction of the grid dropped from the right end per shrink.
    pub shrink_fraction: f64,
    /// Substep of the semigroup factor `e^{δτ L}`.
    pub flow_dt: f64,
    pub p0: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            tol: 1e-8,
            max_iter: 20,
            max_shrinks: 4,
            shrink_fraction: 0.25,
            flow_dt: 0.025,
            p0: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PicardResult {
    pub taus: Vec<f64>,
    pub u: Vec<SpectralField>,
    pub iterations: usize,
    /// Weighted norms of successive updates.
    pub updates: Vec<f64>,
    /// Largest ratio of successive update norms.
    pub contraction: f64,
    /// `sup_τ e^{−a₁τ}‖U(τ)‖_{V′}`.
    pub weighted_sup: f64,
    /// Weighted norm of `Φ(U) − U` for the returned `U`.
    pub self_consistency: f64,
    /// Right endpoint after shrinking.
    pub t0: f64,
    pub shrinks: usize,
}

/// `sup_j e^{−a τ_j}‖u_j‖_{V′}`.
pub fn weighted_sup(taus: &[f64], u: &[SpectralField], a: f64, p0: f64) -> f64 {
    taus.iter()
        .zip(u.iter())
        .map(|(&t, v)| (-a * t).exp() * vprime_norm(v, p0))
        .fold(0.0, f64::max)
}

fn picard_nonlinearity(prob: &PicardProblem, j: usize, u: &SpectralField) -> Result<SpectralField> {
    let mut g = prob.ftilde[j].clone();
    if u.max_abs_coeff() > 0.0 {
        g = g.add(&advect_project(u, u)?.scale(prob.h[j]));
        if prob.utilde[j].max_abs_coeff() > 0.0 {
            g = g.add(&bilinear_sym(u, &prob.utilde[j])?);
        }
    }
    Ok(g)
}

/// One application of the truncated Duhamel map with trapezoid quadrature:
/// `V₀ = 0`, `V_{j+1} = E(V_j + ½δ G_j) + ½δ G_{j+1}`, `E = e^{δL}`.
pub fn duhamel_map(
    opr: &LinearizedOperator,
    prob: &PicardProblem,
    u: &[SpectralField],
    flow_dt: f64,
) -> Result<Vec<SpectralField>> {
    let n = prob.taus.len();
    let dt = prob.taus[1] - prob.taus[0];
    let gs: Vec<SpectralField> = (0..n)
        .map(|j| picard_nonlinearity(prob, j, &u[j]))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    out.push(SpectralField::zeros(opr.grid()));
    for j in 0..n - 1 {
        let w = out[j].axpy(0.5 * dt, &gs[j]);
        let e = if w.max_abs_coeff() > 0.0 {
            flow_map(opr, &w, dt, flow_dt)?
        } else {
            w
        };
        out.push(project_phase(&e.axpy(0.5 * dt, &gs[j + 1])));
    }
    Ok(out)
}

fn weighted_diff(taus: &[f64], a: &[SpectralField], b: &[SpectralField], rate: f64, p0: f64) -> f64 {
    taus.iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(&t, (x, y))| (-rate * t).exp() * vprime_norm(&x.sub(y), p0))
        .fold(0.0, f64::max)
}

/// Fixed-point iteration of the truncated Duhamel map. When the empirical contraction
/// factor reaches 1 (or the iteration fails to converge) the right endpoint `T₀` is
/// moved left and the iteration restarted.
pub fn picard_solve(
    opr: &LinearizedOperator,
    prob: &PicardProblem,
    rates: &PicardRates,
    cfg: &PicardConfig,
) -> Result<PicardResult> {
    prob.validate()?;
    let mut current = prob.clone();
    for shrink in 0..=cfg.max_shrinks {
        match picard_attempt(opr, &current, rates, cfg) {
            Ok(mut r) => {
                r.shrinks = shrink;
                return Ok(r);
            }
            Err(Error::NoConvergence(_)) | Err(Error::Unstable { .. }) if shrink < cfg.max_shrinks => {
                let n = current.taus.len();
                let keep = n - ((n as f64 * cfg.shrink_fraction).ceil() as usize).max(1);
                if keep < 3 {
                    break;
                }
                current = current.truncated(keep);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConvergence("Picard iteration did not contract after shrinking T0".into()))
}

fn picard_attempt(
    opr: &LinearizedOperator,
    prob: &PicardProblem,
    rates: &PicardRates,
    cfg: &PicardConfig,
) -> Result<PicardResult> {
    let n = prob.taus.len();
    let mut u = vec![SpectralField::zeros(opr.grid()); n];
    let mut updates = Vec::new();
    let mut contraction: f64 = 0.0;
    for it in 1..=cfg.max_iter {
        let next = duhamel_map(opr, prob, &u, cfg.flow_dt)?;
        let upd = weighted_diff(&prob.taus, &next, &u, rates.a1, cfg.p0);
        if !upd.is_finite() {
            return Err(Error::NoConvergence("non-finite Picard update".into()));
        }
        if let Some(&prev) = updates.last() {
            if prev > 0.0 {
                let f: f64 = upd / prev;
                contraction = contraction.max(f);
                if f >= 1.0 {
                    return Err(Error::NoConvergence(format!("contraction factor {f:.3} >= 1")));
                }
            }
        }
        updates.push(upd);
        u = next;
        let scale = weighted_sup(&prob.taus, &u, rates.a1, cfg.p0);
        if upd <= cfg.tol * scale.max(1.0) || upd == 0.0 {
            let again = duhamel_map(opr, prob, &u, cfg.flow_dt)?;
            let sc = weighted_diff(&prob.taus, &again, &u, rates.a1, cfg.p0);
            return Ok(PicardResult {
                taus: prob.taus.clone(),
                u,
                iterations: it,
                updates,
                contraction,
                weighted_sup: scale,
                self_consistency: sc,
                t0: *prob.taus.last().unwrap(),
                shrinks: 0,
            });
        }
    }
    Err(Error::NoConvergence(format!("no convergence within {} iterations", cfg.max_iter)))
}

/// Second solution `U_ℓ + U_p`: solve the same kind of problem with
/// `Ũ_p = Ũ + H·U_ℓ` and `F_p = H·B(U_ℓ,U_ℓ) + B̃(U_ℓ,Ũ) + F̃`.
#[derive(Clone, Debug)]
pub struct TwoSolutions {
    pub first: PicardResult,
    pub up: PicardResult,
    /// `U_ℓ + U_p` on the common grid.
    pub second: Vec<SpectralField>,
    pub taus: Vec<f64>,
    /// `e^{−a₀τ}‖(U_ℓ+U_p) − U_r‖_{L²}` per τ.
    pub gap: Vec<f64>,
    /// `e^{−a₀τ}‖U_r‖_{L²}` per τ.
    pub first_weighted: Vec<f64>,
    /// Relative one-step Duhamel residuals of the two solutions.
    pub residual_first: f64,
    pub residual_second: f64,
}

/// Largest relative one-step Duhamel residual
/// `‖U_{j+1} − E(U_j + ½δG_j) − ½δG_{j+1}‖ / ‖U_{j+1}‖` (zero trajectories give 0).
pub fn duhamel_step_residual(
    opr: &LinearizedOperator,
    prob: &PicardProblem,
    u: &[SpectralField],
    flow_dt: f64,
) -> Result<f64> {
    let n = u.len().min(prob.taus.len());
    let dt = prob.taus[1] - prob.taus[0];
    let mut worst: f64 = 0.0;
    let mut g_prev = picard_nonlinearity(prob, 0, &u[0])?;
    for j in 0..n - 1 {
        let g_next = picard_nonlinearity(prob, j + 1, &u[j + 1])?;
        let w = u[j].axpy(0.5 * dt, &g_prev);
        let e = flow_map(opr, &w, dt, flow_dt)?;
        let r = project_phase(&u[j + 1].sub(&e.axpy(0.5 * dt, &g_next)));
        let s = u[j + 1].norm_l2();
        if s > 0.0 {
            worst = worst.max(r.norm_l2() / s);
        }
        g_prev = g_next;
    }
    Ok(worst)
}

pub fn second_solution(
    opr: &LinearizedOperator,
    prob: &PicardProblem,
    eig: &Eigenpair,
    rates: &PicardRates,
    cfg: &PicardConfig,
) -> Result<TwoSolutions> {
    let first = picard_solve(opr, prob, rates, cfg)?;
    let n0 = first.taus.len();
    let base = prob.truncated(n0);
    let ul: Vec<SpectralField> = base.taus.iter().map(|&t| linear_mode(eig, t)).collect();
    let mut pprob = base.clone();
    for j in 0..n0 {
        let h = base.h[j];
        pprob.utilde[j] = base.utilde[j].add(&ul[j].scale(h));
        let mut fp = base.ftilde[j].add(&advect_project(&ul[j], &ul[j])?.scale(h));
        if base.utilde[j].max_abs_coeff() > 0.0 {
            fp = fp.add(&bilinear_sym(&ul[j], &base.utilde[j])?);
        }
        pprob.ftilde[j] = fp;
    }
    let up = picard_solve(opr, &pprob, rates, cfg)?;
    let n = up.taus.len();
    let taus = up.taus.clone();
    let second: Vec<SpectralField> = (0..n).map(|j| ul[j].add(&up.u[j])).collect();
    let gap = (0..n)
        .map(|j| (-rates.a0 * taus[j]).exp() * second[j].sub(&first.u[j]).norm_l2())
        .collect();
    let first_weighted = (0..n)
        .map(|j| (-rates.a0 * taus[j]).exp() * first.u[j].norm_l2())
        .collect();
    let common = base.truncated(n);
    let residual_first = duhamel_step_residual(opr, &common, &first.u[..n], cfg.flow_dt)?;
    let residual_second = duhamel_step_residual(opr, &common, &second, cfg.flow_dt)?;
    Ok(TwoSolutions {
        first,
        up,
        second,
        taus,
        gap,
        first_weighted,
        residual_first,
        residual_second,
    })
}

/// Wrap a complex eigenvector as an [`Eigenpair`] after checking its residual.
pub fn eigenpair_from(opr: &LinearizedOperator, z: Complex64, eta: &SpectralField) -> Eigenpair {
    let residual = eigen_residual(opr, z, eta);
    Eigenpair {
        z,
        eta: eta.clone(),
        residual,
        t0: 0.0,
        converged: residual <= MAX_EIG_RESIDUAL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_core::make_grid;
    use crate::spectrum::{leading_eigenpair, KrylovConfig};
    use crate::stochastic::{sample_bm, scenario_bm_grid};
    use crate::testutil::{gaussian_vortex, random_divfree};
    use std::sync::OnceLock;

    struct Fixture {
        opr: LinearizedOperator,
        eig: Eigenpair,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let g = make_grid(2, 64, 8.0, 1.5, false).unwrap();
            let ubar = gaussian_vortex(&g, 0.6).scale(2.0);
            let opr = LinearizedOperator::new(&ubar, OperatorOptions::default()).unwrap();
            let cfg = KrylovConfig {
                dt: 0.02,
                dim: 16,
                ..KrylovConfig::default()
            };
            let eig = leading_eigenpair(&opr, &cfg, 1e-12).unwrap();
            Fixture { opr, eig }
        })
    }

    fn pair_cfg(steps: usize) -> PairConfig {
        PairConfig {
            tau_min: -4.0,
            t0: 0.0,
            steps,
            record_stride: 10,
            p0: 10.0,
            a1: 0.0,
            flow_dt: 0.02,
        }
    }

    fn synthetic_eig(z: Complex64) -> Eigenpair {
        let g = make_grid(2, 16, 4.0, 1.5, false).unwrap();
        let eta = SpectralField::complexify(&random_divfree(&g, 4, 1), &random_divfree(&g, 4, 2));
        Eigenpair {
            z,
            eta: crate::spectrum::normalize_eigvec(&eta),
            residual: 0.0,
            t0: 0.0,
            converged: true,
        }
    }

    #[test]
    fn linear_mode_basics() {
        let e = synthetic_eig(Complex64::new(0.3, 0.7));
        assert_eq!(linear_mode(&e, 0.0).coeffs(), e.re_eta().coeffs());
        let period = std::f64::consts::PI / 0.7;
        for &t in &[-1.3f64, 0.4, 2.0] {
            let a = (-0.3f64 * t).exp() * linear_mode(&e, t).norm_l2();
            let b = (-0.3 * (t + period)).exp() * linear_mode(&e, t + period).norm_l2();
            assert!((a - b).abs() < 1e-6);
        }
        // Centered differences converge at second order to the exact derivative.
        let err = |dt: f64| {
            let fd = linear_mode(&e, 0.5 + dt).sub(&linear_mode(&e, 0.5 - dt)).scale(0.5 / dt);
            fd.sub(&linear_mode_derivative(&e, 0.5)).norm_l2()
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!(order >= 1.9, "order {order}");
    }

    #[test]
    fn growth_fit_recovers_rate() {
        let e = synthetic_eig(Complex64::new(0.25, 0.4));
        let taus: Vec<f64> = (0..=400).map(|j| -30.0 + 0.075 * j as f64).collect();
        let norms: Vec<f64> = taus.iter().map(|&t| linear_mode(&e, t).norm_l2()).collect();
        let a = fit_growth_rate(&taus, &norms, 0.4);
        assert!((a - 0.25).abs() < 0.0025 * 0.25, "{a}");
    }

    #[test]
    fn deterministic_pair_shares_forcing() {
        let f = fixture();
        assert!(f.eig.residual <= 1e-12, "{}", f.eig.residual);
        let b = build_pair_deterministic(&f.opr, &f.eig, &pair_cfg(40)).unwrap();
        assert!(b.max_rel_residual() <= 1e-10, "{}", b.max_rel_residual());
        assert!(b.difference_identity_error() <= 1e-12);
        for r in &b.rows {
            assert!((r.res1 - r.res2).abs() <= 1e-10 * r.norm_f);
        }
        // The linear mode is refused when the eigenpair is inaccurate.
        let bad = Eigenpair {
            z: f.eig.z + 0.1,
            ..f.eig.clone()
        };
        assert!(build_pair_deterministic(&f.opr, &bad, &pair_cfg(4)).is_err());
    }

    #[test]
    fn zero_mode_is_steady_background() {
        let f = fixture();
        let zero = Eigenpair {
            eta: f.eig.eta.scale(0.0),
            ..f.eig.clone()
        };
        let b = build_pair_deterministic(&f.opr, &zero, &pair_cfg(4)).unwrap();
        for r in &b.rows {
            assert_eq!(r.norm_u1, r.norm_u2);
            assert_eq!(r.norm_diff, 0.0);
        }
        assert!(b.max_rel_residual() <= 1e-10);
    }

    #[test]
    fn stochastic_pair() {
        let f = fixture();
        let cfg = pair_cfg(40);
        let grid = scenario_bm_grid(cfg.tau_min, cfg.dtau(), cfg.steps);
        let det = build_pair_deterministic(&f.opr, &f.eig, &cfg).unwrap();
        let p0 = sample_bm(11, &grid, 0.0).unwrap();
        let s0 = build_pair_stochastic(&f.opr, &f.eig, &p0, &cfg).unwrap();
        assert_eq!(det.rows, s0.rows);
        let p = sample_bm(11, &grid, 0.5).unwrap();
        let s = build_pair_stochastic(&f.opr, &f.eig, &p, &cfg).unwrap();
        assert!(s.max_rel_residual() <= 1e-8, "{}", s.max_rel_residual());
        assert!(s.rows.iter().any(|r| r.h != 1.0));
    }

    #[test]
    fn residual_negative_control_and_fd_order() {
        let f = fixture();
        let e = &f.eig;
        let h = HProfile::Constant(1.0);
        let _ = h;
        let run = |dt: f64| {
            let taus: Vec<f64> = (0..=4).map(|j| -1.0 + dt * j as f64).collect();
            let parts = ForcingParts::new(&f.opr).unwrap();
            let u: Vec<SpectralField> = taus
                .iter()
                .map(|&t| f.opr.background().add(&linear_mode(e, t).scale(0.5)))
                .collect();
            let fs: Vec<SpectralField> = taus
                .iter()
                .map(|&t| parts.forcing(&linear_mode(e, t), 1.0).unwrap())
                .collect();
            let r = residual(&f.opr, &taus, &u, &fs, &[1.0; 5], Derivative::CenteredFd).unwrap();
            r[2]
        };
        let ratio = run(0.02) / run(0.01);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        let g = f.opr.grid();
        let u = vec![random_divfree(g, 4, 3); 3];
        let fs = vec![random_divfree(g, 4, 4); 3];
        let r = residual(&f.opr, &[0.0, 0.1, 0.2], &u, &fs, &[1.0; 3], Derivative::CenteredFd).unwrap();
        assert!(r.iter().all(|v| *v > 1e-3));
    }

    #[test]
    fn bundle_round_trip_and_verify() {
        let f = fixture();
        let b = build_pair_deterministic(&f.opr, &f.eig, &pair_cfg(20)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&b, dir.path()).unwrap();
        let v = verify_bundle(dir.path()).unwrap();
        assert!(v.identical);
        assert!(v.max_rel_residual <= 1e-10, "{}", v.max_rel_residual);
        let phys = to_physical(&b);
        assert_eq!(phys.t.len(), b.rows.len());
        let last = b.rows.last().unwrap();
        assert_eq!(*phys.norm_u1.last().unwrap(), last.norm_u1);
        // Corrupting a snapshot is detected.
        let p = dir.path().join(snap_name(0, "ul"));
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        fs::write(&p, bytes).unwrap();
        assert!(verify_bundle(dir.path()).is_err());
    }

    fn picard_problem(f: &Fixture, delta: f64, rates: &PicardRates) -> PicardProblem {
        let g = f.opr.grid();
        let taus: Vec<f64> = (0..=20).map(|j| -2.0 + 0.1 * j as f64).collect();
        let shape_u = random_divfree(g, 3, 5);
        let shape_f = random_divfree(g, 3, 6);
        // Data decaying toward τ_min at least as fast as the weighted spaces require.
        let rate_f = (rates.a1 + rates.eps).max(0.5);
        PicardProblem {
            utilde: taus.iter().map(|&t| shape_u.scale(delta * (rates.eps * t).exp())).collect(),
            ftilde: taus.iter().map(|&t| shape_f.scale(delta * (rate_f * t).exp())).collect(),
            h: vec![1.0; taus.len()],
            taus,
        }
    }

    #[test]
    fn picard_zero_data_and_contraction() {
        let f = fixture();
        let rates = picard_rates(2, 1.5, 10.0, 1.0, f.eig.z.re).unwrap();
        assert!((rates.delta0 - 1.0 / 6.0).abs() < 1e-15);
        let cfg = PicardConfig::default();
        let zero = picard_problem(f, 0.0, &rates);
        let r0 = picard_solve(&f.opr, &zero, &rates, &cfg).unwrap();
        assert!(r0.u.iter().all(|u| u.max_abs_coeff() == 0.0));
        let prob = picard_problem(f, 1e-2, &rates);
        let r = picard_solve(&f.opr, &prob, &rates, &cfg).unwrap();
        assert!(r.iterations <= 20);
        assert!(r.contraction < 0.5, "{}", r.contraction);
        assert!(r.self_consistency <= 1e-8 * r.weighted_sup.max(1.0));
    }

    #[test]
    fn two_solutions_witness() {
        let f = fixture();
        let rates = picard_rates(2, 1.5, 10.0, 1.0, f.eig.z.re).unwrap();
        let cfg = PicardConfig::default();
        let prob = picard_problem(f, 1e-2, &rates);
        // Amplitude 1e-2 at τ_min.
        let small = Eigenpair {
            eta: f.eig.eta.scale(1e-2 * (2.0 * f.eig.z.re).exp()),
            ..f.eig.clone()
        };
        let two = second_solution(&f.opr, &prob, &small, &rates, &cfg).unwrap();
        assert!(two.residual_first <= 1e-7 && two.residual_second <= 1e-7);
        let min_gap = two.gap.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_gap > 0.1 * two.gap.iter().cloned().fold(0.0, f64::max));
        assert!(two.first_weighted[0] < two.first_weighted[two.first_weighted.len() - 1]);
    }
}
