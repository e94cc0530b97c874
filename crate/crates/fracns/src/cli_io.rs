//! Batch orchestration: flat `key=value` configuration, experiment subcommands and
//! artifact persistence. Every run writes its fully resolved configuration next to
//! its outputs; a failing run leaves a `FAILED` marker and prints one
//! machine-readable error line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::background::{make_background, FamilyKind, FlowFamily, RadialProfile};
use crate::error::{Error, Result};
use crate::nonuniqueness::{
    build_pair_deterministic, build_pair_stochastic, linear_mode, picard_rates, second_solution,
    verify_bundle, write_bundle, PairConfig, PicardConfig, PicardProblem,
};
use crate::operators::{LinearizedOperator, OperatorOptions};
use crate::semigroups::{heat_flow, heat_smoothing_bound, palpha_decay_rate, palpha_flow_exact, random_compact_divfree};
use crate::spectral_core::{hdot_norm, make_grid, make_scenario_grid, ssnf, GridSpec};
use crate::spectrum::{beta_sweep, flow_map_spectrum, leading_eigenpair, unstable_search, KrylovConfig, SearchOutcome};
use crate::stochastic::{geometric_grid, sample_bm, scenario_bm_grid, stopping_mc};
use crate::util::fmt17;

/// Every accepted key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("d", "2"),
    ("n", "128"),
    ("L", "32"),
    ("alpha", "1.5"),
    ("dealias", "false"),
    ("nu", "1"),
    ("sponge", "4"),
    ("family", "bump2d"),
    ("m", "2"),
    ("R", "8"),
    ("A0", "160"),
    ("mix", "0"),
    ("beta", "1"),
    ("profile", "gaussian_cutoff"),
    ("profile_width", "0.16666666666666666"),
    ("profile_cutoff", "0.7"),
    ("gamma", "0.5"),
    ("seed", "1"),
    ("tau_min", "-35"),
    ("T0", "0"),
    ("steps", "2000"),
    ("record_stride", "500"),
    ("flow_dt", "0.004"),
    ("krylov_t0", "1"),
    ("krylov_dt", "0.004"),
    ("krylov_dim", "16"),
    ("krylov_wanted", "2"),
    ("krylov_tol", "1e-9"),
    ("krylov_restarts", "3"),
    ("refine_tol", "1e-9"),
    ("beta_points", "5"),
    ("a_max", "0.05"),
    ("p0", "10"),
    ("eps0", "1"),
    ("picard_delta", "0.01"),
    ("picard_tau_min", "-2"),
    ("picard_steps", "20"),
    ("picard_amplitude", "0.01"),
    ("picard_tol", "1e-8"),
    ("semigroup_taus", "0.5,1,2"),
    ("mc_paths", "10000"),
    ("mc_threshold", "1e-3"),
    ("grid_tmin", "1e-6"),
    ("grid_ratio", "1.05"),
    ("grid_du", "0.01"),
    ("grid_tmax", "1"),
    ("residual_tol", "1e-10"),
    ("bundle", ""),
    ("out", "run"),
];

/// Resolved run configuration (defaults materialized).
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Parse `key=value` lines (`#` comments and blank lines ignored); unknown keys
    /// are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}`"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.get(key)
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("key `{key}`: `{}` is not a number", self.get(key))))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("key `{key}`: `{}` is not a non-negative integer", self.get(key))))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.get(key)
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("key `{key}`: `{}` is not a u64", self.get(key))))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(Error::Config(format!("key `{key}`: `{v}` is not true/false"))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: bad list entry `{s}`")))
            })
            .collect()
    }

    /// Type-check every key.
    fn check(&self) -> Result<()> {
        for k in ["d", "n", "m", "steps", "record_stride", "krylov_dim", "krylov_wanted", "krylov_restarts"] {
            self.usize(k)?;
        }
        for k in ["beta_points", "picard_steps", "mc_paths"] {
            self.usize(k)?;
        }
        self.u64("seed")?;
        self.bool("dealias")?;
        for (k, _) in DEFAULTS {
            if !matches!(
                *k,
                "d" | "n"
                    | "m"
                    | "steps"
                    | "record_stride"
                    | "krylov_dim"
                    | "krylov_wanted"
                    | "krylov_restarts"
                    | "beta_points"
                    | "picard_steps"
                    | "mc_paths"
                    | "seed"
                    | "dealias"
                    | "family"
                    | "profile"
                    | "semigroup_taus"
                    | "bundle"
                    | "out"
            ) {
                self.f64(k)?;
            }
        }
        self.list("semigroup_taus")?;
        FamilyKind::parse(self.get("family"))?;
        self.profile()?;
        Ok(())
    }

    /// Fully resolved configuration text (sorted keys).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn profile(&self) -> Result<RadialProfile> {
        match self.get("profile") {
            "bump" => Ok(RadialProfile::Bump),
            "gaussian_cutoff" => Ok(RadialProfile::GaussianCutoff {
                width: self.f64("profile_width")?,
                cutoff: self.f64("profile_cutoff")?,
            }),
            p => Err(Error::Config(format!("unknown profile `{p}`"))),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(
            self.usize("d")?,
            self.usize("n")?,
            self.f64("L")?,
            self.f64("alpha")?,
            self.bool("dealias")?,
        )
    }

    pub fn family(&self) -> Result<FlowFamily> {
        Ok(FlowFamily {
            kind: FamilyKind::parse(self.get("family"))?,
            m: self.usize("m")? as u32,
            radius: self.f64("R")?,
            amplitude: self.f64("A0")?,
            mix: self.f64("mix")?,
            profile: self.profile()?,
        })
    }

    pub fn operator_options(&self) -> Result<OperatorOptions> {
        Ok(OperatorOptions {
            nu: self.f64("nu")?,
            sponge: self.f64("sponge")?,
            ..OperatorOptions::default()
        })
    }

    pub fn krylov(&self) -> Result<KrylovConfig> {
        Ok(KrylovConfig {
            t0: self.f64("krylov_t0")?,
            dt: self.f64("krylov_dt")?,
            dim: self.usize("krylov_dim")?,
            wanted: self.usize("krylov_wanted")?,
            tol: self.f64("krylov_tol")?,
            max_restarts: self.usize("krylov_restarts")?,
            seed: self.u64("seed")?,
        })
    }

    pub fn pair(&self, a0: f64) -> Result<PairConfig> {
        let g = self.grid()?;
        let rates = picard_rates(g.d, g.alpha, self.f64("p0")?, self.f64("eps0")?, a0)?;
        Ok(PairConfig {
            tau_min: self.f64("tau_min")?,
            t0: self.f64("T0")?,
            steps: self.usize("steps")?,
            record_stride: self.usize("record_stride")?,
            p0: self.f64("p0")?,
            a1: rates.a1,
            flow_dt: self.f64("flow_dt")?,
        })
    }
}

/// Command-line interface.
#[derive(Parser, Debug)]
#[command(name = "fracns", about = "Forced hyperdissipative Navier-Stokes in self-similar variables")]
pub struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use identical non-dealiased operators for construction and verification.
    #[arg(long, global = true)]
    pub exact_algebra: bool,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SemigroupCheck,
    Spectrum,
    BetaSweep,
    UnstableSearch,
    BuildPair,
    BuildPairStochastic,
    Picard,
    StochasticMc,
    ExportPhysical,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SemigroupCheck => "semigroup-check",
            Command::Spectrum => "spectrum",
            Command::BetaSweep => "beta-sweep",
            Command::UnstableSearch => "unstable-search",
            Command::BuildPair => "build-pair",
            Command::BuildPairStochastic => "build-pair-stochastic",
            Command::Picard => "picard",
            Command::StochasticMc => "stochastic-mc",
            Command::ExportPhysical => "export-physical",
            Command::Verify => "verify",
        }
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.into_iter().map(fmt17).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        fs::write(self.out.join(name), content)?;
        Ok(())
    }

    fn scenario_operator(&self) -> Result<LinearizedOperator> {
        let g = self.cfg.grid()?;
        let ubar = make_background(&self.cfg.family()?, &g)?.scale(self.cfg.f64("beta")?);
        LinearizedOperator::new(&ubar, self.cfg.operator_options()?)
    }
}

/// Run one subcommand with a resolved configuration; artifacts go to `out`.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path, quiet: bool) -> Result<()> {
    fs::create_dir_all(out)?;
    let _ = fs::remove_file(out.join("FAILED"));
    fs::write(out.join("config.resolved.txt"), cfg.to_text())?;
    let ctx = Ctx { cfg, out, quiet };
    let res = dispatch(cmd, &ctx);
    if let Err(e) = &res {
        fs::write(out.join("FAILED"), format!("{}: {e}\n", cmd.name()))?;
    }
    res
}

fn dispatch(cmd: Command, ctx: &Ctx<'_>) -> Result<()> {
    match cmd {
        Command::SemigroupCheck => semigroup_check(ctx),
        Command::Spectrum => spectrum_cmd(ctx),
        Command::BetaSweep => beta_sweep_cmd(ctx),
        Command::UnstableSearch => unstable_search_cmd(ctx),
        Command::BuildPair | Command::BuildPairStochastic => build_pair_cmd(ctx, cmd == Command::BuildPairStochastic),
        Command::Picard => picard_cmd(ctx),
        Command::StochasticMc => mc_cmd(ctx),
        Command::ExportPhysical => export_physical_cmd(ctx),
        Command::Verify => verify_cmd(ctx),
    }
}

fn semigroup_check(ctx: &Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let g = cfg.grid()?;
    let u = random_compact_divfree(&g, 6, g.l / 6.0, cfg.u64("seed")?)?;
    let rate = palpha_decay_rate(g.d, g.alpha);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for tau in cfg.list("semigroup_taus")? {
        let v = palpha_flow_exact(&u, tau, cfg.f64("nu")?)?;
        let bound = (-rate * tau).exp() * u.norm_l2();
        let ratio = v.norm_l2() / bound;
        worst = worst.max(ratio);
        let h = heat_flow(&u, tau, g.alpha)?;
        let smooth = hdot_norm(&h, 1.0) / (heat_smoothing_bound(tau, g.alpha, 1.0) * u.norm_l2());
        rows.push(vec![tau, v.norm_l2(), bound, ratio, smooth]);
    }
    ctx.write(
        "semigroup.csv",
        &csv("tau,norm,bound,ratio,smoothing_ratio", rows.iter().cloned()),
    )?;
    ctx.say(&format!("semigroup-check: max ratio {worst:.6}"));
    if worst > 1.05 || rows.iter().any(|r| r[4] > 1.0 + 1e-12) {
        return Err(Error::Invariant(format!("semigroup bound violated (max ratio {worst})")));
    }
    Ok(())
}

fn spectrum_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let op = ctx.scenario_operator()?;
    let kc = ctx.cfg.krylov()?;
    let s = flow_map_spectrum(&op, &kc)?;
    ctx.write(
        "spectrum.csv",
        &csv(
            "lambda_re,lambda_im,rate_re,rate_im,residual",
            s.ritz.iter().map(|r| {
                let z = r.rate(kc.t0);
                vec![r.lambda.re, r.lambda.im, z.re, z.im, r.residual]
            }),
        ),
    )?;
    let e = leading_eigenpair(&op, &kc, ctx.cfg.f64("refine_tol")?)?;
    ctx.write(
        "eigenpair.csv",
        &csv("z_re,z_im,residual", [vec![e.z.re, e.z.im, e.residual]]),
    )?;
    ssnf::write_field(&ctx.out.join("eta_re.ssnf"), &e.re_eta())?;
    ssnf::write_field(&ctx.out.join("eta_im.ssnf"), &e.im_eta())?;
    ctx.say(&format!("spectrum: leading z = {} (residual {:.3e})", e.z, e.residual));
    Ok(())
}

fn beta_sweep_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let g = ctx.cfg.grid()?;
    let gbar = make_background(&ctx.cfg.family()?, &g)?;
    let np = ctx.cfg.usize("beta_points")?.max(2);
    let betas: Vec<f64> = (0..np).map(|i| i as f64 / (np - 1) as f64).collect();
    let curve = beta_sweep(&gbar, &betas, &ctx.cfg.krylov()?, ctx.cfg.operator_options()?, false)?;
    let mut s = String::from("beta,w0,failure\n");
    for i in 0..curve.betas.len() {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt17(curve.betas[i]),
            fmt17(curve.w0[i]),
            curve.failures[i].clone().unwrap_or_default().replace(',', ";")
        );
    }
    ctx.write("growth_curve.csv", &s)?;
    ctx.say(&format!("beta-sweep: bracket {:?}", curve.bracket_zero()));
    Ok(())
}

fn unstable_search_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let g = make_scenario_grid(
        cfg.usize("d")?,
        cfg.usize("n")?,
        cfg.f64("L")?,
        cfg.f64("alpha")?,
        cfg.bool("dealias")?,
    )?;
    let out = unstable_search(
        &[cfg.family()?],
        &g,
        cfg.f64("a_max")?,
        &cfg.krylov()?,
        cfg.operator_options()?,
        cfg.usize("beta_points")?,
    )?;
    match out {
        SearchOutcome::Found { beta, eig, growth, .. } => {
            ctx.write(
                "search.txt",
                &format!(
                    "outcome=found\nbeta={}\nz_re={}\nz_im={}\nw0={}\nresidual={}\n",
                    fmt17(beta),
                    fmt17(eig.z.re),
                    fmt17(eig.z.im),
                    fmt17(growth),
                    fmt17(eig.residual)
                ),
            )?;
            ctx.say(&format!("unstable-search: found beta = {beta}, w0 = {growth}"));
        }
        SearchOutcome::Failure { report } => {
            let mut s = String::from("outcome=failure\nfamily,m,R,A0,mix,w0\n");
            for (f, w0) in &report {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    f.kind.name(),
                    f.m,
                    fmt17(f.radius),
                    fmt17(f.amplitude),
                    fmt17(f.mix),
                    fmt17(*w0)
                );
            }
            ctx.write("search.txt", &s)?;
            ctx.say("unstable-search: no unstable member found (failure artifact written)");
        }
    }
    Ok(())
}

fn build_pair_cmd(ctx: &Ctx<'_>, stochastic: bool) -> Result<()> {
    let op = ctx.scenario_operator()?;
    let e = leading_eigenpair(&op, &ctx.cfg.krylov()?, ctx.cfg.f64("refine_tol")?)?;
    let pc = ctx.cfg.pair(e.z.re)?;
    let bundle = if stochastic {
        let grid = scenario_bm_grid(pc.tau_min, pc.dtau(), pc.steps);
        let path = sample_bm(ctx.cfg.u64("seed")?, &grid, ctx.cfg.f64("gamma")?)?;
        build_pair_stochastic(&op, &e, &path, &pc)?
    } else {
        build_pair_deterministic(&op, &e, &pc)?
    };
    let dir = ctx.out.join("bundle");
    write_bundle(&bundle, &dir)?;
    let worst = bundle.max_rel_residual();
    ctx.say(&format!(
        "build-pair: z = {}, max relative residual {worst:.3e}, growth fit {:.6}",
        e.z,
        bundle.growth_rate()
    ));
    let tol = ctx.cfg.f64("residual_tol")?;
    if worst > tol {
        return Err(Error::Invariant(format!("pair residual {worst:.3e} exceeds {tol:e}")));
    }
    Ok(())
}

fn picard_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let op = ctx.scenario_operator()?;
    let e = leading_eigenpair(&op, &cfg.krylov()?, cfg.f64("refine_tol")?)?;
    let g = op.grid().clone();
    let rates = picard_rates(g.d, g.alpha, cfg.f64("p0")?, cfg.f64("eps0")?, e.z.re)?;
    let steps = cfg.usize("picard_steps")?;
    let tmin = cfg.f64("picard_tau_min")?;
    let t0 = cfg.f64("T0")?;
    let taus: Vec<f64> = (0..=steps)
        .map(|j| tmin + (t0 - tmin) * j as f64 / steps as f64)
        .collect();
    let delta = cfg.f64("picard_delta")?;
    let seed = cfg.u64("seed")?;
    let su = random_compact_divfree(&g, 4, g.l / 4.0, seed)?;
    let sf = random_compact_divfree(&g, 4, g.l / 4.0, seed.wrapping_add(1))?;
    let rate_f = (rates.a1 + rates.eps).max(0.5);
    let prob = PicardProblem {
        utilde: taus.iter().map(|&t| su.scale(delta * (rates.eps * t).exp())).collect(),
        ftilde: taus.iter().map(|&t| sf.scale(delta * (rate_f * t).exp())).collect(),
        h: vec![1.0; taus.len()],
        taus: taus.clone(),
    };
    let amp = cfg.f64("picard_amplitude")? * (e.z.re * tmin).exp();
    let scaled = crate::spectrum::Eigenpair {
        eta: e.eta.scale(amp),
        ..e.clone()
    };
    let pc = PicardConfig {
        tol: cfg.f64("picard_tol")?,
        p0: cfg.f64("p0")?,
        ..PicardConfig::default()
    };
    let two = second_solution(&op, &prob, &scaled, &rates, &pc)?;
    ctx.write(
        "picard_updates.csv",
        &csv(
            "iteration,update",
            two.first.updates.iter().enumerate().map(|(i, &u)| vec![(i + 1) as f64, u]),
        ),
    )?;
    ctx.write(
        "witness.csv",
        &csv(
            "tau,gap,first_weighted,linear_weighted",
            (0..two.taus.len()).map(|j| {
                let t = two.taus[j];
                vec![
                    t,
                    two.gap[j],
                    two.first_weighted[j],
                    (-rates.a0 * t).exp() * linear_mode(&scaled, t).norm_l2(),
                ]
            }),
        ),
    )?;
    ctx.write(
        "picard_summary.txt",
        &format!(
            "iterations={}\ncontraction={}\nself_consistency={}\nweighted_sup={}\nshrinks={}\nresidual_first={}\nresidual_second={}\na0={}\na1={}\ndelta0={}\n",
            two.first.iterations,
            fmt17(two.first.contraction),
            fmt17(two.first.self_consistency),
            fmt17(two.first.weighted_sup),
            two.first.shrinks,
            fmt17(two.residual_first),
            fmt17(two.residual_second),
            fmt17(rates.a0),
            fmt17(rates.a1),
            fmt17(rates.delta0)
        ),
    )?;
    ctx.say(&format!(
        "picard: {} iterations, contraction {:.3}",
        two.first.iterations, two.first.contraction
    ));
    Ok(())
}

fn mc_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let grid = geometric_grid(
        cfg.f64("grid_tmin")?,
        cfg.f64("grid_ratio")?,
        cfg.f64("grid_du")?,
        cfg.f64("grid_tmax")?,
    )?;
    let rep = stopping_mc(
        cfg.usize("mc_paths")?,
        cfg.u64("seed")?,
        &grid,
        cfg.f64("gamma")?,
        cfg.usize("d")?,
        cfg.f64("alpha")?,
        cfg.f64("mc_threshold")?,
    )?;
    let mut s = String::from("seed,rho,rho_prime,t1\n");
    for r in &rep.rows {
        let _ = writeln!(s, "{},{},{},{}", r.seed, fmt17(r.rho), fmt17(r.rho_prime), fmt17(r.t1));
    }
    ctx.write("mc.csv", &s)?;
    ctx.write(
        "mc_summary.txt",
        &format!(
            "fraction_above={}\nmean_b1={}\nvar_b1={}\nlil_p99={}\n",
            fmt17(rep.fraction_above),
            fmt17(rep.mean_b1),
            fmt17(rep.var_b1),
            fmt17(rep.lil_p99)
        ),
    )?;
    ctx.say(&format!("stochastic-mc: fraction rho > threshold = {}", rep.fraction_above));
    Ok(())
}

fn bundle_dir(ctx: &Ctx<'_>) -> Result<PathBuf> {
    let b = ctx.cfg.get("bundle");
    if b.is_empty() {
        return Err(Error::Config("key `bundle` must name a bundle directory".into()));
    }
    Ok(PathBuf::from(b))
}

fn export_physical_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let dir = bundle_dir(ctx)?;
    let p = crate::nonuniqueness::physical_from_dir(&dir)?;
    ctx.write(
        "physical_profiles.csv",
        &csv(
            "t,norm_u1,norm_u2,gap,norm_f",
            (0..p.t.len()).map(|i| vec![p.t[i], p.norm_u1[i], p.norm_u2[i], (p.norm_u1[i] - p.norm_u2[i]).abs(), p.norm_f[i]]),
        ),
    )?;
    let slope = p.forcing_exponent()?;
    ctx.write(
        "forcing_exponent.txt",
        &format!("slope={}\nmin_gap={}\n", fmt17(slope), fmt17(p.min_gap())),
    )?;
    ctx.say(&format!("export-physical: forcing slope {slope:.6}"));
    Ok(())
}

fn verify_cmd(ctx: &Ctx<'_>) -> Result<()> {
    let dir = bundle_dir(ctx)?;
    let h = ssnf::decode_header(&fs::read(dir.join("ubar.ssnf"))?, "ubar.ssnf")?;
    let rep = verify_bundle(&dir)?;
    ctx.write("snapshot_residuals.csv", &rep.table)?;
    ctx.write(
        "verify.txt",
        &format!(
            "d={}\nn={}\nL={}\nalpha={}\nidentical={}\nmax_rel_residual={}\n",
            h.d,
            h.n,
            fmt17(h.l),
            fmt17(h.alpha),
            rep.identical,
            fmt17(rep.max_rel_residual)
        ),
    )?;
    ctx.say(&format!(
        "verify: identical = {}, max relative residual {:.3e}",
        rep.identical, rep.max_rel_residual
    ));
    if !rep.identical {
        return Err(Error::Invariant("regenerated residual table differs from the stored one".into()));
    }
    let tol = ctx.cfg.f64("residual_tol")?;
    if rep.max_rel_residual > tol {
        return Err(Error::Invariant(format!("stored residual {:.3e} exceeds {tol:e}", rep.max_rel_residual)));
    }
    Ok(())
}

/// Short machine-readable kind of an error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidGrid(_) => "invalid_grid",
        Error::GridMismatch => "grid_mismatch",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::NonFinite(_) => "non_finite",
        Error::SupportBreach(_) => "support_breach",
        Error::Unstable { .. } => "unstable",
        Error::NoConvergence(_) => "no_convergence",
        Error::Format { .. } => "format",
        Error::UnsupportedVersion(_) => "unsupported_version",
        Error::Config(_) => "config",
        Error::Invariant(_) => "invariant",
        Error::Io(_) => "io",
    }
}

/// Resolve the configuration from the CLI flags.
pub fn resolve(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if cli.exact_algebra {
        cfg.set("dealias", "false")?;
    }
    if let Some(o) = &cli.out {
        cfg.set("out", &o.display().to_string())?;
    }
    let out = PathBuf::from(cfg.get("out"));
    Ok((cfg, out))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = resolve(&cli).and_then(|(cfg, out)| run(cli.command, &cfg, &out, cli.quiet));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "error: command={} kind={} message={:?}",
                cli.command.name(),
                error_kind(&e),
                e.to_string()
            );
            1
        }
    }
}
