//! Brownian paths, the exponential weight `h(t) = e^{−γB_t + ½γ²t}` and its
//! similarity-time inverse `H(τ) = h(e^τ)⁻¹`, stopping times, Monte-Carlo estimates
//! of their positivity and the `u ↔ v` transform.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::semigroups::HProfile;
use crate::spectral_core::SpectralField;
use crate::util::KahanSum;

/// A sampled Brownian path `B(t)` on a grid starting at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub gamma: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::InvalidArgument("Brownian grid must start at t = 0 and have >= 2 points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::InvalidArgument("Brownian grid must be strictly increasing and finite".into()));
    }
    Ok(())
}

/// `{0} ∪ {t_min · ratio^j} ∪ uniform steps of size `du` once the geometric spacing
/// exceeds `du`, up to `t_max` (included).
pub fn geometric_grid(t_min: f64, ratio: f64, du: f64, t_max: f64) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && ratio > 1.0 && du > 0.0 && t_max > t_min) {
        return Err(Error::InvalidArgument("invalid geometric grid parameters".into()));
    }
    let mut g = vec![0.0, t_min];
    loop {
        let last = *g.last().unwrap();
        let next = last + (last * (ratio - 1.0)).min(du);
        if next >= t_max * (1.0 - 1e-12) {
            g.push(t_max);
            break;
        }
        g.push(next);
    }
    Ok(g)
}

/// Sample `B` on `grid` with independent `N(0, Δt)` increments from a ChaCha8 stream.
pub fn sample_bm(seed: u64, grid: &[f64], gamma: f64) -> Result<BrownianPath> {
    check_grid(grid)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument("gamma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    let mut b = 0.0;
    for w in grid.windows(2) {
        let z: f64 = StandardNormal.sample(&mut rng);
        b += z * (w[1] - w[0]).sqrt();
        values.push(b);
    }
    Ok(BrownianPath {
        seed,
        times: grid.to_vec(),
        values,
        gamma,
    })
}

impl BrownianPath {
    /// Refine onto a finer grid that contains every existing time, filling new points
    /// by Brownian-bridge sampling (from an independent stream keyed by `bridge_seed`).
    /// Existing values are kept exactly, so the coarse path is a subsequence.
    pub fn refine(&self, fine: &[f64], bridge_seed: u64) -> Result<BrownianPath> {
        check_grid(fine)?;
        let mut rng = ChaCha8Rng::seed_from_u64(bridge_seed);
        let mut values = Vec::with_capacity(fine.len());
        let mut j = 0; // index of the next coarse point
        let mut left = (0.0, 0.0);
        for &t in fine {
            while j < self.times.len() && self.times[j] < t {
                return Err(Error::InvalidArgument(format!(
                    "fine grid misses coarse time {}",
                    self.times[j]
                )));
            }
            if j < self.times.len() && self.times[j] == t {
                values.push(self.values[j]);
                left = (t, self.values[j]);
                j += 1;
                continue;
            }
            if j >= self.times.len() {
                // Beyond the coarse horizon: free Brownian increments.
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = left.1 + z * (t - left.0).sqrt();
                values.push(v);
                left = (t, v);
                continue;
            }
            let (tb, bb) = (self.times[j], self.values[j]);
            let (ta, ba) = left;
            let mean = ba + (t - ta) / (tb - ta) * (bb - ba);
            let var = (t - ta) * (tb - t) / (tb - ta);
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = mean + z * var.sqrt();
            values.push(v);
            left = (t, v);
        }
        if j < self.times.len() {
            return Err(Error::InvalidArgument("fine grid does not cover the coarse grid".into()));
        }
        Ok(BrownianPath {
            seed: self.seed,
            times: fine.to_vec(),
            values,
            gamma: self.gamma,
        })
    }

    /// Index of `t` on the grid (exact match up to 1e-12 relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t * (1.0 - 1e-12));
        (i < self.times.len() && (self.times[i] - t).abs() <= 1e-12 * t.abs().max(1e-300)).then_some(i)
    }

    /// `γB_t − ½γ²t`, the exponent of `1/h(t)`.
    pub fn log_inv_h(&self, i: usize) -> f64 {
        self.gamma * self.values[i] - 0.5 * self.gamma * self.gamma * self.times[i]
    }

    /// Raw dump: `u64` count, then times and values as little-endian `f64`.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(8 + 16 * self.times.len());
        out.extend_from_slice(&(self.times.len() as u64).to_le_bytes());
        for v in self.times.iter().chain(self.values.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Samples of `h(t) = e^{−γB_t + ½γ²t}` on the path grid and `H(τ) = h(e^τ)⁻¹` at the
/// positive grid times (`τ = ln t`).
#[derive(Clone, Debug)]
pub struct WeightProfiles {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub taus: Vec<f64>,
    pub big_h: Vec<f64>,
}

pub fn weight_profiles(path: &BrownianPath) -> WeightProfiles {
    let h: Vec<f64> = (0..path.times.len()).map(|i| (-path.log_inv_h(i)).exp()).collect();
    let mut taus = Vec::new();
    let mut big_h = Vec::new();
    for i in 0..path.times.len() {
        if path.times[i] > 0.0 {
            taus.push(path.times[i].ln());
            big_h.push(if path.gamma == 0.0 { 1.0 } else { path.log_inv_h(i).exp() });
        }
    }
    WeightProfiles {
        times: path.times.clone(),
        h,
        taus,
        big_h,
    }
}

/// Brownian grid for a scenario on `[τ_min, τ_max]` with τ-step `dtau`: `{0}` plus
/// `e^τ` at every half step, so that the Runge–Kutta stages see exact samples.
pub fn scenario_bm_grid(tau_min: f64, dtau: f64, steps: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    for j in 0..=2 * steps {
        g.push((tau_min + 0.5 * dtau * j as f64).exp());
    }
    g
}

/// `H(τ)` on the half-step scenario grid as an [`HProfile`].
pub fn scenario_h_profile(path: &BrownianPath, tau_min: f64, dtau: f64, steps: usize) -> Result<HProfile> {
    if path.gamma == 0.0 {
        return Ok(HProfile::Constant(1.0));
    }
    let mut values = Vec::with_capacity(2 * steps + 1);
    for j in 0..=2 * steps {
        let t = (tau_min + 0.5 * dtau * j as f64).exp();
        let i = path
            .index_of(t)
            .ok_or_else(|| Error::InvalidArgument(format!("path grid does not contain t = {t}")))?;
        let v = path.log_inv_h(i).exp();
        if !v.is_finite() {
            return Err(Error::NonFinite("H profile"));
        }
        values.push(v);
    }
    Ok(HProfile::Sampled {
        tau0: tau_min,
        spacing: 0.5 * dtau,
        values,
    })
}

/// `κ = (2 + d − 2α)/(4α)`.
pub fn kappa(d: usize, alpha: f64) -> f64 {
    (2.0 + d as f64 - 2.0 * alpha) / (4.0 * alpha)
}

/// Stopping times of a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingReport {
    /// First time `B(t) > t^κ` (`+∞` when not crossed within the horizon).
    pub rho: f64,
    /// First time `|B(t)| > t^κ`; the weight bound below needs this two-sided version.
    pub rho_two_sided: f64,
    /// First time `|γB_t − ½γ²t| ≥ 1`.
    pub rho_prime: f64,
    /// `min(ρ, ρ′)`, optionally capped by solver-derived times.
    pub t1: f64,
}

impl StoppingReport {
    pub fn with_solver_time(mut self, t: f64) -> Self {
        self.t1 = self.t1.min(t);
        self
    }
}

/// First crossing `f > 0` (or `f ≥ 0` when `inclusive`) on the grid, refined by linear
/// interpolation of `f` within the crossing cell.
fn first_crossing(times: &[f64], f: impl Fn(usize) -> f64, inclusive: bool) -> f64 {
    let hit = |v: f64| if inclusive { v >= 0.0 } else { v > 0.0 };
    let mut prev = f(0);
    for i in 1..times.len() {
        let cur = f(i);
        if hit(cur) {
            if hit(prev) || cur == prev {
                return times[i - 1];
            }
            let w = (-prev / (cur - prev)).clamp(0.0, 1.0);
            return times[i - 1] + w * (times[i] - times[i - 1]);
        }
        prev = cur;
    }
    f64::INFINITY
}

pub fn stopping_times(path: &BrownianPath, d: usize, alpha: f64) -> Result<StoppingReport> {
    let k = kappa(d, alpha);
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::InvalidArgument(format!("κ = {k} outside (0, 1) for d = {d}, α = {alpha}")));
    }
    let t = &path.times;
    let b = &path.values;
    let rho = first_crossing(t, |i| b[i] - t[i].powf(k), false);
    let rho_two_sided = first_crossing(t, |i| b[i].abs() - t[i].powf(k), false);
    let rho_prime = if path.gamma == 0.0 {
        f64::INFINITY
    } else {
        first_crossing(t, |i| path.log_inv_h(i).abs() - 1.0, true)
    };
    Ok(StoppingReport {
        rho,
        rho_two_sided,
        rho_prime,
        t1: rho.min(rho_prime),
    })
}

/// Result of the pathwise weight-bound check.
#[derive(Clone, Copy, Debug)]
pub struct WeightBoundCheck {
    /// Largest `(|H−1| + |H⁻¹−1|) / (6γe^{κτ} + 4γ²e^τ)` before `min(ρ_two_sided, ρ′)`.
    pub max_ratio_two_sided: f64,
    /// Same before `min(ρ, ρ′)` (one-sided stopping time).
    pub max_ratio_one_sided: f64,
    pub samples: usize,
}

/// Check `|H − 1| + |H⁻¹ − 1| ≤ 6γe^{κτ} + 4γ²e^τ` on every grid time before stopping.
pub fn check_weight_bound(path: &BrownianPath, d: usize, alpha: f64) -> Result<WeightBoundCheck> {
    let st = stopping_times(path, d, alpha)?;
    let k = kappa(d, alpha);
    let g = path.gamma;
    let mut out = WeightBoundCheck {
        max_ratio_two_sided: 0.0,
        max_ratio_one_sided: 0.0,
        samples: 0,
    };
    for i in 0..path.times.len() {
        let t = path.times[i];
        if t <= 0.0 {
            continue;
        }
        let x = path.log_inv_h(i);
        let lhs = (x.exp() - 1.0).abs() + ((-x).exp() - 1.0).abs();
        let rhs = 6.0 * g * t.powf(k) + 4.0 * g * g * t;
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        if t <= st.rho_two_sided.min(st.rho_prime) {
            out.max_ratio_two_sided = out.max_ratio_two_sided.max(ratio);
            out.samples += 1;
        }
        if t <= st.rho.min(st.rho_prime) {
            out.max_ratio_one_sided = out.max_ratio_one_sided.max(ratio);
        }
    }
    Ok(out)
}

/// `max_{t∈[t_a,t_b]} B(t)/sqrt(2t ln ln(1/t))`.
pub fn lil_ratio(path: &BrownianPath, t_a: f64, t_b: f64) -> f64 {
    path.times
        .iter()
        .zip(path.values.iter())
        .filter(|(&t, _)| t >= t_a && t <= t_b && t < (-1f64).exp())
        .map(|(&t, &b)| b / (2.0 * t * (1.0 / t).ln().ln()).sqrt())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One Monte-Carlo row.
#[derive(Clone, Copy, Debug)]
pub struct McRow {
    pub seed: u64,
    pub rho: f64,
    pub rho_prime: f64,
    pub t1: f64,
}

#[derive(Clone, Debug)]
pub struct McReport {
    pub rows: Vec<McRow>,
    /// Fraction of paths with `ρ > threshold`.
    pub fraction_above: f64,
    /// Empirical mean of `B(1)` and of `B(1)²` (when 1 is on the grid).
    pub mean_b1: f64,
    pub var_b1: f64,
    /// Empirical 99th percentile of the LIL ratio on `[1e-6, 1e-2]`.
    pub lil_p99: f64,
}

/// Monte Carlo over seeds `seed0, seed0 + 1, …`.
pub fn stopping_mc(
    n_paths: usize,
    seed0: u64,
    grid: &[f64],
    gamma: f64,
    d: usize,
    alpha: f64,
    threshold: f64,
) -> Result<McReport> {
    check_grid(grid)?;
    let i1 = grid.iter().position(|&t| t == 1.0);
    let mut rows = Vec::with_capacity(n_paths);
    let mut above = KahanSum::default();
    let mut s1 = KahanSum::default();
    let mut s2 = KahanSum::default();
    let mut lil = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let seed = seed0.wrapping_add(i as u64);
        let p = sample_bm(seed, grid, gamma)?;
        let st = stopping_times(&p, d, alpha)?;
        if st.rho > threshold {
            above.add(1.0);
        }
        if let Some(j) = i1 {
            s1.add(p.values[j]);
            s2.add(p.values[j] * p.values[j]);
        }
        lil.push(lil_ratio(&p, 1e-6, 1e-2));
        rows.push(McRow {
            seed,
            rho: st.rho,
            rho_prime: st.rho_prime,
            t1: st.t1,
        });
    }
    let n = n_paths as f64;
    lil.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let p99 = lil[((0.99 * n).ceil() as usize).saturating_sub(1).min(lil.len() - 1)];
    let mean = s1.value() / n;
    Ok(McReport {
        rows,
        fraction_above: above.value() / n,
        mean_b1: mean,
        var_b1: s2.value() / n - mean * mean,
        lil_p99: p99,
    })
}

/// Direction of [`exp_transform`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpDirection {
    /// `u = e^{γB_t − ½γ²t} v`.
    VToU,
    /// `v = e^{−γB_t + ½γ²t} u`.
    UToV,
}

/// Pathwise scalar transform between the stochastic and random-PDE unknowns.
pub fn exp_transform(
    fields: &[SpectralField],
    times: &[f64],
    path: &BrownianPath,
    dir: ExpDirection,
) -> Result<Vec<SpectralField>> {
    if fields.len() != times.len() {
        return Err(Error::InvalidArgument("fields and times differ in length".into()));
    }
    fields
        .iter()
        .zip(times.iter())
        .map(|(f, &t)| {
            let i = path
                .index_of(t)
                .ok_or_else(|| Error::InvalidArgument(format!("time {t} not on the path grid")))?;
            let x = path.log_inv_h(i);
            let s = match dir {
                ExpDirection::VToU => x.exp(),
                ExpDirection::UToV => (-x).exp(),
            };
            Ok(if s == 1.0 { f.clone() } else { f.scale(s) })
        })
        .collect()
}
