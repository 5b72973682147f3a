//! Continuous-time jump process with rates `(1/eps) exp(-(f(y) - f(x)) / 2 eps)`
//! on `eps Z^d`, hitting times of a target ball and occupation statistics.
//!
//! Every trajectory draws from its own ChaCha8 stream: the generator is seeded
//! with the run seed and the stream number is the trajectory index, so a
//! record depends on `(seed, index)` only and not on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{Band, BandedFactor};
use crate::error::{Error, Result};
use crate::landscape::PotentialSpec;
use crate::lattice::LatticeBox;
use crate::EXP_CLAMP;

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    #[serde(skip)]
    pub potential: PotentialSpec,
    pub eps: f64,
    /// Starting lattice coordinates (`x = eps * k`).
    pub start: Vec<i64>,
    pub target_center: Vec<f64>,
    pub target_radius: f64,
    pub seed: u64,
    pub max_time: f64,
    pub n_trajectories: usize,
}

/// Target radius used when none is given: `max(3 eps, 0.1)`.
pub fn default_target_radius(eps: f64) -> f64 {
    (3.0 * eps).max(0.1)
}

impl SimConfig {
    /// Start at the lattice site nearest `from`, target the default ball around `to`.
    pub fn between(
        potential: PotentialSpec,
        eps: f64,
        from: &[f64],
        to: &[f64],
        seed: u64,
        max_time: f64,
        n_trajectories: usize,
    ) -> Result<Self> {
        let cfg = SimConfig {
            potential,
            eps,
            start: from.iter().map(|x| (x / eps).round() as i64).collect(),
            target_center: to.to_vec(),
            target_radius: default_target_radius(eps),
            seed,
            max_time,
            n_trajectories,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.potential.dim;
        if !(self.eps > 0.0) || !(self.max_time > 0.0) {
            return Err(Error::InvalidInput("eps and max_time must be positive".into()));
        }
        if self.start.len() != d || self.target_center.len() != d {
            return Err(Error::InvalidInput("start and target must match the dimension".into()));
        }
        if !(self.target_radius > 2.0 * self.eps) {
            return Err(Error::InvalidInput(format!(
                "target radius {} must exceed 2 eps = {}",
                self.target_radius,
                2.0 * self.eps
            )));
        }
        if self.in_target(&self.start) {
            return Err(Error::InvalidInput("start lies in the target".into()));
        }
        Ok(())
    }

    pub fn start_point(&self) -> Vec<f64> {
        self.start.iter().map(|&k| k as f64 * self.eps).collect()
    }

    fn in_target(&self, k: &[i64]) -> bool {
        let r2: f64 = k
            .iter()
            .zip(&self.target_center)
            .map(|(&ki, c)| (ki as f64 * self.eps - c).powi(2))
            .sum();
        r2 <= self.target_radius * self.target_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingRecord {
    pub seed: u64,
    pub traj_index: u64,
    pub hit: bool,
    /// First hitting time, or `max_time` when censored.
    pub time: f64,
    pub steps: u64,
}

/// Generator for trajectory `traj_index` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, traj_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_index);
    rng
}

/// Jump rates to the `2d` neighbors, in the order `(+e_0, -e_0, +e_1, ...)`.
fn rates(p: &PotentialSpec, eps: f64, k: &[i64], x: &mut [f64], y: &mut [f64], out: &mut [f64]) -> Result<f64> {
    for (xi, &ki) in x.iter_mut().zip(k) {
        *xi = ki as f64 * eps;
    }
    let fx = p.eval(x);
    y.copy_from_slice(x);
    let mut total = 0.0;
    for axis in 0..k.len() {
        for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
            y[axis] = x[axis] + sign * eps;
            let exponent = -(p.eval(y) - fx) / (2.0 * eps);
            if exponent.abs() > EXP_CLAMP || !exponent.is_finite() {
                return Err(Error::RateOverflow { location: x.to_vec(), exponent });
            }
            let r = exponent.exp() / eps;
            out[2 * axis + s] = r;
            total += r;
        }
        y[axis] = x[axis];
    }
    Ok(total)
}

/// Picks index `j` with probability `w[j] / total`.
fn choose(rng: &mut ChaCha8Rng, w: &[f64], total: f64) -> usize {
    let mut u = rng.random::<f64>() * total;
    for (j, &v) in w.iter().enumerate() {
        if u < v {
            return j;
        }
        u -= v;
    }
    w.len() - 1
}

fn jump(k: &mut [i64], j: usize) {
    k[j / 2] += if j.is_multiple_of(2) { 1 } else { -1 };
}

pub fn simulate_trajectory(cfg: &SimConfig, traj_index: u64) -> Result<HittingRecord> {
    let d = cfg.potential.dim;
    let mut rng = trajectory_rng(cfg.seed, traj_index);
    let mut k = cfg.start.clone();
    let (mut x, mut y, mut w) = (vec![0.0; d], vec![0.0; d], vec![0.0; 2 * d]);
    let mut t = 0.0;
    let mut steps = 0;
    loop {
        let total = rates(&cfg.potential, cfg.eps, &k, &mut x, &mut y, &mut w)?;
        let hold = holding_time(&mut rng, total);
        if t + hold > cfg.max_time {
            return Ok(HittingRecord { seed: cfg.seed, traj_index, hit: false, time: cfg.max_time, steps });
        }
        t += hold;
        jump(&mut k, choose(&mut rng, &w, total));
        steps += 1;
        if cfg.in_target(&k) {
            return Ok(HittingRecord { seed: cfg.seed, traj_index, hit: true, time: t, steps });
        }
    }
}

/// All trajectories of a run, ordered by index.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<HittingRecord>> {
    cfg.validate()?;
    let n = cfg.n_trajectories as u64;
    #[cfg(feature = "parallel")]
    let out = (0..n).into_par_iter().map(|i| simulate_trajectory(cfg, i)).collect();
    #[cfg(not(feature = "parallel"))]
    let out = (0..n).map(|i| simulate_trajectory(cfg, i)).collect();
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HittingStats {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n_censored: usize,
    pub median: f64,
    /// `mean * ln 2 / median`, close to 1 for exponential samples.
    pub exponentiality: f64,
}

pub fn mean_hitting_time(records: &[HittingRecord]) -> Result<HittingStats> {
    let mut times: Vec<f64> = records.iter().filter(|r| r.hit).map(|r| r.time).collect();
    let n_censored = records.len() - times.len();
    if times.is_empty() && !records.is_empty() {
        return Err(Error::AllCensored(records.len()));
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData(times.len()));
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median = if times.len().is_multiple_of(2) { 0.5 * (times[mid - 1] + times[mid]) } else { times[mid] };
    Ok(HittingStats {
        n: times.len(),
        mean,
        stderr: (var / n).sqrt(),
        n_censored,
        median,
        exponentiality: mean * std::f64::consts::LN_2 / median,
    })
}

/// Mean hitting time of the target from `cfg.start`, solving `-L T = 1` off
/// the target on `lattice` with jumps out of the box suppressed.
///
/// The system is symmetrized by the weights `exp(-f / eps)` so it becomes a
/// graph Laplacian, factored without cancellation.
pub fn exact_mean_hitting_time(cfg: &SimConfig, lattice: &LatticeBox) -> Result<f64> {
    cfg.validate()?;
    if lattice.dim != cfg.potential.dim || (lattice.eps - cfg.eps).abs() > 1e-12 * cfg.eps {
        return Err(Error::InvalidInput("lattice does not match the simulation".into()));
    }
    let start_x = cfg.start_point();
    let start = lattice.nearest_site(&start_x);
    let off_grid = lattice.site(start).iter().zip(&start_x).any(|(a, b)| (a - b).abs() > 1e-9 * cfg.eps);
    if off_grid {
        return Err(Error::InvalidInput("start is not a site of the box".into()));
    }
    let n = lattice.len();
    let d = lattice.dim;
    let eps = cfg.eps;
    let f: Vec<f64> = (0..n).map(|i| cfg.potential.eval(&lattice.site(i))).collect();
    let fmin = f.iter().copied().fold(f64::INFINITY, f64::min);
    let target: Vec<bool> = (0..n)
        .map(|i| {
            let x = lattice.site(i);
            let r2: f64 = x.iter().zip(&cfg.target_center).map(|(a, c)| (a - c).powi(2)).sum();
            r2 <= cfg.target_radius * cfg.target_radius
        })
        .collect();
    if !target.iter().any(|&t| t) {
        return Err(Error::InvalidInput("target contains no site of the box".into()));
    }
    let bw = lattice.stride(0).max(1);
    let mut band = Band::zeros(n, bw);
    let mut excess = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        if target[i] {
            excess[i] = 1.0;
            continue;
        }
        rhs[i] = (-(f[i] - fmin) / eps).exp();
        for k in 0..d {
            for sign in [1i8, -1] {
                let Some(j) = lattice.neighbor(i, k, sign) else { continue };
                let c = (-(f[i] + f[j] - 2.0 * fmin) / (2.0 * eps)).exp() / eps;
                if target[j] {
                    excess[i] += c;
                } else if sign > 0 {
                    band.add_upper(i, j, -c);
                }
            }
        }
    }
    let factor = BandedFactor::factor_laplacian(&band, &excess)
        .ok_or_else(|| Error::InvalidInput("hitting time system is singular".into()))?;
    factor.solve_in_place(&mut rhs);
    Ok(rhs[start])
}

/// Exponential holding time for a total jump rate.
pub fn holding_time(rng: &mut ChaCha8Rng, total_rate: f64) -> f64 {
    rng.sample::<f64, _>(Exp1) / total_rate
}

/// Occupation counts of the chain restricted to `lattice` (jumps leaving the
/// box are suppressed), sampled every `dt` up to `n_samples * dt`.
pub fn occupation_counts(
    p: &PotentialSpec,
    lattice: &LatticeBox,
    start_site: usize,
    seed: u64,
    dt: f64,
    n_samples: usize,
) -> Result<Vec<u64>> {
    if start_site >= lattice.len() || !(dt > 0.0) {
        return Err(Error::InvalidInput("bad start site or sampling step".into()));
    }
    let d = lattice.dim;
    let eps = lattice.eps;
    let mut rng = trajectory_rng(seed, 0);
    let mut counts = vec![0u64; lattice.len()];
    let mut site = start_site;
    let mut w = vec![0.0; 2 * d];
    let mut nb = vec![None; 2 * d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut t = 0.0;
    let mut next_sample = dt;
    let mut taken = 0;
    while taken < n_samples {
        lattice.site_into(site, &mut x);
        let fx = p.eval(&x);
        let mut total = 0.0;
        for axis in 0..d {
            for (s, sign) in [1i8, -1].into_iter().enumerate() {
                let j = 2 * axis + s;
                nb[j] = lattice.neighbor(site, axis, sign);
                w[j] = match nb[j] {
                    Some(n) => {
                        lattice.site_into(n, &mut y);
                        let exponent = -(p.eval(&y) - fx) / (2.0 * eps);
                        if exponent.abs() > EXP_CLAMP {
                            return Err(Error::RateOverflow { location: x.clone(), exponent });
                        }
                        exponent.exp() / eps
                    }
                    None => 0.0,
                };
                total += w[j];
            }
        }
        let hold = holding_time(&mut rng, total);
        t += hold;
        while next_sample <= t && taken < n_samples {
            counts[site] += 1;
            taken += 1;
            next_sample += dt;
        }
        site = nb[choose(&mut rng, &w, total)].expect("positive rate to an existing neighbor");
    }
    Ok(counts)
}
