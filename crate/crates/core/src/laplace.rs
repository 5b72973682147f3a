//! Gaussian and general-phase lattice sums: direct summation, the Poisson
//! leading term with an explicit bound on the remaining dual-lattice terms,
//! tail and odd-moment estimates.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Tail mass allowed beyond the summation radius, relative to the head.
const TAIL_RTOL: f64 = 1e-16;

/// `q(x) = x.Q x / 2` summed against `|x - x0|^{2m}` on `eps Z^d`.
#[derive(Debug, Clone)]
pub struct GaussianSumSpec {
    pub q: DMatrix<f64>,
    pub x0: Vec<f64>,
    pub m: u32,
    pub eps: f64,
}

struct Eigen {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl GaussianSumSpec {
    pub fn new(q: DMatrix<f64>, x0: Vec<f64>, m: u32, eps: f64) -> Result<Self> {
        let spec = GaussianSumSpec { q, x0, m, eps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn validate(&self) -> Result<()> {
        let d = self.q.nrows();
        if d == 0 || self.q.ncols() != d || self.x0.len() != d {
            return Err(Error::InvalidInput("Q must be square and match x0".into()));
        }
        if (&self.q - self.q.transpose()).abs().max() > 1e-12 * self.q.abs().max() {
            return Err(Error::InvalidInput("Q is not symmetric".into()));
        }
        if self.q.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("Q is not positive definite".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        Ok(())
    }

    fn eigen(&self) -> Eigen {
        let e = self.q.clone().symmetric_eigen();
        Eigen { values: e.eigenvalues.iter().copied().collect(), vectors: e.eigenvectors }
    }

    fn lambda_min(&self) -> f64 {
        self.eigen().values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn with_m(&self, m: u32) -> Self {
        GaussianSumSpec { m, ..self.clone() }
    }
}

/// `(2a - 1)!!` with `(-1)!! = 1`.
fn double_factorial_odd(a: u32) -> f64 {
    (1..=a).map(|j| (2 * j - 1) as f64).product()
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|j| j as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Visits every multi-index `a` with `|a| = m` in `d` slots.
fn for_compositions(m: u32, d: usize, visit: &mut impl FnMut(&[u32])) {
    fn rec(rest: u32, slot: usize, a: &mut Vec<u32>, visit: &mut impl FnMut(&[u32])) {
        if slot + 1 == a.len() {
            a[slot] = rest;
            visit(a);
            return;
        }
        for k in 0..=rest {
            a[slot] = k;
            rec(rest - k, slot + 1, a, visit);
        }
    }
    let mut a = vec![0; d];
    rec(m, 0, &mut a, visit);
}

fn multinomial(a: &[u32]) -> f64 {
    factorial(a.iter().sum()) / a.iter().map(|&k| factorial(k)).product::<f64>()
}

/// `int |y|^{2m} exp(-y.Q y / 2) dy` in the eigenbasis of `Q`.
fn gaussian_moment_integral(values: &[f64], m: u32) -> f64 {
    let d = values.len();
    let base: f64 = values.iter().map(|l| (2.0 * PI / l).sqrt()).product();
    if m == 0 {
        return base;
    }
    let mut total = 0.0;
    for_compositions(m, d, &mut |a| {
        let t: f64 = a
            .iter()
            .zip(values)
            .map(|(&k, &l)| double_factorial_odd(k) / l.powi(k as i32))
            .product();
        total += multinomial(a) * t;
    });
    base * total
}

/// `E|W|^j` for a standard normal `W`.
fn abs_normal_moment(j: u32) -> f64 {
    if j == 0 {
        return 1.0;
    }
    2f64.powf(j as f64 / 2.0) * gamma_half_integer(j + 1) / PI.sqrt()
}

/// `Gamma(n / 2)` for positive integers `n`.
fn gamma_half_integer(n: u32) -> f64 {
    if n.is_multiple_of(2) {
        factorial(n / 2 - 1)
    } else {
        // Gamma(k + 1/2) = (2k - 1)!! sqrt(pi) / 2^k
        let k = (n - 1) / 2;
        double_factorial_odd(k) * PI.sqrt() / 2f64.powi(k as i32)
    }
}

/// Bound on `|int z^{2a} exp(-l z^2 / 2 - i eta z) dz|`.
fn fourier_factor_bound(a: u32, l: f64, eta: f64) -> f64 {
    let t = eta / l.sqrt();
    let poly: f64 = (0..=2 * a)
        .map(|j| binomial(2 * a, j) * abs_normal_moment(j) * t.abs().powi((2 * a - j) as i32))
        .sum();
    l.powf(-(a as f64) - 0.5) * (2.0 * PI).sqrt() * (-0.5 * t * t).exp() * poly
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonResult {
    pub leading: f64,
    pub correction_bound: f64,
    /// Decay rate: the correction behaves like `exp(-gamma / eps)`.
    pub gamma: f64,
}

/// Leading term `eps^m int |y|^{2m} e^{-q(y)} dy` and an explicit bound on the
/// sum of all nonzero dual-lattice terms.
pub fn gaussian_sum_poisson(spec: &GaussianSumSpec) -> Result<PoissonResult> {
    spec.validate()?;
    let eig = spec.eigen();
    let d = spec.dim();
    let eps = spec.eps;
    let leading = eps.powi(spec.m as i32) * gaussian_moment_integral(&eig.values, spec.m);
    let lmax = eig.values.iter().copied().fold(0.0, f64::max);
    let gamma = 2.0 * PI * PI / lmax;

    // terms with 2 pi^2 |k|^2 / (eps lmax) > 400 are below e^{-400}
    let kmax = ((800.0 * lmax * eps / (2.0 * PI * PI)).sqrt().ceil() as i64) + 1;
    let width = (2 * kmax + 1) as usize;
    let total_k = width.pow(d as u32);
    let mut k = vec![0i64; d];
    let mut sum = 0.0;
    for idx in 0..total_k {
        let mut r = idx;
        for slot in k.iter_mut().rev() {
            *slot = (r % width) as i64 - kmax;
            r /= width;
        }
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        // dual frequency 2 pi k / sqrt(eps), rotated into the eigenbasis
        let kv = DVector::from_iterator(d, k.iter().map(|&v| v as f64));
        let eta = eig.vectors.transpose() * kv * (2.0 * PI / eps.sqrt());
        let mut term = 0.0;
        for_compositions(spec.m, d, &mut |a| {
            let prod: f64 = (0..d).map(|i| fourier_factor_bound(a[i], eig.values[i], eta[i])).product();
            term += multinomial(a) * prod;
        });
        sum += term;
    }
    // plus rounding in a compensated direct sum, so the bound also covers the computed value
    let rounding = 16.0 * f64::EPSILON * leading;
    Ok(PoissonResult { leading, correction_bound: eps.powi(spec.m as i32) * sum + rounding, gamma })
}

/// Relative tail bound beyond radius `r`: for `|x - x0| > r`,
/// `e^{-q/eps} <= e^{-lmin r^2 / (4 eps)} e^{-q/(2 eps)}`, and the halved
/// form sums to at most `2^{m + d/2}` times the head (up to the lattice correction).
fn tail_ratio(spec: &GaussianSumSpec, r: f64) -> Result<f64> {
    let lmin = spec.lambda_min();
    let half = GaussianSumSpec { q: spec.q.clone() * 0.5, ..spec.clone() };
    let ph = gaussian_sum_poisson(&half)?;
    let pf = gaussian_sum_poisson(spec)?;
    let ratio = (ph.leading + ph.correction_bound) / (pf.leading - pf.correction_bound).max(1e-300);
    Ok((-lmin * r * r / (4.0 * spec.eps)).exp() * ratio)
}

/// Smallest radius, at least `12 sqrt(eps / lmin)`, meeting the tail check.
pub fn default_radius(spec: &GaussianSumSpec) -> Result<f64> {
    let lmin = spec.lambda_min();
    let base = 12.0 * (spec.eps / lmin).sqrt();
    let r0 = tail_ratio(spec, 0.0)?;
    let needed = (4.0 * spec.eps / lmin * (r0 / TAIL_RTOL).ln().max(0.0)).sqrt();
    Ok(base.max(needed * (1.0 + 1e-9)))
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(self) -> f64 {
        self.s + self.c
    }
}

/// `eps^{d/2} sum_{x in eps Z^d, |x - x0| <= radius} g(x)`.
fn ball_sum(center: &[f64], radius: f64, eps: f64, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
    let d = center.len();
    let lo: Vec<i64> = center.iter().map(|c| ((c - radius) / eps).floor() as i64).collect();
    let hi: Vec<i64> = center.iter().map(|c| ((c + radius) / eps).ceil() as i64).collect();
    let mut k = lo.clone();
    let mut x = vec![0.0; d];
    let mut acc = Sum::default();
    let r2 = radius * radius;
    'outer: loop {
        let mut dist2 = 0.0;
        for i in 0..d {
            x[i] = k[i] as f64 * eps;
            dist2 += (x[i] - center[i]).powi(2);
        }
        if dist2 <= r2 {
            acc.add(g(&x));
        }
        for i in (0..d).rev() {
            if k[i] < hi[i] {
                k[i] += 1;
                continue 'outer;
            }
            k[i] = lo[i];
        }
        break;
    }
    eps.powf(d as f64 / 2.0) * acc.value()
}

fn moment_sum(spec: &GaussianSumSpec, power: f64, radius: f64) -> f64 {
    let q = &spec.q;
    let d = spec.dim();
    let x0 = &spec.x0;
    ball_sum(x0, radius, spec.eps, |x| {
        let y = DVector::from_iterator(d, x.iter().zip(x0).map(|(a, b)| a - b));
        let qv = 0.5 * y.dot(&(q * &y));
        let r2 = y.norm_squared();
        let w = if power == 0.0 { 1.0 } else { r2.powf(power / 2.0) };
        w * (-qv / spec.eps).exp()
    })
}

/// `eps^{d/2} sum |x - x0|^{2m} e^{-q(x - x0)/eps}` over the ball of `radius`
/// (default: [`default_radius`]).
pub fn gaussian_sum_direct(spec: &GaussianSumSpec, radius: Option<f64>) -> Result<f64> {
    spec.validate()?;
    let r = match radius {
        Some(r) => {
            if tail_ratio(spec, r)? > TAIL_RTOL {
                return Err(Error::RadiusTooSmall { radius: r });
            }
            r
        }
        None => default_radius(spec)?,
    };
    Ok(moment_sum(spec, 2.0 * spec.m as f64, r))
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub restricted: f64,
    pub full: f64,
    pub rel_diff: f64,
    /// Rigorous relative bound on the part outside the ball.
    pub bound: f64,
}

/// Compares the sum over the `delta` ball with the full sum.
pub fn tail_check(spec: &GaussianSumSpec, delta: f64) -> Result<TailCheck> {
    let restricted = moment_sum(spec, 2.0 * spec.m as f64, delta);
    let full = gaussian_sum_direct(spec, None)?;
    Ok(TailCheck {
        restricted,
        full,
        rel_diff: (full - restricted).abs() / full,
        bound: tail_ratio(spec, delta)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OddMoment {
    pub value: f64,
    pub bound: f64,
}

/// `eps^{d/2} sum |x - x0|^{m} e^{-q/eps}` for odd `m`, bounded by
/// Cauchy-Schwarz with the neighbouring even moments `m - 1` and `m + 1`.
pub fn odd_moment_bound(spec: &GaussianSumSpec, m_odd: u32) -> Result<OddMoment> {
    spec.validate()?;
    if m_odd.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("moment {m_odd} is not odd")));
    }
    let hi = spec.with_m(m_odd.div_ceil(2));
    let r = default_radius(&hi)?;
    let value = moment_sum(spec, m_odd as f64, r);
    let lower = moment_sum(spec, (m_odd - 1) as f64, r);
    let upper = moment_sum(spec, (m_odd + 1) as f64, r);
    let bound = (lower * upper).sqrt();
    debug_assert!(value <= bound * (1.0 + 1e-12));
    Ok(OddMoment { value, bound })
}

pub type PhaseFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A phase `phi` with a nondegenerate zero minimum at `x0`.
#[derive(Clone)]
pub struct PhaseSpec {
    pub phi: PhaseFn,
    pub x0: Vec<f64>,
    pub delta: f64,
    pub smoothness_k: u32,
    pub hess0: DMatrix<f64>,
}

impl std::fmt::Debug for PhaseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhaseSpec")
            .field("x0", &self.x0)
            .field("delta", &self.delta)
            .field("smoothness_k", &self.smoothness_k)
            .field("hess0", &self.hess0)
            .finish()
    }
}

impl PhaseSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.x0.len();
        if self.hess0.nrows() != d || self.hess0.ncols() != d {
            return Err(Error::InvalidInput("hess0 does not match x0".into()));
        }
        if !(3..=4).contains(&self.smoothness_k) {
            return Err(Error::InvalidInput("smoothness_k must be 3 or 4".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        let v0 = (self.phi)(&self.x0);
        if v0.abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("phi(x0) = {v0}, expected 0")));
        }
        if self.hess0.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("Hessian at x0 is not positive definite".into()));
        }
        // sample shells of the ball, 64 directions per radius in 1D/2D
        let dirs: Vec<Vec<f64>> = match d {
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..64)
                .map(|j| {
                    let a = 2.0 * PI * j as f64 / 64.0;
                    vec![a.cos(), a.sin()]
                })
                .collect(),
            _ => {
                let mut v = Vec::new();
                for i in 0..d {
                    for s in [1.0, -1.0] {
                        let mut e = vec![0.0; d];
                        e[i] = s;
                        v.push(e);
                    }
                }
                v
            }
        };
        for j in 1..=20 {
            let r = self.delta * j as f64 / 20.0;
            for u in &dirs {
                let x: Vec<f64> = self.x0.iter().zip(u).map(|(c, e)| c + r * e).collect();
                let v = (self.phi)(&x);
                if !(v > 0.0) {
                    return Err(Error::PhasePositivityViolated { point: x, value: v });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LaplaceSum {
    pub value: f64,
    pub leading: f64,
    pub rel_error: f64,
}

/// Direct sum of `|x - x0|^{2m} e^{-phi/eps}` over the `delta` ball against the
/// Gaussian leading term of the Hessian at `x0`.
pub fn laplace_sum_general(phase: &PhaseSpec, m: u32, eps: f64) -> Result<LaplaceSum> {
    phase.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let x0 = &phase.x0;
    let mut bad: Option<(Vec<f64>, f64)> = None;
    let value = ball_sum(x0, phase.delta, eps, |x| {
        let v = (phase.phi)(x);
        let r2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum();
        if v <= 0.0 && r2 > 1e-24 && bad.is_none() {
            bad = Some((x.to_vec(), v));
        }
        r2.powi(m as i32) * (-v / eps).exp()
    });
    if let Some((point, value)) = bad {
        return Err(Error::PhasePositivityViolated { point, value });
    }
    let values: Vec<f64> = phase.hess0.clone().symmetric_eigenvalues().iter().copied().collect();
    let leading = eps.powi(m as i32) * gaussian_moment_integral(&values, m);
    Ok(LaplaceSum { value, leading, rel_error: value / leading - 1.0 })
}
