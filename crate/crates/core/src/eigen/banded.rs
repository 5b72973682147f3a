//! Banded symmetric LDL^T factorizations.
//!
//! Two variants share the same factor layout. `factor_laplacian` handles
//! weighted graph Laplacians plus a nonnegative diagonal excess: off-diagonal
//! magnitudes and excesses are updated separately so every pivot is a sum of
//! nonnegative terms, which keeps relative accuracy when the conductances
//! span hundreds of orders of magnitude. `factor_spd` is the textbook
//! elimination for a general positive definite band.

/// Unit lower triangular `L` (stored by column) and diagonal `D`.
#[derive(Debug, Clone)]
pub struct BandedFactor {
    n: usize,
    bw: usize,
    d: Vec<f64>,
    /// `L[p + t, p]` at `p * bw + t - 1`.
    l: Vec<f64>,
}

/// Symmetric band matrix given by its strictly upper band and its diagonal.
#[derive(Debug, Clone)]
pub struct Band {
    pub n: usize,
    pub bw: usize,
    /// Entry `(i, i + t)` at `i * bw + t - 1`.
    pub upper: Vec<f64>,
    pub diag: Vec<f64>,
}

impl Band {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Band { n, bw, upper: vec![0.0; n * bw], diag: vec![0.0; n] }
    }

    pub fn add_upper(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j > i && j - i <= self.bw);
        self.upper[i * self.bw + (j - i) - 1] += v;
    }
}

impl BandedFactor {
    /// Factor `L_c + diag(excess)` where `L_c` is the graph Laplacian with
    /// conductances `-band.upper` (entries must be `<= 0`); `band.diag` is
    /// ignored. Fails if a pivot is not positive.
    pub fn factor_laplacian(band: &Band, excess: &[f64]) -> Option<Self> {
        let (n, bw) = (band.n, band.bw);
        let mut off: Vec<f64> = band.upper.iter().map(|v| -v).collect();
        let mut ex = excess.to_vec();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n * bw];
        for p in 0..n {
            let reach = bw.min(n - 1 - p);
            let row = p * bw;
            let piv = ex[p] + off[row..row + reach].iter().sum::<f64>();
            if !(piv > 0.0) || !piv.is_finite() {
                return None;
            }
            d[p] = piv;
            for t in 1..=reach {
                let a = off[row + t - 1];
                if a == 0.0 {
                    continue;
                }
                let i = p + t;
                // ratios first: a * ex[p] alone can underflow
                ex[i] += a * (ex[p] / piv);
                for u in t + 1..=reach {
                    let b = off[row + u - 1];
                    if b != 0.0 {
                        off[i * bw + (u - t) - 1] += a * (b / piv);
                    }
                }
                l[row + t - 1] = -a / piv;
            }
        }
        Some(BandedFactor { n, bw, d, l })
    }

    /// Plain LDL^T of a positive definite band. Fails on a nonpositive pivot.
    pub fn factor_spd(band: &Band) -> Option<Self> {
        let (n, bw) = (band.n, band.bw);
        let mut up = band.upper.clone();
        let mut diag = band.diag.clone();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n * bw];
        for p in 0..n {
            let reach = bw.min(n - 1 - p);
            let row = p * bw;
            let piv = diag[p];
            if !(piv > 0.0) || !piv.is_finite() {
                return None;
            }
            d[p] = piv;
            for t in 1..=reach {
                let a = up[row + t - 1];
                if a == 0.0 {
                    continue;
                }
                let i = p + t;
                let li = a / piv;
                diag[i] -= li * a;
                for u in t + 1..=reach {
                    let b = up[row + u - 1];
                    if b != 0.0 {
                        up[i * bw + (u - t) - 1] -= li * b;
                    }
                }
                l[row + t - 1] = li;
            }
        }
        Some(BandedFactor { n, bw, d, l })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        for p in 0..n {
            let xp = x[p];
            if xp != 0.0 {
                let reach = bw.min(n - 1 - p);
                for t in 1..=reach {
                    x[p + t] -= self.l[p * bw + t - 1] * xp;
                }
            }
        }
        for p in 0..n {
            x[p] /= self.d[p];
        }
        for p in (0..n).rev() {
            let reach = bw.min(n - 1 - p);
            let mut acc = x[p];
            for t in 1..=reach {
                acc -= self.l[p * bw + t - 1] * x[p + t];
            }
            x[p] = acc;
        }
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}
