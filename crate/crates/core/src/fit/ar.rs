//! Gap-aware AR(1) whitening.
//!
//! Observed rows are processed in time order within each segment. The first
//! row of a segment has variance `sigma^2 / (1 - rho^2)`; a later row whose
//! predecessor is `d` slots earlier is predicted by `r = rho^d` and keeps
//! innovation variance `sigma^2 c` with `c = (1 - r^2) / (1 - rho^2)`.
//! Dividing each innovation by `sqrt(c)` leaves independent errors with
//! variance `sigma^2 / w`, so every likelihood and conditional below is an
//! ordinary weighted regression on the transformed rows.

use crate::fit::design::DesignRow;

/// Rows that carry likelihood weight, in the layout the transform needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArRows {
    pub p: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub time: Vec<u32>,
    pub segment: Vec<usize>,
    sum_log_w: f64,
}

impl ArRows {
    /// Keeps rows with positive weight; zero-weight rows behave exactly as
    /// deleted observations.
    pub fn new(rows: &[DesignRow], p: usize) -> Self {
        let mut out = ArRows {
            p,
            x: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
            time: Vec::new(),
            segment: Vec::new(),
            sum_log_w: 0.0,
        };
        for r in rows.iter().filter(|r| r.weight > 0.0) {
            out.x.extend_from_slice(&r.x[..p]);
            out.y.push(r.y);
            out.w.push(r.weight);
            out.time.push(r.time_index);
            out.segment.push(r.segment);
            out.sum_log_w += r.weight.ln();
        }
        out
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Visit each transformed row as `(x_tilde, y_tilde, w)`; returns
    /// `sum log c`.
    pub fn transform(&self, rho: f64, mut visit: impl FnMut(&[f64], f64, f64)) -> f64 {
        let p = self.p;
        let one_m = 1.0 - rho * rho;
        let mut xt = vec![0.0; p];
        let mut sum_log_c = 0.0;
        for i in 0..self.n() {
            let first = i == 0 || self.segment[i] != self.segment[i - 1];
            let xi = self.row(i);
            if first {
                let s = one_m.sqrt();
                for k in 0..p {
                    xt[k] = xi[k] * s;
                }
                sum_log_c -= one_m.ln();
                visit(&xt, self.y[i] * s, self.w[i]);
            } else if rho == 0.0 {
                visit(xi, self.y[i], self.w[i]);
            } else {
                let gap = (self.time[i] - self.time[i - 1]) as i32;
                let r = rho.powi(gap);
                let c = (1.0 - r * r) / one_m;
                let s = 1.0 / c.sqrt();
                let xp = self.row(i - 1);
                for k in 0..p {
                    xt[k] = (xi[k] - r * xp[k]) * s;
                }
                sum_log_c += c.ln();
                visit(&xt, (self.y[i] - r * self.y[i - 1]) * s, self.w[i]);
            }
        }
        sum_log_c
    }

    pub fn suff(&self, rho: f64) -> Suff {
        let p = self.p;
        let mut xtwx = vec![0.0; p * p];
        let mut xtwy = vec![0.0; p];
        let mut ytwy = 0.0;
        let sum_log_c = self.transform(rho, |x, y, w| {
            for a in 0..p {
                let wa = w * x[a];
                xtwy[a] += wa * y;
                for b in a..p {
                    xtwx[a * p + b] += wa * x[b];
                }
            }
            ytwy += w * y * y;
        });
        for a in 0..p {
            for b in 0..a {
                xtwx[a * p + b] = xtwx[b * p + a];
            }
        }
        Suff {
            p,
            n: self.n(),
            xtwx,
            xtwy,
            ytwy,
            sum_log_c,
            sum_log_w: self.sum_log_w,
        }
    }

    /// Derivative in rho of `-n/2 log S(rho) - 1/2 sum log c(rho)` at fixed
    /// coefficients, where `S` is the whitened weighted RSS.
    pub fn profile_slope(&self, beta: &[f64], rho: f64) -> f64 {
        let one_m = 1.0 - rho * rho;
        let (mut s, mut ds, mut dlogc) = (0.0, 0.0, 0.0);
        let mut e_prev = 0.0;
        for i in 0..self.n() {
            let e = self.y[i] - dot(self.row(i), beta);
            let w = self.w[i];
            let first = i == 0 || self.segment[i] != self.segment[i - 1];
            if first {
                s += w * e * e * one_m;
                ds += w * e * e * (-2.0 * rho);
                dlogc += 2.0 * rho / one_m;
            } else {
                let gap = (self.time[i] - self.time[i - 1]) as i32;
                let r = rho.powi(gap);
                let dr = gap as f64 * rho.powi(gap - 1);
                let c = (1.0 - r * r) / one_m;
                let dc = (-2.0 * r * dr * one_m + (1.0 - r * r) * 2.0 * rho) / (one_m * one_m);
                let u = e - r * e_prev;
                s += w * u * u / c;
                ds += w * (-2.0 * u * dr * e_prev * c - u * u * dc) / (c * c);
                dlogc += dc / c;
            }
            e_prev = e;
        }
        -0.5 * self.n() as f64 * ds / s - 0.5 * dlogc
    }

    /// Lag-1 autocorrelation of `y - X beta` over consecutive rows within
    /// segments; starting value for the rho iteration.
    pub fn residual_lag1(&self, beta: &[f64]) -> f64 {
        let e: Vec<f64> = (0..self.n())
            .map(|i| self.y[i] - dot(self.row(i), beta))
            .collect();
        let m = e.iter().sum::<f64>() / e.len().max(1) as f64;
        let mut num = 0.0;
        let den: f64 = e.iter().map(|v| (v - m) * (v - m)).sum();
        for i in 1..e.len() {
            if self.segment[i] == self.segment[i - 1] {
                num += (e[i] - m) * (e[i - 1] - m);
            }
        }
        if den > 0.0 {
            (num / den).clamp(-0.9, 0.9)
        } else {
            0.0
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted cross-products of the whitened rows at one rho.
#[derive(Debug, Clone, PartialEq)]
pub struct Suff {
    pub p: usize,
    pub n: usize,
    pub xtwx: Vec<f64>,
    pub xtwy: Vec<f64>,
    pub ytwy: f64,
    pub sum_log_c: f64,
    pub sum_log_w: f64,
}

impl Suff {
    /// Weighted residual sum of squares of the whitened rows at `beta`.
    pub fn rss(&self, beta: &[f64]) -> f64 {
        let p = self.p;
        let mut quad = 0.0;
        for a in 0..p {
            for b in 0..p {
                quad += beta[a] * self.xtwx[a * p + b] * beta[b];
            }
        }
        (self.ytwy - 2.0 * dot(beta, &self.xtwy) + quad).max(0.0)
    }

    /// Gaussian log-likelihood given the whitened RSS.
    pub fn loglik_rss(&self, rss: f64, sigma: f64) -> f64 {
        let n = self.n as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * sigma.ln() - 0.5 * self.sum_log_c
            + 0.5 * self.sum_log_w
            - rss / (2.0 * sigma * sigma)
    }

    pub fn loglik(&self, beta: &[f64], sigma: f64) -> f64 {
        self.loglik_rss(self.rss(beta), sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(ts: &[u32], ys: &[f64], seg: &[usize]) -> Vec<DesignRow> {
        ts.iter()
            .zip(ys)
            .zip(seg)
            .map(|((t, y), s)| DesignRow {
                x: vec![1.0, (*t % 2) as f64],
                y: *y,
                weight: 1.0,
                time_index: *t,
                segment: *s,
            })
            .collect()
    }

    /// Dense oracle: -0.5 log|Sigma| - 0.5 e' Sigma^-1 e with
    /// Sigma_ij = sigma^2 rho^|t_i - t_j| / (1 - rho^2) inside a segment.
    fn dense_loglik(ts: &[u32], seg: &[usize], e: &[f64], rho: f64, sigma: f64) -> f64 {
        let n = ts.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if seg[i] == seg[j] {
                    let d = (ts[i] as i32 - ts[j] as i32).abs();
                    m[(i, j)] = sigma * sigma * rho.powi(d) / (1.0 - rho * rho);
                }
            }
        }
        let ch = m.clone().cholesky().unwrap();
        let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let ev = nalgebra::DVector::from_column_slice(e);
        let q = ev.dot(&ch.solve(&ev));
        -0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * q
    }

    #[test]
    fn matches_dense_likelihood_with_gaps_and_segments() {
        let ts = [0, 1, 3, 4, 7, 8, 9, 12];
        let seg = [0, 0, 0, 0, 1, 1, 1, 1];
        let ys = [0.3, -0.2, 1.1, 0.4, -0.7, 0.9, 0.1, 0.5];
        let beta = [0.2, -0.1];
        let r = ArRows::new(&rows(&ts, &ys, &seg), 2);
        for &rho in &[-0.6, 0.0, 0.3, 0.85] {
            let s = r.suff(rho);
            let e: Vec<f64> = (0..ts.len()).map(|i| ys[i] - dot(r.row(i), &beta)).collect();
            let got = s.loglik(&beta, 1.3);
            let want = dense_loglik(&ts, &seg, &e, rho, 1.3);
            assert!((got - want).abs() < 1e-10, "rho {rho}: {got} vs {want}");
        }
    }

    #[test]
    fn profile_slope_matches_finite_difference() {
        let ts = [0, 1, 3, 4, 7, 8, 9, 12];
        let seg = [0, 0, 0, 0, 1, 1, 1, 1];
        let ys = [0.3, -0.2, 1.1, 0.4, -0.7, 0.9, 0.1, 0.5];
        let beta = [0.2, -0.1];
        let r = ArRows::new(&rows(&ts, &ys, &seg), 2);
        let f = |rho: f64| {
            let s = r.suff(rho);
            -0.5 * s.n as f64 * s.rss(&beta).ln() - 0.5 * s.sum_log_c
        };
        for &rho in &[-0.7, -0.1, 0.2, 0.6, 0.95] {
            let h = 1e-6;
            let fd = (f(rho + h) - f(rho - h)) / (2.0 * h);
            let an = r.profile_slope(&beta, rho);
            assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "rho {rho}: {fd} vs {an}");
        }
    }

    #[test]
    fn zero_weight_rows_equal_deletion() {
        let ts = [0, 1, 2, 3, 4];
        let seg = [0; 5];
        let ys = [0.3, -0.2, 1.1, 0.4, -0.7];
        let mut with_zero = rows(&ts, &ys, &seg);
        with_zero[2].weight = 0.0;
        let mut deleted = rows(&ts, &ys, &seg);
        deleted.remove(2);
        let a = ArRows::new(&with_zero, 2).suff(0.5);
        let b = ArRows::new(&deleted, 2).suff(0.5);
        assert_eq!(a, b);
    }
}
