use serde::Serialize;

use crate::data::OutcomeSeries;
use crate::error::{Error, Result};
use crate::fit::ar::{ArRows, Suff};
use crate::fit::design::{build_design, Design};
use crate::fit::linalg::Spd;
use crate::fit::{ErrorModel, ModelSpec, RhoEstimator};
use crate::stats::{golden_max, t_two_sided_p};

pub const RHO_BOUND: f64 = 0.999;
const RHO_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlsFit {
    pub participant_id: String,
    pub reference: String,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// Row-major covariance of `coef`.
    pub cov: Vec<f64>,
    pub se: Vec<f64>,
    pub sigma: f64,
    pub rho: f64,
    pub df: usize,
    pub n_obs: usize,
    pub iterations: usize,
    pub rho_trace: Vec<f64>,
    pub loglik: f64,
    pub notes: Vec<String>,
}

impl GlsFit {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn delta(&self) -> f64 {
        self.coef[1]
    }

    pub fn delta_se(&self) -> f64 {
        self.se[1]
    }

    pub fn delta_t(&self) -> f64 {
        self.coef[1] / self.se[1]
    }

    pub fn delta_p(&self) -> f64 {
        t_two_sided_p(self.delta_t(), self.df as f64)
    }
}

struct Solved {
    beta: Vec<f64>,
    xtwx_inv: Vec<f64>,
    suff: Suff,
}

fn solve_at(rows: &ArRows, rho: f64) -> Result<Solved> {
    let suff = rows.suff(rho);
    let spd = Spd::new(&suff.xtwx, rows.p, "GLS normal equations")?;
    Ok(Solved {
        beta: spd.solve(&suff.xtwy),
        xtwx_inv: spd.inverse(),
        suff,
    })
}

/// Profile log-likelihood of rho at fixed coefficients, sigma^2 = S / n.
fn profile(rows: &ArRows, beta: &[f64], rho: f64) -> f64 {
    let s = rows.suff(rho);
    let n = s.n as f64;
    -0.5 * n * (s.rss(beta) / n).max(f64::MIN_POSITIVE).ln() - 0.5 * s.sum_log_c
}

/// Restricted log-likelihood of rho with coefficients and sigma profiled out.
fn reml_profile(rows: &ArRows, rho: f64) -> f64 {
    let s = rows.suff(rho);
    let Some(f) = Spd::factor(&s.xtwx, rows.p) else {
        return f64::NEG_INFINITY;
    };
    let beta = f.solve(&s.xtwy);
    let dof = (s.n - rows.p) as f64;
    -0.5 * dof * s.rss(&beta).max(f64::MIN_POSITIVE).ln() - 0.5 * s.sum_log_c - 0.5 * f.log_det()
}

/// Conditional maximizer of the profile likelihood: golden-section search
/// locates the peak, then bisection on the analytic slope refines it below
/// the resolution golden-section can reach on a flat objective.
fn rho_step(rows: &ArRows, beta: &[f64]) -> f64 {
    let rough = golden_max(|r| profile(rows, beta, r), -RHO_BOUND, RHO_BOUND, 1e-7);
    let h = 1e-4;
    let mut lo = (rough - h).max(-RHO_BOUND);
    let mut hi = (rough + h).min(RHO_BOUND);
    let slope = |r: f64| rows.profile_slope(beta, r);
    if !(slope(lo) > 0.0 && slope(hi) < 0.0) {
        return rough;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn finish(design: &Design, participant_id: &str, rows: &ArRows, rho: f64, trace: Vec<f64>) -> Result<GlsFit> {
    let p = rows.p;
    let n = rows.n();
    let sol = solve_at(rows, rho)?;
    let rss = sol.suff.rss(&sol.beta);
    let df = n - p;
    let s2 = rss / df as f64;
    let cov: Vec<f64> = sol.xtwx_inv.iter().map(|v| v * s2).collect();
    let se = (0..p).map(|j| cov[j * p + j].sqrt()).collect();
    let sigma_ml = (rss / n as f64).sqrt();
    Ok(GlsFit {
        participant_id: participant_id.to_string(),
        reference: design.reference.clone(),
        names: design.names(),
        loglik: sol.suff.loglik_rss(rss, sigma_ml),
        coef: sol.beta,
        cov,
        se,
        sigma: s2.sqrt(),
        rho,
        df,
        n_obs: n,
        iterations: trace.len(),
        rho_trace: trace,
        notes: design.notes.clone(),
    })
}

fn prepare(series: &OutcomeSeries, spec: &ModelSpec) -> Result<(Design, ArRows)> {
    spec.validate()?;
    let design = build_design(series, spec)?;
    let rows = ArRows::new(&design.rows, design.columns.len());
    if rows.n() <= rows.p {
        return Err(Error::Singular(format!(
            "{} usable measurements for {} coefficients",
            rows.n(),
            rows.p
        )));
    }
    Ok((design, rows))
}

/// Weighted least squares on the whitened rows with rho held fixed.
pub fn fit_gls_fixed_rho(series: &OutcomeSeries, spec: &ModelSpec, rho: f64) -> Result<GlsFit> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let (design, rows) = prepare(series, spec)?;
    finish(&design, &series.participant_id, &rows, rho, Vec::new())
}

/// Closed-form fit. For iid errors this is weighted least squares. For
/// AR(1) errors under the default ML criterion, GLS and a profile-likelihood
/// rho step alternate until rho moves by less than 1e-8; under REML the
/// restricted profile is maximized directly.
pub fn fit_gls(series: &OutcomeSeries, spec: &ModelSpec) -> Result<GlsFit> {
    let (design, rows) = prepare(series, spec)?;
    if spec.error_model == ErrorModel::Iid {
        return finish(&design, &series.participant_id, &rows, 0.0, Vec::new());
    }
    if spec.rho_estimator == RhoEstimator::Reml {
        let rho = golden_max(|r| reml_profile(&rows, r), -RHO_BOUND, RHO_BOUND, 1e-10);
        return finish(&design, &series.participant_id, &rows, rho, vec![rho]);
    }
    let start = solve_at(&rows, 0.0)?;
    let mut rho = rows.residual_lag1(&start.beta);
    let mut trace = vec![rho];
    for _ in 0..MAX_ITER {
        let beta = solve_at(&rows, rho)?.beta;
        let next = rho_step(&rows, &beta);
        trace.push(next);
        let moved = (next - rho).abs();
        rho = next;
        if moved < RHO_TOL {
            return finish(&design, &series.participant_id, &rows, rho, trace);
        }
    }
    let tail = trace[trace.len().saturating_sub(10)..].to_vec();
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        trace: tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Measurement;
    use crate::protocol::TrialProtocol;
    use crate::sequences::TreatmentSequence;
    use crate::simulate::{simulate_individual, ArScope, GenerativeParams, MissingnessSpec};

    fn series(seq: &str, m: u32, f: impl Fn(usize, bool) -> f64) -> OutcomeSeries {
        let mut out = Vec::new();
        for (p, tr) in seq.chars().enumerate() {
            for j in 0..m {
                let t = p as u32 * m + j;
                out.push(Measurement {
                    participant_id: "P".into(),
                    block: p as u32 / 2 + 1,
                    period: p as u32 % 2 + 1,
                    within_period_index: j + 1,
                    time_index: t,
                    treatment_id: tr.to_string(),
                    value: Some(f(t as usize, tr == 'B')),
                    weight: 1.0,
                });
            }
        }
        OutcomeSeries::new("P", out)
    }

    #[test]
    fn noiseless_recovers_effect_exactly() {
        let s = series("ABBAAB", 4, |_, b| 1.0 + if b { 2.0 } else { 0.0 });
        let f = fit_gls(&s, &ModelSpec::iid()).unwrap();
        assert!((f.delta() - 2.0).abs() < 1e-12);
        assert!((f.coef[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_zero_rho_reproduces_iid() {
        let s = series("ABBA", 5, |t, b| ((t * 7919) % 13) as f64 * 0.1 + if b { 0.5 } else { 0.0 });
        let a = fit_gls(&s, &ModelSpec::iid()).unwrap();
        let b = fit_gls_fixed_rho(&s, &ModelSpec::ar1(), 0.0).unwrap();
        assert_eq!(a.coef, b.coef);
        assert_eq!(a.se, b.se);
    }

    #[test]
    fn ar1_iteration_converges_and_is_stationary() {
        let p = TrialProtocol::two_arm("A", "B", 1, 2, 7, 50);
        let seq = TreatmentSequence::parse("AB");
        let mut g = GenerativeParams::new(0.0, 1.0, 1.0);
        g.rho = 0.6;
        g.ar_scope = ArScope::Continuous;
        let mut p = p;
        p.washout = crate::protocol::WashoutPolicy::none();
        let s = simulate_individual(&p, "P", &seq, &g, &MissingnessSpec::None, 11).unwrap();
        let spec = ModelSpec {
            ar_scope: ArScope::Continuous,
            ..ModelSpec::ar1()
        };
        let f = fit_gls(&s, &spec).unwrap();
        assert!(f.iterations < MAX_ITER);
        // the fitted rho maximizes the full profile likelihood
        let rows = ArRows::new(&build_design(&s, &spec).unwrap().rows, 2);
        let at = |r: f64| {
            let sol = solve_at(&rows, r).unwrap();
            profile(&rows, &sol.beta, r)
        };
        assert!(at(f.rho) >= at(f.rho + 1e-3) && at(f.rho) >= at(f.rho - 1e-3));
    }

    #[test]
    fn reml_pulls_rho_away_from_zero() {
        let mut p = TrialProtocol::two_arm("A", "B", 1, 2, 7, 25);
        p.washout = crate::protocol::WashoutPolicy::none();
        let seq = TreatmentSequence::parse("AB");
        let mut g = GenerativeParams::new(0.0, 1.0, 1.0);
        g.rho = 0.7;
        g.ar_scope = ArScope::Continuous;
        let ml = ModelSpec {
            ar_scope: ArScope::Continuous,
            ..ModelSpec::ar1()
        };
        let reml = ModelSpec {
            rho_estimator: RhoEstimator::Reml,
            ..ml.clone()
        };
        let (mut a, mut b) = (0.0, 0.0);
        for seed in 0..50 {
            let s = simulate_individual(&p, "P", &seq, &g, &MissingnessSpec::None, seed).unwrap();
            a += fit_gls(&s, &ml).unwrap().rho;
            b += fit_gls(&s, &reml).unwrap().rho;
        }
        assert!(b > a, "reml {b} ml {a}");
    }

    #[test]
    fn singular_carryover_is_reported() {
        // lag covering the whole period makes carryover[A->B] equal to X
        let s = series("AB", 3, |t, _| t as f64);
        let spec = ModelSpec {
            carryover: crate::fit::CarryoverModel::TransitionTerms { lag: 3 },
            ..ModelSpec::iid()
        };
        assert!(matches!(fit_gls(&s, &spec), Err(Error::Singular(_))));
    }
}
