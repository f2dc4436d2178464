//! Metropolis-within-Gibbs sampler for a set of units (individual trials)
//! sharing one design layout.
//!
//! Every coefficient column, the AR coefficient, and the residual scale has a
//! pooling regime. Coefficients get blocked conjugate normal updates (unit-
//! level columns per unit, shared columns jointly), random-effect means are
//! conjugate, random-effect sds and residual scales are slice-sampled on the
//! log scale, and rho moves by a reflected random-walk Metropolis step.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::ar::{ArRows, Suff};
use crate::fit::gls::RHO_BOUND;
use crate::fit::linalg::Spd;
use crate::fit::{inverse_gamma_match, HalfNormalPrior, McmcSettings, NormalPrior, SigmaUpdate};
use crate::mcmc::{slice_sample, Draws};
use crate::rng::{std_normal, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CoefRegime {
    Unrelated(NormalPrior),
    Common(NormalPrior),
    /// Population normal; `fixed_sd` pins the sd instead of sampling it.
    Random {
        mean: NormalPrior,
        sd_scale: f64,
        fixed_sd: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ScaleRegime {
    /// Known value shared by every unit; not sampled or reported.
    Fixed(f64),
    Unrelated,
    Common,
    /// Normal random effect on `atanh(rho)` or `log(sigma)`.
    Random { mean: NormalPrior, sd_scale: f64 },
}

pub(crate) struct Unit {
    pub id: String,
    pub rows: ArRows,
    pub z: f64,
}

pub(crate) struct EngineSpec {
    pub columns: Vec<String>,
    pub coef: Vec<CoefRegime>,
    /// Column whose random-effect mean regresses on the unit covariate,
    /// with the prior on the slope.
    pub subgroup: Option<(usize, NormalPrior)>,
    /// `None` for independent errors.
    pub rho: Option<ScaleRegime>,
    pub sigma: ScaleRegime,
    pub sigma_prior: HalfNormalPrior,
    pub sigma_update: SigmaUpdate,
    pub mcmc: McmcSettings,
    /// Suffix per-unit parameter names with `[id]`.
    pub label_units: bool,
}

pub(crate) struct EngineOutput {
    pub draws: Draws,
    pub rho_accept: Option<f64>,
}

struct State {
    beta: Vec<Vec<f64>>,
    mu: Vec<f64>,
    tau: Vec<f64>,
    slope: f64,
    sigma: Vec<f64>,
    sig_mu: f64,
    sig_tau: f64,
    rho: Vec<f64>,
    rho_mu: f64,
    rho_tau: f64,
    suff: Vec<Suff>,
}

fn reflect(mut x: f64) -> f64 {
    loop {
        if x > RHO_BOUND {
            x = 2.0 * RHO_BOUND - x;
        } else if x < -RHO_BOUND {
            x = -2.0 * RHO_BOUND - x;
        } else {
            return x;
        }
    }
}

/// Slice update of a standard deviation with a half-normal prior, given
/// `n` normal residuals with sum of squares `ss`; works on `log sd`.
fn update_sd<R: Rng + ?Sized>(rng: &mut R, current: f64, n: f64, ss: f64, scale: f64) -> f64 {
    let u0 = current.max(1e-300).ln();
    let inv_s2 = 1.0 / (scale * scale);
    let u = slice_sample(
        rng,
        u0,
        |u| -(n - 1.0) * u - 0.5 * ss * (-2.0 * u).exp() - 0.5 * (2.0 * u).exp() * inv_s2,
        1.0,
    );
    u.exp()
}

/// Conjugate draw of `(mean, slope)` for values `v_i ~ N(mean + slope z_i, tau^2)`;
/// the slope stays fixed at 0 when `slope_prior` is `None`.
fn update_mean<R: Rng + ?Sized>(
    rng: &mut R,
    v: &[f64],
    z: &[f64],
    tau: f64,
    mean_prior: NormalPrior,
    slope_prior: Option<NormalPrior>,
) -> (f64, f64) {
    let t2 = tau * tau;
    let pm = 1.0 / (mean_prior.sd * mean_prior.sd);
    match slope_prior {
        None => {
            let prec = v.len() as f64 / t2 + pm;
            let m = (v.iter().sum::<f64>() / t2 + mean_prior.mean * pm) / prec;
            (m + std_normal(rng) / prec.sqrt(), 0.0)
        }
        Some(sp) => {
            let ps = 1.0 / (sp.sd * sp.sd);
            let (mut sz, mut szz, mut sv, mut szv) = (0.0, 0.0, 0.0, 0.0);
            for (vi, zi) in v.iter().zip(z) {
                sz += zi;
                szz += zi * zi;
                sv += vi;
                szv += zi * vi;
            }
            let a = [v.len() as f64 / t2 + pm, sz / t2, sz / t2, szz / t2 + ps];
            let b = [sv / t2 + mean_prior.mean * pm, szv / t2 + sp.mean * ps];
            let d = Spd::factor(&a, 2).expect("prior keeps the 2x2 system positive definite").draw(rng, &b);
            (d[0], d[1])
        }
    }
}

struct Layout {
    p: usize,
    local: Vec<usize>,
    common: Vec<usize>,
}

impl Layout {
    fn new(spec: &EngineSpec) -> Self {
        let mut local = Vec::new();
        let mut common = Vec::new();
        for (j, r) in spec.coef.iter().enumerate() {
            match r {
                CoefRegime::Common(_) => common.push(j),
                _ => local.push(j),
            }
        }
        Layout {
            p: spec.coef.len(),
            local,
            common,
        }
    }
}

fn unit_name(base: &str, id: &str, label: bool) -> String {
    if label {
        format!("{base}[{id}]")
    } else {
        base.to_string()
    }
}

fn scale_names(out: &mut Vec<String>, regime: ScaleRegime, base: &str, link: &str, units: &[Unit], label: bool) {
    match regime {
        ScaleRegime::Fixed(_) => {}
        ScaleRegime::Common => out.push(base.to_string()),
        ScaleRegime::Unrelated => out.extend(units.iter().map(|u| unit_name(base, &u.id, label))),
        ScaleRegime::Random { .. } => {
            out.push(format!("mu_{link}_{base}"));
            out.push(format!("sd_{link}_{base}"));
            out.extend(units.iter().map(|u| unit_name(base, &u.id, label)));
        }
    }
}

pub(crate) fn parameter_names(spec: &EngineSpec, units: &[Unit]) -> Vec<String> {
    let label = spec.label_units;
    let mut out = Vec::new();
    for (j, r) in spec.coef.iter().enumerate() {
        let base = &spec.columns[j];
        match r {
            CoefRegime::Common(_) => out.push(base.clone()),
            CoefRegime::Unrelated(_) => out.extend(units.iter().map(|u| unit_name(base, &u.id, label))),
            CoefRegime::Random { fixed_sd, .. } => {
                if matches!(spec.subgroup, Some((k, _)) if k == j) {
                    out.push(format!("{base}1"));
                    out.push(format!("{base}2"));
                } else {
                    out.push(base.clone());
                }
                if fixed_sd.is_none() {
                    out.push(format!("sd_{base}"));
                }
                out.extend(units.iter().map(|u| unit_name(base, &u.id, label)));
            }
        }
    }
    scale_names(&mut out, spec.sigma, "sigma", "log", units, label);
    if let Some(r) = spec.rho {
        scale_names(&mut out, r, "rho", "atanh", units, label);
    }
    out
}

fn record(spec: &EngineSpec, st: &State, out: &mut Vec<f64>) {
    for (j, r) in spec.coef.iter().enumerate() {
        match r {
            CoefRegime::Common(_) => out.push(st.beta[0][j]),
            CoefRegime::Unrelated(_) => out.extend(st.beta.iter().map(|b| b[j])),
            CoefRegime::Random { fixed_sd, .. } => {
                out.push(st.mu[j]);
                if matches!(spec.subgroup, Some((k, _)) if k == j) {
                    out.push(st.slope);
                }
                if fixed_sd.is_none() {
                    out.push(st.tau[j]);
                }
                out.extend(st.beta.iter().map(|b| b[j]));
            }
        }
    }
    let scale = |out: &mut Vec<f64>, regime: ScaleRegime, v: &[f64], m: f64, t: f64| match regime {
        ScaleRegime::Fixed(_) => {}
        ScaleRegime::Common => out.push(v[0]),
        ScaleRegime::Unrelated => out.extend_from_slice(v),
        ScaleRegime::Random { .. } => {
            out.push(m);
            out.push(t);
            out.extend_from_slice(v);
        }
    };
    scale(out, spec.sigma, &st.sigma, st.sig_mu, st.sig_tau);
    if let Some(r) = spec.rho {
        scale(out, r, &st.rho, st.rho_mu, st.rho_tau);
    }
}

fn init<R: Rng + ?Sized>(rng: &mut R, spec: &EngineSpec, units: &[Unit], lay: &Layout) -> State {
    let p = lay.p;
    let n_units = units.len();
    let mut beta = Vec::with_capacity(n_units);
    let mut resid_sd = Vec::with_capacity(n_units);
    for u in units {
        let s = u.rows.suff(0.0);
        let trace: f64 = (0..p).map(|j| s.xtwx[j * p + j]).sum();
        let ridge = 1e-8 * (trace / p as f64 + 1.0);
        let mut a = s.xtwx.clone();
        for j in 0..p {
            a[j * p + j] += ridge;
        }
        let mut b = Spd::factor(&a, p).map_or(vec![0.0; p], |f| f.solve(&s.xtwy));
        let sd = if s.n > p {
            (s.rss(&b) / (s.n - p) as f64).sqrt().max(1e-3)
        } else {
            1.0
        };
        let jitter = sd / (s.n.max(1) as f64).sqrt();
        for v in b.iter_mut() {
            *v += 2.0 * jitter * std_normal(rng);
        }
        beta.push(b);
        resid_sd.push(sd);
    }
    let mut mu = vec![0.0; p];
    let mut tau = vec![1.0; p];
    for (j, r) in spec.coef.iter().enumerate() {
        let col: Vec<f64> = beta.iter().map(|b| b[j]).collect();
        let m = col.iter().sum::<f64>() / n_units as f64;
        match r {
            CoefRegime::Common(_) => beta.iter_mut().for_each(|b| b[j] = m),
            CoefRegime::Random { sd_scale, fixed_sd, .. } => {
                mu[j] = m;
                let sd = if n_units > 1 { crate::stats::sd(&col) } else { 0.0 };
                tau[j] = fixed_sd.unwrap_or(sd.max(0.1 * sd_scale) * (0.3 * std_normal(rng)).exp());
            }
            CoefRegime::Unrelated(_) => {}
        }
    }
    let sig0 = resid_sd.iter().sum::<f64>() / n_units as f64;
    let mut sigma: Vec<f64> = resid_sd.iter().map(|s| s * (0.3 * std_normal(rng)).exp()).collect();
    match spec.sigma {
        ScaleRegime::Common => {
            let s = sig0 * (0.3 * std_normal(rng)).exp();
            sigma.iter_mut().for_each(|v| *v = s);
        }
        ScaleRegime::Fixed(v) => sigma.iter_mut().for_each(|s| *s = v),
        _ => {}
    }
    let sig_mu = sigma.iter().map(|s| s.ln()).sum::<f64>() / n_units as f64;
    let rho: Vec<f64> = match spec.rho {
        None => vec![0.0; n_units],
        Some(ScaleRegime::Fixed(r)) => vec![r; n_units],
        Some(ScaleRegime::Common) => vec![rng.random_range(-0.5..0.5); n_units],
        Some(_) => (0..n_units).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let rho_mu = rho.iter().map(|r| r.atanh()).sum::<f64>() / n_units as f64;
    let suff = units.iter().zip(&rho).map(|(u, r)| u.rows.suff(*r)).collect();
    State {
        beta,
        mu,
        tau,
        slope: 0.0,
        sigma,
        sig_mu,
        sig_tau: 0.5,
        rho,
        rho_mu,
        rho_tau: 0.5,
        suff,
    }
}

fn coef_prior(r: &CoefRegime) -> NormalPrior {
    match r {
        CoefRegime::Unrelated(p) | CoefRegime::Common(p) => *p,
        CoefRegime::Random { mean, .. } => *mean,
    }
}

fn sweep_coefficients<R: Rng + ?Sized>(rng: &mut R, spec: &EngineSpec, units: &[Unit], lay: &Layout, st: &mut State) -> Result<()> {
    let p = lay.p;
    let l = lay.local.len();
    if l > 0 {
        let mut a = vec![0.0; l * l];
        let mut b = vec![0.0; l];
        for (i, unit) in units.iter().enumerate() {
            let s = &st.suff[i];
            let inv_s2 = 1.0 / (st.sigma[i] * st.sigma[i]);
            for (ai, &ja) in lay.local.iter().enumerate() {
                let mut rhs = s.xtwy[ja];
                for &jc in &lay.common {
                    rhs -= s.xtwx[ja * p + jc] * st.beta[i][jc];
                }
                let (pm, pp) = match &spec.coef[ja] {
                    CoefRegime::Random { .. } => {
                        let shift = match spec.subgroup {
                            Some((k, _)) if k == ja => st.slope * unit.z,
                            _ => 0.0,
                        };
                        (st.mu[ja] + shift, 1.0 / (st.tau[ja] * st.tau[ja]))
                    }
                    r => {
                        let pr = coef_prior(r);
                        (pr.mean, 1.0 / (pr.sd * pr.sd))
                    }
                };
                b[ai] = rhs * inv_s2 + pm * pp;
                for (bi, &jb) in lay.local.iter().enumerate() {
                    a[ai * l + bi] = s.xtwx[ja * p + jb] * inv_s2;
                }
                a[ai * l + ai] += pp;
            }
            let f = Spd::factor(&a, l).ok_or_else(|| Error::Sampler("coefficient conditional is not positive definite".into()))?;
            let d = f.draw(rng, &b);
            for (ai, &ja) in lay.local.iter().enumerate() {
                st.beta[i][ja] = d[ai];
            }
        }
    }
    let c = lay.common.len();
    if c > 0 {
        let mut a = vec![0.0; c * c];
        let mut b = vec![0.0; c];
        for (i, s) in st.suff.iter().enumerate() {
            let inv_s2 = 1.0 / (st.sigma[i] * st.sigma[i]);
            for (ai, &ja) in lay.common.iter().enumerate() {
                let mut rhs = s.xtwy[ja];
                for &jl in &lay.local {
                    rhs -= s.xtwx[ja * p + jl] * st.beta[i][jl];
                }
                b[ai] += rhs * inv_s2;
                for (bi, &jb) in lay.common.iter().enumerate() {
                    a[ai * c + bi] += s.xtwx[ja * p + jb] * inv_s2;
                }
            }
        }
        for (ai, &ja) in lay.common.iter().enumerate() {
            let pr = coef_prior(&spec.coef[ja]);
            let pp = 1.0 / (pr.sd * pr.sd);
            a[ai * c + ai] += pp;
            b[ai] += pr.mean * pp;
        }
        let f = Spd::factor(&a, c).ok_or_else(|| Error::Sampler("shared coefficient conditional is not positive definite".into()))?;
        let d = f.draw(rng, &b);
        for beta in st.beta.iter_mut() {
            for (ai, &ja) in lay.common.iter().enumerate() {
                beta[ja] = d[ai];
            }
        }
    }
    let z: Vec<f64> = units.iter().map(|u| u.z).collect();
    for (j, r) in spec.coef.iter().enumerate() {
        if let CoefRegime::Random { mean, sd_scale, fixed_sd } = *r {
            let slope_prior = match spec.subgroup {
                Some((k, sp)) if k == j => Some(sp),
                _ => None,
            };
            let v: Vec<f64> = st.beta.iter().map(|b| b[j]).collect();
            let (m, sl) = update_mean(rng, &v, &z, st.tau[j], mean, slope_prior);
            st.mu[j] = m;
            st.slope = if slope_prior.is_some() { sl } else { st.slope };
            if fixed_sd.is_none() {
                let ss: f64 = v.iter().zip(&z).map(|(vi, zi)| (vi - m - sl * zi).powi(2)).sum();
                st.tau[j] = update_sd(rng, st.tau[j], v.len() as f64, ss, sd_scale);
            }
            interweave(rng, j, mean, slope_prior, sd_scale, fixed_sd.is_none(), &z, lay, st);
        }
    }
    Ok(())
}

/// Non-centered pass for random column `j`: with `eta_i` held fixed in
/// `beta_ij = mu + slope z_i + tau eta_i`, redraw `(mu, slope)` and `tau`
/// from their conditionals through the likelihood, then map back. Keeps the
/// chain moving when the population sd is small relative to the data.
#[allow(clippy::too_many_arguments)]
fn interweave<R: Rng + ?Sized>(
    rng: &mut R,
    j: usize,
    mean_prior: NormalPrior,
    slope_prior: Option<NormalPrior>,
    sd_scale: f64,
    sample_tau: bool,
    z: &[f64],
    lay: &Layout,
    st: &mut State,
) {
    let p = lay.p;
    let n = st.beta.len();
    let slope = if slope_prior.is_some() { st.slope } else { 0.0 };
    let eta: Vec<f64> = (0..n)
        .map(|i| (st.beta[i][j] - st.mu[j] - slope * z[i]) / st.tau[j])
        .collect();
    // a_i: information about column j; g_i: its score with column j removed
    let mut a = vec![0.0; n];
    let mut g = vec![0.0; n];
    for i in 0..n {
        let s = &st.suff[i];
        let inv_s2 = 1.0 / (st.sigma[i] * st.sigma[i]);
        let mut r = s.xtwy[j];
        for k in 0..p {
            if k != j {
                r -= s.xtwx[j * p + k] * st.beta[i][k];
            }
        }
        a[i] = s.xtwx[j * p + j] * inv_s2;
        g[i] = r * inv_s2;
    }
    // (mu, slope) given eta and tau
    let pm = 1.0 / (mean_prior.sd * mean_prior.sd);
    let (mu, sl) = match slope_prior {
        None => {
            let prec: f64 = a.iter().sum::<f64>() + pm;
            let lin: f64 = (0..n).map(|i| g[i] - a[i] * st.tau[j] * eta[i]).sum::<f64>() + mean_prior.mean * pm;
            (lin / prec + std_normal(rng) / prec.sqrt(), 0.0)
        }
        Some(sp) => {
            let ps = 1.0 / (sp.sd * sp.sd);
            let mut m = [pm, 0.0, 0.0, ps];
            let mut b = [mean_prior.mean * pm, sp.mean * ps];
            for i in 0..n {
                let res = g[i] - a[i] * st.tau[j] * eta[i];
                m[0] += a[i];
                m[1] += a[i] * z[i];
                m[3] += a[i] * z[i] * z[i];
                b[0] += res;
                b[1] += res * z[i];
            }
            m[2] = m[1];
            let d = Spd::factor(&m, 2).expect("prior keeps the 2x2 system positive definite").draw(rng, &b);
            (d[0], d[1])
        }
    };
    st.mu[j] = mu;
    if slope_prior.is_some() {
        st.slope = sl;
    }
    if sample_tau {
        let mut prec = 1.0 / (sd_scale * sd_scale);
        let mut lin = 0.0;
        for i in 0..n {
            let center = mu + sl * z[i];
            prec += a[i] * eta[i] * eta[i];
            lin += eta[i] * (g[i] - a[i] * center);
        }
        let m = lin / prec;
        let t = slice_sample(
            rng,
            st.tau[j],
            |t| if t > 0.0 { -0.5 * prec * (t - m) * (t - m) } else { f64::NEG_INFINITY },
            (1.0 / prec.sqrt()).max(1e-12),
        );
        st.tau[j] = t;
    }
    for i in 0..n {
        st.beta[i][j] = st.mu[j] + sl * z[i] + st.tau[j] * eta[i];
    }
}

fn draw_sigma<R: Rng + ?Sized>(rng: &mut R, spec: &EngineSpec, current: f64, n: f64, rss: f64) -> f64 {
    let scale = spec.sigma_prior.scale;
    match spec.sigma_update {
        SigmaUpdate::Exact => update_sd(rng, current, n, rss, scale),
        SigmaUpdate::ConjugateInverseGamma => {
            let (a, b) = inverse_gamma_match(scale);
            let g = Gamma::new(a + 0.5 * n, 1.0).expect("positive shape");
            ((b + 0.5 * rss) / g.sample(rng)).sqrt()
        }
    }
}

fn sweep_sigma<R: Rng + ?Sized>(rng: &mut R, spec: &EngineSpec, st: &mut State) {
    let rss: Vec<f64> = st.suff.iter().zip(&st.beta).map(|(s, b)| s.rss(b)).collect();
    match spec.sigma {
        ScaleRegime::Fixed(_) => {}
        ScaleRegime::Common => {
            let n: usize = st.suff.iter().map(|s| s.n).sum();
            let s = draw_sigma(rng, spec, st.sigma[0], n as f64, rss.iter().sum());
            st.sigma.iter_mut().for_each(|v| *v = s);
        }
        ScaleRegime::Unrelated => {
            for i in 0..st.sigma.len() {
                st.sigma[i] = draw_sigma(rng, spec, st.sigma[i], st.suff[i].n as f64, rss[i]);
            }
        }
        ScaleRegime::Random { mean, sd_scale } => {
            let (m, t) = (st.sig_mu, st.sig_tau);
            for i in 0..st.sigma.len() {
                let n = st.suff[i].n as f64;
                let u = slice_sample(
                    rng,
                    st.sigma[i].ln(),
                    |u| -n * u - 0.5 * rss[i] * (-2.0 * u).exp() - 0.5 * ((u - m) / t).powi(2),
                    1.0,
                );
                st.sigma[i] = u.exp();
            }
            let logs: Vec<f64> = st.sigma.iter().map(|s| s.ln()).collect();
            let (m, _) = update_mean(rng, &logs, &[], t, mean, None);
            st.sig_mu = m;
            let ss: f64 = logs.iter().map(|v| (v - m).powi(2)).sum();
            st.sig_tau = update_sd(rng, t, logs.len() as f64, ss, sd_scale);
        }
    }
}

/// Returns (accepted, proposed).
fn sweep_rho<R: Rng + ?Sized>(rng: &mut R, spec: &EngineSpec, units: &[Unit], st: &mut State) -> (usize, usize) {
    let Some(regime) = spec.rho else { return (0, 0) };
    let sd = spec.mcmc.rho_proposal_sd;
    let ll = |s: &Suff, b: &[f64], sig: f64| s.loglik(b, sig);
    match regime {
        ScaleRegime::Fixed(_) => (0, 0),
        ScaleRegime::Common => {
            let prop = reflect(st.rho[0] + sd * std_normal(rng));
            let cur: f64 = (0..units.len()).map(|i| ll(&st.suff[i], &st.beta[i], st.sigma[i])).sum();
            let new_suff: Vec<Suff> = units.iter().map(|u| u.rows.suff(prop)).collect();
            let new: f64 = (0..units.len()).map(|i| ll(&new_suff[i], &st.beta[i], st.sigma[i])).sum();
            if rng.random::<f64>().ln() < new - cur {
                st.suff = new_suff;
                st.rho.iter_mut().for_each(|r| *r = prop);
                (1, 1)
            } else {
                (0, 1)
            }
        }
        ScaleRegime::Unrelated | ScaleRegime::Random { .. } => {
            let mut acc = 0;
            let log_prior = |r: f64| match regime {
                ScaleRegime::Random { .. } => {
                    -0.5 * ((r.atanh() - st.rho_mu) / st.rho_tau).powi(2) - (1.0 - r * r).ln()
                }
                _ => 0.0,
            };
            for (i, u) in units.iter().enumerate() {
                let prop = reflect(st.rho[i] + sd * std_normal(rng));
                let ns = u.rows.suff(prop);
                let d = ll(&ns, &st.beta[i], st.sigma[i]) + log_prior(prop)
                    - ll(&st.suff[i], &st.beta[i], st.sigma[i])
                    - log_prior(st.rho[i]);
                if rng.random::<f64>().ln() < d {
                    st.suff[i] = ns;
                    st.rho[i] = prop;
                    acc += 1;
                }
            }
            if let ScaleRegime::Random { mean, sd_scale } = regime {
                let zs: Vec<f64> = st.rho.iter().map(|r| r.atanh()).collect();
                let (m, _) = update_mean(rng, &zs, &[], st.rho_tau, mean, None);
                st.rho_mu = m;
                let ss: f64 = zs.iter().map(|v| (v - m).powi(2)).sum();
                st.rho_tau = update_sd(rng, st.rho_tau, zs.len() as f64, ss, sd_scale);
            }
            (acc, units.len())
        }
    }
}

struct ChainOut {
    draws: Vec<f64>,
    accepted: usize,
    proposed: usize,
}

fn run_chain(spec: &EngineSpec, units: &[Unit], lay: &Layout, chain: usize) -> Result<ChainOut> {
    let m = &spec.mcmc;
    let mut rng = stream(m.seed, &[chain as u64]);
    let mut st = init(&mut rng, spec, units, lay);
    let total = m.n_warmup + m.n_samples * m.thin;
    let mut draws = Vec::new();
    let (mut accepted, mut proposed) = (0, 0);
    for it in 0..total {
        sweep_coefficients(&mut rng, spec, units, lay, &mut st)?;
        sweep_sigma(&mut rng, spec, &mut st);
        let (a, p) = sweep_rho(&mut rng, spec, units, &mut st);
        if it >= m.n_warmup {
            accepted += a;
            proposed += p;
            if (it - m.n_warmup + 1) % m.thin == 0 {
                record(spec, &st, &mut draws);
            }
        }
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::Sampler("non-finite draw".into()));
    }
    Ok(ChainOut {
        draws,
        accepted,
        proposed,
    })
}

pub(crate) fn run(spec: &EngineSpec, units: &[Unit]) -> Result<EngineOutput> {
    if units.is_empty() {
        return Err(Error::invalid("no units to fit"));
    }
    if !spec.label_units && units.len() > 1 {
        return Err(Error::invalid("unit labels are required with more than one unit"));
    }
    let lay = Layout::new(spec);
    let chains: Vec<Result<ChainOut>> = (0..spec.mcmc.n_chains)
        .into_par_iter()
        .map(|c| run_chain(spec, units, &lay, c))
        .collect();
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
    let proposed: usize = chains.iter().map(|c| c.proposed).sum();
    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    let rho_accept = (proposed > 0).then(|| accepted as f64 / proposed as f64);
    if proposed > 0 && accepted == 0 {
        return Err(Error::Sampler(format!(
            "no rho proposal was accepted in {proposed} tries; retune rho_proposal_sd (now {})",
            spec.mcmc.rho_proposal_sd
        )));
    }
    Ok(EngineOutput {
        draws: Draws {
            names: parameter_names(spec, units),
            chains: chains.into_iter().map(|c| c.draws).collect(),
        },
        rho_accept,
    })
}
