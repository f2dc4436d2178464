//! Split-R-hat and multi-chain effective sample size.
//!
//! Both follow the classic (non rank-normalized) definitions: chains are
//! split in half, between/within variances are combined into `var_plus`,
//! and ESS uses Geyer's initial monotone sequence on the combined
//! autocorrelation estimate.

fn split_halves(traces: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(traces.len() * 2);
    for t in traces {
        let half = t.len() / 2;
        if half == 0 {
            continue;
        }
        // drop the middle draw of odd-length chains
        out.push(&t[..half]);
        out.push(&t[t.len() - half..]);
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

struct Moments {
    w: f64,
    var_plus: f64,
}

fn moments(chains: &[&[f64]]) -> Option<Moments> {
    let m = chains.len();
    if m < 2 {
        return None;
    }
    let n = chains.iter().map(|c| c.len()).min()?;
    if n < 2 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c[..n].iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64)
        .collect();
    let grand = mean(&means);
    let b_over_n = means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1) as f64;
    let w = mean(&vars);
    let nf = n as f64;
    Some(Moments {
        w,
        var_plus: (nf - 1.0) / nf * w + b_over_n,
    })
}

/// Split-R-hat; 1.0 for constant traces.
pub fn split_rhat(traces: &[Vec<f64>]) -> f64 {
    let halves = split_halves(traces);
    match moments(&halves) {
        Some(mo) if mo.w > 0.0 => (mo.var_plus / mo.w).sqrt(),
        Some(mo) if mo.var_plus == 0.0 => 1.0,
        Some(_) => f64::INFINITY,
        None => f64::NAN,
    }
}

fn autocov(x: &[f64], lag: usize, mu: f64) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (x[i] - mu) * (x[i + lag] - mu);
    }
    s / n as f64
}

/// Effective sample size over all chains.
pub fn ess(traces: &[Vec<f64>]) -> f64 {
    let halves = split_halves(traces);
    let total: usize = halves.iter().map(|c| c.len()).sum();
    let Some(mo) = moments(&halves) else {
        return total as f64;
    };
    if mo.var_plus <= 0.0 || !mo.var_plus.is_finite() {
        return total as f64;
    }
    let n = halves.iter().map(|c| c.len()).min().unwrap_or(0);
    let m = halves.len();
    let chains: Vec<&[f64]> = halves.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let rho_at = |t: usize| {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| autocov(c, t, *mu))
            .sum::<f64>()
            / m as f64;
        1.0 - (mo.w - acov) / mo.var_plus
    };

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut t = 0usize;
    let mut even = 1.0;
    let mut odd = if n > 1 { rho_at(1) } else { 0.0 };
    if n > 1 {
        rho[1] = odd;
    }
    while t + 5 < n && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    // initial monotone sequence
    let mut k = 1;
    while k + 2 <= max_t.saturating_sub(1) {
        let prev = rho[k - 1] + rho[k];
        if rho[k + 1] + rho[k + 2] > prev {
            rho[k + 1] = prev / 2.0;
            rho[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let sum: f64 = rho[..=max_t.min(n - 1)].iter().sum::<f64>()
        + if max_t + 1 < n && even > 0.0 { rho[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * sum).max(1.0 / ((m * n) as f64).log10().max(1.0));
    let nm = (m * n) as f64;
    (nm / tau).min(nm * nm.log10().max(1.0))
}
