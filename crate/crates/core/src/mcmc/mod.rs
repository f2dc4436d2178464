//! Posterior draw storage, summaries, and convergence diagnostics.

mod diagnostics;
mod slice;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use diagnostics::{ess, split_rhat};
pub(crate) use slice::slice_sample;

use crate::error::Result;
use crate::stats::{quantile_sorted, sorted};

pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Retained draws for several chains; `chains[c]` is row-major
/// `n_iter x n_params`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub names: Vec<String>,
    pub chains: Vec<Vec<f64>>,
}

impl Draws {
    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_iter(&self) -> usize {
        if self.names.is_empty() || self.chains.is_empty() {
            0
        } else {
            self.chains[0].len() / self.names.len()
        }
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-chain traces of one parameter.
    pub fn traces(&self, p: usize) -> Vec<Vec<f64>> {
        let k = self.n_params();
        self.chains
            .iter()
            .map(|c| c.iter().skip(p).step_by(k).copied().collect())
            .collect()
    }

    /// All draws of one parameter, chains concatenated.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.traces(p).into_iter().flatten().collect()
    }

    pub fn param(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|p| self.pooled(p))
    }

    /// Long-format dump: `chain,iteration,<param columns>`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "chain,iteration")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        let k = self.n_params();
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, row) in chain.chunks(k).enumerate() {
                write!(w, "{},{}", c + 1, i + 1)?;
                for v in row {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// At [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
    pub rhat: f64,
    pub ess: f64,
    /// Monte Carlo standard error of the mean, `sd / sqrt(ess)`.
    pub mcse: f64,
}

pub fn summarize_param(name: &str, traces: &[Vec<f64>]) -> ParamSummary {
    let all: Vec<f64> = traces.iter().flatten().copied().collect();
    let s = sorted(&all);
    let mean = crate::stats::mean(&all);
    let sd = if all.len() > 1 { crate::stats::sd(&all) } else { 0.0 };
    let mut quantiles = [0.0; 5];
    for (q, level) in quantiles.iter_mut().zip(QUANTILE_LEVELS) {
        *q = quantile_sorted(&s, level);
    }
    let rhat = split_rhat(traces);
    let ess = ess(traces);
    ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        quantiles,
        rhat,
        ess,
        mcse: if ess > 0.0 { sd / ess.sqrt() } else { f64::NAN },
    }
}

pub fn summarize(draws: &Draws) -> Vec<ParamSummary> {
    (0..draws.n_params())
        .map(|p| summarize_param(&draws.names[p], &draws.traces(p)))
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str = "parameter,mean,sd,q2.5,q25,q50,q75,q97.5,rhat,ess";

/// Flat summary table.
pub fn write_summary_csv<W: Write>(mut w: W, params: &[ParamSummary]) -> Result<()> {
    let io = |e| crate::error::Error::io("<summary>", e);
    writeln!(w, "{SUMMARY_CSV_HEADER}").map_err(io)?;
    for p in params {
        let q = &p.quantiles;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            p.name, p.mean, p.sd, q[0], q[1], q[2], q[3], q[4], p.rhat, p.ess
        )
        .map_err(io)?;
    }
    Ok(())
}
