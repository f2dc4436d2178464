use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::OutcomeSeries;
use crate::error::{Error, Result};
use crate::fit::ar::ArRows;
use crate::fit::design::{build_design, Column};
use crate::fit::engine::{self, CoefRegime, EngineSpec, ScaleRegime, Unit};
use crate::fit::{ErrorModel, ModelSpec, NormalPrior, PriorSpec};
use crate::mcmc::{summarize, write_summary_csv, Draws, ParamSummary};

/// Split-R-hat above this marks a fit as not converged.
pub const RHAT_LIMIT: f64 = 1.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Greater,
    Less,
}

/// Fraction of draws beyond `mcid` in the given direction.
pub fn prob_benefit(draws: &[f64], mcid: f64, direction: Direction) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    let hits = match direction {
        Direction::Greater => draws.iter().filter(|d| **d > mcid).count(),
        Direction::Less => draws.iter().filter(|d| **d < mcid).count(),
    };
    hits as f64 / draws.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Benefit {
    pub mcid: f64,
    pub direction: Direction,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub participant_id: String,
    pub reference: String,
    pub params: Vec<ParamSummary>,
    pub benefit: Benefit,
    pub converged: bool,
    pub max_rhat: f64,
    pub rho_accept_rate: Option<f64>,
    pub n_obs: usize,
    pub notes: Vec<String>,
}

impl PosteriorSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_summary_csv(w, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesFit {
    pub summary: PosteriorSummary,
    pub draws: Draws,
}

impl BayesFit {
    pub fn delta_draws(&self) -> Vec<f64> {
        self.draws.param("delta").unwrap_or_default()
    }

    /// Recompute the reported probability of benefit for another threshold.
    pub fn set_benefit(&mut self, mcid: f64, direction: Direction) {
        self.summary.benefit = Benefit {
            mcid,
            direction,
            probability: prob_benefit(&self.delta_draws(), mcid, direction),
        };
    }
}

pub(crate) fn column_prior(c: &Column, p: &PriorSpec) -> NormalPrior {
    match c {
        Column::Intercept => p.alpha,
        Column::Treatment => p.delta,
        Column::Trend => p.gamma,
        Column::Carryover { .. } => p.carryover,
    }
}

pub(crate) fn diagnostics(params: &[ParamSummary]) -> (bool, f64) {
    let max_rhat = params
        .iter()
        .map(|p| p.rhat)
        .filter(|r| r.is_finite())
        .fold(1.0, f64::max);
    let all_finite = params.iter().all(|p| !p.rhat.is_nan());
    (all_finite && max_rhat <= RHAT_LIMIT, max_rhat)
}

/// Posterior for one trial. Chains run in parallel; the result depends only
/// on the inputs and `spec.mcmc.seed`. Non-convergence is flagged in the
/// summary rather than returned as an error.
pub fn fit_bayes(series: &OutcomeSeries, spec: &ModelSpec) -> Result<BayesFit> {
    spec.validate()?;
    let design = build_design(series, spec)?;
    let p = design.columns.len();
    let rows = ArRows::new(&design.rows, p);
    if rows.n() == 0 {
        return Err(Error::Unidentifiable("no measurements carry weight".into()));
    }
    let espec = EngineSpec {
        columns: design.names(),
        coef: design
            .columns
            .iter()
            .map(|c| CoefRegime::Unrelated(column_prior(c, &spec.priors)))
            .collect(),
        subgroup: None,
        rho: (spec.error_model == ErrorModel::Ar1).then_some(ScaleRegime::Unrelated),
        sigma: ScaleRegime::Unrelated,
        sigma_prior: spec.priors.sigma,
        sigma_update: spec.priors.sigma_update,
        mcmc: spec.mcmc,
        label_units: false,
    };
    let units = [Unit {
        id: series.participant_id.clone(),
        rows,
        z: 0.0,
    }];
    let out = engine::run(&espec, &units)?;
    let params = summarize(&out.draws);
    let (converged, max_rhat) = diagnostics(&params);
    let delta = out.draws.param("delta").unwrap_or_default();
    Ok(BayesFit {
        summary: PosteriorSummary {
            participant_id: series.participant_id.clone(),
            reference: design.reference,
            params,
            benefit: Benefit {
                mcid: 0.0,
                direction: Direction::Greater,
                probability: prob_benefit(&delta, 0.0, Direction::Greater),
            },
            converged,
            max_rhat,
            rho_accept_rate: out.rho_accept,
            n_obs: units[0].rows.n(),
            notes: design.notes,
        },
        draws: out.draws,
    })
}
