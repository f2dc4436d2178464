//! Thompson sampling over treatments with known-variance Gaussian outcomes.
//!
//! One epoch is one treatment period: the chosen arm is given for
//! `measurements_per_epoch` measurements, whose mean updates that arm's
//! conjugate normal posterior.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::NormalPrior;
use crate::protocol::TrialProtocol;
use crate::rng::{std_normal, stream};
use crate::simulate::ar1_noise;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPosterior {
    pub mean: f64,
    /// Inverse variance; `f64::INFINITY` is a point mass.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub ids: Vec<String>,
    pub arms: Vec<ArmPosterior>,
    /// Variance of a single measurement.
    pub obs_var: f64,
}

impl ArmState {
    pub fn new(ids: Vec<String>, prior: NormalPrior, obs_var: f64) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("at least one arm is required"));
        }
        if !(obs_var > 0.0 && obs_var.is_finite()) {
            return Err(Error::invalid(format!("observation variance must be positive, got {obs_var}")));
        }
        if !(prior.sd > 0.0) {
            return Err(Error::invalid(format!("prior sd must be positive, got {}", prior.sd)));
        }
        let arm = ArmPosterior {
            mean: prior.mean,
            precision: prior.sd.powi(-2),
        };
        Ok(ArmState {
            arms: vec![arm; ids.len()],
            ids,
            obs_var,
        })
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|a| a == id)
    }
}

/// One posterior draw per arm, and the index of the largest. The first arm
/// wins ties.
pub fn thompson_draws<R: Rng + ?Sized>(state: &ArmState, rng: &mut R) -> (Vec<f64>, usize) {
    let draws: Vec<f64> = state
        .arms
        .iter()
        .map(|a| {
            let z = std_normal(rng);
            if a.precision.is_infinite() {
                a.mean
            } else {
                a.mean + z / a.precision.sqrt()
            }
        })
        .collect();
    let mut best = 0;
    for (i, d) in draws.iter().enumerate() {
        if *d > draws[best] {
            best = i;
        }
    }
    (draws, best)
}

pub fn thompson_step<R: Rng + ?Sized>(state: &ArmState, rng: &mut R) -> String {
    state.ids[thompson_draws(state, rng).1].clone()
}

/// Conjugate update of one arm with the mean of `n` measurements.
pub fn update_arm_mean(state: &mut ArmState, id: &str, mean: f64, n: usize) -> Result<()> {
    let i = state
        .index(id)
        .ok_or_else(|| Error::invalid(format!("unknown treatment '{id}'")))?;
    if n == 0 {
        return Ok(());
    }
    let a = &mut state.arms[i];
    if a.precision.is_infinite() {
        return Ok(());
    }
    let data_prec = n as f64 / state.obs_var;
    let prec = a.precision + data_prec;
    a.mean = (a.precision * a.mean + data_prec * mean) / prec;
    a.precision = prec;
    Ok(())
}

pub fn update_arm(state: &mut ArmState, id: &str, outcome: f64) -> Result<()> {
    update_arm_mean(state, id, outcome, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTruth {
    pub id: String,
    pub mean: f64,
}

fn default_prior() -> NormalPrior {
    NormalPrior::new(0.0, 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub arms: Vec<ArmTruth>,
    /// Measurement sd of the simulated outcomes.
    pub sd: f64,
    pub n_epochs: usize,
    pub measurements_per_epoch: usize,
    #[serde(default = "default_prior")]
    pub prior: NormalPrior,
    /// Observation variance assumed by the updates; defaults to `sd^2`.
    #[serde(default)]
    pub obs_var: Option<f64>,
    /// Give each arm one epoch, in order, before sampling starts.
    #[serde(default)]
    pub round_robin: bool,
    /// Lag-1 correlation of the simulated noise within an epoch.
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
}

impl AdaptiveConfig {
    pub fn new(arms: Vec<ArmTruth>, sd: f64, n_epochs: usize, measurements_per_epoch: usize) -> Self {
        AdaptiveConfig {
            arms,
            sd,
            n_epochs,
            measurements_per_epoch,
            prior: default_prior(),
            obs_var: None,
            round_robin: false,
            rho: 0.0,
            seed: 0,
        }
    }

    /// Arms are the protocol's treatments; an epoch is one period.
    pub fn from_protocol(protocol: &TrialProtocol, means: &[f64], sd: f64, n_epochs: usize) -> Result<Self> {
        let ids = protocol.treatment_ids();
        if ids.len() != means.len() {
            return Err(Error::invalid(format!(
                "{} true means for {} treatments",
                means.len(),
                ids.len()
            )));
        }
        let arms = ids
            .into_iter()
            .zip(means)
            .map(|(id, &mean)| ArmTruth { id, mean })
            .collect();
        Ok(Self::new(arms, sd, n_epochs, protocol.measurements_per_period as usize))
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.len() < 2 {
            return Err(Error::invalid("an adaptive trial needs at least 2 arms"));
        }
        let mut ids: Vec<&str> = self.arms.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("arm ids must be distinct"));
        }
        if self.arms.iter().any(|a| !a.mean.is_finite()) {
            return Err(Error::invalid("arm means must be finite"));
        }
        if !(self.sd > 0.0 && self.sd.is_finite()) {
            return Err(Error::invalid(format!("sd must be positive, got {}", self.sd)));
        }
        if self.n_epochs == 0 || self.measurements_per_epoch == 0 {
            return Err(Error::invalid("n_epochs and measurements_per_epoch must be positive"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Posterior draws behind the choice; empty for forced round-robin epochs.
    pub samples: Vec<f64>,
    pub chosen: String,
    pub outcomes: Vec<f64>,
    pub outcome_mean: f64,
    /// Posterior after this epoch's update.
    pub posterior: Vec<ArmPosterior>,
    /// Best true mean minus the chosen arm's true mean.
    pub regret: f64,
    pub cumulative_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTrace {
    pub arm_ids: Vec<String>,
    pub best_arm: String,
    pub epochs: Vec<EpochRecord>,
}

impl AdaptiveTrace {
    pub fn cumulative_regret(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.cumulative_regret)
    }

    /// Fraction of the last `window` epochs assigned to the best arm.
    pub fn best_arm_share(&self, window: usize) -> f64 {
        let tail = &self.epochs[self.epochs.len().saturating_sub(window)..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().filter(|e| e.chosen == self.best_arm).count() as f64 / tail.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<trace>", e);
        let mut header = vec!["epoch".to_string(), "chosen".into(), "outcome".into()];
        for id in &self.arm_ids {
            header.push(format!("mean_{id}"));
            header.push(format!("precision_{id}"));
        }
        header.push("cumulative_regret".into());
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for e in &self.epochs {
            let mut row = vec![e.epoch.to_string(), e.chosen.clone(), e.outcome_mean.to_string()];
            for a in &e.posterior {
                row.push(a.mean.to_string());
                row.push(a.precision.to_string());
            }
            row.push(e.cumulative_regret.to_string());
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// Simulate one adaptive trial. Choices and outcomes use separate streams
/// derived from `seed`, so the trace is reproducible.
pub fn run_adaptive_trial(cfg: &AdaptiveConfig) -> Result<AdaptiveTrace> {
    cfg.validate()?;
    let ids: Vec<String> = cfg.arms.iter().map(|a| a.id.clone()).collect();
    let mut state = ArmState::new(ids.clone(), cfg.prior, cfg.obs_var.unwrap_or(cfg.sd * cfg.sd))?;
    let best_mean = cfg.arms.iter().map(|a| a.mean).fold(f64::NEG_INFINITY, f64::max);
    let best_arm = cfg.arms.iter().find(|a| a.mean == best_mean).unwrap().id.clone();
    let mut choose = stream(cfg.seed, &[0]);
    let mut noise = stream(cfg.seed, &[1]);
    let m = cfg.measurements_per_epoch;
    // innovation sd chosen so the marginal sd of the noise is cfg.sd
    let innov = cfg.sd * (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut epochs = Vec::with_capacity(cfg.n_epochs);
    let mut cum = 0.0;
    for epoch in 0..cfg.n_epochs {
        let (samples, k) = if cfg.round_robin && epoch < ids.len() {
            (Vec::new(), epoch)
        } else {
            thompson_draws(&state, &mut choose)
        };
        let truth = cfg.arms[k].mean;
        let outcomes: Vec<f64> = ar1_noise(&mut noise, m, m, cfg.rho, innov)
            .into_iter()
            .map(|e| truth + e)
            .collect();
        let outcome_mean = outcomes.iter().sum::<f64>() / m as f64;
        update_arm_mean(&mut state, &ids[k], outcome_mean, m)?;
        let regret = best_mean - truth;
        cum += regret;
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            samples,
            chosen: ids[k].clone(),
            outcomes,
            outcome_mean,
            posterior: state.arms.clone(),
            regret,
            cumulative_regret: cum,
        });
    }
    Ok(AdaptiveTrace {
        arm_ids: ids,
        best_arm,
        epochs,
    })
}

/// Independent replicate trials, replicate `r` seeded from `(seed, r)`.
pub fn run_replicates(cfg: &AdaptiveConfig, n: usize) -> Result<Vec<AdaptiveTrace>> {
    (0..n)
        .into_par_iter()
        .map(|r| {
            run_adaptive_trial(&AdaptiveConfig {
                seed: crate::rng::child_seed(cfg.seed, &[r as u64]),
                ..cfg.clone()
            })
        })
        .collect()
}
