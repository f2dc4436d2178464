//! Synthetic outcome data from the trend + AR(1) + carryover generative model.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_washout, Measurement, OutcomeSeries};
use crate::error::{Error, Result};
use crate::protocol::{ensure_valid, TrialProtocol};
use crate::rng::{self, std_normal};
use crate::sequences::{draw_block_randomized, BlockDraw, TreatmentSequence};

/// Whether AR(1) errors restart at each period or run through the trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArScope {
    #[default]
    WithinPeriod,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEffect {
    pub from: String,
    pub to: String,
    pub effect: f64,
}

/// Additive shift on the first `lag_measurements` slots after a crossover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarryoverSpec {
    pub lag_measurements: usize,
    pub effects: Vec<TransitionEffect>,
}

impl CarryoverSpec {
    pub fn effect(&self, from: &str, to: &str) -> f64 {
        self.effects
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map_or(0.0, |e| e.effect)
    }
}

/// Subgroup covariate: `Z ~ Bernoulli(probability)` and the individual mean
/// effect becomes `delta + delta2 * Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSim {
    pub covariate: String,
    pub probability: f64,
    pub delta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    pub alpha: f64,
    pub delta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub rho: f64,
    pub sigma: f64,
    #[serde(default)]
    pub carryover: Option<CarryoverSpec>,
    #[serde(default)]
    pub sd_delta: f64,
    #[serde(default)]
    pub sd_gamma: f64,
    #[serde(default)]
    pub sd_alpha: f64,
    /// Fixed per-participant intercepts; overrides `alpha`/`sd_alpha`.
    #[serde(default)]
    pub alpha_i: Vec<f64>,
    #[serde(default)]
    pub subgroup: Option<SubgroupSim>,
    #[serde(default)]
    pub ar_scope: ArScope,
}

impl GenerativeParams {
    pub fn new(alpha: f64, delta: f64, sigma: f64) -> Self {
        GenerativeParams {
            alpha,
            delta,
            gamma: 0.0,
            rho: 0.0,
            sigma,
            carryover: None,
            sd_delta: 0.0,
            sd_gamma: 0.0,
            sd_alpha: 0.0,
            alpha_i: Vec::new(),
            subgroup: None,
            ar_scope: ArScope::WithinPeriod,
        }
    }

    /// `sigma = 0` is accepted as the noiseless limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(Error::invalid(format!("|rho| must be below 1, got {}", self.rho)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.sd_delta < 0.0 || self.sd_gamma < 0.0 || self.sd_alpha < 0.0 {
            return Err(Error::invalid("random-effect sds must be nonnegative"));
        }
        if let Some(sg) = &self.subgroup {
            if !(0.0..=1.0).contains(&sg.probability) {
                return Err(Error::invalid("subgroup probability must lie in [0, 1]"));
            }
        }
        if let Some(c) = &self.carryover {
            if c.lag_measurements == 0 {
                return Err(Error::invalid("carryover lag must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum MissingnessSpec {
    #[default]
    None,
    Mcar { probability: f64 },
}

impl MissingnessSpec {
    fn probability(&self) -> Result<f64> {
        match *self {
            MissingnessSpec::None => Ok(0.0),
            MissingnessSpec::Mcar { probability } if (0.0..1.0).contains(&probability) => Ok(probability),
            MissingnessSpec::Mcar { probability } => Err(Error::invalid(format!(
                "MCAR probability must lie in [0, 1), got {probability}"
            ))),
        }
    }
}

fn treatment_code(p: &TrialProtocol, id: &str) -> Result<f64> {
    match p.treatments.iter().find(|t| t.id == id) {
        Some(t) if t.is_reference => Ok(0.0),
        Some(_) => Ok(1.0),
        None => Err(Error::invalid(format!("unknown treatment {id:?}"))),
    }
}

/// Mean of each slot (no noise) for one individual.
fn mean_structure(protocol: &TrialProtocol, sequence: &TreatmentSequence, params: &GenerativeParams) -> Result<Vec<f64>> {
    let m = protocol.measurements_per_period as usize;
    let n = protocol.n_measurements();
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut out = Vec::with_capacity(n);
    for (p, tr) in sequence.assignments.iter().enumerate() {
        let x = treatment_code(protocol, tr)?;
        let prev = if p > 0 { Some(&sequence.assignments[p - 1]) } else { None };
        for j in 0..m {
            let t = (p * m + j) as f64 / denom;
            let mut mu = params.alpha + params.delta * x + params.gamma * t;
            if let (Some(c), Some(prev)) = (&params.carryover, prev) {
                if prev != tr && j < c.lag_measurements {
                    mu += c.effect(prev, tr);
                }
            }
            out.push(mu);
        }
    }
    Ok(out)
}

/// AR(1) noise for `n` slots in segments of `segment_len`, each segment
/// started from the stationary distribution.
pub fn ar1_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, segment_len: usize, rho: f64, sigma: f64) -> Vec<f64> {
    let stationary_sd = sigma / (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for i in 0..n {
        let e = if i % segment_len == 0 {
            stationary_sd * std_normal(rng)
        } else {
            rho * prev + sigma * std_normal(rng)
        };
        out.push(e);
        prev = e;
    }
    out
}

/// One participant's series under the protocol and the given individual
/// parameters. Deterministic in `rng_seed`.
pub fn simulate_individual(
    protocol: &TrialProtocol,
    participant_id: &str,
    sequence: &TreatmentSequence,
    params: &GenerativeParams,
    missing: &MissingnessSpec,
    rng_seed: u64,
) -> Result<OutcomeSeries> {
    ensure_valid(protocol)?;
    params.validate()?;
    if protocol.n_treatments() != 2 {
        return Err(Error::invalid("the outcome simulator supports two-treatment protocols"));
    }
    sequence.check_against(protocol)?;
    let p_miss = missing.probability()?;

    let m = protocol.measurements_per_period as usize;
    let n = protocol.n_measurements();
    let mu = mean_structure(protocol, sequence, params)?;
    let segment = match params.ar_scope {
        ArScope::WithinPeriod => m,
        ArScope::Continuous => n,
    };
    let mut noise_rng = rng::stream(rng_seed, &[1]);
    let noise = ar1_noise(&mut noise_rng, n, segment, params.rho, params.sigma);
    let mut miss_rng = rng::stream(rng_seed, &[2]);

    let tpb = protocol.periods_per_block as usize;
    let mut measurements = Vec::with_capacity(n);
    for (p, tr) in sequence.assignments.iter().enumerate() {
        for j in 0..m {
            let slot = p * m + j;
            let dropped = p_miss > 0.0 && miss_rng.random::<f64>() < p_miss;
            measurements.push(Measurement {
                participant_id: participant_id.to_string(),
                block: (p / tpb + 1) as u32,
                period: (p % tpb + 1) as u32,
                within_period_index: (j + 1) as u32,
                time_index: slot as u32,
                treatment_id: tr.clone(),
                value: if dropped { None } else { Some(mu[slot] + noise[slot]) },
                weight: 1.0,
            });
        }
    }
    let series = OutcomeSeries::new(participant_id, measurements);
    apply_washout(&series, &protocol.washout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceSource {
    Fixed(TreatmentSequence),
    Randomized(BlockDraw),
    /// Uniform draw from an admissible list.
    UniformFrom(Vec<TreatmentSequence>),
}

/// True individual-level values behind one simulated participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub covariate: Option<f64>,
    pub sequence: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSimulation {
    pub series: Vec<OutcomeSeries>,
    pub truths: Vec<ParticipantTruth>,
}

/// Everything needed to regenerate a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub params: GenerativeParams,
    pub missing: MissingnessSpec,
    pub n_participants: usize,
    pub seed: u64,
    pub truths: Vec<ParticipantTruth>,
}

pub fn participant_label(i: usize) -> String {
    format!("P{:03}", i + 1)
}

/// A series of N-of-1 trials: draws individual effects from the population
/// distribution and simulates each participant on its own seeded stream.
pub fn simulate_series(
    protocol: &TrialProtocol,
    n_participants: usize,
    hyper: &GenerativeParams,
    source: &SequenceSource,
    missing: &MissingnessSpec,
    rng_seed: u64,
) -> Result<SeriesSimulation> {
    if n_participants == 0 {
        return Err(Error::invalid("need at least one participant"));
    }
    hyper.validate()?;
    if !hyper.alpha_i.is_empty() && hyper.alpha_i.len() != n_participants {
        return Err(Error::invalid(format!(
            "alpha_i has {} entries for {n_participants} participants",
            hyper.alpha_i.len()
        )));
    }
    if let SequenceSource::UniformFrom(list) = source {
        if list.is_empty() {
            return Err(Error::invalid("empty sequence list"));
        }
    }
    let results: Vec<Result<(OutcomeSeries, ParticipantTruth)>> = (0..n_participants)
        .into_par_iter()
        .map(|i| {
            let id = participant_label(i);
            let mut r = rng::stream(rng_seed, &[i as u64, 0]);
            let z = hyper
                .subgroup
                .as_ref()
                .map(|sg| if r.random::<f64>() < sg.probability { 1.0 } else { 0.0 });
            let mean_delta = hyper.delta + z.zip(hyper.subgroup.as_ref()).map_or(0.0, |(z, sg)| z * sg.delta2);
            let delta = mean_delta + hyper.sd_delta * std_normal(&mut r);
            let gamma = hyper.gamma + hyper.sd_gamma * std_normal(&mut r);
            let alpha_draw = hyper.alpha + hyper.sd_alpha * std_normal(&mut r);
            let alpha = hyper.alpha_i.get(i).copied().unwrap_or(alpha_draw);
            let sequence = match source {
                SequenceSource::Fixed(s) => s.clone(),
                SequenceSource::Randomized(mode) => {
                    draw_block_randomized(protocol, rng::child_seed(rng_seed, &[i as u64, 2]), *mode)?
                }
                SequenceSource::UniformFrom(list) => list.choose(&mut r).expect("nonempty").clone(),
            };
            let ind = GenerativeParams {
                alpha,
                delta,
                gamma,
                ..hyper.clone()
            };
            let mut s = simulate_individual(
                protocol,
                &id,
                &sequence,
                &ind,
                missing,
                rng::child_seed(rng_seed, &[i as u64, 1]),
            )?;
            if let (Some(z), Some(sg)) = (z, &hyper.subgroup) {
                s.covariates.insert(sg.covariate.clone(), z);
            }
            let truth = ParticipantTruth {
                participant_id: id,
                alpha,
                delta,
                gamma,
                covariate: z,
                sequence: sequence.to_string(),
            };
            Ok((s, truth))
        })
        .collect();
    let mut series = Vec::with_capacity(n_participants);
    let mut truths = Vec::with_capacity(n_participants);
    for r in results {
        let (s, t) = r?;
        series.push(s);
        truths.push(t);
    }
    Ok(SeriesSimulation { series, truths })
}

/// Covariate table matching [`crate::data::attach_covariates`].
pub fn covariate_table(series: &[OutcomeSeries]) -> String {
    let names: Vec<String> = series
        .iter()
        .flat_map(|s| s.covariates.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = String::from("participant_id");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for s in series {
        out.push_str(&s.participant_id);
        for n in &names {
            out.push(',');
            out.push_str(&s.covariates.get(n).copied().unwrap_or(f64::NAN).to_string());
        }
        out.push('\n');
    }
    out
}

/// Per-participant true effects keyed by participant id.
pub fn truth_map(truths: &[ParticipantTruth]) -> BTreeMap<String, &ParticipantTruth> {
    truths.iter().map(|t| (t.participant_id.clone(), t)).collect()
}
