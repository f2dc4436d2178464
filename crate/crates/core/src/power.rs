//! Simulation-based power for series of trials and equal-budget allocation.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_bayes, fit_gls, McmcSettings, ModelSpec};
use crate::meta::{fit_hier, HierSpec};
use crate::protocol::{ensure_valid, TrialProtocol};
use crate::rng::child_seed;
use crate::sequences::BlockDraw;
use crate::simulate::{simulate_series, GenerativeParams, MissingnessSpec, SequenceSource};
use crate::stats::one_sample_t;

pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    #[serde(default)]
    pub id: Option<String>,
    pub n_participants: usize,
    pub n_blocks: u32,
    pub measurements_per_period: u32,
}

impl Design {
    pub fn new(n_participants: usize, n_blocks: u32, measurements_per_period: u32) -> Self {
        Design {
            id: None,
            n_participants,
            n_blocks,
            measurements_per_period,
        }
    }

    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            format!("n{}_K{}_M{}", self.n_participants, self.n_blocks, self.measurements_per_period)
        })
    }

    pub fn protocol(&self, template: &TrialProtocol) -> TrialProtocol {
        TrialProtocol {
            n_blocks: self.n_blocks,
            measurements_per_period: self.measurements_per_period,
            ..template.clone()
        }
    }

    /// Total planned measurements, `n x K x periods_per_block x M`.
    pub fn budget(&self, template: &TrialProtocol) -> u64 {
        self.n_participants as u64 * self.protocol(template).n_measurements() as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerTest {
    /// Average effect across participants.
    #[default]
    Population,
    /// Each participant's own effect; every (replicate, participant) pair is
    /// one trial.
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionRule {
    /// Two-sided GLS test at level `a`. The population version is the
    /// two-stage test: a one-sample t-test on per-participant estimates.
    Gls { a: f64 },
    /// Posterior `P(delta > 0) > threshold`; hierarchical fit for the
    /// population test, single-trial fits otherwise.
    Bayes { threshold: f64 },
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule::Gls { a: 0.05 }
    }
}

fn default_source() -> SequenceSource {
    SequenceSource::Randomized(BlockDraw::Independent)
}

fn default_mcmc() -> McmcSettings {
    McmcSettings {
        n_chains: 2,
        n_warmup: 300,
        n_samples: 300,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerQuery {
    pub protocol: TrialProtocol,
    pub designs: Vec<Design>,
    pub params: GenerativeParams,
    #[serde(default)]
    pub test: PowerTest,
    #[serde(default)]
    pub rule: DecisionRule,
    pub n_replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Model used inside each replicate; iid by default.
    #[serde(default)]
    pub analysis: ModelSpec,
    /// Sampler settings for the Bayesian rule.
    #[serde(default = "default_mcmc")]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub missing: MissingnessSpec,
    #[serde(default = "default_source")]
    pub sequences: SequenceSource,
    /// Measurement budget for [`allocation_frontier`].
    #[serde(default)]
    pub budget: Option<u64>,
    /// Relative slack when matching designs to the budget.
    #[serde(default = "default_budget_tolerance")]
    pub budget_tolerance: f64,
}

fn default_budget_tolerance() -> f64 {
    0.05
}

impl PowerQuery {
    pub fn new(protocol: TrialProtocol, designs: Vec<Design>, params: GenerativeParams, n_replicates: usize) -> Self {
        PowerQuery {
            protocol,
            designs,
            params,
            test: PowerTest::Population,
            rule: DecisionRule::default(),
            n_replicates,
            seed: 0,
            analysis: ModelSpec::default(),
            mcmc: default_mcmc(),
            missing: MissingnessSpec::None,
            sequences: default_source(),
            budget: None,
            budget_tolerance: default_budget_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates < MIN_REPLICATES {
            return Err(Error::invalid(format!(
                "n_replicates must be at least {MIN_REPLICATES}, got {}",
                self.n_replicates
            )));
        }
        match self.rule {
            DecisionRule::Gls { a } if !(a > 0.0 && a < 1.0) => {
                return Err(Error::invalid(format!("level a must lie in (0, 1), got {a}")))
            }
            DecisionRule::Bayes { threshold } if !(threshold > 0.0 && threshold < 1.0) => {
                return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")))
            }
            _ => {}
        }
        if self.designs.is_empty() {
            return Err(Error::invalid("no candidate designs"));
        }
        for d in &self.designs {
            if d.n_participants == 0 {
                return Err(Error::invalid(format!("design {} has no participants", d.label())));
            }
            if self.test == PowerTest::Population && d.n_participants < 2 {
                return Err(Error::invalid(format!(
                    "design {}: the population test needs at least 2 participants",
                    d.label()
                )));
            }
            ensure_valid(&d.protocol(&self.protocol))?;
        }
        self.params.validate()?;
        self.analysis.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPower {
    pub design: Design,
    pub label: String,
    pub budget: u64,
    /// Decision trials (replicates, or replicate x participant pairs).
    pub trials: usize,
    pub rejections: usize,
    pub inconclusive: usize,
    /// Rejections over conclusive trials.
    pub power: f64,
    pub mc_se: f64,
    pub inconclusive_rate: f64,
    /// Mean wall time per replicate in milliseconds; not reproducible.
    pub mean_runtime_ms: f64,
}

impl DesignPower {
    /// Normal-approximation 95% Monte Carlo interval.
    pub fn interval95(&self) -> (f64, f64) {
        (self.power - 1.96 * self.mc_se, self.power + 1.96 * self.mc_se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub designs: Vec<DesignPower>,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    trials: usize,
    rejections: usize,
    inconclusive: usize,
}

impl Tally {
    fn add(self, o: Tally) -> Tally {
        Tally {
            trials: self.trials + o.trials,
            rejections: self.rejections + o.rejections,
            inconclusive: self.inconclusive + o.inconclusive,
        }
    }
}

fn replicate(q: &PowerQuery, protocol: &TrialProtocol, d: &Design, seed: u64) -> Tally {
    let Ok(sim) = simulate_series(protocol, d.n_participants, &q.params, &q.sequences, &q.missing, seed) else {
        let trials = if q.test == PowerTest::Individual { d.n_participants } else { 1 };
        return Tally {
            trials,
            rejections: 0,
            inconclusive: trials,
        };
    };
    let model = ModelSpec {
        mcmc: McmcSettings {
            seed: child_seed(seed, &[7]),
            ..q.mcmc
        },
        ..q.analysis.clone()
    };
    let one = |reject: Option<bool>| match reject {
        Some(r) => Tally {
            trials: 1,
            rejections: r as usize,
            inconclusive: 0,
        },
        None => Tally {
            trials: 1,
            rejections: 0,
            inconclusive: 1,
        },
    };
    match (q.test, q.rule) {
        (PowerTest::Individual, DecisionRule::Gls { a }) => sim
            .series
            .iter()
            .map(|s| one(fit_gls(s, &model).ok().map(|f| f.delta_p() < a)))
            .fold(Tally::default(), Tally::add),
        (PowerTest::Individual, DecisionRule::Bayes { threshold }) => sim
            .series
            .iter()
            .map(|s| one(fit_bayes(s, &model).ok().map(|f| f.summary.benefit.probability > threshold)))
            .fold(Tally::default(), Tally::add),
        (PowerTest::Population, DecisionRule::Gls { a }) => {
            let est: Option<Vec<f64>> = sim.series.iter().map(|s| fit_gls(s, &model).ok().map(|f| f.delta())).collect();
            one(est.and_then(|e| one_sample_t(&e)).map(|(_, _, _, p)| p < a))
        }
        (PowerTest::Population, DecisionRule::Bayes { threshold }) => {
            let spec = HierSpec {
                model,
                ..Default::default()
            };
            one(fit_hier(&sim.series, &spec).ok().and_then(|h| {
                let draws = h.draws.param("delta")?;
                Some(crate::fit::prob_benefit(&draws, 0.0, crate::fit::Direction::Greater) > threshold)
            }))
        }
    }
}

/// Power of every candidate design. Deterministic in the query: replicate
/// `r` of design `d` runs on a stream derived from `(seed, d, r)`.
pub fn estimate_power(q: &PowerQuery) -> Result<PowerResult> {
    q.validate()?;
    let mut designs = Vec::new();
    for (di, d) in q.designs.iter().enumerate() {
        let protocol = d.protocol(&q.protocol);
        let start = Instant::now();
        let tally = (0..q.n_replicates)
            .into_par_iter()
            .map(|r| replicate(q, &protocol, d, child_seed(q.seed, &[di as u64, r as u64])))
            .reduce(Tally::default, Tally::add);
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let conclusive = tally.trials - tally.inconclusive;
        let power = if conclusive > 0 {
            tally.rejections as f64 / conclusive as f64
        } else {
            f64::NAN
        };
        designs.push(DesignPower {
            label: d.label(),
            budget: d.budget(&q.protocol),
            design: d.clone(),
            trials: tally.trials,
            rejections: tally.rejections,
            inconclusive: tally.inconclusive,
            power,
            mc_se: (power * (1.0 - power) / conclusive.max(1) as f64).sqrt(),
            inconclusive_rate: tally.inconclusive as f64 / tally.trials as f64,
            mean_runtime_ms: elapsed / q.n_replicates as f64,
        });
    }
    Ok(PowerResult { designs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEntry {
    /// 1-based; tied designs share a rank.
    pub rank: usize,
    /// Within one combined MC se of the design ranked just above.
    pub tied_with_previous: bool,
    pub result: DesignPower,
}

/// Candidate designs whose budget is within `budget_tolerance` of the
/// query's budget, ranked by estimated power.
pub fn allocation_frontier(q: &PowerQuery) -> Result<Vec<FrontierEntry>> {
    let budget = q
        .budget
        .ok_or_else(|| Error::invalid("allocation frontier needs a budget"))?;
    let slack = q.budget_tolerance * budget as f64;
    let designs: Vec<Design> = q
        .designs
        .iter()
        .filter(|d| (d.budget(&q.protocol) as f64 - budget as f64).abs() <= slack)
        .cloned()
        .collect();
    if designs.is_empty() {
        return Err(Error::invalid(format!("no candidate design matches the budget {budget}")));
    }
    let sub = PowerQuery {
        designs,
        ..q.clone()
    };
    let mut results = estimate_power(&sub)?.designs;
    results.sort_by(|a, b| b.power.total_cmp(&a.power));
    let mut out: Vec<FrontierEntry> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (rank, tied) = match out.last() {
            Some(prev) => {
                let se = (prev.result.mc_se.powi(2) + r.mc_se.powi(2)).sqrt();
                if prev.result.power - r.power <= se {
                    (prev.rank, true)
                } else {
                    (i + 1, false)
                }
            }
            None => (1, false),
        };
        out.push(FrontierEntry {
            rank,
            tied_with_previous: tied,
            result: r,
        });
    }
    Ok(out)
}

pub const POWER_CSV_HEADER: &str = "design_id,n,K,M,power,mc_se,inconclusive_rate";

/// Reproducible result table; runtimes are left out so identical queries
/// give identical bytes.
pub fn write_power_csv<W: Write>(mut w: W, results: &[DesignPower]) -> Result<()> {
    let io = |e| Error::io("<power>", e);
    writeln!(w, "{POWER_CSV_HEADER}").map_err(io)?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.label,
            r.design.n_participants,
            r.design.n_blocks,
            r.design.measurements_per_period,
            r.power,
            r.mc_se,
            r.inconclusive_rate
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn write_frontier_csv<W: Write>(mut w: W, entries: &[FrontierEntry]) -> Result<()> {
    let io = |e| Error::io("<frontier>", e);
    writeln!(w, "rank,tied_with_previous,{POWER_CSV_HEADER},budget").map_err(io)?;
    for e in entries {
        let r = &e.result;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            e.rank,
            e.tied_with_previous,
            r.label,
            r.design.n_participants,
            r.design.n_blocks,
            r.design.measurements_per_period,
            r.power,
            r.mc_se,
            r.inconclusive_rate,
            r.budget
        )
        .map_err(io)?;
    }
    Ok(())
}
