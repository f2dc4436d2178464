//! Joint analysis of a series of trials: per-family pooling, subgroup
//! regression on the individual effects, pooled carryover, and shrinkage.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::OutcomeSeries;
use crate::error::{Error, Result};
use crate::fit::ar::ArRows;
use crate::fit::bayes::{column_prior, diagnostics};
use crate::fit::design::{default_reference, design_rows, observed_transitions, sort_transitions, Column, DesignRow};
use crate::fit::engine::{self, CoefRegime, EngineSpec, ScaleRegime, Unit};
use crate::fit::{fit_gls, CarryoverModel, ErrorModel, McmcSettings, ModelSpec, NormalPrior};
use crate::mcmc::{summarize, write_summary_csv, Draws, ParamSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Separate parameter per individual with its own fixed prior.
    Unrelated,
    /// One value shared by everyone.
    Common,
    /// Individual values drawn from a population normal.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolingSpec {
    pub alpha: Pooling,
    pub delta: Pooling,
    pub gamma: Pooling,
    pub rho: Pooling,
    pub sigma: Pooling,
    pub carryover: Pooling,
}

impl Default for PoolingSpec {
    fn default() -> Self {
        PoolingSpec {
            alpha: Pooling::Unrelated,
            delta: Pooling::Random,
            gamma: Pooling::Random,
            rho: Pooling::Common,
            sigma: Pooling::Common,
            carryover: Pooling::Random,
        }
    }
}

impl PoolingSpec {
    /// Every family estimated separately per individual.
    pub fn unrelated() -> Self {
        PoolingSpec {
            alpha: Pooling::Unrelated,
            delta: Pooling::Unrelated,
            gamma: Pooling::Unrelated,
            rho: Pooling::Unrelated,
            sigma: Pooling::Unrelated,
            carryover: Pooling::Unrelated,
        }
    }

    fn for_column(&self, c: &Column) -> Pooling {
        match c {
            Column::Intercept => self.alpha,
            Column::Treatment => self.delta,
            Column::Trend => self.gamma,
            Column::Carryover { .. } => self.carryover,
        }
    }
}

/// Priors on population parameters: a normal on each population mean and a
/// half-normal on each population sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperPriors {
    pub mean: NormalPrior,
    pub sd_scale: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        HyperPriors {
            mean: NormalPrior::new(0.0, 10.0),
            sd_scale: 1.0,
        }
    }
}

/// `delta_i ~ N(delta1 + delta2 Z_i, sd_delta^2)` with `Z_i` the named
/// covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub covariate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HierSpec {
    pub model: ModelSpec,
    pub pooling: PoolingSpec,
    pub hyper: HyperPriors,
    pub subgroup: Option<SubgroupSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualInfo {
    pub participant_id: String,
    pub n_measurements: usize,
    pub n_used: usize,
    pub missing_fraction: f64,
    pub covariate: Option<f64>,
    /// False when the individual saw a single treatment and relies on pooling.
    pub identifiable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierPosterior {
    pub reference: String,
    pub pooling: PoolingSpec,
    pub subgroup: Option<String>,
    pub params: Vec<ParamSummary>,
    pub individuals: Vec<IndividualInfo>,
    pub converged: bool,
    pub max_rhat: f64,
    pub rho_accept_rate: Option<f64>,
    /// Posterior mean of `sd_delta^2` (or its fixed value).
    pub var_delta: Option<f64>,
    pub warnings: Vec<String>,
    pub draws: Draws,
}

impl HierPosterior {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Per-individual parameter `base[id]`, or the shared `base` when that
    /// family is common.
    pub fn individual(&self, id: &str, base: &str) -> Option<&ParamSummary> {
        self.param(&format!("{base}[{id}]")).or_else(|| self.param(base))
    }

    /// Population-level parameters (everything not indexed by individual).
    pub fn population(&self) -> Vec<&ParamSummary> {
        self.params.iter().filter(|p| !p.name.contains('[')).collect()
    }

    /// Population mean of delta for an individual with covariate `z`.
    pub fn population_delta(&self, z: Option<f64>) -> Option<f64> {
        match &self.subgroup {
            Some(_) => Some(self.param("delta1")?.mean + self.param("delta2")?.mean * z.unwrap_or(0.0)),
            None => self.param("delta").map(|p| p.mean),
        }
    }

    pub fn write_population_csv<W: Write>(&self, w: W) -> Result<()> {
        let pop: Vec<ParamSummary> = self.population().into_iter().cloned().collect();
        write_summary_csv(w, &pop)
    }

    /// Long format: one row per (individual, parameter).
    pub fn write_individual_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<individuals>", e);
        writeln!(
            w,
            "participant_id,parameter,mean,sd,q2.5,q50,q97.5,rhat,ess,n_used,missing_fraction"
        )
        .map_err(io)?;
        for ind in &self.individuals {
            let suffix = format!("[{}]", ind.participant_id);
            for p in self.params.iter().filter(|p| p.name.ends_with(&suffix)) {
                let base = &p.name[..p.name.len() - suffix.len()];
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    ind.participant_id,
                    base,
                    p.mean,
                    p.sd,
                    p.quantiles[0],
                    p.quantiles[2],
                    p.quantiles[4],
                    p.rhat,
                    p.ess,
                    ind.n_used,
                    ind.missing_fraction
                )
                .map_err(io)?;
            }
        }
        Ok(())
    }
}

fn coef_regime(pool: Pooling, col: &Column, spec: &HierSpec) -> CoefRegime {
    match pool {
        Pooling::Unrelated => CoefRegime::Unrelated(column_prior(col, &spec.model.priors)),
        Pooling::Common => CoefRegime::Common(column_prior(col, &spec.model.priors)),
        Pooling::Random => CoefRegime::Random {
            mean: spec.hyper.mean,
            sd_scale: spec.hyper.sd_scale,
            fixed_sd: None,
        },
    }
}

fn scale_regime(pool: Pooling, spec: &HierSpec) -> ScaleRegime {
    match pool {
        Pooling::Unrelated => ScaleRegime::Unrelated,
        Pooling::Common => ScaleRegime::Common,
        Pooling::Random => ScaleRegime::Random {
            mean: spec.hyper.mean,
            sd_scale: spec.hyper.sd_scale,
        },
    }
}

fn covariate_values(series: &[OutcomeSeries], name: &str) -> Result<Vec<f64>> {
    series
        .iter()
        .map(|s| match s.covariates.get(name) {
            Some(v) if v.is_finite() => Ok(*v),
            _ => Err(Error::invalid(format!(
                "covariate {name} missing or not finite for {}",
                s.participant_id
            ))),
        })
        .collect()
}

/// Bayesian multilevel fit over all series.
///
/// With a single series, every family must be unrelated or common; the
/// all-unrelated case then reproduces the single-trial sampler draw for draw.
pub fn fit_hier(series: &[OutcomeSeries], spec: &HierSpec) -> Result<HierPosterior> {
    spec.model.validate()?;
    if series.is_empty() {
        return Err(Error::invalid("no series supplied"));
    }
    let pool = spec.pooling;
    let any_random = [pool.alpha, pool.delta, pool.gamma, pool.rho, pool.sigma, pool.carryover]
        .contains(&Pooling::Random);
    if series.len() < 2 && any_random {
        return Err(Error::invalid("need ≥ 2 individuals for random-effect pooling"));
    }
    if spec.subgroup.is_some() && pool.delta != Pooling::Random {
        return Err(Error::invalid("a subgroup regression requires random delta pooling"));
    }
    if !(spec.hyper.sd_scale > 0.0 && spec.hyper.mean.sd > 0.0) {
        return Err(Error::invalid("hyperprior scales must be positive"));
    }
    let mut ids = std::collections::BTreeSet::new();
    for s in series {
        if !ids.insert(s.participant_id.as_str()) {
            return Err(Error::invalid(format!("duplicate participant {}", s.participant_id)));
        }
    }
    let z = match &spec.subgroup {
        Some(sg) => covariate_values(series, &sg.covariate)?,
        None => vec![0.0; series.len()],
    };
    let reference = match &spec.model.reference {
        Some(r) => r.clone(),
        None => default_reference(series.iter().flat_map(|s| s.measurements.iter().map(|m| m.treatment_id.as_str())))
            .ok_or_else(|| Error::invalid("all series are empty"))?,
    };

    let mut warnings = Vec::new();
    let mut transitions: Vec<(String, String)> = Vec::new();
    if matches!(spec.model.carryover, CarryoverModel::TransitionTerms { .. }) {
        for s in series {
            for t in observed_transitions(s) {
                if !transitions.contains(&t) {
                    transitions.push(t);
                }
            }
        }
        sort_transitions(&mut transitions, &reference);
    }
    let mut columns = Vec::new();
    let mut rows: Vec<Vec<DesignRow>> = Vec::new();
    for s in series {
        let (c, r) = design_rows(s, &spec.model, &reference, &transitions);
        columns = c;
        rows.push(r);
    }
    // carryover columns without a single usable nonzero row anywhere
    let mut j = columns.len();
    while j > 0 {
        j -= 1;
        if matches!(columns[j], Column::Carryover { .. })
            && !rows.iter().flatten().any(|r| r.weight > 0.0 && r.x[j] != 0.0)
        {
            warnings.push(format!("{} excluded: no usable measurements follow that transition", columns[j]));
            columns.remove(j);
            rows.iter_mut().flatten().for_each(|r| {
                r.x.remove(j);
            });
        }
    }

    let mut individuals = Vec::new();
    let mut units = Vec::new();
    for ((s, r), zi) in series.iter().zip(rows).zip(&z) {
        let used: Vec<&DesignRow> = r.iter().filter(|r| r.weight > 0.0).collect();
        let identifiable = used.iter().any(|r| r.x[1] == 0.0) && used.iter().any(|r| r.x[1] == 1.0);
        if !identifiable {
            if pool.delta == Pooling::Unrelated {
                return Err(Error::Unidentifiable(format!(
                    "{} observes a single treatment and delta is not pooled",
                    s.participant_id
                )));
            }
            warnings.push(format!(
                "{}: treatment effect informed only through pooling",
                s.participant_id
            ));
        }
        let ar = ArRows::new(&r, columns.len());
        individuals.push(IndividualInfo {
            participant_id: s.participant_id.clone(),
            n_measurements: s.len(),
            n_used: ar.n(),
            missing_fraction: s.missing_fraction(),
            covariate: spec.subgroup.as_ref().map(|_| *zi),
            identifiable,
        });
        units.push(Unit {
            id: s.participant_id.clone(),
            rows: ar,
            z: *zi,
        });
    }

    let espec = EngineSpec {
        columns: columns.iter().map(|c| c.name()).collect(),
        coef: columns.iter().map(|c| coef_regime(pool.for_column(c), c, spec)).collect(),
        subgroup: spec.subgroup.as_ref().map(|_| (1, spec.hyper.mean)),
        rho: (spec.model.error_model == ErrorModel::Ar1).then(|| scale_regime(pool.rho, spec)),
        sigma: scale_regime(pool.sigma, spec),
        sigma_prior: spec.model.priors.sigma,
        sigma_update: spec.model.priors.sigma_update,
        mcmc: spec.model.mcmc,
        label_units: true,
    };
    let out = engine::run(&espec, &units)?;
    Ok(assemble(reference, spec, individuals, out.draws, out.rho_accept, warnings, None))
}

fn assemble(
    reference: String,
    spec: &HierSpec,
    individuals: Vec<IndividualInfo>,
    draws: Draws,
    rho_accept_rate: Option<f64>,
    warnings: Vec<String>,
    fixed_sd_delta: Option<f64>,
) -> HierPosterior {
    let params = summarize(&draws);
    let (converged, max_rhat) = diagnostics(&params);
    let var_delta = fixed_sd_delta.map(|t| t * t).or_else(|| {
        draws
            .param("sd_delta")
            .map(|d| d.iter().map(|t| t * t).sum::<f64>() / d.len() as f64)
    });
    HierPosterior {
        reference,
        pooling: spec.pooling,
        subgroup: spec.subgroup.as_ref().map(|s| s.covariate.clone()),
        params,
        individuals,
        converged,
        max_rhat,
        rho_accept_rate,
        var_delta,
        warnings,
        draws,
    }
}

/// One individual's own-data estimate of delta and its sampling variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualEstimate {
    pub participant_id: String,
    /// `None` when the individual's own data cannot estimate delta.
    pub estimate: Option<f64>,
    pub variance: f64,
}

/// Normal-normal model with known sampling variances and a fixed population
/// sd: `est_i ~ N(delta_i, v_i)`, `delta_i ~ N(delta, tau^2)`. Its posterior
/// individual means are exactly `w_i est_i + (1 - w_i) delta` with
/// `w_i = tau^2 / (tau^2 + v_i)`, which makes it a reference for
/// [`shrinkage_table`].
pub fn fit_normal_normal(
    estimates: &[IndividualEstimate],
    tau: f64,
    mean_prior: NormalPrior,
    mcmc: McmcSettings,
) -> Result<HierPosterior> {
    if estimates.len() < 2 {
        return Err(Error::invalid("need at least 2 individuals"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let mut units = Vec::new();
    let mut individuals = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        let rows: Vec<DesignRow> = match e.estimate {
            Some(y) if e.variance > 0.0 && e.variance.is_finite() => vec![DesignRow {
                x: vec![1.0],
                y,
                weight: 1.0 / e.variance,
                time_index: 0,
                segment: i,
            }],
            _ => Vec::new(),
        };
        individuals.push(IndividualInfo {
            participant_id: e.participant_id.clone(),
            n_measurements: 1,
            n_used: rows.len(),
            missing_fraction: 1.0 - rows.len() as f64,
            covariate: None,
            identifiable: !rows.is_empty(),
        });
        units.push(Unit {
            id: e.participant_id.clone(),
            rows: ArRows::new(&rows, 1),
            z: 0.0,
        });
    }
    let espec = EngineSpec {
        columns: vec!["delta".into()],
        coef: vec![CoefRegime::Random {
            mean: mean_prior,
            sd_scale: 1.0,
            fixed_sd: Some(tau),
        }],
        subgroup: None,
        rho: None,
        sigma: ScaleRegime::Fixed(1.0),
        sigma_prior: crate::fit::HalfNormalPrior { scale: 1.0 },
        sigma_update: Default::default(),
        mcmc,
        label_units: true,
    };
    let out = engine::run(&espec, &units)?;
    let spec = HierSpec::default();
    Ok(assemble(String::new(), &spec, individuals, out.draws, None, Vec::new(), Some(tau)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub participant_id: String,
    pub own_estimate: Option<f64>,
    pub own_variance: f64,
    pub population_mean: f64,
    pub posterior_mean: f64,
    /// `(posterior - population) / (own - population)`.
    pub implied_weight: Option<f64>,
    /// `var_delta / (var_delta + own_variance)`; 0 without own data.
    pub conjugate_weight: f64,
    /// Posterior mean lies outside the interval between own estimate and
    /// population mean.
    pub outside_interval: bool,
}

/// Shrinkage of each individual's posterior delta toward the population mean
/// relative to supplied own-data estimates.
pub fn shrinkage_table(h: &HierPosterior, estimates: &[IndividualEstimate]) -> Result<Vec<ShrinkageRow>> {
    if h.pooling.delta != Pooling::Random {
        return Err(Error::invalid("shrinkage needs random delta pooling"));
    }
    let var_delta = h.var_delta.unwrap_or(f64::NAN);
    let by_id: BTreeMap<&str, &IndividualInfo> = h.individuals.iter().map(|i| (i.participant_id.as_str(), i)).collect();
    let mut out = Vec::new();
    for e in estimates {
        let info = by_id
            .get(e.participant_id.as_str())
            .ok_or_else(|| Error::invalid(format!("{} not in the fit", e.participant_id)))?;
        let post = h
            .param(&format!("delta[{}]", e.participant_id))
            .ok_or_else(|| Error::invalid(format!("no delta draws for {}", e.participant_id)))?
            .mean;
        let pop = h
            .population_delta(info.covariate)
            .ok_or_else(|| Error::invalid("no population delta in the fit"))?;
        let has_own = e.estimate.is_some() && e.variance.is_finite();
        let (implied, outside) = match e.estimate {
            Some(own) if own != pop => {
                let w = (post - pop) / (own - pop);
                (Some(w), !(0.0..=1.0).contains(&w))
            }
            _ => (None, false),
        };
        out.push(ShrinkageRow {
            participant_id: e.participant_id.clone(),
            own_estimate: e.estimate,
            own_variance: e.variance,
            population_mean: pop,
            posterior_mean: post,
            implied_weight: implied,
            conjugate_weight: if has_own { var_delta / (var_delta + e.variance) } else { 0.0 },
            outside_interval: outside,
        });
    }
    Ok(out)
}

/// Own-data GLS estimates of delta under the model used for the joint fit.
pub fn individual_estimates(series: &[OutcomeSeries], model: &ModelSpec) -> Vec<IndividualEstimate> {
    series
        .iter()
        .map(|s| match fit_gls(s, model) {
            Ok(f) => IndividualEstimate {
                participant_id: s.participant_id.clone(),
                estimate: Some(f.delta()),
                variance: f.delta_se().powi(2),
            },
            Err(_) => IndividualEstimate {
                participant_id: s.participant_id.clone(),
                estimate: None,
                variance: f64::INFINITY,
            },
        })
        .collect()
}

/// Shrinkage table against each individual's own GLS estimate.
pub fn shrinkage_report(h: &HierPosterior, series: &[OutcomeSeries], model: &ModelSpec) -> Result<Vec<ShrinkageRow>> {
    let model = ModelSpec {
        reference: Some(h.reference.clone()),
        ..model.clone()
    };
    shrinkage_table(h, &individual_estimates(series, &model))
}

pub fn write_shrinkage_csv<W: Write>(mut w: W, rows: &[ShrinkageRow]) -> Result<()> {
    let io = |e| Error::io("<shrinkage>", e);
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    writeln!(
        w,
        "participant_id,own_estimate,own_variance,population_mean,posterior_mean,implied_weight,conjugate_weight,outside_interval"
    )
    .map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.participant_id,
            opt(r.own_estimate),
            r.own_variance,
            r.population_mean,
            r.posterior_mean,
            opt(r.implied_weight),
            r.conjugate_weight,
            r.outside_interval
        )
        .map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPosterior {
    pub from: String,
    pub to: String,
    pub n_crossovers: usize,
    pub average: ParamSummary,
    pub sd: Option<ParamSummary>,
    pub individuals: Vec<ParamSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarryoverPosterior {
    pub transitions: Vec<TransitionPosterior>,
    pub warnings: Vec<String>,
    pub fit: HierPosterior,
}

/// Average and individual carryover effects for each transition direction,
/// as random effects on top of the joint model in `spec` with lag `lag`.
pub fn carryover_pooled(series: &[OutcomeSeries], lag: usize, spec: &HierSpec) -> Result<CarryoverPosterior> {
    if series.len() < 2 {
        return Err(Error::invalid(
            "pooled carryover needs at least 2 participants; a single trial cannot separate carryover",
        ));
    }
    let treatments: std::collections::BTreeSet<String> = series
        .iter()
        .flat_map(|s| s.measurements.iter().map(|m| m.treatment_id.clone()))
        .collect();
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for s in series {
        for w in s.period_treatments().windows(2) {
            if w[0] != w[1] {
                *counts.entry((w[0].clone(), w[1].clone())).or_default() += 1;
            }
        }
    }
    let mut warnings = Vec::new();
    for a in &treatments {
        for b in &treatments {
            if a != b && !counts.contains_key(&(a.clone(), b.clone())) {
                warnings.push(format!("carryover[{a}->{b}] excluded: transition absent from all data"));
            }
        }
    }
    if let Some(((a, b), n)) = counts.iter().find(|(_, n)| **n < 2) {
        return Err(Error::invalid(format!(
            "transition {a}->{b} occurs {n} time(s); pooled carryover needs at least 2"
        )));
    }
    let spec = HierSpec {
        model: ModelSpec {
            carryover: CarryoverModel::TransitionTerms { lag },
            ..spec.model.clone()
        },
        ..spec.clone()
    };
    let fit = fit_hier(series, &spec)?;
    warnings.extend(fit.warnings.iter().cloned());
    let mut transitions = Vec::new();
    for ((from, to), n) in &counts {
        let name = format!("carryover[{from}->{to}]");
        let Some(average) = fit.param(&name).cloned() else { continue };
        transitions.push(TransitionPosterior {
            from: from.clone(),
            to: to.clone(),
            n_crossovers: *n,
            average,
            sd: fit.param(&format!("sd_{name}")).cloned(),
            individuals: fit
                .individuals
                .iter()
                .filter_map(|i| fit.param(&format!("{name}[{}]", i.participant_id)).cloned())
                .collect(),
        });
    }
    Ok(CarryoverPosterior {
        transitions,
        warnings,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_bayes;
    use crate::protocol::{TrialProtocol, WashoutPolicy};
    use crate::sequences::TreatmentSequence;
    use crate::simulate::{simulate_series, GenerativeParams, MissingnessSpec, SequenceSource};

    fn quick(seed: u64) -> McmcSettings {
        McmcSettings {
            n_chains: 4,
            n_warmup: 500,
            n_samples: 1000,
            seed,
            ..Default::default()
        }
    }

    fn protocol(m: u32) -> TrialProtocol {
        let mut p = TrialProtocol::two_arm("A", "B", 2, 2, 7, m);
        p.washout = WashoutPolicy::none();
        p
    }

    #[test]
    fn single_unrelated_series_matches_single_trial_fit() {
        let g = GenerativeParams::new(0.5, 1.0, 1.0);
        let src = SequenceSource::Fixed(TreatmentSequence::parse("ABBA"));
        let sim = simulate_series(&protocol(8), 1, &g, &src, &MissingnessSpec::None, 3).unwrap();
        let model = ModelSpec {
            mcmc: quick(5),
            ..ModelSpec::ar1()
        };
        let spec = HierSpec {
            model: model.clone(),
            pooling: PoolingSpec::unrelated(),
            ..Default::default()
        };
        let h = fit_hier(&sim.series, &spec).unwrap();
        let b = fit_bayes(&sim.series[0], &model).unwrap();
        assert_eq!(h.draws.chains, b.draws.chains);
    }

    #[test]
    fn subgroup_requires_random_delta() {
        let g = GenerativeParams::new(0.0, 1.0, 1.0);
        let src = SequenceSource::Fixed(TreatmentSequence::parse("ABBA"));
        let sim = simulate_series(&protocol(4), 3, &g, &src, &MissingnessSpec::None, 3).unwrap();
        let spec = HierSpec {
            pooling: PoolingSpec {
                delta: Pooling::Common,
                ..Default::default()
            },
            subgroup: Some(SubgroupSpec {
                covariate: "male".into(),
            }),
            ..Default::default()
        };
        assert!(matches!(fit_hier(&sim.series, &spec), Err(Error::Invalid(_))));
    }

    #[test]
    fn single_treatment_individual_needs_pooling() {
        let g = GenerativeParams::new(0.0, 1.0, 1.0);
        let src = SequenceSource::UniformFrom(vec![TreatmentSequence::parse("AAAA")]);
        let mut sim = simulate_series(&protocol(4), 1, &g, &src, &MissingnessSpec::None, 3).unwrap();
        let src2 = SequenceSource::Fixed(TreatmentSequence::parse("ABBA"));
        let other = simulate_series(&protocol(4), 2, &g, &src2, &MissingnessSpec::None, 4).unwrap();
        for (k, mut s) in other.series.into_iter().enumerate() {
            s.participant_id = format!("Q{k}");
            s.measurements.iter_mut().for_each(|m| m.participant_id = s.participant_id.clone());
            sim.series.push(s);
        }
        let unrelated = HierSpec {
            pooling: PoolingSpec {
                delta: Pooling::Unrelated,
                gamma: Pooling::Unrelated,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(fit_hier(&sim.series, &unrelated), Err(Error::Unidentifiable(_))));
        let pooled = HierSpec {
            model: ModelSpec {
                mcmc: quick(1),
                ..Default::default()
            },
            ..Default::default()
        };
        let h = fit_hier(&sim.series, &pooled).unwrap();
        assert!(!h.individuals[0].identifiable);
        assert!(h.warnings.iter().any(|w| w.contains("only through pooling")));
    }

    #[test]
    fn known_variance_toy_matches_closed_form() {
        let est: Vec<IndividualEstimate> = (0..8)
            .map(|i| IndividualEstimate {
                participant_id: format!("P{i}"),
                estimate: Some(i as f64 * 0.4 - 1.0),
                variance: 0.05 + 0.1 * i as f64,
            })
            .collect();
        let tau = 0.5;
        let h = fit_normal_normal(&est, tau, NormalPrior::new(0.0, 10.0), quick(2)).unwrap();
        let rows = shrinkage_table(&h, &est).unwrap();
        let pop = h.param("delta").unwrap().mean;
        for (r, e) in rows.iter().zip(&est) {
            let w = tau * tau / (tau * tau + e.variance);
            assert!((r.conjugate_weight - w).abs() < 1e-12);
            let p = h.param(&format!("delta[{}]", e.participant_id)).unwrap();
            let want = w * e.estimate.unwrap() + (1.0 - w) * pop;
            assert!((p.mean - want).abs() < 3.0 * p.mcse + 1e-3, "{} vs {}", p.mean, want);
        }
    }

    #[test]
    fn carryover_needs_repeated_transitions() {
        let g = GenerativeParams::new(0.0, 1.0, 1.0);
        let src = SequenceSource::Fixed(TreatmentSequence::parse("AB"));
        let mut p = protocol(4);
        p.n_blocks = 1;
        let one = simulate_series(&p, 1, &g, &src, &MissingnessSpec::None, 3).unwrap();
        assert!(carryover_pooled(&one.series, 1, &HierSpec::default()).is_err());
    }
}
