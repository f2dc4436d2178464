//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the report is always printed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use nof1::adaptive::{run_replicates, thompson_step, AdaptiveConfig, ArmPosterior, ArmState, ArmTruth};
use nof1::fit::{fit_bayes, fit_gls, HalfNormalPrior, McmcSettings, ModelSpec, NormalPrior};
use nof1::meta::{fit_hier, fit_normal_normal, shrinkage_report, shrinkage_table, HierSpec, IndividualEstimate, SubgroupSpec};
use nof1::power::{allocation_frontier, estimate_power, Design, PowerQuery};
use nof1::protocol::{planned_measurement_bounds, LeadingRun, SequenceConstraints, TrialProtocol, WashoutPolicy};
use nof1::rng::{std_normal, stream};
use nof1::sequences::{draw_block_randomized, enumerate_sequences, BlockDraw, EnumerateOptions};
use nof1::simulate::{
    ar1_noise, simulate_individual, simulate_series, ArScope, GenerativeParams, MissingnessSpec, SequenceSource,
    SubgroupSim,
};
use nof1::stats::{ks_uniform, normal_cdf};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn protocol(n_blocks: u32, m: u32) -> TrialProtocol {
    TrialProtocol::two_arm("A", "B", n_blocks, 2, 7, m).with_washout(WashoutPolicy::none())
}

fn randomized() -> SequenceSource {
    SequenceSource::Randomized(BlockDraw::Independent)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean and its Monte Carlo standard error over replicates.
fn mean_mcse(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (m, (v / x.len() as f64).sqrt())
}

fn c1_sequences() -> Check {
    let ab = vec!["A".to_string(), "B".to_string()];
    let opts = EnumerateOptions::default();
    let balanced = SequenceConstraints {
        require_balance: true,
        ..Default::default()
    };
    let three_crossovers = SequenceConstraints {
        require_balance: true,
        min_crossovers: 3,
        forbid_leading_run: Some(LeadingRun {
            treatment: "A".into(),
            run_length: 2,
        }),
        block_randomized: false,
    };
    let n = |len, c: &SequenceConstraints| enumerate_sequences(len, &ab, c, &opts).map(|v| v.len()).unwrap_or(0);
    let got = [
        n(4, &SequenceConstraints::default()),
        n(4, &balanced),
        n(6, &balanced),
        n(6, &three_crossovers),
    ];
    ensure(got == [16, 6, 20, 12], format!("counts {got:?}, want [16, 6, 20, 12]"))
}

fn c2_planned_bounds() -> Check {
    let b = planned_measurement_bounds((2, 4), (1, 2), 1, 2, Some(12)).map_err(|e| e.to_string())?;
    ensure(b == (28, 84), format!("bounds {b:?}"))
}

fn c3_t_test_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let mut rng = stream(303, &[k]);
        let p = protocol(rng.random_range(1..=4), rng.random_range(2..=10));
        let seq = draw_block_randomized(&p, k, BlockDraw::Independent).map_err(|e| e.to_string())?;
        let g = GenerativeParams::new(rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0), rng.random_range(0.1..3.0));
        let s = simulate_individual(&p, "P", &seq, &g, &MissingnessSpec::Mcar { probability: 0.15 }, k)
            .map_err(|e| e.to_string())?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for m in &s.measurements {
            if let Some(v) = m.value {
                if m.treatment_id == "A" {
                    a.push(v)
                } else {
                    b.push(v)
                }
            }
        }
        if a.len() < 2 || b.len() < 2 {
            continue;
        }
        // pooled two-sample t-test computed from scratch
        let (ma, mb) = (mean(&a), mean(&b));
        let ss: f64 = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let se = (ss / (na + nb - 2.0) * (1.0 / na + 1.0 / nb)).sqrt();
        let est = mb - ma;
        let f = fit_gls(&s, &ModelSpec::iid()).map_err(|e| e.to_string())?;
        for (got, want) in [(f.delta(), est), (f.delta_se(), se), (f.delta_t(), est / se)] {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-10, format!("max scaled discrepancy {worst:.2e}"))
}

fn lag1(x: &[f64]) -> f64 {
    let m = mean(x);
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    num / den
}

fn c4_ar1() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    let p = protocol(5, 10);
    let spec = ModelSpec {
        ar_scope: ArScope::Continuous,
        ..ModelSpec::ar1()
    };
    for (i, &rho) in [-0.5, 0.0, 0.5, 0.9].iter().enumerate() {
        let mut rng = stream(404, &[i as u64]);
        let x = ar1_noise(&mut rng, 10_000, 10_000, rho, 1.0);
        let r1 = lag1(&x);
        let mut g = GenerativeParams::new(0.0, 0.5, 1.0);
        g.rho = rho;
        g.ar_scope = ArScope::Continuous;
        let fits: Vec<f64> = (0..200u64)
            .into_par_iter()
            .map(|k| {
                let seed = nof1::rng::child_seed(405, &[i as u64, k]);
                let seq = draw_block_randomized(&p, seed, BlockDraw::Independent).unwrap();
                let s = simulate_individual(&p, "P", &seq, &g, &MissingnessSpec::None, seed).unwrap();
                fit_gls(&s, &spec).map(|f| f.rho).unwrap_or(f64::NAN)
            })
            .collect();
        let rho_hat = mean(&fits);
        ok &= (r1 - rho).abs() <= 0.02 && (rho_hat - rho).abs() <= 0.05;
        notes.push(format!("rho {rho}: lag1 {r1:.3}, mean fit {rho_hat:.3}"));
    }
    ensure(ok, notes.join("; "))
}

fn c5_sbc() -> Check {
    const CYCLES: u64 = 500;
    let p = protocol(3, 8);
    let names = ["alpha", "delta", "sigma", "rho"];
    let results: Vec<Option<([f64; 4], bool)>> = (0..CYCLES)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(505, &[k]);
            let truth = [
                std_normal(&mut rng),
                std_normal(&mut rng),
                std_normal(&mut rng).abs(),
                rng.random_range(-0.999..0.999),
            ];
            let mut g = GenerativeParams::new(truth[0], truth[1], truth[2]);
            g.rho = truth[3];
            let seq = draw_block_randomized(&p, k, BlockDraw::Independent).ok()?;
            let s = simulate_individual(&p, "P", &seq, &g, &MissingnessSpec::None, k).ok()?;
            let mut spec = ModelSpec::ar1();
            spec.priors.alpha = NormalPrior::new(0.0, 1.0);
            spec.priors.delta = NormalPrior::new(0.0, 1.0);
            spec.priors.sigma = HalfNormalPrior { scale: 1.0 };
            spec.mcmc = McmcSettings {
                n_chains: 2,
                n_warmup: 200,
                n_samples: 100,
                thin: 5,
                seed: k,
                ..Default::default()
            };
            let fit = fit_bayes(&s, &spec).ok()?;
            let mut u = [0.0; 4];
            for (j, name) in names.iter().enumerate() {
                let d = fit.draws.param(name)?;
                let rank = d.iter().filter(|v| **v < truth[j]).count();
                u[j] = (rank as f64 + 0.5) / (d.len() as f64 + 1.0);
            }
            let q = fit.summary.param("delta")?.quantiles;
            Some((u, q[0] <= truth[1] && truth[1] <= q[4]))
        })
        .collect();
    let done: Vec<&([f64; 4], bool)> = results.iter().flatten().collect();
    if done.len() < 500 {
        return Err(format!("only {} of {CYCLES} cycles completed", done.len()));
    }
    let mut notes = Vec::new();
    let mut ok = true;
    for (j, name) in names.iter().enumerate() {
        let u: Vec<f64> = done.iter().map(|r| r.0[j]).collect();
        let (_, pval) = ks_uniform(&u);
        ok &= pval > 0.01;
        notes.push(format!("{name} KS p {pval:.3}"));
    }
    let coverage = done.iter().filter(|r| r.1).count() as f64 / done.len() as f64;
    ok &= (coverage - 0.95).abs() <= 0.03;
    notes.push(format!("delta 95% coverage {coverage:.3}"));
    ensure(ok, format!("{} cycles; {}", done.len(), notes.join(", ")))
}

fn hier_mcmc(seed: u64) -> McmcSettings {
    McmcSettings {
        n_warmup: 500,
        n_samples: 500,
        seed,
        ..Default::default()
    }
}

fn c6_hierarchical() -> Check {
    const REPS: u64 = 200;
    let p = protocol(4, 7);
    let mut g = GenerativeParams::new(0.0, 0.5, 1.0);
    g.sd_delta = 0.3;
    g.sd_alpha = 0.5;
    let fits: Vec<Option<[f64; 3]>> = (0..REPS)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_series(&p, 40, &g, &randomized(), &MissingnessSpec::None, 600 + r).ok()?;
            let spec = HierSpec {
                model: ModelSpec {
                    mcmc: hier_mcmc(r),
                    ..ModelSpec::iid()
                },
                ..Default::default()
            };
            let h = fit_hier(&sim.series, &spec).ok()?;
            Some([h.param("delta")?.mean, h.param("sd_delta")?.mean, h.param("sigma")?.mean])
        })
        .collect();
    let fits: Vec<[f64; 3]> = fits.into_iter().flatten().collect();
    let mut notes = vec![format!("{} replicates", fits.len())];
    let mut ok = fits.len() as u64 == REPS;
    for (j, (name, truth)) in [("delta", 0.5), ("sd_delta", 0.3), ("sigma", 1.0)].iter().enumerate() {
        let (m, se) = mean_mcse(&fits.iter().map(|f| f[j]).collect::<Vec<_>>());
        ok &= (m - truth).abs() <= 2.0 * se;
        notes.push(format!("{name} {m:.4} (truth {truth}, mc se {se:.4})"));
    }

    // known-variance toy: posterior means against the conjugate weight
    let tau: f64 = 0.3;
    let mut rng = stream(606, &[]);
    let estimates: Vec<IndividualEstimate> = (0..20)
        .map(|i| {
            let v = 0.02 + 0.03 * i as f64;
            let d = 0.5 + tau * std_normal(&mut rng);
            IndividualEstimate {
                participant_id: format!("T{i:02}"),
                estimate: Some(d + v.sqrt() * std_normal(&mut rng)),
                variance: v,
            }
        })
        .collect();
    let mcmc = McmcSettings {
        n_warmup: 1000,
        n_samples: 4000,
        seed: 7,
        ..Default::default()
    };
    let toy = fit_normal_normal(&estimates, tau, NormalPrior::new(0.0, 10.0), mcmc).map_err(|e| e.to_string())?;
    let rows = shrinkage_table(&toy, &estimates).map_err(|e| e.to_string())?;
    let mu_se = toy.param("delta").map(|p| p.mcse).unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    for r in &rows {
        let own = r.own_estimate.unwrap();
        let se_i = toy.param(&format!("delta[{}]", r.participant_id)).unwrap().mcse;
        let se = (se_i * se_i + mu_se * mu_se).sqrt() / (own - r.population_mean).abs();
        let want = tau * tau / (tau * tau + r.own_variance);
        worst = worst.max((r.implied_weight.unwrap() - want).abs() / se);
    }
    ok &= worst <= 2.0;
    notes.push(format!("toy weights within {worst:.2} mc se"));

    // balanced series: every posterior mean between own estimate and population mean
    let sim = simulate_series(&p, 40, &g, &randomized(), &MissingnessSpec::None, 650).map_err(|e| e.to_string())?;
    let spec = HierSpec {
        model: ModelSpec {
            mcmc: hier_mcmc(1),
            ..ModelSpec::iid()
        },
        ..Default::default()
    };
    let h = fit_hier(&sim.series, &spec).map_err(|e| e.to_string())?;
    let report = shrinkage_report(&h, &sim.series, &spec.model).map_err(|e| e.to_string())?;
    // excursions past the interval ends must be within Monte Carlo error
    let pop_se = h.param("delta").map(|p| p.mcse).unwrap_or(f64::NAN);
    let mut outside = 0;
    let mut beyond = 0;
    for r in &report {
        let own = r.own_estimate.unwrap_or(f64::NAN);
        let (lo, hi) = (own.min(r.population_mean), own.max(r.population_mean));
        let gap = (lo - r.posterior_mean).max(r.posterior_mean - hi).max(0.0);
        let se_i = h.param(&format!("delta[{}]", r.participant_id)).map_or(f64::NAN, |p| p.mcse);
        outside += r.outside_interval as usize;
        beyond += (gap > 2.0 * (se_i * se_i + pop_se * pop_se).sqrt()) as usize;
    }
    ok &= beyond == 0;
    notes.push(format!(
        "{beyond} of {} posterior means beyond 2 mc se of the shrinkage interval ({outside} past its ends)",
        report.len()
    ));
    ensure(ok, notes.join("; "))
}

fn subgroup_spec(seed: u64) -> HierSpec {
    HierSpec {
        model: ModelSpec {
            mcmc: hier_mcmc(seed),
            ..ModelSpec::iid()
        },
        subgroup: Some(SubgroupSpec {
            covariate: "male".into(),
        }),
        ..Default::default()
    }
}

fn c7_subgroup() -> Check {
    const REPS: u64 = 100;
    let p = protocol(4, 7);
    let mut g = GenerativeParams::new(0.0, 1.0, 1.0);
    g.sd_delta = 0.3;
    g.subgroup = Some(SubgroupSim {
        covariate: "male".into(),
        probability: 0.5,
        delta2: 0.5,
    });
    let fits: Vec<[f64; 2]> = (0..REPS)
        .into_par_iter()
        .filter_map(|r| {
            let sim = simulate_series(&p, 40, &g, &randomized(), &MissingnessSpec::None, 700 + r).ok()?;
            let h = fit_hier(&sim.series, &subgroup_spec(r)).ok()?;
            Some([h.param("delta1")?.mean, h.param("delta2")?.mean])
        })
        .collect();
    let mut ok = fits.len() as u64 == REPS;
    let mut notes = Vec::new();
    for (j, (name, truth)) in [("delta1", 1.0), ("delta2", 0.5)].iter().enumerate() {
        let (m, se) = mean_mcse(&fits.iter().map(|f| f[j]).collect::<Vec<_>>());
        ok &= (m - truth).abs() <= 2.0 * se;
        notes.push(format!("{name} {m:.4} (mc se {se:.4})"));
    }

    // noiseless limit: group means of individual effects are delta1 and delta1 + delta2
    let mut quiet = g.clone();
    quiet.sigma = 0.0;
    quiet.sd_delta = 0.0;
    let sim = simulate_series(&p, 20, &quiet, &randomized(), &MissingnessSpec::None, 750).map_err(|e| e.to_string())?;
    let mut groups: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
    for s in &sim.series {
        let d = fit_gls(s, &ModelSpec::iid()).map_err(|e| e.to_string())?.delta();
        groups.entry(s.covariates["male"] == 1.0).or_default().push(d);
    }
    let female = mean(groups.get(&false).ok_or("no female participants")?);
    let male = mean(groups.get(&true).ok_or("no male participants")?);
    ok &= (female - 1.0).abs() < 1e-10 && (male - 1.5).abs() < 1e-10;
    let h = fit_hier(&sim_noisy_copy(&sim.series), &subgroup_spec(3)).map_err(|e| e.to_string())?;
    let d1 = h.param("delta1").unwrap().mean;
    let d2 = h.param("delta2").unwrap().mean;
    let structure = (h.population_delta(Some(1.0)).unwrap() - (d1 + d2)).abs() < 1e-12
        && (h.population_delta(Some(0.0)).unwrap() - d1).abs() < 1e-12;
    ok &= structure;
    notes.push(format!("noiseless group means {female:.12} / {male:.12}; male mean = delta1 + delta2: {structure}"));
    ensure(ok, notes.join("; "))
}

/// Noiseless series with a tiny jitter so the residual scale is not exactly 0.
fn sim_noisy_copy(series: &[nof1::data::OutcomeSeries]) -> Vec<nof1::data::OutcomeSeries> {
    let mut rng = stream(751, &[]);
    series
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for m in &mut s.measurements {
                m.value = m.value.map(|v| v + 1e-3 * std_normal(&mut rng));
            }
            s
        })
        .collect()
}

fn c8_power() -> Check {
    let mut notes = Vec::new();
    let mut g = GenerativeParams::new(0.0, 0.0, 1.0);
    g.sd_delta = 0.3;
    let mut q = PowerQuery::new(protocol(2, 7), vec![Design::new(20, 2, 7)], g, 1000);
    q.seed = 808;
    let null = &estimate_power(&q).map_err(|e| e.to_string())?.designs[0];
    let bound = 3.0 * (0.05f64 * 0.95 / 1000.0).sqrt();
    let mut ok = (null.power - 0.05).abs() <= bound;
    notes.push(format!("null power {:.3} (nominal 0.05 +- {bound:.3})", null.power));

    for (sd_delta, delta) in [(0.6, 0.2), (1.0, 0.3)] {
        let mut g = GenerativeParams::new(0.0, delta, 1.0);
        g.sd_delta = sd_delta;
        let designs = vec![Design::new(25, 4, 14), Design::new(50, 2, 14), Design::new(100, 1, 14)];
        let mut q = PowerQuery::new(protocol(2, 14), designs, g, 1000);
        q.budget = Some(2800);
        q.seed = 809;
        let f = allocation_frontier(&q).map_err(|e| e.to_string())?;
        let order: Vec<usize> = f.iter().map(|e| e.result.design.n_participants).collect();
        let separated = f.windows(2).all(|w| w[0].result.interval95().0 > w[1].result.interval95().1);
        ok &= order == [100, 50, 25] && separated;
        let powers: Vec<String> = f.iter().map(|e| format!("n{} {:.3}", e.result.design.n_participants, e.result.power)).collect();
        notes.push(format!("sd_delta {sd_delta}: {} (separated: {separated})", powers.join(" > ")));
    }
    ensure(ok, notes.join("; "))
}

fn c9_thompson() -> Check {
    let mut notes = Vec::new();
    let state = |arms: &[(f64, f64)]| ArmState {
        ids: vec!["T0".into(), "T1".into()],
        arms: arms
            .iter()
            .map(|&(mean, precision)| ArmPosterior { mean, precision })
            .collect(),
        obs_var: 1.0,
    };
    let freq = |s: &ArmState, seed: u64| {
        let mut rng = stream(seed, &[]);
        (0..10_000).filter(|_| thompson_step(s, &mut rng) == "T0").count() as f64 / 1e4
    };
    let degenerate = freq(&state(&[(10.0, f64::INFINITY), (0.0, f64::INFINITY)]), 901);
    let symmetric = freq(&state(&[(0.0, 1.0), (0.0, 1.0)]), 902);
    let shifted = freq(&state(&[(1.0, 1.0), (0.0, 1.0)]), 903);
    let want = normal_cdf(1.0 / 2f64.sqrt());
    let mut ok = degenerate == 1.0 && (symmetric - 0.5).abs() <= 0.02 && (shifted - want).abs() <= 0.02;
    notes.push(format!("frequencies {degenerate:.3} / {symmetric:.3} / {shifted:.3} (want {want:.3})"));

    let arms = [("walk", 0.0), ("resistance", 0.5), ("interval", 1.0)]
        .iter()
        .map(|&(id, mean)| ArmTruth { id: id.into(), mean })
        .collect();
    let mut cfg = AdaptiveConfig::new(arms, 1.0, 200, 7);
    cfg.seed = 909;
    let runs = run_replicates(&cfg, 100).map_err(|e| e.to_string())?;
    let good = runs.iter().filter(|t| t.best_arm_share(50) > 0.8).count();
    ok &= good >= 90;
    let regret_at = |n: usize| mean(&runs.iter().map(|t| t.epochs[n - 1].cumulative_regret).collect::<Vec<_>>());
    let ratios = [regret_at(100) / regret_at(50), regret_at(200) / regret_at(100)];
    ok &= ratios.iter().all(|r| *r < 2.0);
    notes.push(format!("{good}/100 runs favour the best arm; regret ratios {:.2}, {:.2}", ratios[0], ratios[1]));
    ensure(ok, notes.join("; "))
}

fn run_cli(args: &[&str], threads: Option<&str>) -> std::result::Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nof1"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("NOF1_THREADS", t);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// Every file byte for byte; manifests without the wall time.
fn same_outputs(a: &Path, b: &Path) -> std::result::Result<usize, String> {
    let mut names: Vec<PathBuf> = fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    names.sort();
    for p in &names {
        let name = p.file_name().unwrap();
        let (x, y) = (fs::read(p).unwrap(), fs::read(b.join(name)).map_err(|e| e.to_string())?);
        if name == "manifest.json" {
            let strip = |v: &[u8]| {
                let mut j: serde_json::Value = serde_json::from_slice(v).unwrap();
                j.as_object_mut().unwrap().remove("wall_time_seconds");
                j.as_object_mut().unwrap().remove("out");
                j
            };
            if strip(&x) != strip(&y) {
                return Err(format!("{} manifests differ", a.display()));
            }
        } else if x != y {
            return Err(format!("{} differs", p.display()));
        }
    }
    Ok(names.len())
}

fn c10_cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let f = |name: &str| fx.join(name).to_string_lossy().into_owned();
    let t = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    fs::write(tmp.path().join("model.json"), r#"{"mcmc": {"n_chains": 2, "n_warmup": 200, "n_samples": 200}}"#).unwrap();
    fs::write(
        tmp.path().join("hier.json"),
        r#"{"model": {"error_model": "ar1", "mcmc": {"n_chains": 2, "n_warmup": 200, "n_samples": 200}}}"#,
    )
    .unwrap();
    let data = t("sim1/data.csv");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("design", vec!["design".into(), "--protocol".into(), f("exercise.protocol"), "--enumerate".into(), "--balanced".into()]),
        ("draw", vec!["design".into(), "--protocol".into(), f("six_period.protocol"), "--draw".into(), "5".into(), "--seed".into(), "4".into()]),
        ("sim", vec!["simulate".into(), "--protocol".into(), f("exercise.protocol"), "--params".into(), f("params.json"),
                     "--participants".into(), "6".into(), "--mcar".into(), "0.1".into(), "--seed".into(), "3".into()]),
        ("analyze", vec!["analyze".into(), "--data".into(), data.clone(), "--participant".into(), "P002".into(),
                         "--model".into(), t("model.json"), "--ar1".into(), "--draws".into()]),
        ("meta", vec!["meta".into(), "--data".into(), data.clone(), "--spec".into(), t("hier.json"), "--seed".into(), "5".into()]),
        ("power", vec!["power".into(), "--query".into(), f("power_query.json"), "--frontier".into()]),
        ("adaptive", vec!["adaptive".into(), "--config".into(), f("adaptive.json"), "--replicates".into(), "10".into()]),
    ];
    let mut compared = 0;
    for (tag, args) in &runs {
        for (k, threads) in [(1, Some("1")), (2, None)] {
            let out = t(&format!("{tag}{k}"));
            let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
            a.extend(["--out", &out]);
            run_cli(&a, threads)?;
        }
        compared += same_outputs(&tmp.path().join(format!("{tag}1")), &tmp.path().join(format!("{tag}2")))?;
    }
    Ok(format!("{} subcommand runs, {compared} files identical across repeat runs", runs.len()))
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Check)> = vec![
        ("sequence combinatorics", Duration::from_secs(1), c1_sequences),
        ("planned measurement bounds", Duration::from_secs(1), c2_planned_bounds),
        ("GLS matches t-test oracle", Duration::from_secs(10), c3_t_test_oracle),
        ("AR(1) moment recovery", Duration::from_secs(120), c4_ar1),
        ("simulation-based calibration", Duration::from_secs(1800), c5_sbc),
        ("hierarchical recovery and shrinkage", Duration::from_secs(1200), c6_hierarchical),
        ("subgroup regression", Duration::from_secs(600), c7_subgroup),
        ("power engine", Duration::from_secs(1800), c8_power),
        ("Thompson sampling", Duration::from_secs(600), c9_thompson),
        ("pipeline determinism", Duration::from_secs(300), c10_cli_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s limit", limit.as_secs())),
            Err(d) => (false, d),
        };
        failed += !pass as usize;
        println!(
            "{} [{:>2}] {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
