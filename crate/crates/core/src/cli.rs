//! Batch command-line front end.
//!
//! Each run writes its outputs and one `manifest.json` into `--out`, which
//! must be empty unless `--force` is given. Exit status is 0 on success, 2
//! for input problems and 3 for numerical failures; failures also print one
//! JSON error record on standard error.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::adaptive::{run_adaptive_trial, run_replicates, AdaptiveConfig};
use crate::data::{attach_covariates, ingest_csv_path, write_csv_path, OutcomeSeries};
use crate::error::{Error, Result};
use crate::fit::{fit_bayes, fit_gls, Direction, ErrorModel, ModelSpec};
use crate::meta::{fit_hier, shrinkage_report, write_shrinkage_csv, HierSpec, SubgroupSpec};
use crate::power::{allocation_frontier, estimate_power, write_frontier_csv, write_power_csv, PowerQuery};
use crate::protocol::{validate_protocol, TrialProtocol};
use crate::sequences::{
    classify_sequence, draw_block_randomized, enumerate_sequences, read_randomization_list, write_randomization_list,
    BlockDraw, EnumerateOptions, TreatmentSequence,
};
use crate::simulate::{covariate_table, simulate_series, GenerativeParams, MissingnessSpec, SequenceSource, SimulationRecord};

pub const THREADS_ENV: &str = "NOF1_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nof1", version, about = "Design, simulate and analyze N-of-1 trials and series of N-of-1 trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Random seed; defaults to the seed in the input file, else 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gls,
    Bayes,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate or draw treatment sequences for a protocol.
    Design {
        #[arg(long)]
        protocol: PathBuf,
        /// List every admissible sequence (the default).
        #[arg(long)]
        enumerate: bool,
        /// Keep only sequences with equal counts of every treatment.
        #[arg(long)]
        balanced: bool,
        #[arg(long)]
        min_crossovers: Option<usize>,
        /// Draw this many block-randomized sequences instead.
        #[arg(long, conflicts_with = "enumerate")]
        draw: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a series of trials and write canonical CSV.
    Simulate {
        #[arg(long)]
        protocol: PathBuf,
        /// Generative parameters (JSON).
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 1)]
        participants: usize,
        /// MCAR missingness probability.
        #[arg(long)]
        mcar: Option<f64>,
        /// Randomization list to draw sequences from; block randomization otherwise.
        #[arg(long)]
        sequences: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a single participant's trial.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        /// Participant to analyze; required when the file holds several.
        #[arg(long)]
        participant: Option<String>,
        /// Model specification (JSON); defaults to iid errors, no trend.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ar1: bool,
        #[arg(long)]
        trend: bool,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Minimal clinically important difference for the benefit probability.
        #[arg(long, default_value_t = 0.0)]
        mcid: f64,
        /// Benefit means a decrease in the outcome.
        #[arg(long)]
        lower_is_better: bool,
        /// Also write every posterior draw.
        #[arg(long)]
        draws: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Hierarchical analysis of a series of trials.
    Meta {
        #[arg(long)]
        data: PathBuf,
        /// Covariate table (participant_id,<name>,...).
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Hierarchical specification (JSON).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Regress individual effects on this covariate.
        #[arg(long)]
        subgroup: Option<String>,
        #[arg(long)]
        ar1: bool,
        #[arg(long)]
        draws: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulation-based power of candidate designs.
    Power {
        /// Power query (JSON).
        #[arg(long)]
        query: PathBuf,
        /// Rank the designs matching the query's budget.
        #[arg(long)]
        frontier: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a Thompson-sampling adaptive trial.
    Adaptive {
        /// Adaptive configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Independent replicate trials; writes a per-replicate summary.
        #[arg(long)]
        replicates: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Design { .. } => "design",
            Command::Simulate { .. } => "simulate",
            Command::Analyze { .. } => "analyze",
            Command::Meta { .. } => "meta",
            Command::Power { .. } => "power",
            Command::Adaptive { .. } => "adaptive",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Design { common, .. }
            | Command::Simulate { common, .. }
            | Command::Analyze { common, .. }
            | Command::Meta { common, .. }
            | Command::Power { common, .. }
            | Command::Adaptive { common, .. } => common,
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        match self {
            Command::Design { protocol, .. } => v.push(protocol),
            Command::Simulate {
                protocol,
                params,
                sequences,
                ..
            } => {
                v.push(protocol);
                v.push(params);
                v.extend(sequences.as_deref());
            }
            Command::Analyze { data, model, .. } => {
                v.push(data);
                v.extend(model.as_deref());
            }
            Command::Meta {
                data, covariates, spec, ..
            } => {
                v.push(data);
                v.extend(covariates.as_deref());
                v.extend(spec.as_deref());
            }
            Command::Power { query, .. } => v.push(query),
            Command::Adaptive { config, .. } => v.push(config),
        }
        v
    }

    /// Flags other than paths, seed and output location.
    fn options(&self) -> serde_json::Value {
        match self {
            Command::Design {
                enumerate,
                balanced,
                min_crossovers,
                draw,
                ..
            } => json!({"enumerate": enumerate, "balanced": balanced, "min_crossovers": min_crossovers, "draw": draw}),
            Command::Simulate { participants, mcar, .. } => json!({"participants": participants, "mcar": mcar}),
            Command::Analyze {
                participant,
                ar1,
                trend,
                method,
                mcid,
                lower_is_better,
                draws,
                ..
            } => json!({"participant": participant, "ar1": ar1, "trend": trend, "method": method,
                        "mcid": mcid, "lower_is_better": lower_is_better, "draws": draws}),
            Command::Meta {
                subgroup, ar1, draws, ..
            } => json!({"subgroup": subgroup, "ar1": ar1, "draws": draws}),
            Command::Power { frontier, .. } => json!({"frontier": frontier}),
            Command::Adaptive { replicates, .. } => json!({"replicates": replicates}),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub out: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_seconds: f64,
    /// SHA-256 over the subcommand, options, seed and input file contents.
    pub config_hash: String,
    pub outputs: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn config_hash(cmd: &Command, seed: u64) -> Result<String> {
    let mut h = Sha256::new();
    h.update(cmd.name().as_bytes());
    h.update(cmd.options().to_string().as_bytes());
    h.update(seed.to_le_bytes());
    for p in cmd.inputs() {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(Error::invalid(format!(
                "output directory {} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Out<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        self.written.push(name.to_string());
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(BufWriter::new(f))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(name.to_string());
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }
}

fn design(
    protocol: &Path,
    balanced: bool,
    min_crossovers: Option<usize>,
    draw: Option<usize>,
    seed: u64,
    out: &mut Out,
) -> Result<String> {
    let p = TrialProtocol::load(protocol)?;
    let violations = validate_protocol(&p);
    if !violations.is_empty() {
        return Err(Error::InvalidProtocol(violations.iter().map(|v| v.to_string()).collect()));
    }
    let mut constraints = p.sequence_constraints.clone();
    constraints.require_balance |= balanced;
    if let Some(m) = min_crossovers {
        constraints.min_crossovers = constraints.min_crossovers.max(m);
    }
    let (seqs, list_seed): (Vec<TreatmentSequence>, Option<u64>) = match draw {
        Some(n) => {
            let s = (0..n)
                .map(|i| draw_block_randomized(&p, crate::rng::child_seed(seed, &[i as u64]), BlockDraw::Independent))
                .collect::<Result<_>>()?;
            (s, Some(seed))
        }
        None => {
            let opts = EnumerateOptions {
                block_len: Some(p.periods_per_block as usize),
                ..Default::default()
            };
            (enumerate_sequences(p.n_periods(), &p.treatment_ids(), &constraints, &opts)?, None)
        }
    };
    let mut f = out.file("sequences.txt")?;
    write_randomization_list(&mut f, list_seed, &constraints, &seqs).map_err(|e| Error::io("sequences.txt", e))?;
    let mut table = String::from("sequence,n_crossovers,balanced,label\n");
    for s in &seqs {
        let c = classify_sequence(s);
        table.push_str(&format!("{},{},{},{}\n", s, c.n_crossovers, c.balanced, c.label.as_str()));
    }
    out.text("sequences.csv", &table)?;
    let listed: Vec<String> = seqs.iter().map(|s| s.to_string()).collect();
    Ok(format!("{} sequences: {}", seqs.len(), listed.join(" ")))
}

fn simulate(
    protocol: &Path,
    params: &Path,
    participants: usize,
    mcar: Option<f64>,
    sequences: Option<&Path>,
    seed: u64,
    out: &mut Out,
) -> Result<String> {
    let p = TrialProtocol::load(protocol)?;
    let g: GenerativeParams = read_json(params)?;
    let source = match sequences {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let list = read_randomization_list(&text);
            if list.is_empty() {
                return Err(Error::invalid(format!("{} lists no sequences", path.display())));
            }
            SequenceSource::UniformFrom(list)
        }
        None => SequenceSource::Randomized(BlockDraw::Independent),
    };
    let missing = mcar.map_or(MissingnessSpec::None, |probability| MissingnessSpec::Mcar { probability });
    let sim = simulate_series(&p, participants, &g, &source, &missing, seed)?;
    let path = out.dir.join("data.csv");
    out.written.push("data.csv".into());
    write_csv_path(&path, &sim.series)?;
    if sim.series.iter().any(|s| !s.covariates.is_empty()) {
        out.text("covariates.csv", &covariate_table(&sim.series))?;
    }
    out.json(
        "truth.json",
        &SimulationRecord {
            params: g,
            missing,
            n_participants: participants,
            seed,
            truths: sim.truths,
        },
    )?;
    Ok(format!("simulated {participants} participants"))
}

fn model_from(path: Option<&Path>, ar1: bool, trend: bool, seed: u64) -> Result<ModelSpec> {
    let mut m: ModelSpec = match path {
        Some(p) => read_json(p)?,
        None => ModelSpec::default(),
    };
    if ar1 {
        m.error_model = ErrorModel::Ar1;
    }
    m.include_trend |= trend;
    m.mcmc.seed = seed;
    Ok(m)
}

fn pick(series: Vec<OutcomeSeries>, id: Option<&str>) -> Result<OutcomeSeries> {
    match id {
        Some(id) => series
            .into_iter()
            .find(|s| s.participant_id == id)
            .ok_or_else(|| Error::invalid(format!("participant {id} not found"))),
        None if series.len() == 1 => Ok(series.into_iter().next().unwrap()),
        None => Err(Error::invalid(format!(
            "the file holds {} participants; choose one with --participant",
            series.len()
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    data: &Path,
    participant: Option<&str>,
    model: Option<&Path>,
    ar1: bool,
    trend: bool,
    method: Method,
    mcid: f64,
    lower_is_better: bool,
    draws: bool,
    seed: u64,
    out: &mut Out,
) -> Result<String> {
    let series = pick(ingest_csv_path(data)?, participant)?;
    let spec = model_from(model, ar1, trend, seed)?;
    let mut msg = Vec::new();
    if method != Method::Bayes {
        let g = fit_gls(&series, &spec)?;
        msg.push(format!("GLS delta {:.4} (se {:.4}, p {:.4})", g.delta(), g.delta_se(), g.delta_p()));
        out.json("gls.json", &g)?;
    }
    if method != Method::Gls {
        let mut b = fit_bayes(&series, &spec)?;
        let dir = if lower_is_better { Direction::Less } else { Direction::Greater };
        b.set_benefit(mcid, dir);
        b.summary.write_csv(out.file("posterior_summary.csv")?)?;
        out.json("posterior.json", &b.summary)?;
        if draws {
            b.draws
                .write_csv(out.file("draws.csv")?)
                .map_err(|e| Error::io("draws.csv", e))?;
        }
        msg.push(format!(
            "P(benefit) {:.4}{}",
            b.summary.benefit.probability,
            if b.summary.converged { "" } else { " (not converged)" }
        ));
    }
    Ok(msg.join("; "))
}

#[allow(clippy::too_many_arguments)]
fn meta(
    data: &Path,
    covariates: Option<&Path>,
    spec_path: Option<&Path>,
    subgroup: Option<&str>,
    ar1: bool,
    draws: bool,
    seed: u64,
    out: &mut Out,
) -> Result<String> {
    let mut series = ingest_csv_path(data)?;
    if series.len() < 2 {
        return Err(Error::invalid(format!(
            "need ≥ 2 individuals for a series analysis, found {}",
            series.len()
        )));
    }
    if let Some(c) = covariates {
        let f = fs::File::open(c).map_err(|e| Error::io(c, e))?;
        attach_covariates(&mut series, f)?;
    }
    let mut spec: HierSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => HierSpec::default(),
    };
    if ar1 {
        spec.model.error_model = ErrorModel::Ar1;
    }
    if let Some(cov) = subgroup {
        spec.subgroup = Some(SubgroupSpec {
            covariate: cov.to_string(),
        });
    }
    spec.model.mcmc.seed = seed;
    let h = fit_hier(&series, &spec)?;
    h.write_population_csv(out.file("population.csv")?)?;
    h.write_individual_csv(out.file("individual.csv")?)?;
    match shrinkage_report(&h, &series, &spec.model) {
        Ok(rows) => write_shrinkage_csv(out.file("shrinkage.csv")?, &rows)?,
        Err(e) if !e.is_numerical() => return Err(e),
        Err(_) => {}
    }
    if draws {
        h.draws
            .write_csv(out.file("draws.csv")?)
            .map_err(|e| Error::io("draws.csv", e))?;
    }
    out.json(
        "fit.json",
        &json!({
            "reference": h.reference,
            "pooling": h.pooling,
            "subgroup": h.subgroup,
            "converged": h.converged,
            "max_rhat": h.max_rhat,
            "rho_accept_rate": h.rho_accept_rate,
            "individuals": h.individuals,
            "warnings": h.warnings,
        }),
    )?;
    let d = h.param("delta").or_else(|| h.param("delta1"));
    Ok(match d {
        Some(d) => format!("population delta {:.4} (sd {:.4})", d.mean, d.sd),
        None => format!("fitted {} individuals", series.len()),
    })
}

fn power(query: &Path, frontier: bool, seed: Option<u64>, out: &mut Out) -> Result<(String, u64)> {
    let mut q: PowerQuery = read_json(query)?;
    if let Some(s) = seed {
        q.seed = s;
    }
    let r = estimate_power(&q)?;
    write_power_csv(out.file("power.csv")?, &r.designs)?;
    let mut msg: Vec<String> = r
        .designs
        .iter()
        .map(|d| format!("{} power {:.3} (mc se {:.3})", d.label, d.power, d.mc_se))
        .collect();
    if frontier || q.budget.is_some() {
        let f = allocation_frontier(&q)?;
        write_frontier_csv(out.file("frontier.csv")?, &f)?;
        msg.push(format!("frontier leader {}", f[0].result.label));
    }
    Ok((msg.join("; "), q.seed))
}

fn adaptive(config: &Path, replicates: Option<usize>, seed: Option<u64>, out: &mut Out) -> Result<(String, u64)> {
    let mut cfg: AdaptiveConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let trace = run_adaptive_trial(&cfg)?;
    trace.write_csv(out.file("trace.csv")?)?;
    let mut msg = format!(
        "cumulative regret {:.4}; best arm {}",
        trace.cumulative_regret(),
        trace.best_arm
    );
    if let Some(n) = replicates {
        let reps = run_replicates(&cfg, n)?;
        let window = (cfg.n_epochs / 4).max(1);
        let mut table = format!("replicate,cumulative_regret,best_arm_share_last_{window}\n");
        for (i, t) in reps.iter().enumerate() {
            table.push_str(&format!("{},{},{}\n", i, t.cumulative_regret(), t.best_arm_share(window)));
        }
        out.text("replicates.csv", &table)?;
        let mean = reps.iter().map(|t| t.cumulative_regret()).sum::<f64>() / n.max(1) as f64;
        msg.push_str(&format!("; mean regret over {n} replicates {mean:.4}"));
    }
    Ok((msg, cfg.seed))
}

fn execute(cmd: &Command) -> Result<String> {
    let start = Instant::now();
    let common = cmd.common();
    prepare_out(&common.out, common.force)?;
    let mut out = Out {
        dir: &common.out,
        written: Vec::new(),
    };
    let fixed_seed = common.seed.unwrap_or(0);
    let (msg, seed) = match cmd {
        Command::Design {
            protocol,
            balanced,
            min_crossovers,
            draw,
            ..
        } => (design(protocol, *balanced, *min_crossovers, *draw, fixed_seed, &mut out)?, fixed_seed),
        Command::Simulate {
            protocol,
            params,
            participants,
            mcar,
            sequences,
            ..
        } => (
            simulate(protocol, params, *participants, *mcar, sequences.as_deref(), fixed_seed, &mut out)?,
            fixed_seed,
        ),
        Command::Analyze {
            data,
            participant,
            model,
            ar1,
            trend,
            method,
            mcid,
            lower_is_better,
            draws,
            ..
        } => (
            analyze(
                data,
                participant.as_deref(),
                model.as_deref(),
                *ar1,
                *trend,
                *method,
                *mcid,
                *lower_is_better,
                *draws,
                fixed_seed,
                &mut out,
            )?,
            fixed_seed,
        ),
        Command::Meta {
            data,
            covariates,
            spec,
            subgroup,
            ar1,
            draws,
            ..
        } => (
            meta(
                data,
                covariates.as_deref(),
                spec.as_deref(),
                subgroup.as_deref(),
                *ar1,
                *draws,
                fixed_seed,
                &mut out,
            )?,
            fixed_seed,
        ),
        Command::Power { query, frontier, .. } => power(query, *frontier, common.seed, &mut out)?,
        Command::Adaptive { config, replicates, .. } => adaptive(config, *replicates, common.seed, &mut out)?,
    };
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        inputs: cmd.inputs().iter().map(|p| p.display().to_string()).collect(),
        out: common.out.display().to_string(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config_hash: config_hash(cmd, seed)?,
        outputs: out.written.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(msg)
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|_| execute(&cli.command));
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            let code = exit_code(&e);
            let record = json!({
                "error": e.kind(),
                "message": e.to_string(),
                "subcommand": cli.command.name(),
                "exit_code": code,
            });
            eprintln!("{record}");
            code
        }
    }
}
