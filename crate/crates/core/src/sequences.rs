//! Treatment sequences: enumeration, classification, and randomization.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{ensure_valid, SequenceConstraints, TrialProtocol};
use crate::rng;

pub const DEFAULT_ENUMERATION_BOUND: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceOrigin {
    Enumerated,
    Randomized,
    Fixed,
}

/// Ordered assignment of treatments to periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentSequence {
    pub assignments: Vec<String>,
    pub origin: SequenceOrigin,
}

impl TreatmentSequence {
    pub fn new(assignments: Vec<String>, origin: SequenceOrigin) -> Self {
        TreatmentSequence { assignments, origin }
    }

    /// Parse `"ABBA"` (single-character ids) or `"A,B,B,A"`.
    pub fn parse(s: &str) -> Self {
        let assignments = if s.contains(',') {
            s.split(',').map(|x| x.trim().to_string()).collect()
        } else {
            s.chars().map(|c| c.to_string()).collect()
        };
        TreatmentSequence::new(assignments, SequenceOrigin::Fixed)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Check ids against a protocol's treatment list and length.
    pub fn check_against(&self, p: &TrialProtocol) -> Result<()> {
        if self.len() != p.n_periods() {
            return Err(Error::invalid(format!(
                "sequence has {} periods, protocol has {}",
                self.len(),
                p.n_periods()
            )));
        }
        for a in &self.assignments {
            if !p.treatments.iter().any(|t| &t.id == a) {
                return Err(Error::invalid(format!("sequence uses unknown treatment {a:?}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for TreatmentSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.assignments.iter().all(|a| a.chars().count() == 1) {
            for a in &self.assignments {
                f.write_str(a)?;
            }
            Ok(())
        } else {
            f.write_str(&self.assignments.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceLabel {
    Uninformative,
    SingleCrossover,
    Alternating,
    Counterbalanced,
    OtherBalanced,
    Unbalanced,
}

impl SequenceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SequenceLabel::Uninformative => "uninformative",
            SequenceLabel::SingleCrossover => "single_crossover",
            SequenceLabel::Alternating => "alternating",
            SequenceLabel::Counterbalanced => "counterbalanced",
            SequenceLabel::OtherBalanced => "other_balanced",
            SequenceLabel::Unbalanced => "unbalanced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceClass {
    pub label: SequenceLabel,
    pub n_crossovers: usize,
    pub balanced: bool,
}

/// Adjacent period pairs with differing treatments.
pub fn count_crossovers(s: &TreatmentSequence) -> usize {
    s.assignments.windows(2).filter(|w| w[0] != w[1]).count()
}

fn distinct(s: &[String]) -> Vec<&String> {
    let mut out: Vec<&String> = Vec::new();
    for a in s {
        if !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

fn is_balanced(s: &[String]) -> bool {
    let ids = distinct(s);
    let first = s.iter().filter(|a| *a == ids[0]).count();
    ids.iter().all(|id| s.iter().filter(|a| a == id).count() == first)
}

/// Place a sequence in the crossover-design taxonomy.
///
/// Counterbalanced means balanced, mirror-symmetric (equal to its own
/// reverse) and not strictly alternating; for four periods and two
/// treatments this is exactly {ABBA, BAAB}.
pub fn classify_sequence(s: &TreatmentSequence) -> SequenceClass {
    let n_crossovers = count_crossovers(s);
    let a = &s.assignments;
    if a.is_empty() {
        return SequenceClass {
            label: SequenceLabel::Uninformative,
            n_crossovers,
            balanced: true,
        };
    }
    let ids = distinct(a);
    let balanced = is_balanced(a);
    let label = if ids.len() == 1 {
        SequenceLabel::Uninformative
    } else if ids.len() > 2 {
        if balanced {
            SequenceLabel::OtherBalanced
        } else {
            SequenceLabel::Unbalanced
        }
    } else if n_crossovers == a.len() - 1 {
        SequenceLabel::Alternating
    } else if n_crossovers == 1 {
        SequenceLabel::SingleCrossover
    } else if balanced && a.iter().eq(a.iter().rev()) {
        SequenceLabel::Counterbalanced
    } else if balanced {
        SequenceLabel::OtherBalanced
    } else {
        SequenceLabel::Unbalanced
    };
    SequenceClass {
        label,
        n_crossovers,
        balanced,
    }
}

#[derive(Debug, Clone)]
pub struct EnumerateOptions {
    pub bound: u64,
    /// Block length for `block_randomized` constraints.
    pub block_len: Option<usize>,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        EnumerateOptions {
            bound: DEFAULT_ENUMERATION_BOUND,
            block_len: None,
        }
    }
}

fn satisfies(idx: &[usize], l: usize, treatments: &[String], c: &SequenceConstraints, block_len: Option<usize>) -> bool {
    let n = idx.len();
    if c.require_balance {
        if n % l != 0 {
            return false;
        }
        let mut counts = vec![0usize; l];
        for &i in idx {
            counts[i] += 1;
        }
        if counts.iter().any(|&k| k != n / l) {
            return false;
        }
    }
    if c.min_crossovers > 0 {
        let cross = idx.windows(2).filter(|w| w[0] != w[1]).count();
        if cross < c.min_crossovers {
            return false;
        }
    }
    if let Some(run) = &c.forbid_leading_run {
        if let Some(t) = treatments.iter().position(|x| *x == run.treatment) {
            if run.run_length <= n && idx[..run.run_length].iter().all(|&i| i == t) {
                return false;
            }
        }
    }
    if c.block_randomized {
        if let Some(b) = block_len {
            if b == 0 || n % b != 0 || b % l != 0 {
                return false;
            }
            for block in idx.chunks(b) {
                let mut counts = vec![0usize; l];
                for &i in block {
                    counts[i] += 1;
                }
                if counts.iter().any(|&k| k != b / l) {
                    return false;
                }
            }
        }
    }
    true
}

/// All `L^n` sequences that satisfy `constraints`, in lexicographic order of
/// treatment positions in `treatments`.
pub fn enumerate_sequences(
    n_periods: usize,
    treatments: &[String],
    constraints: &SequenceConstraints,
    opts: &EnumerateOptions,
) -> Result<Vec<TreatmentSequence>> {
    let l = treatments.len();
    if n_periods == 0 {
        return Err(Error::invalid("n_periods must be at least 1"));
    }
    if l < 2 {
        return Err(Error::invalid("at least two treatments are required"));
    }
    let total = (l as u64).checked_pow(n_periods as u32);
    match total {
        Some(t) if t <= opts.bound => {}
        _ => {
            return Err(Error::EnumerationTooLarge {
                count: format!("{l}^{n_periods}"),
                bound: opts.bound,
            })
        }
    }

    let mut out = Vec::new();
    let mut idx = vec![0usize; n_periods];
    loop {
        if satisfies(&idx, l, treatments, constraints, opts.block_len) {
            out.push(TreatmentSequence::new(
                idx.iter().map(|&i| treatments[i].clone()).collect(),
                SequenceOrigin::Enumerated,
            ));
        }
        // odometer increment, last position fastest
        let mut pos = n_periods;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < l {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Enumerate the sequences admitted by a protocol's own constraints.
pub fn enumerate_for_protocol(p: &TrialProtocol) -> Result<Vec<TreatmentSequence>> {
    enumerate_sequences(
        p.n_periods(),
        &p.treatment_ids(),
        &p.sequence_constraints,
        &EnumerateOptions {
            block_len: Some(p.periods_per_block as usize),
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockDraw {
    /// Each block is permuted independently.
    #[default]
    Independent,
    /// Draw the first block and repeat its order in every block.
    RepeatFirst,
}

/// Block randomization: each block is a uniformly random permutation of the
/// balanced multiset of treatments.
pub fn draw_block_randomized(p: &TrialProtocol, rng_seed: u64, mode: BlockDraw) -> Result<TreatmentSequence> {
    ensure_valid(p)?;
    let l = p.n_treatments();
    let t = p.periods_per_block as usize;
    if t % l != 0 {
        return Err(Error::invalid(format!(
            "cannot balance {l} treatments in blocks of {t} periods"
        )));
    }
    let mut rng = rng::stream(rng_seed, &[0x5e9]);
    let mut block: Vec<String> = p
        .treatments
        .iter()
        .flat_map(|tr| std::iter::repeat_n(tr.id.clone(), t / l))
        .collect();
    let mut assignments = Vec::with_capacity(p.n_periods());
    for k in 0..p.n_blocks {
        if k == 0 || mode == BlockDraw::Independent {
            block.sort_by_key(|id| p.treatments.iter().position(|tr| &tr.id == id));
            block.shuffle(&mut rng);
        }
        assignments.extend(block.iter().cloned());
    }
    Ok(TreatmentSequence::new(assignments, SequenceOrigin::Randomized))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedDesign {
    MultipleBaselineAb,
    WithdrawalReversalAba,
}

/// Literal fixed sequence: AB (multiple baseline) or ABA (withdrawal/reversal).
pub fn fixed_design(kind: FixedDesign, reference: &str, active: &str) -> TreatmentSequence {
    let a = reference.to_string();
    let b = active.to_string();
    let assignments = match kind {
        FixedDesign::MultipleBaselineAb => vec![a, b],
        FixedDesign::WithdrawalReversalAba => vec![a.clone(), b, a],
    };
    TreatmentSequence::new(assignments, SequenceOrigin::Fixed)
}

/// Randomization list: a `#` header line recording seed and constraints,
/// then one comma-separated sequence per line.
pub fn write_randomization_list<W: Write>(
    mut w: W,
    seed: Option<u64>,
    constraints: &SequenceConstraints,
    sequences: &[TreatmentSequence],
) -> std::io::Result<()> {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    let c = serde_json::to_string(constraints).expect("constraints serialize");
    writeln!(w, "# seed={seed} constraints={c}")?;
    for s in sequences {
        writeln!(w, "{}", s.assignments.join(","))?;
    }
    Ok(())
}

/// Parse a randomization list written by [`write_randomization_list`].
pub fn read_randomization_list(text: &str) -> Vec<TreatmentSequence> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            TreatmentSequence::new(
                l.split(',').map(|x| x.trim().to_string()).collect(),
                SequenceOrigin::Enumerated,
            )
        })
        .collect()
}
