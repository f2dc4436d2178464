//! Trial protocols: the planned design of a single N-of-1 trial.
//!
//! A [`TrialProtocol`] is a plain value. Nothing is checked at construction;
//! call [`validate_protocol`] to get every violated constraint at once.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Treatment {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub is_reference: bool,
}

impl Treatment {
    pub fn new(id: impl Into<String>, is_reference: bool) -> Self {
        Treatment {
            id: id.into(),
            description: String::new(),
            is_reference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WashoutMode {
    None,
    DropFirstMeasurements,
    WeightRamp,
}

/// Analytic washout: how measurements at the start of each period are
/// down-weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WashoutPolicy {
    pub mode: WashoutMode,
    #[serde(default)]
    pub n_drop: usize,
    #[serde(default)]
    pub ramp_weights: Option<Vec<f64>>,
    /// Only apply at periods whose treatment differs from the previous one.
    #[serde(default)]
    pub crossovers_only: bool,
}

impl WashoutPolicy {
    pub fn none() -> Self {
        WashoutPolicy {
            mode: WashoutMode::None,
            n_drop: 0,
            ramp_weights: None,
            crossovers_only: false,
        }
    }

    pub fn drop_first(n_drop: usize) -> Self {
        WashoutPolicy {
            mode: WashoutMode::DropFirstMeasurements,
            n_drop,
            ramp_weights: None,
            crossovers_only: false,
        }
    }

    pub fn ramp(weights: Vec<f64>) -> Self {
        WashoutPolicy {
            mode: WashoutMode::WeightRamp,
            n_drop: 0,
            ramp_weights: Some(weights),
            crossovers_only: false,
        }
    }

    /// Drop the first measurement of each period when periods span at least
    /// two days, otherwise no washout.
    pub fn default_for(period_length_days: u32) -> Self {
        if period_length_days >= 2 {
            Self::drop_first(1)
        } else {
            Self::none()
        }
    }
}

/// Forbid sequences that open with `run_length` consecutive periods of
/// `treatment`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadingRun {
    pub treatment: String,
    pub run_length: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceConstraints {
    #[serde(default)]
    pub require_balance: bool,
    #[serde(default)]
    pub min_crossovers: usize,
    #[serde(default)]
    pub forbid_leading_run: Option<LeadingRun>,
    #[serde(default)]
    pub block_randomized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ProtocolFile")]
pub struct TrialProtocol {
    pub treatments: Vec<Treatment>,
    pub n_blocks: u32,
    pub periods_per_block: u32,
    pub period_length_days: u32,
    pub measurements_per_period: u32,
    pub washout: WashoutPolicy,
    pub sequence_constraints: SequenceConstraints,
    pub max_total_days: Option<u32>,
}

/// On-disk shape: identical to [`TrialProtocol`] except that a missing
/// washout policy falls back to [`WashoutPolicy::default_for`].
#[derive(Deserialize)]
struct ProtocolFile {
    treatments: Vec<Treatment>,
    n_blocks: u32,
    periods_per_block: u32,
    period_length_days: u32,
    measurements_per_period: u32,
    #[serde(default)]
    washout: Option<WashoutPolicy>,
    #[serde(default)]
    sequence_constraints: SequenceConstraints,
    #[serde(default)]
    max_total_days: Option<u32>,
}

impl From<ProtocolFile> for TrialProtocol {
    fn from(f: ProtocolFile) -> Self {
        TrialProtocol {
            washout: f
                .washout
                .unwrap_or_else(|| WashoutPolicy::default_for(f.period_length_days)),
            treatments: f.treatments,
            n_blocks: f.n_blocks,
            periods_per_block: f.periods_per_block,
            period_length_days: f.period_length_days,
            measurements_per_period: f.measurements_per_period,
            sequence_constraints: f.sequence_constraints,
            max_total_days: f.max_total_days,
        }
    }
}

impl TrialProtocol {
    /// Two-treatment protocol with `reference` as the control arm.
    pub fn two_arm(
        reference: &str,
        active: &str,
        n_blocks: u32,
        periods_per_block: u32,
        period_length_days: u32,
        measurements_per_period: u32,
    ) -> Self {
        TrialProtocol {
            treatments: vec![Treatment::new(reference, true), Treatment::new(active, false)],
            n_blocks,
            periods_per_block,
            period_length_days,
            measurements_per_period,
            washout: WashoutPolicy::default_for(period_length_days),
            sequence_constraints: SequenceConstraints::default(),
            max_total_days: None,
        }
    }

    pub fn with_washout(mut self, washout: WashoutPolicy) -> Self {
        self.washout = washout;
        self
    }

    pub fn with_constraints(mut self, constraints: SequenceConstraints) -> Self {
        self.sequence_constraints = constraints;
        self
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_blocks as usize * self.periods_per_block as usize
    }

    pub fn n_measurements(&self) -> usize {
        self.n_periods() * self.measurements_per_period as usize
    }

    pub fn treatment_ids(&self) -> Vec<String> {
        self.treatments.iter().map(|t| t.id.clone()).collect()
    }

    pub fn reference(&self) -> Option<&Treatment> {
        self.treatments.iter().find(|t| t.is_reference)
    }

    /// First non-reference treatment.
    pub fn active(&self) -> Option<&Treatment> {
        self.treatments.iter().find(|t| !t.is_reference)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Sorted keys, two-space indent, trailing newline.
    pub fn to_canonical_json(&self) -> Result<String> {
        canonical_json(self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Serialize any value as canonical JSON (keys sorted, 2-space indent).
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value objects are BTreeMap-backed, so keys come out sorted.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

/// Check every structural constraint; an empty list means the protocol is valid.
pub fn validate_protocol(p: &TrialProtocol) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, reason: String| out.push(Violation { field, reason });

    let l = p.treatments.len();
    if l < 2 {
        bad("treatments", format!("need at least 2 treatments, got {l}"));
    }
    let n_ref = p.treatments.iter().filter(|t| t.is_reference).count();
    if n_ref != 1 {
        bad("treatments", format!("exactly one reference treatment required, found {n_ref}"));
    }
    for (i, t) in p.treatments.iter().enumerate() {
        if t.id.trim().is_empty() {
            bad("treatments", format!("treatment {} has an empty id", i + 1));
        }
        if p.treatments[..i].iter().any(|u| u.id == t.id) {
            bad("treatments", format!("duplicate treatment id {:?}", t.id));
        }
    }

    if p.n_blocks == 0 {
        bad("n_blocks", "must be positive".into());
    }
    if p.periods_per_block == 0 {
        bad("periods_per_block", "must be positive".into());
    }
    if p.period_length_days == 0 {
        bad("period_length_days", "must be positive".into());
    }
    if p.measurements_per_period == 0 {
        bad("measurements_per_period", "must be positive".into());
    }

    let sc = &p.sequence_constraints;
    if sc.block_randomized && l > 0 && p.periods_per_block as usize % l != 0 {
        bad(
            "periods_per_block",
            format!(
                "periods_per_block not multiple of L: {} periods per block with {l} treatments",
                p.periods_per_block
            ),
        );
    }
    let total_periods = p.n_periods();
    if sc.require_balance && l > 0 && total_periods % l != 0 {
        bad(
            "sequence_constraints",
            format!("balance requires total periods ({total_periods}) divisible by {l}"),
        );
    }
    if total_periods > 0 && sc.min_crossovers > total_periods - 1 {
        bad(
            "sequence_constraints",
            format!(
                "min_crossovers {} exceeds total periods - 1 = {}",
                sc.min_crossovers,
                total_periods - 1
            ),
        );
    }
    if let Some(run) = &sc.forbid_leading_run {
        if !p.treatments.iter().any(|t| t.id == run.treatment) {
            bad(
                "sequence_constraints",
                format!("forbid_leading_run names unknown treatment {:?}", run.treatment),
            );
        }
        if run.run_length == 0 {
            bad("sequence_constraints", "forbid_leading_run run_length must be positive".into());
        }
    }

    let m = p.measurements_per_period as usize;
    let w = &p.washout;
    match w.mode {
        WashoutMode::None => {}
        WashoutMode::DropFirstMeasurements => {
            if w.n_drop >= m {
                bad(
                    "washout",
                    format!("n_drop {} must be smaller than measurements_per_period {m}", w.n_drop),
                );
            }
        }
        WashoutMode::WeightRamp => match &w.ramp_weights {
            None => bad("washout", "weight_ramp mode requires ramp_weights".into()),
            Some(r) => {
                if r.len() >= m {
                    bad(
                        "washout",
                        format!("ramp_weights length {} must be below measurements_per_period {m}", r.len()),
                    );
                }
                if r.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    bad("washout", "ramp_weights entries must lie in [0, 1]".into());
                }
            }
        },
    }
    if w.n_drop >= m && w.mode != WashoutMode::DropFirstMeasurements && w.n_drop > 0 {
        bad("washout", format!("n_drop {} must be smaller than measurements_per_period {m}", w.n_drop));
    }

    if let Some(cap) = p.max_total_days {
        let len = p.n_blocks as u64 * p.periods_per_block as u64 * p.period_length_days as u64;
        if len > cap as u64 {
            bad("max_total_days", format!("trial length {len} days exceeds cap {cap}"));
        }
    }
    out
}

pub fn ensure_valid(p: &TrialProtocol) -> Result<()> {
    let v = validate_protocol(p);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidProtocol(v.iter().map(|x| x.to_string()).collect()))
    }
}

/// Total planned trial length in days.
pub fn trial_length_days(p: &TrialProtocol) -> Result<u64> {
    ensure_valid(p)?;
    Ok(p.n_blocks as u64 * p.periods_per_block as u64 * p.period_length_days as u64)
}

/// Smallest and largest total number of daily-measurement slots over every
/// (periods per treatment, weeks per period) configuration whose total
/// length respects `cap_weeks`.
pub fn planned_measurement_bounds(
    periods_per_treatment: (u32, u32),
    period_length_weeks: (u32, u32),
    measurements_per_day: u32,
    n_treatments: u32,
    cap_weeks: Option<u32>,
) -> Result<(u64, u64)> {
    let (p_lo, p_hi) = periods_per_treatment;
    let (w_lo, w_hi) = period_length_weeks;
    if p_lo == 0 || w_lo == 0 || p_lo > p_hi || w_lo > w_hi {
        return Err(Error::invalid("ranges must be nonempty and positive"));
    }
    if measurements_per_day == 0 || n_treatments == 0 {
        return Err(Error::invalid("measurements_per_day and n_treatments must be positive"));
    }
    let mut bounds: Option<(u64, u64)> = None;
    for periods in p_lo..=p_hi {
        for weeks in w_lo..=w_hi {
            let total_weeks = periods as u64 * n_treatments as u64 * weeks as u64;
            if cap_weeks.is_some_and(|cap| total_weeks > cap as u64) {
                continue;
            }
            let count = total_weeks * 7 * measurements_per_day as u64;
            bounds = Some(match bounds {
                None => (count, count),
                Some((lo, hi)) => (lo.min(count), hi.max(count)),
            });
        }
    }
    bounds.ok_or_else(|| {
        Error::invalid(format!(
            "cap of {} weeks is shorter than the smallest feasible trial",
            cap_weeks.unwrap_or(0)
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exercise() -> TrialProtocol {
        TrialProtocol::two_arm("A", "B", 3, 2, 7, 7)
    }

    #[test]
    fn exercise_trial_is_valid_and_42_days() {
        let p = exercise();
        assert!(validate_protocol(&p).is_empty());
        assert_eq!(trial_length_days(&p).unwrap(), 42);
    }

    #[test]
    fn diet_design_224_days() {
        let p = TrialProtocol::two_arm("A", "B", 2, 2, 56, 8);
        assert_eq!(trial_length_days(&p).unwrap(), 224);
    }

    #[test]
    fn one_day_identity() {
        let p = TrialProtocol::two_arm("A", "B", 1, 1, 1, 1);
        assert_eq!(trial_length_days(&p).unwrap(), 1);
    }

    #[test]
    fn block_randomization_needs_multiple_of_l() {
        let mut p = TrialProtocol::two_arm("A", "B", 2, 3, 7, 7);
        p.sequence_constraints.block_randomized = true;
        let v = validate_protocol(&p);
        assert!(v.iter().any(|x| x.reason.contains("periods_per_block not multiple of L")), "{v:?}");
    }

    #[test]
    fn n_drop_at_period_size_is_violation() {
        let p = exercise().with_washout(WashoutPolicy::drop_first(7));
        assert_eq!(validate_protocol(&p).len(), 1);
        assert!(trial_length_days(&p).is_err());
    }

    #[test]
    fn reports_all_violations_at_once() {
        let p = TrialProtocol {
            treatments: vec![Treatment::new("A", false), Treatment::new("A", false)],
            n_blocks: 0,
            periods_per_block: 1,
            period_length_days: 1,
            measurements_per_period: 1,
            washout: WashoutPolicy::none(),
            sequence_constraints: SequenceConstraints::default(),
            max_total_days: None,
        };
        let v = validate_protocol(&p);
        assert!(v.len() >= 3, "{v:?}");
        assert_eq!(v, validate_protocol(&p));
    }

    #[test]
    fn cap_violation() {
        let mut p = exercise();
        p.max_total_days = Some(41);
        assert!(validate_protocol(&p).iter().any(|v| v.field == "max_total_days"));
    }

    #[test]
    fn planned_bounds_with_length_cap() {
        assert_eq!(planned_measurement_bounds((2, 4), (1, 2), 1, 2, Some(12)).unwrap(), (28, 84));
        assert_eq!(planned_measurement_bounds((2, 4), (1, 2), 1, 2, None).unwrap(), (28, 112));
        assert_eq!(planned_measurement_bounds((1, 1), (1, 1), 1, 2, None).unwrap(), (14, 14));
        assert!(planned_measurement_bounds((2, 4), (1, 2), 1, 2, Some(3)).is_err());
    }

    #[test]
    fn default_washout_follows_period_length() {
        assert_eq!(WashoutPolicy::default_for(7), WashoutPolicy::drop_first(1));
        assert_eq!(WashoutPolicy::default_for(1), WashoutPolicy::none());
        let json = r#"{"treatments":[{"id":"A","is_reference":true},{"id":"B"}],
            "n_blocks":3,"periods_per_block":2,"period_length_days":7,"measurements_per_period":7}"#;
        let p = TrialProtocol::from_json_str(json).unwrap();
        assert_eq!(p.washout, WashoutPolicy::drop_first(1));
    }

    #[test]
    fn canonical_json_round_trip_is_byte_stable() {
        let mut p = exercise();
        p.sequence_constraints.forbid_leading_run = Some(LeadingRun {
            treatment: "A".into(),
            run_length: 2,
        });
        let s1 = p.to_canonical_json().unwrap();
        let back = TrialProtocol::from_json_str(&s1).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_canonical_json().unwrap(), s1);
        assert!(s1.contains("\n  \"max_total_days\""));
    }
}
