//! Outcome data: measurements with treatment labels, washout weights, and
//! missingness, plus the canonical CSV interchange format.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{WashoutMode, WashoutPolicy};

pub const CSV_HEADER: [&str; 8] = [
    "participant_id",
    "block",
    "period",
    "within_period_index",
    "time_index",
    "treatment_id",
    "value",
    "weight",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub participant_id: String,
    /// 1-based.
    pub block: u32,
    /// 1-based within the block.
    pub period: u32,
    /// 1-based within the period.
    pub within_period_index: u32,
    /// 0-based absolute slot over the whole trial.
    pub time_index: u32,
    pub treatment_id: String,
    pub value: Option<f64>,
    pub weight: f64,
}

impl Measurement {
    pub fn period_key(&self) -> (u32, u32) {
        (self.block, self.period)
    }

    pub fn is_missing(&self) -> bool {
        self.value.is_none()
    }
}

/// One participant's time-ordered outcome series.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutcomeSeries {
    pub participant_id: String,
    #[serde(default)]
    pub protocol: Option<String>,
    pub measurements: Vec<Measurement>,
    #[serde(default)]
    pub covariates: BTreeMap<String, f64>,
}

/// Contiguous run of measurements sharing a (block, period).
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSpan {
    pub block: u32,
    pub period: u32,
    pub treatment_id: String,
    /// Index range into `measurements`.
    pub start: usize,
    pub end: usize,
}

impl OutcomeSeries {
    pub fn new(participant_id: impl Into<String>, measurements: Vec<Measurement>) -> Self {
        OutcomeSeries {
            participant_id: participant_id.into(),
            protocol: None,
            measurements,
            covariates: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn n_observed(&self) -> usize {
        self.measurements.iter().filter(|m| !m.is_missing()).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.measurements.is_empty() {
            1.0
        } else {
            1.0 - self.n_observed() as f64 / self.measurements.len() as f64
        }
    }

    /// Periods in time order.
    pub fn periods(&self) -> Vec<PeriodSpan> {
        let mut out: Vec<PeriodSpan> = Vec::new();
        for (i, m) in self.measurements.iter().enumerate() {
            match out.last_mut() {
                Some(last) if (last.block, last.period) == m.period_key() => last.end = i + 1,
                _ => out.push(PeriodSpan {
                    block: m.block,
                    period: m.period,
                    treatment_id: m.treatment_id.clone(),
                    start: i,
                    end: i + 1,
                }),
            }
        }
        out
    }

    /// Treatment of each period, in time order.
    pub fn period_treatments(&self) -> Vec<String> {
        self.periods().into_iter().map(|p| p.treatment_id).collect()
    }

    /// Check the series invariants.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<&Measurement> = None;
        let mut seen: BTreeMap<(u32, u32), &str> = BTreeMap::new();
        for (i, m) in self.measurements.iter().enumerate() {
            if let Some(p) = prev {
                if m.time_index <= p.time_index {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: format!(
                            "time_index {} not increasing for participant {}",
                            m.time_index, self.participant_id
                        ),
                    });
                }
            }
            if !(0.0..=1.0).contains(&m.weight) {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("weight {} outside [0, 1]", m.weight),
                });
            }
            if let Some(t) = seen.get(&m.period_key()) {
                if *t != m.treatment_id {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: format!(
                            "treatment changes inside block {} period {} ({} vs {})",
                            m.block, m.period, t, m.treatment_id
                        ),
                    });
                }
            } else {
                seen.insert(m.period_key(), &m.treatment_id);
            }
            prev = Some(m);
        }
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, row: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        row,
        message: format!("cannot parse {name} from {s:?}"),
    })
}

/// Read canonical CSV into per-participant series, in order of first
/// appearance. Row numbers in errors count the header as row 1.
pub fn ingest_csv<R: Read>(reader: R) -> Result<Vec<OutcomeSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col = [usize::MAX; 8];
    for (j, h) in headers.iter().enumerate() {
        match CSV_HEADER.iter().position(|c| *c == h) {
            Some(k) => col[k] = j,
            None => {
                return Err(Error::Parse {
                    row: 1,
                    message: format!("unknown column {h:?}"),
                })
            }
        }
    }
    for (k, name) in CSV_HEADER.iter().enumerate().take(7) {
        if col[k] == usize::MAX {
            return Err(Error::Parse {
                row: 1,
                message: format!("missing column {name:?}"),
            });
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Vec<(usize, Measurement)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let get = |k: usize| rec.get(col[k]).unwrap_or("");
        let value = match get(6).trim() {
            "" => None,
            v => Some(parse_field::<f64>(v, "value", row)?),
        };
        let weight = if col[7] == usize::MAX || get(7).trim().is_empty() {
            1.0
        } else {
            parse_field::<f64>(get(7), "weight", row)?
        };
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Parse {
                row,
                message: format!("weight {weight} outside [0, 1]"),
            });
        }
        let m = Measurement {
            participant_id: get(0).to_string(),
            block: parse_field(get(1), "block", row)?,
            period: parse_field(get(2), "period", row)?,
            within_period_index: parse_field(get(3), "within_period_index", row)?,
            time_index: parse_field(get(4), "time_index", row)?,
            treatment_id: get(5).to_string(),
            value,
            weight,
        };
        if m.participant_id.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty participant_id".into(),
            });
        }
        if m.block == 0 || m.period == 0 || m.within_period_index == 0 {
            return Err(Error::Parse {
                row,
                message: "block, period and within_period_index are 1-based".into(),
            });
        }
        let list = by_id.entry(m.participant_id.clone()).or_insert_with(|| {
            order.push(m.participant_id.clone());
            Vec::new()
        });
        if let Some((_, prev)) = list.last() {
            if m.time_index <= prev.time_index {
                return Err(Error::Parse {
                    row,
                    message: format!(
                        "non-monotone time_index {} after {} for participant {}",
                        m.time_index, prev.time_index, m.participant_id
                    ),
                });
            }
        }
        if let Some((_, other)) = list.iter().find(|(_, x)| x.period_key() == m.period_key()) {
            if other.treatment_id != m.treatment_id {
                return Err(Error::Parse {
                    row,
                    message: format!(
                        "two treatments ({}, {}) in block {} period {}",
                        other.treatment_id, m.treatment_id, m.block, m.period
                    ),
                });
            }
        }
        list.push((row, m));
    }

    Ok(order
        .into_iter()
        .map(|id| {
            let rows = by_id.remove(&id).unwrap_or_default();
            OutcomeSeries::new(id, rows.into_iter().map(|(_, m)| m).collect())
        })
        .collect())
}

pub fn ingest_csv_path(path: impl AsRef<Path>) -> Result<Vec<OutcomeSeries>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_csv(std::io::BufReader::new(f))
}

/// Write canonical CSV (LF endings, shortest round-trip float formatting).
pub fn write_csv<W: Write>(w: W, series: &[OutcomeSeries]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(CSV_HEADER)?;
    for s in series {
        for m in &s.measurements {
            wtr.write_record([
                m.participant_id.clone(),
                m.block.to_string(),
                m.period.to_string(),
                m.within_period_index.to_string(),
                m.time_index.to_string(),
                m.treatment_id.clone(),
                m.value.map_or_else(String::new, |v| v.to_string()),
                m.weight.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_csv_path(path: impl AsRef<Path>, series: &[OutcomeSeries]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(f), series)
}

/// Read a covariate table (`participant_id,<name>,...`) and attach the values
/// to matching series.
pub fn attach_covariates<R: Read>(series: &mut [OutcomeSeries], reader: R) -> Result<()> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("participant_id") {
        return Err(Error::Parse {
            row: 1,
            message: "covariate table must start with participant_id".into(),
        });
    }
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or("");
        let Some(s) = series.iter_mut().find(|s| s.participant_id == id) else {
            continue;
        };
        for (j, name) in headers.iter().enumerate().skip(1) {
            let v: f64 = parse_field(rec.get(j).unwrap_or(""), name, i + 2)?;
            s.covariates.insert(name.to_string(), v);
        }
    }
    Ok(())
}

/// Re-weight the start of each period according to a washout policy.
///
/// The first period of the trial is never touched. `drop_first_measurements`
/// sets weight 0 on slots `1..=n_drop` of each later period; `weight_ramp`
/// multiplies slot `j` by `ramp[j-1]`. Values are never changed.
pub fn apply_washout(series: &OutcomeSeries, policy: &WashoutPolicy) -> Result<OutcomeSeries> {
    let mut out = series.clone();
    if policy.mode == WashoutMode::None {
        return Ok(out);
    }
    let periods = series.periods();
    for (k, span) in periods.iter().enumerate().skip(1) {
        if policy.crossovers_only && periods[k - 1].treatment_id == span.treatment_id {
            continue;
        }
        let slots = series.measurements[span.start..span.end]
            .iter()
            .map(|m| m.within_period_index)
            .max()
            .unwrap_or(0) as usize;
        match policy.mode {
            WashoutMode::DropFirstMeasurements => {
                if policy.n_drop >= slots {
                    return Err(Error::invalid(format!(
                        "washout n_drop {} >= {} measurements in block {} period {}",
                        policy.n_drop, slots, span.block, span.period
                    )));
                }
                for m in &mut out.measurements[span.start..span.end] {
                    if (m.within_period_index as usize) <= policy.n_drop {
                        m.weight = 0.0;
                    }
                }
            }
            WashoutMode::WeightRamp => {
                let ramp = policy.ramp_weights.as_deref().unwrap_or(&[]);
                for m in &mut out.measurements[span.start..span.end] {
                    if let Some(r) = ramp.get(m.within_period_index as usize - 1) {
                        m.weight *= r;
                    }
                }
            }
            WashoutMode::None => unreachable!(),
        }
    }
    Ok(out)
}
