use std::fmt;

use crate::data::OutcomeSeries;
use crate::error::{Error, Result};
use crate::fit::{ArScope, CarryoverModel, ModelSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Intercept,
    Treatment,
    Trend,
    Carryover { from: String, to: String },
}

impl Column {
    pub fn name(&self) -> String {
        match self {
            Column::Intercept => "alpha".into(),
            Column::Treatment => "delta".into(),
            Column::Trend => "gamma".into(),
            Column::Carryover { from, to } => format!("carryover[{from}->{to}]"),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub x: Vec<f64>,
    pub y: f64,
    pub weight: f64,
    pub time_index: u32,
    /// Rows in different segments have independent AR(1) errors.
    pub segment: usize,
}

/// Regression layout for one series: one row per non-missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub columns: Vec<Column>,
    pub rows: Vec<DesignRow>,
    pub reference: String,
    pub notes: Vec<String>,
}

impl Design {
    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.x[j]).collect()
    }

    pub fn index(&self, c: &Column) -> Option<usize> {
        self.columns.iter().position(|x| x == c)
    }
}

pub(crate) fn default_reference<'a>(ids: impl Iterator<Item = &'a str>) -> Option<String> {
    ids.min().map(str::to_string)
}

/// Crossover transitions present in a series, as (from, to) pairs.
pub(crate) fn observed_transitions(series: &OutcomeSeries) -> Vec<(String, String)> {
    let tr = series.period_treatments();
    let mut out: Vec<(String, String)> = Vec::new();
    for w in tr.windows(2) {
        if w[0] != w[1] && !out.iter().any(|(a, b)| *a == w[0] && *b == w[1]) {
            out.push((w[0].clone(), w[1].clone()));
        }
    }
    out
}

/// Order transitions with reference->active first.
pub(crate) fn sort_transitions(t: &mut [(String, String)], reference: &str) {
    t.sort_by(|a, b| {
        let ka = (a.0 != reference, a.0.clone(), a.1.clone());
        let kb = (b.0 != reference, b.0.clone(), b.1.clone());
        ka.cmp(&kb)
    });
}

/// Build rows with an explicit reference and carryover transition set;
/// used directly by the hierarchical fitter so every individual shares one
/// column layout.
pub(crate) fn design_rows(
    series: &OutcomeSeries,
    spec: &ModelSpec,
    reference: &str,
    transitions: &[(String, String)],
) -> (Vec<Column>, Vec<DesignRow>) {
    let mut columns = vec![Column::Intercept, Column::Treatment];
    if spec.include_trend {
        columns.push(Column::Trend);
    }
    let lag = match spec.carryover {
        CarryoverModel::None => 0,
        CarryoverModel::TransitionTerms { lag } => lag,
    };
    if lag > 0 {
        for (from, to) in transitions {
            columns.push(Column::Carryover {
                from: from.clone(),
                to: to.clone(),
            });
        }
    }
    let max_t = series.measurements.iter().map(|m| m.time_index).max().unwrap_or(0);
    let scale = if max_t > 0 { max_t as f64 } else { 1.0 };
    let periods = series.periods();
    let mut rows = Vec::new();
    for (k, span) in periods.iter().enumerate() {
        let prev = if k > 0 { Some(periods[k - 1].treatment_id.as_str()) } else { None };
        let segment = match spec.ar_scope {
            ArScope::WithinPeriod => k,
            ArScope::Continuous => 0,
        };
        for m in &series.measurements[span.start..span.end] {
            let Some(y) = m.value else { continue };
            let mut x = vec![1.0, if m.treatment_id == reference { 0.0 } else { 1.0 }];
            if spec.include_trend {
                x.push(m.time_index as f64 / scale);
            }
            if lag > 0 {
                for (from, to) in transitions {
                    let hit = prev == Some(from.as_str())
                        && span.treatment_id == *to
                        && (m.within_period_index as usize) <= lag;
                    x.push(if hit { 1.0 } else { 0.0 });
                }
            }
            rows.push(DesignRow {
                x,
                y,
                weight: m.weight,
                time_index: m.time_index,
                segment,
            });
        }
    }
    (columns, rows)
}

/// Design for a single-trial fit.
///
/// Carryover columns that are zero on every usable row are dropped with a
/// note. Fails when the treatment indicator is constant over usable rows.
pub fn build_design(series: &OutcomeSeries, spec: &ModelSpec) -> Result<Design> {
    let reference = match &spec.reference {
        Some(r) => r.clone(),
        None => default_reference(series.measurements.iter().map(|m| m.treatment_id.as_str()))
            .ok_or_else(|| Error::invalid("empty series"))?,
    };
    let mut transitions = observed_transitions(series);
    sort_transitions(&mut transitions, &reference);
    let (mut columns, mut rows) = design_rows(series, spec, &reference, &transitions);
    if rows.is_empty() {
        return Err(Error::invalid(format!(
            "series {} has no observed measurements",
            series.participant_id
        )));
    }
    let usable = |r: &DesignRow| r.weight > 0.0;
    let xs: Vec<f64> = rows.iter().filter(|r| usable(r)).map(|r| r.x[1]).collect();
    if xs.is_empty() || xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::Unidentifiable(format!(
            "series {} observes only one treatment",
            series.participant_id
        )));
    }
    let mut notes = Vec::new();
    let mut j = columns.len();
    while j > 0 {
        j -= 1;
        if let Column::Carryover { .. } = &columns[j] {
            if !rows.iter().any(|r| usable(r) && r.x[j] != 0.0) {
                notes.push(format!("dropped {}: no usable measurements after that transition", columns[j]));
                columns.remove(j);
                for r in &mut rows {
                    r.x.remove(j);
                }
            }
        }
    }
    Ok(Design {
        columns,
        rows,
        reference,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Measurement;

    pub(crate) fn series_from(seq: &str, m: u32, values: impl Fn(usize) -> Option<f64>) -> OutcomeSeries {
        let mut out = Vec::new();
        for (p, tr) in seq.chars().enumerate() {
            for j in 0..m {
                let t = p as u32 * m + j;
                out.push(Measurement {
                    participant_id: "P".into(),
                    block: p as u32 / 2 + 1,
                    period: p as u32 % 2 + 1,
                    within_period_index: j + 1,
                    time_index: t,
                    treatment_id: tr.to_string(),
                    value: values(t as usize),
                    weight: 1.0,
                });
            }
        }
        OutcomeSeries::new("P", out)
    }

    #[test]
    fn treatment_coding() {
        let s = series_from("ABAB", 2, |t| Some(t as f64));
        let d = build_design(&s, &ModelSpec::default()).unwrap();
        assert_eq!(d.column(1), vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(d.names(), vec!["alpha", "delta"]);
    }

    #[test]
    fn carryover_indicator_marks_first_b_measurement() {
        let s = series_from("ABAB", 2, |t| Some(t as f64));
        let spec = ModelSpec {
            carryover: CarryoverModel::TransitionTerms { lag: 1 },
            ..Default::default()
        };
        let d = build_design(&s, &spec).unwrap();
        let j = d
            .index(&Column::Carryover {
                from: "A".into(),
                to: "B".into(),
            })
            .unwrap();
        assert_eq!(d.column(j), vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let k = d
            .index(&Column::Carryover {
                from: "B".into(),
                to: "A".into(),
            })
            .unwrap();
        assert_eq!(d.column(k), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_treatment_is_unidentifiable() {
        let s = series_from("AAAA", 2, |t| Some(t as f64));
        assert!(matches!(build_design(&s, &ModelSpec::default()), Err(Error::Unidentifiable(_))));
    }

    #[test]
    fn missing_rows_skipped_and_trend_scaled() {
        let s = series_from("AB", 3, |t| if t == 1 { None } else { Some(0.0) });
        let d = build_design(&s, &ModelSpec::default().with_trend()).unwrap();
        assert_eq!(d.rows.len(), 5);
        assert_eq!(d.column(2), vec![0.0, 0.4, 0.6, 0.8, 1.0]);
    }
}
