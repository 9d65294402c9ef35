//! Ingestion of exported historical queue observations and comparison against
//! the estimator.

use std::io::Read;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use super::{estimate_wait, ChurnTable, Direction, EstimateError};

pub const HISTORY_HEADER: [&str; 5] = ["date", "kind", "active", "queue_len", "observed_wait_days"];

#[derive(Debug, Error)]
pub enum HistoryError {
    /// `row` 0 is the header; data rows count from 1.
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("history contains no observations")]
    EmptyInput,
    #[error("row {row}: {source}")]
    Estimate {
        row: usize,
        #[source]
        source: EstimateError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub date: NaiveDate,
    pub kind: Direction,
    pub active: u64,
    pub queue_len: u64,
    pub observed_wait_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparedRow {
    pub date: String,
    pub kind: Direction,
    pub active: u64,
    pub queue_len: u64,
    pub observed_wait_days: f64,
    pub estimated_days: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryComparison {
    pub rows: Vec<ComparedRow>,
    pub mean_abs_residual: f64,
    pub max_abs_residual: f64,
}

fn malformed(row: usize, reason: impl Into<String>) -> HistoryError {
    HistoryError::MalformedRow { row, reason: reason.into() }
}

/// Parses a `date,kind,active,queue_len,observed_wait_days` CSV.
pub fn parse_history_csv<R: Read>(input: R) -> Result<Vec<Observation>, HistoryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(HistoryError::EmptyInput),
        Some(rec) => rec.map_err(|e| malformed(0, e.to_string()))?,
    };
    if header.iter().ne(HISTORY_HEADER.iter().copied()) {
        return Err(malformed(
            0,
            format!("expected header `{}`", HISTORY_HEADER.join(",")),
        ));
    }

    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| malformed(row, e.to_string()))?;
        if rec.len() != HISTORY_HEADER.len() {
            return Err(malformed(row, format!("expected 5 fields, got {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| malformed(row, format!("date `{}`: {e}", &rec[0])))?;
        let kind = rec[1].parse::<Direction>().map_err(|e| malformed(row, e))?;
        let active = rec[2]
            .parse::<u64>()
            .map_err(|e| malformed(row, format!("active `{}`: {e}", &rec[2])))?;
        let queue_len = rec[3]
            .parse::<u64>()
            .map_err(|e| malformed(row, format!("queue_len `{}`: {e}", &rec[3])))?;
        let observed_wait_days = rec[4]
            .parse::<f64>()
            .ok()
            .filter(|d| d.is_finite() && *d >= 0.0)
            .ok_or_else(|| malformed(row, format!("observed_wait_days `{}`", &rec[4])))?;
        out.push(Observation { date, kind, active, queue_len, observed_wait_days });
    }
    if out.is_empty() {
        return Err(HistoryError::EmptyInput);
    }
    Ok(out)
}

/// Residual (`estimated − observed`) for every observation plus summary stats.
pub fn compare_history(
    observations: &[Observation],
    table: &ChurnTable,
) -> Result<HistoryComparison, HistoryError> {
    if observations.is_empty() {
        return Err(HistoryError::EmptyInput);
    }
    let rows = observations
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            let est = estimate_wait(obs.active, obs.queue_len, table, obs.kind)
                .map_err(|source| HistoryError::Estimate { row: i + 1, source })?;
            Ok(ComparedRow {
                date: obs.date.format("%Y-%m-%d").to_string(),
                kind: obs.kind,
                active: obs.active,
                queue_len: obs.queue_len,
                observed_wait_days: obs.observed_wait_days,
                estimated_days: est.churn_time_days,
                residual: est.churn_time_days - obs.observed_wait_days,
            })
        })
        .collect::<Result<Vec<_>, HistoryError>>()?;

    let abs = rows.iter().map(|r| r.residual.abs());
    let max_abs_residual = abs.clone().fold(0.0, f64::max);
    let mean_abs_residual = abs.sum::<f64>() / rows.len() as f64;
    Ok(HistoryComparison { rows, mean_abs_residual, max_abs_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChurnParams;
    use crate::queue::DEFAULT_MAX_TIERS;

    fn table() -> ChurnTable {
        ChurnTable::build(ChurnParams::default(), DEFAULT_MAX_TIERS).unwrap()
    }

    #[test]
    fn parses_rows() {
        let csv = "date,kind,active,queue_len,observed_wait_days\n\
                   2023-05-21,entry,600000,90000,42.5\n\
                   2023-05-22,exit,600000,1000,0.5\n";
        let obs = parse_history_csv(csv.as_bytes()).unwrap();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs[0].kind, Direction::Entry);
        assert_eq!(obs[1].kind, Direction::Exit);
        assert_eq!(obs[1].date, NaiveDate::from_ymd_opt(2023, 5, 22).unwrap());
    }

    #[test]
    fn exact_observation_has_zero_residual() {
        let est = estimate_wait(600_000, 1000, &table(), Direction::Entry).unwrap();
        let obs = vec![Observation {
            date: NaiveDate::from_ymd_opt(2023, 6, 1).unwrap(),
            kind: Direction::Entry,
            active: 600_000,
            queue_len: 1000,
            observed_wait_days: est.churn_time_days,
        }];
        let cmp = compare_history(&obs, &table()).unwrap();
        assert_eq!(cmp.rows[0].residual, 0.0);
        assert_eq!(cmp.max_abs_residual, 0.0);
        assert_eq!(cmp.mean_abs_residual, 0.0);
    }

    #[test]
    fn long_queue_anecdote_is_reported_not_judged() {
        // A queue long enough to exceed 20 days; only the residual is reported.
        let obs = vec![Observation {
            date: NaiveDate::from_ymd_opt(2023, 4, 20).unwrap(),
            kind: Direction::Exit,
            active: 560_000,
            queue_len: 40_000,
            observed_wait_days: 20.5,
        }];
        let cmp = compare_history(&obs, &table()).unwrap();
        let row = &cmp.rows[0];
        assert!(row.estimated_days > 20.0);
        assert_eq!(row.residual, row.estimated_days - 20.5);
    }

    #[test]
    fn bad_header_is_row_zero() {
        let err = parse_history_csv("day,kind,active,queue,wait\n2023-01-01,entry,1,1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, HistoryError::MalformedRow { row: 0, .. }));
    }

    #[test]
    fn bad_rows_carry_their_index() {
        let cases = [
            "2023-13-01,entry,600000,1,1",
            "2023-01-01,sideways,600000,1,1",
            "2023-01-01,entry,-5,1,1",
            "2023-01-01,entry,600000,x,1",
            "2023-01-01,entry,600000,1,nan",
        ];
        for bad in cases {
            let csv = format!("date,kind,active,queue_len,observed_wait_days\n2023-01-01,entry,600000,1,1\n{bad}\n");
            let err = parse_history_csv(csv.as_bytes()).unwrap_err();
            assert!(matches!(err, HistoryError::MalformedRow { row: 2, .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse_history_csv("".as_bytes()), Err(HistoryError::EmptyInput)));
        assert!(matches!(
            parse_history_csv("date,kind,active,queue_len,observed_wait_days\n".as_bytes()),
            Err(HistoryError::EmptyInput)
        ));
        assert!(matches!(compare_history(&[], &table()), Err(HistoryError::EmptyInput)));
    }

    #[test]
    fn out_of_range_row_reports_index() {
        let obs = parse_history_csv(
            "date,kind,active,queue_len,observed_wait_days\n2023-01-01,entry,10,1,1\n".as_bytes(),
        )
        .unwrap();
        assert!(matches!(compare_history(&obs, &table()), Err(HistoryError::Estimate { row: 1, .. })));
    }
}
