//! Validator entry/exit wait-time estimation.
//!
//! [`estimate_wait`] walks the queue across churn tiers analytically.
//! [`simulate_queue`] drains the same queue one epoch at a time and serves as
//! the reference the estimate is checked against.

mod history;

pub use history::{
    compare_history, parse_history_csv, ComparedRow, HistoryComparison, HistoryError, Observation,
    HISTORY_HEADER,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::ChurnParams;
use crate::units::SECONDS_PER_DAY;

/// Number of tiers in the table used when none is given explicitly.
pub const DEFAULT_MAX_TIERS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("min_churn, churn_quotient and epochs_per_day must be at least 1")]
    ZeroParameter,
    #[error("a churn table needs at least 2 tiers, got {0}")]
    TooFewTiers(usize),
    #[error("scaling, epoch_churn and day_churn must have equal lengths")]
    LengthMismatch,
    #[error("scaling thresholds must be strictly increasing")]
    ScalingNotIncreasing,
    #[error("epoch churn must be non-decreasing")]
    ChurnDecreasing,
    #[error("day churn at tier {0} is not epoch churn × epochs_per_day")]
    DayChurnMismatch(usize),
    #[error("table overflows u64")]
    Overflow,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimateError {
    #[error("active={active} is outside the churn table span [{low}, {high})")]
    ActiveOutOfTableRange { active: u64, low: u64, high: u64 },
}

/// Which way the active set moves while the queue drains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Activations: the active set grows, so churn can step up mid-drain.
    #[default]
    Entry,
    /// Exits: the active set shrinks, so churn can step down mid-drain.
    Exit,
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entry" => Ok(Direction::Entry),
            "exit" => Ok(Direction::Exit),
            other => Err(format!("expected `entry` or `exit`, got `{other}`")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Entry => "entry",
            Direction::Exit => "exit",
        })
    }
}

/// Churn tiers: tier `i` covers active counts in `[scaling[i], scaling[i + 1])`
/// and admits `epoch_churn[i]` validators per epoch.
///
/// The final entry only bounds the range accepted as a starting active count;
/// a drain that walks past it keeps using the last tier's churn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnTable {
    scaling: Vec<u64>,
    epoch_churn: Vec<u64>,
    day_churn: Vec<u64>,
    epochs_per_day: u64,
}

impl ChurnTable {
    /// Materializes `max_tiers` tiers of the churn-limit rule, starting at the
    /// first active count where the quotient term reaches `min_churn`.
    pub fn build(params: ChurnParams, max_tiers: usize) -> Result<Self, TableError> {
        let ChurnParams { min_churn, churn_quotient, epochs_per_day } = params;
        if min_churn == 0 || churn_quotient == 0 || epochs_per_day == 0 {
            return Err(TableError::ZeroParameter);
        }
        if max_tiers < 2 {
            return Err(TableError::TooFewTiers(max_tiers));
        }
        let mut scaling = Vec::with_capacity(max_tiers);
        let mut epoch_churn = Vec::with_capacity(max_tiers);
        for i in 0..max_tiers as u64 {
            let churn = min_churn.checked_add(i).ok_or(TableError::Overflow)?;
            scaling.push(churn.checked_mul(churn_quotient).ok_or(TableError::Overflow)?);
            epoch_churn.push(churn);
        }
        let day_churn = epoch_churn
            .iter()
            .map(|c| c.checked_mul(epochs_per_day).ok_or(TableError::Overflow))
            .collect::<Result<_, _>>()?;
        Ok(ChurnTable { scaling, epoch_churn, day_churn, epochs_per_day })
    }

    /// Builds a table from explicit tier arrays, checking every invariant.
    pub fn from_parts(
        scaling: Vec<u64>,
        epoch_churn: Vec<u64>,
        day_churn: Vec<u64>,
        epochs_per_day: u64,
    ) -> Result<Self, TableError> {
        if scaling.len() != epoch_churn.len() || scaling.len() != day_churn.len() {
            return Err(TableError::LengthMismatch);
        }
        if scaling.len() < 2 {
            return Err(TableError::TooFewTiers(scaling.len()));
        }
        if epochs_per_day == 0 || epoch_churn.contains(&0) {
            return Err(TableError::ZeroParameter);
        }
        if scaling.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TableError::ScalingNotIncreasing);
        }
        if epoch_churn.windows(2).any(|w| w[0] > w[1]) {
            return Err(TableError::ChurnDecreasing);
        }
        if let Some(i) = (0..scaling.len()).find(|&i| epoch_churn[i].checked_mul(epochs_per_day) != Some(day_churn[i])) {
            return Err(TableError::DayChurnMismatch(i));
        }
        Ok(ChurnTable { scaling, epoch_churn, day_churn, epochs_per_day })
    }

    pub fn scaling(&self) -> &[u64] {
        &self.scaling
    }

    pub fn epoch_churn(&self) -> &[u64] {
        &self.epoch_churn
    }

    pub fn day_churn(&self) -> &[u64] {
        &self.day_churn
    }

    pub fn epochs_per_day(&self) -> u64 {
        self.epochs_per_day
    }

    fn last(&self) -> usize {
        self.scaling.len() - 1
    }

    /// Half-open span of starting active counts the estimator accepts.
    pub fn span(&self) -> (u64, u64) {
        (self.scaling[0], self.scaling[self.last()])
    }

    /// Tier `i` with `scaling[i] <= active < scaling[i + 1]`.
    pub fn tier_of(&self, active: u64) -> Result<usize, EstimateError> {
        let (low, high) = self.span();
        if active < low || active >= high {
            return Err(EstimateError::ActiveOutOfTableRange { active, low, high });
        }
        Ok(self.scaling.partition_point(|&s| s <= active) - 1)
    }

    /// Per-epoch churn at `active`, extending the first and last tiers
    /// outward without bound.
    pub fn churn_at(&self, active: u64) -> u64 {
        let idx = self.scaling.partition_point(|&s| s <= active);
        self.epoch_churn[idx.saturating_sub(1)]
    }
}

/// Result of [`estimate_wait`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitEstimate {
    pub churn_time_days: f64,
    pub curr_churn: u64,
    pub ave_churn: f64,
    pub wait_secs: u64,
    pub wait_days: u64,
    pub wait_text: String,
}

/// Renders a wait in seconds as `N day(s)` or `H hour(s), M minute(s)`.
pub fn format_wait(wait_secs: u64) -> String {
    let wait_days = wait_secs / SECONDS_PER_DAY;
    if wait_days > 0 {
        format!("{wait_days} day(s)")
    } else {
        let hours = wait_secs / 3600;
        let minutes = ((wait_secs % 3600) as f64 / 60.0).round() as u64;
        format!("{hours} hour(s), {minutes} minute(s)")
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Estimates how long the last of `queue` validators waits, given `active`
/// validators, by walking the queue across churn tiers.
///
/// Within a tier the queue drains at `day_churn` per day until either the
/// queue is empty or the active set reaches the next tier boundary; the
/// remainder carries over to the next tier.
pub fn estimate_wait(
    active: u64,
    queue: u64,
    table: &ChurnTable,
    direction: Direction,
) -> Result<WaitEstimate, EstimateError> {
    let start = table.tier_of(active)?;
    let curr_churn = table.epoch_churn[start];

    let mut churn_time_days = 0.0_f64;
    let mut churn_factor: u128 = 0;
    let mut remain = queue;
    let mut position = active;
    let mut j = start;
    while remain > 0 {
        // validators this tier can move before the active set leaves it
        let room = match direction {
            Direction::Entry if j < table.last() => table.scaling[j + 1] - position,
            Direction::Exit if j > 0 => position - table.scaling[j],
            _ => u64::MAX,
        };
        let day_churn = table.day_churn[j] as f64;
        churn_time_days += (remain as f64 / day_churn).min(room as f64 / day_churn);
        let taken = remain.min(room);
        churn_factor += taken as u128 * table.epoch_churn[j] as u128;
        remain -= taken;
        match direction {
            Direction::Entry => {
                if j < table.last() {
                    position = table.scaling[j + 1];
                    j += 1;
                }
            }
            Direction::Exit => {
                if j > 0 {
                    position = table.scaling[j];
                    j -= 1;
                }
            }
        }
    }

    let ave_churn = if queue > 0 {
        round2(churn_factor as f64 / queue as f64)
    } else {
        curr_churn as f64
    };
    let wait_secs = (churn_time_days * SECONDS_PER_DAY as f64).round() as u64;
    Ok(WaitEstimate {
        churn_time_days,
        curr_churn,
        ave_churn,
        wait_secs,
        wait_days: wait_secs / SECONDS_PER_DAY,
        wait_text: format_wait(wait_secs),
    })
}

/// Drains the queue epoch by epoch at the table's churn for the current active
/// count and returns the number of epochs until it is empty.
pub fn simulate_queue(
    active: u64,
    queue: u64,
    table: &ChurnTable,
    direction: Direction,
) -> Result<u64, EstimateError> {
    table.tier_of(active)?;
    let mut active = active;
    let mut remain = queue;
    let mut epochs = 0;
    while remain > 0 {
        let moved = table.churn_at(active).min(remain);
        remain -= moved;
        active = match direction {
            Direction::Entry => active + moved,
            Direction::Exit => active.saturating_sub(moved),
        };
        epochs += 1;
    }
    Ok(epochs)
}

/// Convenience: [`simulate_queue`] expressed in days.
pub fn simulate_queue_days(
    active: u64,
    queue: u64,
    table: &ChurnTable,
    direction: Direction,
) -> Result<f64, EstimateError> {
    Ok(simulate_queue(active, queue, table, direction)? as f64 / table.epochs_per_day as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ChurnTable {
        ChurnTable::build(ChurnParams::default(), DEFAULT_MAX_TIERS).unwrap()
    }

    #[test]
    fn table_boundaries_follow_churn_formula() {
        let t = table();
        let nine = t.epoch_churn().iter().position(|&c| c == 9).unwrap();
        assert_eq!(t.epoch_churn()[nine + 1], 10);
        assert_eq!(t.scaling()[nine + 1], 655_360);
        // every tier's churn matches the closed form at both ends of the tier
        for i in 0..t.scaling().len() - 1 {
            let p = ChurnParams::default();
            assert_eq!(p.churn_limit(t.scaling()[i]), t.epoch_churn()[i]);
            assert_eq!(p.churn_limit(t.scaling()[i + 1] - 1), t.epoch_churn()[i]);
        }
        assert!(t.scaling()[t.scaling().len() - 1] > 1_500_000);
    }

    #[test]
    fn day_churn_identity() {
        let t = table();
        for (d, e) in t.day_churn().iter().zip(t.epoch_churn()) {
            assert_eq!(*d, e * 225);
        }
    }

    #[test]
    fn lowest_tier_is_min_churn() {
        let t = table();
        assert_eq!(t.epoch_churn()[0], 4);
        assert_eq!(t.scaling()[1], 5 * 65_536);
        assert_eq!(t.churn_at(0), 4);
        assert_eq!(t.churn_at(5 * 65_536 - 1), 4);
    }

    #[test]
    fn table_validation() {
        assert_eq!(ChurnTable::build(ChurnParams::default(), 1), Err(TableError::TooFewTiers(1)));
        let zero = ChurnParams { churn_quotient: 0, ..ChurnParams::default() };
        assert_eq!(ChurnTable::build(zero, 4), Err(TableError::ZeroParameter));
        assert_eq!(
            ChurnTable::from_parts(vec![1, 1], vec![4, 5], vec![900, 1125], 225),
            Err(TableError::ScalingNotIncreasing)
        );
        assert_eq!(
            ChurnTable::from_parts(vec![1, 2], vec![5, 4], vec![1125, 900], 225),
            Err(TableError::ChurnDecreasing)
        );
        assert_eq!(
            ChurnTable::from_parts(vec![1, 2], vec![4, 5], vec![900, 1124], 225),
            Err(TableError::DayChurnMismatch(1))
        );
        assert!(ChurnTable::from_parts(vec![1, 2], vec![4, 5], vec![900, 1125], 225).is_ok());
    }

    #[test]
    fn empty_queue_waits_zero() {
        let e = estimate_wait(600_000, 0, &table(), Direction::Entry).unwrap();
        assert_eq!(e.churn_time_days, 0.0);
        assert_eq!(e.wait_secs, 0);
        assert_eq!(e.curr_churn, 9);
        assert_eq!(e.ave_churn, 9.0);
        assert_eq!(e.wait_text, "0 hour(s), 0 minute(s)");
    }

    #[test]
    fn two_tier_walk() {
        // Hand walk: 655360 - 600000 = 55360 at 9×225/day, remaining 34640 at 10×225/day.
        let expected_days = 55_360.0 / 2025.0 + 34_640.0 / 2250.0;
        let expected_ave = ((55_360.0 * 9.0 + 34_640.0 * 10.0) / 90_000.0 * 100.0_f64).round() / 100.0;
        assert_eq!(expected_ave, 9.38);
        let e = estimate_wait(600_000, 90_000, &table(), Direction::Entry).unwrap();
        assert!((e.churn_time_days - expected_days).abs() < 1e-9);
        assert!((e.churn_time_days - 42.73).abs() < 0.01);
        assert_eq!(e.ave_churn, 9.38);
        assert_eq!(e.wait_days, 42);
        assert_eq!(e.wait_text, "42 day(s)");
    }

    #[test]
    fn single_tier_short_wait() {
        let e = estimate_wait(600_000, 1000, &table(), Direction::Entry).unwrap();
        assert!((e.churn_time_days - 1000.0 / 2025.0).abs() < 1e-12);
        // 1000/2025 days = 42666.67 s → 42667 s = 11 h + 3067 s → 51.1 min
        assert_eq!(e.wait_secs, 42_667);
        assert_eq!(e.wait_days, 0);
        assert_eq!(e.wait_text, "11 hour(s), 51 minute(s)");
        assert_eq!(e.ave_churn, 9.0);
    }

    #[test]
    fn wait_text_golden() {
        assert_eq!(format_wait(0), "0 hour(s), 0 minute(s)");
        assert_eq!(format_wait(86_399), "23 hour(s), 60 minute(s)");
        assert_eq!(format_wait(86_400), "1 day(s)");
        assert_eq!(format_wait(3 * 86_400 + 5), "3 day(s)");
        assert_eq!(format_wait(3_600 + 89), "1 hour(s), 1 minute(s)");
        assert_eq!(format_wait(3_600 + 90), "1 hour(s), 2 minute(s)");
    }

    #[test]
    fn out_of_range_active_is_an_error() {
        let t = table();
        let (low, high) = t.span();
        let err = EstimateError::ActiveOutOfTableRange { active: 10, low, high };
        assert_eq!(estimate_wait(10, 5, &t, Direction::Entry), Err(err.clone()));
        assert_eq!(simulate_queue(10, 5, &t, Direction::Entry), Err(err));
        assert!(estimate_wait(high, 0, &t, Direction::Entry).is_err());
        assert!(estimate_wait(high - 1, 0, &t, Direction::Entry).is_ok());
        assert!(estimate_wait(low, 0, &t, Direction::Entry).is_ok());
    }

    #[test]
    fn current_churn_at_exact_boundary_uses_that_tier() {
        let e = estimate_wait(655_360, 0, &table(), Direction::Entry).unwrap();
        assert_eq!(e.curr_churn, 10);
    }

    #[test]
    fn oracle_small_cases() {
        let t = table();
        assert_eq!(simulate_queue(600_000, 0, &t, Direction::Entry).unwrap(), 0);
        assert_eq!(simulate_queue(600_000, 1, &t, Direction::Entry).unwrap(), 1);
        assert_eq!(simulate_queue(262_144, 1, &t, Direction::Exit).unwrap(), 1);
        assert_eq!(simulate_queue(600_000, 9, &t, Direction::Entry).unwrap(), 1);
        assert_eq!(simulate_queue(600_000, 10, &t, Direction::Entry).unwrap(), 2);
    }

    #[test]
    fn oracle_agrees_on_worked_example() {
        let t = table();
        let days = simulate_queue_days(600_000, 90_000, &t, Direction::Entry).unwrap();
        let est = estimate_wait(600_000, 90_000, &t, Direction::Entry).unwrap();
        assert!((days - est.churn_time_days).abs() <= 1.0, "{days} vs {}", est.churn_time_days);
    }

    #[test]
    fn exit_walk_steps_down_tiers() {
        let t = table();
        // 600000 - 589824 = 10176 at churn 9, remaining 19824 at churn 8
        let e = estimate_wait(600_000, 30_000, &t, Direction::Exit).unwrap();
        let expected = 10_176.0 / 2025.0 + 19_824.0 / 1800.0;
        assert!((e.churn_time_days - expected).abs() < 1e-9);
        let days = simulate_queue_days(600_000, 30_000, &t, Direction::Exit).unwrap();
        assert!((days - e.churn_time_days).abs() <= 1.0);
    }

    #[test]
    fn walk_past_last_tier_keeps_last_churn() {
        let t = ChurnTable::build(ChurnParams::default(), 3).unwrap();
        // tiers 4, 5, (6 open-ended); start near the top of tier 5
        let active = 6 * 65_536 - 100;
        let e = estimate_wait(active, 1_450, &t, Direction::Entry).unwrap();
        let expected = 100.0 / 1125.0 + 1_350.0 / 1350.0;
        assert!((e.churn_time_days - expected).abs() < 1e-12);
    }
}
