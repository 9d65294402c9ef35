//! Stake-concentration metrics over a snapshot of the simulated economy.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::chain::{ChainState, ValidatorStatus};
use crate::pool::PoolState;
use crate::restake::RestakeState;
use crate::units::{mul_div_floor, EntityId, Gwei, DEPOSIT_SIZE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("stake distribution is empty")]
    EmptyDistribution,
    #[error("threshold {0} is not in (0, 1)")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StakeEntry {
    pub entity: EntityId,
    pub stake: Gwei,
    pub fraction: f64,
}

/// Stake per entity, sorted by stake descending (ties by entity name).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StakeDistribution {
    pub entries: Vec<StakeEntry>,
    pub total: Gwei,
}

impl StakeDistribution {
    /// Aggregates `(entity, stake)` pairs; repeated entities are summed and
    /// zero stakes dropped.
    pub fn from_stakes<I>(stakes: I) -> Self
    where
        I: IntoIterator<Item = (EntityId, Gwei)>,
    {
        let mut by_entity: BTreeMap<EntityId, Gwei> = BTreeMap::new();
        for (entity, stake) in stakes {
            *by_entity.entry(entity).or_default() += stake;
        }
        let total: Gwei = by_entity.values().sum();
        let mut entries: Vec<StakeEntry> = by_entity
            .into_iter()
            .filter(|(_, s)| !s.is_zero())
            .map(|(entity, stake)| StakeEntry {
                fraction: stake.get() as f64 / total.get() as f64,
                entity,
                stake,
            })
            .collect();
        entries.sort_by(|a, b| b.stake.cmp(&a.stake).then_with(|| a.entity.cmp(&b.entity)));
        StakeDistribution { entries, total }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Who liquid-pool validators count toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolAttribution {
    /// The pool is one entity.
    #[default]
    Pool,
    /// Split across token holders by share.
    LookThrough,
}

/// Who restaked stake counts toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestakeAttribution {
    /// The operator running the node.
    #[default]
    Operator,
    /// The staker who owns the stake.
    Delegator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Attribution {
    pub pool: PoolAttribution,
    pub restake: RestakeAttribution,
}

/// Attributes each active validator's 32 ETH to its controlling entity, plus
/// any delegated restake.
pub fn stake_distribution(
    chain: &ChainState,
    pool: Option<&PoolState>,
    restake: Option<&RestakeState>,
    attribution: Attribution,
) -> StakeDistribution {
    let mut stakes: Vec<(EntityId, Gwei)> = Vec::new();
    let mut pool_stake = Gwei::ZERO;

    for v in chain.validators().iter().filter(|v| v.status == ValidatorStatus::Active) {
        if let Some(p) = pool.filter(|p| *p.id() == v.entity) {
            match attribution.pool {
                PoolAttribution::Pool => stakes.push((p.id().clone(), DEPOSIT_SIZE)),
                PoolAttribution::LookThrough => pool_stake += DEPOSIT_SIZE,
            }
            continue;
        }
        let operator = match attribution.restake {
            RestakeAttribution::Operator => restake.and_then(|r| r.operator_of_validator(v.id)),
            RestakeAttribution::Delegator => None,
        };
        stakes.push((operator.unwrap_or(&v.entity).clone(), DEPOSIT_SIZE));
    }

    if let Some(p) = pool.filter(|p| p.total_shares() > 0 && !pool_stake.is_zero()) {
        for (holder, shares) in p.accounts() {
            let part = mul_div_floor(pool_stake.get(), *shares, p.total_shares());
            stakes.push((holder.clone(), Gwei(part)));
        }
    }

    if let Some(r) = restake {
        for op in r.operators() {
            for (staker, amount) in &op.delegated {
                let who = match attribution.restake {
                    RestakeAttribution::Operator => &op.id,
                    RestakeAttribution::Delegator => staker,
                };
                stakes.push((who.clone(), *amount));
            }
        }
    }

    StakeDistribution::from_stakes(stakes)
}

/// Smallest number of top entities whose combined share strictly exceeds
/// `threshold`.
pub fn nakamoto_coefficient(dist: &StakeDistribution, threshold: f64) -> Result<usize, AnalyticsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AnalyticsError::InvalidThreshold(threshold));
    }
    if dist.is_empty() {
        return Err(AnalyticsError::EmptyDistribution);
    }
    let total = dist.total.get() as f64;
    let mut cumulative: u128 = 0;
    for (k, entry) in dist.entries.iter().enumerate() {
        cumulative += entry.stake.get() as u128;
        if cumulative as f64 / total > threshold {
            return Ok(k + 1);
        }
    }
    Ok(dist.len())
}

/// Herfindahl–Hirschman index on percentage shares; 10000 is a monopoly.
pub fn hhi(dist: &StakeDistribution) -> Result<f64, AnalyticsError> {
    if dist.is_empty() {
        return Err(AnalyticsError::EmptyDistribution);
    }
    Ok(dist.entries.iter().map(|e| (100.0 * e.fraction).powi(2)).sum())
}

/// Gini coefficient of the stakes.
pub fn gini(dist: &StakeDistribution) -> Result<f64, AnalyticsError> {
    if dist.is_empty() {
        return Err(AnalyticsError::EmptyDistribution);
    }
    let n = dist.len() as f64;
    let total = dist.total.get() as f64;
    // entries are descending; rank ascending as n - i
    let weighted: f64 = dist
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (dist.len() - i) as f64 * e.stake.get() as f64)
        .sum();
    Ok(((2.0 * weighted) / (n * total) - (n + 1.0) / n).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentralizationReport {
    pub nakamoto_coefficient: usize,
    pub hhi: f64,
    pub gini: f64,
}

impl CentralizationReport {
    pub fn compute(dist: &StakeDistribution, threshold: f64) -> Result<Self, AnalyticsError> {
        Ok(CentralizationReport {
            nakamoto_coefficient: nakamoto_coefficient(dist, threshold)?,
            hhi: hhi(dist)?,
            gini: gini(dist)?,
        })
    }
}
