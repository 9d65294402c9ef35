//! Liquid-staking pool with a share-based rebasing token.
//!
//! Holders own shares; a holder's token balance is
//! `shares × total_pooled / total_shares`, so a rebase only has to move
//! `total_pooled`. Fees are taken by minting new shares to node operators and
//! the treasury. Buffered ether is launched as 32 ETH validators spread across
//! node operators, least-staked first.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::chain::{ChainError, ChainState, ValidatorStatus};
use crate::units::{mul_div_floor, EntityId, Epoch, Gwei, ValidatorId, DEPOSIT_SIZE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoolError {
    #[error("amount must be greater than zero")]
    ZeroAmount,
    #[error("{entity} holds {held} shares, cannot move {requested}")]
    InsufficientShares { entity: EntityId, held: u64, requested: u64 },
    #[error("oracle report for epoch {got} does not follow epoch {prev}")]
    StaleReport { prev: Epoch, got: Epoch },
    #[error("report counts {got} validators on the beacon chain, pool has {expected}")]
    InconsistentReport { expected: u64, got: u64 },
    #[error("no node operators registered")]
    NoOperators,
    #[error("node operator {0} already registered")]
    DuplicateOperator(EntityId),
    #[error("fee split of {0} bps exceeds 10000")]
    FeesTooHigh(u64),
    #[error("unknown withdrawal ticket {0}")]
    UnknownTicket(u64),
    #[error("withdrawal ticket {0} is not claimable")]
    NotClaimable(u64),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolConfig {
    /// Entity that owns the pool's validators on the beacon chain.
    pub id: EntityId,
    pub treasury: EntityId,
    pub operator_fee_bps: u64,
    pub treasury_fee_bps: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            id: EntityId::new("pool"),
            treasury: EntityId::new("treasury"),
            operator_fee_bps: 500,
            treasury_fee_bps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorSlot {
    pub operator_id: EntityId,
    pub validator_ids: Vec<ValidatorId>,
    pub assigned_stake: Gwei,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub epoch: Epoch,
    pub beacon_balance: Gwei,
    pub beacon_validator_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RebaseSummary {
    pub reward: Gwei,
    pub penalty: Gwei,
    pub total_pooled_before: Gwei,
    pub total_pooled_after: Gwei,
    pub treasury_shares: u64,
    pub operator_shares: BTreeMap<EntityId, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketStatus {
    Pending,
    Claimable,
    Claimed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithdrawalTicket {
    pub id: u64,
    pub owner: EntityId,
    /// Ether owed, fixed at the moment the shares were burned.
    pub claim: Gwei,
    pub shares_burned: u64,
    pub requested_at: Epoch,
    pub status: TicketStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolEventKind {
    Submit,
    Transfer,
    Rebase,
    Penalty,
    FeeMint,
    Launch,
    WithdrawalRequest,
    WithdrawalFunded,
    Claim,
    ExitRequested,
    ExitCollected,
}

/// One row of the pool event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolEvent {
    pub epoch: u64,
    pub event_kind: PoolEventKind,
    pub entity: String,
    pub gwei: u64,
    pub shares: u64,
}

#[derive(Debug, Clone)]
pub struct PoolState {
    config: PoolConfig,
    total_pooled: Gwei,
    total_shares: u64,
    accounts: BTreeMap<EntityId, u64>,
    buffered: Gwei,
    // funded, unclaimed withdrawal tickets
    reserved: Gwei,
    operators: Vec<OperatorSlot>,
    tickets: BTreeMap<u64, WithdrawalTicket>,
    withdrawal_queue: VecDeque<u64>,
    exiting: BTreeSet<ValidatorId>,
    deposited_since_report: Gwei,
    withdrawn_since_report: Gwei,
    last_report: OracleReport,
    epoch: Epoch,
    events: Vec<PoolEvent>,
}

impl PoolState {
    pub fn new(config: PoolConfig) -> Result<Self, PoolError> {
        let fees = config.operator_fee_bps + config.treasury_fee_bps;
        if fees > 10_000 {
            return Err(PoolError::FeesTooHigh(fees));
        }
        Ok(PoolState {
            config,
            total_pooled: Gwei::ZERO,
            total_shares: 0,
            accounts: BTreeMap::new(),
            buffered: Gwei::ZERO,
            reserved: Gwei::ZERO,
            operators: Vec::new(),
            tickets: BTreeMap::new(),
            withdrawal_queue: VecDeque::new(),
            exiting: BTreeSet::new(),
            deposited_since_report: Gwei::ZERO,
            withdrawn_since_report: Gwei::ZERO,
            last_report: OracleReport::default(),
            epoch: Epoch(0),
            events: Vec::new(),
        })
    }

    pub fn id(&self) -> &EntityId {
        &self.config.id
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn total_pooled(&self) -> Gwei {
        self.total_pooled
    }

    pub fn total_shares(&self) -> u64 {
        self.total_shares
    }

    pub fn buffered(&self) -> Gwei {
        self.buffered
    }

    pub fn reserved(&self) -> Gwei {
        self.reserved
    }

    pub fn accounts(&self) -> &BTreeMap<EntityId, u64> {
        &self.accounts
    }

    pub fn operators(&self) -> &[OperatorSlot] {
        &self.operators
    }

    pub fn events(&self) -> &[PoolEvent] {
        &self.events
    }

    pub fn last_report(&self) -> OracleReport {
        self.last_report
    }

    pub fn ticket(&self, id: u64) -> Option<&WithdrawalTicket> {
        self.tickets.get(&id)
    }

    pub fn pending_tickets(&self) -> impl Iterator<Item = &WithdrawalTicket> {
        self.withdrawal_queue.iter().map(|id| &self.tickets[id])
    }

    /// Funded tickets waiting to be claimed, oldest first.
    pub fn claimable_tickets(&self) -> impl Iterator<Item = &WithdrawalTicket> {
        self.tickets.values().filter(|t| t.status == TicketStatus::Claimable)
    }

    pub fn exiting(&self) -> &BTreeSet<ValidatorId> {
        &self.exiting
    }

    /// Validators launched by the pool and not yet collected after exit.
    pub fn validator_ids(&self) -> impl Iterator<Item = ValidatorId> + '_ {
        self.operators.iter().flat_map(|o| o.validator_ids.iter().copied())
    }

    fn log(&mut self, kind: PoolEventKind, entity: &EntityId, gwei: Gwei, shares: u64) {
        self.events.push(PoolEvent {
            epoch: self.epoch.0,
            event_kind: kind,
            entity: entity.0.clone(),
            gwei: gwei.get(),
            shares,
        });
    }

    pub fn register_operator(&mut self, operator_id: EntityId) -> Result<(), PoolError> {
        match self.operators.binary_search_by(|o| o.operator_id.cmp(&operator_id)) {
            Ok(_) => Err(PoolError::DuplicateOperator(operator_id)),
            Err(pos) => {
                self.operators.insert(
                    pos,
                    OperatorSlot { operator_id, validator_ids: Vec::new(), assigned_stake: Gwei::ZERO },
                );
                Ok(())
            }
        }
    }

    pub fn shares_of(&self, user: &EntityId) -> u64 {
        self.accounts.get(user).copied().unwrap_or(0)
    }

    /// Ether value of `shares` at the current rate, rounded down.
    pub fn shares_to_gwei(&self, shares: u64) -> Gwei {
        if self.total_shares == 0 {
            return Gwei::ZERO;
        }
        Gwei(mul_div_floor(shares, self.total_pooled.get(), self.total_shares))
    }

    pub fn balance_of(&self, user: &EntityId) -> Gwei {
        self.shares_to_gwei(self.shares_of(user))
    }

    fn mint(&mut self, to: &EntityId, shares: u64) {
        if shares == 0 {
            return;
        }
        *self.accounts.entry(to.clone()).or_insert(0) += shares;
        self.total_shares += shares;
    }

    fn take_shares(&mut self, from: &EntityId, shares: u64) -> Result<(), PoolError> {
        let held = self.shares_of(from);
        if held < shares {
            return Err(PoolError::InsufficientShares { entity: from.clone(), held, requested: shares });
        }
        if held == shares {
            self.accounts.remove(from);
        } else {
            self.accounts.insert(from.clone(), held - shares);
        }
        Ok(())
    }

    /// Deposits ether and mints shares at the current rate (1:1 for the first
    /// deposit).
    pub fn submit(&mut self, user: &EntityId, amount: Gwei) -> Result<u64, PoolError> {
        if amount.is_zero() {
            return Err(PoolError::ZeroAmount);
        }
        let minted = if self.total_shares == 0 || self.total_pooled.is_zero() {
            amount.get()
        } else {
            mul_div_floor(amount.get(), self.total_shares, self.total_pooled.get())
        };
        self.mint(user, minted);
        self.total_pooled += amount;
        self.buffered += amount;
        self.log(PoolEventKind::Submit, user, amount, minted);
        Ok(minted)
    }

    pub fn transfer_shares(&mut self, from: &EntityId, to: &EntityId, shares: u64) -> Result<(), PoolError> {
        if shares == 0 {
            return Ok(());
        }
        self.take_shares(from, shares)?;
        *self.accounts.entry(to.clone()).or_insert(0) += shares;
        let value = self.shares_to_gwei(shares);
        self.log(PoolEventKind::Transfer, from, value, shares);
        Ok(())
    }

    /// Builds the report an oracle would observe on `chain` right now.
    pub fn observe(&self, chain: &ChainState) -> OracleReport {
        let mut report = OracleReport { epoch: chain.epoch(), ..OracleReport::default() };
        for id in self.validator_ids() {
            if let Some(v) = chain.validator(id).filter(|v| !v.withdrawn) {
                report.beacon_balance += v.balance;
                report.beacon_validator_count += 1;
            }
        }
        report
    }

    /// Applies a new oracle report relative to `prev`.
    ///
    /// The balance change not explained by deposits launched or balances
    /// withdrawn since the previous report is the reward (or penalty). A
    /// reward raises `total_pooled`, then fee shares are minted so the node
    /// operators and treasury end up holding exactly their fee fraction of it.
    pub fn handle_oracle_report(
        &mut self,
        report: OracleReport,
        prev: OracleReport,
    ) -> Result<RebaseSummary, PoolError> {
        if report.epoch <= prev.epoch {
            return Err(PoolError::StaleReport { prev: prev.epoch, got: report.epoch });
        }
        let expected = self.validator_ids().count() as u64;
        if report.beacon_validator_count > expected {
            return Err(PoolError::InconsistentReport { expected, got: report.beacon_validator_count });
        }
        self.epoch = self.epoch.max(report.epoch);

        let delta = report.beacon_balance.get() as i128 - prev.beacon_balance.get() as i128
            - self.deposited_since_report.get() as i128
            + self.withdrawn_since_report.get() as i128;
        self.deposited_since_report = Gwei::ZERO;
        self.withdrawn_since_report = Gwei::ZERO;
        self.last_report = report;

        let mut summary = RebaseSummary { total_pooled_before: self.total_pooled, ..Default::default() };
        if delta < 0 {
            let loss = Gwei(u64::try_from(-delta).unwrap_or(u64::MAX)).min(self.total_pooled);
            self.total_pooled -= loss;
            summary.penalty = loss;
            let pool = self.config.id.clone();
            self.log(PoolEventKind::Penalty, &pool, loss, 0);
        } else if delta > 0 {
            let reward = Gwei(delta as u64);
            self.total_pooled += reward;
            summary.reward = reward;
            let pool = self.config.id.clone();
            self.log(PoolEventKind::Rebase, &pool, reward, 0);
            if self.total_shares == 0 {
                // Nobody holds shares (everyone has withdrawn): the reward
                // would be unowned, so it goes to the treasury at par.
                let treasury = self.config.treasury.clone();
                self.mint(&treasury, self.total_pooled.get());
                summary.treasury_shares = self.total_pooled.get();
                self.log(PoolEventKind::FeeMint, &treasury, self.total_pooled, self.total_pooled.get());
            } else {
                self.mint_fees(reward, &mut summary);
            }
        }
        summary.total_pooled_after = self.total_pooled;
        Ok(summary)
    }

    fn mint_fees(&mut self, reward: Gwei, summary: &mut RebaseSummary) {
        let fee_bps = self.config.operator_fee_bps + self.config.treasury_fee_bps;
        if fee_bps == 0 || self.total_shares == 0 {
            return;
        }
        let fee_eth = reward.mul_div(fee_bps, 10_000);
        let base = self.total_pooled - fee_eth;
        if fee_eth.is_zero() || base.is_zero() {
            return;
        }
        // Shares worth `fee_eth` after minting: s / (S + s) × T = fee
        let new_shares = mul_div_floor(fee_eth.get(), self.total_shares, base.get());
        let mut treasury_shares = mul_div_floor(new_shares, self.config.treasury_fee_bps, fee_bps);
        let operator_total = new_shares - treasury_shares;

        let staked: u64 = self.operators.iter().map(|o| o.assigned_stake.get()).sum();
        let mut operator_mints = Vec::new();
        if staked == 0 {
            treasury_shares += operator_total;
        } else {
            let mut given = 0;
            for op in &self.operators {
                let s = mul_div_floor(operator_total, op.assigned_stake.get(), staked);
                given += s;
                operator_mints.push((op.operator_id.clone(), s));
            }
            // floor dust goes to the most-staked operator
            if let Some(top) = self
                .operators
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.assigned_stake.cmp(&b.1.assigned_stake).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
            {
                operator_mints[top].1 += operator_total - given;
            }
        }

        let treasury = self.config.treasury.clone();
        self.mint(&treasury, treasury_shares);
        for (op, shares) in operator_mints {
            self.mint(&op, shares);
            if shares > 0 {
                summary.operator_shares.insert(op, shares);
            }
        }
        summary.treasury_shares = treasury_shares;
        let fee_value = self.shares_to_gwei(new_shares);
        self.log(PoolEventKind::FeeMint, &treasury, fee_value, new_shares);
    }

    /// Observes `chain` and applies the result against the last stored report.
    pub fn oracle_update(&mut self, chain: &ChainState) -> Result<RebaseSummary, PoolError> {
        let report = self.observe(chain);
        let prev = self.last_report;
        self.handle_oracle_report(report, prev)
    }

    /// Launches every full 32 ETH in the buffer as a validator, each one on
    /// the node operator with the least assigned stake (ties: lowest id).
    pub fn assign_stake_dvt(&mut self, chain: &mut ChainState) -> Result<Vec<ValidatorId>, PoolError> {
        if self.operators.is_empty() {
            return Err(PoolError::NoOperators);
        }
        self.epoch = self.epoch.max(chain.epoch());
        self.fund_withdrawals();
        let mut launched = Vec::new();
        while self.buffered >= DEPOSIT_SIZE {
            let slot = self
                .operators
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.assigned_stake.cmp(&b.1.assigned_stake).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("operators non-empty");
            let id = chain.submit_deposit(self.config.id.clone(), DEPOSIT_SIZE)?;
            self.buffered -= DEPOSIT_SIZE;
            self.deposited_since_report += DEPOSIT_SIZE;
            let op = &mut self.operators[slot];
            op.validator_ids.push(id);
            op.assigned_stake += DEPOSIT_SIZE;
            let op_id = op.operator_id.clone();
            self.log(PoolEventKind::Launch, &op_id, DEPOSIT_SIZE, 0);
            launched.push(id);
        }
        Ok(launched)
    }

    /// Burns `shares` into a fixed ether claim and queues it. The claim is
    /// paid from the buffer when possible; otherwise enough whole pool
    /// validators are sent to the exit queue to cover it.
    pub fn request_withdrawal(
        &mut self,
        chain: &mut ChainState,
        user: &EntityId,
        shares: u64,
    ) -> Result<u64, PoolError> {
        if shares == 0 {
            return Err(PoolError::ZeroAmount);
        }
        let held = self.shares_of(user);
        if held < shares {
            return Err(PoolError::InsufficientShares { entity: user.clone(), held, requested: shares });
        }
        self.epoch = self.epoch.max(chain.epoch());
        let claim = self.shares_to_gwei(shares);
        self.take_shares(user, shares)?;
        self.total_shares -= shares;
        self.total_pooled -= claim;

        let id = self.tickets.len() as u64;
        self.tickets.insert(
            id,
            WithdrawalTicket {
                id,
                owner: user.clone(),
                claim,
                shares_burned: shares,
                requested_at: self.epoch,
                status: TicketStatus::Pending,
            },
        );
        self.withdrawal_queue.push_back(id);
        self.log(PoolEventKind::WithdrawalRequest, user, claim, shares);
        self.fund_withdrawals();
        self.ensure_exit_coverage(chain)?;
        Ok(id)
    }

    /// Pays out a funded ticket.
    pub fn claim(&mut self, ticket_id: u64) -> Result<Gwei, PoolError> {
        let ticket = self.tickets.get_mut(&ticket_id).ok_or(PoolError::UnknownTicket(ticket_id))?;
        if ticket.status != TicketStatus::Claimable {
            return Err(PoolError::NotClaimable(ticket_id));
        }
        ticket.status = TicketStatus::Claimed;
        let (owner, claim) = (ticket.owner.clone(), ticket.claim);
        self.reserved -= claim;
        self.log(PoolEventKind::Claim, &owner, claim, 0);
        Ok(claim)
    }

    /// Funds queued tickets from the buffer in FIFO order.
    fn fund_withdrawals(&mut self) {
        while let Some(&id) = self.withdrawal_queue.front() {
            let claim = self.tickets[&id].claim;
            if claim > self.buffered {
                break;
            }
            self.withdrawal_queue.pop_front();
            self.buffered -= claim;
            self.reserved += claim;
            let t = self.tickets.get_mut(&id).expect("queued ticket exists");
            t.status = TicketStatus::Claimable;
            let owner = t.owner.clone();
            self.log(PoolEventKind::WithdrawalFunded, &owner, claim, 0);
        }
    }

    fn ensure_exit_coverage(&mut self, chain: &mut ChainState) -> Result<(), PoolError> {
        let unfunded: Gwei = self.pending_tickets().map(|t| t.claim).sum();
        let covered = self.buffered.get() as u128 + DEPOSIT_SIZE.get() as u128 * self.exiting.len() as u128;
        let mut missing = (unfunded.get() as u128).saturating_sub(covered);
        while missing > 0 {
            let Some(id) = self.pick_exit_candidate(chain) else { break };
            chain.request_exit(id)?;
            self.exiting.insert(id);
            let owner = self.config.id.clone();
            self.log(PoolEventKind::ExitRequested, &owner, DEPOSIT_SIZE, 0);
            missing = missing.saturating_sub(DEPOSIT_SIZE.get() as u128);
        }
        Ok(())
    }

    // Most-staked operator first (after discounting validators already
    // exiting), newest active validator within it.
    fn pick_exit_candidate(&self, chain: &ChainState) -> Option<ValidatorId> {
        let mut order: Vec<(u64, usize)> = self
            .operators
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let exiting = o.validator_ids.iter().filter(|v| self.exiting.contains(v)).count() as u64;
                (o.validator_ids.len() as u64 - exiting, i)
            })
            .collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        order.into_iter().find_map(|(_, i)| {
            self.operators[i].validator_ids.iter().rev().copied().find(|id| {
                !self.exiting.contains(id)
                    && chain.validator(*id).is_some_and(|v| v.status == ValidatorStatus::Active)
            })
        })
    }

    /// Withdraws every pool validator that has finished exiting and moves the
    /// proceeds into the buffer.
    pub fn collect_exits(&mut self, chain: &mut ChainState) -> Result<Gwei, PoolError> {
        self.epoch = self.epoch.max(chain.epoch());
        let done: Vec<ValidatorId> = self
            .validator_ids()
            .filter(|id| chain.validator(*id).is_some_and(|v| v.status == ValidatorStatus::Exited && !v.withdrawn))
            .collect();
        let mut total = Gwei::ZERO;
        for id in done {
            let w = chain.withdraw(id)?;
            total += w.paid;
            self.buffered += w.paid;
            self.withdrawn_since_report += w.paid;
            self.exiting.remove(&id);
            for op in &mut self.operators {
                if let Some(pos) = op.validator_ids.iter().position(|v| *v == id) {
                    op.validator_ids.remove(pos);
                    op.assigned_stake -= DEPOSIT_SIZE;
                }
            }
            let owner = self.config.id.clone();
            self.log(PoolEventKind::ExitCollected, &owner, w.paid, 0);
        }
        Ok(total)
    }

    /// One housekeeping pass: collect finished exits, fund tickets, request any
    /// further exits still needed, and launch what remains in the buffer.
    pub fn tick(&mut self, chain: &mut ChainState) -> Result<Vec<ValidatorId>, PoolError> {
        self.collect_exits(chain)?;
        self.fund_withdrawals();
        self.ensure_exit_coverage(chain)?;
        if self.operators.is_empty() {
            return Ok(Vec::new());
        }
        self.assign_stake_dvt(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainConfig;

    fn eth(n: u64) -> Gwei {
        Gwei::from_eth(n)
    }

    fn pool() -> PoolState {
        PoolState::new(PoolConfig::default()).unwrap()
    }

    fn user(name: &str) -> EntityId {
        EntityId::new(name)
    }

    #[test]
    fn bootstrap_is_one_to_one() {
        let mut p = pool();
        assert_eq!(p.submit(&user("a"), eth(32)).unwrap(), eth(32).get());
        assert_eq!(p.balance_of(&user("a")), eth(32));
        assert_eq!(p.buffered(), eth(32));
        assert_eq!(p.submit(&user("a"), Gwei::ZERO), Err(PoolError::ZeroAmount));
    }

    #[test]
    fn mints_at_par_and_after_rebase() {
        let mut p = pool();
        p.submit(&user("a"), Gwei(100)).unwrap();
        assert_eq!(p.submit(&user("b"), Gwei(50)).unwrap(), 50);

        let mut p = pool();
        p.submit(&user("a"), Gwei(100)).unwrap();
        p.total_pooled = Gwei(110);
        // floor(11 × 100 / 110) = 10
        assert_eq!(p.submit(&user("b"), Gwei(11)).unwrap(), 10);
        let b = p.balance_of(&user("b")).get();
        assert!(b.abs_diff(11) <= 1);
    }

    #[test]
    fn unknown_user_has_zero_balance() {
        assert_eq!(pool().balance_of(&user("nobody")), Gwei::ZERO);
    }

    #[test]
    fn transfers() {
        let mut p = pool();
        p.submit(&user("a"), eth(10)).unwrap();
        let shares = p.shares_of(&user("a"));
        p.transfer_shares(&user("a"), &user("b"), 0).unwrap();
        assert_eq!(p.shares_of(&user("a")), shares);

        p.transfer_shares(&user("a"), &user("b"), shares / 2).unwrap();
        assert!(p.balance_of(&user("a")).get().abs_diff(eth(5).get()) <= 1);
        assert!(p.balance_of(&user("b")).get().abs_diff(eth(5).get()) <= 1);
        assert_eq!(p.total_shares(), shares);

        let err = p.transfer_shares(&user("b"), &user("a"), shares).unwrap_err();
        assert!(matches!(err, PoolError::InsufficientShares { .. }));

        let rest = p.shares_of(&user("a"));
        p.transfer_shares(&user("a"), &user("c"), rest).unwrap();
        assert_eq!(p.balance_of(&user("a")), Gwei::ZERO);
    }

    fn staked_pool(fees: (u64, u64)) -> (PoolState, ChainState) {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = PoolState::new(PoolConfig {
            operator_fee_bps: fees.0,
            treasury_fee_bps: fees.1,
            ..PoolConfig::default()
        })
        .unwrap();
        for op in ["op-a", "op-b", "op-c"] {
            p.register_operator(user(op)).unwrap();
        }
        p.submit(&user("alice"), eth(60)).unwrap();
        p.submit(&user("bob"), eth(36)).unwrap();
        p.assign_stake_dvt(&mut chain).unwrap();
        chain.process_epoch();
        let s = p.oracle_update(&chain).unwrap();
        assert_eq!(s.reward, Gwei::ZERO);
        (p, chain)
    }

    #[test]
    fn zero_reward_report_changes_nothing() {
        let (mut p, mut chain) = staked_pool((500, 500));
        let before = p.accounts().clone();
        chain.process_epoch();
        let s = p.oracle_update(&chain).unwrap();
        assert_eq!(s, RebaseSummary {
            total_pooled_before: eth(96),
            total_pooled_after: eth(96),
            ..Default::default()
        });
        assert_eq!(p.accounts(), &before);
    }

    #[test]
    fn fee_split_five_five_ninety() {
        let (mut p, _chain) = staked_pool((500, 500));
        let holders = [user("alice"), user("bob")];
        let ops = [user("op-a"), user("op-b"), user("op-c")];
        let before: Vec<_> = holders.iter().map(|h| p.balance_of(h)).collect();
        let prev = p.last_report();
        let report = OracleReport {
            epoch: Epoch(prev.epoch.0 + 1),
            beacon_balance: prev.beacon_balance + eth(1),
            beacon_validator_count: 3,
        };
        p.handle_oracle_report(report, prev).unwrap();
        let ops_gain: u64 = ops.iter().map(|o| p.balance_of(o).get()).sum();
        let treasury_gain = p.balance_of(&user("treasury")).get();
        let holders_gain: u64 = holders
            .iter()
            .zip(&before)
            .map(|(h, b)| p.balance_of(h).get() - b.get())
            .sum();
        let tol = holders.len() as u64 + 2;
        assert!(ops_gain.abs_diff(50_000_000) <= tol, "{ops_gain}");
        assert!(treasury_gain.abs_diff(50_000_000) <= tol, "{treasury_gain}");
        assert!(holders_gain.abs_diff(900_000_000) <= tol, "{holders_gain}");
        // three equally staked operators split their part evenly
        for o in &ops {
            assert!(p.balance_of(o).get().abs_diff(50_000_000 / 3) <= 2);
        }
    }

    #[test]
    fn reward_with_no_holders_goes_to_treasury() {
        let (mut p, mut chain) = staked_pool((500, 500));
        for h in ["alice", "bob"] {
            let shares = p.shares_of(&user(h));
            p.request_withdrawal(&mut chain, &user(h), shares).unwrap();
        }
        assert_eq!((p.total_shares(), p.total_pooled()), (0, Gwei::ZERO));
        let prev = p.last_report();
        let report = OracleReport { epoch: Epoch(prev.epoch.0 + 1), beacon_balance: prev.beacon_balance + eth(1), ..prev };
        p.handle_oracle_report(report, prev).unwrap();
        assert_eq!(p.shares_of(&user("treasury")), p.total_shares());
        assert_eq!(p.balance_of(&user("treasury")), eth(1));
    }

    #[test]
    fn stale_report_rejected() {
        let (mut p, _) = staked_pool((500, 500));
        let prev = p.last_report();
        assert_eq!(
            p.handle_oracle_report(prev, prev),
            Err(PoolError::StaleReport { prev: prev.epoch, got: prev.epoch })
        );
    }

    #[test]
    fn penalty_shrinks_everyone_proportionally() {
        let (mut p, _) = staked_pool((500, 500));
        let prev = p.last_report();
        let report = OracleReport {
            epoch: Epoch(prev.epoch.0 + 1),
            beacon_balance: prev.beacon_balance - eth(3),
            beacon_validator_count: 3,
        };
        let old_total = p.total_pooled();
        let alice = p.balance_of(&user("alice"));
        let bob = p.balance_of(&user("bob"));
        let s = p.handle_oracle_report(report, prev).unwrap();
        assert_eq!(s.penalty, eth(3));
        assert!(s.operator_shares.is_empty());
        assert_eq!(s.treasury_shares, 0);
        assert_eq!(p.total_pooled(), old_total - eth(3));
        for (who, was) in [("alice", alice), ("bob", bob)] {
            let want = mul_div_floor(was.get(), p.total_pooled().get(), old_total.get());
            assert!(p.balance_of(&user(who)).get().abs_diff(want) <= 1);
        }
    }

    #[test]
    fn dvt_requires_operators() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        p.submit(&user("a"), eth(64)).unwrap();
        assert_eq!(p.assign_stake_dvt(&mut chain), Err(PoolError::NoOperators));
        assert_eq!(p.register_operator(user("x")), Ok(()));
        assert_eq!(p.register_operator(user("x")), Err(PoolError::DuplicateOperator(user("x"))));
    }

    #[test]
    fn dvt_below_threshold_launches_nothing() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        p.register_operator(user("x")).unwrap();
        p.submit(&user("a"), eth(31)).unwrap();
        assert!(p.assign_stake_dvt(&mut chain).unwrap().is_empty());
        assert_eq!(chain.activation_queue().len(), 0);
    }

    #[test]
    fn dvt_spreads_evenly() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        for op in ["a", "b", "c"] {
            p.register_operator(user(op)).unwrap();
        }
        p.submit(&user("u"), eth(96)).unwrap();
        assert_eq!(p.assign_stake_dvt(&mut chain).unwrap().len(), 3);
        assert!(p.operators().iter().all(|o| o.assigned_stake == eth(32) && o.validator_ids.len() == 1));
        assert_eq!(p.buffered(), Gwei::ZERO);
        assert_eq!(chain.activation_queue().len(), 3);
        assert!(chain.validators().iter().all(|v| v.entity == *p.id()));
    }

    #[test]
    fn dvt_fills_least_staked_then_breaks_ties_by_id() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        p.register_operator(user("op1")).unwrap();
        p.submit(&user("u"), eth(32)).unwrap();
        p.assign_stake_dvt(&mut chain).unwrap();
        p.register_operator(user("op2")).unwrap();
        // stakes (32, 0): first launch goes to op2, then (32, 32) ties to op1
        p.submit(&user("u"), eth(64)).unwrap();
        let ids = p.assign_stake_dvt(&mut chain).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(p.operators()[1].validator_ids, vec![ids[0]]);
        assert_eq!(p.operators()[0].validator_ids[1], ids[1]);
        assert_eq!(p.operators()[0].assigned_stake, eth(64));
        assert_eq!(p.operators()[1].assigned_stake, eth(32));
    }

    #[test]
    fn withdraw_all_through_exit_queue() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        p.register_operator(user("op")).unwrap();
        p.submit(&user("solo"), eth(32)).unwrap();
        p.tick(&mut chain).unwrap();
        chain.process_epoch();
        let shares = p.shares_of(&user("solo"));
        let burn_value = p.balance_of(&user("solo"));
        let t = p.request_withdrawal(&mut chain, &user("solo"), shares).unwrap();
        assert_eq!(chain.exit_queue().len(), 1);
        assert_eq!(p.ticket(t).unwrap().status, TicketStatus::Pending);
        assert_eq!(p.claim(t), Err(PoolError::NotClaimable(t)));
        chain.process_epoch();
        p.tick(&mut chain).unwrap();
        assert_eq!(p.ticket(t).unwrap().status, TicketStatus::Claimable);
        assert_eq!(p.claim(t).unwrap(), burn_value);
        assert_eq!(p.ticket(t).unwrap().status, TicketStatus::Claimed);
        assert_eq!(p.total_shares(), 0);
        assert_eq!(chain.validators()[0].status, ValidatorStatus::Exited);
        assert!(p.operators()[0].validator_ids.is_empty());
    }

    #[test]
    fn zero_share_withdrawal_rejected() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        p.submit(&user("a"), eth(1)).unwrap();
        assert_eq!(p.request_withdrawal(&mut chain, &user("a"), 0), Err(PoolError::ZeroAmount));
        assert!(matches!(
            p.request_withdrawal(&mut chain, &user("b"), 1),
            Err(PoolError::InsufficientShares { .. })
        ));
    }

    #[test]
    fn small_claim_served_from_buffer() {
        let mut chain = ChainState::new(ChainConfig::default());
        let mut p = pool();
        p.register_operator(user("op")).unwrap();
        p.submit(&user("a"), eth(40)).unwrap();
        p.tick(&mut chain).unwrap();
        chain.process_epoch();
        assert_eq!(p.buffered(), eth(8));
        let t = p.request_withdrawal(&mut chain, &user("a"), eth(5).get()).unwrap();
        assert_eq!(chain.exit_queue().len(), 0);
        assert_eq!(p.ticket(t).unwrap().status, TicketStatus::Claimable);
        assert_eq!(p.claim(t).unwrap(), eth(5));
        assert_eq!(p.buffered(), eth(3));
    }

    #[test]
    fn fees_capped_at_full_reward() {
        let cfg = PoolConfig { operator_fee_bps: 6000, treasury_fee_bps: 5000, ..PoolConfig::default() };
        assert_eq!(PoolState::new(cfg).unwrap_err(), PoolError::FeesTooHigh(11_000));
    }
}
