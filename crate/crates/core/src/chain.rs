//! Epoch-stepped beacon-chain model: validator registry, churn-limited
//! activation and exit queues, reward accrual and slash application.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{
    EntityId, Epoch, Gwei, ValidatorId, DAYS_PER_YEAR, DEFAULT_EPOCHS_PER_DAY, DEPOSIT_SIZE,
};

/// Parameters of the churn-limit rule `max(min_churn, floor(active / churn_quotient))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnParams {
    pub min_churn: u64,
    pub churn_quotient: u64,
    pub epochs_per_day: u64,
}

impl Default for ChurnParams {
    fn default() -> Self {
        ChurnParams {
            min_churn: 4,
            churn_quotient: 65_536,
            epochs_per_day: DEFAULT_EPOCHS_PER_DAY,
        }
    }
}

impl ChurnParams {
    pub fn churn_limit(&self, active: u64) -> u64 {
        churn_limit(active, self.min_churn, self.churn_quotient)
    }

    pub fn epochs_per_year(&self) -> u64 {
        self.epochs_per_day * DAYS_PER_YEAR
    }
}

/// Per-epoch activation (or exit) allowance for an active set of `active` validators.
pub fn churn_limit(active: u64, min_churn: u64, churn_quotient: u64) -> u64 {
    (active / churn_quotient).max(min_churn)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub churn: ChurnParams,
    /// Gross annual reward rate on effective balance, MEV included.
    pub apr_bps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidatorStatus {
    PendingQueued,
    Active,
    ExitQueued,
    Exited,
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WithdrawalTarget {
    Beacon,
    RestakeLayer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatorRecord {
    pub id: ValidatorId,
    pub balance: Gwei,
    pub status: ValidatorStatus,
    pub activation_epoch: Option<Epoch>,
    pub exit_epoch: Option<Epoch>,
    pub entity: EntityId,
    pub withdrawal_target: WithdrawalTarget,
    /// Set once the balance has left the beacon chain.
    pub withdrawn: bool,
    // Sub-gwei reward remainder, in units of 1 / (10000 × epochs_per_year) gwei.
    reward_carry: u64,
}

impl ValidatorRecord {
    /// Balance that earns rewards; capped at one deposit.
    pub fn effective_balance(&self) -> Gwei {
        self.balance.min(DEPOSIT_SIZE)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("deposit of {0} is not exactly 32 ETH")]
    AmountNot32Eth(Gwei),
    #[error("validator {0} is not active")]
    NotActive(ValidatorId),
    #[error("validator {0} is already in the exit queue")]
    AlreadyQueued(ValidatorId),
    #[error("unknown validator {0}")]
    UnknownValidator(ValidatorId),
    #[error("validator {0} cannot be slashed in its current state")]
    NotSlashable(ValidatorId),
    #[error("validator {0} has nothing to withdraw")]
    NotWithdrawable(ValidatorId),
}

/// Outcome of one `process_epoch` step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpochReport {
    pub epoch: Epoch,
    /// Active validators after the step.
    pub active: u64,
    pub activation_queue_len: u64,
    pub exit_queue_len: u64,
    pub activated: Vec<ValidatorId>,
    pub exited: Vec<ValidatorId>,
    pub rewards: Gwei,
    pub slashed: Gwei,
}

/// Flat CSV form of an [`EpochReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub active: u64,
    pub activation_queue_len: u64,
    pub exit_queue_len: u64,
    pub activated: u64,
    pub exited: u64,
    pub rewards_gwei: u64,
    pub slashed_gwei: u64,
}

impl EpochReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "epoch",
        "active",
        "activation_queue_len",
        "exit_queue_len",
        "activated",
        "exited",
        "rewards_gwei",
        "slashed_gwei",
    ];

    pub fn to_row(&self) -> EpochRow {
        EpochRow {
            epoch: self.epoch.0,
            active: self.active,
            activation_queue_len: self.activation_queue_len,
            exit_queue_len: self.exit_queue_len,
            activated: self.activated.len() as u64,
            exited: self.exited.len() as u64,
            rewards_gwei: self.rewards.get(),
            slashed_gwei: self.slashed.get(),
        }
    }
}

/// Amounts moved by [`ChainState::withdraw`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Withdrawal {
    pub paid: Gwei,
    pub slashed: Gwei,
}

#[derive(Debug, Clone)]
pub struct ChainState {
    config: ChainConfig,
    epoch: Epoch,
    validators: Vec<ValidatorRecord>,
    activation_queue: VecDeque<ValidatorId>,
    exit_queue: VecDeque<ValidatorId>,
    pending_slashes: Vec<(ValidatorId, Gwei)>,
    // Slashes realized only when the validator's balance is withdrawn.
    deferred_slashes: BTreeMap<ValidatorId, Gwei>,
    active_count: u64,
}

impl ChainState {
    pub fn new(config: ChainConfig) -> Self {
        ChainState {
            config,
            epoch: Epoch(0),
            validators: Vec::new(),
            activation_queue: VecDeque::new(),
            exit_queue: VecDeque::new(),
            pending_slashes: Vec::new(),
            deferred_slashes: BTreeMap::new(),
            active_count: 0,
        }
    }

    /// Registers `count` validators that are already active at the current epoch.
    pub fn add_genesis_validators(&mut self, entity: &EntityId, count: u64) -> Vec<ValidatorId> {
        (0..count)
            .map(|_| {
                let id = self.push_validator(entity.clone(), ValidatorStatus::Active);
                let v = &mut self.validators[id.0 as usize];
                v.activation_epoch = Some(self.epoch);
                self.active_count += 1;
                id
            })
            .collect()
    }

    fn push_validator(&mut self, entity: EntityId, status: ValidatorStatus) -> ValidatorId {
        let id = ValidatorId(self.validators.len() as u64);
        self.validators.push(ValidatorRecord {
            id,
            balance: DEPOSIT_SIZE,
            status,
            activation_epoch: None,
            exit_epoch: None,
            entity,
            withdrawal_target: WithdrawalTarget::Beacon,
            withdrawn: false,
            reward_carry: 0,
        });
        id
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn set_apr_bps(&mut self, apr_bps: u64) {
        self.config.apr_bps = apr_bps;
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn validators(&self) -> &[ValidatorRecord] {
        &self.validators
    }

    pub fn validator(&self, id: ValidatorId) -> Option<&ValidatorRecord> {
        self.validators.get(id.0 as usize)
    }

    fn validator_mut(&mut self, id: ValidatorId) -> Result<&mut ValidatorRecord, ChainError> {
        self.validators
            .get_mut(id.0 as usize)
            .ok_or(ChainError::UnknownValidator(id))
    }

    pub fn active_count(&self) -> u64 {
        self.active_count
    }

    pub fn activation_queue(&self) -> impl ExactSizeIterator<Item = ValidatorId> + '_ {
        self.activation_queue.iter().copied()
    }

    pub fn exit_queue(&self) -> impl ExactSizeIterator<Item = ValidatorId> + '_ {
        self.exit_queue.iter().copied()
    }

    pub fn pending_slashes(&self) -> &[(ValidatorId, Gwei)] {
        &self.pending_slashes
    }

    pub fn deferred_slash(&self, id: ValidatorId) -> Gwei {
        self.deferred_slashes.get(&id).copied().unwrap_or_default()
    }

    /// Sum of balances still on the beacon chain.
    pub fn total_balance(&self) -> Gwei {
        self.validators.iter().map(|v| v.balance).sum()
    }

    pub fn churn_limit(&self) -> u64 {
        self.config.churn.churn_limit(self.active_count)
    }

    pub fn submit_deposit(&mut self, entity: EntityId, amount: Gwei) -> Result<ValidatorId, ChainError> {
        if amount != DEPOSIT_SIZE {
            return Err(ChainError::AmountNot32Eth(amount));
        }
        let id = self.push_validator(entity, ValidatorStatus::PendingQueued);
        self.activation_queue.push_back(id);
        Ok(id)
    }

    pub fn request_exit(&mut self, id: ValidatorId) -> Result<(), ChainError> {
        let v = self.validator_mut(id)?;
        match v.status {
            ValidatorStatus::ExitQueued => return Err(ChainError::AlreadyQueued(id)),
            ValidatorStatus::Active => {}
            _ => return Err(ChainError::NotActive(id)),
        }
        v.status = ValidatorStatus::ExitQueued;
        self.active_count -= 1;
        self.exit_queue.push_back(id);
        Ok(())
    }

    pub(crate) fn set_withdrawal_target(&mut self, id: ValidatorId, target: WithdrawalTarget) -> Result<(), ChainError> {
        self.validator_mut(id)?.withdrawal_target = target;
        Ok(())
    }

    fn outstanding_slash(&self, id: ValidatorId) -> Gwei {
        let pending: Gwei = self
            .pending_slashes
            .iter()
            .filter(|(v, _)| *v == id)
            .map(|(_, a)| *a)
            .sum();
        pending + self.deferred_slash(id)
    }

    fn clamp_and_freeze(&mut self, id: ValidatorId, amount: Gwei) -> Result<Gwei, ChainError> {
        let outstanding = self.outstanding_slash(id);
        let v = self.validator_mut(id)?;
        if v.withdrawn || v.status == ValidatorStatus::PendingQueued {
            return Err(ChainError::NotSlashable(id));
        }
        let clamped = amount.min(v.balance.saturating_sub(outstanding));
        let was = v.status;
        if matches!(was, ValidatorStatus::Active | ValidatorStatus::ExitQueued) {
            v.status = ValidatorStatus::Frozen;
        }
        match was {
            ValidatorStatus::Active => self.active_count -= 1,
            ValidatorStatus::ExitQueued => self.exit_queue.retain(|q| *q != id),
            _ => {}
        }
        Ok(clamped)
    }

    /// Records a slash realized at the next epoch step and freezes the validator.
    /// The amount is clamped so the balance never goes negative; the clamped
    /// amount is returned.
    pub fn apply_slash(&mut self, id: ValidatorId, amount: Gwei) -> Result<Gwei, ChainError> {
        let clamped = self.clamp_and_freeze(id, amount)?;
        self.pending_slashes.push((id, clamped));
        Ok(clamped)
    }

    /// Like [`apply_slash`](Self::apply_slash) but the balance is only reduced
    /// when it is withdrawn.
    pub fn apply_deferred_slash(&mut self, id: ValidatorId, amount: Gwei) -> Result<Gwei, ChainError> {
        let clamped = self.clamp_and_freeze(id, amount)?;
        *self.deferred_slashes.entry(id).or_default() += clamped;
        Ok(clamped)
    }

    /// Moves the balance of an exited or frozen validator off the chain,
    /// realizing any slash still outstanding against it.
    pub fn withdraw(&mut self, id: ValidatorId) -> Result<Withdrawal, ChainError> {
        let v = self.validator(id).ok_or(ChainError::UnknownValidator(id))?;
        if v.withdrawn || !matches!(v.status, ValidatorStatus::Exited | ValidatorStatus::Frozen) {
            return Err(ChainError::NotWithdrawable(id));
        }
        let outstanding = self.outstanding_slash(id);
        self.pending_slashes.retain(|(v, _)| *v != id);
        self.deferred_slashes.remove(&id);
        let v = self.validator_mut(id)?;
        let slashed = outstanding.min(v.balance);
        let paid = v.balance - slashed;
        v.balance = Gwei::ZERO;
        v.withdrawn = true;
        Ok(Withdrawal { paid, slashed })
    }

    pub fn process_epoch(&mut self) -> EpochReport {
        let epoch = self.epoch;
        let churn = self.churn_limit();

        let mut activated = Vec::new();
        while activated.len() < churn as usize {
            let Some(id) = self.activation_queue.pop_front() else { break };
            let v = &mut self.validators[id.0 as usize];
            v.status = ValidatorStatus::Active;
            v.activation_epoch = Some(epoch);
            activated.push(id);
        }
        self.active_count += activated.len() as u64;

        let mut exited = Vec::new();
        while exited.len() < churn as usize {
            let Some(id) = self.exit_queue.pop_front() else { break };
            let v = &mut self.validators[id.0 as usize];
            v.status = ValidatorStatus::Exited;
            v.exit_epoch = Some(epoch);
            exited.push(id);
        }

        let mut rewards = Gwei::ZERO;
        if self.config.apr_bps > 0 {
            let denom = 10_000u128 * self.config.churn.epochs_per_year() as u128;
            let apr = self.config.apr_bps as u128;
            for v in self.validators.iter_mut().filter(|v| v.status == ValidatorStatus::Active) {
                let num = v.effective_balance().get() as u128 * apr + v.reward_carry as u128;
                let reward = Gwei((num / denom) as u64);
                v.reward_carry = (num % denom) as u64;
                v.balance += reward;
                rewards += reward;
            }
        }

        let mut slashed = Gwei::ZERO;
        for (id, amount) in std::mem::take(&mut self.pending_slashes) {
            let v = &mut self.validators[id.0 as usize];
            let take = amount.min(v.balance);
            v.balance -= take;
            slashed += take;
        }

        self.epoch = epoch.next();
        EpochReport {
            epoch,
            active: self.active_count,
            activation_queue_len: self.activation_queue.len() as u64,
            exit_queue_len: self.exit_queue.len() as u64,
            activated,
            exited,
            rewards,
            slashed,
        }
    }
}
