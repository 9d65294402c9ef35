//! Restaking layer: operators, delegation pools, actively validated services
//! (AVSs), slashing with freeze semantics, fee accrual, and the
//! cost-of-corruption report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, ChainState, ValidatorStatus, WithdrawalTarget};
use crate::units::{mul_div_floor, EntityId, Epoch, Gwei, ValidatorId, DAYS_PER_YEAR, DEFAULT_EPOCHS_PER_DAY, DEPOSIT_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AvsId(pub String);

impl AvsId {
    pub fn new(name: impl Into<String>) -> Self {
        AvsId(name.into())
    }
}

impl fmt::Display for AvsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AvsId {
    fn from(s: &str) -> Self {
        AvsId(s.to_owned())
    }
}

/// A fraction in `[0, 1]` held as parts per billion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fraction(u32);

impl Fraction {
    pub const DENOM: u64 = 1_000_000_000;
    pub const ZERO: Fraction = Fraction(0);
    pub const ONE: Fraction = Fraction(1_000_000_000);

    pub fn from_ppb(ppb: u32) -> Option<Self> {
        (ppb as u64 <= Self::DENOM).then_some(Fraction(ppb))
    }

    pub fn from_f64(x: f64) -> Option<Self> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        Some(Fraction((x * Self::DENOM as f64).round() as u32))
    }

    pub fn ppb(self) -> u32 {
        self.0
    }

    /// `floor(self × amount)`.
    pub fn of(self, amount: Gwei) -> Gwei {
        Gwei(mul_div_floor(amount.get(), self.0 as u64, Self::DENOM))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvsModule {
    pub id: AvsId,
    pub fee_bps_per_year: u64,
    pub slashing_fraction: Fraction,
    pub profit_from_corruption: Gwei,
    /// Stake the service could raise on its own, without pooled security.
    pub fragmented_stake: Gwei,
    pub home_validators_only: bool,
}

/// A natively restaked validator listed under an operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NativeRestake {
    pub owner: EntityId,
    /// 32 ETH at restake time, reduced by slashes.
    pub stake: Gwei,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operator {
    pub id: EntityId,
    pub home: bool,
    pub opted_avs: BTreeSet<AvsId>,
    pub delegated: BTreeMap<EntityId, Gwei>,
    pub native: BTreeMap<ValidatorId, NativeRestake>,
    pub frozen: bool,
    pub fees_earned: Gwei,
}

impl Operator {
    fn new(id: EntityId, home: bool) -> Self {
        Operator {
            id,
            home,
            opted_avs: BTreeSet::new(),
            delegated: BTreeMap::new(),
            native: BTreeMap::new(),
            frozen: false,
            fees_earned: Gwei::ZERO,
        }
    }

    pub fn restaked_validators(&self) -> impl Iterator<Item = ValidatorId> + '_ {
        self.native.keys().copied()
    }

    pub fn total_delegated(&self) -> Gwei {
        self.delegated.values().sum()
    }

    pub fn total_native(&self) -> Gwei {
        self.native.values().map(|n| n.stake).sum()
    }

    pub fn total_restake(&self) -> Gwei {
        self.total_delegated() + self.total_native()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlashingEvent {
    pub avs_id: AvsId,
    pub operator_id: EntityId,
    pub epoch: Epoch,
    pub slashed: Gwei,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlashingRow {
    pub avs_id: String,
    pub operator_id: String,
    pub epoch: u64,
    pub slashed_gwei: u64,
}

impl SlashingEvent {
    pub fn to_row(&self) -> SlashingRow {
        SlashingRow {
            avs_id: self.avs_id.0.clone(),
            operator_id: self.operator_id.0.clone(),
            epoch: self.epoch.0,
            slashed_gwei: self.slashed.get(),
        }
    }
}

/// Cost of corruption for one AVS with and without pooled security.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AvsSecurity {
    pub avs_id: String,
    pub coc_fragmented_gwei: u64,
    pub coc_pooled_gwei: u64,
    pub pfc_gwei: u64,
    pub margin_pooled_gwei: i128,
    pub secure: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SecurityReport {
    pub avs: Vec<AvsSecurity>,
}

impl SecurityReport {
    pub fn get(&self, id: &str) -> Option<&AvsSecurity> {
        self.avs.iter().find(|a| a.avs_id == id)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RestakeError {
    #[error("id `{0}` is already registered")]
    DuplicateId(String),
    #[error("unknown operator {0}")]
    UnknownOperator(EntityId),
    #[error("unknown AVS {0}")]
    UnknownAvs(AvsId),
    #[error("operator {0} is frozen")]
    OperatorFrozen(EntityId),
    #[error("amount must be greater than zero")]
    ZeroAmount,
    #[error("validator {0} is not active")]
    NotActive(ValidatorId),
    #[error("validator {0} is already restaked")]
    AlreadyRestaked(ValidatorId),
    #[error("AVS {avs} only admits home operators; {operator} is not one")]
    DecentralizationConstraint { avs: AvsId, operator: EntityId },
    #[error("operator {operator} is not opted into {avs}")]
    NotOptedIn { avs: AvsId, operator: EntityId },
    #[error("invalid AVS parameter: {0}")]
    InvalidAvs(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone)]
pub struct RestakeState {
    operators: BTreeMap<EntityId, Operator>,
    avs: BTreeMap<AvsId, AvsModule>,
    slashing_events: Vec<SlashingEvent>,
    fee_credits: BTreeMap<EntityId, Gwei>,
    fee_dust: Gwei,
    epochs_per_day: u64,
}

impl Default for RestakeState {
    fn default() -> Self {
        RestakeState::new(DEFAULT_EPOCHS_PER_DAY)
    }
}

impl RestakeState {
    pub fn new(epochs_per_day: u64) -> Self {
        RestakeState {
            operators: BTreeMap::new(),
            avs: BTreeMap::new(),
            slashing_events: Vec::new(),
            fee_credits: BTreeMap::new(),
            fee_dust: Gwei::ZERO,
            epochs_per_day,
        }
    }

    pub fn operators(&self) -> impl Iterator<Item = &Operator> {
        self.operators.values()
    }

    pub fn operator(&self, id: &EntityId) -> Option<&Operator> {
        self.operators.get(id)
    }

    pub fn avs_modules(&self) -> impl Iterator<Item = &AvsModule> {
        self.avs.values()
    }

    pub fn slashing_events(&self) -> &[SlashingEvent] {
        &self.slashing_events
    }

    pub fn fee_credits(&self) -> &BTreeMap<EntityId, Gwei> {
        &self.fee_credits
    }

    /// Fee remainders lost to floor division when splitting among participants.
    pub fn fee_dust(&self) -> Gwei {
        self.fee_dust
    }

    /// Operator running the given natively restaked validator, if any.
    pub fn operator_of_validator(&self, id: ValidatorId) -> Option<&EntityId> {
        self.operators.values().find(|o| o.native.contains_key(&id)).map(|o| &o.id)
    }

    fn live_operator(&mut self, id: &EntityId) -> Result<&mut Operator, RestakeError> {
        let op = self
            .operators
            .get_mut(id)
            .ok_or_else(|| RestakeError::UnknownOperator(id.clone()))?;
        if op.frozen {
            return Err(RestakeError::OperatorFrozen(id.clone()));
        }
        Ok(op)
    }

    pub fn register_operator(&mut self, id: EntityId, home: bool) -> Result<(), RestakeError> {
        if self.operators.contains_key(&id) {
            return Err(RestakeError::DuplicateId(id.0));
        }
        self.operators.insert(id.clone(), Operator::new(id, home));
        Ok(())
    }

    pub fn register_avs(&mut self, module: AvsModule) -> Result<(), RestakeError> {
        if self.avs.contains_key(&module.id) {
            return Err(RestakeError::DuplicateId(module.id.0));
        }
        self.avs.insert(module.id.clone(), module);
        Ok(())
    }

    /// Points an active validator's withdrawal credentials at the restaking
    /// layer and lists it under `operator_id`.
    pub fn restake_native(
        &mut self,
        chain: &mut ChainState,
        validator_id: ValidatorId,
        operator_id: &EntityId,
    ) -> Result<(), RestakeError> {
        self.live_operator(operator_id)?;
        let v = chain
            .validator(validator_id)
            .ok_or(ChainError::UnknownValidator(validator_id))?;
        if v.withdrawal_target == WithdrawalTarget::RestakeLayer {
            return Err(RestakeError::AlreadyRestaked(validator_id));
        }
        if v.status != ValidatorStatus::Active {
            return Err(RestakeError::NotActive(validator_id));
        }
        let owner = v.entity.clone();
        chain.set_withdrawal_target(validator_id, WithdrawalTarget::RestakeLayer)?;
        self.live_operator(operator_id)?
            .native
            .insert(validator_id, NativeRestake { owner, stake: DEPOSIT_SIZE });
        Ok(())
    }

    pub fn delegate(&mut self, staker: &EntityId, operator_id: &EntityId, amount: Gwei) -> Result<(), RestakeError> {
        let op = self.live_operator(operator_id)?;
        if amount.is_zero() {
            return Err(RestakeError::ZeroAmount);
        }
        *op.delegated.entry(staker.clone()).or_default() += amount;
        Ok(())
    }

    /// Idempotent: opting into an AVS twice is a no-op.
    pub fn opt_in(&mut self, operator_id: &EntityId, avs_id: &AvsId) -> Result<(), RestakeError> {
        let home_only = self
            .avs
            .get(avs_id)
            .ok_or_else(|| RestakeError::UnknownAvs(avs_id.clone()))?
            .home_validators_only;
        let op = self.live_operator(operator_id)?;
        if home_only && !op.home {
            return Err(RestakeError::DecentralizationConstraint {
                avs: avs_id.clone(),
                operator: operator_id.clone(),
            });
        }
        op.opted_avs.insert(avs_id.clone());
        Ok(())
    }

    /// Accrues `epochs` worth of AVS fees to every live operator and splits
    /// each operator's fee among its delegators and native restakers by stake.
    /// Returns the fee earned per operator.
    pub fn accrue_fees(&mut self, epochs: u64) -> BTreeMap<EntityId, Gwei> {
        let mut earned = BTreeMap::new();
        if epochs == 0 {
            return earned;
        }
        let denom = 10_000u128 * self.epochs_per_day as u128 * DAYS_PER_YEAR as u128;
        for op in self.operators.values_mut().filter(|o| !o.frozen) {
            let stake = op.total_restake();
            if stake.is_zero() || op.opted_avs.is_empty() {
                continue;
            }
            let fee: u64 = op
                .opted_avs
                .iter()
                .map(|a| {
                    let bps = self.avs[a].fee_bps_per_year as u128;
                    (stake.get() as u128 * bps * epochs as u128 / denom) as u64
                })
                .sum();
            if fee == 0 {
                continue;
            }
            let fee = Gwei(fee);
            let parts = op
                .delegated
                .iter()
                .map(|(who, amt)| (who, *amt))
                .chain(op.native.values().map(|n| (&n.owner, n.stake)));
            let mut paid = Gwei::ZERO;
            for (who, part) in parts {
                let share = Gwei(mul_div_floor(fee.get(), part.get(), stake.get()));
                if !share.is_zero() {
                    *self.fee_credits.entry(who.clone()).or_default() += share;
                    paid += share;
                }
            }
            self.fee_dust += fee - paid;
            op.fees_earned += fee;
            earned.insert(op.id.clone(), fee);
        }
        earned
    }

    /// Freezes the operator and slashes `slashing_fraction` of its restaked
    /// stake. Delegated stake is cut immediately; native restakers get a slash
    /// recorded on the chain that is realized when their balance is withdrawn.
    pub fn prove_misbehavior(
        &mut self,
        chain: &mut ChainState,
        avs_id: &AvsId,
        operator_id: &EntityId,
        epoch: Epoch,
    ) -> Result<SlashingEvent, RestakeError> {
        let fraction = self
            .avs
            .get(avs_id)
            .ok_or_else(|| RestakeError::UnknownAvs(avs_id.clone()))?
            .slashing_fraction;
        let op = self
            .operators
            .get_mut(operator_id)
            .ok_or_else(|| RestakeError::UnknownOperator(operator_id.clone()))?;
        if !op.opted_avs.contains(avs_id) {
            return Err(RestakeError::NotOptedIn { avs: avs_id.clone(), operator: operator_id.clone() });
        }
        op.frozen = true;

        let total = op.total_restake();
        let target = fraction.of(total);
        let mut cuts = split_exact(
            target,
            total,
            op.delegated.values().copied().chain(op.native.values().map(|n| n.stake)),
        )
        .into_iter();

        let mut slashed = Gwei::ZERO;
        for amt in op.delegated.values_mut() {
            let cut = cuts.next().expect("one cut per part");
            *amt -= cut;
            slashed += cut;
        }
        for (vid, native) in op.native.iter_mut() {
            let cut = cuts.next().expect("one cut per part");
            if cut.is_zero() {
                continue;
            }
            native.stake -= cut;
            slashed += chain.apply_deferred_slash(*vid, cut)?;
        }

        let event = SlashingEvent {
            avs_id: avs_id.clone(),
            operator_id: operator_id.clone(),
            epoch,
            slashed,
        };
        self.slashing_events.push(event.clone());
        Ok(event)
    }

    /// Drops natively restaked validators whose balance has left the chain.
    pub fn sync_withdrawals(&mut self, chain: &ChainState) {
        for op in self.operators.values_mut() {
            op.native
                .retain(|id, _| chain.validator(*id).is_some_and(|v| !v.withdrawn));
        }
    }

    /// Cost of corruption per AVS. Pooled CoC sums the restaked stake of every
    /// operator opted into the AVS.
    pub fn compute_security(&self) -> SecurityReport {
        let avs = self
            .avs
            .values()
            .map(|m| {
                let pooled: Gwei = self
                    .operators
                    .values()
                    .filter(|o| o.opted_avs.contains(&m.id))
                    .map(Operator::total_restake)
                    .sum();
                let margin = pooled.get() as i128 - m.profit_from_corruption.get() as i128;
                AvsSecurity {
                    avs_id: m.id.0.clone(),
                    coc_fragmented_gwei: m.fragmented_stake.get(),
                    coc_pooled_gwei: pooled.get(),
                    pfc_gwei: m.profit_from_corruption.get(),
                    margin_pooled_gwei: margin,
                    secure: margin > 0,
                }
            })
            .collect();
        SecurityReport { avs }
    }
}

/// Splits `target` (≤ `total`) across parts summing to `total`, proportionally
/// and exactly: floor shares first, then the leftover gwei one at a time to the
/// earliest parts with room.
fn split_exact(target: Gwei, total: Gwei, parts: impl Iterator<Item = Gwei>) -> Vec<Gwei> {
    let parts: Vec<Gwei> = parts.collect();
    if total.is_zero() {
        return vec![Gwei::ZERO; parts.len()];
    }
    let mut cuts: Vec<Gwei> = parts
        .iter()
        .map(|p| Gwei(mul_div_floor(p.get(), target.get(), total.get())))
        .collect();
    let mut left = target - cuts.iter().sum();
    for (cut, part) in cuts.iter_mut().zip(&parts) {
        if left.is_zero() {
            break;
        }
        let room = *part - *cut;
        let extra = room.min(left);
        *cut += extra;
        left -= extra;
    }
    cuts
}
