//! Scenario runner: drives the beacon chain, pool and restaking layer through
//! a scripted, seeded timeline and renders deterministic CSV/text outputs.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use config::{
    Action, AnalyticsSection, AvsSection, ChainSection, ChurnSection, ConfigError, GenesisEntry, OneOrMany,
    OperatorSection, PoolAttributionMode, PoolSection, RestakeAttributionMode, ScenarioConfig, ScheduledEvent,
    TrafficSection,
};

use crate::analytics::{stake_distribution, CentralizationReport};
use crate::chain::{ChainConfig, ChainError, ChainState, ValidatorStatus, WithdrawalTarget};
use crate::pool::{PoolConfig, PoolError, PoolEvent, PoolState};
use crate::queue::{estimate_wait, ChurnTable, Direction, DEFAULT_MAX_TIERS};
use crate::restake::{AvsId, AvsModule, Fraction, RestakeError, RestakeState};
use crate::units::{mul_div_floor, EntityId, Gwei, ValidatorId, DEPOSIT_SIZE};

#[derive(Debug, Error)]
pub enum ActionError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Restake(#[from] RestakeError),
    #[error("{entity} has {found} eligible validators, {wanted} requested")]
    NotEnoughValidators { entity: String, wanted: u64, found: u64 },
    #[error("invalid AVS `{0}`")]
    InvalidAvs(String),
}

/// A failure while running a scenario, located by epoch and action.
#[derive(Debug, Error)]
#[error("epoch {epoch}: {context}: {source}")]
pub struct RunError {
    pub epoch: u64,
    pub context: String,
    #[source]
    pub source: ActionError,
}

/// One row of `epochs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetricsRow {
    pub epoch: u64,
    pub active: u64,
    pub activation_queue_len: u64,
    pub exit_queue_len: u64,
    pub activated: u64,
    pub exited: u64,
    pub rewards_gwei: u64,
    pub slashed_gwei: u64,
    pub pool_total_pooled_gwei: u64,
    pub pool_total_shares: u64,
    pub pool_buffered_gwei: u64,
    pub nakamoto: usize,
    pub hhi: String,
    pub gini: String,
}

/// One row of `actions.csv`: every scripted or traffic-generated action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionRow {
    pub epoch: u64,
    pub source: &'static str,
    pub action: &'static str,
    pub entity: String,
    pub gwei: u64,
    pub count: u64,
}

/// Rendered outputs of a completed run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub epochs_csv: String,
    pub events_csv: String,
    pub actions_csv: String,
    pub security_csv: String,
    pub slashing_csv: String,
    pub summary: String,
}

impl RunOutput {
    pub const FILES: [&'static str; 6] =
        ["epochs.csv", "events.csv", "actions.csv", "security.csv", "slashing.csv", "summary.txt"];

    fn contents(&self) -> [&str; 6] {
        [
            &self.epochs_csv,
            &self.events_csv,
            &self.actions_csv,
            &self.security_csv,
            &self.slashing_csv,
            &self.summary,
        ]
    }

    /// Writes every output file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        Self::FILES
            .iter()
            .zip(self.contents())
            .map(|(name, body)| {
                let path = dir.join(name);
                std::fs::write(&path, body)?;
                Ok(path)
            })
            .collect()
    }
}

fn render_csv<T: Serialize>(header: &[&str], rows: &[T]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.serialize(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

const EPOCH_HEADER: [&str; 14] = [
    "epoch",
    "active",
    "activation_queue_len",
    "exit_queue_len",
    "activated",
    "exited",
    "rewards_gwei",
    "slashed_gwei",
    "pool_total_pooled_gwei",
    "pool_total_shares",
    "pool_buffered_gwei",
    "nakamoto",
    "hhi",
    "gini",
];
const EVENT_HEADER: [&str; 5] = ["epoch", "event_kind", "entity", "gwei", "shares"];
const ACTION_HEADER: [&str; 6] = ["epoch", "source", "action", "entity", "gwei", "count"];
const SECURITY_HEADER: [&str; 6] =
    ["avs_id", "coc_fragmented_gwei", "coc_pooled_gwei", "pfc_gwei", "margin_pooled_gwei", "secure"];
const SLASHING_HEADER: [&str; 4] = ["avs_id", "operator_id", "epoch", "slashed_gwei"];

/// A scenario in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    chain: ChainState,
    pool: Option<PoolState>,
    restake: RestakeState,
    rng: ChaCha8Rng,
    next_event: usize,
    rows: Vec<EpochMetricsRow>,
    actions: Vec<ActionRow>,
    paid_out: BTreeMap<EntityId, Gwei>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, RunError> {
        let setup = |source: ActionError| RunError { epoch: 0, context: "setup".into(), source };
        let mut chain = ChainState::new(ChainConfig { churn: config.churn, apr_bps: config.chain.apr_bps });
        for g in &config.chain.genesis {
            chain.add_genesis_validators(&EntityId::new(g.entity.as_str()), g.validators);
        }

        let pool = match &config.pool {
            None => None,
            Some(p) => {
                let mut pool = PoolState::new(PoolConfig {
                    id: EntityId::new(p.id.as_str()),
                    treasury: EntityId::new(p.treasury.as_str()),
                    operator_fee_bps: p.operator_fee_bps,
                    treasury_fee_bps: p.treasury_fee_bps,
                })
                .map_err(|e| setup(e.into()))?;
                for op in &p.node_operators {
                    pool.register_operator(EntityId::new(op.as_str())).map_err(|e| setup(e.into()))?;
                }
                Some(pool)
            }
        };

        let mut restake = RestakeState::new(config.churn.epochs_per_day);
        for op in &config.operators {
            restake
                .register_operator(EntityId::new(op.id.as_str()), op.home)
                .map_err(|e| setup(e.into()))?;
        }
        for a in &config.avs {
            let invalid = || setup(ActionError::InvalidAvs(a.id.clone()));
            restake
                .register_avs(AvsModule {
                    id: AvsId::new(a.id.as_str()),
                    fee_bps_per_year: a.fee_bps_per_year,
                    slashing_fraction: Fraction::from_f64(a.slashing_fraction).ok_or_else(invalid)?,
                    profit_from_corruption: Gwei::from_eth_f64(a.pfc_eth).ok_or_else(invalid)?,
                    fragmented_stake: Gwei::from_eth_f64(a.fragmented_stake_eth).ok_or_else(invalid)?,
                    home_validators_only: a.home_only,
                })
                .map_err(|e| setup(e.into()))?;
        }

        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Simulation {
            config,
            chain,
            pool,
            restake,
            rng,
            next_event: 0,
            rows: Vec::new(),
            actions: Vec::new(),
            paid_out: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn chain(&self) -> &ChainState {
        &self.chain
    }

    pub fn pool(&self) -> Option<&PoolState> {
        self.pool.as_ref()
    }

    pub fn restake(&self) -> &RestakeState {
        &self.restake
    }

    pub fn rows(&self) -> &[EpochMetricsRow] {
        &self.rows
    }

    /// Ether returned to each entity by validator withdrawals and pool claims.
    pub fn paid_out(&self) -> &BTreeMap<EntityId, Gwei> {
        &self.paid_out
    }

    pub fn is_finished(&self) -> bool {
        self.chain.epoch().0 >= self.config.epochs
    }

    /// Runs every remaining epoch and renders the outputs.
    pub fn run(mut self) -> Result<RunOutput, RunError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(self.render())
    }

    /// Advances one epoch: scripted events, seeded traffic, pool housekeeping,
    /// the beacon-chain transition, fee accrual, withdrawals, oracle reports
    /// and metrics, in that order.
    pub fn step(&mut self) -> Result<(), RunError> {
        let epoch = self.chain.epoch().0;
        while let Some(ev) = self.config.events.get(self.next_event).filter(|e| e.epoch == epoch) {
            let ev = ev.clone();
            self.next_event += 1;
            self.apply(&ev.action, "script").map_err(|source| RunError {
                epoch,
                context: format!("`{}` (line {})", ev.action.name(), ev.line),
                source,
            })?;
        }
        let at = |context: &str| {
            let context = context.to_owned();
            move |source: ActionError| RunError { epoch, context, source }
        };
        self.traffic().map_err(at("traffic"))?;
        self.pool_housekeeping().map_err(at("pool"))?;

        let report = self.chain.process_epoch();
        self.restake.accrue_fees(1);

        let pool_id = self.pool.as_ref().map(|p| p.id().clone());
        let mut withdrew = false;
        for id in &report.exited {
            let v = self.chain.validator(*id).expect("exited validator exists");
            if Some(&v.entity) == pool_id.as_ref() {
                continue;
            }
            let owner = v.entity.clone();
            let w = self.chain.withdraw(*id).map_err(|e| at("withdraw")(e.into()))?;
            *self.paid_out.entry(owner).or_default() += w.paid;
            withdrew = true;
        }
        if withdrew {
            self.restake.sync_withdrawals(&self.chain);
        }

        if let (Some(pool), Some(p)) = (self.pool.as_mut(), self.config.pool.as_ref()) {
            if p.report_interval > 0 && (epoch + 1).is_multiple_of(p.report_interval) {
                pool.oracle_update(&self.chain).map_err(|e| at("oracle report")(e.into()))?;
            }
        }

        let row = self.metrics(report.to_row());
        self.rows.push(row);
        Ok(())
    }

    fn metrics(&self, base: crate::chain::EpochRow) -> EpochMetricsRow {
        let dist = stake_distribution(
            &self.chain,
            self.pool.as_ref(),
            Some(&self.restake),
            self.config.analytics.attribution(),
        );
        let c = CentralizationReport::compute(&dist, self.config.analytics.threshold)
            .unwrap_or(CentralizationReport { nakamoto_coefficient: 0, hhi: 0.0, gini: 0.0 });
        let (pooled, shares, buffered) = self
            .pool
            .as_ref()
            .map(|p| (p.total_pooled().get(), p.total_shares(), p.buffered().get()))
            .unwrap_or_default();
        EpochMetricsRow {
            epoch: base.epoch,
            active: base.active,
            activation_queue_len: base.activation_queue_len,
            exit_queue_len: base.exit_queue_len,
            activated: base.activated,
            exited: base.exited,
            rewards_gwei: base.rewards_gwei,
            slashed_gwei: base.slashed_gwei,
            pool_total_pooled_gwei: pooled,
            pool_total_shares: shares,
            pool_buffered_gwei: buffered,
            nakamoto: c.nakamoto_coefficient,
            hhi: format!("{:.4}", c.hhi),
            gini: format!("{:.6}", c.gini),
        }
    }

    fn pool_housekeeping(&mut self) -> Result<(), ActionError> {
        if let Some(pool) = self.pool.as_mut() {
            pool.tick(&mut self.chain)?;
        }
        self.claim_all()
    }

    fn claim_all(&mut self) -> Result<(), ActionError> {
        let Some(pool) = self.pool.as_mut() else { return Ok(()) };
        let ready: Vec<(u64, EntityId)> = pool.claimable_tickets().map(|t| (t.id, t.owner.clone())).collect();
        for (id, owner) in ready {
            let paid = pool.claim(id)?;
            *self.paid_out.entry(owner).or_default() += paid;
        }
        Ok(())
    }

    fn log(&mut self, source: &'static str, action: &'static str, entity: &str, gwei: Gwei, count: u64) {
        self.actions.push(ActionRow {
            epoch: self.chain.epoch().0,
            source,
            action,
            entity: entity.to_owned(),
            gwei: gwei.get(),
            count,
        });
    }

    /// The entity's lowest-id validators that satisfy `eligible`.
    fn pick_validators(
        &self,
        entity: &str,
        count: u64,
        eligible: impl Fn(&crate::chain::ValidatorRecord) -> bool,
    ) -> Result<Vec<ValidatorId>, ActionError> {
        let picked: Vec<ValidatorId> = self
            .chain
            .validators()
            .iter()
            .filter(|v| v.entity.as_str() == entity && eligible(v))
            .map(|v| v.id)
            .take(count as usize)
            .collect();
        if (picked.len() as u64) < count {
            return Err(ActionError::NotEnoughValidators {
                entity: entity.to_owned(),
                wanted: count,
                found: picked.len() as u64,
            });
        }
        Ok(picked)
    }

    fn pool_mut(&mut self) -> &mut PoolState {
        self.pool.as_mut().expect("pool actions are validated against the config")
    }

    fn apply(&mut self, action: &Action, source: &'static str) -> Result<(), ActionError> {
        let eth = |x: f64| config::positive_eth(x).expect("amounts are validated against the config");
        match action {
            Action::Deposit { entity, count } => {
                for _ in 0..*count {
                    self.chain.submit_deposit(EntityId::new(entity.as_str()), DEPOSIT_SIZE)?;
                }
                self.log(source, action.name(), entity, Gwei(DEPOSIT_SIZE.get() * count), *count);
            }
            Action::PoolSubmit { user, eth: amount } => {
                let amount = eth(*amount);
                let shares = self.pool_mut().submit(&EntityId::new(user.as_str()), amount)?;
                self.log(source, action.name(), user, amount, shares);
            }
            Action::PoolWithdraw { user, eth: amount, all } => {
                let who = EntityId::new(user.as_str());
                let pool = self.pool.as_mut().expect("pool actions are validated against the config");
                let shares = match (amount, all) {
                    (_, true) => pool.shares_of(&who),
                    (Some(x), false) if pool.total_pooled().is_zero() => {
                        return Err(PoolError::InsufficientShares {
                            entity: who,
                            held: 0,
                            requested: eth(*x).get(),
                        }
                        .into())
                    }
                    (Some(x), false) => {
                        mul_div_floor(eth(*x).get(), pool.total_shares(), pool.total_pooled().get())
                    }
                    (None, false) => unreachable!("validated: eth or all"),
                };
                let ticket = pool.request_withdrawal(&mut self.chain, &who, shares)?;
                let claim = pool.ticket(ticket).expect("ticket just issued").claim;
                self.log(source, action.name(), user, claim, shares);
                self.claim_all()?;
            }
            Action::Delegate { staker, operator, eth: amount } => {
                let amount = eth(*amount);
                self.restake.delegate(
                    &EntityId::new(staker.as_str()),
                    &EntityId::new(operator.as_str()),
                    amount,
                )?;
                self.log(source, action.name(), staker, amount, 1);
            }
            Action::Restake { entity, operator, count } => {
                let ids = self.pick_validators(entity, *count, |v| {
                    v.status == ValidatorStatus::Active && v.withdrawal_target == WithdrawalTarget::Beacon
                })?;
                let op = EntityId::new(operator.as_str());
                for id in ids {
                    self.restake.restake_native(&mut self.chain, id, &op)?;
                }
                self.log(source, action.name(), entity, Gwei(DEPOSIT_SIZE.get() * count), *count);
            }
            Action::OptIn { operator, avs } => {
                let op = EntityId::new(operator.as_str());
                let list = avs.to_vec();
                for a in &list {
                    self.restake.opt_in(&op, &AvsId::new(a.as_str()))?;
                }
                self.log(source, action.name(), operator, Gwei::ZERO, list.len() as u64);
            }
            Action::ProveMisbehavior { operator, avs } => {
                let epoch = self.chain.epoch();
                let ev = self.restake.prove_misbehavior(
                    &mut self.chain,
                    &AvsId::new(avs.as_str()),
                    &EntityId::new(operator.as_str()),
                    epoch,
                )?;
                self.log(source, action.name(), operator, ev.slashed, 1);
            }
            Action::RequestExit { entity, count } => {
                let ids = self.pick_validators(entity, *count, |v| v.status == ValidatorStatus::Active)?;
                for id in ids {
                    self.chain.request_exit(id)?;
                }
                self.log(source, action.name(), entity, Gwei(DEPOSIT_SIZE.get() * count), *count);
            }
            Action::Withdraw { entity } => {
                let ids: Vec<ValidatorId> = self
                    .chain
                    .validators()
                    .iter()
                    .filter(|v| {
                        v.entity.as_str() == entity
                            && !v.withdrawn
                            && matches!(v.status, ValidatorStatus::Exited | ValidatorStatus::Frozen)
                    })
                    .map(|v| v.id)
                    .collect();
                let mut total = Gwei::ZERO;
                for id in &ids {
                    total += self.chain.withdraw(*id)?.paid;
                }
                *self.paid_out.entry(EntityId::new(entity.as_str())).or_default() += total;
                self.restake.sync_withdrawals(&self.chain);
                self.log(source, action.name(), entity, total, ids.len() as u64);
            }
            Action::OracleReport => {
                let chain_epoch = self.chain.epoch();
                let pool = self.pool.as_mut().expect("pool actions are validated against the config");
                // A report for an epoch that was already reported is a no-op.
                if pool.last_report().epoch < chain_epoch {
                    pool.oracle_update(&self.chain)?;
                }
                self.log(source, action.name(), "", Gwei::ZERO, 1);
            }
        }
        Ok(())
    }

    fn traffic(&mut self) -> Result<(), ActionError> {
        let t = self.config.traffic.clone();
        if t.deposit_rate == 0.0 && t.exit_rate == 0.0 && t.pool_submit_rate == 0.0 {
            return Ok(());
        }
        let entity = |rng: &mut ChaCha8Rng| format!("retail-{:03}", rng.gen_range(0..t.entities));
        if self.rng.gen_bool(t.deposit_rate) {
            let e = entity(&mut self.rng);
            self.apply(&Action::Deposit { entity: e, count: 1 }, "traffic")?;
        }
        if self.rng.gen_bool(t.exit_rate) {
            let e = entity(&mut self.rng);
            if self.pick_validators(&e, 1, |v| v.status == ValidatorStatus::Active).is_ok() {
                self.apply(&Action::RequestExit { entity: e, count: 1 }, "traffic")?;
            }
        }
        if self.rng.gen_bool(t.pool_submit_rate) {
            let e = entity(&mut self.rng);
            let eth = self.rng.gen_range(1..=t.max_pool_submit_eth) as f64;
            self.apply(&Action::PoolSubmit { user: e, eth }, "traffic")?;
        }
        Ok(())
    }

    /// Renders every output for the state reached so far.
    pub fn render(&self) -> RunOutput {
        let events: &[PoolEvent] = self.pool.as_ref().map(|p| p.events()).unwrap_or(&[]);
        let security = self.restake.compute_security();
        let slashing: Vec<_> = self.restake.slashing_events().iter().map(|e| e.to_row()).collect();
        RunOutput {
            epochs_csv: render_csv(&EPOCH_HEADER, &self.rows),
            events_csv: render_csv(&EVENT_HEADER, events),
            actions_csv: render_csv(&ACTION_HEADER, &self.actions),
            security_csv: render_csv(&SECURITY_HEADER, &security.avs),
            slashing_csv: render_csv(&SLASHING_HEADER, &slashing),
            summary: self.summary(),
        }
    }

    fn summary(&self) -> String {
        let mut s = String::new();
        let chain = &self.chain;
        let _ = writeln!(s, "seed: {}", self.config.seed);
        let _ = writeln!(s, "epochs_run: {}", chain.epoch().0);
        let _ = writeln!(s, "active_validators: {}", chain.active_count());
        let _ = writeln!(s, "activation_queue: {}", chain.activation_queue().len());
        let _ = writeln!(s, "exit_queue: {}", chain.exit_queue().len());
        let _ = writeln!(s, "beacon_balance: {}", chain.total_balance());

        let table = ChurnTable::build(chain.config().churn, DEFAULT_MAX_TIERS);
        for (label, dir, queue) in [
            ("entry_wait_estimate", Direction::Entry, chain.activation_queue().len() as u64),
            ("exit_wait_estimate", Direction::Exit, chain.exit_queue().len() as u64),
        ] {
            let text = match table.as_ref() {
                Err(e) => format!("n/a ({e})"),
                Ok(t) => match estimate_wait(chain.active_count(), queue, t, dir) {
                    Ok(est) => format!("{} ({:.2} days)", est.wait_text, est.churn_time_days),
                    Err(e) => format!("n/a ({e})"),
                },
            };
            let _ = writeln!(s, "{label}: {text}");
        }

        if let Some(pool) = &self.pool {
            let _ = writeln!(s, "pool_total_pooled: {}", pool.total_pooled());
            let _ = writeln!(s, "pool_total_shares: {}", pool.total_shares());
            let _ = writeln!(s, "pool_buffered: {}", pool.buffered());
            let _ = writeln!(s, "pool_events: {}", pool.events().len());
        }
        if let Some(last) = self.rows.last() {
            let _ = writeln!(s, "nakamoto: {}", last.nakamoto);
            let _ = writeln!(s, "hhi: {}", last.hhi);
            let _ = writeln!(s, "gini: {}", last.gini);
        }
        let credited: Gwei = self.restake.fee_credits().values().sum();
        let _ = writeln!(s, "restake_fees_credited: {credited}");
        let _ = writeln!(s, "restake_fee_dust: {}", self.restake.fee_dust());
        let _ = writeln!(s, "slashing_events: {}", self.restake.slashing_events().len());
        for a in &self.restake.compute_security().avs {
            let _ = writeln!(
                s,
                "avs {}: coc_fragmented={} coc_pooled={} pfc={} secure={}",
                a.avs_id,
                Gwei(a.coc_fragmented_gwei),
                Gwei(a.coc_pooled_gwei),
                Gwei(a.pfc_gwei),
                a.secure
            );
        }
        s
    }
}

/// Loads, validates and runs a scenario file.
pub fn run_scenario(config: ScenarioConfig) -> Result<RunOutput, RunError> {
    Simulation::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(src: &str) -> Simulation {
        Simulation::new(ScenarioConfig::from_toml_str(src).unwrap()).unwrap()
    }

    #[test]
    fn empty_chain_runs_with_zero_metrics() {
        let out = sim("seed = 1\nepochs = 3\n").run().unwrap();
        let lines: Vec<_> = out.epochs_csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], EPOCH_HEADER.join(","));
        assert_eq!(lines[1], "0,0,0,0,0,0,0,0,0,0,0,0,0.0000,0.000000");
        assert_eq!(out.events_csv, "epoch,event_kind,entity,gwei,shares\n");
    }

    #[test]
    fn scripted_deposit_activates() {
        let src = "seed = 1\nepochs = 2\n[chain]\ngenesis = [{ entity = \"a\", validators = 3 }]\n\
                   [[events]]\nepoch = 0\naction = \"deposit\"\nentity = \"b\"\ncount = 2\n";
        let mut s = sim(src);
        s.step().unwrap();
        assert_eq!(s.chain().active_count(), 5);
        assert_eq!(s.rows()[0].activated, 2);
        assert_eq!(s.rows()[0].nakamoto, 1);
        assert_eq!(s.rows()[0].hhi, "5200.0000");
    }

    #[test]
    fn exited_solo_validators_are_paid_out() {
        let src = "seed = 1\nepochs = 3\n[chain]\ngenesis = [{ entity = \"a\", validators = 2 }]\n\
                   [[events]]\nepoch = 0\naction = \"request_exit\"\nentity = \"a\"\n";
        let s = {
            let mut s = sim(src);
            while !s.is_finished() {
                s.step().unwrap();
            }
            s
        };
        assert_eq!(s.paid_out()[&EntityId::new("a")], DEPOSIT_SIZE);
        assert_eq!(s.chain().active_count(), 1);
    }

    #[test]
    fn runtime_errors_name_epoch_and_line() {
        let src = "seed = 1\nepochs = 3\n[[events]]\nepoch = 1\naction = \"request_exit\"\nentity = \"nobody\"\n";
        let err = sim(src).run().unwrap_err();
        assert_eq!(err.epoch, 1);
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(matches!(err.source, ActionError::NotEnoughValidators { .. }));
    }

    #[test]
    fn pool_round_trip_pays_claim() {
        let src = r#"
seed = 3
epochs = 12
[chain]
genesis = [{ entity = "solo", validators = 10 }]
[pool]
node_operators = ["no-1"]
report_interval = 4
[[events]]
epoch = 0
action = "pool_submit"
user = "alice"
eth = 32
[[events]]
epoch = 2
action = "pool_withdraw"
user = "alice"
all = true
"#;
        let mut s = sim(src);
        while !s.is_finished() {
            s.step().unwrap();
        }
        let pool = s.pool().unwrap();
        assert_eq!(pool.total_shares(), 0);
        assert_eq!(s.paid_out()[&EntityId::new("alice")], DEPOSIT_SIZE);
    }

    #[test]
    fn traffic_is_seeded() {
        let src = |seed: u64| {
            format!(
                "seed = {seed}\nepochs = 200\n[chain]\ngenesis = [{{ entity = \"a\", validators = 50 }}]\n\
                 [traffic]\nentities = 5\ndeposit_rate = 0.3\nexit_rate = 0.2\n"
            )
        };
        let a = sim(&src(9)).run().unwrap();
        let b = sim(&src(9)).run().unwrap();
        let c = sim(&src(10)).run().unwrap();
        assert_eq!(a, b);
        assert_ne!(a.actions_csv, c.actions_csv);
    }

    #[test]
    fn write_to_creates_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = sim("seed = 1\nepochs = 1\n").run().unwrap();
        let paths = out.write_to(&dir.path().join("nested")).unwrap();
        assert_eq!(paths.len(), RunOutput::FILES.len());
        for p in paths {
            assert!(p.exists());
        }
    }
}
