//! Scenario files: TOML with typed sections and a scripted event timeline.
//!
//! ```toml
//! seed = 7
//! epochs = 2250
//!
//! [churn]                 # optional; these are the defaults
//! min_churn = 4
//! churn_quotient = 65536
//! epochs_per_day = 225
//!
//! [chain]
//! apr_bps = 380
//! genesis = [{ entity = "exchange", validators = 400 }]
//!
//! [pool]                  # optional liquid-staking pool
//! id = "pool"
//! treasury = "treasury"
//! operator_fee_bps = 500
//! treasury_fee_bps = 500
//! node_operators = ["no-1", "no-2"]
//! report_interval = 225   # epochs between automatic oracle reports; 0 = scripted only
//!
//! [[operators]]           # restaking operators
//! id = "op-1"
//! home = true
//!
//! [[avs]]
//! id = "bridge"
//! fee_bps_per_year = 200
//! slashing_fraction = 0.5
//! pfc_eth = 1000
//! fragmented_stake_eth = 64
//! home_only = false
//!
//! [traffic]               # seeded background activity; all rates default to 0
//! entities = 20
//! deposit_rate = 0.2
//! exit_rate = 0.05
//! pool_submit_rate = 0.3
//! max_pool_submit_eth = 64
//!
//! [analytics]
//! threshold = 0.5
//! pool_attribution = "pool"        # or "look_through"
//! restake_attribution = "operator" # or "delegator"
//!
//! [[events]]
//! epoch = 0
//! action = "pool_submit"
//! user = "alice"
//! eth = 32
//! ```
//!
//! Event actions: `deposit {entity, count}`, `pool_submit {user, eth}`,
//! `pool_withdraw {user, eth | all}`, `delegate {staker, operator, eth}`,
//! `restake {entity, operator, count}`, `opt_in {operator, avs}` (`avs` may
//! be a list), `prove_misbehavior {operator, avs}`,
//! `request_exit {entity, count}`, `withdraw {entity}`, `oracle_report`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::analytics::{Attribution, PoolAttribution, RestakeAttribution};
use crate::chain::ChurnParams;
use crate::units::Gwei;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChurnSection {
    pub min_churn: u64,
    pub churn_quotient: u64,
    pub epochs_per_day: u64,
}

impl Default for ChurnSection {
    fn default() -> Self {
        let d = ChurnParams::default();
        ChurnSection { min_churn: d.min_churn, churn_quotient: d.churn_quotient, epochs_per_day: d.epochs_per_day }
    }
}

impl From<ChurnSection> for ChurnParams {
    fn from(c: ChurnSection) -> Self {
        ChurnParams { min_churn: c.min_churn, churn_quotient: c.churn_quotient, epochs_per_day: c.epochs_per_day }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisEntry {
    pub entity: String,
    pub validators: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub apr_bps: u64,
    pub genesis: Vec<GenesisEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSection {
    #[serde(default = "default_pool_id")]
    pub id: String,
    #[serde(default = "default_treasury")]
    pub treasury: String,
    #[serde(default = "default_fee_bps")]
    pub operator_fee_bps: u64,
    #[serde(default = "default_fee_bps")]
    pub treasury_fee_bps: u64,
    #[serde(default)]
    pub node_operators: Vec<String>,
    #[serde(default)]
    pub report_interval: u64,
}

fn default_pool_id() -> String {
    "pool".into()
}

fn default_treasury() -> String {
    "treasury".into()
}

fn default_fee_bps() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub id: String,
    #[serde(default)]
    pub home: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvsSection {
    pub id: String,
    #[serde(default)]
    pub fee_bps_per_year: u64,
    #[serde(default)]
    pub slashing_fraction: f64,
    #[serde(default)]
    pub pfc_eth: f64,
    #[serde(default)]
    pub fragmented_stake_eth: f64,
    #[serde(default)]
    pub home_only: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub entities: u64,
    pub deposit_rate: f64,
    pub exit_rate: f64,
    pub pool_submit_rate: f64,
    pub max_pool_submit_eth: u64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            entities: 10,
            deposit_rate: 0.0,
            exit_rate: 0.0,
            pool_submit_rate: 0.0,
            max_pool_submit_eth: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoolAttributionMode {
    #[default]
    Pool,
    LookThrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RestakeAttributionMode {
    #[default]
    Operator,
    Delegator,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticsSection {
    pub threshold: f64,
    pub pool_attribution: PoolAttributionMode,
    pub restake_attribution: RestakeAttributionMode,
}

impl Default for AnalyticsSection {
    fn default() -> Self {
        AnalyticsSection {
            threshold: 0.5,
            pool_attribution: PoolAttributionMode::Pool,
            restake_attribution: RestakeAttributionMode::Operator,
        }
    }
}

impl AnalyticsSection {
    pub fn attribution(&self) -> Attribution {
        Attribution {
            pool: match self.pool_attribution {
                PoolAttributionMode::Pool => PoolAttribution::Pool,
                PoolAttributionMode::LookThrough => PoolAttribution::LookThrough,
            },
            restake: match self.restake_attribution {
                RestakeAttributionMode::Operator => RestakeAttribution::Operator,
                RestakeAttributionMode::Delegator => RestakeAttribution::Delegator,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn one() -> u64 {
    1
}

/// A scripted action. Amounts are decimal ETH.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Deposit {
        entity: String,
        #[serde(default = "one")]
        count: u64,
    },
    PoolSubmit {
        user: String,
        eth: f64,
    },
    PoolWithdraw {
        user: String,
        #[serde(default)]
        eth: Option<f64>,
        #[serde(default)]
        all: bool,
    },
    Delegate {
        staker: String,
        operator: String,
        eth: f64,
    },
    Restake {
        entity: String,
        operator: String,
        #[serde(default = "one")]
        count: u64,
    },
    OptIn {
        operator: String,
        avs: OneOrMany,
    },
    ProveMisbehavior {
        operator: String,
        avs: String,
    },
    RequestExit {
        entity: String,
        #[serde(default = "one")]
        count: u64,
    },
    Withdraw {
        entity: String,
    },
    OracleReport,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Deposit { .. } => "deposit",
            Action::PoolSubmit { .. } => "pool_submit",
            Action::PoolWithdraw { .. } => "pool_withdraw",
            Action::Delegate { .. } => "delegate",
            Action::Restake { .. } => "restake",
            Action::OptIn { .. } => "opt_in",
            Action::ProveMisbehavior { .. } => "prove_misbehavior",
            Action::RequestExit { .. } => "request_exit",
            Action::Withdraw { .. } => "withdraw",
            Action::OracleReport => "oracle_report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct RawEvent {
    epoch: u64,
    #[serde(flatten)]
    action: Action,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: u64,
    epochs: u64,
    #[serde(default)]
    churn: ChurnSection,
    #[serde(default)]
    chain: ChainSection,
    #[serde(default)]
    pool: Option<PoolSection>,
    #[serde(default)]
    operators: Vec<Spanned<OperatorSection>>,
    #[serde(default)]
    avs: Vec<Spanned<AvsSection>>,
    #[serde(default)]
    traffic: TrafficSection,
    #[serde(default)]
    analytics: AnalyticsSection,
    #[serde(default)]
    events: Vec<Spanned<RawEvent>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledEvent {
    pub epoch: u64,
    pub action: Action,
    /// Line of the event's table in the source file.
    pub line: usize,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub epochs: u64,
    pub churn: ChurnParams,
    pub chain: ChainSection,
    pub pool: Option<PoolSection>,
    pub operators: Vec<OperatorSection>,
    pub avs: Vec<AvsSection>,
    pub traffic: TrafficSection,
    pub analytics: AnalyticsSection,
    /// Sorted by epoch; file order within an epoch.
    pub events: Vec<ScheduledEvent>,
}

/// Converts a config ETH amount, requiring it to be positive.
pub(crate) fn positive_eth(eth: f64) -> Option<Gwei> {
    Gwei::from_eth_f64(eth).filter(|g| !g.is_zero())
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&src)
    }

    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario = toml::from_str(src).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(src, s.start)),
            field: "<parse>".into(),
            message: e.message().trim().to_owned(),
        })?;
        validate(raw, src)
    }

    pub fn node_operators(&self) -> &[String] {
        self.pool.as_ref().map(|p| p.node_operators.as_slice()).unwrap_or(&[])
    }
}

fn validate(raw: RawScenario, src: &str) -> Result<ScenarioConfig, ConfigError> {
    let err = |line: Option<usize>, field: &str, message: String| ConfigError {
        line,
        field: field.to_owned(),
        message,
    };

    if raw.epochs == 0 {
        return Err(err(None, "epochs", "must be at least 1".into()));
    }
    let churn = raw.churn;
    for (name, v) in [
        ("churn.min_churn", churn.min_churn),
        ("churn.churn_quotient", churn.churn_quotient),
        ("churn.epochs_per_day", churn.epochs_per_day),
    ] {
        if v == 0 {
            return Err(err(None, name, "must be at least 1".into()));
        }
    }

    let mut entities_with_validators = BTreeSet::new();
    for (i, g) in raw.chain.genesis.iter().enumerate() {
        if g.entity.is_empty() {
            return Err(err(None, &format!("chain.genesis[{i}].entity"), "must not be empty".into()));
        }
        entities_with_validators.insert(g.entity.clone());
    }

    if let Some(pool) = &raw.pool {
        if pool.operator_fee_bps + pool.treasury_fee_bps > 10_000 {
            return Err(err(None, "pool", "operator_fee_bps + treasury_fee_bps exceeds 10000".into()));
        }
        let mut seen = BTreeSet::new();
        for op in &pool.node_operators {
            if !seen.insert(op) {
                return Err(err(None, "pool.node_operators", format!("duplicate node operator `{op}`")));
            }
        }
    }

    let mut operator_ids = BTreeSet::new();
    for (i, op) in raw.operators.iter().enumerate() {
        let line = Some(line_of(src, op.span().start));
        if !operator_ids.insert(op.get_ref().id.clone()) {
            return Err(err(line, &format!("operators[{i}].id"), format!("duplicate operator `{}`", op.get_ref().id)));
        }
    }

    let mut avs_ids = BTreeSet::new();
    for (i, a) in raw.avs.iter().enumerate() {
        let line = Some(line_of(src, a.span().start));
        let m = a.get_ref();
        if !avs_ids.insert(m.id.clone()) {
            return Err(err(line, &format!("avs[{i}].id"), format!("duplicate AVS `{}`", m.id)));
        }
        if !(0.0..=1.0).contains(&m.slashing_fraction) {
            return Err(err(line, &format!("avs[{i}].slashing_fraction"), "must be within [0, 1]".into()));
        }
        for (name, v) in [("pfc_eth", m.pfc_eth), ("fragmented_stake_eth", m.fragmented_stake_eth)] {
            if Gwei::from_eth_f64(v).is_none() {
                return Err(err(line, &format!("avs[{i}].{name}"), "must be a non-negative amount".into()));
            }
        }
    }

    let t = &raw.traffic;
    for (name, rate) in [
        ("traffic.deposit_rate", t.deposit_rate),
        ("traffic.exit_rate", t.exit_rate),
        ("traffic.pool_submit_rate", t.pool_submit_rate),
    ] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(err(None, name, "must be within [0, 1]".into()));
        }
    }
    if t.pool_submit_rate > 0.0 && (raw.pool.is_none() || t.max_pool_submit_eth == 0) {
        return Err(err(None, "traffic.pool_submit_rate", "needs a [pool] section and max_pool_submit_eth ≥ 1".into()));
    }
    if (t.deposit_rate > 0.0 || t.exit_rate > 0.0 || t.pool_submit_rate > 0.0) && t.entities == 0 {
        return Err(err(None, "traffic.entities", "must be at least 1 when traffic is enabled".into()));
    }
    let th = raw.analytics.threshold;
    if !(th > 0.0 && th < 1.0) {
        return Err(err(None, "analytics.threshold", "must be within (0, 1)".into()));
    }

    let mut events = Vec::with_capacity(raw.events.len());
    for (i, ev) in raw.events.into_iter().enumerate() {
        let event_line = line_of(src, ev.span().start);
        let line = Some(event_line);
        let RawEvent { epoch, action } = ev.into_inner();
        let field = |name: &str| format!("events[{i}].{name}");
        if epoch >= raw.epochs {
            return Err(err(line, &field("epoch"), format!("{epoch} is beyond the run length {}", raw.epochs)));
        }
        let known_operator = |name: &str, op: &str| {
            if operator_ids.contains(op) {
                Ok(())
            } else {
                Err(err(line, &field(name), format!("unknown operator `{op}`")))
            }
        };
        let known_avs = |a: &str| {
            if avs_ids.contains(a) {
                Ok(())
            } else {
                Err(err(line, &field("avs"), format!("unknown AVS `{a}`")))
            }
        };
        let needs_pool = || {
            if raw.pool.is_some() {
                Ok(())
            } else {
                Err(err(line, &field("action"), "requires a [pool] section".into()))
            }
        };
        let amount = |eth: f64| {
            positive_eth(eth)
                .map(|_| ())
                .ok_or_else(|| err(line, &field("eth"), format!("{eth} is not a positive ETH amount")))
        };
        let count = |c: u64| {
            if c == 0 {
                Err(err(line, &field("count"), "must be at least 1".into()))
            } else {
                Ok(())
            }
        };
        match &action {
            Action::Deposit { count: c, .. } | Action::RequestExit { count: c, .. } => count(*c)?,
            Action::PoolSubmit { eth, .. } => {
                needs_pool()?;
                amount(*eth)?;
            }
            Action::PoolWithdraw { eth, all, .. } => {
                needs_pool()?;
                match (eth, all) {
                    (Some(e), false) => amount(*e)?,
                    (None, true) => {}
                    _ => return Err(err(line, &field("eth"), "give exactly one of `eth` or `all = true`".into())),
                }
            }
            Action::Delegate { operator, eth, .. } => {
                known_operator("operator", operator)?;
                amount(*eth)?;
            }
            Action::Restake { operator, count: c, .. } => {
                known_operator("operator", operator)?;
                count(*c)?;
            }
            Action::OptIn { operator, avs } => {
                known_operator("operator", operator)?;
                for a in avs.to_vec() {
                    known_avs(&a)?;
                }
            }
            Action::ProveMisbehavior { operator, avs } => {
                known_operator("operator", operator)?;
                known_avs(avs)?;
            }
            Action::OracleReport => needs_pool()?,
            Action::Withdraw { .. } => {}
        }
        events.push(ScheduledEvent { epoch, action, line: event_line });
    }
    events.sort_by_key(|e| e.epoch);

    Ok(ScenarioConfig {
        seed: raw.seed,
        epochs: raw.epochs,
        churn: churn.into(),
        chain: raw.chain,
        pool: raw.pool,
        operators: raw.operators.into_iter().map(Spanned::into_inner).collect(),
        avs: raw.avs.into_iter().map(Spanned::into_inner).collect(),
        traffic: raw.traffic,
        analytics: raw.analytics,
        events,
    })
}
