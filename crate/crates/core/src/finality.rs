//! Per-block two-tier finality: stake-weighted votes give soft finality, a
//! valid finality certificate gives hard finality, and two timeout windows
//! handle a builder that never publishes one.
//!
//! ```text
//! Pending --quorum--> Soft --valid FC--> Hard
//!                      |  \--invalid FC--> RolledBack (slash)
//!                      \--K slots--> BackupWait (slash) --valid FC--> Hard
//!                                        \--K+K' slots--> RolledBack (requeue)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::config::{ConfigError, KeyValues};
use crate::prover::FcVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FinalityStatus {
    Pending,
    Soft,
    BackupWait,
    Hard,
    RolledBack,
}

impl FinalityStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, FinalityStatus::Hard | FinalityStatus::RolledBack)
    }

    pub fn name(self) -> &'static str {
        match self {
            FinalityStatus::Pending => "Pending",
            FinalityStatus::Soft => "Soft",
            FinalityStatus::BackupWait => "BackupWait",
            FinalityStatus::Hard => "Hard",
            FinalityStatus::RolledBack => "RolledBack",
        }
    }
}

impl fmt::Display for FinalityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinalityConfig {
    /// Builder window in slots.
    pub k: u64,
    /// Backup window in slots, counted after the builder window.
    pub k_prime: u64,
    pub slot_duration_ms: u64,
    pub quorum_numerator: u64,
    pub quorum_denominator: u64,
}

impl Default for FinalityConfig {
    fn default() -> Self {
        FinalityConfig {
            k: 3,
            k_prime: 3,
            slot_duration_ms: 400,
            quorum_numerator: 2,
            quorum_denominator: 3,
        }
    }
}

impl FinalityConfig {
    pub const KEYS: [&'static str; 3] = ["k", "k_prime", "slot_duration_ms"];

    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut cfg = FinalityConfig::default();
        kv.read_into("k", &mut cfg.k)?;
        kv.read_into("k_prime", &mut cfg.k_prime)?;
        kv.read_into("slot_duration_ms", &mut cfg.slot_duration_ms)?;
        if cfg.k == 0 || cfg.slot_duration_ms == 0 {
            return Err(ConfigError::Invalid("k and slot_duration_ms must be positive".into()));
        }
        Ok(cfg)
    }

    /// Smallest stake weight w with w/total ≥ numerator/denominator.
    pub fn quorum(&self, total_stake: u64) -> u64 {
        ((total_stake as u128 * self.quorum_numerator as u128).div_ceil(self.quorum_denominator as u128)) as u64
    }

    /// Milliseconds after slot start at which the builder window closes.
    pub fn builder_deadline_ms(&self) -> u64 {
        self.k * self.slot_duration_ms
    }

    /// Milliseconds after slot start at which the backup window closes.
    pub fn backup_deadline_ms(&self) -> u64 {
        (self.k + self.k_prime) * self.slot_duration_ms
    }
}

/// Side effects the owner of a tracker must carry out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    SlashBuilder,
    /// Put the block's transactions back in the mempool and revert its state.
    Requeue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Quorum,
    FcValid,
    FcInvalid,
    FcIgnored,
    FcBuffered,
    BuilderTimeout,
    BackupTimeout,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Quorum => "quorum",
            EventKind::FcValid => "fc-valid",
            EventKind::FcInvalid => "fc-invalid",
            EventKind::FcIgnored => "fc-ignored",
            EventKind::FcBuffered => "fc-buffered",
            EventKind::BuilderTimeout => "builder-timeout",
            EventKind::BackupTimeout => "backup-timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub t_ms: u64,
    pub from: FinalityStatus,
    pub to: FinalityStatus,
    pub event: EventKind,
}

/// Finality state of one block at one node. Times are simulated
/// milliseconds on the node's clock; `slot_start_ms` anchors both windows.
#[derive(Debug, Clone)]
pub struct FinalityTracker {
    pub slot: u64,
    pub block_hash: [u8; 32],
    pub slot_start_ms: u64,
    status: FinalityStatus,
    votes: BTreeMap<[u8; 32], u64>,
    vote_weight: u64,
    total_stake: u64,
    slashed_builder: bool,
    hard_by_valid_fc: bool,
    buffered_fc: Option<FcVerdict>,
    transitions: Vec<Transition>,
    config: FinalityConfig,
}

impl FinalityTracker {
    pub fn new(slot: u64, block_hash: [u8; 32], slot_start_ms: u64, total_stake: u64, config: FinalityConfig) -> Self {
        assert!(total_stake > 0, "total stake must be positive");
        FinalityTracker {
            slot,
            block_hash,
            slot_start_ms,
            status: FinalityStatus::Pending,
            votes: BTreeMap::new(),
            vote_weight: 0,
            total_stake,
            slashed_builder: false,
            hard_by_valid_fc: false,
            buffered_fc: None,
            transitions: Vec::new(),
            config,
        }
    }

    pub fn status(&self) -> FinalityStatus {
        self.status
    }

    pub fn vote_weight(&self) -> u64 {
        self.vote_weight
    }

    pub fn slashed_builder(&self) -> bool {
        self.slashed_builder
    }

    /// True only if Hard was entered through a valid certificate.
    pub fn hard_by_valid_fc(&self) -> bool {
        self.hard_by_valid_fc
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Time the tracker entered `status`, if it did.
    pub fn entered_at(&self, status: FinalityStatus) -> Option<u64> {
        self.transitions.iter().find(|t| t.to == status).map(|t| t.t_ms)
    }

    fn go(&mut self, to: FinalityStatus, event: EventKind, t_ms: u64) {
        self.transitions.push(Transition {
            t_ms,
            from: self.status,
            to,
            event,
        });
        self.status = to;
    }

    /// Records a validator's vote for this block. Duplicate votes and votes
    /// on a terminal block are ignored.
    pub fn on_vote(&mut self, validator: [u8; 32], stake: u64, t_ms: u64) -> Vec<Effect> {
        if self.status.is_terminal() || self.votes.contains_key(&validator) {
            return Vec::new();
        }
        self.votes.insert(validator, stake);
        self.vote_weight += stake;
        if self.status == FinalityStatus::Pending && self.vote_weight >= self.config.quorum(self.total_stake) {
            self.go(FinalityStatus::Soft, EventKind::Quorum, t_ms);
            if let Some(verdict) = self.buffered_fc.take() {
                return self.on_fc(verdict, t_ms);
            }
        }
        Vec::new()
    }

    /// Applies a certificate verdict. Certificates arriving before soft
    /// finality are held until quorum.
    pub fn on_fc(&mut self, verdict: FcVerdict, t_ms: u64) -> Vec<Effect> {
        match (self.status, verdict) {
            (FinalityStatus::Pending, _) => {
                if self.buffered_fc.is_none() || verdict.is_valid() {
                    self.buffered_fc = Some(verdict);
                }
                self.log_only(EventKind::FcBuffered, t_ms);
                Vec::new()
            }
            (FinalityStatus::Soft | FinalityStatus::BackupWait, FcVerdict::Valid) => {
                self.hard_by_valid_fc = true;
                self.go(FinalityStatus::Hard, EventKind::FcValid, t_ms);
                Vec::new()
            }
            (FinalityStatus::Soft, FcVerdict::Invalid(_)) => {
                self.go(FinalityStatus::RolledBack, EventKind::FcInvalid, t_ms);
                self.slash()
                    .into_iter()
                    .chain(std::iter::once(Effect::Requeue))
                    .collect()
            }
            _ => {
                self.log_only(EventKind::FcIgnored, t_ms);
                Vec::new()
            }
        }
    }

    /// Fires whichever windows have closed by `now_ms`.
    pub fn on_timeout(&mut self, now_ms: u64) -> Vec<Effect> {
        let elapsed = now_ms.saturating_sub(self.slot_start_ms);
        let mut effects = Vec::new();
        if self.status == FinalityStatus::Soft && elapsed >= self.config.builder_deadline_ms() {
            let at = self.slot_start_ms + self.config.builder_deadline_ms();
            self.go(FinalityStatus::BackupWait, EventKind::BuilderTimeout, at);
            effects.extend(self.slash());
        }
        if self.status == FinalityStatus::BackupWait && elapsed >= self.config.backup_deadline_ms() {
            let at = self.slot_start_ms + self.config.backup_deadline_ms();
            self.go(FinalityStatus::RolledBack, EventKind::BackupTimeout, at);
            effects.push(Effect::Requeue);
        }
        effects
    }

    fn slash(&mut self) -> Option<Effect> {
        if self.slashed_builder {
            return None;
        }
        self.slashed_builder = true;
        Some(Effect::SlashBuilder)
    }

    fn log_only(&mut self, event: EventKind, t_ms: u64) {
        self.transitions.push(Transition {
            t_ms,
            from: self.status,
            to: self.status,
            event,
        });
    }
}

/// One line of the transition audit log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub t_ms: u64,
    pub node: u32,
    pub slot: u64,
    pub from: Option<FinalityStatus>,
    pub to: Option<FinalityStatus>,
    pub event: String,
}

impl fmt::Display for AuditRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |x: Option<FinalityStatus>| x.map_or("-", FinalityStatus::name);
        write!(
            f,
            "t_ms={} node={} slot={} from={} to={} event={}",
            self.t_ms,
            self.node,
            self.slot,
            s(self.from),
            s(self.to),
            self.event
        )
    }
}

/// All finality trackers of one node, keyed by slot.
#[derive(Debug, Clone)]
pub struct FinalityBook {
    pub node: u32,
    config: FinalityConfig,
    total_stake: u64,
    trackers: BTreeMap<u64, FinalityTracker>,
    forks: BTreeSet<u64>,
    audit: Vec<AuditRecord>,
}

impl FinalityBook {
    pub fn new(node: u32, total_stake: u64, config: FinalityConfig) -> Self {
        FinalityBook {
            node,
            config,
            total_stake,
            trackers: BTreeMap::new(),
            forks: BTreeSet::new(),
            audit: Vec::new(),
        }
    }

    fn record(&mut self, t_ms: u64, slot: u64, from: Option<FinalityStatus>, to: Option<FinalityStatus>, event: &str) {
        self.audit.push(AuditRecord {
            t_ms,
            node: self.node,
            slot,
            from,
            to,
            event: event.to_string(),
        });
    }

    /// Starts tracking the first block seen for `slot`. A different block
    /// for an already tracked slot sets the fork flag and is not tracked.
    pub fn track(&mut self, slot: u64, block_hash: [u8; 32], slot_start_ms: u64, t_ms: u64) -> bool {
        if let Some(existing) = self.trackers.get(&slot).map(|t| t.block_hash) {
            if existing != block_hash && self.forks.insert(slot) {
                self.record(t_ms, slot, None, None, "equivocation");
            }
            return existing == block_hash;
        }
        let tracker = FinalityTracker::new(slot, block_hash, slot_start_ms, self.total_stake, self.config);
        self.trackers.insert(slot, tracker);
        self.record(t_ms, slot, None, Some(FinalityStatus::Pending), "block");
        true
    }

    fn drive<F>(&mut self, slot: u64, f: F) -> Vec<Effect>
    where
        F: FnOnce(&mut FinalityTracker) -> Vec<Effect>,
    {
        let Some(tracker) = self.trackers.get_mut(&slot) else {
            return Vec::new();
        };
        let before = tracker.transitions.len();
        let effects = f(tracker);
        let new: Vec<Transition> = tracker.transitions[before..].to_vec();
        for t in new {
            self.record(t.t_ms, slot, Some(t.from), Some(t.to), t.event.name());
        }
        for e in &effects {
            let name = match e {
                Effect::SlashBuilder => "slash",
                Effect::Requeue => "requeue",
            };
            let status = self.trackers[&slot].status;
            let at = self.trackers[&slot].transitions.last().map_or(0, |t| t.t_ms);
            self.record(at, slot, Some(status), Some(status), name);
        }
        effects
    }

    pub fn on_vote(&mut self, slot: u64, validator: [u8; 32], stake: u64, t_ms: u64) -> Vec<Effect> {
        self.drive(slot, |t| t.on_vote(validator, stake, t_ms))
    }

    /// Applies a certificate verdict for `slot`; certificates for untracked
    /// slots are logged and dropped.
    pub fn on_fc(&mut self, slot: u64, verdict: FcVerdict, t_ms: u64) -> Vec<Effect> {
        if !self.trackers.contains_key(&slot) {
            self.record(t_ms, slot, None, None, "fc-untracked");
            return Vec::new();
        }
        self.drive(slot, |t| t.on_fc(verdict, t_ms))
    }

    pub fn on_timeout(&mut self, slot: u64, now_ms: u64) -> Vec<Effect> {
        self.drive(slot, |t| t.on_timeout(now_ms))
    }

    pub fn get(&self, slot: u64) -> Option<&FinalityTracker> {
        self.trackers.get(&slot)
    }

    pub fn trackers(&self) -> impl Iterator<Item = &FinalityTracker> {
        self.trackers.values()
    }

    pub fn forks(&self) -> &BTreeSet<u64> {
        &self.forks
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }
}
