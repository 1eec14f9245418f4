//! Deterministic discrete-event simulation of a validator set running the
//! slot pipeline, voting, proving and two-tier finality.
//!
//! Time is simulated in integer microseconds. Phase costs come from the
//! pipeline and prover cost models, network delays from [`NetworkModel`].
//! Events are ordered by `(time, target node, sequence)`, so a run is a pure
//! function of its configuration and seed.
//!
//! All honest nodes share one ledger: they execute the same blocks in the
//! same order, so replica verification is computed once per block and its
//! simulated cost charged to every node.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::mpsc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::crypto::{
    constant_time_eq, derive_validator_keys, hmac_sha256, id_commitment, sha256, sha256_concat, Attestation, Domain,
    Rev,
};
use crate::executor::{Account, AccountState};
use crate::finality::{Effect, FinalityBook, FinalityConfig, FinalityStatus};
use crate::pipeline::{
    process_slot, replica_verify_block, Mempool, PhaseCostModel, PipelineConfig, ReplicaReject, SlotContext,
};
use crate::prover::{
    prove_block, verify_finality_certificate, BackupView, FcVerdict, ProofCounter, ProverCostModel, Witness,
    WitnessBundle, WitnessCommittee, DEFAULT_BUNDLE_BYTES,
};
use crate::wire::{encode_fc, AccountId, Block, FinalityCertificate, Transaction, FC_LEN, HEADER_LEN};
use crate::workload::Workload;

/// Slot, block hash, voter id and MAC.
pub const VOTE_MESSAGE_BYTES: usize = 8 + 32 + 32 + 32;

// ---------------------------------------------------------------------------
// Proof of history

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PohChain {
    hash: [u8; 32],
    ticks: u64,
    pub ticks_per_slot: u64,
}

impl PohChain {
    pub fn new(genesis: [u8; 32], ticks_per_slot: u64) -> Self {
        assert!(ticks_per_slot > 0);
        PohChain {
            hash: genesis,
            ticks: 0,
            ticks_per_slot,
        }
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn advance(&mut self, n: u64) {
        self.hash = poh_advance(self.hash, n);
        self.ticks += n;
    }

    /// Advances to the first tick of `slot`; never moves backwards.
    pub fn advance_to_slot(&mut self, slot: u64) {
        let target = slot * self.ticks_per_slot;
        if target > self.ticks {
            self.advance(target - self.ticks);
        }
    }
}

/// `n` sequential SHA-256 applications.
pub fn poh_advance(mut h: [u8; 32], n: u64) -> [u8; 32] {
    for _ in 0..n {
        h = sha256(&h);
    }
    h
}

pub fn poh_verify(h0: [u8; 32], hn: [u8; 32], n: u64) -> bool {
    poh_advance(h0, n) == hn
}

// ---------------------------------------------------------------------------
// Leader election

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ElectionError {
    #[error("no validator has positive stake")]
    NoStake,
}

pub fn epoch_seed(epoch: u64) -> [u8; 32] {
    sha256_concat(&[b"epoch", &epoch.to_be_bytes()])
}

/// Stake-weighted pick over validators sorted by identity commitment.
/// Returns an index into `validators`; zero-stake entries are never chosen.
pub fn elect_leader(
    poh_hash: &[u8; 32],
    seed: &[u8; 32],
    validators: &[([u8; 32], u64)],
) -> Result<usize, ElectionError> {
    let mut order: Vec<usize> = (0..validators.len()).filter(|&i| validators[i].1 > 0).collect();
    order.sort_by_key(|&i| validators[i].0);
    let total: u128 = order.iter().map(|&i| validators[i].1 as u128).sum();
    if total == 0 {
        return Err(ElectionError::NoStake);
    }
    let r = sha256_concat(&[poh_hash, seed]);
    let mut point = 0u128;
    for byte in r {
        point = (point * 256 + byte as u128) % total;
    }
    let mut acc = 0u128;
    for &i in &order {
        acc += validators[i].1 as u128;
        if point < acc {
            return Ok(i);
        }
    }
    unreachable!("point < total")
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkModel {
    pub base_latency_ms: u64,
    pub jitter_ms: u64,
    pub drop_probability: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            base_latency_ms: 0,
            jitter_ms: 0,
            drop_probability: 0.0,
        }
    }
}

impl NetworkModel {
    /// Delivery delay in microseconds, or `None` if the message is dropped.
    fn sample(&self, rng: &mut ChaCha20Rng) -> Option<u64> {
        if self.drop_probability > 0.0 && rng.gen_bool(self.drop_probability) {
            return None;
        }
        let jitter = if self.jitter_ms > 0 {
            rng.gen_range(0..=self.jitter_ms * 1000)
        } else {
            0
        };
        Some(self.base_latency_ms * 1000 + jitter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessSchedule {
    /// Every bundle is pushed when the block is published.
    SameSlot,
    /// Bundles are split into this many chunks, one per slot.
    Spread(u64),
}

impl fmt::Display for WitnessSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WitnessSchedule::SameSlot => f.write_str("same-slot"),
            WitnessSchedule::Spread(k) => write!(f, "spread:{k}"),
        }
    }
}

impl FromStr for WitnessSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-slot" => Ok(WitnessSchedule::SameSlot),
            _ => s
                .strip_prefix("spread:")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(WitnessSchedule::Spread)
                .ok_or_else(|| format!("bad witness schedule `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Normal,
    BuilderWithholdsProof,
    BackupProves,
    WitnessShortfallRollback,
    InvalidFcSlash,
    ForgedAttestationFlood,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Normal,
        Scenario::BuilderWithholdsProof,
        Scenario::BackupProves,
        Scenario::WitnessShortfallRollback,
        Scenario::InvalidFcSlash,
        Scenario::ForgedAttestationFlood,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Normal => "normal",
            Scenario::BuilderWithholdsProof => "builder-withholds-proof",
            Scenario::BackupProves => "backup-proves",
            Scenario::WitnessShortfallRollback => "witness-shortfall-rollback",
            Scenario::InvalidFcSlash => "invalid-fc-slash",
            Scenario::ForgedAttestationFlood => "forged-attestation-flood",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| SimError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ConfigError),
}

/// Simulated costs not covered by the pipeline and prover models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimCosts {
    /// Time the leader collects transactions before sealing.
    pub ingest_window_us: u64,
    pub fc_publish_us: u64,
    pub phase: PhaseCostModel,
    pub prover: ProverCostModel,
}

impl Default for SimCosts {
    fn default() -> Self {
        SimCosts {
            ingest_window_us: 100_000,
            fc_publish_us: 50_000,
            phase: PhaseCostModel::default(),
            prover: ProverCostModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub validators: usize,
    /// Per-validator stake; equal stakes of 100 when absent.
    pub stakes: Option<Vec<u64>>,
    pub slots: u64,
    pub txs_per_slot: usize,
    pub clients: usize,
    /// Accounts are split into this many groups; slot `s` only touches group `s % partitions`.
    pub partitions: usize,
    pub accounts_per_partition: usize,
    pub ticks_per_slot: u64,
    pub slots_per_epoch: u64,
    /// Slot attacked by single-block scenarios.
    pub target_slot: u64,
    pub forged_txs: usize,
    pub chain_id: u16,
    pub network: NetworkModel,
    pub witness_schedule: WitnessSchedule,
    pub bundle_bytes: usize,
    pub finality: FinalityConfig,
    pub pipeline: PipelineConfig,
    pub costs: SimCosts,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            validators: 4,
            stakes: None,
            slots: 100,
            txs_per_slot: 2000,
            clients: 64,
            partitions: 8,
            accounts_per_partition: 512,
            ticks_per_slot: 64,
            slots_per_epoch: 32,
            target_slot: 2,
            forged_txs: 64,
            chain_id: Workload::CHAIN_ID,
            network: NetworkModel::default(),
            witness_schedule: WitnessSchedule::SameSlot,
            bundle_bytes: DEFAULT_BUNDLE_BYTES,
            finality: FinalityConfig::default(),
            pipeline: PipelineConfig::default(),
            costs: SimCosts::default(),
        }
    }
}

impl SimConfig {
    /// Keys read here; finality and pipeline keys are also accepted.
    pub const KEYS: [&'static str; 17] = [
        "validators",
        "stakes",
        "slots",
        "txs_per_slot",
        "clients",
        "partitions",
        "accounts_per_partition",
        "ticks_per_slot",
        "slots_per_epoch",
        "target_slot",
        "forged_txs",
        "base_latency_ms",
        "jitter_ms",
        "drop_probability",
        "witness_schedule",
        "bundle_bytes",
        "ingest_window_ms",
    ];

    pub fn from_kv(kv: &KeyValues) -> Result<Self, SimError> {
        let known: Vec<&str> = Self::KEYS
            .iter()
            .chain(&FinalityConfig::KEYS)
            .chain(&PipelineConfig::KEYS)
            .copied()
            .collect();
        kv.ensure_known(&known)?;
        let mut c = SimConfig::default();
        kv.read_into("validators", &mut c.validators)?;
        if let Some(s) = kv.get_str("stakes") {
            let stakes = s
                .split(',')
                .map(|x| x.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError::Value {
                    key: "stakes".into(),
                    value: s.into(),
                })?;
            c.stakes = Some(stakes);
        }
        kv.read_into("slots", &mut c.slots)?;
        kv.read_into("txs_per_slot", &mut c.txs_per_slot)?;
        kv.read_into("clients", &mut c.clients)?;
        kv.read_into("partitions", &mut c.partitions)?;
        kv.read_into("accounts_per_partition", &mut c.accounts_per_partition)?;
        kv.read_into("ticks_per_slot", &mut c.ticks_per_slot)?;
        kv.read_into("slots_per_epoch", &mut c.slots_per_epoch)?;
        kv.read_into("target_slot", &mut c.target_slot)?;
        kv.read_into("forged_txs", &mut c.forged_txs)?;
        kv.read_into("base_latency_ms", &mut c.network.base_latency_ms)?;
        kv.read_into("jitter_ms", &mut c.network.jitter_ms)?;
        kv.read_into("drop_probability", &mut c.network.drop_probability)?;
        if let Some(s) = kv.get_str("witness_schedule") {
            c.witness_schedule = s.parse().map_err(SimError::Config)?;
        }
        kv.read_into("bundle_bytes", &mut c.bundle_bytes)?;
        c.finality = FinalityConfig::from_kv(kv)?;
        c.pipeline = PipelineConfig::from_kv(kv)?;
        let mut ingest_ms = c.costs.ingest_window_us / 1000;
        kv.read_into("ingest_window_ms", &mut ingest_ms)?;
        c.costs.ingest_window_us = ingest_ms * 1000;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(1..=64).contains(&self.validators) {
            return bad("validators must be in 1..=64");
        }
        if let Some(s) = &self.stakes {
            if s.len() != self.validators || s.contains(&0) {
                return bad("stakes must list one positive stake per validator");
            }
        }
        if self.partitions as u64 <= self.finality.k + self.finality.k_prime {
            return bad("partitions must exceed k + k_prime so rollbacks revert exactly");
        }
        if self.accounts_per_partition < 2 || self.clients == 0 || self.ticks_per_slot == 0 || self.slots_per_epoch == 0
        {
            return bad("accounts_per_partition >= 2 and clients, ticks_per_slot, slots_per_epoch > 0");
        }
        if !(0.0..1.0).contains(&self.network.drop_probability) {
            return bad("drop_probability must be in [0, 1)");
        }
        if self.bundle_bytes < crate::prover::BUNDLE_OVERHEAD + crate::prover::WITNESS_LEN {
            return bad("bundle_bytes too small for a witness");
        }
        if self.finality.slot_duration_ms != self.pipeline.slot_duration_ms {
            return bad("finality and pipeline slot durations differ");
        }
        Ok(())
    }

    /// Builder-path hard finality latency predicted by the cost models for a full slot.
    pub fn expected_hard_ms(&self) -> u64 {
        let n = self.txs_per_slot.min(self.pipeline.max_txs_per_block);
        let c = &self.costs;
        let us = c.ingest_window_us
            + c.phase.phase1_us(n as u64)
            + c.phase.block_publish_us
            + c.prover.proving_us(n)
            + c.fc_publish_us
            + c.prover.fc_verify_us
            + self.network.base_latency_ms * 2000;
        us / 1000
    }

    fn stake_of(&self, i: usize) -> u64 {
        self.stakes.as_ref().map_or(100, |s| s[i])
    }

    fn slot_us(&self) -> u64 {
        self.finality.slot_duration_ms * 1000
    }
}

// ---------------------------------------------------------------------------
// Event plumbing

#[derive(Debug, Clone)]
enum Msg {
    SlotStart(u64),
    BlockArrive(u64),
    CastVote(u64),
    VoteArrive { slot: u64, voter: usize, mac: [u8; 32] },
    ProofReady(u64),
    BackupReady { slot: u64, fc: FinalityCertificate },
    FcArrive { slot: u64, fc: FinalityCertificate },
    FcVerified { slot: u64, fc: FinalityCertificate },
    WitnessArrive { slot: u64, count: usize },
    Timer(u64),
}

#[derive(Debug)]
struct Queued {
    key: (u64, usize, u64),
    msg: Msg,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelCounter {
    pub messages: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Channels {
    pub block: ChannelCounter,
    pub vote: ChannelCounter,
    pub fc: ChannelCounter,
    pub witness: ChannelCounter,
}

struct Validator {
    id_com: [u8; 32],
    rev: Rev,
    stake: u64,
    book: FinalityBook,
}

struct BlockRecord {
    leader: usize,
    start_us: u64,
    published_us: u64,
    block: Block,
    hash: [u8; 32],
    replica: Result<(), ReplicaReject>,
    pre_images: Vec<(AccountId, Option<Account>)>,
    witnesses: Vec<Option<Witness>>,
    bundles: HashMap<[u8; 32], WitnessBundle>,
    received: Vec<usize>,
    verdicts: HashMap<Vec<u8>, FcVerdict>,
    forged: usize,
    slashed: bool,
    requeued: Option<usize>,
    backup_decided: bool,
    holders_at_backup_start: Option<usize>,
    backup_prover: Option<usize>,
    backup_error: Option<String>,
    builder_error: Option<String>,
    observers: Vec<usize>,
}

/// Result of one simulated block as seen across all nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOutcome {
    pub slot: u64,
    pub leader: usize,
    pub txs: usize,
    pub forged_txs: usize,
    pub published_ms: u64,
    /// Latest time any node reached the state, relative to slot start.
    pub soft_ms: Option<u64>,
    pub hard_ms: Option<u64>,
    pub rolled_back_ms: Option<u64>,
    /// Common final state, or `None` if nodes disagree.
    pub status: Option<FinalityStatus>,
    pub via_backup: bool,
    pub slashed: bool,
    pub holders_at_backup_start: Option<usize>,
    pub availability: Option<bool>,
    pub requeued: usize,
    pub backup_error: Option<String>,
    pub builder_error: Option<String>,
    pub observers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config: SimConfig,
    pub blocks: Vec<BlockOutcome>,
    pub slashes: Vec<(u64, usize, u64)>,
    pub channels: Channels,
    pub max_votes_per_validator_slot: u64,
    pub light_rejected: usize,
    pub forged_hard: usize,
    pub safety_violations: Vec<String>,
    pub audit: Vec<String>,
}

// ---------------------------------------------------------------------------
// The simulator

struct Sim {
    cfg: SimConfig,
    scenario: Scenario,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now: u64,
    net_rng: ChaCha20Rng,
    tx_rng: ChaCha20Rng,
    validators: Vec<Validator>,
    vote_keys: HashMap<(usize, u64), [u8; 32]>,
    poh: PohChain,
    workload: Workload,
    mempool: Mempool,
    ledger: AccountState,
    committee: WitnessCommittee,
    pending_bundles: HashMap<[u8; 32], WitnessBundle>,
    records: BTreeMap<u64, BlockRecord>,
    parent_hash: [u8; 32],
    nonce: u64,
    forged: HashSet<[u8; 32]>,
    channels: Channels,
    votes_cast: HashMap<(usize, u64), u64>,
    slashes: Vec<(u64, usize, u64)>,
    stake_ledger: Vec<u64>,
    light_rejected: usize,
    counter: ProofCounter,
}

impl Sim {
    fn new(cfg: SimConfig, scenario: Scenario, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n_accounts = cfg.partitions * cfg.accounts_per_partition;
        let workload = Workload::new(rng.next_u64(), cfg.clients, n_accounts);
        let genesis_domain = Domain::new(cfg.chain_id, 0).unwrap();
        let total: u64 = (0..cfg.validators).map(|i| cfg.stake_of(i)).sum();
        let validators: Vec<Validator> = (0..cfg.validators)
            .map(|i| {
                let rev = Rev::random(&mut rng);
                let mut salt = [0u8; 32];
                rng.fill_bytes(&mut salt);
                Validator {
                    id_com: id_commitment(&rev, salt, genesis_domain).bytes,
                    rev,
                    stake: cfg.stake_of(i),
                    book: FinalityBook::new(i as u32, total, cfg.finality),
                }
            })
            .collect();
        let committee = WitnessCommittee::new(cfg.validators, cfg.bundle_bytes, &mut rng);
        let mut genesis = [0u8; 32];
        rng.fill_bytes(&mut genesis);
        let stake_ledger = validators.iter().map(|v| v.stake).collect();
        Sim {
            mempool: Mempool::new(workload.registry()),
            ledger: workload.state.clone(),
            poh: PohChain::new(genesis, cfg.ticks_per_slot),
            net_rng: ChaCha20Rng::seed_from_u64(rng.next_u64()),
            tx_rng: ChaCha20Rng::seed_from_u64(rng.next_u64()),
            validators,
            vote_keys: HashMap::new(),
            workload,
            committee,
            pending_bundles: HashMap::new(),
            records: BTreeMap::new(),
            parent_hash: [0; 32],
            nonce: 0,
            forged: HashSet::new(),
            channels: Channels::default(),
            votes_cast: HashMap::new(),
            slashes: Vec::new(),
            stake_ledger,
            light_rejected: 0,
            counter: ProofCounter::default(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            cfg,
            scenario,
        }
    }

    fn n(&self) -> usize {
        self.validators.len()
    }

    fn push(&mut self, time: u64, target: usize, msg: Msg) {
        self.seq += 1;
        self.queue.push(Reverse(Queued {
            key: (time, target, self.seq),
            msg,
        }));
    }

    /// Sends `msg` from `from` to every node; the sender receives its own copy at once.
    fn broadcast(&mut self, from: usize, at: u64, msg: Msg) {
        for to in 0..self.n() {
            if to == from {
                self.push(at, to, msg.clone());
            } else if let Some(d) = self.cfg.network.sample(&mut self.net_rng) {
                self.push(at + d, to, msg.clone());
            }
        }
    }

    fn vote_key(&mut self, v: usize, epoch: u64) -> [u8; 32] {
        let chain_id = self.cfg.chain_id;
        let spe = self.cfg.slots_per_epoch;
        let rev = &self.validators[v].rev;
        *self.vote_keys.entry((v, epoch)).or_insert_with(|| {
            let domain = Domain::new(chain_id, epoch * spe).expect("epoch start fits the domain");
            *derive_validator_keys(rev, &(v as u32).to_be_bytes(), domain, epoch)
                .vote
                .expose_secret()
        })
    }

    fn stake_table(&self) -> Vec<([u8; 32], u64)> {
        self.validators.iter().map(|v| (v.id_com, v.stake)).collect()
    }

    fn withholds(&self, slot: u64) -> bool {
        match self.scenario {
            Scenario::BackupProves => true,
            Scenario::BuilderWithholdsProof | Scenario::WitnessShortfallRollback => slot == self.cfg.target_slot,
            _ => false,
        }
    }

    fn run(mut self) -> SimReport {
        if self.cfg.slots > 0 {
            self.push(0, 0, Msg::SlotStart(0));
        }
        while let Some(Reverse(q)) = self.queue.pop() {
            self.now = q.key.0;
            self.handle(q.key.1, q.msg);
        }
        self.report()
    }

    fn handle(&mut self, node: usize, msg: Msg) {
        match msg {
            Msg::SlotStart(slot) => self.on_slot_start(slot),
            Msg::BlockArrive(slot) => self.on_block_arrive(node, slot),
            Msg::CastVote(slot) => self.on_cast_vote(node, slot),
            Msg::VoteArrive { slot, voter, mac } => self.on_vote_arrive(node, slot, voter, mac),
            Msg::ProofReady(slot) => self.on_proof_ready(node, slot),
            Msg::BackupReady { slot, fc } => self.publish_fc(node, slot, fc),
            Msg::FcArrive { slot, fc } => {
                let at = self.now + self.cfg.costs.prover.verify_us(&fc);
                self.push(at, node, Msg::FcVerified { slot, fc });
            }
            Msg::FcVerified { slot, fc } => self.on_fc_verified(node, slot, fc),
            Msg::WitnessArrive { slot, count } => {
                if let Some(r) = self.records.get_mut(&slot) {
                    r.received[node] += count;
                }
            }
            Msg::Timer(slot) => self.on_timer(node, slot),
        }
    }

    fn generate_transactions(&mut self, slot: u64) {
        let per = self.cfg.accounts_per_partition;
        let base = (slot as usize % self.cfg.partitions) * per;
        if self.scenario == Scenario::ForgedAttestationFlood && slot == self.cfg.target_slot {
            let domain = Domain::new(self.cfg.chain_id, slot).expect("slot fits the domain");
            for _ in 0..self.cfg.forged_txs {
                let victim = self.tx_rng.gen_range(0..self.workload.clients.len());
                let from = base + self.tx_rng.gen_range(0..per);
                let to = base + (from - base + 1) % per;
                self.nonce += 1;
                let msg = self.workload.transfer_message(from, to, 1, self.nonce);
                let mut credential = [0u8; 32];
                self.tx_rng.fill_bytes(&mut credential);
                let att = Attestation {
                    obj_hash: sha256(&msg.encode()),
                    id_com: self.workload.clients[victim].id.bytes,
                    domain,
                    credential,
                };
                let tx = Transaction::new(msg, att);
                self.forged.insert(tx.record_id());
                self.mempool.submit(tx);
            }
        }
        for _ in 0..self.cfg.txs_per_slot {
            let from = base + self.tx_rng.gen_range(0..per);
            let to = base + (from - base + self.tx_rng.gen_range(1..per)) % per;
            self.nonce += 1;
            let tx = self.workload.transfer(from, to, self.nonce, slot);
            let witness = self.workload.witness_for(&tx);
            let bundle = self.committee.seal(tx.tx_hash(), &witness);
            self.pending_bundles.insert(tx.tx_hash(), bundle);
            self.mempool.submit_with_witness(tx, witness, None);
        }
    }

    fn on_slot_start(&mut self, slot: u64) {
        let slot_us = self.cfg.slot_us();
        let start_us = slot * slot_us;
        self.poh.advance_to_slot(slot);
        let seed = epoch_seed(slot / self.cfg.slots_per_epoch);
        let leader = elect_leader(&self.poh.hash(), &seed, &self.stake_table()).expect("positive stake");
        self.generate_transactions(slot);

        let ctx = SlotContext {
            slot,
            chain_id: self.cfg.chain_id,
            parent_hash: self.parent_hash,
            poh_hash: self.poh.hash(),
            leader_id_com: self.validators[leader].id_com,
            timestamp_ms: start_us / 1000,
        };
        let pre = self.ledger.clone();
        let (job_tx, job_rx) = mpsc::sync_channel(1);
        let result = process_slot(
            &ctx,
            &mut self.mempool,
            &mut self.ledger,
            &self.cfg.pipeline,
            Some(&job_tx),
        );
        let job = job_rx.try_recv().expect("slot enqueues a prove job");
        self.light_rejected += result.rejected.len();
        let block = result.block;
        let hash = block.hash();
        self.parent_hash = hash;

        let replica = replica_verify_block(
            &block,
            &self.mempool.registry,
            &pre,
            self.cfg.chain_id,
            &self.cfg.pipeline,
        )
        .map(|vote| debug_assert!(vote.post_state == self.ledger));
        let mut touched = BTreeSet::new();
        for d in &result.deltas {
            touched.extend(d.changes.iter().map(|(id, _)| *id));
        }
        let pre_images = touched.into_iter().map(|id| (id, pre.get(&id).cloned())).collect();

        let mut bundles = HashMap::new();
        let mut forged = 0;
        for tx in &block.transactions {
            let h = tx.tx_hash();
            self.mempool.forget_witness(&h);
            if let Some(b) = self.pending_bundles.remove(&h) {
                bundles.insert(h, b);
            }
            if self.forged.contains(&tx.record_id()) {
                forged += 1;
            }
        }

        let n_txs = block.transactions.len() as u64;
        let costs = self.cfg.costs;
        let published_us = start_us
            + costs.ingest_window_us
            + costs.phase.phase1_us(result.selected as u64)
            + costs.phase.block_publish_us;
        let block_len = block.encoded_len() as u64;
        let n = self.n();
        self.records.insert(
            slot,
            BlockRecord {
                leader,
                start_us,
                published_us,
                hash,
                replica,
                pre_images,
                witnesses: job.witnesses,
                bundles,
                received: vec![0; n],
                verdicts: HashMap::new(),
                forged,
                slashed: false,
                requeued: None,
                backup_decided: false,
                holders_at_backup_start: None,
                backup_prover: None,
                backup_error: None,
                builder_error: None,
                observers: Vec::new(),
                block,
            },
        );

        // block propagation
        self.channels.block.messages += (n - 1) as u64;
        self.channels.block.bytes += block_len * (n - 1) as u64;
        self.broadcast(leader, published_us, Msg::BlockArrive(slot));

        // witness gossip from the leader to the committee
        self.gossip_witnesses(slot, leader, published_us);

        if !self.withholds(slot) {
            let ready = published_us + costs.prover.proving_us(n_txs as usize);
            self.push(ready, leader, Msg::ProofReady(slot));
        }
        for v in 0..n {
            self.push(
                start_us + self.cfg.finality.builder_deadline_ms() * 1000,
                v,
                Msg::Timer(slot),
            );
            self.push(
                start_us + self.cfg.finality.backup_deadline_ms() * 1000,
                v,
                Msg::Timer(slot),
            );
        }
        if slot + 1 < self.cfg.slots {
            self.push(start_us + slot_us, 0, Msg::SlotStart(slot + 1));
        }
    }

    fn gossip_witnesses(&mut self, slot: u64, leader: usize, published_us: u64) {
        let r = &self.records[&slot];
        let total = r.bundles.len();
        let bundle_len = r.bundles.values().next().map_or(0, WitnessBundle::wire_len) as u64;
        let mut recipients: Vec<usize> = (0..self.n()).filter(|&v| v != leader).collect();
        if self.scenario == Scenario::WitnessShortfallRollback && slot == self.cfg.target_slot {
            recipients.truncate(self.committee.threshold().saturating_sub(2));
        }
        let chunks = match self.cfg.witness_schedule {
            WitnessSchedule::SameSlot => 1,
            WitnessSchedule::Spread(k) => k as usize,
        };
        let slot_us = self.cfg.slot_us();
        for to in recipients {
            for c in 0..chunks {
                let count = total * (c + 1) / chunks - total * c / chunks;
                if count == 0 {
                    continue;
                }
                self.channels.witness.messages += 1;
                self.channels.witness.bytes += count as u64 * bundle_len;
                if let Some(d) = self.cfg.network.sample(&mut self.net_rng) {
                    self.push(
                        published_us + c as u64 * slot_us + d,
                        to,
                        Msg::WitnessArrive { slot, count },
                    );
                }
            }
        }
    }

    fn on_block_arrive(&mut self, node: usize, slot: u64) {
        let r = &self.records[&slot];
        let (hash, start_ms, leader, n_txs) = (r.hash, r.start_us / 1000, r.leader, r.block.transactions.len());
        let now_ms = self.now / 1000;
        self.validators[node].book.track(slot, hash, start_ms, now_ms);
        let verify_at = if node == leader {
            self.now
        } else {
            self.now + self.cfg.costs.phase.phase1_us(n_txs as u64)
        };
        self.push(verify_at, node, Msg::CastVote(slot));
    }

    fn on_cast_vote(&mut self, node: usize, slot: u64) {
        let r = &self.records[&slot];
        if r.replica.is_err() {
            return;
        }
        let hash = r.hash;
        let key = self.vote_key(node, slot / self.cfg.slots_per_epoch);
        let mac = hmac_sha256(&key, &[&slot.to_be_bytes(), &hash]);
        *self.votes_cast.entry((node, slot)).or_default() += 1;
        self.channels.vote.messages += (self.n() - 1) as u64;
        self.channels.vote.bytes += (VOTE_MESSAGE_BYTES * (self.n() - 1)) as u64;
        self.broadcast(node, self.now, Msg::VoteArrive { slot, voter: node, mac });
    }

    fn on_vote_arrive(&mut self, node: usize, slot: u64, voter: usize, mac: [u8; 32]) {
        let hash = self.records[&slot].hash;
        let key = self.vote_key(voter, slot / self.cfg.slots_per_epoch);
        if !constant_time_eq(&hmac_sha256(&key, &[&slot.to_be_bytes(), &hash]), &mac) {
            return;
        }
        let (id, stake) = (self.validators[voter].id_com, self.validators[voter].stake);
        let effects = self.validators[node].book.on_vote(slot, id, stake, self.now / 1000);
        self.apply_effects(slot, effects);
    }

    fn on_proof_ready(&mut self, node: usize, slot: u64) {
        let r = &self.records[&slot];
        match prove_block(&r.block, &r.witnesses, &self.counter) {
            Ok((mut fc, _)) => {
                if self.scenario == Scenario::InvalidFcSlash && slot == self.cfg.target_slot {
                    fc.proof[0] ^= 0x01;
                }
                let at = self.now;
                self.publish_fc(node, slot, fc);
                debug_assert_eq!(at, self.now);
            }
            Err(e) => {
                self.records.get_mut(&slot).unwrap().builder_error = Some(e.to_string());
            }
        }
    }

    fn publish_fc(&mut self, node: usize, slot: u64, fc: FinalityCertificate) {
        let at = self.now + self.cfg.costs.fc_publish_us;
        self.channels.fc.messages += (self.n() - 1) as u64;
        self.channels.fc.bytes += (FC_LEN * (self.n() - 1)) as u64;
        self.broadcast(node, at, Msg::FcArrive { slot, fc });
    }

    fn on_fc_verified(&mut self, node: usize, slot: u64, fc: FinalityCertificate) {
        let key = encode_fc(&fc).to_vec();
        let r = self.records.get_mut(&slot).expect("certificate for a produced block");
        let verdict = *r
            .verdicts
            .entry(key)
            .or_insert_with(|| verify_finality_certificate(&fc, &r.block));
        let effects = self.validators[node].book.on_fc(slot, verdict, self.now / 1000);
        self.apply_effects(slot, effects);
    }

    fn on_timer(&mut self, node: usize, slot: u64) {
        let effects = self.validators[node].book.on_timeout(slot, self.now / 1000);
        self.apply_effects(slot, effects);
        let in_backup = self.validators[node]
            .book
            .get(slot)
            .is_some_and(|t| t.status() == FinalityStatus::BackupWait);
        if in_backup && !self.records[&slot].backup_decided {
            self.start_backup(slot);
        }
    }

    /// At the start of the backup window: count bundle holders, pick the
    /// lowest-indexed holder as backup prover and run quorum proving.
    fn start_backup(&mut self, slot: u64) {
        let r = self.records.get_mut(&slot).unwrap();
        r.backup_decided = true;
        let n_txs = r.block.transactions.len();
        let holders: Vec<usize> = (0..r.received.len())
            .filter(|&v| v != r.leader && r.received[v] >= n_txs && r.bundles.len() == n_txs)
            .collect();
        r.holders_at_backup_start = Some(holders.len());
        let empty = HashMap::new();
        let views: Vec<BackupView> = (0..r.received.len())
            .filter(|&v| v != r.leader)
            .map(|v| BackupView {
                member: v,
                bundles: if holders.contains(&v) { &r.bundles } else { &empty },
            })
            .collect();
        match self.committee.backup_prove(&r.block, &views, &self.counter) {
            Ok(outcome) => {
                let prover = holders[0];
                r.backup_prover = Some(prover);
                r.observers = outcome.observers;
                let at = self.now + self.cfg.costs.prover.proving_us(n_txs);
                self.push(at, prover, Msg::BackupReady { slot, fc: outcome.fc });
            }
            Err(e) => r.backup_error = Some(e.to_string()),
        }
    }

    fn apply_effects(&mut self, slot: u64, effects: Vec<Effect>) {
        for e in effects {
            let r = self.records.get_mut(&slot).unwrap();
            match e {
                Effect::SlashBuilder if !r.slashed => {
                    r.slashed = true;
                    let leader = r.leader;
                    let amount = self.stake_ledger[leader];
                    self.stake_ledger[leader] = 0;
                    self.slashes.push((slot, leader, amount));
                }
                Effect::Requeue if r.requeued.is_none() => {
                    for (id, pre) in &r.pre_images {
                        match pre {
                            Some(acc) => self.ledger.insert(*id, acc.clone()),
                            None => {
                                self.ledger.remove(id);
                            }
                        }
                    }
                    r.requeued = Some(self.mempool.requeue(&r.block.transactions));
                    // clients still hold their witnesses and bundles for a requeued tx
                    for (tx, w) in r.block.transactions.iter().zip(&r.witnesses) {
                        let h = tx.tx_hash();
                        if let Some(w) = w {
                            self.mempool.provide_witness(h, w.clone());
                        }
                        if let Some(b) = r.bundles.get(&h) {
                            self.pending_bundles.insert(h, b.clone());
                        }
                    }
                }
                _ => {}
            }
        }
    }

    fn report(self) -> SimReport {
        let mut blocks = Vec::new();
        let mut safety_violations = Vec::new();
        let mut forged_hard = 0;
        let threshold = self.committee.threshold();
        for (&slot, r) in &self.records {
            let start_ms = r.start_us / 1000;
            let latest = |status: FinalityStatus| {
                self.validators
                    .iter()
                    .map(|v| v.book.get(slot).and_then(|t| t.entered_at(status)))
                    .collect::<Option<Vec<u64>>>()
                    .and_then(|ts| ts.into_iter().max())
                    .map(|t| t - start_ms)
            };
            let statuses: BTreeSet<FinalityStatus> = self
                .validators
                .iter()
                .map(|v| v.book.get(slot).map_or(FinalityStatus::Pending, |t| t.status()))
                .collect();
            let status = (statuses.len() == 1).then(|| *statuses.iter().next().unwrap());
            let via_backup = self.validators.iter().any(|v| {
                v.book.get(slot).is_some_and(|t| {
                    t.transitions()
                        .iter()
                        .any(|x| x.from == FinalityStatus::BackupWait && x.to == FinalityStatus::Hard)
                })
            });
            for (i, v) in self.validators.iter().enumerate() {
                if let Some(t) = v.book.get(slot) {
                    if t.status() == FinalityStatus::Hard && !t.hard_by_valid_fc() {
                        safety_violations.push(format!("node {i} slot {slot}: Hard without valid certificate"));
                    }
                    if t.block_hash != r.hash {
                        safety_violations.push(format!("node {i} slot {slot}: tracks a different block"));
                    }
                    let hard_entries = t
                        .transitions()
                        .iter()
                        .filter(|x| x.to == FinalityStatus::Hard && x.from != x.to)
                        .count();
                    if hard_entries > 1 {
                        safety_violations.push(format!("node {i} slot {slot}: entered Hard twice"));
                    }
                }
            }
            if statuses.contains(&FinalityStatus::Hard) {
                forged_hard += r.forged;
            }
            blocks.push(BlockOutcome {
                slot,
                leader: r.leader,
                txs: r.block.transactions.len(),
                forged_txs: r.forged,
                published_ms: (r.published_us - r.start_us) / 1000,
                soft_ms: latest(FinalityStatus::Soft),
                hard_ms: latest(FinalityStatus::Hard),
                rolled_back_ms: latest(FinalityStatus::RolledBack),
                status,
                via_backup,
                slashed: r.slashed,
                holders_at_backup_start: r.holders_at_backup_start,
                availability: r.holders_at_backup_start.map(|h| h >= threshold),
                requeued: r.requeued.unwrap_or(0),
                backup_error: r.backup_error.clone(),
                builder_error: r.builder_error.clone(),
                observers: r.observers.clone(),
            });
        }
        let mut audit: Vec<(u64, u32, String)> = self
            .validators
            .iter()
            .flat_map(|v| v.book.audit().iter().map(|a| (a.t_ms, a.node, a.to_string())))
            .collect();
        audit.sort();
        SimReport {
            scenario: self.scenario,
            seed: 0,
            config: self.cfg,
            blocks,
            slashes: self.slashes,
            channels: self.channels,
            max_votes_per_validator_slot: self.votes_cast.values().copied().max().unwrap_or(0),
            light_rejected: self.light_rejected,
            forged_hard,
            safety_violations,
            audit: audit.into_iter().map(|(_, _, line)| line).collect(),
        }
    }
}

/// Runs `scenario` to completion: all configured slots plus every pending
/// vote, certificate and timeout.
pub fn run_scenario(cfg: &SimConfig, scenario: Scenario, seed: u64) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let mut report = Sim::new(cfg.clone(), scenario, seed).run();
    report.seed = seed;
    Ok(report)
}

fn opt<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "-".to_string(), ToString::to_string)
}

impl SimReport {
    /// Blocks whose hard finality landed within `target ± tol` ms of slot start.
    pub fn hard_within(&self, target: u64, tol: u64) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.hard_ms.is_some_and(|h| h.abs_diff(target) <= tol))
            .count()
    }

    pub fn block(&self, slot: u64) -> Option<&BlockOutcome> {
        self.blocks.iter().find(|b| b.slot == slot)
    }

    /// Average per-transaction bytes per recipient on the block and witness channels.
    pub fn per_tx_footprint(&self) -> (u64, u64) {
        let txs: u64 = self.blocks.iter().map(|b| b.txs as u64).sum();
        let recipients = (self.config.validators as u64).saturating_sub(1).max(1);
        if txs == 0 {
            return (0, 0);
        }
        let headers = (self.blocks.len() * HEADER_LEN) as u64;
        let block = (self.channels.block.bytes / recipients).saturating_sub(headers) / txs;
        let witness = self.channels.witness.bytes / recipients / txs;
        (block, witness)
    }

    /// Scenario-specific expectations; empty when they all hold.
    pub fn check(&self) -> Vec<String> {
        let mut fails = self.safety_violations.clone();
        let cfg = &self.config;
        let target = cfg.target_slot;
        let rollback_at = cfg.finality.backup_deadline_ms();
        if self.max_votes_per_validator_slot > 1 {
            fails.push(format!(
                "{} votes from one validator in one slot",
                self.max_votes_per_validator_slot
            ));
        }
        for b in &self.blocks {
            if b.availability == Some(true) && b.status == Some(FinalityStatus::RolledBack) {
                fails.push(format!(
                    "slot {}: rolled back although witnesses were available",
                    b.slot
                ));
            }
        }
        let all_hard_except = |skip: Option<u64>, fails: &mut Vec<String>| {
            for b in self.blocks.iter().filter(|b| Some(b.slot) != skip) {
                if b.status != Some(FinalityStatus::Hard) {
                    fails.push(format!("slot {}: expected Hard, got {}", b.slot, opt(&b.status)));
                }
            }
        };
        let target_block = self.block(target);
        let need_target = |fails: &mut Vec<String>| {
            if target_block.is_none() {
                fails.push(format!("target slot {target} was not produced"));
            }
        };
        match self.scenario {
            Scenario::Normal => {
                all_hard_except(None, &mut fails);
                let expected = cfg.expected_hard_ms();
                let within = self.hard_within(expected, 50);
                if within * 100 < self.blocks.len() * 95 {
                    fails.push(format!(
                        "only {within}/{} blocks hard within {expected}±50 ms",
                        self.blocks.len()
                    ));
                }
            }
            Scenario::BuilderWithholdsProof => {
                need_target(&mut fails);
                all_hard_except(None, &mut fails);
                if let Some(b) = target_block {
                    if !(b.via_backup && b.slashed && b.hard_ms.is_some_and(|h| h <= rollback_at)) {
                        fails.push(format!(
                            "slot {target}: expected slashed backup Hard within {rollback_at} ms"
                        ));
                    }
                }
            }
            Scenario::BackupProves => {
                all_hard_except(None, &mut fails);
                for b in &self.blocks {
                    if !(b.via_backup && b.slashed && b.hard_ms.is_some_and(|h| h <= rollback_at)) {
                        fails.push(format!("slot {}: expected slashed backup Hard", b.slot));
                    }
                }
            }
            Scenario::WitnessShortfallRollback => {
                need_target(&mut fails);
                all_hard_except(Some(target), &mut fails);
                if let Some(b) = target_block {
                    if b.status != Some(FinalityStatus::RolledBack) || b.rolled_back_ms != Some(rollback_at) {
                        fails.push(format!("slot {target}: expected RolledBack at {rollback_at} ms"));
                    }
                    if b.requeued != b.txs || !b.slashed {
                        fails.push(format!(
                            "slot {target}: expected all {} txs requeued and builder slashed",
                            b.txs
                        ));
                    }
                }
            }
            Scenario::InvalidFcSlash => {
                need_target(&mut fails);
                all_hard_except(Some(target), &mut fails);
                if let Some(b) = target_block {
                    if b.status != Some(FinalityStatus::RolledBack) || !b.slashed {
                        fails.push(format!("slot {target}: expected RolledBack and slashed"));
                    }
                }
            }
            Scenario::ForgedAttestationFlood => {
                need_target(&mut fails);
                if self.forged_hard > 0 {
                    fails.push(format!("{} forged transactions reached Hard", self.forged_hard));
                }
                if let Some(b) = target_block {
                    if b.forged_txs == 0 || b.status != Some(FinalityStatus::RolledBack) {
                        fails.push(format!(
                            "slot {target}: expected forged txs included and block rolled back"
                        ));
                    }
                }
            }
        }
        fails
    }

    pub fn render(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario={} seed={} validators={} slots={} txs_per_slot={} k={} k_prime={} slot_ms={} \
             latency_ms={} jitter_ms={} drop={} witness_schedule={} bundle_bytes={}",
            self.scenario,
            self.seed,
            c.validators,
            c.slots,
            c.txs_per_slot,
            c.finality.k,
            c.finality.k_prime,
            c.finality.slot_duration_ms,
            c.network.base_latency_ms,
            c.network.jitter_ms,
            c.network.drop_probability,
            c.witness_schedule,
            c.bundle_bytes
        );
        for b in &self.blocks {
            let _ = writeln!(
                out,
                "block slot={} leader={} txs={} forged={} published_ms={} soft_ms={} hard_ms={} rolled_back_ms={} \
                 status={} via={} slashed={} holders={} available={} requeued={} builder_error={} backup_error={}",
                b.slot,
                b.leader,
                b.txs,
                b.forged_txs,
                b.published_ms,
                opt(&b.soft_ms),
                opt(&b.hard_ms),
                opt(&b.rolled_back_ms),
                b.status.map_or("mixed", FinalityStatus::name),
                if b.via_backup { "backup" } else { "builder" },
                b.slashed,
                opt(&b.holders_at_backup_start),
                opt(&b.availability),
                b.requeued,
                b.builder_error.as_deref().map_or("-".into(), |e| e.replace(' ', "_")),
                b.backup_error.as_deref().map_or("-".into(), |e| e.replace(' ', "_")),
            );
        }
        for (slot, v, stake) in &self.slashes {
            let _ = writeln!(out, "slash slot={slot} validator={v} stake={stake}");
        }
        for (name, ch) in [
            ("block", self.channels.block),
            ("vote", self.channels.vote),
            ("fc", self.channels.fc),
            ("witness", self.channels.witness),
        ] {
            let _ = writeln!(out, "channel name={name} messages={} bytes={}", ch.messages, ch.bytes);
        }
        let (per_tx_block, per_tx_witness) = self.per_tx_footprint();
        let _ = writeln!(
            out,
            "footprint per_tx_block_bytes={per_tx_block} per_tx_witness_bytes={per_tx_witness} combined={}",
            per_tx_block + per_tx_witness
        );
        let count = |s: FinalityStatus| self.blocks.iter().filter(|b| b.status == Some(s)).count();
        let fails = self.check();
        let _ = writeln!(
            out,
            "summary blocks={} hard={} rolled_back={} other={} hard_within_600pm50={} max_votes_per_validator_slot={} \
             light_rejected={} forged_hard={} safety_violations={} checks={}",
            self.blocks.len(),
            count(FinalityStatus::Hard),
            count(FinalityStatus::RolledBack),
            self.blocks.len() - count(FinalityStatus::Hard) - count(FinalityStatus::RolledBack),
            self.hard_within(600, 50),
            self.max_votes_per_validator_slot,
            self.light_rejected,
            self.forged_hard,
            self.safety_violations.len(),
            if fails.is_empty() { "pass" } else { "fail" }
        );
        for f in fails {
            let _ = writeln!(out, "check_failed {f}");
        }
        out
    }

    pub fn render_audit(&self) -> String {
        let mut out = String::new();
        for line in &self.audit {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            slots: 6,
            txs_per_slot: 40,
            accounts_per_partition: 32,
            clients: 8,
            ..SimConfig::default()
        }
    }

    #[test]
    fn poh_chain() {
        let h0 = [7u8; 32];
        assert_eq!(poh_advance(h0, 0), h0);
        let h = poh_advance(h0, 1000);
        assert!(poh_verify(h0, h, 1000));
        assert!(!poh_verify(h0, h, 999));
        let mut chain = PohChain::new(h0, 64);
        chain.advance_to_slot(2);
        assert_eq!(chain.ticks(), 128);
        assert_eq!(chain.hash(), poh_advance(h0, 128));
    }

    #[test]
    fn election_edge_cases() {
        let seed = epoch_seed(0);
        assert_eq!(elect_leader(&[1; 32], &seed, &[([5; 32], 10)]), Ok(0));
        assert_eq!(elect_leader(&[1; 32], &seed, &[([5; 32], 0), ([6; 32], 3)]), Ok(1));
        assert_eq!(elect_leader(&[1; 32], &seed, &[]), Err(ElectionError::NoStake));
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("bogus".parse::<Scenario>().is_err());
    }

    #[test]
    fn small_runs_pass_their_checks() {
        for s in Scenario::ALL {
            let report = run_scenario(&small(), s, 5).unwrap();
            assert!(
                report.check().is_empty(),
                "{s}: {:?}\n{}",
                report.check(),
                report.render()
            );
        }
    }

    #[test]
    fn config_from_kv() {
        let kv = KeyValues::parse("slots = 7\nk = 2\nwitness_schedule = spread:3\nmax_txs_per_block = 50\n").unwrap();
        let c = SimConfig::from_kv(&kv).unwrap();
        assert_eq!((c.slots, c.finality.k, c.pipeline.max_txs_per_block), (7, 2, 50));
        assert_eq!(c.witness_schedule, WitnessSchedule::Spread(3));
        assert!(SimConfig::from_kv(&KeyValues::parse("bogus = 1").unwrap()).is_err());
    }

    #[test]
    fn config_rejects_tight_partitions() {
        let cfg = SimConfig {
            partitions: 6,
            ..small()
        };
        assert!(matches!(
            run_scenario(&cfg, Scenario::Normal, 1),
            Err(SimError::Config(_))
        ));
    }
}
