//! The per-slot attest / execute / build pipeline run by the slot leader,
//! and the matching replica-side block verification.
//!
//! Phase 1a is a structural attestation check (payload binding, identity
//! registry lookup, domain freshness). The HMAC credential is not
//! recomputed on the critical path; its correctness is established later by
//! the block proof. Proving is handed off through a queue and never runs
//! inside [`process_slot`].

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::mpsc::SyncSender;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::crypto::{sha256, Domain};
use crate::executor::{build_dependency_graph, execute_batch, state_root, AccountState, Parallelism, TxDelta};
use crate::prover::{ProveJob, Witness, WitnessBundle};
use crate::wire::{merkle_root, Block, BlockHeader, Transaction};

const PAR_CHECK_THRESHOLD: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub max_txs_per_block: usize,
    pub domain_window_slots: u64,
    pub slot_duration_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_txs_per_block: 2000,
            domain_window_slots: 2,
            slot_duration_ms: 400,
        }
    }
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 3] = ["max_txs_per_block", "domain_window_slots", "slot_duration_ms"];

    /// Defaults overridden by any of [`Self::KEYS`] present in `kv`.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        kv.read_into("max_txs_per_block", &mut cfg.max_txs_per_block)?;
        kv.read_into("domain_window_slots", &mut cfg.domain_window_slots)?;
        kv.read_into("slot_duration_ms", &mut cfg.slot_duration_ms)?;
        if cfg.slot_duration_ms == 0 {
            return Err(ConfigError::Invalid("slot_duration_ms must be positive".into()));
        }
        Ok(cfg)
    }
}

/// Registered identity commitments, loaded from genesis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdentityRegistry {
    ids: HashSet<[u8; 32]>,
}

impl IdentityRegistry {
    pub fn register(&mut self, id_com: [u8; 32]) {
        self.ids.insert(id_com);
    }

    pub fn contains(&self, id_com: &[u8; 32]) -> bool {
        self.ids.contains(id_com)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl FromIterator<[u8; 32]> for IdentityRegistry {
    fn from_iter<I: IntoIterator<Item = [u8; 32]>>(iter: I) -> Self {
        IdentityRegistry {
            ids: iter.into_iter().collect(),
        }
    }
}

/// FIFO transaction pool plus the identity registry and witness material.
#[derive(Debug, Default)]
pub struct Mempool {
    pending: VecDeque<Transaction>,
    pending_ids: HashSet<[u8; 32]>,
    pub registry: IdentityRegistry,
    /// Encrypted witness bundles by transaction hash, for gossip and backup proving.
    pub witness_store: HashMap<[u8; 32], WitnessBundle>,
    /// Plaintext witnesses handed to the builder by clients, by transaction hash.
    witnesses: HashMap<[u8; 32], Witness>,
}

impl Mempool {
    pub fn new(registry: IdentityRegistry) -> Self {
        Mempool {
            registry,
            ..Default::default()
        }
    }

    /// Queues `tx` unless an identical record is already pending.
    pub fn submit(&mut self, tx: Transaction) -> bool {
        if !self.pending_ids.insert(tx.record_id()) {
            return false;
        }
        self.pending.push_back(tx);
        true
    }

    pub fn submit_with_witness(&mut self, tx: Transaction, witness: Witness, bundle: Option<WitnessBundle>) -> bool {
        let h = tx.tx_hash();
        self.witnesses.insert(h, witness);
        if let Some(b) = bundle {
            self.witness_store.insert(h, b);
        }
        self.submit(tx)
    }

    /// Pops up to `max` transactions in arrival order.
    pub fn select(&mut self, max: usize) -> Vec<Transaction> {
        let n = max.min(self.pending.len());
        let out: Vec<Transaction> = self.pending.drain(..n).collect();
        for tx in &out {
            self.pending_ids.remove(&tx.record_id());
        }
        out
    }

    /// Puts transactions of a rolled-back block back at the head of the queue,
    /// preserving their order. Records already pending are not duplicated.
    pub fn requeue(&mut self, txs: &[Transaction]) -> usize {
        let mut fresh = Vec::new();
        for tx in txs {
            if self.pending_ids.insert(tx.record_id()) {
                fresh.push(tx.clone());
            }
        }
        let n = fresh.len();
        for tx in fresh.into_iter().rev() {
            self.pending.push_front(tx);
        }
        n
    }

    pub fn witness(&self, tx_hash: &[u8; 32]) -> Option<&Witness> {
        self.witnesses.get(tx_hash)
    }

    pub fn provide_witness(&mut self, tx_hash: [u8; 32], witness: Witness) {
        self.witnesses.insert(tx_hash, witness);
    }

    /// Drops witness material for a transaction that no longer needs proving.
    pub fn forget_witness(&mut self, tx_hash: &[u8; 32]) {
        self.witnesses.remove(tx_hash);
        self.witness_store.remove(tx_hash);
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter()
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LightReject {
    #[error("payload hash does not match the attestation")]
    PayloadBinding,
    #[error("identity commitment is not registered")]
    UnknownIdentity,
    #[error("attestation domain is outside the accepted chain/slot window")]
    StaleDomain,
}

/// The chain and slot window an attestation domain must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainWindow {
    pub chain_id: u16,
    pub slot: u64,
    pub window: u64,
}

impl DomainWindow {
    pub fn accepts(&self, domain: &Domain) -> bool {
        domain.chain_id() == self.chain_id && domain.slot().abs_diff(self.slot) <= self.window
    }
}

/// Outcome of a passing light check: accepted, full verification deferred to the proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceptPendingProof;

/// Payload binding, identity existence and domain freshness. One hash and
/// at most one registry probe per transaction.
pub fn attest_check_light(
    tx: &Transaction,
    registry: &IdentityRegistry,
    window: &DomainWindow,
) -> Result<AcceptPendingProof, LightReject> {
    let att = tx.attestation();
    if sha256(tx.payload()) != att.obj_hash {
        return Err(LightReject::PayloadBinding);
    }
    if !registry.contains(&att.id_com) {
        return Err(LightReject::UnknownIdentity);
    }
    if !window.accepts(&att.domain) {
        return Err(LightReject::StaleDomain);
    }
    Ok(AcceptPendingProof)
}

/// Work counters for Phase 1a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub payload_hashes: u64,
    pub registry_probes: u64,
}

/// Phase 1a over a batch; parallel above a small threshold.
pub fn light_check_batch(
    txs: &[Transaction],
    registry: &IdentityRegistry,
    window: &DomainWindow,
) -> (Vec<Result<AcceptPendingProof, LightReject>>, OpCounts) {
    let verdicts: Vec<_> = if txs.len() >= PAR_CHECK_THRESHOLD {
        txs.par_iter()
            .map(|tx| attest_check_light(tx, registry, window))
            .collect()
    } else {
        txs.iter().map(|tx| attest_check_light(tx, registry, window)).collect()
    };
    let probes = verdicts
        .iter()
        .filter(|v| !matches!(v, Err(LightReject::PayloadBinding)))
        .count() as u64;
    let counts = OpCounts {
        payload_hashes: txs.len() as u64,
        registry_probes: probes,
    };
    (verdicts, counts)
}

/// Wall-clock time spent in each phase of [`process_slot`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseTimings {
    pub select: Duration,
    pub attest_check: Duration,
    pub execute: Duration,
    pub state_root: Duration,
    pub block_build: Duration,
    pub total: Duration,
}

/// Simulated critical-path cost model for one slot, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseCostModel {
    pub attest_check_us_per_tx: u64,
    pub execute_us_per_tx: u64,
    /// Independent execution lanes the per-tx costs are spread over.
    pub execution_lanes: u64,
    pub block_publish_us: u64,
}

impl Default for PhaseCostModel {
    /// Upper ends of the per-stage latencies: 5 us attest, 50 us execute, 50 ms publish.
    fn default() -> Self {
        PhaseCostModel {
            attest_check_us_per_tx: 5,
            execute_us_per_tx: 50,
            execution_lanes: 1,
            block_publish_us: 50_000,
        }
    }
}

impl PhaseCostModel {
    pub fn attest_check_us(&self, n_txs: u64) -> u64 {
        (n_txs * self.attest_check_us_per_tx).div_ceil(self.execution_lanes.max(1))
    }

    pub fn execute_us(&self, n_txs: u64) -> u64 {
        (n_txs * self.execute_us_per_tx).div_ceil(self.execution_lanes.max(1))
    }

    /// Attest check plus execution; what a leader or a re-executing replica spends.
    pub fn phase1_us(&self, n_txs: u64) -> u64 {
        self.attest_check_us(n_txs) + self.execute_us(n_txs)
    }
}

/// Inputs of one slot that come from consensus rather than the mempool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotContext {
    pub slot: u64,
    pub chain_id: u16,
    pub parent_hash: [u8; 32],
    pub poh_hash: [u8; 32],
    pub leader_id_com: [u8; 32],
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone)]
pub struct SlotResult {
    pub block: Block,
    pub rejected: Vec<(Transaction, LightReject)>,
    pub deltas: Vec<TxDelta>,
    pub selected: usize,
    pub ops: OpCounts,
    pub timings: PhaseTimings,
    /// Simulated critical-path microseconds (attest, execute, publish).
    pub simulated_us: u64,
    pub enqueued_for_proving: bool,
}

/// Leader-side slot processing: select, light-check, execute, build the
/// block and hand it to the prover queue. The state is advanced in place.
pub fn process_slot(
    ctx: &SlotContext,
    mempool: &mut Mempool,
    state: &mut AccountState,
    config: &PipelineConfig,
    prover: Option<&SyncSender<ProveJob>>,
) -> SlotResult {
    assert!(
        ctx.slot <= crate::crypto::MAX_DOMAIN_SLOT,
        "slot must fit the 48-bit domain field"
    );
    let started = Instant::now();
    let mut timings = PhaseTimings::default();

    let t = Instant::now();
    let selected = mempool.select(config.max_txs_per_block);
    let n_selected = selected.len();
    timings.select = t.elapsed();

    let t = Instant::now();
    let window = DomainWindow {
        chain_id: ctx.chain_id,
        slot: ctx.slot,
        window: config.domain_window_slots,
    };
    let (verdicts, ops) = light_check_batch(&selected, &mempool.registry, &window);
    let mut accepted = Vec::with_capacity(n_selected);
    let mut rejected = Vec::new();
    for (tx, verdict) in selected.into_iter().zip(verdicts) {
        match verdict {
            Ok(AcceptPendingProof) => accepted.push(tx),
            Err(reason) => rejected.push((tx, reason)),
        }
    }
    timings.attest_check = t.elapsed();

    let t = Instant::now();
    let graph = build_dependency_graph(&accepted);
    let (next, deltas) = execute_batch(state, &accepted, &graph, Parallelism::Global);
    *state = next;
    timings.execute = t.elapsed();

    let t = Instant::now();
    let root = state_root(state);
    timings.state_root = t.elapsed();

    let t = Instant::now();
    // obj_hash equals SHA-256(payload) for every accepted transaction
    let tx_leaves: Vec<[u8; 32]> = accepted.iter().map(|tx| tx.attestation().obj_hash).collect();
    let attest_leaves: Vec<[u8; 32]> = accepted.iter().map(|tx| sha256(&tx.attestation().encode())).collect();
    let header = BlockHeader {
        slot_number: ctx.slot,
        parent_hash: ctx.parent_hash,
        state_root: root,
        tx_merkle_root: merkle_root(&tx_leaves),
        attest_merkle_root: merkle_root(&attest_leaves),
        poh_hash: ctx.poh_hash,
        leader_id_com: ctx.leader_id_com,
        timestamp: ctx.timestamp_ms,
        tx_count: accepted.len() as u32,
    };
    let block = Block {
        header,
        transactions: accepted,
    };
    timings.block_build = t.elapsed();

    let enqueued_for_proving = match prover {
        Some(queue) => {
            let witnesses = block
                .transactions
                .iter()
                .map(|tx| mempool.witness(&tx.tx_hash()).cloned())
                .collect();
            queue
                .send(ProveJob {
                    block: block.clone(),
                    witnesses,
                })
                .is_ok()
        }
        None => false,
    };
    timings.total = started.elapsed();

    let cost = PhaseCostModel::default();
    SlotResult {
        simulated_us: cost.phase1_us(n_selected as u64) + cost.block_publish_us,
        block,
        rejected,
        deltas,
        selected: n_selected,
        ops,
        timings,
        enqueued_for_proving,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicaReject {
    #[error("header tx_count does not match the body")]
    TxCount,
    #[error("transaction Merkle root mismatch")]
    TxRootMismatch,
    #[error("attestation Merkle root mismatch")]
    AttestRootMismatch,
    #[error("transaction {index} failed the attestation check: {reason}")]
    AttestFailure { index: usize, reason: LightReject },
    #[error("re-executed state root does not match the header")]
    StateRootMismatch,
}

/// A replica's vote-worthy outcome: the post-state and per-transaction deltas.
#[derive(Debug, Clone)]
pub struct ReplicaVote {
    pub post_state: AccountState,
    pub deltas: Vec<TxDelta>,
}

/// Recomputes both Merkle roots, re-runs the light check on every
/// transaction and re-executes against `state`.
pub fn replica_verify_block(
    block: &Block,
    registry: &IdentityRegistry,
    state: &AccountState,
    chain_id: u16,
    config: &PipelineConfig,
) -> Result<ReplicaVote, ReplicaReject> {
    if block.header.tx_count as usize != block.transactions.len() {
        return Err(ReplicaReject::TxCount);
    }
    if merkle_root(&block.tx_leaves()) != block.header.tx_merkle_root {
        return Err(ReplicaReject::TxRootMismatch);
    }
    if merkle_root(&block.attest_leaves()) != block.header.attest_merkle_root {
        return Err(ReplicaReject::AttestRootMismatch);
    }
    let window = DomainWindow {
        chain_id,
        slot: block.slot(),
        window: config.domain_window_slots,
    };
    let (verdicts, _) = light_check_batch(&block.transactions, registry, &window);
    if let Some((index, reason)) = verdicts.iter().enumerate().find_map(|(i, v)| v.err().map(|r| (i, r))) {
        return Err(ReplicaReject::AttestFailure { index, reason });
    }
    let graph = build_dependency_graph(&block.transactions);
    let (post_state, deltas) = execute_batch(state, &block.transactions, &graph, Parallelism::Global);
    if state_root(&post_state) != block.header.state_root {
        return Err(ReplicaReject::StateRootMismatch);
    }
    Ok(ReplicaVote { post_state, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Workload;

    fn ctx(slot: u64) -> SlotContext {
        SlotContext {
            slot,
            chain_id: Workload::CHAIN_ID,
            parent_hash: [1; 32],
            poh_hash: [2; 32],
            leader_id_com: [3; 32],
            timestamp_ms: slot * 400,
        }
    }

    #[test]
    fn honest_tx_passes_light_check() {
        let mut f = Workload::new(0, 4, 8);
        let tx = f.transfer(0, 1, 1, 10);
        let window = DomainWindow {
            chain_id: Workload::CHAIN_ID,
            slot: 10,
            window: 2,
        };
        assert_eq!(attest_check_light(&tx, &f.registry(), &window), Ok(AcceptPendingProof));
    }

    #[test]
    fn light_check_rejections() {
        let mut f = Workload::new(0, 4, 8);
        let registry = f.registry();
        let window = DomainWindow {
            chain_id: Workload::CHAIN_ID,
            slot: 10,
            window: 2,
        };

        let tx = f.transfer(0, 1, 1, 10);
        let mut msg = tx.message().clone();
        if let crate::wire::Instruction::Transfer { amount, .. } = &mut msg.instruction {
            *amount += 1;
        }
        let mutated = Transaction::new(msg, *tx.attestation());
        assert_eq!(
            attest_check_light(&mutated, &registry, &window),
            Err(LightReject::PayloadBinding)
        );

        let stranger = f.transfer_unregistered(0, 1, 10);
        assert_eq!(
            attest_check_light(&stranger, &registry, &window),
            Err(LightReject::UnknownIdentity)
        );

        let stale = f.transfer(0, 1, 1, 7);
        assert_eq!(
            attest_check_light(&stale, &registry, &window),
            Err(LightReject::StaleDomain)
        );
        let edge = f.transfer(0, 1, 1, 8);
        assert!(attest_check_light(&edge, &registry, &window).is_ok());
        let wrong_chain = DomainWindow { chain_id: 99, ..window };
        assert_eq!(
            attest_check_light(&edge, &registry, &wrong_chain),
            Err(LightReject::StaleDomain)
        );
    }

    #[test]
    fn selection_is_fifo_and_bounded() {
        let mut f = Workload::new(0, 4, 8);
        let mut pool = Mempool::new(f.registry());
        let txs: Vec<_> = (0..5).map(|i| f.transfer(0, 1, i, 1)).collect();
        for tx in &txs {
            assert!(pool.submit(tx.clone()));
        }
        assert!(!pool.submit(txs[0].clone()));
        assert_eq!(pool.select(3), txs[..3].to_vec());
        assert_eq!(pool.requeue(&txs[..2]), 2);
        assert_eq!(pool.requeue(&txs[..2]), 0);
        assert_eq!(
            pool.select(10),
            vec![txs[0].clone(), txs[1].clone(), txs[3].clone(), txs[4].clone()]
        );
    }

    #[test]
    fn slot_with_forged_transactions() {
        let mut f = Workload::new(0, 16, 32);
        let mut pool = Mempool::new(f.registry());
        for i in 0..10 {
            pool.submit(f.transfer(i, i + 16, i as u64, 1));
        }
        for i in 0..5 {
            let tx = f.transfer(i, i + 16, 100 + i as u64, 1);
            let mut att = *tx.attestation();
            att.obj_hash[0] ^= 0xFF;
            pool.submit(Transaction::new(tx.message().clone(), att));
        }
        let mut state = f.state.clone();
        let res = process_slot(&ctx(1), &mut pool, &mut state, &PipelineConfig::default(), None);
        assert_eq!(res.block.transactions.len(), 10);
        assert_eq!(res.rejected.len(), 5);
        assert!(res.rejected.iter().all(|(_, r)| *r == LightReject::PayloadBinding));
        assert_eq!(res.block.header.tx_count as usize + res.rejected.len(), res.selected);
    }

    #[test]
    fn empty_slot_builds_header_only_block() {
        let f = Workload::new(0, 2, 4);
        let mut pool = Mempool::new(f.registry());
        let mut state = f.state.clone();
        let res = process_slot(&ctx(3), &mut pool, &mut state, &PipelineConfig::default(), None);
        assert!(res.block.transactions.is_empty());
        assert_eq!(crate::wire::encode_block(&res.block).len(), 256);
        assert_eq!(res.block.header.tx_merkle_root, [0; 32]);
    }

    #[test]
    fn replica_votes_on_honest_block_and_rejects_tampering() {
        let mut f = Workload::new(0, 8, 16);
        let mut pool = Mempool::new(f.registry());
        for i in 0..8 {
            pool.submit(f.transfer(i, i + 8, 1, 5));
        }
        let pre = f.state.clone();
        let mut state = pre.clone();
        let cfg = PipelineConfig::default();
        let block = process_slot(&ctx(5), &mut pool, &mut state, &cfg, None).block;
        let registry = f.registry();

        let vote = replica_verify_block(&block, &registry, &pre, Workload::CHAIN_ID, &cfg).unwrap();
        assert_eq!(vote.post_state, state);

        let mut swapped = block.clone();
        let a = *swapped.transactions[0].attestation();
        let b = *swapped.transactions[1].attestation();
        swapped.transactions[0] = Transaction::new(swapped.transactions[0].message().clone(), b);
        swapped.transactions[1] = Transaction::new(swapped.transactions[1].message().clone(), a);
        assert_eq!(
            replica_verify_block(&swapped, &registry, &pre, Workload::CHAIN_ID, &cfg).unwrap_err(),
            ReplicaReject::AttestRootMismatch
        );
        swapped.header.attest_merkle_root = merkle_root(&swapped.attest_leaves());
        assert!(matches!(
            replica_verify_block(&swapped, &registry, &pre, Workload::CHAIN_ID, &cfg).unwrap_err(),
            ReplicaReject::AttestFailure {
                index: 0,
                reason: LightReject::PayloadBinding
            }
        ));

        let mut tampered = block.clone();
        tampered.header.state_root[0] ^= 1;
        assert_eq!(
            replica_verify_block(&tampered, &registry, &pre, Workload::CHAIN_ID, &cfg).unwrap_err(),
            ReplicaReject::StateRootMismatch
        );
    }
}
