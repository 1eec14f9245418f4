//! Mock proof pipeline: per-transaction hash-based proofs, pairwise tree
//! aggregation, finality certificates, witness bundles and backup proving.
//!
//! A mock proof is a 256-byte counter expansion of SHA-256 over a tag and a
//! public-input digest. Anyone can recompute it, so soundness of the mock
//! rests on [`prove_tx`] refusing to emit a proof unless the private witness
//! satisfies the relation the real circuit would enforce.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::{CryptoRng, RngCore};
use rayon::prelude::*;
use sharks::{Share, Sharks};
use thiserror::Error;

use crate::crypto::{id_commitment, sha256_concat, verify_attestation_full, Domain, Rev};
use crate::wire::{merkle_root, Block, FinalityCertificate, Instruction, Transaction, PROOF_LEN};

const TX_PROOF_TAG: &[u8] = b"ACE-MOCK-TX-PROOF";
const AGG_PROOF_TAG: &[u8] = b"ACE-MOCK-AGGREGATE";
const EMPTY_BLOCK_TAG: &[u8] = b"ACE-MOCK-EMPTY-BLOCK";
const BUNDLE_STREAM_TAG: &[u8] = b"ACE-WITNESS-BUNDLE";

/// Plaintext witness length: REV, identity salt, registration domain.
pub const WITNESS_LEN: usize = 72;
/// Bytes of a bundle on the wire besides its ciphertext (tx hash and threshold).
pub const BUNDLE_OVERHEAD: usize = 34;
pub const DEFAULT_BUNDLE_BYTES: usize = 400;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProverError {
    #[error("no witness for transaction {index}")]
    MissingWitness { index: usize },
    #[error("witness for transaction {index} does not satisfy the relation")]
    UnsatisfiedWitness { index: usize },
    #[error("cannot aggregate an empty proof list")]
    EmptyAggregation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MockProof {
    pub bytes: [u8; PROOF_LEN],
    pub public_inputs_digest: [u8; 32],
}

fn expand(seed: &[u8; 32]) -> [u8; PROOF_LEN] {
    let mut out = [0u8; PROOF_LEN];
    for (i, chunk) in out.chunks_mut(32).enumerate() {
        chunk.copy_from_slice(&sha256_concat(&[seed, &(i as u32).to_be_bytes()]));
    }
    out
}

impl MockProof {
    fn tagged(tag: &[u8], digest: [u8; 32]) -> Self {
        MockProof {
            bytes: expand(&sha256_concat(&[tag, &digest])),
            public_inputs_digest: digest,
        }
    }
}

/// The public inputs of one transaction's proof, each 32 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicInputs {
    pub id_com: [u8; 32],
    pub tx_hash: [u8; 32],
    pub domain: [u8; 32],
    pub target: [u8; 32],
    pub rp_com: [u8; 32],
}

impl PublicInputs {
    pub fn from_tx(tx: &Transaction) -> Self {
        let att = tx.attestation();
        let mut domain = [0u8; 32];
        domain[24..].copy_from_slice(&att.domain.encode());
        let target = match &tx.message().instruction {
            Instruction::Transfer { to, .. } => tx.declared_accounts().get(*to as usize).map_or([0; 32], |m| m.id.0),
            _ => [0; 32],
        };
        PublicInputs {
            id_com: att.id_com,
            tx_hash: tx.tx_hash(),
            domain,
            target,
            rp_com: [0; 32],
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        sha256_concat(&[&self.id_com, &self.tx_hash, &self.domain, &self.target, &self.rp_com])
    }
}

/// The private inputs a client hands to the builder.
#[derive(Clone, PartialEq, Eq)]
pub struct Witness {
    pub rev: Rev,
    pub salt: [u8; 32],
    pub registration_domain: Domain,
}

impl std::fmt::Debug for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Witness")
            .field("rev", &self.rev)
            .field("registration_domain", &self.registration_domain)
            .finish_non_exhaustive()
    }
}

impl Witness {
    pub fn encode(&self) -> [u8; WITNESS_LEN] {
        let mut out = [0u8; WITNESS_LEN];
        out[..32].copy_from_slice(self.rev.expose_secret());
        out[32..64].copy_from_slice(&self.salt);
        out[64..].copy_from_slice(&self.registration_domain.encode());
        out
    }

    pub fn decode(bytes: &[u8; WITNESS_LEN]) -> Self {
        Witness {
            rev: Rev::from_bytes(bytes[..32].try_into().unwrap()),
            salt: bytes[32..64].try_into().unwrap(),
            registration_domain: Domain::decode(bytes[64..].try_into().unwrap()),
        }
    }
}

/// Mock proof over public inputs, with no witness check. This is what a
/// verifier recomputes.
pub fn mock_tx_proof(public: &PublicInputs) -> MockProof {
    MockProof::tagged(TX_PROOF_TAG, public.digest())
}

/// Proves one transaction. The witness must open the transaction's identity
/// commitment and reproduce its attestation credential.
pub fn prove_tx(tx: &Transaction, witness: &Witness) -> Result<MockProof, ProverError> {
    let att = tx.attestation();
    let opened = id_commitment(&witness.rev, witness.salt, witness.registration_domain);
    if opened.bytes != att.id_com || verify_attestation_full(att, tx.payload(), &witness.rev).is_err() {
        return Err(ProverError::UnsatisfiedWitness { index: 0 });
    }
    Ok(mock_tx_proof(&PublicInputs::from_tx(tx)))
}

pub fn verify_tx_proof(tx: &Transaction, proof: &MockProof) -> bool {
    *proof == mock_tx_proof(&PublicInputs::from_tx(tx))
}

pub fn aggregate(a: &MockProof, b: &MockProof) -> MockProof {
    MockProof::tagged(AGG_PROOF_TAG, sha256_concat(&[&a.bytes, &b.bytes]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TreeStats {
    pub levels: u32,
    pub aggregations: u64,
}

/// Pairwise aggregation level by level; an odd last proof is promoted.
pub fn aggregate_tree(proofs: &[MockProof]) -> Result<(MockProof, TreeStats), ProverError> {
    if proofs.is_empty() {
        return Err(ProverError::EmptyAggregation);
    }
    let mut stats = TreeStats::default();
    let mut level = proofs.to_vec();
    while level.len() > 1 {
        let next: Vec<MockProof> = level
            .par_chunks(2)
            .map(|pair| match pair {
                [a, b] => aggregate(a, b),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
        stats.aggregations += (level.len() / 2) as u64;
        stats.levels += 1;
        level = next;
    }
    Ok((level.pop().unwrap(), stats))
}

/// Shape of the aggregation tree over `n ≥ 1` proofs, without hashing.
pub fn tree_stats(n: usize) -> TreeStats {
    assert!(n > 0);
    let mut stats = TreeStats::default();
    let mut len = n;
    while len > 1 {
        stats.aggregations += (len / 2) as u64;
        stats.levels += 1;
        len = len.div_ceil(2);
    }
    stats
}

/// ⌈log2 n⌉ for n ≥ 1.
pub fn aggregation_levels(n: usize) -> u32 {
    assert!(n > 0);
    usize::BITS - (n - 1).leading_zeros()
}

fn empty_block_proof(block: &Block) -> MockProof {
    MockProof::tagged(EMPTY_BLOCK_TAG, block.hash())
}

pub fn id_com_commitment(block: &Block) -> [u8; 32] {
    let leaves: Vec<[u8; 32]> = block.transactions.iter().map(|tx| tx.attestation().id_com).collect();
    merkle_root(&leaves)
}

pub fn build_finality_certificate(block: &Block, agg: &MockProof) -> FinalityCertificate {
    FinalityCertificate {
        block_hash: block.hash(),
        slot_number: block.slot(),
        proof: agg.bytes,
        public_inputs_commitment: id_com_commitment(block),
    }
}

/// Proof and aggregation counts, shared with whoever wants to observe prover work.
#[derive(Debug, Default)]
pub struct ProofCounter {
    proofs: AtomicU64,
    aggregations: AtomicU64,
}

impl ProofCounter {
    pub fn proofs(&self) -> u64 {
        self.proofs.load(Ordering::Relaxed)
    }

    pub fn aggregations(&self) -> u64 {
        self.aggregations.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockProofReport {
    pub proofs: u64,
    pub tree: TreeStats,
}

/// Proves every transaction with its witness, aggregates in block order and
/// emits the certificate.
pub fn prove_block(
    block: &Block,
    witnesses: &[Option<Witness>],
    counter: &ProofCounter,
) -> Result<(FinalityCertificate, BlockProofReport), ProverError> {
    assert_eq!(witnesses.len(), block.transactions.len());
    if block.transactions.is_empty() {
        let fc = build_finality_certificate(block, &empty_block_proof(block));
        return Ok((
            fc,
            BlockProofReport {
                proofs: 0,
                tree: TreeStats::default(),
            },
        ));
    }
    let proofs: Vec<MockProof> = block
        .transactions
        .par_iter()
        .zip(witnesses.par_iter())
        .enumerate()
        .map(|(index, (tx, w))| {
            let w = w.as_ref().ok_or(ProverError::MissingWitness { index })?;
            prove_tx(tx, w).map_err(|_| ProverError::UnsatisfiedWitness { index })
        })
        .collect::<Result<_, _>>()?;
    counter.proofs.fetch_add(proofs.len() as u64, Ordering::Relaxed);
    let (root, tree) = aggregate_tree(&proofs)?;
    counter.aggregations.fetch_add(tree.aggregations, Ordering::Relaxed);
    let report = BlockProofReport {
        proofs: proofs.len() as u64,
        tree,
    };
    Ok((build_finality_certificate(block, &root), report))
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FcInvalid {
    #[error("certificate slot does not match the block")]
    SlotMismatch,
    #[error("certificate block hash does not match the block")]
    HashMismatch,
    #[error("aggregated proof does not match the block's transactions")]
    ProofMismatch,
    #[error("public input commitment does not match the block")]
    CommitmentMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FcVerdict {
    Valid,
    Invalid(FcInvalid),
}

impl FcVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, FcVerdict::Valid)
    }
}

/// Recomputes the aggregated proof from the block's public inputs.
pub fn verify_finality_certificate(fc: &FinalityCertificate, block: &Block) -> FcVerdict {
    let invalid = |r| FcVerdict::Invalid(r);
    if fc.slot_number != block.slot() {
        return invalid(FcInvalid::SlotMismatch);
    }
    if fc.block_hash != block.hash() {
        return invalid(FcInvalid::HashMismatch);
    }
    if fc.public_inputs_commitment != id_com_commitment(block) {
        return invalid(FcInvalid::CommitmentMismatch);
    }
    let expected = if block.transactions.is_empty() {
        empty_block_proof(block)
    } else {
        let proofs: Vec<MockProof> = block
            .transactions
            .par_iter()
            .map(|tx| mock_tx_proof(&PublicInputs::from_tx(tx)))
            .collect();
        aggregate_tree(&proofs).expect("non-empty").0
    };
    if expected.bytes != fc.proof {
        return invalid(FcInvalid::ProofMismatch);
    }
    FcVerdict::Valid
}

/// Simulated prover and verifier latencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProverCostModel {
    pub per_proof_us: u64,
    pub parallel_provers: u64,
    pub per_level_us: u64,
    pub fc_verify_us: u64,
}

impl Default for ProverCostModel {
    /// 15 ms per proof at 128-way parallelism, 4 ms per aggregation level, 0.5 ms verify.
    fn default() -> Self {
        ProverCostModel {
            per_proof_us: 15_000,
            parallel_provers: 128,
            per_level_us: 4_000,
            fc_verify_us: 500,
        }
    }
}

impl ProverCostModel {
    pub fn proving_us(&self, n_txs: usize) -> u64 {
        if n_txs == 0 {
            return self.per_proof_us;
        }
        let rounds = (n_txs as u64).div_ceil(self.parallel_provers.max(1));
        rounds * self.per_proof_us + u64::from(aggregation_levels(n_txs)) * self.per_level_us
    }

    /// Verifier work in cost units: one pairing-check equivalent regardless of block size.
    pub fn verify_units(&self, _fc: &FinalityCertificate) -> u64 {
        1
    }

    pub fn verify_us(&self, fc: &FinalityCertificate) -> u64 {
        self.verify_units(fc) * self.fc_verify_us
    }
}

/// Witness material sealed for the validator committee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessBundle {
    pub tx_hash: [u8; 32],
    pub ciphertext: Vec<u8>,
    pub share_threshold: u16,
}

impl WitnessBundle {
    pub fn wire_len(&self) -> usize {
        BUNDLE_OVERHEAD + self.ciphertext.len()
    }
}

fn keystream_xor(key: &[u8; 32], tx_hash: &[u8; 32], data: &mut [u8]) {
    for (i, chunk) in data.chunks_mut(32).enumerate() {
        let block = sha256_concat(&[BUNDLE_STREAM_TAG, key, tx_hash, &(i as u32).to_be_bytes()]);
        for (d, k) in chunk.iter_mut().zip(block) {
            *d ^= k;
        }
    }
}

/// Threshold quorum ⌈2n/3⌉.
pub fn witness_threshold(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

/// A validator committee holding Shamir shares of the bundle key; any
/// ⌈2n/3⌉ members reconstruct it.
pub struct WitnessCommittee {
    key: [u8; 32],
    shares: Vec<Vec<u8>>,
    threshold: usize,
    bundle_bytes: usize,
}

impl std::fmt::Debug for WitnessCommittee {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WitnessCommittee")
            .field("members", &self.shares.len())
            .field("threshold", &self.threshold)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackupError {
    #[error("only {holders} of {threshold} required validators hold every bundle; {} missing", missing.len())]
    WitnessShortfall {
        missing: Vec<[u8; 32]>,
        holders: usize,
        threshold: usize,
    },
    #[error(transparent)]
    Prover(#[from] ProverError),
}

/// One validator's contribution to backup proving: its member index and the
/// bundles it holds, keyed by transaction hash.
#[derive(Debug, Clone, Copy)]
pub struct BackupView<'a> {
    pub member: usize,
    pub bundles: &'a HashMap<[u8; 32], WitnessBundle>,
}

#[derive(Debug, Clone)]
pub struct BackupOutcome {
    pub fc: FinalityCertificate,
    /// Members whose shares opened the bundles and thus saw plaintext witnesses.
    pub observers: Vec<usize>,
}

impl WitnessCommittee {
    pub fn new<R: RngCore + CryptoRng>(members: usize, bundle_bytes: usize, rng: &mut R) -> Self {
        assert!((1..=255).contains(&members), "committee size must be 1..=255");
        assert!(bundle_bytes >= BUNDLE_OVERHEAD + WITNESS_LEN);
        let threshold = witness_threshold(members);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let shares = Sharks(threshold as u8)
            .dealer_rng(&key, rng)
            .take(members)
            .map(|s| Vec::from(&s))
            .collect();
        WitnessCommittee {
            key,
            shares,
            threshold,
            bundle_bytes,
        }
    }

    pub fn members(&self) -> usize {
        self.shares.len()
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn share(&self, member: usize) -> &[u8] {
        &self.shares[member]
    }

    /// Encrypts a witness for the committee, padded to the configured bundle size.
    pub fn seal(&self, tx_hash: [u8; 32], witness: &Witness) -> WitnessBundle {
        let mut ciphertext = vec![0u8; self.bundle_bytes - BUNDLE_OVERHEAD];
        ciphertext[..WITNESS_LEN].copy_from_slice(&witness.encode());
        keystream_xor(&self.key, &tx_hash, &mut ciphertext);
        WitnessBundle {
            tx_hash,
            ciphertext,
            share_threshold: self.threshold as u16,
        }
    }

    /// Reconstructs the bundle key from the listed members' shares,
    /// interpolating as if `threshold` shares were enough.
    pub fn combine(&self, members: &[usize], threshold: usize) -> Option<[u8; 32]> {
        let shares: Vec<Share> = members
            .iter()
            .map(|&m| Share::try_from(self.shares[m].as_slice()).expect("well-formed share"))
            .collect();
        let key = Sharks(threshold as u8).recover(&shares).ok()?;
        key.try_into().ok()
    }

    pub fn open(key: &[u8; 32], bundle: &WitnessBundle) -> Witness {
        let mut plain = bundle.ciphertext.clone();
        keystream_xor(key, &bundle.tx_hash, &mut plain);
        Witness::decode(plain[..WITNESS_LEN].try_into().unwrap())
    }

    /// Quorum backup proving: needs ⌈2n/3⌉ members that each hold every
    /// bundle of the block.
    pub fn backup_prove(
        &self,
        block: &Block,
        views: &[BackupView<'_>],
        counter: &ProofCounter,
    ) -> Result<BackupOutcome, BackupError> {
        let hashes: Vec<[u8; 32]> = block.transactions.iter().map(Transaction::tx_hash).collect();
        let holders: BTreeSet<usize> = views
            .iter()
            .filter(|v| hashes.iter().all(|h| v.bundles.contains_key(h)))
            .map(|v| v.member)
            .collect();
        if holders.len() < self.threshold {
            let missing = hashes
                .iter()
                .filter(|h| views.iter().filter(|v| v.bundles.contains_key(*h)).count() < self.threshold)
                .copied()
                .collect();
            return Err(BackupError::WitnessShortfall {
                missing,
                holders: holders.len(),
                threshold: self.threshold,
            });
        }
        let observers: Vec<usize> = holders.into_iter().take(self.threshold).collect();
        let key = self
            .combine(&observers, self.threshold)
            .expect("threshold shares reconstruct the key");
        let source = views
            .iter()
            .find(|v| v.member == observers[0])
            .expect("observer has a view");
        let witnesses: Vec<Option<Witness>> = hashes
            .iter()
            .map(|h| Some(Self::open(&key, &source.bundles[h])))
            .collect();
        let (fc, _) = prove_block(block, &witnesses, counter)?;
        Ok(BackupOutcome { fc, observers })
    }
}

/// A block handed from slot processing to the prover.
#[derive(Debug, Clone)]
pub struct ProveJob {
    pub block: Block,
    pub witnesses: Vec<Option<Witness>>,
}

/// A background prover thread fed through a bounded queue.
pub struct ProverService {
    jobs: Option<SyncSender<ProveJob>>,
    results: Receiver<(u64, Result<FinalityCertificate, ProverError>)>,
    counter: Arc<ProofCounter>,
    handle: Option<JoinHandle<()>>,
}

impl ProverService {
    pub fn spawn(queue_depth: usize) -> Self {
        let (jobs, job_rx) = mpsc::sync_channel::<ProveJob>(queue_depth);
        let (res_tx, results) = mpsc::channel();
        let counter = Arc::new(ProofCounter::default());
        let worker_counter = Arc::clone(&counter);
        let handle = std::thread::spawn(move || {
            for job in job_rx {
                let out = prove_block(&job.block, &job.witnesses, &worker_counter).map(|(fc, _)| fc);
                if res_tx.send((job.block.slot(), out)).is_err() {
                    break;
                }
            }
        });
        ProverService {
            jobs: Some(jobs),
            results,
            counter,
            handle: Some(handle),
        }
    }

    pub fn queue(&self) -> &SyncSender<ProveJob> {
        self.jobs.as_ref().expect("service running")
    }

    pub fn counter(&self) -> &ProofCounter {
        &self.counter
    }

    /// Blocks until the next certificate (or failure) is ready.
    pub fn recv(&self) -> Option<(u64, Result<FinalityCertificate, ProverError>)> {
        self.results.recv().ok()
    }

    pub fn shutdown(mut self) {
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            h.join().expect("prover thread panicked");
        }
    }
}

impl Drop for ProverService {
    fn drop(&mut self) {
        self.jobs.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
