//! Byte-exact transaction, block and finality-certificate codecs.
//!
//! All integers are big-endian. A block is a 256-byte zero-padded header
//! followed by one length-prefixed record per transaction; a record is the
//! transaction payload followed by its 104-byte attestation. Blocks carry
//! no signatures and no proofs.

use rayon::prelude::*;
use thiserror::Error;

use crate::crypto::{sha256, sha256_concat, Attestation, ATTESTATION_LEN};

pub const HEADER_LEN: usize = 256;
/// Bytes of header fields before zero padding.
pub const HEADER_FIELDS_LEN: usize = 212;
pub const FC_LEN: usize = 328;
pub const PROOF_LEN: usize = 256;
pub const PAYLOAD_VERSION: u8 = 1;
/// Length prefix of each transaction record in a block body.
pub const RECORD_PREFIX_LEN: usize = 4;

const LEAF_TAG: u8 = 0x00;
const INNER_TAG: u8 = 0x01;
const PAR_MERKLE_THRESHOLD: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("input truncated: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("header declares {declared} transactions, body holds {found}")]
    TxCountMismatch { declared: u32, found: u32 },
    #[error("header padding is not zero")]
    NonZeroPadding,
    #[error("unsupported payload version {0}")]
    Version(u8),
    #[error("account writable flag must be 0 or 1, got {0}")]
    BadFlag(u8),
    #[error("unknown instruction tag {0}")]
    UnknownInstruction(u8),
    #[error("instruction body has wrong length for tag {tag}")]
    InstructionLength { tag: u8 },
    #[error("record length {0} is inconsistent with its payload")]
    RecordLength(u32),
    #[error("context tag must be 1..=255 bytes")]
    ContextTag,
    #[error("finality certificate must be {FC_LEN} bytes, got {0}")]
    FcLength(usize),
}

/// 32-byte account address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AccountId(pub [u8; 32]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccountMeta {
    pub id: AccountId,
    pub writable: bool,
}

impl AccountMeta {
    pub fn writable(id: AccountId) -> Self {
        AccountMeta { id, writable: true }
    }

    pub fn readonly(id: AccountId) -> Self {
        AccountMeta { id, writable: false }
    }
}

/// Toy instruction set; account operands index into the declared account list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Transfer { from: u8, to: u8, amount: u64, nonce: u64 },
    CreateAccount { account: u8, nonce: u64 },
    WriteData { account: u8, data: Vec<u8> },
    Mint { account: u8, amount: u64 },
}

impl Instruction {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut body = Vec::with_capacity(19);
        match self {
            Instruction::Transfer {
                from,
                to,
                amount,
                nonce,
            } => {
                body.extend_from_slice(&[1, *from, *to]);
                body.extend_from_slice(&amount.to_be_bytes());
                body.extend_from_slice(&nonce.to_be_bytes());
            }
            Instruction::CreateAccount { account, nonce } => {
                body.extend_from_slice(&[2, *account]);
                body.extend_from_slice(&nonce.to_be_bytes());
            }
            Instruction::WriteData { account, data } => {
                body.extend_from_slice(&[3, *account]);
                body.extend_from_slice(data);
            }
            Instruction::Mint { account, amount } => {
                body.extend_from_slice(&[4, *account]);
                body.extend_from_slice(&amount.to_be_bytes());
            }
        }
        out.extend_from_slice(&(body.len() as u16).to_be_bytes());
        out.extend_from_slice(&body);
    }

    fn decode(body: &[u8]) -> Result<Self, WireError> {
        let (&tag, rest) = body.split_first().ok_or(WireError::InstructionLength { tag: 0 })?;
        let u64_at = |b: &[u8]| u64::from_be_bytes(b.try_into().unwrap());
        let bad = WireError::InstructionLength { tag };
        match tag {
            1 if rest.len() == 18 => Ok(Instruction::Transfer {
                from: rest[0],
                to: rest[1],
                amount: u64_at(&rest[2..10]),
                nonce: u64_at(&rest[10..18]),
            }),
            2 if rest.len() == 9 => Ok(Instruction::CreateAccount {
                account: rest[0],
                nonce: u64_at(&rest[1..9]),
            }),
            3 if !rest.is_empty() => Ok(Instruction::WriteData {
                account: rest[0],
                data: rest[1..].to_vec(),
            }),
            4 if rest.len() == 9 => Ok(Instruction::Mint {
                account: rest[0],
                amount: u64_at(&rest[1..9]),
            }),
            1..=4 => Err(bad),
            other => Err(WireError::UnknownInstruction(other)),
        }
    }
}

/// The signed-over content of a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TxMessage {
    pub accounts: Vec<AccountMeta>,
    pub program_id: [u8; 32],
    pub recent_blockhash: [u8; 32],
    pub context_tag: Option<Vec<u8>>,
    pub instruction: Instruction,
}

impl TxMessage {
    /// Layout: `version | n_accounts | tag_len | n*(id, flag) | program_id |
    /// recent_blockhash | tag | u16 ix_len | ix`. A two-account transfer
    /// without a context tag encodes to 154 bytes.
    pub fn encode(&self) -> Vec<u8> {
        let tag = self.context_tag.as_deref().unwrap_or(&[]);
        assert!(self.accounts.len() <= u8::MAX as usize, "at most 255 accounts");
        assert!(tag.len() <= u8::MAX as usize, "context tag at most 255 bytes");
        let mut out = Vec::with_capacity(3 + self.accounts.len() * 33 + 64 + tag.len() + 24);
        out.extend_from_slice(&[PAYLOAD_VERSION, self.accounts.len() as u8, tag.len() as u8]);
        for meta in &self.accounts {
            out.extend_from_slice(&meta.id.0);
            out.push(meta.writable as u8);
        }
        out.extend_from_slice(&self.program_id);
        out.extend_from_slice(&self.recent_blockhash);
        out.extend_from_slice(tag);
        self.instruction.encode_into(&mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let [version, n_accounts, tag_len] = r.array::<3>()?;
        if version != PAYLOAD_VERSION {
            return Err(WireError::Version(version));
        }
        let mut accounts = Vec::with_capacity(n_accounts as usize);
        for _ in 0..n_accounts {
            let id = AccountId(r.array::<32>()?);
            let writable = match r.array::<1>()?[0] {
                0 => false,
                1 => true,
                f => return Err(WireError::BadFlag(f)),
            };
            accounts.push(AccountMeta { id, writable });
        }
        let program_id = r.array::<32>()?;
        let recent_blockhash = r.array::<32>()?;
        let context_tag = match tag_len {
            0 => None,
            n => Some(r.take(n as usize)?.to_vec()),
        };
        let ix_len = u16::from_be_bytes(r.array::<2>()?);
        let instruction = Instruction::decode(r.take(ix_len as usize)?)?;
        r.finish()?;
        Ok(TxMessage {
            accounts,
            program_id,
            recent_blockhash,
            context_tag,
            instruction,
        })
    }
}

/// A transaction: its message, the cached payload encoding and the attestation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    message: TxMessage,
    payload: Vec<u8>,
    attestation: Attestation,
}

impl Transaction {
    pub fn new(message: TxMessage, attestation: Attestation) -> Self {
        if let Some(tag) = &message.context_tag {
            assert!(!tag.is_empty(), "context tag must be non-empty when present");
        }
        let payload = message.encode();
        Transaction {
            message,
            payload,
            attestation,
        }
    }

    pub fn message(&self) -> &TxMessage {
        &self.message
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn attestation(&self) -> &Attestation {
        &self.attestation
    }

    pub fn context_tag(&self) -> Option<&[u8]> {
        self.message.context_tag.as_deref()
    }

    pub fn declared_accounts(&self) -> &[AccountMeta] {
        &self.message.accounts
    }

    /// SHA-256 of the payload; equals the attestation's obj_hash for honest transactions.
    pub fn tx_hash(&self) -> [u8; 32] {
        sha256(&self.payload)
    }

    /// Identity of the whole record (payload and attestation), used for mempool dedup.
    pub fn record_id(&self) -> [u8; 32] {
        sha256_concat(&[&self.payload, &self.attestation.encode()])
    }

    /// Bytes this transaction occupies in a block body, including its length prefix.
    pub fn record_len(&self) -> usize {
        RECORD_PREFIX_LEN + self.payload.len() + ATTESTATION_LEN
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let len = (self.payload.len() + ATTESTATION_LEN) as u32;
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.attestation.encode());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BlockHeader {
    pub slot_number: u64,
    pub parent_hash: [u8; 32],
    pub state_root: [u8; 32],
    pub tx_merkle_root: [u8; 32],
    pub attest_merkle_root: [u8; 32],
    pub poh_hash: [u8; 32],
    pub leader_id_com: [u8; 32],
    /// Simulated milliseconds.
    pub timestamp: u64,
    pub tx_count: u32,
}

impl BlockHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..8].copy_from_slice(&self.slot_number.to_be_bytes());
        out[8..40].copy_from_slice(&self.parent_hash);
        out[40..72].copy_from_slice(&self.state_root);
        out[72..104].copy_from_slice(&self.tx_merkle_root);
        out[104..136].copy_from_slice(&self.attest_merkle_root);
        out[136..168].copy_from_slice(&self.poh_hash);
        out[168..200].copy_from_slice(&self.leader_id_com);
        out[200..208].copy_from_slice(&self.timestamp.to_be_bytes());
        out[208..212].copy_from_slice(&self.tx_count.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8; HEADER_LEN]) -> Result<Self, WireError> {
        if bytes[HEADER_FIELDS_LEN..].iter().any(|&b| b != 0) {
            return Err(WireError::NonZeroPadding);
        }
        let h32 = |o: usize| -> [u8; 32] { bytes[o..o + 32].try_into().unwrap() };
        Ok(BlockHeader {
            slot_number: u64::from_be_bytes(bytes[0..8].try_into().unwrap()),
            parent_hash: h32(8),
            state_root: h32(40),
            tx_merkle_root: h32(72),
            attest_merkle_root: h32(104),
            poh_hash: h32(136),
            leader_id_com: h32(168),
            timestamp: u64::from_be_bytes(bytes[200..208].try_into().unwrap()),
            tx_count: u32::from_be_bytes(bytes[208..212].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn slot(&self) -> u64 {
        self.header.slot_number
    }

    pub fn hash(&self) -> [u8; 32] {
        block_hash(self)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.transactions.iter().map(Transaction::record_len).sum::<usize>()
    }

    /// Merkle leaves of the transaction tree: SHA-256 of each payload.
    pub fn tx_leaves(&self) -> Vec<[u8; 32]> {
        self.transactions.iter().map(Transaction::tx_hash).collect()
    }

    /// Merkle leaves of the attestation tree: SHA-256 of each encoded attestation.
    pub fn attest_leaves(&self) -> Vec<[u8; 32]> {
        self.transactions
            .iter()
            .map(|tx| sha256(&tx.attestation.encode()))
            .collect()
    }
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(block.encoded_len());
    out.extend_from_slice(&block.header.encode());
    for tx in &block.transactions {
        tx.encode_into(&mut out);
    }
    out
}

pub fn decode_block(bytes: &[u8]) -> Result<Block, WireError> {
    let mut r = Reader::new(bytes);
    let header = BlockHeader::decode(&r.array::<HEADER_LEN>()?)?;
    let mut transactions = Vec::new();
    while !r.is_empty() {
        if transactions.len() as u64 >= header.tx_count as u64 {
            return Err(WireError::TrailingBytes(r.remaining()));
        }
        let len = u32::from_be_bytes(r.array::<4>()?);
        if (len as usize) < ATTESTATION_LEN {
            return Err(WireError::RecordLength(len));
        }
        let record = r.take(len as usize)?;
        let (payload, att) = record.split_at(record.len() - ATTESTATION_LEN);
        let message = TxMessage::decode(payload)?;
        let attestation = Attestation::decode(att).expect("length checked above");
        transactions.push(Transaction {
            message,
            payload: payload.to_vec(),
            attestation,
        });
    }
    if transactions.len() as u64 != header.tx_count as u64 {
        return Err(WireError::TxCountMismatch {
            declared: header.tx_count,
            found: transactions.len() as u32,
        });
    }
    Ok(Block { header, transactions })
}

/// SHA-256 of the encoded header.
pub fn block_hash(block: &Block) -> [u8; 32] {
    sha256(&block.header.encode())
}

fn hash_leaf(leaf: &[u8; 32]) -> [u8; 32] {
    sha256_concat(&[&[LEAF_TAG], leaf])
}

fn hash_pair(pair: &[[u8; 32]]) -> [u8; 32] {
    let right = pair.get(1).unwrap_or(&pair[0]);
    sha256_concat(&[&[INNER_TAG], &pair[0], right])
}

/// Binary SHA-256 Merkle root with leaf/inner domain separation and the last
/// node duplicated on odd levels. The empty tree has the all-zero root.
pub fn merkle_root(leaves: &[[u8; 32]]) -> [u8; 32] {
    if leaves.is_empty() {
        return [0u8; 32];
    }
    let mut level: Vec<[u8; 32]> = if leaves.len() >= PAR_MERKLE_THRESHOLD {
        leaves.par_iter().map(hash_leaf).collect()
    } else {
        leaves.iter().map(hash_leaf).collect()
    };
    while level.len() > 1 {
        level = if level.len() >= PAR_MERKLE_THRESHOLD {
            level.par_chunks(2).map(hash_pair).collect()
        } else {
            level.chunks(2).map(hash_pair).collect()
        };
    }
    level[0]
}

/// Fixed-size certificate carrying the aggregated proof of one block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FinalityCertificate {
    pub block_hash: [u8; 32],
    pub slot_number: u64,
    pub proof: [u8; PROOF_LEN],
    pub public_inputs_commitment: [u8; 32],
}

pub fn encode_fc(fc: &FinalityCertificate) -> [u8; FC_LEN] {
    let mut out = [0u8; FC_LEN];
    out[0..32].copy_from_slice(&fc.block_hash);
    out[32..40].copy_from_slice(&fc.slot_number.to_be_bytes());
    out[40..296].copy_from_slice(&fc.proof);
    out[296..328].copy_from_slice(&fc.public_inputs_commitment);
    out
}

pub fn decode_fc(bytes: &[u8]) -> Result<FinalityCertificate, WireError> {
    if bytes.len() != FC_LEN {
        return Err(WireError::FcLength(bytes.len()));
    }
    Ok(FinalityCertificate {
        block_hash: bytes[0..32].try_into().unwrap(),
        slot_number: u64::from_be_bytes(bytes[32..40].try_into().unwrap()),
        proof: bytes[40..296].try_into().unwrap(),
        public_inputs_commitment: bytes[296..328].try_into().unwrap(),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    fn finish(&self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}
