//! Conflict-aware parallel execution over an in-memory account state.
//!
//! Transactions declare the accounts they touch. Two transactions conflict
//! when they share an account and at least one of them writes it. A
//! transaction carrying a context tag whose declared accounts all live in
//! its context-derived address space is *context-confined*; confined
//! transactions from different address spaces are never compared.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::crypto::{sha256, sha256_concat};
use crate::wire::{merkle_root, AccountId, Instruction, Transaction};

/// Length of the context-derived account address prefix.
pub const CONTEXT_PREFIX_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Account {
    pub balance: u64,
    pub data: Vec<u8>,
    pub owner_context: Option<Vec<u8>>,
}

impl Account {
    pub fn with_balance(balance: u64) -> Self {
        Account {
            balance,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccountState {
    accounts: BTreeMap<AccountId, Account>,
}

impl AccountState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &AccountId) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn insert(&mut self, id: AccountId, account: Account) {
        self.accounts.insert(id, account);
    }

    pub fn remove(&mut self, id: &AccountId) -> Option<Account> {
        self.accounts.remove(id)
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AccountId, &Account)> {
        self.accounts.iter()
    }

    pub fn total_balance(&self) -> u128 {
        self.accounts.values().map(|a| a.balance as u128).sum()
    }

    /// Applies post-images from `delta`; a `None` post-image removes the account.
    pub fn apply(&mut self, delta: &TxDelta) {
        for (id, post) in &delta.changes {
            match post {
                Some(acc) => self.accounts.insert(*id, acc.clone()),
                None => self.accounts.remove(id),
            };
        }
    }
}

impl FromIterator<(AccountId, Account)> for AccountState {
    fn from_iter<I: IntoIterator<Item = (AccountId, Account)>>(iter: I) -> Self {
        AccountState {
            accounts: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Hash)]
pub enum TxFailure {
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("account does not exist")]
    MissingAccount,
    #[error("account already exists")]
    AccountExists,
    #[error("instruction references undeclared account index {0}")]
    BadAccountIndex(u8),
    #[error("instruction writes a read-only account")]
    WriteToReadonly,
    #[error("balance overflow")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TxStatus {
    Applied,
    Failed(TxFailure),
}

/// State changes of one transaction as post-images of the touched accounts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxDelta {
    pub index: usize,
    pub status: TxStatus,
    pub changes: Vec<(AccountId, Option<Account>)>,
}

/// `SHA-256(id_com || context_tag)[..16]`: every account of a context's
/// address space starts with this prefix.
pub fn context_prefix(id_com: &[u8; 32], context_tag: &[u8]) -> [u8; CONTEXT_PREFIX_LEN] {
    sha256_concat(&[id_com, context_tag])[..CONTEXT_PREFIX_LEN]
        .try_into()
        .unwrap()
}

/// An account address inside a context's address space.
pub fn context_account(id_com: &[u8; 32], context_tag: &[u8], suffix: [u8; 16]) -> AccountId {
    let mut id = [0u8; 32];
    id[..CONTEXT_PREFIX_LEN].copy_from_slice(&context_prefix(id_com, context_tag));
    id[CONTEXT_PREFIX_LEN..].copy_from_slice(&suffix);
    AccountId(id)
}

/// The address-space prefix of `tx` when every declared account lies inside
/// the address space of its context tag.
pub fn confined_context(tx: &Transaction) -> Option<[u8; CONTEXT_PREFIX_LEN]> {
    let tag = tx.context_tag()?;
    let prefix = context_prefix(&tx.attestation().id_com, tag);
    tx.declared_accounts()
        .iter()
        .all(|m| m.id.0[..CONTEXT_PREFIX_LEN] == prefix)
        .then_some(prefix)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    len: usize,
    /// Conflict edges `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    confinement: Vec<Option<[u8; CONTEXT_PREFIX_LEN]>>,
}

impl DependencyGraph {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    /// Whether the pair was cleared by context confinement without comparing account sets.
    pub fn fast_path(&self, a: usize, b: usize) -> bool {
        match (self.confinement[a], self.confinement[b]) {
            (Some(pa), Some(pb)) => pa != pb,
            _ => false,
        }
    }

    /// Number of transaction pairs cleared by the context fast path.
    pub fn fast_path_pairs(&self) -> usize {
        let mut per_space: HashMap<[u8; CONTEXT_PREFIX_LEN], usize> = HashMap::new();
        for p in self.confinement.iter().flatten() {
            *per_space.entry(*p).or_default() += 1;
        }
        let confined: usize = per_space.values().sum();
        let same_space: usize = per_space.values().map(|c| c * c).sum();
        (confined * confined - same_space) / 2
    }

    /// Execution wave of each transaction: one more than its latest conflicting predecessor.
    pub fn waves(&self) -> Vec<usize> {
        let mut wave = vec![0usize; self.len];
        // edges are sorted by (i, j); process by j so every predecessor is final.
        let mut by_target: Vec<(usize, usize)> = self.edges.iter().map(|&(i, j)| (j, i)).collect();
        by_target.sort_unstable();
        for (j, i) in by_target {
            wave[j] = wave[j].max(wave[i] + 1);
        }
        wave
    }
}

pub fn build_dependency_graph(txs: &[Transaction]) -> DependencyGraph {
    let confinement: Vec<_> = txs.iter().map(confined_context).collect();
    let mut accessors: HashMap<AccountId, Vec<(usize, bool)>> = HashMap::new();
    for (i, tx) in txs.iter().enumerate() {
        for meta in tx.declared_accounts() {
            let list = accessors.entry(meta.id).or_default();
            // an account declared twice by one tx counts once, writable if either is
            match list.last_mut() {
                Some((last, w)) if *last == i => *w |= meta.writable,
                _ => list.push((i, meta.writable)),
            }
        }
    }
    let mut edges = Vec::new();
    for list in accessors.values() {
        for (x, &(i, wi)) in list.iter().enumerate() {
            for &(j, wj) in &list[x + 1..] {
                if !(wi || wj) {
                    continue;
                }
                let cleared = matches!((confinement[i], confinement[j]), (Some(a), Some(b)) if a != b);
                if !cleared {
                    edges.push((i, j));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    DependencyGraph {
        len: txs.len(),
        edges,
        confinement,
    }
}

/// How many threads [`execute_batch`] may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// The global rayon pool.
    Global,
    /// A dedicated pool of this many threads.
    Threads(usize),
}

/// Executes `txs` so that the result equals sequential execution in block
/// order. Non-conflicting transactions of the same wave run concurrently.
pub fn execute_batch(
    state: &AccountState,
    txs: &[Transaction],
    graph: &DependencyGraph,
    parallelism: Parallelism,
) -> (AccountState, Vec<TxDelta>) {
    assert_eq!(graph.len(), txs.len(), "graph was built for a different batch");
    let waves = graph.waves();
    let n_waves = waves.iter().max().map_or(0, |w| w + 1);
    let mut by_wave: Vec<Vec<usize>> = vec![Vec::new(); n_waves];
    for (i, w) in waves.iter().enumerate() {
        by_wave[*w].push(i);
    }

    let mut next = state.clone();
    let mut deltas: Vec<Option<TxDelta>> = vec![None; txs.len()];
    let run = |next: &mut AccountState, deltas: &mut Vec<Option<TxDelta>>| {
        for wave in &by_wave {
            let snapshot = &*next;
            let results: Vec<TxDelta> = match parallelism {
                Parallelism::Sequential => wave.iter().map(|&i| execute_tx(snapshot, &txs[i], i)).collect(),
                _ => wave.par_iter().map(|&i| execute_tx(snapshot, &txs[i], i)).collect(),
            };
            for delta in results {
                next.apply(&delta);
                let idx = delta.index;
                deltas[idx] = Some(delta);
            }
        }
    };
    match parallelism {
        Parallelism::Threads(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool");
            pool.install(|| run(&mut next, &mut deltas));
        }
        _ => run(&mut next, &mut deltas),
    }
    let deltas = deltas.into_iter().map(|d| d.expect("every tx executed")).collect();
    (next, deltas)
}

/// Runs one transaction against `state` without mutating it.
pub fn execute_tx(state: &AccountState, tx: &Transaction, index: usize) -> TxDelta {
    match try_execute(state, tx) {
        Ok(changes) => TxDelta {
            index,
            status: TxStatus::Applied,
            changes,
        },
        Err(failure) => TxDelta {
            index,
            status: TxStatus::Failed(failure),
            changes: Vec::new(),
        },
    }
}

type Changes = Vec<(AccountId, Option<Account>)>;

fn try_execute(state: &AccountState, tx: &Transaction) -> Result<Changes, TxFailure> {
    let metas = tx.declared_accounts();
    let writable = |idx: u8| -> Result<AccountId, TxFailure> {
        let meta = metas.get(idx as usize).ok_or(TxFailure::BadAccountIndex(idx))?;
        if !meta.writable {
            return Err(TxFailure::WriteToReadonly);
        }
        Ok(meta.id)
    };
    let existing = |id: &AccountId| state.get(id).cloned().ok_or(TxFailure::MissingAccount);

    match &tx.message().instruction {
        Instruction::Transfer { from, to, amount, .. } => {
            let (from_id, to_id) = (writable(*from)?, writable(*to)?);
            let mut src = existing(&from_id)?;
            if src.balance < *amount {
                return Err(TxFailure::InsufficientBalance);
            }
            if from_id == to_id {
                return Ok(vec![(from_id, Some(src))]);
            }
            let mut dst = existing(&to_id)?;
            src.balance -= amount;
            dst.balance = dst.balance.checked_add(*amount).ok_or(TxFailure::Overflow)?;
            Ok(vec![(from_id, Some(src)), (to_id, Some(dst))])
        }
        Instruction::CreateAccount { account, .. } => {
            let id = writable(*account)?;
            if state.get(&id).is_some() {
                return Err(TxFailure::AccountExists);
            }
            let created = Account {
                owner_context: tx.context_tag().map(<[u8]>::to_vec),
                ..Default::default()
            };
            Ok(vec![(id, Some(created))])
        }
        Instruction::WriteData { account, data } => {
            let id = writable(*account)?;
            let mut acc = existing(&id)?;
            acc.data = data.clone();
            Ok(vec![(id, Some(acc))])
        }
        Instruction::Mint { account, amount } => {
            let id = writable(*account)?;
            let mut acc = existing(&id)?;
            acc.balance = acc.balance.checked_add(*amount).ok_or(TxFailure::Overflow)?;
            Ok(vec![(id, Some(acc))])
        }
    }
}

/// Merkle root over accounts sorted by id, leaf `SHA-256(id || balance || SHA-256(data))`.
pub fn state_root(state: &AccountState) -> [u8; 32] {
    let leaves: Vec<[u8; 32]> = state
        .iter()
        .map(|(id, acc)| {
            let owner = acc.owner_context.as_deref().map_or([0u8; 32], sha256);
            sha256_concat(&[&id.0, &acc.balance.to_be_bytes(), &sha256(&acc.data), &owner])
        })
        .collect();
    merkle_root(&leaves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Attestation, Domain};
    use crate::wire::{AccountMeta, TxMessage};

    fn id(b: u8) -> AccountId {
        AccountId([b; 32])
    }

    fn tx_with(accounts: Vec<AccountMeta>, ix: Instruction, tag: Option<&[u8]>, id_com: [u8; 32]) -> Transaction {
        let msg = TxMessage {
            accounts,
            program_id: [0; 32],
            recent_blockhash: [0; 32],
            context_tag: tag.map(<[u8]>::to_vec),
            instruction: ix,
        };
        let att = Attestation {
            obj_hash: sha256(&msg.encode()),
            id_com,
            domain: Domain::new(1, 0).unwrap(),
            credential: [0; 32],
        };
        Transaction::new(msg, att)
    }

    fn transfer(from: AccountId, to: AccountId, amount: u64) -> Transaction {
        tx_with(
            vec![AccountMeta::writable(from), AccountMeta::writable(to)],
            Instruction::Transfer {
                from: 0,
                to: 1,
                amount,
                nonce: 0,
            },
            None,
            [9; 32],
        )
    }

    fn read_x(x: AccountId, w: AccountId) -> Transaction {
        tx_with(
            vec![AccountMeta::readonly(x), AccountMeta::writable(w)],
            Instruction::WriteData {
                account: 1,
                data: vec![1],
            },
            None,
            [9; 32],
        )
    }

    #[test]
    fn write_read_conflict_has_edge() {
        let txs = vec![transfer(id(1), id(2), 1), read_x(id(1), id(3))];
        assert!(build_dependency_graph(&txs).has_edge(0, 1));
    }

    #[test]
    fn read_read_has_no_edge() {
        let txs = vec![read_x(id(1), id(2)), read_x(id(1), id(3))];
        let g = build_dependency_graph(&txs);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn context_fast_path_for_same_identity() {
        let idc = [7u8; 32];
        let t = context_account(&idc, b"treasury:0", [1; 16]);
        let t2 = context_account(&idc, b"treasury:0", [2; 16]);
        let p = context_account(&idc, b"payroll:0", [1; 16]);
        let p2 = context_account(&idc, b"payroll:0", [2; 16]);
        let ix = Instruction::Transfer {
            from: 0,
            to: 1,
            amount: 1,
            nonce: 0,
        };
        let a = tx_with(
            vec![AccountMeta::writable(t), AccountMeta::writable(t2)],
            ix.clone(),
            Some(b"treasury:0"),
            idc,
        );
        let b = tx_with(
            vec![AccountMeta::writable(p), AccountMeta::writable(p2)],
            ix,
            Some(b"payroll:0"),
            idc,
        );
        let g = build_dependency_graph(&[a, b]);
        assert!(!g.has_edge(0, 1));
        assert!(g.fast_path(0, 1));
        assert_eq!(g.fast_path_pairs(), 1);
    }

    #[test]
    fn global_account_disables_fast_path() {
        let idc = [7u8; 32];
        let t = context_account(&idc, b"treasury:0", [1; 16]);
        let p = context_account(&idc, b"payroll:0", [1; 16]);
        let system = id(0xEE);
        let ix = Instruction::Transfer {
            from: 0,
            to: 1,
            amount: 1,
            nonce: 0,
        };
        let a = tx_with(
            vec![AccountMeta::writable(t), AccountMeta::writable(system)],
            ix.clone(),
            Some(b"treasury:0"),
            idc,
        );
        let b = tx_with(
            vec![AccountMeta::writable(p), AccountMeta::writable(system)],
            ix,
            Some(b"payroll:0"),
            idc,
        );
        let g = build_dependency_graph(&[a, b]);
        assert!(!g.fast_path(0, 1));
        assert_eq!(g.fast_path_pairs(), 0);
        assert!(g.has_edge(0, 1));
    }

    #[test]
    fn simple_transfer() {
        let state: AccountState = [(id(1), Account::with_balance(100)), (id(2), Account::with_balance(0))]
            .into_iter()
            .collect();
        let txs = vec![transfer(id(1), id(2), 10)];
        let g = build_dependency_graph(&txs);
        let (next, deltas) = execute_batch(&state, &txs, &g, Parallelism::Sequential);
        assert_eq!(next.get(&id(1)).unwrap().balance, 90);
        assert_eq!(next.get(&id(2)).unwrap().balance, 10);
        assert_eq!(deltas[0].status, TxStatus::Applied);
    }

    #[test]
    fn overdraft_fails_without_state_change() {
        let state: AccountState = [(id(1), Account::with_balance(5)), (id(2), Account::with_balance(0))]
            .into_iter()
            .collect();
        let txs = vec![transfer(id(1), id(2), 10)];
        let g = build_dependency_graph(&txs);
        let (next, deltas) = execute_batch(&state, &txs, &g, Parallelism::Sequential);
        assert_eq!(next, state);
        assert_eq!(deltas[0].status, TxStatus::Failed(TxFailure::InsufficientBalance));
        assert!(deltas[0].changes.is_empty());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let state: AccountState = (1..=4u8).map(|b| (id(b), Account::with_balance(50))).collect();
        let txs = vec![
            transfer(id(1), id(2), 5),
            transfer(id(3), id(4), 7),
            transfer(id(2), id(3), 1),
        ];
        let g = build_dependency_graph(&txs);
        let one = execute_batch(&state, &txs, &g, Parallelism::Sequential);
        let eight = execute_batch(&state, &txs, &g, Parallelism::Threads(8));
        assert_eq!(one, eight);
        assert_eq!(g.waves(), vec![0, 0, 1]);
    }

    #[test]
    fn readonly_write_is_refused() {
        let state: AccountState = [(id(1), Account::with_balance(5)), (id(2), Account::with_balance(0))]
            .into_iter()
            .collect();
        let tx = tx_with(
            vec![AccountMeta::writable(id(1)), AccountMeta::readonly(id(2))],
            Instruction::Transfer {
                from: 0,
                to: 1,
                amount: 1,
                nonce: 0,
            },
            None,
            [0; 32],
        );
        assert_eq!(
            execute_tx(&state, &tx, 0).status,
            TxStatus::Failed(TxFailure::WriteToReadonly)
        );
    }

    #[test]
    fn state_root_properties() {
        assert_eq!(state_root(&AccountState::new()), [0u8; 32]);
        let a: AccountState = [(id(1), Account::with_balance(1)), (id(2), Account::with_balance(2))]
            .into_iter()
            .collect();
        let b: AccountState = [(id(2), Account::with_balance(2)), (id(1), Account::with_balance(1))]
            .into_iter()
            .collect();
        assert_eq!(state_root(&a), state_root(&b));
        let mut c = a.clone();
        c.insert(id(2), Account::with_balance(3));
        assert_ne!(state_root(&a), state_root(&c));
    }
}
