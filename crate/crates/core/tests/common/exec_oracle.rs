//! In-order reference interpreter and random batch generator for executor tests.

use std::collections::BTreeMap;

use ace_runtime::crypto::{sha256, Attestation, Domain};
use ace_runtime::executor::context_account;
use ace_runtime::wire::{AccountId, AccountMeta, Instruction, Transaction, TxMessage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OAccount {
    pub balance: u64,
    pub data: Vec<u8>,
    pub owner: Option<Vec<u8>>,
}

/// In-order reference interpreter over a plain map.
pub fn oracle_apply(state: &mut BTreeMap<[u8; 32], OAccount>, tx: &Transaction) -> bool {
    let metas = tx.declared_accounts();
    let w = |i: u8| metas.get(i as usize).filter(|m| m.writable).map(|m| m.id.0);
    match &tx.message().instruction {
        Instruction::Transfer { from, to, amount, .. } => {
            let (Some(f), Some(t)) = (w(*from), w(*to)) else {
                return false;
            };
            let Some(src) = state.get(&f).cloned() else {
                return false;
            };
            if src.balance < *amount {
                return false;
            }
            if f == t {
                return true;
            }
            let Some(dst) = state.get(&t).cloned() else {
                return false;
            };
            let Some(nb) = dst.balance.checked_add(*amount) else {
                return false;
            };
            state.get_mut(&f).unwrap().balance -= amount;
            state.get_mut(&t).unwrap().balance = nb;
            true
        }
        Instruction::CreateAccount { account, .. } => {
            let Some(a) = w(*account) else { return false };
            if state.contains_key(&a) {
                return false;
            }
            state.insert(
                a,
                OAccount {
                    balance: 0,
                    data: Vec::new(),
                    owner: tx.context_tag().map(|t| t.to_vec()),
                },
            );
            true
        }
        Instruction::WriteData { account, data } => match w(*account).and_then(|a| state.get_mut(&a)) {
            Some(acc) => {
                acc.data = data.clone();
                true
            }
            None => false,
        },
        Instruction::Mint { account, amount } => match w(*account).and_then(|a| state.get_mut(&a)) {
            Some(acc) => match acc.balance.checked_add(*amount) {
                Some(b) => {
                    acc.balance = b;
                    true
                }
                None => false,
            },
            None => false,
        },
    }
}

pub fn oracle_root(state: &BTreeMap<[u8; 32], OAccount>) -> [u8; 32] {
    let mut level: Vec<[u8; 32]> = state
        .iter()
        .map(|(id, a)| {
            let owner = a.owner.as_ref().map_or([0u8; 32], |o| sha256(o));
            let leaf = sha256(&[&id[..], &a.balance.to_be_bytes(), &sha256(&a.data), &owner].concat());
            sha256(&[&[0u8][..], &leaf].concat())
        })
        .collect();
    if level.is_empty() {
        return [0; 32];
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|p| sha256(&[&[1u8][..], &p[0], p.get(1).unwrap_or(&p[0])].concat()))
            .collect();
    }
    level[0]
}

pub const IDS: [[u8; 32]; 2] = [[0xE1; 32], [0xE2; 32]];
pub const TAGS: [&[u8]; 2] = [b"game", b"dex"];

/// 8 global accounts plus 2 accounts in each of 4 context spaces.
pub fn account_pool() -> Vec<(AccountId, Option<(usize, usize)>)> {
    let mut pool: Vec<_> = (0..8u8).map(|i| (AccountId([i + 1; 32]), None)).collect();
    for (ii, id) in IDS.iter().enumerate() {
        for (ti, tag) in TAGS.iter().enumerate() {
            for s in 0..2u8 {
                pool.push((context_account(id, tag, [s + 1; 16]), Some((ii, ti))));
            }
        }
    }
    pool
}

pub fn make_tx(id_com: [u8; 32], tag: Option<&[u8]>, accounts: Vec<AccountMeta>, ix: Instruction) -> Transaction {
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

pub fn random_batch(rng: &mut ChaCha8Rng, pool: &[(AccountId, Option<(usize, usize)>)]) -> Vec<Transaction> {
    let n = rng.gen_range(1..=64);
    (0..n)
        .map(|_| {
            let ii = rng.gen_range(0..2);
            let ti = rng.gen_range(0..2);
            let tagged = rng.gen_bool(0.6);
            let confined = tagged && rng.gen_bool(0.7);
            let candidates: Vec<AccountId> = pool
                .iter()
                .filter(|(_, space)| !confined || *space == Some((ii, ti)))
                .map(|(a, _)| *a)
                .collect();
            let k = rng.gen_range(1..=3usize);
            let accounts: Vec<AccountMeta> = (0..k)
                .map(|_| AccountMeta {
                    id: candidates[rng.gen_range(0..candidates.len())],
                    writable: rng.gen_bool(0.85),
                })
                .collect();
            let idx = |rng: &mut ChaCha8Rng| rng.gen_range(0..k as u8 + 1);
            let ix = match rng.gen_range(0..10) {
                0..=4 => Instruction::Transfer {
                    from: idx(rng),
                    to: idx(rng),
                    amount: rng.gen_range(0..150),
                    nonce: rng.gen(),
                },
                5 => Instruction::CreateAccount {
                    account: idx(rng),
                    nonce: rng.gen(),
                },
                6 | 7 => Instruction::WriteData {
                    account: idx(rng),
                    data: vec![rng.gen(); rng.gen_range(0..8)],
                },
                _ => Instruction::Mint {
                    account: idx(rng),
                    amount: if rng.gen_bool(0.05) {
                        u64::MAX
                    } else {
                        rng.gen_range(0..100)
                    },
                },
            };
            make_tx(IDS[ii], tagged.then_some(TAGS[ti]), accounts, ix)
        })
        .collect()
}
