//! Seeded clients, genesis state and attested transfer generation for
//! tests, benchmarks and the simulator.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{attest_key, attest_with_key, id_commitment, DerivedKey, Domain, IdCommitment, Rev};
use crate::executor::{Account, AccountState};
use crate::pipeline::IdentityRegistry;
use crate::prover::Witness;
use crate::wire::{AccountId, AccountMeta, Instruction, Transaction, TxMessage};

pub const TRANSFER_PROGRAM: [u8; 32] = [0xAC; 32];
pub const GENESIS_BALANCE: u64 = 1_000_000_000;

#[derive(Debug, Clone)]
pub struct Client {
    pub rev: Rev,
    pub id: IdCommitment,
}

impl Client {
    pub fn witness(&self) -> Witness {
        Witness {
            rev: self.rev.clone(),
            salt: self.id.salt,
            registration_domain: self.id.domain,
        }
    }
}

/// A population of registered clients and funded accounts.
#[derive(Debug)]
pub struct Workload {
    pub clients: Vec<Client>,
    pub accounts: Vec<AccountId>,
    pub state: AccountState,
    by_id_com: HashMap<[u8; 32], usize>,
    keys: HashMap<(usize, u64), DerivedKey>,
    rng: ChaCha20Rng,
}

impl Workload {
    pub const CHAIN_ID: u16 = 1;

    pub fn new(seed: u64, n_clients: usize, n_accounts: usize) -> Self {
        assert!(n_clients > 0);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let registration = Domain::new(Self::CHAIN_ID, 0).unwrap();
        let clients: Vec<Client> = (0..n_clients)
            .map(|_| {
                let rev = Rev::random(&mut rng);
                let mut salt = [0u8; 32];
                rng.fill_bytes(&mut salt);
                let id = id_commitment(&rev, salt, registration);
                Client { rev, id }
            })
            .collect();
        let accounts: Vec<AccountId> = (0..n_accounts)
            .map(|_| {
                let mut id = [0u8; 32];
                rng.fill_bytes(&mut id);
                AccountId(id)
            })
            .collect();
        let state = accounts
            .iter()
            .map(|id| (*id, Account::with_balance(GENESIS_BALANCE)))
            .collect();
        let by_id_com = clients.iter().enumerate().map(|(i, c)| (c.id.bytes, i)).collect();
        Workload {
            clients,
            accounts,
            state,
            by_id_com,
            keys: HashMap::new(),
            rng,
        }
    }

    pub fn registry(&self) -> IdentityRegistry {
        self.clients.iter().map(|c| c.id.bytes).collect()
    }

    /// Attests `msg` as `client` in the domain of `slot`. Keys are cached per (client, slot).
    pub fn sign(&mut self, client: usize, msg: TxMessage, slot: u64) -> Transaction {
        let domain = Domain::new(Self::CHAIN_ID, slot).expect("slot fits the domain");
        let c = &self.clients[client];
        let key = self
            .keys
            .entry((client, slot))
            .or_insert_with(|| attest_key(&c.rev, domain));
        let att = attest_with_key(key, &msg.encode(), domain, &c.id);
        Transaction::new(msg, att)
    }

    pub fn transfer_message(&self, from: usize, to: usize, amount: u64, nonce: u64) -> TxMessage {
        TxMessage {
            accounts: vec![
                AccountMeta::writable(self.accounts[from]),
                AccountMeta::writable(self.accounts[to]),
            ],
            program_id: TRANSFER_PROGRAM,
            recent_blockhash: [0; 32],
            context_tag: None,
            instruction: Instruction::Transfer {
                from: 0,
                to: 1,
                amount,
                nonce,
            },
        }
    }

    /// A unit transfer between accounts, attested by client `from % clients`.
    pub fn transfer(&mut self, from: usize, to: usize, nonce: u64, slot: u64) -> Transaction {
        let msg = self.transfer_message(from, to, 1, nonce);
        self.sign(from % self.clients.len(), msg, slot)
    }

    /// A transfer attested by a fresh, unregistered identity.
    pub fn transfer_unregistered(&mut self, from: usize, to: usize, slot: u64) -> Transaction {
        let rev = Rev::random(&mut self.rng);
        let domain = Domain::new(Self::CHAIN_ID, slot).unwrap();
        let id = id_commitment(&rev, [0; 32], domain);
        let msg = self.transfer_message(from, to, 1, 0);
        let att = attest_with_key(&attest_key(&rev, domain), &msg.encode(), domain, &id);
        Transaction::new(msg, att)
    }

    pub fn client_of(&self, tx: &Transaction) -> Option<usize> {
        self.by_id_com.get(&tx.attestation().id_com).copied()
    }

    /// The witness of the registered client that attested `tx`.
    pub fn witness_for(&self, tx: &Transaction) -> Witness {
        let client = self.client_of(tx).expect("transaction attested by a registered client");
        self.clients[client].witness()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}
