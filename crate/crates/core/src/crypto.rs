//! Key derivation hierarchy, identity commitments and HMAC attestations.
//!
//! Every key a user or validator holds is derived with HKDF-SHA256 from a
//! single 32-byte root entropy value ([`Rev`]). Per-transaction
//! authorization is an HMAC-SHA256 credential under a key scoped to an
//! 8-byte `(chain_id, slot)` [`Domain`].

use std::fmt;

use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

/// Info label of the mempool attestation stream.
pub const MEMPOOL_ATTEST_INFO: &[u8] = b"ACEGF-V1-MEMPOOL-ATTEST";
pub const VALIDATOR_CONSENSUS_INFO: &[u8] = b"ACEGF-V1-VALIDATOR-CONSENSUS";
pub const VALIDATOR_VOTE_INFO: &[u8] = b"ACEGF-V1-VALIDATOR-VOTE";

/// The seven canonical key streams, in stream order.
pub const CANONICAL_STREAM_INFOS: [&[u8]; 7] = [
    b"ACEGF-V1-ED25519-SOLANA",
    b"ACEGF-V1-ED25519-POLKADOT",
    b"ACEGF-V1-SECP256K1-EVM",
    b"ACEGF-V1-SECP256K1-BTC",
    b"ACEGF-V1-SECP256K1-COSMOS",
    b"ACEGF-V1-X25519-IDENTITY",
    b"ACEGF-V1-ML-DSA-44-PQC-IDENTITY",
];

/// Argon2id cost parameters used to encapsulate a REV: 4 MiB, 3 passes, 1 lane.
pub const ARGON2_MEMORY_KIB: u32 = 4096;
pub const ARGON2_ITERATIONS: u32 = 3;
pub const ARGON2_PARALLELISM: u32 = 1;

/// Largest slot number representable in the 6-byte slot field of a domain.
pub const MAX_DOMAIN_SLOT: u64 = (1 << 48) - 1;

/// Encoded attestation size in bytes.
pub const ATTESTATION_LEN: usize = 104;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("root entropy must be 32 bytes, got {0}")]
    MalformedRev(usize),
    #[error("key derivation info label must not be empty")]
    EmptyInfo,
    #[error("slot {0} does not fit the 48-bit domain slot field")]
    SlotOutOfRange(u64),
    #[error("attestation encoding must be {ATTESTATION_LEN} bytes, got {0}")]
    AttestationLength(usize),
    #[error("argon2 encapsulation failed: {0}")]
    Encapsulation(String),
}

/// Why a full attestation check rejected.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AttestationReject {
    #[error("obj_hash does not match SHA-256 of the payload")]
    PayloadMismatch,
    #[error("credential does not match the recomputed HMAC")]
    CredentialMismatch,
}

/// Root entropy value. Never serialized onto the wire; `Debug` is redacted.
#[derive(Clone, PartialEq, Eq)]
pub struct Rev([u8; 32]);

impl Rev {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Rev(bytes)
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Rev(bytes)
    }

    pub fn expose_secret(&self) -> &[u8; 32] {
        &self.0
    }
}

impl TryFrom<&[u8]> for Rev {
    type Error = CryptoError;

    fn try_from(bytes: &[u8]) -> Result<Self, Self::Error> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::MalformedRev(bytes.len()))?;
        Ok(Rev(arr))
    }
}

impl fmt::Debug for Rev {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Rev(<redacted>)")
    }
}

/// A purpose-scoped 32-byte key together with the labels it was derived under.
#[derive(Clone, PartialEq, Eq)]
pub struct DerivedKey {
    bytes: [u8; 32],
    pub info: Vec<u8>,
    pub salt: Vec<u8>,
}

impl DerivedKey {
    pub fn expose_secret(&self) -> &[u8; 32] {
        &self.bytes
    }
}

impl fmt::Debug for DerivedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DerivedKey")
            .field("info", &String::from_utf8_lossy(&self.info))
            .field("salt_len", &self.salt.len())
            .finish_non_exhaustive()
    }
}

/// Attestation binding scope: 16-bit chain id and 48-bit slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Domain {
    chain_id: u16,
    slot: u64,
}

impl Domain {
    pub fn new(chain_id: u16, slot: u64) -> Result<Self, CryptoError> {
        if slot > MAX_DOMAIN_SLOT {
            return Err(CryptoError::SlotOutOfRange(slot));
        }
        Ok(Domain { chain_id, slot })
    }

    pub fn chain_id(&self) -> u16 {
        self.chain_id
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Big-endian `chain_id || slot[48 bits]`.
    pub fn encode(&self) -> [u8; 8] {
        let mut out = self.slot.to_be_bytes();
        out[..2].copy_from_slice(&self.chain_id.to_be_bytes());
        out
    }

    pub fn decode(bytes: [u8; 8]) -> Self {
        let chain_id = u16::from_be_bytes([bytes[0], bytes[1]]);
        let mut slot = bytes;
        slot[0] = 0;
        slot[1] = 0;
        Domain {
            chain_id,
            slot: u64::from_be_bytes(slot),
        }
    }
}

/// On-chain identity: `SHA-256(rev || salt || domain)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IdCommitment {
    pub bytes: [u8; 32],
    pub salt: [u8; 32],
    pub domain: Domain,
}

/// Per-transaction authorization credential, 104 bytes on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Attestation {
    pub obj_hash: [u8; 32],
    pub id_com: [u8; 32],
    pub domain: Domain,
    pub credential: [u8; 32],
}

impl Attestation {
    /// Fixed offsets: 0..32 obj_hash, 32..64 id_com, 64..72 domain, 72..104 credential.
    pub fn encode(&self) -> [u8; ATTESTATION_LEN] {
        let mut out = [0u8; ATTESTATION_LEN];
        out[0..32].copy_from_slice(&self.obj_hash);
        out[32..64].copy_from_slice(&self.id_com);
        out[64..72].copy_from_slice(&self.domain.encode());
        out[72..104].copy_from_slice(&self.credential);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != ATTESTATION_LEN {
            return Err(CryptoError::AttestationLength(bytes.len()));
        }
        let take = |r: std::ops::Range<usize>| -> [u8; 32] { bytes[r].try_into().unwrap() };
        Ok(Attestation {
            obj_hash: take(0..32),
            id_com: take(32..64),
            domain: Domain::decode(bytes[64..72].try_into().unwrap()),
            credential: take(72..104),
        })
    }
}

/// Validator key triple derived from one REV.
#[derive(Debug, Clone)]
pub struct ValidatorKeys {
    pub consensus: DerivedKey,
    pub attest: DerivedKey,
    pub vote: DerivedKey,
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

pub fn sha256_concat(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// Raw HKDF-SHA256 producing 32 bytes. An empty salt is replaced by 32 zero bytes.
pub fn hkdf_sha256(ikm: &[u8], salt: &[u8], info: &[u8]) -> [u8; 32] {
    const ZERO_SALT: [u8; 32] = [0u8; 32];
    let salt = if salt.is_empty() { &ZERO_SALT[..] } else { salt };
    let hk = Hkdf::<Sha256>::new(Some(salt), ikm);
    let mut okm = [0u8; 32];
    hk.expand(info, &mut okm)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    okm
}

pub fn derive_key(rev: &Rev, info: &[u8], salt: &[u8]) -> Result<DerivedKey, CryptoError> {
    if info.is_empty() {
        return Err(CryptoError::EmptyInfo);
    }
    Ok(DerivedKey {
        bytes: hkdf_sha256(&rev.0, salt, info),
        info: info.to_vec(),
        salt: salt.to_vec(),
    })
}

/// Derives the seven canonical streams (unsalted) in stream order.
pub fn derive_canonical_streams(rev: &Rev) -> [DerivedKey; 7] {
    CANONICAL_STREAM_INFOS.map(|info| derive_key(rev, info, &[]).expect("labels are non-empty"))
}

/// Consensus key salted with the validator id, attest key salted with the
/// domain encoding, vote key salted with the big-endian epoch.
pub fn derive_validator_keys(rev: &Rev, validator_id: &[u8], domain: Domain, epoch: u64) -> ValidatorKeys {
    let derive = |info, salt: &[u8]| derive_key(rev, info, salt).expect("labels are non-empty");
    ValidatorKeys {
        consensus: derive(VALIDATOR_CONSENSUS_INFO, validator_id),
        attest: derive(MEMPOOL_ATTEST_INFO, &domain.encode()),
        vote: derive(VALIDATOR_VOTE_INFO, &epoch.to_be_bytes()),
    }
}

pub fn id_commitment(rev: &Rev, salt: [u8; 32], domain: Domain) -> IdCommitment {
    IdCommitment {
        bytes: sha256_concat(&[&rev.0, &salt, &domain.encode()]),
        salt,
        domain,
    }
}

/// The attestation key for one domain. Clients attesting many payloads in
/// the same slot derive it once.
pub fn attest_key(rev: &Rev, domain: Domain) -> DerivedKey {
    derive_key(rev, MEMPOOL_ATTEST_INFO, &domain.encode()).expect("label is non-empty")
}

fn credential(key: &DerivedKey, obj_hash: &[u8; 32], domain: Domain) -> [u8; 32] {
    hmac_sha256(&key.bytes, &[obj_hash, &domain.encode()])
}

pub fn generate_attestation(rev: &Rev, payload: &[u8], domain: Domain, id_com: &IdCommitment) -> Attestation {
    attest_with_key(&attest_key(rev, domain), payload, domain, id_com)
}

/// Same as [`generate_attestation`] with a pre-derived key for `domain`.
pub fn attest_with_key(key: &DerivedKey, payload: &[u8], domain: Domain, id_com: &IdCommitment) -> Attestation {
    debug_assert_eq!(key.salt, domain.encode());
    let obj_hash = sha256(payload);
    Attestation {
        obj_hash,
        id_com: id_com.bytes,
        domain,
        credential: credential(key, &obj_hash, domain),
    }
}

/// Full check: payload binding plus HMAC recomputation under the REV.
/// Validators never run this; it backs the prover's witness relation and tests.
pub fn verify_attestation_full(att: &Attestation, payload: &[u8], rev: &Rev) -> Result<(), AttestationReject> {
    verify_attestation_with_key(att, payload, &attest_key(rev, att.domain))
}

/// [`verify_attestation_full`] with the attest key for `att.domain` already derived.
pub fn verify_attestation_with_key(
    att: &Attestation,
    payload: &[u8],
    key: &DerivedKey,
) -> Result<(), AttestationReject> {
    if sha256(payload) != att.obj_hash {
        return Err(AttestationReject::PayloadMismatch);
    }
    if key.info != MEMPOOL_ATTEST_INFO || key.salt != att.domain.encode() {
        return Err(AttestationReject::CredentialMismatch);
    }
    let expected = credential(key, &att.obj_hash, att.domain);
    if !constant_time_eq(&expected, &att.credential) {
        return Err(AttestationReject::CredentialMismatch);
    }
    Ok(())
}

pub fn constant_time_eq(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Recovers a REV from a passphrase with one Argon2id call (m=4096 KiB, t=3, p=1).
pub fn encapsulate_rev(passphrase: &[u8], salt: &[u8]) -> Result<Rev, CryptoError> {
    use argon2::{Algorithm, Argon2, Params, Version};
    let params = Params::new(ARGON2_MEMORY_KIB, ARGON2_ITERATIONS, ARGON2_PARALLELISM, Some(32))
        .map_err(|e| CryptoError::Encapsulation(e.to_string()))?;
    let mut out = [0u8; 32];
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase, salt, &mut out)
        .map_err(|e| CryptoError::Encapsulation(e.to_string()))?;
    Ok(Rev(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rev(b: u8) -> Rev {
        Rev::from_bytes([b; 32])
    }

    /// Textbook HKDF from RFC 5869 section 2 over the HMAC primitive.
    fn hkdf_oracle(ikm: &[u8], salt: &[u8], info: &[u8], len: usize) -> Vec<u8> {
        let prk = hmac_sha256(salt, &[ikm]);
        let mut okm = Vec::new();
        let mut t: Vec<u8> = Vec::new();
        let mut counter = 1u8;
        while okm.len() < len {
            t = hmac_sha256(&prk, &[&t, info, &[counter]]).to_vec();
            okm.extend_from_slice(&t);
            counter += 1;
        }
        okm.truncate(len);
        okm
    }

    #[test]
    fn rfc5869_test_case_1() {
        let ikm = [0x0bu8; 22];
        let salt: Vec<u8> = (0x00..=0x0c).collect();
        let info: Vec<u8> = (0xf0..=0xf9).collect();
        let okm = hkdf_sha256(&ikm, &salt, &info);
        let rfc = hex::decode("3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865")
            .unwrap();
        assert_eq!(&okm[..], &rfc[..32]);
        assert_eq!(okm.to_vec(), hkdf_oracle(&ikm, &salt, &info, 32));
    }

    #[test]
    fn derive_key_matches_oracle_and_is_deterministic() {
        let r = rev(7);
        let d = Domain::new(1, 99).unwrap();
        let a = derive_key(&r, MEMPOOL_ATTEST_INFO, &d.encode()).unwrap();
        let b = derive_key(&r, MEMPOOL_ATTEST_INFO, &d.encode()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.expose_secret().to_vec(),
            hkdf_oracle(r.expose_secret(), &d.encode(), MEMPOOL_ATTEST_INFO, 32)
        );
    }

    #[test]
    fn empty_salt_means_zero_salt() {
        let r = rev(3);
        let a = derive_key(&r, b"x", &[]).unwrap();
        let b = derive_key(&r, b"x", &[0u8; 32]).unwrap();
        assert_eq!(a.expose_secret(), b.expose_secret());
    }

    #[test]
    fn malformed_rev_and_empty_info() {
        assert_eq!(
            Rev::try_from(&[0u8; 31][..]).unwrap_err(),
            CryptoError::MalformedRev(31)
        );
        assert_eq!(derive_key(&rev(1), b"", b"s").unwrap_err(), CryptoError::EmptyInfo);
    }

    #[test]
    fn context_isolation() {
        let r = rev(9);
        let c1 = derive_key(&r, b"ACEGF-V1-CONTEXT", b"treasury:0").unwrap();
        let c2 = derive_key(&r, b"ACEGF-V1-CONTEXT", b"payroll:0").unwrap();
        assert_ne!(c1.expose_secret(), c2.expose_secret());
    }

    #[test]
    fn canonical_streams_are_distinct_and_composed() {
        let r = rev(11);
        let streams = derive_canonical_streams(&r);
        for i in 0..7 {
            for j in i + 1..7 {
                assert_ne!(streams[i].expose_secret(), streams[j].expose_secret());
            }
            let single = derive_key(&r, CANONICAL_STREAM_INFOS[i], &[]).unwrap();
            assert_eq!(streams[i], single);
        }
    }

    #[test]
    fn canonical_stream_one_differs_across_revs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = Rev::random(&mut rng);
            let b = Rev::random(&mut rng);
            let ka = derive_canonical_streams(&a);
            let kb = derive_canonical_streams(&b);
            assert_ne!(ka[0].expose_secret(), kb[0].expose_secret());
        }
    }

    #[test]
    fn validator_keys_rotate_by_epoch() {
        let r = rev(4);
        let d = Domain::new(1, 10).unwrap();
        let e0 = derive_validator_keys(&r, b"validator-0", d, 7);
        let e1 = derive_validator_keys(&r, b"validator-0", d, 8);
        assert_ne!(e0.vote.expose_secret(), e1.vote.expose_secret());
        assert_eq!(e0.consensus, e1.consensus);
        assert_eq!(e0.attest, e1.attest);
        assert_ne!(e0.vote.expose_secret(), e0.attest.expose_secret());
        assert_ne!(e0.vote.expose_secret(), e0.consensus.expose_secret());
        assert_eq!(e0.attest, attest_key(&r, d));
        let again = derive_validator_keys(&r, b"validator-0", d, 7);
        assert_eq!(e0.vote, again.vote);
    }

    #[test]
    fn domain_encoding_is_big_endian_chain_then_slot() {
        let d = Domain::new(0x0102, 0x0000_0304_0506_0708).unwrap();
        assert_eq!(d.encode(), [1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(Domain::decode(d.encode()), d);
        assert_eq!(
            Domain::new(1, MAX_DOMAIN_SLOT + 1).unwrap_err(),
            CryptoError::SlotOutOfRange(1 << 48)
        );
    }

    #[test]
    fn id_commitment_properties() {
        let r = rev(2);
        let d = Domain::new(1, 0).unwrap();
        let a = id_commitment(&r, [1; 32], d);
        assert_eq!(a, id_commitment(&r, [1; 32], d));
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let mut salt = [0u8; 32];
            rng.fill_bytes(&mut salt);
            assert!(seen.insert(id_commitment(&r, salt, d).bytes));
        }
    }

    #[test]
    fn id_commitment_reveals_no_rev_substring() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = Domain::new(9, 1).unwrap();
        for _ in 0..500 {
            let r = Rev::random(&mut rng);
            let mut salt = [0u8; 32];
            rng.fill_bytes(&mut salt);
            let com = id_commitment(&r, salt, d);
            for window in r.expose_secret().windows(8) {
                assert!(!com.bytes.windows(8).any(|w| w == window));
            }
        }
    }

    #[test]
    fn attestation_round_trip_and_size() {
        let r = rev(5);
        let d = Domain::new(7, 1234).unwrap();
        let idc = id_commitment(&r, [3; 32], d);
        let payload = b"transfer 10 lamports";
        let att = generate_attestation(&r, payload, d, &idc);
        assert_eq!(att.encode().len(), 104);
        assert_eq!(Attestation::decode(&att.encode()).unwrap(), att);
        assert_eq!(verify_attestation_full(&att, payload, &r), Ok(()));
        assert_eq!(
            Attestation::decode(&[0u8; 90]).unwrap_err(),
            CryptoError::AttestationLength(90)
        );
    }

    #[test]
    fn single_byte_payload_flip_is_rejected() {
        let r = rev(6);
        let d = Domain::new(1, 5).unwrap();
        let idc = id_commitment(&r, [0; 32], d);
        let payload: Vec<u8> = (0..154u8).collect();
        let att = generate_attestation(&r, &payload, d, &idc);
        for pos in 0..payload.len() {
            for bit in 0..8 {
                let mut p = payload.clone();
                p[pos] ^= 1 << bit;
                assert_eq!(
                    verify_attestation_full(&att, &p, &r),
                    Err(AttestationReject::PayloadMismatch)
                );
            }
        }
    }

    #[test]
    fn credential_is_domain_bound() {
        let r = rev(8);
        let d = Domain::new(3, 40).unwrap();
        let idc = id_commitment(&r, [0; 32], d);
        let att = generate_attestation(&r, b"p", d, &idc);
        let moved = Attestation {
            domain: Domain::new(3, 41).unwrap(),
            ..att
        };
        assert_eq!(
            verify_attestation_full(&moved, b"p", &r),
            Err(AttestationReject::CredentialMismatch)
        );
    }

    #[test]
    fn random_credentials_never_verify() {
        let r = rev(12);
        let d = Domain::new(1, 1).unwrap();
        let idc = id_commitment(&r, [0; 32], d);
        let att = generate_attestation(&r, b"payload", d, &idc);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let mut forged = att;
            rng.fill_bytes(&mut forged.credential);
            assert!(verify_attestation_full(&forged, b"payload", &r).is_err());
        }
    }

    #[test]
    fn debug_output_redacts_secrets() {
        let r = rev(0xAB);
        assert_eq!(format!("{r:?}"), "Rev(<redacted>)");
        let k = attest_key(&r, Domain::new(1, 1).unwrap());
        assert!(!format!("{k:?}").contains("171"));
    }

    #[test]
    fn argon2_encapsulation_is_deterministic() {
        let a = encapsulate_rev(b"correct horse", b"salty-salt-0001").unwrap();
        let b = encapsulate_rev(b"correct horse", b"salty-salt-0001").unwrap();
        let c = encapsulate_rev(b"correct horse", b"salty-salt-0002").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
