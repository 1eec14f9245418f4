//! Exhaustive event-sequence enumeration against a reference model, plus a
//! brute-force quorum oracle.

use ace_runtime::finality::*;
use ace_runtime::prover::{FcInvalid, FcVerdict};
use proptest::prelude::*;
use FinalityStatus::*;

#[derive(Debug, Clone, Copy)]
enum Ev {
    Vote(u8),
    Fc(bool),
    Tick(u64),
}

const START: u64 = 4000;

fn alphabet(cfg: &FinalityConfig) -> Vec<Ev> {
    vec![
        Ev::Vote(0),
        Ev::Vote(1),
        Ev::Vote(2),
        Ev::Vote(3),
        Ev::Fc(true),
        Ev::Fc(false),
        Ev::Tick(START + 100),
        Ev::Tick(START + cfg.builder_deadline_ms()),
        Ev::Tick(START + cfg.backup_deadline_ms()),
    ]
}

/// Independent statement of the lifecycle rules.
#[derive(Debug, Clone)]
struct Model {
    status: FinalityStatus,
    voters: u8,
    buffered: Option<bool>,
    slashes: u32,
    requeues: u32,
    saw_valid_fc: bool,
    now: u64,
}

impl Model {
    fn new() -> Self {
        Model {
            status: Pending,
            voters: 0,
            buffered: None,
            slashes: 0,
            requeues: 0,
            saw_valid_fc: false,
            now: START,
        }
    }

    fn fc(&mut self, valid: bool) {
        self.saw_valid_fc |= valid;
        match (self.status, valid) {
            (Pending, _) => self.buffered = Some(self.buffered.unwrap_or(false) || valid),
            (Soft | BackupWait, true) => self.status = Hard,
            (Soft, false) => {
                self.status = RolledBack;
                self.slash();
                self.requeues += 1;
            }
            _ => {}
        }
    }

    fn slash(&mut self) {
        if self.slashes == 0 {
            self.slashes = 1;
        }
    }

    fn step(&mut self, ev: Ev, cfg: &FinalityConfig) {
        match ev {
            Ev::Vote(v) => {
                if self.status.is_terminal() || self.voters & (1 << v) != 0 {
                    return;
                }
                self.voters |= 1 << v;
                // 4 validators of 100 stake: quorum is 267, three votes
                if self.status == Pending && self.voters.count_ones() >= 3 {
                    self.status = Soft;
                    if let Some(b) = self.buffered.take() {
                        self.fc(b);
                    }
                }
            }
            Ev::Fc(valid) => self.fc(valid),
            Ev::Tick(t) => {
                self.now = self.now.max(t);
                let elapsed = self.now - START;
                if self.status == Soft && elapsed >= cfg.builder_deadline_ms() {
                    self.status = BackupWait;
                    self.slash();
                }
                if self.status == BackupWait && elapsed >= cfg.backup_deadline_ms() {
                    self.status = RolledBack;
                    self.requeues += 1;
                }
            }
        }
    }
}

struct Counts {
    sequences: u64,
}

fn explore(
    tracker: &FinalityTracker,
    model: &Model,
    seq: &mut Vec<Ev>,
    depth: usize,
    cfg: &FinalityConfig,
    counts: &mut Counts,
    effects_so_far: (u32, u32),
) {
    if depth == 0 {
        return;
    }
    for ev in alphabet(cfg) {
        let mut t = tracker.clone();
        let mut m = model.clone();
        seq.push(ev);
        let before = t.status();
        let effects = match ev {
            Ev::Vote(v) => t.on_vote([v; 32], 100, m.now),
            Ev::Fc(true) => t.on_fc(FcVerdict::Valid, m.now),
            Ev::Fc(false) => t.on_fc(FcVerdict::Invalid(FcInvalid::ProofMismatch), m.now),
            Ev::Tick(at) => t.on_timeout(at.max(m.now)),
        };
        m.step(ev, cfg);
        counts.sequences += 1;

        let slashes = effects_so_far.0 + effects.iter().filter(|e| **e == Effect::SlashBuilder).count() as u32;
        let requeues = effects_so_far.1 + effects.iter().filter(|e| **e == Effect::Requeue).count() as u32;
        assert_eq!(t.status(), m.status, "status after {seq:?}");
        assert_eq!((slashes, requeues), (m.slashes, m.requeues), "effects after {seq:?}");
        assert!(!(before == Hard && t.status() != Hard), "left Hard after {seq:?}");
        if t.status() == Hard {
            assert!(
                t.hard_by_valid_fc() && m.saw_valid_fc,
                "Hard without valid FC after {seq:?}"
            );
        }
        if before.is_terminal() {
            assert!(effects.is_empty(), "terminal state produced effects after {seq:?}");
        }
        for tr in t.transitions() {
            if tr.to == RolledBack && tr.event == EventKind::BackupTimeout {
                assert_eq!(tr.t_ms - START, cfg.backup_deadline_ms());
            }
        }
        explore(&t, &m, seq, depth - 1, cfg, counts, (slashes, requeues));
        seq.pop();
    }
}

#[test]
fn exhaustive_sequences_up_to_six_events() {
    let cfg = FinalityConfig::default();
    assert_eq!(cfg.quorum(400), 267);
    let root = FinalityTracker::new(1, [7; 32], START, 400, cfg);
    let mut counts = Counts { sequences: 0 };
    explore(&root, &Model::new(), &mut Vec::new(), 6, &cfg, &mut counts, (0, 0));
    let expected: u64 = (1..=6).map(|k| 9u64.pow(k)).sum();
    assert_eq!(counts.sequences, expected);
}

#[test]
fn default_windows() {
    let cfg = FinalityConfig::default();
    assert_eq!(cfg.builder_deadline_ms(), 1200);
    assert_eq!(cfg.backup_deadline_ms(), 2400);
}

/// Every subset of up to 8 validators: soft exactly when 3·weight ≥ 2·total.
fn quorum_oracle(stakes: &[u64]) {
    let cfg = FinalityConfig::default();
    let total: u64 = stakes.iter().sum();
    for mask in 0u32..1 << stakes.len() {
        let mut t = FinalityTracker::new(0, [0; 32], 0, total, cfg);
        let mut weight = 0u64;
        for (i, &s) in stakes.iter().enumerate() {
            if mask & (1 << i) != 0 {
                t.on_vote([i as u8; 32], s, 0);
                weight += s;
            }
        }
        let expect_soft = 3 * weight as u128 >= 2 * total as u128;
        assert_eq!(t.status() == Soft, expect_soft, "stakes {stakes:?} mask {mask:b}");
    }
}

#[test]
fn quorum_edge_stakes() {
    quorum_oracle(&[1, 1, 1]);
    quorum_oracle(&[2, 1]);
    quorum_oracle(&[100, 100, 100, 100]);
    quorum_oracle(&[u64::MAX / 8; 8]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn quorum_matches_brute_force(stakes in prop::collection::vec(1u64..1_000_000, 1..=8)) {
        quorum_oracle(&stakes);
    }
}
