//! Median-of-samples timer and the two benchmark commands.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use ace_runtime::crypto::{
    attest_key, derive_canonical_streams, derive_key, encapsulate_rev, generate_attestation, id_commitment, sha256,
    verify_attestation_with_key, Domain, Rev, MEMPOOL_ATTEST_INFO,
};
use ace_runtime::executor::{build_dependency_graph, execute_batch, state_root, Parallelism};
use ace_runtime::pipeline::{light_check_batch, DomainWindow, PipelineConfig};
use ace_runtime::prover::{prove_block, ProofCounter, Witness};
use ace_runtime::wire::{encode_block, merkle_root, Block, BlockHeader, Transaction};
use ace_runtime::workload::Workload;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const WARMUP: usize = 10;
pub const MIN_SAMPLES: usize = 30;
pub const ARGON2_SAMPLES: usize = 10;
pub const DEFAULT_BATCH_SIZES: [usize; 3] = [100, 500, 2000];

/// Ed25519 CPU verification, per signature.
pub const ED25519_VERIFY_NS: f64 = 76_000.0;
pub const SLOT_BUDGET_NS: f64 = 400e6;
pub const LIGHT_CHECK_BUDGET_NS: f64 = 5_000.0;
/// Slack for the flat-or-decreasing per-tx trend; medians jitter by a few percent.
pub const TREND_SLACK: f64 = 1.10;

/// Each sample runs this long at least, so nanosecond operations are not
/// dominated by clock resolution.
const SAMPLE_TARGET_NS: u128 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub median_ns: f64,
    pub samples: usize,
    pub iters_per_sample: u64,
}

/// Runs `f` `warmup` times, then takes `samples` samples of a calibrated
/// number of iterations each and reports the per-call median.
pub fn measure<T>(warmup: usize, samples: usize, mut f: impl FnMut() -> T) -> Timing {
    assert!(samples > 0);
    for _ in 0..warmup {
        black_box(f());
    }
    let t = Instant::now();
    black_box(f());
    let one = t.elapsed().as_nanos().max(1);
    let iters = (SAMPLE_TARGET_NS / one).clamp(1, 100_000) as u64;
    let mut per_call: Vec<f64> = (0..samples)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..iters {
                black_box(f());
            }
            t.elapsed().as_nanos() as f64 / iters as f64
        })
        .collect();
    per_call.sort_by(f64::total_cmp);
    let mid = per_call.len() / 2;
    let median_ns = if per_call.len().is_multiple_of(2) {
        (per_call[mid - 1] + per_call[mid]) / 2.0
    } else {
        per_call[mid]
    };
    Timing {
        median_ns,
        samples,
        iters_per_sample: iters,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Host {
    pub cpu: String,
    pub cores: usize,
}

impl Host {
    pub fn detect() -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| format!("unknown {}", std::env::consts::ARCH));
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        Host { cpu, cores }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub operation: String,
    pub batch: Option<usize>,
    pub timing: Timing,
    /// Published figure for the same operation, used only as a ratio.
    pub reference_ns: Option<f64>,
}

impl BenchRow {
    pub fn per_tx_ns(&self) -> Option<f64> {
        self.batch.map(|n| self.timing.median_ns / n.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Soft checks are host-relative and only warn.
    pub soft: bool,
    pub detail: String,
}

impl Check {
    pub fn status(&self) -> &'static str {
        match (self.passed, self.soft) {
            (true, _) => "pass",
            (false, true) => "warn",
            (false, false) => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub name: &'static str,
    pub host: Host,
    pub rows: Vec<BenchRow>,
    pub checks: Vec<Check>,
}

impl BenchReport {
    pub fn row(&self, operation: &str, batch: Option<usize>) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.operation == operation && r.batch == batch)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True unless a hard check failed.
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.soft)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("operation,batch,median_ns,samples,iters_per_sample,per_tx_ns,reference_ns,ratio\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.1}"));
            let _ = writeln!(
                out,
                "{},{},{:.1},{},{},{},{},{}",
                r.operation,
                r.batch.map_or(String::new(), |b| b.to_string()),
                r.timing.median_ns,
                r.timing.samples,
                r.timing.iters_per_sample,
                opt(r.per_tx_ns()),
                opt(r.reference_ns),
                r.reference_ns
                    .map_or(String::new(), |p| format!("{:.2}", r.timing.median_ns / p)),
            );
        }
        out
    }

    /// Aligned text. Batched rows are pivoted into one column per batch size.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.name);
        let _ = writeln!(out, "host cpu=\"{}\" cores={}", self.host.cpu, self.host.cores);
        let mut batches: Vec<usize> = self.rows.iter().filter_map(|r| r.batch).collect();
        batches.sort_unstable();
        batches.dedup();
        let mut lines: Vec<Vec<String>> = Vec::new();
        if self.rows.is_empty() || self.rows.iter().any(|r| r.batch.is_none()) {
            lines.push(
                ["operation", "median", "per tx", "samples", "reference", "ratio"]
                    .map(String::from)
                    .to_vec(),
            );
            for r in &self.rows {
                lines.push(vec![
                    r.operation.clone(),
                    fmt_ns(r.timing.median_ns),
                    r.per_tx_ns().map_or("-".into(), fmt_ns),
                    r.timing.samples.to_string(),
                    r.reference_ns.map_or("-".into(), fmt_ns),
                    r.reference_ns
                        .map_or("-".into(), |p| format!("{:.2}", r.timing.median_ns / p)),
                ]);
            }
        } else {
            let largest = *batches.last().unwrap();
            let mut head = vec!["phase".to_string()];
            head.extend(batches.iter().map(|b| format!("{b} tx")));
            head.push(format!("per-tx @ {largest}"));
            head.push("ratio @ ref".into());
            lines.push(head);
            let mut ops: Vec<&str> = Vec::new();
            for r in &self.rows {
                if !ops.contains(&r.operation.as_str()) {
                    ops.push(&r.operation);
                }
            }
            for op in ops {
                let mut line = vec![op.to_string()];
                for &b in &batches {
                    line.push(self.row(op, Some(b)).map_or("-".into(), |r| fmt_ns(r.timing.median_ns)));
                }
                let big = self.row(op, Some(largest));
                line.push(big.and_then(BenchRow::per_tx_ns).map_or("-".into(), fmt_ns));
                line.push(
                    big.and_then(|r| r.reference_ns.map(|p| format!("{:.2}", r.timing.median_ns / p)))
                        .unwrap_or_else(|| "-".into()),
                );
                lines.push(line);
            }
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        for (n, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if n == 0 {
                let _ = writeln!(
                    out,
                    "{}",
                    "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
                );
            }
        }
        out.push_str(&self.render_checks());
        out
    }

    /// One `check` line per check.
    pub fn render_checks(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "check name={} status={} detail=\"{}\"",
                c.name,
                c.status(),
                c.detail
            );
        }
        out
    }
}

pub fn fmt_ns(ns: f64) -> String {
    if ns < 1e3 {
        format!("{ns:.0} ns")
    } else if ns < 1e6 {
        format!("{:.2} us", ns / 1e3)
    } else if ns < 1e9 {
        format!("{:.2} ms", ns / 1e6)
    } else {
        format!("{:.2} s", ns / 1e9)
    }
}

pub mod op {
    pub const GENERATE: &str = "Attestation generate (HMAC-SHA256)";
    pub const VERIFY: &str = "Attestation verify (full check)";
    pub const BINDING: &str = "Payload binding check (SHA-256)";
    pub const HKDF_SINGLE: &str = "HKDF single-key derivation";
    pub const HKDF_ATTEST: &str = "HKDF attest-key derivation";
    pub const HKDF_ALL: &str = "HKDF all 7 canonical streams";
    pub const ID_COM: &str = "Identity commitment (SHA-256)";
    pub const SHA_244: &str = "SHA-256 hash (244 B input)";
    pub const ARGON2: &str = "REV encapsulation (Argon2id)";
    pub const LIGHT: &str = "Attest light check (per tx, 2000 batch)";

    pub const ATTEST_CHECK: &str = "1a: AttestCheck";
    pub const EXECUTE: &str = "1b: Execute";
    pub const STATE_ROOT: &str = "1b: State root (Merkle)";
    pub const PROVE: &str = "2: Prove (mock)";
    pub const BLOCK_BUILD: &str = "Block build";
    pub const END_TO_END: &str = "End-to-end";
}

/// Reference latencies (Apple M3 Pro), in nanoseconds.
const CRYPTO_REFERENCE_NS: [(&str, f64); 9] = [
    (op::GENERATE, 2_270.0),
    (op::VERIFY, 830.0),
    (op::BINDING, 334.0),
    (op::HKDF_SINGLE, 1_180.0),
    (op::HKDF_ATTEST, 1_220.0),
    (op::HKDF_ALL, 7_870.0),
    (op::ID_COM, 272.0),
    (op::SHA_244, 544.0),
    (op::ARGON2, 3_570_000.0),
];

/// Reference phase latencies at 2000 txs, in nanoseconds.
const PIPELINE_REFERENCE_2K_NS: [(&str, f64); 6] = [
    (op::ATTEST_CHECK, 258_300.0),
    (op::EXECUTE, 141_900.0),
    (op::STATE_ROOT, 538_400.0),
    (op::PROVE, 4_190_000.0),
    (op::BLOCK_BUILD, 2_020_000.0),
    (op::END_TO_END, 7_690_000.0),
];

fn reference(table: &[(&str, f64)], operation: &str) -> Option<f64> {
    table.iter().find(|(n, _)| *n == operation).map(|(_, v)| *v)
}

pub fn cmd_bench_crypto(seed: u64, samples: usize) -> BenchReport {
    let samples = samples.max(MIN_SAMPLES);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rev = Rev::random(&mut rng);
    let mut salt = [0u8; 32];
    rng.fill_bytes(&mut salt);
    let domain = Domain::new(Workload::CHAIN_ID, 7).unwrap();
    let id = id_commitment(&rev, salt, domain);

    let mut work = Workload::new(seed, 1, 2);
    let payload = work.transfer_message(0, 1, 1, 0).encode();
    let att = generate_attestation(&rev, &payload, domain, &id);
    let input_244 = [0xA5u8; 244];

    let mut rows = Vec::new();
    let mut push = |operation: &str, timing: Timing, batch: Option<usize>| {
        rows.push(BenchRow {
            operation: operation.to_string(),
            batch,
            timing,
            reference_ns: reference(&CRYPTO_REFERENCE_NS, operation),
        })
    };
    push(
        op::GENERATE,
        measure(WARMUP, samples, || generate_attestation(&rev, &payload, domain, &id)),
        None,
    );
    let key = attest_key(&rev, domain);
    push(
        op::VERIFY,
        measure(WARMUP, samples, || verify_attestation_with_key(&att, &payload, &key)),
        None,
    );
    push(
        op::BINDING,
        measure(WARMUP, samples, || sha256(&payload) == att.obj_hash),
        None,
    );
    push(
        op::HKDF_SINGLE,
        measure(WARMUP, samples, || derive_key(&rev, MEMPOOL_ATTEST_INFO, &[])),
        None,
    );
    push(
        op::HKDF_ATTEST,
        measure(WARMUP, samples, || attest_key(&rev, domain)),
        None,
    );
    push(
        op::HKDF_ALL,
        measure(WARMUP, samples, || derive_canonical_streams(&rev)),
        None,
    );
    push(
        op::ID_COM,
        measure(WARMUP, samples, || id_commitment(&rev, salt, domain)),
        None,
    );
    push(op::SHA_244, measure(WARMUP, samples, || sha256(&input_244)), None);
    push(
        op::ARGON2,
        measure(1, ARGON2_SAMPLES, || {
            encapsulate_rev(b"correct horse battery staple", &salt)
        }),
        None,
    );

    let batch = signed_batch(&mut work, 2000, 5);
    let window = bench_window(5);
    let registry = work.registry();
    push(
        op::LIGHT,
        measure(WARMUP, samples, || light_check_batch(&batch, &registry, &window)),
        Some(2000),
    );

    let median = |name: &str| rows.iter().find(|r| r.operation == name).unwrap().timing.median_ns;
    let light = median(op::LIGHT) / 2000.0;
    let (generate, verify) = (median(op::GENERATE), median(op::VERIFY));
    let checks = vec![
        Check {
            name: "light_check_below_ed25519",
            passed: light < ED25519_VERIFY_NS,
            soft: true,
            detail: format!("{} per tx vs {}", fmt_ns(light), fmt_ns(ED25519_VERIFY_NS)),
        },
        Check {
            name: "verify_not_slower_than_generate",
            passed: verify <= generate,
            soft: true,
            detail: format!("verify {} generate {}", fmt_ns(verify), fmt_ns(generate)),
        },
    ];
    BenchReport {
        name: "bench-crypto",
        host: Host::detect(),
        rows,
        checks,
    }
}

fn bench_window(slot: u64) -> DomainWindow {
    DomainWindow {
        chain_id: Workload::CHAIN_ID,
        slot,
        window: PipelineConfig::default().domain_window_slots,
    }
}

/// `n` transfers over disjoint account pairs where the account set allows it.
fn signed_batch(work: &mut Workload, n: usize, slot: u64) -> Vec<Transaction> {
    let accounts = work.accounts.len();
    (0..n)
        .map(|i| work.transfer((2 * i) % accounts, (2 * i + 1) % accounts, i as u64, slot))
        .collect()
}

fn build_block(txs: &[Transaction], root: [u8; 32], slot: u64) -> Block {
    let tx_leaves: Vec<[u8; 32]> = txs.iter().map(|tx| tx.attestation().obj_hash).collect();
    let attest_leaves: Vec<[u8; 32]> = txs.iter().map(|tx| sha256(&tx.attestation().encode())).collect();
    Block {
        header: BlockHeader {
            slot_number: slot,
            parent_hash: [0; 32],
            state_root: root,
            tx_merkle_root: merkle_root(&tx_leaves),
            attest_merkle_root: merkle_root(&attest_leaves),
            poh_hash: [0; 32],
            leader_id_com: [0; 32],
            timestamp: slot * 400,
            tx_count: txs.len() as u32,
        },
        transactions: txs.to_vec(),
    }
}

pub fn cmd_bench_pipeline(seed: u64, batch_sizes: &[usize], samples: usize) -> BenchReport {
    let samples = samples.max(MIN_SAMPLES);
    let slot = 5;
    let window = bench_window(slot);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut light_per_tx = Vec::new();

    for &n in batch_sizes {
        let mut work = Workload::new(seed, 64, (2 * n).max(64));
        let txs = signed_batch(&mut work, n, slot);
        let registry = work.registry();
        let witnesses: Vec<Option<Witness>> = txs.iter().map(|tx| Some(work.witness_for(tx))).collect();
        let state = work.state.clone();
        let graph = build_dependency_graph(&txs);
        let (post, _) = execute_batch(&state, &txs, &graph, Parallelism::Global);
        let block = build_block(&txs, state_root(&post), slot);

        let counter = ProofCounter::default();
        let proved = prove_block(&block, &witnesses, &counter);
        let want = (n as u64, n.saturating_sub(1) as u64);
        let got = (counter.proofs(), counter.aggregations());
        checks.push(Check {
            name: "prove_operation_count",
            passed: proved.is_ok() && got == want,
            soft: false,
            detail: format!("n={n} proofs={} aggregations={}", got.0, got.1),
        });

        let timings = [
            (
                op::ATTEST_CHECK,
                measure(WARMUP, samples, || light_check_batch(&txs, &registry, &window)),
            ),
            (
                op::EXECUTE,
                measure(WARMUP, samples, || {
                    execute_batch(&state, &txs, &build_dependency_graph(&txs), Parallelism::Global)
                }),
            ),
            (op::STATE_ROOT, measure(WARMUP, samples, || state_root(&post))),
            (
                op::PROVE,
                measure(WARMUP, samples, || {
                    prove_block(&block, &witnesses, &ProofCounter::default())
                }),
            ),
            (
                op::BLOCK_BUILD,
                measure(WARMUP, samples, || {
                    encode_block(&build_block(&txs, block.header.state_root, slot))
                }),
            ),
            (
                op::END_TO_END,
                measure(WARMUP, samples, || {
                    let (verdicts, _) = light_check_batch(&txs, &registry, &window);
                    assert!(verdicts.iter().all(Result::is_ok));
                    let (post, _) = execute_batch(&state, &txs, &build_dependency_graph(&txs), Parallelism::Global);
                    let block = build_block(&txs, state_root(&post), slot);
                    let proved = prove_block(&block, &witnesses, &ProofCounter::default());
                    (encode_block(&block), proved.is_ok())
                }),
            ),
        ];
        for (operation, timing) in timings {
            rows.push(BenchRow {
                operation: operation.to_string(),
                batch: Some(n),
                timing,
                reference_ns: (n == 2000)
                    .then(|| reference(&PIPELINE_REFERENCE_2K_NS, operation))
                    .flatten(),
            });
        }
        let median = |name: &str| {
            rows.iter()
                .rev()
                .find(|r| r.operation == name)
                .unwrap()
                .timing
                .median_ns
        };
        light_per_tx.push((n, median(op::ATTEST_CHECK) / n.max(1) as f64));
        if n == 2000 {
            let e2e = median(op::END_TO_END);
            checks.push(Check {
                name: "end_to_end_2000_within_slot",
                passed: e2e < SLOT_BUDGET_NS,
                soft: true,
                detail: format!("{} vs {}", fmt_ns(e2e), fmt_ns(SLOT_BUDGET_NS)),
            });
            let per_tx = median(op::ATTEST_CHECK) / 2000.0;
            checks.push(Check {
                name: "attest_check_2000_per_tx",
                passed: per_tx < LIGHT_CHECK_BUDGET_NS,
                soft: true,
                detail: format!("{} vs {}", fmt_ns(per_tx), fmt_ns(LIGHT_CHECK_BUDGET_NS)),
            });
        }
    }

    light_per_tx.sort_by_key(|&(n, _)| n);
    if light_per_tx.len() > 1 {
        let flat = light_per_tx.windows(2).all(|w| w[1].1 <= w[0].1 * TREND_SLACK);
        let trend: Vec<String> = light_per_tx
            .iter()
            .map(|(n, v)| format!("{n}:{}", fmt_ns(*v)))
            .collect();
        checks.push(Check {
            name: "attest_check_per_tx_trend",
            passed: flat,
            soft: true,
            detail: trend.join(" "),
        });
    }
    BenchReport {
        name: "bench-pipeline",
        host: Host::detect(),
        rows,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_samples() {
        let t = measure(2, 31, || std::thread::sleep(std::time::Duration::from_micros(50)));
        assert_eq!(t.samples, 31);
        assert_eq!(t.iters_per_sample, 1);
        assert!(t.median_ns >= 50_000.0);
    }

    #[test]
    fn formats_durations() {
        assert_eq!(fmt_ns(129.0), "129 ns");
        assert_eq!(fmt_ns(2_270.0), "2.27 us");
        assert_eq!(fmt_ns(7_690_000.0), "7.69 ms");
    }
}
