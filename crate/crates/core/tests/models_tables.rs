use std::path::PathBuf;

use ace_runtime::models::*;
use ace_runtime::prover::DEFAULT_BUNDLE_BYTES;
use ace_runtime::wire::{encode_block, Block, BlockHeader};
use ace_runtime::workload::Workload;
use proptest::prelude::*;

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden/tables")
        .join(format!("{name}.csv"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn implemented() -> ImplementedFootprint {
    ImplementedFootprint {
        block_record_bytes: 262,
        witness_bundle_bytes: DEFAULT_BUNDLE_BYTES as u64,
    }
}

#[test]
fn tables_match_golden_csv() {
    for t in all_tables(&CostModelParams::default(), Some(implemented())) {
        assert_eq!(t.to_csv(), golden(t.name), "table {}", t.name);
    }
}

#[test]
fn verification_time_examples() {
    let p = CostModelParams::default();
    assert_eq!(verify_time_us(System::SolanaGpu, 100_000, &p), 200_000);
    assert_eq!(verify_time_us(System::Ace, 1_000_000, &p), 500);
    assert_eq!(verify_time_us(System::SolanaCpu, 0, &p), 0);
    for (n, speedup) in [(1_000, 4), (10_000, 40), (100_000, 400), (1_000_000, 4_000)] {
        assert_eq!(
            verify_time_us(System::SolanaGpu, n, &p) / verify_time_us(System::Ace, n, &p),
            speedup
        );
    }
}

#[test]
fn auth_data_examples() {
    let p = CostModelParams::default();
    assert_eq!(auth_data_per_block(AuthScheme::Ed25519, 10_000, &p), 960_000);
    assert_eq!(auth_data_per_block(AuthScheme::ZkAce, 10_000, &p), 256);
    assert_eq!(auth_data_per_block(AuthScheme::MlDsa, 1_000, &p) / 256, 14_578);
    assert_eq!(auth_data_per_block(AuthScheme::MlDsa, 10_000, &p) / 256, 145_781);
}

#[test]
fn bandwidth_examples() {
    let p = CostModelParams::default();
    let solana = bandwidth_tps(System::SolanaCpu, &p);
    let ace = bandwidth_tps(System::Ace, &p);
    assert_eq!(round_to(solana.tps, 1000), 101_000);
    assert_eq!(round_to(ace.tps, 1000), 512_000);
    let (bytes, tps) = ace.combined.unwrap();
    assert_eq!((bytes, round_to(tps, 1000)), (644, 194_000));
    assert_eq!(fmt_ratio_tenths(1232, bytes), "1.9x");
    // per-tx footprint components
    assert_eq!(p.ace_payload_bytes + 90, p.ace_tx_bytes);
    assert_eq!(
        154 + p.sig_bytes + p.pubkey_bytes + p.solana_overhead_bytes,
        p.solana_tx_bytes
    );
}

#[test]
fn block_size_model_and_real_block() {
    let p = CostModelParams::default();
    assert_eq!(block_bytes_ace(2000, &p), 488_256);
    assert_eq!(block_bytes_solana(2000, &p), 2_464_000);
    let mut w = Workload::new(3, 16, 256);
    let txs: Vec<_> = (0..2000u64)
        .map(|i| w.transfer(i as usize % 256, (i as usize + 1) % 256, i, 0))
        .collect();
    let block = Block {
        header: BlockHeader {
            tx_count: 2000,
            ..Default::default()
        },
        transactions: txs,
    };
    let real = encode_block(&block).len() as u64;
    let model = block_bytes_ace(2000, &p);
    assert_eq!(real, 256 + 2000 * 262);
    assert!(real.abs_diff(model) * 10 <= model, "real {real} vs model {model}");
}

#[test]
fn tables_render_identically_twice() {
    let a: Vec<String> = all_tables(&CostModelParams::default(), None)
        .iter()
        .map(Table::to_text)
        .collect();
    let b: Vec<String> = all_tables(&CostModelParams::default(), None)
        .iter()
        .map(Table::to_text)
        .collect();
    assert_eq!(a, b);
    assert!(a[0].contains("4,000x"));
}

proptest! {
    #[test]
    fn models_are_monotone(n in 0u64..10_000_000, d in 0u64..1000) {
        let p = CostModelParams::default();
        for s in [System::SolanaCpu, System::SolanaGpu, System::Ace] {
            prop_assert!(verify_time_us(s, n, &p) <= verify_time_us(s, n + d, &p));
        }
        for s in [AuthScheme::Ed25519, AuthScheme::MlDsa, AuthScheme::ZkAce] {
            prop_assert!(auth_data_per_block(s, n, &p) <= auth_data_per_block(s, n + d, &p));
        }
        prop_assert!(block_bytes_ace(n, &p) <= block_bytes_ace(n + d, &p));
        prop_assert!(block_bytes_solana(n, &p) <= block_bytes_solana(n + d, &p));
    }
}
