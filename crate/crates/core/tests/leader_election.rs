use ace_runtime::sim::*;

#[test]
fn stake_weighted_frequencies() {
    let validators = [([0x20; 32], 75u64), ([0x10; 32], 25u64)];
    let seed = epoch_seed(3);
    let mut poh = PohChain::new([1; 32], 1);
    let mut wins = [0u32; 2];
    const DRAWS: u32 = 10_000;
    for _ in 0..DRAWS {
        poh.advance(1);
        wins[elect_leader(&poh.hash(), &seed, &validators).unwrap()] += 1;
    }
    let share = wins[0] as f64 / DRAWS as f64;
    assert!((share - 0.75).abs() <= 0.03, "share {share}");
}

#[test]
fn election_is_order_independent_and_deterministic() {
    let a = [([1; 32], 10u64), ([2; 32], 30), ([3; 32], 60)];
    let b = [a[2], a[0], a[1]];
    let seed = epoch_seed(0);
    for i in 0..500u64 {
        let h = poh_advance([9; 32], i);
        let la = elect_leader(&h, &seed, &a).unwrap();
        let lb = elect_leader(&h, &seed, &b).unwrap();
        assert_eq!(a[la].0, b[lb].0);
        assert_eq!(la, elect_leader(&h, &seed, &a).unwrap());
    }
    assert_eq!(
        elect_leader(&[0; 32], &seed, &[([1; 32], 0)]),
        Err(ElectionError::NoStake)
    );
}

#[test]
fn poh_replay_detects_tampering() {
    let mut chain = PohChain::new([4; 32], 64);
    chain.advance_to_slot(10);
    assert!(poh_verify([4; 32], chain.hash(), 640));
    let mut tampered = chain.hash();
    tampered[0] ^= 1;
    assert!(!poh_verify([4; 32], tampered, 640));
    assert!(poh_verify([4; 32], [4; 32], 0));
}
