use ace_runtime::config::KeyValues;
use ace_runtime::finality::FinalityStatus;
use ace_runtime::sim::*;

fn small() -> SimConfig {
    SimConfig {
        slots: 12,
        txs_per_slot: 200,
        accounts_per_partition: 64,
        clients: 16,
        ..SimConfig::default()
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for s in Scenario::ALL {
        let a = run_scenario(&small(), s, 42).unwrap();
        let b = run_scenario(&small(), s, 42).unwrap();
        assert_eq!(a.render(), b.render(), "{s}");
        assert_eq!(a.render_audit(), b.render_audit(), "{s}");
    }
    let c = run_scenario(&small(), Scenario::Normal, 43).unwrap();
    assert_ne!(
        c.render(),
        run_scenario(&small(), Scenario::Normal, 42).unwrap().render()
    );
}

#[test]
fn every_scenario_meets_its_expectations() {
    for s in Scenario::ALL {
        let r = run_scenario(&small(), s, 7).unwrap();
        assert!(r.check().is_empty(), "{s}: {:?}", r.check());
        assert_eq!(r.max_votes_per_validator_slot, 1);
    }
}

#[test]
fn backup_path_and_rollback_timing() {
    let cfg = small();
    let t = cfg.target_slot;
    let r = run_scenario(&cfg, Scenario::BuilderWithholdsProof, 1).unwrap();
    let b = r.block(t).unwrap();
    assert!(b.via_backup && b.slashed && b.hard_ms.unwrap() <= 2400);
    assert_eq!(r.slashes.len(), 1);

    let r = run_scenario(&cfg, Scenario::WitnessShortfallRollback, 1).unwrap();
    let b = r.block(t).unwrap();
    assert_eq!(b.status, Some(FinalityStatus::RolledBack));
    assert_eq!(b.rolled_back_ms, Some(2400));
    assert_eq!(b.availability, Some(false));

    let r = run_scenario(&cfg, Scenario::InvalidFcSlash, 1).unwrap();
    let b = r.block(t).unwrap();
    assert_eq!(b.status, Some(FinalityStatus::RolledBack));
    assert!(b.rolled_back_ms.unwrap() < 2400);

    let r = run_scenario(&cfg, Scenario::ForgedAttestationFlood, 1).unwrap();
    assert_eq!(r.forged_hard, 0);
    assert!(r.block(t).unwrap().forged_txs > 0);
}

#[test]
fn spread_gossip_still_meets_backup_deadline() {
    let cfg = SimConfig {
        witness_schedule: WitnessSchedule::Spread(2),
        ..small()
    };
    let r = run_scenario(&cfg, Scenario::BackupProves, 3).unwrap();
    assert!(r.check().is_empty(), "{:?}", r.check());
}

#[test]
fn network_jitter_keeps_safety() {
    let cfg = SimConfig {
        network: NetworkModel {
            base_latency_ms: 20,
            jitter_ms: 30,
            drop_probability: 0.05,
        },
        ..small()
    };
    for s in Scenario::ALL {
        let r = run_scenario(&cfg, s, 9).unwrap();
        assert!(r.safety_violations.is_empty(), "{s}: {:?}", r.safety_violations);
        assert_eq!(r.forged_hard, 0);
    }
}

#[test]
fn unequal_stakes_from_config() {
    let kv = KeyValues::parse(
        "validators = 5\nstakes = 10,20,30,40,50\nslots = 8\ntxs_per_slot = 50\naccounts_per_partition = 32\n",
    )
    .unwrap();
    let cfg = SimConfig::from_kv(&kv).unwrap();
    let r = run_scenario(&cfg, Scenario::Normal, 2).unwrap();
    assert!(r.check().is_empty(), "{:?}", r.check());
    let kv = KeyValues::parse("validators = 2\nstakes = 1,2,3\n").unwrap();
    assert!(SimConfig::from_kv(&kv).is_err());
}

#[test]
fn audit_lines_have_the_documented_shape() {
    let r = run_scenario(&small(), Scenario::WitnessShortfallRollback, 5).unwrap();
    let audit = r.render_audit();
    assert!(audit
        .lines()
        .all(|l| l.starts_with("t_ms=") && l.contains(" node=") && l.contains(" event=")));
    assert!(audit.contains("from=BackupWait to=RolledBack event=backup-timeout"));
}
