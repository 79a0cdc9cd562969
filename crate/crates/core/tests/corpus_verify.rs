//! The corpus contracts verify with z3, carry over to the ISA with their
//! evidence, and agree with concrete runs. The branching motor fixture is
//! exercised by the acceptance suite.

use std::time::Duration;

use rvbir::contracts::*;
use rvbir::corpus::{self, storechain};
use rvbir::isa::decode;
use rvbir::lifter::{check_simulation_with, lift_off_by_one_imm};
use rvbir::smt::{model_audit, ProcessSolver};
use rvbir::symbolic::Heuristics;

const FIXTURES: [&str; 7] = [
    "incr",
    "incr_o1",
    "mod2",
    "swap",
    "isqrt",
    "chacha_qr",
    "trap_entry_mini",
];

fn solver() -> ProcessSolver {
    let program = std::env::var("RVBIR_SOLVER").unwrap_or_else(|_| "z3".into());
    ProcessSolver::z3(&program, Duration::from_secs(30), 1)
}

fn options(rc: &RiscvContract) -> VerifyOptions {
    VerifyOptions {
        heuristics: Heuristics {
            unroll: rc.unroll.unwrap_or(0),
            ..Heuristics::default()
        },
        jobs: 1,
    }
}

#[test]
fn fixtures_verify_and_backlift() {
    for name in FIXTURES {
        let f = corpus::fixture(name).unwrap();
        let rc = f.riscv_contract();
        let p = f.prepare().unwrap();
        let r = verify(&p.bir, &solver(), &options(&rc)).unwrap();
        assert_eq!(
            r.verdict,
            ContractVerdict::Verified,
            "{name}: {:?}",
            r.leaves
        );
        let rep = report(&rc, &p, &r, 200, 7).unwrap();
        assert_eq!(rep.status, ReportStatus::Holds, "{name}: {}", rep.statement);
        assert!(rep.evidence.iter().all(|e| e.passed), "{name}");
    }
    assert_eq!(model_audit().1, 0);
}

#[test]
fn fixtures_are_sound_on_500_concrete_runs() {
    for name in FIXTURES {
        let f = corpus::fixture(name).unwrap();
        let rc = f.riscv_contract();
        let p = f.prepare().unwrap();
        let r = verify(&p.bir, &solver(), &options(&rc)).unwrap();
        let s = r.structure.as_ref().expect("structure");
        let sr = soundness_sample(&rc, &p, s, 500, 11, 100_000);
        assert_eq!(sr.runs, 500, "{name}");
        assert!(sr.all_matched(), "{name}: {:?}", sr.failures);
        let c = corroborate(&rc, &p.slice, 500, 12, 100_000);
        assert!(c.all_passed(), "{name}: {:?}", c.failures);
    }
}

#[test]
fn off_by_one_incr_is_refuted_and_replays() {
    let f = corpus::fixture("incr").unwrap();
    let text = f.contract.replace("pre_x10 + 1", "pre_x10 + 2");
    assert_ne!(text, f.contract);
    let rc = RiscvContract::parse(&text).unwrap();
    let p = prepare(f.listing, &rc).unwrap();
    let r = verify(&p.bir, &solver(), &options(&rc)).unwrap();
    let ContractVerdict::Refuted { counterexample, .. } = &r.verdict else {
        panic!("{:?}", r.verdict)
    };
    let isa = replay_isa(&rc, &p.slice, counterexample, 100);
    assert!(isa.pre_holds && isa.violation, "{isa:?}");
    let bir = replay_bir(&p.bir, counterexample, 100);
    assert!(bir.pre_holds && bir.violation, "{bir:?}");
    assert!(counterexample_summary(counterexample).contains_key("pre_x10"));
    let rep = report(&rc, &p, &r, 100, 3).unwrap();
    assert_eq!(rep.status, ReportStatus::Refuted);
}

#[test]
fn loops_without_unrolling_are_unknown() {
    let f = corpus::fixture("isqrt").unwrap();
    let rc = f.riscv_contract();
    let p = f.prepare().unwrap();
    let r = verify(&p.bir, &solver(), &VerifyOptions::default()).unwrap();
    assert!(
        matches!(r.verdict, ContractVerdict::Unknown(_)),
        "{:?}",
        r.verdict
    );
    let rep = report(&rc, &p, &r, 50, 1).unwrap();
    assert_eq!(rep.status, ReportStatus::Unknown);
}

#[test]
fn a_broken_lifter_invalidates_the_report() {
    let f = corpus::fixture("incr").unwrap();
    let rc = f.riscv_contract();
    let p = f.prepare().unwrap();
    let r = verify(&p.bir, &solver(), &options(&rc)).unwrap();
    let sims: Vec<_> = p
        .lift_map
        .instrs
        .iter()
        .map(|(addr, raw)| {
            check_simulation_with(
                &lift_off_by_one_imm,
                &decode(raw.word).unwrap(),
                *addr,
                100,
                5,
            )
        })
        .collect();
    let translations = check_translation(&rc, 100, 5);
    let rep = backlift(&rc, &r, &p.lift_map, &sims, &translations).unwrap();
    assert_eq!(rep.status, ReportStatus::Invalid, "{}", rep.statement);
    assert!(matches!(
        backlift(&rc, &r, &p.lift_map, &[], &translations),
        Err(ContractError::EvidenceMissing(_))
    ));
}

#[test]
fn forbidden_labels_refute() {
    let f = corpus::fixture("mod2").unwrap();
    let mut rc = f.riscv_contract();
    rc.forbidden.insert(0x10604);
    let p = prepare(f.listing, &rc).unwrap();
    let r = verify(&p.bir, &solver(), &options(&rc)).unwrap();
    assert!(
        matches!(r.verdict, ContractVerdict::Refuted { .. }),
        "{:?}",
        r.verdict
    );
}

#[test]
fn store_chains_grow_faster_than_their_length() {
    let mut sizes = Vec::new();
    for n in [8, 16, 32, 64] {
        let (text, rc) = storechain(n);
        let p = prepare(&text, &rc).unwrap();
        let heuristics = Heuristics {
            abbrev_threshold: None,
            abbrev_stores: false,
            ..Heuristics::default()
        };
        let r = verify(
            &p.bir,
            &solver(),
            &VerifyOptions {
                heuristics,
                jobs: 1,
            },
        )
        .unwrap();
        assert_eq!(r.verdict, ContractVerdict::Verified, "n = {n}");
        sizes.push(r.structure.unwrap().max_leaf_size());
    }
    for w in sizes.windows(2) {
        assert!(w[1] >= 2 * w[0], "{sizes:?}");
    }
}

#[test]
fn entries_outside_the_listing_are_rejected() {
    let f = corpus::fixture("incr").unwrap();
    let mut rc = f.riscv_contract();
    rc.entry = 0x2000;
    assert!(prepare(f.listing, &rc).is_err());
}
