//! Random machine states satisfying a contract's precondition.
//!
//! Equality atoms bind one side from the other, preferring parameters;
//! range atoms `v < e` and `v <= e` on a register, CSR, parameter or
//! `mem64` cell pick a value below the bound. Memory near every register
//! value is filled with random bytes. Candidates are checked against the
//! whole precondition and rejected when it fails.

use std::collections::BTreeSet;

use rand::Rng;

use super::lang::{Cmp, RExpr};
use super::{ParamValues, RiscvContract};
use crate::isa::{sample, Csr, MachineState, Reg};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Gpr(Reg),
    Csr(Csr),
    Param(String),
    Mem(u64),
}

fn slot_of(e: &RExpr, s: &MachineState, params: &ParamValues) -> Option<Slot> {
    match e {
        RExpr::Gpr(r) if !r.is_zero() => Some(Slot::Gpr(*r)),
        RExpr::Csr(c) => Some(Slot::Csr(*c)),
        RExpr::Param(p) => Some(Slot::Param(p.clone())),
        RExpr::Mem64(a) => a.eval(s, params).map(Slot::Mem),
        _ => None,
    }
}

fn assign(slot: &Slot, v: u64, s: &mut MachineState, params: &mut ParamValues) {
    match slot {
        Slot::Gpr(r) => s.set_gpr(*r, v),
        Slot::Csr(c) => s.set_csr(*c, v),
        Slot::Param(p) => {
            params.insert(p.clone(), v);
        }
        Slot::Mem(a) => s.store(*a, 8, v),
    }
}

fn fill_around<R: Rng + ?Sized>(s: &mut MachineState, rng: &mut R) {
    for i in 1..32 {
        let base = s.gpr(Reg::from_bits(i)).wrapping_sub(32);
        for k in 0..96 {
            s.mem
                .entry(base.wrapping_add(k))
                .or_insert_with(|| rng.gen());
        }
    }
}

/// A state with random registers and CSRs, memory filled near every
/// register value, and random parameter values.
pub fn random_state<R: Rng + ?Sized>(
    rc: &RiscvContract,
    rng: &mut R,
) -> (MachineState, ParamValues) {
    let mut s = MachineState::new(rc.entry);
    for i in 1..32 {
        s.set_gpr(Reg::from_bits(i), sample::word(rng));
    }
    for c in Csr::ALL {
        s.set_csr(c, sample::word(rng));
    }
    fill_around(&mut s, rng);
    let params = rc
        .params
        .iter()
        .map(|p| (p.clone(), sample::word(rng)))
        .collect();
    (s, params)
}

fn below<R: Rng + ?Sized>(bound: u64, inclusive: bool, rng: &mut R) -> Option<u64> {
    match (inclusive, bound) {
        (false, 0) => None,
        (false, b) => Some(rng.gen_range(0..b)),
        (true, u64::MAX) => Some(rng.gen()),
        (true, b) => Some(rng.gen_range(0..=b)),
    }
}

/// Binds one side of each equality from the other, preferring parameters
/// as targets and never touching a slot in `avoid`.
fn bind_equalities(
    rc: &RiscvContract,
    s: &mut MachineState,
    params: &mut ParamValues,
    avoid: &BTreeSet<Slot>,
) {
    let mut fixed = avoid.clone();
    for a in rc.pre.atoms.iter().filter(|a| a.cmp == Cmp::Eq) {
        let sides = [(&a.rhs, &a.lhs), (&a.lhs, &a.rhs)];
        let param_first = sides.iter().filter(|(t, _)| matches!(t, RExpr::Param(_)));
        let others = sides.iter().filter(|(t, _)| !matches!(t, RExpr::Param(_)));
        for (target, source) in param_first.chain(others) {
            if source.mentions(target) {
                continue;
            }
            let Some(slot) = slot_of(target, s, params) else {
                continue;
            };
            if fixed.contains(&slot) {
                continue;
            }
            if let Some(v) = source.eval(s, params) {
                assign(&slot, v, s, params);
                fixed.insert(slot);
                break;
            }
        }
    }
}

fn candidate<R: Rng + ?Sized>(rc: &RiscvContract, rng: &mut R) -> (MachineState, ParamValues) {
    let (mut s, mut params) = random_state(rc, rng);
    // Equalities first so addresses of memory atoms are final, then the
    // ranges, then the equalities again around the range-bound slots.
    bind_equalities(rc, &mut s, &mut params, &BTreeSet::new());
    let mut ranged = BTreeSet::new();
    for a in &rc.pre.atoms {
        let inclusive = match a.cmp {
            Cmp::Eq => continue,
            Cmp::Ltu => false,
            Cmp::Leu => true,
        };
        let Some(slot) = slot_of(&a.lhs, &s, &params) else {
            continue;
        };
        if ranged.contains(&slot) || a.rhs.mentions(&a.lhs) {
            continue;
        }
        if let Some(v) = a
            .rhs
            .eval(&s, &params)
            .and_then(|b| below(b, inclusive, rng))
        {
            assign(&slot, v, &mut s, &mut params);
            ranged.insert(slot);
        }
    }
    bind_equalities(rc, &mut s, &mut params, &ranged);
    fill_around(&mut s, rng);
    (s, params)
}

/// A state and parameter values satisfying the precondition, or `None`
/// after `tries` rejected candidates.
pub fn sample_pre_state<R: Rng + ?Sized>(
    rc: &RiscvContract,
    rng: &mut R,
    tries: u32,
) -> Option<(MachineState, ParamValues)> {
    (0..tries)
        .map(|_| candidate(rc, rng))
        .find(|(s, params)| rc.pre.eval(s, params) == Some(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, SeedableRng};

    fn contract(pre: &str, params: &str) -> RiscvContract {
        RiscvContract::parse(&format!(
            "name t\nentry 0x100\nparam {params}\npre {pre}\npost 0x104: true\n"
        ))
        .unwrap()
    }

    #[test]
    fn satisfies_equalities_ranges_and_memory() {
        let rc = contract(
            "x10 = pre_a /\\ x11 = pre_b /\\ mem64[pre_a] = pre_va /\\ pre_b < 256 /\\ mem64[x2 + 8] = 7 /\\ mstatus = 0 /\\ mem64[pre_a + 16] <= 9",
            "pre_a pre_b pre_va",
        );
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..200 {
            let (s, p) = sample_pre_state(&rc, &mut rng, 10).expect("sampled");
            assert_eq!(rc.pre.eval(&s, &p), Some(true));
            assert!(p["pre_b"] < 256);
            assert!(s.load(p["pre_a"].wrapping_add(16), 8) <= 9);
        }
    }

    #[test]
    fn small_ranges_cover_the_domain() {
        let rc = contract("x10 <= 3", "p");
        let mut rng = StdRng::seed_from_u64(2);
        let seen: BTreeSet<u64> = (0..200)
            .map(|_| {
                sample_pre_state(&rc, &mut rng, 1)
                    .unwrap()
                    .0
                    .gpr(Reg::new(10).unwrap())
            })
            .collect();
        assert_eq!(seen, BTreeSet::from([0, 1, 2, 3]));
    }

    #[test]
    fn unsatisfiable_preconditions_give_none() {
        let rc = contract("x10 < 0", "p");
        assert!(sample_pre_state(&rc, &mut StdRng::seed_from_u64(3), 20).is_none());
    }
}
