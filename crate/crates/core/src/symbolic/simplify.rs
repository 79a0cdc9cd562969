//! Expression simplification: constant folding, local algebraic rules and
//! load-over-store resolution.
//!
//! The purely syntactic part is [`simplify_exp`]. [`Simplifier`] adds the
//! context of a symbolic state: abbreviation definitions to look through and
//! a solver to decide address equality or disjointness under the path
//! condition. An undecided query leaves the term unchanged.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{ExecStats, SymbolicState};
use crate::bir::eval::{binop, castop, predop, unop};
use crate::bir::{mask, BinOp, BirType, CastOp, Exp, PredOp, UnOp, Word};
use crate::smt::{Obligation, ObligationKind, Solver, Verdict};

/// Rule applications allowed on a single node before giving up.
const NODE_BUDGET: u32 = 32;
/// Whole-term passes before giving up on a fixpoint.
const PASSES: u32 = 4;

/// Type of `e` assuming it is well typed; follows a single path to a leaf.
pub fn shallow_type(e: &Exp) -> BirType {
    match e {
        Exp::Const(w) => w.ty(),
        Exp::Den(v) => v.ty,
        Exp::Sym(s) => s.ty,
        Exp::Unary(_, a) | Exp::Bin(_, a, _) | Exp::Ite(_, a, _) => shallow_type(a),
        Exp::Pred(..) => BirType::Imm1,
        Exp::Cast(_, _, w) | Exp::Load(_, _, w) => BirType::imm(*w).expect("valid width"),
        Exp::Store(..) => BirType::Mem,
    }
}

fn width(e: &Exp) -> u32 {
    shallow_type(e).width().unwrap_or(0)
}

fn is_const(e: &Exp, bits: u64) -> bool {
    matches!(e, Exp::Const(w) if w.bits() == bits)
}

fn fold(e: &Exp) -> Option<Word> {
    match e {
        Exp::Unary(op, a) => Some(unop(*op, a.as_const()?)),
        Exp::Bin(op, a, b) => Some(binop(*op, a.as_const()?, b.as_const()?)),
        Exp::Pred(op, a, b) => Some(predop(*op, a.as_const()?, b.as_const()?)),
        Exp::Cast(op, a, w) => Some(castop(*op, a.as_const()?, *w)),
        _ => None,
    }
}

fn commutative(op: BinOp) -> bool {
    matches!(
        op,
        BinOp::Plus | BinOp::Mult | BinOp::And | BinOp::Or | BinOp::Xor
    )
}

/// One rewrite step at the root of `e`, assuming its children are already
/// simplified.
pub fn local_rule(e: &Exp) -> Option<Exp> {
    if let Some(w) = fold(e) {
        return Some(Exp::Const(w));
    }
    match e {
        Exp::Bin(op, a, b) => bin_rule(*op, a, b),
        Exp::Unary(op, a) => match (op, &**a) {
            (UnOp::Not, Exp::Unary(UnOp::Not, x))
            | (UnOp::ChangeSign, Exp::Unary(UnOp::ChangeSign, x)) => Some((**x).clone()),
            (UnOp::Not, Exp::Pred(PredOp::Equal, x, y)) => {
                Some(Exp::Pred(PredOp::NotEqual, x.clone(), y.clone()))
            }
            (UnOp::Not, Exp::Pred(PredOp::NotEqual, x, y)) => {
                Some(Exp::Pred(PredOp::Equal, x.clone(), y.clone()))
            }
            _ => None,
        },
        Exp::Pred(op, a, b) if a == b => Some(Exp::Const(Word::bool(matches!(
            op,
            PredOp::Equal | PredOp::LessOrEqualUnsigned
        )))),
        Exp::Ite(c, a, b) => match c.as_const() {
            Some(w) => Some(if w.is_true() {
                (**a).clone()
            } else {
                (**b).clone()
            }),
            None if a == b => Some((**a).clone()),
            None => None,
        },
        Exp::Cast(op, a, w) => cast_rule(*op, a, *w),
        _ => None,
    }
}

fn bin_rule(op: BinOp, a: &Arc<Exp>, b: &Arc<Exp>) -> Option<Exp> {
    if commutative(op) && a.as_const().is_some() && b.as_const().is_none() {
        return Some(Exp::Bin(op, b.clone(), a.clone()));
    }
    let w = width(a);
    let zero = is_const(b, 0);
    let keep_a = || Some((**a).clone());
    let zero_word = || Some(Exp::word(w, 0));
    match op {
        BinOp::Plus => {
            if zero {
                return keep_a();
            }
            if let (Exp::Bin(BinOp::Plus, x, c1), Some(c2)) = (&**a, b.as_const()) {
                if let Some(c1) = c1.as_const() {
                    return Some(Exp::Bin(
                        BinOp::Plus,
                        x.clone(),
                        Arc::new(Exp::Const(binop(BinOp::Plus, c1, c2))),
                    ));
                }
            }
            None
        }
        BinOp::Minus => {
            if zero {
                return keep_a();
            }
            if a == b {
                return zero_word();
            }
            if let Some(c) = b.as_const() {
                return Some(Exp::Bin(
                    BinOp::Plus,
                    a.clone(),
                    Arc::new(Exp::Const(unop(UnOp::ChangeSign, c))),
                ));
            }
            match &**a {
                Exp::Bin(BinOp::Plus, x, c) if x == b && c.as_const().is_some() => {
                    Some((**c).clone())
                }
                _ => None,
            }
        }
        BinOp::Mult => {
            if zero {
                zero_word()
            } else if is_const(b, 1) {
                keep_a()
            } else {
                None
            }
        }
        BinOp::DivUnsigned => is_const(b, 1).then(|| (**a).clone()),
        BinOp::And => {
            if zero {
                zero_word()
            } else if is_const(b, mask(w)) || a == b {
                keep_a()
            } else {
                None
            }
        }
        BinOp::Or => {
            if zero || a == b {
                keep_a()
            } else if is_const(b, mask(w)) {
                Some((**b).clone())
            } else {
                None
            }
        }
        BinOp::Xor => {
            if zero {
                keep_a()
            } else if a == b {
                zero_word()
            } else {
                None
            }
        }
        BinOp::LShift | BinOp::RShiftUnsigned | BinOp::RShiftSigned => zero.then(|| (**a).clone()),
    }
}

fn cast_rule(op: CastOp, a: &Arc<Exp>, w: u32) -> Option<Exp> {
    if width(a) == w {
        return Some((**a).clone());
    }
    match (op, &**a) {
        (CastOp::Low, Exp::Cast(CastOp::Low, x, _)) => Some(Exp::Cast(CastOp::Low, x.clone(), w)),
        (CastOp::Low, Exp::Cast(ext, x, _)) => {
            let wx = width(x);
            if wx == w {
                Some((**x).clone())
            } else if wx > w {
                Some(Exp::Cast(CastOp::Low, x.clone(), w))
            } else {
                Some(Exp::Cast(*ext, x.clone(), w))
            }
        }
        (CastOp::SignedExtend, Exp::Cast(CastOp::SignedExtend, x, _))
        | (CastOp::UnsignedExtend, Exp::Cast(CastOp::UnsignedExtend, x, _)) => {
            Some(Exp::Cast(op, x.clone(), w))
        }
        _ => None,
    }
}

fn apply_rules(e: &Exp, extra: &mut dyn FnMut(&Exp) -> Option<Exp>) -> Option<Exp> {
    let mut cur: Option<Exp> = None;
    for _ in 0..NODE_BUDGET {
        let node = cur.as_ref().unwrap_or(e);
        match local_rule(node).or_else(|| extra(node)) {
            Some(next) => cur = Some(next),
            None => break,
        }
    }
    cur
}

fn fixpoint(e: &Arc<Exp>, extra: &mut dyn FnMut(&Exp) -> Option<Exp>) -> Arc<Exp> {
    let mut cur = e.clone();
    for _ in 0..PASSES {
        let next = cur.rewrite(&mut |n| apply_rules(n, extra));
        if Arc::ptr_eq(&next, &cur) {
            break;
        }
        cur = next;
    }
    cur
}

/// Context-free simplification; same-address load-over-store forwarding
/// and disjointness of constant offsets from a common base still apply.
pub fn simplify_exp(e: &Arc<Exp>) -> Arc<Exp> {
    fixpoint(e, &mut |n| match n {
        Exp::Load(m, a, w) => {
            resolve_load(m, a, *w, &mut |_| None, &mut |_, _, _, _| Relation::Unknown)
        }
        _ => None,
    })
}

/// How a load range relates to a store range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// The load lies inside the store, starting this many bytes in.
    Contains(u64),
    Disjoint,
    Unknown,
}

/// Splits an address into a base term and a constant offset.
fn base_offset(a: &Arc<Exp>) -> (Option<&Arc<Exp>>, u64) {
    match &**a {
        Exp::Const(w) => (None, w.bits()),
        Exp::Bin(BinOp::Plus, x, c) => match c.as_const() {
            Some(c) => (Some(x), c.bits()),
            None => (Some(a), 0),
        },
        _ => (Some(a), 0),
    }
}

fn ranges(d_load: u64, store_bytes: u64, load_bytes: u64) -> Relation {
    if d_load as u128 + load_bytes as u128 <= store_bytes as u128 {
        Relation::Contains(d_load)
    } else if d_load >= store_bytes && d_load.wrapping_neg() >= load_bytes {
        Relation::Disjoint
    } else {
        Relation::Unknown
    }
}

/// Relation decided from the shape of the addresses alone.
pub fn syntactic_relation(
    store: &Arc<Exp>,
    store_bytes: u64,
    load: &Arc<Exp>,
    load_bytes: u64,
) -> Relation {
    let (sb, so) = base_offset(store);
    let (lb, lo) = base_offset(load);
    if sb == lb {
        ranges(lo.wrapping_sub(so), store_bytes, load_bytes)
    } else {
        Relation::Unknown
    }
}

/// Formula stating that `[a, a+na)` and `[b, b+nb)` do not overlap.
pub fn disjoint_formula(a: &Arc<Exp>, na: u64, b: &Arc<Exp>, nb: u64) -> Exp {
    let far = |x: &Arc<Exp>, y: &Arc<Exp>, n: u64| {
        Exp::not(Exp::pred(
            PredOp::LessThanUnsigned,
            Exp::bin(BinOp::Minus, x.clone(), y.clone()),
            Exp::c64(n),
        ))
    };
    Exp::and(far(b, a, na), far(a, b, nb))
}

fn extract(v: &Arc<Exp>, offset: u64, w: u32) -> Exp {
    let shifted = if offset == 0 {
        v.clone()
    } else {
        let vw = width(v);
        Arc::new(Exp::bin(
            BinOp::RShiftUnsigned,
            v.clone(),
            Exp::word(vw, 8 * offset),
        ))
    };
    Exp::Cast(CastOp::Low, shifted, w)
}

/// Relation of a store (address, bytes) to a load (address, bytes).
type RelateFn<'a> = dyn FnMut(&Arc<Exp>, u64, &Arc<Exp>, u64) -> Relation + 'a;

/// Walks the store chain under a load while each store is provably disjoint,
/// looking through abbreviations with `def`.
fn resolve_load(
    m: &Arc<Exp>,
    addr: &Arc<Exp>,
    w: u32,
    def: &mut dyn FnMut(&Exp) -> Option<Arc<Exp>>,
    relate: &mut RelateFn<'_>,
) -> Option<Exp> {
    let load_bytes = (w / 8) as u64;
    let mut cur = m.clone();
    let mut moved = false;
    loop {
        let node = match &*cur {
            Exp::Sym(_) => match def(&cur) {
                Some(d) => d,
                None => break,
            },
            _ => cur.clone(),
        };
        let Exp::Store(inner, sa, v) = &*node else {
            break;
        };
        let store_bytes = (width(v) / 8) as u64;
        let rel = match syntactic_relation(sa, store_bytes, addr, load_bytes) {
            Relation::Unknown => relate(sa, store_bytes, addr, load_bytes),
            r => r,
        };
        match rel {
            Relation::Contains(d) => return Some(extract(v, d, w)),
            Relation::Disjoint => {
                cur = inner.clone();
                moved = true;
            }
            Relation::Unknown => break,
        }
    }
    moved.then(|| Exp::Load(cur, addr.clone(), w))
}

/// Goals decided under an entry precondition alone. Such answers hold on
/// every path from that entry, so they are asked once per goal.
#[derive(Debug, Default)]
pub struct ProofCache(Mutex<HashMap<ProofKey, bool>>);

/// Hypotheses and goal.
type ProofKey = (Vec<Arc<Exp>>, Exp);

impl ProofCache {
    fn get(&self, key: &ProofKey) -> Option<bool> {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(key)
            .copied()
    }

    fn put(&self, key: ProofKey, v: bool) {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, v);
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Simplification in the context of a symbolic state.
pub struct Simplifier<'a> {
    pub state: &'a SymbolicState,
    /// Decides address relations the syntax cannot; `None` disables it.
    pub solver: Option<&'a dyn Solver>,
    /// Answers under the entry precondition; `None` always asks under the
    /// whole path.
    pub cache: Option<&'a ProofCache>,
    pub stats: &'a mut ExecStats,
}

impl Simplifier<'_> {
    pub fn simplify(&mut self, e: &Arc<Exp>) -> Arc<Exp> {
        let state = self.state;
        let solver = self.solver;
        let cache = self.cache;
        let stats = &mut *self.stats;
        fixpoint(e, &mut |n| match n {
            Exp::Load(m, a, w) => resolve_load(
                m,
                a,
                *w,
                &mut |s| match s {
                    Exp::Sym(sym) => state.definition(sym).cloned(),
                    _ => None,
                },
                &mut |sa, ns, la, nl| match solver {
                    Some(solver) => solver_relation(state, solver, cache, stats, sa, ns, la, nl),
                    None => Relation::Unknown,
                },
            ),
            _ => None,
        })
    }
}

fn entailed(
    state: &SymbolicState,
    solver: &dyn Solver,
    cache: Option<&ProofCache>,
    stats: &mut ExecStats,
    goal: Exp,
) -> bool {
    let goal = (*state.expand(&Arc::new(goal))).clone();
    let hyps = state.expanded_path();
    if let Some(cache) = cache.filter(|_| !state.base().is_empty()) {
        let key = (state.base().to_vec(), goal.clone());
        let proved = match cache.get(&key) {
            Some(v) => v,
            None => {
                let base = state.base().iter().map(|c| (**c).clone()).collect();
                let v = ask(state, solver, stats, base, goal.clone());
                cache.put(key, v);
                v
            }
        };
        if proved || state.path.len() == state.base().len() && state.path.iter().eq(state.base()) {
            return proved;
        }
    }
    ask(state, solver, stats, hyps, goal)
}

fn ask(
    state: &SymbolicState,
    solver: &dyn Solver,
    stats: &mut ExecStats,
    hyps: Vec<Exp>,
    goal: Exp,
) -> bool {
    let ob = Obligation::new(
        ObligationKind::Simplification,
        hyps,
        goal,
        &format!("simplify at {}", state.at),
    );
    stats.simplification_queries += 1;
    match solver.check(&ob) {
        Ok(Verdict::Unsat) => true,
        Ok(Verdict::Sat(_)) => false,
        Ok(Verdict::Unknown(_)) => {
            stats.unknown_verdicts += 1;
            false
        }
        Err(_) => {
            stats.solver_errors += 1;
            false
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solver_relation(
    state: &SymbolicState,
    solver: &dyn Solver,
    cache: Option<&ProofCache>,
    stats: &mut ExecStats,
    sa: &Arc<Exp>,
    ns: u64,
    la: &Arc<Exp>,
    nl: u64,
) -> Relation {
    // Disjointness first: separate regions are the common case and the
    // precondition usually decides them.
    if entailed(
        state,
        solver,
        cache,
        stats,
        disjoint_formula(sa, ns, la, nl),
    ) {
        return Relation::Disjoint;
    }
    if nl <= ns && entailed(state, solver, cache, stats, Exp::eq(sa.clone(), la.clone())) {
        return Relation::Contains(0);
    }
    Relation::Unknown
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bir::{eval, Interp, MemValue, Symbol, Value};
    use proptest::prelude::*;

    fn s(n: &str) -> Exp {
        Exp::sym(&Symbol::new(n, BirType::Imm64))
    }

    fn simp(e: Exp) -> Exp {
        (*simplify_exp(&Arc::new(e))).clone()
    }

    #[test]
    fn arithmetic_identities() {
        let x = s("s_x10");
        assert_eq!(
            simp(Exp::bin(
                BinOp::Minus,
                Exp::plus(x.clone(), Exp::c64(1)),
                Exp::c64(1)
            )),
            x
        );
        assert_eq!(
            simp(Exp::bin(BinOp::Xor, x.clone(), x.clone())),
            Exp::c64(0)
        );
        assert_eq!(simp(Exp::plus(Exp::c64(0), x.clone())), x);
        assert_eq!(simp(Exp::plus(Exp::c64(2), Exp::c64(3))), Exp::c64(5));
        assert_eq!(
            simp(Exp::plus(Exp::plus(x.clone(), Exp::c64(8)), Exp::c64(8))),
            Exp::plus(x.clone(), Exp::c64(16))
        );
        assert_eq!(simp(Exp::eq(x.clone(), x.clone())), Exp::tt());
        assert_eq!(simp(Exp::not(Exp::not(x.clone()))), x);
    }

    #[test]
    fn return_address_mask_folds() {
        let e = Exp::bin(
            BinOp::And,
            Exp::plus(Exp::c64(0x10494), Exp::c64(0)),
            Exp::c64(!1),
        );
        assert_eq!(simp(e), Exp::c64(0x10494));
    }

    #[test]
    fn word_casts_collapse() {
        let x = s("x");
        let low = Exp::cast(CastOp::Low, x.clone(), 32);
        let twice = Exp::cast(
            CastOp::SignedExtend,
            Exp::cast(
                CastOp::Low,
                Exp::cast(CastOp::SignedExtend, low.clone(), 64),
                32,
            ),
            64,
        );
        assert_eq!(simp(twice), Exp::cast(CastOp::SignedExtend, low, 64));
    }

    #[test]
    fn load_over_store() {
        let m = Exp::sym(&Symbol::new("M", BirType::Mem));
        let a = s("a");
        let v = s("v");
        let st = Exp::store(m.clone(), a.clone(), v.clone());
        assert_eq!(simp(Exp::load(st.clone(), a.clone(), 64)), v);
        let below = Exp::plus(a.clone(), Exp::c64(8));
        assert_eq!(
            simp(Exp::load(st.clone(), below.clone(), 64)),
            Exp::load(m.clone(), below, 64)
        );
        let inner = Exp::plus(a.clone(), Exp::c64(4));
        assert_eq!(
            simp(Exp::load(st.clone(), inner, 32)),
            Exp::cast(
                CastOp::Low,
                Exp::bin(BinOp::RShiftUnsigned, v.clone(), Exp::c64(32)),
                32
            )
        );
        let overlap = Exp::plus(a.clone(), Exp::c64(4));
        let e = Exp::load(st.clone(), overlap, 64);
        assert_eq!(simp(e.clone()), e);
        let other = Exp::load(st, s("b"), 64);
        assert_eq!(simp(other.clone()), other);
    }

    fn arb_exp() -> impl Strategy<Value = Exp> {
        let leaf = prop_oneof![
            any::<u64>().prop_map(Exp::c64),
            prop_oneof![Just(0u64), Just(1), Just(u64::MAX)].prop_map(Exp::c64),
            prop_oneof![Just("x"), Just("y")].prop_map(s),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let ops = prop_oneof![
                Just(BinOp::Plus),
                Just(BinOp::Minus),
                Just(BinOp::Mult),
                Just(BinOp::And),
                Just(BinOp::Or),
                Just(BinOp::Xor),
                Just(BinOp::LShift),
                Just(BinOp::RShiftUnsigned),
            ];
            prop_oneof![
                (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Exp::bin(op, a, b)),
                inner.clone().prop_map(|a| Exp::unary(UnOp::Not, a)),
                inner.clone().prop_map(|a| Exp::cast(
                    CastOp::SignedExtend,
                    Exp::cast(CastOp::Low, a, 32),
                    64
                )),
                (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, a, b)| Exp::ite(
                    Exp::pred(PredOp::LessThanUnsigned, c, Exp::c64(1 << 32)),
                    a,
                    b
                )),
                (inner.clone(), inner.clone(), inner).prop_map(|(p, q, v)| {
                    let m = Exp::sym(&Symbol::new("M", BirType::Mem));
                    Exp::load(Exp::store(m, p, v), q, 64)
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn simplification_preserves_values(e in arb_exp(), x in any::<u64>(), y in any::<u64>(),
                                           bytes in proptest::collection::btree_map(any::<u64>(), any::<u8>(), 0..4)) {
            let mut h = Interp::default();
            h.set(&Symbol::new("x", BirType::Imm64), Value::Word(Word::new(64, x)));
            h.set(&Symbol::new("y", BirType::Imm64), Value::Word(Word::new(64, y)));
            h.set(&Symbol::new("M", BirType::Mem), Value::Mem(Arc::new(MemValue::zeroed(bytes))));
            let before = eval(&e, &h).unwrap();
            let after = eval(&simplify_exp(&Arc::new(e.clone())), &h).unwrap();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn relation_ranges() {
        assert_eq!(ranges(0, 8, 8), Relation::Contains(0));
        assert_eq!(ranges(8, 8, 8), Relation::Disjoint);
        assert_eq!(ranges(0u64.wrapping_sub(8), 8, 8), Relation::Disjoint);
        assert_eq!(ranges(0u64.wrapping_sub(4), 8, 8), Relation::Unknown);
        assert_eq!(ranges(4, 8, 8), Relation::Unknown);
    }
}
