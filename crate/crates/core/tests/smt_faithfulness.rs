//! The SMT encoding agrees with the concrete evaluator: with every word
//! symbol pinned, a term cannot differ from its evaluated value, and the
//! value itself is reachable with a model that re-evaluates correctly.

use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use rvbir::bir::{
    eval, BinOp, BirType, CastOp, Exp, Interp, MemValue, PredOp, Symbol, UnOp, Value, Word,
};
use rvbir::smt::{model_audit, satisfies, Obligation, ProcessSolver, Solver, Verdict};

fn solver() -> ProcessSolver {
    let program = std::env::var("RVBIR_SOLVER").unwrap_or_else(|_| "z3".into());
    ProcessSolver::z3(&program, Duration::from_secs(20), 1)
}

fn x() -> Symbol {
    Symbol::new("x", BirType::Imm64)
}

fn y() -> Symbol {
    Symbol::new("y", BirType::Imm64)
}

fn m() -> Symbol {
    Symbol::new("M", BirType::Mem)
}

fn word_exp(with_memory: bool) -> impl Strategy<Value = Exp> {
    let leaf = prop_oneof![
        any::<u64>().prop_map(Exp::c64),
        prop_oneof![Just(0u64), Just(1), Just(63), Just(u64::MAX), Just(1 << 63)]
            .prop_map(Exp::c64),
        Just(Exp::sym(&x())),
        Just(Exp::sym(&y())),
    ];
    leaf.prop_recursive(4, 32, 2, move |inner| {
        let ops = prop_oneof![
            Just(BinOp::Plus),
            Just(BinOp::Minus),
            Just(BinOp::Mult),
            Just(BinOp::DivUnsigned),
            Just(BinOp::And),
            Just(BinOp::Or),
            Just(BinOp::Xor),
            Just(BinOp::LShift),
            Just(BinOp::RShiftUnsigned),
            Just(BinOp::RShiftSigned),
        ];
        let preds = prop_oneof![
            Just(PredOp::Equal),
            Just(PredOp::NotEqual),
            Just(PredOp::LessThanUnsigned),
            Just(PredOp::LessOrEqualUnsigned),
            Just(PredOp::LessThanSigned),
        ];
        let casts = prop_oneof![Just(CastOp::SignedExtend), Just(CastOp::UnsignedExtend)];
        let narrow = prop_oneof![Just(1u32), Just(8), Just(16), Just(32)];
        let plain = prop_oneof![
            (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Exp::bin(op, a, b)),
            inner.clone().prop_map(|a| Exp::unary(UnOp::Not, a)),
            inner.clone().prop_map(|a| Exp::unary(UnOp::ChangeSign, a)),
            (casts, narrow, inner.clone()).prop_map(|(c, w, a)| Exp::cast(c, Exp::cast(CastOp::Low, a, w), 64)),
            (preds, inner.clone(), inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(p, a, b, t, e)| Exp::ite(Exp::pred(p, a, b), t, e)),
        ];
        if with_memory {
            prop_oneof![
                4 => plain,
                1 => (inner.clone(), inner.clone(), inner.clone(), prop_oneof![Just(8u32), Just(32), Just(64)])
                    .prop_map(|(p, v, q, w)| Exp::load(Exp::store(Exp::sym(&m()), p, v), q, w))
                    .prop_map(|l| Exp::cast(CastOp::UnsignedExtend, l, 64)),
                1 => (inner.clone(), any::<u8>())
                    .prop_map(|(q, k)| Exp::plus(q, Exp::c64(k as u64)))
                    .prop_map(|a| Exp::load(Exp::sym(&m()), a, 64)),
            ]
            .boxed()
        } else {
            plain.boxed()
        }
    })
}

fn interp(xv: u64, yv: u64, bytes: std::collections::BTreeMap<u64, u8>) -> Interp {
    let mut h = Interp::default();
    h.set(&x(), Value::Word(Word::new(64, xv)));
    h.set(&y(), Value::Word(Word::new(64, yv)));
    h.set(&m(), Value::Mem(Arc::new(MemValue::zeroed(bytes))));
    h
}

fn pins(xv: u64, yv: u64) -> Vec<Exp> {
    vec![
        Exp::eq(Exp::sym(&x()), Exp::c64(xv)),
        Exp::eq(Exp::sym(&y()), Exp::c64(yv)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn pinned_terms_equal_their_evaluated_value(e in word_exp(false), xv in any::<u64>(), yv in any::<u64>()) {
        let v = eval(&e, &interp(xv, yv, Default::default())).unwrap();
        let Value::Word(w) = v else { panic!("word term") };
        let ob = Obligation::feasibility(pins(xv, yv), Exp::pred(PredOp::NotEqual, e.clone(), Exp::c64(w.bits())), "differs");
        let verdict = solver().check(&ob).unwrap();
        prop_assert!(verdict.is_unsat(), "{e:?} = {w:?}: {verdict:?}");
    }

    #[test]
    fn evaluated_values_are_reachable_with_valid_models(
        e in word_exp(true),
        xv in any::<u64>(),
        yv in any::<u64>(),
        bytes in proptest::collection::btree_map(any::<u64>(), any::<u8>(), 0..4),
    ) {
        let v = eval(&e, &interp(xv, yv, bytes)).unwrap();
        let Value::Word(w) = v else { panic!("word term") };
        let ob = Obligation::feasibility(Vec::new(), Exp::eq(e.clone(), Exp::c64(w.bits())), "reach");
        match solver().check(&ob).unwrap() {
            Verdict::Sat(model) => prop_assert!(satisfies(&ob, &model.interp).unwrap()),
            other => prop_assert!(false, "{e:?} = {w:?}: {other:?}"),
        }
    }
}

#[test]
fn no_model_was_rejected() {
    let ob = Obligation::feasibility(
        vec![Exp::pred(
            PredOp::LessThanUnsigned,
            Exp::sym(&x()),
            Exp::c64(10),
        )],
        Exp::eq(Exp::load(Exp::sym(&m()), Exp::sym(&x()), 64), Exp::c64(7)),
        "audit",
    );
    assert!(matches!(solver().check(&ob).unwrap(), Verdict::Sat(_)));
    let (checked, rejected) = model_audit();
    assert!(checked >= 1);
    assert_eq!(rejected, 0);
}
