//! Executable reference for the ChaCha quarter round and rounds.
//!
//! The quarter round is written once over [`QrWord`] so the same definition
//! computes concrete values and builds the postcondition of the assembly
//! fixture as contract-language expressions.

use std::collections::BTreeSet;

use crate::contracts::lang::{Atom, Cmp, RExpr, ROp, RiscvPredicate};

/// Sixteen 32-bit words.
pub type ChachaState = [u32; 16];

/// Operations on 32-bit words the quarter round needs.
pub trait QrWord: Clone {
    fn add(&self, other: &Self) -> Self;
    fn xor(&self, other: &Self) -> Self;
    fn or(&self, other: &Self) -> Self;
    /// Left shift; amounts of 32 or more give zero.
    fn shl(&self, s: u32) -> Self;
    /// Logical right shift; amounts of 32 or more give zero.
    fn shr(&self, s: u32) -> Self;
}

impl QrWord for u32 {
    fn add(&self, other: &u32) -> u32 {
        self.wrapping_add(*other)
    }
    fn xor(&self, other: &u32) -> u32 {
        self ^ other
    }
    fn or(&self, other: &u32) -> u32 {
        self | other
    }
    fn shl(&self, s: u32) -> u32 {
        self.checked_shl(s).unwrap_or(0)
    }
    fn shr(&self, s: u32) -> u32 {
        self.checked_shr(s).unwrap_or(0)
    }
}

const MASK32: u64 = 0xffff_ffff;

fn bin(op: ROp, a: &RExpr, b: RExpr) -> RExpr {
    RExpr::Bin(op, Box::new(a.clone()), Box::new(b))
}

/// 32-bit words as 64-bit expressions whose upper half is zero.
impl QrWord for RExpr {
    fn add(&self, other: &RExpr) -> RExpr {
        bin(
            ROp::And,
            &bin(ROp::Add, self, other.clone()),
            RExpr::Lit(MASK32),
        )
    }
    fn xor(&self, other: &RExpr) -> RExpr {
        bin(ROp::Xor, self, other.clone())
    }
    fn or(&self, other: &RExpr) -> RExpr {
        bin(ROp::Or, self, other.clone())
    }
    fn shl(&self, s: u32) -> RExpr {
        bin(
            ROp::And,
            &bin(ROp::Shl, self, RExpr::Lit(s.into())),
            RExpr::Lit(MASK32),
        )
    }
    fn shr(&self, s: u32) -> RExpr {
        bin(ROp::Shr, self, RExpr::Lit(s.into()))
    }
}

pub fn line_fst<W: QrWord>(a: &W, b: &W) -> W {
    a.add(b)
}

/// `((a ^ d) << s) | ((a ^ d) >> (32 - s))` with 32-bit wrapping of `32 - s`.
pub fn line_snd<W: QrWord>(a: &W, d: &W, s: u32) -> W {
    let x = a.xor(d);
    x.shl(s).or(&x.shr(32u32.wrapping_sub(s)))
}

pub fn quarter_round_with<W: QrWord>(a: W, b: W, c: W, d: W) -> (W, W, W, W) {
    let a = line_fst(&a, &b);
    let d = line_snd(&a, &d, 16);
    let c = line_fst(&c, &d);
    let b = line_snd(&c, &b, 12);
    let a = line_fst(&a, &b);
    let d = line_snd(&a, &d, 8);
    let c = line_fst(&c, &d);
    let b = line_snd(&c, &b, 7);
    (a, b, c, d)
}

pub fn chacha_line_fst(a: u32, b: u32) -> u32 {
    line_fst(&a, &b)
}

pub fn chacha_line_snd(a: u32, d: u32, s: u32) -> u32 {
    line_snd(&a, &d, s)
}

pub fn quarter_round(a: u32, b: u32, c: u32, d: u32) -> (u32, u32, u32, u32) {
    quarter_round_with(a, b, c, d)
}

pub const COLUMNS: [[usize; 4]; 4] = [[0, 4, 8, 12], [1, 5, 9, 13], [2, 6, 10, 14], [3, 7, 11, 15]];
pub const DIAGONALS: [[usize; 4]; 4] =
    [[0, 5, 10, 15], [1, 6, 11, 12], [2, 7, 8, 13], [3, 4, 9, 14]];

pub fn quarter_round_at(st: &mut ChachaState, [i, j, k, l]: [usize; 4]) {
    let (a, b, c, d) = quarter_round(st[i], st[j], st[k], st[l]);
    st[i] = a;
    st[j] = b;
    st[k] = c;
    st[l] = d;
}

pub fn column_round(st: &ChachaState) -> ChachaState {
    let mut out = *st;
    for q in COLUMNS {
        quarter_round_at(&mut out, q);
    }
    out
}

pub fn diagonal_round(st: &ChachaState) -> ChachaState {
    let mut out = *st;
    for q in DIAGONALS {
        quarter_round_at(&mut out, q);
    }
    out
}

/// The block function: ten double rounds and the feed-forward addition.
pub fn block(key: &[u32; 8], counter: u32, nonce: &[u32; 3]) -> ChachaState {
    let mut init = [0u32; 16];
    init[..4].copy_from_slice(&[0x6170_7865, 0x3320_646e, 0x7962_2d32, 0x6b20_6574]);
    init[4..12].copy_from_slice(key);
    init[12] = counter;
    init[13..].copy_from_slice(nonce);
    let mut st = init;
    for _ in 0..10 {
        st = diagonal_round(&column_round(&st));
    }
    for (w, i) in st.iter_mut().zip(init) {
        *w = w.wrapping_add(i);
    }
    st
}

/// Parameter names of the quarter-round fixture's inputs.
pub const QR_PARAMS: [&str; 4] = ["pre_a", "pre_b", "pre_c", "pre_d"];

fn low32(r: u8) -> RExpr {
    let reg = crate::isa::Reg::new(r).expect("register index");
    bin(ROp::And, &RExpr::Gpr(reg), RExpr::Lit(MASK32))
}

fn eq(lhs: RExpr, rhs: RExpr) -> Atom {
    Atom {
        cmp: Cmp::Eq,
        lhs,
        rhs,
    }
}

/// Contract of the quarter-round fixture: a0..a3 hold a, b, c, d in their
/// low halves before, and the quarter round of them after.
pub fn quarter_round_contract(entry: u64, end: u64) -> crate::contracts::RiscvContract {
    let p: Vec<RExpr> = QR_PARAMS
        .iter()
        .map(|n| RExpr::Param(n.to_string()))
        .collect();
    let pre = RiscvPredicate {
        atoms: (0..4)
            .map(|k| eq(low32(10 + k as u8), p[k].clone()))
            .collect(),
    };
    let (a, b, c, d) = quarter_round_with(p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone());
    let post = RiscvPredicate {
        atoms: [a, b, c, d]
            .into_iter()
            .enumerate()
            .map(|(k, v)| eq(low32(10 + k as u8), v))
            .collect(),
    };
    crate::contracts::RiscvContract {
        name: "chacha_qr".into(),
        entry,
        extent: None,
        params: QR_PARAMS.iter().map(|s| s.to_string()).collect(),
        pre,
        post: [(end, post)].into(),
        forbidden: BTreeSet::new(),
        unroll: None,
    }
}
