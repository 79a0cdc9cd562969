//! The block-structured intermediate representation: typed expressions over
//! fixed-width words and byte memories, labelled blocks, and a concrete
//! interpreter.
//!
//! Expressions double as symbolic expressions: [`Exp::Sym`] leaves refer to
//! symbols that an [`eval::Valuation`] resolves.

pub mod eval;
pub mod print;
pub mod program;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use eval::{eval, eval_bool, BirEnv, EvalError, Interp, MemValue, Valuation, Value};
pub use program::{
    exec_block, exec_block_open, run_program, Block, End, ExecError, Next, Program, RunResult,
    Stmt, Target,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BirType {
    Imm1,
    Imm8,
    Imm16,
    Imm32,
    Imm64,
    /// Byte memory indexed by 64-bit addresses.
    Mem,
}

impl BirType {
    pub fn imm(width: u32) -> Option<BirType> {
        match width {
            1 => Some(BirType::Imm1),
            8 => Some(BirType::Imm8),
            16 => Some(BirType::Imm16),
            32 => Some(BirType::Imm32),
            64 => Some(BirType::Imm64),
            _ => None,
        }
    }

    /// Bit width of word types; `None` for memory.
    pub fn width(self) -> Option<u32> {
        match self {
            BirType::Imm1 => Some(1),
            BirType::Imm8 => Some(8),
            BirType::Imm16 => Some(16),
            BirType::Imm32 => Some(32),
            BirType::Imm64 => Some(64),
            BirType::Mem => None,
        }
    }
}

impl fmt::Display for BirType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.width() {
            Some(w) => write!(f, "{w}"),
            None => f.write_str("mem"),
        }
    }
}

/// A fixed-width bit vector; bits above `width` are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Word {
    width: u32,
    bits: u64,
}

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl Word {
    /// Truncates `bits` to `width`. Panics on widths other than 1, 8, 16, 32, 64.
    pub fn new(width: u32, bits: u64) -> Word {
        assert!(BirType::imm(width).is_some(), "bad word width {width}");
        Word {
            width,
            bits: bits & mask(width),
        }
    }

    pub fn bool(b: bool) -> Word {
        Word::new(1, b as u64)
    }

    pub fn width(self) -> u32 {
        self.width
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn ty(self) -> BirType {
        BirType::imm(self.width).expect("valid width")
    }

    /// Two's complement reading, sign-extended to 64 bits.
    pub fn signed(self) -> i64 {
        let shift = 64 - self.width;
        ((self.bits << shift) as i64) >> shift
    }

    pub fn is_true(self) -> bool {
        self.bits != 0
    }
}

macro_rules! ident {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        pub struct $name {
            pub name: Arc<str>,
            pub ty: BirType,
        }

        impl $name {
            pub fn new(name: &str, ty: BirType) -> $name {
                assert!(!name.is_empty(), "empty name");
                $name {
                    name: Arc::from(name),
                    ty,
                }
            }
        }
    };
}

ident!(
    /// A program variable.
    Var
);
ident!(
    /// A symbol of a symbolic expression.
    Symbol
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum UnOp {
    /// Bitwise complement.
    Not,
    /// Two's complement negation.
    ChangeSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BinOp {
    Plus,
    Minus,
    Mult,
    DivUnsigned,
    And,
    Or,
    Xor,
    LShift,
    RShiftUnsigned,
    RShiftSigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PredOp {
    Equal,
    NotEqual,
    LessThanUnsigned,
    LessOrEqualUnsigned,
    LessThanSigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CastOp {
    Low,
    SignedExtend,
    UnsignedExtend,
}

/// Expressions. Children are reference counted so rewritten terms share
/// structure with their originals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Exp {
    Const(Word),
    Den(Var),
    Sym(Symbol),
    Unary(UnOp, Arc<Exp>),
    Bin(BinOp, Arc<Exp>, Arc<Exp>),
    Pred(PredOp, Arc<Exp>, Arc<Exp>),
    Ite(Arc<Exp>, Arc<Exp>, Arc<Exp>),
    Cast(CastOp, Arc<Exp>, u32),
    /// Little-endian load of `width` bits.
    Load(Arc<Exp>, Arc<Exp>, u32),
    /// Little-endian store; the width is the value's width.
    Store(Arc<Exp>, Arc<Exp>, Arc<Exp>),
}

impl Exp {
    pub fn word(width: u32, bits: u64) -> Exp {
        Exp::Const(Word::new(width, bits))
    }

    pub fn c64(bits: u64) -> Exp {
        Exp::word(64, bits)
    }

    pub fn tt() -> Exp {
        Exp::Const(Word::bool(true))
    }

    pub fn ff() -> Exp {
        Exp::Const(Word::bool(false))
    }

    pub fn den(v: &Var) -> Exp {
        Exp::Den(v.clone())
    }

    pub fn sym(s: &Symbol) -> Exp {
        Exp::Sym(s.clone())
    }

    pub fn unary(op: UnOp, a: impl Into<Arc<Exp>>) -> Exp {
        Exp::Unary(op, a.into())
    }

    pub fn bin(op: BinOp, a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
        Exp::Bin(op, a.into(), b.into())
    }

    pub fn pred(op: PredOp, a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
        Exp::Pred(op, a.into(), b.into())
    }

    pub fn ite(c: impl Into<Arc<Exp>>, a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
        Exp::Ite(c.into(), a.into(), b.into())
    }

    pub fn cast(op: CastOp, a: impl Into<Arc<Exp>>, width: u32) -> Exp {
        Exp::Cast(op, a.into(), width)
    }

    pub fn load(mem: impl Into<Arc<Exp>>, addr: impl Into<Arc<Exp>>, width: u32) -> Exp {
        Exp::Load(mem.into(), addr.into(), width)
    }

    pub fn store(
        mem: impl Into<Arc<Exp>>,
        addr: impl Into<Arc<Exp>>,
        value: impl Into<Arc<Exp>>,
    ) -> Exp {
        Exp::Store(mem.into(), addr.into(), value.into())
    }

    pub fn plus(a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
        Exp::bin(BinOp::Plus, a, b)
    }

    pub fn eq(a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
        Exp::pred(PredOp::Equal, a, b)
    }

    pub fn not(a: impl Into<Arc<Exp>>) -> Exp {
        Exp::unary(UnOp::Not, a)
    }

    pub fn and(a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
        Exp::bin(BinOp::And, a, b)
    }

    /// Conjunction of Imm1 terms; `true` when empty.
    pub fn conj<I: IntoIterator<Item = Exp>>(terms: I) -> Exp {
        terms.into_iter().reduce(Exp::and).unwrap_or_else(Exp::tt)
    }

    pub fn as_const(&self) -> Option<Word> {
        match self {
            Exp::Const(w) => Some(*w),
            _ => None,
        }
    }

    /// Direct children, in order.
    pub fn children(&self) -> Vec<&Arc<Exp>> {
        match self {
            Exp::Const(_) | Exp::Den(_) | Exp::Sym(_) => vec![],
            Exp::Unary(_, a) | Exp::Cast(_, a, _) => vec![a],
            Exp::Bin(_, a, b) | Exp::Pred(_, a, b) | Exp::Load(a, b, _) => vec![a, b],
            Exp::Ite(a, b, c) | Exp::Store(a, b, c) => vec![a, b, c],
        }
    }

    /// Rebuilds the node with new children (same count and order as
    /// [`Exp::children`]).
    pub fn with_children(&self, mut kids: Vec<Arc<Exp>>) -> Exp {
        let mut next = || kids.remove(0);
        match self {
            Exp::Const(_) | Exp::Den(_) | Exp::Sym(_) => self.clone(),
            Exp::Unary(op, _) => Exp::Unary(*op, next()),
            Exp::Cast(op, _, w) => Exp::Cast(*op, next(), *w),
            Exp::Bin(op, _, _) => {
                let a = next();
                Exp::Bin(*op, a, next())
            }
            Exp::Pred(op, _, _) => {
                let a = next();
                Exp::Pred(*op, a, next())
            }
            Exp::Load(_, _, w) => {
                let a = next();
                Exp::Load(a, next(), *w)
            }
            Exp::Ite(..) => {
                let (a, b) = (next(), next());
                Exp::Ite(a, b, next())
            }
            Exp::Store(..) => {
                let (a, b) = (next(), next());
                Exp::Store(a, b, next())
            }
        }
    }

    /// Number of nodes counting shared subterms once per occurrence,
    /// saturating at `u64::MAX`.
    pub fn tree_size(&self) -> u64 {
        fn go(e: &Exp, memo: &mut HashMap<*const Exp, u64>) -> u64 {
            let mut total = 1u64;
            for k in e.children() {
                let key = Arc::as_ptr(k);
                let n = match memo.get(&key) {
                    Some(&n) => n,
                    None => {
                        let n = go(k, memo);
                        memo.insert(key, n);
                        n
                    }
                };
                total = total.saturating_add(n);
            }
            total
        }
        go(self, &mut HashMap::new())
    }

    /// Whether the tree has more than `limit` nodes; stops counting early.
    pub fn size_exceeds(&self, limit: u64) -> bool {
        fn go(e: &Exp, budget: &mut u64) -> bool {
            if *budget == 0 {
                return true;
            }
            *budget -= 1;
            e.children().into_iter().any(|k| go(k, budget))
        }
        let mut budget = limit;
        go(self, &mut budget)
    }

    /// Calls `f` on every distinct node (by pointer) reachable from `self`.
    pub fn visit(&self, f: &mut dyn FnMut(&Exp)) {
        fn go(e: &Exp, seen: &mut std::collections::HashSet<*const Exp>, f: &mut dyn FnMut(&Exp)) {
            f(e);
            for k in e.children() {
                if seen.insert(Arc::as_ptr(k)) {
                    go(k, seen, f);
                }
            }
        }
        go(self, &mut Default::default(), f)
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<Symbol> {
        let mut out = std::collections::BTreeSet::new();
        self.visit(&mut |e| {
            if let Exp::Sym(s) = e {
                out.insert(s.clone());
            }
        });
        out
    }

    pub fn vars(&self) -> std::collections::BTreeSet<Var> {
        let mut out = std::collections::BTreeSet::new();
        self.visit(&mut |e| {
            if let Exp::Den(v) = e {
                out.insert(v.clone());
            }
        });
        out
    }

    /// Bottom-up rewrite with sharing preserved: `f` sees each node after its
    /// children were rewritten and may return a replacement.
    pub fn rewrite(self: &Arc<Exp>, f: &mut dyn FnMut(&Exp) -> Option<Exp>) -> Arc<Exp> {
        fn go(
            e: &Arc<Exp>,
            memo: &mut HashMap<*const Exp, Arc<Exp>>,
            f: &mut dyn FnMut(&Exp) -> Option<Exp>,
        ) -> Arc<Exp> {
            if let Some(r) = memo.get(&Arc::as_ptr(e)) {
                return r.clone();
            }
            let kids = e.children();
            let new_kids: Vec<Arc<Exp>> = kids.iter().map(|k| go(k, memo, f)).collect();
            let changed = kids.iter().zip(&new_kids).any(|(a, b)| !Arc::ptr_eq(a, b));
            let node = if changed {
                Arc::new(e.with_children(new_kids))
            } else {
                e.clone()
            };
            let out = match f(&node) {
                Some(r) => Arc::new(r),
                None => node,
            };
            memo.insert(Arc::as_ptr(e), out.clone());
            out
        }
        go(self, &mut HashMap::new(), f)
    }

    /// Replaces variables by expressions (free variables not in `map` stay).
    pub fn subst_vars(self: &Arc<Exp>, map: &dyn Fn(&Var) -> Option<Arc<Exp>>) -> Arc<Exp> {
        self.rewrite(&mut |e| match e {
            Exp::Den(v) => map(v).map(|r| (*r).clone()),
            _ => None,
        })
    }

    /// Replaces symbols by expressions.
    pub fn subst_syms(self: &Arc<Exp>, map: &dyn Fn(&Symbol) -> Option<Arc<Exp>>) -> Arc<Exp> {
        self.rewrite(&mut |e| match e {
            Exp::Sym(s) => map(s).map(|r| (*r).clone()),
            _ => None,
        })
    }
}

impl From<Word> for Exp {
    fn from(w: Word) -> Exp {
        Exp::Const(w)
    }
}

impl fmt::Display for Exp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print::write_exp(f, self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("type mismatch in {0}")]
    TypeMismatch(String),
}

fn mismatch(e: &Exp) -> TypeError {
    let mut text = e.to_string();
    if text.len() > 200 {
        text.truncate(200);
        text.push_str("...");
    }
    TypeError::TypeMismatch(text)
}

/// Computes the type of `e`. Variables and symbols carry their own types.
pub fn type_of(e: &Exp) -> Result<BirType, TypeError> {
    fn go(e: &Exp, memo: &mut HashMap<*const Exp, BirType>) -> Result<BirType, TypeError> {
        let mut child = |k: &Arc<Exp>| -> Result<BirType, TypeError> {
            if let Some(&t) = memo.get(&Arc::as_ptr(k)) {
                return Ok(t);
            }
            let t = go(k, memo)?;
            memo.insert(Arc::as_ptr(k), t);
            Ok(t)
        };
        let word = |t: BirType| t.width().ok_or_else(|| mismatch(e));
        match e {
            Exp::Const(w) => Ok(w.ty()),
            Exp::Den(v) => Ok(v.ty),
            Exp::Sym(s) => Ok(s.ty),
            Exp::Unary(_, a) => {
                let t = child(a)?;
                word(t)?;
                Ok(t)
            }
            Exp::Bin(_, a, b) => {
                let (ta, tb) = (child(a)?, child(b)?);
                word(ta)?;
                if ta != tb {
                    return Err(mismatch(e));
                }
                Ok(ta)
            }
            Exp::Pred(_, a, b) => {
                let (ta, tb) = (child(a)?, child(b)?);
                word(ta)?;
                if ta != tb {
                    return Err(mismatch(e));
                }
                Ok(BirType::Imm1)
            }
            Exp::Ite(c, a, b) => {
                let (tc, ta, tb) = (child(c)?, child(a)?, child(b)?);
                if tc != BirType::Imm1 || ta != tb {
                    return Err(mismatch(e));
                }
                Ok(ta)
            }
            Exp::Cast(op, a, w) => {
                let from = word(child(a)?)?;
                let to = BirType::imm(*w).ok_or_else(|| mismatch(e))?;
                let ok = match op {
                    CastOp::Low => *w <= from,
                    CastOp::SignedExtend | CastOp::UnsignedExtend => *w >= from,
                };
                if !ok {
                    return Err(mismatch(e));
                }
                Ok(to)
            }
            Exp::Load(m, a, w) => {
                if child(m)? != BirType::Mem
                    || child(a)? != BirType::Imm64
                    || !matches!(w, 8 | 16 | 32 | 64)
                {
                    return Err(mismatch(e));
                }
                Ok(BirType::imm(*w).expect("load width"))
            }
            Exp::Store(m, a, v) => {
                let tv = child(v)?;
                if child(m)? != BirType::Mem
                    || child(a)? != BirType::Imm64
                    || !matches!(tv.width(), Some(8 | 16 | 32 | 64))
                {
                    return Err(mismatch(e));
                }
                Ok(BirType::Mem)
            }
        }
    }
    go(e, &mut HashMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x10() -> Var {
        Var::new("x10", BirType::Imm64)
    }

    #[test]
    fn type_of_examples() {
        let e = Exp::plus(Exp::den(&x10()), Exp::c64(1));
        assert_eq!(type_of(&e), Ok(BirType::Imm64));
        assert_eq!(type_of(&Exp::tt()), Ok(BirType::Imm1));
        let bad = Exp::plus(Exp::word(32, 1), Exp::c64(1));
        assert!(matches!(type_of(&bad), Err(TypeError::TypeMismatch(_))));
    }

    #[test]
    fn type_errors() {
        let mem = Var::new("MEM8", BirType::Mem);
        let bad = [
            Exp::ite(Exp::c64(1), Exp::c64(1), Exp::c64(2)),
            Exp::cast(CastOp::Low, Exp::word(8, 1), 32),
            Exp::cast(CastOp::SignedExtend, Exp::c64(1), 32),
            Exp::load(Exp::den(&mem), Exp::word(32, 0), 64),
            Exp::load(Exp::den(&mem), Exp::c64(0), 12),
            Exp::store(Exp::den(&mem), Exp::c64(0), Exp::tt()),
            Exp::plus(Exp::den(&mem), Exp::den(&mem)),
            Exp::eq(Exp::den(&mem), Exp::den(&mem)),
        ];
        for e in bad {
            assert!(type_of(&e).is_err(), "{e}");
        }
        let ok = Exp::load(
            Exp::store(Exp::den(&mem), Exp::c64(8), Exp::word(16, 3)),
            Exp::c64(8),
            16,
        );
        assert_eq!(type_of(&ok), Ok(BirType::Imm16));
    }

    #[test]
    fn words_mask_and_sign() {
        assert_eq!(Word::new(8, 0x1ff).bits(), 0xff);
        assert_eq!(Word::new(8, 0xff).signed(), -1);
        assert_eq!(Word::new(64, u64::MAX).signed(), -1);
        assert_eq!(Word::new(1, 1).signed(), -1);
    }

    #[test]
    fn tree_size_counts_shared_nodes_per_occurrence() {
        let a = Arc::new(Exp::plus(Exp::c64(1), Exp::c64(2)));
        let mut e = a.clone();
        for _ in 0..40 {
            e = Arc::new(Exp::Bin(BinOp::Plus, e.clone(), e));
        }
        // size(n) = 2 size(n-1) + 1 starting from 3
        assert_eq!(e.tree_size(), (1u64 << 42) - 1);
        assert!(e.size_exceeds(64));
        assert!(!a.size_exceeds(3));
        assert!(a.size_exceeds(2));
    }

    #[test]
    fn rewrite_substitutes() {
        let e = Arc::new(Exp::plus(Exp::den(&x10()), Exp::den(&x10())));
        let s = Symbol::new("s", BirType::Imm64);
        let r = e.subst_vars(&|_| Some(Arc::new(Exp::sym(&s))));
        assert_eq!(*r, Exp::plus(Exp::sym(&s), Exp::sym(&s)));
        assert_eq!(r.symbols().len(), 1);
        assert!(r.vars().is_empty());
    }
}
