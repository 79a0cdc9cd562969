//! SMT-LIB2 rendering of expressions and obligations over QF_ABV.
//!
//! Words of width N become `(_ BitVec N)` (Imm1 included, so predicates are
//! wrapped in `ite`), memories become arrays from 64-bit addresses to bytes.
//! Non-leaf subterms referenced more than once are emitted once as
//! `define-fun`s named `t<n>` in post-order, which keeps the text stable and
//! linear in the size of the shared term graph.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;
use std::sync::Arc;

use super::{Obligation, ObligationKind, SmtError};
use crate::bir::{type_of, BinOp, BirType, CastOp, Exp, PredOp, Symbol, UnOp};

pub fn sort(ty: BirType) -> String {
    match ty.width() {
        Some(w) => format!("(_ BitVec {w})"),
        None => "(Array (_ BitVec 64) (_ BitVec 8))".to_string(),
    }
}

pub fn symbol_name(s: &Symbol) -> String {
    format!("|{}|", s.name)
}

pub fn bv_literal(width: u32, bits: u64) -> String {
    if width.is_multiple_of(4) {
        format!("#x{:0w$x}", bits, w = (width / 4) as usize)
    } else {
        format!("#b{:0w$b}", bits, w = width as usize)
    }
}

struct Encoder {
    /// Reference counts by node address.
    uses: HashMap<*const Exp, usize>,
    /// Names of nodes already emitted as definitions.
    defined: HashMap<*const Exp, String>,
    defs: String,
    /// Keeps every visited node alive so addresses stay unique.
    pinned: Vec<Arc<Exp>>,
}

impl Encoder {
    fn count(&mut self, e: &Arc<Exp>) {
        let n = self.uses.entry(Arc::as_ptr(e)).or_insert(0);
        *n += 1;
        if *n == 1 {
            self.pinned.push(e.clone());
            for k in e.children() {
                self.count(k);
            }
        }
    }

    fn term(&mut self, e: &Arc<Exp>) -> Result<String, SmtError> {
        if let Some(name) = self.defined.get(&Arc::as_ptr(e)) {
            return Ok(name.clone());
        }
        let text = self.node(e)?;
        let shared = self.uses.get(&Arc::as_ptr(e)).copied().unwrap_or(0) > 1;
        if shared && !e.children().is_empty() {
            let ty = type_of(e).map_err(|err| SmtError::UnsupportedTerm(err.to_string()))?;
            let name = format!("t{}", self.defined.len());
            let _ = writeln!(self.defs, "(define-fun {name} () {} {text})", sort(ty));
            self.defined.insert(Arc::as_ptr(e), name.clone());
            return Ok(name);
        }
        Ok(text)
    }

    fn width(e: &Exp) -> Result<u32, SmtError> {
        type_of(e)
            .map_err(|err| SmtError::UnsupportedTerm(err.to_string()))?
            .width()
            .ok_or_else(|| SmtError::UnsupportedTerm("memory used as a word".into()))
    }

    fn node(&mut self, e: &Arc<Exp>) -> Result<String, SmtError> {
        Ok(match &**e {
            Exp::Const(w) => bv_literal(w.width(), w.bits()),
            Exp::Sym(s) => symbol_name(s),
            Exp::Den(v) => {
                return Err(SmtError::UnsupportedTerm(format!(
                    "free program variable {}",
                    v.name
                )))
            }
            Exp::Unary(op, a) => {
                let f = match op {
                    UnOp::Not => "bvnot",
                    UnOp::ChangeSign => "bvneg",
                };
                format!("({f} {})", self.term(a)?)
            }
            Exp::Bin(op, a, b) => {
                let f = match op {
                    BinOp::Plus => "bvadd",
                    BinOp::Minus => "bvsub",
                    BinOp::Mult => "bvmul",
                    BinOp::DivUnsigned => "bvudiv",
                    BinOp::And => "bvand",
                    BinOp::Or => "bvor",
                    BinOp::Xor => "bvxor",
                    BinOp::LShift => "bvshl",
                    BinOp::RShiftUnsigned => "bvlshr",
                    BinOp::RShiftSigned => "bvashr",
                };
                format!("({f} {} {})", self.term(a)?, self.term(b)?)
            }
            Exp::Pred(op, a, b) => {
                let (a, b) = (self.term(a)?, self.term(b)?);
                let p = match op {
                    PredOp::Equal => format!("(= {a} {b})"),
                    PredOp::NotEqual => format!("(not (= {a} {b}))"),
                    PredOp::LessThanUnsigned => format!("(bvult {a} {b})"),
                    PredOp::LessOrEqualUnsigned => format!("(bvule {a} {b})"),
                    PredOp::LessThanSigned => format!("(bvslt {a} {b})"),
                };
                format!("(ite {p} #b1 #b0)")
            }
            Exp::Ite(c, a, b) => format!(
                "(ite (= {} #b1) {} {})",
                self.term(c)?,
                self.term(a)?,
                self.term(b)?
            ),
            Exp::Cast(op, a, w) => {
                let from = Self::width(a)?;
                let inner = self.term(a)?;
                if *w == from {
                    inner
                } else {
                    match op {
                        CastOp::Low => format!("((_ extract {} 0) {inner})", w - 1),
                        CastOp::SignedExtend => format!("((_ sign_extend {}) {inner})", w - from),
                        CastOp::UnsignedExtend => {
                            format!("((_ zero_extend {}) {inner})", w - from)
                        }
                    }
                }
            }
            Exp::Load(m, a, w) => {
                let (m, a) = (self.term(m)?, self.term(a)?);
                let bytes = w / 8;
                let mut parts: Vec<String> = (0..bytes as u64)
                    .rev()
                    .map(|k| format!("(select {m} {})", addr_plus("?a", k)))
                    .collect();
                let body = if parts.len() == 1 {
                    parts.remove(0)
                } else {
                    format!("(concat {})", parts.join(" "))
                };
                format!("(let ((?a {a})) {body})")
            }
            Exp::Store(m, a, v) => {
                let w = Self::width(v)?;
                let (m, a, v) = (self.term(m)?, self.term(a)?, self.term(v)?);
                let mut body = m;
                for k in 0..(w / 8) as u64 {
                    let byte = if w == 8 {
                        "?v".to_string()
                    } else {
                        format!("((_ extract {} {}) ?v)", 8 * k + 7, 8 * k)
                    };
                    body = format!("(store {body} {} {byte})", addr_plus("?a", k));
                }
                format!("(let ((?a {a}) (?v {v})) {body})")
            }
        })
    }
}

fn addr_plus(a: &str, k: u64) -> String {
    if k == 0 {
        a.to_string()
    } else {
        format!("(bvadd {a} {})", bv_literal(64, k))
    }
}

/// Symbols of all terms, in name order.
pub fn obligation_symbols(ob: &Obligation) -> BTreeSet<Symbol> {
    let mut out = BTreeSet::new();
    for e in ob.terms() {
        out.extend(e.symbols());
    }
    out
}

/// Renders the obligation as a complete script ending in `(check-sat)`.
pub fn encode(ob: &Obligation) -> Result<String, SmtError> {
    for e in ob.hypotheses.iter().chain(std::iter::once(&ob.goal)) {
        let ty = type_of(e).map_err(|err| SmtError::UnsupportedTerm(err.to_string()))?;
        if ty != BirType::Imm1 {
            return Err(SmtError::UnsupportedTerm(format!("{e} is not Imm1")));
        }
    }
    let mut enc = Encoder {
        uses: HashMap::new(),
        defined: HashMap::new(),
        defs: String::new(),
        pinned: Vec::new(),
    };
    let roots: Vec<Arc<Exp>> = ob.terms().map(|e| Arc::new(e.clone())).collect();
    for r in &roots {
        enc.count(r);
    }

    let mut asserts = String::new();
    let n_hyps = ob.hypotheses.len();
    for (k, r) in roots.iter().enumerate() {
        let t = enc.term(r)?;
        if k < n_hyps {
            let _ = writeln!(asserts, "(assert (= {t} #b1))");
        } else if k == n_hyps {
            let bit = match ob.kind {
                ObligationKind::Feasibility => "#b1",
                ObligationKind::Simplification | ObligationKind::Entailment => "#b0",
            };
            let _ = writeln!(asserts, "(assert (= {t} {bit}))");
        } else {
            // observed terms: only their definitions matter
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "; {:?} {}", ob.kind, ob.origin.replace('\n', " "));
    out.push_str("(set-option :produce-models true)\n(set-logic QF_ABV)\n");
    for s in obligation_symbols(ob) {
        let _ = writeln!(out, "(declare-fun {} () {})", symbol_name(&s), sort(s.ty));
    }
    out.push_str(&enc.defs);
    out.push_str(&asserts);
    out.push_str("(check-sat)\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bir::Word;

    fn s(n: &str) -> Symbol {
        Symbol::new(n, BirType::Imm64)
    }

    #[test]
    fn literals() {
        assert_eq!(bv_literal(1, 1), "#b1");
        assert_eq!(bv_literal(8, 0xa), "#x0a");
        assert_eq!(bv_literal(64, 1), "#x0000000000000001");
    }

    #[test]
    fn encodes_incr_entailment() {
        let (x, p) = (s("s_x10"), s("pre_x10"));
        let ob = Obligation::entailment(
            vec![Exp::eq(Exp::sym(&x), Exp::sym(&p))],
            Exp::eq(
                Exp::plus(Exp::sym(&x), Exp::c64(1)),
                Exp::plus(Exp::sym(&p), Exp::c64(1)),
            ),
            "incr",
        );
        let text = encode(&ob).unwrap();
        assert!(text.contains("(set-logic QF_ABV)"));
        assert!(text.contains("(declare-fun |s_x10| () (_ BitVec 64))"));
        assert!(text.contains("(declare-fun |pre_x10| () (_ BitVec 64))"));
        assert!(text.contains("(assert (= (ite (= |s_x10| |pre_x10|) #b1 #b0) #b1))"));
        assert!(text.ends_with("(check-sat)\n"));
    }

    #[test]
    fn shared_subterms_become_definitions() {
        let a = Arc::new(Exp::plus(Exp::sym(&s("a")), Exp::c64(1)));
        let e = Exp::Pred(PredOp::Equal, a.clone(), a);
        let ob = Obligation::feasibility(vec![], e, "t");
        let text = encode(&ob).unwrap();
        assert!(text.contains("(define-fun t0 () (_ BitVec 64) (bvadd |a| #x0000000000000001))"));
        assert!(text.contains("(= t0 t0)"));
    }

    #[test]
    fn rejects_free_variables_and_non_boolean_goals() {
        let v = crate::bir::Var::new("x10", BirType::Imm64);
        let ob = Obligation::feasibility(vec![], Exp::eq(Exp::den(&v), Exp::c64(0)), "t");
        assert!(matches!(encode(&ob), Err(SmtError::UnsupportedTerm(_))));
        let ob = Obligation::feasibility(vec![], Exp::Const(Word::new(8, 1)), "t");
        assert!(matches!(encode(&ob), Err(SmtError::UnsupportedTerm(_))));
    }

    #[test]
    fn memory_terms() {
        let m = Symbol::new("M", BirType::Mem);
        let a = s("a");
        let st = Exp::store(Exp::sym(&m), Exp::sym(&a), Exp::word(16, 0xbeef));
        let ld = Exp::load(st, Exp::sym(&a), 16);
        let ob = Obligation::entailment(vec![], Exp::eq(ld, Exp::word(16, 0xbeef)), "t");
        let text = encode(&ob).unwrap();
        assert!(text.contains("(declare-fun |M| () (Array (_ BitVec 64) (_ BitVec 8)))"));
        assert!(text.contains("((_ extract 15 8) ?v)"));
        assert!(text.contains("(concat (select"));
    }
}
