//! The restricted ISA-level predicate language: parsing, printing,
//! evaluation on machine states and translation to BIR.
//!
//! ```text
//! pred   := conj-item (("/\" | "&&") conj-item)*
//! item   := "true" | expr cmp expr
//! cmp    := "=" | "<" | "<="            (unsigned)
//! expr   := xor ("|" xor)*
//! xor    := and ("^" and)*
//! and    := shift ("&" shift)*
//! shift  := add (("<<" | ">>") add)*
//! add    := mul (("+" | "-") mul)*
//! mul    := atom ("*" atom)*
//! atom   := number | register | csr | param | "mem64[" expr "]" | "(" expr ")"
//! ```
//!
//! Numbers are decimal or `0x` hexadecimal. Registers are `x0`..`x31` or
//! ABI names, CSRs go by name, and all arithmetic is on 64-bit words.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::ContractError;
use crate::bir::{BinOp, BirType, Exp, PredOp, Symbol, Var};
use crate::isa::{mem_load_dword, Csr, MachineState, Reg};
use crate::lifter::{csr_var, gpr_var, mem_var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ROp {
    Add,
    Sub,
    Mul,
    Xor,
    And,
    Or,
    Shl,
    Shr,
}

impl ROp {
    fn symbol(self) -> &'static str {
        match self {
            ROp::Add => "+",
            ROp::Sub => "-",
            ROp::Mul => "*",
            ROp::Xor => "^",
            ROp::And => "&",
            ROp::Or => "|",
            ROp::Shl => "<<",
            ROp::Shr => ">>",
        }
    }

    /// Binding strength; larger binds tighter.
    fn level(self) -> u8 {
        match self {
            ROp::Or => 0,
            ROp::Xor => 1,
            ROp::And => 2,
            ROp::Shl | ROp::Shr => 3,
            ROp::Add | ROp::Sub => 4,
            ROp::Mul => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum RExpr {
    Lit(u64),
    Gpr(Reg),
    Csr(Csr),
    Param(String),
    Mem64(Box<RExpr>),
    Bin(ROp, Box<RExpr>, Box<RExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Cmp {
    Eq,
    Ltu,
    Leu,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Atom {
    pub cmp: Cmp,
    pub lhs: RExpr,
    pub rhs: RExpr,
}

/// A conjunction of atoms; empty means `true`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize)]
pub struct RiscvPredicate {
    pub atoms: Vec<Atom>,
}

impl fmt::Display for RExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(e: &RExpr, parent: u8, right: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match e {
                RExpr::Lit(v) if *v < 10 => write!(f, "{v}"),
                RExpr::Lit(v) => write!(f, "{v:#x}"),
                RExpr::Gpr(r) => write!(f, "x{}", r.index()),
                RExpr::Csr(c) => f.write_str(c.name()),
                RExpr::Param(p) => f.write_str(p),
                RExpr::Mem64(a) => {
                    f.write_str("mem64[")?;
                    go(a, 0, false, f)?;
                    f.write_str("]")
                }
                RExpr::Bin(op, a, b) => {
                    let l = op.level();
                    let paren = l < parent || (right && l == parent);
                    if paren {
                        f.write_str("(")?;
                    }
                    go(a, l, false, f)?;
                    write!(f, " {} ", op.symbol())?;
                    go(b, l, true, f)?;
                    if paren {
                        f.write_str(")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, 0, false, f)
    }
}

impl fmt::Display for RiscvPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("true");
        }
        for (k, a) in self.atoms.iter().enumerate() {
            if k > 0 {
                f.write_str(" /\\ ")?;
            }
            let cmp = match a.cmp {
                Cmp::Eq => "=",
                Cmp::Ltu => "<",
                Cmp::Leu => "<=",
            };
            write!(f, "{} {cmp} {}", a.lhs, a.rhs)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(u64),
    Ident(String),
    Op(&'static str),
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Tok>, ContractError> {
    const OPS: [&str; 17] = [
        "/\\", "&&", "<<", ">>", "<=", "+", "-", "*", "^", "&", "|", "=", "<", "(", ")", "[", "]",
    ];
    let err = |msg: String| ContractError::Syntax { line, msg };
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            let t = text[start..i].replace('_', "");
            let v = match t.strip_prefix("0x") {
                Some(h) => u64::from_str_radix(h, 16),
                None => t.parse(),
            }
            .map_err(|_| err(format!("bad number {}", &text[start..i])))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(text[start..i].to_string()));
        } else {
            let op = OPS
                .iter()
                .find(|op| text[i..].starts_with(*op))
                .ok_or_else(|| err(format!("unexpected character {:?}", c as char)))?;
            out.push(Tok::Op(op));
            i += op.len();
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
    params: &'a BTreeSet<String>,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ContractError {
        ContractError::Syntax {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn peek_op(&self) -> Option<&'static str> {
        match self.toks.get(self.pos) {
            Some(Tok::Op(o)) => Some(o),
            _ => None,
        }
    }

    fn expect(&mut self, op: &str) -> Result<(), ContractError> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {op}")))
        }
    }

    fn pred(&mut self) -> Result<RiscvPredicate, ContractError> {
        let mut atoms = Vec::new();
        loop {
            if let Some(Tok::Ident(t)) = self.toks.get(self.pos) {
                if t == "true" {
                    self.pos += 1;
                } else {
                    atoms.push(self.atom()?);
                }
            } else {
                atoms.push(self.atom()?);
            }
            match self.peek_op() {
                Some("/\\") | Some("&&") => self.pos += 1,
                None if self.pos == self.toks.len() => break,
                _ => return Err(self.err("expected /\\ or end of predicate")),
            }
        }
        Ok(RiscvPredicate { atoms })
    }

    fn atom(&mut self) -> Result<Atom, ContractError> {
        let lhs = self.expr(0)?;
        let cmp = match self.peek_op() {
            Some("=") => Cmp::Eq,
            Some("<") => Cmp::Ltu,
            Some("<=") => Cmp::Leu,
            _ => return Err(self.err("expected =, < or <=")),
        };
        self.pos += 1;
        let rhs = self.expr(0)?;
        Ok(Atom { cmp, lhs, rhs })
    }

    fn binop(&self, level: u8) -> Option<ROp> {
        let op = match self.peek_op()? {
            "|" => ROp::Or,
            "^" => ROp::Xor,
            "&" => ROp::And,
            "<<" => ROp::Shl,
            ">>" => ROp::Shr,
            "+" => ROp::Add,
            "-" => ROp::Sub,
            "*" => ROp::Mul,
            _ => return None,
        };
        (op.level() == level).then_some(op)
    }

    fn expr(&mut self, level: u8) -> Result<RExpr, ContractError> {
        if level > 5 {
            return self.primary();
        }
        let mut lhs = self.expr(level + 1)?;
        while let Some(op) = self.binop(level) {
            self.pos += 1;
            let rhs = self.expr(level + 1)?;
            lhs = RExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<RExpr, ContractError> {
        let tok = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end"))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(RExpr::Lit(v)),
            Tok::Op("(") => {
                let e = self.expr(0)?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "mem64" => {
                self.expect("[")?;
                let e = self.expr(0)?;
                self.expect("]")?;
                Ok(RExpr::Mem64(Box::new(e)))
            }
            Tok::Ident(name) => {
                if self.params.contains(&name) {
                    Ok(RExpr::Param(name))
                } else if let Some(r) = Reg::parse(&name) {
                    Ok(RExpr::Gpr(r))
                } else if let Some(c) = Csr::from_name(&name) {
                    Ok(RExpr::Csr(c))
                } else {
                    Err(ContractError::UnknownName {
                        line: self.line,
                        name,
                    })
                }
            }
            Tok::Op(o) => Err(self.err(format!("unexpected {o}"))),
        }
    }
}

/// Parses a predicate; identifiers in `params` are parameters and shadow
/// register and CSR names.
pub fn parse_predicate(
    text: &str,
    params: &BTreeSet<String>,
    line: usize,
) -> Result<RiscvPredicate, ContractError> {
    let toks = tokenize(text, line)?;
    if toks.is_empty() {
        return Err(ContractError::Syntax {
            line,
            msg: "empty predicate".into(),
        });
    }
    Parser {
        toks,
        pos: 0,
        line,
        params,
    }
    .pred()
}

/// Values of the parameters of a contract.
pub type ParamValues = BTreeMap<String, u64>;

impl RExpr {
    /// Word value on a machine state, using the interpreter's semantics.
    pub fn eval(&self, s: &MachineState, params: &ParamValues) -> Option<u64> {
        Some(match self {
            RExpr::Lit(v) => *v,
            RExpr::Gpr(r) => s.gpr(*r),
            RExpr::Csr(c) => s.csr(*c),
            RExpr::Param(p) => *params.get(p)?,
            RExpr::Mem64(a) => mem_load_dword(&s.mem, a.eval(s, params)?),
            RExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(s, params)?, b.eval(s, params)?);
                match op {
                    ROp::Add => a.wrapping_add(b),
                    ROp::Sub => a.wrapping_sub(b),
                    ROp::Mul => a.wrapping_mul(b),
                    ROp::Xor => a ^ b,
                    ROp::And => a & b,
                    ROp::Or => a | b,
                    ROp::Shl => u32::try_from(b)
                        .ok()
                        .and_then(|b| a.checked_shl(b))
                        .unwrap_or(0),
                    ROp::Shr => u32::try_from(b)
                        .ok()
                        .and_then(|b| a.checked_shr(b))
                        .unwrap_or(0),
                }
            }
        })
    }

    pub fn visit(&self, f: &mut dyn FnMut(&RExpr)) {
        f(self);
        match self {
            RExpr::Mem64(a) => a.visit(f),
            RExpr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn mentions(&self, target: &RExpr) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= e == target);
        found
    }

    pub fn translate(&self) -> Exp {
        match self {
            RExpr::Lit(v) => Exp::c64(*v),
            RExpr::Gpr(r) if r.is_zero() => Exp::c64(0),
            RExpr::Gpr(r) => Exp::den(&gpr_var(*r)),
            RExpr::Csr(c) => Exp::den(&csr_var(*c)),
            RExpr::Param(p) => Exp::sym(&param_symbol(p)),
            RExpr::Mem64(a) => Exp::load(Exp::den(&mem_var()), a.translate(), 64),
            RExpr::Bin(op, a, b) => {
                let op = match op {
                    ROp::Add => BinOp::Plus,
                    ROp::Sub => BinOp::Minus,
                    ROp::Mul => BinOp::Mult,
                    ROp::Xor => BinOp::Xor,
                    ROp::And => BinOp::And,
                    ROp::Or => BinOp::Or,
                    ROp::Shl => BinOp::LShift,
                    ROp::Shr => BinOp::RShiftUnsigned,
                };
                Exp::bin(op, a.translate(), b.translate())
            }
        }
    }
}

pub fn param_symbol(name: &str) -> Symbol {
    Symbol::new(name, BirType::Imm64)
}

impl Atom {
    pub fn eval(&self, s: &MachineState, params: &ParamValues) -> Option<bool> {
        let (a, b) = (self.lhs.eval(s, params)?, self.rhs.eval(s, params)?);
        Some(match self.cmp {
            Cmp::Eq => a == b,
            Cmp::Ltu => a < b,
            Cmp::Leu => a <= b,
        })
    }

    pub fn translate(&self) -> Exp {
        let op = match self.cmp {
            Cmp::Eq => PredOp::Equal,
            Cmp::Ltu => PredOp::LessThanUnsigned,
            Cmp::Leu => PredOp::LessOrEqualUnsigned,
        };
        Exp::pred(op, self.lhs.translate(), self.rhs.translate())
    }
}

impl RiscvPredicate {
    /// `None` when a parameter has no value.
    pub fn eval(&self, s: &MachineState, params: &ParamValues) -> Option<bool> {
        for a in &self.atoms {
            if !a.eval(s, params)? {
                return Some(false);
            }
        }
        Some(true)
    }

    /// The BIR predicate over program variables and parameter symbols.
    pub fn translate(&self) -> Exp {
        Exp::conj(self.atoms.iter().map(Atom::translate))
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in &self.atoms {
            for e in [&a.lhs, &a.rhs] {
                e.visit(&mut |x| {
                    if let RExpr::Param(p) = x {
                        out.insert(p.clone());
                    }
                });
            }
        }
        out
    }

    /// BIR variables the translation reads.
    pub fn vars(&self) -> BTreeSet<Var> {
        self.translate().vars()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bir::{eval_bool, Interp, Value, Word};
    use crate::lifter::LiftMap;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn params(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn incr_pre_translates_to_den_equal_param() {
        let p = parse_predicate("x10 = pre_x10", &params(&["pre_x10"]), 1).unwrap();
        assert_eq!(
            p.translate(),
            Exp::eq(
                Exp::den(&Var::new("x10", BirType::Imm64)),
                Exp::sym(&Symbol::new("pre_x10", BirType::Imm64))
            )
        );
        assert_eq!(
            parse_predicate("true", &params(&[]), 1)
                .unwrap()
                .translate(),
            Exp::tt()
        );
    }

    #[test]
    fn memory_atom_translates_to_load() {
        let ps = params(&["pre_mscratch", "pre_mepc"]);
        let p = parse_predicate("mem64[pre_mscratch + 8] = pre_mepc", &ps, 1).unwrap();
        let expected = Exp::eq(
            Exp::load(
                Exp::den(&mem_var()),
                Exp::plus(Exp::sym(&param_symbol("pre_mscratch")), Exp::c64(8)),
                64,
            ),
            Exp::sym(&param_symbol("pre_mepc")),
        );
        assert_eq!(p.translate(), expected);
    }

    #[test]
    fn precedence_and_printing() {
        let ps = params(&["k"]);
        let p = parse_predicate(
            "a0 = (k ^ a1) << 3 | 1 + 2 * a2 /\\ sp <= 0x100 && mscratch < k",
            &ps,
            1,
        )
        .unwrap();
        assert_eq!(p.atoms.len(), 3);
        let text = p.to_string();
        assert_eq!(
            text,
            "x10 = (k ^ x11) << 3 | 1 + 2 * x12 /\\ x2 <= 0x100 /\\ mscratch < k"
        );
        assert_eq!(parse_predicate(&text, &ps, 1).unwrap(), p);
        let left = parse_predicate("a0 = a1 - (a2 - a3)", &ps, 1).unwrap();
        assert_eq!(parse_predicate(&left.to_string(), &ps, 1).unwrap(), left);
    }

    #[test]
    fn rejects_outside_the_language() {
        let ps = params(&[]);
        assert!(matches!(
            parse_predicate("f0 = 1", &ps, 3),
            Err(ContractError::UnknownName { line: 3, .. })
        ));
        assert!(matches!(
            parse_predicate("a0 != 1", &ps, 1),
            Err(ContractError::Syntax { .. })
        ));
        assert!(matches!(
            parse_predicate("a0 = ", &ps, 1),
            Err(ContractError::Syntax { .. })
        ));
        assert!(matches!(
            parse_predicate("a0 = 1 a1", &ps, 1),
            Err(ContractError::Syntax { .. })
        ));
        assert!(matches!(
            parse_predicate("", &ps, 1),
            Err(ContractError::Syntax { .. })
        ));
    }

    #[test]
    fn translation_agrees_with_machine_evaluation() {
        let ps = params(&["p", "q"]);
        let texts = [
            "a0 = p + 1",
            "mem64[sp + 16] = q /\\ sp < p",
            "(a0 ^ a1) << 7 | a0 >> 57 = p * 3 - q",
            "mem64[mem64[a0]] <= x0 + mscratch & mepc",
            "a0 << p = a1 >> q",
        ];
        let mut rng = StdRng::seed_from_u64(7);
        for text in texts {
            let pred = parse_predicate(text, &ps, 1).unwrap();
            let bir = pred.translate();
            for _ in 0..1000 {
                let mut s = MachineState::new(0);
                for r in 1..32 {
                    s.set_gpr(Reg::from_bits(r), crate::isa::sample::word(&mut rng));
                }
                for c in Csr::ALL {
                    s.set_csr(c, rng.gen());
                }
                for _ in 0..4 {
                    let base = if rng.gen() {
                        s.gpr(Reg::from_bits(2))
                    } else {
                        s.gpr(Reg::from_bits(10))
                    };
                    crate::isa::sample::fill_random(&mut s, base, 24, &mut rng);
                }
                let values: ParamValues = [("p", 0u64), ("q", 0)]
                    .into_iter()
                    .map(|(k, _)| (k.to_string(), crate::isa::sample::word(&mut rng)))
                    .collect();
                let mut h = Interp::default();
                for (k, v) in &values {
                    h.set(&param_symbol(k), Value::Word(Word::new(64, *v)));
                }
                let env = LiftMap::env_of(&s);
                let isa = pred.eval(&s, &values).unwrap();
                assert_eq!(
                    eval_bool(
                        &bir,
                        &super::super::StateView {
                            env: &env,
                            syms: &h
                        }
                    )
                    .unwrap(),
                    isa,
                    "{text}"
                );
            }
        }
    }
}
