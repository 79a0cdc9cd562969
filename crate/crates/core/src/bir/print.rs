//! S-expression text form of programs and expressions.
//!
//! Constants print as `0x1:64`, variables as `x10:64` or `MEM8:mem`,
//! symbols as `$s_x10:64`, and operators in prefix form. Constant jump
//! targets are bare hex labels.

use std::fmt::{self, Write};

use super::program::{Block, End, Program, Stmt, Target};
use super::{BinOp, CastOp, Exp, PredOp, UnOp};

pub fn unop_name(op: UnOp) -> &'static str {
    match op {
        UnOp::Not => "not",
        UnOp::ChangeSign => "chsign",
    }
}

pub fn binop_name(op: BinOp) -> &'static str {
    match op {
        BinOp::Plus => "plus",
        BinOp::Minus => "minus",
        BinOp::Mult => "mult",
        BinOp::DivUnsigned => "udiv",
        BinOp::And => "and",
        BinOp::Or => "or",
        BinOp::Xor => "xor",
        BinOp::LShift => "lsl",
        BinOp::RShiftUnsigned => "lsr",
        BinOp::RShiftSigned => "asr",
    }
}

pub fn predop_name(op: PredOp) -> &'static str {
    match op {
        PredOp::Equal => "eq",
        PredOp::NotEqual => "ne",
        PredOp::LessThanUnsigned => "ult",
        PredOp::LessOrEqualUnsigned => "ule",
        PredOp::LessThanSigned => "slt",
    }
}

pub fn castop_name(op: CastOp) -> &'static str {
    match op {
        CastOp::Low => "low",
        CastOp::SignedExtend => "sext",
        CastOp::UnsignedExtend => "zext",
    }
}

pub fn write_exp<W: Write>(f: &mut W, e: &Exp) -> fmt::Result {
    match e {
        Exp::Const(w) => write!(f, "{:#x}:{}", w.bits(), w.width()),
        Exp::Den(v) => write!(f, "{}:{}", v.name, v.ty),
        Exp::Sym(s) => write!(f, "${}:{}", s.name, s.ty),
        Exp::Unary(op, a) => {
            write!(f, "({} ", unop_name(*op))?;
            write_exp(f, a)?;
            f.write_char(')')
        }
        Exp::Bin(op, a, b) => list(f, binop_name(*op), &[a, b]),
        Exp::Pred(op, a, b) => list(f, predop_name(*op), &[a, b]),
        Exp::Ite(c, a, b) => list(f, "ite", &[c, a, b]),
        Exp::Cast(op, a, w) => {
            write!(f, "({} {w} ", castop_name(*op))?;
            write_exp(f, a)?;
            f.write_char(')')
        }
        Exp::Load(m, a, w) => {
            write!(f, "(load {w} ")?;
            write_exp(f, m)?;
            f.write_char(' ')?;
            write_exp(f, a)?;
            f.write_char(')')
        }
        Exp::Store(m, a, v) => list(f, "store", &[m, a, v]),
    }
}

fn list<W: Write>(f: &mut W, head: &str, args: &[&std::sync::Arc<Exp>]) -> fmt::Result {
    write!(f, "({head}")?;
    for a in args {
        f.write_char(' ')?;
        write_exp(f, a)?;
    }
    f.write_char(')')
}

fn write_target<W: Write>(f: &mut W, t: &Target) -> fmt::Result {
    match t {
        Target::Label(l) => write!(f, "{l:#x}"),
        Target::Exp(e) => write_exp(f, e),
    }
}

pub fn write_block<W: Write>(f: &mut W, b: &Block) -> fmt::Result {
    write!(f, "  (block {:#x} {:?}", b.label, b.text)?;
    for s in &b.stmts {
        f.write_str("\n    ")?;
        match s {
            Stmt::Assign(v, e) => {
                write!(f, "(assign {}:{} ", v.name, v.ty)?;
                write_exp(f, e)?;
            }
            Stmt::Assert(e) => {
                f.write_str("(assert ")?;
                write_exp(f, e)?;
            }
        }
        f.write_char(')')?;
    }
    f.write_str("\n    ")?;
    match &b.end {
        End::Jmp(t) => {
            f.write_str("(jmp ")?;
            write_target(f, t)?;
        }
        End::CJmp(c, t, e) => {
            f.write_str("(cjmp ")?;
            write_exp(f, c)?;
            f.write_char(' ')?;
            write_target(f, t)?;
            f.write_char(' ')?;
            write_target(f, e)?;
        }
        End::Halt => f.write_str("(halt")?,
    }
    f.write_str("))")
}

/// Renders a whole program, one block per form.
pub fn program_to_string(p: &Program) -> String {
    let mut out = String::from("(program\n  (exits");
    for l in &p.exits {
        let _ = write!(out, " {l:#x}");
    }
    out.push(')');
    for b in p.blocks() {
        out.push('\n');
        let _ = write_block(&mut out, b);
    }
    out.push_str(")\n");
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&program_to_string(self))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{BirType, Var};
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn prints_incr_program() {
        let x10 = Var::new("x10", BirType::Imm64);
        let b = Block {
            label: 0x10488,
            text: "00150513 (addi a0,a0,1)".into(),
            stmts: vec![Stmt::Assign(
                x10.clone(),
                Exp::plus(Exp::den(&x10), Exp::c64(1)),
            )],
            end: End::Jmp(Target::Label(0x1048c)),
        };
        let p = Program::new(vec![b], BTreeSet::from([0x1048c])).unwrap();
        assert_eq!(
            p.to_string(),
            "(program\n  (exits 0x1048c)\n  (block 0x10488 \"00150513 (addi a0,a0,1)\"\n    \
             (assign x10:64 (plus x10:64 0x1:64))\n    (jmp 0x1048c)))\n"
        );
    }
}
