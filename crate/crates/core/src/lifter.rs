//! Translation of decoded instructions into BIR blocks, one block per
//! instruction, plus the randomized simulation check that stands in for a
//! lifting proof.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::Serialize;
use thiserror::Error;

use crate::bir::{
    exec_block_open, BinOp, BirEnv, BirType, Block, CastOp, End, Exp, MemValue, Next, PredOp,
    Program, Stmt, Target, UnOp, Value, Var, Word,
};
use crate::disasm::{ProgramSlice, RawInstr};
use crate::isa::{decode, mnemonic_matches, sample, Csr, Instr, IsaError, Kind, MachineState, Reg};

pub const MEM_VAR: &str = "MEM8";

/// The variable holding general-purpose register `r` (`x0` has none).
pub fn gpr_var(r: Reg) -> Var {
    Var::new(&format!("x{}", r.index()), BirType::Imm64)
}

pub fn csr_var(c: Csr) -> Var {
    Var::new(c.name(), BirType::Imm64)
}

pub fn mem_var() -> Var {
    Var::new(MEM_VAR, BirType::Mem)
}

fn tmp_var(name: &str) -> Var {
    Var::new(name, BirType::Imm64)
}

/// Correspondence between ISA state and BIR variables, plus the source
/// instruction of every block.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LiftMap {
    pub instrs: BTreeMap<u64, RawInstr>,
}

impl LiftMap {
    /// All state-carrying variables: x1..x31, the CSRs and memory.
    pub fn state_vars() -> Vec<Var> {
        let mut out: Vec<Var> = (1..32).map(|i| gpr_var(Reg::from_bits(i))).collect();
        out.extend(Csr::ALL.into_iter().map(csr_var));
        out.push(mem_var());
        out
    }

    /// The BIR environment image of a machine state. Memory keeps the
    /// zero default of the ISA model.
    pub fn env_of(s: &MachineState) -> BirEnv {
        let mut env = BirEnv::default();
        for i in 1..32 {
            let r = Reg::from_bits(i);
            env.set(&gpr_var(r), Value::Word(Word::new(64, s.gpr(r))));
        }
        for c in Csr::ALL {
            env.set(&csr_var(c), Value::Word(Word::new(64, s.csr(c))));
        }
        env.set(
            &mem_var(),
            Value::Mem(Arc::new(MemValue::zeroed(s.mem.clone()))),
        );
        env
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiftError {
    #[error("at {addr:#x}: {source}")]
    Unsupported { addr: u64, source: IsaError },
}

fn read(r: Reg) -> Exp {
    if r.is_zero() {
        Exp::c64(0)
    } else {
        Exp::den(&gpr_var(r))
    }
}

fn c32(v: i64) -> Exp {
    Exp::word(32, v as u64)
}

fn low32(e: impl Into<Arc<Exp>>) -> Exp {
    Exp::cast(CastOp::Low, e, 32)
}

fn sext64(e: impl Into<Arc<Exp>>) -> Exp {
    Exp::cast(CastOp::SignedExtend, e, 64)
}

fn bool64(e: Exp) -> Exp {
    Exp::cast(CastOp::UnsignedExtend, e, 64)
}

fn bin(op: BinOp, a: impl Into<Arc<Exp>>, b: impl Into<Arc<Exp>>) -> Exp {
    Exp::bin(op, a, b)
}

fn neg(e: impl Into<Arc<Exp>>) -> Exp {
    Exp::unary(UnOp::ChangeSign, e)
}

fn is_neg(e: &Arc<Exp>, width: u32) -> Exp {
    Exp::pred(PredOp::LessThanSigned, e.clone(), Exp::word(width, 0))
}

fn offset(base: Reg, imm: i64) -> Exp {
    if imm == 0 {
        read(base)
    } else {
        Exp::plus(read(base), Exp::c64(imm as u64))
    }
}

/// High 64 bits of the unsigned 128-bit product, from 32-bit halves.
fn mulhu(a: &Arc<Exp>, b: &Arc<Exp>) -> Exp {
    let m = || Exp::c64(0xffff_ffff);
    let sh = || Exp::c64(32);
    let a_lo = Arc::new(bin(BinOp::And, a.clone(), m()));
    let a_hi = Arc::new(bin(BinOp::RShiftUnsigned, a.clone(), sh()));
    let b_lo = Arc::new(bin(BinOp::And, b.clone(), m()));
    let b_hi = Arc::new(bin(BinOp::RShiftUnsigned, b.clone(), sh()));
    let p00 = bin(BinOp::Mult, a_lo.clone(), b_lo.clone());
    let p01 = Arc::new(bin(BinOp::Mult, a_lo, b_hi.clone()));
    let p10 = Arc::new(bin(BinOp::Mult, a_hi.clone(), b_lo));
    let p11 = bin(BinOp::Mult, a_hi, b_hi);
    let mid = Exp::plus(
        Exp::plus(
            bin(BinOp::RShiftUnsigned, p00, sh()),
            bin(BinOp::And, p01.clone(), m()),
        ),
        bin(BinOp::And, p10.clone(), m()),
    );
    Exp::plus(
        Exp::plus(
            Exp::plus(p11, bin(BinOp::RShiftUnsigned, p01, sh())),
            bin(BinOp::RShiftUnsigned, p10, sh()),
        ),
        bin(BinOp::RShiftUnsigned, mid, sh()),
    )
}

fn abs(e: &Arc<Exp>, width: u32) -> Arc<Exp> {
    Arc::new(Exp::ite(is_neg(e, width), neg(e.clone()), e.clone()))
}

/// Signed division with the ISA results for zero divisors and overflow.
fn div_signed(a: &Arc<Exp>, b: &Arc<Exp>, width: u32) -> Exp {
    let q = Arc::new(bin(BinOp::DivUnsigned, abs(a, width), abs(b, width)));
    let signs_differ = Exp::pred(PredOp::NotEqual, is_neg(a, width), is_neg(b, width));
    Exp::ite(
        Exp::eq(b.clone(), Exp::word(width, 0)),
        Exp::word(width, u64::MAX),
        Exp::ite(signs_differ, neg(q.clone()), q),
    )
}

fn rem_signed(a: &Arc<Exp>, b: &Arc<Exp>, width: u32) -> Exp {
    let (ua, ub) = (abs(a, width), abs(b, width));
    let q = bin(BinOp::DivUnsigned, ua.clone(), ub.clone());
    let r = Arc::new(bin(BinOp::Minus, ua, bin(BinOp::Mult, q, ub)));
    Exp::ite(is_neg(a, width), neg(r.clone()), r)
}

fn rem_unsigned(a: &Arc<Exp>, b: &Arc<Exp>) -> Exp {
    let q = bin(BinOp::DivUnsigned, a.clone(), b.clone());
    bin(BinOp::Minus, a.clone(), bin(BinOp::Mult, q, b.clone()))
}

/// The value written to `rd` by an ALU-style instruction.
fn alu(i: &Instr) -> Exp {
    use Kind::*;

    let a = Arc::new(read(i.rs1));
    let b = Arc::new(read(i.rs2));
    let imm = || Exp::c64(i.imm as u64);
    let a32 = || Arc::new(low32(a.clone()));
    let b32 = || Arc::new(low32(b.clone()));
    let shamt64 = || bin(BinOp::And, b.clone(), Exp::c64(63));
    let shamt32 = || bin(BinOp::And, b32(), c32(31));
    match i.kind {
        Addi => Exp::plus(a, imm()),
        Slti => bool64(Exp::pred(PredOp::LessThanSigned, a, imm())),
        Sltiu => bool64(Exp::pred(PredOp::LessThanUnsigned, a, imm())),
        Xori => bin(BinOp::Xor, a, imm()),
        Ori => bin(BinOp::Or, a, imm()),
        Andi => bin(BinOp::And, a, imm()),
        Slli => bin(BinOp::LShift, a, imm()),
        Srli => bin(BinOp::RShiftUnsigned, a, imm()),
        Srai => bin(BinOp::RShiftSigned, a, imm()),
        Add => Exp::plus(a, b),
        Sub => bin(BinOp::Minus, a, b),
        Sll => bin(BinOp::LShift, a, shamt64()),
        Slt => bool64(Exp::pred(PredOp::LessThanSigned, a, b)),
        Sltu => bool64(Exp::pred(PredOp::LessThanUnsigned, a, b)),
        Xor => bin(BinOp::Xor, a, b),
        Srl => bin(BinOp::RShiftUnsigned, a, shamt64()),
        Sra => bin(BinOp::RShiftSigned, a, shamt64()),
        Or => bin(BinOp::Or, a, b),
        And => bin(BinOp::And, a, b),
        Addiw => sext64(Exp::plus(a32(), c32(i.imm))),
        Slliw => sext64(bin(BinOp::LShift, a32(), c32(i.imm))),
        Srliw => sext64(bin(BinOp::RShiftUnsigned, a32(), c32(i.imm))),
        Sraiw => sext64(bin(BinOp::RShiftSigned, a32(), c32(i.imm))),
        Addw => sext64(Exp::plus(a32(), b32())),
        Subw => sext64(bin(BinOp::Minus, a32(), b32())),
        Sllw => sext64(bin(BinOp::LShift, a32(), shamt32())),
        Srlw => sext64(bin(BinOp::RShiftUnsigned, a32(), shamt32())),
        Sraw => sext64(bin(BinOp::RShiftSigned, a32(), shamt32())),
        Mul => bin(BinOp::Mult, a, b),
        Mulhu => mulhu(&a, &b),
        Mulh => {
            let corr_a = Exp::ite(is_neg(&a, 64), b.clone(), Exp::c64(0));
            let corr_b = Exp::ite(is_neg(&b, 64), a.clone(), Exp::c64(0));
            bin(
                BinOp::Minus,
                bin(BinOp::Minus, mulhu(&a, &b), corr_a),
                corr_b,
            )
        }
        Mulhsu => {
            let corr_a = Exp::ite(is_neg(&a, 64), b.clone(), Exp::c64(0));
            bin(BinOp::Minus, mulhu(&a, &b), corr_a)
        }
        Div => div_signed(&a, &b, 64),
        Divu => bin(BinOp::DivUnsigned, a, b),
        Rem => rem_signed(&a, &b, 64),
        Remu => rem_unsigned(&a, &b),
        Mulw => sext64(bin(BinOp::Mult, a32(), b32())),
        Divw => sext64(div_signed(&a32(), &b32(), 32)),
        Divuw => sext64(bin(BinOp::DivUnsigned, a32(), b32())),
        Remw => sext64(rem_signed(&a32(), &b32(), 32)),
        Remuw => sext64(rem_unsigned(&a32(), &b32())),
        _ => unreachable!("{:?} is not an ALU instruction", i.kind),
    }
}

fn assign_rd(stmts: &mut Vec<Stmt>, rd: Reg, e: Exp) {
    if !rd.is_zero() {
        stmts.push(Stmt::Assign(gpr_var(rd), e));
    }
}

/// Lifts one instruction at `addr` into a block labelled `addr`.
pub fn lift_instr(i: &Instr, addr: u64) -> Block {
    use Kind::*;

    let next = addr.wrapping_add(4);
    let mut stmts = Vec::new();
    let mut end = End::Jmp(Target::Label(next));
    match i.kind {
        Lui => assign_rd(&mut stmts, i.rd, Exp::c64(i.imm as u64)),
        Auipc => assign_rd(&mut stmts, i.rd, Exp::c64(addr.wrapping_add(i.imm as u64))),
        Jal => {
            assign_rd(&mut stmts, i.rd, Exp::c64(next));
            end = End::Jmp(Target::Label(addr.wrapping_add(i.imm as u64)));
        }
        Jalr => {
            let target = if i.rs1.is_zero() {
                Target::Label(i.imm as u64 & !1)
            } else {
                let sum = offset(i.rs1, i.imm);
                let masked = Exp::and(sum, Exp::c64(!1));
                if !i.rd.is_zero() && i.rd == i.rs1 {
                    let tmp = tmp_var("tmp_jalr");
                    stmts.push(Stmt::Assign(tmp.clone(), masked));
                    Target::Exp(Exp::den(&tmp))
                } else {
                    Target::Exp(masked)
                }
            };
            assign_rd(&mut stmts, i.rd, Exp::c64(next));
            end = End::Jmp(target);
        }
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            let (a, b) = (read(i.rs1), read(i.rs2));
            let cond = match i.kind {
                Beq => Exp::eq(a, b),
                Bne => Exp::pred(PredOp::NotEqual, a, b),
                Blt => Exp::pred(PredOp::LessThanSigned, a, b),
                Bge => Exp::not(Exp::pred(PredOp::LessThanSigned, a, b)),
                Bltu => Exp::pred(PredOp::LessThanUnsigned, a, b),
                _ => Exp::pred(PredOp::LessOrEqualUnsigned, b, a),
            };
            end = End::CJmp(
                cond,
                Target::Label(addr.wrapping_add(i.imm as u64)),
                Target::Label(next),
            );
        }
        Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => {
            let (width, signed) = match i.kind {
                Lb => (8, true),
                Lh => (16, true),
                Lw => (32, true),
                Ld => (64, false),
                Lbu => (8, false),
                Lhu => (16, false),
                _ => (32, false),
            };
            let load = Exp::load(Exp::den(&mem_var()), offset(i.rs1, i.imm), width);
            let value = match (width, signed) {
                (64, _) => load,
                (_, true) => Exp::cast(CastOp::SignedExtend, load, 64),
                (_, false) => Exp::cast(CastOp::UnsignedExtend, load, 64),
            };
            assign_rd(&mut stmts, i.rd, value);
        }
        Sb | Sh | Sw | Sd => {
            let width = match i.kind {
                Sb => 8,
                Sh => 16,
                Sw => 32,
                _ => 64,
            };
            let value = if width == 64 {
                read(i.rs2)
            } else {
                Exp::cast(CastOp::Low, read(i.rs2), width)
            };
            let mem = mem_var();
            stmts.push(Stmt::Assign(
                mem.clone(),
                Exp::store(Exp::den(&mem), offset(i.rs1, i.imm), value),
            ));
        }
        Csrrw | Csrrs | Csrrc => {
            let csr = csr_var(i.csr.expect("CSR instruction without CSR"));
            let old = if i.rd.is_zero() {
                Exp::den(&csr)
            } else {
                let tmp = tmp_var("tmp_csr");
                stmts.push(Stmt::Assign(tmp.clone(), Exp::den(&csr)));
                Exp::den(&tmp)
            };
            let new = match i.kind {
                Csrrw => Some(read(i.rs1)),
                _ if i.rs1.is_zero() => None,
                Csrrs => Some(bin(BinOp::Or, old.clone(), read(i.rs1))),
                _ => Some(Exp::and(old.clone(), Exp::not(read(i.rs1)))),
            };
            if let Some(new) = new {
                stmts.push(Stmt::Assign(csr, new));
            }
            assign_rd(&mut stmts, i.rd, old);
        }
        _ => assign_rd(&mut stmts, i.rd, alu(i)),
    }
    Block {
        label: addr,
        text: i.to_string(),
        stmts,
        end,
    }
}

/// Lifts every instruction of the slice; end addresses become exits.
pub fn lift_slice(slice: &ProgramSlice) -> Result<(Program, LiftMap), LiftError> {
    let mut blocks = Vec::with_capacity(slice.instrs.len());
    let mut map = LiftMap::default();
    for raw in &slice.instrs {
        let i = decode(raw.word).map_err(|source| LiftError::Unsupported {
            addr: raw.address,
            source,
        })?;
        let mut block = lift_instr(&i, raw.address);
        block.text = raw.describe();
        blocks.push(block);
        map.instrs.insert(raw.address, raw.clone());
    }
    let program =
        Program::new(blocks, slice.end_addrs.clone()).expect("slice addresses are unique");
    Ok((program, map))
}

/// Addresses whose printed mnemonic does not render the decoded word.
pub fn mnemonic_mismatches(instrs: &[RawInstr]) -> Vec<u64> {
    instrs
        .iter()
        .filter(|raw| match decode(raw.word) {
            Ok(i) => !mnemonic_matches(&i, &raw.mnemonic),
            Err(_) => false,
        })
        .map(|raw| raw.address)
        .collect()
}

/// A disagreement between the interpreter and the lifted block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimFailure {
    pub before: MachineState,
    pub difference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimReport {
    pub instr: String,
    pub kind: Kind,
    pub addr: u64,
    pub trials: u64,
    pub failures: u64,
    pub counterexample: Option<SimFailure>,
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.trials > 0
    }
}

/// Compares the lifted block of `i` with the interpreter on one state.
pub fn compare_step(i: &Instr, block: &Block, before: &MachineState) -> Result<(), String> {
    let expected = before.step(i);
    let env = LiftMap::env_of(before);
    let (after, next) = exec_block_open(block, &env).map_err(|e| e.to_string())?;
    for r in 1..32 {
        let r = Reg::from_bits(r);
        let got = after.word(&gpr_var(r));
        if got != Some(expected.gpr(r)) {
            return Err(format!(
                "{r}: expected {:#x}, got {got:x?}",
                expected.gpr(r)
            ));
        }
    }
    for c in Csr::ALL {
        let got = after.word(&csr_var(c));
        if got != Some(expected.csr(c)) {
            return Err(format!(
                "{c}: expected {:#x}, got {got:x?}",
                expected.csr(c)
            ));
        }
    }
    let mem = after
        .get(&mem_var())
        .and_then(Value::mem)
        .ok_or("memory missing")?;
    if !mem
        .same_contents(&MemValue::zeroed(expected.mem.clone()))
        .map_err(|e| e.to_string())?
    {
        return Err("memory differs".into());
    }
    if next != Next::Label(expected.pc) {
        return Err(format!(
            "next pc: expected {:#x}, got {next:x?}",
            expected.pc
        ));
    }
    Ok(())
}

/// Runs `trials` random-state comparisons of `lift(i, addr)` against the
/// interpreter.
pub fn check_simulation_with(
    lift: &dyn Fn(&Instr, u64) -> Block,
    i: &Instr,
    addr: u64,
    trials: u64,
    seed: u64,
) -> SimReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let block = lift(i, addr);
    let mut report = SimReport {
        instr: i.to_string(),
        kind: i.kind,
        addr,
        trials,
        failures: 0,
        counterexample: None,
    };
    for _ in 0..trials {
        let before = sample::machine_state(i, addr, &mut rng);
        if let Err(difference) = compare_step(i, &block, &before) {
            report.failures += 1;
            report
                .counterexample
                .get_or_insert(SimFailure { before, difference });
        }
    }
    report
}

pub fn check_simulation(i: &Instr, addr: u64, trials: u64, seed: u64) -> SimReport {
    check_simulation_with(&lift_instr, i, addr, trials, seed)
}

/// Deliberately wrong lifter used to show the simulation check has teeth:
/// the immediate is off by one.
pub fn lift_off_by_one_imm(i: &Instr, addr: u64) -> Block {
    let mut m = *i;
    m.imm = m.imm.wrapping_add(1);
    let mut b = lift_instr(&m, addr);
    b.text = format!("{i} (mutated)");
    b
}

/// Simulation reports for every supported kind, each on a freshly sampled
/// instruction per chunk of trials.
pub fn check_all_kinds(
    lift: &dyn Fn(&Instr, u64) -> Block,
    trials: u64,
    seed: u64,
) -> Vec<SimReport> {
    use rand::Rng;

    let mut rng = StdRng::seed_from_u64(seed);
    Kind::ALL
        .iter()
        .map(|&kind| {
            let mut total = SimReport {
                instr: kind.mnemonic().to_string(),
                kind,
                addr: 0,
                trials: 0,
                failures: 0,
                counterexample: None,
            };
            let chunk = 50u64;
            let mut done = 0;
            while done < trials {
                let n = chunk.min(trials - done);
                let i = sample::instr(kind, &mut rng);
                let addr = rng.gen_range(0x1000u64..0x10_0000) & !3;
                let r = check_simulation_with(lift, &i, addr, n, rng.gen());
                total.trials += r.trials;
                total.failures += r.failures;
                if total.counterexample.is_none() && r.counterexample.is_some() {
                    total.instr = r.instr;
                    total.addr = r.addr;
                    total.counterexample = r.counterexample;
                }
                done += n;
            }
            total
        })
        .collect()
}
