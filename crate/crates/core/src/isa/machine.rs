//! Reference interpreter: the concrete RV64 semantics every lifted block is
//! checked against.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use super::{decode, Csr, Instr, IsaError, Kind, Reg};
use crate::disasm::ProgramSlice;

/// Architectural state: registers, pc, byte memory and the modelled CSRs.
///
/// Memory is partial; absent bytes read as zero.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct MachineState {
    gpr: [u64; 32],
    pub pc: u64,
    pub mem: BTreeMap<u64, u8>,
    csr: [u64; 5],
}

impl MachineState {
    pub fn new(pc: u64) -> MachineState {
        MachineState {
            pc,
            ..MachineState::default()
        }
    }

    pub fn gpr(&self, r: Reg) -> u64 {
        self.gpr[r.index()]
    }

    /// Writes to `x0` are discarded.
    pub fn set_gpr(&mut self, r: Reg, value: u64) {
        if !r.is_zero() {
            self.gpr[r.index()] = value;
        }
    }

    pub fn csr(&self, c: Csr) -> u64 {
        self.csr[c.index()]
    }

    pub fn set_csr(&mut self, c: Csr, value: u64) {
        self.csr[c.index()] = value;
    }

    pub fn load_byte(&self, addr: u64) -> u8 {
        self.mem.get(&addr).copied().unwrap_or(0)
    }

    /// Little-endian load of `bytes` bytes (1..=8), zero-extended.
    pub fn load(&self, addr: u64, bytes: u32) -> u64 {
        (0..bytes).rev().fold(0u64, |acc, k| {
            (acc << 8) | self.load_byte(addr.wrapping_add(k as u64)) as u64
        })
    }

    /// Little-endian store of the low `bytes` bytes of `value`.
    pub fn store(&mut self, addr: u64, bytes: u32, value: u64) {
        for k in 0..bytes {
            self.mem
                .insert(addr.wrapping_add(k as u64), (value >> (8 * k)) as u8);
        }
    }

    /// Executes one instruction in place.
    pub fn step_mut(&mut self, i: &Instr) {
        use Kind::*;

        let pc = self.pc;
        let a = self.gpr(i.rs1);
        let b = self.gpr(i.rs2);
        let imm = i.imm as u64;
        let mut next = pc.wrapping_add(4);

        let result: Option<u64> = match i.kind {
            Lui => Some(imm),
            Auipc => Some(pc.wrapping_add(imm)),
            Jal => {
                next = pc.wrapping_add(imm);
                Some(pc.wrapping_add(4))
            }
            Jalr => {
                next = a.wrapping_add(imm) & !1;
                Some(pc.wrapping_add(4))
            }
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                let taken = match i.kind {
                    Beq => a == b,
                    Bne => a != b,
                    Blt => (a as i64) < (b as i64),
                    Bge => (a as i64) >= (b as i64),
                    Bltu => a < b,
                    _ => a >= b,
                };
                if taken {
                    next = pc.wrapping_add(imm);
                }
                None
            }
            Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => {
                let addr = a.wrapping_add(imm);
                Some(match i.kind {
                    Lb => self.load(addr, 1) as i8 as u64,
                    Lh => self.load(addr, 2) as i16 as u64,
                    Lw => self.load(addr, 4) as i32 as u64,
                    Ld => self.load(addr, 8),
                    Lbu => self.load(addr, 1),
                    Lhu => self.load(addr, 2),
                    _ => self.load(addr, 4),
                })
            }
            Sb | Sh | Sw | Sd => {
                let bytes = match i.kind {
                    Sb => 1,
                    Sh => 2,
                    Sw => 4,
                    _ => 8,
                };
                self.store(a.wrapping_add(imm), bytes, b);
                None
            }
            Addi => Some(a.wrapping_add(imm)),
            Slti => Some(((a as i64) < i.imm) as u64),
            Sltiu => Some((a < imm) as u64),
            Xori => Some(a ^ imm),
            Ori => Some(a | imm),
            Andi => Some(a & imm),
            Slli => Some(a << (imm & 63)),
            Srli => Some(a >> (imm & 63)),
            Srai => Some(((a as i64) >> (imm & 63)) as u64),
            Add => Some(a.wrapping_add(b)),
            Sub => Some(a.wrapping_sub(b)),
            Sll => Some(a << (b & 63)),
            Slt => Some(((a as i64) < (b as i64)) as u64),
            Sltu => Some((a < b) as u64),
            Xor => Some(a ^ b),
            Srl => Some(a >> (b & 63)),
            Sra => Some(((a as i64) >> (b & 63)) as u64),
            Or => Some(a | b),
            And => Some(a & b),
            Addiw => Some(sext32(a.wrapping_add(imm))),
            Slliw => Some(sext32((a as u32).wrapping_shl(imm as u32 & 31) as u64)),
            Srliw => Some(sext32(((a as u32) >> (imm as u32 & 31)) as u64)),
            Sraiw => Some(((a as i32) >> (imm as u32 & 31)) as i64 as u64),
            Addw => Some(sext32(a.wrapping_add(b))),
            Subw => Some(sext32(a.wrapping_sub(b))),
            Sllw => Some(sext32((a as u32).wrapping_shl(b as u32 & 31) as u64)),
            Srlw => Some(sext32(((a as u32) >> (b as u32 & 31)) as u64)),
            Sraw => Some(((a as i32) >> (b as u32 & 31)) as i64 as u64),
            Mul => Some(a.wrapping_mul(b)),
            Mulh => Some((((a as i64 as i128) * (b as i64 as i128)) >> 64) as u64),
            Mulhsu => Some((((a as i64 as i128) * (b as i128)) >> 64) as u64),
            Mulhu => Some((((a as u128) * (b as u128)) >> 64) as u64),
            Div => Some(div_signed(a as i64, b as i64) as u64),
            Divu => Some(a.checked_div(b).unwrap_or(u64::MAX)),
            Rem => Some(rem_signed(a as i64, b as i64) as u64),
            Remu => Some(a.checked_rem(b).unwrap_or(a)),
            Mulw => Some(sext32(a.wrapping_mul(b))),
            Divw => Some(div_signed32(a as i32, b as i32) as i64 as u64),
            Divuw => Some(sext32(
                (a as u32).checked_div(b as u32).unwrap_or(u32::MAX) as u64
            )),
            Remw => Some(rem_signed32(a as i32, b as i32) as i64 as u64),
            Remuw => Some(sext32(
                (a as u32).checked_rem(b as u32).unwrap_or(a as u32) as u64
            )),
            Csrrw | Csrrs | Csrrc => {
                let csr = i.csr.expect("CSR instruction without CSR");
                let old = self.csr(csr);
                let new = match i.kind {
                    Csrrw => a,
                    Csrrs => old | a,
                    _ => old & !a,
                };
                self.set_csr(csr, new);
                Some(old)
            }
        };

        if let Some(value) = result {
            self.set_gpr(i.rd, value);
        }
        self.pc = next;
    }

    pub fn step(&self, i: &Instr) -> MachineState {
        let mut s = self.clone();
        s.step_mut(i);
        s
    }
}

fn sext32(v: u64) -> u64 {
    v as u32 as i32 as i64 as u64
}

fn div_signed(a: i64, b: i64) -> i64 {
    if b == 0 {
        -1
    } else {
        a.wrapping_div(b)
    }
}

fn rem_signed(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        a.wrapping_rem(b)
    }
}

fn div_signed32(a: i32, b: i32) -> i32 {
    if b == 0 {
        -1
    } else {
        a.wrapping_div(b)
    }
}

fn rem_signed32(a: i32, b: i32) -> i32 {
    if b == 0 {
        a
    } else {
        a.wrapping_rem(b)
    }
}

/// Little-endian doubleword read over a byte map; absent bytes are zero.
pub fn mem_load_dword(mem: &BTreeMap<u64, u8>, addr: u64) -> u64 {
    (0..8u64).rev().fold(0u64, |acc, k| {
        (acc << 8) | mem.get(&addr.wrapping_add(k)).copied().unwrap_or(0) as u64
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("fuel exhausted after {steps} steps at pc {pc:#x}")]
    FuelExhausted { steps: u64, pc: u64 },
    #[error("pc {0:#x} left the program slice")]
    PcOutsideSlice(u64),
    #[error("pc {pc:#x} does not start at the slice entry {entry:#x}")]
    WrongEntry { pc: u64, entry: u64 },
    #[error("at {addr:#x}: {source}")]
    Decode { addr: u64, source: IsaError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub state: MachineState,
    pub steps: u64,
}

/// Runs the slice from its entry until the pc reaches an end address.
pub fn run(state: MachineState, slice: &ProgramSlice, fuel: u64) -> Result<RunOutcome, RunError> {
    if state.pc != slice.entry {
        return Err(RunError::WrongEntry {
            pc: state.pc,
            entry: slice.entry,
        });
    }
    let code = slice
        .instrs
        .iter()
        .map(|raw| {
            decode(raw.word)
                .map(|i| (raw.address, i))
                .map_err(|source| RunError::Decode {
                    addr: raw.address,
                    source,
                })
        })
        .collect::<Result<HashMap<u64, Instr>, _>>()?;

    let mut state = state;
    let mut steps = 0;
    loop {
        if slice.end_addrs.contains(&state.pc) {
            return Ok(RunOutcome { state, steps });
        }
        if steps == fuel {
            return Err(RunError::FuelExhausted {
                steps,
                pc: state.pc,
            });
        }
        let instr = code
            .get(&state.pc)
            .ok_or(RunError::PcOutsideSlice(state.pc))?;
        state.step_mut(instr);
        steps += 1;
    }
}
