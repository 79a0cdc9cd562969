//! RV64IM + Zicsr subset: decoding, encoding, and a reference interpreter.
//!
//! The interpreter in [`machine`] is the ground truth that lifted BIR blocks
//! are tested against.

mod decode;
mod encode;
pub mod machine;
mod mnemonic;
pub mod sample;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use decode::decode;
pub use machine::{mem_load_dword, run, MachineState, RunError, RunOutcome};
pub use mnemonic::mnemonic_matches;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unsupported instruction word {0:#010x}")]
    UnsupportedInstr(u32),
    #[error("unsupported CSR {0:#05x}")]
    UnsupportedCsr(u32),
}

/// A general-purpose register index, always `< 32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(1);
    pub const SP: Reg = Reg(2);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    /// Builds a register from the low five bits of `bits`.
    pub fn from_bits(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Standard ABI name, as printed by objdump.
    pub fn abi_name(self) -> &'static str {
        ABI_NAMES[self.index()]
    }

    /// Accepts `x<N>` or an ABI name (`fp` is an alias for `s0`).
    pub fn parse(name: &str) -> Option<Reg> {
        if let Some(n) = name.strip_prefix('x') {
            if let Ok(i) = n.parse::<u8>() {
                return Reg::new(i);
            }
        }
        if name == "fp" {
            return Some(Reg(8));
        }
        ABI_NAMES
            .iter()
            .position(|&abi| abi == name)
            .map(|i| Reg(i as u8))
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abi_name())
    }
}

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

/// The machine-mode CSRs the interpreter and lifter model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Csr {
    Mstatus,
    Mscratch,
    Mepc,
    Mcause,
    Mhartid,
}

impl Csr {
    pub const ALL: [Csr; 5] = [
        Csr::Mstatus,
        Csr::Mscratch,
        Csr::Mepc,
        Csr::Mcause,
        Csr::Mhartid,
    ];

    pub fn address(self) -> u32 {
        match self {
            Csr::Mstatus => 0x300,
            Csr::Mscratch => 0x340,
            Csr::Mepc => 0x341,
            Csr::Mcause => 0x342,
            Csr::Mhartid => 0xf14,
        }
    }

    pub fn from_address(addr: u32) -> Option<Csr> {
        Csr::ALL.into_iter().find(|c| c.address() == addr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Csr::Mstatus => "mstatus",
            Csr::Mscratch => "mscratch",
            Csr::Mepc => "mepc",
            Csr::Mcause => "mcause",
            Csr::Mhartid => "mhartid",
        }
    }

    pub fn from_name(name: &str) -> Option<Csr> {
        Csr::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Csr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

macro_rules! kinds {
    ($($kind:ident => $mnem:literal, $fmt:ident;)*) => {
        /// Every supported operation.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        pub enum Kind {
            $($kind,)*
        }

        impl Kind {
            pub const ALL: &'static [Kind] = &[$(Kind::$kind,)*];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $(Kind::$kind => $mnem,)*
                }
            }

            pub fn format(self) -> Format {
                match self {
                    $(Kind::$kind => Format::$fmt,)*
                }
            }
        }
    };
}

kinds! {
    Lui => "lui", U;
    Auipc => "auipc", U;
    Jal => "jal", J;
    Jalr => "jalr", I;
    Beq => "beq", B;
    Bne => "bne", B;
    Blt => "blt", B;
    Bge => "bge", B;
    Bltu => "bltu", B;
    Bgeu => "bgeu", B;
    Lb => "lb", Load;
    Lh => "lh", Load;
    Lw => "lw", Load;
    Ld => "ld", Load;
    Lbu => "lbu", Load;
    Lhu => "lhu", Load;
    Lwu => "lwu", Load;
    Sb => "sb", S;
    Sh => "sh", S;
    Sw => "sw", S;
    Sd => "sd", S;
    Addi => "addi", I;
    Slti => "slti", I;
    Sltiu => "sltiu", I;
    Xori => "xori", I;
    Ori => "ori", I;
    Andi => "andi", I;
    Slli => "slli", Shift;
    Srli => "srli", Shift;
    Srai => "srai", Shift;
    Add => "add", R;
    Sub => "sub", R;
    Sll => "sll", R;
    Slt => "slt", R;
    Sltu => "sltu", R;
    Xor => "xor", R;
    Srl => "srl", R;
    Sra => "sra", R;
    Or => "or", R;
    And => "and", R;
    Addiw => "addiw", I;
    Slliw => "slliw", ShiftW;
    Srliw => "srliw", ShiftW;
    Sraiw => "sraiw", ShiftW;
    Addw => "addw", R;
    Subw => "subw", R;
    Sllw => "sllw", R;
    Srlw => "srlw", R;
    Sraw => "sraw", R;
    Mul => "mul", R;
    Mulh => "mulh", R;
    Mulhsu => "mulhsu", R;
    Mulhu => "mulhu", R;
    Div => "div", R;
    Divu => "divu", R;
    Rem => "rem", R;
    Remu => "remu", R;
    Mulw => "mulw", R;
    Divw => "divw", R;
    Divuw => "divuw", R;
    Remw => "remw", R;
    Remuw => "remuw", R;
    Csrrw => "csrrw", Csr;
    Csrrs => "csrrs", Csr;
    Csrrc => "csrrc", Csr;
}

/// Operand shape of an instruction kind. Decides which [`Instr`] fields are
/// meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    R,
    I,
    Load,
    Shift,
    ShiftW,
    S,
    B,
    U,
    J,
    Csr,
}

/// A decoded instruction. Fields that the kind does not use are zero, so
/// structural equality is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Instr {
    pub kind: Kind,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    /// Sign-extended immediate (shift amount for shifts, byte offset for
    /// branches and jumps).
    pub imm: i64,
    pub csr: Option<Csr>,
}

impl Instr {
    pub fn r(kind: Kind, rd: Reg, rs1: Reg, rs2: Reg) -> Instr {
        Instr {
            kind,
            rd,
            rs1,
            rs2,
            imm: 0,
            csr: None,
        }
    }

    pub fn i(kind: Kind, rd: Reg, rs1: Reg, imm: i64) -> Instr {
        Instr {
            kind,
            rd,
            rs1,
            rs2: Reg::ZERO,
            imm,
            csr: None,
        }
    }

    pub fn s(kind: Kind, rs1: Reg, rs2: Reg, imm: i64) -> Instr {
        Instr {
            kind,
            rd: Reg::ZERO,
            rs1,
            rs2,
            imm,
            csr: None,
        }
    }

    pub fn u(kind: Kind, rd: Reg, imm: i64) -> Instr {
        Instr {
            kind,
            rd,
            rs1: Reg::ZERO,
            rs2: Reg::ZERO,
            imm,
            csr: None,
        }
    }

    pub fn csr(kind: Kind, rd: Reg, csr: Csr, rs1: Reg) -> Instr {
        Instr {
            kind,
            rd,
            rs1,
            rs2: Reg::ZERO,
            imm: 0,
            csr: Some(csr),
        }
    }

    pub fn encode(&self) -> u32 {
        encode::encode(self)
    }
}

impl fmt::Display for Instr {
    /// Canonical (non-alias) assembly, e.g. `addi a0,a0,1` or `ld a5,8(a0)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.kind.mnemonic();
        let (rd, rs1, rs2, imm) = (self.rd, self.rs1, self.rs2, self.imm);
        match self.kind.format() {
            Format::R => write!(f, "{m} {rd},{rs1},{rs2}"),
            Format::I | Format::Shift | Format::ShiftW => write!(f, "{m} {rd},{rs1},{imm}"),
            Format::Load => write!(f, "{m} {rd},{imm}({rs1})"),
            Format::S => write!(f, "{m} {rs2},{imm}({rs1})"),
            Format::B => write!(f, "{m} {rs1},{rs2},{imm}"),
            Format::U => write!(f, "{m} {rd},{:#x}", (imm >> 12) & 0xfffff),
            Format::J => write!(f, "{m} {rd},{imm}"),
            Format::Csr => {
                let csr = self.csr.map(Csr::name).unwrap_or("?");
                write!(f, "{m} {rd},{csr},{rs1}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_names_round_trip() {
        for i in 0..32 {
            let r = Reg::new(i).unwrap();
            assert_eq!(Reg::parse(r.abi_name()), Some(r));
            assert_eq!(Reg::parse(&format!("x{i}")), Some(r));
        }
        assert_eq!(Reg::parse("fp"), Reg::parse("s0"));
        assert_eq!(Reg::parse("x32"), None);
        assert_eq!(Reg::new(32), None);
    }

    #[test]
    fn csr_addresses_are_distinct() {
        for c in Csr::ALL {
            assert_eq!(Csr::from_address(c.address()), Some(c));
            assert_eq!(Csr::from_name(c.name()), Some(c));
        }
        assert_eq!(Csr::from_address(0x305), None);
    }
}
