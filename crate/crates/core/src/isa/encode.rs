use super::{Format, Instr, Kind};

fn r_type(funct7: u32, funct3: u32, opcode: u32, i: &Instr) -> u32 {
    (funct7 << 25)
        | ((i.rs2.index() as u32) << 20)
        | ((i.rs1.index() as u32) << 15)
        | (funct3 << 12)
        | ((i.rd.index() as u32) << 7)
        | opcode
}

fn i_type(imm: u32, funct3: u32, opcode: u32, i: &Instr) -> u32 {
    ((imm & 0xfff) << 20)
        | ((i.rs1.index() as u32) << 15)
        | (funct3 << 12)
        | ((i.rd.index() as u32) << 7)
        | opcode
}

fn s_type(funct3: u32, i: &Instr) -> u32 {
    let imm = i.imm as u32;
    (((imm >> 5) & 0x7f) << 25)
        | ((i.rs2.index() as u32) << 20)
        | ((i.rs1.index() as u32) << 15)
        | (funct3 << 12)
        | ((imm & 0x1f) << 7)
        | 0x23
}

fn b_type(funct3: u32, i: &Instr) -> u32 {
    let imm = i.imm as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | ((i.rs2.index() as u32) << 20)
        | ((i.rs1.index() as u32) << 15)
        | (funct3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 1) << 7)
        | 0x63
}

fn j_type(i: &Instr) -> u32 {
    let imm = i.imm as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xff) << 12)
        | ((i.rd.index() as u32) << 7)
        | 0x6f
}

/// Inverse of [`super::decode`] for well-formed instructions. Immediates are
/// truncated to their field width.
pub(super) fn encode(i: &Instr) -> u32 {
    use Kind::*;

    let imm = i.imm as u32;
    match i.kind {
        Lui => (imm & 0xffff_f000) | ((i.rd.index() as u32) << 7) | 0x37,
        Auipc => (imm & 0xffff_f000) | ((i.rd.index() as u32) << 7) | 0x17,
        Jal => j_type(i),
        Jalr => i_type(imm, 0, 0x67, i),
        Beq => b_type(0, i),
        Bne => b_type(1, i),
        Blt => b_type(4, i),
        Bge => b_type(5, i),
        Bltu => b_type(6, i),
        Bgeu => b_type(7, i),
        Lb => i_type(imm, 0, 0x03, i),
        Lh => i_type(imm, 1, 0x03, i),
        Lw => i_type(imm, 2, 0x03, i),
        Ld => i_type(imm, 3, 0x03, i),
        Lbu => i_type(imm, 4, 0x03, i),
        Lhu => i_type(imm, 5, 0x03, i),
        Lwu => i_type(imm, 6, 0x03, i),
        Sb => s_type(0, i),
        Sh => s_type(1, i),
        Sw => s_type(2, i),
        Sd => s_type(3, i),
        Addi => i_type(imm, 0, 0x13, i),
        Slti => i_type(imm, 2, 0x13, i),
        Sltiu => i_type(imm, 3, 0x13, i),
        Xori => i_type(imm, 4, 0x13, i),
        Ori => i_type(imm, 6, 0x13, i),
        Andi => i_type(imm, 7, 0x13, i),
        Slli => i_type(imm & 0x3f, 1, 0x13, i),
        Srli => i_type(imm & 0x3f, 5, 0x13, i),
        Srai => i_type(0x400 | (imm & 0x3f), 5, 0x13, i),
        Add => r_type(0, 0, 0x33, i),
        Sub => r_type(0x20, 0, 0x33, i),
        Sll => r_type(0, 1, 0x33, i),
        Slt => r_type(0, 2, 0x33, i),
        Sltu => r_type(0, 3, 0x33, i),
        Xor => r_type(0, 4, 0x33, i),
        Srl => r_type(0, 5, 0x33, i),
        Sra => r_type(0x20, 5, 0x33, i),
        Or => r_type(0, 6, 0x33, i),
        And => r_type(0, 7, 0x33, i),
        Addiw => i_type(imm, 0, 0x1b, i),
        Slliw => i_type(imm & 0x1f, 1, 0x1b, i),
        Srliw => i_type(imm & 0x1f, 5, 0x1b, i),
        Sraiw => i_type(0x400 | (imm & 0x1f), 5, 0x1b, i),
        Addw => r_type(0, 0, 0x3b, i),
        Subw => r_type(0x20, 0, 0x3b, i),
        Sllw => r_type(0, 1, 0x3b, i),
        Srlw => r_type(0, 5, 0x3b, i),
        Sraw => r_type(0x20, 5, 0x3b, i),
        Mul => r_type(1, 0, 0x33, i),
        Mulh => r_type(1, 1, 0x33, i),
        Mulhsu => r_type(1, 2, 0x33, i),
        Mulhu => r_type(1, 3, 0x33, i),
        Div => r_type(1, 4, 0x33, i),
        Divu => r_type(1, 5, 0x33, i),
        Rem => r_type(1, 6, 0x33, i),
        Remu => r_type(1, 7, 0x33, i),
        Mulw => r_type(1, 0, 0x3b, i),
        Divw => r_type(1, 4, 0x3b, i),
        Divuw => r_type(1, 5, 0x3b, i),
        Remw => r_type(1, 6, 0x3b, i),
        Remuw => r_type(1, 7, 0x3b, i),
        Csrrw | Csrrs | Csrrc => {
            let funct3 = match i.kind {
                Csrrw => 1,
                Csrrs => 2,
                _ => 3,
            };
            let addr = i.csr.map(|c| c.address()).unwrap_or(0);
            i_type(addr, funct3, 0x73, i)
        }
    }
}

impl Kind {
    /// Whether the kind writes `rd`.
    pub fn writes_rd(self) -> bool {
        !matches!(self.format(), Format::S | Format::B)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{decode, sample};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn encode_inverts_decode_for_every_kind() {
        let mut rng = StdRng::seed_from_u64(7);
        for &kind in super::Kind::ALL {
            for _ in 0..200 {
                let i = sample::instr(kind, &mut rng);
                let w = i.encode();
                assert_eq!(decode(w), Ok(i), "{kind:?} word {w:#010x}");
            }
        }
    }
}
