use super::{Csr, Instr, IsaError, Kind, Reg};

fn bits(w: u32, hi: u32, lo: u32) -> u32 {
    (w >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

fn sign_extend(value: u32, width: u32) -> i64 {
    let shift = 64 - width;
    ((value as i64) << shift) >> shift
}

fn imm_i(w: u32) -> i64 {
    sign_extend(bits(w, 31, 20), 12)
}

fn imm_s(w: u32) -> i64 {
    sign_extend((bits(w, 31, 25) << 5) | bits(w, 11, 7), 12)
}

fn imm_b(w: u32) -> i64 {
    let v = (bits(w, 31, 31) << 12)
        | (bits(w, 7, 7) << 11)
        | (bits(w, 30, 25) << 5)
        | (bits(w, 11, 8) << 1);
    sign_extend(v, 13)
}

fn imm_u(w: u32) -> i64 {
    (w & 0xffff_f000) as i32 as i64
}

fn imm_j(w: u32) -> i64 {
    let v = (bits(w, 31, 31) << 20)
        | (bits(w, 19, 12) << 12)
        | (bits(w, 20, 20) << 11)
        | (bits(w, 30, 21) << 1);
    sign_extend(v, 21)
}

/// Decodes one 32-bit instruction word.
pub fn decode(w: u32) -> Result<Instr, IsaError> {
    use Kind::*;

    let unsupported = || IsaError::UnsupportedInstr(w);
    let rd = Reg::from_bits(w >> 7);
    let rs1 = Reg::from_bits(w >> 15);
    let rs2 = Reg::from_bits(w >> 20);
    let funct3 = bits(w, 14, 12);
    let funct7 = bits(w, 31, 25);

    let instr = match w & 0x7f {
        0x37 => Instr::u(Lui, rd, imm_u(w)),
        0x17 => Instr::u(Auipc, rd, imm_u(w)),
        0x6f => Instr::u(Jal, rd, imm_j(w)),
        0x67 if funct3 == 0 => Instr::i(Jalr, rd, rs1, imm_i(w)),
        0x63 => {
            let kind = match funct3 {
                0 => Beq,
                1 => Bne,
                4 => Blt,
                5 => Bge,
                6 => Bltu,
                7 => Bgeu,
                _ => return Err(unsupported()),
            };
            Instr::s(kind, rs1, rs2, imm_b(w))
        }
        0x03 => {
            let kind = match funct3 {
                0 => Lb,
                1 => Lh,
                2 => Lw,
                3 => Ld,
                4 => Lbu,
                5 => Lhu,
                6 => Lwu,
                _ => return Err(unsupported()),
            };
            Instr::i(kind, rd, rs1, imm_i(w))
        }
        0x23 => {
            let kind = match funct3 {
                0 => Sb,
                1 => Sh,
                2 => Sw,
                3 => Sd,
                _ => return Err(unsupported()),
            };
            Instr::s(kind, rs1, rs2, imm_s(w))
        }
        0x13 => match funct3 {
            0 => Instr::i(Addi, rd, rs1, imm_i(w)),
            2 => Instr::i(Slti, rd, rs1, imm_i(w)),
            3 => Instr::i(Sltiu, rd, rs1, imm_i(w)),
            4 => Instr::i(Xori, rd, rs1, imm_i(w)),
            6 => Instr::i(Ori, rd, rs1, imm_i(w)),
            7 => Instr::i(Andi, rd, rs1, imm_i(w)),
            1 | 5 => {
                let shamt = bits(w, 25, 20) as i64;
                let kind = match (funct3, bits(w, 31, 26)) {
                    (1, 0) => Slli,
                    (5, 0) => Srli,
                    (5, 0x10) => Srai,
                    _ => return Err(unsupported()),
                };
                Instr::i(kind, rd, rs1, shamt)
            }
            _ => return Err(unsupported()),
        },
        0x1b => match (funct3, funct7) {
            (0, _) => Instr::i(Addiw, rd, rs1, imm_i(w)),
            (1, 0) => Instr::i(Slliw, rd, rs1, bits(w, 24, 20) as i64),
            (5, 0) => Instr::i(Srliw, rd, rs1, bits(w, 24, 20) as i64),
            (5, 0x20) => Instr::i(Sraiw, rd, rs1, bits(w, 24, 20) as i64),
            _ => return Err(unsupported()),
        },
        0x33 => {
            let kind = match (funct7, funct3) {
                (0, 0) => Add,
                (0x20, 0) => Sub,
                (0, 1) => Sll,
                (0, 2) => Slt,
                (0, 3) => Sltu,
                (0, 4) => Xor,
                (0, 5) => Srl,
                (0x20, 5) => Sra,
                (0, 6) => Or,
                (0, 7) => And,
                (1, 0) => Mul,
                (1, 1) => Mulh,
                (1, 2) => Mulhsu,
                (1, 3) => Mulhu,
                (1, 4) => Div,
                (1, 5) => Divu,
                (1, 6) => Rem,
                (1, 7) => Remu,
                _ => return Err(unsupported()),
            };
            Instr::r(kind, rd, rs1, rs2)
        }
        0x3b => {
            let kind = match (funct7, funct3) {
                (0, 0) => Addw,
                (0x20, 0) => Subw,
                (0, 1) => Sllw,
                (0, 5) => Srlw,
                (0x20, 5) => Sraw,
                (1, 0) => Mulw,
                (1, 4) => Divw,
                (1, 5) => Divuw,
                (1, 6) => Remw,
                (1, 7) => Remuw,
                _ => return Err(unsupported()),
            };
            Instr::r(kind, rd, rs1, rs2)
        }
        0x73 => {
            let kind = match funct3 {
                1 => Csrrw,
                2 => Csrrs,
                3 => Csrrc,
                _ => return Err(unsupported()),
            };
            let addr = bits(w, 31, 20);
            let csr = Csr::from_address(addr).ok_or(IsaError::UnsupportedCsr(addr))?;
            Instr::csr(kind, rd, csr, rs1)
        }
        _ => return Err(unsupported()),
    };
    Ok(instr)
}
