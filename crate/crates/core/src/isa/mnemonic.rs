use super::{Instr, Kind, Reg};

/// Pseudo-instruction names objdump (or an assembler listing) may print for
/// `i` instead of its base mnemonic.
fn aliases(i: &Instr) -> Vec<&'static str> {
    use Kind::*;

    let zero = Reg::ZERO;
    let mut out = Vec::new();
    match i.kind {
        Addi => {
            if i.rd == zero && i.rs1 == zero && i.imm == 0 {
                out.push("nop");
            }
            if i.rs1 == zero {
                out.push("li");
            }
            if i.imm == 0 {
                out.push("mv");
            }
        }
        Addiw if i.imm == 0 => out.push("sext.w"),
        Xori if i.imm == -1 => out.push("not"),
        Andi if i.imm == 0xff => out.push("zext.b"),
        Sltiu if i.imm == 1 => out.push("seqz"),
        Sub if i.rs1 == zero => out.push("neg"),
        Subw if i.rs1 == zero => out.push("negw"),
        Sltu if i.rs1 == zero => out.push("snez"),
        Slt if i.rs2 == zero => out.push("sltz"),
        Slt if i.rs1 == zero => out.push("sgtz"),
        Beq if i.rs2 == zero => out.push("beqz"),
        Bne if i.rs2 == zero => out.push("bnez"),
        Bge if i.rs1 == zero => out.push("blez"),
        Bge if i.rs2 == zero => out.push("bgez"),
        Blt if i.rs2 == zero => out.push("bltz"),
        Blt if i.rs1 == zero => out.push("bgtz"),
        Blt => out.push("bgt"),
        Bge => out.push("ble"),
        Bltu => out.push("bgtu"),
        Bgeu => out.push("bleu"),
        Jal if i.rd == zero => out.push("j"),
        Jalr if i.rd == zero && i.rs1 == Reg::RA && i.imm == 0 => out.push("ret"),
        Jalr if i.rd == zero => out.push("jr"),
        Csrrs if i.rs1 == zero => out.push("csrr"),
        Csrrs if i.rd == zero => out.push("csrs"),
        Csrrw if i.rd == zero => out.push("csrw"),
        Csrrc if i.rd == zero => out.push("csrc"),
        _ => {}
    }
    // `blt`/`bge` with a zero operand may also be printed with swapped names
    if matches!(i.kind, Blt | Bge) && !out.contains(&"bgt") && !out.contains(&"ble") {
        out.push(if i.kind == Blt { "bgt" } else { "ble" });
    }
    out
}

/// Whether a printed mnemonic is a faithful rendering of the decoded word.
pub fn mnemonic_matches(i: &Instr, mnemonic: &str) -> bool {
    i.kind.mnemonic() == mnemonic || aliases(i).contains(&mnemonic)
}

#[cfg(test)]
mod tests {
    use super::super::decode;
    use super::*;

    #[test]
    fn objdump_aliases() {
        let cases = [
            (0x00008067, "ret"),
            (0x00150513, "addi"),
            (0x00000013, "nop"),
            (0x00a00593, "li"),
            (0x00058513, "mv"),
            (0x0005051b, "sext.w"),
            (0xfff54513, "not"),
            (0x40a00533, "neg"),
            (0x00153513, "seqz"),
            (0x00a03533, "snez"),
            (0x00050463, "beqz"),
            (0x0000006f, "j"),
            (0xf14022f3, "csrr"),
            (0x34029073, "csrw"),
        ];
        for (w, m) in cases {
            let i = decode(w).unwrap();
            assert!(
                mnemonic_matches(&i, m),
                "{w:#x} should print as {m}, got {i}"
            );
        }
        assert!(!mnemonic_matches(&decode(0x00150513).unwrap(), "sub"));
        assert!(!mnemonic_matches(&decode(0x00150513).unwrap(), "mv"));
    }
}
