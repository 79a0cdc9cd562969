//! Parsing of GNU `objdump -d` listings for RV64 and selection of the code
//! range to analyze.
//!
//! Only the hex word of each line drives later stages; the printed mnemonic
//! and operands are kept verbatim for reporting and cross-checking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DisasmError {
    #[error("line {0}: malformed instruction line")]
    MalformedLine(usize),
    #[error("line {line}: compressed instruction {word} is not supported")]
    UnsupportedCompressed { line: usize, word: String },
    #[error("line {line}: duplicate address {addr:#x}")]
    DuplicateAddress { line: usize, addr: u64 },
    #[error("line {line}: address {addr:#x} does not follow the previous instruction")]
    AddressGap { line: usize, addr: u64 },
    #[error("entry address {0:#x} not found")]
    EntryNotFound(u64),
    #[error("end address {end:#x} lies before entry {entry:#x}")]
    EndBeforeEntry { entry: u64, end: u64 },
    #[error("end address {0:#x} is not inside or directly after the selected code")]
    EndOutOfRange(u64),
    #[error("no end addresses given")]
    NoEnds,
}

/// One instruction line of a listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RawInstr {
    pub address: u64,
    pub word: u32,
    pub mnemonic: String,
    pub operand_text: String,
    pub source_line: String,
}

impl RawInstr {
    /// Builds a record whose `source_line` is the canonical objdump rendering.
    pub fn new(address: u64, word: u32, mnemonic: &str, operand_text: &str) -> RawInstr {
        let mut line = format!("{address:8x}:\t{word:08x}          \t{mnemonic}");
        if !operand_text.is_empty() {
            line.push('\t');
            line.push_str(operand_text);
        }
        RawInstr {
            address,
            word,
            mnemonic: mnemonic.to_string(),
            operand_text: operand_text.to_string(),
            source_line: line,
        }
    }

    /// `"00150513 (addi a0,a0,1)"`
    pub fn describe(&self) -> String {
        if self.operand_text.is_empty() {
            format!("{:08x} ({})", self.word, self.mnemonic)
        } else {
            format!(
                "{:08x} ({} {})",
                self.word, self.mnemonic, self.operand_text
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Section {
    pub name: String,
    pub instrs: Vec<RawInstr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DisassemblyUnit {
    /// Name from the `file format` header line, if any.
    pub file: Option<String>,
    pub sections: Vec<Section>,
    pub symbols: BTreeMap<String, u64>,
}

impl DisassemblyUnit {
    pub fn instrs(&self) -> impl Iterator<Item = &RawInstr> {
        self.sections.iter().flat_map(|s| s.instrs.iter())
    }
}

/// A contiguous run of instructions plus the addresses where analysis stops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgramSlice {
    pub instrs: Vec<RawInstr>,
    pub entry: u64,
    pub end_addrs: BTreeSet<u64>,
}

fn is_hex(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_hexdigit())
}

fn parse_instr_line(line: &str, line_no: usize) -> Result<RawInstr, DisasmError> {
    let malformed = || DisasmError::MalformedLine(line_no);
    let (addr_text, rest) = line.trim_start().split_once(':').ok_or_else(malformed)?;
    let address = u64::from_str_radix(addr_text, 16).map_err(|_| malformed())?;

    let rest = rest.trim_start();
    let word_end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len());
    let word_text = &rest[..word_end];
    if !is_hex(word_text) {
        return Err(malformed());
    }
    match word_text.len() {
        8 => {}
        4 => {
            return Err(DisasmError::UnsupportedCompressed {
                line: line_no,
                word: word_text.to_string(),
            })
        }
        _ => return Err(malformed()),
    }
    let word = u32::from_str_radix(word_text, 16).map_err(|_| malformed())?;

    let rest = rest[word_end..].trim();
    let (mnemonic, operands) = match rest.find(char::is_whitespace) {
        Some(i) => (&rest[..i], rest[i..].trim()),
        None => (rest, ""),
    };
    if mnemonic.is_empty() {
        return Err(malformed());
    }
    Ok(RawInstr {
        address,
        word,
        mnemonic: mnemonic.to_string(),
        operand_text: operands.to_string(),
        source_line: line.to_string(),
    })
}

/// Parses `objdump -d` text.
///
/// Instruction lines (`<hexaddr>: <hexword> <mnemonic> <operands>`) must be
/// contiguous 4-byte steps within a section. Header, symbol, blank and
/// `...` lines are recognised; anything else is ignored.
pub fn parse_objdump(text: &str) -> Result<DisassemblyUnit, DisasmError> {
    let mut unit = DisassemblyUnit::default();
    let mut seen = BTreeSet::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "..." {
            continue;
        }
        if let Some(name) = trimmed
            .strip_prefix("Disassembly of section ")
            .and_then(|s| s.strip_suffix(':'))
        {
            unit.sections.push(Section {
                name: name.to_string(),
                instrs: Vec::new(),
            });
            continue;
        }
        if let Some((file, _)) = trimmed.split_once(":     file format") {
            unit.file = Some(file.trim().to_string());
            continue;
        }
        // symbol line: `0000000000010488 <incr>:`
        if let Some((addr, rest)) = trimmed.split_once(' ') {
            if is_hex(addr) && rest.starts_with('<') && rest.ends_with(">:") {
                let value = u64::from_str_radix(addr, 16)
                    .map_err(|_| DisasmError::MalformedLine(line_no))?;
                unit.symbols
                    .insert(rest[1..rest.len() - 2].to_string(), value);
                continue;
            }
        }
        let looks_like_instr = trimmed.split_once(':').is_some_and(|(a, _)| is_hex(a));
        if !looks_like_instr {
            continue;
        }

        let instr = parse_instr_line(line, line_no)?;
        if !seen.insert(instr.address) {
            return Err(DisasmError::DuplicateAddress {
                line: line_no,
                addr: instr.address,
            });
        }
        if unit.sections.is_empty() {
            unit.sections.push(Section::default());
        }
        let section = unit.sections.last_mut().expect("section exists");
        if let Some(prev) = section.instrs.last() {
            if instr.address != prev.address.wrapping_add(4) {
                return Err(DisasmError::AddressGap {
                    line: line_no,
                    addr: instr.address,
                });
            }
        }
        section.instrs.push(instr);
    }
    Ok(unit)
}

/// Renders a unit in objdump format. Symbols are printed before the
/// instruction at their address; `parse_objdump` inverts this.
pub fn print_objdump(unit: &DisassemblyUnit) -> String {
    let mut by_addr: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    for (name, &addr) in &unit.symbols {
        by_addr.entry(addr).or_default().push(name);
    }
    let mut out = String::new();
    if let Some(file) = &unit.file {
        let _ = writeln!(out, "\n{file}:     file format elf64-littleriscv\n");
    }
    for section in &unit.sections {
        let _ = writeln!(out, "\nDisassembly of section {}:", section.name);
        for instr in &section.instrs {
            for name in by_addr.get(&instr.address).into_iter().flatten() {
                let _ = writeln!(out, "\n{:016x} <{name}>:", instr.address);
            }
            let _ = writeln!(out, "{}", instr.source_line);
        }
    }
    out
}

/// Selects the instructions from `entry` up to (excluding) the largest end
/// address.
pub fn slice(
    unit: &DisassemblyUnit,
    entry: u64,
    ends: &BTreeSet<u64>,
) -> Result<ProgramSlice, DisasmError> {
    let last_end = *ends.iter().next_back().ok_or(DisasmError::NoEnds)?;
    if let Some(&end) = ends.iter().find(|&&e| e < entry) {
        return Err(DisasmError::EndBeforeEntry { entry, end });
    }
    let section = unit
        .sections
        .iter()
        .find(|s| s.instrs.iter().any(|i| i.address == entry))
        .ok_or(DisasmError::EntryNotFound(entry))?;

    let instrs: Vec<RawInstr> = section
        .instrs
        .iter()
        .filter(|i| i.address >= entry && i.address < last_end)
        .cloned()
        .collect();
    let covered_until = entry + 4 * instrs.len() as u64;
    if covered_until != last_end {
        return Err(DisasmError::EndOutOfRange(last_end));
    }
    if let Some(&bad) = ends.iter().find(|&&e| e % 4 != entry % 4) {
        return Err(DisasmError::EndOutOfRange(bad));
    }
    Ok(ProgramSlice {
        instrs,
        entry,
        end_addrs: ends.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{decode, mnemonic_matches};

    pub(crate) const INCR: &str = "
incr:     file format elf64-littleriscv
Disassembly of section .text:
0000000000010488 <incr>:
   10488:\t00150513          \taddi\ta0,a0,1
   1048c:\t00008067          \tret
";

    #[test]
    fn parses_incr_listing() {
        let unit = parse_objdump(INCR).unwrap();
        assert_eq!(unit.file.as_deref(), Some("incr"));
        assert_eq!(unit.sections.len(), 1);
        assert_eq!(unit.sections[0].name, ".text");
        assert_eq!(unit.symbols.get("incr"), Some(&0x10488));
        let i = &unit.sections[0].instrs;
        assert_eq!(i.len(), 2);
        assert_eq!(
            (
                i[0].address,
                i[0].word,
                i[0].mnemonic.as_str(),
                i[0].operand_text.as_str()
            ),
            (0x10488, 0x00150513, "addi", "a0,a0,1")
        );
        assert_eq!(
            (
                i[1].address,
                i[1].word,
                i[1].mnemonic.as_str(),
                i[1].operand_text.as_str()
            ),
            (0x1048c, 0x00008067, "ret", "")
        );
        assert_eq!(i[0].describe(), "00150513 (addi a0,a0,1)");
        for raw in unit.instrs() {
            assert!(mnemonic_matches(&decode(raw.word).unwrap(), &raw.mnemonic));
        }
    }

    #[test]
    fn header_only_gives_empty_sections() {
        let unit = parse_objdump(
            "\nfoo:     file format elf64-littleriscv\n\nDisassembly of section .text:\n",
        )
        .unwrap();
        assert!(unit.instrs().next().is_none());
    }

    #[test]
    fn rejects_bad_lines() {
        let bad = "Disassembly of section .text:\n   10488:\t0015z513  \taddi\ta0,a0,1\n";
        assert_eq!(parse_objdump(bad), Err(DisasmError::MalformedLine(2)));
        let compressed = "   10488:\t0505          \taddi\ta0,a0,1\n";
        assert!(matches!(
            parse_objdump(compressed),
            Err(DisasmError::UnsupportedCompressed { line: 1, .. })
        ));
        let dup = format!("{INCR}   10488:\t00150513          \taddi\ta0,a0,1\n");
        assert!(matches!(
            parse_objdump(&dup),
            Err(DisasmError::DuplicateAddress { addr: 0x10488, .. })
        ));
    }

    #[test]
    fn slices_incr() {
        let unit = parse_objdump(INCR).unwrap();
        let s = slice(&unit, 0x10488, &BTreeSet::from([0x1048c])).unwrap();
        assert_eq!(s.instrs.len(), 1);
        assert_eq!(s.instrs[0].mnemonic, "addi");
        assert_eq!(s.entry, 0x10488);
        let s = slice(&unit, 0x10488, &BTreeSet::from([0x10490])).unwrap();
        assert_eq!(s.instrs.len(), 2);
        assert_eq!(
            slice(&unit, 0x10400, &BTreeSet::from([0x1048c])),
            Err(DisasmError::EntryNotFound(0x10400))
        );
        assert!(matches!(
            slice(&unit, 0x1048c, &BTreeSet::from([0x10488])),
            Err(DisasmError::EndBeforeEntry { .. })
        ));
        assert_eq!(
            slice(&unit, 0x10488, &BTreeSet::from([0x10498])),
            Err(DisasmError::EndOutOfRange(0x10498))
        );
    }

    #[test]
    fn slices_middle_of_synthetic_listing() {
        let mut unit = DisassemblyUnit::default();
        let instrs: Vec<RawInstr> = (0..10u64)
            .map(|k| RawInstr::new(0x1000 + 4 * k, 0x00000013, "nop", ""))
            .collect();
        unit.sections.push(Section {
            name: ".text".into(),
            instrs,
        });
        let s = slice(&unit, 0x1010, &BTreeSet::from([0x1018])).unwrap();
        let addrs: Vec<u64> = s.instrs.iter().map(|i| i.address).collect();
        assert_eq!(addrs, vec![0x1010, 0x1014]);
    }
}
