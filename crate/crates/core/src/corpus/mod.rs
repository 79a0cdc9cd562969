//! Case-study fixtures and executable reference models.
//!
//! Each fixture lives in `corpus/<name>/` next to this crate's manifest:
//! `<name>.dis` is the objdump-style listing, `<name>.contract` the contract
//! and `<name>.s`, when present, the assembly source the listing was
//! produced from (`tools/asm2objdump.py`). The `incr` listing is the
//! two-instruction body; `incr_o1` is a four-instruction variant that
//! increments through a pointer and is lifted through its `ret`.

pub mod chacha;

use std::fmt::Write;

use thiserror::Error;

use crate::contracts::{prepare, PrepareError, Prepared, RiscvContract};
use crate::isa::{Instr, Kind, Reg};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("unknown fixture {0}")]
    UnknownFixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub listing: &'static str,
    pub contract: &'static str,
    pub source: Option<&'static str>,
}

macro_rules! fixture {
    ($name:literal, source) => {
        Fixture {
            name: $name,
            listing: include_str!(concat!("../../corpus/", $name, "/", $name, ".dis")),
            contract: include_str!(concat!("../../corpus/", $name, "/", $name, ".contract")),
            source: Some(include_str!(concat!(
                "../../corpus/",
                $name,
                "/",
                $name,
                ".s"
            ))),
        }
    };
    ($name:literal) => {
        Fixture {
            name: $name,
            listing: include_str!(concat!("../../corpus/", $name, "/", $name, ".dis")),
            contract: include_str!(concat!("../../corpus/", $name, "/", $name, ".contract")),
            source: None,
        }
    };
}

const FIXTURES: [Fixture; 8] = [
    fixture!("incr"),
    fixture!("incr_o1", source),
    fixture!("mod2", source),
    fixture!("swap", source),
    fixture!("isqrt", source),
    fixture!("motor", source),
    fixture!("chacha_qr", source),
    fixture!("trap_entry_mini", source),
];

/// Fixture names in corpus order.
pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|f| f.name)
}

pub fn fixture(name: &str) -> Result<Fixture, CorpusError> {
    FIXTURES
        .iter()
        .find(|f| f.name == name)
        .copied()
        .ok_or_else(|| CorpusError::UnknownFixture(name.to_string()))
}

impl Fixture {
    pub fn riscv_contract(&self) -> RiscvContract {
        RiscvContract::parse(self.contract).expect("corpus contracts parse")
    }

    pub fn prepare(&self) -> Result<Prepared, PrepareError> {
        prepare(self.listing, &self.riscv_contract())
    }

    /// Instructions in the listing, including any not lifted.
    pub fn listing_instrs(&self) -> usize {
        crate::disasm::parse_objdump(self.listing)
            .map(|u| u.instrs().count())
            .unwrap_or(0)
    }
}

/// A synthetic straight-line fixture of `n` (at most 255) steps, each
/// adding `a2` to `a1` and storing the running sum to the next slot at `a0`.
/// Every stored value repeats the previous sum, so the symbolic memory grows
/// quadratically in `n` when nothing is abbreviated.
pub fn storechain(n: usize) -> (String, RiscvContract) {
    assert!(
        (1..256).contains(&n),
        "store offsets must fit a 12-bit immediate"
    );
    let entry = 0x30000u64;
    let reg = |i| Reg::new(i).expect("register index");
    let (a0, a1, a2) = (reg(10), reg(11), reg(12));
    let mut text = format!("\nstorechain_{n}:     file format elf64-littleriscv\n\n\nDisassembly of section .text:\n\n");
    let _ = writeln!(text, "{entry:016x} <storechain_{n}>:");
    let mut addr = entry;
    let mut line = |i: Instr, mn: &str, ops: String| {
        let _ = writeln!(
            text,
            "{addr:8x}:\t{:08x}          \t{mn}\t{ops}",
            i.encode()
        );
        addr += 4;
    };
    for k in 0..n {
        line(Instr::r(Kind::Add, a1, a1, a2), "add", "a1,a1,a2".into());
        line(
            Instr::s(Kind::Sd, a0, a1, 8 * k as i64),
            "sd",
            format!("a1,{}(a0)", 8 * k),
        );
    }
    line(
        Instr::i(Kind::Jalr, reg(0), reg(1), 0),
        "ret",
        String::new(),
    );
    let end = entry + 8 * n as u64;
    let contract = format!(
        "name storechain_{n}\nentry {entry:#x}\nparam pre_p pre_v pre_d\npre x10 = pre_p /\\ x11 = pre_v /\\ x12 = pre_d\npost {end:#x}: mem64[pre_p + {}] = pre_v + {n} * pre_d\n",
        8 * (n - 1)
    );
    (
        text,
        RiscvContract::parse(&contract).expect("generated contract parses"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{decode, mnemonic_matches};

    #[test]
    fn every_fixture_prepares_and_words_match_mnemonics() {
        for name in names() {
            let f = fixture(name).unwrap();
            let unit = crate::disasm::parse_objdump(f.listing).unwrap();
            for raw in unit.instrs() {
                let i =
                    decode(raw.word).unwrap_or_else(|e| panic!("{name} {:#x}: {e}", raw.address));
                assert!(
                    mnemonic_matches(&i, &raw.mnemonic),
                    "{name} {:#x}: {} vs {i}",
                    raw.address,
                    raw.mnemonic
                );
            }
            let p = f.prepare().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!p.program().is_empty());
            assert_eq!(
                RiscvContract::parse(&f.riscv_contract().to_string()).unwrap(),
                f.riscv_contract()
            );
        }
        assert_eq!(
            fixture("aes"),
            Err(CorpusError::UnknownFixture("aes".into()))
        );
    }

    #[test]
    fn incr_is_the_two_line_listing() {
        let f = fixture("incr").unwrap();
        let unit = crate::disasm::parse_objdump(f.listing).unwrap();
        let words: Vec<(u64, u32)> = unit.instrs().map(|r| (r.address, r.word)).collect();
        assert_eq!(words, vec![(0x10488, 0x0015_0513), (0x1048c, 0x0000_8067)]);
        assert_eq!(fixture("incr_o1").unwrap().listing_instrs(), 4);
        assert_eq!(fixture("mod2").unwrap().listing_instrs(), 4);
        assert_eq!(fixture("swap").unwrap().listing_instrs(), 9);
    }

    #[test]
    fn motor_is_about_120_instructions_and_branches() {
        let f = fixture("motor").unwrap();
        let n = f.listing_instrs();
        assert!((115..=130).contains(&n), "{n}");
        let branches = crate::disasm::parse_objdump(f.listing)
            .unwrap()
            .instrs()
            .filter(|r| r.mnemonic.starts_with('b'))
            .count();
        assert!(branches >= 8);
    }

    #[test]
    fn chacha_contract_file_is_the_generated_reference() {
        let f = fixture("chacha_qr").unwrap();
        let generated = chacha::quarter_round_contract(0x12000, 0x12050);
        if std::env::var_os("RVBIR_BLESS").is_some() {
            let path = concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/corpus/chacha_qr/chacha_qr.contract"
            );
            let text = format!("# generated from the quarter-round reference; regenerate with RVBIR_BLESS=1\n{generated}");
            std::fs::write(path, text).unwrap();
            return;
        }
        assert_eq!(f.riscv_contract(), generated);
    }

    #[test]
    fn trap_entry_saves_through_csrrw() {
        let f = fixture("trap_entry_mini").unwrap();
        let unit = crate::disasm::parse_objdump(f.listing).unwrap();
        let first = unit.instrs().next().unwrap();
        assert_eq!(decode(first.word).unwrap().kind, Kind::Csrrw);
        let rc = f.riscv_contract();
        let post = rc.post.values().next().unwrap().to_string();
        assert!(
            post.contains("mem64[pre_mscratch + 0x10] = pre_x1"),
            "{post}"
        );
    }

    #[test]
    fn storechain_listings_prepare() {
        for n in [1, 8, 16] {
            let (text, rc) = storechain(n);
            let p = prepare(&text, &rc).unwrap();
            assert_eq!(p.program().blocks().len(), 2 * n);
        }
    }
}
