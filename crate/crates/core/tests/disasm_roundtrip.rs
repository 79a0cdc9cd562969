//! Printing and parsing objdump listings are inverse on generated units.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rvbir::disasm::{parse_objdump, print_objdump, DisassemblyUnit, RawInstr, Section};
use rvbir::isa::{decode, mnemonic_matches, sample, Kind};

fn generated_unit(rng: &mut StdRng, k: usize) -> DisassemblyUnit {
    let mut unit = DisassemblyUnit {
        file: rng.gen_bool(0.8).then(|| format!("prog{k}.elf")),
        sections: Vec::new(),
        symbols: BTreeMap::new(),
    };
    let mut addr = rng.gen_range(0x1000u64..0x8000_0000) & !3;
    for s in 0..rng.gen_range(1..=3) {
        let mut section = Section {
            name: if s == 0 {
                ".text".into()
            } else {
                format!(".text.part{s}")
            },
            instrs: Vec::new(),
        };
        let count = rng.gen_range(1..=40);
        for n in 0..count {
            if n == 0 || rng.gen_bool(0.1) {
                unit.symbols.insert(format!("f{k}_{s}_{n}"), addr);
            }
            let kind = Kind::ALL[rng.gen_range(0..Kind::ALL.len())];
            let i = sample::instr(kind, rng);
            let text = i.to_string();
            let (mn, ops) = text.split_once(' ').unwrap_or((&text, ""));
            section
                .instrs
                .push(RawInstr::new(addr, i.encode(), mn, ops));
            addr += 4;
        }
        addr += rng.gen_range(0..64) * 4;
        unit.sections.push(section);
    }
    unit
}

#[test]
fn print_then_parse_is_identity_on_100_listings() {
    let mut rng = StdRng::seed_from_u64(0x0b1d);
    for k in 0..100 {
        let unit = generated_unit(&mut rng, k);
        let text = print_objdump(&unit);
        let back = parse_objdump(&text).unwrap_or_else(|e| panic!("listing {k}: {e}\n{text}"));
        assert_eq!(back, unit, "listing {k}");
        assert_eq!(print_objdump(&back), text, "listing {k}");
        for raw in back.instrs() {
            let i = decode(raw.word).unwrap();
            assert!(mnemonic_matches(&i, &raw.mnemonic), "{}", raw.describe());
        }
    }
}
