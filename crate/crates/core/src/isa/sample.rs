//! Random instructions and machine states for differential testing.

use rand::Rng;

use super::{Csr, Format, Instr, Kind, MachineState, Reg};

/// A 64-bit value biased toward the corner cases arithmetic gets wrong.
pub fn word<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    const SPECIAL: [u64; 10] = [
        0,
        1,
        u64::MAX,
        i64::MIN as u64,
        i64::MAX as u64,
        0x7fff_ffff,
        0x8000_0000,
        0xffff_ffff,
        0xffff_ffff_8000_0000,
        63,
    ];
    match rng.gen_range(0..10) {
        0..=1 => rng.gen_range(0..16),
        2..=3 => rng.gen_range(0..256),
        4 => SPECIAL[rng.gen_range(0..SPECIAL.len())],
        5 => rng.gen::<u32>() as i32 as i64 as u64,
        _ => rng.gen(),
    }
}

fn reg<R: Rng + ?Sized>(rng: &mut R) -> Reg {
    Reg::from_bits(rng.gen_range(0..32))
}

fn imm12<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(-8..8),
        1 => [-2048, 2047, -1, 0, 1][rng.gen_range(0..5)],
        _ => rng.gen_range(-2048..2048),
    }
}

/// A random, well-formed instruction of the given kind.
pub fn instr<R: Rng + ?Sized>(kind: Kind, rng: &mut R) -> Instr {
    let (rd, rs1, rs2) = (reg(rng), reg(rng), reg(rng));
    match kind.format() {
        Format::R => Instr::r(kind, rd, rs1, rs2),
        Format::I | Format::Load => Instr::i(kind, rd, rs1, imm12(rng)),
        Format::Shift => Instr::i(kind, rd, rs1, rng.gen_range(0..64)),
        Format::ShiftW => Instr::i(kind, rd, rs1, rng.gen_range(0..32)),
        Format::S => Instr::s(kind, rs1, rs2, imm12(rng)),
        Format::B => Instr::s(kind, rs1, rs2, rng.gen_range(-2048i64..2048) * 2),
        Format::U => Instr::u(kind, rd, (rng.gen::<u32>() & 0xffff_f000) as i32 as i64),
        Format::J => Instr::u(kind, rd, rng.gen_range(-(1i64 << 19)..(1 << 19)) * 2),
        Format::Csr => Instr::csr(kind, rd, Csr::ALL[rng.gen_range(0..5)], rs1),
    }
}

/// A random state at `pc` for executing `i`. Memory around the effective
/// address of loads and stores is populated so loads see nonzero bytes.
/// Branch operands are made equal some of the time to cover both outcomes.
pub fn machine_state<R: Rng + ?Sized>(i: &Instr, pc: u64, rng: &mut R) -> MachineState {
    let mut s = MachineState::new(pc);
    for r in 1..32 {
        s.set_gpr(Reg::from_bits(r), word(rng));
    }
    for c in Csr::ALL {
        s.set_csr(c, word(rng));
    }
    if i.kind.format() == Format::B && rng.gen_bool(0.3) {
        s.set_gpr(i.rs2, s.gpr(i.rs1));
    }
    if matches!(i.kind.format(), Format::Load | Format::S) {
        let ea = s.gpr(i.rs1).wrapping_add(i.imm as u64);
        fill_random(&mut s, ea.wrapping_sub(8), 24, rng);
    }
    s
}

/// Writes `len` random bytes starting at `base`.
pub fn fill_random<R: Rng + ?Sized>(s: &mut MachineState, base: u64, len: u64, rng: &mut R) {
    for k in 0..len {
        s.mem.insert(base.wrapping_add(k), rng.gen());
    }
}
