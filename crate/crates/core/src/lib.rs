//! Lifting of RV64 disassembly to a block-structured IR, forward symbolic
//! execution, and SMT-backed contract checking.

pub mod bir;
pub mod contracts;
pub mod corpus;
pub mod disasm;
pub mod isa;
pub mod lifter;
pub mod smt;
pub mod symbolic;
