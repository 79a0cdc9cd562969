//! ISA-level and BIR-level contracts.
//!
//! A contract file names an entry address, parameters, a precondition and
//! one postcondition per endpoint, all in the restricted predicate language
//! of [`lang`]. Translation to BIR is mechanical; the result is verified by
//! symbolic execution and lifted back into an ISA-level report whose
//! evidence lists the per-instruction simulation checks and the
//! translation checks it relies on.
//!
//! ```text
//! # comment
//! name      incr
//! entry     0x10488
//! extent    0x10490            optional end of the lifted range
//! param     pre_x10            one or more names
//! pre       x10 = pre_x10      repeated lines are conjoined
//! post      0x1048c: x10 = pre_x10 + 1
//! forbidden 0x10400            optional, repeatable
//! unroll    0                  optional loop bound
//! ```

pub mod evidence;
pub mod lang;
pub mod sample;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::bir::{BirEnv, Exp, Interp, Program, Symbol, Valuation, Value, Var};
use crate::disasm::{parse_objdump, slice, DisasmError, DisassemblyUnit, ProgramSlice};
use crate::lifter::{lift_slice, mnemonic_mismatches, LiftError, LiftMap};
use crate::symbolic::reserved_symbol_name;

pub use evidence::{
    backlift, check_lift_map, check_translation, report, Evidence, EvidenceKind, ReportStatus,
    RiscvReport, TranslationCheck,
};
pub use lang::{param_symbol, parse_predicate, ParamValues, RiscvPredicate};
pub use verify::{
    corroborate, counterexample_summary, model_machine_state, model_params, replay_bir, replay_isa,
    soundness_sample, verify, ContractVerdict, Corroboration, LeafOutcome, LeafStatus, Replay,
    SoundnessReport, VerificationResult, VerifyError, VerifyOptions,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown name {name}")]
    UnknownName { line: usize, name: String },
    #[error("line {line}: unknown directive {word}")]
    UnknownDirective { line: usize, word: String },
    #[error("line {line}: duplicate {what}")]
    Duplicate { line: usize, what: String },
    #[error("line {line}: parameter name {name} is reserved")]
    ReservedParam { line: usize, name: String },
    #[error("missing {0} directive")]
    Missing(&'static str),
    #[error("evidence missing: {0}")]
    EvidenceMissing(String),
}

/// An ISA-level contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RiscvContract {
    pub name: String,
    pub entry: u64,
    /// End of the lifted address range; without it the range ends at the
    /// largest endpoint.
    pub extent: Option<u64>,
    pub params: Vec<String>,
    pub pre: RiscvPredicate,
    /// Postcondition per endpoint.
    pub post: BTreeMap<u64, RiscvPredicate>,
    pub forbidden: BTreeSet<u64>,
    pub unroll: Option<u32>,
}

fn parse_num(text: &str, line: usize) -> Result<u64, ContractError> {
    let t = text.trim();
    match t.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    }
    .map_err(|_| ContractError::Syntax {
        line,
        msg: format!("bad number {t:?}"),
    })
}

impl RiscvContract {
    pub fn endpoints(&self) -> BTreeSet<u64> {
        self.post.keys().copied().collect()
    }

    /// Addresses where the lifted slice ends: the endpoints plus the extent.
    pub fn slice_ends(&self) -> BTreeSet<u64> {
        let mut ends = self.endpoints();
        ends.extend(self.extent);
        ends
    }

    pub fn parse(text: &str) -> Result<RiscvContract, ContractError> {
        let mut lines = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (word, rest) = content
                .split_once(char::is_whitespace)
                .map(|(w, r)| (w, r.trim()))
                .unwrap_or((content, ""));
            lines.push((k + 1, word, rest));
        }

        let mut params = Vec::new();
        for &(line, word, rest) in &lines {
            if word == "param" {
                for name in rest.split([' ', '\t', ',']).filter(|s| !s.is_empty()) {
                    let valid = name
                        .chars()
                        .next()
                        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                    if !valid || name == "true" || name == "mem64" {
                        return Err(ContractError::Syntax {
                            line,
                            msg: format!("bad parameter name {name:?}"),
                        });
                    }
                    if reserved_symbol_name(name) {
                        return Err(ContractError::ReservedParam {
                            line,
                            name: name.to_string(),
                        });
                    }
                    if params.iter().any(|p| p == name) {
                        return Err(ContractError::Duplicate {
                            line,
                            what: format!("parameter {name}"),
                        });
                    }
                    params.push(name.to_string());
                }
            }
        }
        let known: BTreeSet<String> = params.iter().cloned().collect();

        let mut name = None;
        let mut entry = None;
        let mut extent = None;
        let mut unroll = None;
        let mut pre = RiscvPredicate::default();
        let mut post: BTreeMap<u64, RiscvPredicate> = BTreeMap::new();
        let mut forbidden = BTreeSet::new();
        let once = |slot: bool, line: usize, what: &str| {
            if slot {
                Err(ContractError::Duplicate {
                    line,
                    what: what.to_string(),
                })
            } else {
                Ok(())
            }
        };
        for (line, word, rest) in lines {
            match word {
                "name" => {
                    once(name.is_some(), line, "name")?;
                    name = Some(rest.to_string());
                }
                "entry" => {
                    once(entry.is_some(), line, "entry")?;
                    entry = Some(parse_num(rest, line)?);
                }
                "extent" => {
                    once(extent.is_some(), line, "extent")?;
                    extent = Some(parse_num(rest, line)?);
                }
                "unroll" => {
                    once(unroll.is_some(), line, "unroll")?;
                    let n = parse_num(rest, line)?;
                    unroll = Some(u32::try_from(n).map_err(|_| ContractError::Syntax {
                        line,
                        msg: "unroll bound too large".into(),
                    })?);
                }
                "param" => {}
                "pre" => {
                    let p = lang::parse_predicate(rest, &known, line)?;
                    pre.atoms.extend(p.atoms);
                }
                "post" => {
                    let (addr, pred) =
                        rest.split_once(':').ok_or_else(|| ContractError::Syntax {
                            line,
                            msg: "expected post ADDRESS: PREDICATE".into(),
                        })?;
                    let addr = parse_num(addr, line)?;
                    let p = lang::parse_predicate(pred, &known, line)?;
                    post.entry(addr).or_default().atoms.extend(p.atoms);
                }
                "forbidden" => {
                    for a in rest.split_whitespace() {
                        forbidden.insert(parse_num(a, line)?);
                    }
                }
                other => {
                    return Err(ContractError::UnknownDirective {
                        line,
                        word: other.to_string(),
                    })
                }
            }
        }
        if post.is_empty() {
            return Err(ContractError::Missing("post"));
        }
        Ok(RiscvContract {
            name: name.ok_or(ContractError::Missing("name"))?,
            entry: entry.ok_or(ContractError::Missing("entry"))?,
            extent,
            params,
            pre,
            post,
            forbidden,
            unroll,
        })
    }
}

impl fmt::Display for RiscvContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name {}", self.name)?;
        writeln!(f, "entry {:#x}", self.entry)?;
        if let Some(e) = self.extent {
            writeln!(f, "extent {e:#x}")?;
        }
        if !self.params.is_empty() {
            writeln!(f, "param {}", self.params.join(" "))?;
        }
        writeln!(f, "pre {}", self.pre)?;
        for (addr, p) in &self.post {
            writeln!(f, "post {addr:#x}: {p}")?;
        }
        for a in &self.forbidden {
            writeln!(f, "forbidden {a:#x}")?;
        }
        if let Some(u) = self.unroll {
            writeln!(f, "unroll {u}")?;
        }
        Ok(())
    }
}

/// A contract on a BIR program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BirContract {
    pub program: Program,
    /// Carried for completeness; only `true` is supported.
    pub invariant: Exp,
    pub entry: u64,
    pub endpoints: BTreeSet<u64>,
    pub forbidden: BTreeSet<u64>,
    pub pre: Exp,
    pub post: BTreeMap<u64, Exp>,
    pub params: Vec<Symbol>,
}

impl BirContract {
    /// Postcondition at a label; false away from the endpoints.
    pub fn post_at(&self, label: u64) -> Exp {
        self.post.get(&label).cloned().unwrap_or_else(Exp::ff)
    }

    /// Variables mentioned by the pre- and postconditions.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = self.pre.vars();
        for p in self.post.values() {
            out.extend(p.vars());
        }
        out
    }
}

/// Translates an ISA-level contract over the lifted `program`.
pub fn translate_contract(rc: &RiscvContract, program: Program) -> BirContract {
    BirContract {
        program,
        invariant: Exp::tt(),
        entry: rc.entry,
        endpoints: rc.endpoints(),
        forbidden: rc.forbidden.clone(),
        pre: rc.pre.translate(),
        post: rc.post.iter().map(|(a, p)| (*a, p.translate())).collect(),
        params: rc.params.iter().map(|p| param_symbol(p)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Disasm(#[from] DisasmError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error("at {0:#x}: the listed mnemonic does not match the instruction word")]
    MnemonicMismatch(u64),
}

/// A listing sliced, lifted and paired with its translated contract.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub unit: DisassemblyUnit,
    pub slice: ProgramSlice,
    pub lift_map: LiftMap,
    pub bir: BirContract,
}

impl Prepared {
    pub fn program(&self) -> &Program {
        &self.bir.program
    }
}

pub fn prepare(listing: &str, rc: &RiscvContract) -> Result<Prepared, PrepareError> {
    let unit = parse_objdump(listing)?;
    // The extent, when given, bounds the lifted range; endpoints past it
    // (a caller's return address, say) are exits of the program.
    let range = match rc.extent {
        Some(e) => BTreeSet::from([e]),
        None => rc.endpoints(),
    };
    let mut sl = slice(&unit, rc.entry, &range)?;
    sl.end_addrs = rc.slice_ends();
    if let Some(&addr) = mnemonic_mismatches(&sl.instrs).first() {
        return Err(PrepareError::MnemonicMismatch(addr));
    }
    let (program, lift_map) = lift_slice(&sl)?;
    let bir = translate_contract(rc, program);
    Ok(Prepared {
        unit,
        slice: sl,
        lift_map,
        bir,
    })
}

/// Program variables from an environment, symbols from an interpretation.
pub struct StateView<'a> {
    pub env: &'a BirEnv,
    pub syms: &'a Interp,
}

impl Valuation for StateView<'_> {
    fn var(&self, v: &Var) -> Option<Value> {
        self.env.get(v).cloned()
    }
    fn sym(&self, s: &Symbol) -> Option<Value> {
        self.syms.get(s).cloned()
    }
}

/// Parameter values as an interpretation of their symbols.
pub fn params_interp(values: &ParamValues) -> Interp {
    let mut h = Interp::default();
    for (k, v) in values {
        h.set(&param_symbol(k), Value::Word(crate::bir::Word::new(64, *v)));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bir::BirType;

    const INCR: &str = "
# the running example
name incr
entry 0x10488
param pre_x10
pre x10 = pre_x10
post 0x1048c: x10 = pre_x10 + 1
";

    #[test]
    fn parses_and_prints() {
        let c = RiscvContract::parse(INCR).unwrap();
        assert_eq!(c.name, "incr");
        assert_eq!(c.entry, 0x10488);
        assert_eq!(c.endpoints(), BTreeSet::from([0x1048c]));
        assert_eq!(c.params, vec!["pre_x10".to_string()]);
        assert_eq!(RiscvContract::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn translation_matches_the_bir_contract_shape() {
        let c = RiscvContract::parse(INCR).unwrap();
        let b = translate_contract(&c, Program::default());
        let x10 = Exp::den(&Var::new("x10", BirType::Imm64));
        let p = Exp::sym(&param_symbol("pre_x10"));
        assert_eq!(b.pre, Exp::eq(x10.clone(), p.clone()));
        assert_eq!(b.post_at(0x1048c), Exp::eq(x10, Exp::plus(p, Exp::c64(1))));
        assert_eq!(b.post_at(0x10490), Exp::ff());
        assert_eq!(b.invariant, Exp::tt());
        assert!(b.forbidden.is_empty());
    }

    #[test]
    fn rejects_bad_files() {
        let err = |t: &str| RiscvContract::parse(t).unwrap_err();
        assert_eq!(err("name a\nentry 0\n"), ContractError::Missing("post"));
        assert!(matches!(
            err("name a\nbogus 1\npost 4: true"),
            ContractError::UnknownDirective { line: 2, .. }
        ));
        assert!(matches!(
            err("name a\nentry 0\nparam s_x\npost 4: true"),
            ContractError::ReservedParam { .. }
        ));
        assert!(matches!(
            err("name a\nentry 0\nparam p p\npost 4: true"),
            ContractError::Duplicate { .. }
        ));
        assert!(matches!(
            err("name a\nentry 0\npost 4 true"),
            ContractError::Syntax { line: 3, .. }
        ));
        assert!(matches!(
            err("name a\nentry 0\npost 4: q = 1"),
            ContractError::UnknownName { .. }
        ));
        assert!(matches!(
            err("name a\nentry zz\npost 4: true"),
            ContractError::Syntax { .. }
        ));
        assert_eq!(err("entry 0\npost 4: true"), ContractError::Missing("name"));
    }
}
