//! Evidence behind an ISA-level report and the report itself.
//!
//! A BIR verdict says something about the ISA program only through the
//! per-instruction simulation checks of the lifter and the translation
//! checks of the contract predicates. [`backlift`] refuses to report
//! without both and marks the report invalid when either failed.

use rand::{rngs::StdRng, SeedableRng};
use serde::Serialize;
use std::collections::BTreeMap;

use super::sample::{random_state, sample_pre_state};
use super::verify::counterexample_summary;
use super::{
    params_interp, ContractError, ContractVerdict, Prepared, RiscvContract, RiscvPredicate,
    StateView, VerificationResult,
};
use crate::bir::eval_bool;
use crate::isa::{decode, IsaError};
use crate::lifter::{check_simulation, LiftMap, SimReport};

/// Agreement of a predicate's ISA meaning and its BIR translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranslationCheck {
    /// `pre` or `post@ADDRESS`.
    pub predicate: String,
    pub trials: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

impl TranslationCheck {
    pub fn passed(&self) -> bool {
        self.trials > 0 && self.failures == 0
    }
}

fn check_one(
    rc: &RiscvContract,
    name: String,
    pred: &RiscvPredicate,
    trials: u64,
    seed: u64,
) -> TranslationCheck {
    let mut rng = StdRng::seed_from_u64(seed);
    let bir = pred.translate();
    let mut out = TranslationCheck {
        predicate: name,
        trials,
        failures: 0,
        first_failure: None,
    };
    for t in 0..trials {
        // Half the trials start from precondition states so equality atoms
        // are exercised on both outcomes.
        let sampled = if t % 2 == 0 {
            sample_pre_state(rc, &mut rng, 4)
        } else {
            None
        };
        let (s, params) = sampled.unwrap_or_else(|| random_state(rc, &mut rng));
        let isa = pred.eval(&s, &params);
        let env = LiftMap::env_of(&s);
        let h = params_interp(&params);
        let got = eval_bool(
            &bir,
            &StateView {
                env: &env,
                syms: &h,
            },
        )
        .ok();
        if isa != got {
            out.failures += 1;
            out.first_failure.get_or_insert_with(|| {
                format!("ISA says {isa:?}, BIR says {got:?} with parameters {params:x?}")
            });
        }
    }
    out
}

/// Translation checks of the precondition and of every postcondition.
pub fn check_translation(rc: &RiscvContract, trials: u64, seed: u64) -> Vec<TranslationCheck> {
    let mut out = vec![check_one(rc, "pre".into(), &rc.pre, trials, seed)];
    for (k, (addr, post)) in rc.post.iter().enumerate() {
        out.push(check_one(
            rc,
            format!("post@{addr:#x}"),
            post,
            trials,
            seed.wrapping_add(1 + k as u64),
        ));
    }
    out
}

/// Simulation checks of every lifted instruction.
pub fn check_lift_map(lm: &LiftMap, trials: u64, seed: u64) -> Result<Vec<SimReport>, IsaError> {
    lm.instrs
        .iter()
        .map(|(addr, raw)| {
            Ok(check_simulation(
                &decode(raw.word)?,
                *addr,
                trials,
                seed ^ addr,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    Verdict,
    Simulation,
    Translation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub subject: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Holds,
    Refuted,
    Unknown,
    /// A simulation or translation check failed, so the BIR verdict does
    /// not carry over.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RiscvReport {
    pub contract: String,
    pub status: ReportStatus,
    pub statement: String,
    pub counterexample: Option<BTreeMap<String, String>>,
    pub evidence: Vec<Evidence>,
}

/// Lifts a BIR verdict to an ISA-level report. Every lifted instruction
/// needs a simulation report and every predicate a translation check.
pub fn backlift(
    rc: &RiscvContract,
    result: &VerificationResult,
    lm: &LiftMap,
    sims: &[SimReport],
    translations: &[TranslationCheck],
) -> Result<RiscvReport, ContractError> {
    for addr in lm.instrs.keys() {
        if !sims.iter().any(|r| r.addr == *addr) {
            return Err(ContractError::EvidenceMissing(format!(
                "no simulation report for {addr:#x}"
            )));
        }
    }
    let mut wanted = vec!["pre".to_string()];
    wanted.extend(rc.post.keys().map(|a| format!("post@{a:#x}")));
    for w in &wanted {
        if !translations.iter().any(|t| &t.predicate == w) {
            return Err(ContractError::EvidenceMissing(format!(
                "no translation check for {w}"
            )));
        }
    }

    let mut evidence = vec![Evidence {
        kind: EvidenceKind::Verdict,
        subject: format!("BIR contract {}", rc.name),
        passed: matches!(result.verdict, ContractVerdict::Verified),
        detail: match &result.verdict {
            ContractVerdict::Verified => format!(
                "{} leaves, {} solver queries",
                result.leaves.len(),
                result.obligations()
            ),
            ContractVerdict::Refuted { at, .. } => format!("refuted at {at}"),
            ContractVerdict::Unknown(why) => why.clone(),
        },
    }];
    evidence.extend(sims.iter().map(|r| Evidence {
        kind: EvidenceKind::Simulation,
        subject: format!("{} at {:#x}", r.instr, r.addr),
        passed: r.passed(),
        detail: match &r.counterexample {
            Some(c) => format!(
                "{}/{} trials failed: {}",
                r.failures, r.trials, c.difference
            ),
            None => format!("{} trials", r.trials),
        },
    }));
    evidence.extend(translations.iter().map(|t| Evidence {
        kind: EvidenceKind::Translation,
        subject: t.predicate.clone(),
        passed: t.passed(),
        detail: match &t.first_failure {
            Some(f) => format!("{}/{} trials failed: {f}", t.failures, t.trials),
            None => format!("{} trials", t.trials),
        },
    }));

    let ends: Vec<String> = rc.post.keys().map(|a| format!("{a:#x}")).collect();
    let mut counterexample = None;
    let (status, statement) = if let Some(bad) = sims.iter().find(|r| !r.passed()) {
        (
            ReportStatus::Invalid,
            format!(
                "simulation check failed for {} at {:#x}; the BIR verdict does not carry over",
                bad.instr, bad.addr
            ),
        )
    } else if let Some(bad) = translations.iter().find(|t| !t.passed()) {
        (
            ReportStatus::Invalid,
            format!(
                "translation check failed for {}; the BIR verdict does not carry over",
                bad.predicate
            ),
        )
    } else {
        match &result.verdict {
            ContractVerdict::Verified => (
                ReportStatus::Holds,
                format!(
                    "contract {} holds for the RISC-V code from {:#x} to {{{}}}, given the tested lifting and translation",
                    rc.name,
                    rc.entry,
                    ends.join(", ")
                ),
            ),
            ContractVerdict::Refuted { at, counterexample: cex } => {
                counterexample = Some(counterexample_summary(cex));
                (ReportStatus::Refuted, format!("contract {} is violated at {at}", rc.name))
            }
            ContractVerdict::Unknown(why) => (ReportStatus::Unknown, format!("contract {} is undecided: {why}", rc.name)),
        }
    };
    Ok(RiscvReport {
        contract: rc.name.clone(),
        status,
        statement,
        counterexample,
        evidence,
    })
}

/// Runs the simulation and translation checks for a prepared contract and
/// backlifts `result` with them.
pub fn report(
    rc: &RiscvContract,
    prepared: &Prepared,
    result: &VerificationResult,
    trials: u64,
    seed: u64,
) -> Result<RiscvReport, ContractError> {
    let sims = check_lift_map(&prepared.lift_map, trials, seed)
        .map_err(|e| ContractError::EvidenceMissing(format!("lifted word does not decode: {e}")))?;
    let translations = check_translation(rc, trials, seed);
    backlift(rc, result, &prepared.lift_map, &sims, &translations)
}
