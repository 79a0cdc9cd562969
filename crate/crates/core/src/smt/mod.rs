//! Verification obligations, their SMT-LIB2 encoding, and solver back ends.
//!
//! Every satisfying model a solver returns is re-evaluated with the concrete
//! evaluator before it is handed out; a model that fails that check is an
//! error, never a verdict.

pub mod encode;
mod process;
pub mod sexp;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::bir::eval::eval_bool;
use crate::bir::{eval, BirType, EvalError, Exp, Interp, MemValue, Symbol, Value, Word};

pub use encode::encode;
pub use process::ProcessSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObligationKind {
    /// Satisfiable iff the hypotheses and the goal can hold together.
    Feasibility,
    /// An equality or disjointness fact used to rewrite a term.
    Simplification,
    /// Unsatisfiable iff the hypotheses imply the goal.
    Entailment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Obligation {
    pub kind: ObligationKind,
    pub hypotheses: Vec<Exp>,
    pub goal: Exp,
    /// Terms whose values are reported alongside a model.
    pub observe: Vec<Exp>,
    pub origin: String,
}

impl Obligation {
    pub fn feasibility(hypotheses: Vec<Exp>, goal: Exp, origin: &str) -> Obligation {
        Obligation::new(ObligationKind::Feasibility, hypotheses, goal, origin)
    }

    pub fn entailment(hypotheses: Vec<Exp>, goal: Exp, origin: &str) -> Obligation {
        Obligation::new(ObligationKind::Entailment, hypotheses, goal, origin)
    }

    pub fn new(kind: ObligationKind, hypotheses: Vec<Exp>, goal: Exp, origin: &str) -> Obligation {
        Obligation {
            kind,
            hypotheses,
            goal,
            observe: Vec::new(),
            origin: origin.to_string(),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Exp> {
        self.hypotheses
            .iter()
            .chain(std::iter::once(&self.goal))
            .chain(self.observe.iter())
    }
}

/// A validated model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Model {
    pub interp: Interp,
    /// Values of [`Obligation::observe`], in order.
    pub observed: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl Verdict {
    pub fn is_unsat(&self) -> bool {
        matches!(self, Verdict::Unsat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmtError {
    #[error("solver failed: {0}")]
    SolverCrash(String),
    #[error("cannot parse solver output: {0}")]
    ModelParse(String),
    #[error("cannot encode: {0}")]
    UnsupportedTerm(String),
    #[error("solver model does not satisfy the obligation: {0}")]
    ModelRejected(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub trait Solver: Send + Sync {
    fn check(&self, ob: &Obligation) -> Result<Verdict, SmtError>;
    fn describe(&self) -> String;
}

/// A back end that proves nothing: every query is unknown.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSolver;

impl Solver for NoSolver {
    fn check(&self, _: &Obligation) -> Result<Verdict, SmtError> {
        Ok(Verdict::Unknown("no solver configured".into()))
    }
    fn describe(&self) -> String {
        "none".into()
    }
}

static MODELS_CHECKED: AtomicU64 = AtomicU64::new(0);
static MODELS_REJECTED: AtomicU64 = AtomicU64::new(0);

/// Process-wide counts of (validated, rejected) solver models.
pub fn model_audit() -> (u64, u64) {
    (
        MODELS_CHECKED.load(Ordering::SeqCst),
        MODELS_REJECTED.load(Ordering::SeqCst),
    )
}

/// A model assignment for every symbol; memory symbols start with no known
/// bytes and are filled through `fetch`.
pub(crate) fn skeleton(words: &BTreeMap<Symbol, u64>, mems: &[Symbol]) -> Interp {
    let mut interp = Interp::default();
    for (s, &v) in words {
        let w = s.ty.width().expect("word symbol");
        interp.set(s, Value::Word(Word::new(w, v)));
    }
    for m in mems {
        interp.set(
            m,
            Value::Mem(Arc::new(MemValue {
                bytes: BTreeMap::new(),
                default: None,
                origin: m.name.clone(),
            })),
        );
    }
    interp
}

/// Evaluates the obligation under `interp`, fetching unknown memory bytes
/// on demand, and checks the model satisfies what was asserted. On success
/// unknown bytes default to zero and observed values are returned.
pub(crate) fn validate_model(
    ob: &Obligation,
    mut interp: Interp,
    fetch: &mut dyn FnMut(&Symbol, u64) -> Result<u8, SmtError>,
) -> Result<Model, SmtError> {
    MODELS_CHECKED.fetch_add(1, Ordering::SeqCst);
    let result = (|| {
        let mut fetches = 0;
        loop {
            match evaluate_all(ob, &interp) {
                Ok(v) => return v,
                Err(EvalError::MissingByte { origin, addr }) => {
                    fetches += 1;
                    if fetches > 1 << 16 {
                        return Err(SmtError::ModelParse("too many memory fetches".into()));
                    }
                    let sym = Symbol::new(&origin, BirType::Mem);
                    let byte = fetch(&sym, addr)?;
                    match interp.syms.get_mut(&sym) {
                        Some(Value::Mem(m)) => {
                            Arc::make_mut(m).bytes.insert(addr, byte);
                        }
                        _ => return Err(SmtError::ModelParse(format!("no memory {origin}"))),
                    }
                }
                Err(e) => return Err(SmtError::ModelRejected(e.to_string())),
            }
        }
    })()
    .map(|observed| {
        for v in interp.syms.values_mut() {
            if let Value::Mem(m) = v {
                Arc::make_mut(m).default = Some(0);
            }
        }
        Model {
            interp: interp.clone(),
            observed,
        }
    });
    if matches!(result, Err(SmtError::ModelRejected(_))) {
        MODELS_REJECTED.fetch_add(1, Ordering::SeqCst);
    }
    result
}

/// `Ok(Ok(observed))` when the model checks out, `Ok(Err(..))` when it is
/// rejected, `Err` for evaluation needing more memory.
fn evaluate_all(
    ob: &Obligation,
    interp: &Interp,
) -> Result<Result<Vec<Value>, SmtError>, EvalError> {
    for (k, h) in ob.hypotheses.iter().enumerate() {
        if !eval_bool(h, interp)? {
            return Ok(Err(SmtError::ModelRejected(format!(
                "hypothesis {k} of {} is false",
                ob.origin
            ))));
        }
    }
    let goal = eval_bool(&ob.goal, interp)?;
    let wanted = ob.kind == ObligationKind::Feasibility;
    if goal != wanted {
        return Ok(Err(SmtError::ModelRejected(format!(
            "goal of {} evaluates to {goal}",
            ob.origin
        ))));
    }
    let observed = ob
        .observe
        .iter()
        .map(|e| eval(e, interp))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ok(observed))
}

/// Whether a total interpretation satisfies what `ob` asserts.
pub fn satisfies(ob: &Obligation, interp: &Interp) -> Result<bool, EvalError> {
    Ok(evaluate_all(ob, interp)?.is_ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_fetches_memory_and_rejects_bad_models() {
        let m = Symbol::new("M", BirType::Mem);
        let a = Symbol::new("a", BirType::Imm64);
        let goal = Exp::eq(
            Exp::load(Exp::sym(&m), Exp::sym(&a), 16),
            Exp::word(16, 0x1234),
        );
        let ob = Obligation::feasibility(vec![], goal, "t");
        let words = BTreeMap::from([(a.clone(), 0x100)]);
        let mut fetch = |_: &Symbol, addr: u64| Ok(if addr == 0x100 { 0x34 } else { 0x12 });
        let model =
            validate_model(&ob, skeleton(&words, std::slice::from_ref(&m)), &mut fetch).unwrap();
        let mem = model.interp.get(&m).unwrap().mem().unwrap().clone();
        assert_eq!(mem.bytes.len(), 2);
        assert_eq!(mem.default, Some(0));

        let before = model_audit();
        let mut wrong = |_: &Symbol, _: u64| Ok(0u8);
        let r = validate_model(&ob, skeleton(&words, &[m]), &mut wrong);
        assert!(matches!(r, Err(SmtError::ModelRejected(_))));
        let after = model_audit();
        assert!(after.1 > before.1);
    }

    #[test]
    fn no_solver_is_unknown() {
        let ob = Obligation::feasibility(vec![], Exp::tt(), "t");
        assert!(matches!(NoSolver.check(&ob), Ok(Verdict::Unknown(_))));
    }
}
