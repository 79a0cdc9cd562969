//! Verification of BIR contracts and concrete checks of the outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{rngs::StdRng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use super::sample::sample_pre_state;
use super::{params_interp, BirContract, ParamValues, Prepared, RiscvContract, StateView};
use crate::bir::{
    eval_bool, run_program, type_of, BinOp, BirEnv, BirType, ExecError, Exp, Interp, Next, PredOp,
    Symbol, Value,
};
use crate::disasm::ProgramSlice;
use crate::isa::{run, Csr, MachineState, Reg, RunError};
use crate::lifter::{csr_var, gpr_var, mem_var, LiftMap};
use crate::smt::{Obligation, SmtError, Solver, Verdict};
use crate::symbolic::{
    initial_symbol, word_value, At, Engine, ExecStats, Heuristics, ProofCache, Simplifier,
    SymbolicState, SymbolicStructure, SymexError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyOptions {
    pub heuristics: Heuristics,
    /// Worker threads for the per-leaf entailment checks.
    pub jobs: usize,
}

impl Default for VerifyOptions {
    fn default() -> VerifyOptions {
        VerifyOptions {
            heuristics: Heuristics::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractVerdict {
    Verified,
    Refuted { at: At, counterexample: Interp },
    Unknown(String),
}

impl ContractVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            ContractVerdict::Verified => "verified",
            ContractVerdict::Refuted { .. } => "refuted",
            ContractVerdict::Unknown(_) => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafStatus {
    /// The postcondition follows from the path condition.
    Entailed,
    /// A model satisfies the path and violates the postcondition.
    Violated,
    /// The path condition is unsatisfiable.
    Infeasible,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeafOutcome {
    pub at: String,
    pub status: LeafStatus,
    pub detail: String,
    #[serde(skip)]
    pub model: Option<Interp>,
}

#[derive(Debug, Clone)]
pub struct VerificationResult {
    pub verdict: ContractVerdict,
    pub leaves: Vec<LeafOutcome>,
    /// Absent when exploration stopped early.
    pub structure: Option<SymbolicStructure>,
    pub stats: ExecStats,
    pub entailment_queries: u64,
    pub elapsed: Duration,
}

impl VerificationResult {
    /// Solver queries issued, exploration and leaf checks together.
    pub fn obligations(&self) -> u64 {
        self.stats.obligations() + self.entailment_queries
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Symex(#[from] SymexError),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

/// Parameters the path condition pins to another term, typically the
/// initial symbol of a register, so addresses share a syntactic base.
fn param_values(bc: &BirContract, leaf: &SymbolicState) -> BTreeMap<Symbol, Arc<Exp>> {
    fn conjuncts<'a>(e: &'a Arc<Exp>, out: &mut Vec<&'a Arc<Exp>>) {
        match &**e {
            Exp::Bin(BinOp::And, a, b) if type_of(e) == Ok(BirType::Imm1) => {
                conjuncts(a, out);
                conjuncts(b, out);
            }
            _ => out.push(e),
        }
    }
    let path: Vec<Arc<Exp>> = leaf.path.iter().map(|c| leaf.expand(c)).collect();
    let mut flat = Vec::new();
    for c in &path {
        conjuncts(c, &mut flat);
    }
    let mut out = BTreeMap::new();
    for c in flat {
        if let Exp::Pred(PredOp::Equal, a, b) = &**c {
            for (p, e) in [(a, b), (b, a)] {
                if let Exp::Sym(s) = &**p {
                    if bc.params.contains(s) && !e.symbols().contains(s) && !out.contains_key(s) {
                        out.insert(s.clone(), e.clone());
                        break;
                    }
                }
            }
        }
    }
    out
}

/// Checks one leaf. The postcondition is simplified in the leaf's context
/// first, so loads from the final memory resolve to stored values before
/// the solver sees them.
fn check_leaf(
    bc: &BirContract,
    leaf: &SymbolicState,
    solver: &dyn Solver,
    cache: &ProofCache,
    stats: &mut ExecStats,
) -> Result<LeafOutcome, SmtError> {
    let hyps = leaf.expanded_path();
    let outcome = |status, detail: String, model| LeafOutcome {
        at: leaf.at.to_string(),
        status,
        detail,
        model,
    };
    Ok(match leaf.at {
        At::Label(l) if bc.endpoints.contains(&l) => {
            let post = Arc::new(bc.post_at(l)).subst_vars(&|v| leaf.env.get(v).cloned());
            let pinned = param_values(bc, leaf);
            let post = post.subst_syms(&|s| pinned.get(s).cloned());
            let post = Simplifier {
                state: leaf,
                solver: Some(solver),
                cache: Some(cache),
                stats,
            }
            .simplify(&post);
            let goal = (*leaf.expand(&post)).clone();
            let ob = Obligation::entailment(hyps, goal, &format!("postcondition at {l:#x}"));
            match solver.check(&ob)? {
                Verdict::Unsat => outcome(LeafStatus::Entailed, String::new(), None),
                Verdict::Sat(m) => outcome(
                    LeafStatus::Violated,
                    "postcondition fails".into(),
                    Some(m.interp),
                ),
                Verdict::Unknown(r) => outcome(LeafStatus::Unknown, r, None),
            }
        }
        at => {
            let ob = Obligation::feasibility(hyps, Exp::tt(), &format!("path to {at}"));
            match solver.check(&ob)? {
                Verdict::Unsat => outcome(LeafStatus::Infeasible, String::new(), None),
                Verdict::Sat(m) => outcome(
                    LeafStatus::Violated,
                    format!("a feasible path ends at {at}, away from the endpoints"),
                    Some(m.interp),
                ),
                Verdict::Unknown(r) => outcome(LeafStatus::Unknown, r, None),
            }
        }
    })
}

fn check_leaves(
    bc: &BirContract,
    leaves: &[SymbolicState],
    solver: &dyn Solver,
    jobs: usize,
    stats: &mut ExecStats,
) -> Result<Vec<LeafOutcome>, SmtError> {
    let n = leaves.len();
    let jobs = jobs.clamp(1, n.max(1));
    let cache = ProofCache::default();
    if jobs == 1 {
        return leaves
            .iter()
            .map(|l| check_leaf(bc, l, solver, &cache, stats))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let slots = Mutex::new(vec![None; n]);
    let shared = Mutex::new(ExecStats::default());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| {
                let mut local = ExecStats::default();
                loop {
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    if k >= n {
                        break;
                    }
                    let r = check_leaf(bc, &leaves[k], solver, &cache, &mut local);
                    slots.lock().expect("no worker panicked")[k] = Some(r);
                }
                *shared.lock().expect("no worker panicked") += local;
            });
        }
    });
    *stats += shared.into_inner().expect("no worker panicked");
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every leaf checked"))
        .collect()
}

/// Symbolically executes the contract's program from its precondition and
/// checks every leaf: endpoints against their postcondition, every other
/// leaf for feasibility.
pub fn verify(
    bc: &BirContract,
    solver: &dyn Solver,
    opts: &VerifyOptions,
) -> Result<VerificationResult, VerifyError> {
    let start = Instant::now();
    let mut engine = Engine::new(&bc.program, solver, opts.heuristics.clone());
    engine.extra_vars = bc.vars();
    let explored = engine.execute(bc.entry, &bc.endpoints, &bc.forbidden, &bc.pre);
    let stats = engine.stats;
    let mut result = VerificationResult {
        verdict: ContractVerdict::Verified,
        leaves: Vec::new(),
        structure: None,
        stats,
        entailment_queries: 0,
        elapsed: Duration::ZERO,
    };
    let leaves = match explored {
        Ok(structure) => {
            let leaves = structure.leaves.clone();
            result.structure = Some(structure);
            leaves
        }
        Err(SymexError::ForbiddenLabelReached { state, .. }) => vec![*state],
        Err(SymexError::BudgetExhausted { reason, frontier }) => {
            let frontier: Vec<String> = frontier.iter().map(|l| format!("{l:#x}")).collect();
            result.verdict = ContractVerdict::Unknown(format!(
                "exploration budget exhausted ({reason}); frontier {}",
                frontier.join(", ")
            ));
            result.elapsed = start.elapsed();
            return Ok(result);
        }
        Err(e @ SymexError::IndirectTargetUnbounded { .. }) => {
            result.verdict = ContractVerdict::Unknown(e.to_string());
            result.elapsed = start.elapsed();
            return Ok(result);
        }
        Err(e) => return Err(e.into()),
    };
    result.leaves = check_leaves(bc, &leaves, solver, opts.jobs, &mut result.stats)?;
    result.entailment_queries = leaves.len() as u64;
    let violated = result
        .leaves
        .iter()
        .zip(&leaves)
        .find(|(o, _)| o.status == LeafStatus::Violated);
    result.verdict = if let Some((o, leaf)) = violated {
        ContractVerdict::Refuted {
            at: leaf.at,
            counterexample: o.model.clone().unwrap_or_default(),
        }
    } else {
        let unknown: Vec<String> = result
            .leaves
            .iter()
            .filter(|o| o.status == LeafStatus::Unknown)
            .map(|o| format!("{}: {}", o.at, o.detail))
            .collect();
        if unknown.is_empty() {
            ContractVerdict::Verified
        } else {
            ContractVerdict::Unknown(format!("undecided leaves: {}", unknown.join("; ")))
        }
    };
    result.elapsed = start.elapsed();
    Ok(result)
}

/// Word values of a model keyed by symbol name; memories as byte counts.
pub fn counterexample_summary(cex: &Interp) -> BTreeMap<String, String> {
    cex.syms
        .iter()
        .map(|(s, v)| {
            let text = match v {
                Value::Word(w) => format!("{:#x}", w.bits()),
                Value::Mem(m) => {
                    let bytes: Vec<String> = m
                        .bytes
                        .iter()
                        .map(|(a, b)| format!("{a:#x}:{b:#04x}"))
                        .collect();
                    format!("[{}]", bytes.join(", "))
                }
            };
            (s.name.to_string(), text)
        })
        .collect()
}

/// The initial machine state a model describes. Unmentioned registers,
/// CSRs and bytes are zero.
pub fn model_machine_state(cex: &Interp, entry: u64) -> MachineState {
    let mut s = MachineState::new(entry);
    for i in 1..32 {
        let r = Reg::from_bits(i);
        s.set_gpr(
            r,
            word_value(cex, &initial_symbol(&gpr_var(r))).unwrap_or(0),
        );
    }
    for c in Csr::ALL {
        s.set_csr(
            c,
            word_value(cex, &initial_symbol(&csr_var(c))).unwrap_or(0),
        );
    }
    if let Some(m) = cex.get(&initial_symbol(&mem_var())).and_then(Value::mem) {
        s.mem = m.bytes.clone();
    }
    s
}

pub fn model_params(rc: &RiscvContract, cex: &Interp) -> ParamValues {
    rc.params
        .iter()
        .map(|p| {
            (
                p.clone(),
                word_value(cex, &super::param_symbol(p)).unwrap_or(0),
            )
        })
        .collect()
}

/// A concrete re-run of a counterexample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Replay {
    pub pre_holds: bool,
    /// Address where the run stopped, when it stopped at a label.
    pub stopped_at: Option<u64>,
    pub post_holds: Option<bool>,
    /// The run ended away from the endpoints or broke the postcondition.
    pub violation: bool,
    pub detail: String,
}

fn stop_set(rc_endpoints: &BTreeSet<u64>, forbidden: &BTreeSet<u64>) -> BTreeSet<u64> {
    rc_endpoints.union(forbidden).copied().collect()
}

/// Replays a counterexample on the ISA interpreter.
pub fn replay_isa(rc: &RiscvContract, slice: &ProgramSlice, cex: &Interp, fuel: u64) -> Replay {
    let s = model_machine_state(cex, rc.entry);
    let params = model_params(rc, cex);
    let pre_holds = rc.pre.eval(&s, &params) == Some(true);
    let mut sl = slice.clone();
    sl.end_addrs = stop_set(&rc.endpoints(), &rc.forbidden);
    let mut replay = Replay {
        pre_holds,
        stopped_at: None,
        post_holds: None,
        violation: false,
        detail: String::new(),
    };
    match run(s, &sl, fuel) {
        Ok(out) => {
            let pc = out.state.pc;
            replay.stopped_at = Some(pc);
            match rc.post.get(&pc) {
                Some(post) => {
                    let holds = post.eval(&out.state, &params);
                    replay.post_holds = holds;
                    replay.violation = holds != Some(true);
                    replay.detail = format!("stopped at {pc:#x} after {} steps", out.steps);
                }
                None => {
                    replay.violation = true;
                    replay.detail = format!("reached forbidden address {pc:#x}");
                }
            }
        }
        Err(RunError::PcOutsideSlice(pc)) => {
            replay.violation = true;
            replay.detail = format!("left the code at {pc:#x}");
        }
        Err(e) => replay.detail = e.to_string(),
    }
    replay
}

fn model_env(bc: &BirContract, cex: &Interp) -> BirEnv {
    let mut env = BirEnv::default();
    let mut vars = bc.program.vars();
    vars.extend(bc.vars());
    for v in vars {
        let value = cex
            .get(&initial_symbol(&v))
            .cloned()
            .unwrap_or_else(|| Value::zero(v.ty));
        env.set(&v, value);
    }
    env
}

/// Replays a counterexample on the BIR interpreter.
pub fn replay_bir(bc: &BirContract, cex: &Interp, fuel: u64) -> Replay {
    let env = model_env(bc, cex);
    let pre_holds = eval_bool(
        &bc.pre,
        &StateView {
            env: &env,
            syms: cex,
        },
    )
    .unwrap_or(false);
    let mut replay = Replay {
        pre_holds,
        stopped_at: None,
        post_holds: None,
        violation: false,
        detail: String::new(),
    };
    match run_program(
        &bc.program,
        env,
        bc.entry,
        &stop_set(&bc.endpoints, &bc.forbidden),
        fuel,
    ) {
        Ok(r) => match r.last {
            Next::Label(l) if bc.endpoints.contains(&l) => {
                replay.stopped_at = Some(l);
                let holds = eval_bool(
                    &bc.post_at(l),
                    &StateView {
                        env: &r.env,
                        syms: cex,
                    },
                )
                .ok();
                replay.post_holds = holds;
                replay.violation = holds != Some(true);
                replay.detail = format!("stopped at {l:#x} after {} blocks", r.steps);
            }
            Next::Label(l) => {
                replay.stopped_at = Some(l);
                replay.violation = true;
                replay.detail = format!("stopped at {l:#x}, away from the endpoints");
            }
            Next::Halt => {
                replay.violation = true;
                replay.detail = "halted".into();
            }
        },
        Err(ExecError::AssertFailed { block, .. }) => {
            replay.violation = true;
            replay.detail = format!("assertion failed in block {block:#x}");
        }
        Err(e) => replay.detail = e.to_string(),
    }
    replay
}

/// Concrete runs from sampled precondition states.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Corroboration {
    pub runs: u64,
    pub passed: u64,
    /// Candidate states the precondition rejected.
    pub rejected: u64,
    pub failures: Vec<String>,
}

impl Corroboration {
    pub fn all_passed(&self) -> bool {
        self.runs > 0 && self.passed == self.runs
    }
}

fn sampled_states(
    rc: &RiscvContract,
    runs: u64,
    seed: u64,
    mut f: impl FnMut(MachineState, ParamValues),
) -> u64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rejected = 0;
    let mut done = 0;
    while done < runs && rejected < runs.saturating_mul(20).max(100) {
        match sample_pre_state(rc, &mut rng, 1) {
            Some((s, p)) => {
                f(s, p);
                done += 1;
            }
            None => rejected += 1,
        }
    }
    rejected
}

/// Runs the ISA interpreter from `runs` sampled precondition states and
/// checks the postcondition wherever the run stops.
pub fn corroborate(
    rc: &RiscvContract,
    slice: &ProgramSlice,
    runs: u64,
    seed: u64,
    fuel: u64,
) -> Corroboration {
    let mut out = Corroboration::default();
    let mut sl = slice.clone();
    sl.end_addrs = stop_set(&rc.endpoints(), &rc.forbidden);
    out.rejected = sampled_states(rc, runs, seed, |s, params| {
        out.runs += 1;
        match run(s, &sl, fuel) {
            Ok(o) => match rc.post.get(&o.state.pc) {
                Some(post) if post.eval(&o.state, &params) == Some(true) => out.passed += 1,
                Some(_) => out
                    .failures
                    .push(format!("postcondition fails at {:#x}", o.state.pc)),
                None => out
                    .failures
                    .push(format!("reached forbidden address {:#x}", o.state.pc)),
            },
            Err(e) => out.failures.push(e.to_string()),
        }
    });
    out
}

/// Concrete BIR runs from sampled precondition states, each required to
/// match a leaf of the symbolic structure.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct SoundnessReport {
    pub runs: u64,
    pub matched: u64,
    pub rejected: u64,
    pub failures: Vec<String>,
}

impl SoundnessReport {
    pub fn all_matched(&self) -> bool {
        self.runs > 0 && self.matched == self.runs
    }
}

pub fn soundness_sample(
    rc: &RiscvContract,
    prepared: &Prepared,
    structure: &SymbolicStructure,
    runs: u64,
    seed: u64,
    fuel: u64,
) -> SoundnessReport {
    let mut out = SoundnessReport::default();
    let stop = stop_set(&prepared.bir.endpoints, &prepared.bir.forbidden);
    out.rejected = sampled_states(rc, runs, seed, |s, params| {
        out.runs += 1;
        let env = LiftMap::env_of(&s);
        match structure.check_run(
            prepared.program(),
            &env,
            &params_interp(&params),
            &stop,
            fuel,
        ) {
            Ok(Some(_)) => out.matched += 1,
            Ok(None) => out.failures.push("no leaf matches the final state".into()),
            Err(e) => out.failures.push(e.to_string()),
        }
    });
    out
}
