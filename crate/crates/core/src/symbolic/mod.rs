//! Forward symbolic execution of BIR programs.
//!
//! A symbolic state maps program variables to expressions over symbols and
//! carries a path condition. Executing from an initial state whose variables
//! are fresh symbols yields a symbolic structure: the leaves together cover
//! every concrete run that starts in a matching state and stays inside the
//! visited labels.

mod engine;
pub mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::bir::eval::eval_bool;
use crate::bir::{
    eval, run_program, type_of, BinOp, BirEnv, BirType, EvalError, ExecError, Exp, Interp, Next,
    PredOp, Program, Symbol, TypeError, Value, Var,
};
use crate::smt::{Obligation, SmtError, Solver, Verdict};

pub use engine::{execute, Engine, Heuristics};
pub use simplify::{simplify_exp, ProofCache, Simplifier};

/// Where a symbolic state stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum At {
    /// About to execute the block at this label, or stopped at an endpoint.
    Label(u64),
    /// Halted by the block at this label.
    Halted(u64),
    /// An assertion of the block at this label failed.
    AssertFailed(u64),
}

impl At {
    pub fn label(self) -> Option<u64> {
        match self {
            At::Label(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for At {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            At::Label(l) => write!(f, "{l:#x}"),
            At::Halted(l) => write!(f, "halt@{l:#x}"),
            At::AssertFailed(l) => write!(f, "assert@{l:#x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymexError {
    #[error("entry {0:#x} is not a block of the program")]
    EntryNotInProgram(u64),
    #[error("no endpoints given")]
    NoEndpoints,
    #[error("precondition: {0}")]
    Type(#[from] TypeError),
    #[error("precondition is not Imm1")]
    PreconditionNotBool,
    #[error("budget exhausted ({reason}); frontier at {frontier:x?}")]
    BudgetExhausted { reason: String, frontier: Vec<u64> },
    #[error("forbidden label {label:#x} reached")]
    ForbiddenLabelReached {
        label: u64,
        state: Box<SymbolicState>,
    },
    #[error("jump target of block {block:#x} not narrowed to a finite set: {reason}")]
    IndirectTargetUnbounded { block: u64, reason: String },
    #[error("abbreviation name {0} already in use")]
    NameClash(String),
    #[error("symbol renaming is not a bijection")]
    NotBijection,
    #[error("weakening is not entailed: {0}")]
    WeakenNotEntailed(String),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

/// Counters of one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ExecStats {
    pub steps: u64,
    pub states: u64,
    pub pruned: u64,
    pub feasibility_queries: u64,
    pub simplification_queries: u64,
    pub target_queries: u64,
    pub unknown_verdicts: u64,
    pub solver_errors: u64,
    pub abbreviations: u64,
}

impl ExecStats {
    pub fn obligations(&self) -> u64 {
        self.feasibility_queries + self.simplification_queries + self.target_queries
    }
}

impl std::ops::AddAssign for ExecStats {
    fn add_assign(&mut self, o: ExecStats) {
        self.steps += o.steps;
        self.states += o.states;
        self.pruned += o.pruned;
        self.feasibility_queries += o.feasibility_queries;
        self.simplification_queries += o.simplification_queries;
        self.target_queries += o.target_queries;
        self.unknown_verdicts += o.unknown_verdicts;
        self.solver_errors += o.solver_errors;
        self.abbreviations += o.abbreviations;
    }
}

/// A path condition, a variable mapping and introduced abbreviations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicState {
    /// Conjuncts of the path condition.
    pub path: Vec<Arc<Exp>>,
    pub env: BTreeMap<Var, Arc<Exp>>,
    pub at: At,
    /// Definitions in introduction order; each may mention earlier ones.
    pub abbrevs: Vec<(Symbol, Arc<Exp>)>,
    defs: BTreeMap<Symbol, Arc<Exp>>,
    expanded: BTreeMap<Symbol, Arc<Exp>>,
    /// Executions of each label along this path.
    visits: BTreeMap<u64, u32>,
    /// The entry precondition, implied by every state stepped from the
    /// initial one; empty after weakening.
    base: Vec<Arc<Exp>>,
}

/// The initial symbol of a program variable.
pub fn initial_symbol(v: &Var) -> Symbol {
    Symbol::new(&format!("s_{}", v.name), v.ty)
}

/// Whether a user-chosen symbol name could clash with generated ones.
pub fn reserved_symbol_name(name: &str) -> bool {
    name.starts_with("s_")
        || name
            .strip_prefix("ab")
            .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Every variable mapped to its initial symbol; the path condition is
/// `pre` with variables replaced by those symbols.
pub fn init_state(
    vars: &BTreeSet<Var>,
    entry: u64,
    pre: &Exp,
) -> Result<SymbolicState, SymexError> {
    if type_of(pre)? != BirType::Imm1 {
        return Err(SymexError::PreconditionNotBool);
    }
    let mut vars = vars.clone();
    vars.extend(pre.vars());
    let env: BTreeMap<Var, Arc<Exp>> = vars
        .into_iter()
        .map(|v| {
            let s = Arc::new(Exp::sym(&initial_symbol(&v)));
            (v, s)
        })
        .collect();
    let pre = Arc::new(pre.clone()).subst_vars(&|v| env.get(v).cloned());
    let path = if pre.as_const().is_some_and(|w| w.is_true()) {
        Vec::new()
    } else {
        vec![pre]
    };
    Ok(SymbolicState {
        base: path.clone(),
        path,
        env,
        at: At::Label(entry),
        abbrevs: Vec::new(),
        defs: BTreeMap::new(),
        expanded: BTreeMap::new(),
        visits: BTreeMap::new(),
    })
}

impl SymbolicState {
    pub fn path_cond(&self) -> Exp {
        Exp::conj(self.path.iter().map(|c| (**c).clone()))
    }

    pub fn definition(&self, s: &Symbol) -> Option<&Arc<Exp>> {
        self.defs.get(s)
    }

    /// `e` with every abbreviation replaced by its full definition.
    pub fn expand(&self, e: &Arc<Exp>) -> Arc<Exp> {
        if self.expanded.is_empty() {
            return e.clone();
        }
        e.subst_syms(&|s| self.expanded.get(s).cloned())
    }

    pub fn expanded_path(&self) -> Vec<Exp> {
        self.path
            .iter()
            .map(|c| (*self.expand(c)).clone())
            .collect()
    }

    /// The entry precondition conjuncts this state still implies.
    pub fn base(&self) -> &[Arc<Exp>] {
        &self.base
    }

    /// Symbols the entry precondition fixes to a constant.
    pub fn base_constants(&self) -> BTreeMap<Symbol, Arc<Exp>> {
        fn walk(e: &Arc<Exp>, out: &mut BTreeMap<Symbol, Arc<Exp>>) {
            match &**e {
                Exp::Bin(BinOp::And, a, b) if type_of(e) == Ok(BirType::Imm1) => {
                    walk(a, out);
                    walk(b, out);
                }
                Exp::Pred(PredOp::Equal, a, b) => {
                    for (s, c) in [(a, b), (b, a)] {
                        if let (Exp::Sym(s), Some(_)) = (&**s, c.as_const()) {
                            out.entry(s.clone()).or_insert_with(|| c.clone());
                        }
                    }
                }
                _ => {}
            }
        }
        let mut out = BTreeMap::new();
        for c in &self.base {
            walk(c, &mut out);
        }
        out
    }

    /// Symbols other than abbreviations.
    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        for e in self.path.iter().chain(self.env.values()) {
            out.extend(e.symbols());
        }
        for (_, d) in &self.abbrevs {
            out.extend(d.symbols());
        }
        out.retain(|s| !self.defs.contains_key(s));
        out
    }

    /// Largest expression of the state once abbreviations are expanded.
    pub fn expanded_size(&self) -> u64 {
        self.env
            .values()
            .chain(self.path.iter())
            .map(|e| self.expand(e).tree_size())
            .max()
            .unwrap_or(0)
    }

    /// Introduces `name := target` and replaces every occurrence of `target`
    /// in the path condition and the environment.
    pub fn abbreviate(&self, name: &str, target: &Arc<Exp>) -> Result<SymbolicState, SymexError> {
        let sym = Symbol::new(name, simplify::shallow_type(target));
        if self.defs.contains_key(&sym) || self.free_symbols().iter().any(|s| s.name == sym.name) {
            return Err(SymexError::NameClash(name.to_string()));
        }
        let leaf = Exp::sym(&sym);
        let replace = |e: &Arc<Exp>| {
            if Arc::ptr_eq(e, target) {
                return Arc::new(leaf.clone());
            }
            e.rewrite(&mut |n| (n == &**target).then(|| leaf.clone()))
        };
        let mut out = self.clone();
        out.path = self.path.iter().map(replace).collect();
        out.env = self
            .env
            .iter()
            .map(|(v, e)| (v.clone(), replace(e)))
            .collect();
        out.push_abbrev(sym, target.clone());
        Ok(out)
    }

    fn push_abbrev(&mut self, sym: Symbol, def: Arc<Exp>) {
        let full = self.expand(&def);
        self.expanded.insert(sym.clone(), full);
        self.defs.insert(sym.clone(), def.clone());
        self.abbrevs.push((sym, def));
    }

    /// Applies a bijective renaming of symbols everywhere.
    pub fn rename_symbols(
        &self,
        map: &BTreeMap<Symbol, Symbol>,
    ) -> Result<SymbolicState, SymexError> {
        let targets: BTreeSet<&Symbol> = map.values().collect();
        if targets.len() != map.len() || map.iter().any(|(a, b)| a.ty != b.ty) {
            return Err(SymexError::NotBijection);
        }
        let mut all = self.free_symbols();
        all.extend(self.defs.keys().cloned());
        if all
            .iter()
            .any(|s| targets.contains(s) && !map.contains_key(s))
        {
            return Err(SymexError::NotBijection);
        }
        let f = |e: &Arc<Exp>| e.subst_syms(&|s| map.get(s).map(|t| Arc::new(Exp::sym(t))));
        let rn = |s: &Symbol| map.get(s).cloned().unwrap_or_else(|| s.clone());
        let mut out = SymbolicState {
            path: self.path.iter().map(f).collect(),
            env: self.env.iter().map(|(v, e)| (v.clone(), f(e))).collect(),
            at: self.at,
            abbrevs: Vec::new(),
            defs: BTreeMap::new(),
            expanded: BTreeMap::new(),
            visits: self.visits.clone(),
            base: self.base.iter().map(f).collect(),
        };
        for (s, d) in &self.abbrevs {
            out.push_abbrev(rn(s), f(d));
        }
        Ok(out)
    }

    /// Adds a conjunct to the path condition, restricting the states matched.
    pub fn strengthen(&self, extra: Exp) -> Result<SymbolicState, SymexError> {
        if type_of(&extra)? != BirType::Imm1 {
            return Err(SymexError::PreconditionNotBool);
        }
        let mut out = self.clone();
        out.path.push(Arc::new(extra));
        Ok(out)
    }

    /// Replaces the path condition by `weaker` once the solver proves the
    /// current one implies it.
    pub fn weaken(&self, weaker: Exp, solver: &dyn Solver) -> Result<SymbolicState, SymexError> {
        if type_of(&weaker)? != BirType::Imm1 {
            return Err(SymexError::PreconditionNotBool);
        }
        let goal = self.expand(&Arc::new(weaker.clone()));
        let ob = Obligation::entailment(self.expanded_path(), (*goal).clone(), "weaken");
        match solver.check(&ob)? {
            Verdict::Unsat => {
                let mut out = self.clone();
                out.path = vec![Arc::new(weaker)];
                out.base.clear();
                Ok(out)
            }
            Verdict::Sat(_) => Err(SymexError::WeakenNotEntailed("counter-model found".into())),
            Verdict::Unknown(r) => Err(SymexError::WeakenNotEntailed(r)),
        }
    }

    pub fn dump(&self) -> StateDump {
        StateDump {
            at: self.at.to_string(),
            path: self.path.iter().map(|c| c.to_string()).collect(),
            env: self
                .env
                .iter()
                .filter(|(v, e)| ***e != Exp::sym(&initial_symbol(v)))
                .map(|(v, e)| (v.name.to_string(), e.to_string()))
                .collect(),
            abbrevs: self
                .abbrevs
                .iter()
                .map(|(s, d)| (s.name.to_string(), d.to_string()))
                .collect(),
        }
    }
}

/// `h` extended by the values of the state's abbreviations.
pub fn extend_interp(h: &Interp, st: &SymbolicState) -> Result<Interp, EvalError> {
    let mut h = h.clone();
    for (s, d) in &st.abbrevs {
        let v = eval(d, &h)?;
        h.set(s, v);
    }
    Ok(h)
}

/// Whether `st` matches the concrete state `(env, at)` under `h` extended
/// over the abbreviations: the path condition holds and every variable of
/// the state evaluates to its concrete value.
pub fn matches(h: &Interp, st: &SymbolicState, env: &BirEnv, at: At) -> Result<bool, EvalError> {
    if st.at != at {
        return Ok(false);
    }
    let h = extend_interp(h, st)?;
    for c in &st.path {
        if !eval_bool(c, &h)? {
            return Ok(false);
        }
    }
    for (v, e) in &st.env {
        let Some(concrete) = env.get(v) else {
            return Ok(false);
        };
        if !eval(e, &h)?.same(concrete)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateDump {
    pub at: String,
    pub path: Vec<String>,
    /// Entries still equal to their initial symbol are omitted.
    pub env: BTreeMap<String, String>,
    pub abbrevs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicStructure {
    pub initial: SymbolicState,
    /// Labels whose blocks were executed.
    pub labels: BTreeSet<u64>,
    pub leaves: Vec<SymbolicState>,
    pub stats: ExecStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureDump {
    pub initial: StateDump,
    pub labels: Vec<String>,
    pub leaves: Vec<StateDump>,
    pub stats: ExecStats,
}

impl SymbolicStructure {
    pub fn dump(&self) -> StructureDump {
        StructureDump {
            initial: self.initial.dump(),
            labels: self.labels.iter().map(|l| format!("{l:#x}")).collect(),
            leaves: self.leaves.iter().map(SymbolicState::dump).collect(),
            stats: self.stats,
        }
    }

    /// Largest leaf expression once abbreviations are expanded.
    pub fn max_leaf_size(&self) -> u64 {
        self.leaves
            .iter()
            .map(SymbolicState::expanded_size)
            .max()
            .unwrap_or(0)
    }

    /// An interpretation under which the initial state matches `env`:
    /// each initial symbol takes its variable's value; `extra` supplies
    /// other symbols such as contract parameters.
    pub fn initial_interp(&self, env: &BirEnv, extra: &Interp) -> Interp {
        let mut h = extra.clone();
        for (v, e) in &self.initial.env {
            if let (Exp::Sym(s), Some(value)) = (&**e, env.get(v)) {
                h.set(s, value.clone());
            }
        }
        h
    }

    /// Runs `program` concretely from `env` and reports which leaf matches
    /// the final state: `Ok(None)` means no leaf does.
    pub fn check_run(
        &self,
        program: &Program,
        env: &BirEnv,
        extra: &Interp,
        stop: &BTreeSet<u64>,
        fuel: u64,
    ) -> Result<Option<usize>, SoundnessError> {
        // Temporaries the concrete state does not carry start as zero.
        let mut env = env.clone();
        for v in self.initial.env.keys() {
            if env.get(v).is_none() {
                env.set(v, Value::zero(v.ty));
            }
        }
        let env = &env;
        let h = self.initial_interp(env, extra);
        if !matches(&h, &self.initial, env, self.initial.at)? {
            return Err(SoundnessError::InitialMismatch);
        }
        let entry = self.initial.at.label().expect("initial state at a label");
        let (final_env, at) = match run_program(program, env.clone(), entry, stop, fuel) {
            Ok(r) => match r.last {
                Next::Label(l) => (Some(r.env), At::Label(l)),
                Next::Halt => (Some(r.env), At::Halted(0)),
            },
            Err(ExecError::AssertFailed { block, .. }) => (None, At::AssertFailed(block)),
            Err(e) => return Err(SoundnessError::Run(e)),
        };
        for (k, leaf) in self.leaves.iter().enumerate() {
            let ok = match (&final_env, at) {
                (Some(fe), At::Halted(_)) => match leaf.at {
                    At::Halted(l) => matches(&h, leaf, fe, At::Halted(l))?,
                    _ => false,
                },
                (Some(fe), _) => matches(&h, leaf, fe, at)?,
                (None, _) => {
                    leaf.at == at && {
                        let hx = extend_interp(&h, leaf)?;
                        let mut all = true;
                        for c in &leaf.path {
                            all &= eval_bool(c, &hx)?;
                        }
                        all
                    }
                }
            };
            if ok {
                return Ok(Some(k));
            }
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SoundnessError {
    #[error("the initial state does not match the concrete state")]
    InitialMismatch,
    #[error("concrete run failed: {0}")]
    Run(ExecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Convenience for tests and tools: the value of a word symbol.
pub fn word_value(h: &Interp, s: &Symbol) -> Option<u64> {
    h.get(s).and_then(Value::word).map(|w| w.bits())
}
