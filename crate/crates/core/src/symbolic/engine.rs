//! The worklist driver: step, prune, simplify and abbreviate until every
//! state reaches an endpoint or leaves the program.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use super::simplify::{shallow_type, simplify_exp, ProofCache, Simplifier};
use super::{init_state, At, ExecStats, SymbolicState, SymbolicStructure, SymexError};
use crate::bir::{BirType, End, Exp, PredOp, Program, Stmt, Target, Var};
use crate::smt::{Obligation, Solver, Verdict};

/// Tunable limits and heuristics of an execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Heuristics {
    /// Extra executions of a label allowed on one path; 0 admits loop-free
    /// paths only.
    pub unroll: u32,
    pub max_steps: u64,
    pub max_states: u64,
    /// Abbreviate expressions with more nodes than this; `None` never does.
    pub abbrev_threshold: Option<u64>,
    /// Abbreviate memory after every block that stores.
    pub abbrev_stores: bool,
    /// Distinct targets tried for a computed jump before giving up.
    pub max_targets: usize,
    /// Ask the solver about load and store addresses the syntax cannot relate.
    pub solver_simplify: bool,
}

impl Default for Heuristics {
    fn default() -> Heuristics {
        Heuristics {
            unroll: 0,
            max_steps: 100_000,
            max_states: 100_000,
            abbrev_threshold: Some(64),
            abbrev_stores: true,
            max_targets: 16,
            solver_simplify: true,
        }
    }
}

pub struct Engine<'a> {
    pub program: &'a Program,
    pub solver: &'a dyn Solver,
    pub heuristics: Heuristics,
    /// Variables given initial symbols besides those of the program.
    pub extra_vars: BTreeSet<Var>,
    pub stats: ExecStats,
    next_abbrev: u64,
    cache: ProofCache,
}

/// Runs [`Engine::execute`] with a fresh engine.
pub fn execute(
    program: &Program,
    solver: &dyn Solver,
    heuristics: &Heuristics,
    entry: u64,
    endpoints: &BTreeSet<u64>,
    forbidden: &BTreeSet<u64>,
    pre: &Exp,
) -> Result<SymbolicStructure, SymexError> {
    Engine::new(program, solver, heuristics.clone()).execute(entry, endpoints, forbidden, pre)
}

fn subst(st: &SymbolicState, e: &Exp) -> Arc<Exp> {
    Arc::new(e.clone()).subst_vars(&|v| st.env.get(v).cloned())
}

impl<'a> Engine<'a> {
    pub fn new(program: &'a Program, solver: &'a dyn Solver, heuristics: Heuristics) -> Engine<'a> {
        Engine {
            program,
            solver,
            heuristics,
            extra_vars: BTreeSet::new(),
            stats: ExecStats::default(),
            next_abbrev: 0,
            cache: ProofCache::default(),
        }
    }

    pub fn simplify(&mut self, st: &SymbolicState, e: &Arc<Exp>) -> Arc<Exp> {
        let solver = self.heuristics.solver_simplify.then_some(self.solver);
        Simplifier {
            state: st,
            solver,
            cache: Some(&self.cache),
            stats: &mut self.stats,
        }
        .simplify(e)
    }

    /// Every environment entry and path conjunct simplified.
    pub fn simplify_state(&mut self, st: &SymbolicState) -> SymbolicState {
        let mut out = st.clone();
        out.env = st
            .env
            .iter()
            .map(|(v, e)| (v.clone(), self.simplify(st, e)))
            .collect();
        out.path = st.path.iter().map(|c| self.simplify(st, c)).collect();
        out.path
            .retain(|c| !c.as_const().is_some_and(|w| w.is_true()));
        out
    }

    /// `st` with `cond` added to its path condition, or `None` when the
    /// condition simplifies to false.
    fn assume(&mut self, st: &SymbolicState, cond: Exp) -> Option<SymbolicState> {
        let c = self.simplify(st, &Arc::new(cond));
        match c.as_const() {
            Some(w) if w.is_true() => Some(st.clone()),
            Some(_) => None,
            None => {
                let mut out = st.clone();
                out.path.push(c);
                Some(out)
            }
        }
    }

    /// False only when the solver proves the path condition unsatisfiable.
    pub fn feasible(&mut self, st: &SymbolicState) -> Result<bool, SymexError> {
        if st
            .path
            .iter()
            .any(|c| c.as_const().is_some_and(|w| !w.is_true()))
        {
            return Ok(false);
        }
        if st.path.is_empty() {
            return Ok(true);
        }
        let ob =
            Obligation::feasibility(st.expanded_path(), Exp::tt(), &format!("path to {}", st.at));
        self.stats.feasibility_queries += 1;
        Ok(match self.solver.check(&ob)? {
            Verdict::Unsat => false,
            Verdict::Sat(_) => true,
            Verdict::Unknown(_) => {
                self.stats.unknown_verdicts += 1;
                true
            }
        })
    }

    /// Drops the states whose path condition is proven unsatisfiable.
    pub fn prune_infeasible(
        &mut self,
        states: Vec<SymbolicState>,
    ) -> Result<Vec<SymbolicState>, SymexError> {
        let mut out = Vec::with_capacity(states.len());
        for st in states {
            if self.feasible(&st)? {
                out.push(st);
            } else {
                self.stats.pruned += 1;
            }
        }
        Ok(out)
    }

    /// Feasible constant values of a computed target, each with the state
    /// that assumes it.
    fn resolve_targets(
        &mut self,
        st: &SymbolicState,
        target: Arc<Exp>,
        block: u64,
    ) -> Result<Vec<SymbolicState>, SymexError> {
        if let Some(w) = target.as_const() {
            let mut out = st.clone();
            out.at = At::Label(w.bits());
            return Ok(vec![out]);
        }
        let full = st.expand(&target);
        let pinned = st.base_constants();
        if !pinned.is_empty() {
            if let Some(w) = simplify_exp(&full.subst_syms(&|s| pinned.get(s).cloned())).as_const()
            {
                let mut out = st.clone();
                out.at = At::Label(w.bits());
                return Ok(vec![out]);
            }
        }
        let hyps = st.expanded_path();
        let mut found: Vec<u64> = Vec::new();
        loop {
            if found.len() >= self.heuristics.max_targets {
                return Err(SymexError::IndirectTargetUnbounded {
                    block,
                    reason: format!("more than {} targets", self.heuristics.max_targets),
                });
            }
            let mut h = hyps.clone();
            h.extend(
                found
                    .iter()
                    .map(|&v| Exp::pred(PredOp::NotEqual, full.clone(), Exp::c64(v))),
            );
            let mut ob = Obligation::feasibility(h, Exp::tt(), &format!("target of {block:#x}"));
            ob.observe.push((*full).clone());
            self.stats.target_queries += 1;
            match self.solver.check(&ob)? {
                Verdict::Sat(m) => {
                    let v = m.observed[0].word().expect("word target").bits();
                    found.push(v);
                }
                Verdict::Unsat => break,
                Verdict::Unknown(reason) => {
                    self.stats.unknown_verdicts += 1;
                    return Err(SymexError::IndirectTargetUnbounded { block, reason });
                }
            }
        }
        found.sort_unstable();
        let mut out = Vec::new();
        for v in found {
            if let Some(mut s) = self.assume(st, Exp::eq(target.clone(), Exp::c64(v))) {
                s.at = At::Label(v);
                out.push(s);
            }
        }
        Ok(out)
    }

    fn jump(
        &mut self,
        mut st: SymbolicState,
        t: &Target,
        block: u64,
    ) -> Result<Vec<SymbolicState>, SymexError> {
        match t {
            Target::Label(l) => {
                st.at = At::Label(*l);
                Ok(vec![st])
            }
            Target::Exp(e) => {
                let target = subst(&st, e);
                let target = self.simplify(&st, &target);
                self.resolve_targets(&st, target, block)
            }
        }
    }

    fn fresh_name(&mut self) -> String {
        let n = self.next_abbrev;
        self.next_abbrev += 1;
        format!("ab{n}")
    }

    /// Applies the abbreviation heuristics to one state.
    pub fn abbreviate_large(&mut self, mut st: SymbolicState) -> Result<SymbolicState, SymexError> {
        let is_leaf = |e: &Exp| matches!(e, Exp::Sym(_) | Exp::Const(_));
        if self.heuristics.abbrev_stores {
            let stores: Vec<Arc<Exp>> = st
                .env
                .values()
                .filter(|e| shallow_type(e) == BirType::Mem && !is_leaf(e))
                .cloned()
                .collect();
            for e in stores {
                let name = self.fresh_name();
                st = st.abbreviate(&name, &e)?;
                self.stats.abbreviations += 1;
            }
        }
        if let Some(limit) = self.heuristics.abbrev_threshold {
            let large: Vec<Arc<Exp>> = st
                .env
                .values()
                .chain(st.path.iter())
                .filter(|e| !is_leaf(e) && e.size_exceeds(limit))
                .cloned()
                .collect();
            for e in large {
                let present = st
                    .env
                    .values()
                    .chain(st.path.iter())
                    .any(|x| Arc::ptr_eq(x, &e));
                if present {
                    let name = self.fresh_name();
                    st = st.abbreviate(&name, &e)?;
                    self.stats.abbreviations += 1;
                }
            }
        }
        Ok(st)
    }

    /// Successors of a state at a block label, already pruned, simplified
    /// and abbreviated.
    pub fn step_block(&mut self, st: &SymbolicState) -> Result<Vec<SymbolicState>, SymexError> {
        let label = match st.at {
            At::Label(l) => l,
            _ => return Ok(Vec::new()),
        };
        let block = self
            .program
            .block(label)
            .ok_or(SymexError::EntryNotInProgram(label))?;
        let mut first = st.clone();
        *first.visits.entry(label).or_insert(0) += 1;
        let mut live = vec![first];
        let mut out = Vec::new();
        for stmt in &block.stmts {
            let mut next = Vec::with_capacity(live.len());
            for mut s in live {
                match stmt {
                    Stmt::Assign(v, e) => {
                        let value = subst(&s, e);
                        let value = self.simplify(&s, &value);
                        s.env.insert(v.clone(), value);
                        next.push(s);
                    }
                    Stmt::Assert(c) => {
                        let c = subst(&s, c);
                        let c = self.simplify(&s, &c);
                        let fail = self.assume(&s, Exp::not(c.clone()));
                        let pass = self.assume(&s, (*c).clone());
                        let forked = fail.is_some() && pass.is_some();
                        if let Some(mut f) = fail {
                            f.at = At::AssertFailed(label);
                            if !forked || self.feasible(&f)? {
                                out.push(f);
                            } else {
                                self.stats.pruned += 1;
                            }
                        }
                        if let Some(p) = pass {
                            if !forked || self.feasible(&p)? {
                                next.push(p);
                            } else {
                                self.stats.pruned += 1;
                            }
                        }
                    }
                }
            }
            live = next;
        }
        for mut s in live {
            match &block.end {
                End::Halt => {
                    s.at = At::Halted(label);
                    out.push(s);
                }
                End::Jmp(t) => out.extend(self.jump(s, t, label)?),
                End::CJmp(c, t, f) => {
                    let c = subst(&s, c);
                    let c = self.simplify(&s, &c);
                    if let Some(w) = c.as_const() {
                        out.extend(self.jump(s, if w.is_true() { t } else { f }, label)?);
                        continue;
                    }
                    let taken = self.assume(&s, (*c).clone());
                    let fallen = self.assume(&s, Exp::not(c.clone()));
                    for (branch, target) in [(taken, t), (fallen, f)] {
                        if let Some(b) = branch {
                            if self.feasible(&b)? {
                                out.extend(self.jump(b, target, label)?);
                            } else {
                                self.stats.pruned += 1;
                            }
                        }
                    }
                }
            }
        }
        out.into_iter().map(|s| self.abbreviate_large(s)).collect()
    }

    /// Explores every path from `entry` under `pre` until it reaches an
    /// endpoint, halts, fails an assertion or leaves the program.
    pub fn execute(
        &mut self,
        entry: u64,
        endpoints: &BTreeSet<u64>,
        forbidden: &BTreeSet<u64>,
        pre: &Exp,
    ) -> Result<SymbolicStructure, SymexError> {
        if self.program.block(entry).is_none() {
            return Err(SymexError::EntryNotInProgram(entry));
        }
        if endpoints.is_empty() {
            return Err(SymexError::NoEndpoints);
        }
        let mut vars = self.program.vars();
        vars.extend(self.extra_vars.iter().cloned());
        let initial = init_state(&vars, entry, pre)?;
        let initial = self.simplify_state(&initial);
        let mut stack = vec![initial.clone()];
        let mut leaves = Vec::new();
        let mut labels = BTreeSet::new();
        let exhausted = |reason: String, st: &SymbolicState, stack: &[SymbolicState]| {
            let mut frontier: Vec<u64> = stack.iter().filter_map(|s| s.at.label()).collect();
            frontier.extend(st.at.label());
            frontier.sort_unstable();
            frontier.dedup();
            SymexError::BudgetExhausted { reason, frontier }
        };
        while let Some(st) = stack.pop() {
            let label = st.at.label().expect("frontier states sit at labels");
            if self.stats.steps >= self.heuristics.max_steps {
                return Err(exhausted(
                    format!("{} steps", self.heuristics.max_steps),
                    &st,
                    &stack,
                ));
            }
            let seen = st.visits.get(&label).copied().unwrap_or(0);
            if seen > self.heuristics.unroll {
                return Err(exhausted(
                    format!(
                        "label {label:#x} revisited beyond unroll bound {}",
                        self.heuristics.unroll
                    ),
                    &st,
                    &stack,
                ));
            }
            labels.insert(label);
            self.stats.steps += 1;
            let mut succs = self.step_block(&st)?;
            self.stats.states += succs.len() as u64;
            if self.stats.states > self.heuristics.max_states {
                return Err(exhausted(
                    format!("{} states", self.heuristics.max_states),
                    &st,
                    &stack,
                ));
            }
            succs.sort_by_key(|s| std::cmp::Reverse(s.at));
            for s in succs {
                match s.at {
                    At::Label(l) if endpoints.contains(&l) => leaves.push(s),
                    At::Label(l) if forbidden.contains(&l) => {
                        return Err(SymexError::ForbiddenLabelReached {
                            label: l,
                            state: Box::new(s),
                        })
                    }
                    At::Label(l) if self.program.block(l).is_some() => stack.push(s),
                    _ => leaves.push(s),
                }
            }
        }
        leaves.sort_by_key(|s: &SymbolicState| s.at);
        Ok(SymbolicStructure {
            initial,
            labels,
            leaves,
            stats: self.stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bir::{BinOp, Block, Interp, Symbol, Value, Word};
    use crate::isa::Reg;
    use crate::lifter::gpr_var;
    use crate::smt::{NoSolver, ProcessSolver};
    use crate::symbolic::{matches, BirEnv};
    use std::time::Duration;

    fn z3() -> ProcessSolver {
        let program = std::env::var("RVBIR_SOLVER").unwrap_or_else(|_| "z3".into());
        ProcessSolver::z3(&program, Duration::from_secs(30), 2)
    }

    fn x(i: u32) -> Var {
        gpr_var(Reg::from_bits(i))
    }

    fn block(label: u64, stmts: Vec<Stmt>, end: End) -> Block {
        Block {
            label,
            text: String::new(),
            stmts,
            end,
        }
    }

    fn incr() -> Program {
        Program::new(
            vec![block(
                0x10488,
                vec![Stmt::Assign(
                    x(10),
                    Exp::plus(Exp::den(&x(10)), Exp::c64(1)),
                )],
                End::Jmp(Target::Label(0x1048c)),
            )],
            BTreeSet::from([0x1048c]),
        )
        .unwrap()
    }

    fn pre_x10() -> Symbol {
        Symbol::new("pre_x10", BirType::Imm64)
    }

    #[test]
    fn incr_structure() {
        let pre = Exp::eq(Exp::den(&x(10)), Exp::sym(&pre_x10()));
        let st = execute(
            &incr(),
            &NoSolver,
            &Heuristics::default(),
            0x10488,
            &BTreeSet::from([0x1048c]),
            &BTreeSet::new(),
            &pre,
        )
        .unwrap();
        assert_eq!(st.leaves.len(), 1);
        let leaf = &st.leaves[0];
        assert_eq!(leaf.at, At::Label(0x1048c));
        let s_x10 = Symbol::new("s_x10", BirType::Imm64);
        assert_eq!(*leaf.env[&x(10)], Exp::plus(Exp::sym(&s_x10), Exp::c64(1)));
        assert_eq!(
            leaf.path_cond(),
            Exp::eq(Exp::sym(&s_x10), Exp::sym(&pre_x10()))
        );
        assert_eq!(st.labels, BTreeSet::from([0x10488]));
    }

    #[test]
    fn matches_definition() {
        let vars = BTreeSet::from([x(10)]);
        let st = init_state(&vars, 0x10488, &Exp::tt()).unwrap();
        let mut h = Interp::default();
        h.set(
            &Symbol::new("s_x10", BirType::Imm64),
            Value::Word(Word::new(64, 41)),
        );
        let mut env = BirEnv::default();
        env.set(&x(10), Value::Word(Word::new(64, 41)));
        assert!(matches(&h, &st, &env, At::Label(0x10488)).unwrap());
        env.set(&x(10), Value::Word(Word::new(64, 40)));
        assert!(!matches(&h, &st, &env, At::Label(0x10488)).unwrap());
        assert!(st.path.is_empty());
    }

    #[test]
    fn naming_is_deterministic() {
        let vars = BTreeSet::from([x(10), x(11)]);
        let a = init_state(&vars, 0, &Exp::tt()).unwrap();
        let b = init_state(&vars, 0, &Exp::tt()).unwrap();
        assert_eq!(a, b);
    }

    fn diamond() -> Program {
        // 0x0: if x10 == 0 goto 0x8 else 0x4; 0x4: x11 := 1; 0x8: x11 := x11 + 2; exit 0xc
        Program::new(
            vec![
                block(
                    0x0,
                    vec![],
                    End::CJmp(
                        Exp::eq(Exp::den(&x(10)), Exp::c64(0)),
                        Target::Label(0x8),
                        Target::Label(0x4),
                    ),
                ),
                block(
                    0x4,
                    vec![Stmt::Assign(x(11), Exp::c64(1))],
                    End::Jmp(Target::Label(0x8)),
                ),
                block(
                    0x8,
                    vec![Stmt::Assign(
                        x(11),
                        Exp::plus(Exp::den(&x(11)), Exp::c64(2)),
                    )],
                    End::Jmp(Target::Label(0xc)),
                ),
            ],
            BTreeSet::from([0xc]),
        )
        .unwrap()
    }

    #[test]
    fn diamond_gives_complementary_leaves() {
        let solver = z3();
        let st = execute(
            &diamond(),
            &solver,
            &Heuristics::default(),
            0,
            &BTreeSet::from([0xc]),
            &BTreeSet::new(),
            &Exp::tt(),
        )
        .unwrap();
        assert_eq!(st.leaves.len(), 2);
        // both concrete branch outcomes are matched by exactly one leaf
        for v in [0u64, 7] {
            let mut env = BirEnv::default();
            env.set(&x(10), Value::Word(Word::new(64, v)));
            env.set(&x(11), Value::Word(Word::new(64, 100)));
            let hits: Vec<usize> = (0..2)
                .filter(|&k| {
                    let single = SymbolicStructure {
                        leaves: vec![st.leaves[k].clone()],
                        ..st.clone()
                    };
                    single
                        .check_run(
                            &diamond(),
                            &env,
                            &Interp::default(),
                            &BTreeSet::from([0xc]),
                            10,
                        )
                        .unwrap()
                        .is_some()
                })
                .collect();
            assert_eq!(hits.len(), 1, "value {v}");
        }
        let c0 = st.leaves[0].path_cond();
        let c1 = st.leaves[1].path_cond();
        let negated = crate::symbolic::simplify_exp(&Arc::new(Exp::not(c0)));
        assert_eq!(*negated, c1);
    }

    #[test]
    fn infeasible_branch_is_pruned() {
        let solver = z3();
        let pre = Exp::eq(Exp::den(&x(10)), Exp::c64(5));
        let program = diamond();
        let mut e = Engine::new(&program, &solver, Heuristics::default());
        let st = e
            .execute(0, &BTreeSet::from([0xc]), &BTreeSet::new(), &pre)
            .unwrap();
        assert_eq!(st.leaves.len(), 1);
        assert_eq!(st.stats.pruned, 1);
        assert_eq!(st.labels, BTreeSet::from([0, 4, 8]));
    }

    #[test]
    fn literal_conditions_prune_syntactically() {
        let p = Program::new(
            vec![block(
                0,
                vec![],
                End::CJmp(Exp::tt(), Target::Label(4), Target::Label(8)),
            )],
            BTreeSet::from([4, 8]),
        )
        .unwrap();
        let st = execute(
            &p,
            &NoSolver,
            &Heuristics::default(),
            0,
            &BTreeSet::from([4, 8]),
            &BTreeSet::new(),
            &Exp::tt(),
        )
        .unwrap();
        assert_eq!(st.leaves.len(), 1);
        assert_eq!(st.leaves[0].at, At::Label(4));
    }

    #[test]
    fn computed_jump_with_known_target() {
        let solver = z3();
        let p = Program::new(
            vec![block(
                0x10000,
                vec![],
                End::Jmp(Target::Exp(Exp::den(&x(1)))),
            )],
            BTreeSet::from([0x10500, 0x10600]),
        )
        .unwrap();
        let pre = Exp::eq(Exp::den(&x(1)), Exp::c64(0x10500));
        let ends = BTreeSet::from([0x10500, 0x10600]);
        let st = execute(
            &p,
            &solver,
            &Heuristics::default(),
            0x10000,
            &ends,
            &BTreeSet::new(),
            &pre,
        )
        .unwrap();
        assert_eq!(st.leaves.len(), 1);
        assert_eq!(st.leaves[0].at, At::Label(0x10500));

        let two = Exp::pred(
            PredOp::LessThanUnsigned,
            Exp::bin(BinOp::Minus, Exp::den(&x(1)), Exp::c64(0x10500)),
            Exp::c64(2),
        );
        let st = execute(
            &p,
            &solver,
            &Heuristics::default(),
            0x10000,
            &ends,
            &BTreeSet::new(),
            &two,
        )
        .unwrap();
        let ats: Vec<At> = st.leaves.iter().map(|l| l.at).collect();
        assert_eq!(ats, vec![At::Label(0x10500), At::Label(0x10501)]);

        let err = execute(
            &p,
            &NoSolver,
            &Heuristics::default(),
            0x10000,
            &ends,
            &BTreeSet::new(),
            &two,
        );
        assert!(matches!(
            err,
            Err(SymexError::IndirectTargetUnbounded { .. })
        ));
        let err = execute(
            &p,
            &solver,
            &Heuristics::default(),
            0x10000,
            &ends,
            &BTreeSet::new(),
            &Exp::tt(),
        );
        assert!(matches!(
            err,
            Err(SymexError::IndirectTargetUnbounded { .. })
        ));
    }

    fn looping() -> Program {
        // 0x0: x10 := x10 - 1; if x10 != 0 goto 0x0 else 0x4
        Program::new(
            vec![block(
                0,
                vec![Stmt::Assign(
                    x(10),
                    Exp::bin(BinOp::Minus, Exp::den(&x(10)), Exp::c64(1)),
                )],
                End::CJmp(
                    Exp::pred(PredOp::NotEqual, Exp::den(&x(10)), Exp::c64(0)),
                    Target::Label(0),
                    Target::Label(4),
                ),
            )],
            BTreeSet::from([4]),
        )
        .unwrap()
    }

    #[test]
    fn loops_exhaust_the_unroll_bound() {
        let solver = z3();
        let ends = BTreeSet::from([4]);
        let r = execute(
            &looping(),
            &solver,
            &Heuristics::default(),
            0,
            &ends,
            &BTreeSet::new(),
            &Exp::tt(),
        );
        assert!(matches!(r, Err(SymexError::BudgetExhausted { .. })));
        let pre = Exp::pred(PredOp::LessOrEqualUnsigned, Exp::den(&x(10)), Exp::c64(3));
        let pre = Exp::and(
            pre,
            Exp::pred(PredOp::NotEqual, Exp::den(&x(10)), Exp::c64(0)),
        );
        let h = Heuristics {
            unroll: 3,
            ..Heuristics::default()
        };
        let st = execute(&looping(), &solver, &h, 0, &ends, &BTreeSet::new(), &pre).unwrap();
        assert_eq!(st.leaves.len(), 3);
    }

    #[test]
    fn forbidden_labels_are_errors() {
        let r = execute(
            &diamond(),
            &NoSolver,
            &Heuristics::default(),
            0,
            &BTreeSet::from([0xc]),
            &BTreeSet::from([4]),
            &Exp::tt(),
        );
        assert!(matches!(
            r,
            Err(SymexError::ForbiddenLabelReached { label: 4, .. })
        ));
    }

    #[test]
    fn budget_limits() {
        let h = Heuristics {
            max_steps: 1,
            ..Heuristics::default()
        };
        let r = execute(
            &diamond(),
            &NoSolver,
            &h,
            0,
            &BTreeSet::from([0xc]),
            &BTreeSet::new(),
            &Exp::tt(),
        );
        assert!(matches!(r, Err(SymexError::BudgetExhausted { .. })));
        let r = execute(
            &diamond(),
            &NoSolver,
            &Heuristics::default(),
            0x40,
            &BTreeSet::from([0xc]),
            &BTreeSet::new(),
            &Exp::tt(),
        );
        assert!(matches!(r, Err(SymexError::EntryNotInProgram(0x40))));
    }

    #[test]
    fn abbreviation_round_trip() {
        let vars = BTreeSet::from([x(10), x(11)]);
        let st = init_state(&vars, 0, &Exp::tt()).unwrap();
        let s10 = st.env[&x(10)].clone();
        let big = Arc::new(Exp::bin(
            BinOp::Mult,
            s10.clone(),
            Exp::plus(s10.clone(), Exp::c64(3)),
        ));
        let mut st2 = st.clone();
        st2.env.insert(x(11), big.clone());
        st2.env
            .insert(x(10), Arc::new(Exp::plus(big.clone(), Exp::c64(1))));
        let a = st2.abbreviate("ab0", &big).unwrap();
        assert_eq!(
            *a.env[&x(11)],
            Exp::sym(&Symbol::new("ab0", BirType::Imm64))
        );
        let top = a.env[&x(10)].clone();
        let b = a.abbreviate("ab1", &top).unwrap();
        for v in [x(10), x(11)] {
            assert_eq!(b.expand(&b.env[&v]), st2.env[&v]);
        }
        assert!(matches!(
            b.abbreviate("ab1", &s10),
            Err(SymexError::NameClash(_))
        ));
        // abbreviating a lone symbol keeps the meaning
        let c = st.abbreviate("ab0", &s10).unwrap();
        assert_eq!(c.expand(&c.env[&x(10)]), s10);
    }

    #[test]
    fn rename_strengthen_weaken() {
        let solver = z3();
        let vars = BTreeSet::from([x(10)]);
        let s = Symbol::new("s_x10", BirType::Imm64);
        let st = init_state(&vars, 0, &Exp::eq(Exp::den(&x(10)), Exp::c64(1))).unwrap();
        let t = Symbol::new("t", BirType::Imm64);
        let r = st
            .rename_symbols(&BTreeMap::from([(s.clone(), t.clone())]))
            .unwrap();
        assert_eq!(*r.env[&x(10)], Exp::sym(&t));
        let back = r
            .rename_symbols(&BTreeMap::from([(t.clone(), s.clone())]))
            .unwrap();
        assert_eq!(back, st);
        let q = Symbol::new("q", BirType::Imm64);
        assert!(matches!(
            st.rename_symbols(&BTreeMap::from([
                (s.clone(), q.clone()),
                (q.clone(), q.clone())
            ])),
            Err(SymexError::NotBijection)
        ));

        let stronger = st
            .strengthen(Exp::pred(
                PredOp::LessThanUnsigned,
                Exp::sym(&s),
                Exp::c64(100),
            ))
            .unwrap();
        assert_eq!(stronger.path.len(), 2);
        let weak = stronger
            .weaken(Exp::eq(Exp::sym(&s), Exp::c64(1)), &solver)
            .unwrap();
        assert_eq!(weak.path.len(), 1);
        assert!(matches!(
            stronger.weaken(Exp::eq(Exp::sym(&s), Exp::c64(2)), &solver),
            Err(SymexError::WeakenNotEntailed(_))
        ));
    }

    use std::collections::BTreeMap;
}
