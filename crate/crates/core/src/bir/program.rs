//! Blocks, programs and the concrete block interpreter.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::eval::{eval, BirEnv, EvalError, Value};
use super::{type_of, BirType, Exp, TypeError, Var};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign(Var, Exp),
    /// Aborts execution when the Imm1 condition is false.
    Assert(Exp),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    Label(u64),
    /// Computed 64-bit target.
    Exp(Exp),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum End {
    Jmp(Target),
    CJmp(Exp, Target, Target),
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    pub label: u64,
    /// Human-readable description, e.g. the source instruction.
    pub text: String,
    pub stmts: Vec<Stmt>,
    pub end: End,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("duplicate block label {0:#x}")]
    DuplicateLabel(u64),
    #[error("block {label:#x}: {source}")]
    Type { label: u64, source: TypeError },
    #[error("block {0:#x}: assignment type differs from variable type")]
    AssignType(u64),
    #[error("block {0:#x}: condition is not Imm1")]
    ConditionType(u64),
    #[error("block {0:#x}: jump target is not Imm64")]
    TargetType(u64),
    #[error("variable {0} used with two types")]
    VarType(String),
    #[error("block {block:#x} jumps to unknown label {target:#x}")]
    DanglingLabel { block: u64, target: u64 },
}

/// An ordered list of blocks with label lookup and declared exit labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    blocks: Vec<Block>,
    index: HashMap<u64, usize>,
    pub exits: BTreeSet<u64>,
}

impl Program {
    pub fn new(blocks: Vec<Block>, exits: BTreeSet<u64>) -> Result<Program, ProgramError> {
        let mut index = HashMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if index.insert(b.label, i).is_some() {
                return Err(ProgramError::DuplicateLabel(b.label));
            }
        }
        Ok(Program {
            blocks,
            index,
            exits,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, label: u64) -> Option<&Block> {
        self.index.get(&label).map(|&i| &self.blocks[i])
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// All variables mentioned, in name order.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        let mut add = |e: &Exp| out.extend(e.vars());
        for b in &self.blocks {
            for s in &b.stmts {
                match s {
                    Stmt::Assign(v, e) => {
                        add(&Exp::Den(v.clone()));
                        add(e);
                    }
                    Stmt::Assert(e) => add(e),
                }
            }
            for t in targets(&b.end) {
                if let Target::Exp(e) = t {
                    add(e);
                }
            }
            if let End::CJmp(c, _, _) = &b.end {
                add(c);
            }
        }
        out
    }

    /// Checks typing, unique variable types, and that constant targets are
    /// blocks or exits.
    pub fn check(&self) -> Result<(), ProgramError> {
        let mut names: HashMap<&str, BirType> = HashMap::new();
        let vars = self.vars();
        for v in &vars {
            if let Some(t) = names.insert(&v.name, v.ty) {
                if t != v.ty {
                    return Err(ProgramError::VarType(v.name.to_string()));
                }
            }
        }
        for b in &self.blocks {
            let ty = |e: &Exp| {
                type_of(e).map_err(|source| ProgramError::Type {
                    label: b.label,
                    source,
                })
            };
            for s in &b.stmts {
                match s {
                    Stmt::Assign(v, e) => {
                        if ty(e)? != v.ty {
                            return Err(ProgramError::AssignType(b.label));
                        }
                    }
                    Stmt::Assert(e) => {
                        if ty(e)? != BirType::Imm1 {
                            return Err(ProgramError::ConditionType(b.label));
                        }
                    }
                }
            }
            if let End::CJmp(c, _, _) = &b.end {
                if ty(c)? != BirType::Imm1 {
                    return Err(ProgramError::ConditionType(b.label));
                }
            }
            for t in targets(&b.end) {
                match t {
                    Target::Label(l) => {
                        if self.block(*l).is_none() && !self.exits.contains(l) {
                            return Err(ProgramError::DanglingLabel {
                                block: b.label,
                                target: *l,
                            });
                        }
                    }
                    Target::Exp(e) => {
                        if ty(e)? != BirType::Imm64 {
                            return Err(ProgramError::TargetType(b.label));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn targets(end: &End) -> Vec<&Target> {
    match end {
        End::Jmp(t) => vec![t],
        End::CJmp(_, t, f) => vec![t, f],
        End::Halt => vec![],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Next {
    Label(u64),
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("assertion {index} of block {block:#x} failed")]
    AssertFailed { block: u64, index: usize },
    #[error("jump target {0:#x} is neither a block nor an exit")]
    IndirectTargetUnresolved(u64),
    #[error("no block at {0:#x}")]
    NoBlock(u64),
    #[error("fuel exhausted at {0:#x}")]
    FuelExhausted(u64),
    #[error("block {block:#x}: {source}")]
    Eval { block: u64, source: EvalError },
}

fn resolve(
    program: Option<&Program>,
    block: u64,
    env: &BirEnv,
    t: &Target,
) -> Result<u64, ExecError> {
    match t {
        Target::Label(l) => Ok(*l),
        Target::Exp(e) => {
            let v = eval(e, env)
                .map_err(|source| ExecError::Eval { block, source })?
                .word()
                .ok_or(ExecError::Eval {
                    block,
                    source: EvalError::TypeMismatch,
                })?
                .bits();
            match program {
                Some(p) if p.block(v).is_none() && !p.exits.contains(&v) => {
                    Err(ExecError::IndirectTargetUnresolved(v))
                }
                _ => Ok(v),
            }
        }
    }
}

fn exec(
    program: Option<&Program>,
    block: &Block,
    env: &BirEnv,
) -> Result<(BirEnv, Next), ExecError> {
    let err = |source| ExecError::Eval {
        block: block.label,
        source,
    };
    let mut env = env.clone();
    for (index, s) in block.stmts.iter().enumerate() {
        match s {
            Stmt::Assign(v, e) => {
                let value = eval(e, &env).map_err(err)?;
                env.set(v, value);
            }
            Stmt::Assert(e) => {
                let ok = eval(e, &env)
                    .map_err(err)?
                    .word()
                    .is_some_and(|w| w.is_true());
                if !ok {
                    return Err(ExecError::AssertFailed {
                        block: block.label,
                        index,
                    });
                }
            }
        }
    }
    let next = match &block.end {
        End::Halt => Next::Halt,
        End::Jmp(t) => Next::Label(resolve(program, block.label, &env, t)?),
        End::CJmp(c, t, f) => {
            let cond = eval(c, &env).map_err(err)?;
            let taken = matches!(cond, Value::Word(w) if w.is_true());
            Next::Label(resolve(
                program,
                block.label,
                &env,
                if taken { t } else { f },
            )?)
        }
    };
    Ok((env, next))
}

/// Executes one block: statements in order, each seeing earlier writes.
/// Computed targets must name a block or an exit of `program`.
pub fn exec_block(
    program: &Program,
    block: &Block,
    env: &BirEnv,
) -> Result<(BirEnv, Next), ExecError> {
    exec(Some(program), block, env)
}

/// Like [`exec_block`] for a block outside any program; computed targets
/// are returned as evaluated.
pub fn exec_block_open(block: &Block, env: &BirEnv) -> Result<(BirEnv, Next), ExecError> {
    exec(None, block, env)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub env: BirEnv,
    pub last: Next,
    pub steps: u64,
}

/// Runs from `entry` until a label in `stop` (or a program exit) or Halt.
pub fn run_program(
    program: &Program,
    mut env: BirEnv,
    entry: u64,
    stop: &BTreeSet<u64>,
    fuel: u64,
) -> Result<RunResult, ExecError> {
    let mut at = entry;
    let mut steps = 0;
    loop {
        if stop.contains(&at) || (program.exits.contains(&at) && program.block(at).is_none()) {
            return Ok(RunResult {
                env,
                last: Next::Label(at),
                steps,
            });
        }
        if steps == fuel {
            return Err(ExecError::FuelExhausted(at));
        }
        let block = program.block(at).ok_or(ExecError::NoBlock(at))?;
        let (next_env, next) = exec_block(program, block, &env)?;
        env = next_env;
        steps += 1;
        match next {
            Next::Label(l) => at = l,
            Next::Halt => {
                return Ok(RunResult {
                    env,
                    last: Next::Halt,
                    steps,
                })
            }
        }
    }
}
