//! Commands behind the `rvbir` binary: lift a listing, verify or execute a
//! contract, run the simulation suite and benchmark a corpus directory.
//!
//! Exit codes: 0 verified or success, 1 refuted or a failed check, 2 bad
//! input or an internal error, 3 undecided.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rvbir::contracts::{
    prepare, report, verify, ContractError, EvidenceKind, LeafOutcome, PrepareError, ReportStatus,
    RiscvContract, RiscvReport, VerifyError, VerifyOptions,
};
use rvbir::disasm::{parse_objdump, slice, DisasmError};
use rvbir::lifter::{
    check_all_kinds, lift_instr, lift_off_by_one_imm, lift_slice, LiftError, SimReport,
};
use rvbir::smt::{NoSolver, ProcessSolver, Solver};
use rvbir::symbolic::{execute, ExecStats, Heuristics, StructureDump, SymexError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version of every JSON document the binary prints.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REFUTED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Disasm(#[from] DisasmError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Symex(#[from] SymexError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("configuration: {0}")]
    Config(String),
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    /// Solver executable, or `none` to decide nothing.
    pub solver: String,
    /// Per-obligation timeout in seconds.
    pub timeout_secs: u64,
    /// Overrides the contract's unroll bound when set.
    pub unroll: Option<u32>,
    pub max_states: u64,
    /// Node count above which expressions are abbreviated; 0 never does.
    pub abbrev_threshold: u64,
    /// Solver processes used in parallel.
    pub jobs: usize,
    pub format: Format,
    pub dump_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let h = Heuristics::default();
        RunConfig {
            solver: "z3".into(),
            timeout_secs: 30,
            unroll: None,
            max_states: h.max_states,
            abbrev_threshold: h.abbrev_threshold.unwrap_or(0),
            jobs: 1,
            format: Format::Text,
            dump_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.timeout_secs == 0 {
            return Err(CliError::Config("timeout must be positive".into()));
        }
        if self.max_states == 0 {
            return Err(CliError::Config("max states must be positive".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be positive".into()));
        }
        Ok(())
    }

    /// The configured solver; fails when the executable cannot be started.
    pub fn solver(&self) -> Result<Box<dyn Solver>, CliError> {
        self.validate()?;
        if self.solver == "none" {
            return Ok(Box::new(NoSolver));
        }
        let mut s = ProcessSolver::z3(
            &self.solver,
            Duration::from_secs(self.timeout_secs),
            self.jobs,
        );
        s.dump_dir = self.dump_dir.clone();
        if !s.available() {
            return Err(CliError::Config(format!(
                "cannot run solver {}",
                self.solver
            )));
        }
        Ok(Box::new(s))
    }

    pub fn heuristics(&self, rc: &RiscvContract) -> Heuristics {
        Heuristics {
            unroll: self.unroll.or(rc.unroll).unwrap_or(0),
            max_states: self.max_states,
            abbrev_threshold: (self.abbrev_threshold > 0).then_some(self.abbrev_threshold),
            ..Heuristics::default()
        }
    }
}

/// Parses `0x`-prefixed hex or decimal.
pub fn parse_addr(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    r.map_err(|e| format!("bad address {text}: {e}"))
}

/// The lifted program of `entry` up to the last of `ends`, printed.
pub fn cmd_lift(listing: &str, entry: u64, ends: &[u64]) -> Result<String, CliError> {
    let unit = parse_objdump(listing)?;
    let ends: BTreeSet<u64> = ends.iter().copied().collect();
    let sl = slice(&unit, entry, &ends)?;
    let (program, _) = lift_slice(&sl)?;
    Ok(program.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub contract: String,
    pub status: ReportStatus,
    pub statement: String,
    pub leaves: usize,
    pub obligations: u64,
    pub elapsed_seconds: f64,
    pub stats: ExecStats,
    pub leaf_outcomes: Vec<LeafOutcome>,
    pub report: RiscvReport,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            ReportStatus::Holds => EXIT_OK,
            ReportStatus::Refuted => EXIT_REFUTED,
            ReportStatus::Unknown => EXIT_UNKNOWN,
            ReportStatus::Invalid => EXIT_ERROR,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes"),
            Format::Text => {
                let mut out = String::new();
                let status = serde_json::to_value(self.status).expect("status serializes");
                let _ = writeln!(out, "{}: {}", self.contract, status.as_str().unwrap_or("?"));
                let _ = writeln!(out, "{}", self.statement);
                let _ = writeln!(
                    out,
                    "leaves {}, obligations {}, time {:.3} s",
                    self.leaves, self.obligations, self.elapsed_seconds
                );
                if let Some(cex) = &self.report.counterexample {
                    let _ = writeln!(out, "counterexample:");
                    for (k, v) in cex {
                        let _ = writeln!(out, "  {k} = {v}");
                    }
                }
                let checks: Vec<_> = self
                    .report
                    .evidence
                    .iter()
                    .filter(|e| e.kind != EvidenceKind::Verdict)
                    .collect();
                let failed: Vec<_> = checks.iter().filter(|e| !e.passed).collect();
                let _ = writeln!(
                    out,
                    "simulation and translation checks: {}, failed {}",
                    checks.len(),
                    failed.len()
                );
                for e in failed {
                    let _ = writeln!(out, "  {}: {}", e.subject, e.detail);
                }
                out
            }
        }
    }
}

/// Verifies a contract on a listing and backlifts the verdict with
/// `trials` simulation and translation trials per check.
pub fn cmd_verify(
    listing: &str,
    contract: &str,
    cfg: &RunConfig,
    trials: u64,
    seed: u64,
) -> Result<VerifyReport, CliError> {
    let rc = RiscvContract::parse(contract)?;
    let p = prepare(listing, &rc)?;
    let solver = cfg.solver()?;
    let opts = VerifyOptions {
        heuristics: cfg.heuristics(&rc),
        jobs: cfg.jobs,
    };
    let r = verify(&p.bir, solver.as_ref(), &opts)?;
    let rep = report(&rc, &p, &r, trials, seed)?;
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        contract: rc.name.clone(),
        status: rep.status,
        statement: rep.statement.clone(),
        leaves: r.leaves.len(),
        obligations: r.obligations(),
        elapsed_seconds: r.elapsed.as_secs_f64(),
        stats: r.stats,
        leaf_outcomes: r.leaves.clone(),
        report: rep,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SymexReport {
    pub schema_version: u32,
    pub contract: String,
    pub structure: StructureDump,
}

impl SymexReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes"),
            Format::Text => {
                let s = &self.structure;
                let mut out = String::new();
                let _ = writeln!(
                    out,
                    "{}: {} leaves over {} labels",
                    self.contract,
                    s.leaves.len(),
                    s.labels.len()
                );
                for (k, leaf) in s.leaves.iter().enumerate() {
                    let _ = writeln!(out, "leaf {k} at {}", leaf.at);
                    for c in &leaf.path {
                        let _ = writeln!(out, "  assume {c}");
                    }
                    for (v, e) in &leaf.env {
                        let _ = writeln!(out, "  {v} = {e}");
                    }
                    for (a, e) in &leaf.abbrevs {
                        let _ = writeln!(out, "  where {a} = {e}");
                    }
                }
                let st = &s.stats;
                let _ = writeln!(
                    out,
                    "steps {}, states {}, pruned {}, solver queries {}",
                    st.steps,
                    st.states,
                    st.pruned,
                    st.feasibility_queries + st.simplification_queries + st.target_queries
                );
                out
            }
        }
    }
}

/// The symbolic structure of a contract's program from its precondition.
pub fn cmd_symex(listing: &str, contract: &str, cfg: &RunConfig) -> Result<SymexReport, CliError> {
    let rc = RiscvContract::parse(contract)?;
    let p = prepare(listing, &rc)?;
    let solver = cfg.solver()?;
    let bc = &p.bir;
    let s = execute(
        &bc.program,
        solver.as_ref(),
        &cfg.heuristics(&rc),
        bc.entry,
        &bc.endpoints,
        &bc.forbidden,
        &bc.pre,
    )?;
    Ok(SymexReport {
        schema_version: SCHEMA_VERSION,
        contract: rc.name,
        structure: s.dump(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSuite {
    pub schema_version: u32,
    pub trials_per_kind: u64,
    pub kinds: usize,
    pub failed_kinds: Vec<String>,
    pub reports: Vec<SimReport>,
}

impl SimSuite {
    pub fn passed(&self) -> bool {
        self.failed_kinds.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_REFUTED
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes"),
            Format::Text => {
                let mut out = String::new();
                for r in &self.reports {
                    let verdict = if r.passed() { "ok" } else { "FAIL" };
                    let _ = write!(
                        out,
                        "{:<8} {:>6} trials {verdict}",
                        r.kind.mnemonic(),
                        r.trials
                    );
                    if let Some(c) = &r.counterexample {
                        let _ = write!(out, "  {} at {:#x}: {}", r.instr, r.addr, c.difference);
                    }
                    out.push('\n');
                }
                let _ = writeln!(
                    out,
                    "{} kinds, {} failed",
                    self.kinds,
                    self.failed_kinds.len()
                );
                out
            }
        }
    }
}

/// Differential trials of every supported instruction kind. `mutate`
/// swaps in a lifter with off-by-one immediates, which must fail.
pub fn cmd_check_sim(trials: u64, seed: u64, mutate: bool) -> Result<SimSuite, CliError> {
    if trials == 0 {
        return Err(CliError::Config(
            "check-sim needs at least one trial".into(),
        ));
    }
    let reports = if mutate {
        check_all_kinds(&lift_off_by_one_imm, trials, seed)
    } else {
        check_all_kinds(&lift_instr, trials, seed)
    };
    Ok(SimSuite {
        schema_version: SCHEMA_VERSION,
        trials_per_kind: trials,
        kinds: reports.len(),
        failed_kinds: reports
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.kind.mnemonic().to_string())
            .collect(),
        reports,
    })
}

/// One benchmark row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    /// Lifted instructions.
    pub instrs: usize,
    pub verdict: String,
    pub leaves: usize,
    pub obligations: u64,
    /// Largest leaf expression with abbreviations expanded.
    pub max_leaf_size: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub schema_version: u32,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record([
                "name",
                "instrs",
                "verdict",
                "leaves",
                "obligations",
                "max_leaf_size",
                "seconds",
            ])?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Vec<BenchRow>, CliError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        Ok(r.deserialize().collect::<Result<_, _>>()?)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("table serializes"),
            Format::Text => {
                let mut out = format!(
                    "{:<18} {:>7} {:>9} {:>7} {:>11} {:>10} {:>10}\n",
                    "program", "#instr", "verdict", "leaves", "obligations", "max size", "time (s)"
                );
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{:<18} {:>7} {:>9} {:>7} {:>11} {:>10} {:>10.3}",
                        r.name,
                        r.instrs,
                        r.verdict,
                        r.leaves,
                        r.obligations,
                        r.max_leaf_size,
                        r.seconds
                    );
                }
                out
            }
        }
    }
}

/// A program to benchmark: name, listing and contract text.
pub type BenchInput = (String, String, String);

/// Reads `<dir>/<name>/<name>.dis` and `<name>.contract` for every
/// subdirectory that has both.
pub fn read_corpus(dir: &Path) -> Result<Vec<BenchInput>, CliError> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let Some(name) = path
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_string)
        else {
            continue;
        };
        let dis = path.join(format!("{name}.dis"));
        let contract = path.join(format!("{name}.contract"));
        if dis.is_file() && contract.is_file() {
            out.push((name, read(&dis)?, read(&contract)?));
        }
    }
    out.sort();
    Ok(out)
}

/// The built-in corpus.
pub fn builtin_corpus() -> Vec<BenchInput> {
    rvbir::corpus::names()
        .map(|n| {
            let f = rvbir::corpus::fixture(n).expect("listed fixture");
            (n.to_string(), f.listing.to_string(), f.contract.to_string())
        })
        .collect()
}

/// Verifies each input and tabulates sizes and times, ordered by
/// instruction count.
pub fn cmd_bench(inputs: &[BenchInput], cfg: &RunConfig) -> Result<BenchTable, CliError> {
    let solver = cfg.solver()?;
    let mut rows = Vec::new();
    for (name, listing, contract) in inputs {
        let rc = RiscvContract::parse(contract)?;
        let p = prepare(listing, &rc)?;
        let opts = VerifyOptions {
            heuristics: cfg.heuristics(&rc),
            jobs: cfg.jobs,
        };
        let t = Instant::now();
        let r = verify(&p.bir, solver.as_ref(), &opts)?;
        let seconds = t.elapsed().as_secs_f64();
        rows.push(BenchRow {
            name: name.clone(),
            instrs: p.lift_map.instrs.len(),
            verdict: r.verdict.name().to_string(),
            leaves: r.leaves.len(),
            obligations: r.obligations(),
            max_leaf_size: r.structure.as_ref().map_or(0, |s| s.max_leaf_size()),
            seconds,
        });
    }
    rows.sort_by(|a, b| a.instrs.cmp(&b.instrs).then_with(|| a.name.cmp(&b.name)));
    Ok(BenchTable {
        schema_version: SCHEMA_VERSION,
        rows,
    })
}
