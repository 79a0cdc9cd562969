//! One solver subprocess per obligation, spoken to over stdin/stdout.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::encode::{bv_literal, encode, obligation_symbols, symbol_name};
use super::sexp::{bv_value, parse_prefix, Sexp};
use super::{skeleton, validate_model, Obligation, SmtError, Solver, Verdict};
use crate::bir::Symbol;

/// Limits the number of live solver processes.
#[derive(Debug)]
struct Pool {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl Pool {
    fn acquire(&self) -> PoolGuard<'_> {
        let mut used = self.used.lock().expect("pool lock");
        while *used >= self.max {
            used = self.freed.wait(used).expect("pool lock");
        }
        *used += 1;
        PoolGuard(self)
    }
}

struct PoolGuard<'a>(&'a Pool);

impl Drop for PoolGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("pool lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// An SMT-LIB2 solver run as `program args...` reading the script on stdin,
/// for example `z3 -in -smt2`.
#[derive(Debug)]
pub struct ProcessSolver {
    pub program: String,
    pub args: Vec<String>,
    /// Wall-clock budget per obligation; zero makes every query unknown.
    pub timeout: Duration,
    /// Directory receiving every encoded obligation as an `.smt2` file.
    pub dump_dir: Option<PathBuf>,
    pool: Pool,
    seq: AtomicU64,
}

impl ProcessSolver {
    pub fn new(
        program: &str,
        args: Vec<String>,
        timeout: Duration,
        max_procs: usize,
    ) -> ProcessSolver {
        ProcessSolver {
            program: program.to_string(),
            args,
            timeout,
            dump_dir: None,
            pool: Pool {
                max: max_procs.max(1),
                used: Mutex::new(0),
                freed: Condvar::new(),
            },
            seq: AtomicU64::new(0),
        }
    }

    /// A Z3 binary at `program`, run as `program -in -smt2`.
    pub fn z3(program: &str, timeout: Duration, max_procs: usize) -> ProcessSolver {
        ProcessSolver::new(
            program,
            vec!["-in".into(), "-smt2".into()],
            timeout,
            max_procs,
        )
    }

    /// Whether the binary can be started at all.
    pub fn available(&self) -> bool {
        Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map(|mut c| {
                let _ = c.kill();
                let _ = c.wait();
            })
            .is_ok()
    }

    fn dump(&self, script: &str, ob: &Obligation) -> Result<(), SmtError> {
        if let Some(dir) = &self.dump_dir {
            std::fs::create_dir_all(dir).map_err(|e| SmtError::Io(e.to_string()))?;
            let n = self.seq.fetch_add(1, Ordering::SeqCst);
            let path = dir.join(format!("{n:06}-{:?}.smt2", ob.kind).to_lowercase());
            std::fs::write(path, script).map_err(|e| SmtError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

enum Outcome<T> {
    Done(T),
    TimedOut,
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    rx: Receiver<Vec<u8>>,
    buf: String,
    deadline: Instant,
    stderr: std::sync::Arc<Mutex<String>>,
}

impl Session {
    fn send(&mut self, text: &str) -> Result<(), SmtError> {
        self.stdin
            .write_all(text.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| self.crash(format!("write failed: {e}")))
    }

    fn crash(&mut self, what: String) -> SmtError {
        let _ = self.child.kill();
        let _ = self.child.wait();
        thread::sleep(Duration::from_millis(10));
        let err = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        SmtError::SolverCrash(format!("{what}; stderr: {}", err.trim()))
    }

    fn read(&mut self) -> Result<Outcome<Sexp>, SmtError> {
        loop {
            if let Some((e, used)) = parse_prefix(&self.buf)? {
                self.buf.drain(..used);
                return Ok(Outcome::Done(e));
            }
            let left = self.deadline.saturating_duration_since(Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(bytes) => self.buf.push_str(&String::from_utf8_lossy(&bytes)),
                Err(RecvTimeoutError::Timeout) => return Ok(Outcome::TimedOut),
                Err(RecvTimeoutError::Disconnected) => {
                    let pending = std::mem::take(&mut self.buf);
                    let pending = pending.trim();
                    if !pending.is_empty() {
                        // a final atom without trailing newline
                        if let Some((e, _)) = parse_prefix(&format!("{pending}\n"))? {
                            return Ok(Outcome::Done(e));
                        }
                    }
                    return Err(self.crash("solver exited".into()));
                }
            }
        }
    }

    fn finish(mut self) {
        let _ = self.stdin.write_all(b"(exit)\n");
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn error_text(e: &Sexp) -> Option<String> {
    match e {
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(h), Sexp::Atom(msg)] if h == "error" => Some(msg.clone()),
            _ => None,
        },
        _ => None,
    }
}

impl ProcessSolver {
    fn start(&self) -> Result<Session, SmtError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SmtError::SolverCrash(format!("cannot start {}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut chunk = [0u8; 8192];
            while let Ok(n) = stdout.read(&mut chunk) {
                if n == 0 || tx.send(chunk[..n].to_vec()).is_err() {
                    break;
                }
            }
        });
        let err_text = std::sync::Arc::new(Mutex::new(String::new()));
        let sink = err_text.clone();
        thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            if let Ok(mut t) = sink.lock() {
                t.push_str(&s);
            }
        });
        Ok(Session {
            child,
            stdin,
            rx,
            buf: String::new(),
            deadline: Instant::now() + self.timeout,
            stderr: err_text,
        })
    }

    fn run(
        &self,
        ob: &Obligation,
        script: &str,
        s: &mut Session,
    ) -> Result<Outcome<Verdict>, SmtError> {
        s.send(script)?;
        let answer = match s.read()? {
            Outcome::Done(e) => e,
            Outcome::TimedOut => return Ok(Outcome::TimedOut),
        };
        match &answer {
            Sexp::Atom(a) if a == "unsat" => return Ok(Outcome::Done(Verdict::Unsat)),
            Sexp::Atom(a) if a == "unknown" => {
                return Ok(Outcome::Done(Verdict::Unknown(
                    "solver returned unknown".into(),
                )))
            }
            Sexp::Atom(a) if a == "sat" => {}
            other => {
                let msg = error_text(other).unwrap_or_else(|| format!("{other:?}"));
                return Err(s.crash(format!("unexpected answer {msg}")));
            }
        }

        let syms = obligation_symbols(ob);
        let (mems, words): (Vec<Symbol>, Vec<Symbol>) =
            syms.into_iter().partition(|s| s.ty.width().is_none());
        let mut values = BTreeMap::new();
        if !words.is_empty() {
            let names: Vec<String> = words.iter().map(symbol_name).collect();
            s.send(&format!("(get-value ({}))\n", names.join(" ")))?;
            let reply = match s.read()? {
                Outcome::Done(e) => e,
                Outcome::TimedOut => return Ok(Outcome::TimedOut),
            };
            let Sexp::List(pairs) = &reply else {
                return Err(SmtError::ModelParse(format!("{reply:?}")));
            };
            if pairs.len() != words.len() {
                return Err(SmtError::ModelParse(format!("{reply:?}")));
            }
            for (sym, pair) in words.iter().zip(pairs) {
                match pair {
                    Sexp::List(kv) if kv.len() == 2 => {
                        values.insert(sym.clone(), bv_value(&kv[1])?);
                    }
                    _ => return Err(SmtError::ModelParse(format!("{pair:?}"))),
                }
            }
        }

        let mut timed_out = false;
        let mut fetch = |m: &Symbol, addr: u64| -> Result<u8, SmtError> {
            s.send(&format!(
                "(get-value ((select {} {})))\n",
                symbol_name(m),
                bv_literal(64, addr)
            ))?;
            let reply = match s.read()? {
                Outcome::Done(e) => e,
                Outcome::TimedOut => {
                    timed_out = true;
                    return Err(SmtError::SolverCrash("timeout while reading model".into()));
                }
            };
            match &reply {
                Sexp::List(pairs) if pairs.len() == 1 => match &pairs[0] {
                    Sexp::List(kv) if kv.len() == 2 => Ok(bv_value(&kv[1])? as u8),
                    _ => Err(SmtError::ModelParse(format!("{reply:?}"))),
                },
                _ => Err(SmtError::ModelParse(format!("{reply:?}"))),
            }
        };
        let model = validate_model(ob, skeleton(&values, &mems), &mut fetch);
        if timed_out {
            return Ok(Outcome::TimedOut);
        }
        Ok(Outcome::Done(Verdict::Sat(model?)))
    }
}

impl Solver for ProcessSolver {
    fn check(&self, ob: &Obligation) -> Result<Verdict, SmtError> {
        let script = encode(ob)?;
        self.dump(&script, ob)?;
        if self.timeout.is_zero() {
            return Ok(Verdict::Unknown("timeout".into()));
        }
        let _permit = self.pool.acquire();
        let mut session = self.start()?;
        let result = self.run(ob, &script, &mut session);
        session.finish();
        match result? {
            Outcome::Done(v) => Ok(v),
            Outcome::TimedOut => Ok(Verdict::Unknown(format!(
                "timeout after {:.1} s",
                self.timeout.as_secs_f64()
            ))),
        }
    }

    fn describe(&self) -> String {
        format!("{} {}", self.program, self.args.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bir::{eval, BirType, Exp, PredOp, Value, Word};
    use crate::smt::{model_audit, ObligationKind};

    fn z3() -> ProcessSolver {
        let program = std::env::var("RVBIR_SOLVER").unwrap_or_else(|_| "z3".into());
        ProcessSolver::z3(&program, Duration::from_secs(30), 4)
    }

    fn s(n: &str) -> Symbol {
        Symbol::new(n, BirType::Imm64)
    }

    #[test]
    fn incr_entailment_is_unsat() {
        let (x, p) = (s("s_x10"), s("pre_x10"));
        let ob = Obligation::entailment(
            vec![Exp::eq(Exp::sym(&x), Exp::sym(&p))],
            Exp::eq(
                Exp::plus(Exp::sym(&x), Exp::c64(1)),
                Exp::plus(Exp::sym(&p), Exp::c64(1)),
            ),
            "incr",
        );
        assert_eq!(z3().check(&ob).unwrap(), Verdict::Unsat);
    }

    #[test]
    fn false_is_infeasible_and_timeout_zero_is_unknown() {
        let ob = Obligation::feasibility(vec![], Exp::ff(), "false");
        assert_eq!(z3().check(&ob).unwrap(), Verdict::Unsat);
        let mut solver = z3();
        solver.timeout = Duration::ZERO;
        assert!(matches!(solver.check(&ob).unwrap(), Verdict::Unknown(_)));
    }

    #[test]
    fn range_model_is_validated() {
        let v = s("s");
        let ob = Obligation::feasibility(
            vec![Exp::pred(
                PredOp::LessThanUnsigned,
                Exp::sym(&v),
                Exp::c64(10),
            )],
            Exp::pred(PredOp::LessThanUnsigned, Exp::c64(3), Exp::sym(&v)),
            "range",
        );
        let before = model_audit().0;
        let Verdict::Sat(m) = z3().check(&ob).unwrap() else {
            panic!("expected sat")
        };
        let value = m.interp.get(&v).unwrap().word().unwrap().bits();
        assert!((4..10).contains(&value));
        assert!(model_audit().0 > before);
    }

    #[test]
    fn memory_models_are_fetched_lazily() {
        let m = Symbol::new("M", BirType::Mem);
        let a = s("a");
        let goal = Exp::eq(
            Exp::load(Exp::sym(&m), Exp::sym(&a), 32),
            Exp::word(32, 0xdeadbeef),
        );
        let mut ob =
            Obligation::feasibility(vec![Exp::eq(Exp::sym(&a), Exp::c64(0x2000))], goal, "mem");
        ob.observe
            .push(Exp::load(Exp::sym(&m), Exp::c64(0x2001), 8));
        let Verdict::Sat(model) = z3().check(&ob).unwrap() else {
            panic!("expected sat")
        };
        let mem = model.interp.get(&m).unwrap().mem().unwrap();
        assert_eq!(mem.load(0x2000, 32).unwrap(), Word::new(32, 0xdeadbeef));
        assert_eq!(model.observed, vec![Value::Word(Word::new(8, 0xbe))]);
    }

    #[test]
    fn store_then_load_round_trips_in_the_solver() {
        let m = Symbol::new("M", BirType::Mem);
        let (a, v) = (s("a"), s("v"));
        for width in [8u32, 16, 32, 64] {
            let value = Exp::cast(crate::bir::CastOp::Low, Exp::sym(&v), width);
            let st = Exp::store(Exp::sym(&m), Exp::sym(&a), value.clone());
            let goal = Exp::eq(Exp::load(st, Exp::sym(&a), width), value);
            let ob = Obligation::entailment(vec![], goal, "roundtrip");
            assert_eq!(z3().check(&ob).unwrap(), Verdict::Unsat, "width {width}");
        }
    }

    #[test]
    fn disagreeing_goal_gives_a_counter_model() {
        let x = s("x");
        let goal = Exp::eq(
            Exp::plus(Exp::sym(&x), Exp::c64(1)),
            Exp::plus(Exp::sym(&x), Exp::c64(2)),
        );
        let ob = Obligation::new(ObligationKind::Entailment, vec![], goal.clone(), "offbyone");
        let Verdict::Sat(m) = z3().check(&ob).unwrap() else {
            panic!("expected sat")
        };
        assert_eq!(
            eval(&goal, &m.interp).unwrap(),
            Value::Word(Word::bool(false))
        );
    }

    #[test]
    fn missing_binary_is_a_crash() {
        let solver = ProcessSolver::z3("/nonexistent/solver", Duration::from_secs(1), 1);
        let ob = Obligation::feasibility(vec![], Exp::tt(), "t");
        assert!(matches!(solver.check(&ob), Err(SmtError::SolverCrash(_))));
        assert!(!solver.available());
        assert!(z3().available());
    }

    #[test]
    fn dumps_scripts() {
        let dir = std::env::temp_dir().join(format!("rvbir-dump-{}", std::process::id()));
        let mut solver = z3();
        solver.dump_dir = Some(dir.clone());
        let ob = Obligation::feasibility(vec![], Exp::tt(), "t");
        solver.check(&ob).unwrap();
        let files: Vec<_> = std::fs::read_dir(&dir).unwrap().collect();
        assert_eq!(files.len(), 1);
        let _ = std::fs::remove_dir_all(dir);
    }
}
