//! Concrete evaluation of expressions.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::{mask, BinOp, CastOp, Exp, PredOp, Symbol, UnOp, Var, Word};

/// Byte memory. Addresses not in `bytes` read as `default`; a memory without
/// a default reports the missing address so a caller can fetch it lazily.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemValue {
    pub bytes: BTreeMap<u64, u8>,
    pub default: Option<u8>,
    /// Name reported in [`EvalError::MissingByte`].
    pub origin: Arc<str>,
}

impl MemValue {
    pub fn zeroed(bytes: BTreeMap<u64, u8>) -> MemValue {
        MemValue {
            bytes,
            default: Some(0),
            origin: Arc::from("mem"),
        }
    }

    pub fn byte(&self, addr: u64) -> Result<u8, EvalError> {
        match (self.bytes.get(&addr), self.default) {
            (Some(&b), _) => Ok(b),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(EvalError::MissingByte {
                origin: self.origin.to_string(),
                addr,
            }),
        }
    }

    /// Little-endian load of `width` bits.
    pub fn load(&self, addr: u64, width: u32) -> Result<Word, EvalError> {
        let mut bits = 0u64;
        for k in (0..width as u64 / 8).rev() {
            bits = (bits << 8) | self.byte(addr.wrapping_add(k))? as u64;
        }
        Ok(Word::new(width, bits))
    }

    pub fn store(&self, addr: u64, value: Word) -> MemValue {
        let mut out = self.clone();
        for k in 0..value.width() as u64 / 8 {
            out.bytes
                .insert(addr.wrapping_add(k), (value.bits() >> (8 * k)) as u8);
        }
        out
    }

    /// Extensional equality: every listed byte agrees and so do defaults.
    pub fn same_contents(&self, other: &MemValue) -> Result<bool, EvalError> {
        for &a in self.bytes.keys().chain(other.bytes.keys()) {
            if self.byte(a)? != other.byte(a)? {
                return Ok(false);
            }
        }
        Ok(self.default == other.default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Value {
    Word(Word),
    Mem(Arc<MemValue>),
}

impl Value {
    /// The zero word of a type; the all-zero memory for `Mem`.
    pub fn zero(ty: super::BirType) -> Value {
        match ty.width() {
            Some(w) => Value::Word(Word::new(w, 0)),
            None => Value::Mem(Arc::new(MemValue::zeroed(BTreeMap::new()))),
        }
    }

    pub fn word(&self) -> Option<Word> {
        match self {
            Value::Word(w) => Some(*w),
            Value::Mem(_) => None,
        }
    }

    pub fn mem(&self) -> Option<&MemValue> {
        match self {
            Value::Mem(m) => Some(m),
            Value::Word(_) => None,
        }
    }

    /// Equality where memories compare by contents.
    pub fn same(&self, other: &Value) -> Result<bool, EvalError> {
        match (self, other) {
            (Value::Word(a), Value::Word(b)) => Ok(a == b),
            (Value::Mem(a), Value::Mem(b)) => a.same_contents(b),
            _ => Ok(false),
        }
    }
}

impl From<Word> for Value {
    fn from(w: Word) -> Value {
        Value::Word(w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    UnboundVar(String),
    #[error("unbound symbol {0}")]
    UnboundSymbol(String),
    #[error("byte {addr:#x} of memory {origin} is unknown")]
    MissingByte { origin: String, addr: u64 },
    #[error("ill-typed expression")]
    TypeMismatch,
}

/// Source of values for variables and symbols.
pub trait Valuation {
    fn var(&self, v: &Var) -> Option<Value>;
    fn sym(&self, s: &Symbol) -> Option<Value>;
}

/// A concrete program environment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BirEnv {
    pub vars: BTreeMap<Var, Value>,
}

impl BirEnv {
    pub fn get(&self, v: &Var) -> Option<&Value> {
        self.vars.get(v)
    }

    pub fn set(&mut self, v: &Var, value: Value) {
        self.vars.insert(v.clone(), value);
    }

    pub fn word(&self, v: &Var) -> Option<u64> {
        self.vars.get(v).and_then(Value::word).map(Word::bits)
    }
}

impl Valuation for BirEnv {
    fn var(&self, v: &Var) -> Option<Value> {
        self.vars.get(v).cloned()
    }
    fn sym(&self, _: &Symbol) -> Option<Value> {
        None
    }
}

/// An interpretation of symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Interp {
    pub syms: BTreeMap<Symbol, Value>,
}

impl Interp {
    pub fn get(&self, s: &Symbol) -> Option<&Value> {
        self.syms.get(s)
    }

    pub fn set(&mut self, s: &Symbol, value: Value) {
        self.syms.insert(s.clone(), value);
    }
}

impl Valuation for Interp {
    fn var(&self, _: &Var) -> Option<Value> {
        None
    }
    fn sym(&self, s: &Symbol) -> Option<Value> {
        self.syms.get(s).cloned()
    }
}

pub fn unop(op: UnOp, a: Word) -> Word {
    match op {
        UnOp::Not => Word::new(a.width(), !a.bits()),
        UnOp::ChangeSign => Word::new(a.width(), a.bits().wrapping_neg()),
    }
}

pub fn binop(op: BinOp, a: Word, b: Word) -> Word {
    let w = a.width();
    let (x, y) = (a.bits(), b.bits());
    let bits = match op {
        BinOp::Plus => x.wrapping_add(y),
        BinOp::Minus => x.wrapping_sub(y),
        BinOp::Mult => x.wrapping_mul(y),
        BinOp::DivUnsigned => x.checked_div(y).unwrap_or(u64::MAX),
        BinOp::And => x & y,
        BinOp::Or => x | y,
        BinOp::Xor => x ^ y,
        BinOp::LShift => {
            if y >= w as u64 {
                0
            } else {
                x << y
            }
        }
        BinOp::RShiftUnsigned => {
            if y >= w as u64 {
                0
            } else {
                x >> y
            }
        }
        BinOp::RShiftSigned => (a.signed() >> y.min(63)) as u64,
    };
    Word::new(w, bits & mask(w))
}

pub fn predop(op: PredOp, a: Word, b: Word) -> Word {
    Word::bool(match op {
        PredOp::Equal => a == b,
        PredOp::NotEqual => a != b,
        PredOp::LessThanUnsigned => a.bits() < b.bits(),
        PredOp::LessOrEqualUnsigned => a.bits() <= b.bits(),
        PredOp::LessThanSigned => a.signed() < b.signed(),
    })
}

pub fn castop(op: CastOp, a: Word, width: u32) -> Word {
    match op {
        CastOp::Low | CastOp::UnsignedExtend => Word::new(width, a.bits()),
        CastOp::SignedExtend => Word::new(width, a.signed() as u64),
    }
}

struct Evaluator<'a> {
    val: &'a dyn Valuation,
    memo: HashMap<*const Exp, Value>,
}

impl Evaluator<'_> {
    fn child(&mut self, e: &Arc<Exp>) -> Result<Value, EvalError> {
        let key = Arc::as_ptr(e);
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let v = self.eval(e)?;
        self.memo.insert(key, v.clone());
        Ok(v)
    }

    fn word(&mut self, e: &Arc<Exp>) -> Result<Word, EvalError> {
        self.child(e)?.word().ok_or(EvalError::TypeMismatch)
    }

    fn mem(&mut self, e: &Arc<Exp>) -> Result<Arc<MemValue>, EvalError> {
        match self.child(e)? {
            Value::Mem(m) => Ok(m),
            Value::Word(_) => Err(EvalError::TypeMismatch),
        }
    }

    fn eval(&mut self, e: &Exp) -> Result<Value, EvalError> {
        Ok(match e {
            Exp::Const(w) => Value::Word(*w),
            Exp::Den(v) => {
                let value = self
                    .val
                    .var(v)
                    .ok_or_else(|| EvalError::UnboundVar(v.name.to_string()))?;
                check_type(&value, v.ty)?;
                value
            }
            Exp::Sym(s) => {
                let value = self
                    .val
                    .sym(s)
                    .ok_or_else(|| EvalError::UnboundSymbol(s.name.to_string()))?;
                check_type(&value, s.ty)?;
                value
            }
            Exp::Unary(op, a) => Value::Word(unop(*op, self.word(a)?)),
            Exp::Bin(op, a, b) => {
                let (x, y) = (self.word(a)?, self.word(b)?);
                if x.width() != y.width() {
                    return Err(EvalError::TypeMismatch);
                }
                Value::Word(binop(*op, x, y))
            }
            Exp::Pred(op, a, b) => {
                let (x, y) = (self.word(a)?, self.word(b)?);
                if x.width() != y.width() {
                    return Err(EvalError::TypeMismatch);
                }
                Value::Word(predop(*op, x, y))
            }
            Exp::Ite(c, a, b) => {
                if self.word(c)?.is_true() {
                    self.child(a)?
                } else {
                    self.child(b)?
                }
            }
            Exp::Cast(op, a, w) => Value::Word(castop(*op, self.word(a)?, *w)),
            Exp::Load(m, a, w) => {
                let m = self.mem(m)?;
                let addr = self.word(a)?.bits();
                Value::Word(m.load(addr, *w)?)
            }
            Exp::Store(m, a, v) => {
                let m = self.mem(m)?;
                let addr = self.word(a)?.bits();
                let v = self.word(v)?;
                Value::Mem(Arc::new(m.store(addr, v)))
            }
        })
    }
}

fn check_type(value: &Value, ty: super::BirType) -> Result<(), EvalError> {
    let ok = match (value, ty.width()) {
        (Value::Word(w), Some(width)) => w.width() == width,
        (Value::Mem(_), None) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(EvalError::TypeMismatch)
    }
}

/// Evaluates `e`. Shared subterms are evaluated once.
pub fn eval(e: &Exp, val: &dyn Valuation) -> Result<Value, EvalError> {
    Evaluator {
        val,
        memo: HashMap::new(),
    }
    .eval(e)
}

/// Evaluates an Imm1 expression to a boolean.
pub fn eval_bool(e: &Exp, val: &dyn Valuation) -> Result<bool, EvalError> {
    match eval(e, val)? {
        Value::Word(w) if w.width() == 1 => Ok(w.is_true()),
        _ => Err(EvalError::TypeMismatch),
    }
}
