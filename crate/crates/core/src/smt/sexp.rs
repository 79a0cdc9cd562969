//! Minimal S-expression reader for solver responses.

use super::SmtError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parses one S-expression from the front of `text`, returning it with the
/// number of bytes consumed; `None` when no complete expression is present.
pub fn parse_prefix(text: &str) -> Result<Option<(Sexp, usize)>, SmtError> {
    let c = text.as_bytes();
    let mut pos = 0;
    Ok(read(c, &mut pos)?.map(|e| (e, pos)))
}

pub fn parse(text: &str) -> Result<Option<Sexp>, SmtError> {
    Ok(parse_prefix(text)?.map(|(e, _)| e))
}

fn skip_ws(c: &[u8], pos: &mut usize) {
    while *pos < c.len() {
        if c[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if c[*pos] == b';' {
            while *pos < c.len() && c[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn text(c: &[u8]) -> String {
    String::from_utf8_lossy(c).into_owned()
}

fn read(c: &[u8], pos: &mut usize) -> Result<Option<Sexp>, SmtError> {
    skip_ws(c, pos);
    if *pos == c.len() {
        return Ok(None);
    }
    match c[*pos] {
        b'(' => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                skip_ws(c, pos);
                if *pos == c.len() {
                    return Ok(None);
                }
                if c[*pos] == b')' {
                    *pos += 1;
                    return Ok(Some(Sexp::List(items)));
                }
                match read(c, pos)? {
                    Some(item) => items.push(item),
                    None => return Ok(None),
                }
            }
        }
        b')' => Err(SmtError::ModelParse("unexpected ')'".into())),
        b'|' => {
            let start = *pos + 1;
            match c[start..].iter().position(|&ch| ch == b'|') {
                Some(n) => {
                    *pos = start + n + 1;
                    Ok(Some(Sexp::Atom(text(&c[start..start + n]))))
                }
                None => Ok(None),
            }
        }
        b'"' => {
            let mut s = Vec::new();
            let mut i = *pos + 1;
            while i < c.len() {
                if c[i] == b'"' {
                    if c.get(i + 1) == Some(&b'"') {
                        s.push(b'"');
                        i += 2;
                        continue;
                    }
                    *pos = i + 1;
                    return Ok(Some(Sexp::Atom(text(&s))));
                }
                s.push(c[i]);
                i += 1;
            }
            Ok(None)
        }
        _ => {
            let start = *pos;
            while *pos < c.len()
                && !c[*pos].is_ascii_whitespace()
                && c[*pos] != b'('
                && c[*pos] != b')'
            {
                *pos += 1;
            }
            // an atom at the very end may still be growing
            if *pos == c.len() {
                *pos = start;
                return Ok(None);
            }
            Ok(Some(Sexp::Atom(text(&c[start..*pos]))))
        }
    }
}

/// Reads a bit-vector literal: `#x..`, `#b..` or `(_ bvN W)`.
pub fn bv_value(e: &Sexp) -> Result<u64, SmtError> {
    let bad = || SmtError::ModelParse(format!("not a bit-vector value: {e:?}"));
    match e {
        Sexp::Atom(a) => {
            if let Some(h) = a.strip_prefix("#x") {
                u128::from_str_radix(h, 16)
                    .map(|v| v as u64)
                    .map_err(|_| bad())
            } else if let Some(b) = a.strip_prefix("#b") {
                u128::from_str_radix(b, 2)
                    .map(|v| v as u64)
                    .map_err(|_| bad())
            } else {
                Err(bad())
            }
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(n), Sexp::Atom(_)] if u == "_" => n
                .strip_prefix("bv")
                .and_then(|d| d.parse::<u128>().ok())
                .map(|v| v as u64)
                .ok_or_else(bad),
            _ => Err(bad()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_get_value_responses() {
        let e = parse("((|s_x10| #x0000000000000005) (b (_ bv7 64)))")
            .unwrap()
            .unwrap();
        let Sexp::List(pairs) = e else { panic!() };
        let Sexp::List(p0) = &pairs[0] else { panic!() };
        assert_eq!(p0[0], Sexp::Atom("s_x10".into()));
        assert_eq!(bv_value(&p0[1]).unwrap(), 5);
        let Sexp::List(p1) = &pairs[1] else { panic!() };
        assert_eq!(bv_value(&p1[1]).unwrap(), 7);
        assert_eq!(bv_value(&Sexp::Atom("#b101".into())).unwrap(), 5);
    }

    #[test]
    fn incomplete_input() {
        assert_eq!(parse("((a #x0").unwrap(), None);
        assert_eq!(parse("   ").unwrap(), None);
        assert_eq!(parse("sat").unwrap(), None);
        assert_eq!(
            parse_prefix("sat\n(x)").unwrap(),
            Some((Sexp::Atom("sat".into()), 3))
        );
        assert!(parse(")").is_err());
    }
}
