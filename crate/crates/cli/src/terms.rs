//! Model formula fragments: `--response` and `--terms`.
//!
//! Terms are comma separated. `x` is numeric, `C(col)` categorical with the
//! first sorted level as reference, `C(col, ref=B)` overrides the reference,
//! `a:C(b)` is an interaction, and `-1` (or `0`) drops the intercept.

use sqlglm::glm::{Categorical, Term};
use sqlglm::Response;

use crate::failure::Failure;

/// Parsed right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct Terms {
    pub terms: Vec<Term>,
    pub no_intercept: bool,
}

/// `col` or `col=LEVEL` (indicator of a text level).
pub fn parse_response(s: &str) -> Result<Response, Failure> {
    let s = s.trim();
    match s.split_once('=') {
        Some((col, level)) if !col.trim().is_empty() && !level.is_empty() => Ok(Response::Indicator {
            column: col.trim().to_string(),
            level: level.to_string(),
        }),
        None if !s.is_empty() => Ok(Response::Column(s.to_string())),
        _ => Err(bad(format!("malformed response {s:?}"))),
    }
}

fn bad(message: String) -> Failure {
    Failure::config("terms", message)
}

fn split_top_level(s: &str, sep: char) -> Result<Vec<&str>, Failure> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(bad(format!("unbalanced parentheses in {s:?}")));
                }
            }
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(bad(format!("unbalanced parentheses in {s:?}")));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn parse_factor(s: &str) -> Result<Term, Failure> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("C(").and_then(|r| r.strip_suffix(')')) {
        let mut args = inner.splitn(2, ',');
        let column = args.next().unwrap_or("").trim();
        if column.is_empty() {
            return Err(bad(format!("missing column in {s:?}")));
        }
        let mut cat = Categorical::new(column);
        if let Some(opt) = args.next() {
            let level = opt
                .trim()
                .strip_prefix("ref")
                .map(str::trim_start)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| bad(format!("expected ref=LEVEL in {s:?}")))?;
            cat.reference = Some(level.trim().to_string());
        }
        return Ok(Term::Categorical(cat));
    }
    if s.is_empty() || s.contains(['(', ')']) {
        return Err(bad(format!("malformed term {s:?}")));
    }
    Ok(Term::Numeric(s.to_string()))
}

/// Parses a list of term strings, each possibly comma separated itself.
pub fn parse_terms<S: AsRef<str>>(items: &[S]) -> Result<Terms, Failure> {
    let mut out = Terms {
        terms: Vec::new(),
        no_intercept: false,
    };
    for item in items {
        for raw in split_top_level(item.as_ref(), ',')? {
            let t = raw.trim();
            match t {
                "" => continue,
                "1" => continue,
                "-1" | "0" => out.no_intercept = true,
                _ => {
                    let parts = split_top_level(t, ':')?;
                    let mut factors = parts.into_iter().map(parse_factor).collect::<Result<Vec<_>, _>>()?;
                    out.terms.push(if factors.len() == 1 {
                        factors.remove(0)
                    } else {
                        Term::Interaction(factors)
                    });
                }
            }
        }
    }
    Ok(out)
}
