//! Short textual specs used on the command line and in config files.
//!
//! | spec       | grammar                                  |
//! |------------|------------------------------------------|
//! | rate       | `unit`, `pow:GAMMA`, `table:FILE`, `table[v1,v2,...]` |
//! | profile    | `const:RHO`, `sine:MEAN,AMPLITUDE`       |
//! | kernel     | `nn`, or `z:w,z:w,...` with integer weights |
//! | list       | `t1,t2,...`                              |
//! | range      | `a..b` (inclusive)                       |

use std::path::Path;

use crate::model::{JumpKernel, ModelError, Profile, RateFunction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("cannot parse {what} spec {input:?}: {reason}")]
    Syntax { what: &'static str, input: String, reason: String },
    #[error("cannot read rate table {path}: {reason}")]
    TableFile { path: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(what: &'static str, input: &str, reason: impl Into<String>) -> SpecError {
    SpecError::Syntax { what, input: input.into(), reason: reason.into() }
}

fn number(what: &'static str, input: &str, s: &str) -> Result<f64, SpecError> {
    let v: f64 = s.trim().parse().map_err(|_| syntax(what, input, format!("{s:?} is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(syntax(what, input, "value is not finite"))
    }
}

/// Rate values `g(1), g(2), ...` separated by whitespace, commas or
/// newlines; `#` starts a comment.
pub fn parse_rate_table(text: &str) -> Result<Vec<f64>, SpecError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            out.push(number("rate table", text, tok)?);
        }
    }
    if out.is_empty() {
        return Err(syntax("rate table", text, "no values"));
    }
    Ok(out)
}

/// Rate spec without file access; `table:FILE` is rejected.
pub fn parse_rate_inline(s: &str) -> Result<RateFunction, SpecError> {
    parse_rate_with(s, |_| Err(syntax("rate", s, "table files are not allowed here")))
}

/// Rate spec; `table:FILE` paths are resolved against `base`.
pub fn parse_rate(s: &str, base: Option<&Path>) -> Result<RateFunction, SpecError> {
    parse_rate_with(s, |file| {
        let path = match base {
            Some(b) if Path::new(file).is_relative() => b.join(file),
            _ => Path::new(file).to_path_buf(),
        };
        std::fs::read_to_string(&path)
            .map_err(|e| SpecError::TableFile { path: path.display().to_string(), reason: e.to_string() })
    })
}

fn parse_rate_with(s: &str, load: impl FnOnce(&str) -> Result<String, SpecError>) -> Result<RateFunction, SpecError> {
    let t = s.trim();
    if t == "unit" {
        return Ok(RateFunction::unit());
    }
    if let Some(g) = t.strip_prefix("pow:") {
        return Ok(RateFunction::power(number("rate", s, g)?)?);
    }
    if let Some(inner) = t.strip_prefix("table[").and_then(|r| r.strip_suffix(']')) {
        return Ok(RateFunction::bounded_table(parse_rate_table(inner)?)?);
    }
    if let Some(file) = t.strip_prefix("table:") {
        if file.is_empty() {
            return Err(syntax("rate", s, "missing table file"));
        }
        return Ok(RateFunction::bounded_table(parse_rate_table(&load(file)?)?)?);
    }
    Err(syntax("rate", s, "expected unit, pow:GAMMA, table:FILE or table[...]"))
}

pub fn parse_profile(s: &str) -> Result<Profile, SpecError> {
    let t = s.trim();
    let p = if let Some(r) = t.strip_prefix("const:") {
        Profile::constant(number("profile", s, r)?)
    } else if let Some(r) = t.strip_prefix("sine:") {
        let (m, a) = r.split_once(',').ok_or_else(|| syntax("profile", s, "expected sine:MEAN,AMPLITUDE"))?;
        Profile::sine(number("profile", s, m)?, number("profile", s, a)?)
    } else {
        return Err(syntax("profile", s, "expected const:RHO or sine:MEAN,AMPLITUDE"));
    };
    if p.min() < 0.0 {
        return Err(syntax("profile", s, "density must be non-negative"));
    }
    Ok(p)
}

pub fn parse_kernel(s: &str) -> Result<JumpKernel, SpecError> {
    let t = s.trim();
    if t == "nn" {
        return Ok(JumpKernel::nearest_neighbor());
    }
    let mut weights = Vec::new();
    for part in t.split(',') {
        let (z, w) = part.split_once(':').ok_or_else(|| syntax("kernel", s, "expected z:w pairs"))?;
        let z: i64 = z.trim().parse().map_err(|_| syntax("kernel", s, format!("bad offset {z:?}")))?;
        let w: u64 = w.trim().parse().map_err(|_| syntax("kernel", s, format!("bad weight {w:?}")))?;
        if z.unsigned_abs() > 1 << 20 || w > 1 << 40 {
            return Err(syntax("kernel", s, "offset or weight out of range"));
        }
        weights.push((z, w));
    }
    Ok(JumpKernel::from_weights(&weights)?)
}

/// Comma-separated non-negative finite reals.
pub fn parse_times(s: &str) -> Result<Vec<f64>, SpecError> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(Vec::new());
    }
    t.split(',')
        .map(|x| {
            let v = number("time list", s, x)?;
            if v < 0.0 {
                Err(syntax("time list", s, "times must be non-negative"))
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Comma-separated positive integers.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>, SpecError> {
    s.trim()
        .split(',')
        .map(|x| match x.trim().parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(syntax("size list", s, format!("{x:?} is not a positive integer"))),
        })
        .collect()
}

/// `a..b`, inclusive, with `a <= b`.
pub fn parse_range(s: &str) -> Result<(u64, u64), SpecError> {
    let (a, b) = s.trim().split_once("..").ok_or_else(|| syntax("range", s, "expected a..b"))?;
    let p = |x: &str| x.trim().parse::<u64>().map_err(|_| syntax("range", s, format!("{x:?} is not an integer")));
    let (a, b) = (p(a)?, p(b)?);
    if a > b {
        return Err(syntax("range", s, "empty range"));
    }
    Ok((a, b))
}
