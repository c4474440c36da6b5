//! Line-oriented text formats for protocols and output conditions, plus the
//! small argument languages used on the command line.
//!
//! Protocol files:
//!
//! ```text
//! protocol p2
//! states: q0 q1 q2 q3
//! inputs: q1
//! outputs: false true
//! outmap: q0=false q1=false q2=false q3=true
//! trans: q1 q1 -> q2 q1
//! ```
//!
//! Set files declare `dims:` and then either `cube:` lines
//! (`cube: small[0,2] large[0,*]`, unmentioned dimensions are `[0,*]`) or
//! `cone:` lines (`cone: base{x:1} period{y:2}`). `#` starts a comment.

use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{Configuration, Protocol, ProtocolError, StateId, Transition};
use crate::sets::{Condition, CountingSet, Cube, LinearSet, SemilinearSet, SetError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing `{0}` line")]
    Missing(&'static str),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Set(#[from] SetError),
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

/// Non-empty lines with comments stripped, as `(line number, key, rest)`.
fn directives(text: &str) -> Result<Vec<(usize, &str, &str)>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        if let Some(rest) = line.strip_prefix("protocol") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                out.push((n, "protocol", rest.trim()));
                continue;
            }
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| syntax(n, format!("expected `key: value`, got `{line}`")))?;
        out.push((n, key.trim(), rest.trim()));
    }
    Ok(out)
}

fn once<'a>(slot: &mut Option<(usize, &'a str)>, n: usize, key: &'static str, rest: &'a str) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(syntax(n, format!("duplicate `{key}` line")));
    }
    *slot = Some((n, rest));
    Ok(())
}

/// Parses the protocol text format.
pub fn parse_protocol(text: &str) -> Result<Protocol, ParseError> {
    let mut name = None;
    let mut states = None;
    let mut inputs = None;
    let mut outputs = None;
    let mut outmap = None;
    let mut trans = Vec::new();
    for (n, key, rest) in directives(text)? {
        match key {
            "protocol" => once(&mut name, n, "protocol", rest)?,
            "states" => once(&mut states, n, "states", rest)?,
            "inputs" => once(&mut inputs, n, "inputs", rest)?,
            "outputs" => once(&mut outputs, n, "outputs", rest)?,
            "outmap" => once(&mut outmap, n, "outmap", rest)?,
            "trans" => trans.push((n, rest)),
            other => return Err(syntax(n, format!("unknown directive `{other}`"))),
        }
    }
    let name = name.map_or("protocol", |(_, s)| if s.is_empty() { "protocol" } else { s });
    let (_, states) = states.ok_or(ParseError::Missing("states"))?;
    let (in_line, inputs) = inputs.ok_or(ParseError::Missing("inputs"))?;
    let (_, outputs) = outputs.ok_or(ParseError::Missing("outputs"))?;
    let (map_line, outmap) = outmap.ok_or(ParseError::Missing("outmap"))?;

    let states: Vec<String> = states.split_whitespace().map(String::from).collect();
    let outputs: Vec<String> = outputs.split_whitespace().map(String::from).collect();
    let state = |n: usize, s: &str| {
        states.iter().position(|x| x == s).map(StateId).ok_or_else(|| syntax(n, format!("unknown state `{s}`")))
    };
    let inputs = inputs.split_whitespace().map(|s| state(in_line, s)).collect::<Result<Vec<_>, _>>()?;
    let mut output_map = vec![None; states.len()];
    for item in outmap.split_whitespace() {
        let (s, o) = item.rsplit_once('=').ok_or_else(|| syntax(map_line, format!("expected `state=output`, got `{item}`")))?;
        let q = state(map_line, s)?;
        let o = outputs.iter().position(|x| x == o).ok_or_else(|| syntax(map_line, format!("unknown output `{o}`")))?;
        if output_map[q.0].replace(o).is_some() {
            return Err(syntax(map_line, format!("state `{s}` mapped twice")));
        }
    }
    let output_map = output_map
        .iter()
        .enumerate()
        .map(|(q, o)| o.ok_or_else(|| syntax(map_line, format!("state `{}` has no output", states[q]))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut transitions = Vec::new();
    for (n, rest) in trans {
        let tokens: Vec<&str> = rest.split_whitespace().collect();
        let [a, b, "->", c, d] = tokens[..] else {
            return Err(syntax(n, format!("expected `a b -> c d`, got `{rest}`")));
        };
        transitions.push(Transition::new(state(n, a)?, state(n, b)?, state(n, c)?, state(n, d)?));
    }
    Ok(Protocol::new(name, states, transitions, inputs, outputs, output_map)?)
}

fn check_token(t: &str) -> bool {
    !t.is_empty() && !t.chars().any(|c| c.is_whitespace() || "#=:[]{},".contains(c))
}

/// Renders `p` in the protocol text format, preceded by `header` comments.
pub fn write_protocol(p: &Protocol, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    let _ = writeln!(out, "protocol {}", p.name());
    let _ = writeln!(out, "states: {}", p.states().join(" "));
    let inputs: Vec<&str> = p.inputs().iter().map(|&q| p.state_name(q)).collect();
    let _ = writeln!(out, "inputs: {}", inputs.join(" "));
    let _ = writeln!(out, "outputs: {}", p.outputs().join(" "));
    let map: Vec<String> =
        p.state_ids().map(|q| format!("{}={}", p.state_name(q), p.outputs()[p.output_of(q)])).collect();
    let _ = writeln!(out, "outmap: {}", map.join(" "));
    for t in p.transitions() {
        let _ = writeln!(out, "trans: {}", p.render_transition(t));
    }
    out
}

/// Whether every name in `p` survives a round trip through the text format.
pub fn is_writable(p: &Protocol) -> bool {
    let token = |t: &str| !t.is_empty() && t != "->" && !t.chars().any(|c| c.is_whitespace() || c == '#' || c == '=');
    !p.name().contains(['#', '\n', '\r'])
        && p.states().iter().all(|s| token(s))
        && p.outputs().iter().all(|o| token(o))
}

/// A parsed set file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SetFile {
    Counting(CountingSet),
    Semilinear(SemilinearSet),
}

impl SetFile {
    pub fn into_condition(self) -> Condition {
        match self {
            SetFile::Counting(s) => Condition::Counting(s),
            SetFile::Semilinear(s) => Condition::Semilinear(s),
        }
    }

    pub fn dims(&self) -> &[String] {
        match self {
            SetFile::Counting(s) => s.dims(),
            SetFile::Semilinear(s) => s.dims(),
        }
    }
}

fn number(n: usize, s: &str) -> Result<u32, ParseError> {
    s.trim().parse::<u32>().map_err(|_| syntax(n, format!("expected a natural number, got `{s}`")))
}

fn dim_index(n: usize, dims: &[String], d: &str) -> Result<usize, ParseError> {
    dims.iter().position(|x| x == d).ok_or_else(|| syntax(n, format!("unknown dimension `{d}`")))
}

fn parse_cube(n: usize, dims: &[String], rest: &str) -> Result<Cube, ParseError> {
    let mut lower = vec![0; dims.len()];
    let mut upper = vec![None; dims.len()];
    let mut seen = vec![false; dims.len()];
    for item in rest.split_whitespace() {
        let (d, range) = item.split_once('[').ok_or_else(|| syntax(n, format!("expected `dim[lo,hi]`, got `{item}`")))?;
        let range = range.strip_suffix(']').ok_or_else(|| syntax(n, format!("missing `]` in `{item}`")))?;
        let (lo, hi) = range.split_once(',').ok_or_else(|| syntax(n, format!("expected `lo,hi` in `{item}`")))?;
        let i = dim_index(n, dims, d)?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(syntax(n, format!("dimension `{d}` bounded twice")));
        }
        lower[i] = number(n, lo)?;
        upper[i] = if hi.trim() == "*" { None } else { Some(number(n, hi)?) };
    }
    Cube::try_new(lower, upper).map_err(|e| syntax(n, e.to_string()))
}

/// Splits `base{x:1} period{y:2}` into `(word, body)` pairs.
fn braced_items(n: usize, text: &str) -> Result<Vec<(String, String)>, ParseError> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let open = rest.find('{').ok_or_else(|| syntax(n, format!("expected `word{{...}}`, got `{rest}`")))?;
        let close = rest.find('}').ok_or_else(|| syntax(n, "missing `}`"))?;
        if close < open {
            return Err(syntax(n, "unbalanced braces"));
        }
        out.push((rest[..open].trim().to_string(), rest[open + 1..close].to_string()));
        rest = rest[close + 1..].trim_start();
    }
    Ok(out)
}

fn parse_multiset(n: usize, dims: &[String], body: &str) -> Result<Vec<u32>, ParseError> {
    let mut v = vec![0u32; dims.len()];
    for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (d, k) = item.split_once(':').ok_or_else(|| syntax(n, format!("expected `dim:count`, got `{item}`")))?;
        let i = dim_index(n, dims, d.trim())?;
        v[i] = v[i].checked_add(number(n, k)?).ok_or_else(|| syntax(n, "count overflow"))?;
    }
    Ok(v)
}

fn parse_cone(n: usize, dims: &[String], rest: &str) -> Result<LinearSet, ParseError> {
    let mut base = None;
    let mut periods = Vec::new();
    for (word, body) in braced_items(n, rest)? {
        match word.as_str() {
            "base" if base.is_none() => base = Some(parse_multiset(n, dims, &body)?),
            "base" => return Err(syntax(n, "duplicate base")),
            "period" => periods.push(parse_multiset(n, dims, &body)?),
            other => return Err(syntax(n, format!("expected `base` or `period`, got `{other}`"))),
        }
    }
    let base = base.ok_or_else(|| syntax(n, "cone without base"))?;
    Ok(LinearSet::new(base, periods))
}

/// Parses the set text format.
pub fn parse_set(text: &str) -> Result<SetFile, ParseError> {
    let lines = directives(text)?;
    let mut dims: Option<Vec<String>> = None;
    for &(n, key, rest) in &lines {
        if key == "dims" {
            if dims.is_some() {
                return Err(syntax(n, "duplicate `dims` line"));
            }
            let d: Vec<String> = rest.split_whitespace().map(String::from).collect();
            for (i, x) in d.iter().enumerate() {
                if !check_token(x) {
                    return Err(syntax(n, format!("invalid dimension name `{x}`")));
                }
                if d[..i].contains(x) {
                    return Err(syntax(n, format!("duplicate dimension `{x}`")));
                }
            }
            dims = Some(d);
        }
    }
    let dims = dims.ok_or(ParseError::Missing("dims"))?;
    let mut cubes = Vec::new();
    let mut cones = Vec::new();
    for (n, key, rest) in lines {
        match key {
            "dims" => {}
            "cube" if cones.is_empty() => cubes.push(parse_cube(n, &dims, rest)?),
            "cone" if cubes.is_empty() => cones.push(parse_cone(n, &dims, rest)?),
            "cube" | "cone" => return Err(syntax(n, "a set file holds either cubes or cones, not both")),
            other => return Err(syntax(n, format!("unknown directive `{other}`"))),
        }
    }
    if cones.is_empty() {
        Ok(SetFile::Counting(CountingSet::new(dims, cubes)?))
    } else {
        Ok(SetFile::Semilinear(SemilinearSet::new(dims, cones)?))
    }
}

pub fn write_counting_set(s: &CountingSet) -> String {
    let mut out = format!("dims: {}\n", s.dims().join(" "));
    for c in s.cubes() {
        let items: Vec<String> = s
            .dims()
            .iter()
            .enumerate()
            .map(|(i, d)| match c.upper()[i] {
                Some(u) => format!("{d}[{},{u}]", c.lower()[i]),
                None => format!("{d}[{},*]", c.lower()[i]),
            })
            .collect();
        let _ = writeln!(out, "cube: {}", items.join(" "));
    }
    out
}

fn render_multiset(dims: &[String], v: &[u32]) -> String {
    let items: Vec<String> = dims.iter().zip(v).filter(|(_, &k)| k > 0).map(|(d, k)| format!("{d}:{k}")).collect();
    items.join(",")
}

pub fn write_semilinear_set(s: &SemilinearSet) -> String {
    let mut out = format!("dims: {}\n", s.dims().join(" "));
    for c in s.cones() {
        let _ = write!(out, "cone: base{{{}}}", render_multiset(s.dims(), c.base()));
        for p in c.periods() {
            let _ = write!(out, " period{{{}}}", render_multiset(s.dims(), p));
        }
        out.push('\n');
    }
    out
}

/// Parses `q1:3,q2:1` into a configuration of `p`.
pub fn parse_config(p: &Protocol, text: &str) -> Result<Configuration, ParseError> {
    let mut c = Configuration::zero(p.num_states());
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (s, k) = item.split_once(':').ok_or_else(|| syntax(1, format!("expected `state:count`, got `{item}`")))?;
        let q = p.state_id(s.trim()).ok_or_else(|| syntax(1, format!("unknown state `{}`", s.trim())))?;
        let k = number(1, k)?;
        if c.get(q).checked_add(k).is_none() {
            return Err(syntax(1, "count overflow"));
        }
        c.add(q, k);
    }
    Ok(c)
}

/// Parses `1..8` (inclusive), a single size, or a comma list of either.
pub fn parse_sizes(text: &str) -> Result<Vec<u32>, ParseError> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b) = (number(1, a)?, number(1, b)?);
            if a > b {
                return Err(syntax(1, format!("empty range `{item}`")));
            }
            if b - a > 10_000 {
                return Err(syntax(1, format!("range `{item}` too long")));
            }
            out.extend(a..=b);
        } else {
            out.push(number(1, item)?);
        }
    }
    Ok(out)
}
