//! CPLEX-style LP text format.
//!
//! The writer emits every variable in the objective (zero coefficients
//! included) so that variable order survives a round trip, prints numbers
//! with 17 significant digits, and omits the `Bounds` section when all
//! bounds are the defaults (`[0, inf)` for continuous, `[0, 1]` for binary).
//! The reader accepts the subset produced by the writer plus `Maximize`,
//! free-standing bound forms and comments.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::problem::{LinearProgram, Sense, VarKind};
use crate::{MilpError, Result};

/// Soft limit on emitted line length; long expressions wrap.
const LINE_WIDTH: usize = 250;

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// Append each row's constraint-family tag as a trailing `\ [tag]` comment.
    pub tag_comments: bool,
}

/// Shortest exact-enough rendering: integers plain, otherwise 17 significant
/// digits with trailing zeros trimmed.
pub fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        return "+inf".into();
    }
    if v == f64::NEG_INFINITY {
        return "-inf".into();
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let s = format!("{v:.16e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let mant = if mant.contains('.') {
        mant.trim_end_matches('0').trim_end_matches('.')
    } else {
        mant
    };
    if exp == "0" {
        mant.to_string()
    } else {
        format!("{mant}e{exp}")
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    let lower = name.to_ascii_lowercase();
    if matches!(lower.as_str(), "inf" | "infinity" | "free") {
        return false;
    }
    chars.all(|c| c.is_ascii_alphanumeric() || "_.[]()".contains(c))
}

fn check_names(lp: &LinearProgram) -> Result<()> {
    let mut seen = HashSet::new();
    for v in &lp.variables {
        if !valid_name(&v.name) {
            return Err(MilpError::InvalidName(v.name.clone()));
        }
        if !seen.insert(v.name.as_str()) {
            return Err(MilpError::NameCollision(v.name.clone()));
        }
    }
    let mut rows = HashSet::new();
    for c in &lp.constraints {
        if !valid_name(&c.name) || c.name == "obj" {
            return Err(MilpError::InvalidName(c.name.clone()));
        }
        if !rows.insert(c.name.as_str()) {
            return Err(MilpError::NameCollision(c.name.clone()));
        }
    }
    Ok(())
}

/// Appends `terms` to `out`, wrapping to continuation lines.
fn push_expression(out: &mut String, head: &str, terms: &[String], tail: &str) {
    let mut line = String::from(head);
    for t in terms {
        if line.len() + t.len() + 1 > LINE_WIDTH && line.trim_start().len() > head.trim_start().len() {
            out.push_str(&line);
            out.push('\n');
            line = String::from("   ");
        }
        line.push(' ');
        line.push_str(t);
    }
    if line.len() + tail.len() > LINE_WIDTH && !tail.is_empty() {
        out.push_str(&line);
        out.push('\n');
        line = String::from("   ");
    }
    line.push_str(tail);
    out.push_str(&line);
    out.push('\n');
}

fn term(first: bool, coef: f64, name: &str) -> String {
    let sign = if coef < 0.0 || (coef == 0.0 && coef.is_sign_negative()) {
        "- "
    } else if first {
        ""
    } else {
        "+ "
    };
    let mag = coef.abs();
    if mag == 1.0 {
        format!("{sign}{name}")
    } else {
        format!("{sign}{} {name}", format_number(mag))
    }
}

pub fn write(lp: &LinearProgram) -> Result<String> {
    write_with(lp, WriteOptions::default())
}

pub fn write_with(lp: &LinearProgram, opts: WriteOptions) -> Result<String> {
    lp.validate()?;
    check_names(lp)?;
    let mut out = String::new();
    if !lp.name.is_empty() {
        let _ = writeln!(out, "\\ {}", lp.name.replace('\n', " "));
    }
    out.push_str("Minimize\n");
    let mut terms: Vec<String> = lp
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| term(j == 0, v.objective, &v.name))
        .collect();
    if lp.objective_offset != 0.0 || terms.is_empty() {
        let off = lp.objective_offset;
        let sign = if off < 0.0 { "- " } else if terms.is_empty() { "" } else { "+ " };
        terms.push(format!("{sign}{}", format_number(off.abs())));
    }
    push_expression(&mut out, " obj:", &terms, "");

    out.push_str("Subject To\n");
    for c in &lp.constraints {
        let mut terms: Vec<String> = c
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &(j, a))| term(k == 0, a, &lp.variables[j].name))
            .collect();
        if terms.is_empty() {
            // An empty row still needs a variable to parse; use a zero term.
            let name = lp.variables.first().map_or("x", |v| v.name.as_str());
            terms.push(format!("0 {name}"));
        }
        let mut tail = format!(" {} {}", c.sense.symbol(), format_number(c.rhs));
        if opts.tag_comments && !c.tag.is_empty() {
            let _ = write!(tail, " \\ [{}]", c.tag.replace('\n', " "));
        }
        push_expression(&mut out, &format!(" {}:", c.name), &terms, &tail);
    }

    let mut bounds = String::new();
    for v in &lp.variables {
        let (dlo, dhi) = match v.kind {
            VarKind::Continuous => (0.0, f64::INFINITY),
            VarKind::Binary => (0.0, 1.0),
        };
        if v.lower == dlo && v.upper == dhi {
            continue;
        }
        let line = if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            format!(" {} free", v.name)
        } else if v.lower == v.upper {
            format!(" {} = {}", v.name, format_number(v.lower))
        } else {
            format!(" {} <= {} <= {}", format_number(v.lower), v.name, format_number(v.upper))
        };
        bounds.push_str(&line);
        bounds.push('\n');
    }
    if !bounds.is_empty() {
        out.push_str("Bounds\n");
        out.push_str(&bounds);
    }
    let bins: Vec<String> = lp
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.clone())
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        push_expression(&mut out, "", &bins, "");
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Op(Sense),
}

fn perr(line: usize, message: impl Into<String>) -> MilpError {
    MilpError::Parse { line, message: message.into() }
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Tok>> {
    let b = text.as_bytes();
    let mut i = 0;
    let mut toks = Vec::new();
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            toks.push(Tok::Plus);
            i += 1;
        } else if c == '-' {
            toks.push(Tok::Minus);
            i += 1;
        } else if c == ':' {
            toks.push(Tok::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let mut j = i + 1;
            while j < b.len() && matches!(b[j], b'<' | b'>' | b'=') {
                j += 1;
            }
            let op = &text[i..j];
            let sense = match op {
                "<=" | "=<" | "<" => Sense::Le,
                ">=" | "=>" | ">" => Sense::Ge,
                "=" => Sense::Eq,
                _ => return Err(perr(line, format!("bad operator {op}"))),
            };
            toks.push(Tok::Op(sense));
            i = j;
        } else if c.is_ascii_digit() || c == '.' {
            let mut j = i;
            while j < b.len() && (b[j].is_ascii_digit() || b[j] == b'.') {
                j += 1;
            }
            if j < b.len() && (b[j] == b'e' || b[j] == b'E') {
                let mut k = j + 1;
                if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
                    k += 1;
                }
                if k < b.len() && b[k].is_ascii_digit() {
                    while k < b.len() && b[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let v: f64 = text[i..j]
                .parse()
                .map_err(|_| perr(line, format!("bad number {}", &text[i..j])))?;
            toks.push(Tok::Num(v));
            i = j;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < b.len() && ((b[j] as char).is_ascii_alphanumeric() || "_.[]()".contains(b[j] as char)) {
                j += 1;
            }
            let word = &text[i..j];
            let lw = word.to_ascii_lowercase();
            if lw == "inf" || lw == "infinity" {
                toks.push(Tok::Num(f64::INFINITY));
            } else {
                toks.push(Tok::Name(word.to_string()));
            }
            i = j;
        } else {
            return Err(perr(line, format!("unexpected character {c:?}")));
        }
    }
    Ok(toks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

fn section_header(line: &str) -> Option<(Section, bool)> {
    let l = line.trim().to_ascii_lowercase();
    match l.as_str() {
        "minimize" | "minimise" | "minimum" | "min" => Some((Section::Objective, false)),
        "maximize" | "maximise" | "maximum" | "max" => Some((Section::Objective, true)),
        "subject to" | "such that" | "st" | "s.t." | "st." => Some((Section::Constraints, false)),
        "bounds" | "bound" => Some((Section::Bounds, false)),
        "binaries" | "binary" | "bin" => Some((Section::Binaries, false)),
        "end" => Some((Section::End, false)),
        _ => None,
    }
}

struct Builder {
    lp: LinearProgram,
    index: HashMap<String, usize>,
    bounded: HashSet<usize>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        let j = self.lp.add_variable(name, VarKind::Continuous, 0.0, f64::INFINITY, 0.0);
        self.index.insert(name.to_string(), j);
        j
    }
}

/// Linear expression: coefficients per variable plus a constant.
fn parse_expression(
    b: &mut Builder,
    toks: &[Tok],
    line: usize,
) -> Result<(Vec<(usize, f64)>, f64)> {
    let mut coeffs: Vec<(usize, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for t in toks {
        match t {
            Tok::Plus => {
                if let Some(c) = coef.take() {
                    constant += sign * c;
                    sign = 1.0;
                }
            }
            Tok::Minus => {
                if let Some(c) = coef.take() {
                    constant += sign * c;
                    sign = 1.0;
                }
                sign = -sign;
            }
            Tok::Num(v) => {
                if coef.is_some() {
                    return Err(perr(line, "two numbers in a row"));
                }
                coef = Some(*v);
            }
            Tok::Name(n) => {
                let j = b.var(n);
                let a = sign * coef.take().unwrap_or(1.0);
                match coeffs.iter_mut().find(|(k, _)| *k == j) {
                    Some(e) => e.1 += a,
                    None => coeffs.push((j, a)),
                }
                sign = 1.0;
            }
            Tok::Colon | Tok::Op(_) => return Err(perr(line, "unexpected operator in expression")),
        }
    }
    if let Some(c) = coef {
        constant += sign * c;
    }
    Ok((coeffs, constant))
}

/// Split off a leading `label:`.
fn take_label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    match toks {
        [Tok::Name(n), Tok::Colon, rest @ ..] => (Some(n.clone()), rest),
        _ => (None, toks),
    }
}

fn signed_number(toks: &[Tok], line: usize) -> Result<f64> {
    match toks {
        [Tok::Num(v)] => Ok(*v),
        [Tok::Plus, Tok::Num(v)] => Ok(*v),
        [Tok::Minus, Tok::Num(v)] => Ok(-*v),
        _ => Err(perr(line, "expected a number")),
    }
}

fn parse_bound(b: &mut Builder, toks: &[Tok], line: usize) -> Result<()> {
    let ops: Vec<usize> = toks
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t, Tok::Op(_)))
        .map(|(i, _)| i)
        .collect();
    let name_of = |ts: &[Tok]| match ts {
        [Tok::Name(n)] => Some(n.clone()),
        _ => None,
    };
    match ops.as_slice() {
        [] => match toks {
            [Tok::Name(n), Tok::Name(kw)] if kw.eq_ignore_ascii_case("free") => {
                let j = b.var(n);
                b.lp.variables[j].lower = f64::NEG_INFINITY;
                b.lp.variables[j].upper = f64::INFINITY;
                b.bounded.insert(j);
                Ok(())
            }
            _ => Err(perr(line, "unrecognised bound")),
        },
        [k] => {
            let Tok::Op(sense) = toks[*k] else { unreachable!() };
            let (lhs, rhs) = (&toks[..*k], &toks[*k + 1..]);
            let (name, value, sense) = if let Some(n) = name_of(lhs) {
                (n, signed_number(rhs, line)?, sense)
            } else if let Some(n) = name_of(rhs) {
                let flipped = match sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
                (n, signed_number(lhs, line)?, flipped)
            } else {
                return Err(perr(line, "bound needs a single variable"));
            };
            let j = b.var(&name);
            b.bounded.insert(j);
            let v = &mut b.lp.variables[j];
            match sense {
                Sense::Le => v.upper = value,
                Sense::Ge => v.lower = value,
                Sense::Eq => {
                    v.lower = value;
                    v.upper = value;
                }
            }
            Ok(())
        }
        [k1, k2] => {
            let lo = signed_number(&toks[..*k1], line)?;
            let n = name_of(&toks[*k1 + 1..*k2]).ok_or_else(|| perr(line, "bound needs a variable"))?;
            let hi = signed_number(&toks[*k2 + 1..], line)?;
            if toks[*k1] != Tok::Op(Sense::Le) || toks[*k2] != Tok::Op(Sense::Le) {
                return Err(perr(line, "double bound must use <="));
            }
            let j = b.var(&n);
            b.bounded.insert(j);
            b.lp.variables[j].lower = lo;
            b.lp.variables[j].upper = hi;
            Ok(())
        }
        _ => Err(perr(line, "too many operators in bound")),
    }
}

pub fn parse(text: &str) -> Result<LinearProgram> {
    let mut b = Builder {
        lp: LinearProgram::new(""),
        index: HashMap::new(),
        bounded: HashSet::new(),
    };
    let mut section = Section::Preamble;
    let mut maximize = false;
    let mut objective: Vec<Tok> = Vec::new();
    let mut objective_line = 0;
    // Pending constraint tokens and the line where the statement started.
    let mut pending: Vec<Tok> = Vec::new();
    let mut pending_line = 0;
    let mut binaries: Vec<(String, usize)> = Vec::new();
    let mut first_comment: Option<String> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let (content, comment) = match raw.find('\\') {
            Some(p) => (&raw[..p], Some(&raw[p + 1..])),
            None => (raw, None),
        };
        if section == Section::Preamble && first_comment.is_none() && content.trim().is_empty() {
            if let Some(c) = comment {
                first_comment = Some(c.trim().to_string());
            }
        }
        if content.trim().is_empty() {
            continue;
        }
        if let Some((next, max)) = section_header(content) {
            if !pending.is_empty() {
                return Err(perr(pending_line, "incomplete constraint"));
            }
            if next == Section::Objective {
                maximize = max;
                objective_line = line_no;
            }
            section = next;
            continue;
        }
        // The objective must be parsed before constraints to fix variable order.
        if section != Section::Objective && !objective.is_empty() {
            let toks = std::mem::take(&mut objective);
            set_objective(&mut b, &toks, objective_line, maximize)?;
        }
        let toks = tokenize(content, line_no)?;
        match section {
            Section::Preamble => return Err(perr(line_no, "content before objective section")),
            Section::End => return Err(perr(line_no, "content after End")),
            Section::Objective => objective.extend(toks),
            Section::Constraints => {
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.extend(toks);
                // A statement is complete once an operator is followed by its rhs.
                if let Some(k) = pending.iter().position(|t| matches!(t, Tok::Op(_))) {
                    let rhs = &pending[k + 1..];
                    if matches!(rhs, [Tok::Num(_)] | [Tok::Plus | Tok::Minus, Tok::Num(_)]) {
                        let stmt = std::mem::take(&mut pending);
                        let (label, body) = take_label(&stmt);
                        let k = body.iter().position(|t| matches!(t, Tok::Op(_))).expect("operator");
                        let Tok::Op(sense) = body[k] else { unreachable!() };
                        let rhs = signed_number(&body[k + 1..], pending_line)?;
                        let (coeffs, constant) = parse_expression(&mut b, &body[..k], pending_line)?;
                        let name = label.unwrap_or_else(|| format!("R{}", b.lp.num_rows() + 1));
                        b.lp.add_constraint(name, "", coeffs, sense, rhs - constant);
                    }
                }
            }
            Section::Bounds => parse_bound(&mut b, &toks, line_no)?,
            Section::Binaries => {
                for t in toks {
                    match t {
                        Tok::Name(n) => binaries.push((n, line_no)),
                        _ => return Err(perr(line_no, "expected variable names")),
                    }
                }
            }
        }
    }
    if !objective.is_empty() {
        let toks = std::mem::take(&mut objective);
        set_objective(&mut b, &toks, objective_line, maximize)?;
    }
    if !pending.is_empty() {
        return Err(perr(pending_line, "incomplete constraint"));
    }
    if section != Section::End {
        return Err(perr(text.lines().count(), "missing End"));
    }
    for (n, line) in binaries {
        let j = *b.index.get(&n).ok_or_else(|| perr(line, format!("unknown binary {n}")))?;
        let v = &mut b.lp.variables[j];
        v.kind = VarKind::Binary;
        if !b.bounded.contains(&j) {
            v.lower = 0.0;
            v.upper = 1.0;
        }
    }
    if let Some(name) = first_comment {
        b.lp.name = name;
    }
    Ok(b.lp)
}

fn set_objective(b: &mut Builder, toks: &[Tok], line: usize, maximize: bool) -> Result<()> {
    let (_, body) = take_label(toks);
    let (coeffs, constant) = parse_expression(b, body, line)?;
    let s = if maximize { -1.0 } else { 1.0 };
    for (j, a) in coeffs {
        b.lp.variables[j].objective = s * a;
    }
    b.lp.objective_offset = s * constant;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(-2.0), "-2");
        assert_eq!(format_number(0.5), "5e-1");
        assert_eq!(format_number(0.1).parse::<f64>().unwrap(), 0.1);
        let third = 1.0 / 3.0;
        assert_eq!(format_number(third).parse::<f64>().unwrap(), third);
    }

    #[test]
    fn one_variable_file_has_five_lines() {
        let mut lp = LinearProgram::new("");
        let x = lp.add_variable("x", VarKind::Continuous, 0.0, f64::INFINITY, 1.0);
        lp.add_constraint("c", "", vec![(x, 1.0)], Sense::Ge, 1.0);
        let text = write(&lp).unwrap();
        assert_eq!(text, "Minimize\n obj: x\nSubject To\n c: x >= 1\nEnd\n");
        assert_eq!(parse(&text).unwrap(), lp);
    }

    #[test]
    fn collisions_and_bad_names_rejected() {
        let mut lp = LinearProgram::new("");
        lp.add_variable("x", VarKind::Continuous, 0.0, 1.0, 1.0);
        lp.add_variable("x", VarKind::Continuous, 0.0, 1.0, 1.0);
        assert!(matches!(write(&lp), Err(MilpError::NameCollision(_))));
        lp.variables[1].name = "2y".into();
        assert!(matches!(write(&lp), Err(MilpError::InvalidName(_))));
    }

    #[test]
    fn parses_maximize_and_bound_forms() {
        let text = "\\ demo\nMaximize\n obj: 2 x + 3 y - 1\nSubject To\n c1: x + y <= 4\n c2: x - y >= -2\nBounds\n y <= 3\n -1 <= x <= 5\n z free\nBinaries\n b\nEnd\n";
        let lp = parse(text.replace("z free\n", "z free\n b >= 0\n").as_str()).unwrap();
        assert_eq!(lp.name, "demo");
        assert_eq!(lp.variables[0].objective, -2.0);
        assert_eq!(lp.objective_offset, 1.0);
        assert_eq!(lp.variables[1].upper, 3.0);
        assert_eq!(lp.variables[0].lower, -1.0);
        assert_eq!(lp.variables[2].lower, f64::NEG_INFINITY);
        assert_eq!(lp.variables[3].kind, VarKind::Binary);
        assert_eq!(lp.constraints[1].rhs, -2.0);
    }
}
