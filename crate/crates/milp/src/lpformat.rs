//! Reading and writing models in CPLEX LP text format.
//!
//! The writer lists every column in the objective (zero coefficients included)
//! so that column order survives a round trip. The objective constant goes in a
//! `\ offset:` comment line, which the reader picks up again.

use std::fmt::Write as _;

use crate::error::{MilpError, Result};
use crate::model::{Col, Comparator, Model, VarKind};

const OFFSET_TAG: &str = "\\ offset:";

pub fn write_lp(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{OFFSET_TAG} {}", model.offset);
    out.push_str("Maximize\n obj:");
    for (j, c) in model.columns.iter().enumerate() {
        push_term(&mut out, c.obj, &model.columns[j].name, j == 0);
    }
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.name);
        if row.terms.is_empty() {
            // An empty row still needs a column reference to parse.
            if let Some(c) = model.columns.first() {
                push_term(&mut out, 0.0, &c.name, true);
            }
        }
        for (k, &(c, a)) in row.terms.iter().enumerate() {
            push_term(&mut out, a, &model.columns[c.0].name, k == 0);
        }
        let _ = writeln!(out, " {} {}", row.cmp, row.rhs);
    }
    out.push_str("Bounds\n");
    for c in model.columns.iter().filter(|c| c.kind == VarKind::Continuous) {
        let _ = writeln!(out, " {} <= {} <= {}", c.lower, c.name, c.upper);
    }
    let binaries: Vec<&str> = model
        .columns
        .iter()
        .filter(|c| c.kind == VarKind::Binary)
        .map(|c| c.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for name in binaries {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    out
}

fn push_term(out: &mut String, coef: f64, name: &str, first: bool) {
    if coef < 0.0 {
        let _ = write!(out, " - {} {}", -coef, name);
    } else if first {
        let _ = write!(out, " {coef} {name}");
    } else {
        let _ = write!(out, " + {coef} {name}");
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Cmp(Comparator),
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
    let lower = line.trim().to_ascii_lowercase();
    let s = match lower.as_str() {
        "maximize" | "maximise" | "maximum" | "max" => return Some((Section::Objective, true)),
        "minimize" | "minimise" | "minimum" | "min" => return Some((Section::Objective, false)),
        "subject to" | "such that" | "st" | "s.t." | "st." => Section::Constraints,
        "bounds" | "bound" => Section::Bounds,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "end" => Section::End,
        _ => return None,
    };
    Some((s, true))
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_.[]{}!\"#$%&()/,;?@'`|~".contains(c)
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Tok>> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            ':' => {
                toks.push(Tok::Colon);
                i += 1;
            }
            '<' | '>' | '=' => {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j], '=' | '<' | '>') {
                    j += 1;
                }
                let op: String = chars[i..j].iter().collect();
                let cmp = match op.as_str() {
                    "<" | "<=" | "=<" => Comparator::Le,
                    ">" | ">=" | "=>" => Comparator::Ge,
                    "=" | "==" => Comparator::Eq,
                    _ => {
                        return Err(MilpError::Parse {
                            line,
                            message: format!("unknown operator `{op}`"),
                        })
                    }
                };
                toks.push(Tok::Cmp(cmp));
                i = j;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '+' || d == '-') && j > i && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[i..j].iter().collect();
                let v = s.parse::<f64>().map_err(|_| MilpError::Parse {
                    line,
                    message: format!("bad number `{s}`"),
                })?;
                toks.push(Tok::Num(v));
                i = j;
            }
            _ if is_name_char(c) => {
                let mut j = i;
                while j < chars.len() && is_name_char(chars[j]) {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                match s.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => toks.push(Tok::Num(f64::INFINITY)),
                    _ => toks.push(Tok::Name(s)),
                }
                i = j;
            }
            _ => {
                return Err(MilpError::Parse {
                    line,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(toks)
}

struct Reader {
    model: Model,
    line: usize,
}

impl Reader {
    fn err(&self, message: impl Into<String>) -> MilpError {
        MilpError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn column(&mut self, name: &str) -> Col {
        match self.model.column_by_name(name) {
            Some(c) => c,
            None => self.model.add_continuous(name, 0.0, f64::INFINITY, 0.0),
        }
    }

    /// Parses `[+|-] [coef] name ...` until a comparator or the end of input.
    fn linear(&mut self, toks: &[Tok], mut i: usize) -> Result<(Vec<(Col, f64)>, usize)> {
        let mut terms = Vec::new();
        while i < toks.len() && !matches!(toks[i], Tok::Cmp(_)) {
            let mut sign = 1.0;
            while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
                if *t == Tok::Minus {
                    sign = -sign;
                }
                i += 1;
            }
            let mut coef = 1.0;
            if let Some(Tok::Num(v)) = toks.get(i) {
                coef = *v;
                i += 1;
            }
            match toks.get(i) {
                Some(Tok::Name(n)) => {
                    let c = self.column(n);
                    terms.push((c, sign * coef));
                    i += 1;
                }
                _ => return Err(self.err("expected a column name")),
            }
        }
        Ok((terms, i))
    }

    fn signed_number(&self, toks: &[Tok], mut i: usize) -> Result<(f64, usize)> {
        let mut sign = 1.0;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
            if *t == Tok::Minus {
                sign = -sign;
            }
            i += 1;
        }
        match toks.get(i) {
            Some(Tok::Num(v)) => Ok((sign * v, i + 1)),
            _ => Err(self.err("expected a number")),
        }
    }

    fn objective(&mut self, toks: &[Tok], maximize: bool) -> Result<()> {
        let start = match toks {
            [Tok::Name(_), Tok::Colon, ..] => 2,
            _ => 0,
        };
        let (terms, end) = self.linear(toks, start)?;
        if end != toks.len() {
            return Err(self.err("comparator in objective"));
        }
        let sign = if maximize { 1.0 } else { -1.0 };
        for (c, a) in terms {
            self.model.add_obj(c, sign * a);
        }
        Ok(())
    }

    /// Parses one constraint starting at `i`; returns the index after it.
    fn constraint(&mut self, toks: &[Tok], i: usize, counter: &mut usize) -> Result<usize> {
        let (name, start) = match (toks.get(i), toks.get(i + 1)) {
            (Some(Tok::Name(n)), Some(Tok::Colon)) => (n.clone(), i + 2),
            _ => {
                *counter += 1;
                (format!("r{}", *counter), i)
            }
        };
        let (terms, j) = self.linear(toks, start)?;
        let Some(Tok::Cmp(cmp)) = toks.get(j) else {
            return Err(self.err(format!("constraint `{name}` has no comparator")));
        };
        let (rhs, end) = self.signed_number(toks, j + 1)?;
        self.model.add_row(name, terms, *cmp, rhs);
        Ok(end)
    }

    fn bound(&mut self, toks: &[Tok]) -> Result<()> {
        let set_lower = |m: &mut Model, c: Col, v: f64| {
            let hi = m.columns[c.0].upper;
            m.set_bounds(c, v, hi);
        };
        let set_upper = |m: &mut Model, c: Col, v: f64| {
            let lo = m.columns[c.0].lower;
            m.set_bounds(c, lo, v);
        };
        let flip = |cmp: Comparator| match cmp {
            Comparator::Le => Comparator::Ge,
            Comparator::Ge => Comparator::Le,
            Comparator::Eq => Comparator::Eq,
        };
        let apply = |m: &mut Model, c: Col, cmp: Comparator, v: f64| match cmp {
            Comparator::Le => set_upper(m, c, v),
            Comparator::Ge => set_lower(m, c, v),
            Comparator::Eq => m.set_bounds(c, v, v),
        };
        // `name free`
        if let [Tok::Name(n), Tok::Name(kw)] = toks {
            if kw.eq_ignore_ascii_case("free") {
                let c = self.column(n);
                self.model.set_bounds(c, f64::NEG_INFINITY, f64::INFINITY);
                return Ok(());
            }
        }
        if let Some(Tok::Name(n)) = toks.first() {
            // `name cmp value`
            let c = self.column(n);
            let Some(Tok::Cmp(cmp)) = toks.get(1) else {
                return Err(self.err("malformed bound"));
            };
            let (v, end) = self.signed_number(toks, 2)?;
            if end != toks.len() {
                return Err(self.err("trailing tokens in bound"));
            }
            apply(&mut self.model, c, *cmp, v);
            return Ok(());
        }
        // `value cmp name [cmp value]`
        let (v, i) = self.signed_number(toks, 0)?;
        let (Some(Tok::Cmp(cmp)), Some(Tok::Name(n))) = (toks.get(i), toks.get(i + 1)) else {
            return Err(self.err("malformed bound"));
        };
        let c = self.column(n);
        apply(&mut self.model, c, flip(*cmp), v);
        if i + 2 < toks.len() {
            let Some(Tok::Cmp(cmp2)) = toks.get(i + 2) else {
                return Err(self.err("malformed bound"));
            };
            let (v2, end) = self.signed_number(toks, i + 3)?;
            if end != toks.len() {
                return Err(self.err("trailing tokens in bound"));
            }
            apply(&mut self.model, c, *cmp2, v2);
        }
        Ok(())
    }
}

/// Parses CPLEX LP text. Columns default to `[0, inf)`; the result is validated.
pub fn read_lp(text: &str) -> Result<Model> {
    let mut r = Reader {
        model: Model::new(),
        line: 0,
    };
    let mut section = Section::Preamble;
    let mut maximize = true;
    let mut offset = 0.0;
    let mut pending: Vec<Tok> = Vec::new();
    let mut pending_line = 0;
    let mut counter = 0;

    let flush = |r: &mut Reader, section: Section, maximize: bool, pending: &mut Vec<Tok>, counter: &mut usize| -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let toks = std::mem::take(pending);
        match section {
            Section::Objective => r.objective(&toks, maximize),
            Section::Constraints => {
                let mut i = 0;
                while i < toks.len() {
                    i = r.constraint(&toks, i, counter)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        r.line = idx + 1;
        let trimmed = raw.trim();
        if let Some(rest) = trimmed.strip_prefix(OFFSET_TAG) {
            offset = rest.trim().parse::<f64>().map_err(|_| r.err("bad offset comment"))?;
            continue;
        }
        let body = match trimmed.find('\\') {
            Some(p) => &trimmed[..p],
            None => trimmed,
        };
        if body.is_empty() {
            continue;
        }
        if let Some((next, max)) = section_header(body) {
            r.line = pending_line.max(1);
            flush(&mut r, section, maximize, &mut pending, &mut counter)?;
            r.line = idx + 1;
            section = next;
            if next == Section::Objective {
                maximize = max;
            }
            if next == Section::End {
                break;
            }
            continue;
        }
        match section {
            Section::Preamble | Section::End => return Err(r.err("content outside any section")),
            Section::Objective | Section::Constraints => {
                if pending.is_empty() {
                    pending_line = idx + 1;
                }
                pending.extend(tokenize(body, idx + 1)?);
            }
            Section::Bounds => {
                let toks = tokenize(body, idx + 1)?;
                r.bound(&toks)?;
            }
            Section::Binaries => {
                for name in body.split_whitespace() {
                    let c = r.column(name);
                    let col = &mut r.model.columns[c.0];
                    col.kind = VarKind::Binary;
                    col.lower = 0.0;
                    col.upper = 1.0;
                }
            }
        }
    }
    r.line = pending_line.max(1);
    flush(&mut r, section, maximize, &mut pending, &mut counter)?;
    r.model.offset = if maximize { offset } else { -offset };
    r.model.validate()?;
    Ok(r.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_model() {
        let mut m = Model::new();
        let x = m.add_continuous("x_0_1_0", -2.0, 3.5, 1.25);
        let z = m.add_binary("z_1_1_0", -0.5);
        let y = m.add_continuous("y", 0.0, 1e6, 0.0);
        m.add_row("cap", [(x, 1.0), (z, -4.0)], Comparator::Le, 0.0);
        m.add_row("link", [(x, 2.0), (y, -1.0)], Comparator::Eq, -1.5e-3);
        m.add_row("floor", [(y, 1.0)], Comparator::Ge, 1e-12);
        m.offset = 7.125;
        let back = read_lp(&write_lp(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reads_hand_written_minimization() {
        let text = "\\ a comment\nMinimize\n cost: 2 a\n + 3 b\nSubject To\n c1: a + b >= 1\n -a + b <= 0.5\nBounds\n a <= 4\n 0 <= b <= 2\nBinary\n k\nEnd\n";
        let m = read_lp(text).unwrap();
        assert_eq!(m.num_cols(), 3);
        assert_eq!(m.columns[0].obj, -2.0);
        assert_eq!(m.columns[1].obj, -3.0);
        assert_eq!(m.columns[0].upper, 4.0);
        assert_eq!(m.columns[2].kind, VarKind::Binary);
        assert_eq!(m.rows[1].name, "r1");
        assert_eq!(m.rows[1].terms, vec![(Col(0), -1.0), (Col(1), 1.0)]);
    }

    #[test]
    fn rejects_free_columns() {
        let text = "Maximize\n x\nSubject To\n c: x <= 1\nEnd\n";
        assert!(matches!(read_lp(text), Err(MilpError::UnboundedColumn(_))));
    }

    #[test]
    fn reports_line_of_bad_token() {
        let text = "Maximize\n x\nSubject To\n c: x ^ 2 <= 1\nEnd\n";
        match read_lp(text) {
            Err(MilpError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
