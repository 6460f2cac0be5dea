use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// `(variable index, coefficient)` with distinct indices.
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// Linear model with continuous and binary variables, minimized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpModel {
    pub comments: Vec<String>,
    pub variables: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    index: HashMap<String, usize>,
}

/// Shortest decimal that reads back to the same `f64`.
fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn merge(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (i, a) in terms {
        match out.iter_mut().find(|t| t.0 == i) {
            Some(t) => t.1 += a,
            None => out.push((i, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_comment(&mut self, text: impl Into<String>) {
        self.comments.push(text.into());
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, kind: VarKind) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate variable {name}");
        let (lower, upper) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lower, upper),
        };
        self.index.insert(name.clone(), self.variables.len());
        self.variables.push(Variable {
            name,
            lower,
            upper,
            kind,
        });
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        sense: RowSense,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms: merge(terms),
            sense,
            rhs,
        });
    }

    pub fn set_objective(&mut self, terms: Vec<(usize, f64)>) {
        self.objective = merge(terms);
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Rows with variable names in place of indices, sorted by variable name.
    pub fn named_rows(&self) -> Vec<(String, Vec<(String, f64)>, RowSense, f64)> {
        self.constraints
            .iter()
            .map(|c| {
                let mut t: Vec<(String, f64)> = c
                    .terms
                    .iter()
                    .map(|(i, a)| (self.variables[*i].name.clone(), *a))
                    .collect();
                t.sort_by(|a, b| a.0.cmp(&b.0));
                (c.name.clone(), t, c.sense, c.rhs)
            })
            .collect()
    }

    /// Whether both models declare the same variables, rows and objective,
    /// irrespective of variable order.
    pub fn same_model(&self, other: &LpModel) -> bool {
        let vars = |m: &LpModel| {
            let mut v = m.variables.clone();
            v.sort_by(|a, b| a.name.cmp(&b.name));
            v
        };
        let obj = |m: &LpModel| {
            let mut o: Vec<(String, f64)> = m
                .objective
                .iter()
                .map(|(i, a)| (m.variables[*i].name.clone(), *a))
                .collect();
            o.sort_by(|a, b| a.0.cmp(&b.0));
            o
        };
        vars(self) == vars(other)
            && obj(self) == obj(other)
            && self.named_rows() == other.named_rows()
    }

    pub fn binary_count(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_value(&self, assignment: &[f64]) -> f64 {
        self.objective.iter().map(|(i, a)| a * assignment[*i]).sum()
    }

    /// Largest violation of any row, bound or integrality requirement.
    pub fn max_violation(&self, assignment: &[f64]) -> f64 {
        assert_eq!(assignment.len(), self.variables.len());
        let mut worst = 0.0f64;
        for (v, &x) in self.variables.iter().zip(assignment) {
            worst = worst.max(v.lower - x).max(x - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|(i, a)| a * assignment[*i]).sum();
            let gap = match c.sense {
                RowSense::Le => lhs - c.rhs,
                RowSense::Ge => c.rhs - lhs,
                RowSense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    fn write_terms(&self, out: &mut String, terms: &[(usize, f64)]) {
        if terms.is_empty() {
            // an empty row still needs a variable reference
            let _ = write!(out, " 0 {}", self.variables[0].name);
            return;
        }
        for (n, (i, a)) in terms.iter().enumerate() {
            let sign = if *a < 0.0 { "-" } else { "+" };
            let mag = a.abs();
            if n == 0 && sign == "+" {
                let _ = write!(out, " ");
            } else {
                let _ = write!(out, " {sign} ");
            }
            if mag != 1.0 {
                let _ = write!(out, "{} ", num(mag));
            }
            out.push_str(&self.variables[*i].name);
        }
    }

    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "\\ {c}");
        }
        out.push_str("Minimize\n obj:");
        self.write_terms(&mut out, &self.objective);
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            self.write_terms(&mut out, &c.terms);
            let _ = writeln!(out, " {} {}", c.sense.symbol(), num(c.rhs));
        }
        out.push_str("Bounds\n");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Continuous) {
            match (v.lower, v.upper) {
                (l, u) if l == f64::NEG_INFINITY && u == f64::INFINITY => {
                    let _ = writeln!(out, " {} free", v.name);
                }
                (l, u) if l == u => {
                    let _ = writeln!(out, " {} = {}", v.name, num(l));
                }
                (l, u) => {
                    let _ = writeln!(out, " {} <= {} <= {}", num(l), v.name, num(u));
                }
            }
        }
        let binaries: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            for chunk in binaries.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_lp_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the LP-file subset produced by [`LpModel::to_lp_string`]:
    /// a minimized objective, named rows, bounds, free and fixed variables,
    /// and a binary section. Variables appear in order of first mention.
    pub fn parse(text: &str) -> Result<Self> {
        Parser::default().run(text)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Binaries,
    Done,
}

#[derive(Default)]
struct Parser {
    model: LpModel,
    bounds: HashMap<usize, (f64, f64)>,
    binaries: Vec<usize>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse()
            .map_err(|_| parse_err(line, format!("expected a number, found '{tok}'"))),
    }
}

fn is_number(tok: &str) -> bool {
    tok.parse::<f64>().is_ok()
}

impl Parser {
    fn var(&mut self, name: &str) -> usize {
        match self.model.var_index(name) {
            Some(i) => i,
            None => self.model.add_var(name, 0.0, f64::INFINITY, VarKind::Continuous),
        }
    }

    /// Parses `[±] [coef] name` sequences.
    fn terms(&mut self, toks: &[&str], line: usize) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for &t in toks {
            match t {
                "+" => sign = 1.0,
                "-" => sign = -sign,
                _ if is_number(t) => {
                    if coef.is_some() {
                        return Err(parse_err(line, "two coefficients in a row"));
                    }
                    coef = Some(parse_num(t, line)?);
                }
                _ => {
                    let i = self.var(t);
                    out.push((i, sign * coef.unwrap_or(1.0)));
                    sign = 1.0;
                    coef = None;
                }
            }
        }
        if coef.is_some() {
            return Err(parse_err(line, "coefficient without a variable"));
        }
        Ok(out)
    }

    fn run(mut self, text: &str) -> Result<LpModel> {
        let mut section = Section::Preamble;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let trimmed = raw.trim();
            if let Some(c) = trimmed.strip_prefix('\\') {
                if section == Section::Preamble {
                    self.model.comments.push(c.trim().to_string());
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let lower = trimmed.to_ascii_lowercase();
            let next = match lower.as_str() {
                "minimize" | "minimise" | "min" => Some(Section::Objective),
                "maximize" | "maximise" | "max" => {
                    return Err(parse_err(line, "only minimization models are supported"))
                }
                "subject to" | "such that" | "st" | "s.t." => Some(Section::Rows),
                "bounds" => Some(Section::Bounds),
                "binaries" | "binary" | "bin" => Some(Section::Binaries),
                "end" => Some(Section::Done),
                _ => None,
            };
            if let Some(s) = next {
                section = s;
                continue;
            }
            match section {
                Section::Preamble | Section::Done => {
                    return Err(parse_err(line, format!("unexpected content '{trimmed}'")))
                }
                Section::Objective => {
                    let body = trimmed.split_once(':').map_or(trimmed, |(_, b)| b);
                    let toks = tokens(body);
                    let t = self.terms(&toks, line)?;
                    let mut all = std::mem::take(&mut self.model.objective);
                    all.extend(t);
                    self.model.set_objective(all);
                }
                Section::Rows => self.row(trimmed, line)?,
                Section::Bounds => self.bound(trimmed, line)?,
                Section::Binaries => {
                    for name in trimmed.split_whitespace() {
                        let i = self.var(name);
                        self.binaries.push(i);
                    }
                }
            }
        }
        if section != Section::Done {
            return Err(parse_err(text.lines().count(), "missing End"));
        }
        for (i, (l, u)) in self.bounds {
            self.model.variables[i].lower = l;
            self.model.variables[i].upper = u;
        }
        for i in self.binaries {
            let v = &mut self.model.variables[i];
            v.kind = VarKind::Binary;
            v.lower = 0.0;
            v.upper = 1.0;
        }
        // drop the placeholder reference written for empty rows
        for c in &mut self.model.constraints {
            c.terms.retain(|t| t.1 != 0.0);
        }
        Ok(self.model)
    }

    fn row(&mut self, text: &str, line: usize) -> Result<()> {
        let (name, body) = text
            .split_once(':')
            .ok_or_else(|| parse_err(line, "row without a name"))?;
        let toks = tokens(body);
        let pos = toks
            .iter()
            .position(|t| matches!(*t, "<=" | ">=" | "=" | "=<" | "=>" | "<" | ">"))
            .ok_or_else(|| parse_err(line, "row without a relation"))?;
        let sense = match toks[pos] {
            "<=" | "=<" | "<" => RowSense::Le,
            ">=" | "=>" | ">" => RowSense::Ge,
            _ => RowSense::Eq,
        };
        let rhs_toks = &toks[pos + 1..];
        let rhs = match rhs_toks {
            [v] => parse_num(v, line)?,
            ["-", v] => -parse_num(v, line)?,
            ["+", v] => parse_num(v, line)?,
            _ => return Err(parse_err(line, "right-hand side must be one number")),
        };
        let terms = self.terms(&toks[..pos], line)?;
        self.model.constraints.push(Constraint {
            name: name.trim().to_string(),
            terms: merge_keep(terms),
            sense,
            rhs,
        });
        Ok(())
    }

    fn bound(&mut self, text: &str, line: usize) -> Result<()> {
        let toks: Vec<&str> = text.split_whitespace().collect();
        match toks.as_slice() {
            [name, free] if free.eq_ignore_ascii_case("free") => {
                let i = self.var(name);
                self.bounds.insert(i, (f64::NEG_INFINITY, f64::INFINITY));
            }
            [lo, "<=", name, "<=", hi] => {
                let (l, u) = (parse_num(lo, line)?, parse_num(hi, line)?);
                let i = self.var(name);
                self.bounds.insert(i, (l, u));
            }
            [name, "=", v] => {
                let v = parse_num(v, line)?;
                let i = self.var(name);
                self.bounds.insert(i, (v, v));
            }
            [name, op @ ("<=" | ">="), v] => {
                let v = parse_num(v, line)?;
                let i = self.var(name);
                let cur = self.bounds.get(&i).copied().unwrap_or((0.0, f64::INFINITY));
                let new = if *op == "<=" { (cur.0, v) } else { (v, cur.1) };
                self.bounds.insert(i, new);
            }
            _ => return Err(parse_err(line, format!("unrecognized bound '{text}'"))),
        }
        Ok(())
    }
}

/// Like `merge` but keeps explicit zero coefficients until the end of parsing.
fn merge_keep(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (i, a) in terms {
        match out.iter_mut().find(|t| t.0 == i) {
            Some(t) => t.1 += a,
            None => out.push((i, a)),
        }
    }
    out
}

/// Splits on whitespace and separates relation symbols and signs glued to
/// neighbouring tokens.
fn tokens(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in s.split_whitespace() {
        let mut rest = word;
        while !rest.is_empty() {
            if let Some(op) = ["<=", ">=", "=<", "=>"].iter().find(|op| rest.starts_with(**op)) {
                out.push(&rest[..op.len()]);
                rest = &rest[op.len()..];
                continue;
            }
            let first = rest.as_bytes()[0];
            if matches!(first, b'+' | b'-' | b'<' | b'>' | b'=') && !is_number(rest) {
                out.push(&rest[..1]);
                rest = &rest[1..];
                continue;
            }
            let end = rest
                .char_indices()
                .skip(1)
                .find(|(i, ch)| {
                    matches!(ch, '<' | '>' | '=')
                        || (matches!(ch, '+' | '-')
                            && !matches!(rest.as_bytes()[i - 1], b'e' | b'E'))
                })
                .map_or(rest.len(), |(i, _)| i);
            out.push(&rest[..end]);
            rest = &rest[end..];
        }
    }
    out
}
