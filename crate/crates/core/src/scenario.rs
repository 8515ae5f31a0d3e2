//! Scenario files: a generator, unit expressions over it, and the checks to run.
//!
//! The format is line oriented. `#` starts a comment. Directives:
//!
//! ```text
//! name NAME
//! dim D
//! labels L1 L2 …
//! horizon T
//! schedule dyadic:MIN:MAX | random:COUNT
//! seed N
//! matrix NAME = [[a, b], [c, d]]
//! generator ce                      then:  eta L = MATRIX   beta L = MATRIX
//! generator covariance              then:  gamma = MATRIX
//! generator units                   then:  unit L = ALPHA, [c1, c2, …]
//! generator kernel PATH
//! expr NAME = EXPRESSION
//! normalize NAME = LABEL [side left|right] [h MATRIX]
//! check NAME [vs LABEL] [expect VERDICT]
//! fock vs w|zeta [expect VERDICT]
//! threshold converged|min_rate|plateau|exact VALUE
//! ```
//!
//! Matrix entries are complex literals such as `1`, `-0.5`, `2i`, `1-0.5i`.
//! Expressions use the grammar of [`crate::expr`]. `generator units` takes
//! scalar units `t ↦ e^{tα} ψ(c𝟙_{[0,t]})` and requires `dim 1`. Without a
//! `vs` clause a check compares against the adjoined unit `ζ`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::algebra::{Element, C64, PSD_TOL};
use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExprContext};
use crate::fock::{self, UnitParams};
use crate::kernels::{self, ConditionalConfig, ConditionalReport, OperatorKernel};
use crate::trotter::{self, ConvergenceReport, ScheduleSpec, Thresholds, Verdict, VerdictOptions};
use crate::units::{self, ExtensionOptions, TwistSide, UnitExpression, ZETA};

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSpec {
    Ce { eta: BTreeMap<String, Element>, beta: BTreeMap<String, Element> },
    Covariance { gamma: Element },
    Units { units: Vec<(String, UnitParams)> },
    Kernel { path: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedExpression {
    pub name: String,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Normalize {
    pub name: String,
    pub label: String,
    pub side: TwistSide,
    pub h: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub expr: String,
    pub reference: Option<String>,
    pub expect: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockCheck {
    /// `"w"` or `"zeta"`.
    pub reference: String,
    pub expect: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub labels: Vec<String>,
    pub horizon: f64,
    pub schedule: ScheduleSpec,
    pub seed: u64,
    pub matrices: BTreeMap<String, Element>,
    pub generator: Option<GeneratorSpec>,
    pub expressions: Vec<NamedExpression>,
    pub normalizations: Vec<Normalize>,
    pub checks: Vec<Check>,
    pub fock: Vec<FockCheck>,
    pub thresholds: Thresholds,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "scenario".into(),
            dim: 1,
            labels: Vec::new(),
            horizon: 1.0,
            schedule: ScheduleSpec::default(),
            seed: 0,
            matrices: BTreeMap::new(),
            generator: None,
            expressions: Vec::new(),
            normalizations: Vec::new(),
            checks: Vec::new(),
            fock: Vec::new(),
            thresholds: Thresholds::default(),
        }
    }
}

/// Parses a complex literal: `1`, `-2.5e-3`, `2i`, `-i`, `1+2i`, `0.5-0.25i`.
pub fn parse_complex(s: &str) -> Option<C64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| C64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().ok()?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().ok()?,
    };
    Some(C64::new(re, im))
}

pub fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

/// Parses `[[a, b], [c, d]]`; `column` locates `src` in its line for errors.
pub fn parse_matrix(src: &str, line: usize, column: usize) -> Result<Element> {
    let err = |offset: usize, msg: String| Error::parse(line, column + offset, msg);
    let chars: Vec<char> = src.chars().collect();
    let mut rows: Vec<Vec<C64>> = Vec::new();
    let mut depth = 0;
    let mut current: Vec<C64> = Vec::new();
    let mut cell = String::new();
    let mut cell_start = 0;
    let mut closed = false;
    for (i, &c) in chars.iter().enumerate() {
        if closed && !c.is_whitespace() {
            return Err(err(i, "trailing characters after matrix".into()));
        }
        match c {
            '[' => {
                depth += 1;
                if depth > 2 {
                    return Err(err(i, "matrices nest two levels deep".into()));
                }
                cell_start = i + 1;
            }
            ',' | ']' if depth == 2 => {
                let text = cell.trim();
                let z = parse_complex(text).ok_or_else(|| err(cell_start, format!("bad matrix entry `{text}`")))?;
                current.push(z);
                cell.clear();
                cell_start = i + 1;
                if c == ']' {
                    depth -= 1;
                    rows.push(std::mem::take(&mut current));
                }
            }
            ',' if depth == 1 => {}
            ']' if depth == 1 => {
                depth = 0;
                closed = true;
            }
            c if c.is_whitespace() && depth < 2 => {}
            c if depth == 2 => cell.push(c),
            _ => return Err(err(i, format!("unexpected `{c}` in matrix"))),
        }
    }
    if !closed {
        return Err(err(chars.len(), "unterminated matrix".into()));
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(err(0, "matrix rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn format_matrix(m: &Element) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// 1-based column of `part`, which must be a subslice of `line`.
fn column_of(line: &str, part: &str) -> usize {
    let offset = (part.as_ptr() as usize).saturating_sub(line.as_ptr() as usize).min(line.len());
    line.get(..offset).map_or(1, |s| s.chars().count() + 1)
}

/// Splits `NAME = VALUE`, returning both sides as slices of `line` and the value's column.
fn split_assignment<'a>(line: &'a str, rest: &'a str, ln: usize) -> Result<(&'a str, &'a str, usize)> {
    let (lhs, rhs) = rest.split_once('=').ok_or_else(|| Error::parse(ln, column_of(line, rest), "expected `NAME = …`"))?;
    let rhs = rhs.trim();
    Ok((lhs.trim(), rhs, column_of(line, rhs)))
}

enum Section {
    None,
    Ce,
    Covariance,
    Units,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        let mut section = Section::None;
        let mut pending: Vec<(NamedExpression, usize, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let ln = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let (key, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
            let rest = rest.trim();
            let col = column_of(line, rest);
            let perr = |c: usize, m: String| Error::parse(ln, c, m);
            let assignment = |rest| split_assignment(line, rest, ln);
            match key {
                "name" => sc.name = rest.to_string(),
                "dim" => sc.dim = rest.parse().ok().filter(|d| *d > 0).ok_or_else(|| perr(col, format!("bad dimension `{rest}`")))?,
                "labels" => {
                    sc.labels = rest.split_whitespace().map(str::to_string).collect();
                    for (i, l) in sc.labels.iter().enumerate() {
                        if sc.labels[..i].contains(l) {
                            return Err(perr(col, format!("duplicate label `{l}`")));
                        }
                        if l == ZETA || l == "t" || l == "concat" || l == "expm" {
                            return Err(perr(col, format!("`{l}` is reserved")));
                        }
                    }
                }
                "horizon" => {
                    sc.horizon = rest.parse().ok().filter(|t: &f64| *t > 0.0 && t.is_finite()).ok_or_else(|| perr(col, format!("bad horizon `{rest}`")))?
                }
                "schedule" => sc.schedule = rest.parse().map_err(|m| perr(col, m))?,
                "seed" => sc.seed = rest.parse().map_err(|_| perr(col, format!("bad seed `{rest}`")))?,
                "matrix" => {
                    let (name, rhs, c) = assignment(rest)?;
                    sc.matrices.insert(name.to_string(), parse_matrix(rhs, ln, c)?);
                }
                "generator" => {
                    let (kind, arg) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                    section = Section::None;
                    sc.generator = Some(match kind {
                        "ce" => {
                            section = Section::Ce;
                            GeneratorSpec::Ce { eta: BTreeMap::new(), beta: BTreeMap::new() }
                        }
                        "covariance" => {
                            section = Section::Covariance;
                            GeneratorSpec::Covariance { gamma: DMatrix::zeros(0, 0) }
                        }
                        "units" => {
                            section = Section::Units;
                            GeneratorSpec::Units { units: Vec::new() }
                        }
                        "kernel" if !arg.trim().is_empty() => GeneratorSpec::Kernel { path: arg.trim().to_string() },
                        _ => return Err(perr(col, format!("unknown generator `{rest}`"))),
                    });
                }
                "eta" | "beta" => {
                    let (label, rhs, c) = assignment(rest)?;
                    let m = parse_matrix(rhs, ln, c)?;
                    match (&section, sc.generator.as_mut()) {
                        (Section::Ce, Some(GeneratorSpec::Ce { eta, beta })) => {
                            let target = if key == "eta" { eta } else { beta };
                            if target.insert(label.to_string(), m).is_some() {
                                return Err(perr(col, format!("{key} for `{label}` given twice")));
                            }
                        }
                        _ => return Err(perr(1, format!("`{key}` outside `generator ce`"))),
                    }
                }
                "gamma" => {
                    let (_, rhs, c) = assignment(rest)?;
                    match (&section, sc.generator.as_mut()) {
                        (Section::Covariance, Some(GeneratorSpec::Covariance { gamma })) => *gamma = parse_matrix(rhs, ln, c)?,
                        _ => return Err(perr(1, "`gamma` outside `generator covariance`".into())),
                    }
                }
                "unit" => {
                    let (label, rhs, c) = assignment(rest)?;
                    let (alpha, cs) = rhs.split_once(',').ok_or_else(|| perr(c, "expected `ALPHA, [c…]`".into()))?;
                    let alpha = parse_complex(alpha).ok_or_else(|| perr(c, format!("bad alpha `{}`", alpha.trim())))?;
                    let cs_col = column_of(line, cs.trim_start());
                    let cv = parse_matrix(&format!("[{}]", cs.trim()), ln, cs_col - 1)?;
                    let params = UnitParams::new(alpha, cv.iter().copied().collect());
                    match (&section, sc.generator.as_mut()) {
                        (Section::Units, Some(GeneratorSpec::Units { units })) => units.push((label.to_string(), params)),
                        _ => return Err(perr(1, "`unit` outside `generator units`".into())),
                    }
                }
                "expr" => {
                    let (name, rhs, c) = assignment(rest)?;
                    pending.push((NamedExpression { name: name.to_string(), source: rhs.to_string() }, ln, c));
                }
                "normalize" => {
                    let (name, rhs, c) = assignment(rest)?;
                    let words: Vec<&str> = rhs.split_whitespace().collect();
                    let mut n = Normalize { name: name.to_string(), label: String::new(), side: TwistSide::Right, h: None };
                    let mut it = words.iter();
                    n.label = it.next().ok_or_else(|| perr(c, "missing unit label".into()))?.to_string();
                    while let Some(w) = it.next() {
                        match (*w, it.next()) {
                            ("side", Some(&"left")) => n.side = TwistSide::Left,
                            ("side", Some(&"right")) => n.side = TwistSide::Right,
                            ("h", Some(m)) => n.h = Some(m.to_string()),
                            _ => return Err(perr(c, format!("unexpected `{w}` in normalize"))),
                        }
                    }
                    sc.normalizations.push(n);
                }
                "check" => {
                    let words: Vec<&str> = rest.split_whitespace().collect();
                    let (expr, tail) = words.split_first().ok_or_else(|| perr(col, "missing expression name".into()))?;
                    let (reference, expect) = parse_clauses(tail).map_err(|m| perr(col, m))?;
                    sc.checks.push(Check { expr: expr.to_string(), reference, expect });
                }
                "fock" => {
                    let words: Vec<&str> = rest.split_whitespace().collect();
                    let (reference, expect) = parse_clauses(&words).map_err(|m| perr(col, m))?;
                    let reference = match reference.as_deref() {
                        Some("w") => "w".to_string(),
                        Some("zeta") | Some(ZETA) => "zeta".to_string(),
                        _ => return Err(perr(col, "fock checks compare `vs w` or `vs zeta`".into())),
                    };
                    sc.fock.push(FockCheck { reference, expect });
                }
                "threshold" => {
                    let (k, v) = rest.split_once(char::is_whitespace).ok_or_else(|| perr(col, "expected `threshold KEY VALUE`".into()))?;
                    let v: f64 = v.trim().parse().map_err(|_| perr(col, format!("bad threshold value `{}`", v.trim())))?;
                    let th = &mut sc.thresholds;
                    match k {
                        "converged" => th.converged = v,
                        "min_rate" => th.min_rate = v,
                        "plateau" => th.plateau = v,
                        "exact" => th.exact = v,
                        _ => return Err(perr(col, format!("unknown threshold `{k}`"))),
                    }
                }
                other => return Err(perr(1, format!("unknown directive `{other}`"))),
            }
        }

        let names: Vec<String> =
            pending.iter().map(|p| p.0.name.clone()).chain(sc.normalizations.iter().map(|n| n.name.clone())).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::DuplicateLabel(n.clone()));
            }
        }
        for name in sc.matrices.keys() {
            if sc.labels.contains(name) {
                return Err(Error::DuplicateLabel(name.clone()));
            }
        }
        let ctx = ExprContext { dim: sc.dim, labels: &sc.labels, matrices: &sc.matrices };
        for (e, ln, c) in pending {
            parse_expression(&e.source, &ctx, ln, c)?;
            sc.expressions.push(e);
        }
        for check in &sc.checks {
            if !names.contains(&check.expr) {
                return Err(Error::UnknownLabel(check.expr.clone()));
            }
            if let Some(r) = &check.reference {
                if !sc.labels.contains(r) {
                    return Err(Error::UnknownLabel(r.clone()));
                }
            }
        }
        for n in &sc.normalizations {
            if !sc.labels.contains(&n.label) {
                return Err(Error::UnknownLabel(n.label.clone()));
            }
            if let Some(h) = &n.h {
                if !sc.matrices.contains_key(h) {
                    return Err(Error::UnknownLabel(h.clone()));
                }
            }
        }
        Ok(sc)
    }

    /// Canonical text form; `parse(serialize(s)) == s`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name {}", self.name);
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "labels {}", self.labels.join(" "));
        let _ = writeln!(out, "horizon {}", self.horizon);
        let _ = writeln!(out, "schedule {}", self.schedule);
        let _ = writeln!(out, "seed {}", self.seed);
        let th = &self.thresholds;
        let _ = writeln!(out, "threshold converged {}", th.converged);
        let _ = writeln!(out, "threshold min_rate {}", th.min_rate);
        let _ = writeln!(out, "threshold plateau {}", th.plateau);
        let _ = writeln!(out, "threshold exact {}", th.exact);
        for (name, m) in &self.matrices {
            let _ = writeln!(out, "matrix {name} = {}", format_matrix(m));
        }
        match &self.generator {
            None => {}
            Some(GeneratorSpec::Ce { eta, beta }) => {
                out.push_str("generator ce\n");
                for (l, m) in eta {
                    let _ = writeln!(out, "eta {l} = {}", format_matrix(m));
                }
                for (l, m) in beta {
                    let _ = writeln!(out, "beta {l} = {}", format_matrix(m));
                }
            }
            Some(GeneratorSpec::Covariance { gamma }) => {
                let _ = writeln!(out, "generator covariance\ngamma = {}", format_matrix(gamma));
            }
            Some(GeneratorSpec::Units { units }) => {
                out.push_str("generator units\n");
                for (l, u) in units {
                    let cs: Vec<String> = u.c.iter().map(|z| format_complex(*z)).collect();
                    let _ = writeln!(out, "unit {l} = {}, [{}]", format_complex(u.alpha), cs.join(", "));
                }
            }
            Some(GeneratorSpec::Kernel { path }) => {
                let _ = writeln!(out, "generator kernel {path}");
            }
        }
        for e in &self.expressions {
            let _ = writeln!(out, "expr {} = {}", e.name, e.source);
        }
        for n in &self.normalizations {
            let side = if n.side == TwistSide::Left { "left" } else { "right" };
            let _ = write!(out, "normalize {} = {} side {side}", n.name, n.label);
            if let Some(h) = &n.h {
                let _ = write!(out, " h {h}");
            }
            out.push('\n');
        }
        for c in &self.checks {
            let _ = write!(out, "check {}", c.expr);
            if let Some(r) = &c.reference {
                let _ = write!(out, " vs {r}");
            }
            if let Some(v) = c.expect {
                let _ = write!(out, " expect {v}");
            }
            out.push('\n');
        }
        for f in &self.fock {
            let _ = write!(out, "fock vs {}", f.reference);
            if let Some(v) = f.expect {
                let _ = write!(out, " expect {v}");
            }
            out.push('\n');
        }
        out
    }

    /// The generator kernel over `labels`. Relative kernel paths resolve against `base_dir`.
    pub fn build_generator(&self, base_dir: &Path) -> Result<OperatorKernel> {
        let spec = self.generator.as_ref().ok_or_else(|| Error::Scenario("no generator declared".into()))?;
        let labels = self.labels.clone();
        let need_scalar = |what: &str| {
            if self.dim != 1 {
                Err(Error::Scenario(format!("{what} generators require dim 1")))
            } else {
                Ok(())
            }
        };
        match spec {
            GeneratorSpec::Ce { eta, beta } => {
                let pick = |map: &BTreeMap<String, Element>, what: &str| -> Result<Vec<Element>> {
                    if let Some(extra) = map.keys().find(|k| !labels.contains(k)) {
                        return Err(Error::UnknownLabel(extra.clone()));
                    }
                    labels
                        .iter()
                        .map(|l| map.get(l).cloned().ok_or_else(|| Error::Scenario(format!("missing {what} for `{l}`"))))
                        .collect()
                };
                kernels::ce_form_kernel(self.dim, labels.clone(), &pick(eta, "eta")?, &pick(beta, "beta")?)
            }
            GeneratorSpec::Covariance { gamma } => {
                need_scalar("covariance")?;
                kernels::covariance_kernel(labels, gamma)
            }
            GeneratorSpec::Units { units } => {
                need_scalar("unit")?;
                let params: Vec<&UnitParams> = labels
                    .iter()
                    .map(|l| {
                        units.iter().find(|u| &u.0 == l).map(|u| &u.1).ok_or_else(|| Error::Scenario(format!("missing unit `{l}`")))
                    })
                    .collect::<Result<_>>()?;
                if let Some(extra) = units.iter().find(|u| !labels.contains(&u.0)) {
                    return Err(Error::UnknownLabel(extra.0.clone()));
                }
                let k = params.first().map_or(0, |p| p.c.len());
                if let Some(p) = params.iter().find(|p| p.c.len() != k) {
                    return Err(Error::DimensionMismatch { expected: k, found: p.c.len() });
                }
                let n = labels.len();
                let gamma = DMatrix::from_fn(n, n, |i, j| params[i].covariance(params[j]));
                kernels::covariance_kernel(labels, &gamma)
            }
            GeneratorSpec::Kernel { path } => {
                let kernel = OperatorKernel::from_json(&fs::read_to_string(base_dir.join(path))?)?;
                if kernel.labels() != labels.as_slice() || kernel.dim() != self.dim {
                    return Err(Error::Scenario(format!(
                        "kernel file `{path}` has labels {:?} and dim {}, scenario declares {:?} and dim {}",
                        kernel.labels(),
                        kernel.dim(),
                        labels,
                        self.dim
                    )));
                }
                Ok(kernel)
            }
        }
    }

    fn expression(&self, name: &str, generator: &OperatorKernel, options: &ExtensionOptions) -> Result<UnitExpression> {
        if let Some(e) = self.expressions.iter().find(|e| e.name == name) {
            let ctx = ExprContext { dim: self.dim, labels: &self.labels, matrices: &self.matrices };
            return parse_expression(&e.source, &ctx, 1, 1);
        }
        let n = self.normalizations.iter().find(|n| n.name == name).ok_or_else(|| Error::UnknownLabel(name.to_string()))?;
        let h = match &n.h {
            Some(m) => self.matrices[m].clone(),
            None => DMatrix::zeros(self.dim, self.dim),
        };
        Ok(units::normalize_unit(&n.label, generator, &h, n.side, options)?.expression)
    }
}

fn parse_clauses(words: &[&str]) -> std::result::Result<(Option<String>, Option<Verdict>), String> {
    let (mut reference, mut expect) = (None, None);
    let mut it = words.iter();
    while let Some(w) = it.next() {
        match (*w, it.next()) {
            ("vs", Some(r)) => reference = Some(r.to_string()),
            ("expect", Some(v)) => expect = Some(v.parse::<Verdict>()?),
            _ => return Err(format!("unexpected `{w}`; expected `vs LABEL` or `expect VERDICT`")),
        }
    }
    Ok((reference, expect))
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Directory against which relative kernel paths resolve.
    pub base_dir: PathBuf,
    pub seed: Option<u64>,
    pub schedule: Option<ScheduleSpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub expr: String,
    pub reference: String,
    pub verdict: Verdict,
    pub expected: Option<Verdict>,
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl CheckOutcome {
    pub fn ok(&self) -> bool {
        self.expected.is_none_or(|e| e == self.verdict)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub seed: u64,
    pub gate: ConditionalReport,
    pub checks: Vec<CheckOutcome>,
}

impl RunOutcome {
    pub fn mismatches(&self) -> usize {
        self.checks.iter().filter(|c| !c.ok()).count()
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: generator conditionally CPD (compressed Choi min eigenvalue {:e}, seed {})",
            self.scenario, self.gate.compressed_min_eigenvalue, self.seed
        )?;
        for c in &self.checks {
            let status = match c.expected {
                None => "",
                Some(e) if e == c.verdict => "  ok",
                Some(_) => "  MISMATCH",
            };
            write!(f, "  {} vs {}: {}", c.expr, c.reference, c.verdict)?;
            if let Some(e) = c.expected {
                write!(f, " (expected {e})")?;
            }
            writeln!(f, "{status}  -> {}", c.csv.display())?;
        }
        Ok(())
    }
}

fn file_label(label: &str) -> &str {
    if label == ZETA {
        "zeta"
    } else {
        label
    }
}

/// Gate, extend, decide, and write one CSV and one JSON file per check.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunOutcome> {
    let seed = options.seed.unwrap_or(scenario.seed);
    let schedule_spec = options.schedule.clone().unwrap_or_else(|| scenario.schedule.clone());
    let generator = scenario.build_generator(&options.base_dir)?;
    let config = ConditionalConfig { seed, ..ConditionalConfig::default() };
    let gate = kernels::is_conditionally_cpd(&generator, PSD_TOL, &config)?;
    if !gate.conditionally_cpd {
        let mut msg = format!(
            "generator fails the conditional positivity gate: compressed Choi min eigenvalue {:e}, sampled min {:e}",
            gate.compressed_min_eigenvalue, gate.sampled.min_scaled_eigenvalue
        );
        if let Some(w) = &gate.witness {
            let _ = write!(msg, "; witness labels {:?} with form eigenvalue {:e}", w.labels, w.form_min_eigenvalue);
        }
        return Err(Error::Scenario(msg));
    }
    let extension = ExtensionOptions { check: config.clone(), ..ExtensionOptions::default() };
    let schedule = schedule_spec.build(scenario.horizon, seed)?;
    if !scenario.checks.is_empty() || !scenario.fock.is_empty() {
        fs::create_dir_all(&options.out_dir)?;
    }

    let mut checks = Vec::new();
    for check in &scenario.checks {
        let y = scenario.expression(&check.expr, &generator, &extension)?;
        let verdict_options = VerdictOptions {
            candidate: check.reference.clone(),
            thresholds: scenario.thresholds.clone(),
            extension: extension.clone(),
        };
        let report = trotter::convergence_verdict(&y, &generator, scenario.horizon, &schedule, &verdict_options)?;
        let stem = format!("{}_{}_vs_{}", scenario.name, check.expr, file_label(&report.reference));
        let (csv, json) = write_report(&options.out_dir, &stem, &report.to_csv(), &report_json(&report, seed)?)?;
        checks.push(CheckOutcome {
            expr: check.expr.clone(),
            reference: report.reference.clone(),
            verdict: report.verdict,
            expected: check.expect,
            csv,
            json,
        });
    }

    if !scenario.fock.is_empty() {
        let ns: Vec<usize> = schedule.iter().map(trotter::Partition::count).collect();
        let report = fock::counterexample_scenario(scenario.horizon, &ns, &scenario.thresholds)?;
        let json = serde_json::to_string_pretty(&report)?;
        for f in &scenario.fock {
            let series = if f.reference == "w" { &report.vs_w } else { &report.vs_zeta };
            let stem = format!("{}_fock_vs_{}", scenario.name, f.reference);
            let (csv, json) = write_report(&options.out_dir, &stem, &series.to_csv(), &json)?;
            checks.push(CheckOutcome {
                expr: "fock".into(),
                reference: series.reference.clone(),
                verdict: series.verdict,
                expected: f.expect,
                csv,
                json,
            });
        }
    }

    Ok(RunOutcome { scenario: scenario.name.clone(), seed, gate, checks })
}

fn report_json(report: &ConvergenceReport, seed: u64) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    value["seed"] = serde_json::json!(seed);
    Ok(serde_json::to_string_pretty(&value)?)
}

fn write_report(dir: &Path, stem: &str, csv: &str, json: &str) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, csv)?;
    fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

/// Hermiticity, CPD and conditional CPD of a kernel, with certificates.
#[derive(Clone, Debug, Serialize)]
pub struct Validation {
    pub labels: Vec<String>,
    pub dim: usize,
    pub hermitian_defect: f64,
    pub hermitian: bool,
    pub cpd: Option<kernels::CpdVerdict>,
    pub conditional: Option<ConditionalReport>,
}

impl Validation {
    pub fn all_pass(&self) -> bool {
        self.hermitian
            && self.cpd.as_ref().is_some_and(|c| c.cpd)
            && self.conditional.as_ref().is_some_and(|c| c.conditionally_cpd)
    }
}

pub fn validate(kernel: &OperatorKernel, seed: u64) -> Result<Validation> {
    let hermitian_defect = kernel.hermitian_defect();
    let hermitian = kernel.ensure_hermitian(1e-9).is_ok();
    let (cpd, conditional) = if hermitian {
        let config = ConditionalConfig { seed, ..ConditionalConfig::default() };
        (Some(kernels::is_cpd(kernel, PSD_TOL)?), Some(kernels::is_conditionally_cpd(kernel, PSD_TOL, &config)?))
    } else {
        (None, None)
    };
    Ok(Validation { labels: kernel.labels().to_vec(), dim: kernel.dim(), hermitian_defect, hermitian, cpd, conditional })
}

impl fmt::Display for Validation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pass = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "kernel over {:?}, d = {}", self.labels, self.dim)?;
        writeln!(f, "hermitian: {} (defect {:e})", pass(self.hermitian), self.hermitian_defect)?;
        if let Some(c) = &self.cpd {
            writeln!(f, "CPD: {} (block Choi min eigenvalue {:e}, threshold {:e})", pass(c.cpd), c.min_eigenvalue, c.threshold)?;
            if let Some(w) = &c.witness {
                writeln!(f, "  witness: labels {:?}, form min eigenvalue {:e}", w.labels, w.form_min_eigenvalue)?;
            }
        }
        if let Some(c) = &self.conditional {
            writeln!(
                f,
                "conditionally CPD: {} (sampled {}, grid {}, compressed {} with min eigenvalue {:e}, seed {})",
                pass(c.conditionally_cpd),
                pass(c.sampled_pass),
                pass(c.schoenberg_pass),
                pass(c.compressed_pass),
                c.compressed_min_eigenvalue,
                c.seed
            )?;
            if let Some(w) = &c.witness {
                writeln!(
                    f,
                    "  witness: labels {:?}, form min eigenvalue {:e}, constraint residual {:e}",
                    w.labels, w.form_min_eigenvalue, w.constraint_residual
                )?;
            }
            if c.discrepancy {
                writeln!(f, "  warning: the three conditional routes disagree")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let c = |re, im| C64::new(re, im);
        assert_eq!(parse_complex("1"), Some(c(1.0, 0.0)));
        assert_eq!(parse_complex("-2.5e-3"), Some(c(-2.5e-3, 0.0)));
        assert_eq!(parse_complex("2i"), Some(c(0.0, 2.0)));
        assert_eq!(parse_complex("-i"), Some(c(0.0, -1.0)));
        assert_eq!(parse_complex("1+2i"), Some(c(1.0, 2.0)));
        assert_eq!(parse_complex("1e-3-2e+1i"), Some(c(1e-3, -20.0)));
        assert_eq!(parse_complex("abc"), None);
        for z in [c(0.1, -0.3), c(-1e-20, 5.0), c(0.0, -2.0), c(3.0, 0.0)] {
            assert_eq!(parse_complex(&format_complex(z)), Some(z));
        }
    }

    #[test]
    fn matrices_parse_and_report_positions() {
        let m = parse_matrix("[[1, 2i], [0, -1+0.5i]]", 1, 1).unwrap();
        assert_eq!(m[(0, 1)], C64::new(0.0, 2.0));
        assert_eq!(m[(1, 1)], C64::new(-1.0, 0.5));
        assert_eq!(parse_matrix(&format_matrix(&m), 1, 1).unwrap(), m);
        match parse_matrix("[[1, x], [0, 1]]", 4, 10) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (4, 14)),
            other => panic!("{other:?}"),
        }
        assert!(parse_matrix("[[1, 2], [3]]", 1, 1).is_err());
        assert!(parse_matrix("[[1, 2]", 1, 1).is_err());
    }

    const SAMPLE: &str = "\
name sample
dim 1
labels u v
horizon 1
schedule dyadic:1:3
generator covariance
gamma = [[0, 0], [0, 1]]   # vacuum and indicator
expr y = concat(u@0.5, v@0.5)
check y expect weak-only
check y vs v
fock vs w expect weak-only
";

    #[test]
    fn round_trip() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(sc.labels, vec!["u", "v"]);
        assert_eq!(sc.checks.len(), 2);
        let again = Scenario::parse(&sc.serialize()).unwrap();
        assert_eq!(again, sc);
    }

    #[test]
    fn parse_errors_point_at_the_problem() {
        let bad = SAMPLE.replace("concat(u@0.5, v@0.5)", "concat(u@0.5, q@0.5)");
        match Scenario::parse(&bad) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (8, 24)),
            other => panic!("{other:?}"),
        }
        match Scenario::parse("dim 2\nfrobnicate 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Scenario::parse("labels u u\n"), Err(Error::Parse { .. })));
        assert!(matches!(Scenario::parse(&format!("{SAMPLE}check z\n")), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn gate_rejects_non_generators() {
        let text = "labels a b\ngenerator covariance\ngamma = [[1, 2], [2, 1]]\n";
        let sc = Scenario::parse(text).unwrap();
        let ok = Scenario::parse("labels a b\ngenerator covariance\ngamma = [[1, 0], [0, 1]]\n").unwrap();
        let dir = std::env::temp_dir();
        let options = RunOptions { out_dir: dir.clone(), base_dir: dir, ..RunOptions::default() };
        assert!(run(&ok, &options).unwrap().checks.is_empty());
        // c = (1, -1) sums to zero and gives 1 - 2 - 2 + 1 < 0.
        match run(&sc, &options) {
            Err(Error::Scenario(msg)) => assert!(msg.contains("witness")),
            other => panic!("{other:?}"),
        }
    }
}
