//! Path model specification: latent variables, measurement blocks, and the
//! directed structural design.
//!
//! A model is usually written in a small text format, one statement per line:
//!
//! ```text
//! # quality drives satisfaction
//! lv QUALITY exogenous
//! lv SATISFACTION endogenous
//! mv q1 -> QUALITY
//! mv q2 -> QUALITY
//! mv s1 -> SATISFACTION
//! mv s2 -> SATISFACTION
//! path QUALITY -> SATISFACTION
//! ```
//!
//! `lv` declares a latent variable and its role, `mv` assigns a manifest
//! variable (an observed column) to exactly one latent block, and `path`
//! declares a directed structural relation whose target must be endogenous.
//! `#` starts a comment. [`parse_model`] reads this format; a parsed (or
//! programmatically built) model is checked with [`PathModelSpec::validate`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A latent-variable path model: blocks of manifest variables, each reflecting
/// one latent variable, plus a directed acyclic structural design.
///
/// Latent variables are stored exogenous-first; all matrices returned by this
/// type use that ordering for their latent dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathModelSpec {
    lv_names: Vec<String>,
    exogenous_count: usize,
    mv_names: Vec<String>,
    /// For each manifest variable, the index of the latent variable it reflects.
    measurement: Vec<usize>,
    /// Directed structural relations as `(source, target)` latent indices,
    /// sorted for a canonical representation.
    paths: Vec<(usize, usize)>,
}

/// One problem found by [`PathModelSpec::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Stable machine-readable code, e.g. `"cycle"` or `"unassigned-mv"`.
    pub code: String,
    /// Human-readable description naming the offending entities.
    pub message: String,
}

/// Outcome of validating a model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Convert a failed report into an error; a clean report yields `Ok`.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let listing = self
                .violations
                .iter()
                .map(|v| format!("  [{}] {}", v.code, v.message))
                .collect::<Vec<_>>()
                .join("\n");
            Err(Error::InvalidModel(listing))
        }
    }
}

/// JSON mirror of a model, carrying both design matrices explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub lv_names: Vec<String>,
    pub exogenous_count: usize,
    pub mv_names: Vec<String>,
    /// J×P binary measurement design; row `j` has a single 1 in the column of
    /// the latent variable that manifest variable `j` reflects.
    pub measurement_design: Vec<Vec<u8>>,
    /// P×P binary structural design; entry `(target, source)` is 1 when
    /// `source` explains the endogenous variable `target`.
    pub structural_design: Vec<Vec<u8>>,
}

impl PathModelSpec {
    /// Build a model from raw parts without checking it. Callers should run
    /// [`PathModelSpec::validate`] afterwards; the fitting entry points do.
    ///
    /// `measurement[j]` is the latent index reflected by manifest variable
    /// `j`; `paths` holds directed `(source, target)` latent index pairs.
    /// Latent names must already be ordered exogenous-first with
    /// `exogenous_count` marking the split.
    pub fn from_parts(
        lv_names: Vec<String>,
        exogenous_count: usize,
        mv_names: Vec<String>,
        measurement: Vec<usize>,
        mut paths: Vec<(usize, usize)>,
    ) -> Self {
        paths.sort_unstable();
        paths.dedup();
        Self {
            lv_names,
            exogenous_count,
            mv_names,
            measurement,
            paths,
        }
    }

    /// Number of latent variables, exogenous first.
    pub fn n_lvs(&self) -> usize {
        self.lv_names.len()
    }

    /// Number of exogenous latent variables (they come first in the order).
    pub fn n_exogenous(&self) -> usize {
        self.exogenous_count
    }

    /// Number of endogenous latent variables.
    pub fn n_endogenous(&self) -> usize {
        self.lv_names.len() - self.exogenous_count
    }

    /// Number of manifest variables declared by the model.
    pub fn n_mvs(&self) -> usize {
        self.mv_names.len()
    }

    pub fn lv_names(&self) -> &[String] {
        &self.lv_names
    }

    pub fn mv_names(&self) -> &[String] {
        &self.mv_names
    }

    pub fn is_exogenous(&self, lv: usize) -> bool {
        lv < self.exogenous_count
    }

    /// Latent variable reflected by manifest variable `j`.
    pub fn lv_of_mv(&self, j: usize) -> usize {
        self.measurement[j]
    }

    /// Indices of the manifest variables in latent block `lv`.
    pub fn block_members(&self, lv: usize) -> Vec<usize> {
        (0..self.n_mvs())
            .filter(|&j| self.measurement[j] == lv)
            .collect()
    }

    /// Directed structural relations as `(source, target)` pairs.
    pub fn paths(&self) -> &[(usize, usize)] {
        &self.paths
    }

    /// Latent variables with a directed path into `lv`.
    pub fn predecessors(&self, lv: usize) -> Vec<usize> {
        self.paths
            .iter()
            .filter(|&&(_, t)| t == lv)
            .map(|&(s, _)| s)
            .collect()
    }

    /// J×P measurement design: entry `(j, p)` is 1 when manifest variable `j`
    /// reflects latent variable `p`.
    pub fn measurement_design(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_mvs(), self.n_lvs());
        for (j, &p) in self.measurement.iter().enumerate() {
            d[(j, p)] = 1.0;
        }
        d
    }

    /// P×P directed structural design: entry `(target, source)` is 1 when
    /// `source` explains the endogenous variable `target`.
    pub fn structural_design(&self) -> DMatrix<f64> {
        let p = self.n_lvs();
        let mut d = DMatrix::zeros(p, p);
        for &(s, t) in &self.paths {
            d[(t, s)] = 1.0;
        }
        d
    }

    /// Symmetric adjacency used by the inner weighting: the directed design
    /// OR-ed with its transpose. Symmetric with a zero diagonal.
    pub fn structural_symmetric(&self) -> DMatrix<f64> {
        let p = self.n_lvs();
        let mut d = DMatrix::zeros(p, p);
        for &(s, t) in &self.paths {
            d[(t, s)] = 1.0;
            d[(s, t)] = 1.0;
        }
        d
    }

    /// Check every structural rule and report all violations at once.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let p = self.n_lvs();

        if self.exogenous_count > p {
            violations.push(Violation {
                code: "exogenous-count".into(),
                message: format!(
                    "exogenous count {} exceeds the {} declared latent variables",
                    self.exogenous_count, p
                ),
            });
            return ValidationReport { violations };
        }

        if self.exogenous_count == 0 {
            violations.push(Violation {
                code: "no-exogenous".into(),
                message: "the model declares no exogenous latent variable".into(),
            });
        }
        if self.exogenous_count == p {
            violations.push(Violation {
                code: "no-endogenous".into(),
                message: "the model declares no endogenous latent variable".into(),
            });
        }

        for (idx, name) in self.lv_names.iter().enumerate() {
            if self.lv_names[..idx].contains(name) {
                violations.push(Violation {
                    code: "duplicate-lv".into(),
                    message: format!("latent variable {name:?} is declared more than once"),
                });
            }
        }
        for (idx, name) in self.mv_names.iter().enumerate() {
            if self.mv_names[..idx].contains(name) {
                violations.push(Violation {
                    code: "duplicate-mv".into(),
                    message: format!("manifest variable {name:?} is declared more than once"),
                });
            }
        }

        if self.measurement.len() != self.n_mvs() {
            violations.push(Violation {
                code: "measurement-length".into(),
                message: format!(
                    "{} manifest variables but {} block assignments",
                    self.n_mvs(),
                    self.measurement.len()
                ),
            });
            return ValidationReport { violations };
        }

        for (j, &lv) in self.measurement.iter().enumerate() {
            if lv >= p {
                violations.push(Violation {
                    code: "unknown-block".into(),
                    message: format!(
                        "manifest variable {:?} references latent index {lv}, but only {p} exist",
                        self.mv_names[j]
                    ),
                });
            }
        }

        for lv in 0..p {
            if !self.measurement.contains(&lv) {
                violations.push(Violation {
                    code: "empty-block".into(),
                    message: format!(
                        "latent variable {:?} has no manifest variables",
                        self.lv_names[lv]
                    ),
                });
            }
        }

        for &(s, t) in &self.paths {
            if s >= p || t >= p {
                violations.push(Violation {
                    code: "unknown-lv-in-path".into(),
                    message: format!("path ({s} -> {t}) references an unknown latent index"),
                });
                continue;
            }
            if s == t {
                violations.push(Violation {
                    code: "self-path".into(),
                    message: format!("latent variable {:?} points at itself", self.lv_names[s]),
                });
            }
            if self.is_exogenous(t) {
                violations.push(Violation {
                    code: "path-into-exogenous".into(),
                    message: format!(
                        "path {:?} -> {:?} targets an exogenous latent variable",
                        self.lv_names[s], self.lv_names[t]
                    ),
                });
            }
        }

        // Every endogenous variable needs at least one explanation, and every
        // exogenous variable must explain something; an untouched variable
        // would get a zero inner weighting and can never be estimated.
        for lv in 0..p {
            let has_in = self.paths.iter().any(|&(_, t)| t == lv);
            let has_out = self.paths.iter().any(|&(s, _)| s == lv);
            if self.is_exogenous(lv) && !has_out {
                violations.push(Violation {
                    code: "isolated-lv".into(),
                    message: format!(
                        "exogenous latent variable {:?} explains nothing",
                        self.lv_names[lv]
                    ),
                });
            }
            if !self.is_exogenous(lv) && !has_in {
                violations.push(Violation {
                    code: "unexplained-endogenous".into(),
                    message: format!(
                        "endogenous latent variable {:?} has no incoming path",
                        self.lv_names[lv]
                    ),
                });
            }
        }

        if let Some(cycle) = self.find_cycle() {
            let names = cycle
                .iter()
                .map(|&i| self.lv_names[i].as_str())
                .collect::<Vec<_>>()
                .join(" -> ");
            violations.push(Violation {
                code: "cycle".into(),
                message: format!("structural design contains a cycle: {names}"),
            });
        }

        ValidationReport { violations }
    }

    /// Find one directed cycle, if any, as a closed walk of latent indices.
    fn find_cycle(&self) -> Option<Vec<usize>> {
        let p = self.n_lvs();
        // 0 = unseen, 1 = on the current path, 2 = finished.
        let mut mark = vec![0u8; p];
        let mut stack = Vec::new();

        fn visit(
            v: usize,
            paths: &[(usize, usize)],
            mark: &mut [u8],
            stack: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            mark[v] = 1;
            stack.push(v);
            for &(s, t) in paths.iter().filter(|&&(s, _)| s == v) {
                debug_assert_eq!(s, v);
                if t >= mark.len() {
                    continue;
                }
                if mark[t] == 1 {
                    let start = stack.iter().position(|&x| x == t).unwrap();
                    let mut cycle = stack[start..].to_vec();
                    cycle.push(t);
                    return Some(cycle);
                }
                if mark[t] == 0 {
                    if let Some(c) = visit(t, paths, mark, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            mark[v] = 2;
            None
        }

        (0..p).find_map(|v| {
            if mark[v] == 0 {
                visit(v, &self.paths, &mut mark, &mut stack)
            } else {
                None
            }
        })
    }

    /// Render the model back into the text format. Parsing the result yields
    /// an equal model.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.lv_names.iter().enumerate() {
            let kind = if self.is_exogenous(i) {
                "exogenous"
            } else {
                "endogenous"
            };
            out.push_str(&format!("lv {name} {kind}\n"));
        }
        for (j, name) in self.mv_names.iter().enumerate() {
            out.push_str(&format!("mv {name} -> {}\n", self.lv_names[self.measurement[j]]));
        }
        for &(s, t) in &self.paths {
            out.push_str(&format!("path {} -> {}\n", self.lv_names[s], self.lv_names[t]));
        }
        out
    }

    /// JSON mirror with explicit design matrices.
    pub fn to_json(&self) -> ModelJson {
        let d_m = self.measurement_design();
        let d_s = self.structural_design();
        ModelJson {
            lv_names: self.lv_names.clone(),
            exogenous_count: self.exogenous_count,
            mv_names: self.mv_names.clone(),
            measurement_design: (0..self.n_mvs())
                .map(|j| (0..self.n_lvs()).map(|p| d_m[(j, p)] as u8).collect())
                .collect(),
            structural_design: (0..self.n_lvs())
                .map(|t| (0..self.n_lvs()).map(|s| d_s[(t, s)] as u8).collect())
                .collect(),
        }
    }

    /// Rebuild a model from its JSON mirror.
    pub fn from_json(json: &ModelJson) -> Result<Self> {
        let p = json.lv_names.len();
        let j_count = json.mv_names.len();
        if json.measurement_design.len() != j_count {
            return Err(Error::Dimension {
                context: "measurement design".into(),
                expected: format!("{j_count} rows"),
                found: format!("{}", json.measurement_design.len()),
            });
        }
        let mut measurement = Vec::with_capacity(j_count);
        for (j, row) in json.measurement_design.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension {
                    context: format!("measurement design row {j}"),
                    expected: format!("{p} columns"),
                    found: format!("{}", row.len()),
                });
            }
            let ones: Vec<usize> = (0..p).filter(|&c| row[c] != 0).collect();
            if ones.len() != 1 {
                return Err(Error::InvalidModel(format!(
                    "  [unassigned-mv] manifest variable {:?} must reflect exactly one latent variable, found {}",
                    json.mv_names[j],
                    ones.len()
                )));
            }
            measurement.push(ones[0]);
        }
        if json.structural_design.len() != p {
            return Err(Error::Dimension {
                context: "structural design".into(),
                expected: format!("{p} rows"),
                found: format!("{}", json.structural_design.len()),
            });
        }
        let mut paths = Vec::new();
        for (t, row) in json.structural_design.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Dimension {
                    context: format!("structural design row {t}"),
                    expected: format!("{p} columns"),
                    found: format!("{}", row.len()),
                });
            }
            for (s, &v) in row.iter().enumerate() {
                if v != 0 {
                    paths.push((s, t));
                }
            }
        }
        Ok(Self::from_parts(
            json.lv_names.clone(),
            json.exogenous_count,
            json.mv_names.clone(),
            measurement,
            paths,
        ))
    }
}

/// Tokens of one statement line, with 1-based column positions.
fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let code = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &code[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &code[s..]));
    }
    out
}

fn check_name(name: &str, line: usize, column: usize) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            column,
            message: format!(
                "name {name:?} may only contain letters, digits, '_', '-' and '.'"
            ),
        })
    }
}

/// Parse the model text format described in the [module docs](self).
///
/// Latent variables are reordered exogenous-first (stable within each role);
/// manifest variables keep declaration order. Unknown names, duplicate
/// definitions, and malformed statements are reported with their line and
/// column.
///
/// # Errors
///
/// Returns [`Error::Parse`] describing the first offending token.
pub fn parse_model(text: &str) -> Result<PathModelSpec> {
    struct RawLv {
        name: String,
        exogenous: bool,
    }
    let mut lvs: Vec<RawLv> = Vec::new();
    let mut mvs: Vec<(String, String, usize, usize)> = Vec::new(); // name, lv, line, col
    let mut raw_paths: Vec<(String, String, usize, usize)> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let (kw_col, keyword) = tokens[0];
        let expect = |n: usize| -> Result<()> {
            if tokens.len() == n {
                Ok(())
            } else {
                Err(Error::Parse {
                    line: line_no,
                    column: kw_col,
                    message: format!(
                        "'{keyword}' statement takes {} tokens, found {}",
                        n - 1,
                        tokens.len() - 1
                    ),
                })
            }
        };
        match keyword {
            "lv" => {
                expect(3)?;
                let (name_col, name) = tokens[1];
                check_name(name, line_no, name_col)?;
                let (kind_col, kind) = tokens[2];
                let exogenous = match kind {
                    "exogenous" => true,
                    "endogenous" => false,
                    other => {
                        return Err(Error::Parse {
                            line: line_no,
                            column: kind_col,
                            message: format!(
                                "expected 'exogenous' or 'endogenous', found {other:?}"
                            ),
                        })
                    }
                };
                if lvs.iter().any(|lv| lv.name == name) {
                    return Err(Error::Parse {
                        line: line_no,
                        column: name_col,
                        message: format!("latent variable {name:?} is already declared"),
                    });
                }
                lvs.push(RawLv {
                    name: name.to_string(),
                    exogenous,
                });
            }
            "mv" | "path" => {
                expect(4)?;
                let (lhs_col, lhs) = tokens[1];
                check_name(lhs, line_no, lhs_col)?;
                let (arrow_col, arrow) = tokens[2];
                if arrow != "->" {
                    return Err(Error::Parse {
                        line: line_no,
                        column: arrow_col,
                        message: format!("expected '->', found {arrow:?}"),
                    });
                }
                let (rhs_col, rhs) = tokens[3];
                check_name(rhs, line_no, rhs_col)?;
                if keyword == "mv" {
                    if mvs.iter().any(|(n, _, _, _)| n == lhs) {
                        return Err(Error::Parse {
                            line: line_no,
                            column: lhs_col,
                            message: format!("manifest variable {lhs:?} is already assigned"),
                        });
                    }
                    mvs.push((lhs.to_string(), rhs.to_string(), line_no, rhs_col));
                } else {
                    if raw_paths.iter().any(|(s, t, _, _)| s == lhs && t == rhs) {
                        return Err(Error::Parse {
                            line: line_no,
                            column: lhs_col,
                            message: format!("path {lhs} -> {rhs} is already declared"),
                        });
                    }
                    raw_paths.push((lhs.to_string(), rhs.to_string(), line_no, lhs_col));
                }
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    column: kw_col,
                    message: format!("unknown statement {other:?} (expected lv, mv, or path)"),
                })
            }
        }
    }

    // Exogenous-first ordering, stable within each role.
    let mut ordered: Vec<&RawLv> = lvs.iter().filter(|lv| lv.exogenous).collect();
    let exogenous_count = ordered.len();
    ordered.extend(lvs.iter().filter(|lv| !lv.exogenous));
    let lv_names: Vec<String> = ordered.iter().map(|lv| lv.name.clone()).collect();
    let lv_index = |name: &str, line: usize, column: usize| -> Result<usize> {
        lv_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Parse {
                line,
                column,
                message: format!("unknown latent variable {name:?}"),
            })
    };

    let mut mv_names = Vec::with_capacity(mvs.len());
    let mut measurement = Vec::with_capacity(mvs.len());
    for (name, lv, line, col) in &mvs {
        mv_names.push(name.clone());
        measurement.push(lv_index(lv, *line, *col)?);
    }
    let mut paths = Vec::with_capacity(raw_paths.len());
    for (s, t, line, col) in &raw_paths {
        paths.push((lv_index(s, *line, *col)?, lv_index(t, *line, *col)?));
    }

    Ok(PathModelSpec::from_parts(
        lv_names,
        exogenous_count,
        mv_names,
        measurement,
        paths,
    ))
}

/// Parse a model and additionally require it to be valid.
pub fn parse_valid_model(text: &str) -> Result<PathModelSpec> {
    let spec = parse_model(text)?;
    spec.validate().into_result()?;
    Ok(spec)
}
