//! Exact Butcher tableaux: representation, the text file format, validation
//! and node classification.
//!
//! Stage indices in this API are zero-based; reports shown to users print them
//! one-based.
//!
//! The file format is a flat `key = value` document:
//!
//! ```text
//! # SSPRK(3,3)
//! name = ssprk33
//! s = 3
//! A = 0 0 0
//!     1 0 0
//!     1/4 1/4 0
//! b = 1/6 1/6 2/3
//! c = 0 1 1/2
//! ```
//!
//! Rows of `A` are given on continuation lines or separated by `;`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{self, parse_rational, ParseRationalError, Rational};
use crate::trees;

/// Default cap for [`order_of_accuracy`].
pub const DEFAULT_MAX_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableauError {
    #[error("line {line}: {source}")]
    Rational {
        line: usize,
        #[source]
        source: ParseRationalError,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid stage count `{0}`")]
    StageCount(String),
    #[error("A is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare { row: usize, len: usize, expected: usize },
    #[error("`{field}` has {len} entries but s = {expected}")]
    LengthMismatch {
        field: &'static str,
        len: usize,
        expected: usize,
    },
    #[error("tableau has no stages")]
    Empty,
    #[error("method `{0}` is not explicit")]
    NotExplicit(String),
    #[error("row-sum condition c_i = Σ_j a_ij fails at stage(s) {0:?}")]
    RowSum(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ButcherTableau {
    name: String,
    a: Vec<Vec<Rational>>,
    b: Vec<Rational>,
    c: Vec<Rational>,
}

impl ButcherTableau {
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<Rational>>,
        b: Vec<Rational>,
        c: Vec<Rational>,
    ) -> Result<Self, TableauError> {
        let s = b.len();
        if s == 0 {
            return Err(TableauError::Empty);
        }
        if a.len() != s {
            return Err(TableauError::LengthMismatch {
                field: "A",
                len: a.len(),
                expected: s,
            });
        }
        for (row, entries) in a.iter().enumerate() {
            if entries.len() != s {
                return Err(TableauError::NonSquare {
                    row: row + 1,
                    len: entries.len(),
                    expected: s,
                });
            }
        }
        if c.len() != s {
            return Err(TableauError::LengthMismatch {
                field: "c",
                len: c.len(),
                expected: s,
            });
        }
        Ok(ButcherTableau {
            name: name.into(),
            a,
            b,
            c,
        })
    }

    /// Builds a tableau with `c` taken from the row sums of `A`.
    pub fn with_row_sum_nodes(
        name: impl Into<String>,
        a: Vec<Vec<Rational>>,
        b: Vec<Rational>,
    ) -> Result<Self, TableauError> {
        let c = a.iter().map(|row| row.iter().sum()).collect();
        Self::new(name, a, b, c)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<Rational>] {
        &self.a
    }

    pub fn a_ij(&self, i: usize, j: usize) -> &Rational {
        &self.a[i][j]
    }

    pub fn b(&self) -> &[Rational] {
        &self.b
    }

    pub fn c(&self) -> &[Rational] {
        &self.c
    }

    /// Strictly lower triangular `A`.
    pub fn is_explicit(&self) -> bool {
        self.a
            .iter()
            .enumerate()
            .all(|(i, row)| row[i..].iter().all(Zero::is_zero))
    }

    pub fn require_explicit(&self) -> Result<(), TableauError> {
        if self.is_explicit() {
            Ok(())
        } else {
            Err(TableauError::NotExplicit(self.name.clone()))
        }
    }

    pub fn require_row_sums(&self) -> Result<(), TableauError> {
        let bad = row_sum_violations(self);
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TableauError::RowSum(bad))
        }
    }

    /// Serializes to the tableau file format; [`parse_tableau`] inverts it exactly.
    pub fn to_text(&self) -> String {
        let join = |v: &[Rational]| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::new();
        out.push_str(&format!("name = {}\n", self.name));
        out.push_str(&format!("s = {}\n", self.stages()));
        for (i, row) in self.a.iter().enumerate() {
            if i == 0 {
                out.push_str(&format!("A = {}\n", join(row)));
            } else {
                out.push_str(&format!("    {}\n", join(row)));
            }
        }
        out.push_str(&format!("b = {}\n", join(&self.b)));
        out.push_str(&format!("c = {}\n", join(&self.c)));
        out
    }
}

impl fmt::Display for ButcherTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<Vec<String>> = self
            .a
            .iter()
            .map(|row| row.iter().map(ToString::to_string).collect())
            .collect();
        let width = cells
            .iter()
            .flatten()
            .chain(self.c.iter().map(ToString::to_string).collect::<Vec<_>>().iter())
            .chain(self.b.iter().map(ToString::to_string).collect::<Vec<_>>().iter())
            .map(|s| s.chars().count())
            .max()
            .unwrap_or(1);
        writeln!(f, "{}", self.name)?;
        for (i, row) in cells.iter().enumerate() {
            write!(f, "{:>w$} |", self.c[i].to_string(), w = width)?;
            for cell in row {
                write!(f, " {:>w$}", cell, w = width)?;
            }
            writeln!(f)?;
        }
        write!(f, "{:>w$}-+", "", w = width)?;
        writeln!(f, "{}", "-".repeat((width + 1) * self.stages()))?;
        write!(f, "{:>w$} |", "", w = width)?;
        for bi in &self.b {
            write!(f, " {:>w$}", bi.to_string(), w = width)?;
        }
        Ok(())
    }
}

impl FromStr for ButcherTableau {
    type Err = TableauError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_tableau(s)
    }
}

#[derive(Default)]
struct RawField {
    line: usize,
    rows: Vec<String>,
}

pub fn parse_tableau(text: &str) -> Result<ButcherTableau, TableauError> {
    let mut name: Option<RawField> = None;
    let mut stages: Option<RawField> = None;
    let mut a: Option<RawField> = None;
    let mut b: Option<RawField> = None;
    let mut c: Option<RawField> = None;
    let mut current: Option<&'static str> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (Some(k.trim()), v.trim()),
            None => (None, line),
        };
        let slot_name = match key {
            Some(k) => {
                let k: &'static str = match k {
                    "name" => "name",
                    "s" => "s",
                    "A" => "A",
                    "b" => "b",
                    "c" => "c",
                    other => return Err(TableauError::UnknownKey(other.to_string())),
                };
                let slot = match k {
                    "name" => &mut name,
                    "s" => &mut stages,
                    "A" => &mut a,
                    "b" => &mut b,
                    _ => &mut c,
                };
                if slot.is_some() {
                    return Err(TableauError::DuplicateField(k.to_string()));
                }
                *slot = Some(RawField {
                    line: line_no,
                    rows: Vec::new(),
                });
                current = Some(k);
                k
            }
            None => current.ok_or(TableauError::Syntax { line: line_no })?,
        };
        let slot = match slot_name {
            "name" => &mut name,
            "s" => &mut stages,
            "A" => &mut a,
            "b" => &mut b,
            _ => &mut c,
        };
        let field = slot.as_mut().expect("slot initialised above");
        for part in value.split(';') {
            let part = part.trim();
            if !part.is_empty() {
                field.rows.push(part.to_string());
            }
        }
        if field.line == 0 {
            field.line = line_no;
        }
    }

    let name = name.map(|f| f.rows.join(" ")).unwrap_or_else(|| "unnamed".into());
    let stages_field = stages.ok_or(TableauError::MissingField("s"))?;
    let s_text = stages_field.rows.join(" ");
    let s: usize = s_text
        .parse()
        .ok()
        .filter(|&s| s > 0)
        .ok_or(TableauError::StageCount(s_text))?;

    let parse_row = |text: &str, line: usize| -> Result<Vec<Rational>, TableauError> {
        text.split_whitespace()
            .map(|tok| parse_rational(tok).map_err(|source| TableauError::Rational { line, source }))
            .collect()
    };

    let a_field = a.ok_or(TableauError::MissingField("A"))?;
    let a_rows = a_field
        .rows
        .iter()
        .map(|r| parse_row(r, a_field.line))
        .collect::<Result<Vec<_>, _>>()?;
    if a_rows.len() != s {
        return Err(TableauError::LengthMismatch {
            field: "A",
            len: a_rows.len(),
            expected: s,
        });
    }
    let vector = |field: Option<RawField>, key: &'static str| -> Result<Vec<Rational>, TableauError> {
        let field = field.ok_or(TableauError::MissingField(key))?;
        let v = parse_row(&field.rows.join(" "), field.line)?;
        if v.len() != s {
            return Err(TableauError::LengthMismatch {
                field: key,
                len: v.len(),
                expected: s,
            });
        }
        Ok(v)
    };
    let b = vector(b, "b")?;
    let c = vector(c, "c")?;
    ButcherTableau::new(name, a_rows, b, c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub weight_sum: Rational,
    pub consistent: bool,
    /// Stages whose node differs from the row sum of `A`.
    pub row_sum_violations: Vec<usize>,
    /// Entries `(i, j)` with `j ≥ i` and `a_ij ≠ 0`.
    pub explicit_violations: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn row_sums_hold(&self) -> bool {
        self.row_sum_violations.is_empty()
    }

    pub fn explicit(&self) -> bool {
        self.explicit_violations.is_empty()
    }
}

fn row_sum_violations(tab: &ButcherTableau) -> Vec<usize> {
    tab.a
        .iter()
        .zip(&tab.c)
        .enumerate()
        .filter(|(_, (row, ci))| row.iter().sum::<Rational>() != **ci)
        .map(|(i, _)| i)
        .collect()
}

pub fn validate(tab: &ButcherTableau) -> ValidationReport {
    let weight_sum: Rational = tab.b.iter().sum();
    let mut explicit_violations = Vec::new();
    for (i, row) in tab.a.iter().enumerate() {
        for (j, aij) in row.iter().enumerate().skip(i) {
            if !aij.is_zero() {
                explicit_violations.push((i, j));
            }
        }
    }
    ValidationReport {
        consistent: weight_sum.is_one(),
        weight_sum,
        row_sum_violations: row_sum_violations(tab),
        explicit_violations,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeReport {
    pub unique_nodes: BTreeSet<usize>,
    pub quadrature_nodes: BTreeSet<usize>,
    pub unique_quadrature_nodes: BTreeSet<usize>,
    pub is_confluent: bool,
    /// Quadrature stages `k` with `c_j − c_k ∉ ℤ` for every `j ≠ k`.
    pub integer_shift_free_quadrature_nodes: BTreeSet<usize>,
}

pub fn node_report(tab: &ButcherTableau) -> NodeReport {
    let s = tab.stages();
    let c = &tab.c;
    let unique_nodes: BTreeSet<usize> = (0..s)
        .filter(|&i| (0..s).all(|j| j == i || c[j] != c[i]))
        .collect();
    let quadrature_nodes: BTreeSet<usize> = (0..s).filter(|&i| !tab.b[i].is_zero()).collect();
    let unique_quadrature_nodes = unique_nodes
        .intersection(&quadrature_nodes)
        .copied()
        .collect();
    let integer_shift_free_quadrature_nodes = quadrature_nodes
        .iter()
        .copied()
        .filter(|&k| (0..s).all(|j| j == k || !rational::is_integer(&(&c[j] - &c[k]))))
        .collect();
    NodeReport {
        is_confluent: unique_nodes.len() != s,
        unique_nodes,
        quadrature_nodes,
        unique_quadrature_nodes,
        integer_shift_free_quadrature_nodes,
    }
}

/// Largest `p ≤ p_max` such that every order condition `Φ(t) = 1/γ(t)` with
/// `|t| ≤ p` holds. Returns 0 for inconsistent tableaux.
pub fn order_of_accuracy(tab: &ButcherTableau, p_max: usize) -> usize {
    let p_max = p_max.min(trees::MAX_TREE_ORDER);
    if p_max == 0 {
        return 0;
    }
    let table = trees::enumerate_trees(p_max).expect("order cap clamped to the tree cap");
    let mut weights = trees::DerivativeWeights::new(tab);
    let mut achieved = 0;
    for (order, level) in table.by_order().iter().enumerate() {
        let satisfied = level.iter().all(|t| {
            let expected = Rational::new(One::one(), t.gamma().into());
            weights.elementary_weight(t) == expected
        });
        if !satisfied {
            break;
        }
        achieved = order + 1;
    }
    achieved
}

/// True iff every `b_i ≥ 0`.
pub fn weights_nonnegative(tab: &ButcherTableau) -> bool {
    tab.b.iter().all(|bi| !bi.is_negative())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::rational::rat;

    const SSPRK33: &str = "
        # Shu-Osher third order
        name = ssprk33
        s = 3
        A = 0 0 0
            1 0 0
            1/4 1/4 0
        b = 1/6 1/6 2/3
        c = 0 1 1/2
    ";

    #[test]
    fn parses_ssprk33() {
        let tab = parse_tableau(SSPRK33).unwrap();
        assert_eq!(tab.stages(), 3);
        assert_eq!(tab.b(), &[rat(1, 6), rat(1, 6), rat(2, 3)]);
        assert_eq!(tab.a_ij(2, 1), &rat(1, 4));
        assert_eq!(tab.name(), "ssprk33");
        assert!(tab.is_explicit());
    }

    #[test]
    fn parses_euler_with_semicolon_rows() {
        let tab = parse_tableau("name = euler\ns = 1\nA = 0\nb = 1\nc = 0").unwrap();
        assert_eq!(tab.stages(), 1);
        let two = parse_tableau("s = 2\nA = 0 0; 1/2 0\nb = 0 1\nc = 0 1/2").unwrap();
        assert_eq!(two.a_ij(1, 0), &rat(1, 2));
    }

    #[test]
    fn parse_errors() {
        let short_b = "s = 3\nA = 0 0 0; 1 0 0; 1 1 0\nb = 1/2 1/2\nc = 0 1 2";
        assert!(matches!(
            parse_tableau(short_b),
            Err(TableauError::LengthMismatch { field: "b", len: 2, expected: 3 })
        ));
        let ragged = "s = 2\nA = 0 0; 1\nb = 0 1\nc = 0 1";
        assert!(matches!(parse_tableau(ragged), Err(TableauError::NonSquare { row: 2, .. })));
        let dup = "s = 1\nA = 0\nb = 1\nb = 1\nc = 0";
        assert!(matches!(parse_tableau(dup), Err(TableauError::DuplicateField(_))));
        let decimal = "s = 1\nA = 0\nb = 1.0\nc = 0";
        assert!(matches!(parse_tableau(decimal), Err(TableauError::Rational { line: 3, .. })));
        let bad = "s = 1\nA = 0\nb = x\nc = 0";
        assert!(matches!(parse_tableau(bad), Err(TableauError::Rational { .. })));
        assert!(matches!(
            parse_tableau("s = 1\nA = 0\nc = 0"),
            Err(TableauError::MissingField("b"))
        ));
    }

    #[test]
    fn validate_reports() {
        let report = validate(&catalog::ssprk33());
        assert!(report.consistent && report.row_sums_hold() && report.explicit());

        let c4 = validate(&catalog::paper_c4s2());
        assert!(c4.consistent && c4.row_sums_hold());

        let bad = ButcherTableau::new(
            "bad",
            vec![vec![rat(0, 1), rat(0, 1)], vec![rat(1, 1), rat(0, 1)]],
            vec![rat(1, 2), rat(1, 4)],
            vec![rat(0, 1), rat(1, 2)],
        )
        .unwrap();
        let r = validate(&bad);
        assert!(!r.consistent);
        assert_eq!(r.weight_sum, rat(3, 4));
        assert_eq!(r.row_sum_violations, vec![1]);
    }

    #[test]
    fn node_reports() {
        let r = node_report(&catalog::ssprk33());
        assert_eq!(r.unique_nodes, BTreeSet::from([0, 1, 2]));
        assert_eq!(r.unique_quadrature_nodes, BTreeSet::from([0, 1, 2]));
        assert!(!r.is_confluent);

        let r = node_report(&catalog::paper_c4s2());
        assert!(r.unique_nodes.is_empty());
        assert!(r.is_confluent);
        assert!(r.unique_quadrature_nodes.is_empty());
        assert!(r.integer_shift_free_quadrature_nodes.is_empty());

        // c = (0, 1/6, 1/3, 1/2, 2/3, 1/3, 1/2, 2/3, 5/6, 1), all b = 1/10
        let r = node_report(&catalog::ssprk104());
        assert_eq!(r.unique_quadrature_nodes, BTreeSet::from([0, 1, 8, 9]));
        assert_eq!(catalog::ssprk104().c()[9], rat(1, 1));
        // 0 and 1 differ by an integer; repeated nodes differ by zero
        assert_eq!(r.integer_shift_free_quadrature_nodes, BTreeSet::from([1, 8]));
    }

    #[test]
    fn orders_of_accuracy() {
        assert_eq!(order_of_accuracy(&catalog::ssprk33(), 4), 3);
        assert_eq!(order_of_accuracy(&catalog::paper_c4s2(), 3), 2);
        assert_eq!(order_of_accuracy(&catalog::paper_c5s3(), 4), 3);
        assert_eq!(order_of_accuracy(&catalog::paper_testmethod(), 3), 2);
        assert_eq!(order_of_accuracy(&catalog::ssprk104(), DEFAULT_MAX_ORDER), 4);
        assert_eq!(order_of_accuracy(&catalog::euler(), DEFAULT_MAX_ORDER), 1);
        assert_eq!(order_of_accuracy(&catalog::midpoint(), DEFAULT_MAX_ORDER), 2);
        assert_eq!(order_of_accuracy(&catalog::implicit_midpoint(), DEFAULT_MAX_ORDER), 2);
        assert_eq!(order_of_accuracy(&catalog::lobatto3a2(), DEFAULT_MAX_ORDER), 2);
    }

    #[test]
    fn text_round_trip_of_catalog() {
        for tab in catalog::Catalog::builtin().iter() {
            let again = parse_tableau(&tab.to_text()).unwrap();
            assert_eq!(&again, tab);
        }
    }
}
