//! Constructive search for explicit methods that satisfy the sufficient
//! conditions for conditional energy stability on autonomous problems, plus an
//! exact verifier and a diagnostic for why the same route fails at order four.
//!
//! Construction is staged. Weights `b` solve the quadrature conditions with
//! sampled free components, then the strictly lower part of `A` solves the
//! (now linear) row-sum and column conditions with sampled free entries. Every
//! candidate is re-checked exactly before it is returned.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expansion::{self, ExpansionError, TreePair};
use crate::problems::Problem;
use crate::rational::{self, int, rat, Rational};
use crate::scalar::Scalar;
use crate::simulate::{self, NumericTableau, SimulateError, StageWorkspace};
use crate::stability::{self, SignStatus};
use crate::tableau::{self, ButcherTableau};
use crate::trees::RootedTree;

/// Bound on `|p|` and `q` for sampled entries `p/q`.
pub const SAMPLE_BOUND: i64 = 32;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpec {
    pub nodes: Vec<Rational>,
    pub target_order: usize,
    /// Depth `K` of the exact sign-condition scan.
    pub sign_depth: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl SearchSpec {
    pub fn new(nodes: Vec<Rational>, target_order: usize) -> Self {
        SearchSpec {
            nodes,
            target_order,
            sign_depth: stability::DEFAULT_SIGN_DEPTH,
            seed: 0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_sign_depth(mut self, k: usize) -> Self {
        self.sign_depth = k;
        self
    }

    /// Checks the shape constraints and refuses node sets that the
    /// sign-condition theorem already rules out.
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(2..=3).contains(&self.target_order) {
            return Err(SearchError::InvalidSpec(format!(
                "target order must be 2 or 3, got {}",
                self.target_order
            )));
        }
        if self.nodes.is_empty() {
            return Err(SearchError::InvalidSpec("no nodes given".into()));
        }
        if self.sign_depth == 0 {
            return Err(SearchError::InvalidSpec("sign depth must be positive".into()));
        }
        if let Some(stage) = strictly_unique_max(&self.nodes) {
            return Err(SearchError::UniqueMaxNode {
                stage,
                node: self.nodes[stage].clone(),
            });
        }
        Ok(())
    }
}

fn strictly_unique_max(nodes: &[Rational]) -> Option<usize> {
    let max = nodes.iter().map(Signed::abs).max()?;
    if max.is_zero() {
        return None;
    }
    let hits: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].abs() == max).collect();
    (hits.len() == 1).then(|| hits[0])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("invalid search spec: {0}")]
    InvalidSpec(String),
    #[error(
        "node c{} = {node} is the only node of maximal magnitude; by the sign-condition \
         theorem the sign-condition sum is eventually positive, so no method of order ≥ 2 \
         with these nodes is energy stable on autonomous problems",
        stage + 1
    )]
    UniqueMaxNode { stage: usize, node: Rational },
    #[error("infeasible linear system for the chosen nodes: {0}")]
    Infeasible(String),
    #[error("iteration budget exhausted\n{0}")]
    Exhausted(Box<FailureReport>),
}

/// Candidate that came closest to passing when the budget ran out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosestCandidate {
    pub tableau: ButcherTableau,
    /// Largest sign-condition value found, with its `k` (or `k = 0` for the
    /// restricted binary-node sum).
    pub worst_k: usize,
    pub worst_value: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FailureReport {
    pub iterations: usize,
    pub negative_weights: usize,
    pub inconsistent_matrix: usize,
    pub sign_violations: usize,
    pub closest: Option<ClosestCandidate>,
}

impl fmt::Display for FailureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "iterations: {}", self.iterations)?;
        writeln!(f, "rejected for negative weights: {}", self.negative_weights)?;
        writeln!(f, "rejected for inconsistent A system: {}", self.inconsistent_matrix)?;
        write!(f, "rejected by sign condition: {}", self.sign_violations)?;
        if let Some(c) = &self.closest {
            let what = if c.worst_k == 0 {
                "binary-node sum".to_string()
            } else {
                format!("k = {}", c.worst_k)
            };
            write!(
                f,
                "\nclosest violation: {what} value {}\n{}",
                c.worst_value,
                c.tableau.to_text().trim_end()
            )?;
        }
        Ok(())
    }
}

/// Solution set `x = particular + Σ free_k · direction_k` of a linear system.
#[derive(Debug, Clone)]
struct AffineSolution {
    particular: Vec<Rational>,
    free: Vec<usize>,
    directions: Vec<Vec<Rational>>,
}

impl AffineSolution {
    fn point(&self, values: &[Rational]) -> Vec<Rational> {
        let mut x = self.particular.clone();
        for (v, dir) in values.iter().zip(&self.directions) {
            for (xi, di) in x.iter_mut().zip(dir) {
                *xi += v * di;
            }
        }
        x
    }
}

/// Exact Gauss–Jordan elimination; `None` when the system is inconsistent.
fn solve_affine(mut rows: Vec<Vec<Rational>>, mut rhs: Vec<Rational>, n: usize) -> Option<AffineSolution> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        rhs.swap(r, p);
        let inv = rows[r][col].recip();
        for x in rows[r].iter_mut() {
            *x *= &inv;
        }
        rhs[r] *= &inv;
        for i in 0..rows.len() {
            if i == r || rows[i][col].is_zero() {
                continue;
            }
            let factor = rows[i][col].clone();
            for k in 0..n {
                let d = &factor * &rows[r][k];
                rows[i][k] -= d;
            }
            let d = &factor * &rhs[r];
            rhs[i] -= d;
        }
        pivots.push(col);
        r += 1;
    }
    if rhs[r..].iter().any(|v| !v.is_zero()) {
        return None;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut particular = vec![Rational::zero(); n];
    for (row, &col) in pivots.iter().enumerate() {
        particular[col] = rhs[row].clone();
    }
    let directions = free
        .iter()
        .map(|&fc| {
            let mut d = vec![Rational::zero(); n];
            d[fc] = Rational::one();
            for (row, &col) in pivots.iter().enumerate() {
                d[col] = -rows[row][fc].clone();
            }
            d
        })
        .collect();
    Some(AffineSolution {
        particular,
        free,
        directions,
    })
}

/// Distinct values `p/q` with `|p| ≤ 32`, `1 ≤ q ≤ 32`, in ascending order.
fn sample_pool() -> Vec<Rational> {
    let mut set = std::collections::BTreeSet::new();
    for q in 1..=SAMPLE_BOUND {
        for p in -SAMPLE_BOUND..=SAMPLE_BOUND {
            set.insert(rat(p, q));
        }
    }
    set.into_iter().collect()
}

/// Quadrature conditions on `b` for the given nodes.
fn weight_system(nodes: &[Rational], order: usize) -> Option<AffineSolution> {
    let s = nodes.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for p in 0..order {
        rows.push(nodes.iter().map(|c| rational::pow(c, p as u32)).collect());
        rhs.push(Rational::new(1.into(), ((p + 1) as i64).into()));
    }
    // The last column condition has no entries of A: b_s (1 − c_s) = 0.
    if !nodes[s - 1].is_one() {
        let mut row = vec![Rational::zero(); s];
        row[s - 1] = Rational::one();
        rows.push(row);
        rhs.push(Rational::zero());
    }
    solve_affine(rows, rhs, s)
}

fn lower_index(s: usize) -> Vec<(usize, usize)> {
    (1..s).flat_map(|i| (0..i).map(move |j| (i, j))).collect()
}

/// Row sums and column conditions on the strictly lower part of `A`.
fn matrix_system(nodes: &[Rational], b: &[Rational]) -> Option<AffineSolution> {
    let s = nodes.len();
    let index = lower_index(s);
    let n = index.len();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 1..s {
        rows.push(index.iter().map(|&(r, _)| if r == i { int(1) } else { int(0) }).collect());
        rhs.push(nodes[i].clone());
    }
    for j in 0..s.saturating_sub(1) {
        rows.push(
            index
                .iter()
                .map(|&(r, c)| if c == j { b[r].clone() } else { Rational::zero() })
                .collect(),
        );
        rhs.push(&b[j] * (Rational::one() - &nodes[j]));
    }
    solve_affine(rows, rhs, n)
}

fn assemble(nodes: &[Rational], b: Vec<Rational>, lower: &[Rational]) -> ButcherTableau {
    let s = nodes.len();
    let mut a = vec![vec![Rational::zero(); s]; s];
    for (&(i, j), v) in lower_index(s).iter().zip(lower) {
        a[i][j] = v.clone();
    }
    ButcherTableau::new("candidate", a, b, nodes.to_vec()).expect("shapes match by construction")
}

/// Searches for a tableau with the requested nodes. Deterministic in `spec.seed`.
pub fn construct_candidate(spec: &SearchSpec) -> Result<ButcherTableau, SearchError> {
    spec.validate()?;
    let nodes = &spec.nodes;
    if !nodes[0].is_zero() {
        return Err(SearchError::Infeasible("an explicit method needs c1 = 0".into()));
    }
    let weights = weight_system(nodes, spec.target_order).ok_or_else(|| {
        SearchError::Infeasible(format!(
            "no weights satisfy the order-{} quadrature conditions",
            spec.target_order
        ))
    })?;
    let pool = sample_pool();
    let unit: Vec<Rational> = pool
        .iter()
        .filter(|v| !v.is_negative() && **v <= Rational::one())
        .cloned()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = FailureReport::default();

    for _ in 0..spec.max_iterations {
        report.iterations += 1;
        let free_b: Vec<Rational> = weights
            .free
            .iter()
            .map(|_| unit.choose(&mut rng).unwrap().clone())
            .collect();
        let b = weights.point(&free_b);
        if b.iter().any(Signed::is_negative) {
            report.negative_weights += 1;
            continue;
        }
        let Some(lower) = matrix_system(nodes, &b) else {
            report.inconsistent_matrix += 1;
            continue;
        };
        let free_a: Vec<Rational> = lower
            .free
            .iter()
            .map(|_| pool.choose(&mut rng).unwrap().clone())
            .collect();
        let tab = assemble(nodes, b, &lower.point(&free_a));

        if let Some((k, v)) = worst_sign_value(&tab, spec.sign_depth) {
            report.sign_violations += 1;
            let closer = report.closest.as_ref().is_none_or(|c| v < c.worst_value);
            if closer {
                report.closest = Some(ClosestCandidate {
                    tableau: tab,
                    worst_k: k,
                    worst_value: v,
                });
            }
            continue;
        }
        let check = verify_candidate(&tab, spec.target_order, spec.sign_depth);
        if check.passed() {
            let mut tab = tab;
            tab.set_name(format!("search_s{}_p{}_seed{}", nodes.len(), spec.target_order, spec.seed));
            return Ok(tab);
        }
    }
    Err(SearchError::Exhausted(Box::new(report)))
}

/// Largest non-negative value among the binary-node sum (`k = 0`) and `V(k)`
/// for `k ≤ depth`; `None` when all are negative.
fn worst_sign_value(tab: &ButcherTableau, depth: usize) -> Option<(usize, Rational)> {
    let binary = stability::binary_node_sign_value(tab);
    let first = stability::sign_condition_value(tab, 1);
    let mut candidates = vec![(0, binary), (1, first)];
    if candidates.iter().all(|(_, v)| v.is_negative()) {
        let later = (2..=depth)
            .map(|k| (k, stability::sign_condition_value(tab, k as u32)))
            .find(|(_, v)| !v.is_negative());
        candidates.extend(later);
    }
    candidates
        .into_iter()
        .filter(|(_, v)| !v.is_negative())
        .max_by(|x, y| x.1.cmp(&y.1))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Informational checks do not affect [`VerificationReport::passed`].
    pub required: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub method: String,
    pub target_order: usize,
    pub checks: Vec<ConditionCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.required).all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {} (target order {})", self.method, self.target_order)?;
        for c in &self.checks {
            let mark = match (c.passed, c.required) {
                (true, _) => "pass",
                (false, true) => "FAIL",
                (false, false) => "note",
            };
            writeln!(f, "  [{mark}] {}: {}", c.name, c.detail)?;
        }
        write!(f, "result: {}", if self.passed() { "pass" } else { "fail" })
    }
}

pub const CHECK_EXPLICIT: &str = "explicit";
pub const CHECK_WEIGHTS: &str = "nonnegative weights";
pub const CHECK_ROW_SUMS: &str = "row sums";
pub const CHECK_COLUMNS: &str = "column condition";
pub const CHECK_ORDER: &str = "order";
pub const CHECK_SIGN: &str = "sign condition";
pub const CHECK_BINARY: &str = "binary-node sum";

/// Exact re-check of the sufficient conditions, independent of how `tab` was produced.
pub fn verify_candidate(tab: &ButcherTableau, target_order: usize, sign_depth: usize) -> VerificationReport {
    let s = tab.stages();
    let mut checks = Vec::new();
    let mut push = |name, passed, required, detail: String| {
        checks.push(ConditionCheck {
            name,
            passed,
            required,
            detail,
        })
    };

    let val = tableau::validate(tab);
    push(
        CHECK_EXPLICIT,
        val.explicit(),
        true,
        if val.explicit() {
            "A strictly lower triangular".into()
        } else {
            format!("nonzero entries on or above the diagonal at {:?}", one_based_pairs(&val.explicit_violations))
        },
    );

    let negative: Vec<usize> = (0..s).filter(|&i| tab.b()[i].is_negative()).map(|i| i + 1).collect();
    push(
        CHECK_WEIGHTS,
        negative.is_empty(),
        true,
        if negative.is_empty() {
            "all b_i ≥ 0".into()
        } else {
            format!("negative weights at stages {negative:?}")
        },
    );

    let bad_rows: Vec<usize> = val.row_sum_violations.iter().map(|i| i + 1).collect();
    push(
        CHECK_ROW_SUMS,
        bad_rows.is_empty(),
        true,
        if bad_rows.is_empty() {
            "c_i = Σ_j a_ij".into()
        } else {
            format!("violated at stages {bad_rows:?}")
        },
    );

    let residuals = column_residuals(tab);
    let bad_cols: Vec<String> = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_zero())
        .map(|(j, r)| format!("j={}: {r}", j + 1))
        .collect();
    push(
        CHECK_COLUMNS,
        bad_cols.is_empty(),
        true,
        if bad_cols.is_empty() {
            "b_j − Σ_i b_i a_ij − b_j c_j = 0 for all j".into()
        } else {
            format!("nonzero residuals {}", bad_cols.join(", "))
        },
    );

    let order = tableau::order_of_accuracy(tab, target_order);
    push(
        CHECK_ORDER,
        order >= target_order,
        true,
        format!("order {order} (target {target_order})"),
    );

    let verdict = stability::sign_condition_verdict(tab, sign_depth.max(1));
    let (ok, detail) = match &verdict.status {
        SignStatus::ViolatedAt(k) => (
            false,
            format!("positive at k = {k}: {}", verdict.values[k - 1]),
        ),
        SignStatus::ProvedNegativeAllK(route) => (true, format!("negative for all k ({route})")),
        SignStatus::NegativeUpToKInconclusive => {
            let nonneg = verdict.values.iter().position(|v| !v.is_negative());
            match nonneg {
                Some(k) => (false, format!("zero at k = {}", k + 1)),
                None => (true, format!("negative for k ≤ {}", verdict.tested_k)),
            }
        }
    };
    push(CHECK_SIGN, ok, true, detail);

    let binary = stability::binary_node_sign_value(tab);
    push(
        CHECK_BINARY,
        binary.is_negative(),
        false,
        format!("restricted to c_i ∈ {{0, 1}} at k = 1: {binary}"),
    );

    VerificationReport {
        method: tab.name().to_string(),
        target_order,
        checks,
    }
}

fn one_based_pairs(v: &[(usize, usize)]) -> Vec<(usize, usize)> {
    v.iter().map(|(i, j)| (i + 1, j + 1)).collect()
}

/// `b_j − Σ_i b_i a_ij − b_j c_j` for each `j`.
pub fn column_residuals(tab: &ButcherTableau) -> Vec<Rational> {
    let s = tab.stages();
    (0..s)
        .map(|j| {
            let bj = &tab.b()[j];
            let col: Rational = (0..s).map(|i| &tab.b()[i] * tab.a_ij(i, j)).sum();
            bj - col - bj * &tab.c()[j]
        })
        .collect()
}

/// Why the same recipe cannot reach order four.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObstructionReport {
    pub method: String,
    pub order: usize,
    /// Coefficient of `‖f′f‖²`.
    pub leading_coefficient: Rational,
    /// `b_j Σ_i b_i c_i − Σ_i b_i c_i a_ij − b_j Σ_i a_ji c_i`, one per stage.
    pub residuals: Vec<Rational>,
    /// Nonzero coefficients of pairs `⟨f′f, ·⟩` up to `max_total_order`.
    pub cross_terms: BTreeMap<TreePair, Rational>,
    pub max_total_order: usize,
    pub has_negative_node: bool,
}

impl ObstructionReport {
    pub fn residuals_vanish(&self) -> bool {
        self.residuals.iter().all(Zero::is_zero)
    }
}

impl fmt::Display for ObstructionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {} (order {})", self.method, self.order)?;
        writeln!(f, "‖f′f‖² coefficient: {}", self.leading_coefficient)?;
        let res: Vec<String> = self.residuals.iter().map(ToString::to_string).collect();
        writeln!(f, "⟨f′f, ·⟩ stage residuals: [{}]", res.join(", "))?;
        writeln!(f, "negative node present: {}", if self.has_negative_node { "yes" } else { "no" })?;
        write!(
            f,
            "nonzero ⟨f′f, ·⟩ coefficients up to Δt^{}: {}",
            self.max_total_order,
            self.cross_terms.len()
        )?;
        for (pair, c) in &self.cross_terms {
            write!(f, "\n  Δt^{} {} {}", pair.total_order(), c, pair.notation())?;
        }
        Ok(())
    }
}

/// Total order of the cross terms inspected by [`fourth_order_obstruction_report`].
pub const OBSTRUCTION_ORDER: usize = 6;

pub fn fourth_order_obstruction_report(tab: &ButcherTableau) -> Result<ObstructionReport, ExpansionError> {
    let exp = expansion::expansion_coefficients(tab, OBSTRUCTION_ORDER)?;
    let ff = RootedTree::chain(2);
    let leading = exp
        .coefficient(&ff, &ff)
        .cloned()
        .unwrap_or_else(Rational::zero);
    let cross_terms = exp
        .terms()
        .iter()
        .filter(|(p, c)| p.contains(&ff) && !p.is_diagonal() && !c.is_zero())
        .map(|(p, c)| (p.clone(), c.clone()))
        .collect();
    let s = tab.stages();
    let (b, c) = (tab.b(), tab.c());
    let bc: Rational = b.iter().zip(c).map(|(x, y)| x * y).sum();
    let residuals = (0..s)
        .map(|j| {
            let left: Rational = (0..s).map(|i| &b[i] * &c[i] * tab.a_ij(i, j)).sum();
            let right: Rational = (0..s).map(|i| tab.a_ij(j, i) * &c[i]).sum();
            &b[j] * &bc - left - &b[j] * right
        })
        .collect();
    Ok(ObstructionReport {
        method: tab.name().to_string(),
        order: tableau::order_of_accuracy(tab, tableau::DEFAULT_MAX_ORDER),
        leading_coefficient: leading,
        residuals,
        cross_terms,
        max_total_order: OBSTRUCTION_ORDER,
        has_negative_node: c.iter().any(Signed::is_negative),
    })
}

/// One-step energy change `‖u₊‖² − ‖u₀‖²` at `t = 0`.
pub fn step_energy_change<T: Scalar, P: Problem>(
    tab: &NumericTableau<T>,
    prob: &P,
    u0: &[f64],
    dt: f64,
) -> Result<T, SimulateError> {
    let u: Vec<T> = u0.iter().map(|&x| T::lift(x)).collect();
    let mut ws = StageWorkspace::new(tab.stages(), u.len());
    let next = ws
        .step(tab, prob, T::zero(), &u, T::lift(dt))
        .map_err(|source| SimulateError::Step { step: 0, source })?;
    Ok(simulate::energy(prob, &next) - simulate::energy(prob, &u))
}

/// Growth ratio between successive steps of the upward scan in [`stable_step_threshold`].
const SCAN_RATIO: f64 = 1.05;

/// Smallest step (to two significant digits) at which one step from `u0`
/// increases the energy. A geometric scan upward from `dt_min` locates the
/// first growing step and bisection refines it, so every scanned step below
/// the result is non-increasing. Returns `dt_max` when no growth is seen.
pub fn stable_step_threshold<T: Scalar, P: Problem>(
    tab: &ButcherTableau,
    prob: &P,
    u0: &[f64],
    dt_min: f64,
    dt_max: f64,
) -> Result<f64, SimulateError> {
    let numeric = NumericTableau::<T>::new(tab)?;
    let grows = |dt: f64| -> Result<bool, SimulateError> {
        Ok(step_energy_change(&numeric, prob, u0, dt)? > T::zero())
    };
    if grows(dt_min)? {
        return Ok(0.0);
    }
    let mut lo = dt_min;
    let mut hi = loop {
        let next = (lo * SCAN_RATIO).min(dt_max);
        if grows(next)? {
            break next;
        }
        if next >= dt_max {
            return Ok(dt_max);
        }
        lo = next;
    };
    while (hi - lo) / hi > 5e-3 {
        let mid = 0.5 * (lo + hi);
        if grows(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(round_significant(lo, 2))
}

fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).floor() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::problems::{cubic_rotation, inverse_square_rotation};
    use crate::scalar::Extended;

    fn nodes(v: &[(i64, i64)]) -> Vec<Rational> {
        v.iter().map(|&(p, q)| rat(p, q)).collect()
    }

    #[test]
    fn affine_solver_handles_free_columns() {
        let rows = vec![vec![int(1), int(1), int(1)], vec![int(0), int(1), int(1)]];
        let sol = solve_affine(rows, vec![int(1), rat(1, 2)], 3).unwrap();
        assert_eq!(sol.free, vec![2]);
        let x = sol.point(&[rat(1, 4)]);
        assert_eq!(x, vec![rat(1, 2), rat(1, 4), rat(1, 4)]);
        let bad = solve_affine(vec![vec![int(1)], vec![int(1)]], vec![int(0), int(1)], 1);
        assert!(bad.is_none());
    }

    #[test]
    fn pool_is_reduced_and_bounded() {
        let pool = sample_pool();
        assert!(pool.iter().all(|v| v.abs() <= int(32)));
        let distinct: std::collections::BTreeSet<_> = pool.iter().collect();
        assert_eq!(distinct.len(), pool.len());
        assert!(pool.contains(&rat(31, 32)));
    }

    #[test]
    fn second_order_candidate_round_trips() {
        let spec = SearchSpec::new(nodes(&[(0, 1), (1, 1), (0, 1), (1, 1)]), 2).with_seed(7);
        let tab = construct_candidate(&spec).unwrap();
        assert!(verify_candidate(&tab, 2, 64).passed());
        let again = construct_candidate(&spec).unwrap();
        assert_eq!(tab, again);
    }

    #[test]
    fn third_order_candidate_round_trips() {
        let spec = SearchSpec::new(nodes(&[(0, 1), (1, 2), (1, 1), (0, 1), (1, 1)]), 3).with_seed(3);
        let tab = construct_candidate(&spec).unwrap();
        let report = verify_candidate(&tab, 3, 64);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn unique_max_node_is_refused() {
        let spec = SearchSpec::new(nodes(&[(0, 1), (1, 2), (1, 1)]), 2);
        match construct_candidate(&spec) {
            Err(SearchError::UniqueMaxNode { stage: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("sign-condition theorem"));
    }

    #[test]
    fn nonzero_first_node_is_infeasible() {
        let spec = SearchSpec::new(nodes(&[(1, 1), (0, 1), (1, 1)]), 2);
        assert!(matches!(construct_candidate(&spec), Err(SearchError::Infeasible(_))));
    }

    #[test]
    fn exhausted_budget_reports_counts() {
        let spec = SearchSpec::new(nodes(&[(0, 1), (1, 1), (0, 1), (1, 1)]), 2).with_max_iterations(1);
        match construct_candidate(&spec) {
            Ok(tab) => assert!(verify_candidate(&tab, 2, 64).passed()),
            Err(SearchError::Exhausted(r)) => assert_eq!(r.iterations, 1),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn catalog_methods_verify_as_expected() {
        assert!(verify_candidate(&catalog::paper_c4s2(), 2, 64).passed());
        assert!(verify_candidate(&catalog::paper_c5s3(), 3, 64).passed());
        let ssp = verify_candidate(&catalog::ssprk33(), 3, 64);
        assert!(!ssp.passed());
        assert!(!ssp.check(CHECK_COLUMNS).unwrap().passed);
    }

    #[test]
    fn rk4_obstruction() {
        let a = vec![
            vec![int(0), int(0), int(0), int(0)],
            vec![rat(1, 2), int(0), int(0), int(0)],
            vec![int(0), rat(1, 2), int(0), int(0)],
            vec![int(0), int(0), int(1), int(0)],
        ];
        let b = vec![rat(1, 6), rat(1, 3), rat(1, 3), rat(1, 6)];
        let rk4 = ButcherTableau::with_row_sum_nodes("rk4", a, b).unwrap();
        let r = fourth_order_obstruction_report(&rk4).unwrap();
        assert_eq!(r.order, 4);
        assert!(r.leading_coefficient.is_zero());
        assert!(!r.residuals_vanish());
        assert!(!r.has_negative_node);

        let c5 = fourth_order_obstruction_report(&catalog::paper_c5s3()).unwrap();
        assert!(c5.leading_coefficient.is_negative());
    }

    #[test]
    fn constructed_method_is_stable_below_threshold() {
        let spec = SearchSpec::new(nodes(&[(0, 1), (1, 1), (0, 1), (1, 1)]), 2).with_seed(11);
        let tab = construct_candidate(&spec).unwrap();
        let cubic = cubic_rotation();
        let u0 = [0.6, 0.8];
        let dt_star = stable_step_threshold::<Extended, _>(&tab, &cubic, &u0, 1e-4, 2.0).unwrap();
        assert!(dt_star > 1e-4);
        let numeric = NumericTableau::<Extended>::new(&tab).unwrap();
        for scale in [1.0, 0.9, 0.5, 0.1, 0.01] {
            let de = step_energy_change(&numeric, &cubic, &u0, dt_star * scale).unwrap();
            assert!(de <= Extended::from(0.0), "growth at dt = {}", dt_star * scale);
        }
        let inv = inverse_square_rotation();
        let dt_inv = stable_step_threshold::<Extended, _>(&tab, &inv, &[1.0, 0.0], 1e-4, 2.0).unwrap();
        assert!(dt_inv > 1e-4);
    }
}
