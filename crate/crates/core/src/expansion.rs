//! Tree-pair expansion of the energy change of one Runge–Kutta step.
//!
//! Writing the stage derivatives as B-series, the quadratic part
//! `Δt² Σᵢⱼ Mᵢⱼ ⟨fᵢ, fⱼ⟩` of the energy change becomes
//!
//! ```text
//! Σ_{t₁,t₂} Δt^{|t₁|+|t₂|} C(t₁,t₂) ⟨F(t₁)(u₀), F(t₂)(u₀)⟩,
//! C(t₁,t₂) = Σᵢⱼ Mᵢⱼ (Φᵢ D)(t₁) (Φⱼ D)(t₂) / (σ(t₁) σ(t₂)).
//! ```
//!
//! Pairs are unordered; the stored coefficient of `{t₁, t₂}` is `2C(t₁,t₂)`
//! for distinct trees and `C(t,t)` on the diagonal.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::problems::{AutonomousField, DifferentialOracle, Gram, ProblemError};
use crate::rational::Rational;
use crate::scalar::Scalar;
use crate::simulate::{NumericTableau, StageWorkspace};
use crate::stability::stability_matrix;
use crate::tableau::{ButcherTableau, TableauError};
use crate::trees::{enumerate_trees, DerivativeWeights, RootedTree};

/// Largest total order `|t₁| + |t₂|` accepted by [`expansion_coefficients`].
pub const MAX_EXPANSION_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpansionError {
    #[error("total order {0} outside 2..={MAX_EXPANSION_ORDER}")]
    OrderCap(usize),
    #[error("tree of order {needed} needs derivative depth {depth}, oracle supports {available}")]
    OracleDepth {
        needed: usize,
        depth: usize,
        available: usize,
    },
    #[error("slope fit needs at least 4 step sizes, got {0}")]
    TooFewSteps(usize),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

/// Unordered pair, stored with `first ≤ second` in tree order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreePair {
    first: RootedTree,
    second: RootedTree,
}

impl TreePair {
    pub fn new(a: RootedTree, b: RootedTree) -> Self {
        if a <= b {
            TreePair { first: a, second: b }
        } else {
            TreePair { first: b, second: a }
        }
    }

    pub fn first(&self) -> &RootedTree {
        &self.first
    }

    pub fn second(&self) -> &RootedTree {
        &self.second
    }

    pub fn total_order(&self) -> usize {
        self.first.order() + self.second.order()
    }

    pub fn is_diagonal(&self) -> bool {
        self.first == self.second
    }

    pub fn contains(&self, t: &RootedTree) -> bool {
        &self.first == t || &self.second == t
    }

    /// `‖f′f‖²` or `⟨f, f′f′f⟩`.
    pub fn notation(&self) -> String {
        if self.is_diagonal() {
            format!("‖{}‖²", self.first.differential_notation())
        } else {
            format!(
                "⟨{}, {}⟩",
                self.first.differential_notation(),
                self.second.differential_notation()
            )
        }
    }
}

impl Ord for TreePair {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_order()
            .cmp(&other.total_order())
            .then_with(|| self.first.cmp(&other.first))
            .then_with(|| self.second.cmp(&other.second))
    }
}

impl PartialOrd for TreePair {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyExpansion {
    method: String,
    max_total_order: usize,
    terms: BTreeMap<TreePair, Rational>,
}

/// One machine-readable expansion row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionRow {
    pub order: usize,
    pub tree1: String,
    pub tree2: String,
    pub numerator: String,
    pub denominator: String,
}

impl EnergyExpansion {
    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn max_total_order(&self) -> usize {
        self.max_total_order
    }

    pub fn terms(&self) -> &BTreeMap<TreePair, Rational> {
        &self.terms
    }

    pub fn coefficient(&self, a: &RootedTree, b: &RootedTree) -> Option<&Rational> {
        self.terms.get(&TreePair::new(a.clone(), b.clone()))
    }

    /// Coefficient by bracket text, e.g. `("t", "[[t]]")`.
    pub fn coefficient_of(&self, a: &str, b: &str) -> Option<&Rational> {
        let a: RootedTree = a.parse().ok()?;
        let b: RootedTree = b.parse().ok()?;
        self.coefficient(&a, &b)
    }

    pub fn terms_of_order(&self, n: usize) -> impl Iterator<Item = (&TreePair, &Rational)> {
        self.terms.iter().filter(move |(p, _)| p.total_order() == n)
    }

    /// Returns a copy with one coefficient replaced.
    pub fn with_coefficient(&self, pair: TreePair, value: Rational) -> Self {
        let mut out = self.clone();
        out.terms.insert(pair, value);
        out
    }

    pub fn rows(&self) -> Vec<ExpansionRow> {
        self.terms
            .iter()
            .map(|(p, c)| ExpansionRow {
                order: p.total_order(),
                tree1: p.first.to_string(),
                tree2: p.second.to_string(),
                numerator: c.numer().to_string(),
                denominator: c.denom().to_string(),
            })
            .collect()
    }

    /// `term=<order> <tree1> <tree2> <num> <den>` lines.
    pub fn machine_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "method={}", self.method).unwrap();
        writeln!(out, "max_total_order={}", self.max_total_order).unwrap();
        for r in self.rows() {
            writeln!(
                out,
                "term={} {} {} {} {}",
                r.order, r.tree1, r.tree2, r.numerator, r.denominator
            )
            .unwrap();
        }
        out
    }
}

pub fn expansion_coefficients(
    tab: &ButcherTableau,
    n_tot: usize,
) -> Result<EnergyExpansion, ExpansionError> {
    if !(2..=MAX_EXPANSION_ORDER).contains(&n_tot) {
        return Err(ExpansionError::OrderCap(n_tot));
    }
    let table = enumerate_trees(n_tot - 1).expect("order within tree cap");
    let m = stability_matrix(tab);
    let mut weights = DerivativeWeights::new(tab);
    // (Φᵢ D)(t) / σ(t) per tree
    let scaled: Vec<(RootedTree, Vec<Rational>)> = table
        .iter()
        .map(|t| {
            let sigma = Rational::from_integer(t.sigma().into());
            let w = weights.stage_weights(t).into_iter().map(|x| x / &sigma).collect();
            (t.clone(), w)
        })
        .collect();
    let two = Rational::from_integer(2.into());
    let mut terms = BTreeMap::new();
    for (a, (t1, w1)) in scaled.iter().enumerate() {
        for (t2, w2) in &scaled[a..] {
            if t1.order() + t2.order() > n_tot {
                continue;
            }
            let c = m.bilinear(w1, w2);
            let stored = if t1 == t2 { c } else { &two * c };
            terms.insert(TreePair::new(t1.clone(), t2.clone()), stored);
        }
    }
    Ok(EnergyExpansion {
        method: tab.name().to_string(),
        max_total_order: n_tot,
        terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstOrderSign {
    /// All weights are non-negative, so `2Δt Σ bᵢ⟨uᵢ, fᵢ⟩ ≤ 0` on semibounded problems.
    NonpositiveGuaranteed,
    Indefinite,
}

pub fn first_order_term_sign(tab: &ButcherTableau) -> FirstOrderSign {
    if tab.b().iter().all(|b| !b.is_negative()) {
        FirstOrderSign::NonpositiveGuaranteed
    } else {
        FirstOrderSign::Indefinite
    }
}

fn superscript(n: usize) -> String {
    const SUP: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string()
        .chars()
        .map(|d| SUP[d.to_digit(10).unwrap() as usize])
        .collect()
}

fn magnitude(c: &Rational) -> String {
    c.abs().to_string()
}

/// Text in elementary-differential notation, grouped by power of `Δt`.
pub fn render_expansion(exp: &EnergyExpansion) -> String {
    let mut groups: BTreeMap<usize, Vec<(&TreePair, &Rational)>> = BTreeMap::new();
    for (p, c) in exp.terms.iter().filter(|(_, c)| !c.is_zero()) {
        groups.entry(p.total_order()).or_default().push((p, c));
    }
    if groups.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (g, (order, terms)) in groups.iter().enumerate() {
        let dt = format!("Δt{}", superscript(*order));
        if let [(p, c)] = terms.as_slice() {
            let negative = c.is_negative();
            if g == 0 {
                if negative {
                    out.push('−');
                }
            } else {
                out.push_str(if negative { " − " } else { " + " });
            }
            write!(out, "{} {} {}", magnitude(c), dt, p.notation()).unwrap();
            continue;
        }
        if g > 0 {
            out.push_str(" + ");
        }
        write!(out, "{dt} [ ").unwrap();
        for (k, (p, c)) in terms.iter().enumerate() {
            let negative = c.is_negative();
            if k == 0 {
                if negative {
                    out.push('−');
                }
            } else {
                out.push_str(if negative { " − " } else { " + " });
            }
            write!(out, "{} {}", magnitude(c), p.notation()).unwrap();
        }
        out.push_str(" ]");
    }
    out
}

/// `F(t)(u₀)` for every tree up to `max_order`, computed recursively from
/// the oracle: `F(τ) = f(u₀)`, `F([t₁..t_m]) = f⁽ᵐ⁾(u₀; F(t₁), …, F(t_m))`.
pub fn elementary_differentials<T, O>(
    oracle: &O,
    u0: &[T],
    trees: &[RootedTree],
) -> Result<HashMap<RootedTree, Vec<T>>, ExpansionError>
where
    T: Scalar,
    O: DifferentialOracle<T> + ?Sized,
{
    let mut memo: HashMap<RootedTree, Vec<T>> = HashMap::new();
    for t in trees {
        elementary_differential_into(oracle, u0, t, &mut memo)?;
    }
    Ok(memo)
}

fn elementary_differential_into<T, O>(
    oracle: &O,
    u0: &[T],
    t: &RootedTree,
    memo: &mut HashMap<RootedTree, Vec<T>>,
) -> Result<Vec<T>, ExpansionError>
where
    T: Scalar,
    O: DifferentialOracle<T> + ?Sized,
{
    if let Some(v) = memo.get(t) {
        return Ok(v.clone());
    }
    let depth = t.children().len();
    if depth > oracle.max_depth() {
        return Err(ExpansionError::OracleDepth {
            needed: t.order(),
            depth,
            available: oracle.max_depth(),
        });
    }
    let mut dirs = Vec::with_capacity(depth);
    for child in t.children() {
        dirs.push(elementary_differential_into(oracle, u0, child, memo)?);
    }
    let value = oracle.derivative(u0, &dirs)?;
    memo.insert(t.clone(), value.clone());
    Ok(value)
}

pub fn elementary_differential<T, O>(
    oracle: &O,
    u0: &[T],
    t: &RootedTree,
) -> Result<Vec<T>, ExpansionError>
where
    T: Scalar,
    O: DifferentialOracle<T> + ?Sized,
{
    elementary_differential_into(oracle, u0, t, &mut HashMap::new())
}

/// `Σ_pairs coeff · ⟨F(t₁), F(t₂)⟩_P` per total order, without the `Δt` power.
pub fn contributions_by_order<T, O>(
    exp: &EnergyExpansion,
    oracle: &O,
    gram: &Gram,
    u0: &[T],
) -> Result<BTreeMap<usize, T>, ExpansionError>
where
    T: Scalar,
    O: DifferentialOracle<T> + ?Sized,
{
    let mut memo = HashMap::new();
    let mut out: BTreeMap<usize, T> = BTreeMap::new();
    for (pair, coeff) in &exp.terms {
        let f1 = elementary_differential_into(oracle, u0, &pair.first, &mut memo)?;
        let f2 = elementary_differential_into(oracle, u0, &pair.second, &mut memo)?;
        let term = T::from_rational(coeff) * gram.inner(&f1, &f2);
        let slot = out.entry(pair.total_order()).or_insert_with(T::zero);
        *slot = *slot + term;
    }
    Ok(out)
}

/// Truncated series value at step size `dt`.
pub fn evaluate_expansion<T, O>(
    exp: &EnergyExpansion,
    oracle: &O,
    gram: &Gram,
    u0: &[T],
    dt: T,
) -> Result<T, ExpansionError>
where
    T: Scalar,
    O: DifferentialOracle<T> + ?Sized,
{
    let by_order = contributions_by_order(exp, oracle, gram, u0)?;
    Ok(by_order
        .into_iter()
        .fold(T::zero(), |acc, (n, v)| acc + v * dt.powi(n as i32)))
}

/// `‖u₊‖² − ‖u₀‖² − 2Δt Σ bᵢ⟨uᵢ, f(uᵢ)⟩` from one actual step.
pub fn quadratic_energy_change<T, P>(
    tab: &NumericTableau<T>,
    prob: &P,
    u0: &[T],
    dt: T,
) -> Result<T, ExpansionError>
where
    T: Scalar,
    P: AutonomousField,
{
    let mut ws = StageWorkspace::new(tab.stages(), u0.len());
    let u1 = ws.step(tab, prob, T::zero(), u0, dt)?;
    let gram = prob.gram();
    let diff: Vec<T> = u1.iter().zip(u0).map(|(a, b)| *a - *b).collect();
    let sum: Vec<T> = u1.iter().zip(u0).map(|(a, b)| *a + *b).collect();
    let mut q = gram.inner(&diff, &sum);
    for (i, bi) in tab.b().iter().enumerate() {
        q = q - T::lift(2.0) * dt * *bi * gram.inner(ws.stage(i), ws.derivative(i));
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub dts: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
    /// Some residual sits at the working-precision floor.
    pub roundoff_floor: bool,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Log-log slope of `|Q(dt) − series(dt)|` over `dts`, evaluated in `T`.
pub fn validate_expansion_order<T, P>(
    tab: &ButcherTableau,
    prob: &P,
    u0: &[f64],
    n_tot: usize,
    dts: &[f64],
) -> Result<SlopeReport, ExpansionError>
where
    T: Scalar,
    P: AutonomousField,
{
    if dts.len() < 4 {
        return Err(ExpansionError::TooFewSteps(dts.len()));
    }
    let numeric = NumericTableau::<T>::new(tab)?;
    let exp = expansion_coefficients(tab, n_tot)?;
    let u0t: Vec<T> = u0.iter().map(|&x| T::lift(x)).collect();
    let by_order = contributions_by_order(&exp, prob, prob.gram(), &u0t)?;
    let unit = T::epsilon();
    let mut residuals = Vec::with_capacity(dts.len());
    let mut floor = false;
    for &dt in dts {
        let h = T::lift(dt);
        let q = quadratic_energy_change(&numeric, prob, &u0t, h)?;
        let series = by_order
            .iter()
            .fold(T::zero(), |acc, (n, v)| acc + *v * h.powi(*n as i32));
        let r = (q - series).abs();
        let scale = prob.gram().norm_sq(&u0t);
        if r <= T::lift(1e3) * unit * scale * h * h {
            floor = true;
        }
        residuals.push(r.to_f64_lossy());
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
    Ok(SlopeReport {
        dts: dts.to_vec(),
        residuals,
        slope: least_squares_slope(&xs, &ys),
        roundoff_floor: floor,
    })
}

/// `start, start/2, …` with `count` entries.
pub fn halving_sequence(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * 0.5f64.powi(k as i32)).collect()
}

/// Halving sequence of 8 step sizes starting where `|Q(dt)| ≤ 10⁻³‖u₀‖²`.
pub fn default_dt_sequence<T, P>(
    tab: &ButcherTableau,
    prob: &P,
    u0: &[f64],
) -> Result<Vec<f64>, ExpansionError>
where
    T: Scalar,
    P: AutonomousField,
{
    let numeric = NumericTableau::<T>::new(tab)?;
    let u0t: Vec<T> = u0.iter().map(|&x| T::lift(x)).collect();
    let target = 1e-3 * prob.gram().norm_sq(&u0t).to_f64_lossy();
    let mut dt = 1.0;
    for _ in 0..60 {
        let q = quadratic_energy_change(&numeric, prob, &u0t, T::lift(dt));
        if matches!(q, Ok(q) if q.abs().to_f64_lossy() <= target) {
            break;
        }
        dt *= 0.5;
    }
    Ok(halving_sequence(dt, 8))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::problems::{
        cubic_rotation, inverse_square_rotation, linear_rotation, semiinner_bushy, Problem,
    };
    use crate::rational::{int, rat};
    use crate::scalar::Extended;

    #[test]
    fn ssprk33_fourth_order_terms() {
        let exp = expansion_coefficients(&catalog::ssprk33(), 4).unwrap();
        assert_eq!(exp.coefficient_of("t", "[[t]]"), Some(&rat(1, 6)));
        assert_eq!(exp.coefficient_of("t", "[t,t]"), Some(&rat(-1, 12)));
        assert_eq!(exp.coefficient_of("[t]", "[t]"), Some(&rat(1, 12)));
        assert_eq!(exp.coefficient_of("[[t]]", "t"), Some(&rat(1, 6)));
        assert_eq!(exp.coefficient_of("t", "t"), Some(&int(0)));
        assert_eq!(
            render_expansion(&exp),
            "Δt⁴ [ 1/6 ⟨f, f′f′f⟩ − 1/12 ⟨f, f″(f,f)⟩ + 1/12 ‖f′f‖² ]"
        );
    }

    #[test]
    fn rendering_of_c4s2_and_euler() {
        let exp = expansion_coefficients(&catalog::paper_c4s2(), 5).unwrap();
        assert_eq!(
            render_expansion(&exp),
            "−1/4 Δt⁴ ‖f′f‖² + Δt⁵ [ −1/2 ⟨f′f, f′f′f⟩ − 1/4 ⟨f′f, f″(f,f)⟩ ]"
        );
        let euler = expansion_coefficients(&catalog::euler(), 2).unwrap();
        assert_eq!(render_expansion(&euler), "1 Δt² ‖f‖²");
        let zero = EnergyExpansion {
            method: "z".into(),
            max_total_order: 2,
            terms: BTreeMap::new(),
        };
        assert_eq!(render_expansion(&zero), "0");
        assert!(expansion_coefficients(&catalog::euler(), 9).is_err());
        assert!(expansion_coefficients(&catalog::euler(), 1).is_err());
    }

    #[test]
    fn machine_rows() {
        let exp = expansion_coefficients(&catalog::euler(), 2).unwrap();
        assert_eq!(exp.machine_text(), "method=euler\nmax_total_order=2\nterm=2 t t 1 1\n");
    }

    #[test]
    fn first_order_sign() {
        assert_eq!(
            first_order_term_sign(&catalog::ssprk33()),
            FirstOrderSign::NonpositiveGuaranteed
        );
        assert_eq!(
            first_order_term_sign(&catalog::paper_counterex()),
            FirstOrderSign::Indefinite
        );
    }

    #[test]
    fn cubic_rotation_leading_coefficient() {
        let exp = expansion_coefficients(&catalog::ssprk33(), 4).unwrap();
        let p = cubic_rotation();
        let u0 = [0.6, 0.8];
        let by = contributions_by_order(&exp, &p, p.gram(), &u0).unwrap();
        assert!((by[&4] + 7.0 / 12.0).abs() < 1e-12);
        let u0 = [1.2, -0.5];
        let r2: f64 = 1.2 * 1.2 + 0.25;
        let by = contributions_by_order(&exp, &p, p.gram(), &u0).unwrap();
        assert!((by[&4] + 7.0 / 12.0 * r2.powi(5)).abs() < 1e-11 * r2.powi(5));
    }

    #[test]
    fn inverse_square_leading_dissipation() {
        let exp = expansion_coefficients(&catalog::paper_c4s2(), 4).unwrap();
        let p = inverse_square_rotation();
        let by = contributions_by_order(&exp, &p, p.gram(), &[1.0, 0.0]).unwrap();
        assert!((by[&4] + 0.25).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_gives_zero() {
        let exp = expansion_coefficients(&catalog::ssprk33(), 6).unwrap();
        let p = cubic_rotation();
        let v = evaluate_expansion(&exp, &p, p.gram(), &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bushy_differentials() {
        for k in 1..=3 {
            let p = semiinner_bushy(k).unwrap();
            for l in 1..=4 {
                let f = elementary_differential(&p, &[0.0, 1.0, 0.0], &RootedTree::bushy(l)).unwrap();
                let expected = if l == k { (1..=k).product::<usize>() as f64 } else { 0.0 };
                assert_eq!(f, vec![0.0, 0.0, expected], "k={k} l={l}");
            }
        }
    }

    #[test]
    fn expansion_matches_stepping_on_rotations() {
        let tab = catalog::ssprk33();
        let dts = halving_sequence(1.0 / 32.0, 8);
        let r = validate_expansion_order::<Extended, _>(&tab, &cubic_rotation(), &[1.0, 0.0], 4, &dts)
            .unwrap();
        assert!(r.slope >= 5.7, "{r:?}");
        let r = validate_expansion_order::<Extended, _>(
            &catalog::paper_c4s2(),
            &inverse_square_rotation(),
            &[1.0, 0.0],
            4,
            &dts,
        )
        .unwrap();
        assert!(r.slope >= 5.7, "{r:?}");
        let r = validate_expansion_order::<Extended, _>(&tab, &linear_rotation(), &[1.0, 0.0], 4, &dts)
            .unwrap();
        assert!(r.slope >= 5.7, "{r:?}");
        assert!(matches!(
            validate_expansion_order::<f64, _>(&tab, &linear_rotation(), &[1.0, 0.0], 4, &dts[..3]),
            Err(ExpansionError::TooFewSteps(3))
        ));
    }
}
