//! Algebraic stability, the bushy-tree sign condition, structural instability
//! tests and the linear stability polynomial.
//!
//! Everything here is exact. The sign condition is the quadratic form
//! `V(k) = Σᵢⱼ Mᵢⱼ cᵢᵏ cⱼᵏ`; a positive value for some `k` rules out energy
//! stability of a method of order ≥ 2.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::poly::{format_poly, Poly};
use crate::rational::{self, pow, Rational};
use crate::tableau::{self, ButcherTableau, TableauError};

/// Default number of exponents examined by [`sign_condition_verdict`].
pub const DEFAULT_SIGN_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

/// `Mᵢⱼ = bᵢbⱼ − bᵢaᵢⱼ − bⱼaⱼᵢ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityMatrix {
    entries: Vec<Vec<Rational>>,
}

impl StabilityMatrix {
    pub fn from_entries(entries: Vec<Vec<Rational>>) -> Self {
        StabilityMatrix { entries }
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<Rational>] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i][j]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..i).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    /// `vᵀ M w`.
    pub fn bilinear(&self, v: &[Rational], w: &[Rational]) -> Rational {
        let mut total = Rational::zero();
        for (i, vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (j, wj) in w.iter().enumerate() {
                if !wj.is_zero() {
                    total += &self.entries[i][j] * vi * wj;
                }
            }
        }
        total
    }
}

pub fn stability_matrix(tab: &ButcherTableau) -> StabilityMatrix {
    let s = tab.stages();
    let b = tab.b();
    let entries = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| &b[i] * &b[j] - &b[i] * tab.a_ij(i, j) - &b[j] * tab.a_ij(j, i))
                .collect()
        })
        .collect();
    StabilityMatrix { entries }
}

/// Coefficients `[1, c₁, …, c_n]` of `det(λI − B) = λⁿ + c₁λⁿ⁻¹ + … + c_n`
/// by the Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(b: &[Vec<Rational>]) -> Vec<Rational> {
    let n = b.len();
    let mut coeffs = vec![Rational::one()];
    // running matrix M_k, starting at M_0 = 0
    let mut m = vec![vec![Rational::zero(); n]; n];
    for k in 1..=n {
        // M_k = B M_{k-1} + c_{k-1} I
        let prev = m.clone();
        for i in 0..n {
            for j in 0..n {
                let mut acc = Rational::zero();
                for (l, row) in prev.iter().enumerate() {
                    if !b[i][l].is_zero() && !row[j].is_zero() {
                        acc += &b[i][l] * &row[j];
                    }
                }
                if i == j {
                    acc += &coeffs[k - 1];
                }
                m[i][j] = acc;
            }
        }
        // c_k = −tr(B M_k) / k
        let mut trace = Rational::zero();
        for i in 0..n {
            for l in 0..n {
                trace += &b[i][l] * &m[l][i];
            }
        }
        coeffs.push(-trace / Rational::from_integer(k.into()));
    }
    coeffs
}

/// Exact test: `−M` is PSD iff every elementary symmetric function of its
/// eigenvalues (the signed characteristic coefficients) is non-negative.
pub fn is_negative_semidefinite(m: &StabilityMatrix) -> bool {
    let neg: Vec<Vec<Rational>> = m
        .entries
        .iter()
        .map(|row| row.iter().map(|x| -x).collect())
        .collect();
    let coeffs = characteristic_polynomial(&neg);
    coeffs.iter().enumerate().skip(1).all(|(k, ck)| {
        let e_k = if k % 2 == 0 { ck.clone() } else { -ck.clone() };
        !e_k.is_negative()
    })
}

pub fn is_algebraically_stable(tab: &ButcherTableau) -> bool {
    tableau::weights_nonnegative(tab) && is_negative_semidefinite(&stability_matrix(tab))
}

fn node_powers(tab: &ButcherTableau, k: u32) -> Vec<Rational> {
    tab.c().iter().map(|ci| pow(ci, k)).collect()
}

/// `(bᵀcᵏ)² − 2 (cᵏ)ᵀ diag(b) A cᵏ`, equal to `Σᵢⱼ Mᵢⱼ cᵢᵏ cⱼᵏ`.
pub fn sign_condition_value(tab: &ButcherTableau, k: u32) -> Rational {
    let ck = node_powers(tab, k);
    let btck: Rational = tab.b().iter().zip(&ck).map(|(b, c)| b * c).sum();
    let mut cross = Rational::zero();
    for (i, ci) in ck.iter().enumerate() {
        if tab.b()[i].is_zero() || ci.is_zero() {
            continue;
        }
        let row: Rational = tab.a()[i].iter().zip(&ck).map(|(a, c)| a * c).sum();
        cross += &tab.b()[i] * ci * row;
    }
    &btck * &btck - Rational::from_integer(2.into()) * cross
}

/// The sign-condition form restricted to stages with `cᵢ ∈ {0, 1}`, at `k = 1`.
pub fn binary_node_sign_value(tab: &ButcherTableau) -> Rational {
    let m = stability_matrix(tab);
    let restricted: Vec<Rational> = tab
        .c()
        .iter()
        .map(|c| {
            if c.is_zero() || c.is_one() {
                c.clone()
            } else {
                Rational::zero()
            }
        })
        .collect();
    m.bilinear(&restricted, &restricted)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofRoute {
    /// All nodes lie in {0, 1}, so `V(k) = V(1)`.
    BinaryNodes,
    /// The dominant exponential term is negative and the remaining terms are
    /// bounded below it from `from_k` on; smaller `k` were checked directly.
    DominantTerm { from_k: usize },
}

impl fmt::Display for ProofRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProofRoute::BinaryNodes => write!(f, "all nodes in {{0, 1}}"),
            ProofRoute::DominantTerm { from_k } => {
                write!(f, "dominant term controls the sign from k = {from_k}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignStatus {
    ProvedNegativeAllK(ProofRoute),
    /// Smallest `k` with a positive value.
    ViolatedAt(usize),
    NegativeUpToKInconclusive,
}

/// Limit of `V(k) / (c_max²)ᵏ` as `k → ∞`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsymptoticLimit {
    Value(Rational),
    /// Nodes of both signs attain `max |c|`; the scaled value alternates.
    Oscillating,
    /// All nodes are zero.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignConditionVerdict {
    pub status: SignStatus,
    pub tested_k: usize,
    pub asymptotic_limit: AsymptoticLimit,
    /// `V(k)` for `k = 1..=tested_k` (shorter when a violation stops the scan).
    pub values: Vec<Rational>,
}

/// `V(k)` written as `Σ_p W_p pᵏ` over the distinct nonzero node products.
fn exponential_terms(tab: &ButcherTableau) -> BTreeMap<Rational, Rational> {
    let m = stability_matrix(tab);
    let c = tab.c();
    let mut terms: BTreeMap<Rational, Rational> = BTreeMap::new();
    for i in 0..c.len() {
        for j in 0..c.len() {
            let p = &c[i] * &c[j];
            if p.is_zero() || m.get(i, j).is_zero() {
                continue;
            }
            *terms.entry(p).or_insert_with(Rational::zero) += m.get(i, j);
        }
    }
    terms.retain(|_, w| !w.is_zero());
    terms
}

fn asymptotic_limit(tab: &ButcherTableau) -> AsymptoticLimit {
    let cmax = tab.c().iter().map(Signed::abs).max().unwrap_or_else(Rational::zero);
    if cmax.is_zero() {
        return AsymptoticLimit::Degenerate;
    }
    let rho = &cmax * &cmax;
    let terms = exponential_terms(tab);
    let plus = terms.get(&rho).cloned().unwrap_or_else(Rational::zero);
    match terms.get(&-rho) {
        Some(_) => AsymptoticLimit::Oscillating,
        None => AsymptoticLimit::Value(plus),
    }
}

/// Smallest `k ≤ depth` from which the dominant term provably controls the
/// sign, when that term is negative for both parities of `k`.
fn dominance_threshold(tab: &ButcherTableau, depth: usize) -> Option<usize> {
    let terms = exponential_terms(tab);
    let rho = terms.keys().map(Signed::abs).max()?;
    let w_plus = terms.get(&rho).cloned().unwrap_or_else(Rational::zero);
    let w_minus = terms.get(&-rho.clone()).cloned().unwrap_or_else(Rational::zero);
    let even = &w_plus + &w_minus;
    let odd = &w_plus - &w_minus;
    if !even.is_negative() || !odd.is_negative() {
        return None;
    }
    let margin = (-even).min(-odd);
    let tail: Vec<(&Rational, &Rational)> = terms.iter().filter(|(p, _)| p.abs() < rho).collect();
    if tail.is_empty() {
        return Some(1);
    }
    let weight: Rational = tail.iter().map(|(_, w)| w.abs()).sum();
    let rho2 = tail.iter().map(|(p, _)| p.abs()).max().unwrap();
    let ratio = rho2 / rho;
    let mut bound = weight;
    for k in 1..=depth {
        bound *= &ratio;
        if bound < margin {
            return Some(k);
        }
    }
    None
}

pub fn sign_condition_verdict(tab: &ButcherTableau, depth: usize) -> SignConditionVerdict {
    assert!(depth >= 1, "sign-condition depth must be positive");
    let asymptotic_limit = asymptotic_limit(tab);
    let mut values = Vec::with_capacity(depth);
    for k in 1..=depth {
        let v = sign_condition_value(tab, k as u32);
        let positive = v.is_positive();
        values.push(v);
        if positive {
            return SignConditionVerdict {
                status: SignStatus::ViolatedAt(k),
                tested_k: depth,
                asymptotic_limit,
                values,
            };
        }
    }
    let all_negative = values.iter().all(Signed::is_negative);
    let binary = tab.c().iter().all(|c| c.is_zero() || c.is_one());
    let status = if all_negative && binary {
        SignStatus::ProvedNegativeAllK(ProofRoute::BinaryNodes)
    } else if let Some(from_k) = dominance_threshold(tab, depth).filter(|_| all_negative) {
        SignStatus::ProvedNegativeAllK(ProofRoute::DominantTerm { from_k })
    } else {
        SignStatus::NegativeUpToKInconclusive
    };
    SignConditionVerdict {
        status,
        tested_k: depth,
        asymptotic_limit,
        values,
    }
}

/// Index of the single node attaining `max |cᵢ| > 0`, if it carries a nonzero weight.
pub fn unique_max_node(tab: &ButcherTableau) -> Option<usize> {
    let mags: Vec<Rational> = tab.c().iter().map(Signed::abs).collect();
    let max = mags.iter().max()?.clone();
    if max.is_zero() {
        return None;
    }
    let mut hits = mags.iter().enumerate().filter(|(_, m)| **m == max).map(|(i, _)| i);
    let first = hits.next()?;
    if hits.next().is_some() || tab.b()[first].is_zero() {
        return None;
    }
    Some(first)
}

pub fn unique_max_node_test(tab: &ButcherTableau) -> bool {
    unique_max_node(tab).is_some()
}

/// Which structural non-stability theorems apply. All three are statements
/// about explicit methods, so every `*_applies` flag is false for implicit ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralReport {
    pub explicit: bool,
    pub order: usize,
    pub unique_quadrature_nodes: BTreeSet<usize>,
    pub has_unique_quadrature_node: bool,
    /// A spike-coefficient linear problem defeats any step restriction based
    /// on `‖L‖` and its Lipschitz constant.
    pub lipschitz_impossible_applies: bool,
    pub integer_shift_free_nodes: BTreeSet<usize>,
    /// Energy grows monotonically without bound for a periodic spike family.
    pub unbounded_growth_applies: bool,
    pub unique_max_node: Option<usize>,
    /// Order ≥ 2 and a unique max node: not energy stable on autonomous problems.
    pub sign_theorem_applies: bool,
}

pub fn structural_report(tab: &ButcherTableau) -> StructuralReport {
    let nodes = tableau::node_report(tab);
    let unique_max = unique_max_node(tab);
    let order = tableau::order_of_accuracy(tab, tableau::DEFAULT_MAX_ORDER);
    let explicit = tab.is_explicit();
    let has_unique = !nodes.unique_quadrature_nodes.is_empty();
    let shift_free = !nodes.integer_shift_free_quadrature_nodes.is_empty();
    StructuralReport {
        explicit,
        order,
        has_unique_quadrature_node: has_unique,
        lipschitz_impossible_applies: explicit && has_unique,
        unique_quadrature_nodes: nodes.unique_quadrature_nodes,
        unbounded_growth_applies: explicit && shift_free,
        integer_shift_free_nodes: nodes.integer_shift_free_quadrature_nodes,
        unique_max_node: unique_max,
        sign_theorem_applies: explicit && unique_max.is_some() && order >= 2,
    }
}

/// `φ(z) = Σ αⱼ zʲ`, the amplification factor on `u′ = λu` with `z = λΔt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityPolynomial {
    poly: Poly,
}

impl StabilityPolynomial {
    pub fn from_coefficients(coeffs: Vec<Rational>) -> Self {
        StabilityPolynomial {
            poly: Poly::new(coeffs),
        }
    }

    pub fn coefficients(&self) -> &[Rational] {
        self.poly.coeffs()
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn eval(&self, z: &Rational) -> Rational {
        self.poly.eval(z)
    }
}

impl fmt::Display for StabilityPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_poly(&self.poly, "z"))
    }
}

/// For explicit `A`, `det(I − zA + z e bᵀ) = 1 + Σⱼ bᵀAʲ e zʲ⁺¹`.
pub fn stability_polynomial(tab: &ButcherTableau) -> Result<StabilityPolynomial, StabilityError> {
    tab.require_explicit()?;
    let s = tab.stages();
    let mut coeffs = vec![Rational::one()];
    let mut v = vec![Rational::one(); s];
    for _ in 0..s {
        coeffs.push(tab.b().iter().zip(&v).map(|(b, x)| b * x).sum());
        v = (0..s)
            .map(|i| tab.a()[i].iter().zip(&v).map(|(a, x)| a * x).sum())
            .collect();
    }
    Ok(StabilityPolynomial::from_coefficients(coeffs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImaginaryAxisGlobal {
    /// `|φ(iy)| > 1` for every real `y ≠ 0`.
    GrowthForAllY,
    /// `|φ(iy)| = 1` identically.
    Unimodular,
    /// `|φ(iy)| − 1` changes sign or vanishes at some `y ≠ 0`.
    Mixed,
    /// `|φ(iy)| < 1` for every real `y ≠ 0`.
    DampedForAllY,
}

/// `q(y) = |φ(iy)|² − 1` as a polynomial in `x = y²`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImaginaryAxisReport {
    pub q_in_y_squared: Poly,
    /// Power of `y` of the lowest nonzero term (0 when `q ≡ 0`).
    pub leading_y_power: usize,
    pub leading_coefficient: Rational,
    pub leading_sign: i8,
    pub global: ImaginaryAxisGlobal,
}

impl ImaginaryAxisReport {
    /// Growth on the imaginary axis for small steps.
    pub fn grows_near_origin(&self) -> bool {
        self.leading_sign > 0
    }
}

pub fn imaginary_axis_report(phi: &StabilityPolynomial) -> ImaginaryAxisReport {
    // φ(iy) = R(y) + i I(y); iʲ cycles 1, i, −1, −i
    let mut re = Vec::new();
    let mut im = Vec::new();
    for (j, a) in phi.coefficients().iter().enumerate() {
        let sign = if (j / 2) % 2 == 0 { a.clone() } else { -a.clone() };
        let target = if j % 2 == 0 { &mut re } else { &mut im };
        target.resize(j + 1, Rational::zero());
        target[j] = sign;
    }
    let re = Poly::new(re);
    let im = Poly::new(im);
    let modulus = &(&re * &re) + &(&im * &im);
    let q_y = &modulus - &Poly::constant(Rational::one());
    // q is even in y
    let q_x = Poly::new(q_y.coeffs().iter().step_by(2).cloned().collect());
    let Some(m) = q_x.valuation() else {
        return ImaginaryAxisReport {
            q_in_y_squared: q_x,
            leading_y_power: 0,
            leading_coefficient: Rational::zero(),
            leading_sign: 0,
            global: ImaginaryAxisGlobal::Unimodular,
        };
    };
    let leading = q_x.coeff(m);
    let sign = rational::sign(&leading);
    let roots = q_x.positive_root_count();
    let global = match (sign > 0, roots == 0) {
        (true, true) => ImaginaryAxisGlobal::GrowthForAllY,
        (false, true) => ImaginaryAxisGlobal::DampedForAllY,
        _ => ImaginaryAxisGlobal::Mixed,
    };
    ImaginaryAxisReport {
        q_in_y_squared: q_x,
        leading_y_power: 2 * m,
        leading_coefficient: leading,
        leading_sign: sign,
        global,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, Catalog};
    use crate::rational::{int, rat};

    #[test]
    fn matrix_entries() {
        assert_eq!(stability_matrix(&catalog::euler()).entries(), &[vec![int(1)]]);
        assert_eq!(
            stability_matrix(&catalog::implicit_midpoint()).entries(),
            &[vec![int(0)]]
        );
        let m = stability_matrix(&catalog::ssprk33());
        assert_eq!(*m.get(0, 1), rat(-5, 36));
        assert_eq!(*m.get(2, 2), rat(4, 9));
        for tab in Catalog::builtin().iter() {
            assert!(stability_matrix(tab).is_symmetric());
        }
    }

    #[test]
    fn characteristic_polynomial_of_small_matrices() {
        // [[2,1],[1,2]]: λ² − 4λ + 3
        let b = vec![vec![int(2), int(1)], vec![int(1), int(2)]];
        assert_eq!(characteristic_polynomial(&b), vec![int(1), int(-4), int(3)]);
    }

    #[test]
    fn semidefiniteness() {
        let m = |rows: Vec<Vec<i64>>| {
            StabilityMatrix::from_entries(
                rows.into_iter().map(|r| r.into_iter().map(int).collect()).collect(),
            )
        };
        assert!(is_negative_semidefinite(&m(vec![vec![0]])));
        assert!(is_negative_semidefinite(&m(vec![vec![-1, 1], vec![1, -1]])));
        assert!(!is_negative_semidefinite(&m(vec![vec![-1, 2], vec![2, -1]])));
        assert!(!is_negative_semidefinite(&m(vec![vec![1]])));
        assert!(is_algebraically_stable(&catalog::implicit_midpoint()));
        assert!(!is_algebraically_stable(&catalog::lobatto3a2()));
        assert!(!is_algebraically_stable(&catalog::ssprk33()));
    }

    #[test]
    fn sign_condition_values() {
        assert_eq!(sign_condition_value(&catalog::paper_c4s2(), 1), rat(-1, 4));
        assert_eq!(sign_condition_value(&catalog::paper_c5s3(), 1), rat(-5, 12));
        assert_eq!(sign_condition_value(&catalog::euler(), 3), int(0));
    }

    #[test]
    fn verdicts() {
        let v = sign_condition_verdict(&catalog::paper_c4s2(), 64);
        assert_eq!(v.status, SignStatus::ProvedNegativeAllK(ProofRoute::BinaryNodes));
        assert_eq!(v.asymptotic_limit, AsymptoticLimit::Value(rat(-1, 4)));
        let v = sign_condition_verdict(&catalog::paper_c5s3(), 64);
        assert!(matches!(
            v.status,
            SignStatus::ProvedNegativeAllK(ProofRoute::DominantTerm { .. })
        ));
        assert_eq!(v.asymptotic_limit, AsymptoticLimit::Value(rat(-11, 36)));
        let v = sign_condition_verdict(&catalog::ssprk104(), 64);
        assert!(matches!(v.status, SignStatus::ViolatedAt(_)));
        let v = sign_condition_verdict(&catalog::euler(), 8);
        assert_eq!(v.status, SignStatus::NegativeUpToKInconclusive);
        assert_eq!(v.asymptotic_limit, AsymptoticLimit::Degenerate);
    }

    #[test]
    fn unique_max_nodes() {
        assert_eq!(unique_max_node(&catalog::ssprk104()), Some(9));
        assert!(!unique_max_node_test(&catalog::paper_c4s2()));
        assert!(!unique_max_node_test(&catalog::euler()));
        assert!(unique_max_node_test(&catalog::ssprk33()));
    }

    #[test]
    fn structural_flags() {
        let r = structural_report(&catalog::ssprk33());
        assert!(r.has_unique_quadrature_node && r.unbounded_growth_applies);
        let r = structural_report(&catalog::paper_c4s2());
        assert!(!r.has_unique_quadrature_node && !r.unbounded_growth_applies);
        assert!(structural_report(&catalog::midpoint()).has_unique_quadrature_node);
        let r = structural_report(&catalog::implicit_midpoint());
        assert!(r.has_unique_quadrature_node && !r.lipschitz_impossible_applies);
        assert!(r.unique_max_node.is_some() && !r.sign_theorem_applies);
    }

    #[test]
    fn stability_polynomials() {
        let phi = stability_polynomial(&catalog::paper_counterex()).unwrap();
        assert_eq!(phi.coefficients(), &[int(1), int(1), int(0), rat(-3, 2)]);
        let phi = stability_polynomial(&catalog::ssprk33()).unwrap();
        assert_eq!(phi.coefficients(), &[int(1), int(1), rat(1, 2), rat(1, 6)]);
        assert_eq!(phi.to_string(), "1 + z + 1/2 z^2 + 1/6 z^3");
        assert_eq!(
            stability_polynomial(&catalog::euler()).unwrap().coefficients(),
            &[int(1), int(1)]
        );
        assert!(stability_polynomial(&catalog::implicit_midpoint()).is_err());
    }

    #[test]
    fn imaginary_axis() {
        let r = imaginary_axis_report(&stability_polynomial(&catalog::paper_counterex()).unwrap());
        assert_eq!(r.q_in_y_squared.coeffs(), &[int(0), int(1), int(3), rat(9, 4)]);
        assert_eq!(r.leading_y_power, 2);
        assert!(r.grows_near_origin());
        assert_eq!(r.global, ImaginaryAxisGlobal::GrowthForAllY);

        let r = imaginary_axis_report(&stability_polynomial(&catalog::euler()).unwrap());
        assert_eq!(r.q_in_y_squared.coeffs(), &[int(0), int(1)]);

        let r = imaginary_axis_report(&stability_polynomial(&catalog::ssprk33()).unwrap());
        assert_eq!(r.leading_y_power, 4);
        assert_eq!(r.leading_coefficient, rat(-1, 12));
        assert_eq!(r.global, ImaginaryAxisGlobal::Mixed);

        let unit = StabilityPolynomial::from_coefficients(vec![int(1)]);
        assert_eq!(imaginary_axis_report(&unit).global, ImaginaryAxisGlobal::Unimodular);
    }
}
