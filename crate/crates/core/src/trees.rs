//! Canonical rooted trees and the combinatorial weights of Runge–Kutta
//! B-series: symmetry σ(t), density γ(t) and stage derivative weights.
//!
//! A tree is canonical when its children are sorted so that its depth-first
//! level sequence is lexicographically maximal. Within one order, trees are
//! listed by descending level sequence, so the tall chain comes first and the
//! bushy tree last.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::rational::Rational;
use crate::tableau::ButcherTableau;

/// Hard cap on the tree order accepted by [`enumerate_trees`].
pub const MAX_TREE_ORDER: usize = 10;

/// Default enumeration depth.
pub const DEFAULT_TREE_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("tree order {requested} outside 1..={cap}")]
    OrderCap { requested: usize, cap: usize },
    #[error("malformed tree text `{0}`")]
    Parse(String),
    #[error("invalid level sequence {0:?}")]
    LevelSequence(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RootedTree {
    children: Vec<RootedTree>,
    order: usize,
    levels: Vec<u8>,
}

impl RootedTree {
    /// The single-node tree τ.
    pub fn leaf() -> Self {
        RootedTree {
            children: Vec::new(),
            order: 1,
            levels: vec![0],
        }
    }

    /// `[t₁, …, t_m]`, grafting the given trees onto a new root.
    pub fn graft(mut children: Vec<RootedTree>) -> Self {
        children.sort_by(|x, y| y.levels.cmp(&x.levels));
        let order = 1 + children.iter().map(|c| c.order).sum::<usize>();
        let mut levels = Vec::with_capacity(order);
        levels.push(0);
        for child in &children {
            levels.extend(child.levels.iter().map(|l| l + 1));
        }
        RootedTree {
            children,
            order,
            levels,
        }
    }

    /// Root with `k` leaf children.
    pub fn bushy(k: usize) -> Self {
        Self::graft(vec![Self::leaf(); k])
    }

    /// Path with `n` nodes.
    pub fn chain(n: usize) -> Self {
        assert!(n >= 1);
        (1..n).fold(Self::leaf(), |t, _| Self::graft(vec![t]))
    }

    pub fn from_level_sequence(levels: &[usize]) -> Result<Self, TreeError> {
        fn build(levels: &[usize], pos: &mut usize, depth: usize) -> RootedTree {
            *pos += 1;
            let mut children = Vec::new();
            while *pos < levels.len() && levels[*pos] == depth + 1 {
                children.push(build(levels, pos, depth + 1));
            }
            RootedTree::graft(children)
        }
        let valid = levels.first() == Some(&0)
            && levels[1..].iter().all(|&l| l >= 1)
            && levels.windows(2).all(|w| w[1] <= w[0] + 1);
        if !valid {
            return Err(TreeError::LevelSequence(levels.to_vec()));
        }
        let mut pos = 0;
        Ok(build(levels, &mut pos, 0))
    }

    pub fn children(&self) -> &[RootedTree] {
        &self.children
    }

    /// Number of nodes |t|.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Depth-first level sequence of the canonical form, root at level 0.
    pub fn level_sequence(&self) -> Vec<usize> {
        self.levels.iter().map(|&l| l as usize).collect()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of leaf children if this is a bushy tree.
    pub fn bushy_leaves(&self) -> Option<usize> {
        self.children
            .iter()
            .all(RootedTree::is_leaf)
            .then_some(self.children.len())
    }

    /// Symmetry σ(t): the order of the automorphism group.
    pub fn sigma(&self) -> u64 {
        let mut total = 1u64;
        let mut i = 0;
        while i < self.children.len() {
            let mut j = i;
            while j < self.children.len() && self.children[j] == self.children[i] {
                j += 1;
            }
            let multiplicity = (j - i) as u64;
            let child_sigma = self.children[i].sigma();
            total *= (1..=multiplicity).product::<u64>() * child_sigma.pow(multiplicity as u32);
            i = j;
        }
        total
    }

    /// Density γ(t) = |t| · Π γ(child).
    pub fn gamma(&self) -> u64 {
        self.order as u64 * self.children.iter().map(RootedTree::gamma).product::<u64>()
    }

    /// Elementary differential in prime notation: τ ↦ `f`, [τ] ↦ `f′f`,
    /// [τ,τ] ↦ `f″(f,f)`.
    pub fn differential_notation(&self) -> String {
        match self.children.len() {
            0 => "f".to_string(),
            1 => format!("f′{}", self.children[0].differential_notation()),
            m => {
                let args: Vec<String> =
                    self.children.iter().map(RootedTree::differential_notation).collect();
                format!("f{}({})", primes(m), args.join(","))
            }
        }
    }
}

fn primes(m: usize) -> String {
    match m {
        1 => "′".into(),
        2 => "″".into(),
        3 => "‴".into(),
        4 => "⁗".into(),
        _ => {
            const SUP: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
            let digits: String = m
                .to_string()
                .chars()
                .map(|d| SUP[d.to_digit(10).unwrap() as usize])
                .collect();
            format!("⁽{digits}⁾")
        }
    }
}

impl Ord for RootedTree {
    /// Ascending order, then descending level sequence.
    fn cmp(&self, other: &Self) -> Ordering {
        self.order
            .cmp(&other.order)
            .then_with(|| other.levels.cmp(&self.levels))
    }
}

impl PartialOrd for RootedTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Nested-bracket text: τ = `t`, [τ,τ] = `[t,t]`, [[τ]] = `[[t]]`.
impl fmt::Display for RootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return write!(f, "t");
        }
        write!(f, "[")?;
        for (k, child) in self.children.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{child}")?;
        }
        write!(f, "]")
    }
}

impl FromStr for RootedTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        fn parse(chars: &[char], pos: &mut usize) -> Option<RootedTree> {
            match chars.get(*pos)? {
                't' | 'τ' => {
                    *pos += 1;
                    Some(RootedTree::leaf())
                }
                '[' => {
                    *pos += 1;
                    let mut children = vec![parse(chars, pos)?];
                    loop {
                        match chars.get(*pos)? {
                            ',' => {
                                *pos += 1;
                                children.push(parse(chars, pos)?);
                            }
                            ']' => {
                                *pos += 1;
                                return Some(RootedTree::graft(children));
                            }
                            _ => return None,
                        }
                    }
                }
                _ => None,
            }
        }
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        match parse(&chars, &mut pos) {
            Some(t) if pos == chars.len() => Ok(t),
            _ => Err(TreeError::Parse(s.to_string())),
        }
    }
}

/// All canonical trees up to `max_order`, grouped by order.
#[derive(Debug, Clone)]
pub struct TreeTable {
    max_order: usize,
    by_order: Vec<Vec<RootedTree>>,
}

impl TreeTable {
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `by_order()[n - 1]` holds the trees with `n` nodes.
    pub fn by_order(&self) -> &[Vec<RootedTree>] {
        &self.by_order
    }

    pub fn of_order(&self, n: usize) -> &[RootedTree] {
        &self.by_order[n - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RootedTree> {
        self.by_order.iter().flatten()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.by_order.iter().map(Vec::len).collect()
    }
}

/// Enumerates canonical level sequences of each order in decreasing
/// lexicographic order (Beyer–Hedetniemi successor rule).
pub fn enumerate_trees(max_order: usize) -> Result<TreeTable, TreeError> {
    if !(1..=MAX_TREE_ORDER).contains(&max_order) {
        return Err(TreeError::OrderCap {
            requested: max_order,
            cap: MAX_TREE_ORDER,
        });
    }
    let by_order = (1..=max_order).map(trees_of_order).collect();
    Ok(TreeTable {
        max_order,
        by_order,
    })
}

fn trees_of_order(n: usize) -> Vec<RootedTree> {
    let mut levels: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        out.push(RootedTree::from_level_sequence(&levels).expect("generated sequences are valid"));
        // last position that is deeper than level 1
        let Some(p) = (1..n).rev().find(|&i| levels[i] > 1) else {
            break;
        };
        let q = (0..p)
            .rev()
            .find(|&i| levels[i] == levels[p] - 1)
            .expect("a parent level precedes every node");
        let shift = p - q;
        for i in p..n {
            levels[i] = levels[i - shift];
        }
    }
    out
}

/// Memoized stage derivative weights `(Φᵢ D)(t)` for one tableau.
#[derive(Debug, Clone)]
pub struct DerivativeWeights<'a> {
    tab: &'a ButcherTableau,
    cache: HashMap<RootedTree, Vec<Rational>>,
}

impl<'a> DerivativeWeights<'a> {
    pub fn new(tab: &'a ButcherTableau) -> Self {
        DerivativeWeights {
            tab,
            cache: HashMap::new(),
        }
    }

    /// `(Φᵢ D)(t)` for all stages `i`.
    pub fn stage_weights(&mut self, t: &RootedTree) -> Vec<Rational> {
        if let Some(w) = self.cache.get(t) {
            return w.clone();
        }
        let s = self.tab.stages();
        let mut weights = vec![Rational::one(); s];
        for child in t.children() {
            let inner = self.stage_weights(child);
            for (i, w) in weights.iter_mut().enumerate() {
                let row: Rational = self.tab.a()[i]
                    .iter()
                    .zip(&inner)
                    .filter(|(aij, _)| !aij.is_zero())
                    .map(|(aij, wj)| aij * wj)
                    .sum();
                *w *= row;
            }
        }
        self.cache.insert(t.clone(), weights.clone());
        weights
    }

    pub fn derivative_weight(&mut self, i: usize, t: &RootedTree) -> Rational {
        self.stage_weights(t)[i].clone()
    }

    /// Φ(t) = Σᵢ bᵢ (Φᵢ D)(t).
    pub fn elementary_weight(&mut self, t: &RootedTree) -> Rational {
        let w = self.stage_weights(t);
        self.tab.b().iter().zip(&w).map(|(bi, wi)| bi * wi).sum()
    }
}

pub fn derivative_weight(tab: &ButcherTableau, i: usize, t: &RootedTree) -> Rational {
    DerivativeWeights::new(tab).derivative_weight(i, t)
}

pub fn elementary_weight(tab: &ButcherTableau, t: &RootedTree) -> Rational {
    DerivativeWeights::new(tab).elementary_weight(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::rational::{int, pow, rat};
    use std::collections::BTreeSet;

    fn tree(s: &str) -> RootedTree {
        s.parse().unwrap()
    }

    /// Independent enumeration: every parent array on n labelled nodes
    /// (parent index smaller than child), canonicalized and deduplicated.
    fn brute_force_classes(n: usize) -> BTreeSet<Vec<usize>> {
        fn canon(parent: &[usize], node: usize) -> Vec<usize> {
            let mut subs: Vec<Vec<usize>> = (0..parent.len())
                .filter(|&c| c != 0 && parent[c] == node)
                .map(|c| canon(parent, c))
                .collect();
            subs.sort_by(|a, b| b.cmp(a));
            let mut seq = vec![0];
            for s in subs {
                seq.extend(s.into_iter().map(|l| l + 1));
            }
            seq
        }
        let mut out = BTreeSet::new();
        let mut parent = vec![0usize; n];
        fn rec(k: usize, parent: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
            if k == parent.len() {
                out.insert(canon(parent, 0));
                return;
            }
            for p in 0..k {
                parent[k] = p;
                rec(k + 1, parent, out);
            }
        }
        rec(1, &mut parent, &mut out);
        out
    }

    #[test]
    fn small_enumerations() {
        let t1 = enumerate_trees(1).unwrap();
        assert_eq!(t1.iter().collect::<Vec<_>>(), vec![&RootedTree::leaf()]);
        let t3 = enumerate_trees(3).unwrap();
        assert_eq!(t3.counts(), vec![1, 1, 2]);
        assert_eq!(t3.of_order(3), &[tree("[[t]]"), tree("[t,t]")]);
    }

    #[test]
    fn counts_match_brute_force() {
        let table = enumerate_trees(8).unwrap();
        assert_eq!(table.counts(), vec![1, 1, 2, 4, 9, 20, 48, 115]);
        for n in 1..=7 {
            let generated: BTreeSet<Vec<usize>> =
                table.of_order(n).iter().map(RootedTree::level_sequence).collect();
            assert_eq!(generated, brute_force_classes(n), "order {n}");
        }
    }

    #[test]
    fn enumeration_is_sorted_and_canonical() {
        let table = enumerate_trees(8).unwrap();
        let all: Vec<&RootedTree> = table.iter().collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        for t in all {
            let rebuilt = RootedTree::from_level_sequence(&t.level_sequence()).unwrap();
            assert_eq!(&rebuilt, t);
            assert_eq!(tree(&t.to_string()), *t);
        }
        assert!(matches!(enumerate_trees(0), Err(TreeError::OrderCap { .. })));
        assert!(matches!(enumerate_trees(11), Err(TreeError::OrderCap { .. })));
    }

    #[test]
    fn sigma_and_gamma() {
        assert_eq!(RootedTree::leaf().sigma(), 1);
        assert_eq!(tree("[t,t,t]").sigma(), 6);
        assert_eq!(tree("[[t]]").sigma(), 1);
        assert_eq!(tree("[[t,t],[t,t]]").sigma(), 8);
        assert_eq!(RootedTree::leaf().gamma(), 1);
        assert_eq!(tree("[t]").gamma(), 2);
        assert_eq!(tree("[[t]]").gamma(), 6);
        assert_eq!(tree("[t,t]").gamma(), 3);
    }

    #[test]
    fn monotone_labellings_are_integral() {
        // α(t) = |t|! / (σ(t) γ(t)) counts monotone labellings; Σ over order n is (n−1)!
        let table = enumerate_trees(8).unwrap();
        for n in 1..=8 {
            let fact: u64 = (1..=n as u64).product();
            let mut total = 0;
            for t in table.of_order(n) {
                let denom = t.sigma() * t.gamma();
                assert_eq!(fact % denom, 0, "{t}");
                total += fact / denom;
            }
            assert_eq!(total, (1..n as u64).product::<u64>());
        }
    }

    #[test]
    fn rendering() {
        assert_eq!(RootedTree::leaf().to_string(), "t");
        assert_eq!(tree("[t,[t]]").to_string(), "[[t],t]");
        assert_eq!(tree("[t,[t]]").differential_notation(), "f″(f′f,f)");
        assert_eq!(tree("[[t]]").differential_notation(), "f′f′f");
        assert_eq!(RootedTree::bushy(3).differential_notation(), "f‴(f,f,f)");
        assert_eq!(RootedTree::bushy(5).differential_notation(), "f⁽⁵⁾(f,f,f,f,f)");
        assert!("[t,".parse::<RootedTree>().is_err());
        assert!("t]".parse::<RootedTree>().is_err());
    }

    #[test]
    fn derivative_weights() {
        let ssp = catalog::ssprk33();
        assert_eq!(derivative_weight(&ssp, 2, &tree("[[t]]")), rat(1, 4));
        for i in 0..3 {
            assert_eq!(derivative_weight(&ssp, i, &RootedTree::leaf()), int(1));
        }
        // bushy weights are powers of the nodes when row sums hold
        for tab in catalog::Catalog::builtin().iter() {
            let mut w = DerivativeWeights::new(tab);
            for k in 0..=6 {
                let weights = w.stage_weights(&RootedTree::bushy(k));
                for (i, wi) in weights.iter().enumerate() {
                    assert_eq!(*wi, pow(&tab.c()[i], k as u32), "{} k={k}", tab.name());
                }
            }
        }
    }

    #[test]
    fn elementary_weights_of_ssprk33() {
        let ssp = catalog::ssprk33();
        assert_eq!(elementary_weight(&ssp, &RootedTree::leaf()), int(1));
        assert_eq!(elementary_weight(&ssp, &tree("[t]")), rat(1, 2));
        assert_eq!(elementary_weight(&ssp, &tree("[t,t]")), rat(1, 3));
        let table = enumerate_trees(4).unwrap();
        let mut w = DerivativeWeights::new(&ssp);
        for t in table.iter().filter(|t| t.order() <= 3) {
            assert_eq!(w.elementary_weight(t), Rational::new(1.into(), t.gamma().into()));
        }
        assert!(table
            .of_order(4)
            .iter()
            .any(|t| w.elementary_weight(t) != Rational::new(1.into(), t.gamma().into())));
    }
}
