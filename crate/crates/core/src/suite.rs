//! Acceptance suite: thirteen named criteria evaluated against a [`Catalog`].
//!
//! Every criterion reads its methods from the catalog it is given, so a
//! corrupted coefficient surfaces as a named failure. Tolerances are the
//! `pub const`s below.

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::expansion::{self, TreePair};
use crate::problems::{self, AutonomousField, Problem};
use crate::rational::{self, int, rat, Rational};
use crate::scalar::{Extended, Scalar};
use crate::search::{self, SearchError, SearchSpec};
use crate::simulate::{self, IntegrateOptions, Verdict};
use crate::stability::{self, SignStatus};
use crate::tableau::{self, ButcherTableau};
use crate::trees::RootedTree;

pub const EXPANSION_RUNTIME: Duration = Duration::from_secs(10);
pub const SIGN_DEPTH: usize = 64;
pub const C5S3_FORMULA_DEPTH: u32 = 20;
pub const SPIKE_RELATIVE_TOLERANCE: f64 = 1e-10;
pub const SPIKE_RUNTIME: Duration = Duration::from_secs(1);
pub const SPIKE_STEPS: usize = 1000;
pub const ADVECTION_GRID: usize = 50;
pub const ADVECTION_DT: f64 = 1e-5;
pub const ADVECTION_T: f64 = 100.0;
pub const ADVECTION_FAST_T: f64 = 5.0;
pub const ADVECTION_MIN_RATIO: f64 = 10.0;
pub const ROTATION_DT: f64 = 0.1;
pub const ROTATION_STEPS: usize = 1000;
pub const MIDPOINT_EXTENDED_STEPS: usize = 10_000;
pub const CONSTANT_TOLERANCE: f64 = 1e-10;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-10;
pub const DISSIPATION_DT: f64 = 1e-2;
pub const DISSIPATION_TOLERANCE: f64 = 0.05;
pub const SLOPE_MARGIN: f64 = 1.7;
pub const SLOPE_RUNTIME: Duration = Duration::from_secs(30);
pub const LEADING_TERM_TOLERANCE: f64 = 1e-10;
pub const SEMIINNER_SAMPLES: usize = 1000;
pub const SEARCH_SEED: u64 = 2024;
pub const SEARCH_BUDGET: usize = 100_000;

/// Pass/fail bookkeeping for one criterion.
#[derive(Debug, Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn fail(&mut self, what: impl Into<String>) {
        self.failures.push(what.into());
    }
}

type CheckFn = fn(&Catalog, &mut Checks);

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub summary: &'static str,
    check: CheckFn,
}

impl Criterion {
    /// Case-insensitive substring match on the name or summary.
    pub fn matches(&self, filter: &str) -> bool {
        let f = filter.to_lowercase();
        self.name.contains(&f) || self.summary.to_lowercase().contains(&f) || self.id.to_string() == f
    }

    pub fn run(&self, catalog: &Catalog) -> CriterionResult {
        let start = Instant::now();
        let mut checks = Checks::default();
        (self.check)(catalog, &mut checks);
        CriterionResult {
            id: self.id,
            name: self.name,
            passed: checks.failures.is_empty(),
            failures: checks.failures,
            notes: checks.notes,
            elapsed: start.elapsed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>2} {:<22} {}  ({:.2}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64()
        )?;
        for fail in &self.failures {
            write!(f, "\n     ✗ {fail}")?;
        }
        for note in &self.notes {
            write!(f, "\n     · {note}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CriterionResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        let passed = self.results.iter().filter(|r| r.passed).count();
        write!(f, "{passed}/{} criteria passed", self.results.len())
    }
}

pub fn criteria() -> &'static [Criterion] {
    &CRITERIA
}

pub fn find(name: &str) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.name == name)
}

/// Runs every criterion matching `filter` (all when `None`), in id order.
pub fn run_suite(catalog: &Catalog, filter: Option<&str>) -> SuiteReport {
    let results = CRITERIA
        .iter()
        .filter(|c| filter.is_none_or(|f| c.matches(f)))
        .map(|c| c.run(catalog))
        .collect();
    SuiteReport { results }
}

static CRITERIA: [Criterion; 13] = [
    Criterion {
        id: 1,
        name: "expansion-exactness",
        summary: "exact energy expansion coefficients for ssprk33 and paper_testmethod",
        check: expansion_exactness,
    },
    Criterion {
        id: 2,
        name: "vanishing-pairs",
        summary: "paper_c4s2 expansion pairs containing the single-node tree vanish",
        check: vanishing_pairs,
    },
    Criterion {
        id: 3,
        name: "sign-condition",
        summary: "sign-condition values and verdicts for paper_c4s2, paper_c5s3, ssprk104",
        check: sign_condition,
    },
    Criterion {
        id: 4,
        name: "cross-identity",
        summary: "sign-condition value equals scaled bushy diagonal expansion coefficient",
        check: cross_identity,
    },
    Criterion {
        id: 5,
        name: "stability-polynomial",
        summary: "paper_counterex stability polynomial and imaginary-axis growth",
        check: stability_polynomial,
    },
    Criterion {
        id: 6,
        name: "counterexample",
        summary: "spike-coefficient energy growth for ssprk33",
        check: counterexample,
    },
    Criterion {
        id: 7,
        name: "advection",
        summary: "time-dependent advection energy verdicts (ssprk33 vs paper_c4s2)",
        check: advection,
    },
    Criterion {
        id: 8,
        name: "rotation-energy",
        summary: "inverse-square rotation energy behaviour for four methods",
        check: rotation_energy,
    },
    Criterion {
        id: 9,
        name: "dissipation-rates",
        summary: "leading per-step dissipation of paper_c4s2 and paper_c5s3",
        check: dissipation_rates,
    },
    Criterion {
        id: 10,
        name: "expansion-oracle",
        summary: "expansion versus stepping residual slopes and leading coefficient",
        check: expansion_oracle,
    },
    Criterion {
        id: 11,
        name: "bushy-differentials",
        summary: "bushy elementary differentials of the semi-inner-product problem",
        check: bushy_differentials,
    },
    Criterion {
        id: 12,
        name: "structural-theorems",
        summary: "node and structural classification of every catalog method",
        check: structural_theorems,
    },
    Criterion {
        id: 13,
        name: "search-round-trip",
        summary: "candidate construction, verification and refusal",
        check: search_round_trip,
    },
];

fn method<'a>(cat: &'a Catalog, name: &str, checks: &mut Checks) -> Option<&'a ButcherTableau> {
    let tab = cat.get(name);
    if tab.is_none() {
        checks.fail(format!("catalog has no method `{name}`"));
    }
    tab
}

fn tree(text: &str) -> RootedTree {
    text.parse().expect("valid tree literal")
}

fn expect_coefficient(
    checks: &mut Checks,
    exp: &expansion::EnergyExpansion,
    first: &str,
    second: &str,
    expected: Rational,
) {
    let got = exp.coefficient(&tree(first), &tree(second)).cloned();
    checks.expect(
        got.as_ref() == Some(&expected),
        format!(
            "{}: {{{first},{second}}} = {} (expected {expected})",
            exp.method(),
            got.map_or("missing".to_string(), |g| g.to_string())
        ),
    );
}

fn expansion_exactness(cat: &Catalog, checks: &mut Checks) {
    if let Some(tab) = method(cat, "ssprk33", checks) {
        match expansion::expansion_coefficients(tab, 4) {
            Ok(exp) => {
                expect_coefficient(checks, &exp, "t", "[[t]]", rat(1, 6));
                expect_coefficient(checks, &exp, "t", "[t,t]", rat(-1, 12));
                expect_coefficient(checks, &exp, "[t]", "[t]", rat(1, 12));
            }
            Err(e) => checks.fail(format!("ssprk33 expansion: {e}")),
        }
    }
    if let Some(tab) = method(cat, "paper_testmethod", checks) {
        let start = Instant::now();
        let exp = expansion::expansion_coefficients(tab, 8);
        let elapsed = start.elapsed();
        checks.expect(
            elapsed < EXPANSION_RUNTIME,
            format!("order-8 expansion took {:.2}s", elapsed.as_secs_f64()),
        );
        checks.note(format!("order-8 expansion in {:.2}s", elapsed.as_secs_f64()));
        match exp {
            Ok(exp) => {
                expect_coefficient(checks, &exp, "[t]", "[t]", rat(-1, 11));
                expect_coefficient(checks, &exp, "[t]", "[[t]]", rat(-15, 176));
                expect_coefficient(checks, &exp, "[t]", "[t,t]", rat(-49, 704));
                expect_coefficient(checks, &exp, "[[t]]", "[[t]]", rat(225, 7744));
                expect_coefficient(checks, &exp, "[[t]]", "[t,t]", rat(255, 30976));
                expect_coefficient(checks, &exp, "[t,t]", "[t,t]", rat(-149, 30976));
                expect_coefficient(checks, &exp, "[t,t,t]", "[t,t,t]", rat(1019, 1622016));
            }
            Err(e) => checks.fail(format!("paper_testmethod expansion: {e}")),
        }
    }
}

fn vanishing_pairs(cat: &Catalog, checks: &mut Checks) {
    let Some(tab) = method(cat, "paper_c4s2", checks) else {
        return;
    };
    let exp = match expansion::expansion_coefficients(tab, 6) {
        Ok(e) => e,
        Err(e) => return checks.fail(format!("expansion: {e}")),
    };
    let leaf = RootedTree::leaf();
    let nonzero: Vec<&TreePair> = exp
        .terms()
        .iter()
        .filter(|(p, c)| p.contains(&leaf) && !c.is_zero())
        .map(|(p, _)| p)
        .collect();
    let with_leaf = exp.terms().keys().filter(|p| p.contains(&leaf)).count();
    checks.expect(with_leaf > 0, "no pairs containing the single-node tree were generated");
    checks.expect(
        nonzero.is_empty(),
        format!(
            "nonzero pairs with the single-node tree: {}",
            nonzero.iter().map(|p| p.notation()).collect::<Vec<_>>().join(", ")
        ),
    );
    checks.note(format!("{with_leaf} pairs containing the single-node tree checked"));
    expect_coefficient(checks, &exp, "[t]", "[t]", rat(-1, 4));
    expect_coefficient(checks, &exp, "[t,t]", "[t,t]", rat(-1, 16));
}

fn sign_condition(cat: &Catalog, checks: &mut Checks) {
    if let Some(tab) = method(cat, "paper_c4s2", checks) {
        let bad: Vec<u32> = (1..=SIGN_DEPTH as u32)
            .filter(|&k| stability::sign_condition_value(tab, k) != rat(-1, 4))
            .collect();
        checks.expect(bad.is_empty(), format!("paper_c4s2 value ≠ −1/4 at k = {bad:?}"));
    }
    if let Some(tab) = method(cat, "paper_c5s3", checks) {
        for k in 1..=C5S3_FORMULA_DEPTH {
            let half_k = rational::pow(&rat(1, 2), k);
            let expected = rat(-11, 36) - rat(4, 9) * &half_k * (int(1) - &half_k);
            let got = stability::sign_condition_value(tab, k);
            if got != expected {
                checks.fail(format!("paper_c5s3 k = {k}: {got} (expected {expected})"));
                break;
            }
        }
    }
    if let Some(tab) = method(cat, "ssprk104", checks) {
        let v = stability::sign_condition_verdict(tab, SIGN_DEPTH);
        match v.status {
            SignStatus::ViolatedAt(k) => checks.note(format!("ssprk104 violated at k = {k}")),
            other => checks.fail(format!("ssprk104 verdict {other:?}, expected a violation")),
        }
    }
}

pub const CROSS_IDENTITY_METHODS: [&str; 5] =
    ["ssprk33", "paper_c4s2", "paper_c5s3", "paper_testmethod", "midpoint"];

fn cross_identity(cat: &Catalog, checks: &mut Checks) {
    for name in CROSS_IDENTITY_METHODS {
        let Some(tab) = method(cat, name, checks) else {
            continue;
        };
        let exp = match expansion::expansion_coefficients(tab, 8) {
            Ok(e) => e,
            Err(e) => {
                checks.fail(format!("{name}: {e}"));
                continue;
            }
        };
        for k in 1..=3usize {
            let b = RootedTree::bushy(k);
            let coeff = exp.coefficient(&b, &b).cloned().unwrap_or_else(Rational::zero);
            let factorial: i64 = (1..=k as i64).product();
            let scaled = coeff * int(factorial * factorial);
            let v = stability::sign_condition_value(tab, k as u32);
            checks.expect(scaled == v, format!("{name} k = {k}: (k!)²·coefficient = {scaled}, value = {v}"));
        }
    }
}

fn stability_polynomial(cat: &Catalog, checks: &mut Checks) {
    let Some(tab) = method(cat, "paper_counterex", checks) else {
        return;
    };
    let phi = match stability::stability_polynomial(tab) {
        Ok(p) => p,
        Err(e) => return checks.fail(format!("stability polynomial: {e}")),
    };
    let expected = vec![int(1), int(1), int(0), rat(-3, 2)];
    checks.expect(
        phi.coefficients() == expected.as_slice(),
        format!("φ(z) = {phi}, expected 1 + z − 3/2 z^3"),
    );
    let report = stability::imaginary_axis_report(&phi);
    checks.expect(
        report.grows_near_origin(),
        format!("|φ(iy)|² − 1 leading term {} y^{} is not positive", report.leading_coefficient, report.leading_y_power),
    );
    checks.note(format!("φ(z) = {phi}; |φ(iy)|² − 1 ~ {} y^{}", report.leading_coefficient, report.leading_y_power));
}

fn counterexample(cat: &Catalog, checks: &mut Checks) {
    let Some(tab) = method(cat, "ssprk33", checks) else {
        return;
    };
    let (stage, dt, eps) = (2, 1e-2, 1e-3);
    let start = Instant::now();
    let prob = match problems::spike_rotation(tab, stage, dt, eps, false) {
        Ok(p) => p,
        Err(e) => return checks.fail(format!("spike construction: {e}")),
    };
    let u0 = prob.initial_state();
    let numeric = match simulate::NumericTableau::<Extended>::new(tab) {
        Ok(n) => n,
        Err(e) => return checks.fail(e.to_string()),
    };
    let measured = match search::step_energy_change(&numeric, &prob, &u0, dt) {
        Ok(v) => v.to_f64_lossy(),
        Err(e) => return checks.fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    let bk = rational::to_f64(&tab.b()[stage]);
    let norm_sq: f64 = u0.iter().map(|x| x * x).sum();
    let predicted = (bk * dt * eps).powi(2) * norm_sq;
    let rel = ((measured - predicted) / predicted).abs();
    checks.expect(
        rel <= SPIKE_RELATIVE_TOLERANCE,
        format!("measured {measured:e} vs predicted {predicted:e} (relative {rel:e})"),
    );
    checks.expect(elapsed < SPIKE_RUNTIME, format!("one-step check took {:?}", elapsed));
    checks.note(format!("predicted {predicted:.4e}, measured {measured:.4e}"));

    let multi = match problems::spike_rotation(tab, stage, dt, eps, true) {
        Ok(p) => p,
        Err(e) => return checks.fail(format!("multi-step spike construction: {e}")),
    };
    let t_end = SPIKE_STEPS as f64 * dt;
    match simulate::integrate::<f64, _>(tab, &multi, &u0, dt, t_end, IntegrateOptions::with_stride(SPIKE_STEPS)) {
        Ok(trace) => {
            checks.expect(trace.steps == SPIKE_STEPS, format!("{} steps taken", trace.steps));
            checks.expect(
                trace.strictly_increasing(),
                format!("{} of {} steps increased the energy", trace.strict_increases, trace.steps),
            );
        }
        Err(e) => checks.fail(format!("multi-step run: {e}")),
    }
}

fn advection(cat: &Catalog, checks: &mut Checks) {
    let prob = match problems::advection_sin_t2(ADVECTION_GRID) {
        Ok(p) => p,
        Err(e) => return checks.fail(e.to_string()),
    };
    let u0 = prob.initial_state();
    let opts = IntegrateOptions::with_stride(100_000);
    if let Some(tab) = method(cat, "ssprk33", checks) {
        match simulate::integrate::<f64, _>(tab, &prob, &u0, ADVECTION_DT, ADVECTION_FAST_T, opts) {
            Ok(tr) => {
                checks.expect(
                    tr.strictly_increasing(),
                    format!(
                        "ssprk33 T = {ADVECTION_FAST_T}: energy rose in {} and fell in {} of {} steps",
                        tr.strict_increases, tr.strict_decreases, tr.steps
                    ),
                );
            }
            Err(e) => checks.fail(format!("ssprk33 T = {ADVECTION_FAST_T}: {e}")),
        }
        match simulate::integrate::<f64, _>(tab, &prob, &u0, ADVECTION_DT, ADVECTION_T, opts) {
            Ok(tr) => {
                checks.expect(
                    matches!(tr.verdict, Verdict::IncreasingDetected { .. }),
                    format!("ssprk33 T = {ADVECTION_T}: verdict {}", tr.verdict),
                );
                checks.expect(
                    tr.energy_ratio() > ADVECTION_MIN_RATIO,
                    format!("ssprk33 T = {ADVECTION_T}: final/initial energy {:.12}", tr.energy_ratio()),
                );
                checks.note(format!(
                    "ssprk33: E(T)/E(0) − 1 = {:.3e}",
                    tr.energy_ratio() - 1.0
                ));
            }
            Err(e) => checks.fail(format!("ssprk33 T = {ADVECTION_T}: {e}")),
        }
    }
    if let Some(tab) = method(cat, "paper_c4s2", checks) {
        match simulate::integrate::<f64, _>(tab, &prob, &u0, ADVECTION_DT, ADVECTION_T, opts) {
            Ok(tr) => {
                checks.expect(
                    tr.verdict == Verdict::Nonincreasing,
                    format!("paper_c4s2: verdict {}", tr.verdict),
                );
                checks.note(format!(
                    "paper_c4s2: E(T)/E(0) − 1 = {:.3e}",
                    tr.energy_ratio() - 1.0
                ));
            }
            Err(e) => checks.fail(format!("paper_c4s2: {e}")),
        }
    }
}

fn rotation_energy(cat: &Catalog, checks: &mut Checks) {
    let prob = problems::inverse_square_rotation();
    let u0 = [1.0, 0.0];
    if let Some(tab) = method(cat, "midpoint", checks) {
        let t_end = MIDPOINT_EXTENDED_STEPS as f64 * ROTATION_DT;
        let opts = IntegrateOptions::with_stride(MIDPOINT_EXTENDED_STEPS);
        match simulate::integrate::<Extended, _>(tab, &prob, &u0, ROTATION_DT, t_end, opts) {
            Ok(tr) => checks.expect(
                matches!(tr.verdict, Verdict::ConstantWithin { tolerance } if tolerance <= CONSTANT_TOLERANCE),
                format!("midpoint extended: verdict {} (max deviation {:e})", tr.verdict, tr.max_relative_deviation),
            ),
            Err(e) => checks.fail(format!("midpoint extended: {e}")),
        }
        let t_end = ROTATION_STEPS as f64 * ROTATION_DT;
        let opts = IntegrateOptions::with_stride(ROTATION_STEPS);
        match simulate::integrate::<f64, _>(tab, &prob, &u0, ROTATION_DT, t_end, opts) {
            Ok(tr) => match simulate::midpoint_closed_form(1.0, 0.0, ROTATION_DT, tr.steps) {
                Ok(exact) => {
                    let err = tr
                        .final_state
                        .iter()
                        .zip(exact)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    checks.expect(
                        err <= CLOSED_FORM_TOLERANCE,
                        format!("midpoint vs closed form after {} steps: {err:e}", tr.steps),
                    );
                }
                Err(e) => checks.fail(e.to_string()),
            },
            Err(e) => checks.fail(format!("midpoint: {e}")),
        }
    }
    let t_end = ROTATION_STEPS as f64 * ROTATION_DT;
    for (name, growing) in [("ssprk33", true), ("paper_c4s2", false), ("paper_c5s3", false)] {
        let Some(tab) = method(cat, name, checks) else {
            continue;
        };
        match simulate::integrate::<f64, _>(tab, &prob, &u0, ROTATION_DT, t_end, IntegrateOptions::default()) {
            Ok(tr) => {
                let ok = if growing {
                    tr.strictly_increasing()
                } else {
                    tr.strictly_decreasing()
                };
                checks.expect(
                    ok,
                    format!(
                        "{name}: energy rose in {} and fell in {} of {} steps",
                        tr.strict_increases, tr.strict_decreases, tr.steps
                    ),
                );
            }
            Err(e) => checks.fail(format!("{name}: {e}")),
        }
    }
}

fn one_step_change(tab: &ButcherTableau, prob: &impl Problem, u0: &[f64], dt: f64) -> Result<f64, String> {
    let numeric = simulate::NumericTableau::<Extended>::new(tab).map_err(|e| e.to_string())?;
    search::step_energy_change(&numeric, prob, u0, dt)
        .map(|v| v.to_f64_lossy())
        .map_err(|e| e.to_string())
}

fn dissipation_rates(cat: &Catalog, checks: &mut Checks) {
    let prob = problems::inverse_square_rotation();
    let u0 = [1.0, 0.0];
    let dt4 = DISSIPATION_DT.powi(4);
    let mut measured = Vec::new();
    for (name, rate) in [("paper_c4s2", -0.25), ("paper_c5s3", -5.0 / 12.0)] {
        let Some(tab) = method(cat, name, checks) else {
            return;
        };
        match one_step_change(tab, &prob, &u0, DISSIPATION_DT) {
            Ok(de) => {
                let ratio = de / (rate * dt4);
                checks.expect(
                    (ratio - 1.0).abs() <= DISSIPATION_TOLERANCE,
                    format!("{name}: ΔE = {de:e}, {ratio:.4} × predicted"),
                );
                checks.note(format!("{name}: ΔE/Δt⁴ = {:.5}", de / dt4));
                measured.push(de);
            }
            Err(e) => return checks.fail(format!("{name}: {e}")),
        }
    }
    let ratio = measured[1] / measured[0];
    checks.expect(
        (ratio / (5.0 / 3.0) - 1.0).abs() <= DISSIPATION_TOLERANCE,
        format!("dissipation ratio {ratio:.4}, expected 5/3"),
    );
}

fn expansion_oracle(cat: &Catalog, checks: &mut Checks) {
    let dts = expansion::halving_sequence(1.0 / 32.0, 8);
    let n_tot = 4;
    let start = Instant::now();
    if let Some(tab) = method(cat, "ssprk33", checks) {
        match expansion::validate_expansion_order::<Extended, _>(tab, &problems::cubic_rotation(), &[1.0, 0.0], n_tot, &dts) {
            Ok(r) => {
                checks.expect(
                    r.slope >= n_tot as f64 + SLOPE_MARGIN,
                    format!("ssprk33/cubic_rotation slope {:.3}", r.slope),
                );
                checks.note(format!("ssprk33/cubic_rotation slope {:.3}", r.slope));
            }
            Err(e) => checks.fail(format!("ssprk33/cubic_rotation: {e}")),
        }
    }
    if let Some(tab) = method(cat, "paper_c4s2", checks) {
        match expansion::validate_expansion_order::<Extended, _>(
            tab,
            &problems::inverse_square_rotation(),
            &[1.0, 0.0],
            n_tot,
            &dts,
        ) {
            Ok(r) => {
                checks.expect(
                    r.slope >= n_tot as f64 + SLOPE_MARGIN,
                    format!("paper_c4s2/inverse_square_rotation slope {:.3}", r.slope),
                );
                checks.note(format!("paper_c4s2/inverse_square_rotation slope {:.3}", r.slope));
            }
            Err(e) => checks.fail(format!("paper_c4s2/inverse_square_rotation: {e}")),
        }
    }
    let elapsed = start.elapsed();
    checks.expect(elapsed < SLOPE_RUNTIME, format!("slope fits took {:.2}s", elapsed.as_secs_f64()));

    if let Some(tab) = method(cat, "ssprk33", checks) {
        let prob = problems::cubic_rotation();
        let u0 = [1.2, -0.5];
        let norm_sq: f64 = u0.iter().map(|x| x * x).sum();
        let expected = -7.0 / 12.0 * norm_sq.powi(5);
        let got = expansion::expansion_coefficients(tab, n_tot)
            .map_err(|e| e.to_string())
            .and_then(|exp| {
                expansion::contributions_by_order(&exp, &prob, prob.gram(), &u0).map_err(|e| e.to_string())
            });
        match got {
            Ok(by_order) => {
                let c4 = by_order.get(&4).copied().unwrap_or(0.0);
                checks.expect(
                    (c4 - expected).abs() <= LEADING_TERM_TOLERANCE * expected.abs(),
                    format!("Δt⁴ contribution {c4} vs −7/12‖u₀‖¹⁰ = {expected}"),
                );
            }
            Err(e) => checks.fail(format!("leading coefficient: {e}")),
        }
    }
}

fn bushy_differentials(_cat: &Catalog, checks: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 1..=3usize {
        let prob = match problems::semiinner_bushy(k) {
            Ok(p) => p,
            Err(e) => return checks.fail(e.to_string()),
        };
        let u0 = prob.initial_state();
        for l in 1..=3usize {
            let expected = if l == k { (1..=k).product::<usize>() as f64 } else { 0.0 };
            match expansion::elementary_differential(&prob, &u0, &RootedTree::bushy(l)) {
                Ok(v) => checks.expect(
                    v == vec![0.0, 0.0, expected],
                    format!("k = {k}, l = {l}: F = {v:?}, expected (0, 0, {expected})"),
                ),
                Err(e) => checks.fail(format!("k = {k}, l = {l}: {e}")),
            }
        }
        let weights = prob.gram().diagonal();
        let mut bad = 0;
        for _ in 0..SEMIINNER_SAMPLES {
            let u: Vec<Rational> = (0..3).map(|_| rat(rng.gen_range(-64..=64), rng.gen_range(1..=16))).collect();
            match prob.field::<Rational>(&u) {
                Ok(f) => {
                    let production: Rational = (0..3).map(|i| &weights[i] * &u[i] * &f[i]).sum();
                    if !production.is_zero() {
                        bad += 1;
                    }
                }
                Err(_) => bad += 1,
            }
        }
        checks.expect(bad == 0, format!("k = {k}: ⟨u, f(u)⟩_P ≠ 0 on {bad} samples"));
    }
}

/// Hand-derived classification of one catalog method. Stage indices are 0-based.
struct Expected {
    name: &'static str,
    order: usize,
    confluent: bool,
    unique_quadrature: &'static [usize],
    shift_free: &'static [usize],
    unique_max: Option<usize>,
    explicit: bool,
    algebraically_stable: bool,
}

const EXPECTED_STRUCTURE: [Expected; 10] = [
    Expected { name: "ssprk33", order: 3, confluent: false, unique_quadrature: &[0, 1, 2], shift_free: &[2], unique_max: Some(1), explicit: true, algebraically_stable: false },
    Expected { name: "ssprk104", order: 4, confluent: true, unique_quadrature: &[0, 1, 8, 9], shift_free: &[1, 8], unique_max: Some(9), explicit: true, algebraically_stable: false },
    Expected { name: "midpoint", order: 2, confluent: false, unique_quadrature: &[1], shift_free: &[1], unique_max: Some(1), explicit: true, algebraically_stable: false },
    Expected { name: "euler", order: 1, confluent: false, unique_quadrature: &[0], shift_free: &[0], unique_max: None, explicit: true, algebraically_stable: false },
    Expected { name: "paper_c4s2", order: 2, confluent: true, unique_quadrature: &[], shift_free: &[], unique_max: None, explicit: true, algebraically_stable: false },
    Expected { name: "paper_c5s3", order: 3, confluent: true, unique_quadrature: &[1], shift_free: &[1], unique_max: None, explicit: true, algebraically_stable: false },
    Expected { name: "paper_counterex", order: 1, confluent: true, unique_quadrature: &[], shift_free: &[], unique_max: None, explicit: true, algebraically_stable: false },
    Expected { name: "paper_testmethod", order: 2, confluent: false, unique_quadrature: &[0, 1, 2], shift_free: &[1], unique_max: Some(2), explicit: true, algebraically_stable: false },
    Expected { name: "implicit_midpoint", order: 2, confluent: false, unique_quadrature: &[0], shift_free: &[0], unique_max: Some(0), explicit: false, algebraically_stable: true },
    Expected { name: "lobatto3a2", order: 2, confluent: false, unique_quadrature: &[0, 1], shift_free: &[], unique_max: Some(1), explicit: false, algebraically_stable: false },
];

fn structural_theorems(cat: &Catalog, checks: &mut Checks) {
    let mut disagreements = 0;
    for e in &EXPECTED_STRUCTURE {
        let Some(tab) = method(cat, e.name, checks) else {
            disagreements += 1;
            continue;
        };
        let nodes = tableau::node_report(tab);
        let report = stability::structural_report(tab);
        let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<usize>>();
        let has_unique = !e.unique_quadrature.is_empty();
        let rows: [(&str, String, String); 11] = [
            ("order", report.order.to_string(), e.order.to_string()),
            ("confluent", nodes.is_confluent.to_string(), e.confluent.to_string()),
            ("unique quadrature nodes", format!("{:?}", nodes.unique_quadrature_nodes), format!("{:?}", set(e.unique_quadrature))),
            ("shift-free nodes", format!("{:?}", report.integer_shift_free_nodes), format!("{:?}", set(e.shift_free))),
            ("unique max node", format!("{:?}", report.unique_max_node), format!("{:?}", e.unique_max)),
            ("explicit", report.explicit.to_string(), e.explicit.to_string()),
            ("algebraically stable", stability::is_algebraically_stable(tab).to_string(), e.algebraically_stable.to_string()),
            ("has unique quadrature node", report.has_unique_quadrature_node.to_string(), has_unique.to_string()),
            ("lipschitz theorem", report.lipschitz_impossible_applies.to_string(), (e.explicit && has_unique).to_string()),
            ("unbounded growth theorem", report.unbounded_growth_applies.to_string(), (e.explicit && !e.shift_free.is_empty()).to_string()),
            ("sign theorem", report.sign_theorem_applies.to_string(), (e.explicit && e.unique_max.is_some() && e.order >= 2).to_string()),
        ];
        for (what, got, want) in rows {
            if got != want {
                disagreements += 1;
                checks.fail(format!("{}: {what} = {got}, expected {want}", e.name));
            }
        }
    }
    checks.note(format!("{} methods classified, {disagreements} disagreements", EXPECTED_STRUCTURE.len()));
}

fn search_round_trip(cat: &Catalog, checks: &mut Checks) {
    let nodes = vec![int(0), int(1), int(0), int(1)];
    let spec = SearchSpec::new(nodes, 2)
        .with_seed(SEARCH_SEED)
        .with_max_iterations(SEARCH_BUDGET);
    match search::construct_candidate(&spec) {
        Ok(tab) => {
            let report = search::verify_candidate(&tab, 2, SIGN_DEPTH);
            checks.expect(report.passed(), format!("constructed candidate fails verification:\n{report}"));
        }
        Err(e) => checks.fail(format!("construction with nodes (0,1,0,1): {e}")),
    }
    for (name, order) in [("paper_c4s2", 2), ("paper_c5s3", 3)] {
        if let Some(tab) = method(cat, name, checks) {
            let report = search::verify_candidate(tab, order, SIGN_DEPTH);
            checks.expect(report.passed(), format!("{name} fails verification:\n{report}"));
        }
    }
    let unique = SearchSpec::new(vec![int(0), rat(1, 2), int(1)], 2);
    match search::construct_candidate(&unique) {
        Err(e @ SearchError::UniqueMaxNode { .. }) => {
            checks.expect(e.to_string().contains("sign-condition theorem"), format!("refusal does not cite the theorem: {e}"))
        }
        other => checks.fail(format!("unique max node not refused: {other:?}")),
    }
    let negative = SearchSpec::new(vec![int(0), rat(-1, 2), rat(1, 3), int(-1)], 3);
    checks.expect(
        matches!(search::construct_candidate(&negative), Err(SearchError::UniqueMaxNode { stage: 3, .. })),
        "unique negative max node not refused",
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_ids_ordered() {
        let names: BTreeSet<&str> = criteria().iter().map(|c| c.name).collect();
        assert_eq!(names.len(), 13);
        assert!(criteria().iter().enumerate().all(|(i, c)| c.id == i + 1));
    }

    #[test]
    fn filter_selects_subsets() {
        let hits: Vec<usize> = criteria().iter().filter(|c| c.matches("expansion")).map(|c| c.id).collect();
        assert_eq!(hits, vec![1, 2, 4, 10]);
        assert_eq!(find("counterexample").unwrap().id, 6);
    }

    #[test]
    fn corrupted_coefficient_is_reported_by_name() {
        let mut cat = Catalog::builtin();
        let good = cat.method("paper_c4s2").clone();
        let mut a = good.a().to_vec();
        a[3][1] = int(2);
        let bad = ButcherTableau::new("paper_c4s2", a, good.b().to_vec(), good.c().to_vec()).unwrap();
        cat.insert(bad);
        let r = find("sign-condition").unwrap().run(&cat);
        assert!(!r.passed);
        assert!(r.failures.iter().any(|f| f.contains("paper_c4s2")));
    }

    #[test]
    fn missing_method_fails_cleanly() {
        let r = find("stability-polynomial").unwrap().run(&Catalog::empty());
        assert!(!r.passed);
        assert!(r.failures[0].contains("paper_counterex"));
    }
}
