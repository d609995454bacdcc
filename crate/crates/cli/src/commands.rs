//! Subcommand implementations. Each returns a [`Report`] or a classified error.

use std::path::{Path, PathBuf};

use rkenergy::catalog::ResolveError;
use rkenergy::expansion::{self, ExpansionError};
use rkenergy::problems::{Problem, ProblemError, ProblemSpec, SpikeOptions};
use rkenergy::rational::{self, Rational};
use rkenergy::search::{self, SearchError, SearchSpec};
use rkenergy::simulate::{self, IntegrateOptions, SimulationTrace};
use rkenergy::stability::{self, AsymptoticLimit, ImaginaryAxisGlobal, ProofRoute, SignStatus};
use rkenergy::suite;
use rkenergy::tableau::{self, ButcherTableau};
use rkenergy::{Catalog, Extended, Precision, Scalar};

use crate::report::{stage_list, yes_no, Report};

/// Relative agreement required between predicted and measured spike growth.
pub const SPIKE_AGREEMENT: f64 = 1e-10;

/// Default trace length when no stride is given.
pub const DEFAULT_TRACE_ROWS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("refusal: {0}")]
    Refusal(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Refusal(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(anyhow::anyhow!("{msg}"))
}

pub fn resolve(cat: &Catalog, method: &str) -> Result<ButcherTableau, CliError> {
    cat.resolve(method).map_err(|e| match e {
        ResolveError::Unknown(_) | ResolveError::Parse { .. } => CliError::Usage(e.to_string()),
    })
}

fn require_explicit(tab: &ButcherTableau, what: &str) -> Result<(), CliError> {
    if tab.is_explicit() {
        Ok(())
    } else {
        Err(CliError::Refusal(format!("{} is implicit; {what} needs an explicit method", tab.name())))
    }
}

fn limit_text(limit: &AsymptoticLimit) -> String {
    match limit {
        AsymptoticLimit::Value(v) => v.to_string(),
        AsymptoticLimit::Oscillating => "oscillating".into(),
        AsymptoticLimit::Degenerate => "degenerate".into(),
    }
}

fn global_label(g: ImaginaryAxisGlobal) -> &'static str {
    match g {
        ImaginaryAxisGlobal::GrowthForAllY => "growth_for_all_y",
        ImaginaryAxisGlobal::Unimodular => "unimodular",
        ImaginaryAxisGlobal::Mixed => "mixed",
        ImaginaryAxisGlobal::DampedForAllY => "damped_for_all_y",
    }
}

pub fn analyze(cat: &Catalog, method: &str, depth: usize) -> Result<Report, CliError> {
    if depth == 0 {
        return Err(CliError::Usage("--depth must be positive".into()));
    }
    let tab = resolve(cat, method)?;
    let mut r = Report::default();
    let validation = tableau::validate(&tab);
    let nodes = tableau::node_report(&tab);
    let structure = stability::structural_report(&tab);

    r.line(format!("method: {} ({} stages, {})", tab.name(), tab.stages(), if tab.is_explicit() { "explicit" } else { "implicit" }));
    r.line(tab.to_string());
    r.line(format!("order: {}", structure.order));
    r.line(format!("weight sum: {} (consistent: {})", validation.weight_sum, yes_no(validation.consistent)));
    r.line(format!("nonnegative weights: {}", yes_no(tableau::weights_nonnegative(&tab))));
    r.line(format!("row sums hold: {}", yes_no(validation.row_sums_hold())));
    r.line(format!("unique nodes: {}", stage_list(&nodes.unique_nodes)));
    r.line(format!("quadrature nodes: {}", stage_list(&nodes.quadrature_nodes)));
    r.field("method", tab.name());
    r.field("stages", tab.stages());
    r.field("explicit", tab.is_explicit());
    r.field("order", structure.order);
    r.field("weight_sum", &validation.weight_sum);
    r.field("consistent", validation.consistent);
    r.field("nonnegative_weights", tableau::weights_nonnegative(&tab));
    r.field("row_sums_hold", validation.row_sums_hold());
    r.field("unique_nodes", stage_list(&nodes.unique_nodes));
    r.field("quadrature_nodes", stage_list(&nodes.quadrature_nodes));
    r.field("unique_quadrature_nodes", stage_list(&nodes.unique_quadrature_nodes));
    r.field("confluent", nodes.is_confluent);

    if structure.has_unique_quadrature_node {
        let suffix = if structure.lipschitz_impossible_applies {
            " → Lipschitz-impossible theorem applies"
        } else {
            " (implicit method, theorem does not apply)"
        };
        r.line(format!(
            "unique quadrature node: yes (stages {}){suffix}",
            stage_list(&structure.unique_quadrature_nodes)
        ));
    } else {
        r.line("unique quadrature node: no");
    }
    let shift_free = stage_list(&structure.integer_shift_free_nodes);
    if structure.unbounded_growth_applies {
        r.line(format!("integer-shift-free quadrature nodes: {shift_free} → unbounded-growth theorem applies"));
    } else {
        r.line(format!("integer-shift-free quadrature nodes: {shift_free}"));
    }
    match structure.unique_max_node {
        Some(k) if structure.sign_theorem_applies => r.line(format!(
            "unique max |c| node: stage {} → sign-condition theorem applies (not energy stable on autonomous problems)",
            k + 1
        )),
        Some(k) => r.line(format!("unique max |c| node: stage {}", k + 1)),
        None => r.line("unique max |c| node: none"),
    }
    r.field("lipschitz_impossible_applies", structure.lipschitz_impossible_applies);
    r.field("integer_shift_free_nodes", shift_free);
    r.field("unbounded_growth_applies", structure.unbounded_growth_applies);
    r.field(
        "unique_max_node",
        structure.unique_max_node.map_or("none".to_string(), |k| (k + 1).to_string()),
    );
    r.field("sign_theorem_applies", structure.sign_theorem_applies);

    let alg = stability::is_algebraically_stable(&tab);
    r.line(format!("algebraically stable: {}", yes_no(alg)));
    r.field("algebraically_stable", alg);

    let verdict = stability::sign_condition_verdict(&tab, depth);
    let (status_text, status_key) = match &verdict.status {
        SignStatus::ProvedNegativeAllK(route) => {
            let key = match route {
                ProofRoute::BinaryNodes => "binary_nodes".to_string(),
                ProofRoute::DominantTerm { from_k } => format!("dominant_term_from_k_{from_k}"),
            };
            r.field("sign_condition_route", key);
            let route_text = route.to_string();
            (format!("proved negative for all k ({route_text})"), "proved_negative_all_k".to_string())
        }
        SignStatus::ViolatedAt(k) => (
            format!("violated at k = {k} (value {})", verdict.values[k - 1]),
            format!("violated_at_{k}"),
        ),
        SignStatus::NegativeUpToKInconclusive => (
            format!("negative up to k = {}, inconclusive beyond", verdict.tested_k),
            "negative_up_to_k_inconclusive".to_string(),
        ),
    };
    r.line(format!("sign condition: {status_text}"));
    r.line(format!("sign condition limit V(k)/c_max^(2k): {}", limit_text(&verdict.asymptotic_limit)));
    r.field("sign_condition", status_key);
    r.field("sign_condition_depth", verdict.tested_k);
    r.field("sign_condition_limit", limit_text(&verdict.asymptotic_limit));
    for (k, v) in verdict.values.iter().enumerate().take(8) {
        r.field(&format!("sign_value_{}", k + 1), v);
    }

    if tab.is_explicit() {
        let phi = stability::stability_polynomial(&tab).map_err(runtime)?;
        let axis = stability::imaginary_axis_report(&phi);
        r.line(format!("stability polynomial: φ(z) = {phi}"));
        r.line(format!(
            "imaginary axis: |φ(iy)|² − 1 = {} y^{} + …, {} ({})",
            axis.leading_coefficient,
            axis.leading_y_power,
            if axis.grows_near_origin() { "grows near y = 0" } else { "no growth near y = 0" },
            global_label(axis.global)
        ));
        let coeffs: Vec<String> = phi.coefficients().iter().map(Rational::to_string).collect();
        r.field("stability_polynomial", coeffs.join(" "));
        r.field("imaginary_axis_leading_coefficient", &axis.leading_coefficient);
        r.field("imaginary_axis_leading_power", axis.leading_y_power);
        r.field("imaginary_axis_grows_near_origin", axis.grows_near_origin());
        r.field("imaginary_axis_global", global_label(axis.global));
    } else {
        r.line("stability polynomial: not computed (implicit method)");
    }
    Ok(r)
}

pub fn expand(cat: &Catalog, method: &str, n_tot: usize) -> Result<Report, CliError> {
    let tab = resolve(cat, method)?;
    let exp = expansion::expansion_coefficients(&tab, n_tot).map_err(|e| match e {
        ExpansionError::OrderCap(_) => CliError::Usage(e.to_string()),
        ExpansionError::Tableau(_) => CliError::Refusal(e.to_string()),
        other => runtime(other),
    })?;
    let mut r = Report::default();
    r.line(format!("method: {} (terms up to Δt^{n_tot})", tab.name()));
    r.line(format!("‖u₁‖² − ‖u₀‖² = {} + O(Δt^{})", expansion::render_expansion(&exp), n_tot + 1));
    for (pair, c) in exp.terms().iter().filter(|(_, c)| rational::sign(c) != 0) {
        r.line(format!("  Δt^{}  {:>14}  {}", pair.total_order(), c.to_string(), pair.notation()));
    }
    let rows = exp.rows();
    r.field("method", exp.method());
    r.field("max_total_order", exp.max_total_order());
    for row in &rows {
        r.field(
            "term",
            format!("{} {} {} {} {}", row.order, row.tree1, row.tree2, row.numerator, row.denominator),
        );
    }
    r.table(
        &["order", "tree1", "tree2", "numerator", "denominator"],
        rows.into_iter()
            .map(|row| vec![row.order.to_string(), row.tree1, row.tree2, row.numerator, row.denominator])
            .collect(),
    );
    Ok(r)
}

fn spike_refusal(tab: &ButcherTableau, e: ProblemError) -> CliError {
    match e {
        ProblemError::NotQuadrature { .. } | ProblemError::NodeNotUnique { .. } | ProblemError::IntegerShift { .. } => {
            let nodes = tableau::node_report(tab);
            let context = if nodes.unique_quadrature_nodes.is_empty() {
                format!(
                    "{} has no unique quadrature node, so the Lipschitz-impossible construction does not apply",
                    tab.name()
                )
            } else {
                format!(
                    "the construction needs a unique quadrature node; candidates for {}: stages {}",
                    tab.name(),
                    stage_list(&nodes.unique_quadrature_nodes)
                )
            };
            CliError::Refusal(format!("{e}; {context}"))
        }
        ProblemError::StageOutOfRange { .. } | ProblemError::InvalidParameter(_) | ProblemError::Unknown(_) => {
            CliError::Usage(e.to_string())
        }
        other => runtime(other),
    }
}

pub fn counterexample(cat: &Catalog, method: &str, stage: usize, dt: f64, eps: f64) -> Result<Report, CliError> {
    let tab = resolve(cat, method)?;
    require_explicit(&tab, "the spike construction")?;
    if stage == 0 || stage > tab.stages() {
        return Err(CliError::Usage(format!("stage must lie in 1..={}, got {stage}", tab.stages())));
    }
    let k = stage - 1;
    let prob = rkenergy::problems::spike_rotation(&tab, k, dt, eps, false).map_err(|e| spike_refusal(&tab, e))?;
    let u0 = prob.initial_state();
    let numeric = simulate::NumericTableau::<Extended>::new(&tab).map_err(runtime)?;
    let measured = search::step_energy_change(&numeric, &prob, &u0, dt)
        .map_err(runtime)?
        .to_f64_lossy();
    let bk = rational::to_f64(&tab.b()[k]);
    let norm_sq: f64 = u0.iter().map(|x| x * x).sum();
    let predicted = (bk * dt * eps).powi(2) * norm_sq;
    let rel = ((measured - predicted) / predicted).abs();
    let spike = prob.spike();

    let mut r = Report::default();
    r.line(format!("method: {} (stage {stage}, c = {}, b = {})", tab.name(), tab.c()[k], tab.b()[k]));
    r.line(format!(
        "problem: u′ = λ(t) J u, ‖L‖ = {eps:e}, spike centre {:e}, half-width {:e}, Lipschitz constant {:e}",
        spike.center,
        spike.half_width,
        spike.lipschitz_constant()
    ));
    r.line(format!("u₀ = ({}, {}), Δt = {dt:e}", u0[0], u0[1]));
    r.line(format!("predicted growth b_k²Δt²ε²‖u₀‖² = {predicted:.6e}"));
    r.line(format!("measured growth  ‖u₁‖² − ‖u₀‖²   = {measured:.6e}"));
    r.line(format!("relative difference: {rel:.3e}"));
    r.field("method", tab.name());
    r.field("stage", stage);
    r.field("dt", dt);
    r.field("eps", eps);
    r.field("spike_center", spike.center);
    r.field("spike_half_width", spike.half_width);
    r.field("lipschitz_constant", spike.lipschitz_constant());
    r.field("predicted", format!("{predicted:e}"));
    r.field("measured", format!("{measured:e}"));
    r.field("relative_difference", format!("{rel:e}"));
    if rel > SPIKE_AGREEMENT {
        return Err(runtime(format!(
            "measured growth {measured:e} disagrees with prediction {predicted:e} (relative {rel:e})"
        )));
    }
    r.field("agree", true);
    Ok(r)
}

pub struct SimulateArgs<'a> {
    pub method: &'a str,
    pub problem: &'a str,
    pub dt: f64,
    pub t_end: f64,
    pub stride: Option<usize>,
    pub out: Option<&'a Path>,
    pub eps: f64,
    pub single_spike: bool,
    pub precision: Precision,
}

pub fn simulate(cat: &Catalog, args: &SimulateArgs) -> Result<Report, CliError> {
    let tab = resolve(cat, args.method)?;
    require_explicit(&tab, "simulation")?;
    if !(args.dt > 0.0 && args.dt.is_finite()) || !(args.t_end >= args.dt && args.t_end.is_finite()) {
        return Err(CliError::Usage(format!("need 0 < dt ≤ T, got dt = {} and T = {}", args.dt, args.t_end)));
    }
    if args.stride == Some(0) {
        return Err(CliError::Usage("--stride must be positive".into()));
    }
    let spec: ProblemSpec = args.problem.parse().map_err(|e: ProblemError| CliError::Usage(e.to_string()))?;
    let spike = SpikeOptions {
        dt: args.dt,
        eps: args.eps,
        multi_step: !args.single_spike,
    };
    let prob = spec.build(cat, spike).map_err(|e| match e {
        ProblemError::Method(m) => CliError::Usage(m),
        other => spike_refusal(&tab, other),
    })?;
    let steps = (args.t_end / args.dt).round().max(1.0) as usize;
    let stride = args.stride.unwrap_or_else(|| steps.div_ceil(DEFAULT_TRACE_ROWS).max(1));
    let opts = IntegrateOptions::with_stride(stride);
    let u0 = prob.initial_state();
    let trace: SimulationTrace = match args.precision {
        Precision::Double => simulate::integrate::<f64, _>(&tab, &prob, &u0, args.dt, args.t_end, opts),
        Precision::Extended => simulate::integrate::<Extended, _>(&tab, &prob, &u0, args.dt, args.t_end, opts),
    }
    .map_err(runtime)?;
    let path: PathBuf = match args.out {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(simulate::csv_file_name(tab.name(), &prob.name(), args.dt)),
    };
    trace.write_csv_file(&path).map_err(runtime)?;

    let precision = match args.precision {
        Precision::Double => "double",
        Precision::Extended => "extended",
    };
    let mut r = Report::default();
    r.line(format!("method: {}  problem: {}  Δt = {:e}  T = {}", tab.name(), prob.name(), args.dt, args.t_end));
    r.line(format!("steps: {} ({precision} precision)", trace.steps));
    r.line(format!("energy: {:.16e} → {:.16e} (ratio {:.16})", trace.initial_energy(), trace.final_energy(), trace.energy_ratio()));
    r.line(format!("steps with increase/decrease: {}/{}", trace.strict_increases, trace.strict_decreases));
    r.line(format!("max relative deviation: {:.3e}", trace.max_relative_deviation));
    r.line(format!("trace: {}", path.display()));
    r.line(format!("verdict: {}", trace.verdict));
    r.field("method", tab.name());
    r.field("problem", prob.name());
    r.field("dt", args.dt);
    r.field("t_end", args.t_end);
    r.field("precision", precision);
    r.field("steps", trace.steps);
    r.field("stride", stride);
    r.field("initial_energy", format!("{:e}", trace.initial_energy()));
    r.field("final_energy", format!("{:e}", trace.final_energy()));
    r.field("energy_ratio", trace.energy_ratio());
    r.field("strict_increases", trace.strict_increases);
    r.field("strict_decreases", trace.strict_decreases);
    r.field("max_relative_deviation", format!("{:e}", trace.max_relative_deviation));
    r.field("csv", path.display());
    r.field("verdict", trace.verdict.label());
    if let simulate::Verdict::IncreasingDetected { first_step } = trace.verdict {
        r.field("first_increase_step", first_step);
    }
    Ok(r)
}

pub struct SearchArgs<'a> {
    pub nodes: Option<&'a str>,
    pub verify: Option<&'a str>,
    pub order: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub depth: usize,
    pub out: Option<&'a Path>,
}

fn parse_nodes(text: &str) -> Result<Vec<Rational>, CliError> {
    text.split(',')
        .map(|s| {
            rational::parse_rational(s.trim())
                .map_err(|e| CliError::Usage(format!("bad node `{}`: {e}", s.trim())))
        })
        .collect()
}

fn verification_fields(r: &mut Report, report: &search::VerificationReport) {
    for c in &report.checks {
        let key = c.name.replace([' ', '-'], "_");
        r.field(&format!("check_{key}"), if c.passed { "pass" } else { "fail" });
    }
    r.field("verified", report.passed());
}

pub fn search(cat: &Catalog, args: &SearchArgs) -> Result<Report, CliError> {
    let mut r = Report::default();
    if let Some(method) = args.verify {
        let tab = resolve(cat, method)?;
        let report = search::verify_candidate(&tab, args.order, args.depth);
        r.line(report.to_string());
        r.field("method", tab.name());
        r.field("target_order", args.order);
        verification_fields(&mut r, &report);
        if tab.is_explicit() && tableau::order_of_accuracy(&tab, 4) >= 4 {
            let obstruction = search::fourth_order_obstruction_report(&tab).map_err(runtime)?;
            r.line(obstruction.to_string());
            r.field("obstruction_leading_coefficient", &obstruction.leading_coefficient);
            let res: Vec<String> = obstruction.residuals.iter().map(Rational::to_string).collect();
            r.field("obstruction_residuals", res.join(" "));
            r.field("obstruction_residuals_vanish", obstruction.residuals_vanish());
            r.field("obstruction_cross_terms", obstruction.cross_terms.len());
            r.field("obstruction_negative_node", obstruction.has_negative_node);
        }
        return Ok(r);
    }
    let Some(nodes) = args.nodes else {
        return Err(CliError::Usage("search needs --nodes or --verify".into()));
    };
    let spec = SearchSpec::new(parse_nodes(nodes)?, args.order)
        .with_seed(args.seed)
        .with_max_iterations(args.max_iterations)
        .with_sign_depth(args.depth);
    let tab = search::construct_candidate(&spec).map_err(|e| match e {
        SearchError::InvalidSpec(_) => CliError::Usage(e.to_string()),
        SearchError::UniqueMaxNode { .. } | SearchError::Infeasible(_) => CliError::Refusal(e.to_string()),
        SearchError::Exhausted(_) => runtime(e),
    })?;
    let report = search::verify_candidate(&tab, args.order, args.depth);
    if !report.passed() {
        return Err(runtime(format!("constructed candidate failed verification\n{report}")));
    }
    r.line(tab.to_string());
    r.line(report.to_string());
    r.field("method", tab.name());
    r.field("seed", args.seed);
    r.field("target_order", args.order);
    verification_fields(&mut r, &report);
    for line in tab.to_text().lines() {
        r.field("tableau", line.trim());
    }
    if let Some(path) = args.out {
        std::fs::write(path, tab.to_text()).map_err(|e| runtime(format!("writing {}: {e}", path.display())))?;
        r.line(format!("written: {}", path.display()));
        r.field("written", path.display());
    }
    Ok(r)
}

pub fn run_suite(cat: &Catalog, filter: Option<&str>) -> Result<(Report, bool), CliError> {
    if let Some(f) = filter {
        if !suite::criteria().iter().any(|c| c.matches(f)) {
            return Err(CliError::Usage(format!("no criterion matches `{f}`")));
        }
    }
    let report = suite::run_suite(cat, filter);
    let mut r = Report::default();
    r.line(report.to_string());
    let mut rows = Vec::new();
    for res in &report.results {
        let status = if res.passed { "pass" } else { "fail" };
        r.field(&format!("criterion_{:02}_{}", res.id, res.name), status);
        rows.push(vec![
            res.id.to_string(),
            res.name.to_string(),
            status.to_string(),
            format!("{:.3}", res.elapsed.as_secs_f64()),
            res.failures.join("; "),
        ]);
    }
    r.field("all_passed", report.all_passed());
    r.table(&["id", "name", "status", "seconds", "failures"], rows);
    Ok((r, report.all_passed()))
}

/// Catalog with tableau files layered over the built-in methods.
pub fn catalog_with(overrides: &[PathBuf]) -> Result<Catalog, CliError> {
    let mut cat = Catalog::builtin();
    for path in overrides {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
        let tab = tableau::parse_tableau(&text)
            .map_err(|e| CliError::Usage(format!("parsing {}: {e}", path.display())))?;
        cat.insert(tab);
    }
    Ok(cat)
}
