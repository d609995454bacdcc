//! Fixed-step explicit Runge–Kutta integration with energy tracing.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::problems::{Problem, ProblemError};
use crate::scalar::Scalar;
use crate::stability::stability_matrix;
use crate::tableau::{ButcherTableau, TableauError};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: ProblemError,
    },
    #[error("invalid integration parameters: {0}")]
    Parameters(String),
    #[error("closed form needs r0 > 0")]
    ZeroRadius,
    #[error("csv output failed: {0}")]
    Io(#[from] io::Error),
}

/// Explicit tableau converted to a floating scalar type.
#[derive(Debug, Clone)]
pub struct NumericTableau<T> {
    name: String,
    a: Vec<Vec<T>>,
    b: Vec<T>,
    c: Vec<T>,
}

impl<T: Scalar> NumericTableau<T> {
    pub fn new(tab: &ButcherTableau) -> Result<Self, TableauError> {
        tab.require_explicit()?;
        Ok(NumericTableau {
            name: tab.name().to_string(),
            a: tab
                .a()
                .iter()
                .map(|row| row.iter().map(T::from_rational).collect())
                .collect(),
            b: tab.b().iter().map(T::from_rational).collect(),
            c: tab.c().iter().map(T::from_rational).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }
}

/// Reusable stage storage; after [`StageWorkspace::step`] it holds the stage
/// values `uᵢ` and derivatives `fᵢ` of that step.
#[derive(Debug, Clone)]
pub struct StageWorkspace<T> {
    stages: Vec<Vec<T>>,
    derivs: Vec<Vec<T>>,
}

impl<T: Scalar> StageWorkspace<T> {
    pub fn new(stages: usize, dim: usize) -> Self {
        StageWorkspace {
            stages: vec![vec![T::zero(); dim]; stages],
            derivs: vec![vec![T::zero(); dim]; stages],
        }
    }

    pub fn stage(&self, i: usize) -> &[T] {
        &self.stages[i]
    }

    pub fn derivative(&self, i: usize) -> &[T] {
        &self.derivs[i]
    }

    pub fn step_into<P: Problem>(
        &mut self,
        tab: &NumericTableau<T>,
        prob: &P,
        t: T,
        u: &[T],
        dt: T,
        out: &mut [T],
    ) -> Result<(), ProblemError> {
        let s = tab.stages();
        for i in 0..s {
            let (done, rest) = self.derivs.split_at_mut(i);
            let stage = &mut self.stages[i];
            stage.copy_from_slice(u);
            for (j, kj) in done.iter().enumerate() {
                let aij = tab.a[i][j];
                if aij == T::zero() {
                    continue;
                }
                let w = dt * aij;
                for (x, k) in stage.iter_mut().zip(kj) {
                    *x = *x + w * *k;
                }
            }
            prob.rhs(t + tab.c[i] * dt, stage, &mut rest[0])?;
        }
        out.copy_from_slice(u);
        for (bi, ki) in tab.b.iter().zip(&self.derivs) {
            if *bi == T::zero() {
                continue;
            }
            let w = dt * *bi;
            for (x, k) in out.iter_mut().zip(ki) {
                *x = *x + w * *k;
            }
        }
        Ok(())
    }

    pub fn step<P: Problem>(
        &mut self,
        tab: &NumericTableau<T>,
        prob: &P,
        t: T,
        u: &[T],
        dt: T,
    ) -> Result<Vec<T>, ProblemError> {
        let mut out = vec![T::zero(); u.len()];
        self.step_into(tab, prob, t, u, dt, &mut out)?;
        Ok(out)
    }
}

/// One explicit step `u₊ = u + Δt Σ bᵢ f(t + cᵢΔt, uᵢ)`.
pub fn rk_step<T: Scalar, P: Problem>(
    tab: &ButcherTableau,
    prob: &P,
    t: T,
    u: &[T],
    dt: T,
) -> Result<Vec<T>, SimulateError> {
    let numeric = NumericTableau::new(tab)?;
    let mut ws = StageWorkspace::new(numeric.stages(), u.len());
    ws.step(&numeric, prob, t, u, dt)
        .map_err(|source| SimulateError::Step { step: 0, source })
}

/// `uᵀPu`.
pub fn energy<T: Scalar, P: Problem>(prob: &P, u: &[T]) -> T {
    prob.gram().norm_sq(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Nonincreasing,
    /// 0-based index of the first step whose energy rose beyond tolerance.
    IncreasingDetected { first_step: usize },
    ConstantWithin { tolerance: f64 },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Nonincreasing => "nonincreasing",
            Verdict::IncreasingDetected { .. } => "increasing_detected",
            Verdict::ConstantWithin { .. } => "constant_within",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Nonincreasing => write!(f, "nonincreasing"),
            Verdict::IncreasingDetected { first_step } => {
                write!(f, "increasing_detected(step {first_step})")
            }
            Verdict::ConstantWithin { tolerance } => write!(f, "constant_within({tolerance:e})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    /// Record every `stride`-th energy (first and last always recorded).
    pub stride: usize,
    /// Also store states at recorded samples.
    pub snapshots: bool,
    /// Per-step relative increase still counted as non-increasing.
    pub increase_tolerance: f64,
    /// Relative band around `E₀` reported as constant.
    pub constant_tolerance: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            stride: 1,
            snapshots: false,
            increase_tolerance: 1e-13,
            constant_tolerance: 1e-10,
        }
    }
}

impl IntegrateOptions {
    pub fn with_stride(stride: usize) -> Self {
        IntegrateOptions {
            stride,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    pub steps: usize,
    pub verdict: Verdict,
    /// Steps with `E_{n+1} > E_n`.
    pub strict_increases: usize,
    /// Steps with `E_{n+1} < E_n`.
    pub strict_decreases: usize,
    pub max_relative_deviation: f64,
    pub final_state: Vec<f64>,
}

impl SimulationTrace {
    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.energies.last().unwrap()
    }

    pub fn energy_ratio(&self) -> f64 {
        self.final_energy() / self.initial_energy()
    }

    pub fn strictly_increasing(&self) -> bool {
        self.steps > 0 && self.strict_increases == self.steps
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.steps > 0 && self.strict_decreases == self.steps
    }

    /// Header `t,energy`, shortest round-trip decimal for each value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,energy")?;
        for (t, e) in self.times.iter().zip(&self.energies) {
            writeln!(w, "{t},{e}")?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), SimulateError> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// `<method>_<problem>_<dt>.csv`, with `:` in problem names replaced by `-`.
pub fn csv_file_name(method: &str, problem: &str, dt: f64) -> String {
    format!("{}_{}_{:e}.csv", method, problem.replace(':', "-"), dt)
}

/// `n = ⌊T/Δt⌋` full steps from `t = 0`.
pub fn integrate<T: Scalar, P: Problem>(
    tab: &ButcherTableau,
    prob: &P,
    u0: &[f64],
    dt: f64,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<SimulationTrace, SimulateError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimulateError::Parameters(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= dt && t_end.is_finite()) {
        return Err(SimulateError::Parameters(format!("T = {t_end} must be at least dt = {dt}")));
    }
    if opts.stride == 0 {
        return Err(SimulateError::Parameters("stride must be positive".into()));
    }
    if u0.len() != prob.dim() {
        return Err(SimulateError::Parameters(format!(
            "initial state has dimension {}, problem has {}",
            u0.len(),
            prob.dim()
        )));
    }
    let numeric = NumericTableau::<T>::new(tab)?;
    // tolerate T/dt landing a hair below an integer
    let steps = ((t_end / dt) * (1.0 + 4.0 * f64::EPSILON)).floor() as usize;
    let h = T::lift(dt);
    let mut ws = StageWorkspace::new(numeric.stages(), u0.len());
    let mut u: Vec<T> = u0.iter().map(|&x| T::lift(x)).collect();
    let mut next = u.clone();
    let e0 = energy(prob, &u);
    let mut e_prev = e0;
    let up_tol = T::one() + T::lift(opts.increase_tolerance);
    let mut first_increase = None;
    let mut inc = 0;
    let mut dec = 0;
    let mut max_dev = T::zero();

    let to_f64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let mut times = vec![0.0];
    let mut energies = vec![e0.to_f64_lossy()];
    let mut snapshots = Vec::new();
    if opts.snapshots {
        snapshots.push(to_f64(&u));
    }

    for n in 0..steps {
        let t = T::lift(n as f64) * h;
        ws.step_into(&numeric, prob, t, &u, h, &mut next)
            .map_err(|source| SimulateError::Step { step: n, source })?;
        std::mem::swap(&mut u, &mut next);
        let e = energy(prob, &u);
        if e > e_prev {
            inc += 1;
        } else if e < e_prev {
            dec += 1;
        }
        if first_increase.is_none() && e > e_prev * up_tol {
            first_increase = Some(n);
        }
        let dev = (e - e0).abs() / e0;
        if dev > max_dev {
            max_dev = dev;
        }
        e_prev = e;
        let last = n + 1 == steps;
        if (n + 1) % opts.stride == 0 || last {
            times.push(((n + 1) as f64) * dt);
            energies.push(e.to_f64_lossy());
            if opts.snapshots {
                snapshots.push(to_f64(&u));
            }
        }
    }

    let max_relative_deviation = max_dev.to_f64_lossy();
    let verdict = match first_increase {
        Some(first_step) => Verdict::IncreasingDetected { first_step },
        None if max_relative_deviation <= opts.constant_tolerance => Verdict::ConstantWithin {
            tolerance: opts.constant_tolerance,
        },
        None => Verdict::Nonincreasing,
    };
    Ok(SimulationTrace {
        times,
        energies,
        snapshots,
        steps,
        verdict,
        strict_increases: inc,
        strict_decreases: dec,
        max_relative_deviation,
        final_state: to_f64(&u),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    /// `‖u₊‖² − ‖u₀‖²`.
    pub lhs: f64,
    /// `2Δt Σ bᵢ⟨uᵢ, fᵢ⟩ + Δt² Σ Mᵢⱼ⟨fᵢ, fⱼ⟩`.
    pub rhs: f64,
    pub residual: f64,
    /// `max(‖u₀‖², ‖u₊‖²)`.
    pub scale: f64,
}

/// Evaluates both sides of the exact one-step energy identity from the actual stages.
pub fn energy_identity_check<T: Scalar, P: Problem>(
    tab: &ButcherTableau,
    prob: &P,
    t: f64,
    u: &[f64],
    dt: f64,
) -> Result<IdentityCheck, SimulateError> {
    let numeric = NumericTableau::<T>::new(tab)?;
    let m = stability_matrix(tab);
    let u0: Vec<T> = u.iter().map(|&x| T::lift(x)).collect();
    let h = T::lift(dt);
    let mut ws = StageWorkspace::new(numeric.stages(), u.len());
    let u1 = ws
        .step(&numeric, prob, T::lift(t), &u0, h)
        .map_err(|source| SimulateError::Step { step: 0, source })?;
    let g = prob.gram();
    let e0 = g.norm_sq(&u0);
    let e1 = g.norm_sq(&u1);
    let lhs = e1 - e0;
    let s = numeric.stages();
    let mut first = T::zero();
    for i in 0..s {
        first = first + numeric.b[i] * g.inner(ws.stage(i), ws.derivative(i));
    }
    let mut second = T::zero();
    for i in 0..s {
        for j in 0..s {
            let mij = T::from_rational(m.get(i, j));
            if mij != T::zero() {
                second = second + mij * g.inner(ws.derivative(i), ws.derivative(j));
            }
        }
    }
    let rhs = T::lift(2.0) * h * first + h * h * second;
    Ok(IdentityCheck {
        lhs: lhs.to_f64_lossy(),
        rhs: rhs.to_f64_lossy(),
        residual: (lhs - rhs).abs().to_f64_lossy(),
        scale: e0.max(e1).to_f64_lossy(),
    })
}

/// Rotation angle per explicit-midpoint step on the inverse-square rotation
/// field at radius `r`.
pub fn midpoint_rotation_angle<T: Scalar>(r: T, dt: T) -> T {
    let r2 = r * r;
    let q = dt * dt / (T::lift(4.0) * r2);
    ((r2 - q) / (r2 + q)).acos()
}

/// `r₀ (cos(θ₀ + nθ_h), sin(θ₀ + nθ_h))`.
pub fn midpoint_closed_form<T: Scalar>(r0: T, theta0: T, dt: T, n: usize) -> Result<[T; 2], SimulateError> {
    if !(r0 > T::zero()) {
        return Err(SimulateError::ZeroRadius);
    }
    let theta = theta0 + T::lift(n as f64) * midpoint_rotation_angle(r0, dt);
    Ok([r0 * theta.cos(), r0 * theta.sin()])
}
