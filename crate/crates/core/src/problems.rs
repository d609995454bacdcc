//! Reference problems behind a single [`Problem`] contract.
//!
//! Autonomous problems also implement [`AutonomousField`], whose right-hand
//! side is generic over [`Field`]. Evaluating it on [`Jet`] arguments yields
//! exact directional derivatives, so every autonomous problem automatically
//! provides a [`DifferentialOracle`].
//!
//! Stage indices are 0-based in this API; error messages print them 1-based.

use std::fmt;
use std::str::FromStr;

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::rational::{self, int, Rational};
use crate::scalar::{Field, Jet, Scalar};
use crate::tableau::ButcherTableau;

/// Deepest derivative an oracle will produce.
pub const ORACLE_MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("right-hand side is singular at u = 0")]
    Singular,
    #[error("derivative depth {requested} exceeds oracle depth {max}")]
    DepthExceeded { requested: usize, max: usize },
    #[error("state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("stage {} out of range for a {stages}-stage method", .stage + 1)]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("stage {} is not a quadrature node (b = 0)", .stage + 1)]
    NotQuadrature { stage: usize },
    #[error("node c = {node} of stage {} is shared with another stage; a unique node is required", .stage + 1)]
    NodeNotUnique { stage: usize, node: Rational },
    #[error("c_{} - c_{} is an integer; the multi-step spike family needs non-integer shifts", .other + 1, .stage + 1)]
    IntegerShift { stage: usize, other: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown problem `{0}`")]
    Unknown(String),
    #[error("{0}")]
    Method(String),
}

/// Gram matrix `P` of the (semi-)inner product `⟨u, v⟩ = uᵀPv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Gram {
    Identity(usize),
    Diagonal(Vec<Rational>),
}

impl Gram {
    pub fn dim(&self) -> usize {
        match self {
            Gram::Identity(n) => *n,
            Gram::Diagonal(d) => d.len(),
        }
    }

    pub fn inner<T: Scalar>(&self, u: &[T], v: &[T]) -> T {
        match self {
            Gram::Identity(_) => u.iter().zip(v).fold(T::zero(), |acc, (a, b)| acc + *a * *b),
            Gram::Diagonal(d) => u
                .iter()
                .zip(v)
                .zip(d)
                .filter(|(_, p)| !p.is_zero())
                .fold(T::zero(), |acc, ((a, b), p)| acc + T::from_rational(p) * *a * *b),
        }
    }

    pub fn norm_sq<T: Scalar>(&self, u: &[T]) -> T {
        self.inner(u, u)
    }

    pub fn diagonal(&self) -> Vec<Rational> {
        match self {
            Gram::Identity(n) => vec![int(1); *n],
            Gram::Diagonal(d) => d.clone(),
        }
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.diagonal().iter().all(|p| !p.is_negative())
    }
}

pub trait Problem {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn gram(&self) -> &Gram;
    /// `⟨u, f(t, u)⟩ ≤ 0` for all `t`, `u`.
    fn semibounded(&self) -> bool;
    /// `⟨u, f(t, u)⟩ = 0` for all `t`, `u`.
    fn conservative(&self) -> bool;
    fn initial_state(&self) -> Vec<f64>;
    fn rhs<T: Scalar>(&self, t: T, u: &[T], out: &mut [T]) -> Result<(), ProblemError>;
}

/// A time-independent right-hand side that accepts any [`Field`].
pub trait AutonomousField: Problem {
    fn field<F: Field>(&self, u: &[F]) -> Result<Vec<F>, ProblemError>;
}

/// Directional derivatives `f⁽ᵐ⁾(u; v₁, …, v_m)`, multilinear and symmetric
/// in the directions.
pub trait DifferentialOracle<T> {
    fn oracle_dim(&self) -> usize;
    fn max_depth(&self) -> usize;
    fn derivative(&self, u: &[T], dirs: &[Vec<T>]) -> Result<Vec<T>, ProblemError>;
}

impl<T: Scalar, P: AutonomousField> DifferentialOracle<T> for P {
    fn oracle_dim(&self) -> usize {
        self.dim()
    }

    fn max_depth(&self) -> usize {
        ORACLE_MAX_DEPTH
    }

    fn derivative(&self, u: &[T], dirs: &[Vec<T>]) -> Result<Vec<T>, ProblemError> {
        let m = dirs.len();
        if m > ORACLE_MAX_DEPTH {
            return Err(ProblemError::DepthExceeded {
                requested: m,
                max: ORACLE_MAX_DEPTH,
            });
        }
        check_dim(self.dim(), u.len())?;
        for d in dirs {
            check_dim(self.dim(), d.len())?;
        }
        let seeded: Vec<Jet<T>> = (0..u.len())
            .map(|c| {
                let comps: Vec<T> = dirs.iter().map(|d| d[c]).collect();
                Jet::seeded(u[c], &comps)
            })
            .collect();
        let full = (1usize << m) - 1;
        Ok(self.field(&seeded)?.iter().map(|y| y.coeff(full)).collect())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), ProblemError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProblemError::Dimension { expected, got })
    }
}

fn ipow<F: Field>(x: &F, k: usize) -> F {
    (0..k).fold(F::lift(1.0), |acc, _| acc * x.clone())
}

macro_rules! autonomous_problem {
    ($ty:ty, $name:expr, $semibounded:expr, $conservative:expr, $dim:expr, $init:expr) => {
        impl Problem for $ty {
            fn name(&self) -> String {
                ($name)(self)
            }
            fn dim(&self) -> usize {
                ($dim)(self)
            }
            fn gram(&self) -> &Gram {
                &self.gram
            }
            fn semibounded(&self) -> bool {
                $semibounded
            }
            fn conservative(&self) -> bool {
                $conservative
            }
            fn initial_state(&self) -> Vec<f64> {
                ($init)(self)
            }
            fn rhs<T: Scalar>(&self, _t: T, u: &[T], out: &mut [T]) -> Result<(), ProblemError> {
                check_dim(self.dim(), u.len())?;
                out.copy_from_slice(&self.field(u)?);
                Ok(())
            }
        }
    };
}

/// `f(u) = ‖u‖² (−u₂, u₁)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubicRotation {
    gram: Gram,
}

pub fn cubic_rotation() -> CubicRotation {
    CubicRotation {
        gram: Gram::Identity(2),
    }
}

impl AutonomousField for CubicRotation {
    fn field<F: Field>(&self, u: &[F]) -> Result<Vec<F>, ProblemError> {
        check_dim(2, u.len())?;
        let r2 = u[0].clone() * u[0].clone() + u[1].clone() * u[1].clone();
        Ok(vec![-(r2.clone() * u[1].clone()), r2 * u[0].clone()])
    }
}

autonomous_problem!(CubicRotation, |_| "cubicrot".to_string(), true, true, |_| 2, |_| vec![1.0, 0.0]);

/// `f(u) = (−u₂, u₁) / ‖u‖²`, singular at the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InverseSquareRotation {
    gram: Gram,
}

pub fn inverse_square_rotation() -> InverseSquareRotation {
    InverseSquareRotation {
        gram: Gram::Identity(2),
    }
}

impl AutonomousField for InverseSquareRotation {
    fn field<F: Field>(&self, u: &[F]) -> Result<Vec<F>, ProblemError> {
        check_dim(2, u.len())?;
        let r2 = u[0].clone() * u[0].clone() + u[1].clone() * u[1].clone();
        if r2.value_f64() == 0.0 {
            return Err(ProblemError::Singular);
        }
        Ok(vec![-u[1].clone() / r2.clone(), u[0].clone() / r2])
    }
}

autonomous_problem!(InverseSquareRotation, |_| "invsqrot".to_string(), true, true, |_| 2, |_| vec![1.0, 0.0]);

/// `f(u) = Ju` with the unit rotation generator `J`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearRotation {
    gram: Gram,
}

pub fn linear_rotation() -> LinearRotation {
    LinearRotation {
        gram: Gram::Identity(2),
    }
}

impl AutonomousField for LinearRotation {
    fn field<F: Field>(&self, u: &[F]) -> Result<Vec<F>, ProblemError> {
        check_dim(2, u.len())?;
        Ok(vec![-u[1].clone(), u[0].clone()])
    }
}

autonomous_problem!(LinearRotation, |_| "linrot".to_string(), true, true, |_| 2, |_| vec![1.0, 0.0]);

/// `f(u) = (1, 0, 0) + u₁ᵏ (0, −u₃, u₂)` under the semi-inner product
/// `P = diag(0, 1, 1)`. At `u₀ = (0, 1, 0)` the only nonzero bushy
/// elementary differential is the one with `k` leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemiinnerBushy {
    k: usize,
    gram: Gram,
}

pub fn semiinner_bushy(k: usize) -> Result<SemiinnerBushy, ProblemError> {
    if k == 0 {
        return Err(ProblemError::InvalidParameter("bushy problem needs k >= 1".into()));
    }
    Ok(SemiinnerBushy {
        k,
        gram: Gram::Diagonal(vec![int(0), int(1), int(1)]),
    })
}

impl SemiinnerBushy {
    pub fn k(&self) -> usize {
        self.k
    }
}

impl AutonomousField for SemiinnerBushy {
    fn field<F: Field>(&self, u: &[F]) -> Result<Vec<F>, ProblemError> {
        check_dim(3, u.len())?;
        let w = ipow(&u[0], self.k);
        Ok(vec![F::lift(1.0), -(w.clone() * u[2].clone()), w * u[1].clone()])
    }
}

autonomous_problem!(
    SemiinnerBushy,
    |p: &SemiinnerBushy| format!("bushy:{}", p.k),
    true,
    true,
    |_| 3,
    |_| vec![0.0, 1.0, 0.0]
);

/// Dense polynomial vector field with seeded random coefficients in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialField {
    dim: usize,
    seed: u64,
    /// Per component: (coefficient, exponent vector).
    terms: Vec<Vec<(f64, Vec<usize>)>>,
    gram: Gram,
}

fn exponent_vectors(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    if dim == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..=degree {
        for mut rest in exponent_vectors(dim - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn random_polynomial_field(dim: usize, degree: usize, seed: u64) -> PolynomialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let monomials = exponent_vectors(dim, degree);
    let terms = (0..dim)
        .map(|_| {
            monomials
                .iter()
                .map(|e| (rng.gen_range(-1.0..=1.0), e.clone()))
                .collect()
        })
        .collect();
    PolynomialField {
        dim,
        seed,
        terms,
        gram: Gram::Identity(dim),
    }
}

impl AutonomousField for PolynomialField {
    fn field<F: Field>(&self, u: &[F]) -> Result<Vec<F>, ProblemError> {
        check_dim(self.dim, u.len())?;
        Ok(self
            .terms
            .iter()
            .map(|comp| {
                comp.iter().fold(F::lift_zero(), |acc, (coef, exps)| {
                    let mono = exps
                        .iter()
                        .zip(u)
                        .fold(F::lift(*coef), |m, (&e, x)| m * ipow(x, e));
                    acc + mono
                })
            })
            .collect())
    }
}

autonomous_problem!(
    PolynomialField,
    |p: &PolynomialField| format!("poly{}:{}", p.dim, p.seed),
    false,
    false,
    |p: &PolynomialField| p.dim,
    |p: &PolynomialField| {
        let mut u = vec![0.0; p.dim];
        u[0] = 1.0;
        u
    }
);

/// Periodic central-difference advection `u′ = −sin(t²) D u` on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advection {
    m: usize,
    dx: Rational,
    gram: Gram,
}

pub fn advection_sin_t2(m: usize) -> Result<Advection, ProblemError> {
    if m < 4 {
        return Err(ProblemError::InvalidParameter(format!(
            "advection grid needs at least 4 points, got {m}"
        )));
    }
    let dx = rational::rat(2, m as i64);
    Ok(Advection {
        m,
        gram: Gram::Diagonal(vec![dx.clone(); m]),
        dx,
    })
}

impl Advection {
    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> &Rational {
        &self.dx
    }

    /// `xᵢ = −1 + iΔx`.
    pub fn grid(&self) -> Vec<f64> {
        let dx = rational::to_f64(&self.dx);
        (0..self.m).map(|i| -1.0 + i as f64 * dx).collect()
    }

    /// Entries of the central-difference matrix `D`.
    pub fn difference_matrix(&self) -> Vec<Vec<Rational>> {
        let m = self.m;
        let h = &self.dx * int(2);
        let mut d = vec![vec![int(0); m]; m];
        for (i, row) in d.iter_mut().enumerate() {
            row[(i + 1) % m] = int(1) / &h;
            row[(i + m - 1) % m] = int(-1) / &h;
        }
        d
    }
}

impl Problem for Advection {
    fn name(&self) -> String {
        format!("advection{}", self.m)
    }
    fn dim(&self) -> usize {
        self.m
    }
    fn gram(&self) -> &Gram {
        &self.gram
    }
    fn semibounded(&self) -> bool {
        true
    }
    fn conservative(&self) -> bool {
        true
    }
    fn initial_state(&self) -> Vec<f64> {
        self.grid()
            .iter()
            .map(|x| (std::f64::consts::PI * x).sin())
            .collect()
    }
    fn rhs<T: Scalar>(&self, t: T, u: &[T], out: &mut [T]) -> Result<(), ProblemError> {
        check_dim(self.m, u.len())?;
        let m = self.m;
        let scale = -(t * t).sin() / (T::from_rational(&self.dx) * T::lift(2.0));
        for i in 0..m {
            out[i] = scale * (u[(i + 1) % m] - u[(i + m - 1) % m]);
        }
        Ok(())
    }
}

/// `u′ = sin(t) J u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinRotation {
    gram: Gram,
}

pub fn rotation_sin() -> SinRotation {
    SinRotation {
        gram: Gram::Identity(2),
    }
}

impl SinRotation {
    /// `L(t)` as a row-major 2×2 matrix.
    pub fn operator(&self, t: f64) -> [[f64; 2]; 2] {
        let s = t.sin();
        [[0.0, -s], [s, 0.0]]
    }
}

impl Problem for SinRotation {
    fn name(&self) -> String {
        "sinrot".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn gram(&self) -> &Gram {
        &self.gram
    }
    fn semibounded(&self) -> bool {
        true
    }
    fn conservative(&self) -> bool {
        true
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }
    fn rhs<T: Scalar>(&self, t: T, u: &[T], out: &mut [T]) -> Result<(), ProblemError> {
        check_dim(2, u.len())?;
        let s = t.sin();
        out[0] = -s * u[1];
        out[1] = s * u[0];
        Ok(())
    }
}

/// Piecewise-linear hat of height `amplitude` around `center`, optionally
/// repeated with the given period.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeCoefficient {
    pub center: f64,
    pub amplitude: f64,
    pub half_width: f64,
    pub period: Option<f64>,
}

impl SpikeCoefficient {
    pub fn value<T: Scalar>(&self, t: T) -> T {
        let center = T::lift(self.center);
        let mut offset = t - center;
        if let Some(p) = self.period {
            let p = T::lift(p);
            offset = offset - p * (offset / p).round();
        }
        let w = T::lift(self.half_width);
        let ramp = T::one() - offset.abs() / w;
        T::lift(self.amplitude) * ramp.max(T::zero())
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.amplitude / self.half_width
    }
}

/// `u′ = λ(t) J u` with a spike `λ` concentrated at one stage time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRotation {
    method: String,
    stage: usize,
    spike: SpikeCoefficient,
    gram: Gram,
}

impl SpikeRotation {
    pub fn spike(&self) -> &SpikeCoefficient {
        &self.spike
    }

    pub fn stage(&self) -> usize {
        self.stage
    }
}

/// Distance from `x` to the nearest integer.
fn distance_to_integer(x: &Rational) -> Rational {
    let f = x - x.floor();
    let g = int(1) - &f;
    f.min(g)
}

/// Builds the spike problem that turns stage `stage` of `tab` into an
/// explicit Euler step of weight `b_stage`.
pub fn spike_rotation(
    tab: &ButcherTableau,
    stage: usize,
    dt: f64,
    eps: f64,
    multi_step: bool,
) -> Result<SpikeRotation, ProblemError> {
    let s = tab.stages();
    if stage >= s {
        return Err(ProblemError::StageOutOfRange { stage, stages: s });
    }
    if !(dt > 0.0 && eps > 0.0 && dt.is_finite() && eps.is_finite()) {
        return Err(ProblemError::InvalidParameter("dt and eps must be positive".into()));
    }
    if tab.b()[stage].is_zero() {
        return Err(ProblemError::NotQuadrature { stage });
    }
    let ck = &tab.c()[stage];
    if tab.c().iter().enumerate().any(|(j, cj)| j != stage && cj == ck) {
        return Err(ProblemError::NodeNotUnique {
            stage,
            node: ck.clone(),
        });
    }
    let mut gap = rational::rat(1, 2);
    for (j, cj) in tab.c().iter().enumerate() {
        if j == stage {
            continue;
        }
        let shift = cj - ck;
        let d = if multi_step {
            if rational::is_integer(&shift) {
                return Err(ProblemError::IntegerShift { stage, other: j });
            }
            distance_to_integer(&shift)
        } else {
            shift.abs()
        };
        gap = gap.min(d);
    }
    let spike = SpikeCoefficient {
        center: rational::to_f64(ck) * dt,
        amplitude: eps,
        half_width: rational::to_f64(&gap) * dt / 2.0,
        period: multi_step.then_some(dt),
    };
    Ok(SpikeRotation {
        method: tab.name().to_string(),
        stage,
        spike,
        gram: Gram::Identity(2),
    })
}

impl Problem for SpikeRotation {
    fn name(&self) -> String {
        format!("spike:{}:{}", self.method, self.stage + 1)
    }
    fn dim(&self) -> usize {
        2
    }
    fn gram(&self) -> &Gram {
        &self.gram
    }
    fn semibounded(&self) -> bool {
        true
    }
    fn conservative(&self) -> bool {
        true
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }
    fn rhs<T: Scalar>(&self, t: T, u: &[T], out: &mut [T]) -> Result<(), ProblemError> {
        check_dim(2, u.len())?;
        let lam = self.spike.value(t);
        out[0] = -lam * u[1];
        out[1] = lam * u[0];
        Ok(())
    }
}

/// Problem names accepted on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSpec {
    /// `spike:<method>:<stage>`, stage 1-based.
    Spike { method: String, stage: usize },
    /// `advection<m>`.
    Advection(usize),
    CubicRotation,
    InverseSquareRotation,
    LinearRotation,
    /// `bushy:<k>`.
    Bushy(usize),
    SinRotation,
}

impl FromStr for ProblemSpec {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ProblemError::Unknown(s.to_string());
        Ok(match s {
            "cubicrot" => ProblemSpec::CubicRotation,
            "invsqrot" => ProblemSpec::InverseSquareRotation,
            "linrot" => ProblemSpec::LinearRotation,
            "sinrot" => ProblemSpec::SinRotation,
            _ => {
                if let Some(m) = s.strip_prefix("advection") {
                    ProblemSpec::Advection(m.parse().map_err(|_| unknown())?)
                } else if let Some(k) = s.strip_prefix("bushy:") {
                    ProblemSpec::Bushy(k.parse().map_err(|_| unknown())?)
                } else if let Some(rest) = s.strip_prefix("spike:") {
                    let (method, stage) = rest.rsplit_once(':').ok_or_else(unknown)?;
                    let stage: usize = stage.parse().map_err(|_| unknown())?;
                    if method.is_empty() || stage == 0 {
                        return Err(unknown());
                    }
                    ProblemSpec::Spike {
                        method: method.to_string(),
                        stage,
                    }
                } else {
                    return Err(unknown());
                }
            }
        })
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Spike { method, stage } => write!(f, "spike:{method}:{stage}"),
            ProblemSpec::Advection(m) => write!(f, "advection{m}"),
            ProblemSpec::CubicRotation => write!(f, "cubicrot"),
            ProblemSpec::InverseSquareRotation => write!(f, "invsqrot"),
            ProblemSpec::LinearRotation => write!(f, "linrot"),
            ProblemSpec::Bushy(k) => write!(f, "bushy:{k}"),
            ProblemSpec::SinRotation => write!(f, "sinrot"),
        }
    }
}

/// Parameters that only the spike family uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeOptions {
    pub dt: f64,
    pub eps: f64,
    pub multi_step: bool,
}

impl ProblemSpec {
    pub fn build(&self, catalog: &Catalog, spike: SpikeOptions) -> Result<CatalogProblem, ProblemError> {
        Ok(match self {
            ProblemSpec::Spike { method, stage } => {
                let tab = catalog
                    .resolve(method)
                    .map_err(|e| ProblemError::Method(e.to_string()))?;
                CatalogProblem::Spike(spike_rotation(
                    &tab,
                    stage - 1,
                    spike.dt,
                    spike.eps,
                    spike.multi_step,
                )?)
            }
            ProblemSpec::Advection(m) => CatalogProblem::Advection(advection_sin_t2(*m)?),
            ProblemSpec::CubicRotation => CatalogProblem::CubicRotation(cubic_rotation()),
            ProblemSpec::InverseSquareRotation => {
                CatalogProblem::InverseSquareRotation(inverse_square_rotation())
            }
            ProblemSpec::LinearRotation => CatalogProblem::LinearRotation(linear_rotation()),
            ProblemSpec::Bushy(k) => CatalogProblem::Bushy(semiinner_bushy(*k)?),
            ProblemSpec::SinRotation => CatalogProblem::SinRotation(rotation_sin()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogProblem {
    Spike(SpikeRotation),
    Advection(Advection),
    CubicRotation(CubicRotation),
    InverseSquareRotation(InverseSquareRotation),
    LinearRotation(LinearRotation),
    Bushy(SemiinnerBushy),
    SinRotation(SinRotation),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            CatalogProblem::Spike($p) => $body,
            CatalogProblem::Advection($p) => $body,
            CatalogProblem::CubicRotation($p) => $body,
            CatalogProblem::InverseSquareRotation($p) => $body,
            CatalogProblem::LinearRotation($p) => $body,
            CatalogProblem::Bushy($p) => $body,
            CatalogProblem::SinRotation($p) => $body,
        }
    };
}

impl Problem for CatalogProblem {
    fn name(&self) -> String {
        dispatch!(self, p => p.name())
    }
    fn dim(&self) -> usize {
        dispatch!(self, p => p.dim())
    }
    fn gram(&self) -> &Gram {
        dispatch!(self, p => p.gram())
    }
    fn semibounded(&self) -> bool {
        dispatch!(self, p => p.semibounded())
    }
    fn conservative(&self) -> bool {
        dispatch!(self, p => p.conservative())
    }
    fn initial_state(&self) -> Vec<f64> {
        dispatch!(self, p => p.initial_state())
    }
    fn rhs<T: Scalar>(&self, t: T, u: &[T], out: &mut [T]) -> Result<(), ProblemError> {
        dispatch!(self, p => p.rhs(t, u, out))
    }
}

/// `⟨u, f(t, u)⟩_P`.
pub fn energy_production<P: Problem>(prob: &P, t: f64, u: &[f64]) -> Result<f64, ProblemError> {
    let mut f = vec![0.0; u.len()];
    prob.rhs(t, u, &mut f)?;
    Ok(prob.gram().inner(u, &f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn eval<P: Problem>(p: &P, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        p.rhs(t, u, &mut out).unwrap();
        out
    }

    #[test]
    fn rotation_fields_at_unit_vector() {
        assert_eq!(eval(&cubic_rotation(), 0.0, &[1.0, 0.0]), vec![-0.0, 1.0]);
        assert_eq!(eval(&inverse_square_rotation(), 0.0, &[1.0, 0.0]), vec![-0.0, 1.0]);
        let mut out = [0.0; 2];
        assert_eq!(
            inverse_square_rotation().rhs(0.0, &[0.0, 0.0], &mut out),
            Err(ProblemError::Singular)
        );
    }

    #[test]
    fn oracle_matches_hand_derivative() {
        // f(u) = ‖u‖² J u, f′(u)v = 2⟨u, v⟩ J u + ‖u‖² J v
        let p = cubic_rotation();
        let u = [0.3, -1.2];
        let v = vec![0.7, 0.4];
        let d: Vec<f64> = p.derivative(&u, std::slice::from_ref(&v)).unwrap();
        let uv = 2.0 * (u[0] * v[0] + u[1] * v[1]);
        let r2 = u[0] * u[0] + u[1] * u[1];
        let expected = [-uv * u[1] - r2 * v[1], uv * u[0] + r2 * v[0]];
        for k in 0..2 {
            assert!((d[k] - expected[k]).abs() < 1e-14);
        }
        let depth = vec![vec![1.0, 0.0]; ORACLE_MAX_DEPTH + 1];
        assert!(matches!(
            DifferentialOracle::<f64>::derivative(&p, &u, &depth),
            Err(ProblemError::DepthExceeded { .. })
        ));
    }

    #[test]
    fn g_condition_for_inverse_square_midpoint() {
        // g(u + (Δt/2) f(u)) (1 + Δt²/4 g(u)²) = g(u), g(u) = 1/‖u‖²
        for &(r, dt) in &[(1.0, 0.1), (2.0, 0.5), (0.7, 0.03)] {
            let u = [r, 0.0];
            let f = eval(&inverse_square_rotation(), 0.0, &u);
            let g = |x: &[f64]| 1.0 / (x[0] * x[0] + x[1] * x[1]);
            let y = [u[0] + dt / 2.0 * f[0], u[1] + dt / 2.0 * f[1]];
            let lhs = g(&y) * (1.0 + dt * dt / 4.0 * g(&u).powi(2));
            assert!((lhs - g(&u)).abs() < 1e-14 * g(&u));
        }
    }

    #[test]
    fn conservative_problems_produce_no_energy() {
        let mut rng = rng();
        let problems: Vec<CatalogProblem> = vec![
            CatalogProblem::CubicRotation(cubic_rotation()),
            CatalogProblem::InverseSquareRotation(inverse_square_rotation()),
            CatalogProblem::Bushy(semiinner_bushy(3).unwrap()),
            CatalogProblem::SinRotation(rotation_sin()),
            CatalogProblem::Advection(advection_sin_t2(12).unwrap()),
            CatalogProblem::LinearRotation(linear_rotation()),
        ];
        for p in &problems {
            assert!(p.gram().is_positive_semidefinite());
            for _ in 0..1000 {
                let u: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t = rng.gen_range(-5.0..5.0);
                let f = eval(p, t, &u);
                let norm_u = p.gram().norm_sq(&u);
                let norm_f = f.iter().map(|x| x * x).sum::<f64>().sqrt();
                let prod = p.gram().inner(&u, &f);
                assert!(prod.abs() <= 1e-12 * norm_u.max(1.0) * norm_f.max(1.0), "{}", p.name());
            }
        }
    }

    #[test]
    fn advection_operator_is_skew() {
        for m in [4, 7, 50] {
            let d = advection_sin_t2(m).unwrap().difference_matrix();
            for i in 0..m {
                for j in 0..m {
                    assert!((&d[i][j] + &d[j][i]).is_zero());
                }
            }
        }
        let p = advection_sin_t2(50).unwrap();
        assert_eq!(p.dim(), 50);
        let u = p.initial_state();
        assert!(eval(&p, 0.0, &u).iter().all(|x| *x == 0.0));
        assert!(advection_sin_t2(3).is_err());
    }

    #[test]
    fn sin_rotation_operator() {
        let p = rotation_sin();
        assert_eq!(p.operator(0.0), [[0.0, -0.0], [0.0, 0.0]]);
        let j = p.operator(std::f64::consts::FRAC_PI_2);
        assert_eq!(j, [[0.0, -1.0], [1.0, 0.0]]);
    }

    #[test]
    fn spike_construction() {
        let tab = catalog::ssprk33();
        let p = spike_rotation(&tab, 2, 1e-2, 1e-3, false).unwrap();
        let spike = p.spike();
        assert_eq!(spike.value(0.5 * 1e-2), 1e-3);
        for &c in &[0.0, 1.0] {
            assert_eq!(spike.value(c * 1e-2), 0.0);
        }
        assert!((spike.lipschitz_constant() - 1e-3 / (0.25 * 1e-2)).abs() < 1e-12);

        let multi = spike_rotation(&tab, 2, 1e-2, 1e-3, true).unwrap();
        for n in 0..20 {
            let t0 = n as f64 * 1e-2;
            assert!(multi.spike().value(t0 + 0.5e-2) > 0.999e-3);
            assert_eq!(multi.spike().value(t0), 0.0);
            assert_eq!(multi.spike().value(t0 + 1e-2), 0.0);
        }

        let c4 = catalog::paper_c4s2();
        for k in 0..4 {
            assert!(matches!(
                spike_rotation(&c4, k, 1e-2, 1e-3, false),
                Err(ProblemError::NodeNotUnique { .. })
            ));
        }
        assert!(matches!(
            spike_rotation(&catalog::midpoint(), 0, 1e-2, 1e-3, false),
            Err(ProblemError::NotQuadrature { .. })
        ));
        // c = 0 and c = 1 differ by an integer
        assert!(matches!(
            spike_rotation(&catalog::ssprk33(), 1, 1e-2, 1e-3, true),
            Err(ProblemError::IntegerShift { .. })
        ));
        assert!(spike_rotation(&catalog::midpoint(), 1, 1e-2, 1e-3, true).is_ok());
    }

    #[test]
    fn problem_names_round_trip() {
        for name in ["spike:ssprk33:3", "advection50", "cubicrot", "invsqrot", "bushy:2", "sinrot", "linrot"] {
            let spec: ProblemSpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
        }
        for bad in ["spike:ssprk33", "spike:ssprk33:0", "advection", "bushy:x", "nope"] {
            assert!(bad.parse::<ProblemSpec>().is_err(), "{bad}");
        }
        let opts = SpikeOptions {
            dt: 1e-2,
            eps: 1e-3,
            multi_step: false,
        };
        let cat = Catalog::builtin();
        let p = "spike:ssprk33:3".parse::<ProblemSpec>().unwrap().build(&cat, opts).unwrap();
        assert_eq!(p.name(), "spike:ssprk33:3");
        assert!("spike:paper_c4s2:1".parse::<ProblemSpec>().unwrap().build(&cat, opts).is_err());
    }

    #[test]
    fn random_field_is_deterministic() {
        let a = random_polynomial_field(3, 3, 11);
        let b = random_polynomial_field(3, 3, 11);
        assert_eq!(a, b);
        assert_eq!(a.terms[0].len(), 20);
        assert_ne!(a, random_polynomial_field(3, 3, 12));
    }
}
