//! Discrete-time ZNN solvers.
//!
//! Every family follows the same pattern. The continuous model gives a slope
//! `ẏ(t_k)` from present and past data only; a one-step-ahead stencil, solved
//! for the future sample, then turns it into the update
//!
//! ```text
//! y_{k+1} = c·τ·ẏ(t_k) + Σᵢ aᵢ y_{k−i}
//! ```
//!
//! The families differ only in how the slope is formed:
//!
//! * generalized / square inverse: `Ẏ = −λ(YBY − Y) − Y Ḃ Y`
//! * linear system: `A ẋ = −Ȧx + ḃ − λ(Ax − b)`
//! * equality-constrained optimization: `ẏ = −H⁻¹(λh + ∂h/∂t)` on the KKT residual `h`
//!
//! Coefficient derivatives come either from the problem's analytic derivative or
//! from a backward stencil whose order matches the one-step-ahead formula.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fdforms::{self, backward_for_order, FdError, FdFormula, StencilKind, UpdateWeights};
use crate::linalg::{inverse, lu_solve, pinv, LinalgError, Lu, Mat};
use crate::problems::{LinearProblem, MatrixSignal, OptProblem, Problem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Formula(#[from] FdError),
    #[error("history holds {have} iterates, the update needs {need}")]
    HistoryUnderflow { have: usize, need: usize },
    #[error("sample at t={requested} requested while the clock is at t={now}")]
    FutureSample { requested: f64, now: f64 },
    #[error("incompatible problem: {0}")]
    Incompatible(String),
    #[error("problem has no analytic derivative for `{0}`")]
    MissingDerivative(&'static str),
    #[error("iterate became non-finite at step {0}")]
    Diverged(usize),
    #[error("invalid decay parameters: {0}")]
    InvalidDecay(String),
}

impl ModelError {
    /// Singular or rank-deficient coefficients, or a blown-up iterate.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ModelError::Linalg(LinalgError::SingularMatrix { .. })
                | ModelError::Linalg(LinalgError::RankDeficient)
                | ModelError::Diverged(_)
        )
    }
}

/// Decay constant `λ`, sampling gap `τ` and their product `h = τλ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySpec {
    lambda: f64,
    tau: f64,
    h: f64,
}

impl DecaySpec {
    pub fn from_lambda(lambda: f64, tau: f64) -> Result<Self, ModelError> {
        Self::check(lambda, tau)?;
        Ok(Self {
            lambda,
            tau,
            h: tau * lambda,
        })
    }

    /// `λ = h / τ`
    pub fn from_gain(h: f64, tau: f64) -> Result<Self, ModelError> {
        Self::check(h, tau)?;
        Ok(Self {
            lambda: h / tau,
            tau,
            h,
        })
    }

    fn check(v: f64, tau: f64) -> Result<(), ModelError> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ModelError::InvalidDecay(format!(
                "gain must be positive, got {v}"
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(ModelError::InvalidDecay(format!(
                "tau must be positive, got {tau}"
            )));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Tvlin,
    Tvinv,
    Tvpinv,
    Tvopt,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [Self::Tvlin, Self::Tvinv, Self::Tvpinv, Self::Tvopt];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tvlin => "tvlin",
            Self::Tvinv => "tvinv",
            Self::Tvpinv => "tvpinv",
            Self::Tvopt => "tvopt",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown solver `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    Analytic,
    #[default]
    Backward,
}

impl fmt::Display for DerivativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::Backward => "backward",
        })
    }
}

impl FromStr for DerivativeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "backward" => Ok(Self::Backward),
            _ => Err(format!("unknown derivative mode `{s}`")),
        }
    }
}

/// How the warm-up history is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Ground-truth values at every warm-up instant.
    #[default]
    Exact,
    /// Entries uniform in `[-0.5, 0.5]`.
    Random { seed: u64 },
}

/// How `H⁻¹` is applied in the optimization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianInverse {
    /// LU solve at every step.
    #[default]
    Direct,
    /// Track `H(t)⁻¹` with the Euler inverse model running alongside.
    Tracked,
}

#[derive(Debug, Clone)]
struct TrackedInverse {
    x: Mat,
    prev_jacobian: Option<Mat>,
}

/// Read-only view of a problem that refuses samples from the future.
pub struct CausalSampler<'a> {
    problem: &'a Problem,
    now: f64,
    slack: f64,
}

impl<'a> CausalSampler<'a> {
    pub fn new(problem: &'a Problem, now: f64, tau: f64) -> Self {
        Self {
            problem,
            now,
            slack: 1e-9 * tau,
        }
    }

    fn admit(&self, t: f64) -> Result<(), ModelError> {
        if t > self.now + self.slack {
            Err(ModelError::FutureSample {
                requested: t,
                now: self.now,
            })
        } else {
            Ok(())
        }
    }

    fn signal(&self) -> Result<&'a MatrixSignal, ModelError> {
        match self.problem {
            Problem::Inverse(s) => Ok(s),
            _ => Err(ModelError::Incompatible("expected a matrix signal".into())),
        }
    }

    fn linear(&self) -> Result<&'a LinearProblem, ModelError> {
        match self.problem {
            Problem::Linear(p) => Ok(p),
            _ => Err(ModelError::Incompatible("expected a linear system".into())),
        }
    }

    fn opt(&self) -> Result<&'a OptProblem, ModelError> {
        match self.problem {
            Problem::Optimization(p) => Ok(p),
            _ => Err(ModelError::Incompatible(
                "expected an optimization problem".into(),
            )),
        }
    }

    pub fn matrix(&self, t: f64) -> Result<Mat, ModelError> {
        self.admit(t)?;
        Ok(self.signal()?.sample(t))
    }

    pub fn matrix_dot(&self, t: f64) -> Result<Mat, ModelError> {
        self.admit(t)?;
        self.signal()?
            .derivative(t)
            .ok_or(ModelError::MissingDerivative("B(t)"))
    }

    /// `(A(t), b(t))`
    pub fn linear_system(&self, t: f64) -> Result<(Mat, Mat), ModelError> {
        self.admit(t)?;
        let p = self.linear()?;
        Ok((p.a.sample(t), p.b.sample(t)))
    }

    pub fn linear_system_dot(&self, t: f64) -> Result<(Mat, Mat), ModelError> {
        self.admit(t)?;
        let p = self.linear()?;
        let a =
            p.a.derivative(t)
                .ok_or(ModelError::MissingDerivative("A(t)"))?;
        let b =
            p.b.derivative(t)
                .ok_or(ModelError::MissingDerivative("b(t)"))?;
        Ok((a, b))
    }

    pub fn kkt_residual(&self, y: &Mat, t: f64) -> Result<Mat, ModelError> {
        self.admit(t)?;
        Ok(self.opt()?.kkt_residual(y, t))
    }

    pub fn kkt_residual_dt(&self, y: &Mat, t: f64) -> Result<Mat, ModelError> {
        self.admit(t)?;
        self.opt()?
            .kkt_residual_dt(y, t)
            .ok_or(ModelError::MissingDerivative("∂h/∂t"))
    }

    pub fn kkt_jacobian(&self, y: &Mat, t: f64) -> Result<Mat, ModelError> {
        self.admit(t)?;
        Ok(self.opt()?.kkt_jacobian(y, t))
    }
}

/// Settings shared by every family.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub formula: FdFormula,
    pub derivative_mode: DerivativeMode,
    pub decay: DecaySpec,
    pub init: InitMode,
    pub jacobian: JacobianInverse,
}

impl RunSettings {
    pub fn new(formula: FdFormula, decay: DecaySpec) -> Self {
        Self {
            formula,
            derivative_mode: DerivativeMode::Backward,
            decay,
            init: InitMode::Exact,
            jacobian: JacobianInverse::Direct,
        }
    }
}

/// Stepper state for one solver run.
#[derive(Debug, Clone)]
pub struct ZnnRun {
    solver: SolverKind,
    problem: Problem,
    settings: RunSettings,
    update: UpdateWeights,
    tau_dot: f64,
    history_weights: Vec<f64>,
    backward: Option<FdFormula>,
    /// newest first: `y_k, y_{k−1}, …`
    iterates: VecDeque<Mat>,
    k: usize,
    tracked: Option<TrackedInverse>,
}

impl ZnnRun {
    pub fn new(
        solver: SolverKind,
        problem: Problem,
        settings: RunSettings,
    ) -> Result<Self, ModelError> {
        check_compatible(solver, &problem)?;
        let formula = &settings.formula;
        if formula.kind() != StencilKind::OneStepAhead {
            return Err(FdError::NotOneStepAhead(formula.name().to_string()).into());
        }
        let update = fdforms::one_step_ahead_update(formula)?;
        let backward = match settings.derivative_mode {
            DerivativeMode::Backward => Some(backward_for_order(formula.declared_order())),
            DerivativeMode::Analytic => {
                check_analytic(&problem)?;
                None
            }
        };
        Ok(Self {
            solver,
            problem,
            tau_dot: update.tau_dot_f64(),
            history_weights: update.history_f64(),
            update,
            backward,
            iterates: VecDeque::new(),
            k: 0,
            tracked: None,
            settings,
        })
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn settings(&self) -> &RunSettings {
        &self.settings
    }

    pub fn decay(&self) -> DecaySpec {
        self.settings.decay
    }

    pub fn tau(&self) -> f64 {
        self.settings.decay.tau()
    }

    pub fn update_weights(&self) -> &UpdateWeights {
        &self.update
    }

    /// Backward stencil used for coefficient derivatives, if any.
    pub fn backward_formula(&self) -> Option<&FdFormula> {
        self.backward.as_ref()
    }

    /// Current step index `k`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn time_of(&self, k: usize) -> f64 {
        k as f64 * self.tau()
    }

    /// Index of the first update; iterates `0..=warm_up_index()` are seeded.
    pub fn warm_up_index(&self) -> usize {
        let hist = self.update.history_len() - 1;
        let back = self.backward.as_ref().map_or(0, FdFormula::depth);
        hist.max(back)
    }

    /// Stored iterates, newest first.
    pub fn history(&self) -> impl Iterator<Item = &Mat> {
        self.iterates.iter()
    }

    pub fn current(&self) -> Option<&Mat> {
        self.iterates.front()
    }

    /// Shape of a single iterate.
    pub fn iterate_shape(&self) -> (usize, usize) {
        match &self.problem {
            Problem::Inverse(s) => (s.shape().1, s.shape().0),
            Problem::Linear(p) => (p.a.shape().1, 1),
            Problem::Optimization(p) => (p.n + p.m, 1),
        }
    }

    /// Ground truth at `t`, where one exists.
    pub fn reference(&self, t: f64) -> Result<Option<Mat>, ModelError> {
        Ok(match &self.problem {
            Problem::Inverse(s) => Some(pinv(&s.sample(t))?),
            Problem::Linear(p) => Some(p.solution(t)?),
            Problem::Optimization(p) => p.oracle(t),
        })
    }

    /// Fills the warm-up history `y_0 … y_{k0}` according to the init mode and
    /// returns the seeded values, oldest first.
    pub fn seed(&mut self) -> Result<Vec<Mat>, ModelError> {
        let k0 = self.warm_up_index();
        let mut values = Vec::with_capacity(k0 + 1);
        match self.settings.init {
            InitMode::Exact => {
                for j in 0..=k0 {
                    values.push(self.exact_value(self.time_of(j))?);
                }
            }
            InitMode::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (r, c) = self.iterate_shape();
                for _ in 0..=k0 {
                    values.push(Mat::from_fn(r, c, |_, _| rng.gen_range(-0.5..0.5)));
                }
            }
        }
        self.seed_with(values.clone())?;
        Ok(values)
    }

    /// Seeds the history with explicit iterates `y_0 … y_{k0}` (oldest first).
    pub fn seed_with(&mut self, values: Vec<Mat>) -> Result<(), ModelError> {
        let need = self.warm_up_index() + 1;
        if values.len() < need {
            return Err(ModelError::HistoryUnderflow {
                have: values.len(),
                need,
            });
        }
        let shape = self.iterate_shape();
        if let Some(bad) = values.iter().find(|v| v.shape() != shape) {
            return Err(LinalgError::ShapeMismatch(format!(
                "seed of shape {:?}, expected {:?}",
                bad.shape(),
                shape
            ))
            .into());
        }
        self.k = values.len() - 1;
        self.iterates = values.into_iter().rev().collect();
        self.iterates.truncate(self.depth());
        self.tracked = None;
        Ok(())
    }

    fn depth(&self) -> usize {
        self.update.history_len()
    }

    fn exact_value(&self, t: f64) -> Result<Mat, ModelError> {
        match &self.problem {
            Problem::Optimization(p) => match p.oracle(t) {
                Some(y) => Ok(y),
                None => newton_kkt(p, t),
            },
            _ => Ok(self
                .reference(t)?
                .expect("inverse and linear problems have references")),
        }
    }

    /// Advances one step, returning `y_{k+1}`. Only samples at instants `<= t_k`
    /// are visible while the step is formed.
    pub fn step(&mut self) -> Result<&Mat, ModelError> {
        let need = self.depth();
        if self.iterates.len() < need || self.k < self.warm_up_index() {
            return Err(ModelError::HistoryUnderflow {
                have: self.iterates.len().min(self.k + 1),
                need: need.max(self.warm_up_index() + 1),
            });
        }
        let slope = match self.solver {
            SolverKind::Tvinv | SolverKind::Tvpinv => self.inverse_slope()?,
            SolverKind::Tvlin => self.linear_slope()?,
            SolverKind::Tvopt => self.opt_slope()?,
        };
        let mut next = slope.scale(self.tau_dot * self.tau());
        for (a, y) in self.history_weights.iter().zip(&self.iterates) {
            if *a != 0.0 {
                next.axpy(*a, y);
            }
        }
        if !next.is_finite() {
            return Err(ModelError::Diverged(self.k + 1));
        }
        self.iterates.push_front(next);
        self.iterates.truncate(need);
        self.k += 1;
        Ok(&self.iterates[0])
    }

    fn sampler(&self) -> CausalSampler<'_> {
        CausalSampler::new(&self.problem, self.time_of(self.k), self.tau())
    }

    /// Times `t_{k+offset}` for each tap of the backward stencil.
    fn backward_times(&self, f: &FdFormula) -> Vec<f64> {
        let t_k = self.time_of(self.k);
        f.offsets()
            .iter()
            .map(|&o| t_k + f64::from(o) * self.tau())
            .collect()
    }

    fn backward_apply(&self, f: &FdFormula, samples: &[Mat]) -> Result<Mat, ModelError> {
        let refs: Vec<&Mat> = samples.iter().collect();
        Ok(fdforms::apply(f, &refs, self.tau())?)
    }

    /// `Ẏ = −λ(YBY − Y) − Y Ḃ Y`
    fn inverse_slope(&self) -> Result<Mat, ModelError> {
        let sampler = self.sampler();
        let t_k = self.time_of(self.k);
        let b = sampler.matrix(t_k)?;
        // rank check via the Gram matrix
        Lu::factor(&b.matmul(&b.transpose())).map_err(|_| LinalgError::RankDeficient)?;
        let b_dot = match &self.backward {
            None => sampler.matrix_dot(t_k)?,
            Some(f) => {
                let samples = self
                    .backward_times(f)
                    .into_iter()
                    .map(|t| sampler.matrix(t))
                    .collect::<Result<Vec<_>, _>>()?;
                self.backward_apply(f, &samples)?
            }
        };
        let y = &self.iterates[0];
        let yb = y.matmul(&b);
        let mut slope = &yb.matmul(y) - y;
        slope = slope.scale(-self.decay().lambda());
        slope.axpy(-1.0, &y.matmul(&b_dot).matmul(y));
        Ok(slope)
    }

    /// `ẋ = A⁻¹(−Ȧx + ḃ − λ(Ax − b))`
    fn linear_slope(&self) -> Result<Mat, ModelError> {
        let sampler = self.sampler();
        let t_k = self.time_of(self.k);
        let (a, b) = sampler.linear_system(t_k)?;
        let (a_dot, b_dot) = match &self.backward {
            None => sampler.linear_system_dot(t_k)?,
            Some(f) => {
                let mut a_s = Vec::new();
                let mut b_s = Vec::new();
                for t in self.backward_times(f) {
                    let (a, b) = sampler.linear_system(t)?;
                    a_s.push(a);
                    b_s.push(b);
                }
                (self.backward_apply(f, &a_s)?, self.backward_apply(f, &b_s)?)
            }
        };
        let x = &self.iterates[0];
        let mut err = a.matmul(x);
        err.axpy(-1.0, &b);
        let mut rhs = a_dot.matmul(x).scale(-1.0);
        rhs.axpy(1.0, &b_dot);
        rhs.axpy(-self.decay().lambda(), &err);
        Ok(lu_solve(&a, &rhs)?)
    }

    /// `ẏ = −H⁻¹(λh + ∂h/∂t)`; the time derivative is taken at fixed `y_k`.
    fn opt_slope(&mut self) -> Result<Mat, ModelError> {
        let t_k = self.time_of(self.k);
        let (h, h_t, jac) = {
            let sampler = self.sampler();
            let y = &self.iterates[0];
            let h = sampler.kkt_residual(y, t_k)?;
            let h_t = match &self.backward {
                None => sampler.kkt_residual_dt(y, t_k)?,
                Some(f) => {
                    let samples = self
                        .backward_times(f)
                        .into_iter()
                        .map(|t| sampler.kkt_residual(y, t))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.backward_apply(f, &samples)?
                }
            };
            (h, h_t, sampler.kkt_jacobian(y, t_k)?)
        };
        let mut rhs = h.scale(self.decay().lambda());
        rhs.axpy(1.0, &h_t);
        let slope = match self.settings.jacobian {
            JacobianInverse::Direct => lu_solve(&jac, &rhs)?,
            JacobianInverse::Tracked => {
                let tracked = match self.tracked.take() {
                    Some(t) => t,
                    None => TrackedInverse {
                        x: inverse(&jac)?,
                        prev_jacobian: None,
                    },
                };
                let x = tracked.x;
                let s = x.matmul(&rhs);
                // Euler inverse model with unit gain, predicting H(t_{k+1})⁻¹
                let prev = tracked.prev_jacobian.unwrap_or_else(|| jac.clone());
                let xhx = x.matmul(&jac).matmul(&x);
                let drift = x.matmul(&(&jac - &prev)).matmul(&x);
                let mut next = x.scale(2.0);
                next.axpy(-1.0, &xhx);
                next.axpy(-1.0, &drift);
                self.tracked = Some(TrackedInverse {
                    x: next,
                    prev_jacobian: Some(jac),
                });
                s
            }
        };
        Ok(slope.scale(-1.0))
    }

    /// Error measure of `iterate` taken as the solution at instant `t`:
    /// `‖B Y − I‖_F` for inverses, `‖A x − b‖₂` for linear systems, and
    /// `‖y − y*‖₂` (or `‖h(y, t)‖₂` without an oracle) for optimization.
    pub fn residual(&self, iterate: &Mat, t: f64) -> f64 {
        match &self.problem {
            Problem::Inverse(s) => {
                let b = s.sample(t);
                let mut r = b.matmul(iterate);
                r.axpy(-1.0, &Mat::identity(b.rows()));
                r.fro_norm()
            }
            Problem::Linear(p) => {
                let mut r = p.a.sample(t).matmul(iterate);
                r.axpy(-1.0, &p.b.sample(t));
                r.fro_norm()
            }
            Problem::Optimization(p) => match p.oracle(t) {
                Some(star) => (iterate - &star).fro_norm(),
                None => p.kkt_residual(iterate, t).fro_norm(),
            },
        }
    }
}

fn check_compatible(solver: SolverKind, problem: &Problem) -> Result<(), ModelError> {
    match (solver, problem) {
        (SolverKind::Tvpinv, Problem::Inverse(s)) => {
            let (m, n) = s.shape();
            if m > n {
                return Err(ModelError::Incompatible(format!(
                    "tvpinv needs m <= n, got {m}x{n}"
                )));
            }
        }
        (SolverKind::Tvinv, Problem::Inverse(s)) => {
            let (m, n) = s.shape();
            if m != n {
                return Err(ModelError::Incompatible(format!(
                    "tvinv needs a square matrix, got {m}x{n}"
                )));
            }
        }
        (SolverKind::Tvlin, Problem::Linear(p)) => {
            let (m, n) = p.a.shape();
            if m != n || p.b.shape() != (n, 1) {
                return Err(ModelError::Incompatible(format!(
                    "tvlin needs square A and matching b, got A {m}x{n}, b {:?}",
                    p.b.shape()
                )));
            }
        }
        (SolverKind::Tvopt, Problem::Optimization(p)) => {
            if p.a.shape() != (p.m, p.n) || p.b.shape() != (p.m, 1) {
                return Err(ModelError::Incompatible(
                    "constraint shapes disagree with n, m".into(),
                ));
            }
        }
        (s, _) => {
            return Err(ModelError::Incompatible(format!(
                "solver {s} cannot run this problem"
            )))
        }
    }
    Ok(())
}

fn check_analytic(problem: &Problem) -> Result<(), ModelError> {
    let ok = match problem {
        Problem::Inverse(s) => s.has_derivative(),
        Problem::Linear(p) => p.a.has_derivative() && p.b.has_derivative(),
        Problem::Optimization(p) => {
            p.grad_f_dt.is_some() && p.a.has_derivative() && p.b.has_derivative()
        }
    };
    if ok {
        Ok(())
    } else {
        Err(ModelError::MissingDerivative("problem coefficients"))
    }
}

/// Newton iterations on `h(·, t) = 0`, starting from zero.
fn newton_kkt(p: &OptProblem, t: f64) -> Result<Mat, ModelError> {
    let mut y = Mat::zeros(p.n + p.m, 1);
    for _ in 0..50 {
        let h = p.kkt_residual(&y, t);
        if h.fro_norm() <= 1e-14 {
            break;
        }
        let dy = lu_solve(&p.kkt_jacobian(&y, t), &h)?;
        y.axpy(-1.0, &dy);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdforms::lookup;
    use crate::linalg::fro_norm;
    use crate::problems::{self, example1, example2, static_qp, synthetic_scalar};

    fn settings(name: &str, h: f64, tau: f64) -> RunSettings {
        RunSettings::new(lookup(name).unwrap(), DecaySpec::from_gain(h, tau).unwrap())
    }

    #[test]
    fn decay_spec() {
        let d = DecaySpec::from_gain(0.1, 0.01).unwrap();
        assert!((d.lambda() - 10.0).abs() < 1e-12);
        let d = DecaySpec::from_lambda(10.0, 0.1).unwrap();
        assert_eq!(d.h(), 0.1 * 10.0);
        assert!(DecaySpec::from_lambda(-1.0, 0.1).is_err());
        assert!(DecaySpec::from_gain(0.1, 0.0).is_err());
    }

    #[test]
    fn warm_up_depths() {
        let p = Problem::Inverse(example1());
        let idx = |f: &str, mode| {
            let mut s = settings(f, 0.1, 0.1);
            s.derivative_mode = mode;
            ZnnRun::new(SolverKind::Tvpinv, p.clone(), s)
                .unwrap()
                .warm_up_index()
        };
        assert_eq!(idx("euler_fwd", DerivativeMode::Backward), 1);
        assert_eq!(idx("euler_fwd", DerivativeMode::Analytic), 0);
        assert_eq!(idx("ifd4_a", DerivativeMode::Backward), 2);
        assert_eq!(idx("ifd5", DerivativeMode::Backward), 3);
        assert_eq!(idx("ifd4_opt", DerivativeMode::Backward), 2);
    }

    #[test]
    fn step_before_seed_underflows() {
        let mut run = ZnnRun::new(
            SolverKind::Tvpinv,
            Problem::Inverse(example1()),
            settings("ifd5", 0.1, 0.1),
        )
        .unwrap();
        assert!(matches!(
            run.step(),
            Err(ModelError::HistoryUnderflow { .. })
        ));
        let too_short = vec![Mat::zeros(3, 2); 2];
        assert!(matches!(
            run.seed_with(too_short),
            Err(ModelError::HistoryUnderflow { have: 2, need: 4 })
        ));
    }

    #[test]
    fn incompatible_pairs_are_rejected() {
        let s = || settings("euler_fwd", 0.1, 0.1);
        assert!(ZnnRun::new(SolverKind::Tvinv, Problem::Inverse(example1()), s()).is_err());
        assert!(ZnnRun::new(SolverKind::Tvlin, Problem::Inverse(example2()), s()).is_err());
        assert!(ZnnRun::new(SolverKind::Tvopt, Problem::Linear(synthetic_scalar()), s()).is_err());
        let mut bwd = s();
        bwd.formula = lookup("bwd3").unwrap();
        assert!(matches!(
            ZnnRun::new(SolverKind::Tvinv, Problem::Inverse(example2()), bwd),
            Err(ModelError::Formula(FdError::NotOneStepAhead(_)))
        ));
    }

    #[test]
    fn causal_sampler_refuses_the_future() {
        let p = Problem::Inverse(example1());
        let s = CausalSampler::new(&p, 1.0, 0.1);
        assert!(s.matrix(1.0).is_ok());
        assert!(s.matrix(0.5).is_ok());
        assert!(matches!(
            s.matrix(1.1),
            Err(ModelError::FutureSample { .. })
        ));
        assert!(matches!(
            s.matrix_dot(1.1),
            Err(ModelError::FutureSample { .. })
        ));
    }

    #[test]
    fn constant_inverse_problem_is_a_fixed_point() {
        let b0 = example1().sample(0.0);
        let p = Problem::Inverse(MatrixSignal::constant(b0.clone(), "const"));
        for name in ["euler_fwd", "ifd4_a", "ifd4_alt", "ifd5", "ifd4_opt"] {
            let mut run =
                ZnnRun::new(SolverKind::Tvpinv, p.clone(), settings(name, 0.1, 0.1)).unwrap();
            run.seed().unwrap();
            let y0 = pinv(&b0).unwrap();
            for _ in 0..20 {
                let y = run.step().unwrap().clone();
                assert!(fro_norm(&(&y - &y0)) <= 1e-13, "{name}");
            }
        }
    }

    #[test]
    fn rank_loss_is_reported() {
        let b = Mat::from_rows(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let p = Problem::Inverse(MatrixSignal::constant(b, "rank one"));
        let mut run = ZnnRun::new(SolverKind::Tvpinv, p, settings("euler_fwd", 0.1, 0.1)).unwrap();
        run.seed_with(vec![Mat::zeros(3, 2); 2]).unwrap();
        let err = run.step().unwrap_err();
        assert_eq!(err, ModelError::Linalg(LinalgError::RankDeficient));
        assert!(err.is_numerical());
    }

    #[test]
    fn singular_linear_system_is_reported() {
        let p = Problem::Linear(LinearProblem {
            a: MatrixSignal::constant(Mat::zeros(2, 2), "zero"),
            b: MatrixSignal::constant(Mat::column(&[1.0, 1.0]), "ones"),
            oracle: None,
        });
        let mut run = ZnnRun::new(SolverKind::Tvlin, p, settings("euler_fwd", 0.1, 0.1)).unwrap();
        run.seed_with(vec![Mat::zeros(2, 1); 2]).unwrap();
        assert!(matches!(
            run.step(),
            Err(ModelError::Linalg(LinalgError::SingularMatrix { .. }))
        ));
    }

    #[test]
    fn static_qp_converges_from_zero() {
        for name in ["euler_fwd", "ifd4_opt"] {
            let mut s = settings(name, 0.1, 0.1);
            s.init = InitMode::Exact;
            let mut run =
                ZnnRun::new(SolverKind::Tvopt, Problem::Optimization(static_qp()), s).unwrap();
            let k0 = run.warm_up_index();
            run.seed_with(vec![Mat::zeros(3, 1); k0 + 1]).unwrap();
            for _ in 0..400 {
                run.step().unwrap();
            }
            let y = run.current().unwrap();
            assert!(
                fro_norm(&(y - &Mat::column(&[0.5, 0.5, -1.0]))) < 1e-6,
                "{name}: {y:?}"
            );
        }
    }

    #[test]
    fn tracked_jacobian_inverse_follows_direct() {
        let run_with = |mode| {
            let mut s = settings("ifd4_opt", 0.1, 0.01);
            s.jacobian = mode;
            let mut run = ZnnRun::new(
                SolverKind::Tvopt,
                Problem::Optimization(problems::example_opt()),
                s,
            )
            .unwrap();
            run.seed().unwrap();
            while run.k() < 500 {
                run.step().unwrap();
            }
            let y = run.current().unwrap().clone();
            run.residual(&y, run.time_of(run.k()))
        };
        let direct = run_with(JacobianInverse::Direct);
        let tracked = run_with(JacobianInverse::Tracked);
        assert!(direct < 1e-4, "{direct}");
        assert!(tracked < 1e-3, "{tracked}");
    }

    #[test]
    fn scalar_linear_tracks_solution() {
        let mut s = settings("euler_fwd", 0.1, 0.01);
        s.derivative_mode = DerivativeMode::Analytic;
        let p = synthetic_scalar();
        let mut run = ZnnRun::new(SolverKind::Tvlin, Problem::Linear(p.clone()), s).unwrap();
        run.seed().unwrap();
        for _ in 0..1000 {
            run.step().unwrap();
        }
        let t = run.time_of(run.k());
        let x = run.current().unwrap().get(0, 0);
        assert!((x - p.solution(t).unwrap().get(0, 0)).abs() < 1e-2);
    }

    #[test]
    fn random_seed_is_deterministic() {
        let mk = || {
            let mut s = settings("ifd5", 0.1, 0.1);
            s.init = InitMode::Random { seed: 7 };
            let mut run = ZnnRun::new(SolverKind::Tvinv, Problem::Inverse(example2()), s).unwrap();
            run.seed().unwrap();
            run.history().cloned().collect::<Vec<_>>()
        };
        let a = mk();
        assert_eq!(a, mk());
        assert!(a
            .iter()
            .all(|m| m.as_slice().iter().all(|v| (-0.5..0.5).contains(v))));
    }
}
