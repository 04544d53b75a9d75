//! Benchmark problems: time-varying coefficient signals with analytic
//! derivatives and ground-truth oracles.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{lu_solve, pinv, LinalgError, Mat};

pub type SampleFn = Arc<dyn Fn(f64) -> Mat + Send + Sync>;
/// `(x, t) ↦ value`
pub type StateFn = Arc<dyn Fn(&Mat, f64) -> Mat + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
}

/// A matrix-valued function of time.
#[derive(Clone)]
pub struct MatrixSignal {
    rows: usize,
    cols: usize,
    sample: SampleFn,
    derivative: Option<SampleFn>,
    description: String,
}

impl MatrixSignal {
    pub fn new(
        rows: usize,
        cols: usize,
        sample: impl Fn(f64) -> Mat + Send + Sync + 'static,
        derivative: Option<SampleFn>,
        description: impl Into<String>,
    ) -> Self {
        Self {
            rows,
            cols,
            sample: Arc::new(sample),
            derivative,
            description: description.into(),
        }
    }

    /// Time-invariant signal with zero derivative.
    pub fn constant(value: Mat, description: impl Into<String>) -> Self {
        let (rows, cols) = value.shape();
        let zero = Mat::zeros(rows, cols);
        let v = value.clone();
        Self::new(
            rows,
            cols,
            move |_| v.clone(),
            Some(Arc::new(move |_| zero.clone())),
            description,
        )
    }

    /// This signal held at its value at `t0`.
    pub fn frozen_at(&self, t0: f64) -> Self {
        Self::constant(
            self.sample(t0),
            format!("{} (frozen at t={t0})", self.description),
        )
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn sample(&self, t: f64) -> Mat {
        let m = (self.sample)(t);
        debug_assert_eq!(m.shape(), (self.rows, self.cols));
        m
    }

    pub fn derivative(&self, t: f64) -> Option<Mat> {
        self.derivative.as_ref().map(|d| d(t))
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl fmt::Debug for MatrixSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixSignal")
            .field("shape", &(self.rows, self.cols))
            .field("analytic_derivative", &self.derivative.is_some())
            .field("description", &self.description)
            .finish()
    }
}

/// `min f(x, t)` subject to `A(t) x = b(t)`.
#[derive(Clone)]
pub struct OptProblem {
    pub n: usize,
    pub m: usize,
    /// `∂f/∂x`, n×1
    pub grad_f: StateFn,
    /// `∂²f/∂t∂x`, n×1; needed only for analytic `ḣ_t`
    pub grad_f_dt: Option<StateFn>,
    /// `∂²f/∂x∂xᵀ`, n×n
    pub hess_f: StateFn,
    /// `A(t)`, m×n
    pub a: MatrixSignal,
    /// `b(t)`, m×1
    pub b: MatrixSignal,
    /// `y*(t) = [x*; l*]`, (n+m)×1
    pub oracle: Option<SampleFn>,
    pub description: String,
}

impl OptProblem {
    /// Stacked KKT residual `h(y, t) = [∇ₓf + Aᵀl; Ax − b]`.
    pub fn kkt_residual(&self, y: &Mat, t: f64) -> Mat {
        let x = y.row_range(0, self.n);
        let l = y.row_range(self.n, self.n + self.m);
        let a = self.a.sample(t);
        let mut top = (self.grad_f)(&x, t);
        top.axpy(1.0, &a.transpose().matmul(&l));
        let mut bottom = a.matmul(&x);
        bottom.axpy(-1.0, &self.b.sample(t));
        Mat::vstack(&top, &bottom)
    }

    /// Jacobian `H = [[∇²ₓf, Aᵀ], [A, 0]]`.
    pub fn kkt_jacobian(&self, y: &Mat, t: f64) -> Mat {
        let x = y.row_range(0, self.n);
        let hess = (self.hess_f)(&x, t);
        let a = self.a.sample(t);
        let (n, m) = (self.n, self.m);
        Mat::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => hess.get(i, j),
            (true, false) => a.get(j - n, i),
            (false, true) => a.get(i - n, j),
            (false, false) => 0.0,
        })
    }

    /// Analytic `∂h/∂t` at fixed `y`, when the problem provides the pieces.
    pub fn kkt_residual_dt(&self, y: &Mat, t: f64) -> Option<Mat> {
        let grad_dt = self.grad_f_dt.as_ref()?;
        let a_dot = self.a.derivative(t)?;
        let b_dot = self.b.derivative(t)?;
        let x = y.row_range(0, self.n);
        let l = y.row_range(self.n, self.n + self.m);
        let mut top = grad_dt(&x, t);
        top.axpy(1.0, &a_dot.transpose().matmul(&l));
        let mut bottom = a_dot.matmul(&x);
        bottom.axpy(-1.0, &b_dot);
        Some(Mat::vstack(&top, &bottom))
    }

    pub fn oracle(&self, t: f64) -> Option<Mat> {
        self.oracle.as_ref().map(|o| o(t))
    }

    /// `‖A(t)x − b(t)‖₂`
    pub fn feasibility(&self, y: &Mat, t: f64) -> f64 {
        let x = y.row_range(0, self.n);
        let mut r = self.a.sample(t).matmul(&x);
        r.axpy(-1.0, &self.b.sample(t));
        r.fro_norm()
    }

    /// The same problem with every time-varying piece held at `t0`.
    pub fn frozen_at(&self, t0: f64) -> Self {
        let grad = self.grad_f.clone();
        let hess = self.hess_f.clone();
        let oracle = self.oracle.as_ref().map(|o| {
            let y = o(t0);
            Arc::new(move |_| y.clone()) as SampleFn
        });
        let n = self.n;
        Self {
            n,
            m: self.m,
            grad_f: Arc::new(move |x, _| grad(x, t0)),
            grad_f_dt: Some(Arc::new(move |_, _| Mat::zeros(n, 1))),
            hess_f: Arc::new(move |x, _| hess(x, t0)),
            a: self.a.frozen_at(t0),
            b: self.b.frozen_at(t0),
            oracle,
            description: format!("{} (frozen at t={t0})", self.description),
        }
    }
}

impl fmt::Debug for OptProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OptProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("description", &self.description)
            .finish()
    }
}

/// A time-varying linear system `A(t) x = b(t)`.
#[derive(Clone)]
pub struct LinearProblem {
    pub a: MatrixSignal,
    pub b: MatrixSignal,
    /// Closed-form `x*(t)`; otherwise the solution of `A(t)x = b(t)` is used.
    pub oracle: Option<SampleFn>,
}

impl LinearProblem {
    pub fn solution(&self, t: f64) -> Result<Mat, LinalgError> {
        match &self.oracle {
            Some(o) => Ok(o(t)),
            None => lu_solve(&self.a.sample(t), &self.b.sample(t)),
        }
    }

    pub fn frozen_at(&self, t0: f64) -> Self {
        Self {
            a: self.a.frozen_at(t0),
            b: self.b.frozen_at(t0),
            oracle: None,
        }
    }
}

impl fmt::Debug for LinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearProblem")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("closed_form_oracle", &self.oracle.is_some())
            .finish()
    }
}

/// Any benchmark problem, grouped by the solver family that consumes it.
#[derive(Clone, Debug)]
pub enum Problem {
    /// Full-row-rank `B(t)` for generalized (or square) inverse tracking.
    Inverse(MatrixSignal),
    Linear(LinearProblem),
    Optimization(OptProblem),
}

impl Problem {
    pub fn frozen_at(&self, t0: f64) -> Self {
        match self {
            Problem::Inverse(s) => Problem::Inverse(s.frozen_at(t0)),
            Problem::Linear(p) => Problem::Linear(p.frozen_at(t0)),
            Problem::Optimization(p) => Problem::Optimization(p.frozen_at(t0)),
        }
    }
}

/// Problem names the CLI understands.
pub const PROBLEM_NAMES: [&str; 5] = ["example1", "example2", "example_opt", "scalar", "static_qp"];

pub fn by_name(name: &str) -> Result<Problem, ProblemError> {
    Ok(match name {
        "example1" => Problem::Inverse(example1()),
        "example2" => Problem::Inverse(example2()),
        "example_opt" => Problem::Optimization(example_opt()),
        "scalar" => Problem::Linear(synthetic_scalar()),
        "static_qp" => Problem::Optimization(static_qp()),
        other => return Err(ProblemError::UnknownProblem(other.to_string())),
    })
}

/// Horizon used when a run does not set one.
pub fn default_horizon(name: &str) -> f64 {
    match name {
        "example_opt" | "static_qp" => 10.0,
        _ => 30.0,
    }
}

/// 2×3 full-row-rank signal
/// `[[sin 0.5t, cos 0.1t, −sin 0.1t], [−cos 0.1t, sin 0.1t, cos 0.1t]]`.
pub fn example1() -> MatrixSignal {
    MatrixSignal::new(
        2,
        3,
        |t| {
            let (s5, s1, c1) = ((0.5 * t).sin(), (0.1 * t).sin(), (0.1 * t).cos());
            Mat::from_rows(&[[s5, c1, -s1], [-c1, s1, c1]])
        },
        Some(Arc::new(|t| {
            let (c5, s1, c1) = ((0.5 * t).cos(), (0.1 * t).sin(), (0.1 * t).cos());
            Mat::from_rows(&[
                [0.5 * c5, -0.1 * s1, -0.1 * c1],
                [0.1 * s1, 0.1 * c1, -0.1 * s1],
            ])
        })),
        "example1: 2x3 generalized inverse",
    )
}

/// 2×2 signal `[[sin 0.5t + 2, cos 0.5t], [cos 0.5t, sin 0.5t + 2]]`.
pub fn example2() -> MatrixSignal {
    MatrixSignal::new(
        2,
        2,
        |t| {
            let (s, c) = ((0.5 * t).sin(), (0.5 * t).cos());
            Mat::from_rows(&[[s + 2.0, c], [c, s + 2.0]])
        },
        Some(Arc::new(|t| {
            let (s, c) = ((0.5 * t).sin(), (0.5 * t).cos());
            Mat::from_rows(&[[0.5 * c, -0.5 * s], [-0.5 * s, 0.5 * c]])
        })),
        "example2: 2x2 matrix inverse",
    )
}

/// Analytic inverse of [`example2`] via the adjugate.
pub fn example2_inverse(t: f64) -> Mat {
    let (s, c) = ((0.5 * t).sin(), (0.5 * t).cos());
    let d = s + 2.0;
    let det = d * d - c * c;
    Mat::from_rows(&[[d / det, -c / det], [-c / det, d / det]])
}

/// `min (cos 0.1t + 2)(x₁² + x₂²) + 2 sin t·x₁x₂ + sin t·x₁ + cos t·x₂`
/// subject to `sin 0.2t·x₁ + cos 0.2t·x₂ = cos t`.
pub fn example_opt() -> OptProblem {
    let q = |t: f64| {
        let d = 2.0 * ((0.1 * t).cos() + 2.0);
        let o = 2.0 * t.sin();
        Mat::from_rows(&[[d, o], [o, d]])
    };
    let hess: StateFn = Arc::new(move |_x, t| q(t));
    let grad: StateFn = Arc::new(move |x, t| {
        let mut g = q(t).matmul(x);
        g.axpy(1.0, &Mat::column(&[t.sin(), t.cos()]));
        g
    });
    let grad_dt: StateFn = Arc::new(|x, t| {
        let dd = -0.2 * (0.1 * t).sin();
        let od = 2.0 * t.cos();
        let (x1, x2) = (x.get(0, 0), x.get(1, 0));
        Mat::column(&[dd * x1 + od * x2 + t.cos(), od * x1 + dd * x2 - t.sin()])
    });
    let a = MatrixSignal::new(
        1,
        2,
        |t| Mat::from_rows(&[[(0.2 * t).sin(), (0.2 * t).cos()]]),
        Some(Arc::new(|t| {
            Mat::from_rows(&[[0.2 * (0.2 * t).cos(), -0.2 * (0.2 * t).sin()]])
        })),
        "sin 0.2t x1 + cos 0.2t x2",
    );
    let b = MatrixSignal::new(
        1,
        1,
        |t| Mat::column(&[t.cos()]),
        Some(Arc::new(|t| Mat::column(&[-t.sin()]))),
        "cos t",
    );
    let mut p = OptProblem {
        n: 2,
        m: 1,
        grad_f: grad,
        grad_f_dt: Some(grad_dt),
        hess_f: hess,
        a,
        b,
        oracle: None,
        description: "example_opt: time-varying equality-constrained QP".into(),
    };
    let for_oracle = p.clone();
    p.oracle = Some(Arc::new(move |t| {
        let y0 = Mat::zeros(3, 1);
        let jac = for_oracle.kkt_jacobian(&y0, t);
        let rhs = Mat::column(&[-t.sin(), -t.cos(), t.cos()]);
        lu_solve(&jac, &rhs).expect("KKT matrix is nonsingular")
    }));
    p
}

/// `min xᵀx` subject to `x₁ + x₂ = 1`; KKT point `(1/2, 1/2, −1)`.
pub fn static_qp() -> OptProblem {
    OptProblem {
        n: 2,
        m: 1,
        grad_f: Arc::new(|x, _| x.scale(2.0)),
        grad_f_dt: Some(Arc::new(|_, _| Mat::zeros(2, 1))),
        hess_f: Arc::new(|_, _| Mat::identity(2).scale(2.0)),
        a: MatrixSignal::constant(Mat::from_rows(&[[1.0, 1.0]]), "x1 + x2"),
        b: MatrixSignal::constant(Mat::column(&[1.0]), "1"),
        oracle: Some(Arc::new(|_| Mat::column(&[0.5, 0.5, -1.0]))),
        description: "static_qp: min x'x s.t. x1 + x2 = 1".into(),
    }
}

/// Scalar `(2 + sin t) x = cos t`, solution `cos t / (2 + sin t)`.
pub fn synthetic_scalar() -> LinearProblem {
    LinearProblem {
        a: MatrixSignal::new(
            1,
            1,
            |t| Mat::column(&[2.0 + t.sin()]),
            Some(Arc::new(|t| Mat::column(&[t.cos()]))),
            "2 + sin t",
        ),
        b: MatrixSignal::new(
            1,
            1,
            |t| Mat::column(&[t.cos()]),
            Some(Arc::new(|t| Mat::column(&[-t.sin()]))),
            "cos t",
        ),
        oracle: Some(Arc::new(|t| Mat::column(&[t.cos() / (2.0 + t.sin())]))),
    }
}

/// Ground-truth generalized inverse `B(t)⁺`.
pub fn pinv_oracle(sig: &MatrixSignal, t: f64) -> Result<Mat, LinalgError> {
    pinv(&sig.sample(t))
}
