//! Finite-difference stencils for first derivatives, their Taylor-moment order
//! check, and conversion of one-step-ahead stencils into explicit recurrences.
//!
//! A stencil approximates
//!
//! ```text
//! ẋ(t_k) ≈ (Σ wᵢ · x(t_{k + offsetᵢ})) / (d · τ)
//! ```
//!
//! with exact rational weights `wᵢ` and scale `d`.

use std::fmt;
use std::sync::OnceLock;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::linalg::Mat;

pub type Ratio = Rational64;

/// Upper bound for the moment loop in [`verify_order`].
pub const MAX_VERIFIED_ORDER: u32 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdError {
    #[error("formula `{0}` is inconsistent: {1}")]
    Inconsistent(String, String),
    #[error("formula `{name}` declares order {declared} but verifies to {verified}")]
    OrderMismatch {
        name: String,
        declared: u32,
        verified: u32,
    },
    #[error("formula `{0}` is not one-step-ahead")]
    NotOneStepAhead(String),
    #[error("unknown formula `{0}`")]
    UnknownFormula(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sampling gap must be positive, got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    /// Uses exactly one future sample, `x_{k+1}`.
    OneStepAhead,
    /// Uses only present and past samples.
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdFormula {
    name: String,
    offsets: Vec<i32>,
    weights: Vec<Ratio>,
    denom: Ratio,
    declared_order: u32,
    kind: StencilKind,
}

fn ints(v: &[i64]) -> Vec<Ratio> {
    v.iter().map(|&w| Ratio::from_integer(w)).collect()
}

impl FdFormula {
    /// Builds a stencil and checks its invariants, including that the declared
    /// order matches the Taylor-moment order.
    pub fn new(
        name: impl Into<String>,
        offsets: Vec<i32>,
        weights: Vec<Ratio>,
        denom: Ratio,
        declared_order: u32,
    ) -> Result<Self, FdError> {
        let name = name.into();
        if offsets.len() != weights.len() || offsets.is_empty() {
            return Err(FdError::Inconsistent(
                name,
                "offsets and weights must be non-empty and aligned".into(),
            ));
        }
        if denom.is_zero() {
            return Err(FdError::Inconsistent(name, "zero denominator".into()));
        }
        let mut sorted = offsets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != offsets.len() {
            return Err(FdError::Inconsistent(name, "repeated offset".into()));
        }
        if offsets.iter().any(|&o| o > 1) {
            return Err(FdError::Inconsistent(
                name,
                "offsets beyond k+1 are not supported".into(),
            ));
        }
        let lead = offsets.iter().position(|&o| o == 1);
        let kind = match lead {
            Some(i) if !weights[i].is_zero() => StencilKind::OneStepAhead,
            Some(_) => {
                return Err(FdError::Inconsistent(
                    name,
                    "offset +1 present with zero weight".into(),
                ))
            }
            None => StencilKind::Backward,
        };
        let f = Self {
            name,
            offsets,
            weights,
            denom,
            declared_order,
            kind,
        };
        let verified = verify_order(&f)?;
        if verified != declared_order {
            return Err(FdError::OrderMismatch {
                name: f.name,
                declared: declared_order,
                verified,
            });
        }
        Ok(f)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn offsets(&self) -> &[i32] {
        &self.offsets
    }

    pub fn weights(&self) -> &[Ratio] {
        &self.weights
    }

    pub fn denom(&self) -> Ratio {
        self.denom
    }

    pub fn declared_order(&self) -> u32 {
        self.declared_order
    }

    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    /// Number of past instants the stencil reaches back, `-min(offset)`.
    pub fn depth(&self) -> usize {
        self.offsets
            .iter()
            .map(|&o| (-o).max(0) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Weights scaled by `1/d` as floats, paired with offsets.
    pub fn float_taps(&self) -> Vec<(i32, f64)> {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(&o, &w)| (o, to_f64(w / self.denom)))
            .collect()
    }

    /// Four-instant backward stencil `(11 x_k − 18 x_{k−1} + 9 x_{k−2} − 2 x_{k−3}) / 6τ`.
    /// Used for coefficient derivatives alongside third-order one-step-ahead stencils;
    /// not part of [`registry`].
    pub fn bwd4() -> Self {
        Self::new(
            "bwd4",
            vec![0, -1, -2, -3],
            ints(&[11, -18, 9, -2]),
            Ratio::from_integer(6),
            3,
        )
        .expect("bwd4 is consistent")
    }
}

impl fmt::Display for FdFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: (", self.name)?;
        for (i, (&o, w)) in self.offsets.iter().zip(&self.weights).enumerate() {
            let mag = w.abs();
            if i == 0 {
                if w.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if w.is_negative() { "-" } else { "+" })?;
            }
            let idx = match o {
                0 => "x_k".to_string(),
                o if o > 0 => format!("x_{{k+{o}}}"),
                o => format!("x_{{k{o}}}"),
            };
            if mag.is_one() {
                write!(f, "{idx}")?;
            } else {
                write!(f, "{mag}·{idx}")?;
            }
        }
        write!(f, ") / ({}τ), order {}", self.denom, self.declared_order)
    }
}

pub(crate) fn to_f64(r: Ratio) -> f64 {
    r.to_f64().expect("rational converts to f64")
}

/// Named stencil set.
#[derive(Debug, Clone)]
pub struct Registry {
    formulas: Vec<FdFormula>,
}

impl Registry {
    pub fn get(&self, name: &str) -> Option<&FdFormula> {
        self.formulas.iter().find(|f| f.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FdFormula> {
        self.formulas.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.formulas.iter().map(|f| f.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }
}

/// The built-in stencils.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        // name, offsets, weights, denominator, order
        type Entry = (&'static str, &'static [i32], &'static [i64], i64, u32);
        let entries: [Entry; 7] = [
            ("euler_fwd", &[1, 0], &[1, -1], 1, 1),
            ("ifd4_a", &[1, 0, -1, -2], &[2, -3, 2, -1], 2, 2),
            ("ifd4_alt", &[1, 0, -1, -2], &[6, -3, -2, -1], 10, 2),
            ("ifd5", &[1, 0, -1, -2, -3], &[8, 1, -6, -5, 2], 18, 3),
            ("ifd4_opt", &[1, 0, -1, -2], &[5, -3, -1, -1], 8, 2),
            ("euler_bwd", &[0, -1], &[1, -1], 1, 1),
            ("bwd3", &[0, -1, -2], &[3, -4, 1], 2, 2),
        ];
        let formulas = entries
            .iter()
            .map(|&(name, offs, w, d, p)| {
                FdFormula::new(name, offs.to_vec(), ints(w), Ratio::from_integer(d), p)
                    .unwrap_or_else(|e| panic!("built-in formula {name}: {e}"))
            })
            .collect();
        Registry { formulas }
    })
}

/// Registry lookup by name.
pub fn lookup(name: &str) -> Result<FdFormula, FdError> {
    registry()
        .get(name)
        .cloned()
        .ok_or_else(|| FdError::UnknownFormula(name.to_string()))
}

/// Backward stencil whose order matches `order`: Euler backward, three-instant,
/// or four-instant backward.
pub fn backward_for_order(order: u32) -> FdFormula {
    match order {
        0 | 1 => lookup("euler_bwd").unwrap(),
        2 => lookup("bwd3").unwrap(),
        _ => FdFormula::bwd4(),
    }
}

/// Taylor-moment truncation order: the largest `p` such that the stencil
/// differentiates every polynomial of degree `<= p` exactly, capped at
/// [`MAX_VERIFIED_ORDER`].
pub fn verify_order(f: &FdFormula) -> Result<u32, FdError> {
    let moment = |q: u32| -> Ratio {
        f.offsets
            .iter()
            .zip(&f.weights)
            .map(|(&o, &w)| w * Ratio::from_integer(i64::from(o).pow(q)))
            .fold(Ratio::zero(), |a, b| a + b)
    };
    if !moment(0).is_zero() {
        return Err(FdError::Inconsistent(
            f.name.clone(),
            format!("weights sum to {}", moment(0)),
        ));
    }
    if moment(1) != f.denom {
        return Err(FdError::Inconsistent(
            f.name.clone(),
            format!("first moment {} differs from scale {}", moment(1), f.denom),
        ));
    }
    let mut p = 1;
    for q in 2..=MAX_VERIFIED_ORDER {
        if moment(q).is_zero() {
            p = q;
        } else {
            break;
        }
    }
    Ok(p)
}

/// Applies the stencil entrywise: `(Σ wᵢ samplesᵢ) / (d τ)`.
pub fn apply(f: &FdFormula, samples: &[&Mat], tau: f64) -> Result<Mat, FdError> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(FdError::InvalidTau(tau));
    }
    if samples.len() != f.offsets.len() {
        return Err(FdError::ShapeMismatch(format!(
            "{} samples for a {}-point stencil",
            samples.len(),
            f.offsets.len()
        )));
    }
    let shape = samples[0].shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(FdError::ShapeMismatch(format!(
            "sample shape {:?} differs from {:?}",
            bad.shape(),
            shape
        )));
    }
    let mut acc = Mat::zeros(shape.0, shape.1);
    for (s, &w) in samples.iter().zip(&f.weights) {
        acc.axpy(to_f64(w), s);
    }
    Ok(acc.scale(1.0 / (to_f64(f.denom) * tau)))
}

/// Scalar convenience form of [`apply`].
pub fn apply_scalar(f: &FdFormula, samples: &[f64], tau: f64) -> Result<f64, FdError> {
    let mats: Vec<Mat> = samples.iter().map(|&v| Mat::column(&[v])).collect();
    let refs: Vec<&Mat> = mats.iter().collect();
    Ok(apply(f, &refs, tau)?.get(0, 0))
}

/// Explicit recurrence obtained by solving a one-step-ahead stencil for `x_{k+1}`:
///
/// ```text
/// x_{k+1} = c·τ·ẋ(t_k) + Σᵢ aᵢ x_{k−i}
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateWeights {
    /// `c`
    pub tau_dot_coeff: Ratio,
    /// `aᵢ` for `x_k, x_{k−1}, …`
    pub history_coeffs: Vec<Ratio>,
}

impl UpdateWeights {
    pub fn history_len(&self) -> usize {
        self.history_coeffs.len()
    }

    pub fn tau_dot_f64(&self) -> f64 {
        to_f64(self.tau_dot_coeff)
    }

    pub fn history_f64(&self) -> Vec<f64> {
        self.history_coeffs.iter().map(|&a| to_f64(a)).collect()
    }

    /// Rebuilds the stencil `(offsets, weights, d)` whose `x_{k+1}` weight is
    /// `lead_weight`. Zero history coefficients are dropped.
    pub fn to_stencil(&self, lead_weight: Ratio) -> (Vec<i32>, Vec<Ratio>, Ratio) {
        let mut offsets = vec![1];
        let mut weights = vec![lead_weight];
        for (lag, &a) in self.history_coeffs.iter().enumerate() {
            if !a.is_zero() {
                offsets.push(-(lag as i32));
                weights.push(-a * lead_weight);
            }
        }
        (offsets, weights, self.tau_dot_coeff * lead_weight)
    }
}

/// Solves a one-step-ahead stencil for the future sample.
pub fn one_step_ahead_update(f: &FdFormula) -> Result<UpdateWeights, FdError> {
    if f.kind != StencilKind::OneStepAhead {
        return Err(FdError::NotOneStepAhead(f.name.clone()));
    }
    let lead_idx = f.offsets.iter().position(|&o| o == 1).unwrap();
    let lead = f.weights[lead_idx];
    let mut history = vec![Ratio::zero(); f.depth() + 1];
    for (&o, &w) in f.offsets.iter().zip(&f.weights) {
        if o <= 0 {
            history[(-o) as usize] = -w / lead;
        }
    }
    Ok(UpdateWeights {
        tau_dot_coeff: f.denom / lead,
        history_coeffs: history,
    })
}
