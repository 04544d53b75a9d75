//! Characteristic polynomial of a ZNN recurrence and the root-condition
//! (0-stability) verdict.

use std::fmt;

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::fdforms::{to_f64, Ratio, UpdateWeights};
use crate::linalg::{poly_roots, LinalgError, RealPoly};

/// Slack on the unit circle when classifying floating-point roots.
pub const BOUNDARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootInfo {
    pub value: Complex64,
    pub modulus: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub char_poly: RealPoly,
    pub roots: Vec<RootInfo>,
    pub zero_stable: bool,
    /// `P(1) = 0`
    pub consistent: bool,
}

/// Exact coefficients (ascending) of `θᵐ − Σ aᵢ θ^(m−1−i)` for the
/// homogeneous part `x_{k+1} = Σ aᵢ x_{k−i}`.
pub fn characteristic_coefficients(u: &UpdateWeights) -> Vec<Ratio> {
    let m = u.history_len();
    let mut coeffs = vec![Ratio::zero(); m + 1];
    coeffs[m] = Ratio::one();
    for (i, &a) in u.history_coeffs.iter().enumerate() {
        coeffs[m - 1 - i] = -a;
    }
    coeffs
}

pub fn characteristic_polynomial(u: &UpdateWeights) -> RealPoly {
    RealPoly::new(
        characteristic_coefficients(u)
            .into_iter()
            .map(to_f64)
            .collect(),
    )
}

/// Root condition: every root in the closed unit disk, roots on the boundary simple.
pub fn zero_stability(p: &RealPoly) -> Result<StabilityReport, LinalgError> {
    let roots: Vec<RootInfo> = poly_roots(p)?
        .into_iter()
        .map(|r| RootInfo {
            value: r.value,
            modulus: r.value.norm(),
            multiplicity: r.multiplicity,
        })
        .collect();
    let zero_stable = roots.iter().all(|r| {
        r.modulus <= 1.0 + BOUNDARY_TOLERANCE
            && (r.modulus < 1.0 - BOUNDARY_TOLERANCE || r.multiplicity == 1)
    });
    let consistent = p.eval(1.0).abs() <= 1e-12 * p.max_abs_coeff();
    Ok(StabilityReport {
        char_poly: p.clone(),
        roots,
        zero_stable,
        consistent,
    })
}

/// Full analysis of an update recurrence; consistency is decided in exact arithmetic.
pub fn analyze(u: &UpdateWeights) -> Result<StabilityReport, LinalgError> {
    let exact = characteristic_coefficients(u);
    let mut report = zero_stability(&characteristic_polynomial(u))?;
    report.consistent = exact.iter().fold(Ratio::zero(), |a, &c| a + c).is_zero();
    Ok(report)
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "P(θ) = {}", self.char_poly)?;
        writeln!(f, "roots:")?;
        for r in &self.roots {
            let sign = if r.value.im < 0.0 { '-' } else { '+' };
            write!(
                f,
                "  {:.4} {} {:.4}i   |θ| = {:.4}",
                r.value.re,
                sign,
                r.value.im.abs(),
                r.modulus
            )?;
            if r.multiplicity > 1 {
                write!(f, "   (multiplicity {})", r.multiplicity)?;
            }
            writeln!(f)?;
        }
        writeln!(f, "consistent (P(1) = 0): {}", self.consistent)?;
        write!(
            f,
            "0-stable: {}",
            if self.zero_stable { "yes" } else { "no" }
        )
    }
}
