//! Critical decay exponents and cross-section eigenvalues.
//!
//! For the heat operator on a 2-D sector of opening `kappa` the critical
//! vertex exponent is `pi/kappa`. For a constant-coefficient operator the
//! sector maps, under the linear change of variables that canonicalizes the
//! coefficient matrix, onto a sector of a transformed opening `kappa_tilde`,
//! and the exponent becomes `pi/kappa_tilde`. Three independent routes
//! compute `kappa_tilde`:
//!
//! 1. the closed form
//!    `pi − arctan((c̄ cot(κ/2) + b̄)/√det A) − arctan((c̄ cot(κ/2) − b̄)/√det A)`
//!    where `(ā, b̄, c̄)` are the entries of the rotated matrix `Ā = Rα A Rαᵀ`;
//! 2. a sector-measure quadrature
//!    `κ̃ = (det A)^{-1/2} ∫ (v_θᵀ A^{-1} v_θ)^{-1} dθ` over the sector;
//! 3. a geometric construction mapping the edge rays through `B^{-1}` with
//!    `B = sqrt(A)` and summing the image angles.
//!
//! Alongside sit the general-dimension eigenvalue formulas: the exact
//! exponent `−(d−2)/2 + sqrt(Λ + (d−2)²/4)` for the Laplacian, two lower
//! bounds for time-measurable coefficients (the classical
//! `−d/2 + ν sqrt(·)` and its improvement `−(d−2)/2 + sqrt(ν₁/ν₂) sqrt(·)`,
//! which always gains at least 1), and the first Dirichlet eigenvalue of a
//! spherical cap via the Legendre root `P_ν(cos(κ/2)) = 0`.

use crate::geometry::Point2;
use crate::quadrature::{self, QuadratureError};
use crate::specfun::{self, SpecFunError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExponentError {
    #[error("matrix ((a,b),(b,c)) = (({a},{b}),({b},{c})) is not symmetric positive-definite")]
    NotSpd { a: f64, b: f64, c: f64 },
    #[error("opening angle must lie in (0, 2pi), got {0}")]
    InvalidOpening(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no Legendre sign change while scanning degree nu in [{lo}, {hi}]")]
    RootBracketing { lo: f64, hi: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// Symmetric positive-definite 2x2 matrix ((a, b), (b, c)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix2 {
    a: f64,
    b: f64,
    c: f64,
}

impl SpdMatrix2 {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, ExponentError> {
        let det = a * c - b * b;
        if !(a > 0.0 && det > 0.0) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(ExponentError::NotSpd { a, b, c });
        }
        Ok(SpdMatrix2 { a, b, c })
    }

    pub fn identity() -> Self {
        SpdMatrix2 {
            a: 1.0,
            b: 0.0,
            c: 1.0,
        }
    }

    pub fn diagonal(a: f64, c: f64) -> Result<Self, ExponentError> {
        SpdMatrix2::new(a, 0.0, c)
    }

    pub fn entries(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    /// Eigenvalues, smallest first. Both positive for a valid matrix.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a + self.c);
        let half_gap = (0.25 * (self.a - self.c) * (self.a - self.c) + self.b * self.b).sqrt();
        (mean - half_gap, mean + half_gap)
    }

    /// Symmetric positive-definite square root, closed form for 2x2:
    /// `B = (A + sqrt(det A) I) / sqrt(trace A + 2 sqrt(det A))`.
    pub fn sqrt(&self) -> SpdMatrix2 {
        let s = self.det().sqrt();
        let t = (self.trace() + 2.0 * s).sqrt();
        SpdMatrix2 {
            a: (self.a + s) / t,
            b: self.b / t,
            c: (self.c + s) / t,
        }
    }

    pub fn inverse(&self) -> SpdMatrix2 {
        let det = self.det();
        SpdMatrix2 {
            a: self.c / det,
            b: -self.b / det,
            c: self.a / det,
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(self.a * p.x + self.b * p.y, self.b * p.x + self.c * p.y)
    }

    /// v^T A v.
    pub fn quadratic_form(&self, v: Point2) -> f64 {
        self.a * v.x * v.x + 2.0 * self.b * v.x * v.y + self.c * v.y * v.y
    }

    /// Positive scalar multiple (stays SPD).
    pub fn scale(&self, factor: f64) -> SpdMatrix2 {
        SpdMatrix2 {
            a: self.a * factor,
            b: self.b * factor,
            c: self.c * factor,
        }
    }
}

/// Rotated coefficients Ā = Rα A Rαᵀ with Rα = ((cos α, sin α), (−sin α, cos α)).
/// Determinant and trace are preserved; the rotated entries feed the closed
/// form for the transformed opening angle.
pub fn rotate_coefficients(a: &SpdMatrix2, alpha: f64) -> SpdMatrix2 {
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let (a11, a12, a22) = a.entries();
    SpdMatrix2 {
        a: a11 * ca * ca + 2.0 * a12 * sa * ca + a22 * sa * sa,
        b: a12 * (ca * ca - sa * sa) + (a22 - a11) * sa * ca,
        c: a11 * sa * sa - 2.0 * a12 * sa * ca + a22 * ca * ca,
    }
}

fn check_opening(kappa: f64) -> Result<(), ExponentError> {
    if !(kappa > 0.0 && kappa < 2.0 * PI) {
        return Err(ExponentError::InvalidOpening(kappa));
    }
    Ok(())
}

/// Transformed opening angle of the sector `D_{kappa, alpha}` under the
/// change of variables canonicalizing the constant coefficient matrix:
/// closed arctangent form, continuous through `kappa = pi` where the result
/// is `pi` for every matrix.
pub fn kappa_tilde_closed_form(
    a: &SpdMatrix2,
    kappa: f64,
    alpha: f64,
) -> Result<f64, ExponentError> {
    check_opening(kappa)?;
    let bar = rotate_coefficients(a, alpha);
    let (_, b_bar, c_bar) = bar.entries();
    let sqrt_det = a.det().sqrt();
    // cot(kappa/2) is regular on (0, 2pi): sin(kappa/2) > 0 throughout.
    let half = 0.5 * kappa;
    let cot = half.cos() / half.sin();
    Ok(PI - ((c_bar * cot + b_bar) / sqrt_det).atan() - ((c_bar * cot - b_bar) / sqrt_det).atan())
}

/// Transformed opening by sector-measure quadrature
/// `κ̃ = (det A)^{-1/2} ∫_{α−κ/2}^{α+κ/2} (v_θᵀ A^{-1} v_θ)^{-1} dθ`,
/// adaptive Gauss–Kronrod to 1e−12 absolute. Independent oracle for the
/// closed form.
pub fn kappa_tilde_quadrature(
    a: &SpdMatrix2,
    kappa: f64,
    alpha: f64,
) -> Result<f64, ExponentError> {
    check_opening(kappa)?;
    let inv = a.inverse();
    let norm = a.det().sqrt();
    let integrand = move |theta: f64| {
        let v = Point2::new(theta.cos(), theta.sin());
        1.0 / (norm * inv.quadratic_form(v))
    };
    let r = quadrature::integrate(integrand, alpha - 0.5 * kappa, alpha + 0.5 * kappa, 1e-12)?;
    Ok(r.value)
}

/// Unsigned angle between two nonzero vectors, in [0, pi].
fn angle_between(u: Point2, v: Point2) -> f64 {
    u.cross(v).abs().atan2(u.dot(v))
}

/// Transformed opening by the geometric construction: map the two edge rays
/// and the bisector through `B^{-1}` (`B` the symmetric square root) and sum
/// the image angles on either side of the image bisector. Second independent
/// oracle, and the same map the transformed-kernel evaluation uses.
pub fn kappa_tilde_geometric(a: &SpdMatrix2, kappa: f64, alpha: f64) -> Result<f64, ExponentError> {
    check_opening(kappa)?;
    let b_inv = a.sqrt().inverse();
    let lo = b_inv.apply(Point2::from_polar(1.0, alpha - 0.5 * kappa));
    let mid = b_inv.apply(Point2::from_polar(1.0, alpha));
    let hi = b_inv.apply(Point2::from_polar(1.0, alpha + 0.5 * kappa));
    Ok(angle_between(lo, mid) + angle_between(mid, hi))
}

/// Diagonal special case `tan(κ̃/2) = sqrt(ratio) tan(κ/2)` with the branch
/// continuous through `κ = π` (`ratio` = a/c of the diagonal entries).
pub fn kappa_tilde_diagonal_ratio(ratio: f64, kappa: f64) -> Result<f64, ExponentError> {
    check_opening(kappa)?;
    if !(ratio > 0.0) {
        return Err(ExponentError::Precondition(format!(
            "diagonal ratio must be positive, got {ratio}"
        )));
    }
    if kappa == PI {
        return Ok(PI);
    }
    let t = (ratio.sqrt() * (0.5 * kappa).tan()).atan();
    Ok(if kappa < PI {
        2.0 * t
    } else {
        2.0 * PI + 2.0 * t
    })
}

/// Whether an exponent value is exact or only a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentKind {
    Exact,
    LowerBound,
}

/// Which formula produced an exponent value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentFormula {
    /// pi / kappa_tilde for constant coefficients on a 2-D sector
    WedgeClosedForm,
    /// pi / kappa for the heat operator on a 2-D sector
    HeatWedge,
    /// -(d-2)/2 + sqrt(Lambda + (d-2)^2/4) for the Laplacian
    LaplaceBeltrami,
    /// -(d-2)/2 + sqrt(nu1/nu2) sqrt(Lambda + (d-2)^2/4)
    RatioLowerBound,
    /// -d/2 + nu sqrt(Lambda + (d-2)^2/4)
    ClassicalLowerBound,
}

/// A critical exponent value with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentResult {
    pub value: f64,
    pub kind: ExponentKind,
    pub formula: ExponentFormula,
}

/// Uniform parabolicity bounds `0 < nu1 <= nu2` on the coefficient spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicityBounds {
    nu1: f64,
    nu2: f64,
}

impl ParabolicityBounds {
    pub fn new(nu1: f64, nu2: f64) -> Result<Self, ExponentError> {
        if !(nu1 > 0.0 && nu2 >= nu1) {
            return Err(ExponentError::Precondition(format!(
                "need 0 < nu1 <= nu2, got nu1={nu1}, nu2={nu2}"
            )));
        }
        Ok(ParabolicityBounds { nu1, nu2 })
    }

    pub fn nu1(&self) -> f64 {
        self.nu1
    }

    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    pub fn ratio(&self) -> f64 {
        self.nu1 / self.nu2
    }
}

/// First Dirichlet eigenvalue of a cross-section, with bracketing bounds
/// (`lower == upper == lambda` when the value is exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueResult {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Exact critical exponents `pi/kappa_tilde` for constant coefficients on
/// the sector `D_{kappa, alpha}`.
pub fn lambda_c_constant(
    a: &SpdMatrix2,
    kappa: f64,
    alpha: f64,
) -> Result<ExponentResult, ExponentError> {
    let kt = kappa_tilde_closed_form(a, kappa, alpha)?;
    Ok(ExponentResult {
        value: PI / kt,
        kind: ExponentKind::Exact,
        formula: ExponentFormula::WedgeClosedForm,
    })
}

/// Exact critical exponents `pi/kappa` for the heat operator on a 2-D sector.
pub fn lambda_c_heat_2d(kappa: f64) -> Result<ExponentResult, ExponentError> {
    check_opening(kappa)?;
    Ok(ExponentResult {
        value: PI / kappa,
        kind: ExponentKind::Exact,
        formula: ExponentFormula::HeatWedge,
    })
}

/// Exact exponent for the Laplacian in dimension `d >= 2` from the first
/// cross-section eigenvalue: `-(d-2)/2 + sqrt(Lambda + (d-2)^2/4)`.
pub fn lambda_c_laplacian_general(lambda: f64, d: u32) -> Result<ExponentResult, ExponentError> {
    if !(lambda > 0.0) || d < 2 {
        return Err(ExponentError::Precondition(format!(
            "need Lambda > 0 and d >= 2, got Lambda={lambda}, d={d}"
        )));
    }
    let half = 0.5 * (d as f64 - 2.0);
    Ok(ExponentResult {
        value: -half + (lambda + half * half).sqrt(),
        kind: ExponentKind::Exact,
        formula: ExponentFormula::LaplaceBeltrami,
    })
}

/// Improved lower bound for time-measurable coefficients:
/// `-(d-2)/2 + sqrt(nu1/nu2) sqrt(Lambda + (d-2)^2/4)`.
pub fn lambda_lb_improved(
    bounds: &ParabolicityBounds,
    lambda: f64,
    d: u32,
) -> Result<ExponentResult, ExponentError> {
    if !(lambda > 0.0) || d < 2 {
        return Err(ExponentError::Precondition(format!(
            "need Lambda > 0 and d >= 2, got Lambda={lambda}, d={d}"
        )));
    }
    let half = 0.5 * (d as f64 - 2.0);
    Ok(ExponentResult {
        value: -half + bounds.ratio().sqrt() * (lambda + half * half).sqrt(),
        kind: ExponentKind::LowerBound,
        formula: ExponentFormula::RatioLowerBound,
    })
}

/// Classical lower bound `-d/2 + nu sqrt(Lambda + (d-2)^2/4)` with a single
/// parabolicity constant `nu` in (0, 1].
pub fn lambda_lb_previous(nu: f64, lambda: f64, d: u32) -> Result<ExponentResult, ExponentError> {
    if !(nu > 0.0 && nu <= 1.0) || !(lambda > 0.0) || d < 2 {
        return Err(ExponentError::Precondition(format!(
            "need nu in (0,1], Lambda > 0, d >= 2; got nu={nu}, Lambda={lambda}, d={d}"
        )));
    }
    let half = 0.5 * (d as f64 - 2.0);
    Ok(ExponentResult {
        value: -0.5 * d as f64 + nu * (lambda + half * half).sqrt(),
        kind: ExponentKind::LowerBound,
        formula: ExponentFormula::ClassicalLowerBound,
    })
}

/// Gap between the improved and classical lower bounds. Under the
/// compatibility condition `nu <= nu1 <= nu2 <= 1/nu` it equals
/// `1 + (sqrt(nu1/nu2) − nu) sqrt(Lambda + (d−2)²/4)` and is at least 1.
pub fn bound_gap(
    bounds: &ParabolicityBounds,
    nu: f64,
    lambda: f64,
    d: u32,
) -> Result<f64, ExponentError> {
    if !(nu <= bounds.nu1() && bounds.nu2() <= 1.0 / nu) {
        return Err(ExponentError::Precondition(format!(
            "need nu <= nu1 <= nu2 <= 1/nu, got nu={nu}, nu1={}, nu2={}",
            bounds.nu1(),
            bounds.nu2()
        )));
    }
    let improved = lambda_lb_improved(bounds, lambda, d)?.value;
    let previous = lambda_lb_previous(nu, lambda, d)?.value;
    Ok(improved - previous)
}

/// First Dirichlet eigenvalue of the arc cross-section of a 2-D sector:
/// `Lambda = pi^2 / kappa^2`. Accepts `kappa` in (0, 2pi]; the slit plane is
/// the closed endpoint.
pub fn first_dirichlet_eigenvalue_arc(kappa: f64) -> Result<EigenvalueResult, ExponentError> {
    if !(kappa > 0.0 && kappa <= 2.0 * PI) {
        return Err(ExponentError::InvalidOpening(kappa));
    }
    let lambda = PI * PI / (kappa * kappa);
    Ok(EigenvalueResult {
        lambda,
        lower: lambda,
        upper: lambda,
    })
}

/// Two-sided bracket for the first Dirichlet eigenvalue of the spherical cap
/// of polar opening `kappa/2`:
/// `1/(2 |log cos(kappa/4)|) <= Lambda <= 4 j0^2 / kappa^2`
/// with `j0` the first zero of the Bessel function J0.
pub fn cap_eigenvalue_bounds(kappa: f64) -> Result<(f64, f64), ExponentError> {
    check_opening(kappa)?;
    let j0 = specfun::bessel_j0_first_zero();
    let lower = 1.0 / (2.0 * (0.25 * kappa).cos().ln().abs());
    let upper = 4.0 * j0 * j0 / (kappa * kappa);
    Ok((lower, upper))
}

/// First Dirichlet eigenvalue of the spherical cap of polar opening
/// `kappa/2`: `Lambda = nu*(nu* + 1)` where `nu*` is the smallest positive
/// root of `P_nu(cos(kappa/2)) = 0` in the degree.
///
/// The degree axis is scanned geometrically on [0.05, 200] for the first
/// sign change, then bisected to 1e-10. Openings below ~0.05 rad push the
/// root past the scan cap and report a bracketing error.
pub fn first_dirichlet_eigenvalue_cap(kappa: f64) -> Result<EigenvalueResult, ExponentError> {
    check_opening(kappa)?;
    let x = (0.5 * kappa).cos();
    let f = |nu: f64| specfun::legendre_p(nu, x);

    const SCAN_LO: f64 = 0.05;
    const SCAN_HI: f64 = 200.0;
    let mut lo = SCAN_LO;
    let mut f_lo = f(lo)?;
    let mut bracket = None;
    while lo < SCAN_HI {
        let hi = (lo * 1.05).min(SCAN_HI);
        let f_hi = f(hi)?;
        if f_lo > 0.0 && f_hi <= 0.0 {
            bracket = Some((lo, hi, f_lo));
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let (mut lo, mut hi, mut f_lo) = bracket.ok_or(ExponentError::RootBracketing {
        lo: SCAN_LO,
        hi: SCAN_HI,
    })?;

    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_lo > 0.0 && f_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let nu_star = 0.5 * (lo + hi);
    let lambda = nu_star * (nu_star + 1.0);
    let (lower, upper) = cap_eigenvalue_bounds(kappa)?;
    Ok(EigenvalueResult {
        lambda,
        lower,
        upper,
    })
}

/// Smallest positive Legendre-degree root for the cap (inverts
/// `Lambda = nu(nu+1)`); exposed for reports.
pub fn cap_degree_root(kappa: f64) -> Result<f64, ExponentError> {
    let r = first_dirichlet_eigenvalue_cap(kappa)?;
    Ok(0.5 * (-1.0 + (1.0 + 4.0 * r.lambda).sqrt()))
}

/// Deterministic generator of random SPD matrices with controlled
/// conditioning: `A = R(phi) diag(e^u, e^{-u}) R(phi)^T e^v`, eigenvalue
/// ratio `e^{2u}` capped by `max_ratio`. Used by the randomized agreement
/// suites.
pub fn random_spd(rng: &mut impl rand::Rng, max_ratio: f64, max_log_scale: f64) -> SpdMatrix2 {
    let phi = rng.gen_range(0.0..PI);
    let u = rng.gen_range(0.0..(0.5 * max_ratio.ln()));
    let v = rng.gen_range(-max_log_scale..max_log_scale);
    let d = SpdMatrix2::diagonal(u.exp(), (-u).exp()).expect("positive diagonal");
    rotate_coefficients(&d, phi).scale(v.exp())
}
