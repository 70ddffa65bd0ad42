//! Turning kernel data into checks of the two-weight upper bound.
//!
//! The candidate bound has the shape
//!
//! ```text
//! G(τ, x, y) <= N τ^{-d/2} R_x^{λ⁺-1} R_y^{λ⁻-1} J_x J_y exp(-σ|x-y|²/τ)
//! ```
//!
//! with the vertex weights `R` and boundary weights `J` from the geometry
//! module. Over a finite sample the existential constant `N` becomes the
//! measurable quantity `feasible_constant = max G / (RHS with N = 1)`:
//! finite and grid-stable for subcritical exponents, blowing up under grid
//! refinement toward the vertex once `λ⁺` exceeds the critical value. The
//! module also fits the Gaussian rate, the vertex decay exponent (slope of
//! `log G` vs `log|x|`, expected `π/κ`), and the boundary decay exponent
//! (slope of `log G` vs `log ρ(x)`, expected 1), and evaluates the exact
//! kernel of constant-coefficient operators through the canonicalizing
//! change of variables.

use crate::exponent::{self, ExponentError, SpdMatrix2};
use crate::geometry::{GeometryError, Point2, Wedge2D};
use crate::mc::DensityEstimate;
use crate::wedge::{heat_kernel_wedge, KernelError, SeriesControl};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("need at least {need} usable samples, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("bound RHS vanished at a sample with G = {g:.3e} > 0 (tau={tau}, x=({x:?}), y=({y:?})): boundary-cell artifact")]
    BoundaryArtifact {
        tau: f64,
        x: Point2,
        y: Point2,
        g: f64,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
}

/// Parameters of a candidate upper bound. In the two-weight form the `R`
/// exponents are `beta1 = lambda_plus - 1` and `beta2 = lambda_minus - 1`,
/// with one boundary weight `J` per argument.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundSpec {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub sigma: f64,
    /// Multiplicative constant N.
    pub constant: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl BoundSpec {
    /// Two-weight bound with the beta exponents tied to the lambdas.
    pub fn two_weight(lambda_plus: f64, lambda_minus: f64, sigma: f64, constant: f64) -> Self {
        BoundSpec {
            lambda_plus,
            lambda_minus,
            sigma,
            constant,
            beta1: lambda_plus - 1.0,
            beta2: lambda_minus - 1.0,
        }
    }
}

/// Shared prefactor `N τ^{-1} R_x^{λ⁺-1} R_y^{λ⁻-1} exp(-σ|x-y|²/τ)` of the
/// two bound shapes; they differ only in the final pair of weight factors.
fn bound_rhs_common(
    spec: &BoundSpec,
    domain: &Wedge2D,
    tau: f64,
    x: Point2,
    y: Point2,
) -> Result<
    (
        f64,
        crate::geometry::WeightPair,
        crate::geometry::WeightPair,
    ),
    VerifyError,
> {
    let wx = domain.weights(tau, x)?;
    let wy = domain.weights(tau, y)?;
    let gaussian = (-spec.sigma * x.dist_squared(y) / tau).exp();
    let common = spec.constant / tau
        * wx.vertex.powf(spec.lambda_plus - 1.0)
        * wy.vertex.powf(spec.lambda_minus - 1.0)
        * gaussian;
    Ok((common, wx, wy))
}

/// Two-weight RHS:
/// `N τ^{-1} R_x^{λ⁺-1} R_y^{λ⁻-1} J_x J_y exp(-σ|x-y|²/τ)` (d = 2).
pub fn bound_rhs(
    spec: &BoundSpec,
    domain: &Wedge2D,
    tau: f64,
    x: Point2,
    y: Point2,
) -> Result<f64, VerifyError> {
    let (common, wx, wy) = bound_rhs_common(spec, domain, tau, x, y)?;
    Ok(common * wx.boundary * wy.boundary)
}

/// Vertex-weight-only RHS:
/// `N τ^{-1} R_x^{λ⁺} R_y^{λ⁻} exp(-σ|x-y|²/τ)`, computed by literally
/// replacing each boundary weight `J` with the vertex weight `R` in the
/// two-weight product. Since J <= R and multiplication by a nonnegative
/// factor is monotone under IEEE rounding, the two-weight RHS never exceeds
/// this one, exactly, including in floating point.
pub fn bound_rhs_vertex_only(
    spec: &BoundSpec,
    domain: &Wedge2D,
    tau: f64,
    x: Point2,
    y: Point2,
) -> Result<f64, VerifyError> {
    let (common, wx, wy) = bound_rhs_common(spec, domain, tau, x, y)?;
    Ok(common * wx.vertex * wy.vertex)
}

/// One kernel value at a space-time configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSample {
    pub tau: f64,
    pub x: Point2,
    pub y: Point2,
    pub value: f64,
}

/// Outcome of a feasibility scan over a sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheckReport {
    /// max over samples of G / (RHS with N = 1) = smallest N making the
    /// bound hold on this sample.
    pub feasible_constant: f64,
    pub argmax: KernelSample,
    pub n_evaluated: usize,
    pub n_excluded: usize,
}

/// Scan a sample set for the smallest constant making the bound hold.
/// `spec.constant` is ignored (the scan normalizes to N = 1). Samples whose
/// kernel value sits below 1e-14 of the sample maximum are excluded as
/// floating-point boundary artifacts.
pub fn check_upper_bound(
    samples: &[KernelSample],
    spec: &BoundSpec,
    domain: &Wedge2D,
) -> Result<BoundCheckReport, VerifyError> {
    if samples.is_empty() {
        return Err(VerifyError::InsufficientData { need: 1, got: 0 });
    }
    let g_max = samples.iter().fold(0.0f64, |m, s| m.max(s.value));
    let unit = BoundSpec {
        constant: 1.0,
        ..*spec
    };
    let mut best: Option<(f64, KernelSample)> = None;
    let mut n_evaluated = 0usize;
    let mut n_excluded = 0usize;
    for s in samples {
        if s.value < 1e-14 * g_max {
            n_excluded += 1;
            continue;
        }
        let rhs = bound_rhs(&unit, domain, s.tau, s.x, s.y)?;
        if rhs == 0.0 {
            if s.value > 0.0 {
                return Err(VerifyError::BoundaryArtifact {
                    tau: s.tau,
                    x: s.x,
                    y: s.y,
                    g: s.value,
                });
            }
            n_excluded += 1;
            continue;
        }
        n_evaluated += 1;
        let ratio = s.value / rhs;
        if best.as_ref().is_none_or(|(b, _)| ratio > *b) {
            best = Some((ratio, *s));
        }
    }
    let (feasible_constant, argmax) =
        best.ok_or(VerifyError::InsufficientData { need: 1, got: 0 })?;
    Ok(BoundCheckReport {
        feasible_constant,
        argmax,
        n_evaluated,
        n_excluded,
    })
}

/// Least-squares line fit summary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// (min, max) of the regression abscissa.
    pub window: (f64, f64),
    pub n_points: usize,
}

fn linear_fit(points: &[(f64, f64)]) -> Result<FitReport, VerifyError> {
    if points.len() < 5 {
        return Err(VerifyError::InsufficientData {
            need: 5,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(VerifyError::Precondition(
            "regression abscissa has zero spread".into(),
        ));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    let window = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |w, p| {
            (w.0.min(p.0), w.1.max(p.0))
        });
    Ok(FitReport {
        slope,
        intercept: mean_y - slope * mean_x,
        r_squared,
        window,
        n_points: points.len(),
    })
}

/// Fit the Gaussian decay rate: regression of `log G + (d/2) log τ` against
/// `|x−y|²/τ`. The slope estimates `−σ`; the free-space kernel gives exactly
/// −1/4.
pub fn fit_gaussian_sigma(samples: &[KernelSample], d: u32) -> Result<FitReport, VerifyError> {
    if let Some(first) = samples.first() {
        if samples
            .iter()
            .any(|s| (s.tau - first.tau).abs() > 1e-12 * first.tau.abs())
        {
            return Err(VerifyError::Precondition(
                "Gaussian-rate fit needs all samples at one tau".into(),
            ));
        }
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.value > 0.0)
        .map(|s| {
            (
                s.x.dist_squared(s.y) / s.tau,
                s.value.ln() + 0.5 * d as f64 * s.tau.ln(),
            )
        })
        .collect();
    linear_fit(&pts)
}

/// Fit the vertex decay exponent: sample the kernel at `x` on the bisector
/// with `|x|` log-spaced across `[1e-3, 1e-1]·sqrt(tau)` and regress
/// `log G` on `log |x|`. For the heat kernel on a wedge of opening `kappa`
/// the slope is `pi/kappa` (within a few permille in this window).
///
/// `y` must be held away from both the vertex and the sampling window:
/// `|y| >= 4 sqrt(tau)`.
pub fn fit_vertex_exponent<F>(
    sampler: F,
    domain: &Wedge2D,
    tau: f64,
    y: Point2,
    n_points: usize,
) -> Result<FitReport, VerifyError>
where
    F: Fn(f64, Point2, Point2) -> Result<f64, KernelError>,
{
    if !(tau > 0.0) {
        return Err(VerifyError::Precondition(format!("tau={tau} must be > 0")));
    }
    if y.norm() < 4.0 * tau.sqrt() {
        return Err(VerifyError::Precondition(format!(
            "y must satisfy |y| >= 4 sqrt(tau); |y|={}, sqrt(tau)={}",
            y.norm(),
            tau.sqrt()
        )));
    }
    let n = n_points.max(12);
    let sqrt_tau = tau.sqrt();
    let (lo, hi) = (1e-3 * sqrt_tau, 1e-1 * sqrt_tau);
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let f = i as f64 / (n - 1) as f64;
        let r = lo * (hi / lo).powf(f);
        let x = domain.point_at(r, 0.5 * domain.kappa());
        let g = sampler(tau, x, y)?;
        if g > 0.0 {
            pts.push((r.ln(), g.ln()));
        }
    }
    linear_fit(&pts)
}

/// Fit the boundary decay exponent: sample the kernel at fixed `|x|`
/// approaching one edge ray, `rho(x)` log-spaced across
/// `[1e-3, 1e-1]·sqrt(tau)`, and regress `log G` on `log rho(x)`. The slope
/// is 1 for the exact kernel at any opening (first-order boundary
/// vanishing); it is not `pi/kappa`.
///
/// The approach circle is placed at `|x| = 4 sqrt(tau)` so the window stays
/// away from the vertex.
pub fn fit_boundary_exponent<F>(
    sampler: F,
    domain: &Wedge2D,
    tau: f64,
    y: Point2,
    n_points: usize,
) -> Result<FitReport, VerifyError>
where
    F: Fn(f64, Point2, Point2) -> Result<f64, KernelError>,
{
    if !(tau > 0.0) {
        return Err(VerifyError::Precondition(format!("tau={tau} must be > 0")));
    }
    let n = n_points.max(12);
    let sqrt_tau = tau.sqrt();
    let radius = 4.0 * sqrt_tau;
    let (lo, hi) = (1e-3 * sqrt_tau, 1e-1 * sqrt_tau);
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let f = i as f64 / (n - 1) as f64;
        let rho = lo * (hi / lo).powf(f);
        // rho = radius * sin(theta) for the angle from the nearest edge
        let theta = (rho / radius).asin();
        let x = domain.point_at(radius, theta);
        let g = sampler(tau, x, y)?;
        if g > 0.0 {
            let actual_rho = domain.distance_to_boundary(x)?;
            pts.push((actual_rho.ln(), g.ln()));
        }
    }
    linear_fit(&pts)
}

/// Exact kernel of a constant-coefficient operator on a sector, through the
/// canonicalizing change of variables: with `B = sqrt(A)`, the kernel equals
/// `det(B)^{-1}` times the wedge kernel on the image sector `B^{-1} D`
/// evaluated at the mapped points. Reduces to the plain wedge kernel when
/// `A` is the identity.
#[derive(Debug, Clone)]
pub struct ConstantCoeffKernel {
    image_domain: Wedge2D,
    b_inv: SpdMatrix2,
    inv_jacobian: f64,
}

impl ConstantCoeffKernel {
    pub fn new(a: &SpdMatrix2, domain: &Wedge2D) -> Result<Self, VerifyError> {
        let kappa_tilde = exponent::kappa_tilde_geometric(a, domain.kappa(), domain.alpha())?;
        let b_inv = a.sqrt().inverse();
        // the image sector spans counterclockwise from the image of the
        // clockwise edge (B^{-1} preserves orientation)
        let lo_edge = Point2::from_polar(1.0, domain.alpha() - 0.5 * domain.kappa());
        let phi_lo = b_inv.apply(lo_edge).angle();
        let image_domain = Wedge2D::new(kappa_tilde, phi_lo + 0.5 * kappa_tilde)?;
        Ok(ConstantCoeffKernel {
            image_domain,
            b_inv,
            inv_jacobian: 1.0 / a.det().sqrt(),
        })
    }

    pub fn image_domain(&self) -> &Wedge2D {
        &self.image_domain
    }

    pub fn map(&self, p: Point2) -> Point2 {
        self.b_inv.apply(p)
    }

    pub fn evaluate(
        &self,
        tau: f64,
        x: Point2,
        y: Point2,
        ctrl: &SeriesControl,
    ) -> Result<f64, KernelError> {
        let g = heat_kernel_wedge(&self.image_domain, tau, self.map(x), self.map(y), ctrl)?;
        Ok(self.inv_jacobian * g)
    }
}

/// Agreement summary between a Monte Carlo histogram and a reference kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgreementReport {
    pub cells_tested: usize,
    pub cells_within: usize,
    pub fraction_within: f64,
    pub worst_z: f64,
    pub z_threshold: f64,
    pub min_count: u64,
}

/// Compare a density estimate against a reference kernel, cell by cell.
/// Cells with fewer than `min_count` hits are skipped; the reference is
/// averaged over each cell with a 3x3 Gauss-Legendre product rule (the
/// histogram estimates the cell mean, not the centroid value).
pub fn compare_density(
    estimate: &DensityEstimate,
    domain: &Wedge2D,
    min_count: u64,
    z_threshold: f64,
    reference: impl Fn(Point2) -> f64,
) -> AgreementReport {
    // 3-point Gauss-Legendre on [-1, 1]
    const NODE: f64 = 0.774_596_669_241_483_4;
    const GL: [(f64, f64); 3] = [(-NODE, 5.0 / 9.0), (0.0, 8.0 / 9.0), (NODE, 5.0 / 9.0)];
    let mut tested = 0usize;
    let mut within = 0usize;
    let mut worst: f64 = 0.0;
    for cell in &estimate.cells {
        if cell.count < min_count || cell.stderr == 0.0 {
            continue;
        }
        let (r0, r1, t0, t1) = (cell.r_lo, cell.r_hi, cell.theta_lo, cell.theta_hi);
        let (hr, ht) = (0.5 * (r1 - r0), 0.5 * (t1 - t0));
        let (cr, ct) = (0.5 * (r1 + r0), 0.5 * (t1 + t0));
        let mut integral = 0.0;
        for (ur, wr) in GL {
            for (ut, wt) in GL {
                let r = cr + hr * ur;
                let th = ct + ht * ut;
                integral += wr * wt * reference(domain.point_at(r, th)) * r;
            }
        }
        let area = 0.5 * (r1 * r1 - r0 * r0) * (t1 - t0);
        let ref_mean = integral * hr * ht / area;
        let z = (cell.value - ref_mean) / cell.stderr;
        tested += 1;
        if z.abs() <= z_threshold {
            within += 1;
        }
        worst = worst.max(z.abs());
    }
    AgreementReport {
        cells_tested: tested,
        cells_within: within,
        fraction_within: if tested > 0 {
            within as f64 / tested as f64
        } else {
            0.0
        },
        worst_z: worst,
        z_threshold,
        min_count,
    }
}

/// Sample grid for the feasibility scans: a bulk block, a vertex leg
/// reaching down to `0.1 · 10^{-level} sqrt(tau)`, and a boundary leg with
/// `rho` over the same range at a fixed radius. Each refinement level
/// extends both legs one decade deeper while keeping the per-decade point
/// density.
pub fn feasibility_samples<F>(
    sampler: F,
    domain: &Wedge2D,
    tau: f64,
    y: Point2,
    level: u32,
) -> Result<Vec<KernelSample>, VerifyError>
where
    F: Fn(f64, Point2, Point2) -> Result<f64, KernelError>,
{
    const PTS_PER_DECADE: usize = 8;
    let sqrt_tau = tau.sqrt();
    let kappa = domain.kappa();
    let mut samples = Vec::new();
    let mut push = |x: Point2, sampler: &F| -> Result<(), VerifyError> {
        let value = sampler(tau, x, y)?;
        samples.push(KernelSample { tau, x, y, value });
        Ok(())
    };

    // bulk block
    for i in 0..6 {
        for j in 1..6 {
            let r = (0.4 + 0.5 * i as f64) * sqrt_tau;
            let theta = kappa * j as f64 / 6.0;
            push(domain.point_at(r, theta), &sampler)?;
        }
    }

    // vertex leg along the bisector: decades [0.1*10^-level, 0.5] * sqrt(tau)
    let decades = 0.69897 + level as f64; // log10(0.5 / (0.1 10^-level))
    let n_vertex = (decades * PTS_PER_DECADE as f64).ceil() as usize;
    let (lo, hi) = (0.1 * 10f64.powi(-(level as i32)) * sqrt_tau, 0.5 * sqrt_tau);
    for i in 0..=n_vertex {
        let f = i as f64 / n_vertex as f64;
        let r = lo * (hi / lo).powf(f);
        push(domain.point_at(r, 0.5 * kappa), &sampler)?;
    }

    // boundary leg at fixed radius 2 sqrt(tau): same rho range
    let radius = 2.0 * sqrt_tau;
    let rho_hi = (0.4 * sqrt_tau).min(0.9 * radius);
    let rho_lo = 0.1 * 10f64.powi(-(level as i32)) * sqrt_tau;
    let n_boundary = ((rho_hi / rho_lo).log10() * PTS_PER_DECADE as f64).ceil() as usize;
    for i in 0..=n_boundary {
        let f = i as f64 / n_boundary as f64;
        let rho = rho_lo * (rho_hi / rho_lo).powf(f);
        let theta = (rho / radius).asin();
        push(domain.point_at(radius, theta), &sampler)?;
    }

    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wedge::{heat_kernel_free, heat_kernel_halfplane};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn exact_sampler(domain: Wedge2D) -> impl Fn(f64, Point2, Point2) -> Result<f64, KernelError> {
        move |tau, x, y| heat_kernel_wedge(&domain, tau, x, y, &SeriesControl::default())
    }

    #[test]
    fn rhs_vanishes_linearly_at_boundary() {
        let w = Wedge2D::symmetric(PI / 2.0).unwrap();
        let spec = BoundSpec::two_weight(1.8, 1.8, 0.125, 1.0);
        let y = w.point_at(1.0, PI / 4.0);
        let r1 = bound_rhs(&spec, &w, 1.0, w.point_at(1.0, 1e-3), y).unwrap();
        let r2 = bound_rhs(&spec, &w, 1.0, w.point_at(1.0, 5e-4), y).unwrap();
        let ratio = r1 / r2;
        assert!((ratio - 2.0).abs() < 0.01, "J factor is linear: {ratio}");
    }

    #[test]
    fn rhs_reduces_to_pure_boundary_form_at_unit_lambdas() {
        let w = Wedge2D::symmetric(PI).unwrap();
        let spec = BoundSpec::two_weight(1.0, 1.0, 0.2, 3.0);
        let x = Point2::new(0.3, 0.1);
        let y = Point2::new(0.5, -0.2);
        let tau = 0.7;
        let rhs = bound_rhs(&spec, &w, tau, x, y).unwrap();
        let wx = w.weights(tau, x).unwrap();
        let wy = w.weights(tau, y).unwrap();
        let expected =
            3.0 / tau * wx.boundary * wy.boundary * (-0.2 * x.dist_squared(y) / tau).exp();
        assert!((rhs - expected).abs() < 1e-15);
    }

    #[test]
    fn two_weight_rhs_never_exceeds_vertex_only_rhs() {
        // J <= R pointwise, so the two-weight form sharpens the vertex-only
        // form for identical constants; equality needs J = R at both points
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for &kappa in &[PI / 2.0, PI, 1.5 * PI] {
            let w = Wedge2D::symmetric(kappa).unwrap();
            let spec = BoundSpec::two_weight(0.9 * PI / kappa, 0.9 * PI / kappa, 0.125, 1.0);
            for _ in 0..200 {
                let tau = rng.gen_range(0.05..4.0);
                let x = w.point_at(
                    rng.gen_range(0.01..3.0),
                    rng.gen_range(0.01 * kappa..0.99 * kappa),
                );
                let y = w.point_at(
                    rng.gen_range(0.01..3.0),
                    rng.gen_range(0.01 * kappa..0.99 * kappa),
                );
                let key = bound_rhs(&spec, &w, tau, x, y).unwrap();
                let loose = bound_rhs_vertex_only(&spec, &w, tau, x, y).unwrap();
                assert!(
                    key <= loose * (1.0 + 1e-12),
                    "kappa={kappa}: key={key:e} > loose={loose:e}"
                );
            }
        }
    }

    #[test]
    fn check_upper_bound_empty_errors() {
        let w = Wedge2D::symmetric(PI).unwrap();
        let spec = BoundSpec::two_weight(0.9, 0.9, 0.125, 1.0);
        assert!(matches!(
            check_upper_bound(&[], &spec, &w),
            Err(VerifyError::InsufficientData { .. })
        ));
    }

    #[test]
    fn subcritical_halfplane_feasibility_is_stable() {
        let w = Wedge2D::symmetric(PI).unwrap();
        let sampler = exact_sampler(w);
        let tau = 1.0;
        let y = w.point_at(4.5, PI / 2.0);
        let spec = BoundSpec::two_weight(0.9, 0.9, 0.125, 1.0);
        let mut prev: Option<f64> = None;
        for level in 0..2 {
            let samples = feasibility_samples(&sampler, &w, tau, y, level).unwrap();
            let rep = check_upper_bound(&samples, &spec, &w).unwrap();
            assert!(rep.feasible_constant.is_finite() && rep.feasible_constant > 0.0);
            if let Some(p) = prev {
                let growth = rep.feasible_constant / p;
                assert!(growth < 2.0, "subcritical growth {growth} >= 2");
            }
            prev = Some(rep.feasible_constant);
        }
    }

    #[test]
    fn supercritical_quarter_wedge_blows_up() {
        let kappa = PI / 2.0;
        let w = Wedge2D::symmetric(kappa).unwrap();
        let sampler = exact_sampler(w);
        let tau = 1.0;
        let y = w.point_at(4.5, 0.5 * kappa);
        let spec = BoundSpec::two_weight(1.2 * PI / kappa, 0.9 * PI / kappa, 0.125, 1.0);
        let mut prev: Option<f64> = None;
        for level in 0..3 {
            let samples = feasibility_samples(&sampler, &w, tau, y, level).unwrap();
            let rep = check_upper_bound(&samples, &spec, &w).unwrap();
            if let Some(p) = prev {
                let growth = rep.feasible_constant / p;
                assert!(
                    growth >= 2.0,
                    "supercritical growth {growth} < 2 at level {level}"
                );
            }
            prev = Some(rep.feasible_constant);
        }
    }

    #[test]
    fn gaussian_fit_recovers_exact_rate_for_free_kernel() {
        // free-space kernel: slope is exactly -1/4
        let y = Point2::new(3.0, 0.0);
        let tau = 0.5;
        let samples: Vec<KernelSample> = (0..20)
            .map(|i| {
                let x = Point2::new(3.0 + 0.1 + 0.15 * i as f64, 0.0);
                KernelSample {
                    tau,
                    x,
                    y,
                    value: heat_kernel_free(tau, &[x.x, x.y], &[y.x, y.y]),
                }
            })
            .collect();
        let fit = fit_gaussian_sigma(&samples, 2).unwrap();
        assert!((fit.slope + 0.25).abs() < 1e-10, "slope {}", fit.slope);
        assert!(fit.r_squared > 0.9999999);
    }

    #[test]
    fn gaussian_fit_halfplane_deep_interior() {
        // image term negligible at rho >= 4 sqrt(tau): slope within [-0.26, -0.24]
        let tau = 0.25;
        let y = Point2::new(4.0, 0.0);
        let samples: Vec<KernelSample> = (0..16)
            .map(|i| {
                let x = Point2::new(4.0 + 0.2 + 0.2 * i as f64, 0.5);
                KernelSample {
                    tau,
                    x,
                    y,
                    value: heat_kernel_halfplane(tau, x, y),
                }
            })
            .collect();
        let fit = fit_gaussian_sigma(&samples, 2).unwrap();
        assert!(
            fit.slope > -0.26 && fit.slope < -0.24,
            "slope {}",
            fit.slope
        );
    }

    #[test]
    fn vertex_exponent_matches_pi_over_kappa() {
        for &kappa in &[PI / 2.0, PI, 1.5 * PI] {
            let w = Wedge2D::symmetric(kappa).unwrap();
            let fit =
                fit_vertex_exponent(exact_sampler(w), &w, 1.0, w.point_at(4.5, 0.5 * kappa), 12)
                    .unwrap();
            let target = PI / kappa;
            assert!(
                (fit.slope - target).abs() / target < 0.05,
                "kappa={kappa}: slope {} vs {target}",
                fit.slope
            );
            assert!(fit.r_squared >= 0.99, "r^2 = {}", fit.r_squared);
        }
    }

    #[test]
    fn boundary_exponent_is_one_not_pi_over_kappa() {
        for &kappa in &[PI, 1.5 * PI] {
            let w = Wedge2D::symmetric(kappa).unwrap();
            let fit =
                fit_boundary_exponent(exact_sampler(w), &w, 0.04, w.point_at(1.0, 0.5 * kappa), 12)
                    .unwrap();
            assert!(
                (fit.slope - 1.0).abs() < 0.05,
                "kappa={kappa}: boundary slope {}",
                fit.slope
            );
            assert!(fit.r_squared >= 0.99);
            if (kappa - PI).abs() > 1e-9 {
                // distinct from the vertex exponent
                assert!((fit.slope - PI / kappa).abs() > 0.2);
            }
        }
    }

    #[test]
    fn vertex_fit_rejects_close_base_point() {
        let w = Wedge2D::symmetric(PI).unwrap();
        let r = fit_vertex_exponent(exact_sampler(w), &w, 1.0, w.point_at(1.0, PI / 2.0), 12);
        assert!(matches!(r, Err(VerifyError::Precondition(_))));
    }

    #[test]
    fn transform_identity_reduces_to_wedge_kernel() {
        let w = Wedge2D::symmetric(PI / 2.0).unwrap();
        let k = ConstantCoeffKernel::new(&SpdMatrix2::identity(), &w).unwrap();
        let ctrl = SeriesControl::default();
        let x = w.point_at(1.0, 0.3);
        let y = w.point_at(0.7, 0.9);
        let direct = heat_kernel_wedge(&w, 0.5, x, y, &ctrl).unwrap();
        let mapped = k.evaluate(0.5, x, y, &ctrl).unwrap();
        assert!(
            (direct - mapped).abs() / direct < 1e-10,
            "direct {direct} vs mapped {mapped}"
        );
    }

    #[test]
    fn transform_respects_vertex_exponent_of_image_angle() {
        // diag(4,1) on the quarter wedge: image opening 2 atan 2,
        // so the vertex slope is pi / (2 atan 2)
        let w = Wedge2D::symmetric(PI / 2.0).unwrap();
        let a = SpdMatrix2::diagonal(4.0, 1.0).unwrap();
        let k = ConstantCoeffKernel::new(&a, &w).unwrap();
        let kt = 2.0 * 2f64.atan();
        assert!((k.image_domain().kappa() - kt).abs() < 1e-10);
        let ctrl = SeriesControl::default();
        let sampler = move |tau: f64, x: Point2, y: Point2| k.evaluate(tau, x, y, &ctrl);
        let fit = fit_vertex_exponent(sampler, &w, 1.0, w.point_at(4.5, PI / 4.0), 12).unwrap();
        let target = PI / kt;
        assert!(
            (fit.slope - target).abs() / target < 0.05,
            "slope {} target {target}",
            fit.slope
        );
    }

    #[test]
    fn transform_mass_is_conserved_through_jacobian() {
        // integrate the transformed kernel over the original sector in
        // original coordinates; the Jacobian factor must reproduce the mass
        // of the standard kernel on the image sector
        let w = Wedge2D::symmetric(PI / 2.0).unwrap();
        let a = SpdMatrix2::diagonal(4.0, 1.0).unwrap();
        let k = ConstantCoeffKernel::new(&a, &w).unwrap();
        let ctrl = SeriesControl::default();
        let tau = 0.04;
        let y = w.point_at(1.0, PI / 4.0);

        // direct mass of the image kernel at the mapped base point
        let image_mass = crate::wedge::kernel_mass(k.image_domain(), tau, k.map(y), &ctrl).unwrap();

        // mass of the transformed kernel in original coordinates: polar
        // integration over the original wedge
        let r_max = y.norm() * 2.0 + 8.0 * tau.sqrt() * 2.0;
        let kappa = w.kappa();
        let radial = |r: f64| -> f64 {
            if r <= 0.0 {
                return 0.0;
            }
            crate::quadrature::integrate(
                |theta| {
                    let theta = theta.clamp(1e-12, kappa - 1e-12);
                    k.evaluate(tau, w.point_at(r, theta), y, &ctrl)
                        .unwrap_or(0.0)
                },
                0.0,
                kappa,
                1e-9,
            )
            .map(|q| q.value * r)
            .unwrap_or(0.0)
        };
        let original_mass = crate::quadrature::integrate(radial, 0.0, r_max, 1e-7)
            .unwrap()
            .value;
        assert!(
            (original_mass - image_mass).abs() < 1e-5,
            "original {original_mass} vs image {image_mass}"
        );
    }

    #[test]
    fn gaussian_fit_rejects_mixed_tau() {
        let y = Point2::new(3.0, 0.0);
        let samples: Vec<KernelSample> = (0..8)
            .map(|i| {
                let x = Point2::new(3.5 + 0.2 * i as f64, 0.0);
                let tau = if i == 3 { 0.6 } else { 0.5 };
                KernelSample {
                    tau,
                    x,
                    y,
                    value: heat_kernel_free(tau, &[x.x, x.y], &[y.x, y.y]),
                }
            })
            .collect();
        assert!(matches!(
            fit_gaussian_sigma(&samples, 2),
            Err(VerifyError::Precondition(_))
        ));
    }

    #[test]
    fn check_upper_bound_flags_vanished_rhs() {
        // a sample so far out that the Gaussian factor underflows to zero
        // while carrying a fake positive kernel value
        let w = Wedge2D::symmetric(PI).unwrap();
        let spec = BoundSpec::two_weight(0.9, 0.9, 0.125, 1.0);
        let y = Point2::new(1.0, 0.0);
        let far = Point2::new(1.0, 1e4);
        let samples = [
            KernelSample {
                tau: 1e-2,
                x: far,
                y,
                value: 1.0,
            },
            KernelSample {
                tau: 1e-2,
                x: Point2::new(1.1, 0.0),
                y,
                value: 1.0,
            },
        ];
        assert!(matches!(
            check_upper_bound(&samples, &spec, &w),
            Err(VerifyError::BoundaryArtifact { .. })
        ));
    }

    #[test]
    fn check_upper_bound_excludes_underflow_samples() {
        let w = Wedge2D::symmetric(PI).unwrap();
        let spec = BoundSpec::two_weight(0.9, 0.9, 0.125, 1.0);
        let y = Point2::new(1.0, 0.0);
        let mk = |x: Point2, value: f64| KernelSample {
            tau: 0.5,
            x,
            y,
            value,
        };
        let samples = [
            mk(Point2::new(1.0, 0.1), 0.1),
            mk(Point2::new(1.2, 0.2), 0.05),
            mk(Point2::new(0.9, -0.1), 1e-17), // below 1e-14 of the max
        ];
        let rep = check_upper_bound(&samples, &spec, &w).unwrap();
        assert_eq!(rep.n_excluded, 1);
        assert_eq!(rep.n_evaluated, 2);
    }

    #[test]
    fn mc_histogram_matches_images_kernel_on_half_plane() {
        use crate::mc::{simulate_killed_density, McConfig, PolarBinning, TimeCoefficients};
        let w = Wedge2D::symmetric(PI).unwrap();
        let coeffs = TimeCoefficients::constant(SpdMatrix2::identity());
        let tau = 0.25;
        let y = w.point_at(1.0, PI / 2.0);
        let cfg = McConfig {
            n_paths: 150_000,
            dt: 0.0025,
            seed: 1414,
            binning: PolarBinning::regular(0.2, 2.0, 8, 0.1 * PI, 0.9 * PI, 8).unwrap(),
            bridge_correction: true,
        };
        let est = simulate_killed_density(&coeffs, &w, 0.0, y, tau, &cfg).unwrap();
        let rep = compare_density(&est, &w, 50, 3.0, |p| heat_kernel_halfplane(tau, p, y));
        assert!(
            rep.fraction_within >= 0.95,
            "{}/{} cells within 3 s.e., worst z {}",
            rep.cells_within,
            rep.cells_tested,
            rep.worst_z
        );
    }

    #[test]
    fn mc_histogram_matches_transformed_kernel_for_constant_coefficients() {
        use crate::mc::{simulate_killed_density, McConfig, PolarBinning, TimeCoefficients};
        let kappa = PI / 2.0;
        let w = Wedge2D::symmetric(kappa).unwrap();
        let a = SpdMatrix2::diagonal(4.0, 1.0).unwrap();
        let reference = ConstantCoeffKernel::new(&a, &w).unwrap();
        let coeffs = TimeCoefficients::constant(a);
        let tau = 0.25;
        let y = w.point_at(1.0, 0.5 * kappa);
        let cfg = McConfig {
            n_paths: 150_000,
            dt: 0.0025,
            seed: 4141,
            binning: PolarBinning::regular(0.2, 2.4, 8, 0.1 * kappa, 0.9 * kappa, 8).unwrap(),
            bridge_correction: true,
        };
        let est = simulate_killed_density(&coeffs, &w, 0.0, y, tau, &cfg).unwrap();
        let ctrl = SeriesControl::default();
        let rep = compare_density(&est, &w, 50, 3.0, |p| {
            reference.evaluate(tau, p, y, &ctrl).unwrap_or(0.0)
        });
        assert!(
            rep.fraction_within >= 0.95,
            "{}/{} cells within 3 s.e., worst z {}",
            rep.cells_within,
            rep.cells_tested,
            rep.worst_z
        );
    }

    #[test]
    fn mc_gaussian_rate_matches_exact_kernel_rate() {
        // fit -sigma on MC cell values along the bisector and compare with
        // the same fit on the exact kernel, in slope-standard-error units
        use crate::mc::{simulate_killed_density, McConfig, PolarBinning, TimeCoefficients};
        let w = Wedge2D::symmetric(PI).unwrap();
        let coeffs = TimeCoefficients::constant(SpdMatrix2::identity());
        let tau = 0.04;
        let y = w.point_at(1.2, PI / 2.0);
        // a single angular bin straddling the bisector; radial bins march
        // outward with rho >= 2 sqrt(tau) throughout
        let cfg = McConfig {
            n_paths: 400_000,
            dt: 0.0004,
            seed: 99,
            binning: PolarBinning::regular(1.2, 2.2, 10, 0.5 * PI - 0.06, 0.5 * PI + 0.06, 1)
                .unwrap(),
            bridge_correction: true,
        };
        let est = simulate_killed_density(&coeffs, &w, 0.0, y, tau, &cfg).unwrap();
        let mc_samples: Vec<KernelSample> = est
            .cells
            .iter()
            .filter(|c| c.count >= 100)
            .map(|c| KernelSample {
                tau,
                x: c.centroid,
                y,
                value: c.value,
            })
            .collect();
        let exact_samples: Vec<KernelSample> = mc_samples
            .iter()
            .map(|s| KernelSample {
                value: heat_kernel_halfplane(tau, s.x, y),
                ..*s
            })
            .collect();
        let mc_fit = fit_gaussian_sigma(&mc_samples, 2).unwrap();
        let exact_fit = fit_gaussian_sigma(&exact_samples, 2).unwrap();

        // residual-based standard error of the MC slope
        let pts: Vec<(f64, f64)> = mc_samples
            .iter()
            .map(|s| (s.x.dist_squared(s.y) / tau, s.value.ln() + tau.ln()))
            .collect();
        let n = pts.len() as f64;
        let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
        let ss_res: f64 = pts
            .iter()
            .map(|&(x, v)| {
                let r = v - (mc_fit.intercept + mc_fit.slope * x);
                r * r
            })
            .sum();
        let slope_se = (ss_res / (n - 2.0) / sxx).sqrt().max(1e-6);
        let z = (mc_fit.slope - exact_fit.slope) / slope_se;
        assert!(
            z.abs() <= 3.0,
            "MC sigma fit {} vs exact {} (z = {z:.2})",
            mc_fit.slope,
            exact_fit.slope
        );
    }
}
