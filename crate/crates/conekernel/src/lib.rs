//! Numerical toolkit for parabolic Green's functions on 2-D wedge domains.
//!
//! The library computes the critical vertex-decay exponents of the Green's
//! function of `∂t − Σ a_ij(t) D_ij` on an angular sector, evaluates the
//! exact Dirichlet heat kernel of the Laplacian on such sectors, estimates
//! kernels for time-dependent coefficients by killed-diffusion Monte Carlo,
//! and checks two-weight Gaussian upper bounds (vertex weight × boundary
//! weight) against kernel data.
//!
//! Module map:
//! - [`geometry`]: wedge/cap descriptors, boundary distances, the R and J weights
//! - [`specfun`]: scaled modified Bessel I, Legendre P of real degree, first J₀ zero
//! - [`quadrature`]: adaptive Gauss–Kronrod integration
//! - [`exponent`]: transformed opening angle κ̃, critical exponents, eigenvalue
//!   formulas and lower bounds
//! - [`wedge`]: exact heat kernels (free plane, half-plane images, wedge series)
//! - [`mc`]: killed Euler–Maruyama density estimation with reproducible streams
//! - [`verify`]: bound evaluation, feasibility constants, power-law exponent fits

// `!(x > 0)` rejects NaN along with the out-of-range values; `x <= 0` would
// silently accept NaN in every validation below.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// frozen reference values in tests keep the full precision of the
// high-precision computation they were copied from
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod exponent;
pub mod geometry;
pub mod mc;
pub mod quadrature;
pub mod specfun;
pub mod verify;
pub mod wedge;

pub use exponent::{EigenvalueResult, ExponentResult, ParabolicityBounds, SpdMatrix2};
pub use geometry::{Point2, SphericalCap3D, Wedge2D, WeightPair};
pub use mc::{DensityEstimate, McConfig, PolarBinning, TimeCoefficients};
pub use verify::{BoundCheckReport, BoundSpec, FitReport, KernelSample};
pub use wedge::SeriesControl;
