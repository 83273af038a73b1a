//! Coefficient models: ionization rate `a(x, t)`, the nonlocal recombination
//! kernel `b(x, y, z, t)`, their Taylor data along the packet centroid, and
//! the exponential time profiles of the relaxation scenario.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoeffError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Exponential time profiles
///
/// ```text
/// ã(t)   = A1 e^{-t/τa}
/// D̃a(t)  = d1 e^{-t/τd}
/// β(t)   = B2 + (B1 - B2) e^{-t/τb}
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpProfiles {
    pub a1: f64,
    pub tau_a: f64,
    pub d1: f64,
    pub tau_d: f64,
    pub b1: f64,
    pub b2: f64,
    pub tau_b: f64,
}

impl ExpProfiles {
    pub fn new(
        a1: f64,
        tau_a: f64,
        d1: f64,
        tau_d: f64,
        b1: f64,
        b2: f64,
        tau_b: f64,
    ) -> Result<Self, CoeffError> {
        let p = Self {
            a1,
            tau_a,
            d1,
            tau_d,
            b1,
            b2,
            tau_b,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks signs and finiteness. A decreasing recombination amplitude
    /// (`B2 < B1`) is allowed but logged.
    pub fn validate(&self) -> Result<(), CoeffError> {
        let all = [self.a1, self.tau_a, self.d1, self.tau_d, self.b1, self.b2, self.tau_b];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(CoeffError::InvalidParameter("profile parameters must be finite".into()));
        }
        if !(self.tau_a > 0.0 && self.tau_d > 0.0 && self.tau_b > 0.0) {
            return Err(CoeffError::InvalidParameter("time constants must be positive".into()));
        }
        if self.a1 < 0.0 || self.d1 < 0.0 || self.b1 < 0.0 || self.b2 < 0.0 {
            return Err(CoeffError::InvalidParameter(
                "A1, d1, B1, B2 must be non-negative".into(),
            ));
        }
        if self.b2 < self.b1 {
            log::warn!(
                "recombination amplitude decreases in time (B2 = {} < B1 = {})",
                self.b2,
                self.b1
            );
        }
        Ok(())
    }

    /// Ionization rate `ã(t)`; its spatial derivatives vanish in this model.
    pub fn ionization_rate(&self, t: f64) -> f64 {
        self.a1 * (-t / self.tau_a).exp()
    }

    /// `∫_0^t ã`.
    pub fn ionization_integral(&self, t: f64) -> f64 {
        self.a1 * self.tau_a * -(-t / self.tau_a).exp_m1()
    }

    /// Recombination amplitude `β(t)`.
    pub fn recombination_amplitude(&self, t: f64) -> f64 {
        self.b2 + (self.b1 - self.b2) * (-t / self.tau_b).exp()
    }

    /// Diffusion profile `D̃a(t)`; the small parameter `D` multiplies it elsewhere.
    pub fn diffusion_factor(&self, t: f64) -> f64 {
        self.d1 * (-t / self.tau_d).exp()
    }

    /// `∫_0^t D̃a`.
    pub fn diffusion_integral(&self, t: f64) -> f64 {
        self.d1 * self.tau_d * -(-t / self.tau_d).exp_m1()
    }

    /// `∫_{t0}^{t1} D̃a`.
    pub fn diffusion_integral_between(&self, t0: f64, t1: f64) -> f64 {
        self.d1 * self.tau_d * (-t0 / self.tau_d).exp() * -(-(t1 - t0) / self.tau_d).exp_m1()
    }
}

/// Gaussian nonlocality kernel `b̃(r1, r2, t) = β(t) exp[-(|r1|² + |r2|²) / 2ϱ²]`.
///
/// The amplitude `β` is absolute; the kernel is not normalized to unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianKernel {
    pub rho: f64,
}

impl GaussianKernel {
    pub fn new(rho: f64) -> Result<Self, CoeffError> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(CoeffError::InvalidParameter(format!(
                "kernel radius must be positive and finite, got {rho}"
            )));
        }
        Ok(Self { rho })
    }

    /// Single factor `k(r) = exp(-|r|² / 2ϱ²)`.
    pub fn factor(&self, r: &[f64]) -> f64 {
        let r2: f64 = r.iter().map(|v| v * v).sum();
        (-0.5 * r2 / (self.rho * self.rho)).exp()
    }

    /// `b̃(r1, r2)` evaluated directly from the joint exponent.
    pub fn b_tilde(&self, beta: f64, r1: &[f64], r2: &[f64]) -> f64 {
        let s: f64 = r1.iter().chain(r2).map(|v| v * v).sum();
        beta * (-0.5 * s / (self.rho * self.rho)).exp()
    }

    /// Full kernel `b(x, y, z) = b̃(x - y, x - z)`.
    pub fn b(&self, beta: f64, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
        let r1: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let r2: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
        self.b_tilde(beta, &r1, &r2)
    }

    /// Continuous 2D Fourier transform of the factor `k`, as a function of `|k|²`.
    pub fn factor_fourier_2d(&self, k2: f64) -> f64 {
        let r2 = self.rho * self.rho;
        2.0 * std::f64::consts::PI * r2 * (-0.5 * r2 * k2).exp()
    }
}

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTaylor {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl ScalarTaylor {
    pub fn constant(value: f64, n: usize) -> Self {
        Self {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }
}

/// Second-order Taylor data of the kernel `b(x, y, z)` at `y = z = X`.
///
/// Cross blocks follow `hess_xy[(i, j)] = ∂²b / ∂x_i ∂y_j`, so
/// `hess_yx = hess_xyᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorData {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub grad_z: DVector<f64>,
    pub hess_xx: DMatrix<f64>,
    pub hess_yy: DMatrix<f64>,
    pub hess_zz: DMatrix<f64>,
    pub hess_xy: DMatrix<f64>,
    pub hess_xz: DMatrix<f64>,
    pub hess_yz: DMatrix<f64>,
}

impl TaylorData {
    pub fn zeros(n: usize) -> Self {
        let v = DVector::zeros(n);
        let m = DMatrix::zeros(n, n);
        Self {
            value: 0.0,
            grad_x: v.clone(),
            grad_y: v.clone(),
            grad_z: v,
            hess_xx: m.clone(),
            hess_yy: m.clone(),
            hess_zz: m.clone(),
            hess_xy: m.clone(),
            hess_xz: m.clone(),
            hess_yz: m,
        }
    }
}

/// Taylor data of the Gaussian kernel at `(x, X, X)`.
///
/// With `r = x - X` and `b = β exp(-|r|²/ϱ²)`:
///
/// ```text
/// b_x  = -2b r/ϱ²              b_y = b_z = b r/ϱ²
/// b_xx = b (4 r rᵀ/ϱ⁴ - 2I/ϱ²)  b_yy = b_zz = b (r rᵀ/ϱ⁴ - I/ϱ²)
/// b_xy = b_xz = b (I/ϱ² - 2 r rᵀ/ϱ⁴)   b_yz = b r rᵀ/ϱ⁴
/// ```
pub fn kernel_diagonal_taylor(
    kernel: &GaussianKernel,
    beta_t: f64,
    x: &DVector<f64>,
    center: &DVector<f64>,
) -> Result<TaylorData, CoeffError> {
    if x.len() != center.len() {
        return Err(CoeffError::DimensionMismatch {
            expected: center.len(),
            got: x.len(),
        });
    }
    let n = x.len();
    let r2i = 1.0 / (kernel.rho * kernel.rho);
    let r = x - center;
    let b = beta_t * (-r.norm_squared() * r2i).exp();
    let eye = DMatrix::<f64>::identity(n, n);
    let rrt = &r * r.transpose() * (r2i * r2i);
    Ok(TaylorData {
        value: b,
        grad_x: &r * (-2.0 * b * r2i),
        grad_y: &r * (b * r2i),
        grad_z: &r * (b * r2i),
        hess_xx: (&rrt * 4.0 - &eye * (2.0 * r2i)) * b,
        hess_yy: (&rrt - &eye * r2i) * b,
        hess_zz: (&rrt - &eye * r2i) * b,
        hess_xy: (&eye * r2i - &rrt * 2.0) * b,
        hess_xz: (&eye * r2i - &rrt * 2.0) * b,
        hess_yz: rrt * b,
    })
}

/// Source of Taylor data for the moment system and the associated linear
/// equation.
pub trait CoefficientModel: Send + Sync {
    fn dim(&self) -> usize;

    /// `a`, `a_x`, `a_xx` at `(x, t)`.
    fn ionization(&self, x: &DVector<f64>, t: f64) -> ScalarTaylor;

    /// Kernel Taylor data at `(x, X, X, t)`, differentiated in all three
    /// arguments. Evaluated at `x = X` it gives the centroid data; at other
    /// `x` it supplies `b(x, X, X)`, `b_yy(x, X, X)` and `b_zz(x, X, X)`.
    fn kernel(&self, x: &DVector<f64>, center: &DVector<f64>, t: f64) -> TaylorData;

    /// Time profile `D̃a(t)` of the diffusion coefficient.
    fn diffusion_factor(&self, t: f64) -> f64;

    /// `a(x, t)` alone.
    fn ionization_value(&self, x: &[f64], t: f64) -> f64 {
        self.ionization(&DVector::from_column_slice(x), t).value
    }

    /// `b(x, X, X) + ½ Sp[(b_yy + b_zz)(x, X, X) α⁽²⁾]`, the kernel part of the
    /// potential of the linear equation before its quadratic expansion.
    fn kernel_potential(&self, x: &[f64], center: &DVector<f64>, alpha2: &DMatrix<f64>, t: f64) -> f64 {
        let td = self.kernel(&DVector::from_column_slice(x), center, t);
        td.value + 0.5 * ((td.hess_yy + td.hess_zz) * alpha2).trace()
    }
}

/// Spatially uniform ionization with the Gaussian recombination kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationModel {
    pub profiles: ExpProfiles,
    pub kernel: GaussianKernel,
    pub dim: usize,
}

impl RelaxationModel {
    pub fn new(profiles: ExpProfiles, kernel: GaussianKernel) -> Self {
        Self {
            profiles,
            kernel,
            dim: 2,
        }
    }
}

impl CoefficientModel for RelaxationModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn ionization(&self, _x: &DVector<f64>, t: f64) -> ScalarTaylor {
        ScalarTaylor::constant(self.profiles.ionization_rate(t), self.dim)
    }

    fn kernel(&self, x: &DVector<f64>, center: &DVector<f64>, t: f64) -> TaylorData {
        let beta = self.profiles.recombination_amplitude(t);
        kernel_diagonal_taylor(&self.kernel, beta, x, center)
            .expect("trajectory and evaluation point share the model dimension")
    }

    fn diffusion_factor(&self, t: f64) -> f64 {
        self.profiles.diffusion_factor(t)
    }

    fn ionization_value(&self, _x: &[f64], t: f64) -> f64 {
        self.profiles.ionization_rate(t)
    }

    // b (1 + rᵀαr/ϱ⁴ - Sp α/ϱ²) without building the full Taylor data
    fn kernel_potential(&self, x: &[f64], center: &DVector<f64>, alpha2: &DMatrix<f64>, t: f64) -> f64 {
        let n = x.len();
        let r2i = 1.0 / (self.kernel.rho * self.kernel.rho);
        let mut r2 = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            let ri = x[i] - center[i];
            r2 += ri * ri;
            for j in 0..n {
                quad += ri * alpha2[(i, j)] * (x[j] - center[j]);
            }
        }
        let b = self.profiles.recombination_amplitude(t) * (-r2 * r2i).exp();
        b * (1.0 + quad * r2i * r2i - alpha2.trace() * r2i)
    }
}
