use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    DirichletCompatible,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    C3,
    C5,
}

/// Closed-form divergence-free velocity and pressure with the derivatives
/// needed to synthesise the forcing.
pub trait ManufacturedSolution: Send + Sync {
    fn name(&self) -> &'static str;
    fn boundary(&self) -> BoundaryTag;
    fn smoothness(&self) -> Smoothness;
    /// Time period, if the solution is periodic in `t`.
    fn period(&self) -> Option<f64>;
    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3];
    fn pressure(&self, t: f64, x: [f64; 3]) -> f64;
    fn velocity_dt(&self, t: f64, x: [f64; 3]) -> [f64; 3];
    /// `J[i][k] = ∂_k v_i`.
    fn velocity_jacobian(&self, t: f64, x: [f64; 3]) -> [[f64; 3]; 3];
    fn velocity_laplacian(&self, t: f64, x: [f64; 3]) -> [f64; 3];
    fn pressure_gradient(&self, t: f64, x: [f64; 3]) -> [f64; 3];
}

/// Serialisable choice of manufactured solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManufacturedSpec {
    /// Periodic Taylor–Green-type vortex on the unit torus.
    TaylorGreen { amplitude: f64 },
    /// Rotating swirl `v = curl(ψ a(t))` in a ball; `ψ = (R² − |x − c|²)²`,
    /// or `(ρ² − |x − c|²)₊⁵` when a support radius `ρ` is given.
    Swirl {
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<f64>,
    },
}

impl ManufacturedSpec {
    pub fn build(&self, domain: &DomainSpec) -> Result<Arc<dyn ManufacturedSolution>> {
        match (self, domain) {
            (ManufacturedSpec::TaylorGreen { amplitude }, DomainSpec::Torus { .. }) => {
                Ok(Arc::new(TaylorGreenTorus::new(*amplitude)))
            }
            (ManufacturedSpec::Swirl { amplitude, support: None }, DomainSpec::Ball { center, radius }) => {
                Ok(Arc::new(SwirlBall::new(*center, *radius, *amplitude)))
            }
            (ManufacturedSpec::Swirl { amplitude, support: Some(rho) }, DomainSpec::Ball { center, radius }) => {
                if !(*rho > 0.0 && rho <= radius) {
                    return Err(Error::InvalidParameter {
                        name: "solution.support",
                        reason: format!("must lie in (0, {radius}], got {rho}"),
                    });
                }
                Ok(Arc::new(SwirlBall::compact(*center, *radius, *amplitude, *rho)))
            }
            _ => Err(Error::InvalidDomain(format!(
                "manufactured solution {self:?} is not defined on {domain:?}"
            ))),
        }
    }
}

/// `v = g(t)(a sin X cos Y cos Z, b cos X sin Y cos Z, c cos X cos Y sin Z)`
/// with `X = 2πx₁` etc., `a + b + c = 0`, `g(t) = A cos 2πt`.
#[derive(Debug, Clone, Copy)]
pub struct TaylorGreenTorus {
    pub amplitude: f64,
    pub coeffs: [f64; 3],
}

impl TaylorGreenTorus {
    pub fn new(amplitude: f64) -> Self {
        TaylorGreenTorus {
            amplitude,
            coeffs: [1.0, -0.5, -0.5],
        }
    }

    fn g(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * t).cos()
    }

    fn g_dt(&self, t: f64) -> f64 {
        -2.0 * PI * self.amplitude * (2.0 * PI * t).sin()
    }

    fn spatial(&self, x: [f64; 3]) -> [f64; 3] {
        let s = x.map(|xi| (2.0 * PI * xi).sin());
        let c = x.map(|xi| (2.0 * PI * xi).cos());
        [
            self.coeffs[0] * s[0] * c[1] * c[2],
            self.coeffs[1] * c[0] * s[1] * c[2],
            self.coeffs[2] * c[0] * c[1] * s[2],
        ]
    }
}

impl ManufacturedSolution for TaylorGreenTorus {
    fn name(&self) -> &'static str {
        "taylor_green"
    }

    fn boundary(&self) -> BoundaryTag {
        BoundaryTag::Torus
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::C5
    }

    fn period(&self) -> Option<f64> {
        Some(1.0)
    }

    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let g = self.g(t);
        self.spatial(x).map(|v| g * v)
    }

    fn pressure(&self, t: f64, x: [f64; 3]) -> f64 {
        0.25 * self.g(t) * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin() * (2.0 * PI * x[2]).sin()
    }

    fn velocity_dt(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let g = self.g_dt(t);
        self.spatial(x).map(|v| g * v)
    }

    fn velocity_jacobian(&self, t: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
        let g = self.g(t);
        let k = 2.0 * PI;
        let s = x.map(|xi| (k * xi).sin());
        let c = x.map(|xi| (k * xi).cos());
        let mut j = [[0.0; 3]; 3];
        for i in 0..3 {
            for d in 0..3 {
                // Component i carries sin in slot i and cos elsewhere.
                let mut p = self.coeffs[i] * g * k;
                for m in 0..3 {
                    let (f, df) = if m == i { (s[m], c[m]) } else { (c[m], -s[m]) };
                    p *= if m == d { df } else { f };
                }
                j[i][d] = p;
            }
        }
        j
    }

    fn velocity_laplacian(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let k2 = 3.0 * (2.0 * PI).powi(2);
        self.velocity(t, x).map(|v| -k2 * v)
    }

    fn pressure_gradient(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let k = 2.0 * PI;
        let a = 0.25 * self.g(t) * k;
        let s = x.map(|xi| (k * xi).sin());
        let c = x.map(|xi| (k * xi).cos());
        [a * c[0] * s[1] * s[2], a * s[0] * c[1] * s[2], a * s[0] * s[1] * c[2]]
    }
}

/// `v = curl(ψ a(t)) = −2pκ s^{p−1} (y × a(t))` with `y = x − c`,
/// `s = κ(ρ² − |y|²)₊`, `ψ = s^p` and `a(t) = A (cos 2πt, sin 2πt, ½)`.
/// With `ρ = R`, `κ = 1`, `p = 2` the velocity is polynomial and vanishes on the
/// sphere; with `ρ < R`, `κ = ρ⁻²`, `p = 5` it is C³ and vanishes outside `|y| < ρ`.
#[derive(Debug, Clone, Copy)]
pub struct SwirlBall {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
    /// Support radius `ρ ≤ R`.
    pub support: f64,
    pub power: i32,
    pub kappa: f64,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl SwirlBall {
    pub fn new(center: [f64; 3], radius: f64, amplitude: f64) -> Self {
        SwirlBall {
            center,
            radius,
            amplitude,
            support: radius,
            power: 2,
            kappa: 1.0,
        }
    }

    /// Compactly supported variant with `ψ = (1 − |y|²/ρ²)₊⁵`.
    pub fn compact(center: [f64; 3], radius: f64, amplitude: f64, support: f64) -> Self {
        let support = support.min(radius);
        SwirlBall {
            center,
            radius,
            amplitude,
            support,
            power: 5,
            kappa: 1.0 / (support * support),
        }
    }

    fn axis(&self, t: f64) -> [f64; 3] {
        let w = 2.0 * PI * t;
        [self.amplitude * w.cos(), self.amplitude * w.sin(), 0.5 * self.amplitude]
    }

    fn axis_dt(&self, t: f64) -> [f64; 3] {
        let w = 2.0 * PI * t;
        [-2.0 * PI * self.amplitude * w.sin(), 2.0 * PI * self.amplitude * w.cos(), 0.0]
    }

    /// `(y, s, |y|²)`
    fn local(&self, x: [f64; 3]) -> ([f64; 3], f64, f64) {
        let y = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        (y, self.kappa * (self.support * self.support - r2).max(0.0), r2)
    }

    fn c(&self) -> f64 {
        -2.0 * self.power as f64 * self.kappa
    }

    fn q(&self) -> i32 {
        self.power - 1
    }
}

impl ManufacturedSolution for SwirlBall {
    fn name(&self) -> &'static str {
        "swirl"
    }

    fn boundary(&self) -> BoundaryTag {
        BoundaryTag::DirichletCompatible
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::C3
    }

    fn period(&self) -> Option<f64> {
        Some(1.0)
    }

    fn velocity(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let (y, s, _) = self.local(x);
        let g = self.c() * s.powi(self.q());
        cross(y, self.axis(t)).map(|w| g * w)
    }

    fn pressure(&self, t: f64, x: [f64; 3]) -> f64 {
        let (y, _, _) = self.local(x);
        0.5 * self.amplitude * y[0] * y[1] * (2.0 * PI * t).cos()
    }

    fn velocity_dt(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let (y, s, _) = self.local(x);
        let g = self.c() * s.powi(self.q());
        cross(y, self.axis_dt(t)).map(|w| g * w)
    }

    fn velocity_jacobian(&self, t: f64, x: [f64; 3]) -> [[f64; 3]; 3] {
        let (y, s, _) = self.local(x);
        let (c, q) = (self.c(), self.q());
        let a = self.axis(t);
        let w = cross(y, a);
        let sq = s.powi(q);
        let dsq = if s > 0.0 { -2.0 * self.kappa * q as f64 * s.powi(q - 1) } else { 0.0 };
        // ∂_k (y × a)_i = ε_{ikm} a_m
        let e = |k: usize| cross([(k == 0) as u8 as f64, (k == 1) as u8 as f64, (k == 2) as u8 as f64], a);
        let mut j = [[0.0; 3]; 3];
        for k in 0..3 {
            let ek = e(k);
            for i in 0..3 {
                j[i][k] = c * (dsq * y[k] * w[i] + sq * ek[i]);
            }
        }
        j
    }

    fn velocity_laplacian(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let (y, s, r2) = self.local(x);
        if s <= 0.0 {
            return [0.0; 3];
        }
        let (c, q) = (self.c(), self.q());
        let qf = q as f64;
        let k = self.kappa;
        let mut g = -10.0 * k * s.powi(q - 1);
        if q >= 2 {
            g += 4.0 * (qf - 1.0) * k * k * s.powi(q - 2) * r2;
        }
        cross(y, self.axis(t)).map(|w| c * qf * g * w)
    }

    fn pressure_gradient(&self, t: f64, x: [f64; 3]) -> [f64; 3] {
        let (y, _, _) = self.local(x);
        let c = 0.5 * self.amplitude * (2.0 * PI * t).cos();
        [c * y[1], c * y[0], 0.0]
    }
}

/// `f = v_t + (v·∇)v − νΔv + ∇p`.
pub fn forcing_value(ms: &dyn ManufacturedSolution, nu: f64, t: f64, x: [f64; 3]) -> [f64; 3] {
    let v = ms.velocity(t, x);
    let vt = ms.velocity_dt(t, x);
    let j = ms.velocity_jacobian(t, x);
    let lap = ms.velocity_laplacian(t, x);
    let gp = ms.pressure_gradient(t, x);
    let mut f = [0.0; 3];
    for i in 0..3 {
        let adv = j[i][0] * v[0] + j[i][1] * v[1] + j[i][2] * v[2];
        f[i] = vt[i] + adv - nu * lap[i] + gp[i];
    }
    f
}

/// Residual of `v_t + (v·∇)v − νΔv + ∇p − f` at `(t, x)`, with every
/// derivative of `v` and `p` replaced by a centred difference of step `eps`.
pub fn pde_residual_fd(ms: &dyn ManufacturedSolution, nu: f64, t: f64, x: [f64; 3], eps: f64) -> f64 {
    let shift = |d: usize, s: f64| {
        let mut y = x;
        y[d] += s;
        y
    };
    let v = ms.velocity(t, x);
    let vp = ms.velocity(t + eps, x);
    let vm = ms.velocity(t - eps, x);
    let mut r = [0.0; 3];
    for i in 0..3 {
        r[i] = (vp[i] - vm[i]) / (2.0 * eps);
    }
    for d in 0..3 {
        let a = ms.velocity(t, shift(d, eps));
        let b = ms.velocity(t, shift(d, -eps));
        let pa = ms.pressure(t, shift(d, eps));
        let pb = ms.pressure(t, shift(d, -eps));
        for i in 0..3 {
            r[i] += v[d] * (a[i] - b[i]) / (2.0 * eps);
            r[i] -= nu * (a[i] - 2.0 * v[i] + b[i]) / (eps * eps);
        }
        r[d] += (pa - pb) / (2.0 * eps);
    }
    let f = forcing_value(ms, nu, t, x);
    (0..3).map(|i| (r[i] - f[i]).abs()).fold(0.0, f64::max)
}

/// Centred-difference divergence of the velocity at `(t, x)`.
pub fn divergence_fd(ms: &dyn ManufacturedSolution, t: f64, x: [f64; 3], eps: f64) -> f64 {
    (0..3)
        .map(|d| {
            let mut a = x;
            let mut b = x;
            a[d] += eps;
            b[d] -= eps;
            (ms.velocity(t, a)[d] - ms.velocity(t, b)[d]) / (2.0 * eps)
        })
        .sum()
}
