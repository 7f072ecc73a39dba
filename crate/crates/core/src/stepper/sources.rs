use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::harness::{forcing_value, ManufacturedSpec};

/// Continuum velocity `x ↦ v(x)`.
pub type VelocityFn = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;
/// Continuum forcing `(t, x) ↦ f(t, x)`.
pub type ForcingFn = Arc<dyn Fn(f64, [f64; 3]) -> [f64; 3] + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Zero,
    /// Divergence-free sum of random Fourier modes (curls of random potentials).
    RandomModes { seed: u64, amplitude: f64, modes: usize },
    /// The manufactured velocity at `t = 0`.
    Manufactured { solution: ManufacturedSpec },
    /// Discontinuous shear `(A sign sin 2πx₂, 0, 0)`; in L² only.
    ShearLayer { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    Constant { value: [f64; 3] },
    /// `A (1 + ½ sin 2πt) (sin κx₂ cos κx₃, sin κx₃ cos κx₁, sin κx₁ cos κx₂)`, `κ = πk`; period 1.
    Trigonometric { amplitude: f64, wavenumber: f64 },
    /// Forcing that makes the manufactured solution exact.
    Manufactured { solution: ManufacturedSpec },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Zero
    }
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec::Zero
    }
}

fn random_modes(seed: u64, amplitude: f64, modes: usize) -> VelocityFn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(modes);
    while terms.len() < modes {
        let k: [f64; 3] = [
            rng.gen_range(-3i32..=3) as f64 * PI,
            rng.gen_range(-3i32..=3) as f64 * PI,
            rng.gen_range(-3i32..=3) as f64 * PI,
        ];
        let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        if kn == 0.0 {
            continue;
        }
        let a: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        // curl(a sin(k·x + φ)) = cos(k·x + φ) k × a
        let c = [k[1] * a[2] - k[2] * a[1], k[2] * a[0] - k[0] * a[2], k[0] * a[1] - k[1] * a[0]];
        terms.push((k, c.map(|v| v / kn), phase));
    }
    let scale = amplitude / (modes.max(1) as f64).sqrt();
    Arc::new(move |x| {
        let mut v = [0.0; 3];
        for (k, c, p) in &terms {
            let w = (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + p).cos() * scale;
            for i in 0..3 {
                v[i] += w * c[i];
            }
        }
        v
    })
}

impl InitialSpec {
    pub fn build(&self, domain: &DomainSpec) -> Result<VelocityFn> {
        Ok(match self {
            InitialSpec::Zero => Arc::new(|_| [0.0; 3]),
            InitialSpec::RandomModes { seed, amplitude, modes } => {
                if *modes == 0 {
                    return Err(Error::InvalidParameter {
                        name: "initial.modes",
                        reason: "must be at least 1".into(),
                    });
                }
                random_modes(*seed, *amplitude, *modes)
            }
            InitialSpec::Manufactured { solution } => {
                let ms = solution.build(domain)?;
                Arc::new(move |x| ms.velocity(0.0, x))
            }
            InitialSpec::ShearLayer { amplitude } => {
                let a = *amplitude;
                Arc::new(move |x| [a * (2.0 * PI * x[1]).sin().signum(), 0.0, 0.0])
            }
        })
    }
}

impl ForcingSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingSpec::Zero)
    }

    pub fn build(&self, domain: &DomainSpec, nu: f64) -> Result<ForcingFn> {
        Ok(match self {
            ForcingSpec::Zero => Arc::new(|_, _| [0.0; 3]),
            ForcingSpec::Constant { value } => {
                let v = *value;
                Arc::new(move |_, _| v)
            }
            ForcingSpec::Trigonometric { amplitude, wavenumber } => {
                let (a, k) = (*amplitude, PI * *wavenumber);
                Arc::new(move |t, x| {
                    let g = a * (1.0 + 0.5 * (2.0 * PI * t).sin());
                    [
                        g * (k * x[1]).sin() * (k * x[2]).cos(),
                        g * (k * x[2]).sin() * (k * x[0]).cos(),
                        g * (k * x[0]).sin() * (k * x[1]).cos(),
                    ]
                })
            }
            ForcingSpec::Manufactured { solution } => {
                let ms = solution.build(domain)?;
                Arc::new(move |t, x| forcing_value(ms.as_ref(), nu, t, x))
            }
        })
    }
}
