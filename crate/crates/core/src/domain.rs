//! Continuum domains and their signed distance functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Computational domain. Lengths share the unit of the mesh size `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        center: [f64; 3],
        radius: f64,
    },
    Ellipsoid {
        center: [f64; 3],
        semiaxes: [f64; 3],
    },
    RoundedBox {
        center: [f64; 3],
        half_extents: [f64; 3],
        corner_radius: f64,
    },
    /// Unit periodic cube with `n` points per axis (h = 1/n).
    Torus { n: usize },
}

impl DomainSpec {
    pub fn unit_ball() -> Self {
        DomainSpec::Ball {
            center: [0.0; 3],
            radius: 1.0,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, DomainSpec::Torus { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let finite3 = |c: &[f64; 3]| c.iter().all(|v| v.is_finite());
        match self {
            DomainSpec::Ball { center, radius } => {
                if !finite3(center) || !positive(*radius) {
                    return Err(Error::InvalidDomain(format!(
                        "ball needs finite center and radius > 0 (radius = {radius})"
                    )));
                }
            }
            DomainSpec::Ellipsoid { center, semiaxes } => {
                if !finite3(center) || !semiaxes.iter().all(|&a| positive(a)) {
                    return Err(Error::InvalidDomain(format!(
                        "ellipsoid semiaxes must be > 0 (got {semiaxes:?})"
                    )));
                }
            }
            DomainSpec::RoundedBox {
                center,
                half_extents,
                corner_radius,
            } => {
                let min_b = half_extents.iter().cloned().fold(f64::INFINITY, f64::min);
                if !finite3(center)
                    || !half_extents.iter().all(|&b| positive(b))
                    || !positive(*corner_radius)
                    || *corner_radius >= min_b
                {
                    return Err(Error::InvalidDomain(format!(
                        "rounded box needs half extents > 0 and 0 < corner_radius < min half extent \
                         (half_extents = {half_extents:?}, corner_radius = {corner_radius})"
                    )));
                }
            }
            DomainSpec::Torus { n } => {
                if *n < 4 {
                    return Err(Error::InvalidN(*n));
                }
            }
        }
        Ok(())
    }

    /// Signed distance to the boundary, positive inside.
    ///
    /// Exact for all three bounded shapes. Meaningless for the torus, which
    /// has no boundary; returns `+inf` there.
    pub fn signed_distance(&self, x: [f64; 3]) -> f64 {
        match self {
            DomainSpec::Ball { center, radius } => radius - norm(sub(x, *center)),
            DomainSpec::Ellipsoid { center, semiaxes } => {
                ellipsoid_signed_distance(sub(x, *center), *semiaxes)
            }
            DomainSpec::RoundedBox {
                center,
                half_extents,
                corner_radius,
            } => {
                let d = sub(x, *center);
                let mut q = [0.0; 3];
                for i in 0..3 {
                    q[i] = d[i].abs() - (half_extents[i] - corner_radius);
                }
                let outside = norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                corner_radius - (outside + inside)
            }
            DomainSpec::Torus { .. } => f64::INFINITY,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let (c, e) = match self {
            DomainSpec::Ball { center, radius } => (*center, [*radius; 3]),
            DomainSpec::Ellipsoid { center, semiaxes } => (*center, *semiaxes),
            DomainSpec::RoundedBox {
                center,
                half_extents,
                ..
            } => (*center, *half_extents),
            DomainSpec::Torus { .. } => ([0.5; 3], [0.5; 3]),
        };
        (
            [c[0] - e[0], c[1] - e[1], c[2] - e[2]],
            [c[0] + e[0], c[1] + e[1], c[2] + e[2]],
        )
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => 2.0 * radius,
            DomainSpec::Ellipsoid { semiaxes, .. } => {
                2.0 * semiaxes.iter().cloned().fold(0.0, f64::max)
            }
            DomainSpec::RoundedBox {
                half_extents,
                corner_radius,
                ..
            } => {
                let inner: Vec<f64> = half_extents.iter().map(|b| b - corner_radius).collect();
                2.0 * (norm([inner[0], inner[1], inner[2]]) + corner_radius)
            }
            DomainSpec::Torus { .. } => 3f64.sqrt(),
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Exact signed distance from `p` (relative to the center) to the ellipsoid
/// with semiaxes `e`, positive inside.
///
/// Stationary points of the distance satisfy `x_i = e_i^2 y_i / (t + e_i^2)`.
/// The nearest one is either the largest root of
/// `F(t) = sum (e_i y_i / (t + e_i^2))^2 = 1` or a degenerate solution with
/// `t = -e_k^2` for an axis where `y_k = 0`.
fn ellipsoid_signed_distance(p: [f64; 3], e: [f64; 3]) -> f64 {
    let y = [p[0].abs(), p[1].abs(), p[2].abs()];
    let level: f64 = (0..3).map(|i| (y[i] / e[i]).powi(2)).sum();
    let inside = level < 1.0;

    let mut best = f64::INFINITY;
    let mut candidate = |x: [f64; 3]| {
        let d = norm(sub(x, y));
        if d < best {
            best = d;
        }
    };

    let active: Vec<usize> = (0..3).filter(|&i| y[i] > 0.0).collect();
    if !active.is_empty() {
        let f = |t: f64| -> f64 {
            active
                .iter()
                .map(|&i| (e[i] * y[i] / (t + e[i] * e[i])).powi(2))
                .sum::<f64>()
                - 1.0
        };
        let pole = active
            .iter()
            .map(|&i| -e[i] * e[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut lo = pole;
        let mut hi = pole.abs().max(1.0);
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let mut x = [0.0; 3];
        for &i in &active {
            x[i] = e[i] * e[i] * y[i] / (t + e[i] * e[i]);
        }
        candidate(x);
    }

    for k in 0..3 {
        if y[k] != 0.0 {
            continue;
        }
        let mut x = [0.0; 3];
        let mut ok = true;
        let mut s = 1.0;
        for i in 0..3 {
            if i == k {
                continue;
            }
            let gap = e[i] * e[i] - e[k] * e[k];
            if y[i] == 0.0 {
                x[i] = 0.0;
            } else if gap.abs() < 1e-300 {
                ok = false;
                break;
            } else {
                x[i] = e[i] * e[i] * y[i] / gap;
                s -= (x[i] / e[i]).powi(2);
            }
        }
        if ok && s >= 0.0 {
            x[k] = e[k] * s.sqrt();
            candidate(x);
        }
    }

    if inside {
        best
    } else {
        -best
    }
}
