//! Staircase lattice discretisation of a domain and the periodic torus grid.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// Sentinel neighbour ordinal for lattice points outside the grid.
pub const OUTSIDE: u32 = u32::MAX;
/// Marker in [`Grid::core_class`] for points outside the core.
pub const NOT_CORE: u8 = u8::MAX;

/// Parity class of `(z1 mod 2, z2 mod 2, z3 mod 2)` in the order
/// eee, eeo, eoe, oee, eoo, ooe, oeo, ooo.
const PARITY_ORDER: [u8; 8] = [0, 1, 2, 4, 3, 6, 5, 7];

pub fn parity_class(z: [i64; 3]) -> usize {
    let b = (z[0].rem_euclid(2) * 4 + z[1].rem_euclid(2) * 2 + z[2].rem_euclid(2)) as usize;
    PARITY_ORDER[b] as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Periodic,
}

/// Neighbour slot of `x + sign*h*e_axis` in [`Grid::neighbors`].
#[inline]
pub fn dir(axis: usize, plus: bool) -> usize {
    2 * axis + usize::from(!plus)
}

/// An immutable lattice grid.
///
/// Dirichlet grids hold `Ω_h = {x ∈ hZ³ : C_4h(x) ⊂ Ω}`; torus grids hold
/// the full periodic lattice `(Z_N)³` with `h = 1/N`.
#[derive(Debug, Clone)]
pub struct Grid {
    h: f64,
    bc: BoundaryCondition,
    period: i64,
    domain: DomainSpec,
    points: Vec<[i64; 3]>,
    neighbors: Vec<[u32; 6]>,
    boundary: Vec<bool>,
    interior: Vec<u32>,
    interior_index: Vec<u32>,
    core_class: Vec<u8>,
    sublattices: Vec<Vec<u32>>,
    gamma_plus: [Vec<u32>; 3],
    gamma_minus: [Vec<u32>; 3],
    gamma_tilde_plus: [Vec<u32>; 3],
    gamma_tilde_minus: [Vec<u32>; 3],
    lo: [i64; 3],
    dims: [i64; 3],
    lookup: Vec<u32>,
}

/// Distances from discrete boundaries to the continuum boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub max_boundary_gap: f64,
    pub boundary_bound: f64,
    pub max_core_gap: f64,
    pub core_bound: f64,
}

impl GapReport {
    pub fn holds(&self) -> bool {
        self.max_boundary_gap <= self.boundary_bound && self.max_core_gap <= self.core_bound
    }
}

impl Grid {
    /// Builds `Ω_h` for a bounded domain.
    ///
    /// Membership uses the signed distance: `x` is kept iff
    /// `sdf(x) > 2√3 h (1 + 1e-12)`, which guarantees `C_4h(x) ⊂ Ω`.
    pub fn dirichlet(spec: &DomainSpec, h: f64) -> Result<Grid> {
        spec.validate()?;
        if spec.is_torus() {
            return Err(Error::InvalidDomain(
                "torus domains are built with Grid::torus".into(),
            ));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter {
                name: "h",
                reason: format!("mesh size must be positive and finite, got {h}"),
            });
        }
        let margin = 2.0 * 3f64.sqrt() * h + 1e-12 * h;
        let (blo, bhi) = spec.bounding_box();
        let mut zlo = [0i64; 3];
        let mut zhi = [0i64; 3];
        for i in 0..3 {
            zlo[i] = (blo[i] / h).ceil() as i64;
            zhi[i] = (bhi[i] / h).floor() as i64;
        }
        let mut points = Vec::new();
        for z1 in zlo[0]..=zhi[0] {
            for z2 in zlo[1]..=zhi[1] {
                for z3 in zlo[2]..=zhi[2] {
                    let x = [z1 as f64 * h, z2 as f64 * h, z3 as f64 * h];
                    if spec.signed_distance(x) > margin {
                        points.push([z1, z2, z3]);
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(Error::EmptyGrid { h });
        }
        let pad = 3;
        let lo = [zlo[0] - pad, zlo[1] - pad, zlo[2] - pad];
        let dims = [
            zhi[0] - zlo[0] + 1 + 2 * pad,
            zhi[1] - zlo[1] + 1 + 2 * pad,
            zhi[2] - zlo[2] + 1 + 2 * pad,
        ];
        let mut grid = Grid::skeleton(h, BoundaryCondition::Dirichlet, 0, spec.clone(), points, lo, dims);
        grid.classify()?;
        Ok(grid)
    }

    /// Builds the periodic grid `(Z_N)³` with `h = 1/N`.
    pub fn torus(n: usize) -> Result<Grid> {
        if n < 4 {
            return Err(Error::InvalidN(n));
        }
        let ni = n as i64;
        let mut points = Vec::with_capacity(n * n * n);
        for z1 in 0..ni {
            for z2 in 0..ni {
                for z3 in 0..ni {
                    points.push([z1, z2, z3]);
                }
            }
        }
        let mut grid = Grid::skeleton(
            1.0 / n as f64,
            BoundaryCondition::Periodic,
            ni,
            DomainSpec::Torus { n },
            points,
            [0; 3],
            [ni; 3],
        );
        grid.classify()?;
        Ok(grid)
    }

    /// Builds either kind of grid from a domain spec; `h` is ignored for the torus.
    pub fn build(spec: &DomainSpec, h: f64) -> Result<Grid> {
        match spec {
            DomainSpec::Torus { n } => Grid::torus(*n),
            _ => Grid::dirichlet(spec, h),
        }
    }

    fn skeleton(
        h: f64,
        bc: BoundaryCondition,
        period: i64,
        domain: DomainSpec,
        points: Vec<[i64; 3]>,
        lo: [i64; 3],
        dims: [i64; 3],
    ) -> Grid {
        let len = (dims[0] * dims[1] * dims[2]) as usize;
        let mut lookup = vec![OUTSIDE; len];
        for (k, z) in points.iter().enumerate() {
            let c = [z[0] - lo[0], z[1] - lo[1], z[2] - lo[2]];
            lookup[((c[0] * dims[1] + c[1]) * dims[2] + c[2]) as usize] = k as u32;
        }
        Grid {
            h,
            bc,
            period,
            domain,
            points,
            neighbors: Vec::new(),
            boundary: Vec::new(),
            interior: Vec::new(),
            interior_index: Vec::new(),
            core_class: Vec::new(),
            sublattices: Vec::new(),
            gamma_plus: Default::default(),
            gamma_minus: Default::default(),
            gamma_tilde_plus: Default::default(),
            gamma_tilde_minus: Default::default(),
            lo,
            dims,
            lookup,
        }
    }

    fn classify(&mut self) -> Result<()> {
        let n = self.points.len();
        self.neighbors = (0..n)
            .map(|k| {
                let z = self.points[k];
                let mut nb = [OUTSIDE; 6];
                for axis in 0..3 {
                    for plus in [true, false] {
                        let mut d = [0i64; 3];
                        d[axis] = if plus { 1 } else { -1 };
                        nb[dir(axis, plus)] = self
                            .find([z[0] + d[0], z[1] + d[1], z[2] + d[2]])
                            .map_or(OUTSIDE, |o| o as u32);
                    }
                }
                nb
            })
            .collect();
        self.boundary = self
            .neighbors
            .iter()
            .map(|nb| nb.iter().any(|&o| o == OUTSIDE))
            .collect();
        self.interior = (0..n as u32).filter(|&k| !self.boundary[k as usize]).collect();
        if self.interior.is_empty() {
            return Err(Error::EmptyGrid { h: self.h });
        }
        self.interior_index = vec![OUTSIDE; n];
        for (i, &k) in self.interior.iter().enumerate() {
            self.interior_index[k as usize] = i as u32;
        }

        for axis in 0..3 {
            let (mut gp, mut gm, mut gtp, mut gtm) = (vec![], vec![], vec![], vec![]);
            for k in 0..n {
                if !self.boundary[k] {
                    continue;
                }
                let p = self.neighbors[k][dir(axis, true)];
                let m = self.neighbors[k][dir(axis, false)];
                if m != OUTSIDE && !self.boundary[m as usize] {
                    gp.push(k as u32);
                }
                if p == OUTSIDE {
                    gtp.push(k as u32);
                }
                if p != OUTSIDE && !self.boundary[p as usize] {
                    gm.push(k as u32);
                }
                if m == OUTSIDE {
                    gtm.push(k as u32);
                }
            }
            self.gamma_plus[axis] = gp;
            self.gamma_minus[axis] = gm;
            self.gamma_tilde_plus[axis] = gtp;
            self.gamma_tilde_minus[axis] = gtm;
        }

        match self.bc {
            BoundaryCondition::Dirichlet => self.classify_core(),
            BoundaryCondition::Periodic => self.classify_torus_components(),
        }
    }

    fn classify_core(&mut self) -> Result<()> {
        let n = self.points.len();
        self.core_class = vec![NOT_CORE; n];
        let mut classes: Vec<Vec<u32>> = vec![Vec::new(); 8];
        for k in 0..n {
            if self.boundary[k] {
                continue;
            }
            let z = self.points[k];
            let mut all = true;
            'scan: for a1 in 0..3 {
                for a2 in 0..3 {
                    for a3 in 0..3 {
                        match self.find([z[0] + a1, z[1] + a2, z[2] + a3]) {
                            Some(o) if !self.boundary[o] => {}
                            _ => {
                                all = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
            if all {
                let j = parity_class(z);
                self.core_class[k] = j as u8;
                classes[j].push(k as u32);
            }
        }
        for (j, members) in classes.iter().enumerate() {
            let sizes = self.components_2h(members);
            if sizes.len() != 1 {
                return Err(Error::DisconnectedSublattice { class: j + 1, sizes });
            }
        }
        self.sublattices = classes;
        Ok(())
    }

    fn classify_torus_components(&mut self) -> Result<()> {
        let n = self.points.len();
        let all: Vec<u32> = (0..n as u32).collect();
        let mut labels = self.label_2h(&all);
        let count = labels.iter().map(|&l| l + 1).max().unwrap_or(0) as usize;
        if count == 8 {
            // Even N: the components are the parity classes; use their order.
            for (k, l) in labels.iter_mut().enumerate() {
                *l = parity_class(self.points[k]) as u32;
            }
        }
        let mut comps = vec![Vec::new(); count];
        self.core_class = vec![NOT_CORE; n];
        for k in 0..n {
            comps[labels[k] as usize].push(k as u32);
            self.core_class[k] = labels[k] as u8;
        }
        self.sublattices = comps;
        Ok(())
    }

    /// Labels the components of `members` under ±2h steps (labels in order of first member).
    fn label_2h(&self, members: &[u32]) -> Vec<u32> {
        let n = self.points.len();
        let mut in_set = vec![false; n];
        for &k in members {
            in_set[k as usize] = true;
        }
        let mut label = vec![u32::MAX; n];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for &start in members {
            if label[start as usize] != u32::MAX {
                continue;
            }
            label[start as usize] = next;
            queue.push_back(start as usize);
            while let Some(k) = queue.pop_front() {
                let z = self.points[k];
                for axis in 0..3 {
                    for s in [2i64, -2] {
                        let mut y = z;
                        y[axis] += s;
                        if let Some(o) = self.find(y) {
                            if in_set[o] && label[o] == u32::MAX {
                                label[o] = next;
                                queue.push_back(o);
                            }
                        }
                    }
                }
            }
            next += 1;
        }
        members.iter().map(|&k| label[k as usize]).collect()
    }

    fn components_2h(&self, members: &[u32]) -> Vec<usize> {
        let labels = self.label_2h(members);
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut sizes = vec![0usize; count];
        for l in labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Ordinal of the lattice point `z`, wrapping on the torus.
    pub fn find(&self, z: [i64; 3]) -> Option<usize> {
        let c = match self.bc {
            BoundaryCondition::Periodic => [
                z[0].rem_euclid(self.period),
                z[1].rem_euclid(self.period),
                z[2].rem_euclid(self.period),
            ],
            BoundaryCondition::Dirichlet => [z[0] - self.lo[0], z[1] - self.lo[1], z[2] - self.lo[2]],
        };
        if (0..3).any(|i| c[i] < 0 || c[i] >= self.dims[i]) {
            return None;
        }
        let o = self.lookup[((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize];
        (o != OUTSIDE).then_some(o as usize)
    }

    /// Ordinal of `points[k] + delta`, if on the grid.
    #[inline]
    pub fn offset(&self, k: usize, delta: [i64; 3]) -> Option<usize> {
        let z = self.points[k];
        self.find([z[0] + delta[0], z[1] + delta[1], z[2] + delta[2]])
    }

    /// Ordinal of `points[k] ± h e_axis`, if on the grid.
    #[inline]
    pub fn neighbor(&self, k: usize, axis: usize, plus: bool) -> Option<usize> {
        let o = self.neighbors[k][dir(axis, plus)];
        (o != OUTSIDE).then_some(o as usize)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn is_periodic(&self) -> bool {
        self.bc == BoundaryCondition::Periodic
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[i64; 3]] {
        &self.points
    }

    pub fn position(&self, k: usize) -> [f64; 3] {
        let z = self.points[k];
        [z[0] as f64 * self.h, z[1] as f64 * self.h, z[2] as f64 * self.h]
    }

    pub fn neighbors(&self) -> &[[u32; 6]] {
        &self.neighbors
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    pub fn boundary(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.boundary[k])
    }

    /// Ordinals of `Ω_h \ ∂Ω_h`, ascending.
    pub fn interior(&self) -> &[u32] {
        &self.interior
    }

    /// Position of ordinal `k` in [`Grid::interior`], or `None` on the boundary.
    pub fn interior_index(&self, k: usize) -> Option<usize> {
        let i = self.interior_index[k];
        (i != OUTSIDE).then_some(i as usize)
    }

    /// Parity class (Dirichlet) or 2h-component (torus) of a core point.
    pub fn core_class(&self, k: usize) -> Option<usize> {
        let c = self.core_class[k];
        (c != NOT_CORE).then_some(c as usize)
    }

    pub fn in_core(&self, k: usize) -> bool {
        self.core_class[k] != NOT_CORE
    }

    /// `Ω_h^{∘j}` on Dirichlet grids (always 8 entries); the components of the
    /// 2h-shift graph on the torus (8 for even N, 1 for odd N).
    pub fn sublattices(&self) -> &[Vec<u32>] {
        &self.sublattices
    }

    pub fn core_len(&self) -> usize {
        self.sublattices.iter().map(Vec::len).sum()
    }

    pub fn gamma_plus(&self, axis: usize) -> &[u32] {
        &self.gamma_plus[axis]
    }

    pub fn gamma_minus(&self, axis: usize) -> &[u32] {
        &self.gamma_minus[axis]
    }

    pub fn gamma_tilde_plus(&self, axis: usize) -> &[u32] {
        &self.gamma_tilde_plus[axis]
    }

    pub fn gamma_tilde_minus(&self, axis: usize) -> &[u32] {
        &self.gamma_tilde_minus[axis]
    }

    /// Largest distance from `∂Ω_h` (and from the core boundary) to `∂Ω`.
    ///
    /// Returns zeros on the torus, which has no boundary.
    pub fn boundary_gap_report(&self) -> GapReport {
        let s3 = 3f64.sqrt();
        let mut rep = GapReport {
            max_boundary_gap: 0.0,
            boundary_bound: (1.0 + 2.0 * s3) * self.h,
            max_core_gap: 0.0,
            core_bound: 2.0 * (1.0 + 2.0 * s3) * self.h,
        };
        if self.is_periodic() {
            return rep;
        }
        for k in self.boundary() {
            let d = self.domain.signed_distance(self.position(k)).abs();
            rep.max_boundary_gap = rep.max_boundary_gap.max(d);
        }
        for k in 0..self.len() {
            if !self.in_core(k) {
                continue;
            }
            let on_core_boundary = (0..6).any(|s| {
                let o = self.neighbors[k][s];
                o == OUTSIDE || !self.in_core(o as usize)
            });
            if on_core_boundary {
                let d = self.domain.signed_distance(self.position(k)).abs();
                rep.max_core_gap = rep.max_core_gap.max(d);
            }
        }
        rep
    }

    /// Class label used in exports: `core_j` (j = 1..8), `interior` or `boundary`.
    pub fn class_label(&self, k: usize) -> String {
        if let Some(j) = self.core_class(k) {
            format!("core_{}", j + 1)
        } else if self.boundary[k] {
            "boundary".to_string()
        } else {
            "interior".to_string()
        }
    }

    /// Point cloud CSV with columns `z1,z2,z3,class`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z1", "z2", "z3", "class"])?;
        for k in 0..self.len() {
            let z = self.points[k];
            w.write_record([
                z[0].to_string(),
                z[1].to_string(),
                z[2].to_string(),
                self.class_label(k),
            ])?;
        }
        w.flush()
    }

    /// Canonical byte encoding of the point set and classification (for hashing).
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.len() * 26 + 16);
        bytes.extend_from_slice(&self.h.to_le_bytes());
        bytes.push(u8::from(self.is_periodic()));
        for k in 0..self.len() {
            for c in self.points[k] {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(u8::from(self.boundary[k]));
            bytes.push(self.core_class[k]);
        }
        bytes
    }
}
