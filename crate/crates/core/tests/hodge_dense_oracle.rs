//! Production Hodge decomposition vs. a dense direct solve of the full
//! `(w, φ)` system on small grids.

use std::sync::Arc;

use chorin::hodge::HodgeSolver;
use chorin::{DomainSpec, Grid, SampleMode, VectorField};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AXES: [[i64; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

fn add(z: [i64; 3], d: [i64; 3], s: i64) -> [i64; 3] {
    [z[0] + s * d[0], z[1] + s * d[1], z[2] + s * d[2]]
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Solves `𝒟·w = 0` on Ω_h, `w + 𝒟φ = u` on the interior, one mean row per
/// coupling component (replacing one redundant divergence row), densely.
fn dense_decompose(g: &Grid, u: &VectorField<f64>) -> (Vec<[f64; 3]>, Vec<f64>) {
    let n = g.len();
    let h = g.h();
    let pts = g.points();
    let interior: Vec<bool> = (0..n)
        .map(|k| {
            AXES.iter()
                .all(|&e| g.find(add(pts[k], e, 1)).is_some() && g.find(add(pts[k], e, -1)).is_some())
        })
        .collect();
    let ilist: Vec<usize> = (0..n).filter(|&k| interior[k]).collect();
    let a = ilist.len();
    let mut widx = vec![usize::MAX; n];
    for (i, &k) in ilist.iter().enumerate() {
        widx[k] = i;
    }
    let nu = 3 * a + n;
    let wcol = |k: usize, c: usize| c * a + widx[k];
    let pcol = |k: usize| 3 * a + k;

    let mut parent: Vec<usize> = (0..n).collect();
    for &m in &ilist {
        for &e in &AXES {
            let p = g.find(add(pts[m], e, -1)).unwrap();
            let q = g.find(add(pts[m], e, 1)).unwrap();
            let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
            parent[rp] = rq;
        }
    }
    let roots: Vec<usize> = (0..n).map(|k| find(&mut parent, k)).collect();

    let mut mat = DMatrix::<f64>::zeros(nu, nu);
    let mut rhs = DVector::<f64>::zeros(nu);
    let mut row = 0;
    let mut seen_root = vec![false; n];
    for x in 0..n {
        let r = roots[x];
        if !seen_root[r] {
            seen_root[r] = true;
            let members: Vec<usize> = (0..n).filter(|&k| roots[k] == r).collect();
            let core: Vec<usize> = members.iter().copied().filter(|&k| g.in_core(k)).collect();
            let set = if core.is_empty() { &members } else { &core };
            for &k in set {
                mat[(row, pcol(k))] = 1.0;
            }
        } else {
            for (c, &e) in AXES.iter().enumerate() {
                for s in [1i64, -1] {
                    if let Some(k) = g.find(add(pts[x], e, s)) {
                        if interior[k] {
                            mat[(row, wcol(k, c))] += s as f64 / (2.0 * h);
                        }
                    }
                }
            }
        }
        row += 1;
    }
    for &m in &ilist {
        for (c, &e) in AXES.iter().enumerate() {
            mat[(row, wcol(m, c))] = 1.0;
            let p = g.find(add(pts[m], e, 1)).unwrap();
            let q = g.find(add(pts[m], e, -1)).unwrap();
            mat[(row, pcol(p))] += 1.0 / (2.0 * h);
            mat[(row, pcol(q))] -= 1.0 / (2.0 * h);
            rhs[row] = u.at(m)[c];
            row += 1;
        }
    }
    assert_eq!(row, nu);
    let sol = mat.lu().solve(&rhs).expect("dense system is nonsingular");
    let mut w = vec![[0.0; 3]; n];
    for &k in &ilist {
        for c in 0..3 {
            w[k][c] = sol[wcol(k, c)];
        }
    }
    let phi = (0..n).map(|k| sol[pcol(k)]).collect();
    (w, phi)
}

fn compare(g: Arc<Grid>, seed: u64) {
    assert!(g.len() <= 600, "oracle grid too large: {}", g.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = VectorField::<f64>::random(&g, &mut rng, SampleMode::All);
    let dec = HodgeSolver::new(&g).decompose(&u, 1e-13).unwrap();
    let (w, phi) = dense_decompose(&g, &u);
    let scale = u.max_abs_component();
    let mut err = 0.0f64;
    for k in 0..g.len() {
        for c in 0..3 {
            err = err.max((dec.w.at(k)[c] - w[k][c]).abs());
        }
    }
    assert!(err <= 1e-8 * scale, "w mismatch {err:e}");
    let pscale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(scale * g.h());
    let perr = (0..g.len()).fold(0.0f64, |m, k| m.max((dec.phi.at(k) - phi[k]).abs()));
    assert!(perr <= 1e-8 * pscale, "phi mismatch {perr:e}");
}

#[test]
fn ball_matches_dense_oracle() {
    let g = Arc::new(Grid::dirichlet(&DomainSpec::unit_ball(), 0.12).unwrap());
    compare(g, 1);
}

#[test]
fn ellipsoid_matches_dense_oracle() {
    let spec = DomainSpec::Ellipsoid {
        center: [0.03, -0.02, 0.01],
        semiaxes: [1.1, 0.9, 0.8],
    };
    let g = Arc::new(Grid::dirichlet(&spec, 0.115).unwrap());
    compare(g, 2);
}

#[test]
fn torus_matches_dense_oracle() {
    for n in [4, 5, 6, 8] {
        compare(Arc::new(Grid::torus(n).unwrap()), 3 + n as u64);
    }
}
