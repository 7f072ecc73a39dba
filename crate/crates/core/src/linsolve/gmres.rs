use crate::error::{Error, Result};
use crate::linsolve::{dot, norm2, CsrMatrix, DenseLu, SolveReport};
use crate::scalar::Real;

/// Systems at most this large fall back to dense LU when GMRES stalls.
pub const DENSE_FALLBACK_MAX: usize = 3000;

/// Restarted GMRES with right Jacobi preconditioning.
///
/// Returns the iterate and a report whose residual is the true, recomputed
/// `‖b − Ax‖ / ‖b‖`, whether or not it met `tol`.
pub fn gmres<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    restart: usize,
    cap: usize,
) -> (Vec<T>, SolveReport) {
    let n = a.dim();
    let m = restart.max(1);
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    if bnorm == T::zero() {
        return (
            vec![T::zero(); n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        );
    }
    let dinv: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != T::zero() { T::one() / d } else { T::one() })
        .collect();
    let mut iterations = 0;
    let mut ax = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    loop {
        a.matvec_into(&x, &mut ax);
        let r: Vec<T> = b.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
        let beta = norm2(&r);
        if beta <= tol * bnorm || iterations >= cap {
            return (
                x,
                SolveReport {
                    iterations,
                    residual: (beta / bnorm).as_f64(),
                    converged: beta <= tol * bnorm,
                },
            );
        }
        let mut v: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| *ri / beta).collect());
        let mut hcol: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<T> = Vec::with_capacity(m);
        let mut sn: Vec<T> = Vec::with_capacity(m);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < cap {
            for i in 0..n {
                z[i] = dinv[i] * v[k][i];
            }
            a.matvec_into(&z, &mut w);
            let mut hk = vec![T::zero(); k + 2];
            for (j, vj) in v.iter().enumerate() {
                let c = dot(&w, vj);
                hk[j] = c;
                for i in 0..n {
                    w[i] -= c * vj[i];
                }
            }
            // One reorthogonalisation pass.
            for (j, vj) in v.iter().enumerate() {
                let c = dot(&w, vj);
                hk[j] += c;
                for i in 0..n {
                    w[i] -= c * vj[i];
                }
            }
            let wn = norm2(&w);
            hk[k + 1] = wn;
            for j in 0..k {
                let t = cs[j] * hk[j] + sn[j] * hk[j + 1];
                hk[j + 1] = -sn[j] * hk[j] + cs[j] * hk[j + 1];
                hk[j] = t;
            }
            let rho = (hk[k] * hk[k] + hk[k + 1] * hk[k + 1]).sqrt();
            let (c, s) = if rho == T::zero() {
                (T::one(), T::zero())
            } else {
                (hk[k] / rho, hk[k + 1] / rho)
            };
            cs.push(c);
            sn.push(s);
            hk[k] = rho;
            hk[k + 1] = T::zero();
            g[k + 1] = -s * g[k];
            g[k] = c * g[k];
            hcol.push(hk);
            iterations += 1;
            k += 1;
            let done = g[k].abs() <= tol * bnorm * T::lit(0.5) || wn == T::zero();
            if !done {
                v.push(w.iter().map(|wi| *wi / wn).collect());
            }
            if done {
                break;
            }
        }
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hcol[j][i] * y[j];
            }
            y[i] = s / hcol[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += dinv[i] * *yj * v[j][i];
            }
        }
    }
}

/// Solves a nonsymmetric system to relative residual `tol`; falls back to
/// dense LU for systems of dimension ≤ [`DENSE_FALLBACK_MAX`] when GMRES
/// does not converge.
pub fn krylov_nonsym<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    restart: usize,
    cap: usize,
) -> Result<(Vec<T>, SolveReport)> {
    let (x, rep) = gmres(a, b, x0, tol, restart, cap);
    if rep.converged {
        return Ok((x, rep));
    }
    if a.dim() <= DENSE_FALLBACK_MAX {
        let lu = DenseLu::factor(a.dim(), a.to_dense())?;
        let x = lu.solve(b);
        let ax = a.matvec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
        let residual = (norm2(&r) / norm2(b)).as_f64();
        return Ok((
            x,
            SolveReport {
                iterations: rep.iterations,
                residual,
                converged: residual <= tol.as_f64(),
            },
        ));
    }
    Err(Error::NotConverged {
        solver: "GMRES",
        iterations: rep.iterations,
        residual: rep.residual,
        tol: tol.as_f64(),
    })
}
