use crate::error::{Error, Result};
use crate::linsolve::{dot, norm2, CsrMatrix, SolveReport};
use crate::scalar::Real;

/// Orthonormalises `basis` with modified Gram–Schmidt, dropping dependent vectors.
fn orthonormalize<T: Real>(basis: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(basis.len());
    for v in basis {
        let mut w = v.clone();
        for q in &out {
            let c = dot(q, &w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * *qi;
            }
        }
        let n = norm2(&w);
        if n > T::epsilon() * norm2(v).max(T::min_positive_value()) * T::lit(16.0) {
            for wi in &mut w {
                *wi /= n;
            }
            out.push(w);
        }
    }
    out
}

fn project_out<T: Real>(q: &[Vec<T>], v: &mut [T]) {
    for qi in q {
        let c = dot(qi, v);
        for (vj, &qj) in v.iter_mut().zip(qi) {
            *vj -= c * qj;
        }
    }
}

/// Conjugate gradients for a symmetric positive semidefinite `A` whose kernel
/// is spanned by `null_basis`.
///
/// The right-hand side and every residual are projected off the kernel, and
/// the returned solution is orthogonal to it. The reported residual is the
/// recomputed `‖P(b − Ax)‖ / ‖Pb‖`.
pub fn cg_deflated<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    null_basis: &[Vec<T>],
    tol: T,
    cap: usize,
    x0: Option<&[T]>,
) -> Result<(Vec<T>, SolveReport)> {
    let n = a.dim();
    let q = orthonormalize(null_basis);
    let mut rhs = b.to_vec();
    project_out(&q, &mut rhs);
    let bnorm = norm2(&rhs);
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![T::zero(); n],
    };
    project_out(&q, &mut x);
    if bnorm == T::zero() {
        return Ok((
            vec![T::zero(); n],
            SolveReport {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        ));
    }
    let mut ax = a.matvec(&x);
    let mut r: Vec<T> = rhs.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
    project_out(&q, &mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    let mut ap = vec![T::zero(); n];
    let mut restarts = 0;
    let residual = loop {
        while rr.sqrt() > tol * bnorm && iterations < cap {
            a.matvec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= T::zero() {
                break;
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            // Periodic residual replacement keeps the recurrence honest.
            if iterations % 50 == 0 {
                a.matvec_into(&x, &mut ax);
                for i in 0..n {
                    r[i] = rhs[i] - ax[i];
                }
            }
            project_out(&q, &mut r);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        project_out(&q, &mut x);
        a.matvec_into(&x, &mut ax);
        let mut res: Vec<T> = rhs.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
        project_out(&q, &mut res);
        let residual = (norm2(&res) / bnorm).as_f64();
        // The recurrence can drift below the true residual; restart from the latter.
        if residual <= tol.as_f64() || iterations >= cap || restarts >= 5 {
            break residual;
        }
        restarts += 1;
        r = res;
        p = r.clone();
        rr = dot(&r, &r);
    };
    let converged = residual <= tol.as_f64();
    if !converged {
        return Err(Error::NotConverged {
            solver: "conjugate gradients",
            iterations,
            residual,
            tol: tol.as_f64(),
        });
    }
    Ok((
        x,
        SolveReport {
            iterations,
            residual,
            converged,
        },
    ))
}
