//! Dense numeric kernels: SVD rank, kernel bases, damped Newton.

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows are scaled to unit length before the SVD so that the relative
/// threshold is not dominated by one large row. All-zero rows stay zero.
fn normalized_rows<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > T::zero() {
            row /= norm;
        }
    }
    out
}

/// Singular values of `m` after row normalization, in decreasing order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<T> = normalized_rows(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Rank threshold `max(rows, cols) · ε · σ_max`.
pub fn rank_threshold<T: Scalar>(rows: usize, cols: usize, sigma_max: T) -> T {
    T::lit(rows.max(cols) as f64) * <T as Float>::epsilon() * sigma_max
}

/// Numeric rank: number of singular values above [`rank_threshold`].
pub fn numeric_rank<T: Scalar>(m: &DMatrix<T>) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&smax) => {
            let tau = rank_threshold(m.nrows(), m.ncols(), smax);
            s.iter().filter(|&&v| v > tau).count()
        }
    }
}

/// Orthonormal basis of the right kernel, one column per direction.
pub fn kernel_basis<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad to at least square so the thin SVD yields all of V
    let mut padded = DMatrix::zeros(r.max(c), c);
    padded.rows_mut(0, r).copy_from(&normalized_rows(m));
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(T::zero(), Float::max);
    let tau = rank_threshold(r, c, smax);
    let cols: Vec<DVector<T>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tau || smax == T::zero())
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Ratio of extreme singular values (without row normalization).
pub fn condition_number<T: Scalar>(m: &DMatrix<T>) -> T {
    let s = m.singular_values();
    let max = s.iter().copied().fold(T::zero(), Float::max);
    let min = s.iter().copied().fold(<T as Float>::infinity(), Float::min);
    if min == T::zero() {
        <T as Float>::infinity()
    } else {
        max / min
    }
}

/// Minimum-norm least-squares solution of `a · x = b`.
pub fn min_norm_solve<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(T::zero(), Float::max);
    let eps = rank_threshold(a.nrows(), a.ncols(), smax);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Converged when the max-norm of the residual is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Residual level accepted when progress stalls at round-off.
    pub stall_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-12, max_iter: 50, stall_tol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome<T> {
    pub x: DVector<T>,
    pub iterations: usize,
    pub residual: T,
}

fn fmt_point<T: Scalar>(x: &DVector<T>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{:.6e}", v.to_f64_lossy())).collect();
    format!("[{}]", parts.join(", "))
}

fn max_abs<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |a, &b| Float::max(a, Float::abs(b)))
}

/// Damped Newton for a square system. `system` returns the residual and its
/// Jacobian at a point. Steps are halved until the residual decreases.
/// A singular Jacobian falls back to the minimum-norm step.
pub fn newton_solve<T, F>(mut system: F, x0: DVector<T>, opts: &NewtonOptions) -> Result<NewtonOutcome<T>>
where
    T: Scalar,
    F: FnMut(&DVector<T>) -> Result<(DVector<T>, DMatrix<T>)>,
{
    let tol = T::lit(opts.tol);
    let mut x = x0;
    let (mut r, mut jac) = system(&x)?;
    if jac.nrows() != jac.ncols() || jac.nrows() != r.len() || x.len() != r.len() {
        return Err(Error::Dimension(format!(
            "Newton needs a square system, got {} equations in {} unknowns",
            r.len(),
            x.len()
        )));
    }
    let mut rn = max_abs(&r);
    for it in 0..=opts.max_iter {
        if rn <= tol {
            return Ok(NewtonOutcome { x, iterations: it, residual: rn });
        }
        if it == opts.max_iter {
            break;
        }
        // rank-deficient Jacobians take the minimum-norm step
        let step = match jac.clone().lu().solve(&(-&r)) {
            Some(s) if s.iter().all(|v| Float::is_finite(*v)) => s,
            _ => min_norm_solve(&jac, &(-&r)),
        };
        if max_abs(&step) == T::zero() || !step.iter().all(|v| Float::is_finite(*v)) {
            return Err(Error::SingularJacobian { point: fmt_point(&x) });
        }
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..30 {
            let trial = &x + &step * alpha;
            if let Ok((rt, jt)) = system(&trial) {
                let tn = max_abs(&rt);
                if Float::is_finite(tn) && tn < rn {
                    accepted = Some((trial, rt, jt, tn));
                    break;
                }
            }
            alpha *= T::lit(0.5);
        }
        match accepted {
            Some((xt, rt, jt, tn)) => {
                x = xt;
                r = rt;
                jac = jt;
                rn = tn;
            }
            None if rn <= T::lit(opts.stall_tol) => {
                return Ok(NewtonOutcome { x, iterations: it, residual: rn });
            }
            None => break,
        }
    }
    if rn <= T::lit(opts.stall_tol) {
        return Ok(NewtonOutcome { x, iterations: opts.max_iter, residual: rn });
    }
    Err(Error::NewtonDivergence { point: fmt_point(&x), residual: rn.to_f64_lossy() })
}
