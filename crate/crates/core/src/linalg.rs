//! Dense kernels: one-sided Jacobi SVD and Gram-Schmidt orthonormalisation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Orthogonality threshold per vector entry: rounding in a length-L dot
/// product is of order `L·ε`, so nothing tighter is attainable.
const JACOBI_TOL_PER_ENTRY: f64 = f64::EPSILON;
const MAX_SWEEPS: usize = 100;

/// Left singular vectors and the full singular spectrum of a matrix.
#[derive(Debug, Clone)]
pub struct LeftSvd {
    /// N×r, orthonormal columns, r = min(N, M).
    pub u: DMatrix<f64>,
    /// Length r, nonincreasing.
    pub singular_values: Vec<f64>,
}

/// Thin SVD of `a` (N×M) by one-sided Jacobi rotations, keeping only `U` and `σ`.
///
/// When M ≤ N the columns of `a` are orthogonalised directly and U is read off the
/// rotated columns. When M > N, `a = Rᵀ Qᵀ` from a QR factorisation of `aᵀ` and
/// the square factor `Rᵀ`, which has the same U and σ, is used instead.
/// Directions whose singular value is at rounding level are replaced by an
/// orthonormal completion. Each column of U is sign-normalised so its
/// largest-magnitude entry is positive.
pub fn left_svd(a: &DMatrix<f64>) -> Result<LeftSvd> {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Err(Error::Invalid("SVD of an empty matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "SVD input contains non-finite entries".into(),
        ));
    }

    let b = if m > n {
        a.transpose().qr().r().transpose()
    } else {
        a.clone()
    };
    let mut cols: Vec<Vec<f64>> = b
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    jacobi_orthogonalise(&mut cols)?;
    let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let singular_values: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    let null_tol = singular_values[0] * n.max(m) as f64 * f64::EPSILON;
    let mut sorted: Vec<Vec<f64>> = Vec::with_capacity(order.len());
    let mut cursor = 0;
    for (j, &i) in order.iter().enumerate() {
        let s = singular_values[j];
        let col = if s > null_tol {
            // columns with small σ are only orthogonal to rounding relative to σ_1
            let mut v: Vec<f64> = cols[i].iter().map(|x| x / s).collect();
            if reorthogonalise(&mut v, &sorted, 0.5) {
                v
            } else {
                completion_vector(&sorted, n, &mut cursor)?
            }
        } else {
            completion_vector(&sorted, n, &mut cursor)?
        };
        sorted.push(col);
    }

    for col in &mut sorted {
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &x)| {
                if x.abs() > best.1 {
                    (i, x.abs())
                } else {
                    best
                }
            })
            .0;
        if col[pivot] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let r = sorted.len();
    let u = DMatrix::from_fn(n, r, |i, j| sorted[j][i]);
    Ok(LeftSvd { u, singular_values })
}

/// Rotate the vectors in `cols` pairwise until they are mutually orthogonal.
///
/// A pair counts as orthogonal when its inner product is below the relative
/// tolerance, or below rounding level of the whole matrix.
fn jacobi_orthogonalise(cols: &mut [Vec<f64>]) -> Result<()> {
    let k = cols.len();
    let len = cols.first().map_or(0, |c| c.len());
    let tol = JACOBI_TOL_PER_ENTRY * len.max(4) as f64;
    let total: f64 = cols.iter().map(|c| dot(c, c)).sum();
    let floor = f64::EPSILON * total;
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        // squared norms, refreshed every sweep and updated exactly by each rotation
        let mut sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        for p in 0..k {
            for q in p + 1..k {
                let (alpha, beta) = (sq[p], sq[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cols, p, q, c, s);
                sq[p] = alpha - t * gamma;
                sq[q] = beta + t * gamma;
            }
        }
        if !rotated {
            log::debug!("Jacobi SVD converged after {} sweeps", sweep + 1);
            return Ok(());
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
    )))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Two-pass projection of `v` off `basis`, then normalisation. Returns false
/// if less than `keep` of the norm of `v` survives.
fn reorthogonalise(v: &mut [f64], basis: &[Vec<f64>], keep: f64) -> bool {
    for _ in 0..2 {
        for b in basis {
            let d = dot(b, v);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let nv = norm(v);
    if nv < keep {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    true
}

/// Next unit vector `e_k`, `k ≥ *cursor`, that survives projection off `basis`.
///
/// A rejected `e_k` stays rejected as the basis grows, so the cursor only advances.
fn completion_vector(basis: &[Vec<f64>], n: usize, cursor: &mut usize) -> Result<Vec<f64>> {
    while *cursor < n {
        let mut v = vec![0.0; n];
        v[*cursor] = 1.0;
        *cursor += 1;
        // some unit vector keeps at least 1/n of its squared norm, so this always terminates
        if reorthogonalise(&mut v, basis, (0.5 / n as f64).sqrt()) {
            return Ok(v);
        }
    }
    Err(Error::Numerical("cannot complete orthonormal basis".into()))
}

/// Orthonormalise the columns of `a` with modified Gram-Schmidt (two passes).
///
/// Fails if a column loses more than `rank_tol` of its norm to the previous
/// ones, i.e. the columns are numerically dependent.
pub fn gram_schmidt(a: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        let original = q.column(j).norm();
        for _ in 0..2 {
            for k in 0..j {
                let d = q.column(k).dot(&q.column(j));
                let qk = q.column(k).clone_owned();
                q.column_mut(j).axpy(-d, &qk, 1.0);
            }
        }
        let nj = q.column(j).norm();
        if original == 0.0 || nj <= rank_tol * original {
            return Err(Error::Numerical(format!(
                "columns are linearly dependent at column {j}"
            )));
        }
        q.column_mut(j).scale_mut(1.0 / nj);
    }
    Ok(q)
}

/// 2-norm condition number of a square matrix.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    let svd = left_svd(a)?;
    let smax = svd.singular_values[0];
    let smin = *svd.singular_values.last().unwrap();
    Ok(if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
