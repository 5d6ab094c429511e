//! Greedy DEIM sensor placement and the interpolatory reconstruction matrix.
//!
//! All indices are 0-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::condition_number;

/// Largest admissible condition number of the selected row block `U(𝓘, :)`.
pub const MAX_BLOCK_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSelection {
    /// Selected locations, in greedy selection order.
    pub indices: Vec<usize>,
    /// Sorted, duplicate-free candidate set the selection was drawn from.
    pub candidates: Vec<usize>,
}

impl SensorSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn normalise_candidates(candidates: &[usize], n: usize) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Invalid("candidate set is empty".into()));
    }
    let mut c = candidates.to_vec();
    c.sort_unstable();
    c.dedup();
    if let Some(&bad) = c.iter().find(|&&i| i >= n) {
        return Err(Error::Invalid(format!(
            "candidate index {bad} out of range 0..{n}"
        )));
    }
    Ok(c)
}

/// Select `n_s` locations from `candidates` using the leading `n_s` columns of `modes`.
///
/// The first index maximises `|U(·,1)|`; each later one maximises the residual of
/// interpolating column ℓ from the columns before it at the indices chosen so far.
/// The argmax runs over unselected candidates only, ties going to the lowest index.
pub fn deim_select(
    modes: &DMatrix<f64>,
    candidates: &[usize],
    n_s: usize,
) -> Result<SensorSelection> {
    let n = modes.nrows();
    if n_s == 0 || n_s > modes.ncols() {
        return Err(Error::Invalid(format!(
            "n_s = {n_s} must be in 1..={} (basis width)",
            modes.ncols()
        )));
    }
    let candidates = normalise_candidates(candidates, n)?;
    if n_s > candidates.len() {
        return Err(Error::Invalid(format!(
            "n_s = {n_s} exceeds the {} available candidates",
            candidates.len()
        )));
    }

    let mut indices = Vec::with_capacity(n_s);
    let first = modes.column(0).into_owned();
    indices.push(argmax_abs(&first, &candidates, &indices));

    for l in 1..n_s {
        let block = DMatrix::from_fn(l, l, |r, c| modes[(indices[r], c)]);
        let rhs = nalgebra::DVector::from_iterator(l, indices.iter().map(|&i| modes[(i, l)]));
        let coeffs = block.lu().solve(&rhs).ok_or_else(|| {
            Error::Numerical(format!(
                "interpolation block is singular at step {}; basis and candidate set are incompatible",
                l + 1
            ))
        })?;
        let residual = modes.column(l) - modes.columns(0, l) * coeffs;
        indices.push(argmax_abs(&residual, &candidates, &indices));
    }

    Ok(SensorSelection {
        indices,
        candidates,
    })
}

fn argmax_abs(v: &nalgebra::DVector<f64>, candidates: &[usize], taken: &[usize]) -> usize {
    let mut best = None;
    let mut best_val = f64::NEG_INFINITY;
    for &i in candidates {
        if taken.contains(&i) {
            continue;
        }
        let a = v[i].abs();
        if a > best_val {
            best_val = a;
            best = Some(i);
        }
    }
    // candidate count was checked against n_s
    best.expect("unselected candidate available")
}

/// `R = U · U(𝓘, :)⁻¹`, using the leading `selection.len()` modes.
pub fn reconstruction_matrix(
    modes: &DMatrix<f64>,
    selection: &SensorSelection,
) -> Result<DMatrix<f64>> {
    let k = selection.len();
    if k == 0 || k > modes.ncols() {
        return Err(Error::Invalid(format!(
            "selection of {k} sensors does not fit a basis of width {}",
            modes.ncols()
        )));
    }
    if let Some(&bad) = selection.indices.iter().find(|&&i| i >= modes.nrows()) {
        return Err(Error::Invalid(format!("sensor index {bad} out of range")));
    }
    let u = modes.columns(0, k);
    let block = DMatrix::from_fn(k, k, |r, c| u[(selection.indices[r], c)]);
    let cond = condition_number(&block)?;
    if cond > MAX_BLOCK_CONDITION {
        return Err(Error::Numerical(format!(
            "selected block U(I,:) is ill-conditioned (cond = {cond:e})"
        )));
    }
    log::debug!("selected block condition number {cond:.3e}");
    let inv = block
        .try_inverse()
        .ok_or_else(|| Error::Numerical("selected block U(I,:) is singular".into()))?;
    Ok(u * inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example_modes() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5])
    }

    #[test]
    fn hand_trace_full_candidates() {
        let s = deim_select(&example_modes(), &[0, 1, 2], 2).unwrap();
        assert_eq!(s.indices, vec![0, 1]);
    }

    #[test]
    fn hand_trace_restricted_candidates() {
        let s = deim_select(&example_modes(), &[1, 2], 2).unwrap();
        assert_eq!(s.indices, vec![2, 1]);
        assert_eq!(s.candidates, vec![1, 2]);
    }

    #[test]
    fn single_sensor_is_largest_first_mode_entry() {
        let u = DMatrix::from_row_slice(4, 2, &[0.1, 1.0, -0.7, 0.0, 0.3, 0.0, 0.7, 0.0]);
        assert_eq!(deim_select(&u, &[0, 1, 2, 3], 1).unwrap().indices, vec![1]);
        assert_eq!(deim_select(&u, &[0, 2, 3], 1).unwrap().indices, vec![3]);
    }

    #[test]
    fn argument_errors() {
        let u = example_modes();
        assert!(deim_select(&u, &[0, 1, 2], 3).is_err());
        assert!(deim_select(&u, &[], 1).is_err());
        assert!(deim_select(&u, &[5], 1).is_err());
        assert!(deim_select(&u, &[2], 2).is_err());
    }

    #[test]
    fn singular_interior_system() {
        // column 1 vanishes on the candidates, so the first pick has U(I,1) = 0
        let u = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let err = deim_select(&u, &[0, 1], 2).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn reconstruction_interpolates_at_sensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
        let u = a.qr().q();
        let cands: Vec<usize> = (0..12).collect();
        let s = deim_select(&u, &cands, 4).unwrap();
        let r = reconstruction_matrix(&u, &s).unwrap();
        let at = DMatrix::from_fn(4, 4, |i, j| r[(s.indices[i], j)]);
        assert!((at - DMatrix::identity(4, 4)).abs().max() < 1e-10);
    }

    #[test]
    fn orthogonal_block_inverse_is_transpose() {
        // rows 0 and 2 of U form a rotation
        let (c, s) = (0.6, 0.8);
        let u = DMatrix::from_row_slice(3, 2, &[c, -s, 0.0, 0.0, s, c]);
        let sel = SensorSelection {
            indices: vec![0, 2],
            candidates: vec![0, 1, 2],
        };
        let r = reconstruction_matrix(&u, &sel).unwrap();
        let block = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let expected = &u * block.transpose();
        assert!((r - expected).abs().max() < 1e-15);
    }

    #[test]
    fn full_sampling_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let u = a.qr().q();
        let s = deim_select(&u, &[0, 1, 2, 3, 4], 5).unwrap();
        let r = reconstruction_matrix(&u, &s).unwrap();
        // R = U U(I,:)^{-1} is the permutation taking sensor order back to location order
        for (k, &i) in s.indices.iter().enumerate() {
            for row in 0..5 {
                let e = if row == i { 1.0 } else { 0.0 };
                assert!((r[(row, k)] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ill_conditioned_block_rejected() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14, 0.0, 0.0]);
        let sel = SensorSelection {
            indices: vec![0, 1],
            candidates: vec![0, 1, 2],
        };
        assert!(matches!(
            reconstruction_matrix(&u, &sel),
            Err(Error::Numerical(_))
        ));
    }
}
