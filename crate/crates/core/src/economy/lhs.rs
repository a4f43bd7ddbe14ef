use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Keeps jittered points strictly inside their stratum so the
/// stratification survives the inverse-CDF round trip.
const STRATUM_MARGIN: f64 = 1e-6;

/// Lower-triangular factor `L` with `L Lᵀ = cov` for a positive
/// semidefinite matrix. Zero pivots yield zero columns.
pub fn psd_cholesky<const D: usize>(cov: &[[f64; D]; D]) -> Result<[[f64; D]; D]> {
    let scale = (0..D).map(|i| cov[i][i].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = [[0.0; D]; D];
    for j in 0..D {
        let pivot = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if pivot < -tol {
            return Err(Error::NotPositiveSemidefinite { index: j, pivot });
        }
        if pivot <= tol {
            // Singular direction: the rest of the column must vanish too.
            for i in j + 1..D {
                let off = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if off.abs() > 1e-6 * scale.sqrt().max(f64::MIN_POSITIVE) {
                    return Err(Error::NotPositiveSemidefinite { index: j, pivot });
                }
            }
            continue;
        }
        let d = pivot.sqrt();
        l[j][j] = d;
        for i in j + 1..D {
            let off = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = off / d;
        }
    }
    Ok(l)
}

/// Latin hypercube sample of `n` points in `[0, 1)^D`: in every column each
/// of the `n` equiprobable strata holds exactly one point.
pub fn lhs_uniforms<const D: usize, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; D]> {
    let mut out = vec![[0.0; D]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..D {
        strata.shuffle(rng);
        for (row, &k) in out.iter_mut().zip(&strata) {
            let jitter: f64 = rng.random();
            let jitter = STRATUM_MARGIN + jitter * (1.0 - 2.0 * STRATUM_MARGIN);
            row[d] = (k as f64 + jitter) / n as f64;
        }
    }
    out
}

fn apply_factor<const D: usize>(l: &[[f64; D]; D], z: &[f64; D]) -> [f64; D] {
    let mut x = [0.0; D];
    for i in 0..D {
        x[i] = (0..=i).map(|k| l[i][k] * z[k]).sum();
    }
    x
}

/// Latin hypercube sampled normal shocks with covariance `cov`.
///
/// Standard normals come from the inverse CDF of a stratified uniform
/// sample; each row is then multiplied by the Cholesky factor of `cov`.
pub fn lhs_normals<const D: usize, R: Rng + ?Sized>(
    n: usize,
    cov: &[[f64; D]; D],
    rng: &mut R,
) -> Result<Vec<[f64; D]>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    let l = psd_cholesky(cov)?;
    let std = Normal::standard();
    Ok(lhs_uniforms::<D, R>(n, rng)
        .into_iter()
        .map(|u| apply_factor(&l, &u.map(|p| std.inverse_cdf(p))))
        .collect())
}

/// Plain Monte Carlo counterpart of [`lhs_normals`].
pub fn iid_normals<const D: usize, R: Rng + ?Sized>(
    n: usize,
    cov: &[[f64; D]; D],
    rng: &mut R,
) -> Result<Vec<[f64; D]>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    let l = psd_cholesky(cov)?;
    Ok((0..n)
        .map(|_| {
            let mut z = [0.0; D];
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            apply_factor(&l, &z)
        })
        .collect())
}
