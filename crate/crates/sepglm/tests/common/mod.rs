//! Shared oracles and generators for the acceptance suite.
//!
//! Everything here is deliberately independent of the library's production
//! code paths: the maximum-likelihood oracle runs its own grid search and
//! Newton refinement on its own derivative formulas, the derivative checks
//! use finite differences of the bare log-likelihood, and the combo-count
//! oracle works in exact rational arithmetic. Agreement with the library is
//! therefore evidence, not tautology.

use nalgebra::{Cholesky, DMatrix, DVector};
use num::{BigInt, BigRational, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepglm::design::{ColumnKind, ColumnMeta, DesignMatrix};

/// Builds a design with an intercept followed by the given columns.
pub fn manual_design(cols: &[Vec<f64>], y: Vec<f64>) -> DesignMatrix {
    let n = y.len();
    let k = cols.len() + 1;
    let mut x = DMatrix::zeros(n, k);
    for i in 0..n {
        x[(i, 0)] = 1.0;
    }
    for (c, col) in cols.iter().enumerate() {
        assert_eq!(col.len(), n, "column length mismatch");
        for i in 0..n {
            x[(i, c + 1)] = col[i];
        }
    }
    let columns = (0..k)
        .map(|j| ColumnMeta {
            kind: if j == 0 {
                ColumnKind::Intercept
            } else {
                ColumnKind::HistoryLag(j)
            },
            name: if j == 0 {
                "intercept".to_string()
            } else {
                format!("col_{j}")
            },
        })
        .collect();
    DesignMatrix {
        x,
        y: DVector::from_vec(y),
        columns,
        row_origin: (0..n).map(|i| (0u32, i)).collect(),
        band_edges: vec![],
        warnings: vec![],
    }
}

/// A random design with continuous covariates and a Poisson response, retried
/// until no column is perfect by definition and the spiking rows comfortably
/// outnumber the parameters (so no combination of columns can vanish on them).
pub fn random_clean_design(seed: u64, n: usize, n_covariates: usize) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let cols: Vec<Vec<f64>> = (0..n_covariates)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let theta: f64 =
                -0.3 + cols.iter().enumerate().map(|(c, col)| 0.4 * (c as f64 + 1.0) * col[i]).sum::<f64>();
            let lam = theta.exp();
            // Inverse-CDF Poisson draw; rates here are below e, so the loop is short.
            let u: f64 = rng.random();
            let mut acc = (-lam).exp();
            let mut cdf = acc;
            let mut count = 0.0;
            while u > cdf && count < 50.0 {
                count += 1.0;
                acc *= lam / count;
                cdf += acc;
            }
            y.push(count);
        }
        let spiking = y.iter().filter(|&&v| v > 0.0).count();
        let clean = cols.iter().all(|col| {
            (0..n).any(|i| col[i] != 0.0 && y[i] > 0.0)
        });
        if spiking >= n_covariates + 5 && clean {
            return manual_design(&cols, y);
        }
    }
}

/// Poisson log-likelihood written directly from the density, independent of
/// the library's evaluation code.
pub fn bare_loglik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let mut theta = 0.0;
        for j in 0..x.ncols() {
            theta += x[(i, j)] * beta[j];
        }
        ll += y[i] * theta - theta.exp();
    }
    ll
}

/// Brute-force maximum likelihood: a dense grid over `[-4, 4]^k` picks the
/// best starting corner, then damped Newton steps with handwritten gradient
/// and Hessian formulas refine it until the gradient is below `1e-10`.
///
/// Only the linear solve is delegated to `nalgebra`; every statistical
/// quantity is computed here from scratch.
pub fn oracle_mle(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let k = x.ncols();
    assert!(k <= 3, "oracle grid is sized for at most 3 parameters");

    // Dense grid stage.
    let axis: Vec<f64> = (-4..=4).map(|v| v as f64).collect();
    let mut best = DVector::zeros(k);
    let mut best_ll = f64::NEG_INFINITY;
    let mut idx = vec![0usize; k];
    loop {
        let beta = DVector::from_iterator(k, idx.iter().map(|&i| axis[i]));
        let ll = bare_loglik(x, y, &beta);
        if ll > best_ll {
            best_ll = ll;
            best = beta;
        }
        // Odometer increment over the k grid axes.
        let mut d = 0;
        loop {
            if d == k {
                break;
            }
            idx[d] += 1;
            if idx[d] < axis.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == k {
            break;
        }
    }

    // Newton stage with step halving on the oracle's own likelihood.
    let mut beta = best;
    let mut ll = best_ll;
    for _ in 0..80 {
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..x.nrows() {
            let mut theta = 0.0;
            for j in 0..k {
                theta += x[(i, j)] * beta[j];
            }
            let lam = theta.exp();
            for a in 0..k {
                grad[a] += x[(i, a)] * (y[i] - lam);
                for b in 0..k {
                    hess[(a, b)] += x[(i, a)] * x[(i, b)] * lam;
                }
            }
        }
        if grad.amax() < 1e-10 {
            break;
        }
        let chol = Cholesky::new(hess).expect("oracle Hessian is positive definite");
        let full_step = chol.solve(&grad);
        let mut scale = 1.0;
        loop {
            let candidate = &beta + &full_step * scale;
            let cand_ll = bare_loglik(x, y, &candidate);
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = candidate;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
            assert!(scale > 1e-12, "oracle line search failed to make progress");
        }
    }
    beta
}

/// Central-difference gradient of `f` at `at`.
pub fn numeric_grad(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>, h: f64) -> DVector<f64> {
    let k = at.len();
    let mut g = DVector::zeros(k);
    for j in 0..k {
        let step = h * (1.0 + at[j].abs());
        let mut up = at.clone();
        up[j] += step;
        let mut down = at.clone();
        down[j] -= step;
        g[j] = (f(&up) - f(&down)) / (2.0 * step);
    }
    g
}

/// Central-difference Hessian of `f` at `at` (four-point stencil per entry).
pub fn numeric_hessian(
    f: impl Fn(&DVector<f64>) -> f64,
    at: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let k = at.len();
    let mut hess = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let ha = h * (1.0 + at[a].abs());
            let hb = h * (1.0 + at[b].abs());
            let mut pp = at.clone();
            pp[a] += ha;
            pp[b] += hb;
            let mut pm = at.clone();
            pm[a] += ha;
            pm[b] -= hb;
            let mut mp = at.clone();
            mp[a] -= ha;
            mp[b] += hb;
            let mut mm = at.clone();
            mm[a] -= ha;
            mm[b] -= hb;
            hess[(a, b)] = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * ha * hb);
        }
    }
    hess
}

/// Exact rank of an integer matrix via Gaussian elimination over the
/// rationals. Rows are `m[i]`, all of equal length.
pub fn rational_rank(m: &[Vec<i64>]) -> usize {
    if m.is_empty() || m[0].is_empty() {
        return 0;
    }
    let rows = m.len();
    let cols = m[0].len();
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .map(|r| r.iter().map(|&v| BigRational::from(BigInt::from(v))).collect())
        .collect();
    let mut rank = 0;
    for c in 0..cols {
        let pivot = (rank..rows).find(|&r| !a[r][c].is_zero());
        let Some(p) = pivot else { continue };
        a.swap(rank, p);
        let lead = a[rank][c].clone();
        for r in 0..rows {
            if r != rank && !a[r][c].is_zero() {
                let factor = &a[r][c] / &lead;
                for cc in c..cols {
                    let sub = &factor * &a[rank][cc];
                    a[r][cc] = &a[r][cc] - sub;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Number of generated perfect predictors a design supports, computed in
/// exact arithmetic: the dimension of the null space of the candidate
/// columns restricted to spiking rows, minus the dimension of their full
/// null space (pure collinearities do not count). Candidate columns are the
/// non-intercept columns outside `s0` that are nonzero somewhere.
pub fn oracle_combo_count(x: &[Vec<i64>], y: &[i64], s0: &[usize]) -> usize {
    let n = x.len();
    assert!(n > 0);
    let k = x[0].len();
    let candidates: Vec<usize> = (1..k)
        .filter(|j| !s0.contains(j))
        .filter(|&j| (0..n).any(|i| x[i][j] != 0))
        .collect();
    if candidates.is_empty() {
        return 0;
    }
    let restrict = |rows: &[usize]| -> Vec<Vec<i64>> {
        rows.iter()
            .map(|&i| candidates.iter().map(|&j| x[i][j]).collect())
            .collect()
    };
    let all_rows: Vec<usize> = (0..n).collect();
    let spiking: Vec<usize> = (0..n).filter(|&i| y[i] > 0).collect();
    let rank_full = rational_rank(&restrict(&all_rows));
    let rank_spiking = if spiking.is_empty() {
        0
    } else {
        rational_rank(&restrict(&spiking))
    };
    // null(spiking) has dimension m - rank_spiking, null(full) m - rank_full.
    rank_full - rank_spiking
}

/// Definitional scan for single perfect columns: non-intercept columns that
/// are nonzero somewhere but only on rows with zero response. All-zero
/// columns are listed separately.
pub fn oracle_perfect_columns(x: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<usize>, Vec<usize>) {
    let mut perfect = vec![];
    let mut empty = vec![];
    for j in 1..x.ncols() {
        let active: Vec<usize> = (0..x.nrows()).filter(|&i| x[(i, j)] != 0.0).collect();
        if active.is_empty() {
            empty.push(j);
        } else if active.iter().all(|&i| y[i] == 0.0) {
            perfect.push(j);
        }
    }
    (perfect, empty)
}
