//! Goodness-of-fit diagnostics: deviance ratios, effective degrees of
//! freedom, time-rescaling KS analysis, bootstrap confidence intervals, and
//! parameter correlations.
//!
//! All rate vectors are per-bin expected counts (the model's natural unit);
//! the time-rescaling integral therefore sums them directly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Trial, TrialSet};
use crate::design::{DesignMatrix, DesignRecipe};
use crate::error::{Error, Result};
use crate::glm::{invert_spd, FitResult};
use crate::separation::{detect, DEFAULT_TOL};
use crate::strategies::{fit_strategy, FittedStrategy, StrategyConfig};

/// Poisson deviance `2 sum[y log(y/rate) - (y - rate)]` with `0 log 0 = 0`.
///
/// Non-negative, zero exactly when `y == rate` elementwise, and positive
/// infinity when a spike lands on a zero rate. Errors on negative rates.
pub fn deviance(y: &DVector<f64>, rates: &DVector<f64>) -> Result<f64> {
    assert_eq!(y.len(), rates.len(), "deviance: length mismatch");
    let mut d = 0.0;
    for i in 0..y.len() {
        let (yi, li) = (y[i], rates[i]);
        if li < 0.0 || li.is_nan() {
            return Err(Error::NegativeRate { row: i });
        }
        if yi > 0.0 {
            if li == 0.0 {
                return Ok(f64::INFINITY);
            }
            d += yi * (yi / li).ln() - (yi - li);
        } else {
            d += li;
        }
    }
    Ok(2.0 * d)
}

/// Deviance of `y` against its own constant-rate (null) fit, whose maximum
/// likelihood rate is the mean count.
pub fn null_deviance(y: &DVector<f64>) -> Result<f64> {
    let mean = y.mean();
    deviance(y, &DVector::from_element(y.len(), mean))
}

/// Fraction of null deviance explained: `(d_null - d_model) / d_null`.
/// Negative when the model fits worse than a constant rate; negative
/// infinity when the model zeroes out an observed spike.
pub fn deviance_ratio(d_model: f64, d_null: f64) -> Result<f64> {
    if !(d_null > 0.0) {
        return Err(Error::NullDevianceZero);
    }
    Ok((d_null - d_model) / d_null)
}

/// In-sample deviance ratio of predicted rates on a design.
pub fn in_sample_r(d: &DesignMatrix, rates: &DVector<f64>) -> Result<f64> {
    deviance_ratio(deviance(&d.y, rates)?, null_deviance(&d.y)?)
}

/// Held-out deviance ratio: the model's rates on a test design are scored
/// against the test data's own null fit. The design must come from the same
/// recipe (frozen band edges) as the training design.
pub fn holdout_r(fitted: &FittedStrategy, test: &DesignMatrix) -> Result<f64> {
    let rates = fitted.rates(test)?;
    deviance_ratio(deviance(&test.y, &rates)?, null_deviance(&test.y)?)
}

/// Effective degrees of freedom: the trace of the smoothing hat matrix
/// `W^{1/2} X A^{-1} X' W^{1/2}` at the fitted rates, where `A` is the
/// strategy's information matrix at the solution with the likelihood weight
/// divided out (`X'WX` for maximum likelihood fits, `X'WX + prior
/// precision` for the Bayesian MAP, `X'WX + 2L/(1-L) Id` for the ridge).
///
/// `d` must be the design the optimizer actually ran on (the transformed
/// design for the spline strategy), matching `fit.rows_used` and
/// `fit.fisher_coords`. Equals the fitted parameter count for unpenalized
/// full-rank fits.
pub fn effective_dof(d: &DesignMatrix, fit: &FitResult) -> Result<f64> {
    let coords = &fit.fisher_coords;
    let k = coords.len();
    assert!(k > 0, "effective dof: fit covers no coordinates");
    let a = &fit.fisher / fit.likelihood_weight;
    let a_inv = invert_spd(&a, 1e-10, "effective degrees of freedom")?;

    let beta_sub = DVector::from_iterator(
        k,
        coords.iter().map(|&j| {
            fit.beta[j]
                .finite()
                .expect("fisher coordinates are finite by construction")
        }),
    );
    let mut trace = 0.0;
    for &r in &fit.rows_used {
        let xr = DVector::from_iterator(k, coords.iter().map(|&j| d.x[(r, j)]));
        let rate = (xr.dot(&beta_sub)).exp();
        trace += rate * (xr.transpose() * &a_inv * &xr)[(0, 0)];
    }
    Ok(trace)
}

/// Time-rescaling transform for one trial.
///
/// `counts[i]` spikes in bin `i` with per-bin expected count `bin_means[i]`.
/// Each waiting time between consecutive spikes is rescaled by the
/// accumulated expected count `z` and mapped to `u = 1 - exp(-z)`, which is
/// uniform on `[0, 1)` under a well-calibrated model. A bin holding `m`
/// spikes splits its mass into `m` equal chunks, one ending at each spike.
pub fn rescale_times(counts: &[f64], bin_means: &[f64]) -> Vec<f64> {
    assert_eq!(counts.len(), bin_means.len(), "rescale: length mismatch");
    let mut u = Vec::new();
    let mut z = 0.0;
    for (&c, &m) in counts.iter().zip(bin_means) {
        let spikes = c as usize;
        if spikes == 0 {
            z += m;
            continue;
        }
        let chunk = m / spikes as f64;
        for _ in 0..spikes {
            z += chunk;
            u.push(1.0 - (-z).exp());
            z = 0.0;
        }
    }
    u
}

/// Rescaled waiting-time values for every trial in a design, resetting the
/// accumulator at trial boundaries. `rates` are per-bin expected counts
/// aligned with the design rows.
pub fn rescaled_u_by_trial(d: &DesignMatrix, rates: &DVector<f64>) -> Vec<f64> {
    let mut u = Vec::new();
    let n = d.n_rows();
    let mut start = 0;
    while start < n {
        let trial = d.row_origin[start].0;
        let mut end = start;
        while end < n && d.row_origin[end].0 == trial {
            end += 1;
        }
        let counts: Vec<f64> = (start..end).map(|i| d.y[i]).collect();
        let means: Vec<f64> = (start..end).map(|i| rates[i]).collect();
        u.extend(rescale_times(&counts, &means));
        start = end;
    }
    u
}

/// Kolmogorov–Smirnov comparison of rescaled waiting times against the
/// uniform distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct KsAnalysis {
    /// Supremum distance between the empirical and uniform CDFs.
    pub statistic: f64,
    /// 95% acceptance bound.
    pub bound: f64,
    pub pass: bool,
    pub n: usize,
}

/// KS analysis with the asymptotic 95% bound `1.36 / sqrt(n)`. Returns
/// `None` for an empty sample (no spikes).
pub fn ks_analysis(u: &[f64]) -> Option<KsAnalysis> {
    ks_analysis_with(u, false)
}

/// KS analysis choosing the bound: asymptotic `1.36 / sqrt(n)`, or the
/// finite-sample correction `1.36 / (sqrt(n) + 0.12 + 0.11 / sqrt(n))` when
/// `small_sample` is set.
pub fn ks_analysis_with(u: &[f64], small_sample: bool) -> Option<KsAnalysis> {
    let n = u.len();
    if n == 0 {
        return None;
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("u values are ordered"));
    let nf = n as f64;
    let mut stat: f64 = 0.0;
    for (i, &ui) in sorted.iter().enumerate() {
        let upper = (i as f64 + 1.0) / nf - ui;
        let lower = ui - i as f64 / nf;
        stat = stat.max(upper).max(lower);
    }
    let root = nf.sqrt();
    let bound = if small_sample {
        1.36 / (root + 0.12 + 0.11 / root)
    } else {
        1.36 / root
    };
    Some(KsAnalysis { statistic: stat, bound, pass: stat <= bound, n })
}

/// Bootstrap interval for one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapParam {
    pub name: String,
    /// Replicates where this coefficient came out finite.
    pub finite: usize,
    /// Fraction of completed replicates where the coordinate was flagged
    /// divergent or hit an infinite limit.
    pub divergence_fraction: f64,
    /// 2.5 / 97.5 percentile bounds over clean replicates; undefined when
    /// every replicate diverged.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Trial-resampling bootstrap for one strategy.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub strategy: String,
    pub requested: usize,
    /// Replicates that produced a fit (degenerate resamples are skipped).
    pub completed: usize,
    pub seed: u64,
    pub params: Vec<BootstrapParam>,
    pub warnings: Vec<String>,
}

/// Percentile with linear interpolation between order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p / 100.0 * (n as f64 - 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Resamples whole trials with replacement, refits the strategy on each
/// resample, and summarizes per-coefficient spread and divergence.
///
/// Whole-trial resampling preserves the serial dependence that history
/// terms induce within a trial. Band edges are frozen from the original
/// training design so every replicate bins the stimulus identically.
/// Replicates are deterministic functions of `(seed, replicate index)`,
/// independent of thread scheduling.
pub fn bootstrap_ci(
    trials: &TrialSet,
    recipe: &DesignRecipe,
    strategy: &StrategyConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if b < 50 {
        return Err(Error::Config(format!(
            "bootstrap: need at least 50 replicates, got {b}"
        )));
    }
    let train: Vec<&Trial> = trials.training();
    let n = train.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "bootstrap: need at least 2 training trials to resample, got {n}"
        )));
    }
    let base = recipe.build(&train)?;
    let frozen = recipe.frozen(&base);
    let k = base.n_cols();

    enum Rep {
        Fit { beta: Vec<f64>, finite: Vec<bool>, flagged: Vec<bool> },
        Skipped(String),
    }

    let reps: Result<Vec<Rep>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let picks: Vec<&Trial> =
                (0..n).map(|_| train[rng.random_range(0..n)]).collect();
            let d = frozen.build(&picks)?;
            let report = detect(&d, DEFAULT_TOL)?;
            match fit_strategy(&d, &report, strategy) {
                Ok(fitted) => {
                    let flagged = fitted.divergent_by_column();
                    let finite: Vec<bool> =
                        fitted.beta.iter().map(|c| c.is_finite()).collect();
                    let beta: Vec<f64> =
                        fitted.beta.iter().map(|c| c.as_f64()).collect();
                    Ok(Rep::Fit { beta, finite, flagged })
                }
                Err(Error::DegenerateResponse) => Ok(Rep::Skipped(format!(
                    "replicate {r}: skipped (resample has no spikes)"
                ))),
                Err(e) => Err(e),
            }
        })
        .collect();
    let reps = reps?;

    let mut warnings = vec![];
    let mut fits: Vec<(Vec<f64>, Vec<bool>, Vec<bool>)> = vec![];
    for rep in reps {
        match rep {
            Rep::Fit { beta, finite, flagged } => fits.push((beta, finite, flagged)),
            Rep::Skipped(w) => warnings.push(w),
        }
    }
    let completed = fits.len();
    if completed == 0 {
        return Err(Error::DegenerateResponse);
    }

    let params = (0..k)
        .map(|j| {
            let mut clean: Vec<f64> = vec![];
            let mut finite_count = 0usize;
            let mut flagged_count = 0usize;
            for (beta, finite, flagged) in &fits {
                let bad = flagged[j] || !finite[j];
                if finite[j] {
                    finite_count += 1;
                }
                if bad {
                    flagged_count += 1;
                } else {
                    clean.push(beta[j]);
                }
            }
            clean.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let frac = flagged_count as f64 / completed as f64;
            let (lower, upper) = if clean.is_empty() {
                (None, None)
            } else {
                (
                    Some(percentile(&clean, 2.5)),
                    Some(percentile(&clean, 97.5)),
                )
            };
            BootstrapParam {
                name: base.columns[j].name.clone(),
                finite: finite_count,
                divergence_fraction: frac,
                lower,
                upper,
            }
        })
        .collect();

    Ok(BootstrapSummary {
        strategy: strategy.variant.name().to_string(),
        requested: b,
        completed,
        seed,
        params,
        warnings,
    })
}

/// Correlation structure of the fitted coefficients implied by the
/// strategy's information matrix.
#[derive(Debug, Clone)]
pub struct ParamCorrelation {
    /// Design columns the correlation matrix covers, in matrix order.
    pub coords: Vec<usize>,
    /// `D^{-1/2} A^{-1} D^{-1/2}` with `D = diag(A^{-1})`: unit diagonal,
    /// symmetric, entries in `[-1, 1]`.
    pub matrix: DMatrix<f64>,
    /// Design columns with no curvature information (sentinel coordinates
    /// of a reduced fit); their correlations are undefined.
    pub undefined: Vec<usize>,
}

/// Correlations from the inverse information matrix at the solution.
pub fn param_correlation(fit: &FitResult) -> Result<ParamCorrelation> {
    let cov = invert_spd(&fit.fisher, 1e-10, "parameter correlation")?;
    let k = cov.nrows();
    let mut corr = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let denom = (cov[(i, i)] * cov[(j, j)]).sqrt();
            let v = if i == j { 1.0 } else { cov[(i, j)] / denom };
            corr[(i, j)] = v.clamp(-1.0, 1.0);
        }
    }
    let covered: std::collections::BTreeSet<usize> =
        fit.fisher_coords.iter().copied().collect();
    let undefined = (0..fit.beta.len()).filter(|j| !covered.contains(j)).collect();
    Ok(ParamCorrelation { coords: fit.fisher_coords.clone(), matrix: corr, undefined })
}

/// Per-strategy goodness-of-fit summary assembled by the pipeline runner.
#[derive(Debug, Clone)]
pub struct GofReport {
    pub strategy: String,
    /// Coordinates the optimizer fitted (basis size for the spline,
    /// reduced count for the likelihood limit).
    pub n_optimized: usize,
    pub loglik_train: f64,
    pub converged: bool,
    pub iterations: usize,
    pub divergent: usize,
    pub sentinels: usize,
    /// In-sample deviance ratio; `None` when the null deviance is zero.
    pub r_in_sample: Option<f64>,
    /// Held-out deviance ratio; `None` without held-out trials. Negative
    /// infinity when a held-out spike lands on a zero rate.
    pub r_cv: Option<f64>,
    pub edof: f64,
    /// Relative to the plain-IRLS baseline on the same data; filled by the
    /// comparison runner.
    pub edof_ratio: Option<f64>,
    pub ks: Option<KsAnalysis>,
    pub warnings: Vec<String>,
}

/// Assembles the goodness-of-fit report for one fitted strategy.
pub fn gof_report(
    train: &DesignMatrix,
    fitted: &FittedStrategy,
    held_out: Option<&DesignMatrix>,
    small_sample_ks: bool,
) -> Result<GofReport> {
    let mut warnings = fitted.fit.warnings.clone();
    let rates = fitted.rates(train)?;

    let r_in_sample = match in_sample_r(train, &rates) {
        Ok(r) => Some(r),
        Err(Error::NullDevianceZero) => {
            warnings.push("in-sample deviance ratio undefined: null deviance is zero".into());
            None
        }
        Err(e) => return Err(e),
    };
    let r_cv = match held_out {
        None => None,
        Some(h) => match holdout_r(fitted, h) {
            Ok(r) => Some(r),
            Err(Error::NullDevianceZero) => {
                warnings.push(
                    "held-out deviance ratio undefined: held-out null deviance is zero".into(),
                );
                None
            }
            Err(e) => return Err(e),
        },
    };

    let fit_space = fitted.fitted_design.as_ref().unwrap_or(train);
    let edof = effective_dof(fit_space, &fitted.fit)?;
    let u = rescaled_u_by_trial(train, &rates);
    let ks = ks_analysis_with(&u, small_sample_ks);

    Ok(GofReport {
        strategy: fitted.name().to_string(),
        n_optimized: fitted.n_optimized(),
        loglik_train: fitted.fit.loglik,
        converged: fitted.fit.converged,
        iterations: fitted.fit.iterations,
        divergent: fitted.divergent_count(),
        sentinels: fitted.sentinel_count(),
        r_in_sample,
        r_cv,
        edof,
        edof_ratio: None,
        ks,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BinnedSpikeTrain, StimulusTrace, TrialRole};
    use crate::design::{ColumnKind, ColumnMeta};
    use crate::glm::{irls_fit, Coef, IrlsConfig, Objective};
    use crate::strategies::StrategyVariant;
    use rand::{Rng, SeedableRng};

    fn design(cols: Vec<Vec<f64>>, y: Vec<f64>) -> DesignMatrix {
        let n = y.len();
        let mut x = DMatrix::zeros(n, cols.len() + 1);
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        for (c, col) in cols.iter().enumerate() {
            for i in 0..n {
                x[(i, c + 1)] = col[i];
            }
        }
        let columns = (0..=cols.len())
            .map(|j| ColumnMeta {
                kind: if j == 0 {
                    ColumnKind::Intercept
                } else {
                    ColumnKind::HistoryLag(j)
                },
                name: format!("c{j}"),
            })
            .collect();
        DesignMatrix {
            x,
            y: DVector::from_vec(y),
            columns,
            row_origin: (0..n).map(|i| (0, i as usize)).collect(),
            band_edges: vec![],
            warnings: vec![],
        }
    }

    fn clean_design(seed: u64, n: usize, k: usize) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        design(cols, y)
    }

    fn planted_design(seed: u64, n: usize, k: usize, planted: &[usize]) -> DesignMatrix {
        let mut d = clean_design(seed, n, k);
        for (which, &j) in planted.iter().enumerate() {
            for i in 0..n {
                d.x[(i, j)] = 0.0;
            }
            for s in 0..4 {
                let i = (which * 4 + s * 5 + 3) % n;
                d.x[(i, j)] = 1.0;
                d.y[i] = 0.0;
            }
        }
        d
    }

    fn strategy_fit(d: &DesignMatrix, variant: StrategyVariant) -> FittedStrategy {
        let report = detect(d, DEFAULT_TOL).unwrap();
        fit_strategy(d, &report, &StrategyConfig::new(variant)).unwrap()
    }

    fn v(slice: &[f64]) -> DVector<f64> {
        DVector::from_vec(slice.to_vec())
    }

    // ---- deviance ---------------------------------------------------------

    #[test]
    fn deviance_matches_hand_values() {
        // 2 [ 2 ln 2 - (2 - 1) ]
        let d = deviance(&v(&[2.0]), &v(&[1.0])).unwrap();
        assert!((d - 0.7725887222397812).abs() < 1e-15);

        // A perfect fit has zero deviance.
        let y = v(&[0.0, 1.0, 3.0]);
        assert_eq!(deviance(&y, &y).unwrap(), 0.0);

        // A zero-count bin contributes twice its predicted mass.
        let d = deviance(&v(&[0.0]), &v(&[0.7])).unwrap();
        assert!((d - 1.4).abs() < 1e-15);

        // A spike on a zero rate is infinitely surprising.
        assert_eq!(deviance(&v(&[1.0]), &v(&[0.0])).unwrap(), f64::INFINITY);

        // Negative or undefined rates are rejected with the offending row.
        match deviance(&v(&[1.0, 1.0]), &v(&[0.5, -0.1])).unwrap_err() {
            Error::NegativeRate { row } => assert_eq!(row, 1),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(deviance(&v(&[1.0]), &v(&[f64::NAN])).is_err());
    }

    #[test]
    fn deviance_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let n = rng.random_range(1..12);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..3.0)).collect();
            let d = deviance(&v(&y), &v(&r)).unwrap();
            assert!(d >= -1e-12, "deviance {d} for y={y:?}, rates={r:?}");
        }
    }

    #[test]
    fn deviance_ratio_examples() {
        assert_eq!(deviance_ratio(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(deviance_ratio(0.0, 5.0).unwrap(), 1.0);
        assert!(deviance_ratio(7.5, 5.0).unwrap() < 0.0);
        assert!(matches!(deviance_ratio(1.0, 0.0).unwrap_err(), Error::NullDevianceZero));

        // Constant counts leave nothing for a model to explain.
        let y = v(&[2.0, 2.0, 2.0]);
        let err = in_sample_r(&design(vec![], vec![2.0, 2.0, 2.0]), &y).unwrap_err();
        assert!(matches!(err, Error::NullDevianceZero));
    }

    #[test]
    fn holdout_on_training_data_matches_in_sample() {
        let d = clean_design(9, 36, 2);
        let fitted = strategy_fit(&d, StrategyVariant::Ridge { lambda: 0.1 });
        let rates = fitted.rates(&d).unwrap();
        let r_in = in_sample_r(&d, &rates).unwrap();
        let r_out = holdout_r(&fitted, &d).unwrap();
        assert!((r_in - r_out).abs() < 1e-14);
        assert!(r_in <= 1.0);
    }

    #[test]
    fn holdout_spike_on_sentinel_rate_scores_negative_infinity() {
        let d = planted_design(33, 48, 4, &[2]);
        let fitted = strategy_fit(&d, StrategyVariant::MlLimit);
        assert_eq!(fitted.beta[2], Coef::NegInf);

        // A test set with a spike where the training data were perfectly
        // silent: the limit model assigns that bin rate zero.
        let mut test = d.clone();
        let hot = (0..test.n_rows()).find(|&i| test.x[(i, 2)] != 0.0).unwrap();
        test.y[hot] = 1.0;
        let r = holdout_r(&fitted, &test).unwrap();
        assert_eq!(r, f64::NEG_INFINITY);
    }

    // ---- effective degrees of freedom -------------------------------------

    #[test]
    fn effective_dof_equals_parameter_count_for_unpenalized_fits() {
        let d = clean_design(17, 40, 3);
        let fit = irls_fit(&Objective::unpenalized(&d), &IrlsConfig::default(), None).unwrap();
        let edof = effective_dof(&d, &fit).unwrap();
        assert!((edof - 4.0).abs() < 1e-6, "edof {edof}");
    }

    #[test]
    fn effective_dof_matches_dense_hat_matrix_trace() {
        let d = clean_design(21, 30, 3);
        let fitted = strategy_fit(&d, StrategyVariant::Ridge { lambda: 0.2 });
        let edof = effective_dof(&d, &fitted.fit).unwrap();

        // Independent route: assemble the whole hat matrix and take its
        // trace, inverting with the library's generic solver.
        let beta = fitted.fit.beta_vector().unwrap();
        let k = d.n_cols();
        let n = d.n_rows();
        let mut w_sqrt_x = DMatrix::zeros(n, k);
        for i in 0..n {
            let theta: f64 = (0..k).map(|j| d.x[(i, j)] * beta[j]).sum();
            let w = theta.exp().sqrt();
            for j in 0..k {
                w_sqrt_x[(i, j)] = w * d.x[(i, j)];
            }
        }
        let a = &fitted.fit.fisher / fitted.fit.likelihood_weight;
        let a_inv = a.try_inverse().expect("penalized information is invertible");
        let hat = &w_sqrt_x * a_inv * w_sqrt_x.transpose();
        assert!((edof - hat.trace()).abs() < 1e-8, "{edof} vs {}", hat.trace());
    }

    #[test]
    fn effective_dof_shrinks_toward_one_as_ridge_weight_grows() {
        let d = clean_design(25, 48, 4);
        let mut last = f64::INFINITY;
        for &lambda in &[1e-6, 0.1, 0.5, 0.9, 0.99] {
            let fitted = strategy_fit(&d, StrategyVariant::Ridge { lambda });
            let edof = effective_dof(&d, &fitted.fit).unwrap();
            assert!(edof <= last + 1e-9, "edof should shrink: {edof} after {last}");
            last = edof;
        }
        // Only the unpenalized intercept keeps a full degree of freedom.
        assert!(last < 1.5, "heavy ridge leaves roughly one dof, got {last}");
        assert!(last > 0.9);
    }

    // ---- time rescaling ----------------------------------------------------

    #[test]
    fn rescale_times_matches_hand_values() {
        // Two spikes: masses 5 * 0.1 and 20 * 0.1 accumulate between them.
        let mut counts = vec![0.0; 30];
        counts[4] = 1.0;
        counts[24] = 1.0;
        let u = rescale_times(&counts, &vec![0.1; 30]);
        assert_eq!(u.len(), 2);
        assert!((u[0] - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert!((u[1] - (1.0 - (-2.0f64).exp())).abs() < 1e-12);

        // Three spikes in one bin split its mass into equal chunks.
        let u = rescale_times(&[3.0], &[0.9]);
        let expect = 1.0 - (-0.3f64).exp();
        assert_eq!(u.len(), 3);
        for &ui in &u {
            assert!((ui - expect).abs() < 1e-12);
        }

        // A spike in the first bin uses only that bin's mass; trailing
        // silence produces no value.
        let u = rescale_times(&[1.0, 0.0], &[0.25, 0.5]);
        assert_eq!(u.len(), 1);
        assert!((u[0] - (1.0 - (-0.25f64).exp())).abs() < 1e-12);

        assert!(rescale_times(&[0.0, 0.0], &[0.3, 0.3]).is_empty());
    }

    #[test]
    fn rescaling_resets_at_trial_boundaries() {
        // Trial 0 ends with unspent mass after its spike; trial 1 spikes in
        // its first bin. Carrying mass across the boundary would inflate the
        // second value.
        let mut d = design(vec![], vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        d.row_origin = vec![(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (1, 0), (1, 1)];
        let rates = v(&[0.2; 7]);
        let u = rescaled_u_by_trial(&d, &rates);
        assert_eq!(u.len(), 2);
        assert!((u[0] - (1.0 - (-0.8f64).exp())).abs() < 1e-12);
        assert!((u[1] - (1.0 - (-0.2f64).exp())).abs() < 1e-12);
    }

    // ---- KS ----------------------------------------------------------------

    #[test]
    fn ks_statistic_matches_hand_values() {
        let ks = ks_analysis(&[0.5]).unwrap();
        assert_eq!(ks.n, 1);
        assert!((ks.statistic - 0.5).abs() < 1e-15);
        assert!((ks.bound - 1.36).abs() < 1e-12);
        assert!(ks.pass);

        // The centered grid (k - 0.5) / n is the best possible sample:
        // distance exactly 0.5 / n.
        let n = 10;
        let grid: Vec<f64> = (1..=n).map(|k| (k as f64 - 0.5) / n as f64).collect();
        let ks = ks_analysis(&grid).unwrap();
        assert!((ks.statistic - 0.05).abs() < 1e-15);
        assert!(ks.pass);

        // A point mass far from uniform fails once n is meaningful.
        let ks = ks_analysis(&vec![0.98; 25]).unwrap();
        assert!(ks.statistic > 0.9);
        assert!(!ks.pass);

        assert!(ks_analysis(&[]).is_none());
    }

    #[test]
    fn small_sample_bound_is_stricter() {
        let grid: Vec<f64> = (1..=100).map(|k| (k as f64 - 0.5) / 100.0).collect();
        let plain = ks_analysis_with(&grid, false).unwrap();
        let corrected = ks_analysis_with(&grid, true).unwrap();
        assert_eq!(plain.statistic, corrected.statistic);
        assert!(corrected.bound < plain.bound);
        assert!((plain.bound - 0.136).abs() < 1e-12);
    }

    #[test]
    fn ks_accepts_seeded_uniform_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let ks = ks_analysis(&u).unwrap();
        assert!(ks.pass, "stat {} vs bound {}", ks.statistic, ks.bound);
    }

    // ---- bootstrap ----------------------------------------------------------

    fn spiking_trial(id: u32, n_bins: usize, stim: Vec<f64>, spike_bins: &[usize]) -> Trial {
        let mut counts = vec![0u32; n_bins];
        for &b in spike_bins {
            counts[b] = 1;
        }
        Trial::new(
            BinnedSpikeTrain::new(id, 0.01, counts).unwrap(),
            StimulusTrace { trial: id, values: stim },
            TrialRole::Training,
        )
        .unwrap()
    }

    fn clean_trials() -> TrialSet {
        let trials: Vec<Trial> = (0..6u32)
            .map(|t| {
                let off = t as usize % 4;
                spiking_trial(t, 30, vec![0.0; 30], &[2 + off, 9, 10, 17 + off, 25])
            })
            .collect();
        TrialSet::new(trials).unwrap()
    }

    #[test]
    fn bootstrap_validates_inputs() {
        let trials = clean_trials();
        let recipe = DesignRecipe::new(1, 0);
        let cfg = StrategyConfig::new(StrategyVariant::Ridge { lambda: 0.1 });
        assert!(matches!(
            bootstrap_ci(&trials, &recipe, &cfg, 10, 1).unwrap_err(),
            Error::Config(_)
        ));

        let one = TrialSet::new(vec![spiking_trial(0, 20, vec![0.0; 20], &[3, 9])]).unwrap();
        assert!(matches!(
            bootstrap_ci(&one, &recipe, &cfg, 60, 1).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn bootstrap_brackets_clean_fits_deterministically() {
        let trials = clean_trials();
        let recipe = DesignRecipe::new(1, 0);
        let cfg = StrategyConfig::new(StrategyVariant::Ridge { lambda: 0.1 });

        let s = bootstrap_ci(&trials, &recipe, &cfg, 60, 5).unwrap();
        assert_eq!(s.requested, 60);
        assert_eq!(s.completed, 60, "every resample of spiking trials fits");
        assert_eq!(s.params.len(), 2);
        for p in &s.params {
            assert_eq!(p.finite, 60);
            assert_eq!(p.divergence_fraction, 0.0);
            let (lo, hi) = (p.lower.unwrap(), p.upper.unwrap());
            assert!(lo <= hi, "{}: [{lo}, {hi}]", p.name);
        }

        let again = bootstrap_ci(&trials, &recipe, &cfg, 60, 5).unwrap();
        assert_eq!(s.params, again.params);
        assert_eq!(s.completed, again.completed);
    }

    #[test]
    fn bootstrap_reports_structural_divergence() {
        // No trial ever spikes inside the high-stimulus window, so the high
        // band is a perfect predictor in every resample and the plain-IRLS
        // coefficient diverges every time.
        let trials: Vec<Trial> = (0..8u32)
            .map(|t| {
                let mut stim = vec![0.0; 40];
                for b in 30..34 {
                    stim[b] = 5.0;
                }
                let off = t as usize % 5;
                spiking_trial(t, 40, stim, &[3 + off, 11, 17 + off % 3, 23])
            })
            .collect();
        let trials = TrialSet::new(trials).unwrap();
        let recipe = DesignRecipe::new(0, 2);
        let cfg = StrategyConfig::new(StrategyVariant::FixedIteration);

        let s = bootstrap_ci(&trials, &recipe, &cfg, 60, 11).unwrap();
        assert_eq!(s.completed, 60);
        assert_eq!(s.params.len(), 3); // intercept + two bands

        let high = s
            .params
            .iter()
            .find(|p| p.name == "stim_band_1")
            .expect("high band column present");
        assert_eq!(high.divergence_fraction, 1.0);
        assert_eq!(high.lower, None);
        assert_eq!(high.upper, None);

        let intercept = &s.params[0];
        assert!(intercept.divergence_fraction < 1.0);
        assert!(intercept.lower.is_some());
    }

    // ---- parameter correlation ----------------------------------------------

    fn synthetic_fit(fisher: DMatrix<f64>) -> FitResult {
        let k = fisher.nrows();
        FitResult {
            beta: vec![Coef::Finite(0.1); k],
            loglik: -1.0,
            fisher,
            fisher_coords: (0..k).collect(),
            rows_used: vec![],
            likelihood_weight: 1.0,
            converged: true,
            iterations: 1,
            objective_trace: vec![],
            divergent: vec![false; k],
            all_frozen: false,
            theta_clamped: false,
            warnings: vec![],
            beta_trace: None,
        }
    }

    #[test]
    fn correlation_of_diagonal_information_is_identity() {
        let fit = synthetic_fit(DMatrix::from_diagonal(&v(&[2.0, 5.0, 0.5])));
        let corr = param_correlation(&fit).unwrap();
        assert!(corr.undefined.is_empty());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((corr.matrix[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_matches_closed_form_for_two_by_two() {
        // inv([[2, 1], [1, 2]]) has correlation -1/2.
        let fit = synthetic_fit(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        let corr = param_correlation(&fit).unwrap();
        assert!((corr.matrix[(0, 1)] + 0.5).abs() < 1e-12);
        assert!((corr.matrix[(1, 0)] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn correlation_from_reduced_fit_lists_undefined_coordinates() {
        let d = planted_design(57, 48, 4, &[2]);
        let fitted = strategy_fit(&d, StrategyVariant::MlLimit);
        let corr = param_correlation(&fitted.fit).unwrap();
        assert_eq!(corr.undefined, vec![2]);
        assert_eq!(corr.coords, vec![0, 1, 3, 4]);
        let m = &corr.matrix;
        assert_eq!(m.nrows(), 4);
        for i in 0..4 {
            assert_eq!(m[(i, i)], 1.0);
            for j in 0..4 {
                assert!(m[(i, j)].abs() <= 1.0);
                assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-10);
            }
        }
    }

    // ---- full report ---------------------------------------------------------

    #[test]
    fn gof_report_populates_all_sections() {
        let trials: Vec<Trial> = (0..6u32)
            .map(|t| {
                let off = t as usize % 4;
                spiking_trial(t, 30, vec![0.0; 30], &[2 + off, 9, 10, 17 + off, 25])
            })
            .collect();
        let set = TrialSet::new(trials).unwrap().with_held_out(&[5]).unwrap();
        let recipe = DesignRecipe::new(1, 0);
        let train = recipe.build(&set.training()).unwrap();
        let frozen = recipe.frozen(&train);
        let held = frozen.build(&set.held_out()).unwrap();

        let fitted = strategy_fit(&train, StrategyVariant::Ridge { lambda: 0.1 });
        let report = gof_report(&train, &fitted, Some(&held), false).unwrap();

        assert_eq!(report.strategy, "Ridge GLM");
        assert_eq!(report.n_optimized, 2);
        assert!(report.converged);
        assert_eq!(report.sentinels, 0);
        assert_eq!(report.divergent, 0);
        assert!(report.loglik_train.is_finite());
        assert!(report.r_in_sample.unwrap().is_finite());
        assert!(report.r_cv.unwrap().is_finite());
        assert!(report.edof > 0.0 && report.edof < 2.0 + 1e-9);
        assert!(report.edof_ratio.is_none());
        let ks = report.ks.unwrap();
        let total_spikes: f64 = train.y.sum();
        assert_eq!(ks.n, total_spikes as usize);
    }

    #[test]
    fn gof_report_flags_zero_null_deviance() {
        // One spike in every bin: constant counts, nothing to explain.
        let trials: Vec<Trial> = (0..2u32)
            .map(|t| {
                spiking_trial(t, 12, vec![0.0; 12], &(0..12).collect::<Vec<_>>())
            })
            .collect();
        let set = TrialSet::new(trials).unwrap();
        let recipe = DesignRecipe::new(0, 0);
        let train = recipe.build(&set.training()).unwrap();
        let fitted = strategy_fit(&train, StrategyVariant::Ridge { lambda: 0.1 });
        let report = gof_report(&train, &fitted, None, false).unwrap();
        assert!(report.r_in_sample.is_none());
        assert!(report.r_cv.is_none());
        assert!(report.warnings.iter().any(|w| w.contains("undefined")));
    }
}
