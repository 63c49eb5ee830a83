//! Estimation strategies for Poisson regressions whose likelihood has no
//! interior maximum.
//!
//! When a predictor is nonzero only on bins with zero spikes, the
//! log-likelihood keeps increasing as that coefficient walks toward negative
//! infinity, and plain IRLS either drifts or stalls. Each strategy here
//! produces a comparable [`FittedStrategy`] by a different route:
//!
//! * **Standard IRLS** — run the plain algorithm to its iteration cap and
//!   report the drift honestly (the baseline everything else is compared to).
//! * **Maximum likelihood limit** — delete the offending columns and the rows
//!   they predict, fit the reduced model, and reinstate the deleted
//!   coefficients at their limiting infinite values.
//! * **Bayesian MAP** — maximize the posterior under a geometric smoothing
//!   prior, which caps every coefficient at a finite value.
//! * **Ridge** — trade the likelihood against a squared-norm penalty.
//! * **Cubic smoothing spline** — change basis so each original coefficient
//!   is an interpolated value of a smooth curve; with well-placed knots no
//!   transformed column can be a perfect predictor.
//! * **Bounded search** — project each IRLS update onto a Euclidean ball.
//! * **Score threshold** — freeze coordinates whose gradient entry is small,
//!   so a drifting coordinate stops once its score decays.
//!
//! [`select_hyperparameter`] picks penalty strengths by trial-level
//! cross-validation.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Trial, TrialSet};
use crate::design::{ColumnKind, ColumnMeta, DesignMatrix, DesignRecipe};
use crate::error::{Error, Result};
use crate::glm::{
    coefs_from_vector, invert_spd, irls_fit, irls_fit_mode, rates_with_sentinels, Coef,
    FitResult, IrlsConfig, Objective, StepMode,
};
use crate::gof;
use crate::separation::{detect, SeparationReport, DEFAULT_TOL};
use crate::spline::{build_spline_basis, uniform_knots, validate_knot_rule, SplineBasisSpec};

/// Largest admissible smoothing-prior correlation; beyond it the prior
/// covariance is numerically singular.
pub const PRIOR_C_CAP: f64 = 0.999_999;

/// Which coefficient blocks a prior or basis change applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocks {
    pub history: bool,
    pub stimulus: bool,
}

impl Default for Blocks {
    fn default() -> Self {
        Blocks { history: true, stimulus: true }
    }
}

/// The seven estimation strategies. Hyperparameter fields carry the values
/// actually used for a fit; [`select_hyperparameter`] tunes one of them.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyVariant {
    /// Plain IRLS run to its iteration cap (step halving off by default).
    FixedIteration,
    /// Reduced refit with infinite limits reinstated for perfect predictors.
    MlLimit,
    /// Posterior mode under a block-diagonal geometric prior with
    /// correlation `c^|i-j|` and variance `prior_scale` per block; the
    /// intercept is never penalized.
    BayesianMap { c: f64, prior_scale: f64, blocks: Blocks },
    /// Maximize `(1-lambda) * loglik - lambda * ||beta||^2` over
    /// non-intercept coordinates.
    Ridge { lambda: f64 },
    /// Cardinal-spline change of basis per block; `None` passes the block
    /// through untransformed. Basis sizes count spline coefficients.
    SplineBasis {
        history_basis: Option<usize>,
        stimulus_basis: Option<usize>,
        tension: f64,
    },
    /// Project every update onto the ball `sum(beta_j^2) <= (p+q) d^2` over
    /// non-intercept coordinates.
    BoundedSearch { d: f64 },
    /// Freeze coordinates whose score magnitude is at or below `tau` each
    /// iteration.
    ScoreThreshold { tau: f64 },
}

impl StrategyVariant {
    /// Human-readable method name used in reports and tables.
    pub fn name(&self) -> &'static str {
        match self {
            StrategyVariant::FixedIteration => "Standard IRLS",
            StrategyVariant::MlLimit => "Maximum Likelihood Limit",
            StrategyVariant::BayesianMap { .. } => "Bayesian MAP",
            StrategyVariant::Ridge { .. } => "Ridge GLM",
            StrategyVariant::SplineBasis { .. } => "Cubic Smoothing Spline",
            StrategyVariant::BoundedSearch { .. } => "Bounded Search",
            StrategyVariant::ScoreThreshold { .. } => "Score Threshold",
        }
    }

    /// Short identifier safe for file names and config keys.
    pub fn slug(&self) -> &'static str {
        match self {
            StrategyVariant::FixedIteration => "standard_irls",
            StrategyVariant::MlLimit => "ml_limit",
            StrategyVariant::BayesianMap { .. } => "bayesian_map",
            StrategyVariant::Ridge { .. } => "ridge",
            StrategyVariant::SplineBasis { .. } => "spline",
            StrategyVariant::BoundedSearch { .. } => "bounded_search",
            StrategyVariant::ScoreThreshold { .. } => "score_threshold",
        }
    }

    /// Replaces the tunable hyperparameter with `value` (the ridge weight,
    /// prior correlation, history basis size, ball threshold, or score
    /// threshold). Errors for strategies with nothing to tune.
    pub fn with_hyperparameter(&self, value: f64) -> Result<StrategyVariant> {
        let mut v = self.clone();
        match &mut v {
            StrategyVariant::Ridge { lambda } => *lambda = value,
            StrategyVariant::BayesianMap { c, .. } => *c = value,
            StrategyVariant::SplineBasis { history_basis, .. } => {
                *history_basis = Some(value.round() as usize);
            }
            StrategyVariant::BoundedSearch { d } => *d = value,
            StrategyVariant::ScoreThreshold { tau } => *tau = value,
            StrategyVariant::FixedIteration | StrategyVariant::MlLimit => {
                return Err(Error::InvalidHyper(format!(
                    "strategy {} has no tunable hyperparameter",
                    self.slug()
                )));
            }
        }
        Ok(v)
    }

    /// True when grid value `a` regularizes more strongly than `b`; used to
    /// break cross-validation ties.
    fn stronger_regularization(&self, a: f64, b: f64) -> bool {
        match self {
            // Larger penalty weight / prior correlation / freeze threshold.
            StrategyVariant::Ridge { .. }
            | StrategyVariant::BayesianMap { .. }
            | StrategyVariant::ScoreThreshold { .. } => a > b,
            // Fewer basis functions; smaller search ball.
            StrategyVariant::SplineBasis { .. } => a < b,
            StrategyVariant::BoundedSearch { .. } => a.abs() < b.abs(),
            StrategyVariant::FixedIteration | StrategyVariant::MlLimit => false,
        }
    }
}

/// A strategy plus the IRLS engine settings it runs with.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub variant: StrategyVariant,
    pub irls: IrlsConfig,
}

impl StrategyConfig {
    /// Engine defaults appropriate for the variant: the plain-IRLS baseline
    /// runs without step halving (the classical algorithm, and the honest
    /// basis for divergence diagnostics); every other strategy keeps
    /// halving on for robustness.
    pub fn new(variant: StrategyVariant) -> Self {
        let mut irls = IrlsConfig::default();
        if matches!(variant, StrategyVariant::FixedIteration) {
            irls.step_halving = false;
        }
        StrategyConfig { variant, irls }
    }
}

/// A completed strategy fit, always expressed over the original design's
/// columns so fits from different strategies can be compared directly.
#[derive(Debug, Clone)]
pub struct FittedStrategy {
    pub config: StrategyConfig,
    /// Coefficients per original design column; only the maximum likelihood
    /// limit produces infinite sentinels.
    pub beta: Vec<Coef>,
    /// The underlying engine result. For the spline strategy this lives in
    /// basis coordinates and `fit.rows_used` / `fit.fisher_coords` index the
    /// transformed design in [`FittedStrategy::fitted_design`]; for every
    /// other strategy they index the original design.
    pub fit: FitResult,
    /// The design actually optimized when it differs structurally from the
    /// original (spline basis only).
    pub fitted_design: Option<DesignMatrix>,
    /// Spline only: the map `T` with `beta = T beta_tilde` from basis to
    /// original coordinates.
    pub basis_map: Option<DMatrix<f64>>,
    /// Spline only: covariance of the mapped coefficients,
    /// `T Cov(beta_tilde) T'`.
    pub mapped_cov: Option<DMatrix<f64>>,
}

impl FittedStrategy {
    pub fn name(&self) -> &'static str {
        self.config.variant.name()
    }

    /// Predicted per-bin mean counts on any design built with the same
    /// recipe as the training design.
    pub fn rates(&self, d: &DesignMatrix) -> Result<DVector<f64>> {
        rates_with_sentinels(d, &self.beta)
    }

    /// Number of coordinates the optimizer actually fitted.
    pub fn n_optimized(&self) -> usize {
        self.fit.fisher_coords.len()
    }

    pub fn sentinel_count(&self) -> usize {
        self.beta.iter().filter(|c| !c.is_finite()).count()
    }

    pub fn divergent_count(&self) -> usize {
        self.fit.divergent.iter().filter(|&&f| f).count()
    }

    /// Divergence flags per *original* design column. Basis-space flags map
    /// to every original column the basis function touches.
    pub fn divergent_by_column(&self) -> Vec<bool> {
        match &self.basis_map {
            None => self.fit.divergent.clone(),
            Some(t) => (0..t.nrows())
                .map(|i| {
                    (0..t.ncols())
                        .any(|b| t[(i, b)] != 0.0 && self.fit.divergent[b])
                })
                .collect(),
        }
    }
}

/// Fits one strategy to a design. `report` must come from
/// [`crate::separation::detect`] on the same design; only the likelihood
/// limit and the spline basis consult it, but requiring it keeps every fit
/// paired with its separation diagnosis.
pub fn fit_strategy(
    d: &DesignMatrix,
    report: &SeparationReport,
    cfg: &StrategyConfig,
) -> Result<FittedStrategy> {
    if d.y.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateResponse);
    }
    match &cfg.variant {
        StrategyVariant::FixedIteration => fit_fixed_iteration(d, cfg),
        StrategyVariant::MlLimit => fit_ml_limit(d, report, cfg),
        StrategyVariant::BayesianMap { c, prior_scale, blocks } => {
            fit_bayesian_map(d, *c, *prior_scale, *blocks, cfg)
        }
        StrategyVariant::Ridge { lambda } => fit_ridge(d, *lambda, cfg),
        StrategyVariant::SplineBasis { history_basis, stimulus_basis, tension } => {
            fit_spline(d, report, *history_basis, *stimulus_basis, *tension, cfg)
        }
        StrategyVariant::BoundedSearch { d: thr } => fit_bounded_search(d, *thr, cfg),
        StrategyVariant::ScoreThreshold { tau } => fit_score_threshold(d, *tau, cfg),
    }
}

fn plain_result(cfg: &StrategyConfig, fit: FitResult) -> FittedStrategy {
    FittedStrategy {
        config: cfg.clone(),
        beta: fit.beta.clone(),
        fit,
        fitted_design: None,
        basis_map: None,
        mapped_cov: None,
    }
}

fn fit_fixed_iteration(d: &DesignMatrix, cfg: &StrategyConfig) -> Result<FittedStrategy> {
    let obj = Objective::unpenalized(d);
    let fit = irls_fit(&obj, &cfg.irls, None)?;
    Ok(plain_result(cfg, fit))
}

/// Dominant sign of a column: the sign of the sum of its entries, used to
/// orient the infinite limit of a removed perfect predictor. Count and
/// indicator columns are non-negative, so the limit is negative infinity.
fn dominant_sign(d: &DesignMatrix, j: usize) -> f64 {
    let s: f64 = d.x.column(j).iter().sum();
    if s < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn fit_ml_limit(
    d: &DesignMatrix,
    report: &SeparationReport,
    cfg: &StrategyConfig,
) -> Result<FittedStrategy> {
    if report.perfect_set.is_empty() {
        let obj = Objective::unpenalized(d);
        let fit = irls_fit(&obj, &cfg.irls, None)?;
        return Ok(plain_result(cfg, fit));
    }

    // Orientation of each removed coefficient's limit: single perfect
    // columns by their dominant sign, combo members by the sign of their
    // weight in the vanishing combination (the drift follows that ray).
    let mut limit_sign: BTreeMap<usize, f64> = BTreeMap::new();
    for combo in &report.combos {
        for (&j, &w) in combo.columns.iter().zip(&combo.weights) {
            limit_sign.entry(j).or_insert(if w < 0.0 { -1.0 } else { 1.0 });
        }
    }
    for &j in &report.perfect_columns {
        limit_sign.insert(j, dominant_sign(d, j));
    }

    let removed_cols: BTreeSet<usize> = report.perfect_set.iter().copied().collect();
    let removed_rows: BTreeSet<usize> = report.predicted_rows.iter().copied().collect();
    let kept_cols: Vec<usize> =
        (0..d.n_cols()).filter(|j| !removed_cols.contains(j)).collect();
    let kept_rows: Vec<usize> =
        (0..d.n_rows()).filter(|i| !removed_rows.contains(i)).collect();
    if kept_cols.is_empty() || kept_rows.is_empty() {
        return Err(Error::ReducedDesignEmpty);
    }

    let mut x = DMatrix::zeros(kept_rows.len(), kept_cols.len());
    let mut y = DVector::zeros(kept_rows.len());
    for (r, &i) in kept_rows.iter().enumerate() {
        y[r] = d.y[i];
        for (c, &j) in kept_cols.iter().enumerate() {
            x[(r, c)] = d.x[(i, j)];
        }
    }
    let reduced = DesignMatrix {
        x,
        y,
        columns: kept_cols.iter().map(|&j| d.columns[j].clone()).collect(),
        row_origin: kept_rows.iter().map(|&i| d.row_origin[i]).collect(),
        band_edges: d.band_edges.clone(),
        warnings: vec![],
    };

    let obj = Objective::unpenalized(&reduced);
    let red = irls_fit(&obj, &cfg.irls, None)?;

    // Reassemble over the original columns. The removed rows contribute
    // exactly zero to the limiting log-likelihood (their rates tend to zero
    // with zero observed counts), so the reduced log-likelihood *is* the
    // limit value.
    let mut beta = vec![Coef::Finite(0.0); d.n_cols()];
    let mut divergent = vec![false; d.n_cols()];
    for (c, &j) in kept_cols.iter().enumerate() {
        beta[j] = red.beta[c];
        divergent[j] = red.divergent[c];
    }
    for (&j, &sign) in &limit_sign {
        beta[j] = if sign < 0.0 { Coef::PosInf } else { Coef::NegInf };
    }

    let mut warnings = red.warnings.clone();
    warnings.push(format!(
        "removed {} perfect column(s) and {} perfectly predicted row(s)",
        removed_cols.len(),
        removed_rows.len()
    ));
    let fit = FitResult {
        beta: beta.clone(),
        loglik: red.loglik,
        fisher: red.fisher.clone(),
        fisher_coords: kept_cols.clone(),
        rows_used: kept_rows.clone(),
        likelihood_weight: 1.0,
        converged: red.converged,
        iterations: red.iterations,
        objective_trace: red.objective_trace.clone(),
        divergent,
        all_frozen: false,
        theta_clamped: red.theta_clamped,
        warnings,
        beta_trace: None,
    };
    Ok(FittedStrategy {
        config: cfg.clone(),
        beta,
        fit,
        fitted_design: None,
        basis_map: None,
        mapped_cov: None,
    })
}

/// Inverse of the `m x m` geometric covariance `Sigma_ij = scale * c^|i-j|`:
/// tridiagonal with diagonal `(1, 1+c^2, ..., 1+c^2, 1) / (1-c^2)` and
/// off-diagonal `-c / (1-c^2)`, all divided by `scale`.
fn kms_inverse(c: f64, m: usize, scale: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(m, m);
    if m == 1 {
        p[(0, 0)] = 1.0 / scale;
        return p;
    }
    let denom = (1.0 - c * c) * scale;
    for i in 0..m {
        p[(i, i)] = if i == 0 || i == m - 1 {
            1.0 / denom
        } else {
            (1.0 + c * c) / denom
        };
        if i + 1 < m {
            p[(i, i + 1)] = -c / denom;
            p[(i + 1, i)] = -c / denom;
        }
    }
    p
}

fn fit_bayesian_map(
    d: &DesignMatrix,
    c: f64,
    prior_scale: f64,
    blocks: Blocks,
    cfg: &StrategyConfig,
) -> Result<FittedStrategy> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidHyper(format!(
            "prior correlation c must lie in [0, 1], got {c}"
        )));
    }
    if c > PRIOR_C_CAP {
        return Err(Error::PriorSingular { c, cap: PRIOR_C_CAP });
    }
    if !(prior_scale > 0.0 && prior_scale.is_finite()) {
        return Err(Error::InvalidHyper(format!(
            "prior variance scale must be positive and finite, got {prior_scale}"
        )));
    }

    let k = d.n_cols();
    let mut penalty = DMatrix::zeros(k, k);
    let mut covered = vec![];
    if blocks.history {
        covered.push(d.history_columns());
    }
    if blocks.stimulus {
        covered.push(d.stimulus_columns());
    }
    for cols in covered.iter().filter(|cols| !cols.is_empty()) {
        let inv = kms_inverse(c, cols.len(), prior_scale);
        for (a, &ja) in cols.iter().enumerate() {
            for (b, &jb) in cols.iter().enumerate() {
                penalty[(ja, jb)] = inv[(a, b)];
            }
        }
    }

    let obj = Objective::with_penalty(d, 1.0, penalty);
    let fit = irls_fit(&obj, &cfg.irls, None)?;
    Ok(plain_result(cfg, fit))
}

fn fit_ridge(d: &DesignMatrix, lambda: f64, cfg: &StrategyConfig) -> Result<FittedStrategy> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidHyper(format!(
            "ridge weight must lie in [0, 1), got {lambda}"
        )));
    }
    let k = d.n_cols();
    let mut penalty = DMatrix::zeros(k, k);
    for j in 1..k {
        penalty[(j, j)] = 2.0 * lambda;
    }
    let obj = Objective::with_penalty(d, 1.0 - lambda, penalty);
    let fit = irls_fit(&obj, &cfg.irls, None)?;
    Ok(plain_result(cfg, fit))
}

/// One transformed block: original column indices, their basis, and the
/// meta kind for the new columns.
struct BlockPlan {
    cols: Vec<usize>,
    spec: SplineBasisSpec,
    kind: fn(usize) -> ColumnKind,
    label: &'static str,
}

fn plan_block(
    report: &SeparationReport,
    cols: Vec<usize>,
    basis: usize,
    tension: f64,
    kind: fn(usize) -> ColumnKind,
    label: &'static str,
) -> Result<BlockPlan> {
    let p = cols.len();
    let knots = uniform_knots(p, basis)?;
    // Unusable predictors cannot vouch for a knot interval: perfect ones
    // (single or combo members) vanish on every spiking row, and all-zero
    // ones contribute nothing anywhere.
    let perfect: BTreeSet<usize> = report
        .perfect_set
        .iter()
        .chain(report.empty_columns.iter())
        .filter_map(|j| cols.iter().position(|&cj| cj == *j).map(|pos| pos + 1))
        .collect();
    validate_knot_rule(p, &knots, &perfect)?;
    let spec = build_spline_basis(p, &knots, tension)?;
    Ok(BlockPlan { cols, spec, kind, label })
}

fn fit_spline(
    d: &DesignMatrix,
    report: &SeparationReport,
    history_basis: Option<usize>,
    stimulus_basis: Option<usize>,
    tension: f64,
    cfg: &StrategyConfig,
) -> Result<FittedStrategy> {
    if history_basis.is_none() && stimulus_basis.is_none() {
        return Err(Error::InvalidHyper(
            "spline basis: at least one block must be transformed".into(),
        ));
    }
    let mut plans: Vec<BlockPlan> = vec![];
    if let Some(q) = history_basis {
        plans.push(plan_block(
            report,
            d.history_columns(),
            q,
            tension,
            ColumnKind::HistoryBasis,
            "hist",
        )?);
    }
    if let Some(q) = stimulus_basis {
        plans.push(plan_block(
            report,
            d.stimulus_columns(),
            q,
            tension,
            ColumnKind::StimulusBasis,
            "stim",
        )?);
    }

    // Assemble the transformed design and the original <- basis map T.
    let transformed_cols: BTreeSet<usize> =
        plans.iter().flat_map(|p| p.cols.iter().copied()).collect();
    let n = d.n_rows();
    let k_orig = d.n_cols();
    let k_new: usize = k_orig - transformed_cols.len()
        + plans.iter().map(|p| p.spec.q()).sum::<usize>();

    let mut x = DMatrix::zeros(n, k_new);
    let mut t = DMatrix::zeros(k_orig, k_new);
    let mut columns: Vec<ColumnMeta> = Vec::with_capacity(k_new);

    let mut next = 0usize;
    let place_passthrough = |j: usize,
                                 x: &mut DMatrix<f64>,
                                 t: &mut DMatrix<f64>,
                                 columns: &mut Vec<ColumnMeta>,
                                 next: &mut usize| {
        x.set_column(*next, &d.x.column(j));
        t[(j, *next)] = 1.0;
        columns.push(d.columns[j].clone());
        *next += 1;
    };

    let mut j = 0usize;
    while j < k_orig {
        if let Some(plan) = plans.iter().find(|p| p.cols.first() == Some(&j)) {
            // Whole block at once; design construction keeps blocks
            // contiguous.
            let p = plan.cols.len();
            let q = plan.spec.q();
            let mut xb = DMatrix::zeros(n, p);
            for (c, &jc) in plan.cols.iter().enumerate() {
                xb.set_column(c, &d.x.column(jc));
            }
            let tb = &xb * &plan.spec.matrix;
            x.view_mut((0, next), (n, q)).copy_from(&tb);
            for (c, &jc) in plan.cols.iter().enumerate() {
                for b in 0..q {
                    t[(jc, next + b)] = plan.spec.matrix[(c, b)];
                }
            }
            for b in 0..q {
                columns.push(ColumnMeta {
                    kind: (plan.kind)(b + 1),
                    name: format!("{}_basis_{}", plan.label, b + 1),
                });
            }
            next += q;
            j += p;
        } else {
            place_passthrough(j, &mut x, &mut t, &mut columns, &mut next);
            j += 1;
        }
    }
    debug_assert_eq!(next, k_new);

    let td = DesignMatrix {
        x,
        y: d.y.clone(),
        columns,
        row_origin: d.row_origin.clone(),
        band_edges: d.band_edges.clone(),
        warnings: vec![],
    };

    let obj = Objective::unpenalized(&td);
    let fit = irls_fit(&obj, &cfg.irls, None)?;
    let beta_tilde = fit
        .beta_vector()
        .expect("basis fit has no sentinel coordinates");
    let beta = coefs_from_vector(&(&t * &beta_tilde));
    let cov_tilde = invert_spd(&fit.fisher, cfg.irls.ridge_jitter, "spline covariance")?;
    let mapped_cov = &t * cov_tilde * t.transpose();

    Ok(FittedStrategy {
        config: cfg.clone(),
        beta,
        fit,
        fitted_design: Some(td),
        basis_map: Some(t),
        mapped_cov: Some(mapped_cov),
    })
}

fn fit_bounded_search(
    d: &DesignMatrix,
    threshold: f64,
    cfg: &StrategyConfig,
) -> Result<FittedStrategy> {
    if threshold == 0.0 || !threshold.is_finite() {
        return Err(Error::InvalidHyper(format!(
            "bounded search threshold must be nonzero and finite, got {threshold}"
        )));
    }
    let non_intercept = (d.n_cols() - 1) as f64;
    let radius_sq = non_intercept * threshold * threshold;
    let obj = Objective::unpenalized(d);
    let fit = irls_fit_mode(&obj, &cfg.irls, None, StepMode::ProjectBall { radius_sq })?;
    Ok(plain_result(cfg, fit))
}

fn fit_score_threshold(
    d: &DesignMatrix,
    tau: f64,
    cfg: &StrategyConfig,
) -> Result<FittedStrategy> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidHyper(format!(
            "score threshold must be non-negative and finite, got {tau}"
        )));
    }
    let obj = Objective::unpenalized(d);
    let mut fit = irls_fit_mode(&obj, &cfg.irls, None, StepMode::FreezeScore { tau })?;
    if fit.all_frozen && !fit.converged {
        // The intended terminal state for tau > 0: every coordinate's score
        // fell below the threshold, which is coarser than the engine's own
        // convergence tolerance.
        fit.warnings.push(format!(
            "stopped with every coordinate's score below tau = {tau}"
        ));
    }
    Ok(plain_result(cfg, fit))
}

/// Cross-validation results for one hyperparameter grid.
#[derive(Debug, Clone)]
pub struct CvTable {
    pub grid: Vec<f64>,
    /// Held-out deviance ratio per grid value and fold; `None` marks a
    /// skipped fold (no spikes on one side of the split).
    pub fold_scores: Vec<Vec<Option<f64>>>,
    /// Fold-mean score per grid value; negative infinity propagates, so a
    /// grid value that zeroes out an observed spike can never win.
    pub mean_score: Vec<f64>,
    pub best: f64,
    pub folds: usize,
    pub warnings: Vec<String>,
}

/// Picks the strategy hyperparameter maximizing mean held-out deviance
/// ratio over trial-level folds. `folds = 0` (or more folds than trials)
/// means leave-one-trial-out. Ties prefer the stronger regularization.
///
/// Band edges are frozen from the full training set so every fold bins the
/// stimulus identically; each fold's separation is re-detected on its own
/// training subset. A grid value whose spline basis cannot break a fold's
/// separation scores negative infinity rather than erroring.
pub fn select_hyperparameter(
    trials: &TrialSet,
    recipe: &DesignRecipe,
    template: &StrategyConfig,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(f64, CvTable)> {
    if grid.is_empty() {
        return Err(Error::Config("cross-validation: empty hyperparameter grid".into()));
    }
    // Surface untunable strategies immediately.
    template.variant.with_hyperparameter(grid[0])?;

    let train: Vec<&Trial> = trials.training();
    let n = train.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "cross-validation: need at least 2 training trials, got {n}"
        )));
    }
    let k_folds = if folds == 0 || folds > n { n } else { folds };
    if k_folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation: need at least 2 folds, got {k_folds}"
        )));
    }
    if train.iter().all(|t| t.spikes.total_spikes() == 0) {
        return Err(Error::DegenerateResponse);
    }

    let base = recipe.build(&train)?;
    let frozen = recipe.frozen(&base);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0usize; n];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % k_folds;
        }
        f
    };

    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..k_folds).map(move |f| (g, f)))
        .collect();
    let outcomes: Result<Vec<(Option<f64>, Option<String>)>> = cells
        .par_iter()
        .map(|&(g, f)| cv_cell(&train, &fold_of, f, &frozen, template, grid[g]))
        .collect();
    let outcomes = outcomes?;

    let mut fold_scores = vec![vec![None; k_folds]; grid.len()];
    let mut warnings: Vec<String> = vec![];
    for (idx, (score, warn)) in outcomes.into_iter().enumerate() {
        let (g, f) = cells[idx];
        fold_scores[g][f] = score;
        if let Some(w) = warn {
            warnings.push(w);
        }
    }

    let mean_score: Vec<f64> = fold_scores
        .iter()
        .map(|scores| {
            let kept: Vec<f64> = scores.iter().flatten().copied().collect();
            if kept.is_empty() {
                f64::NEG_INFINITY
            } else {
                kept.iter().sum::<f64>() / kept.len() as f64
            }
        })
        .collect();
    if fold_scores.iter().all(|s| s.iter().all(Option::is_none)) {
        return Err(Error::Config(
            "cross-validation: every fold was skipped (no usable spikes on one side)".into(),
        ));
    }

    let mut best_idx = 0usize;
    for g in 1..grid.len() {
        let (a, b) = (mean_score[g], mean_score[best_idx]);
        if a > b
            || (a == b && template.variant.stronger_regularization(grid[g], grid[best_idx]))
        {
            best_idx = g;
        }
    }

    let table = CvTable {
        grid: grid.to_vec(),
        fold_scores,
        mean_score,
        best: grid[best_idx],
        folds: k_folds,
        warnings,
    };
    Ok((grid[best_idx], table))
}

/// One (grid value, fold) evaluation: fit on the fold's complement and
/// score the held-out deviance ratio. Returns `(None, warning)` for a
/// skipped fold.
fn cv_cell(
    train: &[&Trial],
    fold_of: &[usize],
    fold: usize,
    frozen: &DesignRecipe,
    template: &StrategyConfig,
    value: f64,
) -> Result<(Option<f64>, Option<String>)> {
    let fit_trials: Vec<&Trial> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| fold_of[*i] != fold)
        .map(|(_, t)| *t)
        .collect();
    let val_trials: Vec<&Trial> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| fold_of[*i] == fold)
        .map(|(_, t)| *t)
        .collect();

    let fit_design = frozen.build(&fit_trials)?;
    let val_design = frozen.build(&val_trials)?;
    if val_design.y.iter().all(|&v| v == 0.0) {
        return Ok((None, Some(format!("fold {fold}: skipped (no spikes in held-out trials)"))));
    }

    let variant = template.variant.with_hyperparameter(value)?;
    let cfg = StrategyConfig { variant, irls: template.irls.clone() };
    let report = detect(&fit_design, DEFAULT_TOL)?;
    let fitted = match fit_strategy(&fit_design, &report, &cfg) {
        Ok(f) => f,
        Err(Error::DegenerateResponse) => {
            return Ok((None, Some(format!("fold {fold}: skipped (no spikes in fitting trials)"))));
        }
        Err(Error::KnotRule { lo, hi }) => {
            return Ok((
                Some(f64::NEG_INFINITY),
                Some(format!(
                    "fold {fold}: basis size {value} cannot break separation \
                     (no clean lag strictly between knots {lo} and {hi}); \
                     scored as negative infinity"
                )),
            ));
        }
        Err(e) => return Err(e),
    };

    let rates = fitted.rates(&val_design)?;
    let d_model = gof::deviance(&val_design.y, &rates)?;
    let null_rate = val_design.y.mean();
    let d_null = gof::deviance(
        &val_design.y,
        &DVector::from_element(val_design.y.len(), null_rate),
    )?;
    if d_null <= 0.0 {
        return Ok((None, Some(format!("fold {fold}: skipped (held-out null deviance is zero)"))));
    }
    Ok((Some((d_null - d_model) / d_null), None))
}
