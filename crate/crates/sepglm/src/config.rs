//! TOML run configuration for the command-line pipeline.
//!
//! A run is described by one config file with optional sections:
//!
//! ```toml
//! [data]                      # input recordings (omit when only simulating)
//! spikes = "spikes.csv"       # header trial,bin,count  or  trial,time_s
//! stimulus = "stimulus.csv"   # header trial,bin,current_pA
//! bin_width = 0.001           # seconds
//! held_out = [1]              # trial ids scored out-of-sample
//!
//! [design]
//! history_order = 10          # p: history lags, in bins
//! stimulus_bands = 6          # q: stimulus indicator bands
//! # band_edges = [...]        # optional explicit edges, length q + 1
//!
//! [run]
//! seed = 7
//! threads = 0                 # 0 = hardware concurrency
//! out = "results"
//! small_sample_ks = false     # finite-sample KS bound instead of 1.36/sqrt(n)
//!
//! [[strategy]]                # repeatable; omit entirely for all seven
//! kind = "ridge"
//! lambda = 0.1
//!
//! [cv]
//! strategy = "ridge"          # slug of a configured strategy
//! # grid = [0.01, 0.1]        # omit for the kind's default grid
//! folds = 0                   # 0 = leave-one-trial-out
//!
//! [bootstrap]
//! strategy = "ridge"
//! replicates = 200
//!
//! [simulate]                  # used by the `simulate` subcommand
//! n_trials = 4
//! n_bins = 4000
//! bin_width = 0.001
//! history_order = 2
//! beta = [1.6, -1.0, -inf, 0.5]   # -inf plants a structural perfect predictor
//! stimulus_levels = [0.0, 5.0]
//! hold_bins = 50
//! ```
//!
//! Strategy kinds and their keys (all hyperparameters optional, shown with
//! defaults): `standard_irls`; `ml_limit`; `bayesian_map` (`c = 0.9`,
//! `prior_scale = 1.0`, `blocks = "both"`); `ridge` (`lambda = 0.1`);
//! `spline` (`history_basis = 6`, `stimulus_basis` unset, `tension = 0.5`);
//! `bounded_search` (`d = -5.0`); `score_threshold` (`tau = 1e-3`). Every
//! strategy also accepts the engine overrides `max_iter`, `score_tol`, and
//! `step_tol`. When no `[[strategy]]` table appears, the run uses all seven
//! kinds at their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::SimSpec;
use crate::error::{Error, Result};
use crate::strategies::{Blocks, StrategyConfig, StrategyVariant};

/// Input recordings.
#[derive(Debug, Clone)]
pub struct DataConfig {
    pub spikes: PathBuf,
    pub stimulus: PathBuf,
    pub bin_width: f64,
    /// Trial ids scored out-of-sample instead of fitted.
    pub held_out: Vec<u32>,
}

/// Design-matrix shape.
#[derive(Debug, Clone)]
pub struct DesignConfig {
    pub history_order: usize,
    pub stimulus_bands: usize,
    pub band_edges: Option<Vec<f64>>,
}

/// Hyperparameter selection request.
#[derive(Debug, Clone)]
pub struct CvConfig {
    /// Index into [`RunConfig::strategies`].
    pub strategy: usize,
    pub grid: Vec<f64>,
    /// 0 means leave-one-trial-out.
    pub folds: usize,
}

/// Bootstrap request.
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Index into [`RunConfig::strategies`].
    pub strategy: usize,
    pub replicates: usize,
}

/// A fully validated run manifest. Relative paths are resolved against the
/// directory the config file lives in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<DataConfig>,
    pub design: Option<DesignConfig>,
    pub seed: u64,
    /// 0 means hardware concurrency.
    pub threads: usize,
    pub out: PathBuf,
    pub small_sample_ks: bool,
    pub strategies: Vec<StrategyConfig>,
    pub cv: Option<CvConfig>,
    pub bootstrap: Option<BootstrapConfig>,
    pub simulate: Option<SimSpec>,
}

// ---------------------------------------------------------------------------
// Raw deserialization layer: everything optional, no invariants.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: Option<RawData>,
    design: Option<RawDesign>,
    run: Option<RawRun>,
    #[serde(default, rename = "strategy")]
    strategies: Vec<RawStrategy>,
    cv: Option<RawCv>,
    bootstrap: Option<RawBootstrap>,
    simulate: Option<RawSimulate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    spikes: String,
    stimulus: String,
    bin_width: f64,
    #[serde(default)]
    held_out: Vec<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    history_order: usize,
    stimulus_bands: usize,
    band_edges: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<String>,
    small_sample_ks: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: String,
    c: Option<f64>,
    prior_scale: Option<f64>,
    blocks: Option<String>,
    lambda: Option<f64>,
    history_basis: Option<usize>,
    stimulus_basis: Option<usize>,
    tension: Option<f64>,
    d: Option<f64>,
    tau: Option<f64>,
    max_iter: Option<usize>,
    score_tol: Option<f64>,
    step_tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCv {
    strategy: String,
    grid: Option<Vec<f64>>,
    folds: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBootstrap {
    strategy: String,
    replicates: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    n_trials: usize,
    n_bins: usize,
    bin_width: f64,
    #[serde(default)]
    history_order: usize,
    beta: Vec<f64>,
    #[serde(default)]
    stimulus_levels: Vec<f64>,
    level_weights: Option<Vec<f64>>,
    hold_bins: Option<usize>,
    seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Resolution and validation
// ---------------------------------------------------------------------------

const VALID_KINDS: &[&str] = &[
    "standard_irls",
    "ml_limit",
    "bayesian_map",
    "ridge",
    "spline",
    "bounded_search",
    "score_threshold",
];

/// The seven strategies at their default hyperparameters, used when a config
/// lists no `[[strategy]]` tables.
pub fn default_strategy_ladder() -> Vec<StrategyConfig> {
    [
        StrategyVariant::FixedIteration,
        StrategyVariant::MlLimit,
        StrategyVariant::BayesianMap { c: 0.9, prior_scale: 1.0, blocks: Blocks::default() },
        StrategyVariant::Ridge { lambda: 0.1 },
        StrategyVariant::SplineBasis {
            history_basis: Some(6),
            stimulus_basis: None,
            tension: 0.5,
        },
        StrategyVariant::BoundedSearch { d: -5.0 },
        StrategyVariant::ScoreThreshold { tau: 1e-3 },
    ]
    .into_iter()
    .map(StrategyConfig::new)
    .collect()
}

/// Default hyperparameter grid for cross-validation, per strategy kind.
/// Strategies with nothing to tune return an error naming the key.
pub fn default_grid(variant: &StrategyVariant, history_order: usize) -> Result<Vec<f64>> {
    match variant {
        StrategyVariant::Ridge { .. } => {
            // 10 points log-spaced over [0.01, 0.5], rounded to readable
            // values (the exact grid points are not meaningful).
            let (lo, hi) = (0.01f64.ln(), 0.5f64.ln());
            Ok((0..10)
                .map(|i| {
                    let v = (lo + (hi - lo) * i as f64 / 9.0).exp();
                    format!("{v:.4e}").parse().unwrap()
                })
                .collect())
        }
        StrategyVariant::BayesianMap { .. } => Ok(vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.99]),
        StrategyVariant::SplineBasis { .. } => {
            // Basis sizes 5..=40, admissible for this history order
            // (a cardinal basis needs 4 <= size <= p + 2).
            let hi = 40.min(history_order + 2);
            let grid: Vec<f64> = (5..=hi).map(|b| b as f64).collect();
            if grid.is_empty() {
                return Err(Error::Config(format!(
                    "cv.grid: no admissible spline basis sizes for history_order = \
                     {history_order} (need history_order >= 3)"
                )));
            }
            Ok(grid)
        }
        StrategyVariant::BoundedSearch { .. } => Ok(vec![-1.0, -2.0, -3.0, -5.0, -8.0]),
        StrategyVariant::ScoreThreshold { .. } => {
            Ok((0..6).map(|i| 10f64.powi(-6 + i)).collect())
        }
        StrategyVariant::FixedIteration | StrategyVariant::MlLimit => Err(Error::Config(
            format!("cv.strategy: {} has no tunable hyperparameter", variant.slug()),
        )),
    }
}

fn resolve_strategy(raw: &RawStrategy, idx: usize) -> Result<StrategyConfig> {
    let key = |name: &str| format!("strategy[{idx}] ({}): key `{name}`", raw.kind);
    let reject = |name: &str, set: bool| -> Result<()> {
        if set {
            Err(Error::Config(format!(
                "{} does not apply to this kind",
                key(name)
            )))
        } else {
            Ok(())
        }
    };

    // Reject hyperparameters that belong to a different kind, so a typo like
    // putting `lambda` under `bayesian_map` cannot be silently ignored.
    let is = |k: &str| raw.kind == k;
    reject("c", raw.c.is_some() && !is("bayesian_map"))?;
    reject("prior_scale", raw.prior_scale.is_some() && !is("bayesian_map"))?;
    reject("blocks", raw.blocks.is_some() && !is("bayesian_map"))?;
    reject("lambda", raw.lambda.is_some() && !is("ridge"))?;
    reject("history_basis", raw.history_basis.is_some() && !is("spline"))?;
    reject("stimulus_basis", raw.stimulus_basis.is_some() && !is("spline"))?;
    reject("tension", raw.tension.is_some() && !is("spline"))?;
    reject("d", raw.d.is_some() && !is("bounded_search"))?;
    reject("tau", raw.tau.is_some() && !is("score_threshold"))?;

    let variant = match raw.kind.as_str() {
        "standard_irls" => StrategyVariant::FixedIteration,
        "ml_limit" => StrategyVariant::MlLimit,
        "bayesian_map" => {
            let blocks = match raw.blocks.as_deref() {
                None | Some("both") => Blocks { history: true, stimulus: true },
                Some("history") => Blocks { history: true, stimulus: false },
                Some("stimulus") => Blocks { history: false, stimulus: true },
                Some(other) => {
                    return Err(Error::Config(format!(
                        "{}: expected \"history\", \"stimulus\", or \"both\", got \"{other}\"",
                        key("blocks")
                    )));
                }
            };
            StrategyVariant::BayesianMap {
                c: raw.c.unwrap_or(0.9),
                prior_scale: raw.prior_scale.unwrap_or(1.0),
                blocks,
            }
        }
        "ridge" => StrategyVariant::Ridge { lambda: raw.lambda.unwrap_or(0.1) },
        "spline" => {
            let history_basis = match (raw.history_basis, raw.stimulus_basis) {
                (None, None) => Some(6), // default: smooth the history block
                (h, _) => h,
            };
            StrategyVariant::SplineBasis {
                history_basis,
                stimulus_basis: raw.stimulus_basis,
                tension: raw.tension.unwrap_or(0.5),
            }
        }
        "bounded_search" => StrategyVariant::BoundedSearch { d: raw.d.unwrap_or(-5.0) },
        "score_threshold" => StrategyVariant::ScoreThreshold { tau: raw.tau.unwrap_or(1e-3) },
        other => {
            return Err(Error::Config(format!(
                "strategy[{idx}].kind: unknown strategy \"{other}\" (expected one of {})",
                VALID_KINDS.join(", ")
            )));
        }
    };

    let mut cfg = StrategyConfig::new(variant);
    if let Some(m) = raw.max_iter {
        if m == 0 {
            return Err(Error::Config(format!("{}: must be at least 1", key("max_iter"))));
        }
        cfg.irls.max_iter = m;
    }
    if let Some(t) = raw.score_tol {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config(format!(
                "{}: must be positive and finite",
                key("score_tol")
            )));
        }
        cfg.irls.score_tol = t;
    }
    if let Some(t) = raw.step_tol {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config(format!(
                "{}: must be positive and finite",
                key("step_tol")
            )));
        }
        cfg.irls.step_tol = t;
    }
    Ok(cfg)
}

fn find_strategy(strategies: &[StrategyConfig], slug: &str, section: &str) -> Result<usize> {
    if !VALID_KINDS.contains(&slug) {
        return Err(Error::Config(format!(
            "{section}.strategy: unknown strategy \"{slug}\" (expected one of {})",
            VALID_KINDS.join(", ")
        )));
    }
    strategies
        .iter()
        .position(|s| s.variant.slug() == slug)
        .ok_or_else(|| {
            Error::Config(format!(
                "{section}.strategy: \"{slug}\" is not among the configured strategies"
            ))
        })
}

impl RunConfig {
    /// Parse, resolve, and validate a config file. Relative paths inside the
    /// file become relative to the file's directory.
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str_with_base(&text, base)
    }

    /// Parse a config from text, resolving relative paths against `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config parse: {e}")))?;
        let resolve = |p: &str| -> PathBuf {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };

        let data = match raw.data {
            None => None,
            Some(d) => {
                if !(d.bin_width > 0.0) || !d.bin_width.is_finite() {
                    return Err(Error::Config(format!(
                        "data.bin_width: must be a positive finite number of seconds, got {}",
                        d.bin_width
                    )));
                }
                Some(DataConfig {
                    spikes: resolve(&d.spikes),
                    stimulus: resolve(&d.stimulus),
                    bin_width: d.bin_width,
                    held_out: d.held_out,
                })
            }
        };

        let design = match raw.design {
            None => None,
            Some(d) => {
                if let Some(edges) = &d.band_edges {
                    if edges.len() != d.stimulus_bands + 1 {
                        return Err(Error::Config(format!(
                            "design.band_edges: {} edges cannot delimit stimulus_bands = {} \
                             (need exactly {})",
                            edges.len(),
                            d.stimulus_bands,
                            d.stimulus_bands + 1
                        )));
                    }
                    if edges.windows(2).any(|w| !(w[0] < w[1])) {
                        return Err(Error::Config(
                            "design.band_edges: must be strictly increasing".into(),
                        ));
                    }
                }
                Some(DesignConfig {
                    history_order: d.history_order,
                    stimulus_bands: d.stimulus_bands,
                    band_edges: d.band_edges,
                })
            }
        };

        let run = raw.run.unwrap_or(RawRun {
            seed: None,
            threads: None,
            out: None,
            small_sample_ks: None,
        });
        let seed = run.seed.unwrap_or(0);
        let threads = run.threads.unwrap_or(0);
        let out = resolve(run.out.as_deref().unwrap_or("results"));

        let strategies = if raw.strategies.is_empty() {
            default_strategy_ladder()
        } else {
            raw.strategies
                .iter()
                .enumerate()
                .map(|(i, s)| resolve_strategy(s, i))
                .collect::<Result<Vec<_>>>()?
        };

        let cv = match raw.cv {
            None => None,
            Some(c) => {
                let idx = find_strategy(&strategies, &c.strategy, "cv")?;
                let grid = match c.grid {
                    Some(g) => {
                        if g.is_empty() {
                            return Err(Error::Config("cv.grid: must not be empty".into()));
                        }
                        g
                    }
                    None => {
                        let p = design
                            .as_ref()
                            .map(|d| d.history_order)
                            .unwrap_or(0);
                        default_grid(&strategies[idx].variant, p)?
                    }
                };
                Some(CvConfig { strategy: idx, grid, folds: c.folds.unwrap_or(0) })
            }
        };

        let bootstrap = match raw.bootstrap {
            None => None,
            Some(b) => {
                let idx = find_strategy(&strategies, &b.strategy, "bootstrap")?;
                let replicates = b.replicates.unwrap_or(200);
                if replicates < 50 {
                    return Err(Error::Config(format!(
                        "bootstrap.replicates: need at least 50, got {replicates}"
                    )));
                }
                Some(BootstrapConfig { strategy: idx, replicates })
            }
        };

        let simulate = raw.simulate.map(|s| SimSpec {
            n_trials: s.n_trials,
            n_bins: s.n_bins,
            bin_width: s.bin_width,
            history_order: s.history_order,
            beta: s.beta,
            stimulus_levels: s.stimulus_levels,
            level_weights: s.level_weights,
            hold_bins: s.hold_bins.unwrap_or(50),
            seed: s.seed.unwrap_or(seed),
        });

        Ok(RunConfig {
            data,
            design,
            seed,
            threads,
            out,
            small_sample_ks: run.small_sample_ks.unwrap_or(false),
            strategies,
            cv,
            bootstrap,
            simulate,
        })
    }

    /// Apply command-line flag overrides on top of the file values.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        threads: Option<usize>,
        out: Option<PathBuf>,
    ) {
        if let Some(s) = seed {
            self.seed = s;
            if let Some(sim) = self.simulate.as_mut() {
                sim.seed = s;
            }
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(o) = out {
            self.out = o;
        }
    }

    /// The `[data]` section, or a config error naming it.
    pub fn data_required(&self) -> Result<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("data: section required for this command".into()))
    }

    /// The `[design]` section, or a config error naming it.
    pub fn design_required(&self) -> Result<&DesignConfig> {
        self.design
            .as_ref()
            .ok_or_else(|| Error::Config("design: section required for this command".into()))
    }

    /// The `[simulate]` section, or a config error naming it.
    pub fn simulate_required(&self) -> Result<&SimSpec> {
        self.simulate
            .as_ref()
            .ok_or_else(|| Error::Config("simulate: section required for this command".into()))
    }
}
