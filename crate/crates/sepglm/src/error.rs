//! Crate-wide error type with process exit-code semantics.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across loading, fitting, and reporting.
///
/// Variants are grouped by exit code: configuration problems exit with 2,
/// data problems with 3, and numerical failures with 4 (see
/// [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    // --- configuration (exit code 2) ---
    /// A config value is out of range, missing, or inconsistent. The message
    /// names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// Band edges supplied explicitly were unusable (wrong length, not
    /// strictly increasing, non-finite interior values).
    #[error("config error: band edges: {0}")]
    InvalidBandEdges(String),

    /// A strategy hyperparameter is outside its admissible range.
    #[error("config error: {0}")]
    InvalidHyper(String),

    /// The smoothing-prior correlation is so close to 1 that the prior
    /// covariance is numerically singular.
    #[error(
        "config error: prior covariance is numerically singular for c = {c}; use c <= {cap}"
    )]
    PriorSingular { c: f64, cap: f64 },

    /// A requested spline knot sequence has no usable predictor strictly
    /// between some pair of successive knots, so the change of basis cannot
    /// remove the separation.
    #[error(
        "config error: spline basis does not break separation: \
         no clean predictor lies strictly between knots {lo} and {hi}"
    )]
    KnotRule { lo: f64, hi: f64 },

    // --- data (exit code 3) ---
    /// Filesystem-level failure while reading or writing a named path.
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed record in a CSV input; reports file and line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    /// Spike and stimulus series for one trial disagree in length.
    #[error(
        "trial {trial}: spike series has {spike_bins} bins but stimulus has {stimulus_bins}"
    )]
    TrialLengthMismatch {
        trial: u32,
        spike_bins: usize,
        stimulus_bins: usize,
    },

    /// Event-time input was not sorted within a trial.
    #[error("trial {trial}: non-monotone time stamps at t = {t} s")]
    NonMonotoneTimes { trial: u32, t: f64 },

    /// An event time maps past the end of the trial's stimulus trace.
    #[error("trial {trial}: event at t = {t} s falls beyond the {n_bins}-bin stimulus trace")]
    EventBeyondTrace { trial: u32, t: f64, n_bins: usize },

    /// A negative spike count in binned input.
    #[error("trial {trial}, bin {bin}: negative spike count")]
    NegativeCount { trial: u32, bin: usize },

    /// Trials in one set disagree on bin width.
    #[error("trial {trial}: bin width {got} differs from the set's bin width {expected}")]
    BinWidthMismatch { trial: u32, got: f64, expected: f64 },

    /// A trial set without at least one training trial cannot be fit.
    #[error("no training trials in the trial set")]
    NoTrainingTrials,

    /// A trial is too short to supply even one design row at history order p.
    #[error("trial {trial}: {n_bins} bins cannot support history order p = {p}")]
    ShortTrial { trial: u32, n_bins: usize, p: usize },

    /// A stimulus value falls outside all configured bands.
    #[error("trial {trial}, bin {bin}: stimulus value {value} lies outside all bands")]
    StimulusOutsideBands { trial: u32, bin: usize, value: f64 },

    /// The response is all zeros; no Poisson regression is identifiable.
    #[error("degenerate response: every bin has zero spikes")]
    DegenerateResponse,

    /// Removing perfectly predicted rows and columns left nothing to fit.
    #[error("reduced design is empty after removing perfectly predicted rows and columns")]
    ReducedDesignEmpty,

    /// Row bookkeeping between two designs violated a required
    /// subset/superset relation.
    #[error("row origins of the smaller design are not a subset of the larger design's")]
    RowSupersetViolated,

    /// Detection produced a "perfectly predicted" row that has spikes —
    /// an internal consistency failure in the caller-supplied report.
    #[error("internal inconsistency: perfectly predicted row {row} has a nonzero count")]
    PredictedRowHasSpikes { row: usize },

    // --- numerical (exit code 4) ---
    /// A linear predictor overflowed: exp(theta) is not representable.
    #[error("rate overflow: linear predictor {theta} at row {row}")]
    RateOverflow { theta: f64, row: usize },

    /// A coefficient at +inf multiplies a nonzero covariate, so the implied
    /// rate diverges.
    #[error("divergent rate: +inf coefficient meets a nonzero covariate at row {row}")]
    DivergentRate { row: usize },

    /// The Newton update could not improve the objective even after the
    /// diagonal jitter ladder was exhausted.
    #[error("numerically unstable region at iteration {iteration}: no ascent step found")]
    NumericallyUnstable { iteration: usize },

    /// An information/curvature matrix stayed singular through the entire
    /// jitter ladder.
    #[error("information matrix is singular beyond the jitter budget ({context})")]
    SingularInformation { context: String },

    /// The null (intercept-only) deviance is zero, so a deviance ratio is
    /// undefined.
    #[error("deviance ratio undefined: null deviance is zero")]
    NullDevianceZero,

    /// A supposed rate vector contained a negative entry.
    #[error("negative rate at row {row}")]
    NegativeRate { row: usize },

    /// A pipeline error annotated with the strategy and processing stage it
    /// occurred in; the exit code is the inner error's.
    #[error("strategy {strategy}, stage {stage}: {source}")]
    Staged {
        strategy: String,
        stage: String,
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code for the CLI: 2 = configuration, 3 = data,
    /// 4 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Config(_) | InvalidBandEdges(_) | InvalidHyper(_) | PriorSingular { .. }
            | KnotRule { .. } => 2,
            Io { .. }
            | Parse { .. }
            | TrialLengthMismatch { .. }
            | NonMonotoneTimes { .. }
            | EventBeyondTrace { .. }
            | NegativeCount { .. }
            | BinWidthMismatch { .. }
            | NoTrainingTrials
            | ShortTrial { .. }
            | StimulusOutsideBands { .. }
            | DegenerateResponse
            | ReducedDesignEmpty
            | RowSupersetViolated
            | PredictedRowHasSpikes { .. } => 3,
            RateOverflow { .. }
            | DivergentRate { .. }
            | NumericallyUnstable { .. }
            | SingularInformation { .. }
            | NullDevianceZero
            | NegativeRate { .. } => 4,
            Staged { source, .. } => source.exit_code(),
        }
    }

    /// Wrap an I/O error with the path it concerned.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Annotate an error with the strategy and stage it occurred in.
    pub fn staged(self, strategy: &str, stage: &str) -> Self {
        Error::Staged {
            strategy: strategy.to_string(),
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
