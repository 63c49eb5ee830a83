//! Design-matrix construction: spike-history lag columns and stimulus-band
//! indicator columns, with per-column provenance metadata.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::data::Trial;
use crate::error::{Error, Result};

/// What a design column measures.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Intercept,
    /// Spike count `lag` bins before the response bin (`lag` in `1..=p`).
    HistoryLag(usize),
    /// Indicator that the stimulus value falls in band `index` (0-based),
    /// covering `[lower, upper)` (last band closed above).
    StimulusBand { index: usize, lower: f64, upper: f64 },
    /// Spline basis function over history lags (see [`crate::spline`]).
    HistoryBasis(usize),
    /// Spline basis function over stimulus bands.
    StimulusBasis(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub kind: ColumnKind,
    pub name: String,
}

/// A dense Poisson regression design: `y[i] ~ Poisson(exp(x_i . beta))`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    /// Non-negative integer counts, stored as floats for the linear algebra.
    pub y: DVector<f64>,
    pub columns: Vec<ColumnMeta>,
    /// `(trial id, bin index)` for each row, in row order.
    pub row_origin: Vec<(u32, usize)>,
    /// The `q+1` band edges actually used (possibly infinite outer edges);
    /// empty when the design has no stimulus bands.
    pub band_edges: Vec<f64>,
    /// Non-fatal observations made during construction (e.g. collinearity).
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    /// Mean count per row; the intercept-only ("null") rate.
    pub fn mean_count(&self) -> f64 {
        self.y.sum() / self.y.len() as f64
    }

    /// Indices of history-lag columns, in lag order.
    pub fn history_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ColumnKind::HistoryLag(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of stimulus-band columns, in band order.
    pub fn stimulus_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.kind, ColumnKind::StimulusBand { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Write the design, with a `y` column appended, as CSV.
    pub fn export_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "{},y", names.join(","))?;
        for i in 0..self.n_rows() {
            for j in 0..self.n_cols() {
                write!(w, "{},", self.x[(i, j)])?;
            }
            writeln!(w, "{}", self.y[i])?;
        }
        Ok(())
    }
}

/// Reusable recipe for building structurally identical designs from
/// different trial subsets (train vs test, bootstrap resamples).
///
/// `band_edges = None` means "fit q equal-count quantile edges from the
/// pooled stimulus of the trials passed in". To evaluate held-out data in
/// the same bands as the training fit, freeze the recipe first with
/// [`DesignRecipe::frozen`].
#[derive(Debug, Clone)]
pub struct DesignRecipe {
    pub p: usize,
    pub q: usize,
    pub band_edges: Option<Vec<f64>>,
}

impl DesignRecipe {
    pub fn new(p: usize, q: usize) -> Self {
        Self { p, q, band_edges: None }
    }

    pub fn with_edges(p: usize, q: usize, edges: Vec<f64>) -> Self {
        Self { p, q, band_edges: Some(edges) }
    }

    pub fn build(&self, trials: &[&Trial]) -> Result<DesignMatrix> {
        build_design(trials, self.p, self.q, self.band_edges.as_deref())
    }

    /// The same recipe with band edges pinned to the ones `design` used.
    pub fn frozen(&self, design: &DesignMatrix) -> Self {
        Self {
            p: self.p,
            q: self.q,
            band_edges: if self.q == 0 {
                Some(vec![])
            } else {
                Some(design.band_edges.clone())
            },
        }
    }
}

/// Build the lag/band design for the given trials.
///
/// Row `i` at (trial, bin `t`) has `X[i, j] = count[t - j]` for `j = 1..=p`
/// and a one-hot indicator over the `q` stimulus bands; bins `t < p` are
/// dropped (no history padding in fitting). When `band_edges` is `None`
/// the edges default to `q` equal-count quantiles of the pooled stimulus
/// of `trials`, with infinite outer edges; explicit edges must be strictly
/// increasing with length `q + 1`, and stimulus values falling outside them
/// are an error.
pub fn build_design(
    trials: &[&Trial],
    p: usize,
    q: usize,
    band_edges: Option<&[f64]>,
) -> Result<DesignMatrix> {
    if trials.is_empty() {
        return Err(Error::NoTrainingTrials);
    }
    for t in trials {
        if t.n_bins() <= p {
            return Err(Error::ShortTrial {
                trial: t.id(),
                n_bins: t.n_bins(),
                p,
            });
        }
    }

    let mut warnings = Vec::new();
    let edges: Vec<f64> = if q == 0 {
        vec![]
    } else {
        match band_edges {
            Some(e) => {
                if e.len() != q + 1 {
                    return Err(Error::InvalidBandEdges(format!(
                        "need q + 1 = {} edges for q = {q} bands, got {}",
                        q + 1,
                        e.len()
                    )));
                }
                for w in e.windows(2) {
                    if !(w[0] < w[1]) {
                        return Err(Error::InvalidBandEdges(format!(
                            "edges must be strictly increasing, got {} then {}",
                            w[0], w[1]
                        )));
                    }
                }
                if e[1..q].iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidBandEdges(
                        "interior edges must be finite".into(),
                    ));
                }
                e.to_vec()
            }
            None => {
                let mut pooled: Vec<f64> =
                    trials.iter().flat_map(|t| t.stimulus.values.iter().copied()).collect();
                quantile_edges(&mut pooled, q)?
            }
        }
    };
    if q == 1 {
        warnings.push(
            "single stimulus band: the indicator column is collinear with the intercept".into(),
        );
    }

    let n_rows: usize = trials.iter().map(|t| t.n_bins() - p).sum();
    let n_cols = 1 + p + q;
    let mut x = DMatrix::zeros(n_rows, n_cols);
    let mut y = DVector::zeros(n_rows);
    let mut row_origin = Vec::with_capacity(n_rows);

    let mut i = 0;
    for trial in trials {
        let counts = &trial.spikes.counts;
        for t in p..trial.n_bins() {
            x[(i, 0)] = 1.0;
            for j in 1..=p {
                x[(i, j)] = counts[t - j] as f64;
            }
            if q > 0 {
                let v = trial.stimulus.values[t];
                let k = band_of(v, &edges).ok_or(Error::StimulusOutsideBands {
                    trial: trial.id(),
                    bin: t,
                    value: v,
                })?;
                x[(i, 1 + p + k)] = 1.0;
            }
            y[i] = counts[t] as f64;
            row_origin.push((trial.id(), t));
            i += 1;
        }
    }

    let mut columns = Vec::with_capacity(n_cols);
    columns.push(ColumnMeta {
        kind: ColumnKind::Intercept,
        name: "intercept".into(),
    });
    for j in 1..=p {
        columns.push(ColumnMeta {
            kind: ColumnKind::HistoryLag(j),
            name: format!("hist_lag_{j}"),
        });
    }
    for k in 0..q {
        columns.push(ColumnMeta {
            kind: ColumnKind::StimulusBand {
                index: k,
                lower: edges[k],
                upper: edges[k + 1],
            },
            name: format!("stim_band_{k}"),
        });
    }

    Ok(DesignMatrix {
        x,
        y,
        columns,
        row_origin,
        band_edges: edges,
        warnings,
    })
}

/// Band index for value `v` given strictly increasing edges `e` of length
/// `q+1`: the `k` with `e[k] <= v < e[k+1]`, except the top edge is closed
/// (`v == e[q]` lands in band `q-1`). `None` when `v` is outside all bands.
pub fn band_of(v: f64, edges: &[f64]) -> Option<usize> {
    let q = edges.len().checked_sub(1)?;
    if q == 0 || v < edges[0] || v > edges[q] {
        return None;
    }
    if v == edges[q] {
        return Some(q - 1);
    }
    // partition_point gives the count of edges <= v; the band is one less.
    Some(edges.partition_point(|e| *e <= v) - 1)
}

/// Equal-count quantile edges over the pooled stimulus values: `q - 1`
/// interior cuts at midpoints between consecutive distinct order statistics,
/// with infinite outer edges. Errors when the values cannot support `q`
/// non-empty bands.
fn quantile_edges(pooled: &mut [f64], q: usize) -> Result<Vec<f64>> {
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBandEdges(
            "stimulus values must be finite to place quantile edges".into(),
        ));
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pooled.len();
    if n < q {
        return Err(Error::InvalidBandEdges(format!(
            "{n} stimulus values cannot fill q = {q} bands"
        )));
    }
    let mut edges = Vec::with_capacity(q + 1);
    edges.push(f64::NEG_INFINITY);
    for k in 1..q {
        let pos = k * n / q; // nominal cut between pooled[pos-1] and pooled[pos]
        let lo = pooled[pos - 1];
        // With ties at the cut, slide forward to the next distinct value;
        // if the tie run reaches the end, slide backward instead.
        let cut = if pooled[pos] > lo {
            (lo + pooled[pos]) / 2.0
        } else if let Some(hi) = pooled[pos..].iter().find(|v| **v > lo) {
            (lo + hi) / 2.0
        } else if let Some(below) = pooled[..pos].iter().rev().find(|v| **v < lo) {
            (below + lo) / 2.0
        } else {
            return Err(Error::InvalidBandEdges(format!(
                "too few distinct stimulus values for q = {q} bands"
            )));
        };
        edges.push(cut);
    }
    edges.push(f64::INFINITY);
    for w in edges.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidBandEdges(format!(
                "too few distinct stimulus values for q = {q} bands"
            )));
        }
    }
    Ok(edges)
}
