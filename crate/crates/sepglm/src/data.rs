//! Binned spike trains, stimulus traces, CSV adapters, and a reproducible
//! synthetic-data simulator.
//!
//! All containers are immutable after construction and cheap to share across
//! threads. Trials carry a role tag (training vs held-out) so downstream
//! fitting and cross-validation can split a set without copying it.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Spike counts for one trial on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSpikeTrain {
    pub trial: u32,
    pub bin_width: f64,
    pub counts: Vec<u32>,
}

impl BinnedSpikeTrain {
    pub fn new(trial: u32, bin_width: f64, counts: Vec<u32>) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::Config(format!(
                "bin_width must be a positive finite number of seconds, got {bin_width}"
            )));
        }
        Ok(Self { trial, bin_width, counts })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total_spikes(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Stimulus values (e.g. injected current in pA) for one trial on the same
/// grid as its spike train.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusTrace {
    pub trial: u32,
    pub values: Vec<f64>,
}

/// Whether a trial participates in fitting or is held out for validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialRole {
    Training,
    HeldOut,
}

/// One trial: spike counts paired with an equal-length stimulus trace.
#[derive(Debug, Clone)]
pub struct Trial {
    pub spikes: BinnedSpikeTrain,
    pub stimulus: StimulusTrace,
    pub role: TrialRole,
}

impl Trial {
    pub fn new(spikes: BinnedSpikeTrain, stimulus: StimulusTrace, role: TrialRole) -> Result<Self> {
        if spikes.counts.len() != stimulus.values.len() {
            return Err(Error::TrialLengthMismatch {
                trial: spikes.trial,
                spike_bins: spikes.counts.len(),
                stimulus_bins: stimulus.values.len(),
            });
        }
        Ok(Self { spikes, stimulus, role })
    }

    pub fn id(&self) -> u32 {
        self.spikes.trial
    }

    pub fn n_bins(&self) -> usize {
        self.spikes.counts.len()
    }
}

/// A collection of trials sharing one bin width, with role tags.
#[derive(Debug, Clone)]
pub struct TrialSet {
    trials: Vec<Trial>,
    bin_width: f64,
}

impl TrialSet {
    /// Build a set, checking the shared-bin-width and at-least-one-training
    /// invariants.
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let bin_width = match trials.first() {
            Some(t) => t.spikes.bin_width,
            None => return Err(Error::NoTrainingTrials),
        };
        for t in &trials {
            if t.spikes.bin_width != bin_width {
                return Err(Error::BinWidthMismatch {
                    trial: t.id(),
                    got: t.spikes.bin_width,
                    expected: bin_width,
                });
            }
        }
        if !trials.iter().any(|t| t.role == TrialRole::Training) {
            return Err(Error::NoTrainingTrials);
        }
        Ok(Self { trials, bin_width })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn training(&self) -> Vec<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.role == TrialRole::Training)
            .collect()
    }

    pub fn held_out(&self) -> Vec<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.role == TrialRole::HeldOut)
            .collect()
    }

    /// Tag the named trials as held out and all others as training.
    pub fn with_held_out(mut self, held_out_ids: &[u32]) -> Result<Self> {
        for id in held_out_ids {
            if !self.trials.iter().any(|t| t.id() == *id) {
                return Err(Error::Config(format!(
                    "held_out_trials: trial {id} is not present in the data"
                )));
            }
        }
        for t in &mut self.trials {
            t.role = if held_out_ids.contains(&t.id()) {
                TrialRole::HeldOut
            } else {
                TrialRole::Training
            };
        }
        if !self.trials.iter().any(|t| t.role == TrialRole::Training) {
            return Err(Error::NoTrainingTrials);
        }
        Ok(self)
    }
}

// ---------------------------------------------------------------------------
// CSV adapters
// ---------------------------------------------------------------------------

/// Read one trial set from a spike CSV and a stimulus CSV.
///
/// The stimulus file must have header `trial,bin,current_pA`. The spike file
/// is either pre-binned (`trial,bin,count`, omitted bins are zero) or event
/// times (`trial,time_s`, binned here by `floor(t / bin_width)`; events on a
/// boundary go to the later bin). Trials are defined by the stimulus file;
/// a trial absent from the spike file simply has no spikes. All trials load
/// as training; retag with [`TrialSet::with_held_out`].
pub fn load_trials(
    spike_file: impl AsRef<Path>,
    stimulus_file: impl AsRef<Path>,
    bin_width: f64,
) -> Result<TrialSet> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Config(format!(
            "bin_width must be a positive finite number of seconds, got {bin_width}"
        )));
    }
    let stim_path = stimulus_file.as_ref();
    let spike_path = spike_file.as_ref();

    let stimulus = read_stimulus(stim_path)?;
    let n_bins_of: BTreeMap<u32, usize> =
        stimulus.iter().map(|(id, v)| (*id, v.len())).collect();
    let counts = read_spikes(spike_path, bin_width, &n_bins_of)?;

    let mut trials = Vec::new();
    for (id, values) in stimulus {
        let c = counts.get(&id).cloned().unwrap_or_else(|| vec![0; values.len()]);
        let spikes = BinnedSpikeTrain::new(id, bin_width, c)?;
        trials.push(Trial::new(spikes, StimulusTrace { trial: id, values }, TrialRole::Training)?);
    }
    TrialSet::new(trials)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn field<'r>(rec: &'r csv::StringRecord, idx: usize, path: &Path, line: u64) -> Result<&'r str> {
    rec.get(idx)
        .ok_or_else(|| parse_err(path, line, format!("missing field {}", idx + 1)))
}

fn read_stimulus(path: &Path) -> Result<BTreeMap<u32, Vec<f64>>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["trial", "bin", "current_pA"] {
        return Err(parse_err(
            path,
            1,
            format!("expected header trial,bin,current_pA, got {}", cols.join(",")),
        ));
    }
    let mut filled: BTreeMap<u32, BTreeMap<usize, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let trial: u32 = field(&rec, 0, path, line)?
            .parse()
            .map_err(|_| parse_err(path, line, "trial must be a non-negative integer"))?;
        let bin: usize = field(&rec, 1, path, line)?
            .parse()
            .map_err(|_| parse_err(path, line, "bin must be a non-negative integer"))?;
        let value: f64 = field(&rec, 2, path, line)?
            .parse()
            .map_err(|_| parse_err(path, line, "current_pA must be a number"))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, "current_pA must be finite"));
        }
        if filled.entry(trial).or_default().insert(bin, value).is_some() {
            return Err(parse_err(path, line, format!("duplicate stimulus bin {bin} for trial {trial}")));
        }
    }
    let mut out = BTreeMap::new();
    for (trial, bins) in filled {
        let n = bins.keys().max().map(|m| m + 1).unwrap_or(0);
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            match bins.get(&k) {
                Some(v) => values.push(*v),
                None => {
                    return Err(parse_err(
                        path,
                        0,
                        format!("trial {trial} is missing stimulus bin {k}"),
                    ))
                }
            }
        }
        out.insert(trial, values);
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "stimulus file contains no rows"));
    }
    Ok(out)
}

fn read_spikes(
    path: &Path,
    bin_width: f64,
    n_bins_of: &BTreeMap<u32, usize>,
) -> Result<BTreeMap<u32, Vec<u32>>> {
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let binned = match cols.as_slice() {
        ["trial", "bin", "count"] => true,
        ["trial", "time_s"] => false,
        other => {
            return Err(parse_err(
                path,
                1,
                format!(
                    "expected header trial,bin,count or trial,time_s, got {}",
                    other.join(",")
                ),
            ))
        }
    };

    let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut last_time: BTreeMap<u32, f64> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let trial: u32 = field(&rec, 0, path, line)?
            .parse()
            .map_err(|_| parse_err(path, line, "trial must be a non-negative integer"))?;
        let n_bins = *n_bins_of.get(&trial).ok_or_else(|| {
            parse_err(
                path,
                line,
                format!("trial {trial} appears in the spike file but not in the stimulus file"),
            )
        })?;
        let counts = out.entry(trial).or_insert_with(|| vec![0; n_bins]);

        if binned {
            let bin: usize = field(&rec, 1, path, line)?
                .parse()
                .map_err(|_| parse_err(path, line, "bin must be a non-negative integer"))?;
            let count: i64 = field(&rec, 2, path, line)?
                .parse()
                .map_err(|_| parse_err(path, line, "count must be an integer"))?;
            if count < 0 {
                return Err(Error::NegativeCount { trial, bin });
            }
            if bin >= n_bins {
                return Err(Error::TrialLengthMismatch {
                    trial,
                    spike_bins: bin + 1,
                    stimulus_bins: n_bins,
                });
            }
            counts[bin] = counts[bin]
                .checked_add(count as u32)
                .ok_or_else(|| parse_err(path, line, "count overflows u32"))?;
        } else {
            let t: f64 = field(&rec, 1, path, line)?
                .parse()
                .map_err(|_| parse_err(path, line, "time_s must be a number"))?;
            if !t.is_finite() || t < 0.0 {
                return Err(parse_err(path, line, "time_s must be finite and non-negative"));
            }
            if let Some(prev) = last_time.get(&trial) {
                if t < *prev {
                    return Err(Error::NonMonotoneTimes { trial, t });
                }
            }
            last_time.insert(trial, t);
            let bin = (t / bin_width).floor() as usize;
            if bin >= n_bins {
                return Err(Error::EventBeyondTrace { trial, t, n_bins });
            }
            counts[bin] += 1;
        }
    }
    Ok(out)
}

/// Write a trial set to a binned spike CSV and a stimulus CSV (the formats
/// accepted by [`load_trials`]). Zero-count bins are omitted from the spike
/// file.
pub fn write_trials(
    set: &TrialSet,
    spike_file: impl AsRef<Path>,
    stimulus_file: impl AsRef<Path>,
) -> Result<()> {
    let spike_path = spike_file.as_ref();
    let mut w = std::fs::File::create(spike_path).map_err(|e| Error::io(spike_path, e))?;
    writeln!(w, "trial,bin,count").map_err(|e| Error::io(spike_path, e))?;
    for t in set.trials() {
        for (bin, &c) in t.spikes.counts.iter().enumerate() {
            if c > 0 {
                writeln!(w, "{},{},{}", t.id(), bin, c).map_err(|e| Error::io(spike_path, e))?;
            }
        }
    }

    let stim_path = stimulus_file.as_ref();
    let mut w = std::fs::File::create(stim_path).map_err(|e| Error::io(stim_path, e))?;
    writeln!(w, "trial,bin,current_pA").map_err(|e| Error::io(stim_path, e))?;
    for t in set.trials() {
        for (bin, v) in t.stimulus.values.iter().enumerate() {
            writeln!(w, "{},{},{v}", t.id(), bin).map_err(|e| Error::io(stim_path, e))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

/// Generative specification for synthetic trials.
///
/// The per-bin mean is `exp(theta) * bin_width` where
/// `theta = beta[0] + sum_j beta[j] * count[t-j] + beta[1+p+k]` and `k` is the
/// index of the stimulus level active in bin `t` (so `exp(beta[0])` is a rate
/// in spikes per second). Entries of `beta` may be `-inf`: such a coefficient
/// forces the rate to zero whenever its covariate is nonzero, and contributes
/// nothing when the covariate is zero. The number of stimulus bands is
/// `stimulus_levels.len()` and may be zero (no stimulus terms; the emitted
/// stimulus trace is identically zero).
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub n_trials: usize,
    pub n_bins: usize,
    pub bin_width: f64,
    /// History order p: how many preceding bins feed back into the rate.
    pub history_order: usize,
    /// Coefficients `[beta_0, beta_1..beta_p, beta_{p+1}..beta_{p+q}]`.
    pub beta: Vec<f64>,
    /// Distinct stimulus values, strictly increasing; one per band.
    pub stimulus_levels: Vec<f64>,
    /// Sampling weights over the levels (uniform when `None`).
    pub level_weights: Option<Vec<f64>>,
    /// The stimulus holds each sampled level for this many bins.
    pub hold_bins: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn n_bands(&self) -> usize {
        self.stimulus_levels.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.n_bins == 0 {
            return Err(Error::Config("n_bins must be at least 1".into()));
        }
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(Error::Config(format!(
                "bin_width must be a positive finite number of seconds, got {}",
                self.bin_width
            )));
        }
        let expect = 1 + self.history_order + self.n_bands();
        if self.beta.len() != expect {
            return Err(Error::Config(format!(
                "beta has {} entries but 1 + p + q = {expect}",
                self.beta.len()
            )));
        }
        if self.beta.iter().any(|b| b.is_nan()) {
            return Err(Error::Config("beta entries must not be NaN".into()));
        }
        for w in self.stimulus_levels.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(
                    "stimulus_levels must be strictly increasing".into(),
                ));
            }
        }
        if self.stimulus_levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("stimulus_levels must be finite".into()));
        }
        if let Some(w) = &self.level_weights {
            if w.len() != self.n_bands() {
                return Err(Error::Config(format!(
                    "level_weights has {} entries but there are {} stimulus levels",
                    w.len(),
                    self.n_bands()
                )));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Config(
                    "level_weights must be non-negative with a positive sum".into(),
                ));
            }
        }
        if self.n_bands() > 0 && self.hold_bins == 0 {
            return Err(Error::Config("hold_bins must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draw a trial set from `spec`, bin by bin, with history feedback.
///
/// Each trial uses an independent random stream derived from
/// `(spec.seed, trial index)`, so results are reproducible and independent of
/// scheduling; distinct trials are simulated in parallel.
pub fn simulate_spike_train(spec: &SimSpec) -> Result<TrialSet> {
    spec.validate()?;
    let trials: Vec<Trial> = (0..spec.n_trials)
        .into_par_iter()
        .map(|t| simulate_one(spec, t as u32))
        .collect::<Result<_>>()?;
    TrialSet::new(trials)
}

fn simulate_one(spec: &SimSpec, trial: u32) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial as u64);

    let q = spec.n_bands();
    let p = spec.history_order;

    // Piecewise-constant stimulus: hold each sampled level for hold_bins.
    let mut stimulus = Vec::with_capacity(spec.n_bins);
    let mut band = Vec::with_capacity(spec.n_bins);
    if q == 0 {
        stimulus.resize(spec.n_bins, 0.0);
    } else {
        let uniform = vec![1.0; q];
        let weights = spec.level_weights.as_deref().unwrap_or(&uniform);
        let total: f64 = weights.iter().sum();
        while stimulus.len() < spec.n_bins {
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut k = q - 1;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            let run = spec.hold_bins.min(spec.n_bins - stimulus.len());
            stimulus.extend(std::iter::repeat(spec.stimulus_levels[k]).take(run));
            band.extend(std::iter::repeat(k).take(run));
        }
    }

    let mut counts: Vec<u32> = Vec::with_capacity(spec.n_bins);
    for i in 0..spec.n_bins {
        let mut theta = spec.beta[0];
        let mut minus_inf = !theta.is_finite() && theta < 0.0;
        let mut plus_inf = !theta.is_finite() && theta > 0.0;
        for j in 1..=p {
            if i >= j {
                let x = counts[i - j] as f64;
                if x != 0.0 {
                    let b = spec.beta[j];
                    if b == f64::NEG_INFINITY {
                        minus_inf = true;
                    } else if b == f64::INFINITY {
                        plus_inf = true;
                    } else {
                        theta += b * x;
                    }
                }
            }
        }
        if q > 0 {
            let b = spec.beta[1 + p + band[i]];
            if b == f64::NEG_INFINITY {
                minus_inf = true;
            } else if b == f64::INFINITY {
                plus_inf = true;
            } else {
                theta += b;
            }
        }

        let mu = if plus_inf {
            return Err(Error::DivergentRate { row: i });
        } else if minus_inf {
            0.0
        } else {
            let m = theta.exp() * spec.bin_width;
            if !m.is_finite() {
                return Err(Error::RateOverflow { theta, row: i });
            }
            m
        };

        let c = if mu == 0.0 {
            0
        } else {
            let pois = Poisson::new(mu)
                .map_err(|_| Error::RateOverflow { theta, row: i })?;
            let draw: f64 = pois.sample(&mut rng);
            draw.min(u32::MAX as f64) as u32
        };
        counts.push(c);
    }

    let spikes = BinnedSpikeTrain::new(trial, spec.bin_width, counts)?;
    Trial::new(spikes, StimulusTrace { trial, values: stimulus }, TrialRole::Training)
}
