//! Command implementations behind the CLI.
//!
//! Each command takes a validated [`RunConfig`], runs one pipeline, and
//! writes its artifacts into the output directory. Everything written is
//! byte-reproducible for a fixed config and seed except `resources.csv`,
//! which holds the wall-time and peak-memory measurements and is the one
//! file allowed to differ between identical runs.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use crate::config::RunConfig;
use crate::data::{load_trials, simulate_spike_train, write_trials, TrialSet};
use crate::design::{DesignMatrix, DesignRecipe};
use crate::error::{Error, Result};
use crate::gof::{bootstrap_ci, gof_report, ks_analysis_with, rescaled_u_by_trial, GofReport};
use crate::mem;
use crate::report;
use crate::report::ResourceRow;
use crate::separation::{classify_perfect, detect, SeparationReport, DEFAULT_TOL};
use crate::strategies::{fit_strategy, select_hyperparameter, FittedStrategy, StrategyConfig, StrategyVariant};
use crate::svg;

/// Files a command wrote, in write order.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

/// Loaded data plus the designs every command starts from.
struct Prepared {
    set: TrialSet,
    /// Recipe with the configured (possibly unfitted) band edges.
    recipe: DesignRecipe,
    train: DesignMatrix,
    /// Held-out design in the training bands, when held-out trials exist.
    held: Option<DesignMatrix>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let data = cfg.data_required()?;
    let design = cfg.design_required()?;
    let set = load_trials(&data.spikes, &data.stimulus, data.bin_width)?
        .with_held_out(&data.held_out)?;
    let recipe = match &design.band_edges {
        Some(e) => DesignRecipe::with_edges(
            design.history_order,
            design.stimulus_bands,
            e.clone(),
        ),
        None => DesignRecipe::new(design.history_order, design.stimulus_bands),
    };
    let train = recipe.build(&set.training())?;
    let frozen = recipe.frozen(&train);
    let held = if set.held_out().is_empty() {
        None
    } else {
        Some(frozen.build(&set.held_out())?)
    };
    Ok(Prepared { set, recipe, train, held })
}

/// Detection on the training design; when held-out trials exist they serve
/// as the augmentation sample that separates sampling artifacts from
/// putatively structural perfect predictors.
fn detect_and_classify(prep: &Prepared) -> Result<SeparationReport> {
    let mut rep = detect(&prep.train, DEFAULT_TOL)?;
    if prep.held.is_some() {
        let frozen = prep.recipe.frozen(&prep.train);
        let all: Vec<&crate::data::Trial> = prep.set.trials().iter().collect();
        let augmented = frozen.build(&all)?;
        rep.classification = classify_perfect(&rep, &prep.train, &augmented)?;
    }
    Ok(rep)
}

/// File-name slugs for the configured strategies, disambiguating repeats of
/// the same kind with a numeric suffix.
fn unique_slugs(strategies: &[StrategyConfig]) -> Vec<String> {
    let mut out = Vec::with_capacity(strategies.len());
    for (i, s) in strategies.iter().enumerate() {
        let base = s.variant.slug();
        let repeat = strategies[..i]
            .iter()
            .filter(|t| t.variant.slug() == base)
            .count();
        if repeat == 0 {
            out.push(base.to_string());
        } else {
            out.push(format!("{base}_{}", repeat + 1));
        }
    }
    out
}

fn write_out(out: &mut RunOutput, dir: &PathBuf, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    out.files.push(path);
    Ok(())
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(cfg.out.clone())
}

/// One strategy fitted and scored, with its resource measurements.
struct Scored {
    slug: String,
    fitted: FittedStrategy,
    gof: GofReport,
    wall_ms: f64,
    peak_bytes: Option<usize>,
}

/// Fits and scores every configured strategy serially (so the wall-clock
/// and allocator-peak measurements are not confounded by concurrency), then
/// fills edof and resource ratios against the plain-IRLS baseline.
fn fit_all(cfg: &RunConfig, prep: &Prepared, rep: &SeparationReport) -> Result<Vec<Scored>> {
    let slugs = unique_slugs(&cfg.strategies);
    let mut scored = Vec::with_capacity(cfg.strategies.len());
    for (strategy, slug) in cfg.strategies.iter().zip(&slugs) {
        let start = Instant::now();
        mem::reset_peak();
        let fitted = fit_strategy(&prep.train, rep, strategy)
            .map_err(|e| e.staged(slug, "fit"))?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let peak_bytes = mem::metering_available().then(mem::peak_bytes);
        let gof = gof_report(&prep.train, &fitted, prep.held.as_ref(), cfg.small_sample_ks)
            .map_err(|e| e.staged(slug, "goodness of fit"))?;
        scored.push(Scored { slug: slug.clone(), fitted, gof, wall_ms, peak_bytes });
    }

    // Baseline for the ratio columns: the configured plain-IRLS fit if
    // present, otherwise one fitted quietly here.
    let baseline = match scored
        .iter()
        .position(|s| s.fitted.config.variant == StrategyVariant::FixedIteration)
    {
        Some(i) => (scored[i].gof.edof, scored[i].wall_ms, scored[i].peak_bytes),
        None => {
            let base_cfg = StrategyConfig::new(StrategyVariant::FixedIteration);
            let start = Instant::now();
            mem::reset_peak();
            let fitted = fit_strategy(&prep.train, rep, &base_cfg)
                .map_err(|e| e.staged("standard_irls", "baseline fit"))?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let peak = mem::metering_available().then(mem::peak_bytes);
            let gof = gof_report(&prep.train, &fitted, None, cfg.small_sample_ks)
                .map_err(|e| e.staged("standard_irls", "baseline goodness of fit"))?;
            (gof.edof, wall_ms, peak)
        }
    };
    for s in &mut scored {
        if baseline.0 > 0.0 {
            s.gof.edof_ratio = Some(s.gof.edof / baseline.0);
        }
    }
    let _ = baseline; // wall/mem ratios computed by the caller that renders resources
    Ok(scored)
}

fn resource_rows(scored: &[Scored]) -> Vec<ResourceRow> {
    let base = scored
        .iter()
        .find(|s| s.fitted.config.variant == StrategyVariant::FixedIteration);
    let (base_ms, base_peak) = match base {
        Some(b) => (Some(b.wall_ms), b.peak_bytes),
        None => (None, None),
    };
    scored
        .iter()
        .map(|s| ResourceRow {
            strategy: s.slug.clone(),
            wall_ms: s.wall_ms,
            peak_bytes: s.peak_bytes,
            wall_ratio: base_ms
                .filter(|&b| b > 0.0)
                .map(|b| s.wall_ms / b),
            mem_ratio: match (s.peak_bytes, base_peak) {
                (Some(p), Some(b)) if b > 0 => Some(p as f64 / b as f64),
                _ => None,
            },
        })
        .collect()
}

/// Deterministic run header: data shape and seed, never the clock.
fn run_header(cfg: &RunConfig, prep: &Prepared) -> String {
    let design = cfg
        .design
        .as_ref()
        .map(|d| format!("p = {}, q = {}", d.history_order, d.stimulus_bands))
        .unwrap_or_else(|| "unspecified".to_string());
    format!(
        "spike-train GLM run\nseed: {}\ntrials: {} training, {} held out\n\
         bins per trial: {} | bin width: {} s\ndesign: {} ({} columns, {} rows)\n\n",
        cfg.seed,
        prep.set.training().len(),
        prep.set.held_out().len(),
        prep.set.trials().first().map(|t| t.spikes.counts.len()).unwrap_or(0),
        report::fmt_num(prep.set.bin_width()),
        design,
        prep.train.n_cols(),
        prep.train.n_rows(),
    )
}

/// Full pipeline: detection, every configured strategy, goodness of fit,
/// comparison table, and plots.
pub fn cmd_fit(cfg: &RunConfig) -> Result<RunOutput> {
    let dir = ensure_out_dir(cfg)?;
    let prep = prepare(cfg)?;
    let rep = detect_and_classify(&prep)?;
    let scored = fit_all(cfg, &prep, &rep)?;
    let mut out = RunOutput::default();

    write_out(&mut out, &dir, "separation.csv", &report::separation_csv(&prep.train, &rep))?;

    let mut text = run_header(cfg, &prep);
    text.push_str(&report::separation_text(&prep.train, &rep));
    text.push('\n');
    for s in &scored {
        text.push_str(&report::gof_text(&s.gof));
        text.push('\n');
        write_out(
            &mut out,
            &dir,
            &format!("fit_{}.csv", s.slug),
            &report::coefficients_csv(&prep.train, &s.fitted),
        )?;
        if let Some(ks) = &s.gof.ks {
            let rates = s.fitted.rates(&prep.train)?;
            let u = rescaled_u_by_trial(&prep.train, &rates);
            write_out(
                &mut out,
                &dir,
                &format!("ks_{}.svg", s.slug),
                &svg::ks_plot(&u, ks, &format!("time-rescaling KS: {}", s.slug)),
            )?;
        }
    }
    let reports: Vec<GofReport> = scored.iter().map(|s| s.gof.clone()).collect();
    text.push_str(&report::comparison_text(&reports));
    text.push_str("\nrun time and peak memory: see resources.csv (not reproducible)\n");
    write_out(&mut out, &dir, "report.txt", &text)?;
    write_out(&mut out, &dir, "gof.csv", &report::comparison_csv(&reports))?;
    write_out(&mut out, &dir, "resources.csv", &report::resources_csv(&resource_rows(&scored)))?;
    Ok(out)
}

/// Detection and classification only.
pub fn cmd_detect(cfg: &RunConfig) -> Result<RunOutput> {
    let dir = ensure_out_dir(cfg)?;
    let prep = prepare(cfg)?;
    let rep = detect_and_classify(&prep)?;
    let mut out = RunOutput::default();
    write_out(&mut out, &dir, "separation.csv", &report::separation_csv(&prep.train, &rep))?;
    let mut text = run_header(cfg, &prep);
    text.push_str(&report::separation_text(&prep.train, &rep));
    if prep.held.is_none() && rep.is_separated() {
        text.push_str(
            "classification: unavailable (hold out trials to test whether \
             perfect predictors persist under augmentation)\n",
        );
    }
    write_out(&mut out, &dir, "separation.txt", &text)?;
    Ok(out)
}

/// Draw a synthetic trial set and write it in the CSV formats `fit` reads.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunOutput> {
    let dir = ensure_out_dir(cfg)?;
    let spec = cfg.simulate_required()?;
    let set = simulate_spike_train(spec)?;
    let spikes = dir.join("spikes.csv");
    let stimulus = dir.join("stimulus.csv");
    write_trials(&set, &spikes, &stimulus)?;
    let mut out = RunOutput::default();
    out.files.push(spikes);
    out.files.push(stimulus);

    let mut text = format!(
        "simulated {} trials x {} bins (bin width {} s, seed {})\n",
        spec.n_trials,
        spec.n_bins,
        report::fmt_num(spec.bin_width),
        spec.seed
    );
    for t in set.trials() {
        let total: u32 = t.spikes.counts.iter().sum();
        text.push_str(&format!("trial {}: {} spikes\n", t.id(), total));
    }
    write_out(&mut out, &dir, "simulate.txt", &text)?;
    Ok(out)
}

/// Goodness-of-fit diagnostics: everything `fit` computes minus coefficient
/// tables and resources, plus the rescaled-interval samples per strategy.
pub fn cmd_gof(cfg: &RunConfig) -> Result<RunOutput> {
    let dir = ensure_out_dir(cfg)?;
    let prep = prepare(cfg)?;
    let rep = detect_and_classify(&prep)?;
    let scored = fit_all(cfg, &prep, &rep)?;
    let mut out = RunOutput::default();

    let mut text = run_header(cfg, &prep);
    for s in &scored {
        text.push_str(&report::gof_text(&s.gof));
        text.push('\n');
        let rates = s.fitted.rates(&prep.train)?;
        let u = rescaled_u_by_trial(&prep.train, &rates);
        let mut u_csv = String::from("u\n");
        for v in &u {
            u_csv.push_str(&report::fmt_num(*v));
            u_csv.push('\n');
        }
        write_out(&mut out, &dir, &format!("u_{}.csv", s.slug), &u_csv)?;
        if let Some(ks) = ks_analysis_with(&u, cfg.small_sample_ks) {
            write_out(
                &mut out,
                &dir,
                &format!("ks_{}.svg", s.slug),
                &svg::ks_plot(&u, &ks, &format!("time-rescaling KS: {}", s.slug)),
            )?;
        }
    }
    let reports: Vec<GofReport> = scored.iter().map(|s| s.gof.clone()).collect();
    text.push_str(&report::comparison_text(&reports));
    write_out(&mut out, &dir, "gof.txt", &text)?;
    write_out(&mut out, &dir, "gof.csv", &report::comparison_csv(&reports))?;
    Ok(out)
}

/// Trial-resampling bootstrap for the configured strategy.
pub fn cmd_bootstrap(cfg: &RunConfig) -> Result<RunOutput> {
    let dir = ensure_out_dir(cfg)?;
    let bs = cfg.bootstrap.as_ref().ok_or_else(|| {
        Error::Config("bootstrap: section required for this command".into())
    })?;
    let prep = prepare(cfg)?;
    let strategy = &cfg.strategies[bs.strategy];
    let slug = unique_slugs(&cfg.strategies)[bs.strategy].clone();
    let frozen = prep.recipe.frozen(&prep.train);
    let summary = bootstrap_ci(&prep.set, &frozen, strategy, bs.replicates, cfg.seed)
        .map_err(|e| e.staged(&slug, "bootstrap"))?;

    let mut out = RunOutput::default();
    write_out(&mut out, &dir, &format!("bootstrap_{slug}.csv"), &report::bootstrap_csv(&summary))?;
    write_out(
        &mut out,
        &dir,
        &format!("ci_{slug}.svg"),
        &svg::ci_plot(&summary.params, &format!("bootstrap 95% intervals: {slug}")),
    )?;
    let mut text = run_header(cfg, &prep);
    text.push_str(&report::bootstrap_text(&summary));
    write_out(&mut out, &dir, "bootstrap.txt", &text)?;
    Ok(out)
}

/// Hyperparameter selection by trial-level cross-validation.
pub fn cmd_cv(cfg: &RunConfig) -> Result<RunOutput> {
    let dir = ensure_out_dir(cfg)?;
    let cv = cfg
        .cv
        .as_ref()
        .ok_or_else(|| Error::Config("cv: section required for this command".into()))?;
    let prep = prepare(cfg)?;
    let template = &cfg.strategies[cv.strategy];
    let slug = unique_slugs(&cfg.strategies)[cv.strategy].clone();
    let (_best, table) =
        select_hyperparameter(&prep.set, &prep.recipe, template, &cv.grid, cv.folds, cfg.seed)
            .map_err(|e| e.staged(&slug, "cross-validation"))?;

    let mut out = RunOutput::default();
    write_out(&mut out, &dir, &format!("cv_{slug}.csv"), &report::cv_csv(&table))?;
    let mut text = run_header(cfg, &prep);
    text.push_str(&report::cv_text(&table, &slug));
    write_out(&mut out, &dir, "cv.txt", &text)?;
    Ok(out)
}
