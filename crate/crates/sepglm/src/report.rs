//! Deterministic text and CSV rendering of run artifacts.
//!
//! Numeric reports are byte-stable for a given config and seed: floats use
//! Rust's shortest round-trip formatting, collections are emitted in index
//! order, and nothing here reads the clock. Run time and peak memory vary
//! between runs, so the comparison table splits: its numeric columns live in
//! the main report, its resource columns in a separate table rendered by
//! [`resources_csv`] that carries its own "not reproducible" caveat.

use std::fmt::Write as _;

use crate::design::DesignMatrix;
use crate::gof::{BootstrapSummary, GofReport};
use crate::separation::SeparationReport;
use crate::strategies::{CvTable, FittedStrategy};

/// Shortest round-trip decimal; infinities render `inf` / `-inf`, NaN `nan`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "NA".to_string())
}

/// Held-out deviance ratio for human-facing tables: an unbounded failure
/// (a held-out spike in a bin the model zeroed out) reads as text, not as a
/// numeric `-inf`.
fn fmt_r_cv(x: Option<f64>) -> String {
    match x {
        None => "NA".to_string(),
        Some(v) if v == f64::NEG_INFINITY => "< 0 (unbounded)".to_string(),
        Some(v) => fmt_num(v),
    }
}

/// Left-aligned plain-text table; `rows[0]` is the header.
fn aligned_table(rows: &[Vec<String>]) -> String {
    let n_cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; n_cols];
    for row in rows {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, cell)| format!("{:<w$}", cell, w = widths[j]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(rule.join("  ").trim_end());
            out.push('\n');
        }
    }
    out
}

fn csv_line(cells: &[String]) -> String {
    cells.join(",")
}

// ---------------------------------------------------------------------------
// Separation
// ---------------------------------------------------------------------------

/// One row per finding: single perfect columns, all-zero columns, and
/// generated perfect combinations.
///
/// Header: `index,kind,name,classification,detail`.
pub fn separation_csv(d: &DesignMatrix, rep: &SeparationReport) -> String {
    let mut out = String::from("index,kind,name,classification,detail\n");
    for &c in &rep.perfect_columns {
        let class = rep
            .classification
            .get(&c)
            .map(|cl| cl.label())
            .unwrap_or("unclassified");
        out.push_str(&csv_line(&[
            c.to_string(),
            "single".into(),
            d.columns[c].name.clone(),
            class.into(),
            String::new(),
        ]));
        out.push('\n');
    }
    for &c in &rep.empty_columns {
        out.push_str(&csv_line(&[
            c.to_string(),
            "empty".into(),
            d.columns[c].name.clone(),
            String::new(),
            String::new(),
        ]));
        out.push('\n');
    }
    for (i, combo) in rep.combos.iter().enumerate() {
        let expr: Vec<String> = combo
            .columns
            .iter()
            .zip(&combo.weights)
            .map(|(c, w)| format!("{}*{}", fmt_num(*w), d.columns[*c].name))
            .collect();
        out.push_str(&csv_line(&[
            i.to_string(),
            "combo".into(),
            String::new(),
            String::new(),
            expr.join(" + "),
        ]));
        out.push('\n');
    }
    out
}

/// Human-readable separation summary.
pub fn separation_text(d: &DesignMatrix, rep: &SeparationReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "perfect predictors: {} single column(s), {} generated combination(s), \
         {} empty column(s)",
        rep.perfect_columns.len(),
        rep.combos.len(),
        rep.empty_columns.len()
    )
    .unwrap();
    writeln!(
        out,
        "perfectly predicted rows: {} of {}",
        rep.predicted_rows.len(),
        d.n_rows()
    )
    .unwrap();
    if !rep.perfect_columns.is_empty() {
        let mut rows = vec![vec![
            "column".to_string(),
            "name".to_string(),
            "classification".to_string(),
        ]];
        for &c in &rep.perfect_columns {
            let class = rep
                .classification
                .get(&c)
                .map(|cl| cl.label())
                .unwrap_or("unclassified");
            rows.push(vec![c.to_string(), d.columns[c].name.clone(), class.into()]);
        }
        out.push_str(&aligned_table(&rows));
    }
    for (i, combo) in rep.combos.iter().enumerate() {
        let expr: Vec<String> = combo
            .columns
            .iter()
            .zip(&combo.weights)
            .map(|(c, w)| format!("{}*{}", fmt_num(*w), d.columns[*c].name))
            .collect();
        writeln!(out, "combination {}: {}", i, expr.join(" + ")).unwrap();
    }
    if rep.perfect_set.is_empty() {
        out.push_str("no separation detected\n");
    }
    out
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

/// Coefficient table for one fitted strategy, in original design coordinates.
///
/// Header: `column,name,estimate,divergent`.
pub fn coefficients_csv(d: &DesignMatrix, fitted: &FittedStrategy) -> String {
    let divergent = fitted.divergent_by_column();
    let mut out = String::from("column,name,estimate,divergent\n");
    for (j, (coef, meta)) in fitted.beta.iter().zip(&d.columns).enumerate() {
        out.push_str(&csv_line(&[
            j.to_string(),
            meta.name.clone(),
            fmt_num(coef.as_f64()),
            divergent.get(j).copied().unwrap_or(false).to_string(),
        ]));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Goodness of fit / comparison
// ---------------------------------------------------------------------------

/// Machine-readable comparison across strategies, one row each.
pub fn comparison_csv(reports: &[GofReport]) -> String {
    let mut out = String::from(
        "strategy,params,loglik_train,converged,iterations,divergent,sentinels,\
         R,R_cv,edof,edof_ratio,ks_stat,ks_bound,ks_pass,ks_n\n",
    );
    for r in reports {
        let (ks_stat, ks_bound, ks_pass, ks_n) = match &r.ks {
            Some(k) => (
                fmt_num(k.statistic),
                fmt_num(k.bound),
                k.pass.to_string(),
                k.n.to_string(),
            ),
            None => ("NA".into(), "NA".into(), "NA".into(), "0".into()),
        };
        out.push_str(&csv_line(&[
            r.strategy.clone(),
            r.n_optimized.to_string(),
            fmt_num(r.loglik_train),
            r.converged.to_string(),
            r.iterations.to_string(),
            r.divergent.to_string(),
            r.sentinels.to_string(),
            fmt_opt(r.r_in_sample),
            fmt_opt(r.r_cv),
            fmt_num(r.edof),
            fmt_opt(r.edof_ratio),
            ks_stat,
            ks_bound,
            ks_pass,
            ks_n,
        ]));
        out.push('\n');
    }
    out
}

/// The strategy comparison table. Run time and peak memory are deliberately
/// absent: they are not reproducible, and live in the resources table.
pub fn comparison_text(reports: &[GofReport]) -> String {
    let mut rows = vec![vec![
        "strategy".to_string(),
        "R".to_string(),
        "R_cv".to_string(),
        "params".to_string(),
        "edof_ratio".to_string(),
        "KS".to_string(),
    ]];
    for r in reports {
        let ks = match &r.ks {
            Some(k) => format!(
                "{} ({})",
                fmt_num(k.statistic),
                if k.pass { "pass" } else { "fail" }
            ),
            None => "NA".to_string(),
        };
        rows.push(vec![
            r.strategy.clone(),
            fmt_opt(r.r_in_sample),
            fmt_r_cv(r.r_cv),
            r.n_optimized.to_string(),
            fmt_opt(r.edof_ratio),
            ks,
        ]);
    }
    aligned_table(&rows)
}

/// Per-strategy diagnostics section.
pub fn gof_text(r: &GofReport) -> String {
    let mut out = String::new();
    writeln!(out, "strategy: {}", r.strategy).unwrap();
    writeln!(
        out,
        "  parameters optimized: {} | converged: {} | iterations: {}",
        r.n_optimized, r.converged, r.iterations
    )
    .unwrap();
    writeln!(
        out,
        "  divergent coordinates: {} | infinite-limit coordinates: {}",
        r.divergent, r.sentinels
    )
    .unwrap();
    writeln!(out, "  train log-likelihood: {}", fmt_num(r.loglik_train)).unwrap();
    writeln!(out, "  deviance ratio R (in-sample): {}", fmt_opt(r.r_in_sample)).unwrap();
    writeln!(out, "  deviance ratio R (held-out): {}", fmt_r_cv(r.r_cv)).unwrap();
    writeln!(
        out,
        "  effective dof: {} | ratio to baseline: {}",
        fmt_num(r.edof),
        fmt_opt(r.edof_ratio)
    )
    .unwrap();
    match &r.ks {
        Some(k) => writeln!(
            out,
            "  KS: statistic {} vs 95% bound {} over {} rescaled intervals -> {}",
            fmt_num(k.statistic),
            fmt_num(k.bound),
            k.n,
            if k.pass { "pass" } else { "fail" }
        )
        .unwrap(),
        None => writeln!(out, "  KS: no spikes to rescale").unwrap(),
    }
    for w in &r.warnings {
        writeln!(out, "  note: {w}").unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// Header: `param,finite,divergence_fraction,lower,upper`; undefined bounds
/// are empty cells.
pub fn bootstrap_csv(s: &BootstrapSummary) -> String {
    let mut out = String::from("param,finite,divergence_fraction,lower,upper\n");
    for p in &s.params {
        out.push_str(&csv_line(&[
            p.name.clone(),
            p.finite.to_string(),
            fmt_num(p.divergence_fraction),
            p.lower.map(fmt_num).unwrap_or_default(),
            p.upper.map(fmt_num).unwrap_or_default(),
        ]));
        out.push('\n');
    }
    out
}

pub fn bootstrap_text(s: &BootstrapSummary) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "bootstrap: strategy {} | {} of {} replicates completed | seed {}",
        s.strategy, s.completed, s.requested, s.seed
    )
    .unwrap();
    let mut rows = vec![vec![
        "param".to_string(),
        "divergence".to_string(),
        "95% interval".to_string(),
    ]];
    for p in &s.params {
        let interval = match (p.lower, p.upper) {
            (Some(lo), Some(hi)) => format!("[{}, {}]", fmt_num(lo), fmt_num(hi)),
            _ => "undefined (all replicates diverged)".to_string(),
        };
        rows.push(vec![p.name.clone(), fmt_num(p.divergence_fraction), interval]);
    }
    out.push_str(&aligned_table(&rows));
    for w in &s.warnings {
        writeln!(out, "note: {w}").unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Header: `value,fold_0..,mean`; a skipped fold is an empty cell.
pub fn cv_csv(t: &CvTable) -> String {
    let mut header: Vec<String> = vec!["value".into()];
    header.extend((0..t.folds).map(|f| format!("fold_{f}")));
    header.push("mean".into());
    let mut out = csv_line(&header);
    out.push('\n');
    for (i, v) in t.grid.iter().enumerate() {
        let mut cells = vec![fmt_num(*v)];
        cells.extend(
            t.fold_scores[i]
                .iter()
                .map(|s| s.map(fmt_num).unwrap_or_default()),
        );
        cells.push(fmt_num(t.mean_score[i]));
        out.push_str(&csv_line(&cells));
        out.push('\n');
    }
    out
}

pub fn cv_text(t: &CvTable, strategy: &str) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "cross-validation: strategy {} over {} grid values, {} trial folds",
        strategy,
        t.grid.len(),
        t.folds
    )
    .unwrap();
    let mut rows = vec![vec![
        "value".to_string(),
        "mean held-out R".to_string(),
        String::new(),
    ]];
    for (i, v) in t.grid.iter().enumerate() {
        rows.push(vec![
            fmt_num(*v),
            fmt_r_cv(Some(t.mean_score[i])),
            if *v == t.best { "<- selected".to_string() } else { String::new() },
        ]);
    }
    out.push_str(&aligned_table(&rows));
    writeln!(out, "selected value: {}", fmt_num(t.best)).unwrap();
    for w in &t.warnings {
        writeln!(out, "note: {w}").unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Resources (quarantined: not covered by reproducibility guarantees)
// ---------------------------------------------------------------------------

/// Wall time and allocator peak for one strategy fit, with ratios against
/// the plain-IRLS baseline measured in the same process.
#[derive(Debug, Clone)]
pub struct ResourceRow {
    pub strategy: String,
    pub wall_ms: f64,
    /// `None` when the metering allocator is not installed (library use).
    pub peak_bytes: Option<usize>,
    pub wall_ratio: Option<f64>,
    pub mem_ratio: Option<f64>,
}

/// Header: `strategy,wall_ms,peak_bytes,wall_ratio,mem_ratio`. This table is
/// the one run artifact that legitimately differs between identical runs.
pub fn resources_csv(rows: &[ResourceRow]) -> String {
    let mut out =
        String::from("strategy,wall_ms,peak_bytes,wall_ratio,mem_ratio\n");
    for r in rows {
        out.push_str(&csv_line(&[
            r.strategy.clone(),
            fmt_num(r.wall_ms),
            r.peak_bytes.map(|b| b.to_string()).unwrap_or_default(),
            r.wall_ratio.map(fmt_num).unwrap_or_default(),
            r.mem_ratio.map(fmt_num).unwrap_or_default(),
        ]));
        out.push('\n');
    }
    out
}

pub fn resources_text(rows: &[ResourceRow]) -> String {
    let mut table = vec![vec![
        "strategy".to_string(),
        "time vs baseline".to_string(),
        "memory vs baseline".to_string(),
    ]];
    for r in rows {
        table.push(vec![
            r.strategy.clone(),
            r.wall_ratio
                .map(|x| format!("{:.2}x", x))
                .unwrap_or_else(|| "NA".into()),
            r.mem_ratio
                .map(|x| format!("{:.2}x", x))
                .unwrap_or_else(|| "unmetered".into()),
        ]);
    }
    let mut out = String::from(
        "resource use (indicative only; varies between identical runs):\n",
    );
    out.push_str(&aligned_table(&table));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignRecipe;
    use crate::gof::{gof_report, BootstrapParam, KsAnalysis};
    use crate::separation::{detect, DEFAULT_TOL};
    use crate::strategies::{fit_strategy, StrategyConfig, StrategyVariant};
    use crate::data::{BinnedSpikeTrain, StimulusTrace, Trial, TrialRole};

    fn demo_trials() -> Vec<Trial> {
        (0..3u32)
            .map(|t| {
                let mut counts = vec![0u32; 30];
                for b in [4usize, 9, 15, 22, 27] {
                    counts[(b + t as usize) % 30] = 1;
                }
                let stim = vec![1.0; 30];
                Trial::new(
                    BinnedSpikeTrain::new(t, 0.01, counts).unwrap(),
                    StimulusTrace { trial: t, values: stim },
                    TrialRole::Training,
                )
                .unwrap()
            })
            .collect()
    }

    fn demo_fit() -> (crate::design::DesignMatrix, FittedStrategy) {
        let trials = demo_trials();
        let refs: Vec<&Trial> = trials.iter().collect();
        let d = DesignRecipe::new(2, 0).build(&refs).unwrap();
        let rep = detect(&d, DEFAULT_TOL).unwrap();
        let f = fit_strategy(
            &d,
            &rep,
            &StrategyConfig::new(StrategyVariant::Ridge { lambda: 0.1 }),
        )
        .unwrap();
        (d, f)
    }

    #[test]
    fn float_formatting_round_trips_and_names_sentinels() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(-3.0), "-3");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(f64::NAN), "nan");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        assert_eq!(fmt_r_cv(Some(f64::NEG_INFINITY)), "< 0 (unbounded)");
        assert_eq!(fmt_r_cv(None), "NA");
    }

    #[test]
    fn coefficient_table_lists_every_design_column() {
        let (d, f) = demo_fit();
        let csv = coefficients_csv(&d, &f);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], "column,name,estimate,divergent");
        assert_eq!(lines.len(), d.n_cols() + 1);
        assert!(lines[1].starts_with("0,intercept,"));
        for line in &lines[1..] {
            assert!(line.ends_with(",false"));
        }
    }

    #[test]
    fn separation_rendering_includes_classification_labels() {
        let trials = demo_trials();
        let refs: Vec<&Trial> = trials.iter().collect();
        // A long history order plants perfect lag columns in this short,
        // sparse record.
        let d = DesignRecipe::new(12, 0).build(&refs).unwrap();
        let rep = detect(&d, DEFAULT_TOL).unwrap();
        let csv = separation_csv(&d, &rep);
        assert!(csv.starts_with("index,kind,name,classification,detail"));
        let text = separation_text(&d, &rep);
        assert!(text.contains("perfect predictors:"));
        if rep.is_separated() {
            assert!(csv.contains("single") || csv.contains("combo"));
            assert!(text.contains("perfectly predicted rows"));
        } else {
            assert!(text.contains("no separation detected"));
        }
    }

    #[test]
    fn comparison_tables_are_deterministic_and_quarantine_resources() {
        let (d, f) = demo_fit();
        let rep = gof_report(&d, &f, None, false).unwrap();
        let a = comparison_csv(std::slice::from_ref(&rep));
        let b = comparison_csv(std::slice::from_ref(&rep));
        assert_eq!(a, b);
        assert!(a.starts_with("strategy,params,loglik_train"));
        assert!(a.contains("Ridge GLM"));
        // Neither table mentions wall time or memory.
        let t = comparison_text(std::slice::from_ref(&rep));
        for banned in ["wall", "memory", "bytes", "time"] {
            assert!(!t.contains(banned), "{banned} leaked into {t}");
        }
        assert!(t.contains("strategy"));
        assert!(t.contains("Ridge GLM"));
    }

    #[test]
    fn gof_text_spells_out_unbounded_holdout_failures() {
        let (d, f) = demo_fit();
        let mut rep = gof_report(&d, &f, None, false).unwrap();
        rep.r_cv = Some(f64::NEG_INFINITY);
        let t = gof_text(&rep);
        assert!(t.contains("< 0 (unbounded)"), "{t}");
        assert!(t.contains("effective dof"));
    }

    #[test]
    fn bootstrap_rendering_marks_undefined_intervals() {
        let s = BootstrapSummary {
            strategy: "standard_irls".into(),
            requested: 60,
            completed: 60,
            seed: 7,
            params: vec![
                BootstrapParam {
                    name: "intercept".into(),
                    finite: 60,
                    divergence_fraction: 0.0,
                    lower: Some(-1.5),
                    upper: Some(0.5),
                },
                BootstrapParam {
                    name: "stim_band_1".into(),
                    finite: 0,
                    divergence_fraction: 1.0,
                    lower: None,
                    upper: None,
                },
            ],
            warnings: vec![],
        };
        let csv = bootstrap_csv(&s);
        assert!(csv.contains("intercept,60,0,-1.5,0.5"));
        assert!(csv.contains("stim_band_1,0,1,,"));
        let t = bootstrap_text(&s);
        assert!(t.contains("undefined (all replicates diverged)"));
        assert!(t.contains("[-1.5, 0.5]"));
    }

    #[test]
    fn cv_rendering_marks_the_selected_value_and_skipped_folds() {
        let t = CvTable {
            grid: vec![0.1, 0.5],
            fold_scores: vec![vec![Some(0.2), None], vec![Some(0.3), None]],
            mean_score: vec![0.2, 0.3],
            best: 0.5,
            folds: 2,
            warnings: vec!["fold 1 skipped: no spikes in held-out trials".into()],
        };
        let csv = cv_csv(&t);
        assert_eq!(csv.lines().next().unwrap(), "value,fold_0,fold_1,mean");
        assert!(csv.contains("0.1,0.2,,0.2"));
        let text = cv_text(&t, "ridge");
        assert!(text.contains("<- selected"));
        assert!(text.contains("selected value: 0.5"));
        assert!(text.contains("fold 1 skipped"));
    }

    #[test]
    fn resource_rows_render_ratios_or_unmetered() {
        let rows = vec![
            ResourceRow {
                strategy: "standard_irls".into(),
                wall_ms: 12.5,
                peak_bytes: Some(1024),
                wall_ratio: Some(1.0),
                mem_ratio: Some(1.0),
            },
            ResourceRow {
                strategy: "spline".into(),
                wall_ms: 20.0,
                peak_bytes: None,
                wall_ratio: Some(1.6),
                mem_ratio: None,
            },
        ];
        let csv = resources_csv(&rows);
        assert!(csv.contains("standard_irls,12.5,1024,1,1"));
        assert!(csv.contains("spline,20,,1.6,"));
        let t = resources_text(&rows);
        assert!(t.contains("1.60x"));
        assert!(t.contains("unmetered"));
        assert!(t.contains("varies between identical runs"));
    }

    #[test]
    fn ks_lines_cover_pass_and_fail() {
        let (d, f) = demo_fit();
        let mut rep = gof_report(&d, &f, None, false).unwrap();
        rep.ks = Some(KsAnalysis { statistic: 0.5, bound: 0.2, pass: false, n: 40 });
        assert!(gof_text(&rep).contains("-> fail"));
        let t = comparison_text(std::slice::from_ref(&rep));
        assert!(t.contains("(fail)"));
        rep.ks = None;
        assert!(gof_text(&rep).contains("no spikes to rescale"));
    }
}
