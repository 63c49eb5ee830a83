//! Detection of perfect predictors: single columns, generated linear
//! combinations, the rows they predict, and a structural-vs-sampling
//! classification based on data augmentation.
//!
//! A column `j` is a *perfect predictor* when every row with `X[i,j] != 0`
//! has `y[i] = 0`; the likelihood then grows monotonically as `beta_j` falls
//! to `-inf`. A *generated* perfect predictor is a linear combination of
//! columns that vanishes on every spiking row but not identically: it lies
//! in the null space of the spiking-row submatrix without lying in the null
//! space of the whole matrix.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::design::{ColumnMeta, DesignMatrix};
use crate::error::{Error, Result};

/// Default relative singular-value threshold for combo rank decisions.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A weighted combination of design columns that is a perfect predictor.
///
/// Weights form a unit vector whose first entry (in column order) is
/// positive; entries below the trim threshold are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Combo {
    pub columns: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Combo {
    /// The combo's value on each row of `d` (restricted to its columns).
    pub fn values(&self, d: &DesignMatrix) -> DVector<f64> {
        let mut z = DVector::zeros(d.n_rows());
        for (c, w) in self.columns.iter().zip(&self.weights) {
            z += d.x.column(*c) * *w;
        }
        z
    }
}

/// How a perfect predictor behaves as more data arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Still perfect after augmentation; plausibly a feature of the cell
    /// (e.g. refractoriness), though finite data can never prove it.
    PutativeStructural,
    /// Vanished when more trials were added: an artifact of a small sample.
    Sampling,
    Unclassified,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::PutativeStructural => "putative structural",
            Classification::Sampling => "sampling",
            Classification::Unclassified => "unclassified",
        }
    }
}

/// Everything detection learned about one design.
#[derive(Debug, Clone)]
pub struct SeparationReport {
    /// Single perfect columns (S0), ascending.
    pub perfect_columns: Vec<usize>,
    /// All-zero columns: degenerate, reported separately, never in S0.
    pub empty_columns: Vec<usize>,
    /// Basis of generated perfect predictors over columns outside S0.
    pub combos: Vec<Combo>,
    /// Union of S0 and all combo member columns, ascending.
    pub perfect_set: Vec<usize>,
    /// Rows (0-based) with a nonzero entry in some column of S or a nonzero
    /// combo value; all have `y = 0`.
    pub predicted_rows: Vec<usize>,
    /// Filled by [`classify_perfect`]; members of S start `Unclassified`.
    pub classification: BTreeMap<usize, Classification>,
    /// Relative singular-value tolerance used for combo rank decisions.
    pub tol: f64,
}

impl SeparationReport {
    pub fn is_separated(&self) -> bool {
        !self.perfect_set.is_empty()
    }

    /// Render as a structured text document.
    ///
    /// Schema: a `separation report` header; a `tolerance:` line; a
    /// `perfect columns (N):` section with one `  [index] name` line each;
    /// `empty columns (N):` likewise; `generated combos (N):` with one
    /// `  combo K: <signed weight> * [index] name ...` line per combo;
    /// a `perfectly predicted rows: N of M` line; and a `classification:`
    /// section with one `  [index] name: label` line per member of S.
    pub fn to_text(&self, columns: &[ColumnMeta], n_rows: usize) -> String {
        let mut s = String::new();
        let name = |j: usize| {
            columns
                .get(j)
                .map(|c| c.name.as_str())
                .unwrap_or("?")
        };
        let _ = writeln!(s, "separation report");
        let _ = writeln!(s, "tolerance: {:e}", self.tol);
        let _ = writeln!(s, "perfect columns ({}):", self.perfect_columns.len());
        for &j in &self.perfect_columns {
            let _ = writeln!(s, "  [{j}] {}", name(j));
        }
        let _ = writeln!(s, "empty columns ({}):", self.empty_columns.len());
        for &j in &self.empty_columns {
            let _ = writeln!(s, "  [{j}] {}", name(j));
        }
        let _ = writeln!(s, "generated combos ({}):", self.combos.len());
        for (k, combo) in self.combos.iter().enumerate() {
            let mut terms = String::new();
            for (c, w) in combo.columns.iter().zip(&combo.weights) {
                let _ = write!(terms, " {:+.6} * [{c}] {}", w, name(*c));
            }
            let _ = writeln!(s, "  combo {}:{terms}", k + 1);
        }
        let _ = writeln!(
            s,
            "perfectly predicted rows: {} of {n_rows}",
            self.predicted_rows.len()
        );
        let _ = writeln!(s, "classification:");
        for (&j, cls) in &self.classification {
            let _ = writeln!(s, "  [{j}] {}: {}", name(j), cls.label());
        }
        s
    }
}

/// Result of the exact single-column scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScan {
    pub perfect: Vec<usize>,
    pub empty: Vec<usize>,
}

/// Exact scan for single perfect columns (no tolerance): non-intercept
/// columns that are nonzero somewhere but only where `y = 0`. All-zero
/// columns are reported as `empty` instead.
pub fn find_perfect_columns(d: &DesignMatrix) -> ColumnScan {
    let mut perfect = Vec::new();
    let mut empty = Vec::new();
    for j in 1..d.n_cols() {
        let mut any_nonzero = false;
        let mut clean = true;
        for i in 0..d.n_rows() {
            if d.x[(i, j)] != 0.0 {
                any_nonzero = true;
                if d.y[i] > 0.0 {
                    clean = false;
                    break;
                }
            }
        }
        if !any_nonzero {
            empty.push(j);
        } else if clean {
            perfect.push(j);
        }
    }
    ColumnScan { perfect, empty }
}

/// Orthonormal basis of the (right) null space of `m` at relative
/// singular-value threshold `tol`. Rows are zero-padded so the thin SVD
/// still exposes every right singular vector when `m` is wide.
fn null_basis(m: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    if cols == 0 {
        return vec![];
    }
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("SVD with v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if smax == 0.0 || s <= tol * smax {
            basis.push(v_t.row(i).transpose());
        }
    }
    basis
}

/// Find a basis of generated perfect predictors: directions `a` over the
/// candidate columns (non-intercept, outside `s0`, not all-zero) with
/// `X_s a = 0` on spiking rows but `X a != 0` overall. Directions that are
/// mere collinearities (`X a = 0` everywhere) are excluded.
pub fn find_generated_combos(d: &DesignMatrix, s0: &[usize], tol: f64) -> Vec<Combo> {
    if !(tol > 0.0) {
        return vec![];
    }
    let s0_set: HashSet<usize> = s0.iter().copied().collect();
    let candidates: Vec<usize> = (1..d.n_cols())
        .filter(|j| !s0_set.contains(j))
        .filter(|&j| (0..d.n_rows()).any(|i| d.x[(i, j)] != 0.0))
        .collect();
    if candidates.is_empty() {
        return vec![];
    }
    let m = candidates.len();

    let spiking: Vec<usize> = (0..d.n_rows()).filter(|&i| d.y[i] > 0.0).collect();
    let mut x_s = DMatrix::zeros(spiking.len(), m);
    for (r, &i) in spiking.iter().enumerate() {
        for (c, &j) in candidates.iter().enumerate() {
            x_s[(r, c)] = d.x[(i, j)];
        }
    }
    let mut x_c = DMatrix::zeros(d.n_rows(), m);
    for i in 0..d.n_rows() {
        for (c, &j) in candidates.iter().enumerate() {
            x_c[(i, c)] = d.x[(i, j)];
        }
    }

    let n_s = null_basis(&x_s, tol); // vanish on spiking rows
    if n_s.is_empty() {
        return vec![];
    }
    let n_f = null_basis(&x_c, tol); // vanish everywhere (collinearity)
    let want = n_s.len().saturating_sub(n_f.len());
    if want == 0 {
        return vec![];
    }

    // Project the spiking-row null basis off the full null space and take an
    // orthonormal basis of what remains.
    let mut proj = DMatrix::zeros(m, n_s.len());
    for (k, v) in n_s.iter().enumerate() {
        let mut w = v.clone();
        for f in &n_f {
            let d = f.dot(v);
            w -= f * d;
        }
        proj.set_column(k, &w);
    }
    let svd = proj.svd(true, false);
    let u = svd.u.expect("SVD with u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });

    let trim = 1e-9;
    let mut combos = Vec::new();
    for &k in order.iter().take(want) {
        let v = u.column(k);
        let mut columns = Vec::new();
        let mut weights = Vec::new();
        for (c, &j) in candidates.iter().enumerate() {
            if v[c].abs() > trim {
                columns.push(j);
                weights.push(v[c]);
            }
        }
        if columns.is_empty() {
            continue;
        }
        let norm: f64 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        let sign = if weights[0] < 0.0 { -1.0 } else { 1.0 };
        for w in &mut weights {
            *w *= sign / norm;
        }
        combos.push(Combo { columns, weights });
    }
    combos
}

/// Threshold below which a combo value on a row counts as zero: a combo is
/// numerically null on spiking rows (values near machine epsilon times the
/// data scale), so the split is placed at `sqrt(tol)` relative to the
/// combo's largest value.
fn row_threshold(z: &DVector<f64>, tol: f64) -> f64 {
    let zmax = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    zmax * tol.sqrt()
}

/// Rows touched by any member of S: a nonzero entry in a perfect column
/// (exact test) or a nonzero combo value (thresholded). Every returned row
/// must have `y = 0`; anything else is an internal consistency error.
pub fn perfectly_predicted_rows(
    d: &DesignMatrix,
    s0: &[usize],
    combos: &[Combo],
    tol: f64,
) -> Result<Vec<usize>> {
    let mut flagged = vec![false; d.n_rows()];
    for &j in s0 {
        for i in 0..d.n_rows() {
            if d.x[(i, j)] != 0.0 {
                flagged[i] = true;
            }
        }
    }
    for combo in combos {
        let z = combo.values(d);
        let thr = row_threshold(&z, tol);
        for i in 0..d.n_rows() {
            if z[i].abs() > thr {
                flagged[i] = true;
            }
        }
    }
    let rows: Vec<usize> = flagged
        .iter()
        .enumerate()
        .filter(|(_, f)| **f)
        .map(|(i, _)| i)
        .collect();
    for &i in &rows {
        if d.y[i] > 0.0 {
            return Err(Error::PredictedRowHasSpikes { row: i });
        }
    }
    Ok(rows)
}

/// Run the full detection pipeline on one design.
pub fn detect(d: &DesignMatrix, tol: f64) -> Result<SeparationReport> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Config(format!(
            "separation tolerance must be positive and finite, got {tol}"
        )));
    }
    let scan = find_perfect_columns(d);
    let combos = find_generated_combos(d, &scan.perfect, tol);
    let mut perfect_set: Vec<usize> = scan
        .perfect
        .iter()
        .copied()
        .chain(combos.iter().flat_map(|c| c.columns.iter().copied()))
        .collect();
    perfect_set.sort_unstable();
    perfect_set.dedup();
    let predicted_rows = perfectly_predicted_rows(d, &scan.perfect, &combos, tol)?;
    let classification = perfect_set
        .iter()
        .map(|&j| (j, Classification::Unclassified))
        .collect();
    Ok(SeparationReport {
        perfect_columns: scan.perfect,
        empty_columns: scan.empty,
        combos,
        perfect_set,
        predicted_rows,
        classification,
        tol,
    })
}

/// Classify the perfect predictors of `d_small` by checking whether they
/// survive in the augmented design `d_large` (same columns, superset of
/// rows — typically more trials). Survivors are putatively structural;
/// ones that vanish are sampling artifacts. Columns outside S stay
/// unclassified.
pub fn classify_perfect(
    report: &SeparationReport,
    d_small: &DesignMatrix,
    d_large: &DesignMatrix,
) -> Result<BTreeMap<usize, Classification>> {
    if d_small.n_cols() != d_large.n_cols() {
        return Err(Error::Config(format!(
            "classification designs must share columns ({} vs {})",
            d_small.n_cols(),
            d_large.n_cols()
        )));
    }
    let large_rows: HashSet<(u32, usize)> = d_large.row_origin.iter().copied().collect();
    if !d_small.row_origin.iter().all(|r| large_rows.contains(r)) {
        return Err(Error::RowSupersetViolated);
    }

    let large_scan = find_perfect_columns(d_large);
    let large_perfect: HashSet<usize> = large_scan.perfect.iter().copied().collect();

    let mut map = BTreeMap::new();
    for &j in &report.perfect_columns {
        let cls = if large_perfect.contains(&j) {
            Classification::PutativeStructural
        } else {
            Classification::Sampling
        };
        map.insert(j, cls);
    }
    // A combo survives if it still vanishes on every spiking row of the
    // large design (and is still nonzero somewhere).
    for combo in &report.combos {
        let z = combo.values(d_large);
        let thr = row_threshold(&z, report.tol);
        let still_perfect = (0..d_large.n_rows())
            .all(|i| d_large.y[i] == 0.0 || z[i].abs() <= thr)
            && z.iter().any(|v| v.abs() > thr);
        let cls = if still_perfect {
            Classification::PutativeStructural
        } else {
            Classification::Sampling
        };
        for &j in &combo.columns {
            map.entry(j).or_insert(cls);
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{ColumnKind, ColumnMeta};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hand-build a design from explicit columns (intercept prepended).
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
                name: if j == 0 {
                    "intercept".into()
                } else {
                    format!("c{j}")
                },
            })
            .collect();
        DesignMatrix {
            x,
            y: DVector::from_vec(y),
            columns,
            row_origin: (0..n).map(|i| (0, i)).collect(),
            band_edges: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn single_column_scan_follows_the_definition() {
        let d = design(vec![vec![1.0, 0.0, 1.0]], vec![0.0, 5.0, 0.0]);
        let scan = find_perfect_columns(&d);
        assert_eq!(scan.perfect, vec![1]);

        let d = design(vec![vec![1.0, 0.0, 1.0]], vec![0.0, 5.0, 2.0]);
        assert!(find_perfect_columns(&d).perfect.is_empty());

        let d = design(vec![vec![0.0, 0.0, 0.0]], vec![0.0, 5.0, 0.0]);
        let scan = find_perfect_columns(&d);
        assert!(scan.perfect.is_empty());
        assert_eq!(scan.empty, vec![1]);
    }

    #[test]
    fn generated_combo_is_found_with_unit_weights() {
        // Neither column is perfect, but their difference vanishes on the
        // spiking rows (1st and 4th) and not elsewhere.
        let d = design(
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]],
            vec![3.0, 0.0, 0.0, 1.0],
        );
        assert!(find_perfect_columns(&d).perfect.is_empty());
        let combos = find_generated_combos(&d, &[], DEFAULT_TOL);
        assert_eq!(combos.len(), 1);
        assert_eq!(combos[0].columns, vec![1, 2]);
        let r = 0.5f64.sqrt();
        assert!((combos[0].weights[0] - r).abs() < 1e-9);
        assert!((combos[0].weights[1] + r).abs() < 1e-9);
    }

    #[test]
    fn collinear_duplicates_are_not_combos() {
        // Identical columns active on a spiking row: (1, -1) is in the full
        // null space, so it is collinearity, not separation.
        let d = design(
            vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]],
            vec![2.0, 0.0, 1.0],
        );
        assert!(find_perfect_columns(&d).perfect.is_empty());
        assert!(find_generated_combos(&d, &[], DEFAULT_TOL).is_empty());
    }

    #[test]
    fn full_column_rank_on_spiking_rows_means_no_combos() {
        let d = design(
            vec![vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]],
            vec![1.0, 2.0, 3.0],
        );
        assert!(find_generated_combos(&d, &[], DEFAULT_TOL).is_empty());
    }

    #[test]
    fn predicted_rows_from_single_column_and_combo() {
        let d = design(vec![vec![1.0, 0.0, 1.0]], vec![0.0, 5.0, 0.0]);
        let rows = perfectly_predicted_rows(&d, &[1], &[], DEFAULT_TOL).unwrap();
        assert_eq!(rows, vec![0, 2]);

        let d = design(
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![1.0, 0.0, 1.0, 0.0]],
            vec![3.0, 0.0, 0.0, 1.0],
        );
        let combos = find_generated_combos(&d, &[], DEFAULT_TOL);
        let rows = perfectly_predicted_rows(&d, &[], &combos, DEFAULT_TOL).unwrap();
        assert_eq!(rows, vec![1, 2]);

        assert!(perfectly_predicted_rows(&d, &[], &[], DEFAULT_TOL)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn predicted_row_with_spikes_is_an_internal_error() {
        let d = design(vec![vec![1.0, 1.0]], vec![0.0, 2.0]);
        // Lying about column 1 being perfect must be caught.
        let err = perfectly_predicted_rows(&d, &[1], &[], DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::PredictedRowHasSpikes { row: 1 }));
    }

    #[test]
    fn detect_assembles_a_consistent_report() {
        let d = design(
            vec![
                vec![1.0, 0.0, 1.0, 0.0], // perfect column
                vec![2.0, 1.0, 0.0, 1.0],
                vec![2.0, 1.0, 1.0, 0.0],
            ],
            vec![0.0, 3.0, 0.0, 0.0],
        );
        let rep = detect(&d, DEFAULT_TOL).unwrap();
        assert_eq!(rep.perfect_columns, vec![1]);
        // Columns 2 and 3 both touch the spiking row, so neither is perfect
        // alone, but c2 - c3 vanishes there and not at rows 2/3.
        assert_eq!(rep.combos.len(), 1);
        assert_eq!(rep.combos[0].columns, vec![2, 3]);
        assert_eq!(rep.perfect_set, vec![1, 2, 3]);
        assert_eq!(rep.predicted_rows, vec![0, 2, 3]);
        assert!(rep.is_separated());

        let text = rep.to_text(&d.columns, d.n_rows());
        assert!(text.contains("perfect columns (1):"));
        assert!(text.contains("  [1] c1"));
        assert!(text.contains("generated combos (1):"));
        assert!(text.contains("perfectly predicted rows: 3 of 4"));
        assert!(text.contains("[1] c1: unclassified"));
    }

    #[test]
    fn classification_splits_structural_from_sampling() {
        // Column 1 is perfect in both designs, column 2 only in the small one.
        let small = design(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![0.0, 2.0, 0.0],
        );
        let mut large = design(
            vec![
                vec![1.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 1.0],
            ],
            vec![0.0, 2.0, 0.0, 0.0, 3.0],
        );
        large.row_origin = vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1)];
        let rep = detect(&small, DEFAULT_TOL).unwrap();
        assert_eq!(rep.perfect_columns, vec![1, 2]);
        let map = classify_perfect(&rep, &small, &large).unwrap();
        assert_eq!(map[&1], Classification::PutativeStructural);
        assert_eq!(map[&2], Classification::Sampling);
    }

    #[test]
    fn classification_requires_a_row_superset() {
        let small = design(vec![vec![1.0, 0.0]], vec![0.0, 1.0]);
        let mut other = design(vec![vec![1.0, 0.0]], vec![0.0, 1.0]);
        other.row_origin = vec![(7, 0), (7, 1)];
        let err = classify_perfect(
            &detect(&small, DEFAULT_TOL).unwrap(),
            &small,
            &other,
        )
        .unwrap_err();
        assert!(matches!(err, Error::RowSupersetViolated));
    }

    #[test]
    fn reported_predictors_verify_by_direct_scan() {
        // Property over random sparse integer designs: everything the
        // detector reports satisfies the definition on the data.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.random_range(4..20);
            let m = rng.random_range(1..6);
            let cols: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if rng.random::<f64>() < 0.6 {
                                0.0
                            } else {
                                rng.random_range(1..4) as f64
                            }
                        })
                        .collect()
                })
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        0.0
                    } else {
                        rng.random_range(1..3) as f64
                    }
                })
                .collect();
            if y.iter().all(|v| *v == 0.0) {
                continue;
            }
            let d = design(cols, y);
            let rep = detect(&d, DEFAULT_TOL).unwrap();
            for &j in &rep.perfect_columns {
                for i in 0..d.n_rows() {
                    assert!(d.x[(i, j)] == 0.0 || d.y[i] == 0.0);
                }
                assert!((0..d.n_rows()).any(|i| d.x[(i, j)] != 0.0));
            }
            for combo in &rep.combos {
                let z = combo.values(&d);
                let scale = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                assert!(scale > 0.0, "combo must be active somewhere");
                for i in 0..d.n_rows() {
                    if d.y[i] > 0.0 {
                        assert!(
                            z[i].abs() <= 1e-8 * scale.max(1.0),
                            "combo not null on spiking row {i}: {}",
                            z[i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn adding_rows_never_creates_new_perfect_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(5..15);
            let extra = rng.random_range(1..6);
            let m = rng.random_range(1..5);
            let gen_col = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
                (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < 0.5 {
                            0.0
                        } else {
                            1.0
                        }
                    })
                    .collect()
            };
            let cols_small: Vec<Vec<f64>> = (0..m).map(|_| gen_col(&mut rng, n)).collect();
            let y_small: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.6 { 0.0 } else { 1.0 })
                .collect();
            let mut cols_large = cols_small.clone();
            let mut y_large = y_small.clone();
            for c in &mut cols_large {
                c.extend(gen_col(&mut rng, extra));
            }
            y_large.extend(
                (0..extra).map(|_| if rng.random::<f64>() < 0.6 { 0.0 } else { 1.0 }),
            );
            let s_small = find_perfect_columns(&design(cols_small, y_small)).perfect;
            let s_large = find_perfect_columns(&design(cols_large, y_large)).perfect;
            for j in &s_large {
                assert!(
                    s_small.contains(j),
                    "column {j} became perfect with more rows"
                );
            }
        }
    }
}
