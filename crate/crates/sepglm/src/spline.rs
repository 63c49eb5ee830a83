//! Cardinal-spline change of basis over a block of consecutive predictors.
//!
//! A block of `p` sequential predictors (history lags `1..=p`, or stimulus
//! band indicators renumbered `1..=q`) is replaced by a smaller set of smooth
//! basis functions. Each original coefficient becomes an interpolated value
//! of a cubic cardinal spline through `q` control coefficients, so the whole
//! block is reparameterized as `beta_block = S * beta_tilde` with a banded
//! `p x q` matrix `S`.
//!
//! Because every basis column mixes several neighboring original predictors,
//! a predictor that is perfectly confounded with silence (nonzero only where
//! the response is zero) no longer has a coefficient of its own: as long as
//! a well-behaved predictor lies strictly between every two successive inner
//! knots, every column of the transformed design `X * S` draws weight from
//! some well-behaved predictor and cannot be a perfect predictor itself.
//! [`validate_knot_rule`] checks exactly that condition.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A built cardinal-spline basis for one block of `p` consecutive predictors.
#[derive(Debug, Clone)]
pub struct SplineBasisSpec {
    /// Knot sequence `z_1 < ... < z_q` with `z_2 = 1`, `z_{q-1} = p`,
    /// `z_1 < 1`, and `z_q > p`; indices of the block are `1..=p`.
    pub knots: Vec<f64>,
    /// Tension parameter in `[0, 1]`; `0.5` gives the Catmull-Rom spline.
    pub tension: f64,
    /// The `p x q` change-of-basis matrix `S`.
    pub matrix: DMatrix<f64>,
}

impl SplineBasisSpec {
    /// Number of original predictors covered by the block.
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of basis functions (columns of `S`).
    pub fn q(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Blending weights of the four control coefficients surrounding a point at
/// fractional position `alpha` in `[0, 1)` within its knot interval.
///
/// The weights are the cubic polynomial `[a^3, a^2, a, 1]` applied to the
/// cardinal-spline blending matrix with tension `t`, ordered so that
/// `alpha = 0` returns `(0, 1, 0, 0)` — the spline interpolates the control
/// coefficients at the knots. The four weights always sum to exactly 1.
pub fn blend_weights(alpha: f64, tension: f64) -> [f64; 4] {
    let t = tension;
    let (a1, a2, a3) = (alpha, alpha * alpha, alpha * alpha * alpha);
    [
        -t * a3 + 2.0 * t * a2 - t * a1,
        (2.0 - t) * a3 + (t - 3.0) * a2 + 1.0,
        (t - 2.0) * a3 + (3.0 - 2.0 * t) * a2 + t * a1,
        t * a3 - t * a2,
    ]
}

/// Evenly spaced knots for a block of `p` predictors and `q` basis functions.
///
/// The `q - 2` inner knots run from 1 to `p` with uniform spacing
/// `h = (p - 1) / (q - 3)`, and the two outer knots sit one spacing outside
/// at `1 - h` and `p + h`. Requires `p >= 2` and `4 <= q <= p + 2` (more
/// basis functions than predictors would leave empty knot intervals).
pub fn uniform_knots(p: usize, q: usize) -> Result<Vec<f64>> {
    if p < 2 {
        return Err(Error::Config(format!(
            "spline knots: block has {p} predictor(s); need at least 2"
        )));
    }
    if !(4..=p + 2).contains(&q) {
        return Err(Error::Config(format!(
            "spline knots: basis size {q} outside 4..={} for a block of {p} predictors",
            p + 2
        )));
    }
    let h = (p as f64 - 1.0) / (q as f64 - 3.0);
    let mut knots = Vec::with_capacity(q);
    knots.push(1.0 - h);
    for k in 0..q - 2 {
        knots.push(1.0 + k as f64 * h);
    }
    // Pin the last inner knot exactly to p against accumulated rounding.
    knots[q - 2] = p as f64;
    knots.push(p as f64 + h);
    Ok(knots)
}

fn check_knot_shape(p: usize, knots: &[f64]) -> Result<()> {
    let q = knots.len();
    if q < 4 {
        return Err(Error::Config(format!(
            "spline knots: got {q} knots; a cubic basis needs at least 4"
        )));
    }
    if knots.iter().any(|z| !z.is_finite()) {
        return Err(Error::Config(
            "spline knots: all knots must be finite".into(),
        ));
    }
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "spline knots: sequence must be strictly increasing".into(),
        ));
    }
    let pf = p as f64;
    if knots[1] != 1.0 || knots[q - 2] != pf {
        return Err(Error::Config(format!(
            "spline knots: second knot must be 1 and second-to-last must be {p} \
             (got {} and {})",
            knots[1],
            knots[q - 2]
        )));
    }
    // Strict increase already gives knots[0] < 1 and knots[q-1] > p.
    Ok(())
}

/// Builds the `p x q` change-of-basis matrix for the given knots and tension.
///
/// Row `j` (for predictor index `j` in `1..=p`) selects the knot interval
/// `z_i <= j < z_{i+1}`, computes `alpha = (j - z_i) / (z_{i+1} - z_i)`, and
/// places [`blend_weights`] at the four consecutive columns centered on that
/// interval. Every row sums to 1 and has at most four nonzero entries.
pub fn build_spline_basis(p: usize, knots: &[f64], tension: f64) -> Result<SplineBasisSpec> {
    if !(0.0..=1.0).contains(&tension) {
        return Err(Error::InvalidHyper(format!(
            "spline tension must lie in [0, 1], got {tension}"
        )));
    }
    check_knot_shape(p, knots)?;
    let q = knots.len();
    let mut s = DMatrix::zeros(p, q);
    for j in 1..=p {
        let jf = j as f64;
        // Largest i (1-based) with knots[i-1] <= j; shape checks guarantee
        // 2 <= i <= q - 1, so the window below stays in bounds wherever a
        // weight can be nonzero.
        let i = knots.partition_point(|z| *z <= jf);
        let alpha = (jf - knots[i - 1]) / (knots[i] - knots[i - 1]);
        let w = blend_weights(alpha, tension);
        for (offset, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let col = i + offset;
            if col < 2 || col > q + 1 {
                return Err(Error::Config(format!(
                    "spline knots: index {j} falls outside the covered range"
                )));
            }
            s[(j - 1, col - 2)] = wk;
        }
    }
    Ok(SplineBasisSpec {
        knots: knots.to_vec(),
        tension,
        matrix: s,
    })
}

/// Checks that *strictly between* every two successive inner knots there is
/// at least one predictor index that is usable — neither perfectly
/// confounded with silence nor all-zero — so the change of basis removes
/// all perfect predictors.
///
/// Strictness matters: a predictor sitting exactly on a knot has blending
/// weights `[0, 1, 0, 0]` and feeds a single basis function, so it cannot
/// vouch for its neighbours. Only a predictor strictly inside an interval
/// carries nonzero weight on all four surrounding basis functions (for
/// positive tension), and the interior intervals together cover every basis
/// column. `perfect` holds block-local indices (`1..=p`) of unusable
/// predictors; an interval containing no predictor index at all also fails,
/// since nothing ties its basis functions to observed spiking.
pub fn validate_knot_rule(p: usize, knots: &[f64], perfect: &BTreeSet<usize>) -> Result<()> {
    check_knot_shape(p, knots)?;
    let q = knots.len();
    for k in 1..q - 2 {
        let (lo, hi) = (knots[k], knots[k + 1]);
        let mut found_clean = false;
        // Smallest integer strictly greater than lo.
        let mut j = lo.floor() as usize + 1;
        while (j as f64) < hi && j <= p {
            if !perfect.contains(&j) {
                found_clean = true;
                break;
            }
            j += 1;
        }
        if !found_clean {
            return Err(Error::KnotRule { lo, hi });
        }
    }
    Ok(())
}
