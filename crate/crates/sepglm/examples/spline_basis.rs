//! The cardinal spline basis: partition of unity, the change of basis, and
//! the knot-placement rule that decides whether smoothing can remove a
//! perfect predictor.
//!
//! Re-expressing `p` history coefficients through `m < p` spline control
//! points forces neighboring lags to share information. A lag whose column
//! perfectly predicts silence then borrows curvature from its neighbors —
//! unless some pair of successive knots has no clean lag strictly between
//! them, in which case the basis cannot help and the knot rule rejects the
//! configuration up front.
//!
//! Run with: `cargo run --example spline_basis`

use std::collections::BTreeSet;

use sepglm::spline::{blend_weights, build_spline_basis, uniform_knots, validate_knot_rule};

fn main() -> sepglm::Result<()> {
    let p = 12; // history lags
    let m = 6; // basis functions

    let knots = uniform_knots(p, m)?;
    let spec = build_spline_basis(p, &knots, 0.5)?;
    println!("knots for p = {p}, m = {m}: {:?}", spec.knots);

    // Each row of S holds the four blending weights active at that lag;
    // rows sum to one (partition of unity), so a flat coefficient profile
    // stays flat through the basis.
    println!("\nchange-of-basis matrix S ({} x {}):", spec.p(), spec.q());
    let mut worst = 0.0f64;
    for j in 0..spec.p() {
        let row: Vec<String> = (0..spec.q())
            .map(|k| format!("{:>7.4}", spec.matrix[(j, k)]))
            .collect();
        let sum: f64 = (0..spec.q()).map(|k| spec.matrix[(j, k)]).sum();
        worst = worst.max((sum - 1.0).abs());
        println!("  lag {:>2}: [{}]  row sum {:.15}", j + 1, row.join(" "), sum);
    }
    println!("largest |row sum - 1|: {worst:.2e}");

    // The same property at arbitrary fractional positions.
    let w = blend_weights(0.37, 0.5);
    println!(
        "\nblend weights at alpha = 0.37: {:?} (sum {})",
        w,
        w.iter().sum::<f64>()
    );

    // Knot rule: perfect lags at 4 and 5 are fine while each interval keeps
    // a clean anchor...
    let scattered: BTreeSet<usize> = [4, 5].into_iter().collect();
    validate_knot_rule(p, &knots, &scattered)?;
    println!("\nperfect lags {{4, 5}}: knot rule satisfied (smoothing can bridge them)");

    // ...but a finer basis shrinks the intervals until one holds only
    // perfect lags, and the rule rejects the configuration.
    let fine = uniform_knots(p, 12)?;
    match validate_knot_rule(p, &fine, &scattered) {
        Err(e) => println!("perfect lags {{4, 5}} with m = 12: {e}"),
        Ok(()) => println!("unexpectedly passed"),
    }
    Ok(())
}
