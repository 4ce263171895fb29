//! End-to-end gradient verification: the whole check table, including the
//! spot-sampled full-network row, must sit under the double-precision
//! tolerance.

use std::time::Instant;

use itm_core::verify::gradient_check_suite;

#[test]
fn full_suite_passes() {
    let t0 = Instant::now();
    let rows = gradient_check_suite(1);
    for row in &rows {
        assert!(
            row.passed(),
            "{}: max rel err {:.3e} (tolerance {:.0e}, {} coords)",
            row.name,
            row.max_rel_err,
            row.tolerance,
            row.coords_checked
        );
    }
    assert!(rows.len() > 15, "suite unexpectedly small: {}", rows.len());
    eprintln!(
        "gradient suite: {} rows in {:.1}s",
        rows.len(),
        t0.elapsed().as_secs_f64()
    );
}
