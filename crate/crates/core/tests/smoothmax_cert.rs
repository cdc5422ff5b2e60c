//! Recorded certification runs for the smooth sup-norm indicator surrogate
//! over the default grid p in {1, 4, 16, 64, 256} at r = 1, eps = 0.5.
//! These freeze the observed behaviour behind the default constants:
//! frak_c = 4 passes the stability band everywhere while frak_c = 1 fails
//! for every p > 1, and the second/third derivative-sum displays at C0 = 5
//! are exceeded by bounded, p-decreasing factors (worst at p = 1).

use hdclt_core::smoothmax::{certify_derivative_bounds, certify_stability, SmoothMaxParams};
use hdclt_core::{DEFAULT_C0, DEFAULT_FRAK_C};

const GRID: [usize; 5] = [1, 4, 16, 64, 256];

#[test]
fn stability_band_holds_at_frozen_constant_across_grid() {
    for p in GRID {
        let params = SmoothMaxParams::new(1.0, 0.5, p).unwrap();
        let cert = certify_stability(&params, DEFAULT_FRAK_C, 2_000, 99).unwrap();
        assert_eq!(cert.violations, 0, "p = {p}: excess {}", cert.max_log_ratio_excess);
        assert!(cert.pass, "p = {p}");
    }
}

#[test]
fn stability_band_fails_at_unit_constant_beyond_one_dimension() {
    for p in GRID {
        let params = SmoothMaxParams::new(1.0, 0.5, p).unwrap();
        let cert = certify_stability(&params, 1.0, 2_000, 99).unwrap();
        if p == 1 {
            // One coordinate: the pair mass is a two-point softmax whose
            // ratio stays inside even the unit band.
            assert_eq!(cert.violations, 0, "p = 1: excess {}", cert.max_log_ratio_excess);
        } else {
            assert!(
                cert.violations > cert.checked / 2,
                "p = {p}: violations {} of {}",
                cert.violations,
                cert.checked
            );
        }
    }
}

#[test]
fn derivative_sums_first_order_passes_and_higher_orders_recorded() {
    // Recorded upper envelopes for the observed ratio against the displayed
    // bound with C0 = 5 (measured maxima at 2000 samples: order 2 up to 4.7,
    // order 3 up to 94 at p = 1, decaying to ~10 by p = 256).
    let order2_cap = [6.0, 4.0, 4.0, 4.0, 4.0];
    let order3_cap = [110.0, 25.0, 15.0, 15.0, 15.0];
    for (i, p) in GRID.into_iter().enumerate() {
        let params = SmoothMaxParams::new(1.0, 0.5, p).unwrap();
        let cert = certify_derivative_bounds(&params, DEFAULT_C0, 400, 99).unwrap();
        // First-order sum is analytic: sum_j |d_j phi| <= 3.75/eps = 0.75 of
        // the C0 = 5 display, with equality approached on the seam.
        assert!(cert.max_ratio[0] <= 0.7501, "p = {p}: {}", cert.max_ratio[0]);
        assert!(
            cert.max_ratio[1] <= order2_cap[i],
            "p = {p}: order-2 ratio {}",
            cert.max_ratio[1]
        );
        assert!(
            cert.max_ratio[2] <= order3_cap[i],
            "p = {p}: order-3 ratio {}",
            cert.max_ratio[2]
        );
        // The higher-order displays genuinely fail at C0 = 5; the
        // certification must say so rather than pass.
        if p >= 4 {
            assert!(!cert.pass, "p = {p}");
        }
    }
}
