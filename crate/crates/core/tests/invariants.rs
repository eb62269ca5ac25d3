//! Kernel invariants over built-in and randomly tabulated kernels.

use coxkernel::{Kernel, KernelName};
use proptest::prelude::*;

/// Symmetric piecewise-linear density on `[-b, b]` from random half-table heights.
fn arb_tabulated() -> impl Strategy<Value = Kernel> {
    (prop::collection::vec(0.0f64..1.0, 2..12), 0.2f64..3.0).prop_filter_map(
        "degenerate table",
        |(half, b)| {
            let m = half.len();
            // Heights at u = -b .. 0, with zero at the edge.
            let mut heights = vec![0.0];
            heights.extend(half);
            let n = 2 * m + 1;
            let step = 2.0 * b / (n - 1) as f64;
            let mut values: Vec<f64> = heights.clone();
            values.extend(heights[..m].iter().rev());
            let mass = step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]));
            if mass <= 1e-6 {
                return None;
            }
            let pts: Vec<(f64, f64)> = values
                .iter()
                .enumerate()
                .map(|(i, v)| (-b + step * i as f64, v / mass))
                .collect();
            Kernel::tabulated(&pts).ok()
        },
    )
}

fn arb_kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        prop::sample::select(KernelName::ALL.to_vec()).prop_map(Kernel::new),
        arb_tabulated(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_symmetry_and_negative_gamma(k in arb_kernel(), u in 0.0f64..1.0) {
        prop_assert!((k.mass() - 1.0).abs() < 1e-9);
        let x = u * k.support();
        prop_assert!((k.density(x) - k.density(-x)).abs() <= 1e-12 * (1.0 + k.density(x)));
        prop_assert_eq!(k.density(1.0001 * k.support()), 0.0);
        prop_assert!(k.gamma_f() < 0.0);
        prop_assert!(k.squared_integral() > 0.0);
    }

    #[test]
    fn abs_moment_identity_beyond_twice_support(k in arb_kernel(), h in 1e-3f64..10.0, extra in 0.0f64..5.0) {
        let t = 2.0 * k.support() * h * (1.0 + extra);
        let v = k.abs_moment_integral(t, h).unwrap();
        prop_assert!((v - t).abs() <= 1e-12 * t);
        // Inside the reach the moment exceeds |t| (Jensen) and stays finite.
        let inner = k.abs_moment_integral(0.5 * k.support() * h, h).unwrap();
        prop_assert!(inner >= 0.5 * k.support() * h * (1.0 - 1e-9));
    }

    #[test]
    fn autoconvolution_is_a_symmetric_density(k in arb_kernel(), x in 0.0f64..2.0) {
        let reach = 2.0 * k.support();
        let y = x * k.support();
        prop_assert!((k.autoconvolution(y) - k.autoconvolution(-y)).abs() < 1e-9 * (1.0 + k.autoconvolution(y)));
        prop_assert!(k.autoconvolution(y) >= -1e-12);
        prop_assert_eq!(k.autoconvolution(reach * 1.001), 0.0);
    }
}
