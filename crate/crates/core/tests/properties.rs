use std::sync::Arc;

use parweight::bmo::{bmo_to_weight, member_oscillation, pbmo_seminorm, weight_to_bmo};
use parweight::construct::cr_decompose;
use parweight::factorize::{factorize, reconstruction_residual, FactorizeOptions};
use parweight::geometry::enumerate_family_from;
use parweight::gridfn::{read_csv, to_csv_string};
use parweight::maximal::{dyadic_scales, maximal, maximal_at};
use parweight::weights::{aq_constant, dual_weight, strong_type_ratio, weak_type_ratio};
use parweight::{
    Direction, EvalPath, Exponents, Exponents64, GridFunction, GridFunction64, GridSpec, GridSpec64,
    RectangleFamily64, SpaceTimeBox64,
};
use proptest::prelude::*;

/// `[0, 1/2] x (0, 1/2)` at `h = 1/16`, `tau = 1/512`.
fn grid() -> Arc<GridSpec64> {
    GridSpec64::new(vec![8], 256, SpaceTimeBox64::new(vec![0.0], vec![0.5], 0.0, 0.5).unwrap())
        .unwrap()
        .into()
}

fn family(spec: &GridSpec64) -> RectangleFamily64 {
    enumerate_family_from(spec.domain(), 2.0, 1.0 / 16.0, 3, 0.5).unwrap()
}

/// Random log-values on a 8 x 256 grid, smoothed along time by repetition so
/// neighbouring cells are not independent noise.
fn log_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 8 * 32).prop_map(|v| {
        let mut out = Vec::with_capacity(8 * 256);
        for t in 0..256 {
            out.extend_from_slice(&v[(t / 8) * 8..(t / 8) * 8 + 8]);
        }
        out
    })
}

fn weight(values: &[f64]) -> GridFunction64 {
    GridFunction64::new(grid(), values.iter().map(|g| g.exp()).collect()).unwrap()
}

fn small_grid() -> impl Strategy<Value = GridFunction64> {
    (2usize..7, 4usize..24, 0u64..1000).prop_map(|(nx, nt, seed)| {
        let spec = GridSpec64::uniform(1, nx, nt, 1.0, 1.0).unwrap();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let values = (0..nx * nt)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 3.0
            })
            .collect();
        GridFunction64::new(spec, values).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prefix_matches_naive(f in small_grid(), gamma in 0.0f64..0.9) {
        let e = Exponents64::new(2.0, 2.0, gamma).unwrap();
        let scales = [0.2, 0.35, 0.5];
        for dir in [Direction::Forward, Direction::Backward] {
            let Ok(fast) = maximal(&f, &e, dir, &scales, EvalPath::Prefix) else { continue };
            let slow = maximal(&f, &e, dir, &scales, EvalPath::Naive).unwrap();
            prop_assert_eq!(&fast.valid, &slow.valid);
            for i in 0..f.len() {
                prop_assert!((fast.output.get(i) - slow.output.get(i)).abs() <= 1e-12 * (1.0 + slow.output.get(i)));
            }
            let points: Vec<usize> = (0..f.len()).collect();
            let at = maximal_at(&f, &e, dir, &scales, EvalPath::Naive, &points).unwrap();
            for (i, v) in at.iter().enumerate() {
                prop_assert_eq!(v.is_some(), slow.valid[i]);
            }
        }
    }

    #[test]
    fn duality_identity(v in log_values(), q in 1.2f64..5.0, gamma in 0.0f64..0.5) {
        let w = weight(&v);
        let fam = family(w.spec());
        let e = Exponents64::new(2.0, q, gamma).unwrap();
        let primal = aq_constant(&w, &e, Direction::Forward, &fam).unwrap().constant;
        let sigma = dual_weight(&w, &e).unwrap();
        let dual = aq_constant(&sigma, &e.dual(), Direction::Backward, &fam).unwrap().constant;
        let expect = primal.powf(1.0 / (q - 1.0));
        prop_assert!((dual - expect).abs() <= 1e-9 * expect);
    }

    #[test]
    fn index_monotone_and_scale_invariant(v in log_values(), c in 0.01f64..100.0) {
        let w = weight(&v);
        let fam = family(w.spec());
        let mut prev = f64::INFINITY;
        for q in [1.5, 2.0, 3.0, 6.0] {
            let e = Exponents64::new(2.0, q, 0.25).unwrap();
            let k = aq_constant(&w, &e, Direction::Forward, &fam).unwrap().constant;
            prop_assert!(k <= prev * (1.0 + 1e-12));
            prop_assert!(k >= 1.0 - 1e-12);
            let scaled = aq_constant(&w.scale(c).unwrap(), &e, Direction::Forward, &fam).unwrap().constant;
            prop_assert!((scaled - k).abs() <= 1e-12 * k);
            prev = k;
        }
    }

    #[test]
    fn optimal_offset_beats_canonical(v in log_values(), shift in -5.0f64..5.0) {
        let u = GridFunction64::new(grid(), v.clone()).unwrap();
        let fam = family(u.spec());
        let e = Exponents64::new(2.0, 2.0, 0.25).unwrap();
        let r = pbmo_seminorm(&u, &e, Direction::Forward, &fam).unwrap();
        prop_assert!(r.seminorm >= 0.0 && r.seminorm <= r.canonical_seminorm + 1e-12);
        let shifted = u.map(|x| x + shift).unwrap();
        let s = pbmo_seminorm(&shifted, &e, Direction::Forward, &fam).unwrap();
        prop_assert!((s.seminorm - r.seminorm).abs() <= 1e-9 * (1.0 + r.seminorm));
        let rect = &fam.members[0];
        let m = member_oscillation(&u, &e, Direction::Forward, rect).unwrap().unwrap();
        prop_assert!(m.value <= m.canonical_value + 1e-12);
    }

    #[test]
    fn chebyshev_ordering(v in log_values(), f in log_values()) {
        let w = weight(&v);
        let f = GridFunction64::new(grid(), f.iter().map(|x| x.max(0.0)).collect()).unwrap();
        prop_assume!(f.values().iter().any(|x| *x > 0.0));
        let e = Exponents64::new(2.0, 2.0, 0.25).unwrap();
        let scales = dyadic_scales(1.0 / 16.0, 3);
        let weak = weak_type_ratio(&w, &f, &e, &scales, None).unwrap();
        let strong = strong_type_ratio(&w, &f, &e, &scales).unwrap();
        prop_assert!(strong.ratio_pow_q >= weak.ratio);
    }

    #[test]
    fn bridges_and_decomposition_round_trip(v in log_values(), eps in 0.1f64..3.0) {
        let w = weight(&v);
        let u = weight_to_bmo(&w, 1.0 / eps).unwrap();
        let back = bmo_to_weight(&u, eps).unwrap();
        for (a, b) in back.values().iter().zip(w.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
        let e = Exponents64::new(2.0, 2.0, 0.0).unwrap();
        let d = cr_decompose(&w, &e, Direction::Forward, eps, &dyadic_scales(1.0 / 16.0, 3), None, 1e12).unwrap();
        prop_assert!(d.residual <= 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact(f in small_grid()) {
        let text = to_csv_string(&f);
        let back: GridFunction64 = read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back.spec(), f.spec());
        prop_assert_eq!(back.values(), f.values());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn factorization_reconstructs(v in log_values(), q in 1.5f64..4.0) {
        let w = weight(&v);
        let e = Exponents64::new(2.0, q, 0.25).unwrap();
        let r = factorize(&w, &e, &FactorizeOptions::new(dyadic_scales(1.0 / 16.0, 3))).unwrap();
        prop_assert!(r.residual <= 1e-12);
        prop_assert!(reconstruction_residual(&r.u, &r.v, &w, q).unwrap() <= 1e-12);
        if !r.via_dual {
            prop_assert!(r.fixed_point_excess <= 1e-9);
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let spec32: Arc<GridSpec<f32>> = GridSpec::uniform(1, 16, 64, 1.0, 1.0).unwrap().into();
    let spec64: Arc<GridSpec64> = GridSpec64::uniform(1, 16, 64, 1.0, 1.0).unwrap().into();
    let f32v = GridFunction::from_fn(spec32, |x: &[f32], t: f32| (t + x[0]).exp()).unwrap();
    let f64v = GridFunction64::from_fn(spec64, |x: &[f64], t: f64| (t + x[0]).exp()).unwrap();
    let e32 = Exponents::<f32>::new(2.0, 2.0, 0.25).unwrap();
    let e64 = Exponents64::new(2.0, 2.0, 0.25).unwrap();
    let a = maximal(&f32v, &e32, Direction::Forward, &dyadic_scales(0.125f32, 3), EvalPath::Prefix).unwrap();
    let b = maximal(&f64v, &e64, Direction::Forward, &dyadic_scales(0.125, 3), EvalPath::Prefix).unwrap();
    assert_eq!(a.valid, b.valid);
    for i in 0..a.output.len() {
        let (x, y) = (a.output.get(i) as f64, b.output.get(i));
        assert!((x - y).abs() <= 1e-5 * y, "{x} vs {y}");
    }
}
