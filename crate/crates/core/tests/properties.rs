use proptest::prelude::*;
use varinc::multifun::{Multifunction, ScalarFn};
use varinc::setvalued::{hausdorff_distance, support_function, CompactSet};
use varinc::variation::{cumulative_variation, interpolant, Partition, VariationOptions};

fn cloud(dim: usize) -> impl Strategy<Value = CompactSet> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 1..6)
        .prop_map(|pts| CompactSet::new(pts, false).unwrap())
}

fn hull_cloud() -> impl Strategy<Value = CompactSet> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6)
        .prop_map(|pts| CompactSet::new(pts, true).unwrap())
}

proptest! {
    #[test]
    fn hausdorff_is_a_metric((a, b, c) in (1usize..=3).prop_flat_map(|d| (cloud(d), cloud(d), cloud(d)))) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - hausdorff_distance(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!(hausdorff_distance(&a, &a).unwrap() <= 1e-12);
        let ac = hausdorff_distance(&a, &c).unwrap();
        let bc = hausdorff_distance(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn hull_hausdorff_triangle(a in hull_cloud(), b in hull_cloud(), c in hull_cloud()) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        let bc = hausdorff_distance(&b, &c).unwrap();
        let ac = hausdorff_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn support_is_sublinear(
        a in cloud(2),
        p in prop::collection::vec(-2.0f64..2.0, 2),
        q in prop::collection::vec(-2.0f64..2.0, 2),
        s in 0.0f64..5.0,
    ) {
        let sp = support_function(&a, &p).unwrap().0;
        let sq = support_function(&a, &q).unwrap().0;
        let pq: Vec<f64> = p.iter().zip(&q).map(|(x, y)| x + y).collect();
        prop_assert!(support_function(&a, &pq).unwrap().0 <= sp + sq + 1e-12);
        let ps: Vec<f64> = p.iter().map(|x| s * x).collect();
        prop_assert!((support_function(&a, &ps).unwrap().0 - s * sp).abs() <= 1e-10 * (1.0 + s * sp.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variation_grows_with_delta_and_resolution(
        at in 0.1f64..0.9,
        jump in -2.0f64..2.0,
        slope in -1.0f64..1.0,
        d1 in 0.0f64..0.5,
        dd in 0.0f64..0.5,
    ) {
        let step = ScalarFn::Step { at, before: 0.0, after: jump };
        let f = Multifunction::from_fn(1, (0.0, 1.0), move |t, x, _| {
            let c = step.eval(t) + slope * t * x[0];
            CompactSet::interval(c - 0.5, c + 0.5)
        });
        let opts = VariationOptions::default();
        let lo = cumulative_variation(&f, d1, 1.0 / 8.0, 2, &opts).unwrap();
        let hi = cumulative_variation(&f, d1 + dd, 1.0 / 8.0, 2, &opts).unwrap();
        prop_assert!(hi.total() >= lo.total() - 1e-12);
        let fine = cumulative_variation(&f, d1, 1.0 / 16.0, 2, &opts).unwrap();
        prop_assert!(fine.total() >= lo.total() - 1e-12);
        prop_assert!(lo.is_monotone());
    }

    #[test]
    fn interpolant_increments_are_dominated(
        jumps in prop::collection::vec((0.05f64..0.95, -1.0f64..1.0), 1..4),
        weights in prop::collection::vec(-1.0f64..1.0, 15),
        s in 0.0f64..=1.0,
        u in 0.0f64..=1.0,
    ) {
        let f = Multifunction::single_valued((0.0, 1.0), move |t| {
            vec![jumps.iter().filter(|(a, _)| t >= *a).map(|(_, h)| h).sum::<f64>() + 0.3 * t]
        });
        let eta = cumulative_variation(&f, 0.0, 1.0 / 16.0, 2, &VariationOptions::default()).unwrap().normalize();
        let grid = Partition::uniform(0.0, 1.0, 16).unwrap();
        let t = &grid.times;
        let d: Vec<f64> = (1..16).map(|j| (eta.eval(t[j]) - eta.eval(t[j - 1])) * weights[j - 1]).collect();
        let ip = interpolant(&eta, &grid, &d, 0.0).unwrap();
        let (a, b) = if s <= u { (s, u) } else { (u, s) };
        prop_assert!((ip.m_tilde(b) - ip.m_tilde(a)).abs() <= eta.eval(b) - eta.eval(a) + 1e-12);
        for &tk in t {
            prop_assert_eq!(ip.m(tk), ip.m_tilde(tk));
        }
    }
}
