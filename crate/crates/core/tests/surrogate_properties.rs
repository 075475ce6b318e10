use chainflow::surrogate::{kernel, Baseline, InputScaling, Sample, SampleSet, Surrogate};
use chainflow::Error;
use proptest::prelude::*;

fn input() -> impl Strategy<Value = [f64; 4]> {
    (1.5f64..2.1, -0.3f64..0.3, 0.2f64..0.5, -0.3f64..0.3).prop_map(|(a, b, c, d)| [a, b, c, d])
}

/// Smooth synthetic response with positive densities.
fn response(x: &[f64; 4]) -> [f64; 5] {
    [
        0.1 * (x[0] - 1.8) + 0.2 * x[1] - 0.1 * x[3],
        x[0] + 0.05 * (3.0 * x[2]).sin(),
        x[1] + 0.1 * x[0] * x[3],
        x[2] + 0.02 * x[1] * x[1],
        x[3] - 0.05 * x[0],
    ]
}

fn sample(x: [f64; 4]) -> Sample {
    Sample::new(x, response(&x))
}

fn baseline() -> impl Strategy<Value = Baseline> {
    prop_oneof![Just(Baseline::Zero), Just(Baseline::Mean), Just(Baseline::Affine)]
}

/// Inputs pairwise at least `sep` apart in the unit scaling.
fn spread(points: Vec<[f64; 4]>, sep: f64) -> Vec<[f64; 4]> {
    let u = InputScaling::unit();
    let mut kept: Vec<[f64; 4]> = Vec::new();
    for p in points {
        if kept.iter().all(|q| u.distance(&p, q) >= sep) {
            kept.push(p);
        }
    }
    kept
}

fn trained(xs: &[[f64; 4]], lambda: f64, baseline: Baseline) -> Surrogate {
    let u = InputScaling::unit();
    let mut set = SampleSet::new();
    for x in xs {
        set.insert(sample(*x), &u).unwrap();
    }
    Surrogate::train(set, u, 10.0, lambda, baseline).unwrap()
}

proptest! {
    #[test]
    fn kernel_is_symmetric_and_bounded(a in input(), b in input(), g in 0.1f64..50.0) {
        let u = InputScaling([1.8, 0.1, 1.8, 0.1]);
        let k = kernel(&a, &b, g, &u);
        prop_assert_eq!(k, kernel(&b, &a, g, &u));
        prop_assert!(k > 0.0 || u.distance_sq(&a, &b) * g > 700.0);
        prop_assert!(k <= 1.0);
        prop_assert_eq!(kernel(&a, &a, g, &u), 1.0);
    }

    #[test]
    fn interpolates_training_points(
        pts in prop::collection::vec(input(), 1..10),
        b in baseline(),
    ) {
        let xs = spread(pts, 0.3);
        let sur = trained(&xs, 0.0, b);
        for x in &xs {
            let p = sur.predict(x).unwrap();
            let y = response(x);
            for c in 0..5 {
                prop_assert!((p[c] - y[c]).abs() < 1e-8, "{:?} vs {:?}", p, y);
            }
        }
    }

    #[test]
    fn training_ignores_sample_order(
        pts in prop::collection::vec(input(), 2..8),
        q in input(),
        b in baseline(),
    ) {
        let xs = spread(pts, 0.2);
        let mut rev = xs.clone();
        rev.reverse();
        let p1 = trained(&xs, 1e-8, b).predict(&q).unwrap();
        let p2 = trained(&rev, 1e-8, b).predict(&q).unwrap();
        for c in 0..5 {
            prop_assert!((p1[c] - p2[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn retraining_is_idempotent(pts in prop::collection::vec(input(), 1..8), q in input()) {
        let sur = trained(&spread(pts, 0.2), 1e-10, Baseline::Affine);
        let again = Surrogate::train(
            sur.samples().clone(),
            *sur.scaling(),
            sur.kernel_width(),
            1e-10,
            Baseline::Affine,
        )
        .unwrap();
        prop_assert_eq!(sur.predict(&q).unwrap(), again.predict(&q).unwrap());
        prop_assert_eq!(sur.coefficients(), again.coefficients());
    }

    #[test]
    fn huge_threshold_samples_once(xs in prop::collection::vec(input(), 1..20)) {
        let mut sur = Surrogate::empty(InputScaling::unit(), 10.0, 1e-10, Baseline::Mean).unwrap();
        let mut calls = 0;
        for x in &xs {
            let out = sur
                .evaluate_gated(x, 1e6, |x| {
                    calls += 1;
                    Ok(sample(*x))
                })
                .unwrap();
            prop_assert!(out.y.iter().all(|v| v.is_finite()));
        }
        prop_assert_eq!(calls, 1);
        prop_assert_eq!(sur.samples().len(), 1);
    }

    #[test]
    fn tiny_threshold_samples_every_new_point(pts in prop::collection::vec(input(), 1..12)) {
        let xs = spread(pts, 1e-6);
        let mut sur = Surrogate::empty(InputScaling::unit(), 10.0, 1e-10, Baseline::Mean).unwrap();
        let mut calls = 0;
        for x in &xs {
            let out = sur
                .evaluate_gated(x, 1e-9, |x| {
                    calls += 1;
                    Ok(sample(*x))
                })
                .unwrap();
            // A fresh sample answers with the micro response itself.
            prop_assert!(out.sampled);
            prop_assert_eq!(out.y, response(x));
        }
        prop_assert_eq!(calls, xs.len());
    }

    #[test]
    fn stored_samples_are_at_least_threshold_apart(
        xs in prop::collection::vec(input(), 1..40),
        eps in 0.05f64..0.5,
    ) {
        let u = InputScaling::unit();
        let mut sur = Surrogate::empty(u, 10.0, 1e-10, Baseline::Affine).unwrap();
        for x in &xs {
            let before = sur.samples().len();
            let out = sur.evaluate_gated(x, eps, |x| Ok(sample(*x))).unwrap();
            prop_assert_eq!(out.sampled, out.score >= eps);
            prop_assert_eq!(sur.samples().len(), before + out.sampled as usize);
        }
        let s = sur.samples().samples();
        for i in 0..s.len() {
            for j in 0..i {
                prop_assert!(u.distance(&s[i].x, &s[j].x) >= eps);
            }
        }
    }

    #[test]
    fn store_round_trip_is_bitwise(pts in prop::collection::vec(input(), 1..8), q in input()) {
        let sur = trained(&spread(pts, 0.2), 1e-10, Baseline::Affine);
        let mut buf = Vec::new();
        sur.samples().write_csv(&mut buf).unwrap();
        let set = SampleSet::read_csv(buf.as_slice(), sur.scaling()).unwrap();
        // Compared by bit pattern: samples without diagnostics carry NaN
        // residuals.
        let bits = |s: &Sample| {
            let mut v: Vec<u64> = s.x.iter().chain(&s.y).map(|f| f.to_bits()).collect();
            v.push(s.rh_mass_residual.to_bits());
            v.push(s.rh_momentum_residual.to_bits());
            v
        };
        prop_assert_eq!(set.len(), sur.samples().len());
        for (a, b) in set.samples().iter().zip(sur.samples().samples()) {
            prop_assert_eq!(bits(a), bits(b));
        }
        let back = Surrogate::train(set, *sur.scaling(), 10.0, 1e-10, Baseline::Affine).unwrap();
        let (a, b) = (sur.predict(&q).unwrap(), back.predict(&q).unwrap());
        for c in 0..5 {
            prop_assert_eq!(a[c].to_bits(), b[c].to_bits());
        }
    }
}

fn gated_calls(stream: &[[f64; 4]], eps: f64) -> usize {
    let mut sur = Surrogate::empty(InputScaling::unit(), 10.0, 1e-10, Baseline::Mean).unwrap();
    let mut calls = 0;
    for x in stream {
        sur.evaluate_gated(x, eps, |x| {
            calls += 1;
            Ok(sample(*x))
        })
        .unwrap();
    }
    calls
}

proptest! {
    #[test]
    fn larger_threshold_never_costs_more_on_ordered_streams(
        mut steps in prop::collection::vec(0.0f64..0.4, 1..40),
        dir in input(),
        e1 in 0.01f64..0.5,
        factor in 1.0f64..4.0,
    ) {
        // Inputs advancing monotonically along one direction.
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut t = 0.0;
        let stream: Vec<[f64; 4]> = steps
            .iter_mut()
            .map(|d| {
                t += *d;
                std::array::from_fn(|k| 1.0 + t * dir[k] / norm)
            })
            .collect();
        prop_assert!(gated_calls(&stream, e1 * factor) <= gated_calls(&stream, e1));
    }
}

#[test]
fn larger_threshold_can_cost_more_on_general_streams() {
    // Skipping the middle point under the larger threshold leaves the two
    // off-axis points uncovered.
    let p = |a: f64, b: f64| [1.0 + a, b, 0.3, 0.0];
    let stream = [p(0.0, 0.0), p(1.05, 0.0), p(2.1, 0.0), p(1.05, 0.95), p(1.05, -0.95)];
    assert_eq!(gated_calls(&stream, 1.0), 3);
    assert_eq!(gated_calls(&stream, 1.1), 4);
}

#[test]
fn failing_micro_keeps_the_surrogate() {
    let mut sur = trained(&[[1.8, 0.0, 0.3, 0.0]], 1e-10, Baseline::Mean);
    let before = sur.predict(&[1.9, 0.0, 0.3, 0.0]).unwrap();
    let r = sur.evaluate_gated(&[1.9, 0.2, 0.3, 0.0], 0.01, |_| {
        Err(Error::Extraction("synthetic".into()))
    });
    assert!(r.is_err());
    assert_eq!(sur.samples().len(), 1);
    assert_eq!(sur.predict(&[1.9, 0.0, 0.3, 0.0]).unwrap(), before);
}
