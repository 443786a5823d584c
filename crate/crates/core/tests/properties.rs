use posetl::dataio::{read_clip_csv, segment_windows, window_count, write_clip_csv, PoseClip, WindowSpec};
use posetl::metrics::{confusion, majority_vote, weighted_f1};
use posetl::nn::{gram_deviation, orthonormal_init, SeededRng};
use posetl::signal::{eval_piecewise_quintic, ChannelSeries, SplineQuery, Unit};
use proptest::prelude::*;
use rand::SeedableRng;

fn poly(c: &[f64], t: f64) -> (f64, f64) {
    let v = c.iter().enumerate().map(|(k, a)| a * t.powi(k as i32)).sum();
    let d2 = c.iter().enumerate().skip(2).map(|(k, a)| a * (k * (k - 1)) as f64 * t.powi(k as i32 - 2)).sum();
    (v, d2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quintic_reproduces_polynomials(
        coef in prop::collection::vec(-1.0f64..1.0, 1..=6),
        rate in 10.0f64..120.0,
        n in 6usize..80,
        support in 6usize..10,
    ) {
        prop_assume!(n >= support);
        let values = (0..n).map(|k| poly(&coef, k as f64 / rate).0).collect();
        let series = ChannelSeries::new(values, rate, Unit::Position).unwrap();
        let end = series.duration();
        let times: Vec<f64> = (0..=40).map(|i| end * i as f64 / 40.0).collect();
        let v = eval_piecewise_quintic(&series, &times, SplineQuery::value().with_support(support)).unwrap();
        let a = eval_piecewise_quintic(&series, &times, SplineQuery::second_derivative().with_support(support)).unwrap();
        let exact: Vec<(f64, f64)> = times.iter().map(|&t| poly(&coef, t)).collect();
        // amplitude-relative: pointwise relative error is meaningless at zero crossings
        let vmax = exact.iter().map(|e| e.0.abs()).fold(1.0, f64::max);
        let amax = exact.iter().map(|e| e.1.abs()).fold(vmax, f64::max);
        for (i, &(ev, ea)) in exact.iter().enumerate() {
            prop_assert!((v[i] - ev).abs() <= 1e-8 * vmax, "value at {}: {} vs {ev}", times[i], v[i]);
            prop_assert!((a[i] - ea).abs() <= 1e-8 * amax, "d2 at {}: {} vs {ea}", times[i], a[i]);
        }
    }

    #[test]
    fn quintic_is_linear(
        x in prop::collection::vec(-5.0f64..5.0, 12..40),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let y: Vec<f64> = x.iter().rev().map(|v| v * 0.5 - 1.0).collect();
        let mk = |v: Vec<f64>| ChannelSeries::new(v, 30.0, Unit::Position).unwrap();
        let times: Vec<f64> = (0..50).map(|i| (x.len() - 1) as f64 / 30.0 * i as f64 / 49.0).collect();
        let q = SplineQuery::second_derivative();
        let ex = eval_piecewise_quintic(&mk(x.clone()), &times, q).unwrap();
        let ey = eval_piecewise_quintic(&mk(y.clone()), &times, q).unwrap();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let ec = eval_piecewise_quintic(&mk(comb), &times, q).unwrap();
        for i in 0..times.len() {
            let expect = alpha * ex[i] + beta * ey[i];
            prop_assert!((ec[i] - expect).abs() <= 1e-7 * (1.0 + expect.abs() + ex[i].abs() + ey[i].abs()));
        }
    }

    #[test]
    fn windows_are_contiguous_slices(len in 0usize..300, w in 1usize..60, s in 1usize..40, d in 1usize..4) {
        let clip = PoseClip {
            clip_id: "p".into(),
            label: 0,
            rate_hz: 50.0,
            channel_names: (0..d).map(|c| format!("j{c}.x")).collect(),
            channels: (0..d).map(|c| (0..len).map(|t| (t * 10 + c) as f64).collect()).collect(),
            unit: Unit::Position,
            sample_labels: None,
            subject: None,
        };
        let windows = segment_windows(&clip, &WindowSpec::new(w, s, 50.0).unwrap());
        let expected = if len < w { 0 } else { (len - w) / s + 1 };
        prop_assert_eq!(windows.len(), expected);
        prop_assert_eq!(window_count(len, w, s), expected);
        for (k, win) in windows.iter().enumerate() {
            for t in 0..w {
                for c in 0..d {
                    prop_assert_eq!(win.row(t)[c], ((k * s + t) * 10 + c) as f64);
                }
            }
        }
    }

    #[test]
    fn wf1_is_relabel_invariant_and_bounded(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80),
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let base = weighted_f1(&confusion(&t, &p, 5).unwrap()).unwrap();
        let rt: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let rp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        let relabeled = weighted_f1(&confusion(&rt, &rp, 5).unwrap()).unwrap();
        prop_assert!((base - relabeled).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert_eq!(base == 1.0, t == p);
    }

    #[test]
    fn majority_of_copies(class in 0usize..9, w in 1usize..30) {
        let groups = vec!["clip"; w];
        let v = majority_vote(&groups, &vec![class; w]).unwrap();
        prop_assert_eq!(v["clip"], class);
    }

    #[test]
    fn orthonormal_init_gram(rows in 1usize..40, cin in 1usize..8, k in 1usize..6, seed in any::<u64>()) {
        let t = orthonormal_init(&[rows, cin, k], &mut SeededRng::seed_from_u64(seed)).unwrap();
        prop_assert!(gram_deviation(&t) < 1e-5);
    }

    #[test]
    fn clip_csv_round_trip(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 2..60),
        rate in prop::sample::select(vec![25.0, 30.0, 50.0, 100.0, 120.0]),
    ) {
        let n = values.len() / 2;
        let clip = PoseClip {
            clip_id: "r".into(),
            label: 0,
            rate_hz: rate,
            channel_names: vec!["a.x".into(), "a.y".into()],
            channels: vec![values[..n].to_vec(), values[n..2 * n].to_vec()],
            unit: Unit::Position,
            sample_labels: None,
            subject: None,
        };
        let mut buf = Vec::new();
        write_clip_csv(&clip, &mut buf).unwrap();
        let (names, channels, labels) = read_clip_csv(buf.as_slice(), rate).unwrap();
        prop_assert_eq!(names, clip.channel_names);
        prop_assert!(labels.is_none());
        for (a, b) in channels.iter().flatten().zip(clip.channels.iter().flatten()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
