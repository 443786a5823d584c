//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line regardless of output capture.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use posetl::arch::{build_tcnn, init_params, CONV_LAYERS};
use posetl::dataio::{
    build_windows_from_clips, read_clip_csv, save_clip, segment_windows, subsample_fraction, PipelineConfig, PoseClip,
    SignalMode, WindowSpec,
};
use posetl::metrics::{confusion, permutation_test, weighted_f1};
use posetl::nn::{
    backward, batch_input, forward_train, softmax_xent, OptimizerState, ParamSet, RmsProp, SeededRng, Tensor,
    TrainConfig,
};
use posetl::signal::{eval_piecewise_quintic, ChannelSeries, SplineQuery, Unit};
use posetl::toy::ToyDomain;
use posetl::transfer::{
    fine_tune, load_checkpoint, save_checkpoint, transplant, Checkpoint, CheckpointMeta, TargetData, TransferPlan,
};
use posetl_cli::commands::run_gradcheck;
use posetl_cli::config::ExperimentConfig;
use posetl_cli::{run, Cli};
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cli(args: &[&str]) -> Result<String, String> {
    let cli = Cli::try_parse_from(std::iter::once("posetl").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    run(&cli).map_err(|e| e.to_string())
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let tcnn = ExperimentConfig::load(
        None,
        &[
            "arch.fc_units=64".into(),
            "gradcheck.window_len=25".into(),
            "gradcheck.channels=4".into(),
            "gradcheck.classes=3".into(),
        ],
        None,
        None,
    )
    .map_err(|e| e.to_string())?;
    let imu = ExperimentConfig::load(
        None,
        &[
            "arch.kind=tcnn-imu".into(),
            "arch.branch_units=64".into(),
            "arch.fusion_units=64".into(),
            "gradcheck.channels=6".into(),
            "gradcheck.branches=3".into(),
        ],
        None,
        None,
    )
    .map_err(|e| e.to_string())?;
    let a = run_gradcheck(&tcnn).map_err(|e| e.to_string())?;
    let b = run_gradcheck(&imu).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(a.passed && a.max_rel_error < 1e-3, || format!("tCNN max rel error {:.3e}", a.max_rel_error))?;
    ensure(b.passed && b.max_rel_error < 1e-3, || format!("tCNN-IMU max rel error {:.3e}", b.max_rel_error))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("max rel error tCNN {:.2e}, tCNN-IMU {:.2e}, {secs:.1} s", a.max_rel_error, b.max_rel_error))
}

fn spline_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededRng::seed_from_u64(2);
    let mut worst_poly = 0.0f64;
    for _ in 0..200 {
        let degree = rng.random_range(0..=5);
        let coef: Vec<f64> = (0..=degree).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rate = rng.random_range(10.0..200.0);
        let n = rng.random_range(6..120);
        let f = |t: f64| coef.iter().enumerate().map(|(k, a)| a * t.powi(k as i32)).sum::<f64>();
        let f2 = |t: f64| {
            coef.iter().enumerate().skip(2).map(|(k, a)| a * (k * (k - 1)) as f64 * t.powi(k as i32 - 2)).sum::<f64>()
        };
        let series = ChannelSeries::new((0..n).map(|k| f(k as f64 / rate)).collect(), rate, Unit::Position)
            .map_err(|e| e.to_string())?;
        let end = series.duration();
        let times: Vec<f64> = (0..=97).map(|i| end * i as f64 / 97.0).collect();
        let v = eval_piecewise_quintic(&series, &times, SplineQuery::value()).map_err(|e| e.to_string())?;
        let a = eval_piecewise_quintic(&series, &times, SplineQuery::second_derivative()).map_err(|e| e.to_string())?;
        let vmax = times.iter().map(|&t| f(t).abs()).fold(1.0, f64::max);
        let amax = times.iter().map(|&t| f2(t).abs()).fold(vmax, f64::max);
        for (i, &t) in times.iter().enumerate() {
            worst_poly = worst_poly.max((v[i] - f(t)).abs() / vmax).max((a[i] - f2(t)).abs() / amax);
        }
    }
    ensure(worst_poly <= 1e-8, || format!("polynomial relative error {worst_poly:.3e}"))?;

    let rate = 100.0;
    let series = ChannelSeries::new((0..300).map(|k| (TAU * k as f64 / rate).sin()).collect(), rate, Unit::Position)
        .map_err(|e| e.to_string())?;
    let times: Vec<f64> = (0..=600).map(|i| 0.1 + 2.79 * i as f64 / 600.0).collect();
    let a = eval_piecewise_quintic(&series, &times, SplineQuery::second_derivative()).map_err(|e| e.to_string())?;
    let peak = TAU * TAU;
    let worst_sin =
        times.iter().zip(&a).map(|(&t, &got)| (got + peak * (TAU * t).sin()).abs() / peak).fold(0.0, f64::max);
    ensure(worst_sin <= 0.01, || format!("sin second derivative relative error {worst_sin:.3e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.1} s"))?;
    Ok(format!("polynomial {worst_poly:.1e}, sin(2πt) {worst_sin:.1e} of amplitude, {secs:.2} s"))
}

fn windowing_oracle() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(3);
    let mut total = 0usize;
    for _ in 0..1000 {
        let len = rng.random_range(0..400);
        let w = rng.random_range(1..80);
        let s = rng.random_range(1..40);
        let d = rng.random_range(1..4);
        let clip = PoseClip {
            clip_id: "c".into(),
            label: 1,
            rate_hz: 50.0,
            channel_names: (0..d).map(|c| format!("j.{c}")).collect(),
            channels: (0..d).map(|c| (0..len).map(|t| (t * 10 + c) as f64).collect()).collect(),
            unit: Unit::Position,
            sample_labels: None,
            subject: None,
        };
        let spec = WindowSpec::new(w, s, 50.0).map_err(|e| e.to_string())?;
        let windows = segment_windows(&clip, &spec);
        let expect = if len >= w { (len - w) / s + 1 } else { 0 };
        ensure(windows.len() == expect, || {
            format!("(L={len}, W={w}, s={s}): {} windows, expected {expect}", windows.len())
        })?;
        for (k, win) in windows.iter().enumerate() {
            for t in 0..w {
                for c in 0..d {
                    let want = clip.channels[c][k * s + t];
                    ensure(win.values[t * d + c].to_bits() == want.to_bits(), || {
                        format!("(L={len}, W={w}, s={s}) window {k} is not the slice at {}", k * s)
                    })?;
                }
            }
        }
        total += windows.len();
    }
    Ok(format!("1000 triples, {total} windows verified"))
}

/// Weighted F1 straight from the definition, one class at a time.
fn brute_force_wf1(t: &[usize], p: &[usize], k: usize) -> f64 {
    let n = t.len() as f64;
    (0..k)
        .map(|c| {
            let tp = t.iter().zip(p).filter(|&(&a, &b)| a == c && b == c).count() as f64;
            let fp = t.iter().zip(p).filter(|&(&a, &b)| a != c && b == c).count() as f64;
            let fn_ = t.iter().zip(p).filter(|&(&a, &b)| a == c && b != c).count() as f64;
            let support = tp + fn_;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if support > 0.0 { tp / support } else { 0.0 };
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            support / n * f1
        })
        .sum()
}

fn wf1_oracle() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let k = rng.random_range(1..=6);
        let n = rng.random_range(1..200);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let got = confusion(&t, &p, k).and_then(|cm| weighted_f1(&cm)).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_force_wf1(&t, &p, k)).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    let hand =
        confusion(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 0], 2).and_then(|cm| weighted_f1(&cm)).map_err(|e| e.to_string())?;
    ensure(hand == 0.6, || format!("hand case gives {hand}"))?;
    Ok(format!("500 cases, max deviation {worst:.1e}, hand case {hand}"))
}

/// Two-sided sign-flip p-value by enumerating every assignment.
fn exact_p(a: &[bool], b: &[bool]) -> f64 {
    let d: Vec<i64> = a.iter().zip(b).filter(|(x, y)| x != y).map(|(&x, _)| if x { 1 } else { -1 }).collect();
    let obs: i64 = d.iter().sum::<i64>().abs();
    let total = 1u64 << d.len();
    let hits = (0..total)
        .filter(|mask| {
            d.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).sum::<i64>().abs() >= obs
        })
        .count();
    hits as f64 / total as f64
}

fn permutation_validity() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(5);
    let n_perm = 9999;
    let mut worst_z = 0.0f64;
    for case in 0..200u64 {
        let n = rng.random_range(1..=10);
        let a: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let exact = exact_p(&a, &b);
        let mc = permutation_test(&a, &b, n_perm, case).map_err(|e| e.to_string())?.p_value;
        // the +1 in the estimator biases it by at most 1/(n_perm+1)
        let sd = (exact * (1.0 - exact) / n_perm as f64).sqrt();
        let err = (mc - exact).abs() - 1.0 / (n_perm + 1) as f64;
        let z = if sd > 0.0 {
            err / sd
        } else if err <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z);
    }
    ensure(worst_z <= 4.0, || format!("exact enumeration disagrees by {worst_z:.2} standard errors"))?;

    let mut rejections = 0usize;
    for trial in 0..500u64 {
        let a: Vec<bool> = (0..200).map(|_| rng.random_bool(0.7)).collect();
        let b: Vec<bool> = (0..200).map(|_| rng.random_bool(0.7)).collect();
        if permutation_test(&a, &b, n_perm, 10_000 + trial).map_err(|e| e.to_string())?.p_value <= 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 500.0;
    ensure((0.03..=0.08).contains(&rate), || format!("null rejection rate {rate:.3}"))?;
    Ok(format!("exact agreement within {worst_z:.2} s.e., null rejection rate {rate:.3}"))
}

fn transplant_contract() -> Outcome {
    let graph = build_tcnn(25, 6, 5, 16, 0.5).map_err(|e| e.to_string())?;
    let src_params = init_params(&graph, &mut SeededRng::seed_from_u64(7)).map_err(|e| e.to_string())?;
    let source =
        Checkpoint::new(graph.clone(), src_params.clone(), CheckpointMeta::default()).map_err(|e| e.to_string())?;
    for n in 0..=CONV_LAYERS {
        let plan = TransferPlan { n_conv: n, ..Default::default() };
        let t = transplant(&source, &graph, &plan, &mut SeededRng::seed_from_u64(11)).map_err(|e| e.to_string())?;
        let fresh = init_params(&graph, &mut SeededRng::seed_from_u64(11)).map_err(|e| e.to_string())?;
        for (key, tensor) in t.params.iter() {
            let copied = (1..=n).any(|l| key.starts_with(&format!("conv{l}.")));
            let reference = if copied { src_params.get(key) } else { fresh.get(key) }.map_err(|e| e.to_string())?;
            ensure(tensor.bit_eq(reference), || {
                format!("N_conv={n}: `{key}` should be {}", if copied { "copied" } else { "fresh" })
            })?;
        }
    }

    let plan = TransferPlan { n_conv: 2, freeze: true, ..Default::default() };
    let start = transplant(&source, &graph, &plan, &mut SeededRng::seed_from_u64(12)).map_err(|e| e.to_string())?;
    ensure(start.frozen.len() == 4, || format!("frozen set {:?}", start.frozen))?;
    let mut params = start.params.clone();
    let mut state = OptimizerState::new(&params);
    let opt = RmsProp::default();
    let mut rng = SeededRng::seed_from_u64(13);
    let windows = ToyDomain { clips_per_class: 2, ..ToyDomain::source() }.generate();
    let wins: Vec<_> =
        windows.iter().flat_map(|c| segment_windows(c, &WindowSpec::new(25, 10, 30.0).unwrap())).collect();
    for _ in 0..100 {
        let idx: Vec<usize> = (0..8).map(|_| rng.random_range(0..wins.len())).collect();
        let x: Tensor<f32> = batch_input(&wins, &idx).map_err(|e| e.to_string())?;
        let labels: Vec<usize> = idx.iter().map(|&i| wins[i].label).collect();
        let (logits, cache) = forward_train(&graph, &params, &x, Some(&mut rng)).map_err(|e| e.to_string())?;
        let (_, dlogits) = softmax_xent(&logits, &labels).map_err(|e| e.to_string())?;
        let grads: ParamSet<f32> = backward(&graph, &params, &cache, &dlogits).map_err(|e| e.to_string())?;
        opt.step(&mut params, &grads, &mut state, &start.frozen).map_err(|e| e.to_string())?;
    }
    for (key, tensor) in params.iter() {
        let before = start.params.get(key).map_err(|e| e.to_string())?;
        if start.frozen.contains(key) {
            ensure(tensor.bit_eq(before), || format!("frozen `{key}` moved"))?;
        } else {
            ensure(!tensor.bit_eq(before), || format!("trainable `{key}` never moved"))?;
        }
    }

    let ds = toy_windows(ToyDomain { clips_per_class: 4, ..ToyDomain::target() }, SignalMode::Pose)?;
    let cfg = TrainConfig { epochs: 2, batch_size: 16, seed: 21, ..Default::default() };
    let data = TargetData { train: &ds.train, val: &ds.val, test: &ds.test };
    let scratch_init = init_params(&graph, &mut SeededRng::seed_from_u64(21)).map_err(|e| e.to_string())?;
    let scratch = posetl::nn::train(&graph, scratch_init, data.train, data.val, &cfg, &BTreeSet::new())
        .map_err(|e| e.to_string())?;
    let plan0 = TransferPlan { n_conv: 0, seed: 21, ..Default::default() };
    let t0 = transplant(&source, &graph, &plan0, &mut SeededRng::seed_from_u64(21)).map_err(|e| e.to_string())?;
    let via_transfer = fine_tune(&graph, t0, data, &plan0, &cfg, &[]).map_err(|e| e.to_string())?;
    ensure(via_transfer.outcome.params.bit_eq(&scratch.params), || "N_conv=0 differs from scratch".into())?;
    Ok("copies, fresh init, 100 frozen steps and N_conv=0 all bit-exact".into())
}

fn toy_windows(domain: ToyDomain, mode: SignalMode) -> Result<posetl::WindowedDataset, String> {
    let cfg = PipelineConfig { target_rate_hz: 50.0, window_len: Some(25), stride: 12, mode, ..Default::default() };
    build_windows_from_clips(&domain.generate(), &domain.classes(), None, &cfg).map_err(|e| e.to_string())
}

fn transfer_effect() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let src_dir = d.join("source");
    ToyDomain::source().write_dataset(&src_dir).map_err(|e| e.to_string())?;
    let common =
        ["--set", "pipeline.target_rate_hz=50", "--set", "pipeline.window_len=25", "--set", "pipeline.stride=12"];
    let manifest = format!("manifest={}", src_dir.join("manifest.json").display());
    let out = d.join("pretrain");
    let mut args = vec![
        "--set",
        &manifest,
        "--set",
        "arch.fc_units=64",
        "--set",
        "train.epochs=5",
        "--set",
        "train.batch_size=50",
    ];
    args.extend(common);
    let out_s = out.display().to_string();
    args.extend(["--seed", "42", "--out", &out_s, "train"]);
    cli(&args)?;
    let source = load_checkpoint(&out.join("checkpoint.bin")).map_err(|e| e.to_string())?;

    let target = toy_windows(ToyDomain::target(), SignalMode::Pose)?;
    let graph = source.graph.clone();
    let lrs = [1e-3, 1e-4, 1e-5];
    let (mut wf1_t, mut wf1_s) = (Vec::new(), Vec::new());
    let (mut correct_t, mut correct_s) = (Vec::new(), Vec::new());
    for run in 0..5u64 {
        let seed = 42 + run;
        let sub = subsample_fraction(&target.train, 10.0, seed).map_err(|e| e.to_string())?;
        let data = TargetData { train: &sub, val: &target.val, test: &target.test };
        let cfg = TrainConfig { epochs: 15, batch_size: 20, seed, ..Default::default() };
        for (n, wf1, correct) in [(1, &mut wf1_t, &mut correct_t), (0, &mut wf1_s, &mut correct_s)] {
            let plan = TransferPlan { n_conv: n, target_fraction: 10.0, seed, ..Default::default() };
            let init =
                transplant(&source, &graph, &plan, &mut SeededRng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
            let report = fine_tune(&graph, init, data, &plan, &cfg, &lrs).map_err(|e| e.to_string())?;
            wf1.push(report.test.wf1);
            correct.extend(report.test_correct);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mt, ms) = (mean(&wf1_t), mean(&wf1_s));
    let test = permutation_test(&correct_t, &correct_s, 9999, 42).map_err(|e| e.to_string())?;
    let acc = |c: &[bool]| c.iter().filter(|&&x| x).count() as f64 / c.len() as f64;
    let acc_diff = acc(&correct_t) - acc(&correct_s);
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "wF1 transfer {:.2}% vs scratch {:.2}%, observed diff {:+.4}, p = {:.4}, {secs:.0} s",
        100.0 * mt,
        100.0 * ms,
        test.observed_diff,
        test.p_value
    );
    ensure(mt >= ms, || format!("transfer below scratch: {summary}"))?;
    ensure(test.observed_diff.signum() == acc_diff.signum() && (test.observed_diff - acc_diff).abs() < 1e-12, || {
        format!("permutation test sign wrong (accuracy diff {acc_diff:+.4}): {summary}")
    })?;
    ensure(secs < 900.0, || format!("too slow: {summary}"))?;
    Ok(summary)
}

fn read_dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    ToyDomain { clips_per_class: 6, ..ToyDomain::source() }.write_dataset(&d.join("src")).map_err(|e| e.to_string())?;
    ToyDomain { clips_per_class: 6, ..ToyDomain::target() }.write_dataset(&d.join("tgt")).map_err(|e| e.to_string())?;
    let common = [
        "pipeline.target_rate_hz=50",
        "pipeline.window_len=25",
        "pipeline.stride=12",
        "arch.fc_units=16",
        "train.epochs=2",
        "train.batch_size=16",
        "lrs=[0.001,0.0001]",
    ];
    let mut compared = 0;
    for rep in 0..2 {
        let mut args: Vec<String> = common.iter().flat_map(|s| ["--set".to_string(), s.to_string()]).collect();
        let mut train = args.clone();
        train.extend([
            "--set".into(),
            format!("manifest={}", d.join("src/manifest.json").display()),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            d.join(format!("train{rep}")).display().to_string(),
            "train".into(),
        ]);
        cli(&train.iter().map(String::as_str).collect::<Vec<_>>())?;
        args.extend([
            "--set".into(),
            format!("manifest={}", d.join("tgt/manifest.json").display()),
            "--set".into(),
            "pipeline.mode=pose".into(),
            "--set".into(),
            "transfer.runs=2".into(),
            "--set".into(),
            "transfer.n_conv_sweep=[1,2]".into(),
            "--set".into(),
            "transfer.fractions=[50]".into(),
            "--set".into(),
            "transfer.n_perm=199".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            d.join(format!("transfer{rep}")).display().to_string(),
            "transfer".into(),
            "--source".into(),
            d.join(format!("train{rep}/checkpoint.bin")).display().to_string(),
        ]);
        cli(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    }
    for stage in ["train", "transfer"] {
        let a = read_dir_bytes(&d.join(format!("{stage}0")))?;
        let b = read_dir_bytes(&d.join(format!("{stage}1")))?;
        ensure(a.len() == b.len() && !a.is_empty(), || format!("{stage}: file sets differ"))?;
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            ensure(x == y, || format!("{stage}/{name} differs between runs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical across reruns"))
}

fn random_f32<R: Rng>(rng: &mut R) -> f32 {
    loop {
        let v = f32::from_bits(rng.random());
        if v.is_finite() {
            return v;
        }
    }
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = SeededRng::seed_from_u64(9);
    for i in 0..100 {
        let (w, ch, k, fc) =
            (rng.random_range(17..40), rng.random_range(1..8), rng.random_range(2..7), rng.random_range(1..24));
        let graph = build_tcnn(w, ch, k, fc, rng.random_range(0.0..0.9)).map_err(|e| e.to_string())?;
        let mut params = init_params(&graph, &mut rng).map_err(|e| e.to_string())?;
        for (_, t) in params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = random_f32(&mut rng));
        }
        let meta = CheckpointMeta {
            source: format!("fixture-{i}"),
            seed: rng.random(),
            epochs: rng.random_range(0..100),
            lr: rng.random(),
            stats: (i % 2 == 0).then(|| "norm_stats.json".into()),
        };
        let path = dir.path().join(format!("ckpt{i}.bin"));
        save_checkpoint(&graph, &params, &meta, &path).map_err(|e| e.to_string())?;
        let back = load_checkpoint(&path).map_err(|e| e.to_string())?;
        ensure(back.graph == graph && back.meta == meta && back.params.bit_eq(&params), || {
            format!("checkpoint {i} changed")
        })?;

        let rate = [25.0, 30.0, 50.0, 100.0, 120.0][i % 5];
        let len = rng.random_range(2..200);
        let d = rng.random_range(1..6);
        let clip = PoseClip {
            clip_id: format!("clip{i}"),
            label: 0,
            rate_hz: rate,
            channel_names: (0..d).map(|c| format!("joint{c}.x")).collect(),
            channels: (0..d)
                .map(|_| (0..len).map(|_| rng.random::<f64>() * 10f64.powi(rng.random_range(-30..30)) - 0.5).collect())
                .collect(),
            unit: Unit::Position,
            sample_labels: (i % 3 == 0).then(|| (0..len).map(|_| rng.random_range(0..4)).collect()),
            subject: None,
        };
        let path = dir.path().join(format!("clip{i}.csv"));
        save_clip(&clip, &path).map_err(|e| e.to_string())?;
        let file = fs::File::open(&path).map_err(|e| e.to_string())?;
        let (names, channels, labels) = read_clip_csv(file, rate).map_err(|e| e.to_string())?;
        let same = names == clip.channel_names
            && labels == clip.sample_labels
            && channels.iter().flatten().zip(clip.channels.iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits())
            && channels.iter().map(Vec::len).eq(clip.channels.iter().map(Vec::len));
        ensure(same, || format!("clip {i} changed"))?;
    }
    Ok("100 checkpoints and 100 clip CSVs bit-lossless".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("spline correctness", spline_correctness),
        ("windowing oracle", windowing_oracle),
        ("wF1 oracle equivalence", wf1_oracle),
        ("permutation-test validity", permutation_validity),
        ("transplant contract", transplant_contract),
        ("desk-scale transfer effect", transfer_effect),
        ("determinism", determinism),
        ("round-trips", round_trips),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
