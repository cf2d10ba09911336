//! Acceptance gate: every check prints one PASS/FAIL line and the test fails
//! if any check fails. Run with `--nocapture` to see the report.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radar_motion::clean::clean_detect;
use radar_motion::dtw::mddtw_distance;
use radar_motion::eval::{
    loocv_traced, render_reports, EvalConfig, EvalReport, FoldRecord, Method, MethodReport,
};
use radar_motion::feature::{extract_feature, rms_envelope};
use radar_motion::hmm::{baum_welch, init_model_with_floor, HmmModel, TrainConfig};
use radar_motion::sim::{default_template, generate_dataset, SimConfig};
use radar_motion::{FeatureSequence, Frame, FrameSet, StateLabel, FRAME_LEN};

type Check = std::result::Result<String, String>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radar-motion"))
}

fn run_ok(cmd: &mut Command) -> std::result::Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Simulates a 40-set dataset through the CLI and benchmarks it, returning
/// accuracy per method and the wall time of both steps.
fn cli_benchmark(
    dir: &Path,
    noise: &[&str],
) -> std::result::Result<(Vec<(Method, f64)>, Duration), String> {
    let data = dir.join("data");
    let json = dir.join("report.json");
    let start = Instant::now();
    run_ok(
        bin()
            .args(["simulate", "--per-state", "20", "--seed", "7", "--out"])
            .arg(&data)
            .args(noise),
    )?;
    run_ok(
        bin()
            .arg("benchmark")
            .arg("--data")
            .arg(&data)
            .arg("--json")
            .arg(&json),
    )?;
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(&json).map_err(|e| e.to_string())?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut acc = Vec::new();
    for m in Method::ALL {
        let r = report.method(m).ok_or(format!("{m} missing from report"))?;
        if r.folds.len() != 40 {
            return Err(format!("{m}: {} folds", r.folds.len()));
        }
        acc.push((m, r.accuracy_percent));
    }
    Ok((acc, elapsed))
}

fn describe(acc: &[(Method, f64)]) -> String {
    acc.iter()
        .map(|(m, a)| format!("{}={a:.1}", m.flag()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn noiseless_end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (acc, elapsed) = cli_benchmark(tmp.path(), &["--noise", "0"])?;
    let detail = format!("{} in {:.1}s", describe(&acc), elapsed.as_secs_f64());
    if acc.iter().all(|&(_, a)| a == 100.0) && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn noisy_end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (acc, elapsed) = cli_benchmark(tmp.path(), &["--snr-db", "20"])?;
    let detail = format!(
        "{} in {:.1}s (sigma 3, amp 30)",
        describe(&acc),
        elapsed.as_secs_f64()
    );
    let proposed = acc
        .iter()
        .find(|(m, _)| *m == Method::ProposedGmmHmm)
        .unwrap()
        .1;
    if proposed >= 95.0 && elapsed < Duration::from_secs(300) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn brute_envelope(x: &[f64], w: usize) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let win = &x[k..(k + w).min(x.len())];
            (win.iter().map(|v| v * v).sum::<f64>() / win.len() as f64).sqrt()
        })
        .collect()
}

fn envelope_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE1);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=4096);
        let window = if case % 4 == 0 {
            400
        } else {
            rng.random_range(1..=700)
        };
        let scale = 10f64.powi(rng.random_range(-3..=3));
        let x: Vec<f64> = (0..n)
            .map(|i| {
                // Occasional level jumps stress cancellation-prone schemes.
                let level = if (i / 300) % 2 == 0 { 1.0 } else { 1e3 };
                scale * level * rng.random_range(-1.0..1.0)
            })
            .collect();
        let got = rms_envelope(&x, window).map_err(|e| e.to_string())?;
        let want = brute_envelope(&x, window);
        if got.len() != n {
            return Err(format!("case {case}: length {} != {n}", got.len()));
        }
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            let rel = if *w == 0.0 {
                g.abs()
            } else {
                (g - w).abs() / w
            };
            if !(rel <= 1e-12) {
                return Err(format!(
                    "case {case} (N={n}, window={window}) index {k}: {g} vs {w}"
                ));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!("100 signals, worst relative error {worst:.2e}"))
}

fn random_frame_set(t: usize, rng: &mut ChaCha8Rng) -> FrameSet {
    let frames = (0..t)
        .map(|_| {
            let s: Vec<f64> = (0..FRAME_LEN)
                .map(|_| rng.random_range(0.0..100.0))
                .collect();
            Frame::new(&s).unwrap()
        })
        .collect();
    FrameSet::new("t", 200.0, Some(StateLabel::Rest), frames).unwrap()
}

fn length_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1E);
    for t in (4..=64).chain([400]) {
        let len = extract_feature(&random_frame_set(t, &mut rng))
            .map_err(|e| e.to_string())?
            .len();
        if len != t / 4 {
            return Err(format!("T={t}: length {len}"));
        }
    }
    Ok("T=4..=64 and 400 give floor(T/4); T=400 gives 100".into())
}

fn random_seq(len: usize, dim: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
    let v = (0..len * dim)
        .map(|_| rng.random_range(-5.0..5.0))
        .collect();
    FeatureSequence::from_flat(dim, v).unwrap()
}

/// Minimum over every monotone path of the left-to-right sum of its costs.
fn brute_dtw(a: &FeatureSequence, b: &FeatureSequence) -> f64 {
    fn cost(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
    fn walk(
        a: &FeatureSequence,
        b: &FeatureSequence,
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
    ) {
        let acc = acc + cost(a.step(i), b.step(j));
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    // The first cost is added to an exact zero, matching a plain left fold.
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

fn dtw_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD7);
    for case in 0..500 {
        let dim = rng.random_range(1..=2);
        let a = random_seq(rng.random_range(1..=6), dim, &mut rng);
        let b = random_seq(rng.random_range(1..=6), dim, &mut rng);
        let ab = mddtw_distance(&a, &b).map_err(|e| e.to_string())?;
        let ba = mddtw_distance(&b, &a).map_err(|e| e.to_string())?;
        let want = brute_dtw(&a, &b);
        if ab != want {
            return Err(format!("case {case}: {ab} vs brute force {want}"));
        }
        if ab != ba {
            return Err(format!("case {case}: asymmetric {ab} vs {ba}"));
        }
        for s in [&a, &b] {
            let d = mddtw_distance(s, s).map_err(|e| e.to_string())?;
            if d != 0.0 {
                return Err(format!("case {case}: self distance {d}"));
            }
        }
    }
    Ok("500 pairs equal exhaustive path search; symmetric; zero self distance".into())
}

fn random_model(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> HmmModel {
    let mut start = vec![0.0; n];
    start[0] = 1.0;
    let transitions = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if i + 1 < n {
                let stay = rng.random_range(0.05..0.95);
                row[i] = stay;
                row[i + 1] = 1.0 - stay;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    let means = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let vars = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.1..3.0)).collect())
        .collect();
    HmmModel::new(start, transitions, means, vars).unwrap()
}

fn log_gauss(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v))
        .sum()
}

/// log p(seq) by summing over every state path with nonzero probability.
fn brute_forward(model: &HmmModel, seq: &FeatureSequence) -> f64 {
    let n = model.n_states();
    let mut terms = Vec::new();
    let mut stack: Vec<(usize, usize, f64)> = (0..n)
        .filter(|&i| model.start()[i] > 0.0)
        .map(|i| {
            let lp = model.start()[i].ln()
                + log_gauss(seq.step(0), &model.means()[i], &model.variances()[i]);
            (0, i, lp)
        })
        .collect();
    while let Some((t, i, lp)) = stack.pop() {
        if t + 1 == seq.len() {
            terms.push(lp);
            continue;
        }
        for j in 0..n {
            let a = model.transitions()[i][j];
            if a > 0.0 {
                let e = log_gauss(seq.step(t + 1), &model.means()[j], &model.variances()[j]);
                stack.push((t + 1, j, lp + a.ln() + e));
            }
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn forward_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF0);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=5);
        let dim = rng.random_range(1..=2);
        let model = random_model(n, dim, &mut rng);
        let seq = random_seq(rng.random_range(1..=8), dim, &mut rng);
        let got = model.log_likelihood(&seq).map_err(|e| e.to_string())?;
        let want = brute_forward(&model, &seq);
        let err = (got - want).abs();
        if !(err <= 1e-9) {
            return Err(format!("case {case}: {got} vs brute force {want}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("200 instances, worst absolute error {worst:.2e}"))
}

fn em_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xEE);
    let mut iterations = 0;
    for run in 0..50 {
        let n = rng.random_range(1..=5);
        let dim = rng.random_range(1..=2);
        let seqs: Vec<FeatureSequence> = (0..rng.random_range(1..=5))
            .map(|_| {
                let len = rng.random_range(n.max(3)..=30);
                let mut s = random_seq(len, dim, &mut rng);
                // A level shift halfway gives the states something to find.
                let shift = rng.random_range(-3.0..3.0);
                let flat: Vec<f64> = s
                    .as_flat()
                    .iter()
                    .enumerate()
                    .map(|(k, v)| if k / dim >= len / 2 { v + shift } else { *v })
                    .collect();
                s = FeatureSequence::from_flat(dim, flat).unwrap();
                s
            })
            .collect();
        let cfg = TrainConfig {
            n_states: n,
            max_iters: 40,
            ll_tol: 1e-12,
            ..TrainConfig::default()
        };
        let m0 = init_model_with_floor(n, &seqs, cfg.variance_floor).map_err(|e| e.to_string())?;
        let (model, trace) = baum_welch(&m0, &seqs, &cfg).map_err(|e| e.to_string())?;
        iterations += trace.len() - 1;
        for w in trace.windows(2) {
            if w[1] < w[0] - 1e-8 {
                return Err(format!(
                    "run {run}: log-likelihood fell from {} to {}",
                    w[0], w[1]
                ));
            }
        }
        for (i, (r0, r1)) in m0.transitions().iter().zip(model.transitions()).enumerate() {
            // Forbidden moves stay exactly zero; an allowed move may still
            // converge to probability zero.
            for (j, (a0, a1)) in r0.iter().zip(r1).enumerate() {
                if *a0 == 0.0 && *a1 != 0.0 {
                    return Err(format!(
                        "run {run}: forbidden transition ({i},{j}) became {a1}"
                    ));
                }
            }
            let sum: f64 = r1.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("run {run}: row {i} sums to {sum}"));
            }
        }
        if model.start() != m0.start() {
            return Err(format!("run {run}: start distribution changed"));
        }
    }
    Ok(format!(
        "50 runs, {iterations} re-estimations, structure preserved"
    ))
}

fn clean_recovery() -> Check {
    let tpl = default_template(31).map_err(|e| e.to_string())?;
    for k in 0..=225 {
        for amp in [-3.0, 0.5, 2.5] {
            let mut frame = Frame::zeros();
            for (m, t) in tpl.taps().iter().enumerate() {
                frame.samples_mut()[k + m] = amp * t;
            }
            let got = clean_detect(&frame, &tpl).map_err(|e| e.to_string())?;
            if got != (k, amp) {
                return Err(format!("lag {k}, amplitude {amp}: got {got:?}"));
            }
        }
    }
    Ok("lags 0..=225 x amplitudes {-3, 0.5, 2.5} recovered exactly".into())
}

fn loocv_hygiene() -> Check {
    let cfg = SimConfig::with_seed(17).with_duration(0.5);
    let ds = generate_dataset(&cfg, 20, -10..=10, "H").map_err(|e| e.to_string())?;
    let mut folds = 0;
    for method in Method::ALL {
        let mut problems = Vec::new();
        let report = loocv_traced(&ds, method, &EvalConfig::default(), |trace| {
            folds += 1;
            let leaked = trace
                .model_ids
                .iter()
                .chain(&trace.normalization_ids)
                .any(|id| *id == trace.test_id);
            if leaked || trace.model_ids.len() != 39 {
                problems.push(trace.test_id.clone());
            }
            if method != Method::ProposedGmmHmm && trace.normalization_ids.len() != 39 {
                problems.push(trace.test_id.clone());
            }
        })
        .map_err(|e| e.to_string())?;
        if report.folds.len() != 40 || !problems.is_empty() {
            return Err(format!("{method}: bad folds {problems:?}"));
        }
    }
    Ok(format!(
        "{folds} folds over 3 methods, held-out id never used for fitting"
    ))
}

fn table_fixture() -> Check {
    let published = [
        (Method::CleanConventionalDtw, [82.5, 72.5, 82.5, 57.5]),
        (Method::CleanShortTemplateDtw, [85.0, 65.0, 80.0, 70.0]),
        (Method::ProposedGmmHmm, [100.0, 90.0, 90.0, 90.0]),
    ];
    let reports: Vec<EvalReport> = (0..4)
        .map(|p| EvalReport {
            participant: format!("P{}", p + 1),
            methods: published
                .iter()
                .map(|(m, acc)| {
                    let correct = (acc[p] * 40.0 / 100.0) as usize;
                    let folds = (0..40)
                        .map(|i| FoldRecord {
                            id: format!("f{i}"),
                            truth: StateLabel::Move,
                            pred: if i < correct {
                                StateLabel::Move
                            } else {
                                StateLabel::Rest
                            },
                        })
                        .collect();
                    MethodReport::from_folds(m.name(), folds)
                })
                .collect(),
        })
        .collect();
    let text = render_reports(&reports);
    let expected = "\
Classification accuracy (%)
Method                               P1      P2      P3      P4
Conventional CLEAN + MD-DTW        82.5    72.5    82.5    57.5
Short-template CLEAN + MD-DTW      85.0    65.0    80.0    70.0
RMS-envelope features + GMM-HMM   100.0    90.0    90.0    90.0
";
    if text == expected {
        Ok("published accuracies render from 40-fold reports (formatting fixture only)".into())
    } else {
        Err(format!("rendered:\n{text}"))
    }
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("published accuracy table (format fixture)", table_fixture),
        (
            "noiseless end-to-end: all methods 100.0, < 60 s",
            noiseless_end_to_end,
        ),
        (
            "noisy end-to-end (20 dB): proposed >= 95.0, < 5 min",
            noisy_end_to_end,
        ),
        (
            "envelope matches brute force within 1e-12 relative",
            envelope_oracle,
        ),
        ("feature length is floor(T/4)", length_law),
        ("MD-DTW equals exhaustive path search", dtw_oracle),
        (
            "HMM forward matches path enumeration within 1e-9",
            forward_oracle,
        ),
        (
            "Baum-Welch log-likelihood is non-decreasing",
            em_monotonicity,
        ),
        ("CLEAN recovers planted pulses exactly", clean_recovery),
        ("LOOCV never trains on the held-out set", loocv_hygiene),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
