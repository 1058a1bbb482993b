//! End-to-end acceptance checks. Runs as a plain binary so every check
//! prints its verdict; exits nonzero if any fails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokencast::bench::{run_bench, BenchDataset, BenchOptions};
use tokencast::config::RunConfig;
use tokencast::race::{race, Clock};
use tokencast::stream::{
    make_reference_predictor, predict_stream, with_simulated_latency, NullSink, Role,
};
use tokencast::synthetic::NoisyFamily;
use tokencast_core::codec::{detokenize, quantize, tokenize};
use tokencast_core::dsp::{design_butterworth, dft, filtered_snr, filtfilt, snr};
use tokencast_core::metrics::{aggregate_relative, mae, mase, mse, wql, DEFAULT_QUANTILE_LEVELS};
use tokencast_core::race::{concatenate, FrameSpan};
use tokencast_core::{
    encode, encode_unfiltered, Branch, EvalInput, FilterSpec, ForecastRequest, QuantizationConfig,
    RaceConfig, ReferenceKind, RoundingMode,
};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Verdict {
    let took = start.elapsed();
    check(
        took < limit,
        format!(
            "{detail}; {:.2}s of {}s budget",
            took.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn filter_correctness() -> Verdict {
    let start = Instant::now();
    let fs = 100.0;
    let mut worst_dc: f64 = 0.0;
    let mut worst_cut: f64 = 0.0;
    for order in [1, 3, 5] {
        for frac in [0.1, 0.25, 0.5] {
            let spec = FilterSpec::new(order, frac * fs / 2.0, fs).unwrap();
            let c = design_butterworth(&spec).map_err(|e| e.to_string())?;
            // evaluate the exported polynomials directly
            let h = |w: f64| {
                let z = Complex64::from_polar(1.0, -w);
                let poly = |p: &[f64]| {
                    p.iter()
                        .rev()
                        .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k)
                };
                (poly(&c.b) / poly(&c.a)).norm()
            };
            worst_dc = worst_dc.max((h(0.0) - 1.0).abs());
            worst_cut = worst_cut.max((h(PI * frac) - FRAC_1_SQRT_2).abs());
        }
    }
    let mut lags = Vec::new();
    let spec = FilterSpec::new(5, 25.0, fs).unwrap();
    let c = design_butterworth(&spec).map_err(|e| e.to_string())?;
    for f in [1.0, 2.5, 5.0, 8.0] {
        let x: Vec<f64> = (0..1000)
            .map(|i| (2.0 * PI * f * i as f64 / fs + 0.3).sin())
            .collect();
        let y = filtfilt(&c, &x).map_err(|e| e.to_string())?;
        let xcorr = |lag: i64| -> f64 {
            (0..x.len() as i64)
                .filter_map(|i| {
                    let j = i + lag;
                    (0..x.len() as i64)
                        .contains(&j)
                        .then(|| y[j as usize] * x[i as usize])
                })
                .sum()
        };
        let best = (-20..=20)
            .max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b)))
            .unwrap();
        lags.push(best);
    }
    let ok = worst_dc <= 1e-9 && worst_cut <= 1e-6 && lags.iter().all(|&l| l == 0);
    check(
        ok,
        format!(
            "|H(0)|-1 max {worst_dc:.1e}, |H(wc)|-1/sqrt2 max {worst_cut:.1e}, xcorr lags {lags:?}"
        ),
    )
    .and_then(|d| within_time(start, Duration::from_secs(5), d))
}

fn snr_improvement() -> Verdict {
    let start = Instant::now();
    let spec = FilterSpec::new(5, 10.0, 100.0).unwrap();
    let c = design_butterworth(&spec).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut improved = 0;
    let mut least_gain = f64::INFINITY;
    for seed in 0..50 {
        let fam = NoisyFamily {
            signal_tones: rng.random_range(1..=4),
            noise_tones: rng.random_range(4..=32),
            noise_ratio: rng.random_range(0.1..2.0),
            ..NoisyFamily::default()
        };
        let n = rng.random_range(256..=2048);
        let s = fam.generate(n, seed);
        let (sx, ex) = (dft(&s.clean, 100.0).unwrap(), dft(&s.noise, 100.0).unwrap());
        let before = snr(&sx, &ex, None).map_err(|e| e.to_string())?.value();
        let after = filtered_snr(&sx, &ex, &c)
            .map_err(|e| e.to_string())?
            .value();
        if after > before {
            improved += 1;
        }
        least_gain = least_gain.min(after / before);
    }
    check(
        improved == 50,
        format!("{improved}/50 improved, smallest gain x{least_gain:.1}"),
    )
    .and_then(|d| within_time(start, Duration::from_secs(10), d))
}

fn quantization_bound() -> Verdict {
    let start = Instant::now();
    let q = 10_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut y: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    y[0] = 0.0;
    y[1] = 1.0;
    let floor = QuantizationConfig::new(q, RoundingMode::Floor).unwrap();
    let nearest = QuantizationConfig::new(q, RoundingMode::Nearest).unwrap();
    let qf = quantize(&y, &floor).map_err(|e| e.to_string())?;
    let qn = quantize(&y, &nearest).map_err(|e| e.to_string())?;
    let step = 1.0 / q as f64;
    let floor_bad = y
        .iter()
        .zip(&qf)
        .filter(|(v, g)| !(*g - *v > -step && *g - *v <= 0.0))
        .count();
    let near_bad = y
        .iter()
        .zip(&qn)
        .filter(|(v, g)| (*g - *v).abs() > step / 2.0)
        .count();
    check(
        floor_bad == 0 && near_bad == 0,
        format!("floor violations {floor_bad}, nearest violations {near_bad} of 100000"),
    )
    .and_then(|d| within_time(start, Duration::from_secs(2), d))
}

fn codec_bijection() -> Verdict {
    let start = Instant::now();
    let cfg = QuantizationConfig::default();
    let tokens: Vec<u32> = (0..=cfg.quant_factor).collect();
    let grid = detokenize(&tokens, &cfg).map_err(|e| e.to_string())?;
    let back = tokenize(&grid, &cfg).map_err(|e| e.to_string())?;
    let bijective = back == tokens;
    let grid_again = detokenize(&back, &cfg).map_err(|e| e.to_string())?;
    let spec = FilterSpec::new(5, 10.0, 100.0).unwrap();
    let coeffs = design_butterworth(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(20..400);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let x: Vec<f64> = (0..n)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let filtered = filtfilt(&coeffs, &x).unwrap();
        for (target, seq) in [
            (&x, encode_unfiltered(&x, &cfg).unwrap()),
            (&filtered, encode(&x, &spec, &cfg).unwrap()),
        ] {
            let bound = seq.norm.range() / cfg.quant_factor as f64;
            let err = seq
                .decode()
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err / bound);
        }
    }
    check(
        bijective && grid_again == grid && worst <= 1.0,
        format!("10001-token round trip {bijective}, worst decode error {worst:.3} x range/Q"),
    )
    .and_then(|d| within_time(start, Duration::from_secs(5), d))
}

fn race_request(seed: u64, horizon: usize) -> ForecastRequest {
    let series = NoisyFamily::default().series(512, seed);
    let ctx = encode(
        &series.values,
        &FilterSpec::new(5, 10.0, 100.0).unwrap(),
        &QuantizationConfig::default(),
    )
    .unwrap();
    ForecastRequest::new(ctx, horizon, 10, seed)
}

fn race_latency_envelope() -> Verdict {
    let start = Instant::now();
    let ms = Duration::from_millis;
    let main = with_simulated_latency(
        make_reference_predictor(
            ReferenceKind::Ar {
                order: 8,
                innovations: true,
            },
            "main",
            Role::Main,
        )
        .unwrap(),
        ms(20),
        Duration::ZERO,
    );
    let draft = with_simulated_latency(
        make_reference_predictor(
            ReferenceKind::Ar {
                order: 3,
                innovations: true,
            },
            "draft",
            Role::Draft,
        )
        .unwrap(),
        ms(2),
        Duration::ZERO,
    );
    let cfg = RaceConfig {
        gamma: 2.0,
        ..RaceConfig::default()
    };
    let (mut inside, mut fast, mut speedups) = (0, 0, Vec::new());
    for trial in 0..20 {
        let out =
            race(&main, &draft, &race_request(trial, 100), &cfg).map_err(|e| e.to_string())?;
        let bound = match out.t_draft {
            Some(td) => (td + out.t_tolerance).min(out.t_main),
            None => out.t_main,
        };
        if out.t_total <= bound + (0.1 * bound).max(0.05) {
            inside += 1;
        }
        if out.speedup() >= 1.9 {
            fast += 1;
        }
        speedups.push(out.speedup());
    }
    let lo = speedups.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = speedups.iter().copied().fold(0.0, f64::max);
    check(
        inside == 20 && fast >= 18,
        format!(
            "{inside}/20 inside envelope, {fast}/20 with speedup >= 1.9 (range {lo:.2}..{hi:.2})"
        ),
    )
    .and_then(|d| within_time(start, Duration::from_secs(180), d))
}

fn race_fallback() -> Verdict {
    let start = Instant::now();
    let ms = Duration::from_millis;
    let main = with_simulated_latency(
        make_reference_predictor(
            ReferenceKind::Ar {
                order: 8,
                innovations: true,
            },
            "main",
            Role::Main,
        )
        .unwrap(),
        ms(5),
        Duration::ZERO,
    );
    let draft = with_simulated_latency(
        make_reference_predictor(
            ReferenceKind::Ar {
                order: 3,
                innovations: true,
            },
            "draft",
            Role::Draft,
        )
        .unwrap(),
        ms(1),
        Duration::ZERO,
    );
    let cfg = RaceConfig {
        gamma: 0.0,
        ..RaceConfig::default()
    };
    let mut identical = 0;
    for trial in 0..20 {
        let req = race_request(100 + trial, 100);
        let out = race(&main, &draft, &req, &cfg).map_err(|e| e.to_string())?;
        let solo = predict_stream(&main, &req, &NullSink).map_err(|e| e.to_string())?;
        let same_values = out
            .forecast
            .decode(&req.context)
            .iter()
            .flatten()
            .zip(solo.decode(&req.context).iter().flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if out.branch == Branch::MainOnly && out.forecast.frames == solo.frames && same_values {
            identical += 1;
        }
    }
    check(
        identical == 20,
        format!("{identical}/20 bit-identical to the solo main run"),
    )
    .and_then(|d| within_time(start, Duration::from_secs(120), d))
}

fn ar2_path(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (a1, a2) = (0.6, -0.3);
    let mut y = vec![0.0, 0.0];
    while y.len() < n + 100 {
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        let v = a1 * y[y.len() - 1] + a2 * y[y.len() - 2] + e;
        y.push(v);
    }
    y.split_off(100)
}

fn concatenation_dominance() -> Verdict {
    let start = Instant::now();
    let horizon = 40;
    let cfg = QuantizationConfig::default();
    let q = cfg.quant_factor as i64;
    let mut violations = 0;
    let mut cases = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let series = ar2_path(&mut rng, 200 + horizon);
        let seq = encode_unfiltered(&series, &cfg).unwrap();
        let truth = &seq.tokens[200..];
        let mut draft = Vec::new();
        let mut main = Vec::new();
        for &t in truth {
            let err = rng.random_range(1..=800i64) * if rng.random::<bool>() { 1 } else { -1 };
            let shrink = rng.random_range(0.0..0.9);
            let d = (t as i64 + err).clamp(0, q);
            // same direction, smaller magnitude, so clamping keeps it closer
            let m = (t as i64 + (err as f64 * shrink) as i64).clamp(0, q);
            draft.push(vec![d as u32]);
            main.push(vec![m as u32]);
        }
        let times: Vec<f64> = (1..=horizon).map(|i| i as f64).collect();
        let decoded_err = |frames: &[Vec<u32>]| -> f64 {
            let tokens: Vec<u32> = frames.iter().map(|f| f[0]).collect();
            let truth_values = seq.decode_tokens(truth);
            seq.decode_tokens(&tokens)
                .iter()
                .zip(&truth_values)
                .map(|(a, b)| (a - b).abs())
                .sum()
        };
        let delta_draft = decoded_err(&draft);
        for k in [1, horizon / 4, horizon / 2, 3 * horizon / 4, horizon - 1] {
            let joined = concatenate(
                FrameSpan::new(0, &main[..k], &times[..k]),
                FrameSpan::new(k, &draft[k..], &times[k..]),
                horizon,
            )
            .map_err(|e| e.to_string())?;
            cases += 1;
            if decoded_err(&joined.result.frames) > delta_draft {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("{violations} violations in {cases} (seed, k) cases"),
    )
    .and_then(|d| within_time(start, Duration::from_secs(60), d))
}

// independent recomputations for the metrics check

fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn oracle_metrics(inp: &EvalInput, levels: &[f64]) -> [f64; 4] {
    let h = inp.ground_truth.len();
    let column = |t: usize| -> Vec<f64> { inp.forecast_samples.iter().map(|p| p[t]).collect() };
    let median: Vec<f64> = (0..h).map(|t| oracle_quantile(&column(t), 0.5)).collect();
    let denom: f64 = inp.ground_truth.iter().map(|y| y.abs()).sum();
    let mut wql_sum = 0.0;
    for &q in levels {
        let mut loss = 0.0;
        for t in 0..h {
            let pred = oracle_quantile(&column(t), q);
            let y = inp.ground_truth[t];
            loss += if y >= pred {
                2.0 * q * (y - pred)
            } else {
                2.0 * (1.0 - q) * (pred - y)
            };
        }
        wql_sum += loss / denom;
    }
    let m = inp.season_length;
    let ctx = &inp.in_sample_context;
    let scale: f64 = (m..ctx.len())
        .map(|i| (ctx[i] - ctx[i - m]).abs())
        .sum::<f64>()
        / (ctx.len() - m) as f64;
    let abs: f64 = (0..h)
        .map(|t| (inp.ground_truth[t] - median[t]).abs())
        .sum::<f64>()
        / h as f64;
    let sq: f64 = (0..h)
        .map(|t| (inp.ground_truth[t] - median[t]).powi(2))
        .sum::<f64>()
        / h as f64;
    [wql_sum / levels.len() as f64, abs / scale, abs, sq]
}

fn metrics_oracle() -> Verdict {
    let start = Instant::now();
    let levels = DEFAULT_QUANTILE_LEVELS;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = rng.random_range(1..8);
        let s = rng.random_range(1..12);
        let m = rng.random_range(1..4);
        let c = rng.random_range(m + 1..m + 20);
        let mut r = || rng.random_range(-5.0..5.0);
        let inp = EvalInput {
            ground_truth: (0..h).map(|_| r()).collect(),
            forecast_samples: (0..s).map(|_| (0..h).map(|_| r()).collect()).collect(),
            in_sample_context: (0..c).map(|_| r()).collect(),
            season_length: m,
        };
        let want = oracle_metrics(&inp, &levels);
        let got = [
            wql(&inp, &levels).map_err(|e| e.to_string())?,
            mase(&inp).map_err(|e| e.to_string())?,
            mae(&inp).map_err(|e| e.to_string())?,
            mse(&inp).map_err(|e| e.to_string())?,
        ];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    let truth = vec![1.0, -2.0, 3.5, 0.25];
    let perfect = EvalInput {
        ground_truth: truth.clone(),
        forecast_samples: vec![truth.clone(); 5],
        in_sample_context: vec![0.0, 1.0, 0.0, 1.0],
        season_length: 1,
    };
    let perfect_wql = wql(&perfect, &levels).map_err(|e| e.to_string())?;
    // context steps by exactly 1, forecast off by exactly 1
    let unit = EvalInput {
        ground_truth: truth.clone(),
        forecast_samples: vec![truth.iter().map(|y| y + 1.0).collect()],
        in_sample_context: vec![0.0, 1.0, 2.0, 1.0, 0.0],
        season_length: 1,
    };
    let unit_mase = mase(&unit).map_err(|e| e.to_string())?;
    let agg =
        aggregate_relative(&[(0.8, 1.0), (0.9, 1.0), (0.6, 1.0)]).map_err(|e| e.to_string())?;
    let ok = worst <= 1e-10
        && perfect_wql == 0.0
        && (unit_mase - 1.0).abs() < 1e-12
        && (agg - 0.7560).abs() <= 1e-4;
    check(
        ok,
        format!("max oracle gap {worst:.1e}, perfect WQL {perfect_wql}, unit MASE {unit_mase}, aggregate {agg:.4}"),
    )
    .and_then(|d| within_time(start, Duration::from_secs(10), d))
}

fn ablation_direction() -> Verdict {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.dataset.context_length = 512;
    cfg.dataset.horizon = 64;
    let family = NoisyFamily::default();
    let datasets: Vec<BenchDataset> = (0..25)
        .map(|seed| BenchDataset {
            name: format!("noisy{seed:02}"),
            series: family.series(cfg.dataset.context_length + cfg.dataset.horizon, seed),
        })
        .collect();
    let opts = BenchOptions {
        clock: Clock::Wall,
        workers: 8,
        ..BenchOptions::default()
    };
    let report = run_bench(&cfg, &datasets, &opts).map_err(|e| e.to_string())?;
    if !report.failures.is_empty() {
        return Err(format!("{} bench runs failed", report.failures.len()));
    }
    let row = |d: &str, m: &str| {
        report
            .rows
            .iter()
            .find(|r| r.dataset == d && r.method == m)
            .expect("row present")
    };
    let mut wins_solo = 0;
    let mut wins_raced = 0;
    for d in &datasets {
        if row(&d.name, "no_rd").mase < row(&d.name, "plain").mase {
            wins_solo += 1;
        }
        if row(&d.name, "full").mase < row(&d.name, "no_aaqm").mase {
            wins_raced += 1;
        }
    }
    let mean = |m: &str, f: fn(&tokencast::bench::BenchRow) -> f64| {
        datasets.iter().map(|d| f(row(&d.name, m))).sum::<f64>() / datasets.len() as f64
    };
    let rd_shift = |on: &str, off: &str| (mean(on, |r| r.mase) / mean(off, |r| r.mase) - 1.0).abs();
    let shift_filtered = rd_shift("full", "no_rd");
    let shift_raw = rd_shift("no_aaqm", "plain");
    let faster = mean("full", |r| r.latency_s) < mean("no_rd", |r| r.latency_s)
        && mean("no_aaqm", |r| r.latency_s) < mean("plain", |r| r.latency_s);
    let ok =
        wins_solo >= 20 && wins_raced >= 20 && shift_filtered < 0.05 && shift_raw < 0.05 && faster;
    check(
        ok,
        format!(
            "AAQM lowers MASE in {wins_solo}/25 (RD off) and {wins_raced}/25 (RD on); \
             RD shifts mean MASE by {:.1}% (filtered) and {:.1}% (unfiltered); RD faster {faster}",
            100.0 * shift_filtered,
            100.0 * shift_raw
        ),
    )
    .and_then(|d| within_time(start, Duration::from_secs(300), d))
}

fn bench_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    ["metrics.csv", "metrics.json", "aggregate.csv", "curves.csv"]
        .iter()
        .map(|f| {
            (
                f.to_string(),
                std::fs::read(dir.join(f)).unwrap_or_default(),
            )
        })
        .collect()
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let family = NoisyFamily::default();
    let mut data = Vec::new();
    for seed in 0..3 {
        let path = tmp.path().join(format!("series{seed}.csv"));
        let series = family.series(400, seed);
        tokencast::io::write_csv(&path, &series, "value").map_err(|e| e.to_string())?;
        data.push(path);
    }
    let run = |out: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_tokencast"))
            .arg("bench")
            .arg("--data")
            .args(&data)
            .args(["--workers", "4", "--out-dir"])
            .arg(out)
            .args(["--order", "5", "--cutoff-hz", "10"])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        Ok(bench_files(out))
    };
    let a = run(&tmp.path().join("a"))?;
    let b = run(&tmp.path().join("b"))?;
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1 || x.1.is_empty())
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            "metrics.csv, metrics.json, aggregate.csv, curves.csv byte-identical across two runs"
                .into()
        } else {
            format!("outputs differ: {differing:?}")
        },
    )
}

fn main() {
    let checks: [(&str, fn() -> Verdict); 10] = [
        ("filter correctness", filter_correctness),
        ("SNR improvement", snr_improvement),
        ("quantization bound", quantization_bound),
        ("codec bijection", codec_bijection),
        ("race latency envelope", race_latency_envelope),
        ("race fallback", race_fallback),
        ("concatenation error dominance", concatenation_dominance),
        ("metrics oracle equivalence", metrics_oracle),
        ("ablation direction", ablation_direction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match verdict {
            Ok(d) => println!("acceptance {:>2} PASS {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("acceptance {:>2} FAIL {name}: {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
