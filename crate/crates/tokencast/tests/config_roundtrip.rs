use proptest::prelude::*;
use tokencast::config::{
    load_config, save_config, Norm, PredictorKind, PredictorSection, Rounding, RunConfig, Summary,
};

fn predictor() -> impl Strategy<Value = PredictorSection> {
    (
        0..4u8,
        1usize..16,
        1usize..48,
        any::<bool>(),
        0.0f64..100.0,
        0.0f64..10.0,
    )
        .prop_map(
            |(kind, order, period, innovations, latency_ms, jitter_ms)| {
                let mut p = PredictorSection::ar(order, latency_ms);
                p.innovations = innovations;
                p.jitter_ms = jitter_ms;
                match kind {
                    0 => {}
                    1 => {
                        p.kind = PredictorKind::Persistence;
                        p.order = None;
                    }
                    2 => {
                        p.kind = PredictorKind::SeasonalNaive;
                        p.order = None;
                        p.period = Some(period);
                    }
                    _ => {
                        p.kind = PredictorKind::External;
                        p.order = None;
                        p.command = Some(vec!["predictor".into(), format!("--p={period}")]);
                    }
                }
                p
            },
        )
}

fn config() -> impl Strategy<Value = RunConfig> {
    (
        (
            1usize..=12,
            0.01f64..0.99,
            1.0f64..1e4,
            1u32..100_000,
            any::<bool>(),
        ),
        (
            0.0f64..5.0,
            proptest::option::of(1usize..8),
            any::<bool>(),
            any::<bool>(),
        ),
        (predictor(), predictor()),
        (
            proptest::collection::btree_set(1u32..99, 1..9),
            1usize..64,
            any::<u64>(),
        ),
        (
            8usize..64,
            proptest::option::of("[a-z]{1,8}"),
            40usize..1000,
            0usize..4,
        ),
    )
        .prop_map(|(f, r, (main, draft), e, d)| {
            let mut c = RunConfig::default();
            c.filter.order = f.0;
            c.filter.sample_rate_hz = f.2;
            c.filter.cutoff_hz = f.1 * f.2 / 2.0;
            c.quant.quant_factor = f.3;
            c.quant.rounding = if f.4 {
                Rounding::Nearest
            } else {
                Rounding::Floor
            };
            c.race.gamma = r.0;
            c.race.min_overlap = r.1;
            c.race.norm = if r.2 { Norm::MeanAbs } else { Norm::Rmse };
            c.race.compare_on = if r.3 { Summary::Mean } else { Summary::Median };
            c.predictors.main = main;
            c.predictors.draft = draft;
            c.eval.quantile_levels = e.0.iter().map(|&v| v as f64 / 100.0).collect();
            c.eval.num_samples = e.1;
            c.eval.seed = e.2;
            c.dataset.horizon = d.0;
            c.dataset.timestamp_column = d.1;
            c.dataset.context_length = d.2;
            c.dataset.season_length = 1 + d.3;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn valid_configs_round_trip(cfg in config()) {
        prop_assert!(cfg.validate().is_ok(), "{:?}", cfg.validate());
        let dir = tempfile::tempdir().unwrap();
        for name in ["run.json", "run.toml"] {
            let path = dir.path().join(name);
            save_config(&cfg, &path).unwrap();
            prop_assert_eq!(&load_config(&path).unwrap(), &cfg);
        }
    }
}
