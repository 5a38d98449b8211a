//! End-to-end pipeline checks on the synthetic corpus: training makes
//! progress, runs reproduce byte-for-byte, resume continues schedules.

mod support;

use std::fs;

use kws_core::config::Config;
use kws_core::dataio::Split;
use kws_core::eval::{evaluate_grid, EvalSource, EvalSpec};
use kws_core::i2cr::RampSchedule;
use kws_core::model::{EncoderConfig, ModelBundle};
use kws_core::train::{
    clean_accuracy, load_checkpoint, train, train_step, Adam, Batcher, Regularizer, TrainConfig,
    TrainSetup,
};
use kws_core::dsp::{AugmentPolicy, MelConfig, MelFrontend};
use kws_core::i2cr::LossConfig;

fn toy_encoder() -> EncoderConfig {
    EncoderConfig {
        width: 8,
        depth: 2,
        latent_dim: 32,
        ..EncoderConfig::default()
    }
}

fn toy_train_cfg(seed: u64, epochs: usize) -> TrainConfig {
    // Desk-scale overrides: a few dozen steps need a hotter learning rate
    // than the full-corpus default.
    TrainConfig {
        batch_size: 12,
        lr_init: 3e-3,
        epochs,
        seed,
        regularizer: Regularizer::I2cr,
        ..TrainConfig::default()
    }
}

#[test]
fn smoke_loss_decreases_over_fifty_steps() {
    // Tiny 8-sample train set, 50 steps; majority vote over three seeds.
    let data = support::toy_data(2, 42); // 4 classes x 2 clips, all in train
    let mel = MelConfig::default();
    let frontend = MelFrontend::new(&mel, 16_000).unwrap();
    let policy = AugmentPolicy::default();
    let loss_cfg = LossConfig::default();

    let mut wins = 0;
    for seed in [1u64, 2, 3] {
        let cfg = toy_train_cfg(seed, 25);
        let batcher = Batcher::new(
            &data.manifest,
            data.root.path(),
            &data.train_bank,
            &frontend,
            &policy,
            4,
            seed,
        )
        .unwrap();
        let sched = RampSchedule {
            max_alpha: 0.5,
            total_epochs: 25,
        };
        let mut model = ModelBundle::new(
            &toy_encoder(),
            4,
            32,
            (98, 64),
            seed,
        )
        .unwrap();
        let mut opt = Adam::new(&mut model, cfg.adam);
        let total_steps = 25 * batcher.batches_per_epoch();

        let mut first = None;
        let mut last = None;
        let mut step = 0usize;
        'outer: for epoch in 0..25 {
            for (bi, entries) in batcher.epoch_plan(epoch).iter().enumerate() {
                let batch = batcher.make_batch(epoch, bi, entries).unwrap();
                let b = train_step(
                    &mut model, &mut opt, &batch, epoch, step, total_steps, &cfg, &loss_cfg,
                    &sched,
                )
                .unwrap();
                if epoch == 0 {
                    assert_eq!(b.alpha, 0.0, "first epoch must have alpha 0");
                    assert_eq!(b.total, b.ce);
                }
                step += 1;
                if step == 1 {
                    first = Some(b.total);
                }
                if step == 50 {
                    last = Some(b.total);
                    break 'outer;
                }
            }
        }
        if last.unwrap() < first.unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 2, "loss decreased in only {wins}/3 seeds");
}

#[test]
fn training_is_reproducible_and_improves_on_chance() {
    let data = support::toy_data(15, 7); // 36 train / 12 val / 12 test
    let cfg = Config::default();
    let train_cfg = toy_train_cfg(11, 6);

    let run = |out: &std::path::Path| {
        let setup = TrainSetup {
            manifest: &data.manifest,
            root: data.root.path(),
            bank: &data.train_bank,
            mel: &cfg.mel,
            policy: &cfg.augment,
            loss: &cfg.loss,
            ramp: RampSchedule { max_alpha: 0.5, total_epochs: train_cfg.epochs },
            encoder: &toy_encoder(),
            proj_dim: 32,
            train: &train_cfg,
        };
        train(&setup, out, None).unwrap()
    };

    let dir = tempfile::tempdir().unwrap();
    let out_a = run(&dir.path().join("a"));
    let out_b = run(&dir.path().join("b"));

    let metrics_a = fs::read(&out_a.metrics_csv).unwrap();
    let metrics_b = fs::read(&out_b.metrics_csv).unwrap();
    assert_eq!(metrics_a, metrics_b, "metrics CSVs differ between runs");
    let epochs_a = fs::read(&out_a.epochs_csv).unwrap();
    let epochs_b = fs::read(&out_b.epochs_csv).unwrap();
    assert_eq!(epochs_a, epochs_b);

    // A few epochs on the chord/chirp toy should clear half.
    assert!(
        out_a.best_val_accuracy > 0.5,
        "val accuracy {} in a 4-class toy",
        out_a.best_val_accuracy
    );

    // Checkpoint restores bit-identical evaluation.
    let (model, _, _) = load_checkpoint(&out_a.best_checkpoint).unwrap();
    let spec = EvalSpec {
        sources: vec![EvalSource::clean(), EvalSource::noise("any", None)],
        snrs_db: vec![0.0],
        seed: 5,
    };
    let g1 = evaluate_grid(
        &model,
        &data.manifest,
        data.root.path(),
        Some(&data.eval_bank),
        &spec,
        &cfg.mel,
    )
    .unwrap();
    let (model2, _, _) = load_checkpoint(&out_b.best_checkpoint).unwrap();
    let g2 = evaluate_grid(
        &model2,
        &data.manifest,
        data.root.path(),
        Some(&data.eval_bank),
        &spec,
        &cfg.mel,
    )
    .unwrap();
    assert_eq!(g1, g2);
}

#[test]
fn resume_continues_schedules_and_reproduces_the_straight_run() {
    let data = support::toy_data(8, 13);
    let cfg = Config::default();
    let encoder = toy_encoder();
    let dir = tempfile::tempdir().unwrap();

    fn make_setup<'a>(
        data: &'a support::ToyData,
        cfg: &'a Config,
        encoder: &'a EncoderConfig,
        train_cfg: &'a TrainConfig,
    ) -> TrainSetup<'a> {
        TrainSetup {
            manifest: &data.manifest,
            root: data.root.path(),
            bank: &data.train_bank,
            mel: &cfg.mel,
            policy: &cfg.augment,
            loss: &cfg.loss,
            ramp: RampSchedule { max_alpha: 0.5, total_epochs: train_cfg.epochs },
            encoder,
            proj_dim: 32,
            train: train_cfg,
        }
    }

    // Straight 3-epoch run.
    let cfg3 = toy_train_cfg(21, 3);
    let straight = train(
        &make_setup(&data, &cfg, &encoder, &cfg3),
        &dir.path().join("straight"),
        None,
    )
    .unwrap();

    // 2 epochs, then resume for the third.
    let cfg2 = toy_train_cfg(21, 2);
    let part = train(
        &make_setup(&data, &cfg, &encoder, &cfg2),
        &dir.path().join("part"),
        None,
    )
    .unwrap();
    let resumed = train(
        &make_setup(&data, &cfg, &encoder, &cfg3),
        &dir.path().join("part"),
        Some(&part.last_checkpoint),
    )
    .unwrap();

    // The resumed third epoch must continue the 3-epoch schedules (lr and
    // alpha as the straight run saw them), not restart from step 0. Losses
    // legitimately differ: the partial run annealed on a 2-epoch horizon.
    fn schedule_cols(path: &std::path::Path) -> Vec<(String, String, String)> {
        let text = fs::read_to_string(path).unwrap();
        text.lines()
            .filter(|l| l.starts_with("2,"))
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[1].to_string(), f[2].to_string(), f[3].to_string())
            })
            .collect()
    }
    let straight_sched = schedule_cols(&straight.metrics_csv);
    let resumed_sched = schedule_cols(&resumed.metrics_csv);
    assert!(!straight_sched.is_empty());
    assert_eq!(straight_sched, resumed_sched);

    // And the resumed checkpoint must evaluate cleanly.
    let (m, _, state) = load_checkpoint(&resumed.last_checkpoint).unwrap();
    assert_eq!(state.epoch, 2);
    let fe = MelFrontend::new(&cfg.mel, 16_000).unwrap();
    let acc = clean_accuracy(&m, &data.manifest, data.root.path(), Split::Val, &fe).unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

/// Diagnostic only: watch the loss trajectory. Run with
/// `cargo test -p kws-core --test pipeline -- --ignored --nocapture debug_trajectory`
#[test]
#[ignore]
fn debug_trajectory() {
    let data = support::toy_data(60, 7);
    let mel = MelConfig::default();
    let frontend = MelFrontend::new(&mel, 16_000).unwrap();
    let policy = AugmentPolicy::default();
    let loss_cfg = LossConfig::default();
    let cfg = toy_train_cfg(11, 20);
    let batcher = Batcher::new(
        &data.manifest, data.root.path(), &data.train_bank, &frontend, &policy, 12, 11,
    ).unwrap();
    let sched = RampSchedule { max_alpha: 0.5, total_epochs: 20 };
    let mut model = ModelBundle::new(&toy_encoder(), 4, 32, (98, 64), 11).unwrap();
    let mut opt = Adam::new(&mut model, cfg.adam);
    let total_steps = 20 * batcher.batches_per_epoch();
    let mut step = 0;
    for epoch in 0..20 {
        let mut ep_ce = 0.0;
        let mut nb = 0;
        for (bi, entries) in batcher.epoch_plan(epoch).iter().enumerate() {
            let batch = batcher.make_batch(epoch, bi, entries).unwrap();
            let b = train_step(&mut model, &mut opt, &batch, epoch, step, total_steps, &cfg, &loss_cfg, &sched).unwrap();
            ep_ce += b.ce;
            nb += 1;
            step += 1;
        }
        let fe = MelFrontend::new(&mel, 16_000).unwrap();
        let val = clean_accuracy(&model, &data.manifest, data.root.path(), Split::Val, &fe).unwrap();
        println!("epoch {epoch:2}  mean_ce {:.4}  val {:.3}", ep_ce / nb as f64, val);
    }
}

/// Diagnostic only: the regularizer trend experiment at full toy scale.
#[test]
#[ignore]
fn experiment_trend() {
    let data = support::toy_data(60, 7);
    let cfg = Config::default();
    let encoder = toy_encoder();
    let dir = tempfile::tempdir().unwrap();
    let eval_spec = EvalSpec {
        sources: vec![EvalSource::clean(), EvalSource::noise("any", None)],
        snrs_db: vec![0.0],
        seed: 777,
    };

    for reg in [Regularizer::None, Regularizer::I2cr] {
        for seed in [101u64, 202, 303] {
            let t0 = std::time::Instant::now();
            let mut tc = toy_train_cfg(seed, 20);
            tc.regularizer = reg;
            let setup = TrainSetup {
                manifest: &data.manifest,
                root: data.root.path(),
                bank: &data.train_bank,
                mel: &cfg.mel,
                policy: &cfg.augment,
                loss: &cfg.loss,
                ramp: RampSchedule { max_alpha: 0.5, total_epochs: 20 },
                encoder: &encoder,
                proj_dim: 32,
                train: &tc,
            };
            let out = train(&setup, &dir.path().join(format!("{reg:?}_{seed}")), None).unwrap();
            let (model, _, _) = load_checkpoint(&out.best_checkpoint).unwrap();
            let grid = evaluate_grid(
                &model, &data.manifest, data.root.path(), Some(&data.eval_bank),
                &eval_spec, &cfg.mel,
            ).unwrap();
            let clean = grid.cell("clean", None).unwrap().accuracy();
            let noisy = grid.cell("any", Some(0.0)).unwrap().accuracy();
            println!(
                "reg {reg:?} seed {seed}: clean {clean:.3} zero_db {noisy:.3} best_val {:.3} ({:.0}s)",
                out.best_val_accuracy, t0.elapsed().as_secs_f64()
            );
        }
    }
}
