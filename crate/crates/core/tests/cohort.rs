use boostlab::cohort::{
    ema_update, optimizer_step, train, train_mss, train_oas, train_oss, train_single, AdamConfig, Branch,
    EpochRecord, Experiment, History, Role, Scenario, TrainConfig,
};
use boostlab::data::{epoch_batches, generate, LatentSpec, PairDataset, Split};
use boostlab::encoders::{score_batch, EncoderConfig, EncoderParams};
use boostlab::losses::{total_target_loss, BoostVariant, LossSettings, RawLoss, SimilarityBatch};
use boostlab::numcore::Gradients;
use boostlab::Matrix;

const BATCH: usize = 16;

fn dataset(noise: f64) -> PairDataset {
    let spec = LatentSpec {
        latent_dim: 6,
        image_dim: 8,
        text_dim: 8,
        captions_per_image: 3,
        noise,
        regions: 2,
        words: 2,
        train: 64,
        val: 20,
        test: 20,
    };
    generate(&spec, 1).unwrap()
}

fn encoder() -> EncoderConfig {
    EncoderConfig {
        image_dim: 8,
        text_dim: 8,
        hidden: 8,
        ..EncoderConfig::default()
    }
}

fn exp(scenario: Scenario, variant: Option<BoostVariant>, epochs: usize) -> Experiment {
    let train = TrainConfig {
        scenario,
        variant,
        epochs,
        batch_size: BATCH,
        lr: 1e-2,
        ..TrainConfig::default()
    };
    Experiment::new(1, encoder(), train, LossSettings::default())
}

fn clamp(m: Matrix) -> Matrix {
    m.map(|v| v.clamp(-1.0, 1.0))
}

fn first_batch_scores(e: &Experiment, ds: &PairDataset, params: &EncoderParams) -> Matrix {
    let b = &epoch_batches(ds, e.train.batch_size, e.seed, 0).unwrap()[0];
    clamp(score_batch(params, &ds.batch_input(b, e.encoder.mode)).unwrap())
}

#[test]
fn zero_epochs_return_initial_parameters() {
    let ds = dataset(0.3);
    let e = exp(Scenario::Single, None, 0);
    let out = train_single(&e, &ds).unwrap();
    assert_eq!(out.best, EncoderParams::init(&e.encoder, e.target_init_seed()).unwrap());
    assert_eq!(out.best_epoch, None);
    assert!(out.history.epochs.is_empty());
}

#[test]
fn single_training_improves_validation_and_repeats_exactly() {
    let ds = dataset(0.1);
    let e = exp(Scenario::Single, None, 6);
    let a = train_single(&e, &ds).unwrap();
    let b = train_single(&e, &ds).unwrap();
    assert_eq!(a, b);
    let first = a.history.epochs[0].rsum;
    let best = a.history.epochs[a.best_epoch.unwrap()].rsum;
    let e0 = exp(Scenario::Single, None, 0);
    let untrained = boostlab::cohort::evaluate_split(&train_single(&e0, &ds).unwrap().best, &ds, Split::Val, e.md_mode)
        .unwrap()
        .rsum;
    assert!(best > untrained, "best {best} vs untrained {untrained}");
    assert!(best >= first);
}

#[test]
fn oas_without_boosting_is_single() {
    let ds = dataset(0.3);
    let anchor = train_single(&exp(Scenario::Single, None, 2), &ds).unwrap().best;
    let plain = train_single(&exp(Scenario::Single, None, 3), &ds).unwrap();
    let oas = train_oas(&exp(Scenario::Oas, None, 3), &ds, &anchor).unwrap();
    assert_eq!(plain.best, oas.best);
    assert_eq!(plain.history, oas.history);
    assert_eq!(oas.branches[0].params, anchor);
}

#[test]
fn oas_with_oracle_anchor_boosts_from_step_zero() {
    let ds = dataset(0.0);
    let mut oracle = EncoderParams::init(&encoder(), 0).unwrap();
    let pad = |m: &Matrix| Matrix::from_fn(8, 8, |r, c| if c < 6 { m[(r, c)] } else { 0.0 });
    oracle.image.weight = pad(&ds.image_map);
    oracle.image.bias = Matrix::zeros(1, 8);
    oracle.text.weight = pad(&ds.text_map);
    oracle.text.bias = Matrix::zeros(1, 8);
    let e = exp(Scenario::Oas, Some(BoostVariant::Rm), 1);
    let out = train_oas(&e, &ds, &oracle).unwrap();
    let target0 = EncoderParams::init(&e.encoder, e.target_init_seed()).unwrap();
    let batch = SimilarityBatch::paired(first_batch_scores(&e, &ds, &target0), first_batch_scores(&e, &ds, &oracle))
        .unwrap();
    let want = total_target_loss(&batch, &e.loss, RawLoss::Max, Some(BoostVariant::Rm)).unwrap();
    let step0 = out.history.steps[0];
    assert!(step0.loss_boo > 0.0);
    assert!((step0.loss_boo - want.boost).abs() < 1e-12);
    assert!((step0.loss_raw - want.raw).abs() < 1e-12);
}

#[test]
fn oss_three_branches_average_boosting() {
    let ds = dataset(0.3);
    let mut e = exp(Scenario::Oss, Some(BoostVariant::Am), 1);
    e.train.branches = 3;
    let out = train_oss(&e, &ds).unwrap();
    assert_eq!(out.branches.len(), 3);
    let init = |seed| EncoderParams::init(&e.encoder, seed).unwrap();
    let t = first_batch_scores(&e, &ds, &init(e.target_init_seed()));
    let a0 = first_batch_scores(&e, &ds, &init(e.branch_init_seed(0)));
    let a1 = first_batch_scores(&e, &ds, &init(e.branch_init_seed(1)));
    let boost = |a: Matrix| {
        let b = SimilarityBatch::paired(t.clone(), a).unwrap();
        total_target_loss(&b, &e.loss, RawLoss::Max, Some(BoostVariant::Am)).unwrap().boost
    };
    let want = (boost(a0) + boost(a1)) / 2.0;
    assert!((out.history.steps[0].loss_boo - want).abs() < 1e-12);
}

#[test]
fn mss_first_step_sees_identity_anchor() {
    let ds = dataset(0.3);
    for v in [BoostVariant::Rm, BoostVariant::Am] {
        let out = train_mss(&exp(Scenario::Mss, Some(v), 1), &ds).unwrap();
        let want = 2.0 * 0.2 * BATCH as f64;
        assert!((out.history.steps[0].loss_boo - want).abs() < 1e-12, "{v:?}");
    }
}

#[test]
fn mss_with_unit_beta_keeps_anchor_at_init() {
    let ds = dataset(0.3);
    let mut e = exp(Scenario::Mss, Some(BoostVariant::Am), 2);
    e.train.beta0 = 1.0;
    let out = train_mss(&e, &ds).unwrap();
    let init = EncoderParams::init(&e.encoder, e.target_init_seed()).unwrap();
    assert_eq!(out.branches[0].params, init);
    assert_ne!(out.target().params, init);
}

#[test]
fn step_total_is_raw_plus_boost() {
    let ds = dataset(0.3);
    let out = train(&exp(Scenario::Oss, Some(BoostVariant::RmSoft), 2), &ds, None).unwrap();
    for s in &out.history.steps {
        assert!((s.total - (s.loss_raw + s.loss_boo)).abs() < 1e-12);
    }
}

#[test]
fn oas_dispatch_needs_anchor() {
    let ds = dataset(0.3);
    assert!(train(&exp(Scenario::Oas, Some(BoostVariant::Am), 1), &ds, None).is_err());
}

fn record(epoch: usize, rsum: f64) -> EpochRecord {
    serde_json::from_value(serde_json::json!({
        "epoch": epoch, "split": "val", "r1_i2t": 0.0, "r5_i2t": 0.0, "r10_i2t": 0.0,
        "r1_t2i": 0.0, "r5_t2i": 0.0, "r10_t2i": 0.0, "rsum": rsum, "md": 0.0,
        "loss_raw": 0.0, "loss_boo": 0.0
    }))
    .unwrap()
}

#[test]
fn best_epoch_prefers_earliest_tie() {
    let h = History {
        epochs: vec![record(0, 10.0), record(1, 30.0), record(2, 30.0), record(3, 20.0)],
        steps: Vec::new(),
    };
    assert_eq!(h.best_epoch(), Some(1));
    assert_eq!(History::default().best_epoch(), None);
}

#[test]
fn repeated_optimizer_runs_are_bit_identical() {
    let run = || {
        let mut b = Branch::new(EncoderParams::init(&encoder(), 3).unwrap(), Role::Target);
        for k in 0..100 {
            let grads: Gradients = b
                .params
                .named()
                .into_iter()
                .map(|(n, m)| (n.to_string(), m.map(|x| (x * (k + 1) as f64).sin())))
                .collect();
            optimizer_step(&mut b, &grads, 1e-3, &AdamConfig::default()).unwrap();
        }
        b.params
    };
    assert_eq!(run(), run());
}

#[test]
fn ema_fold_arithmetic() {
    let mut a = EncoderParams::init(&encoder(), 1).unwrap();
    let t = EncoderParams::init(&encoder(), 2).unwrap();
    let before = a.clone();
    ema_update(&mut a, &t, 1.0).unwrap();
    assert_eq!(a, before);
    ema_update(&mut a, &t, 0.0).unwrap();
    assert_eq!(a, t);
}
