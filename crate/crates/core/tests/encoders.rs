use boostlab::encoders::{
    cosine_similarity_matrix, cross_attend, score_batch, similarity_head, Checkpoint, EncoderConfig, EncoderInput,
    EncoderMode, EncoderParams, PooledBatch, SimilarityHeadParams, TokenBatch,
};
use boostlab::{Matrix, RngStream};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// Text-to-image attention written out with plain vectors.
fn oracle_attend(t: &Matrix, v: &Matrix, lambda: f64) -> Matrix {
    let regions: Vec<Vec<f64>> = (0..v.rows()).map(|k| unit(v.row(k))).collect();
    let mut out = Matrix::zeros(t.rows(), v.cols());
    for l in 0..t.rows() {
        let word = unit(t.row(l));
        let m: Vec<f64> = regions.iter().map(|r| dot(&word, r).max(0.0)).collect();
        let m = unit(&m);
        let top = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = m.iter().map(|x| (lambda * (x - top)).exp()).collect();
        let z: f64 = e.iter().sum();
        for (k, w) in e.iter().enumerate() {
            for h in 0..v.cols() {
                out[(l, h)] += w / z * v[(k, h)];
            }
        }
    }
    out
}

/// Alignment head written out term by term.
fn oracle_head(t: &Matrix, att: &Matrix, p: &SimilarityHeadParams) -> f64 {
    let da = p.w1.cols();
    let mut mean = vec![0.0; da];
    for l in 0..t.rows() {
        let sq: Vec<f64> = (0..t.cols()).map(|h| (t[(l, h)] - att[(l, h)]).powi(2)).collect();
        let a: Vec<f64> = (0..da)
            .map(|d| (0..t.cols()).map(|h| sq[h] * p.w1[(h, d)]).sum::<f64>() + p.b1[(0, d)])
            .collect();
        for (m, x) in mean.iter_mut().zip(unit(&a)) {
            *m += x / t.rows() as f64;
        }
    }
    let pre: f64 = (0..da).map(|d| mean[d] * p.w2[(d, 0)]).sum::<f64>() + p.b2[(0, 0)];
    pre.tanh()
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn cosine_at_forty_five_degrees() {
    let v = Matrix::from_rows(&[[1.0, 0.0]]);
    let w = Matrix::from_rows(&[[1.0, 1.0]]);
    let s = cosine_similarity_matrix(&v, &w).unwrap();
    assert!((s[(0, 0)] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
}

#[test]
fn attention_weights_for_two_regions() {
    // Unit regions e1, e2 and a word with cosines (0.8, 0.2) against them.
    let v = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let rest = (1.0f64 - 0.64 - 0.04).sqrt();
    let t = Matrix::from_rows(&[[0.8, 0.2, rest]]);
    let out = cross_attend(&t, &v, 9.0).unwrap();
    let m = unit(&[0.8, 0.2]);
    assert!((m[0] - 0.970143).abs() < 1e-6 && (m[1] - 0.242536).abs() < 1e-6);
    let w0 = 1.0 / (1.0 + (9.0 * (m[1] - m[0])).exp());
    assert!((out[(0, 0)] - w0).abs() < 1e-15);
    assert!((out[(0, 1)] - (1.0 - w0)).abs() < 1e-15);
    assert!((w0 - 0.998570).abs() < 1e-6, "{w0}");
}

#[test]
fn attention_matches_plain_loops() {
    let mut rng = RngStream::new(41);
    for _ in 0..20 {
        let l = 1 + rng.below(4);
        let k = 1 + rng.below(4);
        let t = rng.normal_matrix(l, 5, 1.0);
        let v = rng.normal_matrix(k, 5, 1.0);
        assert!(close(&cross_attend(&t, &v, 9.0).unwrap(), &oracle_attend(&t, &v, 9.0), 1e-12));
    }
}

#[test]
fn head_matches_straight_line_seed_7() {
    let mut rng = RngStream::new(7);
    let (l, h, da) = (4, 6, 3);
    let t = rng.normal_matrix(l, h, 1.0);
    let att = rng.normal_matrix(l, h, 1.0);
    let p = SimilarityHeadParams {
        w1: rng.normal_matrix(h, da, 0.5),
        b1: rng.normal_matrix(1, da, 0.5),
        w2: rng.normal_matrix(da, 1, 0.5),
        b2: rng.normal_matrix(1, 1, 0.5),
    };
    let got = similarity_head(&t, &att, &p).unwrap();
    assert!((got - oracle_head(&t, &att, &p)).abs() < 1e-14);
}

fn interaction_config() -> EncoderConfig {
    EncoderConfig {
        mode: EncoderMode::Interaction,
        image_dim: 5,
        text_dim: 4,
        hidden: 6,
        align_dim: 3,
        lambda: 9.0,
    }
}

#[test]
fn interaction_batch_matches_pairwise_seed_3() {
    let cfg = interaction_config();
    let params = EncoderParams::init(&cfg, 3).unwrap();
    let mut rng = RngStream::new(3);
    let images: Vec<Matrix> = (0..4).map(|_| rng.normal_matrix(3, 5, 1.0)).collect();
    let texts: Vec<Matrix> = (0..4)
        .map(|_| {
            let words = 2 + rng.below(3);
            rng.normal_matrix(words, 4, 1.0)
        })
        .collect();
    let scores = score_batch(
        &params,
        &EncoderInput::Tokens(TokenBatch {
            images: images.clone(),
            texts: texts.clone(),
        }),
    )
    .unwrap();
    let head = params.head.as_ref().unwrap();
    for (i, im) in images.iter().enumerate() {
        let v = params.image.apply(im).unwrap();
        for (c, tx) in texts.iter().enumerate() {
            let t = params.text.apply(tx).unwrap();
            let want = oracle_head(&t, &oracle_attend(&t, &v, 9.0), head);
            assert!((scores[(i, c)] - want).abs() < 1e-12, "cell ({i}, {c})");
        }
    }
}

#[test]
fn pooled_scores_are_cosines_of_projections() {
    let cfg = EncoderConfig {
        image_dim: 5,
        text_dim: 4,
        ..EncoderConfig::default()
    };
    let params = EncoderParams::init(&cfg, 8).unwrap();
    let mut rng = RngStream::new(8);
    let images = rng.normal_matrix(3, 5, 1.0);
    let texts = rng.normal_matrix(4, 4, 1.0);
    let got = score_batch(
        &params,
        &EncoderInput::Pooled(PooledBatch {
            images: images.clone(),
            texts: texts.clone(),
        }),
    )
    .unwrap();
    let a = params.image.apply(&images).unwrap();
    let b = params.text.apply(&texts).unwrap();
    let want = Matrix::from_fn(3, 4, |i, c| dot(&unit(a.row(i)), &unit(b.row(c))));
    assert!(close(&got, &want, 1e-14));
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("boostlab-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("c.json");
    let params = EncoderParams::init(&interaction_config(), 12).unwrap();
    Checkpoint::from_params(&params, 12).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap().to_params().unwrap();
    assert_eq!(back, params);
    std::fs::remove_dir_all(&dir).unwrap();
}
