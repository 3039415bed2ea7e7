use boostlab::cohort::evaluate_split;
use boostlab::data::{batches, epoch_batches, generate, oracle_positive_cosine, test_pairs, DatasetFile, LatentSpec, Split};
use boostlab::encoders::{EncoderConfig, EncoderParams};
use boostlab::eval::MdMode;
use boostlab::Matrix;

const PINNED_CHECKSUM: &str = "4869a09f3acf8771af21a0bb0c63498dc6f3272ffe583f822fc9bc20bd543381";

fn spec(noise: f64) -> LatentSpec {
    LatentSpec {
        latent_dim: 6,
        image_dim: 8,
        text_dim: 7,
        captions_per_image: 5,
        noise,
        regions: 3,
        words: 3,
        train: 40,
        val: 10,
        test: 20,
    }
}

#[test]
fn pinned_dataset_checksum() {
    let pinned = LatentSpec::default();
    assert_eq!((pinned.images(), pinned.captions_per_image, pinned.latent_dim, pinned.noise), (1000, 5, 16, 0.3));
    assert_eq!(generate(&pinned, 1).unwrap().checksum(), PINNED_CHECKSUM);
}

#[test]
fn same_seed_same_dataset() {
    let a = generate(&spec(0.3), 9).unwrap();
    let b = generate(&spec(0.3), 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.checksum(), generate(&spec(0.3), 10).unwrap().checksum());
}

#[test]
fn noiseless_data_with_true_maps_retrieves_perfectly() {
    let s = LatentSpec {
        image_dim: 6,
        text_dim: 6,
        ..spec(0.0)
    };
    let ds = generate(&s, 2).unwrap();
    let cfg = EncoderConfig {
        image_dim: 6,
        text_dim: 6,
        hidden: 6,
        ..EncoderConfig::default()
    };
    let mut params = EncoderParams::init(&cfg, 0).unwrap();
    params.image.weight = ds.image_map.clone();
    params.image.bias = Matrix::zeros(1, 6);
    params.text.weight = ds.text_map.clone();
    params.text.bias = Matrix::zeros(1, 6);
    let rep = evaluate_split(&params, &ds, Split::Test, MdMode::MeanDifference).unwrap();
    assert_eq!(rep.rsum, 600.0);
    assert!((oracle_positive_cosine(&ds).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn difficulty_grows_with_noise() {
    for seed in 1..=5 {
        let cos: Vec<f64> = [0.0, 0.1, 0.3, 0.6, 1.0]
            .iter()
            .map(|&n| oracle_positive_cosine(&generate(&spec(n), seed).unwrap()).unwrap())
            .collect();
        assert!(cos.windows(2).all(|w| w[1] < w[0]), "seed {seed}: {cos:?}");
    }
}

#[test]
fn batches_are_pure() {
    let ds = generate(&spec(0.3), 4).unwrap();
    for epoch in 0..5 {
        let bs = epoch_batches(&ds, 8, 4, epoch).unwrap();
        let mut seen = Vec::new();
        for b in &bs {
            assert_eq!(b.images.len(), b.captions.len());
            let mut owners: Vec<usize> = b.captions.iter().map(|&c| ds.image_of_caption(c)).collect();
            assert_eq!(owners, b.images);
            owners.sort_unstable();
            owners.dedup();
            assert_eq!(owners.len(), b.images.len());
            seen.extend(b.images.iter().copied());
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
    }
}

#[test]
fn batching_is_seeded() {
    let ds = generate(&spec(0.3), 4).unwrap();
    assert_eq!(batches(&ds, Split::Train, 8, 1).unwrap(), batches(&ds, Split::Train, 8, 1).unwrap());
    assert_ne!(batches(&ds, Split::Train, 8, 1).unwrap(), batches(&ds, Split::Train, 8, 2).unwrap());
    assert_eq!(batches(&ds, Split::Train, 40, 1).unwrap().len(), 1);
}

#[test]
fn test_gallery_shapes() {
    let two = LatentSpec {
        captions_per_image: 1,
        train: 4,
        val: 2,
        test: 2,
        ..spec(0.1)
    };
    let g = test_pairs(&generate(&two, 1).unwrap()).unwrap();
    assert_eq!((g.images.len(), g.captions.len()), (2, 2));

    let three = LatentSpec {
        train: 4,
        val: 2,
        test: 3,
        ..spec(0.1)
    };
    let ds = generate(&three, 1).unwrap();
    let g = test_pairs(&ds).unwrap();
    assert_eq!((g.images.len(), g.captions.len()), (3, 15));
    for i in 0..3 {
        assert_eq!((0..15).filter(|&c| g.truth.is_positive(i, c)).count(), 5);
    }
    for (c, &cap) in g.captions.iter().enumerate() {
        assert_eq!(g.images[g.truth.caption_image[c]], ds.image_of_caption(cap));
    }
}

#[test]
fn dataset_file_round_trip_and_tamper() {
    let dir = std::env::temp_dir().join(format!("boostlab-data-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("d.json");
    let ds = generate(&spec(0.2), 3).unwrap();
    DatasetFile::describe(&ds).save(&path).unwrap();
    let file = DatasetFile::load(&path).unwrap();
    assert_eq!(file.regenerate().unwrap(), ds);
    let mut bad = file.clone();
    bad.seed = 4;
    assert!(bad.regenerate().is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
