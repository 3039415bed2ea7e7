use std::path::{Path, PathBuf};

use boostlab::check::{run_suite, LossSet, SuiteConfig};
use boostlab::cohort::{train, Scenario, TrainOutcome};
use boostlab::data::{generate, DatasetFile, PairDataset, Split};
use boostlab::encoders::{score_batch, Checkpoint, EncoderParams};
use boostlab::eval::{histogram, report_with, Histogram, MdMode, RetrievalReport};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const DATASET_FILE: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const HIST_FILE: &str = "hist.csv";

/// Config plus command-line overrides.
pub fn resolve(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_gen(cfg: &RunConfig) -> CliResult<String> {
    let ds = generate(&cfg.data, cfg.seed)?;
    create_dir(&cfg.out_dir)?;
    let file = DatasetFile::describe(&ds);
    file.save(&cfg.out_dir.join(DATASET_FILE))?;
    Ok(file.checksum)
}

pub fn load_dataset(path: &Path) -> CliResult<PairDataset> {
    if !path.exists() {
        return Err(CliError::Missing(format!("dataset {} not found; run `gen` first", path.display())));
    }
    Ok(DatasetFile::load(path)?.regenerate()?)
}

pub fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::Missing(format!("checkpoint {} not found", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

/// Summary of one trained seed.
pub struct TrainSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub best_epoch: Option<usize>,
    pub best_rsum: Option<f64>,
}

pub fn cmd_train(cfg: &RunConfig, dataset: Option<&Path>, jobs: usize) -> CliResult<Vec<TrainSummary>> {
    let ds_path = dataset.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join(DATASET_FILE));
    let ds = load_dataset(&ds_path)?;
    if ds.spec != cfg.data {
        return Err(CliError::Config(format!(
            "dataset {} was generated from a different data section",
            ds_path.display()
        )));
    }
    let anchor = match cfg.train.scenario {
        Scenario::Oas => {
            let path = cfg.train.anchor.as_ref().ok_or_else(|| {
                CliError::Missing("oas needs `train.anchor`, the checkpoint of a trained single branch".into())
            })?;
            Some(load_checkpoint(path)?.to_params()?)
        }
        _ => None,
    };
    let seeds = cfg.seeds();
    let multi = seeds.len() > 1;
    let run_one = |seed: u64| -> CliResult<TrainSummary> {
        let dir = if multi {
            cfg.out_dir.join(format!("seed-{seed}"))
        } else {
            cfg.out_dir.clone()
        };
        create_dir(&dir)?;
        let exp = cfg.experiment(seed);
        let outcome = match train(&exp, &ds, anchor.as_ref()) {
            Ok(o) => o,
            Err(failure) => {
                failure.history.write_jsonl(&dir.join(HISTORY_FILE))?;
                return Err(failure.error.into());
            }
        };
        write_outputs(&dir, &outcome, seed)?;
        let best_rsum = outcome
            .best_epoch
            .map(|e| outcome.history.epochs[e].rsum);
        Ok(TrainSummary {
            seed,
            dir,
            best_epoch: outcome.best_epoch,
            best_rsum,
        })
    };
    let jobs = jobs.max(1).min(seeds.len());
    let results: Vec<CliResult<TrainSummary>> = if jobs <= 1 {
        seeds.iter().map(|&s| run_one(s)).collect()
    } else {
        let mut slots: Vec<Option<CliResult<TrainSummary>>> = (0..seeds.len()).map(|_| None).collect();
        for chunk in seeds.iter().enumerate().collect::<Vec<_>>().chunks(jobs) {
            let out: Vec<(usize, CliResult<TrainSummary>)> = std::thread::scope(|sc| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&(k, &s)| (k, sc.spawn(move || run_one(s))))
                    .collect();
                handles
                    .into_iter()
                    .map(|(k, h)| (k, h.join().unwrap_or_else(|_| Err(CliError::Failed("worker panicked".into())))))
                    .collect()
            });
            for (k, r) in out {
                slots[k] = Some(r);
            }
        }
        slots.into_iter().map(|r| r.expect("every seed ran")).collect()
    };
    results.into_iter().collect()
}

fn write_outputs(dir: &Path, outcome: &TrainOutcome, seed: u64) -> CliResult<()> {
    Checkpoint::from_params(&outcome.best, seed).save(&dir.join(CHECKPOINT_FILE))?;
    outcome.history.write_jsonl(&dir.join(HISTORY_FILE))?;
    Ok(())
}

pub fn scores_for(params: &EncoderParams, ds: &PairDataset, split: Split) -> CliResult<(boostlab::Matrix, boostlab::data::GroundTruth)> {
    if (params.config.image_dim, params.config.text_dim) != (ds.spec.image_dim, ds.spec.text_dim) {
        return Err(CliError::Shape(format!(
            "checkpoint expects features {}x{}, dataset has {}x{}",
            params.config.image_dim, params.config.text_dim, ds.spec.image_dim, ds.spec.text_dim
        )));
    }
    let gallery = ds.gallery(split)?;
    let input = ds.input(&gallery.images, &gallery.captions, params.config.mode);
    Ok((score_batch(params, &input)?, gallery.truth))
}

pub fn cmd_eval(
    checkpoint: &Path,
    dataset: &Path,
    split: Split,
    out: &Path,
    md: MdMode,
) -> CliResult<RetrievalReport> {
    let params = load_checkpoint(checkpoint)?.to_params()?;
    let ds = load_dataset(dataset)?;
    let (scores, truth) = scores_for(&params, &ds, split)?;
    let rep = report_with(&scores, &truth, md)?;
    let hist = histogram(&scores, &truth)?;
    create_dir(out)?;
    let mut json = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Failed(e.to_string()))?;
    json.push('\n');
    write_text(&out.join(REPORT_FILE), &json)?;
    write_text(&out.join(HIST_FILE), &hist.to_csv())?;
    Ok(rep)
}

pub fn cmd_hist(checkpoint: &Path, dataset: &Path, split: Split, out: &Path) -> CliResult<Histogram> {
    let params = load_checkpoint(checkpoint)?.to_params()?;
    let ds = load_dataset(dataset)?;
    let (scores, truth) = scores_for(&params, &ds, split)?;
    let hist = histogram(&scores, &truth)?;
    create_dir(out)?;
    write_text(&out.join(HIST_FILE), &hist.to_csv())?;
    Ok(hist)
}

/// Runs the property suite; returns the printed lines and whether all passed.
pub fn cmd_check(seed: Option<u64>) -> (Vec<String>, bool) {
    let mut cfg = SuiteConfig::default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let outcomes = run_suite(&cfg, &LossSet::default());
    let mut ok = true;
    let mut lines = Vec::with_capacity(outcomes.len() + 1);
    for o in &outcomes {
        ok &= o.passed;
        let tag = if o.passed { "PASS" } else { "FAIL" };
        lines.push(format!("{tag} {}: {}", o.name, o.detail));
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    lines.push(format!("{} properties, {} failed", outcomes.len(), failed));
    (lines, ok)
}
