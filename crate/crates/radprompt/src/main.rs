//! Command-line surface. Each subcommand runs one pipeline stage; exit code 0
//! on success, 1 for validation errors, 2 for runtime (I/O, serialization)
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radprompt::config::RunConfig;
use radprompt::encoders::{class_tokens, load_embeddings, save_embeddings, EmbeddingStore, FrozenTextEncoder};
use radprompt::error::{Error, Result};
use radprompt::metrics::{write_metrics_json, write_roc_csv};
use radprompt::prompt::{classify, load_checkpoint, save_checkpoint, PromptHeadParams};
use radprompt::radiomics::{
    build_manifest, extract_batch, prepare_slice, read_feature_table, write_feature_table,
};
use radprompt::synth::{aligned_dataset, SYNTH_CLASSES};
use radprompt::trainer::{
    evaluate_on_indices, run_cv, stratified_folds, sweep, write_sweep_csv, NormStats, TrainData,
    DEFAULT_SWEEP_GRID,
};
use radprompt::volume::{load_dataset, save_mask, save_volume, BinaryMask, VoxelVolume};

#[derive(Parser)]
#[command(name = "radprompt", version, about = "Radiomics extraction and prompt-head training")]
struct Cli {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract radiomics features from a nodule dataset.
    Extract {
        /// Dataset metadata JSON (volumes, masks, scores, slice ranges).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Resample, crop and write per-nodule middle slices plus consensus masks.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic 3-class dataset (features, embeddings, labels).
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 300)]
        instances: usize,
        #[arg(long, default_value_t = 20)]
        features: usize,
        #[arg(long, default_value_t = 0.005)]
        noise: f64,
    },
    /// Cross-validated training of the prompt head.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on a labeled set.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        metrics_out: PathBuf,
        #[arg(long)]
        roc_out: PathBuf,
        /// Restrict evaluation to this held-out fold (default: all rows).
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Context-token sweep on the first fold.
    Sweep {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return report(e),
    };
    let result = match cli.command {
        Command::Extract { data, out_dir } => cmd_extract(&config, &data, &out_dir),
        Command::Preprocess { data, out_dir } => cmd_preprocess(&data, &out_dir),
        Command::Synth {
            out_dir,
            instances,
            features,
            noise,
        } => cmd_synth(&config, &out_dir, instances, features, noise),
        Command::Train {
            features,
            embeddings,
            labels,
            out_dir,
        } => cmd_train(&config, &features, &embeddings, &labels, &out_dir),
        Command::Evaluate {
            checkpoint,
            features,
            embeddings,
            labels,
            metrics_out,
            roc_out,
            fold,
        } => cmd_evaluate(&config, &checkpoint, &features, &embeddings, &labels, &metrics_out, &roc_out, fold),
        Command::Sweep {
            features,
            embeddings,
            labels,
            out,
        } => cmd_sweep(&config, &features, &embeddings, &labels, &out),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(base.with_seed(cli.seed))
}

fn report(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    let mut source = std::error::Error::source(&e);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
    ExitCode::from(exit_code(&e))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } => 2,
        Error::Nodule { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn cmd_extract(config: &RunConfig, data: &Path, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let records = load_dataset(data)?;
    let manifest = build_manifest(&config.extract);
    let vectors = extract_batch(&records, &config.extract)?;
    manifest.save(&out_dir.join("manifest.json"))?;
    write_feature_table(&manifest, &vectors, &out_dir.join("features.csv"))?;
    write_labels_csv(
        &records
            .iter()
            .map(|r| (r.nodule_id.clone(), r.label.index()))
            .collect::<Vec<_>>(),
        &out_dir.join("labels.csv"),
    )?;
    println!("extracted {} nodules x {} features", records.len(), manifest.len());
    Ok(())
}

fn cmd_preprocess(data: &Path, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let records = load_dataset(data)?;
    for record in &records {
        let prepared = prepare_slice(record)?;
        let rows = prepared.crop.rows;
        let cols = prepared.crop.cols;
        let slice = VoxelVolume::new(
            [1, rows, cols],
            [1.0, 1.0, 1.0],
            [prepared.middle_slice_index as f64, 0.0, 0.0],
            prepared.crop.data.iter().map(|&v| v as f32).collect(),
        )
        .map_err(|e| e.for_nodule(&record.nodule_id))?;
        let mask = BinaryMask::new([1, rows, cols], prepared.crop_roi.data.clone())
            .map_err(|e| e.for_nodule(&record.nodule_id))?;
        save_volume(&slice, &out_dir.join(format!("{}_slice.json", record.nodule_id)))?;
        save_mask(&mask, &out_dir.join(format!("{}_mask.json", record.nodule_id)))?;
    }
    println!("preprocessed {} nodules", records.len());
    Ok(())
}

fn synth_feature_names(n_r: usize) -> Vec<String> {
    (0..n_r).map(|j| format!("f{j:03}")).collect()
}

fn cmd_synth(config: &RunConfig, out_dir: &Path, n: usize, n_r: usize, noise: f64) -> Result<()> {
    ensure_dir(out_dir)?;
    let seed = config.train.seed;
    let enc = &config.encoder;
    let hidden = if config.train.hidden > 0 {
        config.train.hidden
    } else {
        radprompt::prompt::default_hidden(n_r)
    };
    let params = PromptHeadParams::init(
        seed,
        n_r,
        enc.token_dim,
        config.train.context_tokens,
        hidden,
        config.train.tau,
    )?;
    let encoder = FrozenTextEncoder::new(seed, enc.token_dim, enc.hidden_dim, enc.embed_dim);
    let tokens = class_tokens(seed, SYNTH_CLASSES, enc.token_dim);
    let data = aligned_dataset(&params, &encoder, &tokens, n, n_r, noise, seed)?;

    let names = synth_feature_names(n_r);
    write_plain_feature_csv(&names, &data, &out_dir.join("features.csv"))?;
    let store = EmbeddingStore {
        d_e: enc.embed_dim,
        d_t: enc.token_dim,
        entries: data
            .ids
            .iter()
            .zip(&data.embeddings)
            .map(|(id, e)| (id.clone(), vec![e.clone()]))
            .collect(),
        class_tokens: tokens,
    };
    save_embeddings(&store, &out_dir.join("embeddings.json"))?;
    let labels: Vec<(String, usize)> = data
        .ids
        .iter()
        .cloned()
        .zip(data.labels.iter().copied())
        .collect();
    write_labels_csv(&labels, &out_dir.join("labels.csv"))?;
    config.save(&out_dir.join("config.json"))?;
    println!("wrote {} synthetic instances to {}", n, out_dir.display());
    Ok(())
}

fn write_plain_feature_csv(names: &[String], data: &TrainData, path: &Path) -> Result<()> {
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]));
    let mut out = String::from("nodule_id");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in order {
        out.push_str(&data.ids[i]);
        for v in &data.features[i] {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    radprompt::volume::write_bytes(path, out.as_bytes())
}

fn write_labels_csv(labels: &[(String, usize)], path: &Path) -> Result<()> {
    let mut sorted: Vec<&(String, usize)> = labels.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::from("nodule_id,label\n");
    for (id, label) in sorted {
        out.push_str(&format!("{id},{label}\n"));
    }
    radprompt::volume::write_bytes(path, out.as_bytes())
}

fn read_labels_csv(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = String::from_utf8(radprompt::volume::read_bytes(path)?)
        .map_err(|_| Error::InvalidArgument(format!("{}: not utf-8", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("bad label row '{line}'")))?;
        let label: usize = label
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad label for '{id}'")))?;
        out.push((id.to_string(), label));
    }
    Ok(out)
}

/// Joins the three on-disk tables by nodule_id (feature-table order).
fn load_train_data(features: &Path, embeddings: &Path, labels: &Path) -> Result<(TrainData, EmbeddingStore)> {
    let (_, vectors) = read_feature_table(features)?;
    let store = load_embeddings(embeddings)?;
    let label_rows = read_labels_csv(labels)?;
    let mut data = TrainData {
        ids: Vec::with_capacity(vectors.len()),
        labels: Vec::with_capacity(vectors.len()),
        features: Vec::with_capacity(vectors.len()),
        embeddings: Vec::with_capacity(vectors.len()),
    };
    for v in vectors {
        let label = label_rows
            .iter()
            .find(|(id, _)| *id == v.nodule_id)
            .map(|(_, l)| *l)
            .ok_or_else(|| Error::IdMisalignment(v.nodule_id.clone(), "labels csv".into()))?;
        let pooled = store.pooled(&v.nodule_id)?;
        data.ids.push(v.nodule_id);
        data.labels.push(label);
        data.features.push(v.values);
        data.embeddings.push(pooled);
    }
    Ok((data, store))
}

fn encoder_for(config: &RunConfig, store: &EmbeddingStore) -> FrozenTextEncoder {
    FrozenTextEncoder::new(
        config.train.seed,
        store.d_t,
        config.encoder.hidden_dim,
        store.d_e,
    )
}

fn cmd_train(config: &RunConfig, features: &Path, embeddings: &Path, labels: &Path, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let (data, store) = load_train_data(features, embeddings, labels)?;
    let mut train_cfg = config.train.clone();
    train_cfg.token_dim = store.d_t;
    let encoder = encoder_for(config, &store);
    let outcome = run_cv(&data, &encoder, &store.class_tokens, &train_cfg)?;
    for fold in &outcome.folds {
        save_checkpoint(
            &fold.params,
            &fold.norm.mean,
            &fold.norm.std,
            train_cfg.seed,
            &out_dir.join(format!("checkpoint_fold{}.json", fold.fold)),
        )?;
        write_metrics_json(
            &fold.metrics,
            &out_dir.join(format!("metrics_fold{}.json", fold.fold)),
        )?;
    }
    radprompt::volume::write_json(&out_dir.join("cv_summary.json"), &outcome.aggregate)?;
    println!(
        "cv accuracy {:.4} +/- {:.4} over {} folds",
        outcome.aggregate.mean_accuracy,
        outcome.aggregate.std_accuracy,
        outcome.folds.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    config: &RunConfig,
    checkpoint: &Path,
    features: &Path,
    embeddings: &Path,
    labels: &Path,
    metrics_out: &Path,
    roc_out: &Path,
    fold: Option<usize>,
) -> Result<()> {
    let (params, mean, std, seed) = load_checkpoint(checkpoint)?;
    let (data, store) = load_train_data(features, embeddings, labels)?;
    let encoder = FrozenTextEncoder::new(seed, store.d_t, config.encoder.hidden_dim, store.d_e);
    let norm = NormStats { mean, std };
    let indices: Vec<usize> = match fold {
        Some(f) => {
            let folds = stratified_folds(&data.labels, config.train.folds, seed)?;
            folds
                .get(f)
                .ok_or_else(|| Error::InvalidArgument(format!("fold {f} out of range")))?
                .clone()
        }
        None => (0..data.n()).collect(),
    };
    let bundle = evaluate_on_indices(&data, &indices, &params, &norm, &encoder, &store.class_tokens)?;
    write_metrics_json(&bundle, metrics_out)?;
    write_roc_csv(&bundle, roc_out)?;
    println!("accuracy {:.4} on {} instances", bundle.accuracy, indices.len());
    Ok(())
}

fn cmd_sweep(config: &RunConfig, features: &Path, embeddings: &Path, labels: &Path, out: &Path) -> Result<()> {
    let (data, store) = load_train_data(features, embeddings, labels)?;
    let mut train_cfg = config.train.clone();
    train_cfg.token_dim = store.d_t;
    let encoder = encoder_for(config, &store);
    let rows = sweep(&data, &encoder, &store.class_tokens, &train_cfg, &DEFAULT_SWEEP_GRID)?;
    write_sweep_csv(&rows, out)?;
    for row in &rows {
        println!("M={:<3} accuracy {:.4}", row.context_tokens, row.accuracy);
    }
    Ok(())
}

fn check(name: &str, ok: bool) -> Result<()> {
    if ok {
        println!("ok {name}");
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("selftest failed: {name}")))
    }
}

fn cmd_selftest() -> Result<()> {
    use radprompt::prompt::{loss_and_grads, BatchInstance};
    use radprompt::rng::SplitMix64;
    use radprompt::trainer::cosine_lr;

    // probability normalization over random instances
    let params = PromptHeadParams::init(7, 10, 8, 4, 2, 0.07)?;
    let encoder = FrozenTextEncoder::new(7, 8, 12, 6);
    let tokens = class_tokens(7, 3, 8);
    let mut rng = SplitMix64::new(99);
    let mut max_dev: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
        let r: Vec<f64> = (0..10).map(|_| rng.next_gaussian()).collect();
        let out = classify(&params, &x, &encoder, &tokens, &r)?;
        let sum: f64 = out.probabilities.iter().sum();
        max_dev = max_dev.max((sum - 1.0).abs());
    }
    check("probabilities sum to 1 within 1e-12", max_dev < 1e-12)?;

    // gradient check on one coordinate of each parameter group
    let mut rng = SplitMix64::new(5);
    let x: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
    let r: Vec<f64> = (0..10).map(|_| rng.next_gaussian()).collect();
    let batch = [BatchInstance {
        image_embedding: &x,
        radiomics: &r,
        label: 1,
    }];
    let (_, grads) = loss_and_grads(&params, &encoder, &tokens, &batch)?;
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for (group, idx) in [("context", 0usize), ("w1", 3), ("b1", 1), ("w2", 5), ("b2", 2)] {
        let mut lo = params.clone();
        let mut hi = params.clone();
        let (analytic, lo_slot, hi_slot) = match group {
            "context" => (grads.context[0][idx], &mut lo.context[0][idx], &mut hi.context[0][idx]),
            "w1" => (grads.w1[idx], &mut lo.w1[idx], &mut hi.w1[idx]),
            "b1" => (grads.b1[idx], &mut lo.b1[idx], &mut hi.b1[idx]),
            "w2" => (grads.w2[idx], &mut lo.w2[idx], &mut hi.w2[idx]),
            _ => (grads.b2[idx], &mut lo.b2[idx], &mut hi.b2[idx]),
        };
        *lo_slot -= eps;
        *hi_slot += eps;
        let (l_lo, _) = loss_and_grads(&lo, &encoder, &tokens, &batch)?;
        let (l_hi, _) = loss_and_grads(&hi, &encoder, &tokens, &batch)?;
        let numeric = (l_hi - l_lo) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    check("analytic gradients match finite differences", worst < 1e-5)?;

    // texture matrix sanity: GLCM of a constant image is a single diagonal cell
    let grid = radprompt::grid::Grid2::new(3, 3, vec![4.0; 9])?;
    let roi = radprompt::grid::Mask2::new(3, 3, vec![true; 9])?;
    let d = radprompt::discretize::discretize_fixed_width(&grid, &roi, 25.0)?;
    let glcm = radprompt::texture::glcm(&d, &radprompt::texture::GLCM_OFFSETS, true)?;
    let total: f64 = glcm.data.iter().sum();
    check(
        "constant-image GLCM concentrates on the diagonal",
        glcm.n_levels == 1 && total > 0.0 && glcm.data[0] == total,
    )?;

    // schedule endpoints
    let ok = (cosine_lr(0, 10, 1e-4)? - 1e-4).abs() < 1e-18
        && (cosine_lr(5, 10, 1e-4)? - 5e-5).abs() < 1e-18
        && cosine_lr(10, 10, 1e-4)?.abs() < 1e-19;
    check("cosine schedule endpoints", ok)?;
    println!("selftest passed");
    Ok(())
}
