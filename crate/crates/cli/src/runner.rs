//! Command implementations: dataset assembly, experiment execution, and
//! artifact writing.

use std::path::Path;

use serde::Serialize;
use tme::data::{load_idx, make_gaussian_mixture, SplitDataset};
use tme::estimators::EstimatorSpec;
use tme::noise::{inject, noise_stats, LabeledDataset, NoiseSpec};
use tme::theory::{bundled_task, corollary1_check, lemma1_check, Psi, Verdict};
use tme::trainer::{
    train_ce_baseline, train_rtme, train_smallloss_baseline, RunRecord, TrainOutput,
};

use crate::config::{DatasetKind, Method, RunConfig};
use crate::error::{CliError, Result};
use crate::report::{artifact_path, config_hash, fmt_f64, mean, std_dev, write_json, CsvArtifact};

/// Effective per-run settings once CLI overrides are applied: the run seed
/// replaces both the train seed and the noise seed so seed sweeps draw
/// independent noise realizations on a fixed clean dataset.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveRun {
    pub config: RunConfig,
    pub seed: u64,
}

pub fn resolve(config: &RunConfig, seed_override: Option<u64>) -> EffectiveRun {
    EffectiveRun {
        config: config.clone(),
        seed: seed_override.unwrap_or(config.train.seed),
    }
}

fn clean_pool(config: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let d = &config.dataset;
    match d.kind {
        DatasetKind::Mixture => {
            let pool = make_gaussian_mixture(d.k, d.n, d.dim, d.separation, d.cluster_std, d.seed)?;
            let test = make_gaussian_mixture(
                d.k,
                d.n_test,
                d.dim,
                d.separation,
                d.cluster_std,
                d.seed.wrapping_add(0x5eed),
            )?;
            Ok((pool, test))
        }
        DatasetKind::Idx => {
            let pool = load_idx(
                d.train_images.as_ref().expect("validated"),
                d.train_labels.as_ref().expect("validated"),
            )?;
            let test = load_idx(
                d.test_images.as_ref().expect("validated"),
                d.test_labels.as_ref().expect("validated"),
            )?;
            let pool = match d.limit {
                Some(limit) if limit < pool.len() => pool.subset(&(0..limit).collect::<Vec<_>>()),
                _ => pool,
            };
            let test = match d.test_limit {
                Some(limit) if limit < test.len() => test.subset(&(0..limit).collect::<Vec<_>>()),
                _ => test,
            };
            Ok((pool, test))
        }
    }
}

pub fn build_split(config: &RunConfig, seed: u64) -> Result<SplitDataset> {
    let (pool, test) = clean_pool(config)?;
    let noise = NoiseSpec {
        kind: config.noise.kind,
        tau: config.noise.tau,
        seed,
    };
    Ok(SplitDataset::build(
        pool,
        test,
        &noise,
        config.train.val_fraction,
        seed,
    )?)
}

pub fn run_one(config: &RunConfig, seed: u64) -> Result<TrainOutput> {
    let split = build_split(config, seed)?;
    let cfg = config.train_config(seed);
    let out = match config.train.method {
        Method::Ce => train_ce_baseline(&cfg, &split)?,
        Method::SmallLoss => {
            let tau = config.train.known_tau.unwrap_or(config.noise.tau);
            train_smallloss_baseline(&cfg, tau, config.train.t_k, &split)?
        }
        _ => train_rtme(&cfg, &split)?,
    };
    Ok(out)
}

fn metrics_csv(record: &RunRecord) -> CsvArtifact {
    let mut csv = CsvArtifact::new(
        "metrics-v1",
        &[
            "epoch",
            "mode",
            "sigma",
            "intrinsic",
            "lr",
            "train_acc",
            "clean_fit",
            "noisy_fit",
            "noisy_fit_defined",
            "val_acc",
            "test_acc",
        ],
    );
    for row in &record.rows {
        csv.push_row(vec![
            row.epoch.to_string(),
            row.mode.to_string(),
            fmt_f64(row.sigma),
            row.intrinsic.map(fmt_f64).unwrap_or_default(),
            fmt_f64(row.lr),
            fmt_f64(row.train_acc),
            fmt_f64(row.clean_fit),
            fmt_f64(row.noisy_fit),
            row.noisy_fit_defined.to_string(),
            fmt_f64(row.val_acc),
            fmt_f64(row.test_acc),
        ]);
    }
    csv
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema: &'static str,
    config_hash: String,
    method: Method,
    estimator: String,
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    best_val_acc: f64,
    test_acc_at_best: f64,
    final_test_acc: f64,
    config: &'a RunConfig,
}

pub fn cmd_train(config: &RunConfig, seed_override: Option<u64>, out_dir: &Path) -> Result<()> {
    let run = resolve(config, seed_override);
    let hash = config_hash(&run);
    std::fs::create_dir_all(out_dir)?;

    let output = run_one(&run.config, run.seed)?;
    metrics_csv(&output.record).write(&artifact_path(out_dir, "metrics", &hash, "csv"))?;

    let summary = RunSummary {
        schema: "summary-v1",
        config_hash: hash.clone(),
        method: run.config.train.method,
        estimator: run.config.train.estimator.to_string(),
        seed: run.seed,
        epochs: run.config.train.epochs,
        best_epoch: output.record.best_epoch,
        best_val_acc: output.record.best_val_acc,
        test_acc_at_best: output.record.test_acc_at_best,
        final_test_acc: output.record.rows.last().map(|r| r.test_acc).unwrap_or(0.0),
        config: &run.config,
    };
    write_json(&artifact_path(out_dir, "summary", &hash, "json"), &summary)?;
    println!(
        "train: best epoch {} val {:.4} test {:.4} -> {}",
        output.record.best_epoch,
        output.record.best_val_acc,
        output.record.test_acc_at_best,
        artifact_path(out_dir, "metrics", &hash, "csv").display()
    );
    Ok(())
}

/// Runs `jobs` in the configured worker pool, preserving input order.
fn run_pool<T: Send, F: Fn(usize) -> Result<T> + Sync>(
    workers: usize,
    count: usize,
    job: F,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers) // 0 = rayon default
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..count).into_par_iter().map(&job).collect());
    results.into_iter().collect()
}

pub fn cmd_sweep_r(config: &RunConfig, seed_override: Option<u64>, out_dir: &Path) -> Result<()> {
    let run = resolve(config, seed_override);
    let hash = config_hash(&run);
    std::fs::create_dir_all(out_dir)?;

    let seeds = run.config.sweep.seeds.clone();
    let r_values = run.config.sweep.r_values.clone();
    let mut jobs: Vec<(usize, u64)> = Vec::new();
    for &r in &r_values {
        for &s in &seeds {
            jobs.push((r, s));
        }
    }

    let accs = run_pool(run.config.sweep.workers, jobs.len(), |i| {
        let (r, seed) = jobs[i];
        let mut cfg = run.config.clone();
        cfg.train.method = Method::Rtme;
        cfg.train.r = r;
        let out = run_one(&cfg, seed)?;
        Ok(out.record.test_acc_at_best)
    })?;

    let mut runs = CsvArtifact::new("sweep-r-runs-v1", &["r", "seed", "test_acc_at_best"]);
    for (&(r, seed), &acc) in jobs.iter().zip(&accs) {
        runs.push_row(vec![r.to_string(), seed.to_string(), fmt_f64(acc)]);
    }
    runs.write(&artifact_path(out_dir, "sweep_r_runs", &hash, "csv"))?;

    let mut agg = CsvArtifact::new("sweep-r-agg-v1", &["r", "mean_test_acc", "std_test_acc"]);
    for &r in &r_values {
        let vals: Vec<f64> = jobs
            .iter()
            .zip(&accs)
            .filter(|((jr, _), _)| *jr == r)
            .map(|(_, &a)| a)
            .collect();
        agg.push_row(vec![r.to_string(), fmt_f64(mean(&vals)), fmt_f64(std_dev(&vals))]);
        println!("sweep-r: R={r} mean {:.4} std {:.4}", mean(&vals), std_dev(&vals));
    }
    agg.write(&artifact_path(out_dir, "sweep_r_agg", &hash, "csv"))?;
    Ok(())
}

pub fn cmd_perturb_sigma(
    config: &RunConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<()> {
    let run = resolve(config, seed_override);
    let hash = config_hash(&run);
    std::fs::create_dir_all(out_dir)?;

    let seeds = run.config.sweep.seeds.clone();
    let perturbs = run.config.sweep.sigma_perturbs.clone();
    let variants = [Method::Rtme, Method::Truncated];
    let mut jobs: Vec<(Method, f64, u64)> = Vec::new();
    for &m in &variants {
        for &p in &perturbs {
            for &s in &seeds {
                jobs.push((m, p, s));
            }
        }
    }

    let accs = run_pool(run.config.sweep.workers, jobs.len(), |i| {
        let (method, perturb, seed) = jobs[i];
        let mut cfg = run.config.clone();
        cfg.train.method = method;
        cfg.sigma.perturb = perturb;
        let out = run_one(&cfg, seed)?;
        Ok(out.record.test_acc_at_best)
    })?;

    let mut runs = CsvArtifact::new(
        "perturb-sigma-runs-v1",
        &["variant", "sigma_perturb", "seed", "test_acc_at_best"],
    );
    for (&(m, p, s), &acc) in jobs.iter().zip(&accs) {
        runs.push_row(vec![variant_name(m).into(), fmt_f64(p), s.to_string(), fmt_f64(acc)]);
    }
    runs.write(&artifact_path(out_dir, "perturb_runs", &hash, "csv"))?;

    // Stability gap per variant: mean acc at zero perturbation minus mean at
    // each disturbance.
    let mut agg = CsvArtifact::new(
        "perturb-sigma-agg-v1",
        &["variant", "sigma_perturb", "mean_test_acc", "stability_gap"],
    );
    for &m in &variants {
        let mean_at = |p: f64| {
            let vals: Vec<f64> = jobs
                .iter()
                .zip(&accs)
                .filter(|((jm, jp, _), _)| *jm == m && *jp == p)
                .map(|(_, &a)| a)
                .collect();
            mean(&vals)
        };
        let baseline = mean_at(0.0);
        for &p in &perturbs {
            let acc = mean_at(p);
            agg.push_row(vec![
                variant_name(m).into(),
                fmt_f64(p),
                fmt_f64(acc),
                fmt_f64(baseline - acc),
            ]);
            println!(
                "perturb-sigma: {} dsigma {:+.2} mean {:.4} gap {:+.4}",
                variant_name(m),
                p,
                acc,
                baseline - acc
            );
        }
    }
    agg.write(&artifact_path(out_dir, "perturb_agg", &hash, "csv"))?;
    Ok(())
}

fn variant_name(m: Method) -> &'static str {
    match m {
        Method::Rtme => "rtme",
        Method::Truncated => "truncated_only",
        Method::Original => "original",
        Method::Ce => "ce",
        Method::SmallLoss => "smallloss",
    }
}

pub fn cmd_hist(
    config: &RunConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
    epoch_override: Option<usize>,
) -> Result<()> {
    let mut run = resolve(config, seed_override);
    if let Some(epoch) = epoch_override {
        run.config.hist.epoch = epoch;
    }
    let epoch = run.config.hist.epoch;
    if epoch >= run.config.train.epochs {
        return Err(CliError::Config(format!(
            "hist.epoch {epoch} out of range ({} training epochs)",
            run.config.train.epochs
        )));
    }
    let hash = config_hash(&run);
    std::fs::create_dir_all(out_dir)?;

    let split = build_split(&run.config, run.seed)?;
    let cfg = run.config.train_config(run.seed);
    let output = match run.config.train.method {
        Method::Ce => train_ce_baseline(&cfg, &split)?,
        Method::SmallLoss => {
            let tau = run.config.train.known_tau.unwrap_or(run.config.noise.tau);
            train_smallloss_baseline(&cfg, tau, run.config.train.t_k, &split)?
        }
        _ => train_rtme(&cfg, &split)?,
    };
    let losses = &output.snapshots[epoch];
    let mask = &split.train.clean_mask;

    let bins = run.config.hist.bins.max(1);
    let max_loss = losses.iter().cloned().fold(0.0_f64, f64::max).max(1e-12);
    let width = max_loss / bins as f64;
    let mut clean_counts = vec![0usize; bins];
    let mut noisy_counts = vec![0usize; bins];
    for (&loss, &is_clean) in losses.iter().zip(mask) {
        let idx = ((loss / width) as usize).min(bins - 1);
        if is_clean {
            clean_counts[idx] += 1;
        } else {
            noisy_counts[idx] += 1;
        }
    }

    let mut csv = CsvArtifact::new(
        "hist-v1",
        &["bin_lo", "bin_hi", "clean_count", "mislabeled_count", "clean_share"],
    );
    for b in 0..bins {
        let total = clean_counts[b] + noisy_counts[b];
        let share = if total > 0 {
            clean_counts[b] as f64 / total as f64
        } else {
            0.0
        };
        csv.push_row(vec![
            fmt_f64(b as f64 * width),
            fmt_f64((b + 1) as f64 * width),
            clean_counts[b].to_string(),
            noisy_counts[b].to_string(),
            fmt_f64(share),
        ]);
    }
    let path = artifact_path(out_dir, "hist", &hash, "csv");
    csv.write(&path)?;
    println!(
        "hist: epoch {epoch}, {} examples over {bins} bins -> {}",
        losses.len(),
        path.display()
    );
    Ok(())
}

pub fn cmd_lemma_check(config: &RunConfig, seed_override: Option<u64>, out_dir: &Path) -> Result<()> {
    let run = resolve(config, seed_override);
    let hash = config_hash(&run);
    std::fs::create_dir_all(out_dir)?;

    let section = &run.config.lemma;
    let spec = EstimatorSpec::new(section.estimator, section.epsilon, section.alpha)?;
    let psi = Psi {
        spec,
        sigma: Some(section.sigma),
    };
    let task = bundled_task();
    let report = if section.eta_per_instance.is_empty() {
        lemma1_check(&task, &psi, section.eta)?
    } else {
        corollary1_check(&task, &psi, &section.eta_per_instance)?
    };

    let path = artifact_path(out_dir, "lemma", &hash, "json");
    write_json(&path, &report)?;
    println!(
        "lemma-check: eta {} verdict {:?} (bound {:?}) -> {}",
        report.eta,
        report.verdict,
        report.eta_bound,
        path.display()
    );
    if report.verdict == Verdict::Fail {
        return Err(CliError::Numeric(
            "verified tolerance preconditions held but the clean argmin was not preserved".into(),
        ));
    }
    Ok(())
}

pub fn cmd_noise_stats(config: &RunConfig, seed_override: Option<u64>, out_dir: &Path) -> Result<()> {
    let run = resolve(config, seed_override);
    let hash = config_hash(&run);
    std::fs::create_dir_all(out_dir)?;

    let (pool, _) = clean_pool(&run.config)?;
    let noise = NoiseSpec {
        kind: run.config.noise.kind,
        tau: run.config.noise.tau,
        seed: run.seed,
    };
    let noisy = inject(&pool, &noise)?;
    let stats = noise_stats(&noisy);

    let mut header: Vec<String> = vec!["clean_class".into()];
    header.extend((0..stats.k).map(|c| format!("to_{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvArtifact::new("transition-v1", &header_refs);
    for (c, row) in stats.transition.iter().enumerate() {
        let mut fields = vec![c.to_string()];
        fields.extend(row.iter().map(|&v| fmt_f64(v)));
        csv.push_row(fields);
    }
    csv.write(&artifact_path(out_dir, "transition", &hash, "csv"))?;
    write_json(&artifact_path(out_dir, "noise_summary", &hash, "json"), &stats)?;
    println!(
        "noise-stats: n {} flip rate {:.4} -> {}",
        stats.n,
        stats.flip_rate,
        artifact_path(out_dir, "transition", &hash, "csv").display()
    );
    Ok(())
}
