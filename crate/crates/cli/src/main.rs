//! `share`: generate synthetic cities, train and evaluate SHARE models.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use share_core::data::io::{city_spec_from_kv, read_dataset, series_spec_from_kv, write_dataset};
use share_core::data::{generate_city, generate_observations, Split};
use share_core::kv::KeyValues;
use share_core::model::checkpoint::{load_checkpoint, save_checkpoint};
use share_core::model::{
    evaluate, gradient_check, predict_window, render_metrics, ModelParams, Variant, CHECK_STEP, GRADIENT_FLOOR,
};
use share_core::pipeline::{fit, prepare, toy_problem, RunConfig};

use config::{load_layers, Layers};
use report::{evaluation_rows, render_table, write_csv};

#[derive(Parser)]
#[command(name = "share", version, about = "Semi-supervised parking availability prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Key-value config file (`key = value`, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set run.hidden=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic city, its PA series and a manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Seeds the city layout, sensors and series.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lots: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        labeled_fraction: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fit one model and write a checkpoint plus its metrics log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a checkpoint per horizon and lot class.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, validation or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Where to write the CSV report; defaults to `<checkpoint>/eval_<split>.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Emit τ-step forecasts for every lot as CSV.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// First input step of the window; defaults to the last full window.
        #[arg(long)]
        start: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backpropagated and finite-difference gradients on a toy city.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// raw or normalized latent pooling.
        #[arg(long, default_value = "normalized")]
        latent_scaling: String,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Central-difference step.
        #[arg(long, default_value_t = CHECK_STEP)]
        step: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train every variant on one dataset and compare test errors.
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variants.
        #[arg(long, default_value = "share,cagnn,cxtgnn,gru")]
        variants: String,
        /// Number of seeds per variant, starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Shortcuts for the most common `run.*` keys.
#[derive(Args, Clone, Default)]
struct RunFlags {
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    windows_per_epoch: Option<usize>,
}

impl RunFlags {
    fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        if let Some(v) = &self.variant {
            kv.set("run.variant", v);
        }
        if let Some(v) = self.epochs {
            kv.set("run.epochs", v);
        }
        if let Some(v) = self.lr {
            kv.set("run.lr", v);
        }
        if let Some(v) = self.patience {
            kv.set("run.patience", v);
        }
        if let Some(v) = self.seed {
            kv.set("run.seed", v);
        }
        if let Some(v) = self.windows_per_epoch {
            kv.set("run.windows_per_epoch", v);
        }
        kv
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { out, seed, lots, days, labeled_fraction, noise, cfg } => {
            let mut flags = KeyValues::new();
            if let Some(s) = seed {
                flags.set("city.seed", s);
                flags.set("series.seed", s);
            }
            if let Some(n) = lots {
                flags.set("city.lots", n);
            }
            if let Some(d) = days {
                flags.set("series.steps", d * share_core::data::STEPS_PER_DAY);
            }
            if let Some(f) = labeled_fraction {
                flags.set("city.labeled_fraction", f);
            }
            if let Some(v) = noise {
                flags.set("series.noise", v);
            }
            let layers = load_layers(&cfg, &flags)?;
            gen_data(&out, &layers)
        }
        Command::Train { data, out, run, cfg } => {
            let layers = load_layers(&cfg, &run.to_kv())?;
            train_cmd(&data, &out, &layers)
        }
        Command::Evaluate { data, checkpoint, split, stride, csv } => {
            evaluate_cmd(&data, &checkpoint, &split, stride, csv)
        }
        Command::Predict { data, checkpoint, start, out } => predict_cmd(&data, &checkpoint, start, out),
        Command::GradCheck { seed, latent_scaling, tolerance, step, csv } => {
            grad_check_cmd(seed, &latent_scaling, tolerance, step, csv)
        }
        Command::Ablation { data, out, variants, seeds, run, cfg } => {
            let layers = load_layers(&cfg, &run.to_kv())?;
            ablation_cmd(&data, &out, &variants, seeds, &layers)
        }
    }
}

fn gen_data(out: &Path, layers: &Layers) -> Result<()> {
    let city_spec = city_spec_from_kv(&layers.merged)?;
    let series_spec = series_spec_from_kv(&layers.merged)?;
    let city = generate_city(&city_spec)?;
    let obs = generate_observations(&city, &series_spec)?;
    let mut extra = KeyValues::new();
    layers.run.to_kv(&mut extra);
    write_dataset(out, &city, &series_spec, &obs, &extra)
        .with_context(|| format!("writing dataset to {}", out.display()))?;
    println!(
        "wrote {} lots ({} labeled) x {} steps to {}",
        city.lot_count(),
        city.labeled_ids().len(),
        obs.steps(),
        out.display()
    );
    Ok(())
}

fn load_data(
    dir: &Path,
) -> Result<(share_core::data::City, share_core::data::SeriesSpec, share_core::data::Observations)> {
    read_dataset(dir).with_context(|| format!("reading dataset from {}", dir.display()))
}

fn provenance(
    cfg: &RunConfig,
    data: &Path,
    city: &share_core::data::City,
    series: &share_core::data::SeriesSpec,
) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("data.dir", data.display());
    share_core::data::io::city_spec_to_kv(&city.spec, &mut kv);
    share_core::data::io::series_spec_to_kv(series, &mut kv);
    cfg.to_kv(&mut kv);
    kv
}

fn train_cmd(data: &Path, out: &Path, layers: &Layers) -> Result<()> {
    let (city, series, obs) = load_data(data)?;
    let cfg = &layers.run;
    let prepared = prepare(&city, &obs, cfg)?;
    let outcome = fit(&prepared, cfg)?;
    save_checkpoint(out, &outcome.params, &provenance(cfg, data, &city, &series))
        .with_context(|| format!("writing checkpoint to {}", out.display()))?;
    fs::write(out.join("metrics.csv"), render_metrics(&outcome.report.records))?;
    println!(
        "{} trained {} epochs (best {}), checkpoint in {}",
        cfg.variant,
        outcome.report.epochs_run,
        outcome.report.best_epoch,
        out.display()
    );
    match &outcome.test {
        Some(test) => {
            let rows = evaluation_rows(test);
            write_csv(&out.join("test_report.csv"), &rows)?;
            print!("{}", render_table(&rows));
        }
        None => println!("no test windows; skipped the test report"),
    }
    Ok(())
}

fn restore(data: &Path, checkpoint: &Path) -> Result<(ModelParams, share_core::pipeline::Prepared, RunConfig)> {
    let (params, kv) =
        load_checkpoint(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let mut cfg = RunConfig::default();
    cfg.apply_kv(&kv)?;
    let (city, _, obs) = load_data(data)?;
    if city.lot_count() != params.config.lots {
        bail!("checkpoint expects {} lots but {} has {}", params.config.lots, data.display(), city.lot_count());
    }
    let prepared = prepare(&city, &obs, &cfg)?;
    Ok((params, prepared, cfg))
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "validation" | "val" => Split::Validation,
        "test" => Split::Test,
        other => bail!("unknown split `{other}` (train, validation, test)"),
    })
}

fn evaluate_cmd(data: &Path, checkpoint: &Path, split: &str, stride: usize, csv: Option<PathBuf>) -> Result<()> {
    let split = parse_split(split)?;
    if stride == 0 {
        bail!("--stride must be positive");
    }
    let (params, prepared, _) = restore(data, checkpoint)?;
    let eval = evaluate(&params, &prepared.dataset, &prepared.graph, split, stride)?;
    let rows = evaluation_rows(&eval);
    let path = csv.unwrap_or_else(|| checkpoint.join(format!("eval_{}.csv", split.name())));
    write_csv(&path, &rows)?;
    println!("{} split, {} windows", split.name(), eval.windows);
    print!("{}", render_table(&rows));
    Ok(())
}

fn predict_cmd(data: &Path, checkpoint: &Path, start: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let (params, prepared, cfg) = restore(data, checkpoint)?;
    let ds = &prepared.dataset;
    let steps = ds.steps.len();
    let span = cfg.window + cfg.horizon;
    let start = start.unwrap_or(steps - span);
    if start + span > steps {
        bail!("window starting at {start} needs {span} steps but the series has {steps}");
    }
    let sample = ds.sample(start);
    let pred = predict_window(&params, &sample, &prepared.graph, &ds.capacities)?;
    let mut text = String::from("lot,labeled,horizon,step,predicted,actual\n");
    for (lot, row) in pred.iter().enumerate() {
        for (h, p) in row.iter().enumerate() {
            let step = start + cfg.window + h;
            text.push_str(&format!(
                "{lot},{},{},{step},{p:.4},{}\n",
                u8::from(ds.labeled[lot]),
                h + 1,
                ds.pa[step][lot]
            ));
        }
    }
    match out {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn grad_check_cmd(seed: u64, scaling: &str, tolerance: f64, step: f64, csv: Option<PathBuf>) -> Result<()> {
    let (prepared, mut cfg) = toy_problem(seed)?;
    cfg.latent_scaling = scaling.parse()?;
    let model_cfg = cfg.model_config(prepared.city.lot_count(), prepared.city.spec.feature_width);
    let params = ModelParams::init(model_cfg, seed)?;
    let sample = prepared.dataset.sample(0);
    let groups = gradient_check(&params, &sample, &prepared.graph, &prepared.dataset.capacities, step)?;
    let mut text = String::from("group,coordinates,max_relative_error,reduced_step,at_kink,pass\n");
    println!(
        "toy city: 6 lots, T={}, d={}, K=2, p={}, floor {GRADIENT_FLOOR:e}, step {step:e}",
        cfg.window, cfg.hidden, cfg.bins
    );
    println!("{:<8} {:>6} {:>14} {:>8} {:>5}  result", "group", "coords", "max rel err", "reduced", "kink");
    let mut ok = true;
    for g in &groups {
        let pass = g.max_relative_error < tolerance;
        ok &= pass;
        println!(
            "{:<8} {:>6} {:>14.3e} {:>8} {:>5}  {}",
            g.group,
            g.coordinates,
            g.max_relative_error,
            g.reduced_step,
            g.at_kink,
            if pass { "ok" } else { "FAIL" }
        );
        text.push_str(&format!(
            "{},{},{:e},{},{},{}\n",
            g.group, g.coordinates, g.max_relative_error, g.reduced_step, g.at_kink, pass
        ));
    }
    if let Some(path) = csv {
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if !ok {
        bail!("gradient check exceeded tolerance {tolerance:e}");
    }
    Ok(())
}

fn ablation_cmd(data: &Path, out: &Path, variants: &str, seeds: u64, layers: &Layers) -> Result<()> {
    let variants: Vec<Variant> = variants.split(',').map(|v| v.trim().parse()).collect::<share_core::Result<_>>()?;
    if variants.is_empty() || seeds == 0 {
        bail!("need at least one variant and one seed");
    }
    let (city, series, obs) = load_data(data)?;
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &variant in &variants {
        let mut per_seed = Vec::new();
        for offset in 0..seeds {
            let mut cfg = layers.run.clone();
            cfg.variant = variant;
            cfg.seed = layers.run.seed + offset;
            let prepared = prepare(&city, &obs, &cfg)?;
            let outcome = fit(&prepared, &cfg)?;
            let Some(test) = outcome.test else {
                bail!("the split fractions leave no test windows to compare");
            };
            let dir = out.join(format!("{variant}_seed{}", cfg.seed));
            save_checkpoint(&dir, &outcome.params, &provenance(&cfg, data, &city, &series))?;
            fs::write(dir.join("metrics.csv"), render_metrics(&outcome.report.records))?;
            for mut r in evaluation_rows(&test) {
                r.variant = Some(variant);
                r.seed = Some(cfg.seed);
                rows.push(r);
            }
            per_seed.push(test);
            eprintln!("{variant} seed {} done", cfg.seed);
        }
        summary.push((variant, per_seed));
    }
    write_csv(&out.join("ablation.csv"), &rows)?;
    print!("{}", report::render_ablation(&summary));
    Ok(())
}
