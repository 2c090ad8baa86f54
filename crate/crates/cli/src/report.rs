use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use share_core::model::{ErrorStats, Evaluation, Variant};

/// One CSV/table row of scores.
#[derive(Clone, Debug)]
pub struct Row {
    pub variant: Option<Variant>,
    pub seed: Option<u64>,
    pub lot_class: &'static str,
    /// 1-based horizon or `all`.
    pub horizon: String,
    pub mae: f64,
    pub rmse: f64,
}

pub fn evaluation_rows(eval: &Evaluation) -> Vec<Row> {
    let mut rows = Vec::new();
    for (class, stats) in [("labeled", &eval.labeled), ("unlabeled", &eval.unlabeled), ("all", &eval.all)] {
        if stats.iter().all(|s| s.count == 0) {
            continue;
        }
        let row = |horizon: String, s: &ErrorStats| Row {
            variant: None,
            seed: None,
            lot_class: class,
            horizon,
            mae: s.mae(),
            rmse: s.rmse(),
        };
        for (h, s) in stats.iter().enumerate() {
            rows.push(row((h + 1).to_string(), s));
        }
        rows.push(row("all".into(), &Evaluation::overall(stats)));
    }
    rows
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let mut text = String::from("variant,seed,lot_class,horizon,mae,rmse\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            r.variant.map(|v| v.to_string()).unwrap_or_default(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.lot_class,
            r.horizon,
            r.mae,
            r.rmse
        );
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Lot classes down, horizons across, `MAE / RMSE` in each cell.
pub fn render_table(rows: &[Row]) -> String {
    let mut horizons: Vec<&str> = Vec::new();
    for r in rows {
        if !horizons.contains(&r.horizon.as_str()) {
            horizons.push(&r.horizon);
        }
    }
    let mut out = format!("{:<10}", "lots");
    for h in &horizons {
        let label = if *h == "all" { "overall".to_string() } else { format!("step {h}") };
        let _ = write!(out, " | {label:>15}");
    }
    out.push('\n');
    let mut classes: Vec<&str> = rows.iter().map(|r| r.lot_class).collect();
    classes.dedup();
    for class in classes {
        let _ = write!(out, "{class:<10}");
        for h in &horizons {
            match rows.iter().find(|r| r.lot_class == class && r.horizon == *h) {
                Some(r) => {
                    let _ = write!(out, " | {:>15}", format!("{:.3} / {:.3}", r.mae, r.rmse));
                }
                None => {
                    let _ = write!(out, " | {:>15}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Variants down, horizons across; median over seeds of `MAE / RMSE`.
pub fn render_ablation(summary: &[(Variant, Vec<Evaluation>)]) -> String {
    let mut out = String::new();
    for class in ["unlabeled", "labeled"] {
        let pick = |e: &Evaluation| -> Vec<ErrorStats> {
            if class == "unlabeled" {
                e.unlabeled.clone()
            } else {
                e.labeled.clone()
            }
        };
        let horizon = summary.first().map_or(0, |(_, evals)| evals[0].horizon());
        let _ = write!(out, "{:<8}", class);
        for h in 0..horizon {
            let _ = write!(out, " | {:>15}", format!("step {}", h + 1));
        }
        let _ = writeln!(out, " | {:>15}", "overall");
        for (variant, evals) in summary {
            let _ = write!(out, "{:<8}", variant.to_string());
            let cell = |stats: Vec<ErrorStats>| {
                let mae = median(stats.iter().map(ErrorStats::mae).collect());
                let rmse = median(stats.iter().map(ErrorStats::rmse).collect());
                format!("{mae:.3} / {rmse:.3}")
            };
            for h in 0..horizon {
                let _ = write!(out, " | {:>15}", cell(evals.iter().map(|e| pick(e)[h]).collect()));
            }
            let _ = writeln!(out, " | {:>15}", cell(evals.iter().map(|e| Evaluation::overall(&pick(e))).collect()));
        }
        out.push('\n');
    }
    out
}
