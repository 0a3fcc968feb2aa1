//! Command-line runner: executes scenario files, validates them, and
//! renders finished result directories as text charts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tandem_core::scenario::{emit_outputs, load_scenario, run, validate, RunOverrides};

#[derive(Parser)]
#[command(
    name = "tandem",
    version,
    about = "Transmission and distribution frequency co-simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its result files.
    Run {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's `output_dir`, or
        /// `<name>_results` next to the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the federation seed (also reseeds load noise).
        #[arg(long)]
        seed: Option<u64>,
        /// Disable AGC dispatch, keeping the rest of the federation as is.
        #[arg(long)]
        no_agc: bool,
        /// Replaces the scenario's stop time, seconds.
        #[arg(long)]
        stop_time: Option<f64>,
    },
    /// Parse a scenario, assemble the federation, and report it without
    /// running.
    Validate { scenario: PathBuf },
    /// Render a finished run's result files as text charts.
    Plot { results_dir: PathBuf },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            seed,
            no_agc,
            stop_time,
        } => cmd_run(&scenario, out, seed, no_agc, stop_time),
        Command::Validate { scenario } => {
            let parsed = load_scenario(&scenario)?;
            print!("{}", validate(&parsed)?);
            Ok(())
        }
        Command::Plot { results_dir } => cmd_plot(&results_dir),
    }
}

fn cmd_run(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    no_agc: bool,
    stop_time: Option<f64>,
) -> Result<()> {
    let scenario = load_scenario(path)?;
    let overrides = RunOverrides {
        seed,
        no_agc,
        stop_time_s: stop_time,
    };
    let results = run(&scenario, &overrides)?;
    let dir = out
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}_results", scenario.name)));
    emit_outputs(&results, &dir)?;

    println!(
        "scenario {} finished: {} s simulated in {:.2} s wall clock",
        results.scenario_name, results.stop_time_s, results.wall_clock_s
    );
    let f = &results.freq_stats;
    println!(
        "frequency_hz  mean={:.6} std={:.6} min={:.6} max={:.6}",
        f.mean, f.std, f.min, f.max
    );
    let a = &results.ace_stats;
    println!(
        "ace_mw        mean={:.4} std={:.4} min={:.4} max={:.4}",
        a.mean, a.std, a.min, a.max
    );
    for (t, what) in &results.events {
        println!("event at {t} s: {what}");
    }
    println!("results written to {}", dir.display());
    Ok(())
}

fn cmd_plot(dir: &Path) -> Result<()> {
    let (_, freq) = read_csv(&dir.join("frequency.csv"))
        .with_context(|| format!("no frequency trace in {}", dir.display()))?;
    let t: Vec<f64> = freq.iter().map(|r| r[0]).collect();
    let f: Vec<f64> = freq.iter().map(|r| r[1]).collect();
    print!("{}", band_chart("frequency, Hz", &t, &f, &f, &f));

    if let Ok((_, bins)) = read_csv(&dir.join("freq_histogram.csv")) {
        print!("{}", histogram_bars(&bins));
    }

    let mut voltage_files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("voltage_") && n.ends_with(".csv"))
        })
        .collect();
    voltage_files.sort();
    for path in voltage_files {
        let (_, rows) = read_csv(&path)?;
        let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mean: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let lo: Vec<f64> = rows.iter().map(|r| r[3]).collect();
        let hi: Vec<f64> = rows.iter().map(|r| r[4]).collect();
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        print!("{}", band_chart(&format!("{name}, pu"), &t, &lo, &hi, &mean));
    }

    if let Ok(summary) = fs::read_to_string(dir.join("summary.txt")) {
        print!("{summary}");
    }
    Ok(())
}

/// Reads a numeric CSV with one header line.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(str::to_string).collect(),
        None => bail!("{} is empty", path.display()),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        match row {
            Ok(r) if r.len() == header.len() => rows.push(r),
            // Non-numeric columns (booleans, labels) are not chartable.
            _ => bail!("{} line {}: not a numeric row", path.display(), i + 2),
        }
    }
    Ok((header, rows))
}

const CHART_COLS: usize = 64;
const CHART_ROWS: usize = 14;

/// Renders a series as a column chart: each time bucket paints the span
/// between its smallest `lo` and largest `hi` with light shade and marks
/// the bucket's mean of `mid` with a full block.
fn band_chart(title: &str, t: &[f64], lo: &[f64], hi: &[f64], mid: &[f64]) -> String {
    if t.is_empty() {
        return format!("{title}: no samples\n");
    }
    let n = t.len();
    let cols = CHART_COLS.min(n);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for i in 0..n {
        y_min = y_min.min(lo[i]);
        y_max = y_max.max(hi[i]);
    }
    if y_max - y_min < 1e-9 {
        let pad = (y_max.abs() * 1e-9).max(5e-10);
        y_min -= pad;
        y_max += pad;
    }
    let to_row = |y: f64| -> usize {
        let frac = (y - y_min) / (y_max - y_min);
        let r = ((1.0 - frac) * (CHART_ROWS - 1) as f64).round();
        (r.max(0.0) as usize).min(CHART_ROWS - 1)
    };

    let mut grid = vec![vec![' '; cols]; CHART_ROWS];
    for c in 0..cols {
        let a = c * n / cols;
        let b = ((c + 1) * n / cols).max(a + 1);
        let mut b_lo = f64::INFINITY;
        let mut b_hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for i in a..b {
            b_lo = b_lo.min(lo[i]);
            b_hi = b_hi.max(hi[i]);
            sum += mid[i];
        }
        let top = to_row(b_hi);
        let bottom = to_row(b_lo);
        for row in grid.iter_mut().take(bottom + 1).skip(top) {
            row[c] = '░';
        }
        grid[to_row(sum / (b - a) as f64)][c] = '█';
    }

    let mut out = format!("\n{title}\n");
    for (r, row) in grid.iter().enumerate() {
        let label = if r == 0 {
            format!("{y_max:.6}")
        } else if r == CHART_ROWS - 1 {
            format!("{y_min:.6}")
        } else {
            String::new()
        };
        out.push_str(&format!(
            "{label:>12} |{}\n",
            row.iter().collect::<String>()
        ));
    }
    out.push_str(&format!(
        "{:>12} +{}\n{:>12}  {:<width$}{:>6}\n",
        "",
        "-".repeat(cols),
        "",
        format!("{} s", t[0]),
        format!("{} s", t[n - 1]),
        width = cols.saturating_sub(6),
    ));
    out
}

/// Renders histogram rows (`bin_lo,bin_hi,count`) as horizontal bars.
fn histogram_bars(bins: &[Vec<f64>]) -> String {
    let mut out = String::from("\nfrequency histogram\n");
    let max = bins.iter().map(|b| b[2]).fold(0.0f64, f64::max).max(1.0);
    for bin in bins {
        let width = ((bin[2] / max) * 40.0).round() as usize;
        out.push_str(&format!(
            "{:>10.4} to {:<10.4} |{} {}\n",
            bin[0],
            bin[1],
            "#".repeat(width),
            bin[2] as u64,
        ));
    }
    out
}
