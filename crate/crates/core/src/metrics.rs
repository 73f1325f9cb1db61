//! Metrics log and result artifacts: append-only CSV rows, multi-seed SVG
//! line plots with a standard-deviation band, and SVG maze snapshots of
//! proposed curriculum goals over the explored buffer.
//!
//! Floats are serialized with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every value bit-exactly. Periodic fields that
//! were not sampled this iteration serialize as empty cells, never as zero.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::envs::MazeSpec;
use crate::error::{FrontierError, Result};
use crate::GoalPoint;

/// The stable CSV schema; `verify` asserts this exact header string.
pub const CSV_HEADER: &str = "iter,steps,curr_dist,success,mean_reward,clf_loss,critic_loss,actor_loss,alpha";

/// One metrics row per training iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub iter: u64,
    pub steps: u64,
    pub curr_dist: Option<f64>,
    pub success: Option<f64>,
    pub mean_reward: Option<f64>,
    pub clf_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn parse_opt(field: &str, row: usize, col: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| FrontierError::Metrics(format!("row {row}: bad float `{field}` in column {col}")))
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.steps,
            fmt_opt(self.curr_dist),
            fmt_opt(self.success),
            fmt_opt(self.mean_reward),
            fmt_opt(self.clf_loss),
            fmt_opt(self.critic_loss),
            fmt_opt(self.actor_loss),
            fmt_opt(self.alpha)
        )
    }

    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "iter" => Some(self.iter as f64),
            "steps" => Some(self.steps as f64),
            "curr_dist" => self.curr_dist,
            "success" => self.success,
            "mean_reward" => self.mean_reward,
            "clf_loss" => self.clf_loss,
            "critic_loss" => self.critic_loss,
            "actor_loss" => self.actor_loss,
            "alpha" => self.alpha,
            _ => None,
        }
    }
}

/// Append-only CSV writer; the header is written exactly once per file.
pub struct MetricsWriter {
    file: std::io::BufWriter<std::fs::File>,
}

impl MetricsWriter {
    /// Creates or re-opens `path` for appending. A nonempty existing file
    /// must carry the current schema header.
    pub fn open(path: &Path) -> Result<MetricsWriter> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let existing = std::fs::read_to_string(path).unwrap_or_default();
        let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        if existing.is_empty() {
            writeln!(file, "{CSV_HEADER}")?;
        } else {
            let found = existing.lines().next().unwrap_or("");
            if found != CSV_HEADER {
                return Err(FrontierError::Metrics(format!(
                    "schema mismatch: file has `{found}`, this build writes `{CSV_HEADER}`"
                )));
            }
        }
        Ok(MetricsWriter { file: std::io::BufWriter::new(file) })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_csv_line())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = MetricsWriter::open(path)?;
    for row in rows {
        w.append(row)?;
    }
    Ok(())
}

/// Reads a metrics CSV. An empty file yields an empty list; a header from a
/// different schema version fails, naming both headers.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(FrontierError::Metrics(format!("no such metrics file: {}", path.display())))
        }
        Err(e) => return Err(e.into()),
    };
    let mut lines = std::io::BufReader::new(file).lines();
    let header = match lines.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    if header != CSV_HEADER {
        return Err(FrontierError::Metrics(format!(
            "schema mismatch in {}: file has `{header}`, this build reads `{CSV_HEADER}`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(FrontierError::Metrics(format!("row {idx}: expected 9 fields, got {}", fields.len())));
        }
        rows.push(MetricsRow {
            iter: fields[0]
                .parse()
                .map_err(|_| FrontierError::Metrics(format!("row {idx}: bad iter `{}`", fields[0])))?,
            steps: fields[1]
                .parse()
                .map_err(|_| FrontierError::Metrics(format!("row {idx}: bad steps `{}`", fields[1])))?,
            curr_dist: parse_opt(fields[2], idx, "curr_dist")?,
            success: parse_opt(fields[3], idx, "success")?,
            mean_reward: parse_opt(fields[4], idx, "mean_reward")?,
            clf_loss: parse_opt(fields[5], idx, "clf_loss")?,
            critic_loss: parse_opt(fields[6], idx, "critic_loss")?,
            actor_loss: parse_opt(fields[7], idx, "actor_loss")?,
            alpha: parse_opt(fields[8], idx, "alpha")?,
        });
    }
    Ok(rows)
}

/// What to plot: one column from several per-seed CSVs of the same run
/// configuration, smoothed, with a +-1 standard-deviation band across seeds.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub csv_paths: Vec<PathBuf>,
    pub column: String,
    pub smoothing_window: usize,
    pub out_svg: PathBuf,
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

fn trailing_mean(series: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return series.to_vec();
    }
    series
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = i.saturating_sub(window - 1);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Renders the plot. Inputs are never mutated; identical inputs produce
/// identical SVG bytes.
pub fn render_plot(spec: &PlotSpec) -> Result<()> {
    if spec.csv_paths.is_empty() {
        return Err(FrontierError::Metrics("plot needs at least one CSV".into()));
    }
    let mut per_seed: Vec<Vec<(u64, f64)>> = Vec::new();
    for path in &spec.csv_paths {
        let rows = read_metrics(path)?;
        if rows.is_empty() {
            return Err(FrontierError::Metrics(format!("{} has no data rows", path.display())));
        }
        if rows.iter().all(|r| r.column(&spec.column).is_none()) {
            return Err(FrontierError::Metrics(format!(
                "column `{}` is empty in {} (known columns: {CSV_HEADER})",
                spec.column,
                path.display()
            )));
        }
        per_seed.push(
            rows.iter()
                .filter_map(|r| r.column(&spec.column).map(|v| (r.iter, v)))
                .collect(),
        );
    }

    // Align seeds on iterations where every seed has a value.
    let mut common: Vec<u64> = per_seed[0].iter().map(|&(i, _)| i).collect();
    for seed in &per_seed[1..] {
        let set: std::collections::BTreeSet<u64> = seed.iter().map(|&(i, _)| i).collect();
        common.retain(|i| set.contains(i));
    }
    if common.is_empty() {
        return Err(FrontierError::Metrics("no common iterations across seeds".into()));
    }
    let mut mean = Vec::with_capacity(common.len());
    let mut std = Vec::with_capacity(common.len());
    for &it in &common {
        let vals: Vec<f64> = per_seed
            .iter()
            .map(|s| s.iter().find(|&&(i, _)| i == it).expect("aligned").1)
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64
        } else {
            0.0
        };
        mean.push(m);
        std.push(var.sqrt());
    }
    let mean = trailing_mean(&mean, spec.smoothing_window);
    let std = trailing_mean(&std, spec.smoothing_window);

    let x_min = common[0] as f64;
    let x_max = common[common.len() - 1] as f64;
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (m, s) in mean.iter().zip(std.iter()) {
        y_min = y_min.min(m - s);
        y_max = y_max.max(m + s);
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let x_span = (x_max - x_min).max(1.0);
    let sx = |x: f64| MARGIN_L + (x - x_min) / x_span * (PLOT_W - MARGIN_L - MARGIN_R);
    let sy = |y: f64| PLOT_H - MARGIN_B - (y - y_min) / (y_max - y_min) * (PLOT_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>");

    // +-1 std band.
    let mut band = String::new();
    for (k, &it) in common.iter().enumerate() {
        let _ = write!(band, "{:.2},{:.2} ", sx(it as f64), sy(mean[k] + std[k]));
    }
    for (k, &it) in common.iter().enumerate().rev() {
        let _ = write!(band, "{:.2},{:.2} ", sx(it as f64), sy(mean[k] - std[k]));
    }
    let _ = writeln!(svg, "<polygon points=\"{}\" fill=\"#1f77b4\" opacity=\"0.2\"/>", band.trim_end());

    let mut line = String::new();
    for (k, &it) in common.iter().enumerate() {
        let _ = write!(line, "{:.2},{:.2} ", sx(it as f64), sy(mean[k]));
    }
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
        line.trim_end()
    );

    // Axes with min/max ticks.
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        PLOT_H - MARGIN_B,
        PLOT_W - MARGIN_R,
        PLOT_H - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.2}\" stroke=\"black\"/>",
        PLOT_H - MARGIN_B
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
        (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
        PLOT_H - 10.0,
        "iteration"
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
        spec.column
    );
    for (v, x, y, anchor) in [
        (x_min, sx(x_min), PLOT_H - MARGIN_B + 14.0, "middle"),
        (x_max, sx(x_max), PLOT_H - MARGIN_B + 14.0, "middle"),
    ] {
        let _ = writeln!(svg, "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"10\" text-anchor=\"{anchor}\">{v:.0}</text>");
    }
    for v in [y_min, y_max] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{v:.3}</text>",
            MARGIN_L - 4.0,
            sy(v) + 3.0
        );
    }
    let _ = writeln!(svg, "</svg>");

    if let Some(dir) = spec.out_svg.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&spec.out_svg, svg)?;
    Ok(())
}

/// Linear blend between early (blue) and late (red) scatter colors, the
/// color-by-training-progress convention of the curriculum snapshots.
fn progress_color(frac: f64) -> String {
    let f = frac.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(31.0, 214.0), lerp(119.0, 39.0), lerp(180.0, 40.0))
}

/// Renders maze walls, the explored buffer scatter (colored by training
/// progress), proposed curriculum goals (diamonds) and desired outcomes
/// (stars) into an SVG file. Deterministic bytes for fixed inputs.
pub fn render_snapshot(
    spec: &MazeSpec,
    buffer_points: &[GoalPoint],
    proposed: &[GoalPoint],
    desired: &[GoalPoint],
    path: &Path,
) -> Result<()> {
    let size = 480.0;
    let pad = 16.0;
    let hw = spec.half_width();
    let hh = spec.half_height();
    let scale = ((size - 2.0 * pad) / (2.0 * hw)).min((size - 2.0 * pad) / (2.0 * hh));
    let px = |p: GoalPoint| -> (f64, f64) {
        (size / 2.0 + p[0] * scale, size / 2.0 - p[1] * scale)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
    let (ox, oy) = px([-hw, hh]);
    let _ = writeln!(
        svg,
        "<rect x=\"{ox:.2}\" y=\"{oy:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444\"/>",
        2.0 * hw * scale,
        2.0 * hh * scale
    );
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            if spec.is_wall_cell(col, row) {
                let center = spec.cell_center(col, row);
                let (cx, cy) = px([center[0] - spec.cell_size / 2.0, center[1] + spec.cell_size / 2.0]);
                let _ = writeln!(
                    svg,
                    "<rect x=\"{cx:.2}\" y=\"{cy:.2}\" width=\"{w:.2}\" height=\"{w:.2}\" fill=\"#555\"/>",
                    w = spec.cell_size * scale
                );
            }
        }
    }
    let denom = (buffer_points.len().max(2) - 1) as f64;
    for (k, &p) in buffer_points.iter().enumerate() {
        let (cx, cy) = px(p);
        let _ = writeln!(
            svg,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"1.6\" fill=\"{}\" opacity=\"0.6\"/>",
            progress_color(k as f64 / denom)
        );
    }
    for &p in proposed {
        let (cx, cy) = px(p);
        let _ = writeln!(
            svg,
            "<polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"#2ca02c\" stroke=\"black\" stroke-width=\"0.5\"/>",
            cx, cy - 6.0, cx + 6.0, cy, cx, cy + 6.0, cx - 6.0, cy
        );
    }
    for &p in desired {
        let (cx, cy) = px(p);
        let mut pts = String::new();
        for k in 0..10 {
            let r = if k % 2 == 0 { 7.0 } else { 3.0 };
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
            let _ = write!(pts, "{:.2},{:.2} ", cx + r * a.cos(), cy + r * a.sin());
        }
        let _ = writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"#ffbf00\" stroke=\"black\" stroke-width=\"0.5\"/>",
            pts.trim_end()
        );
    }
    let _ = writeln!(svg, "</svg>");

    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, svg)?;
    Ok(())
}

/// World-to-pixel mapping used by [`render_snapshot`], exposed for tests.
pub fn snapshot_pixel(spec: &MazeSpec, p: GoalPoint) -> (f64, f64) {
    let size = 480.0;
    let pad = 16.0;
    let hw = spec.half_width();
    let hh = spec.half_height();
    let scale = ((size - 2.0 * pad) / (2.0 * hw)).min((size - 2.0 * pad) / (2.0 * hh));
    (size / 2.0 + p[0] * scale, size / 2.0 - p[1] * scale)
}
