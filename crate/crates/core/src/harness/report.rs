//! Output files: the per-round metrics table, the SNR summary table, and
//! PSNR/SSIM line charts.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::run::MetricsLog;
use super::HarnessError;

/// Significant digits written for every number.
pub const SIGNIFICANT_DIGITS: usize = 6;

/// `x` with 6 significant digits in `%g` style: fixed notation for decimal
/// exponents in [-4, 6), scientific otherwise, trailing zeros trimmed.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Value of `x` after a write and read through [`format_number`].
pub fn round_to_written(x: f64) -> f64 {
    parse_number(&format_number(x)).expect("formatted numbers parse")
}

pub fn parse_number(s: &str) -> Option<f64> {
    s.parse().ok()
}

/// A numeric table whose values are already rounded to what gets written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row.into_iter().map(round_to_written).collect());
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v))).map_err(io_err)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(io_err)?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io_err)?;
            let row = rec
                .iter()
                .map(|f| parse_number(f).ok_or_else(|| HarnessError::Io(format!("bad number `{f}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn io_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

fn snr_label(snr: f64) -> String {
    format_number(snr)
}

/// One row per global round.
///
/// Columns: `round`, `subregion_round`, `time_s`, `participants`,
/// `epochs_total`, `loss_gw<id>` per gateway (NaN when that gateway merged
/// nothing this round), then `psnr_db_snr<s>` and `ssim_snr<s>` per
/// evaluation SNR.
pub fn metrics_table(log: &MetricsLog) -> Table {
    let mut header: Vec<String> = ["round", "subregion_round", "time_s", "participants", "epochs_total"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend(log.gateway_ids.iter().map(|g| format!("loss_gw{g}")));
    for s in &log.eval_snrs_db {
        header.push(format!("psnr_db_snr{}", snr_label(*s)));
    }
    for s in &log.eval_snrs_db {
        header.push(format!("ssim_snr{}", snr_label(*s)));
    }
    let mut t = Table::new(header);
    for r in &log.rounds {
        let mut row = vec![
            r.round as f64,
            r.subregion_round as f64,
            r.end_time_s,
            r.participants() as f64,
            r.total_epochs() as f64,
        ];
        row.extend(
            log.gateway_ids
                .iter()
                .map(|g| r.per_gateway_loss.get(g).copied().unwrap_or(f64::NAN)),
        );
        row.extend(r.eval.iter().map(|e| e.psnr_db));
        row.extend(r.eval.iter().map(|e| e.ssim));
        t.push(row);
    }
    t
}

/// Final-round quality with one row per evaluation SNR and a PSNR and SSIM
/// column per labelled run: `snr_db`, `<label>_psnr_db`, `<label>_ssim`, ...
pub fn summary_table(runs: &[(String, &MetricsLog)]) -> Table {
    let mut header = vec!["snr_db".to_string()];
    for (label, _) in runs {
        header.push(format!("{label}_psnr_db"));
        header.push(format!("{label}_ssim"));
    }
    let mut t = Table::new(header);
    let snrs = runs.first().map(|(_, l)| l.eval_snrs_db.clone()).unwrap_or_default();
    for (i, snr) in snrs.iter().enumerate() {
        let mut row = vec![*snr];
        for (_, log) in runs {
            let e = log.final_eval().and_then(|ev| ev.get(i));
            row.push(e.map_or(f64::NAN, |e| e.psnr_db));
            row.push(e.map_or(f64::NAN, |e| e.ssim));
        }
        t.push(row);
    }
    t
}

#[derive(Clone, Copy)]
enum Quality {
    Psnr,
    Ssim,
}

/// Lines of one chart: a series per SNR for a single run, or a series per run
/// at the evaluation SNR closest to 5 dB when comparing runs.
fn chart_series(runs: &[(String, &MetricsLog)], q: Quality) -> Vec<(String, Vec<(f64, f64)>)> {
    let pick = |e: &crate::learner::EvalResult| match q {
        Quality::Psnr => e.psnr_db,
        Quality::Ssim => e.ssim,
    };
    match runs {
        [(_, log)] => log
            .eval_snrs_db
            .iter()
            .enumerate()
            .map(|(i, snr)| {
                let pts = log.rounds.iter().map(|r| (r.round as f64, pick(&r.eval[i]))).collect();
                (format!("{} dB", snr_label(*snr)), pts)
            })
            .collect(),
        _ => runs
            .iter()
            .filter_map(|(label, log)| {
                let i = (0..log.eval_snrs_db.len())
                    .min_by(|&a, &b| (log.eval_snrs_db[a] - 5.0).abs().total_cmp(&(log.eval_snrs_db[b] - 5.0).abs()))?;
                let pts = log.rounds.iter().map(|r| (r.round as f64, pick(&r.eval[i]))).collect();
                Some((format!("{label} @ {} dB", snr_label(log.eval_snrs_db[i])), pts))
            })
            .collect(),
    }
}

fn draw_chart(path: &Path, title: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<(), HarnessError> {
    let plot_err = |e: String| HarnessError::Io(format!("{}: {e}", path.display()));
    let finite = series.iter().flat_map(|(_, p)| p.iter()).filter(|(_, y)| y.is_finite());
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-3);
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("global round")
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied().filter(|(_, y)| y.is_finite()), color.stroke_width(2)))
            .map_err(|e| plot_err(e.to_string()))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    if !series.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(e.to_string()))?;
    }
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Writes `metrics.csv`, `summary.csv`, `psnr.svg` and `ssim.svg` into
/// `out_dir`. With several runs, each run's metrics go to
/// `metrics_<label>.csv` and the summary and charts compare them.
pub fn emit_reports(runs: &[(String, &MetricsLog)], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if runs.is_empty() || runs.iter().any(|(_, l)| l.rounds.is_empty()) {
        return Err(HarnessError::EmptyLog);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    for (label, log) in runs {
        let name = if runs.len() == 1 {
            "metrics.csv".to_string()
        } else {
            format!("metrics_{label}.csv")
        };
        let path = out_dir.join(name);
        write(&path, &metrics_table(log).to_csv()?)?;
        written.push(path);
    }
    let path = out_dir.join("summary.csv");
    write(&path, &summary_table(runs).to_csv()?)?;
    written.push(path);
    for (file, title, y, q) in [
        ("psnr.svg", "Global model PSNR", "PSNR (dB)", Quality::Psnr),
        ("ssim.svg", "Global model SSIM", "SSIM", Quality::Ssim),
    ] {
        let path = out_dir.join(file);
        draw_chart(&path, title, y, &chart_series(runs, q))?;
        written.push(path);
    }
    Ok(written)
}
