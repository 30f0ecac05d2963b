//! Static SVG charts rendered from the emitted CSV files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cmdp_core::error::{Error, Result};
use cmdp_core::ConstraintKind;

use crate::config::ExperimentConfig;
use crate::protocol::{CONFIG_FILE, METRICS_FILE};
use crate::sweep::SWEEP_FILE;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Columns of a CSV file, parsed as numbers (unparsable cells become NaN).
#[derive(Clone, Debug)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(crate::metrics::csv_err)?;
        let header = reader
            .headers()
            .map_err(crate::metrics::csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(crate::metrics::csv_err)?;
            rows.push(rec.iter().map(|v| v.parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Line chart with one marker per finite point and dashed horizontal
/// reference lines.
pub fn line_chart(title: &str, x: &[f64], series: &[Series], hlines: &[(String, f64)]) -> String {
    let finite = |v: &f64| v.is_finite();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .chain(hlines.iter().map(|h| h.1))
        .filter(finite)
        .collect();
    let (mut y0, mut y1) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (x0, x1) = match (x.first(), x.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            py(yv) + 4.0,
            tick(yv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            px(xv),
            HEIGHT - MARGIN + 16.0,
            tick(xv)
        );
    }
    for (name, v) in hlines {
        let _ = writeln!(
            s,
            r#"<line class="threshold" data-value="{v}" x1="{MARGIN}" x2="{}" y1="{y}" y2="{y}" stroke="black" stroke-dasharray="4 3"><title>{}</title></line>"#,
            WIDTH - MARGIN,
            escape(name),
            y = py(*v)
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(&ser.values)
            .filter(|(_, y)| y.is_finite())
            .map(|(&xv, &yv)| format!("{:.2},{:.2}", px(xv), py(yv)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        for (&xv, &yv) in x.iter().zip(&ser.values).filter(|(_, y)| y.is_finite()) {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                px(xv),
                py(yv)
            );
        }
        let ly = MARGIN + 14.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heat grid of `values` (row-major over `rows × cols`) in [0, 1].
pub fn heat_grid(
    title: &str,
    rows: usize,
    cols: usize,
    values: &[f64],
    row_labels: &[String],
    col_labels: &[String],
) -> String {
    assert_eq!(values.len(), rows * cols, "heat grid values");
    let cell = 48.0;
    let (w, h) = (MARGIN * 2.0 + cell * cols as f64, MARGIN * 2.0 + cell * rows as f64);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11" data-rows="{rows}" data-cols="{cols}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let fill = if v.is_finite() {
                let t = v.clamp(0.0, 1.0);
                format!(
                    "rgb({},{},{})",
                    (255.0 * (1.0 - t)) as u8,
                    (90.0 + 110.0 * t) as u8,
                    (255.0 * (1.0 - t)) as u8
                )
            } else {
                "#bbbbbb".to_string()
            };
            let (x, y) = (MARGIN + cell * c as f64, MARGIN + cell * r as f64);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                tick(v)
            );
        }
    }
    for (r, l) in row_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            MARGIN + cell * (r as f64 + 0.5) + 4.0,
            escape(l)
        );
    }
    for (c, l) in col_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN + cell * (c as f64 + 0.5),
            MARGIN - 6.0,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if !v.is_finite() {
        "-".into()
    } else if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: PathBuf, svg: String, out: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, svg)?;
    out.push(path);
    Ok(())
}

/// Charts for one training run directory (`metrics.csv`, with thresholds
/// from `config.toml` when present).
pub fn plot_run(dir: &Path) -> Result<Vec<PathBuf>> {
    let table = Table::read(&dir.join(METRICS_FILE))?;
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} has no rows",
            dir.join(METRICS_FILE).display()
        )));
    }
    let config = match std::fs::read_to_string(dir.join(CONFIG_FILE)) {
        Ok(text) => Some(ExperimentConfig::from_toml_str(&text)?),
        Err(_) => None,
    };
    let step = table.column("step").expect("step column");
    let mut out = Vec::new();
    let single = |name: &str| {
        vec![Series {
            name: name.into(),
            values: table.column(name).expect("column"),
        }]
    };
    write(
        dir.join("return.svg"),
        line_chart("Average return", &step, &single("return"), &[]),
        &mut out,
    )?;
    let success_lines: Vec<(String, f64)> = config
        .as_ref()
        .and_then(|c| c.task.success.as_ref())
        .map(|s| vec![(s.name.clone(), s.threshold)])
        .unwrap_or_default();
    write(
        dir.join("success.svg"),
        line_chart("Success rate", &step, &single("success_rate"), &success_lines),
        &mut out,
    )?;

    let with_prefix = |prefix: &str| -> Vec<Series> {
        table
            .header
            .iter()
            .filter(|h| h.starts_with(prefix))
            .map(|h| Series {
                name: h.clone(),
                values: table.column(h).expect("column"),
            })
            .collect()
    };
    let (rates, thresholds) = match &config {
        Some(c) => (
            c.task
                .constraints
                .iter()
                .filter_map(|k| {
                    table.column(&format!("rate_{}", k.name)).map(|v| Series {
                        name: format!("rate_{}", k.name),
                        values: v,
                    })
                })
                .collect::<Vec<_>>(),
            c.task
                .constraints
                .iter()
                .map(|k| {
                    let bound = match k.kind {
                        ConstraintKind::UpperBound => "max",
                        ConstraintKind::LowerBound => "min",
                    };
                    (format!("{} {bound}", k.name), k.threshold)
                })
                .collect::<Vec<_>>(),
        ),
        None => (with_prefix("rate_"), Vec::new()),
    };
    if !rates.is_empty() {
        write(
            dir.join("rates.svg"),
            line_chart("Behavior rates", &step, &rates, &thresholds),
            &mut out,
        )?;
    }
    write(
        dir.join("lambdas.svg"),
        line_chart("Multipliers", &step, &with_prefix("lambda_"), &[]),
        &mut out,
    )?;
    write(
        dir.join("losses.svg"),
        line_chart("Critic losses", &step, &with_prefix("loss_q"), &[]),
        &mut out,
    )?;
    Ok(out)
}

/// Heat grids for a sweep directory (`sweep.csv`), one per seed and metric.
/// Three-constraint grids are laid out as side-by-side slices over the
/// first weight.
pub fn plot_sweep(dir: &Path) -> Result<Vec<PathBuf>> {
    let table = Table::read(&dir.join(SWEEP_FILE))?;
    let wcols: Vec<usize> = table
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("w_"))
        .map(|(i, _)| i)
        .collect();
    let levels: Vec<Vec<f64>> = wcols
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = table.rows.iter().map(|r| r[c]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let seed_col = table.header.iter().position(|h| h == "seed").expect("seed column");
    let mut seeds: Vec<f64> = table.rows.iter().map(|r| r[seed_col]).collect();
    seeds.sort_by(f64::total_cmp);
    seeds.dedup();
    let good_name = table
        .header
        .iter()
        .find(|h| h.starts_with("good_"))
        .cloned()
        .unwrap_or_default();
    let mut out = Vec::new();
    for (si, seed) in seeds.iter().enumerate() {
        let rows: Vec<&Vec<f64>> = table.rows.iter().filter(|r| r[seed_col] == *seed).collect();
        for metric in ["success_rate", "feasible", good_name.as_str()] {
            let Some(col) = table.header.iter().position(|h| h == metric) else {
                continue;
            };
            let coord = |r: &Vec<f64>, k: usize| levels[k].iter().position(|&v| v == r[wcols[k]]).expect("level");
            let (grid_rows, grid_cols, labels_r, labels_c) = match levels.len() {
                1 => (
                    1,
                    levels[0].len(),
                    vec![String::new()],
                    levels[0].iter().map(|v| tick(*v)).collect::<Vec<_>>(),
                ),
                2 => (
                    levels[0].len(),
                    levels[1].len(),
                    levels[0].iter().map(|v| tick(*v)).collect(),
                    levels[1].iter().map(|v| tick(*v)).collect(),
                ),
                _ => {
                    let cols: Vec<String> = levels[0]
                        .iter()
                        .flat_map(|a| levels[2].iter().map(move |c| format!("{}|{}", tick(*a), tick(*c))))
                        .collect();
                    (
                        levels[1].len(),
                        levels[0].len() * levels[2].len(),
                        levels[1].iter().map(|v| tick(*v)).collect(),
                        cols,
                    )
                }
            };
            let mut values = vec![f64::NAN; grid_rows * grid_cols];
            for r in &rows {
                let idx = match levels.len() {
                    1 => coord(r, 0),
                    2 => coord(r, 0) * grid_cols + coord(r, 1),
                    _ => coord(r, 1) * grid_cols + coord(r, 0) * levels[2].len() + coord(r, 2),
                };
                values[idx] = r[col];
            }
            let title = format!("{metric} (seed {seed})");
            let name = format!("sweep_{}_seed{si}.svg", metric.split('_').next().unwrap_or(metric));
            write(
                dir.join(name),
                heat_grid(&title, grid_rows, grid_cols, &values, &labels_r, &labels_c),
                &mut out,
            )?;
        }
    }
    Ok(out)
}

/// Renders every run and sweep found in `dir` or its immediate subdirectories.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut visit = |d: &Path| -> Result<()> {
        if d.join(METRICS_FILE).exists() {
            out.extend(plot_run(d)?);
        }
        if d.join(SWEEP_FILE).exists() {
            out.extend(plot_sweep(d)?);
        }
        Ok(())
    };
    visit(dir)?;
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        visit(&d)?;
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no {METRICS_FILE} or {SWEEP_FILE} under {}",
            dir.display()
        )));
    }
    Ok(out)
}
