//! Error-versus-N panels as standalone SVG plus gnuplot data files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Mean of the per-matrix errors, averaged over trials.
    #[default]
    MeanError,
    /// Error of `V_1`, averaged over trials.
    FirstError,
    SuccessRate,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "err_mean" | "mean" => Some(Metric::MeanError),
            "err_V1" | "v1" => Some(Metric::FirstError),
            "success" | "success_rate" => Some(Metric::SuccessRate),
            _ => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::MeanError => "mean error",
            Metric::FirstError => "error of V1",
            Metric::SuccessRate => "success rate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxesSpec {
    pub metric: Metric,
    pub log_y: bool,
}

/// `solver -> N -> (sum, count)` for one `(D, sigma)` panel.
type Panel = BTreeMap<String, BTreeMap<usize, (f64, usize)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelKey {
    pub d: usize,
    pub sigma: f64,
}

/// Reads a sweep data CSV (or its summary) and aggregates the chosen metric.
fn load(csv_path: &Path, metric: Metric) -> Result<Vec<(PanelKey, Panel, Vec<String>)>, BenchError> {
    let malformed = |msg: String| BenchError::Malformed {
        path: csv_path.to_path_buf(),
        msg,
    };
    let mut reader = csv::Reader::from_path(csv_path).map_err(|e| BenchError::Csv {
        path: csv_path.to_path_buf(),
        source: e,
    })?;
    let headers = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(format!("missing column `{name}`")))
    };
    let summary = headers.iter().any(|h| h == "mean_err");
    let value_col = match (metric, summary) {
        (Metric::MeanError, false) => col("err_mean")?,
        (Metric::FirstError, false) => col("err_V1")?,
        (Metric::SuccessRate, false) => col("success")?,
        (Metric::MeanError, true) => col("mean_err")?,
        (Metric::SuccessRate, true) => col("success_rate")?,
        (Metric::FirstError, true) => {
            return Err(malformed("summary files carry no per-matrix errors".into()))
        }
    };
    let (solver_col, d_col, n_col, sigma_col) = (col("solver")?, col("D")?, col("N")?, col("sigma")?);

    let mut panels: Vec<(PanelKey, Panel, Vec<String>)> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| malformed(format!("row {}: bad {what}", line + 2));
        let d: usize = field(d_col).parse().map_err(|_| bad("D"))?;
        let n: usize = field(n_col).parse().map_err(|_| bad("N"))?;
        let sigma: f64 = field(sigma_col).parse().map_err(|_| bad("sigma"))?;
        let value = match field(value_col) {
            "true" => 1.0,
            "false" => 0.0,
            v => v.parse().map_err(|_| bad("value"))?,
        };
        let solver = field(solver_col).to_string();
        let key = PanelKey { d, sigma };
        let idx = match panels.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                panels.push((key, Panel::new(), Vec::new()));
                panels.len() - 1
            }
        };
        let (_, panel, order) = &mut panels[idx];
        if !order.contains(&solver) {
            order.push(solver.clone());
        }
        let slot = panel.entry(solver).or_default().entry(n).or_insert((0.0, 0));
        slot.0 += value;
        slot.1 += 1;
    }
    if panels.is_empty() {
        return Err(malformed("no data rows".into()));
    }
    Ok(panels)
}

const COLORS: [&str; 6] = ["#1b6ca8", "#d1495b", "#edae49", "#00798c", "#30638e", "#6a4c93"];

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn render_svg(key: &PanelKey, series: &[(String, Vec<(usize, f64)>)], axes: AxesSpec) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut nmin, mut nmax) = (usize::MAX, 0);
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for &(n, y) in points {
        nmin = nmin.min(n);
        nmax = nmax.max(n);
        if !axes.log_y || y > 0.0 {
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !ymin.is_finite() {
        (ymin, ymax) = (1e-16, 1.0);
    }
    let ty = |y: f64| if axes.log_y { y.max(ymin).log10() } else { y };
    let (mut lo, mut hi) = (ty(ymin), ty(ymax));
    if !axes.log_y {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let span_n = (nmax.max(nmin + 1) - nmin) as f64;
    let px = |n: usize| left + (n - nmin) as f64 / span_n * (w - left - right);
    let py = |y: f64| top + (1.0 - (ty(y) - lo) / (hi - lo)) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">D = {}, sigma = {}</text>"#,
        (left + w - right) / 2.0,
        key.d,
        key.sigma
    );
    let (x0, x1, y0, y1) = (left, w - right, h - bottom, top);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let shown = if axes.log_y { 10f64.powf(v) } else { v };
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            fmt_tick(shown)
        );
    }
    let step = ((nmax - nmin) / 10).max(1);
    for n in (nmin..=nmax).step_by(step) {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{n}</text>"#,
            px(n),
            y0 + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">N</text>"#,
        (x0 + x1) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        axes.metric.label(),
        if axes.log_y { " (log)" } else { "" }
    );
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|&(n, y)| format!("{:.2},{:.2}", px(n), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-solver="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 10.0 + 20.0 * idx as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            x1 + 15.0,
            x1 + 40.0,
            x1 + 46.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn render_dat(key: &PanelKey, series: &[(String, Vec<(usize, f64)>)], metric: Metric) -> String {
    let mut ns: Vec<usize> = series.iter().flat_map(|(_, p)| p.iter().map(|x| x.0)).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut s = format!("# D = {}, sigma = {}, {}\n# N", key.d, key.sigma, metric.label());
    for (name, _) in series {
        s.push(' ');
        s.push_str(name);
    }
    s.push('\n');
    for n in ns {
        let _ = write!(s, "{n}");
        for (_, pts) in series {
            match pts.iter().find(|p| p.0 == n) {
                Some(&(_, y)) => {
                    let _ = write!(s, " {y}");
                }
                None => s.push_str(" NaN"),
            }
        }
        s.push('\n');
    }
    s
}

/// Writes `<stem>_D<d>_sigma<s>.svg` and `.dat` into `out_dir` for every
/// `(D, sigma)` panel in the CSV and returns the SVG paths.
pub fn emit_plot(csv_path: &Path, out_dir: &Path, axes: AxesSpec) -> Result<Vec<PathBuf>, BenchError> {
    let panels = load(csv_path, axes.metric)?;
    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sweep");
    let mut written = Vec::new();
    for (key, panel, order) in panels {
        let series: Vec<(String, Vec<(usize, f64)>)> = order
            .iter()
            .map(|name| {
                let pts = panel[name]
                    .iter()
                    .map(|(&n, &(sum, count))| (n, sum / count as f64))
                    .collect();
                (name.clone(), pts)
            })
            .collect();
        let base = format!("{stem}_D{}_sigma{}", key.d, key.sigma);
        for (ext, body) in [
            ("svg", render_svg(&key, &series, axes)),
            ("dat", render_dat(&key, &series, axes.metric)),
        ] {
            let path = out_dir.join(format!("{base}.{ext}"));
            std::fs::write(&path, body).map_err(|e| BenchError::Io {
                path: path.clone(),
                source: e,
            })?;
            if ext == "svg" {
                written.push(path);
            }
        }
    }
    Ok(written)
}
