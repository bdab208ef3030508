//! CSV tables and SVG figures.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::ModelKind;

/// Sampling step of exported trajectories, in days.
pub const EXPORT_STEP: f64 = 0.5;

/// Formats `x` with 10 significant digits, shortest of fixed and
/// scientific notation, trailing zeros removed.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.9e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV text with LF line endings.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| format_number(*x))).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Io(format!("non-numeric CSV field `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Export times: every [`EXPORT_STEP`] days, the end time, and every
/// control breakpoint, sorted without duplicates.
pub fn export_times(traj: &Trajectory) -> Vec<f64> {
    let (a, b) = (traj.start(), traj.end());
    let mut ts: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let t = a + k as f64 * EXPORT_STEP;
        if t > b {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ts.push(b);
    ts.extend(
        traj.control()
            .breakpoints()
            .into_iter()
            .filter(|&t| t >= a && t <= b),
    );
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Trajectory sampled at [`export_times`], with columns `t,F,Ms,u` or
/// `t,E,M,F,Ms,u`.
pub fn trajectory_table(traj: &Trajectory) -> Result<Table> {
    let mut table = match traj.model() {
        ModelKind::Reduced => Table::new(&["t", "F", "Ms", "u"]),
        ModelKind::Full => Table::new(&["t", "E", "M", "F", "Ms", "u"]),
    };
    for t in export_times(traj) {
        let mut row = vec![t];
        row.extend(traj.sample(t)?);
        row.push(traj.control_at(t));
        table.push(row);
    }
    Ok(table)
}

pub fn export_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    trajectory_table(traj)?.write(path)
}

/// One polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
        }
    }
}

/// Dashed horizontal reference line.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub label: String,
    pub y: f64,
}

impl Marker {
    pub fn new(label: impl Into<String>, y: f64) -> Self {
        Marker {
            label: label.into(),
            y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Panel {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn marker(mut self, m: Marker) -> Self {
        self.markers.push(m);
        self
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 300.0;
const M_LEFT: f64 = 80.0;
const M_RIGHT: f64 = 150.0;
const M_TOP: f64 = 36.0;
const M_BOTTOM: f64 = 48.0;

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 6);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &panel.series {
        for &(a, b) in &s.points {
            if a.is_finite() && b.is_finite() {
                x = (x.0.min(a), x.1.max(a));
                y = (y.0.min(b), y.1.max(b));
            }
        }
    }
    for m in &panel.markers {
        y = (y.0.min(m.y), y.1.max(m.y));
    }
    if !x.0.is_finite() {
        x = (0.0, 1.0);
    }
    if !y.0.is_finite() {
        y = (0.0, 1.0);
    }
    y.0 = y.0.min(0.0);
    if x.1 <= x.0 {
        x.1 = x.0 + 1.0;
    }
    if y.1 <= y.0 {
        y.1 = y.0 + 1.0;
    }
    let pad = 0.05 * (y.1 - y.0);
    (x.0, x.1, y.0, y.1 + pad)
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let (x0, x1, y0, y1) = bounds(panel);
    let pw = WIDTH - M_LEFT - M_RIGHT;
    let ph = PANEL_H - M_TOP - M_BOTTOM;
    let px = |x: f64| M_LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + M_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="15" text-anchor="middle">{}</text>"#,
        M_LEFT + pw / 2.0,
        top + 22.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{M_LEFT}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#333"/>"##,
        top + M_TOP
    );
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"##,
            top + M_TOP + ph,
            top + M_TOP + ph + 5.0,
            top + M_TOP + ph + 18.0,
            crate::report::format_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{M_LEFT}" y2="{y:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"##,
            M_LEFT - 5.0,
            M_LEFT - 8.0,
            y + 4.0,
            format_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        M_LEFT + pw / 2.0,
        top + PANEL_H - 8.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + M_TOP + ph / 2.0,
        top + M_TOP + ph / 2.0,
        escape(&panel.y_label)
    );
    for m in &panel.markers {
        let y = py(m.y);
        let _ = writeln!(
            out,
            r##"<line x1="{M_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#555" stroke-dasharray="6,4"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"##,
            M_LEFT + pw,
            M_LEFT + pw + 6.0,
            y + 4.0,
            escape(&m.label)
        );
    }
    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + M_TOP + 14.0 + 18.0 * i as f64;
        let lx = M_LEFT + pw + 6.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
}

fn format_tick(t: f64) -> String {
    if t != 0.0 && (t.abs() >= 1e5 || t.abs() < 1e-3) {
        format!("{t:.1e}")
    } else {
        trim_zeros(&format!("{t:.3}"))
    }
}

/// Standalone SVG with the panels stacked vertically.
pub fn render_svg(panels: &[Panel]) -> Result<String> {
    if panels.is_empty() || panels.iter().all(|p| p.series.is_empty()) {
        return Err(Error::DomainError("a figure needs at least one series".into()));
    }
    let height = PANEL_H * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_H);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_plot(panels: &[Panel], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(panels)?)?;
    Ok(())
}

/// Female and release panels of a trajectory, with optional target and
/// bound markers.
pub fn trajectory_panels(
    traj: &Trajectory,
    title: &str,
    epsilon: Option<f64>,
    u_bar: Option<f64>,
) -> Result<Vec<Panel>> {
    let ts = export_times(traj);
    let fi = traj.model().female_index();
    let mut f_pts = Vec::with_capacity(ts.len());
    let mut u_pts = Vec::with_capacity(2 * ts.len());
    for &t in &ts {
        f_pts.push((t, traj.sample(t)?[fi]));
    }
    // draw jumps as vertical steps
    let bps = traj.control().breakpoints();
    for &t in &ts {
        if bps.contains(&t) && t > traj.start() {
            u_pts.push((t, traj.control_at(t - 1e-9 * t.max(1.0))));
        }
        u_pts.push((t, traj.control_at(t)));
    }
    let mut fp = Panel::new(title, "t (days)", "F").series(Series::new("F", f_pts));
    if let Some(e) = epsilon {
        fp = fp.marker(Marker::new(format!("eps = {}", format_tick(e)), e));
    }
    let mut up = Panel::new("Release rate", "t (days)", "u (per day)").series(Series::new("u", u_pts));
    if let Some(b) = u_bar {
        up = up.marker(Marker::new(format!("U_bar = {}", format_tick(b)), b));
    }
    Ok(vec![fp, up])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate_reduced, ControlSchedule, Tolerance};
    use crate::model::ReducedState;
    use crate::params::Params;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(11037.0), "11037");
        assert_eq!(format_number(2759.25), "2759.25");
        assert_eq!(format_number(1.0 / 3.0), "0.3333333333");
        assert_eq!(format_number(123456789012.0), "1.23456789e11");
        assert_eq!(format_number(1.234e-7), "1.234e-7");
        assert_eq!(format_number(-0.5), "-0.5");
        assert_eq!(format_number(9.9999999999), "10");
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let p = Params::reference(0.05).unwrap();
        let u = ControlSchedule::pulses(20000.0, 10.0, 1.0, 30.0).unwrap();
        let tr = integrate_reduced(&p, ReducedState::equilibrium(&p), &u, (0.0, 30.0), Tolerance::for_params(&p))
            .unwrap();
        let text = trajectory_table(&tr).unwrap().to_csv().unwrap();
        assert!(text.starts_with("t,F,Ms,u\n"));
        assert!(!text.contains('\r'));
        let again = Table::from_csv(&text).unwrap().to_csv().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn export_rows_include_breakpoints() {
        let p = Params::reference(0.05).unwrap();
        let u = ControlSchedule::pulses(1000.0, 10.0, 1.3, 20.0).unwrap();
        let tr = integrate_reduced(&p, ReducedState::equilibrium(&p), &u, (0.0, 20.0), Tolerance::for_params(&p))
            .unwrap();
        let t = export_times(&tr);
        // 41 grid rows plus 1.3 and 11.3
        assert_eq!(t.len(), 43);
    }

    #[test]
    fn svg_has_markers_and_legend() {
        let panel = Panel::new("test", "t", "y")
            .series(Series::new("zero", vec![(0.0, 0.0), (1.0, 0.0)]))
            .marker(Marker::new("eps", 2759.49));
        let svg = render_svg(&[panel]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains(">zero<"));
        assert!(render_svg(&[]).is_err());
    }
}
