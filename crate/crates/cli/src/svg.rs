//! Static SVG renderings: 2D scatter + trajectory scenes and metric line
//! plots. Output is deterministic — fixed canvas, fixed precision, no
//! timestamps — so identical inputs give byte-identical files.

use serde::{Deserialize, Serialize};

pub const CANVAS: f64 = 800.0;
const PAD: f64 = 40.0;
const SOURCE_COLOR: &str = "#1f77b4";
const TARGET_COLOR: &str = "#000000";
const TRAJ_COLOR: &str = "#2ca02c";

/// A 2D plotting scene; also the schema of `trajectories.json`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub source: Vec<[f64; 2]>,
    #[serde(default)]
    pub target: Vec<[f64; 2]>,
    /// one polyline per trajectory, each a list of (x, y) waypoints
    #[serde(default)]
    pub trajectories: Vec<Vec<[f64; 2]>>,
}

impl Scene {
    fn points(&self) -> impl Iterator<Item = &[f64; 2]> {
        self.source
            .iter()
            .chain(self.target.iter())
            .chain(self.trajectories.iter().flatten())
    }
}

/// View box: square window centered on the data bounding box, sized to the
/// larger span plus a 10% margin on each side. Empty data gets [-1, 1]^2.
fn view(points: impl Iterator<Item = [f64; 2]>) -> ([f64; 2], f64) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let mut any = false;
    for p in points {
        any = true;
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if !any {
        return ([0.0, 0.0], 1.0);
    }
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let half = if span > 0.0 { span / 2.0 * 1.2 } else { 1.0 };
    (center, half)
}

struct Mapper {
    center: [f64; 2],
    half: f64,
}

impl Mapper {
    fn map(&self, p: &[f64; 2]) -> (f64, f64) {
        let s = (CANVAS - 2.0 * PAD) / (2.0 * self.half);
        let px = PAD + (p[0] - self.center[0] + self.half) * s;
        let py = CANVAS - PAD - (p[1] - self.center[1] + self.half) * s;
        (px, py)
    }
}

fn header(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{c}\" height=\"{c}\" \
         viewBox=\"0 0 {c} {c}\">\n",
        c = CANVAS
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{c}\" height=\"{c}\" fill=\"white\"/>\n",
        c = CANVAS
    ));
}

/// Axes are plain `<line>` elements (left and bottom frame edges), so the
/// polyline count of the document equals the trajectory count.
fn axes(out: &mut String) {
    let (a, b) = (PAD, CANVAS - PAD);
    out.push_str(&format!(
        "<line x1=\"{a}\" y1=\"{b}\" x2=\"{b}\" y2=\"{b}\" stroke=\"#888888\" stroke-width=\"1\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{a}\" y1=\"{a}\" x2=\"{a}\" y2=\"{b}\" stroke=\"#888888\" stroke-width=\"1\"/>\n"
    ));
}

fn scatter(out: &mut String, m: &Mapper, pts: &[[f64; 2]], color: &str) {
    for p in pts {
        let (x, y) = m.map(p);
        out.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n"
        ));
    }
}

fn polyline(out: &mut String, m: &Mapper, pts: &[[f64; 2]], color: &str, width: f64) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = m.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    out.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n",
        coords.join(" ")
    ));
}

/// Source scatter (blue), target scatter (black), trajectories (green).
pub fn scene_svg(scene: &Scene) -> String {
    let (center, half) = view(scene.points().copied());
    let m = Mapper { center, half };
    let mut out = String::new();
    header(&mut out);
    axes(&mut out);
    for traj in &scene.trajectories {
        polyline(&mut out, &m, traj, TRAJ_COLOR, 1.5);
    }
    scatter(&mut out, &m, &scene.source, SOURCE_COLOR);
    scatter(&mut out, &m, &scene.target, TARGET_COLOR);
    out.push_str("</svg>\n");
    out
}

/// Metric curve from report rows: one polyline through (x, y) points plus
/// min/max tick labels on both axes.
pub fn line_plot_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let pts: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
    let (center, half) = view(pts.iter().copied());
    let m = Mapper { center, half };
    let mut out = String::new();
    header(&mut out);
    axes(&mut out);
    if !pts.is_empty() {
        polyline(&mut out, &m, &pts, TRAJ_COLOR, 2.0);
        for p in &pts {
            let (x, y) = m.map(p);
            out.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{TRAJ_COLOR}\"/>\n"
            ));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        let (xmin, xmax) = (fold_min(&xs), fold_max(&xs));
        let (ymin, ymax) = (fold_min(&ys), fold_max(&ys));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{xmin:.4}</text>\n",
            PAD,
            CANVAS - PAD + 16.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{xmax:.4}</text>\n",
            CANVAS - PAD,
            CANVAS - PAD + 16.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{ymin:.4}</text>\n",
            4.0,
            CANVAS - PAD
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{ymax:.4}</text>\n",
            4.0,
            PAD
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        CANVAS / 2.0,
        CANVAS - 8.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"12\" y=\"{:.2}\" font-size=\"14\" transform=\"rotate(-90 12 {:.2})\">{}</text>\n",
        CANVAS / 2.0,
        CANVAS / 2.0,
        escape(y_label)
    ));
    out.push_str("</svg>\n");
    out
}

fn fold_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
