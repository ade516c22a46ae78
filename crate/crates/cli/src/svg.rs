//! Minimal SVG line-plot emitter: axes, optional log scales, polylines,
//! reference-order guide lines. Every plot is backed by the CSV it renders;
//! the SVG is a derived artifact only.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 6] = [
    "#1f6fb2", "#d9541e", "#3a8f3a", "#8d4fb4", "#b2293a", "#6b6b6b",
];

pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Guide line of slope `order` in log-log coordinates, anchored to pass
/// through the anchor point.
pub struct Guide {
    pub order: f64,
    pub anchor: (f64, f64),
    pub label: String,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub guides: Vec<Guide>,
}

struct Mapper {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    log_x: bool,
    log_y: bool,
}

impl Mapper {
    fn x(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log_x {
            (v.log10(), self.x_min.log10(), self.x_max.log10())
        } else {
            (v, self.x_min, self.x_max)
        };
        MARGIN_L + (v - lo) / (hi - lo).max(f64::MIN_POSITIVE) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log_y {
            (v.log10(), self.y_min.log10(), self.y_max.log10())
        } else {
            (v, self.y_min, self.y_max)
        };
        HEIGHT
            - MARGIN_B
            - (v - lo) / (hi - lo).max(f64::MIN_POSITIVE) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn finite_positive(log: bool, v: f64) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let a = lo.log10().floor() as i32;
        let b = hi.log10().ceil() as i32;
        (a..=b).map(|k| 10f64.powi(k)).collect()
    } else {
        let span = hi - lo;
        if span <= 0.0 {
            return vec![lo];
        }
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|&s| span / s <= 6.0)
            .unwrap_or(mag * 10.0);
        let start = (lo / step).ceil() * step;
        let mut out = Vec::new();
        let mut t = start;
        while t <= hi + 1e-12 * span {
            out.push(t);
            t += step;
        }
        out
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.0e}")
    } else {
        format!("{v}")
    }
}

pub fn render(plot: &Plot) -> String {
    let mut xs_all = Vec::new();
    let mut ys_all = Vec::new();
    for s in &plot.series {
        for (&x, &y) in s.xs.iter().zip(&s.ys) {
            if finite_positive(plot.log_x, x) && finite_positive(plot.log_y, y) {
                xs_all.push(x);
                ys_all.push(y);
            }
        }
    }
    if xs_all.is_empty() {
        xs_all = vec![1.0, 10.0];
        ys_all = vec![1.0, 10.0];
    }
    let (mut x_min, mut x_max) = min_max(&xs_all);
    let (mut y_min, mut y_max) = min_max(&ys_all);
    if plot.log_x {
        x_min /= 1.2;
        x_max *= 1.2;
    } else {
        let pad = 0.05 * (x_max - x_min).max(1e-12);
        x_min -= pad;
        x_max += pad;
    }
    if plot.log_y {
        y_min /= 1.5;
        y_max *= 1.5;
    } else {
        let pad = 0.05 * (y_max - y_min).max(1e-12);
        y_min -= pad;
        y_max += pad;
    }
    let m = Mapper {
        x_min,
        x_max,
        y_min,
        y_max,
        log_x: plot.log_x,
        log_y: plot.log_y,
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        escape(&plot.title)
    ));

    // Axes box.
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));

    for t in ticks(x_min, x_max, plot.log_x) {
        if t < x_min || t > x_max {
            continue;
        }
        let px = m.x(t);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_T,
            HEIGHT - MARGIN_B
        ));
        out.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_B + 16.0,
            fmt_tick(t)
        ));
    }
    for t in ticks(y_min, y_max, plot.log_y) {
        if t < y_min || t > y_max {
            continue;
        }
        let py = m.y(t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_L,
            WIDTH - MARGIN_R
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            py + 4.0,
            fmt_tick(t)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        escape(&plot.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape(&plot.y_label)
    ));

    // Guide lines (log-log order references).
    for guide in &plot.guides {
        if !(plot.log_x && plot.log_y) {
            continue;
        }
        let (ax, ay) = guide.anchor;
        let y_at = |x: f64| ay * (x / ax).powf(guide.order);
        let (gx0, gx1) = (x_min, x_max);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>\n",
            m.x(gx0),
            m.y(y_at(gx0).clamp(y_min, y_max)),
            m.x(gx1),
            m.y(y_at(gx1).clamp(y_min, y_max)),
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#555555\">{}</text>\n",
            m.x(gx1) - 60.0,
            m.y(y_at(gx1).clamp(y_min, y_max)) - 6.0,
            escape(&guide.label)
        ));
    }

    for (i, s) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            s.xs.iter()
                .zip(&s.ys)
                .filter(|(&x, &y)| finite_positive(plot.log_x, x) && finite_positive(plot.log_y, y))
                .map(|(&x, &y)| format!("{:.2},{:.2}", m.x(x), m.y(y)))
                .collect();
        if pts.len() >= 2 {
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                pts.join(" ")
            ));
        }
        for p in &pts {
            let mut it = p.split(',');
            let (px, py) = (it.next().unwrap(), it.next().unwrap());
            out.push_str(&format!(
                "<circle cx=\"{px}\" cy=\"{py}\" r=\"2.6\" fill=\"{color}\"/>\n"
            ));
        }
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if lo == hi {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
