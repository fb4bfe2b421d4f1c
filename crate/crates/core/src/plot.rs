//! Minimal self-contained SVG line plots for run artifacts. No external
//! renderer: the output is a single `.svg` file with inline styling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::report::write_atomic;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 62.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YScale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

/// A single-panel line plot. Axis labels should carry units, e.g.
/// "frequency (THz)" or "wall time (s)".
#[derive(Debug, Clone)]
pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    y_scale: YScale,
    series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            y_scale: YScale::Linear,
            series: Vec::new(),
        }
    }

    /// Switch the y axis to decade-log scale (used for timing plots).
    pub fn log_y(mut self) -> Self {
        self.y_scale = YScale::Log;
        self
    }

    pub fn add_series(&mut self, label: &str, points: &[(f64, f64)]) -> &mut Self {
        self.series.push(Series {
            label: label.into(),
            points: points.to_vec(),
        });
        self
    }

    fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::InvalidInput("plot has no series".into()));
        }
        for s in &self.series {
            if s.points.is_empty() {
                return Err(Error::InvalidInput(format!("series `{}` is empty", s.label)));
            }
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "series `{}` contains a non-finite point ({x}, {y})",
                        s.label
                    )));
                }
                if self.y_scale == YScale::Log && y <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "series `{}` has y = {y} ≤ 0 on a log axis",
                        s.label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> Result<String> {
        self.validate()?;
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                let yv = match self.y_scale {
                    YScale::Linear => y,
                    YScale::Log => y.log10(),
                };
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(yv);
                y_max = y_max.max(yv);
            }
        }
        // Degenerate spans (single point, flat series) get a unit pad so the
        // projection stays well defined.
        if x_max - x_min < 1e-12 {
            x_min -= 1.0;
            x_max += 1.0;
        }
        if y_max - y_min < 1e-12 {
            y_min -= 1.0;
            y_max += 1.0;
        } else {
            let pad = 0.05 * (y_max - y_min);
            y_min -= pad;
            y_max += pad;
        }

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
        let py = |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

        let mut svg = String::with_capacity(16 * 1024);
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"13\">\n"
        ));
        svg.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        ));

        // gridlines + ticks
        for x in linear_ticks(x_min, x_max) {
            let gx = px(x);
            svg.push_str(&format!(
                "<line x1=\"{gx:.1}\" y1=\"{:.1}\" x2=\"{gx:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
                MARGIN_TOP,
                MARGIN_TOP + plot_h
            ));
            svg.push_str(&format!(
                "<text x=\"{gx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
                MARGIN_TOP + plot_h + 18.0,
                fmt_tick(x)
            ));
        }
        let y_ticks = match self.y_scale {
            YScale::Linear => linear_ticks(y_min, y_max),
            YScale::Log => log_ticks(y_min, y_max),
        };
        for y in y_ticks {
            let gy = py(y);
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{gy:.1}\" x2=\"{:.1}\" y2=\"{gy:.1}\" stroke=\"#ddd\"/>\n",
                MARGIN_LEFT,
                MARGIN_LEFT + plot_w
            ));
            let label = match self.y_scale {
                YScale::Linear => fmt_tick(y),
                YScale::Log => fmt_tick(10f64.powf(y)),
            };
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
                MARGIN_LEFT - 8.0,
                gy + 4.0
            ));
        }

        // frame
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
             fill=\"none\" stroke=\"#333\"/>\n"
        ));

        // axis labels
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" \
             transform=\"rotate(-90 20 {:.1})\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        ));

        // data
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let proj: Vec<(f64, f64)> = s
                .points
                .iter()
                .map(|&(x, y)| {
                    let yv = match self.y_scale {
                        YScale::Linear => y,
                        YScale::Log => y.log10(),
                    };
                    (px(x), py(yv))
                })
                .collect();
            if proj.len() > 1 {
                let pts: Vec<String> = proj.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
                    pts.join(" ")
                ));
            }
            // markers only when sparse enough to read them
            if proj.len() <= 64 {
                for (x, y) in &proj {
                    svg.push_str(&format!(
                        "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>\n"
                    ));
                }
            }
        }

        // legend
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
            let lx = MARGIN_LEFT + plot_w - 170.0;
            svg.push_str(&format!(
                "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>\n",
                lx + 26.0
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
                lx + 32.0,
                ly + 4.0,
                escape(&s.label)
            ));
        }

        svg.push_str("</svg>\n");
        Ok(svg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let svg = self.render()?;
        write_atomic(path, svg.as_bytes())
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// ~6 ticks at a 1/2/5 × 10^k step.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm <= 1.0 {
            1.0
        } else if norm <= 2.0 {
            2.0
        } else if norm <= 5.0 {
            5.0
        } else {
            10.0
        };
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(if t.abs() < 1e-12 * span { 0.0 } else { t });
        t += step;
    }
    out
}

/// Decade ticks in log10 space; subdivides when the span is under a decade.
fn log_ticks(lo_log: f64, hi_log: f64) -> Vec<f64> {
    if hi_log - lo_log >= 1.0 {
        let mut out = Vec::new();
        let mut d = lo_log.ceil();
        while d <= hi_log + 1e-9 {
            out.push(d);
            d += 1.0;
        }
        out
    } else {
        linear_ticks(lo_log, hi_log)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}
