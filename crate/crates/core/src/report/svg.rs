//! Minimal SVG line charts: axes, ticks, polylines, shaded ribbons and a
//! legend on a fixed 800×600 canvas.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct Ribbon {
    pub color: String,
    /// `(x, lower, upper)`
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    pub ribbons: Vec<Ribbon>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            series: Vec::new(),
            ribbons: Vec::new(),
        }
    }

    /// Sets the y range to cover all data with a 5% margin.
    pub fn fit_y(&mut self) {
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(
                self.ribbons
                    .iter()
                    .flat_map(|r| r.points.iter().flat_map(|p| [p.1, p.2])),
            )
            .filter(|y| y.is_finite());
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
        if lo.is_finite() && hi.is_finite() {
            let pad = ((hi - lo) * 0.05).max(1e-6);
            self.y_range = (lo - pad, hi + pad);
        }
    }

    fn sx(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        LEFT + (x - a) / (b - a) * (WIDTH - LEFT - RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        let (a, b) = self.y_range;
        HEIGHT - BOTTOM - (y - a) / (b - a) * (HEIGHT - TOP - BOTTOM)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="13">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for r in &self.ribbons {
            if r.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, p) in r.points.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    self.sx(p.0),
                    self.sy(p.2)
                );
            }
            for p in r.points.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", self.sx(p.0), self.sy(p.1));
            }
            let _ = writeln!(
                s,
                r#"<path d="{}Z" fill="{}" fill-opacity="0.18" stroke="none"/>"#,
                d, r.color
            );
        }
        self.axes(&mut s);
        for ser in &self.series {
            let pts: Vec<String> = ser
                .points
                .iter()
                .filter(|p| p.1.is_finite())
                .map(|p| format!("{:.2},{:.2}", self.sx(p.0), self.sy(p.1)))
                .collect();
            let dash = if ser.dashed {
                r#" stroke-dasharray="6,4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{}/>"#,
                pts.join(" "),
                ser.color,
                dash
            );
        }
        self.legend(&mut s);
        s.push_str("</svg>\n");
        s
    }

    fn axes(&self, s: &mut String) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            s,
            r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
        );
        for i in 0..=5 {
            let t = i as f64 / 5.0;
            let xv = self.x_range.0 + t * (self.x_range.1 - self.x_range.0);
            let px = self.sx(xv);
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.1}" stroke="black"/><text x="{px:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 20.0,
                tick(xv)
            );
            let yv = self.y_range.0 + t * (self.y_range.1 - self.y_range.0);
            let py = self.sy(yv);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 25.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
    }

    fn legend(&self, s: &mut String) {
        let x = WIDTH - RIGHT - 190.0;
        let mut y = TOP + 10.0;
        let labelled: Vec<&Series> = self.series.iter().filter(|s| !s.label.is_empty()).collect();
        if labelled.is_empty() {
            return;
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="185" height="{:.1}" fill="white" fill-opacity="0.85" stroke="#999"/>"##,
            x - 5.0,
            y - 5.0,
            labelled.len() as f64 * 20.0 + 6.0
        );
        for ser in labelled {
            let dash = if ser.dashed {
                r#" stroke-dasharray="6,4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                y + 7.0,
                x + 25.0,
                y + 7.0,
                ser.color,
                x + 32.0,
                y + 11.0,
                escape(&ser.label)
            );
            y += 20.0;
        }
    }
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_looking_svg() {
        let mut c = Chart::new("t <1>", "x", "y");
        c.series.push(Series {
            label: "a".into(),
            color: PALETTE[0].into(),
            points: vec![(0.0, 0.0), (1.0, 2.0)],
            dashed: false,
        });
        c.ribbons.push(Ribbon {
            color: PALETTE[1].into(),
            points: vec![(0.0, -1.0, 1.0), (1.0, 1.0, 3.0)],
        });
        c.fit_y();
        let svg = c.render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains(r#"viewBox="0 0 800 600""#));
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.contains("<polyline") && svg.contains("<path d=\"M"));
    }
}
