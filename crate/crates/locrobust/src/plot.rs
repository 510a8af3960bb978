//! Minimal self-contained SVG line charts.
//!
//! CSVs are the source of truth; these renderings exist so a run can be
//! eyeballed without extra tooling. No timestamps or external references
//! are embedded, so identical data renders to identical bytes.

use std::fmt::Write as _;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

/// Shaded vertical band, e.g. a flagged arc interval.
#[derive(Debug, Clone)]
pub struct Band {
    pub from: f64,
    pub to: f64,
    pub color: String,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    };
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            bands: Vec::new(),
        }
    }

    pub fn add_series(&mut self, label: &str, points: Vec<(f64, f64)>) -> &mut Self {
        let color = PALETTE[self.series.len() % PALETTE.len()].to_string();
        self.series.push(Series {
            label: label.to_string(),
            color,
            points,
        });
        self
    }

    pub fn add_band(&mut self, from: f64, to: f64) -> &mut Self {
        self.bands.push(Band {
            from,
            to,
            color: "#fdd".to_string(),
        });
        self
    }

    fn data_range(&self) -> ((f64, f64), (f64, f64)) {
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                xr.0 = xr.0.min(x);
                xr.1 = xr.1.max(x);
                yr.0 = yr.0.min(y);
                yr.1 = yr.1.max(y);
            }
        }
        if !xr.0.is_finite() {
            xr = (0.0, 1.0);
        }
        if !yr.0.is_finite() {
            yr = (0.0, 1.0);
        }
        if xr.0 == xr.1 {
            xr = (xr.0 - 0.5, xr.1 + 0.5);
        }
        if yr.0 == yr.1 {
            yr = (yr.0 - 0.5, yr.1 + 0.5);
        }
        // give the y axis a little headroom, and anchor at zero when the
        // data is non-negative (radii, bounds, probabilities)
        let pad = (yr.1 - yr.0) * 0.05;
        if yr.0 >= 0.0 && yr.0 <= pad * 2.0 {
            yr.0 = 0.0;
        } else {
            yr.0 -= pad;
        }
        yr.1 += pad;
        (xr, yr)
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.data_range();
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            out,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );

        for band in &self.bands {
            let bx0 = sx(band.from.clamp(x0, x1));
            let bx1 = sx(band.to.clamp(x0, x1));
            if bx1 > bx0 {
                let _ = writeln!(
                    out,
                    r#"<rect x="{bx0:.2}" y="{MARGIN_TOP:.1}" width="{:.2}" height="{ph:.1}" fill="{}"/>"#,
                    bx1 - bx0,
                    band.color
                );
            }
        }

        // axes and ticks
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN_LEFT:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
            MARGIN_TOP + ph,
            MARGIN_LEFT + pw,
            MARGIN_TOP + ph
        );
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN_LEFT:.1}" y1="{MARGIN_TOP:.1}" x2="{MARGIN_LEFT:.1}" y2="{:.1}" stroke="black"/>"#,
            MARGIN_TOP + ph
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xp = sx(xv);
            let yp = sy(yv);
            let _ = writeln!(
                out,
                r#"<line x1="{xp:.2}" y1="{:.1}" x2="{xp:.2}" y2="{:.1}" stroke="black"/>"#,
                MARGIN_TOP + ph,
                MARGIN_TOP + ph + 5.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{xp:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
                MARGIN_TOP + ph + 20.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{yp:.2}" x2="{MARGIN_LEFT:.1}" y2="{yp:.2}" stroke="black"/>"#,
                MARGIN_LEFT - 5.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 9.0,
                yp + 4.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if i == 0 { "M" } else { "L" },
                    sx(x.clamp(x0, x1)),
                    sy(y.clamp(y0, y1))
                );
            }
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.6"/>"#,
                d.trim_end(),
                s.color
            );
        }

        // legend, top-right of the plot area
        for (i, s) in self.series.iter().enumerate() {
            let ly = MARGIN_TOP + 14.0 + i as f64 * 16.0;
            let lx = MARGIN_LEFT + pw - 150.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#,
                lx + 22.0,
                s.color
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 28.0,
                ly + 4.0,
                escape(&s.label)
            );
        }

        out.push_str("</svg>\n");
        out
    }
}

/// Render validity lattices as per-location cell grids (one panel per
/// boundary), valid cells filled.
pub fn render_vpt_panels(boundaries: &[(String, &crate::metrics::VptBoundary)]) -> String {
    let panel = 250.0;
    let gap = 30.0;
    let total_w = boundaries.len() as f64 * (panel + gap) + gap;
    let total_h = panel + 90.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {total_w} {total_h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#
    );
    for (i, (label, b)) in boundaries.iter().enumerate() {
        let ox = gap + i as f64 * (panel + gap);
        let oy = 40.0;
        let n = b.grid.n_xy();
        let cells = (2 * n + 1) as f64;
        let cell = panel / cells;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="24" text-anchor="middle">{}</text>"#,
            ox + panel / 2.0,
            escape(label)
        );
        for ix in -n..=n {
            for iy in -n..=n {
                // a cell is drawn valid if it holds at every heading offset
                let all_h = (-b.grid.n_heading()..=b.grid.n_heading())
                    .all(|ih| b.is_valid(ix, iy, ih));
                let any_h = (-b.grid.n_heading()..=b.grid.n_heading())
                    .any(|ih| b.is_valid(ix, iy, ih));
                let fill = if all_h {
                    "#2ca02c"
                } else if any_h {
                    "#b5dcb5"
                } else {
                    "#f4f4f4"
                };
                let x = ox + (ix + n) as f64 * cell;
                let y = oy + (n - iy) as f64 * cell;
                let _ = writeln!(
                    out,
                    r##"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}" stroke="#ddd" stroke-width="0.4"/>"##
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">dx (cells of {} m), dy vertical</text>"#,
            ox + panel / 2.0,
            oy + panel + 18.0,
            b.grid.xy_step
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_renders_legend_and_series() {
        let mut chart = Chart::new("PAU", "l [m]", "P(AU)");
        chart.add_series("pole", vec![(0.0, 1.0), (5.0, 0.4), (10.0, 0.1)]);
        chart.add_series("pole_corner", vec![(0.0, 1.0), (5.0, 0.2), (10.0, 0.0)]);
        let svg = chart.render();
        assert!(svg.contains("<svg"));
        assert!(svg.contains("pole"));
        assert!(svg.contains("pole_corner"));
        assert_eq!(svg.matches("<path").count(), 2);
    }

    #[test]
    fn empty_chart_still_renders() {
        let mut chart = Chart::new("flat", "x", "y");
        chart.add_series("flat", vec![(0.0, 1.0), (1.0, 1.0)]);
        let svg = chart.render();
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn identical_charts_render_identically() {
        let build = || {
            let mut c = Chart::new("t", "x", "y");
            c.add_band(1.0, 2.0);
            c.add_series("s", vec![(0.0, 0.3), (1.0, 0.8), (3.0, 0.1)]);
            c.render()
        };
        assert_eq!(build(), build());
    }
}
