//! Minimal SVG line charts: one polyline per series with an optional
//! shaded band, linear or log axes. Enough for the error and scaling
//! curves without pulling in a plotting stack.

use std::io::Write as _;
use std::path::Path;

pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Lower and upper band edges, same length as `xs`.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

const COLORS: [&str; 4] = ["#1f6fb4", "#d1495b", "#3a9a5c", "#8e6cb8"];
const W: f64 = 660.0;
const H: f64 = 460.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn map(&self, v: f64, pix_lo: f64, pix_hi: f64) -> f64 {
        let (v, lo, hi) = if self.log {
            (v.max(1e-300).log10(), self.lo.log10(), self.hi.log10())
        } else {
            (v, self.lo, self.hi)
        };
        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        pix_lo + t * (pix_hi - pix_lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.lo.max(1e-300).log10().floor() as i32;
            let hi = self.hi.max(1e-300).log10().ceil() as i32;
            (lo..=hi).map(|e| 10f64.powi(e)).collect()
        } else {
            let span = self.hi - self.lo;
            if span <= 0.0 {
                return vec![self.lo];
            }
            let step = 10f64.powf(span.log10().floor());
            let step = if span / step > 5.0 { step * 2.0 } else { step };
            let mut t = (self.lo / step).ceil() * step;
            let mut out = Vec::new();
            while t <= self.hi + 1e-12 * span {
                out.push(t);
                t += step;
            }
            out
        }
    }
}

fn finite_range(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() && (!log || v > 0.0) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (if log { 0.1 } else { 0.0 }, 1.0)
    } else if lo == hi {
        (lo * 0.5, hi * 1.5 + 1e-12)
    } else {
        (lo, hi)
    }
}

pub fn write_plot(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    logx: bool,
    logy: bool,
) -> std::io::Result<()> {
    let xaxis = {
        let (lo, hi) = finite_range(series.iter().flat_map(|s| s.xs.iter().copied()), logx);
        Axis { lo, hi, log: logx }
    };
    let yaxis = {
        let all = series.iter().flat_map(|s| {
            s.ys.iter()
                .copied()
                .chain(s.band.iter().flat_map(|(a, b)| {
                    a.iter().copied().chain(b.iter().copied())
                }))
        });
        let (lo, hi) = finite_range(all, logy);
        Axis { lo, hi, log: logy }
    };
    let px = |x: f64| xaxis.map(x, MARGIN_L, W - MARGIN_R);
    let py = |y: f64| yaxis.map(y, H - MARGIN_B, MARGIN_T);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )?;
    writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        title
    )?;
    for t in xaxis.ticks() {
        let x = px(t);
        writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#dddddd"/>"##,
            MARGIN_T,
            H - MARGIN_B
        )?;
        writeln!(
            out,
            r#"<text x="{x:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            H - MARGIN_B + 16.0,
            format_tick(t)
        )?;
    }
    for t in yaxis.ticks() {
        let y = py(t);
        writeln!(
            out,
            r##"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#dddddd"/>"##,
            MARGIN_L,
            W - MARGIN_R
        )?;
        writeln!(
            out,
            r#"<text x="{}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            format_tick(t)
        )?;
    }
    writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333"/>"##,
        MARGIN_L,
        MARGIN_T,
        W - MARGIN_L - MARGIN_R,
        H - MARGIN_T - MARGIN_B
    )?;
    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        if let Some((lo, hi)) = &s.band {
            let mut pts = String::new();
            for (x, y) in s.xs.iter().zip(hi) {
                pts.push_str(&format!("{:.1},{:.1} ", px(*x), py(*y)));
            }
            for (x, y) in s.xs.iter().rev().zip(lo.iter().rev()) {
                pts.push_str(&format!("{:.1},{:.1} ", px(*x), py(*y)));
            }
            writeln!(
                out,
                r#"<polygon points="{pts}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#
            )?;
        }
        let pts: String = s
            .xs
            .iter()
            .zip(&s.ys)
            .map(|(x, y)| format!("{:.1},{:.1} ", px(*x), py(*y)))
            .collect();
        writeln!(
            out,
            r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>"#
        )?;
        let ly = MARGIN_T + 16.0 + 16.0 * si as f64;
        writeln!(
            out,
            r#"<line x1="{}" y1="{ly:.1}" x2="{}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            W - MARGIN_R - 110.0,
            W - MARGIN_R - 86.0
        )?;
        writeln!(
            out,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - MARGIN_R - 80.0,
            ly + 4.0,
            s.label
        )?;
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        (MARGIN_L + W - MARGIN_R) / 2.0,
        H - 12.0,
        xlabel
    )?;
    writeln!(
        out,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (MARGIN_T + H - MARGIN_B) / 2.0,
        (MARGIN_T + H - MARGIN_B) / 2.0,
        ylabel
    )?;
    writeln!(out, "</svg>")?;
    Ok(())
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        if (v - v.round()).abs() < 1e-9 {
            format!("{}", v.round() as i64)
        } else {
            format!("{v:.3}")
        }
    } else {
        format!("{v:.0e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_wellformed_svg() {
        let dir = std::env::temp_dir().join("cs4ml_plot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.svg");
        let series = vec![Series {
            label: "cs".into(),
            xs: vec![1.0, 10.0, 100.0],
            ys: vec![1e-1, 1e-3, 1e-6],
            band: Some((vec![5e-2, 5e-4, 5e-7], vec![2e-1, 2e-3, 2e-6])),
        }];
        write_plot(&path, "t", "n", "err", &series, true, true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert!(text.contains("polyline"));
    }
}
