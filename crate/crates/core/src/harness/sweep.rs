use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::experiment::{prepare_splits, test_metrics, train_global, train_local, Bench, ExperimentConfig};
use crate::nn::accuracy;
use crate::{Error, Result};

/// Hyper-parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Message passing layers of the global model.
    Layers,
    /// Hard attention size of the local model.
    R,
    /// Damping of the global model.
    Delta,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" | "T" | "layers" => Ok(Self::Layers),
            "r" | "R" => Ok(Self::R),
            "delta" | "damping" => Ok(Self::Delta),
            other => Err(Error::invalid(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            Self::Layers => "T",
            Self::R => "R",
            Self::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

/// Retrains the affected model once per value. `R` sweeps train the local
/// model only; `T` and `δ` sweeps train the global model on top of one
/// local model trained with the base configuration.
pub fn run_sweep(bench: &Bench, cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let splits = prepare_splits(bench, &cfg.selection, cfg.local.k)?;
    let mut points = Vec::with_capacity(values.len());
    let as_count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::invalid(format!("{} must be a positive integer, got {v}", param.label())))
        }
    };
    match param {
        SweepParam::R => {
            for &v in values {
                let lc = crate::local::LocalConfig { r: as_count(v)?, ..cfg.local.clone() };
                let (model, _) = train_local(bench, &splits, &lc, &cfg.local_fit, cfg.seed)?;
                points.push(SweepPoint {
                    value: v,
                    val_accuracy: accuracy(&model, &splits.validation.docs)?,
                    test_accuracy: test_metrics(bench, &splits, &model)?.accuracy,
                });
            }
        }
        SweepParam::Layers | SweepParam::Delta => {
            let global_splits =
                if cfg.global.k == cfg.local.k { splits.clone() } else { prepare_splits(bench, &cfg.selection, cfg.global.k)? };
            let local = if cfg.global_from_local {
                Some(train_local(bench, &splits, &cfg.local, &cfg.local_fit, cfg.seed)?.0)
            } else {
                None
            };
            for &v in values {
                let mut gc = cfg.global.clone();
                match param {
                    SweepParam::Layers => gc.layers = as_count(v)?,
                    _ => gc.delta = v,
                }
                let (model, _) = train_global(bench, &global_splits, &gc, &cfg.global_fit, local.as_ref(), cfg.seed)?;
                points.push(SweepPoint {
                    value: v,
                    val_accuracy: accuracy(&model, &global_splits.validation.docs)?,
                    test_accuracy: test_metrics(bench, &global_splits, &model)?.accuracy,
                });
            }
        }
    }
    Ok(SweepResult { param, points })
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\tval_accuracy\ttest_accuracy\n", self.param.label());
        for p in &self.points {
            let _ = writeln!(s, "{}\t{:.4}\t{:.4}", p.value, p.val_accuracy, p.test_accuracy);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>8} {:>9} {:>9}\n", self.param.label(), "val", "test");
        for p in &self.points {
            let _ = writeln!(s, "{:>8} {:>9.2} {:>9.2}", p.value, 100.0 * p.val_accuracy, 100.0 * p.test_accuracy);
        }
        s
    }

    /// Test accuracy against the swept value.
    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.value, 100.0 * p.test_accuracy)).collect();
        line_plot_svg(&pts, self.param.label(), "accuracy (%)")
    }
}

/// A standalone SVG line chart with labelled axes and tick marks.
pub fn line_plot_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 56.0;
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(&mut points.iter().map(|p| p.0));
    let (y0, y1) = span(&mut points.iter().map(|p| p.1));
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {} L{} {} M{M} {} L{M} {M}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M,
        H - M
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{}" x2="{px:.1}" y2="{}" stroke="black"/>"#, H - M, H - M + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            H - M + 18.0,
            tick(xv)
        );
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.1}" x2="{M}" y2="{py:.1}" stroke="black"/>"#, M - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            M - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, path.join(" "));
    for &(x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#, sx(x), sy(y));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.fract().abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed() {
        let svg = line_plot_svg(&[(1.0, 80.0), (5.0, 85.5), (10.0, 85.0)], "T", "accuracy <%>");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("accuracy &lt;%&gt;"));
        // A single point still gets a non-degenerate axis.
        assert!(!line_plot_svg(&[(3.0, 50.0)], "x", "y").contains("NaN"));
    }

    #[test]
    fn parses_parameter_names() {
        assert_eq!("T".parse::<SweepParam>().unwrap(), SweepParam::Layers);
        assert_eq!("delta".parse::<SweepParam>().unwrap(), SweepParam::Delta);
        assert!("k".parse::<SweepParam>().is_err());
    }
}
