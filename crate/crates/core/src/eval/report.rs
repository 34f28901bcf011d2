use std::fmt::{self, Write as _};
use std::io::Write;

use super::roc::RocCurve;
use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::models::DetectorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    FrameRoc,
    ClipCv,
    Throughput,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::FrameRoc => "frame_roc",
            Protocol::ClipCv => "clip_cv",
            Protocol::Throughput => "throughput",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub detector: Option<DetectorKind>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub auc: Option<f64>,
    pub fps: Option<f64>,
    /// Accuracy with each feature left out.
    pub ablation: Vec<(FeatureKind, f64)>,
    /// Further named values (per-scene AUCs, excluded frame counts, ...).
    pub extra: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            detector: None,
            fold_accuracies: Vec::new(),
            mean_accuracy: None,
            ci_half_width: None,
            auc: None,
            fps: None,
            ablation: Vec::new(),
            extra: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.extra.push((key.into(), value.to_string()));
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut r = vec![("protocol".to_string(), self.protocol.name().to_string())];
        if let Some(d) = self.detector {
            r.push(("detector".into(), format!("{d:?}").to_lowercase()));
        }
        if let Some(a) = self.auc {
            r.push(("auc".into(), a.to_string()));
        }
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            r.push((format!("fold_{}_accuracy", i + 1), a.to_string()));
        }
        if let Some(m) = self.mean_accuracy {
            r.push(("mean_accuracy".into(), m.to_string()));
        }
        if let Some(c) = self.ci_half_width {
            r.push(("ci95_half_width".into(), c.to_string()));
        }
        for (f, a) in &self.ablation {
            r.push((format!("accuracy_without_{}", f.name()), a.to_string()));
        }
        if let Some(f) = self.fps {
            r.push(("fps".into(), format!("{f:.2}")));
        }
        r.extend(self.extra.iter().cloned());
        r
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.rows() {
            writeln!(f, "{k:<32} {v}")?;
        }
        Ok(())
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Parse(e.to_string())
}

fn write_header(w: &mut impl Write, header: &[String]) -> Result<()> {
    for h in header {
        writeln!(w, "# {h}").map_err(io)?;
    }
    Ok(())
}

pub fn write_report_csv(mut w: impl Write, header: &[String], report: &EvalReport) -> Result<()> {
    write_header(&mut w, header)?;
    writeln!(w, "field,value").map_err(io)?;
    for (k, v) in report.rows() {
        writeln!(w, "{k},{v}").map_err(io)?;
    }
    Ok(())
}

/// Long-format ROC points: `curve,fpr,tpr`.
pub fn write_roc_csv(
    mut w: impl Write,
    header: &[String],
    curves: &[(String, &RocCurve)],
) -> Result<()> {
    write_header(&mut w, header)?;
    writeln!(w, "curve,fpr,tpr").map_err(io)?;
    for (name, c) in curves {
        for (x, y) in &c.points {
            writeln!(w, "{name},{x},{y}").map_err(io)?;
        }
    }
    Ok(())
}

pub fn write_folds_csv(mut w: impl Write, header: &[String], folds: &[f64]) -> Result<()> {
    write_header(&mut w, header)?;
    writeln!(w, "fold,accuracy").map_err(io)?;
    for (i, a) in folds.iter().enumerate() {
        writeln!(w, "{},{a}", i + 1).map_err(io)?;
    }
    Ok(())
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Standalone SVG line plot of one or more ROC curves.
pub fn roc_svg(curves: &[(String, &RocCurve)]) -> String {
    let (size, pad) = (400.0, 50.0);
    let px = |x: f64| pad + x * size;
    let py = |y: f64| pad + (1.0 - y) * size;
    let total = size + 2.0 * pad;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="white" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#bbb" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">false positive rate</text>"#,
        px(0.5),
        total - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">true positive rate</text>"#,
        py(0.5),
        py(0.5)
    );
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{} (AUC {:.3})</text>"#,
            px(0.45),
            py(0.05) - 16.0 * (curves.len() - 1 - i) as f64,
            escape(name),
            c.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
