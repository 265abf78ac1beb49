//! SVG scatter plots of a 2-D embedding.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::class_names_of;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse {
        path: std::path::PathBuf,
        message: String,
    },
    #[error("row count mismatch: {embedding} embedding rows, {labels} label rows")]
    RowMismatch { embedding: usize, labels: usize },
    #[error("nothing to plot")]
    Empty,
    #[error("plot width, height and point radius must be positive")]
    Style,
    #[error("non-finite coordinate at row {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    /// Palette color per class; unsupervised samples drawn in black.
    ByLabel,
    /// Red (0) to green (1).
    ByConfidence,
}

impl std::str::FromStr for ColorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "label" | "by-label" => Ok(ColorMode::ByLabel),
            "confidence" | "by-confidence" => Ok(ColorMode::ByConfidence),
            other => Err(format!("unknown color mode {other:?} (expected label or confidence)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub color_mode: ColorMode,
    pub width: u32,
    pub height: u32,
    pub radius: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            color_mode: ColorMode::ByLabel,
            width: 800,
            height: 800,
            radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub class: usize,
    pub supervised: bool,
    pub confidence: f64,
}

/// Cycled when there are more than 12 classes.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

pub fn label_color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

/// `#RRGGBB` with r = round(255(1-c)), g = round(255c), b = 0.
pub fn confidence_color(c: f64) -> String {
    let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
    let r = (255.0 * (1.0 - c)).round() as u8;
    let g = (255.0 * c).round() as u8;
    format!("#{r:02X}{g:02X}00")
}

/// One `<circle>` per point, in input order. Output depends only on the inputs.
pub fn render_scatter(points: &[ScatterPoint], style: &PlotStyle) -> Result<String, PlotError> {
    if points.is_empty() {
        return Err(PlotError::Empty);
    }
    if let Some(i) = points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(PlotError::NonFinite(i));
    }
    let (w, h) = (f64::from(style.width), f64::from(style.height));
    let margin = style.radius + 4.0;
    let bounds = |f: fn(&ScatterPoint) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = bounds(|p| p.x);
    let (y0, y1) = bounds(|p| p.y);
    let scale = |v: f64, lo: f64, hi: f64, len: f64| {
        if hi > lo {
            margin + (v - lo) / (hi - lo) * (len - 2.0 * margin)
        } else {
            len / 2.0
        }
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}">"#,
        style.width, style.height
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for p in points {
        let fill = match style.color_mode {
            ColorMode::ByLabel if p.supervised => label_color(p.class).to_string(),
            ColorMode::ByLabel => "#000000".to_string(),
            ColorMode::ByConfidence => confidence_color(p.confidence),
        };
        let cx = scale(p.x, x0, x1, w);
        // SVG y grows downwards.
        let cy = h - scale(p.y, y0, y1, h);
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{}" fill="{fill}"/>"#,
            style.radius
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn read_csv(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), PlotError> {
    let parse = |message: String| PlotError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse(e.to_string()))?.clone();
    let rows = rdr
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| parse(e.to_string()))?;
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, PlotError> {
    header.iter().position(|h| h == name).ok_or_else(|| PlotError::Parse {
        path: path.to_path_buf(),
        message: format!("missing column {name:?}"),
    })
}

fn number(rec: &csv::StringRecord, col: usize, row: usize, path: &Path) -> Result<f64, PlotError> {
    rec.get(col)
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| PlotError::Parse {
            path: path.to_path_buf(),
            message: format!("row {}: column {} is not a number", row + 1, col + 1),
        })
}

/// Input files of one plot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    /// `id,y0,y1`
    pub embedding: PathBuf,
    /// `id,assigned_label,...,supervised`, as written by a propagation round.
    pub labels: PathBuf,
    /// `id,confidence`; when absent the `confidence` column of `labels` is used.
    pub confidence: Option<PathBuf>,
    pub style: PlotStyle,
}

pub fn render_plot(spec: &PlotSpec) -> Result<String, PlotError> {
    if spec.style.width == 0 || spec.style.height == 0 || !(spec.style.radius > 0.0) {
        return Err(PlotError::Style);
    }
    let points = load_scatter(&spec.embedding, &spec.labels, spec.confidence.as_deref())?;
    render_scatter(&points, &spec.style)
}

/// Joins the embedding, label and optional confidence files row by row.
pub fn load_scatter(
    embedding: &Path,
    labels: &Path,
    confidence: Option<&Path>,
) -> Result<Vec<ScatterPoint>, PlotError> {
    let (eh, erows) = read_csv(embedding)?;
    let (lh, lrows) = read_csv(labels)?;
    if erows.len() != lrows.len() {
        return Err(PlotError::RowMismatch {
            embedding: erows.len(),
            labels: lrows.len(),
        });
    }
    let (y0, y1) = (column(&eh, "y0", embedding)?, column(&eh, "y1", embedding)?);
    let lab = column(&lh, "assigned_label", labels)?;
    let sup = column(&lh, "supervised", labels)?;
    let (conf_path, ch, crows) = match confidence {
        Some(p) => {
            let (h, rows) = read_csv(p)?;
            if rows.len() != erows.len() {
                return Err(PlotError::RowMismatch {
                    embedding: erows.len(),
                    labels: rows.len(),
                });
            }
            (p, h, rows)
        }
        None => (labels, lh.clone(), lrows.clone()),
    };
    let conf = column(&ch, "confidence", conf_path)?;

    let names: Vec<String> = lrows
        .iter()
        .map(|r| r.get(lab).unwrap_or_default().to_string())
        .collect();
    let classes = class_names_of(&names);
    let mut points = Vec::with_capacity(erows.len());
    for (i, (e, l)) in erows.iter().zip(&lrows).enumerate() {
        if e.get(0) != l.get(0) || e.get(0) != crows[i].get(0) {
            return Err(PlotError::Parse {
                path: labels.to_path_buf(),
                message: format!("row {}: id {:?} does not match embedding id {:?}", i + 1, l.get(0), e.get(0)),
            });
        }
        points.push(ScatterPoint {
            x: number(e, y0, i, embedding)?,
            y: number(e, y1, i, embedding)?,
            class: classes.iter().position(|c| *c == names[i]).unwrap_or(0),
            supervised: l.get(sup).map(str::trim) == Some("1"),
            confidence: number(&crows[i], conf, i, conf_path)?,
        });
    }
    Ok(points)
}
