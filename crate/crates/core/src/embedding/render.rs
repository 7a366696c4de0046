use std::fs;
use std::path::{Path, PathBuf};

use plotters::coord::Shift;
use plotters::prelude::*;
use plotters::style::colors::colormaps::ViridisRGB;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, ProjectionResult};
use crate::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coloring {
    Affinity,
    MolecularWeight,
    ClusterHighlight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotFormat {
    #[default]
    Svg,
    Png,
}

impl PlotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PlotFormat::Svg => "svg",
            PlotFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOutput {
    pub plot: PathBuf,
    pub csv: PathBuf,
    pub points: usize,
    /// Points drawn in neutral gray for lack of a color value.
    pub gray_points: usize,
}

const SIZE: (u32, u32) = (800, 800);
const MARGIN: f64 = 30.0;
const GRAY: RGBColor = RGBColor(190, 190, 190);
const HIGHLIGHT: [RGBColor; 6] = [
    RGBColor(228, 26, 28),
    RGBColor(55, 126, 184),
    RGBColor(77, 175, 74),
    RGBColor(152, 78, 163),
    RGBColor(255, 127, 0),
    RGBColor(166, 86, 40),
];

struct Point {
    x: f64,
    y: f64,
    color: RGBColor,
    highlighted: bool,
}

fn draw<DB: DrawingBackend>(area: DrawingArea<DB, Shift>, points: &[Point]) -> Result<(), String> {
    let err = |e: DrawingAreaErrorKind<DB::ErrorType>| e.to_string();
    area.fill(&WHITE).map_err(err)?;
    let (x0, x1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (y0, y1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.y), b.max(p.y)));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (SIZE.0 as f64 - 2.0 * MARGIN, SIZE.1 as f64 - 2.0 * MARGIN);
    let px = |p: &Point| {
        (
            (MARGIN + (p.x - x0) / span(x0, x1) * w) as i32,
            (MARGIN + (1.0 - (p.y - y0) / span(y0, y1)) * h) as i32,
        )
    };
    area.draw(&Rectangle::new(
        [(MARGIN as i32 - 10, MARGIN as i32 - 10), (SIZE.0 as i32 - MARGIN as i32 + 10, SIZE.1 as i32 - MARGIN as i32 + 10)],
        BLACK.stroke_width(1),
    ))
    .map_err(err)?;
    for layer in [false, true] {
        for p in points.iter().filter(|p| p.highlighted == layer) {
            area.draw(&Circle::new(px(p), 3, p.color.filled())).map_err(err)?;
        }
    }
    area.present().map_err(err)
}

/// Draw a projection colored by affinity, molecular weight or cluster, and
/// write `complex_id,x,y,color_value` next to it. Points without a color
/// value are gray and have an empty `color_value`.
pub fn render_projection(
    result: &ProjectionResult,
    dataset: &Dataset,
    coloring: Coloring,
    highlight_clusters: &[String],
    format: PlotFormat,
    out_stem: &Path,
) -> Result<RenderOutput, EmbeddingError> {
    let known = dataset.cluster_ids();
    if let Some(c) = highlight_clusters.iter().find(|c| !known.contains(c.as_str())) {
        return Err(EmbeddingError::UnknownCluster(c.clone()));
    }
    let mut values = Vec::with_capacity(result.coordinates.len());
    for id in result.coordinates.keys() {
        let r = dataset.get(id).ok_or_else(|| EmbeddingError::UnknownId(id.clone()))?;
        values.push(match coloring {
            Coloring::Affinity => Some(r.pk()),
            Coloring::MolecularWeight => r.molecular_weight,
            Coloring::ClusterHighlight => highlight_clusters
                .iter()
                .position(|c| *c == r.cluster_id)
                .map(|i| i as f64),
        });
    }
    let present = values.iter().flatten();
    let lo = present.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = present.copied().fold(f64::NEG_INFINITY, f64::max);
    let points: Vec<Point> = result
        .coordinates
        .values()
        .zip(&values)
        .map(|(&(x, y), v)| {
            let color = match (coloring, v) {
                (_, None) => GRAY,
                (Coloring::ClusterHighlight, Some(i)) => HIGHLIGHT[*i as usize % HIGHLIGHT.len()],
                (_, Some(v)) => {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                    ViridisRGB.get_color(t as f32)
                }
            };
            Point {
                x,
                y,
                color,
                highlighted: v.is_some(),
            }
        })
        .collect();

    if let Some(parent) = out_stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| EmbeddingError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let plot = out_stem.with_extension(format.extension());
    let csv_path = out_stem.with_extension("csv");
    match format {
        PlotFormat::Svg => draw(SVGBackend::new(&plot, SIZE).into_drawing_area(), &points),
        PlotFormat::Png => draw(BitMapBackend::new(&plot, SIZE).into_drawing_area(), &points),
    }
    .map_err(EmbeddingError::Plot)?;

    let file = fs::File::create(&csv_path).map_err(|source| EmbeddingError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["complex_id", "x", "y", "color_value"])?;
    for ((id, (x, y)), v) in result.coordinates.iter().zip(&values) {
        w.write_record([
            id.clone(),
            x.to_string(),
            y.to_string(),
            v.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(RenderOutput {
        plot,
        csv: csv_path,
        points: points.len(),
        gray_points: values.iter().filter(|v| v.is_none()).count(),
    })
}
