use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{FieldPolygon, PostprocessError};

/// Lower histogram edges in hectares; the last bin is open-ended.
pub const DEFAULT_BIN_EDGES_HA: [f64; 8] = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower_ha: f64,
    /// `None` for the open-ended last bin.
    pub upper_ha: Option<f64>,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSizeStats {
    pub count: usize,
    pub median_ha: f64,
    pub min_ha: f64,
    pub max_ha: f64,
    pub total_ha: f64,
    pub histogram: Vec<HistogramBin>,
}

pub(crate) fn check_edges(edges: &[f64]) -> Result<(), PostprocessError> {
    let ok = !edges.is_empty() && edges.iter().all(|e| e.is_finite()) && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(PostprocessError::BinEdges(edges.to_vec()))
    }
}

/// Count, median and percentage histogram of field areas. Areas below
/// the first edge are counted in the first bin.
pub fn field_stats(polys: &[FieldPolygon], bin_edges_ha: &[f64]) -> Result<FieldSizeStats, PostprocessError> {
    check_edges(bin_edges_ha)?;
    if polys.is_empty() {
        return Err(PostprocessError::Empty);
    }
    let mut areas: Vec<f64> = polys.iter().map(|p| p.area_ha).collect();
    areas.sort_by(f64::total_cmp);
    let n = areas.len();
    let median_ha = if n % 2 == 1 { areas[n / 2] } else { (areas[n / 2 - 1] + areas[n / 2]) / 2.0 };

    let mut counts = vec![0usize; bin_edges_ha.len()];
    for a in &areas {
        let k = bin_edges_ha.partition_point(|e| e <= a).saturating_sub(1);
        counts[k] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| HistogramBin {
            lower_ha: bin_edges_ha[k],
            upper_ha: bin_edges_ha.get(k + 1).copied(),
            count,
            percent: 100.0 * count as f64 / n as f64,
        })
        .collect();
    Ok(FieldSizeStats {
        count: n,
        median_ha,
        min_ha: areas[0],
        max_ha: areas[n - 1],
        total_ha: areas.iter().sum(),
        histogram,
    })
}

/// Bar chart of the percentage histogram as a standalone SVG document.
pub fn histogram_svg(stats: &FieldSizeStats) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let bins = stats.histogram.len().max(1) as f64;
    let bar_w = (w - 2.0 * pad) / bins;
    let top = stats.histogram.iter().map(|b| b.percent).fold(1.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">Field sizes: {} fields, median {:.2} ha</text>"#,
        w / 2.0,
        stats.count,
        stats.median_ha
    );
    for (k, b) in stats.histogram.iter().enumerate() {
        let bh = (h - 2.0 * pad) * b.percent / top;
        let x = pad + k as f64 * bar_w;
        let y = h - pad - bh;
        let label = match b.upper_ha {
            Some(u) => format!("{}-{}", b.lower_ha, u),
            None => format!("{}+", b.lower_ha),
        };
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{y:.1}" width="{:.1}" height="{bh:.1}" fill="#4a7c3a"/>"##,
            x + 2.0,
            bar_w - 4.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.1}%</text>"#, x + bar_w / 2.0, y - 4.0, b.percent);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#, x + bar_w / 2.0, h - pad + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">area (ha)</text>"#, w / 2.0, h - 8.0);
    s.push_str("</svg>\n");
    s
}
