//! Two-dimensional loss slices `f(t1, t2) = l(center + t1 xi + t2 eta)` along
//! random Gaussian directions, with CSV / JSON / SVG contour export.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Objective, Space};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub direction_sigma: f64,
    pub t1_range: (f64, f64),
    pub t2_range: (f64, f64),
    /// Grid nodes along t1 and t2.
    pub resolution: (usize, usize),
    pub seed: u64,
    pub space: Space,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            direction_sigma: 0.05,
            t1_range: (-1.0, 1.0),
            t2_range: (-1.0, 1.0),
            resolution: (51, 51),
            seed: 0,
            space: Space::Psi,
        }
    }
}

impl LandscapeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), n) in [
            ("t1", self.t1_range, self.resolution.0),
            ("t2", self.t2_range, self.resolution.1),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] is invalid")));
            }
            // A single node only makes sense for a degenerate range.
            if n == 0 || (n == 1 && lo != hi) || (n >= 2 && lo == hi) {
                return Err(Error::InvalidConfig(format!(
                    "{name} needs at least 2 nodes over a proper range (got {n} over [{lo}, {hi}])"
                )));
            }
        }
        if !(self.direction_sigma >= 0.0 && self.direction_sigma.is_finite()) {
            return Err(Error::InvalidConfig("direction_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn t1_axis(&self) -> Vec<f64> {
        axis(self.t1_range, self.resolution.0)
    }

    pub fn t2_axis(&self) -> Vec<f64> {
        axis(self.t2_range, self.resolution.1)
    }
}

fn axis((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            // Symmetric form keeps the midpoint of a symmetric range at 0.
            let a = i as f64 / last;
            lo * (1.0 - a) + hi * a
        })
        .collect()
}

/// Two independent Gaussian directions scaled by `direction_sigma`.
pub fn sample_directions(dim: usize, cfg: &LandscapeConfig) -> (Vec<f64>, Vec<f64>) {
    let seed = rng::salted(cfg.seed, rng::salt::DIRECTIONS);
    let draw = |stream: u64| -> Vec<f64> {
        let mut r = rng::stream(seed, stream);
        (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                cfg.direction_sigma * z
            })
            .collect()
    };
    (draw(0), draw(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    /// `loss[i][j]` at `(t1[i], t2[j])`; `None` where the objective failed.
    pub loss: Vec<Vec<Option<f64>>>,
    pub failed: usize,
    pub center_loss: f64,
    pub config: LandscapeConfig,
}

impl LandscapeGrid {
    /// Smallest and largest finite loss.
    pub fn range(&self) -> Option<(f64, f64)> {
        let mut it = self.loss.iter().flatten().flatten().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(a, b), v| (a.min(v), b.max(v))))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `t1,t2,loss` rows in row-major order; failed cells have an empty loss.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t1,t2,loss\n");
        for (i, t1) in self.t1.iter().enumerate() {
            for (j, t2) in self.t2.iter().enumerate() {
                match self.loss[i][j] {
                    Some(v) => writeln!(s, "{t1},{t2},{v}").unwrap(),
                    None => writeln!(s, "{t1},{t2},").unwrap(),
                }
            }
        }
        s
    }

    /// Iso-loss contours at `levels` equally spaced heights.
    pub fn to_svg(&self, levels: usize) -> String {
        let (w, h, pad) = (480.0, 480.0, 20.0);
        let n1 = self.t1.len();
        let n2 = self.t2.len();
        let sx = |i: f64| pad + if n1 > 1 { i / (n1 - 1) as f64 } else { 0.5 } * (w - 2.0 * pad);
        let sy = |j: f64| h - pad - if n2 > 1 { j / (n2 - 1) as f64 } else { 0.5 } * (h - 2.0 * pad);
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        )
        .unwrap();
        writeln!(
            svg,
            r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="white" stroke="black"/>"#,
            w - 2.0 * pad,
            h - 2.0 * pad
        )
        .unwrap();
        for (k, level, segments) in contour_segments(self, levels) {
            let shade = 40 + (180 * k / levels.max(1));
            for ((x0, y0), (x1, y1)) in segments {
                writeln!(
                    svg,
                    r#"<polyline class="contour" data-level="{level}" points="{:.3},{:.3} {:.3},{:.3}" fill="none" stroke="rgb({shade},0,{})" stroke-width="1"/>"#,
                    sx(x0),
                    sy(y0),
                    sx(x1),
                    sy(y1),
                    255 - shade
                )
                .unwrap();
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

type Segment = ((f64, f64), (f64, f64));

/// Marching squares over the grid, in index coordinates. Cells touching a
/// failed node are skipped.
fn contour_segments(grid: &LandscapeGrid, levels: usize) -> Vec<(usize, f64, Vec<Segment>)> {
    let Some((lo, hi)) = grid.range() else {
        return Vec::new();
    };
    if levels == 0 || hi <= lo {
        return Vec::new();
    }
    let step = (hi - lo) / (levels + 1) as f64;
    let n1 = grid.t1.len();
    let n2 = grid.t2.len();
    let mut out = Vec::new();
    for k in 1..=levels {
        let level = lo + step * k as f64;
        let mut segs = Vec::new();
        for i in 0..n1.saturating_sub(1) {
            for j in 0..n2.saturating_sub(1) {
                let corners = [
                    (i as f64, j as f64, grid.loss[i][j]),
                    (i as f64 + 1.0, j as f64, grid.loss[i + 1][j]),
                    (i as f64 + 1.0, j as f64 + 1.0, grid.loss[i + 1][j + 1]),
                    (i as f64, j as f64 + 1.0, grid.loss[i][j + 1]),
                ];
                if corners.iter().any(|c| c.2.is_none()) {
                    continue;
                }
                let mut pts = Vec::with_capacity(4);
                for e in 0..4 {
                    let (xa, ya, a) = corners[e];
                    let (xb, yb, b) = corners[(e + 1) % 4];
                    let (a, b) = (a.unwrap(), b.unwrap());
                    if (a < level) != (b < level) {
                        let t = (level - a) / (b - a);
                        pts.push((xa + t * (xb - xa), ya + t * (yb - ya)));
                    }
                }
                // Two crossings give one segment; four (a saddle) give two.
                for pair in pts.chunks_exact(2) {
                    segs.push((pair[0], pair[1]));
                }
            }
        }
        out.push((k, level, segs));
    }
    out
}

/// Evaluates the objective on every grid node, in parallel.
pub fn evaluate_grid(
    center: &[f64],
    xi: &[f64],
    eta: &[f64],
    cfg: &LandscapeConfig,
    obj: &dyn Objective,
) -> Result<LandscapeGrid> {
    cfg.validate()?;
    if center.len() != obj.dim() || xi.len() != center.len() || eta.len() != center.len() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: obj.dim(),
            got: center.len().min(xi.len()).min(eta.len()),
        });
    }
    let center_loss = obj.value(center)?;
    let t1 = cfg.t1_axis();
    let t2 = cfg.t2_axis();
    let n2 = t2.len();
    let cells: Vec<Option<f64>> = (0..t1.len() * n2)
        .into_par_iter()
        .map(|idx| grid_point_loss(center, xi, eta, t1[idx / n2], t2[idx % n2], obj))
        .collect();
    let failed = cells.iter().filter(|c| c.is_none()).count();
    let loss = cells.chunks(n2).map(<[_]>::to_vec).collect();
    Ok(LandscapeGrid {
        t1,
        t2,
        loss,
        failed,
        center_loss,
        config: cfg.clone(),
    })
}

/// Loss at `center + (t1 xi + t2 eta)`; the inner sum is formed first so that
/// swapping the two directions swaps the roles of `t1` and `t2` exactly.
pub fn grid_point_loss(
    center: &[f64],
    xi: &[f64],
    eta: &[f64],
    t1: f64,
    t2: f64,
    obj: &dyn Objective,
) -> Option<f64> {
    let x: Vec<f64> = center
        .iter()
        .zip(xi.iter().zip(eta))
        .map(|(c, (a, b))| c + (t1 * a + t2 * b))
        .collect();
    obj.value(&x).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Csv,
    Json,
    SvgContour,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" | "svg-contour" => Ok(Self::SvgContour),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// Number of contour levels drawn by the SVG export.
pub const SVG_LEVELS: usize = 12;

pub fn export_grid(grid: &LandscapeGrid, path: &Path, format: ExportFormat) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => grid.to_csv(),
        ExportFormat::Json => grid.to_json()?,
        ExportFormat::SvgContour => grid.to_svg(SVG_LEVELS),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
