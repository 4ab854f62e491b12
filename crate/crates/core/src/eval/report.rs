//! Tab-separated tables and PPM heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use crate::binio::write_file;
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut s = self.header.join("\t");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join("\t"));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_tsv().as_bytes())
    }
}

/// Float formatting used in reports.
pub fn num(x: f64) -> String {
    format!("{x:.6e}")
}

fn colour(t: f64) -> [u8; 3] {
    // blue → white → red
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (u, u, 1.0)
    } else {
        let u = (t - 0.5) / 0.5;
        (1.0, 1.0 - u, 1.0 - u)
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Binary PPM (`P6`) of `values` at 2-D `coords`: every pixel takes the
/// value of its nearest point. Colours span the 2nd to 98th percentile.
pub fn heatmap_ppm(coords: &Tensor, values: &[f64], size: usize) -> Vec<u8> {
    let n = coords.rows();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..n {
        let x = coords.row_slice(i);
        for k in 0..2 {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let (vmin, vmax) = (q(0.02), q(0.98));
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let mut out = format!("P6\n{size} {size}\n255\n").into_bytes();
    for py in 0..size {
        let y = hi[1] - (py as f64 + 0.5) / size as f64 * (hi[1] - lo[1]);
        for px in 0..size {
            let x = lo[0] + (px as f64 + 0.5) / size as f64 * (hi[0] - lo[0]);
            let mut best = (f64::INFINITY, 0);
            for i in 0..n {
                let c = coords.row_slice(i);
                let d = (c[0] - x).powi(2) + (c[1] - y).powi(2);
                if d < best.0 {
                    best = (d, i);
                }
            }
            out.extend_from_slice(&colour((values[best.1] - vmin) / span));
        }
    }
    out
}

pub fn write_heatmap(path: &Path, coords: &Tensor, values: &[f64], size: usize) -> Result<()> {
    write_file(path, &heatmap_ppm(coords, values, size))
}
