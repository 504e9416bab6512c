//! Deterministic SVG heatmaps of axis-aligned 2-D slices.

use std::fmt::Write;

use anyhow::{bail, Result};

use hormander::{GridField, NodeClass};

pub struct SliceSpec {
    pub axes: [usize; 2],
    /// Coordinates along the other axes (entries at the plotted axes are ignored).
    pub at: Option<Vec<f64>>,
    pub cell_px: usize,
}

impl Default for SliceSpec {
    fn default() -> Self {
        Self {
            axes: [0, 1],
            at: None,
            cell_px: 6,
        }
    }
}

const STOPS: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let i = STOPS.iter().position(|s| s.0 >= t).unwrap_or(STOPS.len() - 1).max(1);
    let (t0, c0) = STOPS[i - 1];
    let (t1, c1) = STOPS[i];
    let s = (t - t0) / (t1 - t0);
    let c: Vec<u8> = (0..3).map(|k| (c0[k] + s * (c1[k] - c0[k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn emit_plot(field: &GridField, spec: &SliceSpec) -> Result<String> {
    let grid = field.grid();
    let n = grid.dim();
    let [a, b] = spec.axes;
    if n < 2 || a >= n || b >= n || a == b {
        bail!("slice axes {:?} invalid for a {n}-dimensional grid", spec.axes);
    }
    let dims = grid.dims();
    if dims[a] == 0 || dims[b] == 0 || spec.cell_px == 0 {
        bail!("empty slice");
    }
    // node index along the fixed axes
    let mut base = vec![0usize; n];
    for k in 0..n {
        if k == a || k == b {
            continue;
        }
        base[k] = match &spec.at {
            Some(at) => {
                let x = *at.get(k).ok_or_else(|| anyhow::anyhow!("slice position needs {n} coordinates"))?;
                let f = ((x - grid.origin()[k]) / grid.spacing()[k]).round();
                if !(f >= 0.0 && f < dims[k] as f64) {
                    bail!("slice position {x} outside the grid along axis {k}");
                }
                f as usize
            }
            None => dims[k] / 2,
        };
    }
    let mut idx = base.clone();
    let mut cells = Vec::with_capacity(dims[a] * dims[b]);
    for j in 0..dims[b] {
        for i in 0..dims[a] {
            idx[a] = i;
            idx[b] = j;
            let p = grid.index_of(&idx);
            let v = (grid.class(p) != NodeClass::Exterior).then(|| field.value(p));
            cells.push((i, j, v));
        }
    }
    let (lo, hi) = cells
        .iter()
        .filter_map(|c| c.2)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let px = spec.cell_px;
    let (w, h) = (dims[a] * px, dims[b] * px);
    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#)?;
    for (i, j, v) in cells {
        let fill = match v {
            Some(v) if hi > lo => color((v - lo) / (hi - lo)),
            Some(_) => color(0.5),
            None => "#ffffff".to_string(),
        };
        // rows run upwards like the coordinate axis
        let y = (dims[b] - 1 - j) * px;
        writeln!(out, r#"<rect x="{}" y="{y}" width="{px}" height="{px}" fill="{fill}"/>"#, i * px)?;
    }
    writeln!(out, "</svg>")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hormander::GridDomain;
    use std::sync::Arc;

    #[test]
    fn constant_field_is_uniform() {
        let g = Arc::new(GridDomain::build(&[0.0, 0.0], &[1.0, 1.0], 0.25).unwrap());
        let svg = emit_plot(&GridField::constant(g, 3.0), &SliceSpec::default()).unwrap();
        let fills: std::collections::BTreeSet<&str> = svg.match_indices("fill=\"").map(|(i, _)| &svg[i + 6..i + 13]).collect();
        assert_eq!(fills.len(), 1);
        assert_eq!(svg.matches("<rect").count(), 25);
    }

    #[test]
    fn deterministic_and_validated() {
        let g = Arc::new(GridDomain::build(&[0.0; 3], &[1.0; 3], 0.25).unwrap());
        let f = GridField::from_fn(g.clone(), |x| x[0] + 2.0 * x[1] - x[2]);
        let spec = SliceSpec {
            axes: [0, 2],
            at: Some(vec![0.0, 0.5, 0.0]),
            cell_px: 2,
        };
        assert_eq!(emit_plot(&f, &spec).unwrap(), emit_plot(&f, &spec).unwrap());
        let bad = SliceSpec {
            axes: [0, 0],
            ..SliceSpec::default()
        };
        assert!(emit_plot(&f, &bad).is_err());
        let out = SliceSpec {
            at: Some(vec![0.0, 0.0, 7.0]),
            ..SliceSpec::default()
        };
        assert!(emit_plot(&f, &out).is_err());
        let zero = SliceSpec {
            cell_px: 0,
            ..SliceSpec::default()
        };
        assert!(emit_plot(&f, &zero).is_err());
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(-3.0), color(0.0));
    }
}
