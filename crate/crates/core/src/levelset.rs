//! Level sets of a periodic scalar field and the quadratures over them.
//!
//! Isosurfaces come from marching squares in 2D and from marching
//! tetrahedra over a Kuhn split of every cube in 3D. Both use linear
//! interpolation along edges and wrap across the period, so every extracted
//! level is a closed curve or surface. Strip volumes integrate the
//! piecewise-linear interpolants of `f` and `Q` exactly over the same kind of
//! simplex split, which makes them exactly additive in the levels.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::LevelSetError;
use crate::field::{Grid, ScalarField, VectorField};
use crate::spectral;

/// Relative guard: a level is regular when the smallest `|∇Q|` seen on it
/// is at least this fraction of the torus-wide median `|∇Q|`.
pub const REGULARITY_GUARD: f64 = 1e-3;

/// One segment (2D) or triangle (3D) of an extracted level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    /// Unwrapped vertex positions; they may lie up to one cell outside `[0, 2π)`.
    pub vertices: Vec<[f64; 3]>,
    /// Length in 2D, area in 3D.
    pub measure: f64,
    pub centroid: [f64; 3],
    /// Unit normal pointing towards increasing `Q`.
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Isosurface {
    grid: Grid,
    pub level: f64,
    pub elements: Vec<Element>,
    pub total_measure: f64,
}

impl Isosurface {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// Plain-text dump, one element per line:
    /// vertex coordinates, measure, normal components.
    pub fn write_mesh<W: Write>(&self, mut w: W) -> io::Result<()> {
        let dim = self.grid.dim();
        writeln!(
            w,
            "# level {} dim {} elements {} total_measure {}",
            self.level,
            dim,
            self.elements.len(),
            self.total_measure
        )?;
        for e in &self.elements {
            let mut fields: Vec<String> = Vec::with_capacity(4 * dim + 1);
            for v in &e.vertices {
                fields.extend(v[..dim].iter().map(|c| format!("{c:.17e}")));
            }
            fields.push(format!("{:.17e}", e.measure));
            fields.extend(e.normal[..dim].iter().map(|c| format!("{c:.17e}")));
            writeln!(w, "{}", fields.join(" "))?;
        }
        Ok(())
    }
}

// Square corners in counter-clockwise order and the edges between them.
const SQUARE_CORNERS: [[i64; 2]; 4] = [[0, 0], [1, 0], [1, 1], [0, 1]];
const SQUARE_EDGES: [[usize; 2]; 4] = [[0, 1], [1, 2], [2, 3], [3, 0]];

// Kuhn split of the unit cube: corner id = dx + 2 dy + 4 dz, every tet runs
// from corner 0 to corner 7 along one axis permutation.
const KUHN_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

fn cube_corner(id: usize) -> [i64; 3] {
    [(id & 1) as i64, ((id >> 1) & 1) as i64, ((id >> 2) & 1) as i64]
}

#[inline]
fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

#[inline]
fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Crossing point on the edge from `(pa, qa)` to `(pb, qb)`.
#[inline]
fn crossing(pa: [f64; 3], qa: f64, pb: [f64; 3], qb: f64, c: f64) -> [f64; 3] {
    lerp3(pa, pb, (c - qa) / (qb - qa))
}

fn segment(p0: [f64; 3], p1: [f64; 3], high: [f64; 3]) -> Option<Element> {
    let d = sub3(p1, p0);
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if len == 0.0 {
        return None;
    }
    let mut normal = [d[1] / len, -d[0] / len, 0.0];
    if dot3(normal, sub3(high, p0)) < 0.0 {
        normal = [-normal[0], -normal[1], 0.0];
    }
    Some(Element {
        centroid: lerp3(p0, p1, 0.5),
        vertices: vec![p0, p1],
        measure: len,
        normal,
    })
}

fn triangle(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3], high: [f64; 3]) -> Option<Element> {
    let n = cross3(sub3(p1, p0), sub3(p2, p0));
    let norm = dot3(n, n).sqrt();
    if norm == 0.0 {
        return None;
    }
    let mut normal = [n[0] / norm, n[1] / norm, n[2] / norm];
    let mut vertices = vec![p0, p1, p2];
    if dot3(normal, sub3(high, p0)) < 0.0 {
        normal = [-normal[0], -normal[1], -normal[2]];
        vertices.swap(1, 2);
    }
    let centroid = [
        (p0[0] + p1[0] + p2[0]) / 3.0,
        (p0[1] + p1[1] + p2[1]) / 3.0,
        (p0[2] + p1[2] + p2[2]) / 3.0,
    ];
    Some(Element {
        vertices,
        measure: 0.5 * norm,
        centroid,
        normal,
    })
}

fn march_square(q: &ScalarField, cell: [i64; 3], c: f64, out: &mut Vec<Element>) {
    let grid = q.grid();
    let h = grid.spacing();
    let mut vals = [0.0; 4];
    let mut pos = [[0.0; 3]; 4];
    let mut case = 0usize;
    for (k, off) in SQUARE_CORNERS.iter().enumerate() {
        let m = [cell[0] + off[0], cell[1] + off[1], 0];
        vals[k] = q.values()[grid.index_wrapped(m)];
        pos[k] = [m[0] as f64 * h, m[1] as f64 * h, 0.0];
        if vals[k] > c {
            case |= 1 << k;
        }
    }
    if case == 0 || case == 15 {
        return;
    }
    let cross_edge = |e: usize| {
        let [a, b] = SQUARE_EDGES[e];
        crossing(pos[a], vals[a], pos[b], vals[b], c)
    };
    match case {
        // Saddles: the two high corners are always cut off separately.
        5 | 10 => {
            for corner in (0..4).filter(|k| case & (1 << k) != 0) {
                let before = (corner + 3) % 4;
                let p0 = cross_edge(before);
                let p1 = cross_edge(corner);
                out.extend(segment(p0, p1, pos[corner]));
            }
        }
        _ => {
            let edges: Vec<usize> = (0..4)
                .filter(|&e| {
                    let [a, b] = SQUARE_EDGES[e];
                    (case >> a) & 1 != (case >> b) & 1
                })
                .collect();
            let high = (0..4).find(|k| case & (1 << k) != 0).unwrap();
            out.extend(segment(cross_edge(edges[0]), cross_edge(edges[1]), pos[high]));
        }
    }
}

fn march_tet(pos: [[f64; 3]; 4], vals: [f64; 4], c: f64, out: &mut Vec<Element>) {
    let high: Vec<usize> = (0..4).filter(|&k| vals[k] > c).collect();
    let low: Vec<usize> = (0..4).filter(|&k| vals[k] <= c).collect();
    let x = |a: usize, b: usize| crossing(pos[a], vals[a], pos[b], vals[b], c);
    match high.len() {
        1 => {
            let h = high[0];
            out.extend(triangle(x(h, low[0]), x(h, low[1]), x(h, low[2]), pos[h]));
        }
        3 => {
            let l = low[0];
            out.extend(triangle(x(l, high[0]), x(l, high[1]), x(l, high[2]), pos[high[0]]));
        }
        2 => {
            let (h0, h1, l0, l1) = (high[0], high[1], low[0], low[1]);
            let quad = [x(h0, l0), x(h0, l1), x(h1, l1), x(h1, l0)];
            out.extend(triangle(quad[0], quad[1], quad[2], pos[h0]));
            out.extend(triangle(quad[0], quad[2], quad[3], pos[h0]));
        }
        _ => {}
    }
}

fn march_cube(q: &ScalarField, cell: [i64; 3], c: f64, out: &mut Vec<Element>) {
    let grid = q.grid();
    let h = grid.spacing();
    let mut vals = [0.0; 8];
    let mut pos = [[0.0; 3]; 8];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for id in 0..8 {
        let off = cube_corner(id);
        let m = [cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]];
        vals[id] = q.values()[grid.index_wrapped(m)];
        pos[id] = [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h];
        lo = lo.min(vals[id]);
        hi = hi.max(vals[id]);
    }
    if hi <= c || lo > c {
        return;
    }
    for tet in KUHN_TETS {
        march_tet(
            tet.map(|k| pos[k]),
            tet.map(|k| vals[k]),
            c,
            out,
        );
    }
}

/// Cells of the grid grouped by their first index, for parallel sweeps.
fn cell_rows(grid: Grid) -> impl ParallelIterator<Item = (usize, Vec<[i64; 3]>)> {
    let n = grid.n() as i64;
    let dim = grid.dim();
    (0..grid.n()).into_par_iter().map(move |i| {
        let mut cells = Vec::new();
        for j in 0..n {
            if dim == 2 {
                cells.push([i as i64, j, 0]);
            } else {
                for k in 0..n {
                    cells.push([i as i64, j, k]);
                }
            }
        }
        (i, cells)
    })
}

/// Extracts the level set `{Q = c}`; cells whose corners are all `> c` or
/// all `<= c` contribute nothing.
pub fn extract_isosurface(q: &ScalarField, c: f64) -> Isosurface {
    let grid = q.grid();
    let mut rows: Vec<(usize, Vec<Element>)> = cell_rows(grid)
        .map(|(i, cells)| {
            let mut out = Vec::new();
            for cell in cells {
                if grid.dim() == 2 {
                    march_square(q, cell, c, &mut out);
                } else {
                    march_cube(q, cell, c, &mut out);
                }
            }
            (i, out)
        })
        .collect();
    rows.sort_by_key(|(i, _)| *i);
    let elements: Vec<Element> = rows.into_iter().flat_map(|(_, e)| e).collect();
    let total_measure = elements.iter().map(|e| e.measure).sum();
    Isosurface {
        grid,
        level: c,
        elements,
        total_measure,
    }
}

/// Quadrature nodes of an element as `(weight, point)` with weights summing
/// to one: two Gauss points per segment, three interior points per triangle.
fn quadrature_nodes(e: &Element) -> Vec<(f64, [f64; 3])> {
    match e.vertices.as_slice() {
        [a, b] => {
            let s = 0.5 / 3f64.sqrt();
            vec![(0.5, lerp3(*a, *b, 0.5 - s)), (0.5, lerp3(*a, *b, 0.5 + s))]
        }
        [a, b, c] => {
            let node = |wa: f64, wb: f64, wc: f64| {
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = wa * a[k] + wb * b[k] + wc * c[k];
                }
                (1.0 / 3.0, p)
            };
            let (hi, lo) = (2.0 / 3.0, 1.0 / 6.0);
            vec![node(hi, lo, lo), node(lo, hi, lo), node(lo, lo, hi)]
        }
        _ => vec![(1.0, e.centroid)],
    }
}

fn element_quadrature(e: &Element, f: impl Fn([f64; 3]) -> f64) -> f64 {
    e.measure * quadrature_nodes(e).into_iter().map(|(w, p)| w * f(p)).sum::<f64>()
}

/// `∮ g dS` with cubic interpolation of `g` at the element quadrature nodes.
pub fn surface_integral(iso: &Isosurface, g: &ScalarField) -> Result<f64, LevelSetError> {
    if iso.grid != g.grid() {
        return Err(LevelSetError::GridMismatch);
    }
    Ok(iso
        .elements
        .par_iter()
        .map(|e| element_quadrature(e, |p| g.interpolate_cubic(p)))
        .sum())
}

/// `∮ v·n̂ dS` over the level, with `n̂` towards increasing `Q`.
pub fn flux_integral(v: &VectorField, iso: &Isosurface) -> Result<f64, LevelSetError> {
    if iso.grid != v.grid() {
        return Err(LevelSetError::GridMismatch);
    }
    Ok(iso
        .elements
        .par_iter()
        .map(|e| element_quadrature(e, |p| dot3(v.interpolate_cubic(p), e.normal)))
        .sum())
}

/// `∮ |v| dS`, the natural scale for [`flux_integral`].
pub fn flux_magnitude_integral(v: &VectorField, iso: &Isosurface) -> Result<f64, LevelSetError> {
    if iso.grid != v.grid() {
        return Err(LevelSetError::GridMismatch);
    }
    Ok(iso
        .elements
        .par_iter()
        .map(|e| {
            element_quadrature(e, |p| {
                let w = v.interpolate_cubic(p);
                dot3(w, w).sqrt()
            })
        })
        .sum())
}

/// Gradient-magnitude statistics of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub level: f64,
    /// Smallest interpolated `|∇Q|` over element centroids and vertices.
    pub min_grad: f64,
    /// Median interpolated `|∇Q|` over element centroids.
    pub median_grad: f64,
    pub guard_threshold: f64,
    pub is_regular: bool,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Guard threshold for a field: [`REGULARITY_GUARD`] times the median of `|∇Q|` over the torus.
pub fn guard_threshold(grad_norm: &ScalarField) -> f64 {
    let mut v = grad_norm.values().to_vec();
    REGULARITY_GUARD * median(&mut v)
}

/// Regularity of an already-extracted level against a given threshold.
pub fn regularity_of(iso: &Isosurface, grad_norm: &ScalarField, threshold: f64) -> RegularityReport {
    if iso.is_empty() {
        return RegularityReport {
            level: iso.level,
            min_grad: 0.0,
            median_grad: 0.0,
            guard_threshold: threshold,
            is_regular: false,
        };
    }
    let (mut at_centroids, vertex_min): (Vec<f64>, Vec<f64>) = iso
        .elements
        .par_iter()
        .map(|e| {
            let vmin = e
                .vertices
                .iter()
                .map(|&p| grad_norm.interpolate(p))
                .fold(f64::INFINITY, f64::min);
            (grad_norm.interpolate(e.centroid), vmin)
        })
        .unzip();
    let min_grad = at_centroids
        .iter()
        .chain(&vertex_min)
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let median_grad = median(&mut at_centroids);
    RegularityReport {
        level: iso.level,
        min_grad,
        median_grad,
        guard_threshold: threshold,
        is_regular: min_grad >= threshold,
    }
}

/// Extracts the level and reports whether it stays clear of critical points.
pub fn check_regularity(q: &ScalarField, grad_norm: &ScalarField, c: f64) -> RegularityReport {
    let iso = extract_isosurface(q, c);
    regularity_of(&iso, grad_norm, guard_threshold(grad_norm))
}

/// Region between two levels, with the regularity of both boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStrip {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_report: RegularityReport,
    pub beta_report: RegularityReport,
}

impl LevelStrip {
    pub fn new(q: &ScalarField, grad_norm: &ScalarField, alpha: f64, beta: f64) -> Result<Self, LevelSetError> {
        if !(alpha < beta) {
            return Err(LevelSetError::InvalidStrip { alpha, beta });
        }
        let threshold = guard_threshold(grad_norm);
        let report = |c: f64| regularity_of(&extract_isosurface(q, c), grad_norm, threshold);
        Ok(Self {
            alpha,
            beta,
            alpha_report: report(alpha),
            beta_report: report(beta),
        })
    }

    pub fn is_regular(&self) -> bool {
        self.alpha_report.is_regular && self.beta_report.is_regular
    }
}

// ---------------------------------------------------------------------------
// Volume integrals over super-level sets of piecewise-linear interpolants.

/// `∫_{simplex ∩ {Q > c}} f` for linear `f` and `Q` on a triangle, in units
/// of the triangle area.
fn triangle_superlevel(q: [f64; 3], f: [f64; 3], c: f64) -> f64 {
    let above: Vec<usize> = (0..3).filter(|&k| q[k] > c).collect();
    let full = (f[0] + f[1] + f[2]) / 3.0;
    match above.len() {
        0 => 0.0,
        3 => full,
        1 => corner_triangle(q, f, c, above[0]),
        _ => {
            let below = (0..3).find(|&k| q[k] <= c).unwrap();
            full - corner_triangle(q, f, c, below)
        }
    }
}

/// Part of a triangle cut off around vertex `a` by the level `c`.
fn corner_triangle(q: [f64; 3], f: [f64; 3], c: f64, a: usize) -> f64 {
    let (b, d) = ((a + 1) % 3, (a + 2) % 3);
    let tb = (q[a] - c) / (q[a] - q[b]);
    let td = (q[a] - c) / (q[a] - q[d]);
    let fb = f[a] + tb * (f[b] - f[a]);
    let fd = f[a] + td * (f[d] - f[a]);
    tb * td * (f[a] + fb + fd) / 3.0
}

/// Part of a tetrahedron cut off around vertex `a`, in units of its volume.
fn corner_tet(q: [f64; 4], f: [f64; 4], c: f64, a: usize) -> f64 {
    let mut frac = 1.0;
    let mut fsum = f[a];
    for b in (0..4).filter(|&b| b != a) {
        let t = (q[a] - c) / (q[a] - q[b]);
        frac *= t;
        fsum += f[a] + t * (f[b] - f[a]);
    }
    frac * fsum / 4.0
}

/// Signed volume of a tetrahedron given in barycentric-reference coordinates,
/// in units of the reference tetrahedron.
fn ref_tet_volume(p: [[f64; 3]; 4]) -> f64 {
    let a = sub3(p[1], p[0]);
    let b = sub3(p[2], p[0]);
    let d = sub3(p[3], p[0]);
    dot3(a, cross3(b, d)).abs()
}

/// Wedge between two vertices above and two below the level.
fn wedge_tet(q: [f64; 4], f: [f64; 4], c: f64, a0: usize, a1: usize, b0: usize, b1: usize) -> f64 {
    // Reference coordinates: vertex 0 at the origin, the others on the axes.
    let reference = |k: usize| -> [f64; 3] {
        let mut p = [0.0; 3];
        if k > 0 {
            p[k - 1] = 1.0;
        }
        p
    };
    let point = |a: usize, b: usize| -> ([f64; 3], f64) {
        let t = (q[a] - c) / (q[a] - q[b]);
        (lerp3(reference(a), reference(b), t), f[a] + t * (f[b] - f[a]))
    };
    let (x00, f00) = point(a0, b0);
    let (x01, f01) = point(a0, b1);
    let (x10, f10) = point(a1, b0);
    let (x11, f11) = point(a1, b1);
    let bottom = [(reference(a0), f[a0]), (x00, f00), (x01, f01)];
    let top = [(reference(a1), f[a1]), (x10, f10), (x11, f11)];
    let split = [
        [bottom[0], bottom[1], bottom[2], top[0]],
        [bottom[1], bottom[2], top[0], top[1]],
        [bottom[2], top[0], top[1], top[2]],
    ];
    split
        .iter()
        .map(|tet| {
            let vol = ref_tet_volume(tet.map(|(p, _)| p));
            vol * tet.iter().map(|(_, v)| v).sum::<f64>() / 4.0
        })
        .sum()
}

fn tet_superlevel(q: [f64; 4], f: [f64; 4], c: f64) -> f64 {
    let above: Vec<usize> = (0..4).filter(|&k| q[k] > c).collect();
    let below: Vec<usize> = (0..4).filter(|&k| q[k] <= c).collect();
    let full = (f[0] + f[1] + f[2] + f[3]) / 4.0;
    match above.len() {
        0 => 0.0,
        4 => full,
        1 => corner_tet(q, f, c, above[0]),
        3 => full - corner_tet(q, f, c, below[0]),
        _ => wedge_tet(q, f, c, above[0], above[1], below[0], below[1]),
    }
}

/// `∫_{Q > c} f dx` for the piecewise-linear interpolants of `f` and `Q`.
pub fn superlevel_integral(f: &ScalarField, q: &ScalarField, c: f64) -> Result<f64, LevelSetError> {
    let grid = q.grid();
    if f.grid() != grid {
        return Err(LevelSetError::GridMismatch);
    }
    if c == f64::NEG_INFINITY {
        return Ok(f.integral());
    }
    if c == f64::INFINITY {
        return Ok(0.0);
    }
    let cell_volume = grid.cell_volume();
    let total: f64 = cell_rows(grid)
        .map(|(_, cells)| {
            let mut acc = 0.0;
            for cell in cells {
                acc += if grid.dim() == 2 {
                    cell_superlevel_2d(f, q, cell, c)
                } else {
                    cell_superlevel_3d(f, q, cell, c)
                };
            }
            acc
        })
        .sum();
    Ok(total * cell_volume)
}

fn cell_superlevel_2d(f: &ScalarField, q: &ScalarField, cell: [i64; 3], c: f64) -> f64 {
    let grid = q.grid();
    let mut qv = [0.0; 4];
    let mut fv = [0.0; 4];
    for (k, off) in SQUARE_CORNERS.iter().enumerate() {
        let idx = grid.index_wrapped([cell[0] + off[0], cell[1] + off[1], 0]);
        qv[k] = q.values()[idx];
        fv[k] = f.values()[idx];
    }
    if qv.iter().all(|&v| v <= c) {
        return 0.0;
    }
    // Two triangles of half the cell each, split along the 0-2 diagonal.
    0.5 * (triangle_superlevel([qv[0], qv[1], qv[2]], [fv[0], fv[1], fv[2]], c)
        + triangle_superlevel([qv[0], qv[2], qv[3]], [fv[0], fv[2], fv[3]], c))
}

fn cell_superlevel_3d(f: &ScalarField, q: &ScalarField, cell: [i64; 3], c: f64) -> f64 {
    let grid = q.grid();
    let mut qv = [0.0; 8];
    let mut fv = [0.0; 8];
    for id in 0..8 {
        let off = cube_corner(id);
        let idx = grid.index_wrapped([cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]]);
        qv[id] = q.values()[idx];
        fv[id] = f.values()[idx];
    }
    if qv.iter().all(|&v| v <= c) {
        return 0.0;
    }
    KUHN_TETS
        .iter()
        .map(|tet| tet_superlevel(tet.map(|k| qv[k]), tet.map(|k| fv[k]), c))
        .sum::<f64>()
        / 6.0
}

/// `∫_{α < Q < β} f dx`. Infinite bounds select one-sided regions.
pub fn strip_volume_integral(f: &ScalarField, q: &ScalarField, alpha: f64, beta: f64) -> Result<f64, LevelSetError> {
    if !(alpha < beta) {
        return Err(LevelSetError::InvalidStrip { alpha, beta });
    }
    Ok(superlevel_integral(f, q, alpha)? - superlevel_integral(f, q, beta)?)
}

/// Coarea oracle: for each bin `[c_i, c_{i+1})` returns
/// `∫_{bin} g |∇Q| dx / (c_{i+1} − c_i)`, which approximates `∮_{Q=c} g dS`
/// near the bin centre. Uses a sharp sample mask, independent of the
/// isosurface machinery. The last bin is closed on the right.
pub fn coarea_level_integral(q: &ScalarField, g: &ScalarField, levels: &[f64]) -> Result<Vec<f64>, LevelSetError> {
    let grad_norm = spectral::gradient(q).norm();
    coarea_with_gradient(q, &grad_norm, g, levels)
}

/// [`coarea_level_integral`] with a precomputed `|∇Q|`.
pub fn coarea_with_gradient(
    q: &ScalarField,
    grad_norm: &ScalarField,
    g: &ScalarField,
    levels: &[f64],
) -> Result<Vec<f64>, LevelSetError> {
    if g.grid() != q.grid() || grad_norm.grid() != q.grid() {
        return Err(LevelSetError::GridMismatch);
    }
    if levels.iter().any(|c| !c.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LevelSetError::UnsortedLevels);
    }
    if levels.len() < 2 {
        return Ok(Vec::new());
    }
    let bins = levels.len() - 1;
    let mut sums = vec![0.0; bins];
    let last = levels[bins];
    for ((&qv, &gv), &nv) in q.values().iter().zip(g.values()).zip(grad_norm.values()) {
        if qv < levels[0] || qv > last {
            continue;
        }
        // Index of the bin whose left edge is the last level <= qv.
        let bin = levels.partition_point(|&c| c <= qv).saturating_sub(1).min(bins - 1);
        sums[bin] += gv * nv;
    }
    let cell_volume = q.grid().cell_volume();
    Ok(sums
        .iter()
        .zip(levels.windows(2))
        .map(|(s, w)| s * cell_volume / (w[1] - w[0]))
        .collect())
}
