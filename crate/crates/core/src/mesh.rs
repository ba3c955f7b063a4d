//! Graded meshes of Ω = (a, b) with a truncated exterior collar.
//!
//! Interior DOFs are P1 nodal values on Ω; exterior DOFs are one value per
//! collar cell, located at the cell midpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Interval;

/// Relative tolerance used to decide whether a point is already a node.
const NODE_SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    PowerLaw { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarMesh1D {
    a: f64,
    b: f64,
    radius: f64,
    grading: Grading,
    nodes: Vec<f64>,
    exterior_left: Vec<Interval>,
    exterior_right: Vec<Interval>,
    forced: Vec<f64>,
}

/// Interior and exterior coefficients of a discrete function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofFunction {
    pub interior: Vec<f64>,
    pub exterior: Vec<f64>,
}

impl DofFunction {
    pub fn new(interior: Vec<f64>, exterior: Vec<f64>) -> Self {
        DofFunction { interior, exterior }
    }

    pub fn constant(mesh: &CollarMesh1D, c: f64) -> Self {
        DofFunction { interior: vec![c; mesh.num_nodes()], exterior: vec![c; mesh.num_exterior()] }
    }

    pub fn check(&self, mesh: &CollarMesh1D) -> Result<()> {
        if self.interior.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch { expected: mesh.num_nodes(), got: self.interior.len() });
        }
        if self.exterior.len() != mesh.num_exterior() {
            return Err(Error::DimensionMismatch { expected: mesh.num_exterior(), got: self.exterior.len() });
        }
        Ok(())
    }

    /// Interior followed by exterior coefficients.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.interior.clone();
        v.extend_from_slice(&self.exterior);
        v
    }

    pub fn from_flat(flat: &[f64], n_interior: usize) -> Self {
        DofFunction { interior: flat[..n_interior].to_vec(), exterior: flat[n_interior..].to_vec() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        DofFunction {
            interior: self.interior.iter().map(|v| c * v).collect(),
            exterior: self.exterior.iter().map(|v| c * v).collect(),
        }
    }

    /// Same interior values, exterior zeroed.
    pub fn interior_part(&self) -> Self {
        DofFunction { interior: self.interior.clone(), exterior: vec![0.0; self.exterior.len()] }
    }

    /// Same exterior values, interior zeroed.
    pub fn exterior_part(&self) -> Self {
        DofFunction { interior: vec![0.0; self.interior.len()], exterior: self.exterior.clone() }
    }
}

/// Interior cells making up Ω_ε.
#[derive(Clone, Debug, PartialEq)]
pub struct StripCells {
    pub cells: Vec<usize>,
    /// Set when the two boundary strips meet, so that Ω_ε = Ω.
    pub covers_domain: bool,
}

impl CollarMesh1D {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn cell(&self, i: usize) -> Interval {
        Interval::new(self.nodes[i], self.nodes[i + 1])
    }

    pub fn cells(&self) -> impl Iterator<Item = Interval> + '_ {
        self.nodes.windows(2).map(|w| Interval::new(w[0], w[1]))
    }

    pub fn exterior_left(&self) -> &[Interval] {
        &self.exterior_left
    }

    pub fn exterior_right(&self) -> &[Interval] {
        &self.exterior_right
    }

    pub fn num_exterior(&self) -> usize {
        self.exterior_left.len() + self.exterior_right.len()
    }

    /// Exterior cells in DOF order: left collar ascending, then right.
    pub fn exterior_cells(&self) -> impl Iterator<Item = Interval> + '_ {
        self.exterior_left.iter().chain(self.exterior_right.iter()).copied()
    }

    pub fn exterior_cell(&self, m: usize) -> Interval {
        if m < self.exterior_left.len() {
            self.exterior_left[m]
        } else {
            self.exterior_right[m - self.exterior_left.len()]
        }
    }

    /// Points inserted on request (strip boundaries).
    pub fn forced_nodes(&self) -> &[f64] {
        &self.forced
    }

    pub fn min_cell(&self) -> f64 {
        self.cells().map(|c| c.len()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_cell(&self) -> f64 {
        self.cells().map(|c| c.len()).fold(0.0, f64::max)
    }

    /// Index of the node equal to `x` (up to round-off), if any.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let tol = NODE_SNAP * self.length();
        let i = self.nodes.partition_point(|&v| v < x - tol);
        (i < self.nodes.len() && (self.nodes[i] - x).abs() <= tol).then_some(i)
    }

    /// Value at `x` ∈ [a, b] of the P1 function with the given nodal values.
    pub fn eval_interior(&self, values: &[f64], x: f64) -> f64 {
        let i = self.nodes.partition_point(|&v| v <= x).clamp(1, self.nodes.len() - 1) - 1;
        let c = self.cell(i);
        let t = ((x - c.lo) / c.len()).clamp(0.0, 1.0);
        (1.0 - t) * values[i] + t * values[i + 1]
    }

    /// Interior cells contained in (a, a+ε) ∪ (b−ε, b).
    pub fn strip_cells(&self, eps: f64) -> Result<StripCells> {
        if !(eps > 0.0) {
            return Err(Error::Argument(format!("strip width must be positive, got {eps}")));
        }
        let half = 0.5 * self.length();
        if eps >= half - NODE_SNAP * self.length() {
            return Ok(StripCells { cells: (0..self.num_cells()).collect(), covers_domain: true });
        }
        let left = self.node_index(self.a + eps).ok_or(Error::Alignment { point: self.a + eps })?;
        let right = self.node_index(self.b - eps).ok_or(Error::Alignment { point: self.b - eps })?;
        let mut cells: Vec<usize> = (0..left).collect();
        cells.extend(right..self.num_cells());
        Ok(StripCells { cells, covers_domain: false })
    }

    /// Samples f at interior nodes and exterior cell midpoints.
    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> DofFunction {
        DofFunction {
            interior: self.nodes.iter().map(|&x| f(x)).collect(),
            exterior: self.exterior_cells().map(|c| f(c.mid())).collect(),
        }
    }
}

/// Builder for [`CollarMesh1D`].
#[derive(Clone, Debug)]
pub struct MeshParams {
    pub a: f64,
    pub b: f64,
    pub radius: f64,
    pub h: f64,
    pub gamma: f64,
    pub strip_eps: Option<f64>,
}

pub fn build_collar_mesh(params: &MeshParams) -> Result<CollarMesh1D> {
    let MeshParams { a, b, radius, h, gamma, strip_eps } = *params;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Argument(format!("need a < b, got a={a}, b={b}")));
    }
    let len = b - a;
    let half = 0.5 * len;
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("collar width must be positive, got {radius}")));
    }
    if !(h > 0.0 && h <= half) {
        return Err(Error::Argument(format!("need 0 < h <= (b-a)/2, got h={h}")));
    }
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::Argument(format!("grading exponent must be >= 1, got {gamma}")));
    }
    if let Some(eps) = strip_eps {
        if !(eps > 0.0 && eps < half) {
            return Err(Error::Argument(format!("need 0 < strip_eps < (b-a)/2, got {eps}")));
        }
    }

    let n_half = ((half / h) - 1e-9).ceil().max(1.0) as usize;
    let offsets: Vec<f64> = (0..=n_half).map(|i| half * (i as f64 / n_half as f64).powf(gamma)).collect();

    let mut nodes: Vec<f64> = offsets.iter().map(|o| a + o).collect();
    nodes.extend(offsets.iter().rev().skip(1).map(|o| b - o));
    let mid = nodes[n_half];
    nodes[n_half] = 0.5 * (a + b);
    debug_assert!((mid - 0.5 * (a + b)).abs() < 1e-12 * len);

    let mut forced = Vec::new();
    if let Some(eps) = strip_eps {
        for t in [a + eps, b - eps] {
            insert_node(&mut nodes, t, len);
            forced.push(t);
        }
    }

    let collar = |sign: f64, edge: f64| -> Vec<Interval> {
        let mut pts: Vec<f64> = offsets.iter().copied().take_while(|&o| o < radius).collect();
        let last_mirror = *pts.last().unwrap();
        if radius > last_mirror {
            let rest = radius - last_mirror;
            let prev = if pts.len() >= 2 { pts[pts.len() - 1] - pts[pts.len() - 2] } else { rest };
            if rest < 0.25 * prev && pts.len() >= 2 {
                pts.pop();
            }
            let start = *pts.last().unwrap();
            let rest = radius - start;
            let n = ((rest / (2.0 * h)) - 1e-9).ceil().max(1.0) as usize;
            pts.extend((1..n).map(|i| start + rest * i as f64 / n as f64));
            pts.push(radius);
        }
        let mut cells: Vec<Interval> = pts
            .windows(2)
            .map(|w| {
                let (x0, x1) = (edge + sign * w[0], edge + sign * w[1]);
                Interval::new(x0.min(x1), x0.max(x1))
            })
            .collect();
        cells.sort_by(|p, q| p.lo.partial_cmp(&q.lo).unwrap());
        cells
    };
    let exterior_left = collar(-1.0, a);
    let exterior_right = collar(1.0, b);

    let grading = if gamma == 1.0 { Grading::Uniform } else { Grading::PowerLaw { gamma } };
    Ok(CollarMesh1D { a, b, radius, grading, nodes, exterior_left, exterior_right, forced })
}

/// Makes `t` a node: snaps an existing node if it is within round-off or
/// within a quarter of its cell, inserts otherwise. Endpoints never move.
fn insert_node(nodes: &mut Vec<f64>, t: f64, len: f64) {
    let j = nodes.partition_point(|&v| v < t);
    if j < nodes.len() && (nodes[j] - t).abs() <= NODE_SNAP * len {
        nodes[j] = t;
        return;
    }
    let (lo, hi) = (j - 1, j);
    let cell = nodes[hi] - nodes[lo];
    let last = nodes.len() - 1;
    if lo > 0 && t - nodes[lo] < 0.25 * cell && t - nodes[lo] < 0.25 * (nodes[lo] - nodes[lo - 1]) {
        nodes[lo] = t;
    } else if hi < last && nodes[hi] - t < 0.25 * cell && nodes[hi] - t < 0.25 * (nodes[hi + 1] - nodes[hi]) {
        nodes[hi] = t;
    } else {
        nodes.insert(hi, t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, gamma: f64, eps: Option<f64>) -> MeshParams {
        MeshParams { a: 0.0, b: 1.0, radius: 1.0, h, gamma, strip_eps: eps }
    }

    #[test]
    fn uniform_example() {
        let m = build_collar_mesh(&params(0.5, 1.0, None)).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.5, 1.0]);
        let ext: Vec<(f64, f64)> = m.exterior_cells().map(|c| (c.lo, c.hi)).collect();
        assert_eq!(ext, vec![(-1.0, -0.5), (-0.5, 0.0), (1.0, 1.5), (1.5, 2.0)]);
    }

    #[test]
    fn forced_strip_nodes() {
        let m = build_collar_mesh(&params(0.5, 1.0, Some(0.25))).unwrap();
        assert_eq!(m.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn power_law_offsets() {
        let m = build_collar_mesh(&params(0.125, 2.0, None)).unwrap();
        let want = [0.0, 1.0 / 32.0, 4.0 / 32.0, 9.0 / 32.0, 16.0 / 32.0];
        for (got, w) in m.nodes()[..5].iter().zip(want) {
            assert!((got - w).abs() < 1e-15, "{got} vs {w}");
        }
        assert_eq!(m.num_nodes(), 9);
        assert!((m.nodes()[8] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exterior_tiles_collar() {
        for (h, g, r) in [(0.1, 1.0, 2.0), (0.03, 2.0, 2.0), (0.2, 3.0, 0.3), (0.01, 2.0, 0.05)] {
            let m =
                build_collar_mesh(&MeshParams { a: -1.0, b: 2.0, radius: r, h, gamma: g, strip_eps: None }).unwrap();
            let total: f64 = m.exterior_cells().map(|c| c.len()).sum();
            assert!((total - 2.0 * r).abs() < 1e-12);
            for side in [m.exterior_left(), m.exterior_right()] {
                for w in side.windows(2) {
                    assert_eq!(w[0].hi, w[1].lo);
                }
            }
            assert!((m.exterior_left()[0].lo - (-1.0 - r)).abs() < 1e-12);
            assert_eq!(m.exterior_left().last().unwrap().hi, -1.0);
            assert_eq!(m.exterior_right()[0].lo, 2.0);
        }
    }

    #[test]
    fn strip_cells_examples() {
        let m = build_collar_mesh(&params(0.25, 1.0, None)).unwrap();
        let s = m.strip_cells(0.25).unwrap();
        assert_eq!(s.cells, vec![0, 3]);
        assert!(!s.covers_domain);
        let all = m.strip_cells(0.5).unwrap();
        assert!(all.covers_domain);
        assert_eq!(all.cells.len(), 4);
        assert!(matches!(m.strip_cells(0.1), Err(Error::Alignment { .. })));
    }

    #[test]
    fn strip_length_matches() {
        for eps in [0.01, 0.05, 0.2, 0.333] {
            let m = build_collar_mesh(&params(0.02, 2.0, Some(eps))).unwrap();
            let s = m.strip_cells(eps).unwrap();
            let total: f64 = s.cells.iter().map(|&i| m.cell(i).len()).sum();
            assert!((total - 2.0 * eps).abs() < 1e-12, "eps={eps}: {total}");
        }
    }

    #[test]
    fn interpolation_examples() {
        let m = build_collar_mesh(&params(0.5, 1.0, None)).unwrap();
        let one = m.interpolate(|_| 1.0);
        assert!(one.interior.iter().chain(&one.exterior).all(|&v| v == 1.0));
        let lin = m.interpolate(|x| x);
        assert_eq!(lin.interior, vec![0.0, 0.5, 1.0]);
        assert_eq!(lin.exterior, vec![-0.75, -0.25, 1.25, 1.75]);
        let ind = m.interpolate(|x| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 });
        assert_eq!(ind.interior, vec![1.0; 3]);
        assert_eq!(ind.exterior, vec![0.0; 4]);
    }

    #[test]
    fn refinement_keeps_forced_nodes() {
        let mut prev = 0;
        for h in [0.2, 0.1, 0.05, 0.025] {
            let m = build_collar_mesh(&params(h, 2.0, Some(0.07))).unwrap();
            assert!(m.num_nodes() > prev);
            prev = m.num_nodes();
            assert!(m.node_index(0.07).is_some());
            assert!(m.node_index(0.93).is_some());
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_collar_mesh(&MeshParams { a: 1.0, b: 0.0, ..params(0.1, 1.0, None) }).is_err());
        assert!(build_collar_mesh(&params(0.6, 1.0, None)).is_err());
        assert!(build_collar_mesh(&params(0.0, 1.0, None)).is_err());
        assert!(build_collar_mesh(&params(0.1, 0.5, None)).is_err());
        assert!(build_collar_mesh(&params(0.1, 1.0, Some(0.5))).is_err());
        assert!(build_collar_mesh(&MeshParams { radius: 0.0, ..params(0.1, 1.0, None) }).is_err());
    }

    #[test]
    fn eval_interior_is_linear_interpolation() {
        let m = build_collar_mesh(&params(0.1, 2.0, Some(0.03))).unwrap();
        let u = m.interpolate(|x| 3.0 * x - 1.0);
        for x in [0.0, 0.011, 0.5, 0.77, 1.0] {
            assert!((m.eval_interior(&u.interior, x) - (3.0 * x - 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn summary_serializes() {
        let m = build_collar_mesh(&params(0.25, 2.0, Some(0.1))).unwrap();
        let js = serde_json::to_string(&m).unwrap();
        let back: CollarMesh1D = serde_json::from_str(&js).unwrap();
        assert_eq!(back, m);
    }
}
