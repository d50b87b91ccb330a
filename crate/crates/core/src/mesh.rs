//! Structured criss-cross triangulations of the square (-1,1)^2.
//!
//! Nodes are numbered row-major: node `j * (level + 1) + i` sits at
//! `(-1 + 2i/level, -1 + 2j/level)`. Every grid cell is split along its
//! bottom-left to top-right diagonal into two counter-clockwise triangles.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::NodalField;

pub type Point = [f64; 2];

/// One side of the square boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn name(self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }

    /// Outward unit normal.
    pub fn normal(self) -> Point {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }

    /// Whether `p` lies on the closed side.
    pub fn contains(self, p: Point) -> bool {
        match self {
            Side::Bottom => p[1] == -1.0,
            Side::Right => p[0] == 1.0,
            Side::Top => p[1] == 1.0,
            Side::Left => p[0] == -1.0,
        }
    }

    fn bit(self) -> u8 {
        match self {
            Side::Bottom => 1,
            Side::Right => 2,
            Side::Top => 4,
            Side::Left => 8,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bottom" => Ok(Side::Bottom),
            "right" => Ok(Side::Right),
            "top" => Ok(Side::Top),
            "left" => Ok(Side::Left),
            other => Err(Error::InvalidConfig(format!("unknown boundary side `{other}`"))),
        }
    }
}

/// A non-empty union of whole sides, e.g. the observation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundaryRegion {
    mask: u8,
}

impl BoundaryRegion {
    pub fn new(sides: &[Side]) -> Result<Self> {
        let mask = sides.iter().fold(0u8, |m, s| m | s.bit());
        if mask == 0 {
            return Err(Error::InvalidConfig("boundary region must contain at least one side".into()));
        }
        Ok(Self { mask })
    }

    pub fn all() -> Self {
        Self { mask: 0b1111 }
    }

    pub fn contains(&self, side: Side) -> bool {
        self.mask & side.bit() != 0
    }

    pub fn sides(&self) -> Vec<Side> {
        Side::ALL.into_iter().filter(|s| self.contains(*s)).collect()
    }

    /// Whether `p` lies on the closed union of the region's sides.
    pub fn contains_point(&self, p: Point) -> bool {
        Side::ALL.into_iter().any(|s| self.contains(s) && s.contains(p))
    }

    /// Bit mask: bottom=1, right=2, top=4, left=8.
    pub fn mask(&self) -> u8 {
        self.mask
    }

    pub fn from_mask(mask: u8) -> Result<Self> {
        if mask == 0 || mask > 0b1111 {
            return Err(Error::InvalidConfig(format!("invalid boundary mask {mask}")));
        }
        Ok(Self { mask })
    }
}

impl FromStr for BoundaryRegion {
    type Err = Error;

    /// Parses a comma-separated list such as `bottom,left`.
    fn from_str(s: &str) -> Result<Self> {
        let sides = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(Side::from_str)
            .collect::<Result<Vec<_>>>()?;
        BoundaryRegion::new(&sides)
    }
}

impl fmt::Display for BoundaryRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.sides().iter().map(|s| s.name()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    /// Endpoints, oriented counter-clockwise around the domain.
    pub nodes: [usize; 2],
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    level: usize,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

/// Builds the uniform criss-cross triangulation with `level` cells per axis.
pub fn build_square_mesh(level: usize) -> Result<Mesh> {
    if level == 0 {
        return Err(Error::InvalidLevel(level));
    }
    let n = level + 1;
    let coord = |k: usize| -1.0 + 2.0 * k as f64 / level as f64;
    let mut nodes = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            // exact endpoints so side membership tests are exact
            let x = if i == level { 1.0 } else { coord(i) };
            let y = if j == level { 1.0 } else { coord(j) };
            nodes.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * n + i;
    let mut triangles = Vec::with_capacity(2 * level * level);
    for j in 0..level {
        for i in 0..level {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * level);
    for i in 0..level {
        boundary_edges.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], side: Side::Bottom });
    }
    for j in 0..level {
        boundary_edges.push(BoundaryEdge { nodes: [id(level, j), id(level, j + 1)], side: Side::Right });
    }
    for i in (0..level).rev() {
        boundary_edges.push(BoundaryEdge { nodes: [id(i + 1, level), id(i, level)], side: Side::Top });
    }
    for j in (0..level).rev() {
        boundary_edges.push(BoundaryEdge { nodes: [id(0, j + 1), id(0, j)], side: Side::Left });
    }
    Ok(Mesh { level, nodes, triangles, boundary_edges })
}

impl Mesh {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Maximum triangle diameter, `sqrt(8) / level`.
    pub fn mesh_size(&self) -> f64 {
        8f64.sqrt() / self.level as f64
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area; positive for counter-clockwise triangles.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let a = self.nodes[e.nodes[0]];
        let b = self.nodes[e.nodes[1]];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn edge_midpoint(&self, e: &BoundaryEdge) -> Point {
        let a = self.nodes[e.nodes[0]];
        let b = self.nodes[e.nodes[1]];
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Indices of the boundary edges lying on `region`.
    pub fn region_edges(&self, region: &BoundaryRegion) -> Vec<usize> {
        (0..self.boundary_edges.len())
            .filter(|&e| region.contains(self.boundary_edges[e].side))
            .collect()
    }

    /// Value of the piecewise-linear `field` at an arbitrary point of the closed square.
    pub fn evaluate(&self, field: &[f64], p: Point) -> f64 {
        let l = self.level;
        let s = |v: f64| ((v + 1.0) * 0.5 * l as f64).clamp(0.0, l as f64);
        let (sx, sy) = (s(p[0]), s(p[1]));
        let i = (sx.floor() as usize).min(l - 1);
        let j = (sy.floor() as usize).min(l - 1);
        let (u, v) = (sx - i as f64, sy - j as f64);
        let n = l + 1;
        let f = |a: usize, b: usize| field[b * n + a];
        if u >= v {
            // lower triangle (p00, p10, p11)
            (1.0 - u) * f(i, j) + (u - v) * f(i + 1, j) + v * f(i + 1, j + 1)
        } else {
            // upper triangle (p00, p11, p01)
            (1.0 - v) * f(i, j) + u * f(i + 1, j + 1) + (v - u) * f(i, j + 1)
        }
    }

    /// Writes `v x y`, `t i j k` and `e i j side` lines.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.nodes {
            writeln!(w, "v {:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "e {} {} {}", e.nodes[0], e.nodes[1], e.side)?;
        }
        Ok(())
    }
}

/// Nodes on the closed union of the region's sides, in node-index order
/// (lexicographic by `(x2, x1)`), each node listed once.
pub fn boundary_nodes(mesh: &Mesh, region: &BoundaryRegion) -> Vec<usize> {
    (0..mesh.node_count())
        .filter(|&i| region.contains_point(mesh.nodes[i]))
        .collect()
}

/// Interpolates a P1 field on level `l` onto the nested mesh of level `2l`.
pub fn prolongate(coarse_mesh: &Mesh, coarse: &NodalField, fine_mesh: &Mesh) -> Result<NodalField> {
    if fine_mesh.level != 2 * coarse_mesh.level {
        return Err(Error::NonNestedLevels { coarse: coarse_mesh.level, fine: fine_mesh.level });
    }
    coarse.check_len(coarse_mesh.node_count())?;
    let c = coarse.values();
    let nc = coarse_mesh.level + 1;
    let nf = fine_mesh.level + 1;
    let at = |i: usize, j: usize| c[j * nc + i];
    let mut out = Vec::with_capacity(nf * nf);
    for jf in 0..nf {
        for if_ in 0..nf {
            let (i, j) = (if_ / 2, jf / 2);
            let v = match (if_ % 2, jf % 2) {
                (0, 0) => at(i, j),
                (1, 0) => 0.5 * (at(i, j) + at(i + 1, j)),
                (0, 1) => 0.5 * (at(i, j) + at(i, j + 1)),
                // cell centre lies on the shared diagonal
                _ => 0.5 * (at(i, j) + at(i + 1, j + 1)),
            };
            out.push(v);
        }
    }
    Ok(NodalField::new(out))
}

/// Prolongates through successive doublings from `coarse_mesh` up to `target_level`.
pub fn prolongate_to(coarse_mesh: &Mesh, coarse: &NodalField, target_level: usize) -> Result<NodalField> {
    let mut level = coarse_mesh.level;
    if target_level < level || !target_level.is_multiple_of(level) || !(target_level / level).is_power_of_two() {
        return Err(Error::NonNestedLevels { coarse: level, fine: target_level });
    }
    let mut mesh = coarse_mesh.clone();
    let mut field = coarse.clone();
    while level < target_level {
        let fine = build_square_mesh(2 * level)?;
        field = prolongate(&mesh, &field, &fine)?;
        mesh = fine;
        level *= 2;
    }
    Ok(field)
}
