//! Conforming triangle meshes with newest-vertex bisection (NVB).
//!
//! Local conventions: triangles are stored counter-clockwise, and local edge
//! `k` joins local vertices `k+1` and `k+2` (mod 3), so it lies opposite
//! vertex `k`. `refinement_edge = r` therefore means vertex `r` is the newest
//! vertex. Global edges are oriented from the lower to the higher vertex index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub refinement_edge: u8,
}

impl Triangle {
    /// Endpoints of local edge `k` in local traversal order.
    pub fn edge_vertices(&self, k: usize) -> [usize; 2] {
        [self.vertices[(k + 1) % 3], self.vertices[(k + 2) % 3]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// First adjacent element, and the second one for interior edges.
    pub elements: (usize, Option<usize>),
    pub boundary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// Global edge index of each local edge.
    pub element_edges: Vec<[usize; 3]>,
    pub h_max: f64,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Clockwise triangles are flipped
    /// (keeping the same refinement edge) and the skeleton is derived.
    pub fn new(vertices: Vec<[f64; 2]>, mut triangles: Vec<Triangle>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::InvalidParameter(format!("vertex {i} has non-finite coordinates")));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.vertices.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidParameter(format!("triangle {t} references a missing vertex")));
            }
            if tri.refinement_edge > 2 {
                return Err(Error::InvalidParameter(format!(
                    "triangle {t} has refinement edge {}",
                    tri.refinement_edge
                )));
            }
            let [a, b, c] = tri.vertices.map(|v| vertices[v]);
            let area = signed_area(a, b, c);
            if area == 0.0 || !area.is_finite() {
                return Err(Error::InvalidParameter(format!("triangle {t} is degenerate")));
            }
            if area < 0.0 {
                tri.vertices.swap(1, 2);
                tri.refinement_edge = match tri.refinement_edge {
                    1 => 2,
                    2 => 1,
                    r => r,
                };
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 2);
        let mut element_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let [a, b] = tri.edge_vertices(k);
                let key = edge_key(a, b);
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge { vertices: [key.0, key.1], elements: (t, None), boundary: true });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                if edge.elements.0 != t {
                    if edge.elements.1.is_some() {
                        return Err(Error::InvalidParameter(format!(
                            "edge ({}, {}) is shared by more than two triangles",
                            key.0, key.1
                        )));
                    }
                    edge.elements.1 = Some(t);
                    edge.boundary = false;
                }
                *slot = e;
            }
            element_edges.push(local);
        }

        let mut mesh = Mesh { vertices, triangles, edges, element_edges, h_max: 0.0 };
        mesh.h_max = (0..mesh.triangles.len()).map(|t| mesh.diameter(t)).fold(0.0, f64::max);
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v])
    }

    pub fn element_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.num_elements()).map(|t| self.element_area(t)).sum()
    }

    /// Longest edge of element `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    /// `+1` if local edge `k` of element `t` is traversed in the global
    /// (low → high) direction, `-1` otherwise. For counter-clockwise elements
    /// this is also the sign of `n_T · n_e`.
    pub fn edge_sign(&self, t: usize, k: usize) -> f64 {
        let [a, b] = self.triangles[t].edge_vertices(k);
        if a < b {
            1.0
        } else {
            -1.0
        }
    }

    /// Vertices lying on at least one boundary edge.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.num_vertices()];
        for e in self.edges.iter().filter(|e| e.boundary) {
            flags[e.vertices[0]] = true;
            flags[e.vertices[1]] = true;
        }
        flags
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.num_elements() {
            let p = self.corners(t);
            for k in 0..3 {
                let o = p[k];
                let u = [p[(k + 1) % 3][0] - o[0], p[(k + 1) % 3][1] - o[1]];
                let v = [p[(k + 2) % 3][0] - o[0], p[(k + 2) % 3][1] - o[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    /// Vertices sitting exactly at the midpoint of a boundary edge. NVB creates
    /// new vertices only at edge midpoints, so an empty result together with
    /// the two-element edge rule means the mesh is conforming.
    pub fn hanging_vertices(&self) -> Vec<usize> {
        let index: HashMap<(u64, u64), usize> =
            self.vertices.iter().enumerate().map(|(i, v)| ((v[0].to_bits(), v[1].to_bits()), i)).collect();
        let mut hanging: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.boundary)
            .filter_map(|e| {
                let [a, b] = e.vertices.map(|v| self.vertices[v]);
                let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                index.get(&(m[0].to_bits(), m[1].to_bits())).copied()
            })
            .collect();
        hanging.sort_unstable();
        hanging.dedup();
        hanging
    }

    pub fn is_conforming(&self) -> bool {
        let consistent = self.triangles.iter().zip(&self.element_edges).all(|(tri, edges)| {
            (0..3).all(|k| {
                let [a, b] = tri.edge_vertices(k);
                let key = edge_key(a, b);
                self.edges[edges[k]].vertices == [key.0, key.1]
            })
        });
        consistent && self.hanging_vertices().is_empty()
    }

    /// Bisects every marked element through its refinement edge and closes
    /// the refinement recursively so that no hanging vertices remain.
    pub fn refine_marked(&self, marked: &[usize]) -> Result<Mesh> {
        if let Some(&t) = marked.iter().find(|&&t| t >= self.num_elements()) {
            return Err(Error::InvalidParameter(format!("marked element {t} does not exist")));
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }

        let mut edge_marked = vec![false; self.num_edges()];
        let mut queue: Vec<usize> = Vec::new();
        let mark_edge = |e: usize, edge_marked: &mut Vec<bool>, queue: &mut Vec<usize>| {
            if !edge_marked[e] {
                edge_marked[e] = true;
                let (a, b) = self.edges[e].elements;
                queue.push(a);
                queue.extend(b);
            }
        };
        for &t in marked {
            let r = self.triangles[t].refinement_edge as usize;
            mark_edge(self.element_edges[t][r], &mut edge_marked, &mut queue);
        }
        // Closure: any element with a marked edge must bisect its refinement edge.
        while let Some(t) = queue.pop() {
            let r = self.triangles[t].refinement_edge as usize;
            let ref_edge = self.element_edges[t][r];
            if !edge_marked[ref_edge] && self.element_edges[t].iter().any(|&e| edge_marked[e]) {
                mark_edge(ref_edge, &mut edge_marked, &mut queue);
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        for (edge, _) in self.edges.iter().zip(&edge_marked).filter(|(_, &m)| m) {
            let [a, b] = edge.vertices.map(|v| self.vertices[v]);
            midpoints.insert((edge.vertices[0], edge.vertices[1]), vertices.len());
            vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }

        let mut triangles = Vec::with_capacity(self.num_elements() * 2);
        for (tri, edges) in self.triangles.iter().zip(&self.element_edges) {
            let marks = edges.map(|e| edge_marked[e]);
            bisect(tri.vertices, tri.refinement_edge as usize, marks, &midpoints, &mut triangles);
        }
        Mesh::new(vertices, triangles)
    }

    /// One uniform level: two full NVB sweeps, halving every element diameter.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.num_elements()).collect();
        let once = self.refine_marked(&all)?;
        let all: Vec<usize> = (0..once.num_elements()).collect();
        once.refine_marked(&all)
    }

    /// Plain-text dump: a `vertices <nv> triangles <nt>` header, then `v x y`
    /// and `t i j k r` lines. Floats use the shortest round-trip form.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "vertices {} triangles {}", self.num_vertices(), self.num_elements()).unwrap();
        for v in &self.vertices {
            writeln!(buf, "v {:?} {:?}", v[0], v[1]).unwrap();
        }
        for t in &self.triangles {
            let [i, j, k] = t.vertices;
            writeln!(buf, "t {i} {j} {k} {}", t.refinement_edge).unwrap();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Mesh> {
        let mut lines = input.lines().enumerate();
        let parse_err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (nv, nt) = match fields.as_slice() {
            ["vertices", nv, "triangles", nt] => (
                nv.parse::<usize>().map_err(|_| parse_err(ln, "bad vertex count"))?,
                nt.parse::<usize>().map_err(|_| parse_err(ln, "bad triangle count"))?,
            ),
            _ => return Err(parse_err(ln, "expected `vertices <nv> triangles <nt>`")),
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut triangles = Vec::with_capacity(nt);
        for (ln, line) in lines {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                ["v", x, y] => {
                    let x = x.parse().map_err(|_| parse_err(ln, "bad coordinate"))?;
                    let y = y.parse().map_err(|_| parse_err(ln, "bad coordinate"))?;
                    vertices.push([x, y]);
                }
                ["t", i, j, k, r] => {
                    let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err(ln, "bad index"));
                    let r = r.parse::<u8>().map_err(|_| parse_err(ln, "bad refinement edge"))?;
                    triangles.push(Triangle { vertices: [idx(i)?, idx(j)?, idx(k)?], refinement_edge: r });
                }
                _ => return Err(parse_err(ln, "unrecognized record")),
            }
        }
        if vertices.len() != nv || triangles.len() != nt {
            return Err(parse_err(0, "record counts do not match the header"));
        }
        Mesh::new(vertices, triangles)
    }
}

fn bisect(
    v: [usize; 3],
    r: usize,
    marks: [bool; 3],
    midpoints: &HashMap<(usize, usize), usize>,
    out: &mut Vec<Triangle>,
) {
    if !marks[r] {
        out.push(Triangle { vertices: v, refinement_edge: r as u8 });
        return;
    }
    let (newest, a, b) = (v[r], v[(r + 1) % 3], v[(r + 2) % 3]);
    let m = midpoints[&edge_key(a, b)];
    // The midpoint becomes the newest vertex (local index 0) of both children.
    bisect([m, newest, a], 0, [marks[(r + 2) % 3], false, false], midpoints, out);
    bisect([m, b, newest], 0, [marks[(r + 1) % 3], false, false], midpoints, out);
}

/// Index of the longest edge, lowest index on ties.
fn longest_edge(p: [[f64; 2]; 3]) -> u8 {
    let len = |k: usize| dist(p[(k + 1) % 3], p[(k + 2) % 3]);
    let mut best = 0;
    for k in 1..3 {
        if len(k) > len(best) * (1.0 + 1e-12) {
            best = k;
        }
    }
    best as u8
}

fn with_longest_edges(vertices: Vec<[f64; 2]>, tris: Vec<[usize; 3]>) -> Result<Mesh> {
    let triangles = tris
        .into_iter()
        .map(|t| Triangle { vertices: t, refinement_edge: longest_edge(t.map(|i| vertices[i])) })
        .collect();
    Mesh::new(vertices, triangles)
}

/// `(0,1)²` split into `n × n` cells, each cut by its lower-left to
/// upper-right diagonal.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidParameter("unit_square_mesh needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (ll, lr, ur, ul) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tris.push([ll, lr, ur]);
            tris.push([ll, ur, ul]);
        }
    }
    with_longest_edges(vertices, tris)
}

/// L-shaped domain `(-1,1)² \ [0,1]×[-1,0]` as three unit squares, each cut
/// by the diagonal through the reentrant corner at the origin.
pub fn lshape_mesh() -> Mesh {
    let vertices =
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [-1.0, 1.0], [-1.0, 0.0], [-1.0, -1.0], [0.0, -1.0]];
    let tris = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 6], [0, 6, 7]];
    with_longest_edges(vertices, tris).expect("static L-shape mesh is valid")
}
