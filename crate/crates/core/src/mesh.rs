//! Conforming triangulation of the reference simplex with edge ages.
//!
//! Bisecting an edge splits every alive cell around it, so the midpoint
//! becomes a corner of all of them and no hanging nodes appear. Records are
//! never removed: dead edges and cells stay in the stores as tombstones and
//! identifiers are never reused.
//!
//! Edge ages drive the refinement order of the solver. The root edges at the
//! origin start with age 0 and the remaining (longer) root edges with age 1.
//! A bisection gives the two halves of the split edge age 0 and every other
//! new edge age 1.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Barycentric, Point, Simplex};
use crate::labeling::{LabelSet, MAX_LABELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("dimension must be between 1 and {max}, got {got}")]
    BadDimension { got: usize, max: usize },
    #[error("edge {0} is not alive")]
    DeadEdge(EdgeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
    #[error("cell {0} is not alive")]
    DeadCell(CellId),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
}

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(VertexId, "v");
id_type!(EdgeId, "e");
id_type!(CellId, "c");

/// Evaluation data cached on a vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexEval {
    pub image: Point,
    pub lam_x: Barycentric,
    pub lam_fx: Barycentric,
    pub labels: LabelSet,
    /// Raw values of the underlying zero-search map, when there is one.
    pub raw: Option<Vec<f64>>,
}

impl VertexEval {
    /// `max_i |lambda_i(x) - lambda_i(F(x))|`, zero exactly at fixed points.
    pub fn residual(&self) -> f64 {
        self.lam_x.max_abs_diff(&self.lam_fx)
    }
}

#[derive(Debug, Clone)]
pub struct VertexRecord {
    position: Point,
    eval: Option<VertexEval>,
}

impl VertexRecord {
    pub fn position(&self) -> &Point {
        &self.position
    }

    pub fn eval(&self) -> Option<&VertexEval> {
        self.eval.as_ref()
    }

    pub fn labels(&self) -> Option<LabelSet> {
        self.eval.as_ref().map(|e| e.labels)
    }
}

#[derive(Debug, Clone)]
pub struct EdgeRecord {
    pub endpoints: (VertexId, VertexId),
    pub age: u64,
    pub incident_cells: BTreeSet<CellId>,
    pub alive: bool,
}

#[derive(Debug, Clone)]
pub struct CellRecord {
    pub vertex_ids: Vec<VertexId>,
    pub alive: bool,
    pub parent: Option<CellId>,
}

/// Result of [`Mesh::bisect_edge`].
#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    pub edge: EdgeId,
    pub vertex: VertexId,
    pub new_cells: Vec<CellId>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    root: Simplex,
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
    cells: Vec<CellRecord>,
    edge_index: HashMap<(VertexId, VertexId), EdgeId>,
    alive_cells: BTreeSet<CellId>,
    age_count: u64,
}

fn key(a: VertexId, b: VertexId) -> (VertexId, VertexId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// The unit simplex as a single cell, optionally followed by
    /// `initial_refinement` uniform passes that bisect every currently longest
    /// edge. After such passes the ages are reset like the root's: the longest
    /// edges get age 1, all others age 0.
    pub fn init(d: usize, initial_refinement: usize) -> Result<Mesh, MeshError> {
        if d == 0 || d + 1 > MAX_LABELS {
            return Err(MeshError::BadDimension { got: d, max: MAX_LABELS - 1 });
        }
        let root = geometry::unit_simplex(d).expect("d >= 1");
        let mut mesh = Mesh {
            dim: d,
            root: root.clone(),
            vertices: Vec::new(),
            edges: Vec::new(),
            cells: Vec::new(),
            edge_index: HashMap::new(),
            alive_cells: BTreeSet::new(),
            age_count: 0,
        };
        let ids: Vec<VertexId> = root
            .vertices()
            .iter()
            .map(|p| mesh.push_vertex(p.clone()))
            .collect();
        for i in 0..=d {
            for j in i + 1..=d {
                let age = if i == 0 { 0 } else { 1 };
                mesh.get_or_create_edge(ids[i], ids[j], age);
            }
        }
        mesh.push_cell(ids, None);

        for _ in 0..initial_refinement {
            mesh.uniform_pass();
        }
        if initial_refinement > 0 {
            let longest = mesh.max_edge_length();
            for e in 0..mesh.edges.len() {
                if mesh.edges[e].alive {
                    let len = mesh.edge_length(EdgeId(e));
                    mesh.edges[e].age = u64::from(len >= longest * (1.0 - 1e-12));
                }
            }
        }
        Ok(mesh)
    }

    fn uniform_pass(&mut self) {
        let longest = self.max_edge_length();
        let targets: Vec<EdgeId> = self
            .alive_edges()
            .filter(|&e| self.edge_length(e) >= longest * (1.0 - 1e-12))
            .collect();
        for e in targets {
            if self.edges[e.0].alive {
                self.bisect_edge(e).expect("alive edge");
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Simplex {
        &self.root
    }

    pub fn age_count(&self) -> u64 {
        self.age_count
    }

    pub fn set_age_count(&mut self, value: u64) {
        self.age_count = value;
    }

    pub fn vertices(&self) -> &[VertexRecord] {
        &self.vertices
    }

    pub fn vertex(&self, v: VertexId) -> &VertexRecord {
        &self.vertices[v.0]
    }

    pub fn edge(&self, e: EdgeId) -> Result<&EdgeRecord, MeshError> {
        self.edges.get(e.0).ok_or(MeshError::UnknownEdge(e))
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn cell(&self, c: CellId) -> Result<&CellRecord, MeshError> {
        self.cells.get(c.0).ok_or(MeshError::UnknownCell(c))
    }

    pub fn cells(&self) -> &[CellRecord] {
        &self.cells
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_alive_cells(&self) -> usize {
        self.alive_cells.len()
    }

    /// Alive cells in ascending id order.
    pub fn alive_cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.alive_cells.iter().copied()
    }

    /// Alive edges in ascending id order.
    pub fn alive_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.alive)
            .map(|(i, _)| EdgeId(i))
    }

    /// The alive edge joining `a` and `b`, if any.
    pub fn find_edge(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.edge_index.get(&key(a, b)).copied()
    }

    pub fn set_eval(&mut self, v: VertexId, eval: VertexEval) {
        self.vertices[v.0].eval = Some(eval);
    }

    pub fn eval_mut(&mut self, v: VertexId) -> Option<&mut VertexEval> {
        self.vertices[v.0].eval.as_mut()
    }

    pub fn cell_points(&self, c: CellId) -> Vec<&Point> {
        self.cells[c.0]
            .vertex_ids
            .iter()
            .map(|v| &self.vertices[v.0].position)
            .collect()
    }

    pub fn edge_length(&self, e: EdgeId) -> f64 {
        let (a, b) = self.edges[e.0].endpoints;
        self.vertices[a.0].position.distance(&self.vertices[b.0].position)
    }

    pub fn cell_volume(&self, c: CellId) -> f64 {
        let rows: Vec<&[f64]> = self.cell_points(c).into_iter().map(Point::coords).collect();
        geometry::simplex_volume(&rows)
    }

    /// Largest corner-to-corner distance of a cell.
    pub fn cell_diameter(&self, c: CellId) -> f64 {
        let pts = self.cell_points(c);
        let mut best = 0.0_f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max(pts[i].distance(pts[j]));
            }
        }
        best
    }

    pub fn cell_barycenter(&self, c: CellId) -> Point {
        let pts = self.cell_points(c);
        let n = pts.len() as f64;
        let mut acc = vec![0.0; self.dim];
        for p in &pts {
            for (a, x) in acc.iter_mut().zip(p.coords()) {
                *a += x;
            }
        }
        Point::new(acc.into_iter().map(|a| a / n).collect()).expect("finite")
    }

    /// The cell's edges in local corner order `(0,1), (0,2), ..., (d-1,d)`.
    pub fn cell_edges(&self, c: CellId) -> Vec<EdgeId> {
        let vs = &self.cells[c.0].vertex_ids;
        let mut out = Vec::with_capacity(vs.len() * (vs.len() - 1) / 2);
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                out.push(self.find_edge(vs[i], vs[j]).expect("conforming mesh"));
            }
        }
        out
    }

    /// A longest edge of the cell; ties go to the first pair in local corner
    /// order.
    pub fn longest_edge(&self, c: CellId) -> EdgeId {
        let mut best: Option<(f64, EdgeId)> = None;
        for e in self.cell_edges(c) {
            let len = self.edge_length(e);
            match best {
                Some((b, _)) if len <= b * (1.0 + 1e-12) => {}
                _ => best = Some((len, e)),
            }
        }
        best.expect("cell has edges").1
    }

    /// Alive cell containing `p` (closed cells, lowest id first).
    pub fn locate(&self, p: &Point) -> Option<CellId> {
        self.alive_cells().find(|&c| {
            let pts: Vec<Point> = self.cell_points(c).into_iter().cloned().collect();
            let s = Simplex::new(pts).expect("cells are nondegenerate");
            geometry::barycentric(p, &s)
                .map(|l| l.weights().iter().all(|&w| w >= -1e-12))
                .unwrap_or(false)
        })
    }

    fn push_vertex(&mut self, position: Point) -> VertexId {
        self.vertices.push(VertexRecord { position, eval: None });
        VertexId(self.vertices.len() - 1)
    }

    fn get_or_create_edge(&mut self, a: VertexId, b: VertexId, age: u64) -> EdgeId {
        let k = key(a, b);
        if let Some(&e) = self.edge_index.get(&k) {
            return e;
        }
        let id = EdgeId(self.edges.len());
        self.edges.push(EdgeRecord {
            endpoints: k,
            age,
            incident_cells: BTreeSet::new(),
            alive: true,
        });
        self.edge_index.insert(k, id);
        id
    }

    fn push_cell(&mut self, vertex_ids: Vec<VertexId>, parent: Option<CellId>) -> CellId {
        let id = CellId(self.cells.len());
        for i in 0..vertex_ids.len() {
            for j in i + 1..vertex_ids.len() {
                let e = self.get_or_create_edge(vertex_ids[i], vertex_ids[j], 1);
                self.edges[e.0].incident_cells.insert(id);
            }
        }
        self.cells.push(CellRecord {
            vertex_ids,
            alive: true,
            parent,
        });
        self.alive_cells.insert(id);
        id
    }

    /// Inserts the midpoint of `e` and splits every alive cell around it into
    /// two children (the midpoint replaces one endpoint in each).
    pub fn bisect_edge(&mut self, e: EdgeId) -> Result<Bisection, MeshError> {
        let rec = self.edges.get(e.0).ok_or(MeshError::UnknownEdge(e))?;
        if !rec.alive {
            return Err(MeshError::DeadEdge(e));
        }
        let (a, b) = rec.endpoints;
        let around: Vec<CellId> = rec.incident_cells.iter().copied().collect();

        let mid = self.vertices[a.0].position.midpoint(&self.vertices[b.0].position);
        let m = self.push_vertex(mid);

        self.edges[e.0].alive = false;
        self.edges[e.0].incident_cells.clear();
        self.edge_index.remove(&(a, b));
        self.get_or_create_edge(a, m, 0);
        self.get_or_create_edge(m, b, 0);

        let mut new_cells = Vec::with_capacity(2 * around.len());
        for c in around {
            let vs = self.cells[c.0].vertex_ids.clone();
            self.cells[c.0].alive = false;
            self.alive_cells.remove(&c);
            for i in 0..vs.len() {
                for j in i + 1..vs.len() {
                    if let Some(&ed) = self.edge_index.get(&key(vs[i], vs[j])) {
                        self.edges[ed.0].incident_cells.remove(&c);
                    }
                }
            }
            let keep_a: Vec<VertexId> = vs.iter().map(|&v| if v == b { m } else { v }).collect();
            let keep_b: Vec<VertexId> = vs.iter().map(|&v| if v == a { m } else { v }).collect();
            new_cells.push(self.push_cell(keep_a, Some(c)));
            new_cells.push(self.push_cell(keep_b, Some(c)));
        }
        Ok(Bisection { edge: e, vertex: m, new_cells })
    }

    /// Adds 2 to the age of every alive edge.
    pub fn increment_ages(&mut self) {
        for e in self.edges.iter_mut().filter(|e| e.alive) {
            e.age += 2;
        }
    }

    /// Alive edges with `age > threshold_offset + age_count`, oldest first,
    /// ties by ascending id.
    pub fn eligible_edges(&self, threshold_offset: u64) -> Vec<EdgeId> {
        let threshold = threshold_offset + self.age_count;
        let mut out: Vec<EdgeId> = self.alive_edges().filter(|e| self.edges[e.0].age > threshold).collect();
        out.sort_by(|x, y| self.edges[y.0].age.cmp(&self.edges[x.0].age).then(x.cmp(y)));
        out
    }

    pub fn max_edge_length(&self) -> f64 {
        self.alive_edges().map(|e| self.edge_length(e)).fold(0.0, f64::max)
    }

    pub fn total_volume(&self) -> f64 {
        self.alive_cells().map(|c| self.cell_volume(c)).sum()
    }

    /// Checks that the alive cells form a conforming triangulation of the
    /// root: every facet is shared by exactly two alive cells or lies on the
    /// root boundary, edge incidence matches the cells, and no alive cell
    /// spans a dead edge.
    pub fn check_conformity(&self) -> Result<(), MeshError> {
        let bad = |msg: String| Err(MeshError::NonConforming(msg));
        let mut facets: HashMap<Vec<VertexId>, usize> = HashMap::new();
        let mut spanned: HashSet<(VertexId, VertexId)> = HashSet::new();
        for c in self.alive_cells() {
            let vs = &self.cells[c.0].vertex_ids;
            for i in 0..vs.len() {
                for j in i + 1..vs.len() {
                    spanned.insert(key(vs[i], vs[j]));
                    match self.find_edge(vs[i], vs[j]) {
                        Some(e) if self.edges[e.0].incident_cells.contains(&c) => {}
                        Some(e) => return bad(format!("{e} does not list incident {c}")),
                        None => return bad(format!("{c} spans {}-{} without an alive edge", vs[i], vs[j])),
                    }
                }
            }
            for skip in 0..vs.len() {
                let mut f: Vec<VertexId> = vs
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort();
                *facets.entry(f).or_default() += 1;
            }
        }
        for (f, n) in &facets {
            match n {
                2 => {}
                1 if self.on_root_boundary(f) => {}
                _ => return bad(format!("facet {f:?} shared by {n} cells")),
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.alive {
                for c in &e.incident_cells {
                    if !self.cells[c.0].alive {
                        return bad(format!("alive e{i} lists dead {c}"));
                    }
                }
            } else if spanned.contains(&e.endpoints) {
                return bad(format!("an alive cell still spans split e{i}"));
            }
        }
        Ok(())
    }

    /// All facet vertices share a vanishing barycentric weight.
    fn on_root_boundary(&self, facet: &[VertexId]) -> bool {
        (0..=self.dim).any(|j| {
            facet.iter().all(|v| {
                let lam = Barycentric::of_reference(self.vertices[v.0].position.coords());
                lam[j].abs() <= 1e-12
            })
        })
    }
}
