//! Simplex geometry: points, barycentric coordinates, affine charts onto the
//! reference simplex, and the change of domain between the unit hypercube and
//! the unit simplex.
//!
//! All mesh logic works in reference coordinates, i.e. on
//! `conv(0, e_1, ..., e_d)`. A general simplex is brought there with an
//! [`AffineChart`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `sum(lambda) == 1`.
pub const BARYCENTRIC_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("degenerate simplex (edge vectors are linearly dependent)")]
    Degenerate,
    #[error("simplex needs d+1 = {expected} vertices, got {got}")]
    VertexCount { expected: usize, got: usize },
}

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { coords })
    }

    pub fn origin(d: usize) -> Self {
        Self { coords: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(&self.coords, &other.coords)
    }

    /// Exact arithmetic mean of two points.
    pub fn midpoint(&self, other: &Point) -> Point {
        Point {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Barycentric weights `lambda_0, ..., lambda_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Barycentric {
    lambda: Vec<f64>,
}

impl Barycentric {
    /// Barycentric coordinates of `x` with respect to the reference simplex
    /// `conv(0, e_1, ..., e_d)`: `lambda_0 = 1 - sum(x)`, `lambda_i = x_i`.
    pub fn of_reference(x: &[f64]) -> Self {
        let mut lambda = Vec::with_capacity(x.len() + 1);
        lambda.push(1.0 - x.iter().sum::<f64>());
        lambda.extend_from_slice(x);
        Self { lambda }
    }

    pub fn from_weights(lambda: Vec<f64>) -> Self {
        Self { lambda }
    }

    pub fn weights(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// True when every weight is `>= -tol` and the weights sum to one.
    pub fn is_inside(&self, tol: f64) -> bool {
        (self.sum() - 1.0).abs() <= BARYCENTRIC_SUM_TOL && self.lambda.iter().all(|&l| l >= -tol)
    }

    /// `max_i |self_i - other_i|`.
    pub fn max_abs_diff(&self, other: &Barycentric) -> f64 {
        self.lambda
            .iter()
            .zip(&other.lambda)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for Barycentric {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.lambda[i]
    }
}

/// `conv(v_0, ..., v_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    vertices: Vec<Point>,
}

impl Simplex {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let d = vertices.first().map(Point::dim).ok_or(GeometryError::ZeroDimension)?;
        if vertices.len() != d + 1 {
            return Err(GeometryError::VertexCount {
                expected: d + 1,
                got: vertices.len(),
            });
        }
        if let Some(p) = vertices.iter().find(|p| p.dim() != d) {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        let s = Self { vertices };
        if s.edge_matrix_lu().is_none() {
            return Err(GeometryError::Degenerate);
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Point {
        &self.vertices[i]
    }

    /// Unsigned d-volume.
    pub fn volume(&self) -> f64 {
        let rows: Vec<&[f64]> = self.vertices.iter().map(Point::coords).collect();
        simplex_volume(&rows)
    }

    fn edge_matrix_lu(&self) -> Option<Lu> {
        let d = self.dim();
        let v0 = self.vertices[0].coords();
        // column j holds v_{j+1} - v_0
        let mut m = vec![0.0; d * d];
        for j in 0..d {
            let vj = self.vertices[j + 1].coords();
            for i in 0..d {
                m[i * d + j] = vj[i] - v0[i];
            }
        }
        Lu::factor(m, d)
    }
}

/// The reference simplex `conv(0, e_1, ..., e_d)`; vertex 0 is the origin.
pub fn unit_simplex(d: usize) -> Result<Simplex, GeometryError> {
    if d == 0 {
        return Err(GeometryError::ZeroDimension);
    }
    let mut vertices = vec![Point::origin(d)];
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        vertices.push(Point { coords: e });
    }
    Ok(Simplex { vertices })
}

/// Barycentric coordinates of `p` with respect to `s`, from the `d x d` system
/// in the edge vectors `v_i - v_0` (partial pivoting).
pub fn barycentric(p: &Point, s: &Simplex) -> Result<Barycentric, GeometryError> {
    let d = s.dim();
    if p.dim() != d {
        return Err(GeometryError::DimensionMismatch {
            expected: d,
            got: p.dim(),
        });
    }
    let lu = s.edge_matrix_lu().ok_or(GeometryError::Degenerate)?;
    let v0 = s.vertex(0).coords();
    let rhs: Vec<f64> = p.coords().iter().zip(v0).map(|(a, b)| a - b).collect();
    let tail = lu.solve(&rhs);
    let mut lambda = Vec::with_capacity(d + 1);
    lambda.push(1.0 - tail.iter().sum::<f64>());
    lambda.extend(tail);
    Ok(Barycentric { lambda })
}

/// `V^{-1}`: maps `[0,1]^d` onto the unit simplex by
/// `x -> (|x|_inf / |x|_1) x`, with `V^{-1}(0) = 0`.
pub fn cube_to_simplex(p: &Point) -> Point {
    let l1: f64 = p.coords.iter().map(|c| c.abs()).sum();
    if l1 == 0.0 {
        return Point::origin(p.dim());
    }
    let linf = p.coords.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let scale = linf / l1;
    Point {
        coords: p.coords.iter().map(|c| c * scale).collect(),
    }
}

/// `V`: inverse of [`cube_to_simplex`], `y -> (|y|_1 / |y|_inf) y`, `V(0) = 0`.
pub fn simplex_to_cube(p: &Point) -> Point {
    let linf = p.coords.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if linf == 0.0 {
        return Point::origin(p.dim());
    }
    let l1: f64 = p.coords.iter().map(|c| c.abs()).sum();
    let scale = l1 / linf;
    Point {
        coords: p.coords.iter().map(|c| c * scale).collect(),
    }
}

/// Affine bijection between a general simplex and the reference simplex.
/// Reference coordinates of a point are its barycentric weights 1..=d.
#[derive(Debug, Clone)]
pub struct AffineChart {
    simplex: Simplex,
}

impl AffineChart {
    pub fn new(simplex: Simplex) -> Self {
        Self { simplex }
    }

    pub fn simplex(&self) -> &Simplex {
        &self.simplex
    }

    pub fn to_reference(&self, p: &Point) -> Result<Point, GeometryError> {
        let lam = barycentric(p, &self.simplex)?;
        Ok(Point {
            coords: lam.weights()[1..].to_vec(),
        })
    }

    pub fn from_reference(&self, u: &Point) -> Result<Point, GeometryError> {
        let d = self.simplex.dim();
        if u.dim() != d {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                got: u.dim(),
            });
        }
        let v0 = self.simplex.vertex(0).coords();
        let mut out = v0.to_vec();
        for (j, &w) in u.coords().iter().enumerate() {
            let vj = self.simplex.vertex(j + 1).coords();
            for i in 0..d {
                out[i] += w * (vj[i] - v0[i]);
            }
        }
        Ok(Point { coords: out })
    }
}

/// Unsigned volume of the simplex spanned by `rows` (d+1 points in R^d).
pub(crate) fn simplex_volume(rows: &[&[f64]]) -> f64 {
    let d = rows.len() - 1;
    let v0 = rows[0];
    let mut m = vec![0.0; d * d];
    for (j, r) in rows[1..].iter().enumerate() {
        for i in 0..d {
            m[i * d + j] = r[i] - v0[i];
        }
    }
    let det = determinant(m, d);
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    det.abs() / fact
}

fn determinant(mut m: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&a, &b| m[a * n + k].abs().total_cmp(&m[b * n + k].abs()))
            .unwrap();
        if m[p * n + k] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        let pivot = m[k * n + k];
        det *= pivot;
        for i in k + 1..n {
            let f = m[i * n + k] / pivot;
            for j in k..n {
                m[i * n + j] -= f * m[k * n + j];
            }
        }
    }
    det
}

/// Row-major LU factorisation with partial pivoting.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return None;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap();
            if a[p * n + k].abs() <= 1e-14 * scale {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                a[i * n + k] = f;
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[i * n + j] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[i * n + j] * y[j];
            }
            y[i] /= self.lu[i * n + i];
        }
        y
    }
}
