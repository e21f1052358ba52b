//! Brute-force checks that do not depend on the solver: a grid search for
//! fixed points, an exhaustive Sperner-cell count and a longest-edge
//! bisection chain.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Point;
use crate::labeling::{self, support, LabelSet, LabelingStrategy};
use crate::mesh::{CellId, Mesh};
use crate::problems::Problem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("labels violate the face condition; Sperner's lemma does not apply")]
    CoverViolated,
    #[error("dimension must be at least 1")]
    Dimension,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMinimum {
    /// Integer barycentric grid coordinates `k_0..k_d`, summing to the
    /// resolution.
    pub index: Vec<usize>,
    pub point: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub resolution: usize,
    pub points_evaluated: usize,
    pub min_residual: f64,
    /// Local minima of `|F(x) - x|_inf` below `2/resolution`, ascending.
    pub minima: Vec<GridMinimum>,
}

impl GridReport {
    /// Largest coordinate distance from `p` to the nearest reported minimum,
    /// in grid cells.
    pub fn cells_to_nearest(&self, p: &[f64]) -> f64 {
        let h = 1.0 / self.resolution as f64;
        self.minima
            .iter()
            .map(|m| m.point.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / h)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(|F(x) - x|_inf, |F(x) - x|_2)`; the Euclidean norm only breaks ties
/// between neighbours on plateaus of the max norm.
fn residual_at(problem: &Problem, x: &[f64]) -> (f64, f64) {
    let p = Point::new(x.to_vec()).expect("grid points are finite");
    let fx = problem.eval(&p).image;
    if fx.len() != x.len() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let inf = x.iter().zip(&fx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let two = x.iter().zip(&fx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if inf.is_nan() || two.is_nan() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (inf, two)
    }
}

/// Every composition of `n` into `parts` nonnegative parts, in
/// lexicographic order.
fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; parts];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[i] = k;
            rec(i + 1, left - k, cur, out);
        }
    }
    rec(0, n, &mut cur, &mut out);
    out
}

/// Evaluates the residual on the barycentric grid with spacing
/// `1/resolution` and reports its local minima below `2/resolution`. A grid
/// point is a local minimum when no neighbour (one unit moved between two
/// barycentric coordinates) has a smaller residual, comparing max norms
/// first and Euclidean norms on ties.
pub fn grid_fixed_points(problem: &Problem, resolution: usize) -> Result<GridReport, OracleError> {
    if resolution < 2 {
        return Err(OracleError::Resolution(resolution));
    }
    let d = problem.dimension;
    let n = d + 1;
    let h = 1.0 / resolution as f64;
    let grid = compositions(resolution, n);
    let index_of = |k: &[usize]| grid.binary_search_by(|g| g.as_slice().cmp(k)).ok();
    let res: Vec<(f64, f64)> = grid
        .iter()
        .map(|k| {
            let x: Vec<f64> = k[1..].iter().map(|&ki| ki as f64 * h).collect();
            residual_at(problem, &x)
        })
        .collect();

    let threshold = 2.0 * h;
    let mut minima = Vec::new();
    let mut nb = vec![0; n];
    for (gi, k) in grid.iter().enumerate() {
        let r = res[gi];
        if r.0 >= threshold {
            continue;
        }
        let mut is_min = true;
        'outer: for a in 0..n {
            if k[a] == 0 {
                continue;
            }
            for b in 0..n {
                if a == b {
                    continue;
                }
                nb.copy_from_slice(k);
                nb[a] -= 1;
                nb[b] += 1;
                if let Some(j) = index_of(&nb) {
                    if res[j] < r {
                        is_min = false;
                        break 'outer;
                    }
                }
            }
        }
        if is_min {
            minima.push(GridMinimum {
                index: k.clone(),
                point: k[1..].iter().map(|&ki| ki as f64 * h).collect(),
                residual: r.0,
            });
        }
    }
    minima.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    Ok(GridReport {
        resolution,
        points_evaluated: grid.len(),
        min_residual: res.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        minima,
    })
}

/// Number of alive cells whose label sets admit a distinct-label matching,
/// and whether that number is odd. Requires the face condition.
pub fn sperner_parity(mesh: &Mesh, strategy: LabelingStrategy) -> Result<(usize, bool), OracleError> {
    if !labeling::face_cover_check(mesh, strategy) {
        return Err(OracleError::CoverViolated);
    }
    let count = count_sperner(mesh, |v| mesh.vertex(v).labels().unwrap_or_default());
    Ok((count, count % 2 == 1))
}

/// Sperner-cell count after reducing every label set to a single admissible
/// label: the smallest label inside the support of the vertex. This is a
/// classic Sperner labeling, for which the count is always odd.
pub fn sperner_parity_single_valued(mesh: &Mesh, strategy: LabelingStrategy) -> Result<(usize, bool), OracleError> {
    if !labeling::face_cover_check(mesh, strategy) {
        return Err(OracleError::CoverViolated);
    }
    let count = count_sperner(mesh, |v| {
        let e = mesh.vertex(v).eval().expect("checked by cover");
        let pick = e.labels.intersection(support(&e.lam_x, strategy.tau)).min().expect("checked by cover");
        LabelSet::single(pick)
    });
    Ok((count, count % 2 == 1))
}

fn count_sperner(mesh: &Mesh, labels: impl Fn(crate::mesh::VertexId) -> LabelSet) -> usize {
    mesh.alive_cells()
        .filter(|&c: &CellId| {
            let sets: Vec<LabelSet> = mesh.cell(c).expect("alive").vertex_ids.iter().map(|&v| labels(v)).collect();
            labeling::is_sperner(&sets)
        })
        .count()
}

/// Longest edge of the tracked cell after each of `chain_length` bisections,
/// starting from the unit simplex. Each step bisects the first longest edge
/// `(i, j)`, `i < j`, in the cell's corner order and follows the child that
/// keeps corner `i` (so the origin stays a corner of every cell of the
/// chain).
pub fn edge_halving_profile(d: usize, chain_length: usize) -> Result<Vec<f64>, OracleError> {
    if d == 0 {
        return Err(OracleError::Dimension);
    }
    let mut mesh = Mesh::init(d, 0).map_err(|_| OracleError::Dimension)?;
    let mut cell = CellId(0);
    let mut out = Vec::with_capacity(chain_length);
    for _ in 0..chain_length {
        let e = mesh.longest_edge(cell);
        let (a, b) = mesh.edge(e).expect("alive").endpoints;
        let vs = mesh.cell(cell).expect("alive").vertex_ids.clone();
        let pa = vs.iter().position(|&v| v == a).expect("edge of cell");
        let pb = vs.iter().position(|&v| v == b).expect("edge of cell");
        let j = pa.max(pb);
        let split = mesh.bisect_edge(e).expect("alive edge");
        cell = split
            .new_cells
            .iter()
            .copied()
            .find(|&c| {
                let cv = &mesh.cell(c).expect("new").vertex_ids;
                cv[j] == split.vertex && cv.iter().enumerate().all(|(k, &v)| k == j || v == vs[k])
            })
            .expect("one child replaces corner j");
        out.push(mesh.cell_edges(cell).into_iter().map(|e| mesh.edge_length(e)).fold(0.0, f64::max));
    }
    Ok(out)
}

/// True when the tracked cell's longest edge is `sqrt(2)/2^k` (to 1e-12)
/// after every `k*d` bisections of the chain.
pub fn edge_halving_check(d: usize, chain_length: usize) -> bool {
    let Ok(profile) = edge_halving_profile(d, chain_length) else {
        return false;
    };
    (1..=chain_length / d).all(|k| {
        let want = std::f64::consts::SQRT_2 / 2f64.powi(k as i32);
        (profile[k * d - 1] - want).abs() <= 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Barycentric;
    use crate::mesh::{VertexEval, VertexId};
    use crate::problems::builtin;

    #[test]
    fn grid_half_map() {
        let r = grid_fixed_points(&builtin("half", 2, None).unwrap(), 64).unwrap();
        assert_eq!(r.minima.len(), 1);
        assert_eq!(r.minima[0].point, vec![0.0, 0.0]);
        assert_eq!(r.points_evaluated, 65 * 66 / 2);
    }

    #[test]
    fn grid_swap_diagonal() {
        let r = grid_fixed_points(&builtin("swap", 2, None).unwrap(), 32).unwrap();
        let on_diag = r.minima.iter().filter(|m| m.point[0] == m.point[1]).count();
        assert_eq!(on_diag, 17);
        assert!(r.minima.iter().all(|m| m.residual == 0.0));
    }

    #[test]
    fn grid_contraction() {
        let r = grid_fixed_points(&builtin("contraction", 2, None).unwrap(), 64).unwrap();
        let best = &r.minima[0];
        for c in &best.point {
            assert!((c - 1.0 / 3.0).abs() <= 1.0 / 64.0);
        }
        assert!(r.cells_to_nearest(&[1.0 / 3.0, 1.0 / 3.0]) <= 1.0);
        assert!(grid_fixed_points(&builtin("half", 2, None).unwrap(), 1).is_err());
    }

    fn label_root(labels: &[LabelSet]) -> Mesh {
        let mut m = Mesh::init(labels.len() - 1, 0).unwrap();
        for (i, l) in labels.iter().enumerate() {
            let x = m.vertex(VertexId(i)).position().clone();
            let lam = Barycentric::of_reference(x.coords());
            m.set_eval(VertexId(i), VertexEval { image: x, lam_x: lam.clone(), lam_fx: lam, labels: *l, raw: None });
        }
        m
    }

    #[test]
    fn parity_of_root_cell() {
        let m = label_root(&[LabelSet::single(0), LabelSet::single(1), LabelSet::single(2)]);
        assert_eq!(sperner_parity(&m, LabelingStrategy::not_closer()).unwrap(), (1, true));
        let bad = label_root(&[LabelSet::single(1), LabelSet::single(1), LabelSet::single(2)]);
        assert_eq!(sperner_parity(&bad, LabelingStrategy::not_closer()), Err(OracleError::CoverViolated));
    }

    #[test]
    fn halving_small_cases() {
        let p = edge_halving_profile(2, 2).unwrap();
        assert!((p[1] - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-12);
        let p = edge_halving_profile(3, 3).unwrap();
        assert!((p[2] - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-12);
        let p = edge_halving_profile(4, 8).unwrap();
        assert!((p[7] - std::f64::consts::SQRT_2 / 4.0).abs() < 1e-12);
        assert!(edge_halving_check(3, 9));
    }
}
