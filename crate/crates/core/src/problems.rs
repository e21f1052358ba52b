//! Self-maps of the reference simplex: built-in test problems and affine maps
//! loaded from JSON.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AffineChart, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem '{0}' (expected one of: half, swap, contraction, contraction-eps)")]
    UnknownName(String),
    #[error("problem '{name}' does not support dimension {d}")]
    BadDimension { name: String, d: usize },
    #[error("epsilon has {got} entries, expected {expected}")]
    EpsilonLength { expected: usize, got: usize },
    #[error("epsilon {0:?} does not keep the map inside the simplex")]
    EpsilonRange(Vec<f64>),
    #[error("affine spec: {0}")]
    Affine(String),
}

/// Output of one map evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `F(x)`; may be non-finite or outside the simplex, the caller checks.
    pub image: Vec<f64>,
    /// Raw zero-search values `G(x)` when the map is a transformed problem.
    pub raw: Option<Vec<f64>>,
}

impl From<Vec<f64>> for Evaluation {
    fn from(image: Vec<f64>) -> Self {
        Evaluation { image, raw: None }
    }
}

/// A map from the reference simplex into `R^d`; it is expected (but not
/// assumed) to land back in the simplex.
pub trait SelfMap: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Point) -> Evaluation;
}

/// Adapts a closure on coordinate slices.
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnMap { dim, f }
    }
}

impl<F> SelfMap for FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Point) -> Evaluation {
        Evaluation::from((self.f)(x.coords()))
    }
}

/// Known fixed points, attached for testing and verification.
#[derive(Debug, Clone, PartialEq)]
pub enum KnownFixedPoints {
    Points(Vec<Point>),
    /// The diagonal `x_1 = x_2` of the 2-simplex.
    Diagonal,
}

impl KnownFixedPoints {
    /// Distance from `p` to the known fixed-point set.
    pub fn distance(&self, p: &Point) -> f64 {
        match self {
            KnownFixedPoints::Points(ps) => ps.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min),
            KnownFixedPoints::Diagonal => (p[0] - p[1]).abs() / std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub dimension: usize,
    pub map: Arc<dyn SelfMap>,
    pub known: Option<KnownFixedPoints>,
    /// Set for zero-search transforms, whose origin is always fixed.
    pub spurious_origin: bool,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("known", &self.known)
            .field("spurious_origin", &self.spurious_origin)
            .finish()
    }
}

impl Problem {
    pub fn new(name: impl Into<String>, map: Arc<dyn SelfMap>) -> Self {
        Problem {
            name: name.into(),
            dimension: map.dim(),
            map,
            known: None,
            spurious_origin: false,
        }
    }

    pub fn with_known(mut self, known: KnownFixedPoints) -> Self {
        self.known = Some(known);
        self
    }

    pub fn eval(&self, x: &Point) -> Evaluation {
        self.map.eval(x)
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["half", "swap", "contraction", "contraction-eps"];

/// Perturbation used by `contraction-eps` when none is given. Dimensions above
/// four are padded with 0.001.
pub fn default_epsilon(d: usize) -> Vec<f64> {
    const BASE: [f64; 4] = [0.011, 0.007, 0.005, 0.003];
    (0..d).map(|i| BASE.get(i).copied().unwrap_or(0.001)).collect()
}

/// Affine map `x -> A x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSpec {
    pub dimension: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl AffineSpec {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let d = self.dimension;
        if d == 0 {
            return Err(ProblemError::Affine("dimension must be positive".into()));
        }
        if self.a.len() != d || self.a.iter().any(|r| r.len() != d) {
            return Err(ProblemError::Affine(format!("A must be {d}x{d}")));
        }
        if self.b.len() != d {
            return Err(ProblemError::Affine(format!("b must have {d} entries, got {}", self.b.len())));
        }
        if self.a.iter().flatten().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(ProblemError::Affine("entries must be finite".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + bi)
            .collect()
    }
}

struct Affine(AffineSpec);

impl SelfMap for Affine {
    fn dim(&self) -> usize {
        self.0.dimension
    }

    fn eval(&self, x: &Point) -> Evaluation {
        Evaluation::from(self.0.apply(x.coords()))
    }
}

pub fn from_affine(spec: AffineSpec) -> Result<Problem, ProblemError> {
    spec.validate()?;
    Ok(Problem::new("affine", Arc::new(Affine(spec))))
}

fn scaled_identity(d: usize, s: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { s } else { 0.0 }).collect())
        .collect()
}

/// Built-in problems:
///
/// * `half`: `x -> x/2`, fixed point 0.
/// * `swap`: `(x, y) -> (y, x)` on the triangle, fixed on the diagonal.
/// * `contraction`: `x -> x/(2d) + 1/(2d)`, fixed point `1/(2d-1)` in every
///   coordinate.
/// * `contraction-eps`: the contraction shifted by `epsilon`, fixed point
///   `(1 + 2d eps_i)/(2d-1)`.
pub fn builtin(name: &str, d: usize, epsilon: Option<&[f64]>) -> Result<Problem, ProblemError> {
    let bad_dim = || ProblemError::BadDimension { name: name.to_string(), d };
    if d == 0 {
        return Err(bad_dim());
    }
    let spec = match name {
        "half" => AffineSpec { dimension: d, a: scaled_identity(d, 0.5), b: vec![0.0; d] },
        "swap" => {
            if d != 2 {
                return Err(bad_dim());
            }
            AffineSpec { dimension: 2, a: vec![vec![0.0, 1.0], vec![1.0, 0.0]], b: vec![0.0; 2] }
        }
        "contraction" | "contraction-eps" => {
            let s = 1.0 / (2 * d) as f64;
            let mut b = vec![s; d];
            if name == "contraction-eps" {
                let eps = match epsilon {
                    Some(e) => e.to_vec(),
                    None => default_epsilon(d),
                };
                if eps.len() != d {
                    return Err(ProblemError::EpsilonLength { expected: d, got: eps.len() });
                }
                // image = x/(2d) + 1/(2d) + eps stays in the simplex iff every
                // coordinate stays >= 0 and the sum stays <= 1
                let lo = -1.0 / (2 * d) as f64;
                let hi = (d - 1) as f64 / (2 * d) as f64;
                if eps.iter().any(|&e| !e.is_finite() || e < lo) || eps.iter().sum::<f64>() > hi + 1e-15 {
                    return Err(ProblemError::EpsilonRange(eps));
                }
                for (bi, e) in b.iter_mut().zip(&eps) {
                    *bi += e;
                }
            }
            AffineSpec { dimension: d, a: scaled_identity(d, s), b }
        }
        other => return Err(ProblemError::UnknownName(other.to_string())),
    };

    let known = match name {
        "half" => KnownFixedPoints::Points(vec![Point::origin(d)]),
        "swap" => KnownFixedPoints::Diagonal,
        _ => {
            // x = x/(2d) + b  =>  x = b * 2d/(2d-1)
            let k = (2 * d) as f64 / (2 * d - 1) as f64;
            KnownFixedPoints::Points(vec![Point::new(spec.b.iter().map(|bi| bi * k).collect()).expect("finite")])
        }
    };
    let mut p = from_affine(spec)?;
    p.name = name.to_string();
    Ok(p.with_known(known))
}

struct Conjugate {
    chart: AffineChart,
    inner: Arc<dyn SelfMap>,
}

impl SelfMap for Conjugate {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, u: &Point) -> Evaluation {
        let x = self.chart.from_reference(u).expect("dimension checked at construction");
        let ev = self.inner.eval(&x);
        let image = match Point::new(ev.image) {
            Ok(y) => self.chart.to_reference(&y).map(Point::into_coords).unwrap_or_else(|_| vec![f64::NAN; self.dim()]),
            Err(_) => vec![f64::NAN; self.dim()],
        };
        Evaluation { image, raw: ev.raw }
    }
}

/// Pulls a self-map of an arbitrary simplex back to the reference simplex.
pub fn conjugate(problem: Problem, chart: AffineChart) -> Result<Problem, ProblemError> {
    if chart.simplex().dim() != problem.dimension {
        return Err(ProblemError::BadDimension { name: problem.name.clone(), d: chart.simplex().dim() });
    }
    let known = problem.known.as_ref().and_then(|k| match k {
        KnownFixedPoints::Points(ps) => ps
            .iter()
            .map(|p| chart.to_reference(p).ok())
            .collect::<Option<Vec<_>>>()
            .map(KnownFixedPoints::Points),
        KnownFixedPoints::Diagonal => None,
    });
    Ok(Problem {
        name: problem.name.clone(),
        dimension: problem.dimension,
        map: Arc::new(Conjugate { chart, inner: problem.map }),
        known,
        spurious_origin: problem.spurious_origin,
    })
}
