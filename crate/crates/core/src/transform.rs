//! Turning a zero search into a fixed-point problem, and changing domain
//! between the unit cube and the simplex.
//!
//! For `G: S -> R^d` with a nonnegative gauge `U` (`U(0) = 0`) and scales
//! `c_i >= max U_i(G)`, the map
//!
//! ```text
//! F_i(x) = x_i * (1 - damping * U_i(G(x)) / c_i)
//! ```
//!
//! shrinks every coordinate toward zero, so it maps the simplex into itself.
//! Its fixed points are the points where each coordinate is zero or `G_i`
//! vanishes; in particular the origin is always fixed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{self, Barycentric, Point};
use crate::labeling::{self, LabelError, LabelingStrategy};
use crate::mesh::{Mesh, VertexId};
use crate::problems::{Evaluation, Problem, SelfMap};

pub const DEFAULT_DAMPING: f64 = 0.9;

/// Factor applied to the sampled maximum in [`estimate_c`].
pub const C_INFLATION: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("scale c_{index} = {value} must be positive and finite")]
    NonPositiveScale { index: usize, value: f64 },
    #[error("expected {expected} scales, got {got}")]
    ScaleCount { expected: usize, got: usize },
    #[error("damping {0} must lie in (0, 1)")]
    Damping(f64),
    #[error("samples must be at least 1")]
    NoSamples,
    #[error("vertex {0} has no cached zero-search values")]
    MissingRaw(VertexId),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Componentwise gauge `U`, nonnegative with `U(0) = 0`.
#[derive(Clone)]
pub enum Gauge {
    Square,
    Abs,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Gauge {
    pub fn apply(&self, g: f64) -> f64 {
        match self {
            Gauge::Square => g * g,
            Gauge::Abs => g.abs(),
            Gauge::Custom(f) => f(g),
        }
    }
}

impl std::fmt::Debug for Gauge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gauge::Square => f.write_str("Square"),
            Gauge::Abs => f.write_str("Abs"),
            Gauge::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Clone)]
pub struct ZeroProblem {
    pub name: String,
    pub g: Arc<dyn SelfMap>,
    pub gauge: Gauge,
    pub c: Vec<f64>,
    pub damping: f64,
}

impl ZeroProblem {
    /// Square gauge, damping 0.9 and unit scales; call [`estimate_c`] before
    /// transforming.
    pub fn new(name: impl Into<String>, g: Arc<dyn SelfMap>) -> Self {
        let d = g.dim();
        ZeroProblem {
            name: name.into(),
            g,
            gauge: Gauge::Square,
            c: vec![1.0; d],
            damping: DEFAULT_DAMPING,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        check_scales(&self.c, self.dim())?;
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(TransformError::Damping(self.damping));
        }
        Ok(())
    }

    /// `F(x)` from `x` and already computed `G(x)`.
    pub fn image_from_raw(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        image(x, g, &self.gauge, &self.c, self.damping)
    }
}

fn check_scales(c: &[f64], d: usize) -> Result<(), TransformError> {
    if c.len() != d {
        return Err(TransformError::ScaleCount { expected: d, got: c.len() });
    }
    for (index, &value) in c.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(TransformError::NonPositiveScale { index, value });
        }
    }
    Ok(())
}

fn image(x: &[f64], g: &[f64], gauge: &Gauge, c: &[f64], damping: f64) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(c)
        .map(|((xi, gi), ci)| xi * (1.0 - damping * gauge.apply(*gi) / ci))
        .collect()
}

struct Transformed(ZeroProblem);

impl SelfMap for Transformed {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &Point) -> Evaluation {
        let g = self.0.g.eval(x).image;
        Evaluation {
            image: self.0.image_from_raw(x.coords(), &g),
            raw: Some(g),
        }
    }
}

/// The fixed-point problem of a zero search. Candidates at the origin are
/// tagged as spurious by the solver.
pub fn to_fixed_point(zp: ZeroProblem) -> Result<Problem, TransformError> {
    zp.validate()?;
    let mut p = Problem::new(format!("zero:{}", zp.name), Arc::new(Transformed(zp)));
    p.spurious_origin = true;
    Ok(p)
}

/// Uniform sample of the reference simplex (normalised exponentials).
pub fn sample_simplex<R: Rng>(rng: &mut R, d: usize) -> Point {
    let w: Vec<f64> = (0..=d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    Point::new(w[1..].iter().map(|v| v / s).collect()).expect("finite")
}

/// `c_i = 1.05 * max U_i(G(x))` over `samples` seeded random points plus the
/// corners of the simplex. A component that is zero on every sample gets 1.
pub fn estimate_c(zp: &ZeroProblem, samples: usize, seed: u64) -> Result<Vec<f64>, TransformError> {
    if samples == 0 {
        return Err(TransformError::NoSamples);
    }
    let d = zp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corners = geometry::unit_simplex(d).expect("d >= 1");
    let mut best = vec![0.0_f64; d];
    let pts = corners
        .vertices()
        .iter()
        .cloned()
        .chain((0..samples).map(|_| sample_simplex(&mut rng, d)));
    for x in pts {
        let g = zp.g.eval(&x).image;
        for (b, gi) in best.iter_mut().zip(&g) {
            let u = zp.gauge.apply(*gi);
            if u.is_finite() {
                *b = b.max(u);
            }
        }
    }
    Ok(best
        .into_iter()
        .map(|m| if m > 0.0 { m * C_INFLATION } else { 1.0 })
        .collect())
}

/// Replaces the scales of `zp` by `new_c`, recomputes every evaluated
/// vertex's image from its cached `G` values and relabels it. Returns the
/// number of vertices whose label set changed.
pub fn rescale_and_relabel(
    mesh: &mut Mesh,
    zp: &mut ZeroProblem,
    new_c: &[f64],
    strategy: LabelingStrategy,
) -> Result<usize, TransformError> {
    check_scales(new_c, zp.dim())?;
    for i in 0..mesh.num_vertices() {
        if let Some(e) = mesh.vertex(VertexId(i)).eval() {
            if e.raw.is_none() {
                return Err(TransformError::MissingRaw(VertexId(i)));
            }
        }
    }
    zp.c = new_c.to_vec();
    let mut changed = 0;
    for i in 0..mesh.num_vertices() {
        let v = VertexId(i);
        let x = mesh.vertex(v).position().coords().to_vec();
        let Some(e) = mesh.eval_mut(v) else { continue };
        let img = zp.image_from_raw(&x, e.raw.as_deref().expect("checked above"));
        e.lam_fx = Barycentric::of_reference(&img);
        e.image = Point::new(img).expect("finite image");
        let labels = labeling::compute_labels(&e.lam_x, &e.lam_fx, strategy)?;
        if labels != e.labels {
            changed += 1;
            e.labels = labels;
        }
    }
    Ok(changed)
}

struct CubeWrapped(Arc<dyn SelfMap>);

impl SelfMap for CubeWrapped {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &Point) -> Evaluation {
        let y = self.0.eval(&geometry::simplex_to_cube(x)).image;
        let inside = y.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v));
        let image = match Point::new(y) {
            // clamp the tolerated rounding so the radial map stays defined
            Ok(p) if inside => {
                let clamped = Point::new(p.coords().iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("finite");
                geometry::cube_to_simplex(&clamped).into_coords()
            }
            // anything outside the cube surfaces as a domain violation
            _ => vec![f64::NAN; self.dim()],
        };
        Evaluation { image, raw: None }
    }
}

/// `x -> V^-1(F_cube(V(x)))`: a self-map of `[0,1]^d` seen on the simplex.
pub fn wrap_cube(name: impl Into<String>, f_cube: Arc<dyn SelfMap>) -> Problem {
    Problem::new(name, Arc::new(CubeWrapped(f_cube)))
}
