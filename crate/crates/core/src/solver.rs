//! The refinement loop.
//!
//! Each step ages every edge by 2 and then sweeps the edges older than
//! `3 + age_count`, oldest first. An edge is bisected when one of its
//! incident cells is Sperner; the new midpoint is evaluated and labelled at
//! once, so later edges of the same sweep see the updated cells. A step that
//! bisects nothing retries once with threshold `2 + age_count`. Any bisection
//! in a step bumps `age_count`.

use std::collections::BTreeSet;
use std::fmt;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Barycentric, Point};
use crate::labeling::{self, LabelError, LabelSet, LabelingStrategy};
use crate::mesh::{Bisection, CellId, EdgeId, Mesh, MeshError, VertexEval, VertexId};
use crate::problems::Problem;
use crate::trace::{SolveTrace, TraceEvent};

/// An image coordinate below this (in barycentric terms) is a domain violation.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Candidates closer than this to the origin are tagged as the spurious
/// origin of a zero-search transform.
pub const SPURIOUS_ORIGIN_RADIUS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("F({point:?}) = {image:?} leaves the simplex (barycentric weight {weight:e})")]
    DomainViolation { point: Vec<f64>, image: Vec<f64>, weight: f64 },
    #[error("F({point:?}) returned {got} coordinates, expected {expected}")]
    ImageDimension { point: Vec<f64>, expected: usize, got: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_steps: usize,
    pub max_evaluations: usize,
    /// Stop once every Sperner cell is smaller than this.
    pub target_diameter: f64,
    pub labeling: LabelingStrategy,
    pub initial_refinement: usize,
    pub record_trace: bool,
    /// Only recorded in the trace header.
    pub seed: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_steps: 64,
            max_evaluations: 10_000,
            target_diameter: 1e-6,
            labeling: LabelingStrategy::default(),
            initial_refinement: 0,
            record_trace: true,
            seed: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.max_steps < 1 {
            return Err(SolveError::Config("max_steps must be at least 1".into()));
        }
        if self.target_diameter.is_nan() || self.target_diameter < 0.0 {
            return Err(SolveError::Config("target_diameter must be >= 0".into()));
        }
        LabelingStrategy::new(self.labeling.rule, self.labeling.tau)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxSteps,
    MaxEvaluations,
    TargetDiameter,
    NoSpernerCells,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxSteps => "max-steps",
            StopReason::MaxEvaluations => "max-evaluations",
            StopReason::TargetDiameter => "target-diameter",
            StopReason::NoSpernerCells => "no-sperner-cells",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Vertex of the cell with the smallest residual.
    pub vertex: VertexId,
    pub point: Point,
    pub residual: f64,
    pub barycenter: Point,
    pub cell: CellId,
    pub diameter: f64,
    /// `Some("origin")` for the artificial fixed point of a zero-search
    /// transform.
    pub spurious: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub bisected: Vec<EdgeId>,
    pub ref_flag: bool,
    pub fallback: bool,
    pub age_count: u64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub candidates: Vec<Candidate>,
    pub evaluations_used: usize,
    pub steps_used: usize,
    pub stop_reason: StopReason,
    pub trace: SolveTrace,
    pub mesh: Mesh,
}

impl SolveResult {
    pub fn best(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

#[derive(Debug)]
pub struct Solver {
    problem: Problem,
    config: SolverConfig,
    mesh: Mesh,
    step: usize,
    evaluations: usize,
    cache_hits: usize,
    trace: SolveTrace,
    /// Alive Sperner cells, kept current across bisections.
    sperner: BTreeSet<CellId>,
}

impl Solver {
    /// Builds the initial mesh and evaluates and labels its vertices.
    pub fn new(problem: Problem, config: SolverConfig) -> Result<Solver, SolveError> {
        config.validate()?;
        let mesh = Mesh::init(problem.dimension, config.initial_refinement)?;
        let mut solver = Solver {
            problem,
            config,
            mesh,
            step: 0,
            evaluations: 0,
            cache_hits: 0,
            trace: SolveTrace::default(),
            sperner: BTreeSet::new(),
        };
        let c = &solver.config;
        solver.record(TraceEvent::Run {
            problem: solver.problem.name.clone(),
            dimension: solver.problem.dimension,
            labeling: c.labeling.rule,
            tau: c.labeling.tau,
            initial_refinement: c.initial_refinement,
            max_steps: c.max_steps,
            max_evaluations: c.max_evaluations,
            target_diameter: c.target_diameter,
            seed: c.seed,
        });
        for v in 0..solver.mesh.num_vertices() {
            solver.evaluate(VertexId(v))?;
        }
        solver.sperner = sperner_cells(&solver.mesh).into_iter().collect();
        solver.record_sperner_set();
        Ok(solver)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits
    }

    pub fn trace(&self) -> &SolveTrace {
        &self.trace
    }

    fn record(&mut self, event: TraceEvent) {
        if self.config.record_trace {
            self.trace.push(event);
        }
    }

    fn record_sperner_set(&mut self) {
        if self.config.record_trace {
            let cells = self.sperner_cells();
            self.trace.push(TraceEvent::SpernerSet { step: self.step, cells });
        }
    }

    /// Evaluates `F` at vertex `v` unless already cached, then labels it.
    pub fn evaluate(&mut self, v: VertexId) -> Result<&VertexEval, SolveError> {
        if self.mesh.vertex(v).eval().is_some() {
            self.cache_hits += 1;
            return Ok(self.mesh.vertex(v).eval().expect("checked"));
        }
        let d = self.problem.dimension;
        let position = self.mesh.vertex(v).position().clone();
        let ev = self.problem.eval(&position);
        if ev.image.len() != d {
            return Err(SolveError::ImageDimension {
                point: position.into_coords(),
                expected: d,
                got: ev.image.len(),
            });
        }
        let lam_fx = Barycentric::of_reference(&ev.image);
        let worst = lam_fx.weights().iter().copied().fold(f64::INFINITY, f64::min);
        let image = match Point::new(ev.image.clone()) {
            Ok(p) if worst >= -DOMAIN_TOL => p,
            _ => {
                return Err(SolveError::DomainViolation {
                    point: position.into_coords(),
                    image: ev.image,
                    weight: worst,
                })
            }
        };
        let lam_x = Barycentric::of_reference(position.coords());
        let labels = labeling::compute_labels(&lam_x, &lam_fx, self.config.labeling)?;
        let eval = VertexEval { image, lam_x, lam_fx, labels, raw: ev.raw };
        self.evaluations += 1;
        debug!("evaluated {v} at {:?}: labels {labels}", position.coords());
        if self.config.record_trace {
            self.trace.push(TraceEvent::VertexEvaluated {
                step: self.step,
                vertex: v,
                position: position.coords().to_vec(),
                image: eval.image.coords().to_vec(),
                labels,
                residual: eval.residual(),
            });
        }
        self.mesh.set_eval(v, eval);
        Ok(self.mesh.vertex(v).eval().expect("just set"))
    }

    fn cell_labels(&self, c: CellId) -> Vec<LabelSet> {
        self.mesh
            .cell(c)
            .expect("known cell")
            .vertex_ids
            .iter()
            .map(|&v| self.mesh.vertex(v).labels().unwrap_or_default())
            .collect()
    }

    pub fn is_sperner(&self, c: CellId) -> bool {
        self.sperner.contains(&c)
    }

    pub fn sperner_cells(&self) -> Vec<CellId> {
        self.sperner.iter().copied().collect()
    }

    fn budget_left(&self) -> bool {
        self.evaluations < self.config.max_evaluations
    }

    fn sweep(&mut self, offset: u64, fallback: bool) -> Result<Vec<EdgeId>, SolveError> {
        let mut done = Vec::new();
        for e in self.mesh.eligible_edges(offset) {
            if !self.budget_left() {
                break;
            }
            let rec = self.mesh.edge(e)?;
            if !rec.alive {
                continue;
            }
            let endpoints = rec.endpoints;
            if !rec.incident_cells.iter().any(|&c| self.is_sperner(c)) {
                continue;
            }
            self.bisect(e, endpoints, fallback)?;
            done.push(e);
        }
        Ok(done)
    }

    fn bisect(&mut self, e: EdgeId, endpoints: (VertexId, VertexId), fallback: bool) -> Result<Bisection, SolveError> {
        let parents: Vec<CellId> = self.mesh.edge(e)?.incident_cells.iter().copied().collect();
        let b = self.mesh.bisect_edge(e)?;
        self.record(TraceEvent::EdgeBisected {
            step: self.step,
            edge: e,
            endpoints,
            vertex: b.vertex,
            fallback,
        });
        self.evaluate(b.vertex)?;
        for c in parents {
            self.sperner.remove(&c);
        }
        for &c in &b.new_cells {
            if labeling::is_sperner(&self.cell_labels(c)) {
                self.sperner.insert(c);
            }
        }
        Ok(b)
    }

    /// Bisects `e` outside the age schedule and labels the midpoint.
    pub fn bisect_now(&mut self, e: EdgeId) -> Result<Bisection, SolveError> {
        let endpoints = self.mesh.edge(e)?.endpoints;
        self.bisect(e, endpoints, false)
    }

    /// One outer iteration of the refinement loop.
    pub fn step(&mut self) -> Result<StepReport, SolveError> {
        self.step += 1;
        self.mesh.increment_ages();
        let mut bisected = self.sweep(3, false)?;
        let mut fallback = false;
        if bisected.is_empty() {
            bisected = self.sweep(2, true)?;
            fallback = !bisected.is_empty();
        }
        let ref_flag = !bisected.is_empty();
        if ref_flag {
            let value = self.mesh.age_count() + 1;
            self.mesh.set_age_count(value);
            self.record(TraceEvent::AgeCountChanged { step: self.step, value });
        }
        self.record_sperner_set();
        debug!(
            "step {}: {} bisections{}, age_count {}",
            self.step,
            bisected.len(),
            if fallback { " (fallback)" } else { "" },
            self.mesh.age_count()
        );
        Ok(StepReport {
            step: self.step,
            bisected,
            ref_flag,
            fallback,
            age_count: self.mesh.age_count(),
            evaluations: self.evaluations,
        })
    }

    fn stop_reason(&self) -> Option<StopReason> {
        let sperner = &self.sperner;
        if sperner.is_empty() {
            return Some(StopReason::NoSpernerCells);
        }
        if sperner.iter().all(|&c| self.mesh.cell_diameter(c) < self.config.target_diameter) {
            return Some(StopReason::TargetDiameter);
        }
        if !self.budget_left() {
            return Some(StopReason::MaxEvaluations);
        }
        if self.step >= self.config.max_steps {
            return Some(StopReason::MaxSteps);
        }
        None
    }

    /// Steps until a stop condition holds.
    pub fn run(mut self) -> Result<SolveResult, SolveError> {
        let reason = loop {
            if let Some(r) = self.stop_reason() {
                break r;
            }
            self.step()?;
        };
        let candidates = candidates(&self.mesh, self.problem.spurious_origin);
        if self.config.record_trace {
            for (rank, c) in candidates.iter().enumerate() {
                self.trace.push(TraceEvent::Candidate {
                    rank,
                    vertex: c.vertex,
                    point: c.point.coords().to_vec(),
                    barycenter: c.barycenter.coords().to_vec(),
                    residual: c.residual,
                    cell: c.cell,
                    diameter: c.diameter,
                    spurious: c.spurious.map(str::to_string),
                });
            }
            self.trace.push(TraceEvent::Finished {
                steps: self.step,
                evaluations: self.evaluations,
                reason: reason.to_string(),
            });
        }
        info!(
            "{}: stopped ({reason}) after {} steps and {} evaluations, {} candidates",
            self.problem.name,
            self.step,
            self.evaluations,
            candidates.len()
        );
        Ok(SolveResult {
            candidates,
            evaluations_used: self.evaluations,
            steps_used: self.step,
            stop_reason: reason,
            trace: self.trace,
            mesh: self.mesh,
        })
    }
}

pub fn solve(problem: Problem, config: SolverConfig) -> Result<SolveResult, SolveError> {
    Solver::new(problem, config)?.run()
}

/// Alive cells whose corner labels admit a distinct-label matching.
pub fn sperner_cells(mesh: &Mesh) -> Vec<CellId> {
    mesh.alive_cells()
        .filter(|&c| {
            let sets: Vec<LabelSet> = mesh
                .cell(c)
                .expect("alive cell")
                .vertex_ids
                .iter()
                .map(|&v| mesh.vertex(v).labels().unwrap_or_default())
                .collect();
            labeling::is_sperner(&sets)
        })
        .collect()
}

/// One candidate per alive Sperner cell, best residual first.
pub fn candidates(mesh: &Mesh, spurious_origin: bool) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = sperner_cells(mesh)
        .into_iter()
        .map(|c| {
            let (vertex, residual) = mesh
                .cell(c)
                .expect("alive cell")
                .vertex_ids
                .iter()
                .map(|&v| (v, mesh.vertex(v).eval().map_or(f64::INFINITY, VertexEval::residual)))
                .fold((VertexId(usize::MAX), f64::INFINITY), |best, cur| {
                    if cur.1 < best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                        cur
                    } else {
                        best
                    }
                });
            let point = mesh.vertex(vertex).position().clone();
            let near_origin = point.coords().iter().map(|x| x * x).sum::<f64>().sqrt() <= SPURIOUS_ORIGIN_RADIUS;
            Candidate {
                vertex,
                residual,
                barycenter: mesh.cell_barycenter(c),
                cell: c,
                diameter: mesh.cell_diameter(c),
                spurious: (spurious_origin && near_origin).then_some("origin"),
                point,
            }
        })
        .collect();
    out.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    out
}
