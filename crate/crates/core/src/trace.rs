//! Solver event log, serialized as JSON lines.
//!
//! Every line is one object `{"v": 1, "event": "...", ...}`. The log holds
//! every evaluated vertex and every bisection in order, so the mesh of any
//! step can be rebuilt without evaluating the map again.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Barycentric, Point};
use crate::labeling::{LabelRule, LabelSet};
use crate::mesh::{CellId, EdgeId, Mesh, MeshError, VertexEval, VertexId};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: unsupported trace version {version}")]
    Version { line: usize, version: u32 },
    #[error("trace has no run header")]
    MissingHeader,
    #[error("step {requested} not in trace (available: 0..={last})")]
    MissingStep { requested: usize, last: usize },
    #[error("trace is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Run {
        problem: String,
        dimension: usize,
        labeling: LabelRule,
        tau: f64,
        initial_refinement: usize,
        max_steps: usize,
        max_evaluations: usize,
        target_diameter: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    VertexEvaluated {
        step: usize,
        vertex: VertexId,
        position: Vec<f64>,
        image: Vec<f64>,
        labels: LabelSet,
        residual: f64,
    },
    EdgeBisected {
        step: usize,
        edge: EdgeId,
        endpoints: (VertexId, VertexId),
        vertex: VertexId,
        fallback: bool,
    },
    SpernerSet {
        step: usize,
        cells: Vec<CellId>,
    },
    AgeCountChanged {
        step: usize,
        value: u64,
    },
    Candidate {
        rank: usize,
        vertex: VertexId,
        point: Vec<f64>,
        barycenter: Vec<f64>,
        residual: f64,
        cell: CellId,
        diameter: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        spurious: Option<String>,
    },
    Finished {
        steps: usize,
        evaluations: usize,
        reason: String,
    },
}

#[derive(Serialize, Deserialize)]
struct Line {
    v: u32,
    #[serde(flatten)]
    event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub events: Vec<TraceEvent>,
}

impl SolveTrace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        for event in &self.events {
            let line = Line { v: TRACE_VERSION, event: event.clone() };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<SolveTrace, TraceError> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line =
                serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
            if parsed.v != TRACE_VERSION {
                return Err(TraceError::Version { line: i + 1, version: parsed.v });
            }
            events.push(parsed.event);
        }
        Ok(SolveTrace { events })
    }

    /// Steps recorded by a `sperner_set` event, in order.
    pub fn steps(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::SpernerSet { step, .. } => Some(*step),
                _ => None,
            })
            .collect()
    }

    pub fn candidates(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| matches!(e, TraceEvent::Candidate { .. }))
    }

    /// Rebuilds the mesh as it was at the end of `step` (step 0 is the
    /// labelled initial triangulation).
    pub fn replay(&self, step: usize) -> Result<Mesh, TraceError> {
        let (dim, initial_refinement) = self
            .events
            .iter()
            .find_map(|e| match e {
                TraceEvent::Run { dimension, initial_refinement, .. } => Some((*dimension, *initial_refinement)),
                _ => None,
            })
            .ok_or(TraceError::MissingHeader)?;
        let steps = self.steps();
        let last = steps.last().copied().unwrap_or(0);
        if !steps.contains(&step) {
            return Err(TraceError::MissingStep { requested: step, last });
        }
        let mut mesh = Mesh::init(dim, initial_refinement)?;
        let mut current = 0;
        for event in &self.events {
            match event {
                TraceEvent::VertexEvaluated { step: s, vertex, position, image, labels, .. } if *s <= step => {
                    if vertex.0 >= mesh.num_vertices() || mesh.vertex(*vertex).position().coords() != &position[..] {
                        return Err(TraceError::Inconsistent(format!("{vertex} does not match the rebuilt mesh")));
                    }
                    let img = Point::new(image.clone())
                        .map_err(|e| TraceError::Inconsistent(format!("{vertex}: {e}")))?;
                    mesh.set_eval(
                        *vertex,
                        VertexEval {
                            lam_x: Barycentric::of_reference(position),
                            lam_fx: Barycentric::of_reference(image),
                            image: img,
                            labels: *labels,
                            raw: None,
                        },
                    );
                }
                TraceEvent::EdgeBisected { step: s, edge, vertex, .. } if *s <= step => {
                    while current < *s {
                        mesh.increment_ages();
                        current += 1;
                    }
                    let b = mesh.bisect_edge(*edge)?;
                    if b.vertex != *vertex {
                        return Err(TraceError::Inconsistent(format!("{edge} produced {} not {vertex}", b.vertex)));
                    }
                }
                TraceEvent::AgeCountChanged { step: s, value } if *s <= step => mesh.set_age_count(*value),
                _ => {}
            }
        }
        while current < step {
            mesh.increment_ages();
            current += 1;
        }
        Ok(mesh)
    }
}
