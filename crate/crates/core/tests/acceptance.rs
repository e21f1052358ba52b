//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use knaster::geometry::Barycentric;
use knaster::labeling::{compute_labels, support, LabelRule, LabelingStrategy};
use knaster::mesh::{CellId, EdgeId, Mesh};
use knaster::oracle;
use knaster::problems::{builtin, FnMap, Problem};
use knaster::solver::{self, Solver, SolverConfig};
use knaster::transform::{self, ZeroProblem};
use knaster::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn config(rule: LabelRule, max_steps: usize, max_evaluations: usize) -> SolverConfig {
    SolverConfig {
        max_steps,
        max_evaluations,
        target_diameter: 0.0,
        labeling: LabelingStrategy::from(rule),
        initial_refinement: 0,
        record_trace: false,
        seed: None,
    }
}

fn best_error(problem: &Problem, res: &knaster::SolveResult) -> f64 {
    let known = problem.known.as_ref().expect("known fixed points");
    res.candidates.iter().map(|c| known.distance(&c.point)).fold(f64::INFINITY, f64::min)
}

fn c1_sperner_parity() -> Result<String, String> {
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut single_valued_bad = 0;
    for d in 1..=3 {
        for name in ["half", "swap", "contraction", "contraction-eps"] {
            let Ok(problem) = builtin(name, d, None) else { continue };
            for rule in [LabelRule::NotCloser, LabelRule::MaxGain] {
                let strategy = LabelingStrategy::from(rule);
                let mut s = Solver::new(problem.clone(), config(rule, 12, 400)).map_err(|e| e.to_string())?;
                for step in 0..=12 {
                    if step > 0 {
                        s.step().map_err(|e| e.to_string())?;
                    }
                    checked += 1;
                    match oracle::sperner_parity(s.mesh(), strategy) {
                        Ok((_, true)) => {}
                        Ok((n, false)) => bad.push(format!("{name} d={d} {rule} step {step}: {n}")),
                        Err(e) => bad.push(format!("{name} d={d} {rule} step {step}: {e}")),
                    }
                    if let Ok((_, false)) = oracle::sperner_parity_single_valued(s.mesh(), strategy) {
                        single_valued_bad += 1;
                    }
                }
            }
        }
    }
    let summary = format!(
        "{checked} meshes, {} even counts; single-valued reduction even on {single_valued_bad}",
        bad.len()
    );
    if bad.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; first: {}", bad[..bad.len().min(3)].join(", ")))
    }
}

fn c2_edge_halving() -> Result<String, String> {
    for d in 2..=5 {
        for len in 1..=3 * d {
            if !oracle::edge_halving_check(d, len) {
                let p = oracle::edge_halving_profile(d, len).map_err(|e| e.to_string())?;
                return Err(format!("d={d} chain {len}: {p:?}"));
            }
        }
    }
    Ok("d = 2..5, chains up to 3d".into())
}

/// Diameters along the chain of cells containing `p`, root first, after
/// stepping the solver until the chain is `depth` splits deep.
fn tracked_chain(d: usize, p: &Point, depth: usize) -> Result<(Vec<f64>, bool), String> {
    let problem = builtin("half", d, None).map_err(|e| e.to_string())?;
    let mut s = Solver::new(problem, config(LabelRule::NotCloser, 10_000, 100_000)).map_err(|e| e.to_string())?;
    for _ in 0..400 {
        let cell = s.mesh().locate(p).ok_or("point not located")?;
        let mut chain = vec![cell];
        while let Some(parent) = s.mesh().cell(*chain.last().unwrap()).unwrap().parent {
            chain.push(parent);
        }
        if chain.len() > depth {
            chain.reverse();
            let diams = chain.iter().map(|&c| s.mesh().cell_diameter(c)).collect();
            return Ok((diams, s.is_sperner(cell)));
        }
        s.step().map_err(|e| e.to_string())?;
    }
    Err("chain did not reach the requested depth".into())
}

fn c3_nested_rate() -> Result<String, String> {
    let mut notes = Vec::new();
    let mut ok = true;
    for d in [2, 3] {
        let p = Point::new((1..=d).map(|i| i as f64 * 1e-7).collect()).unwrap();
        let (diams, sperner) = tracked_chain(d, &p, 4 * d)?;
        let mut pass = sperner;
        for k in 1..=4 {
            let want = diams[0] / 2f64.powi(k as i32);
            if diams[k * d] > want * (1.0 + 1e-12) {
                pass = false;
            }
        }
        let shown: Vec<String> = (0..=4).map(|k| format!("{:.4}", diams[k * d])).collect();
        notes.push(format!("d={d} every {d}: [{}]{}", shown.join(", "), if pass { "" } else { " too slow" }));
        ok &= pass;
    }
    if ok {
        Ok(notes.join("; "))
    } else {
        Err(notes.join("; "))
    }
}

fn c4_table1() -> Result<String, String> {
    let p = builtin("contraction", 2, None).unwrap();
    let res = solver::solve(p.clone(), config(LabelRule::NotCloser, 10_000, 60)).map_err(|e| e.to_string())?;
    let err = best_error(&p, &res);
    let msg = format!("error {err:.4} with {} evaluations", res.evaluations_used);
    if err <= 0.02 && res.evaluations_used <= 60 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_table2() -> Result<String, String> {
    let p = builtin("contraction-eps", 3, None).unwrap();
    let mg = solver::solve(p.clone(), config(LabelRule::MaxGain, 10_000, 40)).map_err(|e| e.to_string())?;
    let nc = solver::solve(p.clone(), config(LabelRule::NotCloser, 10_000, 80)).map_err(|e| e.to_string())?;
    let (e_mg, e_nc) = (best_error(&p, &mg), best_error(&p, &nc));
    let msg = format!("max-gain {e_mg:.4} at {} evals, not-closer {e_nc:.4} at {} evals", mg.evaluations_used, nc.evaluations_used);
    if e_mg <= 0.05 && e_nc > 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_table3() -> Result<String, String> {
    let p = builtin("contraction-eps", 4, None).unwrap();
    let res = solver::solve(p.clone(), config(LabelRule::MaxGain, 10_000, 120)).map_err(|e| e.to_string())?;
    let err = best_error(&p, &res);
    let msg = format!("error {err:.4} with {} evaluations", res.evaluations_used);
    if err <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c7_swap() -> Result<String, String> {
    let p = builtin("swap", 2, None).unwrap();
    let mut notes = Vec::new();
    for rule in [LabelRule::NotCloser, LabelRule::MaxGain] {
        let res = solver::solve(p.clone(), config(rule, 20, 3000)).map_err(|e| e.to_string())?;
        for c in &res.candidates {
            if (c.point[0] - c.point[1]).abs() > c.diameter {
                return Err(format!("{rule}: candidate {:?} off the diagonal by more than {}", c.point, c.diameter));
            }
        }
        if rule == LabelRule::MaxGain {
            for c in solver::sperner_cells(&res.mesh) {
                let gaps: Vec<f64> = res.mesh.cell_points(c).iter().map(|q| q[0] - q[1]).collect();
                let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo > 0.0 || hi < 0.0 {
                    return Err(format!("max-gain Sperner cell {c} misses the diagonal"));
                }
            }
        }
        notes.push(format!("{rule}: {} candidates", res.candidates.len()));
    }
    Ok(notes.join(", "))
}

fn c8_first_index() -> Result<String, String> {
    let p = builtin("swap", 2, None).unwrap();
    let strategy = LabelingStrategy::first_index();
    let mut s = Solver::new(p, config(LabelRule::FirstIndexReduced, 5, 10_000)).map_err(|e| e.to_string())?;
    for _ in 0..5 {
        s.step().map_err(|e| e.to_string())?;
    }
    let mesh = s.mesh();
    let sperner = s.sperner_cells();
    let interior = sperner
        .iter()
        .filter(|&&c| {
            mesh.cell(c).unwrap().vertex_ids.iter().all(|&v| {
                let lam = &mesh.vertex(v).eval().unwrap().lam_x;
                support(lam, strategy.tau).len() == 3
            })
        })
        .count();
    let msg = format!("{} Sperner cells after 5 steps, {interior} interior", sperner.len());
    if interior == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_transform() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut notes = Vec::new();
    for t in 0..5 {
        // G(x) = M (x - a) with M = [[0, s1], [-s2, 0]]: no fixed points of the
        // transform besides a and the origin
        let a = [rng.random_range(0.1..0.45), rng.random_range(0.1..0.45)];
        let (s1, s2) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let g = FnMap::new(2, move |x: &[f64]| vec![s1 * (x[1] - a[1]), -s2 * (x[0] - a[0])]);
        let mut zp = ZeroProblem::new(format!("rot{t}"), Arc::new(g));
        zp.c = transform::estimate_c(&zp, 10_000, t).map_err(|e| e.to_string())?;
        let problem = transform::to_fixed_point(zp).map_err(|e| e.to_string())?;
        let res = solver::solve(problem.clone(), config(LabelRule::NotCloser, 200, 2000)).map_err(|e| e.to_string())?;
        let zero = Point::new(a.to_vec()).unwrap();
        let near_zero = res.candidates.iter().any(|c| c.point.distance(&zero) <= 1e-3);
        let origin = res.candidates.iter().any(|c| c.spurious == Some("origin"));
        if !(near_zero || origin) {
            return Err(format!("G #{t}: no candidate near {a:?} or the origin"));
        }
        // mis-tagged candidates
        for c in &res.candidates {
            let r = c.point.coords().iter().map(|x| x * x).sum::<f64>().sqrt();
            if (c.spurious == Some("origin")) != (r <= 1e-6) {
                return Err(format!("G #{t}: wrong spurious tag at {:?}", c.point));
            }
        }
        let grid = oracle::grid_fixed_points(&problem, 128).map_err(|e| e.to_string())?;
        if grid.cells_to_nearest(&a) > 2.0 || grid.cells_to_nearest(&[0.0, 0.0]) > 2.0 {
            return Err(format!("G #{t}: grid minima miss the zero or the origin"));
        }
        for c in res.candidates.iter().filter(|c| c.residual < 1e-3) {
            if grid.cells_to_nearest(c.point.coords()) > 2.0 {
                return Err(format!("G #{t}: candidate {:?} far from grid minima", c.point));
            }
        }
        notes.push(if near_zero { "zero" } else { "origin" });
    }
    Ok(format!("best match per problem: {}", notes.join(", ")))
}

fn c10_boundary() -> Result<String, String> {
    let strategy = LabelingStrategy::max_gain();
    let labels = |x: [f64; 2]| {
        let fx = [x[0] / 4.0 + 0.25, x[1] / 4.0 + 0.25];
        compute_labels(&Barycentric::of_reference(&x), &Barycentric::of_reference(&fx), strategy).unwrap()
    };
    let mut on_line = 0;
    // dyadic x_1 < 1/3 so the line point is exact
    for k in 0..21 {
        let x1 = k as f64 / 64.0;
        let x2 = (1.0 - x1) / 2.0;
        let l = labels([x1, x2]);
        if !(l.contains(0) && l.contains(2)) {
            return Err(format!("({x1}, {x2}) on the line has labels {l}"));
        }
        on_line += 1;
        let below = labels([x1, x2 - 1e-3]);
        let above = labels([x1, x2 + 1e-3]);
        if !(below.contains(0) && !below.contains(2)) || !(above.contains(2) && !above.contains(0)) {
            return Err(format!("x_1 = {x1}: below {below}, above {above}"));
        }
    }
    // mesh vertices of a max-gain solve lying on the line
    let p = builtin("contraction", 2, None).unwrap();
    let res = solver::solve(p, config(LabelRule::MaxGain, 10_000, 400)).map_err(|e| e.to_string())?;
    let mut mesh_hits = 0;
    for v in res.mesh.vertices() {
        let x = v.position();
        // exactly on the line: a vertex merely near it is labelled by its side
        if x[0] < 1.0 / 3.0 && x[1] == (1.0 - x[0]) / 2.0 {
            let l = v.labels().unwrap();
            if !(l.contains(0) && l.contains(2)) {
                return Err(format!("mesh vertex {:?} on the line has labels {l}", x.coords()));
            }
            mesh_hits += 1;
        }
    }
    Ok(format!("{on_line} line samples, {mesh_hits} mesh vertices on the line"))
}

fn c11_conformity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for d in 2..=4 {
        let mut m = Mesh::init(d, 0).map_err(|e| e.to_string())?;
        let v0 = m.total_volume();
        for _ in 0..1000 {
            let alive: Vec<EdgeId> = m.alive_edges().collect();
            let e = alive[rng.random_range(0..alive.len())];
            m.bisect_edge(e).map_err(|e| e.to_string())?;
        }
        m.check_conformity().map_err(|e| format!("d={d}: {e}"))?;
        let drift = (m.total_volume() - v0).abs() / v0;
        if drift > 1e-9 {
            return Err(format!("d={d}: volume drift {drift:e}"));
        }
        if m.alive_cells().any(|c: CellId| m.cell_volume(c) <= 0.0) {
            return Err(format!("d={d}: degenerate cell"));
        }
    }
    Ok("d = 2..4, 1000 bisections each".into())
}

fn c12_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("run{i}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_knaster"))
            .args(["solve", "--problem", "contraction", "--d", "3", "--seed", "7", "--trace-out"])
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if files[0] == files[1] {
        Ok(format!("{} identical bytes", files[0].len()))
    } else {
        Err("traces differ".into())
    }
}

fn main() {
    let checks: [(&str, &str, Duration, Check); 12] = [
        ("C1", "Sperner parity", Duration::from_secs(10), c1_sperner_parity),
        ("C2", "edge halving", Duration::from_secs(1), c2_edge_halving),
        ("C3", "nested convergence rate", Duration::from_secs(1), c3_nested_rate),
        ("C4", "contraction d=2 scale", Duration::from_secs(1), c4_table1),
        ("C5", "perturbed d=3 scale", Duration::from_secs(2), c5_table2),
        ("C6", "perturbed d=4 scale", Duration::from_secs(5), c6_table3),
        ("C7", "swap problem", Duration::from_secs(1), c7_swap),
        ("C8", "first-index negative test", Duration::from_secs(1), c8_first_index),
        ("C9", "zero-search transform", Duration::from_secs(10), c9_transform),
        ("C10", "max-gain boundary line", Duration::from_secs(1), c10_boundary),
        ("C11", "conformity and volume", Duration::from_secs(5), c11_conformity),
        ("C12", "determinism", Duration::from_secs(60), c12_determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in checks {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; took {took:.2?}, budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!("{id:<4} {:<4} {name}: {detail} [{took:.2?}]", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
