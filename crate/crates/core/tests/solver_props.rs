use std::sync::Arc;

use knaster::labeling::{LabelRule, LabelingStrategy};
use knaster::oracle;
use knaster::problems::{builtin, FnMap, BUILTIN_NAMES};
use knaster::solver::{self, Solver, SolverConfig, StopReason};
use knaster::transform::{self, ZeroProblem};
use knaster::Point;

fn config(rule: LabelRule, steps: usize) -> SolverConfig {
    SolverConfig {
        max_steps: steps,
        labeling: LabelingStrategy::from(rule),
        ..SolverConfig::default()
    }
}

#[test]
fn traces_are_deterministic() {
    let run = || {
        let res = solver::solve(builtin("contraction-eps", 3, None).unwrap(), config(LabelRule::MaxGain, 30)).unwrap();
        let mut buf = Vec::new();
        res.trace.write_jsonl(&mut buf).unwrap();
        buf
    };
    assert_eq!(run(), run());
}

#[test]
fn single_valued_labels_give_odd_sperner_counts() {
    for d in 1..=3 {
        for name in BUILTIN_NAMES {
            let Ok(p) = builtin(name, d, None) else { continue };
            for rule in [LabelRule::NotCloser, LabelRule::MaxGain] {
                let strategy = LabelingStrategy::from(rule);
                let mut s = Solver::new(p.clone(), config(rule, 10)).unwrap();
                for _ in 0..10 {
                    s.step().unwrap();
                    let (n, odd) = oracle::sperner_parity_single_valued(s.mesh(), strategy).unwrap();
                    assert!(odd, "{name} d={d} {rule}: {n}");
                }
            }
        }
    }
}

#[test]
fn face_condition_holds_during_solves() {
    for (name, d) in [("half", 3), ("contraction", 2), ("swap", 2), ("contraction-eps", 3)] {
        for rule in [LabelRule::NotCloser, LabelRule::MaxGain, LabelRule::FirstIndexReduced] {
            let res = solver::solve(builtin(name, d, None).unwrap(), config(rule, 12)).unwrap();
            assert!(knaster::labeling::face_cover_check(&res.mesh, LabelingStrategy::from(rule)), "{name} {rule}");
        }
    }
}

#[test]
fn candidates_agree_with_grid_oracle() {
    for (name, d) in [("half", 2), ("swap", 2), ("contraction", 2), ("contraction-eps", 2), ("contraction", 3)] {
        let p = builtin(name, d, None).unwrap();
        let res = if d == 3 { 64 } else { 128 };
        let grid = oracle::grid_fixed_points(&p, res).unwrap();
        for rule in [LabelRule::NotCloser, LabelRule::MaxGain] {
            let sol = solver::solve(p.clone(), SolverConfig { max_evaluations: 400, ..config(rule, 200) }).unwrap();
            for c in sol.candidates.iter().filter(|c| c.residual < 1e-3) {
                assert!(grid.cells_to_nearest(c.point.coords()) <= 2.0, "{name} {rule}: {:?}", c.point);
            }
        }
    }
}

#[test]
fn half_map_chain_halves_every_two_splits() {
    let p = Point::new(vec![1e-7, 2e-7]).unwrap();
    let mut s = Solver::new(builtin("half", 2, None).unwrap(), config(LabelRule::NotCloser, 100)).unwrap();
    let mut chain = Vec::new();
    for _ in 0..100 {
        s.step().unwrap();
        let mut c = s.mesh().locate(&p).unwrap();
        chain = vec![c];
        while let Some(parent) = s.mesh().cell(c).unwrap().parent {
            chain.push(parent);
            c = parent;
        }
        if chain.len() > 12 {
            break;
        }
    }
    chain.reverse();
    let diam: Vec<f64> = chain.iter().map(|&c| s.mesh().cell_diameter(c)).collect();
    for k in 1..=6 {
        assert!((diam[2 * k] - diam[0] / 2f64.powi(k as i32)).abs() < 1e-12, "{diam:?}");
    }
}

#[test]
fn half_map_refines_toward_origin() {
    let res = solver::solve(builtin("half", 3, None).unwrap(), config(LabelRule::NotCloser, 40)).unwrap();
    let best = res.best().unwrap();
    assert_eq!(best.point.coords(), &[0.0, 0.0, 0.0]);
    assert!(best.diameter < 0.1);
}

#[test]
fn contraction_3d_candidate_after_nine_steps() {
    let res = solver::solve(builtin("contraction", 3, None).unwrap(), config(LabelRule::NotCloser, 9)).unwrap();
    let target = Point::new(vec![0.2, 0.2, 0.2]).unwrap();
    let err = res.candidates.iter().map(|c| c.point.distance(&target)).fold(f64::INFINITY, f64::min);
    assert!(err <= 0.08, "{err}");
}

#[test]
fn swap_labels_always_contain_zero() {
    let res = solver::solve(builtin("swap", 2, None).unwrap(), config(LabelRule::NotCloser, 15)).unwrap();
    assert!(res.mesh.vertices().iter().all(|v| v.labels().unwrap().contains(0)));
}

#[test]
fn initial_refinement_is_respected() {
    let c = SolverConfig { initial_refinement: 2, ..config(LabelRule::NotCloser, 3) };
    let res = solver::solve(builtin("contraction", 2, None).unwrap(), c).unwrap();
    assert!(res.mesh.num_vertices() >= 6);
    assert_eq!(res.stop_reason, StopReason::MaxSteps);
    let m = res.trace.replay(0).unwrap();
    assert_eq!(m.num_vertices(), 6);
}

/// `G(x) = M (x - a)` with `M = [[0, 1], [-1, 0]]`.
fn rotation_zero_problem(a: [f64; 2]) -> ZeroProblem {
    let g = FnMap::new(2, move |x: &[f64]| vec![x[1] - a[1], -(x[0] - a[0])]);
    let mut zp = ZeroProblem::new("rot", Arc::new(g));
    zp.c = transform::estimate_c(&zp, 2000, 1).unwrap();
    zp
}

#[test]
fn transformed_fixed_points_are_zero_and_origin() {
    let a = [0.25, 0.375];
    let p = transform::to_fixed_point(rotation_zero_problem(a)).unwrap();
    let n = 64;
    for i in 0..=n {
        for j in 0..=n - i {
            let x = [i as f64 / n as f64, j as f64 / n as f64];
            let fx = p.eval(&Point::new(x.to_vec()).unwrap()).image;
            let r = (x[0] - fx[0]).abs().max((x[1] - fx[1]).abs());
            let special = x == a || x == [0.0, 0.0];
            if special {
                assert!(r < 1e-10);
            } else {
                assert!(r > 1e-6, "{x:?} residual {r}");
            }
        }
    }
}

#[test]
fn transformed_axis_points_can_be_fixed() {
    // with G = x - a, (a_1, 0) has x_2 = 0 and G_1 = 0, so it is fixed too
    let a = [0.25, 0.375];
    let g = FnMap::new(2, move |x: &[f64]| vec![x[0] - a[0], x[1] - a[1]]);
    let mut zp = ZeroProblem::new("shift", Arc::new(g));
    zp.c = vec![1.0, 1.0];
    let p = transform::to_fixed_point(zp).unwrap();
    let x = Point::new(vec![0.25, 0.0]).unwrap();
    assert_eq!(p.eval(&x).image, x.coords());
}

#[test]
fn transformed_solve_tags_the_origin() {
    let p = transform::to_fixed_point(rotation_zero_problem([0.3, 0.2])).unwrap();
    let res = solver::solve(p, config(LabelRule::NotCloser, 60)).unwrap();
    let best = res.best().unwrap();
    assert_eq!(best.spurious, Some("origin"));
    assert_eq!(best.residual, 0.0);
}

#[test]
fn rescaling_a_live_mesh() {
    let mut zp = rotation_zero_problem([0.3, 0.2]);
    let p = transform::to_fixed_point(zp.clone()).unwrap();
    let res = solver::solve(p, config(LabelRule::MaxGain, 20)).unwrap();
    let mut mesh = res.mesh;
    let c = zp.c.clone();
    let strategy = LabelingStrategy::max_gain();
    assert_eq!(transform::rescale_and_relabel(&mut mesh, &mut zp, &c, strategy).unwrap(), 0);
    let evals = mesh.vertices().iter().filter(|v| v.eval().is_some()).count();
    let changed = transform::rescale_and_relabel(&mut mesh, &mut zp, &[c[0], 10.0 * c[1]], strategy).unwrap();
    assert!(changed <= evals);
}
