//! Invariant checks shared by the invariant tests and the acceptance report.
//! Each returns a short summary on success and a diagnosis on failure.

#![allow(dead_code)]

use hdg_core::condensed::{solve_step, StepParams, TraceStructure};
use hdg_core::diagnostics::assemble_monolithic;
use hdg_core::local::{build_local_convection, Discretization};
use hdg_core::mesh::{build_uniform_mesh, Point};
use hdg_core::projection::{project_element_scalar, project_face, project_single_face};
use hdg_core::quadrature::{make_quadrature, MAX_QUADRATURE_DEGREE};
use hdg_core::space::{HdgSpace, TraceMode};
use hdg_core::timestep::{initial_state, make_dirk23_table, Integrator, TimeGrid, TimeOptions};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub type Check = Result<String, String>;

pub fn disc(dim: usize, m: usize, k: usize, mode: TraceMode) -> Discretization<f64> {
    Discretization::new(HdgSpace::new(build_uniform_mesh::<f64>(dim, m).unwrap(), k, mode).unwrap())
}

pub fn random_vec(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `B_h(v; u, uhat; w, mu)` summed over elements, with the sum of absolute
/// term values as a scale.
pub fn trilinear(d: &Discretization<f64>, v: &[f64], u: (&[f64], &[f64]), w: (&[f64], &[f64])) -> (f64, f64) {
    let s = &d.space;
    let (mut total, mut scale) = (0.0, 0.0);
    for e in 0..s.mesh.num_elements() {
        let c = build_local_convection(s, e, &v[s.u_range(e)]);
        let (ue, we) = (&u.0[s.u_range(e)], &w.0[s.u_range(e)]);
        let (ul, wl) = (s.gather_trace(e, u.1), s.gather_trace(e, w.1));
        let terms = [
            dot(we, &c.uu.matvec(ue)),
            dot(we, &c.ul.matvec(&ul)),
            dot(&wl, &c.lu.matvec(ue)),
        ];
        total += terms.iter().sum::<f64>();
        scale += terms.iter().map(|t| t.abs()).sum::<f64>();
    }
    (total, scale.max(1.0))
}

pub fn check_antisymmetry() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for dim in [2, 3] {
        for mode in [TraceMode::Equal, TraceMode::Minus] {
            let d = disc(dim, 2, 2, mode);
            let (nu, nt) = (d.space.num_u_dofs(), d.space.num_trace_dofs());
            for _ in 0..100 {
                let v = random_vec(&mut rng, nu);
                let (w, mu) = (random_vec(&mut rng, nu), random_vec(&mut rng, nt));
                let (b, scale) = trilinear(&d, &v, (&w, &mu), (&w, &mu));
                worst = worst.max(b.abs() / scale);
                let (u, uh) = (random_vec(&mut rng, nu), random_vec(&mut rng, nt));
                let (b1, s1) = trilinear(&d, &v, (&u, &uh), (&w, &mu));
                let (b2, s2) = trilinear(&d, &v, (&w, &mu), (&u, &uh));
                worst = worst.max((b1 + b2).abs() / s1.max(s2));
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |B| / scale = {worst:.1e}"))
    } else {
        Err(format!("antisymmetry defect {worst:e}"))
    }
}

pub fn check_condensation_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(11);
    let mut cases = Vec::new();
    for m in [1, 2] {
        for k in [1, 2] {
            for mode in [TraceMode::Equal, TraceMode::Minus] {
                cases.push((2, m, k, mode));
            }
        }
    }
    // The 3D M=1 cube has 6 tetrahedra; M=2 exceeds the dense oracle guard.
    for k in [1, 2] {
        for mode in [TraceMode::Equal, TraceMode::Minus] {
            cases.push((3, 1, k, mode));
        }
    }
    let mut worst = 0.0f64;
    for (dim, m, k, mode) in cases {
        let d = disc(dim, m, k, mode);
        let s = TraceStructure::new(&d);
        let rhs = random_vec(&mut rng, d.space.num_u_dofs());
        let v = random_vec(&mut rng, d.space.num_u_dofs());
        for transport in [None, Some(v.as_slice())] {
            let p = StepParams { nu: 0.3, alpha: 4.0, transport, rhs: &rhs, boundary_trace: None };
            let a = solve_step(&d, &s, &p, 0.0).map_err(|e| e.to_string())?;
            let b = assemble_monolithic(&d, &p).and_then(|sys| sys.solve(0.0)).map_err(|e| e.to_string())?;
            let xa: Vec<f64> = a.q.iter().chain(&a.u).chain(&a.trace).copied().collect();
            let xb: Vec<f64> = b.q.iter().chain(&b.u).chain(&b.trace).copied().collect();
            let scale = xb.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let diff = xa.iter().zip(&xb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale;
            if diff > 1e-10 {
                return Err(format!("dim {dim} M={m} k={k} {mode:?}: difference {diff:e}"));
            }
            worst = worst.max(diff);
        }
    }
    Ok(format!("max relative difference {worst:.1e}"))
}

pub fn check_lifting_residual() -> Check {
    let d = disc(2, 4, 2, TraceMode::Equal);
    let s = TraceStructure::new(&d);
    let f = |x: &Point<f64>, t: f64| (1.0 + t) * (x[0] * 3.0).sin() * x[1];
    let u0 = |x: &Point<f64>| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * 16.0;
    let options = TimeOptions { monitor: true, ..TimeOptions::default() };
    let it = Integrator { disc: &d, structure: &s, nu: 0.05, forcing: &f, options };
    let grid = TimeGrid::new(0.5, 10).unwrap();
    let mut worst = 0.0f64;
    for dirk in [false, true] {
        let init = initial_state(&d, &u0);
        let traj = if dirk { it.run_dirk23(init, &grid) } else { it.run_backward_euler(init, &grid) };
        let traj = traj.map_err(|e| e.to_string())?;
        if traj.records.len() != 10 {
            return Err(format!("expected 10 steps, got {}", traj.records.len()));
        }
        for r in &traj.records {
            let res = r.lifting_residual.ok_or("residual not recorded")?;
            if !(res <= 1e-9) {
                return Err(format!("step {}: residual {res:e}", r.step));
            }
            worst = worst.max(res);
        }
    }
    Ok(format!("max residual {worst:.1e} over 2 x 10 steps"))
}

pub fn check_energy_decay() -> Check {
    let mut steps = 0;
    for dim in [2, 3] {
        let m = if dim == 2 { 4 } else { 2 };
        let d = disc(dim, m, 1, TraceMode::Equal);
        let s = TraceStructure::new(&d);
        let f = |_: &Point<f64>, _: f64| 0.0;
        let u0 = |x: &Point<f64>| (0..dim).map(|c| (std::f64::consts::PI * x[c]).sin()).product::<f64>() * 2.0;
        let it = Integrator { disc: &d, structure: &s, nu: 0.1, forcing: &f, options: TimeOptions::default() };
        let traj = it
            .run_backward_euler(initial_state(&d, &u0), &TimeGrid::new(1.0, 50).unwrap())
            .map_err(|e| e.to_string())?;
        let mut prev = traj.initial_norm;
        for r in &traj.records {
            if !(r.norm_u <= prev) {
                return Err(format!("dim {dim} step {}: {} > {prev}", r.step, r.norm_u));
            }
            prev = r.norm_u;
            steps += 1;
        }
    }
    Ok(format!("{steps} steps nonincreasing"))
}

pub fn check_butcher() -> Check {
    let got = make_dirk23_table::<f64>().order_conditions();
    let want = [1.0, 0.5, 1.0 / 3.0, 1.0 / 6.0];
    let diff = got.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if diff <= 1e-14 {
        Ok(format!("max deviation {diff:.1e}"))
    } else {
        Err(format!("order conditions {got:?}"))
    }
}

/// Value of the discrete scalar `u` at reference point `xi` of element `e`.
fn eval_u(space: &HdgSpace<f64>, u: &[f64], e: usize, xi: &[f64; 3]) -> f64 {
    dot(&space.u_basis.eval(xi), &u[space.u_range(e)])
}

pub fn check_projection() -> Check {
    let mut worst = 0.0f64;
    for (dim, m) in [(2, 2), (3, 1)] {
        for k in 1..=3 {
            for mode in [TraceMode::Equal, TraceMode::Minus] {
                let space = HdgSpace::new(build_uniform_mesh::<f64>(dim, m).unwrap(), k, mode).unwrap();
                // Reproduction of a degree-k polynomial.
                let p = |x: &Point<f64>| (1.0 + x[0] - 2.0 * x[1] + 0.5 * x[2]).powi(k as i32);
                let u = project_element_scalar(&space, &p);
                let rule = make_quadrature::<f64>(dim, 3).unwrap();
                for e in 0..space.mesh.num_elements() {
                    let map = &space.mesh.geometry[e].map;
                    for xi in &rule.points {
                        worst = worst.max((eval_u(&space, &u, e, xi) - p(&map.apply(xi))).abs());
                    }
                }
                // Idempotence of the element projection of a smooth function.
                let g = |x: &Point<f64>| (2.0 * x[0]).exp() * x[1].cos() + x[2];
                let c1 = project_element_scalar(&space, &g);
                let tab = &space.load_tables;
                for e in 0..space.mesh.num_elements() {
                    for i in 0..space.nu() {
                        let re: f64 = tab
                            .rule
                            .weights
                            .iter()
                            .enumerate()
                            .map(|(q, &w)| w * dot(&c1[space.u_range(e)], tab.u.values.row(q)) * tab.u.values[(q, i)])
                            .sum();
                        worst = worst.max((re - c1[space.u_range(e)][i]).abs());
                    }
                }
                // Face projection of a function already in the trace space.
                let t1 = project_face(&space, &|x: &Point<f64>| 0.25 + 0.0 * x[0]);
                for (slot, &face) in space.mesh.interior_faces.iter().enumerate() {
                    let c = project_single_face(&space, face, &|_| 0.25);
                    for (a, b) in c.iter().zip(&t1[slot * space.nl()..(slot + 1) * space.nl()]) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("projection defect {worst:e}"))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn check_quadrature() -> Check {
    let mut worst = 0.0f64;
    let mut count = 0;
    for dim in 1..=3usize {
        for deg in 0..=MAX_QUADRATURE_DEGREE {
            let rule = make_quadrature::<f64>(dim, deg).unwrap();
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    for c in 0..=(deg - a - b) {
                        let e = [a, b, c];
                        if e[dim..].iter().any(|&v| v > 0) || a + b + c != deg {
                            continue;
                        }
                        let exact = e[..dim].iter().map(|&v| factorial(v)).product::<f64>() / factorial(deg + dim);
                        let got = rule.integrate(|p| (0..dim).map(|i| p[i].powi(e[i] as i32)).product());
                        worst = worst.max((got - exact).abs() / exact.max(1e-3));
                        count += 1;
                    }
                }
            }
        }
    }
    if worst <= 1e-13 {
        Ok(format!("{count} monomials, max relative deviation {worst:.1e}"))
    } else {
        Err(format!("quadrature defect {worst:e}"))
    }
}
