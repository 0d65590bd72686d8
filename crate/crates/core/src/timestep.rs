//! Fully discrete schemes: linearized backward Euler and two-stage DIRK
//! with Oseen (frozen transport) iteration.

use rayon::prelude::*;

use crate::condensed::{solve_step, StepParams, TraceStructure};
use crate::error::{HdgError, Result};
use crate::local::{apply_k_h, element_load, Discretization};
use crate::mesh::Point;
use crate::projection::{
    dot, project_element_scalar, project_face, scalar_l2_norm, triple_norm, FieldState, ScalarField,
};
use crate::Scalar;

/// Forcing `f(x, t)`.
pub type Forcing<'a, T> = &'a (dyn Fn(&Point<T>, T) -> T + Sync);

/// Uniform grid of `steps` intervals on `[0, final_time]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T> {
    pub final_time: T,
    pub steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(final_time: T, steps: usize) -> Result<Self> {
        if steps == 0 || !(final_time > T::zero()) {
            return Err(HdgError::InvalidArgument(format!(
                "time grid needs N >= 1 and T > 0 (got N = {steps})"
            )));
        }
        Ok(Self { final_time, steps })
    }

    /// Grid with the step closest to `dt` that divides `final_time` evenly.
    pub fn from_step(final_time: T, dt: T) -> Result<Self> {
        let n = (final_time / dt).round().to_f64_lossy();
        if !(n >= 1.0) || !n.is_finite() {
            return Err(HdgError::InvalidArgument(format!("time step {dt} does not fit in [0, {final_time}]")));
        }
        Self::new(final_time, n as usize)
    }

    pub fn dt(&self) -> T {
        self.final_time / T::of(self.steps)
    }

    /// `t_n`; exactly `final_time` at `n = steps`.
    pub fn time(&self, n: usize) -> T {
        if n == self.steps {
            self.final_time
        } else {
            self.final_time * T::of(n) / T::of(self.steps)
        }
    }
}

/// Two-stage diagonally implicit Runge-Kutta coefficients (`a12 = 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ButcherTable<T> {
    pub a11: T,
    pub a21: T,
    pub a22: T,
    pub b1: T,
    pub b2: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Scalar> ButcherTable<T> {
    /// `(sum b, sum b c, sum b c^2, sum b A c)`; third order needs `(1, 1/2, 1/3, 1/6)`.
    pub fn order_conditions(&self) -> [T; 4] {
        [
            self.b1 + self.b2,
            self.b1 * self.c1 + self.b2 * self.c2,
            self.b1 * self.c1 * self.c1 + self.b2 * self.c2 * self.c2,
            self.b2 * (self.a21 * self.c1 + self.a22 * self.c2) + self.b1 * self.a11 * self.c1,
        ]
    }

    /// Stability function `R(z) = 1 + z b^T (I - zA)^{-1} 1`.
    pub fn stability_function(&self, z: T) -> T {
        let one = T::one();
        let s1 = one / (one - z * self.a11);
        let s2 = (one + z * self.a21 * s1) / (one - z * self.a22);
        one + z * (self.b1 * s1 + self.b2 * s2)
    }
}

/// Alexander's two-stage third-order SDIRK with `gamma = (3 + sqrt 3) / 6`.
pub fn make_dirk23_table<T: Scalar>() -> ButcherTable<T> {
    let gamma = (T::lit(3.0) + T::lit(3.0).sqrt()) / T::lit(6.0);
    let half = T::lit(0.5);
    ButcherTable {
        a11: gamma,
        a21: T::one() - T::lit(2.0) * gamma,
        a22: gamma,
        b1: half,
        b2: half,
        c1: gamma,
        c2: T::one() - gamma,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeOptions<T> {
    pub oseen_tol: T,
    pub oseen_max: usize,
    /// `false` drops the convection form (linear diagnostic mode).
    pub convection: bool,
    /// Record triple norms, forcing norms and lifting residuals per step.
    pub monitor: bool,
    /// Keep every state instead of only the final one.
    pub keep_states: bool,
}

impl<T: Scalar> Default for TimeOptions<T> {
    fn default() -> Self {
        Self {
            oseen_tol: T::lit(1e-10),
            oseen_max: 50,
            convection: true,
            monitor: false,
            keep_states: false,
        }
    }
}

/// Per-step monitor data.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    pub t: T,
    pub norm_u: T,
    /// `||u^n - u^{n-1}||`.
    pub increment: T,
    /// Oseen iterations per stage (one entry for backward Euler).
    pub oseen_iterations: Vec<usize>,
    /// Final relative change of each stage iteration.
    pub oseen_change: Vec<T>,
    /// `|||(u^n, trace^n)|||^2` when monitoring.
    pub triple_norm_sq: Option<T>,
    /// `||f(t_n)||^2` when monitoring.
    pub forcing_norm_sq: Option<T>,
    /// `||q + K_h(u, trace)|| / max(1, ||q||)` when monitoring.
    pub lifting_residual: Option<T>,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub initial_norm: T,
    pub dt: T,
    pub records: Vec<StepRecord<T>>,
    /// All states including the initial one, if requested.
    pub states: Vec<FieldState<T>>,
    pub final_state: FieldState<T>,
    pub warnings: Vec<String>,
}

/// `u_h^0 = Pi_k u_0`, trace `Pi_l u_0` and `q_h^0 = -K_h(u_h^0, trace^0)`.
pub fn initial_state<T: Scalar>(disc: &Discretization<T>, u0: ScalarField<'_, T>) -> FieldState<T> {
    let u = project_element_scalar(&disc.space, u0);
    let trace = project_face(&disc.space, u0);
    let q = apply_k_h(disc, &u, &trace).into_iter().map(|v| -v).collect();
    FieldState { t: T::zero(), u, q, trace }
}

fn load_vector<T: Scalar>(disc: &Discretization<T>, f: Forcing<'_, T>, t: T) -> Vec<T> {
    let parts: Vec<Vec<T>> = (0..disc.space.mesh.num_elements())
        .into_par_iter()
        .map(|e| element_load(&disc.space, e, f, t))
        .collect();
    parts.concat()
}

/// `rhs += s * M4 u` element by element.
fn add_mass<T: Scalar>(disc: &Discretization<T>, u: &[T], s: T, rhs: &mut [T]) {
    let space = &disc.space;
    for e in 0..space.mesh.num_elements() {
        let r = space.u_range(e);
        let mu = disc.blocks[e].mass_u.matvec(&u[r.clone()]);
        for (o, v) in rhs[r].iter_mut().zip(mu) {
            *o += s * v;
        }
    }
}

fn forcing_norm_sq<T: Scalar>(disc: &Discretization<T>, f: Forcing<'_, T>, t: T) -> T {
    let space = &disc.space;
    let tab = &space.load_tables;
    let parts: Vec<T> = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let map = &space.mesh.geometry[e].map;
            tab.rule
                .points
                .iter()
                .zip(&tab.rule.weights)
                .map(|(p, &w)| {
                    let v = f(&map.apply(p), t);
                    w * map.det * v * v
                })
                .sum()
        })
        .collect();
    parts.iter().fold(T::zero(), |a, &b| a + b)
}

fn lifting_residual<T: Scalar>(disc: &Discretization<T>, state: &FieldState<T>) -> T {
    let k = apply_k_h(disc, &state.u, &state.trace);
    let r: Vec<T> = state.q.iter().zip(&k).map(|(&a, &b)| a + b).collect();
    let nr = dot(&r, &r).sqrt();
    let nq = dot(&state.q, &state.q).sqrt();
    nr / nq.max(T::one())
}

fn diff_norm<T: Scalar>(disc: &Discretization<T>, a: &[T], b: &[T]) -> T {
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    scalar_l2_norm(disc, &d)
}

/// Context shared by both schemes.
pub struct Integrator<'a, T> {
    pub disc: &'a Discretization<T>,
    pub structure: &'a TraceStructure,
    pub nu: T,
    pub forcing: Forcing<'a, T>,
    pub options: TimeOptions<T>,
}

struct StageOutcome<T> {
    state: FieldState<T>,
    iterations: usize,
    change: T,
}

impl<'a, T: Scalar> Integrator<'a, T> {
    /// Oseen iteration for `alpha u + A(u; u) = rhs`, starting from `start`.
    fn stage(&self, alpha: T, rhs: &[T], start: &[T], t: T, warnings: &mut Vec<String>, step: usize) -> Result<StageOutcome<T>> {
        let wrap = |e: HdgError| HdgError::Step { step, source: Box::new(e) };
        if !self.options.convection {
            let p = StepParams { nu: self.nu, alpha, transport: None, rhs, boundary_trace: None };
            let state = solve_step(self.disc, self.structure, &p, t).map_err(wrap)?;
            return Ok(StageOutcome { state, iterations: 1, change: T::zero() });
        }
        let mut prev = start.to_vec();
        let mut change = T::infinity();
        for it in 1..=self.options.oseen_max.max(1) {
            let p = StepParams { nu: self.nu, alpha, transport: Some(&prev), rhs, boundary_trace: None };
            let state = solve_step(self.disc, self.structure, &p, t).map_err(wrap)?;
            let dn = diff_norm(self.disc, &state.u, &prev);
            let un = scalar_l2_norm(self.disc, &state.u);
            change = if un > T::zero() { dn / un } else { dn };
            if !change.is_finite() {
                return Err(wrap(HdgError::InvalidArgument("non-finite Oseen iterate".into())));
            }
            if change <= self.options.oseen_tol || it == self.options.oseen_max.max(1) {
                if change > self.options.oseen_tol {
                    warnings.push(format!(
                        "step {step}: Oseen iteration stopped after {it} iterations with relative change {change:e}"
                    ));
                }
                return Ok(StageOutcome { state, iterations: it, change });
            }
            prev = state.u;
        }
        unreachable!("loop returns on its last iteration; change = {change:?}")
    }

    fn record(&self, step: usize, state: &FieldState<T>, prev_u: &[T], its: Vec<usize>, changes: Vec<T>) -> StepRecord<T> {
        let monitor = self.options.monitor;
        StepRecord {
            step,
            t: state.t,
            norm_u: scalar_l2_norm(self.disc, &state.u),
            increment: diff_norm(self.disc, &state.u, prev_u),
            oseen_iterations: its,
            oseen_change: changes,
            triple_norm_sq: monitor.then(|| {
                let tn = triple_norm(self.disc, &state.u, &state.trace);
                tn * tn
            }),
            forcing_norm_sq: monitor.then(|| forcing_norm_sq(self.disc, self.forcing, state.t)),
            lifting_residual: monitor.then(|| lifting_residual(self.disc, state)),
        }
    }

    fn start(&self, initial: &FieldState<T>, grid: &TimeGrid<T>) -> Trajectory<T> {
        Trajectory {
            initial_norm: scalar_l2_norm(self.disc, &initial.u),
            dt: grid.dt(),
            records: Vec::with_capacity(grid.steps),
            states: if self.options.keep_states { vec![initial.clone()] } else { Vec::new() },
            final_state: initial.clone(),
            warnings: Vec::new(),
        }
    }

    /// Linearized backward Euler with transport lagged at `u^{n-1}`.
    pub fn run_backward_euler(&self, initial: FieldState<T>, grid: &TimeGrid<T>) -> Result<Trajectory<T>> {
        let dt = grid.dt();
        let alpha = T::one() / dt;
        let mut traj = self.start(&initial, grid);
        let mut cur = initial;
        for n in 1..=grid.steps {
            let t = grid.time(n);
            let mut rhs = load_vector(self.disc, self.forcing, t);
            add_mass(self.disc, &cur.u, alpha, &mut rhs);
            let transport = self.options.convection.then_some(cur.u.as_slice());
            let p = StepParams { nu: self.nu, alpha, transport, rhs: &rhs, boundary_trace: None };
            let next = solve_step(self.disc, self.structure, &p, t)
                .map_err(|e| HdgError::Step { step: n, source: Box::new(e) })?;
            traj.records.push(self.record(n, &next, &cur.u, vec![1], vec![T::zero()]));
            if self.options.keep_states {
                traj.states.push(next.clone());
            }
            cur = next;
        }
        traj.final_state = cur;
        Ok(traj)
    }

    /// DIRK(2,3) with Oseen iteration in each stage. The update is applied
    /// to `u`, `q` and the trace alike so that `q = -K_h(u, trace)` holds at
    /// every step.
    pub fn run_dirk23(&self, initial: FieldState<T>, grid: &TimeGrid<T>) -> Result<Trajectory<T>> {
        let tab = make_dirk23_table::<T>();
        let dt = grid.dt();
        let mut traj = self.start(&initial, grid);
        let mut cur = initial;
        let combine = |y: &[T], y1: &[T], y2: &[T]| -> Vec<T> {
            // f1 = (y1 - y)/(a11 dt), f2 = (y2 - y)/(a22 dt) - (a21/a22) f1
            y.iter()
                .zip(y1)
                .zip(y2)
                .map(|((&y, &y1), &y2)| {
                    let f1 = (y1 - y) / (tab.a11 * dt);
                    let f2 = (y2 - y) / (tab.a22 * dt) - tab.a21 / tab.a22 * f1;
                    y + dt * (tab.b1 * f1 + tab.b2 * f2)
                })
                .collect()
        };
        for n in 1..=grid.steps {
            let tn = grid.time(n - 1);
            let alpha1 = T::one() / (tab.a11 * dt);
            let mut rhs1 = load_vector(self.disc, self.forcing, tn + tab.c1 * dt);
            add_mass(self.disc, &cur.u, alpha1, &mut rhs1);
            let s1 = self.stage(alpha1, &rhs1, &cur.u, tn + tab.c1 * dt, &mut traj.warnings, n)?;

            let alpha2 = T::one() / (tab.a22 * dt);
            let mut rhs2 = load_vector(self.disc, self.forcing, tn + tab.c2 * dt);
            // z2 = u^n/(a22 dt) + (a21/a22) (u^{n,1} - u^n)/(a11 dt)
            let z2: Vec<T> = cur
                .u
                .iter()
                .zip(&s1.state.u)
                .map(|(&un, &u1)| un * alpha2 + tab.a21 / tab.a22 * (u1 - un) * alpha1)
                .collect();
            add_mass(self.disc, &z2, T::one(), &mut rhs2);
            let s2 = self.stage(alpha2, &rhs2, &cur.u, tn + tab.c2 * dt, &mut traj.warnings, n)?;

            let next = FieldState {
                t: grid.time(n),
                u: combine(&cur.u, &s1.state.u, &s2.state.u),
                q: combine(&cur.q, &s1.state.q, &s2.state.q),
                trace: combine(&cur.trace, &s1.state.trace, &s2.state.trace),
            };
            traj.records.push(self.record(
                n,
                &next,
                &cur.u,
                vec![s1.iterations, s2.iterations],
                vec![s1.change, s2.change],
            ));
            if self.options.keep_states {
                traj.states.push(next.clone());
            }
            cur = next;
        }
        traj.final_state = cur;
        Ok(traj)
    }
}
