//! Manufactured solutions, convergence studies and table output.

use std::fmt::Write as _;

use crate::condensed::TraceStructure;
use crate::error::{HdgError, Result};
use crate::local::Discretization;
use crate::mesh::{build_uniform_mesh, Point};
use crate::projection::relative_errors;
use crate::space::{HdgSpace, QuadratureOrders, TauRule, TraceMode};
use crate::timestep::{initial_state, Integrator, TimeGrid, TimeOptions, Trajectory};
use crate::Scalar;

/// The three separable test problems `u = theta(t) * prod_c g(x_c)` on the
/// unit square or cube, all vanishing on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Example {
    /// `e^{-t} x(x-1) y(y-1)` in 2D.
    Polynomial2d,
    /// `(e^t - 1) x y tanh((1-x)/nu) tanh((1-y)/nu)` in 2D (boundary layers).
    BoundaryLayer2d,
    /// `e^{-t} x(1-x) y(1-y) z(1-z)` in 3D.
    Polynomial3d,
}

impl Example {
    pub fn from_id(id: usize) -> Result<Self> {
        match id {
            1 => Ok(Self::Polynomial2d),
            2 => Ok(Self::BoundaryLayer2d),
            3 => Ok(Self::Polynomial3d),
            _ => Err(HdgError::UnknownExample(id)),
        }
    }

    pub fn id(self) -> usize {
        match self {
            Self::Polynomial2d => 1,
            Self::BoundaryLayer2d => 2,
            Self::Polynomial3d => 3,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Polynomial3d => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedCase<T> {
    pub example: Example,
    pub nu: T,
    pub final_time: T,
}

pub fn make_case<T: Scalar>(example: usize, nu: T) -> Result<ManufacturedCase<T>> {
    if !(nu > T::zero()) {
        return Err(HdgError::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    Ok(ManufacturedCase {
        example: Example::from_id(example)?,
        nu,
        final_time: T::one(),
    })
}

impl<T: Scalar> ManufacturedCase<T> {
    pub fn dim(&self) -> usize {
        self.example.dim()
    }

    /// `(theta, theta')`.
    fn time_factor(&self, t: T) -> (T, T) {
        match self.example {
            Example::BoundaryLayer2d => (t.exp() - T::one(), t.exp()),
            _ => ((-t).exp(), -(-t).exp()),
        }
    }

    /// `(g, g', g'')` of the one-dimensional factor.
    fn factor(&self, s: T) -> (T, T, T) {
        let two = T::lit(2.0);
        match self.example {
            Example::Polynomial2d => (s * (s - T::one()), two * s - T::one(), two),
            Example::Polynomial3d => (s * (T::one() - s), T::one() - two * s, -two),
            Example::BoundaryLayer2d => {
                let nu = self.nu;
                let z = (T::one() - s) / nu;
                let th = z.tanh();
                let sech2 = T::one() - th * th;
                (
                    s * th,
                    th - s / nu * sech2,
                    -two / nu * sech2 - two * s / (nu * nu) * sech2 * th,
                )
            }
        }
    }

    fn factors(&self, x: &Point<T>) -> [(T, T, T); 3] {
        let mut out = [(T::one(), T::zero(), T::zero()); 3];
        for (c, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = self.factor(x[c]);
        }
        out
    }

    pub fn u(&self, x: &Point<T>, t: T) -> T {
        let f = self.factors(x);
        self.time_factor(t).0 * f.iter().fold(T::one(), |a, g| a * g.0)
    }

    pub fn u_t(&self, x: &Point<T>, t: T) -> T {
        let f = self.factors(x);
        self.time_factor(t).1 * f.iter().fold(T::one(), |a, g| a * g.0)
    }

    pub fn grad(&self, x: &Point<T>, t: T) -> [T; 3] {
        let f = self.factors(x);
        let th = self.time_factor(t).0;
        let mut g = [T::zero(); 3];
        for (c, gc) in g.iter_mut().enumerate().take(self.dim()) {
            let others = (0..self.dim()).filter(|&o| o != c).fold(T::one(), |a, o| a * f[o].0);
            *gc = th * f[c].1 * others;
        }
        g
    }

    pub fn laplacian(&self, x: &Point<T>, t: T) -> T {
        let f = self.factors(x);
        let th = self.time_factor(t).0;
        (0..self.dim())
            .map(|c| {
                let others = (0..self.dim()).filter(|&o| o != c).fold(T::one(), |a, o| a * f[o].0);
                th * f[c].2 * others
            })
            .fold(T::zero(), |a, b| a + b)
    }

    /// Exact flux `q = -grad u`.
    pub fn flux(&self, x: &Point<T>, t: T) -> [T; 3] {
        let g = self.grad(x, t);
        [-g[0], -g[1], -g[2]]
    }

    /// `f = u_t - nu Laplace(u) + u * sum_c d_c u`.
    pub fn forcing(&self, x: &Point<T>, t: T) -> T {
        let g = self.grad(x, t);
        let conv = g[..self.dim()].iter().fold(T::zero(), |a, &b| a + b);
        self.u_t(x, t) - self.nu * self.laplacian(x, t) + self.u(x, t) * conv
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    Dirk23,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::BackwardEuler => "be",
            Scheme::Dirk23 => "dirk23",
        }
    }
}

/// How the time step is chosen for each run of a study.
#[derive(Clone, Debug, PartialEq)]
pub enum DtRule {
    /// `N = M^2`.
    StepsMeshSquared,
    /// `N = M^3`.
    StepsMeshCubed,
    Fixed(f64),
    /// One run per step size on every mesh (temporal study).
    Ladder(Vec<f64>),
}

impl DtRule {
    /// Grids for mesh `m`, one per run.
    pub fn grids<T: Scalar>(&self, final_time: T, m: usize) -> Result<Vec<TimeGrid<T>>> {
        match self {
            DtRule::StepsMeshSquared => Ok(vec![TimeGrid::new(final_time, m * m)?]),
            DtRule::StepsMeshCubed => Ok(vec![TimeGrid::new(final_time, m * m * m)?]),
            DtRule::Fixed(dt) => Ok(vec![TimeGrid::from_step(final_time, T::lit(*dt))?]),
            DtRule::Ladder(dts) => dts.iter().map(|&dt| TimeGrid::from_step(final_time, T::lit(dt))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig<T> {
    pub scheme: Scheme,
    pub k: usize,
    pub mode: TraceMode,
    pub meshes: Vec<usize>,
    pub dt_rule: DtRule,
    pub tau_rule: TauRule,
    pub options: TimeOptions<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow<T> {
    pub mesh: usize,
    pub dt: T,
    pub steps: usize,
    pub err_u: T,
    pub err_q: T,
    pub order_u: Option<T>,
    pub order_q: Option<T>,
    /// Largest Oseen iteration count of any stage.
    pub max_oseen: usize,
    /// `(t_n, ||u_h^n||)` including `t = 0`, filled when monitoring.
    pub energy: Vec<(T, T)>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport<T> {
    pub example: Example,
    pub nu: T,
    pub dim: usize,
    pub scheme: Scheme,
    pub k: usize,
    pub mode: TraceMode,
    pub rows: Vec<ReportRow<T>>,
}

/// A prepared mesh-level problem that can be integrated repeatedly.
pub struct MeshRun<T> {
    pub disc: Discretization<T>,
    pub structure: TraceStructure,
}

impl<T: Scalar> MeshRun<T> {
    pub fn new(dim: usize, m: usize, k: usize, mode: TraceMode) -> Result<Self> {
        Self::with_tau(dim, m, k, mode, TauRule::default())
    }

    pub fn with_tau(dim: usize, m: usize, k: usize, mode: TraceMode, tau_rule: TauRule) -> Result<Self> {
        let mesh = build_uniform_mesh::<T>(dim, m)?;
        let space = HdgSpace::with_options(mesh, k, mode, QuadratureOrders::for_degree(k), tau_rule)?;
        let disc = Discretization::new(space);
        let structure = TraceStructure::new(&disc);
        Ok(Self { disc, structure })
    }

    pub fn integrate(
        &self,
        case: &ManufacturedCase<T>,
        scheme: Scheme,
        grid: &TimeGrid<T>,
        options: TimeOptions<T>,
    ) -> Result<Trajectory<T>> {
        let forcing = |x: &Point<T>, t: T| case.forcing(x, t);
        let u0 = |x: &Point<T>| case.u(x, T::zero());
        let it = Integrator {
            disc: &self.disc,
            structure: &self.structure,
            nu: case.nu,
            forcing: &forcing,
            options,
        };
        let init = initial_state(&self.disc, &u0);
        match scheme {
            Scheme::BackwardEuler => it.run_backward_euler(init, grid),
            Scheme::Dirk23 => it.run_dirk23(init, grid),
        }
    }

    /// Relative errors of `u_h` and `q_h` at the trajectory's final time.
    pub fn errors(&self, case: &ManufacturedCase<T>, traj: &Trajectory<T>) -> (T, T) {
        let st = &traj.final_state;
        let t = st.t;
        let eu = |x: &Point<T>| case.u(x, t);
        let eq = |x: &Point<T>| case.flux(x, t);
        let e = relative_errors(&self.disc.space, &st.u, &st.q, &eu, &eq);
        (e.err_u, e.err_q)
    }
}

fn observed_order<T: Scalar>(coarse: T, fine: T, ratio: T) -> Option<T> {
    let o = (coarse / fine).ln() / ratio.ln();
    o.is_finite().then_some(o)
}

pub fn run_convergence<T: Scalar>(case: &ManufacturedCase<T>, cfg: &RunConfig<T>) -> Result<ConvergenceReport<T>> {
    if cfg.meshes.is_empty() || cfg.meshes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HdgError::InvalidArgument("mesh list must be non-empty and strictly increasing".into()));
    }
    if cfg.k == 0 || (cfg.mode == TraceMode::Minus && cfg.k < 1) {
        return Err(HdgError::UnsupportedDegree { dim: case.dim(), degree: cfg.k });
    }
    let mut rows: Vec<ReportRow<T>> = Vec::new();
    for &m in &cfg.meshes {
        let wrap = |e: HdgError| HdgError::Run { mesh: m, source: Box::new(e) };
        let run = MeshRun::<T>::with_tau(case.dim(), m, cfg.k, cfg.mode, cfg.tau_rule).map_err(wrap)?;
        let grids = cfg.dt_rule.grids(case.final_time, m).map_err(wrap)?;
        let sweep_start = rows.len();
        for grid in grids {
            let traj = run.integrate(case, cfg.scheme, &grid, cfg.options).map_err(wrap)?;
            let (err_u, err_q) = run.errors(case, &traj);
            let energy = if cfg.options.monitor {
                std::iter::once((T::zero(), traj.initial_norm))
                    .chain(traj.records.iter().map(|r| (r.t, r.norm_u)))
                    .collect()
            } else {
                Vec::new()
            };
            rows.push(ReportRow {
                mesh: m,
                dt: grid.dt(),
                steps: grid.steps,
                err_u,
                err_q,
                order_u: None,
                order_q: None,
                max_oseen: traj
                    .records
                    .iter()
                    .flat_map(|r| r.oseen_iterations.iter().copied())
                    .max()
                    .unwrap_or(0),
                energy,
                warnings: traj.warnings,
            });
        }
        // Temporal orders within a ladder sweep on one mesh.
        if matches!(cfg.dt_rule, DtRule::Ladder(_)) {
            for i in sweep_start + 1..rows.len() {
                let ratio = rows[i - 1].dt / rows[i].dt;
                rows[i].order_u = observed_order(rows[i - 1].err_u, rows[i].err_u, ratio);
                rows[i].order_q = observed_order(rows[i - 1].err_q, rows[i].err_q, ratio);
            }
        }
    }
    if !matches!(cfg.dt_rule, DtRule::Ladder(_)) {
        for i in 1..rows.len() {
            let ratio = T::of(rows[i].mesh) / T::of(rows[i - 1].mesh);
            rows[i].order_u = observed_order(rows[i - 1].err_u, rows[i].err_u, ratio);
            rows[i].order_q = observed_order(rows[i - 1].err_q, rows[i].err_q, ratio);
        }
    }
    Ok(ConvergenceReport {
        example: case.example,
        nu: case.nu,
        dim: case.dim(),
        scheme: cfg.scheme,
        k: cfg.k,
        mode: cfg.mode,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Four significant digits with a signed two-digit exponent, e.g. `5.413e-02`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.3e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

fn format_order<T: Scalar>(o: Option<T>) -> String {
    match o {
        Some(v) => format!("{:.2}", v.to_f64_lossy()),
        None => "--".to_string(),
    }
}

fn mesh_label(m: usize, dim: usize) -> String {
    vec![m.to_string(); dim].join("x")
}

pub fn emit_report<T: Scalar>(report: &ConvergenceReport<T>, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("mesh,dt,err_u,order_u,err_q,order_q\n");
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.mesh,
                    format_sci(r.dt.to_f64_lossy()),
                    format_sci(r.err_u.to_f64_lossy()),
                    format_order(r.order_u),
                    format_sci(r.err_q.to_f64_lossy()),
                    format_order(r.order_q)
                );
            }
        }
        ReportFormat::Markdown => {
            let header = ["mesh", "dt", "err_u", "order_u", "err_q", "order_q"];
            let cells: Vec<[String; 6]> = report
                .rows
                .iter()
                .map(|r| {
                    [
                        mesh_label(r.mesh, report.dim),
                        format_sci(r.dt.to_f64_lossy()),
                        format_sci(r.err_u.to_f64_lossy()),
                        format_order(r.order_u),
                        format_sci(r.err_q.to_f64_lossy()),
                        format_order(r.order_q),
                    ]
                })
                .collect();
            let mut width: [usize; 6] = header.map(str::len);
            for row in &cells {
                for (w, c) in width.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |vals: &[&str]| -> String {
                let parts: Vec<String> = vals.iter().zip(&width).map(|(v, &w)| format!("{v:>w$}")).collect();
                format!("| {} |\n", parts.join(" | "))
            };
            out.push_str(&line(&header));
            let dashes: Vec<String> = width.iter().map(|&w| format!("{}:", "-".repeat(w - 1))).collect();
            let _ = writeln!(out, "| {} |", dashes.join(" | "));
            for row in &cells {
                let refs: Vec<&str> = row.iter().map(String::as_str).collect();
                out.push_str(&line(&refs));
            }
        }
    }
    out
}

/// Full-precision companion of the CSV table.
pub fn emit_raw_csv<T: Scalar>(report: &ConvergenceReport<T>) -> String {
    let mut out = String::from("mesh,dt,steps,err_u,order_u,err_q,order_q,max_oseen\n");
    let opt = |o: Option<T>| o.map(|v| format!("{:.17e}", v.to_f64_lossy())).unwrap_or_default();
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{:.17e},{},{:.17e},{},{:.17e},{},{}",
            r.mesh,
            r.dt.to_f64_lossy(),
            r.steps,
            r.err_u.to_f64_lossy(),
            opt(r.order_u),
            r.err_q.to_f64_lossy(),
            opt(r.order_q),
            r.max_oseen
        );
    }
    out
}

/// Per-step `||u_h^n||` for every run of a report.
pub fn emit_energy_csv<T: Scalar>(report: &ConvergenceReport<T>) -> String {
    let mut out = String::from("mesh,dt,step,t,norm_u\n");
    for r in &report.rows {
        for (n, (t, e)) in r.energy.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{:.17e},{},{:.17e},{:.17e}",
                r.mesh,
                r.dt.to_f64_lossy(),
                n,
                t.to_f64_lossy(),
                e.to_f64_lossy()
            );
        }
    }
    out
}
