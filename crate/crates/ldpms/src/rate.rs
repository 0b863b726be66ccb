//! Variational estimation of the rate function: minimize V = V1 + V2 over
//! lattice paths with pinned endpoints and over jump intensities, then send
//! the horizon to infinity along a schedule with a + b/L extrapolation.

use nalgebra::DVector;
use serde::Serialize;
use std::collections::VecDeque;

use crate::action::{action_value, v1_interval, ActionValue, DriftSign, LatticePath};
use crate::coeffs::{CoefficientField, LevyMeasure};
use crate::error::{Error, Result};
use crate::measure_change::JumpIntensityField;
use crate::util::pairwise_sum;

/// Default lattice resolution: steps per unit of horizon, so the time grid
/// refines as L grows.
pub const DEFAULT_STEPS_PER_UNIT_L: usize = 16;
/// Default horizon schedule for the L -> infinity extrapolation.
pub const DEFAULT_L_SCHEDULE: [f64; 4] = [8.0, 16.0, 32.0, 64.0];

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOpts {
    /// Stop when the Euclidean gradient norm falls to this.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub sign: DriftSign,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        MinimizeOpts {
            grad_tol: 1e-6,
            max_iters: 2000,
            sign: DriftSign::default(),
        }
    }
}

/// A stationary point of the energy: the minimizing path, the minimizing
/// jump intensity, its value, and optimizer diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct Minimized {
    pub path: LatticePath,
    pub intensity: JumpIntensityField,
    pub value: ActionValue,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// One velocity's rate estimate: per-L values of V_L/L and the extrapolation.
#[derive(Debug, Clone, Serialize)]
pub struct RateEstimate {
    pub velocity: DVector<f64>,
    /// (L, V_L / L) pairs in schedule order.
    pub values: Vec<(f64, f64)>,
    /// The a of the a + b/L fit, clamped at zero.
    pub extrapolated: f64,
    pub iterations_total: usize,
    pub final_grad_norm: f64,
    /// Set when V_L/L was not monotone along the schedule beyond tolerance;
    /// the estimate is still usable but the extrapolation is suspect.
    pub extrapolation_warning: bool,
}

/// Problem layout: interior path nodes first, then one log-intensity u per
/// (interval, atom) with phi = exp(u) - 1, which keeps 1 + phi > 0 without
/// projections.
struct Problem<'a> {
    field: &'a CoefficientField,
    nu: &'a LevyMeasure,
    x: DVector<f64>,
    z: DVector<f64>,
    horizon: f64,
    n_steps: usize,
    sign: DriftSign,
    d: usize,
    n_atoms: usize,
}

impl<'a> Problem<'a> {
    fn n_node_vars(&self) -> usize {
        (self.n_steps - 1) * self.d
    }

    fn n_vars(&self) -> usize {
        self.n_node_vars() + self.n_steps * self.n_atoms
    }

    fn ds(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    fn nodes_from(&self, vars: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut nodes = Vec::with_capacity(self.n_steps + 1);
        nodes.push(self.x.clone());
        for m in 0..self.n_steps - 1 {
            nodes.push(DVector::from_fn(self.d, |i, _| vars[m * self.d + i]));
        }
        nodes.push(self.z.clone());
        nodes
    }

    fn pack(&self, init: &LatticePath, u0: Option<&[f64]>) -> DVector<f64> {
        let mut vars = DVector::zeros(self.n_vars());
        for m in 1..self.n_steps {
            for i in 0..self.d {
                vars[(m - 1) * self.d + i] = init.nodes[m][i];
            }
        }
        if let Some(u) = u0 {
            vars.rows_mut(self.n_node_vars(), u.len()).copy_from_slice(u);
        }
        vars
    }

    /// h(exp(u)) worked out analytically: u e^u - e^u + 1.
    fn v2_of_u(&self, u: f64) -> f64 {
        let eu = u.exp();
        u * eu - eu + 1.0
    }

    fn objective(&self, vars: &DVector<f64>) -> Result<f64> {
        let nodes = self.nodes_from(vars);
        let ds = self.ds();
        let mut terms = Vec::with_capacity(self.n_steps);
        for n in 0..self.n_steps {
            terms.push(v1_interval(
                self.field,
                self.nu,
                &nodes[n],
                &nodes[n + 1],
                ds,
                self.sign,
                None,
            )?);
        }
        let base = self.n_node_vars();
        for bin in 0..self.n_steps {
            let mut cost = 0.0;
            for (j, atom) in self.nu.atoms().iter().enumerate() {
                cost += atom.mass * self.v2_of_u(vars[base + bin * self.n_atoms + j]);
            }
            terms.push(cost * ds);
        }
        let f = pairwise_sum(&terms);
        if !f.is_finite() {
            return Err(Error::Domain("objective is non-finite".into()));
        }
        Ok(f)
    }

    /// Gradient: interior nodes by central differences of the two intervals
    /// the node touches; log-intensities analytically (d/du = u e^u).
    fn gradient(&self, vars: &DVector<f64>) -> Result<DVector<f64>> {
        let mut nodes = self.nodes_from(vars);
        let ds = self.ds();
        let mut grad = DVector::zeros(self.n_vars());
        for m in 1..self.n_steps {
            for i in 0..self.d {
                let h = 1e-6 * (1.0 + nodes[m][i].abs());
                let orig = nodes[m][i];
                let local = |val: f64, nodes: &mut Vec<DVector<f64>>| -> Result<f64> {
                    nodes[m][i] = val;
                    let a = v1_interval(self.field, self.nu, &nodes[m - 1], &nodes[m], ds, self.sign, None)?;
                    let b = v1_interval(self.field, self.nu, &nodes[m], &nodes[m + 1], ds, self.sign, None)?;
                    Ok(a + b)
                };
                let fp = local(orig + h, &mut nodes)?;
                let fm = local(orig - h, &mut nodes)?;
                nodes[m][i] = orig;
                grad[(m - 1) * self.d + i] = (fp - fm) / (2.0 * h);
            }
        }
        let base = self.n_node_vars();
        for bin in 0..self.n_steps {
            for (j, atom) in self.nu.atoms().iter().enumerate() {
                let idx = base + bin * self.n_atoms + j;
                let u = vars[idx];
                grad[idx] = atom.mass * u * u.exp() * ds;
            }
        }
        Ok(grad)
    }

    fn unpack(&self, vars: &DVector<f64>, grad_norm: f64, iterations: usize) -> Result<Minimized> {
        let path = LatticePath::new(self.horizon, self.nodes_from(vars))?;
        let base = self.n_node_vars();
        let intensity = if self.n_atoms == 0 {
            JumpIntensityField::Zero
        } else {
            let times = (0..=self.n_steps)
                .map(|i| self.horizon * i as f64 / self.n_steps as f64)
                .collect();
            let values = (0..self.n_steps)
                .map(|bin| {
                    (0..self.n_atoms)
                        .map(|j| vars[base + bin * self.n_atoms + j].exp() - 1.0)
                        .collect()
                })
                .collect();
            JumpIntensityField::grid(times, values)?
        };
        let value = action_value(self.field, self.nu, &path, &intensity, self.sign)?;
        Ok(Minimized {
            path,
            intensity,
            value,
            grad_norm,
            iterations,
        })
    }
}

/// Two-loop L-BFGS direction from the stored (s, y) pairs.
fn lbfgs_direction(grad: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let alpha = rho * s.dot(&q);
        q -= y * alpha;
        alphas.push(alpha);
    }
    let gamma = pairs
        .back()
        .map(|(s, y, _)| s.dot(y) / y.dot(y))
        .unwrap_or(1.0);
    q *= gamma;
    for ((s, y, rho), alpha) in pairs.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * y.dot(&q);
        q += s * (alpha - beta);
    }
    -q
}

/// Minimize the energy over interior nodes of `init` and over per-interval
/// log-intensities (started at the optional `phi_init`, else zero tilt).
/// Endpoints stay pinned at init's. Limited-memory quasi-Newton with
/// backtracking line search; every accepted step decreases the objective,
/// so the result never exceeds the value at init.
pub fn minimize_action(
    field: &CoefficientField,
    nu: &LevyMeasure,
    init: &LatticePath,
    phi_init: Option<&JumpIntensityField>,
    opts: &MinimizeOpts,
) -> Result<Minimized> {
    if init.dim() != field.dimension {
        return Err(Error::Input(format!(
            "init path dimension {} does not match field dimension {}",
            init.dim(),
            field.dimension
        )));
    }
    if init.n_steps() < 2 {
        return Err(Error::Input("the minimizer needs at least two lattice steps".into()));
    }
    let n_atoms = if field.k.is_zero() { 0 } else { nu.n_atoms() };
    let problem = Problem {
        field,
        nu,
        x: init.nodes[0].clone(),
        z: init.nodes[init.n_steps()].clone(),
        horizon: init.horizon,
        n_steps: init.n_steps(),
        sign: opts.sign,
        d: init.dim(),
        n_atoms,
    };
    let u0: Option<Vec<f64>> = match phi_init {
        Some(phi) if n_atoms > 0 => {
            let mut u = Vec::with_capacity(problem.n_steps * n_atoms);
            let ds = problem.ds();
            for bin in 0..problem.n_steps {
                let t = (bin as f64 + 0.5) * ds;
                for j in 0..n_atoms {
                    let p = phi.at(t, j)?;
                    if p <= -1.0 {
                        return Err(Error::Input("phi_init must be > -1 for the log parameterization".into()));
                    }
                    u.push((1.0 + p).ln());
                }
            }
            Some(u)
        }
        _ => None,
    };

    let mut x = problem.pack(init, u0.as_deref());
    let mut f = problem.objective(&x)?;
    let mut g = problem.gradient(&x)?;
    let mut g_norm = g.norm();
    let mut best: (f64, DVector<f64>, f64) = (f, x.clone(), g_norm);
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(8);

    for iter in 0..opts.max_iters {
        if g_norm <= opts.grad_tol {
            return problem.unpack(&x, g_norm, iter);
        }
        let mut p = lbfgs_direction(&g, &pairs);
        let mut gp = g.dot(&p);
        if !gp.is_finite() || gp >= 0.0 {
            p = -&g;
            gp = -g_norm * g_norm;
        }
        let mut alpha = if pairs.is_empty() { (1.0 + g_norm).recip() } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &p * alpha;
            match problem.objective(&trial) {
                Ok(ft) if ft <= f + 1e-4 * alpha * gp => {
                    accepted = Some((trial, ft));
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        let Some((x_new, f_new)) = accepted else {
            // No descent direction left at this resolution. A small gradient
            // means flat to roundoff: accept; anything else is a failure.
            if g_norm <= 100.0 * opts.grad_tol {
                return problem.unpack(&x, g_norm, iter);
            }
            let b = problem.unpack(&best.1, best.2, iter)?;
            return Err(Error::Convergence {
                iterations: iter,
                grad_norm: g_norm,
                best_value: best.0,
                best: Box::new(b),
            });
        };
        let g_new = problem.gradient(&x_new)?;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == 8 {
                pairs.pop_front();
            }
            pairs.push_back((s, y, sy.recip()));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        g_norm = g.norm();
        if f < best.0 {
            best = (f, x.clone(), g_norm);
        }
    }
    let b = problem.unpack(&best.1, best.2, opts.max_iters)?;
    Err(Error::Convergence {
        iterations: opts.max_iters,
        grad_norm: g_norm,
        best_value: best.0,
        best: Box::new(b),
    })
}

/// Linear interpolation of `path` at time s in [0, horizon].
fn interp(path: &LatticePath, s: f64) -> DVector<f64> {
    let ds = path.ds();
    let pos = (s / ds).clamp(0.0, path.n_steps() as f64);
    let idx = (pos.floor() as usize).min(path.n_steps() - 1);
    let frac = pos - idx as f64;
    &path.nodes[idx] * (1.0 - frac) + &path.nodes[idx + 1] * frac
}

/// Stretch a minimizer found at one horizon into the initial guess for a
/// longer one: psi_new(s) = gamma * psi_old(s / gamma), endpoints re-pinned.
fn rescale_warm_start(prev: &LatticePath, l_new: f64, n_new: usize, z_new: &DVector<f64>) -> Result<LatticePath> {
    let gamma = l_new / prev.horizon;
    let mut nodes = Vec::with_capacity(n_new + 1);
    for i in 0..=n_new {
        let s = l_new * i as f64 / n_new as f64;
        nodes.push(interp(prev, s / gamma) * gamma);
    }
    nodes[0] = prev.nodes[0].clone();
    nodes[n_new] = z_new.clone();
    LatticePath::new(l_new, nodes)
}

/// Flag when the per-L values oscillate beyond tolerance instead of
/// approaching a limit monotonically.
pub(crate) fn values_oscillate(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 + 1e-6 * scale;
    let up = values.windows(2).all(|w| w[1] >= w[0] - tol);
    let down = values.windows(2).all(|w| w[1] <= w[0] + tol);
    !(up || down)
}

/// Least-squares fit of v ~ a + b / L; returns a.
fn extrapolate(values: &[(f64, f64)]) -> f64 {
    let n = values.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(l, v) in values {
        let x = 1.0 / l;
        sx += x;
        sy += v;
        sxx += x * x;
        sxy += x * v;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return values.last().map(|&(_, v)| v).unwrap_or(0.0);
    }
    let b = (n * sxy - sx * sy) / det;
    let a = (sy - b * sx) / n;
    a
}

/// Estimate J(v) = lim_L V_L(0, L v)/L along the schedule, warm-starting
/// each horizon from the previous minimizer and extrapolating with a + b/L.
#[allow(non_snake_case)]
pub fn estimate_J(
    field: &CoefficientField,
    nu: &LevyMeasure,
    v: &DVector<f64>,
    l_schedule: &[f64],
    opts: &MinimizeOpts,
) -> Result<RateEstimate> {
    if l_schedule.len() < 3 {
        return Err(Error::Input("the L schedule needs at least three horizons".into()));
    }
    if l_schedule.windows(2).any(|w| w[1] <= w[0]) || l_schedule.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Input("the L schedule must be positive and increasing".into()));
    }
    let d = v.len();
    if d != field.dimension {
        return Err(Error::Input(format!(
            "velocity dimension {d} does not match field dimension {}",
            field.dimension
        )));
    }
    let x0 = DVector::zeros(d);
    let mut values = Vec::with_capacity(l_schedule.len());
    let mut prev: Option<LatticePath> = None;
    let mut iterations_total = 0;
    let mut final_grad_norm = 0.0;
    for &l in l_schedule {
        let n_steps = ((DEFAULT_STEPS_PER_UNIT_L as f64 * l).round() as usize).max(2);
        let z = v * l;
        let init = match &prev {
            Some(p) => rescale_warm_start(p, l, n_steps, &z)?,
            None => LatticePath::straight_line(l, n_steps, &x0, &z)?,
        };
        let min = minimize_action(field, nu, &init, None, opts)?;
        values.push((l, min.value.total / l));
        iterations_total += min.iterations;
        final_grad_norm = min.grad_norm;
        prev = Some(min.path);
    }
    let raw: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
    let warning = values_oscillate(&raw);
    let extrapolated = extrapolate(&values).max(0.0);
    Ok(RateEstimate {
        velocity: v.clone(),
        values,
        extrapolated,
        iterations_total,
        final_grad_norm,
        extrapolation_warning: warning,
    })
}

/// The convexity reduction: inf over paths from x to z in time T of the
/// action equals T * J((z - x)/T).
pub fn path_space_infimum(
    field: &CoefficientField,
    nu: &LevyMeasure,
    t_horizon: f64,
    x: &DVector<f64>,
    z: &DVector<f64>,
    l_schedule: &[f64],
    opts: &MinimizeOpts,
) -> Result<f64> {
    if !(t_horizon > 0.0) {
        return Err(Error::Input(format!("horizon must be positive, got {t_horizon}")));
    }
    let v = (z - x) / t_horizon;
    let est = estimate_J(field, nu, &v, l_schedule, opts)?;
    Ok(t_horizon * est.extrapolated)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityViolation {
    pub left: DVector<f64>,
    pub right: DVector<f64>,
    /// J(mid) - (J(left) + J(right))/2 - tol, positive by construction.
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub triples_checked: usize,
    pub violations: Vec<ConvexityViolation>,
    pub pass: bool,
}

/// Midpoint convexity over a velocity grid: for every pair whose midpoint
/// is also on the grid, J(mid) must not exceed the average beyond tol.
pub fn convexity_check(estimates: &[RateEstimate], tol: f64) -> ConvexityReport {
    let find = |v: &DVector<f64>| {
        estimates
            .iter()
            .find(|e| (&e.velocity - v).norm() < 1e-9)
    };
    let mut triples = 0;
    let mut violations = Vec::new();
    for i in 0..estimates.len() {
        for j in (i + 1)..estimates.len() {
            let mid = (&estimates[i].velocity + &estimates[j].velocity) * 0.5;
            let Some(m) = find(&mid) else { continue };
            triples += 1;
            let avg = 0.5 * (estimates[i].extrapolated + estimates[j].extrapolated);
            if m.extrapolated > avg + tol {
                violations.push(ConvexityViolation {
                    left: estimates[i].velocity.clone(),
                    right: estimates[j].velocity.clone(),
                    excess: m.extrapolated - avg - tol,
                });
            }
        }
    }
    ConvexityReport {
        triples_checked: triples,
        pass: violations.is_empty(),
        violations,
    }
}
