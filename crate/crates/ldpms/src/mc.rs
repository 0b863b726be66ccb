//! Monte Carlo verification harness: terminal-event probabilities, naive
//! and importance-sampled, and the eps log P sweep that compares measured
//! decay against the variational target -inf_A T J((z - x0)/T).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::action::LatticePath;
use crate::coeffs::{CoefficientField, LevyMeasure, RegimeLaw};
use crate::error::{Error, Result};
use crate::measure_change::{tilt_from_target, Tilt};
use crate::rate::{path_space_infimum, MinimizeOpts};
use crate::sim::{simulate_terminal_batch, SimConfig};
use crate::util::{pairwise_sum, path_seed};

/// Default absolute tolerance on |eps log p_hat - target| for the sweep
/// verdict.
pub const DEFAULT_GAP_TOL: f64 = 0.15;
/// Default boundary-grid resolution for the event infimum.
pub const DEFAULT_EVENT_RESOLUTION: usize = 8;
/// Default horizon schedule for rate estimates inside the mc module; three
/// horizons keep per-candidate cost down while still allowing the 1/L
/// extrapolation.
pub const DEFAULT_MC_L_SCHEDULE: [f64; 3] = [8.0, 16.0, 32.0];

/// Terminal event A applied to X_T. Ball and box are closed, the halfspace
/// is { x : <normal, x> >= offset }.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSet {
    Ball { center: Vec<f64>, radius: f64 },
    Halfspace { normal: Vec<f64>, offset: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl EventSet {
    pub fn dim(&self) -> usize {
        match self {
            EventSet::Ball { center, .. } => center.len(),
            EventSet::Halfspace { normal, .. } => normal.len(),
            EventSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        if self.dim() != dimension {
            return Err(Error::Input(format!(
                "event lives in dimension {}, model in {}",
                self.dim(),
                dimension
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            EventSet::Ball { center, radius } => {
                if !finite(center) || !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::Input(format!(
                        "ball needs a finite center and radius > 0, got radius {radius}"
                    )));
                }
            }
            EventSet::Halfspace { normal, offset } => {
                let norm2: f64 = normal.iter().map(|x| x * x).sum();
                if !finite(normal) || !offset.is_finite() || norm2 == 0.0 {
                    return Err(Error::Input("halfspace needs a finite nonzero normal and finite offset".into()));
                }
            }
            EventSet::Box { lo, hi } => {
                if !finite(lo) || !finite(hi) || lo.len() != hi.len() {
                    return Err(Error::Input("box bounds must be finite and share a dimension".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| l >= h) {
                    return Err(Error::Input("box needs lo < hi componentwise".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            EventSet::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius
            }
            EventSet::Halfspace { normal, offset } => {
                let ip: f64 = x.iter().zip(normal).map(|(a, b)| a * b).sum();
                ip >= *offset
            }
            EventSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    /// Standard error from the sample variance of per-path contributions.
    pub std_error: f64,
    pub n_paths: usize,
    /// Paths whose terminal state landed in the event, tilted or not.
    pub n_hits: usize,
    /// No path hit the event; p_hat = 0 with no variance information.
    pub zero_hits: bool,
    pub importance_sampled: bool,
}

/// Estimate P{X_T in A}. Without a tilt this is the hit fraction; with a
/// tilt, the mean of indicator * exp(log dP/dP_hat) over tilted paths.
pub fn estimate_probability(
    field: &CoefficientField,
    nu: &LevyMeasure,
    cfg: &SimConfig,
    event: &EventSet,
    n_paths: usize,
    tilt: Option<&Tilt>,
) -> Result<ProbabilityEstimate> {
    if n_paths < 100 {
        return Err(Error::Input(format!(
            "need at least 100 paths for a variance estimate, got {n_paths}"
        )));
    }
    event.validate(field.dimension)?;
    let terminals = simulate_terminal_batch(field, nu, cfg, n_paths, tilt)?;
    let contributions: Vec<f64> = terminals
        .iter()
        .map(|(x, log_w)| if event.contains(x) { log_w.exp() } else { 0.0 })
        .collect();
    let n_hits = terminals.iter().filter(|(x, _)| event.contains(x)).count();
    let n = n_paths as f64;
    let p_hat = pairwise_sum(&contributions) / n;
    let sq_dev: Vec<f64> = contributions.iter().map(|c| (c - p_hat) * (c - p_hat)).collect();
    let variance = pairwise_sum(&sq_dev) / (n - 1.0);
    let std_error = (variance / n).sqrt();
    Ok(ProbabilityEstimate {
        p_hat,
        std_error,
        n_paths,
        n_hits,
        zero_hits: n_hits == 0,
        importance_sampled: tilt.is_some(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EventInfimum {
    pub z_star: Vec<f64>,
    /// (z_star - x0) / T, the velocity the infimizing endpoint asks for.
    pub velocity: Vec<f64>,
    /// inf over the candidate grid of T J((z - x0)/T).
    pub value: f64,
    pub candidates: usize,
}

fn push_unique(cands: &mut Vec<DVector<f64>>, z: DVector<f64>) {
    let tol = 1e-12 * (1.0 + z.norm());
    if !cands.iter().any(|c| (c - &z).norm() <= tol) {
        cands.push(z);
    }
}

/// Directions covering the unit sphere coarsely: the nonzero {-1,0,1}^d
/// lattice directions, plus `resolution` equispaced angles when d = 2.
fn sphere_directions(d: usize, resolution: usize) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    let mut idx = vec![0i32; d];
    loop {
        if idx.iter().any(|&i| i != 0) {
            let mut v = DVector::from_iterator(d, idx.iter().map(|&i| f64::from(i)));
            v /= v.norm();
            let tol = 1e-12;
            if !dirs.iter().any(|u| (u - &v).norm() <= tol) {
                dirs.push(v);
            }
        }
        let mut carry = 0;
        while carry < d {
            idx[carry] += 1;
            if idx[carry] > 1 {
                idx[carry] = -1;
                carry += 1;
            } else {
                break;
            }
        }
        if carry == d {
            break;
        }
    }
    if d == 2 {
        for k in 0..resolution {
            let th = 2.0 * std::f64::consts::PI * k as f64 / resolution as f64;
            let v = DVector::from_column_slice(&[th.cos(), th.sin()]);
            if !dirs.iter().any(|u| (u - &v).norm() <= 1e-12) {
                dirs.push(v);
            }
        }
    }
    dirs
}

fn candidate_grid(event: &EventSet, x0: &DVector<f64>, resolution: usize) -> Vec<DVector<f64>> {
    let d = x0.len();
    let mut cands = Vec::new();
    match event {
        EventSet::Ball { center, radius } => {
            let c = DVector::from_column_slice(center);
            if event.contains(x0) {
                push_unique(&mut cands, x0.clone());
            } else {
                // Nearest boundary point, on the segment x0 -> center.
                let dir = (x0 - &c).normalize();
                push_unique(&mut cands, &c + &dir * *radius);
            }
            push_unique(&mut cands, c.clone());
            for dir in sphere_directions(d, resolution.max(4)) {
                push_unique(&mut cands, &c + dir * *radius);
            }
        }
        EventSet::Halfspace { normal, offset } => {
            let nvec = DVector::from_column_slice(normal);
            let nn = nvec.norm_squared();
            let proj = x0 + &nvec * ((offset - nvec.dot(x0)) / nn);
            if event.contains(x0) {
                push_unique(&mut cands, x0.clone());
            }
            push_unique(&mut cands, proj.clone());
            // Orthonormal tangent frame of the boundary plane.
            let mut frame: Vec<DVector<f64>> = Vec::new();
            for i in 0..d {
                let mut t = DVector::zeros(d);
                t[i] = 1.0;
                t -= &nvec * (nvec[i] / nn);
                for u in &frame {
                    let ip = u.dot(&t);
                    t -= u * ip;
                }
                if t.norm() > 1e-10 {
                    frame.push(t.normalize());
                }
            }
            let spacing = (1.0f64).max((&proj - x0).norm()) / resolution as f64;
            for u in &frame {
                for k in 1..=resolution {
                    let shift = u * (spacing * k as f64);
                    push_unique(&mut cands, &proj + &shift);
                    push_unique(&mut cands, &proj - &shift);
                }
            }
        }
        EventSet::Box { lo, hi } => {
            let clamp = DVector::from_iterator(
                d,
                (0..d).map(|i| x0[i].clamp(lo[i], hi[i])),
            );
            push_unique(&mut cands, clamp);
            // The {lo, mid, hi}^d lattice covers vertices, edge and face
            // midpoints, and the center.
            let mut idx = vec![0usize; d];
            loop {
                let z = DVector::from_iterator(
                    d,
                    (0..d).map(|i| match idx[i] {
                        0 => lo[i],
                        1 => 0.5 * (lo[i] + hi[i]),
                        _ => hi[i],
                    }),
                );
                push_unique(&mut cands, z);
                let mut carry = 0;
                while carry < d {
                    idx[carry] += 1;
                    if idx[carry] > 2 {
                        idx[carry] = 0;
                        carry += 1;
                    } else {
                        break;
                    }
                }
                if carry == d {
                    break;
                }
            }
            // In low dimension, refine the faces.
            if d <= 2 && resolution >= 2 {
                for axis in 0..d {
                    for &bound in &[lo[axis], hi[axis]] {
                        for k in 0..=resolution {
                            let mut z = DVector::zeros(d);
                            z[axis] = bound;
                            for other in 0..d {
                                if other != axis {
                                    z[other] =
                                        lo[other] + (hi[other] - lo[other]) * k as f64 / resolution as f64;
                                }
                            }
                            push_unique(&mut cands, z);
                            if d == 1 {
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    cands
}

/// Minimize T J((z - x0)/T) over a boundary-refined grid on the event.
/// The rate is convex, so for x0 outside the event the infimum sits on the
/// boundary; for x0 inside it is attained at x0 itself.
pub fn rate_event_infimum(
    field: &CoefficientField,
    nu: &LevyMeasure,
    event: &EventSet,
    x0: &DVector<f64>,
    t_horizon: f64,
    resolution: usize,
    l_schedule: &[f64],
    opts: &MinimizeOpts,
) -> Result<EventInfimum> {
    event.validate(field.dimension)?;
    if x0.len() != field.dimension {
        return Err(Error::Input(format!(
            "x0 has dimension {}, model has {}",
            x0.len(),
            field.dimension
        )));
    }
    if resolution == 0 {
        return Err(Error::Input("event grid resolution must be positive".into()));
    }
    let cands = candidate_grid(event, x0, resolution);
    if cands.is_empty() {
        return Err(Error::Input("the event produced an empty candidate grid".into()));
    }
    let mut best: Option<(DVector<f64>, f64)> = None;
    for z in &cands {
        let value = path_space_infimum(field, nu, t_horizon, x0, z, l_schedule, opts)?;
        if best.as_ref().map_or(true, |(_, b)| value < *b) {
            best = Some((z.clone(), value));
        }
    }
    let (z_star, value) = best.expect("candidate grid is nonempty");
    let velocity = (&z_star - x0) / t_horizon;
    Ok(EventInfimum {
        z_star: z_star.iter().copied().collect(),
        velocity: velocity.iter().copied().collect(),
        value,
        candidates: cands.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub delta: f64,
    pub p_hat: f64,
    pub std_error: f64,
    pub eps_log_p: f64,
    /// Set when this sweep point failed; the sweep carries on past it.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LdpSweep {
    pub entries: Vec<SweepEntry>,
    /// -inf over the event of T J((z - x0)/T); eps log p_hat approaches
    /// this from below as eps shrinks.
    pub target: f64,
    pub z_star: Vec<f64>,
    pub regime_law: RegimeLaw,
    pub n_paths: usize,
    /// |eps log p_hat - target| at the smallest successful epsilon.
    pub gap: Option<f64>,
    pub gap_tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOpts {
    pub seed: u64,
    /// Override of the simulation step; default is the SimConfig fraction.
    pub dt: Option<f64>,
    pub gap_tol: f64,
    pub resolution: usize,
    pub l_schedule: Vec<f64>,
    pub minimize: MinimizeOpts,
}

impl Default for SweepOpts {
    fn default() -> Self {
        SweepOpts {
            seed: 0,
            dt: None,
            gap_tol: DEFAULT_GAP_TOL,
            resolution: DEFAULT_EVENT_RESOLUTION,
            l_schedule: DEFAULT_MC_L_SCHEDULE.to_vec(),
            minimize: MinimizeOpts::default(),
        }
    }
}

/// For each epsilon: set delta from the regime law, importance-sample the
/// event with the tilt that tracks the straight path to the rate minimizer
/// z_star, and record eps log p_hat against the variational target.
#[allow(clippy::too_many_arguments)]
pub fn ldp_sweep(
    field: &CoefficientField,
    nu: &LevyMeasure,
    regime_law: RegimeLaw,
    event: &EventSet,
    x0: &DVector<f64>,
    t_horizon: f64,
    eps_list: &[f64],
    n_paths: usize,
    opts: &SweepOpts,
) -> Result<LdpSweep> {
    if eps_list.is_empty() {
        return Err(Error::Input("the epsilon sweep is empty".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Input("the epsilon sweep must decrease strictly".into()));
    }
    if eps_list.len() >= 2 {
        regime_law.check_scale_separation(eps_list)?;
    }
    let infimum = rate_event_infimum(
        field,
        nu,
        event,
        x0,
        t_horizon,
        opts.resolution,
        &opts.l_schedule,
        &opts.minimize,
    )?;
    let target = -infimum.value;
    let z_star = DVector::from_column_slice(&infimum.z_star);

    let mut entries = Vec::with_capacity(eps_list.len());
    for (i, &epsilon) in eps_list.iter().enumerate() {
        let run = (|| -> Result<SweepEntry> {
            let regime = regime_law.regime(epsilon)?;
            let delta = regime.delta;
            let mut cfg = SimConfig::new(t_horizon, x0.clone(), regime, path_seed(opts.seed, i as u64));
            if let Some(dt) = opts.dt {
                cfg = cfg.with_dt(dt);
            }
            let psi = LatticePath::straight_line(t_horizon, cfg.n_steps(), x0, &z_star)?;
            let tilt = tilt_from_target(field, nu, regime, &psi, None)?;
            let est = estimate_probability(field, nu, &cfg, event, n_paths, Some(&tilt))?;
            let eps_log_p = if est.p_hat > 0.0 {
                epsilon * est.p_hat.ln()
            } else {
                f64::NEG_INFINITY
            };
            Ok(SweepEntry {
                epsilon,
                delta,
                p_hat: est.p_hat,
                std_error: est.std_error,
                eps_log_p,
                error: if est.zero_hits {
                    Some("no tilted path hit the event".into())
                } else {
                    None
                },
            })
        })();
        entries.push(run.unwrap_or_else(|e| SweepEntry {
            epsilon,
            delta: regime_law.delta(epsilon),
            p_hat: f64::NAN,
            std_error: f64::NAN,
            eps_log_p: f64::NAN,
            error: Some(e.to_string()),
        }));
    }

    let gap = entries
        .iter()
        .rev()
        .find(|e| e.error.is_none())
        .map(|e| (e.eps_log_p - target).abs());
    let last_ok = entries.last().is_some_and(|e| e.error.is_none());
    let pass = last_ok && gap.is_some_and(|g| g <= opts.gap_tol);
    Ok(LdpSweep {
        entries,
        target,
        z_star: infimum.z_star,
        regime_law,
        n_paths,
        gap,
        gap_tol: opts.gap_tol,
        pass,
    })
}

impl LdpSweep {
    /// CSV export: one row per epsilon, constant target column.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["epsilon", "delta", "p_hat", "std_error", "eps_log_p", "target"])?;
        let mut buf = ryu::Buffer::new();
        for e in &self.entries {
            let row: Vec<String> = [e.epsilon, e.delta, e.p_hat, e.std_error, e.eps_log_p, self.target]
                .iter()
                .map(|&v| buf.format(v).to_string())
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
