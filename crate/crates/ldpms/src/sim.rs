//! Euler-Maruyama simulation of the two-parameter dynamics
//!
//!   X_{t+dt} = X_t - sqrt(eps) sigma(X/delta) dW
//!              + [(eps/delta) b(X/delta) + c(X/delta) - kbar(X/delta)] dt
//!              + eps k(X_-/delta, y) per sampled jump,
//!
//! with per-atom Poisson jump counts of mean (1+phi) w dt / eps. The minus
//! sign on the Brownian term is the model's own convention; it is
//! distributionally irrelevant but kept verbatim so stored increments plug
//! into the density formulas without sign gymnastics.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::{CoefficientField, LevyMeasure, ScaleRegime};
use crate::error::{Error, Result};
use crate::measure_change::{log_density, DensityAccumulator, Tilt};
use crate::util::path_seed;

/// Default Euler step as a fraction of the horizon.
pub const DEFAULT_DT_FRACTION: f64 = 1e-3;
/// Default cap on expected jumps per step; beyond this the discretization
/// cannot resolve individual jumps and the run is refused.
pub const DEFAULT_JUMP_BUDGET: f64 = 16.0;

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub t_horizon: f64,
    pub dt: f64,
    pub x0: DVector<f64>,
    pub regime: ScaleRegime,
    pub seed: u64,
    pub jump_budget: f64,
}

impl SimConfig {
    pub fn new(t_horizon: f64, x0: DVector<f64>, regime: ScaleRegime, seed: u64) -> Self {
        SimConfig {
            t_horizon,
            dt: DEFAULT_DT_FRACTION * t_horizon,
            x0,
            regime,
            seed,
            jump_budget: DEFAULT_JUMP_BUDGET,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_jump_budget(mut self, budget: f64) -> Self {
        self.jump_budget = budget;
        self
    }

    /// Step count after rounding dt to divide the horizon evenly.
    pub fn n_steps(&self) -> usize {
        ((self.t_horizon / self.dt).round() as usize).max(1)
    }

    /// Node times; the last node lands on the horizon exactly.
    pub fn times(&self) -> Vec<f64> {
        let n = self.n_steps();
        (0..=n)
            .map(|i| (self.t_horizon * i as f64) / n as f64)
            .collect()
    }

    fn validate(&self, field: &CoefficientField, nu: &LevyMeasure, tilt: Option<&Tilt>) -> Result<()> {
        if !(self.t_horizon > 0.0) || !self.t_horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.t_horizon)));
        }
        if !(self.dt > 0.0) || self.dt > self.t_horizon {
            return Err(Error::Config(format!(
                "dt must lie in (0, {}], got {}",
                self.t_horizon, self.dt
            )));
        }
        if self.x0.len() != field.dimension {
            return Err(Error::Config(format!(
                "x0 has dimension {}, field has {}",
                self.x0.len(),
                field.dimension
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("x0 must be finite".into()));
        }
        let dt = self.t_horizon / self.n_steps() as f64;
        let tilted_mass = match tilt {
            Some(t) => t.phi.max_tilted_mass(nu),
            None => nu.total_mass(),
        };
        let per_step = tilted_mass * dt / self.regime.epsilon;
        if !field.k.is_zero() && per_step > self.jump_budget {
            return Err(Error::Config(format!(
                "expected jumps per step {per_step:.2} exceed the budget {}; reduce dt below {:.3e}",
                self.jump_budget,
                self.jump_budget * self.regime.epsilon / tilted_mass.max(f64::MIN_POSITIVE)
            )));
        }
        if let Some(t) = tilt {
            if t.xi.dim() != field.dimension {
                return Err(Error::Config(format!(
                    "tilt xi has dimension {}, field has {}",
                    t.xi.dim(),
                    field.dimension
                )));
            }
            if !t.phi.is_zero() && field.k.is_zero() && nu.n_atoms() > 0 {
                return Err(Error::Config(
                    "jump tilt given but the jump kernel is zero; the tilted counts would never be sampled".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One applied jump: atom `atom` of nu fired at `time` (during step `step`)
/// and moved the state by `increment` = eps * k(X_-/delta, mark).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpEvent {
    pub step: usize,
    pub time: f64,
    pub atom: usize,
    pub mark: Vec<f64>,
    pub increment: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Brownian increments under the base measure P; for a tilted run these
    /// are dG - xi dt / sqrt(eps) with dG the drawn Gaussians.
    pub increments: Vec<DVector<f64>>,
    pub jump_log: Vec<JumpEvent>,
    pub seed: u64,
}

impl Trajectory {
    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least the start node")
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// CSV export: time, state components, cumulative jump count.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.dim();
        let mut header = vec!["time".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.push("cum_jumps".to_string());
        w.write_record(&header).map_err(io_from_csv)?;
        let mut cum = 0usize;
        let mut next_event = 0usize;
        for (i, t) in self.times.iter().enumerate() {
            // Jumps applied during step i-1 are visible at node i.
            while next_event < self.jump_log.len() && self.jump_log[next_event].step < i {
                cum += 1;
                next_event += 1;
            }
            let mut rec = Vec::with_capacity(d + 2);
            rec.push(ryu_string(*t));
            for comp in self.states[i].iter() {
                rec.push(ryu_string(*comp));
            }
            rec.push(cum.to_string());
            w.write_record(&rec).map_err(io_from_csv)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ryu_string(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}

fn io_from_csv(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

struct PathOutput {
    traj: Option<Trajectory>,
    terminal: DVector<f64>,
    /// log dP_hat/dP accumulated along the way; 0 for untilted runs.
    log_density: f64,
}

fn run_path(
    field: &CoefficientField,
    nu: &LevyMeasure,
    cfg: &SimConfig,
    tilt: Option<&Tilt>,
    seed: u64,
    record: bool,
) -> Result<PathOutput> {
    let d = field.dimension;
    let n = cfg.n_steps();
    let times = cfg.times();
    let eps = cfg.regime.epsilon;
    let delta = cfg.regime.delta;
    let sqrt_eps = eps.sqrt();
    let jumps_active = !field.k.is_zero() && nu.n_atoms() > 0;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut state = cfg.x0.clone();
    let mut states = Vec::new();
    let mut increments = Vec::new();
    if record {
        states.reserve(n + 1);
        states.push(state.clone());
        increments.reserve(n);
    }
    let mut jump_log = Vec::new();
    let mut acc = tilt.map(|_| DensityAccumulator::with_capacity(n));

    for step in 0..n {
        let t = times[step];
        let dt = times[step + 1] - t;
        let sqrt_dt = dt.sqrt();
        let arg = &state / delta;

        let gauss =
            DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * sqrt_dt);
        let (dw, xi) = match tilt {
            Some(tl) => {
                let xi = tl.xi.at(t, &state)?;
                (&gauss - &xi * (dt / sqrt_eps), Some(xi))
            }
            None => (gauss, None),
        };

        let mut next = &state - field.sigma_at(&arg)? * &dw * sqrt_eps
            + field.b_at(&arg)? * (cfg.regime.eps_over_delta() * dt)
            + field.c_at(&arg)? * dt;
        if jumps_active {
            next -= field.kbar_at(&arg, nu)? * dt;
            for (j, atom) in nu.atoms().iter().enumerate() {
                let phi = match tilt {
                    Some(tl) => tl.phi.at(t, j)?,
                    None => 0.0,
                };
                let lambda = (1.0 + phi) * atom.mass * dt / eps;
                if lambda <= 0.0 {
                    continue;
                }
                let count = Poisson::new(lambda)
                    .map_err(|e| Error::Simulation {
                        step,
                        detail: format!("invalid jump intensity {lambda}: {e}"),
                    })?
                    .sample(&mut rng)
                    .round() as u64;
                if count == 0 {
                    continue;
                }
                let mark = nu.mark(j);
                let inc = field.k_at(&arg, &mark)? * eps;
                next += &inc * count as f64;
                if let Some(a) = acc.as_mut() {
                    for _ in 0..count {
                        a.add_jump(phi)?;
                    }
                }
                if record {
                    for _ in 0..count {
                        jump_log.push(JumpEvent {
                            step,
                            time: t,
                            atom: j,
                            mark: atom.mark.clone(),
                            increment: inc.clone(),
                        });
                    }
                }
            }
        }

        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                step,
                detail: format!("state became non-finite (previous state {:?})", state.as_slice()),
            });
        }

        if let Some(a) = acc.as_mut() {
            let tl = tilt.expect("accumulator implies tilt");
            let mut comp_mass = 0.0;
            if !tl.phi.is_zero() {
                for (j, atom) in nu.atoms().iter().enumerate() {
                    comp_mass += tl.phi.at(t, j)? * atom.mass;
                }
            }
            a.push_step(xi.as_ref().expect("tilt implies xi"), &dw, dt, comp_mass);
        }
        if record {
            states.push(next.clone());
            increments.push(dw);
        }
        state = next;
    }

    let log_density = acc.map_or(0.0, |a| a.log_density(eps));
    let traj = record.then(|| Trajectory {
        times,
        states,
        increments,
        jump_log,
        seed,
    });
    Ok(PathOutput {
        traj,
        terminal: state,
        log_density,
    })
}

/// Simulate one trajectory. Identical `(field, nu, cfg)` give a
/// bitwise-identical result; the path uses the same derived seed as path 0
/// of `simulate_batch`.
pub fn simulate(field: &CoefficientField, nu: &LevyMeasure, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate(field, nu, None)?;
    let out = run_path(field, nu, cfg, None, path_seed(cfg.seed, 0), true)?;
    Ok(out.traj.expect("recording was requested"))
}

/// Simulate `n_paths` trajectories, optionally under a tilt. Each path owns
/// a seed derived from (cfg.seed, index), so the batch is reproducible and
/// order-stable no matter how the paths are scheduled. The second element
/// of each pair is the importance weight log dP/dP_hat, i.e. exactly
/// -log_density(tilt, trajectory); zero when no tilt is given.
pub fn simulate_batch(
    field: &CoefficientField,
    nu: &LevyMeasure,
    cfg: &SimConfig,
    n_paths: usize,
    tilt: Option<&Tilt>,
) -> Result<Vec<(Trajectory, f64)>> {
    cfg.validate(field, nu, tilt)?;
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let out = run_path(field, nu, cfg, tilt, path_seed(cfg.seed, i as u64), true)?;
            let traj = out.traj.expect("recording was requested");
            let weight = match tilt {
                Some(tl) => -log_density(tl, &traj, field, nu, cfg.regime)?,
                None => 0.0,
            };
            Ok((traj, weight))
        })
        .collect()
}

/// Terminal states and importance weights without storing paths; the weight
/// is accumulated during simulation in the same order `log_density` uses,
/// so it matches the full-trajectory value bitwise.
pub(crate) fn simulate_terminal_batch(
    field: &CoefficientField,
    nu: &LevyMeasure,
    cfg: &SimConfig,
    n_paths: usize,
    tilt: Option<&Tilt>,
) -> Result<Vec<(DVector<f64>, f64)>> {
    cfg.validate(field, nu, tilt)?;
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let out = run_path(field, nu, cfg, tilt, path_seed(cfg.seed, i as u64), false)?;
            Ok((out.terminal, -out.log_density))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{JumpKernel, MatrixField, NuAtom, ScalarField, VectorField};
    use crate::measure_change::{JumpIntensityField, XiField};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn unit_regime() -> ScaleRegime {
        ScaleRegime::new(1.0, 1.0).unwrap()
    }

    fn noiseless(d: usize) -> CoefficientField {
        CoefficientField::new(
            MatrixField::diagonal(&vec![0.0; d]),
            VectorField::zero(d),
            VectorField::zero(d),
            JumpKernel::Zero,
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_stays_put() {
        let field = noiseless(2);
        let nu = LevyMeasure::empty();
        let cfg = SimConfig::new(1.0, dvector![0.4, -0.7], unit_regime(), 5).with_dt(0.05);
        let traj = simulate(&field, &nu, &cfg).unwrap();
        assert!(traj.states.iter().all(|s| *s == dvector![0.4, -0.7]));
        assert!(traj.jump_log.is_empty());
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn pure_drift_is_exact_for_euler() {
        let c = VectorField(vec![
            ScalarField::Constant { value: 1.5 },
            ScalarField::Constant { value: -0.25 },
        ]);
        let field = noiseless(2).with_drift(c);
        let nu = LevyMeasure::empty();
        let cfg = SimConfig::new(2.0, dvector![1.0, 0.0], unit_regime(), 5).with_dt(0.01);
        let traj = simulate(&field, &nu, &cfg).unwrap();
        for (i, t) in traj.times.iter().enumerate() {
            assert_relative_eq!(traj.states[i][0], 1.0 + 1.5 * t, max_relative = 1e-12);
            assert_relative_eq!(traj.states[i][1], -0.25 * t, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn euler_tracks_rk4_oracle_at_first_order() {
        // ODE x' = (sin 2 pi x_1, 0); Euler sup-error should halve with dt.
        let c = VectorField(vec![
            ScalarField::Sinusoid {
                offset: 0.0,
                amplitude: 1.0,
                frequency: vec![1, 0],
                phase: 0.0,
            },
            ScalarField::zero(),
        ]);
        let field = noiseless(2).with_drift(c);
        let nu = LevyMeasure::empty();
        let f = |x: &DVector<f64>| dvector![(2.0 * std::f64::consts::PI * x[0]).sin(), 0.0];
        let rk4 = |x0: &DVector<f64>, t_end: f64, n: usize| {
            let h = t_end / n as f64;
            let mut x = x0.clone();
            for _ in 0..n {
                let k1 = f(&x);
                let k2 = f(&(&x + &k1 * (h / 2.0)));
                let k3 = f(&(&x + &k2 * (h / 2.0)));
                let k4 = f(&(&x + &k3 * h));
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            x
        };
        let sup_err = |dt: f64| {
            let cfg = SimConfig::new(1.0, dvector![0.3, 0.0], unit_regime(), 1).with_dt(dt);
            let traj = simulate(&field, &nu, &cfg).unwrap();
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(&t, s)| {
                    if t == 0.0 {
                        0.0
                    } else {
                        (s - rk4(&dvector![0.3, 0.0], t, 2000)).norm()
                    }
                })
                .fold(0.0f64, f64::max)
        };
        let e1 = sup_err(0.01);
        let e2 = sup_err(0.005);
        assert!(e1 < 0.05, "Euler error {e1} too large");
        let ratio = e1 / e2;
        assert!((1.6..2.4).contains(&ratio), "error ratio {ratio} not first order");
    }

    #[test]
    fn jump_count_matches_poisson_mean() {
        let field = noiseless(1).with_jump(JumpKernel::Mark);
        let nu = LevyMeasure::new(vec![NuAtom { mark: vec![1.0], mass: 2.0 }]).unwrap();
        let regime = ScaleRegime::new(0.5, 0.5f64.sqrt()).unwrap();
        let n_paths = 10_000usize;
        let chunk = 1000;
        let mut total = 0usize;
        for c in 0..(n_paths / chunk) {
            let cfg = SimConfig::new(1.0, dvector![0.0], regime, 300 + c as u64).with_dt(0.01);
            for (traj, _) in simulate_batch(&field, &nu, &cfg, chunk, None).unwrap() {
                total += traj.jump_log.len();
            }
        }
        let mean = total as f64 / n_paths as f64;
        let expect = 2.0 * 1.0 / 0.5; // mass * T / eps
        let se = (expect / n_paths as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "mean jump count {mean} vs {expect} (3 SE = {})",
            3.0 * se
        );
    }

    #[test]
    fn compensated_jumps_average_to_zero() {
        // sigma = b = c = 0, k(x,y) = y: X_T - x0 is the compensated jump
        // integral, a mean-zero martingale.
        let field = noiseless(1).with_jump(JumpKernel::Mark);
        let nu = LevyMeasure::new(vec![NuAtom { mark: vec![1.0], mass: 2.0 }]).unwrap();
        let regime = ScaleRegime::new(0.5, 0.5f64.sqrt()).unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.0], regime, 88).with_dt(0.01);
        let n_paths = 10_000;
        let outs = simulate_terminal_batch(&field, &nu, &cfg, n_paths, None).unwrap();
        let terminals: Vec<f64> = outs.iter().map(|(s, _)| s[0]).collect();
        let mean = terminals.iter().sum::<f64>() / n_paths as f64;
        let var = terminals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths as f64 - 1.0);
        let se = (var / n_paths as f64).sqrt();
        assert!(
            mean.abs() <= 3.0 * se,
            "compensated mean {mean} beyond 3 SE {se}"
        );
    }

    #[test]
    fn weak_error_shrinks_with_dt() {
        // E[X_T] under a curved drift: the Euler bias gap between dt and
        // dt/2 shrinks as dt falls.
        let c = VectorField(vec![ScalarField::Sinusoid {
            offset: 0.0,
            amplitude: 2.0,
            frequency: vec![1],
            phase: 0.5,
        }]);
        let sigma = MatrixField::diagonal(&[0.2]);
        let field =
            CoefficientField::new(sigma, VectorField::zero(1), c, JumpKernel::Zero).unwrap();
        let nu = LevyMeasure::empty();
        let mean_at = |dt: f64| {
            let cfg = SimConfig::new(1.0, dvector![0.3], unit_regime(), 424).with_dt(dt);
            let outs = simulate_terminal_batch(&field, &nu, &cfg, 100_000, None).unwrap();
            outs.iter().map(|(s, _)| s[0]).sum::<f64>() / outs.len() as f64
        };
        let m = [mean_at(0.1), mean_at(0.05), mean_at(0.025), mean_at(0.0125)];
        let gaps = [
            (m[0] - m[1]).abs(),
            (m[1] - m[2]).abs(),
            (m[2] - m[3]).abs(),
        ];
        assert!(
            gaps[0] > gaps[1] && gaps[1] > gaps[2],
            "weak-error gaps not decreasing: {gaps:?}"
        );
    }

    #[test]
    fn identical_seeds_are_bitwise_identical() {
        let field = CoefficientField::oscillating_sigma(1, 1.0, 0.4)
            .with_jump(JumpKernel::Mark);
        let nu = LevyMeasure::new(vec![NuAtom { mark: vec![0.5], mass: 1.0 }]).unwrap();
        let regime = ScaleRegime::new(0.25, 0.5).unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.1], regime, 99).with_dt(0.005);
        let a = simulate(&field, &nu, &cfg).unwrap();
        let b = simulate(&field, &nu, &cfg).unwrap();
        assert_eq!(a, b);
        let batch = simulate_batch(&field, &nu, &cfg, 4, None).unwrap();
        assert_eq!(batch[0].0, a, "batch path 0 must equal the single-path run");
        let batch2 = simulate_batch(&field, &nu, &cfg, 4, None).unwrap();
        assert_eq!(batch, batch2);
    }

    #[test]
    fn zero_tilt_reproduces_untilted_paths() {
        let field = CoefficientField::gaussian(1).with_jump(JumpKernel::Mark);
        let nu = LevyMeasure::new(vec![NuAtom { mark: vec![1.0], mass: 1.0 }]).unwrap();
        let regime = ScaleRegime::new(0.5, 0.5f64.sqrt()).unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.0], regime, 7).with_dt(0.01);
        let plain = simulate_batch(&field, &nu, &cfg, 3, None).unwrap();
        let tilt = Tilt::identity(1);
        let tilted = simulate_batch(&field, &nu, &cfg, 3, Some(&tilt)).unwrap();
        for ((ta, wa), (tb, wb)) in plain.iter().zip(&tilted) {
            assert_eq!(ta, tb);
            assert_eq!(*wa, 0.0);
            assert_eq!(*wb, 0.0);
        }
    }

    #[test]
    fn tilted_weights_normalize_and_match_terminal_stream() {
        let field = CoefficientField::gaussian(1);
        let nu = LevyMeasure::empty();
        let regime = ScaleRegime::new(0.5, 0.5f64.sqrt()).unwrap();
        let tilt = Tilt::new(
            XiField::Constant { value: dvector![0.6] },
            JumpIntensityField::Zero,
        )
        .unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.0], regime, 1234).with_dt(0.01);
        let n_paths = 10_000;
        let full = simulate_batch(&field, &nu, &cfg, 200, Some(&tilt)).unwrap();
        let stream = simulate_terminal_batch(&field, &nu, &cfg, 200, Some(&tilt)).unwrap();
        for ((traj, w_full), (term, w_stream)) in full.iter().zip(&stream) {
            assert_eq!(traj.terminal(), term);
            assert_eq!(w_full, w_stream, "streamed weight must match post-hoc density");
        }
        // E_{P_hat}[dP/dP_hat] = 1.
        let outs = simulate_terminal_batch(&field, &nu, &cfg, n_paths, Some(&tilt)).unwrap();
        let ws: Vec<f64> = outs.iter().map(|(_, w)| w.exp()).collect();
        let mean = ws.iter().sum::<f64>() / n_paths as f64;
        let var = ws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths as f64 - 1.0);
        let se = (var / n_paths as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se,
            "weight normalization {mean} off by more than 3 SE {se}"
        );
    }

    #[test]
    fn tilted_process_tracks_its_target() {
        use crate::action::LatticePath;
        use crate::measure_change::tilt_from_target;
        let field = CoefficientField::gaussian(1);
        let nu = LevyMeasure::empty();
        let regime = ScaleRegime::new(0.1, 0.1f64.sqrt()).unwrap();
        let psi = LatticePath::straight_line(1.0, 16, &dvector![0.0], &dvector![1.5]).unwrap();
        let tilt = tilt_from_target(&field, &nu, regime, &psi, None).unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.0], regime, 31).with_dt(0.01);
        let outs = simulate_terminal_batch(&field, &nu, &cfg, 4000, Some(&tilt)).unwrap();
        let mean = outs.iter().map(|(s, _)| s[0]).sum::<f64>() / outs.len() as f64;
        // Terminal mean = 1.5; fluctuation scale sqrt(eps T / n).
        let se = (0.1f64 / 4000.0).sqrt();
        assert!(
            (mean - 1.5).abs() <= 4.0 * se,
            "tilted mean {mean} does not track target 1.5"
        );
    }

    #[test]
    fn jump_budget_overflow_is_a_config_error() {
        let field = noiseless(1).with_jump(JumpKernel::Mark);
        let nu = LevyMeasure::new(vec![NuAtom { mark: vec![1.0], mass: 5.0 }]).unwrap();
        let regime = ScaleRegime::new(1e-4, 1e-2).unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.0], regime, 1).with_dt(0.1);
        match simulate(&field, &nu, &cfg) {
            Err(Error::Config(msg)) => assert!(msg.contains("reduce dt"), "message: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn blow_up_names_the_step() {
        let c = VectorField(vec![ScalarField::Constant { value: 1e308 }]);
        let field = noiseless(1).with_drift(c);
        let nu = LevyMeasure::empty();
        let cfg = SimConfig::new(2.0, dvector![0.0], unit_regime(), 1).with_dt(1.0);
        match simulate(&field, &nu, &cfg) {
            Err(Error::Simulation { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected simulation error, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_has_header_states_and_jump_counts() {
        let field = noiseless(1).with_jump(JumpKernel::Mark);
        let nu = LevyMeasure::new(vec![NuAtom { mark: vec![1.0], mass: 4.0 }]).unwrap();
        let regime = ScaleRegime::new(0.5, 0.5f64.sqrt()).unwrap();
        let cfg = SimConfig::new(1.0, dvector![0.25], regime, 6).with_dt(0.05);
        let traj = simulate(&field, &nu, &cfg).unwrap();
        assert!(!traj.jump_log.is_empty());
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,x1,cum_jumps");
        assert_eq!(text.lines().count(), traj.times.len() + 1);
        let last = text.lines().last().unwrap();
        let cum: usize = last.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(cum, traj.jump_log.len());
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0,0.25,"), "first row: {first}");
    }
}
