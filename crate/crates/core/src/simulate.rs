//! Monte Carlo sampling of the switching processes at finite scale.
//!
//! Positions live on the universal cover so that displacements and velocities
//! are well defined. Every trajectory draws from its own ChaCha8 stream
//! `(base seed, trajectory index)`, so batches are reproducible and
//! independent of scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{velocity_of, SolverParams, DEFAULT_VELOCITY_STEP};
use crate::model::{validate, ContinuousModel, DiscreteModel, Model};

/// Default Euler step as a fraction of `epsilon`.
pub const DEFAULT_DT_FRACTION: f64 = 1.0 / 20.0;

fn exp_sample<R: Rng>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub stream: u64,
    /// `epsilon` for continuous models, `1/n` for discrete ones.
    pub scale: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub states: Vec<usize>,
    pub switches: usize,
    pub hops: usize,
}

impl Trajectory {
    fn new(seed: u64, stream: u64, scale: f64, x: Vec<f64>, i: usize) -> Self {
        Self { seed, stream, scale, times: vec![0.0], positions: vec![x], states: vec![i], switches: 0, hops: 0 }
    }

    fn record(&mut self, t: f64, x: &[f64], i: usize) {
        self.times.push(t);
        self.positions.push(x.to_vec());
        self.states.push(i);
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn displacement(&self) -> Vec<f64> {
        let (a, b) = (&self.positions[0], self.positions.last().unwrap());
        b.iter().zip(a).map(|(x, y)| x - y).collect()
    }

    /// `(X_T - X_0) / T`.
    pub fn velocity(&self) -> Vec<f64> {
        let t = self.duration();
        self.displacement().into_iter().map(|d| d / t).collect()
    }

    /// `t,x_lifted,i` rows (`x1,...,xd` for `d > 1`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.positions[0].len();
        let mut header = vec!["t".to_string()];
        if d == 1 {
            header.push("x_lifted".into());
        } else {
            header.extend((1..=d).map(|a| format!("x{a}_lifted")));
        }
        header.push("i".into());
        out.write_record(&header)?;
        for ((t, x), i) in self.times.iter().zip(&self.positions).zip(&self.states) {
            let mut rec = vec![format!("{t}")];
            rec.extend(x.iter().map(|v| format!("{v}")));
            rec.push(format!("{i}"));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousSimParams {
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    pub start: Vec<f64>,
    pub start_state: usize,
    /// Record every `k`-th Euler step; 0 keeps only the endpoints and jumps.
    pub record_stride: usize,
    /// Keep the position fixed (used to test the switching mechanism alone).
    pub freeze_position: bool,
}

impl ContinuousSimParams {
    pub fn new(epsilon: f64, horizon: f64, dim: usize) -> Self {
        Self {
            epsilon,
            horizon,
            dt: epsilon * DEFAULT_DT_FRACTION,
            start: vec![0.0; dim],
            start_state: 0,
            record_stride: 0,
            freeze_position: false,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

fn euler_step<R: Rng>(model: &ContinuousModel, x: &mut [f64], i: usize, dt: f64, eps: f64, rng: &mut R) {
    let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
    let grad = model.potentials[i].gradient_unchecked(&y);
    let noise = (eps * dt).sqrt();
    for (xa, ga) in x.iter_mut().zip(grad) {
        let xi: f64 = StandardNormal.sample(rng);
        *xa += -ga * dt + noise * xi;
    }
}

/// Euler-Maruyama for `dX = -grad psi_I(X/eps) dt + sqrt(eps) dB` with
/// switching `i -> j` at rate `(gamma/eps) r_ij(X/eps)`, realized by thinning
/// against a global rate bound.
pub fn simulate_continuous(model: &ContinuousModel, params: &ContinuousSimParams, seed: u64, stream: u64) -> Result<Trajectory> {
    let eps = params.epsilon;
    if !(eps > 0.0) || !(params.horizon > 0.0) {
        return Err(Error::Config(format!("need epsilon > 0 and T > 0, got {eps} and {}", params.horizon)));
    }
    if !(params.dt > 0.0) || params.dt > eps / 10.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!("dt = {} must be positive and at most epsilon/10 = {}", params.dt, eps / 10.0)));
    }
    if params.start.len() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: params.start.len() });
    }
    let j = model.states();
    if params.start_state >= j {
        return Err(Error::Config(format!("start state {} out of range", params.start_state)));
    }
    let speed = model.gamma / eps;
    let mut bound = 0.0f64;
    for i in 0..j {
        let b = model.rates.exit_rate_bound(i).ok_or_else(|| Error::Config("switching rates must be periodic".into()))?;
        bound = bound.max(b);
    }
    let lambda = speed * bound;

    let mut rng = trajectory_rng(seed, stream);
    let mut x = params.start.clone();
    let mut i = params.start_state;
    let mut traj = Trajectory::new(seed, stream, eps, x.clone(), i);
    let mut t = 0.0;
    let mut step = 0usize;
    let mut next_candidate = if lambda > 0.0 { exp_sample(&mut rng) / lambda } else { f64::INFINITY };
    let mut weights = vec![0.0; j];
    let total_steps = (params.horizon / params.dt).ceil() as usize;
    while step < total_steps {
        let step_end = ((step + 1) as f64 * params.dt).min(params.horizon);
        if next_candidate < step_end {
            if !params.freeze_position {
                euler_step(model, &mut x, i, next_candidate - t, eps, &mut rng);
            }
            t = next_candidate;
            let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
            let mut exit = 0.0;
            for (jj, w) in weights.iter_mut().enumerate() {
                *w = if jj == i { 0.0 } else { model.rates.rate(i, jj, &y).max(0.0) };
                exit += *w;
            }
            let u: f64 = rng.random();
            if u * bound < exit {
                let mut target = rng.random::<f64>() * exit;
                let mut next = i;
                for (jj, &w) in weights.iter().enumerate() {
                    if w > 0.0 {
                        next = jj;
                        if target < w {
                            break;
                        }
                        target -= w;
                    }
                }
                i = next;
                traj.switches += 1;
                traj.record(t, &x, i);
            }
            next_candidate = t + exp_sample(&mut rng) / lambda;
        } else {
            if !params.freeze_position {
                euler_step(model, &mut x, i, step_end - t, eps, &mut rng);
            }
            t = step_end;
            step += 1;
            if params.record_stride > 0 && step.is_multiple_of(params.record_stride) && step < total_steps {
                traj.record(t, &x, i);
            }
        }
    }
    traj.record(t, &x, i);
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSimParams {
    pub n: u32,
    pub horizon: f64,
    pub start_site: i64,
    pub start_state: usize,
    /// Record every event; otherwise only the endpoints.
    pub record_events: bool,
}

impl DiscreteSimParams {
    pub fn new(n: u32, horizon: f64) -> Self {
        Self { n, horizon, start_site: 0, start_state: 0, record_events: false }
    }
}

/// Exact simulation (competing exponential clocks) of the lattice process
/// with hops `+-1/n` at rates `n r_+-(site)` and switching at `n gamma r_ij(site)`.
pub fn simulate_discrete(model: &DiscreteModel, params: &DiscreteSimParams, seed: u64, stream: u64) -> Result<Trajectory> {
    if params.n == 0 || !(params.horizon > 0.0) {
        return Err(Error::Config("need n >= 1 and T > 0".into()));
    }
    let j = model.states();
    if params.start_state >= j {
        return Err(Error::Config(format!("start state {} out of range", params.start_state)));
    }
    let n = params.n as f64;
    let l = model.sites as i64;
    let mut rng = trajectory_rng(seed, stream);
    let mut m = params.start_site;
    let mut i = params.start_state;
    let mut traj = Trajectory::new(seed, stream, 1.0 / n, vec![m as f64 / n], i);
    let mut t = 0.0;
    loop {
        let k = m.rem_euclid(l) as usize;
        let plus = n * model.hop_plus[i][k];
        let minus = n * model.hop_minus[i][k];
        let switching: f64 = (0..j).map(|jj| model.switch_rate(i, jj, k)).sum::<f64>() * n * model.gamma;
        let total = plus + minus + switching;
        let wait = exp_sample(&mut rng) / total;
        if t + wait > params.horizon {
            break;
        }
        t += wait;
        let u = rng.random::<f64>() * total;
        if u < plus {
            m += 1;
            traj.hops += 1;
        } else if u < plus + minus {
            m -= 1;
            traj.hops += 1;
        } else {
            let mut target = (u - plus - minus) / (n * model.gamma);
            let mut next = i;
            for jj in (0..j).filter(|&jj| jj != i) {
                let w = model.switch_rate(i, jj, k);
                if w > 0.0 {
                    next = jj;
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            i = next;
            traj.switches += 1;
        }
        if params.record_events {
            traj.record(t, &[m as f64 / n], i);
        }
    }
    traj.record(params.horizon, &[m as f64 / n], i);
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Batches

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scale {
    Epsilon(f64),
    Lattice(u32),
}

impl Scale {
    pub fn epsilon(&self) -> f64 {
        match *self {
            Scale::Epsilon(e) => e,
            Scale::Lattice(n) => 1.0 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchConfig {
    pub horizon: f64,
    pub paths: usize,
    pub base_seed: u64,
    /// Euler step as a fraction of `epsilon` (continuous models).
    pub dt_fraction: f64,
    /// Velocity component reported for `d > 1`.
    pub axis: usize,
}

impl BatchConfig {
    pub fn new(horizon: f64, paths: usize, base_seed: u64) -> Self {
        Self { horizon, paths, base_seed, dt_fraction: DEFAULT_DT_FRACTION, axis: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryBatch {
    pub scale: Scale,
    pub velocities: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub switches: usize,
    pub hops: usize,
}

/// Simulates `config.paths` independent trajectories (trajectory `k` uses
/// stream `k` of `config.base_seed`) and summarizes their velocities.
pub fn simulate_batch(model: &Model, scale: Scale, config: &BatchConfig) -> Result<TrajectoryBatch> {
    if config.paths < 2 {
        return Err(Error::Config("a batch needs at least two paths".into()));
    }
    let run = |k: usize| -> Result<Trajectory> {
        match (model, scale) {
            (Model::Continuous(m), Scale::Epsilon(eps)) => {
                let p = ContinuousSimParams::new(eps, config.horizon, m.dim).with_dt(eps * config.dt_fraction);
                simulate_continuous(m, &p, config.base_seed, k as u64)
            }
            (Model::Discrete(m), Scale::Lattice(n)) => {
                simulate_discrete(m, &DiscreteSimParams::new(n, config.horizon), config.base_seed, k as u64)
            }
            _ => Err(Error::Config("continuous models take epsilon scales, discrete models take lattice scales".into())),
        }
    };
    let trajectories = (0..config.paths).into_par_iter().map(run).collect::<Result<Vec<_>>>()?;
    let axis = config.axis.min(model.dim() - 1);
    let velocities: Vec<f64> = trajectories.iter().map(|t| t.velocity()[axis]).collect();
    let count = velocities.len() as f64;
    let mean = velocities.iter().sum::<f64>() / count;
    let var = velocities.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    let sd = var.sqrt();
    Ok(TrajectoryBatch {
        scale,
        mean,
        sd,
        se: sd / count.sqrt(),
        switches: trajectories.iter().map(|t| t.switches).sum(),
        hops: trajectories.iter().map(|t| t.hops).sum(),
        velocities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSummary {
    pub epsilon: f64,
    pub mean_v: f64,
    pub sd: f64,
    pub se: f64,
    pub predicted_v: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub rows: Vec<ScaleSummary>,
    /// Standard deviations strictly decrease along the scale list.
    pub sd_monotone: bool,
}

impl ConcentrationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict)
    }

    /// `epsilon,mean_v,sd,se,predicted_v,verdict`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epsilon", "mean_v", "sd", "se", "predicted_v", "verdict"])?;
        for r in &self.rows {
            out.write_record([
                format!("{}", r.epsilon),
                format!("{}", r.mean_v),
                format!("{}", r.sd),
                format!("{}", r.se),
                format!("{}", r.predicted_v),
                (if r.verdict { "pass" } else { "fail" }).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs a batch per scale (coarse to fine) and compares the mean velocity
/// with `predicted`: a scale passes when `|mean - predicted| <= max(3 SE, floor)`.
pub fn concentration_experiment(
    model: &Model,
    scales: &[Scale],
    config: &BatchConfig,
    predicted: f64,
    floor: f64,
) -> Result<ConcentrationReport> {
    validate(model).into_result()?;
    if scales.windows(2).any(|w| !(w[1].epsilon() < w[0].epsilon())) {
        return Err(Error::Config("scales must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let batch = simulate_batch(model, scale, config)?;
        let tolerance = (3.0 * batch.se).max(floor);
        rows.push(ScaleSummary {
            epsilon: scale.epsilon(),
            mean_v: batch.mean,
            sd: batch.sd,
            se: batch.se,
            predicted_v: predicted,
            verdict: (batch.mean - predicted).abs() <= tolerance,
        });
    }
    let sd_monotone = rows.windows(2).all(|w| w[1].sd < w[0].sd);
    Ok(ConcentrationReport { rows, sd_monotone })
}

/// [`concentration_experiment`] with the prediction `DH(0)` computed from
/// the cell problem.
pub fn concentration_with_prediction(
    model: &Model,
    scales: &[Scale],
    config: &BatchConfig,
    solver: &SolverParams,
    floor: f64,
) -> Result<ConcentrationReport> {
    let (v, _) = velocity_of(model, solver, DEFAULT_VELOCITY_STEP)?;
    let axis = config.axis.min(model.dim() - 1);
    concentration_experiment(model, scales, config, v.velocity[axis], floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PeriodicScalarField, Regime, SwitchingRateMatrix};
    use crate::presets;

    #[test]
    fn reproducible_given_seed() {
        let m = presets::two_state_flashing();
        let p = ContinuousSimParams::new(0.05, 0.5, 1);
        let a = simulate_continuous(&m, &p, 7, 3).unwrap();
        let b = simulate_continuous(&m, &p, 7, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_continuous(&m, &p, 7, 4).unwrap();
        assert_ne!(a.positions.last(), c.positions.last());
    }

    #[test]
    fn no_switching_keeps_state() {
        let m = ContinuousModel::new(
            vec![PeriodicScalarField::fourier_1d(&[(1, 1.0, 0.0)]), PeriodicScalarField::zero(1)],
            SwitchingRateMatrix::none(2),
            Regime::Comparable,
        );
        let mut p = ContinuousSimParams::new(0.1, 1.0, 1);
        p.record_stride = 5;
        let t = simulate_continuous(&m, &p, 1, 0).unwrap();
        assert!(t.states.iter().all(|&i| i == 0));
        assert_eq!(t.switches, 0);
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(t.times[0], 0.0);
        assert!((t.duration() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dt_must_resolve_fast_scale() {
        let m = presets::constant_drift(1.0);
        let p = ContinuousSimParams::new(0.1, 1.0, 1).with_dt(0.05);
        assert!(matches!(simulate_continuous(&m, &p, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn discrete_walk_jump_accounting() {
        let m = presets::discrete_asymmetric(2.0, 1.0);
        let mut p = DiscreteSimParams::new(100, 1.0);
        p.record_events = true;
        let t = simulate_discrete(&m, &p, 5, 0).unwrap();
        assert_eq!(t.times.len(), t.hops + t.switches + 2);
        for w in t.positions.windows(2).take(t.positions.len() - 2) {
            assert!(((w[1][0] - w[0][0]).abs() - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_csv_header() {
        let t = simulate_discrete(&presets::discrete_asymmetric(1.0, 1.0), &DiscreteSimParams::new(10, 0.2), 0, 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x_lifted,i\n"));
    }

    #[test]
    fn scales_must_decrease() {
        let m: Model = presets::constant_drift(1.0).into();
        let cfg = BatchConfig::new(0.1, 4, 0);
        let r = concentration_experiment(&m, &[Scale::Epsilon(0.05), Scale::Epsilon(0.1)], &cfg, 1.0, 0.0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
