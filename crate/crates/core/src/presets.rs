//! Named scenarios and random model generators.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ContinuousModel, DiscreteModel, Model, PeriodicScalarField, Regime, SwitchingRateMatrix};

/// Names accepted by [`by_name`].
pub const PRESET_NAMES: &[&str] = &[
    "constant_drift(F)",
    "quadratic",
    "tilted_cosine(F)",
    "two_state_flashing",
    "discrete_asymmetric(r+,r-)",
    "detailed_balance_pair",
];

/// `psi(y) = -F y`: a particle pushed by a constant force `F`.
/// `H(p) = (p + F)^2 / 2 - F^2 / 2`.
pub fn constant_drift(force: f64) -> ContinuousModel {
    ContinuousModel::single(PeriodicScalarField::affine(vec![-force]))
}

/// `psi(y) = cos(2 pi y) / 4 - F y`.
pub fn tilted_cosine(force: f64) -> ContinuousModel {
    ContinuousModel::single(PeriodicScalarField::fourier_1d(&[(1, 0.25, 0.0)]).with_slope(vec![-force]))
}

/// Two shifted cosine potentials, `psi_1 = cos(2 pi y)` and
/// `psi_2 = cos(2 pi (y - 1/4))`, with position-dependent switching that
/// breaks detailed balance and produces directed motion.
pub fn two_state_flashing() -> ContinuousModel {
    let psi1 = PeriodicScalarField::fourier_1d(&[(1, 1.0, 0.0)]);
    let psi2 = PeriodicScalarField::fourier_1d(&[(1, 0.0, 1.0)]);
    // 1 -> 2 is fast near the bottom of psi_1, 2 -> 1 near its top
    let r12 = PeriodicScalarField::fourier_1d(&[(0, 3.0, 0.0), (1, -2.5, 0.0)]);
    let r21 = PeriodicScalarField::fourier_1d(&[(0, 3.0, 0.0), (1, 2.5, 0.0)]);
    let mut rates = SwitchingRateMatrix::none(2);
    rates.set(0, 1, Some(r12));
    rates.set(1, 0, Some(r21));
    ContinuousModel::new(vec![psi1, psi2], rates, Regime::Comparable)
}

/// Single-state walk on a 4-site torus with constant hop rates.
pub fn discrete_asymmetric(plus: f64, minus: f64) -> DiscreteModel {
    DiscreteModel::constant_walk(4, plus, minus)
}

/// Two states with `r_ij = sigma e^{2 psi_i}`, which satisfies detailed balance.
pub fn detailed_balance_pair() -> ContinuousModel {
    let psi1 = PeriodicScalarField::fourier_1d(&[(1, 0.5, 0.0)]);
    let psi2 = PeriodicScalarField::fourier_1d(&[(1, 0.0, 0.3), (2, 0.2, 0.0)]);
    detailed_balance_family(vec![psi1, psi2], &[vec![0.0, 1.5], vec![1.5, 0.0]])
}

/// Rates `r_ij = sigma_ij e^{2 psi_i}` for a symmetric `sigma`.
pub fn detailed_balance_family(potentials: Vec<PeriodicScalarField>, sigma: &[Vec<f64>]) -> ContinuousModel {
    let j = potentials.len();
    let rates = SwitchingRateMatrix::from_fn(j, |a, b| {
        let s = sigma[a][b];
        (s > 0.0).then(|| potentials[a].clone().with_exp(s, 2.0))
    });
    ContinuousModel::new(potentials, rates, Regime::Comparable)
}

fn parse_args(name: &str) -> Result<(&str, Vec<f64>)> {
    let name = name.trim();
    match name.find('(') {
        None => Ok((name, Vec::new())),
        Some(open) => {
            let inner = name[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("malformed preset '{name}'")))?;
            let args = inner
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad preset argument '{s}'"))))
                .collect::<Result<Vec<_>>>()?;
            Ok((name[..open].trim(), args))
        }
    }
}

/// Looks up a preset such as `constant_drift(1)` or `discrete_asymmetric(2,1)`.
pub fn by_name(name: &str) -> Result<Model> {
    let (base, args) = parse_args(name)?;
    let arg = |i: usize, default: f64| args.get(i).copied().unwrap_or(default);
    Ok(match base {
        "constant_drift" => constant_drift(arg(0, 1.0)).into(),
        "quadratic" => constant_drift(0.0).into(),
        "tilted_cosine" => tilted_cosine(arg(0, 1.0)).into(),
        "two_state_flashing" => two_state_flashing().into(),
        "discrete_asymmetric" => discrete_asymmetric(arg(0, 2.0), arg(1, 1.0)).into(),
        "detailed_balance_pair" => detailed_balance_pair().into(),
        other => {
            return Err(Error::Config(format!("unknown preset '{other}'; known presets: {}", PRESET_NAMES.join(", "))));
        }
    })
}

// ---------------------------------------------------------------------------
// Random models

/// Smooth periodic field with modes `1..=modes` and coefficients of size at
/// most `amplitude / modes`.
pub fn random_field<R: Rng + ?Sized>(rng: &mut R, modes: i32, amplitude: f64) -> PeriodicScalarField {
    let scale = amplitude / modes as f64;
    let coeffs: Vec<(i32, f64, f64)> = (1..=modes)
        .map(|k| (k, rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect();
    PeriodicScalarField::fourier_1d(&coeffs)
}

/// Strictly positive periodic rate field with values in roughly `[lo, hi]`.
pub fn random_rate_field<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> PeriodicScalarField {
    let mean = rng.random_range(lo..hi);
    let wiggle = 0.5 * (mean - 0.5 * lo).max(0.0);
    let a = rng.random_range(-1.0..1.0) * wiggle * 0.7;
    let b = rng.random_range(-1.0..1.0) * wiggle * 0.7;
    PeriodicScalarField::fourier_1d(&[(0, mean, 0.0), (1, a, b)])
}

/// Random one-dimensional continuous model with `states` chemical states and
/// everywhere-positive switching rates.
pub fn random_continuous<R: Rng + ?Sized>(rng: &mut R, states: usize, regime: Regime) -> ContinuousModel {
    let potentials = (0..states).map(|_| random_field(rng, 2, 0.6)).collect();
    let rates = SwitchingRateMatrix::from_fn(states, |_, _| Some(random_rate_field(rng, 0.5, 3.0)));
    ContinuousModel::new(potentials, rates, regime)
}

/// Random discrete model on `sites` sites with positive hop and switching rates.
pub fn random_discrete<R: Rng + ?Sized>(rng: &mut R, sites: usize, states: usize, regime: Regime) -> DiscreteModel {
    let hop = |rng: &mut R| (0..states).map(|_| (0..sites).map(|_| rng.random_range(0.3..3.0)).collect()).collect();
    let plus = hop(rng);
    let minus = hop(rng);
    let switching = (0..states)
        .map(|i| {
            (0..states)
                .map(|j| (0..sites).map(|_| if i == j { 0.0 } else { rng.random_range(0.2..2.0) }).collect())
                .collect()
        })
        .collect();
    DiscreteModel::new(plus, minus, switching, regime)
}

/// Random detailed-balance model: random potentials and a random symmetric
/// positive `sigma`, `r_ij = sigma_ij e^{2 psi_i}`.
pub fn random_detailed_balance<R: Rng + ?Sized>(rng: &mut R, states: usize) -> ContinuousModel {
    let potentials: Vec<_> = (0..states).map(|_| random_field(rng, 2, 0.8)).collect();
    let mut sigma = vec![vec![0.0; states]; states];
    for a in 0..states {
        for b in (a + 1)..states {
            let s = rng.random_range(0.3..2.0);
            sigma[a][b] = s;
            sigma[b][a] = s;
        }
    }
    detailed_balance_family(potentials, &sigma)
}

/// Two-state model that breaks detailed balance through unequal constant
/// rates and a tilted potential.
pub fn random_unbalanced<R: Rng + ?Sized>(rng: &mut R) -> ContinuousModel {
    let force = rng.random_range(0.3..1.0);
    let potentials = (0..2)
        .map(|_| random_field(rng, 2, 0.6).with_slope(vec![-force]))
        .collect();
    let r12 = rng.random_range(0.5..1.0);
    let r21 = rng.random_range(1.5..3.0);
    ContinuousModel::new(potentials, SwitchingRateMatrix::constant(1, &[vec![0.0, r12], vec![r21, 0.0]]), Regime::Comparable)
}

/// Regime II model with constant switching rates and random potentials.
pub fn random_constant_rate_family<R: Rng + ?Sized>(rng: &mut R, states: usize) -> ContinuousModel {
    let potentials = (0..states).map(|_| random_field(rng, 3, 1.0)).collect();
    let table: Vec<Vec<f64>> = (0..states)
        .map(|a| (0..states).map(|b| if a == b { 0.0 } else { rng.random_range(0.2..3.0) }).collect())
        .collect();
    ContinuousModel::new(potentials, SwitchingRateMatrix::constant(1, &table), Regime::Averaged)
}

/// Phase shift helper: the 1-d field `amplitude * cos(2 pi (y - shift))`.
pub fn shifted_cosine(amplitude: f64, shift: f64) -> PeriodicScalarField {
    let phase = 2.0 * PI * shift;
    PeriodicScalarField::fourier_1d(&[(1, amplitude * phase.cos(), amplitude * phase.sin())])
}
