//! Jump-chain utilities for the chemical states: generators, stationary
//! measures, detailed balance and the averaged coefficients of regime II.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{grid_point, strongly_connected, ContinuousModel, DiscreteModel, SwitchingRateMatrix};

/// Default sampling resolution per axis for [`detailed_balance_report`].
pub const DETAILED_BALANCE_GRID: usize = 256;
/// Relative tolerance for detailed balance.
pub const DETAILED_BALANCE_TOL: f64 = 1e-10;

/// Generator of the chemical jump chain: `Q_ij = r_ij` off the diagonal and
/// `Q_ii = -sum_{j != i} r_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    states: usize,
    data: Vec<f64>,
}

impl GeneratorMatrix {
    /// Builds a generator from off-diagonal rates. Negative rates are rejected.
    pub fn from_rates(states: usize, rate: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; states * states];
        for i in 0..states {
            let mut exit = 0.0;
            for j in 0..states {
                if i == j {
                    continue;
                }
                let r = rate(i, j);
                if r < 0.0 || r.is_nan() {
                    return Err(Error::NegativeRate { from: i, to: j, value: r });
                }
                data[i * states + j] = r;
                exit += r;
            }
            data[i * states + i] = -exit;
        }
        Ok(Self { states, data })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.states + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.states).map(<[f64]>::to_vec).collect()
    }

    /// Row sums, accumulated off-diagonal first (which makes them exactly zero).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.states)
            .map(|i| {
                let off: f64 = (0..self.states).filter(|&j| j != i).map(|j| self.get(i, j)).sum();
                off + self.get(i, i)
            })
            .collect()
    }

    pub fn is_irreducible(&self) -> bool {
        strongly_connected(self.states, |i, j| self.get(i, j) > 0.0)
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn generator_at(rates: &SwitchingRateMatrix, y: &[f64]) -> Result<GeneratorMatrix> {
    GeneratorMatrix::from_rates(rates.states(), |i, j| rates.rate(i, j, y))
}

fn site_generator(model: &DiscreteModel, k: usize) -> Result<GeneratorMatrix> {
    GeneratorMatrix::from_rates(model.states(), |i, j| model.switch_rate(i, j, k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryMeasure {
    pub weights: Vec<f64>,
}

impl StationaryMeasure {
    /// `max_j |(mu^T Q)_j|`.
    pub fn residual(&self, q: &GeneratorMatrix) -> f64 {
        let j = q.states();
        (0..j)
            .map(|b| (0..j).map(|a| self.weights[a] * q.get(a, b)).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Unique invariant probability vector of an irreducible generator.
///
/// Solves `Q^T mu = 0` with the last equation replaced by `sum mu = 1`.
pub fn stationary_measure(q: &GeneratorMatrix) -> Result<StationaryMeasure> {
    let j = q.states();
    if j == 1 {
        return Ok(StationaryMeasure { weights: vec![1.0] });
    }
    if !q.is_irreducible() {
        return Err(Error::Reducible { location: "in stationary measure computation".into() });
    }
    let mut a = DMatrix::from_fn(j, j, |r, c| q.get(c, r));
    for c in 0..j {
        a[(j - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(j);
    rhs[j - 1] = 1.0;
    let mu = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Reducible { location: "(singular stationary system)".into() })?;
    // clamp rounding noise; irreducible chains have strictly positive weights
    let mut weights: Vec<f64> = mu.iter().map(|&w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let measure = StationaryMeasure { weights };
    debug_assert!(measure.residual(q) <= 1e-12 * q.max_abs().max(1.0));
    Ok(measure)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetailedBalanceReport {
    pub holds: bool,
    pub max_violation: f64,
    /// Largest term magnitude `r_ij e^{-2 psi_i}` seen; the tolerance is relative to it.
    pub scale: f64,
}

/// Checks `r_ij(x) e^{-2 psi_i(x)} = r_ji(x) e^{-2 psi_j(x)}` on a `grid^d` lattice.
pub fn detailed_balance_report(model: &ContinuousModel, grid: usize) -> DetailedBalanceReport {
    let j = model.states();
    let mut max_violation: f64 = 0.0;
    let mut scale: f64 = 0.0;
    if j > 1 {
        let h = model.period / grid as f64;
        let total = grid.pow(model.dim as u32);
        let mut weight = vec![0.0; j];
        for idx in 0..total {
            let y = grid_point(idx, grid, model.dim, h);
            for (w, psi) in weight.iter_mut().zip(&model.potentials) {
                *w = (-2.0 * psi.value_unchecked(&y)).exp();
            }
            for a in 0..j {
                for b in (a + 1)..j {
                    let lhs = model.rates.rate(a, b, &y) * weight[a];
                    let rhs = model.rates.rate(b, a, &y) * weight[b];
                    scale = scale.max(lhs.abs()).max(rhs.abs());
                    max_violation = max_violation.max((lhs - rhs).abs());
                }
            }
        }
    }
    let holds = max_violation <= DETAILED_BALANCE_TOL * scale.max(1.0);
    DetailedBalanceReport { holds, max_violation, scale }
}

/// `sum_i mu_y(i) grad psi_i(y)`: the averaged potential gradient. The
/// effective drift in regime II is its negative.
pub fn averaged_drift(model: &ContinuousModel, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: y.len() });
    }
    let q = generator_at(&model.rates, y)?;
    let mu = stationary_measure(&q).map_err(|e| match e {
        Error::Reducible { .. } => Error::Reducible { location: format!("at y={y:?}") },
        other => other,
    })?;
    let mut drift = vec![0.0; model.dim];
    for (w, psi) in mu.weights.iter().zip(&model.potentials) {
        for (d, g) in drift.iter_mut().zip(psi.gradient_unchecked(y)) {
            *d += w * g;
        }
    }
    Ok(drift)
}

/// Stationary measure of the chemical chain at site `k` of a discrete model.
pub fn site_measure(model: &DiscreteModel, k: usize) -> Result<StationaryMeasure> {
    let q = site_generator(model, k)?;
    stationary_measure(&q).map_err(|e| match e {
        Error::Reducible { .. } => Error::Reducible { location: format!("at site {k}") },
        other => other,
    })
}

/// `(sum_i mu_k(i) r_plus_i(k), sum_i mu_k(i) r_minus_i(k))`.
pub fn averaged_hop_rates(model: &DiscreteModel, k: usize) -> Result<(f64, f64)> {
    let mu = site_measure(model, k)?;
    let plus = mu.weights.iter().enumerate().map(|(i, w)| w * model.hop_plus[i][k]).sum();
    let minus = mu.weights.iter().enumerate().map(|(i, w)| w * model.hop_minus[i][k]).sum();
    Ok((plus, minus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PeriodicScalarField, Regime};

    fn two_state() -> GeneratorMatrix {
        GeneratorMatrix::from_rates(2, |i, _| if i == 0 { 1.0 } else { 2.0 }).unwrap()
    }

    #[test]
    fn generator_construction() {
        assert_eq!(two_state().rows(), vec![vec![-1.0, 1.0], vec![2.0, -2.0]]);
        let single = GeneratorMatrix::from_rates(1, |_, _| 1.0).unwrap();
        assert_eq!(single.rows(), vec![vec![0.0]]);
        let complete = GeneratorMatrix::from_rates(3, |_, _| 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(complete.get(i, j), if i == j { -2.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let err = GeneratorMatrix::from_rates(2, |i, _| if i == 1 { -0.5 } else { 1.0 }).unwrap_err();
        assert!(matches!(err, Error::NegativeRate { from: 1, to: 0, .. }));
    }

    #[test]
    fn two_state_measure() {
        let mu = stationary_measure(&two_state()).unwrap();
        assert!((mu.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((mu.weights[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_rates_give_uniform_measure() {
        let q = GeneratorMatrix::from_rates(5, |_, _| 0.7).unwrap();
        let mu = stationary_measure(&q).unwrap();
        for w in mu.weights {
            assert!((w - 0.2).abs() < 1e-14);
        }
        assert_eq!(stationary_measure(&GeneratorMatrix::from_rates(1, |_, _| 0.0).unwrap()).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn reducible_generator_is_an_error() {
        let q = GeneratorMatrix::from_rates(3, |i, j| if i == 2 || j == 2 { 0.0 } else { 1.0 }).unwrap();
        assert!(matches!(stationary_measure(&q), Err(Error::Reducible { .. })));
    }

    fn constant_rates(r12: f64, r21: f64) -> SwitchingRateMatrix {
        SwitchingRateMatrix::constant(1, &[vec![0.0, r12], vec![r21, 0.0]])
    }

    #[test]
    fn detailed_balance_cases() {
        let single = ContinuousModel::single(PeriodicScalarField::fourier_1d(&[(1, 1.0, 0.0)]));
        let r = detailed_balance_report(&single, 64);
        assert!(r.holds && r.max_violation == 0.0);

        let flat = ContinuousModel::new(
            vec![PeriodicScalarField::zero(1), PeriodicScalarField::zero(1)],
            constant_rates(1.0, 2.0),
            Regime::Comparable,
        );
        let r = detailed_balance_report(&flat, 64);
        assert!(!r.holds);
        assert!((r.max_violation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn averaged_drift_of_tilted_pair() {
        let model = ContinuousModel::new(
            vec![PeriodicScalarField::affine(vec![1.0]), PeriodicScalarField::affine(vec![-1.0])],
            constant_rates(1.0, 2.0),
            Regime::Averaged,
        );
        let f = averaged_drift(&model, &[0.4]).unwrap();
        assert!((f[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn averaged_drift_of_equal_potentials() {
        let psi = PeriodicScalarField::fourier_1d(&[(1, 0.3, 0.8), (2, -0.1, 0.0)]);
        let model = ContinuousModel::new(vec![psi.clone(), psi.clone(), psi.clone()], {
            SwitchingRateMatrix::from_fn(3, |i, j| Some(PeriodicScalarField::fourier_1d(&[(0, 1.0 + i as f64, 0.0), (1, 0.5, 0.1 * j as f64)])))
        }, Regime::Averaged);
        for &y in &[0.0, 0.31, 0.77] {
            let f = averaged_drift(&model, &[y]).unwrap();
            assert!((f[0] - psi.gradient(&[y]).unwrap()[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn averaged_hop_rates_cases() {
        let m = DiscreteModel::constant_walk(3, 2.0, 0.5);
        assert_eq!(averaged_hop_rates(&m, 1).unwrap(), (2.0, 0.5));

        let mut sw = vec![vec![vec![0.0; 2]; 2]; 2];
        sw[0][1] = vec![1.0; 2];
        sw[1][0] = vec![2.0; 2];
        let m = DiscreteModel::new(vec![vec![3.0; 2], vec![0.6; 2]], vec![vec![1.0; 2]; 2], sw, Regime::Averaged);
        let (plus, minus) = averaged_hop_rates(&m, 0).unwrap();
        assert!((plus - 2.2).abs() < 1e-14);
        assert!((minus - 1.0).abs() < 1e-14);
    }
}
