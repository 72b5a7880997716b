//! Effective Hamiltonian tables and everything derived from them: the
//! macroscopic velocity `DH(0)`, the Lagrangian `L = H*`, path rates, and the
//! structural diagnostics (normalization, convexity, symmetry, coercivity).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::averaged_hop_rates;
use crate::eigen::{assemble, principal_eigenpair, Discretization, EigenCertificate, EigenParams};
use crate::error::{Error, Result};
use crate::model::{grid_point, validate, Model, Regime};

/// Default spatial resolution per axis for continuous models.
pub const DEFAULT_GRID: usize = 128;
/// Default finite-difference step for `DH(0)`.
pub const DEFAULT_VELOCITY_STEP: f64 = 1e-3;

const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub grid: usize,
    pub eigen: EigenParams,
    pub scheme: Discretization,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { grid: DEFAULT_GRID, eigen: EigenParams::default(), scheme: Discretization::default() }
    }
}

impl SolverParams {
    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.eigen.tol = tol;
        self
    }

    pub fn with_scheme(mut self, scheme: Discretization) -> Self {
        self.scheme = scheme;
        self
    }
}

/// `H(p)` for the model's regime, with its eigen certificate.
pub fn hamiltonian_at(model: &Model, p: &[f64], params: &SolverParams) -> Result<(f64, EigenCertificate)> {
    let op = assemble(model, p, params.grid, params.scheme)?;
    let cert = principal_eigenpair(&op, &params.eigen)?;
    Ok((cert.eigenvalue, cert))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub kind: &'static str,
    pub regime: Regime,
    pub states: usize,
    pub grid: Option<usize>,
    pub tol: f64,
    pub scheme: Option<Discretization>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleFailure {
    pub index: usize,
    pub momentum: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianTable {
    pub dim: usize,
    pub momenta: Vec<Vec<f64>>,
    /// `NaN` marks a failed sample (see `failures`).
    pub values: Vec<f64>,
    pub certificates: Vec<Option<EigenCertificate>>,
    pub failures: Vec<SampleFailure>,
    pub provenance: Provenance,
}

impl HamiltonianTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// Builds a table from explicit values (no certificates), e.g. for
    /// tabulating a closed form.
    pub fn from_values(momenta: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        assert_eq!(momenta.len(), values.len());
        let dim = momenta.first().map_or(1, Vec::len);
        let n = values.len();
        Self {
            dim,
            momenta,
            values,
            certificates: vec![None; n],
            failures: Vec::new(),
            provenance: Provenance { kind: "tabulated", regime: Regime::Comparable, states: 1, grid: None, tol: 0.0, scheme: None },
        }
    }

    pub fn from_fn_1d(ps: &[f64], h: impl Fn(f64) -> f64) -> Self {
        Self::from_values(ps.iter().map(|&p| vec![p]).collect(), ps.iter().map(|&p| h(p)).collect())
    }

    /// Value at momentum `p`, if sampled.
    pub fn value_at(&self, p: &[f64]) -> Option<f64> {
        self.momenta
            .iter()
            .position(|q| q.len() == p.len() && q.iter().zip(p).all(|(a, b)| (a - b).abs() <= MATCH_TOL))
            .map(|i| self.values[i])
            .filter(|v| v.is_finite())
    }

    /// Sorted `(coordinate, value)` pairs of the samples on the axis line
    /// through 0 in direction `axis`.
    pub fn axis_line(&self, axis: usize) -> Vec<(f64, f64)> {
        let mut line: Vec<(f64, f64)> = self
            .momenta
            .iter()
            .zip(&self.values)
            .filter(|(p, v)| v.is_finite() && p.iter().enumerate().all(|(a, &x)| a == axis || x == 0.0))
            .map(|(p, &v)| (p[axis], v))
            .collect();
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        line
    }

    pub fn max_residual(&self) -> f64 {
        self.certificates.iter().flatten().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn max_cw_gap(&self) -> f64 {
        self.certificates.iter().flatten().map(|c| c.gap()).fold(0.0, f64::max)
    }

    /// Writes `p,H,residual,cw_gap` rows (`p1,...,pd` columns for `d > 1`).
    /// Failed samples carry the marker `gap`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = if self.dim == 1 { vec!["p".into()] } else { (1..=self.dim).map(|a| format!("p{a}")).collect() };
        header.extend(["H", "residual", "cw_gap"].map(String::from));
        out.write_record(&header)?;
        for (p, cert) in self.momenta.iter().zip(&self.certificates) {
            let mut rec: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            match (cert, self.value_at(p)) {
                (Some(c), _) => rec.extend([format!("{}", c.eigenvalue), format!("{:e}", c.residual), format!("{:e}", c.gap())]),
                (None, Some(v)) => rec.extend([format!("{v}"), "0".into(), "0".into()]),
                (None, None) => rec.extend(["gap".into(), "gap".into(), "gap".into()]),
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `count` evenly spaced momenta on `[p_min, p_max]`, with 0 inserted if
/// missing. Returns the grid and whether 0 had to be added.
pub fn momentum_grid(p_min: f64, p_max: f64, count: usize) -> Result<(Vec<f64>, bool)> {
    if count < 3 || !(p_min < p_max) || !(p_min.is_finite() && p_max.is_finite()) {
        return Err(Error::Config(format!("momentum range [{p_min}, {p_max}] with {count} points is invalid (need p_min < p_max, count >= 3)")));
    }
    let step = (p_max - p_min) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count)
        .map(|k| {
            let p = p_min + (p_max - p_min) * k as f64 / (count - 1) as f64;
            if p.abs() < 1e-12 * step.max(1.0) { 0.0 } else { p }
        })
        .collect();
    let augmented = !grid.contains(&0.0);
    if augmented {
        grid.push(0.0);
        grid.sort_by(f64::total_cmp);
    }
    Ok((grid, augmented))
}

/// Evaluates `H` at each momentum independently (in parallel); failures are
/// recorded per sample and the table is still returned.
pub fn sweep_points(model: &Model, momenta: Vec<Vec<f64>>, params: &SolverParams) -> Result<HamiltonianTable> {
    validate(model).into_result()?;
    let dim = model.dim();
    if let Some(p) = momenta.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
    }
    let results: Vec<Result<(f64, EigenCertificate)>> = momenta.par_iter().map(|p| hamiltonian_at(model, p, params)).collect();
    let mut values = Vec::with_capacity(results.len());
    let mut certificates = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok((v, c)) => {
                values.push(v);
                certificates.push(Some(c));
            }
            Err(e) => {
                if e.is_input_error() {
                    return Err(e);
                }
                log::warn!("sample {index} at p={:?} failed: {e}", momenta[index]);
                failures.push(SampleFailure { index, momentum: momenta[index].clone(), message: e.to_string() });
                values.push(f64::NAN);
                certificates.push(None);
            }
        }
    }
    let (kind, grid, scheme) = match model {
        Model::Continuous(_) => ("continuous", Some(params.grid), Some(params.scheme)),
        Model::Discrete(_) => ("discrete", None, None),
    };
    Ok(HamiltonianTable {
        dim,
        momenta,
        values,
        certificates,
        failures,
        provenance: Provenance { kind, regime: model.regime(), states: model.states(), grid, tol: params.eigen.tol, scheme },
    })
}

/// Sweep along every coordinate axis through 0 (a single line for `d = 1`).
pub fn sweep(model: &Model, p_min: f64, p_max: f64, count: usize, params: &SolverParams) -> Result<HamiltonianTable> {
    let (line, augmented) = momentum_grid(p_min, p_max, count)?;
    if augmented {
        log::warn!("momentum grid [{p_min}, {p_max}] x {count} does not contain 0; inserted it");
    }
    let dim = model.dim();
    let mut momenta = vec![vec![0.0; dim]];
    for axis in 0..dim {
        for &x in line.iter().filter(|&&x| x != 0.0) {
            let mut p = vec![0.0; dim];
            p[axis] = x;
            momenta.push(p);
        }
    }
    if dim == 1 {
        momenta.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    sweep_points(model, momenta, params)
}

/// Sweep over the full `count^d` momentum lattice.
pub fn sweep_lattice(model: &Model, p_min: f64, p_max: f64, count: usize, params: &SolverParams) -> Result<HamiltonianTable> {
    let (line, _) = momentum_grid(p_min, p_max, count)?;
    let dim = model.dim();
    let m = line.len();
    let momenta = (0..m.pow(dim as u32))
        .map(|idx| crate::model::grid_multi_index(idx, m, dim).into_iter().map(|k| line[k]).collect())
        .collect();
    sweep_points(model, momenta, params)
}

// ---------------------------------------------------------------------------
// Velocity

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityEstimate {
    pub velocity: Vec<f64>,
    /// Difference between the two finite-difference levels, per axis.
    pub error: Vec<f64>,
    pub step: Vec<f64>,
}

/// `DH(0)` by central differences on the table's symmetric samples nearest to
/// 0, with one Richardson level from the next symmetric pair.
pub fn velocity(table: &HamiltonianTable) -> Result<VelocityEstimate> {
    let mut est = VelocityEstimate { velocity: Vec::new(), error: Vec::new(), step: Vec::new() };
    for axis in 0..table.dim {
        let line = table.axis_line(axis);
        let at = |q: f64| line.iter().find(|(x, _)| (x - q).abs() <= MATCH_TOL).map(|&(_, v)| v);
        if at(0.0).is_none() {
            return Err(Error::CoarseGrid(format!("axis {axis}: no sample at p=0")));
        }
        let pairs: Vec<(f64, f64)> = line
            .iter()
            .filter(|(x, _)| *x > MATCH_TOL)
            .filter_map(|&(x, v)| at(-x).map(|vm| (x, (v - vm) / (2.0 * x))))
            .take(2)
            .collect();
        match pairs.as_slice() {
            [] => return Err(Error::CoarseGrid(format!("axis {axis}: no symmetric pair around 0"))),
            [(d, slope)] => {
                est.velocity.push(*slope);
                est.error.push(f64::NAN);
                est.step.push(*d);
            }
            [(d1, s1), (d2, s2), ..] => {
                let r2 = (d2 / d1).powi(2);
                est.velocity.push((r2 * s1 - s2) / (r2 - 1.0));
                est.error.push((s1 - s2).abs());
                est.step.push(*d1);
            }
        }
    }
    Ok(est)
}

/// Sweeps `{0, +-delta, +-2 delta}` along every axis and returns `DH(0)`.
pub fn velocity_of(model: &Model, params: &SolverParams, delta: f64) -> Result<(VelocityEstimate, HamiltonianTable)> {
    let dim = model.dim();
    let mut momenta = vec![vec![0.0; dim]];
    for axis in 0..dim {
        for q in [-2.0 * delta, -delta, delta, 2.0 * delta] {
            let mut p = vec![0.0; dim];
            p[axis] = q;
            momenta.push(p);
        }
    }
    let table = sweep_points(model, momenta, params)?;
    Ok((velocity(&table)?, table))
}

// ---------------------------------------------------------------------------
// Legendre transform and path rates

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagrangianTable {
    pub velocities: Vec<f64>,
    pub values: Vec<f64>,
    /// Maximizing momentum per velocity.
    pub pstar: Vec<f64>,
    /// The supremum was attained at the edge of the momentum grid, so the
    /// value is only a lower bound.
    pub boundary: Vec<bool>,
}

impl LagrangianTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["v", "L", "pstar", "boundary_flag"])?;
        for i in 0..self.velocities.len() {
            out.write_record([
                format!("{}", self.velocities[i]),
                format!("{}", self.values[i]),
                format!("{}", self.pstar[i]),
                format!("{}", u8::from(self.boundary[i])),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Interpolated `L(v)` (quadratic through the three nearest nodes).
    pub fn interpolate(&self, v: f64) -> Result<f64> {
        let n = self.velocities.len();
        if n == 0 {
            return Err(Error::Path("empty Lagrangian table".into()));
        }
        let (lo, hi) = (self.velocities[0], self.velocities[n - 1]);
        if !(v >= lo - MATCH_TOL && v <= hi + MATCH_TOL) {
            return Err(Error::Path(format!("velocity {v} outside tabulated range [{lo}, {hi}]")));
        }
        if n < 3 {
            let i = if n > 1 && (v - lo).abs() > (v - hi).abs() { 1 } else { 0 };
            if self.boundary[i] {
                return Err(Error::Path(format!("L({v}) is unresolved (supremum at momentum-grid edge)")));
            }
            return Ok(self.values[i]);
        }
        let nearest = self.velocities.partition_point(|&x| x < v).min(n - 1);
        let centre = nearest.clamp(1, n - 2);
        let centre = if nearest > 0 && (v - self.velocities[nearest - 1]).abs() < (self.velocities[nearest] - v).abs() {
            (nearest - 1).clamp(1, n - 2)
        } else {
            centre
        };
        let idx = [centre - 1, centre, centre + 1];
        if let Some(&i) = idx.iter().find(|&&i| self.boundary[i]) {
            return Err(Error::Path(format!(
                "L({v}) is unresolved: the supremum for v={} is attained at the momentum-grid edge",
                self.velocities[i]
            )));
        }
        let x: Vec<f64> = idx.iter().map(|&i| self.velocities[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
        let mut out = 0.0;
        for a in 0..3 {
            let mut w = 1.0;
            for b in 0..3 {
                if a != b {
                    w *= (v - x[b]) / (x[a] - x[b]);
                }
            }
            out += w * y[a];
        }
        Ok(out)
    }
}

/// `L(v) = sup_p [p v - H(p)]` over the table's momentum line (`d = 1`), with
/// parabolic refinement around the discrete maximizer.
pub fn legendre(table: &HamiltonianTable, v_grid: &[f64]) -> Result<LagrangianTable> {
    if table.dim != 1 {
        return Err(Error::Config("legendre() needs a one-dimensional table; use legendre_lattice for d > 1".into()));
    }
    let line = table.axis_line(0);
    if line.len() < 3 {
        return Err(Error::CoarseGrid("need at least three samples for a Legendre transform".into()));
    }
    let mut out = LagrangianTable { velocities: Vec::new(), values: Vec::new(), pstar: Vec::new(), boundary: Vec::new() };
    for &v in v_grid {
        let f: Vec<f64> = line.iter().map(|&(p, h)| p * v - h).collect();
        let m = (0..f.len()).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
        let edge = m == 0 || m == f.len() - 1;
        let (mut value, mut pstar) = (f[m], line[m].0);
        if !edge {
            if let Some((pv, fv)) = parabola_vertex(
                [line[m - 1].0, line[m].0, line[m + 1].0],
                [f[m - 1], f[m], f[m + 1]],
            ) {
                value = fv.max(value);
                pstar = pv;
            }
        }
        out.velocities.push(v);
        out.values.push(value);
        out.pstar.push(pstar);
        out.boundary.push(edge);
    }
    Ok(out)
}

/// Vertex of the parabola through three points, if it is a maximum lying
/// between the outer abscissae.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d12 - d01) / (x[2] - x[0]);
    if !(a < 0.0) {
        return None;
    }
    let b = d01 - a * (x[0] + x[1]);
    let xv = -b / (2.0 * a);
    if xv < x[0] || xv > x[2] {
        return None;
    }
    let yv = y[1] + (xv - x[1]) * (d01 + a * (xv - x[0]));
    Some((xv, yv))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeLagrangian {
    pub velocity: Vec<f64>,
    pub value: f64,
    pub pstar: Vec<f64>,
    pub boundary: bool,
}

/// Discrete `sup_p [p . v - H(p)]` over a full momentum lattice (`d >= 1`).
/// The boundary flag is set when the maximizer lies on the lattice hull.
pub fn legendre_lattice(table: &HamiltonianTable, velocities: &[Vec<f64>]) -> Result<Vec<LatticeLagrangian>> {
    let d = table.dim;
    let finite: Vec<usize> = (0..table.len()).filter(|&i| table.values[i].is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::CoarseGrid("empty table".into()));
    }
    let bounds: Vec<(f64, f64)> = (0..d)
        .map(|a| {
            finite.iter().map(|&i| table.momenta[i][a]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        })
        .collect();
    velocities
        .iter()
        .map(|v| {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            let (best, value) = finite
                .iter()
                .map(|&i| (i, table.momenta[i].iter().zip(v).map(|(p, x)| p * x).sum::<f64>() - table.values[i]))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let pstar = table.momenta[best].clone();
            let boundary = pstar.iter().zip(&bounds).any(|(&p, &(lo, hi))| p <= lo + MATCH_TOL || p >= hi - MATCH_TOL);
            Ok(LatticeLagrangian { velocity: v.clone(), value, pstar, boundary })
        })
        .collect()
}

/// Action of a piecewise-linear path with knots `(t_k, x_k)`:
/// `initial_rate + sum_k (t_{k+1} - t_k) L((x_{k+1} - x_k) / (t_{k+1} - t_k))`.
pub fn path_rate(knots: &[(f64, f64)], lagrangian: &LagrangianTable, initial_rate: f64) -> Result<f64> {
    if knots.is_empty() {
        return Err(Error::Path("path needs at least one knot".into()));
    }
    if let Some(w) = knots.windows(2).find(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Path(format!("knot times must be strictly increasing ({} then {})", w[0].0, w[1].0)));
    }
    if initial_rate == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let mut total = initial_rate;
    for w in knots.windows(2) {
        let dt = w[1].0 - w[0].0;
        let v = (w[1].1 - w[0].1) / dt;
        total += dt * lagrangian.interpolate(v)?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// `max H(mid) - interpolation of its neighbours`; `<= 0` means convex.
    pub max_violation: f64,
    pub location: Option<Vec<f64>>,
}

/// Midpoint convexity along every axis line (weighted for non-uniform spacing).
pub fn convexity_report(table: &HamiltonianTable) -> ConvexityReport {
    let mut report = ConvexityReport { max_violation: f64::NEG_INFINITY, location: None };
    for axis in 0..table.dim {
        let line = table.axis_line(axis);
        for w in line.windows(3) {
            let (l, m, r) = (w[0], w[1], w[2]);
            let chord = ((r.0 - m.0) * l.1 + (m.0 - l.0) * r.1) / (r.0 - l.0);
            let viol = m.1 - chord;
            if viol > report.max_violation {
                report.max_violation = viol;
                let mut p = vec![0.0; table.dim];
                p[axis] = m.0;
                report.location = Some(p);
            }
        }
    }
    if report.location.is_none() {
        report.max_violation = 0.0;
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub max_residual: f64,
    pub location: Option<Vec<f64>>,
    pub pairs: usize,
}

/// `max |H(p) - H(-p)|` over sampled `+-p` pairs.
pub fn symmetry_check(table: &HamiltonianTable) -> SymmetryReport {
    let mut report = SymmetryReport { max_residual: 0.0, location: None, pairs: 0 };
    for (p, &v) in table.momenta.iter().zip(&table.values) {
        if !v.is_finite() || p.iter().all(|&x| x == 0.0) {
            continue;
        }
        let neg: Vec<f64> = p.iter().map(|x| -x).collect();
        if let Some(vm) = table.value_at(&neg) {
            report.pairs += 1;
            let r = (v - vm).abs();
            if report.location.is_none() || r > report.max_residual {
                report.max_residual = r;
                report.location = Some(p.clone());
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub holds: bool,
    /// `min_p H(p) - bound(p)`.
    pub min_margin: f64,
    pub location: Option<Vec<f64>>,
}

/// Checks the model's coercivity lower bound at every sample.
///
/// Continuous: `H(p) >= |p|^2 / 4 - sup |grad psi|^2`. Discrete: `H(p) >=
/// min_{k,i} [r_+ (e^p - 1) + r_- (e^{-p} - 1)]`, the Collatz-Wielandt bound
/// of the constant test vector (averaged rates in regime II).
pub fn coercivity_check(table: &HamiltonianTable, model: &Model) -> Result<CoercivityReport> {
    let slack = |h: f64| (10.0 * table.provenance.tol * (1.0 + h.abs())).max(1e-8);
    let bound: Box<dyn Fn(&[f64]) -> f64> = match model {
        Model::Continuous(m) => {
            let n = 4 * table.provenance.grid.unwrap_or(DEFAULT_GRID);
            let n = if m.dim == 1 { n } else { n.min(256) };
            let h = m.period / n as f64;
            let mut g2: f64 = 0.0;
            for s in 0..n.pow(m.dim as u32) {
                let y = grid_point(s, n, m.dim, h);
                for psi in &m.potentials {
                    g2 = g2.max(psi.gradient_unchecked(&y).iter().map(|g| g * g).sum());
                }
            }
            Box::new(move |p: &[f64]| 0.25 * p.iter().map(|x| x * x).sum::<f64>() - g2)
        }
        Model::Discrete(m) => {
            let rates: Vec<(f64, f64)> = match m.regime {
                Regime::Comparable => (0..m.states())
                    .flat_map(|i| (0..m.sites).map(move |k| (m.hop_plus[i][k], m.hop_minus[i][k])))
                    .collect(),
                Regime::Averaged => (0..m.sites).map(|k| averaged_hop_rates(m, k)).collect::<Result<_>>()?,
            };
            Box::new(move |p: &[f64]| {
                let (up, down) = (p[0].exp() - 1.0, (-p[0]).exp() - 1.0);
                rates.iter().map(|(rp, rm)| rp * up + rm * down).fold(f64::INFINITY, f64::min)
            })
        }
    };
    let mut report = CoercivityReport { holds: true, min_margin: f64::INFINITY, location: None };
    for (p, &h) in table.momenta.iter().zip(&table.values) {
        if !h.is_finite() {
            continue;
        }
        let margin = h - bound(p);
        if margin < report.min_margin {
            report.min_margin = margin;
            report.location = Some(p.clone());
        }
        if margin < -slack(h) {
            report.holds = false;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub value: f64,
    pub holds: bool,
}

/// `|H(0)| <= 10 tol`.
pub fn normalization_check(table: &HamiltonianTable) -> Result<NormalizationReport> {
    let zero = vec![0.0; table.dim];
    let value = table.value_at(&zero).ok_or_else(|| Error::CoarseGrid("table has no sample at p=0".into()))?;
    let tol = if table.provenance.tol > 0.0 { table.provenance.tol } else { crate::eigen::DEFAULT_TOL };
    Ok(NormalizationReport { value, holds: value.abs() <= 10.0 * tol })
}

// ---------------------------------------------------------------------------
// Grid refinement

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRefinement {
    pub grids: Vec<usize>,
    pub values: Vec<f64>,
    /// Observed order from the last three levels (`None` with fewer levels or
    /// when the differences are at round-off).
    pub observed_order: Option<f64>,
    pub extrapolated: f64,
    pub error_estimate: f64,
}

/// `H(p)` at several resolutions (each twice the previous) plus a Richardson
/// extrapolation; continuous models only.
pub fn grid_refinement(model: &Model, p: &[f64], grids: &[usize], params: &SolverParams) -> Result<GridRefinement> {
    if !matches!(model, Model::Continuous(_)) {
        return Err(Error::Config("grid refinement applies to continuous models".into()));
    }
    if grids.len() < 2 {
        return Err(Error::Config("grid refinement needs at least two resolutions".into()));
    }
    let values = grids
        .par_iter()
        .map(|&n| hamiltonian_at(model, p, &params.with_grid(n)).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let k = values.len();
    let ratio = grids[k - 1] as f64 / grids[k - 2] as f64;
    let observed_order = (k >= 3)
        .then(|| {
            let (e1, e2) = (values[k - 2] - values[k - 3], values[k - 1] - values[k - 2]);
            let r_prev = grids[k - 2] as f64 / grids[k - 3] as f64;
            ((e1 / e2).abs().ln() / r_prev.ln(), e2.abs() > 1e-13)
        })
        .filter(|&(_, meaningful)| meaningful)
        .map(|(o, _)| o);
    let order = observed_order.filter(|o| o.is_finite() && *o > 0.5).unwrap_or(2.0);
    let factor = ratio.powf(order);
    let extrapolated = (factor * values[k - 1] - values[k - 2]) / (factor - 1.0);
    Ok(GridRefinement {
        grids: grids.to_vec(),
        values: values.clone(),
        observed_order,
        extrapolated,
        error_estimate: (extrapolated - values[k - 1]).abs(),
    })
}
