//! Cell-problem operators and their principal eigenpairs.
//!
//! Every model/regime combination is discretized into a finite Metzler
//! matrix `M_p` whose principal eigenvalue approximates `H(p)`:
//!
//! * discrete, regime I: the tilted generator on `(site, state)` with hop
//!   entries `r_+ e^p`, `r_- e^{-p}` and switching entries `gamma r_ij`;
//! * discrete, regime II: the tilted generator of the averaged walk;
//! * continuous: a grid of `N^d` points per chemical state.
//!
//! Two continuous schemes are provided. [`Discretization::ExponentialTilt`]
//! discretizes the spatial generator as a nearest-neighbour chain with rates
//! `exp(-(psi(y') - psi(y))) / (2 h^2)`, reversible with respect to
//! `e^{-2 psi}`, and tilts each jump by `e^{p . (y' - y)}`. It is second order,
//! unconditionally Metzler, and keeps `H(p) = H(-p)` exact under detailed
//! balance. [`Discretization::CentralDifference`] is the textbook stencil for
//! `1/2 Lap + (p - grad psi) . grad + 1/2 |p|^2 - p . grad psi`; it is exact for
//! constant drift but only Metzler under the Peclet condition `h |b| <= 1`.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{averaged_drift, averaged_hop_rates, generator_at, stationary_measure};
use crate::error::{Error, Result};
use crate::model::{grid_multi_index, grid_point, ContinuousModel, DiscreteModel, Model, Regime};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    #[default]
    ExponentialTilt,
    CentralDifference,
}

/// Matrix index `site * states + state`; sites are row-major multi-indices
/// on a `grid^dim` lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexLayout {
    pub grid: usize,
    pub dim: usize,
    pub states: usize,
}

impl IndexLayout {
    pub fn len(&self) -> usize {
        self.grid.pow(self.dim as u32) * self.states
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, site: usize, state: usize) -> usize {
        site * self.states + state
    }

    /// `(site multi-index, state)` of a matrix index.
    pub fn decode(&self, idx: usize) -> (Vec<usize>, usize) {
        (grid_multi_index(idx / self.states, self.grid, self.dim), idx % self.states)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorMeta {
    pub kind: &'static str,
    pub regime: Regime,
    pub momentum: Vec<f64>,
    pub grid: usize,
    pub scheme: Option<Discretization>,
}

/// Sparse row storage of a Metzler cell-problem matrix.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Row sums, computed from the model rather than by adding entries.
    sums: Vec<f64>,
    pub layout: IndexLayout,
    pub meta: OperatorMeta,
}

struct RowBuilder {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    sums: Vec<f64>,
    scratch: Vec<(usize, f64)>,
}

impl RowBuilder {
    fn new(n: usize, per_row: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            row_ptr,
            cols: Vec::with_capacity(n * per_row),
            vals: Vec::with_capacity(n * per_row),
            sums: Vec::with_capacity(n),
            scratch: Vec::with_capacity(per_row),
        }
    }

    fn add(&mut self, col: usize, val: f64) {
        self.scratch.push((col, val));
    }

    /// Closes the current row; `sum` is its exact row sum when known.
    fn finish_row(&mut self, sum: Option<f64>) {
        let r = self.row_ptr.len() - 1;
        let sum = sum.unwrap_or_else(|| {
            let off: f64 = self.scratch.iter().filter(|e| e.0 != r).map(|e| e.1).sum();
            off + self.scratch.iter().filter(|e| e.0 == r).map(|e| e.1).sum::<f64>()
        });
        self.sums.push(sum);
        self.scratch.sort_by_key(|e| e.0);
        let mut last = usize::MAX;
        for &(c, v) in &self.scratch {
            if c == last {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
                last = c;
            }
        }
        self.scratch.clear();
        self.row_ptr.push(self.cols.len());
    }

    fn build(self, layout: IndexLayout, meta: OperatorMeta) -> Result<AssembledOperator> {
        let op = AssembledOperator { row_ptr: self.row_ptr, cols: self.cols, vals: self.vals, sums: self.sums, layout, meta };
        op.check_metzler()?;
        if !op.is_irreducible() {
            return Err(Error::ReducibleOperator);
        }
        Ok(op)
    }
}

impl AssembledOperator {
    /// Builds an operator from a dense matrix (rows of equal length).
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut b = RowBuilder::new(n, n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.add(c, v);
                }
            }
            b.finish_row(None);
        }
        let layout = IndexLayout { grid: n, dim: 1, states: 1 };
        let meta = OperatorMeta { kind: "dense", regime: Regime::Comparable, momentum: Vec::new(), grid: n, scheme: None };
        b.build(layout, meta)
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut out = vec![vec![0.0; n]; n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.sums.clone()
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.len()).map(|r| self.get(r, r).abs()).fold(0.0, f64::max)
    }

    /// `out = M x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *o = self.cols[span.clone()].iter().zip(&self.vals[span]).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// `out = M x` evaluated as `s_r x_r + sum_c M_rc (x_c - x_r)` with the
    /// exact row sums `s_r`, which avoids cancelling the large diagonal against
    /// the neighbour entries.
    pub fn apply_centered(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let xr = x[r];
            let off: f64 = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .filter(|(&c, _)| c != r)
                .map(|(&c, &v)| v * (x[c] - xr))
                .sum();
            *o = self.sums[r] * xr + off;
        }
    }

    pub fn check_metzler(&self) -> Result<()> {
        for r in 0..self.len() {
            for (c, v) in self.row(r) {
                if !v.is_finite() || (c != r && v < 0.0) {
                    return Err(Error::NotMetzler { row: r, col: c, value: v });
                }
            }
        }
        Ok(())
    }

    /// Strong connectivity of the positive off-diagonal pattern.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        if n <= 1 {
            return true;
        }
        let mut reverse = vec![Vec::new(); n];
        for r in 0..n {
            for (c, v) in self.row(r) {
                if c != r && v > 0.0 {
                    reverse[c].push(r);
                }
            }
        }
        let bfs = |next: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            let mut count = 1;
            while let Some(a) = queue.pop_front() {
                for b in next(a) {
                    if !seen[b] {
                        seen[b] = true;
                        count += 1;
                        queue.push_back(b);
                    }
                }
            }
            count == n
        };
        let forward = |a: usize| self.row(a).filter(|&(c, v)| c != a && v > 0.0).map(|(c, _)| c).collect();
        let backward = |a: usize| reverse[a].clone();
        bfs(&forward) && bfs(&backward)
    }

    /// Writes `row col value` triplets, one per line, after a comment header.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} regime={} p={:?} grid={} n={}", self.meta.kind, self.meta.regime, self.meta.momentum, self.meta.grid, self.len())?;
        for r in 0..self.len() {
            for (c, v) in self.row(r) {
                writeln!(w, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Discrete assembly

fn check_p1(p: &[f64]) -> Result<f64> {
    match p {
        [x] => Ok(*x),
        _ => Err(Error::DimensionMismatch { expected: 1, got: p.len() }),
    }
}

/// Tilted generator of the discrete model in regime I (switching scaled by `gamma`).
pub fn assemble_discrete_comparable(model: &DiscreteModel, p: f64) -> Result<AssembledOperator> {
    let l = model.sites;
    let j = model.states();
    let layout = IndexLayout { grid: l, dim: 1, states: j };
    let (up, down) = (p.exp(), (-p).exp());
    let mut b = RowBuilder::new(l * j, j + 3);
    for k in 0..l {
        let (next, prev) = ((k + 1) % l, (k + l - 1) % l);
        for i in 0..j {
            let (rp, rm) = (model.hop_plus[i][k], model.hop_minus[i][k]);
            b.add(layout.index(next, i), rp * up);
            b.add(layout.index(prev, i), rm * down);
            let mut exit = rp + rm;
            for jj in 0..j {
                if jj != i {
                    let r = model.gamma * model.switch_rate(i, jj, k);
                    if r != 0.0 {
                        b.add(layout.index(k, jj), r);
                    }
                    exit += r;
                }
            }
            b.add(layout.index(k, i), -exit);
            b.finish_row(Some(rp * p.exp_m1() + rm * (-p).exp_m1()));
        }
    }
    let meta = OperatorMeta { kind: "discrete", regime: Regime::Comparable, momentum: vec![p], grid: l, scheme: None };
    b.build(layout, meta)
}

/// Tilted generator of the walk with hop rates averaged over the site-wise
/// stationary measure of the switching chain.
pub fn assemble_discrete_averaged(model: &DiscreteModel, p: f64) -> Result<AssembledOperator> {
    let l = model.sites;
    let layout = IndexLayout { grid: l, dim: 1, states: 1 };
    let (up, down) = (p.exp(), (-p).exp());
    let mut b = RowBuilder::new(l, 3);
    for k in 0..l {
        let (rp, rm) = averaged_hop_rates(model, k)?;
        b.add((k + 1) % l, rp * up);
        b.add((k + l - 1) % l, rm * down);
        b.add(k, -(rp + rm));
        b.finish_row(Some(rp * p.exp_m1() + rm * (-p).exp_m1()));
    }
    let meta = OperatorMeta { kind: "discrete", regime: Regime::Averaged, momentum: vec![p], grid: l, scheme: None };
    b.build(layout, meta)
}

// ---------------------------------------------------------------------------
// Continuous assembly

struct Grid {
    n: usize,
    dim: usize,
    h: f64,
    period: f64,
    points: usize,
}

impl Grid {
    fn new(model: &ContinuousModel, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid resolution must be at least 2, got {n}")));
        }
        Ok(Self { n, dim: model.dim, h: model.period / n as f64, period: model.period, points: n.pow(model.dim as u32) })
    }

    fn point(&self, s: usize) -> Vec<f64> {
        grid_point(s, self.n, self.dim, self.h)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Neighbour of site `s` along `axis`, and whether the step wrapped.
    fn neighbour(&self, s: usize, axis: usize, forward: bool) -> (usize, bool) {
        let stride = self.stride(axis);
        let m = (s / stride) % self.n;
        if forward {
            if m + 1 == self.n {
                (s - m * stride, true)
            } else {
                (s + stride, false)
            }
        } else if m == 0 {
            (s + (self.n - 1) * stride, true)
        } else {
            (s - stride, false)
        }
    }
}

/// `psi(y_t) - psi(y_s)` along the forward edge `s -> s + e_axis`, using the
/// lifted coordinate across the periodic seam.
fn forward_increment(values: &[f64], slope: &[f64], grid: &Grid, s: usize, axis: usize) -> f64 {
    let (t, wrapped) = grid.neighbour(s, axis, true);
    let d = values[t] - values[s];
    if wrapped {
        d + slope[axis] * grid.period
    } else {
        d
    }
}

fn check_momentum(model: &ContinuousModel, p: &[f64]) -> Result<()> {
    if p.len() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: p.len() });
    }
    Ok(())
}

fn psi_tables(model: &ContinuousModel, grid: &Grid) -> Vec<Vec<f64>> {
    model
        .potentials
        .iter()
        .map(|psi| (0..grid.points).map(|s| psi.value_unchecked(&grid.point(s))).collect())
        .collect()
}

fn peclet_check(grid: &Grid, max_drift: f64) -> Result<()> {
    if max_drift * grid.h > 1.0 {
        let min_grid = (grid.period * max_drift).ceil() as usize;
        return Err(Error::Peclet { grid: grid.n, max_drift, min_grid: min_grid.max(grid.n + 1) });
    }
    Ok(())
}

/// Regime I cell problem `[B_p + V_p + R] g = H(p) g` on an `N^d` grid.
pub fn assemble_continuous_comparable(
    model: &ContinuousModel,
    p: &[f64],
    n: usize,
    scheme: Discretization,
) -> Result<AssembledOperator> {
    check_momentum(model, p)?;
    let grid = Grid::new(model, n)?;
    let j = model.states();
    let d = model.dim;
    let layout = IndexLayout { grid: n, dim: d, states: j };
    let c = 1.0 / (2.0 * grid.h * grid.h);
    let half_p2: f64 = 0.5 * p.iter().map(|x| x * x).sum::<f64>();
    let tilt: Vec<(f64, f64)> = p.iter().map(|&pa| ((pa * grid.h).exp(), (-pa * grid.h).exp())).collect();
    let tilt_m1: Vec<(f64, f64)> = p.iter().map(|&pa| ((pa * grid.h).exp_m1(), (-pa * grid.h).exp_m1())).collect();

    let tables = match scheme {
        Discretization::ExponentialTilt => Some(psi_tables(model, &grid)),
        Discretization::CentralDifference => None,
    };
    let gradients: Option<Vec<Vec<Vec<f64>>>> = match scheme {
        Discretization::CentralDifference => {
            let g: Vec<Vec<Vec<f64>>> = model
                .potentials
                .iter()
                .map(|psi| (0..grid.points).map(|s| psi.gradient_unchecked(&grid.point(s))).collect())
                .collect();
            let max_drift = g
                .iter()
                .flatten()
                .flat_map(|gs| gs.iter().zip(p).map(|(ga, pa)| (pa - ga).abs()))
                .fold(0.0, f64::max);
            peclet_check(&grid, max_drift)?;
            Some(g)
        }
        Discretization::ExponentialTilt => None,
    };

    let mut b = RowBuilder::new(layout.len(), 2 * d + j + 1);
    for s in 0..grid.points {
        let y = grid.point(s);
        let switching: Vec<f64> = (0..j * j)
            .map(|e| {
                let (a, bb) = (e / j, e % j);
                if a == bb {
                    0.0
                } else {
                    model.gamma * model.rates.rate(a, bb, &y)
                }
            })
            .collect();
        for i in 0..j {
            let mut off = 0.0;
            let mut potential = 0.0;
            let mut sum = 0.0;
            match scheme {
                Discretization::ExponentialTilt => {
                    let vals = &tables.as_ref().unwrap()[i];
                    let slope = model.potentials[i].slope();
                    for axis in 0..d {
                        let (t_fwd, _) = grid.neighbour(s, axis, true);
                        let (t_bwd, _) = grid.neighbour(s, axis, false);
                        let up = forward_increment(vals, slope, &grid, s, axis);
                        let down = -forward_increment(vals, slope, &grid, t_bwd, axis);
                        let r_fwd = c * (-up).exp();
                        let r_bwd = c * (-down).exp();
                        b.add(layout.index(t_fwd, i), r_fwd * tilt[axis].0);
                        b.add(layout.index(t_bwd, i), r_bwd * tilt[axis].1);
                        off += r_fwd + r_bwd;
                        sum += r_fwd * tilt_m1[axis].0 + r_bwd * tilt_m1[axis].1;
                    }
                }
                Discretization::CentralDifference => {
                    let grad = &gradients.as_ref().unwrap()[i][s];
                    for axis in 0..d {
                        let drift = p[axis] - grad[axis];
                        let (t_fwd, _) = grid.neighbour(s, axis, true);
                        let (t_bwd, _) = grid.neighbour(s, axis, false);
                        let e_fwd = c + drift / (2.0 * grid.h);
                        let e_bwd = c - drift / (2.0 * grid.h);
                        b.add(layout.index(t_fwd, i), e_fwd);
                        b.add(layout.index(t_bwd, i), e_bwd);
                        off += e_fwd + e_bwd;
                    }
                    potential = half_p2 - p.iter().zip(grad).map(|(pa, ga)| pa * ga).sum::<f64>();
                    sum = potential;
                }
            }
            let mut exit = 0.0;
            for jj in 0..j {
                let r = switching[i * j + jj];
                if jj != i && r != 0.0 {
                    b.add(layout.index(s, jj), r);
                    exit += r;
                }
            }
            b.add(layout.index(s, i), -off + potential - exit);
            b.finish_row(Some(sum));
        }
    }
    let meta = OperatorMeta { kind: "continuous", regime: Regime::Comparable, momentum: p.to_vec(), grid: n, scheme: Some(scheme) };
    b.build(layout, meta)
}

/// Regime II cell problem: a scalar operator driven by the averaged potential
/// gradient `sum_i mu_y(i) grad psi_i(y)`.
pub fn assemble_continuous_averaged(
    model: &ContinuousModel,
    p: &[f64],
    n: usize,
    scheme: Discretization,
) -> Result<AssembledOperator> {
    check_momentum(model, p)?;
    let grid = Grid::new(model, n)?;
    let d = model.dim;
    let layout = IndexLayout { grid: n, dim: d, states: 1 };
    let c = 1.0 / (2.0 * grid.h * grid.h);
    let mut b = RowBuilder::new(layout.len(), 2 * d + 1);
    match scheme {
        Discretization::ExponentialTilt => {
            let tables = psi_tables(model, &grid);
            // averaged potential increment per forward edge, weighted by the
            // stationary measure at the edge midpoint
            let mut edge = vec![0.0; grid.points * d];
            for s in 0..grid.points {
                let y = grid.point(s);
                for axis in 0..d {
                    let mut mid = y.clone();
                    mid[axis] += 0.5 * grid.h;
                    let q = generator_at(&model.rates, &mid)?;
                    let mu = stationary_measure(&q).map_err(|e| match e {
                        Error::Reducible { .. } => Error::Reducible { location: format!("at y={mid:?}") },
                        other => other,
                    })?;
                    edge[s * d + axis] = mu
                        .weights
                        .iter()
                        .zip(&tables)
                        .zip(&model.potentials)
                        .map(|((w, vals), psi)| w * forward_increment(vals, psi.slope(), &grid, s, axis))
                        .sum();
                }
            }
            for s in 0..grid.points {
                let mut off = 0.0;
                let mut sum = 0.0;
                for axis in 0..d {
                    let (t_fwd, _) = grid.neighbour(s, axis, true);
                    let (t_bwd, _) = grid.neighbour(s, axis, false);
                    let r_fwd = c * (-edge[s * d + axis]).exp();
                    let r_bwd = c * edge[t_bwd * d + axis].exp();
                    b.add(t_fwd, r_fwd * (p[axis] * grid.h).exp());
                    b.add(t_bwd, r_bwd * (-p[axis] * grid.h).exp());
                    off += r_fwd + r_bwd;
                    sum += r_fwd * (p[axis] * grid.h).exp_m1() + r_bwd * (-p[axis] * grid.h).exp_m1();
                }
                b.add(s, -off);
                b.finish_row(Some(sum));
            }
        }
        Discretization::CentralDifference => {
            let drifts: Vec<Vec<f64>> = (0..grid.points).map(|s| averaged_drift(model, &grid.point(s))).collect::<Result<_>>()?;
            let max_drift = drifts
                .iter()
                .flat_map(|f| f.iter().zip(p).map(|(fa, pa)| (pa - fa).abs()))
                .fold(0.0, f64::max);
            peclet_check(&grid, max_drift)?;
            let half_p2: f64 = 0.5 * p.iter().map(|x| x * x).sum::<f64>();
            for (s, fbar) in drifts.iter().enumerate() {
                let mut off = 0.0;
                for axis in 0..d {
                    let drift = p[axis] - fbar[axis];
                    let (t_fwd, _) = grid.neighbour(s, axis, true);
                    let (t_bwd, _) = grid.neighbour(s, axis, false);
                    let e_fwd = c + drift / (2.0 * grid.h);
                    let e_bwd = c - drift / (2.0 * grid.h);
                    b.add(t_fwd, e_fwd);
                    b.add(t_bwd, e_bwd);
                    off += e_fwd + e_bwd;
                }
                let potential = half_p2 - p.iter().zip(fbar).map(|(pa, fa)| pa * fa).sum::<f64>();
                b.add(s, -off + potential);
                b.finish_row(Some(potential));
            }
        }
    }
    let meta = OperatorMeta { kind: "continuous", regime: Regime::Averaged, momentum: p.to_vec(), grid: n, scheme: Some(scheme) };
    b.build(layout, meta)
}

/// Dispatches to the assembly matching the model kind and regime.
/// `grid` is ignored for discrete models.
pub fn assemble(model: &Model, p: &[f64], grid: usize, scheme: Discretization) -> Result<AssembledOperator> {
    match (model, model.regime()) {
        (Model::Discrete(m), Regime::Comparable) => assemble_discrete_comparable(m, check_p1(p)?),
        (Model::Discrete(m), Regime::Averaged) => assemble_discrete_averaged(m, check_p1(p)?),
        (Model::Continuous(m), Regime::Comparable) => assemble_continuous_comparable(m, p, grid, scheme),
        (Model::Continuous(m), Regime::Averaged) => assemble_continuous_averaged(m, p, grid, scheme),
    }
}

// ---------------------------------------------------------------------------
// Eigensolver

/// Inverse iterations before giving up; convergence is typically reached
/// within a handful, so exhausting this means the bracket is stuck at the
/// round-off floor.
pub const INVERSE_MAX_ITER: usize = 100;

/// Largest operator handled by dense shift-and-invert under [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Shift-and-invert up to [`DENSE_LIMIT`] unknowns, power iteration above.
    #[default]
    Auto,
    /// Power iteration on `M + alpha I`.
    Power,
    /// Inverse iteration with a shift kept above the Collatz-Wielandt upper bound.
    ShiftInvert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenParams {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub method: EigenMethod,
}

impl Default for EigenParams {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, method: EigenMethod::Auto }
    }
}

impl EigenParams {
    pub fn with_method(mut self, method: EigenMethod) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCertificate {
    pub eigenvalue: f64,
    /// Positive, normalized to max component 1.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
    pub residual: f64,
    pub cw_lower: f64,
    pub cw_upper: f64,
    pub iterations: usize,
}

impl EigenCertificate {
    pub fn gap(&self) -> f64 {
        self.cw_upper - self.cw_lower
    }
}

/// `(min_i (Mg)_i / g_i, max_i (Mg)_i / g_i)`; brackets the principal
/// eigenvalue for every positive `g`.
pub fn collatz_wielandt_bounds(op: &AssembledOperator, g: &[f64]) -> Result<(f64, f64)> {
    if g.len() != op.len() {
        return Err(Error::DimensionMismatch { expected: op.len(), got: g.len() });
    }
    if let Some((index, &value)) = g.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveVector { index, value });
    }
    let mut w = vec![0.0; g.len()];
    op.apply_centered(g, &mut w);
    Ok(ratio_bounds(&w, g))
}

fn ratio_bounds(w: &[f64], g: &[f64]) -> (f64, f64) {
    w.iter().zip(g).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&wi, &gi)| {
        let r = wi / gi;
        (lo.min(r), hi.max(r))
    })
}

/// Principal eigenpair of a Metzler irreducible operator, started from the
/// all-ones vector.
///
/// Every iterate `g > 0` yields the Collatz-Wielandt bracket
/// `min (Mg)_i/g_i <= lambda <= max (Mg)_i/g_i`; iteration stops once its
/// width is at most `tol (1 + |lambda|)` and the reported eigenvalue is the
/// midpoint. Iterates come from power iteration on `M + alpha I`,
/// `alpha = 1 + max |M_ii|`, or from inverse iteration with `(sigma I - M)`,
/// `sigma` just above the current upper bound, whose inverse is positive.
pub fn principal_eigenpair(op: &AssembledOperator, params: &EigenParams) -> Result<EigenCertificate> {
    principal_eigenpair_from(op, params, None)
}

/// As [`principal_eigenpair`], optionally starting from a positive vector.
pub fn principal_eigenpair_from(
    op: &AssembledOperator,
    params: &EigenParams,
    start: Option<&[f64]>,
) -> Result<EigenCertificate> {
    let n = op.len();
    let alpha = 1.0 + op.max_abs_diagonal();
    let mut g = match start {
        Some(s) => {
            if s.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.len() });
            }
            if let Some((index, &value)) = s.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                return Err(Error::NonPositiveVector { index, value });
            }
            let m = s.iter().fold(0.0, |a: f64, &b| a.max(b));
            s.iter().map(|v| v / m).collect()
        }
        None => vec![1.0; n],
    };
    let use_inverse = match params.method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Power => false,
        EigenMethod::ShiftInvert => true,
    };
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    if use_inverse {
        match inverse_iteration(op, params, g, &mut iterations)? {
            Ok(cert) => return Ok(cert),
            // lost positivity to round-off; continue with the slower iteration
            Err(last) => g = last,
        }
    }
    loop {
        op.apply_centered(&g, &mut w);
        let (lo, hi) = ratio_bounds(&w, &g);
        let lambda = 0.5 * (lo + hi);
        let converged = hi - lo <= params.tol * (1.0 + lambda.abs());
        if converged || iterations >= params.max_iter {
            let residual = w.iter().zip(&g).map(|(wi, gi)| (wi - lambda * gi).abs()).fold(0.0, f64::max);
            let cert = EigenCertificate { eigenvalue: lambda, eigenvector: g, residual, cw_lower: lo, cw_upper: hi, iterations };
            return if converged { Ok(cert) } else { Err(Error::Convergence(Box::new(cert))) };
        }
        let mut max = 0.0f64;
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi += alpha * gi;
            max = max.max(*wi);
        }
        for (gi, wi) in g.iter_mut().zip(&w) {
            *gi = wi / max;
        }
        iterations += 1;
    }
}

fn finish(lambda: f64, lo: f64, hi: f64, w: &[f64], g: Vec<f64>, iterations: usize) -> EigenCertificate {
    let residual = w.iter().zip(&g).map(|(wi, gi)| (wi - lambda * gi).abs()).fold(0.0, f64::max);
    EigenCertificate { eigenvalue: lambda, eigenvector: g, residual, cw_lower: lo, cw_upper: hi, iterations }
}

/// Inverse iteration; the inner `Err` hands back the last positive iterate
/// when a solve loses positivity.
fn inverse_iteration(
    op: &AssembledOperator,
    params: &EigenParams,
    mut g: Vec<f64>,
    iterations: &mut usize,
) -> Result<std::result::Result<EigenCertificate, Vec<f64>>> {
    let n = op.len();
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for (c, v) in op.row(r) {
            dense[(r, c)] -= v;
        }
    }
    let mut w = vec![0.0; n];
    loop {
        op.apply_centered(&g, &mut w);
        let (lo, hi) = ratio_bounds(&w, &g);
        let lambda = 0.5 * (lo + hi);
        let converged = hi - lo <= params.tol * (1.0 + lambda.abs());
        if converged || *iterations >= params.max_iter.min(INVERSE_MAX_ITER) {
            let cert = finish(lambda, lo, hi, &w, g, *iterations);
            return if converged { Ok(Ok(cert)) } else { Err(Error::Convergence(Box::new(cert))) };
        }
        let sigma = hi + (hi - lo).max(1e-9 * (1.0 + hi.abs()));
        let mut shifted = dense.clone();
        for r in 0..n {
            shifted[(r, r)] += sigma;
        }
        let lu = shifted.lu();
        let Some(mut x) = lu.solve(&DVector::from_column_slice(&g)) else {
            return Ok(Err(g));
        };
        // one refinement step, with the residual formed by the accurate product
        op.apply_centered(x.as_slice(), &mut w);
        let r = DVector::from_iterator(n, (0..n).map(|k| g[k] - (sigma * x[k] - w[k])));
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
        let max = x.iter().fold(0.0f64, |a, &b| a.max(b));
        if !(max > 0.0) || x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Ok(Err(g));
        }
        g = x.iter().map(|v| v / max).collect();
        *iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PeriodicScalarField, SwitchingRateMatrix};

    fn op(rows: &[&[f64]]) -> AssembledOperator {
        AssembledOperator::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn permutation_matrix() {
        let c = principal_eigenpair(&op(&[&[0.0, 1.0], &[1.0, 0.0]]), &EigenParams::default()).unwrap();
        assert!((c.eigenvalue - 1.0).abs() < 1e-12);
        assert_eq!(c.eigenvector, vec![1.0, 1.0]);
    }

    #[test]
    fn generator_has_zero_eigenvalue() {
        let c = principal_eigenpair(&op(&[&[-1.0, 1.0], &[2.0, -2.0]]), &EigenParams::default()).unwrap();
        assert!(c.eigenvalue.abs() < 1e-14);
        assert_eq!(c.iterations, 0);
    }

    #[test]
    fn collatz_wielandt_examples() {
        let m = op(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(collatz_wielandt_bounds(&m, &[1.0, 2.0]).unwrap(), (0.5, 2.0));
        assert_eq!(collatz_wielandt_bounds(&m, &[1.0, 1.0]).unwrap(), (1.0, 1.0));
        let q = op(&[&[-1.0, 1.0], &[2.0, -2.0]]);
        assert_eq!(collatz_wielandt_bounds(&q, &[1.0, 1.0]).unwrap(), (0.0, 0.0));
        assert!(matches!(collatz_wielandt_bounds(&m, &[1.0, 0.0]), Err(Error::NonPositiveVector { index: 1, .. })));
    }

    #[test]
    fn metzler_and_irreducibility_enforced() {
        assert!(matches!(
            AssembledOperator::from_dense(&[vec![0.0, -1.0], vec![1.0, 0.0]]),
            Err(Error::NotMetzler { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            AssembledOperator::from_dense(&[vec![0.0, 1.0], vec![0.0, 0.0]]),
            Err(Error::ReducibleOperator)
        ));
    }

    #[test]
    fn iteration_cap_reports_last_certificate() {
        let m = op(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.3, -5.0]]);
        let err = principal_eigenpair(&m, &EigenParams { tol: 1e-14, max_iter: 3, method: EigenMethod::Power }).unwrap_err();
        match err {
            Error::Convergence(c) => {
                assert_eq!(c.iterations, 3);
                assert!(c.cw_lower <= c.cw_upper);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn two_site_discrete_walk() {
        let m = DiscreteModel::constant_walk(2, 1.0, 1.0);
        for &p in &[-0.7, 0.0, 1.3] {
            let a = assemble_discrete_comparable(&m, p).unwrap().to_dense();
            let s = p.exp() + (-p).exp();
            assert_eq!(a, vec![vec![-2.0, s], vec![s, -2.0]]);
        }
    }

    #[test]
    fn averaged_walk_with_constant_rates() {
        let mut m = DiscreteModel::constant_walk(5, 2.0, 1.0).with_regime(Regime::Averaged);
        m.gamma = 7.0;
        for &p in &[-1.0, 0.4, 1.0] {
            let a = assemble_discrete_averaged(&m, p).unwrap();
            let expected = 2.0 * (p.exp() - 1.0) + ((-p).exp() - 1.0);
            let (lo, hi) = collatz_wielandt_bounds(&a, &[1.0; 5]).unwrap();
            assert!((lo - expected).abs() < 1e-14 && (hi - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn single_state_averaging_matches_comparable() {
        let m = DiscreteModel::new(
            vec![vec![1.0, 2.0, 0.5]],
            vec![vec![0.3, 1.0, 2.0]],
            vec![vec![vec![0.0; 3]]],
            Regime::Comparable,
        );
        let a = assemble_discrete_comparable(&m, 0.8).unwrap().to_dense();
        let b = assemble_discrete_averaged(&m.clone().with_regime(Regime::Averaged), 0.8).unwrap().to_dense();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_potential_operator_is_half_laplacian() {
        let m = ContinuousModel::single(PeriodicScalarField::zero(1));
        for scheme in [Discretization::ExponentialTilt, Discretization::CentralDifference] {
            let a = assemble_continuous_comparable(&m, &[0.0], 8, scheme).unwrap();
            let c = 0.5 * 64.0;
            for r in 0..8 {
                assert_eq!(a.get(r, r), -2.0 * c);
                assert_eq!(a.get(r, (r + 1) % 8), c);
                assert_eq!(a.get(r, (r + 7) % 8), c);
            }
            let cert = principal_eigenpair(&a, &EigenParams::default()).unwrap();
            assert!(cert.eigenvalue.abs() < 1e-12);
            assert!(cert.eigenvector.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn flat_potential_eigenvalue_is_cosh_type() {
        let m = ContinuousModel::single(PeriodicScalarField::zero(1));
        let p = 1.7;
        let n = 64;
        let h = 1.0 / n as f64;
        let a = assemble_continuous_comparable(&m, &[p], n, Discretization::ExponentialTilt).unwrap();
        let cert = principal_eigenpair(&a, &EigenParams::default()).unwrap();
        assert!((cert.eigenvalue - ((p * h).cosh() - 1.0) / (h * h)).abs() < 1e-9);
        let cd = assemble_continuous_comparable(&m, &[p], n, Discretization::CentralDifference).unwrap();
        let cert = principal_eigenpair(&cd, &EigenParams::default()).unwrap();
        assert!((cert.eigenvalue - 0.5 * p * p).abs() < 1e-9);
    }

    #[test]
    fn peclet_violation_names_minimal_grid() {
        let m = ContinuousModel::single(PeriodicScalarField::affine(vec![-40.0]));
        let err = assemble_continuous_comparable(&m, &[10.0], 32, Discretization::CentralDifference).unwrap_err();
        match err {
            Error::Peclet { grid, min_grid, .. } => {
                assert_eq!(grid, 32);
                assert_eq!(min_grid, 50);
                assert!(assemble_continuous_comparable(&m, &[10.0], min_grid, Discretization::CentralDifference).is_ok());
            }
            other => panic!("unexpected {other}"),
        }
        assert!(assemble_continuous_comparable(&m, &[10.0], 32, Discretization::ExponentialTilt).is_ok());
    }

    #[test]
    fn two_dimensional_layout() {
        let psi = PeriodicScalarField::new(
            2,
            1.0,
            vec![crate::model::FourierTerm { wave: vec![1, 1], cos: 0.5, sin: 0.2 }],
            vec![0.0, 0.0],
        );
        let rates = SwitchingRateMatrix::constant(2, &[vec![0.0, 1.0], vec![2.0, 0.0]]);
        let m = ContinuousModel::new(vec![psi.clone(), psi.scaled(-1.0)], rates, Regime::Comparable);
        let a = assemble_continuous_comparable(&m, &[0.0, 0.0], 6, Discretization::ExponentialTilt).unwrap();
        assert_eq!(a.len(), 72);
        assert_eq!(a.layout.decode(a.layout.index(7, 1)), (vec![1, 1], 1));
        for s in a.row_sums() {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn triplet_dump() {
        let a = assemble_discrete_comparable(&DiscreteModel::constant_walk(3, 1.0, 2.0), 0.0).unwrap();
        let mut buf = Vec::new();
        a.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines.len(), 1 + a.nnz());
        assert_eq!(lines[1], "0 0 -3e0");
    }
}
