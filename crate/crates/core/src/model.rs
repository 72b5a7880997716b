//! Continuous and discrete switching models.
//!
//! A continuous model lives on the torus `[0, period)^d` with `J` chemical
//! states; in state `i` the spatial component drifts along `-grad psi_i` with
//! unit-rate diffusion `1/2 Laplacian` (on the fast scale) and switches to
//! state `j` with rate `r_ij(y)`. A discrete model replaces the diffusion by a
//! nearest-neighbour walk on `Z / ell Z` with hop rates `r_plus[i][k]`,
//! `r_minus[i][k]`.
//!
//! Scalar fields are truncated Fourier series with an optional affine tilt and
//! an optional exponential transform `scale * exp(rate * series)`, so
//! gradients and Laplacians are exact.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling resolution per axis used by [`validate`] for `d = 1`.
pub const VALIDATION_SAMPLES_1D: usize = 1024;
/// Sampling resolution per axis used by [`validate`] for `d >= 2`.
pub const VALIDATION_SAMPLES_ND: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Switching on the same time scale as the spatial motion.
    #[serde(rename = "I")]
    Comparable,
    /// Switching infinitely faster than the spatial motion; coefficients are
    /// averaged over the stationary measure of the chemical states.
    #[serde(rename = "II")]
    Averaged,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Comparable => f.write_str("I"),
            Regime::Averaged => f.write_str("II"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    pub wave: Vec<i32>,
    pub cos: f64,
    pub sin: f64,
}

/// `scale * exp(rate * series(y))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTransform {
    pub scale: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicScalarField {
    dim: usize,
    period: f64,
    terms: Vec<FourierTerm>,
    slope: Vec<f64>,
    exp: Option<ExpTransform>,
}

impl PeriodicScalarField {
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, 1.0, Vec::new(), vec![0.0; dim])
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(
            dim,
            1.0,
            vec![FourierTerm { wave: vec![0; dim], cos: value, sin: 0.0 }],
            vec![0.0; dim],
        )
    }

    pub fn new(dim: usize, period: f64, terms: Vec<FourierTerm>, slope: Vec<f64>) -> Self {
        assert!(dim >= 1, "field dimension must be at least 1");
        assert_eq!(slope.len(), dim, "slope length must equal the dimension");
        for t in &terms {
            assert_eq!(t.wave.len(), dim, "wave vector length must equal the dimension");
        }
        Self { dim, period, terms, slope, exp: None }
    }

    /// One-dimensional field `sum_k a_k cos(2 pi k y) + b_k sin(2 pi k y)` from
    /// `(k, a_k, b_k)` triples.
    pub fn fourier_1d(coeffs: &[(i32, f64, f64)]) -> Self {
        let terms = coeffs
            .iter()
            .map(|&(k, a, b)| FourierTerm { wave: vec![k], cos: a, sin: b })
            .collect();
        Self::new(1, 1.0, terms, vec![0.0])
    }

    /// Affine field `slope . y` with no periodic part.
    pub fn affine(slope: Vec<f64>) -> Self {
        let dim = slope.len();
        Self::new(dim, 1.0, Vec::new(), slope)
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn with_slope(mut self, slope: Vec<f64>) -> Self {
        assert_eq!(slope.len(), self.dim);
        self.slope = slope;
        self
    }

    pub fn with_exp(mut self, scale: f64, rate: f64) -> Self {
        self.exp = Some(ExpTransform { scale, rate });
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope
    }

    pub fn exp_transform(&self) -> Option<ExpTransform> {
        self.exp
    }

    pub fn is_periodic(&self) -> bool {
        self.slope.iter().all(|&s| s == 0.0)
    }

    /// Scales the field by `c`. The exponential transform scales its prefactor.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        match &mut out.exp {
            Some(e) => e.scale *= c,
            None => {
                for t in &mut out.terms {
                    t.cos *= c;
                    t.sin *= c;
                }
                for s in &mut out.slope {
                    *s *= c;
                }
            }
        }
        out
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: y.len() });
        }
        Ok(())
    }

    fn phase(&self, wave: &[i32], y: &[f64]) -> f64 {
        let dot: f64 = wave.iter().zip(y).map(|(&k, &x)| k as f64 * x).sum();
        2.0 * PI * dot / self.period
    }

    fn series(&self, y: &[f64]) -> f64 {
        let mut v: f64 = self.slope.iter().zip(y).map(|(s, x)| s * x).sum();
        for t in &self.terms {
            let (s, c) = self.phase(&t.wave, y).sin_cos();
            v += t.cos * c + t.sin * s;
        }
        v
    }

    fn series_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = self.slope.clone();
        let w = 2.0 * PI / self.period;
        for t in &self.terms {
            let (s, c) = self.phase(&t.wave, y).sin_cos();
            let amp = w * (-t.cos * s + t.sin * c);
            for (ga, &k) in g.iter_mut().zip(&t.wave) {
                *ga += amp * k as f64;
            }
        }
        g
    }

    fn series_laplacian(&self, y: &[f64]) -> f64 {
        let w = 2.0 * PI / self.period;
        let mut lap = 0.0;
        for t in &self.terms {
            let k2: f64 = t.wave.iter().map(|&k| (k as f64).powi(2)).sum();
            let (s, c) = self.phase(&t.wave, y).sin_cos();
            lap -= w * w * k2 * (t.cos * c + t.sin * s);
        }
        lap
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        Ok(self.value_unchecked(y))
    }

    pub fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        Ok(self.gradient_unchecked(y))
    }

    pub fn laplacian(&self, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        let lap = self.series_laplacian(y);
        Ok(match self.exp {
            None => lap,
            Some(e) => {
                let v = e.scale * (e.rate * self.series(y)).exp();
                let g2: f64 = self.series_gradient(y).iter().map(|g| g * g).sum();
                v * (e.rate * lap + e.rate * e.rate * g2)
            }
        })
    }

    pub(crate) fn value_unchecked(&self, y: &[f64]) -> f64 {
        let s = self.series(y);
        match self.exp {
            None => s,
            Some(e) => e.scale * (e.rate * s).exp(),
        }
    }

    pub(crate) fn gradient_unchecked(&self, y: &[f64]) -> Vec<f64> {
        let mut g = self.series_gradient(y);
        if let Some(e) = self.exp {
            let f = e.scale * (e.rate * self.series(y)).exp() * e.rate;
            for ga in &mut g {
                *ga *= f;
            }
        }
        g
    }

    /// Rigorous upper bound on `sup_y field(y)`; `None` for tilted fields.
    pub fn sup_bound(&self) -> Option<f64> {
        if !self.is_periodic() {
            return None;
        }
        let amp = |t: &FourierTerm| {
            if t.wave.iter().all(|&k| k == 0) {
                t.cos
            } else {
                t.cos.hypot(t.sin)
            }
        };
        let upper: f64 = self.terms.iter().map(amp).sum();
        Some(match self.exp {
            None => upper,
            Some(e) => {
                let lower: f64 = self
                    .terms
                    .iter()
                    .map(|t| {
                        if t.wave.iter().all(|&k| k == 0) {
                            t.cos
                        } else {
                            -t.cos.hypot(t.sin)
                        }
                    })
                    .sum();
                let extreme = if e.rate >= 0.0 { e.rate * upper } else { e.rate * lower };
                e.scale.max(0.0) * extreme.exp()
            }
        })
    }
}

/// Free function form of [`PeriodicScalarField::eval`].
pub fn eval_field(field: &PeriodicScalarField, y: &[f64]) -> Result<f64> {
    field.eval(y)
}

/// `J x J` array of rate fields; diagonal entries are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingRateMatrix {
    states: usize,
    entries: Vec<Option<PeriodicScalarField>>,
}

impl SwitchingRateMatrix {
    pub fn none(states: usize) -> Self {
        Self { states, entries: vec![None; states * states] }
    }

    pub fn from_fn(states: usize, mut f: impl FnMut(usize, usize) -> Option<PeriodicScalarField>) -> Self {
        let mut m = Self::none(states);
        for i in 0..states {
            for j in 0..states {
                if i != j {
                    m.entries[i * states + j] = f(i, j);
                }
            }
        }
        m
    }

    /// Constant rates from a row-major `J x J` table (diagonal ignored).
    pub fn constant(dim: usize, rates: &[Vec<f64>]) -> Self {
        let j = rates.len();
        Self::from_fn(j, |a, b| {
            let r = rates[a][b];
            (r != 0.0).then(|| PeriodicScalarField::constant(dim, r))
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&PeriodicScalarField> {
        if i == j {
            None
        } else {
            self.entries[i * self.states + j].as_ref()
        }
    }

    pub fn set(&mut self, i: usize, j: usize, field: Option<PeriodicScalarField>) {
        assert_ne!(i, j, "diagonal switching rates are ignored");
        self.entries[i * self.states + j] = field;
    }

    pub fn rate(&self, i: usize, j: usize, y: &[f64]) -> f64 {
        self.entry(i, j).map_or(0.0, |f| f.value_unchecked(y))
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().flatten().all(|f| {
            f.is_periodic() && f.terms.iter().all(|t| t.wave.iter().all(|&k| k == 0) || (t.cos == 0.0 && t.sin == 0.0))
        })
    }

    /// Upper bound on the total exit rate `sum_j r_ij(y)` of state `i`.
    pub fn exit_rate_bound(&self, i: usize) -> Option<f64> {
        let mut total = 0.0;
        for j in 0..self.states {
            if let Some(f) = self.entry(i, j) {
                total += f.sup_bound()?.max(0.0);
            }
        }
        Some(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub dim: usize,
    pub period: f64,
    pub potentials: Vec<PeriodicScalarField>,
    pub rates: SwitchingRateMatrix,
    pub regime: Regime,
    /// Multiplier applied to switching rates in regime I assembly and in
    /// simulation; in regime II it is the finite time-scale ratio used by the
    /// simulator only.
    pub gamma: f64,
}

impl ContinuousModel {
    pub fn new(potentials: Vec<PeriodicScalarField>, rates: SwitchingRateMatrix, regime: Regime) -> Self {
        let dim = potentials.first().map_or(1, |p| p.dim());
        let period = potentials.first().map_or(1.0, |p| p.period());
        Self { dim, period, potentials, rates, regime, gamma: 1.0 }
    }

    pub fn single(potential: PeriodicScalarField) -> Self {
        Self::new(vec![potential], SwitchingRateMatrix::none(1), Regime::Comparable)
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn states(&self) -> usize {
        self.potentials.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub sites: usize,
    /// `hop_plus[i][k]`.
    pub hop_plus: Vec<Vec<f64>>,
    pub hop_minus: Vec<Vec<f64>>,
    /// `switching[i][j][k]`, diagonal ignored.
    pub switching: Vec<Vec<Vec<f64>>>,
    pub regime: Regime,
    pub gamma: f64,
}

impl DiscreteModel {
    pub fn new(
        hop_plus: Vec<Vec<f64>>,
        hop_minus: Vec<Vec<f64>>,
        switching: Vec<Vec<Vec<f64>>>,
        regime: Regime,
    ) -> Self {
        let sites = hop_plus.first().map_or(0, Vec::len);
        Self { sites, hop_plus, hop_minus, switching, regime, gamma: 1.0 }
    }

    /// Single-state walk with site-independent rates.
    pub fn constant_walk(sites: usize, plus: f64, minus: f64) -> Self {
        Self::new(vec![vec![plus; sites]], vec![vec![minus; sites]], vec![vec![vec![0.0; sites]]], Regime::Comparable)
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn states(&self) -> usize {
        self.hop_plus.len()
    }

    pub fn switch_rate(&self, i: usize, j: usize, k: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.switching[i][j][k]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Continuous(ContinuousModel),
    Discrete(DiscreteModel),
}

impl Model {
    pub fn regime(&self) -> Regime {
        match self {
            Model::Continuous(m) => m.regime,
            Model::Discrete(m) => m.regime,
        }
    }

    /// Dimension of the momentum variable.
    pub fn dim(&self) -> usize {
        match self {
            Model::Continuous(m) => m.dim,
            Model::Discrete(_) => 1,
        }
    }

    pub fn states(&self) -> usize {
        match self {
            Model::Continuous(m) => m.states(),
            Model::Discrete(m) => m.states(),
        }
    }

    pub fn with_regime(self, regime: Regime) -> Self {
        match self {
            Model::Continuous(m) => Model::Continuous(m.with_regime(regime)),
            Model::Discrete(m) => Model::Discrete(m.with_regime(regime)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelSpec::from(self))?)
    }
}

impl From<ContinuousModel> for Model {
    fn from(m: ContinuousModel) -> Self {
        Model::Continuous(m)
    }
}

impl From<DiscreteModel> for Model {
    fn from(m: DiscreteModel) -> Self {
        Model::Discrete(m)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Shape,
    NonFinite,
    NegativeRate,
    NonPeriodicRate,
    NonPositiveHopRate,
    Reducible,
    ReducibleAtPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub location: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    fn push(&mut self, kind: IssueKind, location: impl Into<String>, detail: impl Into<String>) {
        self.issues.push(Issue { kind, location: location.into(), detail: detail.into() });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("valid");
        }
        for (n, issue) in self.issues.iter().enumerate() {
            if n > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{:?} at {}: {}", issue.kind, issue.location, issue.detail)?;
        }
        Ok(())
    }
}

/// Strong connectivity of the digraph on `n` nodes with an edge `a -> b`
/// whenever `edge(a, b)`.
pub(crate) fn strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                let e = if forward { edge(a, b) } else { edge(b, a) };
                if a != b && e && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Row-major multi-index of grid point `idx` on an `n^dim` lattice.
pub(crate) fn grid_multi_index(mut idx: usize, n: usize, dim: usize) -> Vec<usize> {
    let mut m = vec![0; dim];
    for a in (0..dim).rev() {
        m[a] = idx % n;
        idx /= n;
    }
    m
}

pub(crate) fn grid_point(idx: usize, n: usize, dim: usize, h: f64) -> Vec<f64> {
    grid_multi_index(idx, n, dim).into_iter().map(|m| m as f64 * h).collect()
}

pub fn validate(model: &Model) -> ValidationReport {
    match model {
        Model::Continuous(m) => {
            let n = if m.dim == 1 { VALIDATION_SAMPLES_1D } else { VALIDATION_SAMPLES_ND };
            validate_continuous(m, n)
        }
        Model::Discrete(m) => validate_discrete(m),
    }
}

/// Validates a continuous model, sampling rate fields on `samples^d` points.
pub fn validate_continuous(model: &ContinuousModel, samples: usize) -> ValidationReport {
    let mut report = ValidationReport::default();
    let j = model.states();
    if j == 0 {
        report.push(IssueKind::Shape, "potentials", "at least one chemical state is required");
        return report;
    }
    if model.dim == 0 {
        report.push(IssueKind::Shape, "dim", "dimension must be at least 1");
        return report;
    }
    if !(model.period.is_finite() && model.period > 0.0) {
        report.push(IssueKind::Shape, "period", format!("period must be positive, got {}", model.period));
        return report;
    }
    if !(model.gamma.is_finite() && model.gamma > 0.0) {
        report.push(IssueKind::Shape, "gamma", format!("gamma must be positive, got {}", model.gamma));
    }
    if model.rates.states() != j {
        report.push(
            IssueKind::Shape,
            "rates",
            format!("rate matrix is {0}x{0} but there are {1} potentials", model.rates.states(), j),
        );
        return report;
    }
    let mut fields_ok = true;
    let check_field = |report: &mut ValidationReport, f: &PeriodicScalarField, loc: String| {
        let mut ok = true;
        if f.dim() != model.dim {
            report.push(IssueKind::Shape, loc.clone(), format!("field dimension {} != model dimension {}", f.dim(), model.dim));
            ok = false;
        }
        if (f.period() - model.period).abs() > 1e-12 * model.period {
            report.push(IssueKind::Shape, loc.clone(), format!("field period {} != model period {}", f.period(), model.period));
            ok = false;
        }
        let finite = f.terms().iter().all(|t| t.cos.is_finite() && t.sin.is_finite())
            && f.slope().iter().all(|s| s.is_finite())
            && f.exp_transform().is_none_or(|e| e.scale.is_finite() && e.rate.is_finite());
        if !finite {
            report.push(IssueKind::NonFinite, loc, "non-finite coefficient");
            ok = false;
        }
        ok
    };
    for (i, psi) in model.potentials.iter().enumerate() {
        fields_ok &= check_field(&mut report, psi, format!("potential {i}"));
    }
    for a in 0..j {
        for b in 0..j {
            if let Some(f) = model.rates.entry(a, b) {
                fields_ok &= check_field(&mut report, f, format!("rate ({a},{b})"));
                if !f.is_periodic() {
                    report.push(IssueKind::NonPeriodicRate, format!("rate ({a},{b})"), "switching rates must be periodic");
                    fields_ok = false;
                }
            }
        }
    }
    if !fields_ok || j == 1 {
        return report;
    }

    let h = model.period / samples as f64;
    let total = samples.pow(model.dim as u32);
    let mut sup = vec![0.0f64; j * j];
    let mut first_negative = vec![None; j * j];
    let mut reducible_point = None;
    let mut q = vec![0.0; j * j];
    for idx in 0..total {
        let y = grid_point(idx, samples, model.dim, h);
        for a in 0..j {
            for b in 0..j {
                if a == b {
                    continue;
                }
                let r = model.rates.rate(a, b, &y);
                q[a * j + b] = r;
                sup[a * j + b] = sup[a * j + b].max(r);
                if r < 0.0 && first_negative[a * j + b].is_none() {
                    first_negative[a * j + b] = Some((y.clone(), r));
                }
            }
        }
        if model.regime == Regime::Averaged
            && reducible_point.is_none()
            && !strongly_connected(j, |a, b| q[a * j + b] > 0.0)
        {
            reducible_point = Some(y);
        }
    }
    for a in 0..j {
        for b in 0..j {
            if let Some((y, r)) = &first_negative[a * j + b] {
                report.push(IssueKind::NegativeRate, format!("rate ({a},{b}) at y={y:?}"), format!("sampled value {r}"));
            }
        }
    }
    if !strongly_connected(j, |a, b| sup[a * j + b] > 0.0) {
        report.push(IssueKind::Reducible, "rates", "sup-matrix of switching rates is reducible");
    } else if let Some(y) = reducible_point {
        report.push(
            IssueKind::ReducibleAtPoint,
            format!("y={y:?}"),
            "switching generator is reducible at this point; averaging requires irreducibility everywhere",
        );
    }
    report
}

pub fn validate_discrete(model: &DiscreteModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let j = model.states();
    let l = model.sites;
    if j == 0 {
        report.push(IssueKind::Shape, "hop_plus", "at least one chemical state is required");
        return report;
    }
    if l < 2 {
        report.push(IssueKind::Shape, "ell", format!("torus length must be at least 2, got {l}"));
        return report;
    }
    if !(model.gamma.is_finite() && model.gamma > 0.0) {
        report.push(IssueKind::Shape, "gamma", format!("gamma must be positive, got {}", model.gamma));
    }
    let shape_ok = model.hop_plus.iter().all(|r| r.len() == l)
        && model.hop_minus.len() == j
        && model.hop_minus.iter().all(|r| r.len() == l)
        && model.switching.len() == j
        && model.switching.iter().all(|row| row.len() == j && row.iter().all(|r| r.len() == l));
    if !shape_ok {
        report.push(
            IssueKind::Shape,
            "rates",
            format!("expected hop rates of shape {j}x{l} and switching rates of shape {j}x{j}x{l}"),
        );
        return report;
    }
    for i in 0..j {
        for k in 0..l {
            for (name, r) in [("r_plus", model.hop_plus[i][k]), ("r_minus", model.hop_minus[i][k])] {
                if !r.is_finite() {
                    report.push(IssueKind::NonFinite, format!("{name} (state {i}, site {k})"), format!("{r}"));
                } else if r <= 0.0 {
                    report.push(IssueKind::NonPositiveHopRate, format!("{name} (state {i}, site {k})"), format!("hop rate {r} must be positive"));
                }
            }
        }
    }
    for a in 0..j {
        for b in 0..j {
            if a == b {
                continue;
            }
            for k in 0..l {
                let r = model.switching[a][b][k];
                if !r.is_finite() {
                    report.push(IssueKind::NonFinite, format!("switching ({a},{b}) at site {k}"), format!("{r}"));
                } else if r < 0.0 {
                    report.push(IssueKind::NegativeRate, format!("switching ({a},{b}) at site {k}"), format!("rate {r}"));
                }
            }
        }
    }
    if j >= 2 {
        let sup = |a: usize, b: usize| (0..l).map(|k| model.switching[a][b][k]).fold(0.0, f64::max);
        if !strongly_connected(j, |a, b| sup(a, b) > 0.0) {
            report.push(IssueKind::Reducible, "switching", "sup-matrix of switching rates is reducible");
        } else if model.regime == Regime::Averaged {
            for k in 0..l {
                if !strongly_connected(j, |a, b| model.switching[a][b][k] > 0.0) {
                    report.push(IssueKind::ReducibleAtPoint, format!("site {k}"), "switching is reducible at this site");
                }
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// Rows `[k_1, ..., k_d, a, b]`.
    #[serde(default)]
    pub coeffs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<Vec<f64>>,
    /// `[scale, rate]`: the field is `scale * exp(rate * series)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Continuous {
        dim: usize,
        #[serde(rename = "J")]
        states: usize,
        regime: Regime,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        potentials: Vec<FieldSpec>,
        #[serde(default)]
        rates: Vec<Vec<Option<FieldSpec>>>,
    },
    Discrete {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(rename = "J")]
        states: usize,
        regime: Regime,
        ell: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        hop_plus: Vec<Vec<f64>>,
        hop_minus: Vec<Vec<f64>>,
        #[serde(default)]
        switching: Vec<Vec<Vec<f64>>>,
    },
}

fn field_from_spec(spec: &FieldSpec, dim: usize, period: f64, loc: &str) -> Result<PeriodicScalarField> {
    let mut terms = Vec::with_capacity(spec.coeffs.len());
    for row in &spec.coeffs {
        if row.len() != dim + 2 {
            return Err(Error::Config(format!(
                "{loc}: coefficient rows must have {} entries (wave vector, cos, sin), got {}",
                dim + 2,
                row.len()
            )));
        }
        let mut wave = Vec::with_capacity(dim);
        for &k in &row[..dim] {
            if k.fract() != 0.0 || k.abs() > i32::MAX as f64 {
                return Err(Error::Config(format!("{loc}: wave vector entries must be integers, got {k}")));
            }
            wave.push(k as i32);
        }
        terms.push(FourierTerm { wave, cos: row[dim], sin: row[dim + 1] });
    }
    let slope = spec.slope.clone().unwrap_or_else(|| vec![0.0; dim]);
    if slope.len() != dim {
        return Err(Error::Config(format!("{loc}: slope must have {dim} entries")));
    }
    let mut f = PeriodicScalarField::new(dim, period, terms, slope);
    if let Some([scale, rate]) = spec.exp {
        f = f.with_exp(scale, rate);
    }
    Ok(f)
}

fn field_to_spec(f: &PeriodicScalarField) -> FieldSpec {
    FieldSpec {
        coeffs: f
            .terms()
            .iter()
            .map(|t| t.wave.iter().map(|&k| k as f64).chain([t.cos, t.sin]).collect())
            .collect(),
        slope: (!f.is_periodic()).then(|| f.slope().to_vec()),
        exp: f.exp_transform().map(|e| [e.scale, e.rate]),
    }
}

impl TryFrom<ModelSpec> for Model {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Continuous { dim, states, regime, period, gamma, potentials, rates } => {
                if dim == 0 {
                    return Err(Error::Config("dim must be at least 1".into()));
                }
                if potentials.len() != states {
                    return Err(Error::Config(format!("expected {states} potentials, got {}", potentials.len())));
                }
                let period = period.unwrap_or(1.0);
                let potentials = potentials
                    .iter()
                    .enumerate()
                    .map(|(i, f)| field_from_spec(f, dim, period, &format!("potential {i}")))
                    .collect::<Result<Vec<_>>>()?;
                let mut matrix = SwitchingRateMatrix::none(states);
                if !rates.is_empty() {
                    if rates.len() != states || rates.iter().any(|r| r.len() != states) {
                        return Err(Error::Config(format!("rates must be a {states}x{states} array")));
                    }
                    for (a, row) in rates.iter().enumerate() {
                        for (b, entry) in row.iter().enumerate() {
                            if a != b {
                                if let Some(f) = entry {
                                    matrix.set(a, b, Some(field_from_spec(f, dim, period, &format!("rate ({a},{b})"))?));
                                }
                            }
                        }
                    }
                } else if states > 1 {
                    return Err(Error::Config("rates are required when J >= 2".into()));
                }
                Ok(Model::Continuous(ContinuousModel {
                    dim,
                    period,
                    potentials,
                    rates: matrix,
                    regime,
                    gamma: gamma.unwrap_or(1.0),
                }))
            }
            ModelSpec::Discrete { dim, states, regime, ell, gamma, hop_plus, hop_minus, switching } => {
                if let Some(d) = dim {
                    if d != 1 {
                        return Err(Error::Config(format!("discrete models are one-dimensional, got dim={d}")));
                    }
                }
                if hop_plus.len() != states || hop_minus.len() != states {
                    return Err(Error::Config(format!("hop rate arrays must have {states} rows")));
                }
                let switching = if switching.is_empty() {
                    if states > 1 {
                        return Err(Error::Config("switching rates are required when J >= 2".into()));
                    }
                    vec![vec![vec![0.0; ell]]]
                } else {
                    switching
                };
                let mut m = DiscreteModel::new(hop_plus, hop_minus, switching, regime);
                m.sites = ell;
                m.gamma = gamma.unwrap_or(1.0);
                Ok(Model::Discrete(m))
            }
        }
    }
}

impl From<&Model> for ModelSpec {
    fn from(model: &Model) -> Self {
        match model {
            Model::Continuous(m) => {
                let j = m.states();
                ModelSpec::Continuous {
                    dim: m.dim,
                    states: j,
                    regime: m.regime,
                    period: (m.period != 1.0).then_some(m.period),
                    gamma: (m.gamma != 1.0).then_some(m.gamma),
                    potentials: m.potentials.iter().map(field_to_spec).collect(),
                    rates: (0..j)
                        .map(|a| (0..j).map(|b| m.rates.entry(a, b).map(field_to_spec)).collect())
                        .collect(),
                }
            }
            Model::Discrete(m) => ModelSpec::Discrete {
                dim: None,
                states: m.states(),
                regime: m.regime,
                ell: m.sites,
                gamma: (m.gamma != 1.0).then_some(m.gamma),
                hop_plus: m.hop_plus.clone(),
                hop_minus: m.hop_minus.clone(),
                switching: m.switching.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine() -> PeriodicScalarField {
        PeriodicScalarField::fourier_1d(&[(1, 1.0, 0.0)])
    }

    #[test]
    fn zero_field_is_zero() {
        let f = PeriodicScalarField::zero(2);
        assert_eq!(f.eval(&[0.3, -1.7]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_at_origin() {
        let f = cosine();
        assert_eq!(f.eval(&[0.0]).unwrap(), 1.0);
        assert_eq!(f.gradient(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let f = cosine();
        let h = 1e-5;
        let fd = (f.eval(&[0.3 + h]).unwrap() - f.eval(&[0.3 - h]).unwrap()) / (2.0 * h);
        assert!((f.gradient(&[0.3]).unwrap()[0] - fd).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = cosine();
        assert!(matches!(f.eval(&[0.0, 1.0]), Err(Error::DimensionMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let f = PeriodicScalarField::new(
            2,
            1.0,
            vec![
                FourierTerm { wave: vec![1, 0], cos: 0.7, sin: -0.2 },
                FourierTerm { wave: vec![1, 2], cos: 0.1, sin: 0.4 },
            ],
            vec![0.3, -0.5],
        );
        let y = [0.21, 0.67];
        let fd_err = |h: f64| {
            let mut grad_err: f64 = 0.0;
            let mut lap_fd = 0.0;
            let f0 = f.eval(&y).unwrap();
            let g = f.gradient(&y).unwrap();
            for a in 0..2 {
                let mut yp = y;
                let mut ym = y;
                yp[a] += h;
                ym[a] -= h;
                let (fp, fm) = (f.eval(&yp).unwrap(), f.eval(&ym).unwrap());
                grad_err = grad_err.max(((fp - fm) / (2.0 * h) - g[a]).abs());
                lap_fd += (fp - 2.0 * f0 + fm) / (h * h);
            }
            (grad_err, (lap_fd - f.laplacian(&y).unwrap()).abs())
        };
        let (g3, l3) = fd_err(1e-3);
        let (g4, l4) = fd_err(1e-4);
        let gr = g3 / g4;
        assert!((70.0..130.0).contains(&gr), "gradient error ratio {gr}");
        // the Laplacian stencil at h=1e-4 is already limited by cancellation
        assert!(l3 < 1e-3 && l4 < l3 * 0.5, "laplacian errors {l3} {l4}");
    }

    #[test]
    fn exponential_field_derivatives() {
        let f = cosine().with_exp(0.5, 2.0);
        let y = [0.13];
        let expected = 0.5 * (2.0 * (2.0 * PI * 0.13).cos()).exp();
        assert!((f.eval(&y).unwrap() - expected).abs() < 1e-14);
        let h = 1e-4;
        let fd = (f.eval(&[y[0] + h]).unwrap() - f.eval(&[y[0] - h]).unwrap()) / (2.0 * h);
        assert!((f.gradient(&y).unwrap()[0] - fd).abs() < 1e-5 * fd.abs().max(1.0));
        let lap_fd = (f.eval(&[y[0] + h]).unwrap() - 2.0 * f.eval(&y).unwrap() + f.eval(&[y[0] - h]).unwrap()) / (h * h);
        assert!((f.laplacian(&y).unwrap() - lap_fd).abs() < 1e-4 * lap_fd.abs().max(1.0));
    }

    #[test]
    fn periodic_when_untilted() {
        let f = PeriodicScalarField::fourier_1d(&[(1, 0.4, 0.3), (3, -0.2, 0.1)]).with_period(2.5);
        for &y in &[0.0, 0.37, 1.9] {
            assert!((f.eval(&[y]).unwrap() - f.eval(&[y + 2.5]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn sup_bound_dominates_samples() {
        let f = PeriodicScalarField::fourier_1d(&[(0, 1.0, 0.0), (1, 0.5, 0.25), (2, 0.0, -0.3)]);
        let b = f.sup_bound().unwrap();
        for n in 0..500 {
            assert!(f.eval(&[n as f64 / 500.0]).unwrap() <= b);
        }
        let e = cosine().with_exp(1.0, -2.0);
        let be = e.sup_bound().unwrap();
        assert!((be - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn single_state_continuous_is_valid() {
        let m = ContinuousModel::single(cosine());
        assert!(validate(&m.into()).is_valid());
    }

    #[test]
    fn decoupled_discrete_states_are_reducible() {
        let m = DiscreteModel::new(
            vec![vec![1.0; 3]; 2],
            vec![vec![1.0; 3]; 2],
            vec![vec![vec![0.0; 3]; 2]; 2],
            Regime::Comparable,
        );
        let r = validate(&m.into());
        assert!(r.has(IssueKind::Reducible), "{r}");
    }

    #[test]
    fn zero_hop_rate_is_reported_with_location() {
        let mut sw = vec![vec![vec![1.0; 3]; 2]; 2];
        sw[0][0] = vec![0.0; 3];
        sw[1][1] = vec![0.0; 3];
        let mut m = DiscreteModel::new(vec![vec![1.0; 3]; 2], vec![vec![1.0; 3]; 2], sw, Regime::Comparable);
        m.hop_plus[0][2] = 0.0;
        let r = validate(&m.into());
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].kind, IssueKind::NonPositiveHopRate);
        assert!(r.issues[0].location.contains("state 0, site 2"));
    }

    #[test]
    fn negative_rate_sample_is_reported() {
        let rates = SwitchingRateMatrix::from_fn(2, |_, _| Some(PeriodicScalarField::fourier_1d(&[(0, 0.5, 0.0), (1, 1.0, 0.0)])));
        let m = ContinuousModel::new(vec![cosine(), cosine()], rates, Regime::Comparable);
        let r = validate(&m.into());
        assert!(r.has(IssueKind::NegativeRate));
        assert!(!r.has(IssueKind::Reducible));
    }

    #[test]
    fn averaged_regime_requires_pointwise_irreducibility() {
        let r12 = PeriodicScalarField::fourier_1d(&[(0, 1.0, 0.0), (1, 1.0, 0.0)]);
        let rates = SwitchingRateMatrix::from_fn(2, |a, _| Some(if a == 0 { r12.clone() } else { PeriodicScalarField::constant(1, 1.0) }));
        let m = ContinuousModel::new(vec![cosine(), cosine()], rates, Regime::Averaged);
        let r = validate(&m.clone().into());
        assert!(r.has(IssueKind::ReducibleAtPoint), "{r}");
        assert!(validate(&m.with_regime(Regime::Comparable).into()).is_valid());
    }

    #[test]
    fn validate_is_pure() {
        let m: Model = DiscreteModel::constant_walk(4, 0.0, 1.0).into();
        assert_eq!(validate(&m), validate(&m));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let text = r#"{"kind":"continuous","dim":1,"J":2,"regime":"I",
            "potentials":[{"coeffs":[[1,1.0,0.0]]},{"coeffs":[[1,0.0,1.0]],"slope":[0.5]}],
            "rates":[[null,{"coeffs":[[0,2.0,0.0]]}],[{"coeffs":[[0,1.0,0.0]],"exp":[1.0,2.0]},null]]}"#;
        let m = Model::from_json(text).unwrap();
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);

        let bad = r#"{"kind":"discrete","J":1,"regime":"I","ell":3,"hop_plus":[[1,1,1]],"hop_minus":[[1,1,1]],"colour":1}"#;
        assert!(Model::from_json(bad).is_err());
        let good = r#"{"kind":"discrete","J":1,"regime":"II","ell":3,"hop_plus":[[1,1,1]],"hop_minus":[[1,1,1]]}"#;
        assert!(Model::from_json(good).is_ok());
    }
}
