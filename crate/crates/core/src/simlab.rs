//! Seeded Monte-Carlo experiments on mixed discrete-continuous models.
//!
//! A replication is fully determined by `(master seed, n, rep)`: the sample is
//! drawn from a ChaCha8 stream seeded with [`child_seed`], and every method
//! in the experiment is run on that same sample. Methods consume no
//! randomness, so tables do not depend on execution order.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};

use crate::density::{fit_kde_indices, grid_export, DensityEstimate, GridBox};
use crate::error::{contract, invalid, Error, Result};
use crate::estimators::{
    estimate, estimate_two, support_indices, EstimatorConfig, Method, SupportKind,
};
use crate::functionals::{merge_breakpoints, BuiltinFunctional, Floor, Functional, UnivariateDensity};
use crate::kernels::{BandwidthRule, KernelSpec};
use crate::math::{self, SQRT_2PI};
use crate::quadrature::{adaptive_simpson, QuadratureConfig};
use crate::sample::{Dataset, TieRule};

/// Continuous component `F` of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "family", rename_all = "snake_case")
)]
pub enum ContinuousSpec {
    StandardNormal,
    Uniform01,
    /// `c0 + c1 tᵏ` on `[0, 1]`.
    Poly { c0: f64, c1: f64, k: f64 },
    BivariateStandardNormal,
}

impl ContinuousSpec {
    pub fn dim(&self) -> usize {
        match self {
            ContinuousSpec::BivariateStandardNormal => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ContinuousSpec::Poly { c0, c1, k } = *self {
            if !(k > 0.0 && k.is_finite() && c0.is_finite() && c1.is_finite()) {
                return Err(contract!("poly density needs finite c0, c1 and k > 0"));
            }
            let mass = c0 + c1 / (k + 1.0);
            if (mass - 1.0).abs() > 1e-12 {
                return Err(contract!(
                    "poly density {c0} + {c1} t^{k} integrates to {mass}, not 1"
                ));
            }
            // c0 + c1 tᵏ is monotone in t, so its endpoints bound it.
            if c0 < 0.0 || c0 + c1 < 0.0 {
                return Err(contract!("poly density {c0} + {c1} t^{k} is negative on [0, 1]"));
            }
        }
        Ok(())
    }

    /// Density at a point of matching dimension.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        match *self {
            ContinuousSpec::BivariateStandardNormal => std_normal_pdf(x[0]) * std_normal_pdf(x[1]),
            _ => self.pdf1(x[0]),
        }
    }

    fn pdf1(&self, t: f64) -> f64 {
        match *self {
            ContinuousSpec::StandardNormal => std_normal_pdf(t),
            ContinuousSpec::Uniform01 => {
                if (0.0..=1.0).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            ContinuousSpec::Poly { c0, c1, k } => {
                if (0.0..=1.0).contains(&t) {
                    c0 + c1 * math::powf(t, k)
                } else {
                    0.0
                }
            }
            ContinuousSpec::BivariateStandardNormal => 0.0,
        }
    }

    /// Univariate CDF.
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            ContinuousSpec::StandardNormal => math::normal_cdf(t),
            ContinuousSpec::Uniform01 => t.clamp(0.0, 1.0),
            ContinuousSpec::Poly { c0, c1, k } => {
                let t = t.clamp(0.0, 1.0);
                c0 * t + c1 * math::powf(t, k + 1.0) / (k + 1.0)
            }
            ContinuousSpec::BivariateStandardNormal => f64::NAN,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match *self {
            ContinuousSpec::StandardNormal => out.push(rng.sample(StandardNormal)),
            ContinuousSpec::Uniform01 => out.push(rng.random::<f64>()),
            ContinuousSpec::Poly { .. } => {
                let u = rng.random::<f64>();
                out.push(self.poly_quantile(u));
            }
            ContinuousSpec::BivariateStandardNormal => {
                out.push(rng.sample(StandardNormal));
                out.push(rng.sample(StandardNormal));
            }
        }
    }

    /// Inverse CDF of the poly density: safeguarded Newton on `C(t) = u`.
    fn poly_quantile(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = u;
        for _ in 0..200 {
            let r = self.cdf(t) - u;
            if r.abs() <= 1e-12 {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.pdf1(t);
            let newton = t - r / d;
            t = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 {
                break;
            }
        }
        t
    }
}

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    math::exp(-0.5 * x * x) / SQRT_2PI
}

impl UnivariateDensity for ContinuousSpec {
    fn density(&self, x: f64) -> f64 {
        self.pdf1(x)
    }

    fn breakpoints(&self, _: &QuadratureConfig) -> Vec<f64> {
        match self {
            ContinuousSpec::StandardNormal => vec![-12.0, 12.0],
            ContinuousSpec::Uniform01 | ContinuousSpec::Poly { .. } => vec![0.0, 1.0],
            ContinuousSpec::BivariateStandardNormal => Vec::new(),
        }
    }

    fn dim(&self) -> usize {
        ContinuousSpec::dim(self)
    }
}

/// Discrete component `H` of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "family", rename_all = "snake_case")
)]
pub enum DiscreteSpec {
    /// `Binomial(trials, p) / divisor`.
    Binomial {
        trials: u64,
        p: f64,
        #[cfg_attr(feature = "serde", serde(default = "one"))]
        divisor: f64,
    },
    /// `Poisson(λ) / divisor`.
    ScaledPoisson {
        lambda: f64,
        #[cfg_attr(feature = "serde", serde(default = "one"))]
        divisor: f64,
    },
    /// `(Poisson(λ), 0)` in the plane.
    PoissonOnAxis { lambda: f64 },
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

impl DiscreteSpec {
    pub fn dim(&self) -> usize {
        match self {
            DiscreteSpec::PoissonOnAxis { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DiscreteSpec::Binomial { p, divisor, .. } => {
                (0.0..=1.0).contains(&p) && divisor > 0.0 && divisor.is_finite()
            }
            DiscreteSpec::ScaledPoisson { lambda, divisor } => {
                lambda > 0.0 && lambda.is_finite() && divisor > 0.0 && divisor.is_finite()
            }
            DiscreteSpec::PoissonOnAxis { lambda } => lambda > 0.0 && lambda.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(contract!("invalid discrete component {self:?}"))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match *self {
            DiscreteSpec::Binomial { trials, p, divisor } => {
                let z = Binomial::new(trials, p).expect("validated").sample(rng);
                out.push(z as f64 / divisor);
            }
            DiscreteSpec::ScaledPoisson { lambda, divisor } => {
                let z: f64 = Poisson::new(lambda).expect("validated").sample(rng);
                out.push(z / divisor);
            }
            DiscreteSpec::PoissonOnAxis { lambda } => {
                let z: f64 = Poisson::new(lambda).expect("validated").sample(rng);
                out.push(z);
                out.push(0.0);
            }
        }
    }
}

/// `(1 − π) F + π H`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureSpec {
    pub pi: f64,
    pub continuous: ContinuousSpec,
    pub discrete: DiscreteSpec,
}

impl MixtureSpec {
    pub fn dim(&self) -> usize {
        self.continuous.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pi) {
            return Err(contract!("mixing proportion must lie in [0, 1), got {}", self.pi));
        }
        self.continuous.validate()?;
        self.discrete.validate()?;
        if self.continuous.dim() != self.discrete.dim() {
            return Err(contract!(
                "continuous component has dimension {} but discrete has {}",
                self.continuous.dim(),
                self.discrete.dim()
            ));
        }
        Ok(())
    }
}

/// A sample together with its latent labels (true = discrete draw).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub data: Dataset,
    pub labels: Vec<bool>,
}

impl LabeledSample {
    /// FNV-1a hash over the coordinates' bit patterns and the labels.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::default();
        for v in self.data.values() {
            h.write(&v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h.write(&[u8::from(l)]);
        }
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Draws `n` observations: a Bernoulli(π) label, then a draw from the
/// labelled component. Uses ChaCha8 seeded from `seed`.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<LabeledSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * spec.dim());
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let discrete = rng.random::<f64>() < spec.pi;
        if discrete {
            spec.discrete.draw(&mut rng, &mut values);
        } else {
            spec.continuous.draw(&mut rng, &mut values);
        }
        labels.push(discrete);
    }
    Ok(LabeledSample {
        data: Dataset::new(spec.dim(), values)?,
        labels,
    })
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at sample size `n`:
/// `splitmix64(master ⊕ splitmix64(n ⊕ splitmix64(rep)))`.
pub fn child_seed(master: u64, n: usize, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(n as u64 ^ splitmix64(rep as u64)))
}

/// Seed of the second sample in a two-sample replication.
pub fn second_sample_seed(child: u64) -> u64 {
    splitmix64(child ^ 1)
}

/// Reference value of a functional at the analytic continuous densities.
///
/// Closed forms are used for the entropy and quadratic functional of the
/// standard normal and uniform densities; otherwise `∫ν` is computed by
/// adaptive Simpson quadrature at `1e-10` relative tolerance, piecewise
/// between the densities' breakpoints.
pub fn true_value<T: Functional + ?Sized>(
    t: &T,
    f: &ContinuousSpec,
    g: Option<&ContinuousSpec>,
) -> Result<f64> {
    f.validate()?;
    if let Some(g) = g {
        g.validate()?;
    }
    if f.dim() != 1 || g.map_or(false, |g| g.dim() != 1) {
        return Err(contract!("reference values need univariate densities"));
    }
    let name = t.name();
    if g.is_none() {
        match (name.as_str(), f) {
            ("entropy", ContinuousSpec::StandardNormal) => {
                return Ok(0.5 * math::ln(2.0 * core::f64::consts::PI * core::f64::consts::E))
            }
            ("entropy", ContinuousSpec::Uniform01) => return Ok(0.0),
            ("quadratic", ContinuousSpec::StandardNormal) => {
                return Ok(0.5 / math::sqrt(core::f64::consts::PI))
            }
            ("quadratic", ContinuousSpec::Uniform01) => return Ok(1.0),
            _ => {}
        }
    }
    let q = QuadratureConfig::default();
    let fb = f.breakpoints(&q);
    let gb = g.map(|g| g.breakpoints(&q)).unwrap_or_default();
    let breaks = merge_breakpoints(&[&fb, &gb]);
    let eps = q.density_floor;
    let integrand = |x: f64| {
        let mut floor = Floor::new(eps);
        t.integrand(f.pdf1(x), g.map_or(0.0, |g| g.pdf1(x)), &mut floor)
    };
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += adaptive_simpson(&integrand, w[0], w[1], 1e-10);
    }
    Ok(t.phi(total, &mut Floor::new(eps)))
}

/// `∫|f̂ − f|` over `bounds` by the trapezoid rule on a regular grid.
pub fn miae(
    est: &DensityEstimate,
    f: &ContinuousSpec,
    bounds: &GridBox,
    points_per_dim: usize,
) -> Result<f64> {
    if est.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: est.dim(),
        });
    }
    let mut grid = grid_export(est, bounds, points_per_dim)?;
    let d = grid.dim;
    for (r, v) in grid.values.iter_mut().enumerate() {
        *v = (*v - f.pdf(&grid.coords[r * d..(r + 1) * d])).abs();
    }
    Ok(grid.trapezoid_integral())
}

/// Default L1 evaluation box for a continuous family.
pub fn default_l1_box(f: &ContinuousSpec) -> GridBox {
    match f {
        ContinuousSpec::StandardNormal => GridBox::interval(-8.0, 8.0),
        ContinuousSpec::Uniform01 | ContinuousSpec::Poly { .. } => GridBox::interval(-1.0, 2.0),
        ContinuousSpec::BivariateStandardNormal => {
            GridBox::new(vec![-6.0, -6.0], vec![6.0, 6.0])
        }
    }
    .expect("static box")
}

/// What an experiment measures.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum Target {
    /// Absolute error of a functional estimate.
    Functional(BuiltinFunctional),
    /// L1 distance of the KDE to the continuous density.
    DensityL1,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Functional(t) => write!(f, "{t}"),
            Target::DensityL1 => f.write_str("density_l1"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "density_l1" {
            Ok(Target::DensityL1)
        } else {
            Ok(Target::Functional(s.parse()?))
        }
    }
}

impl TryFrom<String> for Target {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Target> for String {
    fn from(t: Target) -> String {
        t.to_string()
    }
}

/// A method column of an experiment: a functional estimator, or a KDE on
/// one of the supports (`atom_aware`, `naive`, `oracle`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum ExperimentMethod {
    Estimator(Method),
    Kde(SupportKind),
}

impl ExperimentMethod {
    fn labels_needed(self) -> bool {
        match self {
            ExperimentMethod::Estimator(m) => m.support() == SupportKind::Labelled,
            ExperimentMethod::Kde(k) => k == SupportKind::Labelled,
        }
    }
}

impl fmt::Display for ExperimentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentMethod::Estimator(m) => write!(f, "{m}"),
            ExperimentMethod::Kde(SupportKind::Unique) => f.write_str("atom_aware"),
            ExperimentMethod::Kde(SupportKind::Full) => f.write_str("naive"),
            ExperimentMethod::Kde(SupportKind::Labelled) => f.write_str("oracle"),
        }
    }
}

impl FromStr for ExperimentMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "atom_aware" | "atom-aware" => Ok(ExperimentMethod::Kde(SupportKind::Unique)),
            "naive" => Ok(ExperimentMethod::Kde(SupportKind::Full)),
            "oracle" => Ok(ExperimentMethod::Kde(SupportKind::Labelled)),
            other => Ok(ExperimentMethod::Estimator(other.parse()?)),
        }
    }
}

impl TryFrom<String> for ExperimentMethod {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ExperimentMethod> for String {
    fn from(m: ExperimentMethod) -> String {
        m.to_string()
    }
}

#[cfg(feature = "serde")]
fn default_l1_points() -> usize {
    2001
}

/// Master seed used when a spec does not name one.
pub const DEFAULT_SEED: u64 = 42;

#[cfg(feature = "serde")]
fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A Monte-Carlo experiment: every `(n, rep)` cell draws one sample (two for
/// two-sample targets, with `m = n`) and runs every method on it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentSpec {
    pub name: String,
    pub model: MixtureSpec,
    /// Second-sample model for two-distribution functionals.
    #[cfg_attr(feature = "serde", serde(default))]
    pub model2: Option<MixtureSpec>,
    pub target: Target,
    pub methods: Vec<ExperimentMethod>,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    #[cfg_attr(feature = "serde", serde(default = "default_seed"))]
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub kernel: KernelSpec,
    #[cfg_attr(feature = "serde", serde(default))]
    pub bandwidth: BandwidthRule,
    #[cfg_attr(feature = "serde", serde(default))]
    pub tie_rule: TieRule,
    #[cfg_attr(feature = "serde", serde(default))]
    pub quadrature: QuadratureConfig,
    /// L1 evaluation box for density targets; defaults by family.
    #[cfg_attr(feature = "serde", serde(default))]
    pub l1_box: Option<GridBox>,
    #[cfg_attr(feature = "serde", serde(default = "default_l1_points"))]
    pub l1_points: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.reps == 0 {
            return Err(invalid!("reps must be at least 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(invalid!("n_grid must be a non-empty list of positive sizes"));
        }
        if self.methods.is_empty() {
            return Err(invalid!("at least one method is required"));
        }
        self.tie_rule.validate()?;
        self.quadrature.validate()?;
        match self.target {
            Target::DensityL1 => {
                if self.methods.iter().any(|m| !matches!(m, ExperimentMethod::Kde(_))) {
                    return Err(invalid!(
                        "density_l1 experiments take methods atom_aware | naive | oracle"
                    ));
                }
                if let Some(b) = &self.l1_box {
                    b.validate()?;
                    if b.dim() != self.model.dim() {
                        return Err(invalid!("l1_box dimension does not match the model"));
                    }
                }
                if self.l1_points < 2 {
                    return Err(invalid!("l1_points must be at least 2"));
                }
            }
            Target::Functional(t) => {
                if self.methods.iter().any(|m| !matches!(m, ExperimentMethod::Estimator(_))) {
                    return Err(invalid!("functional experiments take estimator methods"));
                }
                if self.model.dim() != 1 {
                    return Err(invalid!("functional experiments need a univariate model"));
                }
                match (t.arity(), &self.model2) {
                    (crate::functionals::Arity::Two, Some(m2)) => {
                        m2.validate()?;
                        if m2.dim() != 1 {
                            return Err(invalid!("model2 must be univariate"));
                        }
                    }
                    (crate::functionals::Arity::Two, None) => {
                        return Err(invalid!("{t} needs model2 for the second sample"))
                    }
                    (crate::functionals::Arity::One, Some(_)) => {
                        return Err(invalid!("{t} is a one-sample functional; drop model2"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn estimator_config(&self, method: Method) -> EstimatorConfig {
        EstimatorConfig {
            method,
            kernel: self.kernel.clone(),
            bw: self.bandwidth,
            tie_rule: self.tie_rule,
            quad: self.quadrature,
        }
    }
}

/// Reference value of the experiment's target (`None` for density targets).
pub fn experiment_truth(spec: &ExperimentSpec) -> Result<Option<f64>> {
    match spec.target {
        Target::DensityL1 => Ok(None),
        Target::Functional(t) => Ok(Some(true_value(
            &t,
            &spec.model.continuous,
            spec.model2.as_ref().map(|m| &m.continuous),
        )?)),
    }
}

/// One `(n, rep)` cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub n: usize,
    pub rep: usize,
    /// Digest of the sample(s) every method was run on.
    pub digest: u64,
    /// Per method, in spec order: absolute error (or L1 distance).
    pub errors: Vec<f64>,
    /// Per method: the raw estimate (equal to the error for density targets).
    pub estimates: Vec<f64>,
    pub warnings: usize,
}

/// Runs every method of `spec` on the sample of cell `(n, rep)`.
pub fn run_replication(
    spec: &ExperimentSpec,
    truth: Option<f64>,
    n: usize,
    rep: usize,
) -> Result<Replication> {
    let seed = child_seed(spec.seed, n, rep);
    let x = sample_mixture(&spec.model, n, seed)?;
    let y = match (&spec.target, &spec.model2) {
        (Target::Functional(t), Some(m2)) if t.arity() == crate::functionals::Arity::Two => {
            Some(sample_mixture(m2, n, second_sample_seed(seed))?)
        }
        _ => None,
    };
    let digest = match &y {
        Some(y) => splitmix64(x.digest() ^ y.digest().rotate_left(17)),
        None => x.digest(),
    };
    let mut errors = Vec::with_capacity(spec.methods.len());
    let mut estimates = Vec::with_capacity(spec.methods.len());
    let mut warnings = 0;
    for &method in &spec.methods {
        let labels_x = method.labels_needed().then_some(x.labels.as_slice());
        match (method, spec.target) {
            (ExperimentMethod::Estimator(m), Target::Functional(t)) => {
                let cfg = spec.estimator_config(m);
                let report = match &y {
                    Some(y) => {
                        let labels_y = method.labels_needed().then_some(y.labels.as_slice());
                        estimate_two(&x.data, &y.data, labels_x, labels_y, &t, &cfg)?
                    }
                    None => estimate(&x.data, labels_x, &t, &cfg)?,
                };
                warnings += report.warnings.len();
                let truth = truth.ok_or_else(|| contract!("missing reference value"))?;
                estimates.push(report.value);
                errors.push((report.value - truth).abs());
            }
            (ExperimentMethod::Kde(kind), Target::DensityL1) => {
                let idx = support_indices(&x.data, kind, labels_x, spec.tie_rule)?;
                let est = fit_kde_indices(&x.data, &idx, &spec.kernel, &spec.bandwidth)?;
                let bounds = spec
                    .l1_box
                    .clone()
                    .unwrap_or_else(|| default_l1_box(&spec.model.continuous));
                let l1 = miae(&est, &spec.model.continuous, &bounds, spec.l1_points)?;
                estimates.push(l1);
                errors.push(l1);
            }
            _ => return Err(invalid!("method {method} does not apply to target {}", spec.target)),
        }
    }
    Ok(Replication {
        n,
        rep,
        digest,
        errors,
        estimates,
        warnings,
    })
}

/// Mean absolute error of one method at one sample size.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    pub mae: f64,
    /// Sample standard deviation of the absolute errors.
    pub sd: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryTable {
    pub name: String,
    pub target: String,
    pub true_value: Option<f64>,
    /// Method-major, `n` in grid order.
    pub rows: Vec<SummaryRow>,
    /// Log-log slope of MAE against `n` per method, when the grid has at
    /// least three sizes.
    pub slopes: Vec<(String, f64)>,
    pub warnings: usize,
}

/// Aggregates replications (in any order) into a table.
pub fn summarize(
    spec: &ExperimentSpec,
    truth: Option<f64>,
    reps: &[Replication],
) -> Result<SummaryTable> {
    let mut rows = Vec::new();
    for (mi, method) in spec.methods.iter().enumerate() {
        for &n in &spec.n_grid {
            let mut cell: Vec<(usize, f64)> = reps
                .iter()
                .filter(|r| r.n == n)
                .map(|r| (r.rep, r.errors[mi]))
                .collect();
            // Fixed summation order regardless of how replications were scheduled.
            cell.sort_by_key(|&(rep, _)| rep);
            let errs: Vec<f64> = cell.into_iter().map(|(_, e)| e).collect();
            rows.push(SummaryRow {
                method: method.to_string(),
                n,
                mae: stats::mean(&errs),
                sd: stats::variance(&errs).map_or(0.0, math::sqrt),
                reps: errs.len(),
            });
        }
    }
    let mut table = SummaryTable {
        name: spec.name.clone(),
        target: spec.target.to_string(),
        true_value: truth,
        rows,
        slopes: Vec::new(),
        warnings: reps.iter().map(|r| r.warnings).sum(),
    };
    for method in &spec.methods {
        let name = method.to_string();
        if let Ok(s) = rate_fit(&table, &name) {
            table.slopes.push((name, s));
        }
    }
    Ok(table)
}

/// Runs every cell sequentially.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SummaryTable> {
    spec.validate()?;
    let truth = experiment_truth(spec)?;
    let mut reps = Vec::with_capacity(spec.n_grid.len() * spec.reps);
    for &n in &spec.n_grid {
        for rep in 0..spec.reps {
            reps.push(run_replication(spec, truth, n, rep)?);
        }
    }
    summarize(spec, truth, &reps)
}

/// Least-squares slope of `log(mae)` against `log(n)` for one method.
pub fn rate_fit(table: &SummaryTable, method: &str) -> Result<f64> {
    let pts: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.n as f64, r.mae))
        .collect();
    let mut ns: Vec<f64> = pts.iter().map(|p| p.0).collect();
    ns.sort_unstable_by(f64::total_cmp);
    ns.dedup();
    if ns.len() < 3 {
        return Err(invalid!(
            "rate fit for '{method}' needs at least 3 distinct n, got {}",
            ns.len()
        ));
    }
    if pts.iter().any(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Degenerate(alloc::format!(
            "rate fit for '{method}' needs positive finite errors"
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| math::ln(p.0)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| math::ln(p.1)).collect();
    Ok(stats::ols_slope(&xs, &ys))
}

/// Small statistics helpers for summarising experiments.
pub mod stats {
    use alloc::vec::Vec;

    use crate::math::{self, compensated_sum};

    pub fn mean(v: &[f64]) -> f64 {
        if v.is_empty() {
            return f64::NAN;
        }
        compensated_sum(v.iter().copied()) / v.len() as f64
    }

    /// Sample variance (`n − 1` denominator); `None` below two values.
    pub fn variance(v: &[f64]) -> Option<f64> {
        if v.len() < 2 {
            return None;
        }
        let m = mean(v);
        Some(compensated_sum(v.iter().map(|x| (x - m) * (x - m))) / (v.len() - 1) as f64)
    }

    pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let (mx, my) = (mean(xs), mean(ys));
        let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
        let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
        sxy / sxx
    }

    /// Ranks starting at 1, ties receiving their average rank.
    pub fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = alloc::vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &o in &order[i..=j] {
                r[o] = avg;
            }
            i = j + 1;
        }
        r
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let (mx, my) = (mean(x), mean(y));
        let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
        let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
        let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
        sxy / math::sqrt(sxx * syy)
    }

    pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
        pearson(&ranks(x), &ranks(y))
    }

    /// One-sided p-value `P(ρ ≤ ρ_obs)` under independence. Exact by
    /// enumerating all rank permutations for up to 9 points, a normal
    /// approximation `ρ √(n − 1)` above that.
    pub fn spearman_p_negative(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let rho = spearman(x, y);
        if n > 9 {
            return math::normal_cdf(rho * math::sqrt((n - 1) as f64));
        }
        let rx = ranks(x);
        let mut ry = ranks(y);
        let (mut hits, mut total) = (0u64, 0u64);
        let tol = 1e-12;
        permute(&mut ry, 0, &mut |perm| {
            total += 1;
            if pearson(&rx, perm) <= rho + tol {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    }

    fn permute(v: &mut [f64], k: usize, f: &mut impl FnMut(&[f64])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    /// Kolmogorov distance `sup |F̂ₙ − F|` of a sample to a continuous CDF.
    pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_unstable_by(f64::total_cmp);
        let n = v.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &x) in v.iter().enumerate() {
            let c = cdf(x);
            d = d.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
        }
        d
    }

    pub fn ks_to_standard_normal(values: &[f64]) -> f64 {
        ks_distance(values, math::normal_cdf)
    }
}
