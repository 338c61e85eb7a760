//! Influence-corrected estimators of density functionals.
//!
//! All estimators share one recipe: pick a support (the observations seen
//! exactly once, the full sample, or the label-selected continuous draws),
//! fit a univariate KDE on it and correct the plug-in value `T(f̂)` with the
//! average influence function. They differ in how the plug-in and the
//! correction are decoupled:
//!
//! * data splitting (DS) fits on one half of the support, averages `ψ` over
//!   the other half, and symmetrises;
//! * leave-one-out (LOO) averages `T(f̂⁽⁻ⁱ⁾) + ψ(Xᵢ; f̂⁽⁻ⁱ⁾)` over the support.
//!
//! On duplicate-free data the atom-aware support is the whole sample, so the
//! atom-aware estimators coincide with the classical ones.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::density::{reference_size, DensityEstimate};
use crate::error::{contract, invalid, Error, Result};
use crate::functionals::{
    evaluate_functional, functional_plan, influence_moments, Arity, Floor, Functional, Side,
    UnivariateDensity,
};
use crate::kernels::{BandwidthRule, KernelSpec};
use crate::math::KahanSum;
use crate::quadrature::{QuadPlan, QuadratureConfig};
use crate::sample::{partition, split_at_half, Dataset, TieRule};

/// Estimator family and support choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum Method {
    /// Data splitting on the unique observations.
    Ds,
    /// Leave-one-out on the unique observations.
    #[default]
    Loo,
    /// Data splitting on the full sample.
    NaiveDs,
    /// Leave-one-out on the full sample.
    NaiveLoo,
    /// Data splitting on the observations labelled continuous.
    OracleDs,
    /// Leave-one-out on the observations labelled continuous.
    OracleLoo,
}

/// Which observations an estimator builds its densities from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportKind {
    Unique,
    Full,
    Labelled,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ds,
        Method::Loo,
        Method::NaiveDs,
        Method::NaiveLoo,
        Method::OracleDs,
        Method::OracleLoo,
    ];

    pub fn is_loo(self) -> bool {
        matches!(self, Method::Loo | Method::NaiveLoo | Method::OracleLoo)
    }

    pub fn support(self) -> SupportKind {
        match self {
            Method::Ds | Method::Loo => SupportKind::Unique,
            Method::NaiveDs | Method::NaiveLoo => SupportKind::Full,
            Method::OracleDs | Method::OracleLoo => SupportKind::Labelled,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ds => "ds",
            Method::Loo => "loo",
            Method::NaiveDs => "naive_ds",
            Method::NaiveLoo => "naive_loo",
            Method::OracleDs => "oracle_ds",
            Method::OracleLoo => "oracle_loo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `-` or `_` as separator (`naive-loo`, `naive_loo`).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| {
                invalid!("unknown method '{s}' (expected ds | loo | naive-ds | naive-loo | oracle-ds | oracle-loo)")
            })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        String::from(m.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default)
)]
pub struct EstimatorConfig {
    pub method: Method,
    pub kernel: KernelSpec,
    pub bw: BandwidthRule,
    pub tie_rule: TieRule,
    pub quad: QuadratureConfig,
}

impl EstimatorConfig {
    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }
}

/// Which part of a support a warning refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum SupportPart {
    All,
    FrontHalf,
    BackHalf,
}

/// Non-fatal conditions attached to an [`EstimateReport`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "snake_case")
)]
pub enum Warning {
    /// A support set was empty; its density was taken to be zero.
    EmptySupport { sample: u8, part: SupportPart },
    /// Silverman's rule was undefined on the support; `h = 1` was used.
    BandwidthFallback { sample: u8 },
    QuadratureNotConverged,
    /// More influence terms hit the density floor than 1% of the sample size.
    ClampBudgetExceeded { clamped: usize, budget: f64 },
    /// The estimate was not finite and was replaced by 0.
    NonFiniteReplaced,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::EmptySupport { sample, part } => {
                write!(f, "sample {sample}: empty support ({part:?}); zero density used")
            }
            Warning::BandwidthFallback { sample } => {
                write!(f, "sample {sample}: bandwidth rule undefined; h = 1 used")
            }
            Warning::QuadratureNotConverged => f.write_str("quadrature refinement did not converge"),
            Warning::ClampBudgetExceeded { clamped, budget } => write!(
                f,
                "{clamped} influence terms hit the density floor (budget {budget})"
            ),
            Warning::NonFiniteReplaced => f.write_str("non-finite estimate replaced by 0"),
        }
    }
}

/// Output of an estimator with diagnostics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateReport {
    pub value: f64,
    pub method: Method,
    pub functional: String,
    pub n: usize,
    pub m: Option<usize>,
    /// Size of the support the first density was built from.
    pub n_unique: usize,
    pub m_unique: Option<usize>,
    /// `1 − n_unique / n`.
    pub pi_hat: f64,
    pub pi_hat2: Option<f64>,
    pub h: f64,
    pub h2: Option<f64>,
    /// Influence terms whose evaluation hit the density floor.
    pub clamp_count: usize,
    /// Quadrature nodes at which the integrand hit the floor.
    pub integrand_clamps: usize,
    pub warnings: Vec<Warning>,
}

impl EstimateReport {
    pub fn has_warning(&self, pred: impl Fn(&Warning) -> bool) -> bool {
        self.warnings.iter().any(pred)
    }
}

#[derive(Default)]
struct Diagnostics {
    warnings: Vec<Warning>,
    psi_clamps: usize,
    integrand_clamps: usize,
}

impl Diagnostics {
    fn warn(&mut self, w: Warning) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }
}

/// A support set with its bandwidth.
struct Fitted {
    n: usize,
    indices: Vec<usize>,
    points: Vec<f64>,
    h: f64,
}

impl Fitted {
    fn pi_hat(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            1.0 - self.points.len() as f64 / self.n as f64
        }
    }

    fn estimate(&self, indices: &[usize], data: &Dataset, kernel: &KernelSpec) -> DensityEstimate {
        DensityEstimate::new(1, data.gather(indices), kernel.clone(), self.h)
            .expect("bandwidth validated at fit time")
    }
}

fn check_univariate(data: &Dataset) -> Result<()> {
    if data.dim() != 1 {
        return Err(contract!(
            "functional estimators need univariate data, got dimension {}",
            data.dim()
        ));
    }
    Ok(())
}

fn check_arity<T: Functional + ?Sized>(t: &T, want: Arity) -> Result<()> {
    if t.arity() != want {
        let (have, need) = match want {
            Arity::One => ("two", "one"),
            Arity::Two => ("one", "two"),
        };
        return Err(contract!(
            "{} takes {have} densities but the estimator supplies {need}",
            t.name()
        ));
    }
    Ok(())
}

/// Ascending indices of the observations a method builds its density from.
/// `labels[i]` is true for observations drawn from the discrete component.
pub fn support_indices(
    data: &Dataset,
    kind: SupportKind,
    labels: Option<&[bool]>,
    rule: TieRule,
) -> Result<Vec<usize>> {
    match kind {
        SupportKind::Unique => Ok(partition(data, rule)?.unique_indices().to_vec()),
        SupportKind::Full => Ok((0..data.len()).collect()),
        SupportKind::Labelled => {
            let labels = labels.ok_or_else(|| {
                contract!("oracle estimators need continuous/discrete labels")
            })?;
            if labels.len() != data.len() {
                return Err(contract!(
                    "{} labels supplied for {} observations",
                    labels.len(),
                    data.len()
                ));
            }
            Ok((0..data.len()).filter(|&i| !labels[i]).collect())
        }
    }
}

fn fit_support(
    data: &Dataset,
    labels: Option<&[bool]>,
    cfg: &EstimatorConfig,
    sample: u8,
    diag: &mut Diagnostics,
) -> Result<Fitted> {
    cfg.tie_rule.validate()?;
    let indices = support_indices(data, cfg.method.support(), labels, cfg.tie_rule)?;
    let points = data.gather(&indices);
    let rule = cfg.bw.with_dim(1);
    let h = match rule.bandwidth(&points, 1, reference_size(&rule, points.len(), data.len())) {
        Ok(h) => h,
        Err(Error::Degenerate(_)) | Err(Error::InvalidArgument(_))
            if matches!(rule, BandwidthRule::Silverman) =>
        {
            diag.warn(Warning::BandwidthFallback { sample });
            1.0
        }
        Err(e) => return Err(e),
    };
    if points.is_empty() {
        diag.warn(Warning::EmptySupport {
            sample,
            part: SupportPart::All,
        });
    }
    Ok(Fitted {
        n: data.len(),
        indices,
        points,
        h,
    })
}

fn finish<T: Functional + ?Sized>(
    mut value: f64,
    method: Method,
    t: &T,
    first: &Fitted,
    second: Option<&Fitted>,
    mut diag: Diagnostics,
) -> EstimateReport {
    if !value.is_finite() {
        value = 0.0;
        diag.warn(Warning::NonFiniteReplaced);
    }
    let total = first.n + second.map_or(0, |s| s.n);
    let budget = 0.01 * total as f64;
    if diag.psi_clamps as f64 > budget {
        diag.warn(Warning::ClampBudgetExceeded {
            clamped: diag.psi_clamps,
            budget,
        });
    }
    EstimateReport {
        value,
        method,
        functional: t.name(),
        n: first.n,
        m: second.map(|s| s.n),
        n_unique: first.points.len(),
        m_unique: second.map(|s| s.points.len()),
        pi_hat: first.pi_hat(),
        pi_hat2: second.map(Fitted::pi_hat),
        h: first.h,
        h2: second.map(|s| s.h),
        clamp_count: diag.psi_clamps,
        integrand_clamps: diag.integrand_clamps,
        warnings: diag.warnings,
    }
}

/// Dispatches a one-sample estimate on `cfg.method`. `labels` (true =
/// discrete) are required by the oracle methods only.
pub fn estimate<T: Functional + ?Sized>(
    data: &Dataset,
    labels: Option<&[bool]>,
    t: &T,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    check_arity(t, Arity::One)?;
    check_univariate(data)?;
    cfg.quad.validate()?;
    let mut diag = Diagnostics::default();
    let fit = fit_support(data, labels, cfg, 1, &mut diag)?;
    let value = if cfg.method.is_loo() {
        loo_one(data, &fit, t, cfg, &mut diag)?
    } else {
        ds_one(data, &fit, t, cfg, &mut diag)?
    };
    Ok(finish(value, cfg.method, t, &fit, None, diag))
}

/// Dispatches a two-sample estimate on `cfg.method`.
pub fn estimate_two<T: Functional + ?Sized>(
    x: &Dataset,
    y: &Dataset,
    labels_x: Option<&[bool]>,
    labels_y: Option<&[bool]>,
    t: &T,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    check_arity(t, Arity::Two)?;
    check_univariate(x)?;
    check_univariate(y)?;
    cfg.quad.validate()?;
    let mut diag = Diagnostics::default();
    let fx = fit_support(x, labels_x, cfg, 1, &mut diag)?;
    let fy = fit_support(y, labels_y, cfg, 2, &mut diag)?;
    let value = if cfg.method.is_loo() {
        loo_two(x, y, &fx, &fy, t, cfg, &mut diag)?
    } else {
        ds_two(x, y, &fx, &fy, t, cfg, &mut diag)?
    };
    Ok(finish(value, cfg.method, t, &fx, Some(&fy), diag))
}

/// Atom-aware data-splitting estimate of a one-sample functional.
pub fn estimate_ds_one<T: Functional + ?Sized>(
    data: &Dataset,
    t: &T,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, None, t, &cfg.with_method(Method::Ds))
}

/// Atom-aware leave-one-out estimate of a one-sample functional.
pub fn estimate_loo_one<T: Functional + ?Sized>(
    data: &Dataset,
    t: &T,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate(data, None, t, &cfg.with_method(Method::Loo))
}

/// Atom-aware data-splitting estimate of a two-sample functional.
pub fn estimate_ds_two<T: Functional + ?Sized>(
    x: &Dataset,
    y: &Dataset,
    t: &T,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate_two(x, y, None, None, t, &cfg.with_method(Method::Ds))
}

/// Atom-aware leave-one-out estimate of a two-sample functional.
pub fn estimate_loo_two<T: Functional + ?Sized>(
    x: &Dataset,
    y: &Dataset,
    t: &T,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    estimate_two(x, y, None, None, t, &cfg.with_method(Method::Loo))
}

fn note_quadrature(converged: bool, clamps: usize, diag: &mut Diagnostics) {
    if !converged {
        diag.warn(Warning::QuadratureNotConverged);
    }
    diag.integrand_clamps += clamps;
}

fn note_empty_half(len: usize, sample: u8, part: SupportPart, diag: &mut Diagnostics) {
    if len == 0 {
        diag.warn(Warning::EmptySupport { sample, part });
    }
}

/// `T(f̂_front) + mean_{back} ψ(X; f̂_front)`.
fn ds_one_half<T: Functional + ?Sized>(
    data: &Dataset,
    fit: &Fitted,
    front: &[usize],
    back: &[usize],
    t: &T,
    cfg: &EstimatorConfig,
    diag: &mut Diagnostics,
) -> Result<f64> {
    let est = fit.estimate(front, data, &cfg.kernel);
    let tv = evaluate_functional(t, &est, None, &cfg.quad)?;
    note_quadrature(tv.converged, tv.clamp_count, diag);
    let mut acc = KahanSum::default();
    for x in data.gather(back) {
        let mut floor = Floor::new(cfg.quad.density_floor);
        acc.add(t.influence_f(est.eval1(x), 0.0, tv.integral, &mut floor));
        diag.psi_clamps += usize::from(floor.count() > 0);
    }
    Ok(tv.value + acc.value() / back.len().max(1) as f64)
}

fn ds_one<T: Functional + ?Sized>(
    data: &Dataset,
    fit: &Fitted,
    t: &T,
    cfg: &EstimatorConfig,
    diag: &mut Diagnostics,
) -> Result<f64> {
    let (front, back) = split_at_half(&fit.indices, fit.n);
    note_empty_half(front.len(), 1, SupportPart::FrontHalf, diag);
    note_empty_half(back.len(), 1, SupportPart::BackHalf, diag);
    let t1 = ds_one_half(data, fit, &front, &back, t, cfg, diag)?;
    let t2 = ds_one_half(data, fit, &back, &front, t, cfg, diag)?;
    Ok(0.5 * (t1 + t2))
}

/// `T(f̂_fx, ĝ_fy) + mean_{bx} ψ_f + mean_{by} ψ_g`.
#[allow(clippy::too_many_arguments)]
fn ds_two_half<T: Functional + ?Sized>(
    x: &Dataset,
    y: &Dataset,
    (fitx, fity): (&Fitted, &Fitted),
    (fx, bx): (&[usize], &[usize]),
    (fy, by): (&[usize], &[usize]),
    t: &T,
    cfg: &EstimatorConfig,
    diag: &mut Diagnostics,
) -> Result<f64> {
    let f = fitx.estimate(fx, x, &cfg.kernel);
    let g = fity.estimate(fy, y, &cfg.kernel);
    let tv = evaluate_functional(t, &f, Some(&g), &cfg.quad)?;
    note_quadrature(tv.converged, tv.clamp_count, diag);
    let eps = cfg.quad.density_floor;
    let mut acc_f = KahanSum::default();
    for u in x.gather(bx) {
        let mut floor = Floor::new(eps);
        acc_f.add(t.influence_f(f.eval1(u), g.eval1(u), tv.integral, &mut floor));
        diag.psi_clamps += usize::from(floor.count() > 0);
    }
    let mut acc_g = KahanSum::default();
    for u in y.gather(by) {
        let mut floor = Floor::new(eps);
        acc_g.add(t.influence_g(f.eval1(u), g.eval1(u), tv.integral, &mut floor));
        diag.psi_clamps += usize::from(floor.count() > 0);
    }
    Ok(tv.value
        + acc_f.value() / bx.len().max(1) as f64
        + acc_g.value() / by.len().max(1) as f64)
}

fn ds_two<T: Functional + ?Sized>(
    x: &Dataset,
    y: &Dataset,
    fitx: &Fitted,
    fity: &Fitted,
    t: &T,
    cfg: &EstimatorConfig,
    diag: &mut Diagnostics,
) -> Result<f64> {
    let (fx, bx) = split_at_half(&fitx.indices, fitx.n);
    let (fy, by) = split_at_half(&fity.indices, fity.n);
    for (len, sample, part) in [
        (fx.len(), 1, SupportPart::FrontHalf),
        (bx.len(), 1, SupportPart::BackHalf),
        (fy.len(), 2, SupportPart::FrontHalf),
        (by.len(), 2, SupportPart::BackHalf),
    ] {
        note_empty_half(len, sample, part, diag);
    }
    let fits = (fitx, fity);
    let t1 = ds_two_half(x, y, fits, (&fx, &bx), (&fy, &by), t, cfg, diag)?;
    let t2 = ds_two_half(x, y, fits, (&bx, &fx), (&by, &fy), t, cfg, diag)?;
    Ok(0.5 * (t1 + t2))
}

/// Kernel sums of a full estimate at the quadrature nodes, for forming
/// leave-one-out densities `(S(u) − K_h(u − Xᵢ)) / (N − 1)` in `O(1)`.
struct LooSide<'a> {
    est: &'a DensityEstimate,
    node_sums: Vec<f64>,
    denom: f64,
    /// Half-width of the node window a left-out point affects.
    reach: f64,
}

impl<'a> LooSide<'a> {
    fn new(est: &'a DensityEstimate, plan: &QuadPlan) -> Self {
        let radius = est.kernel().cutoff();
        Self {
            est,
            node_sums: plan.nodes().iter().map(|&u| est.kernel_sum1(u)).collect(),
            denom: (est.len().max(2) - 1) as f64,
            reach: radius * est.h() * (1.0 + 1e-12),
        }
    }

    /// All-points estimate rescaled to the leave-one-out normaliser.
    #[inline]
    fn base(&self, k: usize) -> f64 {
        if self.est.len() <= 1 {
            0.0
        } else {
            self.node_sums[k] / self.denom
        }
    }

    /// Leave-one-out estimate at node `k` without the point `left`.
    #[inline]
    fn without(&self, k: usize, node: f64, left: f64) -> f64 {
        if self.est.len() <= 1 {
            0.0
        } else {
            (self.node_sums[k] - self.est.kernel_between(node, left)) / self.denom
        }
    }

    /// Leave-one-out estimate at an arbitrary point `u`, given `S(u)`.
    #[inline]
    fn without_at(&self, sum_u: f64, u: f64, left: f64) -> f64 {
        if self.est.len() <= 1 {
            0.0
        } else {
            (sum_u - self.est.kernel_between(u, left)) / self.denom
        }
    }

    fn window(&self, nodes: &[f64], x: f64) -> (usize, usize) {
        let lo = nodes.partition_point(|&u| u < x - self.reach);
        let hi = nodes.partition_point(|&u| u <= x + self.reach);
        (lo, hi)
    }
}

fn loo_one<T: Functional + ?Sized>(
    data: &Dataset,
    fit: &Fitted,
    t: &T,
    cfg: &EstimatorConfig,
    diag: &mut Diagnostics,
) -> Result<f64> {
    let est = fit.estimate(&fit.indices, data, &cfg.kernel);
    let eps = cfg.quad.density_floor;
    let n_sup = fit.points.len();
    if n_sup <= 1 {
        // f̂⁽⁻ⁱ⁾ is identically zero.
        let zero = DensityEstimate::zero(1, cfg.kernel.clone(), fit.h)?;
        let tv = evaluate_functional(t, &zero, None, &cfg.quad)?;
        note_quadrature(tv.converged, tv.clamp_count, diag);
        let mut floor = Floor::new(eps);
        let psi = if n_sup == 1 {
            t.influence_f(0.0, 0.0, tv.integral, &mut floor)
        } else {
            0.0
        };
        diag.psi_clamps += usize::from(floor.count() > 0);
        return Ok(tv.value + psi);
    }

    let (full, plan) = functional_plan(t, &est, None, &cfg.quad)?;
    note_quadrature(full.converged, 0, diag);
    let side = LooSide::new(&est, &plan);
    let nodes = plan.nodes();
    let weights = plan.weights();

    let mut floor = Floor::new(eps);
    let base: Vec<f64> = (0..nodes.len())
        .map(|k| t.integrand(side.base(k), 0.0, &mut floor))
        .collect();
    let base_total = plan.integrate_values(&base);

    let mut acc = KahanSum::default();
    for (i, &x) in fit.points.iter().enumerate() {
        let (lo, hi) = side.window(nodes, x);
        let mut delta = KahanSum::default();
        for k in lo..hi {
            let v = t.integrand(side.without(k, nodes[k], x), 0.0, &mut floor);
            delta.add(weights[k] * (v - base[k]));
        }
        let integral = base_total + delta.value();
        let mut pf = Floor::new(eps);
        let fx = est.loo_from_sum(est.kernel_sum1(x), i, &[x]);
        acc.add(t.phi(integral, &mut pf) + t.influence_f(fx, 0.0, integral, &mut pf));
        diag.psi_clamps += usize::from(pf.count() > 0);
    }
    diag.integrand_clamps += floor.count();
    Ok(acc.value() / n_sup as f64)
}

/// Visits the union of two half-open index ranges once each, in order.
fn for_each_in_union(a: (usize, usize), b: (usize, usize), mut f: impl FnMut(usize)) {
    let (first, second) = if a.0 <= b.0 { (a, b) } else { (b, a) };
    if second.0 <= first.1 {
        (first.0..first.1.max(second.1)).for_each(&mut f);
    } else {
        (first.0..first.1).for_each(&mut f);
        (second.0..second.1).for_each(&mut f);
    }
}

#[allow(clippy::too_many_arguments)]
fn loo_two<T: Functional + ?Sized>(
    x: &Dataset,
    y: &Dataset,
    fitx: &Fitted,
    fity: &Fitted,
    t: &T,
    cfg: &EstimatorConfig,
    diag: &mut Diagnostics,
) -> Result<f64> {
    let f = fitx.estimate(&fitx.indices, x, &cfg.kernel);
    let g = fity.estimate(&fity.indices, y, &cfg.kernel);
    let (nx, ny) = (fitx.points.len(), fity.points.len());
    let eps = cfg.quad.density_floor;
    let rounds = nx.max(ny);
    if rounds == 0 {
        let tv = evaluate_functional(t, &f, Some(&g), &cfg.quad)?;
        note_quadrature(tv.converged, tv.clamp_count, diag);
        return Ok(tv.value);
    }

    let (full, plan) = functional_plan(t, &f, Some(&g), &cfg.quad)?;
    note_quadrature(full.converged, 0, diag);
    let (sf, sg) = (LooSide::new(&f, &plan), LooSide::new(&g, &plan));
    let nodes = plan.nodes();
    let weights = plan.weights();
    // With an empty support the density is zero and nothing is left out.
    let loo_f = |k: usize, u: f64, left: Option<f64>| match left {
        Some(l) => sf.without(k, u, l),
        None => 0.0,
    };
    let loo_g = |k: usize, u: f64, left: Option<f64>| match left {
        Some(l) => sg.without(k, u, l),
        None => 0.0,
    };

    let mut floor = Floor::new(eps);
    let base: Vec<f64> = (0..nodes.len())
        .map(|k| {
            let fb = if nx > 0 { sf.base(k) } else { 0.0 };
            let gb = if ny > 0 { sg.base(k) } else { 0.0 };
            t.integrand(fb, gb, &mut floor)
        })
        .collect();
    let base_total = plan.integrate_values(&base);

    // Full kernel sums of each estimate at the other sample's points.
    let f_at_x: Vec<f64> = fitx.points.iter().map(|&u| f.kernel_sum1(u)).collect();
    let g_at_x: Vec<f64> = fitx.points.iter().map(|&u| g.kernel_sum1(u)).collect();
    let f_at_y: Vec<f64> = fity.points.iter().map(|&u| f.kernel_sum1(u)).collect();
    let g_at_y: Vec<f64> = fity.points.iter().map(|&u| g.kernel_sum1(u)).collect();

    let mut acc = KahanSum::default();
    for i in 0..rounds {
        let j = (nx > 0).then(|| i % nx);
        let k = (ny > 0).then(|| i % ny);
        let xj = j.map(|j| fitx.points[j]);
        let yk = k.map(|k| fity.points[k]);
        let wx = xj.map_or((0, 0), |v| sf.window(nodes, v));
        let wy = yk.map_or((0, 0), |v| sg.window(nodes, v));
        let mut delta = KahanSum::default();
        for_each_in_union(wx, wy, |q| {
            let u = nodes[q];
            let v = t.integrand(loo_f(q, u, xj), loo_g(q, u, yk), &mut floor);
            delta.add(weights[q] * (v - base[q]));
        });
        let integral = base_total + delta.value();

        let mut pf = Floor::new(eps);
        let mut term = t.phi(integral, &mut pf);
        let f_loo = |sum: f64, u: f64| xj.map_or(0.0, |l| sf.without_at(sum, u, l));
        let g_loo = |sum: f64, u: f64| yk.map_or(0.0, |l| sg.without_at(sum, u, l));
        if let (Some(j), Some(u)) = (j, xj) {
            term += t.influence_f(f_loo(f_at_x[j], u), g_loo(g_at_x[j], u), integral, &mut pf);
        }
        if let (Some(k), Some(u)) = (k, yk) {
            term += t.influence_g(f_loo(f_at_y[k], u), g_loo(g_at_y[k], u), integral, &mut pf);
        }
        diag.psi_clamps += usize::from(pf.count() > 0);
        acc.add(term);
    }
    diag.integrand_clamps += floor.count();
    Ok(acc.value() / rounds as f64)
}

/// Asymptotic variance of `√n (T̂ − T)` for a one-sample functional:
/// `V_f(ψ(X; f)) / (1 − π)`, with the variance computed by quadrature
/// against the true continuous density.
pub fn predict_asymptotic_variance<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    pi: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    check_pi(pi)?;
    let m = influence_moments(t, f, None, Side::F, q)?;
    Ok(m.variance / (1.0 - pi))
}

/// Two-sample analogue with `n/(n + m) → ζ`:
/// `V_f(ψ_f)/(ζ(1 − π₁)) + V_g(ψ_g)/((1 − ζ)(1 − π₂))`, scaled to `√(n + m)`.
pub fn predict_asymptotic_variance_two<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: &dyn UnivariateDensity,
    pi1: f64,
    pi2: f64,
    zeta: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    check_pi(pi1)?;
    check_pi(pi2)?;
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(invalid!("zeta must lie in (0, 1), got {zeta}"));
    }
    let mf = influence_moments(t, f, Some(g), Side::F, q)?;
    let mg = influence_moments(t, f, Some(g), Side::G, q)?;
    Ok(mf.variance / (zeta * (1.0 - pi1)) + mg.variance / ((1.0 - zeta) * (1.0 - pi2)))
}

fn check_pi(pi: f64) -> Result<()> {
    if !(0.0..1.0).contains(&pi) {
        return Err(invalid!("mixing proportion must lie in [0, 1), got {pi}"));
    }
    Ok(())
}
