//! Density functionals `T(f) = φ(∫ν(f))` and `T(f, g) = φ(∫ν(f, g))` with
//! their influence functions.
//!
//! Every built-in influence function depends on the densities only through
//! their values at the evaluation point and the integral `I = ∫ν`, which is
//! what lets the estimators evaluate `ψ` cheaply at many sample points.
//! [`influence_fd`] recomputes `ψ` from the Gâteaux definition and serves as
//! an independent check of the closed forms.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::density::DensityEstimate;
use crate::error::{contract, invalid, Error, Result};
use crate::math::{self, SQRT_2PI};
use crate::quadrature::{refine_simpson, QuadPlan, QuadratureConfig};

/// Number of distributions a functional takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    One,
    Two,
}

/// Which density a two-distribution influence function perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    F,
    G,
}

/// Lower clamp for densities entering logarithms or negative powers.
/// Counts how often it fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Floor {
    eps: f64,
    count: usize,
}

impl Floor {
    pub fn new(eps: f64) -> Self {
        Self { eps, count: 0 }
    }

    #[inline]
    pub fn apply(&mut self, v: f64) -> f64 {
        if v < self.eps {
            self.count += 1;
            self.eps
        } else {
            v
        }
    }

    /// Clamps negative values (possible with higher-order kernels) to zero.
    #[inline]
    pub fn nonneg(&mut self, v: f64) -> f64 {
        if v < 0.0 {
            self.count += 1;
            0.0
        } else {
            v
        }
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// A functional of one or two densities in the form `φ(∫ν)`.
///
/// Implementors supply `ν`, `φ` and the influence functions in closed form.
/// [`influence_fd`] checks a supplied `ψ` against the Gâteaux derivative.
pub trait Functional: Send + Sync {
    fn name(&self) -> String;

    fn arity(&self) -> Arity;

    /// `ν(f(x), g(x))`; one-distribution functionals ignore `g`.
    fn integrand(&self, f: f64, g: f64, floor: &mut Floor) -> f64;

    fn phi(&self, integral: f64, floor: &mut Floor) -> f64;

    /// `ψ_f` (or `ψ`) at a point where the densities equal `f` and `g`.
    fn influence_f(&self, f: f64, g: f64, integral: f64, floor: &mut Floor) -> f64;

    /// `ψ_g` at a point where the densities equal `f` and `g`.
    fn influence_g(&self, _f: f64, _g: f64, _integral: f64, _floor: &mut Floor) -> f64 {
        0.0
    }
}

/// The shipped functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum BuiltinFunctional {
    /// `−∫ f log f`, `ψ(x) = −log f(x) − T`.
    ShannonEntropy,
    /// `∫ f²`, `ψ(x) = 2f(x) − 2T`.
    Quadratic,
    /// `(α − 1)⁻¹ log ∫ f^α g^{1−α}`.
    Renyi { alpha: f64 },
    /// `∫ f log(f/g)`.
    KlDivergence,
    /// `∫ f g`.
    InnerProduct,
}

impl BuiltinFunctional {
    pub fn renyi(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || alpha == 1.0 {
            return Err(invalid!("Renyi order must be positive and != 1, got {alpha}"));
        }
        Ok(BuiltinFunctional::Renyi { alpha })
    }
}

impl Functional for BuiltinFunctional {
    fn name(&self) -> String {
        alloc::format!("{self}")
    }

    fn arity(&self) -> Arity {
        match self {
            BuiltinFunctional::ShannonEntropy | BuiltinFunctional::Quadratic => Arity::One,
            _ => Arity::Two,
        }
    }

    #[inline]
    fn integrand(&self, f: f64, g: f64, floor: &mut Floor) -> f64 {
        match *self {
            BuiltinFunctional::ShannonEntropy => {
                // 0 log 0 := 0; only negative values need the floor.
                if f > 0.0 {
                    -f * math::ln(f)
                } else if f == 0.0 {
                    0.0
                } else {
                    floor.nonneg(f);
                    0.0
                }
            }
            BuiltinFunctional::Quadratic => f * f,
            BuiltinFunctional::Renyi { alpha } => {
                let f = floor.nonneg(f);
                let g = floor.nonneg(g);
                let g = if alpha < 1.0 { g } else { floor.apply(g) };
                if f == 0.0 || g == 0.0 {
                    0.0
                } else {
                    math::exp(alpha * math::ln(f) + (1.0 - alpha) * math::ln(g))
                }
            }
            BuiltinFunctional::KlDivergence => {
                let f = floor.nonneg(f);
                if f == 0.0 {
                    0.0
                } else {
                    f * (math::ln(f) - math::ln(floor.apply(g)))
                }
            }
            BuiltinFunctional::InnerProduct => f * g,
        }
    }

    #[inline]
    fn phi(&self, integral: f64, floor: &mut Floor) -> f64 {
        match *self {
            BuiltinFunctional::Renyi { alpha } => math::ln(floor.apply(integral)) / (alpha - 1.0),
            _ => integral,
        }
    }

    #[inline]
    fn influence_f(&self, f: f64, g: f64, integral: f64, floor: &mut Floor) -> f64 {
        match *self {
            BuiltinFunctional::ShannonEntropy => -math::ln(floor.apply(f)) - integral,
            BuiltinFunctional::Quadratic => 2.0 * f - 2.0 * integral,
            BuiltinFunctional::Renyi { alpha } => {
                let i = floor.apply(integral);
                let f = floor.apply(f);
                let g = floor.nonneg(g);
                let g_pow = if alpha < 1.0 {
                    math::powf(g, 1.0 - alpha)
                } else {
                    math::powf(floor.apply(g), 1.0 - alpha)
                };
                alpha / (alpha - 1.0) * (math::powf(f, alpha - 1.0) * g_pow - i) / i
            }
            BuiltinFunctional::KlDivergence => {
                math::ln(floor.apply(f)) - math::ln(floor.apply(g)) - integral
            }
            BuiltinFunctional::InnerProduct => g - integral,
        }
    }

    #[inline]
    fn influence_g(&self, f: f64, g: f64, integral: f64, floor: &mut Floor) -> f64 {
        match *self {
            BuiltinFunctional::Renyi { alpha } => {
                let i = floor.apply(integral);
                let f = floor.nonneg(f);
                let g = floor.apply(g);
                -(math::powf(f, alpha) * math::powf(g, -alpha) - i) / i
            }
            BuiltinFunctional::KlDivergence => 1.0 - floor.nonneg(f) / floor.apply(g),
            BuiltinFunctional::InnerProduct => f - integral,
            _ => 0.0,
        }
    }
}

impl fmt::Display for BuiltinFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinFunctional::ShannonEntropy => f.write_str("entropy"),
            BuiltinFunctional::Quadratic => f.write_str("quadratic"),
            BuiltinFunctional::Renyi { alpha } => write!(f, "renyi:{alpha}"),
            BuiltinFunctional::KlDivergence => f.write_str("kl"),
            BuiltinFunctional::InnerProduct => f.write_str("inner"),
        }
    }
}

impl FromStr for BuiltinFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "entropy" => Ok(BuiltinFunctional::ShannonEntropy),
            "quadratic" => Ok(BuiltinFunctional::Quadratic),
            "kl" => Ok(BuiltinFunctional::KlDivergence),
            "inner" => Ok(BuiltinFunctional::InnerProduct),
            _ => match s.strip_prefix("renyi:") {
                Some(a) => BuiltinFunctional::renyi(
                    a.trim()
                        .parse()
                        .map_err(|_| invalid!("bad Renyi order '{a}'"))?,
                ),
                None => Err(invalid!(
                    "unknown functional '{s}' (expected entropy | quadratic | renyi:ALPHA | kl)"
                )),
            },
        }
    }
}

impl TryFrom<String> for BuiltinFunctional {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BuiltinFunctional> for String {
    fn from(f: BuiltinFunctional) -> String {
        alloc::format!("{f}")
    }
}

/// A univariate density that functionals can integrate.
pub trait UnivariateDensity {
    fn density(&self, x: f64) -> f64;

    /// Ascending breakpoints spanning the region to integrate over; Simpson
    /// pieces run between consecutive breakpoints, so discontinuities should
    /// be listed. An empty list means the density is identically zero.
    fn breakpoints(&self, cfg: &QuadratureConfig) -> Vec<f64>;

    /// Width of the narrowest feature, if known (a KDE's bandwidth).
    fn resolution(&self) -> Option<f64> {
        None
    }

    fn dim(&self) -> usize {
        1
    }
}

impl UnivariateDensity for DensityEstimate {
    #[inline]
    fn density(&self, x: f64) -> f64 {
        self.eval1(x)
    }

    fn breakpoints(&self, cfg: &QuadratureConfig) -> Vec<f64> {
        match self.range() {
            Some((lo, hi)) => {
                let pad = cfg.span_factor * self.h() * self.kernel().quadrature_radius();
                vec![lo - pad, hi + pad]
            }
            None => Vec::new(),
        }
    }

    fn resolution(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.h())
    }

    fn dim(&self) -> usize {
        DensityEstimate::dim(self)
    }
}

/// `(1 − t) base + t · N(center, width²)`: a density nudged towards `δ_center`.
pub struct Perturbed<'a> {
    pub base: &'a dyn UnivariateDensity,
    pub center: f64,
    pub width: f64,
    pub t: f64,
}

impl Perturbed<'_> {
    #[inline]
    fn bump(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        math::exp(-0.5 * z * z) / (SQRT_2PI * self.width)
    }
}

impl UnivariateDensity for Perturbed<'_> {
    #[inline]
    fn density(&self, x: f64) -> f64 {
        (1.0 - self.t) * self.base.density(x) + self.t * self.bump(x)
    }

    fn breakpoints(&self, cfg: &QuadratureConfig) -> Vec<f64> {
        let bump = [self.center - 8.0 * self.width, self.center + 8.0 * self.width];
        merge_breakpoints(&[self.base.breakpoints(cfg).as_slice(), &bump])
    }

    fn resolution(&self) -> Option<f64> {
        self.base.resolution()
    }
}

/// Union of breakpoint lists: spans the widest range and keeps every
/// interior breakpoint. Returns `[0, 1]` if all lists are empty.
pub fn merge_breakpoints(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    if all.is_empty() {
        return vec![0.0, 1.0];
    }
    all.sort_unstable_by(f64::total_cmp);
    let span = all[all.len() - 1] - all[0];
    let tol = 1e-12 * span.max(1e-300);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for v in all {
        match out.last() {
            Some(&last) if v - last <= tol => {}
            _ => out.push(v),
        }
    }
    if out.len() == 1 {
        out.push(out[0] + 1.0);
    }
    out
}

/// A functional value with quadrature diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    /// `∫ν` before `φ` is applied.
    pub integral: f64,
    pub clamp_count: usize,
    pub converged: bool,
    /// Integration range used.
    pub domain: (f64, f64),
    pub nodes: usize,
}

fn check_inputs<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    q: &QuadratureConfig,
) -> Result<()> {
    q.validate()?;
    match (t.arity(), g) {
        (Arity::One, Some(_)) => {
            return Err(contract!("{} takes one density but two were supplied", t.name()))
        }
        (Arity::Two, None) => {
            return Err(contract!("{} takes two densities but one was supplied", t.name()))
        }
        _ => {}
    }
    if f.dim() != 1 || g.map_or(false, |g| g.dim() != 1) {
        return Err(contract!("functional quadrature supports univariate densities only"));
    }
    Ok(())
}

fn domain(
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    q: &QuadratureConfig,
) -> Vec<f64> {
    let fb = f.breakpoints(q);
    let gb = g.map(|g| g.breakpoints(q)).unwrap_or_default();
    merge_breakpoints(&[&fb, &gb])
}

/// Quadrature settings sized to the finer of the two densities.
fn sized(
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    breaks: &[f64],
    q: &QuadratureConfig,
) -> QuadratureConfig {
    let res = match (f.resolution(), g.and_then(|g| g.resolution())) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    q.for_feature(breaks, res)
}

#[inline]
fn g_at(g: Option<&dyn UnivariateDensity>, x: f64) -> f64 {
    g.map_or(0.0, |g| g.density(x))
}

/// Integral of `ν` on a fixed rule.
pub fn integrate_on_plan<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    plan: &QuadPlan,
    floor: &mut Floor,
) -> f64 {
    plan.integrate(|x| t.integrand(f.density(x), g_at(g, x), floor))
}

/// Evaluates `T(f)` or `T(f, g)` by refined composite Simpson quadrature over
/// the union of the densities' integration domains.
///
/// Non-convergence of the refinement is reported through
/// [`FunctionalValue::converged`], not as an error.
pub fn evaluate_functional<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    q: &QuadratureConfig,
) -> Result<FunctionalValue> {
    check_inputs(t, f, g, q)?;
    let breaks = domain(f, g, q);
    let (value, plan, converged, floor) = refine_functional(t, f, g, &breaks, q);
    Ok(FunctionalValue {
        value,
        integral: plan.1,
        clamp_count: floor.count(),
        converged,
        domain: (plan.0.lo(), plan.0.hi()),
        nodes: plan.0.len(),
    })
}

type PlanAndIntegral = (QuadPlan, f64);

fn refine_functional<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    breaks: &[f64],
    q: &QuadratureConfig,
) -> (f64, PlanAndIntegral, bool, Floor) {
    let mut floor = Floor::new(q.density_floor);
    let r = refine_simpson(
        |x| t.integrand(f.density(x), g_at(g, x), &mut floor),
        breaks,
        &sized(f, g, breaks, q),
    );
    let value = t.phi(r.value, &mut floor);
    (value, (r.plan, r.value), r.converged, floor)
}

/// Refined rule and integral for `T`, for callers that reuse the grid.
pub fn functional_plan<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    q: &QuadratureConfig,
) -> Result<(FunctionalValue, QuadPlan)> {
    check_inputs(t, f, g, q)?;
    let breaks = domain(f, g, q);
    let (value, (plan, integral), converged, floor) = refine_functional(t, f, g, &breaks, q);
    Ok((
        FunctionalValue {
            value,
            integral,
            clamp_count: floor.count(),
            converged,
            domain: (plan.lo(), plan.hi()),
            nodes: plan.len(),
        },
        plan,
    ))
}

/// Influence function values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceValue {
    /// `ψ(x)` for one-distribution functionals, `ψ_f(x)` otherwise.
    pub psi_f: f64,
    /// `ψ_g(x)` for two-distribution functionals.
    pub psi_g: Option<f64>,
    pub clamp_count: usize,
}

/// Closed-form influence function(s) at `x`.
pub fn influence<T: Functional + ?Sized>(
    t: &T,
    x: f64,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    q: &QuadratureConfig,
) -> Result<InfluenceValue> {
    let tv = evaluate_functional(t, f, g, q)?;
    let mut floor = Floor::new(q.density_floor);
    let (fx, gx) = (f.density(x), g_at(g, x));
    let psi_f = t.influence_f(fx, gx, tv.integral, &mut floor);
    let psi_g = g.map(|_| t.influence_g(fx, gx, tv.integral, &mut floor));
    Ok(InfluenceValue {
        psi_f,
        psi_g,
        clamp_count: tv.clamp_count + floor.count(),
    })
}

/// Finite-difference Gâteaux derivative
/// `(T((1 − t) f + t b) − T(f)) / t`, with `b` a normalised Gaussian bump of
/// width `bump_width` at `x` standing in for `δ_x`.
///
/// The quotient converges to `ψ(x)` as `bump_width → 0` and then `t → 0`;
/// its bias is `O(t ∫b²)`, so `t` has to shrink faster than the bump width.
/// Both values of `T` are computed on the same quadrature rule, refined on
/// the perturbed density, so discretisation error largely cancels.
#[allow(clippy::too_many_arguments)]
pub fn influence_fd<T: Functional + ?Sized>(
    t: &T,
    x: f64,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    side: Side,
    step: f64,
    bump_width: f64,
    q: &QuadratureConfig,
) -> Result<f64> {
    check_inputs(t, f, g, q)?;
    if !(step > 0.0 && step < 1.0) {
        return Err(invalid!("finite-difference step must lie in (0, 1), got {step}"));
    }
    if !(bump_width > 0.0) {
        return Err(invalid!("bump width must be positive, got {bump_width}"));
    }
    let (pf, pg): (&dyn UnivariateDensity, Option<&dyn UnivariateDensity>);
    let perturbed;
    match (side, g) {
        (Side::F, _) => {
            perturbed = Perturbed {
                base: f,
                center: x,
                width: bump_width,
                t: step,
            };
            pf = &perturbed;
            pg = g;
        }
        (Side::G, Some(gd)) => {
            perturbed = Perturbed {
                base: gd,
                center: x,
                width: bump_width,
                t: step,
            };
            pf = f;
            pg = Some(&perturbed);
        }
        (Side::G, None) => {
            return Err(contract!("cannot perturb g for a one-distribution functional"))
        }
    }
    let breaks = domain(pf, pg, q);
    let (t_moved, (plan, _), _, _) = refine_functional(t, pf, pg, &breaks, q);
    let mut floor = Floor::new(q.density_floor);
    let base_integral = integrate_on_plan(t, f, g, &plan, &mut floor);
    let t_base = t.phi(base_integral, &mut floor);
    Ok((t_moved - t_base) / step)
}

/// `|T(f) − T(g) − ∫ψ(u; g) f(u) du|`: the remainder of the first-order
/// expansion of `T` around `g`, which is `O(‖f − g‖²)`.
pub fn taylor_residual<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: &dyn UnivariateDensity,
    q: &QuadratureConfig,
) -> Result<f64> {
    if t.arity() != Arity::One {
        return Err(contract!("taylor_residual takes a one-distribution functional"));
    }
    let tf = evaluate_functional(t, f, None, q)?;
    let tg = evaluate_functional(t, g, None, q)?;
    let breaks = domain(f, Some(g), q);
    let mut floor = Floor::new(q.density_floor);
    let cross = refine_simpson(
        |u| {
            let fu = f.density(u);
            if fu == 0.0 {
                0.0
            } else {
                t.influence_f(g.density(u), 0.0, tg.integral, &mut floor) * fu
            }
        },
        &breaks,
        &sized(f, Some(g), &breaks, q),
    );
    Ok((tf.value - tg.value - cross.value).abs())
}

/// Mean and variance of an influence function under its own density:
/// `E_f ψ_f` and `V_f ψ_f` (or `E_g ψ_g`, `V_g ψ_g` for [`Side::G`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceMoments {
    pub mean: f64,
    pub variance: f64,
    pub clamp_count: usize,
}

pub fn influence_moments<T: Functional + ?Sized>(
    t: &T,
    f: &dyn UnivariateDensity,
    g: Option<&dyn UnivariateDensity>,
    side: Side,
    q: &QuadratureConfig,
) -> Result<InfluenceMoments> {
    let tv = evaluate_functional(t, f, g, q)?;
    let weight: &dyn UnivariateDensity = match (side, g) {
        (Side::F, _) => f,
        (Side::G, Some(g)) => g,
        (Side::G, None) => {
            return Err(contract!("no g density for a one-distribution functional"))
        }
    };
    let breaks = domain(f, g, q);
    let mut floor = Floor::new(q.density_floor);
    let psi = |x: f64, floor: &mut Floor| {
        let (fx, gx) = (f.density(x), g_at(g, x));
        match side {
            Side::F => t.influence_f(fx, gx, tv.integral, floor),
            Side::G => t.influence_g(fx, gx, tv.integral, floor),
        }
    };
    let first = refine_simpson(
        |x| {
            let w = weight.density(x);
            if w == 0.0 {
                0.0
            } else {
                psi(x, &mut floor) * w
            }
        },
        &breaks,
        &sized(f, g, &breaks, q),
    );
    let second = first.plan.integrate(|x| {
        let w = weight.density(x);
        if w == 0.0 {
            0.0
        } else {
            let p = psi(x, &mut floor);
            p * p * w
        }
    });
    let mean = first.value;
    Ok(InfluenceMoments {
        mean,
        variance: second - mean * mean,
        clamp_count: tv.clamp_count + floor.count(),
    })
}
