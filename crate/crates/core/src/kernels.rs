//! Smoothing kernels and bandwidth rules.
//!
//! Multivariate estimates use product kernels with one shared bandwidth.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::math::{self, SQRT_2PI};

/// The Gaussian kernel is taken to be exactly zero beyond `|u| = 10`, where
/// it is below `1e-22`. Kernel sums can then skip distant points without
/// changing a single bit.
const GAUSSIAN_CUTOFF: f64 = 10.0;

/// A symmetric univariate kernel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum KernelSpec {
    Gaussian,
    /// `¾ (1 − u²)` on `[−1, 1]`.
    Epanechnikov,
    /// `½` on `[−1, 1]`.
    Rectangular,
    /// Polynomial kernel on `[−1, 1]` whose moments `1..order-1` vanish.
    HigherOrder(PolynomialKernel),
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian
    }
}

impl KernelSpec {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            KernelSpec::Gaussian => {
                if u.abs() <= GAUSSIAN_CUTOFF {
                    math::exp(-0.5 * u * u) / SQRT_2PI
                } else {
                    0.0
                }
            }
            KernelSpec::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelSpec::Rectangular => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelSpec::HigherOrder(k) => k.eval(u),
        }
    }

    /// Product kernel `Π K(u_j)`.
    #[inline]
    pub fn eval_product(&self, u: &[f64]) -> f64 {
        u.iter().map(|&v| self.eval(v)).product()
    }

    /// Radius of the support, `None` for unbounded kernels.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            KernelSpec::Gaussian => None,
            _ => Some(1.0),
        }
    }

    /// Radius beyond which the kernel evaluates to exactly zero.
    pub fn cutoff(&self) -> f64 {
        self.support_radius().unwrap_or(GAUSSIAN_CUTOFF)
    }

    /// Kernel radius used when padding integration domains. Gaussian kernels
    /// count as radius 2, so the default span factor of 4 pads by 8h.
    pub fn quadrature_radius(&self) -> f64 {
        match self {
            KernelSpec::Gaussian => 2.0,
            _ => 1.0,
        }
    }

    /// Order of the kernel (index of the first non-vanishing moment).
    pub fn order(&self) -> u32 {
        match self {
            KernelSpec::HigherOrder(k) => k.order,
            _ => 2,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, KernelSpec::HigherOrder(_))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian => f.write_str("gaussian"),
            KernelSpec::Epanechnikov => f.write_str("epanechnikov"),
            KernelSpec::Rectangular => f.write_str("rectangular"),
            KernelSpec::HigherOrder(k) => write!(f, "order:{}", k.order),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelSpec::Gaussian),
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            "rectangular" => Ok(KernelSpec::Rectangular),
            other => match other.strip_prefix("order:") {
                Some(l) => {
                    let order: u32 = l
                        .trim()
                        .parse()
                        .map_err(|_| invalid!("bad kernel order '{l}'"))?;
                    make_higher_order(order)
                }
                None => Err(invalid!(
                    "unknown kernel '{s}' (expected gaussian | epanechnikov | rectangular | order:L)"
                )),
            },
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        alloc::format!("{k}")
    }
}

/// Even polynomial on `[−1, 1]`, stored as coefficients of `u⁰, u², u⁴, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialKernel {
    order: u32,
    even_coeffs: Vec<f64>,
}

impl PolynomialKernel {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        let u2 = u * u;
        self.even_coeffs.iter().rev().fold(0.0, |acc, &c| acc * u2 + c)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Coefficients of `u⁰, u², u⁴, …`.
    pub fn even_coefficients(&self) -> &[f64] {
        &self.even_coeffs
    }
}

/// Monomial coefficients of the Legendre polynomials `P_0 … P_max`.
fn legendre_coefficients(max: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
    for j in 1..max {
        // (j+1) P_{j+1} = (2j+1) u P_j − j P_{j−1}
        let mut next = vec![0.0; j + 2];
        for (k, &c) in polys[j].iter().enumerate() {
            next[k + 1] += (2 * j + 1) as f64 * c;
        }
        for (k, &c) in polys[j - 1].iter().enumerate() {
            next[k] -= j as f64 * c;
        }
        for c in next.iter_mut() {
            *c /= (j + 1) as f64;
        }
        polys.push(next);
    }
    polys.truncate(max + 1);
    polys
}

/// Builds the order-`order` kernel `K(u) = Σ_{j<order} (2j+1)/2 · P_j(0) P_j(u)`
/// on `[−1, 1]`, the projection of `δ_0` onto polynomials of degree below
/// `order`. Its moments `1..order-1` vanish and it integrates to one.
///
/// Construction fails if the exact moment residuals exceed `1e-10`, which
/// happens only when cancellation destroys the coefficients (very high orders).
pub fn make_higher_order(order: u32) -> Result<KernelSpec> {
    if order < 4 || order % 2 != 0 {
        return Err(invalid!(
            "higher-order kernels need an even order >= 4, got {order} (use the standard families for order 2)"
        ));
    }
    if order > 32 {
        return Err(invalid!("kernel order {order} is too large to build stably"));
    }
    let max_deg = order as usize - 2;
    let legendre = legendre_coefficients(max_deg);
    let mut mono = vec![0.0; max_deg + 1];
    for (j, p) in legendre.iter().enumerate().step_by(2) {
        let scale = (2 * j + 1) as f64 / 2.0 * p[0];
        for (k, &c) in p.iter().enumerate() {
            mono[k] += scale * c;
        }
    }

    // ∫_{−1}^{1} u^m K(u) du, exactly, from the monomial expansion.
    let moment = |m: usize| -> f64 {
        mono.iter()
            .enumerate()
            .filter(|(k, _)| (k + m) % 2 == 0)
            .map(|(k, &c)| c * 2.0 / (k + m + 1) as f64)
            .sum()
    };
    let mass_residual = (moment(0) - 1.0).abs();
    let worst = (1..order as usize)
        .map(|m| moment(m).abs())
        .fold(mass_residual, f64::max);
    if worst > 1e-10 {
        return Err(invalid!(
            "order-{order} kernel failed its moment check (residual {worst:e})"
        ));
    }

    let even_coeffs = mono.iter().step_by(2).copied().collect();
    Ok(KernelSpec::HigherOrder(PolynomialKernel { order, even_coeffs }))
}

/// How the bandwidth `h` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum BandwidthRule {
    /// `1.06 σ̂ n^{−1/(d+4)}` from the supplied points (σ̂ averaged over coordinates).
    Silverman,
    /// `α n^{−1/(2s+d)}`.
    Theoretical { alpha: f64, smoothness: f64, dim: usize },
    Fixed(f64),
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::Silverman
    }
}

impl BandwidthRule {
    /// Bandwidth for `points` (row-major, dimension `dim`).
    ///
    /// `n_reference` is the sample size entering the rate: the number of
    /// points the estimate is built from under Silverman's rule, the full
    /// sample size under the theoretical rule.
    pub fn bandwidth(&self, points: &[f64], dim: usize, n_reference: usize) -> Result<f64> {
        match *self {
            BandwidthRule::Fixed(h) => {
                if h > 0.0 && h.is_finite() {
                    Ok(h)
                } else {
                    Err(invalid!("fixed bandwidth must be positive, got {h}"))
                }
            }
            BandwidthRule::Theoretical {
                alpha,
                smoothness,
                dim: d,
            } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid!("alpha must be positive, got {alpha}"));
                }
                if !(smoothness >= 1.0 && smoothness.is_finite()) {
                    return Err(invalid!("smoothness must be >= 1, got {smoothness}"));
                }
                if n_reference == 0 {
                    return Err(invalid!("reference sample size must be >= 1"));
                }
                let exponent = -1.0 / (2.0 * smoothness + d.max(1) as f64);
                Ok(alpha * math::powf(n_reference as f64, exponent))
            }
            BandwidthRule::Silverman => {
                let sigma = silverman_sigma(points, dim)?;
                if n_reference == 0 {
                    return Err(invalid!("reference sample size must be >= 1"));
                }
                let exponent = -1.0 / (dim as f64 + 4.0);
                Ok(1.06 * sigma * math::powf(n_reference as f64, exponent))
            }
        }
    }

    /// Same rule with the dimension of the theoretical rate replaced.
    pub fn with_dim(self, dim: usize) -> Self {
        match self {
            BandwidthRule::Theoretical {
                alpha, smoothness, ..
            } => BandwidthRule::Theoretical {
                alpha,
                smoothness,
                dim,
            },
            other => other,
        }
    }
}

/// Mean over coordinates of the sample standard deviation (`n − 1` denominator).
pub fn silverman_sigma(points: &[f64], dim: usize) -> Result<f64> {
    let n = points.len() / dim.max(1);
    if n < 2 {
        return Err(Error::Degenerate(alloc::format!(
            "Silverman's rule needs at least two points, got {n}; use a fixed bandwidth"
        )));
    }
    let mut total = 0.0;
    for c in 0..dim {
        let col = points.iter().skip(c).step_by(dim);
        let mean = math::compensated_sum(col.clone().copied()) / n as f64;
        let ss = math::compensated_sum(col.map(|&v| (v - mean) * (v - mean)));
        total += math::sqrt(ss / (n - 1) as f64);
    }
    let sigma = total / dim as f64;
    if sigma > 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(Error::Degenerate(String::from(
            "points have zero spread; use a fixed bandwidth",
        )))
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BandwidthRule::Silverman => f.write_str("silverman"),
            BandwidthRule::Fixed(h) => write!(f, "fixed:{h}"),
            BandwidthRule::Theoretical {
                alpha,
                smoothness,
                dim: 1,
            } => write!(f, "theory:{alpha},{smoothness}"),
            BandwidthRule::Theoretical {
                alpha,
                smoothness,
                dim,
            } => write!(f, "theory:{alpha},{smoothness},{dim}"),
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("silverman") {
            return Ok(BandwidthRule::Silverman);
        }
        let num = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map_err(|_| invalid!("bad number '{t}' in bandwidth rule '{s}'"))
        };
        if let Some(h) = s.strip_prefix("fixed:") {
            let rule = BandwidthRule::Fixed(num(h)?);
            rule.bandwidth(&[], 1, 1)?;
            return Ok(rule);
        }
        if let Some(rest) = s.strip_prefix("theory:") {
            let parts: Vec<&str> = rest.split(',').collect();
            let (alpha, smoothness, dim) = match parts.as_slice() {
                [a, s] => (num(a)?, num(s)?, 1),
                [a, s, d] => (
                    num(a)?,
                    num(s)?,
                    d.trim()
                        .parse::<usize>()
                        .map_err(|_| invalid!("bad dimension '{d}'"))?,
                ),
                _ => return Err(invalid!("expected theory:ALPHA,S[,D], got '{s}'")),
            };
            let rule = BandwidthRule::Theoretical {
                alpha,
                smoothness,
                dim,
            };
            rule.bandwidth(&[], 1, 1)?;
            return Ok(rule);
        }
        Err(invalid!(
            "unknown bandwidth rule '{s}' (expected silverman | fixed:H | theory:ALPHA,S)"
        ))
    }
}

impl TryFrom<String> for BandwidthRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BandwidthRule> for String {
    fn from(b: BandwidthRule) -> String {
        alloc::format!("{b}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on [a, b]; independent of the crate's quadrature module.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn all_kernels() -> Vec<KernelSpec> {
        vec![
            KernelSpec::Gaussian,
            KernelSpec::Epanechnikov,
            KernelSpec::Rectangular,
            make_higher_order(4).unwrap(),
            make_higher_order(6).unwrap(),
            make_higher_order(8).unwrap(),
        ]
    }

    #[test]
    fn closed_form_values() {
        assert!((KernelSpec::Gaussian.eval(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(KernelSpec::Epanechnikov.eval(0.0), 0.75);
        assert_eq!(KernelSpec::Epanechnikov.eval(1.5), 0.0);
        assert_eq!(KernelSpec::Rectangular.eval(1.0), 0.5);
        assert_eq!(KernelSpec::Rectangular.eval(1.0001), 0.0);
        assert!(KernelSpec::Gaussian.eval(GAUSSIAN_CUTOFF) > 0.0);
        assert_eq!(KernelSpec::Gaussian.eval(GAUSSIAN_CUTOFF * (1.0 + 1e-12)), 0.0);
    }

    #[test]
    fn order_four_is_the_known_polynomial() {
        let k = make_higher_order(4).unwrap();
        // 9/8 − 15/8 u²
        for &u in &[0.0, 0.3, -0.7, 1.0] {
            assert!((k.eval(u) - (1.125 - 1.875 * u * u)).abs() < 1e-14);
        }
        assert!(k.eval(0.95) < 0.0);
        assert_eq!(k.eval(1.2), 0.0);
    }

    #[test]
    fn normalization_and_moments_by_quadrature() {
        // Piecewise polynomial kernels: Simpson is exact up to rounding once
        // the breakpoints ±1 are grid nodes.
        for k in all_kernels() {
            let (a, b) = match k.support_radius() {
                Some(r) => (-r, r),
                None => (-40.0, 40.0),
            };
            let mass = simpson(|u| k.eval(u), a, b, 20_000);
            assert!((mass - 1.0).abs() < 1e-8, "{k}: mass {mass}");
            for j in 1..k.order() {
                let m = simpson(|u| u.powi(j as i32) * k.eval(u), a, b, 20_000);
                assert!(m.abs() < 1e-6, "{k}: moment {j} = {m}");
            }
            let m = simpson(|u| u.powi(k.order() as i32) * k.eval(u), a, b, 20_000);
            assert!(m.abs() > 1e-3, "{k}: moment {} should not vanish", k.order());
        }
    }

    #[test]
    fn kernels_are_even() {
        for k in all_kernels() {
            for i in 0..200 {
                let u = -3.0 + 0.0301 * i as f64;
                assert_eq!(k.eval(u), k.eval(-u), "{k} at {u}");
            }
        }
    }

    #[test]
    fn higher_order_rejects_bad_orders() {
        assert!(make_higher_order(2).is_err());
        assert!(make_higher_order(5).is_err());
        assert!(make_higher_order(0).is_err());
    }

    #[test]
    fn kernel_parsing_round_trips() {
        for k in all_kernels() {
            let s = alloc::format!("{k}");
            assert_eq!(s.parse::<KernelSpec>().unwrap(), k);
        }
        assert!("order:3".parse::<KernelSpec>().is_err());
        assert!("box".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn silverman_reference_value() {
        // Points ±1 alternating have sample sd sqrt(100/99); rescale to sd 1.
        let c = math::sqrt(99.0 / 100.0);
        let pts: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { c } else { -c })
            .collect();
        assert!((silverman_sigma(&pts, 1).unwrap() - 1.0).abs() < 1e-14);
        let h = BandwidthRule::Silverman.bandwidth(&pts, 1, 100).unwrap();
        assert!((h - 1.06 * 10f64.powf(-0.4)).abs() < 1e-14, "h = {h}");
    }

    #[test]
    fn theoretical_and_fixed() {
        let rule = BandwidthRule::Theoretical {
            alpha: 1.0,
            smoothness: 2.0,
            dim: 1,
        };
        assert!((rule.bandwidth(&[], 1, 1024).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(BandwidthRule::Fixed(0.3).bandwidth(&[1.0, 2.0], 1, 7).unwrap(), 0.3);
        assert!(BandwidthRule::Fixed(0.0).bandwidth(&[], 1, 1).is_err());
    }

    #[test]
    fn silverman_degenerate_inputs() {
        assert!(matches!(
            BandwidthRule::Silverman.bandwidth(&[], 1, 1),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            BandwidthRule::Silverman.bandwidth(&[2.0, 2.0, 2.0], 1, 3),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn silverman_is_scale_equivariant() {
        let pts: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 13.0).collect();
        let h = BandwidthRule::Silverman.bandwidth(&pts, 1, pts.len()).unwrap();
        for &c in &[0.01, 0.5, 3.0, 1e4] {
            let scaled: Vec<f64> = pts.iter().map(|v| v * c).collect();
            let hc = BandwidthRule::Silverman
                .bandwidth(&scaled, 1, scaled.len())
                .unwrap();
            assert!((hc / (c * h) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("silverman".parse::<BandwidthRule>().unwrap(), BandwidthRule::Silverman);
        assert_eq!("fixed:0.3".parse::<BandwidthRule>().unwrap(), BandwidthRule::Fixed(0.3));
        assert_eq!(
            "theory:1.5,2".parse::<BandwidthRule>().unwrap(),
            BandwidthRule::Theoretical {
                alpha: 1.5,
                smoothness: 2.0,
                dim: 1
            }
        );
        assert!("fixed:-1".parse::<BandwidthRule>().is_err());
        assert!("theory:1".parse::<BandwidthRule>().is_err());
    }
}
