//! Composite and adaptive Simpson quadrature.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::{self, KahanSum};

/// Settings for the grid quadrature behind functional evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct QuadratureConfig {
    /// Padding beyond the data range, in kernel radii times `h`.
    pub span_factor: f64,
    /// Simpson nodes per piece on the first pass (odd). Raised when the
    /// integrand has narrow features, see [`QuadratureConfig::for_feature`].
    pub initial_points: usize,
    /// Minimum node intervals per feature width (e.g. per KDE bandwidth) on
    /// the first pass.
    pub nodes_per_feature: usize,
    /// Relative change between successive doublings that ends refinement.
    pub refine_tolerance: f64,
    pub max_doublings: usize,
    /// Floor applied to densities inside logarithms and negative powers.
    pub density_floor: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            span_factor: 4.0,
            initial_points: 129,
            nodes_per_feature: 8,
            refine_tolerance: 1e-6,
            max_doublings: 6,
            density_floor: 1e-12,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.span_factor > 0.0 && self.span_factor.is_finite()) {
            return Err(invalid!("span_factor must be positive"));
        }
        if self.initial_points < 3 || self.initial_points % 2 == 0 {
            return Err(invalid!(
                "initial_points must be odd and >= 3, got {}",
                self.initial_points
            ));
        }
        if self.nodes_per_feature == 0 {
            return Err(invalid!("nodes_per_feature must be positive"));
        }
        if !(self.refine_tolerance > 0.0) {
            return Err(invalid!("refine_tolerance must be positive"));
        }
        if !(self.density_floor > 0.0) {
            return Err(invalid!("density_floor must be positive"));
        }
        Ok(())
    }
}

impl QuadratureConfig {
    /// Copy whose `initial_points` resolves features of width `feature` on
    /// every piece of `breaks` with at least `nodes_per_feature` intervals.
    pub fn for_feature(&self, breaks: &[f64], feature: Option<f64>) -> Self {
        let mut cfg = *self;
        if let Some(w) = feature.filter(|w| *w > 0.0 && w.is_finite()) {
            let widest = breaks
                .windows(2)
                .map(|p| p[1] - p[0])
                .fold(0.0f64, f64::max);
            let need = (widest / w * self.nodes_per_feature as f64).min(MAX_INITIAL_POINTS as f64);
            let m = (need as usize + 1) | 1;
            cfg.initial_points = cfg.initial_points.max(m);
        }
        cfg
    }
}

const MAX_INITIAL_POINTS: usize = 1 << 20;

/// Composite Simpson rule over consecutive pieces `[b_0, b_1], [b_1, b_2], …`
/// with the same number of nodes on every piece.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPlan {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    points_per_piece: usize,
}

#[inline]
fn piece_node(a: f64, b: f64, k: usize, m: usize) -> f64 {
    if k + 1 == m {
        b
    } else {
        a + (b - a) * (k as f64 / (m - 1) as f64)
    }
}

impl QuadPlan {
    /// `breaks` must be ascending with at least two entries; `points_per_piece` odd.
    pub fn simpson(breaks: &[f64], points_per_piece: usize) -> Self {
        debug_assert!(breaks.len() >= 2 && points_per_piece % 2 == 1);
        let m = points_per_piece;
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * m);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let third = (b - a) / (m - 1) as f64 / 3.0;
            for k in 0..m {
                nodes.push(piece_node(a, b, k, m));
                let c = if k == 0 || k + 1 == m {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                weights.push(c * third);
            }
        }
        Self {
            nodes,
            weights,
            points_per_piece: m,
        }
    }

    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points_per_piece(&self) -> usize {
        self.points_per_piece
    }

    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    pub fn hi(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// `Σ w_k v_k` with compensated summation.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        let mut acc = KahanSum::default();
        for (w, v) in self.weights.iter().zip(values) {
            acc.add(w * v);
        }
        acc.value()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = KahanSum::default();
        for (w, &x) in self.weights.iter().zip(&self.nodes) {
            acc.add(w * f(x));
        }
        acc.value()
    }
}

/// Result of a doubling refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub value: f64,
    /// The finest rule evaluated; `value` was computed on it.
    pub plan: QuadPlan,
    pub converged: bool,
    pub doublings: usize,
}

/// Composite Simpson over `breaks`, doubling the node count on every piece
/// until the integral changes by less than `refine_tolerance · max(|I|, 1)`
/// or `max_doublings` is reached. Previously computed samples are reused.
pub fn refine_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Refined {
    let pieces = breaks.len() - 1;
    let mut m = cfg.initial_points;
    let mut samples: Vec<Vec<f64>> = breaks
        .windows(2)
        .map(|w| (0..m).map(|k| f(piece_node(w[0], w[1], k, m))).collect())
        .collect();
    let mut plan = QuadPlan::simpson(breaks, m);
    let flat = |s: &Vec<Vec<f64>>| -> Vec<f64> { s.iter().flatten().copied().collect() };
    let mut value = plan.integrate_values(&flat(&samples));
    let mut converged = false;
    let mut doublings = 0;
    while doublings < cfg.max_doublings {
        let m2 = 2 * m - 1;
        for (p, w) in breaks.windows(2).enumerate() {
            let old = core::mem::take(&mut samples[p]);
            let mut next = vec![0.0; m2];
            for k in 0..m2 {
                next[k] = if k % 2 == 0 {
                    old[k / 2]
                } else {
                    f(piece_node(w[0], w[1], k, m2))
                };
            }
            samples[p] = next;
        }
        m = m2;
        doublings += 1;
        plan = QuadPlan::simpson(breaks, m);
        let next = plan.integrate_values(&flat(&samples));
        let delta = (next - value).abs();
        value = next;
        if delta <= cfg.refine_tolerance * value.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    debug_assert_eq!(plan.len(), pieces * m);
    Refined {
        value,
        plan,
        converged,
        doublings,
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]` to relative tolerance
/// `rel_tol`. The interval is first cut into 64 panels so narrow features
/// are not missed by the initial estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    const PANELS: usize = 64;
    const MAX_DEPTH: u32 = 40;
    let width = (b - a) / PANELS as f64;
    let mut coarse = KahanSum::default();
    let mut panels = Vec::with_capacity(PANELS);
    for i in 0..PANELS {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == PANELS { b } else { lo + width };
        let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        coarse.add(whole);
        panels.push((lo, hi, flo, fmid, fhi, whole));
    }
    let scale = coarse.value().abs().max(f64::MIN_POSITIVE);
    let eps = rel_tol * scale / PANELS as f64;
    let mut total = KahanSum::default();
    for (lo, hi, flo, fmid, fhi, whole) in panels {
        total.add(adaptive_step(f, lo, hi, flo, fmid, fhi, whole, eps, MAX_DEPTH));
    }
    total.value()
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Trapezoid rule on equally spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner = math::compensated_sum(values[1..n - 1].iter().copied());
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}
