//! Kernel density estimates built on the unique observations.
//!
//! For support points `X_1 … X_N` the estimate is
//! `f̂(x) = 1 / ((N ∨ 1) hᵈ) Σ K((x − X_i)/h)`, with a product kernel when
//! `d > 1`. With no support points it is identically zero.

use alloc::vec::Vec;

use crate::error::{contract, invalid, Result};
use crate::kernels::{BandwidthRule, KernelSpec};
use crate::math;
use crate::sample::{atom_table, partition, AtomTable, Dataset, TieRule};

/// A kernel density estimate over a fixed set of support points.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    dim: usize,
    h: f64,
    kernel: KernelSpec,
    /// Row-major support points in the order supplied.
    support: Vec<f64>,
    /// Ascending distinct support values (univariate estimates only)…
    sorted: Vec<f64>,
    /// …and how often each occurs.
    multiplicity: Vec<f64>,
    inv_hd: f64,
}

impl DensityEstimate {
    pub fn new(dim: usize, support: Vec<f64>, kernel: KernelSpec, h: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid!("dimension must be at least 1"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid!("bandwidth must be positive, got {h}"));
        }
        if support.len() % dim != 0 {
            return Err(invalid!("support buffer is not a whole number of rows"));
        }
        let (mut sorted, mut multiplicity) = (Vec::new(), Vec::new());
        if dim == 1 {
            let mut s = support.clone();
            s.sort_unstable_by(f64::total_cmp);
            for v in s {
                if sorted.last() == Some(&v) {
                    *multiplicity.last_mut().unwrap() += 1.0;
                } else {
                    sorted.push(v);
                    multiplicity.push(1.0);
                }
            }
        }
        Ok(Self {
            dim,
            h,
            inv_hd: 1.0 / math::powi(h, dim as i32),
            kernel,
            support,
            sorted,
            multiplicity,
        })
    }

    /// The identically-zero estimate used when no support points are available.
    pub fn zero(dim: usize, kernel: KernelSpec, h: f64) -> Result<Self> {
        Self::new(dim, Vec::new(), kernel, h)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Number of support points.
    #[inline]
    pub fn len(&self) -> usize {
        self.support.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    #[inline]
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    #[inline]
    pub fn support_point(&self, i: usize) -> &[f64] {
        &self.support[i * self.dim..(i + 1) * self.dim]
    }

    /// Smallest and largest support value of a univariate estimate.
    pub fn range(&self) -> Option<(f64, f64)> {
        match (self.dim, self.sorted.first(), self.sorted.last()) {
            (1, Some(&lo), Some(&hi)) => Some((lo, hi)),
            _ => None,
        }
    }

    /// `K_h(x − X_i) = K((x − X_i)/h) / hᵈ` for support point `i`.
    #[inline]
    pub fn kernel_at(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let p = self.support_point(i);
        let mut k = 1.0;
        for (a, b) in x.iter().zip(p) {
            k *= self.kernel.eval((a - b) / self.h);
        }
        k * self.inv_hd
    }

    /// Univariate `K_h(x − xi)`.
    #[inline]
    pub fn kernel_between(&self, x: f64, xi: f64) -> f64 {
        self.kernel.eval((x - xi) / self.h) * self.inv_hd
    }

    /// Unnormalised sum `Σ_i K_h(x − X_i)`.
    pub fn kernel_sum(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "query dimension does not match estimate");
        if self.dim == 1 {
            return self.kernel_sum1(x[0]);
        }
        let cutoff = self.kernel.cutoff();
        let mut acc = 0.0;
        'points: for p in self.support.chunks_exact(self.dim) {
            let mut k = 1.0;
            for (a, b) in x.iter().zip(p) {
                let u = (a - b) / self.h;
                if u.abs() > cutoff {
                    continue 'points;
                }
                k *= self.kernel.eval(u);
            }
            acc += k;
        }
        acc * self.inv_hd
    }

    /// Univariate kernel sum, restricted to support points within the
    /// kernel's cutoff radius. Terms are added in ascending support order,
    /// each distinct value once, weighted by its multiplicity.
    #[inline]
    pub fn kernel_sum1(&self, x: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        let reach = self.kernel.cutoff() * self.h * (1.0 + 1e-12);
        let lo = self.sorted.partition_point(|&v| v < x - reach);
        let hi = self.sorted.partition_point(|&v| v <= x + reach);
        let mut acc = 0.0;
        for (&xi, &c) in self.sorted[lo..hi].iter().zip(&self.multiplicity[lo..hi]) {
            acc += c * self.kernel.eval((x - xi) / self.h);
        }
        acc * self.inv_hd
    }

    #[inline]
    fn normalizer(&self) -> f64 {
        self.len().max(1) as f64
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.kernel_sum(x) / self.normalizer()
    }

    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        self.kernel_sum1(x) / self.normalizer()
    }

    /// Leave-one-out estimate without support point `leave`, normalised by
    /// `(N − 1) ∨ 1`.
    pub fn eval_loo(&self, leave: usize, x: &[f64]) -> Result<f64> {
        if leave >= self.len() {
            return Err(contract!(
                "leave-out index {leave} is outside a support of {} points",
                self.len()
            ));
        }
        Ok(self.loo_from_sum(self.kernel_sum(x), leave, x))
    }

    /// Leave-one-out value from a precomputed `kernel_sum(x)`; `O(1)` per query.
    #[inline]
    pub fn loo_from_sum(&self, sum: f64, leave: usize, x: &[f64]) -> f64 {
        let denom = (self.len() - 1).max(1) as f64;
        let rest = sum - self.kernel_at(leave, x);
        if self.len() == 1 {
            0.0
        } else {
            rest / denom
        }
    }
}

pub(crate) fn reference_size(rule: &BandwidthRule, support: usize, n_total: usize) -> usize {
    match rule {
        BandwidthRule::Theoretical { .. } => n_total.max(1),
        _ => support,
    }
}

/// Estimate over the observations `indices` of `data`, with the bandwidth
/// chosen from those observations.
pub fn fit_kde_indices(
    data: &Dataset,
    indices: &[usize],
    kernel: &KernelSpec,
    bw: &BandwidthRule,
) -> Result<DensityEstimate> {
    let points = data.gather(indices);
    let rule = bw.with_dim(data.dim());
    let h = rule.bandwidth(
        &points,
        data.dim(),
        reference_size(&rule, indices.len(), data.len()),
    )?;
    DensityEstimate::new(data.dim(), points, kernel.clone(), h)
}

/// Atom-aware estimate: a KDE over the observations that occur exactly once.
pub fn fit_kde_unique(
    data: &Dataset,
    rule: TieRule,
    kernel: &KernelSpec,
    bw: &BandwidthRule,
) -> Result<DensityEstimate> {
    let p = partition(data, rule)?;
    fit_kde_indices(data, p.unique_indices(), kernel, bw)
}

/// Classical KDE over every observation, repeats included.
pub fn fit_kde_naive(
    data: &Dataset,
    kernel: &KernelSpec,
    bw: &BandwidthRule,
) -> Result<DensityEstimate> {
    let all: Vec<usize> = (0..data.len()).collect();
    fit_kde_indices(data, &all, kernel, bw)
}

/// Continuous estimate plus the estimated atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEstimate {
    pub continuous: DensityEstimate,
    pub atoms: AtomTable,
}

impl MixtureEstimate {
    /// Weight `1 − π̂` carried by the continuous part.
    pub fn continuous_weight(&self) -> f64 {
        1.0 - self.atoms.pi_hat()
    }

    /// `(1 − π̂) f̂(x)`.
    pub fn eval_continuous(&self, x: &[f64]) -> f64 {
        self.continuous_weight() * self.continuous.eval(x)
    }

    /// Grid of `(1 − π̂) f̂`; the atoms are reported separately by `self.atoms`.
    pub fn grid_export(&self, bounds: &GridBox, points_per_dim: usize) -> Result<DensityGrid> {
        let w = self.continuous_weight();
        let mut grid = grid_export(&self.continuous, bounds, points_per_dim)?;
        for v in grid.values.iter_mut() {
            *v *= w;
        }
        Ok(grid)
    }
}

pub fn fit_mixture(
    data: &Dataset,
    rule: TieRule,
    kernel: &KernelSpec,
    bw: &BandwidthRule,
) -> Result<MixtureEstimate> {
    let p = partition(data, rule)?;
    let atoms = atom_table(&p, data)?;
    let continuous = fit_kde_indices(data, p.unique_indices(), kernel, bw)?;
    Ok(MixtureEstimate { continuous, atoms })
}

/// Axis-aligned evaluation box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GridBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(alloc::vec![lo], alloc::vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(invalid!("grid box needs matching non-empty lo/hi vectors"));
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(invalid!("grid box needs lo < hi, got [{a}, {b}]"));
            }
        }
        Ok(())
    }

    /// Coordinate `k` of `points` along axis `axis`; the last node is exactly `hi`.
    #[inline]
    pub fn node(&self, axis: usize, k: usize, points: usize) -> f64 {
        if k + 1 == points {
            self.hi[axis]
        } else {
            let step = (self.hi[axis] - self.lo[axis]) / (points - 1) as f64;
            self.lo[axis] + k as f64 * step
        }
    }
}

/// Estimate evaluated on a regular grid, rows in row-major order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub dim: usize,
    pub points_per_dim: usize,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coords
            .chunks_exact(self.dim)
            .zip(self.values.iter().copied())
    }

    /// Tensor-product trapezoid integral of the grid values.
    pub fn trapezoid_integral(&self) -> f64 {
        let p = self.points_per_dim;
        let mut acc = math::KahanSum::default();
        for (r, &v) in self.values.iter().enumerate() {
            let mut w = 1.0;
            let mut rem = r;
            for _ in 0..self.dim {
                let k = rem % p;
                rem /= p;
                if k == 0 || k + 1 == p {
                    w *= 0.5;
                }
            }
            acc.add(w * v);
        }
        let last = (self.values.len() - 1) * self.dim;
        let cell: f64 = (0..self.dim)
            .map(|axis| (self.coords[last + axis] - self.coords[axis]) / (p - 1) as f64)
            .product();
        acc.value() * cell
    }
}

/// Evaluates `est` on a `points_per_dim`-per-axis grid over `bounds`.
pub fn grid_export(
    est: &DensityEstimate,
    bounds: &GridBox,
    points_per_dim: usize,
) -> Result<DensityGrid> {
    bounds.validate()?;
    if bounds.dim() != est.dim() {
        return Err(contract!(
            "grid box has dimension {} but the estimate has {}",
            bounds.dim(),
            est.dim()
        ));
    }
    if points_per_dim < 2 {
        return Err(invalid!("need at least 2 grid points per axis"));
    }
    let d = est.dim();
    let total = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(points_per_dim));
    let total = total.ok_or_else(|| invalid!("grid is too large"))?;
    let mut coords = Vec::with_capacity(total * d);
    let mut values = Vec::with_capacity(total);
    let mut x = alloc::vec![0.0; d];
    for r in 0..total {
        let mut rem = r;
        for axis in (0..d).rev() {
            x[axis] = bounds.node(axis, rem % points_per_dim, points_per_dim);
            rem /= points_per_dim;
        }
        coords.extend_from_slice(&x);
        values.push(est.eval(&x));
    }
    Ok(DensityGrid {
        dim: d,
        points_per_dim,
        coords,
        values,
    })
}
