//! Datasets and the unique/repeated partition.
//!
//! A value that appears exactly once in the sample is treated as evidence for
//! the continuous component; a value that appears two or more times is an
//! estimated atom. Indices are zero-based throughout the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::error::{contract, invalid, Error, Result};
use crate::math;

/// An ordered collection of `n` observations in `d` dimensions, stored row-major.
///
/// Order is significant: the data-splitting estimators split on the original
/// index, so a `Dataset` never reorders its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major `values`. Every coordinate must be finite.
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid!("dimension must be at least 1"));
        }
        if values.len() % dim != 0 {
            return Err(invalid!(
                "{} values do not form rows of dimension {}",
                values.len(),
                dim
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: pos / dim,
                coord: pos % dim,
            });
        }
        Ok(Self { dim, values })
    }

    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = match rows.first() {
            Some(r) => r.as_ref().len(),
            None => return Err(invalid!("cannot infer dimension from zero rows")),
        };
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of observation `i`.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major coordinate buffer.
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    /// Row-major coordinates of the selected observations, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.point(i));
        }
        out
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            dim: self.dim,
            values: self.gather(indices),
        }
    }
}

/// How two observations are decided to be "the same value".
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "String", into = "String")
)]
pub enum TieRule {
    /// Coordinates compare equal as floating-point numbers (`0.0 == -0.0`).
    #[default]
    Exact,
    /// Coordinates are rounded to a grid of the given width before comparing.
    Quantized { width: f64 },
}

impl TieRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TieRule::Exact => Ok(()),
            TieRule::Quantized { width } if width > 0.0 && width.is_finite() => Ok(()),
            TieRule::Quantized { width } => {
                Err(invalid!("quantization width must be positive, got {width}"))
            }
        }
    }

    #[inline]
    fn key(&self, v: f64) -> u64 {
        let v = match *self {
            TieRule::Exact => v,
            TieRule::Quantized { width } => math::round(v / width),
        };
        // Collapse -0.0 onto 0.0 so that numerically equal values share a key.
        if v == 0.0 {
            0
        } else {
            v.to_bits()
        }
    }
}

impl fmt::Display for TieRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieRule::Exact => f.write_str("exact"),
            TieRule::Quantized { width } => write!(f, "quantized:{width}"),
        }
    }
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("exact") {
            return Ok(TieRule::Exact);
        }
        if let Some(w) = s.strip_prefix("quantized:") {
            let width: f64 = w
                .trim()
                .parse()
                .map_err(|_| invalid!("bad quantization width '{w}'"))?;
            let rule = TieRule::Quantized { width };
            rule.validate()?;
            return Ok(rule);
        }
        Err(invalid!("unknown tie rule '{s}' (expected exact | quantized:WIDTH)"))
    }
}

impl TryFrom<String> for TieRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TieRule> for String {
    fn from(r: TieRule) -> String {
        alloc::format!("{r}")
    }
}

/// Indices sharing one value. `indices[0]` is the canonical observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatedGroup {
    pub indices: Vec<usize>,
}

impl RepeatedGroup {
    #[inline]
    pub fn canonical(&self) -> usize {
        self.indices[0]
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Split of `{0, …, n-1}` into singletons and repeated groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    n: usize,
    unique: Vec<usize>,
    groups: Vec<RepeatedGroup>,
    rule: TieRule,
}

impl Partition {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ascending indices of observations that occur exactly once.
    #[inline]
    pub fn unique_indices(&self) -> &[usize] {
        &self.unique
    }

    /// Repeated groups ordered by their canonical (smallest) index.
    #[inline]
    pub fn repeated_groups(&self) -> &[RepeatedGroup] {
        &self.groups
    }

    #[inline]
    pub fn rule(&self) -> TieRule {
        self.rule
    }

    pub fn n_repeated(&self) -> usize {
        self.n - self.unique.len()
    }

    /// Fraction of the sample held in repeated groups.
    pub fn pi_hat(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.n_repeated() as f64 / self.n as f64
        }
    }
}

/// Partitions `data` into unique observations and repeated groups under `rule`.
///
/// Runs in `O(n log n)`. An empty dataset yields an empty partition.
pub fn partition(data: &Dataset, rule: TieRule) -> Result<Partition> {
    rule.validate()?;
    let n = data.len();
    let d = data.dim();
    let keys: Vec<u64> = data.values().iter().map(|&v| rule.key(v)).collect();
    let key = |i: usize| &keys[i * d..(i + 1) * d];

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| key(a).cmp(key(b)).then(a.cmp(&b)));

    let mut unique = Vec::new();
    let mut groups = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && key(order[end]) == key(order[start]) {
            end += 1;
        }
        if end - start == 1 {
            unique.push(order[start]);
        } else {
            // `order` is index-sorted within a run, so the group is ascending.
            groups.push(RepeatedGroup {
                indices: order[start..end].to_vec(),
            });
        }
        start = end;
    }
    unique.sort_unstable();
    groups.sort_unstable_by_key(|g| g.canonical());

    Ok(Partition {
        n,
        unique,
        groups,
        rule,
    })
}

/// One estimated atom.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEntry {
    pub value: Vec<f64>,
    pub count: usize,
    /// Mass within the discrete component (`count / Σ counts`).
    pub mass: f64,
}

/// Estimated discrete component: atom locations, counts and masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTable {
    entries: Vec<AtomEntry>,
    pi_hat: f64,
    n: usize,
    n_unique: usize,
}

impl AtomTable {
    /// Atoms sorted lexicographically by value.
    #[inline]
    pub fn entries(&self) -> &[AtomEntry] {
        &self.entries
    }

    /// Estimated mixing proportion of the discrete component.
    #[inline]
    pub fn pi_hat(&self) -> f64 {
        self.pi_hat
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn n_unique(&self) -> usize {
        self.n_unique
    }

    /// Mass of an entry relative to the whole sample (`count / n`).
    pub fn combined_mass(&self, entry: &AtomEntry) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            entry.count as f64 / self.n as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Builds the atom table for a partition of `data`.
pub fn atom_table(p: &Partition, data: &Dataset) -> Result<AtomTable> {
    if p.n != data.len() {
        return Err(contract!(
            "partition covers {} observations but dataset has {}",
            p.n,
            data.len()
        ));
    }
    let repeated = p.n_repeated();
    let mut entries: Vec<AtomEntry> = p
        .groups
        .iter()
        .map(|g| AtomEntry {
            value: data.point(g.canonical()).to_vec(),
            count: g.count(),
            mass: g.count() as f64 / repeated as f64,
        })
        .collect();
    entries.sort_by(|a, b| lex_cmp(&a.value, &b.value));
    Ok(AtomTable {
        entries,
        pi_hat: p.pi_hat(),
        n: p.n,
        n_unique: p.unique.len(),
    })
}

/// Splits the unique indices at `⌊n/2⌋`: indices below go to the front half.
pub fn split_halves(p: &Partition) -> (Vec<usize>, Vec<usize>) {
    split_at_half(&p.unique, p.n)
}

pub(crate) fn split_at_half(indices: &[usize], n: usize) -> (Vec<usize>, Vec<usize>) {
    let half = n / 2;
    let cut = indices.partition_point(|&i| i < half);
    (indices[..cut].to_vec(), indices[cut..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn uni(v: &[f64]) -> Dataset {
        Dataset::univariate(v.to_vec()).unwrap()
    }

    #[test]
    fn partition_small_example() {
        let data = uni(&[1.0, 2.5, 1.0, 3.7]);
        let p = partition(&data, TieRule::Exact).unwrap();
        assert_eq!(p.unique_indices(), &[1, 3]);
        assert_eq!(p.repeated_groups().len(), 1);
        assert_eq!(p.repeated_groups()[0].indices, vec![0, 2]);
        assert_eq!(data.point(p.repeated_groups()[0].canonical()), &[1.0]);
    }

    #[test]
    fn all_distinct_and_all_identical() {
        let data = uni(&[0.1, 0.2, 0.3]);
        let p = partition(&data, TieRule::Exact).unwrap();
        assert_eq!(p.unique_indices(), &[0, 1, 2]);
        assert!(p.repeated_groups().is_empty());

        let data = uni(&[4.0; 5]);
        let p = partition(&data, TieRule::Exact).unwrap();
        assert!(p.unique_indices().is_empty());
        assert_eq!(p.repeated_groups()[0].indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn empty_dataset_gives_empty_partition() {
        let p = partition(&Dataset::empty(1).unwrap(), TieRule::Exact).unwrap();
        assert_eq!(p.n(), 0);
        assert_eq!(p.pi_hat(), 0.0);
    }

    #[test]
    fn non_finite_rejected() {
        let err = Dataset::univariate(vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 1, coord: 0 });
        let err = Dataset::new(2, vec![1.0, 2.0, 3.0, f64::INFINITY]).unwrap_err();
        assert_eq!(err, Error::NonFinite { index: 1, coord: 1 });
    }

    #[test]
    fn signed_zero_is_one_value() {
        let p = partition(&uni(&[0.0, -0.0]), TieRule::Exact).unwrap();
        assert_eq!(p.repeated_groups().len(), 1);
    }

    #[test]
    fn quantized_groups_nearby_values() {
        let data = uni(&[1.001, 0.999, 2.0]);
        let p = partition(&data, TieRule::Quantized { width: 0.01 }).unwrap();
        assert_eq!(p.unique_indices(), &[2]);
        assert_eq!(p.repeated_groups()[0].indices, vec![0, 1]);
        assert!(partition(&data, TieRule::Quantized { width: 0.0 }).is_err());
        assert!(partition(&data, TieRule::Quantized { width: -1.0 }).is_err());
    }

    #[test]
    fn multivariate_rows_compare_whole_vectors() {
        let data = Dataset::from_rows(&[[1.0, 0.0], [1.0, 2.0], [1.0, 0.0]]).unwrap();
        let p = partition(&data, TieRule::Exact).unwrap();
        assert_eq!(p.unique_indices(), &[1]);
        assert_eq!(p.repeated_groups()[0].indices, vec![0, 2]);
    }

    #[test]
    fn atom_table_masses() {
        let data = uni(&[1.0, 2.5, 1.0, 3.7]);
        let p = partition(&data, TieRule::Exact).unwrap();
        let t = atom_table(&p, &data).unwrap();
        assert_eq!(t.pi_hat(), 0.5);
        assert_eq!(t.entries().len(), 1);
        assert_eq!(t.entries()[0].mass, 1.0);
        assert_eq!(t.entries()[0].count, 2);
        assert_eq!(t.combined_mass(&t.entries()[0]), 0.5);
        assert_eq!(t.n_unique(), 2);

        let data = uni(&[1.0, 2.0]);
        let p = partition(&data, TieRule::Exact).unwrap();
        let t = atom_table(&p, &data).unwrap();
        assert_eq!(t.pi_hat(), 0.0);
        assert!(t.is_empty());
    }

    #[test]
    fn atom_table_sorted_by_value() {
        let data = uni(&[3.0, 1.0, 3.0, 1.0, 2.0, 1.0]);
        let p = partition(&data, TieRule::Exact).unwrap();
        let t = atom_table(&p, &data).unwrap();
        let vals: Vec<f64> = t.entries().iter().map(|e| e.value[0]).collect();
        assert_eq!(vals, vec![1.0, 3.0]);
        assert_eq!(t.entries()[0].count, 3);
        assert!((t.entries()[0].mass - 0.6).abs() < 1e-15);
    }

    #[test]
    fn atom_table_rejects_mismatched_dataset() {
        let data = uni(&[1.0, 1.0]);
        let p = partition(&data, TieRule::Exact).unwrap();
        let other = uni(&[1.0, 1.0, 2.0]);
        assert!(matches!(atom_table(&p, &other), Err(Error::Contract(_))));
    }

    #[test]
    fn split_halves_examples() {
        let p = partition(&uni(&[1.0, 2.5, 1.0, 3.7]), TieRule::Exact).unwrap();
        // 1-based {2,4} with threshold 2 -> front {2}, back {4}
        assert_eq!(split_halves(&p), (vec![1], vec![3]));

        let p = partition(&uni(&[1.0, 2.0, 3.0, 4.0, 5.0]), TieRule::Exact).unwrap();
        assert_eq!(split_halves(&p), (vec![0, 1], vec![2, 3, 4]));

        let p = partition(&uni(&[7.0, 7.0]), TieRule::Exact).unwrap();
        assert_eq!(split_halves(&p), (vec![], vec![]));
    }

    #[test]
    fn tie_rule_parsing() {
        assert_eq!("exact".parse::<TieRule>().unwrap(), TieRule::Exact);
        assert_eq!(
            "quantized:0.5".parse::<TieRule>().unwrap(),
            TieRule::Quantized { width: 0.5 }
        );
        assert!("quantized:0".parse::<TieRule>().is_err());
        assert!("fuzzy".parse::<TieRule>().is_err());
    }
}
