//! Integer frequency vectors, ordered frequency sets and candidate grids.
//!
//! Sets keep insertion order so that detection is reproducible; file output
//! uses the lexicographic order returned by [`FrequencySet::sorted`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use indexmap::IndexSet;

use crate::error::{invalid, Error, Result};

/// A frequency `k ∈ Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Frequency(Box<[i32]>);

impl Frequency {
    pub fn new(components: impl Into<Vec<i32>>) -> Self {
        Frequency(components.into().into_boxed_slice())
    }

    pub fn zero(d: usize) -> Self {
        Frequency(vec![0; d].into_boxed_slice())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Number of nonzero components, `‖k‖₀`.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|&&k| k != 0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// `k · z mod m` in `[0, m)`.
    pub fn residue(&self, z: &[u64], m: u64) -> u64 {
        debug_assert_eq!(z.len(), self.0.len());
        let m_i = m as i128;
        let mut acc: i128 = 0;
        for (&k, &zj) in self.0.iter().zip(z) {
            acc = (acc + k as i128 * zj as i128) % m_i;
        }
        acc.rem_euclid(m_i) as u64
    }

    /// The concatenation `(self, last)`.
    pub fn extended(&self, last: i32) -> Self {
        let mut v = self.0.to_vec();
        v.push(last);
        Frequency::new(v)
    }
}

impl Deref for Frequency {
    type Target = [i32];

    fn deref(&self) -> &[i32] {
        &self.0
    }
}

impl fmt::Debug for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i32>> for Frequency {
    fn from(v: Vec<i32>) -> Self {
        Frequency::new(v)
    }
}

impl<const N: usize> From<[i32; N]> for Frequency {
    fn from(v: [i32; N]) -> Self {
        Frequency::new(v.to_vec())
    }
}

/// A finite, duplicate-free, insertion-ordered set of frequencies of equal length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencySet {
    dim: usize,
    elements: IndexSet<Frequency>,
}

impl FrequencySet {
    pub fn new(dim: usize) -> Self {
        FrequencySet {
            dim,
            elements: IndexSet::new(),
        }
    }

    pub fn from_frequencies<I, F>(dim: usize, freqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = F>,
        F: Into<Frequency>,
    {
        let mut set = FrequencySet::new(dim);
        for k in freqs {
            set.insert(k.into())?;
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Inserts `k`; returns `true` if it was not yet present.
    pub fn insert(&mut self, k: Frequency) -> Result<bool> {
        if k.dim() != self.dim {
            return invalid(format!(
                "frequency {k:?} has length {}, set dimension is {}",
                k.dim(),
                self.dim
            ));
        }
        Ok(self.elements.insert(k))
    }

    pub fn contains(&self, k: &Frequency) -> bool {
        self.elements.contains(k)
    }

    pub fn index_of(&self, k: &Frequency) -> Option<usize> {
        self.elements.get_index_of(k)
    }

    pub fn get(&self, i: usize) -> Option<&Frequency> {
        self.elements.get_index(i)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Frequency> + '_ {
        self.elements.iter()
    }

    /// Adds every element of `other` not yet present, keeping `other`'s order.
    pub fn extend_from(&mut self, other: &FrequencySet) -> Result<()> {
        if other.dim != self.dim {
            return invalid(format!(
                "cannot merge sets of dimension {} and {}",
                self.dim, other.dim
            ));
        }
        for k in other.iter() {
            self.elements.insert(k.clone());
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &FrequencySet) -> bool {
        self.dim == other.dim && self.iter().all(|k| other.contains(k))
    }

    /// Copy in lexicographic order (the archive order).
    pub fn sorted(&self) -> FrequencySet {
        let mut v: Vec<Frequency> = self.elements.iter().cloned().collect();
        v.sort();
        FrequencySet {
            dim: self.dim,
            elements: v.into_iter().collect(),
        }
    }

    /// Componentwise minimum and maximum over the set, per dimension.
    pub fn bounds(&self) -> Option<(Vec<i32>, Vec<i32>)> {
        let first = self.elements.first()?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for k in self.iter() {
            for j in 0..self.dim {
                lo[j] = lo[j].min(k[j]);
                hi[j] = hi[j].max(k[j]);
            }
        }
        Some((lo, hi))
    }

    /// Projection onto the (0-based) dimension indices `dims`, duplicates removed.
    pub fn project(&self, dims: &[usize]) -> Result<FrequencySet> {
        for (i, &t) in dims.iter().enumerate() {
            if t >= self.dim {
                return invalid(format!(
                    "projection index {t} out of range for dimension {}",
                    self.dim
                ));
            }
            if dims[..i].contains(&t) {
                return invalid(format!("projection index {t} repeated"));
            }
        }
        let mut out = FrequencySet::new(dims.len());
        for k in self.iter() {
            out.elements
                .insert(Frequency::new(dims.iter().map(|&t| k[t]).collect::<Vec<_>>()));
        }
        Ok(out)
    }

    /// `(left × right) ∩ P_{1..t}(grid)` where `t = left.dim() + 1`.
    pub fn cross_intersect(
        left: &FrequencySet,
        right: &FrequencySet,
        grid: &CandidateGrid,
    ) -> Result<FrequencySet> {
        if right.dim != 1 {
            return invalid(format!("right factor must be one-dimensional, got {}", right.dim));
        }
        let t = left.dim + 1;
        if grid.dim() < t {
            return invalid(format!(
                "grid dimension {} smaller than product dimension {t}",
                grid.dim()
            ));
        }
        let mut out = FrequencySet::new(t);
        for k in left.iter() {
            if !(0..left.dim).all(|j| grid.contains_component(j, k[j])) {
                continue;
            }
            for kt in right.iter() {
                if grid.contains_component(t - 1, kt[0]) {
                    out.elements.insert(k.extended(kt[0]));
                }
            }
        }
        Ok(out)
    }

    /// The sets `J_ℓ` of frequencies with exactly `ℓ` nonzero components.
    /// Only nonempty classes are present in the map.
    pub fn nnz_partition(&self) -> BTreeMap<usize, FrequencySet> {
        let mut parts: BTreeMap<usize, FrequencySet> = BTreeMap::new();
        for k in self.iter() {
            parts
                .entry(k.nnz())
                .or_insert_with(|| FrequencySet::new(self.dim))
                .elements
                .insert(k.clone());
        }
        parts
    }

    /// Text form: `d=<d> n=<n>` followed by one comma-separated frequency per line.
    /// Elements are written in lexicographic order.
    pub fn to_text(&self) -> String {
        let mut s = format!("d={} n={}\n", self.dim, self.len());
        for k in self.sorted().iter() {
            push_frequency(&mut s, k);
            s.push('\n');
        }
        s
    }

    /// Parses the text form. `first_line` is the 1-based line number of the header,
    /// used for error messages when the block is embedded in a larger file.
    pub fn parse_lines<'a, I>(lines: &mut I, first_line: usize) -> Result<FrequencySet>
    where
        I: Iterator<Item = &'a str>,
    {
        let header = lines.next().ok_or(Error::Parse {
            line: first_line,
            msg: "missing frequency-set header".into(),
        })?;
        let fields = parse_header(header, first_line)?;
        let d = header_usize(&fields, "d", first_line)?;
        let n = header_usize(&fields, "n", first_line)?;
        let mut set = FrequencySet::new(d);
        for i in 0..n {
            let line_no = first_line + 1 + i;
            let line = lines.next().ok_or(Error::Parse {
                line: line_no,
                msg: format!("expected {n} frequencies, found {i}"),
            })?;
            let k = parse_frequency(line, d, line_no)?;
            if !set.elements.insert(k) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "duplicate frequency".into(),
                });
            }
        }
        Ok(set)
    }

    pub fn from_text(text: &str) -> Result<FrequencySet> {
        FrequencySet::parse_lines(&mut text.lines(), 1)
    }
}

impl<'a> IntoIterator for &'a FrequencySet {
    type Item = &'a Frequency;
    type IntoIter = indexmap::set::Iter<'a, Frequency>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.iter()
    }
}

pub(crate) fn push_frequency(s: &mut String, k: &Frequency) {
    use std::fmt::Write;
    for (j, c) in k.iter().enumerate() {
        if j > 0 {
            s.push(',');
        }
        let _ = write!(s, "{c}");
    }
}

fn parse_frequency(line: &str, d: usize, line_no: usize) -> Result<Frequency> {
    let comps: std::result::Result<Vec<i32>, _> =
        line.trim().split(',').map(|c| c.trim().parse::<i32>()).collect();
    let comps = comps.map_err(|e| Error::Parse {
        line: line_no,
        msg: format!("bad frequency component: {e}"),
    })?;
    if comps.len() != d {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("frequency has {} components, expected {d}", comps.len()),
        });
    }
    Ok(Frequency::new(comps))
}

/// Splits a `key=value key=value` header line.
pub(crate) fn parse_header(line: &str, line_no: usize) -> Result<Vec<(String, String)>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or(Error::Parse {
                    line: line_no,
                    msg: format!("expected key=value, got {tok:?}"),
                })
        })
        .collect()
}

pub(crate) fn header_value<'a>(
    fields: &'a [(String, String)],
    key: &str,
    line_no: usize,
) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or(Error::Parse {
            line: line_no,
            msg: format!("missing header field {key:?}"),
        })
}

pub(crate) fn header_usize(fields: &[(String, String)], key: &str, line_no: usize) -> Result<usize> {
    header_value(fields, key, line_no)?
        .parse()
        .map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("field {key:?}: {e}"),
        })
}

/// Axis-aligned box `Π_t [lo_t, hi_t]` of candidate frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateGrid {
    lo: Vec<i32>,
    hi: Vec<i32>,
}

impl CandidateGrid {
    pub fn new(lo: Vec<i32>, hi: Vec<i32>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return invalid("grid bounds must be nonempty and of equal length");
        }
        if let Some(t) = (0..lo.len()).find(|&t| lo[t] > hi[t]) {
            return invalid(format!("grid bound lo > hi in dimension {t}"));
        }
        Ok(CandidateGrid { lo, hi })
    }

    /// The full grid `[-n, n]^d`.
    pub fn symmetric(d: usize, n: u32) -> Result<Self> {
        let n = n as i32;
        CandidateGrid::new(vec![-n; d], vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self, t: usize) -> i32 {
        self.lo[t]
    }

    pub fn hi(&self, t: usize) -> i32 {
        self.hi[t]
    }

    /// Number of integers in dimension `t`, `K_t = hi_t - lo_t + 1`.
    pub fn extent(&self, t: usize) -> usize {
        (self.hi[t] - self.lo[t] + 1) as usize
    }

    /// `N_Γ = max_t (hi_t - lo_t)`.
    pub fn n_gamma(&self) -> u64 {
        (0..self.dim())
            .map(|t| (self.hi[t] - self.lo[t]) as u64)
            .max()
            .unwrap_or(0)
    }

    pub fn contains_component(&self, t: usize, k: i32) -> bool {
        self.lo[t] <= k && k <= self.hi[t]
    }

    pub fn contains(&self, k: &Frequency) -> bool {
        k.dim() == self.dim() && k.iter().enumerate().all(|(t, &c)| self.contains_component(t, c))
    }
}
