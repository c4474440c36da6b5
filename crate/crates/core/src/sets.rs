//! Cubes, counting sets and semilinear sets over named dimensions.
//!
//! A [`Cube`] is a box `∏ [lowerᵢ, upperᵢ]` with possibly infinite upper
//! bounds; a [`CountingSet`] is a finite union of cubes. A [`LinearSet`] is
//! an integer cone `base + Σ aⱼ·periodⱼ` and a [`SemilinearSet`] a finite
//! union of cones. All of them live in `ℕ^dims`.

use std::collections::BTreeSet;
use std::fmt;

use num_integer::Integer;
use thiserror::Error;

use crate::multiset;
use crate::protocol::{Protocol, StateId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension lists differ")]
    DimensionNames,
    #[error("empty interval on dimension {dim}: lower {lower} above upper {upper}")]
    InvalidBounds { dim: usize, lower: u32, upper: u32 },
    #[error("period {0} is the zero multiset")]
    ZeroPeriod(usize),
    #[error("unknown output dimension `{0}`")]
    UnknownOutput(String),
    #[error("output `{0}` of the protocol is not a dimension of the condition")]
    MissingOutput(String),
    #[error("not size-flexible: no member of size {size}")]
    NotSizeFlexible { size: u64 },
}

/// Per-coordinate box with optional (infinite when `None`) upper bounds.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cube {
    lower: Vec<u32>,
    upper: Vec<Option<u32>>,
}

fn upper_key(u: Option<u32>) -> u64 {
    u.map_or(u64::MAX, u64::from)
}

impl Cube {
    /// Panics if the bounds are inconsistent; see [`Cube::try_new`].
    pub fn new(lower: Vec<u32>, upper: Vec<Option<u32>>) -> Self {
        Self::try_new(lower, upper).expect("valid cube bounds")
    }

    pub fn try_new(lower: Vec<u32>, upper: Vec<Option<u32>>) -> Result<Self, SetError> {
        if lower.len() != upper.len() {
            return Err(SetError::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (dim, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if let Some(u) = u {
                if l > u {
                    return Err(SetError::InvalidBounds { dim, lower: l, upper: u });
                }
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn full(dims: usize) -> Self {
        Self { lower: vec![0; dims], upper: vec![None; dims] }
    }

    pub fn point(x: &[u32]) -> Self {
        Self { lower: x.to_vec(), upper: x.iter().map(|&v| Some(v)).collect() }
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[u32] {
        &self.lower
    }

    pub fn upper(&self) -> &[Option<u32>] {
        &self.upper
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((&v, &l), &u)| v >= l && u.is_none_or(|u| v <= u))
    }

    pub fn intersect(&self, other: &Cube) -> Option<Cube> {
        let mut lower = Vec::with_capacity(self.dims());
        let mut upper = Vec::with_capacity(self.dims());
        for i in 0..self.dims() {
            let l = self.lower[i].max(other.lower[i]);
            let u = match (self.upper[i], other.upper[i]) {
                (None, u) | (u, None) => u,
                (Some(a), Some(b)) => Some(a.min(b)),
            };
            if u.is_some_and(|u| l > u) {
                return None;
            }
            lower.push(l);
            upper.push(u);
        }
        Some(Cube { lower, upper })
    }

    pub fn is_subset_of(&self, other: &Cube) -> bool {
        (0..self.dims()).all(|i| {
            self.lower[i] >= other.lower[i]
                && match (self.upper[i], other.upper[i]) {
                    (_, None) => true,
                    (None, Some(_)) => false,
                    (Some(a), Some(b)) => a <= b,
                }
        })
    }

    /// `self \ other` as a list of pairwise disjoint cubes.
    pub fn subtract(&self, other: &Cube) -> Vec<Cube> {
        let Some(common) = self.intersect(other) else {
            return vec![self.clone()];
        };
        let mut pieces = Vec::new();
        let mut rest = self.clone();
        for i in 0..self.dims() {
            if rest.lower[i] < common.lower[i] {
                let mut below = rest.clone();
                below.upper[i] = Some(common.lower[i] - 1);
                pieces.push(below);
            }
            if let Some(cu) = common.upper[i] {
                if upper_key(rest.upper[i]) > u64::from(cu) {
                    let mut above = rest.clone();
                    above.lower[i] = cu + 1;
                    pieces.push(above);
                }
            }
            rest.lower[i] = common.lower[i];
            rest.upper[i] = common.upper[i];
        }
        pieces
    }

    /// Size of the smallest member (the lower-bound corner).
    pub fn min_size(&self) -> u64 {
        multiset::size(&self.lower)
    }

    /// Largest finite bound (lower or upper) appearing in the cube.
    pub fn max_finite_bound(&self) -> u32 {
        let l = self.lower.iter().copied().max().unwrap_or(0);
        let u = self.upper.iter().flatten().copied().max().unwrap_or(0);
        l.max(u)
    }

    /// Least member of size `n` in sequence order (most copies of earlier
    /// dimensions first), if any.
    pub fn greedy_member_of_size(&self, n: u64) -> Option<Vec<u32>> {
        let base = self.min_size();
        if base > n {
            return None;
        }
        let mut rem = n - base;
        let mut x = self.lower.clone();
        for i in 0..self.dims() {
            let room = self.upper[i].map_or(u64::MAX, |u| u64::from(u - self.lower[i]));
            let add = rem.min(room);
            x[i] += add as u32;
            rem -= add;
        }
        (rem == 0).then_some(x)
    }

    /// Merges two cubes that differ in exactly one coordinate where their
    /// intervals overlap or touch.
    fn merge(&self, other: &Cube) -> Option<Cube> {
        let mut differing = None;
        for i in 0..self.dims() {
            if self.lower[i] != other.lower[i] || self.upper[i] != other.upper[i] {
                if differing.is_some() {
                    return None;
                }
                differing = Some(i);
            }
        }
        let i = differing?;
        let (a, b) = if self.lower[i] <= other.lower[i] { (self, other) } else { (other, self) };
        if upper_key(a.upper[i]).saturating_add(1) < u64::from(b.lower[i]) {
            return None;
        }
        let mut merged = a.clone();
        merged.upper[i] = if upper_key(a.upper[i]) >= upper_key(b.upper[i]) { a.upper[i] } else { b.upper[i] };
        Some(merged)
    }

    fn sort_key(&self) -> (Vec<u32>, Vec<u64>) {
        (self.lower.clone(), self.upper.iter().map(|&u| upper_key(u)).collect())
    }
}

/// Finite union of cubes over a shared dimension list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountingSet {
    dims: Vec<String>,
    cubes: Vec<Cube>,
}

impl CountingSet {
    pub fn new(dims: Vec<String>, cubes: Vec<Cube>) -> Result<Self, SetError> {
        for c in &cubes {
            if c.dims() != dims.len() {
                return Err(SetError::DimensionMismatch { expected: dims.len(), got: c.dims() });
            }
        }
        Ok(Self { dims, cubes })
    }

    pub fn empty(dims: Vec<String>) -> Self {
        Self { dims, cubes: Vec::new() }
    }

    pub fn full(dims: Vec<String>) -> Self {
        let n = dims.len();
        Self { dims, cubes: vec![Cube::full(n)] }
    }

    /// Counting set over the states of `p`.
    pub fn over_states(p: &Protocol, cubes: Vec<Cube>) -> Result<Self, SetError> {
        Self::new(p.states().to_vec(), cubes)
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    /// Cubes are nonempty, so the union is empty iff there are no cubes.
    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn member(&self, x: &[u32]) -> Result<bool, SetError> {
        if x.len() != self.dims.len() {
            return Err(SetError::DimensionMismatch { expected: self.dims.len(), got: x.len() });
        }
        Ok(self.contains(x))
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        self.cubes.iter().any(|c| c.contains(x))
    }

    fn check_dims(&self, other: &CountingSet) -> Result<(), SetError> {
        if self.dims.len() != other.dims.len() {
            return Err(SetError::DimensionMismatch { expected: self.dims.len(), got: other.dims.len() });
        }
        if self.dims != other.dims {
            return Err(SetError::DimensionNames);
        }
        Ok(())
    }

    /// Cube-pairwise intersection.
    pub fn intersect(&self, other: &CountingSet) -> Result<CountingSet, SetError> {
        self.check_dims(other)?;
        let mut cubes = Vec::new();
        for a in &self.cubes {
            for b in &other.cubes {
                if let Some(c) = a.intersect(b) {
                    cubes.push(c);
                }
            }
        }
        Ok(CountingSet { dims: self.dims.clone(), cubes }.canonicalize())
    }

    /// List concatenation.
    pub fn union(&self, other: &CountingSet) -> Result<CountingSet, SetError> {
        self.check_dims(other)?;
        let mut cubes = self.cubes.clone();
        cubes.extend(other.cubes.iter().cloned());
        Ok(CountingSet { dims: self.dims.clone(), cubes })
    }

    pub fn push(&mut self, cube: Cube) {
        debug_assert_eq!(cube.dims(), self.dims.len());
        self.cubes.push(cube);
    }

    /// Complement within `ℕ^dims`: the full cube with every cube of `self`
    /// carved out, as a canonical union of disjoint slabs.
    pub fn complement(&self) -> CountingSet {
        let mut pieces = vec![Cube::full(self.dims.len())];
        for cut in &self.cubes {
            pieces = pieces.iter().flat_map(|p| p.subtract(cut)).collect();
            if pieces.is_empty() {
                break;
            }
        }
        CountingSet { dims: self.dims.clone(), cubes: pieces }.compact()
    }

    /// Drops duplicates and cubes contained in another single cube, then
    /// sorts lexicographically by bounds.
    pub fn canonicalize(&self) -> CountingSet {
        let mut cubes = self.cubes.clone();
        cubes.sort_by_key(Cube::sort_key);
        cubes.dedup();
        // larger cubes first so that subsumption keeps the maximal ones
        let mut order: Vec<usize> = (0..cubes.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(volume_key(&cubes[i])));
        let mut kept: Vec<Cube> = Vec::new();
        for i in order {
            if !kept.iter().any(|k| cubes[i].is_subset_of(k)) {
                kept.retain(|k| !k.is_subset_of(&cubes[i]));
                kept.push(cubes[i].clone());
            }
        }
        kept.sort_by_key(Cube::sort_key);
        CountingSet { dims: self.dims.clone(), cubes: kept }
    }

    /// Canonicalizes and repeatedly merges cubes that differ in a single
    /// coordinate with touching intervals.
    pub fn compact(&self) -> CountingSet {
        let mut set = self.canonicalize();
        loop {
            let mut merged_any = false;
            let mut i = 0;
            while i < set.cubes.len() {
                let mut j = i + 1;
                while j < set.cubes.len() {
                    if let Some(m) = set.cubes[i].merge(&set.cubes[j]) {
                        set.cubes[i] = m;
                        set.cubes.swap_remove(j);
                        merged_any = true;
                    } else {
                        j += 1;
                    }
                }
                i += 1;
            }
            if !merged_any {
                return set.canonicalize();
            }
            set = set.canonicalize();
        }
    }

    /// Semantic inclusion `self ⊆ other`.
    pub fn is_subset(&self, other: &CountingSet) -> Result<bool, SetError> {
        self.check_dims(other)?;
        Ok(self.cubes.iter().all(|k| cube_covered(k, &other.cubes)))
    }

    pub fn same_denotation(&self, other: &CountingSet) -> Result<bool, SetError> {
        Ok(self.is_subset(other)? && other.is_subset(self)?)
    }

    /// A member of least size: the smallest lower-bound corner.
    pub fn min_size_member(&self) -> Option<Vec<u32>> {
        self.cubes.iter().min_by_key(|c| (c.min_size(), c.sort_key())).map(|c| c.lower.clone())
    }

    pub fn max_finite_bound(&self) -> u32 {
        self.cubes.iter().map(Cube::max_finite_bound).max().unwrap_or(0)
    }

    /// All members of size `n`, in descending lexicographic order.
    pub fn members_of_size(&self, n: u32) -> Vec<Vec<u32>> {
        multiset::compositions(n, self.dims.len()).into_iter().filter(|x| self.contains(x)).collect()
    }

    /// The same set written as a union of cones: finite coordinates are
    /// enumerated into bases, infinite ones become unit periods.
    pub fn to_semilinear(&self) -> SemilinearSet {
        let d = self.dims.len();
        let mut cones = Vec::new();
        for cube in &self.cubes {
            let periods: Vec<Vec<u32>> = (0..d)
                .filter(|&i| cube.upper[i].is_none())
                .map(|i| {
                    let mut v = vec![0; d];
                    v[i] = 1;
                    v
                })
                .collect();
            let mut bases = vec![cube.lower.clone()];
            for i in 0..d {
                if let Some(u) = cube.upper[i] {
                    bases = bases
                        .into_iter()
                        .flat_map(|b| {
                            (cube.lower[i]..=u).map(move |v| {
                                let mut b = b.clone();
                                b[i] = v;
                                b
                            })
                        })
                        .collect();
                }
            }
            cones.extend(bases.into_iter().map(|b| LinearSet::new(b, periods.clone())));
        }
        SemilinearSet { dims: self.dims.clone(), cones }
    }
}

fn volume_key(c: &Cube) -> (usize, u64) {
    let infinite = c.upper.iter().filter(|u| u.is_none()).count();
    let finite: u64 = c
        .lower
        .iter()
        .zip(&c.upper)
        .filter_map(|(&l, &u)| u.map(|u| u64::from(u - l) + 1))
        .fold(1u64, |a, b| a.saturating_mul(b));
    (infinite, finite)
}

/// True iff `k ⊆ ⋃ cover`.
fn cube_covered(k: &Cube, cover: &[Cube]) -> bool {
    let mut remaining = vec![k.clone()];
    for c in cover {
        remaining = remaining.iter().flat_map(|r| r.subtract(c)).collect();
        if remaining.is_empty() {
            return true;
        }
    }
    remaining.is_empty()
}

impl fmt::Display for CountingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.cubes.is_empty() {
            return write!(f, "∅");
        }
        for (k, c) in self.cubes.iter().enumerate() {
            if k > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{{")?;
            for i in 0..self.dims.len() {
                if i > 0 {
                    write!(f, " ")?;
                }
                match c.upper[i] {
                    Some(u) => write!(f, "{}[{},{}]", self.dims[i], c.lower[i], u)?,
                    None => write!(f, "{}[{},*]", self.dims[i], c.lower[i])?,
                }
            }
            write!(f, "}}")?;
        }
        Ok(())
    }
}

/// Integer cone `base + Σ aⱼ·periods[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinearSet {
    base: Vec<u32>,
    periods: Vec<Vec<u32>>,
}

impl LinearSet {
    pub fn new(base: Vec<u32>, periods: Vec<Vec<u32>>) -> Self {
        Self { base, periods }
    }

    pub fn base(&self) -> &[u32] {
        &self.base
    }

    pub fn periods(&self) -> &[Vec<u32>] {
        &self.periods
    }

    pub fn dims(&self) -> usize {
        self.base.len()
    }

    pub fn base_size(&self) -> u64 {
        multiset::size(&self.base)
    }

    /// Bounded search over period coefficients.
    pub fn contains(&self, x: &[u32]) -> bool {
        if x.len() != self.base.len() {
            return false;
        }
        let mut rest = Vec::with_capacity(x.len());
        for (&v, &b) in x.iter().zip(&self.base) {
            match v.checked_sub(b) {
                Some(r) => rest.push(r),
                None => return false,
            }
        }
        let periods: Vec<&Vec<u32>> = self.periods.iter().filter(|p| p.iter().any(|&v| v > 0)).collect();
        cone_search(&mut rest, &periods)
    }
}

fn cone_search(rest: &mut [u32], periods: &[&Vec<u32>]) -> bool {
    let Some((p, others)) = periods.split_first() else {
        return rest.iter().all(|&v| v == 0);
    };
    let bound = p
        .iter()
        .zip(rest.iter())
        .filter(|(&pv, _)| pv > 0)
        .map(|(&pv, &r)| r / pv)
        .min()
        .unwrap_or(0);
    for a in 0..=bound {
        for (r, &pv) in rest.iter_mut().zip(p.iter()) {
            *r -= a * pv;
        }
        let found = cone_search(rest, others);
        for (r, &pv) in rest.iter_mut().zip(p.iter()) {
            *r += a * pv;
        }
        if found {
            return true;
        }
    }
    false
}

/// Finite union of cones over a shared dimension list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemilinearSet {
    dims: Vec<String>,
    cones: Vec<LinearSet>,
}

impl SemilinearSet {
    pub fn new(dims: Vec<String>, cones: Vec<LinearSet>) -> Result<Self, SetError> {
        for c in &cones {
            if c.base.len() != dims.len() {
                return Err(SetError::DimensionMismatch { expected: dims.len(), got: c.base.len() });
            }
            for p in &c.periods {
                if p.len() != dims.len() {
                    return Err(SetError::DimensionMismatch { expected: dims.len(), got: p.len() });
                }
            }
        }
        Ok(Self { dims, cones })
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    pub fn cones(&self) -> &[LinearSet] {
        &self.cones
    }

    pub fn member(&self, x: &[u32]) -> Result<bool, SetError> {
        if x.len() != self.dims.len() {
            return Err(SetError::DimensionMismatch { expected: self.dims.len(), got: x.len() });
        }
        Ok(self.contains(x))
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        self.cones.iter().any(|c| c.contains(x))
    }

    /// The set of sizes of members, in normal form.
    pub fn sizes(&self) -> PeriodicSet {
        let projected: Vec<LinearSet> = self.cones.iter().map(size_projection).collect();
        PeriodicSet::from_cones(&projected)
    }

    /// Ok iff every size has a member; otherwise the least size without one.
    pub fn check_size_flexible(&self) -> Result<(), SetError> {
        match self.sizes().first_gap() {
            None => Ok(()),
            Some(size) => Err(SetError::NotSizeFlexible { size }),
        }
    }
}

/// Splits a cone into cones whose periods all have the same size
/// `L = lcm |vⱼ|`: bases `B + Σ rⱼvⱼ` with `0 ≤ rⱼ < L/|vⱼ|`, periods
/// `(L/|vⱼ|)·vⱼ`.
pub fn equalize_periods(c: &LinearSet) -> Result<Vec<LinearSet>, SetError> {
    if let Some(j) = c.periods.iter().position(|p| p.iter().all(|&v| v == 0)) {
        return Err(SetError::ZeroPeriod(j));
    }
    if c.periods.is_empty() {
        return Ok(vec![c.clone()]);
    }
    let sizes: Vec<u64> = c.periods.iter().map(|p| multiset::size(p)).collect();
    let l = sizes.iter().fold(1u64, |acc, &s| acc.lcm(&s));
    let factors: Vec<u64> = sizes.iter().map(|&s| l / s).collect();
    let periods: Vec<Vec<u32>> = c
        .periods
        .iter()
        .zip(&factors)
        .map(|(p, &f)| p.iter().map(|&v| v * f as u32).collect())
        .collect();
    let mut bases = vec![c.base.clone()];
    for (p, &f) in c.periods.iter().zip(&factors) {
        bases = bases
            .into_iter()
            .flat_map(|b| {
                (0..f).map(move |r| b.iter().zip(p).map(|(&bv, &pv)| bv + r as u32 * pv).collect::<Vec<u32>>())
            })
            .collect();
    }
    Ok(bases.into_iter().map(|b| LinearSet::new(b, periods.clone())).collect())
}

/// One-dimensional cone of the sizes of members: base `|B|`, periods `|vⱼ|`.
pub fn size_projection(c: &LinearSet) -> LinearSet {
    LinearSet::new(
        vec![c.base_size() as u32],
        c.periods.iter().map(|p| vec![multiset::size(p) as u32]).collect(),
    )
}

/// A set of naturals in the form `n ∈ exceptions` (for `n < threshold`) or
/// `n mod modulus ∈ residues` (for `n ≥ threshold`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicSet {
    pub exceptions: BTreeSet<u32>,
    pub threshold: u32,
    pub modulus: u32,
    pub residues: BTreeSet<u32>,
}

impl PeriodicSet {
    /// Normal form of a union of one-dimensional cones. Beyond
    /// `b + g·(a_min−1)(a_max−1)` (the Schur bound on the Frobenius number of
    /// the normalized periods) a cone contains exactly the sizes `≡ b mod g`,
    /// so membership is periodic with period `lcm` of the per-cone `g`.
    pub fn from_cones(cones: &[LinearSet]) -> PeriodicSet {
        let mut modulus: u64 = 1;
        let mut threshold: u64 = 1;
        let mut normalized: Vec<(u64, Vec<u64>)> = Vec::new();
        for c in cones {
            let b = u64::from(c.base()[0]);
            let periods: Vec<u64> = c.periods().iter().map(|p| u64::from(p[0])).filter(|&p| p > 0).collect();
            if periods.is_empty() {
                threshold = threshold.max(b + 1);
            } else {
                let g = periods.iter().fold(0u64, |acc, &p| acc.gcd(&p));
                let amin = periods.iter().min().unwrap() / g;
                let amax = periods.iter().max().unwrap() / g;
                threshold = threshold.max(b + g * (amin - 1) * (amax - 1));
                modulus = modulus.lcm(&g);
            }
            normalized.push((b, periods));
        }
        let limit = (threshold + 2 * modulus) as usize;
        let mut member = vec![false; limit + 1];
        for (b, periods) in &normalized {
            let b = *b as usize;
            if b > limit {
                continue;
            }
            let mut reach = vec![false; limit + 1];
            reach[b] = true;
            for x in b..=limit {
                if reach[x] {
                    for &p in periods {
                        let y = x + p as usize;
                        if y <= limit {
                            reach[y] = true;
                        }
                    }
                }
            }
            for (m, r) in member.iter_mut().zip(reach) {
                *m |= r;
            }
        }
        let mut t = threshold as usize;
        let l = modulus as usize;
        while t > 1 && member[t - 1] == member[t - 1 + l] {
            t -= 1;
        }
        let exceptions = (0..t).filter(|&n| member[n]).map(|n| n as u32).collect();
        let residues = (t..t + l).filter(|&n| member[n]).map(|n| (n % l) as u32).collect();
        PeriodicSet { exceptions, threshold: t as u32, modulus: l as u32, residues }
    }

    pub fn contains(&self, n: u64) -> bool {
        if n < u64::from(self.threshold) {
            self.exceptions.contains(&(n as u32))
        } else {
            self.residues.contains(&((n % u64::from(self.modulus)) as u32))
        }
    }

    /// Least natural not in the set, if any.
    pub fn first_gap(&self) -> Option<u64> {
        (0..u64::from(self.threshold) + u64::from(self.modulus)).find(|&n| !self.contains(n))
    }
}

/// Lifts a counting set over output values to the counting set of
/// configurations of `p` whose output multiset lies in `s`.
///
/// A lower bound `L` on output `x` becomes the union, over compositions of
/// `L` into the states of `o⁻¹(x)`, of lower-bound boxes; a finite upper
/// bound `U` becomes the union over compositions of `U` of upper-bound boxes.
pub fn lift_output_condition(s: &CountingSet, p: &Protocol) -> Result<CountingSet, SetError> {
    let dim_to_output = bind_output_dims(s.dims(), p)?;
    let n = p.num_states();
    let states = p.states().to_vec();
    let classes: Vec<Vec<StateId>> = dim_to_output
        .iter()
        .map(|&o| p.state_ids().filter(|&q| p.output_of(q) == o).collect())
        .collect();

    let mut result = CountingSet::empty(states.clone());
    'cubes: for cube in s.cubes() {
        let mut acc = CountingSet::full(states.clone());
        for (k, class) in classes.iter().enumerate() {
            let l = cube.lower()[k];
            let u = cube.upper()[k];
            if class.is_empty() {
                if l > 0 {
                    continue 'cubes;
                }
                continue;
            }
            let mut piece = CountingSet::full(states.clone());
            if l > 0 {
                let cubes = multiset::compositions(l, class.len())
                    .into_iter()
                    .map(|comp| {
                        let mut c = Cube::full(n);
                        for (&q, &v) in class.iter().zip(&comp) {
                            c.lower[q.0] = v;
                        }
                        c
                    })
                    .collect();
                piece = CountingSet { dims: states.clone(), cubes };
            }
            if let Some(u) = u {
                let cubes = multiset::compositions(u, class.len())
                    .into_iter()
                    .map(|comp| {
                        let mut c = Cube::full(n);
                        for (&q, &v) in class.iter().zip(&comp) {
                            c.upper[q.0] = Some(v);
                        }
                        c
                    })
                    .collect();
                piece = piece.intersect(&CountingSet { dims: states.clone(), cubes })?;
            }
            acc = acc.intersect(&piece)?;
            if acc.is_empty() {
                continue 'cubes;
            }
        }
        result = result.union(&acc)?;
    }
    Ok(result.canonicalize())
}

/// Maps each condition dimension to the protocol output of the same name;
/// the two alphabets must coincide as sets.
pub fn bind_output_dims(dims: &[String], p: &Protocol) -> Result<Vec<usize>, SetError> {
    let mapping = dims
        .iter()
        .map(|d| p.output_index(d).ok_or_else(|| SetError::UnknownOutput(d.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(missing) = p.outputs().iter().find(|o| !dims.contains(o)) {
        return Err(SetError::MissingOutput(missing.clone()));
    }
    Ok(mapping)
}

/// Data extracted from a size-flexible counting set for IO synthesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlexibleWitnesses {
    /// A cube with an infinite upper bound.
    pub cube: Cube,
    /// The lower-bound corner of `cube`.
    pub corner: Vec<u32>,
    /// First dimension of `cube` with an infinite upper bound.
    pub ray_dim: usize,
    /// `small[j]` is a member of size `j`, for every `j < |corner|`.
    pub small: Vec<Vec<u32>>,
}

/// Picks the cube with an infinite upper bound and the smallest corner, and
/// a witness of every size below the corner's size.
pub fn flexible_witnesses(s: &CountingSet) -> Result<FlexibleWitnesses, SetError> {
    let flex = s
        .cubes()
        .iter()
        .filter(|c| c.upper().iter().any(Option::is_none))
        .min_by_key(|c| c.min_size());
    let Some(cube) = flex else {
        let bound: u64 = s
            .cubes()
            .iter()
            .map(|c| c.upper().iter().map(|u| u64::from(u.unwrap_or(0))).sum::<u64>())
            .max()
            .unwrap_or(0);
        let size = (0..=bound + 1).find(|&n| smallest_member_of_size(s, n).is_none()).unwrap_or(bound + 1);
        return Err(SetError::NotSizeFlexible { size });
    };
    let corner = cube.lower().to_vec();
    let ray_dim = cube.upper().iter().position(Option::is_none).expect("infinite coordinate");
    let mut small = Vec::new();
    for j in 0..multiset::size(&corner) {
        match smallest_member_of_size(s, j) {
            Some(w) => small.push(w),
            None => return Err(SetError::NotSizeFlexible { size: j }),
        }
    }
    Ok(FlexibleWitnesses { cube: cube.clone(), corner, ray_dim, small })
}

/// Member of size `n` whose sorted output sequence is least.
pub fn smallest_member_of_size(s: &CountingSet, n: u64) -> Option<Vec<u32>> {
    s.cubes().iter().filter_map(|c| c.greedy_member_of_size(n)).max()
}

/// An output condition in either representation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Condition {
    Counting(CountingSet),
    Semilinear(SemilinearSet),
}

impl Condition {
    pub fn dims(&self) -> &[String] {
        match self {
            Condition::Counting(s) => s.dims(),
            Condition::Semilinear(s) => s.dims(),
        }
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        match self {
            Condition::Counting(s) => s.contains(x),
            Condition::Semilinear(s) => s.contains(x),
        }
    }

    /// Resolves the condition's dimensions against the outputs of `p`.
    pub fn bind(&self, p: &Protocol) -> Result<BoundCondition, SetError> {
        let dim_to_output = bind_output_dims(self.dims(), p)?;
        let state_to_dim = p
            .output_map()
            .iter()
            .map(|o| dim_to_output.iter().position(|d| d == o).expect("every output is a dimension"))
            .collect();
        Ok(BoundCondition { cond: self.clone(), state_to_dim })
    }
}

impl From<CountingSet> for Condition {
    fn from(s: CountingSet) -> Self {
        Condition::Counting(s)
    }
}

impl From<SemilinearSet> for Condition {
    fn from(s: SemilinearSet) -> Self {
        Condition::Semilinear(s)
    }
}

/// A condition evaluated directly on configurations of one protocol.
#[derive(Clone, Debug)]
pub struct BoundCondition {
    cond: Condition,
    state_to_dim: Vec<usize>,
}

impl BoundCondition {
    pub fn condition(&self) -> &Condition {
        &self.cond
    }

    /// The output multiset of `c`, in the condition's dimension order.
    pub fn outputs(&self, c: &crate::protocol::Configuration) -> Vec<u32> {
        let mut x = vec![0u32; self.cond.dims().len()];
        for (q, &k) in c.counts().iter().enumerate() {
            x[self.state_to_dim[q]] += k;
        }
        x
    }

    pub fn holds(&self, c: &crate::protocol::Configuration) -> bool {
        self.cond.contains(&self.outputs(c))
    }
}
