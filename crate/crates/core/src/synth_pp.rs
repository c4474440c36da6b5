//! Synthesis of general population protocols ensuring a size-flexible
//! semilinear output condition.
//!
//! Every cone gets an ensurer (a base chain plus recruiting groups for the
//! period) and a recognizer for the sizes compatible with it; the product of
//! all of them outputs what the first compatible cone's ensurer outputs.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::multiset;
use crate::protocol::{lockstep_product, Configuration, OutputMux, Protocol, ProtocolError, StateId, Transition};
use crate::sets::{equalize_periods, size_projection, LinearSet, PeriodicSet, SemilinearSet, SetError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("cone has an empty base and no periods")]
    EmptyCone,
    #[error("periods of a cone must all have the same size")]
    UnequalPeriods,
    #[error("a point protocol needs a nonempty multiset")]
    EmptyPoint,
    #[error("multiset has {got} coordinates for {expected} outputs")]
    Arity { expected: usize, got: usize },
}

/// A synthesized protocol plus human-readable notes on how it was built.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub protocol: Protocol,
    pub header: Vec<String>,
}

/// Indices of the states of a cone ensurer: base states first, then
/// `up_i, down_i, dot_i` for every position `i` of the period.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConeEnsurerLayout {
    pub base_len: usize,
    pub period_len: usize,
}

impl ConeEnsurerLayout {
    pub fn num_states(&self) -> usize {
        self.base_len + 3 * self.period_len
    }

    /// `j` in `1..=base_len`.
    pub fn base(&self, j: usize) -> StateId {
        StateId(j - 1)
    }

    /// `i` in `1..=period_len`.
    pub fn up(&self, i: usize) -> StateId {
        StateId(self.base_len + 3 * (i - 1))
    }

    pub fn down(&self, i: usize) -> StateId {
        StateId(self.base_len + 3 * (i - 1) + 1)
    }

    pub fn dot(&self, i: usize) -> StateId {
        StateId(self.base_len + 3 * (i - 1) + 2)
    }

    /// The unassigned state, an alias of `down_1`.
    pub fn bottom(&self) -> StateId {
        self.down(1)
    }

    /// Checks that the non-base agents of `c` split into groups, each made
    /// of one agent in every `dot_1..dot_k` plus, when `k` is below the
    /// period size, one agent in `up_{k+1}` or `down_{k+1}`. With
    /// `h_i = #up_i + #down_i` and `d_i = #dot_i` this is exactly
    /// `d_i = d_{i+1} + h_{i+1}` for every `i` below the period size.
    pub fn group_structure_holds(&self, c: &Configuration) -> bool {
        let h = |i: usize| c.get(self.up(i)) + c.get(self.down(i));
        let d = |i: usize| c.get(self.dot(i));
        (1..self.period_len).all(|i| d(i) == d(i + 1) + h(i + 1))
    }
}

/// Ensurer for one cone whose periods all have the same size. Only the
/// first period is used: the base plus any multiple of it lies in the cone.
pub fn build_cone_ensurer(c: &LinearSet, dims: &[String]) -> Result<Protocol, SynthError> {
    if c.base().len() != dims.len() {
        return Err(SynthError::Arity { expected: dims.len(), got: c.base().len() });
    }
    if let Some(j) = c.periods().iter().position(|p| p.iter().all(|&v| v == 0)) {
        return Err(SetError::ZeroPeriod(j).into());
    }
    let sizes: BTreeSet<u64> = c.periods().iter().map(|p| multiset::size(p)).collect();
    if sizes.len() > 1 {
        return Err(SynthError::UnequalPeriods);
    }
    let base = multiset::enumerate(c.base());
    let period = c.periods().first().map(|p| multiset::enumerate(p)).unwrap_or_default();
    if base.is_empty() && period.is_empty() {
        return Err(SynthError::EmptyCone);
    }
    let lay = ConeEnsurerLayout { base_len: base.len(), period_len: period.len() };
    let (b, v) = (lay.base_len, lay.period_len);

    let mut states = Vec::with_capacity(lay.num_states());
    let mut output_map = Vec::with_capacity(lay.num_states());
    for (j, &o) in base.iter().enumerate() {
        states.push(format!("b{}", j + 1));
        output_map.push(o);
    }
    for (i, &o) in period.iter().enumerate() {
        for kind in ["up", "down", "dot"] {
            states.push(format!("{kind}{}", i + 1));
            output_map.push(o);
        }
    }

    let mut ts = Vec::new();
    for j in 1..b {
        ts.push(Transition::new(lay.base(j), lay.base(j), lay.base(j), lay.base(j + 1)));
    }
    if v > 0 {
        if b > 0 {
            ts.push(Transition::new(lay.base(b), lay.base(b), lay.base(b), lay.up(1)));
        }
        for i in 1..=v {
            for j in 1..=v {
                ts.push(Transition::new(lay.up(i), lay.up(j), lay.up(i), lay.down(j)));
            }
        }
        for i in 1..v {
            ts.push(Transition::new(lay.up(i), lay.bottom(), lay.up(i + 1), lay.dot(i)));
        }
        ts.push(Transition::new(lay.up(v), lay.bottom(), lay.up(1), lay.dot(v)));
        // the head of a group with dots 1..i-1 releases its last dot
        for i in 2..=v {
            ts.push(Transition::new(lay.down(i), lay.dot(i - 1), lay.down(i - 1), lay.bottom()));
        }
    }
    let input = if b > 0 { lay.base(1) } else { lay.up(1) };
    Ok(Protocol::new("cone", states, ts, vec![input], dims.to_vec(), output_map)?)
}

/// Layout of the ensurer [`build_cone_ensurer`] builds for `c`.
pub fn cone_layout(c: &LinearSet) -> ConeEnsurerLayout {
    ConeEnsurerLayout {
        base_len: c.base_size() as usize,
        period_len: c.periods().first().map_or(0, |p| multiset::size(p) as usize),
    }
}

/// Boolean protocol computing whether the population size lies in the
/// one-dimensional set `one_dim`.
///
/// Agents carry `(t, m, out)`: a token count saturating at the threshold,
/// the token count modulo the period, and a verdict. Two token holders
/// merge into one; zero-token agents copy the verdict of token holders.
pub fn build_size_recognizer(one_dim: &SemilinearSet) -> Result<Protocol, SynthError> {
    if one_dim.dims().len() != 1 {
        return Err(SynthError::Arity { expected: 1, got: one_dim.dims().len() });
    }
    Ok(recognizer_from_form(&one_dim.sizes())?)
}

pub(crate) fn recognizer_from_form(form: &PeriodicSet) -> Result<Protocol, ProtocolError> {
    let t_max = form.threshold.max(1);
    let l = form.modulus.max(1);
    let decide = |t: u32, m: u32| {
        if t < t_max {
            form.exceptions.contains(&t)
        } else {
            form.residues.contains(&m)
        }
    };
    type S = (u32, u32, bool);
    let start: S = (1, 1 % l, decide(1, 1 % l));
    let mut states: Vec<S> = vec![start];
    let mut index: HashMap<S, usize> = HashMap::from([(start, 0)]);
    let mut pending: Vec<(S, S, S, S)> = Vec::new();
    let step = |a: S, b: S| -> Option<(S, S)> {
        if a.0 >= 1 && b.0 >= 1 {
            let t = (a.0 + b.0).min(t_max);
            let m = (a.1 + b.1) % l;
            let d = decide(t, m);
            Some(((t, m, d), (0, 0, d)))
        } else if a.0 == 0 && b.0 >= 1 && a.2 != b.2 {
            Some(((0, 0, b.2), b))
        } else if b.0 == 0 && a.0 >= 1 && a.2 != b.2 {
            Some((a, (0, 0, a.2)))
        } else {
            None
        }
    };
    let mut queue = VecDeque::from([0usize]);
    while let Some(k) = queue.pop_front() {
        for j in 0..=k {
            for (a, b) in [(states[k], states[j]), (states[j], states[k])] {
                if let Some((x, y)) = step(a, b) {
                    for s in [x, y] {
                        if !index.contains_key(&s) {
                            index.insert(s, states.len());
                            states.push(s);
                            queue.push_back(states.len() - 1);
                        }
                    }
                    pending.push((a, b, x, y));
                }
            }
        }
    }
    let id = |s: &S| StateId(index[s]);
    let names = states.iter().map(|&(t, m, o)| format!("t{t}m{m}{}", if o { "T" } else { "F" })).collect();
    let output_map = states.iter().map(|s| usize::from(s.2)).collect();
    let ts = pending.iter().map(|(a, b, x, y)| Transition::new(id(a), id(b), id(x), id(y))).collect();
    Protocol::new("rec", names, ts, vec![StateId(0)], vec!["false".into(), "true".into()], output_map)
}

/// General protocol ensuring the size-flexible semilinear set `s` over
/// output values.
pub fn synthesize_pp_ensurer(s: &SemilinearSet) -> Result<Synthesis, SynthError> {
    s.check_size_flexible()?;
    let dims = s.dims().to_vec();
    let mut cones = Vec::new();
    for c in s.cones() {
        for e in equalize_periods(c)? {
            // compatible only with size 0, where no agent ever asks
            if e.base_size() == 0 && e.periods().is_empty() {
                continue;
            }
            cones.push(e);
        }
    }
    let mut header = vec![format!("pp ensurer over outputs {}", dims.join(","))];
    let mut ensurers = Vec::new();
    let mut recognizers = Vec::new();
    for (j, c) in cones.iter().enumerate() {
        let periods: Vec<String> = c.periods().iter().map(|p| multiset::render(p, &dims)).collect();
        header.push(format!("cone {}: base {} periods {{{}}}", j + 1, multiset::render(c.base(), &dims), periods.join(" ")));
        ensurers.push(build_cone_ensurer(c, &dims)?.with_name(format!("con{}", j + 1)));
        let proj = SemilinearSet::new(vec!["size".into()], vec![size_projection(c)])?;
        recognizers.push(build_size_recognizer(&proj)?.with_name(format!("rec{}", j + 1)));
    }
    let n = cones.len();
    let mut components = ensurers;
    components.extend(recognizers);
    let mux = OutputMux::new(dims, 2 * n, move |outs: &[usize]| {
        (0..n).find(|&j| outs[n + j] == 1).map_or(0, |j| outs[j])
    });
    let protocol = lockstep_product(&components, &mux)?.with_name("pp-ensurer");
    header.push(format!("{} states, {} transitions", protocol.num_states(), protocol.transitions().len()));
    Ok(Synthesis { protocol, header })
}
