//! Counting-set images for immediate observation protocols, and the
//! counting-set criterion for "ensures".

use thiserror::Error;

use crate::protocol::{Protocol, Transition};
use crate::sets::{lift_output_condition, CountingSet, Cube, SetError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymbolicError {
    #[error("protocol `{0}` is not an immediate observation protocol")]
    NotImmediateObservation(String),
    #[error("counting set dimensions do not match the protocol states")]
    StateDims,
    #[error(transparent)]
    Set(#[from] SetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Pre,
    Post,
}

fn check(p: &Protocol, s: &CountingSet) -> Result<(), SymbolicError> {
    if !p.is_io() {
        return Err(SymbolicError::NotImmediateObservation(p.name().to_string()));
    }
    if s.dims() != p.states() {
        return Err(SymbolicError::StateDims);
    }
    Ok(())
}

/// Cube of configurations enabling `t`: one agent in the actor state and a
/// second one in the observed state.
fn occupancy(n: usize, t: &Transition) -> Cube {
    let mut lower = vec![0; n];
    lower[t.actor.0] += 1;
    lower[t.partner.0] += 1;
    Cube::new(lower, vec![None; n])
}

/// Moves one agent from coordinate `from` to `to`; the cube must require
/// at least one agent in `from`.
fn shift(k: &Cube, from: usize, to: usize) -> Option<Cube> {
    let mut lower = k.lower().to_vec();
    let mut upper = k.upper().to_vec();
    debug_assert!(lower[from] >= 1);
    lower[from] -= 1;
    upper[from] = upper[from].map(|u| u - 1);
    lower[to] = lower[to].checked_add(1)?;
    upper[to] = match upper[to] {
        Some(u) => Some(u.checked_add(1)?),
        None => None,
    };
    Cube::try_new(lower, upper).ok()
}

fn image_of_cube(p: &Protocol, k: &Cube, dir: Direction, accel: bool, out: &mut Vec<Cube>) {
    let n = p.num_states();
    for t in p.transitions() {
        let (q1, q1n) = (t.actor.0, t.actor_next.0);
        let occ = occupancy(n, t);
        let img = match dir {
            Direction::Post => k.intersect(&occ).and_then(|c| if q1 == q1n { Some(c) } else { shift(&c, q1, q1n) }),
            Direction::Pre => {
                let mut need = vec![0; n];
                need[q1n] = 1;
                let landed = k.intersect(&Cube::new(need, vec![None; n]));
                landed
                    .and_then(|c| if q1 == q1n { Some(c) } else { shift(&c, q1n, q1) })
                    .and_then(|c| c.intersect(&occ))
            }
        };
        out.extend(img.map(|img| if accel { accelerate(k, img) } else { img }));
    }
}

/// If `img` is `k` translated by one in a single coordinate, the same
/// transition applies again to every translate, so the union of all of
/// them (`k` with that coordinate unbounded above) is part of the star.
fn accelerate(k: &Cube, img: Cube) -> Cube {
    let mut moved = None;
    for d in 0..k.dims() {
        if k.lower()[d] == img.lower()[d] && k.upper()[d] == img.upper()[d] {
            continue;
        }
        let step = img.lower()[d] == k.lower()[d] + 1 && img.upper()[d] == k.upper()[d].map(|u| u + 1);
        if !step || moved.is_some() {
            return img;
        }
        moved = Some(d);
    }
    match moved {
        Some(d) if k.upper()[d].is_some() => {
            let mut upper = k.upper().to_vec();
            upper[d] = None;
            Cube::new(k.lower().to_vec(), upper)
        }
        _ => img,
    }
}

/// One-step pre- or post-image of `s` (a counting set over the states).
pub fn step_image(p: &Protocol, s: &CountingSet, dir: Direction) -> Result<CountingSet, SymbolicError> {
    check(p, s)?;
    let mut cubes = Vec::new();
    for k in s.cubes() {
        image_of_cube(p, k, dir, false, &mut cubes);
    }
    Ok(CountingSet::new(s.dims().to_vec(), cubes)?.compact())
}

/// Options for [`star_image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StarOptions {
    /// Iteration cap; `None` picks `10·(1 + largest finite bound)·|Q|`.
    pub budget: Option<usize>,
    /// Widen cube bounds beyond the saturation threshold (see
    /// [`saturation_threshold`]) and jump over repeated translations by a
    /// single transition. Both are exact.
    pub accelerate: bool,
}

impl Default for StarOptions {
    fn default() -> Self {
        Self { budget: None, accelerate: true }
    }
}

/// Result of [`star_image`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarResult {
    pub set: CountingSet,
    pub converged: bool,
    pub iterations: usize,
}

/// Count above which adding or removing an agent of a state never changes
/// membership in `pre*(s)` or `post*(s)`.
///
/// With `b` the largest finite bound of `s` and `B = max(b, |Q|)`: a state
/// holding at least `|Q|(B+1)+1` agents sends more than `B+1` of them to a
/// common final state, which therefore sits above every finite bound. One
/// more agent can copy one of them (observations are never consumed), and
/// conversely one of them can be pruned since more than `|Q|` agents share
/// that trajectory class.
pub fn saturation_threshold(p: &Protocol, s: &CountingSet) -> u32 {
    let q = p.num_states() as u32;
    let b = s.max_finite_bound().max(q);
    q * (b + 1) + 1
}

fn widen_cube(k: &Cube, theta: u32) -> Cube {
    let lower = k.lower().iter().map(|&l| l.min(theta)).collect();
    let upper = k.upper().iter().map(|&u| u.filter(|&u| u < theta)).collect();
    Cube::new(lower, upper)
}

/// Parts of `k` outside every cube of `cover`.
fn subtract_all(k: &Cube, cover: &[Cube]) -> Vec<Cube> {
    if cover.iter().any(|c| k.is_subset_of(c)) {
        return Vec::new();
    }
    let mut remaining = vec![k.clone()];
    for c in cover {
        if remaining.is_empty() {
            break;
        }
        if remaining.iter().all(|r| r.intersect(c).is_none()) {
            continue;
        }
        remaining = remaining.iter().flat_map(|r| r.subtract(c)).collect();
    }
    remaining
}

/// Reflexive-transitive image by semi-naive Kleene iteration: only the
/// region added in the previous round is imaged again, and the iteration
/// stops once an image adds nothing new.
pub fn star_image(
    p: &Protocol,
    s: &CountingSet,
    dir: Direction,
    opts: StarOptions,
) -> Result<StarResult, SymbolicError> {
    check(p, s)?;
    let budget = opts
        .budget
        .unwrap_or(10 * (1 + s.max_finite_bound() as usize) * p.num_states());
    let theta = saturation_threshold(p, s);
    let dims = s.dims().to_vec();
    let prepare = |k: &Cube| if opts.accelerate { widen_cube(k, theta) } else { k.clone() };
    let mut current = CountingSet::new(dims.clone(), s.cubes().iter().map(prepare).collect())?.compact();
    let mut frontier: Vec<Cube> = current.cubes().to_vec();
    for iteration in 1..=budget {
        let mut image = Vec::new();
        for k in &frontier {
            image_of_cube(p, k, dir, opts.accelerate, &mut image);
        }
        let image = CountingSet::new(dims.clone(), image.iter().map(prepare).collect())?.compact();
        // whole cubes rather than the uncovered pieces keep the union small
        let fresh: Vec<Cube> =
            image.cubes().iter().filter(|k| !subtract_all(k, current.cubes()).is_empty()).cloned().collect();
        if fresh.is_empty() {
            return Ok(StarResult { set: current, converged: true, iterations: iteration });
        }
        let fresh = CountingSet::new(dims.clone(), fresh)?.compact();
        current = current.union(&fresh)?.compact();
        frontier = fresh.cubes().to_vec();
    }
    Ok(StarResult { set: current, converged: false, iterations: budget })
}

/// Outcome of [`verify_ensures_symbolic`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FormulaVerdict {
    /// No input configuration can reach a configuration that has lost the
    /// ability to reach the lifted condition.
    Ensures,
    /// A least-size input configuration that can.
    NotEnsures(Vec<u32>),
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicReport {
    pub verdict: FormulaVerdict,
    pub inner_converged: bool,
    pub outer_converged: bool,
    pub iterations: usize,
    /// `I ∩ pre*(complement(pre*(ψ̂)))`.
    pub bad_inputs: CountingSet,
}

/// Evaluates emptiness of `I ∩ pre*(complement(pre*(ψ̂)))`, where `ψ̂` is
/// `s` lifted to configurations of `p` and `I` the input configurations.
pub fn verify_ensures_symbolic(
    p: &Protocol,
    s: &CountingSet,
    opts: StarOptions,
) -> Result<SymbolicReport, SymbolicError> {
    if !p.is_io() {
        return Err(SymbolicError::NotImmediateObservation(p.name().to_string()));
    }
    let lifted = lift_output_condition(s, p)?;
    let inner = star_image(p, &lifted, Direction::Pre, opts)?;
    let outside = inner.set.complement();
    let outer = star_image(p, &outside, Direction::Pre, opts)?;
    let n = p.num_states();
    let upper = (0..n).map(|q| if p.is_input(crate::protocol::StateId(q)) { None } else { Some(0) }).collect();
    let inputs = CountingSet::new(p.states().to_vec(), vec![Cube::new(vec![0; n], upper)])?;
    let bad_inputs = inputs.intersect(&outer.set)?;
    let verdict = if !(inner.converged && outer.converged) {
        FormulaVerdict::Inconclusive
    } else {
        match bad_inputs.min_size_member() {
            None => FormulaVerdict::Ensures,
            Some(w) => FormulaVerdict::NotEnsures(w),
        }
    };
    Ok(SymbolicReport {
        verdict,
        inner_converged: inner.converged,
        outer_converged: outer.converged,
        iterations: inner.iterations + outer.iterations,
        bad_inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explicit::ReachGraph;
    use crate::fixtures;
    use crate::protocol::Configuration;
    use std::collections::BTreeSet;

    fn states(p: &Protocol) -> Vec<String> {
        p.states().to_vec()
    }

    fn slice(s: &CountingSet, n: u32) -> BTreeSet<Configuration> {
        s.members_of_size(n).into_iter().map(Configuration::new).collect()
    }

    #[test]
    fn pre_along_observation_needs_second_observer() {
        let p = fixtures::p2();
        let target = CountingSet::new(states(&p), vec![Cube::new(vec![0, 0, 0, 3], vec![Some(0), Some(0), Some(0), None])])
            .unwrap();
        let pre = step_image(&p, &target, Direction::Pre).unwrap();
        // the q2 --q2--> q3 step needs two agents in q2, which the target forbids;
        // only the q-any --q3--> q3 steps contribute
        for n in 3..=6u32 {
            let explicit: BTreeSet<Configuration> = Configuration::all_of_size(4, n)
                .into_iter()
                .filter(|c| p.successors(c).iter().any(|d| target.contains(d.counts())))
                .collect();
            assert_eq!(slice(&pre, n), explicit, "n={n}");
        }
    }

    #[test]
    fn empty_and_full() {
        let p = fixtures::p2();
        let empty = CountingSet::empty(states(&p));
        for dir in [Direction::Pre, Direction::Post] {
            assert!(step_image(&p, &empty, dir).unwrap().is_empty());
            let star = star_image(&p, &empty, dir, StarOptions::default()).unwrap();
            assert!(star.converged && star.set.is_empty());
        }
        let full = CountingSet::full(states(&p));
        let pre = step_image(&p, &full, Direction::Pre).unwrap();
        for n in 0..=5 {
            for c in Configuration::all_of_size(4, n) {
                assert_eq!(pre.contains(c.counts()), !p.enabled_transitions(&c).is_empty());
            }
        }
        let star = star_image(&p, &full, Direction::Pre, StarOptions::default()).unwrap();
        assert!(star.converged);
        assert_eq!(star.iterations, 1);
    }

    #[test]
    fn post_star_of_example_input() {
        let p = fixtures::p2();
        let start = CountingSet::new(states(&p), vec![Cube::point(&[0, 3, 0, 0])]).unwrap();
        let star = star_image(&p, &start, Direction::Post, StarOptions::default()).unwrap();
        assert!(star.converged);
        let g = ReachGraph::from_roots(&p, &[Configuration::new(vec![0, 3, 0, 0])], 1000).unwrap();
        let explicit: BTreeSet<Configuration> = g.nodes().iter().cloned().collect();
        assert_eq!(slice(&star.set, 3), explicit);
        let (_, run) = fixtures::p2_example_execution();
        assert!(run.iter().all(|c| explicit.contains(c)));
    }

    #[test]
    fn rejects_general_protocols() {
        let p = fixtures::p1();
        let s = CountingSet::full(states(&p));
        assert!(matches!(step_image(&p, &s, Direction::Pre), Err(SymbolicError::NotImmediateObservation(_))));
    }

    #[test]
    fn example_condition_formula_holds() {
        let report =
            verify_ensures_symbolic(&fixtures::p2_large_small(), &fixtures::psi_ex(), StarOptions::default()).unwrap();
        assert_eq!(report.verdict, FormulaVerdict::Ensures);
    }

    #[test]
    fn impossible_condition_yields_empty_input() {
        let p = fixtures::p2_large_small();
        let s = CountingSet::empty(vec!["small".into(), "large".into()]);
        let report = verify_ensures_symbolic(&p, &s, StarOptions::default()).unwrap();
        assert_eq!(report.verdict, FormulaVerdict::NotEnsures(vec![0, 0, 0, 0]));
    }
}
