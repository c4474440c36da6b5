//! Condition suites, random generators and explicit image oracles shared by
//! the integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ensurelab::fixtures;
use ensurelab::{Configuration, CountingSet, Cube, DeanonymisedExecution, LinearSet, Protocol, SemilinearSet, StateId, Step, Transition};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn cone(base: &[u32], periods: &[&[u32]]) -> LinearSet {
    LinearSet::new(base.to_vec(), periods.iter().map(|p| p.to_vec()).collect())
}

/// Size-flexible semilinear conditions for general-protocol synthesis.
pub fn pp_suite() -> Vec<(&'static str, SemilinearSet)> {
    let sl = |dims: &[&str], cones: Vec<LinearSet>| SemilinearSet::new(names(dims), cones).expect("valid condition");
    vec![
        ("psi_ex", fixtures::psi_ex_semilinear()),
        // periods of sizes 1 and 2 force equalize_periods to split the cone
        ("a_at_least_b", sl(&["a", "b"], vec![cone(&[0, 0], &[&[1, 0], &[1, 1]])])),
        ("parity", sl(&["even", "odd"], vec![cone(&[0, 0], &[&[2, 0]]), cone(&[0, 1], &[&[2, 0]])])),
        ("balanced", sl(&["a", "b"], vec![cone(&[0, 0], &[&[1, 1]]), cone(&[1, 0], &[&[1, 1]])])),
        (
            "marker_from_two",
            sl(&["x", "z"], vec![cone(&[0, 0], &[]), cone(&[1, 0], &[]), cone(&[1, 1], &[&[0, 1]])]),
        ),
        (
            "leader_and_any",
            sl(&["x", "y", "z"], vec![cone(&[0, 0, 0], &[]), cone(&[0, 0, 1], &[&[1, 0, 0], &[0, 1, 0]])]),
        ),
    ]
}

/// Size-flexible counting conditions for immediate observation synthesis.
pub fn io_suite() -> Vec<(&'static str, CountingSet)> {
    let cs = |dims: &[&str], cubes: Vec<Cube>| CountingSet::new(names(dims), cubes).expect("valid condition");
    let cube = |l: &[u32], u: &[Option<u32>]| Cube::new(l.to_vec(), u.to_vec());
    vec![
        ("psi_ex", fixtures::psi_ex()),
        (
            "some_large",
            cs(&["small", "large"], vec![cube(&[0, 0], &[Some(0), Some(0)]), cube(&[0, 1], &[None, None])]),
        ),
        (
            "pair_then_c",
            cs(
                &["a", "b", "c"],
                vec![
                    cube(&[0, 0, 0], &[Some(0), Some(0), Some(0)]),
                    cube(&[1, 0, 0], &[Some(1), Some(0), Some(0)]),
                    cube(&[1, 1, 0], &[Some(1), Some(1), None]),
                ],
            ),
        ),
        (
            "one_y",
            cs(
                &["x", "y"],
                vec![cube(&[0, 0], &[Some(1), Some(0)]), cube(&[1, 1], &[None, Some(1)])],
            ),
        ),
        ("anything", cs(&["x"], vec![cube(&[0], &[None])])),
        (
            "two_x_one_y",
            cs(
                &["x", "y"],
                vec![cube(&[0, 0], &[Some(2), Some(0)]), cube(&[2, 1], &[None, None])],
            ),
        ),
    ]
}

/// A random immediate observation protocol with `n` states, inputs and
/// outputs `o0..`.
pub fn random_io_protocol(rng: &mut ChaCha8Rng, n: usize) -> Protocol {
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut transitions = Vec::new();
    let count = if n == 1 { 0 } else { rng.gen_range(1..=2 * n) };
    for _ in 0..count {
        let a = StateId(rng.gen_range(0..n));
        let b = StateId(rng.gen_range(0..n));
        let mut c = StateId(rng.gen_range(0..n));
        if c == a {
            c = StateId((a.0 + 1) % n);
        }
        transitions.push(Transition::observation(a, b, c));
    }
    let mut inputs: Vec<StateId> = (0..n).map(StateId).filter(|_| rng.gen_bool(0.5)).collect();
    if inputs.is_empty() {
        inputs.push(StateId(0));
    }
    let outputs = vec!["o0".to_string(), "o1".to_string()];
    let map = (0..n).map(|_| rng.gen_range(0..2)).collect();
    Protocol::new("random", states, transitions, inputs, outputs, map).expect("valid random protocol")
}

/// A random union of one to three cubes over `dims`, bounds at most 3.
pub fn random_counting_set(rng: &mut ChaCha8Rng, dims: &[String]) -> CountingSet {
    let cubes = (0..rng.gen_range(1..=3))
        .map(|_| {
            let lower: Vec<u32> = dims.iter().map(|_| rng.gen_range(0..=2)).collect();
            let upper = lower
                .iter()
                .map(|&l| if rng.gen_bool(0.5) { None } else { Some(l + rng.gen_range(0..=1)) })
                .collect();
            Cube::new(lower, upper)
        })
        .collect();
    CountingSet::new(dims.to_vec(), cubes).expect("valid random set")
}

/// Configurations of size `n` in the set.
pub fn slice(s: &CountingSet, n: u32) -> BTreeSet<Configuration> {
    s.members_of_size(n).into_iter().map(Configuration::new).collect()
}

/// Explicit one-step pre- or post-image of `targets` within size `n`.
pub fn explicit_step(p: &Protocol, targets: &BTreeSet<Configuration>, n: u32, pre: bool) -> BTreeSet<Configuration> {
    if pre {
        Configuration::all_of_size(p.num_states(), n)
            .into_iter()
            .filter(|c| p.successors(c).iter().any(|d| targets.contains(d)))
            .collect()
    } else {
        targets.iter().flat_map(|c| p.successors(c)).collect()
    }
}

/// Explicit reflexive-transitive image by saturation.
pub fn explicit_star(p: &Protocol, targets: &BTreeSet<Configuration>, n: u32, pre: bool) -> BTreeSet<Configuration> {
    let mut acc = targets.clone();
    loop {
        let next = explicit_step(p, &acc, n, pre);
        let before = acc.len();
        acc.extend(next);
        if acc.len() == before {
            return acc;
        }
    }
}

/// A random execution of `p` from a random configuration of size `size`
/// whose agents mostly start in `q`. Steps pick random enabled transitions
/// and random agents.
pub fn random_execution(p: &Protocol, rng: &mut ChaCha8Rng, size: usize, steps: usize) -> DeanonymisedExecution {
    let n = p.num_states();
    let home = StateId(rng.gen_range(0..n));
    let mut agents: Vec<StateId> = (0..size).map(|_| if rng.gen_bool(0.8) { home } else { StateId(rng.gen_range(0..n)) }).collect();
    let start = agents.clone();
    let mut out = Vec::new();
    for _ in 0..steps {
        let mut options = Vec::new();
        for (ti, t) in p.transitions().iter().enumerate() {
            for a in 0..size {
                if agents[a] != t.actor {
                    continue;
                }
                for b in 0..size {
                    if b != a && agents[b] == t.partner {
                        options.push((ti, a, b));
                    }
                }
            }
        }
        let Some(&(ti, a, b)) = options.choose(rng) else { break };
        let t = p.transitions()[ti];
        agents[a] = t.actor_next;
        agents[b] = t.partner_next;
        out.push(Step { transition: ti, actor: a, partner: b });
    }
    DeanonymisedExecution::new(start, out)
}

/// A random execution with some (start, end) class of more than `|Q|`
/// agents, together with that class; `None` when the draw has none.
pub fn prunable_execution(
    rng: &mut ChaCha8Rng,
) -> Option<(Protocol, DeanonymisedExecution, StateId, StateId)> {
    let n = rng.gen_range(2..=4);
    let p = random_io_protocol(rng, n);
    let size = rng.gen_range(2 * n + 2..=4 * n + 4);
    let steps = rng.gen_range(0..=40);
    let e = random_execution(&p, rng, size, steps);
    let mut counts = std::collections::BTreeMap::new();
    for pair in e.endpoints(&p).ok()? {
        *counts.entry(pair).or_insert(0usize) += 1;
    }
    let (&(q, q2), _) = counts.iter().filter(|&(_, &k)| k > n).max_by_key(|&(_, &k)| k)?;
    Some((p, e, q, q2))
}

/// Checks the contract of pruning one agent of class `(q, q2)`.
pub fn check_pruned(
    p: &Protocol,
    e: &DeanonymisedExecution,
    pruned: &DeanonymisedExecution,
    q: StateId,
    q2: StateId,
) -> Result<(), String> {
    let before = ensurelab::protocol::replay(p, e).map_err(|err| err.to_string())?;
    let after = ensurelab::protocol::replay(p, pruned).map_err(|err| format!("pruned run does not replay: {err}"))?;
    let mut start = before[0].clone();
    start.remove(q, 1).ok_or("no agent to remove at the start")?;
    let mut end = before.last().expect("nonempty").clone();
    end.remove(q2, 1).ok_or("no agent to remove at the end")?;
    if after[0] != start || *after.last().expect("nonempty") != end {
        return Err("endpoints differ from the original minus one agent".into());
    }
    let old = ensurelab::explicit::trajectory_counts(p, e).map_err(|err| err.to_string())?;
    let new = ensurelab::explicit::trajectory_counts(p, pruned).map_err(|err| err.to_string())?;
    let pairs: BTreeSet<(StateId, StateId)> = old.keys().chain(new.keys()).copied().collect();
    for pair in pairs {
        let want = old.get(&pair).copied().unwrap_or(0) - usize::from(pair == (q, q2));
        if new.get(&pair).copied().unwrap_or(0) != want {
            return Err(format!("trajectory count of {pair:?} changed"));
        }
    }
    Ok(())
}
