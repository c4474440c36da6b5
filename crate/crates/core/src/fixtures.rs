//! Reference protocols, executions and conditions used across tests, the
//! acceptance suite and the CLI golden files.

use crate::protocol::{protocol_from_names, Configuration, DeanonymisedExecution, Protocol, Step};
use crate::sets::{Cube, CountingSet, LinearSet, SemilinearSet};

const Q: [&str; 4] = ["q0", "q1", "q2", "q3"];

fn bool_map() -> [(&'static str, &'static str); 4] {
    [("q0", "false"), ("q1", "false"), ("q2", "false"), ("q3", "true")]
}

/// Four-state general protocol computing `C(q1) ≥ 3`.
pub fn p1() -> Protocol {
    protocol_from_names(
        "p1",
        &Q,
        &[
            ("q1", "q1", "q0", "q2"),
            ("q2", "q1", "q0", "q3"),
            ("q2", "q2", "q1", "q3"),
            ("q0", "q3", "q3", "q3"),
            ("q1", "q3", "q3", "q3"),
            ("q2", "q3", "q3", "q3"),
        ],
        &["q1"],
        &["false", "true"],
        &bool_map(),
    )
    .expect("valid fixture")
}

/// Four-state immediate observation chain computing `C(q1) ≥ 3`.
pub fn p2() -> Protocol {
    protocol_from_names(
        "p2",
        &Q,
        &[
            ("q1", "q1", "q2", "q1"),
            ("q2", "q2", "q3", "q2"),
            ("q0", "q3", "q3", "q3"),
            ("q1", "q3", "q3", "q3"),
            ("q2", "q3", "q3", "q3"),
        ],
        &["q1"],
        &["false", "true"],
        &bool_map(),
    )
    .expect("valid fixture")
}

/// `p2` with outputs `small` (q0..q2) and `large` (q3).
pub fn p2_large_small() -> Protocol {
    let p = p2();
    p.with_outputs(vec!["small".into(), "large".into()], vec![0, 0, 0, 1])
        .expect("valid fixture")
        .with_name("p2ls")
}

/// Flip protocol: `a --o--> b`, `b --o--> a`; outputs a↦x, b↦y, o↦z.
pub fn flip() -> Protocol {
    protocol_from_names(
        "flip",
        &["o", "a", "b"],
        &[("a", "o", "b", "o"), ("b", "o", "a", "o")],
        &["o", "a"],
        &["x", "y", "z"],
        &[("a", "x"), ("b", "y"), ("o", "z")],
    )
    .expect("valid fixture")
}

fn c(v: &[u32]) -> Configuration {
    Configuration::new(v.to_vec())
}

/// The general protocol's example run from `⟦q1,q1,q1⟧`.
pub fn p1_example_execution() -> (DeanonymisedExecution, Vec<Configuration>) {
    let steps = vec![
        Step { transition: 0, actor: 0, partner: 1 },
        Step { transition: 1, actor: 1, partner: 2 },
        Step { transition: 3, actor: 0, partner: 2 },
        Step { transition: 3, actor: 1, partner: 2 },
    ];
    let configs = vec![c(&[0, 3, 0, 0]), c(&[1, 1, 1, 0]), c(&[2, 0, 0, 1]), c(&[1, 0, 0, 2]), c(&[0, 0, 0, 3])];
    (DeanonymisedExecution::from_configuration(&configs[0], steps), configs)
}

/// The immediate observation protocol's example run from `⟦q1,q1,q1⟧`.
pub fn p2_example_execution() -> (DeanonymisedExecution, Vec<Configuration>) {
    let steps = vec![
        Step { transition: 0, actor: 0, partner: 1 },
        Step { transition: 0, actor: 1, partner: 2 },
        Step { transition: 1, actor: 0, partner: 1 },
        Step { transition: 3, actor: 2, partner: 0 },
        Step { transition: 4, actor: 1, partner: 0 },
    ];
    let configs = vec![
        c(&[0, 3, 0, 0]),
        c(&[0, 2, 1, 0]),
        c(&[0, 1, 2, 0]),
        c(&[0, 1, 1, 1]),
        c(&[0, 0, 1, 2]),
        c(&[0, 0, 0, 3]),
    ];
    (DeanonymisedExecution::from_configuration(&configs[0], steps), configs)
}

fn dims(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `(D(large)=0 ∧ D(small)≤2) ∨ (D(large)≥3 ∧ D(small)=0)` over `small, large`.
pub fn psi_ex() -> CountingSet {
    CountingSet::new(
        dims(&["small", "large"]),
        vec![Cube::new(vec![0, 0], vec![Some(2), Some(0)]), Cube::new(vec![0, 3], vec![Some(0), None])],
    )
    .expect("valid fixture")
}

/// `psi_ex` written as a semilinear set: three points plus one ray.
pub fn psi_ex_semilinear() -> SemilinearSet {
    SemilinearSet::new(
        dims(&["small", "large"]),
        vec![
            LinearSet::new(vec![0, 0], vec![]),
            LinearSet::new(vec![1, 0], vec![]),
            LinearSet::new(vec![2, 0], vec![]),
            LinearSet::new(vec![0, 3], vec![vec![0, 1]]),
        ],
    )
    .expect("valid fixture")
}
