mod common;

use std::collections::BTreeSet;

use ensurelab::explicit::{check_computes, check_ensures, ReachGraph};
use ensurelab::sets::Condition;
use ensurelab::synth_io::{build_point_protocol, build_ray_protocol, build_size_eq_recognizer, synthesize_io_ensurer};
use ensurelab::synth_pp::{build_cone_ensurer, build_size_recognizer, cone_layout, synthesize_pp_ensurer, SynthError};
use ensurelab::{fixtures, Configuration, CountingSet, Cube, LinearSet, Protocol, SemilinearSet, SetError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn bottoms_from_inputs(p: &Protocol, n: u32) -> Vec<Configuration> {
    let g = ReachGraph::from_roots(p, &p.input_configurations(n), 1_000_000).unwrap();
    g.bottom_nodes().map(|i| g.node(i).clone()).collect()
}

fn one_dim(cones: &[(u32, &[u32])]) -> SemilinearSet {
    let cones = cones.iter().map(|&(b, ps)| LinearSet::new(vec![b], ps.iter().map(|&p| vec![p]).collect())).collect();
    SemilinearSet::new(names(&["n"]), cones).unwrap()
}

#[test]
fn group_structure_holds_on_every_reachable_configuration() {
    let d = names(&["x", "y"]);
    let cones = [
        LinearSet::new(vec![0, 0], vec![vec![1, 1]]),
        LinearSet::new(vec![1, 0], vec![vec![0, 3]]),
        LinearSet::new(vec![1, 1], vec![vec![1, 2]]),
        LinearSet::new(vec![0, 0], vec![vec![2, 2]]),
    ];
    for c in &cones {
        let p = build_cone_ensurer(c, &d).unwrap();
        let lay = cone_layout(c);
        for n in 0..=8 {
            let g = ReachGraph::from_roots(&p, &p.input_configurations(n), 1_000_000).unwrap();
            for node in g.nodes() {
                assert!(lay.group_structure_holds(node), "{c:?} n={n} {node:?}");
            }
        }
    }
}

#[test]
fn base_chain_fills_every_base_state() {
    let c = LinearSet::new(vec![2, 1], vec![vec![0, 2]]);
    let p = build_cone_ensurer(&c, &names(&["x", "y"])).unwrap();
    let lay = cone_layout(&c);
    for n in 3..=8 {
        for b in bottoms_from_inputs(&p, n) {
            assert!((1..=3).all(|j| b.get(lay.base(j)) == 1), "n={n} {b:?}");
        }
    }
}

#[test]
fn cone_ensurers_stabilise_inside_their_cone_at_compatible_sizes() {
    let d = names(&["x", "y"]);
    let cones = [
        LinearSet::new(vec![0, 0], vec![vec![1, 1]]),
        LinearSet::new(vec![1, 0], vec![vec![0, 1]]),
        LinearSet::new(vec![1, 1], vec![vec![1, 2]]),
        LinearSet::new(vec![2, 0], vec![]),
    ];
    for c in &cones {
        let p = build_cone_ensurer(c, &d).unwrap();
        let cond: Condition = SemilinearSet::new(d.clone(), vec![c.clone()]).unwrap().into();
        let bound = cond.bind(&p).unwrap();
        for n in 0..=8u32 {
            let compatible = n as u64 >= c.base_size()
                && c.periods().first().map_or(n as u64 == c.base_size(), |v| {
                    (n as u64 - c.base_size()) % v.iter().map(|&x| x as u64).sum::<u64>() == 0
                });
            if !compatible {
                continue;
            }
            for b in bottoms_from_inputs(&p, n) {
                assert!(bound.holds(&b), "{c:?} n={n} {b:?}");
            }
        }
    }
}

#[test]
fn cone_ensurer_examples() {
    let d = names(&["x", "y"]);
    let pair = LinearSet::new(vec![0, 0], vec![vec![1, 1]]);
    let p = build_cone_ensurer(&pair, &d).unwrap();
    assert_eq!(p.num_states(), 6);
    assert_eq!(p.state_name(p.inputs()[0]), "up1");
    let cond: Condition = SemilinearSet::new(d.clone(), vec![pair]).unwrap().into();
    for n in [2, 4, 6] {
        assert!(check_ensures(&p, &cond, n).unwrap().holds, "n={n}");
    }

    let single = build_cone_ensurer(&LinearSet::new(vec![1, 0], vec![]), &d).unwrap();
    assert_eq!((single.num_states(), single.transitions().len()), (1, 0));

    let c = LinearSet::new(vec![1, 0], vec![vec![0, 1]]);
    let p = build_cone_ensurer(&c, &d).unwrap();
    for b in bottoms_from_inputs(&p, 4) {
        assert_eq!(p.output_multiset(&b), vec![1, 3]);
    }
}

#[test]
fn size_recognizers_compute_membership() {
    let cases: [(SemilinearSet, fn(u32) -> bool); 4] = [
        (one_dim(&[(3, &[1])]), |n| n >= 3),
        (one_dim(&[(0, &[2])]), |n| n % 2 == 0),
        (one_dim(&[(5, &[])]), |n| n == 5),
        (one_dim(&[(1, &[]), (4, &[3])]), |n| n == 1 || (n >= 4 && (n - 4) % 3 == 0)),
    ];
    for (set, pred) in cases {
        let p = build_size_recognizer(&set).unwrap();
        let v = check_computes(&p, |c| pred(c.size()), 8).unwrap();
        assert!(v.holds, "{set:?}: {:?}", v.witness);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn size_recognizer_matches_the_periodic_form(base in 0u32..4, a in 1u32..4, b in 1u32..4, point in 0u32..5) {
        let set = one_dim(&[(base, &[a, b]), (point, &[])]);
        let form = set.sizes();
        let p = build_size_recognizer(&set).unwrap();
        let v = check_computes(&p, |c| form.contains(u64::from(c.size())), 6).unwrap();
        prop_assert!(v.holds, "{:?}", v.witness);
    }
}

#[test]
fn pp_synthesis_examples() {
    let d = names(&["x", "y"]);
    let all_x = SemilinearSet::new(d.clone(), vec![LinearSet::new(vec![0, 0], vec![vec![1, 0]])]).unwrap();
    let p = synthesize_pp_ensurer(&all_x).unwrap().protocol;
    let cond: Condition = all_x.into();
    for n in 1..=6 {
        assert!(check_ensures(&p, &cond, n).unwrap().holds);
    }

    let parity = SemilinearSet::new(
        d,
        vec![LinearSet::new(vec![0, 0], vec![vec![2, 0]]), LinearSet::new(vec![0, 1], vec![vec![2, 0]])],
    )
    .unwrap();
    let p = synthesize_pp_ensurer(&parity).unwrap().protocol;
    let cond: Condition = parity.into();
    for n in 1..=6 {
        assert!(check_ensures(&p, &cond, n).unwrap().holds, "n={n}");
    }

    let psi = fixtures::psi_ex_semilinear();
    let p = synthesize_pp_ensurer(&psi).unwrap().protocol;
    let cond: Condition = psi.into();
    for n in 1..=7 {
        assert!(check_ensures(&p, &cond, n).unwrap().holds, "n={n}");
    }
}

#[test]
fn pp_suite_is_ensured() {
    for (name, s) in common::pp_suite() {
        let p = synthesize_pp_ensurer(&s).unwrap().protocol;
        let cond: Condition = s.into();
        for n in 1..=5 {
            let v = check_ensures(&p, &cond, n).unwrap();
            assert!(v.holds, "{name} n={n}: {v:?}");
        }
    }
}

#[test]
fn pp_synthesis_rejects_inflexible_conditions() {
    let s = SemilinearSet::new(names(&["x"]), vec![LinearSet::new(vec![2], vec![vec![1]])]).unwrap();
    assert!(matches!(
        synthesize_pp_ensurer(&s).unwrap_err(),
        SynthError::Set(SetError::NotSizeFlexible { size: 0 })
    ));
}

#[test]
fn point_and_ray_examples() {
    let d = names(&["small", "large"]);
    let p = build_point_protocol(&[2, 0], &d).unwrap();
    assert_eq!(p.num_states(), 2);
    assert_eq!(bottoms_from_inputs(&p, 2), vec![Configuration::new(vec![1, 1])]);

    let b = names(&["false", "true"]);
    let chain = build_point_protocol(&[2, 1], &b).unwrap();
    let p2 = fixtures::p2();
    let shape = |p: &Protocol| -> Vec<(usize, usize, usize)> {
        p.transitions().iter().map(|t| (t.actor.0, t.partner.0, t.actor_next.0)).collect()
    };
    // same climb pattern as the fixture chain q1 → q2 → q3, shifted by one
    let fixture: Vec<(usize, usize, usize)> = shape(&p2).into_iter().filter(|&(a, o, _)| a == o).map(|(a, o, n)| (a - 1, o - 1, n - 1)).collect();
    assert_eq!(shape(&chain), fixture);

    let ray = build_ray_protocol(&[0, 3], 1, &d).unwrap();
    assert_eq!(ray.num_states(), 4);
    assert_eq!(bottoms_from_inputs(&ray, 5), vec![Configuration::new(vec![1, 1, 1, 2])]);
    assert_eq!(bottoms_from_inputs(&ray, 3), vec![Configuration::new(vec![1, 1, 1, 0])]);

    let d3 = names(&["x", "y", "z"]);
    let ray = build_ray_protocol(&[0, 1, 0], 2, &d3).unwrap();
    for c in bottoms_from_inputs(&ray, 3) {
        assert_eq!(ray.output_multiset(&c), vec![0, 1, 2]);
    }
}

#[test]
fn size_eq_recognizers() {
    let p = build_size_eq_recognizer(0).unwrap();
    assert!(check_computes(&p, |_| false, 6).unwrap().holds);
    for j in 1..=4u32 {
        let p = build_size_eq_recognizer(j).unwrap();
        let v = check_computes(&p, |c| c.size() == j, 6).unwrap();
        assert!(v.holds, "j={j}: {:?}", v.witness);
    }
    let p = build_size_eq_recognizer(3).unwrap();
    for b in bottoms_from_inputs(&p, 3) {
        let mut levels = BTreeSet::new();
        for q in b.support() {
            let name = p.state_name(q);
            assert!(name.ends_with("s3"), "{name}");
            levels.insert(name[1..name.find('s').unwrap()].parse::<u32>().unwrap());
        }
        assert_eq!(levels, BTreeSet::from([1, 2, 3]));
    }
}

#[test]
fn io_synthesis_examples() {
    let d = names(&["x", "y"]);
    let full = CountingSet::full(d.clone());
    let s = synthesize_io_ensurer(&full).unwrap();
    assert_eq!(s.protocol.num_states(), 1);

    let psi = fixtures::psi_ex();
    let s = synthesize_io_ensurer(&psi).unwrap();
    assert!(s.header.iter().any(|h| h == "D = ⟦large,large,large⟧"));
    let cond: Condition = psi.into();
    for n in 1..=6 {
        assert!(check_ensures(&s.protocol, &cond, n).unwrap().holds);
    }

    let both = CountingSet::new(names(&["a", "b"]), vec![Cube::new(vec![1, 1], vec![None, None])]).unwrap();
    assert!(matches!(
        synthesize_io_ensurer(&both).unwrap_err(),
        SynthError::Set(SetError::NotSizeFlexible { size: 0 })
    ));
}

#[test]
fn io_suite_is_ensured_and_io() {
    for (name, s) in common::io_suite() {
        let p = synthesize_io_ensurer(&s).unwrap().protocol;
        assert!(p.is_io(), "{name}");
        let cond: Condition = s.into();
        for n in 1..=6 {
            let v = check_ensures(&p, &cond, n).unwrap();
            assert!(v.holds, "{name} n={n}: {v:?}");
        }
    }
}

#[test]
fn chain_levels_never_decrease() {
    let d = names(&["x", "y"]);
    let chains = [build_point_protocol(&[2, 2], &d).unwrap(), build_ray_protocol(&[1, 2], 0, &d).unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in &chains {
        for _ in 0..50 {
            let e = common::random_execution(p, &mut rng, 6, 30);
            for traj in e.trajectories(p).unwrap() {
                assert!(traj.windows(2).all(|w| w[0].0 <= w[1].0));
            }
        }
    }
}
