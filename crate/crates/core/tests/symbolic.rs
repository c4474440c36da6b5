mod common;

use std::collections::BTreeSet;

use ensurelab::explicit::check_ensures;
use ensurelab::sets::{lift_output_condition, Condition};
use ensurelab::symbolic::{star_image, step_image, verify_ensures_symbolic, Direction, FormulaVerdict, StarOptions};
use ensurelab::{fixtures, Configuration, CountingSet, Cube};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn images_agree(seed: u64, states: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = common::random_io_protocol(&mut rng, states);
    let s = common::random_counting_set(&mut rng, p.states());
    for (dir, pre) in [(Direction::Pre, true), (Direction::Post, false)] {
        let step = step_image(&p, &s, dir).unwrap();
        let star = star_image(&p, &s, dir, StarOptions::default()).unwrap();
        if !star.converged {
            return Err(format!("seed {seed}: star did not converge"));
        }
        for n in 0..=6 {
            let target = common::slice(&s, n);
            if common::slice(&step, n) != common::explicit_step(&p, &target, n, pre) {
                return Err(format!("seed {seed} {dir:?} n={n}: step image differs"));
            }
            if common::slice(&star.set, n) != common::explicit_star(&p, &target, n, pre) {
                return Err(format!("seed {seed} {dir:?} n={n}: star image differs"));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn symbolic_images_match_explicit_images(seed in any::<u64>(), states in 1usize..=4) {
        prop_assert_eq!(images_agree(seed, states), Ok(()));
    }
}

#[test]
fn acceleration_does_not_change_converged_results() {
    // without acceleration the chain often needs more rounds than the cap
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = common::random_io_protocol(&mut rng, 3);
        let s = common::random_counting_set(&mut rng, p.states());
        let fast = star_image(&p, &s, Direction::Pre, StarOptions::default()).unwrap();
        let slow = star_image(&p, &s, Direction::Pre, StarOptions { budget: Some(8), accelerate: false }).unwrap();
        assert!(fast.converged);
        // the unaccelerated chain is an under-approximation
        for n in 0..=6 {
            assert!(common::slice(&slow.set, n).is_subset(&common::slice(&fast.set, n)));
        }
        if slow.converged {
            assert!(slow.set.same_denotation(&fast.set).unwrap());
        }
    }
}

#[test]
fn complement_of_pre_star_cannot_reach_the_condition() {
    let p = fixtures::p2_large_small();
    let lifted = lift_output_condition(&fixtures::psi_ex(), &p).unwrap();
    let inner = star_image(&p, &lifted, Direction::Pre, StarOptions::default()).unwrap();
    assert!(inner.converged);
    let outside = inner.set.complement();
    for n in 0..=6 {
        let targets = common::slice(&lifted, n);
        let reach_back = common::explicit_star(&p, &targets, n, true);
        for c in common::slice(&outside, n) {
            assert!(!reach_back.contains(&c), "{c:?}");
        }
    }
}

#[test]
fn formula_agrees_with_oracle_on_synthesized_protocols() {
    for (name, s) in common::io_suite() {
        let p = ensurelab::synth_io::synthesize_io_ensurer(&s).unwrap().protocol;
        let report = verify_ensures_symbolic(&p, &s, StarOptions::default()).unwrap();
        assert_eq!(report.verdict, FormulaVerdict::Ensures, "{name}");
        let cond: Condition = s.into();
        assert!((1..=6).all(|n| check_ensures(&p, &cond, n).unwrap().holds), "{name}");
    }
}

#[test]
fn formula_finds_least_bad_input() {
    // p2 with q3 mapped to small never produces three large agents
    let p = fixtures::p2().with_outputs(vec!["small".into(), "large".into()], vec![0, 0, 1, 0]).unwrap();
    let report = verify_ensures_symbolic(&p, &fixtures::psi_ex(), StarOptions::default()).unwrap();
    let FormulaVerdict::NotEnsures(w) = report.verdict else { panic!("{:?}", report.verdict) };
    let w = Configuration::new(w);
    let cond: Condition = fixtures::psi_ex().into();
    assert!(!check_ensures(&p, &cond, w.size()).unwrap().holds);
    for n in 1..w.size() {
        assert!(check_ensures(&p, &cond, n).unwrap().holds, "n={n}");
    }
}

#[test]
fn flip_protocol_divergence() {
    let p = fixtures::flip();
    let no_y = CountingSet::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![Cube::new(vec![0, 0, 0], vec![None, Some(0), None])],
    )
    .unwrap();
    let report = verify_ensures_symbolic(&p, &no_y, StarOptions::default()).unwrap();
    assert_eq!(report.verdict, FormulaVerdict::Ensures);
    let v = check_ensures(&p, &no_y.clone().into(), 2).unwrap();
    assert!(!v.holds);
    assert_eq!(v.witness, Some(Configuration::new(vec![1, 1, 0])));
    let bottom: BTreeSet<Configuration> = [Configuration::new(vec![1, 1, 0]), Configuration::new(vec![1, 0, 1])].into();
    assert!(bottom.contains(&v.violator.unwrap()));

    // with D(x) ≥ 1 both engines reject, already at size 0
    let some_x = CountingSet::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![Cube::new(vec![1, 0, 0], vec![None, None, None])],
    )
    .unwrap();
    let report = verify_ensures_symbolic(&p, &some_x, StarOptions::default()).unwrap();
    assert_eq!(report.verdict, FormulaVerdict::NotEnsures(vec![0, 0, 0]));
    assert!(!check_ensures(&p, &some_x.into(), 2).unwrap().holds);
}
