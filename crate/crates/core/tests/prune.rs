mod common;

use ensurelab::explicit::{prune_execution, ExplicitError};
use ensurelab::{fixtures, StateId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pruning_keeps_everything_but_one_agent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some((p, e, q, q2)) = common::prunable_execution(&mut rng) {
            let pruned = prune_execution(&p, &e, q, q2).map_err(|err| TestCaseError::fail(err.to_string()))?;
            prop_assert_eq!(common::check_pruned(&p, &e, &pruned, q, q2), Ok(()));
        }
    }
}

#[test]
fn pruning_twice_removes_two_agents() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    while done < 20 {
        let Some((p, e, q, q2)) = common::prunable_execution(&mut rng) else { continue };
        let once = prune_execution(&p, &e, q, q2).unwrap();
        match prune_execution(&p, &once, q, q2) {
            Ok(twice) => {
                assert_eq!(twice.agent_count() + 2, e.agent_count());
                assert_eq!(common::check_pruned(&p, &once, &twice, q, q2), Ok(()));
                done += 1;
            }
            Err(ExplicitError::PruneClass { .. }) => {}
            Err(err) => panic!("{err}"),
        }
    }
}

#[test]
fn small_classes_are_refused() {
    let p = fixtures::p2();
    let (e, _) = fixtures::p2_example_execution();
    // three agents go from q1 to q3, which is not more than |Q| = 4
    assert!(matches!(
        prune_execution(&p, &e, StateId(1), StateId(3)),
        Err(ExplicitError::PruneClass { found: 3, needed: 4, .. })
    ));
    assert!(matches!(
        prune_execution(&fixtures::p1(), &e, StateId(1), StateId(3)),
        Err(ExplicitError::NotImmediateObservation(_))
    ));
}
