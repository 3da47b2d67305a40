//! Applying and reverting plans on random pages.

use std::collections::BTreeSet;

use insitu_core::delivery::{apply_sim, compile_plan, revert_sim};
use insitu_core::dom_model::{snapshot_equal, DomSnapshot};
use insitu_core::handbook::SubtypeId;
use insitu_core::testkit::{random_case, random_snapshot};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reachable(s: &DomSnapshot) -> BTreeSet<u32> {
    s.document_order().into_iter().collect()
}

fn subtype() -> impl Strategy<Value = SubtypeId> {
    prop::sample::select(SubtypeId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn revert_restores_the_page(seed in any::<u64>(), size in 8usize..120, subtype in subtype()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snap = random_snapshot(&mut rng, size);
        let generated = random_case(&mut rng, &snap, subtype);
        prop_assume!(generated.is_some());
        let (case, grounded) = generated.unwrap();
        let plan = compile_plan(&case, &grounded, &snap, "p-1");
        prop_assume!(plan.is_ok());
        let plan = plan.unwrap();

        let (applied, record) = apply_sim(&snap, &plan).unwrap();
        let before = reachable(&snap);
        let after = reachable(&applied);
        prop_assert!(before.is_subset(&after), "an original node was detached");
        prop_assert!(!snapshot_equal(&snap, &applied, false));

        let reverted = revert_sim(&applied, &record);
        prop_assert!(!reverted.tampered, "{:?}", reverted.issues);
        prop_assert!(snapshot_equal(&snap, &reverted.snapshot, false));

        let again = revert_sim(&reverted.snapshot, &record);
        prop_assert!(snapshot_equal(&snap, &again.snapshot, false));
    }

    #[test]
    fn stacked_plans_unwind_in_reverse(seed in any::<u64>(), a in subtype(), b in subtype()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snap = random_snapshot(&mut rng, 60);
        let first = random_case(&mut rng, &snap, a).and_then(|(c, g)| compile_plan(&c, &g, &snap, "p-1").ok());
        prop_assume!(first.is_some());
        let (mid, rec1) = apply_sim(&snap, &first.unwrap()).unwrap();
        // Grounding the second case against the modified page keeps node ids
        // valid: original nodes never move out of the id space.
        let second = random_case(&mut rng, &mid, b).and_then(|(c, g)| compile_plan(&c, &g, &mid, "p-2").ok());
        prop_assume!(second.is_some());
        let (top, rec2) = apply_sim(&mid, &second.unwrap()).unwrap();

        let back = revert_sim(&top, &rec2);
        prop_assert!(snapshot_equal(&mid, &back.snapshot, false));
        let back = revert_sim(&back.snapshot, &rec1);
        prop_assert!(snapshot_equal(&snap, &back.snapshot, false));
    }
}

#[test]
fn most_random_cases_compile() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compiled = 0;
    let mut tried = 0;
    for i in 0..180 {
        let snap = random_snapshot(&mut rng, 40 + i % 60);
        let subtype = SubtypeId::ALL[i % SubtypeId::ALL.len()];
        if let Some((case, grounded)) = random_case(&mut rng, &snap, subtype) {
            tried += 1;
            if compile_plan(&case, &grounded, &snap, "p").is_ok() {
                compiled += 1;
            }
        }
    }
    assert!(tried >= 150, "{tried}");
    assert!(compiled * 10 >= tried * 9, "{compiled} of {tried}");
}
