use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use series_rearrange::{
    decompose_blocks, decomposition_for_trace, greedy_batch, greedy_rearrange, is_type_r, make_escalating_blocks,
    make_square_blocks, verify_sandwich, Class, Exact, Execution, GreedyOptions, PermutationPrefix, RearrangementTrace,
    Scalar, SeriesSpec,
};

fn q(p: i64, d: i64) -> Exact {
    BigRational::new(p.into(), d.into())
}

/// Maximal runs of consecutive integers, by sorting.
fn rescan(images: &[usize]) -> usize {
    let mut v = images.to_vec();
    v.sort_unstable();
    v.windows(2).filter(|w| w[1] != w[0] + 1).count() + usize::from(!v.is_empty())
}

fn builtins() -> Vec<SeriesSpec> {
    vec![
        make_square_blocks(),
        make_escalating_blocks(None),
        make_square_blocks().with_leading_zero(true),
        make_escalating_blocks(None).with_leading_zero(true),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn greedy_invariants_hold_for_any_target(p in -4000i64..4000, d in 1i64..700, which in 0usize..4) {
        let spec = &builtins()[which];
        let r = q(p, d);
        let trace = greedy_rearrange(spec, &r, 600, GreedyOptions::default()).unwrap();
        prop_assert_eq!(trace.check_rule_conformance(), Ok(()));
        prop_assert!(is_type_r(trace.prefix(), spec).unwrap().is_type_r());
        prop_assert_eq!(trace.check_switch_overshoot(), Ok(()));
        let mut seen = std::collections::HashSet::new();
        prop_assert!(trace.steps().iter().all(|s| seen.insert(s.index)));
        // each partial sum is the previous plus the chosen term, with the
        // term taken straight from the series
        let mut sum = <Exact as Scalar>::zero();
        for s in trace.steps() {
            prop_assert_eq!(&s.term, &spec.eval_term::<Exact>(s.index).unwrap());
            sum = &sum + &s.term;
            prop_assert_eq!(&s.partial_sum, &sum);
        }
        let decomp = decomposition_for_trace(spec, &trace).unwrap();
        let report = verify_sandwich(&trace, &decomp, trace.max_block_number()).unwrap();
        prop_assert!(report.all_verifiable_pass(), "{:?}", report.failures().next());
    }

    #[test]
    fn final_block_count_ignores_push_order(set in prop::collection::hash_set(0usize..400, 1..120), seed in any::<u64>()) {
        let mut items: Vec<usize> = set.into_iter().collect();
        items.sort_unstable();
        let sorted = PermutationPrefix::from_images(items.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..items.len()).rev() {
            items.swap(i, rng.gen_range(0..=i));
        }
        let shuffled = PermutationPrefix::from_images(items.clone()).unwrap();
        prop_assert_eq!(sorted.block_count(), shuffled.block_count());
        prop_assert_eq!(shuffled.block_count(), rescan(&items));
    }
}

#[test]
fn online_count_matches_rescan_on_long_random_prefixes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let mut pool: Vec<usize> = (0..20_000).collect();
        let mut prefix = PermutationPrefix::new();
        let mut chosen = Vec::new();
        let mut sorted = std::collections::BTreeSet::new();
        let mut runs = 0usize;
        for _ in 0..10_000 {
            let idx = pool.swap_remove(rng.gen_range(0..pool.len()));
            let delta = prefix.block_count_delta(idx).unwrap();
            prefix.push_index(idx).unwrap();
            chosen.push(idx);
            // independent incremental recount from neighbours
            let left = idx > 0 && sorted.contains(&(idx - 1));
            let right = sorted.contains(&(idx + 1));
            sorted.insert(idx);
            runs = runs + 1 - usize::from(left) - usize::from(right);
            assert_eq!(prefix.block_count(), runs);
            assert_eq!(i64::from(delta), 1 - i64::from(left) - i64::from(right));
        }
        assert_eq!(prefix.block_count(), rescan(&chosen));
        assert_eq!(prefix.max_block_number(), *prefix.block_number_sequence().iter().max().unwrap());
    }
}

#[test]
fn batch_matches_individual_runs_under_both_strategies() {
    let spec = make_square_blocks();
    let targets: Vec<Exact> = (-6..6).map(|p| q(p, 4)).collect();
    let seq = greedy_batch(&spec, &targets, 500, GreedyOptions::default(), Execution::Sequential).unwrap();
    let par = greedy_batch(&spec, &targets, 500, GreedyOptions::default(), Execution::Parallel).unwrap();
    for ((a, b), r) in seq.iter().zip(&par).zip(&targets) {
        let single = greedy_rearrange(&spec, r, 500, GreedyOptions::default()).unwrap();
        assert_eq!(a.steps(), single.steps());
        assert_eq!(b.steps(), single.steps());
    }
}

#[test]
fn positive_pools_diverge_within_two_hundred_blocks() {
    for spec in [make_square_blocks(), make_escalating_blocks(None)] {
        let d = decompose_blocks::<Exact>(&spec, 50_000).unwrap();
        let mut total = <Exact as Scalar>::zero();
        let mut reached = None;
        for (i, b) in d.complete_blocks(Class::Positive).take(200).enumerate() {
            total = &total + &b.sum;
            if total >= q(5, 1) {
                reached = Some(i + 1);
                break;
            }
        }
        assert!(reached.is_some(), "{spec}: positive blocks sum to {total} only");
    }
}

#[test]
fn float_trace_departs_from_exact_only_at_a_tie() {
    let spec = make_square_blocks();
    let r = q(1, 3);
    let exact = greedy_rearrange(&spec, &r, 3000, GreedyOptions::default()).unwrap();
    let float = greedy_rearrange(&spec, &(1.0 / 3.0), 3000, GreedyOptions::default()).unwrap();
    let split = exact.steps().iter().zip(float.steps()).position(|(e, f)| e.index != f.index);
    let agree = split.unwrap_or(exact.len());
    for (e, f) in exact.steps()[..agree].iter().zip(float.steps()) {
        assert!((e.partial_sum.to_f64() - f.partial_sum).abs() < 1e-9);
    }
    if let Some(n) = split {
        // the choice at step n depends on the sign of S_{n-1} - r, which
        // must be below float resolution for the two runs to disagree
        let gap = (exact.sum_before(n) - &r).to_f64().abs();
        assert!(gap < 1e-12, "diverged at step {n} with gap {gap}");
    }
}

#[test]
fn rebuilt_trace_verifies_like_the_original() {
    let spec = make_escalating_blocks(None);
    let trace = greedy_rearrange(&spec, &q(-1, 2), 1500, GreedyOptions::default()).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, None).unwrap();
    let (rows, _) = series_rearrange::read_trace_csv::<Exact, _>(buf.as_slice()).unwrap();
    let rebuilt = RearrangementTrace::from_choices(&spec, q(-1, 2), &rows).unwrap();
    let d = decomposition_for_trace(&spec, &trace).unwrap();
    let a = verify_sandwich(&trace, &d, trace.max_block_number()).unwrap();
    let b = verify_sandwich(&rebuilt, &d, rebuilt.max_block_number()).unwrap();
    assert_eq!(a, b);
}
