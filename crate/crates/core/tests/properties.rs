use std::collections::BTreeSet;

use cargo_core::fusion::{fuse_beta_fpr, fuse_frequency, AdaptiveThreshold};
use cargo_core::oneshot::nucleus_filter;
use cargo_core::{Criterion, EdgeTally, EventId, LabelId, LocalEdge, LocalGraph};
use proptest::prelude::*;

const LABELS: usize = 4;

/// Local graphs with dyadic statistics, so float sums are exact in any order.
fn graphs() -> impl Strategy<Value = Vec<LocalGraph>> {
    let edge = (0..LABELS as u32, 1..12u32, 0..64u32, 0..8u32).prop_map(|(l, e, cmi, ctx)| LocalEdge {
        label: LabelId(l),
        event: EventId(e),
        position: e as usize,
        cmi: cmi as f64 / 32.0,
        cs_mean: 0.0,
        cs_std: 0.0,
        ctx_mean: ctx as f64 / 8.0,
        ctx_negent: -(ctx as f64) / 16.0,
    });
    let graph = (prop::collection::btree_set(0..LABELS as u32, 0..=LABELS), prop::collection::vec(edge, 0..10))
        .prop_map(|(labels, edges)| {
            let mut seen = BTreeSet::new();
            let mut edges: Vec<LocalEdge> = edges.into_iter().filter(|e| seen.insert((e.label, e.event))).collect();
            edges.sort_by_key(|e| (e.label, e.position));
            LocalGraph {
                sequence_id: String::new(),
                labels: labels.into_iter().map(LabelId).collect(),
                edges,
            }
        });
    prop::collection::vec(graph, 0..40)
}

fn tally_of(gs: &[LocalGraph]) -> EdgeTally {
    let mut t = EdgeTally::empty(LABELS);
    for g in gs {
        t.add(g).unwrap();
    }
    t
}

proptest! {
    #[test]
    fn tally_merge_is_a_commutative_monoid(a in graphs(), b in graphs(), c in graphs()) {
        let (ta, tb, tc) = (tally_of(&a), tally_of(&b), tally_of(&c));
        let empty = EdgeTally::empty(LABELS);
        prop_assert_eq!(ta.clone().merge(&empty), ta.clone());
        prop_assert_eq!(empty.merge(&ta), ta.clone());
        prop_assert_eq!(ta.clone().merge(&tb), tb.clone().merge(&ta));
        prop_assert_eq!(ta.clone().merge(&tb).merge(&tc), ta.clone().merge(&tb.clone().merge(&tc)));
        let all: Vec<LocalGraph> = a.iter().chain(&b).chain(&c).cloned().collect();
        prop_assert_eq!(EdgeTally::from_graphs(&all, LABELS).unwrap(), ta.merge(&tb).merge(&tc));
    }

    #[test]
    fn counts_stay_within_supports(gs in graphs()) {
        let t = tally_of(&gs);
        prop_assert_eq!(t.processed as usize, gs.len());
        for (&(l, e), s) in &t.edges {
            prop_assert!(s.count <= t.support[l.index()]);
            let f = t.frequency(l, e);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(t.mean_mi(l, e) >= 0.0);
        }
    }

    #[test]
    fn frequency_fusion_is_monotone_in_tau(gs in graphs(), lo in 0.0..1.0f64, hi in 0.0..1.0f64) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let t = tally_of(&gs);
        let strict = fuse_frequency(&t, hi).edges();
        let loose = fuse_frequency(&t, lo).edges();
        prop_assert!(strict.is_subset(&loose));
        prop_assert_eq!(fuse_frequency(&t, 0.0).edges(), Criterion::Union.apply(&t).edges());
    }

    #[test]
    fn adaptive_lies_between_its_static_bounds(gs in graphs()) {
        let t = tally_of(&gs);
        let adaptive = Criterion::Adaptive { tau_max: 0.5, tau_min: 0.05 }.apply(&t).edges();
        prop_assert!(fuse_frequency(&t, 0.5).edges().is_subset(&adaptive));
        prop_assert!(adaptive.is_subset(&fuse_frequency(&t, 0.05).edges()));
    }

    #[test]
    fn smaller_fpr_keeps_no_more_edges(gs in graphs()) {
        let t = tally_of(&gs);
        let sizes: Vec<usize> = [0.01, 0.05, 0.15, 0.2].iter().map(|&f| fuse_beta_fpr(&t, f).edge_count()).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{:?}", sizes);
    }

    #[test]
    fn every_criterion_keeps_a_subset_of_the_union(gs in graphs(), reg in 0.0..0.1f64) {
        let t = tally_of(&gs);
        let union = Criterion::Union.apply(&t).edges();
        for c in [Criterion::BesMi { alpha_reg: reg }, Criterion::Caig { alpha_reg: reg }, Criterion::BetaFpr { fpr: 0.05 }] {
            prop_assert!(c.apply(&t).edges().is_subset(&union));
        }
    }

    #[test]
    fn adaptive_threshold_is_bounded_and_decreasing(supports in prop::collection::vec(1..5000u64, 1..30)) {
        let t = AdaptiveThreshold::<f64>::fit(&supports, 0.5, 0.05).unwrap();
        let mut prev = f64::INFINITY;
        for m in (0..40).map(|i| 1.3f64.powi(i)) {
            let v = t.eval(m);
            prop_assert!((0.05..=0.5).contains(&v));
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn nucleus_filter_is_a_distribution(
        raw in prop::collection::vec(0.0..1.0f64, 2..60),
        top_k in 1..40usize,
        top_p in 0.01..=1.0f64,
    ) {
        let mut dist = raw;
        dist[0] = 0.0;
        let total: f64 = dist.iter().sum();
        prop_assume!(total > 0.0);
        let dist: Vec<f64> = dist.iter().map(|p| p / total).collect();
        let kept = nucleus_filter(&dist, top_k, top_p);
        prop_assert!(!kept.is_empty() && kept.len() <= top_k);
        prop_assert!((kept.iter().map(|&(_, q)| q).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(kept.iter().all(|&(e, q)| q > 0.0 && e != EventId::START));
        let best = dist.iter().cloned().fold(0.0, f64::max);
        prop_assert_eq!(dist[kept[0].0.index()], best);
    }
}
