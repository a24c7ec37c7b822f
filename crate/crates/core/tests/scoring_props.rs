use calmplay_core::analysis::{
    cardiac_reactivity, score_panas, score_pxi, PanasResponse, PxiConstruct, PxiItem, PxiResponse,
};
use proptest::prelude::*;

fn pxi_items() -> impl Strategy<Value = Vec<PxiItem>> {
    prop::collection::vec(-3i8..=3, 30).prop_map(|values| {
        PxiConstruct::ALL
            .iter()
            .flat_map(|c| std::iter::repeat(c.name()).take(3))
            .zip(values)
            .map(|(c, value)| PxiItem { construct: c.to_string(), value })
            .collect()
    })
}

proptest! {
    #[test]
    fn panas_permutation_invariant(
        pos in prop::collection::vec(1u8..=5, 10),
        neg in prop::collection::vec(1u8..=5, 10),
        shuffle in any::<prop::sample::Index>(),
    ) {
        let a = score_panas(&PanasResponse { positive_items: pos.clone(), negative_items: neg.clone() }).unwrap();
        let rot = shuffle.index(10);
        let (mut p2, mut n2) = (pos.clone(), neg.clone());
        p2.rotate_left(rot);
        n2.reverse();
        let b = score_panas(&PanasResponse { positive_items: p2, negative_items: n2 }).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((10..=50).contains(&a.positive_affect));
        prop_assert!((10..=50).contains(&a.negative_affect));
    }

    #[test]
    fn pxi_permutation_invariant(items in pxi_items(), seed in any::<u64>()) {
        let a = score_pxi(&PxiResponse { items: items.clone() }).unwrap();
        let mut shuffled = items;
        // deterministic Fisher-Yates from the seed
        let mut x = seed | 1;
        for i in (1..shuffled.len()).rev() {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            shuffled.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let b = score_pxi(&PxiResponse { items: shuffled }).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.constructs.values().all(|v| (-3.0..=3.0).contains(v)));
    }

    #[test]
    fn reactivity_translation_equivariant(
        base in 50.0f64..120.0,
        samples in prop::collection::vec(40.0f64..180.0, 1..50),
        c in -20.0f64..20.0,
    ) {
        let a = cardiac_reactivity(base, &samples).unwrap();
        let shifted: Vec<f64> = samples.iter().map(|s| s + c).collect();
        let b = cardiac_reactivity(base + c, &shifted).unwrap();
        prop_assert!((a.reactivity_bpm - b.reactivity_bpm).abs() < 1e-9);
    }
}
