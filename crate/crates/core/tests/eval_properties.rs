use proptest::prelude::*;
use relrank::corpus::RelationCounts;
use relrank::eval::{bucket_macro_f1, micro_prf, BucketMode};
use relrank::RelationLabel;

fn label(i: u8) -> RelationLabel {
    if i == 0 {
        RelationLabel::Na
    } else {
        RelationLabel::relation(format!("r:{i}"))
    }
}

fn pairs() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..5, 0u8..5), 1..60)
}

fn split(p: &[(u8, u8)]) -> (Vec<RelationLabel>, Vec<RelationLabel>) {
    p.iter().map(|&(g, q)| (label(g), label(q))).unzip()
}

proptest! {
    #[test]
    fn order_does_not_matter(p in pairs(), seed in any::<u64>()) {
        let (g, q) = split(&p);
        let mut shuffled = p.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize).wrapping_mul(i + 7) % n);
        }
        let (g2, q2) = split(&shuffled);
        let a = micro_prf(&g, &q).unwrap();
        let b = micro_prf(&g2, &q2).unwrap();
        prop_assert_eq!(a.micro_f1, b.micro_f1);
        prop_assert_eq!(a.macro_f1, b.macro_f1);
    }

    #[test]
    fn swapping_relation_ids_keeps_micro_f1(p in pairs()) {
        let swap = |x: u8| match x { 1 => 2, 2 => 1, v => v };
        let (g, q) = split(&p);
        let swapped: Vec<(u8, u8)> = p.iter().map(|&(a, b)| (swap(a), swap(b))).collect();
        let (g2, q2) = split(&swapped);
        prop_assert_eq!(micro_prf(&g, &q).unwrap().micro_f1, micro_prf(&g2, &q2).unwrap().micro_f1);
    }

    #[test]
    fn scores_bounded_and_consistent(p in pairs()) {
        let (g, q) = split(&p);
        let s = micro_prf(&g, &q).unwrap();
        for v in [s.precision, s.recall, s.micro_f1, s.macro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if s.precision + s.recall > 0.0 {
            let h = 2.0 * s.precision * s.recall / (s.precision + s.recall);
            prop_assert!((s.micro_f1 - h).abs() < 1e-15);
        } else {
            prop_assert_eq!(s.micro_f1, 0.0);
        }
        if !s.per_relation.is_empty() {
            let mean = s.per_relation.iter().map(|r| r.f1).sum::<f64>() / s.per_relation.len() as f64;
            prop_assert!((s.macro_f1 - mean).abs() < 1e-15);
        }
        let t = s.counts.totals();
        let gold_pos = g.iter().filter(|l| !l.is_na()).count();
        let pred_pos = q.iter().filter(|l| !l.is_na()).count();
        prop_assert_eq!(t.tp + t.fn_, gold_pos);
        prop_assert_eq!(t.tp + t.fp, pred_pos);
        prop_assert_eq!(s.counts.examples, g.len());
    }

    #[test]
    fn bucket_membership_ignores_predictions(p in pairs(), counts in prop::collection::vec(1usize..50, 4)) {
        let (g, q) = split(&p);
        let train = RelationCounts::from_map((1u8..5).zip(counts).map(|(i, c)| (label(i), c)).collect());
        let all_na = vec![RelationLabel::Na; g.len()];
        for mode in [BucketMode::Top, BucketMode::Tail] {
            let a = bucket_macro_f1(&train, &g, &q, mode, 0.5);
            let b = bucket_macro_f1(&train, &g, &all_na, mode, 0.5);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.members, b.members);
            }
        }
    }
}
