use deep_ed::candidates::{build_prior, PriorSource, SourceKind};
use deep_ed::diff::{logsumexp_value, softmax_values, top_mask, Tensor};
use deep_ed::embed::{average_precision, hinge_embed, ndcg_at};
use deep_ed::global::CrfInstance;
use deep_ed::harness::{evaluate, Outcome};
use deep_ed::local::attention_weights;
use proptest::prelude::*;

fn finite(lo: f64, hi: f64, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn unit_rows(raw: &[f64], rows: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * d);
    for r in 0..rows {
        let row = &raw[r * d..(r + 1) * d];
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
        data.extend(row.iter().map(|x| x / n));
    }
    Tensor::new(rows, d, data)
}

fn crf_strategy() -> impl Strategy<Value = CrfInstance> {
    (2usize..=5, 1usize..=4, 2usize..=4).prop_flat_map(|(n, s, d)| {
        (
            prop::collection::vec(finite(-3.0, 3.0, s..=s), n),
            prop::collection::vec(finite(-1.0, 1.0, s * d..=s * d), n),
            finite(0.0, 2.0, d..=d),
        )
            .prop_map(move |(unary, raw, c)| {
                let cand = raw.iter().map(|r| unit_rows(r, s, d)).collect();
                CrfInstance::new(unary, cand, c).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(xs in finite(-50.0, 50.0, 1..=20)) {
        let p = softmax_values(&xs).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((logsumexp_value(&xs).unwrap() - naive).abs() < 1e-9);
    }

    #[test]
    fn hard_attention_keeps_the_top_r(u in finite(-5.0, 5.0, 1..=30), r in 1usize..=40) {
        let beta = attention_weights(&u, r).unwrap();
        prop_assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let kept = top_mask(&u, r);
        prop_assert_eq!(kept.iter().filter(|&&k| k).count(), r.min(u.len()));
        for i in 0..u.len() {
            prop_assert_eq!(beta[i] > 0.0, kept[i]);
            for j in 0..u.len() {
                if kept[i] && !kept[j] {
                    prop_assert!(u[i] >= u[j]);
                }
            }
        }
    }

    #[test]
    fn messages_stay_normalized(crf in crf_strategy(), delta in 0.05f64..=1.0, layers in 1usize..=6) {
        let mut state = crf.initial_state();
        for _ in 0..layers {
            state = crf.lbp_step(&state, delta).unwrap();
            for i in 0..crf.len() {
                for j in 0..crf.len() {
                    if let Some(m) = state.get(i, j) {
                        prop_assert!((m.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                }
            }
        }
        for b in crf.beliefs(&state).unwrap() {
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stepwise_and_unrolled_beliefs_agree(crf in crf_strategy(), delta in 0.05f64..=1.0, layers in 1usize..=6) {
        let mut state = crf.initial_state();
        for _ in 0..layers {
            state = crf.lbp_step(&state, delta).unwrap();
        }
        let stepwise = crf.beliefs(&state).unwrap();
        let unrolled = crf.run(delta, layers).unwrap();
        for (a, b) in stepwise.iter().zip(&unrolled) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pairwise_is_symmetric(crf in crf_strategy()) {
        let n = crf.len();
        let s = crf.unary[0].len();
        for i in 0..n {
            for j in 0..n {
                for a in 0..s {
                    for b in 0..s {
                        prop_assert_eq!(crf.pairwise(i, a, j, b), crf.pairwise(j, b, i, a));
                    }
                }
            }
        }
    }

    #[test]
    fn priors_sum_to_one(
        entries in prop::collection::vec((0usize..4, 0usize..6, 1u32..100), 1..30),
        weights in (0.1f64..3.0, 0.1f64..3.0),
    ) {
        let mut counts = PriorSource::new(SourceKind::Counts, weights.0);
        let mut lists = PriorSource::new(SourceKind::Uniform, weights.1);
        for (k, &(m, e, c)) in entries.iter().enumerate() {
            let src = if k % 2 == 0 { &mut counts } else { &mut lists };
            src.add(&format!("m{m}"), &format!("e{e}"), f64::from(c));
        }
        let prior = build_prior(&[counts, lists]);
        for (_, dist) in prior.mentions() {
            prop_assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(dist.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }

    #[test]
    fn ranking_metrics_are_bounded(ranked in prop::collection::vec(any::<bool>(), 1..30), k in 1usize..12) {
        let ap = average_precision(&ranked);
        let nd = ndcg_at(&ranked, k);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&nd));
        let mut ideal = ranked.clone();
        ideal.sort_by(|a, b| b.cmp(a));
        if ideal[0] {
            prop_assert!((average_precision(&ideal) - 1.0).abs() < 1e-12);
            prop_assert!((ndcg_at(&ideal, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_hinge_is_nonnegative(z in finite(-1.0, 1.0, 4..=4), p in finite(-1.0, 1.0, 4..=4), q in finite(-1.0, 1.0, 4..=4), margin in 0.0f64..2.0) {
        let h = hinge_embed(&z, &p, &q, margin);
        prop_assert!(h >= 0.0);
        let expect = (margin - z.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() + z.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
        prop_assert!((h - expect).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_consistent(cases in prop::collection::vec((prop::option::of(0u8..4), prop::option::of(0u8..4), any::<bool>()), 0..40)) {
        let outcomes: Vec<Outcome> = cases
            .iter()
            .map(|&(g, p, k)| Outcome { gold: g.map(|x| x.to_string()), predicted: p.map(|x| x.to_string()), in_kb: k })
            .collect();
        let m = evaluate(&outcomes);
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.correct <= m.predicted.min(m.gold));
        prop_assert!(m.in_kb <= m.gold);
        let lo = m.precision.min(m.recall);
        let hi = m.precision.max(m.recall);
        prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
    }
}

#[test]
fn single_mention_beliefs_are_the_unary_softmax() {
    let crf = CrfInstance::new(vec![vec![0.5, -1.0, 2.0]], vec![Tensor::new(3, 1, vec![1.0, -1.0, 1.0])], vec![1.0]).unwrap();
    let b = crf.run(0.5, 10).unwrap();
    let want = softmax_values(&[0.5, -1.0, 2.0]).unwrap();
    assert_eq!(b[0], want);
}
