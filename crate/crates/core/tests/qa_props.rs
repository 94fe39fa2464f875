//! Invariants of the QA filtering stage.

use proptest::prelude::*;

use vidforge::qa::{blacklist_filter, dedup, filter_pairs, BagOfWordsEmbedder, QaPair};

const WORDS: [&str; 8] = ["red", "car", "dog", "runs", "near", "the", "barn", "slowly"];
const HEDGE: &str = "Does not show this.";

fn pair(asset: &str, question: String, answer: &str) -> QaPair {
    QaPair {
        asset_id: asset.into(),
        qtype: "Temporal".into(),
        question,
        answer: answer.into(),
        options: None,
    }
}

fn arb_pairs(hedges: bool) -> impl Strategy<Value = Vec<QaPair>> {
    let one = (
        0..3usize,
        prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..5),
        any::<bool>(),
    )
        .prop_map(move |(asset, words, hedge)| {
            let answer = if hedges && hedge { HEDGE } else { "Yes." };
            pair(&format!("v{asset}"), words.join(" "), answer)
        });
    prop::collection::vec(one, 0..24)
}

fn run(pairs: Vec<QaPair>, threshold: f64) -> Vec<QaPair> {
    filter_pairs(pairs, &BagOfWordsEmbedder, threshold).unwrap().0
}

proptest! {
    #[test]
    fn filtering_is_idempotent(pairs in arb_pairs(true), threshold in 0.5f64..=1.0) {
        let once = run(pairs, threshold);
        prop_assert_eq!(run(once.clone(), threshold), once);
    }

    #[test]
    fn kept_pairs_keep_input_order(pairs in arb_pairs(true), threshold in 0.5f64..=1.0) {
        let kept = run(pairs.clone(), threshold);
        let mut it = pairs.iter();
        for k in &kept {
            prop_assert!(it.any(|p| p == k));
        }
    }

    #[test]
    fn report_accounts_for_every_pair(pairs in arb_pairs(true), threshold in 0.5f64..=1.0) {
        let n = pairs.len();
        let (kept, report) = filter_pairs(pairs, &BagOfWordsEmbedder, threshold).unwrap();
        prop_assert_eq!(report.input, n);
        prop_assert_eq!(report.kept, kept.len());
        prop_assert_eq!(report.kept + report.dropped_duplicate + report.dropped_blacklist, n);
    }

    /// Without hedged answers the order of the two steps cannot matter.
    #[test]
    fn order_is_irrelevant_without_hedges(pairs in arb_pairs(false), threshold in 0.5f64..=1.0) {
        let a = run(pairs.clone(), threshold);
        let (deduped, _) = dedup(pairs, &BagOfWordsEmbedder, threshold).unwrap();
        let (b, _) = blacklist_filter(deduped);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn blacklist_runs_before_dedup() {
    // the first phrasing hedges; its duplicate carries the usable answer
    let pairs = vec![
        pair("v1", "What is the dog doing".into(), HEDGE),
        pair("v1", "What is the dog doing".into(), "Running."),
    ];
    let kept = run(pairs.clone(), 0.95);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].answer, "Running.");

    let (deduped, _) = dedup(pairs, &BagOfWordsEmbedder, 0.95).unwrap();
    let (reversed, _) = blacklist_filter(deduped);
    assert!(reversed.is_empty());
}
