use fedscore::glm::{CoefficientVector, DesignEncoding, EncodedVariable};
use fedscore::scorecard::ScoreCard;
use proptest::prelude::*;

fn encoding(levels: &[usize], label: &str) -> DesignEncoding {
    DesignEncoding {
        variables: levels
            .iter()
            .enumerate()
            .map(|(i, &k)| EncodedVariable {
                name: format!("var {i}"),
                categories: (0..k).map(|c| format!("{label}{c}")).collect(),
            })
            .collect(),
    }
}

fn model() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(2usize..6, 1..6).prop_flat_map(|levels| {
        let width = 1 + levels.iter().map(|k| k - 1).sum::<usize>();
        (Just(levels), prop::collection::vec(-3.0f64..3.0, width))
    })
}

fn points(card: &ScoreCard) -> Vec<Vec<u32>> {
    card.variables
        .iter()
        .map(|v| v.entries.iter().map(|e| e.points).collect())
        .collect()
}

#[test]
fn worked_two_variable_card() {
    let card = ScoreCard::derive(
        &CoefficientVector::from_slice(&[-2.0, 0.8, 0.4, 1.2]),
        &encoding(&[2, 3], "c"),
        100,
    )
    .unwrap();
    assert!((card.scale - 50.0).abs() < 1e-12);
    assert_eq!(points(&card), vec![vec![0, 40], vec![0, 20, 60]]);
    assert_eq!(card.max_total(), 100);
}

#[test]
fn binary_variable_spans_the_whole_range() {
    let card = ScoreCard::derive(
        &CoefficientVector::from_slice(&[0.0, -4.2]),
        &encoding(&[2], "c"),
        100,
    )
    .unwrap();
    assert_eq!(points(&card), vec![vec![100, 0]]);
}

#[test]
fn malformed_markdown_is_rejected() {
    assert!(ScoreCard::from_markdown("").is_err());
    assert!(ScoreCard::from_markdown(
        "| Variable | Interval | Point |\n|---|---|---|\n| a | b | many |\n"
    )
    .is_err());
}

proptest! {
    #[test]
    fn points_track_scaled_coefficients((levels, beta) in model(), s_max in 5u32..500) {
        prop_assume!(beta[1..].iter().any(|b| b.abs() > 1e-6));
        let enc = encoding(&levels, "c");
        let card = ScoreCard::derive(&CoefficientVector::from_slice(&beta), &enc, s_max).unwrap();
        prop_assert!(card.max_total() <= s_max);
        let mut offset = 1;
        for (var, k) in card.variables.iter().zip(&levels) {
            let coefs: Vec<f64> = std::iter::once(0.0).chain(beta[offset..offset + k - 1].iter().copied()).collect();
            offset += k - 1;
            let min = coefs.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(var.entries.iter().any(|e| e.points == 0));
            for (entry, c) in var.entries.iter().zip(&coefs) {
                prop_assert!((f64::from(entry.points) - card.scale * (c - min)).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn rescaling_coefficients_keeps_the_card((levels, beta) in model(), log_c in -4.0f64..4.0) {
        prop_assume!(beta[1..].iter().any(|b| b.abs() > 1e-3));
        let enc = encoding(&levels, "c");
        let c = log_c.exp();
        let a = ScoreCard::derive(&CoefficientVector::from_slice(&beta), &enc, 100).unwrap();
        let scaled: Vec<f64> = beta.iter().map(|b| b * c).collect();
        let b = ScoreCard::derive(&CoefficientVector::from_slice(&scaled), &enc, 100).unwrap();
        prop_assert_eq!(a.max_total(), b.max_total());
        prop_assert_eq!(a.variable_names(), b.variable_names());
    }

    #[test]
    fn markdown_and_json_round_trip((levels, beta) in model(), label in "[<>=\\[\\](),.0-9a-z| -]{1,6}") {
        prop_assume!(beta[1..].iter().any(|b| b.abs() > 1e-6));
        let card = ScoreCard::derive(&CoefficientVector::from_slice(&beta), &encoding(&levels, &label), 100).unwrap();
        let back = ScoreCard::from_markdown(&card.to_markdown()).unwrap();
        prop_assert_eq!(points(&back), points(&card));
        prop_assert_eq!(back.variable_names(), card.variable_names());
        let json: ScoreCard = serde_json::from_str(&serde_json::to_string(&card).unwrap()).unwrap();
        prop_assert_eq!(json, card);
    }
}
