use std::fs;

use fedscore::data::{
    generate_synthetic, largest_remainder_sizes, load_csv, load_csv_with, partition_sites,
    split_counts, split_train_valid_test, write_csv, Column, FeaturePlan, FederationConfig,
    IngestOptions, Schema, SplitTag, VariableSpec, COHORT_SITE_PROPORTIONS,
};
use proptest::prelude::*;

fn noise() -> Vec<FeaturePlan> {
    vec![FeaturePlan::Continuous {
        name: "x".into(),
        mean: 0.0,
        sd: 1.0,
    }]
}

fn triage_schema() -> Schema {
    Schema::new(
        vec![
            VariableSpec::continuous("age"),
            VariableSpec::categorical("triage", ["P1", "P2", "P3"]),
        ],
        "admit",
    )
    .unwrap()
}

#[test]
fn cohort_proportions_reproduce_the_published_site_sizes() {
    assert_eq!(
        largest_remainder_sizes(80613, &COHORT_SITE_PROPORTIONS),
        vec![3224, 4031, 5643, 7255, 8061, 8867, 9674, 10480, 11286, 12092]
    );
}

#[test]
fn small_apportionments() {
    assert_eq!(largest_remainder_sizes(10, &[0.2, 0.3, 0.5]), vec![2, 3, 5]);
    assert_eq!(split_counts(100, [0.7, 0.1, 0.2]).unwrap(), (70, 10, 20));
    assert_eq!(split_counts(10, [0.7, 0.1, 0.2]).unwrap(), (7, 1, 2));
    assert!(split_counts(10, [0.7, 0.1, 0.1]).is_err());
}

#[test]
fn missing_cells_are_excluded_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.csv");
    fs::write(
        &path,
        "age,triage,admit\n40,P1,0\n,P2,1\n71,P3,1\n55,NA,0\n",
    )
    .unwrap();
    let (data, report) = load_csv(&path, &triage_schema()).unwrap();
    assert_eq!(data.n_rows(), 2);
    assert_eq!(
        (report.rows_read, report.rows_kept, report.excluded_missing),
        (4, 2, 2)
    );
}

#[test]
fn unknown_label_names_the_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.csv");
    fs::write(&path, "age,triage,admit\n40,P1,0\n41,P5,1\n").unwrap();
    let msg = load_csv(&path, &triage_schema()).unwrap_err().to_string();
    assert!(
        msg.contains("line 3") && msg.contains("triage") && msg.contains("P5"),
        "{msg}"
    );
}

#[test]
fn filters_drop_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.csv");
    fs::write(&path, "age,triage,admit\n12,P1,0\n40,P2,1\n18,P3,1\n").unwrap();
    let opts = IngestOptions {
        filters: vec!["age>=18".parse().unwrap()],
    };
    let (data, report) = load_csv_with(&path, &triage_schema(), &opts).unwrap();
    assert_eq!((data.n_rows(), report.excluded_by_filter), (2, 1));
}

#[test]
fn csv_round_trip_is_lossless() {
    let data = generate_synthetic(
        300,
        &[-0.5, 0.02],
        &[FeaturePlan::Continuous {
            name: "age".into(),
            mean: 50.0,
            sd: 17.0,
        }],
        "admit",
        4,
    )
    .unwrap();
    let data = split_train_valid_test(&data, [0.7, 0.1, 0.2], 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    write_csv(&path, &data).unwrap();
    let (back, _) = load_csv(&path, &data.schema).unwrap();
    assert_eq!(back.columns, data.columns);
    assert_eq!(back.outcome, data.outcome);
    assert_eq!(back.split, data.split);
}

#[test]
fn intercept_only_prevalence() {
    let data = generate_synthetic(10_000, &[3f64.ln(), 0.0], &noise(), "y", 17).unwrap();
    let prevalence = data.outcome.iter().map(|&y| f64::from(y)).sum::<f64>() / 10_000.0;
    assert!((prevalence - 0.75).abs() < 0.02, "{prevalence}");
}

#[test]
fn partition_is_disjoint_and_seeded() {
    let data = generate_synthetic(1000, &[0.0, 1.0], &noise(), "y", 1).unwrap();
    let config = FederationConfig {
        proportions: vec![0.2, 0.3, 0.5],
        ..FederationConfig::equal_sites(3, 77)
    };
    let a = partition_sites(&data, &config).unwrap();
    let b = partition_sites(&data, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.iter().map(|s| s.n_rows()).collect::<Vec<_>>(),
        vec![200, 300, 500]
    );
    assert_eq!(
        a.iter().map(|s| s.site_id).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
    let Column::Continuous(all) = &data.columns[0] else {
        unreachable!()
    };
    let mut seen: Vec<u64> = a
        .iter()
        .flat_map(|s| match &s.columns[0] {
            Column::Continuous(v) => v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            _ => unreachable!(),
        })
        .collect();
    let mut want: Vec<u64> = all.iter().map(|x| x.to_bits()).collect();
    seen.sort_unstable();
    want.sort_unstable();
    assert_eq!(seen, want);
}

proptest! {
    #[test]
    fn apportionment_sums_and_stays_within_one(n in 0usize..100_000, raw in prop::collection::vec(0.01f64..1.0, 1..12)) {
        let total: f64 = raw.iter().sum();
        let props: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let sizes = largest_remainder_sizes(n, &props);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        for (s, p) in sizes.iter().zip(&props) {
            prop_assert!((*s as f64 - p * n as f64).abs() < 1.0 + 1e-6);
        }
    }

    #[test]
    fn split_tags_follow_the_counts(n in 1usize..500, seed in any::<u64>()) {
        let data = generate_synthetic(n, &[0.0, 0.0], &noise(), "y", seed).unwrap();
        let tagged = split_train_valid_test(&data, [0.7, 0.1, 0.2], seed).unwrap();
        let count = |t: SplitTag| tagged.split.iter().filter(|&&s| s == t).count();
        let (tr, va, te) = split_counts(n, [0.7, 0.1, 0.2]).unwrap();
        prop_assert_eq!((count(SplitTag::Train), count(SplitTag::Validation), count(SplitTag::Test)), (tr, va, te));
    }
}
