use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use feet::embedding_io::{
    load_embedding_set, parse_binary, parse_canonical, save_embedding_set, write_binary,
    write_canonical, EmbeddingRecord, EmbeddingSet,
};
use feet::{Error, Regime};

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite()),
        -10.0f32..10.0,
        Just(0.0f32),
        Just(-0.0f32),
    ]
}

fn embedding_set() -> impl Strategy<Value = EmbeddingSet> {
    (1usize..6, 2u32..5,0usize..12, prop::option::of(1u32..1024)).prop_flat_map(
        |(dim, classes, n, shot)| {
            let records = prop::collection::vec(
                (
                    "[a-zA-Z0-9_ é\"\\\\-]{1,10}",
                    0..classes,
                    prop::collection::vec(finite_f32(), dim),
                ),
                n,
            );
            records.prop_map(move |rows| {
                let mut seen = std::collections::HashSet::new();
                let records = rows
                    .into_iter()
                    .filter(|(id, _, _)| seen.insert(id.clone()))
                    .map(|(id, label, vector)| EmbeddingRecord { id, label, vector })
                    .collect();
                EmbeddingSet {
                    model_id: "org/model".into(),
                    task_id: "task".into(),
                    regime: if shot.is_some() { Regime::Fewshot } else { Regime::Frozen },
                    shot,
                    dim,
                    num_classes: classes,
                    metadata: BTreeMap::from([("pooling".to_string(), serde_json::json!("mean"))]),
                    records,
                }
            })
        },
    )
}

fn bits(set: &EmbeddingSet) -> Vec<(String, u32, Vec<u32>)> {
    set.records
        .iter()
        .map(|r| (r.id.clone(), r.label, r.vector.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

proptest! {
    #[test]
    fn canonical_and_binary_agree_bit_for_bit(set in embedding_set()) {
        let mut c = Vec::new();
        write_canonical(&set, &mut c).unwrap();
        let mut b = Vec::new();
        write_binary(&set, &mut b).unwrap();
        let from_c = parse_canonical(Path::new("x.feet.jsonl"), &c).unwrap();
        let from_b = parse_binary(Path::new("x.feet.bin"), &b).unwrap();
        prop_assert_eq!(bits(&from_c), bits(&set));
        prop_assert_eq!(bits(&from_b), bits(&set));
        prop_assert_eq!(&from_b.metadata, &set.metadata);
        prop_assert_eq!(from_c.shot, set.shot);

        let mut c2 = Vec::new();
        write_canonical(&from_b, &mut c2).unwrap();
        prop_assert_eq!(c2, c);
        let mut b2 = Vec::new();
        write_binary(&from_c, &mut b2).unwrap();
        prop_assert_eq!(b2, b);
    }

    #[test]
    fn truncated_binary_never_panics(set in embedding_set(), cut in 0usize..4096) {
        let mut b = Vec::new();
        write_binary(&set, &mut b).unwrap();
        if cut < b.len() {
            prop_assert!(parse_binary(Path::new("x"), &b[..cut]).is_err());
        }
    }
}

#[test]
fn files_load_by_content_not_extension() {
    let dir = tempfile::tempdir().unwrap();
    let set = EmbeddingSet {
        model_id: "m".into(),
        task_id: "t".into(),
        regime: Regime::Finetuned,
        shot: None,
        dim: 2,
        num_classes: 2,
        metadata: BTreeMap::new(),
        records: vec![
            EmbeddingRecord { id: "a".into(), label: 0, vector: vec![0.5, -1.0] },
            EmbeddingRecord { id: "b".into(), label: 1, vector: vec![2.0, 3.25] },
        ],
    };
    let bin = dir.path().join("set.feet.bin");
    save_embedding_set(&set, &bin).unwrap();
    let renamed = dir.path().join("set.data");
    std::fs::rename(&bin, &renamed).unwrap();
    assert_eq!(load_embedding_set(&renamed).unwrap(), set);

    let jsonl = dir.path().join("set.feet.jsonl");
    save_embedding_set(&set, &jsonl).unwrap();
    let text = std::fs::read_to_string(&jsonl).unwrap();
    assert!(text.starts_with("{\"format\":\"FEET-EMB\""));
    assert_eq!(text.lines().count(), 3);
    assert_eq!(load_embedding_set(&jsonl).unwrap(), set);
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_embedding_set("/nonexistent/x.feet.jsonl"),
        Err(Error::Io { .. })
    ));
}
