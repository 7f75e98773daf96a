use std::collections::BTreeSet;

use fmtcheck_core::forge::{capacity, synthesize_split, DatasetSpec, ForgeError, Question, QuestionPool};
use fmtcheck_core::{parse_library, MetaConstraint};

const TOY: &str = r#"[
  {"id": "limit", "category": "limited-word-count",
   "template": "Use at most [[N]] words.",
   "vars": [{"name": "N", "type": "int", "values": [10, 20, 30]}],
   "verifier": {"id": "word-count-max", "params": {"limit": "[[N]]"}}},
  {"id": "paras", "category": "limited-structure",
   "template": "Write exactly [[N]] paragraphs.",
   "vars": [{"name": "N", "type": "int", "values": [1, 2, 3, 4, 5]}],
   "verifier": {"id": "paragraph-count-exact", "params": {"n": "[[N]]"}}},
  {"id": "json", "category": "limited-structure",
   "template": "Answer in JSON.",
   "verifier": {"id": "json-wellformed"}}
]"#;

fn toy() -> (Vec<MetaConstraint>, QuestionPool) {
    let pool = QuestionPool::new(
        "toy",
        vec![
            Question { id: "q1".into(), text: "Why is the sky blue?".into() },
            Question { id: "q2".into(), text: "Name a prime.".into() },
        ],
    )
    .unwrap();
    (parse_library(TOY).unwrap(), pool)
}

type Key = (String, BTreeSet<String>);

/// Every (question, set of constraint texts) at `level`, built from the
/// templates by hand.
fn brute_force(level: usize) -> BTreeSet<Key> {
    let per_constraint: Vec<Vec<String>> = vec![
        [10, 20, 30].iter().map(|n| format!("Use at most {n} words.")).collect(),
        (1..=5).map(|n| format!("Write exactly {n} paragraphs.")).collect(),
        vec!["Answer in JSON.".to_string()],
    ];
    let mut out = BTreeSet::new();
    for q in ["Why is the sky blue?", "Name a prime."] {
        for mask in 0u32..8 {
            if mask.count_ones() as usize != level {
                continue;
            }
            let chosen: Vec<&Vec<String>> = (0..3).filter(|i| mask & (1 << i) != 0).map(|i| &per_constraint[i]).collect();
            let mut combos: Vec<Vec<String>> = vec![vec![]];
            for texts in chosen {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        texts.iter().map(move |t| {
                            let mut c = c.clone();
                            c.push(t.clone());
                            c
                        })
                    })
                    .collect();
            }
            for c in combos {
                out.insert((q.to_string(), c.into_iter().collect()));
            }
        }
    }
    out
}

fn synthesized(level: u8, train: usize, test: usize) -> BTreeSet<Key> {
    let (lib, pool) = toy();
    let split = synthesize_split(&pool, &lib, DatasetSpec { level, train_count: train, test_count: test, seed: 9 }).unwrap();
    let keys: Vec<Key> = split
        .all()
        .map(|i| (i.question.clone(), i.instances.iter().map(|x| x.rendered_text.clone()).collect()))
        .collect();
    let set: BTreeSet<Key> = keys.iter().cloned().collect();
    assert_eq!(set.len(), keys.len(), "duplicate instruction");
    set
}

#[test]
fn level_one_capacity_is_eighteen() {
    let (lib, pool) = toy();
    assert_eq!(capacity(&pool, &lib, 1), 18);
    let oracle = brute_force(1);
    assert_eq!(oracle.len(), 18);
    assert_eq!(synthesized(1, 12, 6), oracle);
}

#[test]
fn higher_levels_match_brute_force() {
    let (lib, pool) = toy();
    for level in [2u8, 3] {
        let oracle = brute_force(level as usize);
        assert_eq!(capacity(&pool, &lib, level), oracle.len() as u64);
        assert_eq!(synthesized(level, oracle.len(), 0), oracle);
    }
    assert_eq!(brute_force(2).len(), 2 * (3 * 5 + 3 + 5));
    assert_eq!(brute_force(3).len(), 2 * 15);
}

#[test]
fn requesting_more_than_capacity_fails() {
    let (lib, pool) = toy();
    let err = synthesize_split(&pool, &lib, DatasetSpec { level: 1, train_count: 19, test_count: 0, seed: 1 }).unwrap_err();
    assert_eq!(err, ForgeError::Insufficient { requested: 19, capacity: 18 });
}
