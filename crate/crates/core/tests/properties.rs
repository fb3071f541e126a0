use std::collections::BTreeMap;

use proptest::prelude::*;

use qga_core::backend::{default_qa_params, Backend, GenerationRequest, ModelKind, OracleBackend, OracleBook};
use qga_core::corpus::{fixture_corpus, read_corpus, write_corpus};
use qga_core::decode::{align_spans, parse_answer};
use qga_core::qa_data::{attach_trigger_clause, has_trigger_clause};
use qga_core::scoring::{multiset_matches, rouge1, score_arguments, score_triggers, ArgumentUnit, Counts, Prf, TriggerUnit};
use qga_core::{enumerate_tasks, TemplateRegistry};

fn argument() -> impl Strategy<Value = ArgumentUnit> {
    (
        prop::sample::select(vec!["s1", "s2"]),
        prop::sample::select(vec!["Conflict.Attack", "Life.Die"]),
        prop::sample::select(vec!["Attacker", "Target", "Place"]),
        0usize..4,
        1usize..3,
    )
        .prop_map(|(id, ty, role, start, len)| ArgumentUnit {
            id: id.into(),
            event_type: ty.into(),
            role: role.into(),
            start,
            end: start + len,
            surface: String::new(),
        })
}

fn trigger() -> impl Strategy<Value = TriggerUnit> {
    (prop::sample::select(vec!["s1", "s2"]), prop::sample::select(vec!["A", "B"]), 0usize..4).prop_map(
        |(id, ty, start)| TriggerUnit {
            id: id.into(),
            start,
            end: start + 1,
            event_type: ty.into(),
        },
    )
}

proptest! {
    #[test]
    fn swapping_pred_and_gold_swaps_precision_and_recall(
        pred in prop::collection::vec(argument(), 0..12),
        gold in prop::collection::vec(argument(), 0..12),
    ) {
        let (i, c) = score_arguments(&pred, &gold);
        let (i2, c2) = score_arguments(&gold, &pred);
        for (a, b) in [(i, i2), (c, c2)] {
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }

    #[test]
    fn classification_never_exceeds_identification(
        pred in prop::collection::vec(argument(), 0..12),
        gold in prop::collection::vec(argument(), 0..12),
        tpred in prop::collection::vec(trigger(), 0..8),
        tgold in prop::collection::vec(trigger(), 0..8),
    ) {
        let (i, c) = score_arguments(&pred, &gold);
        prop_assert!(c.tp <= i.tp);
        let (ti, tc) = score_triggers(&tpred, &tgold);
        prop_assert!(tc.tp <= ti.tp);
        for prf in [i, c, ti, tc] {
            prop_assert!((0.0..=1.0).contains(&prf.precision));
            prop_assert!((0.0..=1.0).contains(&prf.recall));
            prop_assert!((0.0..=1.0).contains(&prf.f1));
        }
    }

    #[test]
    fn adding_predictions_is_monotone(
        pred in prop::collection::vec(argument(), 0..10),
        gold in prop::collection::vec(argument(), 1..10),
        pick in any::<prop::sample::Index>(),
    ) {
        let (_, before) = score_arguments(&pred, &gold);
        let mut with_match = pred.clone();
        with_match.push(pick.get(&gold).clone());
        let (_, after) = score_arguments(&with_match, &gold);
        prop_assert!(after.recall >= before.recall);

        let mut with_miss = pred.clone();
        with_miss.push(ArgumentUnit { id: "elsewhere".into(), ..gold[0].clone() });
        let (_, after) = score_arguments(&with_miss, &gold);
        prop_assert!(after.precision <= before.precision);
    }

    #[test]
    fn sharded_counts_add_up(
        pred in prop::collection::vec(argument(), 0..12),
        gold in prop::collection::vec(argument(), 0..12),
    ) {
        let mut shards: BTreeMap<&str, (Vec<ArgumentUnit>, Vec<ArgumentUnit>)> = BTreeMap::new();
        for p in &pred {
            shards.entry(p.id.as_str()).or_default().0.push(p.clone());
        }
        for g in &gold {
            shards.entry(g.id.as_str()).or_default().1.push(g.clone());
        }
        let total = shards
            .values()
            .map(|(p, g)| score_arguments(p, g).1.counts())
            .fold(Counts::default(), |a, b| a + b);
        let (_, whole) = score_arguments(&pred, &gold);
        prop_assert_eq!(Prf::from(total), whole);
    }

    #[test]
    fn multiset_matching_is_symmetric(a in prop::collection::vec(0u8..4, 0..10), b in prop::collection::vec(0u8..4, 0..10)) {
        prop_assert_eq!(multiset_matches(a.iter(), b.iter()), multiset_matches(b.iter(), a.iter()));
        prop_assert!(multiset_matches(a.iter(), b.iter()) <= a.len().min(b.len()));
    }

    #[test]
    fn rouge_is_bounded_and_symmetric(a in "[a-dA-D ]{0,20}", b in "[a-dA-D ]{0,20}") {
        let r = rouge1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((r - rouge1(&b, &a)).abs() < 1e-12);
        if !a.trim().is_empty() {
            prop_assert!((rouge1(&a, &a.to_uppercase()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn answer_serialization_round_trips(surfaces in prop::collection::vec("[a-zé][a-zé ]{0,6}[a-zé]", 0..5)) {
        let raw = format!("{} </s>", surfaces.join("; "));
        prop_assert_eq!(parse_answer(&raw, "</s>"), surfaces.clone());
        // reading order is recovered when the surfaces appear in the text in order
        let text = surfaces.join(" | ");
        let decoded = align_spans(&surfaces, &text);
        prop_assert_eq!(decoded.spans.len(), surfaces.len());
    }

    #[test]
    fn trigger_clause_attaches_once(stem in "[A-Za-z ]{1,20}", trigger in "[a-z]{1,8}") {
        let q = format!("{stem}?");
        let with = attach_trigger_clause(&q, &trigger).unwrap();
        prop_assert!(with.ends_with(" event?"));
        prop_assert!(has_trigger_clause(&with));
        prop_assert!(attach_trigger_clause(&with, &trigger).is_err());
    }

    #[test]
    fn oracle_preserves_order(perm in Just((0..30).collect::<Vec<usize>>()).prop_shuffle()) {
        let mut book = OracleBook::new();
        for i in 0..30 {
            book.set(ModelKind::Qa, format!("tag-{i}"), format!("answer-{i}"));
        }
        let backend = OracleBackend::new(book);
        let inputs: Vec<String> = perm.iter().map(|i| format!("tag-{i}")).collect();
        let request = GenerationRequest::new(inputs, default_qa_params()).unwrap();
        let outputs = backend.generate(ModelKind::Qa, &request).unwrap();
        let expected: Vec<String> = perm.iter().map(|i| format!("answer-{i}")).collect();
        prop_assert_eq!(&outputs, &expected);
        prop_assert_eq!(backend.generate(ModelKind::Qa, &request).unwrap(), outputs);
    }
}

#[test]
fn registry_serialization_round_trips() {
    let registry = TemplateRegistry::ace();
    assert_eq!(TemplateRegistry::from_json(&registry.to_json()).unwrap(), registry);
}

#[test]
fn corpus_serialization_round_trips() {
    let corpus = fixture_corpus();
    let mut buf = Vec::new();
    write_corpus(&mut buf, &corpus).unwrap();
    assert_eq!(read_corpus(buf.as_slice()).unwrap(), corpus);
}

#[test]
fn task_count_is_sum_of_role_inventories() {
    let registry = TemplateRegistry::ace();
    let corpus = fixture_corpus();
    let plan = enumerate_tasks(&registry, &corpus);
    let expected: usize = corpus
        .iter()
        .flat_map(|r| &r.mentions)
        .map(|m| registry.queryable_roles(&m.event_type).map_or(0, |r| r.len()))
        .sum();
    assert_eq!(plan.tasks.len(), expected);
    assert!(plan.skipped.is_empty());
}

#[test]
fn fixture_covers_every_event_type() {
    let registry = TemplateRegistry::ace();
    let corpus = fixture_corpus();
    for def in registry.event_types() {
        assert!(
            corpus.iter().flat_map(|r| &r.mentions).any(|m| m.event_type == def.name),
            "no fixture mention of {}",
            def.name
        );
    }
}
