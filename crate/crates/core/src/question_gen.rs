//! Question generation data: applicable templates, filled candidates, and the
//! gold question used as the QG target.

use serde::{Deserialize, Serialize};

use crate::corpus::{mark_trigger, EventMention, SentenceRecord};
use crate::example::{ExampleError, ExampleMeta, Seq2SeqExample};
use crate::ontology::{DynamicTemplate, TemplateRegistry};

/// A template with the mention's argument surfaces filled in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateQuestion {
    /// Position of the source template in registry order.
    pub template_index: usize,
    pub slot_count: usize,
    pub text: String,
}

/// Templates whose slot roles all have at least one argument in `mention`,
/// paired with their registry index. The base template is always included.
pub fn applicable_templates<'r>(
    registry: &'r TemplateRegistry,
    mention: &EventMention,
    role: &str,
) -> Result<Vec<(usize, &'r DynamicTemplate)>, ExampleError> {
    let templates = registry.templates_for(&mention.event_type, role)?;
    Ok(templates
        .iter()
        .enumerate()
        .filter(|(_, t)| t.slot_roles.iter().all(|r| mention.has_role(r)))
        .collect())
}

/// Fills each placeholder with the earliest argument of that role.
pub fn fill_template(
    template: &DynamicTemplate,
    template_index: usize,
    mention: &EventMention,
) -> Result<CandidateQuestion, ExampleError> {
    let text = template
        .render_with(|role| mention.first_argument(role).map(|a| a.surface.as_str()))
        .map_err(|role| ExampleError::MissingSlotArgument {
            role,
            template: template.text.clone(),
        })?;
    Ok(CandidateQuestion {
        template_index,
        slot_count: template.slot_roles.len(),
        text,
    })
}

/// All filled candidates for `(mention, role)`, in registry order.
pub fn candidate_questions(
    registry: &TemplateRegistry,
    mention: &EventMention,
    role: &str,
) -> Result<Vec<CandidateQuestion>, ExampleError> {
    applicable_templates(registry, mention, role)?
        .into_iter()
        .map(|(i, t)| fill_template(t, i, mention))
        .collect()
}

/// The candidate with the most filled slots; the earliest one on ties.
///
/// When the mention has no argument for `role` itself, the base template is
/// the gold question.
pub fn select_gold_question(
    registry: &TemplateRegistry,
    mention: &EventMention,
    role: &str,
) -> Result<CandidateQuestion, ExampleError> {
    if !mention.has_role(role) {
        let base = &registry.templates_for(&mention.event_type, role)?[0];
        return fill_template(base, 0, mention);
    }
    let candidates = candidate_questions(registry, mention, role)?;
    let mut best: Option<CandidateQuestion> = None;
    for candidate in candidates {
        // strict `>` keeps the earliest candidate among equals
        if best.as_ref().is_none_or(|b| candidate.slot_count > b.slot_count) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("base template is always applicable"))
}

/// `"role: <role lowercased> context: <sentence with marked trigger>"`.
pub fn qg_input(text: &str, mention: &EventMention, role: &str) -> String {
    format!(
        "role: {} context: {}",
        role.to_lowercase(),
        mark_trigger(text, mention.trigger)
    )
}

pub(crate) fn mention_at(
    record: &SentenceRecord,
    index: usize,
) -> Result<&EventMention, ExampleError> {
    record
        .mentions
        .get(index)
        .ok_or_else(|| ExampleError::NoSuchMention {
            id: record.id.clone(),
            index,
        })
}

/// QG example for one `(mention, role)`, with the gold question as output.
pub fn emit_qg_example(
    registry: &TemplateRegistry,
    record: &SentenceRecord,
    mention_index: usize,
    role: &str,
) -> Result<Seq2SeqExample, ExampleError> {
    let mention = mention_at(record, mention_index)?;
    let gold = select_gold_question(registry, mention, role)?;
    Ok(Seq2SeqExample {
        id: record.id.clone(),
        role: role.to_string(),
        input: qg_input(&record.text, mention, role),
        output: Some(gold.text),
        meta: ExampleMeta {
            event_type: mention.event_type.clone(),
            trigger: mention.trigger,
            mention: mention_index,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ArgumentSpan, Span};

    const FIG1: &str = "That's because coalition fighter jets pummeled this Iraqi position on the hills above Chamchamal and Iraqi troops made a hasty retreat.";

    fn arg(text: &str, surface: &str, role: &str) -> ArgumentSpan {
        let b = text.find(surface).unwrap();
        let start = text[..b].chars().count();
        ArgumentSpan {
            start,
            end: start + surface.chars().count(),
            role: role.into(),
            surface: surface.into(),
        }
    }

    fn fig1() -> SentenceRecord {
        let t = FIG1.find("pummeled").unwrap();
        SentenceRecord {
            id: "fig1".into(),
            text: FIG1.into(),
            mentions: vec![EventMention {
                event_type: "Conflict.Attack".into(),
                trigger: Span::new(t, t + 8),
                trigger_surface: "pummeled".into(),
                arguments: vec![
                    arg(FIG1, "coalition", "Attacker"),
                    arg(FIG1, "jets", "Instrument"),
                    arg(FIG1, "hills", "Place"),
                ],
            }],
        }
    }

    #[test]
    fn four_candidates_without_target() {
        let registry = TemplateRegistry::ace();
        let record = fig1();
        let texts: Vec<String> = candidate_questions(&registry, &record.mentions[0], "Attacker")
            .unwrap()
            .into_iter()
            .map(|c| c.text)
            .collect();
        assert_eq!(
            texts,
            [
                "Who was the attacking agent?",
                "Who used jets in the attack?",
                "Who made the attack in hills?",
                "Who used jets in the attack in hills?",
            ]
        );
    }

    #[test]
    fn no_arguments_leaves_only_base() {
        let registry = TemplateRegistry::ace();
        let mut mention = fig1().mentions.remove(0);
        mention.arguments.clear();
        for role in ["Attacker", "Target", "Instrument", "Place"] {
            let list = applicable_templates(&registry, &mention, role).unwrap();
            assert_eq!(list.len(), 1);
            assert!(list[0].1.is_base());
        }
    }

    #[test]
    fn all_roles_present_gives_all_eight() {
        let registry = TemplateRegistry::ace();
        let mut record = fig1();
        let text = "Rebels pummeled the base with mortars in Herat.";
        record.text = text.into();
        let mention = &mut record.mentions[0];
        mention.arguments = vec![
            arg(text, "Rebels", "Attacker"),
            arg(text, "base", "Target"),
            arg(text, "mortars", "Instrument"),
            arg(text, "Herat", "Place"),
        ];
        assert_eq!(applicable_templates(&registry, mention, "Attacker").unwrap().len(), 8);
        let gold = select_gold_question(&registry, mention, "Attacker").unwrap();
        assert_eq!(gold.text, "Who attacked base using mortars in Herat?");
        assert_eq!(gold.slot_count, 3);
    }

    #[test]
    fn fill_examples() {
        let registry = TemplateRegistry::ace();
        let record = fig1();
        let mention = &record.mentions[0];
        let templates = registry.templates_for("Conflict.Attack", "Attacker").unwrap();
        assert_eq!(fill_template(&templates[6], 6, mention).unwrap().text, "Who used jets in the attack in hills?");
        assert_eq!(fill_template(&templates[2], 2, mention).unwrap().text, "Who used jets in the attack?");
        assert_eq!(fill_template(&templates[0], 0, mention).unwrap().text, "Who was the attacking agent?");
        assert!(matches!(
            fill_template(&templates[1], 1, mention),
            Err(ExampleError::MissingSlotArgument { .. })
        ));
    }

    #[test]
    fn gold_question_selection() {
        let registry = TemplateRegistry::ace();
        let record = fig1();
        let mention = &record.mentions[0];
        assert_eq!(
            select_gold_question(&registry, mention, "Attacker").unwrap().text,
            "Who used jets in the attack in hills?"
        );
        assert_eq!(
            select_gold_question(&registry, mention, "Target").unwrap().text,
            "Who was the target of the attack?"
        );
    }

    #[test]
    fn ties_go_to_earlier_template() {
        // Two 1-slot candidates and no 2-slot one: needs a hand-built entry.
        use crate::ontology::EventTypeDef;
        let t = |slots: &[&str], text: &str| DynamicTemplate {
            event_type: "E".into(),
            target_role: "A".into(),
            slot_roles: slots.iter().map(|s| s.to_string()).collect(),
            text: text.into(),
        };
        let registry = TemplateRegistry::build(
            vec![EventTypeDef {
                name: "E".into(),
                roles: vec!["A".into(), "B".into(), "C".into()],
            }],
            vec![t(&[], "Who?"), t(&["C"], "Who with [C]?"), t(&["B"], "Who by [B]?")],
        )
        .unwrap();
        let text = "x b c";
        let mention = EventMention {
            event_type: "E".into(),
            trigger: Span::new(0, 1),
            trigger_surface: "x".into(),
            arguments: vec![arg(text, "x", "A"), arg(text, "b", "B"), arg(text, "c", "C")],
        };
        let gold = select_gold_question(&registry, &mention, "A").unwrap();
        assert_eq!(gold.template_index, 1);
        assert_eq!(gold.text, "Who with c?");
    }

    #[test]
    fn earliest_argument_fills_multi_argument_slot() {
        let registry = TemplateRegistry::ace();
        let text = "Troops killed a soldier in Basra and a soldier in Mosul.";
        let k = text.find("killed").unwrap();
        let mut mention = EventMention {
            event_type: "Life.Die".into(),
            trigger: Span::new(k, k + 6),
            trigger_surface: "killed".into(),
            arguments: vec![arg(text, "Troops", "Agent"), arg(text, "Basra", "Place"), arg(text, "Mosul", "Place")],
        };
        mention.arguments.sort_by_key(|a| a.start);
        let gold = select_gold_question(&registry, &mention, "Agent").unwrap();
        assert_eq!(gold.text, "Who killed others in Basra?");
    }

    #[test]
    fn qg_example_format() {
        let registry = TemplateRegistry::ace();
        let record = fig1();
        let ex = emit_qg_example(&registry, &record, 0, "Attacker").unwrap();
        assert_eq!(
            ex.input,
            "role: attacker context: That's because coalition fighter jets * pummeled * this Iraqi position on the hills above Chamchamal and Iraqi troops made a hasty retreat."
        );
        assert_eq!(ex.output.as_deref(), Some("Who used jets in the attack in hills?"));

        let place = emit_qg_example(&registry, &record, 0, "Place").unwrap();
        assert!(place.input.starts_with("role: place context:"));

        let target = emit_qg_example(&registry, &record, 0, "Target").unwrap();
        assert_eq!(target.output.as_deref(), Some("Who was the target of the attack?"));

        assert!(matches!(
            emit_qg_example(&registry, &record, 3, "Target"),
            Err(ExampleError::NoSuchMention { .. })
        ));
    }
}
