use std::collections::HashSet;

use proptest::prelude::*;
use warmline_core::classifiers::TaskName;
use warmline_core::corpus::Speaker;
use warmline_core::dialogue::{
    handle_rephrase, respond, signal_misread, DialogueContext, FixedClock, RephraseChoice, ReplyGenerator,
};
use warmline_core::synth::{self, MarkerDetectors};
use warmline_core::{Engine, ResponsePools, Result, SentenceKind, Session, SessionState};

struct Parrot;

impl ReplyGenerator for Parrot {
    fn name(&self) -> &str {
        "parrot"
    }

    fn generate(&self, context: &[(Speaker, String)], _seed: u64) -> Result<String> {
        Ok(format!("You said {} words. How does that feel?", context.len()))
    }
}

#[derive(Debug, Clone)]
enum Action {
    Say(String),
    Severe,
    Misread,
    Rephrase,
    Stop,
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        6 => (0u64..1000).prop_map(|s| Action::Say(synth::fuzz_inputs(1, s).remove(0))),
        1 => (0u64..1000).prop_map(|s| Action::Say(format!("plain words {s}"))),
        1 => Just(Action::Severe),
        1 => Just(Action::Misread),
        1 => Just(Action::Rephrase),
        1 => Just(Action::Stop),
    ]
}

fn engine() -> impl Strategy<Value = Engine> {
    prop_oneof![Just(Engine::Baseline), Just(Engine::RuleBased), Just(Engine::Generative)]
}

fn pool_sentences(p: &ResponsePools) -> HashSet<String> {
    let t = &p.templates;
    p.generic_empathy
        .iter()
        .chain(&p.open_questions)
        .chain(p.per_label.values().flatten())
        .chain(&t.escalation)
        .chain(&t.failure)
        .chain(&t.rephrase_prompt)
        .chain(&t.close)
        .chain(std::iter::once(&t.disclaimer))
        .cloned()
        .collect()
}

fn run(engine: Engine, seed: u64, actions: &[Action]) -> Session {
    let pools = ResponsePools::builtin();
    let detectors = MarkerDetectors::default();
    let clock = FixedClock::default();
    let ctx = DialogueContext::new(&detectors, &pools, &clock).with_generator(&Parrot);
    let mut s = Session::new("p", engine, seed, "t0".into());
    for a in actions {
        let _ = match a {
            Action::Say(t) => respond(&mut s, t, &ctx),
            Action::Severe => respond(&mut s, "I feel unsafe", &ctx),
            Action::Misread => signal_misread(&mut s, &ctx),
            Action::Rephrase => handle_rephrase(&mut s, RephraseChoice::Rephrase, &ctx),
            Action::Stop => handle_rephrase(&mut s, RephraseChoice::Stop, &ctx),
        };
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn session_invariants(engine in engine(), seed in any::<u64>(), actions in proptest::collection::vec(action(), 1..14)) {
        let pools = ResponsePools::builtin();
        let known = pool_sentences(&pools);
        let detectors = MarkerDetectors::default();
        let clock = FixedClock::default();
        let ctx = DialogueContext::new(&detectors, &pools, &clock).with_generator(&Parrot);
        let mut s = Session::new("p", engine, seed, "t0".into());
        for a in &actions {
            let before = s.state;
            let severe = matches!(a, Action::Severe);
            let out = match a {
                Action::Say(t) => respond(&mut s, t, &ctx),
                Action::Severe => respond(&mut s, "I feel unsafe", &ctx),
                Action::Misread => signal_misread(&mut s, &ctx),
                Action::Rephrase => handle_rephrase(&mut s, RephraseChoice::Rephrase, &ctx),
                Action::Stop => handle_rephrase(&mut s, RephraseChoice::Stop, &ctx),
            };
            if before == SessionState::Escalated {
                prop_assert!(out.is_err());
                prop_assert_eq!(s.state, SessionState::Escalated);
                continue;
            }
            let Ok(reply) = out else { continue };
            if severe {
                prop_assert!(reply.is_escalation());
                prop_assert_eq!(s.state, SessionState::Escalated);
                prop_assert!(s.flagged);
            }
            let questions = reply.kinds().iter().filter(|k| **k == SentenceKind::OpenQuestion).count();
            if reply.is_escalation() {
                prop_assert_eq!(questions, 0);
            }
            let scripted = engine != Engine::Generative;
            if scripted && matches!(a, Action::Say(_)) && !reply.kinds().contains(&SentenceKind::FailureNotice) {
                prop_assert_eq!(questions, 1);
                prop_assert_eq!(reply.sentences.last().map(|s| s.kind), Some(SentenceKind::OpenQuestion));
            }
            if scripted {
                for sent in &reply.sentences {
                    if sent.kind == SentenceKind::Acknowledgment && sent.text.starts_with("It seems that you are") {
                        continue;
                    }
                    prop_assert!(known.contains(&sent.text), "sentence outside pools: {}", sent.text);
                }
            }
        }
    }

    #[test]
    fn transcripts_are_reproducible(engine in engine(), seed in any::<u64>(), actions in proptest::collection::vec(action(), 1..10)) {
        prop_assert_eq!(run(engine, seed, &actions), run(engine, seed, &actions));
    }

    #[test]
    fn severe_gate_wins_from_any_accepting_state(engine in engine(), seed in any::<u64>(), awaiting in any::<bool>()) {
        let pools = ResponsePools::builtin();
        let detectors = MarkerDetectors::with_fallback(vec![TaskName::Anxiety]);
        let clock = FixedClock::default();
        let ctx = DialogueContext::new(&detectors, &pools, &clock).with_generator(&Parrot);
        let mut s = Session::new("p", engine, seed, "t0".into());
        respond(&mut s, "hello there", &ctx).unwrap();
        if awaiting {
            signal_misread(&mut s, &ctx).unwrap();
            prop_assert_eq!(s.state, SessionState::AwaitingRephrase);
        }
        let reply = respond(&mut s, "i am unsafe tonight", &ctx).unwrap();
        prop_assert!(reply.is_escalation());
        prop_assert_eq!(reply.sentences.len(), pools.templates.escalation.len());
        prop_assert_eq!(s.state, SessionState::Escalated);
    }
}
