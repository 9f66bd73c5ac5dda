mod common;

use std::collections::HashMap;

use common::{chat_reply, Fixed, Stub};
use counterfact::answerer::{HttpClient, Sampling};
use counterfact::qa::{
    extract_remote, extract_rule, generate_answer, render_factual, render_interventional,
    render_unit, Generator, Part, Polarity, QaError, QuestionKind, Source, Template,
};
use counterfact::scm::{evaluate, sample_context, Context, Value};
use counterfact::worlds::{load_builtin, BuiltinWorld};

fn candy_ctx(v: [i64; 4]) -> Context {
    Context::from_values(
        7,
        ["N_A", "N_B", "N_C", "N_D"].into_iter().zip(v.map(Value::Int)),
    )
}

#[test]
fn candy_factual_text() {
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let q = render_factual(&w, &candy_ctx([5, 7, 1, 1]), "D").unwrap();
    assert!(q.text.starts_with("Anna, Bill, Cory, and Dave are going to a party"));
    assert!(q
        .text
        .ends_with("Anna gets 5, Bill gets 7, Cory gets 1, and Dave gets 1. Is Dave happy? Be as concise as possible."));
    assert_eq!(q.question, "Is Dave happy? Be as concise as possible.");
    assert_eq!(q.kind, QuestionKind::Factual);
    assert_eq!(q.context_id, 7);
    assert!(q.provenance.as_ref().unwrap().truth);
    assert!(!q.text.contains('{'));
}

#[test]
fn candy_interventional_text() {
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let q = render_interventional(&w, &candy_ctx([5, 7, 1, 1]), "A", false, "D").unwrap();
    assert!(q.text.contains(
        "Dave gets 1. Now, suppose that Anna is not happy regardless of the candy distribution. With this assumption, is Dave happy?"
    ));
    assert_eq!((q.cause.as_deref(), q.forced), (Some("A"), Some(false)));
    assert!(!q.provenance.unwrap().truth);
}

#[test]
fn healthcare_and_math_texts() {
    let w = load_builtin(BuiltinWorld::Healthcare);
    let ctx = Context::from_values(
        0,
        [
            ("H", Value::Label("pos-neg".into())),
            ("T_cm", Value::Real(2.5)),
            ("N_draw", Value::Bool(false)),
        ],
    );
    let q = render_factual(&w, &ctx, "surgery").unwrap();
    assert!(q
        .text
        .contains("Jane is ERPR positive and HER2 negative. Her tumor is 2.5 cm and there is no nodal involvement."));
    let q = render_interventional(&w, &ctx, "T", true, "therapy").unwrap();
    assert!(q
        .text
        .ends_with("If the tumor had been larger than 1 cm, would she have undergone therapy? Be as concise as possible."));

    let m = load_builtin(BuiltinWorld::MathDownload);
    let ctx = Context::from_values(0, [("N_size", Value::Int(100)), ("N_minutes", Value::Int(20))]);
    let q = render_interventional(&m, &ctx, "S", true, "T").unwrap();
    assert!(q.text.starts_with("Carla is downloading a 100 GB file."));
    assert!(q.text.contains("which takes 20 minutes."));
    assert!(q.question.starts_with(
        "If she were downloading a file twice the size, would the download have taken longer than 120 minutes?"
    ));
    assert!(q.provenance.unwrap().truth);
}

#[test]
fn missing_template_and_unresolved_placeholder() {
    let mut w = load_builtin(BuiltinWorld::CandyBipartite);
    let ctx = candy_ctx([1, 1, 1, 1]);
    assert_eq!(
        render_factual(&w, &ctx, "A").unwrap_err(),
        QaError::MissingFactual("A".into())
    );
    assert!(matches!(
        render_interventional(&w, &ctx, "C", true, "D"),
        Err(QaError::MissingInterventional(..))
    ));
    w.templates.factual.insert(
        "D".into(),
        Template {
            parts: vec![Part::Text("How many for ".into()), Part::Slot("N_Q".into())],
        },
    );
    let err = render_factual(&w, &ctx, "D").unwrap_err();
    assert_eq!(err, QaError::Unresolved("N_Q".into()));
    assert!(err.to_string().contains("{N_Q}"));
}

#[test]
fn template_answers_round_trip_on_every_edge() {
    for id in BuiltinWorld::ALL {
        let w = load_builtin(id);
        for edge in w.model.edges() {
            for i in 0..5 {
                let ctx = sample_context(&w.model, 1, i).unwrap();
                let u = render_unit(&w, &ctx, edge).unwrap();
                for q in [&u.factual, &u.counterfactual] {
                    assert!(!q.text.contains('{') && !q.text.contains('}'), "{}", q.text);
                    for truth in [true, false] {
                        let a = generate_answer(q, truth, Generator::Template).unwrap();
                        assert_eq!(extract_rule(&a).unwrap().value.as_bool(), truth, "{a}");
                    }
                }
                assert_eq!(u.factual.provenance.as_ref().unwrap().truth, u.unit.y);
                assert_eq!(u.counterfactual.provenance.as_ref().unwrap().truth, u.unit.y_cf);
            }
        }
    }
}

#[test]
fn template_answer_examples() {
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let ctx = candy_ctx([5, 7, 1, 1]);
    let f = render_factual(&w, &ctx, "D").unwrap();
    assert_eq!(generate_answer(&f, true, Generator::Template).unwrap(), "Yes, Dave is happy.");
    let cf = render_interventional(&w, &ctx, "A", false, "D").unwrap();
    assert_eq!(
        generate_answer(&cf, false, Generator::Template).unwrap(),
        "No, Dave would not have been happy."
    );
}

#[test]
fn rendering_separates_observably_different_contexts() {
    for id in BuiltinWorld::ALL {
        let w = load_builtin(id);
        let effect = w.model.edges()[0].effect.clone();
        let mut seen: HashMap<String, Context> = HashMap::new();
        for i in 0..400 {
            let ctx = sample_context(&w.model, 77, i).unwrap();
            let text = render_factual(&w, &ctx, &effect).unwrap().text;
            if let Some(prev) = seen.get(&text) {
                // Equal texts only for contexts the narrative cannot tell
                // apart: same endogenous state, and for worlds whose draws
                // are all printed, the same draws.
                let a = evaluate(&w.model, prev).unwrap().endogenous(&w.model);
                let b = evaluate(&w.model, &ctx).unwrap().endogenous(&w.model);
                assert_eq!(a, b, "{id}");
                if matches!(
                    id,
                    BuiltinWorld::CandyBipartite
                        | BuiltinWorld::CandyChainNde
                        | BuiltinWorld::CandyChainWde
                        | BuiltinWorld::MathDownload
                ) {
                    assert_eq!(prev.values, ctx.values, "{id}");
                }
            } else {
                seen.insert(text, ctx);
            }
        }
    }
}

#[test]
fn remote_extractor_against_stub() {
    let stub = Stub::start(|body| {
        let reply = if body.contains("Answer: 'Yes, he is'") {
            "POSITIVE"
        } else if body.contains("Answer: 'No'") {
            "NEGATIVE"
        } else {
            "MAYBE"
        };
        (200, chat_reply(reply))
    });
    let client = HttpClient::new(stub.config()).unwrap();
    let a = extract_remote("Yes, he is", "Is Dave happy?", &client).unwrap();
    assert_eq!((a.value, a.source), (Polarity::Positive, Source::Remote));
    let a = extract_remote("No", "Is Dave happy?", &client).unwrap();
    assert_eq!(a.value, Polarity::Negative);
    assert!(matches!(
        extract_remote("Perhaps", "Is Dave happy?", &client),
        Err(QaError::Extraction(_))
    ));
    let bodies = stub.bodies.lock().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    let prompt = sent["messages"][0]["content"].as_str().unwrap();
    assert!(prompt.starts_with("I will give you a question and its answer."));
    assert!(prompt.ends_with(
        "Question: 'Is Dave happy?' Answer: 'Yes, he is' Is the meaning 'POSITIVE' or 'NEGATIVE'?"
    ));
}

#[test]
fn remote_generator() {
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let q = render_factual(&w, &candy_ctx([5, 7, 1, 1]), "D").unwrap();
    let echo = Fixed("Yes, because Anna and Bill are both happy.");
    let s = Sampling::default();
    assert_eq!(
        generate_answer(&q, true, Generator::Remote(&echo, s)).unwrap(),
        "Yes, because Anna and Bill are both happy."
    );
    assert!(matches!(
        generate_answer(&q, false, Generator::Remote(&echo, s)),
        Err(QaError::Generation { .. })
    ));
    let vague = Fixed("Hard to say.");
    assert!(generate_answer(&q, true, Generator::Remote(&vague, s)).is_err());
}
