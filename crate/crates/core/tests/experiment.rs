use std::collections::BTreeMap;

use counterfact::answerer::{flip_distribution, Answerer, Noise, NoiseFamily};
use counterfact::datagen::{Algorithm, Dataset, Extractor, GenConfig, Variant};
use counterfact::experiment::*;
use counterfact::qa::Generator;
use counterfact::scm::{potential_outcomes, Context, Edge, Value};
use counterfact::worlds::{availability_of, derived_plans, load_builtin, BuiltinWorld};
use counterfact::GeneralizationMode::{self, *};

fn e(c: &str, x: &str) -> Edge {
    Edge::new(c, x)
}

#[test]
fn plan_examples() {
    let math = load_builtin(BuiltinWorld::MathDownload);
    let p = plan(&math, Inductive, &PlanOverrides::default()).unwrap();
    assert_eq!(p.train_edges, vec![e("S", "R"), e("R", "T")]);
    assert_eq!(p.test_edge, e("S", "T"));
    assert_eq!(p.train_contexts(), 200);
    let p = plan(&math, DeductiveEffectBased, &PlanOverrides::default()).unwrap();
    assert_eq!((p.train_edges, p.test_edge), (vec![e("S", "T"), e("R", "T")], e("S", "R")));
    let p = plan(&math, DeductiveCauseBased, &PlanOverrides::default()).unwrap();
    assert_eq!((p.train_edges, p.test_edge), (vec![e("S", "T"), e("S", "R")], e("R", "T")));

    let candy = load_builtin(BuiltinWorld::CandyBipartite);
    let p = plan(&candy, CommonEffect, &PlanOverrides::default()).unwrap();
    assert_eq!((p.train_edges, p.test_edge), (vec![e("A", "D")], e("B", "D")));

    let health = load_builtin(BuiltinWorld::Healthcare);
    let err = plan(&health, Inductive, &PlanOverrides::default()).unwrap_err();
    assert!(matches!(err, ExperimentError::UnavailableMode { .. }), "{err}");
    let p = plan(&health, DeductiveCauseBased, &PlanOverrides::default()).unwrap();
    assert_eq!(p.train_contexts(), 400);
}

#[test]
fn overrides_pick_among_plans() {
    let math = load_builtin(BuiltinWorld::MathDownload);
    let pick = |edge: Edge| PlanOverrides {
        test_edge: Some(edge),
        contexts_per_edge: Some(7),
    };
    let p = plan(&math, InDomain, &pick(e("R", "T"))).unwrap();
    assert_eq!((p.train_edges, p.test_edge, p.contexts_per_edge), (vec![e("R", "T")], e("R", "T"), 7));
    let candy = load_builtin(BuiltinWorld::CandyBipartite);
    let p = plan(&candy, InDomain, &pick(e("B", "C"))).unwrap();
    assert_eq!(p.train_edges, vec![e("B", "C")]);
    assert!(matches!(
        plan(&candy, InDomain, &pick(e("C", "A"))),
        Err(ExperimentError::NoPlanForEdge { .. })
    ));
    assert!(matches!(
        plan(&math, Inductive, &pick(e("S", "R"))),
        Err(ExperimentError::NoPlanForEdge { .. })
    ));
}

#[test]
fn plan_agrees_with_availability() {
    for id in BuiltinWorld::ALL {
        let w = load_builtin(id);
        let avail = availability_of(&w);
        for mode in GeneralizationMode::ALL {
            let p = plan(&w, mode, &PlanOverrides::default());
            assert_eq!(p.is_ok(), avail.contains(&mode), "{id} {mode}");
            if let Ok(p) = p {
                if mode == InDomain {
                    assert_eq!(p.train_edges, vec![p.test_edge.clone()]);
                } else {
                    assert!(!p.train_edges.contains(&p.test_edge));
                }
                for edge in p.train_edges.iter().chain([&p.test_edge]) {
                    assert!(w.model.has_edge(edge), "{id}: {edge}");
                }
            }
        }
    }
}

#[test]
fn chain_defaults() {
    let plans = derived_plans(&[e("A", "B"), e("B", "C"), e("A", "C")]);
    let by_mode: BTreeMap<_, Vec<_>> = plans.iter().fold(BTreeMap::new(), |mut m, p| {
        m.entry(p.mode).or_insert_with(Vec::new).push((p.train.clone(), p.test.clone()));
        m
    });
    assert_eq!(by_mode[&Inductive], vec![(vec![e("A", "B"), e("B", "C")], e("A", "C"))]);
    assert_eq!(by_mode[&DeductiveEffectBased], vec![(vec![e("A", "C"), e("B", "C")], e("A", "B"))]);
    assert_eq!(by_mode[&DeductiveCauseBased], vec![(vec![e("A", "C"), e("A", "B")], e("B", "C"))]);
    assert_eq!(by_mode[&InDomain].len(), 3);
    // Shared cause A (two ordered pairs), shared effect C (two ordered pairs).
    assert_eq!(by_mode[&CommonCause].len(), 2);
    assert_eq!(by_mode[&CommonEffect].len(), 2);
    let bare = derived_plans(&[e("A", "B")]);
    assert_eq!(bare.len(), 1);
    assert_eq!(bare[0].mode, InDomain);
}

/// (X, Y, Y_cf) of each listed triple, worked out by hand.
fn hand_units(order: TupleOrder) -> [(bool, bool, bool); 6] {
    let (t, f) = (true, false);
    match order {
        TupleOrder::CauseFirst => [(t, f, f), (t, f, t), (t, t, t), (f, f, f), (f, t, f), (f, t, t)],
        TupleOrder::CauseAbsentFirst => [(t, f, f), (t, t, f), (t, t, t), (f, f, f), (f, f, t), (f, t, t)],
    }
}

#[test]
fn six_tuple_world() {
    for order in TupleOrder::ALL {
        let w = illustrative_world(order);
        let edge = e("X", "Y");
        assert!(w.model.has_edge(&edge));
        let labels = ["x/y'/y'", "x/y'/y", "x/y/y", "x'/y'/y'", "x'/y'/y", "x'/y/y"];
        let mut seen = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let ctx = Context::from_values(i as u64, [("U", Value::Label(l.to_string()))]);
            let u = potential_outcomes(&w.model, &ctx, &edge).unwrap();
            seen.push((u.x, u.y, u.y_cf));
        }
        assert_eq!(seen, hand_units(order));
        assert_eq!(six_tuple_units(order), hand_units(order));
        assert_eq!(seen.iter().filter(|u| u.0).count(), 3);
    }
    // 6000 draws land near 1000 per type.
    let w = illustrative_world(TupleOrder::CauseFirst);
    let mut counts = BTreeMap::new();
    for i in 0..6000 {
        let ctx = counterfact::scm::sample_context(&w.model, 3, i).unwrap();
        *counts.entry(ctx.get("U").unwrap().render(None)).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 6);
    assert!(counts.values().all(|c| (850..1150).contains(c)), "{counts:?}");
}

#[test]
fn true_pn_ps_by_enumeration() {
    // Order (X, Y_x, Y_x'): the only X∧Y unit keeps Y without the cause,
    // and the only ¬X∧¬Y unit stays ¬Y with it.
    let r = &sweep_fig3(&[0.0], &[0.5], TupleOrder::CauseFirst).unwrap()[0];
    assert_eq!((r.pn_true, r.ps_true), (Some(0.0), Some(0.0)));
    let r = &sweep_fig3(&[0.0], &[0.5], TupleOrder::CauseAbsentFirst).unwrap()[0];
    assert_eq!((r.pn_true, r.ps_true), (Some(0.5), Some(0.5)));
}

#[test]
fn flip_distribution_is_a_law() {
    for family in NoiseFamily::ALL {
        for x in [false, true] {
            let n = Noise::new(family, 0.3, 0.7).unwrap();
            let d = flip_distribution(&n, x);
            assert!((d.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
            let (rf, rc) = n.flip_rates(x);
            let marg_f: f64 = d.iter().filter(|((f, _), _)| *f).map(|(_, p)| p).sum();
            let marg_c: f64 = d.iter().filter(|((_, c), _)| *c).map(|(_, p)| p).sum();
            assert!((marg_f - rf).abs() < 1e-12 && (marg_c - rc).abs() < 1e-12);
        }
    }
}

#[test]
fn sweep_properties() {
    let lambdas = default_lambda_grid();
    for order in TupleOrder::ALL {
        let rows = sweep_fig3(&DEFAULT_EPS_LEVELS, &lambdas, order).unwrap();
        assert_eq!(rows.len(), 3 * DEFAULT_EPS_LEVELS.len() * lambdas.len());
        for r in &rows {
            // Half the units have X = true, so every family spends eps on
            // average unless its largest rate is clamped at 1.
            let peak = 2.0 * r.eps * r.lambda.max(1.0 - r.lambda);
            let peak = if r.family == NoiseFamily::FactuallyCorrect { 2.0 * peak } else { peak };
            if peak <= 1.0 {
                assert!((r.avg_er - r.eps).abs() < 1e-12, "{r:?}");
            } else {
                assert!(r.avg_er < r.eps, "{r:?}");
            }
            if r.eps == 0.0 {
                assert_eq!((r.pn_hat, r.ps_hat), (r.pn_true, r.ps_true));
                assert_eq!([r.n_ir, r.s_ir, r.an_ir, r.as_ir], [0.0; 4]);
            }
            if r.family == NoiseFamily::FactuallyCorrect {
                assert_eq!(r.f_er, 0.0);
            }
        }
        let find = |f: NoiseFamily, eps: f64, l: f64| {
            rows.iter().find(|r| r.family == f && r.eps == eps && r.lambda == l).unwrap()
        };
        for &eps in &DEFAULT_EPS_LEVELS[1..] {
            for &l in &lambdas {
                let cc = find(NoiseFamily::CausallyConsistent, eps, l);
                let uc = find(NoiseFamily::UniformlyCorrect, eps, l);
                assert!(cc.n_ir + cc.s_ir < uc.n_ir + uc.s_ir, "{cc:?} {uc:?}");
            }
        }
    }
    assert!(sweep_fig3(&[], &[0.5], TupleOrder::CauseFirst).is_err());
}

#[test]
fn sweep_hand_values() {
    // Order (X, Y_x, Y_x'), eps 0.2, λ = 1: X = true units flip at 0.4,
    // the others never. CC: each X unit leaves or changes its N class
    // exactly when it flips, so N-IR = 3/6 · 0.4. UC: the two ¬Y units
    // mismatch on a factual flip (0.4), the Y unit on either flip (0.64).
    let rows = sweep_fig3(&[0.2], &[1.0], TupleOrder::CauseFirst).unwrap();
    let get = |f| rows.iter().find(|r| r.family == f).unwrap();
    let cc = get(NoiseFamily::CausallyConsistent);
    assert!((cc.n_ir - 0.2).abs() < 1e-12 && cc.s_ir == 0.0);
    let uc = get(NoiseFamily::UniformlyCorrect);
    assert!((uc.n_ir - (0.4 + 0.4 + 0.64) / 6.0).abs() < 1e-12);
    assert!((uc.f_er - 0.2).abs() < 1e-12);
    let fc = get(NoiseFamily::FactuallyCorrect);
    assert!((fc.cf_er - 0.4).abs() < 1e-12);
}

#[test]
fn monte_carlo_matches_closed_form() {
    let n = 1000;
    for order in TupleOrder::ALL {
        let w = illustrative_world(order);
        let p = plan(&w, InDomain, &PlanOverrides::default()).unwrap();
        let units: Vec<_> = six_tuple_units(order).iter().map(|u| (*u, 1.0 / 6.0)).collect();
        for family in NoiseFamily::ALL {
            let noise = Noise::new(family, 0.3, 0.7).unwrap();
            let cf = closed_form(&units, &noise);
            let cfg = EvalConfig {
                n_contexts: n,
                m_samples: 1,
                repeats: 1,
                seed: 5,
                ..EvalConfig::default()
            };
            let ev = evaluate(&w, &p, &Answerer::Simulated(noise), &Extractor::Rule, &cfg, "mc").unwrap();
            let s = &ev.samples[0];
            let pairs = [
                (s.errors.f_er, cf.f_er),
                (s.errors.cf_er, cf.cf_er),
                (s.inconsistency.n_ir, cf.n_ir),
                (s.inconsistency.s_ir, cf.s_ir),
                (s.inconsistency.an_ir, cf.an_ir),
                (s.inconsistency.as_ir, cf.as_ir),
            ];
            for (mc, exact) in pairs {
                let se = (exact * (1.0 - exact) / n as f64).sqrt();
                assert!((mc - exact).abs() <= 3.0 * se, "{order} {family:?}: {mc} vs {exact}");
            }
        }
    }
}

#[test]
fn oracle_evaluation_is_zero() {
    let w = load_builtin(BuiltinWorld::CandyChainNde);
    let p = plan(&w, Inductive, &PlanOverrides::default()).unwrap();
    let cfg = EvalConfig {
        n_contexts: 20,
        m_samples: 3,
        repeats: 5,
        ..EvalConfig::default()
    };
    let ev = evaluate(&w, &p, &Answerer::Oracle, &Extractor::Rule, &cfg, "oracle").unwrap();
    let r = &ev.report;
    for s in [r.f_er, r.cf_er, r.avg_er, r.n_ir, r.s_ir, r.an_ir, r.as_ir, r.avg_ir] {
        assert_eq!((s.mean, s.std, s.count), (0.0, 0.0, 15));
    }
    assert_eq!(r.meta.edge, "A->C");
    assert_eq!(r.meta.mode, "inductive");
    assert!(r.flagged_repeats.is_empty());
    let bad = EvalConfig { repeats: 0, ..cfg };
    assert!(evaluate(&w, &p, &Answerer::Oracle, &Extractor::Rule, &bad, "x").is_err());
}

#[test]
fn evaluation_is_deterministic_under_parallelism() {
    let w = load_builtin(BuiltinWorld::Healthcare);
    let p = plan(&w, CommonCause, &PlanOverrides::default()).unwrap();
    let ans = Answerer::Simulated(Noise::new(NoiseFamily::UniformlyCorrect, 0.3, 0.5).unwrap());
    let mut cfg = EvalConfig {
        n_contexts: 30,
        m_samples: 4,
        repeats: 2,
        seed: 9,
        ..EvalConfig::default()
    };
    let a = evaluate(&w, &p, &ans, &Extractor::Rule, &cfg, "uc").unwrap();
    cfg.parallelism = 8;
    let b = evaluate(&w, &p, &ans, &Extractor::Rule, &cfg, "uc").unwrap();
    assert_eq!(a, b);
    assert!(a.report.avg_er.mean > 0.0);
    cfg.seed = 10;
    assert_ne!(evaluate(&w, &p, &ans, &Extractor::Rule, &cfg, "uc").unwrap().samples, a.samples);
}

#[test]
fn plan_data_covers_every_train_edge() {
    let w = load_builtin(BuiltinWorld::Healthcare);
    let p = plan(&w, DeductiveCauseBased, &PlanOverrides { contexts_per_edge: Some(5), ..Default::default() }).unwrap();
    let cfg = GenConfig {
        variant: Variant::FAndCf,
        ..GenConfig::default()
    };
    let data = plan_dataset(&w, &p, &cfg, Algorithm::Sft, &Answerer::Oracle, &Extractor::Rule, Generator::Template).unwrap();
    let Dataset::Sft(recs) = data else { panic!() };
    assert_eq!(recs.len(), 4 * 5 * 2);
    let edges: std::collections::BTreeSet<_> = recs.iter().map(|r| r.meta.edge.clone()).collect();
    assert_eq!(edges.len(), 4);
    assert!(recs.iter().all(|r| r.meta.mode.as_deref() == Some("deductive-cause")));
}

#[test]
fn sweep_csv_columns() {
    let rows = sweep_fig3(&[0.1], &[0.5], TupleOrder::CauseFirst).unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(
        "order,family,eps,lambda,f_er,cf_er,avg_er,pn_hat,ps_hat,pn_true,ps_true,n_ir,s_ir,an_ir,as_ir\n"
    ));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn run_config_defaults_and_rejects_unknown_keys() {
    let c: RunConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!((c.eval.n_contexts, c.eval.m_samples, c.eval.repeats), (100, 10, 5));
    assert!(serde_json::from_str::<RunConfig>(r#"{"eval": {"nope": 1}}"#).is_err());
    let c: RunConfig = serde_json::from_str(
        r#"{"answerer": {"kind": "uniformly-correct", "eps": 0.3, "split": 0.5}, "eval": {"repeats": 2}}"#,
    )
    .unwrap();
    assert_eq!(c.eval.repeats, 2);
    assert!(c.answerer.is_some());
}
