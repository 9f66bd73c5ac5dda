//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

mod common;

use std::time::{Duration, Instant};

use common::{candy_counts, candy_truth};
use counterfact::answerer::{Answerer, Message, Noise, NoiseFamily};
use counterfact::datagen::{
    gen_preference_ccf, gen_preference_cf, generate_dataset, write_dataset, Algorithm, Extractor,
    GenConfig, PreferenceRecord, Variant,
};
use counterfact::experiment::{
    closed_form, evaluate, illustrative_world, plan, six_tuple_units, sweep_fig3, EvalConfig,
    PlanOverrides, TupleOrder,
};
use counterfact::metrics::{
    ccf_reward, classify, inconsistency_rates, pn_ps, write_report_csv, Class, Relation, UnitEval,
};
use counterfact::qa::{extract_rule, Generator};
use counterfact::scm::{evaluate as eval_scm, potential_outcomes, sample_context, Context, Edge, Value};
use counterfact::worlds::{availability_of, load_builtin, BuiltinWorld};
use counterfact::GeneralizationMode;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn timed(limit: Duration, start: Instant) -> Result<String, String> {
    let t = start.elapsed();
    check(t < limit, format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(format!("{t:.2?}"))
}

fn h(s: &str) -> Option<bool> {
    extract_rule(s).map(|a| a.value.as_bool())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cfg = EvalConfig {
        seed: 1,
        parallelism: 4,
        ..EvalConfig::default()
    };
    for id in BuiltinWorld::ALL {
        let w = load_builtin(id);
        let p = plan(&w, GeneralizationMode::InDomain, &PlanOverrides::default()).map_err(|e| e.to_string())?;
        let ev = evaluate(&w, &p, &Answerer::Oracle, &Extractor::Rule, &cfg, "oracle").map_err(|e| e.to_string())?;
        let r = &ev.report;
        for (name, s) in [
            ("F-ER", r.f_er),
            ("CF-ER", r.cf_er),
            ("N-IR", r.n_ir),
            ("S-IR", r.s_ir),
            ("AN-IR", r.an_ir),
            ("AS-IR", r.as_ir),
        ] {
            check(s.mean == 0.0 && s.std == 0.0, format!("{id}: {name} = {}", s.mean))?;
            check(s.count == 50, format!("{id}: count {}", s.count))?;
        }
    }
    let t = timed(Duration::from_secs(30), start)?;
    Ok(format!("six worlds, 100 contexts x 10 samples x 5 repeats, all rates 0 ({t})"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let names = ["A", "B", "C", "D"];
    let edges = [(0, 2), (0, 3), (1, 2), (1, 3)];
    let mut checked = 0;
    for na in 1..=12i64 {
        for nb in 1..=12i64 {
            for nc in 1..=12i64 {
                for nd in 1..=12i64 {
                    let n = [na, nb, nc, nd];
                    let ctx = Context::from_values(
                        checked,
                        [("N_A", na), ("N_B", nb), ("N_C", nc), ("N_D", nd)].map(|(k, v)| (k, Value::Int(v))),
                    );
                    let val = eval_scm(&w.model, &ctx).map_err(|e| e.to_string())?;
                    let hand = candy_truth(n, None, None);
                    for (k, name) in names.iter().enumerate() {
                        check(val.bool(name) == Some(hand[k]), format!("{n:?}: {name}"))?;
                    }
                    for (c, e) in edges {
                        let edge = Edge::new(names[c], names[e]);
                        let u = potential_outcomes(&w.model, &ctx, &edge).map_err(|e| e.to_string())?;
                        let force = !hand[c];
                        let cf = if c == 0 {
                            candy_truth(n, Some(force), None)
                        } else {
                            candy_truth(n, None, Some(force))
                        };
                        check(
                            (u.x, u.y, u.y_cf) == (hand[c], hand[e], cf[e]),
                            format!("{n:?}: edge {edge}"),
                        )?;
                    }
                    checked += 1;
                }
            }
        }
    }
    check(checked == 20_736, format!("{checked} contexts"))?;
    let t = timed(Duration::from_secs(5), start)?;
    Ok(format!("{checked} contexts, 4 variables and 4 edges match ({t})"))
}

fn criterion_3() -> Outcome {
    for bits in 0..32u8 {
        let b = |i: u8| bits >> i & 1 == 1;
        let (x, y, y_cf, yh, ych) = (b(0), b(1), b(2), b(3), b(4));
        let r = ccf_reward(x, y, y_cf, yh, ych);
        let closed = 2 + u8::from(yh == y) + u8::from(yh == y && ych == y_cf);
        check(r == closed, format!("row {bits}: R = {r}, closed form {closed}"))?;
        let live = Relation::ALL
            .iter()
            .filter(|rel| classify(**rel, x, y, y_cf) != Class::Irrelevant)
            .count();
        check(live == 1, format!("row {bits}: {live} live relations"))?;
    }
    Ok("32 rows: reward identity and partition hold".into())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let eps: Vec<f64> = (0..=8).map(|i| f64::from(i) * 0.05).collect();
    let lambdas: Vec<f64> = (0..=20).map(|i| f64::from(i) * 0.05).collect();
    for order in TupleOrder::ALL {
        let rows = sweep_fig3(&eps, &lambdas, order).map_err(|e| e.to_string())?;
        for r in rows.iter().filter(|r| r.family == NoiseFamily::FactuallyCorrect) {
            check(r.f_er == 0.0, format!("(a) {order}: F-ER {} at {}/{}", r.f_er, r.eps, r.lambda))?;
        }
        for cc in rows.iter().filter(|r| r.family == NoiseFamily::CausallyConsistent && r.eps > 0.0) {
            let uc = rows
                .iter()
                .find(|u| u.family == NoiseFamily::UniformlyCorrect && u.eps == cc.eps && u.lambda == cc.lambda)
                .ok_or("missing row")?;
            check(
                (cc.avg_er - uc.avg_er).abs() < 1e-12,
                format!("(b) {order}: Avg-ER not matched at {}/{}", cc.eps, cc.lambda),
            )?;
            check(
                cc.n_ir + cc.s_ir < uc.n_ir + uc.s_ir,
                format!("(b) {order}: CC {} vs UC {} at {}/{}", cc.n_ir + cc.s_ir, uc.n_ir + uc.s_ir, cc.eps, cc.lambda),
            )?;
        }
        // (c) Monte Carlo at n = 10^4.
        let w = illustrative_world(order);
        let p = plan(&w, GeneralizationMode::InDomain, &PlanOverrides::default()).map_err(|e| e.to_string())?;
        let units: Vec<_> = six_tuple_units(order).iter().map(|u| (*u, 1.0 / 6.0)).collect();
        let n = 10_000usize;
        for family in NoiseFamily::ALL {
            let (e, l) = (0.3, 0.25);
            let noise = Noise::new(family, e, l).map_err(|e| e.to_string())?;
            let exact = closed_form(&units, &noise);
            let cfg = EvalConfig {
                n_contexts: n,
                m_samples: 1,
                repeats: 1,
                seed: 2024,
                parallelism: 4,
                ..EvalConfig::default()
            };
            let ev = evaluate(&w, &p, &Answerer::Simulated(noise), &Extractor::Rule, &cfg, "mc")
                .map_err(|e| e.to_string())?;
            let s = &ev.samples[0];
            let rates = [
                ("F-ER", s.errors.f_er, exact.f_er),
                ("CF-ER", s.errors.cf_er, exact.cf_er),
                ("N-IR", s.inconsistency.n_ir, exact.n_ir),
                ("S-IR", s.inconsistency.s_ir, exact.s_ir),
                ("AN-IR", s.inconsistency.an_ir, exact.an_ir),
                ("AS-IR", s.inconsistency.as_ir, exact.as_ir),
            ];
            for (name, mc, p) in rates {
                let se = (p * (1.0 - p) / n as f64).sqrt();
                check(
                    (mc - p).abs() <= 3.0 * se,
                    format!("(c) {order} {family:?} {e}/{l}: {name} {mc} vs {p}"),
                )?;
            }
        }
    }
    let t = timed(Duration::from_secs(10), start)?;
    Ok(format!("both orders: FC F-ER = 0, CC below UC at every eps > 0, Monte Carlo within 3 SE ({t})"))
}

fn criterion_5() -> Outcome {
    let w = load_builtin(BuiltinWorld::MathDownload);
    let mut answerers = vec![Answerer::Oracle];
    for family in NoiseFamily::ALL {
        for split in [0.0, 0.5, 1.0] {
            answerers.push(Answerer::Simulated(Noise::new(family, 0.3, split).map_err(|e| e.to_string())?));
        }
    }
    let mut free = 0.0f64;
    for edge in [Edge::new("S", "T"), Edge::new("S", "R")] {
        let over = PlanOverrides {
            test_edge: Some(edge.clone()),
            contexts_per_edge: None,
        };
        let p = plan(&w, GeneralizationMode::InDomain, &over).map_err(|e| e.to_string())?;
        for a in &answerers {
            let cfg = EvalConfig {
                n_contexts: 200,
                m_samples: 3,
                repeats: 2,
                seed: 5,
                ..EvalConfig::default()
            };
            let ev = evaluate(&w, &p, a, &Extractor::Rule, &cfg, "x").map_err(|e| e.to_string())?;
            for s in &ev.samples {
                check(
                    s.inconsistency.n_ir == 0.0 && s.inconsistency.as_ir == 0.0,
                    format!("{edge} {a:?}: N-IR {} AS-IR {}", s.inconsistency.n_ir, s.inconsistency.as_ir),
                )?;
                free = free.max(s.inconsistency.an_ir + s.inconsistency.s_ir);
            }
        }
    }
    check(free > 0.0, "noisy answerers never moved AN-IR or S-IR")?;
    Ok(format!("S->T and S->R: N-IR = AS-IR = 0 for oracle and 9 noisy answerers (max AN-IR + S-IR {free:.3})"))
}

fn criterion_6() -> Outcome {
    let w = load_builtin(BuiltinWorld::Healthcare);
    let mut lum_a = 0;
    for i in 0..10_000u64 {
        let ctx = sample_context(&w.model, 77, i).map_err(|e| e.to_string())?;
        // Luminal A: hormone receptors positive, HER2 negative.
        if ctx.get("H") != Some(&Value::Label("pos-neg".into())) {
            continue;
        }
        lum_a += 1;
        let v = eval_scm(&w.model, &ctx).map_err(|e| e.to_string())?;
        check(
            v.bool("surgery") == Some(true) && v.bool("therapy") == Some(false),
            format!("context {i}: surgery {:?}, therapy {:?}", v.bool("surgery"), v.bool("therapy")),
        )?;
    }
    check(lum_a > 4_000, format!("only {lum_a} Luminal A contexts"))?;
    Ok(format!("{lum_a} Luminal A contexts of 10000: surgery and no therapy"))
}

fn candy_unit(narrative: &str, edge: (usize, usize)) -> (bool, bool, bool) {
    let n = candy_counts(narrative);
    let f = candy_truth(n, None, None);
    let force = !f[edge.0];
    let cf = if edge.0 == 0 {
        candy_truth(n, Some(force), None)
    } else {
        candy_truth(n, None, Some(force))
    };
    (f[edge.0], f[edge.1], cf[edge.1])
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let noisy = Answerer::Simulated(Noise::new(NoiseFamily::UniformlyCorrect, 0.3, 0.5).map_err(|e| e.to_string())?);
    let cfg = GenConfig {
        n_contexts: 20,
        m_samples: 10,
        variant: Variant::FAndCf,
        seed: 3,
        ..GenConfig::default()
    };
    let (mut n2, mut n3) = (0, 0);
    let names = ["A", "B", "C", "D"];
    for (c, e) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        let edge = Edge::new(names[c], names[e]);
        for r in gen_preference_cf(&w, &edge, &cfg, &noisy, &Extractor::Rule).map_err(|e| e.to_string())? {
            let PreferenceRecord::Text(r) = r else { return Err("text record expected".into()) };
            let (_, y, y_cf) = candy_unit(&r.prompt, (c, e));
            let truth = if r.meta.kind == "factual" { y } else { y_cf };
            check(
                h(&r.chosen) == Some(truth) && h(&r.rejected) != Some(truth),
                format!("preference record on {edge}, context {}", r.meta.context_id),
            )?;
            n2 += 1;
        }
        for r in gen_preference_ccf(&w, &edge, &cfg, &noisy, &Extractor::Rule).map_err(|e| e.to_string())? {
            let PreferenceRecord::Dialogue(r) = r else { return Err("dialogue record expected".into()) };
            let (x, y, y_cf) = candy_unit(&r.messages_prefix[0].content, (c, e));
            let score = |m: &[Message]| {
                let yh = h(&m[0].content).unwrap_or(!y);
                let ych = h(&m[2].content).unwrap_or(!y_cf);
                ccf_reward(x, y, y_cf, yh, ych)
            };
            check(
                score(&r.chosen_messages) > score(&r.rejected_messages),
                format!("dialogue record on {edge}, context {}", r.meta.context_id),
            )?;
            n3 += 1;
        }
    }
    check(n2 > 0 && n3 > 0, "noisy answerer produced no records")?;
    for id in BuiltinWorld::ALL {
        let w = load_builtin(id);
        let p = plan(&w, GeneralizationMode::InDomain, &PlanOverrides::default()).map_err(|e| e.to_string())?;
        let edge = &p.test_edge;
        let a = gen_preference_cf(&w, edge, &cfg, &Answerer::Oracle, &Extractor::Rule).map_err(|e| e.to_string())?;
        let b = gen_preference_ccf(&w, edge, &cfg, &Answerer::Oracle, &Extractor::Rule).map_err(|e| e.to_string())?;
        check(a.is_empty() && b.is_empty(), format!("{id}: oracle produced records"))?;
    }
    let t = timed(Duration::from_secs(10), start)?;
    Ok(format!("{n2} preference and {n3} dialogue records sound; oracle datasets empty on six worlds ({t})"))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let w = load_builtin(BuiltinWorld::Healthcare);
    let noisy = Answerer::Simulated(Noise::new(NoiseFamily::CausallyConsistent, 0.25, 0.4).map_err(|e| e.to_string())?);
    let edge = Edge::new("N", "therapy");
    let mut files = Vec::new();
    for (k, parallelism) in [1, 1, 8].into_iter().enumerate() {
        let mut gen_bytes = Vec::new();
        for alg in [Algorithm::Sft, Algorithm::Dpo, Algorithm::Ccf] {
            let cfg = GenConfig {
                n_contexts: 25,
                m_samples: 4,
                seed: 99,
                parallelism,
                ..GenConfig::default()
            };
            let data = generate_dataset(&w, &edge, &cfg, alg, &noisy, &Extractor::Rule, Generator::Template)
                .map_err(|e| e.to_string())?;
            let path = dir.path().join(format!("{alg:?}-{k}.jsonl"));
            write_dataset(&data, &path).map_err(|e| e.to_string())?;
            gen_bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        let p = plan(&w, GeneralizationMode::CommonCause, &PlanOverrides::default()).map_err(|e| e.to_string())?;
        let cfg = EvalConfig {
            n_contexts: 40,
            m_samples: 3,
            repeats: 2,
            seed: 99,
            parallelism,
            ..EvalConfig::default()
        };
        let ev = evaluate(&w, &p, &noisy, &Extractor::Rule, &cfg, "cc").map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        write_report_csv(&[ev.report], &mut csv).map_err(|e| e.to_string())?;
        gen_bytes.push(csv);
        files.push(gen_bytes);
    }
    check(files[0].iter().all(|f| !f.is_empty()), "an output was empty")?;
    check(files[0] == files[1], "two sequential runs differ")?;
    check(files[0] == files[2], "parallel 8 run differs")?;
    Ok("sft, dpo, ccf datasets and eval report byte-identical across runs and at parallelism 8".into())
}

fn criterion_9() -> Outcome {
    let mut runs = 0;
    // Errs only on X = false units, which never enter the necessity cell.
    let off_cell = Answerer::Simulated(Noise::new(NoiseFamily::UniformlyCorrect, 0.3, 0.0).map_err(|e| e.to_string())?);
    let mut erred = false;
    for id in BuiltinWorld::ALL {
        let w = load_builtin(id);
        for mode in availability_of(&w) {
            let p = plan(&w, mode, &PlanOverrides::default()).map_err(|e| e.to_string())?;
            for a in [&Answerer::Oracle, &off_cell] {
                let cfg = EvalConfig {
                    n_contexts: 60,
                    m_samples: 2,
                    repeats: 2,
                    seed: 8,
                    ..EvalConfig::default()
                };
                let ev = evaluate(&w, &p, a, &Extractor::Rule, &cfg, "x").map_err(|e| e.to_string())?;
                for s in &ev.samples {
                    erred |= s.errors.avg_er > 0.0;
                    if s.inconsistency.n_ir == 0.0 {
                        check(s.pn_hat == s.pn_true, format!("{id} {mode}: {:?} vs {:?}", s.pn_hat, s.pn_true))?;
                        runs += 1;
                    }
                }
            }
        }
    }
    check(erred, "constructed answerer never erred")?;
    // Hand-built estimates on candy A->D: wrong counterfactuals on X ∧ ¬Y
    // units and both answers wrong on ¬X units.
    let w = load_builtin(BuiltinWorld::CandyBipartite);
    let edge = Edge::new("A", "D");
    let mut units = Vec::new();
    for i in 0..2_000u64 {
        let ctx = sample_context(&w.model, 12, i).map_err(|e| e.to_string())?;
        let o = potential_outcomes(&w.model, &ctx, &edge).map_err(|e| e.to_string())?;
        let (yh, ych) = match (o.x, o.y) {
            (true, true) => (o.y, o.y_cf),
            (true, false) => (o.y, !o.y_cf),
            (false, _) => (!o.y, !o.y_cf),
        };
        units.push(UnitEval {
            outcome: o,
            y_hat: Some(yh),
            y_cf_hat: Some(ych),
            sample_index: 0,
        });
    }
    let ir = inconsistency_rates(&units).map_err(|e| e.to_string())?;
    check(ir.n_ir == 0.0 && ir.avg_ir > 0.0, format!("hand-built: N-IR {} Avg-IR {}", ir.n_ir, ir.avg_ir))?;
    check(pn_ps(&units, true).0 == pn_ps(&units, false).0, "hand-built: PN differs")?;
    Ok(format!("{runs} samples with N-IR = 0 plus a hand-built run: estimated PN equals true PN"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle zero", criterion_1),
        ("brute-force equivalence", criterion_2),
        ("metric identity", criterion_3),
        ("noisy-answerer sweep", criterion_4),
        ("math zero pattern", criterion_5),
        ("Luminal A invariant", criterion_6),
        ("dataset soundness", criterion_7),
        ("determinism", criterion_8),
        ("N-IR = 0 pins PN", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
