//! Structural causal models over boolean endogenous variables.
//!
//! A [`CausalModel`] is an ordered list of declarations: exogenous variables
//! with distributions, boolean endogenous equations, and derived numeric
//! quantities. Because all randomness lives in the exogenous context,
//! counterfactuals are exact re-evaluations of the same [`Context`] under
//! do-interventions.

mod eval;
mod expr;
mod model;
mod value;

pub use eval::{
    context_key, evaluate, evaluate_under, potential_outcomes, sample_context,
    sample_context_with, sample_contexts, Context, Intervention, ScmError, UnitOutcome,
    Valuation,
};
pub use expr::{quote, BinaryOp, Expr, ExprError, UnaryOp};
pub use model::{CausalModel, DefinitionError, Dist, Edge, ExogenousSpec, Node, DEFAULT_DECIMALS};
pub use value::{Type, Value};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ge(var: &str, k: i64) -> Expr {
        Expr::bin(BinaryOp::Ge, Expr::var(var), Expr::Int(k))
    }

    fn and_or(a: &str, b: &str, n: &str, k: i64) -> Expr {
        Expr::bin(
            BinaryOp::Or,
            Expr::bin(BinaryOp::And, Expr::var(a), Expr::var(b)),
            ge(n, k),
        )
    }

    fn candy() -> CausalModel {
        let exo = |n: &str| {
            Node::Exo(ExogenousSpec {
                name: n.into(),
                dist: Dist::UniformInt { lo: 1, hi: 12 },
            })
        };
        let var = |n: &str, expr| Node::Var {
            name: n.into(),
            expr,
        };
        CausalModel::new(
            "candy",
            vec![
                exo("N_A"),
                exo("N_B"),
                exo("N_C"),
                exo("N_D"),
                var("A", ge("N_A", 4)),
                var("B", ge("N_B", 6)),
                var("C", and_or("A", "B", "N_C", 8)),
                var("D", and_or("A", "B", "N_D", 10)),
            ],
            vec![
                Edge::new("A", "C"),
                Edge::new("A", "D"),
                Edge::new("B", "C"),
                Edge::new("B", "D"),
            ],
        )
        .unwrap()
    }

    fn ctx(v: [i64; 4]) -> Context {
        Context::from_values(
            0,
            ["N_A", "N_B", "N_C", "N_D"]
                .into_iter()
                .zip(v.map(Value::Int)),
        )
    }

    #[test]
    fn candy_factual_evaluations() {
        let m = candy();
        let all = evaluate(&m, &ctx([5, 7, 1, 1])).unwrap().endogenous(&m);
        assert!(all.values().all(|b| *b));
        let none = evaluate(&m, &ctx([3, 5, 2, 2])).unwrap().endogenous(&m);
        assert!(none.values().all(|b| !*b));
    }

    #[test]
    fn intervention_overrides_equation() {
        let m = candy();
        let v = evaluate_under(&m, &ctx([3, 5, 2, 11]), &[Intervention::new("A", true)]).unwrap();
        assert_eq!(v.bool("A"), Some(true));
        assert_eq!(v.bool("D"), Some(true));
    }

    #[test]
    fn potential_outcomes_candy_a_to_d() {
        let m = candy();
        let u = potential_outcomes(&m, &ctx([5, 7, 1, 1]), &Edge::new("A", "D")).unwrap();
        assert_eq!((u.x, u.y, u.y_cf), (true, true, false));
    }

    #[test]
    fn usage_errors() {
        let m = candy();
        let c = ctx([1, 1, 1, 1]);
        assert_eq!(
            evaluate_under(&m, &c, &[Intervention::new("A", true), Intervention::new("A", false)]),
            Err(ScmError::DuplicateIntervention("A".into()))
        );
        assert_eq!(
            evaluate_under(&m, &c, &[Intervention::new("N_A", true)]),
            Err(ScmError::NotEndogenous("N_A".into()))
        );
        assert!(matches!(
            potential_outcomes(&m, &c, &Edge::new("C", "D")),
            Err(ScmError::UndeclaredEdge(_))
        ));
        let mut short = c.clone();
        short.values.remove("N_D");
        assert!(matches!(evaluate(&m, &short), Err(ScmError::ContextMismatch(_))));
    }

    #[test]
    fn validate_reports_order_and_distribution_errors() {
        let errs = CausalModel::new(
            "bad",
            vec![
                Node::Var {
                    name: "A".into(),
                    expr: Expr::var("B"),
                },
                Node::Var {
                    name: "B".into(),
                    expr: Expr::Bool(true),
                },
                Node::Exo(ExogenousSpec {
                    name: "K".into(),
                    dist: Dist::Categorical(vec![("a".into(), 0.5), ("b".into(), 0.4)]),
                }),
            ],
            vec![],
        )
        .unwrap_err();
        assert!(errs.contains(&DefinitionError::Order {
            var: "A".into(),
            referenced: "B".into()
        }));
        assert!(errs
            .iter()
            .any(|e| matches!(e, DefinitionError::Distribution { var, .. } if var == "K")));
    }

    #[test]
    fn numeric_equation_rejected() {
        let errs = CausalModel::new(
            "bad",
            vec![
                Node::Exo(ExogenousSpec {
                    name: "N_A".into(),
                    dist: Dist::UniformInt { lo: 1, hi: 3 },
                }),
                Node::Var {
                    name: "A".into(),
                    expr: Expr::bin(BinaryOp::Add, Expr::var("N_A"), Expr::Int(1)),
                },
            ],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(errs[0], DefinitionError::NonBoolean { .. }));
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let m = candy();
        for i in 0..200 {
            let a = sample_context(&m, 9, i).unwrap();
            assert_eq!(a, sample_context(&m, 9, i).unwrap());
            for v in a.values.values() {
                let Value::Int(k) = v else { panic!("non-integer draw") };
                assert!((1..=12).contains(k));
            }
        }
    }

    #[test]
    fn case_without_match_is_an_error() {
        let m = CausalModel::new(
            "case",
            vec![
                Node::Exo(ExogenousSpec {
                    name: "K".into(),
                    dist: Dist::Bernoulli { p: 1.0 },
                }),
                Node::Exo(ExogenousSpec {
                    name: "T".into(),
                    dist: Dist::Case(vec![(Expr::not(Expr::var("K")), Dist::normal(0.0, 1.0))]),
                }),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(
            sample_context(&m, 0, 0),
            Err(ScmError::UnresolvedCase { var: "T".into() })
        );
    }

    proptest! {
        #[test]
        fn consistency_axiom(na in 1i64..=12, nb in 1i64..=12, nc in 1i64..=12, nd in 1i64..=12) {
            let m = candy();
            let c = ctx([na, nb, nc, nd]);
            let factual = evaluate(&m, &c).unwrap();
            for (x, _) in m.endogenous() {
                let fx = factual.bool(x).unwrap();
                let under = evaluate_under(&m, &c, &[Intervention::new(x, fx)]).unwrap();
                prop_assert_eq!(&under, &factual);
            }
            for e in m.edges() {
                let u = potential_outcomes(&m, &c, e).unwrap();
                let same = evaluate_under(&m, &c, &[Intervention::new(&e.cause, u.x)]).unwrap();
                prop_assert_eq!(same.bool(&e.effect).unwrap(), u.y);
            }
        }

        #[test]
        fn d_is_monotone_in_a(na in 1i64..=12, nb in 1i64..=12, nc in 1i64..=12, nd in 1i64..=12) {
            let m = candy();
            let c = ctx([na, nb, nc, nd]);
            let f = evaluate(&m, &c).unwrap().bool("D").unwrap();
            let up = evaluate_under(&m, &c, &[Intervention::new("A", true)]).unwrap().bool("D").unwrap();
            prop_assert!(!f || up);
        }
    }
}
