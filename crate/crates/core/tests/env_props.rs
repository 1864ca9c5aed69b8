use flowprover::env::{apply_tactic, replay, Goal, Replay, StepResult, NUM_ACTIONS};
use flowprover::{parse_formula, print_formula, Formula, ProofState, Tactic};
use proptest::prelude::*;

fn atom() -> impl Strategy<Value = Formula> {
    prop::sample::select(vec!["a", "b", "c", "p", "q", "x1"]).prop_map(Formula::atom)
}

fn formula() -> impl Strategy<Value = Formula> {
    atom().prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::implies(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Formula::or(l, r)),
        ]
    })
}

fn goal() -> impl Strategy<Value = Goal> {
    (prop::collection::vec(formula(), 0..9), formula()).prop_map(|(h, t)| Goal::new(h, t))
}

fn state() -> impl Strategy<Value = ProofState> {
    prop::collection::vec(goal(), 0..4).prop_map(ProofState::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn print_parse_round_trip(f in formula()) {
        let text = print_formula(&f);
        prop_assert_eq!(parse_formula(&text).unwrap(), f);
    }

    #[test]
    fn parser_never_panics(s in "[a-z0-9&|()<>\\- ]{0,40}") {
        let _ = parse_formula(&s);
    }

    #[test]
    fn goal_line_round_trip(g in goal()) {
        prop_assert_eq!(Goal::parse_line(&g.to_line()).unwrap(), g);
    }

    #[test]
    fn apply_tactic_is_total(s in state(), a in 0..NUM_ACTIONS) {
        let t = Tactic::from_index(a);
        match apply_tactic(&s, &t) {
            StepResult::Ok(next) => prop_assert!(!next.is_proved()),
            StepResult::Proved => prop_assert_eq!(s.goals.len(), 1),
            StepResult::EnvError(_) => {}
        }
    }

    #[test]
    fn tactic_text_round_trip(a in 0..NUM_ACTIONS) {
        let t = Tactic::from_index(a);
        prop_assert_eq!(t.index(), a);
        prop_assert_eq!(t.to_string().parse::<Tactic>().unwrap(), t);
    }
}

#[test]
fn corpus_ground_truth_replays() {
    let split = flowprover::corpus::build_corpus(0).unwrap();
    for thm in split.train.iter().chain(&split.valid) {
        assert!(
            matches!(replay(&thm.initial_state, &thm.gt_proof), Replay::Proved { .. }),
            "{}",
            thm.name
        );
    }
}
