use bugreplay_core::entity::{render_step_list, validate_steps, ActionType, BugReport, Direction, Step};
use bugreplay_core::exemplar::{ExemplarCorpus, SelectionError, MAX_EXEMPLARS};
use bugreplay_core::extraction::{
    build_extraction_prompt, extract_s2r, parse_extraction_response, parse_primitive, ExtractionError,
};
use bugreplay_core::llm::{LlmClient, RecordingLlm, Transcript, TranscriptLlm};
use bugreplay_core::prompt::{estimate_tokens, SegmentKind};
use bugreplay_core::testkit::{garbage_text, random_steps};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

const BOOKMARK_REPORT: &str = "1. Open bookmark
2. Tap \"add new bookmark\" and create a name with \"a\"
3. Create another one with name \"b\"
4. Click \"a\"
5. Go back to bookmark after changing name \"a\" to \"b\"
6. App crash";

/// Table output as typeset, with TeX-style quotes.
const BOOKMARK_OUTPUT_TEX: &str = "Overall, the extracted S2R entities are:
1. [Tap] [``bookmark'']
2. [Tap] [``add new bookmark'']
3. [Input] [``name''] [``a'']
4. [Tap] [``add new bookmark'']
5. [Input] [``name''] [``b'']
6. [Tap] [``a'']
7. [Input] [``name''] [``b'']
8. [Tap] [``back'']";

fn bookmark_steps() -> Vec<Step> {
    vec![
        Step::tap(1, "bookmark"),
        Step::tap(2, "add new bookmark"),
        Step::input(3, "name", "a"),
        Step::tap(4, "add new bookmark"),
        Step::input(5, "name", "b"),
        Step::tap(6, "a"),
        Step::input(7, "name", "b"),
        Step::tap(8, "back"),
    ]
}

#[test]
fn bookmark_example_end_to_end() {
    let report = BugReport::new("bookmark", BOOKMARK_REPORT).unwrap();
    let llm = TranscriptLlm::new(Transcript::strict([BOOKMARK_OUTPUT_TEX])).unwrap();
    let steps = extract_s2r(&report, &llm, &ExemplarCorpus::builtin(), 4096).unwrap();
    assert_eq!(steps, bookmark_steps());
    assert_eq!(llm.consumed(), 1);
}

#[test]
fn builtin_bookmark_exemplar_matches_table_steps() {
    let corpus = ExemplarCorpus::builtin();
    assert_eq!(corpus.extraction[0].output_steps, bookmark_steps());
    assert_eq!(
        parse_extraction_response(&corpus.extraction[0].output_text).unwrap(),
        bookmark_steps()
    );
}

#[test]
fn reasoning_before_the_list_is_ignored() {
    let response = format!(
        "1st step is \"Open bookmark\". The action is \"open\"...\n\
         A draft:\n1. [Tap] [\"wrong\"]\n2. [Tap] [\"draft\"]\n\n{BOOKMARK_OUTPUT_TEX}\nThat is all."
    );
    assert_eq!(parse_extraction_response(&response).unwrap(), bookmark_steps());
}

#[test]
fn quote_styles() {
    for text in [
        "1. [Tap] [\"Sign in\"]",
        "1. [Tap] [“Sign in”]",
        "1. [Tap] [``Sign in'']",
        "1. [Tap] ['Sign in']",
        "1. [Tap] [‘Sign in’]",
        "1. [Tap] [Sign in]",
        "1) [ tap ] [ \"Sign in\" ]",
    ] {
        assert_eq!(
            parse_extraction_response(text).unwrap(),
            vec![Step::tap(1, "Sign in")],
            "{text}"
        );
    }
    assert_eq!(
        parse_extraction_response("1. [Scroll] [down]\n2. [Long tap] [\"x\"]\n3. [double_tap] [\"y\"]").unwrap(),
        vec![
            Step::scroll(1, Direction::Down),
            Step::long_tap(2, "x"),
            Step::double_tap(3, "y")
        ]
    );
}

#[test]
fn malformed_and_empty_responses() {
    assert!(matches!(
        parse_extraction_response("no steps here"),
        Err(ExtractionError::NoStepsFound)
    ));
    assert!(matches!(
        parse_extraction_response(""),
        Err(ExtractionError::NoStepsFound)
    ));
    for bad in [
        "1. [Tap]",
        "1. [Tap] [\"a\"] [\"b\"]",
        "1. [Scroll] [sideways]",
        "1. [Scroll] [Down] [\"x\"]",
        "1. [Tap] [\"open",
        "1. [Input]",
    ] {
        assert!(
            matches!(
                parse_extraction_response(bad),
                Err(ExtractionError::MalformedStep { .. })
            ),
            "{bad}"
        );
    }
}

#[test]
fn prompt_layout_and_determinism() {
    let report = BugReport::new("r", BOOKMARK_REPORT).unwrap();
    let corpus = ExemplarCorpus::builtin();
    let a = build_extraction_prompt(&report, &corpus, 4096).unwrap();
    let b = build_extraction_prompt(&report, &corpus, 4096).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.digest(), b.digest());

    let kinds: Vec<SegmentKind> = a.segments().iter().map(|s| s.kind).collect();
    let n = a.exemplar_count();
    assert!((1..=MAX_EXEMPLARS).contains(&n));
    let mut expected = vec![SegmentKind::ActionsSpec, SegmentKind::PrimitivesSpec];
    for _ in 0..n {
        expected.extend([
            SegmentKind::ExemplarInput,
            SegmentKind::ChainOfThought,
            SegmentKind::ExemplarOutput,
        ]);
    }
    expected.push(SegmentKind::TestInput);
    assert_eq!(kinds, expected);
    assert_eq!(a.segments().last().unwrap().text, BOOKMARK_REPORT);
    assert!(a
        .rendered()
        .starts_with("Available actions:\nTap, Scroll, Input, Double-tap, Long-tap\n\n"));
    assert!(a.estimated_tokens() <= 4096);
}

#[test]
fn oversized_report_is_unsatisfiable() {
    let report = BugReport::new("big", "word ".repeat(4 * 4096)).unwrap();
    let err = build_extraction_prompt(&report, &ExemplarCorpus::builtin(), 4096).unwrap_err();
    assert!(matches!(
        err,
        ExtractionError::Selection(SelectionError::BudgetUnsatisfiable { .. })
    ));
}

#[test]
fn empty_report_rejected() {
    assert!(BugReport::new("x", "  \n ").is_err());
}

#[test]
fn recorded_prompt_is_what_the_backend_saw() {
    let report = BugReport::new("r", "Open settings and tap About. Crash.").unwrap();
    let rec = RecordingLlm::new(
        TranscriptLlm::new(Transcript::strict(["1. [Tap] [\"settings\"]\n2. [Tap] [\"About\"]"])).unwrap(),
    );
    let steps = extract_s2r(&report, &rec, &ExemplarCorpus::builtin(), 4096).unwrap();
    assert_eq!(steps.len(), 2);
    let prompts = rec.prompts();
    assert_eq!(prompts.len(), 1);
    assert!(prompts[0].estimated_tokens() <= rec.max_prompt_tokens());
}

#[test]
fn primitive_parser_single_step() {
    assert_eq!(
        parse_primitive("[Input] [\"email\"] [\"test\"]").unwrap(),
        Step::input(1, "email", "test")
    );
    assert_eq!(parse_primitive("[Scroll] [Up]").unwrap().action, ActionType::Scroll);
}

fn step_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 \"'\\[\\]“”‘’.,&<>é日_-]{1,14}"
}

fn step_strategy() -> impl Strategy<Value = Step> {
    prop_oneof![
        step_text().prop_map(|c| Step::tap(1, c)),
        step_text().prop_map(|c| Step::double_tap(1, c)),
        step_text().prop_map(|c| Step::long_tap(1, c)),
        (step_text(), step_text()).prop_map(|(c, v)| Step::input(1, c, v)),
        prop::sample::select(Direction::ALL.to_vec()).prop_map(|d| Step::scroll(1, d)),
    ]
    .prop_filter("representable", |s| s.validate().is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn render_then_parse_is_identity(mut steps in prop::collection::vec(step_strategy(), 1..12)) {
        for (i, s) in steps.iter_mut().enumerate() {
            s.index = i + 1;
        }
        let text = render_step_list(&steps);
        prop_assert_eq!(parse_extraction_response(&text).unwrap(), steps);
    }

    #[test]
    fn seeded_round_trip(seed in any::<u64>()) {
        let steps = random_steps(&mut StdRng::seed_from_u64(seed), 10);
        prop_assert_eq!(parse_extraction_response(&render_step_list(&steps)).unwrap(), steps);
    }

    #[test]
    fn garbage_never_yields_invalid_steps(seed in any::<u64>()) {
        let text = garbage_text(&mut StdRng::seed_from_u64(seed));
        if let Ok(steps) = parse_extraction_response(&text) {
            prop_assert!(!steps.is_empty());
            prop_assert!(validate_steps(&steps).is_ok());
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        if let Ok(steps) = parse_extraction_response(&text) {
            prop_assert!(validate_steps(&steps).is_ok());
        }
    }

    #[test]
    fn prompt_respects_budget(words in 1usize..4000, budget in 500usize..6000) {
        let report = BugReport::new("r", "tap the button ".repeat(words)).unwrap();
        let corpus = ExemplarCorpus::builtin();
        match build_extraction_prompt(&report, &corpus, budget) {
            Ok(prompt) => {
                prop_assert!(prompt.estimated_tokens() <= budget);
                prop_assert!((1..=MAX_EXEMPLARS).contains(&prompt.exemplar_count()));
            }
            Err(ExtractionError::Selection(SelectionError::BudgetUnsatisfiable { required, .. })) => {
                prop_assert!(required > budget);
                // second route: no single exemplar fits beside the fixed blocks
                let block = |label: &str, text: &str| estimate_tokens(&format!("{label}:\n{}\n\n", text.trim_end()));
                let fixed = block("Available actions", "Tap, Scroll, Input, Double-tap, Long-tap")
                    + block(
                        "Action primitives",
                        "[Tap] [Component], [Scroll] [Direction], [Input] [Component] [Value], \
                         [Double-tap] [Component], [Long-tap] [Component]",
                    )
                    + block("Test input", report.raw_text.trim());
                for e in &corpus.extraction {
                    let cost = block("Example input", &e.input_report)
                        + block("Chain-of-Thought", &e.chain_of_thought)
                        + block("Example output", &e.output_text);
                    prop_assert!(fixed + cost > budget);
                }
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
