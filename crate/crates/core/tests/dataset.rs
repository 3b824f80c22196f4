mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenecode::agent::{
    run_question, EpisodeResult, LoopConfig, Mode, Question, StepOutcome, Termination, ToolEnv, Transcript,
};
use scenecode::dataset::{
    accuracy, dpo_loss_from_margin, dpo_loss_reference, extract_all, extract_dpo, extract_sft, load_run, reconstruct,
    render_round_report, round_distribution, sft_loss_reference, to_jsonl, verify_dpo, verify_sft, LossInputs,
    MetricsReport, RejectedKind,
};
use scenecode::llm::{Role, ScriptedClient};
use scenecode::parallel::Exec;
use scenecode::scene::Scene;

use common::fixture_scene;

fn program(thought: &str, body: &str) -> String {
    format!("Thought: {thought}\nAction: Program\nAction Input:\n```Python\n{body}\n```")
}

fn answer(text: &str) -> String {
    format!("Thought: done\nAction: Final Answer\nAction Input: {text}")
}

const COLOR: &str = "book = list(filter(object_set=scene(), category=\"book\"))[0]\nprint(query_attribute(object=book, attribute_type=\"color\"))";
const COLOR_AGAIN: &str = "for b in filter(object_set=scene(), category=\"book\"):\n    print(b.category, query_attribute(object=b, attribute_type=\"color\"))";
const NAME_ERROR: &str = "print(book.color)";
const API_ERROR: &str = "print(query_attribute(object=scene(), attribute_type=\"color\"))";

fn episode(id: &str, script: &[String], mode: Mode, scene: &Scene) -> EpisodeResult {
    let q = Question {
        question_id: id.into(),
        scene_id: "study_room".into(),
        situation: "I am standing in the study.".into(),
        question: "What color is the book?".into(),
        answer: Some("red".into()),
        position: None,
    };
    let client = ScriptedClient::new(script.iter().cloned());
    run_question(&q, scene, &client, &LoopConfig::default().with_mode(mode), &ToolEnv::default()).unwrap()
}

/// The five hand-built episodes and the samples expected from each.
fn hand_built(scene: &Scene) -> Vec<EpisodeResult> {
    vec![
        // 1: answered straight away.
        episode("e1", &[answer("red")], Mode::Train, scene),
        // 2: error, fix, answer.
        episode("e2", &[program("first try", NAME_ERROR), program("fix", COLOR), answer("red")], Mode::Train, scene),
        // 3: wrong answer, then a new program and the right answer.
        episode(
            "e3",
            &[program("look", COLOR), answer("blue"), program("look again", COLOR_AGAIN), answer("red")],
            Mode::Train,
            scene,
        ),
        // 4: two different failures, then success.
        episode(
            "e4",
            &["It is red.".to_string(), program("query", API_ERROR), program("query properly", COLOR), answer("red")],
            Mode::Train,
            scene,
        ),
        // 5: never right.
        episode("e5", &[answer("blue"), answer("green"), answer("white")], Mode::Train, scene),
    ]
}

#[test]
fn extraction_matches_manual_enumeration() {
    let scene = fixture_scene("study_room.json");
    let eps = hand_built(&scene);
    let sft: Vec<usize> = eps.iter().map(|e| extract_sft(e).unwrap().len()).collect();
    let dpo: Vec<usize> = eps.iter().map(|e| extract_dpo(e).unwrap().len()).collect();
    assert_eq!(sft, vec![1, 3, 4, 4, 0]);
    assert_eq!(dpo, vec![0, 1, 1, 2, 0]);

    // Episode 1: one sample with empty history.
    let s1 = extract_sft(&eps[0]).unwrap();
    assert!(s1[0].history.is_empty());
    assert_eq!(s1[0].instruction, eps[0].transcript.turns[1].content);
    assert_eq!(s1[0].output, answer("red"));

    // Episode 2: sample 2's instruction is the error feedback.
    let s2 = extract_sft(&eps[1]).unwrap();
    assert_eq!(s2[1].instruction, "Observation: NameError: name 'book' is not defined (line 1)");
    assert_eq!(s2[1].history, vec![(eps[1].transcript.turns[1].content.clone(), program("first try", NAME_ERROR))]);
    assert_eq!(s2[2].instruction, "Observation: red");
    let d2 = extract_dpo(&eps[1]).unwrap();
    assert_eq!(d2[0].rejected_kind, RejectedKind::ExecError);
    assert_eq!(d2[0].chosen, program("fix", COLOR));
    assert_eq!(d2[0].rejected, program("first try", NAME_ERROR));
    assert_eq!(d2[0].instruction, eps[1].transcript.turns[1].content);

    // Episode 3: the program behind the wrong answer is rejected.
    let d3 = extract_dpo(&eps[2]).unwrap();
    assert_eq!(d3[0].rejected_kind, RejectedKind::WrongAnswer);
    assert_eq!(d3[0].chosen, program("look again", COLOR_AGAIN));
    assert_eq!(d3[0].rejected, program("look", COLOR));
    assert_eq!(d3[0].meta.rejected_answer.as_deref(), Some("blue"));
    let s3 = extract_sft(&eps[2]).unwrap();
    assert_eq!(s3[2].instruction, eps[2].transcript.turns[5].content);
    assert_eq!(s3[2].meta.outcome, StepOutcome::ProgramOk);

    // Episode 4: both failures share one chosen response.
    let d4 = extract_dpo(&eps[3]).unwrap();
    assert_eq!(d4.iter().map(|d| d.rejected_kind).collect::<Vec<_>>(), vec![RejectedKind::ExecError; 2]);
    assert_eq!(d4[0].rejected, "It is red.");
    assert_eq!(d4[1].rejected, program("query", API_ERROR));
    assert!(d4.iter().all(|d| d.chosen == program("query properly", COLOR)));

    // Counts equal assistant turns (SFT) and failed turns (DPO).
    for e in &eps {
        let failed = e
            .steps
            .iter()
            .filter(|s| matches!(s, StepOutcome::ProgramError | StepOutcome::Malformed | StepOutcome::WrongAnswer))
            .count();
        if e.correct == Some(true) {
            assert_eq!(extract_sft(e).unwrap().len(), e.transcript.assistant_turns());
            assert_eq!(extract_dpo(e).unwrap().len(), failed);
        }
    }
}

#[test]
fn sft_samples_rebuild_the_transcript_prefix_byte_for_byte() {
    let scene = fixture_scene("study_room.json");
    for e in hand_built(&scene) {
        let samples = extract_sft(&e).unwrap();
        for (k, s) in samples.iter().enumerate() {
            let prefix: Vec<String> = e.transcript.turns[..2 * k + 3].iter().map(|t| t.content.clone()).collect();
            assert_eq!(reconstruct(s), prefix, "{} sample {k}", e.question_id);
        }
        if let Some(last) = samples.last() {
            let joined: String = reconstruct(last).concat();
            let transcript: String = e.transcript.turns.iter().map(|t| t.content.as_str()).collect();
            assert_eq!(joined, transcript, "{}", e.question_id);
        }
    }
}

#[test]
fn fresh_samples_verify_and_drifted_ones_do_not() {
    let scene = fixture_scene("study_room.json");
    let env = ToolEnv::default();
    let eps = hand_built(&scene);
    let (sft, dpo) = extract_all(&eps, Exec::Parallel).unwrap();
    assert_eq!((sft.len(), dpo.len()), (12, 4));
    assert!(sft.iter().all(|s| verify_sft(s, &scene, &env).unwrap()));
    assert!(dpo.iter().all(|s| verify_dpo(s, &scene, &env).unwrap()));

    let mut drifted = dpo.iter().find(|d| d.meta.rejected_outcome == StepOutcome::ProgramError).unwrap().clone();
    drifted.rejected = program("now it runs", COLOR_AGAIN);
    assert!(!verify_dpo(&drifted, &scene, &env).unwrap());
    let mut same = dpo[0].clone();
    same.rejected = same.chosen.clone();
    assert!(!verify_dpo(&same, &scene, &env).unwrap());
    let mut wrong = sft.iter().find(|s| s.meta.outcome == StepOutcome::Answer).unwrap().clone();
    wrong.output = answer("blue");
    assert!(!verify_sft(&wrong, &scene, &env).unwrap());
}

#[test]
fn extraction_is_sorted_and_identical_across_executors() {
    let scene = fixture_scene("study_room.json");
    let mut eps = hand_built(&scene);
    eps.reverse();
    let seq = extract_all(&eps, Exec::Sequential).unwrap();
    let par = extract_all(&eps, Exec::Parallel).unwrap();
    assert_eq!(seq, par);
    let keys: Vec<(String, u32)> = seq.0.iter().map(|s| (s.meta.question_id.clone(), s.meta.round)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn runs_round_trip_through_jsonl() {
    let scene = fixture_scene("study_room.json");
    let eps = hand_built(&scene);
    let results = to_jsonl(&eps);
    let transcripts: String = eps.iter().map(|e| e.transcript.to_jsonl(&e.question_id)).collect();
    let loaded = load_run(&results, &transcripts).unwrap();
    assert_eq!(loaded, eps);
    let missing = load_run(&results, "").unwrap_err();
    assert!(missing.0.contains("no transcript for episode e1"));
    let bad = load_run("{\"question_id\": 3}\n", "").unwrap_err();
    assert!(bad.0.starts_with("results.jsonl:1:"));
}

#[test]
fn episodes_with_inconsistent_steps_are_rejected() {
    let scene = fixture_scene("study_room.json");
    let mut e = hand_built(&scene).remove(1);
    e.steps.pop();
    assert!(extract_sft(&e).is_err());
    e.transcript = Transcript::default();
    assert!(extract_dpo(&e).is_err());
    let turns = hand_built(&scene)[1].transcript.turns.clone();
    assert_eq!(turns[0].role, Role::System);
}

// ---------------------------------------------------------------------------
// Loss references

/// Double-double accumulation: an independent, higher-precision sum.
fn dd_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for x in xs {
        let s = hi + x;
        let bp = s - hi;
        let err = (hi - (s - bp)) + (x - bp);
        hi = s;
        lo += err;
    }
    hi + lo
}

fn reference_dpo(inp: &LossInputs) -> f64 {
    let m = dd_sum(
        inp.chosen_logps_policy
            .iter()
            .copied()
            .chain(inp.chosen_logps_ref.iter().map(|x| -x))
            .chain(inp.rejected_logps_policy.iter().map(|x| -x))
            .chain(inp.rejected_logps_ref.iter().copied()),
    );
    let z = inp.beta * m;
    // -log sigmoid(z), written the other way round from the library.
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn random_inputs(rng: &mut impl Rng) -> LossInputs {
    let n = rng.gen_range(1..30);
    let m = rng.gen_range(1..30);
    let mut v = |k| (0..k).map(|_| rng.gen_range(-8.0..0.0)).collect::<Vec<f64>>();
    LossInputs {
        chosen_logps_policy: v(n),
        chosen_logps_ref: v(n),
        rejected_logps_policy: v(m),
        rejected_logps_ref: v(m),
        beta: 0.0,
    }
}

#[test]
fn dpo_loss_matches_an_independent_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    assert!((dpo_loss_from_margin(0.1, 0.0) - std::f64::consts::LN_2).abs() < 1e-9);
    let zero = LossInputs {
        chosen_logps_policy: vec![-1.0, -2.0],
        chosen_logps_ref: vec![-1.0, -2.0],
        rejected_logps_policy: vec![-3.0],
        rejected_logps_ref: vec![-3.0],
        beta: 0.5,
    };
    assert!((dpo_loss_reference(&zero).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
    assert!((dpo_loss_from_margin(0.1, 100.0) - 4.539889921686465e-5).abs() < 1e-12);
    for _ in 0..100 {
        let mut inp = random_inputs(&mut rng);
        inp.beta = rng.gen_range(0.01..2.0);
        let got = dpo_loss_reference(&inp).unwrap();
        assert!(got >= 0.0);
        assert!((got - reference_dpo(&inp)).abs() < 1e-9, "{got} vs {}", reference_dpo(&inp));
        // Raising a chosen-token log-probability strictly lowers the loss.
        let mut better = inp.clone();
        let i = rng.gen_range(0..better.chosen_logps_policy.len());
        better.chosen_logps_policy[i] += rng.gen_range(0.01..1.0);
        assert!(dpo_loss_reference(&better).unwrap() < got);
        // beta folds into the margin.
        let m = rng.gen_range(-50.0..50.0);
        assert!((dpo_loss_from_margin(inp.beta, m) - dpo_loss_from_margin(1.0, inp.beta * m)).abs() < 1e-12);
    }
}

#[test]
fn sft_loss_matches_independent_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    assert_eq!(sft_loss_reference(&[-0.5]).unwrap(), 0.5);
    assert_eq!(sft_loss_reference(&[0.0; 7]).unwrap(), 0.0);
    assert!(sft_loss_reference(&[]).is_err());
    for _ in 0..100 {
        let n = rng.gen_range(1..200);
        let logps: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..12.0f64)).collect();
        let expected = -dd_sum(logps.iter().copied()) / n as f64;
        assert!((sft_loss_reference(&logps).unwrap() - expected).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------------------
// Metrics

fn synthetic(rounds: u32, correct: Option<bool>) -> EpisodeResult {
    EpisodeResult {
        question_id: format!("s{rounds}"),
        scene_id: "x".into(),
        final_answer: "a".into(),
        correct,
        rounds_used: rounds,
        outer_rounds: 1,
        terminated_by: Termination::Answer,
        steps: vec![],
        error: None,
        ground_truth: None,
        position: None,
        transcript: Transcript::default(),
    }
}

#[test]
fn metrics_on_synthetic_results() {
    let r = [synthetic(1, Some(true)), synthetic(1, Some(true)), synthetic(2, Some(true))];
    assert_eq!(round_distribution(&r), BTreeMap::from([(1, 2.0 / 3.0), (2, 1.0 / 3.0)]));
    let r = [synthetic(3, Some(true)), synthetic(1, Some(false))];
    assert_eq!(round_distribution(&r), BTreeMap::from([(3, 1.0)]));
    assert!(round_distribution(&[synthetic(1, Some(false))]).is_empty());
    let tf = [Some(true), Some(true), Some(false), Some(false)].map(|c| synthetic(1, c));
    assert_eq!(accuracy(&tf).unwrap(), 0.5);
    assert_eq!(accuracy(&vec![synthetic(1, Some(false)); 7]).unwrap(), 0.0);
    assert!(accuracy(&[synthetic(1, None)]).is_err());
    assert!(accuracy(&[]).is_err());

    let report = MetricsReport::new(&tf, 2, false).unwrap();
    assert_eq!((report.accuracy, report.questions, report.errored), (0.5, 6, 2));
    assert_eq!(MetricsReport::new(&tf, 2, true).unwrap().accuracy, 2.0 / 6.0);
}

#[test]
fn round_report_renders_from_a_scripted_batch() {
    let scene = fixture_scene("study_room.json");
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let results: Vec<EpisodeResult> = (0..50)
        .map(|i| {
            let mut script: Vec<String> = Vec::new();
            for _ in 0..rng.gen_range(0..3) {
                script.push(program("try", NAME_ERROR));
            }
            script.push(program("query", COLOR));
            script.push(answer(if rng.gen_bool(0.8) { "red" } else { "blue" }));
            episode(&format!("b{i:02}"), &script, Mode::Eval, &scene)
        })
        .collect();
    let dist = round_distribution(&results);
    assert!((dist.values().sum::<f64>() - 1.0).abs() < 1e-12);
    let report = render_round_report(&results);
    let correct = results.iter().filter(|r| r.correct == Some(true)).count();
    assert!(report.starts_with(&format!("Correct answers by communication round ({correct} of 50 episodes)\n")));
    assert_eq!(report.lines().count(), 1 + dist.len());
    assert!(report.contains("round  2 |"));
}
