mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenecode::agent::{
    grade, run_episode, EpisodeResult, GroundTruth, LoopConfig, Mode, Question, StepOutcome, Task, Termination,
    ToolEnv, RETRY_MESSAGE,
};
use scenecode::llm::{Role, ScriptedClient};
use scenecode::scene::Scene;

use common::fixture_scene;

fn program(body: &str) -> String {
    format!("Thought: run a program\nAction: Program\nAction Input:\n```Python\n{body}\n```")
}

fn answer(text: &str) -> String {
    format!("Thought: I know the answer\nAction: Final Answer\nAction Input: {text}")
}

const GOOD: &str = "book = list(filter(object_set=scene(), category=\"book\"))[0]\nprint(query_attribute(object=book, attribute_type=\"color\"))";
const BAD: &str = "print(books)";

fn question() -> Question {
    Question {
        question_id: "q".into(),
        scene_id: "study_room".into(),
        situation: "I am standing in the study.".into(),
        question: "What color is the book?".into(),
        answer: Some("red".into()),
        position: None,
    }
}

fn run(script: &[String], mode: Mode, scene: &Scene) -> (EpisodeResult, usize, usize) {
    let (task, gt) = question().split();
    let client = ScriptedClient::new(script.iter().cloned());
    let cfg = LoopConfig { mode, ..LoopConfig::default() };
    let mut r = run_episode(&task, &gt, scene, &client, &cfg, &ToolEnv::default());
    let reads = gt.reads();
    if mode == Mode::Eval {
        grade(&mut r, &gt);
    }
    r.transcript.check_grammar(&cfg.retry_message).unwrap();
    (r, reads, client.prompts().len())
}

#[test]
fn scripted_episodes_match_hand_computed_counts() {
    let scene = fixture_scene("study_room.json");
    let good = program(GOOD);
    let bad = program(BAD);
    let malformed = "The book is probably red.".to_string();
    struct Case {
        name: &'static str,
        mode: Mode,
        script: Vec<String>,
        rounds: u32,
        outer: u32,
        by: Termination,
        correct: Option<bool>,
        answer: &'static str,
    }
    let cases = vec![
        Case {
            name: "success",
            mode: Mode::Eval,
            script: vec![good.clone(), answer("red")],
            rounds: 2,
            outer: 1,
            by: Termination::Answer,
            correct: Some(true),
            answer: "red",
        },
        Case {
            name: "inner cap",
            mode: Mode::Eval,
            script: vec![bad.clone(); 7],
            rounds: 6,
            outer: 1,
            by: Termination::RoundCap,
            correct: Some(false),
            answer: "",
        },
        Case {
            name: "outer retry",
            mode: Mode::Train,
            script: vec![good.clone(), answer("blue"), good.clone(), answer("red")],
            rounds: 4,
            outer: 2,
            by: Termination::Answer,
            correct: Some(true),
            answer: "red",
        },
        Case {
            name: "outer exhausted",
            mode: Mode::Train,
            script: vec![answer("blue"), answer("green"), answer("white")],
            rounds: 3,
            outer: 3,
            by: Termination::Answer,
            correct: Some(false),
            answer: "white",
        },
        Case {
            name: "malformed",
            mode: Mode::Eval,
            script: vec![malformed, good.clone(), answer("red")],
            rounds: 3,
            outer: 1,
            by: Termination::Answer,
            correct: Some(true),
            answer: "red",
        },
        Case {
            name: "infra",
            mode: Mode::Train,
            script: vec![bad.clone(), good.clone()],
            rounds: 2,
            outer: 1,
            by: Termination::InfraError,
            correct: None,
            answer: "",
        },
    ];
    for c in cases {
        let (r, reads, calls) = run(&c.script, c.mode, &scene);
        assert_eq!(
            (r.rounds_used, r.outer_rounds, r.terminated_by, r.correct, r.final_answer.as_str()),
            (c.rounds, c.outer, c.by, c.correct, c.answer),
            "{}",
            c.name
        );
        if c.mode == Mode::Eval {
            assert_eq!(reads, 0, "{}: eval mode read the ground truth", c.name);
        }
        let expected_calls = c.rounds + u32::from(c.by == Termination::InfraError);
        assert_eq!(calls as u32, expected_calls, "{}", c.name);
    }
}

#[test]
fn feedback_turns_carry_observations_errors_and_retries() {
    let scene = fixture_scene("study_room.json");
    let script = [program(BAD), program(GOOD), answer("blue"), answer("red")];
    let (r, _, _) = run(&script, Mode::Train, &scene);
    let users: Vec<&str> =
        r.transcript.turns.iter().filter(|t| t.role == Role::User).map(|t| t.content.as_str()).collect();
    assert_eq!(users[1], "Observation: NameError: name 'books' is not defined (line 1)");
    assert_eq!(users[2], "Observation: red");
    assert_eq!(users[3], RETRY_MESSAGE);
    assert_eq!(
        r.steps,
        vec![StepOutcome::ProgramError, StepOutcome::ProgramOk, StepOutcome::WrongAnswer, StepOutcome::Answer]
    );
    assert_eq!(r.transcript.turns.len(), 1 + 2 * 4);
    let rounds: Vec<u32> = r.transcript.turns.iter().map(|t| t.round_index).collect();
    assert_eq!(rounds, vec![0, 0, 1, 1, 2, 2, 3, 3, 4]);
}

#[test]
fn the_model_sees_the_whole_conversation_each_round() {
    let scene = fixture_scene("study_room.json");
    let (task, gt) = question().split();
    let client = ScriptedClient::new([program(GOOD), answer("red")]);
    let r = run_episode(&task, &gt, &scene, &client, &LoopConfig::default(), &ToolEnv::default());
    let prompts = client.prompts();
    assert_eq!(prompts[0].len(), 2);
    assert_eq!(prompts[1].len(), 4);
    assert_eq!(prompts[1][3].content, "Observation: red");
    assert!(prompts[0][0].content.contains("query_relation_agent"));
    assert!(prompts[0][1].content.contains("Question: What color is the book?"));
    assert_eq!(r.transcript.messages()[..4], prompts[1][..]);
}

#[test]
fn question_pose_overrides_the_scene_agent() {
    let scene = fixture_scene("study_room.json");
    let mut q = question();
    // Turned around: the table that was on the left is now on the right.
    q.position = Some(scenecode::agent::Pose { xyz: [0.0, 0.0, 0.0], quat: [0.0, 0.0, 1.0, 0.0] });
    let (task, _) = q.split();
    let posed = task.posed_scene(&scene).unwrap();
    let src = "t = list(relate_agent(object_set=filter(object_set=scene(), category=\"table\"), relation=\"right\"))\nprint(len(t), t[0].xyz)";
    let out = common::feedback(src, &posed);
    assert_eq!(out, "Observation: 1 [0.0, 2.0, 0.375]");
}

/// Pool of responses for fuzzing: programs that run or fail, malformed
/// text, and right, wrong and over-long answers.
fn random_response(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..7) {
        0 => program(GOOD),
        1 => program(BAD),
        2 => program(&common::token_soup(rng)),
        3 => "no format at all".to_string(),
        4 => answer("red"),
        5 => answer(["blue", "a brown wooden chair here", "green"][rng.gen_range(0..3)]),
        _ => format!(
            "Thought: x\nAction: {}\nAction Input: y",
            ["Final Answer", "Program", "Search"][rng.gen_range(0..3)]
        ),
    }
}

#[test]
fn fuzzed_episodes_keep_the_transcript_grammar_and_bounds() {
    let scene = fixture_scene("study_room.json");
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..400 {
        let mode = if rng.gen_bool(0.5) { Mode::Train } else { Mode::Eval };
        let cfg = LoopConfig {
            mode,
            max_program_rounds: rng.gen_range(1..=6),
            max_outer_rounds: rng.gen_range(1..=3),
            ..LoopConfig::default()
        };
        let len = rng.gen_range(0..25);
        let script: Vec<String> = (0..len).map(|_| random_response(&mut rng)).collect();
        let q = Question { answer: rng.gen_bool(0.8).then(|| "red".to_string()), ..question() };
        let (task, gt): (Task, GroundTruth) = q.split();
        let client = ScriptedClient::new(script);
        let r = run_episode(&task, &gt, &scene, &client, &cfg, &ToolEnv::default());
        r.transcript.check_grammar(&cfg.retry_message).unwrap_or_else(|e| panic!("episode {i}: {e}"));
        assert!(r.rounds_used <= cfg.max_calls(), "episode {i}");
        assert_eq!(r.steps.len() as u32, r.rounds_used, "episode {i}");
        assert_eq!(r.transcript.assistant_turns() as u32, r.rounds_used, "episode {i}");
        let n = r.transcript.turns.len() as u32;
        assert!(n == 2 + 2 * r.rounds_used || n == 1 + 2 * r.rounds_used, "episode {i}");
        assert!(r.outer_rounds <= cfg.outer_rounds(), "episode {i}");
        if mode == Mode::Eval {
            assert_eq!(gt.reads(), 0, "episode {i}");
            assert_eq!(r.correct, None, "episode {i}");
        }
        if r.terminated_by == Termination::Answer {
            assert!(scenecode::agent::answer::word_count(&r.final_answer) <= 3, "episode {i}");
        } else {
            assert!(r.final_answer.is_empty(), "episode {i}");
        }
    }
}
