//! The refinement loop: the model writes programs, sees their output or
//! errors, and answers; in train mode wrong answers are sent back for
//! another attempt.

pub mod answer;
pub mod prompt;
pub mod response;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::api::{ApiOptions, ToolContext};
use crate::interp::{self, EvalLimits};
use crate::llm::{ChatClient, ChatMessage, Role};
use crate::relations::RelationConfig;
use crate::scene::{pose_from_parts, Scene, SceneError};
pub use answer::soft_match;
pub use prompt::build_initial_prompt;
pub use response::{parse_response, Action, FormatError, ParsedResponse};

/// Sent after a wrong final answer in train mode.
pub const RETRY_MESSAGE: &str =
    "Observation: Your final answer is incorrect. Reconsider the question, your programs and their observations, then try again.";

/// Maximum words in a final answer.
pub const MAX_ANSWER_WORDS: usize = 3;

// ---------------------------------------------------------------------------
// Question records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub xyz: [f64; 3],
    pub quat: [f64; 4],
}

/// One line of a question file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub question_id: String,
    pub scene_id: String,
    #[serde(default)]
    pub situation: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Pose>,
}

impl Question {
    /// Separates what the model may see from the ground truth.
    pub fn split(&self) -> (Task, GroundTruth) {
        let task = Task {
            question_id: self.question_id.clone(),
            scene_id: self.scene_id.clone(),
            situation: self.situation.clone(),
            question: self.question.clone(),
            position: self.position.clone(),
        };
        (task, GroundTruth::new(self.answer.clone()))
    }
}

/// Parses a question JSONL file; errors name the 1-based line.
pub fn parse_questions(text: &str) -> Result<Vec<Question>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if q.question_id.is_empty() {
            return Err(format!("line {}: question_id is empty", i + 1));
        }
        out.push(q);
    }
    Ok(out)
}

/// A question without its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub question_id: String,
    pub scene_id: String,
    pub situation: String,
    pub question: String,
    pub position: Option<Pose>,
}

impl Task {
    /// The scene as seen from this task's pose (the scene's own agent when absent).
    pub fn posed_scene(&self, scene: &Scene) -> Result<Scene, SceneError> {
        match &self.position {
            Some(p) => Ok(scene.with_agent(pose_from_parts(p.xyz, p.quat)?)),
            None => Ok(scene.clone()),
        }
    }
}

/// Ground-truth answer behind a read counter, so tests can prove the
/// eval-mode loop never consults it.
#[derive(Debug, Default)]
pub struct GroundTruth {
    answer: Option<String>,
    reads: AtomicUsize,
}

impl GroundTruth {
    pub fn new(answer: Option<String>) -> Self {
        Self { answer, reads: AtomicUsize::new(0) }
    }

    /// Grades `answer`; `None` when no ground truth exists. Counts as a read.
    pub fn grade(&self, answer: &str) -> Option<bool> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        self.answer.as_deref().map(|gt| soft_match(answer, gt))
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    pub fn is_available(&self) -> bool {
        self.answer.is_some()
    }
}

// ---------------------------------------------------------------------------
// Loop configuration and results

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_program_rounds: u32,
    pub max_outer_rounds: u32,
    pub mode: Mode,
    /// Fixed wrong-answer message; changing it changes the generated datasets.
    pub retry_message: String,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { max_program_rounds: 6, max_outer_rounds: 3, mode: Mode::Eval, retry_message: RETRY_MESSAGE.into() }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_program_rounds == 0 || self.max_outer_rounds == 0 {
            return Err("loop.max_program_rounds and loop.max_outer_rounds must be at least 1".into());
        }
        if self.retry_message.trim().is_empty() {
            return Err("loop.retry_message must not be empty".into());
        }
        Ok(())
    }

    /// Outer rounds actually available: eval mode uses a single loop.
    pub fn outer_rounds(&self) -> u32 {
        match self.mode {
            Mode::Eval => 1,
            Mode::Train => self.max_outer_rounds,
        }
    }

    /// Upper bound on model calls in one episode.
    pub fn max_calls(&self) -> u32 {
        (self.max_program_rounds + 1) * self.outer_rounds()
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
    /// 0 for the opening system/user pair; otherwise the assistant round it belongs to.
    pub round_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript {
    pub turns: Vec<Turn>,
}

/// One line of a transcript JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptLine {
    pub episode: String,
    pub round: u32,
    pub role: Role,
    pub content: String,
}

impl Transcript {
    fn push(&mut self, role: Role, content: impl Into<String>, round_index: u32) {
        self.turns.push(Turn { role, content: content.into(), round_index });
    }

    pub fn assistant_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::Assistant).count()
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.turns.iter().map(|t| ChatMessage::new(t.role, t.content.clone())).collect()
    }

    pub fn to_lines(&self, episode: &str) -> Vec<TranscriptLine> {
        self.turns
            .iter()
            .map(|t| TranscriptLine {
                episode: episode.to_string(),
                round: t.round_index,
                role: t.role,
                content: t.content.clone(),
            })
            .collect()
    }

    pub fn to_jsonl(&self, episode: &str) -> String {
        self.to_lines(episode)
            .iter()
            .map(|l| serde_json::to_string(l).expect("transcript line serializes") + "\n")
            .collect()
    }

    pub fn from_lines(lines: &[TranscriptLine]) -> Self {
        Self {
            turns: lines
                .iter()
                .map(|l| Turn { role: l.role, content: l.content.clone(), round_index: l.round })
                .collect(),
        }
    }

    /// Checks turn order and that every later user turn is loop feedback.
    pub fn check_grammar(&self, retry_message: &str) -> Result<(), String> {
        let t = &self.turns;
        if t.len() < 2 || t[0].role != Role::System || t[1].role != Role::User {
            return Err("a transcript must open with a system turn and a user turn".into());
        }
        let mut expected_round = 1;
        for (i, turn) in t.iter().enumerate().skip(2) {
            let want = if i % 2 == 0 { Role::Assistant } else { Role::User };
            if turn.role != want {
                return Err(format!("turn {i}: expected {}, found {}", want.as_str(), turn.role.as_str()));
            }
            if turn.round_index != expected_round {
                return Err(format!("turn {i}: round {} where {expected_round} was expected", turn.round_index));
            }
            if want == Role::User {
                if turn.content != retry_message && !turn.content.starts_with("Observation: ") {
                    return Err(format!("turn {i}: user turn is neither feedback nor the retry message"));
                }
                expected_round += 1;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answer,
    RoundCap,
    InfraError,
}

/// What happened in one assistant round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    /// The program ran and produced an observation.
    ProgramOk,
    /// The program failed to parse or raised a runtime error.
    ProgramError,
    /// The response did not follow the Thought/Action/Action Input format.
    Malformed,
    /// A final answer over the word limit, sent back once with a reminder.
    AnswerTooLong,
    /// A final answer graded wrong and followed by the retry message.
    WrongAnswer,
    /// The answer that ended the episode.
    Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub question_id: String,
    pub scene_id: String,
    pub final_answer: String,
    /// Present iff ground truth was available.
    pub correct: Option<bool>,
    pub rounds_used: u32,
    pub outer_rounds: u32,
    pub terminated_by: Termination,
    /// Outcome of each assistant round, in order.
    pub steps: Vec<StepOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Pose>,
    #[serde(skip)]
    pub transcript: Transcript,
}

/// Everything a program execution reads besides the scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolEnv {
    pub relations: RelationConfig,
    pub options: ApiOptions,
    pub limits: EvalLimits,
}

impl ToolEnv {
    pub fn context<'a>(&'a self, scene: &'a Scene) -> ToolContext<'a> {
        ToolContext::new(scene, &self.relations, &self.options)
    }
}

fn answer_reminder(words: usize) -> String {
    format!(
        "Observation: Your final answer has {words} words. Return the Final Answer with NO MORE THAN {MAX_ANSWER_WORDS} words."
    )
}

/// Runs one episode. `scene` must already carry the task's pose. In eval
/// mode the ground truth is never read; grade afterwards with [`grade`].
pub fn run_episode(
    task: &Task,
    gt: &GroundTruth,
    scene: &Scene,
    client: &dyn ChatClient,
    cfg: &LoopConfig,
    env: &ToolEnv,
) -> EpisodeResult {
    let ctx = env.context(scene);
    let mut transcript = Transcript::default();
    let (system, user) = build_initial_prompt(scene, &task.situation, &task.question);
    transcript.push(Role::System, system, 0);
    transcript.push(Role::User, user, 0);

    let mut result = EpisodeResult {
        question_id: task.question_id.clone(),
        scene_id: task.scene_id.clone(),
        final_answer: String::new(),
        correct: None,
        rounds_used: 0,
        outer_rounds: 0,
        terminated_by: Termination::RoundCap,
        steps: Vec::new(),
        error: None,
        ground_truth: None,
        position: task.position.clone(),
        transcript: Transcript::default(),
    };

    'outer: for outer in 1..=cfg.outer_rounds() {
        result.outer_rounds = outer;
        let mut programs = 0;
        let mut reminded = false;
        loop {
            if programs >= cfg.max_program_rounds {
                result.terminated_by = Termination::RoundCap;
                result.final_answer.clear();
                if cfg.mode == Mode::Train {
                    result.correct = gt.grade("");
                }
                break 'outer;
            }
            let reply = match client.complete(&transcript.messages()) {
                Ok(r) => r,
                Err(e) => {
                    result.terminated_by = Termination::InfraError;
                    result.error = Some(e.to_string());
                    result.final_answer.clear();
                    result.correct = None;
                    break 'outer;
                }
            };
            result.rounds_used += 1;
            programs += 1;
            let round = result.rounds_used;
            transcript.push(Role::Assistant, reply.as_str(), round);

            let feedback = match parse_response(&reply) {
                Err(fe) => {
                    result.steps.push(StepOutcome::Malformed);
                    fe.feedback()
                }
                Ok(p) if p.action == Action::Program => {
                    let outcome = interp::run_program(&p.action_input, &ctx, &env.limits);
                    result.steps.push(if outcome.is_ok() { StepOutcome::ProgramOk } else { StepOutcome::ProgramError });
                    interp::format_feedback(&outcome)
                }
                Ok(p) => {
                    let mut answer = p.action_input;
                    let words = answer::word_count(&answer);
                    if words > MAX_ANSWER_WORDS {
                        if !reminded {
                            reminded = true;
                            // The reminder round does not count against the program budget.
                            programs -= 1;
                            result.steps.push(StepOutcome::AnswerTooLong);
                            transcript.push(Role::User, answer_reminder(words), round);
                            continue;
                        }
                        answer = answer::first_words(&answer, MAX_ANSWER_WORDS);
                    }
                    result.final_answer = answer;
                    result.terminated_by = Termination::Answer;
                    if cfg.mode == Mode::Eval {
                        result.steps.push(StepOutcome::Answer);
                        break 'outer;
                    }
                    match gt.grade(&result.final_answer) {
                        Some(false) if outer < cfg.outer_rounds() => {
                            result.steps.push(StepOutcome::WrongAnswer);
                            transcript.push(Role::User, cfg.retry_message.as_str(), round);
                            continue 'outer;
                        }
                        graded => {
                            result.steps.push(StepOutcome::Answer);
                            result.correct = graded;
                            break 'outer;
                        }
                    }
                }
            };
            transcript.push(Role::User, feedback, round);
        }
    }
    result.transcript = transcript;
    result
}

/// Grades an eval-mode result after its loop has finished.
pub fn grade(result: &mut EpisodeResult, gt: &GroundTruth) {
    if result.terminated_by == Termination::InfraError {
        result.correct = None;
        return;
    }
    result.correct = gt.grade(&result.final_answer);
}

/// Runs a question end to end: applies its pose, runs the loop, and grades
/// eval-mode answers afterwards. The ground truth is recorded in train mode.
pub fn run_question(
    question: &Question,
    scene: &Scene,
    client: &dyn ChatClient,
    cfg: &LoopConfig,
    env: &ToolEnv,
) -> Result<EpisodeResult, SceneError> {
    let (task, gt) = question.split();
    let posed = task.posed_scene(scene)?;
    let mut result = run_episode(&task, &gt, &posed, client, cfg, env);
    if cfg.mode == Mode::Eval {
        grade(&mut result, &gt);
    } else {
        result.ground_truth = question.answer.clone();
    }
    Ok(result)
}
