//! Training-data harvesting from episode transcripts: SFT triplets from
//! successful paths, DPO pairs from failures that were later fixed, replay
//! verification, reference losses and evaluation metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    answer, parse_response, soft_match, Action, EpisodeResult, Pose, StepOutcome, ToolEnv, Transcript, TranscriptLine,
    MAX_ANSWER_WORDS,
};
use crate::interp;
use crate::llm::Role;
use crate::parallel::Exec;
use crate::scene::{pose_from_parts, Scene};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct DatasetError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, DatasetError> {
    Err(DatasetError(msg.into()))
}

// ---------------------------------------------------------------------------
// Sample records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftMeta {
    pub question_id: String,
    pub scene_id: String,
    pub round: u32,
    pub outcome: StepOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

/// (q, h, r): the prompt before round k, the exchanges before it, and round k's response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub instruction: String,
    pub history: Vec<(String, String)>,
    pub output: String,
    pub system: String,
    pub meta: SftMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectedKind {
    ExecError,
    WrongAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoMeta {
    pub question_id: String,
    pub scene_id: String,
    pub chosen_round: u32,
    pub chosen_outcome: StepOutcome,
    pub rejected_round: u32,
    pub rejected_outcome: StepOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    /// The wrong final answer a `wrong_answer` rejection led to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_answer: Option<String>,
}

/// (q, r⁺, r⁻) with q the episode's opening instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoSample {
    pub instruction: String,
    pub chosen: String,
    pub rejected: String,
    pub rejected_kind: RejectedKind,
    pub system: String,
    pub meta: DpoMeta,
}

/// One assistant round of an episode with the prompt it answered.
struct Round<'a> {
    round: u32,
    prompt: &'a str,
    response: &'a str,
    outcome: StepOutcome,
}

fn rounds(ep: &EpisodeResult) -> Result<(&str, Vec<Round<'_>>), DatasetError> {
    let turns = &ep.transcript.turns;
    if turns.len() < 2 || turns[0].role != Role::System || turns[1].role != Role::User {
        return err(format!("episode {}: transcript does not open with system and user turns", ep.question_id));
    }
    let mut out = Vec::new();
    for pair in turns[1..].windows(2) {
        if pair[1].role == Role::Assistant {
            if pair[0].role != Role::User {
                return err(format!("episode {}: assistant turn not preceded by a user turn", ep.question_id));
            }
            let Some(&outcome) = ep.steps.get(out.len()) else {
                return err(format!("episode {}: more assistant turns than recorded steps", ep.question_id));
            };
            out.push(Round {
                round: pair[1].round_index,
                prompt: &pair[0].content,
                response: &pair[1].content,
                outcome,
            });
        }
    }
    if out.len() != ep.steps.len() {
        return err(format!(
            "episode {}: {} assistant turns but {} recorded steps",
            ep.question_id,
            out.len(),
            ep.steps.len()
        ));
    }
    Ok((&turns[0].content, out))
}

/// One sample per assistant round of a correct episode; empty otherwise.
pub fn extract_sft(ep: &EpisodeResult) -> Result<Vec<SftSample>, DatasetError> {
    if ep.correct != Some(true) {
        return Ok(Vec::new());
    }
    let (system, rounds) = rounds(ep)?;
    let mut history: Vec<(String, String)> = Vec::new();
    let mut out = Vec::with_capacity(rounds.len());
    for r in rounds {
        out.push(SftSample {
            instruction: r.prompt.to_string(),
            history: history.clone(),
            output: r.response.to_string(),
            system: system.to_string(),
            meta: SftMeta {
                question_id: ep.question_id.clone(),
                scene_id: ep.scene_id.clone(),
                round: r.round,
                outcome: r.outcome,
                position: ep.position.clone(),
                ground_truth: ep.ground_truth.clone(),
            },
        });
        history.push((r.prompt.to_string(), r.response.to_string()));
    }
    Ok(out)
}

/// Rebuilds the transcript prefix (system, q₁, r₁, …, q_k, r_k) from a sample.
pub fn reconstruct(sample: &SftSample) -> Vec<String> {
    let mut out = vec![sample.system.clone()];
    for (q, r) in &sample.history {
        out.push(q.clone());
        out.push(r.clone());
    }
    out.push(sample.instruction.clone());
    out.push(sample.output.clone());
    out
}

fn answer_of(response: &str) -> Option<String> {
    match parse_response(response) {
        Ok(p) if p.action == Action::FinalAnswer => Some(p.action_input),
        _ => None,
    }
}

/// One pair per failed round of a correct episode. The chosen response is
/// the last program that ran in the final outer round (the answer turn when
/// none did). Execution failures and malformed responses are `exec_error`;
/// a wrong answer contributes the last program that ran in its outer round
/// (or the answer turn itself) as `wrong_answer`.
pub fn extract_dpo(ep: &EpisodeResult) -> Result<Vec<DpoSample>, DatasetError> {
    if ep.correct != Some(true) {
        return Ok(Vec::new());
    }
    let (system, rounds) = rounds(ep)?;
    let instruction = &ep.transcript.turns[1].content;

    // Outer rounds end after each wrong answer.
    let mut segments: Vec<&[Round<'_>]> = Vec::new();
    let mut start = 0;
    for (i, r) in rounds.iter().enumerate() {
        if r.outcome == StepOutcome::WrongAnswer {
            segments.push(&rounds[start..=i]);
            start = i + 1;
        }
    }
    segments.push(&rounds[start..]);
    let pick = |seg: &[Round<'_>], fallback: StepOutcome| -> Option<usize> {
        seg.iter()
            .rposition(|r| r.outcome == StepOutcome::ProgramOk)
            .or_else(|| seg.iter().rposition(|r| r.outcome == fallback))
    };
    let last = segments.last().expect("at least one segment");
    let Some(ci) = pick(last, StepOutcome::Answer) else {
        return err(format!("episode {}: correct episode without a final answer round", ep.question_id));
    };
    let chosen = &last[ci];

    let mut out = Vec::new();
    for seg in &segments {
        for r in seg.iter() {
            let (rejected, kind, rejected_answer) = match r.outcome {
                StepOutcome::ProgramError | StepOutcome::Malformed => (r, RejectedKind::ExecError, None),
                StepOutcome::WrongAnswer => {
                    let ri = pick(seg, StepOutcome::WrongAnswer).expect("segment contains the wrong answer");
                    (&seg[ri], RejectedKind::WrongAnswer, answer_of(r.response))
                }
                _ => continue,
            };
            if rejected.response == chosen.response {
                // Same program, different reading of its output: contrast the answers instead.
                if kind == RejectedKind::WrongAnswer && r.response != chosen.response {
                    out.push(pair(ep, system, instruction, chosen, r, kind, rejected_answer));
                }
                continue;
            }
            out.push(pair(ep, system, instruction, chosen, rejected, kind, rejected_answer));
        }
    }
    Ok(out)
}

fn pair(
    ep: &EpisodeResult,
    system: &str,
    instruction: &str,
    chosen: &Round<'_>,
    rejected: &Round<'_>,
    kind: RejectedKind,
    rejected_answer: Option<String>,
) -> DpoSample {
    DpoSample {
        instruction: instruction.to_string(),
        chosen: chosen.response.to_string(),
        rejected: rejected.response.to_string(),
        rejected_kind: kind,
        system: system.to_string(),
        meta: DpoMeta {
            question_id: ep.question_id.clone(),
            scene_id: ep.scene_id.clone(),
            chosen_round: chosen.round,
            chosen_outcome: chosen.outcome,
            rejected_round: rejected.round,
            rejected_outcome: rejected.outcome,
            position: ep.position.clone(),
            ground_truth: ep.ground_truth.clone(),
            rejected_answer,
        },
    }
}

/// Extracts samples from many episodes, sorted by question id then round.
pub fn extract_all(episodes: &[EpisodeResult], exec: Exec) -> Result<(Vec<SftSample>, Vec<DpoSample>), DatasetError> {
    let per = exec.map(episodes, |ep| Ok::<_, DatasetError>((extract_sft(ep)?, extract_dpo(ep)?)));
    let mut sft = Vec::new();
    let mut dpo = Vec::new();
    for r in per {
        let (s, d) = r?;
        sft.extend(s);
        dpo.extend(d);
    }
    sft.sort_by(|a, b| (&a.meta.question_id, a.meta.round).cmp(&(&b.meta.question_id, b.meta.round)));
    dpo.sort_by(|a, b| (&a.meta.question_id, a.meta.rejected_round).cmp(&(&b.meta.question_id, b.meta.rejected_round)));
    Ok((sft, dpo))
}

// ---------------------------------------------------------------------------
// Replay verification

fn posed(scene: &Scene, position: &Option<Pose>) -> Result<Scene, DatasetError> {
    match position {
        Some(p) => Ok(scene.with_agent(pose_from_parts(p.xyz, p.quat).map_err(|e| DatasetError(e.to_string()))?)),
        None => Ok(scene.clone()),
    }
}

/// Final answer as the loop would have recorded it.
fn recorded_answer(text: &str) -> String {
    if answer::word_count(text) > MAX_ANSWER_WORDS {
        answer::first_words(text, MAX_ANSWER_WORDS)
    } else {
        text.to_string()
    }
}

/// Whether `response` still behaves as `outcome` says it did.
fn replays_as(response: &str, outcome: StepOutcome, scene: &Scene, env: &ToolEnv, gt: Option<&str>) -> bool {
    let parsed = parse_response(response);
    let run = |src: &str| interp::run_program(src, &env.context(scene), &env.limits);
    match (outcome, parsed) {
        (StepOutcome::Malformed, p) => p.is_err(),
        (StepOutcome::ProgramOk, Ok(p)) if p.action == Action::Program => run(&p.action_input).is_ok(),
        (StepOutcome::ProgramError, Ok(p)) if p.action == Action::Program => run(&p.action_input).is_err(),
        (StepOutcome::AnswerTooLong, Ok(p)) if p.action == Action::FinalAnswer => {
            answer::word_count(&p.action_input) > MAX_ANSWER_WORDS
        }
        (StepOutcome::WrongAnswer, Ok(p)) if p.action == Action::FinalAnswer => {
            gt.is_some_and(|g| !soft_match(&recorded_answer(&p.action_input), g))
        }
        (StepOutcome::Answer, Ok(p)) if p.action == Action::FinalAnswer => {
            gt.is_none_or(|g| soft_match(&recorded_answer(&p.action_input), g))
        }
        _ => false,
    }
}

/// Re-parses and re-executes an SFT sample's response against its scene.
pub fn verify_sft(sample: &SftSample, scene: &Scene, env: &ToolEnv) -> Result<bool, DatasetError> {
    let scene = posed(scene, &sample.meta.position)?;
    Ok(replays_as(&sample.output, sample.meta.outcome, &scene, env, sample.meta.ground_truth.as_deref()))
}

/// Checks that the chosen response still succeeds and the rejected one
/// still fails the way its kind says.
pub fn verify_dpo(sample: &DpoSample, scene: &Scene, env: &ToolEnv) -> Result<bool, DatasetError> {
    let scene = posed(scene, &sample.meta.position)?;
    let gt = sample.meta.ground_truth.as_deref();
    if sample.chosen == sample.rejected {
        return Ok(false);
    }
    let chosen_ok = matches!(sample.meta.chosen_outcome, StepOutcome::ProgramOk | StepOutcome::Answer)
        && replays_as(&sample.chosen, sample.meta.chosen_outcome, &scene, env, gt);
    let rejected_ok = match sample.rejected_kind {
        RejectedKind::ExecError => {
            matches!(sample.meta.rejected_outcome, StepOutcome::ProgramError | StepOutcome::Malformed)
                && replays_as(&sample.rejected, sample.meta.rejected_outcome, &scene, env, gt)
        }
        RejectedKind::WrongAnswer => match sample.meta.rejected_outcome {
            StepOutcome::ProgramOk => {
                replays_as(&sample.rejected, StepOutcome::ProgramOk, &scene, env, gt)
                    && match (gt, &sample.meta.rejected_answer) {
                        (Some(g), Some(a)) => !soft_match(&recorded_answer(a), g),
                        _ => false,
                    }
            }
            StepOutcome::WrongAnswer => replays_as(&sample.rejected, StepOutcome::WrongAnswer, &scene, env, gt),
            _ => false,
        },
    };
    Ok(chosen_ok && rejected_ok)
}

// ---------------------------------------------------------------------------
// Reference losses

/// Per-token log-probabilities for the DPO objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossInputs {
    pub chosen_logps_policy: Vec<f64>,
    pub chosen_logps_ref: Vec<f64>,
    pub rejected_logps_policy: Vec<f64>,
    pub rejected_logps_ref: Vec<f64>,
    pub beta: f64,
}

/// Compensated (Neumaier) summation.
fn sum(xs: &[f64]) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for &x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Mean negative log-likelihood of the output tokens.
pub fn sft_loss_reference(logps: &[f64]) -> Result<f64, DatasetError> {
    if logps.is_empty() {
        return err("sft loss needs at least one token log-probability");
    }
    if logps.iter().any(|&x| !x.is_finite() || x > 0.0) {
        return err("token log-probabilities must be finite and at most 0");
    }
    Ok(-sum(logps) / logps.len() as f64)
}

/// −log σ(β·m), evaluated without overflow.
pub fn dpo_loss_from_margin(beta: f64, margin: f64) -> f64 {
    let z = beta * margin;
    // softplus(-z) = max(-z, 0) + ln(1 + e^{-|z|})
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// The DPO margin (chosen policy − chosen ref) − (rejected policy − rejected ref).
pub fn dpo_margin(inputs: &LossInputs) -> Result<f64, DatasetError> {
    if inputs.chosen_logps_policy.len() != inputs.chosen_logps_ref.len() {
        return err("chosen policy and reference log-probabilities differ in length");
    }
    if inputs.rejected_logps_policy.len() != inputs.rejected_logps_ref.len() {
        return err("rejected policy and reference log-probabilities differ in length");
    }
    if !(inputs.beta > 0.0 && inputs.beta.is_finite()) {
        return err("beta must be a positive finite number");
    }
    let all = [
        &inputs.chosen_logps_policy,
        &inputs.chosen_logps_ref,
        &inputs.rejected_logps_policy,
        &inputs.rejected_logps_ref,
    ];
    if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return err("log-probabilities must be finite");
    }
    let chosen: Vec<f64> =
        inputs.chosen_logps_policy.iter().copied().chain(inputs.chosen_logps_ref.iter().map(|x| -x)).collect();
    let rejected: Vec<f64> =
        inputs.rejected_logps_policy.iter().copied().chain(inputs.rejected_logps_ref.iter().map(|x| -x)).collect();
    Ok(sum(&chosen) - sum(&rejected))
}

pub fn dpo_loss_reference(inputs: &LossInputs) -> Result<f64, DatasetError> {
    Ok(dpo_loss_from_margin(inputs.beta, dpo_margin(inputs)?))
}

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of correct episodes by assistant rounds used; empty when none are correct.
pub fn round_distribution(results: &[EpisodeResult]) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for r in results.iter().filter(|r| r.correct == Some(true)) {
        *counts.entry(r.rounds_used).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts.into_iter().map(|(k, n)| (k, n as f64 / total as f64)).collect()
}

/// Correct / total; every result must carry a grade.
pub fn accuracy(results: &[EpisodeResult]) -> Result<f64, DatasetError> {
    if results.is_empty() {
        return err("accuracy of an empty result set is undefined");
    }
    let mut correct = 0usize;
    for r in results {
        match r.correct {
            Some(true) => correct += 1,
            Some(false) => {}
            None => return err(format!("question {} has no ground truth grade", r.question_id)),
        }
    }
    Ok(correct as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub round_distribution: BTreeMap<String, f64>,
    pub questions: usize,
    pub correct: usize,
    pub errored: usize,
}

impl MetricsReport {
    /// Builds the report from graded results plus a count of questions that
    /// could not be run. Errored questions are left out of the accuracy
    /// denominator unless `strict`, which counts them as incorrect.
    pub fn new(results: &[EpisodeResult], errored: usize, strict: bool) -> Result<Self, DatasetError> {
        let correct = results.iter().filter(|r| r.correct == Some(true)).count();
        if let Some(r) = results.iter().find(|r| r.correct.is_none()) {
            return err(format!("question {} has no ground truth grade", r.question_id));
        }
        let denominator = if strict { results.len() + errored } else { results.len() };
        if denominator == 0 {
            return err("no question produced a graded result");
        }
        let accuracy = correct as f64 / denominator as f64;
        Ok(MetricsReport {
            accuracy,
            round_distribution: round_distribution(results).into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            questions: results.len() + errored,
            correct,
            errored,
        })
    }
}

/// Text histogram of correct answers by communication round.
pub fn render_round_report(results: &[EpisodeResult]) -> String {
    let dist = round_distribution(results);
    let correct = results.iter().filter(|r| r.correct == Some(true)).count();
    let mut s = format!("Correct answers by communication round ({correct} of {} episodes)\n", results.len());
    if dist.is_empty() {
        s.push_str("  (no correct episodes)\n");
        return s;
    }
    for (round, frac) in &dist {
        let bar = "#".repeat((frac * 50.0).round() as usize);
        let _ = writeln!(s, "  round {round:>2} | {bar:<50} | {:>5.1}%", frac * 100.0);
    }
    s
}

// ---------------------------------------------------------------------------
// JSONL plumbing

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("record serializes") + "\n").collect()
}

/// Parses JSONL; errors name `source` and the 1-based line.
pub fn from_jsonl<T: DeserializeOwned>(text: &str, source: &str) -> Result<Vec<T>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| DatasetError(format!("{source}:{}: {e}", i + 1))))
        .collect()
}

/// Joins a run's results with its transcripts (keyed by question id).
pub fn load_run(results: &str, transcripts: &str) -> Result<Vec<EpisodeResult>, DatasetError> {
    let mut eps: Vec<EpisodeResult> = from_jsonl(results, "results.jsonl")?;
    let lines: Vec<TranscriptLine> = from_jsonl(transcripts, "transcripts.jsonl")?;
    let mut by_episode: BTreeMap<&str, Vec<TranscriptLine>> = BTreeMap::new();
    for l in &lines {
        by_episode.entry(l.episode.as_str()).or_default().push(l.clone());
    }
    for ep in &mut eps {
        match by_episode.get(ep.question_id.as_str()) {
            Some(ls) => ep.transcript = Transcript::from_lines(ls),
            None => return err(format!("results.jsonl: no transcript for episode {}", ep.question_id)),
        }
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_edge_cases() {
        assert!((dpo_loss_from_margin(1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((dpo_loss_from_margin(0.1, 100.0) - 4.5398899216870535e-5).abs() < 1e-15);
        assert!(dpo_loss_from_margin(1.0, -1e6) > 1e5);
        assert_eq!(sft_loss_reference(&[-0.5]).unwrap(), 0.5);
        assert_eq!(sft_loss_reference(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(sft_loss_reference(&[]).is_err());
        let bad = LossInputs {
            chosen_logps_policy: vec![-1.0],
            chosen_logps_ref: vec![],
            rejected_logps_policy: vec![],
            rejected_logps_ref: vec![],
            beta: 0.1,
        };
        assert!(dpo_loss_reference(&bad).is_err());
    }

    #[test]
    fn compensated_sum() {
        assert_eq!(sum(&[1e16, 1.0, -1e16]), 1.0);
    }
}
