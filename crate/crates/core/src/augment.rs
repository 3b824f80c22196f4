//! Question augmentation: group questions asked from the same viewpoint,
//! ask a model to compose harder questions from them, and parse the reply
//! into new question records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{answer, Pose, Question, MAX_ANSWER_WORDS};
use crate::llm::{ChatMessage, ClientSource, Role};
use crate::parallel::map_with_jobs;

/// Prefix of every generated question id.
pub const AUG_PREFIX: &str = "aug:";

const TEMPLATE: &str = "You are a robot specialized in 3D scenes. Your position is as follows:
```
{situation}
```
Here is a series of existing questions and answers in the this scene.
```
{previous_questions}
```
You need to combine these questions and answers to construct {num_questions} more complex questions to increase the reasoning difficulty.
IMPORTANT: 
1. you need to reply in the following json format, just a list of questions. no other words.
2. {num_questions} is the number of questions you need to generate.
<return_format>
```json
[
    ...
    {
        \"answer\": \"three\",
        \"question\": \"How many chairs are immediately to the left?\"
    }
    ...
]
```";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Grid size (metres, and quaternion units) for pose identity.
    pub position_tolerance: f64,
    /// Groups sent to the model concurrently.
    pub max_in_flight: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { position_tolerance: 1e-4, max_in_flight: 4 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.position_tolerance > 0.0 && self.position_tolerance.is_finite()) {
            return Err("augment.position_tolerance must be positive".into());
        }
        if self.max_in_flight == 0 {
            return Err("augment.max_in_flight must be at least 1".into());
        }
        Ok(())
    }
}

/// Scene plus pose rounded to the tolerance grid, with the quaternion sign
/// fixed so that `q` and `-q` coincide.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositionKey {
    pub scene_id: String,
    pub xyz: [i64; 3],
    pub quat: [i64; 4],
    decimals: usize,
}

impl PositionKey {
    pub fn new(scene_id: &str, pose: &Pose, tolerance: f64) -> Self {
        let round = |v: f64| (v / tolerance).round() as i64;
        let xyz = pose.xyz.map(round);
        let mut quat = pose.quat.map(round);
        // quat is (x, y, z, w): w >= 0, and when w == 0 the first non-zero component is positive.
        let lead = [quat[3], quat[0], quat[1], quat[2]].into_iter().find(|&c| c != 0).unwrap_or(0);
        if lead < 0 {
            quat = quat.map(|c| -c);
        }
        let decimals = (-tolerance.log10()).ceil().max(0.0) as usize;
        Self { scene_id: scene_id.to_string(), xyz, quat, decimals }
    }
}

impl fmt::Display for PositionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = 10f64.powi(-(self.decimals as i32));
        let d = self.decimals;
        let join = |v: &[i64]| v.iter().map(|&c| format!("{:.d$}", c as f64 * unit)).collect::<Vec<_>>().join(",");
        write!(f, "{}@[{}]/[{}]", self.scene_id, join(&self.xyz), join(&self.quat))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub groups: BTreeMap<PositionKey, Vec<Question>>,
    /// Ids of records without a pose.
    pub skipped: Vec<String>,
}

/// Partitions records by viewpoint; records without a pose are skipped.
pub fn group_by_position(records: &[Question], tolerance: f64) -> Grouping {
    let mut groups: BTreeMap<PositionKey, Vec<Question>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for r in records {
        match &r.position {
            Some(p) => groups.entry(PositionKey::new(&r.scene_id, p, tolerance)).or_default().push(r.clone()),
            None => skipped.push(r.question_id.clone()),
        }
    }
    Grouping { groups, skipped }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentRequest {
    pub situation: String,
    pub pairs: Vec<(String, String)>,
    pub num_questions: usize,
}

impl AugmentRequest {
    pub fn new(situation: impl Into<String>, pairs: Vec<(String, String)>) -> Self {
        let num_questions = pairs.len().div_ceil(2).max(1);
        Self { situation: situation.into(), pairs, num_questions }
    }
}

/// Fills the augmentation template.
pub fn build_augment_prompt(req: &AugmentRequest) -> String {
    let previous = req.pairs.iter().map(|(q, a)| format!("Q: {q} A: {a}")).collect::<Vec<_>>().join("\n");
    TEMPLATE
        .replace("{situation}", &req.situation)
        .replace("{previous_questions}", &previous)
        .replace("{num_questions}", &req.num_questions.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Entry index in the returned array; absent when the whole reply was rejected.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Generated {
    pub pairs: Vec<(String, String)>,
    pub rejected: Vec<Rejection>,
}

fn strip_json_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
        return body.trim_end().strip_suffix("```").unwrap_or(body).trim();
    }
    t
}

/// Parses the model's JSON array of `{question, answer}` objects. Bad
/// entries are rejected one by one; a reply that is not an array yields no
/// pairs and a single rejection.
pub fn parse_generated(text: &str) -> Generated {
    let mut out = Generated::default();
    let value: serde_json::Value = match serde_json::from_str(strip_json_fence(text)) {
        Ok(v) => v,
        Err(e) => {
            out.rejected.push(Rejection { index: None, reason: format!("reply is not valid JSON: {e}") });
            return out;
        }
    };
    let Some(items) = value.as_array() else {
        out.rejected.push(Rejection { index: None, reason: "reply is not a JSON array".into() });
        return out;
    };
    for (i, item) in items.iter().enumerate() {
        let reject = |reason: &str| Rejection { index: Some(i), reason: reason.to_string() };
        let Some(obj) = item.as_object() else {
            out.rejected.push(reject("entry is not an object"));
            continue;
        };
        let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
        if keys != BTreeSet::from(["answer", "question"]) {
            out.rejected.push(reject("entry must have exactly the keys question and answer"));
            continue;
        }
        let (Some(q), Some(a)) = (obj["question"].as_str(), obj["answer"].as_str()) else {
            out.rejected.push(reject("question and answer must be strings"));
            continue;
        };
        let (q, a) = (q.trim(), a.trim());
        if q.is_empty() || a.is_empty() {
            out.rejected.push(reject("question and answer must be non-empty"));
            continue;
        }
        let words = answer::word_count(a);
        if words == 0 || words > MAX_ANSWER_WORDS {
            out.rejected.push(reject(&format!("answer has {words} words; at most {MAX_ANSWER_WORDS} allowed")));
            continue;
        }
        out.pairs.push((q.to_string(), a.to_string()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_group: String,
    pub source_questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupIssue {
    pub source_group: String,
    #[serde(flatten)]
    pub rejection: Rejection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AugmentReport {
    pub records: Vec<Question>,
    pub provenance: BTreeMap<String, Provenance>,
    /// Records without a pose.
    pub skipped_records: Vec<String>,
    /// Entries or whole replies rejected while parsing.
    pub rejections: Vec<GroupIssue>,
    /// Groups whose model call failed.
    pub failed_groups: Vec<GroupIssue>,
}

struct GroupOutcome {
    records: Vec<(Question, Provenance)>,
    rejections: Vec<GroupIssue>,
    failure: Option<GroupIssue>,
}

fn augment_group(key: &PositionKey, members: &[Question], clients: &ClientSource) -> GroupOutcome {
    let group = key.to_string();
    let issue =
        |index, reason: String| GroupIssue { source_group: group.clone(), rejection: Rejection { index, reason } };
    let mut outcome = GroupOutcome { records: Vec::new(), rejections: Vec::new(), failure: None };
    let pairs: Vec<(String, String)> =
        members.iter().filter_map(|m| m.answer.as_ref().map(|a| (m.question.clone(), a.clone()))).collect();
    if pairs.is_empty() {
        outcome.rejections.push(issue(None, "group has no answered questions".into()));
        return outcome;
    }
    let first = &members[0];
    let req = AugmentRequest::new(first.situation.clone(), pairs);
    let prompt = build_augment_prompt(&req);
    let client = clients.client_for(&first.question_id);
    let reply = match client.complete(&[ChatMessage::new(Role::User, prompt)]) {
        Ok(r) => r,
        Err(e) => {
            outcome.failure = Some(issue(None, e.to_string()));
            return outcome;
        }
    };
    let generated = parse_generated(&reply);
    outcome
        .rejections
        .extend(generated.rejected.into_iter().map(|r| GroupIssue { source_group: group.clone(), rejection: r }));
    let existing: BTreeSet<&str> = members.iter().map(|m| m.question.as_str()).collect();
    let sources: Vec<String> = members.iter().map(|m| m.question_id.clone()).collect();
    let mut k = 0;
    for (q, a) in generated.pairs {
        if existing.contains(q.as_str()) {
            outcome.rejections.push(issue(None, format!("duplicate of an existing question: {q}")));
            continue;
        }
        k += 1;
        let record = Question {
            question_id: format!("{AUG_PREFIX}{}:{k}", first.question_id),
            scene_id: first.scene_id.clone(),
            situation: first.situation.clone(),
            question: q,
            answer: Some(a),
            position: first.position.clone(),
        };
        outcome.records.push((record, Provenance { source_group: group.clone(), source_questions: sources.clone() }));
    }
    outcome
}

/// Runs the augmentation over all groups. Output order follows the sorted
/// group keys regardless of completion order.
pub fn augment_dataset(records: &[Question], clients: &ClientSource, cfg: &AugmentConfig) -> AugmentReport {
    let grouping = group_by_position(records, cfg.position_tolerance);
    let groups: Vec<(PositionKey, Vec<Question>)> = grouping.groups.into_iter().collect();
    let outcomes = map_with_jobs(cfg.max_in_flight, &groups, |(key, members)| augment_group(key, members, clients));
    let mut report = AugmentReport { skipped_records: grouping.skipped, ..AugmentReport::default() };
    for o in outcomes {
        for (record, prov) in o.records {
            report.provenance.insert(record.question_id.clone(), prov);
            report.records.push(record);
        }
        report.rejections.extend(o.rejections);
        report.failed_groups.extend(o.failure);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(xyz: [f64; 3], quat: [f64; 4]) -> Pose {
        Pose { xyz, quat }
    }

    #[test]
    fn keys_identify_opposite_quaternions_and_respect_the_grid() {
        let q = [0.0, 0.0, 0.38268343, 0.92387953];
        let neg = q.map(|c| -c);
        let a = PositionKey::new("s", &pose([1.0, 2.0, 0.0], q), 1e-4);
        assert_eq!(a, PositionKey::new("s", &pose([1.0, 2.0, 0.0], neg), 1e-4));
        assert_ne!(a, PositionKey::new("s", &pose([1.0002, 2.0, 0.0], q), 1e-4));
        assert_ne!(a, PositionKey::new("t", &pose([1.0, 2.0, 0.0], q), 1e-4));
        let w0 = PositionKey::new("s", &pose([0.0; 3], [0.0, 0.0, -1.0, 0.0]), 1e-4);
        assert_eq!(w0, PositionKey::new("s", &pose([0.0; 3], [0.0, 0.0, 1.0, 0.0]), 1e-4));
        assert_eq!(a.to_string(), "s@[1.0000,2.0000,0.0000]/[0.0000,0.0000,0.3827,0.9239]");
    }

    #[test]
    fn num_questions_is_half_rounded_up() {
        for n in 1..=8usize {
            let pairs = vec![("q".to_string(), "a".to_string()); n];
            assert_eq!(AugmentRequest::new("s", pairs).num_questions, n.div_ceil(2));
        }
    }

    #[test]
    fn parsing_rejects_entries_individually() {
        let text = "```json\n[{\"answer\": \"three\", \"question\": \"How many chairs are immediately to the left?\"},\n {\"question\": \"q\"},\n {\"question\": \"What is it?\", \"answer\": \"a very long answer here\"},\n {\"question\": \"\", \"answer\": \"x\"}]\n```";
        let g = parse_generated(text);
        assert_eq!(g.pairs, vec![("How many chairs are immediately to the left?".into(), "three".into())]);
        assert_eq!(g.rejected.iter().map(|r| r.index).collect::<Vec<_>>(), vec![Some(1), Some(2), Some(3)]);
        let bad = parse_generated("{\"question\": \"q\", \"answer\": \"a\"}");
        assert!(bad.pairs.is_empty());
        assert_eq!(bad.rejected[0].index, None);
    }

    #[test]
    fn prompt_substitution() {
        let req = AugmentRequest::new(
            "I am sitting on the bed.",
            vec![("What is in front of me?".into(), "desk".into()), ("How many chairs?".into(), "two".into())],
        );
        let p = build_augment_prompt(&req);
        assert!(p.contains("```\nI am sitting on the bed.\n```"));
        assert!(p.contains("Q: What is in front of me? A: desk\nQ: How many chairs? A: two\n"));
        assert!(p.contains("construct 1 more complex questions"));
        assert!(p.contains("    {\n        \"answer\": \"three\","));
    }
}
