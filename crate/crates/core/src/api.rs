//! The scene-query functions exposed to generated programs.
//!
//! Functions here work on object ids and plain Rust values; the interpreter
//! converts to and from its own value model. Error messages are written for
//! the model reading them back, so they name the offending argument and list
//! the accepted values.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::relations::{
    self, all_relations, center_distance, closest_among, egocentric_relations, farthest_among, RelationConfig,
    RelationError, RelationLabel,
};
use crate::scene::{ObjectId, ObjectInstance, Scene};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError(pub String);

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ApiError {}

impl From<RelationError> for ApiError {
    fn from(e: RelationError) -> Self {
        ApiError(e.to_string())
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

/// Decides a text attribute when the annotation cannot answer directly.
///
/// Called when the object has no stored value for `kind`, or when the stored
/// value is not among `candidates`. An empty `candidates` slice means the
/// caller gave none.
pub trait AttributeClassifier: Send + Sync {
    fn classify(&self, object: &ObjectInstance, kind: &str, candidates: &[String]) -> Result<String, String>;
}

/// Never guesses: reports why the annotation could not answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnnotationOnly;

impl AttributeClassifier for AnnotationOnly {
    fn classify(&self, object: &ObjectInstance, kind: &str, candidates: &[String]) -> Result<String, String> {
        match object.attribute(kind) {
            Some(stored) => Err(format!(
                "the {kind} of object {} ({}) is '{stored}', which is not among the candidates {}",
                object.id,
                object.category,
                py_list(candidates)
            )),
            None => Err(format!("attribute {kind} unavailable for object {}", object.id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiOptions {
    /// Lets `filter` match through the synonym table and category head nouns.
    pub category_synonyms: bool,
    /// Query term to extra stored categories it should match.
    pub synonyms: BTreeMap<String, Vec<String>>,
}

impl Default for ApiOptions {
    fn default() -> Self {
        let synonyms = [
            ("cabinet", &["file cabinet", "kitchen cabinet", "cabinets"][..]),
            ("couch", &["sofa", "sofa chair"][..]),
            ("sofa", &["couch"][..]),
            ("trash can", &["trash bin", "garbage bin", "recycling bin"][..]),
            ("tv", &["television"][..]),
            ("television", &["tv"][..]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
        .collect();
        Self { category_synonyms: false, synonyms }
    }
}

/// Everything a program's API calls read.
#[derive(Clone, Copy)]
pub struct ToolContext<'a> {
    pub scene: &'a Scene,
    pub relations: &'a RelationConfig,
    pub options: &'a ApiOptions,
    pub classifier: &'a dyn AttributeClassifier,
}

impl<'a> ToolContext<'a> {
    pub fn new(scene: &'a Scene, relations: &'a RelationConfig, options: &'a ApiOptions) -> Self {
        Self { scene, relations, options, classifier: &AnnotationOnly }
    }

    pub fn with_classifier(self, classifier: &'a dyn AttributeClassifier) -> Self {
        Self { classifier, ..self }
    }

    pub fn object(&self, id: ObjectId) -> ApiResult<&'a ObjectInstance> {
        self.scene.object(id).ok_or_else(|| ApiError(format!("object {id} does not exist in this scene")))
    }

    fn objects(&self, ids: &[ObjectId]) -> ApiResult<Vec<&'a ObjectInstance>> {
        let unique: BTreeSet<ObjectId> = ids.iter().copied().collect();
        unique.into_iter().map(|id| self.object(id)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeQueryKind {
    Lwh,
    Distance,
    Color,
    Shape,
    Material,
}

impl AttributeQueryKind {
    pub const ALL: [(&'static str, AttributeQueryKind); 5] = [
        ("lwh", Self::Lwh),
        ("distance", Self::Distance),
        ("color", Self::Color),
        ("shape", Self::Shape),
        ("material", Self::Material),
    ];

    pub fn parse(s: &str) -> ApiResult<Self> {
        Self::ALL.iter().find(|(name, _)| *name == s).map(|(_, k)| *k).ok_or_else(|| {
            ApiError(format!(
                "attribute_type must be chosen from the following list: [\"lwh\", \"distance\", \"color\", \"shape\", \"material\"], got '{s}'"
            ))
        })
    }

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).expect("listed")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Lwh([f64; 3]),
    Distance(f64),
    Text(String),
}

const AGENT_DIRECTIONS: &str = "left, right, front, back, o'clock";

fn vocabulary() -> String {
    RelationLabel::OBJECT_VOCABULARY.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ")
}

/// Renders strings as a Python list literal, for error messages.
fn py_list(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("'{s}'")).collect();
    format!("[{}]", inner.join(", "))
}

/// A relation token as written by the caller.
#[derive(Debug, Clone, PartialEq)]
enum RelationToken {
    Label(RelationLabel),
    /// The bare "o'clock" candidate, standing for whichever sector applies.
    AnyClock,
}

fn parse_token(raw: &str) -> Option<RelationToken> {
    let norm = raw.trim().to_lowercase().replace('_', " ");
    let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
    let canonical = match norm.as_str() {
        "behind" => "back",
        "in front" | "in front of" => "front",
        "close" | "close to" | "within_reach" => "within reach",
        "o'clock" | "oclock" | "o clock" => return Some(RelationToken::AnyClock),
        other => other,
    };
    canonical.parse().ok().map(RelationToken::Label)
}

fn parse_relation(raw: &str) -> ApiResult<RelationLabel> {
    match parse_token(raw) {
        Some(RelationToken::Label(l)) => Ok(l),
        _ => Err(ApiError(format!("unknown relation '{raw}'; valid relations are: {}", vocabulary()))),
    }
}

fn category_matches(stored: &str, query: &str, options: &ApiOptions) -> bool {
    let q = query.trim().to_lowercase();
    if stored == q {
        return true;
    }
    if !options.category_synonyms {
        return false;
    }
    if options.synonyms.get(&q).is_some_and(|alts| alts.iter().any(|a| a == stored)) {
        return true;
    }
    // Head noun: "file cabinet" answers to "cabinet".
    stored.rsplit(' ').next() == Some(q.as_str())
}

// ---------------------------------------------------------------------------

pub fn scene_all(ctx: &ToolContext<'_>) -> Vec<ObjectId> {
    ctx.scene.objects.keys().copied().collect()
}

pub fn filter(ctx: &ToolContext<'_>, ids: &[ObjectId], category: &str) -> ApiResult<Vec<ObjectId>> {
    Ok(ctx
        .objects(ids)?
        .into_iter()
        .filter(|o| category_matches(&o.category, category, ctx.options))
        .map(|o| o.id)
        .collect())
}

pub fn relate(
    ctx: &ToolContext<'_>,
    ids: &[ObjectId],
    reference: ObjectId,
    relation: &str,
) -> ApiResult<Vec<ObjectId>> {
    let label = parse_relation(relation)?;
    if let RelationLabel::OClock(_) = label {
        return Err(ApiError(format!("relation '{relation}' is only defined relative to the agent; use relate_agent")));
    }
    let reference = ctx.object(reference)?;
    let cfg = ctx.relations;
    let others: Vec<&ObjectInstance> = ctx.objects(ids)?.into_iter().filter(|o| o.id != reference.id).collect();
    let out = match label {
        RelationLabel::Closest => {
            closest_among(others.iter().copied(), reference.center(), cfg).map(|o| o.id).into_iter().collect()
        }
        RelationLabel::Farthest => {
            farthest_among(others.iter().copied(), reference.center(), cfg).map(|o| o.id).into_iter().collect()
        }
        l if l.is_directional() => {
            let forward = relations::viewer_frame(reference, ctx.scene)?;
            others
                .iter()
                .filter(|o| relations::allocentric_relations(o, reference, forward, cfg).contains(&l))
                .map(|o| o.id)
                .collect()
        }
        RelationLabel::On | RelationLabel::Above | RelationLabel::Below => others
            .iter()
            .filter(|o| relations::vertical_relation(o, reference, cfg).label() == Some(label))
            .map(|o| o.id)
            .collect(),
        RelationLabel::WithinReach => {
            others.iter().filter(|o| relations::is_within_reach(o, reference, cfg)).map(|o| o.id).collect()
        }
        RelationLabel::Around => {
            others.iter().filter(|o| relations::is_around(o, reference, cfg)).map(|o| o.id).collect()
        }
        _ => unreachable!("o'clock handled above"),
    };
    Ok(out)
}

pub fn relate_agent(ctx: &ToolContext<'_>, ids: &[ObjectId], relation: &str) -> ApiResult<Vec<ObjectId>> {
    let label = parse_relation(relation)?;
    let cfg = ctx.relations;
    let agent = &ctx.scene.agent;
    let objects = ctx.objects(ids)?;
    let out = match label {
        RelationLabel::Closest => {
            closest_among(objects.iter().copied(), agent.position, cfg).map(|o| o.id).into_iter().collect()
        }
        RelationLabel::Farthest => {
            farthest_among(objects.iter().copied(), agent.position, cfg).map(|o| o.id).into_iter().collect()
        }
        RelationLabel::WithinReach => objects
            .iter()
            .filter(|o| center_distance(o.center(), agent.position) < cfg.wr_dist_m)
            .map(|o| o.id)
            .collect(),
        RelationLabel::Around => objects
            .iter()
            .filter(|o| center_distance(o.center(), agent.position) < cfg.ar_dist_m)
            .map(|o| o.id)
            .collect(),
        RelationLabel::On | RelationLabel::Above | RelationLabel::Below => {
            return Err(ApiError(format!("relation '{relation}' cannot be evaluated relative to the agent")));
        }
        _ => {
            let mut out = Vec::new();
            for o in objects {
                match egocentric_relations(o, agent, cfg, true) {
                    Ok(rels) if rels.contains(&label) => out.push(o.id),
                    Ok(_) | Err(RelationError::ZeroDirection) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            out
        }
    };
    Ok(out)
}

fn parse_candidates(candidates: &[String], allow_clock: bool, valid: &str) -> ApiResult<Vec<(RelationToken, String)>> {
    candidates
        .iter()
        .map(|raw| match parse_token(raw) {
            Some(RelationToken::AnyClock) if !allow_clock => {
                Err(ApiError(format!("candidate relation '{raw}' is only available in query_relation_agent")))
            }
            Some(RelationToken::Label(RelationLabel::OClock(_))) if !allow_clock => {
                Err(ApiError(format!("candidate relation '{raw}' is only available in query_relation_agent")))
            }
            Some(tok) => Ok((tok, raw.clone())),
            None => Err(ApiError(format!("unknown candidate relation '{raw}'; valid relations are: {valid}"))),
        })
        .collect()
}

fn select(labels: &[RelationLabel], candidates: &[(RelationToken, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for label in labels {
        let hit = candidates.iter().find(|(tok, _)| match tok {
            RelationToken::Label(l) => l == label,
            RelationToken::AnyClock => matches!(label, RelationLabel::OClock(_)),
        });
        match hit {
            Some((RelationToken::AnyClock, _)) => out.push(label.to_string()),
            Some((_, raw)) => out.push(raw.clone()),
            None => {}
        }
    }
    out
}

pub fn default_object_candidates() -> Vec<String> {
    ["left", "right", "front", "back"].map(String::from).to_vec()
}

pub fn default_agent_candidates() -> Vec<String> {
    ["left", "right", "front", "back", "o'clock"].map(String::from).to_vec()
}

pub fn query_relation(
    ctx: &ToolContext<'_>,
    object: ObjectId,
    reference: ObjectId,
    candidates: Option<&[String]>,
) -> ApiResult<Vec<String>> {
    if object == reference {
        return Err(ApiError("object and reference_object must be different objects".into()));
    }
    let defaults = default_object_candidates();
    let cands = parse_candidates(candidates.unwrap_or(&defaults), false, &vocabulary())?;
    let rels = all_relations(ctx.object(object)?, ctx.object(reference)?, ctx.scene, ctx.relations)?;
    Ok(select(&rels, &cands))
}

pub fn query_relation_agent(
    ctx: &ToolContext<'_>,
    object: ObjectId,
    candidates: Option<&[String]>,
) -> ApiResult<Vec<String>> {
    let defaults = default_agent_candidates();
    let cands = parse_candidates(candidates.unwrap_or(&defaults), true, AGENT_DIRECTIONS)?;
    for (tok, raw) in &cands {
        if let RelationToken::Label(l) = tok {
            if !(l.is_directional() || matches!(l, RelationLabel::OClock(_))) {
                return Err(ApiError(format!(
                    "candidate relation '{raw}' is not supported by query_relation_agent; choose from {AGENT_DIRECTIONS}"
                )));
            }
        }
    }
    let rels = egocentric_relations(ctx.object(object)?, &ctx.scene.agent, ctx.relations, true)?;
    Ok(select(&rels, &cands))
}

fn resolve_text(
    ctx: &ToolContext<'_>,
    object: &ObjectInstance,
    kind: &str,
    candidates: Option<&[String]>,
) -> ApiResult<String> {
    let stored = object.attribute(kind);
    let Some(cands) = candidates else {
        return match stored {
            Some(v) => Ok(v.to_string()),
            None => ctx.classifier.classify(object, kind, &[]).map_err(ApiError),
        };
    };
    if let Some(hit) = stored.and_then(|v| cands.iter().find(|c| c.trim().eq_ignore_ascii_case(v))) {
        return Ok(hit.clone());
    }
    let chosen = ctx.classifier.classify(object, kind, cands).map_err(ApiError)?;
    if !cands.contains(&chosen) {
        return Err(ApiError(format!(
            "attribute classifier returned '{chosen}' for {kind}, which is not among the candidates {}",
            py_list(cands)
        )));
    }
    Ok(chosen)
}

pub fn query_attribute(
    ctx: &ToolContext<'_>,
    object: ObjectId,
    attribute_type: &str,
    candidates: Option<&[String]>,
) -> ApiResult<AttributeValue> {
    let kind = AttributeQueryKind::parse(attribute_type)?;
    let o = ctx.object(object)?;
    match kind {
        AttributeQueryKind::Lwh => Ok(AttributeValue::Lwh(o.bbox.lwh)),
        AttributeQueryKind::Distance => {
            Ok(AttributeValue::Distance(center_distance(o.center(), ctx.scene.agent.position)))
        }
        _ => {
            if candidates.is_some_and(|c| c.is_empty()) {
                return Err(ApiError("candidate_attribute_values must not be empty when provided".into()));
            }
            resolve_text(ctx, o, kind.name(), candidates).map(AttributeValue::Text)
        }
    }
}

pub fn query_state(ctx: &ToolContext<'_>, object: ObjectId, candidates: &[String]) -> ApiResult<String> {
    if candidates.is_empty() {
        return Err(ApiError("candidate_states must be a non-empty list".into()));
    }
    let o = ctx.object(object)?;
    resolve_text(ctx, o, "state", Some(candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AgentPose, OrientedBox, Quaternion, Vec3};

    fn obj(id: u32, cat: &str, c: [f64; 3], lwh: [f64; 3], attrs: &[(&str, &str)]) -> ObjectInstance {
        ObjectInstance {
            id: ObjectId(id),
            category: cat.into(),
            bbox: OrientedBox::axis_aligned(Vec3::from_array(c), lwh),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    fn scene(objects: Vec<ObjectInstance>) -> Scene {
        Scene {
            scene_id: "t".into(),
            objects: objects.into_iter().map(|o| (o.id, o)).collect(),
            agent: AgentPose::new(Vec3::default(), Quaternion::IDENTITY),
        }
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filter_exact_and_synonym() {
        let s = scene(vec![
            obj(1, "table", [2.0, 0.0, 0.4], [1.0, 1.0, 0.8], &[]),
            obj(2, "table", [4.0, 0.0, 0.4], [1.0, 1.0, 0.8], &[]),
            obj(3, "chair", [3.0, 1.0, 0.4], [0.5, 0.5, 0.8], &[]),
            obj(4, "file cabinet", [3.0, 3.0, 0.4], [0.5, 0.5, 0.8], &[]),
        ]);
        let rel = RelationConfig::default();
        let mut opts = ApiOptions::default();
        let ctx = ToolContext::new(&s, &rel, &opts);
        let all = scene_all(&ctx);
        assert_eq!(filter(&ctx, &all, "Table").unwrap(), vec![ObjectId(1), ObjectId(2)]);
        assert!(filter(&ctx, &all, "sofa").unwrap().is_empty());
        assert!(filter(&ctx, &all, "cabinet").unwrap().is_empty());
        opts.category_synonyms = true;
        let ctx = ToolContext::new(&s, &rel, &opts);
        assert_eq!(filter(&ctx, &all, "cabinet").unwrap(), vec![ObjectId(4)]);
    }

    #[test]
    fn relate_unknown_relation_lists_vocabulary() {
        let s = scene(vec![obj(1, "a", [1.0, 0.0, 0.0], [1.0; 3], &[])]);
        let rel = RelationConfig::default();
        let opts = ApiOptions::default();
        let ctx = ToolContext::new(&s, &rel, &opts);
        let err = relate(&ctx, &[ObjectId(1)], ObjectId(1), "near-ish").unwrap_err();
        assert!(err.0.contains("within reach") && err.0.contains("near-ish"), "{err}");
        assert!(relate(&ctx, &[], ObjectId(1), "on").unwrap().is_empty());
    }

    #[test]
    fn relate_agent_front_and_reach() {
        let s = scene(vec![
            obj(1, "a", [-2.0, 0.0, 0.0], [0.2; 3], &[]),
            obj(2, "b", [-3.0, 0.5, 0.0], [0.2; 3], &[]),
            obj(3, "c", [0.0, -0.4, 0.0], [0.2; 3], &[]),
        ]);
        let rel = RelationConfig::default();
        let opts = ApiOptions::default();
        let ctx = ToolContext::new(&s, &rel, &opts);
        assert!(relate_agent(&ctx, &[ObjectId(1), ObjectId(2)], "front").unwrap().is_empty());
        assert_eq!(relate_agent(&ctx, &scene_all(&ctx), "within reach").unwrap(), vec![ObjectId(3)]);
        assert_eq!(relate_agent(&ctx, &scene_all(&ctx), "behind").unwrap(), vec![ObjectId(1), ObjectId(2)]);
    }

    #[test]
    fn query_relation_agent_alias_echo_and_clock() {
        let s = scene(vec![
            obj(1, "table", [-1.0, 1.0, 0.0], [0.5; 3], &[]),
            obj(2, "door", [3.0, 0.0, 0.0], [0.5; 3], &[]),
        ]);
        let rel = RelationConfig::default();
        let opts = ApiOptions::default();
        let ctx = ToolContext::new(&s, &rel, &opts);
        assert_eq!(
            query_relation_agent(&ctx, ObjectId(1), Some(&strings(&["left", "right", "front", "back"]))).unwrap(),
            strings(&["left", "back"])
        );
        assert_eq!(
            query_relation_agent(&ctx, ObjectId(1), Some(&strings(&["front", "behind"]))).unwrap(),
            strings(&["behind"])
        );
        assert_eq!(
            query_relation_agent(&ctx, ObjectId(2), Some(&strings(&["o'clock"]))).unwrap(),
            strings(&["12 o'clock"])
        );
        assert_eq!(query_relation_agent(&ctx, ObjectId(2), None).unwrap(), strings(&["front", "12 o'clock"]));
        assert!(query_relation_agent(&ctx, ObjectId(2), Some(&strings(&["on"]))).is_err());
    }

    #[test]
    fn attributes_and_states() {
        let s = scene(vec![
            obj(
                1,
                "desk",
                [3.0, 4.0, 0.0],
                [0.68883693, 0.29695976, 0.17185348],
                &[("color", "brown"), ("state", "neat")],
            ),
            obj(2, "box", [1.0, 0.0, 0.0], [1.0; 3], &[]),
        ]);
        let rel = RelationConfig::default();
        let opts = ApiOptions::default();
        let ctx = ToolContext::new(&s, &rel, &opts);
        assert_eq!(
            query_attribute(&ctx, ObjectId(1), "lwh", None).unwrap(),
            AttributeValue::Lwh([0.68883693, 0.29695976, 0.17185348])
        );
        assert_eq!(query_attribute(&ctx, ObjectId(1), "distance", None).unwrap(), AttributeValue::Distance(5.0));
        assert_eq!(
            query_attribute(&ctx, ObjectId(1), "color", Some(&strings(&["brown", "black", "red"]))).unwrap(),
            AttributeValue::Text("brown".into())
        );
        let err = query_attribute(&ctx, ObjectId(1), "weight", None).unwrap_err();
        assert!(err.0.contains("[\"lwh\", \"distance\", \"color\", \"shape\", \"material\"]"));
        let err = query_attribute(&ctx, ObjectId(2), "material", None).unwrap_err();
        assert_eq!(err.0, "attribute material unavailable for object 2");
        assert_eq!(query_state(&ctx, ObjectId(1), &strings(&["neat", "messy"])).unwrap(), "neat");
        assert!(query_state(&ctx, ObjectId(1), &[]).is_err());
        let err = query_state(&ctx, ObjectId(2), &strings(&["neat", "messy"])).unwrap_err();
        assert!(err.0.contains("state") && err.0.contains('2'));
    }

    struct FirstCandidate;
    impl AttributeClassifier for FirstCandidate {
        fn classify(&self, _: &ObjectInstance, _: &str, c: &[String]) -> Result<String, String> {
            c.first().cloned().ok_or_else(|| "no candidates".into())
        }
    }

    #[test]
    fn classifier_hook_decides_missing_state() {
        let s = scene(vec![obj(2, "box", [1.0, 0.0, 0.0], [1.0; 3], &[])]);
        let rel = RelationConfig::default();
        let opts = ApiOptions::default();
        let ctx = ToolContext::new(&s, &rel, &opts).with_classifier(&FirstCandidate);
        assert_eq!(query_state(&ctx, ObjectId(2), &strings(&["neat", "messy"])).unwrap(), "neat");
    }
}
