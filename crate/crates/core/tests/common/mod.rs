//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use scenecode::api::{ApiOptions, ToolContext};
use scenecode::interp::{self, EvalLimits};
use scenecode::relations::RelationConfig;
use scenecode::scene::{load_scene, Scene};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_scene(name: &str) -> Scene {
    let path = fixtures_dir().join("scenes").join(name);
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    load_scene(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Runs `source` against `scene` with default configuration and returns the feedback text.
pub fn feedback(source: &str, scene: &Scene) -> String {
    let cfg = RelationConfig::default();
    let options = ApiOptions::default();
    let ctx = ToolContext::new(scene, &cfg, &options);
    interp::format_feedback(&interp::run_program(source, &ctx, &EvalLimits::default()))
}

pub struct GoldenCase {
    pub name: String,
    pub source: String,
    pub scene: String,
    pub expected: String,
}

/// Golden programs: `NN_name.py` whose first line is `# scene: <file>`, with
/// the expected feedback in `NN_name.expected`.
pub fn golden_cases() -> Vec<GoldenCase> {
    let dir = fixtures_dir().join("programs");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("programs dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "py"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let source = std::fs::read_to_string(&p).expect("program");
            let scene = source
                .lines()
                .next()
                .and_then(|l| l.strip_prefix("# scene: "))
                .unwrap_or_else(|| panic!("{} lacks a scene header", p.display()))
                .trim()
                .to_string();
            let expected = std::fs::read_to_string(p.with_extension("expected")).expect("expected output");
            GoldenCase { name: p.file_stem().unwrap().to_string_lossy().into_owned(), source, scene, expected }
        })
        .collect()
}

const SOUP: &[&str] = &[
    "x",
    "y",
    "obj",
    "scene",
    "filter",
    "relate",
    "relate_agent",
    "query_relation",
    "query_attribute",
    "query_state",
    "print",
    "len",
    "sorted",
    "range",
    "set",
    "list",
    "lambda",
    "for",
    "in",
    "if",
    "elif",
    "else",
    "and",
    "or",
    "not",
    "None",
    "True",
    "False",
    "break",
    "continue",
    "pass",
    "import",
    "while",
    "def",
    "=",
    "==",
    "+=",
    "+",
    "-",
    "*",
    "/",
    "//",
    "%",
    "**",
    "<",
    ">",
    "(",
    ")",
    "[",
    "]",
    "{",
    "}",
    ",",
    ":",
    ".",
    "\n",
    "\n    ",
    "    ",
    "0",
    "1",
    "7",
    "-3",
    "2.5",
    "1e308",
    "\"table\"",
    "'on'",
    "f\"{x}\"",
    "f'{x!r:>5}'",
    "category",
    "xyz",
    "#c",
    "\\",
    "\"\"\"",
    "'",
    "9223372036854775807",
    "append",
    "update",
    "join",
    "object_set=",
    "relation=",
];

/// Random concatenation of grammar fragments; mostly invalid programs.
pub fn token_soup(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..40);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(SOUP[rng.gen_range(0..SOUP.len())]);
        if rng.gen_bool(0.6) {
            s.push(' ');
        }
    }
    s
}

/// Random scene of 2..=`max_objects` boxes: floor-standing objects with a
/// random heading (or none), some stacked on earlier ones with a small gap,
/// and an agent at a random position facing a random yaw (slightly tilted).
pub fn random_scene(rng: &mut impl Rng, scene_id: &str, max_objects: usize) -> Scene {
    use scenecode::scene::{scene_from_file, AgentFile, AttributesFile, ObjectFile, SceneFile};
    let n = rng.gen_range(2..=max_objects);
    let mut objects: Vec<ObjectFile> = Vec::with_capacity(n);
    for i in 0..n {
        let lwh = [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.05..1.5)];
        let heading = rng.gen_bool(0.5).then(|| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let center = if i > 0 && rng.gen_bool(0.35) {
            let base = &objects[rng.gen_range(0..i)];
            let gap = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.4) };
            [
                base.center[0] + rng.gen_range(-0.5..0.5) * base.lwh[0],
                base.center[1] + rng.gen_range(-0.5..0.5) * base.lwh[1],
                base.center[2] + base.lwh[2] / 2.0 + gap + lwh[2] / 2.0,
            ]
        } else {
            [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), lwh[2] / 2.0]
        };
        objects.push(ObjectFile {
            id: i as u32 + 1,
            category: ["chair", "table", "lamp", "box", "cup"][rng.gen_range(0..5)].to_string(),
            center,
            lwh,
            heading,
            attributes: AttributesFile::default(),
        });
    }
    let yaw: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let tilt: f64 = rng.gen_range(-0.2..0.2);
    // yaw about z composed with a small roll about x: q = q_yaw * q_roll
    let (sy, cy) = (yaw / 2.0).sin_cos();
    let (sr, cr) = (tilt / 2.0).sin_cos();
    let rotation = [cy * sr, sy * sr, sy * cr, cy * cr];
    let file = SceneFile {
        scene_id: scene_id.to_string(),
        agent: AgentFile {
            position: [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(0.0..1.8)],
            rotation,
            reference_axis: None,
        },
        objects,
    };
    scene_from_file(file).expect("generated scene is valid")
}

pub mod oracle;
