//! Subcommand implementations. Every command reports failures through
//! [`CliError`], whose variant fixes the process exit code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read as _;
use std::path::{Path, PathBuf};

use scenecode::agent::{self, EpisodeResult, LoopConfig, Mode, Pose, Question, Termination, ToolEnv};
use scenecode::augment::{self, Provenance};
use scenecode::config::{ConfigError, GlobalConfig};
use scenecode::dataset::{self, MetricsReport};
use scenecode::interp;
use scenecode::llm::ClientSource;
use scenecode::parallel::{map_with_jobs, Exec};
use scenecode::relations::relation_table;
use scenecode::scene::{load_scene, pose_from_parts, Scene};

use crate::{AskArgs, AugmentArgs, BuildArgs, Cli, Command, ExecArgs, PoseArgs, RelationsArgs, RunArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files (exit 2).
    Validation(String),
    /// A program raised an error under `exec` (exit 3).
    Runtime(String),
    /// The model endpoint failed (exit 4).
    Infra(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Infra(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) | CliError::Infra(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = GlobalConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Ask(a) => cmd_ask(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Collect(a) => cmd_collect(&cfg, a),
        Command::BuildSft(a) => cmd_build(&cfg, a, Dataset::Sft),
        Command::BuildDpo(a) => cmd_build(&cfg, a, Dataset::Dpo),
        Command::Augment(a) => cmd_augment(&cfg, a),
        Command::Relations(a) => cmd_relations(&cfg, a),
        Command::Exec(a) => cmd_exec(&cfg, a),
    }
}

// ---------------------------------------------------------------------------
// File helpers

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_scene_file(path: &Path) -> CliResult<Scene> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    load_scene(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn parse_floats<const N: usize>(flag: &str, text: &str) -> CliResult<[f64; N]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("--{flag} {text:?}: {e}")))?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| invalid(format!("--{flag} expects {N} comma-separated numbers, got {}", p.len())))
}

fn pose_arg(args: &PoseArgs) -> CliResult<Option<Pose>> {
    match (&args.position, &args.rotation) {
        (Some(p), Some(r)) => {
            let pose = Pose { xyz: parse_floats("position", p)?, quat: parse_floats("rotation", r)? };
            pose_from_parts(pose.xyz, pose.quat).map_err(|e| invalid(e.to_string()))?;
            Ok(Some(pose))
        }
        _ => Ok(None),
    }
}

fn posed(scene: Scene, pose: Option<&Pose>) -> CliResult<Scene> {
    match pose {
        Some(p) => Ok(scene.with_agent(pose_from_parts(p.xyz, p.quat).map_err(|e| invalid(e.to_string()))?)),
        None => Ok(scene),
    }
}

fn scene_dir(arg: Option<PathBuf>, cfg: &GlobalConfig) -> CliResult<PathBuf> {
    let dir = arg
        .or_else(|| cfg.paths.scene_dir.clone())
        .ok_or_else(|| invalid("no scene directory: pass --scenes or set paths.scene_dir"))?;
    if !dir.is_dir() {
        return Err(invalid(format!("{}: scene directory does not exist", dir.display())));
    }
    Ok(dir)
}

fn out_dir(arg: Option<PathBuf>, cfg: &GlobalConfig) -> CliResult<PathBuf> {
    arg.or_else(|| cfg.paths.output_dir.clone())
        .ok_or_else(|| invalid("no output directory: pass --out or set paths.output_dir"))
}

fn load_questions(path: &Path) -> CliResult<Vec<Question>> {
    let qs = agent::parse_questions(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    if qs.is_empty() {
        return Err(invalid(format!("{}: no questions", path.display())));
    }
    let mut seen = BTreeSet::new();
    for q in &qs {
        if !seen.insert(q.question_id.as_str()) {
            return Err(invalid(format!("{}: duplicate question_id {}", path.display(), q.question_id)));
        }
    }
    Ok(qs)
}

/// Loads each referenced scene once; failures are kept per scene id.
fn load_scenes<'a>(dir: &Path, ids: impl Iterator<Item = &'a str>) -> BTreeMap<String, Result<Scene, String>> {
    let mut out = BTreeMap::new();
    for id in ids {
        if out.contains_key(id) {
            continue;
        }
        let path = dir.join(format!("{id}.json"));
        let loaded = std::fs::read(&path)
            .map_err(|e| format!("{}: {e}", path.display()))
            .and_then(|b| load_scene(&b).map_err(|e| format!("{}: {e}", path.display())));
        out.insert(id.to_string(), loaded);
    }
    out
}

/// File-name-safe form of an id.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

// ---------------------------------------------------------------------------
// Episodes

#[derive(serde::Serialize)]
struct ErroredQuestion {
    question_id: String,
    error: String,
}

struct Batch {
    results: Vec<EpisodeResult>,
    errored: Vec<ErroredQuestion>,
}

impl Batch {
    fn infra_errors(&self) -> usize {
        self.results.iter().filter(|r| r.terminated_by == Termination::InfraError).count()
    }
}

fn run_batch(
    questions: &[Question],
    scenes: &BTreeMap<String, Result<Scene, String>>,
    clients: &ClientSource,
    loop_cfg: &LoopConfig,
    env: &ToolEnv,
    jobs: usize,
) -> Batch {
    let outcomes = map_with_jobs(jobs, questions, |q| {
        let scene = scenes[&q.scene_id].as_ref().map_err(Clone::clone)?;
        let client = clients.client_for(&q.question_id);
        agent::run_question(q, scene, client.as_ref(), loop_cfg, env).map_err(|e| e.to_string())
    });
    let mut batch = Batch { results: Vec::new(), errored: Vec::new() };
    for (q, o) in questions.iter().zip(outcomes) {
        match o {
            Ok(r) => batch.results.push(r),
            Err(error) => batch.errored.push(ErroredQuestion { question_id: q.question_id.clone(), error }),
        }
    }
    batch.results.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    batch.errored.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    batch
}

fn write_batch(dir: &Path, batch: &Batch) -> CliResult<()> {
    write_text(&dir.join("results.jsonl"), &dataset::to_jsonl(&batch.results))?;
    let transcripts: String = batch.results.iter().map(|r| r.transcript.to_jsonl(&r.question_id)).collect();
    write_text(&dir.join("transcripts.jsonl"), &transcripts)?;
    write_text(&dir.join("errors.jsonl"), &dataset::to_jsonl(&batch.errored))
}

fn infra_check(batch: &Batch) -> CliResult<()> {
    match batch.infra_errors() {
        0 => Ok(()),
        n => Err(CliError::Infra(format!("{n} episode(s) stopped on model endpoint errors"))),
    }
}

fn cmd_ask(cfg: &GlobalConfig, a: AskArgs) -> CliResult<()> {
    let scene = load_scene_file(&a.scene)?;
    let question = Question {
        question_id: a.question_id,
        scene_id: scene.scene_id.clone(),
        situation: a.situation,
        question: a.question,
        answer: a.answer,
        position: pose_arg(&a.pose)?,
    };
    let clients = cfg.client_source()?;
    let client = clients.client_for(&question.question_id);
    let loop_cfg = cfg.loop_cfg.with_mode(a.mode.into());
    let result = agent::run_question(&question, &scene, client.as_ref(), &loop_cfg, &cfg.tool_env())
        .map_err(|e| invalid(e.to_string()))?;
    let dir = a.out.or_else(|| cfg.paths.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let path = dir.join(format!("{}.transcript.jsonl", file_stem(&question.question_id)));
    write_text(&path, &result.transcript.to_jsonl(&question.question_id))?;
    if result.terminated_by == Termination::InfraError {
        return Err(CliError::Infra(format!(
            "model endpoint failed: {}; transcript: {}",
            result.error.as_deref().unwrap_or("unknown error"),
            path.display()
        )));
    }
    println!("{}", result.final_answer);
    println!("rounds_used: {}", result.rounds_used);
    if let Some(c) = result.correct {
        println!("correct: {c}");
    }
    println!("transcript: {}", path.display());
    Ok(())
}

fn cmd_eval(cfg: &GlobalConfig, a: RunArgs) -> CliResult<()> {
    let questions = load_questions(&a.questions)?;
    if let Some(q) = questions.iter().find(|q| q.answer.is_none()) {
        return Err(invalid(format!(
            "{}: question {} has no answer to grade against",
            a.questions.display(),
            q.question_id
        )));
    }
    let dir = out_dir(a.out, cfg)?;
    let scenes = load_scenes(&scene_dir(a.scenes, cfg)?, questions.iter().map(|q| q.scene_id.as_str()));
    let clients = cfg.client_source()?;
    let loop_cfg = cfg.loop_cfg.with_mode(Mode::Eval);
    let batch = run_batch(&questions, &scenes, &clients, &loop_cfg, &cfg.tool_env(), a.jobs);
    write_batch(&dir, &batch)?;

    // Infra failures carry no grade; they count as errored alongside unloadable scenes.
    let graded: Vec<EpisodeResult> = batch.results.iter().filter(|r| r.correct.is_some()).cloned().collect();
    let errored = questions.len() - graded.len();
    let report = MetricsReport::new(&graded, errored, a.strict).map_err(|e| invalid(e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("metrics serialize") + "\n";
    write_text(&dir.join("metrics.json"), &json)?;
    print!("{json}");
    print!("{}", dataset::render_round_report(&graded));
    infra_check(&batch)
}

fn cmd_collect(cfg: &GlobalConfig, a: RunArgs) -> CliResult<()> {
    let questions = load_questions(&a.questions)?;
    let dir = out_dir(a.out, cfg)?;
    let scenes = load_scenes(&scene_dir(a.scenes, cfg)?, questions.iter().map(|q| q.scene_id.as_str()));
    let clients = cfg.client_source()?;
    let loop_cfg = cfg.loop_cfg.with_mode(Mode::Train);
    let batch = run_batch(&questions, &scenes, &clients, &loop_cfg, &cfg.tool_env(), a.jobs);
    write_batch(&dir, &batch)?;
    let correct = batch.results.iter().filter(|r| r.correct == Some(true)).count();
    println!(
        "collected {} episodes ({correct} correct, {} errored) into {}",
        batch.results.len(),
        batch.errored.len(),
        dir.display()
    );
    infra_check(&batch)
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dataset {
    Sft,
    Dpo,
}

fn cmd_build(cfg: &GlobalConfig, a: BuildArgs, which: Dataset) -> CliResult<()> {
    let results = read_text(&a.run.join("results.jsonl"))?;
    let transcripts = read_text(&a.run.join("transcripts.jsonl"))?;
    let episodes =
        dataset::load_run(&results, &transcripts).map_err(|e| invalid(format!("{}: {e}", a.run.display())))?;
    let (sft, dpo) = dataset::extract_all(&episodes, Exec::Parallel).map_err(|e| invalid(e.to_string()))?;
    let (text, count) = match which {
        Dataset::Sft => (dataset::to_jsonl(&sft), sft.len()),
        Dataset::Dpo => (dataset::to_jsonl(&dpo), dpo.len()),
    };
    write_text(&a.out, &text)?;
    println!("wrote {count} samples to {}", a.out.display());
    if !a.verify {
        return Ok(());
    }
    let dir = scene_dir(a.scenes, cfg)?;
    let env = cfg.tool_env();
    let ids: Vec<&str> = match which {
        Dataset::Sft => sft.iter().map(|s| s.meta.scene_id.as_str()).collect(),
        Dataset::Dpo => dpo.iter().map(|s| s.meta.scene_id.as_str()).collect(),
    };
    let scenes = load_scenes(&dir, ids.iter().copied());
    let scene = |id: &str| scenes[id].as_ref().map_err(|e| invalid(e.clone()));
    let mut failed = Vec::new();
    for i in 0..count {
        let (ok, qid) = match which {
            Dataset::Sft => {
                let s = &sft[i];
                (dataset::verify_sft(s, scene(&s.meta.scene_id)?, &env), &s.meta.question_id)
            }
            Dataset::Dpo => {
                let s = &dpo[i];
                (dataset::verify_dpo(s, scene(&s.meta.scene_id)?, &env), &s.meta.question_id)
            }
        };
        if !ok.map_err(|e| invalid(e.to_string()))? {
            failed.push(format!("{}:{}", qid, i + 1));
        }
    }
    println!("verified {}/{count}", count - failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(invalid(format!("samples failed replay verification (question:line): {}", failed.join(", "))))
    }
}

// ---------------------------------------------------------------------------
// Augmentation

fn cmd_augment(cfg: &GlobalConfig, a: AugmentArgs) -> CliResult<()> {
    let questions = load_questions(&a.questions)?;
    let mut aug_cfg = cfg.augment.clone();
    if let Some(j) = a.jobs {
        aug_cfg.max_in_flight = j.max(1);
    }
    let clients = cfg.client_source()?;
    let mut report = augment::augment_dataset(&questions, &clients, &aug_cfg);
    for id in &report.skipped_records {
        log::warn!("{}: question {id} has no position; skipped", a.questions.display());
    }
    for r in &report.rejections {
        log::warn!("group {}: rejected generated entry: {}", r.source_group, r.rejection.reason);
    }
    for f in &report.failed_groups {
        log::warn!("group {}: model call failed: {}", f.source_group, f.rejection.reason);
    }

    let mut dropped = 0;
    if a.verify {
        let dir = scene_dir(a.scenes, cfg)?;
        let scenes = load_scenes(&dir, report.records.iter().map(|q| q.scene_id.as_str()));
        let loop_cfg = cfg.loop_cfg.with_mode(Mode::Train);
        let env = cfg.tool_env();
        let keep = map_with_jobs(aug_cfg.max_in_flight, &report.records, |q| {
            let Ok(scene) = &scenes[&q.scene_id] else { return false };
            let client = clients.client_for(&q.question_id);
            agent::run_question(q, scene, client.as_ref(), &loop_cfg, &env).is_ok_and(|r| r.correct == Some(true))
        });
        let before = report.records.len();
        let mut it = keep.into_iter();
        report.records.retain(|_| it.next().unwrap_or(false));
        let kept: BTreeSet<&str> = report.records.iter().map(|q| q.question_id.as_str()).collect();
        report.provenance.retain(|id, _| kept.contains(id.as_str()));
        dropped = before - report.records.len();
    }

    write_text(&a.out, &dataset::to_jsonl(&report.records))?;
    let prov_path = a.provenance.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".provenance.json");
        PathBuf::from(p)
    });
    let prov: &BTreeMap<String, Provenance> = &report.provenance;
    write_text(&prov_path, &(serde_json::to_string_pretty(prov).expect("provenance serializes") + "\n"))?;
    println!(
        "generated {} questions ({} rejected entries, {} failed groups, {} records without a pose{}) into {}",
        report.records.len(),
        report.rejections.len(),
        report.failed_groups.len(),
        report.skipped_records.len(),
        if a.verify { format!(", {dropped} dropped by verification") } else { String::new() },
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Scene tools

fn cmd_relations(cfg: &GlobalConfig, a: RelationsArgs) -> CliResult<()> {
    let scene = posed(load_scene_file(&a.scene)?, pose_arg(&a.pose)?.as_ref())?;
    let table = relation_table(&scene, &cfg.relations, Exec::Sequential)
        .map_err(|e| invalid(format!("{}: {e}", a.scene.display())))?;
    let json = table.to_json() + "\n";
    match a.out {
        Some(p) => write_text(&p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn cmd_exec(cfg: &GlobalConfig, a: ExecArgs) -> CliResult<()> {
    let scene = posed(load_scene_file(&a.scene)?, pose_arg(&a.pose)?.as_ref())?;
    let source = if a.program.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| invalid(format!("stdin: {e}")))?;
        s
    } else {
        read_text(&a.program)?
    };
    let env = cfg.tool_env();
    let result = interp::run_program(&source, &env.context(&scene), &env.limits);
    println!("{}", interp::format_feedback(&result));
    match result {
        Ok(_) => Ok(()),
        Err(e) => Err(CliError::Runtime(format!("program failed with {} (line {})", e.label, e.line))),
    }
}
