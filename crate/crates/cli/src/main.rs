//! `scenecode`: ask questions about scenes, evaluate and collect episodes,
//! build SFT/DPO datasets, augment question sets, dump relation tables and
//! run programs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scenecode::agent::Mode;
use scenecode::config::CONFIG_ENV;

#[derive(Parser, Debug)]
#[command(name = "scenecode", version, about = "Situated 3D question answering through scene-query programs")]
struct Cli {
    /// Configuration file (TOML, or JSON when the extension is .json).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Log verbosity: -v for info, -vv for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Answer one question about one scene and write its transcript.
    Ask(AskArgs),
    /// Run a question set in eval mode and report accuracy.
    Eval(RunArgs),
    /// Run a question set in train mode and keep the transcripts.
    Collect(RunArgs),
    /// Build SFT samples from a collected run.
    BuildSft(BuildArgs),
    /// Build DPO pairs from a collected run.
    BuildDpo(BuildArgs),
    /// Generate harder questions from questions sharing a viewpoint.
    Augment(AugmentArgs),
    /// Print every pairwise and agent relation of a scene as JSON.
    Relations(RelationsArgs),
    /// Run a program against a scene and print its observation.
    Exec(ExecArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Eval,
    Train,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Eval => Mode::Eval,
            ModeArg::Train => Mode::Train,
        }
    }
}

#[derive(Args, Debug)]
struct PoseArgs {
    /// Agent position "x,y,z" (defaults to the scene's agent).
    #[arg(long, requires = "rotation")]
    position: Option<String>,
    /// Agent rotation quaternion "x,y,z,w".
    #[arg(long, requires = "position")]
    rotation: Option<String>,
}

#[derive(Args, Debug)]
struct AskArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, default_value = "")]
    situation: String,
    #[arg(long, value_enum, default_value = "eval")]
    mode: ModeArg,
    /// Ground-truth answer: graded after the loop in eval mode, used for retries in train mode.
    #[arg(long)]
    answer: Option<String>,
    #[arg(long, default_value = "ask")]
    question_id: String,
    #[command(flatten)]
    pose: PoseArgs,
    /// Directory for the transcript (defaults to paths.output_dir, then ".").
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Question JSONL file.
    #[arg(long)]
    questions: PathBuf,
    /// Directory of <scene_id>.json files (defaults to paths.scene_dir).
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Output directory (defaults to paths.output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episodes run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Count questions that could not be run as incorrect instead of excluding them.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Run directory holding results.jsonl and transcripts.jsonl.
    #[arg(long)]
    run: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    /// Replay every sample against its scene and fail if any does not verify.
    #[arg(long, requires = "scenes")]
    verify: bool,
    #[arg(long)]
    scenes: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[arg(long)]
    questions: PathBuf,
    /// Output JSONL with the generated questions.
    #[arg(long)]
    out: PathBuf,
    /// Provenance report JSON (defaults to <out>.provenance.json).
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Groups in flight at once (overrides augment.max_in_flight).
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep only generated questions a train-mode episode answers correctly.
    #[arg(long, requires = "scenes")]
    verify: bool,
    #[arg(long)]
    scenes: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RelationsArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    pose: PoseArgs,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExecArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Program file, or "-" for stdin.
    #[arg(long)]
    program: PathBuf,
    #[command(flatten)]
    pose: PoseArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
