//! Runs a simulated session under a named load profile and writes the run
//! report (schema: `docs/report-schema.md`).

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use livecast_core::engine::{Engine, EngineConfig, SongSpec, StartRequest};
use livecast_core::loadgen::LoadProfile;
use livecast_core::metrics::WallClockInfo;
use livecast_core::persona::{bundled_persona, HttpLlmClient, HttpLlmConfig, MockTts, PersonaConfig};

#[derive(Debug, Parser)]
#[command(about = "Simulated benchmark runner")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    Run(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Load preset: `testcase1` or `baseline`.
    #[arg(long)]
    profile: String,
    /// Where to write report.json; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the preset seed and the mock LLM/TTS seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Bundled persona name or path to a persona JSON file.
    #[arg(long, default_value = "suwanli")]
    persona: String,
    /// JSON array of `{name, duration, lyrics?}` songs.
    #[arg(long)]
    playlist: Option<PathBuf>,
    /// Chat-completions endpoint config; the seeded mock LLM is used otherwise.
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Stop after this much simulated time even if traffic remains.
    #[arg(long, default_value_t = 7200.0)]
    max_secs: f64,
}

fn persona(arg: &str) -> anyhow::Result<PersonaConfig> {
    if let Ok(p) = bundled_persona(arg) {
        return Ok(p);
    }
    PersonaConfig::load_file(arg).with_context(|| format!("persona {arg:?} is neither bundled nor a readable file"))
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let Some(mut profile) = LoadProfile::preset(&a.profile) else {
        bail!("unknown profile {:?} (expected testcase1 or baseline)", a.profile);
    };
    let mut cfg = EngineConfig::default();
    if let Some(seed) = a.seed {
        profile.seed = seed;
        cfg.seed = seed;
    }
    let playlist: Vec<SongSpec> = match &a.playlist {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .with_context(|| format!("parsing playlist {}", path.display()))?,
        None => Vec::new(),
    };
    let persona = persona(&a.persona)?;
    let mut engine = match &a.llm_config {
        Some(path) => {
            let llm_cfg: HttpLlmConfig = serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            let tts = MockTts::new(cfg.seed.wrapping_add(1), cfg.tts_latency.clone()).silent();
            Engine::new(cfg, persona, Box::new(HttpLlmClient::new(llm_cfg)?), Box::new(tts))?
        }
        None => Engine::simulated(cfg, persona)?,
    };

    let started = Instant::now();
    engine.start(StartRequest {
        profile: Some(profile),
        playlist,
    })?;
    engine.run_until_quiet(a.max_secs);
    let report = engine.report(WallClockInfo {
        elapsed_secs: started.elapsed().as_secs_f64(),
        generated_at: chrono::Local::now().to_rfc3339(),
    });
    eprintln!(
        "{}: offered {} emitted {} dropped {} overlap_rate {} in {:.2}s",
        a.profile, report.offered, report.emitted, report.drop_count, report.overlap_rate, report.wall.elapsed_secs
    );
    match a.report {
        Some(path) => report
            .emit(&path)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", report.to_json()),
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Args::parse().cmd {
        Cmd::Run(a) => run(a),
    }
}
