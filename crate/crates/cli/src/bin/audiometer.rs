//! Integrated loudness and true peak of a 16-bit PCM WAV file.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use livecast_core::audio::{integrated_loudness, PcmBuffer};

#[derive(Debug, Parser)]
#[command(about = "Gated loudness meter")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Print a JSON loudness report for one file.
    Report { file: PathBuf },
}

fn main() -> anyhow::Result<()> {
    let Cmd::Report { file } = Args::parse().cmd;
    let buf = PcmBuffer::read_wav(&file).with_context(|| format!("reading {}", file.display()))?;
    let report = integrated_loudness(&buf)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
