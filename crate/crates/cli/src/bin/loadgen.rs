//! Writes a seeded synthetic workload as a JSON array of events.

use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use livecast_core::loadgen::{generate_workload, LoadProfile};

#[derive(Debug, Parser)]
#[command(about = "Generate a seeded danmaku / gift-storm workload")]
struct Args {
    /// Seconds of traffic.
    #[arg(long, default_value_t = 3600.0)]
    duration: f64,
    /// Mean danmaku per second.
    #[arg(long, default_value_t = 12.0)]
    rate: f64,
    /// Gifts per storm.
    #[arg(long, default_value_t = 50)]
    gift_peak: u32,
    /// Seconds between storm opportunities.
    #[arg(long, default_value_t = 600)]
    storm_period: u32,
    /// Chance that a storm opportunity fires.
    #[arg(long, default_value_t = 0.15)]
    storm_probability: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    let a = Args::parse();
    let profile = LoadProfile {
        duration: a.duration,
        dmk_rate: a.rate,
        gift_peak: a.gift_peak,
        storm_period: a.storm_period,
        storm_probability: a.storm_probability,
        seed: a.seed,
    };
    let events = generate_workload(&profile)?;
    let json = serde_json::to_string(&events)?;
    match a.out {
        Some(path) => {
            std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("{} events -> {}", events.len(), path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
