use std::net::SocketAddr;
use std::sync::Arc;

use clap::Parser;
use livecast_core::persona::{bundled_persona, PersonaConfig};
use livecast_gateway::{router, EngineHandle, GatewayConfig};

#[derive(Debug, Parser)]
#[command(about = "Serve the livecast control API and state stream")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Bundled persona name or persona JSON file active at startup.
    #[arg(long, default_value = "shiguang")]
    persona: String,
    /// Frames a stream subscriber may lag before the oldest are dropped.
    #[arg(long, default_value_t = 1024)]
    stream_capacity: usize,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let persona = match bundled_persona(&args.persona) {
        Ok(p) => p,
        Err(_) => PersonaConfig::load_file(&args.persona)?,
    };
    let engine = EngineHandle::spawn(GatewayConfig {
        persona,
        stream_capacity: args.stream_capacity,
        ..GatewayConfig::default()
    })?;
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(engine))).await?;
    Ok(())
}
