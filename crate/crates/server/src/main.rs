use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use idstack_server::{clock_from_env, serve, AppState, ServiceConfig};

/// IDStack document verification service.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Service configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `listenAddress` from the config file.
    #[arg(long, env = "IDSTACK_LISTEN")]
    listen: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let args = Args::parse();
    let config = ServiceConfig::load(&args.config)?;
    let listen = args.listen.unwrap_or_else(|| config.listen_address.clone());
    let addr: SocketAddr = listen
        .parse()
        .with_context(|| format!("bad listen address `{listen}`"))?;
    let state = AppState::from_config(&config, clock_from_env()?)?;
    serve(addr, Arc::new(state)).await
}
