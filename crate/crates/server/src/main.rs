use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use reboard_server::{api, Coordinator, ServerConfig};

/// Whiteboard archive server.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Server config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `listen` from the config.
    #[arg(long)]
    listen: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut cfg = ServerConfig::from_file(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(l) = args.listen {
        cfg.listen = l;
    }
    let coord = Arc::new(Coordinator::open(&cfg).context("opening archive")?);
    let listener = tokio::net::TcpListener::bind(&cfg.listen)
        .await
        .with_context(|| format!("binding {}", cfg.listen))?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %cfg.data_dir.display(), "serving");
    api::serve(coord, listener).await?;
    Ok(())
}
