use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use reboard_detector::{run, DetectorConfig, Feed, HttpTransport, RunOptions, Runtime};

/// Whiteboard event detector.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Detector config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `server` from the config.
    #[arg(long)]
    server: Option<String>,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut cfg = DetectorConfig::from_file(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(s) = args.server {
        cfg.server = s;
    }
    let mut feeds = BTreeMap::new();
    for s in &cfg.sources {
        let feed = Feed::from_entry(s).with_context(|| format!("camera {} source", s.camera))?;
        feeds.insert(s.camera, feed);
    }
    let transport = HttpTransport::new(&cfg.server)?;
    let mut rt = Runtime::new(cfg.detector_id.clone(), transport, feeds);
    let stats = run(&mut rt, &RunOptions::from(&cfg), None);
    tracing::info!(?stats, "feeds finished");
    println!(
        "frames {} captures {} manual {} intervals {} motion notices {} rejected {}",
        stats.frames, stats.captures, stats.manual_captures, stats.intervals, stats.motion_notices, stats.rejected
    );
    Ok(())
}
