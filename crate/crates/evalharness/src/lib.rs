//! Command-line evaluation of the capture variants.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;

use reboard_core::capture::CaptureVariant;
use reboard_core::config::CameraConfig;
use reboard_core::eval::{self, EvalReport, ScenarioResult};
use reboard_core::feedsim::{export_feed, GroundTruth, ReplayFeed, Scenario, SyntheticFeed};

#[derive(Debug, Parser)]
#[command(name = "evalharness", about = "Score capture variants against ground truth")]
pub struct Args {
    /// Synthetic scenario script (repeatable).
    #[arg(long = "scenario", conflicts_with_all = ["manifest", "suite"])]
    pub scenarios: Vec<PathBuf>,
    /// Directory of scenario scripts.
    #[arg(long, conflicts_with = "manifest")]
    pub suite: Option<PathBuf>,
    /// Fail unless filtering_only logs more false positives than both
    /// combined and motion_only over the whole run.
    #[arg(long)]
    pub check_ordering: bool,
    /// Recorded feed manifest (`fps=<n>` header, then `path<TAB>timestamp_ms`).
    #[arg(long, requires_all = ["truth", "camera_config"])]
    pub manifest: Option<PathBuf>,
    /// Ground truth JSON for `--manifest`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Camera calibration TOML for `--manifest`.
    #[arg(long)]
    pub camera_config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "combined,motion_only,filtering_only")]
    pub variants: Vec<CaptureVariant>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Render the (single) scenario to a manifest, frames and truth.json in
    /// this directory instead of evaluating it.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

/// What a run produced; `ordering_failed` maps to a nonzero exit code.
#[derive(Debug)]
pub struct Outcome {
    pub report: EvalReport,
    pub table: String,
    pub ordering_failed: bool,
}

pub fn run(args: &Args) -> Result<Outcome> {
    if args.variants.is_empty() {
        bail!("no variants selected");
    }
    let mut scenarios = Vec::new();
    for path in &args.scenarios {
        scenarios.push(Scenario::from_file(path).with_context(|| format!("loading {}", path.display()))?);
    }
    if let Some(dir) = &args.suite {
        scenarios.extend(eval::load_suite(dir).with_context(|| format!("loading suite {}", dir.display()))?);
        if scenarios.is_empty() {
            bail!("no *.toml scenarios in {}", dir.display());
        }
    }
    if let Some(dir) = &args.export {
        let [scenario] = scenarios.as_slice() else {
            bail!("--export needs exactly one --scenario");
        };
        export_scenario(scenario, dir)?;
    }

    let results: Vec<ScenarioResult> = if let Some(manifest) = &args.manifest {
        vec![run_manifest(args, manifest)?]
    } else if scenarios.is_empty() {
        bail!("give --scenario, --suite or --manifest");
    } else {
        scenarios
            .iter()
            .map(|s| eval::run_scenario(s, &args.variants).with_context(|| format!("running {}", s.name)))
            .collect::<Result<_>>()?
    };

    let report = EvalReport::new(results);
    let mut table = String::new();
    for s in &report.scenarios {
        table.push_str(&format!("== {} (t = {:.5})\n", s.scenario, s.change_threshold));
        table.push_str(&eval::report(&s.results));
    }
    if report.scenarios.len() > 1 {
        table.push_str("== overall\n");
        table.push_str(&eval::report(&report.overall));
    }
    let ordering_failed = args.check_ordering && report.ordering_holds() != Some(true);
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(Outcome {
        report,
        table,
        ordering_failed,
    })
}

fn run_manifest(args: &Args, manifest: &Path) -> Result<ScenarioResult> {
    let truth_path = args.truth.as_ref().expect("clap requires --truth");
    let cfg_path = args.camera_config.as_ref().expect("clap requires --camera-config");
    let truth = GroundTruth::from_json(&std::fs::read_to_string(truth_path)?)
        .with_context(|| format!("parsing {}", truth_path.display()))?;
    let cfg: CameraConfig = toml::from_str(&std::fs::read_to_string(cfg_path)?)
        .with_context(|| format!("parsing {}", cfg_path.display()))?;
    cfg.validate().map_err(anyhow::Error::msg)?;
    let mut feed = ReplayFeed::open(manifest).with_context(|| format!("opening {}", manifest.display()))?;
    let times: Vec<i64> = feed.manifest().entries.iter().map(|e| e.timestamp).collect();
    Ok(eval::run_recorded(&mut feed, &times, &truth, &cfg, &args.variants)?)
}

/// Writes `manifest.tsv`, `frames/`, `truth.json` and `camera.toml` (with the
/// calibrated threshold) for a scenario.
pub fn export_scenario(scenario: &Scenario, dir: &Path) -> Result<PathBuf> {
    let mut feed = SyntheticFeed::new(scenario)?;
    let frames: Vec<_> = scenario.frame_times().map(|t| feed.render(t)).collect();
    let manifest = export_feed(dir, scenario.fps as f64, frames)?;
    std::fs::write(dir.join("truth.json"), feed.ground_truth().to_json())?;
    let cfg = eval::calibrated_config(scenario)?;
    std::fs::write(dir.join("camera.toml"), toml::to_string(&cfg)?)?;
    Ok(manifest)
}
