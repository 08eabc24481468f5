//! Recorded feeds: a directory of PNG frames listed in a manifest file.
//!
//! ```text
//! fps=1
//! frames/000000.png	1700000000000
//! frames/000001.png	1700000001000
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::capture::{FrameSource, SourceError};
use crate::imaging::{decode_frame, encode_frame, ImagingError, RawFrame};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("manifest line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("manifest line {line}: timestamp {timestamp} does not increase")]
    NotIncreasing { line: usize, timestamp: i64 },
    #[error("missing frame file {0}")]
    MissingFile(PathBuf),
    #[error("cannot decode {path}: {source}")]
    Decode { path: PathBuf, source: ImagingError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameManifest {
    pub fps: f64,
    pub entries: Vec<ManifestEntry>,
}

impl FrameManifest {
    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(ReplayError::Malformed {
            line: 1,
            msg: "missing fps header".into(),
        })?;
        let fps = header
            .trim()
            .strip_prefix("fps=")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|f| *f > 0.0)
            .ok_or_else(|| ReplayError::Malformed {
                line: 1,
                msg: format!("expected fps=<n>, got {header:?}"),
            })?;
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let (path, ts) = line.split_once('\t').ok_or_else(|| ReplayError::Malformed {
                line: line_no,
                msg: "expected path<TAB>timestamp_ms".into(),
            })?;
            let timestamp = ts.trim().parse::<i64>().map_err(|e| ReplayError::Malformed {
                line: line_no,
                msg: e.to_string(),
            })?;
            if entries.last().is_some_and(|e| e.timestamp >= timestamp) {
                return Err(ReplayError::NotIncreasing {
                    line: line_no,
                    timestamp,
                });
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                timestamp,
            });
        }
        Ok(Self { fps, entries })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("fps={}\n", self.fps);
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\n", e.path.display(), e.timestamp));
        }
        out
    }
}

/// Replays a manifest. Frame paths are relative to the manifest's directory.
#[derive(Debug)]
pub struct ReplayFeed {
    manifest: FrameManifest,
    base_dir: PathBuf,
    cache: Option<(usize, RawFrame)>,
}

impl ReplayFeed {
    pub fn new(manifest: FrameManifest, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest,
            base_dir: base_dir.into(),
            cache: None,
        }
    }

    pub fn open(manifest_path: &Path) -> Result<Self, ReplayError> {
        let text = std::fs::read_to_string(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self::new(FrameManifest::parse(&text)?, base))
    }

    pub fn manifest(&self) -> &FrameManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn frame(&mut self, index: usize) -> Result<RawFrame, ReplayError> {
        if let Some((i, f)) = &self.cache {
            if *i == index {
                return Ok(f.clone());
            }
        }
        let entry = &self.manifest.entries[index];
        let path = self.base_dir.join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ReplayError::MissingFile(path.clone()),
            _ => ReplayError::Io(e),
        })?;
        let frame = decode_frame(&bytes, entry.timestamp).map_err(|source| ReplayError::Decode { path, source })?;
        self.cache = Some((index, frame.clone()));
        Ok(frame)
    }

    /// Frames in manifest order, as fast as they decode.
    pub fn frames(&mut self) -> impl Iterator<Item = Result<RawFrame, ReplayError>> + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }
}

impl FrameSource for ReplayFeed {
    /// The most recent recorded frame at `timestamp` (the first frame before
    /// the recording starts), restamped with the requested time.
    fn grab(&mut self, timestamp: i64) -> Result<RawFrame, SourceError> {
        if self.is_empty() {
            return Err(SourceError::Unavailable("empty recording".into()));
        }
        let idx = self
            .manifest
            .entries
            .partition_point(|e| e.timestamp <= timestamp)
            .saturating_sub(1);
        let mut frame = self.frame(idx).map_err(|e| SourceError::Unavailable(e.to_string()))?;
        frame.timestamp = timestamp;
        Ok(frame)
    }
}

/// Writes frames as PNGs under `dir/frames/` plus `dir/manifest.tsv`;
/// returns the manifest path.
pub fn export_feed(
    dir: &Path,
    fps: f64,
    frames: impl IntoIterator<Item = RawFrame>,
) -> Result<PathBuf, ReplayError> {
    let frame_dir = dir.join("frames");
    std::fs::create_dir_all(&frame_dir)?;
    let mut entries = Vec::new();
    for (i, frame) in frames.into_iter().enumerate() {
        let rel = PathBuf::from("frames").join(format!("{i:06}.png"));
        let png = encode_frame(&frame).map_err(|source| ReplayError::Decode {
            path: rel.clone(),
            source,
        })?;
        std::fs::write(dir.join(&rel), png)?;
        entries.push(ManifestEntry {
            path: rel,
            timestamp: frame.timestamp,
        });
    }
    let manifest = FrameManifest { fps, entries };
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest.to_text())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;

    #[test]
    fn empty_manifest_is_empty_stream() {
        let m = FrameManifest::parse("fps=1\n").unwrap();
        let mut feed = ReplayFeed::new(m, ".");
        assert_eq!(feed.frames().count(), 0);
        assert!(feed.grab(0).is_err());
    }

    #[test]
    fn three_frames_replay_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<RawFrame> = (0..3)
            .map(|i| RawFrame::from_gray(&GrayImage::filled(8, 6, 40 * i as u8), 1000 + i * 500))
            .collect();
        let path = export_feed(dir.path(), 2.0, frames.clone()).unwrap();
        let mut feed = ReplayFeed::open(&path).unwrap();
        assert_eq!(feed.manifest().fps, 2.0);
        let got: Vec<RawFrame> = feed.frames().collect::<Result<_, _>>().unwrap();
        assert_eq!(got, frames);
        let held = feed.grab(1700).unwrap();
        assert_eq!(held.timestamp, 1700);
        assert_eq!(held.rgb(0, 0), [40, 40, 40]);
        assert_eq!(feed.grab(0).unwrap().rgb(0, 0), [0, 0, 0]);
    }

    #[test]
    fn rejects_bad_manifests() {
        assert!(matches!(
            FrameManifest::parse("fps=1\na.png\t20\nb.png\t10\n"),
            Err(ReplayError::NotIncreasing { line: 3, .. })
        ));
        assert!(matches!(FrameManifest::parse("a.png\t1"), Err(ReplayError::Malformed { .. })));
        assert!(matches!(FrameManifest::parse("fps=1\na.png 1"), Err(ReplayError::Malformed { .. })));
        let text = "fps=1\nx.png\t5\n";
        assert_eq!(FrameManifest::parse(text).unwrap().to_text(), text);
    }

    #[test]
    fn missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.png"), b"nope").unwrap();
        let m = FrameManifest::parse("fps=1\ngone.png\t1\nbad.png\t2\n").unwrap();
        let mut feed = ReplayFeed::new(m, dir.path());
        assert!(matches!(feed.frame(0), Err(ReplayError::MissingFile(_))));
        assert!(matches!(feed.frame(1), Err(ReplayError::Decode { .. })));
    }
}
