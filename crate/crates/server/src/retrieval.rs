//! Filter context shared by every view, and the calendar, timeline and
//! heatmap aggregations over visible records.

use std::collections::{BTreeMap, BTreeSet};

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use reboard_core::imaging::{COARSE_ROWS, FINE_FACTOR};
use reboard_core::{CameraId, RecordId};

use crate::model::{image_url, ContentType, Record};
use crate::share::CellRect;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("malformed filter: {0}")]
    MalformedFilter(String),
    #[error("malformed range: from {from} is after to {to}")]
    MalformedRange { from: i64, to: i64 },
    #[error("the heatmap needs exactly one camera selected")]
    NoCameraSelected,
    #[error("empty cell selection")]
    EmptySelection,
}

/// View category: the two stored content types plus "has been shared".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Personal,
    Collaborative,
    Shared,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Personal => "personal",
            Category::Collaborative => "collaborative",
            Category::Shared => "shared",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "personal" => Some(Category::Personal),
            "collaborative" => Some(Category::Collaborative),
            "shared" => Some(Category::Shared),
            _ => None,
        }
    }

    pub fn of(record: &Record) -> impl Iterator<Item = Category> {
        let base = match record.content_type {
            ContentType::Personal => Category::Personal,
            ContentType::Collaborative => Category::Collaborative,
        };
        std::iter::once(base).chain(record.is_shared().then_some(Category::Shared))
    }
}

/// Retrieval parameters carried across views. The acting user comes from the
/// request, not from the context.
///
/// Query-string form (every key optional, this order when serialized):
/// `cameras=1,2&from=<ms>&to=<ms>&types=personal,shared&keyword=uml&region=x0,y0,x1,y1&cells=c0,r0,c1,r1`.
/// `from` is inclusive and `to` exclusive; `region` is in board fractions;
/// `cells` is an inclusive coarse-cell selection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterContext {
    pub cameras: BTreeSet<CameraId>,
    pub from: Option<i64>,
    pub to: Option<i64>,
    pub types: BTreeSet<Category>,
    pub keyword: Option<String>,
    pub region: Option<[f64; 4]>,
    pub cells: Option<CellRect>,
}

fn list<T>(v: &str, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, RetrievalError> {
    v.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| RetrievalError::MalformedFilter(format!("bad {key} entry {s:?}"))))
        .collect()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

impl FilterContext {
    pub fn from_query(query: &str) -> Result<Self, RetrievalError> {
        let mut ctx = FilterContext::default();
        for (key, value) in form_urlencoded::parse(query.as_bytes()) {
            let v = value.as_ref();
            match key.as_ref() {
                "cameras" => ctx.cameras = list(v, "cameras", |s| s.parse().ok().map(CameraId))?.into_iter().collect(),
                "from" | "to" if v.is_empty() => {}
                "from" => ctx.from = Some(v.parse().map_err(|_| RetrievalError::MalformedFilter(format!("bad from {v:?}")))?),
                "to" => ctx.to = Some(v.parse().map_err(|_| RetrievalError::MalformedFilter(format!("bad to {v:?}")))?),
                "types" => ctx.types = list(v, "types", Category::parse)?.into_iter().collect(),
                "keyword" => ctx.keyword = (!v.is_empty()).then(|| v.to_owned()),
                "region" if v.is_empty() => ctx.region = None,
                "region" => {
                    let r = list(v, "region", |s| s.parse::<f64>().ok().filter(|f| f.is_finite()))?;
                    let [x0, y0, x1, y1] = r[..] else {
                        return Err(RetrievalError::MalformedFilter("region needs x0,y0,x1,y1".into()));
                    };
                    if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
                        return Err(RetrievalError::MalformedFilter(format!("region {v:?} outside the board")));
                    }
                    ctx.region = Some([x0, y0, x1, y1]);
                }
                "cells" if v.is_empty() => ctx.cells = None,
                "cells" => {
                    let c = list(v, "cells", |s| s.parse::<u32>().ok())?;
                    let [c0, r0, c1, r1] = c[..] else {
                        return Err(RetrievalError::MalformedFilter("cells needs c0,r0,c1,r1".into()));
                    };
                    if c0 > c1 || r0 > r1 {
                        return Err(RetrievalError::MalformedFilter(format!("cells {v:?} inverted")));
                    }
                    ctx.cells = Some((c0, r0, c1, r1));
                }
                other => return Err(RetrievalError::MalformedFilter(format!("unknown parameter {other:?}"))),
            }
        }
        Ok(ctx)
    }

    /// Canonical query string; `from_query(to_query())` is the identity.
    pub fn to_query(&self) -> String {
        let mut s = form_urlencoded::Serializer::new(String::new());
        if !self.cameras.is_empty() {
            s.append_pair("cameras", &join(&self.cameras));
        }
        if let Some(f) = self.from {
            s.append_pair("from", &f.to_string());
        }
        if let Some(t) = self.to {
            s.append_pair("to", &t.to_string());
        }
        if !self.types.is_empty() {
            s.append_pair("types", &join(self.types.iter().map(|t| t.name())));
        }
        if let Some(k) = &self.keyword {
            s.append_pair("keyword", k);
        }
        if let Some(r) = &self.region {
            s.append_pair("region", &join(r));
        }
        if let Some((c0, r0, c1, r1)) = self.cells {
            s.append_pair("cells", &join([c0, r0, c1, r1]));
        }
        s.finish()
    }

    pub fn check_range(&self) -> Result<(), RetrievalError> {
        match (self.from, self.to) {
            (Some(from), Some(to)) if from > to => Err(RetrievalError::MalformedRange { from, to }),
            _ => Ok(()),
        }
    }

    /// Every filter except user visibility.
    pub fn matches(&self, r: &Record) -> bool {
        if !self.cameras.is_empty() && !self.cameras.contains(&r.camera_id) {
            return false;
        }
        if self.from.is_some_and(|f| r.timestamp < f) || self.to.is_some_and(|t| r.timestamp >= t) {
            return false;
        }
        if !self.types.is_empty() && !Category::of(r).any(|c| self.types.contains(&c)) {
            return false;
        }
        if let Some(k) = &self.keyword {
            let k = k.to_lowercase();
            if !r.label.to_lowercase().contains(&k) && !r.description.to_lowercase().contains(&k) {
                return false;
            }
        }
        if let Some(region) = &self.region {
            let (c0, r0, c1, r1) = fine_cells_in(region, r.fine_changed.cols, r.fine_changed.rows);
            if !r.fine_changed.any_in(c0, r0, c1, r1) {
                return false;
            }
        }
        true
    }
}

/// Half-open fine-cell index ranges whose cell centers lie inside `region`.
pub fn fine_cells_in(region: &[f64; 4], cols: u32, rows: u32) -> (u32, u32, u32, u32) {
    let span = |lo: f64, hi: f64, n: u32| {
        let first = (lo * n as f64 - 0.5).ceil().max(0.0) as u32;
        let last = ((hi * n as f64 - 0.5).floor() + 1.0).clamp(0.0, n as f64) as u32;
        (first.min(last), last)
    };
    let (c0, c1) = span(region[0], region[2], cols);
    let (r0, r1) = span(region[1], region[3], rows);
    (c0, r0, c1, r1)
}

/// Narrows the context to a heatmap cell selection. Selecting the whole grid
/// clears the region filter.
pub fn region_select(ctx: &FilterContext, columns: u32, cells: CellRect) -> Result<FilterContext, RetrievalError> {
    let (c0, r0, c1, r1) = cells;
    if c0 > c1 || r0 > r1 || c1 >= columns || r1 >= COARSE_ROWS {
        return Err(RetrievalError::EmptySelection);
    }
    let mut out = ctx.clone();
    out.cells = Some(cells);
    out.region = if (c0, r0, c1, r1) == (0, 0, columns - 1, COARSE_ROWS - 1) {
        None
    } else {
        Some([
            c0 as f64 / columns as f64,
            r0 as f64 / COARSE_ROWS as f64,
            (c1 + 1) as f64 / columns as f64,
            (r1 + 1) as f64 / COARSE_ROWS as f64,
        ])
    };
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySummary {
    /// UTC calendar date, `YYYY-MM-DD`.
    pub date: String,
    pub has_personal: bool,
    pub has_collaborative: bool,
    pub has_shared: bool,
    pub records: Vec<RecordId>,
}

pub fn utc_date(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| "invalid".into())
}

/// One summary per UTC day with visible records, in date order. `records`
/// must already be filtered and sorted by timestamp.
pub fn calendar(records: &[&Record]) -> Vec<DaySummary> {
    let mut days: BTreeMap<i64, DaySummary> = BTreeMap::new();
    for r in records {
        let day = r.timestamp.div_euclid(86_400_000);
        let entry = days.entry(day).or_insert_with(|| DaySummary {
            date: utc_date(r.timestamp),
            has_personal: false,
            has_collaborative: false,
            has_shared: false,
            records: Vec::new(),
        });
        for c in Category::of(r) {
            match c {
                Category::Personal => entry.has_personal = true,
                Category::Collaborative => entry.has_collaborative = true,
                Category::Shared => entry.has_shared = true,
            }
        }
        entry.records.push(r.id);
    }
    days.into_values().collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineBar {
    pub record_id: RecordId,
    pub camera_id: CameraId,
    pub timestamp: i64,
    pub height: u32,
}

pub fn timeline(records: &[&Record]) -> Vec<TimelineBar> {
    records
        .iter()
        .map(|r| TimelineBar {
            record_id: r.id,
            camera_id: r.camera_id,
            timestamp: r.timestamp,
            height: r.changed_cell_count,
        })
        .collect()
}

pub const COLOR_BUCKETS: u8 = 5;

/// 0 for an unchanged cell, otherwise 1 (coldest) to 5 (warmest) on a linear
/// ramp over `[1, max]`.
pub fn color_class(count: u32, max: u32) -> u8 {
    if count == 0 {
        0
    } else if max <= 1 {
        1
    } else {
        let span = (COLOR_BUCKETS - 1) as u64;
        1 + ((count.min(max) - 1) as u64 * span / (max - 1) as u64) as u8
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thumbnail {
    pub record_id: RecordId,
    pub timestamp: i64,
    pub url: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub camera_id: CameraId,
    pub cols: u32,
    pub rows: u32,
    /// Row-major change counts.
    pub counts: Vec<u32>,
    /// Row-major color classes (see [`color_class`]).
    pub classes: Vec<u8>,
    pub max_count: u32,
    pub thumbnails: Vec<Thumbnail>,
}

/// Counts, per coarse cell, the records whose cell fraction exceeds `tolerance`.
pub fn heatmap(camera_id: CameraId, cols: u32, records: &[&Record], tolerance: f32) -> HeatmapGrid {
    let rows = COARSE_ROWS;
    let mut counts = vec![0u32; (cols * rows) as usize];
    for r in records {
        if r.coarse.cols != cols || r.coarse.rows != rows {
            continue;
        }
        for (c, &v) in counts.iter_mut().zip(&r.coarse.values) {
            *c += (v > tolerance) as u32;
        }
    }
    let max_count = counts.iter().copied().max().unwrap_or(0);
    HeatmapGrid {
        camera_id,
        cols,
        rows,
        classes: counts.iter().map(|&c| color_class(c, max_count)).collect(),
        counts,
        max_count,
        thumbnails: records
            .iter()
            .map(|r| Thumbnail {
                record_id: r.id,
                timestamp: r.timestamp,
                url: format!("{}?max_height={}", image_url(r.id), COARSE_ROWS * FINE_FACTOR),
            })
            .collect(),
    }
}
