//! The application server's state machine: registry, detector assignment,
//! capture and collaboration ingestion, sharing, metadata and queries.
//!
//! All state lives in memory and is written through to SQLite. Mutations are
//! serialized (database mutex, then state write lock) and each one commits
//! its SQL before touching memory, so a failed write leaves both unchanged.
//! Queries take the state read lock and see a consistent snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};

use image::imageops::FilterType;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use reboard_core::collab::CollaborationInterval;
use reboard_core::imaging::grid_columns;
use reboard_core::wire::{AssignmentDelta, CameraAssignment, CaptureUpload, Command, DetectorRole, MotionNotice};
use reboard_core::{CameraId, DetectorId, RecordId, UserId};

use crate::config::ServerConfig;
use crate::model::{
    Access, Camera, CameraSummary, CellMask, ContentType, CropRect, ImageRef, Record, RecordDetail, RecordSummary,
    ShareEntry, User,
};
use crate::retrieval::{self, DaySummary, FilterContext, HeatmapGrid, RetrievalError, TimelineBar};
use crate::share::{default_share_region, CellRect};
use crate::store::{self, ImageStore};

/// Latest timestamp accepted on ingestion (end of year 9999).
const MAX_TIMESTAMP: i64 = 253_402_300_799_999;

#[derive(Debug, Error)]
pub enum CoordError {
    #[error("missing or unknown user")]
    Unauthenticated,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown detector {0}")]
    UnknownDetector(DetectorId),
    #[error("unknown camera {0}")]
    UnknownCamera(CameraId),
    #[error("unknown record {0}")]
    UnknownRecord(RecordId),
    #[error("only the camera owner may do this")]
    NotOwner,
    #[error("only the owner or a contributor may edit this record")]
    NotAuthorized,
    #[error("administrator rights required")]
    NotAdmin,
    #[error("nothing changed on this capture; give an explicit region")]
    EmptyChange,
    #[error("capture is disabled for camera {0}")]
    CaptureDisabled(CameraId),
    #[error("no capture detector is assigned to camera {0}")]
    NoDetector(CameraId),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl From<rusqlite::Error> for CoordError {
    fn from(e: rusqlite::Error) -> Self {
        CoordError::Storage(e.to_string())
    }
}

impl From<std::io::Error> for CoordError {
    fn from(e: std::io::Error) -> Self {
        CoordError::Storage(e.to_string())
    }
}

pub type Result<T, E = CoordError> = std::result::Result<T, E>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataPatch {
    #[serde(default)]
    pub contributors: Option<Vec<UserId>>,
    #[serde(default)]
    pub tags: Option<Vec<String>>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub bookmarked: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareRequest {
    pub targets: Vec<UserId>,
    #[serde(default)]
    pub region: Option<CropRect>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureEnabledAck {
    pub camera_id: CameraId,
    pub enabled: bool,
    pub revision: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualCaptureAck {
    pub camera_id: CameraId,
    pub request_id: u64,
    pub detector_id: DetectorId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignRequest {
    pub detector_id: DetectorId,
    /// Defaults to every role the detector has.
    #[serde(default)]
    pub roles: Option<Vec<DetectorRole>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSelection {
    pub context: FilterContext,
    pub query: String,
}

#[derive(Debug, Default)]
struct State {
    revision: u64,
    next_request_id: u64,
    users: BTreeMap<UserId, User>,
    detectors: BTreeMap<DetectorId, Vec<DetectorRole>>,
    cameras: BTreeMap<CameraId, Camera>,
    holders: BTreeMap<(CameraId, DetectorRole), DetectorId>,
    rows: BTreeMap<(DetectorId, CameraId), u64>,
    removals: BTreeMap<(DetectorId, CameraId), u64>,
    intervals: BTreeMap<CameraId, Vec<CollaborationInterval>>,
    records: BTreeMap<RecordId, Record>,
    commands: BTreeMap<DetectorId, Vec<Command>>,
}

/// An assignment-row change for one (detector, camera) pair.
#[derive(Clone, Debug)]
enum RowOp {
    Set(DetectorId, CameraId),
    Remove(DetectorId, CameraId),
}

impl State {
    fn from_snapshot(s: store::Snapshot) -> Self {
        let mut intervals: BTreeMap<CameraId, Vec<CollaborationInterval>> = BTreeMap::new();
        for i in s.intervals {
            intervals.entry(i.camera_id).or_default().push(i);
        }
        Self {
            revision: s.revision,
            next_request_id: s.next_request_id,
            users: s.users.into_iter().map(|u| (u.id, u)).collect(),
            detectors: s.detectors.into_iter().collect(),
            cameras: s.cameras.into_iter().map(|c| (c.id, c)).collect(),
            holders: s.holders.into_iter().map(|(c, r, d)| ((c, r), d)).collect(),
            rows: s.rows.into_iter().map(|(d, c, v)| ((d, c), v)).collect(),
            removals: s.removals.into_iter().map(|(d, c, v)| ((d, c), v)).collect(),
            intervals,
            records: s.records.into_iter().map(|r| (r.id, r)).collect(),
            commands: BTreeMap::new(),
        }
    }

    fn user(&self, id: UserId) -> Result<&User> {
        self.users.get(&id).ok_or(CoordError::Unauthenticated)
    }

    fn camera(&self, id: CameraId) -> Result<&Camera> {
        self.cameras.get(&id).ok_or(CoordError::UnknownCamera(id))
    }

    fn owned_camera(&self, user: UserId, id: CameraId) -> Result<&Camera> {
        self.user(user)?;
        let cam = self.camera(id)?;
        if cam.owner != user {
            return Err(CoordError::NotOwner);
        }
        Ok(cam)
    }

    fn access(&self, user: UserId, r: &Record) -> Option<Access> {
        if self.cameras.get(&r.camera_id).is_some_and(|c| c.owner == user) {
            Some(Access::Owner)
        } else if r.contributors.contains(&user) {
            Some(Access::Contributor)
        } else {
            r.shares.get(&user).map(|&crop| Access::Shared(crop))
        }
    }

    /// The record and the caller's access; records the caller cannot see are
    /// reported as unknown.
    fn visible(&self, user: UserId, id: RecordId) -> Result<(&Record, Access)> {
        self.user(user)?;
        let r = self.records.get(&id).ok_or(CoordError::UnknownRecord(id))?;
        let access = self.access(user, r).ok_or(CoordError::UnknownRecord(id))?;
        Ok((r, access))
    }

    /// Records visible to `user` that match `ctx`, by timestamp then id.
    fn matching(&self, user: UserId, ctx: &FilterContext) -> Vec<&Record> {
        let mut out: Vec<&Record> = self
            .records
            .values()
            .filter(|r| ctx.matches(r) && self.access(user, r).is_some())
            .collect();
        out.sort_by_key(|r| (r.timestamp, r.id));
        out
    }

    fn roles_held(&self, holders: &BTreeMap<(CameraId, DetectorRole), DetectorId>, d: &DetectorId, c: CameraId) -> Vec<DetectorRole> {
        DetectorRole::ALL
            .into_iter()
            .filter(|&role| holders.get(&(c, role)) == Some(d))
            .collect()
    }

    /// Row operations that move `roles` of `camera` to `detector`.
    fn plan_assignment(&self, camera: CameraId, detector: &DetectorId, roles: &[DetectorRole]) -> (Vec<(DetectorRole, DetectorId)>, Vec<RowOp>) {
        let mut holders = self.holders.clone();
        let mut affected: BTreeSet<DetectorId> = BTreeSet::from([detector.clone()]);
        let mut changes = Vec::new();
        for &role in roles {
            if let Some(prev) = holders.insert((camera, role), detector.clone()) {
                if &prev == detector {
                    continue;
                }
                affected.insert(prev);
            }
            changes.push((role, detector.clone()));
        }
        if changes.is_empty() {
            return (changes, Vec::new());
        }
        let ops = affected
            .into_iter()
            .filter_map(|d| {
                if !self.roles_held(&holders, &d, camera).is_empty() {
                    Some(RowOp::Set(d, camera))
                } else if self.rows.contains_key(&(d.clone(), camera)) {
                    Some(RowOp::Remove(d, camera))
                } else {
                    None
                }
            })
            .collect();
        (changes, ops)
    }

    fn bump_ops(&self, camera: CameraId) -> Vec<RowOp> {
        self.rows
            .keys()
            .filter(|(_, c)| *c == camera)
            .map(|(d, c)| RowOp::Set(d.clone(), *c))
            .collect()
    }

    fn apply_row_ops(&mut self, ops: &[RowOp], revision: u64) {
        for op in ops {
            match op {
                RowOp::Set(d, c) => {
                    self.removals.remove(&(d.clone(), *c));
                    self.rows.insert((d.clone(), *c), revision);
                }
                RowOp::Remove(d, c) => {
                    self.rows.remove(&(d.clone(), *c));
                    self.removals.insert((d.clone(), *c), revision);
                }
            }
        }
    }

    fn assignment_for(&self, d: &DetectorId, c: CameraId) -> Option<CameraAssignment> {
        let cam = self.cameras.get(&c)?;
        Some(CameraAssignment {
            camera_id: c,
            roles: self.roles_held(&self.holders, d, c),
            config: cam.config.clone(),
            capture_enabled: cam.capture_enabled,
        })
    }

    fn detail(&self, r: &Record, access: Access) -> RecordDetail {
        let editor = access.can_edit();
        let tolerance = self.cameras.get(&r.camera_id).map_or(0.05, |c| c.cell_tolerance());
        RecordDetail {
            summary: r.summary(),
            description: r.description.clone(),
            changed_fraction: r.changed_fraction,
            image_width: r.image.width,
            image_height: r.image.height,
            coarse: r.coarse.clone(),
            shares: if editor {
                r.shares.iter().map(|(&user, &region)| ShareEntry { user, region }).collect()
            } else {
                Vec::new()
            },
            viewer_crop: match access {
                Access::Shared(c) => Some(c),
                _ => None,
            },
            default_share_region: (access == Access::Owner)
                .then(|| default_share_region(&r.coarse, tolerance, r.image.width, r.image.height))
                .flatten(),
        }
    }
}

fn write_row_ops(conn: &Connection, ops: &[RowOp], revision: u64) -> rusqlite::Result<()> {
    for op in ops {
        match op {
            RowOp::Set(d, c) => store::set_row(conn, d, *c, revision)?,
            RowOp::Remove(d, c) => store::remove_row(conn, d, *c, revision)?,
        }
    }
    Ok(())
}

pub struct Coordinator {
    db: Mutex<Connection>,
    state: RwLock<State>,
    images: ImageStore,
}

impl Coordinator {
    fn db(&self) -> MutexGuard<'_, Connection> {
        self.db.lock().unwrap_or_else(PoisonError::into_inner)
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(PoisonError::into_inner)
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(PoisonError::into_inner)
    }

    /// Opens (or creates) the archive under `cfg.data_dir` and applies the
    /// registry from the config.
    pub fn open(cfg: &ServerConfig) -> Result<Self> {
        cfg.validate().map_err(|e| CoordError::Invalid(e.to_string()))?;
        std::fs::create_dir_all(&cfg.data_dir)?;
        let conn = store::open(&cfg.data_dir.join("reboard.sqlite"))?;
        let snapshot = store::load(&conn)?;
        let coord = Self {
            db: Mutex::new(conn),
            state: RwLock::new(State::from_snapshot(snapshot)),
            images: ImageStore::new(cfg.data_dir.join("images"))?,
        };
        coord.sync_config(cfg)?;
        Ok(coord)
    }

    /// Runs `plan` against the current state inside a transaction; its SQL is
    /// committed before the returned closure updates memory.
    fn mutate<R, A>(&self, plan: impl FnOnce(&State, &Connection) -> Result<A>) -> Result<R>
    where
        A: FnOnce(&mut State) -> R,
    {
        let mut db = self.db();
        let tx = db.transaction()?;
        let mut state = self.write();
        let apply = plan(&state, &tx)?;
        tx.commit()?;
        Ok(apply(&mut state))
    }

    fn sync_config(&self, cfg: &ServerConfig) -> Result<()> {
        self.mutate(|st, tx| {
            let mut scratch_holders = st.holders.clone();
            let mut scratch = State {
                rows: st.rows.clone(),
                ..State::default()
            };
            let revision = st.revision + 1;
            let mut ops = Vec::new();
            let mut holder_changes = Vec::new();
            let mut cameras = Vec::new();
            for u in &cfg.users {
                store::upsert_user(tx, u)?;
            }
            for d in &cfg.detectors {
                store::upsert_detector(tx, &d.id, &d.roles)?;
            }
            for entry in &cfg.cameras {
                let prev = st.cameras.get(&entry.id);
                let cam = Camera {
                    id: entry.id,
                    owner: entry.owner,
                    location: entry.location.clone(),
                    config: entry.config.clone(),
                    capture_enabled: prev.map_or(entry.capture_enabled.unwrap_or(true), |p| p.capture_enabled),
                };
                if prev != Some(&cam) {
                    store::upsert_camera(tx, &cam)?;
                    if prev.is_some_and(|p| p.config != cam.config) {
                        ops.extend(st.bump_ops(cam.id));
                    }
                }
                cameras.push(cam);
            }
            for entry in &cfg.cameras {
                let Some(det) = &entry.detector else { continue };
                let roles = cfg.detectors.iter().find(|d| &d.id == det).map(|d| d.roles.clone()).unwrap_or_default();
                scratch.holders = scratch_holders.clone();
                let (changes, row_ops) = scratch.plan_assignment(entry.id, det, &roles);
                for (role, d) in &changes {
                    store::set_holder(tx, entry.id, *role, d)?;
                    scratch_holders.insert((entry.id, *role), d.clone());
                }
                scratch.apply_row_ops(&row_ops, revision);
                holder_changes.extend(changes.into_iter().map(|(r, d)| (entry.id, r, d)));
                ops.extend(row_ops);
            }
            let bumped = !ops.is_empty();
            if bumped {
                write_row_ops(tx, &ops, revision)?;
                store::set_meta(tx, "revision", revision)?;
            }
            let users = cfg.users.clone();
            let detectors: Vec<_> = cfg.detectors.iter().map(|d| (d.id.clone(), d.roles.clone())).collect();
            Ok(move |st: &mut State| {
                for u in users {
                    st.users.insert(u.id, u);
                }
                st.detectors.extend(detectors);
                for c in cameras {
                    st.cameras.insert(c.id, c);
                }
                for (c, r, d) in holder_changes {
                    st.holders.insert((c, r), d);
                }
                if bumped {
                    st.apply_row_ops(&ops, revision);
                    st.revision = revision;
                }
            })
        })
    }

    pub fn authenticate(&self, user: UserId) -> Result<User> {
        self.read().user(user).cloned()
    }

    pub fn revision(&self) -> u64 {
        self.read().revision
    }

    pub fn cameras(&self, user: UserId) -> Result<Vec<CameraSummary>> {
        let st = self.read();
        st.user(user)?;
        Ok(st.cameras.values().map(Camera::summary).collect())
    }

    pub fn poll_assignments(&self, detector: &DetectorId, since: u64) -> Result<AssignmentDelta> {
        let mut st = self.write();
        if !st.detectors.contains_key(detector) {
            return Err(CoordError::UnknownDetector(detector.clone()));
        }
        let full = since == 0 || since > st.revision;
        let since = if full { 0 } else { since };
        let assigned = st
            .rows
            .iter()
            .filter(|((d, _), &rev)| d == detector && rev > since)
            .filter_map(|((d, c), _)| st.assignment_for(d, *c))
            .collect();
        let removed = if full {
            Vec::new()
        } else {
            st.removals
                .iter()
                .filter(|((d, _), &rev)| d == detector && rev > since)
                .map(|((_, c), _)| *c)
                .collect()
        };
        let commands = st.commands.remove(detector).unwrap_or_default();
        Ok(AssignmentDelta {
            detector_id: detector.clone(),
            revision: st.revision,
            full,
            assigned,
            removed,
            commands,
        })
    }

    pub fn assign_camera(&self, user: UserId, camera: CameraId, req: &AssignRequest) -> Result<u64> {
        self.mutate(|st, tx| {
            if !st.user(user)?.admin {
                return Err(CoordError::NotAdmin);
            }
            st.camera(camera)?;
            let available = st
                .detectors
                .get(&req.detector_id)
                .ok_or_else(|| CoordError::UnknownDetector(req.detector_id.clone()))?;
            let roles = req.roles.clone().unwrap_or_else(|| available.clone());
            if roles.is_empty() || roles.iter().any(|r| !available.contains(r)) {
                return Err(CoordError::Invalid(format!("detector {} lacks a requested role", req.detector_id)));
            }
            let (changes, ops) = st.plan_assignment(camera, &req.detector_id, &roles);
            let revision = st.revision + 1;
            let bumped = !ops.is_empty();
            for (role, d) in &changes {
                store::set_holder(tx, camera, *role, d)?;
            }
            if bumped {
                write_row_ops(tx, &ops, revision)?;
                store::set_meta(tx, "revision", revision)?;
            }
            Ok(move |st: &mut State| {
                for (role, d) in changes {
                    st.holders.insert((camera, role), d);
                }
                if bumped {
                    st.apply_row_ops(&ops, revision);
                    st.revision = revision;
                }
                st.revision
            })
        })
    }

    pub fn ingest_capture(&self, upload: &CaptureUpload) -> Result<RecordSummary> {
        if !(0..=MAX_TIMESTAMP).contains(&upload.timestamp) {
            return Err(CoordError::Invalid(format!("timestamp {} out of range", upload.timestamp)));
        }
        if !upload.grids.is_well_formed() {
            return Err(CoordError::Invalid("malformed region grids".into()));
        }
        let png = upload.png_bytes().map_err(|e| CoordError::Invalid(e.to_string()))?;
        let image = upload.image().map_err(|e| CoordError::Invalid(e.to_string()))?;
        {
            let st = self.read();
            let cam = st.camera(upload.camera_id)?;
            if !cam.capture_enabled {
                return Err(CoordError::CaptureDisabled(cam.id));
            }
            let cols = grid_columns(cam.config.geometry.aspect_ratio);
            if upload.grids.columns() != cols {
                return Err(CoordError::Invalid(format!(
                    "grid has {} columns, camera {} expects {cols}",
                    upload.grids.columns(),
                    cam.id
                )));
            }
        }
        let hash = self.images.put(&png)?;
        self.mutate(|st, tx| {
            let cam = st.camera(upload.camera_id)?;
            if !cam.capture_enabled {
                return Err(CoordError::CaptureDisabled(cam.id));
            }
            let collaborative = st
                .intervals
                .get(&cam.id)
                .is_some_and(|v| v.iter().any(|i| i.contains(upload.timestamp)));
            let mut record = Record {
                id: RecordId(0),
                camera_id: cam.id,
                timestamp: upload.timestamp,
                trigger: upload.trigger,
                image: ImageRef {
                    hash,
                    width: image.width(),
                    height: image.height(),
                },
                coarse: upload.grids.coarse.clone(),
                fine_changed: CellMask::from_grid(&upload.grids.fine, cam.cell_tolerance()),
                changed_cell_count: upload.changed_cell_count,
                changed_fraction: upload.changed_fraction,
                content_type: if collaborative { ContentType::Collaborative } else { ContentType::Personal },
                shares: BTreeMap::new(),
                contributors: BTreeSet::new(),
                bookmarked: false,
                tags: BTreeSet::new(),
                label: String::new(),
                description: String::new(),
            };
            record.id = store::insert_capture(tx, &record, &upload.grids.fine)?;
            Ok(move |st: &mut State| {
                let summary = record.summary();
                st.records.insert(record.id, record);
                summary
            })
        })
    }

    pub fn ingest_collaboration(&self, interval: &CollaborationInterval) -> Result<u32> {
        if interval.start > interval.end {
            return Err(CoordError::Invalid(format!("interval start {} after end {}", interval.start, interval.end)));
        }
        self.mutate(|st, tx| {
            st.camera(interval.camera_id)?;
            let upgrades: Vec<RecordId> = st
                .records
                .values()
                .filter(|r| {
                    r.camera_id == interval.camera_id
                        && r.content_type == ContentType::Personal
                        && interval.contains(r.timestamp)
                })
                .map(|r| r.id)
                .collect();
            store::insert_interval(tx, interval)?;
            for &id in &upgrades {
                store::set_content_type(tx, id, ContentType::Collaborative)?;
            }
            let interval = *interval;
            Ok(move |st: &mut State| {
                st.intervals.entry(interval.camera_id).or_default().push(interval);
                for id in &upgrades {
                    if let Some(r) = st.records.get_mut(id) {
                        r.content_type = ContentType::Collaborative;
                    }
                }
                upgrades.len() as u32
            })
        })
    }

    /// Forwards a motion notification to the camera's capture detector when
    /// that is a different detector from the one that saw the motion.
    pub fn notify_motion(&self, notice: &MotionNotice) -> Result<bool> {
        let mut st = self.write();
        st.camera(notice.camera_id)?;
        let capture = st.holders.get(&(notice.camera_id, DetectorRole::Capture)).cloned();
        let motion = st.holders.get(&(notice.camera_id, DetectorRole::Motion)).cloned();
        match capture {
            Some(d) if Some(&d) != motion.as_ref() => {
                st.commands.entry(d).or_default().push(Command::Motion {
                    camera_id: notice.camera_id,
                    timestamp: notice.timestamp,
                });
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn request_manual_capture(&self, user: UserId, camera: CameraId) -> Result<ManualCaptureAck> {
        self.mutate(|st, tx| {
            let cam = st.owned_camera(user, camera)?;
            if !cam.capture_enabled {
                return Err(CoordError::CaptureDisabled(camera));
            }
            let detector = st
                .holders
                .get(&(camera, DetectorRole::Capture))
                .cloned()
                .ok_or(CoordError::NoDetector(camera))?;
            let request_id = st.next_request_id + 1;
            store::set_meta(tx, "next_request_id", request_id)?;
            Ok(move |st: &mut State| {
                st.next_request_id = request_id;
                st.commands.entry(detector.clone()).or_default().push(Command::ManualCapture {
                    camera_id: camera,
                    request_id,
                });
                ManualCaptureAck {
                    camera_id: camera,
                    request_id,
                    detector_id: detector,
                }
            })
        })
    }

    pub fn set_capture_enabled(&self, user: UserId, camera: CameraId, enabled: bool) -> Result<CaptureEnabledAck> {
        self.mutate(|st, tx| {
            let cam = st.owned_camera(user, camera)?;
            let changed = cam.capture_enabled != enabled;
            let revision = st.revision + 1;
            let ops = if changed { st.bump_ops(camera) } else { Vec::new() };
            if changed {
                let mut updated = cam.clone();
                updated.capture_enabled = enabled;
                store::upsert_camera(tx, &updated)?;
                write_row_ops(tx, &ops, revision)?;
                store::set_meta(tx, "revision", revision)?;
            }
            Ok(move |st: &mut State| {
                if changed {
                    st.cameras.get_mut(&camera).expect("checked").capture_enabled = enabled;
                    st.apply_row_ops(&ops, revision);
                    st.revision = revision;
                }
                CaptureEnabledAck {
                    camera_id: camera,
                    enabled,
                    revision: st.revision,
                }
            })
        })
    }

    pub fn share(&self, user: UserId, id: RecordId, req: &ShareRequest) -> Result<RecordDetail> {
        self.mutate(|st, tx| {
            let (r, access) = st.visible(user, id)?;
            if access != Access::Owner {
                return Err(CoordError::NotOwner);
            }
            if req.targets.is_empty() {
                return Err(CoordError::Invalid("no share targets".into()));
            }
            if let Some(u) = req.targets.iter().find(|u| !st.users.contains_key(u)) {
                return Err(CoordError::UnknownUser(*u));
            }
            let region = match req.region {
                Some(rect) if rect.fits(r.image.width, r.image.height) => rect,
                Some(rect) => {
                    return Err(CoordError::Invalid(format!(
                        "share region {rect:?} outside the {}x{} image",
                        r.image.width, r.image.height
                    )))
                }
                None => {
                    let tol = st.camera(r.camera_id)?.cell_tolerance();
                    default_share_region(&r.coarse, tol, r.image.width, r.image.height).ok_or(CoordError::EmptyChange)?
                }
            };
            let targets: Vec<UserId> = req.targets.iter().copied().filter(|&u| u != user).collect();
            for &t in &targets {
                store::upsert_share(tx, id, t, &region)?;
            }
            Ok(move |st: &mut State| {
                let r = st.records.get_mut(&id).expect("checked");
                for t in targets {
                    r.shares.insert(t, region);
                }
                let r = &st.records[&id];
                st.detail(r, Access::Owner)
            })
        })
    }

    pub fn set_metadata(&self, user: UserId, id: RecordId, patch: &MetadataPatch) -> Result<RecordDetail> {
        self.mutate(|st, tx| {
            let (r, access) = st.visible(user, id)?;
            if !access.can_edit() {
                return Err(CoordError::NotAuthorized);
            }
            let mut updated = r.clone();
            if let Some(cs) = &patch.contributors {
                if let Some(u) = cs.iter().find(|u| !st.users.contains_key(u)) {
                    return Err(CoordError::UnknownUser(*u));
                }
                updated.contributors = cs.iter().copied().collect();
            }
            if let Some(tags) = &patch.tags {
                updated.tags = tags.iter().map(|t| t.trim().to_owned()).filter(|t| !t.is_empty()).collect();
            }
            if let Some(label) = &patch.label {
                updated.label = label.clone();
            }
            if let Some(d) = &patch.description {
                updated.description = d.clone();
            }
            if let Some(b) = patch.bookmarked {
                updated.bookmarked = b;
            }
            store::update_metadata(tx, &updated)?;
            Ok(move |st: &mut State| {
                st.records.insert(id, updated);
                let r = &st.records[&id];
                // the editor may have removed themselves as contributor
                match st.access(user, r) {
                    Some(a) => st.detail(r, a),
                    None => st.detail(r, access),
                }
            })
        })
    }

    pub fn query_captures(&self, user: UserId, ctx: &FilterContext) -> Result<Vec<RecordSummary>> {
        ctx.check_range()?;
        let st = self.read();
        st.user(user)?;
        Ok(st.matching(user, ctx).into_iter().map(Record::summary).collect())
    }

    pub fn record_detail(&self, user: UserId, id: RecordId) -> Result<RecordDetail> {
        let st = self.read();
        let (r, access) = st.visible(user, id)?;
        Ok(st.detail(r, access))
    }

    /// Archived PNG, cropped to the viewer's share region and optionally
    /// downscaled to `max_height`.
    pub fn record_image(&self, user: UserId, id: RecordId, max_height: Option<u32>) -> Result<Vec<u8>> {
        let (hash, access, height) = {
            let st = self.read();
            let (r, access) = st.visible(user, id)?;
            (r.image.hash.clone(), access, r.image.height)
        };
        let png = self.images.get(&hash)?;
        let crop = match access {
            Access::Shared(c) => Some(c),
            _ => None,
        };
        let shrink = max_height.filter(|&m| m > 0 && m < crop.map_or(height, |c| c.height));
        if crop.is_none() && shrink.is_none() {
            return Ok(png);
        }
        let img = image::load_from_memory_with_format(&png, image::ImageFormat::Png)
            .map_err(|e| CoordError::Storage(e.to_string()))?;
        let mut img = match crop {
            Some(c) => img.crop_imm(c.x, c.y, c.width, c.height),
            None => img,
        };
        if let Some(h) = shrink {
            let w = ((img.width() as u64 * h as u64) / img.height() as u64).max(1) as u32;
            img = img.resize_exact(w, h, FilterType::Triangle);
        }
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| CoordError::Storage(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn calendar(&self, user: UserId, ctx: &FilterContext) -> Result<Vec<DaySummary>> {
        ctx.check_range()?;
        let st = self.read();
        st.user(user)?;
        Ok(retrieval::calendar(&st.matching(user, ctx)))
    }

    pub fn timeline(&self, user: UserId, ctx: &FilterContext) -> Result<Vec<TimelineBar>> {
        ctx.check_range()?;
        let st = self.read();
        st.user(user)?;
        Ok(retrieval::timeline(&st.matching(user, ctx)))
    }

    fn single_camera<'a>(st: &'a State, ctx: &FilterContext) -> Result<&'a Camera> {
        let mut it = ctx.cameras.iter();
        match (it.next(), it.next()) {
            (Some(&c), None) => st.camera(c),
            _ => Err(RetrievalError::NoCameraSelected.into()),
        }
    }

    pub fn heatmap(&self, user: UserId, ctx: &FilterContext) -> Result<HeatmapGrid> {
        ctx.check_range()?;
        let st = self.read();
        st.user(user)?;
        let cam = Self::single_camera(&st, ctx)?;
        let cols = grid_columns(cam.config.geometry.aspect_ratio);
        Ok(retrieval::heatmap(cam.id, cols, &st.matching(user, ctx), cam.cell_tolerance()))
    }

    pub fn region_select(&self, user: UserId, ctx: &FilterContext, cells: CellRect) -> Result<RegionSelection> {
        let st = self.read();
        st.user(user)?;
        let cam = Self::single_camera(&st, ctx)?;
        let context = retrieval::region_select(ctx, grid_columns(cam.config.geometry.aspect_ratio), cells)?;
        Ok(RegionSelection {
            query: context.to_query(),
            context,
        })
    }

    /// Full-resolution fine grid for a record, read back from storage.
    pub fn fine_grid(&self, user: UserId, id: RecordId) -> Result<reboard_core::imaging::Grid> {
        self.read().visible(user, id)?;
        store::load_fine_grid(&self.db(), id)?.ok_or(CoordError::UnknownRecord(id))
    }
}
