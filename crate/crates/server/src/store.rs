//! SQLite persistence (write-through behind the in-memory state) and the
//! content-addressed PNG area.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rusqlite::{params, Connection, OptionalExtension};
use sha2::{Digest, Sha256};

use reboard_core::capture::Trigger;
use reboard_core::collab::CollaborationInterval;
use reboard_core::imaging::Grid;
use reboard_core::wire::DetectorRole;
use reboard_core::{CameraId, DetectorId, RecordId, UserId};

use crate::model::{Camera, CellMask, ContentType, CropRect, ImageRef, Record, User};

pub type DbResult<T> = rusqlite::Result<T>;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS users (id INTEGER PRIMARY KEY, name TEXT NOT NULL, admin INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS detectors (id TEXT PRIMARY KEY, roles TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS cameras (
    id INTEGER PRIMARY KEY, owner INTEGER NOT NULL REFERENCES users(id), location TEXT NOT NULL,
    config TEXT NOT NULL, capture_enabled INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS holders (
    camera_id INTEGER NOT NULL, role TEXT NOT NULL, detector_id TEXT NOT NULL,
    PRIMARY KEY (camera_id, role));
CREATE TABLE IF NOT EXISTS assignment_rows (
    detector_id TEXT NOT NULL, camera_id INTEGER NOT NULL, revision INTEGER NOT NULL,
    PRIMARY KEY (detector_id, camera_id));
CREATE TABLE IF NOT EXISTS assignment_removals (
    detector_id TEXT NOT NULL, camera_id INTEGER NOT NULL, revision INTEGER NOT NULL,
    PRIMARY KEY (detector_id, camera_id));
CREATE TABLE IF NOT EXISTS intervals (
    camera_id INTEGER NOT NULL, start_ms INTEGER NOT NULL, end_ms INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS captures (
    id INTEGER PRIMARY KEY AUTOINCREMENT, camera_id INTEGER NOT NULL, timestamp INTEGER NOT NULL,
    trigger TEXT NOT NULL, image_hash TEXT NOT NULL, width INTEGER NOT NULL, height INTEGER NOT NULL,
    coarse_cols INTEGER NOT NULL, coarse BLOB NOT NULL, fine_cols INTEGER NOT NULL, fine BLOB NOT NULL,
    changed_cell_count INTEGER NOT NULL, changed_fraction REAL NOT NULL, content_type TEXT NOT NULL,
    bookmarked INTEGER NOT NULL DEFAULT 0, label TEXT NOT NULL DEFAULT '', description TEXT NOT NULL DEFAULT '');
CREATE INDEX IF NOT EXISTS captures_by_camera ON captures (camera_id, timestamp);
CREATE TABLE IF NOT EXISTS shares (
    record_id INTEGER NOT NULL, user_id INTEGER NOT NULL,
    x INTEGER NOT NULL, y INTEGER NOT NULL, w INTEGER NOT NULL, h INTEGER NOT NULL,
    PRIMARY KEY (record_id, user_id));
CREATE TABLE IF NOT EXISTS contributors (record_id INTEGER NOT NULL, user_id INTEGER NOT NULL, PRIMARY KEY (record_id, user_id));
CREATE TABLE IF NOT EXISTS tags (record_id INTEGER NOT NULL, tag TEXT NOT NULL, PRIMARY KEY (record_id, tag));
";

pub fn open(path: &Path) -> DbResult<Connection> {
    let conn = Connection::open(path)?;
    conn.pragma_update(None, "journal_mode", "WAL")?;
    conn.pragma_update(None, "synchronous", "NORMAL")?;
    conn.execute_batch(SCHEMA)?;
    Ok(conn)
}

fn grid_blob(g: &Grid) -> Vec<u8> {
    g.values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn blob_grid(cols: u32, blob: &[u8]) -> Grid {
    let values: Vec<f32> = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let rows = if cols == 0 { 0 } else { values.len() as u32 / cols };
    Grid { cols, rows, values }
}

fn trigger_name(t: Trigger) -> &'static str {
    match t {
        Trigger::Automatic => "automatic",
        Trigger::Manual => "manual",
    }
}

fn role_list(roles: &[DetectorRole]) -> String {
    roles.iter().map(|r| r.name()).collect::<Vec<_>>().join(",")
}

pub fn parse_role(s: &str) -> Option<DetectorRole> {
    DetectorRole::ALL.into_iter().find(|r| r.name() == s)
}

fn conversion_err(msg: String) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, msg.into())
}

pub fn get_meta(conn: &Connection, key: &str) -> DbResult<u64> {
    Ok(conn
        .query_row("SELECT value FROM meta WHERE key = ?1", [key], |r| r.get::<_, i64>(0))
        .optional()?
        .unwrap_or(0) as u64)
}

pub fn set_meta(conn: &Connection, key: &str, value: u64) -> DbResult<()> {
    conn.execute(
        "INSERT INTO meta (key, value) VALUES (?1, ?2) ON CONFLICT(key) DO UPDATE SET value = excluded.value",
        params![key, value as i64],
    )?;
    Ok(())
}

pub fn upsert_user(conn: &Connection, u: &User) -> DbResult<()> {
    conn.execute(
        "INSERT INTO users (id, name, admin) VALUES (?1, ?2, ?3)
         ON CONFLICT(id) DO UPDATE SET name = excluded.name, admin = excluded.admin",
        params![u.id.0 as i64, u.name, u.admin],
    )?;
    Ok(())
}

pub fn upsert_detector(conn: &Connection, id: &DetectorId, roles: &[DetectorRole]) -> DbResult<()> {
    conn.execute(
        "INSERT INTO detectors (id, roles) VALUES (?1, ?2) ON CONFLICT(id) DO UPDATE SET roles = excluded.roles",
        params![id.0, role_list(roles)],
    )?;
    Ok(())
}

pub fn upsert_camera(conn: &Connection, c: &Camera) -> DbResult<()> {
    let config = serde_json::to_string(&c.config).map_err(|e| conversion_err(e.to_string()))?;
    conn.execute(
        "INSERT INTO cameras (id, owner, location, config, capture_enabled) VALUES (?1, ?2, ?3, ?4, ?5)
         ON CONFLICT(id) DO UPDATE SET owner = excluded.owner, location = excluded.location,
             config = excluded.config, capture_enabled = excluded.capture_enabled",
        params![c.id.0 as i64, c.owner.0 as i64, c.location, config, c.capture_enabled],
    )?;
    Ok(())
}

pub fn set_holder(conn: &Connection, camera: CameraId, role: DetectorRole, detector: &DetectorId) -> DbResult<()> {
    conn.execute(
        "INSERT INTO holders (camera_id, role, detector_id) VALUES (?1, ?2, ?3)
         ON CONFLICT(camera_id, role) DO UPDATE SET detector_id = excluded.detector_id",
        params![camera.0 as i64, role.name(), detector.0],
    )?;
    Ok(())
}

pub fn set_row(conn: &Connection, detector: &DetectorId, camera: CameraId, revision: u64) -> DbResult<()> {
    conn.execute(
        "DELETE FROM assignment_removals WHERE detector_id = ?1 AND camera_id = ?2",
        params![detector.0, camera.0 as i64],
    )?;
    conn.execute(
        "INSERT INTO assignment_rows (detector_id, camera_id, revision) VALUES (?1, ?2, ?3)
         ON CONFLICT(detector_id, camera_id) DO UPDATE SET revision = excluded.revision",
        params![detector.0, camera.0 as i64, revision as i64],
    )?;
    Ok(())
}

pub fn remove_row(conn: &Connection, detector: &DetectorId, camera: CameraId, revision: u64) -> DbResult<()> {
    conn.execute(
        "DELETE FROM assignment_rows WHERE detector_id = ?1 AND camera_id = ?2",
        params![detector.0, camera.0 as i64],
    )?;
    conn.execute(
        "INSERT INTO assignment_removals (detector_id, camera_id, revision) VALUES (?1, ?2, ?3)
         ON CONFLICT(detector_id, camera_id) DO UPDATE SET revision = excluded.revision",
        params![detector.0, camera.0 as i64, revision as i64],
    )?;
    Ok(())
}

pub fn insert_interval(conn: &Connection, i: &CollaborationInterval) -> DbResult<()> {
    conn.execute(
        "INSERT INTO intervals (camera_id, start_ms, end_ms) VALUES (?1, ?2, ?3)",
        params![i.camera_id.0 as i64, i.start, i.end],
    )?;
    Ok(())
}

/// Inserts a capture and returns its new id. Shares, contributors and tags
/// start empty.
pub fn insert_capture(conn: &Connection, r: &Record, fine: &Grid) -> DbResult<RecordId> {
    conn.execute(
        "INSERT INTO captures (camera_id, timestamp, trigger, image_hash, width, height, coarse_cols, coarse,
             fine_cols, fine, changed_cell_count, changed_fraction, content_type)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)",
        params![
            r.camera_id.0 as i64,
            r.timestamp,
            trigger_name(r.trigger),
            r.image.hash,
            r.image.width,
            r.image.height,
            r.coarse.cols,
            grid_blob(&r.coarse),
            fine.cols,
            grid_blob(fine),
            r.changed_cell_count,
            r.changed_fraction,
            r.content_type.name(),
        ],
    )?;
    Ok(RecordId(conn.last_insert_rowid() as u64))
}

pub fn set_content_type(conn: &Connection, id: RecordId, t: ContentType) -> DbResult<()> {
    conn.execute("UPDATE captures SET content_type = ?1 WHERE id = ?2", params![t.name(), id.0 as i64])?;
    Ok(())
}

pub fn upsert_share(conn: &Connection, id: RecordId, user: UserId, rect: &CropRect) -> DbResult<()> {
    conn.execute(
        "INSERT INTO shares (record_id, user_id, x, y, w, h) VALUES (?1, ?2, ?3, ?4, ?5, ?6)
         ON CONFLICT(record_id, user_id) DO UPDATE SET x = excluded.x, y = excluded.y, w = excluded.w, h = excluded.h",
        params![id.0 as i64, user.0 as i64, rect.x, rect.y, rect.width, rect.height],
    )?;
    Ok(())
}

pub fn update_metadata(conn: &Connection, r: &Record) -> DbResult<()> {
    let id = r.id.0 as i64;
    conn.execute(
        "UPDATE captures SET bookmarked = ?1, label = ?2, description = ?3 WHERE id = ?4",
        params![r.bookmarked, r.label, r.description, id],
    )?;
    conn.execute("DELETE FROM contributors WHERE record_id = ?1", [id])?;
    for u in &r.contributors {
        conn.execute("INSERT INTO contributors (record_id, user_id) VALUES (?1, ?2)", params![id, u.0 as i64])?;
    }
    conn.execute("DELETE FROM tags WHERE record_id = ?1", [id])?;
    for t in &r.tags {
        conn.execute("INSERT INTO tags (record_id, tag) VALUES (?1, ?2)", params![id, t])?;
    }
    Ok(())
}

pub fn load_fine_grid(conn: &Connection, id: RecordId) -> DbResult<Option<Grid>> {
    conn.query_row("SELECT fine_cols, fine FROM captures WHERE id = ?1", [id.0 as i64], |row| {
        Ok(blob_grid(row.get(0)?, &row.get::<_, Vec<u8>>(1)?))
    })
    .optional()
}

/// Everything the in-memory state is rebuilt from.
#[derive(Debug, Default)]
pub struct Snapshot {
    pub revision: u64,
    pub next_request_id: u64,
    pub users: Vec<User>,
    pub detectors: Vec<(DetectorId, Vec<DetectorRole>)>,
    pub cameras: Vec<Camera>,
    pub holders: Vec<(CameraId, DetectorRole, DetectorId)>,
    pub rows: Vec<(DetectorId, CameraId, u64)>,
    pub removals: Vec<(DetectorId, CameraId, u64)>,
    pub intervals: Vec<CollaborationInterval>,
    pub records: Vec<Record>,
}

pub fn load(conn: &Connection) -> DbResult<Snapshot> {
    let mut s = Snapshot {
        revision: get_meta(conn, "revision")?,
        next_request_id: get_meta(conn, "next_request_id")?,
        ..Snapshot::default()
    };
    let mut q = conn.prepare("SELECT id, name, admin FROM users ORDER BY id")?;
    s.users = q
        .query_map([], |r| {
            Ok(User {
                id: UserId(r.get::<_, i64>(0)? as u64),
                name: r.get(1)?,
                admin: r.get(2)?,
            })
        })?
        .collect::<DbResult<_>>()?;
    let mut q = conn.prepare("SELECT id, roles FROM detectors ORDER BY id")?;
    s.detectors = q
        .query_map([], |r| {
            let roles: String = r.get(1)?;
            Ok((DetectorId(r.get(0)?), roles.split(',').filter_map(parse_role).collect()))
        })?
        .collect::<DbResult<_>>()?;
    let mut q = conn.prepare("SELECT id, owner, location, config, capture_enabled FROM cameras ORDER BY id")?;
    s.cameras = q
        .query_map([], |r| {
            let config: String = r.get(3)?;
            Ok(Camera {
                id: CameraId(r.get::<_, i64>(0)? as u64),
                owner: UserId(r.get::<_, i64>(1)? as u64),
                location: r.get(2)?,
                config: serde_json::from_str(&config).map_err(|e| conversion_err(e.to_string()))?,
                capture_enabled: r.get(4)?,
            })
        })?
        .collect::<DbResult<_>>()?;
    let mut q = conn.prepare("SELECT camera_id, role, detector_id FROM holders")?;
    s.holders = q
        .query_map([], |r| {
            let role: String = r.get(1)?;
            let role = parse_role(&role).ok_or_else(|| conversion_err(format!("unknown role {role}")))?;
            Ok((CameraId(r.get::<_, i64>(0)? as u64), role, DetectorId(r.get(2)?)))
        })?
        .collect::<DbResult<_>>()?;
    for (table, out) in [("assignment_rows", &mut s.rows), ("assignment_removals", &mut s.removals)] {
        let mut q = conn.prepare(&format!("SELECT detector_id, camera_id, revision FROM {table}"))?;
        *out = q
            .query_map([], |r| {
                Ok((DetectorId(r.get(0)?), CameraId(r.get::<_, i64>(1)? as u64), r.get::<_, i64>(2)? as u64))
            })?
            .collect::<DbResult<_>>()?;
    }
    let mut q = conn.prepare("SELECT camera_id, start_ms, end_ms FROM intervals ORDER BY camera_id, start_ms")?;
    s.intervals = q
        .query_map([], |r| {
            Ok(CollaborationInterval {
                camera_id: CameraId(r.get::<_, i64>(0)? as u64),
                start: r.get(1)?,
                end: r.get(2)?,
            })
        })?
        .collect::<DbResult<_>>()?;

    let tolerance: BTreeMap<CameraId, f32> = s.cameras.iter().map(|c| (c.id, c.cell_tolerance())).collect();
    let mut shares: BTreeMap<RecordId, BTreeMap<UserId, CropRect>> = BTreeMap::new();
    let mut q = conn.prepare("SELECT record_id, user_id, x, y, w, h FROM shares")?;
    for row in q.query_map([], |r| {
        Ok((
            RecordId(r.get::<_, i64>(0)? as u64),
            UserId(r.get::<_, i64>(1)? as u64),
            CropRect {
                x: r.get(2)?,
                y: r.get(3)?,
                width: r.get(4)?,
                height: r.get(5)?,
            },
        ))
    })? {
        let (id, user, rect) = row?;
        shares.entry(id).or_default().insert(user, rect);
    }
    let mut contributors: BTreeMap<RecordId, BTreeSet<UserId>> = BTreeMap::new();
    let mut q = conn.prepare("SELECT record_id, user_id FROM contributors")?;
    for row in q.query_map([], |r| Ok((RecordId(r.get::<_, i64>(0)? as u64), UserId(r.get::<_, i64>(1)? as u64))))? {
        let (id, user) = row?;
        contributors.entry(id).or_default().insert(user);
    }
    let mut tags: BTreeMap<RecordId, BTreeSet<String>> = BTreeMap::new();
    let mut q = conn.prepare("SELECT record_id, tag FROM tags")?;
    for row in q.query_map([], |r| Ok((RecordId(r.get::<_, i64>(0)? as u64), r.get::<_, String>(1)?)))? {
        let (id, tag) = row?;
        tags.entry(id).or_default().insert(tag);
    }

    let mut q = conn.prepare(
        "SELECT id, camera_id, timestamp, trigger, image_hash, width, height, coarse_cols, coarse, fine_cols, fine,
             changed_cell_count, changed_fraction, content_type, bookmarked, label, description
         FROM captures ORDER BY id",
    )?;
    s.records = q
        .query_map([], |r| {
            let id = RecordId(r.get::<_, i64>(0)? as u64);
            let camera_id = CameraId(r.get::<_, i64>(1)? as u64);
            let trigger: String = r.get(3)?;
            let content: String = r.get(13)?;
            let fine = blob_grid(r.get(9)?, &r.get::<_, Vec<u8>>(10)?);
            let tol = tolerance.get(&camera_id).copied().unwrap_or(0.05);
            Ok(Record {
                id,
                camera_id,
                timestamp: r.get(2)?,
                trigger: if trigger == "manual" { Trigger::Manual } else { Trigger::Automatic },
                image: ImageRef {
                    hash: r.get(4)?,
                    width: r.get(5)?,
                    height: r.get(6)?,
                },
                coarse: blob_grid(r.get(7)?, &r.get::<_, Vec<u8>>(8)?),
                fine_changed: CellMask::from_grid(&fine, tol),
                changed_cell_count: r.get(11)?,
                changed_fraction: r.get(12)?,
                content_type: ContentType::parse(&content).ok_or_else(|| conversion_err(content.clone()))?,
                shares: BTreeMap::new(),
                contributors: BTreeSet::new(),
                bookmarked: r.get(14)?,
                tags: BTreeSet::new(),
                label: r.get(15)?,
                description: r.get(16)?,
            })
        })?
        .collect::<DbResult<_>>()?;
    for rec in &mut s.records {
        rec.shares = shares.remove(&rec.id).unwrap_or_default();
        rec.contributors = contributors.remove(&rec.id).unwrap_or_default();
        rec.tags = tags.remove(&rec.id).unwrap_or_default();
    }
    Ok(s)
}

/// PNG files named by the SHA-256 of their bytes, two-level fan-out.
#[derive(Clone, Debug)]
pub struct ImageStore {
    root: PathBuf,
}

impl ImageStore {
    pub fn new(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn hash(bytes: &[u8]) -> String {
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, hash: &str) -> PathBuf {
        self.root.join(&hash[..2]).join(format!("{hash}.png"))
    }

    /// Stores `bytes` and returns their hash; storing the same bytes twice is a no-op.
    pub fn put(&self, bytes: &[u8]) -> std::io::Result<String> {
        let hash = Self::hash(bytes);
        let path = self.path(&hash);
        if !path.exists() {
            std::fs::create_dir_all(path.parent().expect("fan-out dir"))?;
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> std::io::Result<Vec<u8>> {
        if hash.len() < 2 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "bad image hash"));
        }
        std::fs::read(self.path(hash))
    }
}
