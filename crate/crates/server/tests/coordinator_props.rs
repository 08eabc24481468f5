mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use common::*;
use reboard_core::collab::CollaborationInterval;
use reboard_core::wire::{CameraAssignment, DetectorRole};
use reboard_core::{CameraId, DetectorId, RecordId, UserId};
use reboard_server::coordinator::{AssignRequest, MetadataPatch, ShareRequest};
use reboard_server::model::{ContentType, CropRect};
use reboard_server::retrieval::FilterContext;
use reboard_server::{CoordError, Coordinator};

fn open(dir: &tempfile::TempDir) -> Coordinator {
    Coordinator::open(&config(dir.path())).unwrap()
}

#[derive(Clone, Debug)]
enum Ingest {
    Capture(i64),
    Interval(i64, i64),
}

fn ingest(c: &Coordinator, op: &Ingest) {
    match *op {
        Ingest::Capture(ts) => {
            c.ingest_capture(&upload(CAM, ts, &[(1, 1)])).unwrap();
        }
        Ingest::Interval(start, end) => {
            c.ingest_collaboration(&CollaborationInterval {
                camera_id: CAM,
                start,
                end,
            })
            .unwrap();
        }
    }
}

fn labels(c: &Coordinator) -> BTreeMap<i64, ContentType> {
    c.query_captures(OWNER, &FilterContext::default())
        .unwrap()
        .into_iter()
        .map(|r| (r.timestamp, r.content_type))
        .collect()
}

fn events() -> impl Strategy<Value = (Vec<Ingest>, Vec<usize>)> {
    (
        prop::collection::btree_set(0i64..1000, 1..10),
        prop::collection::vec((0i64..1000, 0i64..200), 0..4),
    )
        .prop_flat_map(|(caps, ivs)| {
            let mut ops: Vec<Ingest> = caps.into_iter().map(|t| Ingest::Capture(t * 1000)).collect();
            ops.extend(ivs.into_iter().map(|(s, len)| Ingest::Interval(s * 1000, (s + len) * 1000)));
            let n = ops.len();
            (Just(ops), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn content_type_ignores_arrival_order((ops, perm) in events()) {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (a, b) = (open(&d1), open(&d2));
        for op in &ops {
            ingest(&a, op);
        }
        for &i in &perm {
            ingest(&b, &ops[i]);
        }
        let la = labels(&a);
        prop_assert_eq!(&la, &labels(&b));
        for (ts, t) in la {
            let inside = ops.iter().any(|op| matches!(*op, Ingest::Interval(s, e) if s <= ts && ts <= e));
            prop_assert_eq!(t == ContentType::Collaborative, inside);
        }
    }
}

const USERS: [UserId; 4] = [OWNER, FRIEND, STRANGER, ADMIN];

/// Per record: (camera, contributors, share targets).
type Plan = Vec<(bool, Vec<usize>, Vec<usize>)>;

fn plan() -> impl Strategy<Value = Plan> {
    prop::collection::vec(
        (any::<bool>(), prop::collection::vec(0usize..4, 0..3), prop::collection::vec(0usize..4, 0..3)),
        1..8,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn users_see_exactly_what_they_own_contribute_to_or_were_shared(p in plan()) {
        let dir = tempfile::tempdir().unwrap();
        let c = open(&dir);
        let mut expected: BTreeMap<UserId, BTreeSet<RecordId>> = BTreeMap::new();
        let mut crops: BTreeMap<(UserId, RecordId), CropRect> = BTreeMap::new();
        for (i, (other, contributors, targets)) in p.iter().enumerate() {
            let (cam, owner) = if *other { (OTHER_CAM, FRIEND) } else { (CAM, OWNER) };
            let id = c.ingest_capture(&upload(cam, i as i64, &[(2, 3), (3, 3)])).unwrap().id;
            expected.entry(owner).or_default().insert(id);
            if !contributors.is_empty() {
                let cs: Vec<UserId> = contributors.iter().map(|&u| USERS[u]).collect();
                let patch = MetadataPatch { contributors: Some(cs.clone()), ..Default::default() };
                c.set_metadata(owner, id, &patch).unwrap();
                for u in cs {
                    expected.entry(u).or_default().insert(id);
                }
            }
            if !targets.is_empty() {
                let ts: Vec<UserId> = targets.iter().map(|&u| USERS[u]).collect();
                let detail = c.share(owner, id, &ShareRequest { targets: ts.clone(), region: None }).unwrap();
                let region = detail.shares.first().map(|s| s.region);
                for u in ts.into_iter().filter(|&u| u != owner) {
                    expected.entry(u).or_default().insert(id);
                    crops.insert((u, id), region.unwrap());
                }
            }
        }
        for u in USERS {
            let seen: BTreeSet<RecordId> =
                c.query_captures(u, &FilterContext::default()).unwrap().into_iter().map(|r| r.id).collect();
            let want = expected.get(&u).cloned().unwrap_or_default();
            prop_assert_eq!(&seen, &want, "user {}", u);
            for id in 1..=p.len() as u64 {
                let id = RecordId(id);
                match c.record_detail(u, id) {
                    Ok(d) => {
                        prop_assert!(want.contains(&id));
                        if let Some(crop) = d.viewer_crop {
                            prop_assert_eq!(Some(&crop), crops.get(&(u, id)));
                            let png = c.record_image(u, id, None).unwrap();
                            let img = image::load_from_memory(&png).unwrap();
                            prop_assert_eq!((img.width(), img.height()), (crop.width, crop.height));
                        }
                    }
                    Err(CoordError::UnknownRecord(_)) => prop_assert!(!want.contains(&id)),
                    Err(e) => prop_assert!(false, "unexpected {}", e),
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Admin {
    Assign(bool, bool, Option<Vec<DetectorRole>>),
    Enable(bool, bool),
    Poll(bool),
}

fn admin_op() -> impl Strategy<Value = Admin> {
    let roles = prop::option::of(prop::sample::subsequence(DetectorRole::ALL.to_vec(), 1..=2));
    prop_oneof![
        (any::<bool>(), any::<bool>(), roles).prop_map(|(c, d, r)| Admin::Assign(c, d, r)),
        (any::<bool>(), any::<bool>()).prop_map(|(c, e)| Admin::Enable(c, e)),
        any::<bool>().prop_map(Admin::Poll),
    ]
}

/// What a detector ends up holding by applying deltas in order.
#[derive(Default)]
struct Replica {
    revision: u64,
    cameras: BTreeMap<CameraId, CameraAssignment>,
}

impl Replica {
    fn sync(&mut self, c: &Coordinator, d: &DetectorId) {
        let delta = c.poll_assignments(d, self.revision).unwrap();
        if delta.full {
            self.cameras.clear();
        }
        for cam in delta.removed {
            self.cameras.remove(&cam);
        }
        for a in delta.assigned {
            self.cameras.insert(a.camera_id, a);
        }
        self.revision = delta.revision;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn replaying_deltas_matches_a_fresh_snapshot(ops in prop::collection::vec(admin_op(), 1..25)) {
        let dir = tempfile::tempdir().unwrap();
        let c = open(&dir);
        let dets = [DetectorId::from("pc-a"), DetectorId::from("pc-b")];
        let mut replicas = [Replica::default(), Replica::default()];
        for op in ops {
            match op {
                Admin::Assign(cam, det, roles) => {
                    let cam = if cam { CAM } else { OTHER_CAM };
                    let req = AssignRequest { detector_id: dets[det as usize].clone(), roles };
                    c.assign_camera(ADMIN, cam, &req).unwrap();
                }
                Admin::Enable(cam, on) => {
                    let (cam, owner) = if cam { (CAM, OWNER) } else { (OTHER_CAM, FRIEND) };
                    c.set_capture_enabled(owner, cam, on).unwrap();
                }
                Admin::Poll(det) => replicas[det as usize].sync(&c, &dets[det as usize]),
            }
        }
        // every (camera, role) has exactly one holder
        let mut holders: BTreeMap<(CameraId, DetectorRole), usize> = BTreeMap::new();
        for (i, (d, r)) in dets.iter().zip(replicas.iter_mut()).enumerate() {
            r.sync(&c, d);
            let fresh = c.poll_assignments(d, 0).unwrap();
            let want: BTreeMap<CameraId, CameraAssignment> =
                fresh.assigned.into_iter().map(|a| (a.camera_id, a)).collect();
            prop_assert_eq!(&r.cameras, &want);
            for a in want.values() {
                prop_assert!(!a.roles.is_empty());
                for role in &a.roles {
                    prop_assert!(holders.insert((a.camera_id, *role), i).is_none());
                }
            }
        }
        prop_assert_eq!(holders.len(), 4);
    }
}

#[test]
fn archive_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (before, revision) = {
        let c = open(&dir);
        let id = c.ingest_capture(&upload(CAM, 1000, &[(4, 4)])).unwrap().id;
        c.ingest_capture(&upload(CAM, 9000, &[(5, 4)])).unwrap();
        c.ingest_collaboration(&CollaborationInterval {
            camera_id: CAM,
            start: 500,
            end: 2000,
        })
        .unwrap();
        c.share(OWNER, id, &ShareRequest { targets: vec![FRIEND], region: None }).unwrap();
        let patch = MetadataPatch {
            label: Some("retro".into()),
            tags: Some(vec!["a".into(), "b".into()]),
            bookmarked: Some(true),
            ..Default::default()
        };
        c.set_metadata(OWNER, id, &patch).unwrap();
        c.set_capture_enabled(OWNER, OTHER_CAM, false).unwrap_err();
        c.set_capture_enabled(FRIEND, OTHER_CAM, false).unwrap();
        let ids = [RecordId(1), RecordId(2)];
        let details: Vec<_> = ids.iter().map(|&i| c.record_detail(OWNER, i).unwrap()).collect();
        (details, c.revision())
    };
    let c = open(&dir);
    assert_eq!(c.revision(), revision);
    let after: Vec<_> = [RecordId(1), RecordId(2)].iter().map(|&i| c.record_detail(OWNER, i).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(c.record_detail(FRIEND, RecordId(1)).unwrap().viewer_crop, before[0].default_share_region);
    let fine = c.fine_grid(OWNER, RecordId(1)).unwrap();
    assert_eq!(fine, fine_for(&coarse(&[(4, 4)], 0.5)));
    let cams = c.cameras(OWNER).unwrap();
    assert!(!cams.iter().find(|c| c.id == OTHER_CAM).unwrap().capture_enabled);
    // new records continue the id sequence
    assert_eq!(c.ingest_capture(&upload(CAM, 20_000, &[])).unwrap().id, RecordId(3));
}
