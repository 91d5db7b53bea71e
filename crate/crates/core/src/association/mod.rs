//! Cross-frame grouping of instance observations through shared map points,
//! with box-based expansion, merging and splitting of tracks.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::evaluate::hungarian;
use crate::geometry::polygon::convex_intersection;
use crate::geometry::{convex_hull, convex_polygon_iou, point_in_polygon, polygon_area, polygon_centroid, ShapeParams};
use crate::scene::{ObjectClass, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationParams {
    pub min_support_points: usize,
    /// Meters.
    pub merge_vertex_dist: f64,
    pub merge_iou: f64,
    pub split_iou: f64,
    pub split_min_frames: usize,
    pub max_iterations: usize,
    /// Meters a proposal is grown by when collecting interior map points.
    pub box_margin: f64,
}

impl Default for AssociationParams {
    fn default() -> Self {
        AssociationParams {
            min_support_points: 8,
            merge_vertex_dist: 0.5,
            merge_iou: 0.5,
            split_iou: 0.3,
            split_min_frames: 3,
            max_iterations: 10,
            box_margin: 0.05,
        }
    }
}

impl AssociationParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_support_points == 0 || self.split_min_frames == 0 || self.max_iterations == 0 {
            return Err("association counts must be positive".into());
        }
        if !(self.merge_vertex_dist > 0.0) {
            return Err(format!("merge_vertex_dist must be positive, got {}", self.merge_vertex_dist));
        }
        for (name, v) in [("merge_iou", self.merge_iou), ("split_iou", self.split_iou)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.box_margin >= 0.0) {
            return Err(format!("box_margin must be non-negative, got {}", self.box_margin));
        }
        Ok(())
    }
}

/// Point-to-instance memberships plus explicit observation links created by
/// merges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memberships {
    /// point_id → obs_ids (at most one per frame).
    pub by_point: BTreeMap<u64, BTreeSet<u64>>,
    pub links: BTreeSet<(u64, u64)>,
}

impl Memberships {
    pub fn len(&self) -> usize {
        self.by_point.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, point_id: u64, obs_id: u64) -> bool {
        self.by_point.entry(point_id).or_default().insert(obs_id)
    }

    pub fn contains(&self, point_id: u64, obs_id: u64) -> bool {
        self.by_point.get(&point_id).is_some_and(|s| s.contains(&obs_id))
    }

    /// Every membership of `self` is also in `other`.
    pub fn is_subset(&self, other: &Memberships) -> bool {
        self.by_point.iter().all(|(p, s)| other.by_point.get(p).is_some_and(|o| s.is_subset(o)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub class: ObjectClass,
    /// Sorted.
    pub obs_ids: Vec<u64>,
    /// Sorted.
    pub support_points: Vec<u64>,
    pub valid: bool,
}

impl Track {
    pub fn frames(&self, scene: &Scene) -> BTreeSet<u64> {
        self.obs_ids.iter().filter_map(|id| scene.observation(*id)).map(|o| o.frame_id).collect()
    }
}

/// Tests each keypoint pixel against the instance masks of its frame. A pixel
/// inside several masks goes to the one with the nearest centroid.
pub fn assign_points_to_instances(scene: &Scene) -> Memberships {
    let centroids: BTreeMap<u64, Point2<f64>> =
        scene.observations().iter().map(|o| (o.obs_id, polygon_centroid(&o.mask))).collect();
    let mut out = Memberships::default();
    for p in scene.map_points() {
        for kp in &p.observations {
            let best = scene
                .observations_in_frame(kp.frame_id)
                .filter(|o| point_in_polygon(&kp.pixel, &o.mask))
                .map(|o| ((centroids[&o.obs_id] - kp.pixel).norm(), o.obs_id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, obs_id)) = best {
                out.insert(p.point_id, obs_id);
            }
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut i = i;
        while self.parent[i] != r {
            let next = self.parent[i];
            self.parent[i] = r;
            i = next;
        }
        r
    }

    /// Joins the sets, keeping the smaller root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of same-class observations sharing map points (or
/// joined by a link). A point supports the track holding most of its
/// memberships, provided it has at least two there and falls inside the
/// track's masks in at least half of the track frames that observe it.
/// Tracks with too few support points are marked invalid.
pub fn build_tracks(scene: &Scene, memberships: &Memberships, params: &AssociationParams) -> Vec<Track> {
    let obs = scene.observations();
    let index: BTreeMap<u64, usize> = obs.iter().enumerate().map(|(i, o)| (o.obs_id, i)).collect();
    let mut uf = UnionFind::new(obs.len());
    for set in memberships.by_point.values() {
        let mut first: BTreeMap<ObjectClass, usize> = BTreeMap::new();
        for id in set {
            let Some(&i) = index.get(id) else { continue };
            match first.get(&obs[i].class) {
                Some(&j) => uf.union(i, j),
                None => {
                    first.insert(obs[i].class, i);
                }
            }
        }
    }
    for (a, b) in &memberships.links {
        if let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) {
            if obs[i].class == obs[j].class {
                uf.union(i, j);
            }
        }
    }
    // observations are sorted by id, so roots are the smallest obs of each component
    let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for i in 0..obs.len() {
        groups.entry(uf.find(i)).or_default().push(obs[i].obs_id);
    }
    let mut tracks: Vec<Track> = groups
        .into_iter()
        .enumerate()
        .map(|(k, (root, ids))| Track {
            track_id: k as u64 + 1,
            class: obs[root].class,
            obs_ids: ids,
            support_points: Vec::new(),
            valid: false,
        })
        .collect();
    let track_of: BTreeMap<u64, usize> =
        tracks.iter().enumerate().flat_map(|(t, tr)| tr.obs_ids.iter().map(move |&o| (o, t))).collect();
    let track_frames: Vec<BTreeSet<u64>> = tracks.iter().map(|t| t.frames(scene)).collect();
    for (&pid, set) in &memberships.by_point {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for id in set {
            if let Some(&t) = track_of.get(id) {
                *votes.entry(t).or_default() += 1;
            }
        }
        let Some((&t, &count)) = votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            continue;
        };
        let Some(point) = scene.map_point(pid) else { continue };
        let in_track_frames = point.observations.iter().filter(|kp| track_frames[t].contains(&kp.frame_id)).count();
        if count >= 2 && 2 * count >= in_track_frames {
            tracks[t].support_points.push(pid);
        }
    }
    for t in tracks.iter_mut() {
        t.support_points.sort_unstable();
        t.valid = t.support_points.len() >= params.min_support_points;
    }
    tracks
}

/// Adds memberships for map points inside each track's (grown) proposal
/// whose keypoint falls in the detection box of a same-track observation in
/// that frame, then regroups; repeats until no membership changes or the
/// iteration cap. `propose` maps a track to its current proposal.
pub fn iterate_association<F>(
    scene: &Scene,
    memberships: &mut Memberships,
    params: &AssociationParams,
    mut propose: F,
) -> (Vec<Track>, usize)
where
    F: FnMut(&Track) -> Option<ShapeParams>,
{
    let mut tracks = build_tracks(scene, memberships, params);
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut changed = false;
        for t in &tracks {
            if !t.valid {
                continue;
            }
            let Some(shape) = propose(t) else { continue };
            for p in scene.map_points() {
                if !shape.contains(&p.position, params.box_margin) {
                    continue;
                }
                for kp in &p.observations {
                    let hit = t.obs_ids.iter().filter_map(|id| scene.observation(*id)).find(|o| {
                        o.frame_id == kp.frame_id && o.det_box.contains(&kp.pixel)
                    });
                    if let Some(o) = hit {
                        changed |= memberships.insert(p.point_id, o.obs_id);
                    }
                }
            }
        }
        if !changed {
            break;
        }
        tracks = build_tracks(scene, memberships, params);
    }
    (tracks, iterations)
}

/// Projected convex outline of `shape` in `frame_id`, if fully in front of
/// the camera.
pub fn projected_outline(scene: &Scene, shape: &ShapeParams, frame_id: u64) -> Option<Vec<Point2<f64>>> {
    let frame = scene.frame(frame_id)?;
    let pts: Option<Vec<Point2<f64>>> = shape.outline_points().iter().map(|p| frame.project(p).ok()).collect();
    let hull = convex_hull(&pts?);
    (hull.len() >= 3).then_some(hull)
}

/// Mean distance between the 3D box vertices of two shapes under the
/// optimal vertex correspondence.
pub fn mean_vertex_distance(a: &ShapeParams, b: &ShapeParams) -> f64 {
    let va = a.box_vertices();
    let vb = b.box_vertices();
    let cost: Vec<Vec<f64>> = va.iter().map(|p| vb.iter().map(|q| (p - q).norm()).collect()).collect();
    let pairs = hungarian(&cost);
    pairs.iter().map(|&(i, j)| cost[i][j]).sum::<f64>() / pairs.len().max(1) as f64
}

/// Mean projected IoU over frames observed by either track in which both
/// shapes project entirely in front of the camera.
pub fn mean_projected_iou(scene: &Scene, a: &ShapeParams, b: &ShapeParams, frames: &BTreeSet<u64>) -> Option<f64> {
    let ious: Vec<f64> = frames
        .iter()
        .filter_map(|&f| {
            let pa = projected_outline(scene, a, f)?;
            let pb = projected_outline(scene, b, f)?;
            convex_polygon_iou(&pa, &pb).ok()
        })
        .collect();
    (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Pairs of tracks (indices into `tracks`) that satisfy the merge criteria:
/// same class, no shared frame, mean vertex distance below
/// `merge_vertex_dist` and mean co-visible projected IoU above `merge_iou`.
pub fn merge_candidates(
    scene: &Scene,
    tracks: &[Track],
    proposals: &[Option<ShapeParams>],
    params: &AssociationParams,
) -> Vec<(usize, usize)> {
    let frames: Vec<BTreeSet<u64>> = tracks.iter().map(|t| t.frames(scene)).collect();
    let mut out = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            if tracks[i].class != tracks[j].class || !frames[i].is_disjoint(&frames[j]) {
                continue;
            }
            let (Some(a), Some(b)) = (&proposals[i], &proposals[j]) else { continue };
            if mean_vertex_distance(a, b) >= params.merge_vertex_dist {
                continue;
            }
            let all: BTreeSet<u64> = frames[i].union(&frames[j]).copied().collect();
            if mean_projected_iou(scene, a, b, &all).is_some_and(|iou| iou > params.merge_iou) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Merges every connected group of merge candidates into one track (union of
/// observations and support points). Track ids are reassigned by smallest
/// obs id.
pub fn merge_tracks(
    scene: &Scene,
    tracks: &[Track],
    proposals: &[Option<ShapeParams>],
    params: &AssociationParams,
) -> Vec<Track> {
    let mut uf = UnionFind::new(tracks.len());
    for (i, j) in merge_candidates(scene, tracks, proposals, params) {
        uf.union(i, j);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..tracks.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut merged: Vec<Track> = groups
        .values()
        .map(|members| {
            let mut obs: Vec<u64> = members.iter().flat_map(|&i| tracks[i].obs_ids.iter().copied()).collect();
            let mut pts: Vec<u64> = members.iter().flat_map(|&i| tracks[i].support_points.iter().copied()).collect();
            obs.sort_unstable();
            obs.dedup();
            pts.sort_unstable();
            pts.dedup();
            Track {
                track_id: 0,
                class: tracks[members[0]].class,
                obs_ids: obs,
                valid: pts.len() >= params.min_support_points,
                support_points: pts,
            }
        })
        .collect();
    renumber(&mut merged);
    merged
}

/// Sorts tracks by smallest obs id and assigns sequential ids from 1.
pub fn renumber(tracks: &mut [Track]) {
    tracks.sort_by_key(|t| t.obs_ids.first().copied().unwrap_or(u64::MAX));
    for (k, t) in tracks.iter_mut().enumerate() {
        t.track_id = k as u64 + 1;
    }
}

/// Frames in which the projected proposal covers at least two disjoint
/// same-class detections, each by more than `split_iou` of its mask area.
pub fn stitched_frames(scene: &Scene, track: &Track, proposal: &ShapeParams, params: &AssociationParams) -> usize {
    track
        .frames(scene)
        .into_iter()
        .filter(|&f| {
            let Some(outline) = projected_outline(scene, proposal, f) else { return false };
            let covered: Vec<_> = scene
                .observations_in_frame(f)
                .filter(|o| o.class == track.class)
                .filter(|o| {
                    let hull = convex_hull(&o.mask);
                    let area = polygon_area(&hull);
                    area > 0.0 && polygon_area(&convex_intersection(&outline, &hull)) / area > params.split_iou
                })
                .collect();
            covered.iter().enumerate().any(|(i, a)| covered[i + 1..].iter().any(|b| !a.det_box.intersects(&b.det_box)))
        })
        .count()
}

/// Number of frames holding more than one observation of the track.
pub fn conflicting_frames(scene: &Scene, track: &Track) -> usize {
    let mut per_frame: BTreeMap<u64, usize> = BTreeMap::new();
    for id in &track.obs_ids {
        if let Some(o) = scene.observation(*id) {
            *per_frame.entry(o.frame_id).or_default() += 1;
        }
    }
    per_frame.values().filter(|&&n| n > 1).count()
}

/// Splits a track whose observations cannot belong to one object: the split
/// runs when two observations share a frame, or the projected proposal covers
/// several disjoint detections in at least `split_min_frames` frames.
/// Observations are clustered agglomeratively by shared support points under
/// a cannot-link constraint between observations of the same frame; support
/// points then go to the cluster holding most of their memberships.
pub fn split_track(
    scene: &Scene,
    track: &Track,
    proposal: Option<&ShapeParams>,
    memberships: &Memberships,
    params: &AssociationParams,
) -> Vec<Track> {
    let triggered = conflicting_frames(scene, track) > 0
        || proposal.is_some_and(|p| stitched_frames(scene, track, p, params) >= params.split_min_frames);
    if !triggered {
        return vec![track.clone()];
    }
    let ids = &track.obs_ids;
    let n = ids.len();
    let pos: BTreeMap<u64, usize> = ids.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let frame_of: Vec<u64> = ids.iter().map(|id| scene.observation(*id).map_or(u64::MAX, |o| o.frame_id)).collect();
    let mut weight = vec![vec![0usize; n]; n];
    for set in memberships.by_point.values() {
        let local: Vec<usize> = set.iter().filter_map(|o| pos.get(o).copied()).collect();
        for (a, &i) in local.iter().enumerate() {
            for &j in &local[a + 1..] {
                weight[i][j] += 1;
                weight[j][i] += 1;
            }
        }
    }
    for (a, b) in &memberships.links {
        if let (Some(&i), Some(&j)) = (pos.get(a), pos.get(b)) {
            weight[i][j] += 1_000_000;
            weight[j][i] += 1_000_000;
        }
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let clash = clusters[a].iter().any(|&i| clusters[b].iter().any(|&j| frame_of[i] == frame_of[j]));
                if clash {
                    continue;
                }
                let w: usize = clusters[a].iter().map(|&i| clusters[b].iter().map(|&j| weight[i][j]).sum::<usize>()).sum();
                if w > 0 && best.is_none_or(|(bw, _, _)| w > bw) {
                    best = Some((w, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    if clusters.len() == 1 {
        return vec![track.clone()];
    }
    let cluster_of: Vec<usize> = {
        let mut c = vec![0; n];
        for (k, cl) in clusters.iter().enumerate() {
            for &i in cl {
                c[i] = k;
            }
        }
        c
    };
    let mut pts: Vec<Vec<u64>> = vec![Vec::new(); clusters.len()];
    for &pid in &track.support_points {
        let mut votes = vec![0usize; clusters.len()];
        if let Some(set) = memberships.by_point.get(&pid) {
            for o in set {
                if let Some(&i) = pos.get(o) {
                    votes[cluster_of[i]] += 1;
                }
            }
        }
        let (k, v) = votes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).expect("non-empty");
        if *v > 0 {
            pts[k].push(pid);
        }
    }
    clusters
        .iter()
        .zip(pts)
        .map(|(cl, mut p)| {
            p.sort_unstable();
            Track {
                track_id: track.track_id,
                class: track.class,
                obs_ids: cl.iter().map(|&i| ids[i]).collect(),
                valid: p.len() >= params.min_support_points,
                support_points: p,
            }
        })
        .collect()
}

/// Drops memberships of `track`'s support points to observations outside
/// the track, so a split is not undone by regrouping.
pub fn restrict_memberships(memberships: &mut Memberships, track: &Track) {
    let own: BTreeSet<u64> = track.obs_ids.iter().copied().collect();
    for pid in &track.support_points {
        if let Some(set) = memberships.by_point.get_mut(pid) {
            set.retain(|o| own.contains(o));
        }
    }
}
