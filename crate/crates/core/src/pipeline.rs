//! End-to-end annotation: association, proposals, track refinement and the
//! final robust optimization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{
    assign_points_to_instances, build_tracks, iterate_association, merge_candidates, restrict_memberships,
    split_track, AssociationParams, Memberships, Track,
};
use crate::evaluate::EvalConfig;
use crate::geometry::{ShapeKind, ShapeParams};
use crate::optimize::{refine, residuals, FitObservation, FitReport, SolverOptions};
use crate::proposal::{
    fit_circle_params, init_cuboid_proposal, init_rect_proposal, vertex_observation, ProposalParams,
    VertexObservation,
};
use crate::scene::{Scene, StaticAnnotation};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub association: AssociationParams,
    pub proposal: ProposalParams,
    pub solver: SolverOptions,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.association.validate().map_err(|e| format!("[association] {e}"))?;
        self.proposal.validate().map_err(|e| format!("[proposal] {e}"))?;
        self.solver.validate().map_err(|e| format!("[solver] {e}"))?;
        self.eval.validate().map_err(|e| format!("[eval] {e}"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no valid tracks ({n_tracks} tracks from {n_observations} observations)")]
    NoValidTracks { n_tracks: usize, n_observations: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub n_observations: usize,
    pub n_occluded: usize,
    pub n_degenerate_masks: usize,
    pub n_tracks: usize,
    pub n_valid_tracks: usize,
    pub n_failed_tracks: usize,
    pub association_rounds: usize,
    pub n_splits: usize,
    pub n_merges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotateOutput {
    pub annotations: Vec<StaticAnnotation>,
    pub tracks: Vec<Track>,
    pub memberships: Memberships,
    pub stats: PipelineStats,
}

struct Fitted {
    params: ShapeParams,
    report: Option<FitReport>,
    used: Vec<u64>,
}

struct Context<'a> {
    scene: &'a Scene,
    cfg: &'a PipelineConfig,
    vertices: BTreeMap<u64, VertexObservation>,
    cache: Mutex<HashMap<(Vec<u64>, Vec<u64>), Option<(ShapeParams, Option<FitReport>, Vec<u64>)>>>,
}

impl<'a> Context<'a> {
    fn fit_inputs(&self, track: &Track) -> (Vec<FitObservation<'_>>, Vec<Vector3<f64>>) {
        let obs: Vec<FitObservation> = track
            .obs_ids
            .iter()
            .filter_map(|id| {
                let v = self.vertices.get(id)?;
                Some(FitObservation::new(self.scene.frame(v.frame_id)?, v))
            })
            .collect();
        let support = track.support_points.iter().filter_map(|p| self.scene.map_point(*p)).map(|p| p.position).collect();
        (obs, support)
    }

    fn initial(&self, track: &Track, obs: &[FitObservation], support: &[Vector3<f64>]) -> Option<ShapeParams> {
        let pp = &self.cfg.proposal;
        match track.class.shape_kind() {
            ShapeKind::Rect => init_rect_proposal(obs, pp).ok().map(ShapeParams::Rect),
            ShapeKind::Cuboid => init_cuboid_proposal(obs, support, pp).ok().map(ShapeParams::Cuboid),
            ShapeKind::Circle => fit_circle_params(obs, pp).ok().map(ShapeParams::Circle),
        }
    }

    /// Initial proposal polished by the robust solver; memoized per
    /// (observations, support) set.
    fn fit(&self, track: &Track) -> Option<Fitted> {
        let key = (track.obs_ids.clone(), track.support_points.clone());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit.clone().map(|(params, report, used)| Fitted { params, report, used });
        }
        let result = self.fit_uncached(track);
        let stored = result.as_ref().map(|f| (f.params, f.report.clone(), f.used.clone()));
        self.cache.lock().expect("cache lock").insert(key, stored);
        result
    }

    fn fit_uncached(&self, track: &Track) -> Option<Fitted> {
        let (obs, support) = self.fit_inputs(track);
        let init = self.initial(track, &obs, &support)?;
        let used: Vec<u64> = residuals(&init, &obs).used.iter().map(|&i| obs[i].vertices.obs_id).collect();
        match refine(&init, &obs, &support, &self.cfg.solver) {
            Ok((params, report)) => Some(Fitted { params, report: Some(report), used }),
            Err(_) => None,
        }
    }

    fn proposals(&self, tracks: &[Track]) -> Vec<Option<ShapeParams>> {
        tracks.par_iter().map(|t| if t.valid { self.fit(t).map(|f| f.params) } else { None }).collect()
    }
}

/// Runs the full annotation pipeline on `scene`.
pub fn annotate(scene: &Scene, cfg: &PipelineConfig) -> Result<AnnotateOutput, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let mut stats = PipelineStats { n_observations: scene.observations().len(), ..Default::default() };
    let mut vertices = BTreeMap::new();
    for o in scene.observations() {
        match vertex_observation(o, &cfg.proposal) {
            Ok(v) => {
                stats.n_occluded += v.occluded as usize;
                vertices.insert(o.obs_id, v);
            }
            Err(_) => stats.n_degenerate_masks += 1,
        }
    }
    let ctx = Context { scene, cfg, vertices, cache: Mutex::new(HashMap::new()) };
    let ap = &cfg.association;

    let mut memberships = assign_points_to_instances(scene);
    let mut tracks;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let current = build_tracks(scene, &memberships, ap);
        split_pass(&ctx, &current, &mut memberships, &mut stats);
        let (grown, _) = iterate_association(scene, &mut memberships, ap, |t| ctx.fit(t).map(|f| f.params));
        tracks = grown;
        let proposals = ctx.proposals(&tracks);
        let added = add_merge_links(scene, &tracks, &proposals, ap, &mut memberships);
        stats.n_merges += added;
        if added == 0 || rounds >= ap.max_iterations {
            break;
        }
    }
    stats.association_rounds = rounds;

    let mut fitted: Vec<Option<Fitted>> = tracks.par_iter().map(|t| if t.valid { ctx.fit(t) } else { None }).collect();
    // a last merge check on the final parameters
    let final_params: Vec<Option<ShapeParams>> = fitted.iter().map(|f| f.as_ref().map(|f| f.params)).collect();
    if add_merge_links(scene, &tracks, &final_params, ap, &mut memberships) > 0 {
        stats.n_merges += 1;
        tracks = build_tracks(scene, &memberships, ap);
        fitted = tracks.par_iter().map(|t| if t.valid { ctx.fit(t) } else { None }).collect();
    }

    stats.n_tracks = tracks.len();
    stats.n_valid_tracks = tracks.iter().filter(|t| t.valid).count();
    if stats.n_valid_tracks == 0 {
        return Err(PipelineError::NoValidTracks { n_tracks: tracks.len(), n_observations: scene.observations().len() });
    }
    let mut annotations = Vec::new();
    for (t, f) in tracks.iter().zip(fitted) {
        if !t.valid {
            continue;
        }
        let Some(f) = f else {
            stats.n_failed_tracks += 1;
            continue;
        };
        let mut a = StaticAnnotation::new(annotations.len() as u64 + 1, t.track_id, t.class, f.params);
        a.mean_reproj_error = f.report.as_ref().map_or(0.0, |r| r.mean_reproj_error);
        a.n_observations_used = f.used.len();
        a.used_obs_ids = f.used;
        a.fit_report = f.report;
        annotations.push(a);
    }
    Ok(AnnotateOutput { annotations, tracks, memberships, stats })
}

/// Same as [`annotate`] on a dedicated pool of `threads` workers.
pub fn annotate_with_threads(scene: &Scene, cfg: &PipelineConfig, threads: usize) -> Result<AnnotateOutput, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| annotate(scene, cfg))
}

fn split_pass(ctx: &Context, tracks: &[Track], memberships: &mut Memberships, stats: &mut PipelineStats) -> bool {
    let proposals = ctx.proposals(tracks);
    let mut any = false;
    for (t, p) in tracks.iter().zip(&proposals) {
        let parts = split_track(ctx.scene, t, p.as_ref(), memberships, &ctx.cfg.association);
        if parts.len() > 1 {
            any = true;
            stats.n_splits += parts.len() - 1;
            for part in &parts {
                restrict_memberships(memberships, part);
            }
        }
    }
    any
}

fn add_merge_links(
    scene: &Scene,
    tracks: &[Track],
    proposals: &[Option<ShapeParams>],
    params: &AssociationParams,
    memberships: &mut Memberships,
) -> usize {
    let before: BTreeSet<(u64, u64)> = memberships.links.clone();
    for (i, j) in merge_candidates(scene, tracks, proposals, params) {
        if let (Some(&a), Some(&b)) = (tracks[i].obs_ids.first(), tracks[j].obs_ids.first()) {
            memberships.links.insert((a.min(b), a.max(b)));
        }
    }
    memberships.links.len() - before.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{eval_3d, match_3d};
    use crate::synth::{generate_scene, SynthConfig};
    use crate::testutil::noiseless;

    #[test]
    fn noiseless_scene_is_recovered_exactly() {
        let (scene, gt) = noiseless();
        let out = annotate(scene, &PipelineConfig::default()).unwrap();
        let refs = gt.to_annotations();
        let r = eval_3d(&out.annotations, &refs, &EvalConfig::default());
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
        for (p, q) in match_3d(&out.annotations, &refs, &EvalConfig::default()) {
            let a = out.annotations.iter().find(|a| a.annotation_id == p).unwrap();
            let b = refs.iter().find(|a| a.annotation_id == q).unwrap();
            assert!(a.params.param_error(&b.params) < 1e-6);
        }
        assert_eq!(out.stats.n_failed_tracks, 0);
        assert_eq!(out.stats.n_splits + out.stats.n_merges, 0);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let cfg = SynthConfig { n_signs: 3, n_lights: 1, n_circles: 1, n_cones: 1, n_frames: 40, pixel_noise_sigma: 0.5, occluder_fraction: 0.2, ..Default::default() };
        let scene = crate::synth::corrupt(&generate_scene(&cfg).unwrap().0, &cfg).unwrap();
        let one = annotate_with_threads(&scene, &PipelineConfig::default(), 1).unwrap();
        let four = annotate_with_threads(&scene, &PipelineConfig::default(), 4).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn errors() {
        let (scene, _) = noiseless();
        let mut cfg = PipelineConfig::default();
        cfg.solver.huber_delta = 0.0;
        assert!(matches!(annotate(scene, &cfg), Err(PipelineError::Config(_))));
        let cfg = PipelineConfig {
            association: AssociationParams { min_support_points: 1_000_000, ..Default::default() },
            ..Default::default()
        };
        assert!(matches!(annotate(scene, &cfg), Err(PipelineError::NoValidTracks { .. })));
    }
}
