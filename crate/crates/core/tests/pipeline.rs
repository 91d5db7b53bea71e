use std::collections::BTreeSet;

use proptest::prelude::*;

use roadlift::evaluate::{eval_3d, EvalConfig};
use roadlift::pipeline::{annotate, PipelineConfig};
use roadlift::synth::{corrupt, generate_scene, SynthConfig};

fn small(seed: u64, sigma: f64, occluders: f64) -> SynthConfig {
    SynthConfig {
        n_signs: 3,
        n_lights: 1,
        n_circles: 1,
        n_cones: 1,
        n_frames: 30,
        trajectory_length: 60.0,
        pixel_noise_sigma: sigma,
        occluder_fraction: occluders,
        seed,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn tracks_partition_observations(seed in 0u64..1000, sigma in 0.0..1.0f64, occluders in 0.0..0.4f64) {
        let cfg = small(seed, sigma, occluders);
        let (scene, gt) = generate_scene(&cfg).unwrap();
        let scene = corrupt(&scene, &cfg).unwrap();
        let out = annotate(&scene, &PipelineConfig::default()).unwrap();
        let mut seen_obs = BTreeSet::new();
        let mut seen_pts = BTreeSet::new();
        for t in &out.tracks {
            for o in &t.obs_ids {
                prop_assert!(seen_obs.insert(*o), "obs {} in two tracks", o);
                prop_assert_eq!(scene.observation(*o).unwrap().class, t.class);
            }
            for p in &t.support_points {
                prop_assert!(seen_pts.insert(*p), "point {} supports two tracks", p);
            }
            if t.valid {
                prop_assert!(!t.support_points.is_empty());
            }
        }
        let track_ids: BTreeSet<u64> = out.tracks.iter().map(|t| t.track_id).collect();
        for a in &out.annotations {
            prop_assert!(track_ids.contains(&a.track_id));
            prop_assert!(a.mean_reproj_error >= 0.0);
            prop_assert!(a.params.validate().is_ok());
            if let Some(r) = &a.fit_report {
                prop_assert!(r.final_cost <= r.initial_cost);
            }
        }
        let r = eval_3d(&out.annotations, &gt.to_annotations(), &EvalConfig::default());
        prop_assert!(r.recall >= 0.8, "recall {}", r.recall);
    }

    #[test]
    fn annotate_is_pure(seed in 0u64..1000) {
        let cfg = small(seed, 0.5, 0.2);
        let scene = corrupt(&generate_scene(&cfg).unwrap().0, &cfg).unwrap();
        let a = annotate(&scene, &PipelineConfig::default()).unwrap();
        let b = annotate(&scene, &PipelineConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
