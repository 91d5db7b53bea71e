use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::Vector3;
use twofloat::TwoFloat;

use crate::geometry::scalar::Real;
use crate::optimize::FitObservation;
use crate::proposal::{vertex_observation, ProposalParams, VertexObservation};
use crate::scene::{GroundTruth, GtObject, ObjectClass, Scene};
use crate::synth::{generate_scene, SynthConfig};

pub(crate) fn noiseless() -> &'static (Scene, GroundTruth) {
    static SCENE: OnceLock<(Scene, GroundTruth)> = OnceLock::new();
    SCENE.get_or_init(|| generate_scene(&SynthConfig::default()).unwrap())
}

pub(crate) fn first_of(gt: &GroundTruth, class: ObjectClass) -> &GtObject {
    gt.objects.iter().find(|o| o.class == class).unwrap()
}

/// Vertex observations of one GT object, in obs id order.
pub(crate) fn object_vertices(scene: &Scene, gt: &GroundTruth, object_id: u64) -> Vec<VertexObservation> {
    let params = ProposalParams::default();
    gt.observation_labels
        .iter()
        .filter(|l| l.object_id == object_id)
        .map(|l| vertex_observation(scene.observation(l.obs_id).unwrap(), &params).unwrap())
        .collect()
}

pub(crate) fn fit_views<'a>(scene: &'a Scene, verts: &'a [VertexObservation]) -> Vec<FitObservation<'a>> {
    verts.iter().map(|v| FitObservation::new(scene.frame(v.frame_id).unwrap(), v)).collect()
}

pub(crate) fn object_support(scene: &Scene, gt: &GroundTruth, object_id: u64) -> Vec<Vector3<f64>> {
    gt.point_labels
        .iter()
        .filter(|l| l.object_id == object_id)
        .map(|l| scene.map_point(l.point_id).unwrap().position)
        .collect()
}

/// Double-double scalar for finite differences free of f64 cancellation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dd(pub TwoFloat);

macro_rules! dd_ops {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr for Dd {
            type Output = Dd;
            fn $f(self, o: Dd) -> Dd {
                Dd($tr::$f(self.0, o.0))
            }
        }
        impl $tr<f64> for Dd {
            type Output = Dd;
            fn $f(self, o: f64) -> Dd {
                Dd($tr::$f(self.0, o))
            }
        }
    )*};
}
dd_ops!(Add add, Sub sub, Mul mul);

// one Newton step on top of the library quotient, which is only f64-accurate
impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q = self.0 / o.0;
        Dd(q + (self.0 - q * o.0) / o.0)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, o: f64) -> Dd {
        self / Dd(TwoFloat::from(o))
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Real for Dd {
    fn cst(v: f64) -> Self {
        Dd(TwoFloat::from(v))
    }
    fn value(self) -> f64 {
        self.0.hi() + self.0.lo()
    }
    fn sqrt(self) -> Self {
        Dd(self.0.sqrt())
    }
    fn sin(self) -> Self {
        Dd(self.0.sin())
    }
    fn cos(self) -> Self {
        Dd(self.0.cos())
    }
}
