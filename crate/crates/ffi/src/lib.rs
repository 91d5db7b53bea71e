//! C ABI for scene loading, synthesis, annotation and 3D evaluation.
//!
//! Every function returns a [`RoadliftStatus`]. On failure the message is
//! kept per thread and can be read with [`roadlift_last_error_message`].
//! Objects created by the library are released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use roadlift::cli::FileConfig;
use roadlift::evaluate::eval_3d;
use roadlift::geometry::ShapeKind;
use roadlift::pipeline::{annotate_with_threads, PipelineError};
use roadlift::scene::{load_annotations, load_scene, save_annotations, save_scene, ObjectClass, Scene, SceneError, StaticAnnotation};
use roadlift::synth::{corrupt, generate_scene};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoadliftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Config = 5,
    NoValidTracks = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoadliftClass {
    Guideboard = 0,
    CircularSign = 1,
    TrafficLight = 2,
    TrafficCone = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoadliftShapeKind {
    Rect = 0,
    Cuboid = 1,
    Circle = 2,
}

/// Flat view of one annotation. `params` holds `x, y, z, yaw` followed by
/// the sizes of the shape; only the first `n_params` entries are set.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadliftAnnotation {
    pub annotation_id: u64,
    pub track_id: u64,
    pub class: RoadliftClass,
    pub kind: RoadliftShapeKind,
    pub params: [f64; 7],
    pub n_params: u32,
    pub mean_reproj_error: f64,
    pub n_observations_used: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoadliftEvalResult {
    pub precision: f64,
    pub recall: f64,
    pub mean_error: f64,
    pub n_matched: u64,
    pub n_pred: u64,
    pub n_ref: u64,
}

/// Opaque scene handle.
pub struct RoadliftScene {
    scene: Scene,
}

/// Opaque list of annotations.
pub struct RoadliftAnnotations {
    items: Vec<StaticAnnotation>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Error(RoadliftStatus, String);

impl From<SceneError> for Error {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Parse(m) => Error(RoadliftStatus::Parse, m),
            SceneError::Validation(m) => Error(RoadliftStatus::Validation, m),
        }
    }
}

impl From<PipelineError> for Error {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Config(_) => RoadliftStatus::Config,
            PipelineError::NoValidTracks { .. } => RoadliftStatus::NoValidTracks,
        };
        Error(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> RoadliftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            RoadliftStatus::Ok
        }
        Ok(Err(Error(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            RoadliftStatus::Internal
        }
    }
}

fn null(what: &str) -> Error {
    Error(RoadliftStatus::NullPointer, format!("{what} is null"))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Error> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn config(text: *const c_char) -> Result<FileConfig, Error> {
    if text.is_null() {
        return Ok(FileConfig::default());
    }
    let s = CStr::from_ptr(text).to_str().map_err(|e| Error(RoadliftStatus::InvalidUtf8, e.to_string()))?;
    FileConfig::from_toml(s).map_err(|e| Error(RoadliftStatus::Config, e))
}

unsafe fn write_string(bytes: Vec<u8>, out: *mut *mut c_char) -> Result<(), Error> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(bytes).map_err(|e| Error(RoadliftStatus::Internal, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn class_code(c: ObjectClass) -> RoadliftClass {
    match c {
        ObjectClass::Guideboard => RoadliftClass::Guideboard,
        ObjectClass::CircularSign => RoadliftClass::CircularSign,
        ObjectClass::TrafficLight => RoadliftClass::TrafficLight,
        ObjectClass::TrafficCone => RoadliftClass::TrafficCone,
    }
}

fn kind_code(k: ShapeKind) -> RoadliftShapeKind {
    match k {
        ShapeKind::Rect => RoadliftShapeKind::Rect,
        ShapeKind::Cuboid => RoadliftShapeKind::Cuboid,
        ShapeKind::Circle => RoadliftShapeKind::Circle,
    }
}

fn flatten(a: &StaticAnnotation) -> RoadliftAnnotation {
    let v = a.params.to_vector();
    let mut params = [0.0; 7];
    params[..v.len()].copy_from_slice(&v);
    RoadliftAnnotation {
        annotation_id: a.annotation_id,
        track_id: a.track_id,
        class: class_code(a.class),
        kind: kind_code(a.params.kind()),
        params,
        n_params: v.len() as u32,
        mean_reproj_error: a.mean_reproj_error,
        n_observations_used: a.n_observations_used as u64,
    }
}

/// Parses a scene document.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_scene_from_json(data: *const u8, len: usize, out: *mut *mut RoadliftScene) -> RoadliftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scene = load_scene(bytes(data, len)?)?;
        *out = Box::into_raw(Box::new(RoadliftScene { scene }));
        Ok(())
    })
}

/// Generates a synthetic scene with ground truth. `config_toml` may be null;
/// `seed` replaces the configured seed.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_synth_generate(config_toml: *const c_char, seed: u64, out: *mut *mut RoadliftScene) -> RoadliftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut cfg = config(config_toml)?;
        cfg.synth.seed = seed;
        let synth_err = |e: roadlift::synth::SynthError| Error(RoadliftStatus::Config, e.to_string());
        let (scene, _) = generate_scene(&cfg.synth).map_err(synth_err)?;
        let scene = corrupt(&scene, &cfg.synth).map_err(synth_err)?;
        *out = Box::into_raw(Box::new(RoadliftScene { scene }));
        Ok(())
    })
}

/// Serializes a scene as canonical JSON. Free the string with
/// [`roadlift_string_free`].
///
/// # Safety
/// `scene` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_scene_to_json(scene: *const RoadliftScene, out: *mut *mut c_char) -> RoadliftStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        write_string(save_scene(&scene.scene), out)
    })
}

/// # Safety
/// `scene` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn roadlift_scene_free(scene: *mut RoadliftScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Runs the full annotation pipeline. `threads == 0` uses all cores.
///
/// # Safety
/// `scene` must come from this library, `config_toml` must be null or a
/// NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_annotate(
    scene: *const RoadliftScene,
    config_toml: *const c_char,
    threads: u32,
    out: *mut *mut RoadliftAnnotations,
) -> RoadliftStatus {
    guard(|| {
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = config(config_toml)?;
        let result = annotate_with_threads(&scene.scene, &cfg.pipeline(), threads as usize)?;
        *out = Box::into_raw(Box::new(RoadliftAnnotations { items: result.annotations }));
        Ok(())
    })
}

/// Number of annotations in the list, 0 for null.
///
/// # Safety
/// `annotations` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn roadlift_annotations_count(annotations: *const RoadliftAnnotations) -> usize {
    annotations.as_ref().map_or(0, |a| a.items.len())
}

/// # Safety
/// `annotations` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_annotations_get(
    annotations: *const RoadliftAnnotations,
    index: usize,
    out: *mut RoadliftAnnotation,
) -> RoadliftStatus {
    guard(|| {
        let list = annotations.as_ref().ok_or_else(|| null("annotations"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let a = list
            .items
            .get(index)
            .ok_or_else(|| Error(RoadliftStatus::Validation, format!("index {index} out of range ({})", list.items.len())))?;
        *out = flatten(a);
        Ok(())
    })
}

/// # Safety
/// `annotations` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_annotations_to_json(annotations: *const RoadliftAnnotations, out: *mut *mut c_char) -> RoadliftStatus {
    guard(|| {
        let list = annotations.as_ref().ok_or_else(|| null("annotations"))?;
        write_string(save_annotations(&list.items), out)
    })
}

/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_annotations_from_json(data: *const u8, len: usize, out: *mut *mut RoadliftAnnotations) -> RoadliftStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let items = load_annotations(bytes(data, len)?)?;
        *out = Box::into_raw(Box::new(RoadliftAnnotations { items }));
        Ok(())
    })
}

/// # Safety
/// `annotations` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn roadlift_annotations_free(annotations: *mut RoadliftAnnotations) {
    if !annotations.is_null() {
        drop(Box::from_raw(annotations));
    }
}

/// Scores `pred` against the ground truth attached to `scene` with the
/// default evaluation settings.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn roadlift_eval_3d(
    pred: *const RoadliftAnnotations,
    scene: *const RoadliftScene,
    out: *mut RoadliftEvalResult,
) -> RoadliftStatus {
    guard(|| {
        let pred = pred.as_ref().ok_or_else(|| null("pred"))?;
        let scene = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let gt = scene.scene.ground_truth().ok_or_else(|| Error(RoadliftStatus::Validation, "scene has no ground truth".into()))?;
        let r = eval_3d(&pred.items, &gt.to_annotations(), &Default::default());
        *out = RoadliftEvalResult {
            precision: r.precision,
            recall: r.recall,
            mean_error: r.mean_error,
            n_matched: r.n_matched as u64,
            n_pred: r.n_pred as u64,
            n_ref: r.n_ref as u64,
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn roadlift_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn roadlift_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use roadlift::geometry::ShapeParams;

    #[test]
    fn flatten_pads_params() {
        let p = ShapeParams::from_vector(ShapeKind::Circle, &[1.0, 2.0, 3.0, 0.5, 0.4]);
        let a = StaticAnnotation::new(3, 4, ObjectClass::CircularSign, p);
        let f = flatten(&a);
        assert_eq!(f.n_params, 5);
        assert_eq!(f.params, [1.0, 2.0, 3.0, 0.5, 0.4, 0.0, 0.0]);
        assert_eq!(f.kind, RoadliftShapeKind::Circle);
    }

    #[test]
    fn panics_become_internal() {
        assert_eq!(guard(|| panic!("boom")), RoadliftStatus::Internal);
        let msg = unsafe { CStr::from_ptr(roadlift_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }
}
