use std::fmt::Write;
use std::path::Path;

use nalgebra::Point2;

use crate::evaluate::project_annotation;
use crate::scene::{CameraFrame, StaticAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayFormat {
    Svg,
    Ppm,
}

impl OverlayFormat {
    pub fn from_path(path: &Path) -> OverlayFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("ppm") => OverlayFormat::Ppm,
            _ => OverlayFormat::Svg,
        }
    }
}

const PRED_COLOR: [u8; 3] = [220, 30, 30];
const REF_COLOR: [u8; 3] = [20, 160, 60];

fn outlines(frame: &CameraFrame, annotations: &[StaticAnnotation]) -> Vec<(u64, Vec<Point2<f64>>)> {
    annotations.iter().filter_map(|a| project_annotation(a, frame).map(|e| (a.annotation_id, e.polygon))).collect()
}

/// Projected annotation outlines (and optionally a reference set in a
/// second color) for `frame` on a blank canvas of the image size.
/// Annotations not fully in front of the camera are omitted.
pub fn render_overlay(
    frame: &CameraFrame,
    annotations: &[StaticAnnotation],
    reference: Option<&[StaticAnnotation]>,
    format: OverlayFormat,
) -> Vec<u8> {
    let mut layers = Vec::new();
    if let Some(r) = reference {
        layers.push((REF_COLOR, outlines(frame, r)));
    }
    layers.push((PRED_COLOR, outlines(frame, annotations)));
    match format {
        OverlayFormat::Svg => svg(frame, &layers),
        OverlayFormat::Ppm => ppm(frame, &layers),
    }
}

type Layer = ([u8; 3], Vec<(u64, Vec<Point2<f64>>)>);

fn svg(frame: &CameraFrame, layers: &[Layer]) -> Vec<u8> {
    let (w, h) = (frame.intrinsics.width, frame.intrinsics.height);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (color, polys) in layers {
        for (id, poly) in polys {
            let pts: Vec<String> = poly.iter().map(|p| format!("{:.6},{:.6}", p.x, p.y)).collect();
            let _ = writeln!(
                s,
                r#"<polygon data-id="{id}" points="{}" fill="none" stroke="rgb({},{},{})" stroke-width="2"/>"#,
                pts.join(" "),
                color[0],
                color[1],
                color[2]
            );
        }
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

fn ppm(frame: &CameraFrame, layers: &[Layer]) -> Vec<u8> {
    let (w, h) = (frame.intrinsics.width as usize, frame.intrinsics.height as usize);
    let mut px = vec![255u8; w * h * 3];
    let mut plot = |x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            let i = (y as usize * w + x as usize) * 3;
            px[i..i + 3].copy_from_slice(&c);
        }
    };
    for (color, polys) in layers {
        for (_, poly) in polys {
            for k in 0..poly.len() {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                let steps = (b - a).abs().max().ceil().clamp(1.0, 1e5) as usize;
                for s in 0..=steps {
                    let p = a + (b - a) * (s as f64 / steps as f64);
                    plot(p.x.round() as i64, p.y.round() as i64, *color);
                }
            }
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    out
}
