//! Mouth gating: decide from facial landmarks whether a frame is usable.
//!
//! The landmark model itself lives outside this crate; callers hand in
//! normalized points tagged with their role. A frame passes when the mouth
//! crop is at least `min_crop_pixels` on both axes and the mouth-corner
//! segment is within `max_tilt_degrees` of horizontal. Both limits are
//! inclusive: a 224x224 crop at exactly 5 degrees passes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, BoundingBox, GeometryError, PixelSize, Point2D};

/// Absorbs trigonometric round-off when a tilt lands on the limit.
const TILT_EPSILON_DEGREES: f64 = 1e-9;

/// Minimum number of outer-lip points a landmark set must carry.
pub const MIN_OUTER_LIP_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("landmark set is missing role {0}")]
    MissingLandmarkRole(LandmarkRole),
    #[error("landmark set has {found} outer-lip points, need at least {MIN_OUTER_LIP_POINTS}")]
    TooFewLipPoints { found: usize },
    #[error("invalid landmark: {0}")]
    InvalidPoint(#[from] GeometryError),
    #[error("crop requested for a frame that did not pass the gate ({0:?})")]
    NotPassed(GateVerdict),
    #[error("invalid gate configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkRole {
    LeftMouthCorner,
    RightMouthCorner,
    OuterLip,
    InnerLip,
    /// Any non-mouth point (nose, eyes, jaw). Ignored by the gate.
    #[serde(other)]
    Other,
}

impl std::fmt::Display for LandmarkRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LandmarkRole::LeftMouthCorner => "left_mouth_corner",
            LandmarkRole::RightMouthCorner => "right_mouth_corner",
            LandmarkRole::OuterLip => "outer_lip",
            LandmarkRole::InnerLip => "inner_lip",
            LandmarkRole::Other => "other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub role: LandmarkRole,
    pub x: f64,
    pub y: f64,
}

impl Landmark {
    pub fn new(role: LandmarkRole, x: f64, y: f64) -> Self {
        Self { role, x, y }
    }

    pub fn point(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }
}

/// Validated landmark points for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Landmark>", into = "Vec<Landmark>")]
pub struct LandmarkSet {
    points: Vec<Landmark>,
    left_corner: Point2D,
    right_corner: Point2D,
}

impl TryFrom<Vec<Landmark>> for LandmarkSet {
    type Error = GateError;

    fn try_from(points: Vec<Landmark>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<LandmarkSet> for Vec<Landmark> {
    fn from(set: LandmarkSet) -> Self {
        set.points
    }
}

impl LandmarkSet {
    pub fn new(points: Vec<Landmark>) -> Result<Self, GateError> {
        for p in &points {
            p.point().validate()?;
        }
        let find = |role| {
            points.iter().find(|p| p.role == role).map(Landmark::point).ok_or(GateError::MissingLandmarkRole(role))
        };
        let left_corner = find(LandmarkRole::LeftMouthCorner)?;
        let right_corner = find(LandmarkRole::RightMouthCorner)?;
        let outer = points.iter().filter(|p| p.role == LandmarkRole::OuterLip).count();
        if outer < MIN_OUTER_LIP_POINTS {
            return Err(GateError::TooFewLipPoints { found: outer });
        }
        Ok(Self { points, left_corner, right_corner })
    }

    pub fn points(&self) -> &[Landmark] {
        &self.points
    }

    pub fn left_corner(&self) -> Point2D {
        self.left_corner
    }

    pub fn right_corner(&self) -> Point2D {
        self.right_corner
    }

    fn lip_points(&self) -> impl Iterator<Item = Point2D> + '_ {
        self.points.iter().filter(|p| p.role != LandmarkRole::Other).map(Landmark::point)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub min_crop_pixels: PixelSize,
    pub max_tilt_degrees: f64,
    pub margin_fraction: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { min_crop_pixels: PixelSize { width: 224, height: 224 }, max_tilt_degrees: 5.0, margin_fraction: 0.10 }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if self.min_crop_pixels.width == 0 || self.min_crop_pixels.height == 0 {
            return Err(GateError::InvalidConfig("min_crop_pixels must be at least 1x1".into()));
        }
        if !(self.max_tilt_degrees > 0.0 && self.max_tilt_degrees <= 45.0) {
            return Err(GateError::InvalidConfig("max_tilt_degrees must lie in (0, 45]".into()));
        }
        if !(0.0..=0.5).contains(&self.margin_fraction) {
            return Err(GateError::InvalidConfig("margin_fraction must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVerdict {
    Pass,
    RejectTooSmall,
    RejectTilted,
    RejectNoMouth,
}

impl GateVerdict {
    pub fn message(&self) -> &'static str {
        match self {
            GateVerdict::Pass => "Mouth is clearly in view. Hold still and take the photo.",
            GateVerdict::RejectTooSmall => {
                "The mouth is too small in the picture. Move the camera closer to the mouth."
            }
            GateVerdict::RejectTilted => "The mouth is tilted. Straighten the camera so the lips are level.",
            GateVerdict::RejectNoMouth => "No mouth was found. Point the camera at the child's open mouth.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: GateVerdict,
    pub mouth_box: Option<BoundingBox>,
    pub tilt_degrees: f64,
    pub crop_pixels: Option<PixelSize>,
    pub message: String,
}

/// Integer pixel rectangle inside the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Axis-aligned hull of the lip points, grown by `margin_fraction` of the
/// hull extent on every side and clamped to the frame.
pub fn mouth_box(landmarks: &LandmarkSet, config: &GateConfig) -> Result<BoundingBox, GateError> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in landmarks.lip_points() {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let mx = (x1 - x0) * config.margin_fraction;
    let my = (y1 - y0) * config.margin_fraction;
    Ok(BoundingBox::clamped(x0 - mx, y0 - my, x1 + mx, y1 + my)?)
}

/// Applies the gate rules to already-measured quantities.
///
/// Priority is fixed: tilt is checked before size.
pub fn classify(tilt_degrees: f64, crop: PixelSize, config: &GateConfig) -> GateVerdict {
    if !tilt_degrees.is_finite() || tilt_degrees.abs() > config.max_tilt_degrees + TILT_EPSILON_DEGREES {
        GateVerdict::RejectTilted
    } else if !crop.covers(config.min_crop_pixels) {
        GateVerdict::RejectTooSmall
    } else {
        GateVerdict::Pass
    }
}

fn no_mouth() -> GateDecision {
    GateDecision {
        verdict: GateVerdict::RejectNoMouth,
        mouth_box: None,
        tilt_degrees: 0.0,
        crop_pixels: None,
        message: GateVerdict::RejectNoMouth.message().to_string(),
    }
}

/// Gates one frame. Every failure mode comes back as a verdict.
pub fn evaluate_gate(landmarks: Option<&LandmarkSet>, image: PixelSize, config: &GateConfig) -> GateDecision {
    let Some(landmarks) = landmarks else {
        return no_mouth();
    };
    let Ok(bbox) = mouth_box(landmarks, config) else {
        return no_mouth();
    };
    // Landmarks are normalized per axis; the angle must be taken in pixels or
    // a non-square frame would skew it.
    let to_pixels = |p: Point2D| Point2D::new(p.x * f64::from(image.width), p.y * f64::from(image.height));
    let Ok(tilt) =
        geometry::segment_angle_degrees(to_pixels(landmarks.left_corner()), to_pixels(landmarks.right_corner()))
    else {
        return no_mouth();
    };
    let crop = geometry::box_pixel_size(&bbox, image);
    let verdict = classify(tilt, crop, config);
    GateDecision {
        verdict,
        mouth_box: Some(bbox),
        tilt_degrees: tilt,
        crop_pixels: Some(crop),
        message: verdict.message().to_string(),
    }
}

/// Pixel rectangle of a passed mouth box; its extent equals `decision.crop_pixels`.
pub fn crop_region(decision: &GateDecision, image: PixelSize) -> Result<PixelRect, GateError> {
    let (GateVerdict::Pass, Some(bbox), Some(crop)) = (decision.verdict, decision.mouth_box, decision.crop_pixels)
    else {
        return Err(GateError::NotPassed(decision.verdict));
    };
    let width = crop.width.min(image.width);
    let height = crop.height.min(image.height);
    let x = ((bbox.x_min() * f64::from(image.width)).round() as u32).min(image.width - width);
    let y = ((bbox.y_min() * f64::from(image.height)).round() as u32).min(image.height - height);
    Ok(PixelRect { x, y, width, height })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Mouth centered at (cx, cy): corners at +-half_w rotated by `tilt` degrees,
    /// four outer-lip points at +-half_h vertically.
    pub(crate) fn mouth(cx: f64, cy: f64, half_w: f64, half_h: f64, tilt: f64) -> LandmarkSet {
        let (s, c) = tilt.to_radians().sin_cos();
        let mut pts = vec![
            Landmark::new(LandmarkRole::LeftMouthCorner, cx - half_w * c, cy - half_w * s),
            Landmark::new(LandmarkRole::RightMouthCorner, cx + half_w * c, cy + half_w * s),
        ];
        for (dx, dy) in [(-0.5, -1.0), (0.5, -1.0), (-0.5, 1.0), (0.5, 1.0)] {
            pts.push(Landmark::new(LandmarkRole::OuterLip, cx + dx * half_w, cy + dy * half_h));
        }
        LandmarkSet::new(pts).unwrap()
    }

    fn no_margin() -> GateConfig {
        GateConfig { margin_fraction: 0.0, ..GateConfig::default() }
    }

    #[test]
    fn mouth_box_is_lip_hull() {
        let set = mouth(0.5, 0.5, 0.1, 0.05, 0.0);
        let b = mouth_box(&set, &no_margin()).unwrap();
        assert!((b.x_min() - 0.4).abs() < 1e-12 && (b.x_max() - 0.6).abs() < 1e-12);
        assert!((b.y_min() - 0.45).abs() < 1e-12 && (b.y_max() - 0.55).abs() < 1e-12);

        let m = mouth_box(&set, &GateConfig::default()).unwrap();
        assert!((m.x_min() - 0.38).abs() < 1e-12 && (m.x_max() - 0.62).abs() < 1e-12);
        assert!((m.y_min() - 0.44).abs() < 1e-12 && (m.y_max() - 0.56).abs() < 1e-12);
    }

    #[test]
    fn mouth_box_clamps_at_frame_edge() {
        let set = mouth(0.05, 0.5, 0.05, 0.05, 0.0);
        let m = mouth_box(&set, &GateConfig::default()).unwrap();
        assert_eq!(m.x_min(), 0.0);
    }

    #[test]
    fn missing_roles_rejected() {
        let pts = vec![Landmark::new(LandmarkRole::LeftMouthCorner, 0.4, 0.5)];
        assert_eq!(LandmarkSet::new(pts), Err(GateError::MissingLandmarkRole(LandmarkRole::RightMouthCorner)));
        let pts = vec![
            Landmark::new(LandmarkRole::LeftMouthCorner, 0.4, 0.5),
            Landmark::new(LandmarkRole::RightMouthCorner, 0.6, 0.5),
            Landmark::new(LandmarkRole::OuterLip, 0.5, 0.45),
        ];
        assert_eq!(LandmarkSet::new(pts), Err(GateError::TooFewLipPoints { found: 1 }));
    }

    #[test]
    fn verdict_examples() {
        let cfg = GateConfig::default();
        let px = |w, h| PixelSize { width: w, height: h };
        assert_eq!(classify(2.0, px(300, 300), &cfg), GateVerdict::Pass);
        assert_eq!(classify(0.0, px(200, 200), &cfg), GateVerdict::RejectTooSmall);
        assert_eq!(classify(6.0, px(400, 400), &cfg), GateVerdict::RejectTilted);
        assert_eq!(classify(-6.0, px(100, 100), &cfg), GateVerdict::RejectTilted);
        assert_eq!(classify(5.0, px(224, 224), &cfg), GateVerdict::Pass);
        assert_eq!(classify(5.000001, px(224, 224), &cfg), GateVerdict::RejectTilted);
        assert_eq!(classify(0.0, px(223, 224), &cfg), GateVerdict::RejectTooSmall);
        assert_eq!(classify(0.0, px(224, 223), &cfg), GateVerdict::RejectTooSmall);
    }

    #[test]
    fn evaluate_gate_end_to_end() {
        let cfg = no_margin();
        let img = PixelSize::new(1000, 1000).unwrap();
        // 0.3 x 0.3 of a 1000 px frame -> 300 x 300 crop.
        let d = evaluate_gate(Some(&mouth(0.5, 0.5, 0.15, 0.15, 2.0)), img, &cfg);
        assert_eq!(d.verdict, GateVerdict::Pass);
        assert!((d.tilt_degrees - 2.0).abs() < 1e-9);

        let d = evaluate_gate(Some(&mouth(0.5, 0.5, 0.1, 0.1, 0.0)), img, &cfg);
        assert_eq!(d.verdict, GateVerdict::RejectTooSmall);
        assert_eq!(d.crop_pixels, Some(PixelSize { width: 200, height: 200 }));

        let d = evaluate_gate(Some(&mouth(0.5, 0.5, 0.2, 0.2, 6.0)), img, &cfg);
        assert_eq!(d.verdict, GateVerdict::RejectTilted);
        assert!(d.message.contains("Straighten"));

        let d = evaluate_gate(None, img, &cfg);
        assert_eq!(d.verdict, GateVerdict::RejectNoMouth);
        assert!(d.mouth_box.is_none());
    }

    #[test]
    fn tilt_is_measured_in_pixels() {
        // 4 degrees in a 1280x720 frame is about 7.1 degrees in normalized units.
        let img = PixelSize::new(1280, 720).unwrap();
        let run = 0.4 * 1280.0;
        let rise = run * 4f64.to_radians().tan() / 720.0;
        let mut pts = vec![
            Landmark::new(LandmarkRole::LeftMouthCorner, 0.3, 0.5),
            Landmark::new(LandmarkRole::RightMouthCorner, 0.7, 0.5 + rise),
        ];
        for (x, y) in [(0.4, 0.3), (0.6, 0.3), (0.4, 0.75), (0.6, 0.75)] {
            pts.push(Landmark::new(LandmarkRole::OuterLip, x, y));
        }
        let d = evaluate_gate(Some(&LandmarkSet::new(pts).unwrap()), img, &GateConfig::default());
        assert!((d.tilt_degrees - 4.0).abs() < 1e-9);
        assert_eq!(d.verdict, GateVerdict::Pass);
    }

    #[test]
    fn crop_region_examples() {
        let img = PixelSize::new(640, 480).unwrap();
        let pass = GateDecision {
            verdict: GateVerdict::Pass,
            mouth_box: Some(BoundingBox::full_frame()),
            tilt_degrees: 0.0,
            crop_pixels: Some(img),
            message: String::new(),
        };
        assert_eq!(crop_region(&pass, img).unwrap(), PixelRect { x: 0, y: 0, width: 640, height: 480 });

        let sq = PixelSize::new(448, 448).unwrap();
        let b = BoundingBox::new(0.25, 0.25, 0.75, 0.75).unwrap();
        let d =
            GateDecision { mouth_box: Some(b), crop_pixels: Some(geometry::box_pixel_size(&b, sq)), ..pass.clone() };
        assert_eq!(crop_region(&d, sq).unwrap(), PixelRect { x: 112, y: 112, width: 224, height: 224 });

        let tilted = GateDecision { verdict: GateVerdict::RejectTilted, ..pass };
        assert_eq!(crop_region(&tilted, img), Err(GateError::NotPassed(GateVerdict::RejectTilted)));
    }

    #[test]
    fn landmark_set_serde_roundtrip() {
        let set = mouth(0.5, 0.5, 0.1, 0.05, 1.0);
        let json = serde_json::to_string(&set).unwrap();
        assert!(json.contains("left_mouth_corner"));
        let back: LandmarkSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
        let nose: Landmark = serde_json::from_str(r#"{"role":"nose_tip","x":0.5,"y":0.3}"#).unwrap();
        assert_eq!(nose.role, LandmarkRole::Other);
    }

    proptest! {
        #[test]
        fn gate_monotone_in_size(w in 1u32..600, h in 1u32..600, grow in 0u32..300, tilt in -10.0..10.0f64) {
            let cfg = GateConfig::default();
            let small = classify(tilt, PixelSize { width: w, height: h }, &cfg);
            let big = classify(tilt, PixelSize { width: w + grow, height: h + grow }, &cfg);
            if small == GateVerdict::Pass {
                prop_assert_eq!(big, GateVerdict::Pass);
            }
        }

        #[test]
        fn pass_implies_crop_matches(
            cx in 0.3..0.7f64, cy in 0.3..0.7f64,
            hw in 0.05..0.25f64, hh in 0.02..0.2f64,
            tilt in -8.0..8.0f64,
            iw in 200u32..2000, ih in 200u32..2000,
        ) {
            let cfg = GateConfig::default();
            let img = PixelSize::new(iw, ih).unwrap();
            let d = evaluate_gate(Some(&mouth(cx, cy, hw, hh, tilt)), img, &cfg);
            if d.verdict == GateVerdict::Pass {
                let crop = d.crop_pixels.unwrap();
                prop_assert!(crop.covers(cfg.min_crop_pixels));
                prop_assert!(d.tilt_degrees.abs() <= cfg.max_tilt_degrees + 1e-9);
                let rect = crop_region(&d, img).unwrap();
                prop_assert_eq!((rect.width, rect.height), (crop.width, crop.height));
                prop_assert!(rect.x + rect.width <= iw && rect.y + rect.height <= ih);
            } else {
                prop_assert!(crop_region(&d, img).is_err());
            }
        }
    }
}
