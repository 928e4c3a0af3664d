//! C ABI for `ecc-screen`.
//!
//! Conventions:
//! - every fallible function returns an [`EccStatus`]; on failure
//!   [`ecc_last_error_message`] describes what went wrong on this thread;
//! - strings returned through `char **` out-parameters are owned by the
//!   caller and must be released with [`ecc_string_free`];
//! - the post-processor is an opaque handle created by
//!   [`ecc_postprocessor_new`] and released by [`ecc_postprocessor_free`];
//! - panics never cross the boundary; they surface as `ECC_STATUS_PANIC`.
//!
//! The header is generated into `include/ecc_screen.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ecc_screen::dataset::{load_annotations, load_detections, DatasetError};
use ecc_screen::detection::{
    AnchorConfig, ClassLayout, Detection, PostprocessParams, Postprocessor, RawModelOutput, SeverityGroup,
};
use ecc_screen::evaluation::{coco_summary, CocoOptions};
use ecc_screen::gating::{evaluate_gate, GateConfig, GateVerdict, Landmark, LandmarkRole, LandmarkSet};
use ecc_screen::geometry::{BoundingBox, PixelSize};
use ecc_screen::risk::{
    assess, render_report, score_questionnaire, QuestionnaireForm, QuestionnaireResponse, RiskError, RiskReport,
};
use serde::Deserialize;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidArgument = 4,
    /// A questionnaire answer set is missing required questions.
    IncompleteResponse = 5,
    /// The output buffer was too small; the required count was still written.
    BufferTooSmall = 6,
    Panic = 7,
}

/// Normalized box, all coordinates in `[0, 1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EccBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccGroup {
    Normal = 0,
    Level1 = 1,
    Level2 = 2,
    Other = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EccDetection {
    pub bbox: EccBox,
    pub group: EccGroup,
    pub score: f64,
}

/// Values for [`EccLandmark::role`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccLandmarkRole {
    LeftMouthCorner = 0,
    RightMouthCorner = 1,
    OuterLip = 2,
    InnerLip = 3,
    Other = 4,
}

/// One face landmark, normalized to the frame. `role` takes an
/// `EccLandmarkRole` value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EccLandmark {
    pub role: u32,
    pub x: f64,
    pub y: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EccGateConfig {
    pub min_crop_width: u32,
    pub min_crop_height: u32,
    pub max_tilt_degrees: f64,
    pub margin_fraction: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccGateVerdict {
    Pass = 0,
    RejectTooSmall = 1,
    RejectTilted = 2,
    RejectNoMouth = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EccGateResult {
    pub verdict: EccGateVerdict,
    pub tilt_degrees: f64,
    /// False when no mouth was found; `mouth_box` and the crop size are then zero.
    pub has_mouth_box: bool,
    pub mouth_box: EccBox,
    pub crop_width: u32,
    pub crop_height: u32,
}

/// Values for the `layout` argument of [`ecc_postprocessor_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EccClassLayout {
    /// Background + normal, level1, level2, other.
    Grouped = 0,
    /// Background + the eight ICDAS-level classes.
    Icdas = 1,
}

/// Anchor layout and thresholds, fixed at creation.
pub struct EccPostprocessor {
    inner: Postprocessor,
}

struct Failure {
    status: EccStatus,
    message: String,
}

impl Failure {
    fn new(status: EccStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EccStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EccStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {what}"));
            EccStatus::Panic
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::new(EccStatus::InvalidArgument, e.to_string())
}

fn bad_json(e: impl std::fmt::Display) -> Failure {
    Failure::new(EccStatus::InvalidJson, e.to_string())
}

fn dataset(e: DatasetError) -> Failure {
    match e {
        DatasetError::Parse { .. } => bad_json(e),
        other => invalid(other),
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(EccStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure::new(EccStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn read_opt_str<'a>(ptr: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        read_str(ptr, what).map(Some)
    }
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::new(EccStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let slot = out_ref(out, "output string pointer")?;
    let c = CString::new(text).map_err(invalid)?;
    *slot = c.into_raw();
    Ok(())
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::new(EccStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn to_box(b: &EccBox) -> Result<BoundingBox, Failure> {
    BoundingBox::new(b.x_min, b.y_min, b.x_max, b.y_max).map_err(invalid)
}

fn from_box(b: &BoundingBox) -> EccBox {
    EccBox { x_min: b.x_min(), y_min: b.y_min(), x_max: b.x_max(), y_max: b.y_max() }
}

fn from_group(g: SeverityGroup) -> EccGroup {
    match g {
        SeverityGroup::Normal => EccGroup::Normal,
        SeverityGroup::Level1 => EccGroup::Level1,
        SeverityGroup::Level2 => EccGroup::Level2,
        SeverityGroup::Other => EccGroup::Other,
    }
}

fn role(code: u32) -> Result<LandmarkRole, Failure> {
    Ok(match code {
        0 => LandmarkRole::LeftMouthCorner,
        1 => LandmarkRole::RightMouthCorner,
        2 => LandmarkRole::OuterLip,
        3 => LandmarkRole::InnerLip,
        4 => LandmarkRole::Other,
        _ => return Err(invalid(format!("unknown landmark role {code}"))),
    })
}

fn to_gate_config(c: &EccGateConfig) -> GateConfig {
    GateConfig {
        min_crop_pixels: PixelSize { width: c.min_crop_width, height: c.min_crop_height },
        max_tilt_degrees: c.max_tilt_degrees,
        margin_fraction: c.margin_fraction,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ecc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL after a
/// successful call. The pointer stays valid until the next library call on
/// the same thread; do not free it.
#[no_mangle]
pub extern "C" fn ecc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn ecc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Intersection over union of two normalized boxes.
///
/// # Safety
/// Pointers must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn ecc_iou(a: *const EccBox, b: *const EccBox, out: *mut f64) -> EccStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| Failure::new(EccStatus::NullPointer, "a is null"))?;
        let b = b.as_ref().ok_or_else(|| Failure::new(EccStatus::NullPointer, "b is null"))?;
        let iou = to_box(a)?.iou(&to_box(b)?);
        *out_ref(out, "out")? = iou;
        Ok(())
    })
}

/// Default gate: 224x224 minimum crop, 5 degree tilt limit, 10% margin.
#[no_mangle]
pub extern "C" fn ecc_gate_config_default() -> EccGateConfig {
    let d = GateConfig::default();
    EccGateConfig {
        min_crop_width: d.min_crop_pixels.width,
        min_crop_height: d.min_crop_pixels.height,
        max_tilt_degrees: d.max_tilt_degrees,
        margin_fraction: d.margin_fraction,
    }
}

/// Gates one frame from its landmarks. `landmarks` may be NULL with
/// `count == 0`, meaning no face was detected; `config` may be NULL for the
/// defaults.
///
/// # Safety
/// `landmarks` must point to `count` readable elements; other pointers must
/// be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn ecc_gate_evaluate(
    landmarks: *const EccLandmark,
    count: usize,
    image_width: u32,
    image_height: u32,
    config: *const EccGateConfig,
    out: *mut EccGateResult,
) -> EccStatus {
    guard(|| {
        let config = config.as_ref().map_or_else(GateConfig::default, to_gate_config);
        config.validate().map_err(invalid)?;
        let image = PixelSize::new(image_width, image_height).map_err(invalid)?;
        let points = slice(landmarks, count, "landmarks")?;
        let set = if points.is_empty() {
            None
        } else {
            let pts = points
                .iter()
                .map(|p| Ok(Landmark::new(role(p.role)?, p.x, p.y)))
                .collect::<Result<Vec<_>, Failure>>()?;
            Some(LandmarkSet::new(pts).map_err(invalid)?)
        };
        let d = evaluate_gate(set.as_ref(), image, &config);
        let crop = d.crop_pixels.unwrap_or(PixelSize { width: 0, height: 0 });
        *out_ref(out, "out")? = EccGateResult {
            verdict: match d.verdict {
                GateVerdict::Pass => EccGateVerdict::Pass,
                GateVerdict::RejectTooSmall => EccGateVerdict::RejectTooSmall,
                GateVerdict::RejectTilted => EccGateVerdict::RejectTilted,
                GateVerdict::RejectNoMouth => EccGateVerdict::RejectNoMouth,
            },
            tilt_degrees: d.tilt_degrees,
            has_mouth_box: d.mouth_box.is_some(),
            mouth_box: d.mouth_box.as_ref().map(from_box).unwrap_or_default(),
            crop_width: crop.width,
            crop_height: crop.height,
        };
        Ok(())
    })
}

#[derive(Deserialize)]
struct PostprocessorConfig {
    #[serde(default)]
    anchors: Option<AnchorConfig>,
    #[serde(default)]
    postprocess: PostprocessParams,
}

/// Creates a post-processor. `config_json` may be NULL for the default
/// 4200-anchor layout; otherwise `{"anchors": {...}, "postprocess": {...}}`
/// with either key optional.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecc_postprocessor_new(
    config_json: *const c_char,
    out: *mut *mut EccPostprocessor,
) -> EccStatus {
    guard(|| {
        let slot = out_ref(out, "out")?;
        let cfg = match read_opt_str(config_json, "config_json")? {
            Some(text) => serde_json::from_str::<PostprocessorConfig>(text).map_err(bad_json)?,
            None => PostprocessorConfig { anchors: None, postprocess: PostprocessParams::default() },
        };
        let inner = Postprocessor::new(cfg.anchors.unwrap_or_default(), cfg.postprocess).map_err(invalid)?;
        *slot = Box::into_raw(Box::new(EccPostprocessor { inner }));
        Ok(())
    })
}

/// Number of anchors the model head must produce; 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecc_postprocessor_anchor_count(handle: *const EccPostprocessor) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.anchors().len())
}

/// Decodes, thresholds and suppresses one frame of head output.
///
/// `logits` holds `anchor_count * classes` values (classes = 5 for
/// `ECC_CLASS_LAYOUT_GROUPED`, 9 for `ECC_CLASS_LAYOUT_ICDAS`), anchor-major;
/// `offsets` holds `anchor_count * 4` values. Up to `capacity` detections
/// are written to `out` by descending score and `*out_count` receives the
/// total; if that exceeds `capacity` the call returns
/// `ECC_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// Array pointers must cover their stated lengths; `out` must have room for
/// `capacity` elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ecc_postprocessor_run(
    handle: *const EccPostprocessor,
    layout: u32,
    logits: *const f32,
    logits_len: usize,
    offsets: *const f32,
    offsets_len: usize,
    out: *mut EccDetection,
    capacity: usize,
    out_count: *mut usize,
) -> EccStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| Failure::new(EccStatus::NullPointer, "handle is null"))?;
        let count = out_ref(out_count, "out_count")?;
        let layout = match layout {
            0 => ClassLayout::Grouped,
            1 => ClassLayout::Icdas,
            other => return Err(invalid(format!("unknown class layout {other}"))),
        };
        let logits = slice(logits, logits_len, "logits")?;
        let offsets = slice(offsets, offsets_len, "offsets")?;
        if offsets.len() % 4 != 0 {
            return Err(invalid(format!("offsets length {} is not a multiple of 4", offsets.len())));
        }
        let raw = RawModelOutput::new(
            layout,
            logits.iter().map(|&v| f64::from(v)).collect(),
            offsets.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]].map(f64::from)).collect(),
        )
        .map_err(invalid)?;
        let dets = h.inner.run(&raw).map_err(invalid)?;
        *count = dets.len();
        if dets.is_empty() {
            return Ok(());
        }
        if out.is_null() && capacity > 0 {
            return Err(Failure::new(EccStatus::NullPointer, "out is null"));
        }
        for (i, d) in dets.iter().take(capacity).enumerate() {
            out.add(i).write(EccDetection { bbox: from_box(&d.bbox), group: from_group(d.group), score: d.score });
        }
        if dets.len() > capacity {
            return Err(Failure::new(
                EccStatus::BufferTooSmall,
                format!("{} detections do not fit in {capacity}", dets.len()),
            ));
        }
        Ok(())
    })
}

/// Releases a post-processor. NULL is ignored.
///
/// # Safety
/// `handle` must come from [`ecc_postprocessor_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ecc_postprocessor_free(handle: *mut EccPostprocessor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// The built-in caregiver questionnaire as JSON.
///
/// # Safety
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ecc_questionnaire_form_json(out_json: *mut *mut c_char) -> EccStatus {
    guard(|| {
        let text = serde_json::to_string(&QuestionnaireForm::builtin()).map_err(invalid)?;
        write_string(out_json, text)
    })
}

/// Fuses detections with optional questionnaire answers into a risk report.
///
/// `detections_json` is an array of `{x_min, y_min, x_max, y_max, group,
/// score}`; `answers_json` is NULL or `{"answers": {question_id: option_id}}`
/// for the built-in form. The report is written to `*out_json`.
///
/// # Safety
/// Strings must be NULL-or-NUL-terminated as documented; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ecc_assess_json(
    detections_json: *const c_char,
    answers_json: *const c_char,
    out_json: *mut *mut c_char,
) -> EccStatus {
    guard(|| {
        let dets: Vec<Detection> =
            serde_json::from_str(read_str(detections_json, "detections_json")?).map_err(bad_json)?;
        let score = match read_opt_str(answers_json, "answers_json")? {
            Some(text) => {
                let response: QuestionnaireResponse = serde_json::from_str(text).map_err(bad_json)?;
                Some(score_questionnaire(&QuestionnaireForm::builtin(), &response).map_err(|e| match e {
                    RiskError::IncompleteResponse { .. } => Failure::new(EccStatus::IncompleteResponse, e.to_string()),
                    other => invalid(other),
                })?)
            }
            None => None,
        };
        let report = assess(&dets, score.as_ref());
        write_string(out_json, serde_json::to_string(&report).map_err(invalid)?)
    })
}

/// Renders a report from [`ecc_assess_json`] as plain text.
///
/// # Safety
/// `report_json` must be NUL-terminated; `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn ecc_render_report(report_json: *const c_char, out_text: *mut *mut c_char) -> EccStatus {
    guard(|| {
        let report: RiskReport = serde_json::from_str(read_str(report_json, "report_json")?).map_err(bad_json)?;
        write_string(out_text, render_report(&report))
    })
}

/// COCO metrics for an annotation file and a detection file, both in the
/// library's `{"images": [...]}` formats. Returns the evaluation report JSON.
///
/// # Safety
/// Strings must be NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ecc_evaluate_json(
    annotations_json: *const c_char,
    detections_json: *const c_char,
    exclude_other: bool,
    out_json: *mut *mut c_char,
) -> EccStatus {
    guard(|| {
        let gt = load_annotations(read_str(annotations_json, "annotations_json")?).map_err(dataset)?;
        let dets = load_detections(read_str(detections_json, "detections_json")?).map_err(dataset)?;
        let report = coco_summary(&gt, &dets, &[], &CocoOptions { exclude_other });
        write_string(out_json, serde_json::to_string(&report).map_err(invalid)?)
    })
}
