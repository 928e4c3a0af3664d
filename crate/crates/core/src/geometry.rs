//! Normalized box, point and angle arithmetic.
//!
//! Boxes are corner-form `(x_min, y_min, x_max, y_max)` with every coordinate
//! relative to the image extent, so `(0, 0, 1, 1)` is the whole frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate {name} is not finite ({value})")]
    NonFiniteCoordinate { name: &'static str, value: f64 },
    #[error("box ({x_min}, {y_min}, {x_max}, {y_max}) is not ordered or leaves [0, 1]")]
    InvalidBox { x_min: f64, y_min: f64, x_max: f64, y_max: f64 },
    #[error("point ({x}, {y}) lies outside the unit square")]
    PointOutOfRange { x: f64, y: f64 },
    #[error("segment endpoints coincide")]
    DegenerateSegment,
    #[error("pixel size must be at least 1x1, got {width}x{height}")]
    EmptyPixelSize { width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

#[derive(Deserialize)]
struct RawBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = GeometryError;

    fn try_from(raw: RawBox) -> Result<Self, Self::Error> {
        BoundingBox::new(raw.x_min, raw.y_min, raw.x_max, raw.y_max)
    }
}

fn check_finite(name: &'static str, value: f64) -> Result<f64, GeometryError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GeometryError::NonFiniteCoordinate { name, value })
    }
}

impl BoundingBox {
    /// Strict constructor: coordinates must already be ordered and inside `[0, 1]`.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        check_finite("x_min", x_min)?;
        check_finite("y_min", y_min)?;
        check_finite("x_max", x_max)?;
        check_finite("y_max", y_max)?;
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if x_min > x_max || y_min > y_max || !in_unit(x_min) || !in_unit(y_min) || !in_unit(x_max) || !in_unit(y_max) {
            return Err(GeometryError::InvalidBox { x_min, y_min, x_max, y_max });
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Lenient constructor: swaps reversed corners and clamps into the unit square.
    pub fn clamped(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        check_finite("x_min", x_min)?;
        check_finite("y_min", y_min)?;
        check_finite("x_max", x_max)?;
        check_finite("y_max", y_max)?;
        let (x0, x1) = if x_min <= x_max { (x_min, x_max) } else { (x_max, x_min) };
        let (y0, y1) = if y_min <= y_max { (y_min, y_max) } else { (y_max, y_min) };
        Ok(Self {
            x_min: x0.clamp(0.0, 1.0),
            y_min: y0.clamp(0.0, 1.0),
            x_max: x1.clamp(0.0, 1.0),
            y_max: y1.clamp(0.0, 1.0),
        })
    }

    /// Builds a clamped box from center form.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::clamped(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn full_frame() -> Self {
        Self { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2D {
        Point2D { x: (self.x_min + self.x_max) / 2.0, y: (self.y_min + self.y_max) / 2.0 }
    }

    /// Intersection over union. Zero whenever the union has no area.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let iw = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let ih = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

/// Free-function form of [`BoundingBox::iou`].
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// Free-function form of [`BoundingBox::clamped`].
pub fn clamp_box(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<BoundingBox, GeometryError> {
    BoundingBox::clamped(x_min, y_min, x_max, y_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Checks finiteness and membership in the unit square.
    pub fn validate(&self) -> Result<(), GeometryError> {
        check_finite("x", self.x)?;
        check_finite("y", self.y)?;
        if !(0.0..=1.0).contains(&self.x) || !(0.0..=1.0).contains(&self.y) {
            return Err(GeometryError::PointOutOfRange { x: self.x, y: self.y });
        }
        Ok(())
    }
}

/// Acute signed angle of segment `pq` against the horizontal, in `(-90, 90]` degrees.
///
/// Swapping the endpoints or translating both gives the same angle.
pub fn segment_angle_degrees(p: Point2D, q: Point2D) -> Result<f64, GeometryError> {
    let dx = q.x - p.x;
    let dy = q.y - p.y;
    check_finite("dx", dx)?;
    check_finite("dy", dy)?;
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::DegenerateSegment);
    }
    let mut angle = dy.atan2(dx).to_degrees();
    if angle > 90.0 {
        angle -= 180.0;
    } else if angle <= -90.0 {
        angle += 180.0;
    }
    Ok(angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelSize {
    pub width: u32,
    pub height: u32,
}

impl PixelSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyPixelSize { width, height });
        }
        Ok(Self { width, height })
    }

    /// True when both extents reach `min`.
    pub fn covers(&self, min: PixelSize) -> bool {
        self.width >= min.width && self.height >= min.height
    }
}

impl std::fmt::Display for PixelSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Rounded pixel extent of `b` inside an image of size `image`.
///
/// A zero-area box yields a zero extent, so the result is not run through
/// [`PixelSize::new`].
pub fn box_pixel_size(b: &BoundingBox, image: PixelSize) -> PixelSize {
    PixelSize {
        width: (b.width() * f64::from(image.width)).round() as u32,
        height: (b.height() * f64::from(image.height)).round() as u32,
    }
}
