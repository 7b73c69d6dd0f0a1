//! Shared domain types: class vocabularies, pixel geometry, and the
//! normalized scoring used in reports.
//!
//! All types here are immutable values and safe to share across threads.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
    #[error("empty class name at line {0}")]
    EmptyClassName(usize),
    #[error("invalid box: ({x_min},{y_min})..({x_max},{y_max})")]
    InvalidBox {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
    },
    #[error("degenerate normalization bounds: blind == specialist == {0}")]
    DegenerateBounds(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered set of class names; a name's line number in the vocabulary file is
/// its zero-based id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self, CoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(CoreError::EmptyVocabulary);
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(CoreError::EmptyClassName(i + 1));
            }
            if names[..i].contains(name) {
                return Err(CoreError::DuplicateClass(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// Parse a vocabulary file: UTF-8 text, one class name per line,
    /// line number = id. Trailing blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, CoreError> {
        let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        Self::new(lines)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: u16) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<u16> {
        self.names.iter().position(|n| n == name).map(|i| i as u16)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.names.join("\n");
        s.push('\n');
        s
    }
}

/// Width/height of a raster, both at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RasterSize {
    pub width: u32,
    pub height: u32,
}

impl RasterSize {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "raster dimensions must be >= 1");
        Self { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x < self.width && p.y < self.height
    }

    /// The full-extent box of this raster.
    pub fn full_box(&self) -> PixelBox {
        PixelBox::new(0, 0, self.width, self.height).expect("nonempty raster")
    }
}

impl fmt::Display for RasterSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned pixel rectangle, half-open on the max edges:
/// the box covers x in [x_min, x_max) and y in [y_min, y_max).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl PixelBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, CoreError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(CoreError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x < self.x_max && p.y >= self.y_min && p.y < self.y_max
    }

    pub fn contains_box(&self, other: &PixelBox) -> bool {
        other.x_min >= self.x_min
            && other.y_min >= self.y_min
            && other.x_max <= self.x_max
            && other.y_max <= self.y_max
    }

    /// Intersection, or `None` when the boxes share no pixel.
    pub fn intersect(&self, other: &PixelBox) -> Option<PixelBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_min < x_max && y_min < y_max {
            Some(PixelBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            None
        }
    }

    pub fn intersects(&self, other: &PixelBox) -> bool {
        self.intersect(other).is_some()
    }

    /// Smallest box covering both inputs.
    pub fn union_cover(&self, other: &PixelBox) -> PixelBox {
        PixelBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Scale about the box center by `factor` (>= 1), then clip to `bounds`.
    /// The result always contains `self`.
    pub fn scale_about_center(&self, factor: f64, bounds: &PixelBox) -> PixelBox {
        let factor = factor.max(1.0);
        let cx = (self.x_min as f64 + self.x_max as f64) / 2.0;
        let cy = (self.y_min as f64 + self.y_max as f64) / 2.0;
        let half_w = self.width() as f64 * factor / 2.0;
        let half_h = self.height() as f64 * factor / 2.0;
        let x_min = ((cx - half_w).floor().max(bounds.x_min as f64) as u32).min(self.x_min);
        let y_min = ((cy - half_h).floor().max(bounds.y_min as f64) as u32).min(self.y_min);
        let x_max = ((cx + half_w).ceil().min(bounds.x_max as f64) as u32).max(self.x_max);
        let y_max = ((cy + half_h).ceil().min(bounds.y_max as f64) as u32).max(self.y_max);
        PixelBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

impl fmt::Display for PixelBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{})x[{},{})",
            self.x_min, self.x_max, self.y_min, self.y_max
        )
    }
}

/// A detection: a box, a vocabulary class id, and a confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    #[serde(flatten)]
    pub pixel_box: PixelBox,
    pub class_id: u16,
    pub score: f64,
}

impl LabeledBox {
    pub fn new(pixel_box: PixelBox, class_id: u16, score: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&score));
        Self {
            pixel_box,
            class_id,
            score,
        }
    }
}

/// Intersection-over-union of two boxes. Symmetric, 1 for identical boxes,
/// 0 for disjoint ones.
pub fn box_iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = a.intersect(b).map_or(0, |i| i.area());
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Normalize a metric value against a blind-guess lower anchor and a
/// specialist upper anchor: `(value - blind) / (specialist - blind)`,
/// clamped to [0, 1].
///
/// Lower-is-better metrics need no special casing: their specialist anchor
/// sits below the blind anchor and the same ratio flips orientation.
pub fn normalize_axis(value: f64, blind: f64, specialist: f64) -> Result<f64, CoreError> {
    if specialist == blind {
        return Err(CoreError::DegenerateBounds(blind));
    }
    Ok(((value - blind) / (specialist - blind)).clamp(0.0, 1.0))
}
