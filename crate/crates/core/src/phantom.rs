//! Synthetic piecewise-smooth test images with known contours.
//!
//! Every region carries its own low-amplitude linear ramp, so the image is
//! smooth inside regions and jumps across their interfaces.

use serde::{Deserialize, Serialize};

use crate::error::{DmsError, Result};
use crate::grid::{DifferenceOperator, EdgeField, Image};

pub const MIN_PHANTOM_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Rotated square (losange) over a background.
    Diamond,
    /// The diamond with an extra centered ellipse inside it.
    Ellipse,
}

impl Geometry {
    pub const ALL: [Geometry; 2] = [Geometry::Diamond, Geometry::Ellipse];

    pub fn name(self) -> &'static str {
        match self {
            Geometry::Diamond => "diamond",
            Geometry::Ellipse => "ellipse",
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = DmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diamond" | "losange" => Ok(Geometry::Diamond),
            "ellipse" => Ok(Geometry::Ellipse),
            other => Err(DmsError::InvalidParameter(format!("unknown geometry '{other}'"))),
        }
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry and intensity constants. Lengths are relative; levels are in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomParams {
    /// Diamond half-diagonal as a fraction of `min(height, width)`.
    pub radius: f64,
    /// Background level at the left edge; rises by `ramp` towards the right.
    pub background: f64,
    /// Diamond level at the top; rises by `ramp` towards the bottom.
    pub foreground: f64,
    /// Ellipse level at the left edge; rises by `ramp` towards the right.
    pub inner: f64,
    pub ramp: f64,
    /// Horizontal and vertical ellipse semi-axes as fractions of the diamond radius.
    pub ellipse_axes: (f64, f64),
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            radius: 0.3,
            background: 0.2,
            foreground: 0.7,
            inner: 0.3,
            ramp: 0.1,
            ellipse_axes: (0.45, 0.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomDescriptor {
    pub geometry: Geometry,
    pub height: usize,
    pub width: usize,
    pub params: PhantomParams,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub clean: Image,
    /// 1 on edges whose two pixels lie in different regions, 0 elsewhere.
    pub contours: EdgeField,
    pub descriptor: PhantomDescriptor,
}

impl Phantom {
    /// Number of contour edges.
    pub fn contour_length(&self) -> usize {
        self.contours.values().iter().filter(|&&v| v != 0.0).count()
    }
}

pub fn make_phantom(
    geometry: Geometry,
    height: usize,
    width: usize,
    params: &PhantomParams,
) -> Result<Phantom> {
    if height < MIN_PHANTOM_SIZE || width < MIN_PHANTOM_SIZE {
        return Err(DmsError::InvalidDimension {
            height,
            width,
            reason: "phantoms need at least 16 pixels per side",
        });
    }
    let p = *params;
    for (name, level) in [("background", p.background), ("foreground", p.foreground), ("inner", p.inner)] {
        if !(level >= 0.0 && level + p.ramp <= 1.0) {
            return Err(DmsError::InvalidParameter(format!(
                "{name} level {level} with ramp {} leaves [0, 1]",
                p.ramp
            )));
        }
    }
    if !(p.ramp >= 0.0) {
        return Err(DmsError::InvalidParameter(format!("ramp must be >= 0, got {}", p.ramp)));
    }

    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let r = p.radius * height.min(width) as f64;
    let (ax, ay) = (p.ellipse_axes.0 * r, p.ellipse_axes.1 * r);
    if !(r.is_finite() && r > 0.0 && r < cx.min(cy)) {
        return Err(DmsError::DegenerateGeometry(format!(
            "diamond radius {r:.3} does not fit strictly inside a {height}x{width} grid"
        )));
    }
    if geometry == Geometry::Ellipse {
        // the L1 radius of the ellipse is sqrt(ax^2 + ay^2)
        if !(ax > 0.0 && ay > 0.0) || ax.hypot(ay) >= r {
            return Err(DmsError::DegenerateGeometry(format!(
                "ellipse semi-axes ({ax:.3}, {ay:.3}) must be positive and fit inside the diamond"
            )));
        }
    }

    let region = |row: usize, col: usize| -> u8 {
        let (dy, dx) = (row as f64 - cy, col as f64 - cx);
        if geometry == Geometry::Ellipse && (dx / ax).powi(2) + (dy / ay).powi(2) <= 1.0 {
            2
        } else if dx.abs() + dy.abs() <= r {
            1
        } else {
            0
        }
    };
    let mut labels = vec![0u8; height * width];
    for row in 0..height {
        for col in 0..width {
            labels[row * width + col] = region(row, col);
        }
    }
    for (label, name) in [(1u8, "diamond"), (2u8, "ellipse")] {
        let wanted = label == 1 || geometry == Geometry::Ellipse;
        if wanted && !labels.contains(&label) {
            return Err(DmsError::DegenerateGeometry(format!("{name} region contains no pixel")));
        }
    }

    let (xs, ys) = ((width - 1) as f64, (height - 1) as f64);
    let clean = Image::from_fn(height, width, |row, col| {
        let (x, y) = (col as f64 / xs, row as f64 / ys);
        match labels[row * width + col] {
            0 => p.background + p.ramp * x,
            1 => p.foreground + p.ramp * y,
            _ => p.inner + p.ramp * x,
        }
    });

    let op = DifferenceOperator::new(height, width)?;
    let contours = op
        .rows()
        .iter()
        .map(|&(a, b)| if labels[a] != labels[b] { 1.0 } else { 0.0 })
        .collect();
    Ok(Phantom {
        clean,
        contours: EdgeField::new(height, width, contours)?,
        descriptor: PhantomDescriptor {
            geometry,
            height,
            width,
            params: p,
        },
    })
}
