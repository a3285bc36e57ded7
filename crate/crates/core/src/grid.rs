//! Pixel grids, the 4-neighbour edge lattice and the forward-difference
//! operator mapping one onto the other.
//!
//! Edges are indexed vertical-first: the vertical edge between `(r, c)` and
//! `(r + 1, c)` has index `r * width + c`, and the horizontal edge between
//! `(r, c)` and `(r, c + 1)` has index `(height - 1) * width + r * (width - 1) + c`.
//! There are no wrap-around edges (Neumann boundary).

use crate::error::{DmsError, Result};

/// Real-valued image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(DmsError::InvalidDimension {
                height,
                width,
                reason: "image dimensions must be positive",
            });
        }
        if values.len() != height * width {
            return Err(DmsError::shape(
                format!("{} values", height * width),
                format!("{} values", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DmsError::InvalidParameter(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            values,
        }
    }

    /// Internal constructor for buffers whose shape is already known to be right.
    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(DmsError::shape(
                format!("{}x{} image", self.height, self.width),
                format!("{}x{} image", other.height, other.width),
            ))
        }
    }

    pub fn dot(&self, other: &Image) -> f64 {
        compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b))
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &Image) -> Image {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Image::from_raw(self.height, self.width, values)
    }

    pub fn scaled(&self, scale: f64) -> Image {
        Image::from_raw(
            self.height,
            self.width,
            self.values.iter().map(|v| v * scale).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(
            self.height,
            self.width,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Number of edges of the 4-neighbour lattice of a `height x width` grid.
pub fn edge_count(height: usize, width: usize) -> usize {
    height.saturating_sub(1) * width + height * width.saturating_sub(1)
}

/// Real values living on the edge lattice, vertical block first.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let expected = edge_count(height, width);
        if values.len() != expected {
            return Err(DmsError::shape(
                format!("{expected} edge values"),
                format!("{} edge values", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DmsError::InvalidParameter(
                "edge field contains non-finite values".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            values: vec![value; edge_count(height, width)],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), edge_count(height, width));
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of vertical edges; horizontal edges start at this index.
    pub fn vertical_count(&self) -> usize {
        (self.height - 1) * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &EdgeField) -> f64 {
        compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b))
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

/// Regularization weights `(beta, lambda)`, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HyperParams {
    pub beta: f64,
    pub lambda: f64,
}

impl HyperParams {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        let theta = Self { beta, lambda };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta > 0.0 && self.lambda > 0.0 && self.beta.is_finite() && self.lambda.is_finite()
        {
            Ok(())
        } else {
            Err(DmsError::InvalidParameter(format!(
                "hyperparameters must be positive and finite, got beta={}, lambda={}",
                self.beta, self.lambda
            )))
        }
    }

    /// Ratio `lambda / beta`, the only combination the contour update depends on.
    pub fn tau(&self) -> f64 {
        self.lambda / self.beta
    }
}

const POWER_ITERATIONS: usize = 50;
const POWER_TOLERANCE: f64 = 1e-10;
const NORM_INFLATION: f64 = 1.01;

/// Sparse forward-difference operator from pixels to edges.
///
/// Row `i` computes `u[q_i] - u[p_i]`.
#[derive(Debug, Clone)]
pub struct DifferenceOperator {
    height: usize,
    width: usize,
    rows: Vec<(usize, usize)>,
    op_norm_sq: f64,
}

impl DifferenceOperator {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(DmsError::InvalidDimension {
                height,
                width,
                reason: "difference operator needs at least 2 rows and 2 columns",
            });
        }
        let mut rows = Vec::with_capacity(edge_count(height, width));
        for r in 0..height - 1 {
            for c in 0..width {
                rows.push((r * width + c, (r + 1) * width + c));
            }
        }
        for r in 0..height {
            for c in 0..width - 1 {
                rows.push((r * width + c, r * width + c + 1));
            }
        }
        let mut op = Self {
            height,
            width,
            rows,
            op_norm_sq: 0.0,
        };
        op.op_norm_sq = op.power_iteration() * NORM_INFLATION;
        Ok(op)
    }

    /// Largest eigenvalue of `D* D`, starting from the checkerboard pattern
    /// which is close to the top eigenvector of the grid Laplacian.
    fn power_iteration(&self) -> f64 {
        let mut v = Image::from_fn(self.height, self.width, |r, c| {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // slight asymmetry so the start is never orthogonal to the top mode
            sign * (1.0 + 1e-3 * ((r * 7 + c * 13) % 11) as f64)
        });
        let norm = v.norm_sq().sqrt();
        v = v.scaled(1.0 / norm);
        let mut estimate = 0.0;
        let mut dv = EdgeField::zeros(self.height, self.width);
        let mut next = Image::zeros(self.height, self.width);
        for _ in 0..POWER_ITERATIONS {
            self.apply_into(&v, &mut dv);
            let rayleigh = dv.norm_sq();
            self.apply_adjoint_into(&dv, &mut next);
            let norm = next.norm_sq().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            std::mem::swap(&mut v, &mut next);
            for x in v.values_mut() {
                *x /= norm;
            }
            let converged = (rayleigh - estimate).abs() <= POWER_TOLERANCE * rayleigh.max(1.0);
            estimate = rayleigh;
            if converged {
                break;
            }
        }
        estimate
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn edge_count(&self) -> usize {
        self.rows.len()
    }

    /// `(p_i, q_i)` pixel pairs, one per edge.
    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    /// Upper bound on `||D||^2`.
    pub fn op_norm_sq(&self) -> f64 {
        self.op_norm_sq
    }

    fn check_image(&self, u: &Image) -> Result<()> {
        if u.height() == self.height && u.width() == self.width {
            Ok(())
        } else {
            Err(DmsError::shape(
                format!("{}x{} image", self.height, self.width),
                format!("{}x{} image", u.height(), u.width()),
            ))
        }
    }

    fn check_edges(&self, w: &EdgeField) -> Result<()> {
        if w.height() == self.height && w.width() == self.width {
            Ok(())
        } else {
            Err(DmsError::shape(
                format!("edge field of a {}x{} grid", self.height, self.width),
                format!("edge field of a {}x{} grid", w.height(), w.width()),
            ))
        }
    }

    pub fn apply(&self, u: &Image) -> Result<EdgeField> {
        self.check_image(u)?;
        let mut out = EdgeField::zeros(self.height, self.width);
        self.apply_into(u, &mut out);
        Ok(out)
    }

    pub fn apply_adjoint(&self, w: &EdgeField) -> Result<Image> {
        self.check_edges(w)?;
        let mut out = Image::zeros(self.height, self.width);
        self.apply_adjoint_into(w, &mut out);
        Ok(out)
    }

    /// Shape-unchecked `D u` written into `out`.
    pub(crate) fn apply_into(&self, u: &Image, out: &mut EdgeField) {
        apply_slices(self.height, self.width, u.values(), out.values_mut());
    }

    /// Shape-unchecked `D* w` written into `out`.
    pub(crate) fn apply_adjoint_into(&self, w: &EdgeField, out: &mut Image) {
        adjoint_slices(self.height, self.width, w.values(), out.values_mut());
    }
}

pub(crate) fn apply_slices(height: usize, width: usize, u: &[f64], out: &mut [f64]) {
    let nv = (height - 1) * width;
    let (vert, horiz) = out.split_at_mut(nv);
    for (i, d) in vert.iter_mut().enumerate() {
        *d = u[i + width] - u[i];
    }
    for r in 0..height {
        let row = &u[r * width..(r + 1) * width];
        let dst = &mut horiz[r * (width - 1)..(r + 1) * (width - 1)];
        for (c, d) in dst.iter_mut().enumerate() {
            *d = row[c + 1] - row[c];
        }
    }
}

pub(crate) fn adjoint_slices(height: usize, width: usize, w: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let nv = (height - 1) * width;
    let (vert, horiz) = w.split_at(nv);
    for (i, &wi) in vert.iter().enumerate() {
        out[i] -= wi;
        out[i + width] += wi;
    }
    for r in 0..height {
        let src = &horiz[r * (width - 1)..(r + 1) * (width - 1)];
        let row = &mut out[r * width..(r + 1) * width];
        for (c, &wi) in src.iter().enumerate() {
            row[c] -= wi;
            row[c + 1] += wi;
        }
    }
}

/// Neumaier-compensated summation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
