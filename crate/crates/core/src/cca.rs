//! Normalized canonical correlation analysis (nCCA).
//!
//! Fitting whitens both views, takes the thin SVD of the whitened
//! cross-covariance and keeps the leading singular pairs. The singular values
//! are the canonical correlations; nCCA then scales column `k` of both
//! projection matrices by `correlations[k].powf(power_p)`.

use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::pooling::FeatureVector;
use crate::textfmt::{write_labeled, write_matrix, LineReader};

/// Floor applied to covariance eigenvalues before the inverse square root.
pub const EIGEN_FLOOR: f64 = 1e-12;
pub const DEFAULT_POWER: f64 = 4.0;
pub const DEFAULT_RIDGE: f64 = 1e-4;

const MAGIC: &str = "NCCA1";

/// Samples in rows, features in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn from_rows(rows: &[FeatureVector]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("data matrix needs at least one row".into()))?;
        let cols = first.dim();
        if let Some(bad) = rows.iter().find(|r| r.dim() != cols) {
            return Err(Error::Shape(format!(
                "rows of dims {cols} and {} in one matrix",
                bad.dim()
            )));
        }
        Ok(DataMatrix(DMatrix::from_fn(rows.len(), cols, |i, j| {
            rows[i][j]
        })))
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::Shape(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(DataMatrix(DMatrix::from_row_slice(rows, cols, values)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    fn ensure_finite(&self, name: &str) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{name} contains non-finite entries"
            )))
        }
    }
}

impl From<DMatrix<f64>> for DataMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        DataMatrix(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Image,
    Text,
}

impl FromStr for View {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(View::Image),
            "text" => Ok(View::Text),
            other => Err(Error::InvalidInput(format!("unknown view {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaConfig {
    /// Ridge relative to the mean diagonal of each covariance.
    pub ridge: f64,
    /// Joint-space dimension; `None` means `min(dx, dy)`.
    pub embed_dim: Option<usize>,
    pub power_p: f64,
}

impl Default for CcaConfig {
    fn default() -> Self {
        CcaConfig {
            ridge: DEFAULT_RIDGE,
            embed_dim: None,
            power_p: DEFAULT_POWER,
        }
    }
}

/// A fitted nCCA joint embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    mean_x: DVector<f64>,
    mean_y: DVector<f64>,
    // Whitened singular vectors before the correlation power scaling.
    basis_x: DMatrix<f64>,
    basis_y: DMatrix<f64>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    correlations: Vec<f64>,
    power_p: f64,
    ridge: f64,
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn centered(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

fn regularized_covariance(c: &DMatrix<f64>, denom: f64, ridge: f64) -> DMatrix<f64> {
    let mut s = c.tr_mul(c) / denom;
    let d = s.nrows();
    let shift = ridge * s.trace() / d as f64;
    for i in 0..d {
        s[(i, i)] += shift;
    }
    s
}

/// `S^{-1/2}` of a symmetric positive semi-definite matrix.
fn inverse_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.map(|l| 1.0 / l.max(EIGEN_FLOOR).sqrt());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&scale) * v.transpose()
}

fn scale_columns(basis: &DMatrix<f64>, correlations: &[f64], power_p: f64) -> DMatrix<f64> {
    let mut w = basis.clone();
    for (k, mut col) in w.column_iter_mut().enumerate() {
        col *= correlations[k].powf(power_p);
    }
    w
}

/// Fits nCCA on paired views `x` (image) and `y` (text).
pub fn fit_cca(
    x: &DataMatrix,
    y: &DataMatrix,
    ridge: f64,
    embed_dim: usize,
    power_p: f64,
) -> Result<CcaModel> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "views have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    x.ensure_finite("image view")?;
    y.ensure_finite("text view")?;
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    if !power_p.is_finite() {
        return Err(Error::InvalidInput(format!(
            "power must be finite, got {power_p}"
        )));
    }
    let max_dim = x.cols().min(y.cols());
    if embed_dim > max_dim {
        return Err(Error::InvalidInput(format!(
            "embed_dim {embed_dim} exceeds min(dx, dy) = {max_dim}"
        )));
    }

    let mean_x = column_means(x.matrix());
    let mean_y = column_means(y.matrix());
    let xc = centered(x.matrix(), &mean_x);
    let yc = centered(y.matrix(), &mean_y);
    let denom = (n - 1) as f64;

    let kx = inverse_sqrt(&regularized_covariance(&xc, denom, ridge));
    let ky = inverse_sqrt(&regularized_covariance(&yc, denom, ridge));
    let sxy = xc.tr_mul(&yc) / denom;
    let m = &kx * sxy * &ky;

    let svd = SVD::new(m, true, true);
    let mut u = svd
        .u
        .expect("SVD computed with U")
        .columns(0, embed_dim)
        .into_owned();
    let mut v = svd
        .v_t
        .expect("SVD computed with V^T")
        .rows(0, embed_dim)
        .transpose();
    let correlations: Vec<f64> = svd
        .singular_values
        .iter()
        .take(embed_dim)
        .copied()
        .collect();

    // Largest-magnitude entry of each U column is made positive.
    for k in 0..embed_dim {
        let col = u.column(k);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
    }

    let basis_x = kx * u;
    let basis_y = ky * v;
    Ok(CcaModel::from_parts(
        mean_x,
        mean_y,
        basis_x,
        basis_y,
        correlations,
        power_p,
        ridge,
    ))
}

/// Fits with `config`, resolving the default embedding dimension.
pub fn fit_with(x: &DataMatrix, y: &DataMatrix, config: &CcaConfig) -> Result<CcaModel> {
    let d = config.embed_dim.unwrap_or(x.cols().min(y.cols()));
    fit_cca(x, y, config.ridge, d, config.power_p)
}

impl CcaModel {
    fn from_parts(
        mean_x: DVector<f64>,
        mean_y: DVector<f64>,
        basis_x: DMatrix<f64>,
        basis_y: DMatrix<f64>,
        correlations: Vec<f64>,
        power_p: f64,
        ridge: f64,
    ) -> Self {
        let w1 = scale_columns(&basis_x, &correlations, power_p);
        let w2 = scale_columns(&basis_y, &correlations, power_p);
        CcaModel {
            mean_x,
            mean_y,
            basis_x,
            basis_y,
            w1,
            w2,
            correlations,
            power_p,
            ridge,
        }
    }

    pub fn dim_x(&self) -> usize {
        self.mean_x.len()
    }

    pub fn dim_y(&self) -> usize {
        self.mean_y.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.correlations.len()
    }

    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }

    pub fn power_p(&self) -> f64 {
        self.power_p
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn mean_x(&self) -> &DVector<f64> {
        &self.mean_x
    }

    pub fn mean_y(&self) -> &DVector<f64> {
        &self.mean_y
    }

    /// Scaled image-view projection `dx x d`.
    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    /// Scaled text-view projection `dy x d`.
    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    /// Plain-CCA (unscaled) projections.
    pub fn unscaled(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.basis_x, &self.basis_y)
    }

    /// The same fit with a different scaling power.
    pub fn with_power(&self, power_p: f64) -> CcaModel {
        CcaModel::from_parts(
            self.mean_x.clone(),
            self.mean_y.clone(),
            self.basis_x.clone(),
            self.basis_y.clone(),
            self.correlations.clone(),
            power_p,
            self.ridge,
        )
    }

    fn view(&self, view: View) -> (&DVector<f64>, &DMatrix<f64>) {
        match view {
            View::Image => (&self.mean_x, &self.w1),
            View::Text => (&self.mean_y, &self.w2),
        }
    }

    /// Maps one vector into the joint space: `(v - mean)^T W`.
    pub fn project(&self, v: &[f64], view: View) -> Result<FeatureVector> {
        let (mean, w) = self.view(view);
        if v.len() != mean.len() {
            return Err(Error::Shape(format!(
                "{view:?} view expects dim {}, got {}",
                mean.len(),
                v.len()
            )));
        }
        let mut out = vec![0.0; w.ncols()];
        for (k, col) in w.column_iter().enumerate() {
            out[k] = col
                .iter()
                .zip(v.iter().zip(mean.iter()))
                .map(|(wk, (x, m))| wk * (x - m))
                .sum();
        }
        Ok(FeatureVector::from_raw(out))
    }

    /// `tr(X̂ᵀŶ)` for the unscaled projections of centered `x` and `y`.
    pub fn canonical_trace(&self, x: &DataMatrix, y: &DataMatrix) -> Result<f64> {
        if x.rows() != y.rows() {
            return Err(Error::Shape(format!(
                "views have {} and {} rows",
                x.rows(),
                y.rows()
            )));
        }
        if x.cols() != self.dim_x() || y.cols() != self.dim_y() {
            return Err(Error::Shape(format!(
                "model expects dims ({}, {}), got ({}, {})",
                self.dim_x(),
                self.dim_y(),
                x.cols(),
                y.cols()
            )));
        }
        if self.embed_dim() == 0 {
            return Ok(0.0);
        }
        let xh = centered(x.matrix(), &self.mean_x) * &self.basis_x;
        let yh = centered(y.matrix(), &self.mean_y) * &self.basis_y;
        Ok(xh.component_mul(&yh).sum())
    }

    /// Writes the versioned text format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(
            out,
            "dims {} {} {}",
            self.dim_x(),
            self.dim_y(),
            self.embed_dim()
        )?;
        writeln!(out, "power_p {}", self.power_p)?;
        writeln!(out, "ridge {}", self.ridge)?;
        write_labeled(&mut out, "mean_x", self.mean_x.iter())?;
        write_labeled(&mut out, "mean_y", self.mean_y.iter())?;
        write_labeled(&mut out, "correlations", self.correlations.iter())?;
        write_matrix(&mut out, "w1", &self.basis_x)?;
        write_matrix(&mut out, "w2", &self.basis_y)?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = LineReader::new(reader);
        let magic = lines.next_line()?;
        if magic.trim() != MAGIC {
            return Err(Error::parse(
                lines.lineno,
                format!("expected magic {MAGIC}"),
            ));
        }
        let dims: Vec<usize> = lines.labeled("dims")?;
        if dims.len() != 3 {
            return Err(Error::parse(lines.lineno, "dims needs three values"));
        }
        let (dx, dy, d) = (dims[0], dims[1], dims[2]);
        let power_p = lines.scalar("power_p")?;
        let ridge = lines.scalar("ridge")?;
        let mean_x = lines.vector("mean_x", dx)?;
        let mean_y = lines.vector("mean_y", dy)?;
        let correlations = lines.vector("correlations", d)?;
        let basis_x = lines.matrix("w1", dx, d)?;
        let basis_y = lines.matrix("w2", dy, d)?;
        Ok(CcaModel::from_parts(
            DVector::from_vec(mean_x),
            DVector::from_vec(mean_y),
            basis_x,
            basis_y,
            correlations,
            power_p,
            ridge,
        ))
    }
}
