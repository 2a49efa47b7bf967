//! Embedding-vector semantics: normalization, cosine similarity, and
//! spherical interpolation between predicted image embeddings.
//!
//! Interpolation is spherical by default — the embeddings live near a
//! hypersphere and slerp preserves norm — with plain lerp available behind
//! [`InterpKind::Linear`] for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm tolerance for the `normalized` flag; vectors outside it are
/// re-normalized with a logged warning rather than rejected.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// A fixed-dimension real vector in the shared text/vision embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedVec {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbedVec {
    pub fn new(values: Vec<f64>) -> Self {
        EmbedVec { values, normalized: false }
    }

    /// Wraps values that are expected to be unit-norm already; if they are
    /// outside tolerance they are re-normalized and a warning is logged.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        let mut v = EmbedVec::new(values);
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::Embedding("cannot normalize a zero vector".into()));
        }
        if (n - 1.0).abs() > NORM_TOLERANCE {
            log::warn!("renormalizing embed vector with norm {n}");
            for x in &mut v.values {
                *x /= n;
            }
        }
        v.normalized = true;
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbedVec) -> f64 {
        self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum()
    }

    /// Returns a unit-norm copy.
    pub fn normalized(&self) -> Result<EmbedVec> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Embedding("cannot normalize a zero vector".into()));
        }
        Ok(EmbedVec {
            values: self.values.iter().map(|&x| x / n).collect(),
            normalized: true,
        })
    }
}

/// Cosine similarity in [−1, 1]. Errors on zero-norm input.
pub fn cosine(a: &EmbedVec, b: &EmbedVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Embedding(format!(
            "cosine dims differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Embedding("cosine of a zero-norm vector".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Interpolation path: spherical (default) or straight-line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterpKind {
    #[default]
    Slerp,
    Linear,
}

/// Spherical interpolation between unit vectors; constant angular speed,
/// exact at the endpoints. Errors on antipodal inputs or t outside [0, 1].
pub fn slerp(a: &EmbedVec, b: &EmbedVec, t: f64) -> Result<EmbedVec> {
    interpolate(a, b, t, InterpKind::Slerp)
}

pub fn interpolate(a: &EmbedVec, b: &EmbedVec, t: f64, kind: InterpKind) -> Result<EmbedVec> {
    if a.dim() != b.dim() {
        return Err(Error::Embedding(format!(
            "interpolation dims differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Embedding(format!("interpolation t={t} outside [0, 1]")));
    }
    let a = if a.is_normalized() { a.clone() } else { a.normalized()? };
    let b = if b.is_normalized() { b.clone() } else { b.normalized()? };
    if t == 0.0 {
        return Ok(a);
    }
    if t == 1.0 {
        return Ok(b);
    }
    let dot = a.dot(&b).clamp(-1.0, 1.0);
    if dot <= -1.0 + NORM_TOLERANCE {
        return Err(Error::Embedding("slerp of antipodal vectors is undefined".into()));
    }
    match kind {
        InterpKind::Linear => {
            let mixed: Vec<f64> = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| (1.0 - t) * x + t * y)
                .collect();
            EmbedVec::new(mixed).normalized()
        }
        InterpKind::Slerp => {
            let omega = dot.acos();
            // Nearly parallel: the sine denominator degenerates; the chord
            // and the arc agree to machine precision there.
            if omega < 1e-9 {
                let mixed: Vec<f64> = a
                    .values
                    .iter()
                    .zip(&b.values)
                    .map(|(&x, &y)| (1.0 - t) * x + t * y)
                    .collect();
                return EmbedVec::new(mixed).normalized();
            }
            let sin_omega = omega.sin();
            let ca = ((1.0 - t) * omega).sin() / sin_omega;
            let cb = (t * omega).sin() / sin_omega;
            let mixed: Vec<f64> = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| ca * x + cb * y)
                .collect();
            let mut out = EmbedVec::new(mixed);
            out.normalized = true;
            Ok(out)
        }
    }
}

/// A rows×cols grid of interpolated embeddings with the four inputs at the
/// corners, vertical blend first, then horizontal.
#[derive(Debug, Clone)]
pub struct InterpGrid {
    pub rows: usize,
    pub cols: usize,
    pub corners: [EmbedVec; 4],
    cells: Vec<EmbedVec>,
}

impl InterpGrid {
    pub fn cell(&self, i: usize, j: usize) -> &EmbedVec {
        &self.cells[i * self.cols + j]
    }

    pub fn cells(&self) -> &[EmbedVec] {
        &self.cells
    }
}

/// Builds the interpolation grid: cell (i, j) =
/// interp(interp(tl, bl, i/(rows−1)), interp(tr, br, i/(rows−1)), j/(cols−1)).
/// Corners are exact. Errors if rows or cols < 2.
pub fn interp_grid(
    tl: &EmbedVec,
    tr: &EmbedVec,
    bl: &EmbedVec,
    br: &EmbedVec,
    rows: usize,
    cols: usize,
    kind: InterpKind,
) -> Result<InterpGrid> {
    if rows < 2 || cols < 2 {
        return Err(Error::Embedding(format!("grid extents must be >= 2, got {rows}x{cols}")));
    }
    let corners = [tl.clone(), tr.clone(), bl.clone(), br.clone()];
    let mut cells = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let ti = i as f64 / (rows - 1) as f64;
        let left = interpolate(tl, bl, ti, kind)?;
        let right = interpolate(tr, br, ti, kind)?;
        for j in 0..cols {
            let tj = j as f64 / (cols - 1) as f64;
            cells.push(interpolate(&left, &right, tj, kind)?);
        }
    }
    Ok(InterpGrid { rows, cols, corners, cells })
}

/// Largest cosine gap (1 − cosine) between horizontally or vertically
/// adjacent grid cells; the smoothness statistic of an interpolation sweep.
pub fn grid_smoothness(grid: &InterpGrid) -> Result<f64> {
    let mut max_gap = 0.0f64;
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            if j + 1 < grid.cols {
                max_gap = max_gap.max(1.0 - cosine(grid.cell(i, j), grid.cell(i, j + 1))?);
            }
            if i + 1 < grid.rows {
                max_gap = max_gap.max(1.0 - cosine(grid.cell(i, j), grid.cell(i + 1, j))?);
            }
        }
    }
    Ok(max_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(dim: usize, axis: usize) -> EmbedVec {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        EmbedVec::unit(v).unwrap()
    }

    #[test]
    fn cosine_identities() {
        let a = basis(4, 0);
        let b = basis(4, 1);
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let neg = EmbedVec::unit(a.values().iter().map(|&x| -x).collect()).unwrap();
        assert!((cosine(&a, &neg).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let z = EmbedVec::new(vec![0.0; 3]);
        let a = basis(3, 0);
        assert!(cosine(&z, &a).is_err());
    }

    #[test]
    fn slerp_endpoints_exact() {
        let a = basis(3, 0);
        let b = basis(3, 1);
        assert_eq!(slerp(&a, &b, 0.0).unwrap(), a);
        assert_eq!(slerp(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn slerp_midpoint_of_orthonormal_pair() {
        let a = basis(3, 0);
        let b = basis(3, 1);
        let mid = slerp(&a, &b, 0.5).unwrap();
        let expect = 1.0 / 2.0f64.sqrt();
        assert!((mid.values()[0] - expect).abs() < 1e-12);
        assert!((mid.values()[1] - expect).abs() < 1e-12);
        assert_eq!(mid.values()[2], 0.0);
    }

    #[test]
    fn slerp_angle_linearity() {
        // Independent oracle: angle recomputed via arccos of the dot product.
        let a = basis(3, 0);
        let b = basis(3, 1);
        let total = cosine(&a, &b).unwrap().acos();
        for k in 1..=9 {
            let t = k as f64 / 10.0;
            let p = slerp(&a, &b, t).unwrap();
            let angle = cosine(&a, &p).unwrap().acos();
            assert!(
                (angle - t * total).abs() < 1e-9,
                "t={t}: angle {angle} vs {}",
                t * total
            );
        }
    }

    #[test]
    fn slerp_norm_one_for_all_t() {
        let a = EmbedVec::unit(vec![0.3, -0.5, 0.7, 0.1]).unwrap();
        let b = EmbedVec::unit(vec![-0.2, 0.4, 0.3, 0.9]).unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let p = slerp(&a, &b, t).unwrap();
            assert!((p.norm() - 1.0).abs() < 1e-9, "t={t}: norm {}", p.norm());
        }
    }

    #[test]
    fn slerp_cosine_monotone_in_t() {
        let a = EmbedVec::unit(vec![1.0, 0.2, -0.4]).unwrap();
        let b = EmbedVec::unit(vec![-0.3, 0.8, 0.5]).unwrap();
        let mut prev = 1.0;
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let c = cosine(&a, &slerp(&a, &b, t).unwrap()).unwrap();
            assert!(c <= prev + 1e-12, "t={t}: {c} > {prev}");
            prev = c;
        }
    }

    #[test]
    fn slerp_rejects_antipodal_and_out_of_range_t() {
        let a = basis(3, 0);
        let neg = EmbedVec::unit(vec![-1.0, 0.0, 0.0]).unwrap();
        assert!(slerp(&a, &neg, 0.5).is_err());
        let b = basis(3, 1);
        assert!(slerp(&a, &b, 1.5).is_err());
        assert!(slerp(&a, &b, -0.1).is_err());
    }

    #[test]
    fn grid_of_identical_corners_is_constant() {
        let a = EmbedVec::unit(vec![0.6, 0.8, 0.0]).unwrap();
        let g = interp_grid(&a, &a, &a, &a, 4, 5, InterpKind::Slerp).unwrap();
        for cell in g.cells() {
            assert_eq!(cell, &a);
        }
        assert_eq!(grid_smoothness(&g).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_grid_is_exactly_the_corners() {
        let tl = basis(4, 0);
        let tr = basis(4, 1);
        let bl = basis(4, 2);
        let br = basis(4, 3);
        let g = interp_grid(&tl, &tr, &bl, &br, 2, 2, InterpKind::Slerp).unwrap();
        assert_eq!(g.cell(0, 0), &tl);
        assert_eq!(g.cell(0, 1), &tr);
        assert_eq!(g.cell(1, 0), &bl);
        assert_eq!(g.cell(1, 1), &br);
    }

    #[test]
    fn grid_center_matches_nested_closed_form() {
        // Oracle: the closed-form slerp recomputed locally.
        fn slerp_formula(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
            let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
            let omega = dot.clamp(-1.0, 1.0).acos();
            let (ca, cb) = (
                ((1.0 - t) * omega).sin() / omega.sin(),
                (t * omega).sin() / omega.sin(),
            );
            a.iter().zip(b).map(|(&x, &y)| ca * x + cb * y).collect()
        }
        let tl = basis(4, 0);
        let tr = basis(4, 1);
        let bl = basis(4, 2);
        let br = basis(4, 3);
        let g = interp_grid(&tl, &tr, &bl, &br, 3, 3, InterpKind::Slerp).unwrap();
        let left = slerp_formula(tl.values(), bl.values(), 0.5);
        let right = slerp_formula(tr.values(), br.values(), 0.5);
        let center = slerp_formula(&left, &right, 0.5);
        for (got, want) in g.cell(1, 1).values().iter().zip(&center) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_boundaries_depend_only_on_their_corners() {
        let tl = EmbedVec::unit(vec![1.0, 0.1, 0.0, 0.0]).unwrap();
        let tr = EmbedVec::unit(vec![0.0, 1.0, 0.1, 0.0]).unwrap();
        let bl = EmbedVec::unit(vec![0.0, 0.0, 1.0, 0.1]).unwrap();
        let br = EmbedVec::unit(vec![0.1, 0.0, 0.0, 1.0]).unwrap();
        let bl2 = EmbedVec::unit(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let br2 = EmbedVec::unit(vec![0.5, -0.5, 0.5, -0.5]).unwrap();
        let g1 = interp_grid(&tl, &tr, &bl, &br, 4, 4, InterpKind::Slerp).unwrap();
        let g2 = interp_grid(&tl, &tr, &bl2, &br2, 4, 4, InterpKind::Slerp).unwrap();
        for j in 0..4 {
            assert_eq!(g1.cell(0, j), g2.cell(0, j), "row 0 must ignore bottom corners");
        }
        let tr_alt = EmbedVec::unit(vec![0.2, 0.3, 0.9, 0.1]).unwrap();
        let g3 = interp_grid(&tl, &tr_alt, &bl, &br2, 4, 4, InterpKind::Slerp).unwrap();
        for i in 0..4 {
            assert_eq!(g1.cell(i, 0), g3.cell(i, 0), "col 0 must ignore right corners");
        }
    }

    #[test]
    fn grid_rejects_degenerate_extents() {
        let a = basis(3, 0);
        assert!(interp_grid(&a, &a, &a, &a, 1, 3, InterpKind::Slerp).is_err());
        assert!(interp_grid(&a, &a, &a, &a, 3, 1, InterpKind::Slerp).is_err());
    }

    #[test]
    fn linear_kind_also_hits_endpoints_and_unit_norm() {
        let a = basis(3, 0);
        let b = basis(3, 1);
        assert_eq!(interpolate(&a, &b, 0.0, InterpKind::Linear).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0, InterpKind::Linear).unwrap(), b);
        let mid = interpolate(&a, &b, 0.5, InterpKind::Linear).unwrap();
        assert!((mid.norm() - 1.0).abs() < 1e-12);
    }
}
