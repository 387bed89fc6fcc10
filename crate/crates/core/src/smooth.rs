//! Penalized regression spline bases.
//!
//! Two constructions are provided:
//!
//! * a natural cubic regression spline in one covariate, parameterized by
//!   its values at `k` knots placed at quantiles of the distinct data
//!   values. Its penalty is the exact `∫ s''(x)² dx` over the knot range.
//! * a low-rank thin-plate spline in two covariates with a second-order
//!   penalty, built on `k` space-filling knots picked from the data after
//!   scaling each column to unit range.
//!
//! A basis carries linear identifiability constraints `C β = 0` (at least the
//! sum-to-zero constraint over the learning data). They are absorbed by an
//! orthonormal null-space map `Z`, so the design block is `X Z` and the
//! penalty is `Zᵀ S Z`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{derive_seed, seeded_rng, Design};
use crate::error::{Error, Result};
use crate::linalg::null_space;

pub const DEFAULT_K_UNIVARIATE: usize = 10;
pub const DEFAULT_K_BIVARIATE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    CubicUnivariate,
    ThinplateBivariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub kind: BasisKind,
    pub columns: Vec<String>,
    /// One knot per row; bivariate knots are in unit-range coordinates.
    pub knots: DMatrix<f64>,
    pub k: usize,
    /// Wiggliness penalty of the unconstrained basis (k×k).
    pub penalty: DMatrix<f64>,
    /// Constraint rows `C` (m×k).
    pub constraints: DMatrix<f64>,
    /// Null-space map `Z` of the constraints (k×(k−m)).
    pub constraint_map: DMatrix<f64>,
    /// Cubic: maps knot values to knot second derivatives (k×k).
    second_derivative_map: DMatrix<f64>,
    /// Bivariate: column offsets and ranges used for unit scaling.
    shift: Vec<f64>,
    scale: Vec<f64>,
    /// Bivariate: null-space map of the polynomial side conditions on the
    /// radial coefficients (nk×(nk−3)).
    radial_map: DMatrix<f64>,
}

/// Quantile of sorted values with linear interpolation, `q ∈ [0, 1]`.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn build_cubic_basis(column: &str, x: &[f64], k: usize) -> Result<SplineBasis> {
    if k < 4 {
        return Err(Error::Dimension(format!("cubic basis needs k >= 4, got {k}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite covariate value".into()));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Dimension(format!(
            "`{column}` has {} distinct values, fewer than k = {k}; use a smaller k",
            distinct.len()
        )));
    }
    let knots: Vec<f64> = (0..k)
        .map(|j| quantile_sorted(&distinct, j as f64 / (k - 1) as f64))
        .collect();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();

    // D: (k-2)×k second differences, B: (k-2)×(k-2) tridiagonal
    let m = k - 2;
    let mut d = DMatrix::zeros(m, k);
    let mut b = DMatrix::zeros(m, m);
    for i in 0..m {
        d[(i, i)] = 1.0 / h[i];
        d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        d[(i, i + 2)] = 1.0 / h[i + 1];
        b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < m {
            b[(i, i + 1)] = h[i + 1] / 6.0;
            b[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    let b_chol = b
        .cholesky()
        .ok_or_else(|| Error::Numerical("knot spacing matrix not positive definite".into()))?;
    let binv_d = b_chol.solve(&d);
    let mut penalty = d.transpose() * &binv_d;
    symmetrize(&mut penalty);
    let mut f = DMatrix::zeros(k, k);
    f.rows_mut(1, m).copy_from(&binv_d);

    let mut basis = SplineBasis {
        kind: BasisKind::CubicUnivariate,
        columns: vec![column.to_string()],
        knots: DMatrix::from_column_slice(k, 1, &knots),
        k,
        penalty,
        constraints: DMatrix::zeros(0, k),
        constraint_map: DMatrix::identity(k, k),
        second_derivative_map: f,
        shift: Vec::new(),
        scale: Vec::new(),
        radial_map: DMatrix::zeros(0, 0),
    };
    let raw = basis.raw_matrix(&DMatrix::from_column_slice(x.len(), 1, x));
    basis.set_constraints(column_sums(&raw))?;
    Ok(basis)
}

fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

fn symmetrize(s: &mut DMatrix<f64>) {
    let n = s.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}

/// Thin-plate radial function for second-order penalties in two dimensions.
fn tps_eta(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln() / (8.0 * PI)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy farthest-point selection of `k` rows, starting next to the centroid.
fn farthest_points(rows: &[[f64; 2]], k: usize) -> Vec<usize> {
    let n = rows.len();
    let cx = rows.iter().map(|r| r[0]).sum::<f64>() / n as f64;
    let cy = rows.iter().map(|r| r[1]).sum::<f64>() / n as f64;
    let first = (0..n)
        .min_by(|&a, &b| dist2(&rows[a], &[cx, cy]).total_cmp(&dist2(&rows[b], &[cx, cy])))
        .unwrap_or(0);
    let mut chosen = vec![first];
    let mut mind: Vec<f64> = rows.iter().map(|r| dist2(r, &rows[first])).collect();
    while chosen.len() < k {
        let next = (0..n).fold(0, |best, i| if mind[i] > mind[best] { i } else { best });
        chosen.push(next);
        for i in 0..n {
            mind[i] = mind[i].min(dist2(&rows[i], &rows[next]));
        }
    }
    chosen
}

pub fn build_bivariate_basis(columns: [&str; 2], x: &DMatrix<f64>, k: usize) -> Result<SplineBasis> {
    if k < 6 {
        return Err(Error::Dimension(format!("bivariate basis needs k >= 6, got {k}")));
    }
    if x.ncols() != 2 {
        return Err(Error::Dimension("bivariate basis needs a two-column input".into()));
    }
    let n = x.nrows();
    if n < k {
        return Err(Error::Dimension(format!("{n} rows for a basis of dimension {k}")));
    }
    let mut shift = Vec::with_capacity(2);
    let mut scale = Vec::with_capacity(2);
    for j in 0..2 {
        let col = x.column(j);
        let lo = col.min();
        let hi = col.max();
        if !(hi > lo) {
            return Err(Error::Dimension(format!("column `{}` is constant", columns[j])));
        }
        shift.push(lo);
        scale.push(hi - lo);
    }
    let mut rows: Vec<[f64; 2]> = (0..n)
        .map(|i| [(x[(i, 0)] - shift[0]) / scale[0], (x[(i, 1)] - shift[1]) / scale[1]])
        .collect();
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    rows.dedup();
    if rows.len() < k {
        return Err(Error::Dimension(format!(
            "{} distinct points, fewer than k = {k}; use a smaller k",
            rows.len()
        )));
    }
    let picked = farthest_points(&rows, k);
    let mut knots: Vec<[f64; 2]> = picked.iter().map(|&i| rows[i]).collect();

    let mut attempt = 0;
    let (radial_map, e) = loop {
        match tps_side_conditions(&knots) {
            Some(ok) => break ok,
            None if attempt < 3 => {
                attempt += 1;
                let mut rng = seeded_rng(derive_seed(0x7495, attempt));
                for kn in knots.iter_mut() {
                    for v in kn.iter_mut() {
                        *v += 1e-6 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
                    }
                }
            }
            None => {
                return Err(Error::Dimension(
                    "thin-plate knots are duplicated or collinear after jittering".into(),
                ))
            }
        }
    };

    let nr = k - 3;
    let mut penalty = DMatrix::zeros(k, k);
    let radial_pen = radial_map.transpose() * &e * &radial_map;
    penalty.view_mut((0, 0), (nr, nr)).copy_from(&radial_pen);
    symmetrize(&mut penalty);

    let mut basis = SplineBasis {
        kind: BasisKind::ThinplateBivariate,
        columns: columns.iter().map(|s| s.to_string()).collect(),
        knots: DMatrix::from_fn(k, 2, |i, j| knots[i][j]),
        k,
        penalty,
        constraints: DMatrix::zeros(0, k),
        constraint_map: DMatrix::identity(k, k),
        second_derivative_map: DMatrix::zeros(0, 0),
        shift,
        scale,
        radial_map,
    };
    let raw = basis.raw_matrix(x);
    basis.set_constraints(column_sums(&raw))?;
    Ok(basis)
}

/// Null-space map of `Tᵀδ = 0` and the knot kernel matrix, or `None` when
/// the knots are duplicated or collinear.
fn tps_side_conditions(knots: &[[f64; 2]]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let k = knots.len();
    for i in 0..k {
        for j in i + 1..k {
            if dist2(&knots[i], &knots[j]) < 1e-24 {
                return None;
            }
        }
    }
    let t = DMatrix::from_fn(k, 3, |i, j| match j {
        0 => 1.0,
        c => knots[i][c - 1],
    });
    let sv = t.clone().svd(false, false).singular_values;
    if sv.min() <= 1e-9 * sv.max() {
        return None;
    }
    let z = null_space(&t.transpose());
    if z.ncols() != k - 3 {
        return None;
    }
    let e = DMatrix::from_fn(k, k, |i, j| tps_eta(dist2(&knots[i], &knots[j]).sqrt()));
    Some((z, e))
}

impl SplineBasis {
    /// Number of coefficients after constraints.
    pub fn dim(&self) -> usize {
        self.constraint_map.ncols()
    }

    /// Penalty after absorbing the constraints, `Zᵀ S Z`.
    pub fn constrained_penalty(&self) -> DMatrix<f64> {
        let mut s = self.constraint_map.transpose() * &self.penalty * &self.constraint_map;
        symmetrize(&mut s);
        s
    }

    /// Replaces the constraint rows and recomputes `Z`.
    pub fn set_constraints(&mut self, c: DMatrix<f64>) -> Result<()> {
        if c.ncols() != self.k {
            return Err(Error::Dimension("constraint width differs from basis dimension".into()));
        }
        let z = null_space(&c);
        if z.ncols() + c.nrows() != self.k {
            return Err(Error::SingularFit("identifiability constraints are linearly dependent".into()));
        }
        self.constraints = c;
        self.constraint_map = z;
        Ok(())
    }

    /// Unconstrained basis rows for inputs given column-wise in
    /// `self.columns` order.
    pub fn raw_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, self.k);
        let mut row = vec![0.0; self.k];
        for i in 0..n {
            match self.kind {
                BasisKind::CubicUnivariate => self.cubic_row(x[(i, 0)], &mut row),
                BasisKind::ThinplateBivariate => self.tps_row(x[(i, 0)], x[(i, 1)], &mut row),
            }
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }

    fn inputs(&self, design: &Design) -> Result<DMatrix<f64>> {
        let names: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        Ok(design.select(&names)?.points)
    }

    /// Design-matrix block of this smooth, `X Z`.
    pub fn evaluate(&self, design: &Design) -> Result<DMatrix<f64>> {
        Ok(self.raw_matrix(&self.inputs(design)?) * &self.constraint_map)
    }

    fn knot_values(&self) -> &[f64] {
        self.knots.as_slice()
    }

    fn cubic_row(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let kn = self.knot_values();
        let k = self.k;
        let f = &self.second_derivative_map;
        if x < kn[0] || x > kn[k - 1] {
            let (j, at_left) = if x < kn[0] { (0, true) } else { (k - 2, false) };
            let h = kn[j + 1] - kn[j];
            let x0 = if at_left { kn[0] } else { kn[k - 1] };
            let dx = x - x0;
            // value at the boundary knot plus slope times distance
            let (edge, dm, dp) = if at_left { (0, -h / 3.0, -h / 6.0) } else { (k - 1, h / 6.0, h / 3.0) };
            out[edge] += 1.0;
            out[j] -= dx / h;
            out[j + 1] += dx / h;
            for c in 0..k {
                out[c] += dx * (dm * f[(j, c)] + dp * f[(j + 1, c)]);
            }
            return;
        }
        let j = interval(kn, x);
        let h = kn[j + 1] - kn[j];
        let a = kn[j + 1] - x;
        let b = x - kn[j];
        let cm = (a * a * a / h - h * a) / 6.0;
        let cp = (b * b * b / h - h * b) / 6.0;
        out[j] += a / h;
        out[j + 1] += b / h;
        for c in 0..k {
            out[c] += cm * f[(j, c)] + cp * f[(j + 1, c)];
        }
    }

    fn tps_row(&self, x1: f64, x2: f64, out: &mut [f64]) {
        let u = [(x1 - self.shift[0]) / self.scale[0], (x2 - self.shift[1]) / self.scale[1]];
        let nk = self.knots.nrows();
        let radial: Vec<f64> = (0..nk)
            .map(|j| tps_eta(dist2(&u, &[self.knots[(j, 0)], self.knots[(j, 1)]]).sqrt()))
            .collect();
        let nr = nk - 3;
        for c in 0..nr {
            out[c] = (0..nk).map(|j| radial[j] * self.radial_map[(j, c)]).sum();
        }
        out[nr] = 1.0;
        out[nr + 1] = u[0];
        out[nr + 2] = u[1];
    }

    /// Rows of second derivatives `s''(x)` of the unconstrained cubic basis.
    pub fn second_derivative_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.kind != BasisKind::CubicUnivariate {
            return Err(Error::Config("second derivatives only exist for the cubic basis".into()));
        }
        let kn = self.knot_values();
        let f = &self.second_derivative_map;
        let mut out = DMatrix::zeros(x.len(), self.k);
        for (i, &v) in x.iter().enumerate() {
            if v < kn[0] || v > kn[self.k - 1] {
                continue;
            }
            let j = interval(kn, v);
            let h = kn[j + 1] - kn[j];
            let a = (kn[j + 1] - v) / h;
            let b = (v - kn[j]) / h;
            for c in 0..self.k {
                out[(i, c)] = a * f[(j, c)] + b * f[(j + 1, c)];
            }
        }
        Ok(out)
    }

    /// Values of the smooth with constrained coefficients `beta` at the rows
    /// of `design`, without forming the basis matrix.
    pub fn smooth_values(&self, design: &Design, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.dim() {
            return Err(Error::Dimension("coefficient count differs from basis dimension".into()));
        }
        let cols = self
            .columns
            .iter()
            .map(|c| design.column_index(c))
            .collect::<Result<Vec<_>>>()?;
        let raw = &self.constraint_map * DVector::from_column_slice(beta);
        let n = design.nrows();
        match self.kind {
            BasisKind::CubicUnivariate => {
                let kn = self.knot_values();
                let k = self.k;
                let gamma = &self.second_derivative_map * &raw;
                let eval_inside = |x: f64, j: usize| {
                    let h = kn[j + 1] - kn[j];
                    let a = kn[j + 1] - x;
                    let b = x - kn[j];
                    (a * raw[j] + b * raw[j + 1]) / h
                        + (a * a * a / h - h * a) / 6.0 * gamma[j]
                        + (b * b * b / h - h * b) / 6.0 * gamma[j + 1]
                };
                let left_slope = {
                    let h = kn[1] - kn[0];
                    (raw[1] - raw[0]) / h - h / 3.0 * gamma[0] - h / 6.0 * gamma[1]
                };
                let right_slope = {
                    let h = kn[k - 1] - kn[k - 2];
                    (raw[k - 1] - raw[k - 2]) / h + h / 6.0 * gamma[k - 2] + h / 3.0 * gamma[k - 1]
                };
                Ok((0..n)
                    .map(|i| {
                        let x = design.points[(i, cols[0])];
                        if x < kn[0] {
                            raw[0] + (x - kn[0]) * left_slope
                        } else if x > kn[k - 1] {
                            raw[k - 1] + (x - kn[k - 1]) * right_slope
                        } else {
                            eval_inside(x, interval(kn, x))
                        }
                    })
                    .collect())
            }
            BasisKind::ThinplateBivariate => {
                let nk = self.knots.nrows();
                let nr = nk - 3;
                let delta = &self.radial_map * raw.rows(0, nr);
                let knots: Vec<[f64; 2]> = (0..nk).map(|j| [self.knots[(j, 0)], self.knots[(j, 1)]]).collect();
                Ok((0..n)
                    .map(|i| {
                        let u = [
                            (design.points[(i, cols[0])] - self.shift[0]) / self.scale[0],
                            (design.points[(i, cols[1])] - self.shift[1]) / self.scale[1],
                        ];
                        let radial: f64 = knots
                            .iter()
                            .zip(delta.iter())
                            .map(|(kn, d)| d * tps_eta(dist2(&u, kn).sqrt()))
                            .sum();
                        radial + raw[nr] + raw[nr + 1] * u[0] + raw[nr + 2] * u[1]
                    })
                    .collect())
            }
        }
    }
}

/// Index j of the knot interval [t_j, t_{j+1}] containing x (x inside the range).
fn interval(kn: &[f64], x: f64) -> usize {
    let j = kn.partition_point(|&t| t <= x);
    j.saturating_sub(1).min(kn.len() - 2)
}

/// Design-matrix block of a smooth evaluated at the rows of `design`.
pub fn evaluate_basis(basis: &SplineBasis, design: &Design) -> Result<DMatrix<f64>> {
    basis.evaluate(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sorted_eigen;
    use rand::Rng;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        x.clone().svd(true, true).solve(y, 1e-12).unwrap()
    }

    fn design1(name: &str, x: &[f64]) -> Design {
        Design::new(DMatrix::from_column_slice(x.len(), 1, x), vec![name.into()]).unwrap()
    }

    #[test]
    fn cubic_penalty_symmetric_psd_rank() {
        let x = grid(-PI, PI, 200);
        let b = build_cubic_basis("x", &x, 10).unwrap();
        assert_eq!(b.penalty, b.penalty.transpose());
        let (ev, _) = sorted_eigen(&b.penalty);
        let top = ev.max();
        assert!(ev.iter().all(|&v| v >= -1e-10 * top));
        let null = ev.iter().filter(|&&v| v.abs() <= 1e-9 * top).count();
        assert_eq!(null, 2);
    }

    #[test]
    fn linear_function_has_zero_penalty() {
        let x = grid(-2.0, 3.0, 100);
        let b = build_cubic_basis("x", &x, 8).unwrap();
        let raw = b.raw_matrix(&DMatrix::from_column_slice(x.len(), 1, &x));
        let y = DVector::from_iterator(x.len(), x.iter().map(|v| 1.5 - 0.7 * v));
        let beta = lstsq(&raw, &y);
        assert!(beta.dot(&(&b.penalty * &beta)).abs() < 1e-10);
        assert!((&raw * &beta - y).norm() < 1e-9);
    }

    #[test]
    fn sine_penalty_close_to_pi() {
        let x = grid(-PI, PI, 2000);
        let b = build_cubic_basis("x", &x, 20).unwrap();
        let raw = b.raw_matrix(&DMatrix::from_column_slice(x.len(), 1, &x));
        let y = DVector::from_iterator(x.len(), x.iter().map(|v| v.sin()));
        let beta = lstsq(&raw, &y);
        let pen = beta.dot(&(&b.penalty * &beta));
        assert!((pen - PI).abs() < 0.05 * PI, "{pen}");
    }

    /// ∫ s''² by composite Simpson on second differences of basis values.
    fn quadrature_wiggliness(b: &SplineBasis, beta: &DVector<f64>) -> f64 {
        let kn = b.knots.as_slice();
        let eps = 1e-4;
        let mut total = 0.0;
        for w in kn.windows(2) {
            let m = 40;
            let pts = grid(w[0], w[1], 2 * m + 1);
            let vals: Vec<f64> = pts
                .iter()
                .map(|&t| {
                    let ts = [t - eps, t, t + eps];
                    let r = b.raw_matrix(&DMatrix::from_column_slice(3, 1, &ts)) * beta;
                    ((r[0] - 2.0 * r[1] + r[2]) / (eps * eps)).powi(2)
                })
                .collect();
            let h = (w[1] - w[0]) / (2 * m) as f64;
            let mut s = vals[0] + vals[2 * m];
            for i in 1..2 * m {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * vals[i];
            }
            total += s * h / 3.0;
        }
        total
    }

    #[test]
    fn penalty_matches_quadrature_for_random_coefficients() {
        let mut rng = crate::design::seeded_rng(5);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..4.0)).collect();
        let b = build_cubic_basis("x", &x, 9).unwrap();
        for _ in 0..5 {
            let beta = DVector::from_fn(9, |_, _| rng.random_range(-1.0..1.0));
            let exact = beta.dot(&(&b.penalty * &beta));
            let quad = quadrature_wiggliness(&b, &beta);
            assert!((exact - quad).abs() < 0.01 * exact, "{exact} vs {quad}");
        }
    }

    #[test]
    fn continuity_at_knots() {
        let x = grid(0.0, 1.0, 50);
        let b = build_cubic_basis("x", &x, 6).unwrap();
        let beta = DVector::from_row_slice(&[0.3, -1.0, 0.5, 2.0, 0.1, -0.4]);
        let kn = b.knots.as_slice().to_vec();
        for &t in &kn[1..5] {
            let e = 1e-10;
            let v = b.raw_matrix(&DMatrix::from_column_slice(2, 1, &[t - e, t + e])) * &beta;
            assert!((v[0] - v[1]).abs() < 1e-6);
            let s2 = b.second_derivative_matrix(&[t - e, t + e]).unwrap() * &beta;
            assert!(s2.iter().all(|v| v.is_finite()));
            assert!((s2[0] - s2[1]).abs() < 1e-4);
        }
        // midpoint values stay within a bounded envelope
        let mid = 0.5 * (kn[2] + kn[3]);
        let row = b.raw_matrix(&DMatrix::from_column_slice(1, 1, &[mid]));
        assert!(row.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn extrapolation_is_linear_extension() {
        let x = grid(0.0, 2.0, 60);
        let b = build_cubic_basis("x", &x, 7).unwrap();
        let beta = vec![0.2, -0.3, 0.9, 0.1, -0.5, 0.4];
        let d = design1("x", &[2.0, 2.0 - 1e-6, 4.0, -2.0, 1e-6, 0.0]);
        let v = b.smooth_values(&d, &beta).unwrap();
        let slope_right = (v[0] - v[1]) / 1e-6;
        assert!((v[2] - (v[0] + 2.0 * slope_right)).abs() < 1e-5);
        let slope_left = (v[4] - v[5]) / 1e-6;
        assert!((v[3] - (v[5] - 2.0 * slope_left)).abs() < 1e-5);
        // the fast path agrees with the basis matrix
        let m = b.evaluate(&d).unwrap() * DVector::from_vec(beta.clone());
        for i in 0..6 {
            assert!((m[i] - v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_distinct_values() {
        let x = vec![1.0, 2.0, 2.0, 3.0, 1.0];
        let err = build_cubic_basis("x", &x, 4).unwrap_err();
        assert!(err.to_string().contains("smaller k"));
        assert!(build_cubic_basis("x", &[1.0, 2.0, 3.0, 4.0], 3).is_err());
    }

    #[test]
    fn centered_columns_sum_to_zero() {
        let mut rng = crate::design::seeded_rng(1);
        let x: Vec<f64> = (0..120).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = build_cubic_basis("x", &x, 10).unwrap();
        let m = b.evaluate(&design1("x", &x)).unwrap();
        assert_eq!(m.ncols(), 9);
        for j in 0..m.ncols() {
            assert!(m.column(j).sum().abs() < 1e-10);
        }
    }

    fn random_plane(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::design::seeded_rng(seed);
        DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn bivariate_penalty_properties() {
        let x = random_plane(400, 2);
        let b = build_bivariate_basis(["a", "b"], &x, 30).unwrap();
        assert_eq!(b.penalty, b.penalty.transpose());
        let (ev, _) = sorted_eigen(&b.penalty);
        let top = ev.max();
        assert!(ev.iter().all(|&v| v >= -1e-10 * top));
        assert_eq!(ev.iter().filter(|&&v| v.abs() <= 1e-9 * top).count(), 3);
    }

    #[test]
    fn bivariate_plane_has_zero_penalty() {
        let x = random_plane(300, 3);
        let b = build_bivariate_basis(["a", "b"], &x, 20).unwrap();
        let raw = b.raw_matrix(&x);
        let y = DVector::from_fn(300, |i, _| x[(i, 0)] + x[(i, 1)]);
        let beta = lstsq(&raw, &y);
        assert!(beta.dot(&(&b.penalty * &beta)).abs() < 1e-8);
    }

    #[test]
    fn bivariate_reproduces_product_surface() {
        let x = random_plane(1000, 4);
        let b = build_bivariate_basis(["a", "b"], &x, 30).unwrap();
        let d = Design::new(x.clone(), vec!["a".into(), "b".into()]).unwrap();
        let m = b.evaluate(&d).unwrap();
        let y = DVector::from_fn(1000, |i, _| x[(i, 0)] * x[(i, 1)]);
        // the centered smooth plus an intercept
        let mut full = DMatrix::from_element(1000, m.ncols() + 1, 1.0);
        full.columns_mut(1, m.ncols()).copy_from(&m);
        let beta = lstsq(&full, &y);
        let fitted = &full * &beta;
        let rmse = ((fitted - &y).norm_squared() / 1000.0).sqrt();
        let range = y.max() - y.min();
        assert!(rmse < 0.05 * range, "rmse {rmse}");
        // centering: the smooth part has zero mean over the learning rows
        let s = b.smooth_values(&d, beta.rows(1, m.ncols()).as_slice()).unwrap();
        assert!(s.iter().sum::<f64>().abs() / 1000.0 < 1e-10);
    }

    #[test]
    fn bivariate_needs_enough_points() {
        let x = random_plane(10, 5);
        assert!(build_bivariate_basis(["a", "b"], &x, 12).is_err());
        assert!(build_bivariate_basis(["a", "b"], &x, 5).is_err());
        let dup = DMatrix::from_fn(40, 2, |i, j| ((i % 4) + j) as f64);
        assert!(matches!(build_bivariate_basis(["a", "b"], &dup, 8), Err(Error::Dimension(_))));
    }
}
