//! Finite-dimensional Gaussian machinery: covariance assembly, Kronecker-aware
//! exact sampling, conditional variances, dual determinant identities, and the
//! variance-domination and determinant-Hölder checks built on top of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{self, ComponentKind, CovModel, RegionComponent};
use crate::hurst::{check_point, HurstVector};
use crate::linalg::{lu_decompose, mode_multiply, Cholesky, SymMat};
use crate::quad::Quadrature;
use crate::rng::{normal_at, SeedSpec};

/// Point set for sampling: a full tensor product or an explicit scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    Tensor { axes: Vec<Vec<f64>> },
    Scatter { points: Vec<Vec<f64>> },
}

impl Grid {
    pub fn tensor(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("grid", "needs at least one axis"));
        }
        let mut total: usize = 1;
        for (l, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::invalid("grid", format!("axis {l} is empty")));
            }
            for &x in axis {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(Error::invalid(
                        "grid",
                        format!("axis {l}: coordinates must be positive and finite"),
                    ));
                }
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(
                    "grid",
                    format!("axis {l}: coordinates must be strictly increasing"),
                ));
            }
            total = total
                .checked_mul(axis.len())
                .ok_or_else(|| Error::invalid("grid", "tensor point count overflows"))?;
        }
        Ok(Grid::Tensor { axes })
    }

    pub fn scatter(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("grid", "needs at least one point"));
        }
        let n_axes = points[0].len();
        if n_axes == 0 {
            return Err(Error::invalid("grid", "points need at least one axis"));
        }
        for (i, p) in points.iter().enumerate() {
            check_point(p, n_axes)?;
            if p.iter().any(|&x| x <= 0.0) {
                return Err(Error::invalid(
                    "grid",
                    format!("point {i}: coordinates must be strictly positive"),
                ));
            }
        }
        Ok(Grid::Scatter { points })
    }

    pub fn n_axes(&self) -> usize {
        match self {
            Grid::Tensor { axes } => axes.len(),
            Grid::Scatter { points } => points[0].len(),
        }
    }

    pub fn n_points(&self) -> usize {
        match self {
            Grid::Tensor { axes } => axes.iter().map(Vec::len).product(),
            Grid::Scatter { points } => points.len(),
        }
    }

    /// Tensor extents, first axis slowest in the flat order.
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Grid::Tensor { axes } => axes.iter().map(Vec::len).collect(),
            Grid::Scatter { points } => vec![points.len()],
        }
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self, Grid::Tensor { .. })
    }

    /// Point at flat index `i`; tensor grids unravel row-major, axis 0 slowest.
    pub fn point(&self, i: usize) -> Vec<f64> {
        match self {
            Grid::Tensor { axes } => {
                let mut rem = i;
                let mut coords = vec![0.0; axes.len()];
                for l in (0..axes.len()).rev() {
                    let m = axes[l].len();
                    coords[l] = axes[l][rem % m];
                    rem /= m;
                }
                coords
            }
            Grid::Scatter { points } => points[i].clone(),
        }
    }

    /// All points in flat order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n_points()).map(|i| self.point(i)).collect()
    }
}

/// One exact draw of the d-channel field on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: Grid,
    /// Channel-major: `values[c][i]` is channel c at flat grid index i.
    pub values: Vec<Vec<f64>>,
    pub hurst: HurstVector,
    pub seed: SeedSpec,
}

impl FieldSample {
    pub fn n_channels(&self) -> usize {
        self.values.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c]
    }

    pub fn value(&self, c: usize, i: usize) -> f64 {
        self.values[c][i]
    }
}

/// Covariance of the selected model between two points.
pub fn model_cov(
    model: CovModel,
    s: &[f64],
    t: &[f64],
    h: &HurstVector,
    tol: f64,
) -> Result<Quadrature> {
    match model {
        CovModel::Sheet => Ok(Quadrature {
            value: field_model::fbs_cov(s, t, h)?,
            abs_error: 0.0,
            evals: 0,
        }),
        CovModel::Liouville => field_model::liouville_cov(s, t, h, tol),
        CovModel::Component(region) => field_model::component_cov(&region, s, t, h, tol),
    }
}

/// Covariance matrix of the model at the given points, with the largest
/// entrywise quadrature error.
pub fn assemble_cov(
    points: &[Vec<f64>],
    model: CovModel,
    h: &HurstVector,
    tol: f64,
) -> Result<(SymMat, f64)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("points", "needs at least one point"));
    }
    for p in points {
        check_point(p, h.n_axes())?;
    }
    for i in 0..n {
        for j in i + 1..n {
            if points[i] == points[j] {
                return Err(Error::invalid(
                    "points",
                    format!("points {i} and {j} coincide"),
                ));
            }
        }
    }
    let mut cov = SymMat::zeros(n);
    let mut max_err = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let q = model_cov(model, &points[i], &points[j], h, tol)?;
            cov.set(i, j, q.value);
            max_err = max_err.max(q.abs_error);
        }
    }
    Ok((cov, max_err))
}

fn axis_cov(h: f64, s: f64, t: f64) -> f64 {
    let two_h = 2.0 * h;
    0.5 * (s.powf(two_h) + t.powf(two_h) - (s - t).abs().powf(two_h))
}

enum Factors {
    Kronecker(Vec<Cholesky>),
    Dense(Cholesky),
}

/// Cached Cholesky factors of the sheet covariance on a fixed grid, so replica
/// loops pay the factorization once.
pub struct FieldSampler {
    grid: Grid,
    hurst: HurstVector,
    factors: Factors,
}

impl FieldSampler {
    pub fn new(grid: Grid, hurst: HurstVector) -> Result<Self> {
        if grid.n_axes() != hurst.n_axes() {
            return Err(Error::invalid(
                "grid",
                format!(
                    "{} axes but the Hurst vector has {}",
                    grid.n_axes(),
                    hurst.n_axes()
                ),
            ));
        }
        let factors = match &grid {
            Grid::Tensor { axes } => {
                let mut per_axis = Vec::with_capacity(axes.len());
                for (l, axis) in axes.iter().enumerate() {
                    let hl = hurst.axis(l);
                    let c = SymMat::from_fn(axis.len(), |i, j| axis_cov(hl, axis[i], axis[j]));
                    per_axis.push(c.cholesky().map_err(|e| {
                        Error::numerical("sampler", format!("axis {l}: {e}"))
                    })?);
                }
                Factors::Kronecker(per_axis)
            }
            Grid::Scatter { points } => {
                let mut cov = SymMat::zeros(points.len());
                for i in 0..points.len() {
                    for j in i..points.len() {
                        cov.set(i, j, field_model::fbs_cov(&points[i], &points[j], &hurst)?);
                    }
                }
                Factors::Dense(cov.cholesky()?)
            }
        };
        Ok(FieldSampler {
            grid,
            hurst,
            factors,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.hurst
    }

    /// One exact d-channel draw; channel c reads stream `seed.stream_id + c`.
    pub fn sample(&self, d: usize, seed: SeedSpec) -> Result<FieldSample> {
        if d == 0 {
            return Err(Error::invalid("d", "needs at least one channel"));
        }
        let n = self.grid.n_points();
        let shape = self.grid.shape();
        let mut values = Vec::with_capacity(d);
        for c in 0..d {
            let spec = seed.stream(seed.stream_id + c as u64);
            let z: Vec<f64> = (0..n).map(|i| normal_at(spec, i as u64)).collect();
            let v = match &self.factors {
                Factors::Kronecker(per_axis) => {
                    let mut data = z;
                    for (axis, chol) in per_axis.iter().enumerate() {
                        data = mode_multiply(&data, &shape, axis, &chol.factor_rows());
                    }
                    data
                }
                Factors::Dense(chol) => chol.lower_mul(&z),
            };
            values.push(v);
        }
        Ok(FieldSample {
            grid: self.grid.clone(),
            values,
            hurst: self.hurst.clone(),
            seed,
        })
    }
}

/// One-off exact sample; build a `FieldSampler` directly for replica loops.
pub fn sample_field(grid: &Grid, h: &HurstVector, d: usize, seed: SeedSpec) -> Result<FieldSample> {
    FieldSampler::new(grid.clone(), h.clone())?.sample(d, seed)
}

/// Var(Z_target | rest) on a prebuilt covariance matrix via Schur complement.
pub fn conditional_variance_matrix(cov: &SymMat, target_index: usize) -> Result<f64> {
    let n = cov.n();
    if target_index >= n {
        return Err(Error::invalid(
            "target_index",
            format!("{target_index} out of range for {n} points"),
        ));
    }
    let sigma_tt = cov.get(target_index, target_index);
    if n == 1 {
        return clamp_variance(sigma_tt, sigma_tt);
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != target_index).collect();
    let block = SymMat::from_fn(n - 1, |i, j| cov.get(others[i], others[j]));
    let chol = block.cholesky()?;
    let v: Vec<f64> = others.iter().map(|&i| cov.get(i, target_index)).collect();
    let x = chol.solve(&v);
    let explained: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
    clamp_variance(sigma_tt - explained, sigma_tt)
}

fn clamp_variance(v: f64, scale: f64) -> Result<f64> {
    let floor = -1e-10 * scale.abs().max(1.0);
    if v < floor {
        return Err(Error::numerical(
            "conditional variance",
            format!("value {v:.3e} is negative beyond the clamp tolerance"),
        ));
    }
    Ok(v.max(0.0))
}

/// Var of the target point given all the others under the chosen model.
pub fn conditional_variance(
    target_index: usize,
    points: &[Vec<f64>],
    model: CovModel,
    h: &HurstVector,
    tol: f64,
) -> Result<f64> {
    let (cov, _) = assemble_cov(points, model, h, tol)?;
    conditional_variance_matrix(&cov, target_index)
}

fn check_axiswise_distinct(points: &[Vec<f64>], n_axes: usize) -> Result<()> {
    for l in 0..n_axes {
        let mut coords: Vec<f64> = points.iter().map(|p| p[l]).collect();
        coords.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        if coords.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                "points",
                format!("axis {l}: coordinates must be pairwise distinct"),
            ));
        }
    }
    Ok(())
}

/// Determinant two ways: squared Cholesky diagonal, and the running product
/// of conditional variances Var(Z_1) ∏ Var(Z_j | Z_1..Z_{j-1}).
pub fn det_cov_dual(
    points: &[Vec<f64>],
    model: CovModel,
    h: &HurstVector,
    tol: f64,
) -> Result<(f64, f64)> {
    check_axiswise_distinct(points, h.n_axes())?;
    let (cov, _) = assemble_cov(points, model, h, tol)?;
    let det_chol = cov.cholesky_exact()?.det();
    let n = cov.n();
    let mut det_seq = cov.get(0, 0);
    for j in 1..n {
        // Fresh LU on each leading block keeps the two routes independent.
        let mut a = vec![0.0; j * j];
        for r in 0..j {
            for c in 0..j {
                a[r * j + c] = cov.get(r, c);
            }
        }
        let lu = lu_decompose(j, &a)?;
        let b: Vec<f64> = (0..j).map(|r| cov.get(r, j)).collect();
        let x = lu.solve(&b);
        let explained: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
        det_seq *= cov.get(j, j) - explained;
    }
    if !(det_chol > 0.0 && det_seq > 0.0) {
        return Err(Error::numerical(
            "det_cov_dual",
            format!("nonpositive determinant: chol {det_chol:.3e}, seq {det_seq:.3e}"),
        ));
    }
    Ok((det_chol, det_seq))
}

/// Conditional variance of the last point against the coordinate-distance sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorialRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// lhs = Var(B(t^n) | earlier points); rhs sums per-axis nearest distances
/// to the earlier points and the origin, each raised to 2H_l.
pub fn sectorial_ratio(points: &[Vec<f64>], h: &HurstVector, tol: f64) -> Result<SectorialRatio> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("points", "needs at least one point"));
    }
    for p in points {
        check_point(p, h.n_axes())?;
        if p.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid(
                "points",
                "coordinates must be strictly positive",
            ));
        }
    }
    let last = &points[n - 1];
    let mut rhs = 0.0;
    for l in 0..h.n_axes() {
        // j = 0 is the origin convention.
        let mut gap = last[l];
        for p in &points[..n - 1] {
            gap = gap.min((last[l] - p[l]).abs());
        }
        rhs += gap.powf(2.0 * h.axis(l));
    }
    if rhs == 0.0 {
        return Err(Error::invalid(
            "points",
            "conditioned point duplicates an earlier point in every axis",
        ));
    }
    let lhs = conditional_variance(n - 1, points, CovModel::Sheet, h, tol)?;
    Ok(SectorialRatio {
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

/// Outcome of the two variance-domination inequalities at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub sheet_var: f64,
    pub kappa_sq: f64,
    pub one_sided_var: f64,
    pub slab_vars: Vec<f64>,
    /// kappa_sq * sheet_var - one_sided_var.
    pub slack_one_sided: f64,
    /// kappa_sq * sheet_var - sum of slab variances.
    pub slack_slab_sum: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks kappa² Var(Σ u B) against the one-sided field and its slab parts.
pub fn variance_domination_check(
    points: &[Vec<f64>],
    weights: &[f64],
    h: &HurstVector,
    eps: f64,
    tol: f64,
) -> Result<DominationReport> {
    if weights.len() != points.len() {
        return Err(Error::invalid(
            "weights",
            format!("{} weights for {} points", weights.len(), points.len()),
        ));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("weights", "must be finite"));
    }
    let kappa = field_model::kappa(h, tol)?;
    let kappa_sq = kappa.value * kappa.value;
    let (cov_sheet, err_sheet) = assemble_cov(points, CovModel::Sheet, h, tol)?;
    let (cov_one_sided, err_one) = assemble_cov(points, CovModel::Liouville, h, tol)?;
    let sheet_var = cov_sheet.quad_form(weights).max(0.0);
    let one_sided_var = cov_one_sided.quad_form(weights).max(0.0);
    let mut slab_vars = Vec::with_capacity(h.n_axes());
    let mut err_slabs = 0.0;
    for l in 0..h.n_axes() {
        let model = CovModel::Component(RegionComponent {
            kind: ComponentKind::Slab(l),
            epsilon: eps,
        });
        let (cov_slab, err_slab) = assemble_cov(points, model, h, tol)?;
        slab_vars.push(cov_slab.quad_form(weights).max(0.0));
        err_slabs += err_slab;
    }
    let slab_sum: f64 = slab_vars.iter().sum();
    let lhs = kappa_sq * sheet_var;
    let slack_one_sided = lhs - one_sided_var;
    let slack_slab_sum = lhs - slab_sum;
    // Quadrature noise scaled by the weight mass must not fake a violation.
    let w1: f64 = weights.iter().map(|w| w.abs()).sum();
    let quad_noise = (err_one + err_slabs + kappa_sq * err_sheet) * w1 * w1
        + 2.0 * kappa.value * kappa.quad_error * sheet_var;
    let tolerance = 1e-9 * lhs.max(one_sided_var).max(slab_sum).max(1.0) + quad_noise;
    let passed = slack_one_sided >= -tolerance && slack_slab_sum >= -tolerance;
    Ok(DominationReport {
        sheet_var,
        kappa_sq,
        one_sided_var,
        slab_vars,
        slack_one_sided,
        slack_slab_sum,
        tolerance,
        passed,
    })
}

/// Outcome of the determinant Hölder inequality at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetHolderReport {
    /// det Cov(sheet)^{-1/2}.
    pub lhs: f64,
    /// det Cov of each slab component, first k axes.
    pub component_dets: Vec<f64>,
    /// Smallest constant making the inequality hold here.
    pub c_min: f64,
    pub supplied_c: Option<f64>,
    pub passed: Option<bool>,
}

/// det Cov(sheet)^{-1/2} ≤ ∏_l C^n det Cov(slab_l)^{-1/(2 p_l)} over the
/// first k axes; reports the smallest workable C.
pub fn det_holder_check(
    points: &[Vec<f64>],
    h: &HurstVector,
    p: &[f64],
    eps: f64,
    supplied_c: Option<f64>,
    tol: f64,
) -> Result<DetHolderReport> {
    let k = p.len();
    if k == 0 || k > h.n_axes() {
        return Err(Error::invalid(
            "p",
            format!("needs between 1 and {} weights", h.n_axes()),
        ));
    }
    if p.iter().any(|&w| !(w >= 1.0) || !w.is_finite()) {
        return Err(Error::invalid("p", "weights must be finite and >= 1"));
    }
    let inv_sum: f64 = p.iter().map(|w| 1.0 / w).sum();
    if (inv_sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(
            "p",
            format!("reciprocals sum to {inv_sum}, expected 1"),
        ));
    }
    check_axiswise_distinct(points, h.n_axes())?;
    let n = points.len();
    let (cov_sheet, _) = assemble_cov(points, CovModel::Sheet, h, tol)?;
    let ln_det_sheet = cov_sheet.cholesky_exact()?.ln_det();
    let ln_lhs = -0.5 * ln_det_sheet;
    let mut component_dets = Vec::with_capacity(k);
    let mut ln_rhs_base = 0.0;
    for l in 0..k {
        let model = CovModel::Component(RegionComponent {
            kind: ComponentKind::Slab(l),
            epsilon: eps,
        });
        let (cov_slab, _) = assemble_cov(points, model, h, tol)?;
        let chol = cov_slab.cholesky_exact().map_err(|_| {
            Error::invalid(
                "points",
                format!("slab {l} covariance is singular at this configuration"),
            )
        })?;
        component_dets.push(chol.det());
        ln_rhs_base += -chol.ln_det() / (2.0 * p[l]);
    }
    // Stay in log space: equality at C = exp((ln lhs - ln rhs)/(n k)).
    let c_min = ((ln_lhs - ln_rhs_base) / (n as f64 * k as f64)).exp();
    let passed = supplied_c.map(|c| {
        if !(c > 0.0) {
            return false;
        }
        let ln_rhs = (n as f64 * k as f64) * c.ln() + ln_rhs_base;
        let lhs = ln_lhs.exp();
        let rhs = ln_rhs.exp();
        lhs <= rhs + 1e-9 * lhs.max(rhs).max(1.0)
    });
    Ok(DetHolderReport {
        lhs: ln_lhs.exp(),
        component_dets,
        c_min,
        supplied_c,
        passed,
    })
}
