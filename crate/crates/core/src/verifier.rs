//! Verification suites over the covariance, moment, and exponent laws:
//! randomized identity sweeps, inequality sweeps with violation counting,
//! the weight-construction invariants, the divergence probe, and the
//! sampled experiments behind the scaling and dimension gates.
//!
//! Randomized sweeps draw every configuration from a counter stream keyed
//! by (master seed, sweep, config index) and merge results in config
//! order, so a suite is byte-identical for any worker count. Large sweeps
//! aggregate into one check per law with the violation count as the value
//! and the worst margin recorded in the inputs; small fixed grids emit one
//! check per grid point. Numerical errors inside a sweep count as
//! violations instead of aborting, so a suite always reports completely.

use serde::Serialize;

use crate::check::{Check, Suite};
use crate::error::{Error, Result};
use crate::exponents::{construct_weights, delta_tau, dirichlet_integral, profile_at};
use crate::field_model::{
    box_cov, fbs_cov, kappa, liouville_cov, slab_lower_bound, ComponentKind, CovModel,
    RegionComponent,
};
use crate::fit::fit_exponent;
use crate::gaussian::{
    assemble_cov, conditional_variance_matrix, det_cov_dual, det_holder_check, sample_field,
    sectorial_ratio, variance_domination_check, FieldSampler, Grid,
};
use crate::hurst::{HurstVector, Rect};
use crate::local_time::{
    box_counting, level_set_points, max_local_time, occupation_check, occupation_histogram,
    LatticeSpec, TestFunction,
};
use crate::moments::{conditioning_identity_check, second_moment_refinement};
use crate::rng::{CounterRng, SeedSpec};

/// Sweep sizes and the master seed for the randomized suites.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyPlan {
    pub master_seed: u64,
    pub det_configs: usize,
    pub selfsim_configs: usize,
    pub additivity_configs: usize,
    pub ineq_configs: usize,
    pub holder_configs: usize,
    pub sectorial_configs: usize,
    pub weight_configs: usize,
}

impl Default for VerifyPlan {
    fn default() -> Self {
        VerifyPlan {
            master_seed: 0xFB5,
            det_configs: 500,
            selfsim_configs: 1000,
            additivity_configs: 100,
            ineq_configs: 10_000,
            holder_configs: 1000,
            sectorial_configs: 2000,
            weight_configs: 10_000,
        }
    }
}

impl VerifyPlan {
    /// Reduced sweep sizes for unit tests and smoke runs.
    pub fn quick() -> Self {
        VerifyPlan {
            master_seed: 0xFB5,
            det_configs: 40,
            selfsim_configs: 80,
            additivity_configs: 12,
            ineq_configs: 150,
            holder_configs: 60,
            sectorial_configs: 80,
            weight_configs: 400,
        }
    }
}

pub const SUITE_NAMES: [&str; 4] = ["identities", "inequalities", "weights", "divergence"];

pub fn run_suite(name: &str, plan: &VerifyPlan) -> Result<Suite> {
    match name {
        "identities" => identity_suite(plan),
        "inequalities" => inequality_suite(plan),
        "weights" => weights_suite(plan),
        "divergence" => divergence_suite(),
        _ => Err(Error::invalid(
            "suite",
            format!("unknown suite {name}; expected one of {SUITE_NAMES:?}"),
        )),
    }
}

pub fn run_all(plan: &VerifyPlan) -> Result<Vec<Suite>> {
    SUITE_NAMES.iter().map(|n| run_suite(n, plan)).collect()
}

// Disjoint stream regions per sweep; each config gets a stride of 16
// streams so sampled configs can consume one stream per channel.
const S_DET: u64 = 0x0100_0000;
const S_SS: u64 = 0x0200_0000;
const S_ADD: u64 = 0x0300_0000;
const S_DOM: u64 = 0x0500_0000;
const S_SLAB: u64 = 0x0600_0000;
const S_HOLDER_CAL: u64 = 0x0700_0000;
const S_HOLDER_VER: u64 = 0x0800_0000;
const S_SECT: u64 = 0x0900_0000;
const S_WEIGHT: u64 = 0x0A00_0000;
const S_OCC: u64 = 0x0B00_0000;
const STRIDE: u64 = 16;

/// Order-stable parallel map; results land at their index, so downstream
/// folds are byte-identical for any worker count.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn config_rng(master: u64, base: u64, i: usize) -> CounterRng {
    CounterRng::new(SeedSpec::new(master, base + i as u64 * STRIDE))
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|j| lo + (hi - lo) * j as f64 / m as f64)
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn draw_hurst(rng: &mut CounterRng, n_axes: usize) -> HurstVector {
    let mut h: Vec<f64> = (0..n_axes).map(|_| rng.uniform_in(0.15, 0.92)).collect();
    // Equal-pair pressure so tie branches of the exponent machinery run.
    if n_axes >= 2 && rng.uniform() < 0.25 {
        h[1] = h[0];
    }
    HurstVector::new(h, 1).expect("draws lie inside (0,1)")
}

/// Points with stratified axis coordinates: one coordinate per slot of
/// [lo, hi], so every axis is pairwise separated by at least 0.2 slot.
fn draw_points(
    rng: &mut CounterRng,
    n_axes: usize,
    n_points: usize,
    lo: f64,
    hi: f64,
) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; n_axes]; n_points];
    let slot = (hi - lo) / n_points as f64;
    for l in 0..n_axes {
        let mut coords: Vec<f64> = (0..n_points)
            .map(|k| lo + (k as f64 + 0.1 + 0.8 * rng.uniform()) * slot)
            .collect();
        // Fisher-Yates so slot order is independent across axes.
        for i in (1..n_points).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            coords.swap(i, j);
        }
        for (k, p) in pts.iter_mut().enumerate() {
            p[l] = coords[k];
        }
    }
    pts
}

/// Fold of per-config margins; a negative (or non-finite) margin or an
/// error counts as one violation.
struct MarginSweep {
    n: usize,
    violations: usize,
    worst: f64,
    worst_at: usize,
    errors: usize,
    first_error: Option<(usize, String)>,
}

impl MarginSweep {
    fn fold(results: Vec<Result<f64>>) -> Self {
        let mut s = MarginSweep {
            n: results.len(),
            violations: 0,
            worst: f64::INFINITY,
            worst_at: 0,
            errors: 0,
            first_error: None,
        };
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(m) => {
                    if !(m >= 0.0) {
                        s.violations += 1;
                    }
                    if m < s.worst {
                        s.worst = m;
                        s.worst_at = i;
                    }
                }
                Err(e) => {
                    s.errors += 1;
                    if s.first_error.is_none() {
                        s.first_error = Some((i, e.to_string()));
                    }
                }
            }
        }
        s
    }

    fn bad(&self) -> f64 {
        (self.violations + self.errors) as f64
    }

    fn inputs(&self, detail: &str) -> String {
        let err = match &self.first_error {
            Some((i, msg)) => format!("; {} errors, first at config {i}: {msg}", self.errors),
            None => String::new(),
        };
        format!(
            "{} configs ({detail}); min margin {:.3e} at config {}{err}",
            self.n, self.worst, self.worst_at
        )
    }
}

/// Fold of per-config deviations; an error scores as infinite deviation.
struct DevSweep {
    n: usize,
    worst: f64,
    worst_at: usize,
    errors: usize,
    first_error: Option<(usize, String)>,
}

impl DevSweep {
    fn fold(results: Vec<Result<f64>>) -> Self {
        let mut s = DevSweep {
            n: results.len(),
            worst: 0.0,
            worst_at: 0,
            errors: 0,
            first_error: None,
        };
        for (i, r) in results.into_iter().enumerate() {
            let d = match r {
                Ok(d) => d,
                Err(e) => {
                    s.errors += 1;
                    if s.first_error.is_none() {
                        s.first_error = Some((i, e.to_string()));
                    }
                    f64::INFINITY
                }
            };
            if d > s.worst || d.is_nan() {
                s.worst = d;
                s.worst_at = i;
            }
        }
        s
    }

    fn inputs(&self, detail: &str) -> String {
        let err = match &self.first_error {
            Some((i, msg)) => format!("; {} errors, first at config {i}: {msg}", self.errors),
            None => String::new(),
        };
        format!(
            "{} configs ({detail}); worst at config {}{err}",
            self.n, self.worst_at
        )
    }
}

fn rel_dev(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Identity suite: dual determinants, the Gaussian conditioning identity,
/// the ordered-simplex Gamma reduction, box-decomposition additivity,
/// dilation self-similarity, and exact occupation bookkeeping.
pub fn identity_suite(plan: &VerifyPlan) -> Result<Suite> {
    let mut suite = Suite::new("identities");
    let master = plan.master_seed;

    // Determinant two ways across random sheet configurations.
    let dets = par_map(plan.det_configs, |i| -> Result<f64> {
        let mut rng = config_rng(master, S_DET, i);
        let n_axes = 1 + (rng.next_u64() % 3) as usize;
        let n_points = 1 + (rng.next_u64() % 4) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let points = draw_points(&mut rng, n_axes, n_points, 0.3, 2.5);
        let (chol, seq) = det_cov_dual(&points, CovModel::Sheet, &h, 1e-9)?;
        Ok(rel_dev(chol, seq))
    });
    let sweep = DevSweep::fold(dets);
    suite.push(Check::upper(
        "identity.det_dual",
        "det Cov = prod_j Var(Z_j | Z_1..Z_{j-1})",
        &sweep.inputs("N<=3, n<=4, sheet model"),
        sweep.worst,
        0.0,
        1e-8,
    ));

    // Conditioning identity on a fixed grid of point sets and exponents.
    let cond_grid: [(&str, Vec<Vec<f64>>, CovModel, Vec<f64>); 4] = [
        ("n1.sheet", vec![vec![0.8]], CovModel::Sheet, vec![0.55]),
        (
            "n2.sheet",
            vec![vec![0.7], vec![1.4]],
            CovModel::Sheet,
            vec![0.55],
        ),
        (
            "n2.sheet2d",
            vec![vec![0.7, 1.1], vec![1.4, 0.6]],
            CovModel::Sheet,
            vec![0.4, 0.7],
        ),
        (
            "n2.liouville",
            vec![vec![0.7], vec![1.4]],
            CovModel::Liouville,
            vec![0.3],
        ),
    ];
    for (tag, points, model, hv) in &cond_grid {
        let h = HurstVector::new(hv.clone(), 1)?;
        for &gamma in &[0.0, 0.5, 1.5, 2.5] {
            let id = format!("identity.conditioning.{tag}.g{gamma}");
            match conditioning_identity_check(points, *model, &h, gamma, 1e-8) {
                Ok((lhs, rhs)) => {
                    let scale = lhs.value.abs().max(rhs.value.abs()).max(1.0);
                    let tol = 1e-6 + (lhs.abs_error + rhs.abs_error) / scale;
                    suite.push(Check::relative(
                        &id,
                        "n-point level integral = (2 pi)^{(n-1)/2} det^{-1/2} x conditional 1-D integral",
                        &format!("{} points, gamma {gamma}", points.len()),
                        lhs.value,
                        rhs.value,
                        tol,
                    ));
                }
                Err(e) => suite.push(Check::relative(
                    &id,
                    "n-point level integral = (2 pi)^{(n-1)/2} det^{-1/2} x conditional 1-D integral",
                    &format!("failed: {e}"),
                    f64::NAN,
                    f64::NAN,
                    1e-6,
                )),
            }
        }
    }

    // Ordered-simplex integral against its Gamma reduction.
    for n in [1usize, 2] {
        for &alpha in &[0.3, 0.5, 0.7] {
            let id = format!("identity.dirichlet.n{n}.a{alpha}");
            let law = "ordered-simplex power integral = Gamma reduction";
            match dirichlet_integral(n, 1.0, 0.5, 0.25, alpha) {
                Ok(rep) => suite.push(Check::relative(
                    &id,
                    law,
                    &format!("n {n}, a 1, r 0.5, s0 0.25, alpha {alpha}, quadrature route"),
                    rep.lhs,
                    rep.rhs_exact,
                    1e-6,
                )),
                Err(e) => suite.push(Check::relative(
                    &id,
                    law,
                    &format!("failed: {e}"),
                    f64::NAN,
                    f64::NAN,
                    1e-6,
                )),
            }
        }
    }
    // The Monte Carlo route at n = 3 agrees within five standard errors.
    let rep = dirichlet_integral(3, 1.0, 0.5, 0.25, 0.5)?;
    let se = rep.mc_stderr.expect("n = 3 runs the Monte Carlo route");
    suite.push(
        Check::absolute(
            "identity.dirichlet.n3.mc",
            "ordered-simplex power integral = Gamma reduction",
            &format!("n 3, alpha 0.5, Monte Carlo route, stderr {se:.3e}"),
            rep.lhs,
            rep.rhs_exact,
            5.0 * se,
        )
        .report_only(),
    );

    // Additivity of the 2^N box decomposition of the one-sided covariance.
    let adds = par_map(plan.additivity_configs, |i| -> Result<f64> {
        let mut rng = config_rng(master, S_ADD, i);
        let n_axes = 1 + (rng.next_u64() % 2) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let eps = rng.uniform_in(0.08, 0.35);
        let pts = draw_points(&mut rng, n_axes, 2, eps + 0.1, 2.2);
        let (s, t) = (&pts[0], &pts[1]);
        let full = liouville_cov(s, t, &h, 1e-10)?;
        let mut sum = 0.0;
        let mut err = full.abs_error;
        for mask in 0..1usize << n_axes {
            let q = box_cov(mask, eps, s, t, &h, 1e-10)?;
            sum += q.value;
            err += q.abs_error;
        }
        let allowed = 1e-9 * full.value.abs().max(sum.abs()).max(1.0) + err;
        Ok(allowed - (sum - full.value).abs())
    });
    let sweep = MarginSweep::fold(adds);
    suite.push(Check::upper(
        "identity.box_additivity",
        "sum of box covariances = one-sided covariance",
        &sweep.inputs("N<=2, split level inside the box"),
        sweep.bad(),
        0.0,
        0.0,
    ));

    // Dilation self-similarity of the sheet covariance, closed form.
    let ss = par_map(plan.selfsim_configs, |i| -> Result<f64> {
        let mut rng = config_rng(master, S_SS, i);
        let n_axes = 1 + (rng.next_u64() % 4) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let s: Vec<f64> = (0..n_axes).map(|_| rng.uniform_in(0.2, 2.4)).collect();
        let t: Vec<f64> = (0..n_axes).map(|_| rng.uniform_in(0.2, 2.4)).collect();
        let a: Vec<f64> = (0..n_axes).map(|_| rng.uniform_in(0.3, 3.0)).collect();
        let s_sc: Vec<f64> = s.iter().zip(&a).map(|(x, y)| x * y).collect();
        let t_sc: Vec<f64> = t.iter().zip(&a).map(|(x, y)| x * y).collect();
        let lhs = fbs_cov(&s_sc, &t_sc, &h)?;
        let factor: f64 = a
            .iter()
            .enumerate()
            .map(|(l, &al)| al.powf(2.0 * h.axis(l)))
            .product();
        let rhs = factor * fbs_cov(&s, &t, &h)?;
        Ok(rel_dev(lhs, rhs))
    });
    let sweep = DevSweep::fold(ss);
    suite.push(Check::upper(
        "identity.self_similarity",
        "K(a s, a t) = prod_l a_l^{2 H_l} K(s, t)",
        &sweep.inputs("N<=4, axiswise dilations in [0.3, 3]"),
        sweep.worst,
        0.0,
        1e-12,
    ));

    // Normalization constant is exactly 1 for the Brownian sheet.
    let kap = kappa(&HurstVector::new(vec![0.5, 0.5], 1)?, 1e-10)?;
    suite.push(Check::relative(
        "identity.kappa_brownian",
        "kappa(1/2, 1/2) = 1",
        "two axes at H = 1/2",
        kap.value,
        1.0,
        1e-10 + 2.0 * kap.quad_error,
    ));

    // Occupation bookkeeping on sampled fields: the time integral of f(B)
    // against the mass-weighted bin sum, and the exact mass balance.
    let occ_cfgs: [(Vec<f64>, usize, usize, f64, f64, f64); 3] = [
        (vec![0.5], 1, 256, 0.5, 1.6, 0.25),
        (vec![0.4, 0.7], 1, 24, 0.8, 1.8, 0.3),
        (vec![0.35], 2, 128, 0.5, 1.6, 0.4),
    ];
    for (i, (hv, d, m, lo, hi, w)) in occ_cfgs.iter().enumerate() {
        let h = HurstVector::new(hv.clone(), *d)?;
        let axes: Vec<Vec<f64>> = (0..h.n_axes()).map(|_| linspace(*lo, *hi, *m)).collect();
        let grid = Grid::tensor(axes)?;
        let seed = SeedSpec::new(master, S_OCC + i as u64 * STRIDE);
        let sample = sample_field(&grid, &h, *d, seed)?;
        let pad = 0.1 * (hi - lo);
        let t_box = Rect::new(
            vec![lo + pad; h.n_axes()],
            vec![hi - pad; h.n_axes()],
        )?;
        let lattice = LatticeSpec { bin_width: *w };
        let (direct, via) = occupation_check(&sample, &t_box, &lattice, &TestFunction::One)?;
        suite.push(Check::relative(
            &format!("identity.occupation.mass.{i}"),
            "time integral of 1 = binned mass plus overflow",
            &format!("N {}, d {d}, {m} steps per axis", h.n_axes()),
            direct,
            via,
            1e-12,
        ));
        let ltf = occupation_histogram(&sample, &t_box, &lattice)?;
        let (binned, total, volume) = ltf.mass_balance();
        suite.push(Check::relative(
            &format!("identity.occupation.volume.{i}"),
            "accumulated cell volume = Lebesgue volume of T",
            &format!("N {}, d {d}", h.n_axes()),
            total,
            volume,
            1e-12,
        ));
        suite.push(Check::relative(
            &format!("identity.occupation.balance.{i}"),
            "binned mass plus overflow = accumulated cell volume",
            &format!("N {}, d {d}", h.n_axes()),
            binned,
            total,
            1e-12,
        ));
        let bump = TestFunction::GaussianBump {
            center: vec![0.0; *d],
            width: 0.6,
        };
        let (direct, via) = occupation_check(&sample, &t_box, &lattice, &bump)?;
        suite.push(
            Check::relative(
                &format!("identity.occupation.bump.{i}"),
                "time integral of f(B) = mass-weighted bin sum of f",
                &format!("Gaussian bump, bin width {w}; bin-center evaluation bias expected"),
                direct,
                via,
                0.05,
            )
            .report_only(),
        );
    }

    Ok(suite)
}

/// Inequality suite: the two variance dominations, the certified slab
/// strip bound, the kappa product bound, the determinant Holder constant
/// in calibrate-then-verify form, and the sectorial ratio report.
pub fn inequality_suite(plan: &VerifyPlan) -> Result<Suite> {
    let mut suite = Suite::new("inequalities");
    let master = plan.master_seed;

    // Both domination inequalities on one random configuration stream.
    let doms = par_map(plan.ineq_configs, |i| -> Result<(f64, f64)> {
        let mut rng = config_rng(master, S_DOM, i);
        let n_axes = 1 + (rng.next_u64() % 2) as usize;
        let n_points = 1 + (rng.next_u64() % 3) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let eps = rng.uniform_in(0.05, 0.35);
        let points = draw_points(&mut rng, n_axes, n_points, eps + 0.05, 2.2);
        let weights: Vec<f64> = (0..n_points).map(|_| rng.uniform_in(-1.5, 1.5)).collect();
        let rep = variance_domination_check(&points, &weights, &h, eps, 1e-8)?;
        Ok((
            rep.slack_one_sided + rep.tolerance,
            rep.slack_slab_sum + rep.tolerance,
        ))
    });
    let mut one_sided = Vec::with_capacity(doms.len());
    let mut slab_sum = Vec::with_capacity(doms.len());
    for r in doms {
        match r {
            Ok((a, b)) => {
                one_sided.push(Ok(a));
                slab_sum.push(Ok(b));
            }
            Err(e) => {
                one_sided.push(Err(Error::numerical("domination", e.to_string())));
                slab_sum.push(Err(e));
            }
        }
    }
    let sweep = MarginSweep::fold(one_sided);
    suite.push(Check::upper(
        "inequality.domination.one_sided",
        "kappa^2 Var(sum u B) >= Var(sum u B_one-sided)",
        &sweep.inputs("N<=2, n<=3, signed weights"),
        sweep.bad(),
        0.0,
        0.0,
    ));
    let sweep = MarginSweep::fold(slab_sum);
    suite.push(Check::upper(
        "inequality.domination.slab_sum",
        "kappa^2 Var(sum u B) >= sum_l Var(sum u B_slab_l)",
        &sweep.inputs("N<=2, n<=3, signed weights"),
        sweep.bad(),
        0.0,
        0.0,
    ));

    // Certified strip bound for the slab conditional variance.
    let slabs = par_map(plan.ineq_configs, |i| -> Result<f64> {
        let mut rng = config_rng(master, S_SLAB, i);
        let n_axes = 1 + (rng.next_u64() % 2) as usize;
        let n_points = 1 + (rng.next_u64() % 3) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let eps = rng.uniform_in(0.05, 0.3);
        let axis = (rng.next_u64() % n_axes as u64) as usize;
        let mut points = draw_points(&mut rng, n_axes, n_points, eps + 0.05, 2.2);
        // Conditioning points sit below the target along the slab axis.
        points.sort_by(|a, b| a[axis].total_cmp(&b[axis]));
        let t_prev = if n_points >= 2 {
            points[n_points - 2][axis]
        } else {
            eps
        };
        let model = CovModel::Component(RegionComponent {
            kind: ComponentKind::Slab(axis),
            epsilon: eps,
        });
        let (cov, err) = assemble_cov(&points, model, &h, 1e-9)?;
        let cv = conditional_variance_matrix(&cov, n_points - 1)?;
        let bound = slab_lower_bound(axis, eps, &points[n_points - 1], t_prev, &h)?;
        let tol = 1e-9 * cv.max(bound).max(1.0) + 4.0 * (n_points * n_points) as f64 * err;
        Ok(cv + tol - bound)
    });
    let sweep = MarginSweep::fold(slabs);
    suite.push(Check::upper(
        "inequality.slab_strip_bound",
        "Var(Z_n | earlier) >= white-noise mass of the trailing strip",
        &sweep.inputs("N<=2, n<=3, conditioning below the strip"),
        sweep.bad(),
        0.0,
        0.0,
    ));

    // kappa^2 against the product of 1/(2 H_l) on a 20-point grid.
    let mut grid: Vec<Vec<f64>> = (0..14)
        .map(|k| vec![0.08 + 0.84 * k as f64 / 13.0])
        .collect();
    grid.extend([
        vec![0.3, 0.7],
        vec![0.5, 0.5],
        vec![0.25, 0.9],
        vec![0.6, 0.8],
        vec![0.15, 0.4],
        vec![0.85, 0.85],
    ]);
    for (k, hv) in grid.iter().enumerate() {
        let h = HurstVector::new(hv.clone(), 1)?;
        let kap = kappa(&h, 1e-10)?;
        let lhs: f64 = hv.iter().map(|&x| 1.0 / (2.0 * x)).product();
        let rhs = kap.value * kap.value;
        let tol = 1e-9 * lhs.max(rhs).max(1.0) + 2.0 * kap.value * kap.quad_error;
        suite.push(Check::upper(
            &format!("inequality.kappa_product.{k}"),
            "kappa^2 >= prod_l 1/(2 H_l)",
            &format!("H {hv:?}"),
            lhs,
            rhs,
            tol,
        ));
    }

    // Determinant Holder constant: calibrate on one stream, then verify
    // the padded constant on a fresh stream.
    let holder_cfg = |base: u64, i: usize, supplied: Option<f64>| -> Result<f64> {
        let mut rng = config_rng(master, base, i);
        let n_points = 1 + (rng.next_u64() % 3) as usize;
        let h = draw_hurst(&mut rng, 2);
        let eps = rng.uniform_in(0.05, 0.3);
        let points = draw_points(&mut rng, 2, n_points, eps + 0.05, 2.2);
        let u = rng.uniform_in(0.25, 0.75);
        let p = vec![1.0 / u, 1.0 / (1.0 - u)];
        let rep = det_holder_check(&points, &h, &p, eps, supplied, 1e-9)?;
        Ok(rep.c_min)
    };
    let cal = par_map(plan.holder_configs, |i| holder_cfg(S_HOLDER_CAL, i, None));
    let mut c_max = 0.0f64;
    let mut cal_errors = 0usize;
    for r in &cal {
        match r {
            Ok(c) => c_max = c_max.max(*c),
            Err(_) => cal_errors += 1,
        }
    }
    if cal_errors > 0 || !(c_max > 0.0) {
        return Err(Error::numerical(
            "holder calibration",
            format!("{cal_errors} failures while calibrating the constant"),
        ));
    }
    let c_pad = 1.25 * c_max;
    let ver = par_map(plan.holder_configs, |i| -> Result<f64> {
        let mut rng = config_rng(master, S_HOLDER_VER, i);
        let n_points = 1 + (rng.next_u64() % 3) as usize;
        let h = draw_hurst(&mut rng, 2);
        let eps = rng.uniform_in(0.05, 0.3);
        let points = draw_points(&mut rng, 2, n_points, eps + 0.05, 2.2);
        let u = rng.uniform_in(0.25, 0.75);
        let p = vec![1.0 / u, 1.0 / (1.0 - u)];
        let rep = det_holder_check(&points, &h, &p, eps, Some(c_pad), 1e-9)?;
        Ok(c_pad - rep.c_min)
    });
    let sweep = MarginSweep::fold(ver);
    suite.push(Check::upper(
        "inequality.det_holder",
        "det Cov(sheet)^{-1/2} <= C^{n k} prod_l det Cov(slab_l)^{-1/(2 p_l)}",
        &sweep.inputs(&format!(
            "holdout stream, C = {c_pad:.6} from {} calibration configs",
            plan.holder_configs
        )),
        sweep.bad(),
        0.0,
        0.0,
    ));

    // Sectorial ratio: existential lower constant, reported not asserted.
    let sect = par_map(plan.sectorial_configs, |i| -> Result<f64> {
        let mut rng = config_rng(master, S_SECT, i);
        let n_axes = 1 + (rng.next_u64() % 3) as usize;
        let n_points = 1 + (rng.next_u64() % 4) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let points = draw_points(&mut rng, n_axes, n_points, 0.2, 2.4);
        Ok(sectorial_ratio(&points, &h, 1e-9)?.ratio)
    });
    let mut min_ratio = f64::INFINITY;
    let mut at = 0usize;
    let mut errors = 0usize;
    for (i, r) in sect.iter().enumerate() {
        match r {
            Ok(v) => {
                if *v < min_ratio {
                    min_ratio = *v;
                    at = i;
                }
            }
            Err(_) => errors += 1,
        }
    }
    suite.push(
        Check::upper(
            "inequality.sectorial_ratio",
            "Var(B(t_n) | earlier) / sum_l gap_l^{2 H_l} stays bounded below",
            &format!(
                "{} configs, min ratio {min_ratio:.6e} at config {at}, {errors} errors",
                plan.sectorial_configs
            ),
            0.0,
            min_ratio,
            0.0,
        )
        .report_only(),
    );

    // Simplex envelope on holdout inputs away from the calibration grid.
    for (k, &(n, a, r, s0_frac, alpha)) in [
        (1usize, 0.75, 0.3, 0.4, 0.35),
        (2, 1.4, 0.8, 0.8, 0.65),
        (2, 0.6, 0.45, 0.25, 0.45),
    ]
    .iter()
    .enumerate()
    {
        let s0 = s0_frac * a / 2.0;
        let rep = dirichlet_integral(n, a, r, s0, alpha)?;
        suite.push(Check::upper(
            &format!("inequality.simplex_envelope.{k}"),
            "ordered-simplex integral <= c^n (n!)^{alpha-1} r^{n-(n-1) alpha}",
            &format!("n {n}, a {a}, r {r}, s0 {s0}, alpha {alpha}"),
            rep.lhs,
            rep.rhs_bound,
            1e-9 * rep.rhs_bound.max(1.0),
        ));
    }

    Ok(suite)
}

/// Weight-construction invariants over random admissible (H, q, delta)
/// plus the closed-form corner cases.
pub fn weights_suite(plan: &VerifyPlan) -> Result<Suite> {
    let mut suite = Suite::new("weights");
    let master = plan.master_seed;

    // Margins per config for the six invariants, or an error.
    type Margins = [f64; 6];
    let runs = par_map(plan.weight_configs, |i| -> Result<Margins> {
        let mut rng = config_rng(master, S_WEIGHT, i);
        let n_axes = 1 + (rng.next_u64() % 5) as usize;
        let h = draw_hurst(&mut rng, n_axes);
        let q = rng.uniform_in(0.02, 0.98) * h.inv_sum();
        let dt = delta_tau(&h, q)?;
        let delta = dt * rng.uniform_in(0.05, 0.95);
        let w = construct_weights(&h, q, delta)?;
        let tau = w.tau();
        let sorted = h.sorted();
        let active = &sorted[..tau];
        let alpha_tau: f64 = active.iter().map(|hl| 1.0 / hl).sum::<f64>() - q;
        let inv_sum: f64 = w.p.iter().map(|p| 1.0 / p).sum();
        let m_sum = 1e-12 - (inv_sum - 1.0).abs();
        let m_sub = active
            .iter()
            .zip(&w.p)
            .map(|(hl, pl)| 1.0 - hl * q / pl)
            .fold(f64::INFINITY, f64::min);
        let h_tau = active[tau - 1];
        let lhs_tradeoff: f64 = (1.0 - delta)
            * active
                .iter()
                .zip(&w.p)
                .map(|(hl, pl)| hl * q / pl)
                .sum::<f64>();
        let rhs_tradeoff: f64 =
            h_tau * q + tau as f64 - active.iter().map(|hl| h_tau / hl).sum::<f64>();
        let m_tradeoff = rhs_tradeoff + 1e-12 - lhs_tradeoff;
        let h0 = active[w.ell0];
        let m_pigeon = 1.0 - (h0 * q / w.p[w.ell0] + 2.0 * h0 * w.rho);
        let eps_sum: f64 = active
            .iter()
            .zip(&w.p)
            .map(|(hl, pl)| (1.0 - hl * q / pl) / hl)
            .sum();
        let m_alpha = 1e-10 - (eps_sum - alpha_tau).abs();
        let eps0 = 1.0 - h0 * q / w.p[w.ell0];
        let m_share = eps0 - h0 * alpha_tau / tau as f64 + 1e-12;
        Ok([m_sum, m_sub, m_tradeoff, m_pigeon, m_alpha, m_share])
    });
    let mut per_law: Vec<Vec<Result<f64>>> = (0..6).map(|_| Vec::with_capacity(runs.len())).collect();
    for r in runs {
        match r {
            Ok(m) => {
                for (k, v) in m.iter().enumerate() {
                    per_law[k].push(Ok(*v));
                }
            }
            Err(e) => {
                for lane in per_law.iter_mut() {
                    lane.push(Err(Error::numerical("weights", e.to_string())));
                }
            }
        }
    }
    let detail = "random admissible (H, q, delta), N<=5";
    let laws: [(&str, &str); 6] = [
        ("weights.reciprocal_sum", "sum_l 1/p_l = 1"),
        ("weights.subcritical", "H_l q / p_l < 1 for every l <= tau"),
        (
            "weights.tradeoff",
            "(1-delta) sum_l H_l q/p_l <= H_tau q + tau - sum_l H_tau/H_l",
        ),
        (
            "weights.pigeonhole_margin",
            "H_l0 q / p_l0 + 2 H_l0 rho < 1",
        ),
        ("weights.epsilon_sum", "sum_l (1 - H_l q/p_l)/H_l = alpha_tau"),
        (
            "weights.epsilon_share",
            "eps_l0 >= H_l0 alpha_tau / tau",
        ),
    ];
    for (k, (id, law)) in laws.iter().enumerate() {
        let sweep = MarginSweep::fold(std::mem::take(&mut per_law[k]));
        suite.push(Check::upper(id, law, &sweep.inputs(detail), sweep.bad(), 0.0, 0.0));
    }

    // Closed-form corner cases of the construction.
    let h = HurstVector::new(vec![0.5, 0.5], 1)?;
    let w = construct_weights(&h, 3.0, 0.5)?;
    suite.push(Check::relative(
        "weights.example.equal_pair",
        "equal pair at H q = 3/2 gives 1/p_1 = 4/9",
        "H (0.5, 0.5), q 3, delta 0.5",
        1.0 / w.p[0],
        4.0 / 9.0,
        1e-12,
    ));
    let h = HurstVector::new(vec![0.4, 0.6], 1)?;
    let w = construct_weights(&h, 3.0, 0.1)?;
    suite.push(Check::relative(
        "weights.example.unequal_pair",
        "unequal pair construction gives 1/p_1 = 16/27",
        "H (0.4, 0.6), q 3, delta 0.1",
        1.0 / w.p[0],
        16.0 / 27.0,
        1e-12,
    ));
    let lhs: f64 = 0.9 * (0.4 * 3.0 / w.p[0] + 0.6 * 3.0 / w.p[1]);
    suite.push(Check::relative(
        "weights.example.tradeoff_equality",
        "the two-axis construction attains the trade-off bound with equality",
        "H (0.4, 0.6), q 3, delta 0.1",
        lhs,
        1.3,
        1e-12,
    ));

    // Regime index and scaling exponent at spatial dimension one.
    let prof = profile_at(&HurstVector::new(vec![0.4, 0.6], 1)?, 1.0)?;
    suite.push(Check::absolute(
        "weights.profile.anisotropic",
        "tau = 1 and beta_tau = 1.6 at H (0.4, 0.6), d 1",
        &format!("tau {}", prof.tau),
        prof.beta_tau + (prof.tau as f64 - 1.0),
        1.6,
        1e-12,
    ));
    let prof = profile_at(&HurstVector::new(vec![0.5, 0.5], 1)?, 1.0)?;
    suite.push(Check::absolute(
        "weights.profile.brownian",
        "tau = 1 and beta_tau = 1.5 at H (0.5, 0.5), d 1",
        &format!("tau {}", prof.tau),
        prof.beta_tau + (prof.tau as f64 - 1.0),
        1.5,
        1e-12,
    ));

    Ok(suite)
}

/// Divergence probe: the diagonal-tube refinement of the second moment
/// converges for d H < 1 and grows without bound for d H > 1.
pub fn divergence_suite() -> Result<Suite> {
    let mut suite = Suite::new("divergence");
    let t_box = Rect::new(vec![1.0], vec![2.0])?;

    let h1 = HurstVector::new(vec![0.6], 1)?;
    let conv = second_moment_refinement(&[0.0], &t_box, &h1, 1, 0.25, 24, 1e-6)?;
    suite.push(Check::upper(
        "divergence.converges.d1",
        "shell masses decay geometrically when d H < 1",
        &format!(
            "H 0.6, d 1, 24 shells; extrapolated {:?}",
            conv.extrapolated
        ),
        conv.mean_ratio,
        0.95,
        0.0,
    ));
    suite.push(Check::absolute(
        "divergence.ratio.d1",
        "shell ratio tends to 2^{d H - 1}",
        "H 0.6, d 1; limit 2^{-0.4}",
        conv.mean_ratio,
        0.4f64.exp2().recip(),
        0.02,
    ));

    let h2 = HurstVector::new(vec![0.6], 2)?;
    let div = second_moment_refinement(&[0.0, 0.0], &t_box, &h2, 2, 0.25, 24, 1e-6)?;
    suite.push(Check::upper(
        "divergence.grows.d2",
        "shell masses grow when d H > 1",
        "H 0.6, d 2, 24 shells",
        1.0,
        div.mean_ratio,
        0.0,
    ));
    suite.push(Check::absolute(
        "divergence.ratio.d2",
        "shell ratio tends to 2^{d H - 1}",
        "H 0.6, d 2; limit 2^{0.2}",
        div.mean_ratio,
        0.2f64.exp2(),
        0.02,
    ));
    let growth = div.values.last().expect("shells ran") / div.values[0];
    suite.push(Check::upper(
        "divergence.unbounded.d2",
        "refined values grow without bound when d H > 1",
        &format!(
            "H 0.6, d 2; value {:.4e} at width {:.2e} vs {:.4e} at width {:.2e}",
            div.values.last().expect("shells ran"),
            div.widths.last().expect("shells ran"),
            div.values[0],
            div.widths[0],
        ),
        4.0,
        growth,
        0.0,
    ));
    if div.extrapolated.is_some() {
        return Err(Error::numerical(
            "divergence",
            "divergent configuration produced a finite extrapolation",
        ));
    }

    Ok(suite)
}

/// Empirical first moment of Brownian local time at zero over [1, 2].
#[derive(Debug, Clone, Serialize)]
pub struct MomentExperiment {
    pub replicas: usize,
    pub grid_steps: usize,
    pub bin_width: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub exact: f64,
}

/// Monte Carlo estimate of E[L(0, [1,2])] for Brownian motion against the
/// closed form sqrt(2/pi) (sqrt(2) - 1).
pub fn brownian_moment_experiment(
    replicas: usize,
    grid_steps: usize,
    bin_width: f64,
    seed: SeedSpec,
) -> Result<MomentExperiment> {
    if replicas < 2 {
        return Err(Error::invalid("replicas", "need at least two replicas"));
    }
    let h = HurstVector::new(vec![0.5], 1)?;
    let grid = Grid::tensor(vec![linspace(1.0, 2.0, grid_steps)])?;
    let sampler = FieldSampler::new(grid, h)?;
    let t_box = Rect::new(vec![1.0], vec![2.0])?;
    let lattice = LatticeSpec { bin_width };
    let vals = par_map(replicas, |k| -> Result<f64> {
        let sample = sampler.sample(1, seed.stream(seed.stream_id + k as u64))?;
        let ltf = occupation_histogram(&sample, &t_box, &lattice)?;
        Ok(ltf.density_at(&[0.0]))
    });
    let vals: Result<Vec<f64>> = vals.into_iter().collect();
    let vals = vals?;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for &v in &vals {
        sum += v;
        sumsq += v * v;
    }
    let m = replicas as f64;
    let mean = sum / m;
    let var = (sumsq / m - mean * mean).max(0.0);
    Ok(MomentExperiment {
        replicas,
        grid_steps,
        bin_width,
        mc_mean: mean,
        mc_stderr: (var / m).sqrt(),
        exact: (2.0 / std::f64::consts::PI).sqrt() * (2f64.sqrt() - 1.0),
    })
}

/// Log-log slope of a radius ladder of medians.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeExperiment {
    pub radii: Vec<f64>,
    pub medians: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
    pub replicas: usize,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 {
        return Err(Error::invalid("radii", "need at least three radii"));
    }
    if radii.windows(2).any(|w| w[0] <= w[1]) || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::invalid("radii", "must be positive and strictly decreasing"));
    }
    Ok(())
}

/// Largest local time over shrinking cubes; the median slope estimates
/// N - H_1 d for equal Hurst indices.
pub fn level_star_slope(
    h: &HurstVector,
    d: usize,
    center: &[f64],
    radii: &[f64],
    grid_m: usize,
    replicas: usize,
    seed: SeedSpec,
) -> Result<SlopeExperiment> {
    check_radii(radii)?;
    if center.len() != h.n_axes() {
        return Err(Error::invalid("center", "dimension mismatch with H"));
    }
    if center.iter().any(|&c| c - radii[0] <= 0.0) {
        return Err(Error::invalid("center", "largest cube leaves the positive orthant"));
    }
    if grid_m < 8 || replicas < 2 {
        return Err(Error::invalid("grid_m", "need grid_m >= 8 and replicas >= 2"));
    }
    let h1 = h.min();
    let mut medians = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let axes: Vec<Vec<f64>> = center
            .iter()
            .map(|&c| linspace(c - r, c + r, grid_m))
            .collect();
        let sampler = FieldSampler::new(Grid::tensor(axes)?, h.clone())?;
        let t_box = Rect::new(
            center.iter().map(|&c| c - r).collect(),
            center.iter().map(|&c| c + r).collect(),
        )?;
        // Bin width tracks the per-cell oscillation scale, so the ladder
        // scales self-similarly in r.
        let lattice = LatticeSpec {
            bin_width: 4.2 * (2.0 * r / grid_m as f64).powf(h1),
        };
        let vals = par_map(replicas, |k| -> Result<f64> {
            let stream = seed.stream_id + ((i * replicas + k) * d) as u64;
            let sample = sampler.sample(d, seed.stream(stream))?;
            let ltf = occupation_histogram(&sample, &t_box, &lattice)?;
            Ok(max_local_time(&ltf).0)
        });
        let vals: Result<Vec<f64>> = vals.into_iter().collect();
        medians.push(median(vals?));
    }
    let pairs: Vec<(f64, f64)> = radii.iter().copied().zip(medians.iter().copied()).collect();
    let fit = fit_exponent(&pairs, None)?;
    Ok(SlopeExperiment {
        radii: radii.to_vec(),
        medians,
        slope: fit.exponent,
        stderr: fit.exponent_stderr,
        replicas,
    })
}

/// Median sup-oscillation over shrinking balls; the slope estimates H_1.
pub fn oscillation_slope(
    h: &HurstVector,
    center: &[f64],
    radii: &[f64],
    spacing: f64,
    replicas: usize,
    seed: SeedSpec,
) -> Result<SlopeExperiment> {
    check_radii(radii)?;
    if center.len() != h.n_axes() {
        return Err(Error::invalid("center", "dimension mismatch with H"));
    }
    if !(spacing > 0.0) || replicas < 2 {
        return Err(Error::invalid("spacing", "need spacing > 0 and replicas >= 2"));
    }
    let steps = (radii[0] / spacing).ceil() as i64 + 1;
    if center.iter().any(|&c| c - steps as f64 * spacing <= 0.0) {
        return Err(Error::invalid("center", "grid leaves the positive orthant"));
    }
    let axes: Vec<Vec<f64>> = center
        .iter()
        .map(|&c| (-steps..=steps).map(|j| c + j as f64 * spacing).collect())
        .collect();
    let sampler = FieldSampler::new(Grid::tensor(axes)?, h.clone())?;
    let per_rep = par_map(replicas, |k| -> Result<Vec<f64>> {
        let sample = sampler.sample(1, seed.stream(seed.stream_id + k as u64))?;
        Ok(crate::local_time::oscillation_stats(&sample, center, radii)?.sup_osc)
    });
    let mut medians = Vec::with_capacity(radii.len());
    let reps: Result<Vec<Vec<f64>>> = per_rep.into_iter().collect();
    let reps = reps?;
    for j in 0..radii.len() {
        medians.push(median(reps.iter().map(|r| r[j]).collect()));
    }
    let pairs: Vec<(f64, f64)> = radii.iter().copied().zip(medians.iter().copied()).collect();
    let fit = fit_exponent(&pairs, None)?;
    Ok(SlopeExperiment {
        radii: radii.to_vec(),
        medians,
        slope: fit.exponent,
        stderr: fit.exponent_stderr,
        replicas,
    })
}

/// Averaged box-counting dimension of sampled zero sets.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionExperiment {
    pub dims: Vec<f64>,
    pub mean_dim: f64,
    pub stderr: f64,
    pub used: usize,
    pub skipped: usize,
    pub level_tol: f64,
}

/// Box-counting slope of the level set x over replicas; replicas whose
/// discrete level set misses some counting level are skipped.
#[allow(clippy::too_many_arguments)]
pub fn box_dimension(
    h: &HurstVector,
    d: usize,
    x: &[f64],
    t_box: &Rect,
    grid_m: usize,
    levels: usize,
    level_tol: f64,
    replicas: usize,
    seed: SeedSpec,
) -> Result<DimensionExperiment> {
    if levels < 3 {
        return Err(Error::invalid("levels", "need at least three counting levels"));
    }
    if replicas < 2 || grid_m < 1 << levels {
        return Err(Error::invalid(
            "replicas",
            "need replicas >= 2 and grid_m >= 2^levels",
        ));
    }
    let axes: Vec<Vec<f64>> = (0..t_box.dim())
        .map(|l| linspace(t_box.lo()[l], t_box.hi()[l], grid_m))
        .collect();
    let sampler = FieldSampler::new(Grid::tensor(axes)?, h.clone())?;
    let runs = par_map(replicas, |k| -> Result<Option<f64>> {
        let sample = sampler.sample(d, seed.stream(seed.stream_id + (k * d) as u64))?;
        let pts = level_set_points(&sample, x, level_tol)?;
        let counts = box_counting(&pts, t_box, levels)?;
        if counts.iter().any(|&(_, c)| c == 0) {
            return Ok(None);
        }
        let pairs: Vec<(f64, f64)> = counts
            .iter()
            .map(|&(scale, c)| (scale, c as f64))
            .collect();
        Ok(Some(-fit_exponent(&pairs, None)?.exponent))
    });
    let mut dims = Vec::with_capacity(replicas);
    let mut skipped = 0usize;
    for r in runs {
        match r? {
            Some(v) => dims.push(v),
            None => skipped += 1,
        }
    }
    if dims.len() < replicas / 2 {
        return Err(Error::numerical(
            "box_dimension",
            format!("level set missed the counting levels in {skipped} of {replicas} replicas"),
        ));
    }
    let m = dims.len() as f64;
    let mean = dims.iter().sum::<f64>() / m;
    let var = dims.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m * (m - 1.0)).max(1.0);
    Ok(DimensionExperiment {
        mean_dim: mean,
        stderr: var.sqrt(),
        used: dims.len(),
        skipped,
        level_tol,
        dims,
    })
}
