//! Covariance kernels of the anisotropic Brownian sheet, its one-sided
//! Liouville relative, the moving-average kernel and its normalization
//! constant, and the corner/slab/remainder region decomposition.
//!
//! All integrals here factor across axes, so every quadrature is
//! one-dimensional. Kernels with an interior power singularity are
//! integrated after an exact power substitution that flattens the
//! integrand; no truncation is involved anywhere, including the
//! half-line tail of the normalization constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurst::{check_point, HurstVector, Rect};
use crate::quad::{self, Quadrature};

/// Product covariance of the sheet itself: ∏ ½(s^{2H} + t^{2H} − |s−t|^{2H}).
pub fn fbs_cov(s: &[f64], t: &[f64], h: &HurstVector) -> Result<f64> {
    check_point(s, h.n_axes())?;
    check_point(t, h.n_axes())?;
    let mut prod = 1.0;
    for l in 0..h.n_axes() {
        let two_h = 2.0 * h.axis(l);
        prod *= 0.5 * (s[l].powf(two_h) + t[l].powf(two_h) - (s[l] - t[l]).abs().powf(two_h));
    }
    Ok(prod)
}

/// (x)_+^a with the convention that the value is 0 whenever x ≤ 0, even for a = 0.
fn pow_plus(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        x.powf(a)
    } else {
        0.0
    }
}

/// Moving-average kernel ((t−s)_+)^{h−1/2} − ((−s)_+)^{h−1/2}.
///
/// At h = 1/2 both powers are zero-exponent plus-powers, so the value is the
/// indicator of the half-open interval [0, t) evaluated at s.
pub fn kernel_g(h: f64, t: f64, s: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::invalid("h", format!("{h} lies outside (0,1)")));
    }
    let a = h - 0.5;
    Ok(pow_plus(t - s, a) - pow_plus(-s, a))
}

/// Normalization constant of the moving-average representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub value: f64,
    pub per_axis: Vec<f64>,
    pub quad_error: f64,
}

/// κ_H with per-axis factors: per_axis[ℓ]² = ∫_{−∞}^1 g_{H_ℓ}(1,s)² ds.
pub fn kappa(h: &HurstVector, tol: f64) -> Result<Kappa> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let mut per_axis = Vec::with_capacity(h.n_axes());
    let mut value = 1.0;
    let mut rel = 0.0;
    for l in 0..h.n_axes() {
        let (sq, err) = kappa_axis_sq(h.axis(l), tol)?;
        let axis = sq.sqrt();
        per_axis.push(axis);
        value *= axis;
        rel += 0.5 * err / sq;
    }
    Ok(Kappa {
        value,
        per_axis,
        quad_error: value * rel,
    })
}

/// One squared axis factor ∫_{−∞}^1 g_h(1,s)² ds, split into three exact pieces.
fn kappa_axis_sq(h: f64, tol: f64) -> Result<(f64, f64)> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::invalid("h", format!("{h} lies outside (0,1)")));
    }
    let a = h - 0.5;
    // On [0,1] the kernel is (1−s)^{h−1/2} exactly, so this piece is 1/(2h).
    let base = 1.0 / (2.0 * h);

    // Piece over [−1, 0].
    let near = if h >= 0.5 {
        quad::integrate(
            |s| {
                let g = (1.0 - s).powf(a) - (-s).powf(a);
                g * g
            },
            -1.0,
            0.0,
            tol,
        )?
    } else {
        // Substituting u = (−s)^{2h} absorbs the s → 0 singularity; the
        // expanded integrand's three terms each stay bounded on [0,1].
        let inv2h = 1.0 / (2.0 * h);
        quad::integrate(
            move |u| {
                let w = u.powf(inv2h);
                let big_a = (1.0 + w).powf(a);
                let t1 = big_a * big_a * u.powf(inv2h - 1.0);
                let t2 = -2.0 * big_a * u.powf((0.5 - h) * inv2h);
                (t1 + t2 + 1.0) * inv2h
            },
            0.0,
            1.0,
            tol,
        )?
    };

    // Tail over (−∞, −1]: v = −1/s maps it to (0,1] with integrand
    // v^{1−2h} ψ(v)², ψ(v) = ((1+v)^{h−1/2} − 1)/v, and the further
    // substitution v = w^{1/(2−2h)} makes the power factor identically 1.
    let c = 1.0 / (2.0 - 2.0 * h);
    let far = quad::integrate(
        move |w| {
            let v = w.powf(c);
            let p = psi(a, v);
            c * p * p
        },
        0.0,
        1.0,
        tol,
    )?;

    Ok((base + near.value + far.value, near.abs_error + far.abs_error))
}

/// ((1+v)^a − 1)/v evaluated without cancellation near v = 0.
fn psi(a: f64, v: f64) -> f64 {
    if v < 1e-8 {
        a * (1.0 + 0.5 * (a - 1.0) * v)
    } else {
        (a * v.ln_1p()).exp_m1() / v
    }
}

/// One axis factor ∫_lo^hi (s−r)^{h−1/2} (t−r)^{h−1/2} dr of the one-sided kernel.
///
/// Requires 0 ≤ lo ≤ hi ≤ min(s,t). For h < 1/2 the integrand has an
/// integrable singularity at r = min(s,t); the substitution
/// u = (min(s,t) − r)^{2h} removes it exactly.
fn liouville_axis_range(h: f64, s: f64, t: f64, lo: f64, hi: f64, tol: f64) -> Result<Quadrature> {
    let m = s.min(t);
    debug_assert!(lo >= 0.0 && hi <= m + 1e-12);
    if hi <= lo {
        return Ok(Quadrature::ZERO);
    }
    let a = h - 0.5;
    if h == 0.5 {
        return Ok(Quadrature {
            value: hi - lo,
            abs_error: 0.0,
            evals: 0,
        });
    }
    if h > 0.5 {
        // Continuous integrand; the endpoint kink at r = m is harmless.
        return quad::integrate(
            |r| pow_plus(s - r, a) * pow_plus(t - r, a),
            lo,
            hi,
            tol,
        );
    }
    let delta = (s - t).abs();
    let two_h = 2.0 * h;
    let u_hi = (m - lo).powf(two_h);
    let u_lo = (m - hi).powf(two_h);
    if delta == 0.0 {
        // The substituted integrand is the constant 1/(2h).
        return Ok(Quadrature {
            value: (u_hi - u_lo) / two_h,
            abs_error: 0.0,
            evals: 0,
        });
    }
    let inv2h = 1.0 / two_h;
    let e = (0.5 - h) * inv2h;
    quad::integrate(
        move |u| inv2h * u.powf(e) * (delta + u.powf(inv2h)).powf(a),
        u_lo,
        u_hi,
        tol,
    )
}

/// Covariance of the one-sided (Liouville) sheet: ∏ ∫_0^{s∧t} product kernels.
pub fn liouville_cov(s: &[f64], t: &[f64], h: &HurstVector, tol: f64) -> Result<Quadrature> {
    check_point(s, h.n_axes())?;
    check_point(t, h.n_axes())?;
    let mut axes = Vec::with_capacity(h.n_axes());
    for l in 0..h.n_axes() {
        let hl = h.axis(l);
        let m = s[l].min(t[l]);
        let axis = if s[l] == t[l] {
            // Closed form on the diagonal: t^{2H}/(2H).
            Quadrature {
                value: m.powf(2.0 * hl) / (2.0 * hl),
                abs_error: 0.0,
                evals: 0,
            }
        } else {
            liouville_axis_range(hl, s[l], t[l], 0.0, m, tol)?
        };
        axes.push(axis);
    }
    Ok(product_quadrature(&axes))
}

/// Product of per-axis quadratures with first-order error propagation.
fn product_quadrature(axes: &[Quadrature]) -> Quadrature {
    let mut value = 1.0;
    let mut evals = 0;
    for q in axes {
        value *= q.value;
        evals += q.evals;
    }
    let mut abs_error = 0.0;
    for (i, q) in axes.iter().enumerate() {
        let mut others = 1.0;
        for (j, r) in axes.iter().enumerate() {
            if j != i {
                others *= r.value.abs() + r.abs_error;
            }
        }
        abs_error += q.abs_error * others;
    }
    Quadrature {
        value,
        abs_error,
        evals,
    }
}

/// Which piece of the corner/slab/remainder decomposition is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// All axes integrate over [0, ε].
    Corner,
    /// Axis ℓ integrates over [ε, s∧t], every other axis over [0, ε].
    Slab(usize),
    /// Everything with at least two axes past ε.
    Remainder,
    /// The undecomposed one-sided sheet.
    Full,
}

/// A decomposition component at a fixed split level ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionComponent {
    pub kind: ComponentKind,
    pub epsilon: f64,
}

/// Covariance model selector used by the Gaussian engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovModel {
    Sheet,
    Liouville,
    Component(RegionComponent),
}

fn check_component_inputs(
    region: &RegionComponent,
    s: &[f64],
    t: &[f64],
    h: &HurstVector,
) -> Result<()> {
    check_point(s, h.n_axes())?;
    check_point(t, h.n_axes())?;
    if !(region.epsilon > 0.0 && region.epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be positive and finite"));
    }
    if let ComponentKind::Slab(l) = region.kind {
        if l >= h.n_axes() {
            return Err(Error::invalid(
                "slab axis",
                format!("axis {l} out of range for {} axes", h.n_axes()),
            ));
        }
    }
    if region.kind != ComponentKind::Full {
        for (axis, (&a, &b)) in s.iter().zip(t).enumerate() {
            if a < region.epsilon || b < region.epsilon {
                return Err(Error::invalid(
                    "epsilon",
                    format!("axis {axis}: coordinate below the split level {}", region.epsilon),
                ));
            }
        }
    }
    Ok(())
}

/// Covariance of one decomposition component between points s and t.
pub fn component_cov(
    region: &RegionComponent,
    s: &[f64],
    t: &[f64],
    h: &HurstVector,
    tol: f64,
) -> Result<Quadrature> {
    check_component_inputs(region, s, t, h)?;
    let eps = region.epsilon;
    match region.kind {
        ComponentKind::Full => liouville_cov(s, t, h, tol),
        ComponentKind::Corner => {
            let mut axes = Vec::with_capacity(h.n_axes());
            for l in 0..h.n_axes() {
                axes.push(liouville_axis_range(h.axis(l), s[l], t[l], 0.0, eps, tol)?);
            }
            Ok(product_quadrature(&axes))
        }
        ComponentKind::Slab(slab_axis) => {
            let mut axes = Vec::with_capacity(h.n_axes());
            for l in 0..h.n_axes() {
                let m = s[l].min(t[l]);
                let (lo, hi) = if l == slab_axis { (eps, m) } else { (0.0, eps) };
                axes.push(liouville_axis_range(h.axis(l), s[l], t[l], lo, hi, tol)?);
            }
            Ok(product_quadrature(&axes))
        }
        ComponentKind::Remainder => {
            // Subtraction over the disjoint partition: full − corner − Σ slabs.
            let full = liouville_cov(s, t, h, tol)?;
            let corner = component_cov(
                &RegionComponent {
                    kind: ComponentKind::Corner,
                    epsilon: eps,
                },
                s,
                t,
                h,
                tol,
            )?;
            let mut value = full.value - corner.value;
            let mut abs_error = full.abs_error + corner.abs_error;
            let mut evals = full.evals + corner.evals;
            for l in 0..h.n_axes() {
                let slab = component_cov(
                    &RegionComponent {
                        kind: ComponentKind::Slab(l),
                        epsilon: eps,
                    },
                    s,
                    t,
                    h,
                    tol,
                )?;
                value -= slab.value;
                abs_error += slab.abs_error;
                evals += slab.evals;
            }
            Ok(Quadrature {
                value,
                abs_error,
                evals,
            })
        }
    }
}

/// Covariance contribution of one elementary box of the 2^N decomposition.
///
/// Bit ℓ of `upper_mask` selects the [ε, s∧t] range on axis ℓ, a cleared bit
/// the [0, ε] range. Summing over all masks reproduces the full covariance.
pub fn box_cov(
    upper_mask: usize,
    eps: f64,
    s: &[f64],
    t: &[f64],
    h: &HurstVector,
    tol: f64,
) -> Result<Quadrature> {
    check_component_inputs(
        &RegionComponent {
            kind: ComponentKind::Corner,
            epsilon: eps,
        },
        s,
        t,
        h,
    )?;
    let mut axes = Vec::with_capacity(h.n_axes());
    for l in 0..h.n_axes() {
        let m = s[l].min(t[l]);
        let (lo, hi) = if upper_mask >> l & 1 == 1 {
            (eps, m)
        } else {
            (0.0, eps)
        };
        axes.push(liouville_axis_range(h.axis(l), s[l], t[l], lo, hi, tol)?);
    }
    Ok(product_quadrature(&axes))
}

/// Certified lower bound for the conditional variance of the axis-ℓ slab
/// component at t_n given its values at earlier points whose ℓ-coordinates
/// do not exceed `t_prev`.
pub fn slab_lower_bound(
    slab_axis: usize,
    eps: f64,
    t_n: &[f64],
    t_prev: f64,
    h: &HurstVector,
) -> Result<f64> {
    check_point(t_n, h.n_axes())?;
    if slab_axis >= h.n_axes() {
        return Err(Error::invalid("slab axis", "out of range"));
    }
    if !(eps > 0.0) || t_n.iter().any(|&v| v <= eps) {
        return Err(Error::invalid(
            "eps",
            "must be positive and below every coordinate of t_n",
        ));
    }
    if !(t_prev <= t_n[slab_axis]) {
        return Err(Error::invalid(
            "t_prev",
            format!("{t_prev} exceeds the target coordinate {}", t_n[slab_axis]),
        ));
    }
    // Earlier slab regions stop at max(eps, t_prev) along the slab axis; the
    // strip beyond it is disjoint from all of them, hence the white-noise
    // mass of that strip bounds the conditional variance from below.
    let lo = eps.max(t_prev);
    let gap = (t_n[slab_axis] - lo).max(0.0);
    let mut bound = 1.0;
    for l in 0..h.n_axes() {
        let two_h = 2.0 * h.axis(l);
        if l == slab_axis {
            bound *= gap.powf(two_h) / two_h;
        } else {
            bound *= (t_n[l].powf(two_h) - (t_n[l] - eps).powf(two_h)) / two_h;
        }
    }
    Ok(bound)
}

/// The 2^N boxes of the decomposition of [0, t] at split level ε,
/// labeled corner, slab, or remainder.
pub fn partition_boxes(eps: f64, t: &[f64]) -> Result<Vec<(Rect, ComponentKind)>> {
    let n = t.len();
    if n == 0 {
        return Err(Error::invalid("t", "needs at least one axis"));
    }
    if n > 16 {
        return Err(Error::invalid("t", "more than 16 axes would enumerate 2^N boxes"));
    }
    let min_t = t.iter().copied().fold(f64::INFINITY, f64::min);
    if !(eps > 0.0 && eps < min_t) {
        return Err(Error::invalid(
            "eps",
            format!("{eps} must lie strictly between 0 and the smallest coordinate {min_t}"),
        ));
    }
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0usize..1 << n {
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for l in 0..n {
            if mask >> l & 1 == 1 {
                lo.push(eps);
                hi.push(t[l]);
            } else {
                lo.push(0.0);
                hi.push(eps);
            }
        }
        let kind = match mask.count_ones() {
            0 => ComponentKind::Corner,
            1 => ComponentKind::Slab(mask.trailing_zeros() as usize),
            _ => ComponentKind::Remainder,
        };
        out.push((Rect::new(lo, hi)?, kind));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::rng::SeedSpec;

    fn hv(h: &[f64]) -> HurstVector {
        HurstVector::new(h.to_vec(), 1).unwrap()
    }

    #[test]
    fn sheet_covariance_closed_cases() {
        let h = hv(&[0.5]);
        assert_eq!(fbs_cov(&[1.0], &[2.0], &h).unwrap(), 1.0);
        let h2 = hv(&[0.3, 0.7]);
        assert_eq!(fbs_cov(&[1.0, 1.0], &[1.0, 1.0], &h2).unwrap(), 1.0);
        let q = hv(&[0.25]);
        let got = fbs_cov(&[1.0], &[2.0], &q).unwrap();
        assert!((got - 0.5 * (1.0 + 2f64.powf(0.5) - 1.0)).abs() < 1e-15);
        assert!((got - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn sheet_covariance_symmetry_and_boundary() {
        let h = hv(&[0.4, 0.6]);
        let mut rng = CounterRng::new(SeedSpec::new(11, 0));
        for _ in 0..200 {
            let s = [rng.uniform_in(0.1, 2.0), rng.uniform_in(0.1, 2.0)];
            let t = [rng.uniform_in(0.1, 2.0), rng.uniform_in(0.1, 2.0)];
            let a = fbs_cov(&s, &t, &h).unwrap();
            let b = fbs_cov(&t, &s, &h).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(fbs_cov(&[0.0, 1.0], &[1.0, 1.0], &h).unwrap(), 0.0);
        assert!(fbs_cov(&[1.0], &[1.0, 1.0], &h).is_err());
        assert!(fbs_cov(&[-1.0, 1.0], &[1.0, 1.0], &h).is_err());
    }

    #[test]
    fn sheet_covariance_operator_self_similarity() {
        let h = hv(&[0.3, 0.8]);
        let mut rng = CounterRng::new(SeedSpec::new(12, 0));
        for _ in 0..1000 {
            let s = [rng.uniform_in(0.1, 2.0), rng.uniform_in(0.1, 2.0)];
            let t = [rng.uniform_in(0.1, 2.0), rng.uniform_in(0.1, 2.0)];
            let a = [rng.uniform_in(0.2, 3.0), rng.uniform_in(0.2, 3.0)];
            let scaled = fbs_cov(
                &[a[0] * s[0], a[1] * s[1]],
                &[a[0] * t[0], a[1] * t[1]],
                &h,
            )
            .unwrap();
            let factor = a[0].powf(2.0 * h.axis(0)) * a[1].powf(2.0 * h.axis(1));
            let plain = fbs_cov(&s, &t, &h).unwrap();
            assert!(
                (scaled - factor * plain).abs() <= 1e-12 * scaled.abs().max(1.0),
                "self-similarity violated: {scaled} vs {}",
                factor * plain
            );
        }
    }

    #[test]
    fn kernel_indicator_convention() {
        assert_eq!(kernel_g(0.5, 1.0, 0.3).unwrap(), 1.0);
        assert_eq!(kernel_g(0.5, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(kernel_g(0.5, 1.0, -0.2).unwrap(), 0.0);
        assert_eq!(kernel_g(0.5, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(kernel_g(0.9, 1.0, 1.0).unwrap(), 0.0);
        let got = kernel_g(0.75, 1.0, -1.0).unwrap();
        assert!((got - (2f64.powf(0.25) - 1.0)).abs() < 1e-15);
        assert!(kernel_g(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn kernel_is_continuous_in_h_away_from_jumps() {
        for s in [0.3, -0.4, 0.9] {
            let ind = kernel_g(0.5, 1.0, s).unwrap();
            for h in [0.5 - 1e-9, 0.5 + 1e-9] {
                let near = kernel_g(h, 1.0, s).unwrap();
                assert!(
                    (near - ind).abs() < 1e-6,
                    "h={h} s={s}: {near} vs {ind}"
                );
            }
        }
    }

    #[test]
    fn kappa_is_one_at_half() {
        let k = kappa(&hv(&[0.5, 0.5, 0.5]), 1e-10).unwrap();
        assert_eq!(k.value, 1.0);
        assert_eq!(k.quad_error, 0.0);
        assert_eq!(k.per_axis, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn kappa_matches_independent_quadrature() {
        // Reference axis values computed with 30-digit arithmetic on the
        // unsubstituted integral over (−∞, 1].
        let cases = [
            (0.3, 1.8750709111678688),
            (0.4, 1.2891951930286514),
            (0.6, 0.86371661196717747),
            (0.7, 0.83889297187184361),
            (0.75, 0.87401918476403994),
            (0.9, 1.5195745359155997),
        ];
        for &(h, want_sq) in &cases {
            let k = kappa(&hv(&[h]), 1e-11).unwrap();
            let got_sq = k.per_axis[0] * k.per_axis[0];
            assert!(
                (got_sq - want_sq).abs() < 1e-9 * want_sq,
                "h={h}: {got_sq} vs {want_sq}"
            );
            assert!(k.quad_error >= 0.0 && k.quad_error < 1e-8);
        }
    }

    #[test]
    fn kappa_factorizes_across_axes() {
        let k = kappa(&hv(&[0.3, 0.7]), 1e-11).unwrap();
        let want = (1.8750709111678688f64 * 0.83889297187184361).sqrt();
        assert!((k.value - want).abs() < 1e-9 * want);
        assert!((k.value - k.per_axis[0] * k.per_axis[1]).abs() < 1e-15);
    }

    #[test]
    fn kappa_dominates_single_point_ratio() {
        // κ_H² ≥ ∏ 1/(2H_ℓ) is the single-point comparison inequality.
        for i in 0..20 {
            let hval = 0.05 + 0.9 * (i as f64 + 0.5) / 20.0;
            let k = kappa(&hv(&[hval]), 1e-10).unwrap();
            let lhs = k.value * k.value;
            let rhs = 1.0 / (2.0 * hval);
            assert!(
                lhs >= rhs - 1e-9 * rhs.max(1.0),
                "h={hval}: {lhs} < {rhs}"
            );
        }
    }

    #[test]
    fn liouville_diagonal_closed_form() {
        let h = hv(&[0.3, 0.7]);
        let got = liouville_cov(&[1.7, 0.9], &[1.7, 0.9], &h, 1e-10).unwrap();
        let want = 1.7f64.powf(0.6) / 0.6 * 0.9f64.powf(1.4) / 1.4;
        assert_eq!(got.abs_error, 0.0);
        assert!((got.value - want).abs() < 1e-14 * want);
    }

    #[test]
    fn liouville_brownian_is_min() {
        let h = hv(&[0.5, 0.5]);
        let got = liouville_cov(&[1.0, 2.0], &[2.0, 0.5], &h, 1e-10).unwrap();
        assert_eq!(got.value, 1.0 * 0.5);
        assert_eq!(got.abs_error, 0.0);
    }

    #[test]
    fn liouville_matches_reference_quadrature() {
        let cases = [
            (0.3, 1.0, 2.0, 1.1673409633100588),
            (0.7, 1.0, 2.0, 0.90667275080735978),
            (0.6, 0.8, 1.3, 0.70317220722365392),
        ];
        for &(h, s, t, want) in &cases {
            let got = liouville_cov(&[s], &[t], &hv(&[h]), 1e-11).unwrap();
            assert!(
                (got.value - want).abs() < 1e-9 * want,
                "h={h}: {} vs {want}",
                got.value
            );
            // Symmetry of the kernel in (s, t).
            let rev = liouville_cov(&[t], &[s], &hv(&[h]), 1e-11).unwrap();
            assert!((got.value - rev.value).abs() < 1e-12 * want);
        }
        let zero = liouville_cov(&[0.0], &[2.0], &hv(&[0.3]), 1e-10).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn component_slab_closed_case() {
        let h = hv(&[0.5, 0.5]);
        let slab = RegionComponent {
            kind: ComponentKind::Slab(0),
            epsilon: 0.5,
        };
        let got = component_cov(&slab, &[1.0, 1.0], &[1.0, 1.0], &h, 1e-10).unwrap();
        assert!((got.value - 0.25).abs() < 1e-14);
    }

    #[test]
    fn component_empty_slab_vanishes() {
        let h = hv(&[0.4, 0.6]);
        let slab = RegionComponent {
            kind: ComponentKind::Slab(1),
            epsilon: 0.7,
        };
        let got = component_cov(&slab, &[1.0, 0.7], &[1.3, 1.1], &h, 1e-10).unwrap();
        assert_eq!(got.value, 0.0);
    }

    #[test]
    fn component_rejects_coordinates_below_epsilon() {
        let h = hv(&[0.4]);
        let corner = RegionComponent {
            kind: ComponentKind::Corner,
            epsilon: 0.5,
        };
        assert!(component_cov(&corner, &[0.4], &[1.0], &h, 1e-9).is_err());
    }

    #[test]
    fn decomposition_is_additive() {
        let mut rng = CounterRng::new(SeedSpec::new(21, 0));
        for n in 1..=3usize {
            for _ in 0..20 {
                let hvec: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.15, 0.9)).collect();
                let h = hv(&hvec);
                let s: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.8, 2.0)).collect();
                let t: Vec<f64> = if rng.uniform() < 0.3 {
                    s.clone()
                } else {
                    (0..n).map(|_| rng.uniform_in(0.8, 2.0)).collect()
                };
                let eps = 0.4;
                let tol = 1e-10;
                let full = liouville_cov(&s, &t, &h, tol).unwrap();
                let mut sum = component_cov(
                    &RegionComponent {
                        kind: ComponentKind::Corner,
                        epsilon: eps,
                    },
                    &s,
                    &t,
                    &h,
                    tol,
                )
                .unwrap()
                .value;
                for l in 0..n {
                    sum += component_cov(
                        &RegionComponent {
                            kind: ComponentKind::Slab(l),
                            epsilon: eps,
                        },
                        &s,
                        &t,
                        &h,
                        tol,
                    )
                    .unwrap()
                    .value;
                }
                sum += component_cov(
                    &RegionComponent {
                        kind: ComponentKind::Remainder,
                        epsilon: eps,
                    },
                    &s,
                    &t,
                    &h,
                    tol,
                )
                .unwrap()
                .value;
                assert!(
                    (sum - full.value).abs() <= 1e-9 * full.value.abs().max(1.0),
                    "additivity broke: {sum} vs {}",
                    full.value
                );
            }
        }
    }

    #[test]
    fn remainder_matches_box_enumeration() {
        let mut rng = CounterRng::new(SeedSpec::new(22, 0));
        for _ in 0..20 {
            let h = hv(&[rng.uniform_in(0.2, 0.9), rng.uniform_in(0.2, 0.9)]);
            let s = [rng.uniform_in(0.8, 2.0), rng.uniform_in(0.8, 2.0)];
            let t = [rng.uniform_in(0.8, 2.0), rng.uniform_in(0.8, 2.0)];
            let eps = 0.5;
            let tol = 1e-10;
            let rem = component_cov(
                &RegionComponent {
                    kind: ComponentKind::Remainder,
                    epsilon: eps,
                },
                &s,
                &t,
                &h,
                tol,
            )
            .unwrap();
            let mut direct = 0.0;
            for mask in 0usize..4 {
                if mask.count_ones() >= 2 {
                    direct += box_cov(mask, eps, &s, &t, &h, tol).unwrap().value;
                }
            }
            assert!(
                (rem.value - direct).abs() <= 1e-9 * direct.abs().max(1.0),
                "remainder {} vs enumerated {direct}",
                rem.value
            );
        }
    }

    #[test]
    fn remainder_variance_is_nonnegative() {
        let mut rng = CounterRng::new(SeedSpec::new(23, 0));
        for _ in 0..40 {
            let h = hv(&[rng.uniform_in(0.15, 0.9), rng.uniform_in(0.15, 0.9)]);
            let t = [rng.uniform_in(0.7, 2.0), rng.uniform_in(0.7, 2.0)];
            let rem = component_cov(
                &RegionComponent {
                    kind: ComponentKind::Remainder,
                    epsilon: 0.35,
                },
                &t,
                &t,
                &h,
                1e-10,
            )
            .unwrap();
            assert!(rem.value >= -1e-10, "negative remainder variance {}", rem.value);
        }
    }

    #[test]
    fn slab_bound_closed_case() {
        let h = hv(&[0.5, 0.5]);
        let got = slab_lower_bound(0, 0.5, &[1.0, 1.0], 0.9, &h).unwrap();
        assert!((got - 0.05).abs() < 1e-15);
        assert_eq!(slab_lower_bound(0, 0.5, &[1.0, 1.0], 1.0, &h).unwrap(), 0.0);
        assert!(slab_lower_bound(0, 0.5, &[1.0, 1.0], 1.1, &h).is_err());
        assert!(slab_lower_bound(0, 1.0, &[1.0, 1.0], 0.5, &h).is_err());
    }

    #[test]
    fn slab_bound_clamps_previous_coordinate_at_epsilon() {
        let h = hv(&[0.5]);
        // No earlier point reaches past ε, so the full strip counts.
        let a = slab_lower_bound(0, 0.5, &[1.0], 0.2, &h).unwrap();
        let b = slab_lower_bound(0, 0.5, &[1.0], 0.5, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_counts_and_volume() {
        let one = partition_boxes(0.5, &[2.0]).unwrap();
        assert_eq!(one.len(), 2);
        assert!(one.iter().all(|(_, k)| *k != ComponentKind::Remainder));

        let two = partition_boxes(0.5, &[2.0, 1.5]).unwrap();
        assert_eq!(two.len(), 4);
        assert_eq!(
            two.iter().filter(|(_, k)| *k == ComponentKind::Remainder).count(),
            1
        );

        let three = partition_boxes(0.25, &[1.0, 2.0, 1.5]).unwrap();
        assert_eq!(three.len(), 8);
        assert_eq!(
            three
                .iter()
                .filter(|(_, k)| *k == ComponentKind::Remainder)
                .count(),
            4
        );
        let vol: f64 = three.iter().map(|(b, _)| b.volume()).sum();
        assert!((vol - 3.0).abs() < 1e-12);

        assert!(partition_boxes(1.0, &[1.0, 2.0]).is_err());
        assert!(partition_boxes(0.0, &[1.0]).is_err());
    }
}
