//! Local-time estimation on sampled fields: occupation histograms on an
//! anchored lattice, the Gaussian-kernel smoother, maximum local time,
//! level-set extraction with box counting, and oscillation statistics.
//!
//! The histogram stores per-bin occupation masses as ground truth; densities
//! are derived. Mass conservation then holds by construction up to float
//! reassociation, and every check compares against the accumulated total.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{FieldSample, Grid};
use crate::hurst::Rect;

/// Spatial binning request: bins of width `bin_width` centered at integer
/// multiples of it, so 0 is always a bin center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub bin_width: f64,
}

/// Histogram estimate of the local time field over a time box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField {
    pub t_box: Rect,
    pub bin_width: f64,
    /// Per channel: bin centers run from first_index*w in steps of w.
    pub first_index: Vec<i64>,
    pub n_bins: Vec<usize>,
    /// Occupation mass per bin, row-major with channel 0 slowest.
    pub masses: Vec<f64>,
    /// Mass whose field value fell outside the bin window.
    pub overflow: f64,
    /// Sum of all contributing cell volumes, accumulated in cell order.
    pub total_mass: f64,
    /// Largest time step per axis of the generating grid.
    pub grid_spacing: Vec<f64>,
}

impl LocalTimeField {
    pub fn n_channels(&self) -> usize {
        self.n_bins.len()
    }

    pub fn n_bins_total(&self) -> usize {
        self.masses.len()
    }

    pub fn bin_volume(&self) -> f64 {
        self.bin_width.powi(self.n_bins.len() as i32)
    }

    /// Local-time density of one bin.
    pub fn density(&self, flat: usize) -> f64 {
        self.masses[flat] / self.bin_volume()
    }

    /// Bin center at a flat index (row-major, channel 0 slowest).
    pub fn bin_center(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let d = self.n_bins.len();
        let mut c = vec![0.0; d];
        for ch in (0..d).rev() {
            let m = self.n_bins[ch];
            c[ch] = (self.first_index[ch] + (rem % m) as i64) as f64 * self.bin_width;
            rem /= m;
        }
        c
    }

    /// Flat bin index holding the spatial point, if inside the window.
    pub fn bin_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.n_bins.len() {
            return None;
        }
        let mut flat = 0usize;
        for (ch, &v) in x.iter().enumerate() {
            let k = (v / self.bin_width).round() as i64 - self.first_index[ch];
            if k < 0 || k as usize >= self.n_bins[ch] {
                return None;
            }
            flat = flat * self.n_bins[ch] + k as usize;
        }
        Some(flat)
    }

    /// Density at a spatial point (0 outside the window).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.bin_of(x).map_or(0.0, |i| self.density(i))
    }

    /// (binned mass + overflow, accumulated total, Lebesgue volume of T).
    pub fn mass_balance(&self) -> (f64, f64, f64) {
        let binned: f64 = self.masses.iter().sum::<f64>() + self.overflow;
        (binned, self.total_mass, self.t_box.volume())
    }
}

/// Per-axis widths of the midpoint cells around each grid coordinate,
/// clipped to [lo, hi]; the grid must cover the interval.
fn cell_widths(coords: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if coords[0] > lo || *coords.last().expect("nonempty axis") < hi {
        return Err(Error::invalid(
            "t_box",
            format!(
                "axis range [{lo}, {hi}] not covered by grid span [{}, {}]",
                coords[0],
                coords.last().expect("nonempty axis")
            ),
        ));
    }
    let m = coords.len();
    let mut w = vec![0.0; m];
    for i in 0..m {
        let left = if i == 0 {
            lo
        } else {
            lo.max(0.5 * (coords[i - 1] + coords[i]))
        };
        let right = if i + 1 == m {
            hi
        } else {
            hi.min(0.5 * (coords[i] + coords[i + 1]))
        };
        w[i] = (right - left).max(0.0);
    }
    Ok(w)
}

fn tensor_axes(sample: &FieldSample) -> Result<&[Vec<f64>]> {
    match &sample.grid {
        Grid::Tensor { axes } => Ok(axes),
        Grid::Scatter { .. } => Err(Error::invalid(
            "sample",
            "occupation estimators need a tensor grid",
        )),
    }
}

fn check_t_box(sample: &FieldSample, t_box: &Rect) -> Result<()> {
    if t_box.dim() != sample.grid.n_axes() {
        return Err(Error::invalid(
            "t_box",
            format!(
                "{} axes but the sample grid has {}",
                t_box.dim(),
                sample.grid.n_axes()
            ),
        ));
    }
    Ok(())
}

/// Iterates (flat grid index, cell volume) over cells with positive volume.
struct CellIter {
    widths: Vec<Vec<f64>>,
    idx: Vec<usize>,
    done: bool,
}

impl CellIter {
    fn new(widths: Vec<Vec<f64>>) -> Self {
        CellIter {
            idx: vec![0; widths.len()],
            widths,
            done: false,
        }
    }
}

impl Iterator for CellIter {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        loop {
            if self.done {
                return None;
            }
            let mut flat = 0usize;
            let mut vol = 1.0f64;
            for (ax, w) in self.widths.iter().enumerate() {
                flat = flat * w.len() + self.idx[ax];
                vol *= w[self.idx[ax]];
            }
            // Row-major increment, last axis fastest.
            let mut ax = self.widths.len();
            loop {
                if ax == 0 {
                    self.done = true;
                    break;
                }
                ax -= 1;
                self.idx[ax] += 1;
                if self.idx[ax] < self.widths[ax].len() {
                    break;
                }
                self.idx[ax] = 0;
            }
            if vol > 0.0 {
                return Some((flat, vol));
            }
        }
    }
}

fn grid_cells(sample: &FieldSample, t_box: &Rect) -> Result<CellIter> {
    let axes = tensor_axes(sample)?;
    check_t_box(sample, t_box)?;
    let mut widths = Vec::with_capacity(axes.len());
    for (l, coords) in axes.iter().enumerate() {
        widths.push(cell_widths(coords, t_box.lo()[l], t_box.hi()[l])?);
    }
    Ok(CellIter::new(widths))
}

/// Occupation histogram of the sample over the time box.
pub fn occupation_histogram(
    sample: &FieldSample,
    t_box: &Rect,
    lattice: &LatticeSpec,
) -> Result<LocalTimeField> {
    let w = lattice.bin_width;
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::invalid("bin_width", "must be positive and finite"));
    }
    let d = sample.n_channels();
    let axes = tensor_axes(sample)?;
    // Window pass: per-channel value range over contributing cells.
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (flat, _vol) in grid_cells(sample, t_box)? {
        for c in 0..d {
            let v = sample.value(c, flat);
            if !v.is_finite() {
                return Err(Error::numerical("histogram", "non-finite field value"));
            }
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    if lo.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("t_box", "no grid cells with positive volume"));
    }
    let mut first_index = Vec::with_capacity(d);
    let mut n_bins = Vec::with_capacity(d);
    let mut total_bins = 1usize;
    for c in 0..d {
        let first = (lo[c] / w).floor() as i64 - 3;
        let last = (hi[c] / w).ceil() as i64 + 3;
        let n = (last - first + 1) as usize;
        first_index.push(first);
        n_bins.push(n);
        total_bins = total_bins
            .checked_mul(n)
            .filter(|&t| t <= 100_000_000)
            .ok_or_else(|| Error::invalid("bin_width", "bin window too large"))?;
    }
    let mut masses = vec![0.0f64; total_bins];
    let mut overflow = 0.0f64;
    let mut total_mass = 0.0f64;
    for (flat, vol) in grid_cells(sample, t_box)? {
        total_mass += vol;
        let mut bin = 0usize;
        let mut inside = true;
        for c in 0..d {
            let k = (sample.value(c, flat) / w).round() as i64 - first_index[c];
            if k < 0 || k as usize >= n_bins[c] {
                inside = false;
                break;
            }
            bin = bin * n_bins[c] + k as usize;
        }
        if inside {
            masses[bin] += vol;
        } else {
            overflow += vol;
        }
    }
    let grid_spacing = axes
        .iter()
        .map(|coords| {
            coords
                .windows(2)
                .map(|p| p[1] - p[0])
                .fold(0.0f64, f64::max)
        })
        .collect();
    Ok(LocalTimeField {
        t_box: t_box.clone(),
        bin_width: w,
        first_index,
        n_bins,
        masses,
        overflow,
        total_mass,
        grid_spacing,
    })
}

/// Gaussian-kernel local time at level x with bandwidth parameter k.
pub fn kernel_local_time(sample: &FieldSample, t_box: &Rect, x: &[f64], k: f64) -> Result<f64> {
    let d = sample.n_channels();
    if x.len() != d {
        return Err(Error::invalid(
            "x",
            format!("{} coordinates for {d} channels", x.len()),
        ));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid("k", "must be positive and finite"));
    }
    // Density prefactor (k/2π)^{d/2} makes the x-integral the box volume.
    let pref = (k / std::f64::consts::TAU).powf(0.5 * d as f64);
    let mut acc = 0.0;
    for (flat, vol) in grid_cells(sample, t_box)? {
        let mut sq = 0.0;
        for (c, &xc) in x.iter().enumerate() {
            let diff = sample.value(c, flat) - xc;
            sq += diff * diff;
        }
        acc += vol * (-0.5 * k * sq).exp();
    }
    Ok(pref * acc)
}

/// Test functions for the occupation-density identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    One,
    /// Indicator of the lattice bin containing x.
    BinIndicator { x: Vec<f64> },
    /// exp(-|v - center|² / (2 width²)).
    GaussianBump { center: Vec<f64>, width: f64 },
    /// ∏_c max(0, 1 - ((v_c - center_c)/window)²).
    ClippedQuadratic { center: Vec<f64>, window: f64 },
}

impl TestFunction {
    fn eval(&self, v: &[f64], ltf: &LocalTimeField) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::BinIndicator { x } => {
                if ltf.bin_of(v).is_some() && ltf.bin_of(v) == ltf.bin_of(x) {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::GaussianBump { center, width } => {
                let sq: f64 = v
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (-0.5 * sq / (width * width)).exp()
            }
            TestFunction::ClippedQuadratic { center, window } => v
                .iter()
                .zip(center)
                .map(|(a, b)| (1.0 - ((a - b) / window).powi(2)).max(0.0))
                .product(),
        }
    }
}

/// Occupation identity both ways: time integral of f(B) vs the histogram sum.
pub fn occupation_check(
    sample: &FieldSample,
    t_box: &Rect,
    lattice: &LatticeSpec,
    f: &TestFunction,
) -> Result<(f64, f64)> {
    let ltf = occupation_histogram(sample, t_box, lattice)?;
    let d = sample.n_channels();
    let mut direct = 0.0;
    let mut v = vec![0.0; d];
    for (flat, vol) in grid_cells(sample, t_box)? {
        for (c, vc) in v.iter_mut().enumerate() {
            *vc = sample.value(c, flat);
        }
        direct += vol * f.eval(&v, &ltf);
    }
    let mut via_density = 0.0;
    for (flat, &mass) in ltf.masses.iter().enumerate() {
        if mass > 0.0 {
            via_density += f.eval(&ltf.bin_center(flat), &ltf) * mass;
        }
    }
    if matches!(f, TestFunction::One) {
        via_density += ltf.overflow;
    }
    Ok((direct, via_density))
}

/// Largest density and its flat bin index.
pub fn max_local_time(ltf: &LocalTimeField) -> (f64, usize) {
    let mut best = 0usize;
    for (i, m) in ltf.masses.iter().enumerate() {
        if *m > ltf.masses[best] {
            best = i;
        }
    }
    (ltf.density(best), best)
}

/// Per-channel (min, max) of field values over cells contributing to T.
pub fn field_range(sample: &FieldSample, t_box: &Rect) -> Result<Vec<(f64, f64)>> {
    let d = sample.n_channels();
    let mut r = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for (flat, _vol) in grid_cells(sample, t_box)? {
        for c in 0..d {
            let v = sample.value(c, flat);
            r[c].0 = r[c].0.min(v);
            r[c].1 = r[c].1.max(v);
        }
    }
    if r.iter().any(|&(lo, _)| !lo.is_finite()) {
        return Err(Error::invalid("t_box", "no grid cells with positive volume"));
    }
    Ok(r)
}

/// Grid time-points where the field sits within tol of level x.
pub fn level_set_points(sample: &FieldSample, x: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let d = sample.n_channels();
    if x.len() != d {
        return Err(Error::invalid(
            "x",
            format!("{} coordinates for {d} channels", x.len()),
        ));
    }
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol", "must be nonnegative"));
    }
    let mut out = Vec::new();
    for i in 0..sample.grid.n_points() {
        let sq: f64 = (0..d).map(|c| (sample.value(c, i) - x[c]).powi(2)).sum();
        if sq.sqrt() <= tol {
            out.push(sample.grid.point(i));
        }
    }
    Ok(out)
}

/// Dyadic box counts of a point set inside a box: (scale, occupied) pairs
/// at per-axis subdivisions 2^j for j = 1..=levels.
pub fn box_counting(
    points: &[Vec<f64>],
    t_box: &Rect,
    levels: usize,
) -> Result<Vec<(f64, usize)>> {
    if levels == 0 || levels > 24 {
        return Err(Error::invalid("levels", "must lie in 1..=24"));
    }
    let n_axes = t_box.dim();
    let side_geomean = (t_box.volume()).powf(1.0 / n_axes as f64);
    let mut out = Vec::with_capacity(levels);
    for j in 1..=levels {
        let m = 1usize << j;
        let mut occupied: HashSet<usize> = HashSet::new();
        for p in points {
            if !t_box.contains(p) {
                continue;
            }
            let mut flat = 0usize;
            for ax in 0..n_axes {
                let rel = (p[ax] - t_box.lo()[ax]) / t_box.side(ax);
                let cell = ((rel * m as f64) as usize).min(m - 1);
                flat = flat * m + cell;
            }
            occupied.insert(flat);
        }
        out.push((side_geomean / m as f64, occupied.len()));
    }
    Ok(out)
}

/// Sup oscillation around a center at a ladder of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationRecord {
    pub center: Vec<f64>,
    /// Strictly decreasing radii.
    pub radii: Vec<f64>,
    /// sup over grid points of |B(t) - B(center)| within each max-norm ball.
    pub sup_osc: Vec<f64>,
}

/// Sup oscillation statistics; the center must be a grid coordinate.
pub fn oscillation_stats(
    sample: &FieldSample,
    s: &[f64],
    radii: &[f64],
) -> Result<OscillationRecord> {
    let axes = match &sample.grid {
        Grid::Tensor { axes } => axes,
        Grid::Scatter { .. } => {
            return Err(Error::invalid(
                "sample",
                "oscillation statistics need a tensor grid",
            ))
        }
    };
    if s.len() != axes.len() {
        return Err(Error::invalid("s", "dimension mismatch with the grid"));
    }
    if radii.is_empty() || radii.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::invalid("radii", "must be strictly decreasing"));
    }
    let r_max = radii[0];
    let mut s_idx = Vec::with_capacity(axes.len());
    for (ax, coords) in axes.iter().enumerate() {
        let i = coords
            .iter()
            .position(|&c| c == s[ax])
            .ok_or_else(|| Error::invalid("s", format!("axis {ax}: not a grid coordinate")))?;
        s_idx.push(i);
        if s[ax] - r_max < coords[0] || s[ax] + r_max > *coords.last().expect("nonempty") {
            return Err(Error::invalid(
                "radii",
                format!("ball of radius {r_max} leaves the grid on axis {ax}"),
            ));
        }
    }
    let d = sample.n_channels();
    let mut center_flat = 0usize;
    for (ax, coords) in axes.iter().enumerate() {
        center_flat = center_flat * coords.len() + s_idx[ax];
    }
    let center_vals: Vec<f64> = (0..d).map(|c| sample.value(c, center_flat)).collect();
    let mut sup_osc = Vec::with_capacity(radii.len());
    for &r in radii {
        // Index window per axis for the max-norm ball.
        let mut lo_i = Vec::with_capacity(axes.len());
        let mut hi_i = Vec::with_capacity(axes.len());
        for (ax, coords) in axes.iter().enumerate() {
            let lo = coords.partition_point(|&c| c < s[ax] - r);
            let hi = coords.partition_point(|&c| c <= s[ax] + r);
            lo_i.push(lo);
            hi_i.push(hi);
        }
        let mut sup = 0.0f64;
        let mut idx = lo_i.clone();
        'outer: loop {
            let mut flat = 0usize;
            for (ax, coords) in axes.iter().enumerate() {
                flat = flat * coords.len() + idx[ax];
            }
            let sq: f64 = (0..d)
                .map(|c| (sample.value(c, flat) - center_vals[c]).powi(2))
                .sum();
            sup = sup.max(sq.sqrt());
            let mut ax = axes.len();
            loop {
                if ax == 0 {
                    break 'outer;
                }
                ax -= 1;
                idx[ax] += 1;
                if idx[ax] < hi_i[ax] {
                    break;
                }
                idx[ax] = lo_i[ax];
            }
        }
        sup_osc.push(sup);
    }
    Ok(OscillationRecord {
        center: s.to_vec(),
        radii: radii.to_vec(),
        sup_osc,
    })
}
