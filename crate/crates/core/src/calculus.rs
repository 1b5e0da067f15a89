//! Delta and nabla calculus of grid functions.
//!
//! Scattered points are handled by the exact difference quotients with the
//! graininess taken from segment endpoints; dense points fall back to
//! classical finite differences on the sampling grid (central where possible,
//! one-sided three-point at segment boundaries). The delta integral combines
//! exact `mu`-weighted scattered contributions with composite Simpson
//! quadrature over dense runs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};
use crate::timescale::TimeScale;

/// Vector-valued function sampled on the grid of a time scale.
///
/// Values are stored point-major: the component vector of grid point `i`
/// occupies `values[i * dim .. (i + 1) * dim]`.
#[derive(Debug, Clone)]
pub struct GridFunction<R: Real> {
    scale: Arc<TimeScale<R>>,
    dim: usize,
    values: Vec<R>,
}

impl<R: Real> GridFunction<R> {
    pub fn from_values(scale: Arc<TimeScale<R>>, dim: usize, values: Vec<R>) -> Result<Self, R> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        let expected = scale.grid().len() * dim;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        Ok(GridFunction { scale, dim, values })
    }

    pub fn zeros(scale: Arc<TimeScale<R>>, dim: usize) -> Self {
        let n = scale.grid().len() * dim;
        GridFunction { scale, dim, values: vec![R::zero(); n] }
    }

    pub fn constant(scale: Arc<TimeScale<R>>, value: &[R]) -> Self {
        let n = scale.grid().len();
        let mut values = Vec::with_capacity(n * value.len());
        for _ in 0..n {
            values.extend_from_slice(value);
        }
        GridFunction { scale, dim: value.len(), values }
    }

    /// Samples a vector-valued closure at every grid point.
    pub fn sample(scale: Arc<TimeScale<R>>, dim: usize, f: impl Fn(R) -> Vec<R>) -> Self {
        let grid = scale.grid();
        let mut values = Vec::with_capacity(grid.len() * dim);
        for i in 0..grid.len() {
            let v = f(grid.point(i));
            assert_eq!(v.len(), dim, "sampled value has wrong dimension");
            values.extend_from_slice(&v);
        }
        GridFunction { scale, dim, values }
    }

    /// Samples a scalar closure (dimension one).
    pub fn sample_scalar(scale: Arc<TimeScale<R>>, f: impl Fn(R) -> R) -> Self {
        let grid = scale.grid();
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        GridFunction { scale, dim: 1, values }
    }

    pub fn scale(&self) -> &Arc<TimeScale<R>> {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.scale.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> &[R] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut [R] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn raw(&self) -> &[R] {
        &self.values
    }

    /// True when two functions live on the same grid.
    pub fn same_grid(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.scale, &other.scale) {
            return true;
        }
        let (g, h) = (self.scale.grid(), other.scale.grid());
        g.len() == h.len()
            && self.scale.segments().len() == other.scale.segments().len()
            && self
                .scale
                .segments()
                .iter()
                .zip(other.scale.segments())
                .all(|(x, y)| x.lo == y.lo && x.hi == y.hi)
    }

    /// `self + alpha * other`, componentwise.
    pub fn add_scaled(&self, other: &Self, alpha: R) -> Result<Self, R> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x + alpha * y)
            .collect();
        Ok(GridFunction { scale: self.scale.clone(), dim: self.dim, values })
    }

    pub fn scaled(&self, alpha: R) -> Self {
        GridFunction {
            scale: self.scale.clone(),
            dim: self.dim,
            values: self.values.iter().map(|&x| alpha * x).collect(),
        }
    }

    /// Pointwise scalar product of two functions of equal dimension.
    pub fn pointwise_dot(&self, other: &Self) -> Result<GridFunction<R>, R> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let values = (0..self.len())
            .map(|i| dot(self.value(i), other.value(i)))
            .collect();
        Ok(GridFunction { scale: self.scale.clone(), dim: 1, values })
    }
}

/// Quality flag attached to pointwise derivative fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    Ok,
    /// Value exists, but the scale's jump operators are irregular here.
    Junction,
    /// Point lies outside the derivative's domain; the slot holds NaN.
    OutOfDomain,
}

/// Grid function with a per-point quality flag.
#[derive(Debug, Clone)]
pub struct FlaggedGridFunction<R: Real> {
    pub values: GridFunction<R>,
    pub quality: Vec<Quality>,
}

/// Classical derivative estimate inside a dense run `[lo, hi]`.
///
/// Central differences where both neighbours are available, one-sided
/// three-point formulas at the run boundaries; both are second order in the
/// run spacing.
fn dense_stencil<R: Real>(
    f: &GridFunction<R>,
    i: usize,
    lo: usize,
    hi: usize,
    h: R,
    out: &mut [R],
) -> Result<(), R> {
    let two_h = R::of(2.0) * h;
    if i > lo && i < hi {
        for k in 0..f.dim() {
            out[k] = (f.value(i + 1)[k] - f.value(i - 1)[k]) / two_h;
        }
    } else if i + 2 <= hi {
        let three = R::of(3.0);
        let four = R::of(4.0);
        for k in 0..f.dim() {
            out[k] =
                (-three * f.value(i)[k] + four * f.value(i + 1)[k] - f.value(i + 2)[k]) / two_h;
        }
    } else if i >= lo + 2 {
        let three = R::of(3.0);
        let four = R::of(4.0);
        for k in 0..f.dim() {
            out[k] =
                (three * f.value(i)[k] - four * f.value(i - 1)[k] + f.value(i - 2)[k]) / two_h;
        }
    } else {
        return Err(Error::Structural { t: f.scale().grid().point(i) });
    }
    Ok(())
}

/// Delta derivative at grid index `i`.
pub fn delta_derivative_idx<R: Real>(f: &GridFunction<R>, i: usize) -> Result<Vec<R>, R> {
    let scale = f.scale();
    let t = scale.grid().point(i);
    if !scale.in_delta_domain_idx(i) {
        return Err(Error::OutsideDomain { t, domain: "T^kappa" });
    }
    let mut out = vec![R::zero(); f.dim()];
    if scale.class_idx(i).is_right_scattered() {
        let mu = scale.mu_idx(i);
        for k in 0..f.dim() {
            out[k] = (f.value(i + 1)[k] - f.value(i)[k]) / mu;
        }
    } else {
        let seg = scale.grid().segment_of(i);
        let (lo, hi) = scale.grid().segment_range(seg);
        let h = scale.grid().segment_spacing(seg);
        dense_stencil(f, i, lo, hi, h, &mut out)?;
    }
    Ok(out)
}

/// Delta derivative at the scale point `t`.
pub fn delta_derivative<R: Real>(f: &GridFunction<R>, t: R) -> Result<Vec<R>, R> {
    delta_derivative_idx(f, f.scale().grid_index_of(t)?)
}

/// Nabla derivative at grid index `i`.
pub fn nabla_derivative_idx<R: Real>(f: &GridFunction<R>, i: usize) -> Result<Vec<R>, R> {
    let scale = f.scale();
    let t = scale.grid().point(i);
    if !scale.in_nabla_domain_idx(i) {
        return Err(Error::OutsideDomain { t, domain: "T_kappa" });
    }
    let mut out = vec![R::zero(); f.dim()];
    if scale.class_idx(i).is_left_scattered() {
        let nu = scale.nu_idx(i);
        for k in 0..f.dim() {
            out[k] = (f.value(i)[k] - f.value(i - 1)[k]) / nu;
        }
    } else {
        let seg = scale.grid().segment_of(i);
        let (lo, hi) = scale.grid().segment_range(seg);
        let h = scale.grid().segment_spacing(seg);
        dense_stencil(f, i, lo, hi, h, &mut out)?;
    }
    Ok(out)
}

/// Nabla derivative at the scale point `t`.
pub fn nabla_derivative<R: Real>(f: &GridFunction<R>, t: R) -> Result<Vec<R>, R> {
    nabla_derivative_idx(f, f.scale().grid_index_of(t)?)
}

fn derivative_all<R: Real>(
    f: &GridFunction<R>,
    eval: impl Fn(&GridFunction<R>, usize) -> Result<Vec<R>, R>,
    in_domain: impl Fn(&TimeScale<R>, usize) -> bool,
) -> FlaggedGridFunction<R> {
    let scale = f.scale().clone();
    let n = f.len();
    let mut values = vec![R::nan(); n * f.dim()];
    let mut quality = vec![Quality::OutOfDomain; n];
    for i in 0..n {
        if !in_domain(&scale, i) {
            continue;
        }
        match eval(f, i) {
            Ok(v) => {
                values[i * f.dim()..(i + 1) * f.dim()].copy_from_slice(&v);
                quality[i] = if scale.is_junction_idx(i) {
                    Quality::Junction
                } else {
                    Quality::Ok
                };
            }
            Err(_) => quality[i] = Quality::OutOfDomain,
        }
    }
    FlaggedGridFunction {
        values: GridFunction::from_values(scale, f.dim(), values).expect("sized above"),
        quality,
    }
}

/// Delta derivative at every grid point, with junction flags.
pub fn delta_derivative_all<R: Real>(f: &GridFunction<R>) -> FlaggedGridFunction<R> {
    derivative_all(f, delta_derivative_idx, |s, i| s.in_delta_domain_idx(i))
}

/// Nabla derivative at every grid point, with junction flags.
pub fn nabla_derivative_all<R: Real>(f: &GridFunction<R>) -> FlaggedGridFunction<R> {
    derivative_all(f, nabla_derivative_idx, |s, i| s.in_nabla_domain_idx(i))
}

/// Sparse per-index override of integrand values inside dense-run
/// quadrature.
///
/// A delta derivative is the scattered quotient at a right-scattered
/// segment end, but the Riemann part of the delta integral needs the
/// rd-limit of the integrand there (the value the derivative approaches
/// from inside the segment). Integrands built from derivative fields carry
/// these limits so the quadrature integrates the right function.
#[derive(Debug, Clone, Default)]
pub struct DenseLimits<R> {
    map: std::collections::BTreeMap<usize, Vec<R>>,
}

impl<R: Real> DenseLimits<R> {
    pub fn new() -> Self {
        DenseLimits { map: std::collections::BTreeMap::new() }
    }

    pub fn insert(&mut self, idx: usize, value: Vec<R>) {
        self.map.insert(idx, value);
    }

    pub fn get(&self, idx: usize) -> Option<&[R]> {
        self.map.get(&idx).map(|v| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.map.keys().copied()
    }
}

/// Integrand view used by the quadrature: pointwise values with the dense
/// limits spliced in.
struct QuadView<'a, R: Real> {
    f: &'a GridFunction<R>,
    limits: Option<&'a DenseLimits<R>>,
}

impl<'a, R: Real> QuadView<'a, R> {
    fn value(&self, i: usize) -> &[R] {
        if let Some(l) = self.limits {
            if let Some(v) = l.get(i) {
                return v;
            }
        }
        self.f.value(i)
    }

    fn dim(&self) -> usize {
        self.f.dim()
    }
}

/// Grid function bundled with its delta and nabla derivative fields.
///
/// Built either from closures (exact classical derivatives at dense points)
/// or from raw grid values (finite differences). Out-of-domain slots hold
/// NaN and are never read by the integral routines. `delta_limits` and
/// `nabla_limits` hold the classical one-sided limits at segment ends whose
/// pointwise derivative is a scattered quotient.
#[derive(Debug, Clone)]
pub struct SmoothGridFunction<R: Real> {
    pub values: GridFunction<R>,
    pub delta: GridFunction<R>,
    pub nabla: GridFunction<R>,
    pub delta_limits: DenseLimits<R>,
    pub nabla_limits: DenseLimits<R>,
}

impl<R: Real> SmoothGridFunction<R> {
    /// Samples `f` and uses `df` for the classical derivative at dense
    /// points; scattered points always use the exact quotient of values.
    pub fn from_closures(
        scale: Arc<TimeScale<R>>,
        dim: usize,
        f: impl Fn(R) -> Vec<R>,
        df: impl Fn(R) -> Vec<R>,
    ) -> Self {
        let values = GridFunction::sample(scale.clone(), dim, f);
        let n = values.len();
        let mut delta = vec![R::nan(); n * dim];
        let mut nabla = vec![R::nan(); n * dim];
        for i in 0..n {
            let t = scale.grid().point(i);
            let class = scale.class_idx(i);
            if scale.in_delta_domain_idx(i) {
                let slot = &mut delta[i * dim..(i + 1) * dim];
                if class.is_right_scattered() {
                    let mu = scale.mu_idx(i);
                    for k in 0..dim {
                        slot[k] = (values.value(i + 1)[k] - values.value(i)[k]) / mu;
                    }
                } else {
                    slot.copy_from_slice(&df(t));
                }
            }
            if scale.in_nabla_domain_idx(i) {
                let slot = &mut nabla[i * dim..(i + 1) * dim];
                if class.is_left_scattered() {
                    let nu = scale.nu_idx(i);
                    for k in 0..dim {
                        slot[k] = (values.value(i)[k] - values.value(i - 1)[k]) / nu;
                    }
                } else {
                    slot.copy_from_slice(&df(t));
                }
            }
        }
        let mut delta_limits = DenseLimits::new();
        let mut nabla_limits = DenseLimits::new();
        for (seg, s) in scale.segments().iter().enumerate() {
            if s.is_point() {
                continue;
            }
            let (lo, hi) = scale.grid().segment_range(seg);
            if scale.class_idx(hi).is_right_scattered() {
                delta_limits.insert(hi, df(scale.grid().point(hi)));
            }
            if scale.class_idx(lo).is_left_scattered() {
                nabla_limits.insert(lo, df(scale.grid().point(lo)));
            }
        }
        let delta = GridFunction::from_values(scale.clone(), dim, delta).expect("sized");
        let nabla = GridFunction::from_values(scale, dim, nabla).expect("sized");
        SmoothGridFunction { values, delta, nabla, delta_limits, nabla_limits }
    }

    /// Derives both fields from grid values by finite differences.
    pub fn from_grid(values: GridFunction<R>) -> Self {
        let scale = values.scale().clone();
        let delta = delta_derivative_all(&values).values;
        let nabla = nabla_derivative_all(&values).values;
        let mut delta_limits = DenseLimits::new();
        let mut nabla_limits = DenseLimits::new();
        let dim = values.dim();
        let mut buf = vec![R::zero(); dim];
        for (seg, s) in scale.segments().iter().enumerate() {
            if s.is_point() {
                continue;
            }
            let (lo, hi) = scale.grid().segment_range(seg);
            let h = scale.grid().segment_spacing(seg);
            if scale.class_idx(hi).is_right_scattered()
                && dense_stencil(&values, hi, lo, hi, h, &mut buf).is_ok()
            {
                delta_limits.insert(hi, buf.clone());
            }
            if scale.class_idx(lo).is_left_scattered()
                && dense_stencil(&values, lo, lo, hi, h, &mut buf).is_ok()
            {
                nabla_limits.insert(lo, buf.clone());
            }
        }
        SmoothGridFunction { values, delta, nabla, delta_limits, nabla_limits }
    }

    pub fn scale(&self) -> &Arc<TimeScale<R>> {
        self.values.scale()
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }
}

/// Composite Simpson over the sample range `[s, e]` of one dense run.
///
/// An odd number of sub-intervals is closed with a cubic Newton-Cotes tail
/// over the last interval, which keeps the local order of the Simpson pairs
/// so that splitting a range mid-run stays additive to rounding.
/// `seg_lo` / `seg_hi` give the full segment range for neighbour borrowing.
fn simpson_run<R: Real>(
    f: &QuadView<'_, R>,
    s: usize,
    e: usize,
    h: R,
    seg_lo: usize,
    seg_hi: usize,
    acc: &mut [R],
) {
    let dim = f.dim();
    let n = e - s;
    if n == 0 {
        return;
    }
    let c12 = R::of(12.0);
    let c24 = R::of(24.0);
    if n == 1 {
        // Single interval: integrate the cubic through four neighbours when
        // the segment has them, the quadratic through three otherwise.
        if e + 1 < seg_hi {
            for k in 0..dim {
                acc[k] += h / c24
                    * (R::of(9.0) * f.value(s)[k] + R::of(19.0) * f.value(e)[k]
                        - R::of(5.0) * f.value(e + 1)[k]
                        + f.value(e + 2)[k]);
            }
        } else if s > seg_lo && e < seg_hi {
            for k in 0..dim {
                acc[k] += h / c24
                    * (-f.value(s - 1)[k]
                        + R::of(13.0) * f.value(s)[k]
                        + R::of(13.0) * f.value(e)[k]
                        - f.value(e + 1)[k]);
            }
        } else if s > seg_lo + 1 {
            for k in 0..dim {
                acc[k] += h / c24
                    * (f.value(s - 2)[k] - R::of(5.0) * f.value(s - 1)[k]
                        + R::of(19.0) * f.value(s)[k]
                        + R::of(9.0) * f.value(e)[k]);
            }
        } else if e < seg_hi {
            for k in 0..dim {
                acc[k] += h / c12
                    * (R::of(5.0) * f.value(s)[k] + R::of(8.0) * f.value(e)[k]
                        - f.value(e + 1)[k]);
            }
        } else if s > seg_lo {
            for k in 0..dim {
                acc[k] += h / c12
                    * (-f.value(s - 1)[k] + R::of(8.0) * f.value(s)[k]
                        + R::of(5.0) * f.value(e)[k]);
            }
        } else {
            // Two-point segment cannot occur by construction; trapezoid fallback.
            for k in 0..dim {
                acc[k] += h * R::of(0.5) * (f.value(s)[k] + f.value(e)[k]);
            }
        }
        return;
    }
    let pairs_end = if n % 2 == 0 { e } else { e - 1 };
    let third = h / R::of(3.0);
    let mut i = s;
    while i < pairs_end {
        for k in 0..dim {
            acc[k] += third
                * (f.value(i)[k] + R::of(4.0) * f.value(i + 1)[k] + f.value(i + 2)[k]);
        }
        i += 2;
    }
    if n % 2 == 1 {
        for k in 0..dim {
            acc[k] += h / c24
                * (f.value(e - 3)[k] - R::of(5.0) * f.value(e - 2)[k]
                    + R::of(19.0) * f.value(e - 1)[k]
                    + R::of(9.0) * f.value(e)[k]);
        }
    }
}

/// Delta integral of `f` over `[c, d]`, oriented (negated when `c > d`).
///
/// Right-scattered points of `[c, d)` contribute exactly `mu(t) f(t)`; dense
/// runs are integrated by composite Simpson on the sample grid. The plain
/// entry point assumes the integrand values are rd-continuous across
/// segment ends; derivative-built integrands should use
/// [`delta_integral_limited`] with their dense limits.
pub fn delta_integral<R: Real>(f: &GridFunction<R>, c: R, d: R) -> Result<Vec<R>, R> {
    delta_integral_limited(f, None, c, d)
}

/// Delta integral with rd-limit overrides for the dense-run quadrature.
/// The scattered contributions always use the pointwise values.
pub fn delta_integral_limited<R: Real>(
    f: &GridFunction<R>,
    limits: Option<&DenseLimits<R>>,
    c: R,
    d: R,
) -> Result<Vec<R>, R> {
    let scale = f.scale();
    let ic = scale.grid_index_of(c)?;
    let id = scale.grid_index_of(d)?;
    let mut acc = vec![R::zero(); f.dim()];
    if ic == id {
        return Ok(acc);
    }
    let (lo, hi, flip) = if ic < id { (ic, id, false) } else { (id, ic, true) };
    let grid = scale.grid();
    let view = QuadView { f, limits };
    let mut i = lo;
    while i < hi {
        if scale.class_idx(i).is_right_scattered() {
            let mu = scale.mu_idx(i);
            for k in 0..f.dim() {
                acc[k] += mu * f.value(i)[k];
            }
            i += 1;
        } else {
            let seg = grid.segment_of(i);
            let (seg_lo, seg_hi) = grid.segment_range(seg);
            let run_end = seg_hi.min(hi);
            simpson_run(&view, i, run_end, grid.segment_spacing(seg), seg_lo, seg_hi, &mut acc);
            i = run_end;
        }
    }
    if flip {
        for v in &mut acc {
            *v = -*v;
        }
    }
    Ok(acc)
}

/// Prefix delta integrals `U(t_i) = integral of f from a to t_i` for every
/// grid point, grouped exactly like `delta_integral(f, a, t_i)`.
pub fn prefix_integrals<R: Real>(f: &GridFunction<R>) -> GridFunction<R> {
    let scale = f.scale().clone();
    let grid = scale.grid();
    let n = grid.len();
    let dim = f.dim();
    let mut out = vec![R::zero(); n * dim];
    let mut acc = vec![R::zero(); dim];
    let mut i = 0usize;
    while i < n {
        out[i * dim..(i + 1) * dim].copy_from_slice(&acc);
        if i + 1 >= n {
            break;
        }
        if scale.class_idx(i).is_right_scattered() {
            let mu = scale.mu_idx(i);
            for k in 0..dim {
                acc[k] += mu * f.value(i)[k];
            }
            i += 1;
        } else {
            let seg = grid.segment_of(i);
            let (seg_lo, seg_hi) = grid.segment_range(seg);
            let h = grid.segment_spacing(seg);
            let view = QuadView { f, limits: None };
            // Fill the whole run with prefix values grouped from the run start.
            let base = acc.clone();
            for j in i + 1..=seg_hi {
                let mut val = base.clone();
                simpson_run(&view, i, j, h, seg_lo, seg_hi, &mut val);
                out[j * dim..(j + 1) * dim].copy_from_slice(&val);
                if j == seg_hi {
                    acc = val;
                }
            }
            i = seg_hi;
        }
    }
    GridFunction::from_values(scale, dim, out).expect("sized")
}

/// Delta antiderivative vanishing at `a`.
#[derive(Debug, Clone)]
pub struct Antiderivative<R: Real> {
    pub values: GridFunction<R>,
}

/// Builds the unique delta antiderivative with `U(a) = 0`.
pub fn antiderivative<R: Real>(f: &GridFunction<R>) -> Antiderivative<R> {
    Antiderivative { values: prefix_integrals(f) }
}

/// Residual of the inverse identity `rho^delta(t) * sigma^nabla(t) = 1`.
///
/// At doubly scattered points the product is evaluated as the exact ratio
/// `(nu * mu) / (mu * nu)`, so the residual is exactly zero there.
pub fn inverse_identity_residual<R: Real>(scale: &TimeScale<R>, t: R) -> Result<R, R> {
    let i = scale.grid_index_of(t)?;
    if !scale.in_core_domain_idx(i) {
        return Err(Error::OutsideDomain { t, domain: "T^kappa_kappa" });
    }
    let class = scale.class_idx(i);
    if class.is_sigma_junction() || class.is_rho_junction() {
        return Err(Error::Junction { t });
    }
    let product = if class.is_right_scattered() {
        // Both scattered here: junctions were excluded above.
        let mu = scale.mu_idx(i);
        let nu = scale.nu_idx(i);
        (nu * mu) / (mu * nu)
    } else {
        let rd = scale.rho_delta_idx(i)?;
        let sn = scale.sigma_nabla_idx(i)?;
        rd * sn
    };
    Ok((product - R::one()).abs())
}

/// Residuals of the chain rules for the composed jump functions.
#[derive(Debug, Clone, Copy)]
pub struct CompositionResidual<R> {
    /// `|(u o sigma)^nabla - sigma^nabla * u^delta|`, componentwise max.
    pub sigma_side: R,
    /// `|(u o rho)^delta - rho^delta * u^nabla|`, componentwise max.
    pub rho_side: R,
}

impl<R: Real> CompositionResidual<R> {
    pub fn max(&self) -> R {
        self.sigma_side.max(self.rho_side)
    }
}

/// Checks both composition identities at the core-domain point `t`.
pub fn composition_identity_residual<R: Real>(
    f: &GridFunction<R>,
    t: R,
) -> Result<CompositionResidual<R>, R> {
    let scale = f.scale().clone();
    let i = scale.grid_index_of(t)?;
    if !scale.in_core_domain_idx(i) {
        return Err(Error::OutsideDomain { t, domain: "T^kappa_kappa" });
    }
    let class = scale.class_idx(i);
    if class.is_sigma_junction() || class.is_rho_junction() {
        return Err(Error::Junction { t });
    }
    let dim = f.dim();
    let grid = scale.grid();

    // sigma side: nabla-differentiate u o sigma.
    let mut lhs_sigma = vec![R::zero(); dim];
    if class.is_left_scattered() {
        let nu = scale.nu_idx(i);
        let gi = f.value(scale.sigma_idx(i));
        let gprev = f.value(scale.sigma_idx(i - 1));
        for k in 0..dim {
            lhs_sigma[k] = (gi[k] - gprev[k]) / nu;
        }
    } else {
        // u o sigma equals u on the dense run, except at a right-scattered
        // run end where sigma jumps; clip the stencil away from it.
        let seg = grid.segment_of(i);
        let (lo, hi) = grid.segment_range(seg);
        let hi_clip = if scale.class_idx(hi).is_right_scattered() { hi - 1 } else { hi };
        dense_stencil(f, i, lo, hi_clip, grid.segment_spacing(seg), &mut lhs_sigma)?;
    }
    let rhs_factor = scale.sigma_nabla_idx(i)?;
    let u_delta = delta_derivative_idx(f, i)?;
    let mut sigma_side = R::zero();
    for k in 0..dim {
        sigma_side = sigma_side.max((lhs_sigma[k] - rhs_factor * u_delta[k]).abs());
    }

    // rho side: delta-differentiate u o rho.
    let mut lhs_rho = vec![R::zero(); dim];
    if class.is_right_scattered() {
        let mu = scale.mu_idx(i);
        let hnext = f.value(scale.rho_idx(i + 1));
        let hcur = f.value(scale.rho_idx(i));
        for k in 0..dim {
            lhs_rho[k] = (hnext[k] - hcur[k]) / mu;
        }
    } else {
        let seg = grid.segment_of(i);
        let (lo, hi) = grid.segment_range(seg);
        let lo_clip = if scale.class_idx(lo).is_left_scattered() { lo + 1 } else { lo };
        dense_stencil(f, i, lo_clip, hi, grid.segment_spacing(seg), &mut lhs_rho)?;
    }
    let rhs_factor = scale.rho_delta_idx(i)?;
    let u_nabla = nabla_derivative_idx(f, i)?;
    let mut rho_side = R::zero();
    for k in 0..dim {
        rho_side = rho_side.max((lhs_rho[k] - rhs_factor * u_nabla[k]).abs());
    }

    Ok(CompositionResidual { sigma_side, rho_side })
}

/// Residual of integration by parts, first form:
/// `int f g^delta = [f g] - int f^delta (g o sigma)`.
pub fn ibp_residual_i<R: Real>(
    f: &SmoothGridFunction<R>,
    g: &SmoothGridFunction<R>,
    c: R,
    d: R,
) -> Result<R, R> {
    let scale = f.scale().clone();
    if !f.values.same_grid(&g.values) {
        return Err(Error::GridMismatch);
    }
    let ic = scale.grid_index_of(c)?;
    let id = scale.grid_index_of(d)?;

    // lhs integrand f . g^Delta jumps at right-scattered segment ends.
    let mut lhs_limits = DenseLimits::new();
    for idx in g.delta_limits.indices() {
        let lim = g.delta_limits.get(idx).unwrap();
        lhs_limits.insert(idx, vec![dot(f.values.value(idx), lim)]);
    }
    let lhs = delta_integral_limited(
        &f.values.pointwise_dot(&g.delta)?,
        Some(&lhs_limits),
        c,
        d,
    )?[0];

    let boundary = dot(f.values.value(id), g.values.value(id))
        - dot(f.values.value(ic), g.values.value(ic));
    let dim = f.dim();
    let g_sigma = GridFunction::from_values(
        scale.clone(),
        dim,
        (0..f.values.len())
            .flat_map(|i| g.values.value(scale.sigma_idx(i)).to_vec())
            .collect(),
    )?;
    // Both factors of f^Delta . (g o sigma) jump at those ends: the
    // derivative tends to its classical limit and g o sigma to g itself.
    let mut rhs_limits = DenseLimits::new();
    for idx in f.delta_limits.indices() {
        let lim = f.delta_limits.get(idx).unwrap();
        rhs_limits.insert(idx, vec![dot(lim, g.values.value(idx))]);
    }
    let rhs_int = delta_integral_limited(
        &f.delta.pointwise_dot(&g_sigma)?,
        Some(&rhs_limits),
        c,
        d,
    )?[0];
    Ok((lhs - (boundary - rhs_int)).abs())
}

/// Residual of integration by parts, second form:
/// `int f g^delta = [f(rho(.)) g] - int rho^delta f^nabla g`.
///
/// Fails at scattered-to-dense junctions inside the range, where `rho^delta`
/// does not exist.
pub fn ibp_residual_ii<R: Real>(
    f: &SmoothGridFunction<R>,
    g: &SmoothGridFunction<R>,
    c: R,
    d: R,
) -> Result<R, R> {
    let scale = f.scale().clone();
    if !f.values.same_grid(&g.values) {
        return Err(Error::GridMismatch);
    }
    let ic = scale.grid_index_of(c)?;
    let id = scale.grid_index_of(d)?;
    // rho^delta is needed on the delta domain only; a left-scattered b
    // classifies as (RD, LS) by convention but never enters the integral.
    for i in ic..=id {
        if scale.in_delta_domain_idx(i) && scale.class_idx(i).is_rho_junction() {
            return Err(Error::Junction { t: scale.grid().point(i) });
        }
    }

    let mut lhs_limits = DenseLimits::new();
    for idx in g.delta_limits.indices() {
        let lim = g.delta_limits.get(idx).unwrap();
        lhs_limits.insert(idx, vec![dot(f.values.value(idx), lim)]);
    }
    let lhs = delta_integral_limited(
        &f.values.pointwise_dot(&g.delta)?,
        Some(&lhs_limits),
        c,
        d,
    )?[0];

    let boundary = dot(f.values.value(scale.rho_idx(id)), g.values.value(id))
        - dot(f.values.value(scale.rho_idx(ic)), g.values.value(ic));

    // rho^delta vanishes at right-scattered points preceded by nothing, in
    // particular at a scattered left endpoint; skip the nabla factor there.
    // Where such a point closes a dense run, the quadrature needs the
    // rd-limit instead: rho^delta tends to one and f^nabla is classical.
    let n = f.values.len();
    let mut integrand = vec![R::zero(); n];
    let mut rhs_limits = DenseLimits::new();
    for i in 0..n {
        if !scale.in_delta_domain_idx(i) {
            continue;
        }
        let rd = scale.rho_delta_idx(i)?;
        if scale.class_idx(i).is_sigma_junction() {
            rhs_limits.insert(i, vec![dot(f.nabla.value(i), g.values.value(i))]);
        }
        if rd == R::zero() {
            continue;
        }
        integrand[i] = rd * dot(f.nabla.value(i), g.values.value(i));
    }
    let integrand = GridFunction::from_values(scale, 1, integrand)?;
    let rhs_int = delta_integral_limited(&integrand, Some(&rhs_limits), c, d)?[0];
    Ok((lhs - (boundary - rhs_int)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::parse_literal;

    fn arc(ts: TimeScale<f64>) -> Arc<TimeScale<f64>> {
        Arc::new(ts)
    }

    fn discrete_012() -> Arc<TimeScale<f64>> {
        arc(TimeScale::from_points(&[0.0, 1.0, 2.0]).unwrap())
    }

    #[test]
    fn delta_derivative_examples() {
        let t = discrete_012();
        let f = GridFunction::sample_scalar(t, |x| x * x);
        assert_eq!(delta_derivative(&f, 1.0).unwrap(), vec![3.0]);

        let c = arc(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
        let f = GridFunction::sample_scalar(c, |x| x * x);
        assert!((delta_derivative(&f, 0.5).unwrap()[0] - 1.0).abs() < 1e-6);

        let m = arc(TimeScale::new(vec![(0.0, 1.0), (2.0, 2.0)], Some(0.01)).unwrap());
        let f = GridFunction::sample_scalar(m, |x| x);
        assert_eq!(delta_derivative(&f, 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn nabla_derivative_examples() {
        let t = discrete_012();
        let f = GridFunction::sample_scalar(t, |x| x * x);
        assert_eq!(nabla_derivative(&f, 1.0).unwrap(), vec![1.0]);

        let c = arc(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
        let f = GridFunction::sample_scalar(c, |x| x * x);
        assert!((nabla_derivative(&f, 0.5).unwrap()[0] - 1.0).abs() < 1e-6);

        let m = arc(TimeScale::new(vec![(0.0, 1.0), (2.0, 2.0)], Some(0.01)).unwrap());
        let f = GridFunction::sample_scalar(m, |x| x);
        assert_eq!(nabla_derivative(&f, 2.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn derivative_domain_errors() {
        let t = discrete_012();
        let f = GridFunction::sample_scalar(t, |x| x);
        assert!(matches!(
            delta_derivative(&f, 2.0),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            nabla_derivative(&f, 0.0),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn delta_integral_uniform_constant() {
        // Dyadic step: the graininess sum telescopes exactly.
        let t = arc(TimeScale::uniform(0.0, 1.0, 16).unwrap());
        let f = GridFunction::sample_scalar(t, |_| 1.0);
        assert_eq!(delta_integral(&f, 0.0, 1.0).unwrap()[0], 1.0);

        let t = arc(TimeScale::uniform(0.0, 1.0, 10).unwrap());
        let f = GridFunction::sample_scalar(t, |_| 1.0);
        assert!((delta_integral(&f, 0.0, 1.0).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_integral_uniform_linear_matches_sum_oracle() {
        let t = arc(TimeScale::uniform(0.0, 1.0, 10).unwrap());
        let f = GridFunction::sample_scalar(t.clone(), |x| x);
        // Independent summation oracle over the scattered points.
        let mut oracle = 0.0;
        let g = t.grid();
        for i in 0..g.len() - 1 {
            oracle += (g.point(i + 1) - g.point(i)) * g.point(i);
        }
        assert!((oracle - 0.45).abs() < 1e-14);
        let got = delta_integral(&f, 0.0, 1.0).unwrap()[0];
        assert!((got - oracle).abs() < 1e-15);
    }

    #[test]
    fn delta_integral_classical() {
        let t = arc(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
        let f = GridFunction::sample_scalar(t, |x| x);
        assert!((delta_integral(&f, 0.0, 1.0).unwrap()[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn delta_integral_orientation_and_partial_ranges() {
        let t = arc(TimeScale::interval(0.0, 1.0, Some(0.1)).unwrap());
        let f = GridFunction::sample_scalar(t.clone(), |x| x * x);
        let fwd = delta_integral(&f, 0.2, 0.9).unwrap()[0];
        let back = delta_integral(&f, 0.9, 0.2).unwrap()[0];
        assert_eq!(fwd, -back);
        // Odd number of sample intervals: tail rule still fourth order.
        let exact = (0.9f64.powi(3) - 0.2f64.powi(3)) / 3.0;
        assert!((fwd - exact).abs() < 1e-12);
        assert!(delta_integral(&f, 0.05, 0.9).is_err());
    }

    #[test]
    fn antiderivative_examples() {
        let m = arc(parse_literal("union: [0,1]; 1.5; 2; dense_step: 0.05").unwrap());
        let c = 0.7;
        let f = GridFunction::sample_scalar(m.clone(), |_| c);
        let u = antiderivative(&f);
        assert_eq!(u.values.value(0)[0], 0.0);
        for i in 0..m.grid().len() {
            let t = m.grid().point(i);
            assert!((u.values.value(i)[0] - c * t).abs() < 1e-12);
        }

        let z = GridFunction::sample_scalar(m.clone(), |_| 0.0);
        let uz = antiderivative(&z);
        assert!(uz.values.raw().iter().all(|&v| v == 0.0));

        // Uniform-discrete linear integrand against the prefix-sum oracle.
        let t = arc(TimeScale::uniform(0.0, 1.0, 10).unwrap());
        let f = GridFunction::sample_scalar(t.clone(), |x| x);
        let u = antiderivative(&f);
        let g = t.grid();
        let mut oracle = 0.0;
        for i in 0..g.len() {
            assert!((u.values.value(i)[0] - oracle).abs() < 1e-15);
            if i + 1 < g.len() {
                oracle += (g.point(i + 1) - g.point(i)) * g.point(i);
            }
        }
    }

    #[test]
    fn antiderivative_delta_derivative_reproduces_integrand() {
        let m = arc(parse_literal("union: [0,1]; 1.25 1.5 2; dense_step: 0.01").unwrap());
        let f = GridFunction::sample_scalar(m.clone(), |x| (1.3 * x).cos());
        let u = antiderivative(&f);
        for i in 0..m.grid().len() {
            if m.grid().role(i) != crate::timescale::PointRole::Structural {
                continue;
            }
            if !m.in_delta_domain_idx(i) {
                continue;
            }
            let got = delta_derivative_idx(&u.values, i).unwrap()[0];
            let tol = if m.class_idx(i).is_right_scattered() { 1e-12 } else { 1e-3 };
            assert!((got - f.value(i)[0]).abs() <= tol, "at index {i}");
        }
    }

    #[test]
    fn antiderivative_matches_delta_integral() {
        let m = arc(parse_literal("union: [0,1]; 1.25 1.5 2; dense_step: 0.01").unwrap());
        let f = GridFunction::sample_scalar(m.clone(), |x| (2.0 * x).sin());
        let u = antiderivative(&f);
        for i in (0..m.grid().len()).step_by(7) {
            let t = m.grid().point(i);
            let direct = delta_integral(&f, 0.0, t).unwrap()[0];
            assert!((u.values.value(i)[0] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_identity_examples() {
        let t = arc(TimeScale::from_points(&[0.0, 0.5, 2.0]).unwrap());
        assert_eq!(inverse_identity_residual(t.as_ref(), 0.5).unwrap(), 0.0);

        let c = arc(TimeScale::interval(0.0, 1.0, Some(0.01)).unwrap());
        assert!(inverse_identity_residual(c.as_ref(), 0.5).unwrap() <= 1e-10);

        let u = arc(TimeScale::uniform(0.0, 1.0, 10).unwrap());
        assert_eq!(inverse_identity_residual(u.as_ref(), 0.5).unwrap(), 0.0);

        let m = arc(TimeScale::new(vec![(0.0, 0.5), (1.0, 1.0), (1.5, 1.5)], Some(0.1)).unwrap());
        assert!(matches!(
            inverse_identity_residual(m.as_ref(), 0.5),
            Err(Error::Junction { .. })
        ));
    }

    #[test]
    fn composition_identity_examples() {
        let t = discrete_012();
        let f = GridFunction::sample_scalar(t, |x| x);
        let r = composition_identity_residual(&f, 1.0).unwrap();
        assert_eq!(r.sigma_side, 0.0);
        assert_eq!(r.rho_side, 0.0);

        // Dyadic uniform grid: graininess values are bit-identical, so the
        // quadratic case is exact as well.
        let u = arc(TimeScale::uniform(0.0, 1.0, 8).unwrap());
        let f = GridFunction::sample_scalar(u.clone(), |x| x * x);
        for i in 1..u.grid().len() - 1 {
            let r = composition_identity_residual(&f, u.grid().point(i)).unwrap();
            assert_eq!(r.max(), 0.0, "at index {i}");
        }

        let c = arc(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
        let f = GridFunction::sample_scalar(c.clone(), |x| x.sin());
        for &t in &[0.25, 0.5, 0.75] {
            let r = composition_identity_residual(&f, t).unwrap();
            assert!(r.max() <= 1e-6, "residual {} at {t}", r.max());
        }
    }

    #[test]
    fn ibp_first_form() {
        let m = arc(parse_literal("points: 0 1 2").unwrap());
        let one = SmoothGridFunction::from_closures(m.clone(), 1, |_| vec![1.0], |_| vec![0.0]);
        assert!(ibp_residual_i(&one, &one, 0.0, 2.0).unwrap() <= 1e-15);

        // Hand expansion: lhs = 1, boundary = 4, rhs integral = 3.
        let lin = SmoothGridFunction::from_closures(m, 1, |x| vec![x], |_| vec![1.0]);
        assert!(ibp_residual_i(&lin, &lin, 0.0, 2.0).unwrap() <= 1e-15);

        let c = arc(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
        let f = SmoothGridFunction::from_closures(c.clone(), 1, |x| vec![x.sin()], |x| vec![x.cos()]);
        let g = SmoothGridFunction::from_closures(c, 1, |x| vec![x.cos()], |x| vec![-x.sin()]);
        assert!(ibp_residual_i(&f, &g, 0.0, 1.0).unwrap() <= 1e-8);
    }

    #[test]
    fn ibp_second_form() {
        let m = arc(parse_literal("points: 0 1 2").unwrap());
        let one = SmoothGridFunction::from_closures(m.clone(), 1, |_| vec![1.0], |_| vec![0.0]);
        assert_eq!(ibp_residual_ii(&one, &one, 0.0, 2.0).unwrap(), 0.0);
        let lin = SmoothGridFunction::from_closures(m, 1, |x| vec![x], |_| vec![1.0]);
        assert!(ibp_residual_ii(&lin, &lin, 0.0, 2.0).unwrap() <= 1e-15);

        let c = arc(TimeScale::interval(0.0, 1.0, Some(1e-3)).unwrap());
        let f = SmoothGridFunction::from_closures(c.clone(), 1, |x| vec![x.sin()], |x| vec![x.cos()]);
        let g = SmoothGridFunction::from_closures(c, 1, |x| vec![x.cos()], |x| vec![-x.sin()]);
        assert!(ibp_residual_ii(&f, &g, 0.0, 1.0).unwrap() <= 1e-8);

        // Leading interval followed by scattered points: still valid, the
        // dense-to-scattered junction has rho^delta = 0.
        let mix = arc(parse_literal("union: [0, 0.5]; 0.6 0.7 0.8 0.9 1; dense_step: 0.001").unwrap());
        let f = SmoothGridFunction::from_closures(mix.clone(), 1, |x| vec![x.sin()], |x| vec![x.cos()]);
        let g = SmoothGridFunction::from_closures(mix, 1, |x| vec![x * x], |x| vec![2.0 * x]);
        let r = ibp_residual_ii(&f, &g, 0.0, 1.0).unwrap();
        assert!(r <= 1e-7, "residual {r}");

        // Scattered-to-dense junction in range: flagged error.
        let bad = arc(parse_literal("points: -1 -0.5; union: [0, 1]; dense_step: 0.01").unwrap());
        let f = SmoothGridFunction::from_closures(bad.clone(), 1, |x| vec![x], |_| vec![1.0]);
        let g = SmoothGridFunction::from_closures(bad, 1, |x| vec![x], |_| vec![1.0]);
        assert!(matches!(
            ibp_residual_ii(&f, &g, -1.0, 1.0),
            Err(Error::Junction { .. })
        ));
    }

    #[test]
    fn derivative_flags_on_junction_scale() {
        let m = arc(parse_literal("union: [0, 0.5]; 0.75 1; dense_step: 0.05").unwrap());
        let f = GridFunction::sample_scalar(m.clone(), |x| x);
        let d = delta_derivative_all(&f);
        let j = m.grid_index_of(0.5).unwrap();
        assert_eq!(d.quality[j], Quality::Junction);
        // The quotient value itself is fine at the junction.
        assert!((d.values.value(j)[0] - 1.0).abs() < 1e-12);
        let last = m.grid().len() - 1;
        assert_eq!(d.quality[last], Quality::OutOfDomain);
        assert!(d.values.value(last)[0].is_nan());
    }

    #[test]
    fn scattered_linearity_is_exact_to_rounding() {
        let t = arc(TimeScale::from_points(&[0.0, 0.3, 1.0, 2.5]).unwrap());
        let f = GridFunction::sample_scalar(t.clone(), |x| x * x);
        let g = GridFunction::sample_scalar(t.clone(), |x| (3.0 * x).sin());
        let combo = f.add_scaled(&g, -2.5).unwrap();
        for i in 0..t.grid().len() - 1 {
            let d_combo = delta_derivative_idx(&combo, i).unwrap();
            let df = delta_derivative_idx(&f, i).unwrap();
            let dg = delta_derivative_idx(&g, i).unwrap();
            assert!((d_combo[0] - (df[0] - 2.5 * dg[0])).abs() < 1e-13);
        }
        let ic = delta_integral(&combo, 0.0, 2.5).unwrap()[0];
        let if_ = delta_integral(&f, 0.0, 2.5).unwrap()[0];
        let ig = delta_integral(&g, 0.0, 2.5).unwrap()[0];
        assert!((ic - (if_ - 2.5 * ig)).abs() < 1e-13);
    }

    #[test]
    fn constant_characterization_on_scattered_scale() {
        let t = arc(TimeScale::from_points(&[0.0, 0.4, 1.1, 2.0]).unwrap());
        let c = GridFunction::sample_scalar(t.clone(), |_| 3.25);
        let d = delta_derivative_all(&c);
        for i in 0..t.grid().len() {
            if d.quality[i] == Quality::Ok {
                assert_eq!(d.values.value(i)[0], 0.0);
            }
        }
        let f = GridFunction::sample_scalar(t, |x| x);
        let d = delta_derivative_all(&f);
        assert!((0..f.len()).any(|i| d.quality[i] == Quality::Ok && d.values.value(i)[0] != 0.0));
    }
}
