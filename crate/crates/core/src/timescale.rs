//! Bounded time scales and their structural operators.
//!
//! A time scale is stored as an ordered union of disjoint closed intervals;
//! isolated points are degenerate intervals. The jump operators sigma / rho,
//! the graininess functions mu / nu and point classification are computed
//! exactly from the segment endpoints, never from the sampling grid.
//!
//! The sampling grid refines every non-degenerate interval with an even
//! number of uniform sub-intervals of width at most `dense_step`; downstream
//! quadrature and finite differences operate on that grid.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One closed interval `[lo, hi]` of the scale; `lo == hi` is an isolated point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<R> {
    pub lo: R,
    pub hi: R,
}

impl<R: Real> Segment<R> {
    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn len(&self) -> R {
        self.hi - self.lo
    }
}

/// Density of a point seen from one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    Dense,
    Scattered,
}

/// Two-sided classification of a scale point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointClass {
    pub right: Density,
    pub left: Density,
}

impl PointClass {
    pub fn is_right_scattered(&self) -> bool {
        self.right == Density::Scattered
    }

    pub fn is_left_scattered(&self) -> bool {
        self.left == Density::Scattered
    }

    /// Dense-to-scattered transition: sigma loses continuity here.
    pub fn is_sigma_junction(&self) -> bool {
        self.right == Density::Scattered && self.left == Density::Dense
    }

    /// Scattered-to-dense transition: rho loses continuity here.
    pub fn is_rho_junction(&self) -> bool {
        self.left == Density::Scattered && self.right == Density::Dense
    }

    /// Short code such as "RS,LD" for tables.
    pub fn code(&self) -> &'static str {
        match (self.right, self.left) {
            (Density::Dense, Density::Dense) => "RD,LD",
            (Density::Dense, Density::Scattered) => "RD,LS",
            (Density::Scattered, Density::Dense) => "RS,LD",
            (Density::Scattered, Density::Scattered) => "RS,LS",
        }
    }
}

/// Continuity of the jump operators at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpRegularity {
    pub sigma_continuous: bool,
    pub rho_continuous: bool,
}

/// Role of a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRole {
    /// Segment endpoint or isolated point.
    Structural,
    /// Interior sample of a non-degenerate segment.
    Sample,
}

/// Computational grid of a time scale.
#[derive(Debug, Clone)]
pub struct Grid<R> {
    points: Vec<R>,
    roles: Vec<PointRole>,
    seg_of: Vec<usize>,
    /// Inclusive grid index range per segment.
    seg_range: Vec<(usize, usize)>,
    /// Uniform sample spacing per segment (zero for isolated points).
    seg_spacing: Vec<R>,
}

impl<R: Real> Grid<R> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[R] {
        &self.points
    }

    pub fn point(&self, i: usize) -> R {
        self.points[i]
    }

    pub fn role(&self, i: usize) -> PointRole {
        self.roles[i]
    }

    pub fn segment_of(&self, i: usize) -> usize {
        self.seg_of[i]
    }

    pub fn segment_range(&self, seg: usize) -> (usize, usize) {
        self.seg_range[seg]
    }

    pub fn segment_spacing(&self, seg: usize) -> R {
        self.seg_spacing[seg]
    }
}

/// Truncated scale (`T^kappa`, `T_kappa` or their intersection) as a predicate.
#[derive(Debug, Clone, Copy)]
pub struct KappaDomain<'a, R: Real> {
    scale: &'a TimeScale<R>,
    min: R,
    max: R,
}

impl<'a, R: Real> KappaDomain<'a, R> {
    pub fn contains(&self, t: R) -> bool {
        if !self.scale.contains(t) {
            return false;
        }
        let tol = self.scale.snap_tol();
        t >= self.min - tol && t <= self.max + tol
    }

    pub fn min(&self) -> R {
        self.min
    }

    pub fn max(&self) -> R {
        self.max
    }
}

/// The three truncated domains of a scale.
#[derive(Debug, Clone, Copy)]
pub struct RestrictedDomains<'a, R: Real> {
    /// Domain of the delta derivative.
    pub delta: KappaDomain<'a, R>,
    /// Domain of the nabla derivative.
    pub nabla: KappaDomain<'a, R>,
    /// Intersection of the two.
    pub core: KappaDomain<'a, R>,
}

/// Bounded time scale: ordered disjoint closed intervals plus a sampling step.
#[derive(Debug, Clone)]
pub struct TimeScale<R: Real> {
    segments: Vec<Segment<R>>,
    dense_step: R,
    snap_tol: R,
    grid: Grid<R>,
    class: Vec<PointClass>,
    /// Grid indices of junction points inside the core domain, sorted.
    junction_indices: Vec<usize>,
}

/// Relative tolerance used to snap nearby floats onto the scale.
const SNAP_REL: f64 = 1e-12;

impl<R: Real> TimeScale<R> {
    /// Builds a scale from raw `(lo, hi)` pairs. Pass `None` for the default
    /// sampling step `(b - a) / 1000`.
    pub fn new(segments: Vec<(R, R)>, dense_step: Option<R>) -> Result<Self, R> {
        if segments.is_empty() {
            return Err(Error::InvalidScale("no segments given".into()));
        }
        let mut segs: Vec<Segment<R>> = Vec::with_capacity(segments.len());
        for (lo, hi) in segments {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidScale("segment endpoints must be finite".into()));
            }
            if lo > hi {
                return Err(Error::InvalidScale(format!(
                    "segment [{lo}, {hi}] has lo > hi"
                )));
            }
            segs.push(Segment { lo, hi });
        }
        segs.sort_by(|x, y| x.lo.partial_cmp(&y.lo).expect("finite endpoints"));
        for w in segs.windows(2) {
            if w[0].hi >= w[1].lo {
                return Err(Error::InvalidScale(format!(
                    "segments [{}, {}] and [{}, {}] overlap or touch",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        let a = segs[0].lo;
        let b = segs.last().unwrap().hi;
        let span = b - a;
        if span <= R::zero() && segs.len() == 1 {
            return Err(Error::InvalidScale(
                "scale must contain at least three points".into(),
            ));
        }
        let step = match dense_step {
            Some(s) => {
                if !(s.is_finite() && s > R::zero()) {
                    return Err(Error::InvalidScale("dense_step must be positive".into()));
                }
                s
            }
            None => span / R::of(1000.0),
        };
        let grid = build_grid(&segs, step);
        if grid.len() < 3 {
            return Err(Error::InvalidScale(
                "scale must contain at least three points".into(),
            ));
        }
        let snap_tol = R::of(SNAP_REL) * span;
        let mut scale = TimeScale {
            segments: segs,
            dense_step: step,
            snap_tol,
            grid,
            class: Vec::new(),
            junction_indices: Vec::new(),
        };
        scale.class = (0..scale.grid.len()).map(|i| scale.classify_index(i)).collect();
        scale.junction_indices = scale.scan_junctions();
        Ok(scale)
    }

    /// Scale made of isolated points only.
    pub fn from_points(points: &[R]) -> Result<Self, R> {
        Self::new(points.iter().map(|&t| (t, t)).collect(), None)
    }

    /// Uniform discrete scale `{a, a + h, ..., b}` with `steps` gaps.
    pub fn uniform(a: R, b: R, steps: usize) -> Result<Self, R> {
        if steps < 2 {
            return Err(Error::InvalidScale("uniform scale needs at least 2 steps".into()));
        }
        let h = (b - a) / R::of_usize(steps);
        let mut pts = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = if k == steps { b } else { a + h * R::of_usize(k) };
            pts.push(t);
        }
        Self::from_points(&pts)
    }

    /// Single continuous interval `[a, b]`.
    pub fn interval(a: R, b: R, dense_step: Option<R>) -> Result<Self, R> {
        Self::new(vec![(a, b)], dense_step)
    }

    pub fn a(&self) -> R {
        self.segments[0].lo
    }

    pub fn b(&self) -> R {
        self.segments.last().unwrap().hi
    }

    pub fn span(&self) -> R {
        self.b() - self.a()
    }

    pub fn dense_step(&self) -> R {
        self.dense_step
    }

    pub fn snap_tol(&self) -> R {
        self.snap_tol
    }

    pub fn segments(&self) -> &[Segment<R>] {
        &self.segments
    }

    pub fn grid(&self) -> &Grid<R> {
        &self.grid
    }

    /// Membership test with snapping tolerance.
    pub fn contains(&self, t: R) -> bool {
        self.locate(t).is_ok()
    }

    /// Finds the segment containing `t` (up to the snap tolerance) and the
    /// snapped coordinate.
    pub fn locate(&self, t: R) -> Result<(usize, R), R> {
        let tol = self.snap_tol;
        // Index of the first segment with lo > t.
        let idx = self.segments.partition_point(|s| s.lo <= t);
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some(seg) = self.segments.get(cand) {
                if t >= seg.lo - tol && t <= seg.hi + tol {
                    let snapped = t.max(seg.lo).min(seg.hi);
                    return Ok((cand, snapped));
                }
            }
        }
        let nearest = self
            .segments
            .iter()
            .min_by(|x, y| {
                let dx = dist_to(x, t);
                let dy = dist_to(y, t);
                dx.partial_cmp(&dy).unwrap()
            })
            .unwrap();
        Err(Error::NotInScale {
            t,
            lo: nearest.lo,
            hi: nearest.hi,
        })
    }

    /// Grid index of a scale point, when it coincides with a grid node.
    pub fn grid_index_of(&self, t: R) -> Result<usize, R> {
        let pts = self.grid.points();
        let idx = pts.partition_point(|&x| x < t);
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some(&x) = pts.get(cand) {
                if (x - t).abs() <= self.snap_tol {
                    return Ok(cand);
                }
            }
        }
        Err(Error::NotGridPoint { t })
    }

    /// Forward jump operator, with `sigma(b) = b`.
    pub fn sigma(&self, t: R) -> Result<R, R> {
        let (seg, t) = self.locate(t)?;
        Ok(self.sigma_located(seg, t))
    }

    fn sigma_located(&self, seg: usize, t: R) -> R {
        let s = self.segments[seg];
        if t < s.hi {
            t
        } else if seg + 1 < self.segments.len() {
            self.segments[seg + 1].lo
        } else {
            s.hi
        }
    }

    /// Backward jump operator, with `rho(a) = a`.
    pub fn rho(&self, t: R) -> Result<R, R> {
        let (seg, t) = self.locate(t)?;
        Ok(self.rho_located(seg, t))
    }

    fn rho_located(&self, seg: usize, t: R) -> R {
        let s = self.segments[seg];
        if t > s.lo {
            t
        } else if seg > 0 {
            self.segments[seg - 1].hi
        } else {
            s.lo
        }
    }

    /// Graininess `mu(t) = sigma(t) - t`.
    pub fn mu(&self, t: R) -> Result<R, R> {
        let (seg, t) = self.locate(t)?;
        Ok(self.sigma_located(seg, t) - t)
    }

    /// Backward graininess `nu(t) = t - rho(t)`.
    pub fn nu(&self, t: R) -> Result<R, R> {
        let (seg, t) = self.locate(t)?;
        Ok(t - self.rho_located(seg, t))
    }

    /// Two-sided density classification. The endpoints follow the
    /// `sup emptyset = a`, `inf emptyset = b` convention, so `a` is
    /// left-dense and `b` is right-dense.
    pub fn classify(&self, t: R) -> Result<PointClass, R> {
        let (seg, t) = self.locate(t)?;
        let right = if self.sigma_located(seg, t) > t {
            Density::Scattered
        } else {
            Density::Dense
        };
        let left = if self.rho_located(seg, t) < t {
            Density::Scattered
        } else {
            Density::Dense
        };
        Ok(PointClass { right, left })
    }

    /// Continuity of sigma and rho at `t`.
    pub fn jump_regularity(&self, t: R) -> Result<JumpRegularity, R> {
        let c = self.classify(t)?;
        Ok(JumpRegularity {
            sigma_continuous: !c.is_sigma_junction(),
            rho_continuous: !c.is_rho_junction(),
        })
    }

    /// The truncated domains as predicate objects.
    pub fn restricted_domains(&self) -> RestrictedDomains<'_, R> {
        let a = self.a();
        let b = self.b();
        let last = self.segments.last().unwrap();
        let delta_max = if last.is_point() && self.segments.len() > 1 {
            self.segments[self.segments.len() - 2].hi
        } else if last.is_point() {
            // Single isolated segment cannot occur (card >= 3).
            last.hi
        } else {
            b
        };
        let first = self.segments[0];
        let nabla_min = if first.is_point() { self.segments[1].lo } else { a };
        RestrictedDomains {
            delta: KappaDomain { scale: self, min: a, max: delta_max },
            nabla: KappaDomain { scale: self, min: nabla_min, max: b },
            core: KappaDomain { scale: self, min: nabla_min, max: delta_max },
        }
    }

    /// True when `t` belongs to the delta-derivative domain `T^kappa`.
    pub fn in_delta_domain_idx(&self, i: usize) -> bool {
        i < self.grid.len() - 1 || !self.class[self.grid.len() - 1].is_left_scattered()
    }

    /// True when `t` belongs to the nabla-derivative domain `T_kappa`.
    pub fn in_nabla_domain_idx(&self, i: usize) -> bool {
        i > 0 || !self.class[0].is_right_scattered()
    }

    pub fn in_core_domain_idx(&self, i: usize) -> bool {
        self.in_delta_domain_idx(i) && self.in_nabla_domain_idx(i)
    }

    /// Junction points: core-domain points where a dense stretch abuts a
    /// scattered one, so that sigma or rho loses the differentiability the
    /// solver relies on. Empty report means the scale is admissible.
    pub fn admissibility_report(&self) -> Vec<R> {
        self.junction_indices
            .iter()
            .map(|&i| self.grid.point(i))
            .collect()
    }

    pub fn is_admissible(&self) -> bool {
        self.junction_indices.is_empty()
    }

    pub fn junction_indices(&self) -> &[usize] {
        &self.junction_indices
    }

    pub fn is_junction_idx(&self, i: usize) -> bool {
        self.junction_indices.binary_search(&i).is_ok()
    }

    // --- index-based structural queries (exact, grid-aligned) ---

    pub fn class_idx(&self, i: usize) -> PointClass {
        self.class[i]
    }

    /// Grid index of `sigma(t_i)`.
    pub fn sigma_idx(&self, i: usize) -> usize {
        if self.class[i].is_right_scattered() {
            i + 1
        } else {
            i
        }
    }

    /// Grid index of `rho(t_i)`.
    pub fn rho_idx(&self, i: usize) -> usize {
        if self.class[i].is_left_scattered() {
            i - 1
        } else {
            i
        }
    }

    /// Exact graininess at grid index `i`, computed from segment endpoints.
    pub fn mu_idx(&self, i: usize) -> R {
        let seg = self.grid.segment_of(i);
        let s = self.segments[seg];
        let t = self.grid.point(i);
        if t < s.hi {
            R::zero()
        } else if seg + 1 < self.segments.len() {
            self.segments[seg + 1].lo - s.hi
        } else {
            R::zero()
        }
    }

    pub fn nu_idx(&self, i: usize) -> R {
        let seg = self.grid.segment_of(i);
        let s = self.segments[seg];
        let t = self.grid.point(i);
        if t > s.lo {
            R::zero()
        } else if seg > 0 {
            s.lo - self.segments[seg - 1].hi
        } else {
            R::zero()
        }
    }

    fn classify_index(&self, i: usize) -> PointClass {
        let n = self.grid.len();
        let seg = self.grid.segment_of(i);
        let s = self.segments[seg];
        let t = self.grid.point(i);
        let right = if i == n - 1 || t < s.hi {
            Density::Dense
        } else {
            Density::Scattered
        };
        let left = if i == 0 || t > s.lo {
            Density::Dense
        } else {
            Density::Scattered
        };
        PointClass { right, left }
    }

    fn scan_junctions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..self.grid.len() {
            if self.grid.role(i) != PointRole::Structural {
                continue;
            }
            if !self.in_core_domain_idx(i) {
                continue;
            }
            let c = self.class[i];
            if c.is_sigma_junction() || c.is_rho_junction() {
                out.push(i);
            }
        }
        out
    }

    /// Nabla derivative of sigma at grid index `i`.
    ///
    /// Exists everywhere on `T_kappa` except at dense-to-scattered junctions,
    /// where sigma is discontinuous.
    pub fn sigma_nabla_idx(&self, i: usize) -> Result<R, R> {
        let t = self.grid.point(i);
        if !self.in_nabla_domain_idx(i) {
            return Err(Error::OutsideDomain { t, domain: "T_kappa" });
        }
        let c = self.class[i];
        if c.is_sigma_junction() {
            return Err(Error::Junction { t });
        }
        if c.is_left_scattered() {
            Ok(self.mu_idx(i) / self.nu_idx(i))
        } else {
            Ok(R::one())
        }
    }

    /// Delta derivative of rho at grid index `i`.
    ///
    /// Exists everywhere on `T^kappa` except at scattered-to-dense junctions,
    /// where rho is discontinuous.
    pub fn rho_delta_idx(&self, i: usize) -> Result<R, R> {
        let t = self.grid.point(i);
        if !self.in_delta_domain_idx(i) {
            return Err(Error::OutsideDomain { t, domain: "T^kappa" });
        }
        let c = self.class[i];
        if c.is_rho_junction() {
            return Err(Error::Junction { t });
        }
        if c.is_right_scattered() {
            Ok(self.nu_idx(i) / self.mu_idx(i))
        } else {
            Ok(R::one())
        }
    }

    /// `sigma^nabla(t)` by value.
    pub fn sigma_nabla(&self, t: R) -> Result<R, R> {
        self.sigma_nabla_idx(self.grid_index_of(t)?)
    }

    /// `rho^delta(t)` by value.
    pub fn rho_delta(&self, t: R) -> Result<R, R> {
        self.rho_delta_idx(self.grid_index_of(t)?)
    }
}

fn dist_to<R: Real>(s: &Segment<R>, t: R) -> R {
    if t < s.lo {
        s.lo - t
    } else if t > s.hi {
        t - s.hi
    } else {
        R::zero()
    }
}

fn build_grid<R: Real>(segments: &[Segment<R>], dense_step: R) -> Grid<R> {
    let mut points = Vec::new();
    let mut roles = Vec::new();
    let mut seg_of = Vec::new();
    let mut seg_range = Vec::with_capacity(segments.len());
    let mut seg_spacing = Vec::with_capacity(segments.len());

    for (si, s) in segments.iter().enumerate() {
        let start = points.len();
        if s.is_point() {
            points.push(s.lo);
            roles.push(PointRole::Structural);
            seg_of.push(si);
            seg_spacing.push(R::zero());
        } else {
            let len = s.len();
            let raw = (len / dense_step).ceil();
            let mut m = raw.to_usize().unwrap_or(2).max(2);
            if m % 2 == 1 {
                m += 1;
            }
            let h = len / R::of_usize(m);
            for k in 0..=m {
                let t = if k == 0 {
                    s.lo
                } else if k == m {
                    s.hi
                } else {
                    s.lo + h * R::of_usize(k)
                };
                points.push(t);
                roles.push(if k == 0 || k == m {
                    PointRole::Structural
                } else {
                    PointRole::Sample
                });
                seg_of.push(si);
            }
            seg_spacing.push(h);
        }
        seg_range.push((start, points.len() - 1));
    }

    Grid {
        points,
        roles,
        seg_of,
        seg_range,
        seg_spacing,
    }
}

/// Parses the time-scale literal syntax used by the CLI:
///
/// ```text
/// scale   := clause (";" clause)*
/// clause  := "union:" item+ | "points:" real+ | "dense_step:" real | item+
/// item    := "[" real "," real "]" | real
/// ```
///
/// Example: `union: [0,1]; points: 1.25 1.5 2; dense_step: 0.001`.
pub fn parse_literal<R: Real>(src: &str) -> Result<TimeScale<R>, R> {
    let mut segments: Vec<(R, R)> = Vec::new();
    let mut dense_step: Option<R> = None;
    for raw in src.split(';') {
        let clause = raw.trim();
        if clause.is_empty() {
            continue;
        }
        let (key, rest) = match clause.split_once(':') {
            Some((k, r)) if !k.trim().contains(['[', ']', ' ']) => (k.trim(), r.trim()),
            _ => ("", clause),
        };
        match key {
            "dense_step" => {
                let v = parse_real::<R>(rest)?;
                dense_step = Some(v);
            }
            "union" | "points" | "" => {
                for item in scan_items::<R>(rest)? {
                    segments.push(item);
                }
            }
            other => {
                return Err(Error::InvalidScale(format!(
                    "unknown key `{other}` in time-scale literal"
                )))
            }
        }
    }
    TimeScale::new(segments, dense_step)
}

fn parse_real<R: Real>(s: &str) -> Result<R, R> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::InvalidScale(format!("`{s}` is not a number")))?;
    Ok(R::of(v))
}

fn scan_items<R: Real>(s: &str) -> Result<Vec<(R, R)>, R> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        if let Some(stripped) = rest.strip_prefix('[') {
            let end = stripped.find(']').ok_or_else(|| {
                Error::<R>::InvalidScale(format!("unclosed interval in `{s}`"))
            })?;
            let body = &stripped[..end];
            let (lo, hi) = body.split_once(',').ok_or_else(|| {
                Error::<R>::InvalidScale(format!("interval `[{body}]` needs two endpoints"))
            })?;
            out.push((parse_real::<R>(lo)?, parse_real::<R>(hi)?));
            rest = stripped[end + 1..].trim_start();
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let v = parse_real::<R>(&rest[..end])?;
            out.push((v, v));
            rest = rest[end..].trim_start();
        }
    }
    Ok(out)
}
