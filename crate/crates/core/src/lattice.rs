//! Sites, finite regions, boundary operators, and circuits of the
//! triangular lattice.
//!
//! A site with integer coordinates `(x, y)` sits at the point
//! `x + y * exp(i*pi/3)` of the plane, i.e. at `(x + y/2, y * sqrt(3)/2)`.
//! Every site has six neighbors, and carries a closed hexagonal face
//! (circumradius `1/sqrt(3)`) in the dual hexagonal tiling. A planar disc
//! or annulus is identified with the set of sites whose hexagonal faces it
//! fully contains, which makes all region predicates exact integer tests.

use crate::error::{Error, Result};
use crate::util::BitVec;

/// Neighbor offsets in counterclockwise order starting from the positive
/// x-axis: the k-th offset points in direction `60k` degrees.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 6] =
    [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// Largest coordinate magnitude accepted in region constructors. Keeps every
/// integer computation (corner scores, packed keys, scaled polygon tests)
/// far from overflow.
pub const COORD_LIMIT: i32 = 1 << 28;

/// Largest radius accepted by `ball` / `annulus`. Up to this radius the
/// corner-score comparison is exact for integer and half-integer radii.
pub const MAX_RADIUS: f64 = 200_000.0;

/// A lattice site with axial integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    /// The six lattice neighbors in counterclockwise order.
    #[inline]
    pub fn neighbors(self) -> [Site; 6] {
        let mut out = [self; 6];
        for (k, &(dx, dy)) in NEIGHBOR_OFFSETS.iter().enumerate() {
            out[k] = Site::new(self.x + dx, self.y + dy);
        }
        out
    }

    #[inline]
    pub fn offset(self, k: usize) -> Site {
        let (dx, dy) = NEIGHBOR_OFFSETS[k];
        Site::new(self.x + dx, self.y + dy)
    }

    /// Position in the plane.
    #[inline]
    pub fn embed(self) -> (f64, f64) {
        (self.x as f64 + 0.5 * self.y as f64, SQRT3_HALF * self.y as f64)
    }

    /// Squared Euclidean distance to the origin, times 4 (exact integer):
    /// `4 * |embed|^2 = (2x + y)^2 + 3 y^2`.
    #[inline]
    pub fn norm2_x4(self) -> i64 {
        let u = 2 * self.x as i64 + self.y as i64;
        let v = self.y as i64;
        u * u + 3 * v * v
    }

    /// Injective 64-bit key, stable across runs and platforms.
    #[inline]
    pub fn packed(self) -> u64 {
        let xx = (self.x as i64 + (1i64 << 30)) as u64;
        let yy = (self.y as i64 + (1i64 << 30)) as u64;
        (xx << 32) | yy
    }

    #[inline]
    pub fn adjacent(self, other: Site) -> bool {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        NEIGHBOR_OFFSETS.contains(&(dx, dy))
    }
}

/// Canonical site order: row-major, `y` first then `x`. All region
/// enumeration, indexing, and tie-breaking uses this order.
impl Ord for Site {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub const SQRT3_HALF: f64 = 0.866_025_403_784_438_6;

/// True when `a` and `b` are lattice neighbors whose bond survives in the
/// diagonal-thinned sublattice: the two bonds in directions `(-1, 1)` and
/// `(1, -1)` are removed, leaving every site with exactly four neighbors
/// (a square-lattice copy embedded in the triangular lattice).
#[inline]
pub fn sublattice_adjacent(a: Site, b: Site) -> bool {
    let d = (b.x - a.x, b.y - a.y);
    NEIGHBOR_OFFSETS.contains(&d) && d != (-1, 1) && d != (1, -1)
}

/// Offsets from a site's scaled center `(2x + y, 3y)` to the six corners of
/// its hexagonal face, in the doubly-scaled frame where the corner score
/// below is integer.
const CORNER_OFFSETS: [(i64, i64); 6] =
    [(1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1)];

/// `12 * max_corner |corner - center|^2` for the hexagonal face of the site
/// at relative coordinates `(dx, dy)` from a disc center. The face fits in
/// the closed disc of radius `r` around that center iff this score is at
/// most `12 r^2`.
#[inline]
fn hex_corner_score(dx: i64, dy: i64) -> i64 {
    let mut m = 0i64;
    for &(a, b) in &CORNER_OFFSETS {
        let u = 2 * dx + dy + a;
        let v = 3 * dy + b;
        let s = 3 * u * u + v * v;
        if s > m {
            m = s;
        }
    }
    m
}

/// Inclusion threshold for radius `r`, with a relative tolerance that keeps
/// the test robust for radii given as floating-point expressions while
/// remaining exact for integer radii below `MAX_RADIUS`.
#[inline]
fn radius_threshold(r: f64) -> f64 {
    12.0 * r * r * (1.0 + 1e-12) + 1e-12
}

#[inline]
fn face_fits(dx: i64, dy: i64, threshold: f64) -> bool {
    (hex_corner_score(dx, dy) as f64) <= threshold
}

/// True when the hexagonal face of `s` lies inside the closed disc of
/// radius `r` around `center` (the membership rule of [`LatticeRegion::ball`],
/// usable without building the region).
#[inline]
pub fn ball_contains(center: Site, r: f64, s: Site) -> bool {
    face_fits(
        s.x as i64 - center.x as i64,
        s.y as i64 - center.y as i64,
        radius_threshold(r),
    )
}

/// Shape metadata a region remembers about how it was built.
#[derive(Clone, Debug, PartialEq)]
pub enum RegionShape {
    Ball { cx: i32, cy: i32, r: f64 },
    Annulus { r_in: f64, r_out: f64 },
    Parallelogram { x0: i32, y0: i32, w: u32, h: u32 },
    Custom,
}

/// One maximal run of consecutive sites inside a row.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Interval {
    pub base: u32,
    pub y: i32,
    pub lo: i32,
    pub hi: i32, // inclusive
}

/// A finite set of sites, stored as sorted intervals per row. Sites are
/// enumerated in canonical order (increasing `y`, then increasing `x`) and
/// indexed densely by that order.
#[derive(Clone, Debug)]
pub struct LatticeRegion {
    shape: RegionShape,
    y_min: i32,
    /// Per-row half-open ranges into `ivls`; row `k` holds sites with
    /// `y == y_min + k`. Interior rows may be empty for custom regions.
    row_spans: Vec<(u32, u32)>,
    ivls: Vec<Interval>,
    len: u32,
}

/// Row bounds of a region whose rows are all single intervals, for solvers
/// that index neighbors arithmetically.
#[derive(Clone, Debug)]
pub(crate) struct DenseRows {
    pub y_min: i32,
    pub lo: Vec<i32>,
    pub hi: Vec<i32>,
    pub base: Vec<u32>,
}

impl DenseRows {
    #[inline]
    pub fn index_of(&self, s: Site) -> Option<u32> {
        let k = s.y.wrapping_sub(self.y_min);
        if k < 0 || k as usize >= self.lo.len() {
            return None;
        }
        let k = k as usize;
        if s.x < self.lo[k] || s.x > self.hi[k] {
            return None;
        }
        Some(self.base[k] + (s.x - self.lo[k]) as u32)
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !r.is_finite() || r < 0.0 || r > MAX_RADIUS {
        return Err(Error::InvalidInput(format!(
            "radius {r} outside supported range [0, {MAX_RADIUS}]"
        )));
    }
    Ok(())
}

fn check_coord(v: i64, what: &str) -> Result<()> {
    if v.unsigned_abs() > COORD_LIMIT as u64 {
        return Err(Error::InvalidInput(format!(
            "{what} coordinate {v} exceeds the supported magnitude {COORD_LIMIT}"
        )));
    }
    Ok(())
}

/// Row intervals of a centered ball, as `(y, lo, hi)` with absolute
/// coordinates, rows in increasing `y`, possibly absent at the extremes.
fn ball_rows(cx: i32, cy: i32, r: f64) -> Vec<(i32, i32, i32)> {
    let threshold = radius_threshold(r);
    // Rows with any chance of a fitting face satisfy |3 dy| - 2 <= sqrt(th).
    let dy_span = ((threshold.sqrt() + 2.0) / 3.0).ceil() as i64 + 1;
    let mut rows = Vec::new();
    for dy in -dy_span..=dy_span {
        // For fixed dy the corner score is a convex function of dx, so the
        // passing set is an interval. Anchor near the real minimizer
        // -dy/2 and expand outward.
        let center = -dy / 2;
        let mut anchor = None;
        for dx in center - 2..=center + 2 {
            if face_fits(dx, dy, threshold) {
                anchor = Some(dx);
                break;
            }
        }
        let Some(anchor) = anchor else { continue };
        let mut lo = anchor;
        while face_fits(lo - 1, dy, threshold) {
            lo -= 1;
        }
        let mut hi = anchor;
        while face_fits(hi + 1, dy, threshold) {
            hi += 1;
        }
        rows.push((
            (cy as i64 + dy) as i32,
            (cx as i64 + lo) as i32,
            (cx as i64 + hi) as i32,
        ));
    }
    rows
}

impl LatticeRegion {
    /// Sites whose hexagonal face lies inside the closed disc of radius `r`
    /// around `center`.
    pub fn ball(center: Site, r: f64) -> Result<Self> {
        check_radius(r)?;
        check_coord(center.x as i64, "center")?;
        check_coord(center.y as i64, "center")?;
        let rows = ball_rows(center.x, center.y, r);
        Self::from_rows(rows, RegionShape::Ball { cx: center.x, cy: center.y, r })
    }

    /// Sites in the closed ball of radius `r_out` around the origin but not
    /// in the closed ball of radius `r_in`: the annulus `A(r_in, r_out)` as
    /// an exact set difference of balls.
    pub fn annulus(r_in: f64, r_out: f64) -> Result<Self> {
        check_radius(r_in)?;
        check_radius(r_out)?;
        if r_in > r_out {
            return Err(Error::InvalidInput(format!(
                "annulus inner radius {r_in} exceeds outer radius {r_out}"
            )));
        }
        let outer = ball_rows(0, 0, r_out);
        let inner = ball_rows(0, 0, r_in);
        let mut inner_by_y = std::collections::HashMap::new();
        for &(y, lo, hi) in &inner {
            inner_by_y.insert(y, (lo, hi));
        }
        let mut rows = Vec::new();
        for &(y, lo, hi) in &outer {
            match inner_by_y.get(&y) {
                None => rows.push((y, lo, hi)),
                Some(&(ilo, ihi)) => {
                    // The inner interval is always contained in the outer one.
                    if lo <= ilo - 1 {
                        rows.push((y, lo, ilo - 1));
                    }
                    if ihi + 1 <= hi {
                        rows.push((y, ihi + 1, hi));
                    }
                }
            }
        }
        Self::from_rows(rows, RegionShape::Annulus { r_in, r_out })
    }

    /// The lattice parallelogram `{origin + (i, j) : 0 <= i < w, 0 <= j < h}`.
    pub fn parallelogram(origin: Site, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidInput("parallelogram sides must be positive".into()));
        }
        check_coord(origin.x as i64 + w as i64, "parallelogram")?;
        check_coord(origin.y as i64 + h as i64, "parallelogram")?;
        check_coord(origin.x as i64, "parallelogram")?;
        check_coord(origin.y as i64, "parallelogram")?;
        let mut rows = Vec::with_capacity(h as usize);
        for j in 0..h {
            rows.push((origin.y + j as i32, origin.x, origin.x + w as i32 - 1));
        }
        Self::from_rows(
            rows,
            RegionShape::Parallelogram { x0: origin.x, y0: origin.y, w, h },
        )
    }

    /// An arbitrary finite set of sites. Duplicates are merged.
    pub fn custom(mut sites: Vec<Site>) -> Result<Self> {
        for s in &sites {
            check_coord(s.x as i64, "site")?;
            check_coord(s.y as i64, "site")?;
        }
        sites.sort();
        sites.dedup();
        let mut rows = Vec::new();
        let mut i = 0;
        while i < sites.len() {
            let y = sites[i].y;
            let lo = sites[i].x;
            let mut hi = lo;
            let mut j = i + 1;
            while j < sites.len() && sites[j].y == y && sites[j].x == hi + 1 {
                hi += 1;
                j += 1;
            }
            rows.push((y, lo, hi));
            i = j;
        }
        Self::from_rows(rows, RegionShape::Custom)
    }

    /// Build from `(y, lo, hi)` runs sorted by `(y, lo)`, non-overlapping.
    fn from_rows(rows: Vec<(i32, i32, i32)>, shape: RegionShape) -> Result<Self> {
        let mut len: u64 = 0;
        for &(_, lo, hi) in &rows {
            len += (hi - lo) as u64 + 1;
        }
        if len > u32::MAX as u64 {
            return Err(Error::InvalidInput(format!(
                "region with {len} sites exceeds the supported maximum"
            )));
        }
        if rows.is_empty() {
            return Ok(LatticeRegion {
                shape,
                y_min: 0,
                row_spans: Vec::new(),
                ivls: Vec::new(),
                len: 0,
            });
        }
        let y_min = rows[0].0;
        let y_max = rows[rows.len() - 1].0;
        let nrows = (y_max - y_min + 1) as usize;
        let mut row_spans = vec![(0u32, 0u32); nrows];
        let mut ivls = Vec::with_capacity(rows.len());
        let mut base: u32 = 0;
        let mut i = 0;
        for k in 0..nrows {
            let y = y_min + k as i32;
            let start = ivls.len() as u32;
            while i < rows.len() && rows[i].0 == y {
                let (_, lo, hi) = rows[i];
                ivls.push(Interval { base, y, lo, hi });
                base += (hi - lo) as u32 + 1;
                i += 1;
            }
            row_spans[k] = (start, ivls.len() as u32);
        }
        debug_assert_eq!(base as u64, len);
        Ok(LatticeRegion { shape, y_min, row_spans, ivls, len: len as u32 })
    }

    pub fn shape(&self) -> &RegionShape {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Dense index of a site in canonical enumeration order.
    #[inline]
    pub fn index_of(&self, s: Site) -> Option<u32> {
        let k = s.y.wrapping_sub(self.y_min);
        if k < 0 || k as usize >= self.row_spans.len() {
            return None;
        }
        let (a, b) = self.row_spans[k as usize];
        for ivl in &self.ivls[a as usize..b as usize] {
            if s.x >= ivl.lo && s.x <= ivl.hi {
                return Some(ivl.base + (s.x - ivl.lo) as u32);
            }
            if s.x < ivl.lo {
                break;
            }
        }
        None
    }

    #[inline]
    pub fn contains(&self, s: Site) -> bool {
        self.index_of(s).is_some()
    }

    /// Inverse of `index_of`.
    pub fn site_at(&self, i: u32) -> Site {
        assert!(i < self.len, "site index {i} out of bounds {}", self.len);
        let k = self.ivls.partition_point(|ivl| ivl.base <= i) - 1;
        let ivl = &self.ivls[k];
        Site::new(ivl.lo + (i - ivl.base) as i32, ivl.y)
    }

    /// Sites in canonical order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.ivls
            .iter()
            .flat_map(|ivl| (ivl.lo..=ivl.hi).map(move |x| Site::new(x, ivl.y)))
    }

    /// `(x_min, x_max, y_min, y_max)` over all sites.
    pub fn bbox(&self) -> Option<(i32, i32, i32, i32)> {
        if self.is_empty() {
            return None;
        }
        let mut x_min = i32::MAX;
        let mut x_max = i32::MIN;
        for ivl in &self.ivls {
            x_min = x_min.min(ivl.lo);
            x_max = x_max.max(ivl.hi);
        }
        let y_max = self.ivls.last().unwrap().y;
        Some((x_min, x_max, self.y_min, y_max))
    }

    /// True when every site of `other` is a site of `self`.
    pub fn contains_region(&self, other: &LatticeRegion) -> bool {
        for ivl in &other.ivls {
            let k = ivl.y.wrapping_sub(self.y_min);
            if k < 0 || k as usize >= self.row_spans.len() {
                return false;
            }
            let (a, b) = self.row_spans[k as usize];
            let mut lo = ivl.lo;
            for mine in &self.ivls[a as usize..b as usize] {
                if lo < mine.lo {
                    return false;
                }
                if lo <= mine.hi {
                    if ivl.hi <= mine.hi {
                        lo = ivl.hi + 1;
                        break;
                    }
                    lo = mine.hi + 1;
                }
            }
            if lo <= ivl.hi {
                return false;
            }
        }
        true
    }

    /// Indices of sites with at least one neighbor outside the region.
    pub fn rim_indices(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut idx: u32 = 0;
        for ivl in &self.ivls {
            for x in ivl.lo..=ivl.hi {
                let s = Site::new(x, ivl.y);
                if s.neighbors().iter().any(|&n| !self.contains(n)) {
                    out.push(idx);
                }
                idx += 1;
            }
        }
        out
    }

    /// Row bounds when every row is one contiguous interval (balls and
    /// parallelograms always qualify).
    pub(crate) fn dense_rows(&self) -> Option<DenseRows> {
        if self.is_empty() {
            return None;
        }
        let mut lo = Vec::with_capacity(self.row_spans.len());
        let mut hi = Vec::with_capacity(self.row_spans.len());
        let mut base = Vec::with_capacity(self.row_spans.len());
        for &(a, b) in &self.row_spans {
            if b - a != 1 {
                return None;
            }
            let ivl = &self.ivls[a as usize];
            lo.push(ivl.lo);
            hi.push(ivl.hi);
            base.push(ivl.base);
        }
        Some(DenseRows { y_min: self.y_min, lo, hi, base })
    }

    pub(crate) fn intervals(&self) -> &[Interval] {
        &self.ivls
    }
}

/// Flood fill over a region: marks in `mark` every site reachable from the
/// seeds through sites satisfying `allowed` (seeds included, and also
/// filtered by `allowed`). `stack` is scratch space.
pub(crate) fn flood(
    frame: &LatticeRegion,
    seeds: impl IntoIterator<Item = u32>,
    allowed: impl Fn(u32) -> bool,
    mark: &mut BitVec,
    stack: &mut Vec<(Site, u32)>,
) {
    stack.clear();
    for i in seeds {
        if !mark.get(i) && allowed(i) {
            mark.set(i);
            stack.push((frame.site_at(i), i));
        }
    }
    while let Some((s, _)) = stack.pop() {
        for n in s.neighbors() {
            if let Some(j) = frame.index_of(n) {
                if !mark.get(j) && allowed(j) {
                    mark.set(j);
                    stack.push((n, j));
                }
            }
        }
    }
}

/// The three boundary operators on finite site sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Sites outside the set adjacent to it.
    External,
    /// Sites of the set adjacent to its complement.
    Internal,
    /// The subset of the external boundary whose sites can be connected to
    /// infinity (here: to the frame rim) outside the set and the rest of its
    /// external boundary. For a finite connected set this is a circuit, and
    /// it is returned in circuit order.
    ExteriorSite,
}

/// Boundary of the site set `w` inside `frame`. `External` and
/// `ExteriorSite` require the frame to contain `w` and its external
/// boundary; `ExteriorSite` additionally requires `w` to be connected and
/// the frame rim to stay clear of `w` and its external boundary, and
/// returns sites in circuit order (everything else is in canonical order).
pub fn boundary(w: &[Site], kind: BoundaryKind, frame: &LatticeRegion) -> Result<Vec<Site>> {
    match kind {
        BoundaryKind::Internal => {
            let set: std::collections::HashSet<Site> = w.iter().copied().collect();
            let mut out: Vec<Site> = set
                .iter()
                .copied()
                .filter(|s| s.neighbors().iter().any(|n| !set.contains(n)))
                .collect();
            out.sort();
            Ok(out)
        }
        BoundaryKind::External => {
            let set: std::collections::HashSet<Site> = w.iter().copied().collect();
            let mut out = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for &s in set.iter() {
                for n in s.neighbors() {
                    if !set.contains(&n) && seen.insert(n) {
                        if !frame.contains(n) {
                            return Err(Error::FrameTooSmall(format!(
                                "external boundary site {n} falls outside the frame"
                            )));
                        }
                        out.push(n);
                    }
                }
            }
            out.sort();
            Ok(out)
        }
        BoundaryKind::ExteriorSite => Ok(exterior_circuit(w, frame)?.into_sites()),
    }
}

/// The infinity-facing external boundary of a finite connected set, as an
/// ordered circuit. See [`BoundaryKind::ExteriorSite`].
pub fn exterior_circuit(w: &[Site], frame: &LatticeRegion) -> Result<Circuit> {
    if w.is_empty() {
        return Err(Error::InvalidInput("exterior circuit of an empty set".into()));
    }
    let mut w_idx = Vec::with_capacity(w.len());
    for &s in w {
        match frame.index_of(s) {
            Some(i) => w_idx.push(i),
            None => {
                return Err(Error::FrameTooSmall(format!("set site {s} outside the frame")))
            }
        }
    }
    w_idx.sort_unstable();
    w_idx.dedup();

    let mut in_w = BitVec::new(frame.len());
    for &i in &w_idx {
        in_w.set(i);
    }

    // Connectivity of w.
    let mut seen = BitVec::new(frame.len());
    let mut stack = Vec::new();
    flood(frame, [w_idx[0]], |i| in_w.get(i), &mut seen, &mut stack);
    if seen.count_ones() != w_idx.len() as u32 {
        return Err(Error::InvalidInput(
            "exterior circuit requires a connected site set".into(),
        ));
    }

    // blocked = w together with its external boundary; the external boundary
    // must stay inside the frame.
    let mut blocked = in_w.clone();
    for &i in &w_idx {
        let s = frame.site_at(i);
        for n in s.neighbors() {
            match frame.index_of(n) {
                Some(j) => blocked.set(j),
                None => {
                    return Err(Error::FrameTooSmall(format!(
                        "external boundary site {n} falls outside the frame"
                    )))
                }
            }
        }
    }

    // Flood the exterior from the frame rim.
    let rim = frame.rim_indices();
    if rim.iter().any(|&i| blocked.get(i)) {
        return Err(Error::FrameTooSmall(
            "the set or its boundary touches the frame rim; enlarge the frame".into(),
        ));
    }
    let mut exterior = BitVec::new(frame.len());
    flood(frame, rim, |i| !blocked.get(i), &mut exterior, &mut stack);

    // Circuit sites: external-boundary sites adjacent to the exterior.
    let mut circuit_set = Vec::new();
    for i in blocked.ones() {
        if in_w.get(i) {
            continue;
        }
        let s = frame.site_at(i);
        let touches = s
            .neighbors()
            .iter()
            .any(|&n| frame.index_of(n).is_some_and(|j| exterior.get(j)));
        if touches {
            circuit_set.push(s);
        }
    }
    circuit_set.sort();
    if circuit_set.len() < 3 {
        return Err(Error::Internal(format!(
            "exterior boundary has only {} sites",
            circuit_set.len()
        )));
    }

    // Order the circuit by tracing the contour of the non-exterior blob.
    let in_blob = |s: Site| frame.index_of(s).is_some_and(|j| !exterior.get(j));
    let start = circuit_set[0];
    let mut start_back = None;
    for (k, n) in start.neighbors().into_iter().enumerate() {
        if frame.index_of(n).is_some_and(|j| exterior.get(j)) {
            start_back = Some(k);
            break;
        }
    }
    let start_back = start_back.ok_or_else(|| {
        Error::Internal("circuit start has no exterior neighbor".into())
    })?;

    let mut ordered = Vec::with_capacity(circuit_set.len());
    let mut cur = start;
    let mut back = start_back; // direction from cur to an exterior cell
    let limit = 6 * frame.len() as usize + 12;
    loop {
        ordered.push(cur);
        let mut advanced = false;
        for k in 1..=6 {
            let dir = (back + k) % 6;
            let cand = cur.offset(dir);
            if in_blob(cand) {
                // The previously scanned direction points at an exterior
                // cell; it becomes the new backtrack reference.
                let prev = (back + k + 5) % 6;
                let nb = cand;
                let prev_cell = cur.offset(prev);
                debug_assert!(!in_blob(prev_cell));
                back = dir_between(nb, prev_cell).ok_or_else(|| {
                    Error::Internal("contour backtrack cell not adjacent".into())
                })?;
                cur = nb;
                advanced = true;
                break;
            }
        }
        if !advanced {
            // Isolated blob site: a singleton has no blob neighbor, but a
            // singleton blob yields a 6-site circuit handled by the walk
            // around it, so reaching here is a bug.
            return Err(Error::Internal("contour walk stalled".into()));
        }
        if cur == start && back == start_back {
            break;
        }
        if ordered.len() > limit {
            return Err(Error::Internal("contour walk failed to close".into()));
        }
    }

    // The walk visits contour corners; a site can appear more than once in
    // the raw walk only if the blob pinches, which cannot happen for
    // blocked = w + boundary of connected w. Verify everything.
    let mut sorted = ordered.clone();
    sorted.sort();
    sorted.dedup();
    if sorted != circuit_set {
        return Err(Error::Internal(
            "contour walk did not produce the exterior boundary".into(),
        ));
    }
    if ordered.len() != circuit_set.len() {
        return Err(Error::Internal("contour walk revisited a site".into()));
    }
    Circuit::from_traced(ordered)
}

/// Direction index `k` with `from.offset(k) == to`, if adjacent.
fn dir_between(from: Site, to: Site) -> Option<usize> {
    let d = (to.x - from.x, to.y - from.y);
    NEIGHBOR_OFFSETS.iter().position(|&o| o == d)
}

/// A circuit: a cyclic sequence of at least three distinct, consecutively
/// adjacent sites (closing around). Stored counterclockwise, starting from
/// its canonically smallest site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    sites: Vec<Site>,
    sorted: Vec<Site>,
}

impl Circuit {
    /// Validate and canonicalize a cyclic site sequence.
    pub fn from_sites(sites: Vec<Site>) -> Result<Circuit> {
        if sites.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "a circuit needs at least 3 sites, got {}",
                sites.len()
            )));
        }
        let mut sorted = sites.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("circuit revisits a site".into()));
        }
        for k in 0..sites.len() {
            let a = sites[k];
            let b = sites[(k + 1) % sites.len()];
            if !a.adjacent(b) {
                return Err(Error::InvalidInput(format!(
                    "circuit sites {a} and {b} are consecutive but not adjacent"
                )));
            }
        }
        let mut c = Circuit { sites, sorted };
        c.canonicalize();
        Ok(c)
    }

    /// Same as `from_sites` for sequences produced by the contour trace,
    /// which are already known distinct and adjacent.
    fn from_traced(sites: Vec<Site>) -> Result<Circuit> {
        let mut sorted = sites.clone();
        sorted.sort();
        let mut c = Circuit { sites, sorted };
        c.canonicalize();
        Ok(c)
    }

    fn canonicalize(&mut self) {
        if self.signed_area_doubled() < 0 {
            self.sites.reverse();
        }
        let k = self
            .sites
            .iter()
            .enumerate()
            .min_by_key(|&(_, s)| *s)
            .map(|(k, _)| k)
            .unwrap();
        self.sites.rotate_left(k);
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        false
    }

    fn into_sites(self) -> Vec<Site> {
        self.sites
    }

    /// True when `s` is one of the circuit's sites.
    pub fn contains_site(&self, s: Site) -> bool {
        self.sorted.binary_search(&s).is_ok()
    }

    /// Twice the signed area of the polygon through the scaled site centers
    /// `(2x + y, y)`; positive for counterclockwise orientation. The scaling
    /// is an orientation-preserving linear image of the plane embedding.
    pub(crate) fn signed_area_doubled(&self) -> i64 {
        let mut acc = 0i64;
        for k in 0..self.sites.len() {
            let a = self.sites[k];
            let b = self.sites[(k + 1) % self.sites.len()];
            let (ax, ay) = (2 * a.x as i64 + a.y as i64, a.y as i64);
            let (bx, by) = (2 * b.x as i64 + b.y as i64, b.y as i64);
            acc += ax * by - bx * ay;
        }
        acc
    }

    /// True when the site lies strictly inside the closed curve through the
    /// circuit's site centers. Sites of the circuit itself are not
    /// surrounded. Exact: integer ray casting in a scaled frame where
    /// polygon edges have no interior lattice points.
    pub fn surrounds(&self, s: Site) -> bool {
        if self.contains_site(s) {
            return false;
        }
        let qx = 2 * s.x as i64 + s.y as i64;
        let qy = s.y as i64;
        let mut inside = false;
        for k in 0..self.sites.len() {
            let a = self.sites[k];
            let b = self.sites[(k + 1) % self.sites.len()];
            let (ax, ay) = (2 * a.x as i64 + a.y as i64, a.y as i64);
            let (bx, by) = (2 * b.x as i64 + b.y as i64, b.y as i64);
            if (ay <= qy) != (by <= qy) {
                // Edge rows differ by exactly 1, so the crossing abscissa is
                // an exact integer: x = ax + (qy - ay) * (bx - ax) / (by - ay).
                let x_cross = ax + (qy - ay) * (bx - ax) / (by - ay);
                if x_cross > qx {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Sites strictly enclosed by the circuit (the circuit's own sites are
    /// excluded), computed by flooding the frame from its rim. The frame
    /// must be simply connected (ball or parallelogram), contain the
    /// circuit, and keep it off the rim.
    pub fn interior_sites(&self, frame: &LatticeRegion) -> Result<Vec<Site>> {
        match frame.shape() {
            RegionShape::Ball { .. } | RegionShape::Parallelogram { .. } => {}
            _ => {
                return Err(Error::InvalidInput(
                    "interior_sites needs a simply connected frame (ball or parallelogram)"
                        .into(),
                ))
            }
        }
        let mut on = BitVec::new(frame.len());
        for &s in &self.sites {
            match frame.index_of(s) {
                Some(i) => on.set(i),
                None => {
                    return Err(Error::FrameTooSmall(format!(
                        "circuit site {s} outside the frame"
                    )))
                }
            }
        }
        let rim = frame.rim_indices();
        if rim.iter().any(|&i| on.get(i)) {
            return Err(Error::FrameTooSmall(
                "circuit touches the frame rim; enlarge the frame".into(),
            ));
        }
        let mut outside = BitVec::new(frame.len());
        let mut stack = Vec::new();
        flood(frame, rim, |i| !on.get(i), &mut outside, &mut stack);
        let mut out = Vec::new();
        for i in 0..frame.len() {
            if !outside.get(i) && !on.get(i) {
                out.push(frame.site_at(i));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin_ball(r: f64) -> LatticeRegion {
        LatticeRegion::ball(Site::ORIGIN, r).unwrap()
    }

    #[test]
    fn tiny_balls_follow_the_face_rule() {
        // The hexagonal face has circumradius 1/sqrt(3) > 0.5, so nothing
        // fits in a radius-0.5 disc.
        assert_eq!(origin_ball(0.5).len(), 0);
        // Just past the circumradius the origin's face fits.
        let r = 1.0 / 3f64.sqrt() + 1e-9;
        let b = origin_ball(r);
        assert_eq!(b.len(), 1);
        assert!(b.contains(Site::ORIGIN));
        // Radius 1 still only holds the origin: neighbor faces poke out.
        let b1 = origin_ball(1.0);
        assert_eq!(b1.len(), 1);
    }

    #[test]
    fn ball_density_matches_hexagon_area() {
        // Each face has area sqrt(3)/2, so a disc of radius r holds about
        // (2/sqrt(3)) * pi * r^2 sites, minus a boundary layer of order r
        // (faces straddling the disc edge are excluded).
        let density = |r: f64| {
            let b = origin_ball(r);
            b.len() as f64 / (2.0 / 3f64.sqrt() * std::f64::consts::PI * r * r)
        };
        let d100 = density(100.0);
        let d400 = density(400.0);
        assert!(d100 > 0.94 && d100 < 1.0, "ratio at r=100: {d100}");
        assert!(d400 > 0.985 && d400 < 1.0, "ratio at r=400: {d400}");
        assert!(d400 > d100, "boundary deficit must shrink with r");
    }

    #[test]
    fn ball_is_centrally_symmetric() {
        let b = origin_ball(9.5);
        for s in b.sites() {
            assert!(b.contains(Site::new(-s.x, -s.y)), "asymmetry at {s}");
        }
    }

    #[test]
    fn shifted_ball_is_a_translate() {
        let b0 = origin_ball(7.25);
        let c = Site::new(13, -40);
        let b1 = LatticeRegion::ball(c, 7.25).unwrap();
        assert_eq!(b0.len(), b1.len());
        for s in b0.sites() {
            assert!(b1.contains(Site::new(s.x + c.x, s.y + c.y)));
        }
    }

    #[test]
    fn annulus_is_exact_ball_difference() {
        let inner = origin_ball(8.0);
        let outer = origin_ball(16.0);
        let ann = LatticeRegion::annulus(8.0, 16.0).unwrap();
        assert_eq!(ann.len() + inner.len(), outer.len());
        for s in ann.sites() {
            assert!(outer.contains(s) && !inner.contains(s));
        }
        for s in inner.sites() {
            assert!(!ann.contains(s));
        }
    }

    #[test]
    fn parallelogram_and_custom_agree() {
        let p = LatticeRegion::parallelogram(Site::new(-2, 3), 5, 4).unwrap();
        assert_eq!(p.len(), 20);
        let sites: Vec<Site> = p.sites().collect();
        let mut shuffled = sites.clone();
        shuffled.reverse();
        shuffled.extend_from_slice(&sites[3..7]); // duplicates
        let c = LatticeRegion::custom(shuffled).unwrap();
        assert_eq!(c.len(), 20);
        assert_eq!(c.sites().collect::<Vec<_>>(), sites);
    }

    #[test]
    fn index_site_roundtrip() {
        for region in [
            origin_ball(6.5),
            LatticeRegion::annulus(3.0, 9.0).unwrap(),
            LatticeRegion::parallelogram(Site::new(5, -5), 7, 3).unwrap(),
        ] {
            let mut prev: Option<Site> = None;
            for (i, s) in region.sites().enumerate() {
                assert_eq!(region.index_of(s), Some(i as u32));
                assert_eq!(region.site_at(i as u32), s);
                if let Some(p) = prev {
                    assert!(p < s, "enumeration out of canonical order");
                }
                prev = Some(s);
            }
            assert_eq!(region.sites().count() as u32, region.len());
        }
    }

    #[test]
    fn enumeration_is_row_major() {
        let b = origin_ball(4.0);
        let sites: Vec<Site> = b.sites().collect();
        let mut sorted = sites.clone();
        sorted.sort_by_key(|s| (s.y, s.x));
        assert_eq!(sites, sorted);
    }

    #[test]
    fn contains_region_checks_interval_cover() {
        let big = origin_ball(10.0);
        let small = origin_ball(6.0);
        assert!(big.contains_region(&small));
        assert!(!small.contains_region(&big));
        let shifted = LatticeRegion::ball(Site::new(9, 0), 3.0).unwrap();
        assert!(!big.contains_region(&shifted));
        let ann = LatticeRegion::annulus(2.0, 8.0).unwrap();
        assert!(big.contains_region(&ann));
        assert!(!ann.contains_region(&origin_ball(1.2)));
    }

    #[test]
    fn neighbor_offsets_are_counterclockwise_unit_steps() {
        for k in 0..6 {
            let (dx, dy) = NEIGHBOR_OFFSETS[k];
            let s = Site::new(dx, dy);
            // Unit distance: 4|z|^2 = 4.
            assert_eq!(s.norm2_x4(), 4);
            let (x, y) = s.embed();
            let angle = y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI);
            let expected = k as f64 * std::f64::consts::PI / 3.0;
            assert!((angle - expected).abs() < 1e-12, "offset {k} at angle {angle}");
        }
    }

    #[test]
    fn sublattice_keeps_four_neighbors() {
        for s in origin_ball(5.0).sites() {
            let kept: Vec<Site> = s
                .neighbors()
                .into_iter()
                .filter(|&n| sublattice_adjacent(s, n))
                .collect();
            assert_eq!(kept.len(), 4);
            for n in kept {
                assert!(sublattice_adjacent(n, s), "sublattice adjacency asymmetric");
            }
        }
    }

    #[test]
    fn external_boundary_of_origin_is_the_six_ring() {
        let frame = origin_ball(4.0);
        let ext = boundary(&[Site::ORIGIN], BoundaryKind::External, &frame).unwrap();
        let mut ring = Site::ORIGIN.neighbors().to_vec();
        ring.sort();
        assert_eq!(ext, ring);
    }

    #[test]
    fn internal_boundary_matches_definition() {
        let frame = origin_ball(8.0);
        let w: Vec<Site> = origin_ball(3.0).sites().collect();
        let internal = boundary(&w, BoundaryKind::Internal, &frame).unwrap();
        let set: std::collections::HashSet<Site> = w.iter().copied().collect();
        let expected: Vec<Site> = {
            let mut v: Vec<Site> = w
                .iter()
                .copied()
                .filter(|s| s.neighbors().iter().any(|n| !set.contains(n)))
                .collect();
            v.sort();
            v
        };
        assert_eq!(internal, expected);
        assert!(!internal.is_empty());
        assert!(internal.len() < w.len(), "a radius-3 ball has interior sites");
    }

    #[test]
    fn exterior_circuit_of_singleton_is_the_ring_in_cyclic_order() {
        let frame = origin_ball(5.0);
        let c = exterior_circuit(&[Site::ORIGIN], &frame).unwrap();
        assert_eq!(c.len(), 6);
        let mut sorted = c.sites().to_vec();
        sorted.sort();
        let mut ring = Site::ORIGIN.neighbors().to_vec();
        ring.sort();
        assert_eq!(sorted, ring);
        assert!(c.surrounds(Site::ORIGIN));
        assert!(!c.surrounds(Site::new(2, 0)));
        assert!(!c.surrounds(Site::new(1, 0)), "circuit sites are not surrounded");
        // Counterclockwise orientation and canonical start.
        assert!(c.signed_area_doubled() > 0);
        assert_eq!(c.sites()[0], *c.sites().iter().min().unwrap());
    }

    #[test]
    fn exterior_circuit_skips_interior_holes() {
        // A ring-shaped set: ball(5) minus ball(2.5) (the hole is the origin
        // plus its two innermost neighbor rings). The set's external
        // boundary has an inner part (around the hole) and an outer part;
        // the exterior circuit must be only the outer part.
        let frame = origin_ball(9.0);
        let hole = origin_ball(2.5);
        assert_eq!(hole.len(), 13);
        let w: Vec<Site> = origin_ball(5.0)
            .sites()
            .filter(|s| !hole.contains(*s))
            .collect();
        let c = exterior_circuit(&w, &frame).unwrap();
        assert!(c.surrounds(Site::ORIGIN));
        for &s in c.sites() {
            assert!(!hole.contains(s), "circuit site {s} is on the hole side");
            let (x, y) = s.embed();
            let d = (x * x + y * y).sqrt();
            assert!(d > 3.5, "circuit site {s} at distance {d} is on the hole side");
        }
        // The full external boundary is strictly larger: it also holds the
        // hole sites adjacent to the ring.
        let ext = boundary(&w, BoundaryKind::External, &frame).unwrap();
        assert!(ext.len() > c.len());
        assert!(ext.iter().any(|s| hole.contains(*s)));
    }

    /// Oracle: the definition of the exterior-site boundary, checked per
    /// candidate site with its own path search.
    fn exterior_oracle(w: &[Site], frame: &LatticeRegion) -> Vec<Site> {
        let wset: std::collections::HashSet<Site> = w.iter().copied().collect();
        let mut ext = std::collections::HashSet::new();
        for &s in &wset {
            for n in s.neighbors() {
                if !wset.contains(&n) {
                    ext.insert(n);
                }
            }
        }
        let rim: std::collections::HashSet<u32> = frame.rim_indices().into_iter().collect();
        let mut out = Vec::new();
        for &v in &ext {
            // Search for a path from v to the frame rim avoiding w and the
            // other external-boundary sites.
            let mut seen = std::collections::HashSet::new();
            let mut stack = vec![v];
            seen.insert(v);
            let mut reached = false;
            while let Some(s) = stack.pop() {
                let idx = frame.index_of(s).unwrap();
                if rim.contains(&idx) {
                    reached = true;
                    break;
                }
                for n in s.neighbors() {
                    if !frame.contains(n) || seen.contains(&n) {
                        continue;
                    }
                    if wset.contains(&n) {
                        continue;
                    }
                    if ext.contains(&n) && n != v {
                        continue;
                    }
                    seen.insert(n);
                    stack.push(n);
                }
            }
            if reached {
                out.push(v);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn exterior_circuit_matches_per_site_oracle_on_random_blobs() {
        let frame = origin_ball(12.0);
        let mut state = 0x9E37_79B9_7F4A_7C15u64;
        let mut rand = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as u32
        };
        for case in 0..60 {
            // Grow a random connected blob near the origin.
            let mut blob = vec![Site::ORIGIN];
            let target = 3 + (rand() % 40) as usize;
            let mut guard = 0;
            while blob.len() < target && guard < 4000 {
                guard += 1;
                let s = blob[(rand() as usize) % blob.len()];
                let n = s.neighbors()[(rand() as usize) % 6];
                if n.norm2_x4() <= 4 * 49 && !blob.contains(&n) {
                    blob.push(n);
                }
            }
            let c = exterior_circuit(&blob, &frame)
                .unwrap_or_else(|e| panic!("case {case}: {e}"));
            let mut got = c.sites().to_vec();
            got.sort();
            let want = exterior_oracle(&blob, &frame);
            assert_eq!(got, want, "case {case} blob {blob:?}");
        }
    }

    #[test]
    fn surrounds_agrees_with_flood_interior() {
        let frame = origin_ball(12.0);
        let mut state = 0xDEAD_BEEF_1234_5678u64;
        let mut rand = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as u32
        };
        for _ in 0..25 {
            let mut blob = vec![Site::new(0, 0)];
            let target = 5 + (rand() % 30) as usize;
            let mut guard = 0;
            while blob.len() < target && guard < 3000 {
                guard += 1;
                let s = blob[(rand() as usize) % blob.len()];
                let n = s.neighbors()[(rand() as usize) % 6];
                if n.norm2_x4() <= 4 * 36 && !blob.contains(&n) {
                    blob.push(n);
                }
            }
            let c = exterior_circuit(&blob, &frame).unwrap();
            let interior: std::collections::HashSet<Site> =
                c.interior_sites(&frame).unwrap().into_iter().collect();
            for s in frame.sites() {
                assert_eq!(
                    c.surrounds(s),
                    interior.contains(&s),
                    "surrounds/interior mismatch at {s}"
                );
            }
            // The blob is inside its exterior circuit.
            for &b in &blob {
                assert!(c.surrounds(b) || c.contains_site(b));
            }
        }
    }

    #[test]
    fn circuit_validation_rejects_bad_sequences() {
        // Not adjacent.
        let bad = Circuit::from_sites(vec![
            Site::new(0, 0),
            Site::new(2, 0),
            Site::new(1, 1),
        ]);
        assert!(bad.is_err());
        // Duplicate site.
        let ring = Site::ORIGIN.neighbors().to_vec();
        let mut dup = ring.clone();
        dup.push(ring[0]);
        assert!(Circuit::from_sites(dup).is_err());
        // The clean ring is fine in any rotation and orientation.
        let mut rev = ring.clone();
        rev.reverse();
        let a = Circuit::from_sites(ring).unwrap();
        let b = Circuit::from_sites(rev).unwrap();
        assert_eq!(a, b, "canonical form is rotation and orientation independent");
    }

    #[test]
    fn empty_and_tiny_regions_are_harmless() {
        let e = origin_ball(0.3);
        assert!(e.is_empty());
        assert_eq!(e.bbox(), None);
        assert_eq!(e.sites().count(), 0);
        assert!(e.rim_indices().is_empty());
        let one = origin_ball(0.6);
        assert_eq!(one.len(), 1);
        assert_eq!(one.rim_indices(), vec![0]);
    }

    #[test]
    fn dense_rows_for_ball_and_not_for_annulus() {
        let b = origin_ball(6.0);
        let d = b.dense_rows().unwrap();
        for s in b.sites() {
            assert_eq!(d.index_of(s), b.index_of(s));
        }
        assert_eq!(d.index_of(Site::new(100, 0)), None);
        let a = LatticeRegion::annulus(2.0, 6.0).unwrap();
        assert!(a.dense_rows().is_none(), "annulus rows are split by the hole");
    }

    #[test]
    fn site_order_is_y_then_x() {
        let mut v = vec![Site::new(5, -1), Site::new(-5, 0), Site::new(0, -1)];
        v.sort();
        assert_eq!(v, vec![Site::new(0, -1), Site::new(5, -1), Site::new(-5, 0)]);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(LatticeRegion::ball(Site::ORIGIN, -1.0).is_err());
        assert!(LatticeRegion::ball(Site::ORIGIN, f64::NAN).is_err());
        assert!(LatticeRegion::ball(Site::ORIGIN, 1e9).is_err());
        assert!(LatticeRegion::annulus(5.0, 3.0).is_err());
        assert!(LatticeRegion::parallelogram(Site::ORIGIN, 0, 5).is_err());
        let far = Site::new(i32::MAX / 2, 0);
        assert!(LatticeRegion::custom(vec![far]).is_err());
        // Frame too small: boundary would fall outside.
        let tight = origin_ball(1.01);
        assert!(boundary(&[Site::ORIGIN], BoundaryKind::External, &tight).is_err());
    }
}
