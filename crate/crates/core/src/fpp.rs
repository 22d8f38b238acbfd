//! Passage times and geodesics.
//!
//! The passage time between two site sets is the minimum, over lattice
//! paths from one set to the other, of the number of closed sites on the
//! path, both endpoints included. Closed sites cost 1, open sites cost 0,
//! so the solver is a breadth-first search over 0/1 weights that settles
//! sites level by level in increasing distance.
//!
//! Geodesics are made deterministic by refining distance labels with hop
//! counts: among all minimum-weight paths the solver exposes one with the
//! fewest sites, and backtracking always steps to the canonically smallest
//! predecessor. The hop refinement runs as a second pass per distance
//! level; the distance-only solve stays a tight two-queue scan.
//!
//! Passage solving requires the configuration's frame to have contiguous
//! rows (ball or parallelogram regions). Annulus-shaped problems are
//! expressed by confining a solve over a ball frame to the annulus sites.

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::lattice::{ball_contains, LatticeRegion, Site, NEIGHBOR_OFFSETS};
use crate::util::BitVec;

pub(crate) const UNREACHED: u16 = u16::MAX;

/// A queue entry: dense index plus coordinates, so neighbor lookups stay
/// arithmetic.
#[derive(Clone, Copy)]
struct Entry {
    idx: u32,
    x: i32,
    k: u32, // row number within the frame
}

/// Row geometry of a dense frame together with the open-site bitmap and an
/// optional confinement mask.
pub(crate) struct Solver<'a> {
    y_min: i32,
    lo: &'a [i32],
    hi: &'a [i32],
    base: &'a [u32],
    open: &'a BitVec,
    confine: Option<&'a BitVec>,
}

pub(crate) struct DistField {
    pub dist: Vec<u16>,
    /// First target settled, with its distance (early-exit solves stop here).
    pub hit: Option<(u32, u16)>,
}

impl<'a> Solver<'a> {
    pub fn new(
        rows: &'a DenseRowsView,
        open: &'a BitVec,
        confine: Option<&'a BitVec>,
    ) -> Self {
        Solver {
            y_min: rows.y_min,
            lo: &rows.lo,
            hi: &rows.hi,
            base: &rows.base,
            open,
            confine,
        }
    }

    #[inline]
    fn weight(&self, idx: u32) -> u16 {
        (!self.open.get(idx)) as u16
    }

    #[inline]
    fn allowed(&self, idx: u32) -> bool {
        match self.confine {
            Some(c) => c.get(idx),
            None => true,
        }
    }

    /// Index of the neighbor of `(x, row k)` in direction `d`, if inside the
    /// frame.
    #[inline]
    fn neighbor(&self, x: i32, k: u32, d: usize) -> Option<(u32, i32, u32)> {
        let (dx, dy) = NEIGHBOR_OFFSETS[d];
        let nk = k as i64 + dy as i64;
        if nk < 0 || nk >= self.lo.len() as i64 {
            return None;
        }
        let nk = nk as usize;
        let nx = x + dx;
        if nx < self.lo[nk] || nx > self.hi[nk] {
            return None;
        }
        Some((self.base[nk] + (nx - self.lo[nk]) as u32, nx, nk as u32))
    }

    fn entry_for(&self, idx: u32, region: &LatticeRegion) -> Entry {
        let s = region.site_at(idx);
        Entry { idx, x: s.x, k: (s.y - self.y_min) as u32 }
    }

    /// Distance-only 0/1 BFS from `sources`. Processes whole levels in FIFO
    /// order; stops once a site satisfying `target` is settled when
    /// `early_exit` is set, otherwise computes the full distance field.
    fn solve_dist(
        &self,
        region: &LatticeRegion,
        sources: &[u32],
        target: impl Fn(u32, i32, u32) -> bool,
        early_exit: bool,
    ) -> Result<DistField> {
        let n = self.open.len();
        let mut dist = vec![UNREACHED; n as usize];
        let mut cur: Vec<Entry> = Vec::new();
        let mut next: Vec<Entry> = Vec::new();
        let mut d: u16 = 0;
        let mut hit = None;

        for &s in sources {
            if !self.allowed(s) {
                continue;
            }
            let w = self.weight(s);
            let e = self.entry_for(s, region);
            if w < dist[s as usize] {
                dist[s as usize] = w;
                if w == 0 {
                    cur.push(e);
                } else {
                    next.push(e);
                }
            }
        }

        'levels: loop {
            let mut head = 0;
            while head < cur.len() {
                let e = cur[head];
                head += 1;
                if dist[e.idx as usize] != d {
                    continue; // stale entry
                }
                if hit.is_none() && target(e.idx, e.x, e.k) {
                    hit = Some((e.idx, d));
                    if early_exit {
                        break 'levels;
                    }
                }
                for dir in 0..6 {
                    if let Some((ni, nx, nk)) = self.neighbor(e.x, e.k, dir) {
                        if !self.allowed(ni) {
                            continue;
                        }
                        let w = self.weight(ni);
                        let cand = d as u32 + w as u32;
                        if cand >= UNREACHED as u32 {
                            return Err(Error::InvalidInput(
                                "frame diameter exceeds the supported passage distance"
                                    .into(),
                            ));
                        }
                        let cand = cand as u16;
                        if cand < dist[ni as usize] {
                            dist[ni as usize] = cand;
                            let ne = Entry { idx: ni, x: nx, k: nk };
                            if w == 0 {
                                cur.push(ne);
                            } else {
                                next.push(ne);
                            }
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            cur.clear();
            std::mem::swap(&mut cur, &mut next);
            d += 1;
        }
        Ok(DistField { dist, hit })
    }

    /// Minimum hop counts (number of sites on the path) over the shortest-
    /// path graph of a completed distance field. `hops[v]` is the fewest
    /// sites of any minimum-weight path from the sources to `v`.
    ///
    /// Within one distance level the zero-weight relaxations form a
    /// multi-source BFS whose sources carry different starting depths, so
    /// entries are processed as a merge of the depth-sorted entry list with
    /// the FIFO expansion queue; this keeps pops in nondecreasing depth,
    /// which plain deque scheduling does not guarantee.
    fn solve_hops(
        &self,
        region: &LatticeRegion,
        sources: &[u32],
        dist: &[u16],
    ) -> Vec<u32> {
        let n = self.open.len();
        let mut hops = vec![u32::MAX; n as usize];

        let mut max_d = 0u16;
        for &dv in dist.iter() {
            if dv != UNREACHED && dv > max_d {
                max_d = dv;
            }
        }
        // Bucket reached sites by distance.
        let mut levels: Vec<Vec<Entry>> = vec![Vec::new(); max_d as usize + 1];
        for idx in 0..n {
            let dv = dist[idx as usize];
            if dv != UNREACHED {
                levels[dv as usize].push(self.entry_for(idx, region));
            }
        }

        let source_set: std::collections::HashSet<u32> = sources.iter().copied().collect();

        for d in 0..=max_d {
            // Entry depths for this level: sources start a path (1 site);
            // weight-1 sites extend a settled path from the previous level.
            let mut entries: Vec<(u32, Entry)> = Vec::new();
            for &e in &levels[d as usize] {
                let mut best = u32::MAX;
                if source_set.contains(&e.idx) && self.weight(e.idx) == d {
                    best = 1;
                }
                if self.weight(e.idx) == 1 && d > 0 {
                    for dir in 0..6 {
                        if let Some((ni, _, _)) = self.neighbor(e.x, e.k, dir) {
                            if self.allowed(ni)
                                && dist[ni as usize] == d - 1
                                && hops[ni as usize] != u32::MAX
                            {
                                best = best.min(hops[ni as usize] + 1);
                            }
                        }
                    }
                }
                if best != u32::MAX && best < hops[e.idx as usize] {
                    hops[e.idx as usize] = best;
                    entries.push((best, e));
                }
            }
            entries.sort_unstable_by_key(|&(h, e)| (h, e.idx));

            // Merge-BFS over the zero-weight edges inside the level.
            let mut queue: std::collections::VecDeque<(u32, Entry)> =
                std::collections::VecDeque::new();
            let mut src_i = 0;
            loop {
                let take_src = match (entries.get(src_i), queue.front()) {
                    (Some(&(hs, _)), Some(&(hq, _))) => hs <= hq,
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    (None, None) => break,
                };
                let (h, e) = if take_src {
                    let v = entries[src_i];
                    src_i += 1;
                    v
                } else {
                    queue.pop_front().unwrap()
                };
                if hops[e.idx as usize] != h {
                    continue; // stale
                }
                for dir in 0..6 {
                    if let Some((ni, nx, nk)) = self.neighbor(e.x, e.k, dir) {
                        if !self.allowed(ni) || self.weight(ni) != 0 {
                            continue;
                        }
                        if dist[ni as usize] != d {
                            continue;
                        }
                        if h + 1 < hops[ni as usize] {
                            hops[ni as usize] = h + 1;
                            queue.push_back((h + 1, Entry { idx: ni, x: nx, k: nk }));
                        }
                    }
                }
            }
        }
        hops
    }
}

/// Row arrays of a contiguous-row frame, the geometry solvers index
/// against.
pub(crate) struct DenseRowsView {
    pub y_min: i32,
    pub lo: Vec<i32>,
    pub hi: Vec<i32>,
    pub base: Vec<u32>,
}

impl DenseRowsView {
    pub fn of(region: &LatticeRegion) -> Result<Self> {
        let rows = region.dense_rows().ok_or_else(|| {
            Error::InvalidInput(
                "passage solving needs a frame with contiguous rows \
                 (ball or parallelogram); confine over such a frame instead"
                    .into(),
            )
        })?;
        Ok(DenseRowsView { y_min: rows.y_min, lo: rows.lo, hi: rows.hi, base: rows.base })
    }
}

/// A passage-time solve that reached its target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassageOutcome {
    /// Total weight: number of closed sites on the geodesic, endpoints
    /// included.
    pub time: u32,
    /// One minimum-weight path from the source set to the target set, in
    /// order, starting at a source site and ending at a target site. Among
    /// minimum-weight paths it has the fewest sites, and ties break toward
    /// canonically smaller sites during backtracking.
    pub geodesic: Vec<Site>,
}

/// Result of a passage-time query between two site sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Passage {
    Reached(PassageOutcome),
    Unreachable,
}

impl Passage {
    pub fn time(&self) -> Option<u32> {
        match self {
            Passage::Reached(o) => Some(o.time),
            Passage::Unreachable => None,
        }
    }
}

fn index_sets(
    cfg: &Configuration,
    a: &[Site],
    b: &[Site],
    confine: Option<&LatticeRegion>,
) -> Result<(Vec<u32>, Vec<u32>, Option<BitVec>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("passage time between empty site sets".into()));
    }
    let region = cfg.region();
    let mask = match confine {
        None => None,
        Some(c) => {
            let mut bits = BitVec::new(region.len());
            for s in c.sites() {
                match region.index_of(s) {
                    Some(i) => bits.set(i),
                    None => {
                        return Err(Error::FrameTooSmall(format!(
                            "confinement site {s} outside the configuration frame"
                        )))
                    }
                }
            }
            Some(bits)
        }
    };
    let lookup = |set: &[Site], name: &str| -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(set.len());
        for &s in set {
            let idx = region.index_of(s).ok_or_else(|| {
                Error::InvalidInput(format!("{name} site {s} outside the frame"))
            })?;
            if let Some(m) = &mask {
                if !m.get(idx) {
                    return Err(Error::InvalidInput(format!(
                        "{name} site {s} outside the confinement region"
                    )));
                }
            }
            out.push(idx);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    };
    Ok((lookup(a, "source")?, lookup(b, "target")?, mask))
}

/// Minimum passage time between site sets `a` and `b`, optionally confined
/// to a sub-region, with a deterministic geodesic.
pub fn passage_time(
    cfg: &Configuration,
    a: &[Site],
    b: &[Site],
    confine: Option<&LatticeRegion>,
) -> Result<Passage> {
    let (src, dst, mask) = index_sets(cfg, a, b, confine)?;
    let rows = DenseRowsView::of(cfg.region())?;
    let solver = Solver::new(&rows, cfg.open_bits(), mask.as_ref());
    let mut target_bits = BitVec::new(cfg.region().len());
    for &t in &dst {
        target_bits.set(t);
    }
    let field = solver.solve_dist(
        cfg.region(),
        &src,
        |idx, _, _| target_bits.get(idx),
        false,
    )?;
    let Some(_) = field.hit else {
        return Ok(Passage::Unreachable);
    };
    let hops = solver.solve_hops(cfg.region(), &src, &field.dist);
    Ok(Passage::Reached(backtrack(
        cfg,
        &solver,
        &src,
        &dst,
        &field.dist,
        &hops,
    )?))
}

/// Passage time only: early-exit solve, no geodesic, less memory traffic.
pub fn passage_value(
    cfg: &Configuration,
    a: &[Site],
    b: &[Site],
    confine: Option<&LatticeRegion>,
) -> Result<Option<u32>> {
    let (src, dst, mask) = index_sets(cfg, a, b, confine)?;
    let rows = DenseRowsView::of(cfg.region())?;
    let solver = Solver::new(&rows, cfg.open_bits(), mask.as_ref());
    let mut target_bits = BitVec::new(cfg.region().len());
    for &t in &dst {
        target_bits.set(t);
    }
    let field = solver.solve_dist(
        cfg.region(),
        &src,
        |idx, _, _| target_bits.get(idx),
        true,
    )?;
    Ok(field.hit.map(|(_, d)| d as u32))
}

/// Deterministic geodesic extraction from completed (dist, hops) labels:
/// pick the best target by (distance, hops, site), then walk back choosing
/// at each step the canonically smallest neighbor whose labels certify it
/// as a predecessor on an optimal path.
fn backtrack(
    cfg: &Configuration,
    solver: &Solver,
    src: &[u32],
    dst: &[u32],
    dist: &[u16],
    hops: &[u32],
) -> Result<PassageOutcome> {
    let region = cfg.region();
    let mut best: Option<(u16, u32, Site, u32)> = None;
    for &t in dst {
        if dist[t as usize] == UNREACHED {
            continue;
        }
        let s = region.site_at(t);
        let key = (dist[t as usize], hops[t as usize], s);
        let better = match best {
            None => true,
            Some((bd, bh, bs, _)) => key < (bd, bh, bs),
        };
        if better {
            best = Some((key.0, key.1, key.2, t));
        }
    }
    let (time, _, _, t_idx) =
        best.ok_or_else(|| Error::Internal("backtrack called without a reached target".into()))?;

    let src_set: std::collections::HashSet<u32> = src.iter().copied().collect();
    let mut path = Vec::new();
    let mut cur = t_idx;
    loop {
        let s = region.site_at(cur);
        path.push(s);
        let d = dist[cur as usize];
        let h = hops[cur as usize];
        let w = (!cfg.open_at(cur)) as u16;
        if h == 1 {
            if !(src_set.contains(&cur) && d == w) {
                return Err(Error::Internal("geodesic start is not a source".into()));
            }
            break;
        }
        // Predecessor labels on an optimal path.
        let (pd, ph) = (d - w, h - 1);
        let mut chosen: Option<(Site, u32)> = None;
        for n in s.neighbors() {
            if let Some(ni) = region.index_of(n) {
                if !solver.allowed(ni) {
                    continue;
                }
                if dist[ni as usize] == pd && hops[ni as usize] == ph {
                    match chosen {
                        Some((cs, _)) if cs < n => {}
                        _ => chosen = Some((n, ni)),
                    }
                }
            }
        }
        let Some((_, ni)) = chosen else {
            return Err(Error::Internal("geodesic backtrack found no predecessor".into()));
        };
        cur = ni;
    }
    path.reverse();
    debug_assert_eq!(
        path.iter()
            .map(|&s| (!cfg.is_open(s).unwrap()) as u32)
            .sum::<u32>(),
        time as u32
    );
    Ok(PassageOutcome { time: time as u32, geodesic: path })
}

/// Re-checks a claimed geodesic: endpoint membership, adjacency, frame and
/// confinement containment, weight accumulation, and optimality against a
/// fresh solve. Returns a description of the first violation found.
pub fn verify_geodesic(
    cfg: &Configuration,
    a: &[Site],
    b: &[Site],
    confine: Option<&LatticeRegion>,
    path: &[Site],
    claimed_time: u32,
) -> std::result::Result<(), String> {
    if path.is_empty() {
        return Err("empty path".into());
    }
    if !a.contains(&path[0]) {
        return Err(format!("path starts at {} which is not a source", path[0]));
    }
    let last = *path.last().unwrap();
    if !b.contains(&last) {
        return Err(format!("path ends at {last} which is not a target"));
    }
    let mut acc = 0u32;
    for (i, &s) in path.iter().enumerate() {
        match cfg.is_open(s) {
            None => return Err(format!("path site {s} outside the frame")),
            Some(open) => {
                if !open {
                    acc += 1;
                }
            }
        }
        if let Some(c) = confine {
            if !c.contains(s) {
                return Err(format!("path site {s} outside the confinement region"));
            }
        }
        if i + 1 < path.len() {
            if !s.adjacent(path[i + 1]) {
                return Err(format!("path sites {s} and {} are not adjacent", path[i + 1]));
            }
            if path[i + 1] == s {
                return Err(format!("path repeats site {s}"));
            }
        }
    }
    if acc != claimed_time {
        return Err(format!("path weight {acc} does not match claimed time {claimed_time}"));
    }
    match passage_value(cfg, a, b, confine) {
        Ok(Some(t)) if t == claimed_time => Ok(()),
        Ok(Some(t)) => Err(format!("claimed time {claimed_time} but optimum is {t}")),
        Ok(None) => Err("solver reports the target unreachable".into()),
        Err(e) => Err(format!("re-solve failed: {e}")),
    }
}

/// Time from the origin to the complement of the radius-`n` ball: the
/// minimum weight over paths from the origin to any site outside `ball(n)`.
/// The frame must contain `ball(n)` plus one surrounding site layer.
pub fn time_to_radius(cfg: &Configuration, n: f64) -> Result<u32> {
    let region = cfg.region();
    if region.index_of(Site::ORIGIN).is_none() {
        return Err(Error::InvalidInput("frame does not contain the origin".into()));
    }
    if !ball_contains(Site::ORIGIN, n, Site::ORIGIN) {
        return Err(Error::InvalidInput(format!(
            "radius {n} does not even contain the origin's face"
        )));
    }
    let guard = LatticeRegion::ball(Site::ORIGIN, n + 1.16)?;
    if !region.contains_region(&guard) {
        return Err(Error::FrameTooSmall(format!(
            "frame must contain ball({n}) plus a surrounding layer"
        )));
    }
    let rows = DenseRowsView::of(region)?;
    // Per-row x-bounds of ball(n): a popped site is a target iff outside.
    let nrows = rows.lo.len();
    let mut blo = vec![i32::MAX; nrows];
    let mut bhi = vec![i32::MIN; nrows];
    let ball = LatticeRegion::ball(Site::ORIGIN, n)?;
    for ivl in ball.intervals() {
        let k = (ivl.y - rows.y_min) as usize;
        blo[k] = ivl.lo;
        bhi[k] = ivl.hi;
    }
    let solver = Solver::new(&rows, cfg.open_bits(), None);
    let src = [region.index_of(Site::ORIGIN).unwrap()];
    let field = solver.solve_dist(
        region,
        &src,
        |_, x, k| x < blo[k as usize] || x > bhi[k as usize],
        true,
    )?;
    match field.hit {
        Some((_, d)) => Ok(d as u32),
        // The frame is connected and strictly larger than ball(n), so some
        // target is always reachable.
        None => Err(Error::Internal("radius solve found no boundary site".into())),
    }
}

/// Point-to-point passage time from the origin to `(n, 0)`.
pub fn axis_time(cfg: &Configuration, n: u32) -> Result<u32> {
    let target = Site::new(n as i32, 0);
    match passage_value(cfg, &[Site::ORIGIN], &[target], None)? {
        Some(t) => Ok(t),
        None => Err(Error::Internal(
            "axis endpoints disconnected inside a connected frame".into(),
        )),
    }
}

/// Sites of the annulus adjacent to the inner hole (when `side_inner`) or
/// to the outside of the outer ball.
fn annulus_edge(ann: &LatticeRegion, r: f64, big: f64, side_inner: bool) -> Vec<Site> {
    let mut out = Vec::new();
    for s in ann.sites() {
        let on_edge = s.neighbors().iter().any(|&nb| {
            if side_inner {
                ball_contains(Site::ORIGIN, r, nb)
            } else {
                !ball_contains(Site::ORIGIN, big, nb)
            }
        });
        if on_edge {
            out.push(s);
        }
    }
    out
}

/// Crossing time of the annulus `A(r, big)`: minimum weight over paths that
/// stay inside the annulus and connect its inner boundary (sites adjacent
/// to the hole) to its outer boundary (sites adjacent to the outside).
/// The configuration frame must contain the annulus.
pub fn annulus_crossing(cfg: &Configuration, r: f64, big: f64) -> Result<Passage> {
    let (ann, src, dst) = annulus_problem(cfg, r, big)?;
    passage_time(cfg, &src, &dst, Some(&ann))
}

/// Crossing time only (early exit, no geodesic).
pub fn annulus_crossing_value(cfg: &Configuration, r: f64, big: f64) -> Result<Option<u32>> {
    let (ann, src, dst) = annulus_problem(cfg, r, big)?;
    passage_value(cfg, &src, &dst, Some(&ann))
}

fn annulus_problem(
    cfg: &Configuration,
    r: f64,
    big: f64,
) -> Result<(LatticeRegion, Vec<Site>, Vec<Site>)> {
    if r >= big {
        return Err(Error::InvalidInput(format!(
            "annulus needs r < R, got r={r}, R={big}"
        )));
    }
    let ann = LatticeRegion::annulus(r, big)?;
    if ann.is_empty() {
        return Err(Error::InvalidInput(format!("annulus A({r}, {big}) has no sites")));
    }
    if !cfg.region().contains_region(&ann) {
        return Err(Error::FrameTooSmall(format!(
            "frame does not contain the annulus A({r}, {big})"
        )));
    }
    let src = annulus_edge(&ann, r, big, true);
    let dst = annulus_edge(&ann, r, big, false);
    if src.is_empty() || dst.is_empty() {
        return Err(Error::InvalidInput(format!(
            "annulus A({r}, {big}) has no boundary sites on one side"
        )));
    }
    Ok((ann, src, dst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CouplingField;
    use crate::lattice::LatticeRegion;
    use std::sync::Arc;

    fn cfg_on_ball(r: f64, seed: u64, p: f64) -> Configuration {
        let region = Arc::new(LatticeRegion::ball(Site::ORIGIN, r).unwrap());
        CouplingField::new(region, seed).threshold(p).unwrap()
    }

    /// Lexicographic (distance, hops) Dijkstra oracle with a binary heap.
    fn dijkstra_oracle(
        cfg: &Configuration,
        sources: &[Site],
        confine: Option<&LatticeRegion>,
    ) -> (Vec<u16>, Vec<u32>) {
        let region = cfg.region();
        let n = region.len() as usize;
        let mut dist = vec![UNREACHED; n];
        let mut hops = vec![u32::MAX; n];
        let mut heap = std::collections::BinaryHeap::new();
        let allowed = |s: Site| confine.map_or(true, |c| c.contains(s));
        for &s in sources {
            let idx = region.index_of(s).unwrap();
            if !allowed(s) {
                continue;
            }
            let w = (!cfg.is_open(s).unwrap()) as u16;
            if (w, 1) < (dist[idx as usize], hops[idx as usize]) {
                dist[idx as usize] = w;
                hops[idx as usize] = 1;
                heap.push(std::cmp::Reverse((w, 1u32, idx)));
            }
        }
        while let Some(std::cmp::Reverse((d, h, idx))) = heap.pop() {
            if (d, h) != (dist[idx as usize], hops[idx as usize]) {
                continue;
            }
            let s = region.site_at(idx);
            for nb in s.neighbors() {
                if let Some(ni) = region.index_of(nb) {
                    if !allowed(nb) {
                        continue;
                    }
                    let w = (!cfg.is_open(nb).unwrap()) as u16;
                    let cand = (d + w, h + 1);
                    if cand < (dist[ni as usize], hops[ni as usize]) {
                        dist[ni as usize] = cand.0;
                        hops[ni as usize] = cand.1;
                        heap.push(std::cmp::Reverse((cand.0, cand.1, ni)));
                    }
                }
            }
        }
        (dist, hops)
    }

    #[test]
    fn solver_matches_lexicographic_dijkstra() {
        let mut violations = 0;
        for case in 0..10_000u64 {
            let p = [0.2, 0.35, 0.5, 0.65, 0.8][(case % 5) as usize];
            let cfg = cfg_on_ball(9.0, 0xA000 + case, p);
            let region = cfg.region();
            let rows = DenseRowsView::of(region).unwrap();
            let solver = Solver::new(&rows, cfg.open_bits(), None);
            let sources = [Site::ORIGIN];
            let src_idx = [region.index_of(Site::ORIGIN).unwrap()];
            let field = solver
                .solve_dist(region, &src_idx, |_, _, _| false, false)
                .unwrap();
            let hops = solver.solve_hops(region, &src_idx, &field.dist);
            let (odist, ohops) = dijkstra_oracle(&cfg, &sources, None);
            if field.dist != odist || hops != ohops {
                violations += 1;
                if violations < 4 {
                    for i in 0..region.len() as usize {
                        if field.dist[i] != odist[i] || hops[i] != ohops[i] {
                            eprintln!(
                                "case {case} site {}: solver ({}, {}) oracle ({}, {})",
                                region.site_at(i as u32),
                                field.dist[i],
                                hops[i],
                                odist[i],
                                ohops[i]
                            );
                        }
                    }
                }
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn solver_matches_dijkstra_with_confinement_and_multisource() {
        let ann = LatticeRegion::annulus(3.0, 8.0).unwrap();
        for case in 0..300u64 {
            let cfg = cfg_on_ball(10.0, 0xB000 + case, 0.5);
            let region = cfg.region();
            let rows = DenseRowsView::of(region).unwrap();
            let mut mask = BitVec::new(region.len());
            for s in ann.sites() {
                mask.set(region.index_of(s).unwrap());
            }
            let solver = Solver::new(&rows, cfg.open_bits(), Some(&mask));
            let sources: Vec<Site> = annulus_edge(&ann, 3.0, 8.0, true);
            let src_idx: Vec<u32> = {
                let mut v: Vec<u32> = sources
                    .iter()
                    .map(|&s| region.index_of(s).unwrap())
                    .collect();
                v.sort_unstable();
                v
            };
            let field = solver
                .solve_dist(region, &src_idx, |_, _, _| false, false)
                .unwrap();
            let hops = solver.solve_hops(region, &src_idx, &field.dist);
            let (odist, ohops) = dijkstra_oracle(&cfg, &sources, Some(&ann));
            assert_eq!(field.dist, odist, "case {case}");
            assert_eq!(hops, ohops, "case {case}");
        }
    }

    #[test]
    fn geodesic_is_optimal_deterministic_and_verifiable() {
        for case in 0..500u64 {
            let cfg = cfg_on_ball(8.0, 0xC000 + case, 0.45);
            let a = [Site::new(-5, 0)];
            let b = [Site::new(5, 0), Site::new(4, 2)];
            let p1 = passage_time(&cfg, &a, &b, None).unwrap();
            let p2 = passage_time(&cfg, &a, &b, None).unwrap();
            assert_eq!(p1, p2, "determinism violated in case {case}");
            match p1 {
                Passage::Unreachable => panic!("ball frame is connected"),
                Passage::Reached(o) => {
                    verify_geodesic(&cfg, &a, &b, None, &o.geodesic, o.time)
                        .unwrap_or_else(|e| panic!("case {case}: {e}"));
                    // Hop minimality: no strictly shorter optimal path site
                    // count. Cross-check with the oracle's hops at the end.
                    let (_, ohops) = dijkstra_oracle(&cfg, &a, None);
                    let end = *o.geodesic.last().unwrap();
                    let end_idx = cfg.region().index_of(end).unwrap();
                    assert_eq!(
                        o.geodesic.len() as u32,
                        ohops[end_idx as usize],
                        "case {case}: geodesic not hop-minimal"
                    );
                }
            }
        }
    }

    #[test]
    fn all_open_and_all_closed_distances() {
        let cfg = cfg_on_ball(6.0, 1, 1.0);
        // Everything open: zero passage time everywhere.
        assert_eq!(time_to_radius(&cfg, 4.0).unwrap(), 0);
        assert_eq!(axis_time(&cfg, 4).unwrap(), 0);
        let cfg = cfg_on_ball(6.0, 1, 0.0);
        // Everything closed: axis time counts sites on the straight path
        // (n + 1 of them, endpoints included).
        assert_eq!(axis_time(&cfg, 4).unwrap(), 5);
        // Time to leave ball(4) with everything closed: (4, 0) is already
        // outside (its face pokes past the disc), so the path 0..(4,0) has
        // 5 sites.
        let t = time_to_radius(&cfg, 4.0).unwrap();
        assert_eq!(t, 5);
    }

    #[test]
    fn passage_time_is_symmetric_and_monotone() {
        for case in 0..200u64 {
            let cfg = cfg_on_ball(8.0, 0xD000 + case, 0.5);
            let a = [Site::new(-4, 1)];
            let b = [Site::new(4, -2)];
            let tab = passage_value(&cfg, &a, &b, None).unwrap().unwrap();
            let tba = passage_value(&cfg, &b, &a, None).unwrap().unwrap();
            assert_eq!(tab, tba, "case {case}: symmetry");
            // Radius monotonicity.
            let t3 = time_to_radius(&cfg, 3.0).unwrap();
            let t5 = time_to_radius(&cfg, 5.0).unwrap();
            let t6 = time_to_radius(&cfg, 6.5).unwrap();
            assert!(t3 <= t5 && t5 <= t6, "case {case}: radius monotonicity");
        }
    }

    #[test]
    fn passage_time_decreases_as_p_grows() {
        let region = Arc::new(LatticeRegion::ball(Site::ORIGIN, 10.0).unwrap());
        for seed in 0..100 {
            let field = CouplingField::new(Arc::clone(&region), 0xE00 + seed);
            let mut prev = u32::MAX;
            for p in [0.2, 0.4, 0.6, 0.8] {
                let cfg = field.threshold(p).unwrap();
                let t = time_to_radius(&cfg, 7.0).unwrap();
                assert!(t <= prev, "passage time must fall as p rises (seed {seed})");
                prev = t;
            }
        }
    }

    #[test]
    fn annulus_crossing_respects_confinement() {
        for case in 0..200u64 {
            let cfg = cfg_on_ball(10.0, 0xF00 + case, 0.5);
            match annulus_crossing(&cfg, 3.0, 8.0).unwrap() {
                Passage::Unreachable => panic!("annulus is connected"),
                Passage::Reached(o) => {
                    let ann = LatticeRegion::annulus(3.0, 8.0).unwrap();
                    for &s in &o.geodesic {
                        assert!(ann.contains(s), "geodesic leaves the annulus at {s}");
                    }
                    // Endpoints touch hole and outside respectively.
                    let first = o.geodesic[0];
                    let last = *o.geodesic.last().unwrap();
                    assert!(first
                        .neighbors()
                        .iter()
                        .any(|&nb| ball_contains(Site::ORIGIN, 3.0, nb)));
                    assert!(last
                        .neighbors()
                        .iter()
                        .any(|&nb| !ball_contains(Site::ORIGIN, 8.0, nb)));
                    let v = annulus_crossing_value(&cfg, 3.0, 8.0).unwrap().unwrap();
                    assert_eq!(v, o.time);
                }
            }
        }
    }

    #[test]
    fn unreachable_is_reported() {
        // Confine to two disconnected patches.
        let region = Arc::new(LatticeRegion::ball(Site::ORIGIN, 10.0).unwrap());
        let cfg = CouplingField::new(region, 3).threshold(0.5).unwrap();
        let patches = LatticeRegion::custom(
            LatticeRegion::ball(Site::new(-6, 0), 1.2)
                .unwrap()
                .sites()
                .chain(LatticeRegion::ball(Site::new(6, 0), 1.2).unwrap().sites())
                .collect(),
        )
        .unwrap();
        let got = passage_time(&cfg, &[Site::new(-6, 0)], &[Site::new(6, 0)], Some(&patches))
            .unwrap();
        assert_eq!(got, Passage::Unreachable);
        assert_eq!(
            passage_value(&cfg, &[Site::new(-6, 0)], &[Site::new(6, 0)], Some(&patches))
                .unwrap(),
            None
        );
    }

    #[test]
    fn input_validation() {
        let cfg = cfg_on_ball(5.0, 9, 0.5);
        assert!(passage_time(&cfg, &[], &[Site::ORIGIN], None).is_err());
        assert!(passage_time(&cfg, &[Site::new(100, 0)], &[Site::ORIGIN], None).is_err());
        assert!(time_to_radius(&cfg, 4.9).is_err(), "no room for the outside layer");
        assert!(time_to_radius(&cfg, 0.1).is_err());
        // Annulus frames are rejected for solving (no contiguous rows).
        let ann = Arc::new(LatticeRegion::annulus(2.0, 6.0).unwrap());
        let acfg = CouplingField::new(ann, 1).threshold(0.5).unwrap();
        assert!(passage_value(&acfg, &[Site::new(4, 0)], &[Site::new(-4, 0)], None).is_err());
    }

    #[test]
    fn verify_geodesic_rejects_bad_paths() {
        let cfg = cfg_on_ball(6.0, 77, 0.5);
        let a = [Site::new(-3, 0)];
        let b = [Site::new(3, 0)];
        let Passage::Reached(o) = passage_time(&cfg, &a, &b, None).unwrap() else {
            panic!()
        };
        assert!(verify_geodesic(&cfg, &a, &b, None, &o.geodesic, o.time).is_ok());
        // Wrong claimed time.
        assert!(verify_geodesic(&cfg, &a, &b, None, &o.geodesic, o.time + 1).is_err());
        // Truncated path.
        assert!(verify_geodesic(&cfg, &a, &b, None, &o.geodesic[1..], o.time).is_err());
        // Teleporting path.
        let bad = vec![Site::new(-3, 0), Site::new(3, 0)];
        assert!(verify_geodesic(&cfg, &a, &b, None, &bad, o.time).is_err());
    }
}
