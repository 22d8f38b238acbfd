//! Circuit-level structure of a colored configuration: maximal families of
//! disjoint closed circuits around the origin, cluster-boundary loop counts,
//! the parity color switch that exchanges the two quantities, annulus arm
//! and circuit events, and nesting profiles over geometric shells.
//!
//! Conventions used throughout this module:
//!
//! * circuits of interest surround the origin and consist of closed
//!   (weight-1) sites; "open" growth means flooding through weight-0 sites;
//! * a cluster-boundary loop is attributed to the surrounding cluster whose
//!   bounded hole contains the origin, and the loop lies in an annulus when
//!   every site of the hole adjacent to that cluster (the hole-side lining)
//!   lies in the annulus;
//! * every function here requires the configuration to cover the closed
//!   ball of the outer working radius plus a three-site margin, so that
//!   exterior boundaries can be traced inside the frame.

use std::sync::Arc;

use crate::config::Configuration;
use crate::lattice::{
    ball_contains, exterior_circuit, Circuit, DenseRows, LatticeRegion, RegionShape, Site,
};
use crate::util::BitVec;
use crate::{Error, Result};

/// Margin, in sites, between the outer working radius and the frame edge.
const FRAME_MARGIN: f64 = 3.0;

/// Largest outer radius accepted by [`nesting_profile`].
const MAX_PROFILE_RADIUS: f64 = 5_000.0;

fn site_radius(s: Site) -> f64 {
    (s.norm2_x4() as f64).sqrt() * 0.5
}

/// Working grid shared by the operations in this module: a ball frame with a
/// margin, fast row indexing for it and for the main (inner) ball, and the
/// configuration's colors resolved onto frame indices.
struct Work {
    frame: Arc<LatticeRegion>,
    rows: DenseRows,
    main: DenseRows,
    open: BitVec,
}

impl Work {
    /// Build the grid for a computation whose action happens inside
    /// `ball(center, r_out)`. With `closed_frame_check` the configuration
    /// must cover `ball(center, r_out + FRAME_MARGIN)`. When `blue_outside`
    /// is set, every frame site outside the main ball is forced open,
    /// realizing a monochromatic open boundary condition.
    fn new(cfg: &Configuration, center: Site, r_out: f64, blue_outside: bool) -> Result<Work> {
        let need = r_out + FRAME_MARGIN;
        let reuse = match cfg.region().shape() {
            RegionShape::Ball { cx, cy, r } => *cx == center.x && *cy == center.y && *r == need,
            _ => false,
        };
        let frame: Arc<LatticeRegion> = if reuse {
            cfg.region().clone()
        } else {
            let f = LatticeRegion::ball(center, need)?;
            if !cfg.region().contains_region(&f) {
                return Err(Error::FrameTooSmall(format!(
                    "configuration must cover the ball of radius {need} around {center} \
                     (outer radius {r_out} plus a {FRAME_MARGIN}-site margin)"
                )));
            }
            Arc::new(f)
        };
        let rows = frame.dense_rows().expect("ball frames have contiguous rows");
        let main_region = LatticeRegion::ball(center, r_out)?;
        let main = main_region
            .dense_rows()
            .ok_or_else(|| Error::InvalidInput(format!("ball of radius {r_out} has no sites")))?;
        let mut open = if reuse {
            cfg.open_bits().clone()
        } else {
            let mut bits = BitVec::new(frame.len());
            for (i, s) in frame.sites().enumerate() {
                if cfg.is_open(s).expect("frame is inside the configuration region") {
                    bits.set(i as u32);
                }
            }
            bits
        };
        if blue_outside {
            for (i, s) in frame.sites().enumerate() {
                if main.index_of(s).is_none() {
                    open.set(i as u32);
                }
            }
        }
        Ok(Work { frame, rows, main, open })
    }

    #[inline]
    fn idx(&self, s: Site) -> Option<u32> {
        self.rows.index_of(s)
    }

    #[inline]
    fn is_open(&self, i: u32) -> bool {
        self.open.get(i)
    }

    #[inline]
    fn in_main(&self, s: Site) -> bool {
        self.main.index_of(s).is_some()
    }
}

/// Grow `in_w` from the sites on `stack` through sites whose open state
/// equals `through_open`, confined to the main ball. Every newly absorbed
/// site is appended to `members` and scheduled for scanning. Returns `true`
/// if any scanned site has a neighbor outside the main ball, which means
/// the growing set has reached the outer boundary.
fn grow_confined(
    wk: &Work,
    through_open: bool,
    in_w: &mut BitVec,
    members: &mut Vec<Site>,
    stack: &mut Vec<Site>,
) -> bool {
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            if !wk.in_main(n) {
                stack.clear();
                return true;
            }
            let j = wk.idx(n).expect("main ball lies inside the frame");
            if !in_w.get(j) && wk.is_open(j) == through_open {
                in_w.set(j);
                members.push(n);
                stack.push(n);
            }
        }
    }
    false
}

/// A maximal family of disjoint closed circuits surrounding the origin in
/// the annulus `A(r_in, r_out)`, listed innermost first.
#[derive(Clone, Debug)]
pub struct CircuitDecomposition {
    circuits: Vec<Circuit>,
    r_in: f64,
    r_out: f64,
}

impl CircuitDecomposition {
    /// The circuits, innermost first.
    pub fn circuits(&self) -> &[Circuit] {
        &self.circuits
    }

    pub fn count(&self) -> u32 {
        self.circuits.len() as u32
    }

    pub fn r_in(&self) -> f64 {
        self.r_in
    }

    pub fn r_out(&self) -> f64 {
        self.r_out
    }
}

/// Peel the maximal family of disjoint closed circuits surrounding the
/// origin in `A(r_in, r_out)`, innermost first.
///
/// Starting from the ball `B(r_in)`, the absorbed set repeatedly grows
/// through open sites inside `B(r_out)`; while the growth stays strictly
/// inside, its infinity-facing boundary is an all-closed circuit
/// surrounding the origin, which is recorded and absorbed. The peel stops
/// when the growth reaches the complement of `B(r_out)`.
///
/// Requires `0.5 <= r_in < r_out` and a configuration covering
/// `B(r_out + 3)`.
pub fn peel_yellow_circuits(
    cfg: &Configuration,
    r_in: f64,
    r_out: f64,
) -> Result<CircuitDecomposition> {
    if !(r_in >= 0.5) || !(r_out > r_in) || !r_out.is_finite() {
        return Err(Error::InvalidInput(format!(
            "peeling needs 0.5 <= r_in < r_out, got r_in={r_in}, r_out={r_out}"
        )));
    }
    let wk = Work::new(cfg, Site::ORIGIN, r_out, false)?;
    let core = LatticeRegion::ball(Site::ORIGIN, r_in)?;

    let mut in_w = BitVec::new(wk.frame.len());
    let mut members: Vec<Site> = Vec::new();
    let mut stack: Vec<Site> = Vec::new();
    for s in core.sites() {
        let i = wk.idx(s).expect("core ball lies inside the frame");
        in_w.set(i);
        members.push(s);
        stack.push(s);
    }

    let mut circuits = Vec::new();
    loop {
        let escaped = grow_confined(&wk, true, &mut in_w, &mut members, &mut stack);
        if escaped {
            break;
        }
        let circuit = exterior_circuit(&members, &wk.frame)?;
        for &s in circuit.sites() {
            let j = wk.idx(s).expect("circuit lies inside the frame");
            if wk.is_open(j) {
                return Err(Error::Internal(format!(
                    "peeled boundary contains the open site {s}"
                )));
            }
        }
        if !circuit.surrounds(Site::ORIGIN) {
            return Err(Error::Internal(
                "peeled boundary does not surround the origin".into(),
            ));
        }
        for &s in circuit.sites() {
            let j = wk.idx(s).expect("circuit lies inside the frame");
            in_w.set(j);
            members.push(s);
            stack.push(s);
        }
        circuits.push(circuit);
        if circuits.len() > wk.frame.len() as usize {
            return Err(Error::Internal("peeling failed to terminate".into()));
        }
    }
    Ok(CircuitDecomposition { circuits, r_in, r_out })
}

/// The maximal number of disjoint closed circuits surrounding the origin in
/// `A(r_in, r_out)` — the count of [`peel_yellow_circuits`].
pub fn rho(cfg: &Configuration, r_in: f64, r_out: f64) -> Result<u32> {
    Ok(peel_yellow_circuits(cfg, r_in, r_out)?.count())
}

/// Check the incidence contract between an annulus-crossing geodesic and a
/// peeled decomposition on the same configuration: every closed site of the
/// geodesic lies on exactly one peeled circuit, distinct closed sites lie
/// on distinct circuits, and the number of closed sites equals the circuit
/// count. Returns a description of the first violation.
pub fn verify_crossing_incidence(
    cfg: &Configuration,
    deco: &CircuitDecomposition,
    geodesic: &[Site],
) -> std::result::Result<(), String> {
    let mut used = vec![false; deco.circuits.len()];
    let mut closed_sites = 0u32;
    for &s in geodesic {
        match cfg.is_open(s) {
            None => return Err(format!("geodesic site {s} is outside the configuration")),
            Some(true) => continue,
            Some(false) => {}
        }
        closed_sites += 1;
        let hits: Vec<usize> = deco
            .circuits
            .iter()
            .enumerate()
            .filter(|(_, c)| c.contains_site(s))
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [] => return Err(format!("closed geodesic site {s} lies on no peeled circuit")),
            [i] => {
                if used[*i] {
                    return Err(format!(
                        "two closed geodesic sites lie on the same peeled circuit ({s})"
                    ));
                }
                used[*i] = true;
            }
            _ => {
                return Err(format!(
                    "closed geodesic site {s} lies on {} circuits",
                    hits.len()
                ))
            }
        }
    }
    if closed_sites != deco.count() {
        return Err(format!(
            "geodesic carries {closed_sites} closed sites but the decomposition has {} circuits",
            deco.count()
        ));
    }
    Ok(())
}

/// Flip the colors of alternating nested domains of a peeled decomposition.
///
/// With `n` circuits indexed outermost first and `D_k` the set of sites
/// strictly inside the `k`-th outermost circuit, the flipped region is
/// `D_1\D_2 ∪ D_3\D_4 ∪ …`, ending with `D_n` alone when `n` is odd. With
/// no circuits the configuration is returned unchanged. The result carries
/// no sampling provenance.
pub fn color_switch(cfg: &Configuration, deco: &CircuitDecomposition) -> Result<Configuration> {
    let n = deco.circuits.len();
    if n == 0 {
        return Ok(Configuration::from_parts(
            cfg.region().clone(),
            cfg.p(),
            cfg.open_bits().clone(),
            cfg.provenance_seed(),
        ));
    }
    let wk = Work::new(cfg, Site::ORIGIN, deco.r_out, false)?;
    for c in &deco.circuits {
        for &s in c.sites() {
            if cfg.is_open(s) != Some(false) {
                return Err(Error::InvalidInput(format!(
                    "decomposition does not match the configuration: circuit site {s} \
                     is not a closed site of it"
                )));
            }
        }
    }

    // Interior masks, outermost circuit first.
    let mut interiors = Vec::with_capacity(n);
    for k in 0..n {
        let c = &deco.circuits[n - 1 - k];
        let mut mask = BitVec::new(wk.frame.len());
        for s in c.interior_sites(&wk.frame)? {
            mask.set(wk.idx(s).expect("interior lies inside the frame"));
        }
        interiors.push(mask);
    }

    let mut flip = BitVec::new(wk.frame.len());
    let mut k = 0;
    while k < n {
        if k + 1 < n {
            for ((f, &a), &b) in flip
                .words_mut()
                .iter_mut()
                .zip(interiors[k].words())
                .zip(interiors[k + 1].words())
            {
                *f |= a & !b;
            }
        } else {
            for (f, &a) in flip.words_mut().iter_mut().zip(interiors[k].words()) {
                *f |= a;
            }
        }
        k += 2;
    }

    let mut open = cfg.open_bits().clone();
    for i in flip.ones() {
        let s = wk.frame.site_at(i);
        let j = cfg
            .region()
            .index_of(s)
            .expect("frame is inside the configuration region");
        open.set_to(j, !open.get(j));
    }
    Ok(Configuration::from_parts(cfg.region().clone(), cfg.p(), open, None))
}

/// One cluster-boundary loop surrounding the origin.
#[derive(Clone, Copy, Debug)]
pub struct LoopInfo {
    /// Whether the surrounding cluster (the one whose bounded hole contains
    /// the origin) consists of open sites.
    pub cluster_is_open: bool,
    /// Smallest embedded distance from the origin over the hole-side lining
    /// of the loop.
    pub r_min: f64,
    /// Largest embedded distance over the hole-side lining.
    pub r_max: f64,
    /// Whether the lining lies entirely inside the requested annulus, which
    /// is what makes the loop count.
    pub counted: bool,
}

/// Cluster-boundary loops surrounding the origin, innermost first, with the
/// number of them lying in the requested annulus.
#[derive(Clone, Debug)]
pub struct LoopCount {
    loops: Vec<LoopInfo>,
    count: u32,
    r_in: f64,
    r_out: f64,
}

impl LoopCount {
    /// The number of loops that lie in the annulus.
    pub fn count(&self) -> u32 {
        self.count
    }

    /// Every loop surrounding the origin that was found in the frame,
    /// innermost first, including the ones outside the annulus.
    pub fn loops(&self) -> &[LoopInfo] {
        &self.loops
    }

    pub fn r_in(&self) -> f64 {
        self.r_in
    }

    pub fn r_out(&self) -> f64 {
        self.r_out
    }
}

/// Flood the monochromatic cluster of `seed` (which must already be known
/// to have open state `color`). Returns `true` when the cluster touches the
/// frame rim (a site with a neighbor outside the frame).
fn flood_cluster(
    wk: &Work,
    seed: (u32, Site),
    color: bool,
    in_c: &mut BitVec,
    members: &mut Vec<(u32, Site)>,
    stack: &mut Vec<Site>,
) -> bool {
    let mut rim_touch = false;
    stack.clear();
    in_c.set(seed.0);
    members.push(seed);
    stack.push(seed.1);
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            match wk.idx(n) {
                None => rim_touch = true,
                Some(j) => {
                    if !in_c.get(j) && wk.is_open(j) == color {
                        in_c.set(j);
                        members.push((j, n));
                        stack.push(n);
                    }
                }
            }
        }
    }
    rim_touch
}

/// Flood the component of the frame minus `avoid` that contains the origin.
/// Returns `true` if the component touches the frame rim.
fn flood_hole(
    wk: &Work,
    origin: (u32, Site),
    avoid: &BitVec,
    in_h: &mut BitVec,
    members: &mut Vec<(u32, Site)>,
    stack: &mut Vec<Site>,
) -> bool {
    let mut rim_touch = false;
    stack.clear();
    in_h.set(origin.0);
    members.push(origin);
    stack.push(origin.1);
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            match wk.idx(n) {
                None => rim_touch = true,
                Some(j) => {
                    if !in_h.get(j) && !avoid.get(j) {
                        in_h.set(j);
                        members.push((j, n));
                        stack.push(n);
                    }
                }
            }
        }
    }
    rim_touch
}

/// `in_w` := the frame minus everything reachable from the frame rim while
/// avoiding `avoid` — that is, `avoid` together with all regions it
/// encloses.
fn fill_from_rim(
    wk: &Work,
    avoid: &BitVec,
    scratch: &mut BitVec,
    in_w: &mut BitVec,
    stack: &mut Vec<Site>,
    rim: &[u32],
) {
    scratch.clear_all();
    stack.clear();
    for &i in rim {
        if !avoid.get(i) && !scratch.get(i) {
            scratch.set(i);
            stack.push(wk.frame.site_at(i));
        }
    }
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            if let Some(j) = wk.idx(n) {
                if !scratch.get(j) && !avoid.get(j) {
                    scratch.set(j);
                    stack.push(n);
                }
            }
        }
    }
    in_w.assign_not(scratch);
}

/// Count the cluster-boundary loops surrounding the origin that lie in
/// `A(r_in, r_out)`.
///
/// Walking outward from the origin's cluster, each successive surrounding
/// cluster (of either color) contributes the boundary loop of its hole
/// containing the origin; the loop lies in the annulus when its hole-side
/// lining does. With `blue_boundary` set, all frame sites outside
/// `B(r_out)` are forced open first, realizing a monochromatic open
/// boundary condition on the ball.
///
/// Requires `0 <= r_in < r_out`, `r_out >= 1`, and a configuration
/// covering `B(r_out + 3)`.
pub fn loop_count(
    cfg: &Configuration,
    r_in: f64,
    r_out: f64,
    blue_boundary: bool,
) -> Result<LoopCount> {
    if !(r_in >= 0.0) || !(r_out > r_in) || !(r_out >= 1.0) || !r_out.is_finite() {
        return Err(Error::InvalidInput(format!(
            "loop counting needs 0 <= r_in < r_out and r_out >= 1, got \
             r_in={r_in}, r_out={r_out}"
        )));
    }
    let wk = Work::new(cfg, Site::ORIGIN, r_out, blue_boundary)?;
    let v = wk.frame.len();
    let rim = wk.frame.rim_indices();
    let o = wk.idx(Site::ORIGIN).expect("origin lies inside the frame");

    let mut in_c = BitVec::new(v);
    let mut c_members: Vec<(u32, Site)> = Vec::new();
    let mut stack: Vec<Site> = Vec::new();
    let mut rim_touch = flood_cluster(
        &wk,
        (o, Site::ORIGIN),
        wk.is_open(o),
        &mut in_c,
        &mut c_members,
        &mut stack,
    );

    let mut loops = Vec::new();
    let mut in_w = BitVec::new(v);
    let mut scratch = BitVec::new(v);
    let mut in_h = BitVec::new(v);
    let mut h_members: Vec<(u32, Site)> = Vec::new();

    while !rim_touch {
        fill_from_rim(&wk, &in_c, &mut scratch, &mut in_w, &mut stack, &rim);

        let mut seeds: Vec<(u32, Site)> = Vec::new();
        for &(_, s) in &c_members {
            for n in s.neighbors() {
                if let Some(j) = wk.idx(n) {
                    if !in_w.get(j) {
                        seeds.push((j, n));
                    }
                }
            }
        }
        if seeds.is_empty() {
            break;
        }
        let color = wk.is_open(seeds[0].0);
        for &(j, s) in &seeds {
            if wk.is_open(j) != color {
                return Err(Error::Internal(format!(
                    "boundary of a filled set carries both colors (at {s})"
                )));
            }
        }
        in_c.clear_all();
        c_members.clear();
        rim_touch = flood_cluster(&wk, seeds[0], color, &mut in_c, &mut c_members, &mut stack);
        for &(j, s) in &seeds {
            if !in_c.get(j) {
                return Err(Error::Internal(format!(
                    "boundary of a filled set splits into several clusters (at {s})"
                )));
            }
        }
        if in_c.get(o) {
            return Err(Error::Internal(
                "surrounding cluster contains the origin".into(),
            ));
        }

        in_h.clear_all();
        h_members.clear();
        let h_escaped = flood_hole(
            &wk,
            (o, Site::ORIGIN),
            &in_c,
            &mut in_h,
            &mut h_members,
            &mut stack,
        );
        if h_escaped {
            // The cluster does not close around the origin inside the
            // frame, so no further loop is determinable — and any loop
            // inside the annulus would have forced it to close.
            break;
        }

        let mut r_min = f64::INFINITY;
        let mut r_max: f64 = 0.0;
        let mut counted = true;
        for &(_, h) in &h_members {
            let lining = h
                .neighbors()
                .iter()
                .any(|&n| wk.idx(n).is_some_and(|j| in_c.get(j)));
            if lining {
                let r = site_radius(h);
                r_min = r_min.min(r);
                r_max = r_max.max(r);
                if !(wk.in_main(h) && !ball_contains(Site::ORIGIN, r_in, h)) {
                    counted = false;
                }
            }
        }
        loops.push(LoopInfo { cluster_is_open: color, r_min, r_max, counted });
    }

    let count = loops.iter().filter(|l| l.counted).count() as u32;
    Ok(LoopCount { loops, count, r_in, r_out })
}

/// The kinds of annulus events the detector understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArmKind {
    /// An open path crossing the annulus.
    OneArmBlue,
    /// A closed path crossing the annulus.
    OneArmClosed,
    /// An open circuit in the annulus surrounding the center.
    OpenCircuit,
    /// The center site is pivotal for the left-right open crossing of the
    /// surrounding box of coordinate radius `r_out`.
    FourArmPivotal,
}

/// An annulus event: a kind, the annulus `A(r_in, r_out)`, and its center.
/// `FourArmPivotal` uses `r_out` as the box radius and ignores `r_in`.
#[derive(Clone, Copy, Debug)]
pub struct ArmEventSpec {
    pub kind: ArmKind,
    pub r_in: f64,
    pub r_out: f64,
    pub center: Site,
}

/// Decide whether the event described by `spec` occurs in `cfg`.
pub fn detect_event(cfg: &Configuration, spec: &ArmEventSpec) -> Result<bool> {
    match spec.kind {
        ArmKind::OneArmBlue => one_arm(cfg, spec, true),
        ArmKind::OneArmClosed => one_arm(cfg, spec, false),
        ArmKind::OpenCircuit => open_circuit(cfg, spec),
        ArmKind::FourArmPivotal => four_arm_pivotal(cfg, spec),
    }
}

fn check_annulus_params(spec: &ArmEventSpec) -> Result<()> {
    if !(spec.r_in >= 0.5) || !(spec.r_out > spec.r_in) || !spec.r_out.is_finite() {
        return Err(Error::InvalidInput(format!(
            "annulus event needs 0.5 <= r_in < r_out, got r_in={}, r_out={}",
            spec.r_in, spec.r_out
        )));
    }
    Ok(())
}

/// Monochromatic crossing of the annulus: a path of sites with open state
/// `want_open`, inside `A(r_in, r_out)` around the center, from a site
/// adjacent to `B(r_in)` to a site adjacent to the complement of
/// `B(r_out)`.
fn one_arm(cfg: &Configuration, spec: &ArmEventSpec, want_open: bool) -> Result<bool> {
    check_annulus_params(spec)?;
    let wk = Work::new(cfg, spec.center, spec.r_out, false)?;
    let inner = LatticeRegion::ball(spec.center, spec.r_in)?;

    let in_annulus = |s: Site| wk.in_main(s) && !inner.contains(s);
    let touches_outside = |s: Site| s.neighbors().iter().any(|&n| !wk.in_main(n));

    let mut seen = BitVec::new(wk.frame.len());
    let mut stack: Vec<Site> = Vec::new();
    for s in inner.sites() {
        for n in s.neighbors() {
            if !in_annulus(n) {
                continue;
            }
            let j = wk.idx(n).expect("annulus lies inside the frame");
            if !seen.get(j) && wk.is_open(j) == want_open {
                if touches_outside(n) {
                    return Ok(true);
                }
                seen.set(j);
                stack.push(n);
            }
        }
    }
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            if !in_annulus(n) {
                continue;
            }
            let j = wk.idx(n).expect("annulus lies inside the frame");
            if !seen.get(j) && wk.is_open(j) == want_open {
                if touches_outside(n) {
                    return Ok(true);
                }
                seen.set(j);
                stack.push(n);
            }
        }
    }
    Ok(false)
}

/// Direct detector for an open circuit surrounding the center inside the
/// annulus: grow the inner ball through closed sites; if the growth stays
/// strictly inside the outer ball, its infinity-facing boundary is an
/// all-open circuit, and the event holds. If the growth escapes, no such
/// circuit exists.
fn open_circuit(cfg: &Configuration, spec: &ArmEventSpec) -> Result<bool> {
    check_annulus_params(spec)?;
    let wk = Work::new(cfg, spec.center, spec.r_out, false)?;
    let core = LatticeRegion::ball(spec.center, spec.r_in)?;

    let mut in_w = BitVec::new(wk.frame.len());
    let mut members: Vec<Site> = Vec::new();
    let mut stack: Vec<Site> = Vec::new();
    for s in core.sites() {
        let i = wk.idx(s).expect("core ball lies inside the frame");
        in_w.set(i);
        members.push(s);
        stack.push(s);
    }
    let escaped = grow_confined(&wk, false, &mut in_w, &mut members, &mut stack);
    if escaped {
        return Ok(false);
    }
    let circuit = exterior_circuit(&members, &wk.frame)?;
    for &s in circuit.sites() {
        let j = wk.idx(s).expect("circuit lies inside the frame");
        if !wk.is_open(j) {
            return Err(Error::Internal(format!(
                "circuit boundary contains the closed site {s}"
            )));
        }
    }
    if !circuit.surrounds(spec.center) {
        return Err(Error::Internal(
            "circuit boundary does not surround the center".into(),
        ));
    }
    Ok(true)
}

/// Whether flipping the center changes the left-right open crossing of the
/// box `{|x - cx| <= k, |y - cy| <= k}` with `k = floor(r_out)`.
fn four_arm_pivotal(cfg: &Configuration, spec: &ArmEventSpec) -> Result<bool> {
    if !(spec.r_out >= 1.0) || !spec.r_out.is_finite() {
        return Err(Error::InvalidInput(format!(
            "pivotality needs a box radius of at least 1, got {}",
            spec.r_out
        )));
    }
    let k = spec.r_out.floor() as i32;
    let c = spec.center;
    let side = (2 * k + 1) as u32;
    let corner = Site::new(c.x - k, c.y - k);
    let boxr = LatticeRegion::parallelogram(corner, side, side)?;
    if !cfg.region().contains_region(&boxr) {
        return Err(Error::FrameTooSmall(format!(
            "configuration must cover the box of radius {k} around {c}"
        )));
    }
    let crossing = |center_open: bool| -> bool {
        let open = |s: Site| {
            if s == c {
                center_open
            } else {
                cfg.is_open(s).expect("box is inside the configuration region")
            }
        };
        let in_box =
            |s: Site| (s.x - c.x).abs() <= k && (s.y - c.y).abs() <= k;
        let mut seen = BitVec::new(boxr.len());
        let mut stack: Vec<Site> = Vec::new();
        for y in (c.y - k)..=(c.y + k) {
            let s = Site::new(c.x - k, y);
            if open(s) {
                seen.set(boxr.index_of(s).expect("left column is inside the box"));
                stack.push(s);
            }
        }
        while let Some(s) = stack.pop() {
            if s.x == c.x + k {
                return true;
            }
            for n in s.neighbors() {
                if !in_box(n) || !open(n) {
                    continue;
                }
                let j = boxr.index_of(n).expect("box membership was checked");
                if !seen.get(j) {
                    seen.set(j);
                    stack.push(n);
                }
            }
        }
        false
    };
    Ok(crossing(true) != crossing(false))
}

/// One geometric shell of a nesting profile.
#[derive(Clone, Debug)]
pub struct ShellBand {
    pub r_in: f64,
    pub r_out: f64,
    /// 1-based outermost ranks of the circuits contained in this shell.
    pub indices: Vec<u32>,
}

/// Closed circuits surrounding the origin in `B((m/eps)^k)`, listed
/// outermost first as site sets, together with which of the shells
/// `A((m/eps)^(j-1), m·(m/eps)^(j-1))`, `j = 1..=k`, contains each.
#[derive(Clone, Debug)]
pub struct NestingProfile {
    eps: f64,
    m: f64,
    k: u32,
    radius: f64,
    circuits: Vec<Vec<Site>>,
    shells: Vec<ShellBand>,
}

impl NestingProfile {
    /// Circuit site sets in canonical order, outermost first; the circuit
    /// at position `i` has outermost rank `i + 1`.
    pub fn circuits(&self) -> &[Vec<Site>] {
        &self.circuits
    }

    pub fn count(&self) -> u32 {
        self.circuits.len() as u32
    }

    pub fn shells(&self) -> &[ShellBand] {
        &self.shells
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// The outer working radius `(m/eps)^k`.
    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Peel the closed circuits surrounding the origin outermost first over
/// `B((m/eps)^k)` and locate them in the geometric shells.
///
/// The absorbed set starts as everything outside the ball plus the open
/// sites reachable from there; at each step the sites of the origin's
/// component that touch the absorbed set form the next (all-closed)
/// circuit, which is recorded and absorbed along with the open sites now
/// reachable. The peel stops when the absorption reaches or touches the
/// origin.
///
/// Requires `0 < eps < 1`, `m >= 2`, `k >= 1`, `(m/eps)^k` at most
/// 5000, and a configuration covering the ball plus a three-site margin.
pub fn nesting_profile(
    cfg: &Configuration,
    eps: f64,
    m: f64,
    k: u32,
) -> Result<NestingProfile> {
    if !(eps > 0.0 && eps < 1.0) || !(m >= 2.0) || !m.is_finite() || k == 0 {
        return Err(Error::InvalidInput(format!(
            "nesting profile needs 0 < eps < 1, m >= 2, k >= 1, got eps={eps}, m={m}, k={k}"
        )));
    }
    let ratio = m / eps;
    let radius = ratio.powi(k as i32);
    if !(radius <= MAX_PROFILE_RADIUS) {
        return Err(Error::InvalidInput(format!(
            "outer radius (m/eps)^k = {radius} exceeds the supported {MAX_PROFILE_RADIUS}"
        )));
    }
    let wk = Work::new(cfg, Site::ORIGIN, radius, false)?;
    let v = wk.frame.len();
    let o = wk.idx(Site::ORIGIN).expect("origin lies inside the frame");

    let mut in_w = BitVec::new(v);
    let mut stack: Vec<Site> = Vec::new();
    for (i, s) in wk.frame.sites().enumerate() {
        if !wk.in_main(s) {
            in_w.set(i as u32);
            stack.push(s);
        }
    }
    grow_open_unconfined(&wk, &mut in_w, &mut stack);

    let mut circuits: Vec<Vec<Site>> = Vec::new();
    let mut in_h = BitVec::new(v);
    let mut h_members: Vec<(u32, Site)> = Vec::new();
    loop {
        if in_w.get(o) {
            break;
        }
        in_h.clear_all();
        h_members.clear();
        let escaped = flood_hole(
            &wk,
            (o, Site::ORIGIN),
            &in_w,
            &mut in_h,
            &mut h_members,
            &mut stack,
        );
        if escaped {
            return Err(Error::Internal(
                "origin component escaped the absorbed outer region".into(),
            ));
        }
        let mut lining: Vec<(u32, Site)> = Vec::new();
        let mut hits_origin = false;
        for &(j, s) in &h_members {
            let touches = s
                .neighbors()
                .iter()
                .any(|&n| wk.idx(n).is_some_and(|q| in_w.get(q)));
            if touches {
                if s == Site::ORIGIN {
                    hits_origin = true;
                }
                lining.push((j, s));
            }
        }
        if hits_origin {
            break;
        }
        if lining.is_empty() {
            return Err(Error::Internal("origin component has no lining".into()));
        }
        for &(j, s) in &lining {
            if wk.is_open(j) {
                return Err(Error::Internal(format!(
                    "outermost lining contains the open site {s}"
                )));
            }
        }
        let mut sites: Vec<Site> = lining.iter().map(|&(_, s)| s).collect();
        sites.sort();
        stack.clear();
        for &(j, s) in &lining {
            in_w.set(j);
            stack.push(s);
        }
        grow_open_unconfined(&wk, &mut in_w, &mut stack);
        circuits.push(sites);
        if circuits.len() > v as usize {
            return Err(Error::Internal("outermost peeling failed to terminate".into()));
        }
    }

    let mut shells = Vec::with_capacity(k as usize);
    for j in 1..=k {
        let inner = ratio.powi(j as i32 - 1);
        let outer = m * inner;
        let indices = circuits
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.iter().all(|&s| {
                    ball_contains(Site::ORIGIN, outer, s)
                        && !ball_contains(Site::ORIGIN, inner, s)
                })
            })
            .map(|(i, _)| (i + 1) as u32)
            .collect();
        shells.push(ShellBand { r_in: inner, r_out: outer, indices });
    }
    Ok(NestingProfile { eps, m, k, radius, circuits, shells })
}

/// Grow `in_w` through open sites from the scan stack, staying inside the
/// frame (no other confinement).
fn grow_open_unconfined(wk: &Work, in_w: &mut BitVec, stack: &mut Vec<Site>) {
    while let Some(s) = stack.pop() {
        for n in s.neighbors() {
            if let Some(j) = wk.idx(n) {
                if !in_w.get(j) && wk.is_open(j) {
                    in_w.set(j);
                    stack.push(n);
                }
            }
        }
    }
}
