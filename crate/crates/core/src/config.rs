//! Coupling fields, thresholded configurations, and their binary format.
//!
//! A [`CouplingField`] assigns every site an i.i.d. uniform value derived
//! from a seed by stateless hashing, so a single field can be thresholded
//! at any density `p` to obtain exactly coupled Bernoulli configurations:
//! the set of open sites grows monotonically in `p`, site by site. Values
//! depend only on `(seed, site)`, never on the region or on evaluation
//! order, which makes every downstream experiment reproducible bit for bit.

use std::path::Path;
use std::sync::Arc;

use crate::error::{DecodeError, Error, Result};
use crate::lattice::{LatticeRegion, RegionShape, Site};
use crate::util::{crc32, BitVec};

/// 64-bit finalizer with full avalanche (the splitmix64 mixer).
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw 64-bit hash of a site under a seed. For fixed seed this is a
/// bijection of the packed site key, so distinct sites never collide.
#[inline]
pub(crate) fn site_bits(seed: u64, s: Site) -> u64 {
    mix64(mix64(s.packed()).wrapping_add(seed))
}

/// The site's uniform value expressed as an integer in `[0, 2^53)`.
#[inline]
pub(crate) fn site_value53(seed: u64, s: Site) -> u64 {
    site_bits(seed, s) >> 11
}

/// Integer threshold `t(p)` such that a site is open at density `p` iff
/// its 53-bit value is `< t(p)`. Exact: `value/2^53 < p  <=>  value < t(p)`
/// for every representable `p` in `[0, 1]`.
#[inline]
pub(crate) fn value_threshold(p: f64) -> u64 {
    // Scaling by 2^53 is exact for f64, so the comparison value < p*2^53
    // can be resolved in integers: value < t where t = ceil(p*2^53), except
    // that an integer-valued product keeps itself (strict inequality).
    let t = p * 9_007_199_254_740_992.0;
    if t >= 9_007_199_254_740_992.0 {
        return 9_007_199_254_740_992; // p = 1: everything is open
    }
    let fl = t.floor();
    if t == fl {
        t as u64
    } else {
        fl as u64 + 1
    }
}

fn check_p(p: f64) -> Result<()> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("density p={p} outside [0, 1]")));
    }
    Ok(())
}

/// An i.i.d. uniform field over a region, determined by a seed.
#[derive(Clone, Debug)]
pub struct CouplingField {
    region: Arc<LatticeRegion>,
    seed: u64,
}

impl CouplingField {
    pub fn new(region: Arc<LatticeRegion>, seed: u64) -> Self {
        CouplingField { region, seed }
    }

    pub fn over(region: LatticeRegion, seed: u64) -> Self {
        Self::new(Arc::new(region), seed)
    }

    pub fn region(&self) -> &Arc<LatticeRegion> {
        &self.region
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The site's uniform value in `[0, 1)`, or `None` outside the region.
    pub fn value(&self, s: Site) -> Option<f64> {
        if !self.region.contains(s) {
            return None;
        }
        Some(site_value53(self.seed, s) as f64 * (1.0 / 9_007_199_254_740_992.0))
    }

    /// Threshold the field: site open iff its value is below `p`.
    pub fn threshold(&self, p: f64) -> Result<Configuration> {
        check_p(p)?;
        let mut open = BitVec::new(self.region.len());
        fill_open_bits(&self.region, self.seed, value_threshold(p), &mut open);
        Ok(Configuration {
            region: Arc::clone(&self.region),
            p,
            open,
            provenance: Some(self.seed),
        })
    }
}

/// Fill `open` (indexed in region enumeration order) with the thresholded
/// field: bit set iff the site's 53-bit value is below `value_thr`.
pub(crate) fn fill_open_bits(
    region: &LatticeRegion,
    seed: u64,
    value_thr: u64,
    open: &mut BitVec,
) {
    debug_assert_eq!(open.len(), region.len());
    open.clear_all();
    for ivl in region.intervals() {
        let yy = (ivl.y as i64 + (1i64 << 30)) as u64;
        let mut key = (((ivl.lo as i64 + (1i64 << 30)) as u64) << 32) | yy;
        let mut idx = ivl.base;
        for _ in ivl.lo..=ivl.hi {
            let v = mix64(mix64(key).wrapping_add(seed)) >> 11;
            if v < value_thr {
                open.set(idx);
            }
            key = key.wrapping_add(1u64 << 32);
            idx += 1;
        }
    }
}

/// A Bernoulli site configuration over a region: each site open (blue,
/// weight 0) or closed (yellow, weight 1).
#[derive(Clone, Debug)]
pub struct Configuration {
    region: Arc<LatticeRegion>,
    p: f64,
    open: BitVec,
    /// Seed of the coupling field this configuration was thresholded from,
    /// when it has one.
    provenance: Option<u64>,
}

impl Configuration {
    /// Build a configuration from an arbitrary predicate. The density label
    /// `p` is carried as metadata (it is stored in the file format).
    pub fn from_fn(
        region: Arc<LatticeRegion>,
        p: f64,
        mut is_open: impl FnMut(Site) -> bool,
    ) -> Result<Self> {
        check_p(p)?;
        let mut open = BitVec::new(region.len());
        for (i, s) in region.sites().enumerate() {
            if is_open(s) {
                open.set(i as u32);
            }
        }
        Ok(Configuration { region, p, open, provenance: None })
    }

    pub(crate) fn from_parts(
        region: Arc<LatticeRegion>,
        p: f64,
        open: BitVec,
        provenance: Option<u64>,
    ) -> Self {
        debug_assert_eq!(open.len(), region.len());
        Configuration { region, p, open, provenance }
    }

    pub fn region(&self) -> &Arc<LatticeRegion> {
        &self.region
    }

    /// The density label: the `p` the configuration was thresholded at (or
    /// was declared with).
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn provenance_seed(&self) -> Option<u64> {
        self.provenance
    }

    /// Open/closed state of a site, or `None` outside the region.
    #[inline]
    pub fn is_open(&self, s: Site) -> Option<bool> {
        self.region.index_of(s).map(|i| self.open.get(i))
    }

    /// Closed sites carry weight 1, open sites weight 0.
    #[inline]
    pub fn weight(&self, s: Site) -> Option<u32> {
        self.is_open(s).map(|o| if o { 0 } else { 1 })
    }

    pub fn open_count(&self) -> u32 {
        self.open.count_ones()
    }

    pub(crate) fn open_bits(&self) -> &BitVec {
        &self.open
    }

    #[inline]
    pub(crate) fn open_at(&self, idx: u32) -> bool {
        self.open.get(idx)
    }
}

// ---------------------------------------------------------------------------
// Binary format.
//
//   magic   "FPPC" (4 bytes)
//   version u32 LE, currently 1
//   flags   u8: bit0 = payload kind (0 configuration, 1 field),
//               bit1 = provenance seed present (configurations only)
//   shape   u8 tag + parameters (see below)
//   param   8 bytes LE: density p (f64 bits) for configurations,
//                       seed (u64) for fields
//   [provenance seed u64 LE, when flagged]
//   payload configurations: ceil(len/8) bytes, one bit per site in region
//           enumeration order, LSB first, zero padding; fields: empty
//   crc     u32 LE, CRC-32 of every preceding byte
//
// Shapes: 0 ball (cx i64, cy i64, r f64), 1 annulus (r_in f64, r_out f64),
//         2 parallelogram (x0 i64, y0 i64, w u64, h u64),
//         3 custom (count u64, then count packed site keys u64).
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"FPPC";
const VERSION: u32 = 1;
const FLAG_FIELD: u8 = 0b01;
const FLAG_PROVENANCE: u8 = 0b10;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32(&self.buf);
        self.u32(crc);
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> std::result::Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> std::result::Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, DecodeError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn write_shape(w: &mut Writer, shape: &RegionShape, region: &LatticeRegion) {
    match *shape {
        RegionShape::Ball { cx, cy, r } => {
            w.u8(0);
            w.i64(cx as i64);
            w.i64(cy as i64);
            w.f64(r);
        }
        RegionShape::Annulus { r_in, r_out } => {
            w.u8(1);
            w.f64(r_in);
            w.f64(r_out);
        }
        RegionShape::Parallelogram { x0, y0, w: pw, h } => {
            w.u8(2);
            w.i64(x0 as i64);
            w.i64(y0 as i64);
            w.u64(pw as u64);
            w.u64(h as u64);
        }
        RegionShape::Custom => {
            w.u8(3);
            w.u64(region.len() as u64);
            for s in region.sites() {
                w.u64(s.packed());
            }
        }
    }
}

fn unpack_site(key: u64) -> std::result::Result<Site, DecodeError> {
    let xx = (key >> 32) as i64 - (1i64 << 30);
    let yy = (key & 0xFFFF_FFFF) as i64 - (1i64 << 30);
    if xx < i32::MIN as i64 || xx > i32::MAX as i64 || yy < i32::MIN as i64 || yy > i32::MAX as i64
    {
        return Err(DecodeError::BadRegion(format!("packed site key {key:#x} out of range")));
    }
    Ok(Site::new(xx as i32, yy as i32))
}

fn read_shape(r: &mut Reader) -> std::result::Result<LatticeRegion, DecodeError> {
    let tag = r.u8()?;
    let build = |res: Result<LatticeRegion>| {
        res.map_err(|e| DecodeError::BadRegion(e.to_string()))
    };
    match tag {
        0 => {
            let cx = r.i64()?;
            let cy = r.i64()?;
            let rad = r.f64()?;
            if cx < i32::MIN as i64 || cx > i32::MAX as i64 || cy < i32::MIN as i64
                || cy > i32::MAX as i64
            {
                return Err(DecodeError::BadRegion("ball center out of range".into()));
            }
            build(LatticeRegion::ball(Site::new(cx as i32, cy as i32), rad))
        }
        1 => {
            let r_in = r.f64()?;
            let r_out = r.f64()?;
            build(LatticeRegion::annulus(r_in, r_out))
        }
        2 => {
            let x0 = r.i64()?;
            let y0 = r.i64()?;
            let w = r.u64()?;
            let h = r.u64()?;
            if x0 < i32::MIN as i64 || x0 > i32::MAX as i64 || y0 < i32::MIN as i64
                || y0 > i32::MAX as i64 || w > u32::MAX as u64 || h > u32::MAX as u64
            {
                return Err(DecodeError::BadRegion("parallelogram out of range".into()));
            }
            build(LatticeRegion::parallelogram(
                Site::new(x0 as i32, y0 as i32),
                w as u32,
                h as u32,
            ))
        }
        3 => {
            let count = r.u64()?;
            if count > u32::MAX as u64 {
                return Err(DecodeError::BadRegion(format!("custom region of {count} sites")));
            }
            let mut sites = Vec::with_capacity(count as usize);
            for _ in 0..count {
                sites.push(unpack_site(r.u64()?)?);
            }
            let region = build(LatticeRegion::custom(sites))?;
            if region.len() as u64 != count {
                return Err(DecodeError::BadRegion(
                    "custom region repeats a site".into(),
                ));
            }
            Ok(region)
        }
        t => Err(DecodeError::BadShape(t)),
    }
}

/// Strip and verify the trailing checksum, returning the covered bytes.
fn checked_body(bytes: &[u8]) -> std::result::Result<&[u8], DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32(body) != stored {
        return Err(DecodeError::CrcMismatch);
    }
    Ok(body)
}

fn read_header<'a>(
    body: &'a [u8],
) -> std::result::Result<(Reader<'a>, u8), DecodeError> {
    let mut r = Reader::new(body);
    if r.take(4)? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let flags = r.u8()?;
    if flags & !(FLAG_FIELD | FLAG_PROVENANCE) != 0 {
        return Err(DecodeError::BadFlags(flags));
    }
    Ok((r, flags))
}

/// Serialize a coupling field.
pub fn field_to_bytes(field: &CouplingField) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(FLAG_FIELD);
    write_shape(&mut w, field.region.shape(), &field.region);
    w.u64(field.seed);
    w.finish()
}

/// Deserialize a coupling field.
pub fn field_from_bytes(bytes: &[u8]) -> Result<CouplingField> {
    let body = checked_body(bytes)?;
    let (mut r, flags) = read_header(body)?;
    if flags & FLAG_FIELD == 0 {
        return Err(Error::Decode(DecodeError::BadFlags(flags)));
    }
    if flags & FLAG_PROVENANCE != 0 {
        return Err(Error::Decode(DecodeError::BadFlags(flags)));
    }
    let region = read_shape(&mut r)?;
    let seed = r.u64()?;
    if !r.done() {
        return Err(Error::Decode(DecodeError::TrailingBytes));
    }
    Ok(CouplingField::over(region, seed))
}

/// Serialize a configuration (bit-packed open sites).
pub fn config_to_bytes(cfg: &Configuration) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    let mut flags = 0u8;
    if cfg.provenance.is_some() {
        flags |= FLAG_PROVENANCE;
    }
    w.u8(flags);
    write_shape(&mut w, cfg.region.shape(), &cfg.region);
    w.f64(cfg.p);
    if let Some(seed) = cfg.provenance {
        w.u64(seed);
    }
    let nbytes = (cfg.region.len() as usize).div_ceil(8);
    let mut payload = vec![0u8; nbytes];
    for i in cfg.open.ones() {
        payload[(i >> 3) as usize] |= 1 << (i & 7);
    }
    w.buf.extend_from_slice(&payload);
    w.finish()
}

/// Deserialize a configuration.
pub fn config_from_bytes(bytes: &[u8]) -> Result<Configuration> {
    let body = checked_body(bytes)?;
    let (mut r, flags) = read_header(body)?;
    if flags & FLAG_FIELD != 0 {
        return Err(Error::Decode(DecodeError::BadFlags(flags)));
    }
    let region = read_shape(&mut r)?;
    let p = r.f64()?;
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::Decode(DecodeError::BadRegion(format!(
            "density label {p} outside [0, 1]"
        ))));
    }
    let provenance = if flags & FLAG_PROVENANCE != 0 { Some(r.u64()?) } else { None };
    let nbytes = (region.len() as usize).div_ceil(8);
    let payload = r.take(nbytes)?;
    if !r.done() {
        return Err(Error::Decode(DecodeError::TrailingBytes));
    }
    let mut open = BitVec::new(region.len());
    for i in 0..region.len() {
        if payload[(i >> 3) as usize] >> (i & 7) & 1 == 1 {
            open.set(i);
        }
    }
    // Canonical encoding: padding bits beyond the region length must be 0.
    if region.len() % 8 != 0 {
        let last = payload[nbytes - 1];
        let used = (region.len() % 8) as u32;
        if last >> used != 0 {
            return Err(Error::Decode(DecodeError::BadRegion(
                "nonzero padding bits in payload".into(),
            )));
        }
    }
    Ok(Configuration {
        region: Arc::new(region),
        p,
        open,
        provenance,
    })
}

/// Write a field to a file.
pub fn save_field(field: &CouplingField, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, field_to_bytes(field))?;
    Ok(())
}

/// Read a field from a file.
pub fn load_field(path: impl AsRef<Path>) -> Result<CouplingField> {
    field_from_bytes(&std::fs::read(path)?)
}

/// Write a configuration to a file.
pub fn save_config(cfg: &Configuration, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, config_to_bytes(cfg))?;
    Ok(())
}

/// Read a configuration from a file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Configuration> {
    config_from_bytes(&std::fs::read(path)?)
}
