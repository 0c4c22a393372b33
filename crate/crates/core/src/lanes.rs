//! Fixed 16-lane batch primitives: neighbor address fan-out, gather,
//! per-lane compares to a bit mask, popcount, shift-add prefix sums and
//! masked extremum reduction.
//!
//! The batch models one 512-bit register of 32-bit elements. Every operation
//! has a scalar reference implementation that defines the contract; when the
//! host CPU supports AVX-512F a hardware backend handles gather, compares and
//! reductions, and tests pin it lane-exact against the scalar reference.

use crate::grid::{Addr, CellView, Image2D, Neighborhood};

pub const LANES: usize = 16;

/// Sixteen 32-bit lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneBatch(pub [u32; LANES]);

impl LaneBatch {
    #[inline]
    pub fn splat(v: u32) -> Self {
        LaneBatch([v; LANES])
    }

    #[inline]
    pub fn lane(&self, i: usize) -> u32 {
        self.0[i]
    }
}

/// One bit per lane; bit i corresponds to lane i.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneMask(pub u16);

impl LaneMask {
    pub const EMPTY: LaneMask = LaneMask(0);
    pub const ALL: LaneMask = LaneMask(0xFFFF);
    /// Lanes 0..8 set.
    pub const LOW_HALF: LaneMask = LaneMask(0x00FF);
    /// Lanes 8..16 set.
    pub const HIGH_HALF: LaneMask = LaneMask(0xFF00);

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }
}

/// Per-lane comparison relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Lt,
    Gt,
    Ne,
}

/// Reduction (and propagation) direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Max,
    Min,
}

/// Neighbor addresses of `base`: lane i holds `base + offsets[i]` for each
/// neighborhood offset, and `base` itself in the remaining lanes. The
/// self-address duplicates are harmless because a pixel never satisfies a
/// propagation condition against itself.
#[inline]
pub fn shift_offsets(base: Addr, nb: &Neighborhood) -> LaneBatch {
    let mut out = [base; LANES];
    for (lane, &d) in nb.offsets().iter().enumerate() {
        out[lane] = (base as i64 + d as i64) as Addr;
    }
    LaneBatch(out)
}

/// Dual-pixel fan-out for the paired propagation step: the 8-neighborhood of
/// `p1` fills lanes 0..8 and the 8-neighborhood of `p2` fills lanes 8..16.
#[inline]
pub fn shift_offsets_pair(p1: Addr, p2: Addr, nb: &Neighborhood) -> LaneBatch {
    debug_assert_eq!(nb.offsets().len(), 8);
    let mut out = [0; LANES];
    for (lane, &d) in nb.offsets().iter().enumerate() {
        out[lane] = (p1 as i64 + d as i64) as Addr;
        out[lane + 8] = (p2 as i64 + d as i64) as Addr;
    }
    LaneBatch(out)
}

/// Reads 16 cells at once: lane i becomes `img[addrs.lane(i)]`. Duplicate
/// addresses load the same value into every duplicate lane.
#[inline]
pub fn gather(img: &Image2D, addrs: &LaneBatch) -> LaneBatch {
    #[cfg(target_arch = "x86_64")]
    if x86::enabled() {
        // Safety: runtime feature check above; all addresses are in bounds.
        return unsafe { x86::gather(img.cells(), addrs) };
    }
    scalar::gather(img.cells(), addrs)
}

/// [`gather`] over a shared cell view. The batch reads each address once, so
/// duplicated lanes always agree even under concurrent writers.
#[inline]
pub fn gather_view(view: &CellView<'_>, addrs: &LaneBatch) -> LaneBatch {
    let mut out = [0; LANES];
    let mut cached: Option<(Addr, u32)> = None;
    for i in 0..LANES {
        let a = addrs.0[i];
        out[i] = match cached {
            Some((ca, cv)) if ca == a => cv,
            _ => {
                let v = view.get(a);
                cached = Some((a, v));
                v
            }
        };
    }
    LaneBatch(out)
}

/// Per-lane compare producing one mask bit per lane.
#[inline]
pub fn cmp_mask(a: &LaneBatch, b: &LaneBatch, rel: Rel) -> LaneMask {
    #[cfg(target_arch = "x86_64")]
    if x86::enabled() {
        return unsafe { x86::cmp_mask(a, b, rel) };
    }
    scalar::cmp_mask(a, b, rel)
}

/// Number of set mask bits.
#[inline]
pub fn popcount(mask: LaneMask) -> u8 {
    mask.0.count_ones() as u8
}

/// Inclusive prefix count of mask bits over the low 8 lanes: lane i
/// (0 <= i <= 7) holds the number of set bits among bits 0..=i.
///
/// Built by broadcasting the mask bits into lanes and running exactly three
/// shift-add rounds (shift by 1, 2 and 4 lanes toward higher indices, vacated
/// lanes contributing 0). The upper lanes carry the windowed sums that fall
/// out of the same rounds; only lanes 0..8 are contractual.
#[inline]
pub fn prefix_sum8(mask: LaneMask) -> LaneBatch {
    #[cfg(target_arch = "x86_64")]
    if x86::enabled() {
        return unsafe { x86::prefix_sum(mask, &[1, 2, 4]) };
    }
    scalar::prefix_sum(mask, &[1, 2, 4])
}

/// Inclusive prefix count of mask bits over all 16 lanes: a fourth
/// shift-by-8 round extends the 8-lane construction.
#[inline]
pub fn prefix_sum16(mask: LaneMask) -> LaneBatch {
    #[cfg(target_arch = "x86_64")]
    if x86::enabled() {
        return unsafe { x86::prefix_sum(mask, &[1, 2, 4, 8]) };
    }
    scalar::prefix_sum(mask, &[1, 2, 4, 8])
}

/// Extremum over the lanes whose mask bit is set; `identity` when none is.
#[inline]
pub fn reduce_extremum(v: &LaneBatch, mask: LaneMask, dir: Dir, identity: u32) -> u32 {
    #[cfg(target_arch = "x86_64")]
    if x86::enabled() {
        return unsafe { x86::reduce_extremum(v, mask, dir, identity) };
    }
    scalar::reduce_extremum(v, mask, dir, identity)
}

/// Per-lane select: lane i of the result is `a` where the mask bit is set,
/// `b` elsewhere.
#[inline]
pub fn select(mask: LaneMask, a: &LaneBatch, b: &LaneBatch) -> LaneBatch {
    let mut out = [0; LANES];
    for i in 0..LANES {
        out[i] = if mask.bit(i) { a.0[i] } else { b.0[i] };
    }
    LaneBatch(out)
}

/// Per-lane minimum.
#[inline]
pub fn min_lanes(a: &LaneBatch, b: &LaneBatch) -> LaneBatch {
    select(cmp_mask(a, b, Rel::Lt), a, b)
}

/// Scalar reference implementation; the behavioral contract for every backend.
pub mod scalar {
    use super::*;

    #[inline]
    pub fn gather(cells: &[u32], addrs: &LaneBatch) -> LaneBatch {
        let mut out = [0; LANES];
        for i in 0..LANES {
            out[i] = cells[addrs.0[i] as usize];
        }
        LaneBatch(out)
    }

    #[inline]
    pub fn cmp_mask(a: &LaneBatch, b: &LaneBatch, rel: Rel) -> LaneMask {
        let mut bits = 0u16;
        for i in 0..LANES {
            let hit = match rel {
                Rel::Lt => a.0[i] < b.0[i],
                Rel::Gt => a.0[i] > b.0[i],
                Rel::Ne => a.0[i] != b.0[i],
            };
            if hit {
                bits |= 1 << i;
            }
        }
        LaneMask(bits)
    }

    /// Broadcast the mask bits into lanes, then one add per round with the
    /// vector shifted `round` lanes toward higher indices (vacated lanes 0).
    #[inline]
    pub fn prefix_sum(mask: LaneMask, rounds: &[usize]) -> LaneBatch {
        let mut v = [0u32; LANES];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = (mask.0 >> i) as u32 & 1;
        }
        for &shift in rounds {
            let mut shifted = [0u32; LANES];
            shifted[shift..LANES].copy_from_slice(&v[..LANES - shift]);
            for i in 0..LANES {
                v[i] += shifted[i];
            }
        }
        LaneBatch(v)
    }

    /// Plain inclusive scan; the oracle the shift-add construction is tested
    /// against.
    #[inline]
    pub fn prefix_scan_oracle(mask: LaneMask) -> LaneBatch {
        let mut out = [0u32; LANES];
        let mut acc = 0;
        for (i, slot) in out.iter_mut().enumerate() {
            acc += (mask.0 >> i) as u32 & 1;
            *slot = acc;
        }
        LaneBatch(out)
    }

    #[inline]
    pub fn reduce_extremum(v: &LaneBatch, mask: LaneMask, dir: Dir, identity: u32) -> u32 {
        let mut acc = identity;
        for i in 0..LANES {
            if mask.bit(i) {
                acc = match dir {
                    Dir::Max => acc.max(v.0[i]),
                    Dir::Min => acc.min(v.0[i]),
                };
            }
        }
        acc
    }
}

/// AVX-512F backend: one 512-bit register holds the whole batch, compares
/// produce native 16-bit masks, and gather is a single instruction.
#[cfg(target_arch = "x86_64")]
pub mod x86 {
    use super::*;
    use std::arch::x86_64::*;
    use std::sync::OnceLock;

    static ENABLED: OnceLock<bool> = OnceLock::new();

    /// True when the AVX-512F backend is active. Set `IWPP_NO_SIMD=1` to
    /// force the scalar path.
    #[inline]
    pub fn enabled() -> bool {
        *ENABLED.get_or_init(|| {
            std::env::var_os("IWPP_NO_SIMD").is_none() && is_x86_feature_detected!("avx512f")
        })
    }

    #[inline]
    unsafe fn load(b: &LaneBatch) -> __m512i {
        _mm512_loadu_si512(b.0.as_ptr() as *const _)
    }

    #[inline]
    unsafe fn store(v: __m512i) -> LaneBatch {
        let mut out = [0u32; LANES];
        _mm512_storeu_si512(out.as_mut_ptr() as *mut _, v);
        LaneBatch(out)
    }

    /// # Safety
    /// Requires AVX-512F and every address in bounds for `cells`.
    #[target_feature(enable = "avx512f")]
    pub unsafe fn gather(cells: &[u32], addrs: &LaneBatch) -> LaneBatch {
        debug_assert!(addrs.0.iter().all(|&a| (a as usize) < cells.len()));
        let idx = load(addrs);
        let v = _mm512_i32gather_epi32(idx, cells.as_ptr() as *const i32, 4);
        store(v)
    }

    /// # Safety
    /// Requires AVX-512F.
    #[target_feature(enable = "avx512f")]
    pub unsafe fn cmp_mask(a: &LaneBatch, b: &LaneBatch, rel: Rel) -> LaneMask {
        let va = load(a);
        let vb = load(b);
        let m = match rel {
            Rel::Lt => _mm512_cmplt_epu32_mask(va, vb),
            Rel::Gt => _mm512_cmpgt_epu32_mask(va, vb),
            Rel::Ne => _mm512_cmpneq_epu32_mask(va, vb),
        };
        LaneMask(m)
    }

    /// Shift-add prefix rounds over the broadcast mask bits, entirely inside
    /// one register. `_mm512_alignr_epi32` with the zero vector realizes the
    /// "shift toward higher lanes, vacated lanes contribute 0" step.
    ///
    /// # Safety
    /// Requires AVX-512F.
    #[target_feature(enable = "avx512f")]
    pub unsafe fn prefix_sum(mask: LaneMask, rounds: &[usize]) -> LaneBatch {
        let ones = _mm512_set1_epi32(1);
        let mut v = _mm512_maskz_mov_epi32(mask.0, ones);
        let zero = _mm512_setzero_si512();
        for &shift in rounds {
            // valignd concatenates {v, zero} and extracts lanes starting at
            // 16 - shift, i.e. v shifted `shift` lanes upward with zero fill.
            let shifted = match shift {
                1 => _mm512_alignr_epi32(v, zero, 15),
                2 => _mm512_alignr_epi32(v, zero, 14),
                4 => _mm512_alignr_epi32(v, zero, 12),
                8 => _mm512_alignr_epi32(v, zero, 8),
                _ => unreachable!("prefix rounds are powers of two up to 8"),
            };
            v = _mm512_add_epi32(v, shifted);
        }
        store(v)
    }

    /// # Safety
    /// Requires AVX-512F.
    #[target_feature(enable = "avx512f")]
    pub unsafe fn reduce_extremum(v: &LaneBatch, mask: LaneMask, dir: Dir, identity: u32) -> u32 {
        let vv = load(v);
        let id = _mm512_set1_epi32(identity as i32);
        let masked = _mm512_mask_mov_epi32(id, mask.0, vv);
        match dir {
            Dir::Max => _mm512_reduce_max_epu32(masked).max(identity),
            Dir::Min => _mm512_reduce_min_epu32(masked).min(identity),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Connectivity, Image2D};

    fn identity_image(w: usize, h: usize) -> Image2D {
        let mut img = Image2D::new(w, h, 0, 0).unwrap();
        for a in 0..img.cells().len() {
            img.set(a as Addr, a as u32);
        }
        img
    }

    #[test]
    fn shift_offsets_n4_center() {
        let img = Image2D::new(3, 3, 0, 0).unwrap();
        let nb = Neighborhood::for_image(Connectivity::N4, &img);
        let got = shift_offsets(12, &nb);
        assert_eq!(&got.0[..4], &[7, 11, 13, 17]);
        assert!(got.0[4..].iter().all(|&a| a == 12));
    }

    #[test]
    fn shift_offsets_n8_and_pair() {
        let img = Image2D::new(3, 3, 0, 0).unwrap();
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        let got = shift_offsets(12, &nb);
        assert_eq!(&got.0[..8], &[6, 7, 8, 11, 13, 16, 17, 18]);
        let pair = shift_offsets_pair(12, 12, &nb);
        assert_eq!(&pair.0[..8], &pair.0[8..]);
        assert_eq!(&pair.0[..8], &got.0[..8]);
    }

    #[test]
    fn gather_identity_and_duplicates() {
        let img = identity_image(4, 3);
        let addrs = LaneBatch([0, 1, 2, 3, 7, 8, 9, 10, 5, 5, 5, 5, 12, 13, 14, 15]);
        let got = gather(&img, &addrs);
        assert_eq!(got, addrs);
        let all_same = LaneBatch::splat(9);
        let got = gather(&img, &all_same);
        assert_eq!(got, LaneBatch::splat(9));
    }

    #[test]
    fn gather_known_fixture() {
        let img = Image2D::from_interior(3, 3, &[10, 20, 30, 40, 50, 60, 70, 80, 90], 0).unwrap();
        let addrs = shift_offsets(12, &Neighborhood::for_image(Connectivity::N8, &img));
        let got = gather(&img, &addrs);
        // Direct indexing oracle.
        for i in 0..LANES {
            assert_eq!(got.lane(i), img.get(addrs.lane(i)));
        }
        assert_eq!(&got.0[..8], &[10, 20, 30, 40, 60, 70, 80, 90]);
    }

    #[test]
    fn cmp_mask_cases() {
        let a = LaneBatch([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]);
        assert_eq!(cmp_mask(&a, &a, Rel::Ne), LaneMask::EMPTY);
        let b = LaneBatch::splat(8);
        assert_eq!(cmp_mask(&a, &b, Rel::Lt), LaneMask(0x00FF));
        assert_eq!(cmp_mask(&a, &b, Rel::Gt), LaneMask(0xFE00));
        // Unsigned semantics at the top of the range.
        let hi = LaneBatch::splat(u32::MAX);
        let lo = LaneBatch::splat(1);
        assert_eq!(cmp_mask(&lo, &hi, Rel::Lt), LaneMask::ALL);
        assert_eq!(cmp_mask(&hi, &lo, Rel::Gt), LaneMask::ALL);
    }

    #[test]
    fn cmp_mask_matches_scalar_loop() {
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state as u32
        };
        for _ in 0..200 {
            let a = LaneBatch(std::array::from_fn(|_| next()));
            let b = LaneBatch(std::array::from_fn(|_| next() & 0xFF));
            for rel in [Rel::Lt, Rel::Gt, Rel::Ne] {
                assert_eq!(cmp_mask(&a, &b, rel), scalar::cmp_mask(&a, &b, rel));
            }
        }
    }

    #[test]
    fn popcount_cases() {
        assert_eq!(popcount(LaneMask(0)), 0);
        assert_eq!(popcount(LaneMask(0xFFFF)), 16);
        assert_eq!(popcount(LaneMask(0b1011)), 3);
    }

    #[test]
    fn prefix_sum8_examples() {
        assert_eq!(&prefix_sum8(LaneMask(0x00)).0[..8], &[0; 8]);
        assert_eq!(&prefix_sum8(LaneMask(0xFF)).0[..8], &[1, 2, 3, 4, 5, 6, 7, 8]);
        // bits 0, 4, 5, 7
        assert_eq!(
            &prefix_sum8(LaneMask(0b1011_0001)).0[..8],
            &[1, 1, 1, 1, 2, 3, 3, 4]
        );
    }

    #[test]
    fn prefix_sum8_exhaustive() {
        for m in 0u16..=0xFF {
            let got = prefix_sum8(LaneMask(m));
            let want = scalar::prefix_scan_oracle(LaneMask(m));
            assert_eq!(&got.0[..8], &want.0[..8], "mask {m:#04x}");
            assert_eq!(got.lane(7), popcount(LaneMask(m & 0xFF)) as u32);
        }
    }

    #[test]
    fn prefix_sum16_exhaustive() {
        for m in 0u32..=0xFFFF {
            let mask = LaneMask(m as u16);
            let got = prefix_sum16(mask);
            let want = scalar::prefix_scan_oracle(mask);
            assert_eq!(got, want, "mask {m:#06x}");
            assert_eq!(got.lane(15), popcount(mask) as u32);
        }
    }

    #[test]
    fn reduce_extremum_cases() {
        let v = LaneBatch([3, 9, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(reduce_extremum(&v, LaneMask::EMPTY, Dir::Max, 42), 42);
        assert_eq!(reduce_extremum(&v, LaneMask(0b111), Dir::Max, 0), 9);
        assert_eq!(reduce_extremum(&v, LaneMask(0b011), Dir::Min, u32::MAX), 3);
    }

    #[test]
    fn reduce_matches_scalar_loop() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as u32
        };
        for _ in 0..200 {
            let v = LaneBatch(std::array::from_fn(|_| next()));
            let mask = LaneMask(next() as u16);
            for (dir, id) in [(Dir::Max, 0), (Dir::Min, u32::MAX)] {
                assert_eq!(
                    reduce_extremum(&v, mask, dir, id),
                    scalar::reduce_extremum(&v, mask, dir, id)
                );
            }
        }
    }

    #[test]
    fn select_and_min() {
        let a = LaneBatch::splat(1);
        let b = LaneBatch::splat(2);
        let got = select(LaneMask(0x0F0F), &a, &b);
        for i in 0..LANES {
            assert_eq!(got.lane(i), if (0x0F0F >> i) & 1 == 1 { 1 } else { 2 });
        }
        let m = min_lanes(&LaneBatch([5; 16]), &LaneBatch([3; 16]));
        assert_eq!(m, LaneBatch::splat(3));
    }

    #[cfg(target_arch = "x86_64")]
    #[test]
    fn hardware_backend_matches_scalar() {
        if !x86::enabled() {
            eprintln!("avx512f not available; hardware backend not exercised");
            return;
        }
        let img = identity_image(16, 16);
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as u32
        };
        for _ in 0..500 {
            let addrs =
                LaneBatch(std::array::from_fn(|_| next() % img.cells().len() as u32));
            let hw = unsafe { x86::gather(img.cells(), &addrs) };
            assert_eq!(hw, scalar::gather(img.cells(), &addrs));

            let a = LaneBatch(std::array::from_fn(|_| next()));
            let b = LaneBatch(std::array::from_fn(|_| next() & 0x1FF));
            for rel in [Rel::Lt, Rel::Gt, Rel::Ne] {
                assert_eq!(
                    unsafe { x86::cmp_mask(&a, &b, rel) },
                    scalar::cmp_mask(&a, &b, rel)
                );
            }
            let mask = LaneMask(next() as u16);
            for (dir, id) in [(Dir::Max, 0), (Dir::Min, u32::MAX)] {
                assert_eq!(
                    unsafe { x86::reduce_extremum(&a, mask, dir, id) },
                    scalar::reduce_extremum(&a, mask, dir, id)
                );
            }
        }
        for m in 0u32..=0xFFFF {
            let mask = LaneMask(m as u16);
            assert_eq!(
                unsafe { x86::prefix_sum(mask, &[1, 2, 4, 8]) },
                scalar::prefix_sum(mask, &[1, 2, 4, 8])
            );
            assert_eq!(
                unsafe { x86::prefix_sum(mask, &[1, 2, 4]) },
                scalar::prefix_sum(mask, &[1, 2, 4])
            );
        }
    }
}
