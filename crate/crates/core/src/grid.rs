//! The 2D image domain: padded row-major storage, linear addressing,
//! 4/8-connectivity, raster and anti-raster scan orders, and PGM / raw I/O.
//!
//! Every image carries a one-pixel sentinel frame so that neighbor addresses
//! computed as constant offsets are always in bounds, even on the border.
//! The frame holds an operator-chosen `pad` intensity (0 for max-propagation,
//! the maximum intensity for min-propagation) and is never enqueued.

use std::io::Write;
use std::sync::atomic::{AtomicU32, Ordering};

use crate::{Error, Result};

/// Linear address into the padded pixel array.
pub type Addr = u32;

/// Width of the sentinel frame on each side.
pub const PAD: usize = 1;

/// Padded row-major grid of 32-bit unsigned intensities.
#[derive(Clone, PartialEq, Eq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<u32>,
}

impl Image2D {
    /// Creates a `width`×`height` image with all interior cells set to `fill`
    /// and the sentinel frame set to `pad`.
    pub fn new(width: usize, height: usize, fill: u32, pad: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let stride = width + 2 * PAD;
        let rows = height + 2 * PAD;
        let mut img = Image2D {
            width,
            height,
            data: vec![pad; stride * rows],
        };
        for y in 0..height {
            let row = img.row_range(y);
            img.data[row].fill(fill);
        }
        Ok(img)
    }

    /// Builds an image from interior values in row-major order.
    pub fn from_interior(width: usize, height: usize, values: &[u32], pad: u32) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} interior values, got {}",
                width * height,
                values.len()
            )));
        }
        let mut img = Image2D::new(width, height, 0, pad)?;
        for y in 0..height {
            let row = img.row_range(y);
            img.data[row].copy_from_slice(&values[y * width..(y + 1) * width]);
        }
        Ok(img)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Distance in linear addresses between vertically adjacent pixels.
    #[inline]
    pub fn stride(&self) -> usize {
        self.width + 2 * PAD
    }

    /// Raw padded cell array, interior plus frame.
    #[inline]
    pub fn cells(&self) -> &[u32] {
        &self.data
    }

    /// Linear address of interior pixel (x, y).
    #[inline]
    pub fn addr(&self, x: usize, y: usize) -> Addr {
        debug_assert!(x < self.width && y < self.height);
        ((y + PAD) * self.stride() + x + PAD) as Addr
    }

    /// Interior coordinates of a linear address. Inverse of [`Image2D::addr`].
    #[inline]
    pub fn coords(&self, addr: Addr) -> (usize, usize) {
        let a = addr as usize;
        let stride = self.stride();
        (a % stride - PAD, a / stride - PAD)
    }

    /// True when the address maps to an interior pixel rather than the frame.
    #[inline]
    pub fn is_interior(&self, addr: Addr) -> bool {
        let a = addr as usize;
        let stride = self.stride();
        if a >= self.data.len() {
            return false;
        }
        let x = a % stride;
        let y = a / stride;
        x >= PAD && x < self.width + PAD && y >= PAD && y < self.height + PAD
    }

    #[inline]
    pub fn get(&self, addr: Addr) -> u32 {
        self.data[addr as usize]
    }

    #[inline]
    pub fn set(&mut self, addr: Addr, value: u32) {
        self.data[addr as usize] = value;
    }

    fn row_range(&self, y: usize) -> std::ops::Range<usize> {
        let start = (y + PAD) * self.stride() + PAD;
        start..start + self.width
    }

    /// Interior row `y` as a slice.
    pub fn row(&self, y: usize) -> &[u32] {
        &self.data[self.row_range(y)]
    }

    /// Mutable interior row `y`.
    pub fn row_mut(&mut self, y: usize) -> &mut [u32] {
        let range = self.row_range(y);
        &mut self.data[range]
    }

    /// Rewrites every frame cell with `pad`.
    pub fn set_frame(&mut self, pad: u32) {
        let stride = self.stride();
        let rows = self.height + 2 * PAD;
        for x in 0..stride {
            self.data[x] = pad;
            self.data[(rows - 1) * stride + x] = pad;
        }
        for y in 1..rows - 1 {
            self.data[y * stride] = pad;
            self.data[y * stride + stride - 1] = pad;
        }
    }

    /// Interior values in row-major order.
    pub fn interior(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            out.extend_from_slice(self.row(y));
        }
        out
    }

    /// Iterator over interior addresses in raster order (ascending).
    /// Captures the dimensions by value, so the image itself stays free.
    pub fn scan_raster(&self) -> impl Iterator<Item = Addr> {
        let (w, h, stride) = (self.width, self.height, self.stride());
        (0..h).flat_map(move |y| (0..w).map(move |x| ((y + PAD) * stride + x + PAD) as Addr))
    }

    /// Iterator over interior addresses in anti-raster order (descending).
    pub fn scan_antiraster(&self) -> impl Iterator<Item = Addr> {
        let (w, h, stride) = (self.width, self.height, self.stride());
        (0..h)
            .rev()
            .flat_map(move |y| (0..w).rev().map(move |x| ((y + PAD) * stride + x + PAD) as Addr))
    }

    /// Copies the interior rows `rows` of `self` into a fresh image with its
    /// own sentinel frame set to `pad`.
    pub fn slice_rows(&self, rows: std::ops::Range<usize>, pad: u32) -> Result<Image2D> {
        if rows.start >= rows.end || rows.end > self.height {
            return Err(Error::InvalidArgument(format!(
                "row range {rows:?} outside image of height {}",
                self.height
            )));
        }
        let mut out = Image2D::new(self.width, rows.end - rows.start, 0, pad)?;
        for (dst, src) in (rows.start..rows.end).enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        Ok(out)
    }

    /// Writes the interior of `tile` into `self` starting at `row_start`.
    pub fn paste_rows(&mut self, tile: &Image2D, row_start: usize) -> Result<()> {
        if tile.width != self.width || row_start + tile.height > self.height {
            return Err(Error::InvalidArgument(format!(
                "tile {}x{} at row {row_start} does not fit into {}x{}",
                tile.width, tile.height, self.width, self.height
            )));
        }
        for y in 0..tile.height {
            self.row_mut(row_start + y).copy_from_slice(tile.row(y));
        }
        Ok(())
    }

    /// Shared view with tear-free 32-bit cell access, for engines that let
    /// several workers write distinct cells of one image.
    pub fn view(&mut self) -> CellView<'_> {
        CellView::new(self)
    }

    /// FNV-1a of the interior bytes (row-major, little-endian cells).
    pub fn checksum(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut hash = OFFSET;
        for y in 0..self.height {
            for &v in self.row(y) {
                for b in v.to_le_bytes() {
                    hash ^= b as u64;
                    hash = hash.wrapping_mul(PRIME);
                }
            }
        }
        hash
    }
}

impl std::fmt::Debug for Image2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image2D({}x{})", self.width, self.height)
    }
}

/// Shared cell view over an [`Image2D`].
///
/// All access goes through relaxed 32-bit atomic loads and stores: individual
/// cells can never tear, concurrent writers to distinct cells are allowed, and
/// no cross-thread ordering is implied. On a single thread this compiles to
/// plain loads and stores.
pub struct CellView<'a> {
    cells: &'a [AtomicU32],
    width: usize,
    height: usize,
    stride: usize,
}

impl<'a> CellView<'a> {
    fn new(img: &'a mut Image2D) -> Self {
        let width = img.width;
        let height = img.height;
        let stride = img.stride();
        // AtomicU32 has the same size, alignment and bit validity as u32, and
        // the &mut borrow guarantees exclusive access for the view's lifetime.
        let cells = unsafe {
            std::slice::from_raw_parts(img.data.as_ptr() as *const AtomicU32, img.data.len())
        };
        CellView {
            cells,
            width,
            height,
            stride,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn get(&self, addr: Addr) -> u32 {
        self.cells[addr as usize].load(Ordering::Relaxed)
    }

    #[inline]
    pub fn set(&self, addr: Addr, value: u32) {
        self.cells[addr as usize].store(value, Ordering::Relaxed);
    }

    #[inline]
    pub fn addr(&self, x: usize, y: usize) -> Addr {
        debug_assert!(x < self.width && y < self.height);
        ((y + PAD) * self.stride + x + PAD) as Addr
    }

    #[inline]
    pub fn is_interior(&self, addr: Addr) -> bool {
        let a = addr as usize;
        if a >= self.cells.len() {
            return false;
        }
        let x = a % self.stride;
        let y = a / self.stride;
        x >= PAD && x < self.width + PAD && y >= PAD && y < self.height + PAD
    }
}

/// Grid connectivity: edge-adjacent only, or edge plus vertex adjacent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    N4,
    N8,
}

impl Connectivity {
    pub fn degree(self) -> usize {
        match self {
            Connectivity::N4 => 4,
            Connectivity::N8 => 8,
        }
    }
}

/// Connectivity bound to a concrete image stride, yielding constant
/// linear-address deltas for full, raster-half and anti-raster-half
/// neighborhoods.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    connectivity: Connectivity,
    offsets: Vec<i32>,
    raster_half: Vec<i32>,
    anti_raster_half: Vec<i32>,
}

impl Neighborhood {
    pub fn new(connectivity: Connectivity, stride: usize) -> Self {
        let s = stride as i32;
        let (offsets, raster_half, anti_raster_half) = match connectivity {
            Connectivity::N4 => (
                vec![-s, -1, 1, s],
                vec![-s, -1],
                vec![1, s],
            ),
            Connectivity::N8 => (
                vec![-s - 1, -s, -s + 1, -1, 1, s - 1, s, s + 1],
                vec![-s - 1, -s, -s + 1, -1],
                vec![1, s - 1, s, s + 1],
            ),
        };
        Neighborhood {
            connectivity,
            offsets,
            raster_half,
            anti_raster_half,
        }
    }

    pub fn for_image(connectivity: Connectivity, img: &Image2D) -> Self {
        Self::new(connectivity, img.stride())
    }

    #[inline]
    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    /// All neighbor deltas.
    #[inline]
    pub fn offsets(&self) -> &[i32] {
        &self.offsets
    }

    /// Deltas of neighbors preceding the pixel in raster order.
    #[inline]
    pub fn raster_half(&self) -> &[i32] {
        &self.raster_half
    }

    /// Deltas of neighbors following the pixel in raster order.
    #[inline]
    pub fn anti_raster_half(&self) -> &[i32] {
        &self.anti_raster_half
    }

    /// Neighbor addresses of an interior pixel. The sentinel frame keeps all
    /// results in bounds.
    #[inline]
    pub fn neighbors_of(&self, addr: Addr) -> impl Iterator<Item = Addr> + '_ {
        self.offsets
            .iter()
            .map(move |&d| (addr as i64 + d as i64) as Addr)
    }
}

#[inline]
pub fn apply_offset(addr: Addr, delta: i32) -> Addr {
    (addr as i64 + delta as i64) as Addr
}

// --- PGM ---

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn parse_err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.parse_err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse::<u32>()
            .map_err(|_| self.parse_err(format!("{what} out of range")))
    }
}

/// Parses a PGM image (binary `P5` or ASCII `P2`, maxval up to 65535).
/// Values are widened to 32 bits; the frame is set to `pad`.
pub fn read_pgm(bytes: &[u8], pad: u32) -> Result<Image2D> {
    let mut cur = PgmCursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(cur.parse_err("truncated magic"));
    }
    let binary = match &bytes[0..2] {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(cur.parse_err("expected PGM magic P5 or P2")),
    };
    cur.pos = 2;
    let width = cur.read_number("width")? as usize;
    let height = cur.read_number("height")? as usize;
    let maxval = cur.read_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.parse_err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.parse_err(format!("maxval {maxval} outside 1..=65535")));
    }

    let mut img = Image2D::new(width, height, 0, pad)?;
    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.parse_err("missing raster separator"));
        }
        cur.pos += 1;
        let per_value = if maxval < 256 { 1 } else { 2 };
        let need = width * height * per_value;
        if bytes.len() - cur.pos < need {
            cur.pos = bytes.len();
            return Err(cur.parse_err(format!(
                "truncated raster: need {need} bytes, have {}",
                bytes.len() - cur.pos
            )));
        }
        for y in 0..height {
            for x in 0..width {
                let v = if per_value == 1 {
                    bytes[cur.pos] as u32
                } else {
                    // 16-bit samples are big-endian per the format.
                    ((bytes[cur.pos] as u32) << 8) | bytes[cur.pos + 1] as u32
                };
                cur.pos += per_value;
                let addr = img.addr(x, y);
                img.set(addr, v);
            }
        }
    } else {
        for y in 0..height {
            for x in 0..width {
                let v = cur.read_number("sample")?;
                if v > maxval {
                    return Err(cur.parse_err(format!("sample {v} exceeds maxval {maxval}")));
                }
                let addr = img.addr(x, y);
                img.set(addr, v);
            }
        }
    }
    Ok(img)
}

/// Serializes the interior as a binary `P5` PGM with the given `maxval`.
/// Fails if any interior value exceeds `maxval`.
pub fn write_pgm(img: &Image2D, maxval: u32) -> Result<Vec<u8>> {
    if maxval == 0 || maxval > 65535 {
        return Err(Error::InvalidArgument(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let mut out = Vec::new();
    write!(out, "P5\n{} {}\n{}\n", img.width(), img.height(), maxval).unwrap();
    for y in 0..img.height() {
        for &v in img.row(y) {
            if v > maxval {
                return Err(Error::InvalidArgument(format!(
                    "value {v} exceeds maxval {maxval}; use the raw format for lossless output"
                )));
            }
            if maxval < 256 {
                out.push(v as u8);
            } else {
                out.extend_from_slice(&(v as u16).to_be_bytes());
            }
        }
    }
    Ok(out)
}

// --- Raw 32-bit format ---

pub const RAW_MAGIC: &[u8; 4] = b"IW2D";

/// Serializes the interior as the raw format: a 16-byte header
/// (`IW2D`, u32 width, u32 height, u32 reserved) followed by
/// width*height little-endian u32 values, row-major, no padding.
pub fn write_raw(img: &Image2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.width() * img.height() * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for y in 0..img.height() {
        for &v in img.row(y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses the raw format written by [`write_raw`].
pub fn read_raw(bytes: &[u8], pad: u32) -> Result<Image2D> {
    let err = |offset: usize, message: &str| Error::Parse {
        offset,
        message: message.to_string(),
    };
    if bytes.len() < 16 {
        return Err(err(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(err(0, "bad magic, expected IW2D"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(err(4, "zero image dimension"));
    }
    let need = 16 + width * height * 4;
    if bytes.len() < need {
        return Err(err(bytes.len(), "truncated raster"));
    }
    let mut img = Image2D::new(width, height, 0, pad)?;
    let mut pos = 16;
    for y in 0..height {
        for x in 0..width {
            let v = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            pos += 4;
            let addr = img.addr(x, y);
            img.set(addr, v);
        }
    }
    Ok(img)
}
