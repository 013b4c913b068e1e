//! Image-side synthesis: relevance-based region selection, rectangle mask
//! geometry, the tri-pass inpainting schedule and the finetune mask sampler.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Provenance, Region, Sample, Shape, Variant};
use crate::embed::{cosine_similarity, Embedder};
use crate::text::{tokenize, Stopwords};

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.x0 >= self.x0 && o.x1 <= self.x1 && o.y0 >= self.y0 && o.y1 <= self.y1
    }
}

/// 8-bit raster with 1 or 3 interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("image dimensions must be positive")]
    ZeroSize,
    #[error("channels must be 1 or 3, got {0}")]
    Channels(u8),
    #[error("buffer holds {got} bytes, expected {expected}")]
    BufferLength { expected: usize, got: usize },
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8) -> Result<Self, ImageError> {
        let len = Self::check(width, height, channels)?;
        Ok(Self {
            width,
            height,
            channels,
            data: vec![0; len],
        })
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageError> {
        let len = Self::check(width, height, channels)?;
        if data.len() != len {
            return Err(ImageError::BufferLength {
                expected: len,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    fn check(width: u32, height: u32, channels: u8) -> Result<usize, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroSize);
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        Ok(width as usize * height as usize * channels as usize)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.data[o..o + c].copy_from_slice(&px[..c]);
    }

    pub fn same_shape(&self, o: &RasterImage) -> bool {
        self.width == o.width && self.height == o.height && self.channels == o.channels
    }

    /// Copies the pixels of `src` inside `mask` into `self`.
    fn paste(&mut self, src: &RasterImage, mask: Rect) {
        let c = self.channels as usize;
        for y in mask.y0..mask.y1 {
            let a = self.offset(mask.x0, y);
            let b = a + mask.width() as usize * c;
            self.data[a..b].copy_from_slice(&src.data[a..b]);
        }
    }
}

/// An inpainting model. Implementations must return an image of the same
/// shape and leave pixels outside `mask` untouched.
pub trait InpaintBackend {
    type Error;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, Self::Error>;
}

impl<B: InpaintBackend + ?Sized> InpaintBackend for &B {
    type Error = B::Error;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, B::Error> {
        (**self).inpaint(image, mask)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdentityBackend;

impl InpaintBackend for IdentityBackend {
    type Error = core::convert::Infallible;

    fn inpaint(&self, image: &RasterImage, _mask: Rect) -> Result<RasterImage, Self::Error> {
        Ok(image.clone())
    }
}

/// Fills the mask with one value on every channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantFillBackend(pub u8);

impl InpaintBackend for ConstantFillBackend {
    type Error = core::convert::Infallible;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, Self::Error> {
        let mut out = image.clone();
        let px = [self.0; 3];
        for y in mask.y0..mask.y1.min(image.height) {
            for x in mask.x0..mask.x1.min(image.width) {
                out.set_pixel(x, y, &px);
            }
        }
        Ok(out)
    }
}

/// Fills the mask with the per-channel mean of the one-pixel ring around it
/// (rounded half up). Leaves the image alone when the ring is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NeighborFillBackend;

impl InpaintBackend for NeighborFillBackend {
    type Error = core::convert::Infallible;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, Self::Error> {
        let c = image.channels as usize;
        let mut sums = [0u64; 3];
        let mut count = 0u64;
        let (w, h) = (i64::from(image.width), i64::from(image.height));
        for y in i64::from(mask.y0) - 1..=i64::from(mask.y1) {
            for x in i64::from(mask.x0) - 1..=i64::from(mask.x1) {
                let inside = x >= i64::from(mask.x0)
                    && x < i64::from(mask.x1)
                    && y >= i64::from(mask.y0)
                    && y < i64::from(mask.y1);
                if inside || x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let px = image.pixel(x as u32, y as u32);
                for ch in 0..c {
                    sums[ch] += u64::from(px[ch]);
                }
                count += 1;
            }
        }
        let mut out = image.clone();
        if count == 0 {
            return Ok(out);
        }
        let mut fill = [0u8; 3];
        for ch in 0..c {
            fill[ch] = ((sums[ch] * 2 + count) / (count * 2)) as u8;
        }
        for y in mask.y0..mask.y1.min(image.height) {
            for x in mask.x0..mask.x1.min(image.width) {
                out.set_pixel(x, y, &fill);
            }
        }
        Ok(out)
    }
}

/// Wraps a backend and counts calls.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: InpaintBackend> InpaintBackend for CountingBackend<B> {
    type Error = B::Error;

    fn inpaint(&self, image: &RasterImage, mask: Rect) -> Result<RasterImage, B::Error> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.inpaint(image, mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("shape is degenerate or lies outside the image")]
    Degenerate,
    #[error("shape has no interior pixel")]
    EmptyInterior,
}

/// Smallest pixel rectangle containing the shape, clipped to `width x height`.
pub fn circumscribed_rect(shape: &Shape, width: u32, height: u32) -> Result<Rect, GeometryError> {
    let (x0, y0, x1, y1) = shape.bounds();
    if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
        return Err(GeometryError::Degenerate);
    }
    let clip = |v: f64, hi: u32| v.clamp(0.0, f64::from(hi));
    let r = Rect::new(
        libm::floor(clip(x0, width)) as u32,
        libm::floor(clip(y0, height)) as u32,
        libm::ceil(clip(x1, width)) as u32,
        libm::ceil(clip(y1, height)) as u32,
    );
    if r.is_empty() {
        return Err(GeometryError::Degenerate);
    }
    Ok(r)
}

/// Whether the unit pixel square at `(x, y)` lies inside the polygon.
fn pixel_inside(pts: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = pts.len();
    for i in 0..n {
        if segment_enters_open_square(pts[i], pts[(i + 1) % n], x, y) {
            return false;
        }
    }
    // No edge crosses the open square, so it is wholly on one side.
    crate::corpus::point_in_polygon(pts, x + 0.5, y + 0.5)
}

/// Liang–Barsky clip of segment `ab` to the square `[x, x+1] x [y, y+1]`;
/// true when the clipped part passes through the open interior.
fn segment_enters_open_square(a: (f64, f64), b: (f64, f64), x: f64, y: f64) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [(-dx, a.0 - x), (dx, x + 1.0 - a.0), (-dy, a.1 - y), (dy, y + 1.0 - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return false;
    }
    let tm = (t0 + t1) / 2.0;
    let (mx, my) = (a.0 + tm * dx, a.1 + tm * dy);
    mx > x && mx < x + 1.0 && my > y && my < y + 1.0
}

/// Largest all-true axis-aligned rectangle in a `w x h` row-major grid.
/// Ties keep the first rectangle found scanning rows top to bottom.
pub(crate) fn largest_rectangle(grid: &[bool], w: usize, h: usize) -> Option<(usize, usize, usize, usize)> {
    let mut heights = vec![0usize; w];
    let mut best: Option<(usize, (usize, usize, usize, usize))> = None;
    let mut stack: Vec<usize> = Vec::with_capacity(w + 1);
    for y in 0..h {
        for x in 0..w {
            heights[x] = if grid[y * w + x] { heights[x] + 1 } else { 0 };
        }
        stack.clear();
        for x in 0..=w {
            let cur = if x < w { heights[x] } else { 0 };
            while let Some(&top) = stack.last() {
                if heights[top] < cur {
                    break;
                }
                stack.pop();
                let ht = heights[top];
                let left = stack.last().map_or(0, |&s| s + 1);
                let area = ht * (x - left);
                if area > 0 && best.is_none_or(|(a, _)| area > a) {
                    best = Some((area, (left, y + 1 - ht, x, y + 1)));
                }
            }
            stack.push(x);
        }
    }
    best.map(|(_, r)| r)
}

/// Largest pixel rectangle whose pixels lie wholly inside the shape.
pub fn inscribed_rect(shape: &Shape) -> Result<Rect, GeometryError> {
    match shape {
        Shape::Box { x0, y0, x1, y1 } => {
            let r = Rect::new(
                libm::ceil(x0.max(0.0)) as u32,
                libm::ceil(y0.max(0.0)) as u32,
                libm::floor(x1.max(0.0)) as u32,
                libm::floor(y1.max(0.0)) as u32,
            );
            if r.is_empty() {
                Err(GeometryError::EmptyInterior)
            } else {
                Ok(r)
            }
        }
        Shape::Polygon(pts) => {
            let (bx0, by0, bx1, by1) = shape.bounds();
            if !(bx0.is_finite() && by0.is_finite() && bx1.is_finite() && by1.is_finite()) {
                return Err(GeometryError::Degenerate);
            }
            let gx = libm::floor(bx0.max(0.0)) as u32;
            let gy = libm::floor(by0.max(0.0)) as u32;
            let w = (libm::ceil(bx1.max(0.0)) as u32).saturating_sub(gx) as usize;
            let h = (libm::ceil(by1.max(0.0)) as u32).saturating_sub(gy) as usize;
            let mut grid = vec![false; w * h];
            for y in 0..h {
                for x in 0..w {
                    grid[y * w + x] = pixel_inside(pts, f64::from(gx) + x as f64, f64::from(gy) + y as f64);
                }
            }
            let (x0, y0, x1, y1) = largest_rectangle(&grid, w, h).ok_or(GeometryError::EmptyInterior)?;
            Ok(Rect::new(
                gx + x0 as u32,
                gy + y0 as u32,
                gx + x1 as u32,
                gy + y1 as u32,
            ))
        }
    }
}

/// The masks of one region removal: the full rectangle, then `m` and then
/// `n` cells partitioning it, each pass in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub rect: Rect,
    pub m: u32,
    pub n: u32,
    pub passes: [Vec<Rect>; 3],
}

impl MaskPlan {
    pub fn total_runs(&self) -> usize {
        self.passes.iter().map(Vec::len).sum()
    }

    pub fn masks(&self) -> impl Iterator<Item = (usize, usize, Rect)> + '_ {
        self.passes
            .iter()
            .enumerate()
            .flat_map(|(p, cells)| cells.iter().enumerate().map(move |(i, r)| (p + 1, i, *r)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("need 2 <= M <= N, got M={m}, N={n}")]
    Range { m: u32, n: u32 },
    #[error("{w}x{h} rectangle cannot hold a {rows}x{cols} grid")]
    TooSmall { w: u32, h: u32, rows: u32, cols: u32 },
}

/// `(rows, cols)` for `k` cells: rows is the largest divisor of `k` not above `sqrt(k)`.
pub fn grid_shape(k: u32) -> (u32, u32) {
    let mut rows = 1;
    let mut d = 1;
    while d * d <= k {
        if k.is_multiple_of(d) {
            rows = d;
        }
        d += 1;
    }
    (rows, k / rows)
}

fn split(lo: u32, hi: u32, parts: u32) -> Vec<(u32, u32)> {
    let step = (hi - lo) / parts;
    (0..parts)
        .map(|i| {
            let a = lo + i * step;
            let b = if i + 1 == parts { hi } else { a + step };
            (a, b)
        })
        .collect()
}

fn grid_cells(rect: Rect, k: u32) -> Result<Vec<Rect>, PlanError> {
    let (rows, cols) = grid_shape(k);
    if rect.width() < cols || rect.height() < rows {
        return Err(PlanError::TooSmall {
            w: rect.width(),
            h: rect.height(),
            rows,
            cols,
        });
    }
    let ys = split(rect.y0, rect.y1, rows);
    let xs = split(rect.x0, rect.x1, cols);
    let mut out = Vec::with_capacity(k as usize);
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            out.push(Rect::new(x0, y0, x1, y1));
        }
    }
    Ok(out)
}

pub fn plan_tri_pass(rect: Rect, m: u32, n: u32) -> Result<MaskPlan, PlanError> {
    if m < 2 || m > n {
        return Err(PlanError::Range { m, n });
    }
    Ok(MaskPlan {
        rect,
        m,
        n,
        passes: [vec![rect], grid_cells(rect, m)?, grid_cells(rect, n)?],
    })
}

/// Which backend call failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// The single pretrained-model call on the full mask.
    Pretrained,
    /// Refinement pass 1, 2 or 3 and the cell index within it.
    Refine { pass: usize, cell: usize },
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Stage::Pretrained => f.write_str("pretrained pass"),
            Stage::Refine { pass, cell } => write!(f, "refine pass {pass} cell {cell}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemovalError<E> {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("backend failed at {stage}: {source}")]
    Backend { stage: Stage, source: E },
    #[error("backend returned a differently shaped image at {stage}")]
    Shape { stage: Stage },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriPassParams {
    pub m: u32,
    pub n: u32,
}

impl Default for TriPassParams {
    fn default() -> Self {
        Self { m: 4, n: 16 }
    }
}

fn apply<B: InpaintBackend>(
    image: &mut RasterImage,
    backend: &B,
    mask: Rect,
    stage: Stage,
) -> Result<(), RemovalError<B::Error>> {
    let out = backend
        .inpaint(image, mask)
        .map_err(|source| RemovalError::Backend { stage, source })?;
    if !out.same_shape(image) {
        return Err(RemovalError::Shape { stage });
    }
    // Only in-mask pixels are taken from the backend.
    image.paste(&out, mask);
    Ok(())
}

/// Removes one region: one pretrained call on its circumscribed rectangle,
/// then the tri-pass refinement, each call seeing all earlier results.
pub fn run_removal<P, F>(
    image: &RasterImage,
    shape: &Shape,
    params: TriPassParams,
    backend_p: &P,
    backend_f: &F,
) -> Result<RasterImage, RemovalError<P::Error>>
where
    P: InpaintBackend,
    F: InpaintBackend<Error = P::Error>,
{
    let rect = circumscribed_rect(shape, image.width(), image.height())?;
    let plan = plan_tri_pass(rect, params.m, params.n)?;
    let mut img = image.clone();
    apply(&mut img, backend_p, rect, Stage::Pretrained)?;
    for (pass, cell, mask) in plan.masks() {
        apply(&mut img, backend_f, mask, Stage::Refine { pass, cell })?;
    }
    Ok(img)
}

/// Region indices split by relevance to the question and correct answer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    pub relevant: Vec<usize>,
    pub irrelevant: Vec<usize>,
    /// Regions below the minimum size, in neither set.
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectParams {
    /// Minimum number of label unigrams found in the question or answer.
    pub theta_exact: usize,
    /// Minimum label-to-text cosine for a soft match.
    pub theta_soft: f64,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            theta_exact: 1,
            theta_soft: 0.5,
        }
    }
}

/// Regions smaller than this fraction of the image are ignored.
pub const MIN_REGION_FRACTION: f64 = 1.0 / 64.0;

/// Splits the sample's regions into relevant and irrelevant ones. A region
/// is relevant when enough of its label's non-stopword unigrams occur in the
/// question or correct answer, or when its label embedding is close enough to
/// the embedding of question and answer together.
pub fn select_regions<E: Embedder>(
    sample: &Sample,
    embedder: &E,
    stopwords: &Stopwords,
    params: &SelectParams,
) -> Result<Partition, E::Error> {
    let min_area = f64::from(sample.visual.width) * f64::from(sample.visual.height) * MIN_REGION_FRACTION;
    let mut context: BTreeSet<String> = sample.question.iter().flat_map(|t| tokenize(t)).collect();
    context.extend(sample.correct_option().text.iter().flat_map(|t| tokenize(t)));
    let joined = format!("{} {}", sample.question.join(" "), sample.correct_option().joined());

    let mut part = Partition::default();
    let mut pending = Vec::new();
    for (i, r) in sample.visual.objects.iter().enumerate() {
        if r.shape.area() < min_area {
            part.excluded.push(i);
            continue;
        }
        let hits = tokenize(&r.label)
            .iter()
            .filter(|t| !stopwords.contains(t) && context.contains(*t))
            .count();
        if params.theta_exact > 0 && hits >= params.theta_exact {
            part.relevant.push(i);
        } else {
            pending.push(i);
        }
    }
    if !pending.is_empty() {
        let mut texts: Vec<&str> = vec![joined.as_str()];
        texts.extend(pending.iter().map(|&i| sample.visual.objects[i].label.as_str()));
        let v = embedder.embed(&texts)?;
        for (k, &i) in pending.iter().enumerate() {
            let cos = cosine_similarity(&v[k + 1], &v[0]).unwrap_or(-1.0);
            if cos >= params.theta_soft {
                part.relevant.push(i);
            } else {
                part.irrelevant.push(i);
            }
        }
    }
    part.relevant.sort_unstable();
    part.irrelevant.sort_unstable();
    Ok(part)
}

/// `I+` and `I-` for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesizedImages {
    pub positive: RasterImage,
    pub negative: RasterImage,
    /// No irrelevant region to remove: `positive` is a copy of the input.
    pub positive_noop: bool,
    /// No relevant region to remove: `negative` is a copy of the input.
    pub negative_noop: bool,
}

fn remove_all<P, F>(
    image: &RasterImage,
    regions: &[&Region],
    params: TriPassParams,
    backend_p: &P,
    backend_f: &F,
) -> Result<RasterImage, RemovalError<P::Error>>
where
    P: InpaintBackend,
    F: InpaintBackend<Error = P::Error>,
{
    let mut order: Vec<&Region> = regions.to_vec();
    order.sort_by(|a, b| b.shape.area().total_cmp(&a.shape.area()));
    let mut img = image.clone();
    for r in order {
        img = run_removal(&img, &r.shape, params, backend_p, backend_f)?;
    }
    Ok(img)
}

/// Removes irrelevant regions for `I+` and relevant ones for `I-`, larger
/// regions first.
pub fn synthesize_images<P, F>(
    sample: &Sample,
    image: &RasterImage,
    partition: &Partition,
    params: TriPassParams,
    backend_p: &P,
    backend_f: &F,
) -> Result<SynthesizedImages, RemovalError<P::Error>>
where
    P: InpaintBackend,
    F: InpaintBackend<Error = P::Error>,
{
    let pick = |ix: &[usize]| -> Vec<&Region> { ix.iter().map(|&i| &sample.visual.objects[i]).collect() };
    let irr = pick(&partition.irrelevant);
    let rel = pick(&partition.relevant);
    Ok(SynthesizedImages {
        positive: remove_all(image, &irr, params, backend_p, backend_f)?,
        negative: remove_all(image, &rel, params, backend_p, backend_f)?,
        positive_noop: irr.is_empty(),
        negative_noop: rel.is_empty(),
    })
}

/// The sample record for a synthesized image: removed regions are dropped
/// from the visual premise and the image reference points at `image_ref`.
pub fn image_variant_sample(original: &Sample, partition: &Partition, variant: Variant, image_ref: String) -> Sample {
    let removed: &[usize] = if variant == Variant::IMAGE_NEGATIVE {
        &partition.relevant
    } else {
        &partition.irrelevant
    };
    let mut s = original.clone();
    s.id = format!("{}#{}", original.id, variant);
    s.visual.image = Some(image_ref);
    s.visual.objects = original
        .visual
        .objects
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    s.provenance = Provenance::synthesized(original.id.clone(), variant);
    s
}

/// Side ratios of the finetune masks relative to the inscribed rectangle.
pub const FINETUNE_RATIOS: [f64; 3] = [0.7, 0.5, 0.3];

/// Mask sizes for an inscribed rectangle, one per ratio, rounded.
pub fn finetune_mask_sizes(rect: Rect) -> Vec<(u32, u32)> {
    FINETUNE_RATIOS
        .iter()
        .map(|r| {
            (
                libm::round(f64::from(rect.width()) * r) as u32,
                libm::round(f64::from(rect.height()) * r) as u32,
            )
        })
        .filter(|&(w, h)| w > 0 && h > 0)
        .collect()
}

fn jittered(rect: Rect, w: u32, h: u32, rng: &mut ChaCha8Rng) -> Rect {
    let slack_x = rect.width() - w;
    let slack_y = rect.height() - h;
    let jx = if slack_x == 0 { 0 } else { rng.random_range(0..=slack_x) };
    let jy = if slack_y == 0 { 0 } else { rng.random_range(0..=slack_y) };
    // Average with the centered offset to keep masks near the middle.
    let x = rect.x0 + (slack_x / 2 + jx) / 2;
    let y = rect.y0 + (slack_y / 2 + jy) / 2;
    Rect::new(x, y, x + w, y + h)
}

/// Training masks for the refinement model. Eligible areas are objects that
/// overlap no other object and the largest object-free background area. Each
/// gets masks at the fixed ratios of its inscribed rectangle.
pub fn sample_finetune_masks(width: u32, height: u32, regions: &[Region], seed: u64) -> Vec<Rect> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes: Vec<Option<Rect>> = regions
        .iter()
        .map(|r| circumscribed_rect(&r.shape, width, height).ok())
        .collect();
    let mut out = Vec::new();
    let mut emit = |inner: Rect, rng: &mut ChaCha8Rng| {
        for (w, h) in finetune_mask_sizes(inner) {
            out.push(jittered(inner, w, h, rng));
        }
    };
    for (i, r) in regions.iter().enumerate() {
        let Some(bi) = boxes[i] else { continue };
        let overlapped = boxes
            .iter()
            .enumerate()
            .any(|(j, b)| j != i && b.is_some_and(|b| b.intersects(&bi)));
        if overlapped {
            continue;
        }
        if let Ok(inner) = inscribed_rect(&r.shape) {
            emit(inner, &mut rng);
        }
    }
    let (w, h) = (width as usize, height as usize);
    let mut free = vec![true; w * h];
    for b in boxes.iter().flatten() {
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                free[y as usize * w + x as usize] = false;
            }
        }
    }
    if let Some((x0, y0, x1, y1)) = largest_rectangle(&free, w, h) {
        emit(Rect::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32), &mut rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::sample;
    use crate::embed::HashingEmbedder;

    fn poly(p: &[(f64, f64)]) -> Shape {
        Shape::Polygon(p.to_vec())
    }

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> Shape {
        Shape::Box { x0, y0, x1, y1 }
    }

    #[test]
    fn circumscribed_examples() {
        let tri = poly(&[(1.0, 1.0), (3.0, 2.0), (2.0, 4.0)]);
        assert_eq!(circumscribed_rect(&tri, 10, 10), Ok(Rect::new(1, 1, 3, 4)));
        assert_eq!(
            circumscribed_rect(&bx(2.0, 3.0, 5.0, 7.0), 10, 10),
            Ok(Rect::new(2, 3, 5, 7))
        );
        let wide = poly(&[(-5.0, 1.0), (15.0, 1.0), (5.0, 8.0)]);
        assert_eq!(circumscribed_rect(&wide, 10, 10), Ok(Rect::new(0, 1, 10, 8)));
        assert_eq!(
            circumscribed_rect(&bx(20.0, 20.0, 30.0, 30.0), 10, 10),
            Err(GeometryError::Degenerate)
        );
    }

    fn brute_force_inscribed(s: &Shape, lim: u32) -> u64 {
        // Convex shapes only: a rectangle is inside iff its corners are.
        let mut best = 0;
        for x0 in 0..=lim {
            for x1 in x0 + 1..=lim {
                for y0 in 0..=lim {
                    for y1 in y0 + 1..=lim {
                        let (a, b, c, d) = (f64::from(x0), f64::from(y0), f64::from(x1), f64::from(y1));
                        if s.contains_point(a, b)
                            && s.contains_point(c, b)
                            && s.contains_point(a, d)
                            && s.contains_point(c, d)
                        {
                            best = best.max(u64::from(x1 - x0) * u64::from(y1 - y0));
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn inscribed_triangle_matches_oracle() {
        let tri = poly(&[(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)]);
        let r = inscribed_rect(&tri).unwrap();
        assert_eq!(r.area(), brute_force_inscribed(&tri, 8));
        assert_eq!(r.area(), 16);
        assert_eq!(inscribed_rect(&bx(1.0, 2.0, 4.0, 6.0)), Ok(Rect::new(1, 2, 4, 6)));
        let sliver = poly(&[(0.0, 0.0), (10.0, 0.0), (10.0, 0.5)]);
        assert_eq!(inscribed_rect(&sliver), Err(GeometryError::EmptyInterior));
    }

    #[test]
    fn inscribed_respects_concave_slit() {
        // A U shape whose gap runs through the middle column.
        let u = poly(&[
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 5.0),
            (3.0, 5.0),
            (3.0, 0.0),
            (5.0, 0.0),
            (5.0, 6.0),
            (0.0, 6.0),
        ]);
        let r = inscribed_rect(&u).unwrap();
        assert_eq!(r.area(), 12);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                assert!(!(x == 2 && y < 5), "pixel ({x},{y}) lies in the slit");
            }
        }
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(4), (2, 2));
        assert_eq!(grid_shape(3), (1, 3));
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(9), (3, 3));
        assert_eq!(grid_shape(25), (5, 5));
        assert_eq!(grid_shape(2), (1, 2));
        assert_eq!(grid_shape(12), (3, 4));
    }

    #[test]
    fn plan_examples() {
        let p = plan_tri_pass(Rect::new(0, 0, 64, 64), 4, 16).unwrap();
        assert_eq!(p.total_runs(), 21);
        assert!(p.passes[1].iter().all(|r| r.width() == 32 && r.height() == 32));
        assert!(p.passes[2].iter().all(|r| r.width() == 16 && r.height() == 16));
        assert_eq!(p.passes[1][1], Rect::new(32, 0, 64, 32));

        let p = plan_tri_pass(Rect::new(0, 0, 60, 30), 3, 9).unwrap();
        assert_eq!(p.total_runs(), 13);
        assert_eq!(
            p.passes[1],
            vec![
                Rect::new(0, 0, 20, 30),
                Rect::new(20, 0, 40, 30),
                Rect::new(40, 0, 60, 30)
            ]
        );

        let p = plan_tri_pass(Rect::new(0, 0, 10, 10), 2, 2).unwrap();
        assert_eq!(p.total_runs(), 5);
        assert_eq!(p.passes[1], p.passes[2]);

        assert_eq!(
            plan_tri_pass(Rect::new(0, 0, 10, 10), 5, 4),
            Err(PlanError::Range { m: 5, n: 4 })
        );
        assert!(matches!(
            plan_tri_pass(Rect::new(0, 0, 3, 3), 4, 16),
            Err(PlanError::TooSmall { .. })
        ));
    }

    fn gray(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> RasterImage {
        let mut d = Vec::new();
        for y in 0..h {
            for x in 0..w {
                d.push(f(x, y));
            }
        }
        RasterImage::from_raw(w, h, 1, d).unwrap()
    }

    #[test]
    fn neighbor_fill_ring_mean() {
        let img = gray(6, 6, |x, y| {
            if (2..4).contains(&x) && (2..4).contains(&y) {
                0
            } else {
                100
            }
        });
        let out = NeighborFillBackend.inpaint(&img, Rect::new(2, 2, 4, 4)).unwrap();
        assert!(out.data().iter().all(|&v| v == 100));
    }

    #[test]
    fn removal_call_accounting() {
        let img = gray(64, 64, |x, y| (x * 3 + y) as u8);
        let shape = bx(0.0, 0.0, 64.0, 64.0);
        for (m, n) in [(2, 2), (4, 16), (4, 25), (9, 16)] {
            let p = CountingBackend::new(IdentityBackend);
            let f = CountingBackend::new(IdentityBackend);
            let out = run_removal(&img, &shape, TriPassParams { m, n }, &p, &f).unwrap();
            assert_eq!(p.calls(), 1);
            assert_eq!(f.calls(), (1 + m + n) as usize);
            assert_eq!(out, img);
        }
    }

    /// Writes garbage everywhere; the compositor must keep it inside the mask.
    struct Vandal;
    impl InpaintBackend for Vandal {
        type Error = core::convert::Infallible;
        fn inpaint(&self, image: &RasterImage, _mask: Rect) -> Result<RasterImage, Self::Error> {
            let d = image.data().iter().map(|v| v.wrapping_add(77)).collect();
            Ok(RasterImage::from_raw(image.width(), image.height(), image.channels(), d).unwrap())
        }
    }

    #[test]
    fn out_of_mask_pixels_untouched() {
        let img = gray(40, 30, |x, y| (x ^ y) as u8);
        let shape = poly(&[(5.0, 5.0), (25.0, 8.0), (12.0, 20.0)]);
        let out = run_removal(&img, &shape, TriPassParams::default(), &Vandal, &Vandal).unwrap();
        let r = circumscribed_rect(&shape, 40, 30).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                if !r.contains(x, y) {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
        assert_ne!(out, img);
    }

    fn region(label: &str, s: Shape) -> Region {
        Region {
            label: label.into(),
            shape: s,
            relevance: None,
        }
    }

    #[test]
    fn selection_rules() {
        let mut s = sample(
            "s",
            "what is in the bottle",
            &["water is in the bottle", "x y", "z w", "v u"],
            0,
        );
        s.visual.objects = vec![
            region("bottle", bx(0.0, 0.0, 100.0, 100.0)),
            region("tree", bx(100.0, 100.0, 200.0, 200.0)),
            region("bottle", bx(0.0, 0.0, 10.0, 10.0)),
        ];
        let e = HashingEmbedder::default();
        let sw = Stopwords::english();
        let p = select_regions(&s, &e, &sw, &SelectParams::default()).unwrap();
        assert_eq!(p.relevant, vec![0]);
        assert_eq!(p.irrelevant, vec![1]);
        assert_eq!(p.excluded, vec![2]);

        // Soft-only match: just below the cosine threshold stays irrelevant.
        let v = e
            .embed(&["what is in the bottle water is in the bottle", "tree"])
            .unwrap();
        let cos = cosine_similarity(&v[1], &v[0]).unwrap();
        let below = SelectParams {
            theta_exact: 0,
            theta_soft: cos + 0.01,
        };
        let p = select_regions(&s, &e, &sw, &below).unwrap();
        assert!(p.irrelevant.contains(&1));
        let at = SelectParams {
            theta_exact: 0,
            theta_soft: cos,
        };
        let p = select_regions(&s, &e, &sw, &at).unwrap();
        assert!(p.relevant.contains(&1));
    }

    #[test]
    fn synthesis_bookkeeping() {
        let mut s = sample("s", "what is in the bottle", &["water", "x", "y", "z"], 0);
        s.visual.width = 64;
        s.visual.height = 64;
        s.visual.objects = vec![
            region("bottle", bx(0.0, 0.0, 32.0, 32.0)),
            region("tree", bx(32.0, 32.0, 64.0, 64.0)),
        ];
        let img = gray(64, 64, |x, _| x as u8);
        let part = Partition {
            relevant: vec![0],
            irrelevant: vec![1],
            excluded: vec![],
        };
        let p = CountingBackend::new(ConstantFillBackend(255));
        let f = CountingBackend::new(ConstantFillBackend(255));
        let out = synthesize_images(&s, &img, &part, TriPassParams::default(), &p, &f).unwrap();
        assert_eq!(p.calls(), 2);
        assert_eq!(f.calls(), 42);
        assert_eq!(out.negative.pixel(5, 5), &[255]);
        assert_eq!(out.negative.pixel(40, 40), img.pixel(40, 40));
        assert_eq!(out.positive.pixel(40, 40), &[255]);

        let none = Partition {
            relevant: vec![0],
            irrelevant: vec![],
            excluded: vec![],
        };
        let out = synthesize_images(&s, &img, &none, TriPassParams::default(), &p, &f).unwrap();
        assert!(out.positive_noop);
        assert_eq!(out.positive, img);

        let v = image_variant_sample(&s, &part, Variant::IMAGE_NEGATIVE, "s_neg.png".into());
        assert_eq!(v.visual.objects.len(), 1);
        assert_eq!(v.visual.objects[0].label, "tree");
        assert_eq!(v.provenance.parent(), Some("s"));
    }

    #[test]
    fn finetune_masks() {
        assert_eq!(
            finetune_mask_sizes(Rect::new(0, 0, 100, 60)),
            vec![(70, 42), (50, 30), (30, 18)]
        );
        let regions = vec![
            region("a", bx(0.0, 0.0, 100.0, 60.0)),
            region("b", bx(150.0, 150.0, 200.0, 200.0)),
            region("c", bx(160.0, 160.0, 180.0, 180.0)),
        ];
        let m = sample_finetune_masks(224, 224, &regions, 3);
        assert_eq!(m, sample_finetune_masks(224, 224, &regions, 3));
        // Region a gives three masks inside it; b and c overlap and give none.
        let inside_a: Vec<_> = m.iter().filter(|r| Rect::new(0, 0, 100, 60).contains_rect(r)).collect();
        assert_eq!(inside_a.len(), 3);
        assert_eq!((inside_a[0].width(), inside_a[0].height()), (70, 42));
        let b = Rect::new(150, 150, 200, 200);
        assert!(m.iter().all(|r| !r.intersects(&b)));
        assert_eq!(m.len(), 6);
    }
}
