//! Screenshot frames and visual-token geometry.
//!
//! Pages are laid out on a 160×160 canvas, painted with a fixed palette,
//! and padded with white to 224×224 with the content anchored at the top
//! left. A frame splits into a 14×14 grid of 16×16 RGB patches; a window of
//! the last `H` frames yields `H × 196` tokens.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::dom::{DomNode, DomTree, Ref};
use crate::rng::fnv1a32;

pub const FRAME_SIZE: usize = 224;
pub const CONTENT_SIZE: i32 = 160;
pub const PATCH_SIZE: usize = 16;
pub const PATCHES_PER_SIDE: usize = FRAME_SIZE / PATCH_SIZE;
pub const PATCHES_PER_FRAME: usize = PATCHES_PER_SIDE * PATCHES_PER_SIDE;
pub const PATCH_BYTES: usize = PATCH_SIZE * PATCH_SIZE * 3;
/// Temporal window used by default.
pub const DEFAULT_HISTORY: usize = 2;

const MARGIN: i32 = 2;
const CHAR_WIDTH: i32 = 6;
const LINE_HEIGHT: i32 = 10;
const TEXT_INPUT_WIDTH: i32 = 64;
const CONTROL_HEIGHT: i32 = 12;
const CHECKBOX_SIZE: i32 = 10;
const BUTTON_PAD_X: i32 = 2;
const BUTTON_PAD_Y: i32 = 1;

pub type Rgb = [u8; 3];

/// The fixed palette.
pub mod palette {
    use super::Rgb;
    pub const WHITE: Rgb = [255, 255, 255];
    pub const INK: Rgb = [34, 34, 34];
    pub const BORDER: Rgb = [90, 90, 90];
    pub const BUTTON_FACE: Rgb = [221, 221, 221];
    pub const LINK: Rgb = [0, 0, 139];
    pub const CHECK_MARK: Rgb = [40, 40, 40];
    pub const SELECTED: Rgb = [190, 215, 255];
    pub const HEADING: Rgb = [96, 0, 0];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("frame must be {FRAME_SIZE}x{FRAME_SIZE}, got {width}x{height}")]
    BadFrameSize { width: usize, height: usize },
    #[error("expected at most {history} frames, got {got}")]
    TooManyFrames { history: usize, got: usize },
    #[error("malformed PPM: {0}")]
    BadPpm(String),
}

/// Row-major RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("fnv1a32", &format_args!("{:08x}", fnv1a32(&self.pixels)))
            .finish()
    }
}

impl Frame {
    /// All-white 224×224 frame.
    pub fn white() -> Self {
        Self {
            width: FRAME_SIZE,
            height: FRAME_SIZE,
            pixels: vec![255; FRAME_SIZE * FRAME_SIZE * 3],
        }
    }

    /// Shared all-white frame used for history padding.
    pub fn shared_white() -> Arc<Frame> {
        static WHITE: OnceLock<Arc<Frame>> = OnceLock::new();
        WHITE.get_or_init(|| Arc::new(Frame::white())).clone()
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RenderError> {
        if pixels.len() != width * height * 3 {
            return Err(RenderError::BadPpm(format!(
                "{} bytes for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i32, y: i32, color: Rgb) {
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    /// True when every pixel outside the top-left content square is white.
    pub fn is_padded(&self) -> bool {
        (0..self.height).all(|y| {
            (0..self.width).all(|x| {
                (x < CONTENT_SIZE as usize && y < CONTENT_SIZE as usize) || self.pixel(x, y) == palette::WHITE
            })
        })
    }

    /// Binary PPM (`P6`, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 16);
        write!(out, "P6\n{} {}\n255\n", self.width, self.height).expect("writing to a Vec");
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, RenderError> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(RenderError::BadPpm("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(RenderError::BadPpm(format!("unsupported header {fields:?}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| RenderError::BadPpm(format!("bad dimension {s:?}")));
        let (width, height) = (parse(&fields[1])?, parse(&fields[2])?);
        let raster = bytes.get(pos..).unwrap_or_default();
        Frame::from_raw(width, height, raster.to_vec())
    }
}

// ---------------------------------------------------------------------------
// Layout

/// Border box of one element on the 160×160 canvas (right/bottom exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutBox {
    pub node_ref: Option<Ref>,
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

/// Boxes for every element node, in document pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub boxes: Vec<LayoutBox>,
    /// Set when some content extended past the canvas and was clipped.
    pub overflow_clipped: bool,
}

/// Inline-level tags; everything else stacks as a block.
pub fn is_inline(tag: &str) -> bool {
    matches!(tag, "a" | "span" | "t" | "button" | "input" | "option" | "label")
}

fn text_width(text: Option<&str>) -> i32 {
    text.map_or(0, |t| t.chars().count() as i32 * CHAR_WIDTH)
}

fn is_checkbox(node: &DomNode) -> bool {
    node.tag() == "input" && node.attr("type") == Some("checkbox")
}

struct Rect {
    left: i32,
    top: i32,
    right: i32,
    bottom: i32,
}

fn inline_padding(node: &DomNode) -> (i32, i32) {
    if node.tag() == "button" {
        (BUTTON_PAD_X, BUTTON_PAD_Y)
    } else {
        (0, 0)
    }
}

/// Intrinsic size of an inline element: own text run and children in one row.
fn inline_size(node: &DomNode) -> (i32, i32) {
    if node.tag() == "input" {
        return if is_checkbox(node) {
            (CHECKBOX_SIZE, CHECKBOX_SIZE)
        } else {
            (TEXT_INPUT_WIDTH, CONTROL_HEIGHT)
        };
    }
    let mut width = text_width(node.text());
    let mut height = if node.text().is_some() { LINE_HEIGHT } else { 0 };
    for child in node.children() {
        let (w, h) = inline_size(child);
        if width > 0 {
            width += MARGIN;
        }
        width += w;
        height = height.max(h);
    }
    let (px, py) = inline_padding(node);
    ((width + 2 * px).max(1), (height + 2 * py).max(1))
}

struct LayoutPass {
    raw: Vec<Rect>,
}

impl LayoutPass {
    fn push(&mut self, rect: Rect) -> usize {
        self.raw.push(rect);
        self.raw.len() - 1
    }

    /// Places an inline element with its top-left at (x, y).
    fn inline(&mut self, node: &DomNode, x: i32, y: i32) {
        let (w, h) = inline_size(node);
        self.push(Rect { left: x, top: y, right: x + w, bottom: y + h });
        let (px, py) = inline_padding(node);
        let mut cx = x + px + text_width(node.text());
        let mut first = node.text().is_none();
        for child in node.children() {
            if !first {
                cx += MARGIN;
            }
            first = false;
            self.inline(child, cx, y + py);
            cx += inline_size(child).0;
        }
    }

    /// Lays out a block's content; returns the y just past its content.
    fn block_content(&mut self, node: &DomNode, left: i32, top: i32, right: i32) -> i32 {
        let line_start = left + MARGIN;
        let content_right = right - MARGIN;
        let mut x = line_start;
        let mut y = top + MARGIN;
        let mut line_height = 0;

        if node.text().is_some() {
            x += text_width(node.text()) + MARGIN;
            line_height = LINE_HEIGHT;
        }
        for child in node.children() {
            if is_inline(child.tag()) {
                let (w, h) = inline_size(child);
                if x > line_start && x + w > content_right {
                    y += line_height + MARGIN;
                    x = line_start;
                    line_height = 0;
                }
                self.inline(child, x, y);
                x += w + MARGIN;
                line_height = line_height.max(h);
            } else {
                if line_height > 0 {
                    y += line_height + MARGIN;
                    x = line_start;
                    line_height = 0;
                }
                let slot = self.push(Rect { left: line_start, top: y, right: content_right, bottom: y });
                let bottom = self.block_content(child, line_start, y, content_right);
                self.raw[slot].bottom = bottom;
                y = bottom + MARGIN;
            }
        }
        if line_height > 0 {
            y += line_height + MARGIN;
        }
        y
    }
}

/// Vertical flow layout: blocks stack with 2px margins; inline elements flow
/// left to right and wrap at the canvas edge; text is 6px per character and
/// 10px tall. The body always covers the whole canvas.
pub fn layout(tree: &DomTree) -> Layout {
    let root = tree.root();
    let mut pass = LayoutPass { raw: Vec::new() };
    pass.push(Rect { left: 0, top: 0, right: CONTENT_SIZE, bottom: CONTENT_SIZE });
    pass.block_content(root, 0, 0, CONTENT_SIZE);

    // Raw rects are in pre-order; clamp each into its parent.
    let mut boxes = Vec::with_capacity(pass.raw.len());
    let mut overflow = false;
    let mut index = 0;
    clamp_into(root, &pass.raw, &mut index, None, &mut boxes, &mut overflow);
    Layout { boxes, overflow_clipped: overflow }
}

fn clamp_into(
    node: &DomNode,
    raw: &[Rect],
    index: &mut usize,
    parent: Option<LayoutBox>,
    out: &mut Vec<LayoutBox>,
    overflow: &mut bool,
) {
    let r = &raw[*index];
    *index += 1;
    let (pl, pt, pr, pb) = match parent {
        Some(p) => (p.left, p.top, p.right, p.bottom),
        None => (0, 0, CONTENT_SIZE, CONTENT_SIZE),
    };
    let left = r.left.clamp(pl, pr - 1);
    let top = r.top.clamp(pt, pb - 1);
    let right = r.right.clamp(left + 1, pr);
    let bottom = r.bottom.clamp(top + 1, pb);
    if r.right > CONTENT_SIZE || r.bottom > CONTENT_SIZE || node_overflows(r, pl, pt, pr, pb) {
        *overflow = true;
    }
    let b = LayoutBox { node_ref: node.node_ref(), left, top, right, bottom };
    out.push(b);
    for child in node.children() {
        clamp_into(child, raw, index, Some(b), out, overflow);
    }
}

fn node_overflows(r: &Rect, pl: i32, pt: i32, pr: i32, pb: i32) -> bool {
    r.left < pl || r.top < pt || r.right > pr || r.bottom > pb || r.right <= r.left || r.bottom <= r.top
}

// ---------------------------------------------------------------------------
// Painting

struct Canvas {
    frame: Frame,
}

impl Canvas {
    fn fill(&mut self, b: &LayoutBox, color: Rgb) {
        for y in b.top..b.bottom {
            for x in b.left..b.right {
                self.frame.put(x, y, color);
            }
        }
    }

    fn border(&mut self, b: &LayoutBox, color: Rgb) {
        for x in b.left..b.right {
            self.frame.put(x, b.top, color);
            self.frame.put(x, b.bottom - 1, color);
        }
        for y in b.top..b.bottom {
            self.frame.put(b.left, y, color);
            self.frame.put(b.right - 1, y, color);
        }
    }

    /// Draws `text` from (x, y), clipped to `clip`. Each character is a 5×7
    /// cell pattern taken from the bits of fnv1a32 of its UTF-8 bytes.
    fn text(&mut self, text: &str, x: i32, y: i32, clip: &LayoutBox, color: Rgb) {
        let mut buf = [0u8; 4];
        for (i, c) in text.chars().enumerate() {
            let bits = glyph_bits(c.encode_utf8(&mut buf).as_bytes());
            let cx = x + i as i32 * CHAR_WIDTH;
            for row in 0..7 {
                for col in 0..5 {
                    let bit = (row * 5 + col) % 32;
                    if bits >> bit & 1 == 0 {
                        continue;
                    }
                    let (px, py) = (cx + col, y + 1 + row);
                    if px >= clip.left && px < clip.right && py >= clip.top && py < clip.bottom {
                        self.frame.put(px, py, color);
                    }
                }
            }
        }
    }
}

fn glyph_bits(bytes: &[u8]) -> u32 {
    fnv1a32(bytes)
}

/// Renders the page area of `tree` into a padded 224×224 frame.
pub fn rasterize(tree: &DomTree) -> Frame {
    let layout = layout(tree);
    let mut canvas = Canvas { frame: Frame::white() };
    let mut index = 0;
    paint(tree.root(), &layout.boxes, &mut index, &mut canvas);
    canvas.frame
}

fn paint(node: &DomNode, boxes: &[LayoutBox], index: &mut usize, canvas: &mut Canvas) {
    let b = boxes[*index];
    *index += 1;
    let inline = is_inline(node.tag());
    let (tx, ty) = if inline { (b.left, b.top) } else { (b.left + MARGIN, b.top + MARGIN) };
    match node.tag() {
        "button" => {
            canvas.fill(&b, palette::BUTTON_FACE);
            canvas.border(&b, palette::BORDER);
            if let Some(t) = node.text() {
                canvas.text(t, b.left + BUTTON_PAD_X, b.top + BUTTON_PAD_Y, &b, palette::INK);
            }
        }
        "input" => {
            canvas.fill(&b, palette::WHITE);
            canvas.border(&b, palette::BORDER);
            let value = node.attr("value").unwrap_or_default();
            if is_checkbox(node) {
                if value == "True" {
                    let mark = LayoutBox {
                        node_ref: None,
                        left: (b.left + 2).min(b.right - 1),
                        top: (b.top + 2).min(b.bottom - 1),
                        right: (b.right - 2).max(b.left + 1),
                        bottom: (b.bottom - 2).max(b.top + 1),
                    };
                    canvas.fill(&mark, palette::CHECK_MARK);
                }
            } else if !value.is_empty() {
                let shown = if node.attr("type") == Some("password") {
                    "*".repeat(value.chars().count())
                } else {
                    value.to_string()
                };
                canvas.text(&shown, b.left + 2, b.top + 1, &b, palette::INK);
            }
        }
        "a" => {
            if let Some(t) = node.text() {
                canvas.text(t, tx, ty, &b, palette::LINK);
            }
            let underline = LayoutBox { top: b.bottom - 1, ..b };
            canvas.fill(&underline, palette::LINK);
        }
        "option" => {
            if node.attr("selected") == Some("True") {
                canvas.fill(&b, palette::SELECTED);
            }
            if let Some(t) = node.text() {
                canvas.text(t, tx, ty, &b, palette::INK);
            }
        }
        "h3" => {
            if let Some(t) = node.text() {
                canvas.text(t, tx, ty, &b, palette::HEADING);
            }
        }
        _ => {
            if let Some(t) = node.text() {
                canvas.text(t, tx, ty, &b, palette::INK);
            }
        }
    }
    for child in node.children() {
        paint(child, boxes, index, canvas);
    }
}

// ---------------------------------------------------------------------------
// Patches and tokens

/// Raw 16×16×3 pixel block, row-major.
pub type Patch = [u8; PATCH_BYTES];

/// 14×14 patches of one frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    patches: Vec<Patch>,
}

impl PatchGrid {
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

pub fn patchify(frame: &Frame) -> Result<PatchGrid, RenderError> {
    if frame.width != FRAME_SIZE || frame.height != FRAME_SIZE {
        return Err(RenderError::BadFrameSize { width: frame.width, height: frame.height });
    }
    let mut patches = Vec::with_capacity(PATCHES_PER_FRAME);
    for py in 0..PATCHES_PER_SIDE {
        for px in 0..PATCHES_PER_SIDE {
            let mut patch = [0u8; PATCH_BYTES];
            for row in 0..PATCH_SIZE {
                let src = ((py * PATCH_SIZE + row) * FRAME_SIZE + px * PATCH_SIZE) * 3;
                let dst = row * PATCH_SIZE * 3;
                patch[dst..dst + PATCH_SIZE * 3].copy_from_slice(&frame.pixels[src..src + PATCH_SIZE * 3]);
            }
            patches.push(patch);
        }
    }
    Ok(PatchGrid { patches })
}

/// Inverse of [`patchify`].
pub fn unpatchify(grid: &PatchGrid) -> Result<Frame, RenderError> {
    if grid.patches.len() != PATCHES_PER_FRAME {
        return Err(RenderError::BadFrameSize {
            width: grid.patches.len(),
            height: 1,
        });
    }
    let mut frame = Frame::white();
    for (i, patch) in grid.patches.iter().enumerate() {
        let (py, px) = (i / PATCHES_PER_SIDE, i % PATCHES_PER_SIDE);
        for row in 0..PATCH_SIZE {
            let dst = ((py * PATCH_SIZE + row) * FRAME_SIZE + px * PATCH_SIZE) * 3;
            let src = row * PATCH_SIZE * 3;
            frame.pixels[dst..dst + PATCH_SIZE * 3].copy_from_slice(&patch[src..src + PATCH_SIZE * 3]);
        }
    }
    Ok(frame)
}

/// Patch tokens of a frame window, oldest frame first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisualTokens {
    history: usize,
    tokens: Vec<Patch>,
}

impl VisualTokens {
    pub fn history(&self) -> usize {
        self.history
    }

    pub fn tokens(&self) -> &[Patch] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Stacks the last frames (most recent last) into `history × 196` tokens,
/// left-padding with white frames when fewer than `history` exist.
pub fn temporal_stack<F: AsRef<Frame>>(frames: &[F], history: usize) -> Result<VisualTokens, RenderError> {
    if frames.len() > history {
        return Err(RenderError::TooManyFrames { history, got: frames.len() });
    }
    let mut tokens = Vec::with_capacity(history * PATCHES_PER_FRAME);
    let white = Frame::white();
    for _ in frames.len()..history {
        tokens.extend(patchify(&white)?.patches);
    }
    for frame in frames {
        tokens.extend(patchify(frame.as_ref())?.patches);
    }
    Ok(VisualTokens { history, tokens })
}

impl AsRef<Frame> for Frame {
    fn as_ref(&self) -> &Frame {
        self
    }
}
