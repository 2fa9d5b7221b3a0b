//! Deterministic synthetic tour worlds, plus ingestion of user frames.
//!
//! The world is a ring of unit circumference split into `num_rooms` equal
//! arcs. A frame rendered at position `p in [0, 1)` shows the room covering
//! `p`, with the exact pixel recipe below; a tour of `N` frames samples
//! positions `i / N`, so every generated dataset carries ground-truth
//! geography that evaluation can score against.
//!
//! # Pixel recipe
//!
//! Room `r` draws its texture from a SplitMix64 stream seeded with
//! `mix(seed ^ mix(rep + 1))`, where `rep` is the smallest room index in
//! `r`'s alias group (rooms in one group therefore share a texture). The
//! stream yields, in order: one base level in `[0.15, 0.85]` and one stripe
//! phase in `[0, 1)` per channel, then a stripe frequency in `{1, 2, 3}`.
//! Each room also has a private brightness offset of
//! `0.16 * (u - 0.5), u = first uniform of mix(seed ^ mix(0x5EED + room))`,
//! so aliased rooms are near-identical (the offset keeps their pixel
//! distance a few percent of an ordinary room pair's) rather than equal.
//!
//! With amplitude `A = 0.9`, shade depth `S = 0.2`, and stripe drift
//! `num_rooms` cycles per lap (which keeps stripes phase-aligned between
//! aliased rooms and continuous across the ring seam):
//!
//! ```text
//! value(row, col, ch) = base[ch]
//!                     + A * sin(2π * (freq * col / width + phase[ch] + p * num_rooms))
//!                     + S * (row / (height - 1) - 0.5)      (0 when height == 1)
//!                     + offset(room)
//! ```
//!
//! Within `transition_width` of a room boundary the value is blended with
//! the neighboring room's recipe at the same `p` (linear ramp, 50/50 at the
//! boundary itself), and the result is clamped to `[0, 1]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::netpbm;
use crate::rng::{mix, SplitMix64};

const AMPLITUDE: f64 = 0.9;
const SHADE_DEPTH: f64 = 0.2;
const ROOM_OFFSET_SPAN: f64 = 0.16;
const ROOM_OFFSET_TAG: u64 = 0x5EED;

/// Synthetic world shape and determinism knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub num_rooms: usize,
    pub frames: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    /// Half-width of the cross-fade zone around each room boundary, in ring
    /// units; must stay below half a room span.
    pub transition_width: f64,
    /// Room pairs forced to share a texture stream (distinct places with
    /// the same appearance).
    pub alias_pairs: Vec<(usize, usize)>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_rooms: 4,
            frames: 1000,
            image_height: 16,
            image_width: 16,
            channels: 3,
            transition_width: 0.02,
            alias_pairs: Vec::new(),
            seed: 1,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_rooms == 0 {
            return Err(Error::config("num_rooms", "must be at least 1"));
        }
        if self.frames < 2 {
            return Err(Error::config("frames", "need at least 2 frames"));
        }
        if self.image_height == 0 {
            return Err(Error::config("image_height", "must be at least 1"));
        }
        if self.image_width == 0 {
            return Err(Error::config("image_width", "must be at least 1"));
        }
        if self.channels == 0 {
            return Err(Error::config("channels", "must be at least 1"));
        }
        let limit = 0.5 / self.num_rooms as f64;
        if !(0.0..limit).contains(&self.transition_width) {
            return Err(Error::config(
                "transition_width",
                format!("must lie in [0, {limit}), got {}", self.transition_width),
            ));
        }
        for &(a, b) in &self.alias_pairs {
            if a >= self.num_rooms || b >= self.num_rooms {
                return Err(Error::config(
                    "alias_pairs",
                    format!("pair ({a}, {b}) references a room >= {}", self.num_rooms),
                ));
            }
            if a == b {
                return Err(Error::config("alias_pairs", format!("pair ({a}, {b}) aliases a room with itself")));
            }
        }
        Ok(())
    }

    /// Smallest room index in `room`'s alias group.
    fn alias_representative(&self, room: usize) -> usize {
        let mut rep: Vec<usize> = (0..self.num_rooms).collect();
        // Tiny union-find; room counts are small.
        fn find(rep: &mut Vec<usize>, i: usize) -> usize {
            if rep[i] != i {
                let root = find(rep, rep[i]);
                rep[i] = root;
            }
            rep[i]
        }
        for &(a, b) in &self.alias_pairs {
            let ra = find(&mut rep, a);
            let rb = find(&mut rep, b);
            let lo = ra.min(rb);
            rep[ra] = lo;
            rep[rb] = lo;
        }
        find(&mut rep, room)
    }
}

struct RoomStyle {
    base: Vec<f64>,
    phase: Vec<f64>,
    freq: f64,
    offset: f64,
}

fn room_style(cfg: &WorldConfig, room: usize) -> RoomStyle {
    let rep = cfg.alias_representative(room);
    let mut rng = SplitMix64::new(mix(cfg.seed ^ mix(rep as u64 + 1)));
    let mut base = Vec::with_capacity(cfg.channels);
    let mut phase = Vec::with_capacity(cfg.channels);
    for _ in 0..cfg.channels {
        base.push(rng.next_range(0.15, 0.85));
        phase.push(rng.next_f64());
    }
    let freq = (1 + rng.next_u64() % 3) as f64;

    let mut own = SplitMix64::new(mix(cfg.seed ^ mix(ROOM_OFFSET_TAG + room as u64)));
    let offset = ROOM_OFFSET_SPAN * (own.next_f64() - 0.5);
    RoomStyle {
        base,
        phase,
        freq,
        offset,
    }
}

fn style_value(cfg: &WorldConfig, style: &RoomStyle, p: f64, row: usize, col: usize, ch: usize) -> f64 {
    let stripe = (std::f64::consts::TAU
        * (style.freq * col as f64 / cfg.image_width as f64
            + style.phase[ch]
            + p * cfg.num_rooms as f64))
        .sin();
    let shade = if cfg.image_height > 1 {
        SHADE_DEPTH * (row as f64 / (cfg.image_height - 1) as f64 - 0.5)
    } else {
        0.0
    };
    style.base[ch] + AMPLITUDE * stripe + shade + style.offset
}

/// Renders the frame seen at ring position `p`.
pub fn render_frame(cfg: &WorldConfig, p: f64) -> Result<Image> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config("p", format!("position must lie in [0, 1), got {p}")));
    }
    let rooms = cfg.num_rooms as f64;
    let room = ((p * rooms) as usize).min(cfg.num_rooms - 1);
    let style = room_style(cfg, room);

    // Cross-fade weight toward a neighboring room, if p sits near a boundary.
    let room_start = room as f64 / rooms;
    let room_end = (room + 1) as f64 / rooms;
    let mut blend: Option<(RoomStyle, f64)> = None;
    if cfg.transition_width > 0.0 {
        let to_start = p - room_start;
        let to_end = room_end - p;
        if to_start < cfg.transition_width {
            let other = (room + cfg.num_rooms - 1) % cfg.num_rooms;
            let t = 0.5 * (1.0 - to_start / cfg.transition_width);
            blend = Some((room_style(cfg, other), t));
        } else if to_end < cfg.transition_width {
            let other = (room + 1) % cfg.num_rooms;
            let t = 0.5 * (1.0 - to_end / cfg.transition_width);
            blend = Some((room_style(cfg, other), t));
        }
    }

    let mut image = Image::zeros(cfg.image_height, cfg.image_width, cfg.channels);
    for row in 0..cfg.image_height {
        for col in 0..cfg.image_width {
            for ch in 0..cfg.channels {
                let own = style_value(cfg, &style, p, row, col, ch);
                let value = match &blend {
                    Some((other, t)) => {
                        (1.0 - t) * own + t * style_value(cfg, other, p, row, col, ch)
                    }
                    None => own,
                };
                image.set(row, col, ch, value.clamp(0.0, 1.0));
            }
        }
    }
    Ok(image)
}

/// Where a dataset's positions came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Rendered by this crate; positions are ground truth.
    Generated,
    /// Read from user files; positions are ordinal only.
    Ingested,
}

/// One tour frame: its index, ring position, and pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct TourFrame {
    pub index: usize,
    pub position: f64,
    pub image: Image,
}

/// An ordered tour with provenance and, for generated tours, the config
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TourDataset {
    pub world: Option<WorldConfig>,
    pub provenance: Provenance,
    pub frames: Vec<TourFrame>,
}

impl TourDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn images(&self) -> Vec<Image> {
        self.frames.iter().map(|f| f.image.clone()).collect()
    }

    pub fn image(&self, index: usize) -> &Image {
        &self.frames[index].image
    }

    pub fn image_height(&self) -> usize {
        self.frames[0].image.height()
    }

    pub fn image_width(&self) -> usize {
        self.frames[0].image.width()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].image.channels()
    }
}

/// Renders `frames` frames at positions `i / frames`.
pub fn generate_tour(cfg: &WorldConfig) -> Result<TourDataset> {
    cfg.validate()?;
    let mut frames = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let position = i as f64 / cfg.frames as f64;
        frames.push(TourFrame {
            index: i,
            position,
            image: render_frame(cfg, position)?,
        });
    }
    Ok(TourDataset {
        world: Some(cfg.clone()),
        provenance: Provenance::Generated,
        frames,
    })
}

/// Standard bilinear resampling with half-pixel centers; channels resample
/// independently and the output is clamped to `[0, 1]`.
pub fn resize_bilinear(image: &Image, target_height: usize, target_width: usize) -> Image {
    assert!(target_height >= 1 && target_width >= 1, "target dims must be >= 1");
    if target_height == image.height() && target_width == image.width() {
        return image.clone();
    }
    let mut out = Image::zeros(target_height, target_width, image.channels());
    let scale_r = image.height() as f64 / target_height as f64;
    let scale_c = image.width() as f64 / target_width as f64;
    for row in 0..target_height {
        let src_r = ((row as f64 + 0.5) * scale_r - 0.5).clamp(0.0, (image.height() - 1) as f64);
        let r0 = src_r.floor() as usize;
        let r1 = (r0 + 1).min(image.height() - 1);
        let fr = src_r - r0 as f64;
        for col in 0..target_width {
            let src_c =
                ((col as f64 + 0.5) * scale_c - 0.5).clamp(0.0, (image.width() - 1) as f64);
            let c0 = src_c.floor() as usize;
            let c1 = (c0 + 1).min(image.width() - 1);
            let fc = src_c - c0 as f64;
            for ch in 0..image.channels() {
                let top = (1.0 - fc) * image.get(r0, c0, ch) + fc * image.get(r0, c1, ch);
                let bottom = (1.0 - fc) * image.get(r1, c0, ch) + fc * image.get(r1, c1, ch);
                out.set(row, col, ch, ((1.0 - fr) * top + fr * bottom).clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Reads a directory of PPM/PGM frames (lexicographic filename order),
/// resizes each to `target_height x target_width`, and assigns ordinal
/// positions `i / N`. All source frames must share one format and size.
pub fn ingest_frames(dir: &Path, target_height: usize, target_width: usize) -> Result<TourDataset> {
    if target_height == 0 || target_width == 0 {
        return Err(Error::config("target_dims", "must be at least 1x1"));
    }
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                Some(ref ext) if ext == "ppm" || ext == "pgm"
            )
        })
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    if files.len() < 2 {
        return Err(Error::config(
            "directory",
            format!("{} holds {} readable frames, need at least 2", dir.display(), files.len()),
        ));
    }

    let mut frames = Vec::with_capacity(files.len());
    let mut source_shape: Option<(usize, usize, usize)> = None;
    let total = files.len();
    for (i, file) in files.into_iter().enumerate() {
        let image = netpbm::read_file(&file)?;
        let shape = (image.height(), image.width(), image.channels());
        match source_shape {
            None => source_shape = Some(shape),
            Some(expected) if expected != shape => {
                return Err(Error::malformed(
                    file.display().to_string(),
                    format!("source shape {shape:?} differs from first frame {expected:?}"),
                ));
            }
            _ => {}
        }
        frames.push(TourFrame {
            index: i,
            position: i as f64 / total as f64,
            image: resize_bilinear(&image, target_height, target_width),
        });
    }
    Ok(TourDataset {
        world: None,
        provenance: Provenance::Ingested,
        frames,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    height: usize,
    width: usize,
    channels: usize,
    frames: usize,
    /// World seed for generated tours; 0 for ingested frames.
    seed: u64,
    provenance: Provenance,
    positions: Vec<f64>,
    raw: String,
    world: Option<WorldConfig>,
}

const MANIFEST_VERSION: u32 = 1;

/// Writes `<path>` as a JSON manifest and a sibling raw file (same stem,
/// `.raw` extension) holding little-endian f64 pixels, frame-major.
pub fn save_dataset(dataset: &TourDataset, manifest_path: &Path) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::config("dataset", "refusing to save an empty dataset"));
    }
    let raw_name = manifest_path
        .file_stem()
        .map(|s| format!("{}.raw", s.to_string_lossy()))
        .ok_or_else(|| Error::config("path", "manifest path needs a file name"))?;
    let raw_path = manifest_path.with_file_name(&raw_name);

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        height: dataset.image_height(),
        width: dataset.image_width(),
        channels: dataset.channels(),
        frames: dataset.len(),
        seed: dataset.world.as_ref().map(|w| w.seed).unwrap_or(0),
        provenance: dataset.provenance,
        positions: dataset.frames.iter().map(|f| f.position).collect(),
        raw: raw_name,
        world: dataset.world.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut raw = Vec::with_capacity(dataset.len() * dataset.image(0).pixel_count() * 8);
    for frame in &dataset.frames {
        for v in frame.image.data() {
            raw.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::fsio::write_atomic(&raw_path, &raw)?;
    crate::fsio::write_atomic(manifest_path, json.as_bytes())
}

pub fn load_dataset(manifest_path: &Path) -> Result<TourDataset> {
    let name = manifest_path.display().to_string();
    let json =
        std::fs::read_to_string(manifest_path).map_err(|e| Error::io(name.clone(), e))?;
    let manifest: Manifest = serde_json::from_str(&json).map_err(|e| Error::Json {
        path: name.clone(),
        message: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            path: name,
            found: manifest.version,
            supported: MANIFEST_VERSION,
        });
    }
    if manifest.positions.len() != manifest.frames {
        return Err(Error::malformed(
            &name,
            format!(
                "{} positions for {} frames",
                manifest.positions.len(),
                manifest.frames
            ),
        ));
    }

    let raw_path = manifest_path.with_file_name(&manifest.raw);
    let raw_name = raw_path.display().to_string();
    let raw = std::fs::read(&raw_path).map_err(|e| Error::io(raw_name.clone(), e))?;
    let per_frame = manifest.height * manifest.width * manifest.channels;
    let expected = manifest.frames as u64 * per_frame as u64 * 8;
    if (raw.len() as u64) < expected {
        return Err(Error::Truncated {
            path: raw_name,
            expected,
            actual: raw.len() as u64,
        });
    }
    if raw.len() as u64 > expected {
        return Err(Error::malformed(
            &raw_name,
            format!("{} trailing bytes", raw.len() as u64 - expected),
        ));
    }

    let mut frames = Vec::with_capacity(manifest.frames);
    for i in 0..manifest.frames {
        let start = i * per_frame * 8;
        let data: Vec<f64> = raw[start..start + per_frame * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        frames.push(TourFrame {
            index: i,
            position: manifest.positions[i],
            image: Image::from_vec(manifest.height, manifest.width, manifest.channels, data)?,
        });
    }
    Ok(TourDataset {
        world: manifest.world,
        provenance: manifest.provenance,
        frames,
    })
}
