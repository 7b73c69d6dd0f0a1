//! Bundled synthetic dataset generator. Scenes carry every modality the
//! chains need — colored rectangles with boxes and a semantic mask, a
//! smooth metric depth field, and analytic sphere-over-plane normals — so
//! the full oracle suite runs with no external data or network.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{BoxRecord, BoxesLine, LabelLine, PointLine};
use super::HarnessError;
use crate::core::{PixelBox, RasterSize};
use crate::raster::{
    write_image_png, write_mask_png, write_pfm, FloatRaster, ImageBuffer, IndexMask,
    DEFAULT_IGNORE_INDEX,
};

/// Class palette; names are single words so option matching is unambiguous.
const CLASS_NAMES: &[&str] = &[
    "sky", "grass", "water", "sand", "rock", "forest", "road", "building", "snow", "cloud",
    "metal", "brick", "soil", "moss", "coral", "ice",
];

const CLASS_COLORS: &[[u8; 3]] = &[
    [120, 180, 240],
    [60, 170, 70],
    [40, 90, 200],
    [220, 200, 140],
    [130, 125, 120],
    [20, 100, 40],
    [90, 90, 95],
    [180, 120, 80],
    [240, 240, 245],
    [200, 210, 220],
    [160, 165, 175],
    [165, 70, 50],
    [110, 80, 55],
    [80, 130, 60],
    [235, 130, 120],
    [190, 225, 235],
];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub images: usize,
    pub size: RasterSize,
    pub classes: usize,
    pub seed: u64,
    /// Minimum rectangle area as a fraction of the image.
    pub min_box_fraction: f64,
    pub max_boxes: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            images: 50,
            size: RasterSize::new(64, 64),
            classes: 8,
            seed: 0,
            min_box_fraction: 0.05,
            max_boxes: 3,
        }
    }
}

/// One generated scene, before or without persistence.
pub struct Scene {
    pub id: String,
    pub image: ImageBuffer,
    pub mask: IndexMask,
    pub boxes: Vec<(u16, PixelBox)>,
    pub label: u16,
    pub point: crate::core::Point,
    pub depth: FloatRaster,
    pub normals: [FloatRaster; 3],
}

/// Deterministically generate scene `index` of a configuration.
pub fn generate_scene(config: &SyntheticConfig, index: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x5157_ab1e_0000 + index as u64));
    let size = config.size;
    let (w, h) = (size.width, size.height);
    let classes = config.classes.clamp(2, CLASS_NAMES.len());

    // Background plus non-overlapping rectangles, each a distinct class.
    let background = rng.gen_range(0..classes) as u16;
    let mut image = ImageBuffer::new(size, shade(CLASS_COLORS[background as usize], &mut rng));
    let mut mask = IndexMask::new(size, background);
    let lighting = rng.gen_range(60.0..110.0f32);
    let n_boxes = rng.gen_range(1..=config.max_boxes);
    let mut remaining: Vec<u16> = (0..classes as u16).filter(|&c| c != background).collect();
    let mut boxes: Vec<(u16, PixelBox)> = Vec::new();
    let min_area = (config.min_box_fraction * size.pixels() as f64).ceil() as u64;
    'placement: for _ in 0..n_boxes {
        if remaining.is_empty() {
            break;
        }
        let class = remaining.remove(rng.gen_range(0..remaining.len()));
        for _attempt in 0..40 {
            let bw = rng.gen_range(w / 5..=w / 2).max(2);
            let bh = rng.gen_range(h / 5..=h / 2).max(2);
            if (bw as u64 * bh as u64) < min_area {
                continue;
            }
            let x0 = rng.gen_range(0..=w - bw);
            let y0 = rng.gen_range(0..=h - bh);
            let candidate = PixelBox::new(x0, y0, x0 + bw, y0 + bh).unwrap();
            if boxes.iter().any(|(_, b)| b.intersects(&candidate)) {
                continue;
            }
            let color = shade(CLASS_COLORS[class as usize], &mut rng);
            for y in candidate.y_min..candidate.y_max {
                for x in candidate.x_min..candidate.x_max {
                    image.set(x, y, color);
                    mask.set(x, y, class);
                }
            }
            boxes.push((class, candidate));
            continue 'placement;
        }
    }
    boxes.sort_by_key(|(class, _)| *class);

    // Illumination gradient plus pixel noise: superpixel boundaries stop
    // snapping perfectly to the class edges, so the majority-fill ceiling is
    // below 1 at coarse granularity and rises with k.
    for y in 0..h {
        for x in 0..w {
            let falloff = ((x + y) as f32 / (w + h) as f32 - 0.5) * lighting;
            let noise = rng.gen_range(-22i16..=22);
            let px = image.get(x, y).map(|c| {
                // squash contrast toward mid-gray before lighting
                let c = 128.0 + (c as f32 - 128.0) * 0.55;
                (c as i16 + falloff as i16 + noise).clamp(0, 255) as u8
            });
            image.set(x, y, px);
        }
    }

    // Grouping query point: center of the first rectangle (or image center).
    let point = boxes
        .first()
        .map(|(_, b)| {
            crate::core::Point::new(b.x_min + b.width() / 2, b.y_min + b.height() / 2)
        })
        .unwrap_or(crate::core::Point::new(w / 2, h / 2));

    // Smooth positive depth in meters.
    let (ax, ay) = (rng.gen_range(0.5..1.5f32), rng.gen_range(0.5..1.5f32));
    let (gx, gy) = (rng.gen_range(1.5..4.0f32), rng.gen_range(0.5..2.5f32));
    let mut depth = FloatRaster::new(size, 0.0);
    for y in 0..h {
        for x in 0..w {
            let u = x as f32 / w as f32;
            let v = y as f32 / h as f32;
            let value = 2.0
                + gx * u
                + gy * v
                + 0.5 * (std::f32::consts::TAU * u * ax).sin() * (std::f32::consts::TAU * v * ay).cos();
            depth.set(x, y, value.max(0.2));
        }
    }

    // Normals: a large sphere cap over a tilted plane.
    let cx = rng.gen_range(0.3..0.7) * w as f32;
    let cy = rng.gen_range(0.3..0.7) * h as f32;
    let radius = rng.gen_range(0.3..0.45) * w.min(h) as f32;
    let tilt_x = rng.gen_range(-0.4..0.4f32);
    let tilt_y = rng.gen_range(-0.4..0.4f32);
    let plane_norm = (tilt_x * tilt_x + tilt_y * tilt_y + 1.0).sqrt();
    let mut normals = [
        FloatRaster::new(size, 0.0),
        FloatRaster::new(size, 0.0),
        FloatRaster::new(size, 0.0),
    ];
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f32 - cx) / radius;
            let dy = (y as f32 - cy) / radius;
            let rr = dx * dx + dy * dy;
            let n = if rr < 1.0 {
                [dx, -dy, (1.0 - rr).sqrt()]
            } else {
                [tilt_x / plane_norm, tilt_y / plane_norm, 1.0 / plane_norm]
            };
            for (axis, raster) in normals.iter_mut().enumerate() {
                raster.set(x, y, n[axis]);
            }
        }
    }

    Scene {
        id: format!("{index:04}"),
        image,
        mask,
        boxes,
        label: background,
        point,
        depth,
        normals,
    }
}

fn shade(base: [u8; 3], rng: &mut ChaCha8Rng) -> [u8; 3] {
    let jitter = rng.gen_range(-12i16..=12);
    base.map(|c| (c as i16 + jitter).clamp(0, 255) as u8)
}

/// Vocabulary text for `classes` classes.
pub fn vocabulary(classes: usize) -> String {
    let classes = classes.clamp(2, CLASS_NAMES.len());
    let mut out = CLASS_NAMES[..classes].join("\n");
    out.push('\n');
    out
}

/// Write a full dataset in the documented layout.
pub fn generate_dataset(config: &SyntheticConfig, out_dir: &Path) -> Result<(), HarnessError> {
    for sub in [
        "images",
        "masks",
        "depth",
        "normals_x",
        "normals_y",
        "normals_z",
    ] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    std::fs::write(out_dir.join("vocab.txt"), vocabulary(config.classes))?;
    let classes = config.classes.clamp(2, CLASS_NAMES.len());

    let mut boxes_lines = Vec::with_capacity(config.images);
    let mut label_lines = Vec::with_capacity(config.images);
    let mut point_lines = Vec::with_capacity(config.images);
    for index in 0..config.images {
        let scene = generate_scene(config, index);
        write_image_png(&scene.image, &out_dir.join("images").join(format!("{}.png", scene.id)))?;
        // masks use the shared sentinel even though scenes never emit it
        let mask = IndexMask::from_labels(
            scene.mask.size(),
            scene.mask.labels().to_vec(),
            DEFAULT_IGNORE_INDEX,
        );
        write_mask_png(&mask, &out_dir.join("masks").join(format!("{}.png", scene.id)))?;
        write_pfm(&scene.depth, &out_dir.join("depth").join(format!("{}.pfm", scene.id)))?;
        for (axis, name) in ["normals_x", "normals_y", "normals_z"].iter().enumerate() {
            write_pfm(
                &scene.normals[axis],
                &out_dir.join(name).join(format!("{}.pfm", scene.id)),
            )?;
        }
        boxes_lines.push(serde_json::to_string(&BoxesLine {
            id: scene.id.clone(),
            boxes: scene
                .boxes
                .iter()
                .map(|(class, b)| BoxRecord {
                    class: CLASS_NAMES[*class as usize].to_string(),
                    x_min: b.x_min,
                    y_min: b.y_min,
                    x_max: b.x_max,
                    y_max: b.y_max,
                })
                .collect(),
        })
        .expect("serializable"));
        label_lines.push(
            serde_json::to_string(&LabelLine {
                id: scene.id.clone(),
                class: CLASS_NAMES[(scene.label as usize).min(classes - 1)].to_string(),
            })
            .expect("serializable"),
        );
        point_lines.push(
            serde_json::to_string(&PointLine {
                id: scene.id.clone(),
                x: scene.point.x,
                y: scene.point.y,
            })
            .expect("serializable"),
        );
    }
    std::fs::write(out_dir.join("boxes.jsonl"), boxes_lines.join("\n") + "\n")?;
    std::fs::write(out_dir.join("labels.jsonl"), label_lines.join("\n") + "\n")?;
    std::fs::write(out_dir.join("points.jsonl"), point_lines.join("\n") + "\n")?;
    Ok(())
}
