//! On-disk dataset layout:
//!
//! ```text
//! dataset/
//!   vocab.txt            one class name per line, line number = id
//!   images/*.png|jpg     RGB inputs
//!   masks/*.png          semantic index masks (16-bit gray)
//!   depth/*.pfm          metric depth in meters
//!   normals_x/*.pfm      per-axis normal components in [-1, 1]
//!   normals_y/*.pfm
//!   normals_z/*.pfm
//!   boxes.jsonl          {"id", "boxes": [{"class", "x_min", ...}]}
//!   labels.jsonl         {"id", "class"} classification ground truth
//!   points.jsonl         {"id", "x", "y"} grouping query points
//! ```
//!
//! A specialist's predictions use the same layout (minus `images/`), so the
//! specialist-constrained baseline loads through this module too.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backend::{BackendError, GroundTruthSource, ImageGroundTruth};
use crate::core::{ClassVocabulary, LabeledBox, PixelBox, Point};
use crate::raster::{read_image, read_mask_png, read_pfm, BinaryMask, ImageBuffer, IndexMask};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxRecord {
    pub class: String,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxesLine {
    pub id: String,
    pub boxes: Vec<BoxRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelLine {
    pub id: String,
    pub class: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointLine {
    pub id: String,
    pub x: u32,
    pub y: u32,
}

pub struct Dataset {
    root: PathBuf,
    vocab: Arc<ClassVocabulary>,
    ids: Vec<String>,
    image_files: HashMap<String, PathBuf>,
    boxes: HashMap<String, Vec<LabeledBox>>,
    labels: HashMap<String, u16>,
    points: HashMap<String, Point>,
    gt_cache: Mutex<HashMap<String, Arc<ImageGroundTruth>>>,
}

impl Dataset {
    /// Load the index of a dataset; rasters are read lazily per image.
    /// `vocab_override` replaces `<root>/vocab.txt`.
    pub fn load(root: &Path, vocab_override: Option<&Path>) -> Result<Self, HarnessError> {
        if !root.is_dir() {
            return Err(HarnessError::MissingPath(root.to_path_buf()));
        }
        let vocab_path = vocab_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| root.join("vocab.txt"));
        let vocab = Arc::new(ClassVocabulary::from_file(&vocab_path)?);

        let mut ids = Vec::new();
        let mut image_files = HashMap::new();
        let images_dir = root.join("images");
        if images_dir.is_dir() {
            for entry in std::fs::read_dir(&images_dir)? {
                let path = entry?.path();
                let ext = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(str::to_lowercase);
                if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                    let id = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .ok_or_else(|| HarnessError::MissingPath(path.clone()))?
                        .to_string();
                    image_files.insert(id.clone(), path);
                    ids.push(id);
                }
            }
        }
        ids.sort();

        let mut dataset = Self {
            root: root.to_path_buf(),
            vocab,
            ids,
            image_files,
            boxes: HashMap::new(),
            labels: HashMap::new(),
            points: HashMap::new(),
            gt_cache: Mutex::new(HashMap::new()),
        };
        dataset.load_jsonl_indexes()?;
        Ok(dataset)
    }

    fn load_jsonl_indexes(&mut self) -> Result<(), HarnessError> {
        for line in read_jsonl::<BoxesLine>(&self.root.join("boxes.jsonl"))? {
            let mut out = Vec::with_capacity(line.boxes.len());
            for b in line.boxes {
                let class = self.vocab.id_of(&b.class).ok_or_else(|| {
                    HarnessError::UnknownClassName {
                        class: b.class.clone(),
                        image_id: line.id.clone(),
                    }
                })?;
                out.push(LabeledBox::new(
                    PixelBox::new(b.x_min, b.y_min, b.x_max, b.y_max)?,
                    class,
                    1.0,
                ));
            }
            self.boxes.insert(line.id, out);
        }
        for line in read_jsonl::<LabelLine>(&self.root.join("labels.jsonl"))? {
            let class =
                self.vocab
                    .id_of(&line.class)
                    .ok_or_else(|| HarnessError::UnknownClassName {
                        class: line.class.clone(),
                        image_id: line.id.clone(),
                    })?;
            self.labels.insert(line.id, class);
        }
        for line in read_jsonl::<PointLine>(&self.root.join("points.jsonl"))? {
            self.points.insert(line.id, Point::new(line.x, line.y));
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn vocab(&self) -> Arc<ClassVocabulary> {
        self.vocab.clone()
    }

    /// Sorted image ids.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn point(&self, id: &str) -> Option<Point> {
        self.points.get(id).copied()
    }

    pub fn boxes(&self, id: &str) -> &[LabeledBox] {
        self.boxes.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn image(&self, id: &str) -> Result<ImageBuffer, HarnessError> {
        let path = self
            .image_files
            .get(id)
            .ok_or_else(|| HarnessError::UnknownImage(id.to_string()))?;
        Ok(read_image(path)?)
    }

    /// The (lazily loaded, cached) ground truth bundle for one image.
    pub fn ground_truth(&self, id: &str) -> Result<Arc<ImageGroundTruth>, HarnessError> {
        if let Some(found) = self.gt_cache.lock().unwrap().get(id) {
            return Ok(found.clone());
        }
        let mask_path = self.root.join("masks").join(format!("{id}.png"));
        let mask = if mask_path.is_file() {
            Some(read_mask_png(&mask_path, &self.vocab)?)
        } else {
            None
        };
        let depth_path = self.root.join("depth").join(format!("{id}.pfm"));
        let depth = if depth_path.is_file() {
            Some(read_pfm(&depth_path)?)
        } else {
            None
        };
        let mut normals = None;
        let nx = self.root.join("normals_x").join(format!("{id}.pfm"));
        if nx.is_file() {
            let ny = self.root.join("normals_y").join(format!("{id}.pfm"));
            let nz = self.root.join("normals_z").join(format!("{id}.pfm"));
            normals = Some([read_pfm(&nx)?, read_pfm(&ny)?, read_pfm(&nz)?]);
        }
        let instance = match (self.points.get(id), &mask) {
            (Some(&point), Some(mask)) => Some(instance_at(mask, point)),
            _ => None,
        };
        let gt = Arc::new(ImageGroundTruth {
            label: self.labels.get(id).copied(),
            boxes: self.boxes.get(id).cloned().unwrap_or_default(),
            mask,
            instance,
            depth,
            normals,
        });
        self.gt_cache
            .lock()
            .unwrap()
            .insert(id.to_string(), gt.clone());
        Ok(gt)
    }
}

/// Grouping ground truth: the 4-connected component of the semantic mask
/// class containing the query point.
pub fn instance_at(mask: &IndexMask, point: Point) -> BinaryMask {
    let size = mask.size();
    let mut out = BinaryMask::new(size);
    if !size.contains(point) {
        return out;
    }
    let target = mask.get(point.x, point.y);
    let mut stack = vec![(point.x, point.y)];
    out.set(point.x, point.y, true);
    while let Some((x, y)) = stack.pop() {
        for (nx, ny) in [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ] {
            if nx < size.width && ny < size.height && !out.get(nx, ny) && mask.get(nx, ny) == target
            {
                out.set(nx, ny, true);
                stack.push((nx, ny));
            }
        }
    }
    out
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| HarnessError::Jsonl {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Adapter exposing a dataset as an answer source for grounded backends.
pub struct DatasetSource(pub Arc<Dataset>);

impl GroundTruthSource for DatasetSource {
    fn ground_truth(&self, image_id: &str) -> Result<Arc<ImageGroundTruth>, BackendError> {
        self.0.ground_truth(image_id).map_err(|e| {
            BackendError::Transport(format!("ground truth for {image_id}: {e}"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;
    use crate::raster::{write_mask_png, DEFAULT_IGNORE_INDEX};

    #[test]
    fn instance_component_respects_connectivity() {
        // Two blobs of class 1 separated by class 0.
        let mut mask = IndexMask::new(RasterSize::new(7, 3), 0);
        for x in 0..2 {
            mask.set(x, 1, 1);
        }
        for x in 4..7 {
            mask.set(x, 1, 1);
        }
        let inst = instance_at(&mask, Point::new(5, 1));
        assert_eq!(inst.count(), 3);
        assert!(inst.get(4, 1) && inst.get(6, 1));
        assert!(!inst.get(0, 1));
    }

    #[test]
    fn dataset_loads_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("images")).unwrap();
        std::fs::create_dir_all(root.join("masks")).unwrap();
        std::fs::write(root.join("vocab.txt"), "sky\ngrass\n").unwrap();
        let img = ImageBuffer::new(RasterSize::new(8, 6), [1, 2, 3]);
        crate::raster::write_image_png(&img, &root.join("images/0001.png")).unwrap();
        let mask = IndexMask::from_labels(
            RasterSize::new(8, 6),
            vec![1; 48],
            DEFAULT_IGNORE_INDEX,
        );
        write_mask_png(&mask, &root.join("masks/0001.png")).unwrap();
        std::fs::write(
            root.join("boxes.jsonl"),
            r#"{"id":"0001","boxes":[{"class":"grass","x_min":1,"y_min":1,"x_max":5,"y_max":4}]}"#,
        )
        .unwrap();
        std::fs::write(root.join("labels.jsonl"), r#"{"id":"0001","class":"sky"}"#).unwrap();
        std::fs::write(root.join("points.jsonl"), r#"{"id":"0001","x":2,"y":2}"#).unwrap();

        let ds = Dataset::load(root, None).unwrap();
        assert_eq!(ds.ids(), &["0001".to_string()]);
        assert_eq!(ds.image("0001").unwrap(), img);
        let gt = ds.ground_truth("0001").unwrap();
        assert_eq!(gt.label, Some(0));
        assert_eq!(gt.boxes.len(), 1);
        assert_eq!(gt.boxes[0].class_id, 1);
        assert!(gt.mask.is_some());
        assert_eq!(gt.instance.as_ref().unwrap().count(), 48);
        // unknown class in boxes.jsonl is an error
        std::fs::write(
            root.join("boxes.jsonl"),
            r#"{"id":"0001","boxes":[{"class":"lava","x_min":0,"y_min":0,"x_max":2,"y_max":2}]}"#,
        )
        .unwrap();
        assert!(Dataset::load(root, None).is_err());
    }
}
