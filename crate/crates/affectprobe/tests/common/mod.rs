//! Shared fixtures for integration tests: synthetic frame-directory videos,
//! manifests, and digest helpers for scripted mocks.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use affectprobe::manifest::LabelTaxonomy;

/// A synthetic video: a frame directory of tiny distinct JPEGs.
pub struct SyntheticVideo {
    pub id: String,
    pub label: String,
    pub dir: PathBuf,
    pub frame_count: u32,
    pub native_fps: f64,
}

impl SyntheticVideo {
    pub fn frame_path(&self, idx: u32) -> PathBuf {
        self.dir.join(format!("{idx:06}.jpg"))
    }

    /// SHA-256 of the frame file bytes (the payload digest under the
    /// passthrough encode policy).
    pub fn frame_digest(&self, idx: u32) -> String {
        let bytes = fs::read(self.frame_path(idx)).expect("frame exists");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn manifest_line(&self) -> String {
        format!(
            r#"{{"id":"{}","source":"{}","label":"{}","native_fps":{},"frame_count":{}}}"#,
            self.id,
            self.dir.display(),
            self.label,
            self.native_fps,
            self.frame_count
        )
    }
}

/// Write `frame_count` distinct 4x4 JPEG frames for one sample.
pub fn make_video(
    root: &Path,
    id: &str,
    label: &str,
    native_fps: f64,
    frame_count: u32,
    color_seed: u32,
) -> SyntheticVideo {
    let dir = root.join(id);
    fs::create_dir_all(&dir).expect("create frame dir");
    for i in 0..frame_count {
        let r = (color_seed.wrapping_mul(37) % 251) as u8;
        let g = (i * 29 % 251) as u8;
        let b = (color_seed.wrapping_add(i).wrapping_mul(13) % 251) as u8;
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([r, g, b]));
        img.save(dir.join(format!("{i:06}.jpg"))).expect("save frame");
    }
    SyntheticVideo {
        id: id.to_string(),
        label: label.to_string(),
        dir,
        frame_count,
        native_fps,
    }
}

/// A balanced synthetic dataset: `per_class` videos per taxonomy label.
pub fn make_dataset(
    root: &Path,
    taxonomy: &LabelTaxonomy,
    per_class: usize,
    native_fps: f64,
    frame_count: u32,
) -> Vec<SyntheticVideo> {
    let mut videos = Vec::new();
    for (ci, label) in taxonomy.labels.iter().enumerate() {
        for k in 0..per_class {
            let id = format!("{label}_{k:03}");
            let color_seed = (ci * 101 + k * 17 + 7) as u32;
            videos.push(make_video(
                root,
                &id,
                label,
                native_fps,
                frame_count,
                color_seed,
            ));
        }
    }
    videos
}

pub fn write_manifest(path: &Path, videos: &[SyntheticVideo]) {
    let body: String = videos
        .iter()
        .map(|v| v.manifest_line() + "\n")
        .collect();
    fs::write(path, body).expect("write manifest");
}

/// Verify every frame digest in the set is unique (mock rules depend on it).
pub fn assert_distinct_frames(videos: &[SyntheticVideo]) {
    let mut seen = std::collections::BTreeSet::new();
    for v in videos {
        for i in 0..v.frame_count {
            assert!(
                seen.insert(v.frame_digest(i)),
                "duplicate frame bytes at {}#{i}",
                v.id
            );
        }
    }
}
