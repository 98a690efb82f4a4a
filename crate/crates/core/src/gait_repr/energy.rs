use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::crop_normalize;
use super::skeleton::{rasterize_skeleton, PoseFrame};
use super::{SequenceMeta, ENERGY_SIZE};
use crate::error::{Error, Result};
use crate::labels::Representation;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyKind {
    Gei,
    Sei,
}

impl From<Representation> for EnergyKind {
    fn from(r: Representation) -> Self {
        match r {
            Representation::Gei => EnergyKind::Gei,
            Representation::Sei => EnergyKind::Sei,
        }
    }
}

impl From<EnergyKind> for Representation {
    fn from(k: EnergyKind) -> Self {
        match k {
            EnergyKind::Gei => Representation::Gei,
            EnergyKind::Sei => Representation::Sei,
        }
    }
}

/// What span of a sequence an energy image averages over. Frame numbers
/// refer to the original, un-resampled recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "span", rename_all = "snake_case")]
pub enum Provenance {
    Cycle {
        index: usize,
        start_frame: usize,
        end_frame: usize,
    },
    FullSequence,
    /// Loaded from an image file with no recorded origin.
    External,
}

/// A `224 × 224` temporal-mean image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyImage {
    pub kind: EnergyKind,
    pub provenance: Provenance,
    pub meta: Option<SequenceMeta>,
    data: Vec<f32>,
}

impl EnergyImage {
    pub fn from_data(kind: EnergyKind, data: Vec<f32>) -> Result<Self> {
        if data.len() != ENERGY_SIZE * ENERGY_SIZE {
            return Err(Error::Shape(format!(
                "energy image needs {} values, got {}",
                ENERGY_SIZE * ENERGY_SIZE,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("energy value {v} outside [0, 1]")));
        }
        Ok(Self {
            kind,
            provenance: Provenance::External,
            meta: None,
            data,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * ENERGY_SIZE + x]
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_meta(mut self, meta: Option<SequenceMeta>) -> Self {
        self.meta = meta;
        self
    }

    /// 8-bit grayscale, `round(255 · v)`.
    pub fn to_gray_image(&self) -> image::GrayImage {
        let px = self.data.iter().map(|&v| (v * 255.0).round() as u8).collect();
        image::GrayImage::from_raw(ENERGY_SIZE as u32, ENERGY_SIZE as u32, px).expect("size checked")
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_gray_image().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes a `224 × 224` 8-bit grayscale PNG (colour input is rejected).
    pub fn from_png_bytes(kind: EnergyKind, bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Self::from_dynamic(kind, img)
    }

    fn from_dynamic(kind: EnergyKind, img: image::DynamicImage) -> Result<Self> {
        let gray = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            image::DynamicImage::ImageLumaA8(_) | image::DynamicImage::ImageLuma16(_) => img.to_luma8(),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "energy images are grayscale, got {:?}",
                    other.color()
                )))
            }
        };
        if gray.width() as usize != ENERGY_SIZE || gray.height() as usize != ENERGY_SIZE {
            return Err(Error::Shape(format!(
                "energy images are {ENERGY_SIZE}x{ENERGY_SIZE}, got {}x{}",
                gray.width(),
                gray.height()
            )));
        }
        let data = gray.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
        Self::from_data(kind, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(kind: EnergyKind, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)?;
        Self::from_dynamic(kind, img)
    }
}

/// Per-pixel arithmetic mean of equally sized frames, accumulated in f64.
pub fn mean_image(frames: &[Vec<f32>]) -> Result<Vec<f32>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Empty("no frames to average".into()))?;
    if frames.iter().any(|f| f.len() != first.len()) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    let mut acc = vec![0f64; first.len()];
    for f in frames {
        for (a, &v) in acc.iter_mut().zip(f) {
            *a += v as f64;
        }
    }
    let n = frames.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Gait energy image of normalized silhouettes.
pub fn compute_gei(frames: &[Vec<f32>]) -> Result<EnergyImage> {
    if let Some(f) = frames.iter().find(|f| f.len() != ENERGY_SIZE * ENERGY_SIZE) {
        return Err(Error::Shape(format!("normalized frame has {} values", f.len())));
    }
    EnergyImage::from_data(EnergyKind::Gei, mean_image(frames)?)
}

/// Skeleton energy image: each pose is drawn on a `width × height` canvas,
/// normalized like a silhouette, then averaged.
pub fn compute_sei(poses: &[PoseFrame], width: usize, height: usize) -> Result<EnergyImage> {
    if poses.is_empty() {
        return Err(Error::Empty("no poses to average".into()));
    }
    let frames: Vec<Vec<f32>> = par::map_slice(poses, |p| {
        rasterize_skeleton(p, width, height).and_then(|m| crop_normalize(&m))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut e = compute_gei(&frames)?;
    e.kind = EnergyKind::Sei;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait_repr::skeleton::Keypoint;

    const N: usize = ENERGY_SIZE * ENERGY_SIZE;

    #[test]
    fn single_frame_identity_is_exact() {
        let f: Vec<f32> = (0..N).map(|i| (i % 97) as f32 / 96.0).collect();
        let g = compute_gei(std::slice::from_ref(&f)).unwrap();
        assert_eq!(g.data(), &f[..]);
        assert_eq!(g.kind, EnergyKind::Gei);
    }

    #[test]
    fn half_foreground_gives_half() {
        let mut a = vec![0f32; N];
        a[7] = 1.0;
        let g = compute_gei(&[a, vec![0f32; N]]).unwrap();
        assert_eq!(g.data()[7], 0.5);
    }

    #[test]
    fn empty_and_misshaped_rejected() {
        assert!(compute_gei(&[]).is_err());
        assert!(compute_gei(&[vec![0.0; 10]]).is_err());
        assert!(compute_sei(&[], 10, 10).is_err());
    }

    #[test]
    fn png_round_trip_quantizes() {
        let data: Vec<f32> = (0..N).map(|i| (i % 256) as f32 / 255.0).collect();
        let e = EnergyImage::from_data(EnergyKind::Sei, data.clone()).unwrap();
        let back = EnergyImage::from_png_bytes(EnergyKind::Sei, &e.to_png_bytes().unwrap()).unwrap();
        assert_eq!(back.data(), &data[..]);
    }

    #[test]
    fn wrong_size_png_rejected() {
        let img = image::GrayImage::new(10, 10);
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        assert!(EnergyImage::from_png_bytes(EnergyKind::Gei, buf.get_ref()).is_err());
    }

    #[test]
    fn repeated_pose_equals_single_rasterization() {
        let mut p = PoseFrame::empty();
        p.set(1, Keypoint::new(30.0, 10.0, 1.0)).unwrap();
        p.set(8, Keypoint::new(32.0, 60.0, 1.0)).unwrap();
        p.set(9, Keypoint::new(25.0, 90.0, 1.0)).unwrap();
        let one = compute_sei(std::slice::from_ref(&p), 80, 100).unwrap();
        let many = compute_sei(&vec![p; 4], 80, 100).unwrap();
        assert_eq!(one.data(), many.data());
        assert_eq!(one.kind, EnergyKind::Sei);
    }
}
