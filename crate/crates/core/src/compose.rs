//! Occlusion-aware composition of the person depth map with object masks.
//!
//! `d*[p] = d[p]` if `!m[p] && d[p] > 0`, else `0`: the rendered depth
//! restricted to its own silhouette minus the occluder mask. Occluders are
//! applied regardless of whether the object is in front of or behind the
//! person.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{DepthMap, Error, Result};

/// Class names treated as people and therefore never used as occluders.
pub const DEFAULT_PERSON_CLASSES: &[&str] = &["person"];

/// Label given to the union of several masks.
pub const UNION_LABEL: &str = "occluders";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, `true` where an occluding object is present.
    pub data: Vec<bool>,
    pub class_label: String,
}

impl MaskImage {
    pub fn empty(width: u32, height: u32) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
            class_label: String::from(UNION_LABEL),
        }
    }

    pub fn new(width: u32, height: u32, data: Vec<bool>, class_label: impl Into<String>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::Shape {
                what: "mask data",
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            class_label: class_label.into(),
        })
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        self.data[(row * self.width + col) as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Nearest-neighbour resampling, sampling the source at each target pixel
    /// center.
    pub fn resample_nearest(&self, width: u32, height: u32) -> MaskImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for row in 0..height as u64 {
            let src_row = ((2 * row + 1) * self.height as u64 / (2 * height as u64)) as u32;
            for col in 0..width as u64 {
                let src_col = ((2 * col + 1) * self.width as u64 / (2 * width as u64)) as u32;
                data.push(self.get(src_col, src_row));
            }
        }
        MaskImage {
            width,
            height,
            data,
            class_label: self.class_label.clone(),
        }
    }
}

/// Drops masks whose class is a person class (case-insensitive).
pub fn filter_occluders<'a, I>(masks: I, person_classes: &[&str]) -> Vec<MaskImage>
where
    I: IntoIterator<Item = &'a MaskImage>,
{
    masks
        .into_iter()
        .filter(|m| !person_classes.iter().any(|p| p.eq_ignore_ascii_case(&m.class_label)))
        .cloned()
        .collect()
}

/// Pixelwise OR. An empty list yields an all-false mask of the given size.
pub fn union_masks(masks: &[MaskImage], width: u32, height: u32) -> Result<MaskImage> {
    let mut out = MaskImage::empty(width, height);
    for m in masks {
        if m.width != width || m.height != height {
            return Err(Error::SizeMismatch(m.width, m.height, width, height));
        }
        for (o, &v) in out.data.iter_mut().zip(&m.data) {
            *o |= v;
        }
    }
    Ok(out)
}

/// Zeroes the depth of occluded body pixels.
pub fn apply_occlusion(depth: &DepthMap, mask: &MaskImage) -> Result<DepthMap> {
    if depth.width != mask.width || depth.height != mask.height {
        return Err(Error::SizeMismatch(depth.width, depth.height, mask.width, mask.height));
    }
    let data = depth
        .data
        .iter()
        .zip(&mask.data)
        .map(|(&d, &occluded)| if !occluded && d > 0.0 { d } else { 0.0 })
        .collect();
    Ok(DepthMap {
        width: depth.width,
        height: depth.height,
        data,
    })
}
