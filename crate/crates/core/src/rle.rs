//! COCO-style uncompressed run-length encoding of binary masks.
//!
//! Pixels are visited in column-major (Fortran) order. `counts` alternates
//! run lengths starting with a run of `false`, which is `0` when the first
//! pixel is set. The counts sum to `height * width`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, MaskImage, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rle {
    /// `[height, width]`, COCO order.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    pub fn height(&self) -> u32 {
        self.size[0]
    }

    pub fn width(&self) -> u32 {
        self.size[1]
    }
}

/// Encodes a row-major mask.
pub fn encode(mask: &MaskImage) -> Rle {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for col in 0..w {
        for row in 0..h {
            let v = mask.data[row * w + col];
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [mask.height, mask.width],
        counts,
    }
}

/// Decodes into a row-major mask with the given class label.
pub fn decode(rle: &Rle, class_label: impl Into<String>) -> Result<MaskImage> {
    let (h, w) = (rle.height() as usize, rle.width() as usize);
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != (h * w) as u64 {
        return Err(Error::Rle(format!(
            "counts sum to {total}, expected {h}x{w} = {}",
            h * w
        )));
    }
    if rle.counts.iter().skip(1).any(|&c| c == 0) {
        return Err(Error::Rle("only the leading run may be empty".into()));
    }
    let mut data = alloc::vec![false; h * w];
    let mut pos = 0usize;
    let mut value = false;
    for &c in &rle.counts {
        if value {
            for idx in pos..pos + c as usize {
                let (col, row) = (idx / h, idx % h);
                data[row * w + col] = true;
            }
        }
        pos += c as usize;
        value = !value;
    }
    MaskImage::new(rle.width(), rle.height(), data, class_label)
}
