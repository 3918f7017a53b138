//! Naive COCO run-length codec over a column-major bit stream.

/// `mask` is row-major `height x width`.
pub fn encode(mask: &[bool], height: usize, width: usize) -> Vec<u32> {
    let mut stream = Vec::with_capacity(mask.len());
    for col in 0..width {
        for row in 0..height {
            stream.push(mask[row * width + col]);
        }
    }
    let mut counts = vec![0u32];
    let mut expect = false;
    for bit in stream {
        if bit != expect {
            counts.push(0);
            expect = bit;
        }
        *counts.last_mut().unwrap() += 1;
    }
    counts
}

pub fn decode(counts: &[u32], height: usize, width: usize) -> Vec<bool> {
    let mut stream = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        stream.extend(std::iter::repeat(i % 2 == 1).take(c as usize));
    }
    assert_eq!(stream.len(), height * width);
    let mut mask = vec![false; height * width];
    for (i, bit) in stream.into_iter().enumerate() {
        mask[(i % height) * width + i / height] = bit;
    }
    mask
}
