use super::image::{FloatImage, GrayImage};
use super::FlowError;
use crate::exec::Execution;

/// Gaussian image pyramid; level 0 is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<FloatImage>,
}

impl Pyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, l: usize) -> &FloatImage {
        &self.levels[l]
    }
}

const KERNEL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

pub fn build_pyramid(img: &GrayImage, levels: usize) -> Result<Pyramid, FlowError> {
    build_pyramid_with(img, levels, Execution::default())
}

pub fn build_pyramid_with(
    img: &GrayImage,
    levels: usize,
    exec: Execution,
) -> Result<Pyramid, FlowError> {
    if levels == 0 {
        return Err(FlowError::InvalidParams(
            "pyramid needs at least one level".into(),
        ));
    }
    let need = 1u64 << (levels - 1).min(62);
    if (img.width() as u64) < need || (img.height() as u64) < need {
        return Err(FlowError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            required: need as u32,
        });
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.to_float());
    for _ in 1..levels {
        let next = downsample(out.last().expect("non-empty"), exec);
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

/// Binomial low-pass followed by dropping every other row and column.
fn downsample(src: &FloatImage, exec: Execution) -> FloatImage {
    let (w, h) = (src.width, src.height);
    let (w2, h2) = (w / 2, h / 2);
    // Horizontal pass, only at even columns.
    let mut tmp = vec![0f32; w2 * h];
    exec.for_each_chunk(&mut tmp, w2, |r, row| {
        let s = &src.data[r * w..(r + 1) * w];
        for (i, o) in row.iter_mut().enumerate() {
            let c = 2 * i as isize;
            let mut acc = 0.0;
            for (k, kw) in KERNEL.iter().enumerate() {
                let cc = (c + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += kw * s[cc];
            }
            *o = acc;
        }
    });
    let mut dst = FloatImage::new(w2, h2);
    exec.for_each_chunk(&mut dst.data, w2, |j, row| {
        let r = 2 * j as isize;
        for (k, kw) in KERNEL.iter().enumerate() {
            let rr = (r + k as isize - 2).clamp(0, h as isize - 1) as usize;
            let s = &tmp[rr * w2..(rr + 1) * w2];
            for (o, v) in row.iter_mut().zip(s) {
                *o += kw * v;
            }
        }
    });
    dst
}
