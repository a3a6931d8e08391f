//! Grayscale, resize and frame stacking.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::numerics::Tensor;

use super::canvas::Frame;

/// Stacked grayscale planes, `[STACK, size, size]`.
pub type Observation = Tensor<f32>;

pub const STACK: usize = 4;

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Luminance plane of `frame`, nearest-neighbour resized to `size × size`.
pub fn grayscale(frame: &Frame, size: usize) -> Result<Vec<f32>> {
    let shape = frame.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(shape_err(alloc::format!("expected an RGB frame [3, h, w], got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    let data = frame.data();
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let sy = y * h / size;
        for x in 0..size {
            let i = sy * w + x * w / size;
            let v = LUMA[0] * data[i] + LUMA[1] * data[plane + i] + LUMA[2] * data[2 * plane + i];
            out.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Builds an observation from up to the last [`STACK`] frames, oldest first.
/// Missing slots repeat the oldest frame; the newest frame is the last plane.
pub fn preprocess(history: &[Frame], size: usize) -> Result<Observation> {
    let mut stack = FrameStack::new(size);
    let recent = &history[history.len().saturating_sub(STACK)..];
    let (first, rest) = recent.split_first().ok_or_else(|| crate::error::contract("preprocess needs at least one frame"))?;
    stack.reset(first)?;
    for f in rest {
        stack.push(f)?;
    }
    Ok(stack.observation())
}

/// Rolling stack of preprocessed planes for one environment.
#[derive(Clone, Debug)]
pub struct FrameStack {
    size: usize,
    planes: VecDeque<Vec<f32>>,
}

impl FrameStack {
    pub fn new(size: usize) -> Self {
        FrameStack { size, planes: VecDeque::with_capacity(STACK) }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Clears the history and fills every slot with `frame`.
    pub fn reset(&mut self, frame: &Frame) -> Result<()> {
        let g = grayscale(frame, self.size)?;
        self.planes.clear();
        for _ in 0..STACK {
            self.planes.push_back(g.clone());
        }
        Ok(())
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        if self.planes.is_empty() {
            return self.reset(frame);
        }
        let g = grayscale(frame, self.size)?;
        if self.planes.len() == STACK {
            self.planes.pop_front();
        }
        self.planes.push_back(g);
        Ok(())
    }

    /// Writes the observation into `out` (length `STACK·size²`).
    pub fn write_into(&self, out: &mut [f32]) {
        let n = self.size * self.size;
        for (i, p) in self.planes.iter().enumerate() {
            out[i * n..(i + 1) * n].copy_from_slice(p);
        }
    }

    pub fn observation(&self) -> Observation {
        let mut data = alloc::vec![0.0; STACK * self.size * self.size];
        self.write_into(&mut data);
        Tensor::new([STACK, self.size, self.size], data).expect("stack shape")
    }
}
