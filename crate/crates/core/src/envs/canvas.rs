use crate::numerics::Tensor;

/// Raw RGB frame, `[3, height, width]`, values in `[0, 1]`.
pub type Frame = Tensor<f32>;

pub const FRAME_SIZE: usize = 84;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    fn channels(self) -> [f32; 3] {
        [self.0 as f32 / 255.0, self.1 as f32 / 255.0, self.2 as f32 / 255.0]
    }
}

/// Mutable drawing surface over an RGB frame.
pub struct Canvas {
    frame: Frame,
}

impl Canvas {
    pub fn new(background: Rgb) -> Self {
        let mut frame = Tensor::zeros([3, FRAME_SIZE, FRAME_SIZE]);
        let plane = FRAME_SIZE * FRAME_SIZE;
        for (c, v) in background.channels().into_iter().enumerate() {
            frame.data_mut()[c * plane..(c + 1) * plane].iter_mut().for_each(|p| *p = v);
        }
        Canvas { frame }
    }

    pub fn put(&mut self, x: i32, y: i32, color: Rgb) {
        if x < 0 || y < 0 || x >= FRAME_SIZE as i32 || y >= FRAME_SIZE as i32 {
            return;
        }
        let plane = FRAME_SIZE * FRAME_SIZE;
        let idx = y as usize * FRAME_SIZE + x as usize;
        let data = self.frame.data_mut();
        for (c, v) in color.channels().into_iter().enumerate() {
            data[c * plane + idx] = v;
        }
    }

    /// Fills `[x, x+w) × [y, y+h)`, clipped to the frame.
    pub fn rect(&mut self, x: i32, y: i32, w: i32, h: i32, color: Rgb) {
        let (x0, x1) = (x.max(0), (x + w).min(FRAME_SIZE as i32));
        let (y0, y1) = (y.max(0), (y + h).min(FRAME_SIZE as i32));
        for yy in y0..y1 {
            for xx in x0..x1 {
                self.put(xx, yy, color);
            }
        }
    }

    pub fn finish(self) -> Frame {
        self.frame
    }
}
