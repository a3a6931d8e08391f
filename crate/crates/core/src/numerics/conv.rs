//! Patch extraction kernels shared by strided and transposed convolution.

use super::real::Real;

/// Sliding-window geometry over a `channels × height × width` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    /// Output extent of a convolution window along an axis, `None` when the
    /// kernel does not fit the padded input.
    pub fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
            return None;
        }
        Some((input + 2 * pad - kernel) / stride + 1)
    }

    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Rows of the patch matrix: `channels · kernel²`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the patch matrix: number of output positions.
    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// Writes the `patch_len × positions` patch matrix of `image` into `cols`.
pub fn im2col<T: Real>(image: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let positions = oh * ow;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let out = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut out[oy * ow..(oy + 1) * ow];
                    if y < 0 || y >= g.height as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if x < 0 || x >= g.width as isize { T::zero() } else { src[x as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back onto `image` (adjoint of [`im2col`]).
pub fn col2im_add<T: Real>(cols: &[T], g: &ConvGeometry, image: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let positions = oh * ow;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    if y < 0 || y >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[y as usize * g.width..(y as usize + 1) * g.width];
                    for ox in 0..ow {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        if x >= 0 && x < g.width as isize {
                            dst[x as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn output_extent_matches_standard_formula() {
        assert_eq!(ConvGeometry::out_extent(84, 8, 4, 0), Some(20));
        assert_eq!(ConvGeometry::out_extent(20, 4, 2, 0), Some(9));
        assert_eq!(ConvGeometry::out_extent(84, 4, 2, 1), Some(42));
        assert_eq!(ConvGeometry::out_extent(2, 5, 1, 1), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeometry { channels: 2, height: 5, width: 4, kernel: 3, stride: 2, pad: 1 };
        let x: alloc::vec::Vec<f64> = (0..40).map(|i| libm::sin(i as f64 * 0.37)).collect();
        let y: alloc::vec::Vec<f64> =
            (0..g.patch_len() * g.positions()).map(|i| libm::cos(i as f64 * 0.11)).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
