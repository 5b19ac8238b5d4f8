use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// `n` binary images of `height x width` pixels, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryImageDataset {
    n: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl BinaryImageDataset {
    pub fn new(n: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != n * height * width {
            return Err(Error::InvalidTensor(format!(
                "{} pixels do not form {n} images of {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinary { index: i, value: data[i] });
        }
        Ok(Self { n, height, width, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels_per_image(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixels_per_image();
        &self.data[i * p..(i + 1) * p]
    }

    /// All images as an `[n, h * w]` matrix.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::matrix(self.n, self.pixels_per_image(), self.data.clone())
    }

    /// Images `start..end` as a matrix.
    pub fn slice(&self, start: usize, end: usize) -> Result<Tensor> {
        let p = self.pixels_per_image();
        Tensor::matrix(end - start, p, self.data[start * p..end * p].to_vec())
    }

    /// Pixels as bytes, 1 mapped to 255.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| if v == 1.0 { 255 } else { 0 }).collect()
    }

    /// `rows` images drawn uniformly with replacement, with their indices.
    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R, rows: usize) -> Result<(Tensor, Vec<usize>)> {
        if self.is_empty() {
            return Err(Error::NotEnoughSamples("cannot draw a batch from an empty dataset".into()));
        }
        let idx: Vec<usize> = (0..rows).map(|_| rng.random_range(0..self.n)).collect();
        let mut data = Vec::with_capacity(rows * self.pixels_per_image());
        for &i in &idx {
            data.extend_from_slice(self.image(i));
        }
        Ok((Tensor::matrix(rows, self.pixels_per_image(), data)?, idx))
    }
}

/// The four 2x2 images with exactly one pixel on, in pixel order.
pub fn synthetic4_dataset() -> BinaryImageDataset {
    let mut data = vec![0.0; 16];
    for i in 0..4 {
        data[i * 4 + i] = 1.0;
    }
    BinaryImageDataset::new(4, 2, 2, data).expect("valid by construction")
}
