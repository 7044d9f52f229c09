use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

/// A `channels × height × width` tensor.
///
/// Storage is position-major: the `channels` values of position
/// `p = h·width + w` are contiguous, so the `positions × channels` matrix
/// view shares the exact same buffer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureGrid<T = f64> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureGrid<T> {
    /// Builds a grid from position-major data.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::domain(format!(
                "grid data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    /// Builds a grid from planar (channel-major) data.
    pub fn from_planar(channels: usize, height: usize, width: usize, planar: &[T]) -> Result<Self> {
        let mut g = Self::zeros(channels, height, width);
        if planar.len() != g.data.len() {
            return Err(Error::domain("planar data length mismatch"));
        }
        let plane = height * width;
        for c in 0..channels {
            for p in 0..plane {
                g.data[p * channels + c] = planar[c * plane + p];
            }
        }
        Ok(g)
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    data.push(f(c, h, w));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    /// Entries i.i.d. uniform in `[0, 1]`, the image value range.
    pub fn random_unit<R: Rng + ?Sized>(c: usize, h: usize, w: usize, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
        Self::from_fn(c, h, w, |_, _, _| T::lit(dist.sample(rng)))
    }

    pub fn random_normal<R: Rng + ?Sized>(c: usize, h: usize, w: usize, rng: &mut R) -> Self {
        Self::from_fn(c, h, w, |_, _, _| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z)
        })
    }

    /// Matrix view (`positions × channels`) wrapped back into a grid.
    pub fn from_matrix(m: Matrix<T>, height: usize, width: usize) -> Result<Self> {
        if m.rows() != height * width {
            return Err(Error::domain(format!(
                "matrix has {} rows, grid needs {} positions",
                m.rows(),
                height * width
            )));
        }
        let channels = m.cols();
        Self::new(channels, height, width, m.into_data())
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    /// Total number of scalars, `C·H·W`.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> T {
        self.data[(h * self.width + w) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, value: T) {
        let idx = (h * self.width + w) * self.channels + c;
        self.data[idx] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Channel-major copy of the data.
    pub fn to_planar(&self) -> Vec<T> {
        let plane = self.positions();
        let mut out = vec![T::zero(); self.data.len()];
        for p in 0..plane {
            for c in 0..self.channels {
                out[c * plane + p] = self.data[p * self.channels + c];
            }
        }
        out
    }

    /// `positions × channels` matrix over the same values.
    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::new(self.positions(), self.channels, self.data.clone())
            .expect("grid invariant guarantees the length")
    }

    /// Same shape, new data.
    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        Self::new(self.channels, self.height, self.width, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::domain(format!(
                "grid shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> FeatureGrid<U> {
        FeatureGrid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&x| U::lit(x.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_view_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = FeatureGrid::<f64>::random_normal(3, 4, 5, &mut rng);
        let m = g.to_matrix();
        assert_eq!(m.rows(), 20);
        assert_eq!(m.cols(), 3);
        assert_eq!(m[(2 * 5 + 1, 2)], g.get(2, 2, 1));
        assert_eq!(FeatureGrid::from_matrix(m, 4, 5).unwrap(), g);
    }

    #[test]
    fn planar_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = FeatureGrid::<f64>::random_unit(2, 3, 3, &mut rng);
        let planar = g.to_planar();
        assert_eq!(planar[9 + 4], g.get(1, 1, 1));
        assert_eq!(FeatureGrid::from_planar(2, 3, 3, &planar).unwrap(), g);
    }

    #[test]
    fn shape_checks() {
        assert!(FeatureGrid::<f64>::new(2, 2, 2, vec![0.0; 7]).is_err());
        let a = FeatureGrid::<f64>::zeros(1, 2, 2);
        let b = FeatureGrid::<f64>::zeros(2, 2, 1);
        assert!(a.sub(&b).is_err());
    }
}
