//! Scalar volumes: decoding, synthetic phantoms, smoothing and slicing.
//!
//! Voxels are stored as `f32` in x-fastest, then y, then z order whatever the
//! on-disk sample type was.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U16,
    I16,
    F32,
}

impl Dtype {
    pub fn byte_width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 | Dtype::I16 => 2,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    #[default]
    Little,
}

fn default_spacing() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

/// Header information for a volume; doubles as the sidecar JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    #[serde(default = "default_spacing")]
    pub spacing: [f64; 3],
    pub dtype: Dtype,
    #[serde(default)]
    pub endianness: Endianness,
    /// Recomputed from the data on load; absent in hand-written sidecars.
    #[serde(default)]
    pub scalar_range: [f64; 2],
}

impl VolumeMeta {
    pub fn new(dims: [usize; 3], dtype: Dtype) -> Self {
        Self {
            dims,
            spacing: default_spacing(),
            dtype,
            endianness: Endianness::Little,
            scalar_range: [0.0, 0.0],
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two remaining axes, lower first. The lower one runs along image
    /// columns, the higher one along rows.
    pub fn plane_axes(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "x" | "X" => Some(Axis::X),
            "y" | "Y" => Some(Axis::Y),
            "z" | "Z" => Some(Axis::Z),
            _ => None,
        }
    }
}

/// A 2D row-major image of `f32` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Slice2D {
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub meta: VolumeMeta,
    pub data: Vec<f32>,
    pub normalized: bool,
}

fn data_range(data: &[f32]) -> [f64; 2] {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if data.is_empty() {
        [0.0, 0.0]
    } else {
        [lo as f64, hi as f64]
    }
}

impl ScalarVolume {
    /// Wraps already-decoded samples. The scalar range is recomputed.
    pub fn from_data(mut meta: VolumeMeta, data: Vec<f32>) -> Result<Self> {
        meta.validate()?;
        if data.len() != meta.voxel_count() {
            return Err(Error::SizeMismatch {
                expected: meta.voxel_count(),
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("volume contains non-finite samples".into()));
        }
        meta.scalar_range = data_range(&data);
        Ok(Self {
            meta,
            data,
            normalized: false,
        })
    }

    /// Decodes a headerless little-endian buffer described by `meta`.
    pub fn decode_raw(bytes: &[u8], meta: &VolumeMeta) -> Result<Self> {
        meta.validate()?;
        let width = meta.dtype.byte_width();
        let expected = meta.voxel_count() * width;
        if bytes.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: bytes.len(),
            });
        }
        let data: Vec<f32> = match meta.dtype {
            Dtype::U8 => bytes.iter().map(|&b| b as f32).collect(),
            Dtype::U16 => bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32)
                .collect(),
            Dtype::I16 => bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
                .collect(),
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        let mut meta = meta.clone();
        meta.endianness = Endianness::Little;
        Self::from_data(meta, data)
    }

    /// Little-endian `f32` bytes in volume layout.
    pub fn encode_f32(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Meta describing [`encode_f32`](Self::encode_f32) output.
    pub fn f32_meta(&self) -> VolumeMeta {
        VolumeMeta {
            dtype: Dtype::F32,
            ..self.meta.clone()
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.meta.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, _] = self.meta.dims;
        x + nx * (y + ny * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.meta.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.meta.dims[a])
    }

    /// Linearly rescales intensities to `[0, 1]`. A constant volume maps to 0.
    pub fn normalized(&self) -> ScalarVolume {
        let [lo, hi] = self.meta.scalar_range;
        let span = hi - lo;
        let data: Vec<f32> = if span > 0.0 {
            self.data
                .iter()
                .map(|&v| (((v as f64) - lo) / span).clamp(0.0, 1.0) as f32)
                .collect()
        } else {
            vec![0.0; self.data.len()]
        };
        let mut meta = self.meta.clone();
        meta.scalar_range = data_range(&data);
        ScalarVolume {
            meta,
            data,
            normalized: true,
        }
    }

    /// Separable Gaussian blur with kernel radius `ceil(3 sigma)` and clamped
    /// borders. `sigma == 0` returns the input unchanged.
    pub fn gaussian_smooth(&self, sigma: f64) -> Result<ScalarVolume> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let kernel = gaussian_kernel(sigma);
        let radius = (kernel.len() / 2) as i64;
        let dims = self.meta.dims;
        let mut cur: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        let mut next = vec![0.0f64; cur.len()];
        for axis in 0..3 {
            let n = dims[axis] as i64;
            let stride = match axis {
                0 => 1,
                1 => dims[0],
                _ => dims[0] * dims[1],
            };
            for (i, out) in next.iter_mut().enumerate() {
                let c = self.coords(i)[axis] as i64;
                let base = i - (c as usize) * stride;
                let mut acc = 0.0;
                for (t, &g) in kernel.iter().enumerate() {
                    let s = (c + t as i64 - radius).clamp(0, n - 1) as usize;
                    acc += g * cur[base + s * stride];
                }
                *out = acc;
            }
            core::mem::swap(&mut cur, &mut next);
        }
        let data = cur.into_iter().map(|v| v as f32).collect();
        let mut out = ScalarVolume::from_data(self.meta.clone(), data)?;
        out.normalized = self.normalized;
        Ok(out)
    }

    /// Extracts the plane orthogonal to `axis` at `index`.
    pub fn slice(&self, axis: Axis, index: usize) -> Result<Slice2D> {
        let dims = self.meta.dims;
        let len = dims[axis.index()];
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
        let (ca, ra) = axis.plane_axes();
        let (width, height) = (dims[ca], dims[ra]);
        let mut data = Vec::with_capacity(width * height);
        let mut p = [0usize; 3];
        p[axis.index()] = index;
        for row in 0..height {
            p[ra] = row;
            for col in 0..width {
                p[ca] = col;
                data.push(self.get(p[0], p[1], p[2]));
            }
        }
        Ok(Slice2D {
            width,
            height,
            data,
        })
    }
}

/// Normalized 1D Gaussian taps, length `2 ceil(3 sigma) + 1`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub intensity: f64,
}

/// Description of a synthetic volume made of solid spheres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePhantomSpec {
    pub dims: [usize; 3],
    pub spheres: Vec<Sphere>,
    pub background: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SpherePhantomSpec {
    /// Two spheres of distinct intensity on a darker background.
    pub fn two_spheres(n: usize, noise_sigma: f64, rng_seed: u64) -> Self {
        let f = n as f64;
        Self {
            dims: [n, n, n],
            spheres: vec![
                Sphere {
                    center: [0.3 * f, 0.3 * f, 0.5 * f],
                    radius: 0.22 * f,
                    intensity: 200.0,
                },
                Sphere {
                    center: [0.7 * f, 0.7 * f, 0.5 * f],
                    radius: 0.22 * f,
                    intensity: 120.0,
                },
            ],
            background: 40.0,
            noise_sigma,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        VolumeMeta::new(self.dims, Dtype::F32).validate()?;
        if self.spheres.len() > u8::MAX as usize {
            return Err(Error::InvalidParameter("at most 255 spheres".into()));
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0) {
                return Err(Error::InvalidParameter(format!("sphere {i} radius must be > 0")));
            }
            if s.intensity == self.background {
                return Err(Error::InvalidParameter(format!(
                    "sphere {i} intensity equals the background"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Rasterizes the phantom. Ground truth is 0 for background and `i + 1` for
/// the `i`-th sphere; the first containing sphere wins.
pub fn generate_spheres_phantom(spec: &SpherePhantomSpec) -> Result<(ScalarVolume, Vec<u8>)> {
    spec.validate()?;
    let meta = VolumeMeta::new(spec.dims, Dtype::F32);
    let n = meta.voxel_count();
    let [nx, ny, _] = spec.dims;
    let mut data = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|_| Error::InvalidParameter("noise_sigma".into()))?;
    for i in 0..n {
        let p = [(i % nx) as f64, ((i / nx) % ny) as f64, (i / (nx * ny)) as f64];
        let hit = spec.spheres.iter().position(|s| {
            let d2: f64 = (0..3).map(|a| (p[a] - s.center[a]) * (p[a] - s.center[a])).sum();
            d2 <= s.radius * s.radius
        });
        let (value, label) = match hit {
            Some(k) => (spec.spheres[k].intensity, k as u8 + 1),
            None => (spec.background, 0),
        };
        let jitter = if spec.noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        data.push((value + jitter) as f32);
        truth.push(label);
    }
    Ok((ScalarVolume::from_data(meta, data)?, truth))
}
