//! Grid-sampled SDFs with trilinear interpolation and a binary file format.

use super::{Aabb, Point3, SdfField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GSDF";
const VERSION: u32 = 1;

/// A scalar field sampled on a regular grid over an axis-aligned box.
///
/// Queries inside the bounds use trilinear interpolation. Queries outside
/// return the boundary value at the clamped point plus the distance to the
/// box, so the field keeps growing monotonically away from the baked region
/// and descent steps that exit the grid are pushed back.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSdf {
    bounds: Aabb,
    resolution: [u32; 3],
    /// Row-major samples, x fastest.
    values: Vec<f32>,
}

impl GridSdf {
    /// Bake an arbitrary field onto a grid. Each axis needs `resolution >= 2`.
    pub fn bake<F: SdfField + ?Sized>(field: &F, bounds: Aabb, resolution: [u32; 3]) -> Result<GridSdf> {
        Self::validate_dims(&bounds, &resolution)?;
        let [nx, ny, nz] = resolution.map(|n| n as usize);
        let mut values = Vec::with_capacity(nx * ny * nz);
        let step = Self::cell_size(&bounds, &resolution);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = Point3::new(
                        bounds.min.x + step.x * i as f64,
                        bounds.min.y + step.y * j as f64,
                        bounds.min.z + step.z * k as f64,
                    );
                    values.push(field.eval(p) as f32);
                }
            }
        }
        Ok(GridSdf { bounds, resolution, values })
    }

    pub fn from_parts(bounds: Aabb, resolution: [u32; 3], values: Vec<f32>) -> Result<GridSdf> {
        Self::validate_dims(&bounds, &resolution)?;
        let expect = resolution.iter().map(|&n| n as usize).product::<usize>();
        if values.len() != expect {
            return Err(Error::format(format!(
                "grid sample count {} does not match resolution product {expect}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::format("grid samples must be finite"));
        }
        Ok(GridSdf { bounds, resolution, values })
    }

    fn validate_dims(bounds: &Aabb, resolution: &[u32; 3]) -> Result<()> {
        if !bounds.is_valid() {
            return Err(Error::format("grid bounds must be finite with min < max"));
        }
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::format("grid resolution must be at least 2 per axis"));
        }
        Ok(())
    }

    fn cell_size(bounds: &Aabb, resolution: &[u32; 3]) -> Point3 {
        Point3::new(
            (bounds.max.x - bounds.min.x) / (resolution[0] - 1) as f64,
            (bounds.max.y - bounds.min.y) / (resolution[1] - 1) as f64,
            (bounds.max.z - bounds.min.z) / (resolution[2] - 1) as f64,
        )
    }

    pub fn resolution(&self) -> [u32; 3] {
        self.resolution
    }

    /// Length of a voxel diagonal, the natural fidelity scale of the grid.
    pub fn voxel_diagonal(&self) -> f64 {
        Self::cell_size(&self.bounds, &self.resolution).norm()
    }

    fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, _] = self.resolution.map(|n| n as usize);
        self.values[(k * (ny) + j) * nx + i] as f64
    }

    fn interpolate(&self, p: Point3) -> f64 {
        let [nx, ny, nz] = self.resolution.map(|n| n as usize);
        let step = Self::cell_size(&self.bounds, &self.resolution);
        let fx = ((p.x - self.bounds.min.x) / step.x).clamp(0.0, (nx - 1) as f64);
        let fy = ((p.y - self.bounds.min.y) / step.y).clamp(0.0, (ny - 1) as f64);
        let fz = ((p.z - self.bounds.min.z) / step.z).clamp(0.0, (nz - 1) as f64);
        let i0 = (fx as usize).min(nx - 2);
        let j0 = (fy as usize).min(ny - 2);
        let k0 = (fz as usize).min(nz - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let tz = fz - k0 as f64;

        let mut acc = 0.0;
        for (dk, wz) in [(0, 1.0 - tz), (1, tz)] {
            for (dj, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
                    acc += wx * wy * wz * self.value(i0 + di, j0 + dj, k0 + dk);
                }
            }
        }
        acc
    }

    /// Serialize to the binary grid format:
    /// magic `GSDF`, version `u32`, bounds 6 x f64 (min then max), resolution
    /// 3 x u32, then row-major f32 samples (x fastest). Little-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(68 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            self.bounds.min.x,
            self.bounds.min.y,
            self.bounds.min.z,
            self.bounds.max.x,
            self.bounds.max.y,
            self.bounds.max.z,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for n in self.resolution {
            out.extend_from_slice(&n.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decode the binary grid format, validating every field before any
    /// allocation larger than the input itself.
    pub fn decode(bytes: &[u8]) -> Result<GridSdf> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::format("bad magic, expected GSDF"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported grid version {version}")));
        }
        let mut b = [0.0f64; 6];
        for v in &mut b {
            *v = r.f64()?;
        }
        let bounds = Aabb::new(Point3::new(b[0], b[1], b[2]), Point3::new(b[3], b[4], b[5]));
        let resolution = [r.u32()?, r.u32()?, r.u32()?];
        Self::validate_dims(&bounds, &resolution)?;

        let count = resolution
            .iter()
            .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64))
            .ok_or_else(|| Error::format("grid resolution overflows"))?;
        let remaining = (r.bytes.len() - r.pos) as u64;
        if remaining != count * 4 {
            return Err(Error::format(format!(
                "grid payload is {remaining} bytes, expected {}",
                count * 4
            )));
        }
        let mut values = Vec::with_capacity(count as usize);
        for _ in 0..count {
            values.push(r.f32()?);
        }
        Self::from_parts(bounds, resolution, values)
    }
}

impl SdfField for GridSdf {
    fn eval(&self, p: Point3) -> f64 {
        if self.bounds.contains(p) {
            self.interpolate(p)
        } else {
            let q = self.bounds.clamp_point(p);
            self.interpolate(q) + (p - q).norm()
        }
    }

    fn gradient(&self, p: Point3) -> Point3 {
        // Differencing at the voxel scale averages out the kinks of the
        // trilinear interpolant across cell faces.
        let h = super::FD_STEP.max(self.voxel_diagonal());
        super::central_gradient(self, p, h)
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("unexpected end of grid file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
