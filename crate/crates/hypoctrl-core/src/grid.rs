//! Uniform tensor grids holding complex samples, with discrete L² geometry,
//! multilinear interpolation and a simple binary interchange format.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result, C64};

/// One uniform grid axis, symmetric about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub len: usize,
    pub spacing: f64,
}

impl Axis {
    pub fn new(len: usize, spacing: f64) -> Result<Self> {
        if len < 2 || spacing <= 0.0 {
            return Err(CoreError::InvalidParameter(
                "axis needs len >= 2 and positive spacing".into(),
            ));
        }
        Ok(Self { len, spacing })
    }

    /// Axis covering [-half_width, half_width] with `len` points.
    pub fn symmetric(half_width: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(CoreError::InvalidParameter("axis needs len >= 2".into()));
        }
        Self::new(len, 2.0 * half_width / (len - 1) as f64)
    }

    pub fn point(&self, i: usize) -> f64 {
        (i as f64 - (self.len - 1) as f64 / 2.0) * self.spacing
    }

    pub fn min(&self) -> f64 {
        self.point(0)
    }

    pub fn max(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    /// Fractional index of a coordinate, possibly outside [0, len-1].
    pub fn frac_index(&self, x: f64) -> f64 {
        x / self.spacing + (self.len - 1) as f64 / 2.0
    }
}

/// Complex samples over a tensor grid, stored C-order (last axis fastest).
#[derive(Debug, Clone)]
pub struct GridFunction {
    axes: Vec<Axis>,
    values: Vec<C64>,
}

impl GridFunction {
    pub fn new(axes: Vec<Axis>, values: Vec<C64>) -> Result<Self> {
        let total: usize = axes.iter().map(|a| a.len).product();
        if axes.is_empty() || values.len() != total {
            return Err(CoreError::Dimension(format!(
                "value count {} does not match grid size {total}",
                values.len()
            )));
        }
        Ok(Self { axes, values })
    }

    pub fn zeros(axes: Vec<Axis>) -> Result<Self> {
        let total: usize = axes.iter().map(|a| a.len).product();
        Self::new(axes, vec![C64::new(0.0, 0.0); total])
    }

    pub fn from_fn<F: FnMut(&[f64]) -> C64>(axes: Vec<Axis>, mut f: F) -> Result<Self> {
        let mut g = Self::zeros(axes)?;
        let dims = g.shape();
        let mut idx = vec![0usize; dims.len()];
        let mut x = vec![0.0f64; dims.len()];
        for flat in 0..g.values.len() {
            g.unflatten(flat, &mut idx);
            for (k, &i) in idx.iter().enumerate() {
                x[k] = g.axes[k].point(i);
            }
            g.values[flat] = f(&x);
        }
        Ok(g)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len).collect()
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// Product of grid spacings (discrete volume element).
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let nd = self.axes.len();
        let mut s = vec![1usize; nd];
        for k in (0..nd.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].len;
        }
        s
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for k in (0..self.axes.len()).rev() {
            idx[k] = flat % self.axes[k].len;
            flat /= self.axes[k].len;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (sum * self.cell_volume()).sqrt()
    }

    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.shape() != other.shape() {
            return Err(CoreError::Dimension("grid shapes differ".into()));
        }
        let s: C64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.cell_volume())
    }

    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(CoreError::Dimension("grid shapes differ".into()));
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((sum * self.cell_volume()).sqrt())
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(CoreError::Dimension("grid shapes differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn scale(&mut self, c: C64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Multilinear interpolation with zero extension outside the box.
    pub fn interp(&self, x: &[f64]) -> C64 {
        debug_assert_eq!(x.len(), self.axes.len());
        let nd = self.axes.len();
        let mut base = vec![0usize; nd];
        let mut frac = vec![0.0f64; nd];
        for k in 0..nd {
            let t = self.axes[k].frac_index(x[k]);
            if t < 0.0 || t > (self.axes[k].len - 1) as f64 {
                return C64::new(0.0, 0.0);
            }
            let f = t.floor().min((self.axes[k].len - 2) as f64);
            base[k] = f as usize;
            frac[k] = t - f;
        }
        let strides = self.strides();
        let mut acc = C64::new(0.0, 0.0);
        for corner in 0..(1usize << nd) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..nd {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    flat += (base[k] + 1) * strides[k];
                } else {
                    w *= 1.0 - frac[k];
                    flat += base[k] * strides[k];
                }
            }
            if w != 0.0 {
                acc += self.values[flat] * w;
            }
        }
        acc
    }

    /// Tensor Lagrange interpolation of the given per-axis order with zero
    /// extension outside the box; stencils are clamped at the boundary.
    pub fn interp_lagrange(&self, x: &[f64], order: usize) -> C64 {
        debug_assert_eq!(x.len(), self.axes.len());
        let nd = self.axes.len();
        let mut bases = vec![0usize; nd];
        let mut weights: Vec<Vec<f64>> = Vec::with_capacity(nd);
        for k in 0..nd {
            let n = self.axes[k].len;
            let t = self.axes[k].frac_index(x[k]);
            if t < 0.0 || t > (n - 1) as f64 {
                return C64::new(0.0, 0.0);
            }
            let m = order.min(n);
            let base = (t.floor() as i64 - (m as i64 / 2 - 1)).clamp(0, (n - m) as i64) as usize;
            bases[k] = base;
            weights.push(lagrange_weights(t - base as f64, m));
        }
        let strides = self.strides();
        let mut acc = C64::new(0.0, 0.0);
        let mut cursor = vec![0usize; nd];
        'outer: loop {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..nd {
                w *= weights[k][cursor[k]];
                flat += (bases[k] + cursor[k]) * strides[k];
            }
            if w != 0.0 {
                acc += self.values[flat] * w;
            }
            for k in (0..nd).rev() {
                cursor[k] += 1;
                if cursor[k] < weights[k].len() {
                    continue 'outer;
                }
                cursor[k] = 0;
                if k == 0 {
                    break 'outer;
                }
            }
        }
        acc
    }

    /// Writes interleaved little-endian re/im pairs plus a JSON sidecar
    /// (same path with ".json" appended) describing axes and shape.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.values {
            file.write_f64::<LittleEndian>(v.re)?;
            file.write_f64::<LittleEndian>(v.im)?;
        }
        file.flush()?;
        let sidecar = Sidecar { axes: self.axes.clone(), shape: self.shape() };
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(sidecar_path(path))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let total: usize = sidecar.shape.iter().product();
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            let re = file.read_f64::<LittleEndian>()?;
            let im = file.read_f64::<LittleEndian>()?;
            values.push(C64::new(re, im));
        }
        let mut probe = [0u8; 1];
        if file.read(&mut probe)? != 0 {
            return Err(CoreError::InvalidParameter(
                "binary grid file longer than sidecar shape".into(),
            ));
        }
        Self::new(sidecar.axes, values)
    }
}

/// Barycentric-free Lagrange weights on the unit-spaced nodes 0..m-1 for an
/// evaluation point given in node units.
pub fn lagrange_weights(frac: f64, m: usize) -> Vec<f64> {
    let mut w = vec![1.0f64; m];
    for j in 0..m {
        for l in 0..m {
            if l != j {
                w[j] *= (frac - l as f64) / (j as f64 - l as f64);
            }
        }
    }
    w
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    axes: Vec<Axis>,
    shape: Vec<usize>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}
