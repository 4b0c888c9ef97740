//! Uniform grids and node-valued fields extended by zero outside the domain.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainSpec};
use crate::error::{invalid, Error, Result};
use crate::Scalar;

/// Uniform grid of `shape[0] x ... x shape[N-1]` nodes at
/// `origin + spacing * index`. The last axis is contiguous in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T, const N: usize> {
    origin: [T; N],
    spacing: T,
    shape: [usize; N],
    strides: [usize; N],
}

impl<T: Scalar, const N: usize> Grid<T, N> {
    pub fn new(origin: [T; N], spacing: T, shape: [usize; N]) -> Result<Self> {
        if !(spacing.is_finite() && spacing > T::zero()) {
            return Err(invalid(format!("grid spacing {spacing} must be positive")));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(invalid("grid needs at least two nodes per axis"));
        }
        let mut strides = [1usize; N];
        for i in (0..N.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1];
        }
        Ok(Self { origin, spacing, shape, strides })
    }

    /// Grid centered on the domain center, covering the domain plus a margin
    /// of at least `margin + 2 * spacing` on every side.
    pub fn covering(domain: &Domain<T, N>, spacing: T, margin: T) -> Result<Self> {
        if !(spacing.is_finite() && spacing > T::zero()) {
            return Err(invalid(format!("grid spacing {spacing} must be positive")));
        }
        let c = domain.center();
        let ext = domain.half_extents();
        let mut origin = [T::zero(); N];
        let mut shape = [0usize; N];
        for i in 0..N {
            let half = ((ext[i] + margin) / spacing).ceil().to_usize().ok_or_else(|| invalid("grid too large"))? + 2;
            origin[i] = c[i] - spacing * T::from_usize_lossy(half);
            shape[i] = 2 * half + 1;
        }
        Self::new(origin, spacing, shape)
    }

    pub fn origin(&self) -> &[T; N] {
        &self.origin
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn shape(&self) -> &[usize; N] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize; N] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear(&self, idx: &[usize; N]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi(&self, mut lin: usize) -> [usize; N] {
        let mut out = [0usize; N];
        for i in 0..N {
            out[i] = lin / self.strides[i];
            lin %= self.strides[i];
        }
        out
    }

    pub fn node(&self, lin: usize) -> [T; N] {
        let idx = self.multi(lin);
        std::array::from_fn(|i| self.origin[i] + self.spacing * T::from_usize_lossy(idx[i]))
    }

    pub fn upper(&self) -> [T; N] {
        std::array::from_fn(|i| self.origin[i] + self.spacing * T::from_usize_lossy(self.shape[i] - 1))
    }

    pub fn contains_point(&self, p: &[T; N]) -> bool {
        let hi = self.upper();
        (0..N).all(|i| p[i] >= self.origin[i] && p[i] <= hi[i])
    }

    /// Base cell index and fractional offsets of `p`, or `None` outside.
    pub(crate) fn locate(&self, p: &[T; N]) -> Option<([usize; N], [T; N])> {
        if !self.contains_point(p) {
            return None;
        }
        let mut base = [0usize; N];
        let mut frac = [T::zero(); N];
        for i in 0..N {
            let s = (p[i] - self.origin[i]) / self.spacing;
            let mut k = s.floor().to_usize().unwrap_or(0);
            if k >= self.shape[i] - 1 {
                k = self.shape[i] - 2;
            }
            base[i] = k;
            frac[i] = (s - T::from_usize_lossy(k)).max(T::zero()).min(T::one());
        }
        Some((base, frac))
    }
}

/// Node values of `u^eps` on a grid, zero at every node outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField<T, const N: usize> {
    grid: Grid<T, N>,
    domain: Domain<T, N>,
    values: Vec<T>,
}

impl<T: Scalar, const N: usize> ValueField<T, N> {
    pub fn zeros(grid: Grid<T, N>, domain: Domain<T, N>) -> Self {
        let values = vec![T::zero(); grid.len()];
        Self { grid, domain, values }
    }

    /// Samples `f` at interior nodes; exterior nodes are set to zero.
    pub fn from_fn<F: Fn(&[T; N]) -> T>(grid: Grid<T, N>, domain: Domain<T, N>, f: F) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                if domain.contains(&x) {
                    f(&x)
                } else {
                    T::zero()
                }
            })
            .collect();
        Self { grid, domain, values }
    }

    /// Wraps raw node values; exterior nodes must already be zero.
    pub fn from_values(grid: Grid<T, N>, domain: Domain<T, N>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        let field = Self { grid, domain, values };
        if let Some(k) = (0..field.values.len())
            .find(|&k| !field.domain.contains(&field.grid.node(k)) && field.values[k] != T::zero())
        {
            return Err(invalid(format!("exterior node {k} holds a nonzero value")));
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Grid<T, N> {
        &self.grid
    }

    pub fn domain(&self) -> &Domain<T, N> {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn value_at_node(&self, idx: &[usize; N]) -> T {
        self.values[self.grid.linear(idx)]
    }

    /// Linear indices of nodes strictly inside the domain.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.domain.contains(&self.grid.node(k))).collect()
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    /// Multilinear interpolation, with the exterior condition taking
    /// precedence: any `p` outside the domain evaluates to exactly zero.
    pub fn interpolate(&self, p: &[T; N]) -> Result<T> {
        let (base, frac) = self.grid.locate(p).ok_or(Error::OutOfBounds)?;
        if !self.domain.contains(p) {
            return Ok(T::zero());
        }
        let b = self.grid.linear(&base);
        let mut acc = T::zero();
        for corner in 0..(1usize << N) {
            let mut w = T::one();
            let mut off = 0;
            for i in 0..N {
                if corner >> i & 1 == 1 {
                    w = w * frac[i];
                    off += self.grid.strides[i];
                } else {
                    w = w * (T::one() - frac[i]);
                }
            }
            acc = acc + w * self.values[b + off];
        }
        Ok(acc)
    }

    /// Central-difference gradient with step equal to the grid spacing.
    pub fn gradient(&self, p: &[T; N]) -> Result<[T; N]> {
        let h = self.grid.spacing;
        let mut g = [T::zero(); N];
        for i in 0..N {
            let mut plus = *p;
            let mut minus = *p;
            plus[i] = plus[i] + h;
            minus[i] = minus[i] - h;
            g[i] = (self.interpolate(&plus)? - self.interpolate(&minus)?) / (h + h);
        }
        Ok(g)
    }
}

/// Identifier written in the first line of every field file.
pub const FIELD_FORMAT: &str = "curvature-game/value-field";
pub const FIELD_FORMAT_VERSION: u32 = 1;

/// JSON header of a field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub domain: DomainSpec,
    pub eps: f64,
    pub k: f64,
    pub h: f64,
    pub origin: Vec<f64>,
    pub shape: Vec<usize>,
    /// Free-form run metadata (effective solver configuration and so on).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

/// Formats with 17 significant digits so output is byte-stable and round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl<T: Scalar, const N: usize> ValueField<T, N> {
    pub fn header(&self, eps: T, k: T, meta: serde_json::Value) -> FieldHeader {
        FieldHeader {
            format: FIELD_FORMAT.to_string(),
            version: FIELD_FORMAT_VERSION,
            dim: N,
            domain: self.domain.spec(),
            eps: eps.to_f64_lossy(),
            k: k.to_f64_lossy(),
            h: self.grid.spacing.to_f64_lossy(),
            origin: crate::vector::to_f64(&self.grid.origin).to_vec(),
            shape: self.grid.shape.to_vec(),
            meta,
        }
    }

    /// Writes the field file: one line of JSON header, then one CSV line
    /// per row of the last grid axis (row-major node order).
    pub fn write_to<W: Write>(&self, header: &FieldHeader, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        let row = self.grid.shape[N - 1];
        for chunk in self.values.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| fmt_f64(v.to_f64_lossy())).collect();
            out.write_all(line.join(",").as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<(FieldHeader, Self)> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty file".into()))?
            .map_err(|e| Error::Format(e.to_string()))?;
        let header: FieldHeader = serde_json::from_str(&first).map_err(|e| Error::Format(e.to_string()))?;
        if header.format != FIELD_FORMAT {
            return Err(Error::Format(format!("unknown format tag {:?}", header.format)));
        }
        if header.version != FIELD_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", header.version)));
        }
        if header.dim != N || header.origin.len() != N || header.shape.len() != N {
            return Err(Error::Format(format!("field has dimension {}, expected {N}", header.dim)));
        }
        let domain = Domain::from_spec(&header.domain)?;
        let origin: [T; N] = std::array::from_fn(|i| T::lit(header.origin[i]));
        let shape: [usize; N] = std::array::from_fn(|i| header.shape[i]);
        let grid = Grid::new(origin, T::lit(header.h), shape)?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| Error::Format(format!("bad number {tok:?}")))?;
                values.push(T::lit(v));
            }
        }
        let field = Self::from_values(grid, domain, values).map_err(|e| Error::Format(e.to_string()))?;
        Ok((header, field))
    }
}
