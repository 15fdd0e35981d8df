//! Dense 3-mode tensors: storage, matricization, refolding, and mode products.
//!
//! Entries are stored in a single contiguous buffer in lexicographic
//! `(i1, i2, i3)` order with `i3` varying fastest.  Matricization along mode
//! `k` places the remaining two indices cyclically, with mode `k+2` varying
//! fastest, so that `M1(S x1 U1 x2 U2 x3 U3) = U1 * M1(S) * (U2 kron U3)^T`
//! and the analogous identities hold for modes 2 and 3.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real-valued 3-mode tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl Tensor3 {
    /// Builds a tensor from dimensions and a value buffer in lexicographic
    /// `(i1, i2, i3)` order (`i3` fastest).
    pub fn new(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Argument(format!("dimensions must be positive, got {dims:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::Argument(format!(
                "value buffer has length {}, expected {}",
                values.len(),
                n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("tensor entries must be finite".into()));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, values: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i1 in 0..dims[0] {
            for i2 in 0..dims[1] {
                for i3 in 0..dims[2] {
                    values.push(f(i1, i2, i3));
                }
            }
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.dims[1] + i2) * self.dims[2] + i3
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.values[self.offset(i1, i2, i3)]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: f64) {
        let o = self.offset(i1, i2, i3);
        self.values[o] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Tensor3 {
        Tensor3 { dims: self.dims, values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::Argument(format!(
                "dimension mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Tensor3 { dims: self.dims, values })
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::Argument(format!(
                "dimension mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Tensor3 { dims: self.dims, values })
    }
}

fn check_mode(mode: usize) -> Result<()> {
    if !(1..=3).contains(&mode) {
        return Err(Error::Argument(format!("mode must be 1, 2, or 3, got {mode}")));
    }
    Ok(())
}

/// Column index of entry `(i1, i2, i3)` in the mode-`k` unfolding.
///
/// The remaining indices are ordered cyclically with mode `k+2` fastest:
/// mode 1 -> `(i2, i3)` with `i3` fastest, mode 2 -> `(i3, i1)` with `i1`
/// fastest, mode 3 -> `(i1, i2)` with `i2` fastest.
#[inline]
fn unfold_col(mode: usize, dims: [usize; 3], i: [usize; 3]) -> usize {
    match mode {
        1 => i[1] * dims[2] + i[2],
        2 => i[2] * dims[0] + i[0],
        3 => i[0] * dims[1] + i[1],
        _ => unreachable!(),
    }
}

/// Mode-`k` matricization, a `p_k x p_{-k}` matrix.
pub fn matricize(t: &Tensor3, mode: usize) -> Result<DMatrix<f64>> {
    check_mode(mode)?;
    let dims = t.dims();
    let rows = dims[mode - 1];
    let cols = t.len() / rows;
    let mut m = DMatrix::zeros(rows, cols);
    for i1 in 0..dims[0] {
        for i2 in 0..dims[1] {
            for i3 in 0..dims[2] {
                let idx = [i1, i2, i3];
                m[(idx[mode - 1], unfold_col(mode, dims, idx))] = t.get(i1, i2, i3);
            }
        }
    }
    Ok(m)
}

/// Inverse of [`matricize`] for the same mode and convention.
pub fn refold(m: &DMatrix<f64>, mode: usize, dims: [usize; 3]) -> Result<Tensor3> {
    check_mode(mode)?;
    let rows = dims[mode - 1];
    let cols = dims[0] * dims[1] * dims[2] / rows;
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Argument(format!(
            "matrix is {}x{}, expected {}x{} for mode {} refold into {:?}",
            m.nrows(),
            m.ncols(),
            rows,
            cols,
            mode,
            dims
        )));
    }
    let mut t = Tensor3::zeros(dims);
    for i1 in 0..dims[0] {
        for i2 in 0..dims[1] {
            for i3 in 0..dims[2] {
                let idx = [i1, i2, i3];
                t.set(i1, i2, i3, m[(idx[mode - 1], unfold_col(mode, dims, idx))]);
            }
        }
    }
    Ok(t)
}

/// Mode-`k` product applying the matrix as given:
/// `(T xk M)_{..j..} = sum_i T_{..i..} M_{ji}`; the output replaces `p_k`
/// by `M.nrows()`.
pub fn mode_product(t: &Tensor3, m: &DMatrix<f64>, mode: usize) -> Result<Tensor3> {
    check_mode(mode)?;
    let dims = t.dims();
    if m.ncols() != dims[mode - 1] {
        return Err(Error::Argument(format!(
            "matrix has {} columns but mode {} has dimension {}",
            m.ncols(),
            mode,
            dims[mode - 1]
        )));
    }
    let unfolded = matricize(t, mode)?;
    let product = m * unfolded;
    let mut new_dims = dims;
    new_dims[mode - 1] = m.nrows();
    refold(&product, mode, new_dims)
}

/// Multilinear product `core x1 m1 x2 m2 x3 m3`.
pub fn multilinear(
    core: &Tensor3,
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    m3: &DMatrix<f64>,
) -> Result<Tensor3> {
    let t = mode_product(core, m1, 1)?;
    let t = mode_product(&t, m2, 2)?;
    mode_product(&t, m3, 3)
}

/// Parses the tensor text format: first line `p1 p2 p3`, then
/// whitespace-separated entries in lexicographic `(i1, i2, i3)` order.
pub fn parse_tensor_text(text: &str) -> Result<Tensor3> {
    let mut lines = text.lines().enumerate();
    let (header_line, header) = loop {
        match lines.next() {
            Some((n, l)) if !l.trim().is_empty() => break (n + 1, l),
            Some(_) => continue,
            None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: header_line,
                msg: format!("expected positive integer dimension, got `{tok}`"),
            })
        })
        .collect::<Result<_>>()?;
    if dims.len() != 3 || dims.iter().any(|&d| d == 0) {
        return Err(Error::Parse {
            line: header_line,
            msg: format!("header must be three positive integers, got `{header}`"),
        });
    }
    let dims = [dims[0], dims[1], dims[2]];
    let expected = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(expected);
    for (n, l) in lines {
        for tok in l.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("expected a real number, got `{tok}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("non-finite entry `{tok}`"),
                });
            }
            if values.len() == expected {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("too many entries, expected {expected}"),
                });
            }
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {expected} entries, found {}", values.len()),
        });
    }
    Tensor3::new(dims, values)
}

/// Writes the tensor text format (one slice of `i1` per line group is not
/// required; entries are emitted one row of `(i1, i2)` per line).
pub fn write_tensor_text(t: &Tensor3) -> String {
    let [p1, p2, p3] = t.dims();
    let mut out = String::new();
    let _ = writeln!(out, "{p1} {p2} {p3}");
    for i1 in 0..p1 {
        for i2 in 0..p2 {
            let mut first = true;
            for i3 in 0..p3 {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{:.16e}", t.get(i1, i2, i3));
                first = false;
            }
            out.push('\n');
        }
    }
    out
}
