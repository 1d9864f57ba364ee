//! Dense row-major matrices and vectors, Kronecker/Hadamard/vectorization
//! operators, and a sign + log-magnitude scalar for overflow-free powers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite reals.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("non-finite entry at flat index {i}"))),
        None => Ok(()),
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Size(format!(
                "matrix shape {rows}x{cols} has a zero dimension"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Size(format!("matrix shape {rows}x{cols} overflows")))?;
        if data.len() != expected {
            return Err(Error::Size(format!(
                "expected {expected} entries for {rows}x{cols}, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Size("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.saturating_mul(cols));
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_fn(rows, cols, |_, _| 0.0)
    }

    /// The all-ones matrix.
    pub fn ones(rows: usize, cols: usize) -> Result<Self> {
        Self::from_fn(rows, cols, |_, _| 1.0)
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::from_fn(d, d, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Overwrite one entry. Non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Domain("non-finite entry".into()));
        }
        if i >= self.rows {
            return Err(Error::Index {
                index: i,
                len: self.rows,
            });
        }
        if j >= self.cols {
            return Err(Error::Index {
                index: j,
                len: self.cols,
            });
        }
        self.data[i * self.cols + j] = value;
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Size(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, data)
    }

    pub fn mul_vec(&self, x: &Vector) -> Result<Vector> {
        if self.cols != x.dim() {
            return Err(Error::Size(format!(
                "cannot multiply {}x{} by vector of dim {}",
                self.rows,
                self.cols,
                x.dim()
            )));
        }
        let out = (0..self.rows)
            .map(|i| dot(self.row(i), x.as_slice()))
            .collect();
        Vector::new(out)
    }

    /// Row sums `A·1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn is_all_ones(&self) -> bool {
        self.data.iter().all(|&v| v == 1.0)
    }
}

/// Dense vector of finite reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Size("vector must have positive dimension".into()));
        }
        check_finite(&entries)?;
        Ok(Self(entries))
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    /// Unit vector `e_j` (0-based `j`).
    pub fn basis(n: usize, j: usize) -> Result<Self> {
        if j >= n {
            return Err(Error::Index { index: j, len: n });
        }
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Size(format!(
                "dot of dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(dot(&self.0, &other.0))
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kronecker product. Entry `(i1·n2 + i2, j1·d2 + j2)` (0-based) is
/// `a[i1, j1] · b[i2, j2]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let overflow = || {
        Error::Size(format!(
            "kron of {}x{} and {}x{} overflows",
            a.rows, a.cols, b.rows, b.cols
        ))
    };
    let rows = a.rows.checked_mul(b.rows).ok_or_else(overflow)?;
    let cols = a.cols.checked_mul(b.cols).ok_or_else(overflow)?;
    rows.checked_mul(cols).ok_or_else(overflow)?;

    let mut data = vec![0.0; rows * cols];
    for i1 in 0..a.rows {
        for i2 in 0..b.rows {
            let r = i1 * b.rows + i2;
            let out = &mut data[r * cols..(r + 1) * cols];
            for j1 in 0..a.cols {
                let x = a.get(i1, j1);
                for j2 in 0..b.cols {
                    out[j1 * b.cols + j2] = x * b.get(i2, j2);
                }
            }
        }
    }
    Matrix::new(rows, cols, data)
}

pub fn hadamard(x: &Vector, u: &Vector) -> Result<Vector> {
    if x.dim() != u.dim() {
        return Err(Error::Size(format!(
            "hadamard of dims {} and {}",
            x.dim(),
            u.dim()
        )));
    }
    Vector::new(x.0.iter().zip(&u.0).map(|(a, b)| a * b).collect())
}

/// Row-major flattening, consistent with the indexing of [`kron`].
pub fn vectorize(a: &Matrix) -> Vector {
    Vector(a.data.clone())
}

/// A real number stored as sign and natural-log magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScalar {
    sign: i8,
    /// `ln |x|`; meaningless when `sign == 0`.
    logmag: f64,
}

impl LogScalar {
    pub const ZERO: LogScalar = LogScalar {
        sign: 0,
        logmag: f64::NEG_INFINITY,
    };
    pub const ONE: LogScalar = LogScalar {
        sign: 1,
        logmag: 0.0,
    };

    /// A positive number given by its natural log.
    pub fn from_ln(logmag: f64) -> Self {
        Self { sign: 1, logmag }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: if x > 0.0 { 1 } else { -1 },
                logmag: x.abs().ln(),
            }
        }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn ln_abs(&self) -> f64 {
        self.logmag
    }

    /// Back to `f64`; overflows to ±inf when the magnitude exceeds `f64::MAX`.
    pub fn to_f64(&self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.logmag.exp(),
        }
    }

    pub fn mul(self, other: LogScalar) -> LogScalar {
        if self.sign == 0 || other.sign == 0 {
            return Self::ZERO;
        }
        Self {
            sign: self.sign * other.sign,
            logmag: self.logmag + other.logmag,
        }
    }

    pub fn powf(self, beta: f64) -> Result<LogScalar> {
        match self.sign {
            1 => Ok(Self::from_ln(beta * self.logmag)),
            0 if beta > 0.0 => Ok(Self::ZERO),
            0 => Ok(Self::ONE),
            _ => Err(Error::Domain("real power of a negative number".into())),
        }
    }

    pub fn add(self, other: LogScalar) -> LogScalar {
        if self.sign == 0 {
            return other;
        }
        if other.sign == 0 {
            return self;
        }
        let (big, small) = if self.logmag >= other.logmag {
            (self, other)
        } else {
            (other, self)
        };
        let diff = small.logmag - big.logmag;
        if big.sign == small.sign {
            Self {
                sign: big.sign,
                logmag: big.logmag + diff.exp().ln_1p(),
            }
        } else if diff == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: big.sign,
                logmag: big.logmag + (-diff.exp()).ln_1p(),
            }
        }
    }
}

/// Vector of [`LogScalar`] entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogVector(Vec<LogScalar>);

impl LogVector {
    pub fn new(entries: Vec<LogScalar>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Size(
                "log vector must have positive dimension".into(),
            ));
        }
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[LogScalar] {
        &self.0
    }

    pub fn get(&self, i: usize) -> LogScalar {
        self.0[i]
    }

    /// Sum of all entries, accumulated with log-sum-exp against the largest
    /// magnitude.
    pub fn sum(&self) -> LogScalar {
        let max = self
            .0
            .iter()
            .filter(|x| x.sign != 0)
            .map(|x| x.logmag)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return LogScalar::ZERO;
        }
        let acc: f64 = self
            .0
            .iter()
            .map(|x| f64::from(x.sign) * (x.logmag - max).exp())
            .sum();
        let mut out = LogScalar::from_f64(acc);
        if out.sign != 0 {
            out.logmag += max;
        }
        out
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(LogScalar::to_f64).collect()
    }
}

/// Entrywise real power `v_i^beta` of a strictly positive vector, in log form.
pub fn pow_log(v: &[f64], beta: f64) -> Result<LogVector> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::Domain(format!(
            "exponent must be finite and nonnegative, got {beta}"
        )));
    }
    let entries = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if x > 0.0 && x.is_finite() {
                Ok(LogScalar::from_ln(beta * x.ln()))
            } else {
                Err(Error::Domain(format!(
                    "entry {i} = {x} is not strictly positive"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LogVector::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn kron_identity_left() {
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.5, -2.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(kron(&one, &b).unwrap(), b);
    }

    #[test]
    fn kron_row_times_column() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let expected = Matrix::from_rows(&[vec![3.0, 6.0], vec![4.0, 8.0]]).unwrap();
        assert_eq!(kron(&a, &b).unwrap(), expected);
    }

    #[test]
    fn kron_shape_overflow_is_size_error() {
        // Shapes are checked before allocation, so a plausible-but-huge product
        // must be rejected without allocating.
        let big = Matrix {
            rows: usize::MAX / 2,
            cols: 1,
            data: vec![],
        };
        let b = Matrix::zeros(3, 1).unwrap();
        assert!(matches!(kron(&big, &b), Err(Error::Size(_))));
    }

    #[test]
    fn hadamard_examples() {
        let x = Vector::new(vec![3.0, 4.0, 2.0]).unwrap();
        let y = Vector::new(vec![5.0, 6.0, 7.0]).unwrap();
        assert_eq!(hadamard(&x, &y).unwrap().as_slice(), &[15.0, 24.0, 14.0]);
        assert_eq!(hadamard(&x, &x).unwrap().as_slice(), &[9.0, 16.0, 4.0]);
        assert_eq!(hadamard(&x, &Vector::ones(3).unwrap()).unwrap(), x);
    }

    #[test]
    fn hadamard_dim_mismatch() {
        let x = Vector::new(vec![1.0, 2.0]).unwrap();
        let y = Vector::new(vec![1.0]).unwrap();
        assert!(matches!(hadamard(&x, &y), Err(Error::Size(_))));
    }

    #[test]
    fn vectorize_row_major() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(vectorize(&a).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            vectorize(&Matrix::identity(2).unwrap()).as_slice(),
            &[1.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn pow_log_small_powers() {
        let p = pow_log(&[2.0, 4.0], 2.0).unwrap().to_f64();
        assert!(rel(p[0], 4.0) < 1e-12 && rel(p[1], 16.0) < 1e-12);
    }

    #[test]
    fn pow_log_matches_exact_integer_power() {
        // 32^5 = 2^25 exactly.
        let exact = (32u64).pow(5) as f64;
        assert_eq!(exact, 33_554_432.0);
        let p = pow_log(&[32.0], 5.0).unwrap().to_f64()[0];
        assert!(rel(p, exact) < 1e-12);
    }

    #[test]
    fn pow_log_zeroth_power() {
        let p = pow_log(&[0.3, 7.0, 1e200], 0.0).unwrap().to_f64();
        assert_eq!(p, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn pow_log_rejects_nonpositive() {
        assert!(matches!(pow_log(&[1.0, 0.0], 2.0), Err(Error::Domain(_))));
        assert!(matches!(pow_log(&[-1.0], 2.0), Err(Error::Domain(_))));
        assert!(matches!(pow_log(&[1.0], -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn pow_log_survives_huge_exponents() {
        // 32^500 overflows f64 but its log is fine.
        let p = pow_log(&[32.0], 500.0).unwrap();
        assert!(rel(p.get(0).ln_abs(), 500.0 * 32f64.ln()) < 1e-15);
        assert!(p.get(0).to_f64().is_infinite());
    }

    #[test]
    fn log_scalar_arithmetic() {
        let a = LogScalar::from_f64(3.0);
        let b = LogScalar::from_f64(-5.0);
        assert!(rel(a.add(b).to_f64(), -2.0) < 1e-12);
        assert!(rel(a.mul(b).to_f64(), -15.0) < 1e-12);
        assert_eq!(a.add(LogScalar::from_f64(-3.0)), LogScalar::ZERO);
        assert!(rel(a.powf(2.5).unwrap().to_f64(), 3f64.powf(2.5)) < 1e-12);
        assert!(b.powf(2.0).is_err());
    }

    #[test]
    fn log_vector_sum() {
        let v = LogVector::new(vec![
            LogScalar::from_f64(1.0),
            LogScalar::from_f64(2.0),
            LogScalar::from_f64(-0.5),
            LogScalar::ZERO,
        ])
        .unwrap();
        assert!(rel(v.sum().to_f64(), 2.5) < 1e-12);
    }

    #[test]
    fn matrix_rejects_non_finite_and_bad_shapes() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(Vector::new(vec![]).is_err());
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let at = a.transpose();
        assert_eq!(at.shape(), (3, 2));
        let g = a.matmul(&at).unwrap();
        assert_eq!(
            g,
            Matrix::from_rows(&[vec![14.0, 32.0], vec![32.0, 77.0]]).unwrap()
        );
        assert!(a.matmul(&a).is_err());
    }
}
