//! Dense complex linear algebra for the small Hilbert spaces used here
//! (two qubits plus at most a four-level eavesdropper register).
//!
//! Basis ordering: the first tensor factor is the most significant digit,
//! so `|ab⟩` lives at index `2a + b`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Numerical tolerances shared by the library and its tests.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Hermiticity, trace and normalization checks.
    pub validation: f64,
    /// Eigen-decomposition reassembly and orthonormality.
    pub reconstruction: f64,
    /// Jacobi stopping criterion on the off-diagonal Frobenius norm.
    pub jacobi_offdiag: f64,
    /// Most negative eigenvalue still accepted in a density matrix.
    pub eigen_floor: f64,
    /// Largest imaginary residue discarded from an expectation value.
    pub imaginary: f64,
}

pub const TOL: Tolerances = Tolerances {
    validation: 1e-12,
    reconstruction: 1e-10,
    jacobi_offdiag: 1e-13,
    eigen_floor: -1e-10,
    imaginary: 1e-10,
};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Column vector of complex amplitudes.
#[derive(Clone, PartialEq)]
pub struct CVec {
    data: Vec<C64>,
}

impl CVec {
    pub fn new(data: Vec<C64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Self { data }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| r(x)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![C64::default(); dim])
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[index] = r(1.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() <= TOL.validation
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        self.scale(r(1.0 / n))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.data.iter().map(|&z| z * s).collect())
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &CVec) -> C64 {
        assert_eq!(self.dim(), other.dim(), "inner product dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨self|other⟩|`; equals 1 for unit vectors that agree up to global phase.
    pub fn overlap(&self, other: &CVec) -> f64 {
        self.inner(other).norm()
    }

    pub fn same_ray(&self, other: &CVec) -> bool {
        (self.overlap(other) - 1.0).abs() <= TOL.reconstruction
    }

    pub fn kron(&self, other: &CVec) -> CVec {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.data {
            for b in &other.data {
                out.push(a * b);
            }
        }
        CVec::new(out)
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> CMat {
        self.outer(self)
    }

    /// `|self⟩⟨other|`.
    pub fn outer(&self, other: &CVec) -> CMat {
        CMat::from_fn(self.dim(), other.dim(), |i, j| {
            self.data[i] * other.data[j].conj()
        })
    }

    pub fn max_abs_diff(&self, other: &CVec) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.data[i]
    }
}

impl fmt::Debug for CVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.iter()).finish()
    }
}

/// Row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![C64::default(); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, dim, |i, j| if i == j { r(1.0) } else { r(0.0) })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Square matrix from row-major entries.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let n = rows.len();
        let cols = rows[0].len();
        assert!(rows.iter().all(|row| row.len() == cols), "ragged rows");
        Self::from_fn(n, cols, |i, j| rows[i][j])
    }

    pub fn diagonal(values: &[C64]) -> Self {
        Self::from_fn(values.len(), values.len(), |i, j| {
            if i == j {
                values[i]
            } else {
                r(0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn dagger(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::default() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        assert_eq!(self.cols, v.dim(), "matrix-vector dimension mismatch");
        CVec::new(
            (0..self.rows)
                .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
                .collect(),
        )
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &CMat) -> CMat {
        u.matmul(self).matmul(&u.dagger())
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> CMat {
        self.scale(r(s))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= TOL.validation
    }

    pub fn is_unitary(&self) -> bool {
        self.is_square() && self.matmul(&self.dagger()).max_abs_diff(&CMat::identity(self.rows)) <= TOL.validation
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate_density(&self) -> Result<()> {
        let dev = self.hermitian_deviation();
        if dev > TOL.validation {
            return Err(Error::NotHermitian(dev));
        }
        let tr = self.trace();
        if (tr - r(1.0)).norm() > TOL.validation {
            return Err(Error::NotDensity(format!("trace {tr}")));
        }
        let eig = eig_hermitian(self)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < TOL.eigen_floor {
            return Err(Error::NotDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn is_density(&self) -> bool {
        self.validate_density().is_ok()
    }

    /// Forces exact Hermiticity by averaging with the adjoint.
    pub fn hermitize(&self) -> CMat {
        (self + &self.dagger()).scale_real(0.5)
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs)
    }
}

impl Mul<&CVec> for &CMat {
    type Output = CVec;
    fn mul(self, rhs: &CVec) -> CVec {
        self.apply(rhs)
    }
}

impl fmt::Debug for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

pub fn identity2() -> CMat {
    CMat::identity(2)
}

pub fn sigma_x() -> CMat {
    CMat::from_rows(&[&[r(0.0), r(1.0)], &[r(1.0), r(0.0)]])
}

pub fn sigma_y() -> CMat {
    CMat::from_rows(&[&[r(0.0), c(0.0, -1.0)], &[c(0.0, 1.0), r(0.0)]])
}

pub fn sigma_z() -> CMat {
    CMat::from_rows(&[&[r(1.0), r(0.0)], &[r(0.0), r(-1.0)]])
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &CMat, b: &CMat) -> CMat {
    CMat::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// Kronecker product of a list of factors.
pub fn tensor_all(factors: &[&CMat]) -> CMat {
    let (first, rest) = factors.split_first().expect("at least one factor");
    rest.iter().fold((*first).clone(), |acc, m| tensor(&acc, m))
}

/// Embeds a local operator acting on subsystem `site` into the full space.
pub fn embed(op: &CMat, site: usize, dims: &[usize]) -> CMat {
    assert_eq!(op.rows(), dims[site], "local operator does not match subsystem");
    let ids: Vec<CMat> = dims.iter().map(|&d| CMat::identity(d)).collect();
    let factors: Vec<&CMat> = (0..dims.len())
        .map(|k| if k == site { op } else { &ids[k] })
        .collect();
    tensor_all(&factors)
}

fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

/// Reduced state on the subsystems listed in `keep` (in increasing order of
/// their position in `dims`).
pub fn partial_trace(rho: &CMat, dims: &[usize], keep: &[usize]) -> Result<CMat> {
    let total: usize = dims.iter().product();
    if !rho.is_square() || rho.rows() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: rho.rows(),
        });
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            found: bad + 1,
        });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = kept_dims.iter().product();

    let compose = |d: &[usize], which: &[usize]| {
        which.iter().fold(0usize, |acc, &k| acc * dims[k] + d[k])
    };

    let mut out = CMat::zeros(out_dim, out_dim);
    let mut di = vec![0; dims.len()];
    let mut dj = vec![0; dims.len()];
    for i in 0..total {
        digits(i, dims, &mut di);
        for j in 0..total {
            digits(j, dims, &mut dj);
            if traced.iter().all(|&k| di[k] == dj[k]) {
                let (a, b) = (compose(&di, &kept), compose(&dj, &kept));
                out[(a, b)] += rho[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Orthonormal, `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<CVec>,
}

impl Eigen {
    pub fn reassemble(&self) -> CMat {
        let n = self.vectors[0].dim();
        self.values
            .iter()
            .zip(&self.vectors)
            .fold(CMat::zeros(n, n), |acc, (&l, v)| &acc + &v.projector().scale_real(l))
    }
}

/// Cyclic complex Jacobi eigensolver.
pub fn eig_hermitian(m: &CMat) -> Result<Eigen> {
    let dev = m.hermitian_deviation();
    if dev > TOL.validation * m.frobenius().max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    let n = m.rows();
    let mut a = m.hermitize();
    let mut w = CMat::identity(n);
    let scale = a.frobenius().max(1.0);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= TOL.jacobi_offdiag * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let b = apq.norm();
                if b <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = C64::from_polar(1.0, -apq.arg());
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * b);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // Rotation restricted to (p, q): [[c, s], [-s e^{-iφ}, c e^{-iφ}]].
                let v_pp = r(cs);
                let v_pq = r(sn);
                let v_qp = phase * (-sn);
                let v_qq = phase * cs;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * v_pp + akq * v_qp;
                    a[(k, q)] = akp * v_pq + akq * v_qq;
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = wkp * v_pp + wkq * v_qp;
                    w[(k, q)] = wkp * v_pq + wkq * v_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = v_pp.conj() * apk + v_qp.conj() * aqk;
                    a[(q, k)] = v_pq.conj() * apk + v_qq.conj() * aqk;
                }
                a[(p, q)] = r(0.0);
                a[(q, p)] = r(0.0);
                a[(p, p)] = r(a[(p, p)].re);
                a[(q, q)] = r(a[(q, q)].re);
            }
        }
    }

    let mut pairs: Vec<(f64, CVec)> = (0..n)
        .map(|k| (a[(k, k)].re, CVec::new((0..n).map(|i| w[(i, k)]).collect())))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(Eigen { values, vectors })
}

/// Von Neumann entropy in bits, with `0 log 0 = 0`.
pub fn von_neumann_entropy(rho: &CMat) -> Result<f64> {
    rho.validate_density()?;
    let eig = eig_hermitian(rho)?;
    Ok(eig
        .values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.log2())
        .sum::<f64>()
        .max(0.0))
}

/// `Tr(ρ O)` for Hermitian `ρ` and `O`.
pub fn expectation(rho: &CMat, obs: &CMat) -> Result<f64> {
    if rho.rows() != obs.rows() || !rho.is_square() || !obs.is_square() {
        return Err(Error::DimensionMismatch {
            expected: rho.rows(),
            found: obs.rows(),
        });
    }
    for m in [rho, obs] {
        let dev = m.hermitian_deviation();
        if dev > TOL.validation {
            return Err(Error::NotHermitian(dev));
        }
    }
    let n = rho.rows();
    let mut acc = C64::default();
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * obs[(j, i)];
        }
    }
    if acc.im.abs() > TOL.imaginary {
        return Err(Error::ImaginaryExpectation(acc.im));
    }
    Ok(acc.re)
}
