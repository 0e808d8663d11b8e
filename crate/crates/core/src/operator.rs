//! Forward acquisition model: periodic Gaussian blur followed by block-sum
//! downsampling, with its adjoint and the FFT route to per-column weighted
//! norms.
//!
//! The operator maps an `N x N` fine grid (`N = L * M`) onto the `M x M`
//! camera grid. Both stages are realized through one enlarged periodic
//! convolution, which is what makes the column-norm computation O(N^2 log N)
//! instead of quadratic.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::{real_parts, to_complex, Fft2d};

/// Largest fine-grid vector length `materialize_dense` accepts by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// FWHM = 2 sqrt(2 ln 2) sigma for a Gaussian.
pub const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_4;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dense materialization refused: N^2 = {size} exceeds cap {cap}")]
    DenseCapExceeded { size: usize, cap: usize },
}

/// Coarse/fine grid geometry.
///
/// `N = L * M` holds by construction; pixel sizes are in nanometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    m: usize,
    l: usize,
    coarse_pixel_nm: f64,
}

impl GridSpec {
    pub fn new(m: usize, l: usize, coarse_pixel_nm: f64) -> Result<Self, OperatorError> {
        if m < 1 || l < 1 {
            return Err(OperatorError::InvalidParameter(format!(
                "grid sizes must be at least 1 (M = {m}, L = {l})"
            )));
        }
        if !(coarse_pixel_nm > 0.0) || !coarse_pixel_nm.is_finite() {
            return Err(OperatorError::InvalidParameter(format!(
                "coarse pixel size must be positive, got {coarse_pixel_nm}"
            )));
        }
        let n = m
            .checked_mul(l)
            .filter(|n| n.checked_mul(*n).is_some())
            .ok_or_else(|| {
                OperatorError::InvalidParameter(format!("grid too large: M = {m}, L = {l}"))
            })?;
        let _ = n;
        Ok(Self { m, l, coarse_pixel_nm })
    }

    /// Coarse-grid side length in pixels.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Super-resolution factor.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Fine-grid side length, `L * M`.
    pub fn n(&self) -> usize {
        self.m * self.l
    }

    pub fn coarse_pixel_nm(&self) -> f64 {
        self.coarse_pixel_nm
    }

    pub fn fine_pixel_nm(&self) -> f64 {
        self.coarse_pixel_nm / self.l as f64
    }

    /// Field of view side length in nanometers.
    pub fn field_nm(&self) -> f64 {
        self.m as f64 * self.coarse_pixel_nm
    }

    pub fn coarse_len(&self) -> usize {
        self.m * self.m
    }

    pub fn fine_len(&self) -> usize {
        let n = self.n();
        n * n
    }
}

/// Diagonal fidelity weights `w_j = 1 / max(y_j, floor)`.
///
/// The floor keeps weights finite on zero-count pixels; `floor = 0` disables
/// stabilization and then requires strictly positive counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityWeights {
    w: Vec<f64>,
    floor: f64,
}

impl FidelityWeights {
    pub fn from_counts(counts: &[f64], floor: f64) -> Result<Self, OperatorError> {
        if !(floor >= 0.0) || !floor.is_finite() {
            return Err(OperatorError::InvalidParameter(format!(
                "stabilization floor must be nonnegative, got {floor}"
            )));
        }
        let mut w = Vec::with_capacity(counts.len());
        for (j, &y) in counts.iter().enumerate() {
            if !y.is_finite() || y < 0.0 {
                return Err(OperatorError::InvalidParameter(format!(
                    "count {j} must be finite and nonnegative, got {y}"
                )));
            }
            let denom = y.max(floor);
            if denom <= 0.0 {
                return Err(OperatorError::InvalidParameter(format!(
                    "count {j} is zero and stabilization is disabled"
                )));
            }
            w.push(1.0 / denom);
        }
        Ok(Self { w, floor })
    }

    /// Unit weights (identity W), the unweighted-fidelity case.
    pub fn uniform(len: usize) -> Self {
        Self { w: vec![1.0; len], floor: 0.0 }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Stabilization floor the weights were built with.
    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Isotropic Gaussian PSF sampled on the periodic fine grid with the peak at
/// the FFT origin, normalized to unit sum.
pub fn build_psf(grid: &GridSpec, fwhm_nm: f64) -> Result<Vec<f64>, OperatorError> {
    if !(fwhm_nm > 0.0) || !fwhm_nm.is_finite() {
        return Err(OperatorError::InvalidParameter(format!(
            "FWHM must be positive, got {fwhm_nm}"
        )));
    }
    let sigma = fwhm_nm / (FWHM_TO_SIGMA * grid.fine_pixel_nm());
    gaussian_psf(grid, sigma)
}

/// Gaussian PSF from a standard deviation given in fine pixels.
pub fn gaussian_psf(grid: &GridSpec, sigma_fine_px: f64) -> Result<Vec<f64>, OperatorError> {
    if !(sigma_fine_px > 0.0) || !sigma_fine_px.is_finite() {
        return Err(OperatorError::InvalidParameter(format!(
            "sigma must be positive, got {sigma_fine_px}"
        )));
    }
    let n = grid.n();
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_fine_px * sigma_fine_px);
    let offset = |i: usize| -> f64 {
        // Signed cyclic offset from the FFT origin.
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    };
    let mut psf = vec![0.0; n * n];
    let mut sum = 0.0;
    for r in 0..n {
        let dr = offset(r);
        for c in 0..n {
            let dc = offset(c);
            let v = (-(dr * dr + dc * dc) * inv_two_sigma_sq).exp();
            psf[r * n + c] = v;
            sum += v;
        }
    }
    for v in &mut psf {
        *v /= sum;
    }
    Ok(psf)
}

/// Discrete impulse kernel; makes the blur stage an identity.
pub fn impulse_psf(grid: &GridSpec) -> Vec<f64> {
    let mut psf = vec![0.0; grid.fine_len()];
    psf[0] = 1.0;
    psf
}

/// The acquisition operator: periodic convolution with the PSF followed by
/// `L x L` block summation.
///
/// Immutable after construction; applications allocate their own scratch, so
/// one operator can serve concurrent solves.
pub struct ForwardOperator {
    grid: GridSpec,
    psf: Vec<f64>,
    psf_fft: Vec<Complex64>,
    downsample_kernel_fft: Vec<Complex64>,
    combined_sq_fft: Vec<Complex64>,
    fft: Fft2d,
}

impl ForwardOperator {
    pub fn new(grid: GridSpec, psf: Vec<f64>) -> Result<Self, OperatorError> {
        let n = grid.n();
        if psf.len() != grid.fine_len() {
            return Err(OperatorError::DimensionMismatch {
                expected: grid.fine_len(),
                actual: psf.len(),
            });
        }
        let mut sum = 0.0;
        for (i, &v) in psf.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(OperatorError::InvalidParameter(format!(
                    "PSF entry {i} must be finite and nonnegative, got {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(OperatorError::InvalidParameter(format!(
                "PSF must sum to 1 within 1e-12, got {sum}"
            )));
        }

        let fft = Fft2d::new(n);
        let mut psf_fft = to_complex(&psf);
        fft.forward(&mut psf_fft);

        // Block-sum downsampling as a restricted periodic convolution: the
        // kernel is an indicator on cyclic offsets {0, -1, ..., -(L-1)}^2, so
        // that sampling the convolved image at (L*p, L*q) reproduces the
        // L x L block sums.
        let mut down = vec![Complex64::new(0.0, 0.0); n * n];
        for a in 0..grid.l() {
            let r = (n - a) % n;
            for b in 0..grid.l() {
                let c = (n - b) % n;
                down[r * n + c] = Complex64::new(1.0, 0.0);
            }
        }
        fft.forward(&mut down);

        // Combined kernel of the enlarged fully-periodic operator, squared
        // elementwise; its spectrum drives the column-norm computation.
        let mut combined: Vec<Complex64> = psf_fft
            .iter()
            .zip(down.iter())
            .map(|(h, k)| h * k)
            .collect();
        fft.inverse(&mut combined);
        let mut combined_sq = to_complex(
            &combined.iter().map(|v| v.re * v.re).collect::<Vec<f64>>(),
        );
        fft.forward(&mut combined_sq);

        Ok(Self {
            grid,
            psf,
            psf_fft,
            downsample_kernel_fft: down,
            combined_sq_fft: combined_sq,
            fft,
        })
    }

    /// Operator with the Gaussian PSF of the given FWHM.
    pub fn gaussian(grid: GridSpec, fwhm_nm: f64) -> Result<Self, OperatorError> {
        let psf = build_psf(&grid, fwhm_nm)?;
        Self::new(grid, psf)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn psf(&self) -> &[f64] {
        &self.psf
    }

    /// Spectrum of the downsampling kernel `k_L`.
    pub fn downsample_kernel_fft(&self) -> &[Complex64] {
        &self.downsample_kernel_fft
    }

    /// `A x`: blur on the fine grid, then sum each `L x L` block.
    pub fn apply_forward(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let n = self.grid.n();
        if x.len() != self.grid.fine_len() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.grid.fine_len(),
                actual: x.len(),
            });
        }
        let mut buf = to_complex(x);
        self.fft.forward(&mut buf);
        for (v, h) in buf.iter_mut().zip(self.psf_fft.iter()) {
            *v *= h;
        }
        self.fft.inverse(&mut buf);

        let (m, l) = (self.grid.m(), self.grid.l());
        let mut out = vec![0.0; self.grid.coarse_len()];
        for p in 0..m {
            for q in 0..m {
                let mut acc = 0.0;
                for a in 0..l {
                    let row = (l * p + a) * n;
                    for b in 0..l {
                        acc += buf[row + l * q + b].re;
                    }
                }
                out[p * m + q] = acc;
            }
        }
        Ok(out)
    }

    /// `A^T r`: replicate each coarse pixel over its block, then correlate
    /// with the PSF.
    pub fn apply_adjoint(&self, r: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let n = self.grid.n();
        if r.len() != self.grid.coarse_len() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.grid.coarse_len(),
                actual: r.len(),
            });
        }
        let (m, l) = (self.grid.m(), self.grid.l());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.grid.fine_len()];
        for p in 0..m {
            for q in 0..m {
                let v = r[p * m + q];
                for a in 0..l {
                    let row = (l * p + a) * n;
                    for b in 0..l {
                        buf[row + l * q + b] = Complex64::new(v, 0.0);
                    }
                }
            }
        }
        self.fft.forward(&mut buf);
        for (v, h) in buf.iter_mut().zip(self.psf_fft.iter()) {
            *v *= h.conj();
        }
        self.fft.inverse(&mut buf);
        Ok(real_parts(&buf))
    }

    /// Weighted squared column norms `v_i = sum_j a_{j,i}^2 w_j` for all
    /// fine-grid columns at once.
    ///
    /// The weight image is embedded at the stride-`L` sampling positions of
    /// the fine grid and correlated with the squared combined kernel; this is
    /// the adjoint-direction application of the elementwise-squared enlarged
    /// operator and agrees with the dense per-column sums.
    pub fn weighted_column_norms(
        &self,
        weights: &FidelityWeights,
    ) -> Result<Vec<f64>, OperatorError> {
        if weights.len() != self.grid.coarse_len() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.grid.coarse_len(),
                actual: weights.len(),
            });
        }
        let n = self.grid.n();
        let (m, l) = (self.grid.m(), self.grid.l());
        let mut embedded = vec![Complex64::new(0.0, 0.0); self.grid.fine_len()];
        for p in 0..m {
            for q in 0..m {
                embedded[(l * p) * n + l * q] = Complex64::new(weights.as_slice()[p * m + q], 0.0);
            }
        }
        self.fft.forward(&mut embedded);
        for (v, k) in embedded.iter_mut().zip(self.combined_sq_fft.iter()) {
            *v *= k.conj();
        }
        self.fft.inverse(&mut embedded);
        Ok(real_parts(&embedded))
    }

    /// `L^2 max|F(h)|^2 max_j w_j`, the closed-form bound on `||A^T W A||`.
    ///
    /// Cheap but typically loose when some counts are small; use
    /// `power_iteration_norm` for a sharper seed.
    pub fn naive_lipschitz_bound(&self, weights: &FidelityWeights) -> Result<f64, OperatorError> {
        if weights.len() != self.grid.coarse_len() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.grid.coarse_len(),
                actual: weights.len(),
            });
        }
        let max_h = self
            .psf_fft
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max);
        let max_w = weights.as_slice().iter().copied().fold(0.0f64, f64::max);
        let l = self.grid.l() as f64;
        Ok(l * l * max_h * max_h * max_w)
    }

    /// Power-iteration estimate of `||A^T W A||` from the all-ones seed.
    pub fn power_iteration_norm(
        &self,
        weights: &FidelityWeights,
        iters: usize,
    ) -> Result<f64, OperatorError> {
        if iters < 1 {
            return Err(OperatorError::InvalidParameter(
                "power iteration needs at least one iteration".into(),
            ));
        }
        if weights.len() != self.grid.coarse_len() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.grid.coarse_len(),
                actual: weights.len(),
            });
        }
        let len = self.grid.fine_len();
        let mut v = vec![1.0 / (len as f64).sqrt(); len];
        let mut estimate = 0.0;
        for _ in 0..iters {
            let mut coarse = self.apply_forward(&v)?;
            for (c, w) in coarse.iter_mut().zip(weights.as_slice()) {
                *c *= w;
            }
            let next = self.apply_adjoint(&coarse)?;
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(0.0);
            }
            estimate = norm;
            v = next.iter().map(|x| x / norm).collect();
        }
        Ok(estimate)
    }

    /// Dense `M^2 x N^2` matrix of the operator, column by column.
    ///
    /// Test-oracle plumbing; refuses fine grids beyond `DEFAULT_DENSE_CAP`.
    pub fn materialize_dense(&self) -> Result<DenseMatrix, OperatorError> {
        self.materialize_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn materialize_dense_with_cap(&self, cap: usize) -> Result<DenseMatrix, OperatorError> {
        let cols = self.grid.fine_len();
        if cols > cap {
            return Err(OperatorError::DenseCapExceeded { size: cols, cap });
        }
        let rows = self.grid.coarse_len();
        let mut data = vec![0.0; rows * cols];
        let mut basis = vec![0.0; cols];
        for i in 0..cols {
            basis[i] = 1.0;
            let col = self.apply_forward(&basis)?;
            basis[i] = 0.0;
            data[i * rows..(i + 1) * rows].copy_from_slice(&col);
        }
        Ok(DenseMatrix { rows, cols, data })
    }
}

/// Column-major dense matrix used by the brute-force oracle and tests.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Self {
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for col in &columns {
            assert_eq!(col.len(), rows);
            data.extend_from_slice(col);
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(j)) {
                *o += a * xj;
            }
        }
        out
    }

    pub fn matvec_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.rows);
        (0..self.cols)
            .map(|j| self.column(j).iter().zip(r).map(|(a, b)| a * b).sum())
            .collect()
    }
}
