//! Block-circulant matrices: structured storage, Fourier block-diagonalization
//! and FFT-accelerated matrix-vector products.
//!
//! An n-fold block-circulant matrix is fully described by its first block-row
//! `b_0, .., b_{n-1}` (each `p x m`); every further block-row is the previous
//! one cyclically right-shifted by one block. Conjugating with Fourier matrices,
//!
//! ```text
//! (F_n* ⊗ I_p) · B · (F_n ⊗ I_m) = blockdiag(β_0, .., β_{n-1}),
//! ```
//!
//! turns the dense `(n·p) x (n·m)` operator into `n` independent `p x m`
//! blocks, where `β_i` is the (non-unitary) length-n DFT of the block
//! sequence. For real-valued `B` the spectrum is conjugate-symmetric:
//! `β_i = conj(β_{n-i})`, so only the blocks up to `⌊n/2⌋` carry information.
//! The fast matvec path exploits both the block-diagonal structure and this
//! redundancy.
//!
//! DFT convention: `fourier_matrix` is unitary (`1/√n` both directions) so
//! that `F_n* F_n = I_n` holds exactly. Off-the-shelf FFT routines are
//! unnormalized; every wrapper here rescales accordingly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// An n-fold block-circulant matrix stored as its first block-row.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCirculantMatrix {
    n: usize,
    p: usize,
    m: usize,
    blocks: Vec<DMatrix<f64>>,
}

/// The Fourier block-diagonal form of a [`BlockCirculantMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalForm {
    n: usize,
    p: usize,
    m: usize,
    beta: Vec<DMatrix<Complex64>>,
}

impl BlockCirculantMatrix {
    /// Builds the matrix from its first block-row.
    pub fn new(n: usize, p: usize, m: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("block count n must be positive".into()));
        }
        if blocks.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} blocks, got {}",
                blocks.len()
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.nrows() != p || b.ncols() != m {
                return Err(Error::Shape(format!(
                    "block {i} is {}x{}, expected {p}x{m}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { n, p, m, blocks })
    }

    /// Extracts the first block-row of `dense` and validates that all shifted
    /// block-rows agree with it within `tol` (relative to the largest entry).
    ///
    /// Returns the matrix together with the worst observed relative deviation.
    pub fn from_dense(dense: &DMatrix<f64>, n: usize, tol: f64) -> Result<(Self, f64)> {
        if n == 0 || dense.nrows() % n != 0 || dense.ncols() % n != 0 {
            return Err(Error::Shape(format!(
                "dense {}x{} not divisible into {n} x {n} blocks",
                dense.nrows(),
                dense.ncols()
            )));
        }
        let p = dense.nrows() / n;
        let m = dense.ncols() / n;
        let blocks: Vec<DMatrix<f64>> = (0..n)
            .map(|c| dense.view((0, c * m), (p, m)).into_owned())
            .collect();
        let scale = dense.amax().max(1e-300);

        // Block (r, c) of a circulant layout must equal b_{(c - r) mod n}.
        let mut worst = 0.0f64;
        let mut worst_block = 0usize;
        for r in 1..n {
            for c in 0..n {
                let idx = (c + n - r) % n;
                let view = dense.view((r * p, c * m), (p, m));
                for i in 0..p {
                    for j in 0..m {
                        let dev = (view[(i, j)] - blocks[idx][(i, j)]).abs() / scale;
                        if dev > worst {
                            worst = dev;
                            worst_block = idx;
                        }
                    }
                }
            }
        }
        if worst > tol {
            return Err(Error::Structure {
                worst,
                block: worst_block,
                tol,
            });
        }
        Ok((Self { n, p, m, blocks }, worst))
    }

    /// Identity as a block-circulant matrix (`b_0 = I`, all other blocks zero).
    pub fn identity(n: usize, p: usize) -> Self {
        let mut blocks = vec![DMatrix::zeros(p, p); n];
        blocks[0] = DMatrix::identity(p, p);
        Self { n, p, m: p, blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_rows(&self) -> usize {
        self.p
    }

    pub fn block_cols(&self) -> usize {
        self.m
    }

    /// Dense row count `n·p`.
    pub fn nrows(&self) -> usize {
        self.n * self.p
    }

    /// Dense column count `n·m`.
    pub fn ncols(&self) -> usize {
        self.n * self.m
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Expands to the dense `(n·p) x (n·m)` representation.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.nrows(), self.ncols());
        for r in 0..self.n {
            for c in 0..self.n {
                let idx = (c + self.n - r) % self.n;
                dense
                    .view_mut((r * self.p, c * self.m), (self.p, self.m))
                    .copy_from(&self.blocks[idx]);
            }
        }
        dense
    }

    /// Plain dense matvec, used as the reference path.
    pub fn matvec_dense(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.ncols() {
            return Err(Error::Shape(format!(
                "matvec input length {} != {}",
                x.len(),
                self.ncols()
            )));
        }
        Ok(self.to_dense() * x)
    }

    /// Fourier block-diagonalization: `β_i = Σ_s b_s ω^{s·i}`, `ω = e^{-2πi/n}`.
    ///
    /// Only the blocks `β_0..β_{⌊n/2⌋}` are computed from the data; the upper
    /// half is mirrored as `β_{n-i} = conj(β_i)`, which holds exactly for the
    /// real-valued inputs stored here.
    pub fn block_diagonalize(&self) -> BlockDiagonalForm {
        let n = self.n;
        let half = n / 2;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut beta: Vec<DMatrix<Complex64>> = vec![DMatrix::zeros(self.p, self.m); n];

        let mut seq = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..self.p {
            for j in 0..self.m {
                for (s, b) in self.blocks.iter().enumerate() {
                    seq[s] = Complex64::new(b[(i, j)], 0.0);
                }
                fft.process(&mut seq);
                for (k, item) in seq.iter().enumerate().take(half + 1) {
                    beta[k][(i, j)] = *item;
                }
            }
        }
        // Mirror the redundant conjugate blocks.
        for k in half + 1..n {
            beta[k] = beta[n - k].map(|z| z.conj());
        }
        // Real blocks have exactly zero imaginary part.
        beta[0] = beta[0].map(|z| Complex64::new(z.re, 0.0));
        if n % 2 == 0 && n > 1 {
            beta[half] = beta[half].map(|z| Complex64::new(z.re, 0.0));
        }
        BlockDiagonalForm {
            n,
            p: self.p,
            m: self.m,
            beta,
        }
    }
}

impl BlockDiagonalForm {
    pub fn new(n: usize, p: usize, m: usize, beta: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if beta.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} Fourier blocks, got {}",
                beta.len()
            )));
        }
        for (i, b) in beta.iter().enumerate() {
            if b.nrows() != p || b.ncols() != m {
                return Err(Error::Shape(format!(
                    "Fourier block {i} is {}x{}, expected {p}x{m}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { n, p, m, beta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_rows(&self) -> usize {
        self.p
    }

    pub fn block_cols(&self) -> usize {
        self.m
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.beta
    }

    pub fn block(&self, i: usize) -> &DMatrix<Complex64> {
        &self.beta[i]
    }

    /// Inverse transform back to the first block-row (inverse DFT of the
    /// block sequence). The imaginary residue is checked against `tol`
    /// (relative) and discarded.
    pub fn to_block_circulant(&self, tol: f64) -> Result<BlockCirculantMatrix> {
        let n = self.n;
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(n);
        let mut blocks = vec![DMatrix::zeros(self.p, self.m); n];
        let scale = self
            .beta
            .iter()
            .map(crate::linalg::max_abs)
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut seq = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..self.p {
            for j in 0..self.m {
                for (k, b) in self.beta.iter().enumerate() {
                    seq[k] = b[(i, j)];
                }
                ifft.process(&mut seq);
                for (s, v) in seq.iter().enumerate() {
                    let v = v / n as f64;
                    if v.im.abs() / scale > tol {
                        return Err(Error::Numerical(format!(
                            "imaginary residue {:.3e} exceeds {tol:.1e} in block {s}",
                            v.im.abs() / scale
                        )));
                    }
                    blocks[s][(i, j)] = v.re;
                }
            }
        }
        BlockCirculantMatrix::new(n, self.p, self.m, blocks)
    }
}

/// The unitary Fourier matrix `F_n` with entries `ω^{jk}/√n`, `ω = e^{-2πi/n}`.
pub fn fourier_matrix(n: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |j, k| {
        let angle = -2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64;
        Complex64::from_polar(scale, angle)
    })
}

/// Relative computation cost of the FFT-structured matvec against the dense
/// one: `((m+p)·n·log2(n) + n·m·p) / (n²·m·p)`.
///
/// The operation-count model assumes `n` is a power of two.
pub fn speedup_ratio(n: usize, p: usize, m: usize) -> Result<f64> {
    if n == 0 || p == 0 || m == 0 {
        return Err(Error::Domain("n, p, m must be positive".into()));
    }
    if !n.is_power_of_two() {
        return Err(Error::Domain(format!("n = {n} is not a power of two")));
    }
    let (n, p, m) = (n as f64, p as f64, m as f64);
    Ok(((m + p) * n * n.log2() + n * m * p) / (n * n * m * p))
}

// ---------------------------------------------------------------------------
// Fast matvec
// ---------------------------------------------------------------------------

/// Above this cell count the spatial DFTs run through FFT plans; below it a
/// precomputed dense DFT matrix is cheaper than the per-call FFT overhead.
const DENSE_DFT_MAX: usize = 32;

/// Scratch buffers for [`FftMatvec::apply_into`], reusable across calls.
#[derive(Debug, Clone)]
pub struct MatvecScratch {
    // Small-n route: cells as matrix columns, spectra in split real form
    // (real rows on top, imaginary rows below); only the non-redundant low
    // half of the spectrum is materialized.
    x_cells: DMatrix<f64>,    // m × n
    xhat_stack: DMatrix<f64>, // 2m × (n/2 + 1)
    yhat_stack: DMatrix<f64>, // 2p × (n/2 + 1)
    y_cells: DMatrix<f64>,    // p × n
    // Large-n route: planar sequences for the FFT plans.
    input_planar: Vec<Complex64>,  // m sequences of length n
    output_planar: Vec<Complex64>, // p sequences of length n
    xhat: Vec<DVector<Complex64>>, // per-cell input spectra, cells 0..=n/2
    yhat: Vec<DVector<Complex64>>, // per-cell output spectra, all n cells
    xr: DVector<f64>,
    yr: DVector<f64>,
}

/// Precomputed transform plan and Fourier blocks for repeated products `B·x`.
///
/// Real-input redundancy is exploited: block products are evaluated only for
/// the cells `0..=⌊n/2⌋` and mirrored as conjugates, and the purely real
/// cells (`0`, and `n/2` for even `n`) use real arithmetic. For small cell
/// counts the ring DFTs are dense matrix products in split real form; large
/// rings use FFT plans.
pub struct FftMatvec {
    n: usize,
    p: usize,
    m: usize,
    /// Split Fourier blocks for cells `0..=n/2`; the imaginary part of the
    /// real cells is all zero.
    beta_re: Vec<DMatrix<f64>>,
    beta_im: Vec<DMatrix<f64>>,
    /// Complex cells of the small-n route as split-real operators
    /// `[B_re -B_im; B_im B_re]` (2p × 2m), indexed by cell `1..`.
    beta_split: Vec<DMatrix<f64>>,
    /// Small-n analysis coefficients: `F*[r, i]` for the retained cells
    /// `i <= n/2`, split into real and imaginary parts (`n × (n/2+1)`).
    dft_in_re: Option<DMatrix<f64>>,
    dft_in_im: Option<DMatrix<f64>>,
    /// Small-n synthesis coefficients with the conjugate mirror folded in:
    /// row i, column r holds `c_i·F[r, i]` where `c_i = 2` for the paired
    /// cells and `1` for the self-conjugate ones (`(n/2+1) × n`).
    dft_out_re: Option<DMatrix<f64>>,
    dft_out_im: Option<DMatrix<f64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl FftMatvec {
    pub fn new(matrix: &BlockCirculantMatrix) -> Self {
        Self::from_form(&matrix.block_diagonalize())
    }

    pub fn from_form(form: &BlockDiagonalForm) -> Self {
        let n = form.n;
        let half = n / 2;
        let (p, m) = (form.p, form.m);
        let mut planner = FftPlanner::new();
        let beta_re: Vec<DMatrix<f64>> = (0..=half).map(|i| form.beta[i].map(|z| z.re)).collect();
        let beta_im: Vec<DMatrix<f64>> = (0..=half).map(|i| form.beta[i].map(|z| z.im)).collect();
        let mut beta_split = Vec::new();
        let (dft_in_re, dft_in_im, dft_out_re, dft_out_im) = if n <= DENSE_DFT_MAX {
            let complex_cells = if n > 1 { (n - 1) / 2 } else { 0 };
            for i in 1..=complex_cells {
                let mut split = DMatrix::zeros(2 * p, 2 * m);
                split.view_mut((0, 0), (p, m)).copy_from(&beta_re[i]);
                split.view_mut((0, m), (p, m)).copy_from(&(-&beta_im[i]));
                split.view_mut((p, 0), (p, m)).copy_from(&beta_im[i]);
                split.view_mut((p, m), (p, m)).copy_from(&beta_re[i]);
                beta_split.push(split);
            }
            let f = fourier_matrix(n);
            let in_re = DMatrix::from_fn(n, half + 1, |r, i| f[(r, i)].re);
            let in_im = DMatrix::from_fn(n, half + 1, |r, i| -f[(r, i)].im);
            let pair_weight = |i: usize| if i == 0 || 2 * i == n { 1.0 } else { 2.0 };
            let out_re = DMatrix::from_fn(half + 1, n, |i, r| pair_weight(i) * f[(r, i)].re);
            let out_im = DMatrix::from_fn(half + 1, n, |i, r| pair_weight(i) * f[(r, i)].im);
            (Some(in_re), Some(in_im), Some(out_re), Some(out_im))
        } else {
            (None, None, None, None)
        };
        Self {
            n,
            p,
            m,
            beta_re,
            beta_im,
            beta_split,
            dft_in_re,
            dft_in_im,
            dft_out_re,
            dft_out_im,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }

    pub fn scratch(&self) -> MatvecScratch {
        MatvecScratch {
            x_cells: DMatrix::zeros(self.m, self.n),
            xhat_stack: DMatrix::zeros(2 * self.m, self.n / 2 + 1),
            yhat_stack: DMatrix::zeros(2 * self.p, self.n / 2 + 1),
            y_cells: DMatrix::zeros(self.p, self.n),
            input_planar: vec![Complex64::new(0.0, 0.0); self.n * self.m],
            output_planar: vec![Complex64::new(0.0, 0.0); self.n * self.p],
            xhat: vec![DVector::zeros(self.m); self.n / 2 + 1],
            yhat: vec![DVector::zeros(self.p); self.n],
            xr: DVector::zeros(self.m),
            yr: DVector::zeros(self.p),
        }
    }

    pub fn input_len(&self) -> usize {
        self.n * self.m
    }

    pub fn output_len(&self) -> usize {
        self.n * self.p
    }

    /// Computes `B·x` through the Fourier path, allocating its own scratch.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut scratch = self.scratch();
        let mut y = DVector::zeros(self.output_len());
        self.apply_into(x, &mut scratch, &mut y)?;
        Ok(y)
    }

    /// Computes `B·x` into `y` using caller-provided scratch space.
    ///
    /// Pipeline: permute the interleaved input into per-component
    /// ring sequences, run the spatial DFTs, multiply by the Fourier blocks
    /// cell by cell (mirroring the conjugate half), run the inverse DFTs and
    /// permute back. The two `1/√n` factors of the unitary transforms are
    /// the only scalings involved.
    pub fn apply_into(
        &self,
        x: &DVector<f64>,
        s: &mut MatvecScratch,
        y: &mut DVector<f64>,
    ) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "matvec input length {} != {}",
                x.len(),
                self.input_len()
            )));
        }
        if y.len() != self.output_len() {
            return Err(Error::Shape(format!(
                "matvec output length {} != {}",
                y.len(),
                self.output_len()
            )));
        }
        if self.n <= DENSE_DFT_MAX {
            self.apply_dense_dft(x, s, y);
            Ok(())
        } else {
            self.apply_fft(x, s, y)
        }
    }

    /// Small-n route: spatial DFTs as hand-rolled split-real products over
    /// contiguous column slices. Only the non-redundant low half of the
    /// spectrum is formed; conjugate symmetry is folded into the synthesis
    /// coefficients, so the inverse transform's real part is exact and no
    /// imaginary residue exists to discard.
    fn apply_dense_dft(&self, x: &DVector<f64>, s: &mut MatvecScratch, y: &mut DVector<f64>) {
        let n = self.n;
        let half = n / 2;
        let (p, m) = (self.p, self.m);
        let in_re = self.dft_in_re.as_ref().unwrap();
        let in_im = self.dft_in_im.as_ref().unwrap();
        let out_re = self.dft_out_re.as_ref().unwrap();
        let out_im = self.dft_out_im.as_ref().unwrap();

        for r in 0..n {
            s.x_cells
                .column_mut(r)
                .copy_from_slice(&x.as_slice()[r * m..(r + 1) * m]);
        }
        // x̂_i = Σ_r F*[r,i]·x_r for the retained cells.
        for i in 0..=half {
            let col = &mut s.xhat_stack.column_mut(i);
            let col = col.as_mut_slice();
            col.fill(0.0);
            for r in 0..n {
                let cre = in_re[(r, i)];
                let cim = in_im[(r, i)];
                let src = s.x_cells.column(r);
                let src = src.as_slice();
                for j in 0..m {
                    col[j] += cre * src[j];
                    col[m + j] += cim * src[j];
                }
            }
        }

        // Real cells: β and x̂ are real there (the imaginary leak of x̂ is
        // roundoff and is dropped with the zeroed imaginary rows).
        {
            let xr = s.xhat_stack.view((0, 0), (m, 1));
            s.yhat_stack
                .view_mut((0, 0), (p, 1))
                .gemm(1.0, &self.beta_re[0], &xr, 0.0);
            s.yhat_stack.view_mut((p, 0), (p, 1)).fill(0.0);
        }
        if n % 2 == 0 && n > 1 {
            let xr = s.xhat_stack.view((0, half), (m, 1));
            s.yhat_stack
                .view_mut((0, half), (p, 1))
                .gemm(1.0, &self.beta_re[half], &xr, 0.0);
            s.yhat_stack.view_mut((p, half), (p, 1)).fill(0.0);
        }
        // Complex cells through the split-real operators.
        for (k, split) in self.beta_split.iter().enumerate() {
            let i = k + 1;
            let xc = s.xhat_stack.column(i);
            s.yhat_stack.column_mut(i).gemv(1.0, split, &xc, 0.0);
        }

        // y_cell = Σ_{i<=half} c_i·Re(F[cell,i]·ŷ_i); the paired cells enter
        // twice through the weight baked into the synthesis coefficients.
        for cell in 0..n {
            let col = &mut s.y_cells.column_mut(cell);
            let col = col.as_mut_slice();
            col.fill(0.0);
            for i in 0..=half {
                let a = out_re[(i, cell)];
                let b = out_im[(i, cell)];
                let yh = s.yhat_stack.column(i);
                let yh = yh.as_slice();
                for j in 0..p {
                    col[j] += a * yh[j] - b * yh[p + j];
                }
            }
        }
        for cell in 0..n {
            y.as_mut_slice()[cell * p..(cell + 1) * p]
                .copy_from_slice(s.y_cells.column(cell).as_slice());
        }
    }

    /// Large-n route: per-component FFTs along the ring.
    fn apply_fft(
        &self,
        x: &DVector<f64>,
        s: &mut MatvecScratch,
        y: &mut DVector<f64>,
    ) -> Result<()> {
        let n = self.n;
        let half = n / 2;

        interleaved_to_planar(x.as_slice(), n, self.m, &mut s.input_planar);
        // (F* ⊗ I_m)·x per component: inverse-kernel DFT along the ring.
        for c in 0..self.m {
            self.ifft.process(&mut s.input_planar[c * n..(c + 1) * n]);
        }
        // Gather per-cell spectra for the non-redundant half.
        for i in 0..=half {
            for c in 0..self.m {
                s.xhat[i][c] = s.input_planar[c * n + i];
            }
        }

        for i in 0..=half {
            let real_cell = i == 0 || (2 * i == n);
            if real_cell {
                for c in 0..self.m {
                    s.xr[c] = s.xhat[i][c].re;
                }
                s.yr.gemv(1.0, &self.beta_re[i], &s.xr, 0.0);
                for r in 0..self.p {
                    s.yhat[i][r] = Complex64::new(s.yr[r], 0.0);
                }
            } else {
                for r in 0..self.p {
                    let mut acc_re = 0.0;
                    let mut acc_im = 0.0;
                    for c in 0..self.m {
                        let xre = s.xhat[i][c].re;
                        let xim = s.xhat[i][c].im;
                        let bre = self.beta_re[i][(r, c)];
                        let bim = self.beta_im[i][(r, c)];
                        acc_re += bre * xre - bim * xim;
                        acc_im += bre * xim + bim * xre;
                    }
                    s.yhat[i][r] = Complex64::new(acc_re, acc_im);
                }
                // Mirror into the conjugate cell.
                let (lo, hi) = s.yhat.split_at_mut(i + 1);
                let mirror = &mut hi[n - 2 * i - 1];
                for r in 0..self.p {
                    mirror[r] = lo[i][r].conj();
                }
            }
        }

        for r in 0..self.p {
            for i in 0..n {
                s.output_planar[r * n + i] = s.yhat[i][r];
            }
        }
        // (F ⊗ I_p): forward-kernel DFT along the ring.
        for r in 0..self.p {
            self.fft.process(&mut s.output_planar[r * n..(r + 1) * n]);
        }

        let scale = 1.0 / n as f64;
        let norm = x.amax().max(1e-300);
        for cell in 0..n {
            for r in 0..self.p {
                let v = s.output_planar[r * n + cell] * scale;
                if v.im.abs() > 1e-10 * norm.max(v.re.abs()) {
                    return Err(Error::Numerical(format!(
                        "matvec imaginary residue {:.3e} out of tolerance",
                        v.im.abs()
                    )));
                }
                y[cell * self.p + r] = v.re;
            }
        }
        Ok(())
    }
}

/// `out[c*n + r] = x[r*m + c]` — the implicit permutation π of (7a), realized
/// as a reshape instead of an `O(n²m²)` matrix.
pub fn interleaved_to_planar(x: &[f64], n: usize, m: usize, out: &mut [Complex64]) {
    debug_assert_eq!(x.len(), n * m);
    debug_assert_eq!(out.len(), n * m);
    for r in 0..n {
        let row = &x[r * m..(r + 1) * m];
        for (c, v) in row.iter().enumerate() {
            out[c * n + r] = Complex64::new(*v, 0.0);
        }
    }
}

/// Inverse permutation of [`interleaved_to_planar`], dropping imaginary parts.
pub fn planar_to_interleaved(planar: &[Complex64], n: usize, p: usize, out: &mut [f64]) {
    debug_assert_eq!(planar.len(), n * p);
    debug_assert_eq!(out.len(), n * p);
    for r in 0..p {
        for cell in 0..n {
            out[cell * p + r] = planar[r * n + cell].re;
        }
    }
}

/// Convenience wrapper computing `B·x` through the FFT path.
pub fn bc_matvec_fft(matrix: &BlockCirculantMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    FftMatvec::new(matrix).apply(x)
}

/// FFT realization of the spatial coordinate changes `(F_n* ⊗ I_w)` and
/// `(F_n ⊗ I_w)` for ring signals with `w` components per cell.
pub struct RingTransform {
    n: usize,
    width: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl RingTransform {
    pub fn new(n: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            width,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            buf: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = (F_n* ⊗ I_w) x` for a real ring signal.
    pub fn forward(&mut self, x: &DVector<f64>, out: &mut DVector<Complex64>) {
        debug_assert_eq!(x.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let scale = 1.0 / (self.n as f64).sqrt();
        for j in 0..self.width {
            for r in 0..self.n {
                self.buf[r] = Complex64::new(x[r * self.width + j], 0.0);
            }
            self.inv.process(&mut self.buf);
            for i in 0..self.n {
                out[i * self.width + j] = self.buf[i] * scale;
            }
        }
    }

    /// `out = (F_n* ⊗ I_w) x` for a complex ring signal.
    pub fn forward_complex(&mut self, x: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        debug_assert_eq!(x.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let scale = 1.0 / (self.n as f64).sqrt();
        for j in 0..self.width {
            for r in 0..self.n {
                self.buf[r] = x[r * self.width + j];
            }
            self.inv.process(&mut self.buf);
            for i in 0..self.n {
                out[i * self.width + j] = self.buf[i] * scale;
            }
        }
    }

    /// `out = Re[(F_n ⊗ I_w) xhat]`; returns the largest discarded imaginary
    /// magnitude (roundoff-level whenever `xhat` is conjugate-symmetric).
    pub fn inverse_real(&mut self, xhat: &DVector<Complex64>, out: &mut DVector<f64>) -> f64 {
        debug_assert_eq!(xhat.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let scale = 1.0 / (self.n as f64).sqrt();
        let mut residue = 0.0f64;
        for j in 0..self.width {
            for i in 0..self.n {
                self.buf[i] = xhat[i * self.width + j];
            }
            self.fwd.process(&mut self.buf);
            for r in 0..self.n {
                let v = self.buf[r] * scale;
                residue = residue.max(v.im.abs());
                out[r * self.width + j] = v.re;
            }
        }
        residue
    }
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

/// Result of [`bench_matvec`]. Times are medians over the trials; `reduction`
/// is `1 - t_fft/t_dense`. `t_reshape` isolates the permutation cost of the
/// FFT path so the reduction can be read with or without it.
#[derive(Debug, Clone)]
pub struct MatvecBench {
    pub t_dense: f64,
    pub t_fft: f64,
    pub t_reshape: f64,
    pub reduction: f64,
    pub predicted_ratio: Option<f64>,
}

/// Times the dense and FFT matvec paths on identical random inputs.
///
/// Both paths are validated to agree within `1e-10` relative before timing.
pub fn bench_matvec(matrix: &BlockCirculantMatrix, trials: usize) -> Result<MatvecBench> {
    use std::time::Instant;

    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    let dense = matrix.to_dense();
    let plan = FftMatvec::new(matrix);
    let mut scratch = plan.scratch();

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6273);
    let x = DVector::from_fn(matrix.ncols(), |_, _| rng.gen_range(-1.0..1.0));

    let reference = &dense * &x;
    let mut fast = DVector::zeros(matrix.nrows());
    plan.apply_into(&x, &mut scratch, &mut fast)?;
    let scale = reference.amax().max(1e-300);
    let err = (&fast - &reference).amax() / scale;
    if err > 1e-10 {
        return Err(Error::Numerical(format!(
            "fft path disagrees with dense path before timing: {err:.3e}"
        )));
    }

    // Repeat each trial enough times that the clock resolution is irrelevant.
    let reps = (50_000 / (matrix.nrows() * matrix.ncols() / 64 + 1)).max(8);
    let mut y = DVector::zeros(matrix.nrows());
    let median = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };

    let mut t_dense = Vec::with_capacity(trials);
    let mut t_fft = Vec::with_capacity(trials);
    let mut t_reshape = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t0 = Instant::now();
        for _ in 0..reps {
            y.gemv(1.0, &dense, &x, 0.0);
        }
        t_dense.push(t0.elapsed().as_secs_f64() / reps as f64);

        let t1 = Instant::now();
        for _ in 0..reps {
            plan.apply_into(&x, &mut scratch, &mut fast)?;
        }
        t_fft.push(t1.elapsed().as_secs_f64() / reps as f64);

        let t2 = Instant::now();
        for _ in 0..reps {
            interleaved_to_planar(x.as_slice(), matrix.n, matrix.m, &mut scratch.input_planar);
            planar_to_interleaved(&scratch.output_planar, matrix.n, matrix.p, y.as_mut_slice());
        }
        t_reshape.push(t2.elapsed().as_secs_f64() / reps as f64);
    }
    std::hint::black_box((&y, &fast));

    let t_dense = median(t_dense);
    let t_fft = median(t_fft);
    Ok(MatvecBench {
        t_dense,
        t_fft,
        t_reshape: median(t_reshape),
        reduction: 1.0 - t_fft / t_dense,
        predicted_ratio: speedup_ratio(matrix.n, matrix.p, matrix.m).ok(),
    })
}
