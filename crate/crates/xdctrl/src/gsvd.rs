//! Generalized singular value decomposition of a matrix pair sharing their
//! row space, built from the SVD of the stacked adjoints and a CS
//! decomposition.
//!
//! For `A ∈ C^{q×q}` and `B ∈ C^{q×m}` with `m < q` the factorization is
//!
//! ```text
//! A = X · diag(S_A, I_{q-m}) · U_A^H,      B = X · [S_B; 0] · U_B^H,
//! ```
//!
//! with unitary `U_A`, `U_B`, nonsingular shared factor `X` and diagonal
//! `S_A, S_B > 0` normalized by `S_A² + S_B² = I`. The construction:
//!
//! 1. SVD of the concatenation `C = [A^H; B^H] = Q [Σ; 0] Ψ^H`. Columns of
//!    `Q` belonging to zero singular values are dropped, so a rank-deficient
//!    pair yields a reduced shared factor instead of an error.
//! 2. CS decomposition of the orthonormal-column stack `[Q_11; Q_21]`,
//!    giving `U_A`, `U_B`, the gain splits and the shared right factor `V`.
//! 3. `X^H = V^H Σ Ψ^H`.
//!
//! The singular values of `[A B]` end up inside `X`, so an ill-conditioned
//! concatenation shows up as an ill-conditioned `X`; [`condition_report`]
//! exposes exactly that.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::max_abs;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Cosine-sine split threshold: entries with sine above `1/√2` recover their
/// left-factor column through QR completion instead of dividing by a small
/// cosine.
const CS_SPLIT: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Residual norm below which a column direction is numerically undetermined
/// and is replaced by an arbitrary orthonormal completion direction.
const DEGENERATE_FLOOR: f64 = 1e-12;

/// Result of [`cs_decompose`].
#[derive(Debug, Clone)]
pub struct CsFactors {
    pub u_a: DMatrix<Complex64>,
    pub u_b: DMatrix<Complex64>,
    pub s_a: DVector<f64>,
    pub s_b: DVector<f64>,
    pub v: DMatrix<Complex64>,
}

/// The factors of the generalized singular value decomposition, plus the
/// intermediates of the construction (kept for diagnostics and testing).
#[derive(Debug, Clone)]
pub struct GsvdFactors {
    pub q: usize,
    pub m: usize,
    /// Numerical rank of the concatenation; equals `q` for a full-rank pair.
    pub rank_c: usize,
    /// Shared left factor, `q × rank_c`.
    pub x: DMatrix<Complex64>,
    pub u_a: DMatrix<Complex64>,
    pub u_b: DMatrix<Complex64>,
    pub s_a: DVector<f64>,
    pub s_b: DVector<f64>,
    /// First `q` rows of the retained left singular vectors of the stack.
    pub q11: DMatrix<Complex64>,
    /// Last `m` rows of the retained left singular vectors of the stack.
    pub q21: DMatrix<Complex64>,
    /// Retained singular values of the concatenation.
    pub sigma: DVector<f64>,
    /// Retained right singular vectors of the concatenation, `q × rank_c`.
    pub psi: DMatrix<Complex64>,
    /// Shared right factor of the CS decomposition, `rank_c × rank_c`.
    pub v: DMatrix<Complex64>,
}

/// Condition diagnostics of a factorization.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub cond_x: f64,
    pub sv_concat: Vec<f64>,
}

/// Serializable factorization summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GsvdManifest {
    pub q: usize,
    pub m: usize,
    pub rank_c: usize,
    pub cond_x: f64,
}

impl GsvdFactors {
    /// The rectangular middle factor of the first reconstruction,
    /// `rank_c × q` with `S_A` then ones on the diagonal.
    fn middle_a(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(self.rank_c, self.q);
        for i in 0..self.rank_c.min(self.q) {
            let g = if i < self.m { self.s_a[i] } else { 1.0 };
            d[(i, i)] = Complex64::new(g, 0.0);
        }
        d
    }

    /// The middle factor of the second reconstruction, `rank_c × m` with
    /// `S_B` on top and zero rows below.
    fn middle_b(&self) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(self.rank_c, self.m);
        for i in 0..self.m.min(self.rank_c) {
            d[(i, i)] = Complex64::new(self.s_b[i], 0.0);
        }
        d
    }

    /// `X · diag(S_A, I) · U_A^H` — equals the input `A` up to roundoff.
    pub fn reconstruct_a(&self) -> DMatrix<Complex64> {
        &self.x * self.middle_a() * self.u_a.adjoint()
    }

    /// `X · [S_B; 0] · U_B^H` — equals the input `B` up to roundoff.
    pub fn reconstruct_b(&self) -> DMatrix<Complex64> {
        &self.x * self.middle_b() * self.u_b.adjoint()
    }

    pub fn manifest(&self) -> GsvdManifest {
        GsvdManifest {
            q: self.q,
            m: self.m,
            rank_c: self.rank_c,
            cond_x: condition_report(self).cond_x,
        }
    }
}

/// Extends a set of orthonormal columns to a full unitary basis.
///
/// Greedy modified Gram-Schmidt over canonical directions: at each step the
/// canonical vector with the largest residual against the accepted set is
/// orthonormalized and appended. Deterministic for a given input.
fn unitary_completion(cols: &[DVector<Complex64>], dim: usize) -> Vec<DVector<Complex64>> {
    let mut accepted: Vec<DVector<Complex64>> = cols.to_vec();
    let mut extra = Vec::new();
    while accepted.len() < dim {
        let mut best: Option<(f64, DVector<Complex64>)> = None;
        for j in 0..dim {
            let mut r = DVector::from_fn(dim, |i, _| if i == j { ONE } else { ZERO });
            for u in &accepted {
                let proj = u.dotc(&r);
                r.axpy(-proj, u, ONE);
            }
            let norm = r.norm();
            if best.as_ref().map_or(true, |(b, _)| norm > *b) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("dim > 0");
        let u = r / Complex64::new(norm, 0.0);
        accepted.push(u.clone());
        extra.push(u);
    }
    extra
}

/// Forces the largest-magnitude entry of each column of `u` to be real and
/// positive, propagating the compensating phase into the matching column of
/// `v`. Removes the SVD phase ambiguity so repeated runs agree bitwise.
fn fix_column_phases(u: &mut DMatrix<Complex64>, v: &mut DMatrix<Complex64>) {
    for j in 0..u.ncols().min(v.ncols()) {
        let mut best = 0usize;
        let mut mag = 0.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].norm();
            if a > mag {
                mag = a;
                best = i;
            }
        }
        if mag == 0.0 {
            continue;
        }
        let phase = u[(best, j)] / Complex64::new(mag, 0.0);
        let rot = phase.conj();
        for i in 0..u.nrows() {
            u[(i, j)] *= rot;
        }
        for i in 0..v.nrows() {
            v[(i, j)] *= rot;
        }
    }
}

/// CS decomposition of a stacked matrix `[Q_11; Q_21]` with orthonormal
/// columns (`Q_11: q×r`, `Q_21: m×r`, `m ≤ r ≤ q`):
///
/// ```text
/// Q_11 = U_A · diag(S_A, I) · V^H,      Q_21 = U_B · [S_B  0] · V^H,
/// ```
///
/// with `S_A² + S_B² = I` on the first `m` entries and `S_B` descending.
///
/// `U_B`, `S_B` and `V` come from the SVD of the sine block `Q_21`; the
/// cosines are `√(1 − S_B²)`. Columns of `U_A` with a dominant cosine are the
/// normalized columns of `Q_11·V`; sine-dominant columns fall back to a QR
/// completion against the already accepted set.
pub fn cs_decompose(q11: &DMatrix<Complex64>, q21: &DMatrix<Complex64>) -> Result<CsFactors> {
    let q = q11.nrows();
    let r = q11.ncols();
    let m = q21.nrows();
    if q21.ncols() != r {
        return Err(Error::Shape(format!(
            "column mismatch: top block has {r}, bottom block has {}",
            q21.ncols()
        )));
    }
    if m > r || r > q {
        return Err(Error::Shape(format!(
            "cs decomposition needs m <= r <= q, got q={q}, m={m}, r={r}"
        )));
    }

    // Orthonormal-columns precondition on the stack.
    let gram = q11.adjoint() * q11 + q21.adjoint() * q21;
    let gram_residual = max_abs(&(&gram - DMatrix::<Complex64>::identity(r, r)));
    if gram_residual > 1e-8 {
        return Err(Error::Precondition(format!(
            "stacked columns not orthonormal: gram residual {gram_residual:.3e}"
        )));
    }

    // Sine side. For m = 0 there is no sine block and the split is trivial.
    let (mut u_b, s_b, mut v1) = if m > 0 {
        let svd = q21
            .clone()
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("SVD of the sine block did not converge".into()))?;
        let u_b = svd.u.expect("requested U");
        let v1 = svd.v_t.expect("requested V^H").adjoint(); // r × m
        (u_b, svd.singular_values, v1)
    } else {
        (
            DMatrix::zeros(0, 0),
            DVector::zeros(0),
            DMatrix::zeros(r, 0),
        )
    };
    fix_column_phases(&mut u_b, &mut v1);

    // Complete V beyond the span of the sine block.
    let v1_cols: Vec<DVector<Complex64>> = (0..m).map(|j| v1.column(j).into_owned()).collect();
    let v2_cols = unitary_completion(&v1_cols, r);
    let mut v = DMatrix::zeros(r, r);
    for (j, c) in v1_cols.iter().chain(v2_cols.iter()).enumerate() {
        v.set_column(j, c);
    }

    let s_a = DVector::from_fn(m, |i, _| (1.0 - s_b[i] * s_b[i]).max(0.0).sqrt());

    // Cosine side: W = Q_11 V has orthogonal columns with norms
    // (s_a_0, .., s_a_{m-1}, 1, .., 1).
    let w = q11 * &v;
    let mut u_cols: Vec<Option<DVector<Complex64>>> = vec![None; r];
    let mut accepted: Vec<usize> = Vec::new();
    let mut deferred: Vec<usize> = Vec::new();
    for i in 0..r {
        if i >= m || s_b[i] <= CS_SPLIT {
            let col = w.column(i).into_owned();
            let norm = col.norm();
            u_cols[i] = Some(col / Complex64::new(norm, 0.0));
            accepted.push(i);
        } else {
            deferred.push(i);
        }
    }
    // Sine-dominant columns, most favourable cosine first.
    deferred.sort_by(|&a, &b| s_a[b].partial_cmp(&s_a[a]).unwrap());
    for &i in &deferred {
        let mut rcol = w.column(i).into_owned();
        for &j in &accepted {
            let u = u_cols[j].as_ref().unwrap();
            let proj = u.dotc(&rcol);
            rcol.axpy(-proj, u, ONE);
        }
        let norm = rcol.norm();
        if norm > DEGENERATE_FLOOR {
            u_cols[i] = Some(rcol / Complex64::new(norm, 0.0));
        } else {
            // Fully degenerate cosine: any direction orthogonal to the
            // accepted set reconstructs within tolerance.
            let have: Vec<DVector<Complex64>> = accepted
                .iter()
                .map(|&j| u_cols[j].clone().unwrap())
                .collect();
            let fill = unitary_completion(&have, q);
            u_cols[i] = Some(fill.into_iter().next().expect("q > accepted"));
        }
        accepted.push(i);
    }
    // Extend U_A to a full q × q unitary when the stack is rank-deficient.
    let mut basis: Vec<DVector<Complex64>> =
        u_cols.into_iter().map(|c| c.expect("filled")).collect();
    if r < q {
        basis.extend(unitary_completion(&basis, q));
    }
    let mut u_a = DMatrix::zeros(q, q);
    for (j, c) in basis.iter().enumerate() {
        u_a.set_column(j, c);
    }

    Ok(CsFactors {
        u_a,
        u_b,
        s_a,
        s_b,
        v,
    })
}

/// Numerical-rank tolerance: `(q + m) · eps · σ_max`, the conventional rule.
pub fn default_rank_tol(q: usize, m: usize, sigma_max: f64) -> f64 {
    (q + m) as f64 * f64::EPSILON * sigma_max
}

/// Generalized SVD of `(A: q×q, B: q×m)` with `m < q`.
///
/// `rank_tol` overrides the numerical-rank threshold on the singular values
/// of the concatenation; `None` uses [`default_rank_tol`].
pub fn gsvd(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    rank_tol: Option<f64>,
) -> Result<GsvdFactors> {
    let q = a.nrows();
    let m = b.ncols();
    if a.ncols() != q {
        return Err(Error::Shape(format!(
            "first operand must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != q {
        return Err(Error::Shape(format!(
            "operands share their row space: {}x{} vs {}x{}",
            q,
            q,
            b.nrows(),
            m
        )));
    }
    if m >= q {
        return Err(Error::Shape(format!(
            "second operand must be strictly narrower: m={m} >= q={q}"
        )));
    }
    if a.iter()
        .chain(b.iter())
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::Domain("non-finite entry in input pair".into()));
    }

    // SVD of the stacked adjoints.
    let mut c = DMatrix::zeros(q + m, q);
    c.view_mut((0, 0), (q, q)).copy_from(&a.adjoint());
    c.view_mut((q, 0), (m, q)).copy_from(&b.adjoint());
    let svd = c
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of the concatenation did not converge".into()))?;
    let mut qmat = svd.u.expect("requested U"); // (q+m) × q, descending σ
    let mut psi_full = svd.v_t.expect("requested V^H").adjoint(); // q × q
    let sigma_full = svd.singular_values;
    // Phase-normalize the pair: real-valued inputs then yield real factors
    // (up to roundoff), and repeated runs agree bitwise.
    fix_column_phases(&mut psi_full, &mut qmat);

    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(q, m, sigma_full[0]));
    let rank = sigma_full.iter().take_while(|&&s| s > tol).count();
    if rank == 0 {
        return Err(Error::Numerical(
            "concatenation is numerically zero; no factorization exists".into(),
        ));
    }

    // Drop the columns belonging to zero singular values and carry on with
    // the positive set.
    let q_cols = qmat.columns(0, rank).into_owned();
    let sigma = DVector::from_fn(rank, |i, _| sigma_full[i]);
    let psi = psi_full.columns(0, rank).into_owned();
    let q11 = q_cols.rows(0, q).into_owned();
    let q21 = q_cols.rows(q, m).into_owned();

    let cs = cs_decompose(&q11, &q21)?;

    // X^H = V^H Σ Ψ^H  =>  X = Ψ Σ V.
    let mut sigma_v = cs.v.clone();
    for i in 0..rank {
        for j in 0..rank {
            sigma_v[(i, j)] *= Complex64::new(sigma[i], 0.0);
        }
    }
    let x = &psi * sigma_v;

    Ok(GsvdFactors {
        q,
        m,
        rank_c: rank,
        x,
        u_a: cs.u_a,
        u_b: cs.u_b,
        s_a: cs.s_a,
        s_b: cs.s_b,
        q11,
        q21,
        sigma,
        psi,
        v: cs.v,
    })
}

/// Condition number of the shared factor and the singular-value list of the
/// concatenation. Since `X = Ψ Σ V` with orthonormal `Ψ` columns and unitary
/// `V`, the singular values of `X` are exactly the retained `Σ`.
pub fn condition_report(f: &GsvdFactors) -> ConditionReport {
    let max = f.sigma[0];
    let min = f.sigma[f.rank_c - 1];
    ConditionReport {
        cond_x: max / min,
        sv_concat: f.sigma.iter().copied().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complexify, max_abs, rel_residual};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, c, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn assert_factors_valid(f: &GsvdFactors, a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) {
        assert!(
            rel_residual(&f.reconstruct_a(), a) <= 1e-9,
            "reconstruction of the square operand failed: {:.3e}",
            rel_residual(&f.reconstruct_a(), a)
        );
        assert!(
            rel_residual(&f.reconstruct_b(), b) <= 1e-9,
            "reconstruction of the narrow operand failed: {:.3e}",
            rel_residual(&f.reconstruct_b(), b)
        );
        for i in 0..f.m {
            let sum = f.s_a[i] * f.s_a[i] + f.s_b[i] * f.s_b[i];
            assert!((sum - 1.0).abs() <= 1e-10, "normalization at {i}: {sum}");
        }
        let ga = f.u_a.adjoint() * &f.u_a - DMatrix::<Complex64>::identity(f.q, f.q);
        let gb = f.u_b.adjoint() * &f.u_b - DMatrix::<Complex64>::identity(f.m, f.m);
        assert!(
            max_abs(&ga) <= 1e-10,
            "U_A not unitary: {:.3e}",
            max_abs(&ga)
        );
        assert!(
            max_abs(&gb) <= 1e-10,
            "U_B not unitary: {:.3e}",
            max_abs(&gb)
        );
    }

    #[test]
    fn identity_and_unit_column() {
        // A = I_2, B = (1, 0)^T couples one mode with equal splits 1/√2.
        let a = DMatrix::<Complex64>::identity(2, 2);
        let b = complexify(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        let f = gsvd(&a, &b, None).unwrap();
        assert_factors_valid(&f, &a, &b);
        assert_relative_eq!(f.s_a[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(f.s_b[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        // One valid factorization has X = diag(√2, 1); factors are unique
        // only up to phase/order, so only the condition number is pinned.
        let report = condition_report(&f);
        assert_relative_eq!(report.cond_x, 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn weak_second_operand_analytic_split() {
        // 2x2 analytic CS identity: B = ε e_1 gives
        // s_b = ε/√(1+ε²) and s_a = 1/√(1+ε²) on the coupled mode.
        let eps = 1e-3;
        let a = DMatrix::<Complex64>::identity(2, 2);
        let b = complexify(&DMatrix::from_column_slice(2, 1, &[eps, 0.0]));
        let f = gsvd(&a, &b, None).unwrap();
        assert_factors_valid(&f, &a, &b);
        let denom = (1.0 + eps * eps).sqrt();
        assert_relative_eq!(f.s_b[0], eps / denom, epsilon = 1e-12);
        assert_relative_eq!(f.s_a[0], 1.0 / denom, epsilon = 1e-12);
        // cond X ≈ 1 + ε²/2 (perturbation of a unitary pair).
        let report = condition_report(&f);
        assert!((report.cond_x - (1.0 + eps * eps / 2.0)).abs() < 1e-5);
    }

    #[test]
    fn seeded_pair_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = random_complex(6, 6, &mut rng);
        let b = random_complex(6, 3, &mut rng);
        let f = gsvd(&a, &b, None).unwrap();
        assert_factors_valid(&f, &a, &b);
        assert_eq!(f.rank_c, 6);
    }

    #[test]
    fn gain_split_is_sorted_descending() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_complex(5, 5, &mut rng);
        let b = random_complex(5, 3, &mut rng);
        let f = gsvd(&a, &b, None).unwrap();
        for i in 1..f.m {
            assert!(f.s_b[i] <= f.s_b[i - 1] + 1e-14);
        }
    }

    #[test]
    fn column_permutation_preserves_reconstruction() {
        // Permuting coupled columns of (X, U_A, U_B) consistently leaves the
        // reconstruction residual unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_complex(4, 4, &mut rng);
        let b = random_complex(4, 2, &mut rng);
        let mut f = gsvd(&a, &b, None).unwrap();
        assert_factors_valid(&f, &a, &b);
        f.x.swap_columns(0, 1);
        f.u_a.swap_columns(0, 1);
        f.u_b.swap_columns(0, 1);
        let sa = f.s_a[0];
        let sb = f.s_b[0];
        f.s_a[0] = f.s_a[1];
        f.s_a[1] = sa;
        f.s_b[0] = f.s_b[1];
        f.s_b[1] = sb;
        assert!(rel_residual(&f.reconstruct_a(), &a) <= 1e-9);
        assert!(rel_residual(&f.reconstruct_b(), &b) <= 1e-9);
    }

    #[test]
    fn rank_deficient_concatenation_is_handled() {
        // Build a pair whose concatenation has numerical rank q-1 by zeroing
        // one singular value of a synthetic stack.
        let q = 5;
        let m = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let raw = random_complex(q + m, q, &mut rng);
        let svd = raw.svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let sigma = svd.singular_values;
        let mut mid = DMatrix::<Complex64>::zeros(q, q);
        for i in 0..q - 1 {
            mid[(i, i)] = Complex64::new(sigma[i], 0.0);
        }
        let c = &u * mid * &vt;
        let a = c.rows(0, q).adjoint();
        let b = c.rows(q, m).adjoint();

        let f = gsvd(&a, &b, None).unwrap();
        assert_eq!(f.rank_c, q - 1);
        // Reconstruction in the retained subspace.
        assert!(rel_residual(&f.reconstruct_a(), &a) <= 1e-8);
        assert!(rel_residual(&f.reconstruct_b(), &b) <= 1e-8);
    }

    #[test]
    fn manifest_summarizes_the_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_complex(4, 4, &mut rng);
        let b = random_complex(4, 2, &mut rng);
        let f = gsvd(&a, &b, None).unwrap();
        let manifest = f.manifest();
        assert_eq!((manifest.q, manifest.m, manifest.rank_c), (4, 2, 4));
        let json = serde_json::to_string(&manifest).unwrap();
        for key in ["\"q\"", "\"m\"", "\"rank_c\"", "\"cond_x\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        let a = DMatrix::<Complex64>::identity(2, 2);
        let wide = DMatrix::<Complex64>::identity(2, 2);
        assert!(matches!(gsvd(&a, &wide, None), Err(Error::Shape(_))));
        let mut bad = DMatrix::<Complex64>::identity(2, 2);
        bad[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        let b = DMatrix::<Complex64>::zeros(2, 1);
        assert!(matches!(gsvd(&bad, &b, None), Err(Error::Domain(_))));
    }

    #[test]
    fn cs_decompose_rotation_oracle() {
        // Exact trigonometry: Q_11 = diag(cos θ, 1), Q_21 = (sin θ, 0).
        let theta = std::f64::consts::PI / 6.0;
        let q11 = complexify(&DMatrix::from_diagonal(&DVector::from_vec(vec![
            theta.cos(),
            1.0,
        ])));
        let q21 = complexify(&DMatrix::from_row_slice(1, 2, &[theta.sin(), 0.0]));
        let f = cs_decompose(&q11, &q21).unwrap();
        assert_relative_eq!(f.s_a[0], 3.0f64.sqrt() / 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.s_b[0], 0.5, epsilon = 1e-14);
        let rec11 = cs_reconstruct_top(&f, 2);
        assert!(max_abs(&(rec11 - q11)) <= 1e-13);
    }

    #[test]
    fn cs_decompose_zero_angle_boundary() {
        // θ = 0 leaves the sine block zero; the splitting-threshold fallback
        // must still produce an exact reconstruction.
        let q11 = DMatrix::<Complex64>::identity(2, 2);
        let q21 = DMatrix::<Complex64>::zeros(1, 2);
        let f = cs_decompose(&q11, &q21).unwrap();
        assert_relative_eq!(f.s_a[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(f.s_b[0], 0.0, epsilon = 1e-14);
        let rec11 = cs_reconstruct_top(&f, 2);
        assert!(max_abs(&(rec11 - q11)) <= 1e-9);
    }

    #[test]
    fn cs_decompose_random_orthonormal_stack() {
        let q = 5;
        let m = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let raw = random_complex(q + m, q, &mut rng);
        let qr = raw.qr();
        let qfull = qr.q();
        let q11 = qfull.rows(0, q).into_owned();
        let q21 = qfull.rows(q, m).into_owned();
        let f = cs_decompose(&q11, &q21).unwrap();
        let rec11 = cs_reconstruct_top(&f, q);
        let rec21 = &f.u_b * cs_middle_bottom(&f) * f.v.adjoint();
        assert!(max_abs(&(rec11 - &q11)) <= 1e-9);
        assert!(max_abs(&(rec21 - &q21)) <= 1e-9);
    }

    #[test]
    fn cs_decompose_rejects_non_orthonormal_stack() {
        let q11 = DMatrix::<Complex64>::identity(2, 2);
        let q21 = complexify(&DMatrix::from_row_slice(1, 2, &[0.7, 0.0]));
        assert!(matches!(
            cs_decompose(&q11, &q21),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn condition_tracks_ill_conditioned_concatenation() {
        // cond(X) stays within a factor 10 of cond([A B]) — verified against
        // a direct SVD oracle of both X and the concatenation.
        let q = 6;
        let m = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // Square factor with condition 1e6.
        let basis = random_complex(q, q, &mut rng).qr().q();
        let scales: Vec<f64> = (0..q)
            .map(|i| 1e6f64.powf(-(i as f64) / (q as f64 - 1.0)))
            .collect();
        let mut a = DMatrix::<Complex64>::zeros(q, q);
        for i in 0..q {
            let col = basis.column(i) * Complex64::new(scales[i], 0.0);
            a.set_column(i, &col);
        }
        let b = random_complex(q, m, &mut rng) * Complex64::new(1e-3, 0.0);
        let f = gsvd(&a, &b, None).unwrap();
        let report = condition_report(&f);

        let mut concat = DMatrix::<Complex64>::zeros(q, q + m);
        concat.view_mut((0, 0), (q, q)).copy_from(&a);
        concat.view_mut((0, q), (q, m)).copy_from(&b);
        let sv = concat.singular_values();
        let cond_concat = sv[0] / sv[sv.len() - 1];
        assert!(report.cond_x / cond_concat < 10.0);
        assert!(cond_concat / report.cond_x < 10.0);

        // cond_x itself must match a direct SVD of X.
        let sx = f.x.singular_values();
        let direct = sx[0] / sx[sx.len() - 1];
        assert_relative_eq!(report.cond_x, direct, max_relative = 1e-8);
    }

    fn cs_reconstruct_top(f: &CsFactors, q: usize) -> DMatrix<Complex64> {
        let r = f.v.nrows();
        let mut mid = DMatrix::<Complex64>::zeros(q, r);
        for i in 0..r {
            let g = if i < f.s_a.len() { f.s_a[i] } else { 1.0 };
            mid[(i, i)] = Complex64::new(g, 0.0);
        }
        &f.u_a * mid * f.v.adjoint()
    }

    fn cs_middle_bottom(f: &CsFactors) -> DMatrix<Complex64> {
        let m = f.s_b.len();
        let r = f.v.nrows();
        let mut mid = DMatrix::<Complex64>::zeros(m, r);
        for i in 0..m {
            mid[(i, i)] = Complex64::new(f.s_b[i], 0.0);
        }
        mid
    }
}
