//! Eigen-decomposition of general real matrices through the complex Schur form.
//!
//! `A = Q T Q^H` with `T` upper triangular; eigenvectors come from
//! back-substitution on `T`, invariant subspaces from reordering `T`.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Schur, SVD};

use crate::scalar::{tolerance, Scalar};

pub type C<T> = Complex<T>;

/// Eigenvalues sorted by descending modulus with unit-norm eigenvectors as columns.
///
/// For real input, complex eigenvalues are emitted as exact conjugate pairs
/// and eigenvectors of real eigenvalues are real.
#[derive(Clone, Debug)]
pub struct EigenSystem<T: Scalar> {
    pub values: Vec<C<T>>,
    pub vectors: DMatrix<C<T>>,
}

pub(crate) fn complexify<T: Scalar>(a: &DMatrix<T>) -> DMatrix<C<T>> {
    a.map(|v| Complex::new(v, T::zero()))
}

pub(crate) fn complexify_vec<T: Scalar>(a: &DVector<T>) -> DVector<C<T>> {
    a.map(|v| Complex::new(v, T::zero()))
}

/// Complex Schur form `(Q, T)`.
///
/// nalgebra rescales by the largest entry before iterating, so the zero matrix
/// (already triangular) is handled here. A bounded iteration count guards the
/// QR sweep; a stalled sweep is retried on a diagonally shifted copy, which has
/// the same Schur vectors.
fn schur<T: Scalar>(a: &DMatrix<T>) -> (DMatrix<C<T>>, DMatrix<C<T>>) {
    let n = a.nrows();
    if a.iter().all(|v| *v == T::zero()) {
        return (DMatrix::identity(n, n), DMatrix::zeros(n, n));
    }
    let eps = T::machine_epsilon();
    let max_iter = 1000 * n.max(1);
    let c = complexify(a);
    if let Some(s) = Schur::try_new(c.clone(), eps, max_iter) {
        return s.unpack();
    }
    let shift = C::new(a.amax() * T::lit(0.5), T::zero());
    let shifted = &c + DMatrix::from_diagonal_element(n, n, shift);
    let (q, mut t) = Schur::try_new(shifted, eps, 10 * max_iter).expect("Schur iteration failed to converge").unpack();
    for i in 0..n {
        t[(i, i)] -= shift;
    }
    (q, t)
}

pub fn eigen_decompose<T: Scalar>(a: &DMatrix<T>) -> EigenSystem<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    if n == 0 {
        return EigenSystem { values: vec![], vectors: DMatrix::zeros(0, 0) };
    }
    let (q, t) = schur(a);
    let eps = T::machine_epsilon();
    // Eigenvalue gaps below eps * |T| are rounding noise. Flooring the
    // denominators there keeps a repeated eigenvalue with a noise-level
    // coupling from producing a duplicate eigenvector.
    let t_scale = t.iter().map(|c| c.modulus()).fold(T::zero(), |a, b| a.max(b));
    let tiny = (eps * t_scale).max(T::lit(1e-30));

    let mut values: Vec<C<T>> = (0..n).map(|i| t[(i, i)]).collect();
    let mut vectors = DMatrix::<C<T>>::zeros(n, n);
    for i in 0..n {
        let lambda = t[(i, i)];
        let smin = (eps * lambda.modulus()).max(tiny);
        let mut y = DVector::<C<T>>::zeros(n);
        y[i] = C::new(T::one(), T::zero());
        for j in (0..i).rev() {
            let mut s = C::new(T::zero(), T::zero());
            for k in j + 1..=i {
                s += t[(j, k)] * y[k];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.modulus() < smin {
                denom = C::new(smin, T::zero());
            }
            y[j] = -s / denom;
            // rescale to keep the partial solution bounded
            let m = y.iter().map(|c| c.modulus()).fold(T::zero(), |a, b| a.max(b));
            if m > T::lit(1e30) {
                y /= C::new(m, T::zero());
            }
        }
        let v = &q * y;
        vectors.set_column(i, &normalize_phase(v));
    }

    realify_pairs(&mut values, &mut vectors);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp_desc(values[i], values[j]));
    let values_sorted = order.iter().map(|&i| values[i]).collect();
    let vectors_sorted = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    EigenSystem { values: values_sorted, vectors: vectors_sorted }
}

/// Descending modulus, then descending real part, then descending imaginary part.
pub(crate) fn cmp_desc<T: Scalar>(a: C<T>, b: C<T>) -> std::cmp::Ordering {
    let key = |c: C<T>| (c.modulus().as_f64(), c.re.as_f64(), c.im.as_f64());
    let (ka, kb) = (key(a), key(b));
    kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1)).then(kb.2.total_cmp(&ka.2))
}

/// Unit 2-norm with the largest-magnitude component real and positive.
fn normalize_phase<T: Scalar>(v: DVector<C<T>>) -> DVector<C<T>> {
    let norm = v.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b).sqrt();
    if norm == T::zero() {
        return v;
    }
    let (idx, _) = v
        .iter()
        .enumerate()
        .fold((0, T::zero()), |(bi, bm), (i, c)| if c.modulus() > bm { (i, c.modulus()) } else { (bi, bm) });
    let pivot = v[idx];
    let phase = pivot / C::new(pivot.modulus(), T::zero());
    v.map(|c| c / (phase * C::new(norm, T::zero())))
}

/// Snaps nearly-real eigenpairs to real and forces exact conjugate pairing.
///
/// A conjugate pair that snaps to real keeps the real span of its vectors:
/// one column gets `Re v`, the other `Im v`. Taking the real part of both
/// would duplicate a column.
fn realify_pairs<T: Scalar>(values: &mut [C<T>], vectors: &mut DMatrix<C<T>>) {
    let n = values.len();
    let tol: T = tolerance(1e-10, 100.0);
    let near_real = |lam: C<T>| lam.im.abs() <= tol * T::one().max(lam.modulus());
    let set_real = |vectors: &mut DMatrix<C<T>>, col: usize, v: DVector<T>| -> bool {
        let norm = v.norm();
        if norm > T::zero() {
            vectors.set_column(col, &(v / norm).map(|x| C::new(x, T::zero())));
        }
        norm > T::zero()
    };
    let mut paired = vec![false; n];
    for i in 0..n {
        let lam = values[i];
        if paired[i] || !near_real(lam) {
            continue;
        }
        paired[i] = true;
        let v = vectors.column(i).into_owned();
        let partner = (lam.im != T::zero())
            .then(|| {
                (0..n)
                    .filter(|&j| !paired[j] && values[j].im * lam.im < T::zero() && near_real(values[j]))
                    .min_by(|&a, &b| {
                        let d = |k: usize| (values[k] - lam.conj()).modulus().as_f64();
                        d(a).total_cmp(&d(b))
                    })
            })
            .flatten();
        values[i] = C::new(lam.re, T::zero());
        set_real(vectors, i, v.map(|c| c.re));
        if let Some(j) = partner {
            paired[j] = true;
            values[j] = values[i];
            let imag = v.map(|c| c.im);
            if !(imag.norm() > tol * v.norm()) || !set_real(vectors, j, imag) {
                let own = vectors.column(j).map(|c| c.re);
                set_real(vectors, j, own);
            }
        }
    }
    for i in 0..n {
        if paired[i] || values[i].im < T::zero() {
            continue;
        }
        let target = values[i].conj();
        let partner = (0..n)
            .filter(|&j| j != i && !paired[j] && values[j].im < T::zero())
            .min_by(|&a, &b| {
                (values[a] - target).modulus().as_f64().total_cmp(&(values[b] - target).modulus().as_f64())
            });
        if let Some(j) = partner {
            values[j] = target;
            let conj = vectors.column(i).map(|c| c.conj());
            vectors.set_column(j, &conj);
            paired[i] = true;
            paired[j] = true;
        }
    }
}

/// 2-norm condition number; infinite for a singular matrix.
pub fn condition_number<T: Scalar>(m: &DMatrix<C<T>>) -> T {
    if m.nrows() == 0 {
        return T::one();
    }
    if m.iter().any(|c| !c.re.is_finite_value() || !c.im.is_finite_value()) {
        return T::max_value().unwrap();
    }
    let svd = SVD::new(m.clone(), false, false);
    let (mut lo, mut hi) = (T::max_value().unwrap(), T::zero());
    for &s in svd.singular_values.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if lo <= T::zero() {
        T::max_value().unwrap()
    } else {
        hi / lo
    }
}

fn givens<T: Scalar>(f: C<T>, g: C<T>) -> (T, C<T>) {
    let zero = C::new(T::zero(), T::zero());
    if g == zero {
        return (T::one(), zero);
    }
    if f == zero {
        return (T::zero(), g.conj() / C::new(g.modulus(), T::zero()));
    }
    let (fa, ga) = (f.modulus(), g.modulus());
    let norm = (fa * fa + ga * ga).sqrt();
    let c = fa / norm;
    let s = (f / C::new(fa, T::zero())) * g.conj() / C::new(norm, T::zero());
    (c, s)
}

/// x' = c x + s y ; y' = c y - conj(s) x, applied elementwise.
fn rotate<T: Scalar>(x: &mut C<T>, y: &mut C<T>, c: T, s: C<T>) {
    let cc = C::new(c, T::zero());
    let nx = cc * *x + s * *y;
    let ny = cc * *y - s.conj() * *x;
    *x = nx;
    *y = ny;
}

/// Swaps diagonal entries `k` and `k+1` of an upper-triangular Schur factor.
fn swap_adjacent<T: Scalar>(t: &mut DMatrix<C<T>>, q: &mut DMatrix<C<T>>, k: usize) {
    let n = t.nrows();
    let (t11, t22) = (t[(k, k)], t[(k + 1, k + 1)]);
    let (c, s) = givens(t[(k, k + 1)], t22 - t11);
    for col in k + 2..n {
        let (mut x, mut y) = (t[(k, col)], t[(k + 1, col)]);
        rotate(&mut x, &mut y, c, s);
        t[(k, col)] = x;
        t[(k + 1, col)] = y;
    }
    for row in 0..k {
        let (mut x, mut y) = (t[(row, k)], t[(row, k + 1)]);
        rotate(&mut x, &mut y, c, s.conj());
        t[(row, k)] = x;
        t[(row, k + 1)] = y;
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    for row in 0..n {
        let (mut x, mut y) = (q[(row, k)], q[(row, k + 1)]);
        rotate(&mut x, &mut y, c, s.conj());
        q[(row, k)] = x;
        q[(row, k + 1)] = y;
    }
}

/// Reordered Schur form with the selected eigenvalues leading (relative order kept).
/// Returns `(Q, T, count)`.
pub fn reordered_schur<T: Scalar>(
    a: &DMatrix<T>,
    select: impl Fn(C<T>) -> bool,
) -> (DMatrix<C<T>>, DMatrix<C<T>>, usize) {
    let (mut q, mut t) = schur(a);
    let n = t.nrows();
    let mut count = 0;
    for i in 0..n {
        if select(t[(i, i)]) {
            for k in (count..i).rev() {
                swap_adjacent(&mut t, &mut q, k);
            }
            count += 1;
        }
    }
    (q, t, count)
}

/// Real orthonormal basis (columns) of the invariant subspace belonging to the
/// selected eigenvalues. The selection must be closed under conjugation.
pub fn invariant_subspace<T: Scalar>(a: &DMatrix<T>, select: impl Fn(C<T>) -> bool) -> DMatrix<T> {
    let n = a.nrows();
    let (q, _, count) = reordered_schur(a, select);
    if count == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mut stacked = DMatrix::<T>::zeros(n, 2 * count);
    for c in 0..count {
        for r in 0..n {
            stacked[(r, c)] = q[(r, c)].re;
            stacked[(r, count + c)] = q[(r, c)].im;
        }
    }
    let svd = SVD::new(stacked, true, false);
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].as_f64().total_cmp(&svd.singular_values[i].as_f64()));
    let keep = count.min(idx.len());
    DMatrix::from_fn(n, keep, |r, c| u[(r, idx[c])])
}
