//! First-order affine interaction model `x(k+1) = A x(k) + a` and its modal solution.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::eigen::{complexify_vec, condition_number, eigen_decompose, C};
use crate::error::{Error, Result};
use crate::scalar::{bound, tolerance, Scalar};
use crate::tracks::{AgentId, Axis};

/// Interaction matrix and bias for one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionModel<T: Scalar> {
    pub axis: Axis,
    pub agents: Vec<AgentId>,
    pub a: DMatrix<T>,
    pub bias: DVector<T>,
}

impl<T: Scalar> InteractionModel<T> {
    pub fn new(axis: Axis, agents: Vec<AgentId>, a: DMatrix<T>, bias: DVector<T>) -> Result<Self> {
        let n = agents.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension { expected: n, found: if a.nrows() != n { a.nrows() } else { a.ncols() } });
        }
        if bias.len() != n {
            return Err(Error::Dimension { expected: n, found: bias.len() });
        }
        if a.iter().chain(bias.iter()).any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("interaction model"));
        }
        Ok(Self { axis, agents, a, bias })
    }

    pub fn dim(&self) -> usize {
        self.agents.len()
    }

    /// `[A | a]`.
    pub fn augmented(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a);
        m.set_column(n, &self.bias);
        m
    }

    pub fn index_of(&self, agent: AgentId) -> Option<usize> {
        self.agents.iter().position(|&a| a == agent)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelRepr<T> {
    axis: Axis,
    agent_order: Vec<AgentId>,
    #[serde(rename = "A")]
    a: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Serialize for InteractionModel<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let a = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|rc| self.a[rc]).collect();
        ModelRepr { axis: self.axis, agent_order: self.agents.clone(), a, bias: self.bias.iter().copied().collect() }
            .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for InteractionModel<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = ModelRepr::<T>::deserialize(d)?;
        let n = repr.agent_order.len();
        if repr.a.len() != n * n {
            return Err(serde::de::Error::custom(format!("A has {} entries, expected {}", repr.a.len(), n * n)));
        }
        let a = DMatrix::from_row_slice(n, n, &repr.a);
        InteractionModel::new(repr.axis, repr.agent_order, a, DVector::from_vec(repr.bias))
            .map_err(serde::de::Error::custom)
    }
}

/// Numerical settings for the modal solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct DynamicsConfig<T> {
    /// Eigenvector-matrix condition number above which a model counts as defective.
    pub condition_bound: T,
    /// Imaginary residue (relative, floor 1) discarded from real outputs; larger
    /// residues are reported as errors.
    pub imag_tolerance: T,
    /// `|lambda - 1|` at or below which the constant-velocity branch is used.
    pub unit_tolerance: T,
}

impl<T: Scalar> Default for DynamicsConfig<T> {
    fn default() -> Self {
        Self {
            condition_bound: bound(1e8, 1e-2),
            imag_tolerance: tolerance(1e-9, 1e4),
            unit_tolerance: tolerance(1e-12, 10.0),
        }
    }
}

/// Eigen-expansion of a model around an initial state.
///
/// `x0 = sum c_i e_i`, `bias = sum d_i e_i`.
#[derive(Clone, Debug)]
pub struct ModalDecomposition<T: Scalar> {
    pub eigenvalues: Vec<C<T>>,
    pub eigenvectors: DMatrix<C<T>>,
    pub c: DVector<C<T>>,
    pub d: DVector<C<T>>,
    pub condition: T,
    pub defective: bool,
    unit_tolerance: T,
    imag_tolerance: T,
}

impl<T: Scalar> ModalDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn ensure_diagonalizable(&self) -> Result<()> {
        if self.defective {
            Err(Error::Defective { condition: self.condition.as_f64() })
        } else {
            Ok(())
        }
    }
}

/// `A x + a`.
pub fn step<T: Scalar>(model: &InteractionModel<T>, x: &DVector<T>) -> Result<DVector<T>> {
    if x.len() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), found: x.len() });
    }
    Ok(&model.a * x + &model.bias)
}

pub fn decompose<T: Scalar>(
    model: &InteractionModel<T>,
    x0: &DVector<T>,
    config: &DynamicsConfig<T>,
) -> Result<ModalDecomposition<T>> {
    if x0.len() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), found: x0.len() });
    }
    let sys = eigen_decompose(&model.a);
    let condition = condition_number(&sys.vectors);
    let defective = !(condition <= config.condition_bound);
    let n = model.dim();
    // solve rather than invert; a singular basis leaves zero coefficients
    let lu = sys.vectors.clone().lu();
    let zero = DVector::<C<T>>::zeros(n);
    let c = lu.solve(&complexify_vec(x0)).unwrap_or_else(|| zero.clone());
    let d = lu.solve(&complexify_vec(&model.bias)).unwrap_or(zero);
    Ok(ModalDecomposition {
        eigenvalues: sys.values,
        eigenvectors: sys.vectors,
        c,
        d,
        condition,
        defective,
        unit_tolerance: config.unit_tolerance,
        imag_tolerance: config.imag_tolerance,
    })
}

fn cone<T: Scalar>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

/// `sum_{j<k} lambda^j`, i.e. `(lambda^k - 1)/(lambda - 1)` evaluated without
/// cancellation near `lambda = 1`.
fn geometric_sum<T: Scalar>(lambda: C<T>, k: u32, unit_tolerance: T) -> C<T> {
    let one = cone::<T>();
    let gap = lambda - one;
    if gap.modulus() <= unit_tolerance {
        return Complex::new(T::from_count(k as usize), T::zero());
    }
    if gap.modulus() < T::lit(0.5) && k <= 100_000 {
        let mut sum = Complex::new(T::zero(), T::zero());
        let mut p = one;
        for _ in 0..k {
            sum += p;
            p *= lambda;
        }
        return sum;
    }
    (lambda.powi(k as i32) - one) / gap
}

/// Complex-valued modal sum of the closed-form solution at step `k`.
pub fn closed_form_complex<T: Scalar>(decomp: &ModalDecomposition<T>, k: u32) -> Result<DVector<C<T>>> {
    decomp.ensure_diagonalizable()?;
    let n = decomp.dim();
    let mut x = DVector::<C<T>>::zeros(n);
    for i in 0..n {
        let lambda = decomp.eigenvalues[i];
        let weight = if (lambda - cone()).modulus() <= decomp.unit_tolerance {
            decomp.c[i] + decomp.d[i] * Complex::new(T::from_count(k as usize), T::zero())
        } else {
            decomp.c[i] * lambda.powi(k as i32) + decomp.d[i] * geometric_sum(lambda, k, decomp.unit_tolerance)
        };
        x += decomp.eigenvectors.column(i) * weight;
    }
    Ok(x)
}

/// State after `k` steps from the decomposition's initial condition.
///
/// The imaginary residue of the modal sum is discarded when it is within the
/// configured tolerance (relative to the state magnitude, floor 1).
pub fn closed_form<T: Scalar>(decomp: &ModalDecomposition<T>, k: u32) -> Result<DVector<T>> {
    real_part(closed_form_complex(decomp, k)?, decomp.imag_tolerance)
}

fn real_part<T: Scalar>(v: DVector<C<T>>, tol: T) -> Result<DVector<T>> {
    let scale = v.iter().map(|c| c.re.abs()).fold(T::one(), |a, b| a.max(b));
    let residue = v.iter().map(|c| c.im.abs()).fold(T::zero(), |a, b| a.max(b));
    if residue > tol * scale {
        return Err(Error::ImaginaryResidue(residue.as_f64()));
    }
    Ok(v.map(|c| c.re))
}

/// `v(k) = sum_i { c_i (mu_i - 1) mu_i^(k-1) + d_i mu_i^(k-1) } u_i`, for `k >= 1`.
pub fn modal_velocity<T: Scalar>(decomp: &ModalDecomposition<T>, k: u32) -> Result<DVector<T>> {
    decomp.ensure_diagonalizable()?;
    if k == 0 {
        return Err(Error::Config("velocity is defined for k >= 1".into()));
    }
    let n = decomp.dim();
    let mut v = DVector::<C<T>>::zeros(n);
    for i in 0..n {
        let mu = decomp.eigenvalues[i];
        let p = mu.powi(k as i32 - 1);
        let weight = decomp.c[i] * (mu - cone()) * p + decomp.d[i] * p;
        v += decomp.eigenvectors.column(i) * weight;
    }
    real_part(v, decomp.imag_tolerance)
}

/// Per-mode velocity weights `c_i (mu_i - 1) mu_i^(k-1) + d_i mu_i^(k-1)`.
pub fn modal_velocity_weights<T: Scalar>(decomp: &ModalDecomposition<T>, k: u32) -> Vec<C<T>> {
    (0..decomp.dim())
        .map(|i| {
            let mu = decomp.eigenvalues[i];
            let p = mu.powi(k.max(1) as i32 - 1);
            decomp.c[i] * (mu - cone()) * p + decomp.d[i] * p
        })
        .collect()
}

/// Reconstruction error `(||E c - x0||, ||E d - bias||)`, for diagnostics.
pub fn reconstruction_error<T: Scalar>(
    decomp: &ModalDecomposition<T>,
    x0: &DVector<T>,
    bias: &DVector<T>,
) -> (T, T) {
    let e = &decomp.eigenvectors;
    ((e * &decomp.c - complexify_vec(x0)).norm(), (e * &decomp.d - complexify_vec(bias)).norm())
}
