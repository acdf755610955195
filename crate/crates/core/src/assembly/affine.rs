use super::geometry::{GeometryMap, Mu, Theta};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone)]
pub struct AffineTerm<T> {
    pub theta: Theta,
    pub value: T,
}

/// `M(μ) = Σ_q Θ_q(μ) M_q` with parameter-independent sparse `M_q`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    nrows: usize,
    ncols: usize,
    pub terms: Vec<AffineTerm<CsrMatrix>>,
}

impl AffineOperator {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, terms: Vec::new() }
    }

    pub fn new(nrows: usize, ncols: usize, terms: Vec<(Theta, CsrMatrix)>) -> Result<Self> {
        let mut op = Self::empty(nrows, ncols);
        for (theta, m) in terms {
            op.push(theta, m)?;
        }
        Ok(op)
    }

    pub fn push(&mut self, theta: Theta, m: CsrMatrix) -> Result<()> {
        if m.nrows() != self.nrows || m.ncols() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "affine term is {}x{}, operator is {}x{}",
                m.nrows(),
                m.ncols(),
                self.nrows,
                self.ncols
            )));
        }
        self.terms.push(AffineTerm { theta, value: m });
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn thetas(&self, geo: &GeometryMap, mu: Mu) -> Vec<f64> {
        self.terms.iter().map(|t| t.theta.eval(geo, mu)).collect()
    }

    pub fn evaluate(&self, geo: &GeometryMap, mu: Mu) -> CsrMatrix {
        let th = self.thetas(geo, mu);
        self.combine(&th)
    }

    /// `Σ_q c_q M_q` for explicit coefficients.
    pub fn combine(&self, coeffs: &[f64]) -> CsrMatrix {
        if self.terms.is_empty() {
            return CsrMatrix::zeros(self.nrows, self.ncols);
        }
        let parts: Vec<(f64, &CsrMatrix)> =
            coeffs.iter().copied().zip(self.terms.iter().map(|t| &t.value)).collect();
        CsrMatrix::linear_combination(&parts).expect("terms share dimensions")
    }

    /// `y += alpha · M(μ) x`.
    pub fn apply_acc(&self, geo: &GeometryMap, mu: Mu, alpha: f64, x: &[f64], y: &mut [f64]) {
        for t in &self.terms {
            t.value.matvec_acc(alpha * t.theta.eval(geo, mu), x, y);
        }
    }

    /// `y += alpha · M(μ)ᵀ x`.
    pub fn apply_transpose_acc(&self, geo: &GeometryMap, mu: Mu, alpha: f64, x: &[f64], y: &mut [f64]) {
        for t in &self.terms {
            t.value.transpose_matvec_acc(alpha * t.theta.eval(geo, mu), x, y);
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            terms: self
                .terms
                .iter()
                .map(|t| AffineTerm { theta: t.theta, value: t.value.transpose() })
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            terms: self
                .terms
                .iter()
                .map(|t| AffineTerm { theta: t.theta.scaled(s), value: t.value.clone() })
                .collect(),
        }
    }

    /// Drops terms whose matrix has no stored entries.
    pub fn pruned(mut self) -> Self {
        self.terms.retain(|t| t.value.nnz() > 0);
        self
    }
}

/// `v(μ) = Σ_q Θ_q(μ) v_q`.
#[derive(Debug, Clone)]
pub struct AffineVector {
    len: usize,
    pub terms: Vec<AffineTerm<Vec<f64>>>,
}

impl AffineVector {
    pub fn new(len: usize) -> Self {
        Self { len, terms: Vec::new() }
    }

    pub fn push(&mut self, theta: Theta, v: Vec<f64>) -> Result<()> {
        if v.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "affine term has length {}, expected {}",
                v.len(),
                self.len
            )));
        }
        self.terms.push(AffineTerm { theta, value: v });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn evaluate(&self, geo: &GeometryMap, mu: Mu) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for t in &self.terms {
            let th = t.theta.eval(geo, mu);
            for (o, v) in out.iter_mut().zip(&t.value) {
                *o += th * v;
            }
        }
        out
    }

    /// `-M x` term by term, keeping the affine structure.
    pub fn from_operator_action(op: &AffineOperator, x: &[f64], sign: f64) -> Self {
        let mut out = Self::new(op.nrows());
        for t in &op.terms {
            let mut v = t.value.matvec(x);
            v.iter_mut().for_each(|e| *e *= sign);
            out.terms.push(AffineTerm { theta: t.theta, value: v });
        }
        out
    }
}
