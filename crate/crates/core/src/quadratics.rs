//! Concave quadratic forms in mode/precision parameterization.
//!
//! A [`QuadraticForm`] is the function
//!
//! `q(x) = log_scale - 1/2 (x - mode)^T P (x - mode)`
//!
//! with `P` symmetric positive definite. Exact maximization of a joint
//! quadratic over one block of variables is a Schur complement of the
//! precision, see [`JointQuadratic::partial_maximize`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor applied by [`repair_spd`].
pub const SPD_FLOOR: f64 = 1e-8;

/// Relative Frobenius asymmetry accepted by constructors.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Outcome of [`repair_spd`].
#[derive(Debug, Clone)]
pub struct SpdRepair {
    pub matrix: DMatrix<f64>,
    /// True when at least one eigenvalue was raised to the floor.
    pub clamped: bool,
}

/// Symmetrize `m` and raise eigenvalues below [`SPD_FLOOR`] to the floor.
///
/// When no eigenvalue needs clamping the symmetric part is returned as is,
/// so well-conditioned inputs pass through without an eigendecomposition
/// round trip.
pub fn repair_spd(m: &DMatrix<f64>) -> Result<SpdRepair> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCurvature(
            "curvature matrix has non-finite entries".into(),
        ));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= SPD_FLOOR) {
        return Ok(SpdRepair {
            matrix: sym,
            clamped: false,
        });
    }
    let clamped_vals = eig.eigenvalues.map(|l| l.max(SPD_FLOOR));
    let v = &eig.eigenvectors;
    let rebuilt = symmetrize(&(v * DMatrix::from_diagonal(&clamped_vals) * v.transpose()));
    if rebuilt.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateCurvature(
            "repaired curvature is not finite".into(),
        ));
    }
    // The rebuilt matrix can lose definiteness through round-off when the
    // other eigenvalues are huge; that is a genuinely degenerate case.
    if Cholesky::new(rebuilt.clone()).is_none() {
        return Err(Error::DegenerateCurvature(
            "eigenvalue below the repair floor after clamping".into(),
        ));
    }
    Ok(SpdRepair {
        matrix: rebuilt,
        clamped: true,
    })
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    let norm = m.norm();
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} is not symmetric (relative asymmetry {:.3e})",
            asym / norm
        )));
    }
    Ok(())
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what} is not positive definite")))
}

/// Inverse of an SPD matrix via Cholesky, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    log_scale: f64,
    mode: DVector<f64>,
    precision: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(log_scale: f64, mode: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let n = mode.len();
        if n == 0 {
            return Err(Error::Dimension("quadratic form needs dim >= 1".into()));
        }
        if precision.nrows() != n || precision.ncols() != n {
            return Err(Error::Dimension(format!(
                "precision is {}x{}, mode has length {n}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        check_symmetric(&precision, "precision")?;
        cholesky(&precision, "precision")?;
        Ok(Self {
            log_scale,
            mode,
            precision,
        })
    }

    /// Laplace-style quadratic from a mode, the value there and the negative
    /// Hessian. The curvature goes through [`repair_spd`]; the returned flag
    /// reports whether clamping fired.
    pub fn from_mode_and_hessian(
        mode: DVector<f64>,
        value: f64,
        neg_hessian: &DMatrix<f64>,
    ) -> Result<(Self, bool)> {
        if neg_hessian.nrows() != mode.len() || neg_hessian.ncols() != mode.len() {
            return Err(Error::Dimension(format!(
                "negative Hessian is {}x{}, mode has length {}",
                neg_hessian.nrows(),
                neg_hessian.ncols(),
                mode.len()
            )));
        }
        let repaired = repair_spd(neg_hessian)?;
        let q = Self::new(value, mode, repaired.matrix)?;
        Ok((q, repaired.clamped))
    }

    pub fn dim(&self) -> usize {
        self.mode.len()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn mode(&self) -> &DVector<f64> {
        &self.mode
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        // precision was Cholesky-checked at construction
        spd_inverse(&self.precision, "precision").expect("precision is SPD")
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has length {}, form has dim {}",
                x.len(),
                self.dim()
            )));
        }
        let d = x - &self.mode;
        Ok(self.log_scale - 0.5 * d.dot(&(&self.precision * &d)))
    }

    /// Same form shifted by a constant in value.
    pub fn with_log_scale(&self, log_scale: f64) -> Self {
        Self {
            log_scale,
            ..self.clone()
        }
    }
}

/// Which block of a [`JointQuadratic`] to eliminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A,
    B,
}

/// `x_elim = gain * x_keep + offset`, with conditional covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConditional {
    gain: DMatrix<f64>,
    offset: DVector<f64>,
    cond_cov: DMatrix<f64>,
}

impl AffineConditional {
    pub fn new(gain: DMatrix<f64>, offset: DVector<f64>, cond_cov: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() != offset.len() || cond_cov.nrows() != offset.len() {
            return Err(Error::Dimension("affine conditional blocks disagree".into()));
        }
        check_symmetric(&cond_cov, "conditional covariance")?;
        cholesky(&cond_cov, "conditional covariance")?;
        Ok(Self {
            gain,
            offset,
            cond_cov,
        })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn cond_cov(&self) -> &DMatrix<f64> {
        &self.cond_cov
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.gain.ncols() {
            return Err(Error::Dimension(format!(
                "affine map expects length {}, got {}",
                self.gain.ncols(),
                x.len()
            )));
        }
        Ok(&self.gain * x + &self.offset)
    }
}

/// Concave quadratic over a pair of blocks `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointQuadratic {
    value_at_mode: f64,
    mode_a: DVector<f64>,
    mode_b: DVector<f64>,
    prec_aa: DMatrix<f64>,
    prec_ab: DMatrix<f64>,
    prec_bb: DMatrix<f64>,
}

impl JointQuadratic {
    pub fn new(
        value_at_mode: f64,
        mode_a: DVector<f64>,
        mode_b: DVector<f64>,
        prec_aa: DMatrix<f64>,
        prec_ab: DMatrix<f64>,
        prec_bb: DMatrix<f64>,
    ) -> Result<Self> {
        let (na, nb) = (mode_a.len(), mode_b.len());
        if na == 0 || nb == 0 {
            return Err(Error::Dimension("joint blocks need dim >= 1".into()));
        }
        if prec_aa.shape() != (na, na) || prec_ab.shape() != (na, nb) || prec_bb.shape() != (nb, nb)
        {
            return Err(Error::Dimension(format!(
                "precision blocks {:?} {:?} {:?} do not match block sizes ({na}, {nb})",
                prec_aa.shape(),
                prec_ab.shape(),
                prec_bb.shape()
            )));
        }
        let j = Self {
            value_at_mode,
            mode_a,
            mode_b,
            prec_aa,
            prec_ab,
            prec_bb,
        };
        let full = j.full_precision();
        check_symmetric(&full, "joint precision")?;
        cholesky(&full, "joint precision")?;
        Ok(j)
    }

    /// Split a full `(na+nb)` square precision into blocks.
    pub fn from_full(
        value_at_mode: f64,
        mode_a: DVector<f64>,
        mode_b: DVector<f64>,
        precision: &DMatrix<f64>,
    ) -> Result<Self> {
        let (na, nb) = (mode_a.len(), mode_b.len());
        if precision.shape() != (na + nb, na + nb) {
            return Err(Error::Dimension(format!(
                "precision is {:?}, expected {}x{}",
                precision.shape(),
                na + nb,
                na + nb
            )));
        }
        Self::new(
            value_at_mode,
            mode_a,
            mode_b,
            precision.view((0, 0), (na, na)).into_owned(),
            precision.view((0, na), (na, nb)).into_owned(),
            precision.view((na, na), (nb, nb)).into_owned(),
        )
    }

    pub fn dim_a(&self) -> usize {
        self.mode_a.len()
    }

    pub fn dim_b(&self) -> usize {
        self.mode_b.len()
    }

    pub fn value_at_mode(&self) -> f64 {
        self.value_at_mode
    }

    pub fn mode_a(&self) -> &DVector<f64> {
        &self.mode_a
    }

    pub fn mode_b(&self) -> &DVector<f64> {
        &self.mode_b
    }

    pub fn full_precision(&self) -> DMatrix<f64> {
        let (na, nb) = (self.dim_a(), self.dim_b());
        let mut full = DMatrix::zeros(na + nb, na + nb);
        full.view_mut((0, 0), (na, na)).copy_from(&self.prec_aa);
        full.view_mut((0, na), (na, nb)).copy_from(&self.prec_ab);
        full.view_mut((na, 0), (nb, na)).copy_from(&self.prec_ab.transpose());
        full.view_mut((na, na), (nb, nb)).copy_from(&self.prec_bb);
        full
    }

    pub fn evaluate(&self, xa: &DVector<f64>, xb: &DVector<f64>) -> Result<f64> {
        if xa.len() != self.dim_a() || xb.len() != self.dim_b() {
            return Err(Error::Dimension("point does not match joint block sizes".into()));
        }
        let da = xa - &self.mode_a;
        let db = xb - &self.mode_b;
        let quad = da.dot(&(&self.prec_aa * &da))
            + 2.0 * da.dot(&(&self.prec_ab * &db))
            + db.dot(&(&self.prec_bb * &db));
        Ok(self.value_at_mode - 0.5 * quad)
    }

    /// Maximize over the `eliminate` block in closed form.
    ///
    /// Returns the quadratic on the kept block (Schur complement precision,
    /// same mode, same value at the mode) and the affine maximizer of the
    /// eliminated block as a function of the kept block.
    pub fn partial_maximize(&self, eliminate: Block) -> Result<(QuadraticForm, AffineConditional)> {
        let prec_ba = self.prec_ab.transpose();
        let (m_elim, m_keep, p_ee, p_ek, p_kk) = match eliminate {
            Block::A => (&self.mode_a, &self.mode_b, &self.prec_aa, &self.prec_ab, &self.prec_bb),
            Block::B => (&self.mode_b, &self.mode_a, &self.prec_bb, &prec_ba, &self.prec_aa),
        };
        let chol = Cholesky::new(p_ee.clone())
            .ok_or_else(|| Error::Singular("eliminated block precision is not invertible".into()))?;
        let gain = -chol.solve(p_ek);
        // p_kk - p_ke p_ee^{-1} p_ek  ==  p_kk + p_ek^T gain
        let schur = symmetrize(&(p_kk + p_ek.transpose() * &gain));
        let offset = m_elim - &gain * m_keep;
        let cond_cov = symmetrize(&chol.inverse());
        let marginal = QuadraticForm::new(self.value_at_mode, m_keep.clone(), schur)?;
        Ok((marginal, AffineConditional::new(gain, offset, cond_cov)?))
    }
}
