//! Refinement by whitening, symmetric re-weighting over a seed dictionary
//! and de-whitening, plus the orthogonal Procrustes alternative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SeedDictionary;
use crate::numerics::{gram, svd, sym_power, Clamp, LinearMap, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    Symmetric,
    Procrustes,
}

impl std::str::FromStr for RefineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(RefineMode::Symmetric),
            "procrustes" => Ok(RefineMode::Procrustes),
            other => Err(Error::Config(format!(
                "unknown refine mode {other:?} (expected symmetric or procrustes)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Whitened {
    pub x_w: Mat,
    /// `(XᵀX)^{-1/2}`.
    pub w: Mat,
    /// Eigenvalues of `XᵀX` raised to the clamp floor.
    pub defect: usize,
}

/// `X_w = X (XᵀX)^{-1/2}`.
pub fn whiten(x: &Mat) -> Result<Whitened> {
    let root = sym_power(&gram(x), -0.5, Clamp::default())?;
    if root.clamped > 0 {
        log::warn!(
            "whitening: {} of {} covariance eigenvalues clamped (rank-deficient input)",
            root.clamped,
            x.ncols()
        );
    }
    Ok(Whitened {
        x_w: x * &root.matrix,
        w: root.matrix,
        defect: root.clamped,
    })
}

#[derive(Debug, Clone)]
pub struct Reweighted {
    pub x_o: Mat,
    pub y_o: Mat,
    pub u: Mat,
    pub s: Vector,
    pub v: Mat,
}

fn dictionary_rows(x: &Mat, y: &Mat, dict: &SeedDictionary) -> Result<(Mat, Mat)> {
    if dict.is_empty() {
        return Err(Error::stage("correspond", "seed dictionary is empty"));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::Contract("source and target dimensions differ".into()));
    }
    let pairs = dict.pairs();
    if let Some(p) = pairs.iter().find(|p| p.src >= x.nrows() || p.tgt >= y.nrows()) {
        return Err(Error::Contract(format!(
            "dictionary pair ({}, {}) is out of range",
            p.src, p.tgt
        )));
    }
    let xd = Mat::from_fn(pairs.len(), x.ncols(), |i, j| x[(pairs[i].src, j)]);
    let yd = Mat::from_fn(pairs.len(), y.ncols(), |i, j| y[(pairs[i].tgt, j)]);
    Ok((xd, yd))
}

/// `U S Vᵀ = (X_w^d)ᵀ Y_w^d`, `X_o = X_w U S^{1/2}`, `Y_o = Y_w V S^{1/2}`.
pub fn symmetric_reweight(x_w: &Mat, y_w: &Mat, dict: &SeedDictionary) -> Result<Reweighted> {
    let (xd, yd) = dictionary_rows(x_w, y_w, dict)?;
    let dec = svd(&xd.tr_mul(&yd))?;
    let root = Mat::from_diagonal(&dec.s.map(f64::sqrt));
    Ok(Reweighted {
        x_o: x_w * &dec.u * &root,
        y_o: y_w * &dec.v * &root,
        u: dec.u,
        s: dec.s,
        v: dec.v,
    })
}

/// `X_C = X_o Uᵀ (XᵀX)^{1/2} U`.
pub fn dewhiten(x_o: &Mat, u: &Mat, x_orig: &Mat) -> Result<Mat> {
    let root = sym_power(&gram(x_orig), 0.5, Clamp::default())?;
    Ok(x_o * u.transpose() * root.matrix * u)
}

/// Orthogonal `W = U Vᵀ` from `U S Vᵀ = (X^d)ᵀ Y^d`, so that `X^d W ≈ Y^d`.
pub fn procrustes_solve(x: &Mat, y: &Mat, dict: &SeedDictionary) -> Result<LinearMap> {
    let (xd, yd) = dictionary_rows(x, y, dict)?;
    let dec = svd(&xd.tr_mul(&yd))?;
    Ok(LinearMap(dec.u * dec.v.transpose()))
}

#[derive(Debug, Clone)]
pub struct CorrespondOutput {
    pub x_c: Mat,
    pub y_c: Mat,
    pub singular_values: Vector,
    /// Clamped covariance eigenvalues of (source, target).
    pub defects: (usize, usize),
}

/// Whiten, re-weight, de-whiten both sides.
pub fn correspond(x: &Mat, y: &Mat, dict: &SeedDictionary) -> Result<CorrespondOutput> {
    let wx = whiten(x)?;
    let wy = whiten(y)?;
    let rw = symmetric_reweight(&wx.x_w, &wy.x_w, dict)?;
    Ok(CorrespondOutput {
        x_c: dewhiten(&rw.x_o, &rw.u, x)?,
        y_c: dewhiten(&rw.y_o, &rw.v, y)?,
        singular_values: rw.s,
        defects: (wx.defect, wy.defect),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DictPair;
    use crate::numerics::{gaussian_matrix, orthogonality_defect, random_orthogonal, rotation2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_dict(n: usize) -> SeedDictionary {
        SeedDictionary::from_pairs(
            (0..n)
                .map(|i| DictPair {
                    src: i,
                    tgt: i,
                    score: 1.0,
                })
                .collect(),
        )
    }

    #[test]
    fn whiten_scaled_identity() {
        let x = Mat::identity(2, 2) * 2.0;
        let w = whiten(&x).unwrap();
        assert!((&w.w - Mat::identity(2, 2) * 0.5).amax() < 1e-15);
        assert!((&w.x_w - Mat::identity(2, 2)).amax() < 1e-15);
        assert_eq!(w.defect, 0);
    }

    #[test]
    fn whiten_rank_deficient_reports_defect() {
        let mut x = gaussian_matrix(20, 3, &mut ChaCha8Rng::seed_from_u64(4));
        let col = x.column(0).into_owned();
        x.set_column(2, &col);
        let w = whiten(&x).unwrap();
        assert!(w.defect > 0);
        assert!(w.x_w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn reweight_symmetric_case() {
        let x = gaussian_matrix(15, 4, &mut ChaCha8Rng::seed_from_u64(5));
        let w = whiten(&x).unwrap();
        let rw = symmetric_reweight(&w.x_w, &w.x_w, &identity_dict(15)).unwrap();
        assert!((&rw.x_o - &rw.y_o).amax() < 1e-10);
    }

    #[test]
    fn reweight_scalar_case() {
        let x = Mat::from_row_slice(1, 1, &[1.0]);
        let rw = symmetric_reweight(&x, &x, &identity_dict(1)).unwrap();
        assert_eq!(rw.s[0], 1.0);
        assert_eq!(rw.x_o, x);
    }

    #[test]
    fn reweight_rejects_empty_dictionary() {
        let x = Mat::identity(2, 2);
        assert!(matches!(
            symmetric_reweight(&x, &x, &SeedDictionary::default()),
            Err(Error::Stage { .. })
        ));
    }

    #[test]
    fn dewhiten_identity_covariance() {
        let x = Mat::identity(3, 3);
        let u = random_orthogonal(3, &mut ChaCha8Rng::seed_from_u64(6));
        let x_o = gaussian_matrix(3, 3, &mut ChaCha8Rng::seed_from_u64(7));
        assert!((dewhiten(&x_o, &u, &x).unwrap() - &x_o).amax() < 1e-12);
    }

    #[test]
    fn dewhiten_diagonal_covariance() {
        // XᵀX = diag(4, 9), so (XᵀX)^{1/2} = diag(2, 3).
        let x = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let u = rotation2(0.3);
        let x_o = Mat::from_row_slice(1, 2, &[1.0, -2.0]);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        // Uᵀ diag(2,3) U by hand with U = [[c, -s], [s, c]].
        let m = Mat::from_row_slice(
            2,
            2,
            &[
                2.0 * c * c + 3.0 * s * s,
                -2.0 * c * s + 3.0 * s * c,
                -2.0 * c * s + 3.0 * s * c,
                2.0 * s * s + 3.0 * c * c,
            ],
        );
        let expected = &x_o * m;
        assert!((dewhiten(&x_o, &u, &x).unwrap() - expected).amax() < 1e-12);
    }

    #[test]
    fn full_cycle_preserves_gram() {
        // With Y = X every singular value is 1, so U is only fixed up to a
        // rotation and the cycle returns X U. The Gram matrix is preserved up
        // to that rotation.
        let x = gaussian_matrix(30, 5, &mut ChaCha8Rng::seed_from_u64(8));
        let wx = whiten(&x).unwrap();
        let rw = symmetric_reweight(&wx.x_w, &wx.x_w, &identity_dict(30)).unwrap();
        let x_c = dewhiten(&rw.x_o, &rw.u, &x).unwrap();
        assert!(orthogonality_defect(&rw.u) < 1e-10);
        assert!((&x_c - &x * &rw.u).amax() < 1e-8);
        let rotated = rw.u.transpose() * gram(&x) * &rw.u;
        assert!((gram(&x_c) - rotated).amax() < 1e-6);
        let (ev_c, _) = crate::numerics::sym_eigen(&gram(&x_c)).unwrap();
        let (ev, _) = crate::numerics::sym_eigen(&gram(&x)).unwrap();
        assert!((ev_c - ev).amax() < 1e-6);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian_matrix(20, 4, &mut rng);
        let q = random_orthogonal(4, &mut rng);
        let w = procrustes_solve(&x, &(&x * &q), &identity_dict(20)).unwrap();
        assert!((w.matrix() - &q).amax() < 1e-8);
        assert!(orthogonality_defect(w.matrix()) < 1e-10);

        let same = procrustes_solve(&x, &x, &identity_dict(20)).unwrap();
        assert!((same.matrix() - Mat::identity(4, 4)).amax() < 1e-10);
    }

    #[test]
    fn procrustes_quarter_turn() {
        let x = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let rot = rotation2(std::f64::consts::FRAC_PI_2);
        // rows map as x Rᵀ, so the row-acting map is Rᵀ
        let y = &x * rot.transpose();
        let w = procrustes_solve(&x, &y, &identity_dict(3)).unwrap();
        assert!((w.matrix() - rot.transpose()).amax() < 1e-12);
    }

    #[test]
    fn refine_mode_parsing() {
        assert_eq!("procrustes".parse::<RefineMode>().unwrap(), RefineMode::Procrustes);
        assert!("vecmap".parse::<RefineMode>().is_err());
    }
}
