//! Coherent Point Drift registration.
//!
//! One point set (the centroids) parameterizes a Gaussian mixture with equal
//! isotropic variance and equal weights, plus one uniform outlier component;
//! the other set (the data) is treated as samples from it. EM alternates
//! posterior responsibilities with closed-form transform updates.
//!
//! Internally the transform moves the centroids onto the data, as in the
//! original formulation. [`run_cpd`] reports the inverse, i.e. the map that
//! carries data points into the centroid frame, which is what the alignment
//! pipeline applies to the source embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{svd, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpdMode {
    /// Rotation, uniform scale and translation.
    Similarity,
    /// General invertible linear part and translation.
    Affine,
}

impl std::str::FromStr for CpdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(CpdMode::Similarity),
            "affine" => Ok(CpdMode::Affine),
            other => Err(Error::Config(format!("unknown CPD mode {other:?}"))),
        }
    }
}

/// `p ↦ s · L p + t` on column vectors; rows of a matrix are mapped as
/// `s · X Lᵀ + 1 tᵀ`. In similarity mode `L` is a rotation, in affine mode
/// it is a general matrix and `s` stays 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub mode: CpdMode,
    pub linear: Mat,
    pub scale: f64,
    pub translation: Vector,
}

impl SimilarityTransform {
    pub fn identity(d: usize, mode: CpdMode) -> Self {
        SimilarityTransform {
            mode,
            linear: Mat::identity(d, d),
            scale: 1.0,
            translation: Vector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.nrows()
    }

    pub fn apply(&self, points: &Mat) -> Mat {
        let mut out = points * self.linear.transpose();
        if self.scale != 1.0 {
            out *= self.scale;
        }
        for mut row in out.row_iter_mut() {
            for (v, t) in row.iter_mut().zip(self.translation.iter()) {
                *v += t;
            }
        }
        out
    }

    pub fn inverse(&self) -> Result<Self> {
        let linear_inv = match self.mode {
            CpdMode::Similarity => self.linear.transpose(),
            CpdMode::Affine => self.linear.clone().try_inverse().ok_or_else(|| {
                Error::NumericalFailure {
                    operation: "affine transform inverse",
                    condition: crate::numerics::condition_estimate(&self.linear),
                }
            })?,
        };
        if !(self.scale > 0.0) {
            return Err(Error::Contract(format!(
                "cannot invert a transform with scale {}",
                self.scale
            )));
        }
        let scale = 1.0 / self.scale;
        let translation = -(&linear_inv * &self.translation) * scale;
        Ok(SimilarityTransform {
            mode: self.mode,
            linear: linear_inv,
            scale,
            translation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdConfig {
    /// Weight of the uniform outlier component, in `[0, 1)`.
    pub outlier_weight: f64,
    pub max_iter: usize,
    /// Absolute change of the objective below which EM stops.
    pub tol: f64,
    pub mode: CpdMode,
    /// Number of leading (most frequent) rows of each set that are registered.
    pub point_limit: usize,
    pub sigma2_floor: f64,
}

impl Default for CpdConfig {
    fn default() -> Self {
        CpdConfig {
            outlier_weight: 0.1,
            max_iter: 150,
            tol: 1e-5,
            mode: CpdMode::Similarity,
            point_limit: 5000,
            sigma2_floor: 1e-10,
        }
    }
}

impl CpdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.outlier_weight) {
            return Err(Error::Config(format!(
                "outlier weight must lie in [0, 1), got {}",
                self.outlier_weight
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.point_limit == 0 {
            return Err(Error::Config("point_limit must be at least 1".into()));
        }
        if !(self.sigma2_floor > 0.0) {
            return Err(Error::Config("sigma2 floor must be positive".into()));
        }
        Ok(())
    }
}

/// Posterior responsibilities of one E-step.
#[derive(Debug, Clone)]
pub struct Posterior {
    /// `M × N`; entry `(m, n)` is the responsibility of centroid `m` for
    /// data point `n`.
    pub p: Mat,
    /// Outlier responsibility per data point.
    pub outlier: Vec<f64>,
    /// Negative log-likelihood of the data under the current parameters.
    pub nll: f64,
}

#[derive(Debug, Clone)]
pub struct CpdState {
    pub posterior: Posterior,
    pub sigma2: f64,
    /// Current centroid-moving transform.
    pub transform: SimilarityTransform,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `Σₙ Σₘ ‖xₙ − yₘ‖² / (D N M)`, floored.
pub fn initial_sigma2(data: &Mat, centroids: &Mat, floor: f64) -> f64 {
    let (n, m, d) = (data.nrows() as f64, centroids.nrows() as f64, data.ncols() as f64);
    let sum_x: f64 = data.iter().map(|v| v * v).sum();
    let sum_y: f64 = centroids.iter().map(|v| v * v).sum();
    let cross: f64 = data
        .row_sum()
        .iter()
        .zip(centroids.row_sum().iter())
        .map(|(a, b)| a * b)
        .sum();
    let total = m * sum_x + n * sum_y - 2.0 * cross;
    (total / (d * n * m)).max(floor)
}

fn check_sets(data: &Mat, centroids: &Mat) -> Result<()> {
    if data.nrows() == 0 || centroids.nrows() == 0 {
        return Err(Error::Contract("point sets must be non-empty".into()));
    }
    if data.ncols() != centroids.ncols() {
        return Err(Error::Contract(format!(
            "dimension mismatch: data has {} columns, centroids {}",
            data.ncols(),
            centroids.ncols()
        )));
    }
    Ok(())
}

/// Identity transform, initial variance and the posterior at those
/// parameters. The objective trace starts with the initial likelihood.
pub fn cpd_init(data: &Mat, centroids: &Mat, config: &CpdConfig) -> Result<CpdState> {
    config.validate()?;
    check_sets(data, centroids)?;
    let sigma2 = initial_sigma2(data, centroids, config.sigma2_floor);
    let transform = SimilarityTransform::identity(data.ncols(), config.mode);
    let posterior = e_step(&transform, sigma2, data, centroids, config)?;
    Ok(CpdState {
        objective_trace: vec![posterior.nll],
        posterior,
        sigma2,
        transform,
        iterations: 0,
        converged: false,
    })
}

/// Responsibilities under the Gaussian-plus-uniform mixture.
///
/// `P[m,n] = exp(−‖xₙ − T(yₘ)‖²/2σ²) / (Σₘ' exp(−‖xₙ − T(yₘ')‖²/2σ²) + c)`
/// with `c = (2πσ²)^{D/2} · w/(1−w) · M/N`. Evaluated in the log domain.
pub fn e_step(
    transform: &SimilarityTransform,
    sigma2: f64,
    data: &Mat,
    centroids: &Mat,
    config: &CpdConfig,
) -> Result<Posterior> {
    check_sets(data, centroids)?;
    if !(sigma2 > 0.0) {
        return Err(Error::Contract(format!("sigma2 must be positive, got {sigma2}")));
    }
    let (n, m, d) = (data.nrows(), centroids.nrows(), data.ncols());
    let w = config.outlier_weight;
    let moved = transform.apply(centroids);

    let x_sq: Vec<f64> = data.row_iter().map(|r| r.norm_squared()).collect();
    let y_sq: Vec<f64> = moved.row_iter().map(|r| r.norm_squared()).collect();
    // M × N matrix of -‖xₙ − T(yₘ)‖² / 2σ², built from the Gram expansion.
    let mut p = &moved * data.transpose();
    let inv = 1.0 / (2.0 * sigma2);
    for col in 0..n {
        for row in 0..m {
            let dist = (x_sq[col] + y_sq[row] - 2.0 * p[(row, col)]).max(0.0);
            p[(row, col)] = -dist * inv;
        }
    }

    let log_norm = 0.5 * d as f64 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let log_c = if w > 0.0 {
        log_norm + (w / (1.0 - w)).ln() + (m as f64 / n as f64).ln()
    } else {
        f64::NEG_INFINITY
    };
    let log_weight = ((1.0 - w) / m as f64).ln();

    let mut outlier = Vec::with_capacity(n);
    let mut nll = 0.0;
    for col in 0..n {
        let mut column = p.column_mut(col);
        let peak = column.iter().copied().fold(log_c, f64::max);
        let tail = (log_c - peak).exp();
        let mut total = tail;
        for v in column.iter_mut() {
            *v = (*v - peak).exp();
            total += *v;
        }
        let log_den = peak + total.ln();
        let scale = 1.0 / total;
        for v in column.iter_mut() {
            *v *= scale;
        }
        outlier.push(tail * scale);
        nll -= log_weight - log_norm + log_den;
    }
    if !nll.is_finite() {
        return Err(Error::NonFinite("CPD negative log-likelihood".into()));
    }
    Ok(Posterior { p, outlier, nll })
}

/// Closed-form maximization: the centroid-moving transform and σ² that
/// minimize the expected complete-data negative log-likelihood.
pub fn m_step(
    posterior: &Posterior,
    data: &Mat,
    centroids: &Mat,
    config: &CpdConfig,
) -> Result<(SimilarityTransform, f64)> {
    check_sets(data, centroids)?;
    let p = &posterior.p;
    let d = data.ncols();
    let p1: Vector = p.column_sum();
    let pt1: Vector = p.row_sum().transpose();
    let np: f64 = p1.sum();
    if !(np > 1e-12) {
        return Err(Error::stage(
            "transform",
            "posterior mass collapsed onto the outlier component; lower the outlier weight",
        ));
    }

    let mu_x = data.tr_mul(&pt1) / np;
    let mu_y = centroids.tr_mul(&p1) / np;
    // A = X̂ᵀ Pᵀ Ŷ
    let px = p * data;
    let a = px.tr_mul(centroids) - (&mu_x * mu_y.transpose()) * np;

    let x_weighted: f64 = data
        .row_iter()
        .zip(pt1.iter())
        .map(|(r, w)| w * r.norm_squared())
        .sum::<f64>()
        - np * mu_x.norm_squared();

    let (transform, residual) = match config.mode {
        CpdMode::Similarity => {
            let y_weighted: f64 = centroids
                .row_iter()
                .zip(p1.iter())
                .map(|(r, w)| w * r.norm_squared())
                .sum::<f64>()
                - np * mu_y.norm_squared();
            let dec = svd(&a)?;
            let mut c = Vector::from_element(d, 1.0);
            c[d - 1] = (&dec.u * dec.v.transpose()).determinant().signum();
            let rotation = &dec.u * Mat::from_diagonal(&c) * dec.v.transpose();
            let trace_ar: f64 = dec.s.iter().zip(c.iter()).map(|(s, c)| s * c).sum();
            if !(y_weighted > 0.0) || !(trace_ar > 0.0) {
                return Err(Error::stage(
                    "transform",
                    "degenerate similarity update (non-positive scale)",
                ));
            }
            let scale = trace_ar / y_weighted;
            let translation = &mu_x - (&rotation * &mu_y) * scale;
            (
                SimilarityTransform {
                    mode: CpdMode::Similarity,
                    linear: rotation,
                    scale,
                    translation,
                },
                x_weighted - scale * trace_ar,
            )
        }
        CpdMode::Affine => {
            let mut yy = Mat::zeros(d, d);
            for (row, w) in centroids.row_iter().zip(p1.iter()) {
                yy += row.transpose() * row * *w;
            }
            yy -= (&mu_y * mu_y.transpose()) * np;
            let yy_inv = yy.try_inverse().ok_or_else(|| Error::NumericalFailure {
                operation: "affine CPD update",
                condition: f64::INFINITY,
            })?;
            let linear = &a * yy_inv;
            let translation = &mu_x - &linear * &mu_y;
            let trace_ab = a.component_mul(&linear).sum();
            (
                SimilarityTransform {
                    mode: CpdMode::Affine,
                    linear,
                    scale: 1.0,
                    translation,
                },
                x_weighted - trace_ab,
            )
        }
    };
    let sigma2 = (residual / (np * d as f64)).max(config.sigma2_floor);
    if !sigma2.is_finite() {
        return Err(Error::NonFinite("CPD variance update".into()));
    }
    Ok((transform, sigma2))
}

/// Result of a full registration.
#[derive(Debug, Clone)]
pub struct CpdFit {
    /// Map carrying data points into the centroid frame.
    pub transform: SimilarityTransform,
    pub state: CpdState,
}

/// Registers `data` (points) against `centroids` (mixture means), using the
/// first `point_limit` rows of each. EM runs on copies normalized to zero
/// mean and unit RMS radius; the objective trace is in those units, while the
/// transform and `sigma2` are reported in the original frames.
pub fn run_cpd(data: &Mat, centroids: &Mat, config: &CpdConfig) -> Result<CpdFit> {
    config.validate()?;
    let data = data.rows(0, data.nrows().min(config.point_limit)).into_owned();
    let centroids = centroids
        .rows(0, centroids.nrows().min(config.point_limit))
        .into_owned();
    let (data, data_frame) = normalize(&data)?;
    let (centroids, centroid_frame) = normalize(&centroids)?;
    let mut state = cpd_init(&data, &centroids, config)?;
    while state.iterations < config.max_iter {
        let (transform, sigma2) = m_step(&state.posterior, &data, &centroids, config)?;
        let posterior = e_step(&transform, sigma2, &data, &centroids, config)?;
        let previous = *state.objective_trace.last().expect("trace starts non-empty");
        state.objective_trace.push(posterior.nll);
        state.transform = transform;
        state.sigma2 = sigma2;
        state.posterior = posterior;
        state.iterations += 1;
        // At the floor the fit is exact to working precision; further cycles
        // only move the objective by round-off amplified by 1/σ².
        if (previous - state.posterior.nll).abs() < config.tol || sigma2 <= config.sigma2_floor {
            state.converged = true;
            break;
        }
    }
    log::debug!(
        "cpd: {} iterations, sigma2 {:.3e}, nll {:.6}",
        state.iterations,
        state.sigma2,
        state.posterior.nll
    );
    state.transform = denormalize(&state.transform, &data_frame, &centroid_frame);
    state.sigma2 *= data_frame.radius * data_frame.radius;
    Ok(CpdFit {
        transform: state.transform.inverse()?,
        state,
    })
}

/// Centre and RMS radius of a point set.
#[derive(Debug, Clone)]
struct Frame {
    mean: Vector,
    radius: f64,
}

/// Shifts to zero mean and scales to unit RMS radius. Without this the
/// uniform component swamps the Gaussians once `D` grows.
fn normalize(points: &Mat) -> Result<(Mat, Frame)> {
    if points.nrows() == 0 {
        return Err(Error::Contract("point sets must be non-empty".into()));
    }
    let mean = points.row_mean().transpose();
    let mut centred = points.clone();
    for mut row in centred.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(mean.iter()) {
            *v -= m;
        }
    }
    let radius = (centred.norm_squared() / points.nrows() as f64).sqrt();
    let radius = if radius > 0.0 { radius } else { 1.0 };
    Ok((centred / radius, Frame { mean, radius }))
}

/// Expresses a transform fitted between normalized sets in the original frames.
fn denormalize(t: &SimilarityTransform, data: &Frame, centroids: &Frame) -> SimilarityTransform {
    let ratio = data.radius / centroids.radius;
    let (linear, scale) = match t.mode {
        CpdMode::Similarity => (t.linear.clone(), t.scale * ratio),
        CpdMode::Affine => (&t.linear * ratio, t.scale),
    };
    let translation =
        &t.translation * data.radius + &data.mean - (&linear * &centroids.mean) * scale;
    SimilarityTransform {
        mode: t.mode,
        linear,
        scale,
        translation,
    }
}

/// Output of the two-direction registration stage.
#[derive(Debug, Clone)]
pub struct TransformStage {
    /// Source rows mapped into the target frame.
    pub x_t: Mat,
    /// Target rows mapped into the source frame.
    pub y_t: Mat,
    pub forward: CpdFit,
    pub backward: CpdFit,
}

/// Runs CPD once per direction from the same inputs. Transforms fitted on
/// the leading `point_limit` rows are applied to every row.
pub fn apply_transform_stage(x_c: &Mat, y_c: &Mat, config: &CpdConfig) -> Result<TransformStage> {
    let forward = run_cpd(x_c, y_c, config)?;
    let backward = run_cpd(y_c, x_c, config)?;
    Ok(TransformStage {
        x_t: forward.transform.apply(x_c),
        y_t: backward.transform.apply(y_c),
        forward,
        backward,
    })
}

/// JSON form of a fitted transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub mode: CpdMode,
    /// Linear part, row-major.
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub s: f64,
    pub t: Vec<f64>,
    pub sigma2: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

impl TransformRecord {
    pub fn from_fit(fit: &CpdFit) -> Self {
        let tr = &fit.transform;
        TransformRecord {
            mode: tr.mode,
            r: tr.linear.transpose().as_slice().to_vec(),
            s: tr.scale,
            t: tr.translation.as_slice().to_vec(),
            sigma2: fit.state.sigma2,
            iterations: fit.state.iterations,
            objective_trace: fit.state.objective_trace.clone(),
        }
    }

    pub fn transform(&self) -> Result<SimilarityTransform> {
        let d = self.t.len();
        if self.r.len() != d * d {
            return Err(Error::Contract(format!(
                "transform record has {} linear entries for dimension {d}",
                self.r.len()
            )));
        }
        Ok(SimilarityTransform {
            mode: self.mode,
            linear: Mat::from_row_slice(d, d, &self.r),
            scale: self.s,
            translation: Vector::from_column_slice(&self.t),
        })
    }
}
