//! A thin unifying layer over the two engines, so reserving and the
//! bootstrap can work with either model through one interface.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::{fit_glm, FitControls, GlmFit};
use crate::hglm::{fit_hglm, HglmFit, HglmSpec};
use crate::triangle::{CellIndex, Triangle};
use crate::tweedie::FamilyPower;

/// Which engine to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Fixed origin and development effects.
    Glm,
    /// Fixed development effects, random origin-year effects.
    Hglm,
}

/// Full description of a model to fit: engine, family, and dispersion
/// handling. Serializable so result files can echo exactly what ran.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Response variance power.
    pub p: FamilyPower,
    /// Random-effect variance power (hierarchical model only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_u: Option<FamilyPower>,
    /// Fix the response dispersion instead of estimating it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_phi: Option<f64>,
    /// Fix the random-effect dispersion instead of estimating it
    /// (hierarchical model only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_phi_u: Option<f64>,
}

impl ModelSpec {
    pub fn glm(p: FamilyPower) -> Self {
        ModelSpec {
            kind: ModelKind::Glm,
            p,
            p_u: None,
            fix_phi: None,
            fix_phi_u: None,
        }
    }

    pub fn hglm(p: FamilyPower) -> Self {
        ModelSpec {
            kind: ModelKind::Hglm,
            p,
            p_u: Some(FamilyPower::GAMMA),
            fix_phi: None,
            fix_phi_u: None,
        }
    }
}

/// A fitted model of either kind.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Glm(GlmFit),
    Hglm(HglmFit),
}

impl FittedModel {
    /// Fits `spec` to an incremental triangle.
    ///
    /// For the GLM, a fixed dispersion does not move the coefficient
    /// estimates (dispersion cancels in the quasi-likelihood score), so
    /// `fix_phi` replaces the Pearson estimate after the fit and rescales
    /// the coefficient covariance; `fix_phi_u` is rejected, as the GLM has
    /// no random effects.
    pub fn fit(triangle: &Triangle, spec: &ModelSpec, controls: &FitControls) -> Result<Self> {
        match spec.kind {
            ModelKind::Glm => {
                if spec.fix_phi_u.is_some() {
                    return Err(Error::Domain(
                        "fix_phi_u applies to the hierarchical model only".into(),
                    ));
                }
                let mut fit = fit_glm(triangle, spec.p, controls)?;
                if let Some(phi) = spec.fix_phi {
                    if !phi.is_finite() || phi <= 0.0 {
                        return Err(Error::Domain(format!(
                            "fixed dispersion must be positive and finite, got {phi}"
                        )));
                    }
                    fit.coef_covariance = &fit.gram_inverse * phi;
                    fit.dispersion = phi;
                }
                Ok(FittedModel::Glm(fit))
            }
            ModelKind::Hglm => {
                let hglm_spec = HglmSpec {
                    p: spec.p,
                    p_u: spec.p_u.unwrap_or(FamilyPower::GAMMA),
                    fix_phi: spec.fix_phi,
                    fix_phi_u: spec.fix_phi_u,
                };
                Ok(FittedModel::Hglm(fit_hglm(triangle, &hglm_spec, controls)?))
            }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            FittedModel::Glm(f) => f.n,
            FittedModel::Hglm(f) => f.n,
        }
    }

    pub fn power(&self) -> FamilyPower {
        match self {
            FittedModel::Glm(f) => f.power,
            FittedModel::Hglm(f) => f.power,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            FittedModel::Glm(f) => f.converged,
            FittedModel::Hglm(f) => f.converged,
        }
    }

    /// Fitted mean for any cell of the square, observed or future.
    pub fn fitted_mean(&self, cell: CellIndex) -> f64 {
        match self {
            FittedModel::Glm(f) => f.fitted.get(cell),
            FittedModel::Hglm(f) => f.fitted.get(cell),
        }
    }

    /// Response dispersion estimate.
    pub fn dispersion(&self) -> f64 {
        match self {
            FittedModel::Glm(f) => f.dispersion,
            FittedModel::Hglm(f) => f.dispersion,
        }
    }

    /// Random-effect dispersion, when the model has one.
    pub fn dispersion_u(&self) -> Option<f64> {
        match self {
            FittedModel::Glm(_) => None,
            FittedModel::Hglm(f) => Some(f.dispersion_u),
        }
    }

    /// Pearson residuals over observed cells, origin-major.
    pub fn residuals(&self) -> &[(CellIndex, f64)] {
        match self {
            FittedModel::Glm(f) => &f.residuals,
            FittedModel::Hglm(f) => &f.residuals,
        }
    }

    /// Effective number of mean parameters charged to the data rows; used by
    /// the bootstrap's degrees-of-freedom residual inflation.
    pub fn data_leverage_total(&self) -> f64 {
        match self {
            // The GLM hat matrix over the data has trace equal to the full
            // parameter count.
            FittedModel::Glm(f) => (2 * f.n + 1) as f64,
            FittedModel::Hglm(f) => f.data_leverage(),
        }
    }
}
