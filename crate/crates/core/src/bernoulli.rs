//! The Bernoulli function `Q = ½|v|² + p` and the pointwise quantities of the
//! local energy identity
//!
//! ```text
//! ½ ∂_t |v|² + ν |ω|² = ν ΔQ − v·∇Q
//! ```
//!
//! `∂_t |v|²` is always evaluated from the momentum equation, never by
//! differencing snapshots.

use crate::error::FlowError;
use crate::field::{ScalarField, VectorField};
use crate::flow::{check_resolved, nonlinear_terms, FlowState};
use crate::spectral::{self, dealias_vector, laplacian, leray_project, vorticity_norm_sq_from_gradient};

/// Every field that enters the strip equality for one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliBundle {
    pub q: ScalarField,
    pub grad_q: VectorField,
    /// `|∇Q|`.
    pub grad_norm: ScalarField,
    /// `½ ∂_t |v|² = v · ∂_t v`.
    pub dt_kin: ScalarField,
    /// `|ω|²`.
    pub enstrophy_density: ScalarField,
    /// Zero-mean pressure used in `q`.
    pub pressure: ScalarField,
    pub q_min: f64,
    pub q_max: f64,
}

impl BernoulliBundle {
    /// `½ ∂_t|v|² + ν|ω|²`, the integrand of the strip volume term.
    pub fn energy_integrand(&self, nu: f64) -> ScalarField {
        self.dt_kin
            .zip_with(&self.enstrophy_density, |a, b| a + nu * b)
    }

    /// `∫ ½ ∂_t|v|² dx`, the instantaneous kinetic-energy rate.
    pub fn energy_rate(&self) -> f64 {
        self.dt_kin.integral()
    }

    /// `ν ∫ |ω|² dx`.
    pub fn dissipation(&self, nu: f64) -> f64 {
        nu * self.enstrophy_density.integral()
    }
}

/// Switches used by negative controls. The defaults give the physical bundle.
/// `∂_t v` is always the projected momentum right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleOptions {
    /// Include the pressure in `Q`.
    pub include_pressure: bool,
    /// Require a divergence-free, well-resolved velocity. When off, the
    /// pressure source has its mean removed so any velocity is accepted.
    pub enforce_solenoidal: bool,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            include_pressure: true,
            enforce_solenoidal: true,
        }
    }
}

/// Zero-mean pressure solving `Δp = −Σ ∂_j v_k ∂_k v_j` with a dealiased source.
pub fn compute_pressure(state: &FlowState) -> Result<ScalarField, FlowError> {
    if !state.velocity().is_divergence_free() {
        return Err(FlowError::NotDivergenceFree);
    }
    Ok(nonlinear_terms(state.velocity(), state.nu(), false)?.pressure)
}

pub fn compute_bundle(state: &FlowState) -> Result<BernoulliBundle, FlowError> {
    compute_bundle_with(state, BundleOptions::default())
}

pub fn compute_bundle_with(state: &FlowState, opts: BundleOptions) -> Result<BernoulliBundle, FlowError> {
    let v = state.velocity();
    let grid = v.grid();
    if opts.enforce_solenoidal {
        if !v.is_divergence_free() {
            return Err(FlowError::NotDivergenceFree);
        }
        check_resolved(v)?;
    }
    let terms = nonlinear_terms(v, state.nu(), !opts.enforce_solenoidal)?;
    let dvdt = leray_project(&terms.viscous.axpby(1.0, &terms.advection, -1.0));
    let pressure = if opts.include_pressure {
        terms.pressure
    } else {
        ScalarField::zeros(grid)
    };
    let factors = dealias_vector(v);
    let q = factors.norm_sq().scale(0.5).add(&pressure);
    let grad_q = spectral::gradient(&q);
    let grad_norm = grad_q.norm();
    let dt_kin = v.dot(&dvdt);
    let enstrophy_density = vorticity_norm_sq_from_gradient(&terms.gradient);
    let (q_min, q_max) = (q.min(), q.max());
    Ok(BernoulliBundle {
        q,
        grad_q,
        grad_norm,
        dt_kin,
        enstrophy_density,
        pressure,
        q_min,
        q_max,
    })
}

/// The four terms of the local energy identity and its residual
/// `νΔQ − v·∇Q − ½∂_t|v|² − ν|ω|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTerms {
    pub viscous_laplacian: ScalarField,
    pub advection: ScalarField,
    pub dt_kin: ScalarField,
    pub dissipation: ScalarField,
    pub residual: ScalarField,
}

impl IdentityTerms {
    /// Largest max-norm among the constituent terms.
    pub fn scale(&self) -> f64 {
        [
            &self.viscous_laplacian,
            &self.advection,
            &self.dt_kin,
            &self.dissipation,
        ]
        .iter()
        .map(|f| f.max_abs())
        .fold(0.0, f64::max)
    }

    /// `max|r| / scale`, or `0` when every term vanishes.
    pub fn relative_residual(&self) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            0.0
        } else {
            self.residual.max_abs() / s
        }
    }
}

pub fn identity_terms(state: &FlowState) -> Result<IdentityTerms, FlowError> {
    let bundle = compute_bundle(state)?;
    Ok(identity_terms_from_bundle(&bundle, state))
}

pub fn identity_terms_from_bundle(bundle: &BernoulliBundle, state: &FlowState) -> IdentityTerms {
    let nu = state.nu();
    let viscous_laplacian = laplacian(&bundle.q).scale(nu);
    let advection = state.velocity().dot(&bundle.grad_q);
    let dissipation = bundle.enstrophy_density.scale(nu);
    let residual = viscous_laplacian
        .sub(&advection)
        .sub(&bundle.dt_kin)
        .sub(&dissipation);
    IdentityTerms {
        viscous_laplacian,
        advection,
        dt_kin: bundle.dt_kin.clone(),
        dissipation,
        residual,
    }
}

/// Residual field of the local energy identity.
pub fn lemma21_residual(state: &FlowState) -> Result<ScalarField, FlowError> {
    Ok(identity_terms(state)?.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::flow::{init_abc_3d, init_random_solenoidal, init_taylor_green_2d};

    fn tg(n: usize, nu: f64) -> FlowState {
        let g = Grid::new(2, n).unwrap();
        FlowState::new(init_taylor_green_2d(g).unwrap(), nu, 0.0).unwrap()
    }

    #[test]
    fn rest_state_is_all_zero() {
        let g = Grid::new(2, 16).unwrap();
        let s = FlowState::new(VectorField::zeros(g), 0.1, 0.0).unwrap();
        assert_eq!(compute_pressure(&s).unwrap().max_abs(), 0.0);
        let b = compute_bundle(&s).unwrap();
        for f in [&b.q, &b.grad_norm, &b.dt_kin, &b.enstrophy_density] {
            assert_eq!(f.max_abs(), 0.0);
        }
        assert_eq!(lemma21_residual(&s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn taylor_green_pressure() {
        let s = tg(64, 0.0);
        let p = compute_pressure(&s).unwrap();
        // (v·∇)v = ½(sin 2x, sin 2y) = −∇p.
        let expect = ScalarField::from_fn(s.grid(), |x| 0.25 * ((2.0 * x[0]).cos() + (2.0 * x[1]).cos()));
        assert!(p.sub(&expect).max_abs() < 1e-11);
    }

    #[test]
    fn abc_pressure_is_minus_half_speed_squared() {
        let g = Grid::new(3, 16).unwrap();
        let s = FlowState::new(init_abc_3d(g, 1.0, 1.0, 1.0).unwrap(), 0.0, 0.0).unwrap();
        // Beltrami flow: (v·∇)v = ∇(|v|²/2), so p = −|v|²/2 up to its mean.
        // |v|² is not constant for A = B = C = 1, hence p is not zero either.
        let p = compute_pressure(&s).unwrap();
        let half_v2 = s.velocity().norm_sq().scale(0.5);
        let expect = half_v2.shift(-half_v2.mean()).scale(-1.0);
        assert!(p.sub(&expect).max_abs() < 1e-12);
    }

    #[test]
    fn taylor_green_bernoulli_function() {
        let s = tg(64, 0.01);
        let b = compute_bundle(&s).unwrap();
        let expect = ScalarField::from_fn(s.grid(), |x| 0.5 - (x[0].sin() * x[1].sin()).powi(2));
        assert!(b.q.sub(&expect).max_abs() < 1e-12);
        let half_v2 = s.velocity().norm_sq().scale(0.5);
        assert!(b.q.sub(&half_v2).mean().abs() < 1e-15);
        assert!((b.q.mean() - 0.25).abs() < 1e-14);
        assert!(b.q_min <= b.q.min() && b.q.max() <= b.q_max);
        assert!(b.grad_norm.min() >= 0.0);
    }

    #[test]
    fn steady_euler_has_no_kinetic_rate() {
        let b = compute_bundle(&tg(64, 0.0)).unwrap();
        assert!(b.dt_kin.max_abs() < 1e-11);
    }

    #[test]
    fn identity_holds_for_taylor_green() {
        let r = lemma21_residual(&tg(64, 0.01)).unwrap();
        assert!(r.max_abs() <= 1e-9);
    }

    #[test]
    fn identity_holds_for_random_3d() {
        let g = Grid::new(3, 32).unwrap();
        let s = FlowState::new(init_random_solenoidal(g, 3, 2, 1.0).unwrap(), 0.05, 0.0).unwrap();
        let terms = identity_terms(&s).unwrap();
        assert!(terms.residual.max_abs() <= 1e-7 * terms.viscous_laplacian.max_abs());
    }

    #[test]
    fn global_integrals() {
        let g = Grid::new(2, 64).unwrap();
        let s = FlowState::new(init_random_solenoidal(g, 9, 3, 1.0).unwrap(), 0.02, 0.0).unwrap();
        let b = compute_bundle(&s).unwrap();
        let diss = b.dissipation(s.nu());
        assert!((b.energy_rate() + diss).abs() <= 1e-8 * diss);
        let adv = s.velocity().dot(&b.grad_q).integral();
        assert!(adv.abs() < 1e-10);
        assert!(laplacian(&b.q).integral().abs() < 1e-10);
    }

    #[test]
    fn skipping_pressure_changes_q() {
        let s = tg(32, 0.01);
        let opts = BundleOptions {
            include_pressure: false,
            ..BundleOptions::default()
        };
        let b = compute_bundle_with(&s, opts).unwrap();
        let half_v2 = s.velocity().norm_sq().scale(0.5);
        assert!(b.q.sub(&half_v2).max_abs() < 1e-15);
        assert_eq!(b.pressure.max_abs(), 0.0);
    }

    #[test]
    fn non_solenoidal_states_need_the_unchecked_path() {
        let g = Grid::new(2, 32).unwrap();
        let v = VectorField::from_fn(g, |x| [x[0].sin() * x[1].cos() + 0.3 * x[0].sin(), -x[0].cos() * x[1].sin(), 0.0]);
        let s = FlowState::new_unchecked(v, 0.01, 0.0).unwrap();
        assert_eq!(compute_bundle(&s), Err(FlowError::NotDivergenceFree));
        let opts = BundleOptions {
            enforce_solenoidal: false,
            ..BundleOptions::default()
        };
        let b = compute_bundle_with(&s, opts).unwrap();
        assert!(b.pressure.mean().abs() < 1e-14);
    }
}
