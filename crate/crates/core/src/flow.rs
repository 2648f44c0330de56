//! Smooth solutions of the incompressible Navier–Stokes / Euler system on
//! the torus: right-hand side, RK4 stepping and initial conditions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::FlowError;
use crate::field::{Grid, ScalarField, VectorField};
use crate::spectral::{
    self, dealias, leray_project, solve_poisson, SpectralDiagnostics, Spectrum,
};

/// Largest admissible `dt · max|v| / h`.
pub const CFL_LIMIT: f64 = 0.5;

/// Velocity, viscosity and time of a flow snapshot. `nu = 0` is Euler.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    v: VectorField,
    nu: f64,
    t: f64,
}

impl FlowState {
    pub fn new(v: VectorField, nu: f64, t: f64) -> Result<Self, FlowError> {
        if !v.is_divergence_free() {
            return Err(FlowError::NotDivergenceFree);
        }
        Self::new_unchecked(v, nu, t)
    }

    /// Skips the divergence-free requirement. Only diagnostics and negative
    /// controls should build states this way.
    pub fn new_unchecked(v: VectorField, nu: f64, t: f64) -> Result<Self, FlowError> {
        if !nu.is_finite() || nu < 0.0 {
            return Err(FlowError::InvalidViscosity(nu));
        }
        Ok(Self { v, nu, t })
    }

    pub fn velocity(&self) -> &VectorField {
        &self.v
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> Grid {
        self.v.grid()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.v.kinetic_energy()
    }

    /// `∫ |ω|² dx`.
    pub fn enstrophy(&self) -> f64 {
        spectral::vorticity_norm_sq(&self.v).integral()
    }

    /// Same state with velocity scaled by `lambda` and viscosity by `lambda`.
    pub fn rescaled(&self, lambda: f64) -> Result<Self, FlowError> {
        Self::new(self.v.scale(lambda), self.nu * lambda.abs(), self.t / lambda.abs())
    }

    pub fn diagnostics(&self) -> SpectralDiagnostics {
        SpectralDiagnostics::of_vector(&self.v)
    }
}

/// Time derivative of the velocity together with the normalized pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsResult {
    pub dvdt: VectorField,
    /// Zero-mean pressure.
    pub p: ScalarField,
}

/// Dealiased advection `(v·∇)v` and the pressure it induces.
pub(crate) struct Nonlinear {
    pub advection: VectorField,
    pub pressure: ScalarField,
    pub viscous: VectorField,
    pub gradient: Vec<Vec<ScalarField>>,
}

pub(crate) fn check_resolved(v: &VectorField) -> Result<(), FlowError> {
    let diag = SpectralDiagnostics::of_vector(v);
    if diag.is_well_resolved() {
        Ok(())
    } else {
        Err(FlowError::UnresolvedField {
            fraction: diag.max_wavenumber_energy_fraction,
            threshold: spectral::RESOLUTION_THRESHOLD,
        })
    }
}

/// Pressure source `−Σ ∂_j v_k ∂_k v_j`, dealiased.
pub(crate) fn pressure_source(gradient: &[Vec<ScalarField>]) -> ScalarField {
    let dim = gradient.len();
    let grid = gradient[0][0].grid();
    let mut acc = vec![0.0; grid.len()];
    for j in 0..dim {
        for k in 0..dim {
            let a = gradient[j][k].values();
            let b = gradient[k][j].values();
            for ((o, &x), &y) in acc.iter_mut().zip(a).zip(b) {
                *o -= x * y;
            }
        }
    }
    dealias(&ScalarField::from_finite(grid, acc))
}

pub(crate) fn nonlinear_terms(v: &VectorField, nu: f64, remove_source_mean: bool) -> Result<Nonlinear, FlowError> {
    let grid = v.grid();
    let dim = grid.dim();
    let spectra: Vec<Spectrum> = v.components().iter().map(ScalarField::to_spectral).collect();
    let gradient: Vec<Vec<ScalarField>> = (0..dim)
        .map(|j| (0..dim).map(|k| spectra[k].derivative(j).to_physical()).collect())
        .collect();
    let advection = (0..dim)
        .map(|k| {
            let mut acc = vec![0.0; grid.len()];
            for j in 0..dim {
                for ((o, &vj), &d) in acc.iter_mut().zip(v.component(j).values()).zip(gradient[j][k].values()) {
                    *o += vj * d;
                }
            }
            dealias(&ScalarField::from_finite(grid, acc))
        })
        .collect();
    let advection = VectorField::from_parts(advection, false);
    let mut source = pressure_source(&gradient);
    if remove_source_mean {
        source = source.shift(-source.mean());
    }
    let pressure = solve_poisson(&source)?;
    let viscous = VectorField::from_parts(
        spectra.iter().map(|s| s.laplacian().to_physical().scale(nu)).collect(),
        v.is_divergence_free(),
    );
    Ok(Nonlinear {
        advection,
        pressure,
        viscous,
        gradient,
    })
}

/// `∂_t v = νΔv − P[(v·∇)v]` with the pressure from its Poisson equation.
pub fn ns_rhs(state: &FlowState) -> Result<RhsResult, FlowError> {
    check_resolved(&state.v)?;
    let terms = nonlinear_terms(&state.v, state.nu, false)?;
    let dvdt = leray_project(&terms.viscous.axpby(1.0, &terms.advection, -1.0));
    Ok(RhsResult {
        dvdt,
        p: terms.pressure,
    })
}

/// Same right-hand side in explicit pressure-gradient form,
/// `νΔv − (v·∇)v − ∇p`, without a projection.
pub fn ns_rhs_pressure_form(state: &FlowState) -> Result<RhsResult, FlowError> {
    check_resolved(&state.v)?;
    let terms = nonlinear_terms(&state.v, state.nu, false)?;
    let grad_p = spectral::gradient(&terms.pressure);
    let dvdt = terms
        .viscous
        .axpby(1.0, &terms.advection, -1.0)
        .axpby(1.0, &grad_p, -1.0)
        .unflagged();
    Ok(RhsResult {
        dvdt,
        p: terms.pressure,
    })
}

pub fn cfl_number(v: &VectorField, dt: f64) -> f64 {
    dt * v.max_norm() / v.grid().spacing()
}

/// One classical RK4 step; the result is re-projected onto solenoidal fields.
pub fn step_rk4(state: &FlowState, dt: f64) -> Result<FlowState, FlowError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(FlowError::InvalidTimeStep(dt));
    }
    let cfl = cfl_number(&state.v, dt);
    if cfl > CFL_LIMIT {
        return Err(FlowError::CflViolation {
            cfl,
            limit: CFL_LIMIT,
        });
    }
    let stage = |v: VectorField| -> Result<VectorField, FlowError> {
        let s = FlowState {
            v,
            nu: state.nu,
            t: state.t,
        };
        Ok(ns_rhs(&s)?.dvdt)
    };
    let k1 = stage(state.v.clone())?;
    let k2 = stage(state.v.axpby(1.0, &k1, 0.5 * dt))?;
    let k3 = stage(state.v.axpby(1.0, &k2, 0.5 * dt))?;
    let k4 = stage(state.v.axpby(1.0, &k3, dt))?;
    let incr = k1
        .axpby(1.0, &k2, 2.0)
        .axpby(1.0, &k3, 2.0)
        .axpby(1.0, &k4, 1.0);
    let v = leray_project(&state.v.axpby(1.0, &incr, dt / 6.0));
    Ok(FlowState {
        v,
        nu: state.nu,
        t: state.t + dt,
    })
}

/// Advances `n_steps` fixed steps, returning the final state.
pub fn integrate(state: &FlowState, dt: f64, n_steps: usize) -> Result<FlowState, FlowError> {
    let mut s = state.clone();
    for _ in 0..n_steps {
        s = step_rk4(&s, dt)?;
    }
    Ok(s)
}

/// Initial conditions with the parameters needed to rebuild them at any resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    TaylorGreen,
    Abc { a: f64, b: f64, c: f64 },
    Random { seed: u64, peak_wavenumber: u32, amplitude: f64 },
}

impl InitialCondition {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::TaylorGreen => "taylor_green",
            Self::Abc { .. } => "abc",
            Self::Random { .. } => "random",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Random { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn velocity(&self, grid: Grid) -> Result<VectorField, FlowError> {
        match *self {
            Self::Zero => Ok(VectorField::zeros(grid)),
            Self::TaylorGreen => init_taylor_green_2d(grid),
            Self::Abc { a, b, c } => init_abc_3d(grid, a, b, c),
            Self::Random {
                seed,
                peak_wavenumber,
                amplitude,
            } => init_random_solenoidal(grid, seed, peak_wavenumber, amplitude),
        }
    }

    pub fn state(&self, grid: Grid, nu: f64) -> Result<FlowState, FlowError> {
        FlowState::new(self.velocity(grid)?, nu, 0.0)
    }
}

/// `v = (sin x cos y, −cos x sin y)`.
pub fn init_taylor_green_2d(grid: Grid) -> Result<VectorField, FlowError> {
    taylor_green_2d_exact(grid, 0.0, 0.0)
}

/// Closed-form viscous Taylor–Green solution, decaying as `e^{−2νt}`.
pub fn taylor_green_2d_exact(grid: Grid, nu: f64, t: f64) -> Result<VectorField, FlowError> {
    if grid.dim() != 2 {
        return Err(FlowError::InvalidInitialCondition(
            "Taylor-Green vortex is two-dimensional".into(),
        ));
    }
    let decay = (-2.0 * nu * t).exp();
    let v = VectorField::from_fn(grid, |x| {
        [
            decay * x[0].sin() * x[1].cos(),
            -decay * x[0].cos() * x[1].sin(),
            0.0,
        ]
    });
    Ok(v.mark_divergence_free()?)
}

/// Arnold–Beltrami–Childress flow.
pub fn init_abc_3d(grid: Grid, a: f64, b: f64, c: f64) -> Result<VectorField, FlowError> {
    if grid.dim() != 3 {
        return Err(FlowError::InvalidInitialCondition("ABC flow is three-dimensional".into()));
    }
    let v = VectorField::from_fn(grid, |x| {
        [
            a * x[2].sin() + c * x[1].cos(),
            b * x[0].sin() + a * x[2].cos(),
            c * x[1].sin() + b * x[0].cos(),
        ]
    });
    Ok(v.mark_divergence_free()?)
}

/// Leray-projected random field with a shell spectrum
/// `E(k) ∝ (k/k_p)^4 exp(−2 (k/k_p)²)` truncated at `|k| ≤ 2 k_p`.
///
/// Coefficients are drawn in a fixed wavevector order, so the same seed gives
/// the same continuous field at every resolution that can represent it.
/// `amplitude` is the RMS speed.
pub fn init_random_solenoidal(
    grid: Grid,
    seed: u64,
    peak_wavenumber: u32,
    amplitude: f64,
) -> Result<VectorField, FlowError> {
    if peak_wavenumber == 0 {
        return Err(FlowError::InvalidInitialCondition("peak wavenumber must be positive".into()));
    }
    if !amplitude.is_finite() || amplitude < 0.0 {
        return Err(FlowError::InvalidInitialCondition(format!("invalid amplitude {amplitude}")));
    }
    let kp = peak_wavenumber as f64;
    let kmax = 2 * peak_wavenumber as i64;
    if kmax >= (grid.n() / 2) as i64 {
        return Err(FlowError::InvalidInitialCondition(format!(
            "band limit {kmax} not representable at resolution {}",
            grid.n()
        )));
    }
    let dim = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![vec![Complex64::default(); grid.len()]; dim];
    let kz = if dim == 3 { kmax } else { 0 };
    for kx in -kmax..=kmax {
        for ky in -kmax..=kmax {
            for kzz in -kz..=kz {
                let k = [kx, ky, kzz];
                let kmag = ((kx * kx + ky * ky + kzz * kzz) as f64).sqrt();
                let draws: Vec<(f64, f64)> = (0..dim)
                    .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                if kmag == 0.0 || kmag > kmax as f64 {
                    continue;
                }
                let r = kmag / kp;
                let shell = r.powi(4) * (-2.0 * r * r).exp();
                let amp = (shell / kmag.powi(dim as i32 - 1)).sqrt();
                let idx = grid.index_wrapped(k);
                for (axis, (re, im)) in draws.into_iter().enumerate() {
                    coeffs[axis][idx] = Complex64::new(re, im) * amp;
                }
            }
        }
    }
    let comps = coeffs
        .into_iter()
        .map(|c| Spectrum::from_coefficients(grid, c).map(|s| s.to_physical()))
        .collect::<Result<Vec<_>, _>>()?;
    let v = leray_project(&VectorField::from_parts(comps, false));
    let rms = (v.norm_sq().mean()).sqrt();
    if rms == 0.0 {
        return Ok(v);
    }
    Ok(v.scale(amplitude / rms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tg_state(n: usize, nu: f64) -> FlowState {
        let g = Grid::new(2, n).unwrap();
        FlowState::new(init_taylor_green_2d(g).unwrap(), nu, 0.0).unwrap()
    }

    fn max_vec_diff(a: &VectorField, b: &VectorField) -> f64 {
        a.axpby(1.0, b, -1.0).max_abs()
    }

    #[test]
    fn state_validation() {
        let g = Grid::new(2, 16).unwrap();
        let raw = VectorField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]);
        assert_eq!(FlowState::new(raw.clone(), 0.1, 0.0), Err(FlowError::NotDivergenceFree));
        assert!(FlowState::new_unchecked(raw, -1.0, 0.0).is_err());
        assert!(raw_is_rejected_by_marking(g));
    }

    fn raw_is_rejected_by_marking(g: Grid) -> bool {
        VectorField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0])
            .mark_divergence_free()
            .is_err()
    }

    #[test]
    fn rhs_of_rest_is_zero() {
        let g = Grid::new(3, 16).unwrap();
        let s = FlowState::new(VectorField::zeros(g), 0.1, 0.0).unwrap();
        let r = ns_rhs(&s).unwrap();
        assert_eq!(r.dvdt.max_abs(), 0.0);
        assert_eq!(r.p.max_abs(), 0.0);
    }

    #[test]
    fn euler_taylor_green_is_steady() {
        let r = ns_rhs(&tg_state(32, 0.0)).unwrap();
        assert!(r.dvdt.max_abs() < 1e-13);
    }

    #[test]
    fn viscous_taylor_green_rhs() {
        let nu = 0.01;
        let s = tg_state(64, nu);
        let r = ns_rhs(&s).unwrap();
        let expect = s.velocity().scale(-2.0 * nu);
        assert!(max_vec_diff(&r.dvdt, &expect) < 1e-10);
        assert!(r.p.mean().abs() < 1e-15);
        assert!(r.dvdt.is_divergence_free());
    }

    #[test]
    fn projection_and_pressure_forms_agree() {
        for (dim, n) in [(2, 64), (3, 32)] {
            let g = Grid::new(dim, n).unwrap();
            let v = init_random_solenoidal(g, 42, 2, 1.0).unwrap();
            let s = FlowState::new(v, 0.05, 0.0).unwrap();
            let a = ns_rhs(&s).unwrap();
            let b = ns_rhs_pressure_form(&s).unwrap();
            assert!(max_vec_diff(&a.dvdt, &b.dvdt) < 1e-10 * a.dvdt.max_abs().max(1.0));
        }
    }

    #[test]
    fn under_resolved_fields_are_rejected() {
        let g = Grid::new(2, 16).unwrap();
        let v = VectorField::from_fn(g, |x| [(7.0 * x[1]).sin(), (7.0 * x[0]).sin(), 0.0])
            .mark_divergence_free()
            .unwrap();
        let s = FlowState::new(v, 0.1, 0.0).unwrap();
        assert!(matches!(ns_rhs(&s), Err(FlowError::UnresolvedField { .. })));
    }

    #[test]
    fn rk4_keeps_rest_at_rest() {
        let g = Grid::new(2, 16).unwrap();
        let s = FlowState::new(VectorField::zeros(g), 0.1, 0.0).unwrap();
        let out = integrate(&s, 0.01, 10).unwrap();
        assert_eq!(out.velocity().max_abs(), 0.0);
        assert!((out.time() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rk4_single_step_matches_decay() {
        let nu = 0.01;
        let dt = 1e-3;
        let s = tg_state(64, nu);
        let out = step_rk4(&s, dt).unwrap();
        let exact = taylor_green_2d_exact(s.grid(), nu, dt).unwrap();
        // Local RK4 error ~ (2ν dt)^5 / 120.
        assert!(max_vec_diff(out.velocity(), &exact) < 1e-14);
    }

    #[test]
    fn steady_euler_taylor_green_over_100_steps() {
        let s = tg_state(32, 0.0);
        let out = integrate(&s, 1e-3, 100).unwrap();
        assert!(max_vec_diff(out.velocity(), s.velocity()) < 1e-12);
    }

    #[test]
    fn cfl_and_dt_guards() {
        let s = tg_state(32, 0.0);
        let h = 2.0 * PI / 32.0;
        assert!(matches!(step_rk4(&s, h), Err(FlowError::CflViolation { .. })));
        assert!(matches!(step_rk4(&s, 0.0), Err(FlowError::InvalidTimeStep(_))));
        assert!(matches!(step_rk4(&s, f64::NAN), Err(FlowError::InvalidTimeStep(_))));
        assert!(step_rk4(&s, 0.49 * h).is_ok());
    }

    #[test]
    fn taylor_green_energy_is_pi_squared() {
        let s = tg_state(32, 0.0);
        assert!((s.kinetic_energy() - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn abc_is_solenoidal() {
        let g = Grid::new(3, 16).unwrap();
        let v = init_abc_3d(g, 1.0, 1.0, 1.0).unwrap();
        assert!(spectral::divergence(&v).max_abs() < 1e-13);
        assert!(init_abc_3d(Grid::new(2, 16).unwrap(), 1.0, 1.0, 1.0).is_err());
        assert!(init_taylor_green_2d(g).is_err());
    }

    #[test]
    fn random_field_is_deterministic_and_resolution_independent() {
        let g = Grid::new(2, 32).unwrap();
        let a = init_random_solenoidal(g, 7, 3, 0.5).unwrap();
        let b = init_random_solenoidal(g, 7, 3, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_random_solenoidal(g, 8, 3, 0.5).unwrap());
        assert!(a.is_divergence_free());
        assert!(spectral::divergence(&a).max_abs() < 1e-13);
        let rms = a.norm_sq().mean().sqrt();
        assert!((rms - 0.5).abs() < 1e-12);
        // Same continuous field at a finer resolution.
        let fine = init_random_solenoidal(Grid::new(2, 64).unwrap(), 7, 3, 0.5).unwrap();
        for &p in &[[0.3, 1.7, 0.0], [4.0, 5.5, 0.0]] {
            let idx_c = g.index([(p[0] / g.spacing()) as usize, (p[1] / g.spacing()) as usize, 0]);
            let x = g.point(idx_c);
            let fi = fine.interpolate(x);
            let co = a.interpolate(x);
            assert!((fi[0] - co[0]).abs() < 1e-12 && (fi[1] - co[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_field_rejects_unrepresentable_band() {
        let g = Grid::new(2, 16).unwrap();
        assert!(init_random_solenoidal(g, 1, 4, 1.0).is_err());
        assert!(init_random_solenoidal(g, 1, 0, 1.0).is_err());
    }
}
