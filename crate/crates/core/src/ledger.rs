//! Both sides of the strip energy equality
//!
//! ```text
//! ∫_{α<Q<β} (½∂_t|v|² + ν|ω|²) dx = ν ∮_{Q=β} |∇Q| dS − ν ∮_{Q=α} |∇Q| dS
//! ```
//!
//! together with level sweeps, the one-sided sign checks and convergence studies.
//!
//! Every volume term is a difference of superlevel integrals
//! `I(c) = ∫_{Q>c} (½∂_t|v|² + ν|ω|²) dx`, so strips are exactly additive.
//! A side whose level lies at or beyond the range of `Q` is degenerate: its
//! flux is zero and the region extends to the whole of that side.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernoulli::{compute_bundle, BernoulliBundle};
use crate::error::{LedgerError, LevelSetError};
use crate::field::{Grid, ScalarField};
use crate::flow::{FlowState, InitialCondition};
use crate::levelset::{extract_isosurface, guard_threshold, regularity_of, superlevel_integral, surface_integral, RegularityReport};

/// `Q` counts as constant when its range is below this fraction of `max ½|v|²`.
/// Every level of a constant `Q` is critical.
pub const FLAT_Q_TOLERANCE: f64 = 1e-10;

/// Denominator floor of [`LedgerEntry::relative_residual`].
pub const RELATIVE_FLOOR: f64 = 1e-14;

/// Allowed wrong-sign excess of a one-sided integral, relative to its flux.
pub const SIGN_TOLERANCE: f64 = 0.02;

/// Roundoff allowance of the sign checks, relative to [`rate_scale`].
const SIGN_ROUNDOFF: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetadata {
    pub dim: usize,
    pub n: usize,
    pub nu: f64,
    pub t: f64,
    pub initial_condition: String,
    pub seed: Option<u64>,
}

impl StateMetadata {
    pub fn of_state(state: &FlowState) -> Self {
        let g = state.grid();
        Self {
            dim: g.dim(),
            n: g.n(),
            nu: state.nu(),
            t: state.time(),
            initial_condition: "unknown".into(),
            seed: None,
        }
    }

    pub fn with_condition(mut self, ic: &InitialCondition) -> Self {
        self.initial_condition = ic.name().into();
        self.seed = ic.seed();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub alpha: f64,
    pub beta: f64,
    pub volume_term: f64,
    /// `ν ∮_{Q=β} |∇Q| dS`.
    pub beta_flux: f64,
    /// `ν ∮_{Q=α} |∇Q| dS`.
    pub alpha_flux: f64,
    /// `volume_term − (beta_flux − alpha_flux)`.
    pub residual: f64,
    pub relative_residual: f64,
    /// `volume_term − (alpha_flux − beta_flux)`, the reversed flux order.
    pub opposite_residual: f64,
    pub opposite_relative_residual: f64,
    pub alpha_degenerate: bool,
    pub beta_degenerate: bool,
    /// `None` on degenerate sides.
    pub alpha_regularity: Option<RegularityReport>,
    pub beta_regularity: Option<RegularityReport>,
}

impl LedgerEntry {
    fn from_terms(alpha: &LevelData, beta: &LevelData) -> Self {
        let volume_term = alpha.superlevel - beta.superlevel;
        let (alpha_flux, beta_flux) = (alpha.flux, beta.flux);
        let denom = volume_term.abs().max(alpha_flux + beta_flux).max(RELATIVE_FLOOR);
        let residual = volume_term - (beta_flux - alpha_flux);
        let opposite_residual = volume_term - (alpha_flux - beta_flux);
        Self {
            alpha: alpha.level,
            beta: beta.level,
            volume_term,
            beta_flux,
            alpha_flux,
            residual,
            relative_residual: residual.abs() / denom,
            opposite_residual,
            opposite_relative_residual: opposite_residual.abs() / denom,
            alpha_degenerate: alpha.report.is_none(),
            beta_degenerate: beta.report.is_none(),
            alpha_regularity: alpha.report,
            beta_regularity: beta.report,
        }
    }

    /// `|residual|` over the largest of `|volume_term|`, the flux sum and `floor`.
    /// With `floor = 0` this is [`LedgerEntry::relative_residual`].
    pub fn scaled_residual(&self, floor: f64) -> f64 {
        let denom = self
            .volume_term
            .abs()
            .max(self.alpha_flux + self.beta_flux)
            .max(floor)
            .max(RELATIVE_FLOOR);
        self.residual.abs() / denom
    }

    pub fn alpha_regular(&self) -> bool {
        self.alpha_regularity.is_none_or(|r| r.is_regular)
    }

    pub fn beta_regular(&self) -> bool {
        self.beta_regularity.is_none_or(|r| r.is_regular)
    }

    /// Both bounding levels are degenerate or pass the regularity guard.
    pub fn is_regular(&self) -> bool {
        self.alpha_regular() && self.beta_regular()
    }

    pub fn is_full_range(&self) -> bool {
        self.alpha_degenerate && self.beta_degenerate
    }

    pub fn is_one_sided(&self) -> bool {
        self.alpha_degenerate != self.beta_degenerate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerTable {
    pub metadata: StateMetadata,
    pub q_min: f64,
    pub q_max: f64,
    /// `∫ ½∂_t|v|² dx`.
    pub energy_rate: f64,
    /// `ν ∫ |ω|² dx`.
    pub dissipation: f64,
    pub entries: Vec<LedgerEntry>,
}

pub const CSV_HEADER: &str = "alpha,beta,volume_term,beta_flux,alpha_flux,residual,relative_residual,alpha_regular,beta_regular,min_grad_alpha,min_grad_beta";

impl LedgerTable {
    pub fn full_range(&self) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.is_full_range())
    }

    pub fn interior(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(|e| !e.alpha_degenerate && !e.beta_degenerate)
    }

    /// One row per entry; `min_grad_*` is empty on degenerate sides.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let min_grad = |r: &Option<RegularityReport>| r.map(|r| format!("{:e}", r.min_grad)).unwrap_or_default();
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
                e.alpha,
                e.beta,
                e.volume_term,
                e.beta_flux,
                e.alpha_flux,
                e.residual,
                e.relative_residual,
                e.alpha_regular(),
                e.beta_regular(),
                min_grad(&e.alpha_regularity),
                min_grad(&e.beta_regularity),
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

/// Superlevel integral, flux and regularity of one level.
#[derive(Debug, Clone, Copy)]
struct LevelData {
    level: f64,
    superlevel: f64,
    flux: f64,
    report: Option<RegularityReport>,
}

/// Shared read-only inputs for evaluating levels of one snapshot.
fn is_flat(bundle: &BernoulliBundle, state: &FlowState) -> bool {
    let kinetic = 0.5 * state.velocity().norm_sq().max();
    bundle.q_max - bundle.q_min <= FLAT_Q_TOLERANCE * kinetic
}

struct LevelEvaluator<'a> {
    bundle: &'a BernoulliBundle,
    nu: f64,
    integrand: ScalarField,
    threshold: f64,
    flat: bool,
}

impl<'a> LevelEvaluator<'a> {
    fn new(bundle: &'a BernoulliBundle, state: &FlowState) -> Result<Self, LedgerError> {
        if bundle.q.grid() != state.grid() {
            return Err(LevelSetError::GridMismatch.into());
        }
        Ok(Self {
            bundle,
            nu: state.nu(),
            integrand: bundle.energy_integrand(state.nu()),
            threshold: guard_threshold(&bundle.grad_norm),
            flat: is_flat(bundle, state),
        })
    }

    fn lower_bound(&self, level: f64) -> LevelData {
        LevelData {
            level,
            superlevel: self.integrand.integral(),
            flux: 0.0,
            report: None,
        }
    }

    fn upper_bound(&self, level: f64) -> LevelData {
        LevelData {
            level,
            superlevel: 0.0,
            flux: 0.0,
            report: None,
        }
    }

    fn critical(&self, level: f64) -> LevelData {
        let mid = 0.5 * (self.bundle.q_min + self.bundle.q_max);
        let mut data = if level < mid { self.lower_bound(level) } else { self.upper_bound(level) };
        data.report = Some(RegularityReport {
            level,
            min_grad: 0.0,
            median_grad: 0.0,
            guard_threshold: self.threshold,
            is_regular: false,
        });
        data
    }

    fn level(&self, c: f64) -> Result<LevelData, LedgerError> {
        if c <= self.bundle.q_min {
            return Ok(self.lower_bound(c));
        }
        if c >= self.bundle.q_max {
            return Ok(self.upper_bound(c));
        }
        if self.flat {
            return Ok(self.critical(c));
        }
        let superlevel = superlevel_integral(&self.integrand, &self.bundle.q, c)?;
        let iso = extract_isosurface(&self.bundle.q, c);
        let flux = if self.nu == 0.0 {
            0.0
        } else {
            self.nu * surface_integral(&iso, &self.bundle.grad_norm)?
        };
        Ok(LevelData {
            level: c,
            superlevel,
            flux,
            report: Some(regularity_of(&iso, &self.bundle.grad_norm, self.threshold)),
        })
    }

    fn levels(&self, levels: &[f64]) -> Result<Vec<LevelData>, LedgerError> {
        levels.par_iter().map(|&c| self.level(c)).collect()
    }
}

/// One ledger entry for the strip `{α < Q < β}`.
pub fn assemble_entry(bundle: &BernoulliBundle, state: &FlowState, alpha: f64, beta: f64) -> Result<LedgerEntry, LedgerError> {
    if !(alpha < beta) {
        return Err(LedgerError::InvalidStrip { alpha, beta });
    }
    let eval = LevelEvaluator::new(bundle, state)?;
    let (a, b) = rayon::join(|| eval.level(alpha), || eval.level(beta));
    Ok(LedgerEntry::from_terms(&a?, &b?))
}

/// Ledger for a sorted list of levels.
///
/// For each level strictly inside `(q_min, q_max)` the table holds both
/// one-sided strips `{Q < c}` and `{c < Q}`; adjacent levels contribute the
/// interior strip between them, and one full-range entry closes the table.
/// Levels outside the open range of `Q` are dropped.
pub fn sweep_levels(bundle: &BernoulliBundle, state: &FlowState, levels: &[f64]) -> Result<LedgerTable, LedgerError> {
    if levels.iter().any(|c| !c.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LevelSetError::UnsortedLevels.into());
    }
    let eval = LevelEvaluator::new(bundle, state)?;
    let inside: Vec<f64> = levels
        .iter()
        .copied()
        .filter(|&c| c > bundle.q_min && c < bundle.q_max)
        .collect();
    let data = eval.levels(&inside)?;
    let low = eval.lower_bound(bundle.q_min);
    let high = eval.upper_bound(bundle.q_max);

    let mut entries = Vec::with_capacity(3 * data.len() + 1);
    entries.push(LedgerEntry::from_terms(&low, &high));
    for d in &data {
        entries.push(LedgerEntry::from_terms(&low, d));
        entries.push(LedgerEntry::from_terms(d, &high));
    }
    for w in data.windows(2) {
        entries.push(LedgerEntry::from_terms(&w[0], &w[1]));
    }
    entries.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.beta.total_cmp(&b.beta)));

    Ok(LedgerTable {
        metadata: StateMetadata::of_state(state),
        q_min: bundle.q_min,
        q_max: bundle.q_max,
        energy_rate: bundle.energy_rate(),
        dissipation: bundle.dissipation(state.nu()),
        entries,
    })
}

/// Residual of the full-range entry, i.e. the global energy balance.
pub fn verify_global_limit(table: &LedgerTable) -> Result<f64, LedgerError> {
    table.full_range().map(|e| e.residual).ok_or(LedgerError::MissingFullRange)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    pub level: f64,
    /// `∫_{Q>c} (…) dx`, which must be `≤ 0`.
    pub upper_volume: f64,
    /// `∫_{Q<c} (…) dx`, which must be `≥ 0`.
    pub lower_volume: f64,
    /// `ν ∮_{Q=c} |∇Q| dS`.
    pub flux: f64,
    /// Part of `tolerance` that is a roundoff allowance rather than relative to `flux`.
    pub roundoff: f64,
    pub tolerance: f64,
    pub regular: bool,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

impl SignCheck {
    pub fn sign_ok(&self) -> bool {
        self.upper_ok && self.lower_ok
    }

    /// Wrong-sign excess beyond the roundoff allowance, relative to the flux.
    /// Zero when both signs are right; infinite for an excess at zero flux.
    pub fn excess(&self) -> f64 {
        let e = self.upper_volume.max(-self.lower_volume) - self.roundoff;
        if e <= 0.0 {
            0.0
        } else if self.flux > 0.0 {
            e / self.flux
        } else {
            f64::INFINITY
        }
    }
}

/// `∫ |v|² dx · max |ω|`, the magnitude of the energy rate at roundoff level.
pub fn rate_scale(bundle: &BernoulliBundle, state: &FlowState) -> f64 {
    state.velocity().norm_sq().integral() * bundle.enstrophy_density.max().max(0.0).sqrt()
}

/// Checks that superlevel integrals are nonpositive and sublevel integrals
/// nonnegative, up to [`SIGN_TOLERANCE`] of the level's flux.
pub fn verify_sign_constraints(bundle: &BernoulliBundle, state: &FlowState, levels: &[f64]) -> Result<Vec<SignCheck>, LedgerError> {
    verify_sign_constraints_with(bundle, state, levels, SIGN_TOLERANCE)
}

pub fn verify_sign_constraints_with(
    bundle: &BernoulliBundle,
    state: &FlowState,
    levels: &[f64],
    relative_tolerance: f64,
) -> Result<Vec<SignCheck>, LedgerError> {
    let eval = LevelEvaluator::new(bundle, state)?;
    let total = eval.integrand.integral();
    let roundoff = SIGN_ROUNDOFF * rate_scale(bundle, state);
    Ok(eval
        .levels(levels)?
        .into_iter()
        .map(|d| {
            let upper_volume = d.superlevel;
            let lower_volume = total - d.superlevel;
            let tolerance = relative_tolerance * d.flux + roundoff;
            SignCheck {
                level: d.level,
                upper_volume,
                lower_volume,
                flux: d.flux,
                roundoff,
                tolerance,
                regular: d.report.is_none_or(|r| r.is_regular),
                upper_ok: upper_volume <= tolerance,
                lower_ok: lower_volume >= -tolerance,
            }
        })
        .collect())
}

/// Levels of `q` at the given quantiles of its grid samples, interpolating
/// linearly between order statistics.
pub fn quantile_levels(q: &ScalarField, quantiles: &[f64]) -> Result<Vec<f64>, LedgerError> {
    if let Some(&p) = quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(LedgerError::InvalidQuantile(p));
    }
    let mut v = q.values().to_vec();
    v.sort_by(f64::total_cmp);
    let last = (v.len() - 1) as f64;
    Ok(quantiles
        .iter()
        .map(|&p| {
            let pos = p * last;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            match v.get(i + 1) {
                Some(&next) => v[i] + frac * (next - v[i]),
                None => v[i],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    /// Every residual vanishes; there is nothing to fit.
    Exact,
    /// A bounding level failed the regularity guard at some resolution.
    ExcludedByGuard,
    Fitted,
}

impl ConvergenceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::ExcludedByGuard => "excluded_by_guard",
            Self::Fitted => "fitted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub entry: LedgerEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub initial_condition: InitialCondition,
    pub dim: usize,
    pub nu: f64,
    pub quantiles: (f64, f64),
    /// Absolute levels, fixed from the coarsest resolution.
    pub levels: (f64, f64),
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `−log(relative_residual)` against `log n`.
    pub order: Option<f64>,
    pub monotone: bool,
    pub status: ConvergenceStatus,
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Strip residual of one initial condition across doubling resolutions.
pub fn convergence_study(
    ic: &InitialCondition,
    dim: usize,
    nu: f64,
    quantiles: (f64, f64),
    resolutions: &[usize],
) -> Result<ConvergenceReport, LedgerError> {
    if resolutions.len() < 3 || resolutions.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(LedgerError::InvalidResolutions);
    }
    let mut levels = None;
    let mut rows = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let grid = Grid::new(dim, n).map_err(crate::error::FlowError::from)?;
        let state = ic.state(grid, nu)?;
        let bundle = compute_bundle(&state)?;
        let (alpha, beta) = match levels {
            Some(l) => l,
            None => {
                let l = quantile_levels(&bundle.q, &[quantiles.0, quantiles.1])?;
                *levels.insert((l[0], l[1]))
            }
        };
        let entry = if alpha < beta {
            assemble_entry(&bundle, &state, alpha, beta)?
        } else {
            // A constant `Q` collapses the strip; the full range stands in.
            sweep_levels(&bundle, &state, &[])?.entries.remove(0)
        };
        rows.push(ConvergenceRow { n, entry });
    }
    let levels = levels.unwrap_or_default();
    let rr: Vec<f64> = rows.iter().map(|r| r.entry.relative_residual).collect();
    let monotone = rr.windows(2).all(|w| w[1] < w[0]);
    let (status, order) = if rows.iter().all(|r| r.entry.residual == 0.0) {
        (ConvergenceStatus::Exact, None)
    } else if rows.iter().any(|r| !r.entry.is_regular()) {
        (ConvergenceStatus::ExcludedByGuard, None)
    } else {
        let x: Vec<f64> = resolutions.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = rr.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).collect();
        (ConvergenceStatus::Fitted, Some(-fitted_slope(&x, &y)))
    };
    Ok(ConvergenceReport {
        initial_condition: ic.clone(),
        dim,
        nu,
        quantiles,
        levels,
        rows,
        order,
        monotone,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use crate::flow::{init_random_solenoidal, init_taylor_green_2d};

    fn tg(n: usize, nu: f64) -> FlowState {
        let g = Grid::new(2, n).unwrap();
        FlowState::new(init_taylor_green_2d(g).unwrap(), nu, 0.0).unwrap()
    }

    fn random_2d(n: usize, nu: f64) -> FlowState {
        let g = Grid::new(2, n).unwrap();
        FlowState::new(init_random_solenoidal(g, 5, 2, 1.0).unwrap(), nu, 0.0).unwrap()
    }

    #[test]
    fn rest_state_ledger_is_zero() {
        let g = Grid::new(2, 16).unwrap();
        let s = FlowState::new(VectorField::zeros(g), 0.1, 0.0).unwrap();
        let b = compute_bundle(&s).unwrap();
        let e = assemble_entry(&b, &s, -1.0, 1.0).unwrap();
        assert_eq!((e.volume_term, e.beta_flux, e.alpha_flux, e.residual), (0.0, 0.0, 0.0, 0.0));
        let t = sweep_levels(&b, &s, &[-0.5, 0.5]).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(verify_global_limit(&t).unwrap(), 0.0);
        assert!(verify_sign_constraints(&b, &s, &[0.0]).unwrap()[0].sign_ok());
    }

    #[test]
    fn constant_bernoulli_function_has_only_critical_levels() {
        let g = Grid::new(3, 16).unwrap();
        let v = InitialCondition::Abc { a: 1.0, b: 1.0, c: 1.0 }.velocity(g).unwrap();
        let s = FlowState::new(v, 0.05, 0.0).unwrap();
        let b = compute_bundle(&s).unwrap();
        let levels = quantile_levels(&b.q, &[0.25, 0.5, 0.75]).unwrap();
        let t = sweep_levels(&b, &s, &levels).unwrap();
        assert!(t.interior().all(|e| !e.is_regular() && e.beta_flux == 0.0 && e.alpha_flux == 0.0));
        assert!(t.full_range().unwrap().is_regular());
        assert!(verify_global_limit(&t).unwrap() < 1e-10);
    }

    #[test]
    fn steady_euler_is_all_zero() {
        let s = tg(64, 0.0);
        let b = compute_bundle(&s).unwrap();
        let e = assemble_entry(&b, &s, -0.2, 0.2).unwrap();
        assert_eq!((e.beta_flux, e.alpha_flux), (0.0, 0.0));
        assert!(e.volume_term.abs() < 1e-10);
        for c in verify_sign_constraints(&b, &s, &[-0.3, 0.0, 0.3]).unwrap() {
            assert!(c.sign_ok());
            assert!(c.upper_volume.abs() < 1e-10 && c.lower_volume.abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_strip_is_rejected() {
        let s = tg(16, 0.01);
        let b = compute_bundle(&s).unwrap();
        assert_eq!(assemble_entry(&b, &s, 0.2, 0.2), Err(LedgerError::InvalidStrip { alpha: 0.2, beta: 0.2 }));
        assert!(assemble_entry(&b, &s, 0.3, 0.1).is_err());
        assert!(sweep_levels(&b, &s, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn degenerate_sides() {
        let s = tg(64, 0.01);
        let b = compute_bundle(&s).unwrap();
        let lower = assemble_entry(&b, &s, b.q_min - 1.0, 0.0).unwrap();
        assert!(lower.alpha_degenerate && !lower.beta_degenerate);
        assert_eq!(lower.alpha_flux, 0.0);
        assert!(lower.volume_term > 0.0);
        let upper = assemble_entry(&b, &s, 0.0, b.q_max).unwrap();
        assert!(upper.beta_degenerate && upper.beta_regular());
        assert_eq!(upper.beta_flux, 0.0);
        assert!(upper.volume_term < 0.0);
    }

    #[test]
    fn sweep_layout_and_telescoping() {
        let s = random_2d(64, 0.02);
        let b = compute_bundle(&s).unwrap();
        let levels = quantile_levels(&b.q, &[0.25, 0.5, 0.75]).unwrap();
        let t = sweep_levels(&b, &s, &levels).unwrap();
        assert_eq!(t.entries.len(), 2 * 3 + 2 + 1);
        assert_eq!(t.entries.iter().filter(|e| e.is_one_sided()).count(), 6);
        assert!(t.entries.windows(2).all(|w| (w[0].alpha, w[0].beta) <= (w[1].alpha, w[1].beta)));
        let full = t.full_range().unwrap().volume_term;
        let first = t.entries.iter().find(|e| e.alpha_degenerate && e.beta == levels[0]).unwrap();
        let last = t.entries.iter().find(|e| e.beta_degenerate && e.alpha == levels[2]).unwrap();
        let sum = first.volume_term + t.interior().map(|e| e.volume_term).sum::<f64>() + last.volume_term;
        assert!((sum - full).abs() <= 1e-10 * t.dissipation);
        assert!(verify_global_limit(&t).unwrap().abs() <= 1e-8 * t.dissipation);
    }

    #[test]
    fn single_level_sides_sum_to_global() {
        let s = tg(64, 0.01);
        let b = compute_bundle(&s).unwrap();
        let t = sweep_levels(&b, &s, &[0.1]).unwrap();
        assert_eq!(t.entries.len(), 3);
        let sides: f64 = t.entries.iter().filter(|e| e.is_one_sided()).map(|e| e.volume_term).sum();
        assert!(sides.abs() <= 1e-8 * t.dissipation);
    }

    #[test]
    fn empty_levels_give_full_range_only() {
        let s = tg(32, 0.01);
        let t = sweep_levels(&compute_bundle(&s).unwrap(), &s, &[]).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert!(t.entries[0].is_full_range());
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert!(csv.lines().nth(1).unwrap().ends_with("true,true,,"));
    }

    #[test]
    fn missing_full_range() {
        let s = tg(32, 0.01);
        let mut t = sweep_levels(&compute_bundle(&s).unwrap(), &s, &[0.0]).unwrap();
        t.entries.retain(|e| !e.is_full_range());
        assert_eq!(verify_global_limit(&t), Err(LedgerError::MissingFullRange));
    }

    #[test]
    fn taylor_green_strip_balances() {
        let s = tg(128, 0.01);
        let b = compute_bundle(&s).unwrap();
        let l = quantile_levels(&b.q, &[0.3, 0.7]).unwrap();
        let e = assemble_entry(&b, &s, l[0], l[1]).unwrap();
        assert!(e.is_regular());
        assert!(e.relative_residual < 0.05, "{e:?}");
        assert!(e.relative_residual < e.opposite_relative_residual);
    }

    #[test]
    fn viscous_signs_hold() {
        let s = tg(128, 0.01);
        let b = compute_bundle(&s).unwrap();
        let levels = quantile_levels(&b.q, &[0.2, 0.5, 0.8]).unwrap();
        for c in verify_sign_constraints(&b, &s, &levels).unwrap() {
            assert!(c.regular && c.sign_ok(), "{c:?}");
            assert!(c.flux > 0.0);
            assert_eq!(c.excess(), 0.0);
        }
        let top = verify_sign_constraints(&b, &s, &[b.q_max]).unwrap();
        assert!(top[0].sign_ok() && top[0].flux == 0.0);
    }

    #[test]
    fn scaling_covariance() {
        let s = random_2d(64, 0.02);
        let lambda = 1.7;
        let r = s.rescaled(lambda).unwrap();
        let (b, br) = (compute_bundle(&s).unwrap(), compute_bundle(&r).unwrap());
        let l = quantile_levels(&b.q, &[0.3, 0.6]).unwrap();
        let e = assemble_entry(&b, &s, l[0], l[1]).unwrap();
        let l2 = lambda * lambda;
        let er = assemble_entry(&br, &r, l[0] * l2, l[1] * l2).unwrap();
        let l3 = lambda.powi(3);
        for (x, y) in [(e.volume_term, er.volume_term), (e.beta_flux, er.beta_flux), (e.alpha_flux, er.alpha_flux)] {
            assert!((x * l3 - y).abs() <= 1e-9 * y.abs());
        }
        assert!((e.relative_residual - er.relative_residual).abs() <= 1e-10);
    }

    #[test]
    fn quantiles() {
        let g = Grid::new(2, 8).unwrap();
        let q = ScalarField::from_fn(g, |x| x[0]);
        let l = quantile_levels(&q, &[0.0, 1.0]).unwrap();
        assert_eq!(l, vec![q.min(), q.max()]);
        assert_eq!(quantile_levels(&q, &[1.5]), Err(LedgerError::InvalidQuantile(1.5)));
    }

    #[test]
    fn convergence_needs_doubling_resolutions() {
        let ic = InitialCondition::TaylorGreen;
        assert_eq!(convergence_study(&ic, 2, 0.01, (0.3, 0.7), &[32, 64]), Err(LedgerError::InvalidResolutions));
        assert_eq!(convergence_study(&ic, 2, 0.01, (0.3, 0.7), &[32, 48, 96]), Err(LedgerError::InvalidResolutions));
    }

    #[test]
    fn rest_state_converges_exactly() {
        let r = convergence_study(&InitialCondition::Zero, 2, 0.1, (0.3, 0.7), &[16, 32, 64]).unwrap();
        assert_eq!(r.status, ConvergenceStatus::Exact);
        assert_eq!(r.order, None);
        assert!(r.rows.iter().all(|r| r.entry.residual == 0.0));
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 3.0];
        assert!((fitted_slope(&x, &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }
}
