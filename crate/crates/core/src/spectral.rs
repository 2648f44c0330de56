//! Fourier representation of periodic fields and the exact spectral
//! operators built on it.
//!
//! Coefficients are normalized so that `f(x) = Σ_k c_k e^{i k·x}`. Odd
//! derivatives drop the Nyquist bin along the differentiated axis so real
//! fields stay real; the Laplacian keeps it.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::field::{Grid, ScalarField, VectorField};

/// Relative max-norm bound on the divergence of a field flagged solenoidal.
pub const SOLENOIDAL_TOLERANCE: f64 = 1e-10;

/// Relative bound on the mean of a Poisson right-hand side.
pub const POISSON_MEAN_TOLERANCE: f64 = 1e-10;

/// Energy fraction above half the dealiasing cutoff tolerated by a "well resolved" field.
pub const RESOLUTION_THRESHOLD: f64 = 1e-8;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// In-place unnormalized multi-dimensional FFT over a row-major buffer.
fn fft_nd(grid: Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let dim = grid.dim();
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![Complex64::default(); n];
    for axis in 0..dim - 1 {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let start = outer + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, value) in line.iter().enumerate() {
                    data[start + j * stride] = *value;
                }
            }
        }
    }
}

/// Fourier coefficients of a real periodic field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_coefficients(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self, FieldError> {
        if coeffs.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Signed wavevector of flat bin `idx`.
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let m = self.grid.unravel(idx);
        let mut k = [0i64; 3];
        for axis in 0..self.grid.dim() {
            k[axis] = self.grid.wavenumber(m[axis]);
        }
        k
    }

    /// Back to physical space; any imaginary residue is discarded.
    pub fn to_physical(&self) -> ScalarField {
        let mut data = self.coeffs.clone();
        fft_nd(self.grid, &mut data, true);
        ScalarField::from_finite(self.grid, data.into_iter().map(|c| c.re).collect())
    }

    /// `Σ |c_k|²`, equal to the mean of the squared samples.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(Complex64::norm_sqr).sum()
    }

    fn map_modes(&self, f: impl Fn([i64; 3], [bool; 3], Complex64) -> Complex64) -> Self {
        let grid = self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                let m = grid.unravel(idx);
                let mut k = [0i64; 3];
                let mut nyq = [false; 3];
                for axis in 0..grid.dim() {
                    k[axis] = grid.wavenumber(m[axis]);
                    nyq[axis] = grid.is_nyquist(m[axis]);
                }
                f(k, nyq, c)
            })
            .collect();
        Self { grid, coeffs }
    }

    /// Spectral derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        self.map_modes(|k, nyq, c| {
            if nyq[axis] {
                Complex64::default()
            } else {
                c * Complex64::new(0.0, k[axis] as f64)
            }
        })
    }

    pub fn laplacian(&self) -> Self {
        self.map_modes(|k, _, c| {
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            c * -k2
        })
    }

    /// Zeroes every mode with some component beyond the 2/3-rule cutoff.
    pub fn dealiased(&self) -> Self {
        let cutoff = self.grid.dealias_cutoff() as i64;
        self.map_modes(|k, _, c| {
            if k.iter().any(|ki| ki.abs() > cutoff) {
                Complex64::default()
            } else {
                c
            }
        })
    }

    /// Energy in modes with some component above `threshold` in magnitude.
    pub fn energy_above(&self, threshold: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                self.wavevector(*idx)
                    .iter()
                    .any(|k| k.abs() as f64 > threshold)
            })
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }
}

impl ScalarField {
    pub fn to_spectral(&self) -> Spectrum {
        let grid = self.grid();
        let scale = 1.0 / grid.len() as f64;
        let mut data: Vec<Complex64> = self.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(grid, &mut data, false);
        for c in &mut data {
            *c *= scale;
        }
        Spectrum { grid, coeffs: data }
    }
}

/// Resolution diagnostics for a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    /// Fraction of the energy carried by modes above half the dealiasing cutoff.
    pub max_wavenumber_energy_fraction: f64,
    pub dealias_cutoff: usize,
}

impl SpectralDiagnostics {
    pub fn of_scalar(f: &ScalarField) -> Self {
        Self::from_spectra(f.grid(), &[f.to_spectral()])
    }

    pub fn of_vector(u: &VectorField) -> Self {
        let spectra: Vec<_> = u.components().iter().map(ScalarField::to_spectral).collect();
        Self::from_spectra(u.grid(), &spectra)
    }

    fn from_spectra(grid: Grid, spectra: &[Spectrum]) -> Self {
        let cutoff = grid.dealias_cutoff();
        let total: f64 = spectra.iter().map(Spectrum::energy).sum();
        let high: f64 = spectra.iter().map(|s| s.energy_above(cutoff as f64 / 2.0)).sum();
        let fraction = if total > 0.0 { high / total } else { 0.0 };
        Self {
            max_wavenumber_energy_fraction: fraction,
            dealias_cutoff: cutoff,
        }
    }

    pub fn is_well_resolved(&self) -> bool {
        self.max_wavenumber_energy_fraction < RESOLUTION_THRESHOLD
    }
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let spec = f.to_spectral();
    let comps = (0..f.grid().dim())
        .map(|axis| spec.derivative(axis).to_physical())
        .collect();
    VectorField::from_parts(comps, false)
}

pub fn divergence(u: &VectorField) -> ScalarField {
    let grid = u.grid();
    let mut acc: Option<Spectrum> = None;
    for (axis, comp) in u.components().iter().enumerate() {
        let d = comp.to_spectral().derivative(axis);
        acc = Some(match acc {
            None => d,
            Some(mut a) => {
                for (x, y) in a.coeffs.iter_mut().zip(&d.coeffs) {
                    *x += y;
                }
                a
            }
        });
    }
    acc.map(|s| s.to_physical())
        .unwrap_or_else(|| ScalarField::zeros(grid))
}

/// Full velocity-gradient tensor `∂_j u_k`, indexed `[j][k]`.
pub fn velocity_gradient(u: &VectorField) -> Vec<Vec<ScalarField>> {
    let dim = u.dim();
    let spectra: Vec<Spectrum> = u.components().iter().map(ScalarField::to_spectral).collect();
    (0..dim)
        .map(|j| (0..dim).map(|k| spectra[k].derivative(j).to_physical()).collect())
        .collect()
}

/// Pointwise `|ω|² = ½ Σ_{j,k} (∂_j u_k − ∂_k u_j)²`.
pub fn vorticity_norm_sq(u: &VectorField) -> ScalarField {
    let grad = velocity_gradient(u);
    vorticity_norm_sq_from_gradient(&grad)
}

pub(crate) fn vorticity_norm_sq_from_gradient(grad: &[Vec<ScalarField>]) -> ScalarField {
    let dim = grad.len();
    let grid = grad[0][0].grid();
    let mut acc = vec![0.0; grid.len()];
    // Each unordered pair appears twice in the full sum; the ½ cancels that.
    for j in 0..dim {
        for k in (j + 1)..dim {
            let a = grad[j][k].values();
            let b = grad[k][j].values();
            for ((o, &x), &y) in acc.iter_mut().zip(a).zip(b) {
                let w = x - y;
                *o += w * w;
            }
        }
    }
    ScalarField::from_finite(grid, acc)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    f.to_spectral().laplacian().to_physical()
}

/// Zero-mean solution of `Δf = rhs` on the torus.
pub fn solve_poisson(rhs: &ScalarField) -> Result<ScalarField, FieldError> {
    let scale = rhs.max_abs();
    if rhs.mean().abs() > POISSON_MEAN_TOLERANCE * scale {
        return Err(FieldError::NonZeroMeanRhs {
            mean: rhs.mean(),
            scale,
        });
    }
    Ok(inverse_laplacian(&rhs.to_spectral()).to_physical())
}

/// Inverts the Laplacian on the non-zero modes and zeroes the mean mode.
pub(crate) fn inverse_laplacian(spec: &Spectrum) -> Spectrum {
    spec.map_modes(|k, _, c| {
        let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        if k2 == 0.0 {
            Complex64::default()
        } else {
            c / -k2
        }
    })
}

/// Orthogonal projection onto divergence-free fields.
///
/// Uses the same Nyquist-free wavenumbers as [`divergence`], so the result
/// has zero spectral divergence and the map is exactly idempotent.
pub fn leray_project(u: &VectorField) -> VectorField {
    let grid = u.grid();
    let dim = grid.dim();
    let mut spectra: Vec<Spectrum> = u.components().iter().map(ScalarField::to_spectral).collect();
    for idx in 0..grid.len() {
        let m = grid.unravel(idx);
        let mut k = [0.0; 3];
        for axis in 0..dim {
            if !grid.is_nyquist(m[axis]) {
                k[axis] = grid.wavenumber(m[axis]) as f64;
            }
        }
        let k2: f64 = k.iter().map(|x| x * x).sum();
        if k2 == 0.0 {
            continue;
        }
        let mut kdotu = Complex64::default();
        for axis in 0..dim {
            kdotu += spectra[axis].coeffs[idx] * k[axis];
        }
        for axis in 0..dim {
            spectra[axis].coeffs[idx] -= kdotu * (k[axis] / k2);
        }
    }
    VectorField::from_parts(spectra.iter().map(Spectrum::to_physical).collect(), true)
}

pub fn dealias(f: &ScalarField) -> ScalarField {
    f.to_spectral().dealiased().to_physical()
}

pub fn dealias_vector(u: &VectorField) -> VectorField {
    VectorField::from_parts(
        u.components().iter().map(dealias).collect(),
        u.is_divergence_free(),
    )
}

/// Pointwise product of two fields with the result truncated by the 2/3 rule.
pub fn dealiased_product(a: &ScalarField, b: &ScalarField) -> ScalarField {
    dealias(&a.mul(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid2(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    /// Random trigonometric polynomial with all wavenumber components `|k_i| <= kmax`.
    fn random_trig(grid: Grid, kmax: i64, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        let kz_range = if grid.dim() == 3 { -kmax..=kmax } else { 0..=0 };
        for kx in -kmax..=kmax {
            for ky in -kmax..=kmax {
                for kz in kz_range.clone() {
                    terms.push(([kx as f64, ky as f64, kz as f64], rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)));
                }
            }
        }
        ScalarField::from_fn(grid, |x| {
            terms
                .iter()
                .map(|(k, a, ph)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + ph).cos())
                .sum()
        })
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn gradient_of_zero_is_zero() {
        let g = grid2(16);
        let grad = gradient(&ScalarField::zeros(g));
        assert_eq!(grad.max_abs(), 0.0);
        assert!(!grad.is_divergence_free());
    }

    #[test]
    fn gradient_of_sine() {
        let g = grid2(64);
        let grad = gradient(&ScalarField::from_fn(g, |x| x[0].sin()));
        let expect = ScalarField::from_fn(g, |x| x[0].cos());
        assert!(max_diff(grad.component(0), &expect) < 1e-13);
        assert!(grad.component(1).max_abs() < 1e-13);
    }

    #[test]
    fn gradient_of_mixed_cosines() {
        let g = grid2(64);
        let grad = gradient(&ScalarField::from_fn(g, |x| x[0].cos() + (2.0 * x[1]).cos()));
        let ex = ScalarField::from_fn(g, |x| -x[0].sin());
        let ey = ScalarField::from_fn(g, |x| -2.0 * (2.0 * x[1]).sin());
        assert!(max_diff(grad.component(0), &ex) < 1e-13);
        assert!(max_diff(grad.component(1), &ey) < 1e-13);
    }

    #[test]
    fn divergence_examples() {
        let g = grid2(32);
        let tg = VectorField::from_fn(g, |x| {
            [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]
        });
        assert!(divergence(&tg).max_abs() < 1e-13);
        let u = VectorField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]);
        let expect = ScalarField::from_fn(g, |x| x[0].cos());
        assert!(max_diff(&divergence(&u), &expect) < 1e-13);
        let c = VectorField::from_fn(g, |_| [1.5, -0.25, 0.0]);
        assert!(divergence(&c).max_abs() < 1e-15);
    }

    #[test]
    fn vorticity_of_gradient_vanishes() {
        let g = Grid::new(3, 16).unwrap();
        let f = random_trig(g, 3, 11);
        assert!(vorticity_norm_sq(&gradient(&f)).max_abs() < 1e-20);
    }

    #[test]
    fn taylor_green_vorticity() {
        let g = grid2(64);
        let tg = VectorField::from_fn(g, |x| {
            [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]
        });
        let w2 = vorticity_norm_sq(&tg);
        let expect = ScalarField::from_fn(g, |x| (2.0 * x[0].sin() * x[1].sin()).powi(2));
        assert!(max_diff(&w2, &expect) < 1e-12);
        // ∫ 4 sin²x sin²y = 4 π² over [0, 2π)².
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((w2.integral() - 4.0 * pi2).abs() < 1e-11 * pi2);
    }

    #[test]
    fn vorticity_matches_curl_in_2d() {
        let g = grid2(32);
        let u = VectorField::from_fn(g, |x| {
            [(2.0 * x[1]).sin() + x[0].cos(), (x[0] - x[1]).cos(), 0.0]
        });
        let grad = velocity_gradient(&u);
        let curl = grad[0][1].sub(&grad[1][0]);
        assert!(max_diff(&vorticity_norm_sq(&u), &curl.mul(&curl)) < 1e-12);
        assert!(vorticity_norm_sq(&u).min() >= 0.0);
    }

    #[test]
    fn laplacian_examples() {
        let g = grid2(32);
        let s = ScalarField::from_fn(g, |x| x[0].sin());
        assert!(max_diff(&laplacian(&s), &s.scale(-1.0)) < 1e-13);
        let c = ScalarField::from_fn(g, |x| x[0].cos() + x[1].cos());
        assert!(max_diff(&laplacian(&c), &c.scale(-1.0)) < 1e-13);
    }

    #[test]
    fn laplacian_is_divergence_of_gradient() {
        for (g, kmax) in [(grid2(32), 8), (Grid::new(3, 16).unwrap(), 4)] {
            let f = random_trig(g, kmax, 5);
            let a = laplacian(&f);
            let b = divergence(&gradient(&f));
            assert!(max_diff(&a, &b) <= 1e-12 * a.max_abs());
        }
    }

    #[test]
    fn poisson_examples() {
        let g = grid2(32);
        let rhs = ScalarField::from_fn(g, |x| -x[0].sin());
        let sol = solve_poisson(&rhs).unwrap();
        assert!(max_diff(&sol, &ScalarField::from_fn(g, |x| x[0].sin())) < 1e-13);
        assert_eq!(solve_poisson(&ScalarField::zeros(g)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn poisson_round_trip_random() {
        let g = grid2(64);
        let f = random_trig(g, 10, 3);
        let f0 = f.shift(-f.mean());
        let back = solve_poisson(&laplacian(&f0)).unwrap();
        assert!(max_diff(&back, &f0) <= 1e-11 * f0.max_abs());
        assert!(back.mean().abs() < 1e-14);
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let g = grid2(16);
        let rhs = ScalarField::from_fn(g, |x| 1.0 + x[0].sin());
        assert!(matches!(solve_poisson(&rhs), Err(FieldError::NonZeroMeanRhs { .. })));
    }

    #[test]
    fn leray_examples() {
        let g = grid2(32);
        let tg = VectorField::from_fn(g, |x| {
            [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin(), 0.0]
        });
        let p = leray_project(&tg);
        assert!(p.is_divergence_free());
        for axis in 0..2 {
            assert!(max_diff(p.component(axis), tg.component(axis)) < 1e-12);
        }
        let f = random_trig(g, 8, 9);
        let f = f.shift(-f.mean());
        assert!(leray_project(&gradient(&f)).max_abs() < 1e-12 * f.max_abs());
    }

    #[test]
    fn leray_matches_poisson_route_without_nyquist_content() {
        let g = Grid::new(3, 16).unwrap();
        let u = VectorField::from_parts(
            (0..3).map(|s| random_trig(g, 5, 20 + s)).collect(),
            false,
        );
        let direct = leray_project(&u);
        let phi = solve_poisson(&divergence(&u)).unwrap();
        let via = u.axpby(1.0, &gradient(&phi), -1.0);
        for axis in 0..3 {
            assert!(max_diff(direct.component(axis), via.component(axis)) < 1e-12 * u.max_abs());
        }
    }

    #[test]
    fn dealias_examples() {
        let n = 32;
        let g = grid2(n);
        let low = ScalarField::from_fn(g, |x| (3.0 * x[0]).cos() * (10.0 * x[1]).sin());
        assert!(max_diff(&dealias(&low), &low) < 1e-13);
        let k = (n / 2 - 1) as f64;
        assert!(k > (n / 3) as f64);
        let high = ScalarField::from_fn(g, |x| (k * x[0]).cos());
        assert!(dealias(&high).max_abs() < 1e-13);
        let mixed = random_trig(g, 15, 1);
        let once = dealias(&mixed);
        assert!(max_diff(&dealias(&once), &once) < 1e-13);
    }

    #[test]
    fn diagnostics_flag_unresolved_fields() {
        let g = grid2(32);
        let smooth = ScalarField::from_fn(g, |x| x[0].sin() + (2.0 * x[1]).cos());
        let d = SpectralDiagnostics::of_scalar(&smooth);
        assert_eq!(d.dealias_cutoff, 10);
        assert!(d.is_well_resolved());
        let rough = ScalarField::from_fn(g, |x| x[0].sin() + 0.1 * (9.0 * x[1]).cos());
        assert!(!SpectralDiagnostics::of_scalar(&rough).is_well_resolved());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn parseval_and_round_trip(seed in any::<u64>(), dim in 2usize..=3) {
            let g = Grid::new(dim, if dim == 2 { 32 } else { 8 }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = ScalarField::from_values(g, vals).unwrap();
            let spec = f.to_spectral();
            let physical: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
            let spectral = spec.energy() * g.domain_volume();
            prop_assert!((physical - spectral).abs() <= 1e-12 * physical);
            let back = spec.to_physical();
            prop_assert!(max_diff(&back, &f) <= 1e-12 * f.max_abs());
        }

        #[test]
        fn leray_is_idempotent_and_solenoidal(seed in any::<u64>(), dim in 2usize..=3) {
            let g = Grid::new(dim, if dim == 2 { 32 } else { 8 }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let comps = (0..dim)
                .map(|_| {
                    let vals: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    ScalarField::from_values(g, vals).unwrap()
                })
                .collect();
            let u = VectorField::new(comps).unwrap();
            let p = leray_project(&u);
            prop_assert!(divergence(&p).max_abs() <= 1e-12 * u.max_abs());
            let pp = leray_project(&p);
            for axis in 0..dim {
                prop_assert!(max_diff(pp.component(axis), p.component(axis)) <= 1e-12 * u.max_abs());
            }
        }

        #[test]
        fn poisson_inverts_laplacian(seed in any::<u64>()) {
            let g = grid2(32);
            let f = random_trig(g, 10, seed);
            let back = solve_poisson(&laplacian(&f)).unwrap();
            let expect = f.shift(-f.mean());
            prop_assert!(max_diff(&back, &expect) <= 1e-11 * f.max_abs().max(1e-300));
        }
    }
}
