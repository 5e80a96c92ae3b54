//! The cubic Nemytskij operator `F(u) = u^3 - u`, evaluated pseudospectrally.
//!
//! Products are formed on the basis quadrature grid, which integrates products of four
//! retained modes exactly, so `P F(u)` comes out alias-free. No mean-free projection is
//! applied here; callers compose with `A` (which annihilates the mean) as the scheme needs.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{EigenBasis, GridWorkspace, SpectralField};

/// `f(s) = s^3 - s`.
#[inline]
pub fn cubic(s: f64) -> f64 {
    s * s * s - s
}

/// `f'(s) = 3 s^2 - 1`.
#[inline]
pub fn cubic_prime(s: f64) -> f64 {
    3.0 * s * s - 1.0
}

/// Primitive of `f` vanishing at zero: `s^4/4 - s^2/2`.
#[inline]
pub fn double_well(s: f64) -> f64 {
    let s2 = s * s;
    0.25 * s2 * s2 - 0.5 * s2
}

/// Evaluator with per-instance scratch; one per worker.
pub struct Nonlinearity {
    basis: Arc<EigenBasis>,
    ws: GridWorkspace,
    grid: Vec<f64>,
    work: Vec<f64>,
    coeffs: Vec<f64>,
}

impl Nonlinearity {
    pub fn new(basis: &Arc<EigenBasis>) -> Self {
        Nonlinearity {
            basis: Arc::clone(basis),
            ws: basis.workspace(),
            grid: vec![0.0; basis.grid_len()],
            work: vec![0.0; basis.grid_len()],
            coeffs: vec![0.0; basis.len()],
        }
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    fn check(&self, u: &SpectralField) -> Result<()> {
        if u.basis().id() == self.basis.id() {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    /// Coefficients of `F(u)` on the retained modes.
    pub fn eval_f(&mut self, u: &SpectralField) -> Result<SpectralField> {
        self.check(u)?;
        let mut out = vec![0.0; self.basis.len()];
        self.eval_into(u.coeffs(), &mut out);
        SpectralField::from_coeffs(&self.basis, out)
    }

    /// Raw-slice form of [`Self::eval_f`]. Returns the grid maximum of `|u|`.
    pub fn eval_into(&mut self, coeffs: &[f64], out: &mut [f64]) -> f64 {
        self.basis.synthesize(coeffs, &mut self.grid, &mut self.ws);
        let mut sup: f64 = 0.0;
        for v in self.grid.iter_mut() {
            sup = sup.max(v.abs());
            *v = cubic(*v);
        }
        self.basis.analyze(&mut self.grid, out, &mut self.ws);
        sup
    }

    /// `F(coeffs + shift)` without forming the sum as a field.
    pub fn eval_shifted_into(&mut self, coeffs: &[f64], shift: &[f64], out: &mut [f64]) -> f64 {
        for ((c, a), b) in self.coeffs.iter_mut().zip(coeffs).zip(shift) {
            *c = a + b;
        }
        let sum = std::mem::take(&mut self.coeffs);
        let sup = self.eval_into(&sum, out);
        self.coeffs = sum;
        sup
    }

    /// Grid values of `f'(u)`, reusable across several [`Self::apply_multiplier`] calls.
    pub fn derivative_multiplier(&mut self, coeffs: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.basis.grid_len()];
        self.basis.synthesize(coeffs, &mut m, &mut self.ws);
        for v in m.iter_mut() {
            *v = cubic_prime(*v);
        }
        m
    }

    /// Coefficients of `m * psi` for a grid multiplier `m`.
    pub fn apply_multiplier(&mut self, multiplier: &[f64], psi: &[f64], out: &mut [f64]) {
        self.basis.synthesize(psi, &mut self.work, &mut self.ws);
        for (w, m) in self.work.iter_mut().zip(multiplier) {
            *w *= m;
        }
        self.basis.analyze(&mut self.work, out, &mut self.ws);
    }

    /// Coefficients of `(3u^2 - 1) psi`.
    pub fn eval_f_prime_apply(&mut self, u: &SpectralField, psi: &SpectralField) -> Result<SpectralField> {
        self.check(u)?;
        self.check(psi)?;
        let m = self.derivative_multiplier(u.coeffs());
        let mut out = vec![0.0; self.basis.len()];
        self.apply_multiplier(&m, psi.coeffs(), &mut out);
        SpectralField::from_coeffs(&self.basis, out)
    }

    /// `J(u) = |u|_1^2 / 2 + int Phi(u) dx`.
    pub fn energy(&mut self, u: &SpectralField) -> Result<f64> {
        self.check(u)?;
        let gradient = 0.5 * u.seminorm(1.0).powi(2);
        self.basis.synthesize(u.coeffs(), &mut self.grid, &mut self.ws);
        let w = self.basis.quadrature_weight();
        let potential: f64 = self.grid.iter().map(|&s| double_well(s)).sum::<f64>() * w;
        Ok(gradient + potential)
    }

    /// `||u||_{L^p}` by grid quadrature.
    pub fn lp_norm(&mut self, u: &SpectralField, p: f64) -> Result<f64> {
        self.check(u)?;
        self.basis.synthesize(u.coeffs(), &mut self.grid, &mut self.ws);
        let w = self.basis.quadrature_weight();
        let s: f64 = self.grid.iter().map(|v| v.abs().powf(p)).sum::<f64>() * w;
        Ok(s.powf(1.0 / p))
    }

    /// Grid maximum of `|u|`, the computable stand-in for the `C(D)` norm.
    pub fn sup_norm(&mut self, u: &SpectralField) -> Result<f64> {
        self.check(u)?;
        self.basis.synthesize(u.coeffs(), &mut self.grid, &mut self.ws);
        Ok(self.grid.iter().fold(0.0, |m, v| m.max(v.abs())))
    }
}

/// Worst-case slacks (`rhs - lhs`) of the coercivity, one-sided Lipschitz and local Lipschitz
/// conditions over a sample set. Negative slack beyond rounding is a violation.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub checked: usize,
    pub coercivity_slack: f64,
    pub one_sided_slack: f64,
    pub local_lipschitz_slack: f64,
    pub violations: usize,
    /// Norms are taken on a grid; `||.||_V` is the grid maximum.
    pub sup_norm_is_grid_max: bool,
}

/// Check the three structure conditions of `F` on pairs `(u, v)`.
///
/// Norms use an oversampled midpoint grid (`3(n+1)` nodes per axis) on which the degree-six
/// integrand of `||F(u) - F(v)||^2` is integrated exactly.
pub fn check_structure_conditions(samples: &[(SpectralField, SpectralField)]) -> Result<StructureReport> {
    let mut report = StructureReport {
        checked: 0,
        coercivity_slack: f64::INFINITY,
        one_sided_slack: f64::INFINITY,
        local_lipschitz_slack: f64::INFINITY,
        violations: 0,
        sup_norm_is_grid_max: true,
    };
    for (u, v) in samples {
        if !u.same_basis(v) {
            return Err(Error::BasisMismatch);
        }
        let basis = u.basis();
        let nodes = 3 * (basis.modes_per_axis() + 1);
        let w = basis.volume() / (nodes.pow(basis.dim() as u32) as f64);
        let ug = basis.synthesize_on(u.coeffs(), nodes);
        let vg = basis.synthesize_on(v.coeffs(), nodes);

        let mut fu_u = 0.0;
        let mut u4 = 0.0;
        let mut u2 = 0.0;
        let mut diff_inner = 0.0;
        let mut diff_sq = 0.0;
        let mut fdiff_sq = 0.0;
        let mut u_sup: f64 = 0.0;
        let mut v_sup: f64 = 0.0;
        for (&a, &b) in ug.iter().zip(&vg) {
            fu_u += cubic(a) * a;
            u4 += a.powi(4);
            u2 += a * a;
            let df = cubic(a) - cubic(b);
            diff_inner += df * (a - b);
            diff_sq += (a - b) * (a - b);
            fdiff_sq += df * df;
            u_sup = u_sup.max(a.abs());
            v_sup = v_sup.max(b.abs());
        }
        let (fu_u, u4, u2) = (fu_u * w, u4 * w, u2 * w);
        let (diff_inner, diff_sq, fdiff_sq) = (diff_inner * w, diff_sq * w, fdiff_sq * w);

        let tol = |scale: f64| 1e-10 * (1.0 + scale.abs());

        let coercive = (-u4 + u2) - (-fu_u);
        let one_sided = diff_sq - (-diff_inner);
        let lip_rhs = diff_sq.sqrt() * (1.0 + 1.5 * u_sup * u_sup + 1.5 * v_sup * v_sup);
        let local = lip_rhs - fdiff_sq.sqrt();

        if coercive < -tol(u4 + u2) {
            report.violations += 1;
        }
        if one_sided < -tol(diff_sq + diff_inner.abs()) {
            report.violations += 1;
        }
        if local < -tol(lip_rhs) {
            report.violations += 1;
        }
        report.coercivity_slack = report.coercivity_slack.min(coercive);
        report.one_sided_slack = report.one_sided_slack.min(one_sided);
        report.local_lipschitz_slack = report.local_lipschitz_slack.min(local);
        report.checked += 1;
    }
    Ok(report)
}
