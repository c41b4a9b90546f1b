//! Scale-bridging operators between the fine flow grid and the coarse
//! poromechanics grid, the σ̄ bookkeeping on both grids, and the numerical
//! check of the contraction theorem's three conditions.
//!
//! Restriction of cell pressures:
//!     R δp |_{E^p} = (η_p/α_p) Σ_children (α_f/η_f) δp_f Meas(E^f)/Meas(E^p)
//! Prolongation of volumetric strain:
//!     P δε̄ |_{E^f} = (η_p/η_f) δε̄ |_{E^p}
//! Both act on per-iteration increments; being linear with fixed
//! coefficients, applying them to accumulated absolute fields from a
//! consistent initial state (p₀ restricted at t = 0, ε̄ = 0) is equivalent.

use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grids::NestedGridPair;
use crate::materials::{CoarseMaterialField, FineMaterialField};
use crate::mech::MechState;

/// σ̄ on both grids and the transferred fields backing it.
#[derive(Debug, Clone)]
pub struct CouplingState {
    /// σ̄ per fine cell: η_f (P ε̄) - α_f p_h.
    pub sigma_bar_fine: Vec<f64>,
    /// σ̄ per coarse cell: η_p ε̄_H - α_p (R p).
    pub sigma_bar_coarse: Vec<f64>,
    /// Restricted absolute pressure per coarse cell.
    pub p_restricted: Vec<f64>,
    /// Restriction of the initial pressure field; the mechanics pressure
    /// load uses p_restricted - p_restricted_ref.
    pub p_restricted_ref: Vec<f64>,
    /// Prolonged volumetric strain per fine cell.
    pub eps_prolonged: Vec<f64>,
    /// Weighted norm Σ_f ||δσ̄||²/η_f of each iteration's increment.
    pub increment_history: Vec<f64>,
}

impl CouplingState {
    /// Consistent initial state: zero strain, pressures at p₀.
    pub fn new(
        pair: &NestedGridPair,
        fine: &FineMaterialField,
        coarse: &CoarseMaterialField,
        p0: &[f64],
    ) -> Result<Self> {
        let p_restricted = restrict_pressure(pair, fine, coarse, p0)?;
        let n_fine = pair.fine.n_cells();
        let n_coarse = pair.coarse.n_cells();
        let sigma_bar_fine: Vec<f64> =
            (0..n_fine).map(|c| -fine.alpha[c] * p0[c]).collect();
        let sigma_bar_coarse: Vec<f64> =
            (0..n_coarse).map(|c| -coarse.alpha[c] * p_restricted[c]).collect();
        Ok(CouplingState {
            sigma_bar_fine,
            sigma_bar_coarse,
            p_restricted_ref: p_restricted.clone(),
            p_restricted,
            eps_prolonged: vec![0.0; n_fine],
            increment_history: Vec::new(),
        })
    }

    /// Coarse pressure change seen by the mechanics solve.
    pub fn mech_pressure_change(&self) -> Vec<f64> {
        self.p_restricted
            .iter()
            .zip(&self.p_restricted_ref)
            .map(|(p, p0)| p - p0)
            .collect()
    }
}

/// Restrict fine cell pressures to the coarse grid.
///
/// With α_p = 0 and every child α_f = 0 the formula degenerates; its limit,
/// the plain volume average, is used. α_p = 0 with a coupled child is
/// rejected as inconsistent.
pub fn restrict_pressure(
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    coarse: &CoarseMaterialField,
    dp_fine: &[f64],
) -> Result<Vec<f64>> {
    assert_eq!(dp_fine.len(), pair.fine.n_cells());
    let w = pair.child_volume_fraction();
    let mut out = vec![0.0; pair.coarse.n_cells()];
    for (cc, kids) in pair.children.iter().enumerate() {
        if coarse.alpha[cc] == 0.0 {
            if kids.iter().any(|&cf| fine.alpha[cf] != 0.0) {
                return Err(Error::InconsistentCoupling(format!(
                    "coarse cell {cc} has alpha_p = 0 but a coupled child; restriction undefined"
                )));
            }
            out[cc] = kids.iter().map(|&cf| w * dp_fine[cf]).sum();
        } else {
            let sum: f64 = kids
                .iter()
                .map(|&cf| fine.alpha[cf] / fine.eta[cf] * dp_fine[cf] * w)
                .sum();
            out[cc] = coarse.eta[cc] / coarse.alpha[cc] * sum;
        }
    }
    Ok(out)
}

/// Prolong coarse volumetric strains to the fine grid.
pub fn prolong_strain(
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    coarse: &CoarseMaterialField,
    d_eps_coarse: &[f64],
) -> Vec<f64> {
    assert_eq!(d_eps_coarse.len(), pair.coarse.n_cells());
    let mut out = vec![0.0; pair.fine.n_cells()];
    for (cc, kids) in pair.children.iter().enumerate() {
        for &cf in kids {
            out[cf] = coarse.eta[cc] / fine.eta[cf] * d_eps_coarse[cc];
        }
    }
    out
}

/// Recompute σ̄ on both grids from the current flow and mechanics states,
/// returning the weighted norm Σ_f ||δσ̄||²_{E^f}/η_f of the fine-grid
/// increment relative to the previous call.
pub fn update_sigma_bar(
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    coarse: &CoarseMaterialField,
    flow: &FlowState,
    mech: &MechState,
    state: &mut CouplingState,
) -> Result<f64> {
    state.p_restricted = restrict_pressure(pair, fine, coarse, &flow.p)?;
    state.eps_prolonged = prolong_strain(pair, fine, coarse, &mech.eps_v);

    let vol = pair.fine.cell_volume();
    let mut norm = 0.0;
    for c in 0..pair.fine.n_cells() {
        let new = fine.eta[c] * state.eps_prolonged[c] - fine.alpha[c] * flow.p[c];
        let d = new - state.sigma_bar_fine[c];
        norm += d * d * vol / fine.eta[c];
        state.sigma_bar_fine[c] = new;
    }
    for c in 0..pair.coarse.n_cells() {
        state.sigma_bar_coarse[c] =
            coarse.eta[c] * mech.eps_v[c] - coarse.alpha[c] * state.p_restricted[c];
    }
    Ok(norm)
}

/// Gaps in the contraction theorem's conditions for a given pair of
/// increments. The first must vanish identically, the second must be
/// nonnegative, the third is a per-cell bound on the coarse η.
#[derive(Debug, Clone, Copy)]
pub struct ConditionReport {
    /// Σ_f α_f (Pδε̄, δp)_f - Σ_p α_p (δε̄, Rδp)_p.
    pub c1_gap: f64,
    pub c1_scale: f64,
    /// Σ_p η_p ||δε̄||²_p - Σ_f η_f ||Pδε̄||²_f.
    pub c2_gap: f64,
    pub c2_scale: f64,
    /// η_p <= 2 K_b_p on every coarse cell.
    pub c3_ok: bool,
}

pub fn verify_conditions(
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    coarse: &CoarseMaterialField,
    dp_fine: &[f64],
    d_eps_coarse: &[f64],
) -> Result<ConditionReport> {
    let restricted = restrict_pressure(pair, fine, coarse, dp_fine)?;
    let prolonged = prolong_strain(pair, fine, coarse, d_eps_coarse);
    let vf = pair.fine.cell_volume();
    let vp = pair.coarse.cell_volume();

    let mut term_fine = 0.0;
    for c in 0..pair.fine.n_cells() {
        term_fine += fine.alpha[c] * prolonged[c] * dp_fine[c] * vf;
    }
    let mut term_coarse = 0.0;
    for c in 0..pair.coarse.n_cells() {
        term_coarse += coarse.alpha[c] * d_eps_coarse[c] * restricted[c] * vp;
    }

    let mut energy_coarse = 0.0;
    for (eta, deps) in coarse.eta.iter().zip(d_eps_coarse) {
        energy_coarse += eta * deps * deps * vp;
    }
    let mut energy_fine = 0.0;
    for (eta, pe) in fine.eta.iter().zip(&prolonged) {
        energy_fine += eta * pe * pe * vf;
    }

    let c3_ok = (0..pair.coarse.n_cells())
        .all(|c| coarse.eta[c] <= 2.0 * coarse.k_b[c] * (1.0 + 1e-12));

    Ok(ConditionReport {
        c1_gap: term_fine - term_coarse,
        c1_scale: term_fine.abs() + term_coarse.abs(),
        c2_gap: energy_coarse - energy_fine,
        c2_scale: energy_coarse.abs() + energy_fine.abs(),
        c3_ok,
    })
}
