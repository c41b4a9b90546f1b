//! Heterogeneous per-cell poroelastic coefficients on the fine grid and
//! their upscaling to the coarse grid.
//!
//! The coarse decoupling parameter is the volume-weighted harmonic mean of
//! the fine values. Choosing η = 2K_b per cell makes the coarse bulk modulus
//! the harmonic mean of the fine moduli (Reuss bound); η = 1/K_b makes it
//! the arithmetic mean (Voigt bound). The latter identification carries
//! reciprocal units and is flagged as such in run summaries.

use crate::error::{Error, Result};
use crate::grids::NestedGridPair;

/// Rule assigning the adjustable decoupling parameter η per fine cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    /// η = K_b: the classical fixed-stress split.
    FixedStress,
    /// η = 2 K_b: fastest contraction, coarse moduli at the Reuss bound.
    Reuss,
    /// η = 1/K_b: coarse moduli at the Voigt bound. Formal identification
    /// only; η then carries units of 1/Pa.
    Voigt,
    /// One fixed η (Pa) for every cell.
    Custom(f64),
    /// η = factor * K_b per cell; the η sweep walks factor from 1 to 2.
    ScaledBulk(f64),
}

impl EtaRule {
    pub fn apply(&self, k_b: &[f64]) -> Vec<f64> {
        match *self {
            EtaRule::FixedStress => k_b.to_vec(),
            EtaRule::Reuss => k_b.iter().map(|&k| 2.0 * k).collect(),
            EtaRule::Voigt => k_b.iter().map(|&k| 1.0 / k).collect(),
            EtaRule::Custom(v) => vec![v; k_b.len()],
            EtaRule::ScaledBulk(s) => k_b.iter().map(|&k| s * k).collect(),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            EtaRule::FixedStress => "fixed-stress (eta = K_b)".to_string(),
            EtaRule::Reuss => "reuss (eta = 2 K_b)".to_string(),
            EtaRule::Voigt => "voigt (eta = 1/K_b, reciprocal units)".to_string(),
            EtaRule::Custom(v) => format!("custom (eta = {v:e} Pa)"),
            EtaRule::ScaledBulk(s) => format!("scaled (eta = {s} K_b)"),
        }
    }
}

/// How the coarse shear modulus is averaged from the children.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanRule {
    Harmonic,
    Arithmetic,
}

/// Uniform material constants, convenient for configs and tests.
#[derive(Debug, Clone, Copy)]
pub struct MaterialConstants {
    /// Drained bulk modulus (Pa).
    pub k_b: f64,
    /// Solid-grain bulk modulus (Pa); may be `f64::INFINITY` for α = 1.
    pub k_s: f64,
    /// Shear modulus (Pa).
    pub g: f64,
    /// Reference porosity.
    pub phi0: f64,
    /// Fluid compressibility (1/Pa).
    pub c: f64,
    /// Fluid viscosity (Pa s).
    pub mu: f64,
    /// Permeability diagonal (m^2).
    pub perm: [f64; 3],
    /// Reference fluid density (kg/m^3).
    pub rho0: f64,
    /// Rock density (kg/m^3).
    pub rho_r: f64,
}

/// Per-cell inputs before the derived coefficients are filled in.
#[derive(Debug, Clone)]
pub struct RawMaterialField {
    pub k_b: Vec<f64>,
    pub k_s: Vec<f64>,
    pub g: Vec<f64>,
    pub phi0: Vec<f64>,
    pub c: Vec<f64>,
    pub mu: Vec<f64>,
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub kz: Vec<f64>,
    pub rho0: Vec<f64>,
    pub rho_r: Vec<f64>,
    pub eta: Vec<f64>,
}

impl RawMaterialField {
    pub fn uniform(n_cells: usize, m: &MaterialConstants, eta_rule: EtaRule) -> Self {
        let k_b = vec![m.k_b; n_cells];
        let eta = eta_rule.apply(&k_b);
        RawMaterialField {
            k_b,
            k_s: vec![m.k_s; n_cells],
            g: vec![m.g; n_cells],
            phi0: vec![m.phi0; n_cells],
            c: vec![m.c; n_cells],
            mu: vec![m.mu; n_cells],
            kx: vec![m.perm[0]; n_cells],
            ky: vec![m.perm[1]; n_cells],
            kz: vec![m.perm[2]; n_cells],
            rho0: vec![m.rho0; n_cells],
            rho_r: vec![m.rho_r; n_cells],
            eta,
        }
    }
}

/// Per-fine-cell poroelastic coefficients with the derived quantities
/// α = 1 - K_b/K_s, M = 1/(φ₀c + (α-φ₀)(1-α)/K_b), κ = K/μ,
/// φ = 1/M + α²/η and λ = K_b - 2G/3.
#[derive(Debug, Clone)]
pub struct FineMaterialField {
    pub k_b: Vec<f64>,
    pub k_s: Vec<f64>,
    pub g: Vec<f64>,
    pub phi0: Vec<f64>,
    pub c: Vec<f64>,
    pub mu: Vec<f64>,
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub kz: Vec<f64>,
    pub rho0: Vec<f64>,
    pub rho_r: Vec<f64>,
    pub eta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub m: Vec<f64>,
    pub kappa_x: Vec<f64>,
    pub kappa_y: Vec<f64>,
    pub kappa_z: Vec<f64>,
    pub varphi: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl FineMaterialField {
    pub fn n_cells(&self) -> usize {
        self.k_b.len()
    }

    pub fn kappa(&self, cell: usize, axis: usize) -> f64 {
        match axis {
            0 => self.kappa_x[cell],
            1 => self.kappa_y[cell],
            _ => self.kappa_z[cell],
        }
    }

    /// Linearized density law ρ = ρ₀ (1 + c (p - p₀)).
    pub fn fluid_density(&self, cell: usize, p: f64, p0: f64) -> f64 {
        self.rho0[cell] * (1.0 + self.c[cell] * (p - p0))
    }

    /// Body force density (ρ₀φ₀ + ρ_r(1-φ₀)) g, frozen at reference state.
    pub fn body_force_density(&self, cell: usize, gravity: [f64; 3]) -> [f64; 3] {
        let rho = self.rho0[cell] * self.phi0[cell] + self.rho_r[cell] * (1.0 - self.phi0[cell]);
        [rho * gravity[0], rho * gravity[1], rho * gravity[2]]
    }
}

/// Fill in the derived coefficients, validating the admissible ranges.
pub fn derive_fine_coefficients(raw: RawMaterialField) -> Result<FineMaterialField> {
    let n = raw.k_b.len();
    for (name, v) in [
        ("k_s", &raw.k_s),
        ("g", &raw.g),
        ("phi0", &raw.phi0),
        ("c", &raw.c),
        ("mu", &raw.mu),
        ("kx", &raw.kx),
        ("ky", &raw.ky),
        ("kz", &raw.kz),
        ("rho0", &raw.rho0),
        ("rho_r", &raw.rho_r),
        ("eta", &raw.eta),
    ] {
        if v.len() != n {
            return Err(Error::InvalidMaterial(format!(
                "field `{name}` has {} entries, expected {n}",
                v.len()
            )));
        }
    }

    let mut alpha = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut kappa_x = vec![0.0; n];
    let mut kappa_y = vec![0.0; n];
    let mut kappa_z = vec![0.0; n];
    let mut varphi = vec![0.0; n];
    let mut lambda = vec![0.0; n];

    for i in 0..n {
        let kb = raw.k_b[i];
        let ks = raw.k_s[i];
        if kb <= 0.0 || !kb.is_finite() {
            return Err(Error::InvalidMaterial(format!("cell {i}: K_b must be positive, got {kb}")));
        }
        if ks <= 0.0 || ks.is_nan() {
            return Err(Error::InvalidMaterial(format!("cell {i}: K_s must be positive, got {ks}")));
        }
        if kb > ks {
            return Err(Error::InvalidMaterial(format!(
                "cell {i}: K_b = {kb} exceeds K_s = {ks} (alpha would be negative)"
            )));
        }
        if raw.g[i] <= 0.0 || !raw.g[i].is_finite() {
            return Err(Error::InvalidMaterial(format!("cell {i}: shear modulus must be positive")));
        }
        if !(raw.phi0[i] > 0.0 && raw.phi0[i] < 1.0) {
            return Err(Error::InvalidMaterial(format!(
                "cell {i}: porosity must lie in (0, 1), got {}",
                raw.phi0[i]
            )));
        }
        if raw.mu[i] <= 0.0 || raw.mu[i].is_nan() {
            return Err(Error::InvalidMaterial(format!("cell {i}: viscosity must be positive")));
        }
        if raw.eta[i] <= 0.0 || !raw.eta[i].is_finite() {
            return Err(Error::InvalidMaterial(format!(
                "cell {i}: eta must be positive and finite, got {}",
                raw.eta[i]
            )));
        }
        for (ax, perm) in [(0, raw.kx[i]), (1, raw.ky[i]), (2, raw.kz[i])] {
            if perm <= 0.0 || !perm.is_finite() {
                return Err(Error::InvalidMaterial(format!(
                    "cell {i}: permeability component {ax} must be positive, got {perm}"
                )));
            }
        }

        // alpha = 1 - K_b/K_s; exact 1.0 when K_s is infinite
        let a = if ks.is_infinite() { 1.0 } else { 1.0 - kb / ks };
        let inv_m = raw.phi0[i] * raw.c[i] + (a - raw.phi0[i]) * (1.0 - a) / kb;
        if inv_m <= 0.0 || !inv_m.is_finite() {
            return Err(Error::InvalidMaterial(format!(
                "cell {i}: storage 1/M = {inv_m} must be positive (phi0 c + (alpha-phi0)(1-alpha)/K_b)"
            )));
        }
        alpha[i] = a;
        m[i] = 1.0 / inv_m;
        kappa_x[i] = raw.kx[i] / raw.mu[i];
        kappa_y[i] = raw.ky[i] / raw.mu[i];
        kappa_z[i] = raw.kz[i] / raw.mu[i];
        varphi[i] = inv_m + a * a / raw.eta[i];
        lambda[i] = kb - 2.0 * raw.g[i] / 3.0;
    }

    Ok(FineMaterialField {
        k_b: raw.k_b,
        k_s: raw.k_s,
        g: raw.g,
        phi0: raw.phi0,
        c: raw.c,
        mu: raw.mu,
        kx: raw.kx,
        ky: raw.ky,
        kz: raw.kz,
        rho0: raw.rho0,
        rho_r: raw.rho_r,
        eta: raw.eta,
        alpha,
        m,
        kappa_x,
        kappa_y,
        kappa_z,
        varphi,
        lambda,
    })
}

/// Per-coarse-cell effective coefficients.
#[derive(Debug, Clone)]
pub struct CoarseMaterialField {
    pub eta: Vec<f64>,
    pub k_b: Vec<f64>,
    pub g: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl CoarseMaterialField {
    pub fn n_cells(&self) -> usize {
        self.eta.len()
    }
}

/// Volume-weighted harmonic mean of the child η values:
/// 1/η_p = Σ (1/η_f) Meas(E^f)/Meas(E^p).
pub fn effective_eta(pair: &NestedGridPair, fine: &FineMaterialField) -> Vec<f64> {
    let w = pair.child_volume_fraction();
    pair.children
        .iter()
        .map(|kids| {
            let inv: f64 = kids.iter().map(|&cf| w / fine.eta[cf]).sum();
            1.0 / inv
        })
        .collect()
}

/// Volume-weighted harmonic and arithmetic means of the child bulk moduli,
/// per coarse cell. These bracket every admissible effective modulus.
pub fn bulk_modulus_bounds(pair: &NestedGridPair, fine: &FineMaterialField) -> Vec<(f64, f64)> {
    let w = pair.child_volume_fraction();
    pair.children
        .iter()
        .map(|kids| {
            let inv: f64 = kids.iter().map(|&cf| w / fine.k_b[cf]).sum();
            let arith: f64 = kids.iter().map(|&cf| w * fine.k_b[cf]).sum();
            (1.0 / inv, arith)
        })
        .collect()
}

/// Upscale fine coefficients to the coarse grid for the given η rule,
/// averaging the shear modulus harmonically.
pub fn upscale_coarse_props(
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    rule: EtaRule,
) -> Result<CoarseMaterialField> {
    upscale_coarse_props_with(pair, fine, rule, MeanRule::Harmonic)
}

pub fn upscale_coarse_props_with(
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    rule: EtaRule,
    g_rule: MeanRule,
) -> Result<CoarseMaterialField> {
    let eta = effective_eta(pair, fine);
    let w = pair.child_volume_fraction();
    let n = pair.coarse.n_cells();

    let mut k_b = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let mut lambda = vec![0.0; n];

    for (cc, kids) in pair.children.iter().enumerate() {
        k_b[cc] = match rule {
            EtaRule::Reuss => eta[cc] / 2.0,
            EtaRule::Voigt => 1.0 / eta[cc],
            EtaRule::FixedStress => eta[cc],
            EtaRule::ScaledBulk(s) => eta[cc] / s,
            EtaRule::Custom(_) => {
                let inv: f64 = kids.iter().map(|&cf| w / fine.k_b[cf]).sum();
                1.0 / inv
            }
        };
        g[cc] = match g_rule {
            MeanRule::Harmonic => {
                let inv: f64 = kids.iter().map(|&cf| w / fine.g[cf]).sum();
                1.0 / inv
            }
            MeanRule::Arithmetic => kids.iter().map(|&cf| w * fine.g[cf]).sum(),
        };
        alpha[cc] = kids.iter().map(|&cf| w * fine.alpha[cf]).sum();
        lambda[cc] = k_b[cc] - 2.0 * g[cc] / 3.0;

        // contraction theorem's third condition, checked at construction
        let limit = 2.0 * k_b[cc];
        if eta[cc] > limit * (1.0 + 1e-12) {
            return Err(Error::DecouplingBound { cell: cc, eta_p: eta[cc], limit });
        }
    }

    Ok(CoarseMaterialField { eta, k_b, g, alpha, lambda })
}

/// Contraction constant γ = max over fine cells of α² / (η/M + α²).
pub fn contraction_constant(fine: &FineMaterialField) -> f64 {
    let mut gamma: f64 = 0.0;
    for i in 0..fine.n_cells() {
        let a2 = fine.alpha[i] * fine.alpha[i];
        let denom = fine.eta[i] / fine.m[i] + a2;
        gamma = gamma.max(a2 / denom);
    }
    gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_box_grid, nest, BoundaryTag};
    use proptest::prelude::*;

    fn pair_1d(n_fine: usize, ratio: usize) -> NestedGridPair {
        let fine = build_box_grid(n_fine, 1, 1, [1.0, 1.0, 1.0], [BoundaryTag::NoFlux; 6]).unwrap();
        nest(fine, [ratio, 1, 1]).unwrap()
    }

    fn field_with(k_b: Vec<f64>, eta: Vec<f64>) -> FineMaterialField {
        let n = k_b.len();
        derive_fine_coefficients(RawMaterialField {
            k_s: k_b.iter().map(|&k| 2.0 * k).collect(),
            g: k_b.iter().map(|&k| 0.6 * k).collect(),
            phi0: vec![0.2; n],
            c: vec![0.5; n],
            mu: vec![1.0; n],
            kx: vec![1.0; n],
            ky: vec![1.0; n],
            kz: vec![1.0; n],
            rho0: vec![1000.0; n],
            rho_r: vec![2700.0; n],
            k_b,
            eta,
        })
        .unwrap()
    }

    #[test]
    fn stiff_grains_reduce_to_fluid_storage() {
        // K_b = K_s very stiff: alpha = 0 and M -> 1/(phi0 c)
        let raw = RawMaterialField {
            k_b: vec![1e30],
            k_s: vec![1e30],
            g: vec![1e9],
            phi0: vec![0.2],
            c: vec![1e-9],
            mu: vec![1e-3],
            kx: vec![1e-13],
            ky: vec![1e-13],
            kz: vec![1e-13],
            rho0: vec![1000.0],
            rho_r: vec![2700.0],
            eta: vec![1e9],
        };
        let f = derive_fine_coefficients(raw).unwrap();
        assert_eq!(f.alpha[0], 0.0);
        let expected_m = 1.0 / (0.2 * 1e-9);
        assert!((f.m[0] - expected_m).abs() / expected_m < 1e-12);
    }

    #[test]
    fn hand_evaluated_alpha_and_m() {
        let raw = RawMaterialField {
            k_b: vec![1.0],
            k_s: vec![2.0],
            g: vec![1.0],
            phi0: vec![0.2],
            c: vec![0.5],
            mu: vec![1.0],
            kx: vec![1.0],
            ky: vec![1.0],
            kz: vec![1.0],
            rho0: vec![1.0],
            rho_r: vec![1.0],
            eta: vec![2.0],
        };
        let f = derive_fine_coefficients(raw).unwrap();
        assert!((f.alpha[0] - 0.5).abs() < 1e-15);
        assert!((f.m[0] - 4.0).abs() < 1e-13);
        // varphi = 1/M + alpha^2/eta = 0.25 + 0.125
        assert!((f.varphi[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn infinite_grains_give_unit_alpha() {
        let raw = RawMaterialField {
            k_b: vec![1e9],
            k_s: vec![f64::INFINITY],
            g: vec![1e9],
            phi0: vec![0.2],
            c: vec![5e-9],
            mu: vec![1e-3],
            kx: vec![1e-13],
            ky: vec![1e-13],
            kz: vec![1e-13],
            rho0: vec![1000.0],
            rho_r: vec![2700.0],
            eta: vec![1e9],
        };
        let f = derive_fine_coefficients(raw).unwrap();
        assert_eq!(f.alpha[0], 1.0);
        let expected_m = 1.0 / (0.2 * 5e-9);
        assert!((f.m[0] - expected_m).abs() / expected_m < 1e-14);
    }

    #[test]
    fn rejects_inadmissible_inputs() {
        let mut raw = RawMaterialField {
            k_b: vec![2.0],
            k_s: vec![1.0],
            g: vec![1.0],
            phi0: vec![0.2],
            c: vec![0.5],
            mu: vec![1.0],
            kx: vec![1.0],
            ky: vec![1.0],
            kz: vec![1.0],
            rho0: vec![1.0],
            rho_r: vec![1.0],
            eta: vec![1.0],
        };
        assert!(matches!(
            derive_fine_coefficients(raw.clone()),
            Err(Error::InvalidMaterial(_))
        ));
        raw.k_s = vec![4.0];
        raw.eta = vec![0.0];
        assert!(derive_fine_coefficients(raw.clone()).is_err());
        raw.eta = vec![1.0];
        raw.g = vec![-1.0];
        assert!(derive_fine_coefficients(raw.clone()).is_err());
        raw.g = vec![1.0];
        raw.kx = vec![0.0];
        assert!(derive_fine_coefficients(raw).is_err());
    }

    #[test]
    fn effective_eta_matches_hand_values() {
        // homogeneous eta
        let pair = pair_1d(2, 2);
        let f = field_with(vec![5.0, 5.0], vec![5.0, 5.0]);
        let eta_p = effective_eta(&pair, &f);
        assert!((eta_p[0] - 5.0).abs() < 1e-14);

        // two equal-volume children {2, 6} -> harmonic mean 3
        let f = field_with(vec![2.0, 6.0], vec![2.0, 6.0]);
        let eta_p = effective_eta(&pair, &f);
        assert!((eta_p[0] - 3.0).abs() < 1e-14);

        // four children {1,1,1,3} -> 4/(3 + 1/3) = 1.2
        let pair = pair_1d(4, 4);
        let f = field_with(vec![1.0, 1.0, 1.0, 3.0], vec![1.0, 1.0, 1.0, 3.0]);
        let eta_p = effective_eta(&pair, &f);
        assert!((eta_p[0] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn reuss_and_voigt_endpoints() {
        let pair = pair_1d(2, 2);
        let k_b = vec![1.0, 3.0];

        let f = field_with(k_b.clone(), EtaRule::Reuss.apply(&k_b));
        let coarse = upscale_coarse_props(&pair, &f, EtaRule::Reuss).unwrap();
        assert!((coarse.eta[0] - 3.0).abs() < 1e-14);
        assert!((coarse.k_b[0] - 1.5).abs() < 1e-14);

        let f = field_with(k_b.clone(), EtaRule::Voigt.apply(&k_b));
        let coarse = upscale_coarse_props(&pair, &f, EtaRule::Voigt).unwrap();
        assert!((coarse.k_b[0] - 2.0).abs() / 2.0 < 1e-14);

        // homogeneous: both rules coincide
        let k_b = vec![7.0, 7.0];
        for rule in [EtaRule::Reuss, EtaRule::Voigt] {
            let f = field_with(k_b.clone(), rule.apply(&k_b));
            let coarse = upscale_coarse_props(&pair, &f, rule).unwrap();
            assert!((coarse.k_b[0] - 7.0).abs() / 7.0 < 1e-14);
        }
    }

    #[test]
    fn reuss_satisfies_decoupling_bound_with_equality() {
        let pair = pair_1d(4, 4);
        let k_b = vec![0.7, 2.0, 3.5, 9.0];
        let f = field_with(k_b.clone(), EtaRule::Reuss.apply(&k_b));
        let coarse = upscale_coarse_props(&pair, &f, EtaRule::Reuss).unwrap();
        let rel = (coarse.eta[0] - 2.0 * coarse.k_b[0]).abs() / coarse.eta[0];
        assert!(rel < 1e-14, "reuss must sit exactly on the eta <= 2 K_b bound, rel {rel}");
    }

    #[test]
    fn custom_rule_rejects_bound_violation() {
        let pair = pair_1d(2, 2);
        let k_b = vec![1.0, 1.0];
        let f = field_with(k_b.clone(), EtaRule::Custom(3.0).apply(&k_b));
        let err = upscale_coarse_props(&pair, &f, EtaRule::Custom(3.0)).unwrap_err();
        match err {
            Error::DecouplingBound { cell, .. } => assert_eq!(cell, 0),
            other => panic!("expected decoupling-bound error, got {other}"),
        }
    }

    #[test]
    fn contraction_constant_hand_values() {
        // alpha = 0 everywhere (K_b = K_s) decouples the iteration
        let raw = RawMaterialField {
            k_b: vec![1.0; 2],
            k_s: vec![1.0; 2],
            g: vec![1.0; 2],
            phi0: vec![0.2; 2],
            c: vec![3.0; 2],
            mu: vec![1.0; 2],
            kx: vec![1.0; 2],
            ky: vec![1.0; 2],
            kz: vec![1.0; 2],
            rho0: vec![1.0; 2],
            rho_r: vec![1.0; 2],
            eta: vec![1.0; 2],
        };
        let f = derive_fine_coefficients(raw).unwrap();
        assert_eq!(contraction_constant(&f), 0.0);

        // single cell alpha = 1, eta = 2, M = 2 -> gamma = 0.5
        let mut f = field_with(vec![1.0], vec![2.0]);
        f.alpha = vec![1.0];
        f.m = vec![2.0];
        assert!((contraction_constant(&f) - 0.5).abs() < 1e-15);

        // two cells: values 1/3 and 1/2 -> max 1/2
        let mut f = field_with(vec![1.0, 1.0], vec![2.0, 4.0]);
        f.alpha = vec![0.5, 1.0];
        f.m = vec![4.0, 4.0];
        assert!((contraction_constant(&f) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fluid_density_linearization() {
        let f = field_with(vec![1.0], vec![1.0]);
        let rho = f.fluid_density(0, 3.0, 1.0);
        // rho0 (1 + c dp) = 1000 (1 + 0.5 * 2)
        assert!((rho - 2000.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn harmonic_mean_sits_between_child_extremes(
            etas in proptest::collection::vec(0.1f64..100.0, 4),
        ) {
            let pair = pair_1d(4, 4);
            let f = field_with(vec![10.0; 4], etas.clone());
            let eta_p = effective_eta(&pair, &f)[0];
            let lo = etas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = etas.iter().cloned().fold(0.0f64, f64::max);
            prop_assert!(eta_p >= lo * (1.0 - 1e-12) && eta_p <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn gamma_never_increases_with_eta(
            k_b in proptest::collection::vec(0.5f64..5.0, 4),
            bump in 1.0f64..10.0,
            which in 0usize..4,
        ) {
            let eta = k_b.clone();
            let f = field_with(k_b.clone(), eta.clone());
            let g0 = contraction_constant(&f);
            prop_assert!(g0 < 1.0);
            let mut eta_up = eta;
            eta_up[which] *= bump;
            let f_up = field_with(k_b, eta_up);
            let g1 = contraction_constant(&f_up);
            prop_assert!(g1 <= g0 + 1e-15);
        }

        #[test]
        fn reuss_voigt_sandwich(
            k_b in proptest::collection::vec(0.5f64..5.0, 4),
        ) {
            let pair = pair_1d(4, 4);
            let f = field_with(k_b.clone(), EtaRule::Reuss.apply(&k_b));
            let (harm, arith) = bulk_modulus_bounds(&pair, &f)[0];
            prop_assert!(harm <= arith * (1.0 + 1e-13));
            for rule in [EtaRule::Reuss, EtaRule::FixedStress] {
                let f = field_with(k_b.clone(), rule.apply(&k_b));
                let coarse = upscale_coarse_props(&pair, &f, rule).unwrap();
                prop_assert!(coarse.k_b[0] >= harm * (1.0 - 1e-12));
                prop_assert!(coarse.k_b[0] <= arith * (1.0 + 1e-12));
            }
        }
    }
}
