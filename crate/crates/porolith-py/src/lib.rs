//! Python bindings for the two-grid staggered Biot solver.
//!
//! Two entry points: `Model` wraps the nested grids, material fields and
//! scale-bridging operators; `Simulation` drives a full coupled run from a
//! config string (same format as the CLI).

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use porolith::config::{parse_config_str, RunConfig};
use porolith::coupling::{advance_time_step, Problem, RunState};
use porolith::error::Error;
use porolith::grids::{build_box_grid, nest, BoundaryTag};
use porolith::materials::{
    bulk_modulus_bounds, contraction_constant, derive_fine_coefficients, effective_eta,
    upscale_coarse_props, CoarseMaterialField, EtaRule, FineMaterialField, RawMaterialField,
};
use porolith::transfer::{prolong_strain, restrict_pressure, verify_conditions};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } | Error::InvalidMesh(_) | Error::InvalidMaterial(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_eta_rule(rule: &str, value: Option<f64>) -> PyResult<EtaRule> {
    match rule {
        "fixed-stress" => Ok(EtaRule::FixedStress),
        "reuss" => Ok(EtaRule::Reuss),
        "voigt" => Ok(EtaRule::Voigt),
        "custom" => value
            .map(EtaRule::Custom)
            .ok_or_else(|| PyValueError::new_err("custom eta rule requires eta_value")),
        other => Err(PyValueError::new_err(format!("unknown eta rule `{other}`"))),
    }
}

/// Nested fine/coarse grids with per-cell coefficients and the
/// restriction/prolongation operators between them.
#[pyclass]
struct Model {
    pair: porolith::grids::NestedGridPair,
    fine: FineMaterialField,
    coarse: CoarseMaterialField,
}

#[pymethods]
impl Model {
    /// Build a model from per-fine-cell property lists (x fastest ordering).
    #[new]
    #[pyo3(signature = (nx, ny, nz, lengths, ratio, k_b, k_s, g, phi0, c, mu, kx, ky, kz,
                        rho0, rho_r, eta_rule="fixed-stress", eta_value=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        lengths: (f64, f64, f64),
        ratio: (usize, usize, usize),
        k_b: Vec<f64>,
        k_s: Vec<f64>,
        g: Vec<f64>,
        phi0: Vec<f64>,
        c: Vec<f64>,
        mu: Vec<f64>,
        kx: Vec<f64>,
        ky: Vec<f64>,
        kz: Vec<f64>,
        rho0: Vec<f64>,
        rho_r: Vec<f64>,
        eta_rule: &str,
        eta_value: Option<f64>,
    ) -> PyResult<Self> {
        let rule = parse_eta_rule(eta_rule, eta_value)?;
        let grid = build_box_grid(
            nx,
            ny,
            nz,
            [lengths.0, lengths.1, lengths.2],
            [BoundaryTag::NoFlux; 6],
        )
        .map_err(to_py_err)?;
        let pair = nest(grid, [ratio.0, ratio.1, ratio.2]).map_err(to_py_err)?;
        let eta = rule.apply(&k_b);
        let fine = derive_fine_coefficients(RawMaterialField {
            k_b,
            k_s,
            g,
            phi0,
            c,
            mu,
            kx,
            ky,
            kz,
            rho0,
            rho_r,
            eta,
        })
        .map_err(to_py_err)?;
        let coarse = upscale_coarse_props(&pair, &fine, rule).map_err(to_py_err)?;
        Ok(Model { pair, fine, coarse })
    }

    fn n_fine_cells(&self) -> usize {
        self.pair.fine.n_cells()
    }

    fn n_coarse_cells(&self) -> usize {
        self.pair.coarse.n_cells()
    }

    fn refinement_ratio(&self) -> f64 {
        self.pair.refinement_ratio()
    }

    /// Fine-cell indices contained in the given coarse cell.
    fn children(&self, coarse_cell: usize) -> PyResult<Vec<usize>> {
        self.pair
            .children
            .get(coarse_cell)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("no coarse cell {coarse_cell}")))
    }

    /// Contraction constant gamma = max alpha^2 / (eta/M + alpha^2).
    fn gamma(&self) -> f64 {
        contraction_constant(&self.fine)
    }

    fn alpha(&self) -> Vec<f64> {
        self.fine.alpha.clone()
    }

    fn biot_modulus(&self) -> Vec<f64> {
        self.fine.m.clone()
    }

    /// Volume-weighted harmonic mean of the child eta values, per coarse cell.
    fn effective_eta(&self) -> Vec<f64> {
        effective_eta(&self.pair, &self.fine)
    }

    /// Effective coarse bulk moduli under the chosen eta rule.
    fn coarse_bulk_modulus(&self) -> Vec<f64> {
        self.coarse.k_b.clone()
    }

    /// (harmonic, arithmetic) bulk-modulus bounds per coarse cell.
    fn bulk_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let bounds = bulk_modulus_bounds(&self.pair, &self.fine);
        (bounds.iter().map(|b| b.0).collect(), bounds.iter().map(|b| b.1).collect())
    }

    /// Restrict a per-fine-cell pressure increment to the coarse grid.
    fn restrict(&self, dp_fine: Vec<f64>) -> PyResult<Vec<f64>> {
        if dp_fine.len() != self.pair.fine.n_cells() {
            return Err(PyValueError::new_err("dp_fine length must match fine cell count"));
        }
        restrict_pressure(&self.pair, &self.fine, &self.coarse, &dp_fine).map_err(to_py_err)
    }

    /// Prolong a per-coarse-cell volumetric strain increment to the fine grid.
    fn prolong(&self, d_eps_coarse: Vec<f64>) -> PyResult<Vec<f64>> {
        if d_eps_coarse.len() != self.pair.coarse.n_cells() {
            return Err(PyValueError::new_err(
                "d_eps_coarse length must match coarse cell count",
            ));
        }
        Ok(prolong_strain(&self.pair, &self.fine, &self.coarse, &d_eps_coarse))
    }

    /// Gaps in the contraction theorem's conditions for a pair of increments:
    /// returns (c1_gap, c1_scale, c2_gap, c2_scale, c3_ok).
    fn conditions(
        &self,
        dp_fine: Vec<f64>,
        d_eps_coarse: Vec<f64>,
    ) -> PyResult<(f64, f64, f64, f64, bool)> {
        if dp_fine.len() != self.pair.fine.n_cells()
            || d_eps_coarse.len() != self.pair.coarse.n_cells()
        {
            return Err(PyValueError::new_err(
                "dp_fine / d_eps_coarse lengths must match the fine / coarse cell counts",
            ));
        }
        let rep = verify_conditions(&self.pair, &self.fine, &self.coarse, &dp_fine, &d_eps_coarse)
            .map_err(to_py_err)?;
        Ok((rep.c1_gap, rep.c1_scale, rep.c2_gap, rep.c2_scale, rep.c3_ok))
    }
}

/// A coupled simulation driven from a config string (CLI format).
#[pyclass]
struct Simulation {
    config: RunConfig,
    problem: Problem,
    run: RunState,
}

#[pymethods]
impl Simulation {
    #[new]
    fn new(config_text: &str) -> PyResult<Self> {
        let config =
            parse_config_str(Path::new("<python>"), config_text).map_err(to_py_err)?;
        let problem = porolith::config::build_problem(&config).map_err(to_py_err)?;
        let run = RunState::new(&problem).map_err(to_py_err)?;
        Ok(Simulation { config, problem, run })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyValueError::new_err(format!("cannot read {path}: {e}")))?;
        Self::new(&text)
    }

    /// Advance one time step; returns the coupling iterations it took.
    fn step(&mut self) -> PyResult<usize> {
        advance_time_step(
            &mut self.run,
            &self.problem,
            self.config.dt,
            self.config.tol_c,
            self.config.max_coupling_iters,
        )
        .map_err(to_py_err)
    }

    /// Run all configured steps; returns a summary dict.
    fn run_all<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let n_steps = (self.config.t_end / self.config.dt + 1e-9).floor() as usize;
        while self.run.step < n_steps {
            self.step()?;
        }
        let d = PyDict::new(py);
        d.set_item("gamma", contraction_constant(&self.problem.fine))?;
        d.set_item("steps", self.run.step)?;
        d.set_item("worst_ratio", self.run.worst_ratio)?;
        d.set_item(
            "total_iterations",
            self.run.step_iterations.iter().sum::<usize>(),
        )?;
        d.set_item("worst_mass_residual", self.run.worst_mass_residual)?;
        Ok(d)
    }

    fn time(&self) -> f64 {
        self.run.time
    }

    fn gamma(&self) -> f64 {
        contraction_constant(&self.problem.fine)
    }

    fn pressure(&self) -> Vec<f64> {
        self.run.flow.p.clone()
    }

    fn volumetric_strain(&self) -> Vec<f64> {
        self.run.mech.eps_v.clone()
    }

    fn displacement_magnitude(&self) -> Vec<f64> {
        self.run
            .mech
            .u
            .iter()
            .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())
            .collect()
    }

    /// Per-iteration records as (step, iter, weighted_norm, ratio_or_None).
    fn records(&self) -> Vec<(usize, usize, f64, Option<f64>)> {
        self.run
            .records
            .iter()
            .map(|r| (r.step, r.iter, r.weighted_norm, r.ratio))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulation(steps={}, time={:.3e}, iterations={})",
            self.run.step,
            self.run.time,
            self.run.step_iterations.iter().sum::<usize>()
        )
    }
}

#[pymodule]
fn porolith_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Simulation>()?;
    Ok(())
}
