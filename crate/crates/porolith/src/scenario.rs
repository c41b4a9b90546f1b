//! Built-in verification scenarios and the η sweep.
//!
//! `single_cell` checks the driver against a scalar recursion of the two
//! closed-form updates, `uniaxial` checks the mechanics constitutive
//! response, and `eta_sweep` walks η from K_b to 2K_b on a problem
//! engineered to γ = 1/2 and watches the iteration counts.

use std::path::Path;

use crate::config::{build_problem, RunConfig, Scenario};
use crate::coupling::{advance_time_step, run_coupling_iteration, Problem, RunState};
use crate::error::{Error, Result};
use crate::flow::FaceFlowBc;
use crate::grids::BoxFace;
use crate::materials::{contraction_constant, EtaRule, MaterialConstants};
use crate::mech::{solve_mech_step, FaceMechBc, MechState};
use crate::output::fmt_float;

/// The built-in problem behind each named scenario.
pub fn builtin_config(scenario: Scenario) -> RunConfig {
    let mut cfg = RunConfig { scenario, ..RunConfig::default() };
    match scenario {
        Scenario::User => cfg,
        Scenario::SingleCell | Scenario::Uniaxial => {
            cfg.nx = 1;
            cfg.ny = 1;
            cfg.nz = 1;
            cfg.lengths = [1.0, 1.0, 1.0];
            cfg.ratio = [1, 1, 1];
            cfg.material = crate::config::MaterialSpec::Constants(MaterialConstants {
                k_b: 1.0e9,
                k_s: 2.0e9,
                g: 6.0e8,
                phi0: 0.2,
                c: 4.0e-10,
                mu: 1.0e-3,
                perm: [1e-13; 3],
                rho0: 1000.0,
                rho_r: 2700.0,
            });
            cfg.eta_rule = EtaRule::FixedStress;
            cfg.source = if scenario == Scenario::SingleCell { 1e-6 } else { 0.0 };
            cfg.mech_faces[BoxFace::ZMax.index()] = FaceMechBc::Traction([0.0, 0.0, -2.0e6]);
            cfg.dt = 100.0;
            cfg.t_end = 300.0;
            cfg.solver_tol = 1e-13;
            cfg.output_dir = format!("out/{}", scenario.name()).into();
            cfg
        }
        Scenario::EtaSweep => {
            // alpha = 1 and eta/M = 1 at the fixed-stress point: gamma = 1/2
            let k_b = 1.0e9;
            cfg.nx = 4;
            cfg.ny = 4;
            cfg.nz = 4;
            cfg.lengths = [1.0, 1.0, 1.0];
            cfg.ratio = [2, 2, 2];
            cfg.material = crate::config::MaterialSpec::Constants(MaterialConstants {
                k_b,
                k_s: f64::INFINITY,
                g: 0.75 * k_b,
                phi0: 0.2,
                c: 1.0 / (0.2 * k_b),
                mu: 1.0e-3,
                perm: [1e-13; 3],
                rho0: 1000.0,
                rho_r: 2700.0,
            });
            cfg.eta_rule = EtaRule::FixedStress;
            cfg.source = 1e-6;
            cfg.flow_faces[BoxFace::XMin.index()] = FaceFlowBc::Dirichlet(1.0e6);
            cfg.mech_faces[BoxFace::ZMax.index()] = FaceMechBc::Traction([0.0, 0.0, -2.0e6]);
            cfg.dt = 100.0;
            cfg.t_end = 300.0;
            cfg.solver_tol = 1e-12;
            cfg.output_dir = "out/eta_sweep".into();
            cfg
        }
    }
}

/// Run a config in memory (no artifacts); returns the problem and final state.
pub fn run_config_in_memory(cfg: &RunConfig) -> Result<(Problem, RunState)> {
    let problem = build_problem(cfg)?;
    let mut run = RunState::new(&problem)?;
    let n_steps = (cfg.t_end / cfg.dt + 1e-9).floor() as usize;
    for _ in 0..n_steps {
        advance_time_step(&mut run, &problem, cfg.dt, cfg.tol_c, cfg.max_coupling_iters)?;
    }
    Ok((problem, run))
}

/// One named check with its outcome.
#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn push(&mut self, label: &str, ok: bool, detail: String) {
        self.checks.push(Check { label: label.to_string(), ok, detail });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Scalar recursion for the single-cell problem: the flow and mechanics
/// updates in closed form, iterated directly.
pub struct ScalarRecursion {
    pub p: f64,
    pub eps: f64,
    pub sigma: f64,
    p_time: f64,
    sigma_time: f64,
}

impl ScalarRecursion {
    pub fn new(p0: f64) -> Self {
        ScalarRecursion { p: p0, eps: 0.0, sigma: 0.0, p_time: p0, sigma_time: 0.0 }
    }

    /// One coupling iteration: pressure from the lumped mass balance, then
    /// strain from the uniaxial constitutive law, then σ̄.
    pub fn iterate(&mut self, problem: &Problem, q: f64, t_z: f64, dt: f64) {
        let (alpha, eta, varphi) =
            (problem.fine.alpha[0], problem.fine.eta[0], problem.fine.varphi[0]);
        let k_dr = problem.coarse.k_b[0] + 4.0 * problem.coarse.g[0] / 3.0;
        self.p =
            self.p_time + (dt * q - alpha / eta * (self.sigma - self.sigma_time)) / varphi;
        self.eps = (t_z + alpha * self.p) / k_dr;
        self.sigma = eta * self.eps - alpha * self.p;
    }

    pub fn accept(&mut self) {
        self.p_time = self.p;
        self.sigma_time = self.sigma;
    }
}

fn verify_single_cell(report: &mut VerifyReport) -> Result<()> {
    let cfg = builtin_config(Scenario::SingleCell);
    let problem = build_problem(&cfg)?;
    let (q, t_z) = (cfg.source, -2.0e6);
    let mut run = RunState::new(&problem)?;
    let mut oracle = ScalarRecursion::new(0.0);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        run.iter = 0;
        run.coupling.increment_history.clear();
        let mut norm_first = 0.0;
        for m in 1..=cfg.max_coupling_iters {
            let norm = run_coupling_iteration(&mut run, &problem, cfg.dt)?;
            oracle.iterate(&problem, q, t_z, cfg.dt);
            let p_err = (run.flow.p[0] - oracle.p).abs() / oracle.p.abs().max(1.0);
            let e_err = (run.mech.eps_v[0] - oracle.eps).abs() / oracle.eps.abs().max(1e-30);
            worst = worst.max(p_err).max(e_err);
            if m == 1 {
                norm_first = norm;
            } else if norm <= cfg.tol_c * norm_first {
                break;
            }
        }
        run.flow.accept_time_level();
        run.sigma_bar_fine_time.copy_from_slice(&run.coupling.sigma_bar_fine);
        run.step += 1;
        oracle.accept();
    }
    report.push(
        "single-cell driver matches the scalar recursion (tol 1e-12)",
        worst <= 1e-12,
        format!("worst relative deviation {}", fmt_float(worst)),
    );
    Ok(())
}

fn verify_uniaxial(report: &mut VerifyReport) -> Result<()> {
    let cfg = builtin_config(Scenario::Uniaxial);
    let problem = build_problem(&cfg)?;
    let t_z = -2.0e6;
    let k_dr = problem.coarse.k_b[0] + 4.0 * problem.coarse.g[0] / 3.0;
    let expected = t_z / k_dr;

    let mut mech = MechState::new(&problem.pair.coarse);
    solve_mech_step(
        &problem.pair.coarse,
        &problem.coarse,
        &[0.0],
        &problem.loads,
        &problem.mech_bc,
        &mut mech,
        1e-14,
        0,
    )?;
    let rel = (mech.eps_v[0] - expected).abs() / expected.abs();
    report.push(
        "uniaxial strain matches t_z/(K_b + 4G/3) (tol 1e-12)",
        rel <= 1e-12,
        format!("relative error {}", fmt_float(rel)),
    );

    let (prob, run) = run_config_in_memory(&cfg)?;
    let gamma = contraction_constant(&prob.fine);
    report.push(
        "coupled uniaxial run converges within the contraction bound",
        run.worst_ratio <= gamma + 1e-10,
        format!("worst ratio {} vs gamma {}", fmt_float(run.worst_ratio), fmt_float(gamma)),
    );
    Ok(())
}

/// Outcome of one η-sweep point.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub factor: f64,
    pub gamma: f64,
    pub total_iterations: usize,
    pub worst_ratio: f64,
}

/// Run the configured problem with η = factor · K_b for `points` factors
/// between `from` and `to`, inclusive.
pub fn sweep_eta(cfg: &RunConfig, from: f64, to: f64, points: usize) -> Result<Vec<SweepPoint>> {
    if points < 2 {
        return Err(Error::Step(format!("eta sweep needs at least 2 points, got {points}")));
    }
    if from <= 0.0 || from.is_nan() || to < from {
        return Err(Error::Step(format!("bad sweep range [{from}, {to}]")));
    }
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let factor = from + (to - from) * i as f64 / (points - 1) as f64;
        let mut swept = cfg.clone();
        swept.eta_rule = EtaRule::ScaledBulk(factor);
        let (problem, run) = run_config_in_memory(&swept)?;
        out.push(SweepPoint {
            factor,
            gamma: contraction_constant(&problem.fine),
            total_iterations: run.step_iterations.iter().sum(),
            worst_ratio: run.worst_ratio,
        });
    }
    Ok(out)
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut s = String::from("factor,gamma,total_iterations,worst_ratio\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_float(p.factor),
            fmt_float(p.gamma),
            p.total_iterations,
            fmt_float(p.worst_ratio)
        ));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn verify_eta_sweep(report: &mut VerifyReport) -> Result<()> {
    let cfg = builtin_config(Scenario::EtaSweep);
    let points = sweep_eta(&cfg, 1.0, 2.0, 5)?;

    let gamma0 = points[0].gamma;
    report.push(
        "fixed-stress point of the sweep problem sits at gamma = 1/2",
        (gamma0 - 0.5).abs() <= 1e-12,
        format!("gamma {}", fmt_float(gamma0)),
    );

    // geometric bound: ceil(log tol / log gamma) contraction steps
    let bound = ((cfg.tol_c.ln() / gamma0.ln()).ceil()) as usize;
    let per_step_worst = {
        let swept = {
            let mut c = cfg.clone();
            c.eta_rule = EtaRule::ScaledBulk(1.0);
            c
        };
        let (_, run) = run_config_in_memory(&swept)?;
        run.step_iterations.iter().map(|&i| i - 1).max().unwrap_or(0)
    };
    report.push(
        "iterations at gamma = 1/2 stay within the geometric bound",
        per_step_worst <= bound,
        format!("worst step took {per_step_worst} contraction steps, bound {bound}"),
    );

    let monotone = points.windows(2).all(|w| w[1].total_iterations <= w[0].total_iterations);
    report.push(
        "iteration counts do not increase as eta grows toward 2 K_b",
        monotone,
        format!(
            "counts {:?}",
            points.iter().map(|p| p.total_iterations).collect::<Vec<_>>()
        ),
    );

    let contraction_ok = points.iter().all(|p| p.worst_ratio <= p.gamma + 1e-10);
    report.push(
        "every sweep point respects its contraction constant",
        contraction_ok,
        points
            .iter()
            .map(|p| format!("factor {}: ratio {} <= gamma {}", p.factor, p.worst_ratio, p.gamma))
            .collect::<Vec<_>>()
            .join("; "),
    );
    Ok(())
}

/// Run the named scenario's checks.
pub fn verify_scenario(scenario: Scenario) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    match scenario {
        Scenario::SingleCell => verify_single_cell(&mut report)?,
        Scenario::Uniaxial => verify_uniaxial(&mut report)?,
        Scenario::EtaSweep => verify_eta_sweep(&mut report)?,
        Scenario::User => {
            return Err(Error::Step(
                "`verify` expects one of: single_cell, uniaxial, eta_sweep".to_string(),
            ))
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtin_scenarios_pass_their_checks() {
        for scenario in [Scenario::SingleCell, Scenario::Uniaxial, Scenario::EtaSweep] {
            let report = verify_scenario(scenario).unwrap();
            for c in &report.checks {
                assert!(c.ok, "{} failed: {}", c.label, c.detail);
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_ranges() {
        let cfg = builtin_config(Scenario::EtaSweep);
        assert!(sweep_eta(&cfg, 1.0, 2.0, 1).is_err());
        assert!(sweep_eta(&cfg, 0.0, 2.0, 3).is_err());
        assert!(sweep_eta(&cfg, 2.0, 1.0, 3).is_err());
    }
}
