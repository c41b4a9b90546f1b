//! The staggered two-grid driver.
//!
//! Per time step: flow solve on the fine grid with σ̄ frozen at the previous
//! iterate, restriction of the pressure increment, mechanics solve on the
//! coarse grid with the restricted pressure frozen, prolongation of the
//! volumetric strain, σ̄ update on both grids. Iterations repeat until the
//! weighted increment norm Σ_f ||δσ̄||²/η_f falls below tol_c times its
//! first-iteration value. No relaxation or acceleration is applied, so the
//! observed decay rate can be compared directly against the contraction
//! constant γ.

use std::path::Path;

use crate::config::{build_problem, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{global_mass_residual, solve_flow_step, FlowBc, FlowState};
use crate::grids::NestedGridPair;
use crate::materials::{contraction_constant, CoarseMaterialField, FineMaterialField};
use crate::mech::{solve_mech_step, MechBc, MechLoads, MechState};
use crate::output;
use crate::transfer::{update_sigma_bar, verify_conditions, CouplingState};

/// Everything fixed over a run: grids, coefficients, boundary data, loads.
#[derive(Debug, Clone)]
pub struct Problem {
    pub pair: NestedGridPair,
    pub fine: FineMaterialField,
    pub coarse: CoarseMaterialField,
    pub flow_bc: FlowBc,
    pub mech_bc: MechBc,
    /// Volumetric source rate density per fine cell (1/s).
    pub source: Vec<f64>,
    pub loads: MechLoads,
    /// Initial (and reference) pressure per fine cell.
    pub p_init: Vec<f64>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

/// One row of the per-iteration convergence log.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRecord {
    /// 1-based index of the time step being computed.
    pub step: usize,
    /// 1-based coupling iteration within the step.
    pub iter: usize,
    pub weighted_norm: f64,
    /// weighted_norm / previous weighted_norm, defined from iteration 2 on.
    pub ratio: Option<f64>,
    pub c1_gap: f64,
    pub c2_gap: f64,
}

/// Mutable simulation state plus the per-iteration records.
#[derive(Debug, Clone)]
pub struct RunState {
    pub time: f64,
    /// Accepted steps so far.
    pub step: usize,
    /// Iteration count within the current step.
    pub iter: usize,
    pub flow: FlowState,
    pub mech: MechState,
    pub coupling: CouplingState,
    /// σ̄ per fine cell at the last accepted time level.
    pub sigma_bar_fine_time: Vec<f64>,
    pub records: Vec<ConvergenceRecord>,
    /// Iterations each accepted step needed.
    pub step_iterations: Vec<usize>,
    /// Worst observed norm ratio over all iterations with m >= 2.
    pub worst_ratio: f64,
    /// Worst relative global mass imbalance over all flow solves.
    pub worst_mass_residual: f64,
}

impl RunState {
    pub fn new(problem: &Problem) -> Result<Self> {
        let flow = FlowState::new(&problem.pair.fine, &problem.p_init);
        let mech = MechState::new(&problem.pair.coarse);
        let coupling =
            CouplingState::new(&problem.pair, &problem.fine, &problem.coarse, &problem.p_init)?;
        let sigma_bar_fine_time = coupling.sigma_bar_fine.clone();
        Ok(RunState {
            time: 0.0,
            step: 0,
            iter: 0,
            flow,
            mech,
            coupling,
            sigma_bar_fine_time,
            records: Vec::new(),
            step_iterations: Vec::new(),
            worst_ratio: 0.0,
            worst_mass_residual: 0.0,
        })
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One full coupling sweep; returns the weighted increment norm.
pub fn run_coupling_iteration(run: &mut RunState, problem: &Problem, dt: f64) -> Result<f64> {
    run.iter += 1;

    // flow solve against sigma_bar from the previous iterate minus the
    // accepted time level (zero on the first iteration of a step)
    let sigma_change: Vec<f64> = run
        .coupling
        .sigma_bar_fine
        .iter()
        .zip(&run.sigma_bar_fine_time)
        .map(|(now, at_n)| now - at_n)
        .collect();
    let p_before = run.flow.p.clone();
    solve_flow_step(
        &problem.pair.fine,
        &problem.fine,
        &mut run.flow,
        &sigma_change,
        dt,
        &problem.source,
        &problem.flow_bc,
        problem.solver_tol,
        problem.solver_max_iter,
    )?;
    let dp_fine: Vec<f64> =
        run.flow.p.iter().zip(&p_before).map(|(p, p0)| p - p0).collect();

    let (imbalance, scale) = global_mass_residual(
        &problem.pair.fine,
        &problem.fine,
        &run.flow.p_prev_time,
        &run.flow,
        &sigma_change,
        dt,
        &problem.source,
    );
    if scale > 0.0 {
        run.worst_mass_residual = run.worst_mass_residual.max(imbalance.abs() / scale);
    }

    // restrict, then mechanics with the restricted pressure frozen
    run.coupling.p_restricted = crate::transfer::restrict_pressure(
        &problem.pair,
        &problem.fine,
        &problem.coarse,
        &run.flow.p,
    )?;
    let dp_mech = run.coupling.mech_pressure_change();
    let eps_before = run.mech.eps_v.clone();
    solve_mech_step(
        &problem.pair.coarse,
        &problem.coarse,
        &dp_mech,
        &problem.loads,
        &problem.mech_bc,
        &mut run.mech,
        problem.solver_tol,
        problem.solver_max_iter,
    )?;
    let d_eps: Vec<f64> =
        run.mech.eps_v.iter().zip(&eps_before).map(|(e, e0)| e - e0).collect();

    // prolong and refresh sigma_bar on both grids
    let norm = update_sigma_bar(
        &problem.pair,
        &problem.fine,
        &problem.coarse,
        &run.flow,
        &run.mech,
        &mut run.coupling,
    )?;

    if !norm.is_finite() || !all_finite(&run.flow.p) || !all_finite(&run.mech.eps_v) {
        return Err(Error::NumericBreakdown {
            step: run.step + 1,
            iter: run.iter,
            what: format!(
                "non-finite state (norm {norm}, |p|_max {:?}, |eps|_max {:?})",
                run.flow.p.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                run.mech.eps_v.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            ),
        });
    }

    let report = verify_conditions(&problem.pair, &problem.fine, &problem.coarse, &dp_fine, &d_eps)?;
    let ratio = if run.iter >= 2 {
        let prev = *run.coupling.increment_history.last().unwrap_or(&0.0);
        if prev > 0.0 {
            let r = norm / prev;
            run.worst_ratio = run.worst_ratio.max(r);
            Some(r)
        } else {
            None
        }
    } else {
        None
    };
    run.coupling.increment_history.push(norm);
    run.records.push(ConvergenceRecord {
        step: run.step + 1,
        iter: run.iter,
        weighted_norm: norm,
        ratio,
        c1_gap: report.c1_gap,
        c2_gap: report.c2_gap,
    });
    Ok(norm)
}

/// Iterate the coupling sweep until the weighted norm falls below
/// tol_c times its first-iteration value, then accept the step.
/// Returns the number of iterations spent.
pub fn advance_time_step(
    run: &mut RunState,
    problem: &Problem,
    dt: f64,
    tol_c: f64,
    max_coupling_iters: usize,
) -> Result<usize> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Step(format!("time step must be positive, got {dt}")));
    }
    if !(tol_c > 0.0 && tol_c < 1.0) {
        return Err(Error::Step(format!("coupling tolerance must lie in (0,1), got {tol_c}")));
    }

    run.iter = 0;
    run.coupling.increment_history.clear();
    let mut norm_first = 0.0;
    let mut converged = None;
    for m in 1..=max_coupling_iters {
        let norm = run_coupling_iteration(run, problem, dt)?;
        if m == 1 {
            norm_first = norm;
        } else if norm <= tol_c * norm_first {
            converged = Some(m);
            break;
        }
    }
    let iters = converged.ok_or_else(|| Error::NonConvergence {
        max_iters: max_coupling_iters,
        history: run.coupling.increment_history.clone(),
    })?;

    run.flow.accept_time_level();
    run.sigma_bar_fine_time.copy_from_slice(&run.coupling.sigma_bar_fine);
    run.time += dt;
    run.step += 1;
    run.step_iterations.push(iters);
    Ok(iters)
}

/// Aggregate results of a batch run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub gamma: f64,
    pub worst_ratio: f64,
    pub steps_completed: usize,
    pub total_iterations: usize,
    pub worst_mass_residual: f64,
    pub step_iterations: Vec<usize>,
}

/// Run the configured simulation, writing convergence logs, field snapshots,
/// the coarse-property table and a summary into `out_dir`. A failing step
/// leaves the artifacts written so far in place and returns the error.
pub fn run_simulation(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let problem = build_problem(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    output::write_coarse_materials_csv(
        &out_dir.join("coarse_materials.csv"),
        &problem.pair,
        &problem.fine,
        &problem.coarse,
    )?;

    let mut run = RunState::new(&problem)?;
    output::write_fields_snapshot(out_dir, 0, &problem.pair, &run.flow, &run.mech)?;

    let n_steps = (config.t_end / config.dt + 1e-9).floor() as usize;
    let mut failure = None;
    for n in 1..=n_steps {
        match advance_time_step(&mut run, &problem, config.dt, config.tol_c, config.max_coupling_iters)
        {
            Ok(_) => {
                output::write_fields_snapshot(out_dir, n, &problem.pair, &run.flow, &run.mech)?;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    output::write_convergence_csv(&out_dir.join("convergence.csv"), &run.records)?;
    let summary = RunSummary {
        gamma: contraction_constant(&problem.fine),
        worst_ratio: run.worst_ratio,
        steps_completed: run.step,
        total_iterations: run.step_iterations.iter().sum(),
        worst_mass_residual: run.worst_mass_residual,
        step_iterations: run.step_iterations.clone(),
    };
    output::write_summary(&out_dir.join("summary.txt"), config, &problem, &summary)?;

    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
