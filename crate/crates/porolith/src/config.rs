//! Run configuration: a flat key = value text format, documented below,
//! parsed strictly (unknown keys are rejected, errors carry file:line).
//!
//! ```text
//! scenario = user | single_cell | uniaxial | eta_sweep
//! grid.nx = 8                  # fine cell counts, required for scenario user
//! grid.ny = 8
//! grid.nz = 8
//! grid.lx = 1.0                # box edge lengths (m)
//! grid.ly = 1.0
//! grid.lz = 1.0
//! grid.origin = 0 0 0
//! grid.ratio = 2 2 2           # coarsening ratio per axis
//! material.csv = cells.csv     # per-cell CSV, or the constants below
//! material.k_b = 1e9           # drained bulk modulus (Pa)
//! material.k_s = 1e10          # grain bulk modulus (Pa), `inf` for alpha = 1
//! material.g = 6e8             # shear modulus (Pa)
//! material.phi0 = 0.2          # porosity
//! material.c = 4.5e-10         # fluid compressibility (1/Pa)
//! material.mu = 1e-3           # viscosity (Pa s)
//! material.perm = 1e-13 1e-13 1e-13   # permeability diagonal (m^2)
//! material.rho0 = 1000         # fluid density (kg/m^3)
//! material.rho_r = 2700        # rock density (kg/m^3)
//! material.coarse_g = harmonic | arithmetic
//! eta.rule = fixed-stress | reuss | voigt | custom
//! eta.value = 1.5e9            # only with eta.rule = custom (Pa)
//! flow.bc.xmin = dirichlet 1e6 # or: noflux
//! flow.bc.xmax = noflux        # faces: xmin xmax ymin ymax zmin zmax
//! flow.q = 0.0                 # volumetric source rate density (1/s)
//! mech.bc.zmax = traction 0 0 -2e6   # or: normal-zero
//! mech.sigma0_v = 0.0          # in-situ mean stress (Pa)
//! mech.s0 = 0 0 0 0 0 0        # in-situ deviatoric stress, Voigt, traceless
//! gravity = 0 0 0
//! initial.p0 = 0.0             # initial/reference pressure (Pa)
//! time.dt = 100.0
//! time.t_end = 500.0
//! coupling.tol = 1e-8
//! coupling.max_iters = 200
//! solver.tol = 1e-10
//! solver.max_iters = 0         # 0 selects 10 x dimension
//! output.dir = out
//! ```
//!
//! A non-`user` scenario preloads the built-in problem of that name; any
//! explicit keys in the file override it.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::coupling::Problem;
use crate::error::{Error, Result};
use crate::flow::{FaceFlowBc, FlowBc};
use crate::grids::{build_box_grid, nest_with_tags, BoxFace};
use crate::materials::{
    derive_fine_coefficients, upscale_coarse_props_with, EtaRule, MaterialConstants, MeanRule,
    RawMaterialField,
};
use crate::mech::{FaceMechBc, MechBc, MechLoads};
use crate::scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    User,
    SingleCell,
    Uniaxial,
    EtaSweep,
}

impl Scenario {
    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "user" => Some(Scenario::User),
            "single_cell" => Some(Scenario::SingleCell),
            "uniaxial" => Some(Scenario::Uniaxial),
            "eta_sweep" => Some(Scenario::EtaSweep),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::User => "user",
            Scenario::SingleCell => "single_cell",
            Scenario::Uniaxial => "uniaxial",
            Scenario::EtaSweep => "eta_sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub enum MaterialSpec {
    Constants(MaterialConstants),
    Csv(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lengths: [f64; 3],
    pub origin: [f64; 3],
    pub ratio: [usize; 3],
    pub material: MaterialSpec,
    pub coarse_g_rule: MeanRule,
    pub eta_rule: EtaRule,
    pub flow_faces: [FaceFlowBc; 6],
    pub mech_faces: [FaceMechBc; 6],
    pub gravity: [f64; 3],
    pub source: f64,
    pub p0: f64,
    pub sigma0_v: f64,
    pub s0: [f64; 6],
    pub dt: f64,
    pub t_end: f64,
    pub tol_c: f64,
    pub max_coupling_iters: usize,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::User,
            nx: 0,
            ny: 0,
            nz: 0,
            lengths: [0.0; 3],
            origin: [0.0; 3],
            ratio: [1, 1, 1],
            material: MaterialSpec::Constants(MaterialConstants {
                k_b: 0.0,
                k_s: 0.0,
                g: 0.0,
                phi0: 0.0,
                c: 0.0,
                mu: 0.0,
                perm: [0.0; 3],
                rho0: 0.0,
                rho_r: 0.0,
            }),
            coarse_g_rule: MeanRule::Harmonic,
            eta_rule: EtaRule::FixedStress,
            flow_faces: [FaceFlowBc::NoFlux; 6],
            mech_faces: [FaceMechBc::NormalZero; 6],
            gravity: [0.0; 3],
            source: 0.0,
            p0: 0.0,
            sigma0_v: 0.0,
            s0: [0.0; 6],
            dt: 1.0,
            t_end: 0.0,
            tol_c: 1e-8,
            max_coupling_iters: 200,
            solver_tol: 1e-10,
            solver_max_iters: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn parse_err(path: &Path, line: usize, key: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn split_entries(path: &Path, text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return Err(parse_err(path, line, stripped, "expected `key = value`"));
        };
        let key = stripped[..eq].trim().to_string();
        let value = stripped[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(parse_err(path, line, &key, "empty key or value"));
        }
        entries.push(Entry { line, key, value });
    }
    Ok(entries)
}

fn parse_f64(path: &Path, e: &Entry, s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|_| parse_err(path, e.line, &e.key, format!("`{s}` is not a number"))),
    }
}

fn parse_usize(path: &Path, e: &Entry) -> Result<usize> {
    e.value
        .parse::<usize>()
        .map_err(|_| parse_err(path, e.line, &e.key, format!("`{}` is not a count", e.value)))
}

fn parse_vec3(path: &Path, e: &Entry) -> Result<[f64; 3]> {
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(parse_err(path, e.line, &e.key, "expected three numbers"));
    }
    Ok([
        parse_f64(path, e, parts[0])?,
        parse_f64(path, e, parts[1])?,
        parse_f64(path, e, parts[2])?,
    ])
}

fn parse_usize3(path: &Path, e: &Entry) -> Result<[usize; 3]> {
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(parse_err(path, e.line, &e.key, "expected three counts"));
    }
    let mut out = [0usize; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse()
            .map_err(|_| parse_err(path, e.line, &e.key, format!("`{part}` is not a count")))?;
    }
    Ok(out)
}

fn face_key_suffix(key: &str) -> Option<BoxFace> {
    BoxFace::ALL.into_iter().find(|f| key.ends_with(f.name()))
}

/// Parse and validate a config file. Non-`user` scenarios start from the
/// built-in problem definition; explicit keys override it.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(path, &text)
}

pub fn parse_config_str(path: &Path, text: &str) -> Result<RunConfig> {
    let entries = split_entries(path, text)?;

    // the scenario key decides the base config, so resolve it first
    let mut scenario = Scenario::User;
    for e in &entries {
        if e.key == "scenario" {
            scenario = Scenario::parse(&e.value).ok_or_else(|| {
                parse_err(path, e.line, &e.key, format!("unknown scenario `{}`", e.value))
            })?;
        }
    }
    let mut cfg = match scenario {
        Scenario::User => RunConfig::default(),
        s => scenario::builtin_config(s),
    };
    cfg.scenario = scenario;

    // constants are collected separately so partially-specified sets
    // can be reported by name
    let mut consts = match &cfg.material {
        MaterialSpec::Constants(m) => *m,
        MaterialSpec::Csv(_) => MaterialConstants {
            k_b: 0.0,
            k_s: 0.0,
            g: 0.0,
            phi0: 0.0,
            c: 0.0,
            mu: 0.0,
            perm: [0.0; 3],
            rho0: 0.0,
            rho_r: 0.0,
        },
    };
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut csv_path: Option<PathBuf> = None;
    let mut eta_rule_name: Option<(usize, String)> = None;
    let mut eta_value: Option<(usize, f64)> = None;
    if let MaterialSpec::Csv(p) = &cfg.material {
        csv_path = Some(p.clone());
    }
    match cfg.eta_rule {
        EtaRule::Custom(v) => {
            eta_rule_name = Some((0, "custom".to_string()));
            eta_value = Some((0, v));
        }
        EtaRule::Reuss => eta_rule_name = Some((0, "reuss".to_string())),
        EtaRule::Voigt => eta_rule_name = Some((0, "voigt".to_string())),
        _ => {}
    }

    for e in &entries {
        if !seen.insert(e.key.clone()) {
            return Err(parse_err(path, e.line, &e.key, "duplicate key"));
        }
        match e.key.as_str() {
            "scenario" => {}
            "grid.nx" => cfg.nx = parse_usize(path, e)?,
            "grid.ny" => cfg.ny = parse_usize(path, e)?,
            "grid.nz" => cfg.nz = parse_usize(path, e)?,
            "grid.lx" => cfg.lengths[0] = parse_f64(path, e, &e.value)?,
            "grid.ly" => cfg.lengths[1] = parse_f64(path, e, &e.value)?,
            "grid.lz" => cfg.lengths[2] = parse_f64(path, e, &e.value)?,
            "grid.origin" => cfg.origin = parse_vec3(path, e)?,
            "grid.ratio" => cfg.ratio = parse_usize3(path, e)?,
            "material.csv" => {
                let p = PathBuf::from(&e.value);
                if !p.exists() {
                    return Err(parse_err(
                        path,
                        e.line,
                        &e.key,
                        format!("file `{}` does not exist", e.value),
                    ));
                }
                csv_path = Some(p);
            }
            "material.k_b" => consts.k_b = parse_f64(path, e, &e.value)?,
            "material.k_s" => consts.k_s = parse_f64(path, e, &e.value)?,
            "material.g" => consts.g = parse_f64(path, e, &e.value)?,
            "material.phi0" => consts.phi0 = parse_f64(path, e, &e.value)?,
            "material.c" => consts.c = parse_f64(path, e, &e.value)?,
            "material.mu" => consts.mu = parse_f64(path, e, &e.value)?,
            "material.perm" => consts.perm = parse_vec3(path, e)?,
            "material.rho0" => consts.rho0 = parse_f64(path, e, &e.value)?,
            "material.rho_r" => consts.rho_r = parse_f64(path, e, &e.value)?,
            "material.coarse_g" => {
                cfg.coarse_g_rule = match e.value.as_str() {
                    "harmonic" => MeanRule::Harmonic,
                    "arithmetic" => MeanRule::Arithmetic,
                    other => {
                        return Err(parse_err(
                            path,
                            e.line,
                            &e.key,
                            format!("unknown mean rule `{other}`"),
                        ))
                    }
                }
            }
            "eta.rule" => eta_rule_name = Some((e.line, e.value.clone())),
            "eta.value" => eta_value = Some((e.line, parse_f64(path, e, &e.value)?)),
            "flow.q" => cfg.source = parse_f64(path, e, &e.value)?,
            "mech.sigma0_v" => cfg.sigma0_v = parse_f64(path, e, &e.value)?,
            "mech.s0" => {
                let parts: Vec<&str> = e.value.split_whitespace().collect();
                if parts.len() != 6 {
                    return Err(parse_err(
                        path,
                        e.line,
                        &e.key,
                        "expected six Voigt components xx yy zz xy yz xz",
                    ));
                }
                for (slot, part) in cfg.s0.iter_mut().zip(&parts) {
                    *slot = parse_f64(path, e, part)?;
                }
                let trace = cfg.s0[0] + cfg.s0[1] + cfg.s0[2];
                let scale = cfg.s0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if trace.abs() > 1e-14 * scale.max(1.0) {
                    return Err(parse_err(
                        path,
                        e.line,
                        &e.key,
                        format!("deviatoric stress must be traceless, trace = {trace}"),
                    ));
                }
            }
            "gravity" => cfg.gravity = parse_vec3(path, e)?,
            "initial.p0" => cfg.p0 = parse_f64(path, e, &e.value)?,
            "time.dt" => cfg.dt = parse_f64(path, e, &e.value)?,
            "time.t_end" => cfg.t_end = parse_f64(path, e, &e.value)?,
            "coupling.tol" => cfg.tol_c = parse_f64(path, e, &e.value)?,
            "coupling.max_iters" => cfg.max_coupling_iters = parse_usize(path, e)?,
            "solver.tol" => cfg.solver_tol = parse_f64(path, e, &e.value)?,
            "solver.max_iters" => cfg.solver_max_iters = parse_usize(path, e)?,
            "output.dir" => cfg.output_dir = PathBuf::from(&e.value),
            key if key.starts_with("flow.bc.") => {
                let face = face_key_suffix(key).ok_or_else(|| {
                    parse_err(path, e.line, key, "unknown face, expected xmin..zmax")
                })?;
                let parts: Vec<&str> = e.value.split_whitespace().collect();
                cfg.flow_faces[face.index()] = match parts.as_slice() {
                    ["noflux"] => FaceFlowBc::NoFlux,
                    ["dirichlet", val] => FaceFlowBc::Dirichlet(parse_f64(path, e, val)?),
                    _ => {
                        return Err(parse_err(
                            path,
                            e.line,
                            key,
                            "expected `noflux` or `dirichlet <pressure>`",
                        ))
                    }
                };
            }
            key if key.starts_with("mech.bc.") => {
                let face = face_key_suffix(key).ok_or_else(|| {
                    parse_err(path, e.line, key, "unknown face, expected xmin..zmax")
                })?;
                let parts: Vec<&str> = e.value.split_whitespace().collect();
                cfg.mech_faces[face.index()] = match parts.as_slice() {
                    ["normal-zero"] => FaceMechBc::NormalZero,
                    ["traction", tx, ty, tz] => FaceMechBc::Traction([
                        parse_f64(path, e, tx)?,
                        parse_f64(path, e, ty)?,
                        parse_f64(path, e, tz)?,
                    ]),
                    _ => {
                        return Err(parse_err(
                            path,
                            e.line,
                            key,
                            "expected `normal-zero` or `traction <tx> <ty> <tz>`",
                        ))
                    }
                };
            }
            other => return Err(parse_err(path, e.line, other, "unknown key")),
        }
    }

    // resolve the eta rule
    cfg.eta_rule = match eta_rule_name.as_ref().map(|(l, s)| (*l, s.as_str())) {
        None | Some((_, "fixed-stress")) => EtaRule::FixedStress,
        Some((_, "reuss")) => EtaRule::Reuss,
        Some((_, "voigt")) => EtaRule::Voigt,
        Some((line, "custom")) => {
            let (_, v) = eta_value.ok_or_else(|| {
                parse_err(path, line, "eta.rule", "custom rule requires eta.value")
            })?;
            EtaRule::Custom(v)
        }
        Some((line, other)) => {
            return Err(parse_err(path, line, "eta.rule", format!("unknown rule `{other}`")))
        }
    };

    // material source: per-cell CSV wins over constants
    cfg.material = match csv_path {
        Some(p) => MaterialSpec::Csv(p),
        None => {
            if scenario == Scenario::User {
                let required = [
                    "material.k_b",
                    "material.k_s",
                    "material.g",
                    "material.phi0",
                    "material.c",
                    "material.mu",
                    "material.perm",
                    "material.rho0",
                    "material.rho_r",
                ];
                let missing: Vec<&str> =
                    required.iter().filter(|k| !seen.contains(**k)).copied().collect();
                if !missing.is_empty() {
                    return Err(parse_err(
                        path,
                        0,
                        "material.*",
                        format!(
                            "no material.csv given and constants incomplete; missing: {}",
                            missing.join(", ")
                        ),
                    ));
                }
            }
            MaterialSpec::Constants(consts)
        }
    };

    validate_config(path, &cfg, eta_value)?;
    Ok(cfg)
}

fn validate_config(
    path: &Path,
    cfg: &RunConfig,
    eta_value: Option<(usize, f64)>,
) -> Result<()> {
    let err = |key: &str, msg: String| Err(parse_err(path, 0, key, msg));
    if cfg.nx == 0 || cfg.ny == 0 || cfg.nz == 0 {
        return err("grid.nx", "grid cell counts are required and must be >= 1".into());
    }
    if cfg.lengths.iter().any(|&l| l <= 0.0 || l.is_nan()) {
        return err("grid.lx", "grid edge lengths are required and must be > 0".into());
    }
    if cfg.ratio.contains(&0) {
        return err("grid.ratio", "ratio components must be >= 1".into());
    }
    let counts = [cfg.nx, cfg.ny, cfg.nz];
    for (axis, (&count, &r)) in counts.iter().zip(&cfg.ratio).enumerate() {
        if !count.is_multiple_of(r) {
            return err(
                "grid.ratio",
                format!("fine count {count} along axis {axis} is not divisible by ratio {r}"),
            );
        }
    }
    if !(cfg.tol_c > 0.0 && cfg.tol_c < 1.0) {
        return err("coupling.tol", format!("must lie in (0,1), got {}", cfg.tol_c));
    }
    if !(cfg.solver_tol > 0.0 && cfg.solver_tol < 1.0) {
        return err("solver.tol", format!("must lie in (0,1), got {}", cfg.solver_tol));
    }
    if cfg.dt <= 0.0 || cfg.dt.is_nan() {
        return err("time.dt", format!("must be > 0, got {}", cfg.dt));
    }
    if cfg.t_end < 0.0 {
        return err("time.t_end", format!("must be >= 0, got {}", cfg.t_end));
    }
    if cfg.max_coupling_iters == 0 {
        return err("coupling.max_iters", "must be >= 1".into());
    }
    if let (EtaRule::Custom(v), MaterialSpec::Constants(m)) = (&cfg.eta_rule, &cfg.material) {
        if *v <= 0.0 || v.is_nan() {
            let line = eta_value.map(|(l, _)| l).unwrap_or(0);
            return Err(parse_err(path, line, "eta.value", format!("must be > 0, got {v}")));
        }
        // the decoupling bound eta <= 2 K_b must hold on the coarse cells;
        // with uniform constants that is exactly eta <= 2 k_b
        if *v > 2.0 * m.k_b {
            let line = eta_value.map(|(l, _)| l).unwrap_or(0);
            return Err(parse_err(
                path,
                line,
                "eta.value",
                format!(
                    "custom eta = {v:e} violates the decoupling bound eta <= 2 K_b = {:e}",
                    2.0 * m.k_b
                ),
            ));
        }
    }
    Ok(())
}

fn fmt(x: f64) -> String {
    crate::output::fmt_float(x)
}

/// Serialize a config so that `parse(write(config))` reproduces it.
pub fn write_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut push = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    push("scenario", cfg.scenario.name().to_string());
    push("grid.nx", cfg.nx.to_string());
    push("grid.ny", cfg.ny.to_string());
    push("grid.nz", cfg.nz.to_string());
    push("grid.lx", fmt(cfg.lengths[0]));
    push("grid.ly", fmt(cfg.lengths[1]));
    push("grid.lz", fmt(cfg.lengths[2]));
    push("grid.origin", format!("{} {} {}", fmt(cfg.origin[0]), fmt(cfg.origin[1]), fmt(cfg.origin[2])));
    push("grid.ratio", format!("{} {} {}", cfg.ratio[0], cfg.ratio[1], cfg.ratio[2]));
    match &cfg.material {
        MaterialSpec::Csv(p) => push("material.csv", p.display().to_string()),
        MaterialSpec::Constants(m) => {
            push("material.k_b", fmt(m.k_b));
            push("material.k_s", if m.k_s.is_infinite() { "inf".into() } else { fmt(m.k_s) });
            push("material.g", fmt(m.g));
            push("material.phi0", fmt(m.phi0));
            push("material.c", fmt(m.c));
            push("material.mu", fmt(m.mu));
            push(
                "material.perm",
                format!("{} {} {}", fmt(m.perm[0]), fmt(m.perm[1]), fmt(m.perm[2])),
            );
            push("material.rho0", fmt(m.rho0));
            push("material.rho_r", fmt(m.rho_r));
        }
    }
    push(
        "material.coarse_g",
        match cfg.coarse_g_rule {
            MeanRule::Harmonic => "harmonic".to_string(),
            MeanRule::Arithmetic => "arithmetic".to_string(),
        },
    );
    match cfg.eta_rule {
        EtaRule::FixedStress => push("eta.rule", "fixed-stress".to_string()),
        EtaRule::Reuss => push("eta.rule", "reuss".to_string()),
        EtaRule::Voigt => push("eta.rule", "voigt".to_string()),
        EtaRule::Custom(v) => {
            push("eta.rule", "custom".to_string());
            push("eta.value", fmt(v));
        }
        EtaRule::ScaledBulk(_) => {
            // sweep-internal rule, not part of the config surface
            push("eta.rule", "fixed-stress".to_string());
        }
    }
    for face in BoxFace::ALL {
        let v = match cfg.flow_faces[face.index()] {
            FaceFlowBc::NoFlux => "noflux".to_string(),
            FaceFlowBc::Dirichlet(g) => format!("dirichlet {}", fmt(g)),
        };
        push(&format!("flow.bc.{}", face.name()), v);
    }
    push("flow.q", fmt(cfg.source));
    for face in BoxFace::ALL {
        let v = match cfg.mech_faces[face.index()] {
            FaceMechBc::NormalZero => "normal-zero".to_string(),
            FaceMechBc::Traction(t) => {
                format!("traction {} {} {}", fmt(t[0]), fmt(t[1]), fmt(t[2]))
            }
        };
        push(&format!("mech.bc.{}", face.name()), v);
    }
    push("mech.sigma0_v", fmt(cfg.sigma0_v));
    push(
        "mech.s0",
        cfg.s0.iter().map(|&v| fmt(v)).collect::<Vec<_>>().join(" "),
    );
    push(
        "gravity",
        format!("{} {} {}", fmt(cfg.gravity[0]), fmt(cfg.gravity[1]), fmt(cfg.gravity[2])),
    );
    push("initial.p0", fmt(cfg.p0));
    push("time.dt", fmt(cfg.dt));
    push("time.t_end", fmt(cfg.t_end));
    push("coupling.tol", fmt(cfg.tol_c));
    push("coupling.max_iters", cfg.max_coupling_iters.to_string());
    push("solver.tol", fmt(cfg.solver_tol));
    push("solver.max_iters", cfg.solver_max_iters.to_string());
    push("output.dir", cfg.output_dir.display().to_string());
    s
}

const CSV_COLUMNS: [&str; 12] =
    ["cell", "k_b", "k_s", "g", "phi0", "c", "mu", "kx", "ky", "kz", "rho0", "rho_r"];

/// Read a per-cell material CSV (columns as in [`CSV_COLUMNS`]); every fine
/// cell index must appear exactly once.
pub fn parse_material_csv(
    path: &Path,
    n_cells: usize,
    eta_rule: EtaRule,
) -> Result<RawMaterialField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((line, l)) => break (line + 1, l),
            None => return Err(parse_err(path, 0, "header", "empty material CSV")),
        }
    };
    let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if cols != CSV_COLUMNS {
        return Err(parse_err(
            path,
            header.0,
            "header",
            format!("expected columns `{}`", CSV_COLUMNS.join(",")),
        ));
    }

    let mut fields = vec![vec![f64::NAN; n_cells]; 11];
    let mut seen = vec![false; n_cells];
    let mut rows = 0usize;
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
        if parts.len() != CSV_COLUMNS.len() {
            return Err(parse_err(
                path,
                line,
                "row",
                format!("expected {} comma-separated values", CSV_COLUMNS.len()),
            ));
        }
        let cell: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(path, line, "cell", format!("`{}` is not a cell index", parts[0])))?;
        if cell >= n_cells {
            return Err(parse_err(
                path,
                line,
                "cell",
                format!("cell index {cell} out of range, grid has {n_cells} cells"),
            ));
        }
        if seen[cell] {
            return Err(parse_err(path, line, "cell", format!("duplicate cell index {cell}")));
        }
        seen[cell] = true;
        rows += 1;
        for (f, part) in fields.iter_mut().zip(&parts[1..]) {
            f[cell] = match *part {
                "inf" => f64::INFINITY,
                s => s.parse::<f64>().map_err(|_| {
                    parse_err(path, line, "row", format!("`{s}` is not a number"))
                })?,
            };
        }
    }
    if rows != n_cells {
        return Err(parse_err(
            path,
            0,
            "rows",
            format!("material CSV has {rows} rows but the fine grid has {n_cells} cells"),
        ));
    }

    let [k_b, k_s, g, phi0, c, mu, kx, ky, kz, rho0, rho_r]: [Vec<f64>; 11] =
        fields.try_into().expect("eleven data columns");
    let eta = eta_rule.apply(&k_b);
    Ok(RawMaterialField { k_b, k_s, g, phi0, c, mu, kx, ky, kz, rho0, rho_r, eta })
}

/// Write the per-cell material CSV for a fine field (inverse of
/// [`parse_material_csv`], modulo the derived columns).
pub fn material_csv_string(raw: &RawMaterialField) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for cell in 0..raw.k_b.len() {
        let vals = [
            raw.k_b[cell],
            raw.k_s[cell],
            raw.g[cell],
            raw.phi0[cell],
            raw.c[cell],
            raw.mu[cell],
            raw.kx[cell],
            raw.ky[cell],
            raw.kz[cell],
            raw.rho0[cell],
            raw.rho_r[cell],
        ];
        s.push_str(&cell.to_string());
        for v in vals {
            s.push(',');
            if v.is_infinite() {
                s.push_str("inf");
            } else {
                s.push_str(&fmt(v));
            }
        }
        s.push('\n');
    }
    s
}

/// Build the full problem (grids, coefficients, loads) from a config.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    let flow_bc = FlowBc { faces: cfg.flow_faces, gravity: cfg.gravity };
    let mech_bc = MechBc { faces: cfg.mech_faces };

    let mut fine_grid =
        build_box_grid(cfg.nx, cfg.ny, cfg.nz, cfg.lengths, flow_bc.tags())?;
    fine_grid.origin = cfg.origin;
    let pair = nest_with_tags(fine_grid, cfg.ratio, mech_bc.tags())?;
    let n_fine = pair.fine.n_cells();
    let n_coarse = pair.coarse.n_cells();

    let raw = match &cfg.material {
        MaterialSpec::Constants(m) => RawMaterialField::uniform(n_fine, m, cfg.eta_rule),
        MaterialSpec::Csv(path) => parse_material_csv(path, n_fine, cfg.eta_rule)?,
    };
    let fine = derive_fine_coefficients(raw)?;
    let coarse = upscale_coarse_props_with(&pair, &fine, cfg.eta_rule, cfg.coarse_g_rule)?;

    // coarse body force: volume average of the frozen-reference fine density
    let w = pair.child_volume_fraction();
    let mut body = vec![[0.0; 3]; n_coarse];
    for (cc, kids) in pair.children.iter().enumerate() {
        for &cf in kids {
            let f = fine.body_force_density(cf, cfg.gravity);
            for (axis, val) in f.iter().enumerate() {
                body[cc][axis] += w * val;
            }
        }
    }

    let loads = MechLoads {
        body,
        s0: vec![cfg.s0; n_coarse],
        sigma0_v: vec![cfg.sigma0_v; n_coarse],
    };

    Ok(Problem {
        pair,
        fine,
        coarse,
        flow_bc,
        mech_bc,
        source: vec![cfg.source; n_fine],
        loads,
        p_init: vec![cfg.p0; n_fine],
        solver_tol: cfg.solver_tol,
        solver_max_iter: cfg.solver_max_iters,
    })
}
